//! The gauge category of a fixed pair `(A, H)`: objects are Dirac operators,
//! and a morphism `D → D′` is the one-form `ω = D′ − D` when it lies in `Ω¹_D(A)`.

use serde::{Deserialize, Serialize};

use crate::algebra::{full_matrix_algebra, MatrixAlgebra};
use crate::error::{Error, Result};
use crate::matrix::{self, hs_norm, is_hermitian, subspace_span, ComplexMatrix, HERMITIAN_TOL, SPAN_REL_TOL};
use crate::triple::{omega1, OneFormSpace, SpectralTriple};

/// Absolute tolerance for matching endpoints in [`GaugeCategory::compose`].
pub const ENDPOINT_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaugeMorphism {
    #[serde(with = "crate::matrix::serde_matrix")]
    pub source: ComplexMatrix,
    #[serde(with = "crate::matrix::serde_matrix")]
    pub target: ComplexMatrix,
    #[serde(with = "crate::matrix::serde_matrix")]
    pub omega: ComplexMatrix,
}

/// The category for a fixed algebra on a fixed Hilbert space. With a grading
/// and `graded = true`, objects are restricted to γ-odd Dirac operators.
#[derive(Clone, Debug)]
pub struct GaugeCategory {
    pub algebra: MatrixAlgebra,
    pub grading: Option<ComplexMatrix>,
    pub graded: bool,
}

impl GaugeCategory {
    pub fn new(algebra: MatrixAlgebra) -> Self {
        GaugeCategory { algebra, grading: None, graded: false }
    }

    pub fn graded(algebra: MatrixAlgebra, grading: ComplexMatrix) -> Self {
        GaugeCategory { algebra, grading: Some(grading), graded: true }
    }

    fn n(&self) -> usize {
        self.algebra.hilbert_dim
    }

    fn object(&self, d: &ComplexMatrix) -> Result<SpectralTriple> {
        if d.shape() != (self.n(), self.n()) {
            return Err(Error::Dimension(format!("object must be {0}x{0}", self.n())));
        }
        if !is_hermitian(d, HERMITIAN_TOL) {
            return Err(Error::Argument("Dirac operator is not Hermitian".into()));
        }
        if self.graded {
            let g = self.grading.as_ref().expect("graded category has a grading");
            if hs_norm(&matrix::anticommutator(g, d)) > ENDPOINT_TOL * hs_norm(d).max(1.0) {
                return Err(Error::Argument("object does not anticommute with the grading".into()));
            }
        }
        SpectralTriple::new(self.algebra.clone(), d.clone(), None)
    }

    pub fn omega1(&self, d: &ComplexMatrix) -> Result<OneFormSpace> {
        omega1(&self.object(d)?)
    }

    /// The unique morphism `D → D′`, if any.
    pub fn mor(&self, d: &ComplexMatrix, dp: &ComplexMatrix) -> Result<Option<GaugeMorphism>> {
        let om = self.omega1(d)?;
        self.object(dp)?;
        let omega = dp - d;
        if om.contains(&omega).0 {
            Ok(Some(GaugeMorphism { source: d.clone(), target: dp.clone(), omega }))
        } else {
            Ok(None)
        }
    }

    pub fn identity(&self, d: &ComplexMatrix) -> Result<GaugeMorphism> {
        self.object(d)?;
        Ok(GaugeMorphism { source: d.clone(), target: d.clone(), omega: matrix::zeros(self.n(), self.n()) })
    }

    /// `g ∘ f` with `ω = ω_f + ω_g`, membership in `Ω¹` at the source re-verified.
    pub fn compose(&self, f: &GaugeMorphism, g: &GaugeMorphism) -> Result<GaugeMorphism> {
        let gap = hs_norm(&(&f.target - &g.source));
        if gap > ENDPOINT_TOL {
            return Err(Error::Composition(format!("endpoints differ by {gap:.3e}")));
        }
        let omega = &f.omega + &g.omega;
        let (inside, r) = self.omega1(&f.source)?.contains(&omega);
        if !inside {
            return Err(Error::Composition(format!("composite one-form leaves Ω¹ (residual {r:.3e})")));
        }
        Ok(GaugeMorphism { source: f.source.clone(), target: g.target.clone(), omega })
    }

    /// A morphism is invertible iff `Ω¹` agrees at both ends.
    pub fn is_isomorphism(&self, f: &GaugeMorphism) -> Result<bool> {
        let a = self.omega1(&f.source)?;
        let b = self.omega1(&f.target)?;
        Ok(a.equals(&b).0)
    }

    /// Basis of the perturbations every initial object must absorb: all
    /// Hermitian matrices, or the γ-odd ones in the graded flavor.
    pub fn admissible_perturbations(&self) -> Result<Vec<ComplexMatrix>> {
        let herm = full_matrix_algebra(self.n())?.hermitian_basis();
        match (&self.grading, self.graded) {
            (Some(g), true) => {
                let odd: Vec<ComplexMatrix> = herm.iter().map(|h| (h - g * h * g).scale(0.5)).collect();
                Ok(matrix::hermitian_span(&odd, SPAN_REL_TOL))
            }
            _ => Ok(herm),
        }
    }

    /// `D` is initial iff `Ω¹_D(A)` contains every admissible perturbation.
    pub fn is_initial(&self, d: &ComplexMatrix) -> Result<bool> {
        let om = self.omega1(d)?;
        let perts = self.admissible_perturbations()?;
        let needed = subspace_span(&perts, SPAN_REL_TOL)?.rank();
        if om.rank() < needed {
            return Ok(false);
        }
        Ok(perts.iter().all(|p| om.contains(p).0))
    }

    /// The pair `(1, 0)`: `Mor(1, 0)` is empty since `Ω¹_1 = 0`, and `Mor(0, D)`
    /// is empty for every `D ≠ 0` since `Ω¹_0 = 0`. Both facts are re-checked.
    pub fn no_final_object_witness(&self) -> Result<(ComplexMatrix, ComplexMatrix)> {
        let n = self.n();
        if n == 0 {
            return Err(Error::Dimension("Hilbert dimension must be at least 1".into()));
        }
        let (one, zero) = (matrix::identity(n), matrix::zeros(n, n));
        if self.graded {
            return Err(Error::Argument(
                "the identity is not γ-odd; use the ungraded category for this witness".into(),
            ));
        }
        if self.mor(&one, &zero)?.is_some() {
            return Err(Error::Domain("Mor(1, 0) unexpectedly nonempty".into()));
        }
        if self.omega1(&zero)?.rank() != 0 || self.mor(&zero, &one)?.is_some() {
            return Err(Error::Domain("Mor(0, D) unexpectedly nonempty".into()));
        }
        Ok((one, zero))
    }
}

pub fn mor(a: &MatrixAlgebra, d: &ComplexMatrix, dp: &ComplexMatrix) -> Result<Option<GaugeMorphism>> {
    GaugeCategory::new(a.clone()).mor(d, dp)
}

pub fn is_initial(a: &MatrixAlgebra, d: &ComplexMatrix, grading: Option<&ComplexMatrix>) -> Result<bool> {
    match grading {
        Some(g) => GaugeCategory::graded(a.clone(), g.clone()).is_initial(d),
        None => GaugeCategory::new(a.clone()).is_initial(d),
    }
}

pub fn no_final_object_witness(a: &MatrixAlgebra, hilbert_dim: usize) -> Result<(ComplexMatrix, ComplexMatrix)> {
    if a.hilbert_dim != hilbert_dim {
        return Err(Error::Dimension("algebra acts on a different space".into()));
    }
    GaugeCategory::new(a.clone()).no_final_object_witness()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::diagonal_algebra;
    use crate::matrix::{c, from_real, random};

    fn m2() -> GaugeCategory {
        GaugeCategory::new(full_matrix_algebra(2).unwrap())
    }

    fn sx() -> ComplexMatrix {
        from_real(2, 2, &[0.0, 1.0, 1.0, 0.0])
    }

    #[test]
    fn example_morphisms() {
        let g = m2();
        let zero = matrix::zeros(2, 2);
        let f = g.mor(&sx(), &zero).unwrap().unwrap();
        assert_eq!(f.omega, -sx());
        assert!(g.mor(&zero, &sx()).unwrap().is_none());
        let id = g.mor(&sx(), &sx()).unwrap().unwrap();
        assert_eq!(id.omega, zero);
        assert!(!g.is_isomorphism(&f).unwrap());
        assert!(g.is_isomorphism(&id).unwrap());
        let dp = from_real(2, 2, &[1.0, 1.0, 1.0, -1.0]);
        let h = g.mor(&sx(), &dp).unwrap().unwrap();
        assert!(g.is_isomorphism(&h).unwrap());
    }

    #[test]
    fn rejects_non_hermitian() {
        let g = m2();
        let bad = from_real(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(g.mor(&bad, &sx()), Err(Error::Argument(_))));
    }

    #[test]
    fn composition() {
        let g = m2();
        let mut rng = random::rng(4);
        let d = random::hermitian(2, &mut rng);
        let d1 = random::hermitian(2, &mut rng);
        let f = g.mor(&d, &d1).unwrap().unwrap();
        let idt = g.identity(&d1).unwrap();
        assert_eq!(g.compose(&f, &idt).unwrap(), f);
        let back = g.mor(&d1, &d).unwrap().unwrap();
        let loop_ = g.compose(&f, &back).unwrap();
        assert!(hs_norm(&loop_.omega) < 1e-14);
        let other = g.identity(&d).unwrap();
        assert!(matches!(g.compose(&idt, &other), Err(Error::Composition(_))));
    }

    #[test]
    fn initial_objects() {
        let g = m2();
        assert!(g.is_initial(&sx()).unwrap());
        assert!(!g.is_initial(&(matrix::identity(2) * c(2.0, 0.0))).unwrap());
        let scalars = GaugeCategory::new(full_matrix_algebra(1).unwrap());
        assert!(!scalars.is_initial(&matrix::identity(1)).unwrap());
        let diag = GaugeCategory::new(diagonal_algebra(2).unwrap());
        assert!(!diag.is_initial(&sx()).unwrap());
    }

    #[test]
    fn final_object_witness() {
        let (one, zero) = m2().no_final_object_witness().unwrap();
        assert_eq!((one, zero), (matrix::identity(2), matrix::zeros(2, 2)));
        let (one, _) = no_final_object_witness(&full_matrix_algebra(1).unwrap(), 1).unwrap();
        assert_eq!(one, matrix::identity(1));
        let m3 = full_matrix_algebra(3).unwrap();
        no_final_object_witness(&m3, 3).unwrap();
        assert!(mor(&m3, &matrix::identity(3), &matrix::zeros(3, 3)).unwrap().is_none());
    }
}
