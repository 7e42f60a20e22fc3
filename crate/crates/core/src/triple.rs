//! Spectral triples, the differential `d_D`, one-forms, and Wigner doubling.

use serde::{Deserialize, Serialize};

use crate::algebra::{AlgebraJson, MatrixAlgebra};
use crate::error::{Error, Result};
use crate::matrix::{
    self, commutator, hermiticity_defect, hs_norm, kron, subspace_span, ComplexMatrix, MatrixJson,
    OperatorSubspace, SparseMatrix, SPAN_REL_TOL,
};
use crate::report::ValidationReport;

/// Relative tolerance for the triple axioms.
pub const AXIOM_TOL: f64 = 1e-10;

/// Finite spectral triple `(A, C^n, D)` with optional grading.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralTriple {
    pub algebra: MatrixAlgebra,
    pub dirac: ComplexMatrix,
    pub grading: Option<ComplexMatrix>,
}

impl SpectralTriple {
    /// Structural constructor: checks dimensions and rejects a degenerate
    /// grading `γ = ±1` together with a nonzero Dirac operator. The remaining
    /// axioms are reported by [`check_axioms`].
    pub fn new(algebra: MatrixAlgebra, dirac: ComplexMatrix, grading: Option<ComplexMatrix>) -> Result<Self> {
        let n = algebra.hilbert_dim;
        if dirac.shape() != (n, n) {
            return Err(Error::Dimension(format!(
                "Dirac operator is {}x{}, algebra acts on C^{n}",
                dirac.nrows(),
                dirac.ncols()
            )));
        }
        if let Some(g) = &grading {
            if g.shape() != (n, n) {
                return Err(Error::Dimension("grading dimension mismatch".into()));
            }
            let id = matrix::identity(n);
            let scalar = hs_norm(&(g - &id)).min(hs_norm(&(g + &id)));
            if scalar <= AXIOM_TOL * (n as f64).sqrt() && matrix::max_abs(&dirac) > 0.0 {
                return Err(Error::Argument("grading is ±identity but D is nonzero".into()));
            }
        }
        Ok(SpectralTriple { algebra, dirac, grading })
    }

    /// Like [`SpectralTriple::new`] but also requires every axiom to pass.
    pub fn validated(algebra: MatrixAlgebra, dirac: ComplexMatrix, grading: Option<ComplexMatrix>) -> Result<Self> {
        let t = Self::new(algebra, dirac, grading)?;
        let rep = check_axioms(&t);
        if !rep.all_pass() {
            let names: Vec<String> = rep.failures().iter().map(|c| c.check.clone()).collect();
            return Err(Error::Argument(format!("spectral triple axioms fail: {}", names.join(", "))));
        }
        Ok(t)
    }

    pub fn dim(&self) -> usize {
        self.algebra.hilbert_dim
    }

    pub fn is_even(&self) -> bool {
        self.grading.is_some()
    }

    pub fn with_dirac(&self, dirac: ComplexMatrix) -> Result<Self> {
        SpectralTriple::new(self.algebra.clone(), dirac, self.grading.clone())
    }

    pub fn to_json(&self) -> TripleJson {
        TripleJson {
            algebra: self.algebra.to_json(),
            dirac: MatrixJson::from_matrix(&self.dirac),
            grading: self.grading.as_ref().map(MatrixJson::from_matrix),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TripleJson {
    pub algebra: AlgebraJson,
    pub dirac: MatrixJson,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grading: Option<MatrixJson>,
}

impl TripleJson {
    pub fn to_triple(&self) -> Result<SpectralTriple> {
        SpectralTriple::new(
            self.algebra.to_algebra()?,
            self.dirac.to_matrix()?,
            self.grading.as_ref().map(|g| g.to_matrix()).transpose()?,
        )
    }
}

/// `[d, b]` for a sparse algebra element and dense `d`.
pub(crate) fn sparse_commutator(d: &ComplexMatrix, b: &SparseMatrix) -> ComplexMatrix {
    b.dense_mul(d) - b.mul_dense(d)
}

/// Axiom report: Hermitian D, bounded commutators (informational in finite
/// dimension), algebra validity, and the grading relations when present.
pub fn check_axioms(t: &SpectralTriple) -> ValidationReport {
    let mut rep = ValidationReport::new();
    let n = t.dim();
    let d = &t.dirac;
    let scale = hs_norm(d).max(1.0);
    rep.push("dirac_square", d.shape() == (n, n), 0.0);
    rep.push_tol("dirac_hermitian", hermiticity_defect(d) / scale, AXIOM_TOL);
    let mut max_comm = 0.0f64;
    for i in 0..t.algebra.dim() {
        let b = t.algebra.basis_sparse(i);
        max_comm = max_comm.max(hs_norm(&sparse_commutator(d, &b)));
    }
    rep.push("commutators_bounded", max_comm.is_finite(), max_comm);
    if t.algebra.dim() * t.algebra.hilbert_dim <= 4096 {
        rep.extend("algebra.", t.algebra.validate());
    }
    if let Some(g) = &t.grading {
        let id = matrix::identity(n);
        rep.push_tol("grading_hermitian", hermiticity_defect(g), AXIOM_TOL * (n as f64).sqrt());
        rep.push_tol("grading_involution", hs_norm(&(g * g - &id)), AXIOM_TOL * (n as f64).sqrt());
        let mut worst = 0.0f64;
        for i in 0..t.algebra.dim() {
            let b = t.algebra.basis_sparse(i);
            worst = worst.max(hs_norm(&sparse_commutator(g, &b)));
        }
        rep.push_tol("grading_commutes_with_algebra", worst, AXIOM_TOL);
        rep.push_tol("grading_anticommutes_with_dirac", hs_norm(&matrix::anticommutator(g, d)) / scale, AXIOM_TOL);
    }
    rep
}

/// `d_D a = [D, a]` for `a` in the algebra.
pub fn differential(t: &SpectralTriple, a: &ComplexMatrix) -> Result<ComplexMatrix> {
    let (inside, r) = t.algebra.contains(a);
    if !inside {
        return Err(Error::Domain(format!("element is not in the algebra (residual {r:.3e})")));
    }
    Ok(commutator(&t.dirac, a))
}

/// `Ω¹_D(A)` as an operator subspace, with a copy of the generating triple.
#[derive(Clone, Debug)]
pub struct OneFormSpace {
    pub space: OperatorSubspace,
    pub source: SpectralTriple,
}

impl OneFormSpace {
    pub fn rank(&self) -> usize {
        self.space.rank()
    }

    pub fn contains(&self, m: &ComplexMatrix) -> (bool, f64) {
        self.space.contains(m)
    }

    /// Worst membership residual of the generators `b_i [D, b_j]`; every
    /// generator must lie in the stored span.
    pub fn generator_residual(&self) -> f64 {
        one_form_generators(&self.source).iter().map(|g| self.space.residual(g)).fold(0.0, f64::max)
    }

    /// Mutual containment with another one-form space.
    pub fn equals(&self, other: &OneFormSpace) -> (bool, f64) {
        if self.rank() != other.rank() {
            return (false, f64::INFINITY);
        }
        let (a, ra) = self.space.contains_subspace(&other.space);
        let (b, rb) = other.space.contains_subspace(&self.space);
        (a && b, ra.max(rb))
    }
}

/// The generators `b_i [D, b_j]` over the algebra basis.
pub fn one_form_generators(t: &SpectralTriple) -> Vec<ComplexMatrix> {
    let basis = t.algebra.basis();
    let diffs: Vec<ComplexMatrix> = basis.iter().map(|b| commutator(&t.dirac, b)).collect();
    let mut out = Vec::with_capacity(basis.len() * basis.len());
    for b in &basis {
        for d in &diffs {
            out.push(b * d);
        }
    }
    out
}

pub fn omega1(t: &SpectralTriple) -> Result<OneFormSpace> {
    let n = t.dim();
    let gens = one_form_generators(t);
    let mut space = subspace_span(&gens, SPAN_REL_TOL)?;
    if space.rank() == 0 {
        space = OperatorSubspace::zero(n, n);
    }
    Ok(OneFormSpace { space, source: t.clone() })
}

/// Checks that `U` implements a unitary equivalence `T → T′`.
pub fn unitary_equivalent(t: &SpectralTriple, tp: &SpectralTriple, u: &ComplexMatrix) -> ValidationReport {
    let mut rep = ValidationReport::new();
    let (n, np) = (t.dim(), tp.dim());
    if u.shape() != (np, n) {
        rep.push("dimensions", false, f64::INFINITY);
        return rep;
    }
    let scale = hs_norm(&t.dirac).max(1.0);
    rep.push_tol("unitary_left", hs_norm(&(u.adjoint() * u - matrix::identity(n))), AXIOM_TOL * 10.0);
    rep.push_tol("unitary_right", hs_norm(&(u * u.adjoint() - matrix::identity(np))), AXIOM_TOL * 10.0);
    rep.push_tol("intertwines_dirac", hs_norm(&(u * &t.dirac - &tp.dirac * u)) / scale, AXIOM_TOL * 10.0);
    let mut worst = 0.0f64;
    for b in t.algebra.basis() {
        let image = u * &b * u.adjoint();
        worst = worst.max(tp.algebra.contains(&image).1 / hs_norm(&b).max(1.0));
    }
    rep.push_tol("maps_algebra_into", worst, AXIOM_TOL * 10.0);
    let same_dim = t.algebra.span().rank() == tp.algebra.span().rank();
    rep.push("maps_algebra_onto", same_dim, (t.algebra.dim() as f64 - tp.algebra.dim() as f64).abs());
    match (&t.grading, &tp.grading) {
        (Some(g), Some(gp)) => {
            rep.push_tol("intertwines_grading", hs_norm(&(u * g - gp * u)), AXIOM_TOL * 10.0);
        }
        (None, None) => {}
        _ => rep.push("grading_presence", false, f64::INFINITY),
    }
    rep
}

/// Hilbert–Schmidt doubling: the algebra acts by left multiplication on
/// `n × n` matrices and the Dirac operator is `A ↦ [D, A]`.
///
/// Operators on matrices are written in the column-stacking `vec`, where
/// `vec(aXb) = (bᵀ ⊗ a) vec(X)`; hence `𝒟 = 1 ⊗ D − Dᵀ ⊗ 1` and the algebra
/// is `1 ⊗ a`. When `T` is even the doubled grading is `A ↦ γAγ`, i.e.
/// `γᵀ ⊗ γ`, which commutes with left multiplication and anticommutes with `𝒟`.
pub fn wigner_double(t: &SpectralTriple) -> Result<SpectralTriple> {
    let n = t.dim();
    let id = matrix::identity(n);
    let dd = kron(&id, &t.dirac) - kron(&t.dirac.transpose(), &id);
    let algebra = t.algebra.amplify(n);
    let grading = t.grading.as_ref().map(|g| kron(&g.transpose(), g));
    SpectralTriple::new(algebra, dd, grading)
}

/// Doubling of an even triple of the form `(A ⊗ 1₂, H₀ ⊗ C², [[0, D₊], [D₋, 0]])`
/// (block layout, index `s·n₀ + i`): only `H₀` is doubled. The result acts on
/// `HS(H₀) ⊗ C²` with `𝒟 = [[0, [D₊,·]], [[D₋,·], 0]]`, the algebra by left
/// multiplication, and grading `1 ⊗ diag(1, −1)`.
pub fn wigner_double_spinor(t: &SpectralTriple) -> Result<SpectralTriple> {
    let n = t.dim();
    if n % 2 != 0 {
        return Err(Error::Argument("spinor doubling needs an even Hilbert dimension".into()));
    }
    let n0 = n / 2;
    let expected = matrix::block_diag(&[&matrix::identity(n0), &(-matrix::identity(n0))]);
    match &t.grading {
        Some(g) if hs_norm(&(g - &expected)) <= AXIOM_TOL => {}
        _ => return Err(Error::Argument("spinor doubling needs grading diag(1_n0, -1_n0)".into())),
    }
    let d = &t.dirac;
    let corner = |r: usize, c0: usize| d.view((r, c0), (n0, n0)).into_owned();
    if hs_norm(&corner(0, 0)) + hs_norm(&corner(n0, n0)) > AXIOM_TOL * hs_norm(d).max(1.0) {
        return Err(Error::Argument("Dirac operator is not off-diagonal".into()));
    }
    let (dp, dm) = (corner(0, n0), corner(n0, 0));
    let mut base_basis = Vec::new();
    for i in 0..t.algebra.dim() {
        let b = t.algebra.basis_element(i);
        let top = b.view((0, 0), (n0, n0)).into_owned();
        let bottom = b.view((n0, n0), (n0, n0)).into_owned();
        if hs_norm(&(&top - &bottom)) > AXIOM_TOL || hs_norm(&(&b - matrix::block_diag(&[&top, &bottom]))) > AXIOM_TOL {
            return Err(Error::Argument("algebra must act as a ⊕ a on H₀ ⊕ H₀".into()));
        }
        base_basis.push(top);
    }
    let id0 = matrix::identity(n0);
    let ad = |x: &ComplexMatrix| kron(&id0, x) - kron(&x.transpose(), &id0);
    let m = n0 * n0;
    let mut dd = matrix::zeros(2 * m, 2 * m);
    dd.view_mut((0, m), (m, m)).copy_from(&ad(&dp));
    dd.view_mut((m, 0), (m, m)).copy_from(&ad(&dm));
    let algebra = lift_left(&MatrixAlgebra::spanned_by(n0, &base_basis)?, n0);
    let grading = matrix::block_diag(&[&matrix::identity(m), &(-matrix::identity(m))]);
    SpectralTriple::new(algebra, dd, Some(grading))
}

/// Left multiplication `X ↦ aX` on `HS(C^n0)`, doubled over `C²`: `1₂ ⊗ 1 ⊗ a`.
fn lift_left(base: &MatrixAlgebra, n0: usize) -> MatrixAlgebra {
    if base.dim() == n0 * n0 {
        return crate::algebra::full_matrix_algebra(n0).expect("n0 >= 1").amplify(2 * n0);
    }
    base.amplify(2 * n0)
}
