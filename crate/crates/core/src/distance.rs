//! Connes spectral distance `sup { φ(a) − φ′(a) : a = a*, ‖[D,a]‖ ≤ 1 }`
//! with certified bounds.
//!
//! The constraint `‖T(a)‖ ≤ 1` is the LMI `[[I, T*], [T, I]] ⪰ 0`, where
//! `T(a) = [D, a]` (full form) or `T(a) = D₊a₋ − a₊D₊` in the grading
//! eigenbasis (even form). The lower bound is always recomputed from the
//! rescaled primal element; the upper bound comes from the stored dual matrix.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Serialize, Serializer};

use crate::algebra::{evaluate, State};
use crate::error::{Error, Result};
use crate::matrix::{self, herm_eig, operator_norm, ComplexMatrix, SparseMatrix, ZERO};
use crate::sdp::{self, Entries, LmiProblem};
use crate::triple::SpectralTriple;

pub const DEFAULT_TOL: f64 = 1e-7;
pub const MAX_ITERATIONS: usize = 500;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Certified,
    Infinite,
    BudgetExhausted,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Constraint {
    Full,
    Even,
}

#[derive(Clone, Debug, Serialize)]
pub struct DistanceResult {
    #[serde(serialize_with = "extended_real")]
    pub lower: f64,
    #[serde(serialize_with = "extended_real")]
    pub upper: f64,
    pub status: Status,
    #[serde(with = "crate::matrix::serde_matrix")]
    pub optimizer: ComplexMatrix,
    pub iterations: usize,
    #[serde(with = "crate::matrix::serde_matrix_opt", skip_serializing_if = "Option::is_none")]
    pub witness: Option<ComplexMatrix>,
    /// Dual matrix behind `upper`, in the working coordinates of the problem.
    #[serde(skip)]
    pub certificate: Option<ComplexMatrix>,
    #[serde(skip)]
    pub real_restricted: bool,
}

impl DistanceResult {
    /// Midpoint of the bracket, `+∞` for infinite distances.
    pub fn value(&self) -> f64 {
        if self.status == Status::Infinite {
            f64::INFINITY
        } else {
            0.5 * (self.lower + self.upper)
        }
    }

    pub fn gap(&self) -> f64 {
        self.upper - self.lower
    }
}

/// JSON has no infinity: non-finite values are written as the string `"inf"`.
pub fn extended_real<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(*x)
    } else {
        s.serialize_str(if *x > 0.0 { "inf" } else { "-inf" })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Subset {
    All,
    Real,
    Diagonal,
}

enum Lmi {
    Real(LmiProblem<f64>),
    Complex(LmiProblem<Complex64>),
}

struct Prepared {
    idx: Vec<usize>,
    lmi: Lmi,
}

impl Prepared {
    fn kernel(&self) -> &DMatrix<f64> {
        match &self.lmi {
            Lmi::Real(p) => p.kernel(),
            Lmi::Complex(p) => p.kernel(),
        }
    }
}

/// Precomputed parametrization of one triple and constraint form; reusable
/// across many state pairs.
pub struct DistanceProblem {
    triple: SpectralTriple,
    constraint: Constraint,
    herm: Vec<SparseMatrix>,
    tmaps: Vec<SparseMatrix>,
    p: usize,
    q: usize,
    real_capable: bool,
    prepared: [OnceLock<Prepared>; 3],
}

impl DistanceProblem {
    pub fn new(t: &SpectralTriple, constraint: Constraint) -> Result<Self> {
        let herm = t.algebra.hermitian_basis_sparse();
        let d = &t.dirac;
        let (tmaps, p, q) = match constraint {
            Constraint::Full => {
                let ds = SparseMatrix::from_dense(d);
                (herm.iter().map(|h| h.commutator_with(&ds)).collect(), t.dim(), t.dim())
            }
            Constraint::Even => even_maps(t, &herm)?,
        };
        let real_capable = matrix::is_real(d)
            && herm.iter().all(|h| h.entries.iter().all(|e| e.2.im == 0.0) || h.entries.iter().all(|e| e.2.re == 0.0));
        Ok(DistanceProblem {
            triple: t.clone(),
            constraint,
            herm,
            tmaps,
            p,
            q,
            real_capable,
            prepared: [OnceLock::new(), OnceLock::new(), OnceLock::new()],
        })
    }

    pub fn triple(&self) -> &SpectralTriple {
        &self.triple
    }

    pub fn constraint(&self) -> Constraint {
        self.constraint
    }

    /// Number of real variables `x_j` in the full parametrization.
    pub fn variables(&self) -> usize {
        self.herm.len()
    }

    fn prepared(&self, s: Subset) -> &Prepared {
        let slot = match s {
            Subset::All => 0,
            Subset::Real => 1,
            Subset::Diagonal => 2,
        };
        self.prepared[slot].get_or_init(|| {
            let idx: Vec<usize> = (0..self.herm.len())
                .filter(|&j| match s {
                    Subset::All => true,
                    Subset::Real => self.herm[j].entries.iter().all(|e| e.2.im == 0.0),
                    Subset::Diagonal => self.herm[j].entries.iter().all(|e| e.0 == e.1),
                })
                .collect();
            let n = self.p + self.q;
            let bound = (2.0 * self.p.min(self.q) as f64).sqrt();
            let dil: Vec<Entries<Complex64>> = idx.iter().map(|&j| dilation(&self.tmaps[j], self.q)).collect();
            let real = dil.iter().all(|e| e.iter().all(|x| x.2.im == 0.0));
            let lmi = if real {
                Lmi::Real(LmiProblem::new(n, dil.iter().map(|e| sdp::real_entries(e)).collect(), bound))
            } else {
                Lmi::Complex(LmiProblem::new(n, dil, bound))
            };
            Prepared { idx, lmi }
        })
    }

    fn objective(&self, idx: &[usize], phi: &State, phi2: &State) -> DVector<f64> {
        DVector::from_iterator(
            idx.len(),
            idx.iter().map(|&j| (self.herm[j].trace_against(&phi.rho) - self.herm[j].trace_against(&phi2.rho)).re),
        )
    }

    fn element(&self, idx: &[usize], x: &DVector<f64>) -> ComplexMatrix {
        let n = self.triple.dim();
        let mut a = matrix::zeros(n, n);
        for (k, &j) in idx.iter().enumerate() {
            if x[k] == 0.0 {
                continue;
            }
            for &(r, c, v) in &self.herm[j].entries {
                a[(r, c)] += v * x[k];
            }
        }
        matrix::hermitian_part(&a)
    }

    fn check_inputs(&self, phi: &State, phi2: &State, tol: f64) -> Result<()> {
        if !(tol > 0.0) {
            return Err(Error::Argument(format!("tolerance must be positive, got {tol}")));
        }
        let n = self.triple.dim();
        if phi.dim() != n || phi2.dim() != n {
            return Err(Error::Dimension(format!("states must live on C^{n}")));
        }
        Ok(())
    }

    fn subset_for(&self, phi: &State, phi2: &State) -> Subset {
        if self.real_capable && phi.is_real() && phi2.is_real() {
            Subset::Real
        } else {
            Subset::All
        }
    }

    /// Certified distance between two states.
    pub fn solve(&self, phi: &State, phi2: &State, tol: f64) -> Result<DistanceResult> {
        self.check_inputs(phi, phi2, tol)?;
        let subset = self.subset_for(phi, phi2);
        self.solve_on(subset, phi, phi2, tol, MAX_ITERATIONS)
    }

    /// Lower bound from the diagonal Hermitian elements only. The upper
    /// field is the restricted program's bound and is not a bound on the distance.
    pub fn diagonal_lower_bound(&self, phi: &State, phi2: &State, tol: f64) -> Result<DistanceResult> {
        self.check_inputs(phi, phi2, tol)?;
        let mut r = self.solve_on(Subset::Diagonal, phi, phi2, tol, MAX_ITERATIONS)?;
        if r.status == Status::Infinite {
            // A diagonal kernel direction that separates the states is a genuine witness.
            return Ok(r);
        }
        r.upper = f64::INFINITY;
        r.status = Status::BudgetExhausted;
        r.certificate = None;
        Ok(r)
    }

    fn solve_on(&self, subset: Subset, phi: &State, phi2: &State, tol: f64, budget: usize) -> Result<DistanceResult> {
        let n = self.triple.dim();
        let prep = self.prepared(subset);
        let idx = &prep.idx;
        let mut c = self.objective(idx, phi, phi2);
        let kernel = prep.kernel();
        if kernel.ncols() > 0 {
            let ck = kernel.transpose() * &c;
            let size = ck.norm();
            if size > tol {
                let v = kernel * (&ck / size);
                return Ok(DistanceResult {
                    lower: f64::INFINITY,
                    upper: f64::INFINITY,
                    status: Status::Infinite,
                    optimizer: matrix::zeros(n, n),
                    iterations: 0,
                    witness: Some(self.element(idx, &v)),
                    certificate: None,
                    real_restricted: subset == Subset::Real,
                });
            }
            c -= kernel * ck;
        }
        let (y, upper, iterations, cert) = match &prep.lmi {
            Lmi::Real(p) => {
                let s = p.solve(&c, 0.5 * tol, budget);
                (s.y, s.upper, s.iterations, sdp::to_complex(&s.x))
            }
            Lmi::Complex(p) => {
                let s = p.solve(&c, 0.5 * tol, budget);
                (s.y, s.upper, s.iterations, s.x)
            }
        };
        let mut a = self.element(idx, &y);
        let norm = operator_norm(&matrix::commutator(&self.triple.dirac, &a));
        if norm > 1.0 {
            a /= Complex64::new(norm, 0.0);
        }
        let lower = (evaluate(phi, &a)? - evaluate(phi2, &a)?).re;
        let upper = upper.max(lower);
        let status = if upper - lower <= tol * upper.max(1.0) { Status::Certified } else { Status::BudgetExhausted };
        Ok(DistanceResult {
            lower,
            upper,
            status,
            optimizer: a,
            iterations,
            witness: None,
            certificate: Some(cert),
            real_restricted: subset == Subset::Real,
        })
    }

    /// Recomputes the upper bound carried by `r.certificate` from scratch.
    pub fn revalidate(&self, r: &DistanceResult, phi: &State, phi2: &State) -> Result<f64> {
        let Some(x) = &r.certificate else {
            return Err(Error::Argument("result carries no certificate".into()));
        };
        let subset = if r.real_restricted { Subset::Real } else { Subset::All };
        let prep = self.prepared(subset);
        let mut c = self.objective(&prep.idx, phi, phi2);
        let kernel = prep.kernel();
        if kernel.ncols() > 0 {
            c -= kernel * (kernel.transpose() * &c);
        }
        Ok(match &prep.lmi {
            Lmi::Real(p) => {
                if !matrix::is_real(x) {
                    return Err(Error::Argument("real-restricted certificate must be real".into()));
                }
                p.certify(&c, &x.map(|z| z.re)).0
            }
            Lmi::Complex(p) => p.certify(&c, x).0,
        })
    }
}

/// `A = −[[0, T*], [T, 0]]` on `C^q ⊕ C^p`, so that `I − yA` is the dilation of `yT`.
fn dilation(t: &SparseMatrix, q: usize) -> Entries<Complex64> {
    let mut out = Vec::with_capacity(2 * t.nnz());
    for &(r, c, v) in &t.entries {
        out.push((q + r, c, -v));
        out.push((c, q + r, -v.conj()));
    }
    out
}

fn sparse_mul(a: &SparseMatrix, b: &SparseMatrix) -> SparseMatrix {
    let mut rows: Vec<Vec<(usize, Complex64)>> = vec![Vec::new(); b.rows];
    for &(i, j, x) in &b.entries {
        rows[i].push((j, x));
    }
    let mut out = SparseMatrix::new(a.rows, b.cols);
    for &(i, k, x) in &a.entries {
        for &(j, y) in &rows[k] {
            out.push(i, j, x * y);
        }
    }
    out
}

/// `T_j = D₊ (h_j)₋ − (h_j)₊ D₊` in a grading eigenbasis.
fn even_maps(t: &SpectralTriple, herm: &[SparseMatrix]) -> Result<(Vec<SparseMatrix>, usize, usize)> {
    let g = t.grading.as_ref().ok_or_else(|| Error::Argument("even distance needs a graded triple".into()))?;
    let n = t.dim();
    let diagonal_pm1 = (0..n).all(|i| {
        (0..n).all(|j| if i == j { (g[(i, i)] - 1.0).norm() == 0.0 || (g[(i, i)] + 1.0).norm() == 0.0 } else { g[(i, j)] == ZERO })
    });
    let d = &t.dirac;
    let scale = operator_norm(d).max(1e-300);
    if diagonal_pm1 {
        let plus: Vec<usize> = (0..n).filter(|&i| g[(i, i)].re > 0.0).collect();
        let minus: Vec<usize> = (0..n).filter(|&i| g[(i, i)].re < 0.0).collect();
        let mut pos = vec![(false, 0usize); n];
        for (k, &i) in plus.iter().enumerate() {
            pos[i] = (true, k);
        }
        for (k, &i) in minus.iter().enumerate() {
            pos[i] = (false, k);
        }
        let mut dplus = SparseMatrix::new(plus.len(), minus.len());
        let mut diag_block = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let x = d[(i, j)];
                if x == ZERO {
                    continue;
                }
                match (pos[i], pos[j]) {
                    ((true, a), (false, b)) => dplus.push(a, b, x),
                    ((false, _), (true, _)) => {}
                    _ => diag_block = diag_block.max(x.norm()),
                }
            }
        }
        if diag_block > 1e-10 * scale {
            return Err(Error::Argument(format!("D is not off-diagonal for the grading (block entry {diag_block:.3e})")));
        }
        let maps = herm
            .iter()
            .map(|h| {
                let mut hp = SparseMatrix::new(plus.len(), plus.len());
                let mut hm = SparseMatrix::new(minus.len(), minus.len());
                for &(i, j, x) in &h.entries {
                    match (pos[i], pos[j]) {
                        ((true, a), (true, b)) => hp.push(a, b, x),
                        ((false, a), (false, b)) => hm.push(a, b, x),
                        _ => {}
                    }
                }
                let mut out = sparse_mul(&dplus, &hm);
                out.entries.extend(sparse_mul(&hp, &dplus).entries.into_iter().map(|(i, j, x)| (i, j, -x)));
                out.compress()
            })
            .collect();
        return Ok((maps, plus.len(), minus.len()));
    }
    let (vals, u) = herm_eig(g)?;
    let minus: Vec<usize> = (0..n).filter(|&i| vals[i] < 0.0).collect();
    let plus: Vec<usize> = (0..n).filter(|&i| vals[i] > 0.0).collect();
    let cols = |ix: &[usize]| DMatrix::from_fn(n, ix.len(), |r, k| u[(r, ix[k])]);
    let (up, um) = (cols(&plus), cols(&minus));
    let dplus = up.adjoint() * d * &um;
    let defect = operator_norm(&(up.adjoint() * d * &up)).max(operator_norm(&(um.adjoint() * d * &um)));
    if defect > 1e-10 * scale {
        return Err(Error::Argument(format!("D is not off-diagonal for the grading (block norm {defect:.3e})")));
    }
    let maps = herm
        .iter()
        .map(|h| {
            let hd = h.to_dense();
            let hp = up.adjoint() * &hd * &up;
            let hm = um.adjoint() * &hd * &um;
            let tm = &dplus * hm - hp * &dplus;
            SparseMatrix::from_dense(&tm.map(|z| if z.norm() < 1e-15 * scale { ZERO } else { z }))
        })
        .collect();
    Ok((maps, plus.len(), minus.len()))
}

pub fn spectral_distance(t: &SpectralTriple, phi: &State, phi2: &State, tol: f64) -> Result<DistanceResult> {
    DistanceProblem::new(t, Constraint::Full)?.solve(phi, phi2, tol)
}

pub fn spectral_distance_even(t: &SpectralTriple, phi: &State, phi2: &State, tol: f64) -> Result<DistanceResult> {
    DistanceProblem::new(t, Constraint::Even)?.solve(phi, phi2, tol)
}

/// Pairwise distances, one solve per unordered pair; entries are the upper
/// bounds (so the matrix over-estimates by at most the certified gap).
pub struct DistanceMatrix {
    pub results: Vec<Vec<Option<DistanceResult>>>,
}

impl DistanceMatrix {
    pub fn values(&self) -> Vec<Vec<f64>> {
        self.results
            .iter()
            .map(|row| row.iter().map(|r| r.as_ref().map_or(0.0, |r| r.value())).collect())
            .collect()
    }

    pub fn get(&self, i: usize, j: usize) -> Option<&DistanceResult> {
        if i < j {
            self.results[i][j].as_ref()
        } else {
            self.results[j][i].as_ref()
        }
    }
}

pub fn distance_matrix(problem: &DistanceProblem, states: &[State], tol: f64) -> Result<DistanceMatrix> {
    let k = states.len();
    let mut results = vec![vec![None; k]; k];
    for i in 0..k {
        for j in (i + 1)..k {
            results[i][j] = Some(problem.solve(&states[i], &states[j], tol)?);
        }
    }
    Ok(DistanceMatrix { results })
}
