//! Truncations of the Moyal plane in the oscillator basis.
//!
//! Layout: `C^N ⊗ C²` in blocks, index `s·N + i`; the algebra is `M_N ⊗ 1₂`
//! acting as `diag(a, a)`, `D = √(2/θ) [[0, 𝔞], [𝔞†, 0]]`, `γ = diag(1, −1)`.

use num_complex::Complex64;
use serde::Serialize;

use crate::algebra::{full_matrix_algebra, State};
use crate::error::{Error, Result};
use crate::connections::{
    compose_correspondences, similarity_check, Connection, Correspondence, Module, RectBimodule, CONNECTION_TOL,
};
use crate::matrix::{
    self, c, exp_anti_hermitian, kron, operator_norm, ComplexMatrix, ComplexVector, OperatorSubspace, ONE, SPAN_REL_TOL,
};
use crate::report::ValidationReport;
use crate::triple::{omega1, OneFormSpace, SpectralTriple};

#[derive(Clone, Debug)]
pub struct MoyalTruncation {
    pub n: usize,
    pub theta: f64,
    /// Lowering operator 𝔞 on `C^N`.
    pub ladder: ComplexMatrix,
    /// Raising operator 𝔞†.
    pub ladder_dag: ComplexMatrix,
    pub triple: SpectralTriple,
}

/// Lowering operator `𝔞|k⟩ = √k |k−1⟩` on `C^n`.
pub fn lowering(n: usize) -> ComplexMatrix {
    let mut a = matrix::zeros(n, n);
    for k in 1..n {
        a[(k - 1, k)] = c((k as f64).sqrt(), 0.0);
    }
    a
}

/// `[[0, B], [C, 0]]` with square blocks.
fn off_diagonal(b: &ComplexMatrix, cc: &ComplexMatrix) -> ComplexMatrix {
    let n = b.nrows();
    let mut d = matrix::zeros(2 * n, 2 * n);
    d.view_mut((0, n), (n, n)).copy_from(b);
    d.view_mut((n, 0), (n, n)).copy_from(cc);
    d
}

fn grading(n: usize) -> ComplexMatrix {
    matrix::block_diag(&[&matrix::identity(n), &(-matrix::identity(n))])
}

pub fn truncation(n: usize, theta: f64) -> Result<MoyalTruncation> {
    if n < 2 {
        return Err(Error::Argument(format!("truncation size must be at least 2, got {n}")));
    }
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(Error::Argument(format!("theta must be positive, got {theta}")));
    }
    let a = lowering(n);
    let ad = a.adjoint();
    let s = (2.0 / theta).sqrt();
    let d = off_diagonal(&a, &ad) * c(s, 0.0);
    let algebra = full_matrix_algebra(n)?.amplify(2);
    let triple = SpectralTriple::new(algebra, d, Some(grading(n)))?;
    Ok(MoyalTruncation { n, theta, ladder: a, ladder_dag: ad, triple })
}

/// The matrix geometry `(M_n, C^n ⊗ C², D_n, γ_n)` with `D_n = √(2/θ)[[0, X_n*], [X_n, 0]]`
/// and `X_n` the truncated raising operator.
pub fn matrix_triple(n: usize, theta: f64) -> Result<SpectralTriple> {
    Ok(truncation(n, theta)?.triple)
}

impl MoyalTruncation {
    pub fn dim(&self) -> usize {
        2 * self.n
    }

    /// Indices below `N − max(4, N/4)` are free of truncation effects.
    pub fn interior(&self) -> usize {
        self.n.saturating_sub(4.max(self.n / 4))
    }

    /// `a ⊗ 1₂` in the block layout.
    pub fn lift(&self, a: &ComplexMatrix) -> ComplexMatrix {
        kron(&matrix::identity(2), a)
    }

    /// State `ψ ↦ ⟨ψ|a|ψ⟩` of `M_N`, realized on `C^N ⊗ C²` as `½ |ψ⟩⟨ψ| ⊗ 1₂`.
    pub fn vector_state(&self, psi: &ComplexVector) -> Result<State> {
        if psi.len() != self.n {
            return Err(Error::Dimension(format!("vector has length {}, expected {}", psi.len(), self.n)));
        }
        let norm = psi.norm();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::Argument(format!("vector norm {norm} is not 1")));
        }
        let p = psi * psi.adjoint();
        let rho = self.lift(&p) * c(0.5, 0.0);
        State::new(matrix::hermitian_part(&rho))
    }

    pub fn eigenstate(&self, m: usize) -> Result<State> {
        if m >= self.n {
            return Err(Error::Range(format!("eigenstate index {m} out of range for N = {}", self.n)));
        }
        let mut v = ComplexVector::zeros(self.n);
        v[m] = ONE;
        self.vector_state(&v)
    }

    /// Coherent vector `e^{−|z|²/4θ} Σ (z/√(2θ))ⁿ/√(n!) |n⟩`, renormalized after truncation.
    pub fn coherent_vector(&self, z: Complex64) -> Result<ComplexVector> {
        let tail = coherent_tail(z, self.theta, self.n);
        if tail >= 1e-12 {
            let mut need = self.n;
            while coherent_tail(z, self.theta, need) >= 1e-12 {
                need += 1;
            }
            return Err(Error::Truncation(
                format!("coherent state tail mass {tail:.3e} beyond N = {}; use N ≥ {need}", self.n),
                need,
            ));
        }
        let w = z / (2.0 * self.theta).sqrt();
        let mut v = ComplexVector::zeros(self.n);
        let mut term = c((-z.norm_sqr() / (4.0 * self.theta)).exp(), 0.0);
        for k in 0..self.n {
            v[k] = term;
            term = term * w / ((k + 1) as f64).sqrt();
        }
        let norm = v.norm();
        Ok(v / c(norm, 0.0))
    }

    pub fn coherent_state(&self, z: Complex64) -> Result<State> {
        self.vector_state(&self.coherent_vector(z)?)
    }

    /// `T(z) = exp((z𝔞† − z̄𝔞)/√(2θ))` of the truncated generator.
    pub fn translation(&self, z: Complex64) -> ComplexMatrix {
        let g = (&self.ladder_dag * z - &self.ladder * z.conj()) / c((2.0 * self.theta).sqrt(), 0.0);
        exp_anti_hermitian(&g).expect("generator is anti-Hermitian")
    }

    /// `R(τ) = diag(e^{iτn})`.
    pub fn rotation(&self, tau: Complex64) -> ComplexMatrix {
        let i = Complex64::new(0.0, 1.0);
        matrix::diag(&(0..self.n).map(|k| (i * tau * k as f64).exp()).collect::<Vec<_>>())
    }

    /// The pair `(a_N, b_N)` with `a_N = 𝔞†R(i/N) + R(i/N)𝔞` on `C^N`.
    pub fn an_element(&self, nparam: usize) -> Result<AnElement> {
        if nparam == 0 {
            return Err(Error::Argument("a_N needs N ≥ 1".into()));
        }
        let r = self.rotation(c(0.0, 1.0 / nparam as f64));
        let a = matrix::hermitian_part(&(&self.ladder_dag * &r + &r * &self.ladder));
        let nf = nparam as f64;
        let b = &a / c(1.0 + ((1.0 / nf).exp() - 1.0) * nf, 0.0);
        let d = &self.triple.dirac;
        let commutator_norm_a = operator_norm(&matrix::commutator(d, &self.lift(&a)));
        let commutator_norm_b = operator_norm(&matrix::commutator(d, &self.lift(&b)));
        Ok(AnElement { nparam, a, b, commutator_norm_a, commutator_norm_b })
    }

    /// Feasible lower bound on `d(φ, φ′)` from `a_N` rescaled by its measured
    /// commutator norm, and the weaker `√(θ/2)(φ(b_N) − φ′(b_N))`.
    pub fn an_lower_bounds(&self, e: &AnElement, phi: &ComplexVector, phi2: &ComplexVector) -> (f64, f64) {
        let ev = |m: &ComplexMatrix, v: &ComplexVector| (v.adjoint() * m * v)[(0, 0)].re;
        let da = ev(&e.a, phi) - ev(&e.a, phi2);
        let db = ev(&e.b, phi) - ev(&e.b, phi2);
        (da.abs() / e.commutator_norm_a, (self.theta / 2.0).sqrt() * db.abs())
    }

    /// Eigenvalues of `|D|` off the kernel, ascending.
    pub fn abs_spectrum(&self) -> Vec<f64> {
        let ev = matrix::herm_eigenvalues(&self.triple.dirac).expect("D is Hermitian");
        let top = ev.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let mut out: Vec<f64> = ev.iter().map(|x| x.abs()).filter(|x| *x > 1e-9 * top).collect();
        out.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out
    }
}

fn coherent_tail(z: Complex64, theta: f64, n: usize) -> f64 {
    // Poisson(λ) tail with λ = |z|²/2θ, summed directly from index n.
    let lambda = z.norm_sqr() / (2.0 * theta);
    if lambda == 0.0 {
        return 0.0;
    }
    let mut log_term = -lambda + n as f64 * lambda.ln() - ln_factorial(n);
    let mut total = 0.0;
    let mut k = n;
    loop {
        let t = log_term.exp();
        total += t;
        if (k as f64) > lambda && t < 1e-18 * total.max(1e-300) {
            break;
        }
        if k > n + 10_000 {
            break;
        }
        k += 1;
        log_term += lambda.ln() - (k as f64).ln();
    }
    total
}

fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

#[derive(Clone, Debug)]
pub struct AnElement {
    pub nparam: usize,
    pub a: ComplexMatrix,
    pub b: ComplexMatrix,
    /// `‖[D, a_N ⊗ 1]‖` on the truncation.
    pub commutator_norm_a: f64,
    /// `‖[D, b_N ⊗ 1]‖` on the truncation.
    pub commutator_norm_b: f64,
}

/// `√(θ/2) Σ_{k=m+1}^{n} 1/√k`, symmetric in `(m, n)`.
pub fn eigenstate_distance_formula(m: usize, n: usize, theta: f64) -> f64 {
    let (lo, hi) = if m <= n { (m, n) } else { (n, m) };
    (theta / 2.0).sqrt() * ((lo + 1)..=hi).map(|k| 1.0 / (k as f64).sqrt()).sum::<f64>()
}

/// `x_m = Σ_{k=1}^{m} √(θ/2k)` for `m = 0..=count`.
pub fn embedding_points(theta: f64, count: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(count + 1);
    let mut x = 0.0;
    out.push(x);
    for k in 1..=count {
        x += (theta / (2.0 * k as f64)).sqrt();
        out.push(x);
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct GhReport {
    pub theta: f64,
    pub points: usize,
    pub hausdorff_distance: f64,
    /// Closed form `½√(θ/2)`.
    pub formula: f64,
    pub residual: f64,
}

/// Hausdorff distance between `{x_0, …, x_M}` and `[0, x_M]`.
pub fn gh_experiment(theta: f64, points: usize) -> Result<GhReport> {
    if points < 2 {
        return Err(Error::Argument("need at least 2 points".into()));
    }
    if !(theta > 0.0) {
        return Err(Error::Argument(format!("theta must be positive, got {theta}")));
    }
    let x = embedding_points(theta, points);
    let h = x.windows(2).map(|w| 0.5 * (w[1] - w[0])).fold(0.0, f64::max);
    let formula = 0.5 * (theta / 2.0).sqrt();
    Ok(GhReport { theta, points, hausdorff_distance: h, formula, residual: (h - formula).abs() })
}

#[derive(Clone, Debug, Serialize)]
pub struct ZetaReport {
    pub theta: f64,
    pub n: usize,
    pub volume_estimate: f64,
    pub volume_error: f64,
    pub volume_expected: f64,
    pub dimension_estimate: f64,
    pub dimension_error: f64,
    pub points: usize,
}

/// Least-squares slope and its standard error.
fn fit_slope(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let resid: f64 = x.iter().zip(y).map(|(a, b)| (b - my - slope * (a - mx)).powi(2)).sum();
    let se = if x.len() > 2 { (resid / (n - 2.0) / sxx).sqrt() } else { f64::INFINITY };
    (slope, se)
}

/// Volume as the residue at `z = 2` of `Σ μ^{−z}` and dimension as the growth
/// exponent of the counting function, both read off the interior spectrum of `|D|`.
///
/// The residue is the slope of `S(Λ) = Σ_{μ ≤ Λ} μ^{−2}` against `ln Λ`; each
/// sample is taken at the midpoint of the jump at an eigenvalue, which removes
/// the leading Euler–Maclaurin correction. The dimension uses the midpoint
/// counting function in log-log coordinates over the upper half of the
/// interior levels. Error bars combine the fit error with the spread between
/// the two halves of the fitting window.
pub fn zeta_estimates(m: &MoyalTruncation) -> Result<ZetaReport> {
    let spec = m.abs_spectrum();
    let mut levels: Vec<(f64, usize)> = Vec::new();
    for &mu in &spec {
        match levels.last_mut() {
            Some((v, k)) if (mu - *v).abs() <= 1e-9 * mu => *k += 1,
            _ => levels.push((mu, 1)),
        }
    }
    let cutoff = m.interior();
    levels.truncate(cutoff.min(levels.len()));
    if levels.len() < 4 {
        return Err(Error::Argument(format!("N = {} leaves too few interior levels", m.n)));
    }
    let mut s = 0.0;
    let mut count = 0.0;
    let (mut lx, mut sv, mut cv) = (Vec::new(), Vec::new(), Vec::new());
    for &(mu, k) in &levels {
        let jump = k as f64 * mu.powi(-2);
        lx.push(mu.ln());
        sv.push(s + 0.5 * jump);
        cv.push((count + 0.5 * k as f64).ln());
        s += jump;
        count += k as f64;
    }
    let half = lx.len() / 2;
    let spread = |y: &[f64]| {
        let (a, _) = fit_slope(&lx[..half], &y[..half]);
        let (b, _) = fit_slope(&lx[half..], &y[half..]);
        (a - b).abs()
    };
    let (vol, vol_se) = fit_slope(&lx, &sv);
    let (dim, dim_se) = fit_slope(&lx[half..], &cv[half..]);
    let q = half / 2;
    let dim_spread = {
        let (a, _) = fit_slope(&lx[half..half + q.max(2)], &cv[half..half + q.max(2)]);
        let (b, _) = fit_slope(&lx[lx.len() - q.max(2)..], &cv[cv.len() - q.max(2)..]);
        (a - b).abs()
    };
    Ok(ZetaReport {
        theta: m.theta,
        n: m.n,
        volume_estimate: vol,
        volume_error: 2.0 * vol_se + spread(&sv),
        volume_expected: 2.0 * m.theta,
        dimension_estimate: dim,
        dimension_error: 2.0 * dim_se + dim_spread,
        points: lx.len(),
    })
}

/// `[[0, B], [C, 0]]` in block layout for `p × q` blocks.
fn off_diagonal_rect(b: &ComplexMatrix, cc: &ComplexMatrix) -> ComplexMatrix {
    let (p, q) = b.shape();
    let mut d = matrix::zeros(2 * p, 2 * q);
    d.view_mut((0, q), (p, q)).copy_from(b);
    d.view_mut((p, 0), (p, q)).copy_from(cc);
    d
}

impl MoyalTruncation {
    /// `Ω¹_D(M_N ⊗ 1₂)` in closed form: every operator with vanishing diagonal blocks.
    pub fn one_forms(&self) -> OneFormSpace {
        let (n, dim) = (self.n, self.dim());
        let mut basis = Vec::with_capacity(2 * n * n);
        for i in 0..n {
            for j in 0..n {
                basis.push(matrix::unit(dim, dim, i, n + j));
                basis.push(matrix::unit(dim, dim, n + i, j));
            }
        }
        let space = OperatorSubspace { rows: dim, cols: dim, basis, tolerance: SPAN_REL_TOL };
        OneFormSpace { space, source: self.triple.clone() }
    }
}

fn check_size(n: usize, m: &MoyalTruncation) -> Result<()> {
    if n < 2 || 2 * n > m.n {
        return Err(Error::Argument(format!("need 2 <= n <= N/2, got n = {n}, N = {}", m.n)));
    }
    Ok(())
}

/// Connection on `C^N ⊗ C̄^n` over `(M_n, C^n ⊗ C², D_n)`:
/// `∇η = √(2/θ) [[0, 𝔞η − ηX_n*], [𝔞†η − ηX_n, 0]]`. With `exchanged`, the
/// roles of `𝔞` and `𝔞†` are swapped, which still satisfies the Leibniz rule
/// but no longer intertwines with `D`.
fn forward_connection(n: usize, m: &MoyalTruncation, exchanged: bool) -> Result<(Connection, f64)> {
    check_size(n, m)?;
    let base = matrix_triple(n, m.theta)?;
    let module = Module::rect(RectBimodule::new(m.n, n)?, &base.algebra)?;
    let (xs, x) = (lowering(n), lowering(n).adjoint());
    let (top, bottom) = if exchanged { (&m.ladder_dag, &m.ladder) } else { (&m.ladder, &m.ladder_dag) };
    let s = c((2.0 / m.theta).sqrt(), 0.0);
    let pairs: Vec<(ComplexMatrix, ComplexMatrix)> = module
        .spanners()
        .into_iter()
        .map(|eta| {
            let e = eta.view((0, 0), (m.n, n)).into_owned();
            let image = off_diagonal_rect(&(top * &e - &e * &xs), &(bottom * &e - &e * &x)) * s;
            (eta, image)
        })
        .collect();
    Connection::from_images(module, &base, &pairs)
}

/// The correspondence `(M_n, C^n ⊗ C², D_n) → (M_N ⊗ 1₂, C^N ⊗ C², D)` with
/// `U` the multiplication map.
pub fn moyal_correspondence(n: usize, m: &MoyalTruncation) -> Result<Correspondence> {
    let (conn, fit) = forward_connection(n, m, false)?;
    if fit > CONNECTION_TOL {
        return Err(Error::Domain(format!("connection is not well defined (residual {fit:.3e})")));
    }
    Correspondence::new(conn, matrix::identity(m.dim()), m.triple.clone())
}

/// The forward connection with `𝔞` and `𝔞†` exchanged; a negative control.
pub fn exchanged_ladder_connection(n: usize, m: &MoyalTruncation) -> Result<Connection> {
    Ok(forward_connection(n, m, true)?.0)
}

/// The correspondence back to `(M_n, C^n ⊗ C², D_n)` on `C^n ⊗ C̄^N`, with
/// `∇ξ = √(2/θ) [[0, X_n*ξ − ξ𝔞], [X_nξ − ξ𝔞†, 0]]` and `U` the pairing.
pub fn moyal_correspondence_reverse(n: usize, m: &MoyalTruncation) -> Result<Correspondence> {
    check_size(n, m)?;
    let target = matrix_triple(n, m.theta)?;
    let module = Module::rect(RectBimodule::new(n, m.n)?, &m.triple.algebra)?;
    let (xs, x) = (lowering(n), lowering(n).adjoint());
    let s = c((2.0 / m.theta).sqrt(), 0.0);
    let pairs: Vec<(ComplexMatrix, ComplexMatrix)> = module
        .spanners()
        .into_iter()
        .map(|xi| {
            let e = xi.view((0, 0), (n, m.n)).into_owned();
            let image = off_diagonal_rect(&(&xs * &e - &e * &m.ladder), &(&x * &e - &e * &m.ladder_dag)) * s;
            (xi, image)
        })
        .collect();
    let (conn, fit) = Connection::from_images(module, &m.triple, &pairs)?;
    if fit > CONNECTION_TOL {
        return Err(Error::Domain(format!("connection is not well defined (residual {fit:.3e})")));
    }
    Correspondence::new(conn, matrix::identity(2 * n), target)
}

/// `max ‖(U (1 ⊗_∇ D) − D′ U) v‖` over basis vectors `v` of the fluctuated
/// space whose oscillator index is below `limit` (block layout with blocks of `block`).
pub fn intertwining_residual(c: &Connection, u: &ComplexMatrix, target: &ComplexMatrix, block: usize, limit: usize) -> f64 {
    let diff = u * c.dirac() - target * u;
    let mut worst = 0.0f64;
    for s in 0..diff.ncols() / block {
        for i in 0..limit.min(block) {
            worst = worst.max(diff.column(s * block + i).norm());
        }
    }
    worst
}

#[derive(Clone, Debug, Serialize)]
pub struct CorrespondenceReport {
    pub n: usize,
    pub truncation: usize,
    pub theta: f64,
    pub interior: usize,
    pub forward_intertwining: f64,
    pub reverse_intertwining: f64,
    pub forward_checks: ValidationReport,
    pub reverse_checks: ValidationReport,
    pub round_trip: ValidationReport,
    /// Interior intertwining residual of the exchanged-ladder connection.
    pub exchanged_intertwining: f64,
}

impl CorrespondenceReport {
    pub fn passed(&self) -> bool {
        self.forward_intertwining <= CONNECTION_TOL
            && self.reverse_intertwining <= CONNECTION_TOL
            && self.forward_checks.all_pass()
            && self.reverse_checks.all_pass()
            && self.round_trip.all_pass()
    }
}

/// Both correspondences, their intertwining on interior vectors, and the
/// round trip `M_n → Moyal → M_n` compared with the identity correspondence
/// through row-by-column multiplication.
pub fn correspondence_experiment(n: usize, m: &MoyalTruncation) -> Result<CorrespondenceReport> {
    let fwd = moyal_correspondence(n, m)?;
    let rev = moyal_correspondence_reverse(n, m)?;
    let interior = m.interior();
    let forward_intertwining = intertwining_residual(&fwd.connection, &fwd.unitary, &m.triple.dirac, m.n, interior);
    let reverse_intertwining = intertwining_residual(&rev.connection, &rev.unitary, &rev.target.dirac, n, n);
    let forward_checks = fwd.validate(Some(&omega1(fwd.source())?), 7);
    let reverse_checks = rev.validate(Some(&m.one_forms()), 7);
    let trip = compose_correspondences(&fwd, &rev)?;
    let id = Correspondence::identity(fwd.source())?;
    let round_trip = similarity_check(&trip, &id, &matrix::identity(2 * n));
    let bad = exchanged_ladder_connection(n, m)?;
    let exchanged_intertwining = intertwining_residual(&bad, &matrix::identity(m.dim()), &m.triple.dirac, m.n, interior);
    Ok(CorrespondenceReport {
        n,
        truncation: m.n,
        theta: m.theta,
        interior,
        forward_intertwining,
        reverse_intertwining,
        forward_checks,
        reverse_checks,
        round_trip,
        exchanged_intertwining,
    })
}
