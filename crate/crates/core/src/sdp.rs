//! Primal-dual interior-point solver for
//!
//! ```text
//!   maximize  cᵀy   subject to  S = I − Σ_j y_j A_j ⪰ 0
//!   minimize  tr X  subject to  Re tr(A_j X) = c_j,  X ⪰ 0
//! ```
//!
//! with sparse Hermitian `A_j` on a single block. Every iterate keeps `S ⪰ 0`
//! so `cᵀy` is a valid lower bound. Upper bounds come from the primal matrix
//! after an exact-feasibility correction, see [`LmiProblem::certify`].

use nalgebra::{ComplexField, DMatrix, DVector};
use num_complex::Complex64;

use crate::matrix::ComplexMatrix;

/// Scalar field of the problem data: `f64` for real instances, `Complex64` otherwise.
pub trait Field: ComplexField<RealField = f64> + Copy {
    fn from_c(z: Complex64) -> Self;
    fn to_c(self) -> Complex64;
}

impl Field for f64 {
    fn from_c(z: Complex64) -> Self {
        z.re
    }
    fn to_c(self) -> Complex64 {
        Complex64::new(self, 0.0)
    }
}

impl Field for Complex64 {
    fn from_c(z: Complex64) -> Self {
        z
    }
    fn to_c(self) -> Complex64 {
        self
    }
}

/// Sparse Hermitian constraint matrix, both triangles stored.
pub type Entries<T> = Vec<(usize, usize, T)>;

pub struct LmiProblem<T: Field> {
    pub n: usize,
    pub a: Vec<Entries<T>>,
    /// Upper bound on `‖Σ y_j A_j‖_F` over feasible `y`.
    pub frobenius_bound: f64,
    kernel: DMatrix<f64>,
    /// Pseudo-inverse of the Gram map `G_ij = Re tr(A_i A_j)` as (direction, eigenvalue) pairs.
    pinv: Vec<(DVector<f64>, f64)>,
    pub sigma_max: f64,
    pub sigma_min: f64,
}

#[derive(Clone, Debug)]
pub struct LmiSolution<T: Field> {
    pub y: DVector<f64>,
    pub x: DMatrix<T>,
    pub lower: f64,
    pub upper: f64,
    pub iterations: usize,
    pub certified: bool,
}

/// Relative singular-value cutoff for kernel directions.
pub const KERNEL_REL_TOL: f64 = 1e-9;

impl<T: Field> LmiProblem<T> {
    /// Builds the problem and analyses the kernel of `y ↦ Σ y_j A_j`.
    pub fn new(n: usize, a: Vec<Entries<T>>, frobenius_bound: f64) -> Self {
        let m = a.len();
        let g = gram(n, &a);
        let mut p = LmiProblem {
            n,
            a,
            frobenius_bound,
            kernel: DMatrix::zeros(m, 0),
            pinv: Vec::new(),
            sigma_max: 0.0,
            sigma_min: f64::INFINITY,
        };
        if m == 0 {
            return p;
        }
        let eig = block_eigen(&g, &components(n, &p.a));
        let lmax = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
        p.sigma_max = lmax.max(0.0).sqrt();
        if lmax <= 0.0 {
            p.kernel = DMatrix::identity(m, m);
            return p;
        }
        let cand: Vec<usize> = (0..m).filter(|&i| eig.eigenvalues[i] <= 1e-8 * lmax).collect();
        for i in 0..m {
            if eig.eigenvalues[i] > 1e-8 * lmax {
                let v = eig.eigenvectors.column(i).into_owned();
                p.sigma_min = p.sigma_min.min(eig.eigenvalues[i].sqrt());
                p.pinv.push((v, eig.eigenvalues[i]));
            }
        }
        if !cand.is_empty() {
            // Resolve the small singular values directly from the map applied to
            // the candidate directions; the Gram eigenvalues cannot see below ~1e-8·σ_max.
            let vc = DMatrix::from_fn(m, cand.len(), |r, k| eig.eigenvectors[(r, cand[k])]);
            let mut stacked = DMatrix::<f64>::zeros(2 * n * n, cand.len());
            for k in 0..cand.len() {
                let mut dense = vec![Complex64::new(0.0, 0.0); n * n];
                for (j, entries) in p.a.iter().enumerate() {
                    let w = vc[(j, k)];
                    if w == 0.0 {
                        continue;
                    }
                    for &(r, cc, x) in entries {
                        dense[r + n * cc] += x.to_c() * w;
                    }
                }
                for (q, z) in dense.iter().enumerate() {
                    stacked[(2 * q, k)] = z.re;
                    stacked[(2 * q + 1, k)] = z.im;
                }
            }
            let svd = stacked.svd(false, true);
            let vt = svd.v_t.expect("requested right vectors");
            let mut kernel_cols = Vec::new();
            for (idx, &s) in svd.singular_values.iter().enumerate() {
                let w = vt.row(idx).transpose();
                let dir = &vc * w;
                if s <= KERNEL_REL_TOL * p.sigma_max {
                    kernel_cols.push(dir);
                } else {
                    p.sigma_min = p.sigma_min.min(s);
                    p.pinv.push((dir, s * s));
                }
            }
            p.kernel = if kernel_cols.is_empty() {
                DMatrix::zeros(m, 0)
            } else {
                DMatrix::from_columns(&kernel_cols)
            };
        }
        p
    }

    pub fn m(&self) -> usize {
        self.a.len()
    }

    /// Orthonormal basis (columns) of the kernel of `y ↦ Σ y_j A_j`.
    pub fn kernel(&self) -> &DMatrix<f64> {
        &self.kernel
    }

    pub fn project_out_kernel(&self, v: &DVector<f64>) -> DVector<f64> {
        if self.kernel.ncols() == 0 {
            return v.clone();
        }
        v - &self.kernel * (self.kernel.transpose() * v)
    }

    /// `(Re tr(A_j X))_j`.
    pub fn apply(&self, x: &DMatrix<T>) -> DVector<f64> {
        DVector::from_iterator(
            self.m(),
            self.a.iter().map(|e| e.iter().map(|&(r, c, v)| (v * x[(c, r)]).real()).sum::<f64>()),
        )
    }

    /// `Σ y_j A_j`.
    pub fn adjoint(&self, y: &DVector<f64>) -> DMatrix<T> {
        let mut out = DMatrix::<T>::zeros(self.n, self.n);
        for (j, e) in self.a.iter().enumerate() {
            let w = y[j];
            if w == 0.0 {
                continue;
            }
            for &(r, c, v) in e {
                out[(r, c)] += v * T::from_real(w);
            }
        }
        out
    }

    fn slack(&self, y: &DVector<f64>) -> DMatrix<T> {
        DMatrix::<T>::identity(self.n, self.n) - self.adjoint(y)
    }

    fn pinv_apply(&self, r: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(r.len());
        for (d, ev) in &self.pinv {
            out += d * (d.dot(r) / ev);
        }
        out
    }

    /// Upper bound on `max cᵀy` from any Hermitian `X`: correct `X` so that
    /// `𝒜(X) ≈ c`, then use `cᵀy ≤ ‖X‖₁ + |rᵀy|` (valid because `0 ⪯ S ⪯ 2I`
    /// for the dilation constraint) with `‖y‖ ≤ frobenius_bound / σ_min`.
    /// `c` must be orthogonal to the kernel.
    ///
    /// Two corrections are tried and the smaller bound kept: the minimum-norm
    /// one `X + 𝒜*(λ)`, and the weighted one `X + X𝒜*(λ)X`, which vanishes on
    /// the null space of `X` and so keeps a nearly singular `X` positive.
    pub fn certify(&self, c: &DVector<f64>, x: &DMatrix<T>) -> (f64, DMatrix<T>) {
        let plain = self.bound_of(c, self.polish(c, hermitian(x)));
        let weighted = match self.weighted_correction(c, x) {
            Some(xw) => self.bound_of(c, self.polish(c, xw)),
            None => (f64::INFINITY, x.clone()),
        };
        if weighted.0 < plain.0 {
            weighted
        } else {
            plain
        }
    }

    fn polish(&self, c: &DVector<f64>, mut xc: DMatrix<T>) -> DMatrix<T> {
        for _ in 0..3 {
            let r = self.project_out_kernel(&(c - self.apply(&xc)));
            let lam = self.pinv_apply(&r);
            xc += self.adjoint(&lam);
            xc = hermitian(&xc);
        }
        xc
    }

    fn weighted_correction(&self, c: &DVector<f64>, x: &DMatrix<T>) -> Option<DMatrix<T>> {
        let mut xc = hermitian(x);
        let m = self.m();
        let mut mm = self.schur(&xc, &xc);
        let ridge = (0..m).map(|i| mm[(i, i)]).fold(0.0, f64::max).max(1e-300);
        if self.kernel.ncols() > 0 {
            mm += &self.kernel * self.kernel.transpose() * ridge;
        }
        for i in 0..m {
            mm[(i, i)] += 1e-13 * ridge;
        }
        let chol = mm.cholesky()?;
        let base = xc.clone();
        for _ in 0..2 {
            let r = self.project_out_kernel(&(c - self.apply(&xc)));
            let lam = self.project_out_kernel(&chol.solve(&r));
            xc += &base * self.adjoint(&lam) * &base;
            xc = hermitian(&xc);
        }
        Some(xc)
    }

    fn bound_of(&self, c: &DVector<f64>, xc: DMatrix<T>) -> (f64, DMatrix<T>) {
        let r = self.project_out_kernel(&(c - self.apply(&xc)));
        let nuclear: f64 = xc.clone().symmetric_eigenvalues().iter().map(|v| v.abs()).sum();
        let slack = if r.norm() == 0.0 { 0.0 } else { r.norm() * self.frobenius_bound / self.sigma_min };
        (nuclear + slack, xc)
    }

    /// Solves for the objective `c` (projected off the kernel first).
    pub fn solve(&self, c: &DVector<f64>, tol: f64, max_iter: usize) -> LmiSolution<T> {
        let n = self.n;
        let m = self.m();
        let c = self.project_out_kernel(c);
        let mut x = DMatrix::<T>::identity(n, n);
        let mut y = DVector::<f64>::zeros(m);
        let mut best = LmiSolution {
            y: y.clone(),
            x: x.clone(),
            lower: 0.0,
            upper: f64::INFINITY,
            iterations: 0,
            certified: false,
        };
        if c.norm() == 0.0 {
            best.upper = 0.0;
            best.certified = true;
            best.x = DMatrix::zeros(n, n);
            return best;
        }
        // Every A_j is traceless, so 𝒜(I) = 0 and ξI + 𝒜*(G⁺c) is a primal
        // feasible start, positive definite for ξ past its lowest eigenvalue.
        let x0 = hermitian(&self.adjoint(&self.pinv_apply(&c)));
        let low = x0.clone().symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
        if self.a.iter().all(|e| e.iter().filter(|t| t.0 == t.1).all(|t| t.2.is_zero())) {
            let xi = (1.0 - low).max(1.0);
            x = x0 + DMatrix::<T>::identity(n, n) * T::from_real(xi);
        }
        let kk = &self.kernel;
        let mut stalls = 0;
        let mut last_gap = f64::INFINITY;
        for it in 1..=max_iter {
            best.iterations = it;
            let s = self.slack(&y);
            let Some(chol_s) = s.clone().cholesky() else { break };
            let sinv = chol_s.inverse();
            let mu = (x.clone() * &s).trace().real() / n as f64;
            let mut mm = self.schur(&x, &sinv);
            let rho = (0..m).map(|i| mm[(i, i)]).fold(0.0, f64::max).max(1e-300);
            if kk.ncols() > 0 {
                mm += kk * kk.transpose() * rho;
            }
            let chol_m = match mm.clone().cholesky() {
                Some(ch) => ch,
                None => {
                    for i in 0..m {
                        mm[(i, i)] += 1e-14 * rho;
                    }
                    match mm.cholesky() {
                        Some(ch) => ch,
                        None => break,
                    }
                }
            };
            let solve = |rhs: &DVector<f64>| self.project_out_kernel(&chol_m.solve(rhs));
            // Predictor.
            let dy_a = solve(&c);
            let ds_a = -self.adjoint(&dy_a);
            let dx_a = hermitian(&(-(&x) - &x * &ds_a * &sinv));
            let ap = max_step(&x, &dx_a).min(1.0);
            let ad = max_step(&s, &ds_a).min(1.0);
            let xa = &x + &dx_a * T::from_real(ap);
            let sa = &s + &ds_a * T::from_real(ad);
            let mu_aff = (xa * sa).trace().real() / n as f64;
            let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);
            // Corrector.
            let corr = &dx_a * &ds_a * &sinv;
            let rhs = &c - self.apply(&sinv) * (sigma * mu) + self.apply(&corr);
            let target = &c - self.apply(&x);
            let direction = |dy: &DVector<f64>| {
                let ds = -self.adjoint(dy);
                let dx = hermitian(&(&sinv * T::from_real(sigma * mu) - &x - &x * &ds * &sinv - &corr));
                (ds, dx)
            };
            let mut dy = solve(&rhs);
            let (mut ds, mut dx) = direction(&dy);
            // Iterative refinement against the exact map dy ↦ 𝒜(ΔX); keeps
            // primal feasibility as the Schur matrix loses conditioning.
            for _ in 0..3 {
                let e = &target - self.apply(&dx);
                if e.norm() <= 1e-15 * (1.0 + c.norm()) {
                    break;
                }
                dy += solve(&e);
                (ds, dx) = direction(&dy);
            }
            let ap = (0.98 * max_step(&x, &dx)).min(1.0);
            let ad = (0.98 * max_step(&s, &ds)).min(1.0);
            x += &dx * T::from_real(ap);
            x = hermitian(&x);
            y += &dy * ad;
            if self.slack(&y).cholesky().is_none() {
                y -= &dy * ad;
                break;
            }
            let lower = c.dot(&y);
            if lower > best.lower {
                best.lower = lower;
                best.y = y.clone();
            }
            let scale = lower.abs().max(1.0);
            let mu_now = (x.clone() * self.slack(&y)).trace().real();
            if mu_now <= tol * scale {
                let (upper, xc) = self.certify(&c, &x);
                if upper < best.upper {
                    best.upper = upper;
                    best.x = xc;
                }
                if best.upper - best.lower <= tol * best.upper.max(1.0) {
                    best.certified = true;
                    return best;
                }
            }
            let gap = best.upper - best.lower;
            if gap < 0.99 * last_gap {
                last_gap = gap;
                stalls = 0;
            } else if mu_now <= tol * scale {
                stalls += 1;
            }
            if stalls >= 8 || mu_now <= 1e-15 * scale || (ap < 1e-12 && ad < 1e-12) {
                break;
            }
        }
        let (upper, xc) = self.certify(&c, &x);
        if upper < best.upper {
            best.upper = upper;
            best.x = xc;
        }
        best.certified = best.upper - best.lower <= tol * best.upper.max(1.0);
        best
    }

    /// `M_ij = Re tr(A_i X A_j S⁻¹)`.
    fn schur(&self, x: &DMatrix<T>, sinv: &DMatrix<T>) -> DMatrix<f64> {
        let m = self.m();
        let mut out = DMatrix::<f64>::zeros(m, m);
        let xs = x.as_slice();
        let ss = sinv.as_slice();
        let n = self.n;
        for i in 0..m {
            let ai = &self.a[i];
            for j in i..m {
                let aj = &self.a[j];
                let mut acc = 0.0;
                for &(a, b, v) in ai {
                    let mut inner = T::zero();
                    for &(cc, d, w) in aj {
                        inner += xs[b + n * cc] * w * ss[d + n * a];
                    }
                    acc += (v * inner).real();
                }
                out[(i, j)] = acc;
                out[(j, i)] = acc;
            }
        }
        out
    }
}

/// Groups of constraint indices whose matrices are linked through shared
/// positions; the Gram matrix is block diagonal over these groups.
fn components<T: Field>(n: usize, a: &[Entries<T>]) -> Vec<Vec<usize>> {
    let m = a.len();
    let mut parent: Vec<usize> = (0..m).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let mut owner: std::collections::HashMap<usize, usize> = std::collections::HashMap::new();
    for (j, e) in a.iter().enumerate() {
        for &(r, c, _) in e {
            let key = r.min(c) + n * r.max(c);
            match owner.get(&key) {
                Some(&k) => {
                    let (x, y) = (find(&mut parent, j), find(&mut parent, k));
                    parent[x] = y;
                }
                None => {
                    owner.insert(key, j);
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = std::collections::BTreeMap::new();
    for j in 0..m {
        let r = find(&mut parent, j);
        groups.entry(r).or_default().push(j);
    }
    groups.into_values().collect()
}

/// Eigendecomposition of a symmetric matrix that is block diagonal over `groups`.
fn block_eigen(g: &DMatrix<f64>, groups: &[Vec<usize>]) -> nalgebra::SymmetricEigen<f64, nalgebra::Dyn> {
    let m = g.nrows();
    let mut values = DVector::zeros(m);
    let mut vectors = DMatrix::zeros(m, m);
    let mut col = 0;
    for grp in groups {
        let sub = DMatrix::from_fn(grp.len(), grp.len(), |i, j| g[(grp[i], grp[j])]);
        let e = sub.symmetric_eigen();
        for k in 0..grp.len() {
            values[col] = e.eigenvalues[k];
            for (i, &gi) in grp.iter().enumerate() {
                vectors[(gi, col)] = e.eigenvectors[(i, k)];
            }
            col += 1;
        }
    }
    nalgebra::SymmetricEigen { eigenvectors: vectors, eigenvalues: values }
}

fn gram<T: Field>(n: usize, a: &[Entries<T>]) -> DMatrix<f64> {
    let m = a.len();
    let mut by_pos: std::collections::HashMap<usize, Vec<(usize, T)>> = std::collections::HashMap::new();
    for (j, e) in a.iter().enumerate() {
        for &(r, c, v) in e {
            by_pos.entry(r + n * c).or_default().push((j, v));
        }
    }
    let mut g = DMatrix::<f64>::zeros(m, m);
    for (i, e) in a.iter().enumerate() {
        for &(r, c, v) in e {
            if let Some(list) = by_pos.get(&(c + n * r)) {
                for &(j, w) in list {
                    g[(i, j)] += (v * w).real();
                }
            }
        }
    }
    g
}

fn hermitian<T: Field>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.adjoint()) * T::from_real(0.5)
}

/// Largest `α` with `X + α ΔX ⪰ 0`, for `X ≻ 0`.
fn max_step<T: Field>(x: &DMatrix<T>, dx: &DMatrix<T>) -> f64 {
    let Some(ch) = x.clone().cholesky() else { return 0.0 };
    let l = ch.l();
    let Some(z) = l.solve_lower_triangular(dx) else { return 0.0 };
    let Some(w) = l.solve_lower_triangular(&z.adjoint()) else { return 0.0 };
    let lmin = hermitian(&w).symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
    if lmin >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lmin
    }
}

/// Converts complex Hermitian entries to the working field.
pub fn entries_from(entries: &[(usize, usize, Complex64)]) -> Entries<Complex64> {
    entries.to_vec()
}

pub fn real_entries(entries: &[(usize, usize, Complex64)]) -> Entries<f64> {
    entries.iter().map(|&(r, c, v)| (r, c, v.re)).collect()
}

/// Dense complex copy of a working-field matrix.
pub fn to_complex<T: Field>(m: &DMatrix<T>) -> ComplexMatrix {
    m.map(|v| v.to_c())
}
