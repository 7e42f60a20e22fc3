//! Dense complex matrices and operator subspaces.
//!
//! Matrices are `nalgebra` dense matrices over `Complex64`. Subspaces of
//! operators are kept as Hilbert–Schmidt orthonormal bases.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ComplexMatrix = DMatrix<Complex64>;
pub type ComplexVector = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

/// Default relative singular-value cutoff for spans.
pub const SPAN_REL_TOL: f64 = 1e-9;

/// Allowed `‖M − M*‖_HS / max(1, ‖M‖_HS)` before a matrix is rejected as non-Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-8;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn zeros(rows: usize, cols: usize) -> ComplexMatrix {
    ComplexMatrix::zeros(rows, cols)
}

pub fn identity(n: usize) -> ComplexMatrix {
    ComplexMatrix::identity(n, n)
}

/// Matrix unit `e_ij` in an `rows × cols` matrix space.
pub fn unit(rows: usize, cols: usize, i: usize, j: usize) -> ComplexMatrix {
    let mut m = zeros(rows, cols);
    m[(i, j)] = ONE;
    m
}

pub fn from_real(rows: usize, cols: usize, data_row_major: &[f64]) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |i, j| c(data_row_major[i * cols + j], 0.0))
}

pub fn diag(values: &[Complex64]) -> ComplexMatrix {
    ComplexMatrix::from_diagonal(&ComplexVector::from_column_slice(values))
}

pub fn diag_real(values: &[f64]) -> ComplexMatrix {
    ComplexMatrix::from_fn(values.len(), values.len(), |i, j| {
        if i == j {
            c(values[i], 0.0)
        } else {
            ZERO
        }
    })
}

pub fn commutator(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a * b - b * a
}

pub fn anticommutator(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a * b + b * a
}

pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

/// Block-diagonal matrix with the given blocks.
pub fn block_diag(blocks: &[&ComplexMatrix]) -> ComplexMatrix {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut m = zeros(rows, cols);
    let (mut r, mut c0) = (0, 0);
    for b in blocks {
        m.view_mut((r, c0), (b.nrows(), b.ncols())).copy_from(*b);
        r += b.nrows();
        c0 += b.ncols();
    }
    m
}

pub fn trace(m: &ComplexMatrix) -> Complex64 {
    m.diagonal().iter().sum()
}

/// `tr(a* b)`.
pub fn hs_inner(a: &ComplexMatrix, b: &ComplexMatrix) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn hs_norm(m: &ComplexMatrix) -> f64 {
    m.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs(m: &ComplexMatrix) -> f64 {
    m.iter().map(|x| x.norm()).fold(0.0, f64::max)
}

pub fn hermitian_part(m: &ComplexMatrix) -> ComplexMatrix {
    (m + m.adjoint()).scale(0.5)
}

pub fn hermiticity_defect(m: &ComplexMatrix) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    hs_norm(&(m - m.adjoint()))
}

pub fn is_hermitian(m: &ComplexMatrix, tol: f64) -> bool {
    m.is_square() && hermiticity_defect(m) <= tol * hs_norm(m).max(1.0)
}

pub fn is_real(m: &ComplexMatrix) -> bool {
    m.iter().all(|x| x.im == 0.0)
}

/// Eigendecomposition of a Hermitian matrix. The input is symmetrized first.
/// Eigenvalues are returned in ascending order with matching eigenvector columns.
pub fn herm_eig(m: &ComplexMatrix) -> Result<(Vec<f64>, ComplexMatrix)> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "herm_eig needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if !is_hermitian(m, HERMITIAN_TOL) {
        return Err(Error::Argument(format!(
            "matrix is not Hermitian (defect {:.3e})",
            hermiticity_defect(m)
        )));
    }
    let n = m.nrows();
    if n == 0 {
        return Ok((Vec::new(), zeros(0, 0)));
    }
    let eig = hermitian_part(m).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut u = zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        u.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok((values, u))
}

/// Eigenvalues only, ascending.
pub fn herm_eigenvalues(m: &ComplexMatrix) -> Result<Vec<f64>> {
    if !m.is_square() {
        return Err(Error::Dimension("eigenvalues of a non-square matrix".into()));
    }
    if !is_hermitian(m, HERMITIAN_TOL) {
        return Err(Error::Argument(format!(
            "matrix is not Hermitian (defect {:.3e})",
            hermiticity_defect(m)
        )));
    }
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    let mut v: Vec<f64> = hermitian_part(m).symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

pub fn singular_values(m: &ComplexMatrix) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Largest singular value.
pub fn operator_norm(m: &ComplexMatrix) -> f64 {
    if max_abs(m) == 0.0 {
        return 0.0;
    }
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Matrix exponential of an anti-Hermitian matrix, computed through the
/// eigendecomposition of `-i·G`, so the result is unitary to round-off.
pub fn exp_anti_hermitian(g: &ComplexMatrix) -> Result<ComplexMatrix> {
    let h = g.scale(1.0) * (-I);
    let (vals, u) = herm_eig(&h)?;
    let phases: Vec<Complex64> = vals.iter().map(|&l| (I * l).exp()).collect();
    Ok(&u * diag(&phases) * u.adjoint())
}

pub fn vec_of(m: &ComplexMatrix) -> ComplexVector {
    ComplexVector::from_column_slice(m.as_slice())
}

pub fn matrix_of(v: &[Complex64], rows: usize, cols: usize) -> ComplexMatrix {
    ComplexMatrix::from_column_slice(rows, cols, v)
}

/// A subspace of `rows × cols` operators, held as a Hilbert–Schmidt orthonormal basis.
#[derive(Clone, Debug)]
pub struct OperatorSubspace {
    pub rows: usize,
    pub cols: usize,
    pub basis: Vec<ComplexMatrix>,
    pub tolerance: f64,
}

impl OperatorSubspace {
    pub fn zero(rows: usize, cols: usize) -> Self {
        OperatorSubspace { rows, cols, basis: Vec::new(), tolerance: SPAN_REL_TOL }
    }

    pub fn ambient_dim(&self) -> usize {
        self.rows * self.cols
    }

    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    pub fn coefficients(&self, m: &ComplexMatrix) -> Vec<Complex64> {
        self.basis.iter().map(|b| hs_inner(b, m)).collect()
    }

    pub fn project(&self, m: &ComplexMatrix) -> ComplexMatrix {
        let mut p = zeros(self.rows, self.cols);
        for (b, k) in self.basis.iter().zip(self.coefficients(m)) {
            p += b.scale(1.0) * k;
        }
        p
    }

    /// HS norm of `m` minus its orthogonal projection.
    pub fn residual(&self, m: &ComplexMatrix) -> f64 {
        let coeffs = self.coefficients(m);
        let total = m.iter().map(|x| x.norm_sqr()).sum::<f64>();
        let inside = coeffs.iter().map(|x| x.norm_sqr()).sum::<f64>();
        let quick = (total - inside).max(0.0);
        // The Pythagorean shortcut loses accuracy when the residual is tiny
        // relative to m, so fall back to the explicit difference there.
        if quick > 1e-12 * total {
            quick.sqrt()
        } else {
            hs_norm(&(m - self.project(m)))
        }
    }

    pub fn contains(&self, m: &ComplexMatrix) -> (bool, f64) {
        if m.nrows() != self.rows || m.ncols() != self.cols {
            return (false, f64::INFINITY);
        }
        let r = self.residual(m);
        (r <= self.tolerance * hs_norm(m).max(1.0), r)
    }

    /// Whether every basis element of `other` lies in `self`; returns the worst residual.
    pub fn contains_subspace(&self, other: &OperatorSubspace) -> (bool, f64) {
        let mut worst = 0.0f64;
        let mut ok = true;
        for b in &other.basis {
            let (inside, r) = self.contains(b);
            ok &= inside;
            worst = worst.max(r);
        }
        (ok, worst)
    }

    /// `max |⟨b_i, b_j⟩ − δ_ij|`.
    pub fn orthonormality_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for (i, a) in self.basis.iter().enumerate() {
            for (j, b) in self.basis.iter().enumerate().skip(i) {
                let target = if i == j { ONE } else { ZERO };
                worst = worst.max((hs_inner(a, b) - target).norm());
            }
        }
        worst
    }
}

type SparseVec = Vec<(usize, Complex64)>;

fn sparse_of(m: &ComplexMatrix) -> SparseVec {
    m.as_slice()
        .iter()
        .enumerate()
        .filter(|(_, x)| x.re != 0.0 || x.im != 0.0)
        .map(|(p, x)| (p, *x))
        .collect()
}

/// Modified Gram–Schmidt with one reorthogonalization pass, exploiting
/// sparsity through a position index. With `real_linear` the inner product is
/// `Re⟨u,v⟩` and coefficients are real. Vectors whose residual norm is at most
/// `threshold` are dropped.
pub(crate) fn gram_schmidt(
    vectors: &[SparseVec],
    dim: usize,
    real_linear: bool,
    threshold: f64,
    max_rank: Option<usize>,
) -> Vec<SparseVec> {
    let mut basis: Vec<SparseVec> = Vec::new();
    let mut index: Vec<Vec<u32>> = vec![Vec::new(); dim];
    let mut scratch = vec![ZERO; dim];
    let mut touched = vec![false; dim];
    let mut support: Vec<usize> = Vec::new();
    let mut stamp = vec![usize::MAX; 0];
    for (vid, v) in vectors.iter().enumerate() {
        if let Some(cap) = max_rank {
            if basis.len() >= cap {
                break;
            }
        }
        support.clear();
        for &(p, x) in v {
            scratch[p] += x;
            if !touched[p] {
                touched[p] = true;
                support.push(p);
            }
        }
        if stamp.len() < basis.len() {
            stamp.resize(basis.len(), usize::MAX);
        }
        for pass in 0..2 {
            let mut cands: Vec<usize> = Vec::new();
            let tag = vid * 2 + pass;
            for &p in &support {
                for &b in &index[p] {
                    let b = b as usize;
                    if stamp[b] != tag {
                        stamp[b] = tag;
                        cands.push(b);
                    }
                }
            }
            cands.sort_unstable();
            for b in cands {
                let mut coef: Complex64 = basis[b].iter().map(|&(p, x)| x.conj() * scratch[p]).sum();
                if real_linear {
                    coef.im = 0.0;
                }
                if coef == ZERO {
                    continue;
                }
                for &(p, x) in &basis[b] {
                    scratch[p] -= coef * x;
                    if !touched[p] {
                        touched[p] = true;
                        support.push(p);
                    }
                }
            }
        }
        let norm = support.iter().map(|&p| scratch[p].norm_sqr()).sum::<f64>().sqrt();
        if norm > threshold {
            support.sort_unstable();
            let mut nv = SparseVec::with_capacity(support.len());
            for &p in &support {
                let x = scratch[p] / norm;
                if x.re != 0.0 || x.im != 0.0 {
                    nv.push((p, x));
                    index[p].push(basis.len() as u32);
                }
            }
            basis.push(nv);
        }
        for &p in &support {
            scratch[p] = ZERO;
            touched[p] = false;
        }
    }
    basis
}

fn dense_of(v: &SparseVec, rows: usize, cols: usize) -> ComplexMatrix {
    let mut m = zeros(rows, cols);
    let s = m.as_mut_slice();
    for &(p, x) in v {
        s[p] = x;
    }
    m
}

/// Orthonormal HS basis of the complex linear span of `spanners`.
///
/// Rank is fixed by the singular values of the stacked spanners (cutoff
/// `rel_tol × σ_max`) whenever that decomposition is affordable; the basis
/// itself comes from Gram–Schmidt in construction order, falling back to the
/// left singular vectors if the two disagree on the rank.
pub fn subspace_span(spanners: &[ComplexMatrix], rel_tol: f64) -> Result<OperatorSubspace> {
    let Some(first) = spanners.first() else {
        return Ok(OperatorSubspace::zero(0, 0));
    };
    let (rows, cols) = first.shape();
    if spanners.iter().any(|s| s.shape() != (rows, cols)) {
        return Err(Error::Dimension("spanners must share dimensions".into()));
    }
    let dim = rows * cols;
    let max_norm = spanners.iter().map(hs_norm).fold(0.0, f64::max);
    let mut out = OperatorSubspace { rows, cols, basis: Vec::new(), tolerance: SPAN_REL_TOL.max(rel_tol) };
    if max_norm == 0.0 {
        return Ok(out);
    }
    let sparse: Vec<SparseVec> = spanners.iter().map(sparse_of).collect();
    let k = spanners.len();
    let small = (dim as f64) * (k as f64) * (dim.min(k) as f64) <= 2e8;
    if small {
        let stacked = ComplexMatrix::from_fn(dim, k, |p, j| spanners[j].as_slice()[p]);
        let svd = stacked.svd(true, false);
        let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
        let cutoff = rel_tol * smax;
        let rank = svd.singular_values.iter().filter(|&&s| s > cutoff).count();
        let mgs = gram_schmidt(&sparse, dim, false, cutoff, Some(rank));
        if mgs.len() == rank {
            out.basis = mgs.iter().map(|v| dense_of(v, rows, cols)).collect();
        } else {
            let u = svd.u.expect("requested left vectors");
            let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
            idx.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
            out.basis = idx[..rank]
                .iter()
                .map(|&j| matrix_of(u.column(j).as_slice(), rows, cols))
                .collect();
        }
    } else {
        let mgs = gram_schmidt(&sparse, dim, false, rel_tol * max_norm, Some(dim));
        out.basis = mgs.iter().map(|v| dense_of(v, rows, cols)).collect();
    }
    Ok(out)
}

/// Convenience wrapper returning `(contains, residual)`.
pub fn subspace_contains(s: &OperatorSubspace, m: &ComplexMatrix) -> (bool, f64) {
    s.contains(m)
}

/// Orthonormal basis of the real-linear span of Hermitian matrices, under
/// `Re tr(a* b)`.
pub fn hermitian_span(spanners: &[ComplexMatrix], rel_tol: f64) -> Vec<ComplexMatrix> {
    let Some(first) = spanners.first() else {
        return Vec::new();
    };
    let (rows, cols) = first.shape();
    let max_norm = spanners.iter().map(hs_norm).fold(0.0, f64::max);
    if max_norm == 0.0 {
        return Vec::new();
    }
    let sparse: Vec<SparseVec> = spanners.iter().map(sparse_of).collect();
    gram_schmidt(&sparse, rows * cols, true, rel_tol * max_norm, None)
        .iter()
        .map(|v| dense_of(v, rows, cols))
        .collect()
}

/// Coordinate-list matrix for the structured, mostly-empty operators that
/// parametrize large algebras.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<(usize, usize, Complex64)>,
}

impl SparseMatrix {
    pub fn new(rows: usize, cols: usize) -> Self {
        SparseMatrix { rows, cols, entries: Vec::new() }
    }

    /// Nonzero entries of a dense matrix, in row-major order.
    pub fn from_dense(m: &ComplexMatrix) -> Self {
        let mut entries = Vec::new();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let x = m[(i, j)];
                if x != ZERO {
                    entries.push((i, j, x));
                }
            }
        }
        SparseMatrix { rows: m.nrows(), cols: m.ncols(), entries }
    }

    pub fn to_dense(&self) -> ComplexMatrix {
        let mut m = zeros(self.rows, self.cols);
        for &(i, j, x) in &self.entries {
            m[(i, j)] += x;
        }
        m
    }

    pub fn push(&mut self, i: usize, j: usize, x: Complex64) {
        self.entries.push((i, j, x));
    }

    /// Sums duplicate coordinates, drops exact zeros, sorts row-major.
    pub fn compress(mut self) -> Self {
        self.entries.sort_by_key(|&(i, j, _)| (i, j));
        let mut out: Vec<(usize, usize, Complex64)> = Vec::with_capacity(self.entries.len());
        for (i, j, x) in self.entries {
            match out.last_mut() {
                Some(last) if last.0 == i && last.1 == j => last.2 += x,
                _ => out.push((i, j, x)),
            }
        }
        out.retain(|e| e.2 != ZERO);
        SparseMatrix { rows: self.rows, cols: self.cols, entries: out }
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn scale(&self, k: Complex64) -> Self {
        SparseMatrix {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(|&(i, j, x)| (i, j, x * k)).collect(),
        }
    }

    pub fn adjoint(&self) -> Self {
        SparseMatrix {
            rows: self.cols,
            cols: self.rows,
            entries: self.entries.iter().map(|&(i, j, x)| (j, i, x.conj())).collect(),
        }
    }

    /// `self · m` for dense `m`.
    pub fn mul_dense(&self, m: &ComplexMatrix) -> ComplexMatrix {
        let mut out = zeros(self.rows, m.ncols());
        for &(i, j, x) in &self.entries {
            for k in 0..m.ncols() {
                out[(i, k)] += x * m[(j, k)];
            }
        }
        out
    }

    /// `m · self` for dense `m`.
    pub fn dense_mul(&self, m: &ComplexMatrix) -> ComplexMatrix {
        let mut out = zeros(m.nrows(), self.cols);
        for &(i, j, x) in &self.entries {
            for k in 0..m.nrows() {
                out[(k, j)] += m[(k, i)] * x;
            }
        }
        out
    }

    /// `[d, self]` for dense `d`, returned sparse when `d` is sparse enough to keep it so.
    pub fn commutator_with(&self, d: &SparseMatrix) -> SparseMatrix {
        let mut by_row: Vec<Vec<(usize, Complex64)>> = vec![Vec::new(); d.cols.max(self.rows)];
        for &(i, j, x) in &self.entries {
            by_row[i].push((j, x));
        }
        let mut d_by_row: Vec<Vec<(usize, Complex64)>> = vec![Vec::new(); d.rows.max(self.cols)];
        for &(i, j, x) in &d.entries {
            d_by_row[i].push((j, x));
        }
        let mut out = SparseMatrix::new(d.rows, self.cols);
        // d · a
        for &(i, k, x) in &d.entries {
            for &(j, y) in &by_row[k] {
                out.push(i, j, x * y);
            }
        }
        // a · d
        for &(i, k, y) in &self.entries {
            for &(j, x) in &d_by_row[k] {
                out.push(i, j, -(y * x));
            }
        }
        out.compress()
    }

    /// `tr(rho · self)`.
    pub fn trace_against(&self, rho: &ComplexMatrix) -> Complex64 {
        self.entries.iter().map(|&(i, j, x)| x * rho[(j, i)]).sum()
    }

    pub fn hs_norm(&self) -> f64 {
        self.to_dense_norm_sqr().sqrt()
    }

    fn to_dense_norm_sqr(&self) -> f64 {
        self.clone().compress().entries.iter().map(|e| e.2.norm_sqr()).sum()
    }

    /// Kronecker product `I_k ⊗ self`.
    pub fn amplify(&self, k: usize) -> SparseMatrix {
        let mut out = SparseMatrix::new(self.rows * k, self.cols * k);
        for b in 0..k {
            for &(i, j, x) in &self.entries {
                out.push(b * self.rows + i, b * self.cols + j, x);
            }
        }
        out
    }
}

/// JSON form `{rows, cols, re, im}` with entries in row-major order.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub re: Vec<f64>,
    #[serde(default)]
    pub im: Vec<f64>,
}

impl MatrixJson {
    pub fn from_matrix(m: &ComplexMatrix) -> Self {
        let (rows, cols) = m.shape();
        let mut re = Vec::with_capacity(rows * cols);
        let mut im = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                re.push(m[(i, j)].re);
                im.push(m[(i, j)].im);
            }
        }
        MatrixJson { rows, cols, re, im }
    }

    pub fn to_matrix(&self) -> Result<ComplexMatrix> {
        let n = self.rows * self.cols;
        if self.re.len() != n || !(self.im.is_empty() || self.im.len() == n) {
            return Err(Error::Parse(format!(
                "matrix {}x{} needs {} entries, got re={} im={}",
                self.rows,
                self.cols,
                n,
                self.re.len(),
                self.im.len()
            )));
        }
        Ok(ComplexMatrix::from_fn(self.rows, self.cols, |i, j| {
            let p = i * self.cols + j;
            c(self.re[p], self.im.get(p).copied().unwrap_or(0.0))
        }))
    }
}

/// `#[serde(with = "...")]` adapter for matrix fields.
pub mod serde_matrix {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &ComplexMatrix, s: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixJson::from_matrix(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<ComplexMatrix, D::Error> {
        let j = MatrixJson::deserialize(d)?;
        j.to_matrix().map_err(serde::de::Error::custom)
    }
}

pub mod serde_matrix_opt {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &Option<ComplexMatrix>, s: S) -> std::result::Result<S::Ok, S::Error> {
        m.as_ref().map(MatrixJson::from_matrix).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<ComplexMatrix>, D::Error> {
        let j: Option<MatrixJson> = Option::deserialize(d)?;
        j.map(|j| j.to_matrix().map_err(serde::de::Error::custom)).transpose()
    }
}

pub mod serde_matrix_vec {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &[ComplexMatrix], s: S) -> std::result::Result<S::Ok, S::Error> {
        m.iter().map(MatrixJson::from_matrix).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<ComplexMatrix>, D::Error> {
        let j: Vec<MatrixJson> = Vec::deserialize(d)?;
        j.iter().map(|m| m.to_matrix().map_err(serde::de::Error::custom)).collect()
    }
}

/// Seeded random test data.
pub mod random {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub type TestRng = ChaCha8Rng;

    pub fn rng(seed: u64) -> TestRng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    pub fn complex<R: Rng>(rng: &mut R) -> Complex64 {
        c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    }

    pub fn matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> ComplexMatrix {
        ComplexMatrix::from_fn(rows, cols, |_, _| complex(rng))
    }

    pub fn hermitian<R: Rng>(n: usize, rng: &mut R) -> ComplexMatrix {
        hermitian_part(&matrix(n, n, rng))
    }

    pub fn unitary<R: Rng>(n: usize, rng: &mut R) -> ComplexMatrix {
        let qr = matrix(n, n, rng).qr();
        qr.q()
    }

    pub fn unit_vector<R: Rng>(n: usize, rng: &mut R) -> ComplexVector {
        let v = ComplexVector::from_fn(n, |_, _| complex(rng));
        let norm = v.norm();
        v / c(norm, 0.0)
    }

    /// Orthogonal projection of the given rank onto a random subspace of `C^n`.
    pub fn projection<R: Rng>(n: usize, rank: usize, rng: &mut R) -> ComplexMatrix {
        let u = unitary(n, rng);
        let cols = u.columns(0, rank);
        &cols * cols.adjoint()
    }

    pub fn state_density<R: Rng>(n: usize, rng: &mut R) -> ComplexMatrix {
        let a = matrix(n, n, rng);
        let rho = &a * a.adjoint();
        let t = trace(&rho);
        rho / t
    }
}
