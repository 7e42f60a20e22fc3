//! Finite-dimensional *-algebras of operators and their states.

use std::sync::OnceLock;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{
    self, c, herm_eigenvalues, hs_norm, subspace_span, ComplexMatrix, ComplexVector, MatrixJson,
    OperatorSubspace, SparseMatrix, I, ONE, SPAN_REL_TOL, ZERO,
};
use crate::report::ValidationReport;

/// Relative tolerance for closure checks.
pub const CLOSURE_TOL: f64 = 1e-10;

/// A full matrix block `M_size` repeated at each offset along the diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub size: usize,
    pub offsets: Vec<usize>,
}

#[derive(Clone, Debug)]
enum Basis {
    /// `⊕ M_{n_k}`, each summand embedded (possibly repeatedly) along the diagonal.
    Blocks(Vec<Block>),
    Explicit(Vec<ComplexMatrix>),
}

/// A *-closed linear span of operators on `C^hilbert_dim` with an explicit basis.
#[derive(Clone, Debug)]
pub struct MatrixAlgebra {
    pub hilbert_dim: usize,
    pub unital: bool,
    basis: Basis,
    span: OnceLock<OperatorSubspace>,
}

impl PartialEq for MatrixAlgebra {
    fn eq(&self, other: &Self) -> bool {
        if self.hilbert_dim != other.hilbert_dim || self.unital != other.unital {
            return false;
        }
        match (&self.basis, &other.basis) {
            (Basis::Blocks(a), Basis::Blocks(b)) => a == b,
            _ => self.dim() == other.dim() && self.basis() == other.basis(),
        }
    }
}

pub fn full_matrix_algebra(n: usize) -> Result<MatrixAlgebra> {
    if n == 0 {
        return Err(Error::Dimension("full_matrix_algebra needs n >= 1".into()));
    }
    Ok(MatrixAlgebra::from_blocks(n, vec![Block { size: n, offsets: vec![0] }]))
}

pub fn diagonal_algebra(n: usize) -> Result<MatrixAlgebra> {
    if n == 0 {
        return Err(Error::Dimension("diagonal_algebra needs n >= 1".into()));
    }
    Ok(MatrixAlgebra::from_blocks(n, (0..n).map(|i| Block { size: 1, offsets: vec![i] }).collect()))
}

/// Block-diagonal direct sum.
pub fn direct_sum(parts: &[MatrixAlgebra]) -> Result<MatrixAlgebra> {
    if parts.is_empty() {
        return Err(Error::Argument("direct_sum of an empty list".into()));
    }
    let total: usize = parts.iter().map(|p| p.hilbert_dim).sum();
    let unital = parts.iter().all(|p| p.unital);
    if parts.iter().all(|p| matches!(p.basis, Basis::Blocks(_))) {
        let mut blocks = Vec::new();
        let mut shift = 0;
        for p in parts {
            if let Basis::Blocks(bs) = &p.basis {
                for b in bs {
                    blocks.push(Block { size: b.size, offsets: b.offsets.iter().map(|o| o + shift).collect() });
                }
            }
            shift += p.hilbert_dim;
        }
        let mut a = MatrixAlgebra::from_blocks(total, blocks);
        a.unital = unital;
        return Ok(a);
    }
    let mut basis = Vec::new();
    let mut shift = 0;
    for p in parts {
        for b in p.basis() {
            let mut m = matrix::zeros(total, total);
            m.view_mut((shift, shift), (p.hilbert_dim, p.hilbert_dim)).copy_from(&b);
            basis.push(m);
        }
        shift += p.hilbert_dim;
    }
    Ok(MatrixAlgebra { hilbert_dim: total, unital, basis: Basis::Explicit(basis), span: OnceLock::new() })
}

impl MatrixAlgebra {
    fn from_blocks(hilbert_dim: usize, blocks: Vec<Block>) -> Self {
        let covered: usize = blocks.iter().map(|b| b.size * b.offsets.len()).sum();
        MatrixAlgebra { hilbert_dim, unital: covered == hilbert_dim, basis: Basis::Blocks(blocks), span: OnceLock::new() }
    }

    /// Algebra from an explicit basis. The basis is taken as given; call
    /// [`MatrixAlgebra::validate`] to check independence and closure.
    pub fn from_basis(hilbert_dim: usize, basis: Vec<ComplexMatrix>, unital: bool) -> Result<Self> {
        if basis.iter().any(|b| b.nrows() != hilbert_dim || b.ncols() != hilbert_dim) {
            return Err(Error::Dimension(format!("basis elements must be {hilbert_dim}x{hilbert_dim}")));
        }
        Ok(MatrixAlgebra { hilbert_dim, unital, basis: Basis::Explicit(basis), span: OnceLock::new() })
    }

    /// Algebra spanned by the given operators, reduced to an orthonormal basis.
    pub fn spanned_by(hilbert_dim: usize, spanners: &[ComplexMatrix]) -> Result<Self> {
        let s = subspace_span(spanners, SPAN_REL_TOL)?;
        let id = matrix::identity(hilbert_dim);
        let unital = s.rank() > 0 && s.contains(&id).0;
        let a = MatrixAlgebra {
            hilbert_dim,
            unital,
            basis: Basis::Explicit(s.basis.clone()),
            span: OnceLock::new(),
        };
        let _ = a.span.set(s);
        Ok(a)
    }

    /// `{I_k ⊗ a}`: `k` diagonal copies of every element.
    pub fn amplify(&self, k: usize) -> MatrixAlgebra {
        let h = self.hilbert_dim;
        match &self.basis {
            Basis::Blocks(bs) => {
                let blocks = bs
                    .iter()
                    .map(|b| Block {
                        size: b.size,
                        offsets: (0..k).flat_map(|j| b.offsets.iter().map(move |o| o + j * h)).collect(),
                    })
                    .collect();
                let mut a = MatrixAlgebra::from_blocks(h * k, blocks);
                a.unital = self.unital;
                a
            }
            Basis::Explicit(bs) => MatrixAlgebra {
                hilbert_dim: h * k,
                unital: self.unital,
                basis: Basis::Explicit(bs.iter().map(|b| matrix::kron(&matrix::identity(k), b)).collect()),
                span: OnceLock::new(),
            },
        }
    }

    pub fn dim(&self) -> usize {
        match &self.basis {
            Basis::Blocks(bs) => bs.iter().map(|b| b.size * b.size).sum(),
            Basis::Explicit(bs) => bs.len(),
        }
    }

    pub fn blocks(&self) -> Option<&[Block]> {
        match &self.basis {
            Basis::Blocks(bs) => Some(bs),
            Basis::Explicit(_) => None,
        }
    }

    pub fn basis_sparse(&self, idx: usize) -> SparseMatrix {
        match &self.basis {
            Basis::Blocks(bs) => {
                let mut rest = idx;
                for b in bs {
                    let n2 = b.size * b.size;
                    if rest < n2 {
                        let (i, j) = (rest / b.size, rest % b.size);
                        let mut s = SparseMatrix::new(self.hilbert_dim, self.hilbert_dim);
                        for &o in &b.offsets {
                            s.push(o + i, o + j, ONE);
                        }
                        return s;
                    }
                    rest -= n2;
                }
                panic!("basis index {idx} out of range");
            }
            Basis::Explicit(bs) => SparseMatrix::from_dense(&bs[idx]),
        }
    }

    pub fn basis_element(&self, idx: usize) -> ComplexMatrix {
        match &self.basis {
            Basis::Explicit(bs) => bs[idx].clone(),
            Basis::Blocks(_) => self.basis_sparse(idx).to_dense(),
        }
    }

    /// Materialized basis. Block algebras generate it on demand.
    pub fn basis(&self) -> Vec<ComplexMatrix> {
        (0..self.dim()).map(|i| self.basis_element(i)).collect()
    }

    /// Orthonormal HS basis of the span.
    pub fn span(&self) -> &OperatorSubspace {
        self.span.get_or_init(|| match &self.basis {
            Basis::Blocks(bs) => {
                let basis = (0..self.dim())
                    .map(|i| {
                        let s = self.basis_sparse(i);
                        let k = bs_copies(bs, i) as f64;
                        s.scale(c(1.0 / k.sqrt(), 0.0)).to_dense()
                    })
                    .collect();
                OperatorSubspace { rows: self.hilbert_dim, cols: self.hilbert_dim, basis, tolerance: SPAN_REL_TOL }
            }
            Basis::Explicit(bs) => {
                let mut s = subspace_span(bs, SPAN_REL_TOL).unwrap_or_else(|_| OperatorSubspace::zero(0, 0));
                if s.rank() == 0 {
                    s = OperatorSubspace::zero(self.hilbert_dim, self.hilbert_dim);
                }
                s
            }
        })
    }

    /// Membership of `a` in the algebra, with residual.
    pub fn contains(&self, a: &ComplexMatrix) -> (bool, f64) {
        if a.nrows() != self.hilbert_dim || a.ncols() != self.hilbert_dim {
            return (false, f64::INFINITY);
        }
        if let Basis::Blocks(bs) = &self.basis {
            let r = block_residual(bs, a);
            return (r <= CLOSURE_TOL * hs_norm(a).max(1.0), r);
        }
        let (_, r) = self.span().contains(a);
        (r <= CLOSURE_TOL * hs_norm(a).max(1.0), r)
    }

    /// Real-linear basis of the self-adjoint part, orthonormal under `Re tr(a b)`.
    pub fn hermitian_basis(&self) -> Vec<ComplexMatrix> {
        self.hermitian_basis_sparse().iter().map(|s| s.to_dense()).collect()
    }

    /// Same as [`MatrixAlgebra::hermitian_basis`], in sparse form. For block
    /// algebras this is `e_ii`, `(e_ij + e_ji)/√2`, `i(e_ij − e_ji)/√2` per block,
    /// normalized over the repeated copies.
    pub fn hermitian_basis_sparse(&self) -> Vec<SparseMatrix> {
        match &self.basis {
            Basis::Blocks(bs) => {
                let h = self.hilbert_dim;
                let mut out = Vec::with_capacity(self.dim());
                let r2 = std::f64::consts::FRAC_1_SQRT_2;
                for b in bs {
                    let w = 1.0 / (b.offsets.len() as f64).sqrt();
                    for i in 0..b.size {
                        for j in i..b.size {
                            if i == j {
                                let mut s = SparseMatrix::new(h, h);
                                for &o in &b.offsets {
                                    s.push(o + i, o + i, c(w, 0.0));
                                }
                                out.push(s);
                            } else {
                                let mut re = SparseMatrix::new(h, h);
                                let mut im = SparseMatrix::new(h, h);
                                for &o in &b.offsets {
                                    re.push(o + i, o + j, c(w * r2, 0.0));
                                    re.push(o + j, o + i, c(w * r2, 0.0));
                                    im.push(o + i, o + j, c(0.0, w * r2));
                                    im.push(o + j, o + i, c(0.0, -w * r2));
                                }
                                out.push(re);
                                out.push(im);
                            }
                        }
                    }
                }
                out
            }
            Basis::Explicit(bs) => {
                let mut gens = Vec::with_capacity(2 * bs.len());
                for b in bs {
                    gens.push(matrix::hermitian_part(b));
                    gens.push(matrix::hermitian_part(&(b * (-I))));
                }
                matrix::hermitian_span(&gens, SPAN_REL_TOL).iter().map(SparseMatrix::from_dense).collect()
            }
        }
    }

    /// Independence, *-closure, and unit checks. Products are checked on all
    /// basis pairs for small algebras and on a seeded sample otherwise.
    pub fn validate(&self) -> ValidationReport {
        let mut rep = ValidationReport::new();
        let d = self.dim();
        let basis = self.basis();
        let rank = self.span().rank();
        rep.push("basis_independent", rank == d, (d as f64 - rank as f64).abs());
        let pairs: Vec<(usize, usize)> = if d <= 16 {
            (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).collect()
        } else {
            let mut rng = matrix::random::rng(0x5eed);
            (0..64).map(|_| (rng.gen_range(0..d), rng.gen_range(0..d))).collect()
        };
        let mut prod = 0.0f64;
        for (i, j) in pairs {
            let p = &basis[i] * &basis[j];
            prod = prod.max(self.contains(&p).1 / hs_norm(&p).max(1.0));
        }
        rep.push("product_closure", prod <= CLOSURE_TOL, prod);
        let mut adj = 0.0f64;
        for b in &basis {
            adj = adj.max(self.contains(&b.adjoint()).1 / hs_norm(b).max(1.0));
        }
        rep.push("adjoint_closure", adj <= CLOSURE_TOL, adj);
        if self.unital {
            let (ok, r) = self.contains(&matrix::identity(self.hilbert_dim));
            rep.push("unit", ok, r);
        }
        rep
    }

    /// A random element (complex coefficients in `[-1,1]²`).
    pub fn random_element<R: Rng>(&self, rng: &mut R) -> ComplexMatrix {
        let mut m = matrix::zeros(self.hilbert_dim, self.hilbert_dim);
        for i in 0..self.dim() {
            let k = matrix::random::complex(rng);
            for &(r, cc, x) in &self.basis_sparse(i).entries {
                m[(r, cc)] += x * k;
            }
        }
        m
    }

    pub fn random_hermitian<R: Rng>(&self, rng: &mut R) -> ComplexMatrix {
        matrix::hermitian_part(&self.random_element(rng))
    }

    pub fn to_json(&self) -> AlgebraJson {
        AlgebraJson {
            hilbert_dim: self.hilbert_dim,
            unital: self.unital,
            basis: self.basis().iter().map(MatrixJson::from_matrix).collect(),
        }
    }
}

fn bs_copies(bs: &[Block], idx: usize) -> usize {
    let mut rest = idx;
    for b in bs {
        if rest < b.size * b.size {
            return b.offsets.len();
        }
        rest -= b.size * b.size;
    }
    1
}

/// Distance from `a` to the block algebra: everything off the blocks, plus the
/// spread of each entry across its repeated copies.
fn block_residual(bs: &[Block], a: &ComplexMatrix) -> f64 {
    let mut on_block = vec![vec![false; a.ncols()]; a.nrows()];
    let mut acc = 0.0f64;
    for b in bs {
        for i in 0..b.size {
            for j in 0..b.size {
                let vals: Vec<Complex64> = b.offsets.iter().map(|&o| a[(o + i, o + j)]).collect();
                let mean = vals.iter().sum::<Complex64>() / c(vals.len() as f64, 0.0);
                acc += vals.iter().map(|v| (v - mean).norm_sqr()).sum::<f64>();
                for &o in &b.offsets {
                    on_block[o + i][o + j] = true;
                }
            }
        }
    }
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            if !on_block[i][j] {
                acc += a[(i, j)].norm_sqr();
            }
        }
    }
    acc.sqrt()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AlgebraJson {
    pub hilbert_dim: usize,
    pub unital: bool,
    pub basis: Vec<MatrixJson>,
}

impl AlgebraJson {
    pub fn to_algebra(&self) -> Result<MatrixAlgebra> {
        let basis = self.basis.iter().map(|m| m.to_matrix()).collect::<Result<Vec<_>>>()?;
        MatrixAlgebra::from_basis(self.hilbert_dim, basis, self.unital)
    }
}

/// Positive trace-one density matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct State {
    #[serde(with = "crate::matrix::serde_matrix")]
    pub rho: ComplexMatrix,
}

impl State {
    /// Density matrix, validated: Hermitian, eigenvalues ≥ −1e-12, trace 1 within 1e-12.
    pub fn new(rho: ComplexMatrix) -> Result<Self> {
        if !rho.is_square() {
            return Err(Error::Dimension("density matrix must be square".into()));
        }
        let eig = herm_eigenvalues(&rho)?;
        if eig.first().copied().unwrap_or(0.0) < -1e-12 {
            return Err(Error::Argument(format!("density matrix not positive (min eigenvalue {:.3e})", eig[0])));
        }
        let t = matrix::trace(&rho);
        if (t - ONE).norm() > 1e-12 {
            return Err(Error::Argument(format!("density matrix trace {t} != 1")));
        }
        Ok(State { rho: matrix::hermitian_part(&rho) })
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn is_real(&self) -> bool {
        matrix::is_real(&self.rho)
    }
}

pub fn vector_state(psi: &ComplexVector) -> Result<State> {
    let norm = psi.norm();
    if norm == 0.0 {
        return Err(Error::Argument("zero vector".into()));
    }
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::Argument(format!("vector norm {norm} is not 1")));
    }
    let rho = psi * psi.adjoint();
    let t = matrix::trace(&rho);
    Ok(State { rho: matrix::hermitian_part(&(rho / t)) })
}

/// `Tr(ρ a)`.
pub fn evaluate(phi: &State, a: &ComplexMatrix) -> Result<Complex64> {
    if a.shape() != phi.rho.shape() {
        return Err(Error::Dimension(format!(
            "state on dim {} evaluated on {}x{}",
            phi.dim(),
            a.nrows(),
            a.ncols()
        )));
    }
    let mut s = ZERO;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            s += phi.rho[(i, j)] * a[(j, i)];
        }
    }
    Ok(s)
}

pub fn evaluate_sparse(phi: &State, a: &SparseMatrix) -> Complex64 {
    a.trace_against(&phi.rho)
}
