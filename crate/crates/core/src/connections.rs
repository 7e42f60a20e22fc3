//! Modules, connections, fluctuated triples and correspondences.
//!
//! Every module is realized concretely: an element `η` of a right `A`-module
//! `E` is an operator `H → C^P`, the right action is `η ↦ ηa`, and the
//! Hermitian structure is `(η, ξ) = η*ξ ∈ A`. A frame `{u_i} ⊂ E` with
//! `Σ u_i u_i* = Π` (the projection onto the range) gives `E = Σ u_i A`. The
//! balanced tensor product `E ⊗_A H` is then the range of `Π` via `η ⊗ ψ ↦ ηψ`,
//! which is isometric by construction of the inner product.
//!
//! A connection is stored as the reference (Grassmannian) connection
//! `∇₀η = Σ u_i [D, u_i* η]` plus a module map `η ↦ αη`, so that
//! `1 ⊗_∇ D = Π (Σ u_i D u_i* + α) Π` on the range.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::{full_matrix_algebra, MatrixAlgebra};
use crate::error::{Error, Result};
use crate::matrix::{
    self, hermiticity_defect, hs_norm, kron, random, subspace_span, ComplexMatrix, MatrixJson, SPAN_REL_TOL,
};
use crate::report::{ValidationReport, SCHEMA_VERSION};
use crate::triple::{one_form_generators, OneFormSpace, SpectralTriple, TripleJson};

/// Relative tolerance for the identities checked in this module.
pub const CONNECTION_TOL: f64 = 1e-9;

/// Largest least-squares system (entries) accepted by [`sigma`].
const SIGMA_BUDGET: usize = 4_000_000;

fn rel(err: f64, scale: f64) -> f64 {
    err / scale.max(1.0)
}

/// `E = p·A^k`, realized inside `C^k ⊗ H`.
#[derive(Clone, Debug)]
pub struct ProjectiveModule {
    pub k: usize,
    pub p: ComplexMatrix,
    pub over: MatrixAlgebra,
}

impl ProjectiveModule {
    /// Requires `p² = p = p*` and every `h × h` block of `p` in `A`.
    pub fn new(k: usize, p: ComplexMatrix, over: MatrixAlgebra) -> Result<Self> {
        let m = ProjectiveModule { k, p, over };
        let rep = m.validate();
        if !rep.all_pass() {
            let names: Vec<String> = rep.failures().iter().map(|c| c.check.clone()).collect();
            return Err(Error::Argument(format!("invalid projection: {}", names.join(", "))));
        }
        Ok(m)
    }

    /// The free module `A^k`.
    pub fn free(over: &MatrixAlgebra, k: usize) -> Result<Self> {
        if !over.unital {
            return Err(Error::Argument("free modules need a unital algebra".into()));
        }
        ProjectiveModule::new(k, matrix::identity(k * over.hilbert_dim), over.clone())
    }

    /// Spectral projection of a random Hermitian element of `M_k(A)`.
    pub fn random<R: Rng>(over: &MatrixAlgebra, k: usize, rng: &mut R) -> Result<Self> {
        let h = over.hilbert_dim;
        let mut x = matrix::zeros(k * h, k * h);
        for i in 0..k {
            for j in 0..k {
                x += kron(&matrix::unit(k, k, i, j), &over.random_element(rng));
            }
        }
        let x = matrix::hermitian_part(&x);
        let (vals, vecs) = matrix::herm_eig(&x)?;
        let mut p = matrix::zeros(k * h, k * h);
        for (idx, v) in vals.iter().enumerate() {
            if *v > 0.0 {
                let col = vecs.column(idx);
                p += &col * col.adjoint();
            }
        }
        ProjectiveModule::new(k, p, over.clone())
    }

    pub fn block(&self, i: usize, j: usize) -> ComplexMatrix {
        let h = self.over.hilbert_dim;
        self.p.view((i * h, j * h), (h, h)).into_owned()
    }

    pub fn validate(&self) -> ValidationReport {
        let mut rep = ValidationReport::new();
        let dim = self.k * self.over.hilbert_dim;
        if self.k == 0 || self.p.shape() != (dim, dim) {
            rep.push("dimensions", false, f64::INFINITY);
            return rep;
        }
        let scale = hs_norm(&self.p).max(1.0);
        rep.push_tol("idempotent", hs_norm(&(&self.p * &self.p - &self.p)) / scale, CONNECTION_TOL);
        rep.push_tol("self_adjoint", hermiticity_defect(&self.p), CONNECTION_TOL);
        let mut worst = 0.0f64;
        for i in 0..self.k {
            for j in 0..self.k {
                worst = worst.max(self.over.contains(&self.block(i, j)).1);
            }
        }
        rep.push_tol("blocks_in_algebra", worst / scale, CONNECTION_TOL);
        rep
    }
}

/// `m × n` matrices as an `M_m`–`M_n` bimodule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RectBimodule {
    pub m: usize,
    pub n: usize,
}

impl RectBimodule {
    pub fn new(m: usize, n: usize) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::Dimension("rectangular bimodule needs m, n >= 1".into()));
        }
        Ok(RectBimodule { m, n })
    }

    /// `(η, ξ)_{M_n} = η*ξ`.
    pub fn right_inner(&self, eta: &ComplexMatrix, xi: &ComplexMatrix) -> ComplexMatrix {
        eta.adjoint() * xi
    }

    /// `(η, ξ)_{M_m} = ηξ*`.
    pub fn left_inner(&self, eta: &ComplexMatrix, xi: &ComplexMatrix) -> ComplexMatrix {
        eta * xi.adjoint()
    }

    /// `η (ξ, ζ)_{M_n} = (η, ξ)_{M_m} ζ` on random triples.
    pub fn compatibility(&self, trials: usize, seed: u64) -> ValidationReport {
        let mut rng = random::rng(seed);
        let mut worst = 0.0f64;
        for _ in 0..trials {
            let [a, b, c] = [0; 3].map(|_| random::matrix(self.m, self.n, &mut rng));
            let lhs = &a * self.right_inner(&b, &c);
            let rhs = self.left_inner(&a, &b) * &c;
            worst = worst.max(rel(hs_norm(&(&lhs - &rhs)), hs_norm(&lhs)));
        }
        let mut rep = ValidationReport::new();
        rep.push_tol("compatibility", worst, CONNECTION_TOL);
        rep
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModuleShape {
    Projective { k: usize },
    Rect { m: usize, n: usize, multiplicity: usize },
    Tensor,
}

/// A right module over `over`, realized by a frame of operators `H → C^P`.
#[derive(Clone, Debug)]
pub struct Module {
    pub shape: ModuleShape,
    pub over: MatrixAlgebra,
    pub frame: Vec<ComplexMatrix>,
    pub projection: ComplexMatrix,
    /// `End_A(E)` acting on `C^P`.
    pub endomorphisms: MatrixAlgebra,
}

impl Module {
    pub fn projective(pm: &ProjectiveModule) -> Self {
        let h = pm.over.hilbert_dim;
        let id = matrix::identity(h);
        let frame: Vec<ComplexMatrix> =
            (0..pm.k).map(|i| &pm.p * kron(&matrix::unit(pm.k, 1, i, 0), &id)).collect();
        let endomorphisms = if pm.k == 1 && hs_norm(&(&pm.p - &id)) == 0.0 {
            pm.over.clone()
        } else {
            let basis = pm.over.basis();
            let mut spanners = Vec::new();
            for i in 0..pm.k {
                for j in 0..pm.k {
                    for b in &basis {
                        spanners.push(&frame[i] * b * frame[j].adjoint());
                    }
                }
            }
            MatrixAlgebra::spanned_by(pm.k * h, &spanners).expect("frame products share dimensions")
        };
        Module { shape: ModuleShape::Projective { k: pm.k }, over: pm.over.clone(), frame, projection: pm.p.clone(), endomorphisms }
    }

    /// `M_{m×n}` over an algebra of the form `1_s ⊗ M_n` (block layout), realized
    /// as `η ↦ 1_s ⊗ η`.
    pub fn rect(b: RectBimodule, over: &MatrixAlgebra) -> Result<Self> {
        let h = over.hilbert_dim;
        if h % b.n != 0 {
            return Err(Error::Dimension(format!("algebra acts on C^{h}, not a multiple of {}", b.n)));
        }
        let s = h / b.n;
        let expected = full_matrix_algebra(b.n)?.amplify(s);
        if !same_algebra(&expected, over) {
            return Err(Error::Argument(format!("algebra is not 1_{s} ⊗ M_{}", b.n)));
        }
        let ids = matrix::identity(s);
        let frame = (0..b.m).map(|i| kron(&ids, &matrix::unit(b.m, b.n, i, 0))).collect();
        Ok(Module {
            shape: ModuleShape::Rect { m: b.m, n: b.n, multiplicity: s },
            over: over.clone(),
            frame,
            projection: matrix::identity(b.m * s),
            endomorphisms: full_matrix_algebra(b.m)?.amplify(s),
        })
    }

    /// Rebuilds a module from a frame; `Σ u_i u_i*` must be a projection.
    pub fn from_frame(shape: ModuleShape, over: MatrixAlgebra, frame: Vec<ComplexMatrix>) -> Result<Self> {
        let first = frame.first().ok_or_else(|| Error::Argument("empty frame".into()))?;
        let (p, h) = first.shape();
        if h != over.hilbert_dim || frame.iter().any(|u| u.shape() != (p, h)) {
            return Err(Error::Dimension("frame elements must all be P x h".into()));
        }
        if let ModuleShape::Rect { m, n, .. } = shape {
            let module = Module::rect(RectBimodule::new(m, n)?, &over)?;
            let gap: f64 = module.frame.iter().zip(&frame).map(|(a, b)| hs_norm(&(a - b))).sum();
            if module.frame.len() != frame.len() || gap > CONNECTION_TOL {
                return Err(Error::Argument("frame does not match the rectangular shape".into()));
            }
            return Ok(module);
        }
        let projection = frame.iter().fold(matrix::zeros(p, p), |acc, u| acc + u * u.adjoint());
        if hs_norm(&(&projection * &projection - &projection)) > CONNECTION_TOL * hs_norm(&projection).max(1.0) {
            return Err(Error::Argument("frame does not sum to a projection".into()));
        }
        let basis = over.basis();
        let mut spanners = Vec::new();
        for ui in &frame {
            for uj in &frame {
                for b in &basis {
                    spanners.push(ui * b * uj.adjoint());
                }
            }
        }
        let endomorphisms = MatrixAlgebra::spanned_by(p, &spanners)?;
        Ok(Module { shape, over, frame, projection, endomorphisms })
    }

    /// `P`, the dimension of the ambient space.
    pub fn ambient(&self) -> usize {
        self.projection.nrows()
    }

    pub fn hilbert_dim(&self) -> usize {
        self.over.hilbert_dim
    }

    /// Elements `u_i b` over the frame and the algebra basis; they span `E`.
    pub fn spanners(&self) -> Vec<ComplexMatrix> {
        let basis = self.over.basis();
        self.frame.iter().flat_map(|u| basis.iter().map(move |b| u * b)).collect()
    }

    /// Distance of `η` from `E`: `E = {η : Πη = η, u_i*η ∈ A}`.
    pub fn residual(&self, eta: &ComplexMatrix) -> f64 {
        if eta.shape() != (self.ambient(), self.hilbert_dim()) {
            return f64::INFINITY;
        }
        let mut r = hs_norm(&(&self.projection * eta - eta));
        for u in &self.frame {
            r += self.over.contains(&(u.adjoint() * eta)).1;
        }
        r
    }

    pub fn random_element<R: Rng>(&self, rng: &mut R) -> ComplexMatrix {
        self.frame.iter().fold(matrix::zeros(self.ambient(), self.hilbert_dim()), |acc, u| {
            acc + u * self.over.random_element(rng)
        })
    }

    /// `Σ u_i X u_i*`, the compression of `1 ⊗ X` to `E ⊗_A H`.
    pub fn transport(&self, x: &ComplexMatrix) -> ComplexMatrix {
        let p = self.ambient();
        self.frame.iter().fold(matrix::zeros(p, p), |acc, u| acc + u * x * u.adjoint())
    }

    /// Orthonormal basis `W` of the range of `Π` (the identity when `Π = 1`).
    pub fn range_basis(&self) -> Result<ComplexMatrix> {
        let p = self.ambient();
        if hs_norm(&(&self.projection - matrix::identity(p))) <= 1e-12 {
            return Ok(matrix::identity(p));
        }
        let (vals, vecs) = matrix::herm_eig(&self.projection)?;
        let cols: Vec<usize> = (0..p).filter(|&i| vals[i] > 0.5).collect();
        let mut w = matrix::zeros(p, cols.len());
        for (j, &i) in cols.iter().enumerate() {
            w.set_column(j, &vecs.column(i));
        }
        Ok(w)
    }

    pub fn to_json(&self) -> ModuleJson {
        ModuleJson { shape: self.shape.clone(), frame: self.frame.iter().map(MatrixJson::from_matrix).collect() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModuleJson {
    pub shape: ModuleShape,
    pub frame: Vec<MatrixJson>,
}

/// Mutual containment of two algebras acting on the same space.
pub fn same_algebra(a: &MatrixAlgebra, b: &MatrixAlgebra) -> bool {
    if a.hilbert_dim != b.hilbert_dim || a.dim() != b.dim() {
        return false;
    }
    if a == b {
        return true;
    }
    (0..a.dim()).all(|i| b.contains(&a.basis_element(i)).0)
}

/// Residual between two triples (Dirac, grading); infinite if the algebras differ.
pub fn triple_mismatch(a: &SpectralTriple, b: &SpectralTriple) -> f64 {
    if a.dim() != b.dim() || !same_algebra(&a.algebra, &b.algebra) {
        return f64::INFINITY;
    }
    let mut r = rel(hs_norm(&(&a.dirac - &b.dirac)), hs_norm(&a.dirac));
    match (&a.grading, &b.grading) {
        (Some(g), Some(h)) => r += hs_norm(&(g - h)),
        (None, None) => {}
        _ => return f64::INFINITY,
    }
    r
}

/// `∇η = Σ u_i [D, u_i*η] + αη (+ ηβ)`.
#[derive(Clone, Debug)]
pub struct Connection {
    pub module: Module,
    pub base: SpectralTriple,
    pub alpha: ComplexMatrix,
    /// Right multiplication by a one-form. It breaks the Leibniz rule and
    /// exists only to build negative controls.
    pub twist: Option<ComplexMatrix>,
}

pub fn grassmannian_connection(module: &ProjectiveModule, base: &SpectralTriple) -> Result<Connection> {
    Connection::grassmannian(Module::projective(module), base)
}

impl Connection {
    pub fn grassmannian(module: Module, base: &SpectralTriple) -> Result<Self> {
        if !same_algebra(&module.over, &base.algebra) {
            return Err(Error::Argument("module is not over the algebra of the base triple".into()));
        }
        let p = module.ambient();
        Ok(Connection { module, base: base.clone(), alpha: matrix::zeros(p, p), twist: None })
    }

    pub fn with_alpha(mut self, alpha: ComplexMatrix) -> Result<Self> {
        let p = self.module.ambient();
        if alpha.shape() != (p, p) {
            return Err(Error::Dimension(format!("alpha must be {p}x{p}")));
        }
        self.alpha = alpha;
        Ok(self)
    }

    pub fn corrupted(mut self, beta: ComplexMatrix) -> Result<Self> {
        let h = self.module.hilbert_dim();
        if beta.shape() != (h, h) {
            return Err(Error::Dimension(format!("twist must be {h}x{h}")));
        }
        self.twist = Some(beta);
        Ok(self)
    }

    /// Fits `α` to prescribed values `∇η` on elements spanning `E`. Returns
    /// the connection and the relative residual of the fit, which measures
    /// how far the prescription is from a Leibniz connection.
    pub fn from_images(module: Module, base: &SpectralTriple, pairs: &[(ComplexMatrix, ComplexMatrix)]) -> Result<(Self, f64)> {
        let c = Connection::grassmannian(module, base)?;
        let (p, h) = (c.module.ambient(), c.module.hilbert_dim());
        if pairs.iter().any(|(e, v)| e.shape() != (p, h) || v.shape() != (p, h)) {
            return Err(Error::Dimension(format!("module elements and images must be {p}x{h}")));
        }
        let k = pairs.len();
        let mut y = matrix::zeros(p, h * k);
        let mut z = matrix::zeros(p, h * k);
        for (idx, (eta, img)) in pairs.iter().enumerate() {
            y.view_mut((0, idx * h), (p, h)).copy_from(eta);
            z.view_mut((0, idx * h), (p, h)).copy_from(&(img - c.apply(eta)));
        }
        let gram = &y * y.adjoint();
        let (vals, vecs) = matrix::herm_eig(&gram)?;
        let top = vals.iter().cloned().fold(0.0, f64::max);
        let mut pinv = matrix::zeros(p, p);
        for (i, v) in vals.iter().enumerate() {
            if *v > 1e-12 * top {
                let col = vecs.column(i);
                pinv += (&col * col.adjoint()).scale(1.0 / v);
            }
        }
        let alpha = &z * y.adjoint() * pinv;
        let residual = rel(hs_norm(&(&alpha * &y - &z)), hs_norm(&z));
        Ok((c.with_alpha(alpha)?, residual))
    }

    /// `Σ u_i D u_i*`.
    pub fn reference_dirac(&self) -> ComplexMatrix {
        self.module.transport(&self.base.dirac)
    }

    /// `1 ⊗_∇ D` on the ambient space, compressed by `Π`.
    pub fn dirac(&self) -> ComplexMatrix {
        let pr = &self.module.projection;
        pr * (self.reference_dirac() + &self.alpha) * pr
    }

    /// `∇η` as an operator `H → C^P`.
    pub fn apply(&self, eta: &ComplexMatrix) -> ComplexMatrix {
        let d = &self.base.dirac;
        let mut out = (self.reference_dirac() + &self.alpha) * eta - &self.module.projection * eta * d;
        if let Some(beta) = &self.twist {
            out += eta * beta;
        }
        out
    }

    /// Matrix entries `u_i* α u_j`; each should lie in `Ω¹_D(A)`.
    pub fn one_form_entries(&self) -> Vec<ComplexMatrix> {
        let f = &self.module.frame;
        f.iter().flat_map(|ui| f.iter().map(move |uj| ui.adjoint() * &self.alpha * uj)).collect()
    }

    pub fn check_one_forms(&self, om: &OneFormSpace) -> ValidationReport {
        let mut rep = ValidationReport::new();
        let worst = self.one_form_entries().iter().map(|e| rel(om.space.residual(e), hs_norm(e))).fold(0.0, f64::max);
        rep.push_tol("alpha_entries_in_omega1", worst, CONNECTION_TOL);
        rep
    }

    pub fn fluctuation(&self) -> Result<Fluctuation> {
        let pr = &self.module.projection;
        let compressed = pr * &self.alpha * pr;
        let defect = rel(hs_norm(&(&compressed - compressed.adjoint())), hs_norm(&compressed));
        if defect > CONNECTION_TOL {
            return Err(Error::Argument(format!("alpha is not Hermitian on E ⊗ H (defect {defect:.3e})")));
        }
        let w = self.module.range_basis()?;
        let r = w.ncols();
        let dirac = matrix::hermitian_part(&self.dirac());
        let coords = |x: &ComplexMatrix| w.adjoint() * x * &w;
        let identity_basis = w.shape() == (r, r) && hs_norm(&(&w - matrix::identity(r))) == 0.0;
        let algebra = if identity_basis {
            self.module.endomorphisms.clone()
        } else {
            let images: Vec<ComplexMatrix> = self.module.endomorphisms.basis().iter().map(coords).collect();
            MatrixAlgebra::spanned_by(r, &images)?
        };
        let grading = self.base.grading.as_ref().map(|g| coords(&self.module.transport(g)));
        let triple = SpectralTriple::new(algebra, coords(&dirac), grading)?;
        Ok(Fluctuation { triple, basis: w, dirac })
    }
}

/// The fluctuated triple in coordinates `W` of `E ⊗_A H`, with the ambient operator.
#[derive(Clone, Debug)]
pub struct Fluctuation {
    pub triple: SpectralTriple,
    pub basis: ComplexMatrix,
    pub dirac: ComplexMatrix,
}

pub fn fluctuate(base: &SpectralTriple, c: &Connection) -> Result<SpectralTriple> {
    if triple_mismatch(base, &c.base) > CONNECTION_TOL {
        return Err(Error::Argument("connection is defined over a different triple".into()));
    }
    Ok(c.fluctuation()?.triple)
}

/// Worst relative residual of `∇(ηa) − (∇η)a − η[D,a]` over random pairs.
pub fn check_leibniz(c: &Connection, trials: usize, seed: u64) -> ValidationReport {
    let mut rng = random::rng(seed);
    let d = &c.base.dirac;
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let eta = c.module.random_element(&mut rng);
        let a = c.base.algebra.random_element(&mut rng);
        let lhs = c.apply(&(&eta * &a));
        let rhs = c.apply(&eta) * &a + &eta * matrix::commutator(d, &a);
        worst = worst.max(rel(hs_norm(&(&lhs - &rhs)), hs_norm(&lhs)));
    }
    let mut rep = ValidationReport::new();
    rep.push_tol("leibniz", worst, CONNECTION_TOL);
    rep
}

/// `(η, ∇ξ) − (∇η, ξ) = [D, (η, ξ)]` on random pairs. Informational: a
/// correspondence does not require a Hermitian connection.
pub fn hermitian_compatibility(c: &Connection, trials: usize, seed: u64) -> ValidationReport {
    let mut rng = random::rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let eta = c.module.random_element(&mut rng);
        let xi = c.module.random_element(&mut rng);
        let lhs = eta.adjoint() * c.apply(&xi) - c.apply(&eta).adjoint() * &xi;
        let rhs = matrix::commutator(&c.base.dirac, &(eta.adjoint() * &xi));
        worst = worst.max(rel(hs_norm(&(&lhs - &rhs)), hs_norm(&rhs)));
    }
    let mut rep = ValidationReport::new();
    rep.push_tol("hermitian_compatibility", worst, CONNECTION_TOL);
    rep
}

/// `(1 ⊗_∇ D)(ηa ⊗ ψ) = (1 ⊗_∇ D)(η ⊗ aψ)`, with `(1 ⊗_∇ D)(η ⊗ ψ) = ηDψ + (∇η)ψ`.
pub fn check_well_defined(c: &Connection, trials: usize, seed: u64) -> ValidationReport {
    let mut rng = random::rng(seed);
    let d = &c.base.dirac;
    let h = c.module.hilbert_dim();
    let act = |eta: &ComplexMatrix, psi: &ComplexMatrix| eta * d * psi + c.apply(eta) * psi;
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let eta = c.module.random_element(&mut rng);
        let a = c.base.algebra.random_element(&mut rng);
        let psi = random::matrix(h, 1, &mut rng);
        let lhs = act(&(&eta * &a), &psi);
        let rhs = act(&eta, &(&a * &psi));
        worst = worst.max(rel(hs_norm(&(&lhs - &rhs)), hs_norm(&lhs)));
    }
    let mut rep = ValidationReport::new();
    rep.push_tol("well_defined", worst, CONNECTION_TOL);
    rep
}

/// Structural checks on a connection: shapes, `α = ΠαΠ`, Hermitian `α`,
/// Leibniz rule, and (when a one-form space is given) the entries of `α`.
pub fn validate_connection(c: &Connection, om: Option<&OneFormSpace>, seed: u64) -> ValidationReport {
    let mut rep = ValidationReport::new();
    let pr = &c.module.projection;
    let scale = hs_norm(&c.alpha);
    rep.push_tol("alpha_on_range", rel(hs_norm(&(pr * &c.alpha * pr - &c.alpha)), scale), CONNECTION_TOL);
    rep.push_tol("alpha_hermitian", rel(hs_norm(&(&c.alpha - c.alpha.adjoint())), scale), CONNECTION_TOL);
    rep.extend("", check_leibniz(c, 8, seed));
    if let Some(om) = om {
        rep.extend("", c.check_one_forms(om));
    }
    rep
}

/// `(E, ∇, U)` from `connection.base` to `target`, with `U : E ⊗_A H → H′`
/// stored on the ambient space (`U*U = Π`, `UU* = 1`).
#[derive(Clone, Debug)]
pub struct Correspondence {
    pub connection: Connection,
    pub unitary: ComplexMatrix,
    pub target: SpectralTriple,
}

impl Correspondence {
    /// Validates the unitary and the intertwining relation.
    pub fn new(connection: Connection, unitary: ComplexMatrix, target: SpectralTriple) -> Result<Self> {
        let c = Correspondence { connection, unitary, target };
        let rep = c.check_unitary();
        if !rep.all_pass() {
            let names: Vec<String> = rep.failures().iter().map(|x| format!("{} ({:.3e})", x.check, x.residual)).collect();
            return Err(Error::Argument(format!("not a correspondence: {}", names.join(", "))));
        }
        Ok(c)
    }

    pub fn source(&self) -> &SpectralTriple {
        &self.connection.base
    }

    /// `(A, ∇_D, m)`.
    pub fn identity(t: &SpectralTriple) -> Result<Self> {
        let module = ProjectiveModule::free(&t.algebra, 1)?;
        let c = grassmannian_connection(&module, t)?;
        Correspondence::new(c, matrix::identity(t.dim()), t.clone())
    }

    /// `(A, ∇^ω_D, m)` onto `(A, H, D + ω)`.
    pub fn inner_fluctuation(t: &SpectralTriple, omega: &ComplexMatrix) -> Result<Self> {
        if hermiticity_defect(omega) > CONNECTION_TOL * hs_norm(omega).max(1.0) {
            return Err(Error::Argument("connection one-form is not Hermitian".into()));
        }
        let module = ProjectiveModule::free(&t.algebra, 1)?;
        let c = grassmannian_connection(&module, t)?.with_alpha(omega.clone())?;
        let target = t.with_dirac(&t.dirac + omega)?;
        Correspondence::new(c, matrix::identity(t.dim()), target)
    }

    /// `(A, ∇_D, U ∘ m)` onto `(UAU*, UH, UDU*)`.
    pub fn unitary_equivalence(t: &SpectralTriple, u: &ComplexMatrix) -> Result<Self> {
        let n = t.dim();
        if u.shape() != (n, n) {
            return Err(Error::Dimension(format!("unitary must be {n}x{n}")));
        }
        let images: Vec<ComplexMatrix> = t.algebra.basis().iter().map(|b| u * b * u.adjoint()).collect();
        let algebra = MatrixAlgebra::spanned_by(n, &images)?;
        let grading = t.grading.as_ref().map(|g| u * g * u.adjoint());
        let target = SpectralTriple::new(algebra, u * &t.dirac * u.adjoint(), grading)?;
        let module = ProjectiveModule::free(&t.algebra, 1)?;
        Correspondence::new(grassmannian_connection(&module, t)?, u.clone(), target)
    }

    /// A fluctuation seen as a correspondence onto its fluctuated triple, `U = W*`.
    pub fn from_fluctuation(c: Connection) -> Result<Self> {
        let fl = c.fluctuation()?;
        Correspondence::new(c, fl.basis.adjoint(), fl.triple)
    }

    /// `U (1 ⊗_∇ D) U*`, which must equal the target Dirac operator.
    pub fn transported_dirac(&self) -> ComplexMatrix {
        &self.unitary * self.connection.dirac() * self.unitary.adjoint()
    }

    pub fn check_unitary(&self) -> ValidationReport {
        let mut rep = ValidationReport::new();
        let (p, hp) = (self.connection.module.ambient(), self.target.dim());
        let u = &self.unitary;
        if u.shape() != (hp, p) {
            rep.push("dimensions", false, f64::INFINITY);
            return rep;
        }
        let pr = &self.connection.module.projection;
        rep.push_tol("unitary_on_range", hs_norm(&(u.adjoint() * u - pr)), CONNECTION_TOL);
        rep.push_tol("unitary_onto", hs_norm(&(u * u.adjoint() - matrix::identity(hp))), CONNECTION_TOL);
        let dt = &self.target.dirac;
        let resid = hs_norm(&(u * self.connection.dirac() - dt * u));
        rep.push_tol("intertwines_dirac", rel(resid, hs_norm(dt)), CONNECTION_TOL);
        let ends = &self.connection.module.endomorphisms;
        let mut worst = 0.0f64;
        for i in 0..ends.dim() {
            let b = ends.basis_element(i);
            worst = worst.max(rel(self.target.algebra.contains(&(u * &b * u.adjoint())).1, hs_norm(&b)));
        }
        rep.push_tol("maps_algebra_into", worst, CONNECTION_TOL);
        let (d1, d2) = (ends.span().rank(), self.target.algebra.span().rank());
        rep.push("maps_algebra_onto", d1 == d2, (d1 as f64 - d2 as f64).abs());
        match (&self.connection.base.grading, &self.target.grading) {
            (Some(g), Some(gt)) => {
                let ge = self.connection.module.transport(g);
                rep.push_tol("intertwines_grading", hs_norm(&(u * ge - gt * u)), CONNECTION_TOL);
            }
            (None, None) => {}
            _ => rep.push("grading_presence", false, f64::INFINITY),
        }
        rep
    }

    pub fn validate(&self, om: Option<&OneFormSpace>, seed: u64) -> ValidationReport {
        let mut rep = validate_connection(&self.connection, om, seed);
        rep.extend("", self.check_unitary());
        rep
    }

    pub fn to_json(&self) -> CorrespondenceJson {
        CorrespondenceJson {
            schema_version: SCHEMA_VERSION.to_string(),
            module: self.connection.module.to_json(),
            alpha: MatrixJson::from_matrix(&self.connection.alpha),
            unitary: MatrixJson::from_matrix(&self.unitary),
            source: self.source().to_json(),
            target: self.target.to_json(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CorrespondenceJson {
    pub schema_version: String,
    pub module: ModuleJson,
    pub alpha: MatrixJson,
    #[serde(rename = "U")]
    pub unitary: MatrixJson,
    pub source: TripleJson,
    pub target: TripleJson,
}

impl CorrespondenceJson {
    pub fn to_correspondence(&self) -> Result<Correspondence> {
        let source = self.source.to_triple()?;
        let frame = self.module.frame.iter().map(|m| m.to_matrix()).collect::<Result<Vec<_>>>()?;
        let module = Module::from_frame(self.module.shape.clone(), source.algebra.clone(), frame)?;
        let c = Connection::grassmannian(module, &source)?.with_alpha(self.alpha.to_matrix()?)?;
        Correspondence::new(c, self.unitary.to_matrix()?, self.target.to_triple()?)
    }
}

/// `σ(ω′ ⊗ η)` for `ω′ ∈ Ω¹_{D′}(A′)`, `η ∈ E`, by writing
/// `ω′ = Σ c_jk b_j [D′, b_k]` and using `σ(a′[D′,b′] ⊗ η) = a′∇(b′η) − a′b′∇η`,
/// with `A′` acting on `E` through `Ad_{U*}`.
pub fn sigma(c: &Correspondence, omega: &ComplexMatrix, eta: &ComplexMatrix) -> Result<ComplexMatrix> {
    let tgt = &c.target;
    let hp = tgt.dim();
    let d = tgt.algebra.dim();
    if hp * hp * d * d > SIGMA_BUDGET {
        return Err(Error::Argument(format!("one-form decomposition too large ({d}² generators on C^{hp})")));
    }
    if omega.shape() != (hp, hp) {
        return Err(Error::Dimension(format!("one-form must be {hp}x{hp}")));
    }
    let gens = one_form_generators(tgt);
    let mut g = matrix::zeros(hp * hp, gens.len());
    for (j, m) in gens.iter().enumerate() {
        g.set_column(j, &matrix::vec_of(m));
    }
    let svd = g.clone().svd(true, true);
    let coeffs = svd
        .solve(&matrix::vec_of(omega), SPAN_REL_TOL * svd.singular_values.max())
        .map_err(|e| Error::Domain(e.to_string()))?;
    let fit = hs_norm(&(matrix::matrix_of((&g * &coeffs).as_slice(), hp, hp) - omega));
    if fit > CONNECTION_TOL * hs_norm(omega).max(1.0) {
        return Err(Error::Domain(format!("not a one-form of the target (residual {fit:.3e})")));
    }
    let u = &c.unitary;
    let act: Vec<ComplexMatrix> = tgt.algebra.basis().iter().map(|b| u.adjoint() * b * u).collect();
    let nabla_eta = c.connection.apply(eta);
    let mut out = matrix::zeros(eta.nrows(), eta.ncols());
    for j in 0..d {
        for k in 0..d {
            let x = coeffs[j * d + k];
            if x.norm() == 0.0 {
                continue;
            }
            let term = &act[j] * c.connection.apply(&(&act[k] * eta)) - &act[j] * &act[k] * &nabla_eta;
            out += term * x;
        }
    }
    Ok(out)
}

/// Bimodule properties of `σ` on random inputs, and its agreement with the
/// realized form `σ(ω′ ⊗ η) = U*ω′Uη` used by [`compose_correspondences`].
pub fn check_sigma(c: &Correspondence, trials: usize, seed: u64) -> Result<ValidationReport> {
    let mut rng = random::rng(seed);
    let tgt = &c.target;
    let gens = one_form_generators(tgt);
    let u = &c.unitary;
    let act = |a: &ComplexMatrix| u.adjoint() * a * u;
    let (mut left, mut balanced, mut right, mut realized) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..trials {
        let mut omega = matrix::zeros(tgt.dim(), tgt.dim());
        for gen in &gens {
            omega += gen * random::complex(&mut rng);
        }
        let eta = c.connection.module.random_element(&mut rng);
        let ap = tgt.algebra.random_element(&mut rng);
        let a = c.source().algebra.random_element(&mut rng);
        let s = sigma(c, &omega, &eta)?;
        let scale = hs_norm(&s);
        left = left.max(rel(hs_norm(&(sigma(c, &(&ap * &omega), &eta)? - act(&ap) * &s)), scale));
        balanced =
            balanced.max(rel(hs_norm(&(sigma(c, &(&omega * &ap), &eta)? - sigma(c, &omega, &(act(&ap) * &eta))?)), scale));
        right = right.max(rel(hs_norm(&(sigma(c, &omega, &(&eta * &a))? - &s * &a)), scale));
        realized = realized.max(rel(hs_norm(&(&s - act(&omega) * &eta)), scale));
    }
    let mut rep = ValidationReport::new();
    rep.push_tol("sigma_left_linear", left, CONNECTION_TOL);
    rep.push_tol("sigma_balanced", balanced, CONNECTION_TOL);
    rep.push_tol("sigma_right_linear", right, CONNECTION_TOL);
    rep.push_tol("sigma_realized_form", realized, CONNECTION_TOL);
    Ok(rep)
}

/// Composite `(E′ ⊗_{A′} E, ∇″, U′(id ⊗ U))`. The tensor product is realized
/// as `η′ ⊗ η ↦ η′Uη`, so the composite unitary is `U′` on the ambient space of
/// `E′`, and `∇″(η′ ⊗ η) = (id ⊗ σ)(∇′η′ ⊗ η) + η′ ⊗ ∇η` with σ in realized form.
pub fn compose_correspondences(c1: &Correspondence, c2: &Correspondence) -> Result<Correspondence> {
    let gap = triple_mismatch(&c1.target, c2.source());
    if gap > CONNECTION_TOL {
        return Err(Error::Composition(format!("target and source differ (residual {gap:.3e})")));
    }
    let u1 = &c1.unitary;
    let (m1, m2) = (&c1.connection.module, &c2.connection.module);
    let mut frame = Vec::with_capacity(m1.frame.len() * m2.frame.len());
    for a in &m2.frame {
        let au = a * u1;
        for b in &m1.frame {
            frame.push(&au * b);
        }
    }
    let p2 = m2.ambient();
    let projection = frame.iter().fold(matrix::zeros(p2, p2), |acc, u| acc + u * u.adjoint());
    let module = Module {
        shape: ModuleShape::Tensor,
        over: m1.over.clone(),
        frame,
        projection,
        endomorphisms: m2.endomorphisms.clone(),
    };
    let basis = m1.over.basis();
    let mut pairs = Vec::with_capacity(m1.frame.len() * m2.frame.len() * basis.len());
    for a in &m2.frame {
        let outer = c2.connection.apply(a) * u1;
        let au = a * u1;
        for b in &m1.frame {
            for x in &basis {
                let eta = b * x;
                let value = &outer * &eta + &au * c1.connection.apply(&eta);
                pairs.push((&au * &eta, value));
            }
        }
    }
    let (connection, residual) = Connection::from_images(module, c1.source(), &pairs)?;
    if residual > CONNECTION_TOL {
        return Err(Error::Composition(format!("composite connection is not well defined (residual {residual:.3e})")));
    }
    Correspondence::new(connection, c2.unitary.clone(), c2.target.clone())
        .map_err(|e| Error::Composition(format!("composite fails: {e}")))
}

/// Result of composing two fluctuations.
#[derive(Clone, Debug)]
pub struct CompositeFluctuation {
    pub connection: Connection,
    pub triple: SpectralTriple,
    /// Relative difference between the composite and the two-step Dirac operators.
    pub two_step_residual: f64,
}

/// `(E, ∇)` then `(E′, ∇′)`, where `f2.base` must be the fluctuation of `f1`.
pub fn compose_fluctuations(f1: &Connection, f2: &Connection) -> Result<CompositeFluctuation> {
    let c1 = Correspondence::from_fluctuation(f1.clone())?;
    let gap = triple_mismatch(&c1.target, &f2.base);
    if gap > CONNECTION_TOL {
        return Err(Error::Composition(format!("second fluctuation is over a different triple (residual {gap:.3e})")));
    }
    let c2 = Correspondence::from_fluctuation(f2.clone())?;
    let composite = compose_correspondences(&c1, &c2)?;
    let two_step = f2.dirac();
    let direct = composite.connection.dirac();
    let two_step_residual = rel(hs_norm(&(&direct - &two_step)), hs_norm(&two_step));
    let triple = composite.connection.fluctuation()?.triple;
    Ok(CompositeFluctuation { connection: composite.connection, triple, two_step_residual })
}

/// Checks that `V : E₁ → E₂` is a similarity between `c1` and `c2`.
pub fn similarity_check(c1: &Correspondence, c2: &Correspondence, v: &ComplexMatrix) -> ValidationReport {
    let mut rep = ValidationReport::new();
    let (m1, m2) = (&c1.connection.module, &c2.connection.module);
    if v.shape() != (m2.ambient(), m1.ambient()) {
        rep.push("dimensions", false, f64::INFINITY);
        return rep;
    }
    rep.push_tol("same_source", triple_mismatch(c1.source(), c2.source()), CONNECTION_TOL);
    rep.push_tol("same_target", triple_mismatch(&c1.target, &c2.target), CONNECTION_TOL);
    rep.push_tol("unitary_left", hs_norm(&(v.adjoint() * v - &m1.projection)), CONNECTION_TOL);
    rep.push_tol("unitary_right", hs_norm(&(v * v.adjoint() - &m2.projection)), CONNECTION_TOL);
    let mut rng = random::rng(0x51);
    let (mut into, mut linear, mut conn) = (0.0f64, 0.0f64, 0.0f64);
    for eta in m1.spanners() {
        let image = v * &eta;
        into = into.max(rel(m2.residual(&image), hs_norm(&eta)));
        let a = c1.source().algebra.random_element(&mut rng);
        linear = linear.max(rel(hs_norm(&(v * (&eta * &a) - &image * &a)), hs_norm(&image)));
        let lhs = v * c1.connection.apply(&eta);
        let rhs = c2.connection.apply(&image);
        conn = conn.max(rel(hs_norm(&(&lhs - &rhs)), hs_norm(&lhs)));
    }
    rep.push_tol("maps_module", into, CONNECTION_TOL);
    rep.push_tol("right_linear", linear, CONNECTION_TOL);
    let sim = hs_norm(&(&c2.unitary * v - &c1.unitary * &m1.projection));
    rep.push_tol("similarity", sim, CONNECTION_TOL);
    rep.push_tol("connection_relation", conn, CONNECTION_TOL);
    rep
}

/// A random module-linear Hermitian `α = X + X*`, `X = Σ u_i ω_ij u_j*` with
/// `ω_ij` random in `Ω¹_D(A)`.
pub fn random_alpha<R: Rng>(module: &Module, om: &OneFormSpace, rng: &mut R) -> ComplexMatrix {
    let p = module.ambient();
    let mut x = matrix::zeros(p, p);
    for ui in &module.frame {
        for uj in &module.frame {
            let mut w = matrix::zeros(om.space.rows, om.space.cols);
            for b in &om.space.basis {
                w += b * random::complex(rng);
            }
            x += ui * w * uj.adjoint();
        }
    }
    &x + x.adjoint()
}

/// Orthonormal HS basis of a subspace, for callers that know `Ω¹` in closed form.
pub fn one_form_space(source: &SpectralTriple, spanners: &[ComplexMatrix]) -> Result<OneFormSpace> {
    Ok(OneFormSpace { space: subspace_span(spanners, SPAN_REL_TOL)?, source: source.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{diagonal_algebra, direct_sum};
    use crate::matrix::{c, from_real};
    use crate::triple::{omega1, unitary_equivalent};

    fn random_triple(n: usize, seed: u64) -> SpectralTriple {
        let mut rng = random::rng(seed);
        SpectralTriple::new(full_matrix_algebra(n).unwrap(), random::hermitian(n, &mut rng), None).unwrap()
    }

    fn sx() -> ComplexMatrix {
        from_real(2, 2, &[0.0, 1.0, 1.0, 0.0])
    }

    #[test]
    fn free_module_of_rank_one_gives_d_d() {
        let t = random_triple(3, 1);
        let c = grassmannian_connection(&ProjectiveModule::free(&t.algebra, 1).unwrap(), &t).unwrap();
        let one = matrix::identity(3);
        assert!(hs_norm(&c.apply(&one)) < 1e-13);
        let mut rng = random::rng(2);
        let a = t.algebra.random_element(&mut rng);
        let expected = matrix::commutator(&t.dirac, &a);
        assert!(hs_norm(&(c.apply(&a) - expected)) < 1e-12);
    }

    #[test]
    fn free_module_of_rank_two_is_componentwise() {
        let t = random_triple(2, 3);
        let c = grassmannian_connection(&ProjectiveModule::free(&t.algebra, 2).unwrap(), &t).unwrap();
        let mut rng = random::rng(4);
        let (a, b) = (t.algebra.random_element(&mut rng), t.algebra.random_element(&mut rng));
        let mut eta = matrix::zeros(4, 2);
        eta.view_mut((0, 0), (2, 2)).copy_from(&a);
        eta.view_mut((2, 0), (2, 2)).copy_from(&b);
        let got = c.apply(&eta);
        assert!(hs_norm(&(got.view((0, 0), (2, 2)) - matrix::commutator(&t.dirac, &a))) < 1e-12);
        assert!(hs_norm(&(got.view((2, 0), (2, 2)) - matrix::commutator(&t.dirac, &b))) < 1e-12);
    }

    #[test]
    fn corner_projection_module() {
        let t = SpectralTriple::new(full_matrix_algebra(2).unwrap(), sx(), None).unwrap();
        let p = kron(&matrix::diag_real(&[1.0, 0.0]), &matrix::identity(2));
        let pm = ProjectiveModule::new(2, p, t.algebra.clone()).unwrap();
        let c = grassmannian_connection(&pm, &t).unwrap();
        let rep = check_leibniz(&c, 20, 5);
        assert!(rep.max_residual() < 1e-10, "{rep:?}");
        // Entrywise oracle: the first component sees [D, a], the second stays 0.
        let a = from_real(2, 2, &[1.0, 2.0, -1.0, 0.5]);
        let mut eta = matrix::zeros(4, 2);
        eta.view_mut((0, 0), (2, 2)).copy_from(&a);
        let got = c.apply(&eta);
        assert!(hs_norm(&(got.view((0, 0), (2, 2)) - matrix::commutator(&sx(), &a))) < 1e-12);
        assert!(hs_norm(&got.view((2, 0), (2, 2)).into_owned()) < 1e-12);
        assert!(hermitian_compatibility(&c, 10, 6).all_pass());
    }

    #[test]
    fn invalid_projection_is_rejected() {
        let a = full_matrix_algebra(2).unwrap();
        let not_proj = matrix::identity(2) * c(0.5, 0.0);
        assert!(matches!(ProjectiveModule::new(1, not_proj, a.clone()), Err(Error::Argument(_))));
        let d = diagonal_algebra(2).unwrap();
        assert!(matches!(ProjectiveModule::new(1, matrix::identity(2), d.clone()), Ok(_)));
        let off = from_real(2, 2, &[0.5, 0.5, 0.5, 0.5]);
        assert!(matches!(ProjectiveModule::new(1, off, d), Err(Error::Argument(_))));
    }

    #[test]
    fn leibniz_with_alpha_and_negative_control() {
        let t = random_triple(3, 7);
        let om = omega1(&t).unwrap();
        let mut rng = random::rng(8);
        let pm = ProjectiveModule::random(&t.algebra, 2, &mut rng).unwrap();
        let module = Module::projective(&pm);
        let alpha = random_alpha(&module, &om, &mut rng);
        let c = Connection::grassmannian(module, &t).unwrap().with_alpha(alpha).unwrap();
        assert!(validate_connection(&c, Some(&om), 9).all_pass());
        assert!(hermitian_compatibility(&c, 10, 9).all_pass());
        assert!(check_well_defined(&c, 10, 9).all_pass());
        let beta = random::hermitian(3, &mut rng);
        let bad = c.corrupted(beta).unwrap();
        let r = check_leibniz(&bad, 10, 10).max_residual();
        assert!(r > 1e-2, "{r}");
    }

    #[test]
    fn fluctuation_of_trivial_module_is_equivalent() {
        for seed in 0..5 {
            let t = random_triple(2 + seed as usize, 20 + seed);
            let c = Connection::grassmannian(Module::projective(&ProjectiveModule::free(&t.algebra, 1).unwrap()), &t)
                .unwrap();
            let f = fluctuate(&t, &c).unwrap();
            let rep = unitary_equivalent(&f, &t, &matrix::identity(t.dim()));
            assert!(rep.all_pass() && rep.max_residual() <= 1e-10, "{rep:?}");
        }
    }

    #[test]
    fn inner_fluctuations() {
        let t = SpectralTriple::new(full_matrix_algebra(2).unwrap(), sx(), None).unwrap();
        let omega = -sx();
        let c = Correspondence::inner_fluctuation(&t, &omega).unwrap();
        let f = fluctuate(&t, &c.connection).unwrap();
        assert!(hs_norm(&f.dirac) < 1e-14);
        let bad = from_real(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let c = grassmannian_connection(&ProjectiveModule::free(&t.algebra, 1).unwrap(), &t).unwrap();
        assert!(matches!(fluctuate(&t, &c.with_alpha(bad).unwrap()), Err(Error::Argument(_))));
    }

    #[test]
    fn two_inner_fluctuations_add() {
        let t = random_triple(3, 30);
        let mut rng = random::rng(31);
        let (w1, w2) = (random::hermitian(3, &mut rng), random::hermitian(3, &mut rng));
        let c1 = Correspondence::inner_fluctuation(&t, &w1).unwrap();
        let c2 = Correspondence::inner_fluctuation(&c1.target, &w2).unwrap();
        let c = compose_correspondences(&c1, &c2).unwrap();
        assert!(hs_norm(&(&c.connection.alpha - (&w1 + &w2))) < 1e-10);
        assert!(matches!(compose_correspondences(&c2, &c1), Err(Error::Composition(_))));
    }

    #[test]
    fn composed_fluctuations_match_two_step() {
        let t = random_triple(2, 40);
        let mut rng = random::rng(41);
        let pm = ProjectiveModule::random(&t.algebra, 2, &mut rng).unwrap();
        let m1 = Module::projective(&pm);
        let a1 = random_alpha(&m1, &omega1(&t).unwrap(), &mut rng);
        let f1 = Connection::grassmannian(m1, &t).unwrap().with_alpha(a1).unwrap();
        let t1 = fluctuate(&t, &f1).unwrap();
        let pm2 = ProjectiveModule::random(&t1.algebra, 2, &mut rng).unwrap();
        let m2 = Module::projective(&pm2);
        let a2 = random_alpha(&m2, &omega1(&t1).unwrap(), &mut rng);
        let f2 = Connection::grassmannian(m2, &t1).unwrap().with_alpha(a2).unwrap();
        let comp = compose_fluctuations(&f1, &f2).unwrap();
        assert!(comp.two_step_residual < 1e-9, "{}", comp.two_step_residual);
        assert!(check_leibniz(&comp.connection, 10, 42).all_pass());
        assert!(matches!(compose_fluctuations(&f2, &f1), Err(Error::Composition(_))));
    }

    #[test]
    fn identity_correspondences_are_units_up_to_similarity() {
        let t = random_triple(2, 50);
        let mut rng = random::rng(51);
        let f = Connection::grassmannian(Module::projective(&ProjectiveModule::random(&t.algebra, 2, &mut rng).unwrap()), &t)
            .unwrap();
        let c = Correspondence::from_fluctuation(f).unwrap();
        let left = compose_correspondences(&Correspondence::identity(&t).unwrap(), &c).unwrap();
        let rep = similarity_check(&left, &c, &c.connection.module.projection);
        assert!(rep.all_pass(), "{rep:?}");
        let right = compose_correspondences(&c, &Correspondence::identity(&c.target).unwrap()).unwrap();
        let rep = similarity_check(&c, &right, &c.unitary);
        assert!(rep.all_pass(), "{rep:?}");
    }

    #[test]
    fn unitary_equivalences_compose() {
        let t = random_triple(3, 60);
        let mut rng = random::rng(61);
        let (u1, u2) = (random::unitary(3, &mut rng), random::unitary(3, &mut rng));
        let c1 = Correspondence::unitary_equivalence(&t, &u1).unwrap();
        let c2 = Correspondence::unitary_equivalence(&c1.target, &u2).unwrap();
        let comp = compose_correspondences(&c1, &c2).unwrap();
        let direct = Correspondence::unitary_equivalence(&t, &(&u2 * &u1)).unwrap();
        assert!(similarity_check(&direct, &comp, &u1).all_pass());
    }

    #[test]
    fn similarity_examples() {
        let t = random_triple(2, 70);
        let id = Correspondence::identity(&t).unwrap();
        assert!(similarity_check(&id, &id, &matrix::identity(2)).all_pass());
        let phase = matrix::identity(2) * c(-1.0, 0.0);
        assert!(!similarity_check(&id, &id, &phase).all_pass());
        // Central unitaries commuting with D relate two unitary equivalences.
        let a = direct_sum(&[full_matrix_algebra(1).unwrap(), full_matrix_algebra(1).unwrap()]).unwrap();
        let t = SpectralTriple::new(a, matrix::diag_real(&[1.0, 2.0]), None).unwrap();
        let mut rng = random::rng(71);
        let u1 = random::unitary(2, &mut rng);
        let z = matrix::diag(&[c(0.6, 0.8), c(0.0, 1.0)]);
        let u2 = &u1 * z.adjoint();
        let c1 = Correspondence::unitary_equivalence(&t, &u1).unwrap();
        let c2 = Correspondence::new(c1.connection.clone(), u2.clone(), c1.target.clone()).unwrap();
        let rep = similarity_check(&c1, &c2, &(u2.adjoint() * &u1));
        assert!(rep.all_pass(), "{rep:?}");
    }

    #[test]
    fn associativity() {
        let t = random_triple(2, 80);
        let mut rng = random::rng(81);
        let f = Connection::grassmannian(Module::projective(&ProjectiveModule::random(&t.algebra, 2, &mut rng).unwrap()), &t)
            .unwrap();
        let c1 = Correspondence::from_fluctuation(f).unwrap();
        let om = omega1(&c1.target).unwrap();
        let n1 = c1.target.dim();
        let w = om.space.basis.iter().fold(matrix::zeros(n1, n1), |acc, b| acc + b * random::complex(&mut rng));
        let c2 = Correspondence::inner_fluctuation(&c1.target, &matrix::hermitian_part(&w)).unwrap();
        let c3 = Correspondence::unitary_equivalence(&c2.target, &random::unitary(c2.target.dim(), &mut rng)).unwrap();
        let a = compose_correspondences(&compose_correspondences(&c1, &c2).unwrap(), &c3).unwrap();
        let b = compose_correspondences(&c1, &compose_correspondences(&c2, &c3).unwrap()).unwrap();
        let r = hs_norm(&(a.connection.dirac() - b.connection.dirac()));
        assert!(r < 1e-9, "{r}");
        assert!(hs_norm(&(a.transported_dirac() - b.transported_dirac())) < 1e-9);
    }

    #[test]
    fn sigma_is_a_bimodule_map() {
        let t = random_triple(2, 90);
        let mut rng = random::rng(91);
        let f = Connection::grassmannian(Module::projective(&ProjectiveModule::random(&t.algebra, 2, &mut rng).unwrap()), &t)
            .unwrap();
        let om = omega1(&t).unwrap();
        let alpha = random_alpha(&f.module, &om, &mut rng);
        let c = Correspondence::from_fluctuation(f.with_alpha(alpha).unwrap()).unwrap();
        let rep = check_sigma(&c, 4, 92).unwrap();
        assert!(rep.all_pass(), "{rep:?}");
    }

    #[test]
    fn rect_bimodule_compatibility_and_json() {
        assert!(RectBimodule::new(3, 2).unwrap().compatibility(10, 1).all_pass());
        let t = random_triple(2, 100);
        let c = Correspondence::inner_fluctuation(&t, &random::hermitian(2, &mut random::rng(3))).unwrap();
        let text = serde_json::to_string(&c.to_json()).unwrap();
        let back: CorrespondenceJson = serde_json::from_str(&text).unwrap();
        let c2 = back.to_correspondence().unwrap();
        assert!(hs_norm(&(c2.connection.alpha - &c.connection.alpha)) == 0.0);
        assert!(text.contains("\"U\""));
    }
}
