use ncgeom::algebra::{diagonal_algebra, direct_sum, evaluate, full_matrix_algebra, vector_state, MatrixAlgebra, State};
use ncgeom::connections::{
    check_sigma, check_well_defined, fluctuate, hermitian_compatibility, random_alpha, Connection, Correspondence, Module,
    ProjectiveModule,
};
use ncgeom::distance::{Constraint, DistanceProblem, DistanceResult, Status};
use ncgeom::gauge::GaugeCategory;
use ncgeom::matrix::{self, c, random, ComplexMatrix, SPAN_REL_TOL};
use ncgeom::moyal;
use ncgeom::triple::{omega1, one_form_generators, unitary_equivalent, wigner_double, SpectralTriple};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::Rng as _;

const TOL: f64 = 1e-7;

fn random_algebra(kind: u8, n: usize) -> MatrixAlgebra {
    match kind % 4 {
        0 => full_matrix_algebra(n).unwrap(),
        1 => diagonal_algebra(n).unwrap(),
        2 => direct_sum(&[full_matrix_algebra(1).unwrap(), full_matrix_algebra(n).unwrap()]).unwrap(),
        _ => full_matrix_algebra(n).unwrap().amplify(2),
    }
}

fn random_state(n: usize, rng: &mut random::TestRng) -> State {
    State::new(random::state_density(n, rng)).unwrap()
}

fn certified(r: &DistanceResult) -> bool {
    r.status == Status::Certified
}

/// Generic `D` over the diagonal algebra: the commutant is scalar, so all distances are finite.
fn diagonal_triple(n: usize, rng: &mut random::TestRng) -> SpectralTriple {
    SpectralTriple::new(diagonal_algebra(n).unwrap(), random::hermitian(n, rng), None).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn eigendecomposition_reconstructs(n in 1usize..=16, seed in any::<u64>()) {
        let m = random::hermitian(n, &mut random::rng(seed));
        let (vals, u) = matrix::herm_eig(&m).unwrap();
        let rebuilt = &u * matrix::diag_real(&vals) * u.adjoint();
        prop_assert!(matrix::hs_norm(&(rebuilt - &m)) <= 1e-9 * matrix::hs_norm(&m).max(1e-300));
        prop_assert!(matrix::hs_norm(&(u.adjoint() * &u - matrix::identity(n))) <= 1e-10);
        prop_assert!(vals.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn operator_norm_is_multiplicative_on_kron(p in 1usize..=5, q in 1usize..=5, seed in any::<u64>()) {
        let mut rng = random::rng(seed);
        let (a, b) = (random::matrix(p, p + 1, &mut rng), random::matrix(q, q, &mut rng));
        let lhs = matrix::operator_norm(&matrix::kron(&a, &b));
        let rhs = matrix::operator_norm(&a) * matrix::operator_norm(&b);
        prop_assert!((lhs - rhs).abs() <= 1e-9 * rhs.max(1.0));
    }

    #[test]
    fn span_contains_combinations(n in 2usize..=5, k in 1usize..=6, seed in any::<u64>()) {
        let mut rng = random::rng(seed);
        let spanners: Vec<ComplexMatrix> = (0..k).map(|_| random::matrix(n, n, &mut rng)).collect();
        let s = matrix::subspace_span(&spanners, SPAN_REL_TOL).unwrap();
        let v = spanners.iter().fold(matrix::zeros(n, n), |acc, x| acc + x * random::complex(&mut rng));
        let (inside, residual) = matrix::subspace_contains(&s, &v);
        prop_assert!(inside && residual <= 1e-10, "{residual}");
    }

    #[test]
    fn algebras_are_star_closed(kind in any::<u8>(), n in 1usize..=3, seed in any::<u64>()) {
        let a = random_algebra(kind, n);
        let basis = a.basis();
        let mut rng = random::rng(seed);
        for _ in 0..4 {
            let x = &basis[rng.gen_range(0..basis.len())];
            let y = &basis[rng.gen_range(0..basis.len())];
            let (ok, r) = a.contains(&(x * y));
            prop_assert!(ok && r <= 1e-10);
            let (ok, r) = a.contains(&x.adjoint());
            prop_assert!(ok && r <= 1e-10);
        }
    }

    #[test]
    fn states_are_positive_and_real_on_adjoints(n in 1usize..=6, seed in any::<u64>()) {
        let mut rng = random::rng(seed);
        let phi = random_state(n, &mut rng);
        let a = random::matrix(n, n, &mut rng);
        let lhs = evaluate(&phi, &a.adjoint()).unwrap();
        prop_assert!((lhs - evaluate(&phi, &a).unwrap().conj()).norm() <= 1e-12);
        let h = matrix::hermitian_part(&a);
        let ev = matrix::herm_eigenvalues(&h).unwrap();
        let v = evaluate(&phi, &h).unwrap().re;
        prop_assert!(v >= ev[0] - 1e-10 && v <= ev[n - 1] + 1e-10);
    }

    #[test]
    fn one_forms_shrink_under_inner_fluctuation(n in 2usize..=3, kind in any::<u8>(), seed in any::<u64>()) {
        let mut rng = random::rng(seed);
        let a = random_algebra(kind, n);
        let dim = a.hilbert_dim;
        let t = SpectralTriple::new(a, random::hermitian(dim, &mut rng), None).unwrap();
        let om = omega1(&t).unwrap();
        let w = om.space.basis.iter().fold(matrix::zeros(dim, dim), |acc, b| acc + b * random::complex(&mut rng));
        let t2 = t.with_dirac(&t.dirac + matrix::hermitian_part(&w)).unwrap();
        for g in one_form_generators(&t2) {
            let (ok, r) = om.contains(&g);
            prop_assert!(ok && r <= 1e-9, "{r}");
        }
    }

    #[test]
    fn full_algebra_one_forms_are_everything(n in 1usize..=4, seed in any::<u64>(), scalar in any::<bool>()) {
        let mut rng = random::rng(seed);
        let d = if scalar { matrix::identity(n) * c(rng.gen_range(-2.0..2.0), 0.0) } else { random::hermitian(n, &mut rng) };
        let nontrivial = !scalar && n > 1;
        let t = SpectralTriple::new(full_matrix_algebra(n).unwrap(), d.clone(), None).unwrap();
        let rank = omega1(&t).unwrap().rank();
        prop_assert_eq!(rank, if nontrivial { n * n } else { 0 });
        let cat = GaugeCategory::new(full_matrix_algebra(n).unwrap());
        prop_assert_eq!(cat.is_initial(&d).unwrap(), nontrivial);
    }

    #[test]
    fn unitaries_transport_one_forms(n in 2usize..=4, seed in any::<u64>()) {
        let mut rng = random::rng(seed);
        let t = diagonal_triple(n, &mut rng);
        let u = random::unitary(n, &mut rng);
        let conj = |x: &ComplexMatrix| &u * x * u.adjoint();
        let basis = t.algebra.basis().iter().map(conj).collect();
        let a2 = MatrixAlgebra::from_basis(n, basis, true).unwrap();
        let t2 = SpectralTriple::new(a2, conj(&t.dirac), None).unwrap();
        prop_assert!(unitary_equivalent(&t, &t2, &u).all_pass());
        let om2 = omega1(&t2).unwrap();
        for b in &omega1(&t).unwrap().space.basis {
            let (ok, r) = om2.contains(&conj(b));
            prop_assert!(ok && r <= 1e-9, "{r}");
        }
    }

    #[test]
    fn gauge_morphisms_are_unique_and_compose(n in 2usize..=3, seed in any::<u64>()) {
        let mut rng = random::rng(seed);
        let a = diagonal_algebra(n).unwrap();
        let cat = GaugeCategory::new(a.clone());
        let d = random::hermitian(n, &mut rng);
        let identity = cat.mor(&d, &d).unwrap();
        prop_assert!(identity.is_some());
        let om = cat.omega1(&d).unwrap();
        let pick = |rng: &mut random::TestRng| {
            let w = om.space.basis.iter().fold(matrix::zeros(n, n), |acc, b| acc + b * random::complex(rng));
            matrix::hermitian_part(&w)
        };
        let d1 = &d + pick(&mut rng);
        let f = cat.mor(&d, &d1).unwrap().expect("perturbation by a one-form");
        prop_assert_eq!(&f.omega, &(&d1 - &d));
        if let Some(g) = cat.mor(&d1, &(&d1 + pick(&mut rng))).unwrap() {
            let h = cat.compose(&f, &g).unwrap();
            prop_assert!(cat.mor(&d, &h.target).unwrap().is_some());
        }
        let off = random::hermitian(n, &mut rng);
        if let Some(m) = cat.mor(&d, &off).unwrap() {
            prop_assert_eq!(m.omega, &off - &d);
        }
    }

    #[test]
    fn grassmannian_connections_are_compatible(n in 2usize..=3, seed in any::<u64>()) {
        let mut rng = random::rng(seed);
        let t = SpectralTriple::new(full_matrix_algebra(n).unwrap(), random::hermitian(n, &mut rng), None).unwrap();
        let pm = ProjectiveModule::random(&t.algebra, 2, &mut rng).unwrap();
        let module = Module::projective(&pm);
        let alpha = random_alpha(&module, &omega1(&t).unwrap(), &mut rng);
        let conn = Connection::grassmannian(module, &t).unwrap().with_alpha(alpha).unwrap();
        let rep = hermitian_compatibility(&conn, 5, seed);
        prop_assert!(rep.all_pass() && rep.max_residual() <= 1e-9, "{rep:?}");
        let rep = check_well_defined(&conn, 5, seed);
        prop_assert!(rep.all_pass() && rep.max_residual() <= 1e-10, "{rep:?}");
        let rep = check_sigma(&Correspondence::from_fluctuation(conn).unwrap(), 3, seed).unwrap();
        prop_assert!(rep.all_pass(), "{rep:?}");
    }

    #[test]
    fn trivial_fluctuation_is_the_base(kind in any::<u8>(), n in 1usize..=3, seed in any::<u64>()) {
        let mut rng = random::rng(seed);
        let a = random_algebra(kind, n);
        let dim = a.hilbert_dim;
        let t = SpectralTriple::new(a, random::hermitian(dim, &mut rng), None).unwrap();
        let conn = Connection::grassmannian(Module::projective(&ProjectiveModule::free(&t.algebra, 1).unwrap()), &t).unwrap();
        let f = fluctuate(&t, &conn).unwrap();
        let rep = unitary_equivalent(&f, &t, &matrix::identity(dim));
        prop_assert!(rep.all_pass() && rep.max_residual() <= 1e-10);
    }

    #[test]
    fn embedding_is_isometric(theta in 0.05f64..4.0, m in 0usize..40, n in 0usize..40) {
        let x = moyal::embedding_points(theta, 40);
        let f = moyal::eigenstate_distance_formula(m, n, theta);
        prop_assert!((f - (x[m] - x[n]).abs()).abs() <= 1e-14 * f.max(1.0));
    }

    #[test]
    fn galilean_relations(n in 24usize..=40, theta in 0.5f64..2.0, zr in -0.5f64..0.5, zi in -0.5f64..0.5,
                          wr in -0.5f64..0.5, wi in -0.5f64..0.5) {
        let (z, w) = (c(zr, zi), c(wr, wi));
        let phase = Complex64::new(0.0, (z * w.conj()).im / (2.0 * theta)).exp();
        let sides = |m: &moyal::MoyalTruncation, k: usize| {
            let lhs = (m.translation(z) * m.translation(w)).view((0, 0), (k, k)).into_owned();
            let rhs = (m.translation(z + w) * phase).view((0, 0), (k, k)).into_owned();
            (lhs, rhs)
        };
        let m = moyal::truncation(n, theta).unwrap();
        let k = m.interior();
        let (lhs, rhs) = sides(&m, k);
        // Same block with the edge far away.
        let (lhs_far, rhs_far) = sides(&moyal::truncation(3 * n, theta).unwrap(), k);
        prop_assert!(matrix::max_abs(&(&lhs_far - &rhs_far)) <= 1e-9);
        // At size N the residual is accounted for by the truncation defect of each side.
        let defect = matrix::max_abs(&(&lhs - &lhs_far)) + matrix::max_abs(&(&rhs - &rhs_far));
        prop_assert!(matrix::max_abs(&(&lhs - &rhs)) <= defect + 1e-10);
    }

    #[test]
    fn ladder_and_dirac_square(n in 2usize..=30, theta in 0.1f64..5.0) {
        let m = moyal::truncation(n, theta).unwrap();
        let number = matrix::diag_real(&(0..n).map(|k| k as f64).collect::<Vec<_>>());
        prop_assert!(matrix::max_abs(&(&m.ladder_dag * &m.ladder - &number)) <= 8.0 * f64::EPSILON * n as f64);
        let d2 = &m.triple.dirac * &m.triple.dirac;
        let s = 2.0 / theta;
        let expected = matrix::block_diag(&[&(&m.ladder * &m.ladder_dag * c(s, 0.0)), &(&m.ladder_dag * &m.ladder * c(s, 0.0))]);
        prop_assert!(matrix::max_abs(&(d2 - expected)) <= 1e-12 * s * n as f64);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]

    #[test]
    fn solutions_carry_certificates(n in 2usize..=4, seed in any::<u64>()) {
        let mut rng = random::rng(seed);
        let t = diagonal_triple(n, &mut rng);
        let p = DistanceProblem::new(&t, Constraint::Full).unwrap();
        let (a, b) = (random_state(n, &mut rng), random_state(n, &mut rng));
        let r = p.solve(&a, &b, TOL).unwrap();
        prop_assert!(certified(&r));
        prop_assert!(matrix::operator_norm(&matrix::commutator(&t.dirac, &r.optimizer)) <= 1.0 + 1e-12);
        let value = (evaluate(&a, &r.optimizer).unwrap() - evaluate(&b, &r.optimizer).unwrap()).re;
        prop_assert!((value - r.lower).abs() <= 1e-14 * value.abs().max(1.0));
        let upper = p.revalidate(&r, &a, &b).unwrap();
        prop_assert!(upper >= r.lower - 1e-12 && (upper - r.upper).abs() <= TOL * upper.max(1.0), "{upper} {r:?}");
    }

    #[test]
    fn distances_scale_inversely(n in 2usize..=4, s in 0.25f64..4.0, seed in any::<u64>()) {
        let mut rng = random::rng(seed);
        let t = diagonal_triple(n, &mut rng);
        let ts = t.with_dirac(&t.dirac * c(s, 0.0)).unwrap();
        let (a, b) = (random_state(n, &mut rng), random_state(n, &mut rng));
        let r = DistanceProblem::new(&t, Constraint::Full).unwrap().solve(&a, &b, TOL).unwrap();
        let rs = DistanceProblem::new(&ts, Constraint::Full).unwrap().solve(&a, &b, TOL).unwrap();
        prop_assert!(certified(&r) && certified(&rs));
        let scale = rs.value().max(r.value() / s).max(1.0);
        prop_assert!((rs.value() - r.value() / s).abs() <= 2.0 * TOL * scale, "{} {}", rs.value(), r.value() / s);
    }

    #[test]
    fn triangle_inequality(n in 2usize..=4, seed in any::<u64>()) {
        let mut rng = random::rng(seed);
        let t = diagonal_triple(n, &mut rng);
        let p = DistanceProblem::new(&t, Constraint::Full).unwrap();
        let s: Vec<State> = (0..3).map(|_| random_state(n, &mut rng)).collect();
        let ab = p.solve(&s[0], &s[1], TOL).unwrap();
        let bc = p.solve(&s[1], &s[2], TOL).unwrap();
        let ac = p.solve(&s[0], &s[2], TOL).unwrap();
        prop_assert!(ac.lower <= ab.upper + bc.upper + 2e-7);
    }

    #[test]
    fn rotations_preserve_moyal_distances(n in 4usize..=8, alpha in 0.0f64..6.3, seed in any::<u64>()) {
        let mut rng = random::rng(seed);
        let m = moyal::truncation(n, 1.0).unwrap();
        let p = DistanceProblem::new(&m.triple, Constraint::Even).unwrap();
        let (u, v) = (random::unit_vector(n, &mut rng), random::unit_vector(n, &mut rng));
        let r = m.rotation(c(alpha, 0.0));
        let d0 = p.solve(&m.vector_state(&u).unwrap(), &m.vector_state(&v).unwrap(), TOL).unwrap();
        let d1 = p.solve(&m.vector_state(&(&r * &u)).unwrap(), &m.vector_state(&(&r * &v)).unwrap(), TOL).unwrap();
        prop_assert!(certified(&d0) && certified(&d1));
        prop_assert!((d0.value() - d1.value()).abs() <= 2.0 * TOL * d0.value().max(1.0));
    }

    #[test]
    fn wigner_double_preserves_distances(n in 2usize..=4, seed in any::<u64>()) {
        let mut rng = random::rng(seed);
        let t = diagonal_triple(n, &mut rng);
        let w = wigner_double(&t).unwrap();
        let (a, b) = (random::unit_vector(n, &mut rng), random::unit_vector(n, &mut rng));
        // A vector ψ of H becomes the matrix with ψ as its first column.
        let lift = |v: &ncgeom::matrix::ComplexVector| {
            let mut big = ncgeom::matrix::ComplexVector::zeros(n * n);
            big.rows_mut(0, n).copy_from(v);
            vector_state(&big).unwrap()
        };
        let d = DistanceProblem::new(&t, Constraint::Full).unwrap()
            .solve(&vector_state(&a).unwrap(), &vector_state(&b).unwrap(), TOL).unwrap();
        let dw = DistanceProblem::new(&w, Constraint::Full).unwrap().solve(&lift(&a), &lift(&b), TOL).unwrap();
        prop_assert!(certified(&d) && certified(&dw));
        prop_assert!((d.value() - dw.value()).abs() <= 2.0 * TOL * d.value().max(1.0), "{} {}", d.value(), dw.value());
    }
}
