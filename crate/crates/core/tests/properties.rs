use faer::Mat;
use halfspace_lab::biorthogonal::{dual_system_for, select_subsequence, GAMMA_GROWTH, KAPPA_MAX};
use halfspace_lab::bridge::{assemble_small_norm, BridgeOptions};
use halfspace_lab::halfspace::{
    defect_estimate, invariance_residual, perturbation_from_defect, preannihilator, HalfSpaceRep, RankCut,
};
use halfspace_lab::linalg;
use halfspace_lab::operator::{operator_norm, resolvent_solve_detailed, RankOneTerm, SolveMethod};
use halfspace_lab::perturbation::small_norm_rank_one;
use halfspace_lab::resolvent::{build_family, ApproachSchedule, EStarCandidate};
use halfspace_lab::structure::{eigen_halfspace, orbit_minimality, partition, riesz_projection, ORBIT_DELTA};
use halfspace_lab::vector::functionals_to_rows;
use halfspace_lab::{c64, CVector, LabError, OperatorRep};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn c(re: f64) -> c64 {
    c64::new(re, 0.0)
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_c(r: &mut ChaCha8Rng) -> c64 {
    c64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0))
}

fn random_vector(r: &mut ChaCha8Rng, d: usize) -> CVector {
    CVector::from_fn(d, |_| random_c(r))
}

fn random_mat(r: &mut ChaCha8Rng, d: usize) -> Mat<c64> {
    Mat::from_fn(d, d, |_, _| random_c(r))
}

fn coordinate_span(d: usize, k: usize) -> HalfSpaceRep {
    HalfSpaceRep::from_span(&Mat::from_fn(d, k, |i, j| c(if i == j { 1.0 } else { 0.0 }))).unwrap()
}

fn shift_family(d: usize, q: f64, r: f64, seed: u64, n: usize) -> halfspace_lab::resolvent::ResolventFamily {
    let t = OperatorRep::unweighted_forward_shift(d).unwrap();
    let e = EStarCandidate::Gaussian(seed).vector(d).unwrap();
    build_family(&t, c(1.0), &ApproachSchedule::new(q, r).unwrap(), &e, n).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn adjoint_is_the_bilinear_transpose(d in 2usize..=64, seed in any::<u64>()) {
        let mut r = rng(seed);
        let t = OperatorRep::dense(random_mat(&mut r, d)).unwrap();
        let (f, x) = (random_vector(&mut r, d), random_vector(&mut r, d));
        let lhs = t.adjoint().apply(&f).pair(&x);
        let rhs = f.pair(&t.apply(&x));
        let scale = operator_norm(&t) * f.norm() * x.norm();
        prop_assert!((lhs - rhs).norm() <= 1e-12 * scale);
    }

    #[test]
    fn structured_solves_match_lu(d in 4usize..=96, seed in any::<u64>(), forward in any::<bool>()) {
        let mut r = rng(seed);
        let weights: Vec<f64> = (0..d - 1).map(|_| r.random_range(0.2..2.0)).collect();
        let t = if forward {
            OperatorRep::forward_shift(&weights, d).unwrap()
        } else {
            OperatorRep::backward_shift(&weights, d).unwrap()
        };
        let lambda = c64::from_polar(r.random_range(2.5..4.0), r.random_range(0.0..std::f64::consts::TAU));
        let b = random_vector(&mut r, d);
        let fast = resolvent_solve_detailed(&t, lambda, &b, SolveMethod::Auto).unwrap().h;
        let slow = resolvent_solve_detailed(&t, lambda, &b, SolveMethod::Dense).unwrap().h;
        prop_assert!((&fast - &slow).norm() <= 1e-10 * slow.norm());

        let entries: Vec<c64> = (0..d).map(|_| random_c(&mut r)).collect();
        let diag = OperatorRep::diagonal(&entries, d).unwrap();
        let mu = c(3.0);
        let fast = resolvent_solve_detailed(&diag, mu, &b, SolveMethod::Auto).unwrap().h;
        let slow = resolvent_solve_detailed(&diag, mu, &b, SolveMethod::Dense).unwrap().h;
        prop_assert!((&fast - &slow).norm() <= 1e-10 * slow.norm());
    }

    #[test]
    fn operator_norm_is_submultiplicative(d in 2usize..=48, seed in any::<u64>()) {
        let mut r = rng(seed);
        let t = OperatorRep::dense(random_mat(&mut r, d)).unwrap();
        let s = OperatorRep::dense(random_mat(&mut r, d)).unwrap();
        let ts = t.compose(&s).unwrap();
        prop_assert!(operator_norm(&ts) <= operator_norm(&t) * operator_norm(&s) * (1.0 + 1e-6));
    }

    #[test]
    fn resolvent_identity_and_scale_invariance(
        d in 64usize..=256, q in 0.5f64..1.5, r in 0.2f64..0.6, seed in any::<u64>()
    ) {
        let t = OperatorRep::unweighted_forward_shift(d).unwrap();
        let e = EStarCandidate::Gaussian(seed).vector(d).unwrap();
        let sched = ApproachSchedule::new(q, r).unwrap();
        let fam = build_family(&t, c(1.0), &sched, &e, 6).unwrap();
        prop_assert!(fam.max_inveq_residual() <= 1e-8);
        // normalized functionals: min = max = 1
        for x in &fam.x_stars {
            prop_assert!((x.norm() - 1.0).abs() <= 1e-12);
        }
        let doubled = build_family(&t, c(1.0), &sched, &e.scaled_real(2.0), 6).unwrap();
        for (a, b) in fam.x_stars.iter().zip(&doubled.x_stars) {
            prop_assert!((a - b).norm() <= 1e-12);
        }
        for (a, b) in fam.norms.iter().zip(&doubled.norms) {
            prop_assert!((b - 2.0 * a).abs() <= 1e-12 * b);
        }
    }

    #[test]
    fn selected_systems_are_biorthogonal(d in 128usize..=512, seed in any::<u64>()) {
        let fam = shift_family(d, 1.0, 0.25, seed, 8);
        let idx = match select_subsequence(&fam, KAPPA_MAX, GAMMA_GROWTH) {
            Ok(idx) => idx,
            Err(LabError::TooFewSelected { .. }) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        let sys = dual_system_for(&fam, &idx).unwrap();
        prop_assert!(sys.pairing_residual() <= 1e-8);
        prop_assert!(sys.gram_cond <= KAPPA_MAX);
    }

    #[test]
    fn preannihilator_dimension_count(d in 8usize..=48, k in 1usize..=6, dup in 0usize..=2, seed in any::<u64>()) {
        let mut r = rng(seed);
        let mut fs: Vec<CVector> = (0..k).map(|_| random_vector(&mut r, d)).collect();
        for i in 0..dup.min(k) {
            let v = fs[i].scaled(c64::new(0.0, 2.0));
            fs.push(v);
        }
        let z = preannihilator(&fs, d).unwrap();
        let rank = linalg::rank_above(&linalg::singular_values(&functionals_to_rows(&fs, d)).unwrap(), 1e-10);
        prop_assert_eq!(z.dim + rank, d);
        prop_assert!(z.annihilation_residual() <= 1e-12);
    }

    #[test]
    fn normalization_keeps_the_preannihilator(d in 64usize..=256, seed in any::<u64>()) {
        let fam = shift_family(d, 1.0, 0.25, seed, 4);
        let zh = preannihilator(&fam.h_stars, d).unwrap();
        let zx = preannihilator(&fam.x_stars, d).unwrap();
        prop_assert!(linalg::subspace_distance(&zh.basis, &zx.basis).unwrap() <= 1e-10);
    }

    #[test]
    fn defect_and_rank_one_perturbations_correspond(d in 16usize..=64, seed in any::<u64>()) {
        let mut r = rng(seed);
        let entries: Vec<c64> = (0..d).map(|_| random_c(&mut r)).collect();
        let k = r.random_range(2..d - 2);
        let y = coordinate_span(d, k);
        let (cf, f) = (random_vector(&mut r, d), random_vector(&mut r, d));
        let t = OperatorRep::diagonal(&entries, d)
            .unwrap()
            .with_rank_one_terms(&[RankOneTerm::new(cf.clone(), f.clone())])
            .unwrap();
        prop_assert!(defect_estimate(&t, &y, RankCut::default()).unwrap().defect <= 1);
        let p = perturbation_from_defect(&t, &y, &f, &cf, 1e-8).unwrap();
        let tp = p.perturb(&t).unwrap();
        prop_assert!(invariance_residual(&tp, &y) <= 1e-8);
        // and back: an invariant T + F with F rank one leaves T with defect <= 1
        prop_assert!(defect_estimate(&tp, &y, RankCut::default()).unwrap().defect == 0);
    }

    #[test]
    fn eigenvector_spans_have_no_defect(d in 4usize..=24, seed in any::<u64>()) {
        let mut r = rng(seed);
        let entries: Vec<f64> = (0..d).map(|i| i as f64 + r.random_range(0.0..0.5)).collect();
        let t = OperatorRep::diagonal_real(&entries).unwrap();
        let pairs: Vec<(c64, CVector)> = (0..d).map(|i| (c(entries[i]), CVector::unit(d, i))).collect();
        let cut = r.random_range(1..d);
        let eh = eigen_halfspace(&t, &pairs[..cut], &pairs[cut..]).unwrap();
        prop_assert_eq!(eh.defect.defect, 0);
        prop_assert!(eh.max_cross_pairing <= 1e-12);
    }

    #[test]
    fn orbit_refinement_at_failing_index(d in 4usize..=16, seed in any::<u64>()) {
        let mut r = rng(seed);
        let entries: Vec<f64> = (0..d).map(|_| r.random_range(0.5..2.0)).collect();
        let t = OperatorRep::diagonal_real(&entries).unwrap();
        let z = random_vector(&mut r, d);
        // d + 1 orbit vectors in dimension d cannot be minimal
        let rep = orbit_minimality(&t, &z, d, ORBIT_DELTA).unwrap();
        prop_assert!(!rep.minimal);
        if let Some(res) = rep.refinement_residual {
            prop_assert!(res <= ORBIT_DELTA);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn small_norm_budget_chain(seed in any::<u64>(), eps in 0.2f64..1.0) {
        let d = 512;
        let t = OperatorRep::unweighted_forward_shift(d).unwrap();
        let e = EStarCandidate::Gaussian(seed).vector(d).unwrap();
        let fam = build_family(&t, c(1.0), &ApproachSchedule::default(), &e, 6).unwrap();
        let Ok(idx) = select_subsequence(&fam, KAPPA_MAX, GAMMA_GROWTH) else { return Ok(()) };
        let bio = dual_system_for(&fam, &idx).unwrap();
        let out = match small_norm_rank_one(&t, &fam, &bio, eps) {
            Ok(o) => o,
            Err(LabError::BudgetInfeasible { .. }) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        let norm = out.perturbation.norm;
        prop_assert!(norm <= out.dual_sum_bound * (1.0 + 1e-12));
        prop_assert!(out.dual_sum_bound <= out.budget_bound * (1.0 + 1e-12));
        prop_assert!(out.budget_bound < eps);
        prop_assert!(out.unit_pairing_residual <= 1e-8);
        prop_assert!(out.invariance_residual <= 1e-8);
    }

    #[test]
    fn riesz_algebra_on_split_diagonals(d in 4usize..=24, seed in any::<u64>()) {
        let mut r = rng(seed);
        let entries: Vec<c64> = (0..d)
            .map(|i| c(if i % 2 == 0 { 0.0 } else { 5.0 }) + random_c(&mut r) * 0.3)
            .collect();
        let m = Mat::from_fn(d, d, |i, j| {
            if i == j { entries[i] } else if j > i { random_c(&mut r) * 0.5 } else { c(0.0) }
        });
        let t = OperatorRep::dense(m).unwrap();
        let t_norm = operator_norm(&t);
        let mut ps = vec![
            riesz_projection(&t, c(0.0), 2.0, 64).unwrap(),
            riesz_projection(&t, c(5.0), 2.0, 64).unwrap(),
        ];
        prop_assert!(partition(&mut ps).unwrap() <= 1e-8);
        for p in &ps {
            let pn = linalg::spectral_norm(p.p.matrix()).unwrap();
            prop_assert!(p.residuals.idempotency <= 1e-8 * pn);
            prop_assert!(p.residuals.commutation <= 1e-8 * t_norm * pn);
        }
    }

    #[test]
    fn bridge_budget_and_injectivity(d in 4usize..=12, seed in any::<u64>(), eps in 0.05f64..0.5) {
        let mut r = rng(seed);
        // strictly upper triangular with a zero superdiagonal entry: nilpotent with a larger kernel
        let gap = r.random_range(0..d - 1);
        let m = Mat::from_fn(d, d, |i, j| if j > i && !(j == i + 1 && i == gap) { random_c(&mut r) } else { c(0.0) });
        let t = OperatorRep::nilpotent(m).unwrap();
        let a = match assemble_small_norm(&t, eps, &BridgeOptions::default()) {
            Err(LabError::BranchUnsupported { partial, .. }) => *partial,
            Ok(a) => a,
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        let cert = &a.certificate;
        prop_assert!(cert.alpha_g_norm < eps / 2.0);
        prop_assert!(cert.rank_bound <= cert.n.min(cert.m) + 1);
        if let Some(s) = cert.injectivity_sigma_min {
            prop_assert!(s > 0.0);
        }
    }
}
