use cpcp::centroid::{self, centroid_init};
use cpcp::diagnostics::{self, SwampOptions};
use cpcp::reduced::{self, build_kernel};
use cpcp::solvers::{self, decompose, random_factors, Init, Method, SolverConfig, Status};
use cpcp::{FactorSet, Mode, Tensor3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn gaussian_tensor(dims: [usize; 3], seed: u64) -> Tensor3 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..dims.iter().product::<usize>()).map(|_| StandardNormal.sample(&mut rng)).collect();
    Tensor3::new(dims, data).unwrap()
}

#[test]
fn objective_is_invariant_under_mode_rotation() {
    let t = gaussian_tensor([3, 4, 5], 1);
    let f = random_factors([3, 4, 5], 2, 2).unwrap();
    let base = reduced::objective(&t, &f).unwrap();
    for mode in Mode::ALL {
        let rotated = reduced::objective(&t.mode_view(mode), &f.mode_view(mode)).unwrap();
        assert!((base - rotated).abs() <= 1e-12 * base);
    }
}

#[test]
fn every_mode_candidate_respects_its_bounds() {
    for seed in 0..10 {
        let t = gaussian_tensor([3, 4, 4], 10 + seed);
        let bundle = centroid_init(&t, 2).unwrap();
        assert_eq!(bundle.candidates.len(), 3);
        for cand in &bundle.candidates {
            let view = t.mode_view(cand.mode);
            let f = cand.factors.mode_view(cand.mode);
            let jred = reduced::jred_direct(&view, &f.b, &f.c).unwrap();
            assert!(cand.bounds.lower <= jred + 1e-10);
            assert!(jred <= cand.bounds.upper + 1e-10);
            assert!((cand.bounds.upper - cand.bounds.lower - cand.bounds.gap).abs() < 1e-10);
        }
        assert!(bundle.init_objective <= bundle.candidates.iter().map(|c| c.objective).fold(f64::INFINITY, f64::min));
        assert!(bundle.best_lower_bound() >= bundle.lower_bound);
    }
}

#[test]
fn bounds_agree_with_the_kernel_route() {
    let t = gaussian_tensor([4, 3, 5], 7);
    let kernel = build_kernel(&t).unwrap();
    let b = centroid::bounds(&kernel, 2).unwrap();
    assert!((b.lower - centroid::lower_bound(&kernel, 2).unwrap()).abs() < 1e-12);
    assert!((b.upper - centroid::upper_bound(&kernel, 2).unwrap()).abs() < 1e-12);
    assert!((b.gap - centroid::gap_bound(&kernel, 2).unwrap()).abs() < 1e-12);
    assert!(b.centroid_norm <= 1.0 + 1e-12);
    assert!((kernel.trace() - cpcp::tensor::frobenius_sq(&t)).abs() < 1e-10);
}

#[test]
fn all_methods_recover_an_exact_tensor() {
    let truth = random_factors([5, 4, 6], 2, 3).unwrap();
    let t = Tensor3::from_factors(&truth);
    for method in [Method::Als, Method::Rals, Method::Lsals] {
        let mut cfg = SolverConfig::new(method, Init::Centroid, 2);
        cfg.max_iters = 2000;
        let out = decompose(&t, &cfg).unwrap();
        assert_eq!(out.status, Status::Converged, "{method}");
        assert!(out.trace.final_objective() < 1e-10);
        let rebuilt = Tensor3::from_factors(&out.factors);
        let err = cpcp::tensor::frobenius_sq(&rebuilt.sub(&t).unwrap());
        assert!(err < 1e-9);
    }
}

#[test]
fn traces_are_gapless_and_monotone_for_als() {
    let t = gaussian_tensor([4, 4, 4], 5);
    let mut cfg = SolverConfig::new(Method::Als, Init::Random { seed: 9 }, 3);
    cfg.max_iters = 200;
    cfg.keep_history = true;
    let out = decompose(&t, &cfg).unwrap();
    for (n, rec) in out.trace.records.iter().enumerate() {
        assert_eq!(rec.iter, n + 1);
        assert!(rec.alpha.is_none() && rec.step.is_none());
    }
    let mut prev = out.trace.initial_objective;
    for obj in out.trace.objectives() {
        assert!(obj <= prev + 1e-12);
        prev = obj;
    }
    let history = out.history.unwrap();
    assert_eq!(history.len(), out.trace.records.len() + 1);
    assert_eq!(history.last().unwrap(), &out.factors);
}

#[test]
fn swamp_report_follows_a_solver_history() {
    let t = gaussian_tensor([4, 4, 4], 6);
    let mut cfg = SolverConfig::new(Method::Lsals, Init::Random { seed: 2 }, 2);
    cfg.max_iters = 30;
    cfg.keep_history = true;
    let out = decompose(&t, &cfg).unwrap();
    let history: Vec<FactorSet> = out.history.unwrap();
    let objectives = diagnostics::history_objectives(&t, &history).unwrap();
    assert!((objectives[0] - out.trace.initial_objective).abs() < 1e-12);
    let report = diagnostics::swamp_report(&history, &objectives, &SwampOptions::default()).unwrap();
    assert_eq!(report.steps.len(), history.len() - 1);
    for (step, rec) in report.steps.iter().zip(&out.trace.records) {
        assert_eq!(step.iter, rec.iter);
        assert!(step.proj_distance.iter().all(|d| (0.0..=1.0 + 1e-12).contains(d)));
    }
}

#[test]
fn symmetric_solver_keeps_b_equal_to_c() {
    let a = random_factors([4, 4, 4], 2, 4).unwrap().a;
    let f = FactorSet::new(a.clone(), a.clone(), a).unwrap();
    let t = Tensor3::from_factors(&f);
    let mut cfg = SolverConfig::new(Method::Als, Init::CentroidSymmetric, 2);
    cfg.symmetric = true;
    cfg.keep_history = true;
    let out = decompose(&t, &cfg).unwrap();
    for it in out.history.unwrap() {
        assert_eq!(it.b, it.c);
    }
    assert!(out.trace.final_objective() < 1e-8);
}

#[test]
fn rank_one_sweep_matches_the_general_sweep() {
    let t = gaussian_tensor([2, 3, 2], 8);
    let f = random_factors([2, 3, 2], 1, 1).unwrap();
    let next = solvers::als_sweep(&t, &f).unwrap();
    let residual = diagnostics::rank1_critical_residual(
        &t,
        next.a.as_slice(),
        next.b.as_slice(),
        next.c.as_slice(),
    )
    .unwrap();
    // one sweep from a random start is not yet critical
    assert!(residual > 0.0);
    let mut g = next;
    for _ in 0..2000 {
        g = solvers::als_sweep(&t, &g).unwrap();
    }
    let residual =
        diagnostics::rank1_critical_residual(&t, g.a.as_slice(), g.b.as_slice(), g.c.as_slice()).unwrap();
    assert!(residual < 1e-8, "{residual:e}");
}
