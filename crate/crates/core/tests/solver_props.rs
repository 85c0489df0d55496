mod common;

use adfsdca::probability::{compute_residues, optimal_probabilities};
use adfsdca::solver::{
    compute_gap, epochs_to_target, expected_update, residue_gradient, run_reference, step_serial, variance_check,
    IterationView, Observer, Reference, RunStatus, ThetaPolicy,
};
use adfsdca::{
    CaseParams, ConvexityCase, Dataset, LossKind, LossModel, SamplingPlan, Solver, SolverConfig, SolverState, Variant,
};
use rand::Rng;

fn lambda_for(ds: &Dataset) -> f64 {
    1.0 / (ds.n() as f64).sqrt()
}

/// Remembers every state a solver steps from.
#[derive(Default)]
struct Trajectory {
    states: Vec<(Vec<f64>, Vec<f64>)>,
    picks: Vec<Vec<usize>>,
    drawn: Vec<f64>,
    probabilities: Vec<Vec<f64>>,
}

impl Observer for Trajectory {
    fn iteration(&mut self, v: &IterationView<'_>) {
        self.states.push((v.state.alpha.clone(), v.state.w.clone()));
        self.picks.push(v.picks.to_vec());
        self.drawn.extend_from_slice(v.draw_probabilities);
        if self.probabilities.is_empty() {
            if let Some(p) = v.probabilities {
                self.probabilities.push(p.to_vec());
            }
        }
    }
}

fn one_dimensional() -> Dataset {
    Dataset::from_rows(vec![vec![(0, 1.0)]], vec![1.0], None).unwrap()
}

#[test]
fn one_dimensional_problem_converges_geometrically() {
    let ds = one_dimensional();
    let loss = LossModel::new(LossKind::Quadratic, &ds).unwrap();
    let reference = run_reference(&ds, &loss, 1.0).unwrap();
    assert!((reference.w[0] - 0.5).abs() < 1e-12);
    assert!((reference.primal - 0.25).abs() < 1e-12);
    for variant in [Variant::Dfsdca, Variant::Adfsdca, Variant::AdfsdcaPlus] {
        let mut cfg = SolverConfig::new(variant, 1.0);
        cfg.epochs = 200;
        cfg.trace_every = Some(1);
        let res = Solver::new(&ds, &loss, cfg).unwrap().with_reference(&reference).run().unwrap();
        let subopt: Vec<f64> = res.trace.iter().map(|r| r.subopt.unwrap()).collect();
        assert!(res.trace.iter().any(|r| r.iter <= 200 && r.subopt.unwrap() < 1e-10), "{variant}");
        for w in subopt.windows(2).take(10) {
            assert!(w[1] <= 0.5 * w[0] + 1e-15, "{variant}: {subopt:?}");
        }
    }
}

#[test]
fn step_with_theta_equal_to_p_zeroes_the_residue() {
    let ds = common::small_dataset(6, 4, 2);
    let loss = LossModel::new(LossKind::Logistic, &ds).unwrap();
    let lambda = 0.2;
    let mut rng = common::rng(3);
    let alpha: Vec<f64> = (0..6).map(|_| rng.random_range(-0.5..0.5)).collect();
    let mut state = SolverState::new(&ds, lambda, Some(&alpha), 0).unwrap();
    let k = compute_residues(&state.alpha, &state.w, &ds, &loss).unwrap();
    let i = 3;
    let g = loss.derivative(ds.row(i).dot(&state.w), ds.labels()[i]);
    step_serial(&mut state, &ds, i, 0.3, k.values()[i], 0.3, lambda).unwrap();
    assert!((state.alpha[i] + g).abs() < 1e-15);
}

#[test]
fn serial_step_matches_dense_oracle() {
    let ds = Dataset::from_rows(vec![vec![(0, 1.0), (1, 2.0)], vec![(0, -0.5), (1, 1.5)]], vec![1.0, -1.0], None).unwrap();
    let loss = LossModel::new(LossKind::Quadratic, &ds).unwrap();
    let x = common::dense(&ds);
    let lambda = 0.7;
    let alpha = vec![0.3, -0.2];
    let mut state = SolverState::new(&ds, lambda, Some(&alpha), 0).unwrap();
    let w0 = common::dense_link(&x, lambda, &alpha);
    for (a, b) in state.w.iter().zip(&w0) {
        assert!((a - b).abs() < 1e-15);
    }
    let kappa = common::dense_residues(&x, ds.labels(), &alpha, &w0, LossKind::Quadratic);
    let k = compute_residues(&state.alpha, &state.w, &ds, &loss).unwrap();
    let (theta, p, i) = (0.1, 0.5, 1);
    step_serial(&mut state, &ds, i, p, k.values()[i], theta, lambda).unwrap();
    let s = theta * kappa[i] / (2.0 * lambda * p);
    let expected: Vec<f64> = w0.iter().zip(&x[i]).map(|(w, xi)| w - s * xi).collect();
    for (a, b) in state.w.iter().zip(&expected) {
        assert!((a - b).abs() < 1e-14, "{a} vs {b}");
    }
    assert!((state.alpha[i] - (alpha[i] - theta * kappa[i] / p)).abs() < 1e-15);
    assert_eq!(state.alpha[0], alpha[0]);
}

#[test]
fn optimal_start_exits_immediately() {
    let ds = Dataset::from_rows(vec![vec![(0, 1.0)], vec![(1, 1.0)]], vec![1.0, -1.0], None).unwrap();
    let loss = LossModel::new(LossKind::Quadratic, &ds).unwrap();
    for variant in Variant::ALL {
        let mut cfg = SolverConfig::new(variant, 0.5);
        cfg.alpha0 = Some(vec![0.5, -0.5]);
        let res = Solver::new(&ds, &loss, cfg).unwrap().run().unwrap();
        assert_eq!(res.status, RunStatus::Converged, "{variant}");
        assert_eq!(res.state.iteration, 0);
        assert_eq!(res.state.w, vec![0.5, -0.5]);
    }
}

#[test]
fn link_holds_over_many_epochs() {
    let big = common::bench_dataset();
    let small = common::small_dataset(80, 10, 4);
    for kind in [LossKind::Quadratic, LossKind::Logistic] {
        for (ds, variant) in [(&big, Variant::Dfsdca), (&big, Variant::AdfsdcaPlus), (&small, Variant::Adfsdca)] {
            let loss = LossModel::new(kind, ds).unwrap();
            let mut cfg = SolverConfig::new(variant, lambda_for(ds));
            cfg.epochs = 100;
            let res = Solver::new(ds, &loss, cfg).unwrap().run().unwrap();
            assert!(res.max_link_drift <= 1e-8, "{variant} {kind}: {}", res.max_link_drift);
            let drift = res.state.link_residual(ds, lambda_for(ds)) / (1.0 + res.state.w.iter().map(|x| x * x).sum::<f64>().sqrt());
            assert!(drift <= 1e-8);
        }
    }
}

#[test]
fn unit_shrink_freezes_probabilities_within_an_epoch() {
    let ds = common::small_dataset(40, 6, 8);
    let loss = LossModel::new(LossKind::Quadratic, &ds).unwrap();
    let mut cfg = SolverConfig::new(Variant::AdfsdcaPlus, 0.1);
    cfg.shrink = 1.0;
    cfg.epochs = 3;
    let mut obs = Trajectory::default();
    Solver::new(&ds, &loss, cfg).unwrap().run_observed(&mut obs).unwrap();
    let n = ds.n();
    for (e, (picks, drawn)) in obs.picks.chunks(n).zip(obs.drawn.chunks(n)).enumerate() {
        let mut seen = std::collections::HashMap::new();
        for (p, &d) in picks.iter().zip(drawn) {
            let prev = *seen.entry(p[0]).or_insert(d);
            assert_eq!(prev.to_bits(), d.to_bits(), "epoch {e}, coordinate {}", p[0]);
        }
    }
}

#[test]
fn infinite_shrink_never_repeats_within_an_epoch() {
    let ds = Dataset::from_rows(vec![vec![(0, 1.0)], vec![(1, 1.0)], vec![(0, 0.5), (1, 0.5)]], vec![1.0, -1.0, 1.0], None)
        .unwrap();
    let loss = LossModel::new(LossKind::Quadratic, &ds).unwrap();
    let mut cfg = SolverConfig::new(Variant::AdfsdcaPlus, 0.3);
    cfg.shrink = f64::INFINITY;
    cfg.epochs = 20;
    let mut obs = Trajectory::default();
    Solver::new(&ds, &loss, cfg).unwrap().run_observed(&mut obs).unwrap();
    assert!(obs.picks.len() >= 30);
    for block in obs.picks.chunks(3) {
        let mut ids: Vec<usize> = block.iter().map(|p| p[0]).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), block.len(), "{block:?}");
    }
}

fn epochs_to(ds: &Dataset, loss: &LossModel, reference: &Reference, mut cfg: SolverConfig, target: f64) -> Option<f64> {
    cfg.trace_every = Some(ds.n() / 10);
    cfg.target = Some(target);
    let res = Solver::new(ds, loss, cfg).unwrap().with_reference(reference).run().unwrap();
    epochs_to_target(&res.trace, target)
}

#[test]
fn shrink_ten_and_twenty_are_close() {
    let ds = common::bench_dataset();
    let loss = LossModel::new(LossKind::Quadratic, &ds).unwrap();
    let lambda = lambda_for(&ds);
    let reference = run_reference(&ds, &loss, lambda).unwrap();
    let mut by_s = Vec::new();
    for s in [10.0, 20.0] {
        let runs: Vec<f64> = (0..4)
            .map(|seed| {
                let mut cfg = SolverConfig::new(Variant::AdfsdcaPlus, lambda);
                cfg.shrink = s;
                cfg.seed = seed;
                cfg.epochs = 60;
                epochs_to(&ds, &loss, &reference, cfg, 1e-6).expect("reaches 1e-6")
            })
            .collect();
        by_s.push(common::median(&runs));
    }
    let ratio = by_s[0].max(by_s[1]) / by_s[0].min(by_s[1]);
    assert!(ratio <= 1.25, "{by_s:?}");
}

#[test]
fn uniform_sampling_needs_more_epochs() {
    let ds = common::bench_dataset();
    let loss = LossModel::new(LossKind::Quadratic, &ds).unwrap();
    let lambda = lambda_for(&ds);
    let reference = run_reference(&ds, &loss, lambda).unwrap();
    let mut cfg = SolverConfig::new(Variant::Dfsdca, lambda);
    cfg.epochs = 60;
    let uniform = epochs_to(&ds, &loss, &reference, cfg.clone(), 1e-4).unwrap();
    cfg.variant = Variant::Adfsdca;
    let adaptive = epochs_to(&ds, &loss, &reference, cfg, 1e-4).unwrap();
    assert!(uniform > adaptive, "{uniform} vs {adaptive}");
}

#[test]
fn single_example_uniform_matches_adaptive() {
    let ds = Dataset::from_rows(vec![vec![(0, 1.5), (2, -0.5)]], vec![-1.0], None).unwrap();
    for kind in [LossKind::Quadratic, LossKind::Logistic] {
        let loss = LossModel::new(kind, &ds).unwrap();
        let mut trajectories = Vec::new();
        for variant in [Variant::Dfsdca, Variant::Adfsdca] {
            let mut cfg = SolverConfig::new(variant, 0.4);
            cfg.epochs = 50;
            let mut obs = Trajectory::default();
            Solver::new(&ds, &loss, cfg).unwrap().run_observed(&mut obs).unwrap();
            trajectories.push(obs.states);
        }
        assert_eq!(trajectories[0].len(), trajectories[1].len());
        for (a, b) in trajectories[0].iter().zip(&trajectories[1]) {
            for (x, y) in a.0.iter().zip(&b.0).chain(a.1.iter().zip(&b.1)) {
                assert!((x - y).abs() <= 1e-14 * (1.0 + x.abs()), "{x} vs {y}");
            }
        }
    }
}

#[test]
fn minibatch_of_one_follows_the_serial_path() {
    let ds = common::small_dataset(60, 8, 12);
    let loss = LossModel::new(LossKind::Logistic, &ds).unwrap();
    let mut runs = Vec::new();
    for variant in [Variant::Adfsdca, Variant::Minibatch] {
        let mut cfg = SolverConfig::new(variant, 0.05);
        cfg.epochs = 5;
        cfg.seed = 17;
        let mut obs = Trajectory::default();
        let res = Solver::new(&ds, &loss, cfg).unwrap().run_observed(&mut obs).unwrap();
        obs.states.push((res.state.alpha, res.state.w));
        runs.push(obs.states);
    }
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn symmetric_residues_give_a_single_level_batch() {
    let rows: Vec<Vec<(usize, f64)>> = (0..8).map(|i| vec![(i, 1.0)]).collect();
    let ds = Dataset::from_rows(rows, vec![1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0], None).unwrap();
    let loss = LossModel::new(LossKind::Quadratic, &ds).unwrap();
    let mut cfg = SolverConfig::new(Variant::Minibatch, 0.5);
    cfg.batch = 4;
    cfg.epochs = 1;
    let mut obs = Trajectory::default();
    Solver::new(&ds, &loss, cfg).unwrap().run_observed(&mut obs).unwrap();
    let p = &obs.probabilities[0];
    let q: Vec<f64> = p.iter().map(|x| 4.0 * x).collect();
    assert!(q.iter().all(|&x| (x - 0.5).abs() < 1e-15));
    assert_eq!(SamplingPlan::build(&q, 4).unwrap().levels().len(), 1);
}

#[test]
fn infeasible_batches_are_rejected_up_front() {
    let ds = common::small_dataset(10, 3, 1);
    let loss = LossModel::new(LossKind::Quadratic, &ds).unwrap();
    for b in [0, 10, 11] {
        let mut cfg = SolverConfig::new(Variant::Minibatch, 0.1);
        cfg.batch = b;
        assert!(Solver::new(&ds, &loss, cfg).is_err(), "b={b}");
    }
    let mut cfg = SolverConfig::new(Variant::Adfsdca, 0.1);
    cfg.epochs = 0;
    assert!(Solver::new(&ds, &loss, cfg).is_err());
}

#[test]
fn identical_seeds_give_identical_runs() {
    let ds = common::small_dataset(50, 8, 6);
    let loss = LossModel::new(LossKind::Logistic, &ds).unwrap();
    for variant in Variant::ALL {
        let run = || {
            let mut cfg = SolverConfig::new(variant, 0.1);
            cfg.batch = 3;
            cfg.seed = 5;
            cfg.epochs = 4;
            cfg.timing = false;
            Solver::new(&ds, &loss, cfg).unwrap().run().unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.state, b.state);
    }
}

/// `G` evaluated from scratch.
fn gap_oracle(alpha: &[f64], w: &[f64], r: &Reference, kind: LossKind, lambda: f64) -> f64 {
    let n = alpha.len() as f64;
    let beta = 1.0 / common::smoothness(kind);
    let da: f64 = alpha.iter().zip(&r.alpha).map(|(a, s)| beta * (a - s) * (a - s)).sum();
    let dw: f64 = w.iter().zip(&r.w).map(|(a, s)| (a - s) * (a - s)).sum();
    da + n * lambda * dw
}

#[test]
fn gap_examples() {
    let ds = common::small_dataset(5, 3, 21);
    let lambda = 0.3;
    let mut rng = common::rng(4);
    for kind in [LossKind::Quadratic, LossKind::Logistic] {
        let loss = LossModel::new(kind, &ds).unwrap();
        let cp = CaseParams::new(ConvexityCase::AllConvex, &loss, lambda).unwrap();
        let r = run_reference(&ds, &loss, lambda).unwrap();
        let at = compute_gap(&r.alpha, &r.w, &r, &cp, &ds, &loss);
        assert_eq!(at.g, 0.0);
        let w: Vec<f64> = r.w.iter().map(|x| x + 0.25).collect();
        let iso = compute_gap(&r.alpha, &w, &r, &cp, &ds, &loss);
        let dw: f64 = w.iter().zip(&r.w).map(|(a, b)| (a - b) * (a - b)).sum();
        assert!((iso.g - cp.gamma() * dw).abs() <= 1e-12 * iso.g);
        for _ in 0..20 {
            let alpha: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            let w: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let g = compute_gap(&alpha, &w, &r, &cp, &ds, &loss);
            let oracle = gap_oracle(&alpha, &w, &r, kind, lambda);
            assert!((g.g - oracle).abs() <= 1e-12 * oracle.max(1.0));
            assert!(g.bound_holds);
        }
    }
}

#[test]
fn variance_bound_examples() {
    let ds = common::small_dataset(10, 4, 13);
    let lambda = 0.2;
    let mut rng = common::rng(6);
    for kind in [LossKind::Quadratic, LossKind::Logistic] {
        let loss = LossModel::new(kind, &ds).unwrap();
        let cp = CaseParams::new(ConvexityCase::AllConvex, &loss, lambda).unwrap();
        let r = run_reference(&ds, &loss, lambda).unwrap();
        let uniform = vec![0.1; 10];
        let at = variance_check(&r.alpha, &r.w, &uniform, &r, &cp, &ds, &loss).unwrap();
        assert!(at.lhs <= 1e-20 && at.holds);
        for _ in 0..100 {
            let alpha: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
            let w = adfsdca::solver::primal_from_dual(&ds, lambda, &alpha);
            let k = compute_residues(&alpha, &w, &ds, &loss).unwrap();
            let p = optimal_probabilities(&k, &cp, ds.sq_norms()).unwrap();
            let rep = variance_check(&alpha, &w, &p, &r, &cp, &ds, &loss).unwrap();
            assert!(rep.holds, "{} > {}", rep.lhs, rep.rhs);
        }
    }
}

#[test]
fn expected_update_is_the_gradient_for_any_coherent_distribution() {
    let ds = common::small_dataset(30, 6, 2);
    let lambda = 0.15;
    let mut rng = common::rng(8);
    for kind in [LossKind::Quadratic, LossKind::Logistic] {
        let loss = LossModel::new(kind, &ds).unwrap();
        let cp = CaseParams::new(ConvexityCase::AllConvex, &loss, lambda).unwrap();
        for _ in 0..20 {
            let alpha: Vec<f64> = (0..30).map(|_| rng.random_range(-1.0..1.0)).collect();
            let w = adfsdca::solver::primal_from_dual(&ds, lambda, &alpha);
            let k = compute_residues(&alpha, &w, &ds, &loss).unwrap();
            let target = residue_gradient(&k, &ds);
            let grad = adfsdca::loss::primal_gradient(&ds, kind, lambda, &w);
            let scale = 1.0 + target.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let shrunk: Vec<f64> = {
                let p = optimal_probabilities(&k, &cp, ds.sq_norms()).unwrap();
                let raw: Vec<f64> = p.iter().enumerate().map(|(i, x)| if i % 3 == 0 { x / 10.0 } else { *x }).collect();
                let s: f64 = raw.iter().sum();
                raw.iter().map(|x| x / s).collect()
            };
            for p in [vec![1.0 / 30.0; 30], optimal_probabilities(&k, &cp, ds.sq_norms()).unwrap(), shrunk] {
                let e = expected_update(&k, &p, &ds).unwrap();
                for ((a, b), g) in e.iter().zip(&target).zip(&grad) {
                    assert!((a - b).abs() <= 1e-12 * scale);
                    assert!((a - g).abs() <= 1e-12 * scale);
                }
            }
        }
    }
}

#[test]
fn reference_for_huge_regularization_is_near_zero() {
    let ds = common::small_dataset(20, 5, 3);
    for kind in [LossKind::Quadratic, LossKind::Logistic] {
        let loss = LossModel::new(kind, &ds).unwrap();
        let r = run_reference(&ds, &loss, 1e8).unwrap();
        assert!(r.w.iter().all(|x| x.abs() < 1e-6));
        for (a, &y) in r.alpha.iter().zip(ds.labels()) {
            assert!((a + loss.derivative(0.0, y)).abs() < 1e-6);
        }
        let normal = run_reference(&ds, &loss, 0.1).unwrap();
        assert!(normal.grad_norm <= 1e-8 && !normal.approximate);
    }
}

#[test]
fn fixed_theta_runs_use_the_lower_bound() {
    let ds = common::small_dataset(40, 6, 9);
    let loss = LossModel::new(LossKind::Quadratic, &ds).unwrap();
    let mut cfg = SolverConfig::new(Variant::Adfsdca, 0.2);
    cfg.theta = ThetaPolicy::Fixed;
    cfg.epochs = 2;
    let res = Solver::new(&ds, &loss, cfg).unwrap().run().unwrap();
    assert!(res.trace.iter().skip(1).all(|r| r.theta == res.theta_lower));
}
