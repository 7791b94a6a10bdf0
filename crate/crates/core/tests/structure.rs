use aci_cir::filter::{default_initial_state, filter_step};
use aci_cir::models::{
    climate_model, lorenz84_model, multiscale_model, reduced_linear_model, ClimateParams, Forcing, Lorenz84Params,
    MultiscaleParams, ReducedLinearParams,
};
use aci_cir::query::apply_conditioning;
use aci_cir::sim::simulate;
use aci_cir::smoother::{drive_bank, SmootherBank};
use aci_cir::validation::linear_test_system;
use aci_cir::{
    complete_smoother, run_filter, run_query, AnalysisConfig, BankConfig, CausalQuery, CgnsModel, ConditioningMode,
    GaussianState, Trajectory,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn all_models() -> Vec<CgnsModel> {
    vec![
        climate_model(&ClimateParams::with_eps(0.01)).unwrap(),
        climate_model(&ClimateParams::with_eps(0.1)).unwrap(),
        multiscale_model(&MultiscaleParams::default()).unwrap(),
        lorenz84_model(&Lorenz84Params::default()).unwrap(),
        reduced_linear_model(&ReducedLinearParams::default()).unwrap(),
    ]
}

fn prefix(traj: &Trajectory, n: usize) -> Trajectory {
    let mut t = traj.clone();
    t.x_path.truncate(n + 1);
    if let Some(y) = &mut t.y_path {
        y.truncate(n + 1);
    }
    t
}

#[test]
fn hidden_drift_is_linear() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for model in all_models() {
        for _ in 0..20 {
            let x = DVector::from_fn(model.dim_obs(), |_, _| rng.random_range(-3.0..3.0));
            let t = rng.random_range(0.0..100.0);
            let c = model.coefficients(t, &x);
            let y1 = DVector::from_fn(model.dim_hid(), |_, _| rng.random_range(-3.0..3.0));
            let y2 = DVector::from_fn(model.dim_hid(), |_, _| rng.random_range(-3.0..3.0));
            let a: f64 = rng.random_range(-2.0..2.0);
            let mix = &y1 * a + &y2 * (1.0 - a);
            let lhs = c.drift_x(&mix) - (c.drift_x(&y1) * a + c.drift_x(&y2) * (1.0 - a));
            let rhs = c.drift_y(&mix) - (c.drift_y(&y1) * a + c.drift_y(&y2) * (1.0 - a));
            assert!(lhs.amax() <= 1e-10 && rhs.amax() <= 1e-10, "{}", model.name);
        }
    }
}

#[test]
fn parameters_echoed() {
    for model in all_models() {
        assert!(!model.params.is_empty(), "{}", model.name);
        assert!(model.params.iter().all(|(k, v)| !k.is_empty() && !v.is_empty()));
    }
}

#[test]
fn simulation_is_deterministic() {
    let model = multiscale_model(&MultiscaleParams::default()).unwrap();
    let a = simulate(&model, &DVector::zeros(2), &DVector::zeros(2), 1e-3, 2_000, 5).unwrap();
    let b = simulate(&model, &DVector::zeros(2), &DVector::zeros(2), 1e-3, 2_000, 5).unwrap();
    let c = simulate(&model, &DVector::zeros(2), &DVector::zeros(2), 1e-3, 2_000, 6).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.x_path, c.x_path);
}

#[test]
fn zero_gain_filter_ignores_observations() {
    let p = ReducedLinearParams {
        lambda_x: 0.0,
        ..ReducedLinearParams::default()
    };
    let model = reduced_linear_model(&p).unwrap();
    let a = simulate(&model, &DVector::zeros(1), &DVector::zeros(1), 1e-2, 500, 1).unwrap();
    let b = simulate(&model, &DVector::zeros(1), &DVector::zeros(1), 1e-2, 500, 2).unwrap();
    let init = GaussianState {
        mean: DVector::zeros(1),
        cov: DMatrix::identity(1, 1),
    };
    let fa = run_filter(&model, &a, init.clone()).unwrap();
    let fb = run_filter(&model, &b, init).unwrap();
    assert_eq!(fa.states, fb.states);
}

#[test]
fn filter_covariance_symmetric_and_riccati_settles() {
    let model = linear_test_system(true).to_model().unwrap();
    let traj = simulate(&model, &DVector::zeros(2), &DVector::zeros(2), 1e-2, 3_000, 4).unwrap();
    let init = GaussianState {
        mean: DVector::zeros(2),
        cov: DMatrix::identity(2, 2) * 3.0,
    };
    let f = run_filter(&model, &traj, init).unwrap();
    for s in &f.states {
        assert!((&s.cov - s.cov.transpose()).amax() <= 1e-10 * s.cov.trace());
        assert!(s.cov.symmetric_eigenvalues().min() >= -1e-10 * s.cov.trace());
    }
    let last = &f.states.last().unwrap().cov;
    let dist: Vec<f64> = f.states.iter().map(|s| (&s.cov - last).norm()).collect();
    for w in dist[1000..].windows(2) {
        assert!(w[1] <= w[0] + 1e-12);
    }
}

#[test]
fn smoother_endpoint_and_variance_domination() {
    let model = linear_test_system(true).to_model().unwrap();
    let traj = simulate(&model, &DVector::zeros(2), &DVector::zeros(2), 1e-2, 2_000, 8).unwrap();
    let init = GaussianState {
        mean: DVector::zeros(2),
        cov: DMatrix::identity(2, 2),
    };
    let f = run_filter(&model, &traj, init).unwrap();
    let s = complete_smoother(&f, &traj, BankConfig::default()).unwrap();
    assert_eq!(s.states.last(), f.states.last());
    for (a, b) in s.states.iter().zip(&f.states) {
        assert!(a.cov.trace() <= b.cov.trace() + 1e-8);
    }
}

#[test]
fn online_bank_matches_replay_from_scratch() {
    let model = linear_test_system(true).to_model().unwrap();
    let traj = simulate(&model, &DVector::zeros(2), &DVector::zeros(2), 1e-2, 600, 12).unwrap();
    let init = GaussianState {
        mean: DVector::zeros(2),
        cov: DMatrix::identity(2, 2),
    };
    let f = run_filter(&model, &traj, init.clone()).unwrap();
    for n in [1, 57, 300, 600] {
        let mut snapshot: Vec<Option<GaussianState>> = Vec::new();
        drive_bank(&f, &traj, BankConfig::exact(), &mut (), |bank: &SmootherBank, _| {
            if bank.n_current() == n {
                snapshot = (0..=n).map(|j| bank.state(j)).collect();
            }
            Ok(())
        })
        .unwrap();
        let short = prefix(&traj, n);
        let fs = run_filter(&model, &short, init.clone()).unwrap();
        let replay = complete_smoother(&fs, &short, BankConfig::exact()).unwrap();
        for (j, s) in snapshot.iter().enumerate() {
            assert_eq!(s.as_ref().unwrap(), &replay.states[j], "n={n} j={j}");
        }
    }
}

fn lag_cap_doubling_gap(dt: f64, n: usize, cap: usize) -> f64 {
    let model = reduced_linear_model(&ReducedLinearParams::default()).unwrap();
    let traj = simulate(&model, &DVector::zeros(1), &DVector::zeros(1), dt, n, 3).unwrap();
    let init = default_initial_state(&model, 0.0, &traj.x_path[0], traj.dt);
    let f = run_filter(&model, &traj, init).unwrap();
    let run = |lag_cap| complete_smoother(&f, &traj, BankConfig { lag_cap, lag_tol: 1e-6 }).unwrap();
    let (a, b) = (run(cap), run(2 * cap));
    a.states
        .iter()
        .zip(&b.states)
        .map(|(x, y)| (&x.mean - &y.mean).amax())
        .fold(0.0, f64::max)
}

#[test]
fn doubling_lag_cap_changes_little() {
    // The cap spans 50 time units here, so the tolerance decides every freeze.
    assert!(lag_cap_doubling_gap(1e-2, 5_000, 5_000) < 1e-6);
    // At dt = 1e-3 the default cap spans 5 time units and binds; 10^4 steps is enough.
    assert!(lag_cap_doubling_gap(1e-3, 30_000, 10_000) < 1e-6);
}

#[test]
fn exact_limit_neutralizes_conditioned_observations() {
    let model = multiscale_model(&MultiscaleParams::default()).unwrap();
    let traj = simulate(&model, &DVector::zeros(2), &DVector::zeros(2), 1e-3, 3_000, 2).unwrap();
    let q = CausalQuery::from_names(
        &model,
        "q",
        &["y2"],
        &["x2"],
        &["x1", "y1"],
        ConditioningMode::ExactLimit,
    )
    .unwrap();
    let cmodel = apply_conditioning(&model, &q).unwrap();
    let x1 = model.observed_index("x1").unwrap();
    let init = default_initial_state(&cmodel, 0.0, &traj.x_path[0], traj.dt);
    let f = run_filter(&cmodel, &traj, init).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for j in (0..3_000).step_by(97) {
        let mut bent = traj.x_path[j + 1].clone();
        bent[x1] += rng.random_range(-1.0..1.0);
        let step = |x_next: &DVector<f64>| {
            filter_step(&cmodel, traj.time(j), &traj.x_path[j], x_next, &f.states[j], traj.dt).unwrap()
        };
        assert_eq!(step(&traj.x_path[j + 1]), step(&bent), "j={j}");
    }
}

#[test]
fn large_noise_converges_to_exact_limit() {
    let model = lorenz84_model(&Lorenz84Params::default()).unwrap();
    let traj = simulate(
        &model,
        &DVector::zeros(2),
        &DVector::from_element(1, 1.0),
        1e-3,
        8_000,
        5,
    )
    .unwrap();
    let cfg = AnalysisConfig {
        stride: 200,
        burn_in: 1.0,
        ..Default::default()
    };
    let aci = |mode| -> Vec<f64> {
        let q = CausalQuery::from_names(&model, "q", &["x"], &["y"], &["z"], mode).unwrap();
        run_query(&model, &traj, &q, &cfg)
            .unwrap()
            .series
            .aci
            .iter()
            .map(|a| a.total)
            .collect()
    };
    let exact = aci(ConditioningMode::ExactLimit);
    let sups: Vec<f64> = [1e2, 1e3, 1e4, 1e5]
        .iter()
        .map(|&s| {
            let v = aci(ConditioningMode::LargeNoise(s));
            exact.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        })
        .collect();
    for w in sups.windows(2) {
        assert!(w[1] < w[0], "{sups:?}");
        assert!(w[1] < 0.3 * w[0] + 1e-12, "{sups:?}");
    }
}

#[test]
fn joint_aci_adds_over_independent_blocks() {
    // Two uncoupled copies of the reduced linear model: x = (x1, x2), y = (y1, y2).
    let model = CgnsModel::new("pair", 2, 2, 2, 2, |t, x| {
        let mut c = aci_cir::Coefficients::zeros(2, 2, 2, 2);
        for i in 0..2 {
            c.lambda_x[(i, i)] = 1.0 + 0.5 * i as f64;
            c.f_x[i] = -x[i];
            c.sigma_x1[(i, i)] = 1.0;
            c.lambda_y[(i, i)] = -1.0 - 0.3 * i as f64;
            c.f_y[i] = (t / (5.0 + i as f64)).sin();
            c.sigma_y2[(i, i)] = 0.8;
        }
        c
    })
    .unwrap()
    .with_names(&["x1", "x2"], &["y1", "y2"])
    .unwrap();
    let traj = simulate(&model, &DVector::zeros(2), &DVector::zeros(2), 1e-2, 2_000, 21).unwrap();
    let cfg = AnalysisConfig {
        stride: 50,
        burn_in: 2.0,
        ..Default::default()
    };
    let run = |cause: &[&str], effect: &[&str]| -> Vec<f64> {
        let q = CausalQuery::from_names(&model, "q", cause, effect, &[], ConditioningMode::ExactLimit).unwrap();
        run_query(&model, &traj, &q, &cfg)
            .unwrap()
            .series
            .aci
            .iter()
            .map(|a| a.total)
            .collect()
    };
    let joint = run(&["y1", "y2"], &["x1", "x2"]);
    let a = run(&["y1"], &["x1", "x2"]);
    let b = run(&["y2"], &["x1", "x2"]);
    for i in 0..joint.len() {
        assert!((joint[i] - a[i] - b[i]).abs() <= 1e-8, "{i}");
    }
}

#[test]
fn cir_lengths_rescale_with_time_units() {
    let base = ReducedLinearParams::default();
    let run = |c: f64| -> Vec<f64> {
        let p = ReducedLinearParams {
            lambda_x: base.lambda_x / c,
            lambda_y: base.lambda_y / c,
            sigma_x: base.sigma_x / c.sqrt(),
            sigma_y: base.sigma_y / c.sqrt(),
            damping_x: base.damping_x / c,
            forcing_x: Forcing::constant(0.0),
            forcing_y: Forcing::sin(0.0, 1.0 / c, 10.0 * c),
        };
        let model = reduced_linear_model(&p).unwrap();
        let traj = simulate(&model, &DVector::zeros(1), &DVector::zeros(1), 1e-3 * c, 20_000, 4).unwrap();
        let q = CausalQuery::from_names(&model, "q", &["y"], &["x"], &[], ConditioningMode::ExactLimit).unwrap();
        let cfg = AnalysisConfig {
            stride: 1000,
            burn_in: 2.0 * c,
            ..Default::default()
        };
        let s = run_query(&model, &traj, &q, &cfg).unwrap().series;
        s.tau_forward_approx
            .iter()
            .chain(&s.tau_backward_approx)
            .copied()
            .collect()
    };
    let (a, b) = (run(1.0), run(2.5));
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert!((y - 2.5 * x).abs() <= 0.02 * 2.5 * x.abs() + 1e-9, "{x} {y}");
    }
}
