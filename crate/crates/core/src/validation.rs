//! Acceptance checks. Each check measures the quantity, compares it with its
//! bound, and returns a one-line report.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cir::{
    backward_length_approx, backward_length_exact, forward_length_approx, forward_length_exact, EpsGridPolicy,
};
use crate::config::PRESETS;
use crate::error::{Error, Result};
use crate::experiment::reproduce;
use crate::filter::{default_initial_state, run_filter, GaussianState};
use crate::info::{aci_metric, gauss_relative_entropy, marginal};
use crate::model::Trajectory;
use crate::models::{
    climate_model, equilibrium_stats, lorenz84_model, multiscale_model, reduced_linear_model, ClimateParams,
    Lorenz84Params, MultiscaleParams, ReducedLinearParams,
};
use crate::oracle::{
    eps_quadrature_length, gaussian_log_density_1d, gaussian_log_density_2d, kalman_bucy_filter, kalman_rts,
    kl_quadrature, kl_quadrature_2d, offline_backward_smoother, uniform_grid, Direction, LinearSpec,
};
use crate::query::{apply_conditioning, run_query, AnalysisConfig, CausalQuery, ConditioningMode};
use crate::sim::simulate;
use crate::smoother::{complete_smoother, BankConfig};

/// Outcome of one acceptance check.
#[derive(Clone, Debug, PartialEq)]
pub struct CriterionReport {
    pub id: u32,
    pub name: &'static str,
    pub passed: bool,
    /// Non-gating checks are reported but do not decide the overall verdict.
    pub gating: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for CriterionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} [{}] {}: {} ({:.1} s){}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.seconds,
            if self.gating { "" } else { " [non-gating]" }
        )
    }
}

fn timed(
    id: u32,
    name: &'static str,
    gating: bool,
    budget: Option<f64>,
    check: impl FnOnce() -> Result<(bool, String)>,
) -> CriterionReport {
    let start = Instant::now();
    let (mut passed, mut detail) = match check() {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e}")),
    };
    let seconds = start.elapsed().as_secs_f64();
    if let Some(b) = budget {
        if seconds > b {
            passed = false;
            detail.push_str(&format!("; runtime {seconds:.1} s over the {b} s budget"));
        }
    }
    CriterionReport {
        id,
        name,
        passed,
        gating,
        detail,
        seconds,
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn state(mean: &[f64], cov: &[f64]) -> GaussianState {
    let n = mean.len();
    GaussianState {
        mean: DVector::from_column_slice(mean),
        cov: DMatrix::from_row_slice(n, n, cov),
    }
}

/// Closed-form Gaussian relative entropy against trapezoid quadrature.
pub fn kl_vs_quadrature() -> CriterionReport {
    timed(1, "gaussian relative entropy vs quadrature", true, Some(5.0), || {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut worst: f64 = 0.0;
        for _ in 0..25 {
            let (mp, mq): (f64, f64) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let (vp, vq): (f64, f64) = (rng.random_range(0.2..3.0), rng.random_range(0.2..3.0));
            let sd = vp.max(vq).sqrt();
            let (grid, h) = uniform_grid(mp.min(mq) - 14.0 * sd, mp.max(mq) + 14.0 * sd, 40_001);
            let quad = kl_quadrature(
                &gaussian_log_density_1d(mp, vp, &grid),
                &gaussian_log_density_1d(mq, vq, &grid),
                h,
            )?;
            let closed = gauss_relative_entropy(&state(&[mp], &[vp]), &state(&[mq], &[vq]))?.total;
            worst = worst.max((quad - closed).abs());
        }
        for _ in 0..25 {
            let draw = |rng: &mut ChaCha8Rng| {
                let a: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
                let c00 = a[0] * a[0] + a[1] * a[1] + 0.2;
                let c01 = a[0] * a[2] + a[1] * a[3];
                let c11 = a[2] * a[2] + a[3] * a[3] + 0.2;
                let m: [f64; 2] = [rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)];
                (m, [[c00, c01], [c01, c11]])
            };
            let (mp, cp) = draw(&mut rng);
            let (mq, cq) = draw(&mut rng);
            let sd = [cp[0][0], cp[1][1], cq[0][0], cq[1][1]]
                .iter()
                .fold(0.0f64, |m, v| m.max(*v))
                .sqrt();
            let lo = |i: usize| mp[i].min(mq[i]) - 12.0 * sd;
            let hi = |i: usize| mp[i].max(mq[i]) + 12.0 * sd;
            let n = 601;
            let (xs, hx) = uniform_grid(lo(0), hi(0), n);
            let (ys, hy) = uniform_grid(lo(1), hi(1), n);
            let quad = kl_quadrature_2d(
                &gaussian_log_density_2d(mp, cp, &xs, &ys),
                &gaussian_log_density_2d(mq, cq, &xs, &ys),
                n,
                n,
                hx,
                hy,
            )?;
            let flat = |c: [[f64; 2]; 2]| [c[0][0], c[0][1], c[1][0], c[1][1]];
            let closed = gauss_relative_entropy(&state(&mp, &flat(cp)), &state(&mq, &flat(cq)))?.total;
            worst = worst.max((quad - closed).abs());
        }
        Ok((
            worst <= 1e-6,
            format!("50 pairs (25 1-D, 25 2-D), max |closed - quadrature| = {worst:.2e} (bound 1e-6)"),
        ))
    })
}

/// Filter and smoother variances on the reduced linear model against the equilibrium values.
pub fn equilibrium_variances() -> CriterionReport {
    const RF_TARGET: f64 = 0.414214;
    const RS_TARGET: f64 = 0.146447;
    timed(2, "equilibrium filter/smoother variances", true, Some(30.0), || {
        let p = ReducedLinearParams::unforced(1.0, -1.0, 1.0, 1.0);
        let model = reduced_linear_model(&p)?;
        let dt = 1e-3;
        let traj = simulate(&model, &DVector::zeros(1), &DVector::zeros(1), dt, 50_000, 2)?;
        let init = default_initial_state(&model, 0.0, &traj.x_path[0], dt);
        let filter = run_filter(&model, &traj, init)?;
        let smoother = complete_smoother(&filter, &traj, BankConfig::default())?;
        let rf = filter.states.last().expect("nonempty").cov[(0, 0)];
        let (a, b) = (traj.index_at(10.0), traj.index_at(40.0));
        let rs = smoother.states[a..=b].iter().map(|s| s.cov[(0, 0)]).sum::<f64>() / (b - a + 1) as f64;
        let closed = equilibrium_stats(&p)?;
        let (ef, es) = (rel(rf, RF_TARGET), rel(rs, RS_TARGET));
        Ok((
            ef <= 0.01 && es <= 0.01,
            format!(
                "R_f = {rf:.6} (target {RF_TARGET}, rel err {:.2}%), R_s = {rs:.6} (target {RS_TARGET}, rel err {:.1}%); \
                 closed-form smoother fixed point {:.6} (rel err {:.2}%)",
                100.0 * ef,
                100.0 * es,
                closed.rs,
                100.0 * rel(rs, closed.rs)
            ),
        ))
    })
}

/// Linear two-hidden-state test system with correlated observation and state noise.
pub fn linear_test_system(correlated: bool) -> LinearSpec {
    let m = |r: usize, c: usize, v: &[f64]| DMatrix::from_row_slice(r, c, v);
    LinearSpec {
        lambda_x: m(2, 2, &[1.0, 0.5, 0.0, -0.8]),
        f_x: DVector::from_vec(vec![0.1, 0.0]),
        sigma_x1: m(2, 2, &[0.5, 0.0, 0.0, 0.4]),
        sigma_x2: m(2, 1, &[if correlated { 0.1 } else { 0.0 }, 0.0]),
        lambda_y: m(2, 2, &[-1.0, 0.5, -0.3, -0.6]),
        f_y: DVector::from_vec(vec![0.2, -0.1]),
        sigma_y1: m(2, 2, &[if correlated { 0.2 } else { 0.0 }, 0.0, 0.0, 0.0]),
        sigma_y2: m(2, 1, &[0.6, 0.8]),
    }
}

fn max_gap(a: &[GaussianState], b: &[GaussianState]) -> (f64, f64) {
    let mut dm: f64 = 0.0;
    let mut dr: f64 = 0.0;
    for (x, y) in a.iter().zip(b) {
        dm = dm.max((&x.mean - &y.mean).amax());
        dr = dr.max((&x.cov - &y.cov).amax());
    }
    (dm, dr)
}

/// Online smoother recursion against the offline backward pass and textbook filters.
pub fn smoother_recursion() -> CriterionReport {
    timed(3, "online smoother vs offline backward pass", true, Some(60.0), || {
        let spec = linear_test_system(true);
        let model = spec.to_model()?;
        let dt = 0.01;
        let traj = simulate(&model, &DVector::zeros(2), &DVector::zeros(2), dt, 10_000, 3)?;
        let init = GaussianState {
            mean: DVector::zeros(2),
            cov: DMatrix::identity(2, 2),
        };
        let filter = run_filter(&model, &traj, init.clone())?;
        let kb = kalman_bucy_filter(&spec, &traj, &init)?;
        let (fm, fr) = max_gap(&filter.states, &kb);

        let online = complete_smoother(&filter, &traj, BankConfig::exact())?;
        let offline = offline_backward_smoother(&model, &traj, &filter.states)?;
        let (sm, sr) = max_gap(&online.states, &offline);

        // Discrete Kalman/RTS on the Euler-discretized system: first-order agreement.
        let plain = linear_test_system(false);
        let pmodel = plain.to_model()?;
        let fine = simulate(&pmodel, &DVector::zeros(2), &DVector::zeros(2), dt / 2.0, 4_000, 4)?;
        let coarse = fine.subsample(2);
        let rts_gap = |t: &Trajectory| -> Result<f64> {
            let f = run_filter(&pmodel, t, init.clone())?;
            let s = complete_smoother(&f, t, BankConfig::exact())?;
            let (_, rts) = kalman_rts(&plain, t, &init)?;
            let (a, b) = max_gap(&s.states, &rts);
            Ok(a.max(b))
        };
        let (g1, g2) = (rts_gap(&coarse)?, rts_gap(&fine)?);
        let order = (g1 / g2).log2();

        let passed = sm <= 1e-6 && sr <= 1e-6 && fm <= 1e-8 && fr <= 1e-8 && order > 0.7;
        Ok((
            passed,
            format!(
                "10^4 steps: smoother max dev mean {sm:.1e}, cov {sr:.1e} (bound 1e-6); \
                 filter vs Kalman-Bucy mean {fm:.1e}, cov {fr:.1e} (bound 1e-8); \
                 discrete RTS gap {g1:.2e} at dt={dt}, {g2:.2e} at dt={}, observed order {order:.2}",
                dt / 2.0
            ),
        ))
    })
}

/// Inequality directions of the norm-ratio lengths against the exact threshold averages.
pub fn cir_bounds() -> CriterionReport {
    timed(4, "CIR approximation bound directions", true, None, || {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let dt = 0.01;
        let mut violations = 0;
        let mut dual: f64 = 0.0;
        let mut monotone: f64 = 0.0;
        let profile = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            let n = rng.random_range(2..60);
            (0..n)
                .map(|_| {
                    if rng.random_bool(0.3) {
                        0.0
                    } else {
                        rng.random_range(0.0..1.0)
                    }
                })
                .collect()
        };
        for _ in 0..100 {
            let p = profile(&mut rng);
            let a = forward_length_approx(&p, dt).length;
            let e = forward_length_exact(&p, dt, EpsGridPolicy::Staircase).length;
            if a > e + 1e-9 {
                violations += 1;
            }
            dual = dual.max((e - eps_quadrature_length(&p, dt, Direction::Forward)).abs());
        }
        for _ in 0..100 {
            let mut g = profile(&mut rng);
            g[0] = 0.0;
            let a = backward_length_approx(&g, dt).length;
            let e = backward_length_exact(&g, dt, EpsGridPolicy::Staircase).length;
            if a < e - 1e-9 {
                violations += 1;
            }
            dual = dual.max((e - eps_quadrature_length(&g, dt, Direction::Backward)).abs());
        }
        for _ in 0..50 {
            let mut p = profile(&mut rng);
            p.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
            let gap =
                forward_length_approx(&p, dt).length - forward_length_exact(&p, dt, EpsGridPolicy::Staircase).length;
            monotone = monotone.max(gap.abs());
            let mut g = profile(&mut rng);
            g[0] = 0.0;
            g.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
            let gap =
                backward_length_approx(&g, dt).length - backward_length_exact(&g, dt, EpsGridPolicy::Staircase).length;
            monotone = monotone.max(gap.abs());
        }
        Ok((
            violations == 0 && monotone <= 1e-6 && dual <= 1e-9,
            format!(
                "200 random profiles: {violations} direction violations; monotone max |approx - exact| = {monotone:.1e} (bound 1e-6); \
                 closed-form vs literal eps quadrature max dev {dual:.1e}"
            ),
        ))
    })
}

/// Forward profiles end at zero, backward profiles start at zero, and ACI vanishes without coupling.
pub fn endpoint_identities() -> CriterionReport {
    timed(5, "endpoint identities", true, None, || {
        let p = ReducedLinearParams::default();
        let model = reduced_linear_model(&p)?;
        let traj = simulate(&model, &DVector::zeros(1), &DVector::zeros(1), 0.01, 2_000, 5)?;
        let q = CausalQuery::from_names(&model, "y->x", &["y"], &["x"], &[], ConditioningMode::ExactLimit)?;
        let mut worst_f: f64 = 0.0;
        let mut worst_b: f64 = 0.0;
        let mut pad_gap: f64 = 0.0;
        let (mut count, mut full, mut suffix) = (0, 0, 0);
        for bank in [
            BankConfig::default(),
            BankConfig {
                lag_cap: 50,
                lag_tol: 1e-6,
            },
        ] {
            let cfg = AnalysisConfig {
                stride: 10,
                burn_in: 0.0,
                exact_cir: true,
                bank,
                ..Default::default()
            };
            let out = run_query(&model, &traj, &q, &cfg)?;
            let fwd = out.forward_profiles.expect("exact mode");
            let bwd = out.backward_profiles.expect("exact mode");
            for pr in &fwd {
                worst_f = worst_f.max(pr.last().map_or(f64::INFINITY, |v| v.abs()));
            }
            let exact = out.series.tau_backward_exact.as_ref().expect("exact mode");
            for (slot, (first, g)) in bwd.iter().enumerate() {
                if *first == 0 {
                    worst_b = worst_b.max(g.first().map_or(f64::INFINITY, |v| v.abs()));
                    full += 1;
                } else {
                    // Lags before `first` were frozen: their deficits are implied zeros.
                    let mut padded = vec![0.0; *first];
                    padded.extend_from_slice(g);
                    let dt = traj.dt;
                    pad_gap = pad_gap
                        .max((backward_length_approx(&padded, dt).length - out.series.tau_backward_approx[slot]).abs())
                        .max((backward_length_exact(&padded, dt, EpsGridPolicy::Staircase).length - exact[slot]).abs());
                    suffix += 1;
                }
            }
            count += fwd.len();
        }
        let zero = ReducedLinearParams {
            lambda_x: 0.0,
            ..ReducedLinearParams::default()
        };
        let zmodel = reduced_linear_model(&zero)?;
        let ztraj = simulate(&zmodel, &DVector::zeros(1), &DVector::zeros(1), 0.01, 2_000, 6)?;
        let zq = CausalQuery::from_names(&zmodel, "y->x", &["y"], &["x"], &[], ConditioningMode::ExactLimit)?;
        let zcfg = AnalysisConfig {
            stride: 1,
            burn_in: 0.0,
            ..Default::default()
        };
        let zout = run_query(&zmodel, &ztraj, &zq, &zcfg)?;
        let zmax = zout.series.aci.iter().fold(0.0f64, |m, a| m.max(a.total.abs()));
        Ok((
            worst_f == 0.0 && worst_b == 0.0 && pad_gap <= 1e-9 && full > 0 && zmax <= f64::EPSILON,
            format!(
                "{count} forward profiles, max |P^j_N| = {worst_f:.1e}; {full} full backward profiles, max |g_0| = {worst_b:.1e}; \
                 {suffix} lag-capped profiles match their zero-padded lengths to {pad_gap:.1e}; \
                 zero-coupling max |ACI| over {} times = {zmax:.1e}",
                zout.series.len()
            ),
        ))
    })
}

fn climate_band(eps: f64, lo: f64, hi: f64) -> Result<(f64, usize, f64, f64)> {
    let model = climate_model(&ClimateParams::with_eps(eps))?;
    let traj = simulate(&model, &DVector::zeros(1), &DVector::zeros(2), 1e-3, 110_000, 7)?;
    let q = CausalQuery::from_names(
        &model,
        "y->x|gamma",
        &["y"],
        &["x"],
        &["gamma"],
        ConditioningMode::ExactLimit,
    )?;
    let cfg = AnalysisConfig {
        stride: 500,
        windows: vec![(20.0, 110.0)],
        ..Default::default()
    };
    let out = run_query(&model, &traj, &q, &cfg)?;
    let tb = &out.series.tau_backward_approx;
    let inside = tb.iter().filter(|v| **v >= lo && **v <= hi).count();
    let mut sorted = tb.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let median = sorted[sorted.len() / 2];
    let mean = tb.iter().sum::<f64>() / tb.len() as f64;
    Ok((inside as f64 / tb.len() as f64, tb.len(), median, mean))
}

/// Bounded backward CIR over time on the reduced model, and the climate ε = 0.01 band.
pub fn backward_cir_order_one() -> CriterionReport {
    timed(6, "backward CIR stays order one", true, Some(600.0), || {
        let model = reduced_linear_model(&ReducedLinearParams::default())?;
        let traj = simulate(&model, &DVector::zeros(1), &DVector::zeros(1), 1e-3, 100_000, 7)?;
        let q = CausalQuery::from_names(&model, "y->x", &["y"], &["x"], &[], ConditioningMode::ExactLimit)?;
        let ts = [20.0, 40.0, 60.0, 80.0, 100.0];
        let cfg = AnalysisConfig {
            stride: 1,
            burn_in: 0.0,
            windows: ts.iter().map(|&t| (t, t)).collect(),
            ..Default::default()
        };
        let out = run_query(&model, &traj, &q, &cfg)?;
        let tb = &out.series.tau_backward_approx;
        let (mn, mx) = tb
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(a, b), v| (a.min(*v), b.max(*v)));
        let ratio = mx / mn;
        let (frac, n, median, _) = climate_band(0.01, 0.008, 0.02)?;
        let values: Vec<String> = tb.iter().map(|v| format!("{v:.4}")).collect();
        Ok((
            tb.len() == ts.len() && mn > 0.0 && ratio <= 3.0 && frac >= 0.8,
            format!(
                "reduced model tau_b at T=20..100: [{}], max/min = {ratio:.2} (bound 3); \
                 climate eps=0.01: {:.0}% of {n} times in [0.008, 0.02] (need 80%), median {median:.4}",
                values.join(", "),
                100.0 * frac
            ),
        ))
    })
}

/// Climate ε = 0.1 backward CIR band.
pub fn climate_eps01_band() -> CriterionReport {
    timed(7, "climate eps=0.1 backward CIR band", true, None, || {
        let (frac, n, median, _) = climate_band(0.1, 0.02, 0.05)?;
        Ok((
            frac >= 0.8,
            format!(
                "{:.0}% of {n} times in [0.02, 0.05] (need 80%), median {median:.4}",
                100.0 * frac
            ),
        ))
    })
}

/// Large-noise conditioning converges to the exact limit.
pub fn conditioning_limit() -> CriterionReport {
    timed(8, "large-noise conditioning limit", true, None, || {
        let model = lorenz84_model(&Lorenz84Params::default())?;
        let traj = simulate(
            &model,
            &DVector::zeros(2),
            &DVector::from_element(1, 1.0),
            1e-3,
            150_000,
            7,
        )?;
        let cfg = AnalysisConfig {
            stride: 100,
            burn_in: 0.0,
            windows: vec![(0.0, 150.0)],
            ..Default::default()
        };
        let run = |mode| -> Result<Vec<f64>> {
            let q = CausalQuery::from_names(&model, "x->y|z", &["x"], &["y"], &["z"], mode)?;
            Ok(run_query(&model, &traj, &q, &cfg)?
                .series
                .aci
                .iter()
                .map(|a| a.total)
                .collect())
        };
        let exact = run(ConditioningMode::ExactLimit)?;
        let large = run(ConditioningMode::LargeNoise(1e8))?;
        let sup = exact.iter().zip(&large).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let peak = exact.iter().fold(0.0f64, |m, v| m.max(*v));
        Ok((
            sup <= 1e-4 && exact.len() == large.len(),
            format!(
                "Lorenz-84 x->y|z over {} times: sup |ACI_exact - ACI_s=1e8| = {sup:.2e} (bound 1e-4), peak ACI {peak:.3}",
                exact.len()
            ),
        ))
    })
}

/// ACI peaks near the reported transition windows, and conditional ACI stays positive.
pub fn qualitative_reproduction() -> CriterionReport {
    timed(9, "qualitative reproduction", false, None, || {
        let p = ClimateParams::with_eps(0.01);
        let model = climate_model(&p)?;
        let q = CausalQuery::from_names(
            &model,
            "y->x|gamma",
            &["y"],
            &["x"],
            &["gamma"],
            ConditioningMode::ExactLimit,
        )?;
        let cmodel = apply_conditioning(&model, &q)?;
        let windows = [((73.0, 83.0), (76.0, 82.0)), ((95.0, 105.0), (97.5, 100.0))];
        let mut hits = 0;
        let mut peaks = Vec::new();
        for seed in 1..=10u64 {
            let traj = simulate(&model, &DVector::zeros(1), &DVector::zeros(2), 1e-3, 110_000, seed)?;
            let init = default_initial_state(&cmodel, 0.0, &traj.x_path[0], traj.dt);
            let filter = run_filter(&cmodel, &traj, init)?;
            let smoother = complete_smoother(&filter, &traj, BankConfig::default())?;
            let mut all = true;
            for ((a, b), (lo, hi)) in windows {
                let (ja, jb) = (traj.index_at(a), traj.index_at(b));
                let mut best = (f64::NEG_INFINITY, a);
                for j in (ja..=jb).step_by(100) {
                    let f = marginal(&filter.states[j], &q.cause)?;
                    let s = marginal(&smoother.states[j], &q.cause)?;
                    let v = aci_metric(&f, &s)?.total;
                    if v > best.0 {
                        best = (v, traj.time(j));
                    }
                }
                peaks.push(format!("{:.1}", best.1));
                all &= best.1 >= lo && best.1 <= hi;
            }
            hits += all as usize;
        }

        let mp = MultiscaleParams::default();
        let mmodel = multiscale_model(&mp)?;
        let mtraj = simulate(&mmodel, &DVector::zeros(2), &DVector::zeros(2), 1e-3, 100_000, 7)?;
        let mq = CausalQuery::from_names(
            &mmodel,
            "y2->x2|(x1,y1)",
            &["y2"],
            &["x2"],
            &["x1", "y1"],
            ConditioningMode::ExactLimit,
        )?;
        let mcfg = AnalysisConfig {
            stride: 100,
            windows: vec![(50.0, 100.0)],
            ..Default::default()
        };
        let mout = run_query(&mmodel, &mtraj, &mq, &mcfg)?;
        // The last analysis time is the end of data, where ACI is zero by construction.
        let aci = &mout.series.aci[..mout.series.len().saturating_sub(1)];
        let min = aci.iter().fold(f64::INFINITY, |m, a| m.min(a.total));
        Ok((
            hits >= 6 && min > 0.0,
            format!(
                "climate y->x|gamma peaks inside both windows for {hits}/10 seeds (argmax times: {}); \
                 multiscale y2->x2|(x1,y1) min ACI over [50,100) = {min:.3e}",
                peaks.join(" ")
            ),
        ))
    })
}

fn read_dir_sorted(dir: &Path) -> Result<Vec<(String, Vec<u8>)>> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let e = e.map_err(|e| Error::io(dir, e))?;
        let bytes = fs::read(e.path()).map_err(|err| Error::io(e.path(), err))?;
        out.push((e.file_name().to_string_lossy().into_owned(), bytes));
    }
    out.sort();
    Ok(out)
}

/// Presets produce byte-identical artifacts across runs.
pub fn determinism(scratch: &Path) -> CriterionReport {
    timed(10, "reproduce determinism", true, None, || {
        let mut mismatched = Vec::new();
        let mut files = 0;
        for name in PRESETS {
            let a: PathBuf = scratch.join(format!("{name}-a"));
            let b: PathBuf = scratch.join(format!("{name}-b"));
            reproduce(name, &a)?;
            reproduce(name, &b)?;
            let (fa, fb) = (read_dir_sorted(&a)?, read_dir_sorted(&b)?);
            files += fa.len();
            if fa != fb {
                mismatched.push(name);
            }
            let _ = fs::remove_dir_all(&a);
            let _ = fs::remove_dir_all(&b);
        }
        Ok((
            mismatched.is_empty(),
            format!(
                "{} presets, {files} artifacts compared byte for byte; mismatches: {}",
                PRESETS.len(),
                if mismatched.is_empty() {
                    "none".to_string()
                } else {
                    mismatched.join(", ")
                }
            ),
        ))
    })
}

/// Runs every check in order. `scratch` receives temporary preset outputs.
pub fn run_all(scratch: &Path, mut on_report: impl FnMut(&CriterionReport)) -> Vec<CriterionReport> {
    let checks: Vec<Box<dyn Fn() -> CriterionReport>> = vec![
        Box::new(kl_vs_quadrature),
        Box::new(equilibrium_variances),
        Box::new(smoother_recursion),
        Box::new(cir_bounds),
        Box::new(endpoint_identities),
        Box::new(backward_cir_order_one),
        Box::new(climate_eps01_band),
        Box::new(conditioning_limit),
        Box::new(qualitative_reproduction),
        Box::new(move || determinism(scratch)),
    ];
    checks
        .iter()
        .map(|c| {
            let r = c();
            on_report(&r);
            r
        })
        .collect()
}
