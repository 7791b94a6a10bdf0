//! Causal queries: conditioning, and the filter → smoother → ACI/CIR pipeline.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::cir::{
    backward_length_approx, backward_length_exact, forward_length_approx, forward_length_exact, CirFlags, CirSeries,
    EpsGridPolicy,
};
use crate::error::{Error, Result};
use crate::filter::{default_initial_state, gram, run_filter, FilterSeries, GaussianState};
use crate::info::{marginal, marginal_flat, EntropyValue, KlWorkspace};
use crate::linalg::to_flat;
use crate::model::{CgnsModel, Trajectory};
use crate::smoother::{complete_smoother, drive_bank, BankConfig, BankObserver, SmootherBank, SmootherSeries};

/// How neutralized observed coordinates are removed from the update.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum ConditioningMode {
    #[default]
    /// Zero their rows/columns in the inverse observational Gram.
    ExactLimit,
    /// Multiply their observation noise by the given factor.
    LargeNoise(f64),
}

impl fmt::Display for ConditioningMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConditioningMode::ExactLimit => f.write_str("exact-limit"),
            ConditioningMode::LargeNoise(s) => write!(f, "large-noise({s:e})"),
        }
    }
}

impl FromStr for ConditioningMode {
    type Err = Error;

    /// `exact-limit`, `large-noise` (scale 1e6) or `large-noise:<scale>`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact-limit" => Ok(ConditioningMode::ExactLimit),
            "large-noise" => Ok(ConditioningMode::LargeNoise(1e6)),
            _ => {
                let scale = s
                    .strip_prefix("large-noise:")
                    .and_then(|v| v.parse::<f64>().ok())
                    .filter(|v| *v > 0.0)
                    .ok_or_else(|| Error::Config(format!("unknown conditioning mode `{s}`")))?;
                Ok(ConditioningMode::LargeNoise(scale))
            }
        }
    }
}

/// `cause → effect | conditioning`, with indices into the model's blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct CausalQuery {
    pub label: String,
    /// Hidden coordinates forming the candidate cause.
    pub cause: Vec<usize>,
    /// Observed coordinates forming the effect.
    pub effect: Vec<usize>,
    /// Observed coordinates neutralized in the update.
    pub conditioning_observed: Vec<usize>,
    /// Hidden coordinates estimated jointly and then marginalized out.
    pub conditioning_hidden: Vec<usize>,
    pub mode: ConditioningMode,
}

impl CausalQuery {
    /// Builds a query from variable names of `model`.
    pub fn from_names(
        model: &CgnsModel,
        label: impl Into<String>,
        cause: &[&str],
        effect: &[&str],
        conditioning: &[&str],
        mode: ConditioningMode,
    ) -> Result<Self> {
        let hid = |n: &&str| model.hidden_index(n);
        let obs = |n: &&str| model.observed_index(n);
        let unknown = |n: &str, role: &str| {
            Error::InvalidQuery(format!(
                "{role} variable `{n}` is not {}",
                match role {
                    "cause" => "hidden in this partition",
                    _ => "observed in this partition",
                }
            ))
        };
        let cause_idx = cause
            .iter()
            .map(|n| hid(n).ok_or_else(|| unknown(n, "cause")))
            .collect::<Result<Vec<_>>>()?;
        let effect_idx = effect
            .iter()
            .map(|n| obs(n).ok_or_else(|| unknown(n, "effect")))
            .collect::<Result<Vec<_>>>()?;
        let mut cond_obs = Vec::new();
        let mut cond_hid = Vec::new();
        for n in conditioning {
            if let Some(i) = obs(n) {
                cond_obs.push(i);
            } else if let Some(i) = hid(n) {
                cond_hid.push(i);
            } else {
                return Err(Error::InvalidQuery(format!("unknown conditioning variable `{n}`")));
            }
        }
        // Hidden coordinates that are neither cause nor listed are marginalized too.
        for i in 0..model.dim_hid() {
            if !cause_idx.contains(&i) && !cond_hid.contains(&i) {
                cond_hid.push(i);
            }
        }
        // Observed coordinates that are neither effect nor listed are neutralized.
        for i in 0..model.dim_obs() {
            if !effect_idx.contains(&i) && !cond_obs.contains(&i) {
                cond_obs.push(i);
            }
        }
        let q = CausalQuery {
            label: label.into(),
            cause: cause_idx,
            effect: effect_idx,
            conditioning_observed: cond_obs,
            conditioning_hidden: cond_hid,
            mode,
        };
        q.validate(model)?;
        Ok(q)
    }

    pub fn validate(&self, model: &CgnsModel) -> Result<()> {
        let (k, l) = (model.dim_obs(), model.dim_hid());
        if self.cause.is_empty() || self.effect.is_empty() {
            return Err(Error::InvalidQuery("cause and effect must be non-empty".into()));
        }
        let in_range = |v: &[usize], n: usize| v.iter().all(|&i| i < n);
        if !in_range(&self.cause, l) || !in_range(&self.conditioning_hidden, l) {
            return Err(Error::InvalidQuery("hidden index out of range".into()));
        }
        if !in_range(&self.effect, k) || !in_range(&self.conditioning_observed, k) {
            return Err(Error::InvalidQuery("observed index out of range".into()));
        }
        if self.cause.iter().any(|i| self.conditioning_hidden.contains(i)) {
            return Err(Error::InvalidQuery("cause and hidden conditioning overlap".into()));
        }
        if self.effect.iter().any(|i| self.conditioning_observed.contains(i)) {
            return Err(Error::InvalidQuery("effect and observed conditioning overlap".into()));
        }
        let covered = (0..k).all(|i| self.effect.contains(&i) || self.conditioning_observed.contains(&i));
        if !covered {
            return Err(Error::InvalidQuery(
                "effect and observed conditioning must cover every observed coordinate".into(),
            ));
        }
        for v in [
            &self.cause,
            &self.effect,
            &self.conditioning_observed,
            &self.conditioning_hidden,
        ] {
            for (p, i) in v.iter().enumerate() {
                if v[..p].contains(i) {
                    return Err(Error::InvalidQuery(format!("index {i} repeated")));
                }
            }
        }
        Ok(())
    }
}

/// Removes the neutralized observations from the Bayesian update.
pub fn apply_conditioning(model: &CgnsModel, query: &CausalQuery) -> Result<CgnsModel> {
    query.validate(model)?;
    if query.conditioning_observed.is_empty() {
        return Ok(model.clone());
    }
    match query.mode {
        ConditioningMode::ExactLimit => {
            let mut out = model.clone();
            let mut idx = query.conditioning_observed.clone();
            idx.sort_unstable();
            out.set_neutralized(idx);
            Ok(out)
        }
        ConditioningMode::LargeNoise(s) => {
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::InvalidQuery(format!("noise scale must be positive, got {s}")));
            }
            let rows = query.conditioning_observed.clone();
            Ok(model.map_eval(move |mut c| {
                for &r in &rows {
                    for j in 0..c.sigma_x1.ncols() {
                        c.sigma_x1[(r, j)] *= s;
                    }
                    for j in 0..c.sigma_x2.ncols() {
                        c.sigma_x2[(r, j)] *= s;
                    }
                }
                c
            }))
        }
    }
}

/// Settings shared by all queries of an analysis.
#[derive(Clone, Debug, PartialEq)]
pub struct AnalysisConfig {
    /// Analysis times are every `stride`-th grid point.
    pub stride: usize,
    /// Time windows to analyse; empty means the whole post-burn-in record.
    pub windows: Vec<(f64, f64)>,
    pub burn_in: f64,
    pub bank: BankConfig,
    /// Also compute threshold-averaged (exact) lengths.
    pub exact_cir: bool,
    pub eps_policy: EpsGridPolicy,
    /// Filter initial state; `None` uses [`default_initial_state`].
    pub init: Option<GaussianState>,
    /// Diagonal jitter added to reference covariances (0 = off).
    pub jitter: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            stride: 10,
            windows: Vec::new(),
            burn_in: 10.0,
            bank: BankConfig::default(),
            exact_cir: false,
            eps_policy: EpsGridPolicy::Staircase,
            init: None,
            jitter: 0.0,
        }
    }
}

impl AnalysisConfig {
    /// Grid indices at which ACI and CIR are reported.
    pub fn analysis_indices(&self, traj: &Trajectory) -> Vec<usize> {
        let n = traj.n_steps();
        let stride = self.stride.max(1);
        let start = traj.index_at(traj.t0 + self.burn_in);
        let in_window = |j: usize| {
            let t = traj.time(j);
            self.windows.is_empty() || self.windows.iter().any(|&(a, b)| t >= a - 1e-9 && t <= b + 1e-9)
        };
        (start..=n).step_by(stride).filter(|&j| in_window(j)).collect()
    }
}

/// Posterior marginals on the cause block at the analysis times.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PosteriorTrace {
    pub filter: Vec<GaussianState>,
    pub smoother: Vec<GaussianState>,
}

#[derive(Clone, Debug)]
pub struct QueryOutput {
    pub series: CirSeries,
    pub posterior: PosteriorTrace,
    /// Filter steps where the covariance needed eigenvalue clipping.
    pub psd_clips: usize,
    /// Forward deficit profiles per analysis time (exact mode only).
    pub forward_profiles: Option<Vec<Vec<f64>>>,
    /// Centered backward profiles per analysis time (exact mode only), as
    /// `(first lag index, values)`. Lags before the first index were frozen
    /// and their implied deficits are zero.
    pub backward_profiles: Option<Vec<(usize, Vec<f64>)>>,
}

struct ForwardTracker {
    j: usize,
    slot: usize,
    final_mean: Vec<f64>,
    final_cov: Vec<f64>,
    sum: f64,
    max: f64,
    profile: Option<Vec<f64>>,
}

struct Pass2<'a> {
    cause: &'a [usize],
    l: usize,
    ws: KlWorkspace,
    buf: [Vec<f64>; 4],
    /// Collect backward deficits during the next advance.
    collect: bool,
    raw_backward: Vec<(usize, f64)>,
    error: Option<Error>,
}

impl Pass2<'_> {
    fn kl(&mut self, mp: &[f64], rp: &[f64], mq: &[f64], rq: &[f64]) -> Result<EntropyValue> {
        let l = self.l;
        let [a, b, c, d] = &mut self.buf;
        marginal_flat(mp, rp, l, self.cause, a, b);
        marginal_flat(mq, rq, l, self.cause, c, d);
        self.ws.divergence(a, b, c, d)
    }
}

impl BankObserver for Pass2<'_> {
    fn wants_updates(&self) -> bool {
        self.collect
    }

    fn updated(&mut self, j: usize, old_mean: &[f64], old_cov: &[f64], new_mean: &[f64], new_cov: &[f64]) {
        match self.kl(new_mean, new_cov, old_mean, old_cov) {
            Ok(e) => self.raw_backward.push((j, e.total)),
            Err(e) => {
                self.error.get_or_insert(e);
            }
        }
    }
}

fn flat_state(s: &GaussianState) -> (Vec<f64>, Vec<f64>) {
    (s.mean.as_slice().to_vec(), to_flat(&s.cov))
}

/// One-step forecast of the hidden block from `prev` over `[t, t+dt)`.
fn forecast(
    model: &CgnsModel,
    t: f64,
    x: &nalgebra::DVector<f64>,
    prev: &GaussianState,
    dt: f64,
) -> Result<GaussianState> {
    let c = model.checked_coefficients(t, x)?;
    let q = gram(&c.sigma_y1, &c.sigma_y2, &c.sigma_y1, &c.sigma_y2)?;
    let mean = &prev.mean + (&c.lambda_y * &prev.mean + &c.f_y) * dt;
    let r = &prev.cov;
    let mut cov: DMatrix<f64> = r + (&c.lambda_y * r + r * c.lambda_y.transpose() + q) * dt;
    crate::linalg::symmetrize(&mut cov);
    Ok(GaussianState { mean, cov })
}

/// Runs the full pipeline for one query on one trajectory.
pub fn run_query(
    model: &CgnsModel,
    traj: &Trajectory,
    query: &CausalQuery,
    cfg: &AnalysisConfig,
) -> Result<QueryOutput> {
    let cmodel = apply_conditioning(model, query)?;
    let x0 = traj
        .x_path
        .first()
        .ok_or_else(|| Error::InvalidQuery("empty trajectory".into()))?;
    let init = cfg
        .init
        .clone()
        .unwrap_or_else(|| default_initial_state(&cmodel, traj.t0, x0, traj.dt));
    let filter = run_filter(&cmodel, traj, init)?;
    let smoother = complete_smoother(&filter, traj, cfg.bank)?;
    run_query_with(&cmodel, traj, query, cfg, &filter, &smoother)
}

/// Pipeline after filtering and complete smoothing (both on the conditioned model).
pub fn run_query_with(
    cmodel: &CgnsModel,
    traj: &Trajectory,
    query: &CausalQuery,
    cfg: &AnalysisConfig,
    filter: &FilterSeries,
    smoother: &SmootherSeries,
) -> Result<QueryOutput> {
    let n_last = traj.n_steps();
    let dt = traj.dt;
    let l = cmodel.dim_hid();
    let cause = &query.cause;
    let mc = cause.len();
    let analysis = cfg.analysis_indices(traj);
    let slot_of = |j: usize| analysis.binary_search(&j).ok();

    let mut ws = KlWorkspace::new(mc);
    ws.jitter = cfg.jitter;
    let mut obs = Pass2 {
        cause,
        l,
        ws,
        buf: [vec![0.0; mc], vec![0.0; mc * mc], vec![0.0; mc], vec![0.0; mc * mc]],
        collect: false,
        raw_backward: Vec::new(),
        error: None,
    };

    let na = analysis.len();
    let mut series = CirSeries {
        label: query.label.clone(),
        t: analysis.iter().map(|&j| traj.time(j)).collect(),
        aci: vec![EntropyValue::ZERO; na],
        tau_forward_approx: vec![0.0; na],
        tau_backward_approx: vec![0.0; na],
        tau_forward_exact: cfg.exact_cir.then(|| vec![0.0; na]),
        tau_backward_exact: cfg.exact_cir.then(|| vec![0.0; na]),
        max_deficit_forward: vec![0.0; na],
        max_deficit_backward: vec![0.0; na],
        flags: vec![CirFlags::default(); na],
    };
    let mut backward_profiles: Option<Vec<(usize, Vec<f64>)>> = cfg.exact_cir.then(|| vec![(0, Vec::new()); na]);
    let mut trackers: Vec<ForwardTracker> = Vec::new();
    let mut finished: Vec<ForwardTracker> = Vec::new();

    let mut step = |bank: &SmootherBank, o: &mut Pass2| -> Result<()> {
        if let Some(e) = o.error.take() {
            return Err(e);
        }
        let n = bank.n_current();

        // Backward profile at T = t_n.
        if let Some(slot) = slot_of(n) {
            let mut raw = std::mem::take(&mut o.raw_backward);
            if n > 0 {
                let fc = forecast(cmodel, traj.time(n - 1), &traj.x_path[n - 1], &filter.states[n - 1], dt)?;
                let (fm, fr) = flat_state(&filter.states[n]);
                let (pm, pr) = flat_state(&fc);
                let e = o.kl(&fm, &fr, &pm, &pr)?;
                raw.push((n, e.total));
            } else {
                raw.push((0, 0.0));
            }
            let p0 = if raw[0].0 == 0 { raw[0].1 } else { 0.0 };
            let g: Vec<f64> = raw.iter().map(|&(_, p)| (p - p0).abs()).collect();
            let approx = backward_length_approx(&g, dt);
            series.tau_backward_approx[slot] = approx.length;
            series.max_deficit_backward[slot] = approx.max;
            series.flags[slot].weak_backward = approx.weak;
            if let Some(ex) = series.tau_backward_exact.as_mut() {
                ex[slot] = backward_length_exact(&g, dt, cfg.eps_policy).length;
            }
            if let Some(bp) = backward_profiles.as_mut() {
                bp[slot] = (raw[0].0, g);
            }
        }
        o.raw_backward.clear();

        // Forward deficits of the open trackers.
        let mut keep = Vec::with_capacity(trackers.len());
        for mut tr in trackers.drain(..) {
            let p = match bank.entry(tr.j) {
                Some(e) => o.kl(&tr.final_mean, &tr.final_cov, e.mean, e.cov)?.total,
                None => 0.0,
            };
            tr.sum += p;
            tr.max = tr.max.max(p);
            if let Some(pr) = tr.profile.as_mut() {
                pr.push(p);
            }
            if bank.entry(tr.j).is_some() && n < n_last {
                keep.push(tr);
            } else {
                finished.push(tr);
            }
        }
        trackers = keep;

        // New tracker at j = n; its first deficit is the ACI value.
        if let Some(slot) = slot_of(n) {
            let (fm, fr) = flat_state(&smoother.states[n]);
            let e = bank.entry(n).expect("newest lag is retained");
            let aci = o.kl(&fm, &fr, e.mean, e.cov)?;
            series.aci[slot] = aci;
            let tr = ForwardTracker {
                j: n,
                slot,
                final_mean: fm,
                final_cov: fr,
                sum: aci.total,
                max: aci.total,
                profile: cfg.exact_cir.then(|| vec![aci.total]),
            };
            if n < n_last {
                trackers.push(tr);
            } else {
                finished.push(tr);
            }
        }
        o.collect = slot_of(n + 1).is_some();
        Ok(())
    };

    drive_bank(filter, traj, cfg.bank, &mut obs, |b, o| step(b, o))?;
    if let Some(e) = obs.error.take() {
        return Err(e);
    }
    finished.append(&mut trackers);

    let mut forward_profiles: Option<Vec<Vec<f64>>> = cfg.exact_cir.then(|| vec![Vec::new(); na]);
    for tr in finished {
        let slot = tr.slot;
        // The last deficit (at freeze or end of data) is zero, so the sum is the cell sum.
        let (length, weak) = if tr.max > 0.0 {
            (dt * tr.sum / tr.max, tr.max < crate::cir::WEAK_EVIDENCE)
        } else {
            (0.0, true)
        };
        let horizon = (n_last - tr.j) as f64 * dt;
        series.tau_forward_approx[slot] = length.min(horizon);
        series.max_deficit_forward[slot] = tr.max;
        series.flags[slot].weak_forward = weak;
        series.flags[slot].truncated = smoother.truncated[tr.j];
        if let (Some(ex), Some(pr)) = (series.tau_forward_exact.as_mut(), tr.profile.as_ref()) {
            ex[slot] = forward_length_exact(pr, dt, cfg.eps_policy).length;
            debug_assert!(
                (forward_length_approx(pr, dt).length - series.tau_forward_approx[slot]).abs() < 1e-9 * (1.0 + length)
            );
        }
        if let (Some(fp), Some(pr)) = (forward_profiles.as_mut(), tr.profile) {
            fp[slot] = pr;
        }
    }

    let posterior = PosteriorTrace {
        filter: analysis
            .iter()
            .map(|&j| marginal(&filter.states[j], cause))
            .collect::<Result<_>>()?,
        smoother: analysis
            .iter()
            .map(|&j| marginal(&smoother.states[j], cause))
            .collect::<Result<_>>()?,
    };
    Ok(QueryOutput {
        series,
        posterior,
        psd_clips: filter.psd_clips,
        forward_profiles,
        backward_profiles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{lorenz84_model, Lorenz84Params};

    #[test]
    fn mode_parsing() {
        assert_eq!(
            "exact-limit".parse::<ConditioningMode>().unwrap(),
            ConditioningMode::ExactLimit
        );
        assert_eq!(
            "large-noise:1e8".parse::<ConditioningMode>().unwrap(),
            ConditioningMode::LargeNoise(1e8)
        );
        assert!("bogus".parse::<ConditioningMode>().is_err());
        assert!("large-noise:-1".parse::<ConditioningMode>().is_err());
    }

    #[test]
    fn query_from_names_fills_conditioning() {
        let m = lorenz84_model(&Lorenz84Params::default()).unwrap();
        let q = CausalQuery::from_names(&m, "x->y|z", &["x"], &["y"], &["z"], ConditioningMode::ExactLimit).unwrap();
        assert_eq!(q.cause, vec![0]);
        assert_eq!(q.effect, vec![0]);
        assert_eq!(q.conditioning_observed, vec![1]);
        assert!(CausalQuery::from_names(&m, "bad", &["y"], &["z"], &[], ConditioningMode::ExactLimit).is_err());
    }

    #[test]
    fn empty_conditioning_leaves_model() {
        let m = lorenz84_model(&Lorenz84Params::default()).unwrap();
        let q =
            CausalQuery::from_names(&m, "x->(y,z)", &["x"], &["y", "z"], &[], ConditioningMode::ExactLimit).unwrap();
        let c = apply_conditioning(&m, &q).unwrap();
        assert!(c.neutralized().is_empty());
        let x = nalgebra::DVector::from_vec(vec![0.3, -0.2]);
        assert_eq!(c.coefficients(1.0, &x), m.coefficients(1.0, &x));
    }

    #[test]
    fn conditioned_gain_has_zero_column() {
        let m = lorenz84_model(&Lorenz84Params::default()).unwrap();
        let q = CausalQuery::from_names(&m, "x->y|z", &["x"], &["y"], &["z"], ConditioningMode::ExactLimit).unwrap();
        let c = apply_conditioning(&m, &q).unwrap();
        let x = nalgebra::DVector::from_vec(vec![0.5, 1.0]);
        let coef = c.coefficients(0.0, &x);
        let grams = crate::filter::NoiseGrams::new(&c, &coef, 0, 0.0).unwrap();
        let gain = (DMatrix::<f64>::identity(1, 1) * coef.lambda_x.transpose() + &grams.cross) * &grams.gram_inv;
        assert_eq!(gain[(0, 1)], 0.0);
        assert!(gain[(0, 0)] != 0.0);
    }

    #[test]
    fn analysis_indices_respect_windows() {
        let traj = Trajectory::from_observations(0.1, 0.0, vec![nalgebra::DVector::zeros(1); 201]).unwrap();
        let cfg = AnalysisConfig {
            stride: 5,
            windows: vec![(12.0, 13.0)],
            burn_in: 1.0,
            ..Default::default()
        };
        let idx = cfg.analysis_indices(&traj);
        assert_eq!(idx, vec![120, 125, 130]);
    }
}
