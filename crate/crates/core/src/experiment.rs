//! End-to-end runs: simulate (or load), analyse every query, write artifacts.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::cir::{CirSeries, EpsGridPolicy};
use crate::config::{preset, ExperimentConfig, QuerySpec};
use crate::error::{Error, Result};
use crate::filter::{default_initial_state, run_filter};
use crate::io::{bank_csv, filter_csv, fmt_g, read_trajectory_csv, trajectory_csv, write_text, Metadata};
use crate::model::Trajectory;
use crate::plot::{query_figure, render_svg};
use crate::query::{apply_conditioning, run_query_with, CausalQuery, QueryOutput};
use crate::sim::simulate;
use crate::smoother::{complete_smoother, drive_bank};

/// Version string recorded in run metadata.
pub fn build_version() -> String {
    format!("{} ({})", env!("CARGO_PKG_VERSION"), env!("ACI_GIT_DESCRIBE"))
}

/// Results of one query within an experiment.
#[derive(Clone, Debug)]
pub struct QueryResult {
    pub spec: QuerySpec,
    pub output: QueryOutput,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub trajectory: Trajectory,
    pub results: Vec<QueryResult>,
}

impl ExperimentOutput {
    pub fn series(&self, label: &str) -> Option<&CirSeries> {
        self.results
            .iter()
            .find(|r| r.spec.label == label)
            .map(|r| &r.output.series)
    }
}

/// Simulated or loaded trajectory for the configured model.
pub fn load_trajectory(cfg: &ExperimentConfig) -> Result<Trajectory> {
    let model = cfg.family.model()?;
    if let Some(input) = &cfg.simulation.input {
        let observed: Vec<&str> = model.observed_names().iter().map(String::as_str).collect();
        return read_trajectory_csv(input, &observed);
    }
    let (x0, y0) = cfg
        .simulation
        .initial
        .clone()
        .unwrap_or_else(|| cfg.family.initial_state());
    simulate(
        &model,
        &x0,
        &y0,
        cfg.simulation.dt,
        cfg.simulation.n_steps(),
        cfg.simulation.seed,
    )
}

fn str_refs(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

struct Prepared {
    output: QueryOutput,
    filter: Option<String>,
    bank: Option<String>,
}

fn analyse_query(cfg: &ExperimentConfig, base: &Trajectory, spec: &QuerySpec) -> Result<Prepared> {
    let (model, traj) = if spec.observe.is_empty() {
        (cfg.family.model()?, None)
    } else {
        let model = cfg.family.model_observing(&spec.observe)?;
        let obs: Vec<&str> = model.observed_names().iter().map(String::as_str).collect();
        let hid: Vec<&str> = model.hidden_names().iter().map(String::as_str).collect();
        let t = base.repartition(&obs, &hid)?;
        (model, Some(t))
    };
    let traj = traj.as_ref().unwrap_or(base);
    let query = CausalQuery::from_names(
        &model,
        spec.label.clone(),
        &str_refs(&spec.cause),
        &str_refs(&spec.effect),
        &str_refs(&spec.condition),
        spec.mode,
    )?;
    let cmodel = apply_conditioning(&model, &query)?;
    let x0 = traj
        .x_path
        .first()
        .ok_or_else(|| Error::InvalidQuery("empty trajectory".into()))?;
    let init = cfg
        .analysis
        .init
        .clone()
        .unwrap_or_else(|| default_initial_state(&cmodel, traj.t0, x0, traj.dt));
    let filter = run_filter(&cmodel, traj, init)?;
    let smoother = complete_smoother(&filter, traj, cfg.analysis.bank)?;
    let output = run_query_with(&cmodel, traj, &query, &cfg.analysis, &filter, &smoother)?;
    let bank = if cfg.output.bank_dump {
        let last = traj.n_steps();
        let mut dump = String::new();
        drive_bank(&filter, traj, cfg.analysis.bank, &mut (), |b, _| {
            if b.n_current() == last {
                dump = bank_csv(b, cmodel.dim_hid());
            }
            Ok(())
        })?;
        Some(dump)
    } else {
        None
    };
    Ok(Prepared {
        output,
        filter: cfg.output.filter.then(|| filter_csv(&filter)),
        bank,
    })
}

fn metadata(cfg: &ExperimentConfig, traj: &Trajectory) -> Metadata {
    let mut m = Metadata::new();
    m.set("experiment", &cfg.name);
    m.set("version", build_version());
    m.set("model", cfg.family.kind());
    if let Ok(model) = cfg.family.model() {
        for (k, v) in &model.params {
            m.set(format!("param.{k}"), v);
        }
    }
    let sim = &cfg.simulation;
    match &sim.input {
        Some(p) => m.set("input", p.display()),
        None => {
            m.set("seed", sim.seed);
            m.set("rng", "chacha8, one stream per noise channel");
        }
    }
    m.set("dt", fmt_g(traj.dt));
    m.set("t0", fmt_g(traj.t0));
    m.set("t_end", fmt_g(traj.t_end()));
    m.set("n_steps", traj.n_steps());
    if let Some((x0, y0)) = &sim.initial {
        let join = |v: &nalgebra::DVector<f64>| v.iter().map(|x| fmt_g(*x)).collect::<Vec<_>>().join(" ");
        m.set("initial.x", join(x0));
        m.set("initial.y", join(y0));
    }
    let a = &cfg.analysis;
    m.set("stride", a.stride);
    m.set("burn_in", fmt_g(a.burn_in));
    let windows: Vec<String> = a
        .windows
        .iter()
        .map(|(s, e)| format!("[{},{}]", fmt_g(*s), fmt_g(*e)))
        .collect();
    m.set("windows", windows.join(" "));
    m.set("lag_cap", a.bank.lag_cap);
    m.set("lag_tol", fmt_g(a.bank.lag_tol));
    m.set("exact_cir", a.exact_cir);
    m.set(
        "eps_policy",
        match a.eps_policy {
            EpsGridPolicy::Staircase => "staircase".to_string(),
            EpsGridPolicy::Uniform(n) => format!("uniform:{n}"),
        },
    );
    m.set("jitter", fmt_g(a.jitter));
    for q in &cfg.queries {
        let cond = if q.condition.is_empty() {
            String::new()
        } else {
            format!(" | {}", q.condition.join(","))
        };
        m.set(
            format!("query.{}", q.label),
            format!("{} -> {}{}", q.cause.join(","), q.effect.join(","), cond),
        );
        m.set(format!("query.{}.mode", q.label), q.mode);
        if !q.observe.is_empty() {
            m.set(format!("query.{}.observe", q.label), q.observe.join(","));
        }
    }
    m
}

/// Runs every query of `cfg` and writes artifacts under `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentOutput> {
    let traj = load_trajectory(cfg)?;
    let prepared: Vec<Result<Prepared>> = cfg
        .queries
        .par_iter()
        .map(|spec| analyse_query(cfg, &traj, spec))
        .collect();

    let mut files = Vec::new();
    let mut emit = |name: String, text: &str| -> Result<()> {
        let path = out_dir.join(name);
        write_text(&path, text)?;
        files.push(path);
        Ok(())
    };
    emit("config.toml".into(), &cfg.source)?;
    emit("run.meta".into(), &metadata(cfg, &traj).render())?;
    if cfg.output.trajectory {
        emit("trajectory.csv".into(), &trajectory_csv(&traj))?;
    }
    let mut results = Vec::new();
    for (spec, prep) in cfg.queries.iter().zip(prepared) {
        let prep = prep?;
        let label = &spec.label;
        emit(format!("cir_{label}.csv"), &prep.output.series.to_csv())?;
        if cfg.output.svg {
            let mut vars = spec.effect.clone();
            vars.extend(spec.cause.iter().cloned());
            let panels = query_figure(&prep.output.series, &traj, &vars);
            emit(
                format!("{label}.svg"),
                &render_svg(&format!("{} {label}", cfg.name), &panels),
            )?;
        }
        if let Some(f) = &prep.filter {
            emit(format!("filter_{label}.csv"), f)?;
        }
        if let Some(b) = &prep.bank {
            emit(format!("bank_{label}.csv"), b)?;
        }
        results.push(QueryResult {
            spec: spec.clone(),
            output: prep.output,
        });
    }
    Ok(ExperimentOutput {
        dir: out_dir.to_path_buf(),
        files,
        trajectory: traj,
        results,
    })
}

/// Runs a named preset into `out_dir`.
pub fn reproduce(name: &str, out_dir: &Path) -> Result<ExperimentOutput> {
    run_experiment(&preset(name)?, out_dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"[model]
kind = "reduced-linear"

[simulation]
dt = 0.01
t_end = 3.0
seed = 3

[analysis]
stride = 20
burn_in = 0.5
exact_cir = true

[queries.y_to_x]
cause = ["y"]
effect = ["x"]

[output]
filter = true
bank_dump = true
"#;

    #[test]
    fn writes_all_artifacts() {
        let cfg = ExperimentConfig::parse(SMALL, "small", "small").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let out = run_experiment(&cfg, dir.path()).unwrap();
        for f in [
            "config.toml",
            "run.meta",
            "trajectory.csv",
            "cir_y_to_x.csv",
            "y_to_x.svg",
            "filter_y_to_x.csv",
            "bank_y_to_x.csv",
        ] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        assert_eq!(out.files.len(), 7);
        let meta = Metadata::parse(&std::fs::read_to_string(dir.path().join("run.meta")).unwrap());
        assert_eq!(meta.get("seed"), Some("3"));
        assert_eq!(meta.get("query.y_to_x.mode"), Some("exact-limit"));
        assert!(meta.get("version").is_some());
        let s = out.series("y_to_x").unwrap();
        assert!(s.tau_forward_exact.is_some());
    }

    #[test]
    fn loads_trajectory_from_csv() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::parse(SMALL, "small", "small").unwrap();
        let traj = load_trajectory(&cfg).unwrap();
        let path = dir.path().join("t.csv");
        write_text(&path, &trajectory_csv(&traj)).unwrap();
        let text = SMALL.replace("seed = 3", &format!("input = \"{}\"", path.display()));
        let cfg2 = ExperimentConfig::parse(&text, "small", "small").unwrap();
        let back = load_trajectory(&cfg2).unwrap();
        assert_eq!(back.n_steps(), traj.n_steps());
        for (a, b) in back.x_path.iter().zip(&traj.x_path) {
            assert!((a[0] - b[0]).abs() <= 1e-11 * (1.0 + b[0].abs()));
        }
    }
}
