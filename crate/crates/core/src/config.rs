//! Experiment configuration files and the built-in reproduction presets.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::Deserialize;

use crate::cir::EpsGridPolicy;
use crate::error::{Error, Result};
use crate::models::{ClimateParams, Lorenz84Params, ModelFamily, MultiscaleParams, ReducedLinearParams};
use crate::query::{AnalysisConfig, ConditioningMode};
use crate::smoother::BankConfig;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    model: RawModel,
    #[serde(default)]
    simulation: RawSimulation,
    #[serde(default)]
    analysis: RawAnalysis,
    #[serde(default)]
    queries: BTreeMap<String, RawQuery>,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    kind: String,
    #[serde(default)]
    params: toml::Table,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawSimulation {
    dt: f64,
    t_end: f64,
    seed: u64,
    initial: Option<RawInitial>,
    input: Option<PathBuf>,
}

impl Default for RawSimulation {
    fn default() -> Self {
        RawSimulation {
            dt: 1e-3,
            t_end: 100.0,
            seed: 0,
            initial: None,
            input: None,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInitial {
    x: Vec<f64>,
    y: Vec<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawAnalysis {
    stride: usize,
    burn_in: f64,
    windows: Vec<[f64; 2]>,
    lag_cap: usize,
    lag_tol: f64,
    exact_cir: bool,
    eps_nodes: Option<usize>,
    jitter: f64,
}

impl Default for RawAnalysis {
    fn default() -> Self {
        let bank = BankConfig::default();
        RawAnalysis {
            stride: 10,
            burn_in: 10.0,
            windows: Vec::new(),
            lag_cap: bank.lag_cap,
            lag_tol: bank.lag_tol,
            exact_cir: false,
            eps_nodes: None,
            jitter: 0.0,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQuery {
    cause: Vec<String>,
    effect: Vec<String>,
    #[serde(default)]
    condition: Vec<String>,
    #[serde(default)]
    observe: Vec<String>,
    #[serde(default)]
    mode: Option<String>,
    #[serde(default)]
    scale: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawOutput {
    dir: PathBuf,
    svg: bool,
    trajectory: bool,
    filter: bool,
    bank_dump: bool,
}

impl Default for RawOutput {
    fn default() -> Self {
        RawOutput {
            dir: PathBuf::from("out"),
            svg: true,
            trajectory: true,
            filter: false,
            bank_dump: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationConfig {
    pub dt: f64,
    pub t_end: f64,
    pub seed: u64,
    /// `(x0, y0)`; `None` uses the family default.
    pub initial: Option<(DVector<f64>, DVector<f64>)>,
    /// Read observations from this CSV instead of simulating.
    pub input: Option<PathBuf>,
}

impl SimulationConfig {
    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuerySpec {
    pub label: String,
    pub cause: Vec<String>,
    pub effect: Vec<String>,
    pub condition: Vec<String>,
    /// Observed variables; empty keeps the family's default partition.
    pub observe: Vec<String>,
    pub mode: ConditioningMode,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub svg: bool,
    pub trajectory: bool,
    pub filter: bool,
    pub bank_dump: bool,
}

/// Validated experiment description.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    /// Config text this was parsed from.
    pub source: String,
    pub family: ModelFamily,
    pub simulation: SimulationConfig,
    pub analysis: AnalysisConfig,
    pub queries: Vec<QuerySpec>,
    pub output: OutputConfig,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn config_err(path: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_string(),
        line,
        message: message.into(),
    }
}

/// Line of `key = ...` inside the table whose header is `header`, if present.
fn key_line(text: &str, header: &str, key: &str) -> Option<usize> {
    let mut inside = false;
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.starts_with('[') {
            inside = t == header;
            continue;
        }
        if inside {
            if let Some((k, _)) = t.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    text.lines().position(|l| l.trim() == header).map(|i| i + 1)
}

fn unknown_field(message: &str) -> Option<&str> {
    let rest = message.split("unknown field `").nth(1)?;
    rest.split('`').next()
}

impl ExperimentConfig {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("experiment");
        Self::parse(&text, &path.display().to_string(), stem)
    }

    /// Parses config text; `origin` is used in error messages.
    pub fn parse(text: &str, origin: &str, name: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| {
            let line = e.span().map_or(1, |s| line_of(text, s.start));
            config_err(origin, line, e.message().to_string())
        })?;
        let family = parse_family(&raw.model, text, origin)?;

        let sim = &raw.simulation;
        let sim_line = |key: &str| key_line(text, "[simulation]", key).unwrap_or(1);
        if !(sim.dt > 0.0 && sim.dt.is_finite()) {
            return Err(config_err(origin, sim_line("dt"), "dt must be positive"));
        }
        if !(sim.t_end > 0.0 && sim.t_end.is_finite()) {
            return Err(config_err(origin, sim_line("t_end"), "t_end must be positive"));
        }
        let initial = match &sim.initial {
            Some(init) => {
                let base = family.model()?;
                if init.x.len() != base.dim_obs() || init.y.len() != base.dim_hid() {
                    return Err(config_err(
                        origin,
                        sim_line("initial"),
                        format!(
                            "initial state needs {} observed and {} hidden values",
                            base.dim_obs(),
                            base.dim_hid()
                        ),
                    ));
                }
                Some((DVector::from_vec(init.x.clone()), DVector::from_vec(init.y.clone())))
            }
            None => None,
        };
        let simulation = SimulationConfig {
            dt: sim.dt,
            t_end: sim.t_end,
            seed: sim.seed,
            initial,
            input: sim.input.clone(),
        };

        let a = &raw.analysis;
        let an_line = |key: &str| key_line(text, "[analysis]", key).unwrap_or(1);
        if a.stride == 0 {
            return Err(config_err(origin, an_line("stride"), "stride must be at least 1"));
        }
        if !(a.lag_tol >= 0.0) {
            return Err(config_err(origin, an_line("lag_tol"), "lag_tol must be nonnegative"));
        }
        if !(a.jitter >= 0.0) {
            return Err(config_err(origin, an_line("jitter"), "jitter must be nonnegative"));
        }
        if a.windows.iter().any(|w| !(w[0] <= w[1])) {
            return Err(config_err(
                origin,
                an_line("windows"),
                "each window must be [start, end] with start <= end",
            ));
        }
        let analysis = AnalysisConfig {
            stride: a.stride,
            windows: a.windows.iter().map(|w| (w[0], w[1])).collect(),
            burn_in: a.burn_in,
            bank: BankConfig {
                lag_cap: a.lag_cap,
                lag_tol: a.lag_tol,
            },
            exact_cir: a.exact_cir,
            eps_policy: a.eps_nodes.map_or(EpsGridPolicy::Staircase, EpsGridPolicy::Uniform),
            init: None,
            jitter: a.jitter,
        };

        let mut queries = Vec::new();
        for (label, q) in &raw.queries {
            let header = format!("[queries.{label}]");
            let q_line = |key: &str| key_line(text, &header, key).unwrap_or(1);
            let mode = match (q.mode.as_deref(), q.scale) {
                (None, None) => ConditioningMode::default(),
                (None | Some("large-noise"), Some(s)) => {
                    if !(s > 0.0 && s.is_finite()) {
                        return Err(config_err(origin, q_line("scale"), "scale must be positive"));
                    }
                    ConditioningMode::LargeNoise(s)
                }
                (Some(m), None) => m
                    .parse()
                    .map_err(|e: Error| config_err(origin, q_line("mode"), e.to_string()))?,
                (Some(_), Some(_)) => {
                    return Err(config_err(
                        origin,
                        q_line("scale"),
                        "scale only applies to large-noise mode",
                    ));
                }
            };
            if q.cause.is_empty() || q.effect.is_empty() {
                return Err(config_err(origin, q_line("cause"), "cause and effect must be nonempty"));
            }
            queries.push(QuerySpec {
                label: label.clone(),
                cause: q.cause.clone(),
                effect: q.effect.clone(),
                condition: q.condition.clone(),
                observe: q.observe.clone(),
                mode,
            });
        }

        let o = &raw.output;
        Ok(ExperimentConfig {
            name: name.to_string(),
            source: text.to_string(),
            family,
            simulation,
            analysis,
            queries,
            output: OutputConfig {
                dir: o.dir.clone(),
                svg: o.svg,
                trajectory: o.trajectory,
                filter: o.filter,
                bank_dump: o.bank_dump,
            },
        })
    }
}

/// Command-line overrides applied on top of a config file or preset.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub dt: Option<f64>,
    pub lag_cap: Option<usize>,
    pub exact_cir: bool,
    pub mode: Option<ConditioningMode>,
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(seed) = o.seed {
            self.simulation.seed = seed;
        }
        if let Some(dt) = o.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::Config(format!("--dt must be positive, got {dt}")));
            }
            self.simulation.dt = dt;
        }
        if let Some(cap) = o.lag_cap {
            self.analysis.bank.lag_cap = cap;
        }
        if o.exact_cir {
            self.analysis.exact_cir = true;
        }
        if let Some(mode) = o.mode {
            for q in &mut self.queries {
                q.mode = mode;
            }
        }
        if let Some(dir) = &o.out_dir {
            self.output.dir = dir.clone();
        }
        Ok(())
    }
}

fn parse_family(raw: &RawModel, text: &str, origin: &str) -> Result<ModelFamily> {
    fn params<T: serde::de::DeserializeOwned>(t: &toml::Table, text: &str, origin: &str) -> Result<T> {
        t.clone().try_into().map_err(|e: toml::de::Error| {
            let msg = e.message().to_string();
            let line = unknown_field(&msg)
                .and_then(|k| key_line(text, "[model.params]", k))
                .or_else(|| text.lines().position(|l| l.trim() == "[model.params]").map(|i| i + 1))
                .unwrap_or(1);
            config_err(origin, line, format!("model.params: {msg}"))
        })
    }
    let family = match raw.kind.as_str() {
        "climate" => ModelFamily::Climate(params::<ClimateParams>(&raw.params, text, origin)?),
        "multiscale" => ModelFamily::Multiscale(params::<MultiscaleParams>(&raw.params, text, origin)?),
        "lorenz84" => ModelFamily::Lorenz84(params::<Lorenz84Params>(&raw.params, text, origin)?),
        "reduced-linear" => ModelFamily::ReducedLinear(params::<ReducedLinearParams>(&raw.params, text, origin)?),
        other => {
            let line = key_line(text, "[model]", "kind").unwrap_or(1);
            return Err(config_err(
                origin,
                line,
                format!("unknown model kind `{other}` (expected climate, multiscale, lorenz84 or reduced-linear)"),
            ));
        }
    };
    family.model().map_err(|e| {
        let line = text
            .lines()
            .position(|l| l.trim() == "[model.params]")
            .map_or(1, |i| i + 1);
        config_err(origin, line, e.to_string())
    })?;
    Ok(family)
}

const CLIMATE_EPS001: &str = r#"[model]
kind = "climate"

[model.params]
eps = 0.01

[simulation]
dt = 1e-3
t_end = 110.0
seed = 7

[analysis]
stride = 100
burn_in = 10.0
windows = [[38.0, 53.0], [73.0, 83.0], [95.0, 105.0]]

[queries.y_to_x]
cause = ["y"]
effect = ["x"]
condition = ["gamma"]

[queries.gamma_to_y]
cause = ["gamma"]
effect = ["y"]
condition = ["x"]
observe = ["x", "y"]
"#;

const CLIMATE_EPS01: &str = r#"[model]
kind = "climate"

[model.params]
eps = 0.1

[simulation]
dt = 1e-3
t_end = 110.0
seed = 7

[analysis]
stride = 100
burn_in = 10.0
windows = [[10.0, 40.0], [65.0, 105.0]]

[queries.y_to_x]
cause = ["y"]
effect = ["x"]
condition = ["gamma"]

[queries.gamma_to_y]
cause = ["gamma"]
effect = ["y"]
condition = ["x"]
observe = ["x", "y"]
"#;

const MULTISCALE_DEFAULT: &str = r#"[model]
kind = "multiscale"

[simulation]
dt = 1e-3
t_end = 100.0
seed = 7

[analysis]
stride = 100
burn_in = 10.0
windows = [[50.0, 100.0]]

[queries.joint]
cause = ["y1", "y2"]
effect = ["x1", "x2"]

[queries.y1_to_x1]
cause = ["y1"]
effect = ["x1"]
condition = ["x2", "y2"]

[queries.y2_to_x2]
cause = ["y2"]
effect = ["x2"]
condition = ["x1", "y1"]
"#;

const LORENZ84_DEFAULT: &str = r#"[model]
kind = "lorenz84"

[simulation]
dt = 1e-3
t_end = 150.0
seed = 7

[analysis]
stride = 100
burn_in = 0.0
windows = [[0.0, 150.0]]

[queries.x_to_y]
cause = ["x"]
effect = ["y"]
condition = ["z"]

[queries.x_to_z]
cause = ["x"]
effect = ["z"]
condition = ["y"]
"#;

const REDUCED_LINEAR: &str = r#"[model]
kind = "reduced-linear"

[simulation]
dt = 1e-3
t_end = 60.0
seed = 7

[analysis]
stride = 50
burn_in = 10.0
exact_cir = true

[queries.y_to_x]
cause = ["y"]
effect = ["x"]
"#;

/// Names of the built-in presets.
pub const PRESETS: [&str; 5] = [
    "climate-eps001",
    "climate-eps01",
    "multiscale-default",
    "lorenz84-default",
    "reduced-linear",
];

/// TOML text of a preset.
pub fn preset_text(name: &str) -> Option<&'static str> {
    Some(match name {
        "climate-eps001" => CLIMATE_EPS001,
        "climate-eps01" => CLIMATE_EPS01,
        "multiscale-default" => MULTISCALE_DEFAULT,
        "lorenz84-default" => LORENZ84_DEFAULT,
        "reduced-linear" => REDUCED_LINEAR,
        _ => return None,
    })
}

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let text = preset_text(name)
        .ok_or_else(|| Error::Config(format!("unknown preset `{name}` (available: {})", PRESETS.join(", "))))?;
    let mut cfg = ExperimentConfig::parse(text, &format!("preset:{name}"), name)?;
    cfg.output.dir = PathBuf::from("out").join(name);
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse() {
        let kinds = ["climate", "climate", "multiscale", "lorenz84", "reduced-linear"];
        for (name, kind) in PRESETS.iter().zip(kinds) {
            let cfg = preset(name).unwrap();
            assert!(!cfg.queries.is_empty(), "{name}");
            assert_eq!(cfg.family.kind(), kind);
        }
        let c = preset("climate-eps001").unwrap();
        assert_eq!(c.analysis.windows, vec![(38.0, 53.0), (73.0, 83.0), (95.0, 105.0)]);
        assert_eq!(c.simulation.n_steps(), 110_000);
        let l = preset("lorenz84-default").unwrap();
        assert_eq!(l.analysis.windows, vec![(0.0, 150.0)]);
        assert!(preset("nope").is_err());
    }

    #[test]
    fn unknown_key_reports_line() {
        let text = "[model]\nkind = \"lorenz84\"\n\n[analysis]\nstride = 5\nstrid = 4\n";
        match ExperimentConfig::parse(text, "t.toml", "t") {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 6, "{message}");
                assert!(message.contains("strid"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_model_param_reports_line() {
        let text = "[model]\nkind = \"climate\"\n\n[model.params]\neps = 0.1\nepsilon = 2.0\n";
        match ExperimentConfig::parse(text, "t.toml", "t") {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 6, "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn invalid_values_rejected() {
        let bad_kind = "[model]\nkind = \"weather\"\n";
        assert!(matches!(
            ExperimentConfig::parse(bad_kind, "t", "t"),
            Err(Error::Parse { line: 2, .. })
        ));
        let bad_dt = "[model]\nkind = \"lorenz84\"\n[simulation]\ndt = -1.0\n";
        assert!(matches!(
            ExperimentConfig::parse(bad_dt, "t", "t"),
            Err(Error::Parse { line: 4, .. })
        ));
        let bad_param = "[model]\nkind = \"climate\"\n[model.params]\neps = -1.0\n";
        assert!(ExperimentConfig::parse(bad_param, "t", "t").is_err());
        let bad_mode =
            "[model]\nkind = \"lorenz84\"\n[queries.q]\ncause = [\"x\"]\neffect = [\"y\"]\nmode = \"nope\"\n";
        assert!(matches!(
            ExperimentConfig::parse(bad_mode, "t", "t"),
            Err(Error::Parse { line: 6, .. })
        ));
    }

    #[test]
    fn overrides_apply() {
        let mut cfg = preset("lorenz84-default").unwrap();
        let o = Overrides {
            seed: Some(99),
            dt: Some(0.01),
            lag_cap: Some(10),
            exact_cir: true,
            mode: Some(ConditioningMode::LargeNoise(1e8)),
            out_dir: Some(PathBuf::from("x")),
        };
        cfg.apply(&o).unwrap();
        assert_eq!(cfg.simulation.seed, 99);
        assert_eq!(cfg.simulation.n_steps(), 15_000);
        assert_eq!(cfg.analysis.bank.lag_cap, 10);
        assert!(cfg.analysis.exact_cir);
        assert!(cfg.queries.iter().all(|q| q.mode == ConditioningMode::LargeNoise(1e8)));
        assert!(cfg
            .apply(&Overrides {
                dt: Some(0.0),
                ..Default::default()
            })
            .is_err());
    }

    #[test]
    fn large_noise_scale() {
        let text = "[model]\nkind = \"lorenz84\"\n[queries.q]\ncause = [\"x\"]\neffect = [\"y\"]\ncondition = [\"z\"]\nmode = \"large-noise\"\nscale = 1e8\n";
        let cfg = ExperimentConfig::parse(text, "t", "t").unwrap();
        assert_eq!(cfg.queries[0].mode, ConditioningMode::LargeNoise(1e8));
        let text = "[model]\nkind = \"lorenz84\"\n[queries.q]\ncause = [\"x\"]\neffect = [\"y\"]\nmode = \"exact-limit\"\nscale = 1e8\n";
        assert!(ExperimentConfig::parse(text, "t", "t").is_err());
    }
}
