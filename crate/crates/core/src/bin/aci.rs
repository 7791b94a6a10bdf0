use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use aci_cir::config::{preset, ExperimentConfig, Overrides, PRESETS};
use aci_cir::experiment::{build_version, load_trajectory, run_experiment};
use aci_cir::io::{trajectory_csv, write_text};
use aci_cir::{ConditioningMode, Result};

#[derive(Parser)]
#[command(name = "aci", version = env!("CARGO_PKG_VERSION"), about = "Assimilative causal inference for conditionally Gaussian systems")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Simulate the configured model and write trajectory.csv.
    Simulate(Common),
    /// Run every query of a config and write CIR tables, figures and metadata.
    Analyze(Common),
    /// Run a named preset.
    Reproduce {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(PRESETS))]
        preset: String,
        #[command(flatten)]
        common: Common,
    },
    /// Run every acceptance check; exits nonzero if a gating check fails.
    Validate {
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// Experiment TOML file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    lag_cap: Option<usize>,
    /// Also compute exact CIR lengths by threshold quadrature.
    #[arg(long)]
    exact_cir: bool,
    /// exact-limit, large-noise or large-noise:<scale>.
    #[arg(long)]
    conditioning_mode: Option<ConditioningMode>,
}

impl Common {
    fn load(&self, fallback: Option<&str>) -> Result<ExperimentConfig> {
        let mut cfg = match (&self.config, fallback) {
            (Some(path), _) => ExperimentConfig::from_path(path)?,
            (None, Some(name)) => preset(name)?,
            (None, None) => return Err(aci_cir::Error::Config("--config is required".into())),
        };
        cfg.apply(&Overrides {
            seed: self.seed,
            dt: self.dt,
            lag_cap: self.lag_cap,
            exact_cir: self.exact_cir,
            mode: self.conditioning_mode,
            out_dir: self.out_dir.clone(),
        })?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.verb {
        Verb::Simulate(c) => {
            let cfg = c.load(None)?;
            let traj = load_trajectory(&cfg)?;
            let path = cfg.output.dir.join("trajectory.csv");
            write_text(&path, &trajectory_csv(&traj))?;
            println!("{} steps -> {}", traj.n_steps(), path.display());
        }
        Verb::Analyze(c) => report(&c.load(None)?)?,
        Verb::Reproduce { preset, common } => report(&common.load(Some(&preset))?)?,
        Verb::Validate { out_dir } => return Ok(validate(out_dir)),
    }
    Ok(ExitCode::SUCCESS)
}

fn report(cfg: &ExperimentConfig) -> Result<()> {
    let out = run_experiment(cfg, &cfg.output.dir)?;
    for r in &out.results {
        let s = &r.output.series;
        let peak = s.aci.iter().map(|a| a.total).fold(0.0f64, f64::max);
        println!("{}: {} analysis times, peak ACI {:.4}", r.spec.label, s.len(), peak);
    }
    for f in &out.files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

#[cfg(feature = "validation")]
fn validate(out_dir: Option<PathBuf>) -> ExitCode {
    let dir = out_dir.unwrap_or_else(|| std::env::temp_dir().join(format!("aci-validate-{}", std::process::id())));
    println!("aci {}", build_version());
    let reports = aci_cir::validation::run_all(&dir, |r| println!("{r}"));
    let _ = std::fs::remove_dir_all(&dir);
    if reports.iter().all(|r| r.passed || !r.gating) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

#[cfg(not(feature = "validation"))]
fn validate(_: Option<PathBuf>) -> ExitCode {
    eprintln!("built without the `validation` feature");
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
