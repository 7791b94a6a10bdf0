//! Runs a preset experiment and lists the artifacts it wrote.
//!
//! `cargo run --release --example reproduce_preset -- climate-eps001 out/`

use std::path::PathBuf;

use aci_cir::experiment::reproduce;

fn main() -> aci_cir::Result<()> {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "reduced-linear".into());
    let dir = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("aci-example"));
    let out = reproduce(&name, &dir)?;
    for r in &out.results {
        let s = &r.output.series;
        let peak = s.aci.iter().map(|a| a.total).fold(0.0f64, f64::max);
        println!("{}: {} times, peak ACI {peak:.4}", r.spec.label, s.len());
    }
    for f in &out.files {
        println!("{}", f.display());
    }
    Ok(())
}
