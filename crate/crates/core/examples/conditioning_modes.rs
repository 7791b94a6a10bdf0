//! Exact-limit conditioning against the large-noise surrogate.

use aci_cir::models::{lorenz84_model, Lorenz84Params};
use aci_cir::sim::simulate;
use aci_cir::{run_query, AnalysisConfig, CausalQuery, ConditioningMode};
use nalgebra::DVector;

fn main() -> aci_cir::Result<()> {
    let model = lorenz84_model(&Lorenz84Params::default())?;
    let traj = simulate(
        &model,
        &DVector::zeros(2),
        &DVector::from_element(1, 1.0),
        1e-3,
        20_000,
        3,
    )?;
    let cfg = AnalysisConfig {
        stride: 500,
        burn_in: 2.0,
        ..Default::default()
    };
    let aci = |mode| -> aci_cir::Result<Vec<f64>> {
        let q = CausalQuery::from_names(&model, "x->y|z", &["x"], &["y"], &["z"], mode)?;
        Ok(run_query(&model, &traj, &q, &cfg)?
            .series
            .aci
            .iter()
            .map(|a| a.total)
            .collect())
    };
    let exact = aci(ConditioningMode::ExactLimit)?;
    for s in [1e2, 1e4, 1e6, 1e8] {
        let large = aci(ConditioningMode::LargeNoise(s))?;
        let sup = exact.iter().zip(&large).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        println!("scale {s:.0e}: sup |difference| = {sup:.3e}");
    }
    Ok(())
}
