//! Conditional query x -> y | z on the Lorenz-84 model.

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
        30_000,
        7,
    )?;
    let query = CausalQuery::from_names(&model, "x->y|z", &["x"], &["y"], &["z"], ConditioningMode::ExactLimit)?;
    let cfg = AnalysisConfig {
        stride: 1000,
        burn_in: 5.0,
        ..Default::default()
    };
    let out = run_query(&model, &traj, &query, &cfg)?;
    let s = &out.series;
    println!("{:>6} {:>9} {:>9} {:>9}", "t", "aci", "tau_f", "tau_b");
    for i in 0..s.len() {
        println!(
            "{:>6.1} {:>9.4} {:>9.4} {:>9.4} {}",
            s.t[i], s.aci[i].total, s.tau_forward_approx[i], s.tau_backward_approx[i], s.flags[i]
        );
    }
    Ok(())
}
