//! Simulates the regime-switching climate model and prints a path summary.

use aci_cir::models::{climate_model, ClimateParams};
use aci_cir::sim::simulate;
use nalgebra::DVector;

fn main() -> aci_cir::Result<()> {
    let model = climate_model(&ClimateParams::with_eps(0.01))?;
    let traj = simulate(&model, &DVector::zeros(1), &DVector::zeros(2), 1e-3, 110_000, 7)?;
    println!(
        "observed {:?}, hidden {:?}",
        model.observed_names(),
        model.hidden_names()
    );
    for t in (0..=110).step_by(10) {
        let j = traj.index_at(t as f64);
        let y = &traj.y_path.as_ref().expect("simulated paths keep hidden states")[j];
        println!(
            "t={t:>3}  x={:+.3}  y={:+.3}  gamma={:+.3}",
            traj.x_path[j][0], y[0], y[1]
        );
    }
    Ok(())
}
