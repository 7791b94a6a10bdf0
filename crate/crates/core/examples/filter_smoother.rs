//! Filter and smoother on the reduced linear model, against the stationary values.

use aci_cir::filter::default_initial_state;
use aci_cir::models::{equilibrium_aci, equilibrium_stats, reduced_linear_model, ReducedLinearParams};
use aci_cir::sim::simulate;
use aci_cir::{complete_smoother, run_filter, BankConfig};
use nalgebra::DVector;

fn main() -> aci_cir::Result<()> {
    let p = ReducedLinearParams::unforced(1.0, -1.0, 1.0, 1.0);
    let model = reduced_linear_model(&p)?;
    let dt = 1e-3;
    let traj = simulate(&model, &DVector::zeros(1), &DVector::zeros(1), dt, 40_000, 1)?;
    let filter = run_filter(&model, &traj, default_initial_state(&model, 0.0, &traj.x_path[0], dt))?;
    let smoother = complete_smoother(&filter, &traj, BankConfig::default())?;
    let stats = equilibrium_stats(&p)?;
    let j = traj.index_at(20.0);
    println!(
        "filter variance   {:.6}  (stationary {:.6})",
        filter.states[j].cov[(0, 0)],
        stats.rf
    );
    println!(
        "smoother variance {:.6}  (stationary {:.6})",
        smoother.states[j].cov[(0, 0)],
        stats.rs
    );
    println!("stationary ACI    {:.6}", equilibrium_aci(&stats));
    Ok(())
}
