//! Cross-checks against the Kalman-Bucy filter and the offline backward smoother.

use aci_cir::oracle::{kalman_bucy_filter, offline_backward_smoother};
use aci_cir::sim::simulate;
use aci_cir::validation::linear_test_system;
use aci_cir::{complete_smoother, run_filter, BankConfig, GaussianState};
use nalgebra::{DMatrix, DVector};

fn main() -> aci_cir::Result<()> {
    let spec = linear_test_system(true);
    let model = spec.to_model()?;
    let traj = simulate(&model, &DVector::zeros(2), &DVector::zeros(2), 0.01, 3_000, 11)?;
    let init = GaussianState {
        mean: DVector::zeros(2),
        cov: DMatrix::identity(2, 2),
    };
    let filter = run_filter(&model, &traj, init.clone())?;
    let kb = kalman_bucy_filter(&spec, &traj, &init)?;
    let online = complete_smoother(&filter, &traj, BankConfig::exact())?;
    let offline = offline_backward_smoother(&model, &traj, &filter.states)?;
    let gap = |a: &[GaussianState], b: &[GaussianState]| {
        a.iter()
            .zip(b)
            .map(|(x, y)| (&x.mean - &y.mean).amax().max((&x.cov - &y.cov).amax()))
            .fold(0.0f64, f64::max)
    };
    println!("filter vs Kalman-Bucy:             {:.2e}", gap(&filter.states, &kb));
    println!(
        "online bank vs offline smoother:   {:.2e}",
        gap(&online.states, &offline)
    );
    Ok(())
}
