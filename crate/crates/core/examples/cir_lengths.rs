//! Norm-ratio and threshold-averaged CIR lengths on hand-made profiles.

use aci_cir::cir::{
    backward_length_approx, backward_length_exact, backward_profile, forward_length_approx, forward_length_exact,
    forward_subjective, EpsGridPolicy,
};

fn main() {
    let dt = 0.1;
    let forward = [0.9, 0.2, 0.6, 0.1, 0.0, 0.0];
    let a = forward_length_approx(&forward, dt);
    let e = forward_length_exact(&forward, dt, EpsGridPolicy::Staircase);
    println!(
        "forward  approx {:.4}  exact {:.4}  max {:.2}",
        a.length, e.length, a.max
    );
    println!(
        "forward subjective length at eps=0.3: {:.2}",
        forward_subjective(&forward, dt, 0.3)
    );

    let raw = [1.2, 1.5, 1.3, 2.0, 2.4];
    let g = backward_profile(&raw);
    let a = backward_length_approx(&g, dt);
    let e = backward_length_exact(&g, dt, EpsGridPolicy::Uniform(4000));
    println!("backward profile {g:?}");
    println!(
        "backward approx {:.4}  exact {:.4}  weak {}",
        a.length, e.length, a.weak
    );
}
