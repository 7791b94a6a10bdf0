//! Signal/dispersion split of the Gaussian relative entropy and marginalization.

use aci_cir::info::{gauss_relative_entropy, marginal};
use aci_cir::GaussianState;
use nalgebra::{DMatrix, DVector};

fn main() -> aci_cir::Result<()> {
    let p = GaussianState {
        mean: DVector::from_vec(vec![0.5, -0.2]),
        cov: DMatrix::from_row_slice(2, 2, &[0.4, 0.1, 0.1, 0.3]),
    };
    let q = GaussianState {
        mean: DVector::zeros(2),
        cov: DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.8]),
    };
    let kl = gauss_relative_entropy(&p, &q)?;
    println!(
        "joint:      total {:.6} = signal {:.6} + dispersion {:.6}",
        kl.total, kl.signal, kl.dispersion
    );
    let kl0 = gauss_relative_entropy(&marginal(&p, &[0])?, &marginal(&q, &[0])?)?;
    println!("marginal 0: total {:.6}", kl0.total);
    println!("self:       total {:.1e}", gauss_relative_entropy(&p, &p)?.total);
    Ok(())
}
