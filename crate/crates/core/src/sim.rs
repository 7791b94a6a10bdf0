//! Euler–Maruyama integration of CGNS models.
//!
//! Each noise channel owns an independent ChaCha8 stream selected by its
//! channel index, so draws are laid out channel-first and then time-major.
//! Two models with the same channel layout and seed see identical noise.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{CgnsModel, Trajectory};

/// One explicit step. `dw1`, `dw2` are Brownian increments with variance `dt`.
#[allow(clippy::too_many_arguments)]
pub fn euler_maruyama_step(
    model: &CgnsModel,
    t: f64,
    x: &DVector<f64>,
    y: &DVector<f64>,
    dt: f64,
    dw1: &DVector<f64>,
    dw2: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    if y.len() != model.dim_hid() {
        return Err(Error::Dimension {
            context: "hidden state",
            expected: model.dim_hid(),
            found: y.len(),
        });
    }
    let (d1, d2) = model.noise_dims();
    if dw1.len() != d1 || dw2.len() != d2 {
        return Err(Error::Dimension {
            context: "noise increments",
            expected: d1 + d2,
            found: dw1.len() + dw2.len(),
        });
    }
    let c = model.checked_coefficients(t, x)?;
    let xn = x + c.drift_x(y) * dt + &c.sigma_x1 * dw1 + &c.sigma_x2 * dw2;
    let yn = y + c.drift_y(y) * dt + &c.sigma_y1 * dw1 + &c.sigma_y2 * dw2;
    Ok((xn, yn))
}

/// Per-channel Gaussian increment source.
pub struct NoiseSource {
    streams: Vec<ChaCha8Rng>,
    sqrt_dt: f64,
}

impl NoiseSource {
    pub fn new(seed: u64, channels: usize, dt: f64) -> Self {
        let streams = (0..channels)
            .map(|c| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(c as u64);
                rng
            })
            .collect();
        NoiseSource {
            streams,
            sqrt_dt: dt.sqrt(),
        }
    }

    /// Fills `out` with the next increment of every channel.
    pub fn draw(&mut self, out: &mut [f64]) {
        for (o, rng) in out.iter_mut().zip(self.streams.iter_mut()) {
            let z: f64 = rng.sample(StandardNormal);
            *o = z * self.sqrt_dt;
        }
    }
}

/// Integrates `model` from `(x0, y0)` at `t0` for `n_steps` steps.
pub fn simulate_from(
    model: &CgnsModel,
    t0: f64,
    x0: &DVector<f64>,
    y0: &DVector<f64>,
    dt: f64,
    n_steps: usize,
    seed: u64,
) -> Result<Trajectory> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidParameters(format!("dt must be positive, got {dt}")));
    }
    if x0.len() != model.dim_obs() {
        return Err(Error::Dimension {
            context: "initial observed state",
            expected: model.dim_obs(),
            found: x0.len(),
        });
    }
    if y0.len() != model.dim_hid() {
        return Err(Error::Dimension {
            context: "initial hidden state",
            expected: model.dim_hid(),
            found: y0.len(),
        });
    }
    let (d1, d2) = model.noise_dims();
    let mut noise = NoiseSource::new(seed, d1 + d2, dt);
    let mut buf = vec![0.0; d1 + d2];
    let mut x_path = Vec::with_capacity(n_steps + 1);
    let mut y_path = Vec::with_capacity(n_steps + 1);
    x_path.push(x0.clone());
    y_path.push(y0.clone());
    let mut x = x0.clone();
    let mut y = y0.clone();
    for n in 0..n_steps {
        noise.draw(&mut buf);
        let dw1 = DVector::from_column_slice(&buf[..d1]);
        let dw2 = DVector::from_column_slice(&buf[d1..]);
        let t = t0 + n as f64 * dt;
        let (xn, yn) = euler_maruyama_step(model, t, &x, &y, dt, &dw1, &dw2)?;
        if !xn.iter().chain(yn.iter()).all(|v| v.is_finite()) {
            return Err(Error::Blowup {
                what: "state",
                index: n + 1,
                time: t + dt,
            });
        }
        x_path.push(xn.clone());
        y_path.push(yn.clone());
        x = xn;
        y = yn;
    }
    Ok(Trajectory {
        dt,
        t0,
        x_path,
        y_path: Some(y_path),
        seed,
        observed_names: model.observed_names().to_vec(),
        hidden_names: model.hidden_names().to_vec(),
    })
}

/// Integrates from `t = 0`.
pub fn simulate(
    model: &CgnsModel,
    x0: &DVector<f64>,
    y0: &DVector<f64>,
    dt: f64,
    n_steps: usize,
    seed: u64,
) -> Result<Trajectory> {
    simulate_from(model, 0.0, x0, y0, dt, n_steps, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Coefficients;
    use nalgebra::DMatrix;

    fn ou(lambda: f64, sigma: f64) -> CgnsModel {
        CgnsModel::new("ou", 1, 1, 0, 1, move |_t, _x| {
            let mut c = Coefficients::zeros(1, 1, 0, 1);
            c.sigma_x2 = DMatrix::from_element(1, 1, 1.0);
            c.lambda_y[(0, 0)] = lambda;
            c.sigma_y2[(0, 0)] = sigma;
            c
        })
        .unwrap()
    }

    #[test]
    fn zero_dynamics_is_identity() {
        let m = CgnsModel::new("zero", 2, 1, 1, 1, |_t, _x| Coefficients::zeros(2, 1, 1, 1)).unwrap();
        let x = DVector::from_vec(vec![0.3, -1.0]);
        let y = DVector::from_vec(vec![5.0]);
        let w = DVector::from_vec(vec![0.7]);
        let (xn, yn) = euler_maruyama_step(&m, 0.0, &x, &y, 0.1, &w, &w).unwrap();
        assert_eq!(xn, x);
        assert_eq!(yn, y);
    }

    #[test]
    fn scalar_ou_step() {
        let m = ou(-1.0, 1.0);
        let (_, yn) = euler_maruyama_step(
            &m,
            0.0,
            &DVector::zeros(1),
            &DVector::from_vec(vec![2.0]),
            0.01,
            &DVector::zeros(0),
            &DVector::zeros(1),
        )
        .unwrap();
        assert!((yn[0] - 1.98).abs() < 1e-15);
    }

    #[test]
    fn zero_steps_keeps_initial_state() {
        let m = ou(-1.0, 1.0);
        let tr = simulate(&m, &DVector::zeros(1), &DVector::from_vec(vec![1.0]), 0.1, 0, 3).unwrap();
        assert_eq!(tr.x_path.len(), 1);
        assert_eq!(tr.y_path.unwrap()[0][0], 1.0);
    }

    #[test]
    fn same_seed_same_path() {
        let m = ou(-1.0, 1.0);
        let a = simulate(&m, &DVector::zeros(1), &DVector::zeros(1), 0.01, 500, 9).unwrap();
        let b = simulate(&m, &DVector::zeros(1), &DVector::zeros(1), 0.01, 500, 9).unwrap();
        let c = simulate(&m, &DVector::zeros(1), &DVector::zeros(1), 0.01, 500, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.y_path, c.y_path);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let m = ou(-1.0, 1.0);
        assert!(simulate(&m, &DVector::zeros(2), &DVector::zeros(1), 0.01, 1, 0).is_err());
    }

    #[test]
    fn blowup_reports_index() {
        let m = CgnsModel::new("boom", 1, 1, 0, 1, |_t, x| {
            let mut c = Coefficients::zeros(1, 1, 0, 1);
            c.f_x[0] = x[0] * x[0] * 1e10;
            c
        })
        .unwrap();
        let err = simulate(&m, &DVector::from_vec(vec![1.0]), &DVector::zeros(1), 1.0, 50, 0).unwrap_err();
        assert!(matches!(err, Error::Blowup { .. }));
    }
}
