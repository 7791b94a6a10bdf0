//! Discrete conditional-Gaussian filter with correlated observation noise.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{enforce_psd, is_finite_matrix, is_finite_vector, lyapunov, spd_inverse, symmetrize};
use crate::model::{CgnsModel, Coefficients, Trajectory};

/// Channel-summed cross Gram matrix `A1 B1ᵀ + A2 B2ᵀ`.
pub fn gram(a1: &DMatrix<f64>, a2: &DMatrix<f64>, b1: &DMatrix<f64>, b2: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a1.ncols() != b1.ncols() {
        return Err(Error::Dimension {
            context: "gram channel 1",
            expected: a1.ncols(),
            found: b1.ncols(),
        });
    }
    if a2.ncols() != b2.ncols() {
        return Err(Error::Dimension {
            context: "gram channel 2",
            expected: a2.ncols(),
            found: b2.ncols(),
        });
    }
    if a1.nrows() != a2.nrows() || b1.nrows() != b2.nrows() {
        return Err(Error::Dimension {
            context: "gram rows",
            expected: a1.nrows(),
            found: a2.nrows(),
        });
    }
    Ok(a1 * b1.transpose() + a2 * b2.transpose())
}

/// Gaussian posterior of the hidden block at one time.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianState {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianState {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::Dimension {
                context: "gaussian state",
                expected: mean.len(),
                found: cov.nrows(),
            });
        }
        Ok(GaussianState { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn is_finite(&self) -> bool {
        is_finite_vector(&self.mean) && is_finite_matrix(&self.cov)
    }
}

/// Noise Grams needed by the filter and smoother at one `(t, x)`.
#[derive(Clone, Debug)]
pub struct NoiseGrams {
    /// `Σˣ∘Σˣ`
    pub gram_xx: DMatrix<f64>,
    /// Inverse of `Σˣ∘Σˣ` with neutralized rows and columns removed.
    pub gram_inv: DMatrix<f64>,
    /// `Σʸ∘Σˣ`, l×k
    pub cross: DMatrix<f64>,
    /// `Σʸ∘Σʸ`
    pub q: DMatrix<f64>,
}

impl NoiseGrams {
    pub fn new(model: &CgnsModel, c: &Coefficients, index: usize, t: f64) -> Result<Self> {
        let gram_xx = gram(&c.sigma_x1, &c.sigma_x2, &c.sigma_x1, &c.sigma_x2)?;
        let cross = gram(&c.sigma_y1, &c.sigma_y2, &c.sigma_x1, &c.sigma_x2)?;
        let q = gram(&c.sigma_y1, &c.sigma_y2, &c.sigma_y1, &c.sigma_y2)?;
        let gram_inv = observation_gram_inverse(&gram_xx, model.neutralized(), index, t)?;
        Ok(NoiseGrams {
            gram_xx,
            gram_inv,
            cross,
            q,
        })
    }
}

/// Inverts the observational Gram, zeroing the neutralized coordinates.
///
/// With a non-empty neutral set the kept block must not be coupled to the
/// neutral block, otherwise the infinite-uncertainty limit is ambiguous.
pub fn observation_gram_inverse(g: &DMatrix<f64>, neutralized: &[usize], index: usize, t: f64) -> Result<DMatrix<f64>> {
    let k = g.nrows();
    if neutralized.is_empty() {
        return spd_inverse(g).ok_or(Error::SingularGram { index, time: t });
    }
    let kept: Vec<usize> = (0..k).filter(|i| !neutralized.contains(i)).collect();
    for &a in &kept {
        for &b in neutralized {
            let scale = (g[(a, a)] * g[(b, b)]).abs().sqrt();
            if g[(a, b)].abs() > 1e-14 * scale.max(f64::MIN_POSITIVE) {
                return Err(Error::CoupledConditioning { a, b });
            }
        }
    }
    let mut out = DMatrix::zeros(k, k);
    if kept.is_empty() {
        return Ok(out);
    }
    let sub = g.select_rows(&kept).select_columns(&kept);
    let inv = spd_inverse(&sub).ok_or(Error::SingularGram { index, time: t })?;
    for (r, &i) in kept.iter().enumerate() {
        for (c, &j) in kept.iter().enumerate() {
            out[(i, j)] = inv[(r, c)];
        }
    }
    Ok(out)
}

/// Drift coefficients retained for the boundary smoother.
#[derive(Clone, Debug)]
pub struct DriftTerms {
    pub lambda_x: DMatrix<f64>,
    pub f_x: DVector<f64>,
    pub lambda_y: DMatrix<f64>,
    pub f_y: DVector<f64>,
}

/// Per-step matrices of the online smoother, built at `(t_j, x_j, R_f^j)`.
#[derive(Clone, Debug)]
pub struct AuxMatrices {
    pub e: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub gx: DMatrix<f64>,
    pub gy: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub gram_inv: DMatrix<f64>,
    pub drift: DriftTerms,
    /// True when the observation carries no information on the hidden block
    /// (`Λˣᵀ g⁻¹ = 0` and `(Σʸ∘Σˣ) g⁻¹ = 0`).
    pub gain_vanishes: bool,
}

impl AuxMatrices {
    pub fn build(c: &Coefficients, grams: &NoiseGrams, filt: &GaussianState, dt: f64) -> Result<Self> {
        let l = filt.dim();
        let rf = &filt.cov;
        let rf_inv = spd_inverse(rf).ok_or(Error::NotPositiveDefinite {
            what: "filter covariance",
        })?;
        let gi = &grams.gram_inv;
        let cxy = grams.cross.transpose();
        let eye = DMatrix::<f64>::identity(l, l);

        let gx = &c.lambda_x + &cxy * &rf_inv;
        let gy = &c.lambda_y + &grams.q * &rf_inv;
        let h = &rf_inv * (&c.lambda_y * rf + rf * c.lambda_y.transpose() + &grams.q);
        let k = gi * &gx;
        let e = &eye + (&grams.cross * gi * &gx - &gy) * dt;

        let kt = k.transpose();
        let rf_kt = rf * &kt;
        let k_rf_kt = &k * &rf_kt;
        let inner = &kt
            + (gx.transpose() * &k * &rf_kt - &rf_inv * h.transpose() * &rf_kt + c.lambda_y.transpose() * &kt) * dt
            - c.lambda_x.transpose() * (gi + k_rf_kt * dt);
        let f = -(rf * inner);

        let lxt_gi = c.lambda_x.transpose() * gi;
        let c_gi = &grams.cross * gi;
        let gain_vanishes = lxt_gi.iter().all(|v| *v == 0.0) && c_gi.iter().all(|v| *v == 0.0);

        let aux = AuxMatrices {
            e,
            f,
            gx,
            gy,
            h,
            k,
            gram_inv: gi.clone(),
            drift: DriftTerms {
                lambda_x: c.lambda_x.clone(),
                f_x: c.f_x.clone(),
                lambda_y: c.lambda_y.clone(),
                f_y: c.f_y.clone(),
            },
            gain_vanishes,
        };
        if !(is_finite_matrix(&aux.e) && is_finite_matrix(&aux.f)) {
            return Err(Error::Blowup {
                what: "auxiliary matrices",
                index: 0,
                time: f64::NAN,
            });
        }
        Ok(aux)
    }
}

/// Result of one filter step, with the matrices needed downstream.
pub struct StepOutput {
    pub next: GaussianState,
    pub aux: AuxMatrices,
    pub psd_clipped: bool,
}

fn filter_update(
    c: &Coefficients,
    grams: &NoiseGrams,
    x_j: &DVector<f64>,
    x_next: &DVector<f64>,
    prior: &GaussianState,
    dt: f64,
) -> (GaussianState, bool) {
    let mu = &prior.mean;
    let r = &prior.cov;
    let gain_num = r * c.lambda_x.transpose() + &grams.cross;
    let gain = &gain_num * &grams.gram_inv;
    let innovation = (x_next - x_j) - (&c.lambda_x * mu + &c.f_x) * dt;
    let mean = mu + (&c.lambda_y * mu + &c.f_y) * dt + &gain * innovation;
    let mut cov = r + (&c.lambda_y * r + r * c.lambda_y.transpose() + &grams.q - &gain * gain_num.transpose()) * dt;
    symmetrize(&mut cov);
    let clipped = enforce_psd(&mut cov);
    (GaussianState { mean, cov }, clipped)
}

/// Advances the filter from `t_j` to `t_{j+1}`.
pub fn filter_step(
    model: &CgnsModel,
    t_j: f64,
    x_j: &DVector<f64>,
    x_next: &DVector<f64>,
    prior: &GaussianState,
    dt: f64,
) -> Result<GaussianState> {
    let c = model.checked_coefficients(t_j, x_j)?;
    let grams = NoiseGrams::new(model, &c, 0, t_j)?;
    let (next, _) = filter_update(&c, &grams, x_j, x_next, prior, dt);
    if !next.is_finite() {
        return Err(Error::Blowup {
            what: "filter state",
            index: 1,
            time: t_j + dt,
        });
    }
    Ok(next)
}

/// Filter step plus the smoother matrices at the prior time.
pub fn filter_step_with_aux(
    model: &CgnsModel,
    index: usize,
    t_j: f64,
    x_j: &DVector<f64>,
    x_next: &DVector<f64>,
    prior: &GaussianState,
    dt: f64,
) -> Result<StepOutput> {
    let c = model.checked_coefficients(t_j, x_j)?;
    let grams = NoiseGrams::new(model, &c, index, t_j)?;
    let (next, psd_clipped) = filter_update(&c, &grams, x_j, x_next, prior, dt);
    if !next.is_finite() {
        return Err(Error::Blowup {
            what: "filter state",
            index: index + 1,
            time: t_j + dt,
        });
    }
    let aux = AuxMatrices::build(&c, &grams, prior, dt).map_err(|e| match e {
        Error::Blowup { what, .. } => Error::Blowup { what, index, time: t_j },
        other => other,
    })?;
    Ok(StepOutput { next, aux, psd_clipped })
}

/// Filter states on the whole grid and the per-step smoother matrices.
#[derive(Clone, Debug)]
pub struct FilterSeries {
    pub t0: f64,
    pub dt: f64,
    pub states: Vec<GaussianState>,
    pub aux: Vec<AuxMatrices>,
    /// Number of steps where a negative eigenvalue had to be clipped.
    pub psd_clips: usize,
}

impl FilterSeries {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn time(&self, j: usize) -> f64 {
        self.t0 + j as f64 * self.dt
    }
}

pub fn run_filter(model: &CgnsModel, traj: &Trajectory, init: GaussianState) -> Result<FilterSeries> {
    if init.dim() != model.dim_hid() {
        return Err(Error::Dimension {
            context: "filter initial state",
            expected: model.dim_hid(),
            found: init.dim(),
        });
    }
    if let Some(x0) = traj.x_path.first() {
        if x0.len() != model.dim_obs() {
            return Err(Error::Dimension {
                context: "trajectory observations",
                expected: model.dim_obs(),
                found: x0.len(),
            });
        }
    }
    let n = traj.n_steps();
    let mut states = Vec::with_capacity(n + 1);
    let mut aux = Vec::with_capacity(n);
    let mut psd_clips = 0;
    states.push(init);
    for j in 0..n {
        let out = filter_step_with_aux(
            model,
            j,
            traj.time(j),
            &traj.x_path[j],
            &traj.x_path[j + 1],
            &states[j],
            traj.dt,
        )?;
        psd_clips += out.psd_clipped as usize;
        states.push(out.next);
        aux.push(out.aux);
    }
    Ok(FilterSeries {
        t0: traj.t0,
        dt: traj.dt,
        states,
        aux,
        psd_clips,
    })
}

/// Zero mean and an isotropic covariance sized by the stationary variance of
/// the hidden dynamics frozen at `(t0, x0)`; falls back to the identity.
///
/// The variance is capped so that the first explicit Riccati step removes at
/// most half of it: `scale · ‖Λˣᵀ g⁻¹ Λˣ‖ · dt ≤ 1/2`.
pub fn default_initial_state(model: &CgnsModel, t0: f64, x0: &DVector<f64>, dt: f64) -> GaussianState {
    let l = model.dim_hid();
    let coef = model.checked_coefficients(t0, x0).ok();
    let mut scale = coef
        .as_ref()
        .and_then(|c| {
            let q = gram(&c.sigma_y1, &c.sigma_y2, &c.sigma_y1, &c.sigma_y2).ok()?;
            let p = lyapunov(&c.lambda_y, &q)?;
            p.clone().cholesky()?;
            let v = p.diagonal().max();
            (v.is_finite() && v > 0.0).then_some(v)
        })
        .unwrap_or(1.0);
    if let Some(c) = &coef {
        if let Ok(grams) = NoiseGrams::new(model, c, 0, t0) {
            let info = c.lambda_x.transpose() * &grams.gram_inv * &c.lambda_x;
            let rate = info.norm();
            if rate.is_finite() && rate > 0.0 {
                scale = scale.min(0.5 / (rate * dt));
            }
        }
    }
    GaussianState {
        mean: DVector::zeros(l),
        cov: DMatrix::identity(l, l) * scale,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gram_examples() {
        let i2 = DMatrix::<f64>::identity(2, 2);
        let z = DMatrix::<f64>::zeros(2, 0);
        assert_eq!(gram(&i2, &z, &i2, &z).unwrap(), i2);
        let s = DMatrix::from_element(1, 1, 0.3);
        let z1 = DMatrix::<f64>::zeros(1, 0);
        let g = gram(&z1, &s, &z1, &s).unwrap();
        assert!((g[(0, 0)] - 0.09).abs() < 1e-16);
        assert!(gram(&i2, &z, &DMatrix::zeros(2, 3), &z).is_err());
    }

    #[test]
    fn neutralized_inverse_keeps_block() {
        let g = DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 9.0]);
        let gi = observation_gram_inverse(&g, &[1], 0, 0.0).unwrap();
        assert_eq!(gi, DMatrix::from_row_slice(2, 2, &[0.25, 0.0, 0.0, 0.0]));
        let coupled = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 9.0]);
        assert!(matches!(
            observation_gram_inverse(&coupled, &[1], 0, 0.0),
            Err(Error::CoupledConditioning { .. })
        ));
        let singular = DMatrix::from_row_slice(1, 1, &[0.0]);
        assert!(matches!(
            observation_gram_inverse(&singular, &[], 3, 0.5),
            Err(Error::SingularGram { index: 3, .. })
        ));
    }
}
