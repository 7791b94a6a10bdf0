//! Reference implementations used only to validate the primary code paths.
//!
//! Everything here is written independently of `filter`, `smoother` and
//! `cir`: textbook notation, general-purpose inverses, and brute force where
//! that is affordable.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::filter::GaussianState;
use crate::model::{CgnsModel, Coefficients, Trajectory};

/// Constant-coefficient linear Gaussian system in CGNS form.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearSpec {
    pub lambda_x: DMatrix<f64>,
    pub f_x: DVector<f64>,
    pub sigma_x1: DMatrix<f64>,
    pub sigma_x2: DMatrix<f64>,
    pub lambda_y: DMatrix<f64>,
    pub f_y: DVector<f64>,
    pub sigma_y1: DMatrix<f64>,
    pub sigma_y2: DMatrix<f64>,
}

impl LinearSpec {
    pub fn dims(&self) -> (usize, usize) {
        (self.lambda_x.nrows(), self.lambda_x.ncols())
    }

    pub fn to_model(&self) -> Result<CgnsModel> {
        let (k, l) = self.dims();
        let s = self.clone();
        CgnsModel::new("linear", k, l, s.sigma_x1.ncols(), s.sigma_x2.ncols(), move |_t, _x| {
            Coefficients {
                lambda_x: s.lambda_x.clone(),
                f_x: s.f_x.clone(),
                sigma_x1: s.sigma_x1.clone(),
                sigma_x2: s.sigma_x2.clone(),
                lambda_y: s.lambda_y.clone(),
                f_y: s.f_y.clone(),
                sigma_y1: s.sigma_y1.clone(),
                sigma_y2: s.sigma_y2.clone(),
            }
        })
    }

    /// Stacked noise loadings `D = [Σˣ₁ Σˣ₂]`, `B = [Σʸ₁ Σʸ₂]`.
    fn stacked(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let (k, l) = self.dims();
        let d1 = self.sigma_x1.ncols();
        let d2 = self.sigma_x2.ncols();
        let mut d = DMatrix::zeros(k, d1 + d2);
        let mut b = DMatrix::zeros(l, d1 + d2);
        d.columns_mut(0, d1).copy_from(&self.sigma_x1);
        d.columns_mut(d1, d2).copy_from(&self.sigma_x2);
        b.columns_mut(0, d1).copy_from(&self.sigma_y1);
        b.columns_mut(d1, d2).copy_from(&self.sigma_y2);
        (d, b)
    }
}

fn inv(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    m.clone()
        .try_inverse()
        .ok_or(Error::NotPositiveDefinite { what: "oracle matrix" })
}

/// Euler-discretized Kalman–Bucy filter with correlated noise, in
/// `dy = (Ay + a)dt + B dW`, `dx = (Hy + h)dt + D dW` notation.
pub fn kalman_bucy_filter(spec: &LinearSpec, traj: &Trajectory, init: &GaussianState) -> Result<Vec<GaussianState>> {
    let (a, av, h, hv) = (&spec.lambda_y, &spec.f_y, &spec.lambda_x, &spec.f_x);
    let (d, b) = spec.stacked();
    let dd_inv = inv(&(&d * d.transpose()))?;
    let bd = &b * d.transpose();
    let bb = &b * b.transpose();
    let dt = traj.dt;
    let mut m = init.mean.clone();
    let mut p = init.cov.clone();
    let mut out = vec![init.clone()];
    for n in 0..traj.n_steps() {
        let dz = &traj.x_path[n + 1] - &traj.x_path[n];
        let gain = (&p * h.transpose() + &bd) * &dd_inv;
        let resid = dz - (h * &m + hv) * dt;
        let m_new = &m + (a * &m + av) * dt + &gain * resid;
        let p_new = &p + (a * &p + &p * a.transpose() + &bb - &gain * (&d * d.transpose()) * gain.transpose()) * dt;
        m = m_new;
        p = 0.5 * (&p_new + p_new.transpose());
        out.push(GaussianState {
            mean: m.clone(),
            cov: p.clone(),
        });
    }
    Ok(out)
}

/// Textbook discrete Kalman filter and RTS smoother on the Euler-discretized
/// system `y_{n+1} = (I + AΔt)y_n + aΔt + w_n`, `z_n = Δx_n/Δt - h = H y_n + v_n`.
///
/// Requires uncorrelated observation and state noise. The filter output at
/// `n` is `p(y_n | x_0..x_n)`, i.e. the prediction before `z_n` is used.
pub fn kalman_rts(
    spec: &LinearSpec,
    traj: &Trajectory,
    init: &GaussianState,
) -> Result<(Vec<GaussianState>, Vec<GaussianState>)> {
    let (d, b) = spec.stacked();
    if (&b * d.transpose()).iter().any(|v| *v != 0.0) {
        return Err(Error::InvalidParameters(
            "discrete Kalman/RTS oracle needs uncorrelated state and observation noise".into(),
        ));
    }
    let (_k, l) = spec.dims();
    let dt = traj.dt;
    let eye = DMatrix::<f64>::identity(l, l);
    let f = &eye + &spec.lambda_y * dt;
    let u = &spec.f_y * dt;
    let qd = &b * b.transpose() * dt;
    let rd = &d * d.transpose() / dt;
    let h = &spec.lambda_x;
    let n_steps = traj.n_steps();

    let mut pred = vec![init.clone()];
    let mut upd = Vec::with_capacity(n_steps);
    for n in 0..n_steps {
        let GaussianState { mean: m, cov: p } = &pred[n];
        let z = (&traj.x_path[n + 1] - &traj.x_path[n]) / dt - &spec.f_x;
        let s = h * p * h.transpose() + &rd;
        let kg = p * h.transpose() * inv(&s)?;
        let mu = m + &kg * (z - h * m);
        let pu = (&eye - &kg * h) * p;
        let pu = 0.5 * (&pu + pu.transpose());
        let mn = &f * &mu + &u;
        let pn = &f * &pu * f.transpose() + &qd;
        upd.push(GaussianState { mean: mu, cov: pu });
        pred.push(GaussianState {
            mean: mn,
            cov: 0.5 * (&pn + pn.transpose()),
        });
    }

    let mut smooth = pred.clone();
    for n in (0..n_steps).rev() {
        let j = &upd[n].cov * f.transpose() * inv(&pred[n + 1].cov)?;
        let mean = &upd[n].mean + &j * (&smooth[n + 1].mean - &pred[n + 1].mean);
        let cov = &upd[n].cov + &j * (&smooth[n + 1].cov - &pred[n + 1].cov) * j.transpose();
        smooth[n] = GaussianState {
            mean,
            cov: 0.5 * (&cov + cov.transpose()),
        };
    }
    Ok((pred, smooth))
}

/// Offline backward pass of the smoother recursion given a filter series:
/// `μₛʲ = μₛ^{j,j+1} + Eʲ(μₛ^{j+1} − μ_f^{j+1})`, and likewise for the covariance.
pub fn offline_backward_smoother(
    model: &CgnsModel,
    traj: &Trajectory,
    filt: &[GaussianState],
) -> Result<Vec<GaussianState>> {
    let n_steps = traj.n_steps();
    if filt.len() != n_steps + 1 {
        return Err(Error::Dimension {
            context: "oracle filter series",
            expected: n_steps + 1,
            found: filt.len(),
        });
    }
    let dt = traj.dt;
    let mut out = filt.to_vec();
    for j in (0..n_steps).rev() {
        let c = model.coefficients(traj.time(j), &traj.x_path[j]);
        let (e, lag1) = one_step_smoother(
            &c,
            model.neutralized(),
            &filt[j],
            &filt[j + 1],
            &traj.x_path[j],
            &traj.x_path[j + 1],
            dt,
        )?;
        let dm = &out[j + 1].mean - &filt[j + 1].mean;
        let dr = &out[j + 1].cov - &filt[j + 1].cov;
        let mean = &lag1.mean + &e * dm;
        let cov = &lag1.cov + &e * dr * e.transpose();
        out[j] = GaussianState {
            mean,
            cov: 0.5 * (&cov + cov.transpose()),
        };
    }
    Ok(out)
}

fn one_step_smoother(
    c: &Coefficients,
    neutral: &[usize],
    f0: &GaussianState,
    f1: &GaussianState,
    x0: &DVector<f64>,
    x1: &DVector<f64>,
    dt: f64,
) -> Result<(DMatrix<f64>, GaussianState)> {
    let l = f0.dim();
    let k = x0.len();
    let sx =
        |a: &DMatrix<f64>, b: &DMatrix<f64>, p: &DMatrix<f64>, q: &DMatrix<f64>| a * p.transpose() + b * q.transpose();
    let g = sx(&c.sigma_x1, &c.sigma_x2, &c.sigma_x1, &c.sigma_x2);
    let cyx = sx(&c.sigma_y1, &c.sigma_y2, &c.sigma_x1, &c.sigma_x2);
    let q = sx(&c.sigma_y1, &c.sigma_y2, &c.sigma_y1, &c.sigma_y2);
    // Neutralized observations: invert only the kept block.
    let keep: Vec<usize> = (0..k).filter(|i| !neutral.contains(i)).collect();
    let mut gi = DMatrix::zeros(k, k);
    if !keep.is_empty() {
        let sub = inv(&g.select_rows(&keep).select_columns(&keep))?;
        for (r, &i) in keep.iter().enumerate() {
            for (s, &jj) in keep.iter().enumerate() {
                gi[(i, jj)] = sub[(r, s)];
            }
        }
    }
    let eye = DMatrix::<f64>::identity(l, l);
    let rf = &f0.cov;
    let rfi = inv(rf)?;
    let lx = &c.lambda_x;
    let ly = &c.lambda_y;

    let gx = lx + cyx.transpose() * &rfi;
    let gy = ly + &q * &rfi;
    let hm = &rfi * (ly * rf + rf * ly.transpose() + &q);
    let kk = &gi * &gx;
    let e = &eye + (&cyx * &gi * &gx - &gy) * dt;

    let silent = (lx.transpose() * &gi).iter().all(|v| *v == 0.0) && (&cyx * &gi).iter().all(|v| *v == 0.0);
    if silent {
        return Ok((e, f0.clone()));
    }
    let ktr = kk.transpose();
    let bracket = &ktr
        + (gx.transpose() * &kk * rf * &ktr - &rfi * hm.transpose() * rf * &ktr + ly.transpose() * &ktr) * dt
        - lx.transpose() * (&gi + &kk * rf * &ktr * dt);
    let ff = -(rf * bracket);
    let a = &eye + ly * dt;
    let resid = (x1 - x0) - (lx * &f0.mean + &c.f_x) * dt;
    let b = &f0.mean - &e * (&a * &f0.mean + &c.f_y * dt) + &ff * resid;
    let p = rf - &e * &a * rf - &ff * lx * rf * dt;
    let mean = &e * &f1.mean + b;
    let cov = &e * &f1.cov * e.transpose() + p;
    Ok((
        e,
        GaussianState {
            mean,
            cov: 0.5 * (&cov + cov.transpose()),
        },
    ))
}

/// Trapezoid-rule `∫ p ln(p/q)` on a uniform 1-D grid, from log densities.
pub fn kl_quadrature(log_p: &[f64], log_q: &[f64], dx: f64) -> Result<f64> {
    if log_p.len() != log_q.len() {
        return Err(Error::Dimension {
            context: "quadrature grids",
            expected: log_p.len(),
            found: log_q.len(),
        });
    }
    let n = log_p.len();
    let mut acc = 0.0;
    for i in 0..n {
        let w = if i == 0 || i + 1 == n { 0.5 } else { 1.0 };
        acc += w * integrand(log_p[i], log_q[i]);
    }
    Ok(acc * dx)
}

/// Trapezoid-rule `∬ p ln(p/q)` on a uniform `nx × ny` grid (row-major, x fastest).
pub fn kl_quadrature_2d(log_p: &[f64], log_q: &[f64], nx: usize, ny: usize, dx: f64, dy: f64) -> Result<f64> {
    if log_p.len() != nx * ny || log_q.len() != nx * ny {
        return Err(Error::Dimension {
            context: "2-D quadrature grids",
            expected: nx * ny,
            found: log_p.len().min(log_q.len()),
        });
    }
    let mut acc = 0.0;
    for iy in 0..ny {
        let wy = if iy == 0 || iy + 1 == ny { 0.5 } else { 1.0 };
        for ix in 0..nx {
            let wx = if ix == 0 || ix + 1 == nx { 0.5 } else { 1.0 };
            let i = iy * nx + ix;
            acc += wx * wy * integrand(log_p[i], log_q[i]);
        }
    }
    Ok(acc * dx * dy)
}

fn integrand(lp: f64, lq: f64) -> f64 {
    let p = lp.exp();
    if p == 0.0 {
        0.0
    } else {
        p * (lp - lq)
    }
}

/// Gaussian log density on `grid`.
pub fn gaussian_log_density_1d(mean: f64, var: f64, grid: &[f64]) -> Vec<f64> {
    let c = -0.5 * (2.0 * std::f64::consts::PI * var).ln();
    grid.iter().map(|x| c - (x - mean).powi(2) / (2.0 * var)).collect()
}

/// Bivariate Gaussian log density on the tensor grid `xs × ys` (x fastest).
pub fn gaussian_log_density_2d(mean: [f64; 2], cov: [[f64; 2]; 2], xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
    let (i00, i01, i11) = (cov[1][1] / det, -cov[0][1] / det, cov[0][0] / det);
    let c = -(2.0 * std::f64::consts::PI).ln() - 0.5 * det.ln();
    let mut out = Vec::with_capacity(xs.len() * ys.len());
    for y in ys {
        for x in xs {
            let (a, b) = (x - mean[0], y - mean[1]);
            out.push(c - 0.5 * (i00 * a * a + 2.0 * i01 * a * b + i11 * b * b));
        }
    }
    out
}

pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> (Vec<f64>, f64) {
    let h = (hi - lo) / (n - 1) as f64;
    ((0..n).map(|i| lo + i as f64 * h).collect(), h)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// Threshold-averaged CIR length by literal integration over `ε`.
///
/// The subjective length is evaluated by a direct scan at every distinct
/// profile level and integrated as a step function.
pub fn eps_quadrature_length(profile: &[f64], dt: f64, direction: Direction) -> f64 {
    let mut levels: Vec<f64> = profile.iter().map(|v| v.abs()).collect();
    levels.push(0.0);
    levels.sort_by(|a, b| a.partial_cmp(b).expect("finite profile"));
    levels.dedup();
    let max = *levels.last().unwrap();
    if max == 0.0 || profile.len() < 2 {
        return 0.0;
    }
    let k = profile.len() - 1;
    let subjective = |eps: f64| -> f64 {
        match direction {
            Direction::Forward => {
                // sup of the exceedance set, with sample i covering [iΔt, (i+1)Δt)
                let mut last = None;
                for (i, v) in profile.iter().enumerate() {
                    if v.abs() > eps {
                        last = Some(i);
                    }
                }
                last.map_or(0.0, |i| ((i + 1) as f64 * dt).min(k as f64 * dt))
            }
            Direction::Backward => {
                let mut last = None;
                for (j, v) in profile.iter().enumerate() {
                    if v.abs() <= eps {
                        last = Some(j);
                    }
                }
                last.map_or(k as f64 * dt, |j| (k - j) as f64 * dt)
            }
        }
    };
    let mut integral = 0.0;
    for w in levels.windows(2) {
        integral += subjective(w[0]) * (w[1] - w[0]);
    }
    integral / max
}
