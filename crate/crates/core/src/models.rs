//! Case-study systems and the closed-form equilibrium of the reduced linear model.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CgnsModel, Coefficients};

/// `mean + amplitude * shape(2πt/period + phase)`; a zero period or amplitude gives a constant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Forcing {
    #[serde(default)]
    pub mean: f64,
    #[serde(default)]
    pub amplitude: f64,
    #[serde(default)]
    pub period: f64,
    #[serde(default)]
    pub phase: f64,
    #[serde(default)]
    pub shape: Shape,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    #[default]
    Sin,
    Cos,
}

impl Forcing {
    pub const fn constant(mean: f64) -> Self {
        Forcing {
            mean,
            amplitude: 0.0,
            period: 0.0,
            phase: 0.0,
            shape: Shape::Sin,
        }
    }

    pub const fn sin(mean: f64, amplitude: f64, period: f64) -> Self {
        Forcing {
            mean,
            amplitude,
            period,
            phase: 0.0,
            shape: Shape::Sin,
        }
    }

    pub const fn cos(mean: f64, amplitude: f64, period: f64) -> Self {
        Forcing {
            mean,
            amplitude,
            period,
            phase: 0.0,
            shape: Shape::Cos,
        }
    }

    pub fn at(&self, t: f64) -> f64 {
        if self.amplitude == 0.0 || self.period == 0.0 {
            return self.mean;
        }
        let arg = 2.0 * PI * t / self.period + self.phase;
        self.mean
            + self.amplitude
                * match self.shape {
                    Shape::Sin => arg.sin(),
                    Shape::Cos => arg.cos(),
                }
    }

    fn describe(&self) -> String {
        if self.amplitude == 0.0 || self.period == 0.0 {
            format!("{}", self.mean)
        } else {
            let f = match self.shape {
                Shape::Sin => "sin",
                Shape::Cos => "cos",
            };
            format!(
                "{}+{}*{f}(2*pi*t/{}+{})",
                self.mean, self.amplitude, self.period, self.phase
            )
        }
    }
}

fn m(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, data)
}

fn v(data: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(data)
}

fn require(cond: bool, msg: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameters(msg.into()))
    }
}

// ---------------------------------------------------------------------------
// Climate tipping model
// ---------------------------------------------------------------------------

/// Slow bistable `x`, fast `y`, and a stochastic coupling `γ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClimateParams {
    pub eps: f64,
    pub d_x: f64,
    pub alpha: f64,
    pub sigma_x: f64,
    pub d_y: f64,
    pub beta: f64,
    pub sigma_y: f64,
    pub d_gamma: f64,
    pub gamma_bar: f64,
    pub sigma_gamma: f64,
}

impl Default for ClimateParams {
    fn default() -> Self {
        ClimateParams {
            eps: 0.01,
            d_x: 1.0 / 3.0,
            alpha: 4.0,
            sigma_x: 0.2,
            d_y: 0.2,
            beta: -0.8,
            sigma_y: 0.3,
            d_gamma: 0.5,
            gamma_bar: 1.0,
            sigma_gamma: 2.0,
        }
    }
}

impl ClimateParams {
    pub fn with_eps(eps: f64) -> Self {
        ClimateParams {
            eps,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        require(self.eps > 0.0 && self.eps < 1.0, "climate: eps must lie in (0, 1)")?;
        for (name, val) in [
            ("d_x", self.d_x),
            ("alpha", self.alpha),
            ("sigma_x", self.sigma_x),
            ("d_y", self.d_y),
            ("sigma_y", self.sigma_y),
            ("d_gamma", self.d_gamma),
            ("sigma_gamma", self.sigma_gamma),
        ] {
            require(val > 0.0, &format!("climate: {name} must be positive"))?;
        }
        Ok(())
    }

    fn echo(&self) -> Vec<(String, String)> {
        [
            ("eps", self.eps),
            ("d_x", self.d_x),
            ("alpha", self.alpha),
            ("sigma_x", self.sigma_x),
            ("d_y", self.d_y),
            ("beta", self.beta),
            ("sigma_y", self.sigma_y),
            ("d_gamma", self.d_gamma),
            ("gamma_bar", self.gamma_bar),
            ("sigma_gamma", self.sigma_gamma),
        ]
        .iter()
        .map(|(k, v)| (k.to_string(), format!("{v:?}")))
        .collect()
    }
}

/// Observe `x`; hide `(y, γ)`. Noise channels: `(W_x, W_y, W_γ)`.
pub fn climate_model(p: &ClimateParams) -> Result<CgnsModel> {
    p.validate()?;
    let p = *p;
    let sy = p.sigma_y / p.eps.sqrt();
    CgnsModel::new("climate", 1, 2, 3, 0, move |_t, x| {
        let x = x[0];
        Coefficients {
            lambda_x: m(1, 2, &[-p.alpha, 0.0]),
            f_x: v(&[x - p.d_x * x * x * x]),
            sigma_x1: m(1, 3, &[p.sigma_x, 0.0, 0.0]),
            sigma_x2: DMatrix::zeros(1, 0),
            lambda_y: m(2, 2, &[-p.d_y / p.eps, x, 0.0, -p.d_gamma]),
            f_y: v(&[p.beta, p.d_gamma * p.gamma_bar]),
            sigma_y1: m(2, 3, &[0.0, sy, 0.0, 0.0, 0.0, p.sigma_gamma]),
            sigma_y2: DMatrix::zeros(2, 0),
        }
    })?
    .with_names(&["x"], &["y", "gamma"])
    .map(|m| m.with_params(p.echo()))
}

/// Observe `(x, y)`; hide `γ`. Same noise channels as [`climate_model`].
pub fn climate_model_observe_xy(p: &ClimateParams) -> Result<CgnsModel> {
    p.validate()?;
    let p = *p;
    let sy = p.sigma_y / p.eps.sqrt();
    CgnsModel::new("climate", 2, 1, 3, 0, move |_t, s| {
        let (x, y) = (s[0], s[1]);
        Coefficients {
            lambda_x: m(2, 1, &[0.0, x]),
            f_x: v(&[x - p.d_x * x * x * x - p.alpha * y, p.beta - p.d_y / p.eps * y]),
            sigma_x1: m(2, 3, &[p.sigma_x, 0.0, 0.0, 0.0, sy, 0.0]),
            sigma_x2: DMatrix::zeros(2, 0),
            lambda_y: m(1, 1, &[-p.d_gamma]),
            f_y: v(&[p.d_gamma * p.gamma_bar]),
            sigma_y1: m(1, 3, &[0.0, 0.0, p.sigma_gamma]),
            sigma_y2: DMatrix::zeros(1, 0),
        }
    })?
    .with_names(&["x", "y"], &["gamma"])
    .map(|m| m.with_params(p.echo()))
}

// ---------------------------------------------------------------------------
// Multiscale atmosphere/weather model
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MultiscaleParams {
    pub a1: f64,
    pub c1: f64,
    pub m: f64,
    pub m1: f64,
    pub m2: f64,
    pub i11: f64,
    pub i12: f64,
    pub i21: f64,
    pub i22: f64,
    pub l11: f64,
    pub l12: f64,
    pub l21: f64,
    pub l22: f64,
    pub sigma_x1: f64,
    pub sigma_x2: f64,
    pub c2: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub eps: f64,
    pub n: f64,
    pub sigma_y1: f64,
    pub sigma_y2: f64,
    pub f1x: Forcing,
    pub f2x: Forcing,
    pub f1y: Forcing,
    pub f2y: Forcing,
}

impl Default for MultiscaleParams {
    fn default() -> Self {
        MultiscaleParams {
            a1: 1.0,
            c1: 1.0 / 3.0,
            m: 0.5,
            m1: 0.5,
            m2: -1.5,
            i11: 0.6,
            i12: 0.0,
            i21: 0.0,
            i22: 2.5,
            l11: 1.0,
            l12: 0.0,
            l21: 0.0,
            l22: 1.5,
            sigma_x1: 0.15,
            sigma_x2: 0.3,
            c2: 0.4,
            gamma1: 0.5,
            gamma2: 1.2,
            eps: 0.1,
            n: 4.0,
            sigma_y1: 1.0,
            sigma_y2: 2.0,
            f1x: Forcing::constant(0.0),
            f2x: Forcing::sin(4.0, 2.0, 18.0),
            f1y: Forcing::constant(1.0),
            f2y: Forcing::constant(-1.0),
        }
    }
}

impl MultiscaleParams {
    pub fn validate(&self) -> Result<()> {
        require(self.gamma1 > 0.0, "multiscale: gamma1 must be positive")?;
        require(self.gamma2 > 0.0, "multiscale: gamma2 must be positive")?;
        require(self.eps > 0.0, "multiscale: eps must be positive")?;
        require(
            self.sigma_x1 > 0.0 && self.sigma_x2 > 0.0,
            "multiscale: sigma_x1, sigma_x2 must be positive",
        )
    }

    fn echo(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = [
            ("a1", self.a1),
            ("c1", self.c1),
            ("M", self.m),
            ("M1", self.m1),
            ("M2", self.m2),
            ("I11", self.i11),
            ("I12", self.i12),
            ("I21", self.i21),
            ("I22", self.i22),
            ("L11", self.l11),
            ("L12", self.l12),
            ("L21", self.l21),
            ("L22", self.l22),
            ("sigma_x1", self.sigma_x1),
            ("sigma_x2", self.sigma_x2),
            ("c2", self.c2),
            ("gamma1", self.gamma1),
            ("gamma2", self.gamma2),
            ("eps", self.eps),
            ("N", self.n),
            ("sigma_y1", self.sigma_y1),
            ("sigma_y2", self.sigma_y2),
        ]
        .iter()
        .map(|(k, v)| (k.to_string(), format!("{v:?}")))
        .collect();
        for (k, f) in [
            ("f1x", self.f1x),
            ("f2x", self.f2x),
            ("f1y", self.f1y),
            ("f2y", self.f2y),
        ] {
            out.push((k.into(), f.describe()));
        }
        out
    }
}

/// Observe `(x1, x2)`; hide `(y1, y2)`. Channels: `W₁ = (W_x1, W_x2)`, `W₂ = (W_y1, W_y2)`.
pub fn multiscale_model(p: &MultiscaleParams) -> Result<CgnsModel> {
    p.validate()?;
    let p = *p;
    let se = p.eps.sqrt();
    CgnsModel::new("multiscale", 2, 2, 2, 2, move |t, s| {
        let (x1, x2) = (s[0], s[1]);
        let inter = p.m + p.m1 * x1 + p.m2 * x2;
        let a = p.sigma_y1 / p.gamma1;
        let b = p.sigma_y2 / p.gamma2;
        Coefficients {
            lambda_x: m(
                2,
                2,
                &[
                    p.i11 * x1 + p.l11,
                    p.i12 * x1 + p.l12,
                    p.i21 * x2 + p.l21,
                    p.i22 * x2 + p.l22,
                ],
            ),
            f_x: v(&[
                p.a1 * x1 - p.c1 * x1 * x1 * x1 - x2 * inter + p.f1x.at(t),
                -p.c2 * x2 + x1 * inter + p.f2x.at(t),
            ]),
            sigma_x1: m(2, 2, &[p.sigma_x1, 0.0, 0.0, p.sigma_x2]),
            sigma_x2: m(
                2,
                2,
                &[
                    a * (p.l11 - p.i11 * x1),
                    b * (p.l12 - p.i12 * x1),
                    a * (p.l21 - p.i21 * x2),
                    b * (p.l22 - p.i22 * x2),
                ],
            ),
            lambda_y: m(2, 2, &[-p.gamma1 / p.eps, p.n, -p.n, -p.gamma2 / p.eps]),
            f_y: v(&[
                -p.l11 * x1 - p.l21 * x2 - p.i11 * x1 * x1 - p.i21 * x2 * x2 + p.f1y.at(t),
                -p.l12 * x1 - p.l22 * x2 - p.i12 * x1 * x1 - p.i22 * x2 * x2 + p.f2y.at(t),
            ]),
            sigma_y1: DMatrix::zeros(2, 2),
            sigma_y2: m(2, 2, &[p.sigma_y1 / se, 0.0, 0.0, p.sigma_y2 / se]),
        }
    })?
    .with_names(&["x1", "x2"], &["y1", "y2"])
    .map(|m| m.with_params(p.echo()))
}

// ---------------------------------------------------------------------------
// Noisy Lorenz-84
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Lorenz84Params {
    pub a: f64,
    pub b: f64,
    pub g: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub sigma_z: f64,
    pub f: Forcing,
}

impl Default for Lorenz84Params {
    fn default() -> Self {
        Lorenz84Params {
            a: 0.25,
            b: 4.0,
            g: 1.0,
            sigma_x: 0.2,
            sigma_y: 0.2,
            sigma_z: 0.2,
            f: Forcing::cos(8.0, 3.0, 73.0),
        }
    }
}

impl Lorenz84Params {
    pub fn validate(&self) -> Result<()> {
        require(self.a > 0.0 && self.a < 1.0, "lorenz84: a must lie in (0, 1)")?;
        require(
            self.sigma_y > 0.0 && self.sigma_z > 0.0,
            "lorenz84: observed noise sigma_y, sigma_z must be positive",
        )
    }

    fn echo(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = [
            ("a", self.a),
            ("b", self.b),
            ("g", self.g),
            ("sigma_x", self.sigma_x),
            ("sigma_y", self.sigma_y),
            ("sigma_z", self.sigma_z),
        ]
        .iter()
        .map(|(k, v)| (k.to_string(), format!("{v:?}")))
        .collect();
        out.push(("f".into(), self.f.describe()));
        out
    }
}

/// Observe `(y, z)`; hide the zonal flow `x`. Channels: `(W_x, W_y, W_z)`.
pub fn lorenz84_model(p: &Lorenz84Params) -> Result<CgnsModel> {
    p.validate()?;
    let p = *p;
    CgnsModel::new("lorenz84", 2, 1, 3, 0, move |t, s| {
        let (y, z) = (s[0], s[1]);
        Coefficients {
            lambda_x: m(2, 1, &[-p.b * z + y, p.b * y + z]),
            f_x: v(&[-y + p.g, -z]),
            sigma_x1: m(2, 3, &[0.0, p.sigma_y, 0.0, 0.0, 0.0, p.sigma_z]),
            sigma_x2: DMatrix::zeros(2, 0),
            lambda_y: m(1, 1, &[-p.a]),
            f_y: v(&[-y * y - z * z + p.a * p.f.at(t)]),
            sigma_y1: m(1, 3, &[p.sigma_x, 0.0, 0.0]),
            sigma_y2: DMatrix::zeros(1, 0),
        }
    })?
    .with_names(&["y", "z"], &["x"])
    .map(|m| m.with_params(p.echo()))
}

// ---------------------------------------------------------------------------
// Reduced conditionally linear model
// ---------------------------------------------------------------------------

/// `dx = (λˣy + fˣ(t) - κx)dt + σˣdW₁`, `dy = (λʸy + fʸ(t))dt + σʸdW₂`.
///
/// `damping_x` (κ) only keeps the observed path bounded; it does not enter
/// the posterior of `y`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReducedLinearParams {
    pub lambda_x: f64,
    pub lambda_y: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub damping_x: f64,
    pub forcing_x: Forcing,
    pub forcing_y: Forcing,
}

impl Default for ReducedLinearParams {
    fn default() -> Self {
        ReducedLinearParams {
            lambda_x: 1.0,
            lambda_y: -1.0,
            sigma_x: 1.0,
            sigma_y: 1.0,
            damping_x: 1.0,
            forcing_x: Forcing::constant(0.0),
            forcing_y: Forcing::sin(0.0, 1.0, 10.0),
        }
    }
}

impl ReducedLinearParams {
    /// Unforced variant with the given feedbacks and noise levels.
    pub fn unforced(lambda_x: f64, lambda_y: f64, sigma_x: f64, sigma_y: f64) -> Self {
        ReducedLinearParams {
            lambda_x,
            lambda_y,
            sigma_x,
            sigma_y,
            damping_x: 0.0,
            forcing_x: Forcing::constant(0.0),
            forcing_y: Forcing::constant(0.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        require(self.lambda_y < 0.0, "reduced linear: lambda_y must be negative")?;
        require(self.sigma_x > 0.0, "reduced linear: sigma_x must be positive")
    }

    fn echo(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = [
            ("lambda_x", self.lambda_x),
            ("lambda_y", self.lambda_y),
            ("sigma_x", self.sigma_x),
            ("sigma_y", self.sigma_y),
            ("damping_x", self.damping_x),
        ]
        .iter()
        .map(|(k, v)| (k.to_string(), format!("{v:?}")))
        .collect();
        out.push(("forcing_x".into(), self.forcing_x.describe()));
        out.push(("forcing_y".into(), self.forcing_y.describe()));
        out
    }
}

pub fn reduced_linear_model(p: &ReducedLinearParams) -> Result<CgnsModel> {
    p.validate()?;
    let p = *p;
    CgnsModel::new("reduced-linear", 1, 1, 1, 1, move |t, x| Coefficients {
        lambda_x: m(1, 1, &[p.lambda_x]),
        f_x: v(&[p.forcing_x.at(t) - p.damping_x * x[0]]),
        sigma_x1: m(1, 1, &[p.sigma_x]),
        sigma_x2: DMatrix::zeros(1, 1),
        lambda_y: m(1, 1, &[p.lambda_y]),
        f_y: v(&[p.forcing_y.at(t)]),
        sigma_y1: DMatrix::zeros(1, 1),
        sigma_y2: m(1, 1, &[p.sigma_y]),
    })?
    .with_names(&["x"], &["y"])
    .map(|m| m.with_params(p.echo()))
}

/// Stationary filter/smoother statistics of the reduced linear model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EquilibriumStats {
    /// Filter variance (algebraic Riccati fixed point).
    pub rf: f64,
    /// Smoother variance.
    pub rs: f64,
    /// Stationary smoother feedback `Gʸ = λʸ + (σʸ)²/R_f`.
    pub gy: f64,
}

/// Closed-form equilibrium statistics.
///
/// The smoother variance is the fixed point of the smoother's backward
/// variance equation, `(σʸ)²/(2Gʸ)`.
pub fn equilibrium_stats(p: &ReducedLinearParams) -> Result<EquilibriumStats> {
    require(p.lambda_x != 0.0, "equilibrium: lambda_x must be nonzero")?;
    require(p.lambda_y < 0.0, "equilibrium: lambda_y must be negative")?;
    let (lx, ly, sx, sy) = (p.lambda_x, p.lambda_y, p.sigma_x, p.sigma_y);
    let psi = (ly * sx).powi(2) + (lx * sy).powi(2);
    let rf = (ly * sx * sx + sx * psi.sqrt()) / (lx * lx);
    require(rf > 0.0, "equilibrium: nonpositive filter variance")?;
    let gy = psi.sqrt() * (psi.sqrt() + ly * sx) / (lx * lx * rf);
    let rs = sy * sy / (2.0 * gy);
    Ok(EquilibriumStats { rf, rs, gy })
}

/// Mean relative entropy between the equilibrium smoother and filter.
///
/// The smoother mean refines the filter mean, so the squared mean gap
/// averages to `R_f - R_s` and the signal and dispersion parts combine to
/// `-½ ln(R_s/R_f)`.
pub fn equilibrium_aci(stats: &EquilibriumStats) -> f64 {
    -0.5 * (stats.rs / stats.rf).ln()
}

// ---------------------------------------------------------------------------
// Families
// ---------------------------------------------------------------------------

/// A case-study system together with its supported observation partitions.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelFamily {
    Climate(ClimateParams),
    Multiscale(MultiscaleParams),
    Lorenz84(Lorenz84Params),
    ReducedLinear(ReducedLinearParams),
}

impl ModelFamily {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelFamily::Climate(_) => "climate",
            ModelFamily::Multiscale(_) => "multiscale",
            ModelFamily::Lorenz84(_) => "lorenz84",
            ModelFamily::ReducedLinear(_) => "reduced-linear",
        }
    }

    /// Model with the default partition (used for simulation).
    pub fn model(&self) -> Result<CgnsModel> {
        match self {
            ModelFamily::Climate(p) => climate_model(p),
            ModelFamily::Multiscale(p) => multiscale_model(p),
            ModelFamily::Lorenz84(p) => lorenz84_model(p),
            ModelFamily::ReducedLinear(p) => reduced_linear_model(p),
        }
    }

    /// Model with the given observed variables.
    pub fn model_observing(&self, observed: &[String]) -> Result<CgnsModel> {
        let base = self.model()?;
        let same = observed.len() == base.dim_obs() && observed.iter().all(|o| base.observed_names().contains(o));
        if same {
            return Ok(base);
        }
        if let ModelFamily::Climate(p) = self {
            let mut sorted: Vec<&str> = observed.iter().map(String::as_str).collect();
            sorted.sort_unstable();
            if sorted == ["x", "y"] {
                return climate_model_observe_xy(p);
            }
        }
        Err(Error::InvalidQuery(format!(
            "{} does not support observing {:?}",
            self.kind(),
            observed
        )))
    }

    /// Initial `(x0, y0)` for the default partition.
    pub fn initial_state(&self) -> (DVector<f64>, DVector<f64>) {
        match self {
            ModelFamily::Climate(_) => (DVector::zeros(1), DVector::zeros(2)),
            ModelFamily::Multiscale(_) => (DVector::zeros(2), DVector::zeros(2)),
            ModelFamily::Lorenz84(_) => (DVector::zeros(2), DVector::from_element(1, 1.0)),
            ModelFamily::ReducedLinear(_) => (DVector::zeros(1), DVector::zeros(1)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::gram;

    #[test]
    fn climate_drift_example() {
        let m = climate_model(&ClimateParams::default()).unwrap();
        let c = m.coefficients(0.0, &DVector::from_element(1, 1.0));
        let y = DVector::from_vec(vec![0.0, 0.7]);
        assert!((c.drift_x(&y)[0] - 2.0 / 3.0).abs() < 1e-15);
        let c = m.coefficients(0.0, &DVector::from_element(1, -1.7));
        assert_eq!(c.lambda_y[(0, 1)], -1.7);
    }

    #[test]
    fn multiscale_coefficients() {
        let p = MultiscaleParams::default();
        let m = multiscale_model(&p).unwrap();
        let x1 = 0.8;
        let c = m.coefficients(0.0, &DVector::from_vec(vec![x1, 0.3]));
        assert!((c.lambda_x[(0, 0)] - (0.6 * x1 + 1.0)).abs() < 1e-15);
        let cancel = m.coefficients(0.0, &DVector::from_vec(vec![p.l11 / p.i11, 0.3]));
        assert!(cancel.sigma_x2[(0, 0)].abs() < 1e-15);
    }

    #[test]
    fn multiscale_cross_gram_at_origin() {
        let p = MultiscaleParams::default();
        let m = multiscale_model(&p).unwrap();
        let c = m.coefficients(0.0, &DVector::zeros(2));
        let cxy = gram(&c.sigma_x1, &c.sigma_x2, &c.sigma_y1, &c.sigma_y2).unwrap();
        let want = (p.sigma_y1 / p.gamma1) * p.l11 * (p.sigma_y1 / p.eps.sqrt());
        assert!((cxy[(0, 0)] - want).abs() < 1e-14);
    }

    #[test]
    fn lorenz_examples() {
        let p = Lorenz84Params::default();
        assert_eq!(p.f.at(0.0), 11.0);
        let m = lorenz84_model(&p).unwrap();
        let c = m.coefficients(0.0, &DVector::from_vec(vec![1.0, 1.0]));
        let dy = c.drift_x(&DVector::from_element(1, 1.0));
        assert!((dy[0] + 3.0).abs() < 1e-15);
    }

    #[test]
    fn equilibrium_example() {
        let s = equilibrium_stats(&ReducedLinearParams::unforced(1.0, -1.0, 1.0, 1.0)).unwrap();
        assert!((s.rf - (2f64.sqrt() - 1.0)).abs() < 1e-14);
        assert!((s.gy - 2f64.sqrt()).abs() < 1e-14);
        assert!((s.rs - 1.0 / (2.0 * 2f64.sqrt())).abs() < 1e-14);
    }

    #[test]
    fn unsupported_partition_is_rejected() {
        let f = ModelFamily::Lorenz84(Lorenz84Params::default());
        assert!(f.model_observing(&["x".into()]).is_err());
        let c = ModelFamily::Climate(ClimateParams::default());
        let m = c.model_observing(&["y".into(), "x".into()]).unwrap();
        assert_eq!(m.hidden_names(), &["gamma".to_string()]);
    }

    #[test]
    fn parameter_validation() {
        assert!(climate_model(&ClimateParams::with_eps(1.5)).is_err());
        assert!(reduced_linear_model(&ReducedLinearParams::unforced(1.0, 0.5, 1.0, 1.0)).is_err());
    }
}
