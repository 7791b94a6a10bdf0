//! Conditionally Gaussian nonlinear systems and observed trajectories.
//!
//! A [`CgnsModel`] splits the state into an observed block `x` (dimension k)
//! and a hidden block `y` (dimension l):
//!
//! ```text
//! dx = (Λˣ(t,x) y + fˣ(t,x)) dt + Σˣ₁(t,x) dW₁ + Σˣ₂(t,x) dW₂
//! dy = (Λʸ(t,x) y + fʸ(t,x)) dt + Σʸ₁(t,x) dW₁ + Σʸ₂(t,x) dW₂
//! ```
//!
//! All coefficients may depend on time and the observed state but never on `y`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Coefficient values at one `(t, x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Coefficients {
    pub lambda_x: DMatrix<f64>,
    pub f_x: DVector<f64>,
    pub sigma_x1: DMatrix<f64>,
    pub sigma_x2: DMatrix<f64>,
    pub lambda_y: DMatrix<f64>,
    pub f_y: DVector<f64>,
    pub sigma_y1: DMatrix<f64>,
    pub sigma_y2: DMatrix<f64>,
}

impl Coefficients {
    /// All-zero coefficients of the given shape.
    pub fn zeros(k: usize, l: usize, d1: usize, d2: usize) -> Self {
        Coefficients {
            lambda_x: DMatrix::zeros(k, l),
            f_x: DVector::zeros(k),
            sigma_x1: DMatrix::zeros(k, d1),
            sigma_x2: DMatrix::zeros(k, d2),
            lambda_y: DMatrix::zeros(l, l),
            f_y: DVector::zeros(l),
            sigma_y1: DMatrix::zeros(l, d1),
            sigma_y2: DMatrix::zeros(l, d2),
        }
    }

    /// Drift of the observed block given a hidden state.
    pub fn drift_x(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.lambda_x * y + &self.f_x
    }

    /// Drift of the hidden block.
    pub fn drift_y(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.lambda_y * y + &self.f_y
    }
}

pub type CoefficientFn = Arc<dyn Fn(f64, &DVector<f64>) -> Coefficients + Send + Sync>;

/// A CGNS model: dimensions, names, and a pure coefficient evaluator.
#[derive(Clone)]
pub struct CgnsModel {
    pub name: String,
    k: usize,
    l: usize,
    d1: usize,
    d2: usize,
    eval: CoefficientFn,
    observed_names: Vec<String>,
    hidden_names: Vec<String>,
    /// Observed coordinates excluded from the Bayesian update (exact-limit conditioning).
    neutralized: Vec<usize>,
    /// Parameter echo for run metadata.
    pub params: Vec<(String, String)>,
}

impl fmt::Debug for CgnsModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CgnsModel")
            .field("name", &self.name)
            .field("k", &self.k)
            .field("l", &self.l)
            .field("d1", &self.d1)
            .field("d2", &self.d2)
            .field("observed", &self.observed_names)
            .field("hidden", &self.hidden_names)
            .field("neutralized", &self.neutralized)
            .finish()
    }
}

impl CgnsModel {
    pub fn new<F>(name: impl Into<String>, k: usize, l: usize, d1: usize, d2: usize, eval: F) -> Result<Self>
    where
        F: Fn(f64, &DVector<f64>) -> Coefficients + Send + Sync + 'static,
    {
        if k == 0 || l == 0 {
            return Err(Error::InvalidParameters(
                "observed and hidden dimensions must be positive".into(),
            ));
        }
        Ok(CgnsModel {
            name: name.into(),
            k,
            l,
            d1,
            d2,
            eval: Arc::new(eval),
            observed_names: (0..k).map(|i| format!("x{i}")).collect(),
            hidden_names: (0..l).map(|i| format!("y{i}")).collect(),
            neutralized: Vec::new(),
            params: Vec::new(),
        })
    }

    pub fn with_names(mut self, observed: &[&str], hidden: &[&str]) -> Result<Self> {
        if observed.len() != self.k {
            return Err(Error::Dimension {
                context: "observed names",
                expected: self.k,
                found: observed.len(),
            });
        }
        if hidden.len() != self.l {
            return Err(Error::Dimension {
                context: "hidden names",
                expected: self.l,
                found: hidden.len(),
            });
        }
        self.observed_names = observed.iter().map(|s| s.to_string()).collect();
        self.hidden_names = hidden.iter().map(|s| s.to_string()).collect();
        Ok(self)
    }

    pub fn with_params(mut self, params: Vec<(String, String)>) -> Self {
        self.params = params;
        self
    }

    pub fn dim_obs(&self) -> usize {
        self.k
    }

    pub fn dim_hid(&self) -> usize {
        self.l
    }

    pub fn noise_dims(&self) -> (usize, usize) {
        (self.d1, self.d2)
    }

    pub fn observed_names(&self) -> &[String] {
        &self.observed_names
    }

    pub fn hidden_names(&self) -> &[String] {
        &self.hidden_names
    }

    pub fn neutralized(&self) -> &[usize] {
        &self.neutralized
    }

    pub(crate) fn set_neutralized(&mut self, idx: Vec<usize>) {
        self.neutralized = idx;
    }

    /// Replaces the evaluator, keeping dimensions and names.
    pub(crate) fn map_eval<G>(&self, g: G) -> CgnsModel
    where
        G: Fn(Coefficients) -> Coefficients + Send + Sync + 'static,
    {
        let inner = self.eval.clone();
        let mut out = self.clone();
        out.eval = Arc::new(move |t, x| g(inner(t, x)));
        out
    }

    /// Evaluates the coefficients at `(t, x)`.
    pub fn coefficients(&self, t: f64, x: &DVector<f64>) -> Coefficients {
        (self.eval)(t, x)
    }

    /// Evaluates and checks shapes and finiteness.
    pub fn checked_coefficients(&self, t: f64, x: &DVector<f64>) -> Result<Coefficients> {
        if x.len() != self.k {
            return Err(Error::Dimension {
                context: "observed state",
                expected: self.k,
                found: x.len(),
            });
        }
        let c = self.coefficients(t, x);
        let shapes = [
            ("Λˣ", c.lambda_x.shape(), (self.k, self.l)),
            ("fˣ", c.f_x.shape(), (self.k, 1)),
            ("Σˣ₁", c.sigma_x1.shape(), (self.k, self.d1)),
            ("Σˣ₂", c.sigma_x2.shape(), (self.k, self.d2)),
            ("Λʸ", c.lambda_y.shape(), (self.l, self.l)),
            ("fʸ", c.f_y.shape(), (self.l, 1)),
            ("Σʸ₁", c.sigma_y1.shape(), (self.l, self.d1)),
            ("Σʸ₂", c.sigma_y2.shape(), (self.l, self.d2)),
        ];
        for (name, got, want) in shapes {
            if got != want {
                return Err(Error::InvalidParameters(format!(
                    "{name} has shape {got:?}, expected {want:?}"
                )));
            }
        }
        Ok(c)
    }

    /// Index of a hidden variable by name.
    pub fn hidden_index(&self, name: &str) -> Option<usize> {
        self.hidden_names.iter().position(|n| n == name)
    }

    /// Index of an observed variable by name.
    pub fn observed_index(&self, name: &str) -> Option<usize> {
        self.observed_names.iter().position(|n| n == name)
    }
}

/// Observed path (and optional hidden truth) on a uniform grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub t0: f64,
    pub x_path: Vec<DVector<f64>>,
    pub y_path: Option<Vec<DVector<f64>>>,
    pub seed: u64,
    pub observed_names: Vec<String>,
    pub hidden_names: Vec<String>,
}

impl Trajectory {
    /// Observation-only trajectory with default names.
    pub fn from_observations(dt: f64, t0: f64, x_path: Vec<DVector<f64>>) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParameters(format!("dt must be positive, got {dt}")));
        }
        let k = x_path.first().map_or(0, |v| v.len());
        if let Some(bad) = x_path.iter().position(|v| v.len() != k) {
            return Err(Error::Dimension {
                context: "observation path",
                expected: k,
                found: x_path[bad].len(),
            });
        }
        Ok(Trajectory {
            dt,
            t0,
            x_path,
            y_path: None,
            seed: 0,
            observed_names: (0..k).map(|i| format!("x{i}")).collect(),
            hidden_names: Vec::new(),
        })
    }

    /// Number of steps N (the grid has N+1 points).
    pub fn n_steps(&self) -> usize {
        self.x_path.len().saturating_sub(1)
    }

    pub fn time(&self, j: usize) -> f64 {
        self.t0 + j as f64 * self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.n_steps())
    }

    /// First grid index with `t_j >= t`, clamped to the grid.
    pub fn index_at(&self, t: f64) -> usize {
        let raw = ((t - self.t0) / self.dt - 1e-9).ceil();
        (raw.max(0.0) as usize).min(self.n_steps())
    }

    /// Variable names in the order `observed ++ hidden`.
    pub fn all_names(&self) -> Vec<String> {
        self.observed_names
            .iter()
            .chain(self.hidden_names.iter())
            .cloned()
            .collect()
    }

    /// Re-splits the stored state into a different observed/hidden partition.
    ///
    /// Requires the hidden truth to be present.
    pub fn repartition(&self, observed: &[&str], hidden: &[&str]) -> Result<Trajectory> {
        let y_path = self
            .y_path
            .as_ref()
            .ok_or_else(|| Error::InvalidQuery("repartitioning needs the hidden truth in the trajectory".into()))?;
        let names = self.all_names();
        let lookup = |n: &str| {
            names
                .iter()
                .position(|m| m == n)
                .ok_or_else(|| Error::InvalidQuery(format!("unknown variable `{n}`")))
        };
        let obs_idx: Vec<usize> = observed.iter().map(|n| lookup(n)).collect::<Result<_>>()?;
        let hid_idx: Vec<usize> = hidden.iter().map(|n| lookup(n)).collect::<Result<_>>()?;
        let k = self.observed_names.len();
        let pick = |j: usize, idx: &[usize]| {
            DVector::from_iterator(
                idx.len(),
                idx.iter()
                    .map(|&i| if i < k { self.x_path[j][i] } else { y_path[j][i - k] }),
            )
        };
        let n = self.x_path.len();
        Ok(Trajectory {
            dt: self.dt,
            t0: self.t0,
            x_path: (0..n).map(|j| pick(j, &obs_idx)).collect(),
            y_path: Some((0..n).map(|j| pick(j, &hid_idx)).collect()),
            seed: self.seed,
            observed_names: observed.iter().map(|s| s.to_string()).collect(),
            hidden_names: hidden.iter().map(|s| s.to_string()).collect(),
        })
    }

    /// Keeps every `factor`-th grid point.
    pub fn subsample(&self, factor: usize) -> Trajectory {
        let factor = factor.max(1);
        Trajectory {
            dt: self.dt * factor as f64,
            t0: self.t0,
            x_path: self.x_path.iter().step_by(factor).cloned().collect(),
            y_path: self
                .y_path
                .as_ref()
                .map(|p| p.iter().step_by(factor).cloned().collect()),
            seed: self.seed,
            observed_names: self.observed_names.clone(),
            hidden_names: self.hidden_names.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> CgnsModel {
        CgnsModel::new("toy", 1, 1, 1, 1, |_t, _x| Coefficients::zeros(1, 1, 1, 1)).unwrap()
    }

    #[test]
    fn shape_check_catches_bad_evaluator() {
        let bad = CgnsModel::new("bad", 1, 2, 1, 0, |_t, _x| Coefficients::zeros(1, 1, 1, 0)).unwrap();
        assert!(bad.checked_coefficients(0.0, &DVector::zeros(1)).is_err());
        assert!(toy().checked_coefficients(0.0, &DVector::zeros(1)).is_ok());
    }

    #[test]
    fn repartition_moves_coordinates() {
        let traj = Trajectory {
            dt: 0.1,
            t0: 0.0,
            x_path: vec![DVector::from_vec(vec![1.0]); 3],
            y_path: Some(vec![DVector::from_vec(vec![2.0, 3.0]); 3]),
            seed: 1,
            observed_names: vec!["x".into()],
            hidden_names: vec!["y".into(), "g".into()],
        };
        let r = traj.repartition(&["x", "y"], &["g"]).unwrap();
        assert_eq!(r.x_path[2].as_slice(), &[1.0, 2.0]);
        assert_eq!(r.y_path.unwrap()[0].as_slice(), &[3.0]);
        assert!(traj.repartition(&["q"], &[]).is_err());
    }

    #[test]
    fn index_at_rounds_up_to_grid() {
        let traj = Trajectory::from_observations(0.5, 1.0, vec![DVector::zeros(1); 5]).unwrap();
        assert_eq!(traj.index_at(1.0), 0);
        assert_eq!(traj.index_at(1.2), 1);
        assert_eq!(traj.index_at(2.0), 2);
        assert_eq!(traj.index_at(99.0), 4);
    }
}
