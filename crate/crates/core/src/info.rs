//! Gaussian relative entropy with its signal/dispersion split.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::filter::GaussianState;
use crate::linalg::{cholesky_in_place, forward_substitute, sym_eigenvalues, to_flat, whiten};

/// Relative entropy in nats, split into mean-shift and covariance parts.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EntropyValue {
    pub total: f64,
    pub signal: f64,
    pub dispersion: f64,
}

impl EntropyValue {
    pub const ZERO: EntropyValue = EntropyValue {
        total: 0.0,
        signal: 0.0,
        dispersion: 0.0,
    };

    fn from_parts(signal: f64, dispersion: f64) -> Self {
        EntropyValue {
            total: signal + dispersion,
            signal,
            dispersion,
        }
    }
}

/// Reusable buffers for [`KlWorkspace::divergence`]; avoids per-call allocation.
#[derive(Clone, Debug)]
pub struct KlWorkspace {
    n: usize,
    chol: Vec<f64>,
    diff_cov: Vec<f64>,
    white: Vec<f64>,
    tmp: Vec<f64>,
    v: Vec<f64>,
    eig: Vec<f64>,
    /// Added to the reference diagonal before factorization; 0 disables.
    pub jitter: f64,
}

impl KlWorkspace {
    pub fn new(n: usize) -> Self {
        KlWorkspace {
            n,
            chol: vec![0.0; n * n],
            diff_cov: vec![0.0; n * n],
            white: vec![0.0; n * n],
            tmp: vec![0.0; n * n],
            v: vec![0.0; n],
            eig: vec![0.0; n],
            jitter: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// `KL(N(mu_p, r_p) ‖ N(mu_q, r_q))` on flat row-major inputs.
    pub fn divergence(&mut self, mu_p: &[f64], r_p: &[f64], mu_q: &[f64], r_q: &[f64]) -> Result<EntropyValue> {
        let n = self.n;
        self.chol.copy_from_slice(r_q);
        if self.jitter > 0.0 {
            for i in 0..n {
                self.chol[i * n + i] += self.jitter;
            }
        }
        if !cholesky_in_place(&mut self.chol, n) {
            return Err(Error::DegenerateReference);
        }
        for i in 0..n {
            self.v[i] = mu_p[i] - mu_q[i];
        }
        forward_substitute(&self.chol, &mut self.v, n);
        let signal = 0.5 * self.v.iter().map(|x| x * x).sum::<f64>();

        // Eigenvalues of L⁻¹(R_p − R_q)L⁻ᵀ are λ_i − 1 for λ_i those of R_q⁻¹R_p.
        for i in 0..n * n {
            self.diff_cov[i] = r_p[i] - r_q[i];
        }
        whiten(&self.chol, &self.diff_cov, &mut self.white, &mut self.tmp, n);
        sym_eigenvalues(&self.white, n, &mut self.eig);
        let mut dispersion = 0.0;
        for &m in &self.eig[..n] {
            if m <= -1.0 {
                return Err(Error::NotPositiveDefinite {
                    what: "first covariance of the relative entropy",
                });
            }
            dispersion += (m - m.ln_1p()).max(0.0);
        }
        Ok(EntropyValue::from_parts(signal, 0.5 * dispersion))
    }
}

/// Closed-form `KL(p ‖ q)` for Gaussians.
pub fn gauss_relative_entropy(p: &GaussianState, q: &GaussianState) -> Result<EntropyValue> {
    if p.dim() != q.dim() {
        return Err(Error::Dimension {
            context: "relative entropy",
            expected: q.dim(),
            found: p.dim(),
        });
    }
    let mut ws = KlWorkspace::new(p.dim());
    ws.divergence(p.mean.as_slice(), &to_flat(&p.cov), q.mean.as_slice(), &to_flat(&q.cov))
}

/// ACI value at one time: how much the smoother (all data) differs from the filter (past data).
pub fn aci_metric(filter_j: &GaussianState, smoother_jn: &GaussianState) -> Result<EntropyValue> {
    gauss_relative_entropy(smoother_jn, filter_j)
}

/// Sub-mean and principal submatrix on `indices`.
pub fn marginal(state: &GaussianState, indices: &[usize]) -> Result<GaussianState> {
    let l = state.dim();
    for (pos, &i) in indices.iter().enumerate() {
        if i >= l {
            return Err(Error::InvalidQuery(format!(
                "marginal index {i} out of range for dimension {l}"
            )));
        }
        if indices[..pos].contains(&i) {
            return Err(Error::InvalidQuery(format!("marginal index {i} repeated")));
        }
    }
    let mean = DVector::from_iterator(indices.len(), indices.iter().map(|&i| state.mean[i]));
    let cov = DMatrix::from_fn(indices.len(), indices.len(), |r, c| state.cov[(indices[r], indices[c])]);
    Ok(GaussianState { mean, cov })
}

/// Flat marginal extraction into caller buffers.
pub(crate) fn marginal_flat(
    mean: &[f64],
    cov: &[f64],
    l: usize,
    idx: &[usize],
    out_mean: &mut [f64],
    out_cov: &mut [f64],
) {
    let m = idx.len();
    for (r, &i) in idx.iter().enumerate() {
        out_mean[r] = mean[i];
        for (c, &j) in idx.iter().enumerate() {
            out_cov[r * m + c] = cov[i * l + j];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g1(m: f64, v: f64) -> GaussianState {
        GaussianState {
            mean: DVector::from_vec(vec![m]),
            cov: DMatrix::from_element(1, 1, v),
        }
    }

    #[test]
    fn identical_is_zero() {
        let s = GaussianState {
            mean: DVector::from_vec(vec![1.0, 2.0]),
            cov: DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
        };
        assert_eq!(gauss_relative_entropy(&s, &s).unwrap(), EntropyValue::ZERO);
    }

    #[test]
    fn scalar_cases() {
        let e = gauss_relative_entropy(&g1(1.0, 1.0), &g1(0.0, 1.0)).unwrap();
        assert_eq!((e.total, e.signal, e.dispersion), (0.5, 0.5, 0.0));
        let e = gauss_relative_entropy(&g1(0.0, 2.0), &g1(0.0, 1.0)).unwrap();
        let want = 0.5 * (2.0 - 1.0 - 2f64.ln());
        assert!((e.total - want).abs() < 1e-15);
        assert!((e.total - 0.153426).abs() < 1e-6);
    }

    #[test]
    fn singular_reference_is_error() {
        let q = g1(0.0, 0.0);
        assert!(matches!(
            gauss_relative_entropy(&g1(0.0, 1.0), &q),
            Err(Error::DegenerateReference)
        ));
    }

    #[test]
    fn matches_textbook_formula_in_3d() {
        let p = GaussianState {
            mean: DVector::from_vec(vec![0.3, -1.0, 2.0]),
            cov: DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.5, -0.2, 0.1, -0.2, 0.7]),
        };
        let q = GaussianState {
            mean: DVector::from_vec(vec![0.0, 0.5, 1.0]),
            cov: DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.0, 0.2, 2.0, 0.4, 0.0, 0.4, 1.2]),
        };
        let qi = q.cov.clone().try_inverse().unwrap();
        let d = &p.mean - &q.mean;
        let sig = 0.5 * (d.transpose() * &qi * &d)[(0, 0)];
        let ratio = &qi * &p.cov;
        let disp = 0.5 * (ratio.trace() - 3.0 - ratio.determinant().ln());
        let e = gauss_relative_entropy(&p, &q).unwrap();
        assert!((e.signal - sig).abs() < 1e-12);
        assert!((e.dispersion - disp).abs() < 1e-12);
    }

    #[test]
    fn jitter_admits_singular_reference() {
        let mut ws = KlWorkspace::new(1);
        ws.jitter = 1e-3;
        assert!(ws.divergence(&[0.0], &[1.0], &[0.0], &[0.0]).is_ok());
    }

    #[test]
    fn marginal_examples() {
        let s = GaussianState {
            mean: DVector::from_vec(vec![0.0, 0.0]),
            cov: DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0]),
        };
        assert_eq!(marginal(&s, &[0, 1]).unwrap(), s);
        let m = marginal(&s, &[1]).unwrap();
        assert_eq!(m.cov[(0, 0)], 1.0);
        assert!(marginal(&s, &[2]).is_err());
        assert!(marginal(&s, &[0, 0]).is_err());
    }
}
