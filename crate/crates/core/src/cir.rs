//! Causal influence range lengths from discrete information-deficit profiles.
//!
//! Forward profiles are indexed by lag offset `i = n - j` (so `P_0` is the ACI
//! value and `P_K = 0` at the end of data); sample `i` stands for the cell
//! `[t_j + iΔt, t_j + (i+1)Δt)` and lengths are clipped to the horizon `KΔt`.
//! Backward profiles are indexed by `j = 0..=K` with `g_j = |P^j_T - P^0_T|`
//! and use point values: `τ̃ᵇ(ε) = T - sup{t_j : g_j ≤ ε}`.
//!
//! Objective lengths average the subjective length over `ε ∈ [0, M]`. Both
//! subjective lengths are step functions of `ε`, so the average reduces to a
//! sum of suffix maxima (forward) or suffix minima (backward).

use std::fmt;
use std::path::Path;

use crate::error::Result;
use crate::info::EntropyValue;
use crate::io::{fmt_g, write_text};

/// Maximum deficit below which a length is marked as weak evidence.
pub const WEAK_EVIDENCE: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CirLength {
    pub length: f64,
    /// Maximum of the profile (`Mᶠ` or `Mᵇ`).
    pub max: f64,
    pub weak: bool,
}

impl CirLength {
    fn zero(max: f64) -> Self {
        CirLength {
            length: 0.0,
            max,
            weak: true,
        }
    }
}

/// Quadrature over the threshold `ε`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum EpsGridPolicy {
    /// Exact integral of the step function.
    #[default]
    Staircase,
    /// Midpoint rule with the given number of nodes.
    Uniform(usize),
}

fn profile_max(p: &[f64]) -> f64 {
    p.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Subjective forward length: end of the last cell whose deficit exceeds `eps`.
pub fn forward_subjective(profile: &[f64], dt: f64, eps: f64) -> f64 {
    let k = profile.len().saturating_sub(1);
    match profile.iter().rposition(|&v| v > eps) {
        Some(i) => ((i + 1).min(k)) as f64 * dt,
        None => 0.0,
    }
}

/// Norm-ratio approximation `‖P‖_{L¹}/‖P‖_{L∞}` (a lower bound on the objective length).
pub fn forward_length_approx(profile: &[f64], dt: f64) -> CirLength {
    let max = profile_max(profile);
    if max == 0.0 || profile.len() < 2 {
        return CirLength::zero(max);
    }
    let k = profile.len() - 1;
    let l1: f64 = profile[..k].iter().map(|v| v.abs()).sum();
    CirLength {
        length: dt * l1 / max,
        max,
        weak: max < WEAK_EVIDENCE,
    }
}

/// Objective forward length: threshold-average of the subjective length.
pub fn forward_length_exact(profile: &[f64], dt: f64, policy: EpsGridPolicy) -> CirLength {
    let max = profile_max(profile);
    if max == 0.0 || profile.len() < 2 {
        return CirLength::zero(max);
    }
    let length = match policy {
        EpsGridPolicy::Staircase => {
            let k = profile.len() - 1;
            let mut suffix = profile[k].abs();
            let mut acc = 0.0;
            for m in (0..k).rev() {
                suffix = suffix.max(profile[m].abs());
                acc += suffix;
            }
            dt * acc / max
        }
        EpsGridPolicy::Uniform(n) => midpoint(max, n, |eps| forward_subjective(profile, dt, eps)),
    };
    CirLength {
        length,
        max,
        weak: max < WEAK_EVIDENCE,
    }
}

/// Centers raw backward deficits: `g_j = |P^j - P^0|`.
pub fn backward_profile(raw: &[f64]) -> Vec<f64> {
    let p0 = raw.first().copied().unwrap_or(0.0);
    raw.iter().map(|v| (v - p0).abs()).collect()
}

/// Subjective backward length: time since the last index whose deficit is at most `eps`.
pub fn backward_subjective(profile: &[f64], dt: f64, eps: f64) -> f64 {
    if eps < 0.0 || profile.is_empty() {
        return 0.0;
    }
    let k = profile.len() - 1;
    match profile.iter().rposition(|&v| v <= eps) {
        Some(j) => (k - j) as f64 * dt,
        None => k as f64 * dt,
    }
}

/// Norm-ratio approximation (an upper bound on the objective backward length).
///
/// The profile must be centered (`g_0 = 0`) or a suffix of a centered profile
/// that is zero before its first element.
pub fn backward_length_approx(profile: &[f64], dt: f64) -> CirLength {
    let max = profile_max(profile);
    if max == 0.0 {
        return CirLength::zero(max);
    }
    let l1: f64 = profile.iter().map(|v| v.abs()).sum();
    CirLength {
        length: dt * l1 / max,
        max,
        weak: max < WEAK_EVIDENCE,
    }
}

/// Objective backward length with the same profile convention as the approximation.
pub fn backward_length_exact(profile: &[f64], dt: f64, policy: EpsGridPolicy) -> CirLength {
    let max = profile_max(profile);
    if max == 0.0 {
        return CirLength::zero(max);
    }
    let length = match policy {
        EpsGridPolicy::Staircase => {
            let mut suffix = f64::INFINITY;
            let mut acc = 0.0;
            for v in profile.iter().rev() {
                suffix = suffix.min(v.abs());
                acc += suffix;
            }
            dt * acc / max
        }
        EpsGridPolicy::Uniform(n) => midpoint(max, n, |eps| backward_subjective(profile, dt, eps)),
    };
    CirLength {
        length,
        max,
        weak: max < WEAK_EVIDENCE,
    }
}

fn midpoint(max: f64, n: usize, f: impl Fn(f64) -> f64) -> f64 {
    let n = n.max(1);
    let h = max / n as f64;
    (0..n).map(|i| f((i as f64 + 0.5) * h)).sum::<f64>() / n as f64
}

/// Quality flags attached to one analysis time.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CirFlags {
    pub weak_forward: bool,
    pub weak_backward: bool,
    /// The forward profile was cut by the lag cap.
    pub truncated: bool,
}

impl fmt::Display for CirFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if self.weak_forward {
            parts.push("weak_f");
        }
        if self.weak_backward {
            parts.push("weak_b");
        }
        if self.truncated {
            parts.push("lag_cap");
        }
        if parts.is_empty() {
            f.write_str("ok")
        } else {
            f.write_str(&parts.join("|"))
        }
    }
}

/// ACI and CIR values at the analysis times of one query.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CirSeries {
    pub label: String,
    pub t: Vec<f64>,
    pub aci: Vec<EntropyValue>,
    pub tau_forward_approx: Vec<f64>,
    pub tau_backward_approx: Vec<f64>,
    pub tau_forward_exact: Option<Vec<f64>>,
    pub tau_backward_exact: Option<Vec<f64>>,
    pub max_deficit_forward: Vec<f64>,
    pub max_deficit_backward: Vec<f64>,
    pub flags: Vec<CirFlags>,
}

impl CirSeries {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let exact = self.tau_forward_exact.is_some() && self.tau_backward_exact.is_some();
        let mut out = String::from("t,aci,aci_signal,aci_dispersion,tau_f_approx,tau_b_approx");
        if exact {
            out.push_str(",tau_f_exact,tau_b_exact");
        }
        out.push_str(",Mf,Mb,flags\n");
        for i in 0..self.t.len() {
            let a = self.aci[i];
            let mut row = vec![
                fmt_g(self.t[i]),
                fmt_g(a.total),
                fmt_g(a.signal),
                fmt_g(a.dispersion),
                fmt_g(self.tau_forward_approx[i]),
                fmt_g(self.tau_backward_approx[i]),
            ];
            if exact {
                row.push(fmt_g(self.tau_forward_exact.as_ref().unwrap()[i]));
                row.push(fmt_g(self.tau_backward_exact.as_ref().unwrap()[i]));
            }
            row.push(fmt_g(self.max_deficit_forward[i]));
            row.push(fmt_g(self.max_deficit_backward[i]));
            row.push(self.flags[i].to_string());
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_text(path, &self.to_csv())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_examples() {
        let c = 0.7;
        let head = [c, 0.0, 0.0, 0.0];
        assert!((forward_length_approx(&head, 0.1).length - 0.1).abs() < 1e-15);
        let flat = [c, c, c, c, 0.0];
        assert!((forward_length_approx(&flat, 0.5).length - 2.0).abs() < 1e-15);

        let nm = [c, 0.0, c, 0.0];
        assert_eq!(forward_subjective(&nm, 1.0, 0.5 * c), 3.0);
        assert!((forward_length_exact(&nm, 1.0, EpsGridPolicy::Staircase).length - 3.0).abs() < 1e-14);
        assert!((forward_length_approx(&nm, 1.0).length - 2.0).abs() < 1e-14);
    }

    #[test]
    fn forward_edge_cases() {
        assert_eq!(forward_subjective(&[1.0, 0.5, 0.0], 1.0, 1.0), 0.0);
        assert_eq!(forward_length_exact(&[3.0], 1.0, EpsGridPolicy::Staircase).length, 0.0);
        let z = forward_length_approx(&[0.0, 0.0], 1.0);
        assert!(z.weak && z.length == 0.0);
        assert!(forward_length_approx(&[1e-5, 0.0], 1.0).weak);
    }

    #[test]
    fn backward_examples() {
        let g = [0.0, 0.2, 0.5, 1.0];
        assert_eq!(backward_subjective(&g, 1.0, 0.5), 1.0);
        assert_eq!(backward_subjective(&g, 1.0, -0.1), 0.0);
        let a = backward_length_approx(&g, 1.0).length;
        let e = backward_length_exact(&g, 1.0, EpsGridPolicy::Staircase).length;
        assert!((a - 1.7).abs() < 1e-15 && (e - 1.7).abs() < 1e-15);
        assert!((backward_length_approx(&[0.0, 0.0, 0.4], 0.1).length - 0.1).abs() < 1e-15);
        assert_eq!(
            backward_length_exact(&[0.0; 5], 1.0, EpsGridPolicy::Staircase).length,
            0.0
        );
    }

    #[test]
    fn centering() {
        assert_eq!(backward_profile(&[0.5, 0.25, 1.0]), vec![0.0, 0.25, 0.5]);
    }

    #[test]
    fn uniform_policy_converges_to_staircase() {
        let p = [0.9, 0.1, 0.6, 0.3, 0.0];
        let s = forward_length_exact(&p, 0.5, EpsGridPolicy::Staircase).length;
        let u = forward_length_exact(&p, 0.5, EpsGridPolicy::Uniform(100_000)).length;
        assert!((s - u).abs() < 1e-4);
        let g = [0.0, 0.4, 0.1, 0.8, 0.5];
        let s = backward_length_exact(&g, 0.5, EpsGridPolicy::Staircase).length;
        let u = backward_length_exact(&g, 0.5, EpsGridPolicy::Uniform(100_000)).length;
        assert!((s - u).abs() < 1e-4);
    }

    #[test]
    fn flags_display() {
        assert_eq!(CirFlags::default().to_string(), "ok");
        let f = CirFlags {
            weak_forward: true,
            truncated: true,
            ..Default::default()
        };
        assert_eq!(f.to_string(), "weak_f|lag_cap");
    }
}
