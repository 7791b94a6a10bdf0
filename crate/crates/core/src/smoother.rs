//! Online forward-in-time smoother.
//!
//! When observation `n` arrives, the one-step-lagged estimate at `n-1` is
//! formed in closed form, and the correction it implies is pushed back to
//! every retained lag `j` through the accumulated update matrix
//! `D^{j,n-2} = E^j E^{j+1} ⋯ E^{n-2}`. Lags whose update matrix has decayed
//! below a tolerance (or that exceed the lag cap) are frozen.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::filter::{AuxMatrices, FilterSeries, GaussianState};
use crate::linalg::{congruence, enforce_psd, frobenius, mat_mul, mat_vec_add, symmetrize, to_flat};
use crate::model::Trajectory;

/// One-step-lagged smoother state `p(y^{n-1} | x(s ≤ n))` and its residuals.
#[derive(Clone, Debug)]
pub struct Boundary {
    pub state: GaussianState,
    pub b: DVector<f64>,
    pub p: DMatrix<f64>,
}

/// Closed-form smoother estimate at `n-1` given data up to `n`.
///
/// `aux_prev` must have been built at `(t_{n-1}, x^{n-1}, R_f^{n-1})`.
pub fn boundary_smoother(
    aux_prev: &AuxMatrices,
    filt_prev: &GaussianState,
    filt_next: &GaussianState,
    x_prev: &DVector<f64>,
    x_next: &DVector<f64>,
    dt: f64,
) -> Result<Boundary> {
    let l = filt_prev.dim();
    if aux_prev.gain_vanishes {
        // The observation is uninformative: the posterior at n-1 is unchanged.
        return Ok(Boundary {
            state: filt_prev.clone(),
            b: DVector::zeros(l),
            p: DMatrix::zeros(l, l),
        });
    }
    let d = &aux_prev.drift;
    let e = &aux_prev.e;
    let f = &aux_prev.f;
    let eye = DMatrix::<f64>::identity(l, l);
    let prop = &eye + &d.lambda_y * dt;
    let mu = &filt_prev.mean;
    let rf = &filt_prev.cov;

    let innovation = (x_next - x_prev) - (&d.lambda_x * mu + &d.f_x) * dt;
    let b = mu - e * (&prop * mu + &d.f_y * dt) + f * innovation;
    let p = rf - e * &prop * rf - f * &d.lambda_x * rf * dt;

    let mean = e * &filt_next.mean + &b;
    let mut cov = e * &filt_next.cov * e.transpose() + &p;
    symmetrize(&mut cov);
    enforce_psd(&mut cov);
    let state = GaussianState { mean, cov };
    if !state.is_finite() {
        return Err(Error::Blowup {
            what: "boundary smoother",
            index: 0,
            time: f64::NAN,
        });
    }
    Ok(Boundary { state, b, p })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BankConfig {
    /// Maximum number of steps a lag is kept open.
    pub lag_cap: usize,
    /// Frobenius norm of the update matrix below which a lag is frozen.
    pub lag_tol: f64,
}

impl Default for BankConfig {
    fn default() -> Self {
        BankConfig {
            lag_cap: 5000,
            lag_tol: 1e-6,
        }
    }
}

impl BankConfig {
    /// No truncation: every lag stays open to the end.
    pub fn exact() -> Self {
        BankConfig {
            lag_cap: usize::MAX,
            lag_tol: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FreezeReason {
    /// Update matrix fell below the tolerance.
    Converged,
    /// Lag cap reached while the update matrix was still above tolerance.
    LagCap,
    /// End of data.
    End,
}

/// Callbacks fired while the bank advances.
pub trait BankObserver {
    /// Whether `updated` should be called (copying old values has a cost).
    fn wants_updates(&self) -> bool {
        false
    }

    /// Lag `j` moved from `(old_mean, old_cov)` to `(new_mean, new_cov)`.
    fn updated(&mut self, _j: usize, _old_mean: &[f64], _old_cov: &[f64], _new_mean: &[f64], _new_cov: &[f64]) {}

    /// Lag `j` is final; `mean`/`cov` are row-major.
    fn frozen(&mut self, _j: usize, _mean: &[f64], _cov: &[f64], _reason: FreezeReason) {}
}

impl BankObserver for () {}

/// Read-only view of one retained lag.
pub struct EntryView<'a> {
    pub j: usize,
    pub mean: &'a [f64],
    pub cov: &'a [f64],
    pub d: &'a [f64],
}

/// Rolling store of lagged smoother statistics.
#[derive(Clone, Debug)]
pub struct SmootherBank {
    l: usize,
    cfg: BankConfig,
    n_current: usize,
    first_j: usize,
    start: usize,
    len: usize,
    mean: Vec<f64>,
    cov: Vec<f64>,
    d: Vec<f64>,
    boundary: Option<Boundary>,
    innov_mean: Vec<f64>,
    innov_cov: Vec<f64>,
    e_flat: Vec<f64>,
    scratch: Scratch,
}

#[derive(Clone, Debug)]
struct Scratch {
    tmp: Vec<f64>,
    tmp2: Vec<f64>,
    old_mean: Vec<f64>,
    old_cov: Vec<f64>,
}

struct Lanes<'a> {
    mean: &'a mut [f64],
    cov: &'a mut [f64],
    d: &'a mut [f64],
}

struct StepInputs<'a> {
    v: &'a [f64],
    dr: &'a [f64],
    e: &'a [f64],
    first_j: usize,
    zero_update: bool,
    wants: bool,
}

/// `μ += Dv`, `R += D ΔR Dᵀ`, `D ← D E` over all retained lags, fixed dimension.
fn sweep_fixed<const N: usize, O: BankObserver>(lanes: Lanes<'_>, s: &StepInputs<'_>, observer: &mut O) {
    let load = |src: &[f64]| {
        let mut m = [[0.0; N]; N];
        for i in 0..N {
            m[i].copy_from_slice(&src[i * N..(i + 1) * N]);
        }
        m
    };
    let v: [f64; N] = s.v.try_into().expect("innovation length");
    let dr = load(s.dr);
    let e = load(s.e);
    let it = lanes
        .mean
        .chunks_exact_mut(N)
        .zip(lanes.cov.chunks_exact_mut(N * N))
        .zip(lanes.d.chunks_exact_mut(N * N));
    for (k, ((m, r), dd)) in it.enumerate() {
        let d = load(dd);
        let old_m: [f64; N] = (&*m).try_into().expect("lane");
        let old_r = load(r);
        if !s.zero_update {
            for i in 0..N {
                let mut acc = 0.0;
                for c in 0..N {
                    acc += d[i][c] * v[c];
                }
                m[i] += acc;
            }
            let mut t = [[0.0; N]; N];
            for i in 0..N {
                for c in 0..N {
                    let mut acc = 0.0;
                    for q in 0..N {
                        acc += d[i][q] * dr[q][c];
                    }
                    t[i][c] = acc;
                }
            }
            for i in 0..N {
                for c in i..N {
                    let mut x = 0.0;
                    let mut y = 0.0;
                    for q in 0..N {
                        x += t[i][q] * d[c][q];
                        y += t[c][q] * d[i][q];
                    }
                    let val = 0.5 * (old_r[i][c] + old_r[c][i]) + 0.5 * (x + y);
                    r[i * N + c] = val;
                    r[c * N + i] = val;
                }
            }
        }
        for i in 0..N {
            for c in 0..N {
                let mut acc = 0.0;
                for q in 0..N {
                    acc += d[i][q] * e[q][c];
                }
                dd[i * N + c] = acc;
            }
        }
        if s.wants {
            let flat: Vec<f64> = old_r.iter().flatten().copied().collect();
            observer.updated(s.first_j + k, &old_m, &flat, m, r);
        }
    }
}

fn sweep_generic<O: BankObserver>(lanes: Lanes<'_>, s: &StepInputs<'_>, l: usize, w: &mut Scratch, observer: &mut O) {
    let ll = l * l;
    let it = lanes
        .mean
        .chunks_exact_mut(l)
        .zip(lanes.cov.chunks_exact_mut(ll))
        .zip(lanes.d.chunks_exact_mut(ll));
    for (k, ((m, r), d)) in it.enumerate() {
        if s.wants {
            w.old_mean.copy_from_slice(m);
            w.old_cov.copy_from_slice(r);
        }
        if !s.zero_update {
            mat_vec_add(d, s.v, m, l);
            congruence(d, s.dr, &mut w.tmp2, &mut w.tmp, l);
            for a in 0..l {
                for b in a..l {
                    let v = 0.5 * (w.tmp2[a * l + b] + w.tmp2[b * l + a]);
                    let x = 0.5 * (r[a * l + b] + r[b * l + a]) + v;
                    r[a * l + b] = x;
                    r[b * l + a] = x;
                }
            }
        }
        mat_mul(d, s.e, &mut w.tmp, l);
        d.copy_from_slice(&w.tmp);
        if s.wants {
            observer.updated(s.first_j + k, &w.old_mean, &w.old_cov, m, r);
        }
    }
}

impl SmootherBank {
    /// Bank at `n = 0` holding the initial filter state.
    pub fn new(filter0: &GaussianState, cfg: BankConfig) -> Self {
        let l = filter0.dim();
        let mut bank = SmootherBank {
            l,
            cfg,
            n_current: 0,
            first_j: 0,
            start: 0,
            len: 0,
            mean: Vec::new(),
            cov: Vec::new(),
            d: Vec::new(),
            boundary: None,
            innov_mean: vec![0.0; l],
            innov_cov: vec![0.0; l * l],
            e_flat: vec![0.0; l * l],
            scratch: Scratch {
                tmp: vec![0.0; l * l],
                tmp2: vec![0.0; l * l],
                old_mean: vec![0.0; l],
                old_cov: vec![0.0; l * l],
            },
        };
        bank.push(filter0);
        bank
    }

    pub fn n_current(&self) -> usize {
        self.n_current
    }

    pub fn config(&self) -> BankConfig {
        self.cfg
    }

    /// Number of retained (still open) lags.
    pub fn retained(&self) -> usize {
        self.len
    }

    /// Oldest retained lag index.
    pub fn first_retained(&self) -> usize {
        self.first_j
    }

    /// The most recent boundary estimate, if any step has been taken.
    pub fn last_boundary(&self) -> Option<&Boundary> {
        self.boundary.as_ref()
    }

    fn push(&mut self, s: &GaussianState) {
        let l = self.l;
        let ll = l * l;
        if self.start > 0 && self.start >= self.len.max(1024) {
            let s0 = self.start;
            self.mean.drain(..s0 * l);
            self.cov.drain(..s0 * ll);
            self.d.drain(..s0 * ll);
            self.start = 0;
        }
        self.mean.extend_from_slice(s.mean.as_slice());
        self.cov.extend(to_flat(&s.cov));
        for i in 0..l {
            for j in 0..l {
                self.d.push(if i == j { 1.0 } else { 0.0 });
            }
        }
        self.len += 1;
    }

    /// Stats of a retained lag.
    pub fn entry(&self, j: usize) -> Option<EntryView<'_>> {
        if j < self.first_j || j >= self.first_j + self.len {
            return None;
        }
        let slot = self.start + (j - self.first_j);
        let l = self.l;
        let ll = l * l;
        Some(EntryView {
            j,
            mean: &self.mean[slot * l..(slot + 1) * l],
            cov: &self.cov[slot * ll..(slot + 1) * ll],
            d: &self.d[slot * ll..(slot + 1) * ll],
        })
    }

    pub fn entries(&self) -> impl Iterator<Item = EntryView<'_>> + '_ {
        (self.first_j..self.first_j + self.len).filter_map(move |j| self.entry(j))
    }

    /// Lagged state `p(y^j | x(s ≤ n))` for a retained `j`.
    pub fn state(&self, j: usize) -> Option<GaussianState> {
        let e = self.entry(j)?;
        Some(GaussianState {
            mean: DVector::from_column_slice(e.mean),
            cov: DMatrix::from_row_slice(self.l, self.l, e.cov),
        })
    }

    /// Moves the bank from `n-1` to `n = n_new`.
    pub fn advance<O: BankObserver>(
        &mut self,
        n_new: usize,
        aux_prev: &AuxMatrices,
        boundary: Boundary,
        filt_prev: &GaussianState,
        filt_next: &GaussianState,
        observer: &mut O,
    ) -> Result<()> {
        if n_new != self.n_current + 1 {
            return Err(Error::BankIndex {
                bank: self.n_current,
                update: n_new,
            });
        }
        let l = self.l;
        let ll = l * l;
        for i in 0..l {
            self.innov_mean[i] = boundary.state.mean[i] - filt_prev.mean[i];
        }
        for r in 0..l {
            for c in 0..l {
                self.innov_cov[r * l + c] = boundary.state.cov[(r, c)] - filt_prev.cov[(r, c)];
            }
        }
        for r in 0..l {
            for c in 0..l {
                self.e_flat[r * l + c] = aux_prev.e[(r, c)];
            }
        }
        let zero_update = self.innov_mean.iter().chain(self.innov_cov.iter()).all(|v| *v == 0.0);
        let wants = observer.wants_updates();

        let (a, b) = (self.start, self.start + self.len);
        let lanes = Lanes {
            mean: &mut self.mean[a * l..b * l],
            cov: &mut self.cov[a * ll..b * ll],
            d: &mut self.d[a * ll..b * ll],
        };
        let step = StepInputs {
            v: &self.innov_mean,
            dr: &self.innov_cov,
            e: &self.e_flat,
            first_j: self.first_j,
            zero_update,
            wants,
        };
        match l {
            1 => sweep_fixed::<1, O>(lanes, &step, observer),
            2 => sweep_fixed::<2, O>(lanes, &step, observer),
            3 => sweep_fixed::<3, O>(lanes, &step, observer),
            4 => sweep_fixed::<4, O>(lanes, &step, observer),
            _ => sweep_generic(lanes, &step, l, &mut self.scratch, observer),
        }
        if !self.mean[self.start * l..(self.start + self.len) * l]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(Error::Blowup {
                what: "smoother bank",
                index: n_new,
                time: f64::NAN,
            });
        }

        self.n_current = n_new;
        self.boundary = Some(boundary);
        self.push(filt_next);
        self.freeze(observer);
        Ok(())
    }

    fn freeze<O: BankObserver>(&mut self, observer: &mut O) {
        let l = self.l;
        let ll = l * l;
        // The newest lag is never frozen here.
        while self.len > 1 {
            let slot = self.start;
            let norm = frobenius(&self.d[slot * ll..(slot + 1) * ll]);
            let age = self.n_current - self.first_j;
            let reason = if norm < self.cfg.lag_tol {
                FreezeReason::Converged
            } else if age > self.cfg.lag_cap {
                FreezeReason::LagCap
            } else {
                break;
            };
            observer.frozen(
                self.first_j,
                &self.mean[slot * l..(slot + 1) * l],
                &self.cov[slot * ll..(slot + 1) * ll],
                reason,
            );
            self.start += 1;
            self.first_j += 1;
            self.len -= 1;
        }
    }

    /// Freezes every remaining lag (end of data).
    pub fn finish<O: BankObserver>(mut self, observer: &mut O) {
        let l = self.l;
        let ll = l * l;
        for slot in self.start..self.start + self.len {
            let j = self.first_j + (slot - self.start);
            observer.frozen(
                j,
                &self.mean[slot * l..(slot + 1) * l],
                &self.cov[slot * ll..(slot + 1) * ll],
                FreezeReason::End,
            );
        }
        self.len = 0;
    }
}

/// Smoother statistics given all data, one per grid point.
#[derive(Clone, Debug)]
pub struct SmootherSeries {
    pub states: Vec<GaussianState>,
    /// Lags frozen by the lag cap rather than by convergence.
    pub truncated: Vec<bool>,
}

struct Collector {
    l: usize,
    states: Vec<Option<GaussianState>>,
    truncated: Vec<bool>,
}

impl BankObserver for Collector {
    fn frozen(&mut self, j: usize, mean: &[f64], cov: &[f64], reason: FreezeReason) {
        self.states[j] = Some(GaussianState {
            mean: DVector::from_column_slice(mean),
            cov: DMatrix::from_row_slice(self.l, self.l, cov),
        });
        self.truncated[j] = reason == FreezeReason::LagCap;
    }
}

/// Drives a bank over the whole filter series, calling `per_step` after each advance.
pub fn drive_bank<O: BankObserver>(
    filter: &FilterSeries,
    traj: &Trajectory,
    cfg: BankConfig,
    observer: &mut O,
    mut per_step: impl FnMut(&SmootherBank, &mut O) -> Result<()>,
) -> Result<()> {
    if filter.states.len() != traj.x_path.len() {
        return Err(Error::Dimension {
            context: "filter series vs trajectory",
            expected: traj.x_path.len(),
            found: filter.states.len(),
        });
    }
    let mut bank = SmootherBank::new(&filter.states[0], cfg);
    per_step(&bank, observer)?;
    for n in 1..filter.states.len() {
        let aux = &filter.aux[n - 1];
        let boundary = boundary_smoother(
            aux,
            &filter.states[n - 1],
            &filter.states[n],
            &traj.x_path[n - 1],
            &traj.x_path[n],
            filter.dt,
        )
        .map_err(|e| match e {
            Error::Blowup { what, .. } => Error::Blowup {
                what,
                index: n,
                time: filter.time(n),
            },
            other => other,
        })?;
        bank.advance(n, aux, boundary, &filter.states[n - 1], &filter.states[n], observer)?;
        per_step(&bank, observer)?;
    }
    bank.finish(observer);
    Ok(())
}

/// Runs the online smoother through the last observation.
pub fn complete_smoother(filter: &FilterSeries, traj: &Trajectory, cfg: BankConfig) -> Result<SmootherSeries> {
    let n = filter.states.len();
    let l = filter.states.first().map_or(0, |s| s.dim());
    let mut col = Collector {
        l,
        states: vec![None; n],
        truncated: vec![false; n],
    };
    drive_bank(filter, traj, cfg, &mut col, |_, _| Ok(()))?;
    let states = col
        .states
        .into_iter()
        .map(|s| s.expect("every lag is frozen exactly once"))
        .collect();
    Ok(SmootherSeries {
        states,
        truncated: col.truncated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::{run_filter, AuxMatrices};
    use crate::model::{CgnsModel, Coefficients};
    use crate::sim::simulate;

    fn linear(lx: f64, ly: f64, sx: f64, sy: f64) -> CgnsModel {
        CgnsModel::new("lin", 1, 1, 1, 1, move |_t, _x| {
            let mut c = Coefficients::zeros(1, 1, 1, 1);
            c.lambda_x[(0, 0)] = lx;
            c.lambda_y[(0, 0)] = ly;
            c.sigma_x1[(0, 0)] = sx;
            c.sigma_y2[(0, 0)] = sy;
            c
        })
        .unwrap()
    }

    fn unit_state(l: usize) -> GaussianState {
        GaussianState {
            mean: DVector::zeros(l),
            cov: DMatrix::identity(l, l),
        }
    }

    #[test]
    fn zero_coupling_boundary_returns_filter() {
        let m = linear(0.0, -1.0, 1.0, 1.0);
        let tr = simulate(&m, &DVector::zeros(1), &DVector::zeros(1), 0.01, 20, 1).unwrap();
        let fs = run_filter(&m, &tr, unit_state(1)).unwrap();
        let b = boundary_smoother(
            &fs.aux[4],
            &fs.states[4],
            &fs.states[5],
            &tr.x_path[4],
            &tr.x_path[5],
            0.01,
        )
        .unwrap();
        assert_eq!(b.state, fs.states[4]);
    }

    #[test]
    fn zero_innovation_leaves_bank_unchanged() {
        let s = GaussianState {
            mean: DVector::from_vec(vec![0.5, -0.2]),
            cov: DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.1, 0.5]),
        };
        let mut bank = SmootherBank::new(&s, BankConfig::default());
        let c = Coefficients::zeros(1, 2, 1, 0);
        let aux = AuxMatrices {
            e: DMatrix::identity(2, 2) * 0.9,
            f: DMatrix::zeros(2, 1),
            gx: DMatrix::zeros(1, 2),
            gy: DMatrix::zeros(2, 2),
            h: DMatrix::zeros(2, 2),
            k: DMatrix::zeros(1, 2),
            gram_inv: DMatrix::identity(1, 1),
            drift: crate::filter::DriftTerms {
                lambda_x: c.lambda_x.clone(),
                f_x: c.f_x.clone(),
                lambda_y: c.lambda_y.clone(),
                f_y: c.f_y.clone(),
            },
            gain_vanishes: false,
        };
        let boundary = Boundary {
            state: s.clone(),
            b: DVector::zeros(2),
            p: DMatrix::zeros(2, 2),
        };
        bank.advance(1, &aux, boundary, &s, &s, &mut ()).unwrap();
        assert_eq!(bank.state(0).unwrap(), s);
        // D^{0,0} = E^0
        assert!((bank.entry(0).unwrap().d[0] - 0.9).abs() < 1e-15);
        assert_eq!(bank.entry(1).unwrap().d, &[1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn bank_rejects_skipped_step() {
        let s = unit_state(1);
        let mut bank = SmootherBank::new(&s, BankConfig::default());
        let m = linear(1.0, -1.0, 1.0, 1.0);
        let tr = simulate(&m, &DVector::zeros(1), &DVector::zeros(1), 0.01, 3, 1).unwrap();
        let fs = run_filter(&m, &tr, s.clone()).unwrap();
        let b = boundary_smoother(
            &fs.aux[0],
            &fs.states[0],
            &fs.states[1],
            &tr.x_path[0],
            &tr.x_path[1],
            0.01,
        )
        .unwrap();
        let err = bank.advance(2, &fs.aux[0], b, &fs.states[0], &fs.states[1], &mut ());
        assert!(matches!(err, Err(Error::BankIndex { bank: 0, update: 2 })));
    }

    #[test]
    fn endpoint_identity_and_variance_domination() {
        let m = linear(1.0, -1.0, 1.0, 1.0);
        let tr = simulate(&m, &DVector::zeros(1), &DVector::zeros(1), 0.01, 2000, 4).unwrap();
        let fs = run_filter(&m, &tr, unit_state(1)).unwrap();
        let ss = complete_smoother(&fs, &tr, BankConfig::default()).unwrap();
        let n = ss.states.len() - 1;
        assert_eq!(ss.states[n], fs.states[n]);
        for (s, f) in ss.states.iter().zip(fs.states.iter()) {
            assert!(s.cov.trace() <= f.cov.trace() + 1e-8);
        }
    }

    #[test]
    fn lag_cap_bounds_retained_entries() {
        let m = linear(1.0, -0.01, 1.0, 1.0);
        let tr = simulate(&m, &DVector::zeros(1), &DVector::zeros(1), 0.01, 300, 2).unwrap();
        let fs = run_filter(&m, &tr, unit_state(1)).unwrap();
        let cfg = BankConfig {
            lag_cap: 50,
            lag_tol: 0.0,
        };
        let mut max_len = 0;
        drive_bank(&fs, &tr, cfg, &mut (), |b, _| {
            max_len = max_len.max(b.retained());
            Ok(())
        })
        .unwrap();
        assert_eq!(max_len, 51);
        let ss = complete_smoother(&fs, &tr, cfg).unwrap();
        assert!(ss.truncated[0] && !ss.truncated[300]);
    }
}
