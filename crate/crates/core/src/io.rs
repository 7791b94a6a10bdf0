//! Flat-file artifacts: CSV tables and `key=value` metadata.

use std::fs;
use std::path::Path;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::filter::FilterSeries;
use crate::model::Trajectory;
use crate::smoother::SmootherBank;

/// Formats like C's `%.12g`.
pub fn fmt_g(v: f64) -> String {
    const P: i32 = 12;
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{:.*e}", (P - 1) as usize, v);
    let (mant, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..P).contains(&exp) {
        let mant = trim_zeros(mant);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mant}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (P - 1 - exp) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn join_row(values: impl IntoIterator<Item = f64>) -> String {
    values.into_iter().map(fmt_g).collect::<Vec<_>>().join(",")
}

/// `t,<observed names>,<hidden names>` with one row per grid point.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut out = String::from("t");
    for n in &traj.observed_names {
        out.push(',');
        out.push_str(n);
    }
    if traj.y_path.is_some() {
        for n in &traj.hidden_names {
            out.push(',');
            out.push_str(n);
        }
    }
    out.push('\n');
    for j in 0..traj.x_path.len() {
        let mut vals = vec![traj.time(j)];
        vals.extend(traj.x_path[j].iter());
        if let Some(y) = &traj.y_path {
            vals.extend(y[j].iter());
        }
        out.push_str(&join_row(vals));
        out.push('\n');
    }
    out
}

/// Reads a trajectory CSV. `observed` names the observed columns; all other
/// non-time columns become the hidden truth.
pub fn read_trajectory_csv(path: impl AsRef<Path>, observed: &[&str]) -> Result<Trajectory> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let p = path.display().to_string();
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::Parse {
        path: p.clone(),
        line: 1,
        message: "empty file".into(),
    })?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.first() != Some(&"t") {
        return Err(Error::Parse {
            path: p,
            line: 1,
            message: "first column must be `t`".into(),
        });
    }
    let mut obs_idx = Vec::new();
    for name in observed {
        let i = cols.iter().position(|c| c == name).ok_or_else(|| Error::Parse {
            path: p.clone(),
            line: 1,
            message: format!("missing column `{name}`"),
        })?;
        obs_idx.push(i);
    }
    let hid_idx: Vec<usize> = (1..cols.len()).filter(|i| !obs_idx.contains(i)).collect();
    let mut times = Vec::new();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (ln, line) in lines {
        let vals: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                path: p.clone(),
                line: ln + 1,
                message: e.to_string(),
            })?;
        if vals.len() != cols.len() {
            return Err(Error::Parse {
                path: p.clone(),
                line: ln + 1,
                message: format!("expected {} fields, found {}", cols.len(), vals.len()),
            });
        }
        times.push(vals[0]);
        xs.push(DVector::from_iterator(obs_idx.len(), obs_idx.iter().map(|&i| vals[i])));
        ys.push(DVector::from_iterator(hid_idx.len(), hid_idx.iter().map(|&i| vals[i])));
    }
    if times.len() < 2 {
        return Err(Error::Parse {
            path: p,
            line: 1,
            message: "need at least two rows to infer the time step".into(),
        });
    }
    let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    let mut traj = Trajectory::from_observations(dt, times[0], xs)?;
    traj.observed_names = observed.iter().map(|s| s.to_string()).collect();
    if !hid_idx.is_empty() {
        traj.hidden_names = hid_idx.iter().map(|&i| cols[i].to_string()).collect();
        traj.y_path = Some(ys);
    }
    Ok(traj)
}

/// `t,mu_0..,R_00,R_01,..` (row-major upper triangle).
pub fn filter_csv(series: &FilterSeries) -> String {
    let l = series.states.first().map_or(0, |s| s.dim());
    let mut head = vec!["t".to_string()];
    head.extend((0..l).map(|i| format!("mu_{i}")));
    for i in 0..l {
        for j in i..l {
            head.push(format!("R_{i}{j}"));
        }
    }
    let mut out = head.join(",");
    out.push('\n');
    for (n, s) in series.states.iter().enumerate() {
        let mut vals = vec![series.time(n)];
        vals.extend(s.mean.iter());
        for i in 0..l {
            for j in i..l {
                vals.push(s.cov[(i, j)]);
            }
        }
        out.push_str(&join_row(vals));
        out.push('\n');
    }
    out
}

/// `j,n,mu_..,R_..,normD` for the retained lags of a bank.
pub fn bank_csv(bank: &SmootherBank, l: usize) -> String {
    let mut head = vec!["j".to_string(), "n".to_string()];
    head.extend((0..l).map(|i| format!("mu_{i}")));
    for i in 0..l {
        for j in i..l {
            head.push(format!("R_{i}{j}"));
        }
    }
    head.push("normD".into());
    let mut out = head.join(",");
    out.push('\n');
    for e in bank.entries() {
        let mut vals = vec![e.j as f64, bank.n_current() as f64];
        vals.extend_from_slice(e.mean);
        for i in 0..l {
            for j in i..l {
                vals.push(e.cov[i * l + j]);
            }
        }
        vals.push(crate::linalg::frobenius(e.d));
        out.push_str(&join_row(vals));
        out.push('\n');
    }
    out
}

/// Ordered `key=value` lines.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Metadata {
    entries: Vec<(String, String)>,
}

impl Metadata {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        let key = key.into();
        let value = value.to_string().replace('\n', " ");
        if let Some(slot) = self.entries.iter_mut().find(|(k, _)| *k == key) {
            slot.1 = value;
        } else {
            self.entries.push((key, value));
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn parse(text: &str) -> Self {
        let entries = text
            .lines()
            .filter_map(|l| l.split_once('='))
            .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
            .collect();
        Metadata { entries }
    }
}
