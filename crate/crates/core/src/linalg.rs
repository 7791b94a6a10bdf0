//! Dense small-matrix helpers.
//!
//! Two layers live here: thin wrappers over nalgebra for the per-step filter
//! algebra, and allocation-free kernels on flat row-major `&[f64]` slices for
//! the smoother bank, whose inner loop runs once per retained lag per step.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Relative tolerance below which a negative eigenvalue is clipped to zero.
pub const PSD_CLIP_TOL: f64 = 1e-10;

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let mut inv = m.clone().cholesky()?.inverse();
    symmetrize(&mut inv);
    Some(inv)
}

/// Symmetrizes `m` and clips eigenvalues below `-PSD_CLIP_TOL * trace` to zero.
///
/// Returns `true` when a clip was applied.
pub fn enforce_psd(m: &mut DMatrix<f64>) -> bool {
    symmetrize(m);
    if m.clone().cholesky().is_some() {
        return false;
    }
    let threshold = -PSD_CLIP_TOL * m.trace().abs();
    let eig = SymmetricEigen::new(m.clone());
    if eig.eigenvalues.iter().all(|&v| v >= threshold) {
        return false;
    }
    let clipped = eig.eigenvalues.map(|v| if v < threshold { 0.0 } else { v });
    let mut rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    symmetrize(&mut rebuilt);
    *m = rebuilt;
    true
}

pub fn is_finite_matrix(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}

pub fn is_finite_vector(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Solves the continuous Lyapunov equation `A P + P Aᵀ + Q = 0` through its
/// Kronecker form. Intended for the small hidden dimensions used here.
pub fn lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let big = eye.kronecker(a) + a.kronecker(&eye);
    // column-major vec(Q)
    let rhs = DVector::from_iterator(n * n, q.iter().map(|v| -v));
    let sol = big.lu().solve(&rhs)?;
    let mut p = DMatrix::from_column_slice(n, n, sol.as_slice());
    symmetrize(&mut p);
    Some(p)
}

// ---------------------------------------------------------------------------
// Flat kernels (row-major, square n x n unless stated otherwise)
// ---------------------------------------------------------------------------

/// `out = a * b`
#[inline]
pub fn mat_mul(a: &[f64], b: &[f64], out: &mut [f64], n: usize) {
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                acc += a[i * n + k] * b[k * n + j];
            }
            out[i * n + j] = acc;
        }
    }
}

/// `out += a * v`
#[inline]
pub fn mat_vec_add(a: &[f64], v: &[f64], out: &mut [f64], n: usize) {
    for i in 0..n {
        let mut acc = 0.0;
        for k in 0..n {
            acc += a[i * n + k] * v[k];
        }
        out[i] += acc;
    }
}

/// `out = d * m * dᵀ` using `tmp` as scratch.
#[inline]
pub fn congruence(d: &[f64], m: &[f64], out: &mut [f64], tmp: &mut [f64], n: usize) {
    mat_mul(d, m, tmp, n);
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                acc += tmp[i * n + k] * d[j * n + k];
            }
            out[i * n + j] = acc;
        }
    }
}

pub fn frobenius(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// In-place lower Cholesky factorization. The strict upper triangle is zeroed.
pub fn cholesky_in_place(a: &mut [f64], n: usize) -> bool {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return false;
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
        for i in 0..j {
            a[i * n + j] = 0.0;
        }
    }
    true
}

/// Solves `L x = b` in place for lower-triangular `L`.
#[inline]
pub fn forward_substitute(l: &[f64], b: &mut [f64], n: usize) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// `out = L⁻¹ m L⁻ᵀ` for lower-triangular `L` and symmetric `m`.
pub fn whiten(l: &[f64], m: &[f64], out: &mut [f64], tmp: &mut [f64], n: usize) {
    // tmp = L⁻¹ m, column by column
    for c in 0..n {
        for i in 0..n {
            let mut s = m[i * n + c];
            for k in 0..i {
                s -= l[i * n + k] * tmp[k * n + c];
            }
            tmp[i * n + c] = s / l[i * n + i];
        }
    }
    // out = tmp L⁻ᵀ = (L⁻¹ tmpᵀ)ᵀ
    for r in 0..n {
        for i in 0..n {
            let mut s = tmp[r * n + i];
            for k in 0..i {
                s -= l[i * n + k] * out[r * n + k];
            }
            out[r * n + i] = s / l[i * n + i];
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (out[i * n + j] + out[j * n + i]);
            out[i * n + j] = v;
            out[j * n + i] = v;
        }
    }
}

/// Eigenvalues of a symmetric matrix. Closed forms for n ≤ 2.
pub fn sym_eigenvalues(m: &[f64], n: usize, out: &mut [f64]) {
    match n {
        0 => {}
        1 => out[0] = m[0],
        2 => {
            let (a, b, d) = (m[0], 0.5 * (m[1] + m[2]), m[3]);
            let mean = 0.5 * (a + d);
            let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
            out[0] = mean + rad;
            // product form keeps the small eigenvalue accurate
            let det = a * d - b * b;
            let big = out[0];
            out[1] = if big.abs() > 0.0 { det / big } else { mean - rad };
        }
        _ => {
            let mat = DMatrix::from_row_slice(n, n, m);
            let eig = SymmetricEigen::new(mat);
            out[..n].copy_from_slice(eig.eigenvalues.as_slice());
        }
    }
}

pub fn to_flat(m: &DMatrix<f64>) -> Vec<f64> {
    let (r, c) = m.shape();
    let mut out = Vec::with_capacity(r * c);
    for i in 0..r {
        for j in 0..c {
            out.push(m[(i, j)]);
        }
    }
    out
}

pub fn from_flat(flat: &[f64], n: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(n, n, flat)
}
