//! Small dense routines for the q×q matrices that appear in the estimators.
//!
//! Matrices are stored row-major in flat slices: entry `(i, j)` of an
//! `n × n` matrix lives at `i * n + j`. The dimensions involved are tiny
//! (q is the number of unknown parameters), so everything here favours
//! determinism and zero dependencies over asymptotic speed.

use nalgebra::DMatrix;

/// Maximum number of sweeps for the cyclic Jacobi eigenvalue iteration.
pub const JACOBI_MAX_SWEEPS: usize = 100;
/// Off-diagonal convergence tolerance for the Jacobi iteration, relative to
/// the Frobenius norm of the input.
pub const JACOBI_TOL: f64 = 1e-12;

/// Row-major copy of a nalgebra matrix.
pub fn to_row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let (r, c) = m.shape();
    let mut out = Vec::with_capacity(r * c);
    for i in 0..r {
        for j in 0..c {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// Builds a nalgebra matrix from a row-major slice.
pub fn from_row_major(n_rows: usize, n_cols: usize, data: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(n_rows, n_cols, data)
}

/// Determinant of an `n × n` row-major matrix.
///
/// Cofactor expansion for `n <= 3`, Gaussian elimination with partial
/// pivoting above that.
pub fn determinant(a: &[f64], n: usize) -> f64 {
    debug_assert_eq!(a.len(), n * n);
    match n {
        0 => 1.0,
        1 => a[0],
        2 => a[0] * a[3] - a[1] * a[2],
        3 => {
            a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6])
                + a[2] * (a[3] * a[7] - a[4] * a[6])
        }
        _ => lu_determinant(a, n),
    }
}

fn lu_determinant(a: &[f64], n: usize) -> f64 {
    let mut m = a.to_vec();
    let mut det = 1.0;
    for col in 0..n {
        let mut pivot = col;
        let mut best = m[col * n + col].abs();
        for row in col + 1..n {
            let v = m[row * n + col].abs();
            if v > best {
                best = v;
                pivot = row;
            }
        }
        if best == 0.0 {
            return 0.0;
        }
        if pivot != col {
            for j in 0..n {
                m.swap(col * n + j, pivot * n + j);
            }
            det = -det;
        }
        let p = m[col * n + col];
        det *= p;
        for row in col + 1..n {
            let factor = m[row * n + col] / p;
            if factor != 0.0 {
                for j in col..n {
                    m[row * n + j] -= factor * m[col * n + j];
                }
            }
        }
    }
    det
}

/// Eigenvalues of a symmetric `n × n` row-major matrix, ascending.
///
/// Closed-form quadratic for `n == 2`, cyclic Jacobi rotations for `n > 2`.
/// Only the upper triangle is trusted to be meaningful; the input is
/// symmetrised before iterating.
pub fn symmetric_eigenvalues(a: &[f64], n: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), n * n);
    let mut eig = match n {
        0 => Vec::new(),
        1 => vec![a[0]],
        2 => {
            let (p, r) = (a[0], a[3]);
            let off = 0.5 * (a[1] + a[2]);
            let mean = 0.5 * (p + r);
            let half_diff = 0.5 * (p - r);
            let rad = half_diff.hypot(off);
            vec![mean - rad, mean + rad]
        }
        _ => jacobi_eigenvalues(a, n),
    };
    eig.sort_by(|x, y| x.total_cmp(y));
    eig
}

fn jacobi_eigenvalues(a: &[f64], n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            m[i * n + j] = 0.5 * (a[i * n + j] + a[j * n + i]);
        }
    }
    let scale = m.iter().map(|v| v * v).sum::<f64>().sqrt();
    if scale == 0.0 {
        return vec![0.0; n];
    }
    let threshold = JACOBI_TOL * scale;

    for _ in 0..JACOBI_MAX_SWEEPS {
        let off = off_diagonal_norm(&m, n);
        if off <= threshold {
            break;
        }
        for p in 0..n - 1 {
            for r in p + 1..n {
                let apr = m[p * n + r];
                if apr == 0.0 {
                    continue;
                }
                let app = m[p * n + p];
                let arr = m[r * n + r];
                let theta = (arr - app) / (2.0 * apr);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkr = m[k * n + r];
                    m[k * n + p] = c * mkp - s * mkr;
                    m[k * n + r] = s * mkp + c * mkr;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mrk = m[r * n + k];
                    m[p * n + k] = c * mpk - s * mrk;
                    m[r * n + k] = s * mpk + c * mrk;
                }
            }
        }
    }
    (0..n).map(|i| m[i * n + i]).collect()
}

fn off_diagonal_norm(m: &[f64], n: usize) -> f64 {
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                acc += m[i * n + j] * m[i * n + j];
            }
        }
    }
    acc.sqrt()
}

/// `out = a * b` for row-major `n × n` matrices.
pub fn mat_mul(a: &[f64], b: &[f64], n: usize, out: &mut [f64]) {
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for l in 0..n {
                acc += a[i * n + l] * b[l * n + j];
            }
            out[i * n + j] = acc;
        }
    }
}

/// `out = a * v`.
pub fn mat_vec(a: &[f64], v: &[f64], n: usize, out: &mut [f64]) {
    for i in 0..n {
        out[i] = (0..n).map(|j| a[i * n + j] * v[j]).sum();
    }
}

/// `out = aᵀ * v`.
pub fn mat_t_vec(a: &[f64], v: &[f64], n: usize, out: &mut [f64]) {
    for j in 0..n {
        out[j] = (0..n).map(|i| a[i * n + j] * v[i]).sum();
    }
}

/// `m mᵀ` for a row-major square matrix.
pub fn gram(m: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = (0..n).map(|l| m[i * n + l] * m[j * n + l]).sum();
        }
    }
    out
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}
