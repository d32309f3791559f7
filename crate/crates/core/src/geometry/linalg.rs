//! Small dense real-symmetric matrix kernels used per grid point.
//!
//! Matrices are row-major slices of length `n * n`.

/// Cholesky factorization; returns `None` unless the matrix is positive definite.
pub fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(sum > 0.0) {
                    return None;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Inverse and determinant of a positive-definite matrix.
pub fn inverse_spd(a: &[f64], n: usize) -> Option<(Vec<f64>, f64)> {
    if n == 2 {
        let det = a[0] * a[3] - a[1] * a[2];
        if !(a[0] > 0.0 && det > 0.0) {
            return None;
        }
        return Some((vec![a[3] / det, -a[1] / det, -a[2] / det, a[0] / det], det));
    }
    let l = cholesky(a, n)?;
    let det: f64 = (0..n).map(|i| l[i * n + i] * l[i * n + i]).product();
    // invert L, then A^-1 = L^-T L^-1
    let mut linv = vec![0.0; n * n];
    for i in 0..n {
        linv[i * n + i] = 1.0 / l[i * n + i];
        for j in 0..i {
            let mut sum = 0.0;
            for k in j..i {
                sum -= l[i * n + k] * linv[k * n + j];
            }
            linv[i * n + j] = sum / l[i * n + i];
        }
    }
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut sum = 0.0;
            for k in i.max(j)..n {
                sum += linv[k * n + i] * linv[k * n + j];
            }
            inv[i * n + j] = sum;
        }
    }
    Some((inv, det))
}

pub fn min_eigenvalue(a: &[f64], n: usize) -> f64 {
    match n {
        1 => a[0],
        2 => {
            let mean = 0.5 * (a[0] + a[3]);
            let half_gap = (0.25 * (a[0] - a[3]).powi(2) + a[1] * a[2]).max(0.0).sqrt();
            mean - half_gap
        }
        _ => {
            let m = nalgebra::DMatrix::from_row_slice(n, n, a);
            m.symmetric_eigenvalues().min()
        }
    }
}

/// Largest eigenvalue magnitude of a symmetric matrix.
pub fn spectral_radius(a: &[f64], n: usize) -> f64 {
    match n {
        1 => a[0].abs(),
        2 => {
            let mean = 0.5 * (a[0] + a[3]);
            let half_gap = (0.25 * (a[0] - a[3]).powi(2) + a[1] * a[2]).max(0.0).sqrt();
            (mean - half_gap).abs().max((mean + half_gap).abs())
        }
        _ => {
            let m = nalgebra::DMatrix::from_row_slice(n, n, a);
            m.symmetric_eigenvalues().amax()
        }
    }
}

/// `tr(P A Q B)`-style contraction `sum P_ij A_jk Q_kl B_li` with `P = Q = ginv`.
pub fn trace_product(ginv: &[f64], a: &[f64], b: &[f64], n: usize) -> f64 {
    let mut x = vec![0.0; n * n];
    let mut y = vec![0.0; n * n];
    matmul(ginv, a, &mut x, n);
    matmul(ginv, b, &mut y, n);
    let mut acc = 0.0;
    for i in 0..n {
        for k in 0..n {
            acc += x[i * n + k] * y[k * n + i];
        }
    }
    acc
}

pub fn trace_with(ginv: &[f64], a: &[f64], n: usize) -> f64 {
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += ginv[i * n + j] * a[j * n + i];
        }
    }
    acc
}

pub fn matmul(a: &[f64], b: &[f64], out: &mut [f64], n: usize) {
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

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_of_three_by_three() {
        let a = [4.0, 1.0, 0.5, 1.0, 3.0, 0.25, 0.5, 0.25, 2.0];
        let (inv, det) = inverse_spd(&a, 3).unwrap();
        let mut prod = [0.0; 9];
        matmul(&a, &inv, &mut prod, 3);
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((prod[i * 3 + j] - expect).abs() < 1e-14);
            }
        }
        let direct = 4.0 * (3.0 * 2.0 - 0.0625) - 1.0 * (2.0 - 0.125) + 0.5 * (0.25 - 1.5);
        assert!((det - direct).abs() < 1e-12);
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        assert!(inverse_spd(&[1.0, 2.0, 2.0, 1.0], 2).is_none());
        assert!(cholesky(&[1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 1.0], 3).is_none());
        assert!((min_eigenvalue(&[1.0, 2.0, 2.0, 1.0], 2) + 1.0).abs() < 1e-15);
    }
}
