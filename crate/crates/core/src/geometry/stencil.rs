//! Fourth-order central differences on a doubly periodic square grid.
//!
//! Fields are stored row-major with the first coordinate varying fastest:
//! the sample at `(x1, x2) = (i h, j h)` lives at index `i + n * j`.

/// First-derivative weights at offsets -2..=2, to be divided by `h`.
const D1: [f64; 5] = [1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0];
/// Second-derivative weights at offsets -2..=2, to be divided by `h^2`.
const D2: [f64; 5] = [
    -1.0 / 12.0,
    16.0 / 12.0,
    -30.0 / 12.0,
    16.0 / 12.0,
    -1.0 / 12.0,
];

fn apply(f: &[f64], n: usize, axis: usize, weights: &[f64; 5], scale: f64) -> Vec<f64> {
    debug_assert_eq!(f.len(), n * n);
    let mut out = vec![0.0; n * n];
    let wrap = |i: usize, s: isize| ((i as isize + s).rem_euclid(n as isize)) as usize;
    // weights sum to zero, so differences against the centre are used:
    // constant fields then differentiate to exactly zero
    for j in 0..n {
        for i in 0..n {
            let centre = f[i + n * j];
            let mut acc = 0.0;
            for (w, s) in weights.iter().zip(-2isize..=2) {
                if *w == 0.0 {
                    continue;
                }
                let idx = if axis == 0 {
                    wrap(i, s) + n * j
                } else {
                    i + n * wrap(j, s)
                };
                acc += w * (f[idx] - centre);
            }
            out[i + n * j] = acc * scale;
        }
    }
    out
}

pub fn d1(f: &[f64], n: usize, h: f64, axis: usize) -> Vec<f64> {
    apply(f, n, axis, &D1, 1.0 / h)
}

pub fn d2(f: &[f64], n: usize, h: f64, axis: usize) -> Vec<f64> {
    apply(f, n, axis, &D2, 1.0 / (h * h))
}

/// Real Hessian of a periodic field: `(f_11, f_12, f_22)`.
///
/// Diagonal entries use the five-point second-derivative stencil, the mixed
/// entry is the composition of the two first-derivative stencils.
pub struct Hessian {
    pub xx: Vec<f64>,
    pub xy: Vec<f64>,
    pub yy: Vec<f64>,
}

pub fn hessian(f: &[f64], n: usize, h: f64) -> Hessian {
    let fx = d1(f, n, h, 0);
    Hessian {
        xx: d2(f, n, h, 0),
        xy: d1(&fx, n, h, 1),
        yy: d2(f, n, h, 1),
    }
}

/// Fourier symbol of the second-derivative stencil for wavenumber `k` on `n` points.
pub fn d2_symbol(k: usize, n: usize, h: f64) -> f64 {
    let theta = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
    (-2.0 * (2.0 * theta).cos() + 32.0 * theta.cos() - 30.0) / (12.0 * h * h)
}

/// Exact exponential `exp(tau * D2)` of the periodic second-derivative stencil,
/// returned as the first column of the circulant matrix.
pub fn heat_kernel(tau: f64, n: usize, h: f64) -> Vec<f64> {
    let growth: Vec<f64> = (0..n).map(|k| (tau * d2_symbol(k, n, h)).exp()).collect();
    (0..n)
        .map(|d| {
            let mut acc = 0.0;
            for (k, gk) in growth.iter().enumerate() {
                // index arithmetic keeps the cosine argument exact for all (k, d)
                let m = (k * d) % n;
                acc += gk * (2.0 * std::f64::consts::PI * m as f64 / n as f64).cos();
            }
            acc / n as f64
        })
        .collect()
}

/// Applies the separable circulant operator `K ⊗ K` to a field.
pub fn apply_separable(kernel: &[f64], f: &[f64], n: usize) -> Vec<f64> {
    // rev[n - 1 - i + m] = kernel[(i - m) mod n], contiguous in m
    let rev: Vec<f64> = (0..2 * n - 1)
        .map(|q| kernel[(2 * n - 1 - q) % n])
        .collect();
    let mut tmp = vec![0.0; n * n];
    for j in 0..n {
        let row = &f[n * j..n * (j + 1)];
        let out = &mut tmp[n * j..n * (j + 1)];
        for (i, o) in out.iter_mut().enumerate() {
            let window = &rev[n - 1 - i..2 * n - 1 - i];
            *o = window.iter().zip(row).map(|(k, v)| k * v).sum();
        }
    }
    // along the second axis whole rows are combined
    let mut out = vec![0.0; n * n];
    for j in 0..n {
        let target = &mut out[n * j..n * (j + 1)];
        for m in 0..n {
            let w = kernel[(j + n - m) % n];
            let source = &tmp[n * m..n * (m + 1)];
            for (o, v) in target.iter_mut().zip(source) {
                *o += w * v;
            }
        }
    }
    out
}
