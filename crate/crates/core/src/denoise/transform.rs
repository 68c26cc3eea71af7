//! Orthonormal 1D transforms and their separable application to stacks.

use std::f64::consts::PI;

/// Row-major `n x n` orthonormal DCT-II matrix.
pub fn dct_matrix(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for k in 0..n {
        let scale = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
        for i in 0..n {
            m[k * n + i] = scale * (PI * (2 * i + 1) as f64 * k as f64 / (2 * n) as f64).cos();
        }
    }
    m
}

/// Row-major orthonormal Haar matrix for a power-of-two `n`, coarsest row first.
pub fn haar_matrix(n: usize) -> Vec<f64> {
    assert!(n.is_power_of_two(), "Haar size must be a power of two");
    if n == 1 {
        return vec![1.0];
    }
    let half = haar_matrix(n / 2);
    let h = n / 2;
    let mut m = vec![0.0; n * n];
    let s = std::f64::consts::FRAC_1_SQRT_2;
    // scaling rows: the half-size basis applied to pairwise sums
    for r in 0..h {
        for c in 0..h {
            m[r * n + 2 * c] = half[r * h + c] * s;
            m[r * n + 2 * c + 1] = half[r * h + c] * s;
        }
    }
    // finest detail rows
    for r in 0..h {
        m[(h + r) * n + 2 * r] = s;
        m[(h + r) * n + 2 * r + 1] = -s;
    }
    m
}

/// Applies `matrix` (or its transpose when `inverse`) along `axis` of a
/// row-major array with shape `dims`.
pub fn apply_axis(data: &mut [f64], dims: &[usize], axis: usize, matrix: &[f64], inverse: bool) {
    let n = dims[axis];
    if n == 1 {
        return;
    }
    let inner: usize = dims[axis + 1..].iter().product();
    let outer: usize = dims[..axis].iter().product();
    let mut line = vec![0.0; n];
    let mut out = vec![0.0; n];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * n * inner + i;
            for k in 0..n {
                line[k] = data[base + k * inner];
            }
            for (k, slot) in out.iter_mut().enumerate() {
                let mut acc = 0.0;
                for j in 0..n {
                    let m = if inverse { matrix[j * n + k] } else { matrix[k * n + j] };
                    acc += m * line[j];
                }
                *slot = acc;
            }
            for k in 0..n {
                data[base + k * inner] = out[k];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn is_orthonormal(m: &[f64], n: usize) -> bool {
        (0..n).all(|a| {
            (0..n).all(|b| {
                let dot: f64 = (0..n).map(|i| m[a * n + i] * m[b * n + i]).sum();
                (dot - if a == b { 1.0 } else { 0.0 }).abs() < 1e-12
            })
        })
    }

    #[test]
    fn matrices_are_orthonormal() {
        for n in [1, 2, 3, 5, 8, 16] {
            assert!(is_orthonormal(&dct_matrix(n), n), "dct {n}");
        }
        for n in [1, 2, 4, 8, 32] {
            assert!(is_orthonormal(&haar_matrix(n), n), "haar {n}");
        }
    }

    #[test]
    fn haar_first_row_is_the_mean() {
        let h = haar_matrix(8);
        assert!(h[..8].iter().all(|&v| (v - 8f64.sqrt().recip()).abs() < 1e-15));
    }

    #[test]
    fn axis_round_trip() {
        let dims = [2, 3, 4];
        let orig: Vec<f64> = (0..24).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut data = orig.clone();
        let d = dct_matrix(3);
        apply_axis(&mut data, &dims, 1, &d, false);
        apply_axis(&mut data, &dims, 1, &d, true);
        for (a, b) in orig.iter().zip(&data) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
