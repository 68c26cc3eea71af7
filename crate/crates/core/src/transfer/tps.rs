use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::colour::LabColor;
use crate::error::{Error, Result};

/// Radial kernel of the 3D biharmonic spline.
#[inline]
pub fn kernel(r: f64) -> f64 {
    -r
}

#[inline]
pub(crate) fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

/// Thin plate spline colour map
/// `phi(c) = A c + t + sum_i W_i k(|c - p_i|)` over fixed control points `p_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TpsTransform {
    pub control_points: Vec<[f64; 3]>,
    /// One row per control point.
    pub weights: Vec<[f64; 3]>,
    /// Row-major affine matrix.
    pub affine: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl TpsTransform {
    pub fn identity(control_points: Vec<[f64; 3]>) -> Self {
        let m = control_points.len();
        TpsTransform {
            control_points,
            weights: vec![[0.0; 3]; m],
            affine: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
        }
    }

    /// Regular `nl x na x nb` lattice spanning `[lo, hi]`.
    pub fn lattice(lo: [f64; 3], hi: [f64; 3], counts: [usize; 3]) -> Vec<[f64; 3]> {
        let axis = |k: usize, i: usize| {
            if counts[k] == 1 {
                0.5 * (lo[k] + hi[k])
            } else {
                lo[k] + (hi[k] - lo[k]) * i as f64 / (counts[k] - 1) as f64
            }
        };
        let mut pts = Vec::with_capacity(counts.iter().product());
        for i in 0..counts[0] {
            for j in 0..counts[1] {
                for k in 0..counts[2] {
                    pts.push([axis(0, i), axis(1, j), axis(2, k)]);
                }
            }
        }
        pts
    }

    /// Interpolating spline through `sources[i] -> targets[i]`, with the
    /// sources as control points.
    pub fn fit_exact(sources: &[[f64; 3]], targets: &[[f64; 3]]) -> Result<Self> {
        let m = sources.len();
        if m != targets.len() {
            return Err(Error::DimensionMismatch {
                expected: format!("{m} targets"),
                actual: targets.len().to_string(),
            });
        }
        if m < 5 {
            return Err(Error::invalid("exact spline fit needs at least 5 points"));
        }
        let mut sys = DMatrix::zeros(m + 4, m + 4);
        for i in 0..m {
            for j in 0..m {
                sys[(i, j)] = kernel(dist(sources[i], sources[j]));
            }
            sys[(i, m)] = 1.0;
            sys[(m, i)] = 1.0;
            for k in 0..3 {
                sys[(i, m + 1 + k)] = sources[i][k];
                sys[(m + 1 + k, i)] = sources[i][k];
            }
        }
        let lu = sys.lu();
        let mut tps = TpsTransform::identity(sources.to_vec());
        for ch in 0..3 {
            let mut rhs = DVector::zeros(m + 4);
            for i in 0..m {
                rhs[i] = targets[i][ch];
            }
            let sol = lu
                .solve(&rhs)
                .ok_or_else(|| Error::invalid("control points are degenerate"))?;
            for i in 0..m {
                tps.weights[i][ch] = sol[i];
            }
            tps.translation[ch] = sol[m];
            for k in 0..3 {
                tps.affine[ch][k] = sol[m + 1 + k];
            }
        }
        Ok(tps)
    }

    #[inline]
    pub fn apply_array(&self, c: [f64; 3]) -> [f64; 3] {
        let mut out = self.translation;
        for (o, row) in out.iter_mut().zip(&self.affine) {
            *o += row[0] * c[0] + row[1] * c[1] + row[2] * c[2];
        }
        for (p, w) in self.control_points.iter().zip(&self.weights) {
            let k = kernel(dist(c, *p));
            out[0] += w[0] * k;
            out[1] += w[1] * k;
            out[2] += w[2] * k;
        }
        out
    }

    pub fn apply(&self, c: LabColor) -> LabColor {
        LabColor::from_array(self.apply_array(c.to_array()))
    }

    /// Largest violation of `sum_i W_i = 0` and `sum_i W_i p_i^T = 0`.
    pub fn side_condition_residual(&self) -> f64 {
        let mut sums = [[0.0; 4]; 3];
        for (p, w) in self.control_points.iter().zip(&self.weights) {
            for ch in 0..3 {
                sums[ch][0] += w[ch];
                for k in 0..3 {
                    sums[ch][k + 1] += w[ch] * p[k];
                }
            }
        }
        sums.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let tps: TpsTransform = serde_json::from_str(s)?;
        if tps.weights.len() != tps.control_points.len() {
            return Err(Error::invalid("weights and control points differ in length"));
        }
        Ok(tps)
    }
}

/// Kernel matrix `K_ij = k(|p_i - p_j|)`.
pub(crate) fn kernel_matrix(points: &[[f64; 3]]) -> DMatrix<f64> {
    let m = points.len();
    DMatrix::from_fn(m, m, |i, j| kernel(dist(points[i], points[j])))
}
