use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::correspondence::{CorrespondenceSet, N_MIN};
use crate::error::{Error, Result};

use super::gmm::pair_density;
use super::tps::{dist, kernel, kernel_matrix, TpsTransform};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransferConfig {
    /// Annealing bandwidths in LAB units, strictly decreasing.
    pub h_schedule: Vec<f64>,
    pub inner_iters: usize,
    /// Control lattice size along L, a and b.
    pub control_grid: [usize; 3],
    pub lambda_reg: f64,
    pub n_min: usize,
}

impl Default for TransferConfig {
    fn default() -> Self {
        TransferConfig {
            h_schedule: vec![20.0, 10.0, 5.0, 2.0],
            inner_iters: 50,
            control_grid: [6, 6, 6],
            lambda_reg: 1e-3,
            n_min: N_MIN,
        }
    }
}

impl TransferConfig {
    pub fn validate(&self) -> Result<()> {
        if self.h_schedule.is_empty() || self.h_schedule.iter().any(|&h| !(h > 0.0)) {
            return Err(Error::invalid("h_schedule must hold positive bandwidths"));
        }
        if self.h_schedule.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::invalid("h_schedule must be strictly decreasing"));
        }
        if self.control_grid.iter().any(|&c| c < 2) {
            return Err(Error::invalid("control_grid needs at least 2 nodes per axis"));
        }
        if !(self.lambda_reg >= 0.0) {
            return Err(Error::invalid("lambda_reg must be non-negative"));
        }
        Ok(())
    }
}

/// Cost after every accepted step, one list per bandwidth.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitTrace {
    pub stages: Vec<StageTrace>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTrace {
    pub h: f64,
    pub costs: Vec<f64>,
}

/// Control lattice over the bounding box of the target colours, widened to at
/// least `MIN_SPAN` LAB units per axis.
fn control_points(corr: &CorrespondenceSet, counts: [usize; 3]) -> Vec<[f64; 3]> {
    const MIN_SPAN: f64 = 10.0;
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in &corr.pairs {
        let c = p.c_t.to_array();
        for k in 0..3 {
            lo[k] = lo[k].min(c[k]);
            hi[k] = hi[k].max(c[k]);
        }
    }
    for k in 0..3 {
        let pad = (MIN_SPAN - (hi[k] - lo[k])).max(0.0) / 2.0;
        lo[k] -= pad;
        hi[k] += pad;
    }
    TpsTransform::lattice(lo, hi, counts)
}

/// Orthonormal basis of the weight vectors satisfying the side conditions.
fn side_condition_basis(points: &[[f64; 3]]) -> DMatrix<f64> {
    let m = points.len();
    let p = DMatrix::from_fn(m, 4, |i, j| if j == 0 { 1.0 } else { points[i][j - 1] });
    let gram = p.transpose() * &p;
    let inv = gram
        .try_inverse()
        .expect("control lattice is never coplanar");
    let proj = DMatrix::identity(m, m) - &p * inv * p.transpose();
    let eig = SymmetricEigen::new(proj);
    let keep: Vec<usize> = (0..m).filter(|&i| eig.eigenvalues[i] > 0.5).collect();
    DMatrix::from_fn(m, keep.len(), |i, j| eig.eigenvectors[(i, keep[j])])
}

/// The optimization works on `Theta`, a `D x 3` matrix whose column `j` holds
/// output channel `j`'s coefficients over the features
/// `z = [N^T psi(c), c, 1]`, where `psi` is the kernel vector and `N` the side
/// condition basis. Every `Theta` maps to a spline satisfying the conditions.
struct Problem {
    z: DMatrix<f64>,
    targets: DMatrix<f64>,
    basis: DMatrix<f64>,
    reg: DMatrix<f64>,
    q: usize,
    n: f64,
    lambda: f64,
}

impl Problem {
    fn new(corr: &CorrespondenceSet, points: &[[f64; 3]], lambda: f64) -> Self {
        let basis = side_condition_basis(points);
        let q = basis.ncols();
        let n = corr.len();
        let psi = DMatrix::from_fn(points.len(), n, |i, k| kernel(dist(corr.pairs[k].c_t.to_array(), points[i])));
        let projected = basis.transpose() * psi;
        let mut z = DMatrix::zeros(q + 4, n);
        z.view_mut((0, 0), (q, n)).copy_from(&projected);
        for (k, pair) in corr.pairs.iter().enumerate() {
            let c = pair.c_t.to_array();
            for j in 0..3 {
                z[(q + j, k)] = c[j];
            }
            z[(q + 3, k)] = 1.0;
        }
        let targets = DMatrix::from_fn(3, n, |j, k| corr.pairs[k].c_p.to_array()[j]);
        let reg = basis.transpose() * kernel_matrix(points) * &basis;
        Problem {
            z,
            targets,
            basis,
            reg,
            q,
            n: n as f64,
            lambda,
        }
    }

    fn identity(&self) -> DMatrix<f64> {
        let mut theta = DMatrix::zeros(self.q + 4, 3);
        for j in 0..3 {
            theta[(self.q + j, j)] = 1.0;
        }
        theta
    }

    fn residuals(&self, theta: &DMatrix<f64>) -> DMatrix<f64> {
        theta.transpose() * &self.z - &self.targets
    }

    fn reg_term(&self, theta: &DMatrix<f64>) -> f64 {
        if self.lambda == 0.0 {
            return 0.0;
        }
        let v = theta.rows(0, self.q);
        self.lambda * (v.transpose() * &self.reg * v).trace()
    }

    fn cost(&self, theta: &DMatrix<f64>, h: f64) -> f64 {
        let r = self.residuals(theta);
        let sum: f64 = r.column_iter().map(|c| pair_density(c.norm_squared(), h)).sum();
        -sum / (self.n * self.n) + self.reg_term(theta)
    }

    fn gradient(&self, theta: &DMatrix<f64>, h: f64) -> DMatrix<f64> {
        let mut g = self.residuals(theta);
        let scale = 1.0 / (2.0 * h * h * self.n * self.n);
        for mut col in g.column_iter_mut() {
            let d = pair_density(col.norm_squared(), h) * scale;
            col *= d;
        }
        let mut grad = &self.z * g.transpose();
        if self.lambda != 0.0 {
            let v = theta.rows(0, self.q).into_owned();
            let rg = &self.reg * v * (2.0 * self.lambda);
            let mut top = grad.rows_mut(0, self.q);
            top += rg;
        }
        grad
    }

    /// Majorizer of the cost Hessian, shared by the three output channels.
    fn metric(&self, h: f64) -> DMatrix<f64> {
        let bound = (4.0 * std::f64::consts::PI * h * h).powf(-1.5) / (2.0 * h * h * self.n * self.n);
        let mut m = &self.z * self.z.transpose() * bound;
        if self.lambda != 0.0 {
            let mut top = m.view_mut((0, 0), (self.q, self.q));
            top += &self.reg * (2.0 * self.lambda);
        }
        let ridge = 1e-10 * m.trace().max(f64::MIN_POSITIVE) / m.nrows() as f64;
        for i in 0..m.nrows() {
            m[(i, i)] += ridge;
        }
        m
    }

    fn into_transform(&self, theta: &DMatrix<f64>, points: Vec<[f64; 3]>) -> TpsTransform {
        let w = &self.basis * theta.rows(0, self.q);
        let mut tps = TpsTransform::identity(points);
        for (i, row) in tps.weights.iter_mut().enumerate() {
            for j in 0..3 {
                row[j] = w[(i, j)];
            }
        }
        for j in 0..3 {
            for k in 0..3 {
                tps.affine[j][k] = theta[(self.q + k, j)];
            }
            tps.translation[j] = theta[(self.q + 3, j)];
        }
        tps
    }
}

/// Fits the colour map registering the target colours onto the palette
/// colours, annealing the bandwidth through `cfg.h_schedule`.
pub fn fit_transfer(corr: &CorrespondenceSet, cfg: &TransferConfig) -> Result<TpsTransform> {
    fit_transfer_traced(corr, cfg).map(|(tps, _)| tps)
}

pub fn fit_transfer_traced(corr: &CorrespondenceSet, cfg: &TransferConfig) -> Result<(TpsTransform, FitTrace)> {
    cfg.validate()?;
    corr.require(cfg.n_min.max(1))?;
    let points = control_points(corr, cfg.control_grid);
    let problem = Problem::new(corr, &points, cfg.lambda_reg);
    let mut theta = problem.identity();
    let mut trace = FitTrace::default();

    for &h in &cfg.h_schedule {
        let chol = problem
            .metric(h)
            .cholesky()
            .ok_or_else(|| Error::invalid("colour transfer metric is not positive definite"))?;
        let mut cost = problem.cost(&theta, h);
        let mut stage = StageTrace { h, costs: vec![cost] };
        for _ in 0..cfg.inner_iters {
            let grad = problem.gradient(&theta, h);
            let dir = chol.solve(&grad);
            let slope = grad.dot(&dir);
            if !(slope > 0.0) {
                break;
            }
            let mut alpha = 8.0;
            let mut accepted = None;
            for _ in 0..40 {
                let trial = &theta - &dir * alpha;
                let c = problem.cost(&trial, h);
                if c <= cost - 1e-4 * alpha * slope {
                    accepted = Some((trial, c));
                    break;
                }
                alpha *= 0.5;
            }
            match accepted {
                Some((t, c)) => {
                    theta = t;
                    cost = c;
                    stage.costs.push(c);
                }
                None => break,
            }
        }
        trace.stages.push(stage);
    }
    Ok((problem.into_transform(&theta, points), trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transfer::gmm::gmm_cost;
    use crate::transfer::set_from;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn colours(seed: u64, n: usize) -> Vec<[f64; 3]> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| [rng.random_range(20.0..80.0), rng.random_range(-40.0..40.0), rng.random_range(-40.0..40.0)])
            .collect()
    }

    fn gamut_grid() -> Vec<[f64; 3]> {
        TpsTransform::lattice([0.0, -100.0, -100.0], [100.0, 100.0, 100.0], [11, 11, 11])
    }

    #[test]
    fn identical_colours_give_identity() {
        let cs = colours(1, 120);
        let set = set_from(&cs.iter().map(|&c| (c, c)).collect::<Vec<_>>());
        let tps = fit_transfer(&set, &TransferConfig::default()).unwrap();
        let worst = gamut_grid()
            .into_iter()
            .map(|c| dist(tps.apply_array(c), c))
            .fold(0.0, f64::max);
        assert!(worst < 0.5, "max deviation {worst}");
    }

    #[test]
    fn recovers_a_lightness_shift() {
        let cs = colours(2, 150);
        let pairs: Vec<_> = cs.iter().map(|&c| (c, [c[0] + 15.0, c[1], c[2]])).collect();
        let set = set_from(&pairs);
        let tps = fit_transfer(&set, &TransferConfig::default()).unwrap();
        let mean = pairs.iter().map(|(t, p)| dist(tps.apply_array(*t), *p)).sum::<f64>() / pairs.len() as f64;
        assert!(mean < 1.0, "mean error {mean}");
    }

    #[test]
    fn recovers_a_diagonal_affine_map() {
        let cs = colours(3, 200);
        let map = |c: [f64; 3]| [1.1 * c[0], 0.9 * c[1], c[2]];
        let set = set_from(&cs.iter().map(|&c| (c, map(c))).collect::<Vec<_>>());
        let tps = fit_transfer(&set, &TransferConfig::default()).unwrap();
        // sample the interior of the data's hull
        let inner = TpsTransform::lattice([30.0, -25.0, -25.0], [70.0, 25.0, 25.0], [5, 5, 5]);
        for c in inner {
            let err = dist(tps.apply_array(c), map(c));
            assert!(err < 2.0, "{c:?}: {err}");
        }
    }

    #[test]
    fn costs_never_increase_within_a_stage() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cs = colours(4, 100);
        let pairs: Vec<_> = cs
            .iter()
            .map(|&c| {
                let noise = [rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0)];
                (c, [0.8 * c[0] + 12.0 + noise[0], c[1] - 5.0 + noise[1], 1.2 * c[2] + noise[2]])
            })
            .collect();
        let set = set_from(&pairs);
        let cfg = TransferConfig::default();
        let (tps, trace) = fit_transfer_traced(&set, &cfg).unwrap();
        assert_eq!(trace.stages.len(), 4);
        for stage in &trace.stages {
            assert!(stage.costs.windows(2).all(|w| w[1] <= w[0]), "h = {}", stage.h);
        }
        let last = trace.stages.last().unwrap();
        let direct = gmm_cost(&tps, &set, last.h, cfg.lambda_reg).unwrap();
        assert!((direct - last.costs.last().unwrap()).abs() < 1e-9 * direct.abs());
        assert!(tps.side_condition_residual() < 1e-6);
    }

    #[test]
    fn rejects_small_sets_and_bad_schedules() {
        let cs = colours(5, 10);
        let set = set_from(&cs.iter().map(|&c| (c, c)).collect::<Vec<_>>());
        assert!(matches!(
            fit_transfer(&set, &TransferConfig::default()),
            Err(Error::InsufficientCorrespondences { found: 10, required: 50 })
        ));
        let cfg = TransferConfig {
            h_schedule: vec![5.0, 10.0],
            ..TransferConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
