use std::f64::consts::PI;

use crate::correspondence::CorrespondenceSet;
use crate::error::{Error, Result};

use super::tps::{dist, kernel, kernel_matrix, TpsTransform};

/// Density of `N(0; r, 2 h^2 I)` in three dimensions.
#[inline]
pub fn pair_density(r2: f64, h: f64) -> f64 {
    (4.0 * PI * h * h).powf(-1.5) * (-r2 / (4.0 * h * h)).exp()
}

fn check(corr: &CorrespondenceSet, h: f64) -> Result<()> {
    if !(h > 0.0) {
        return Err(Error::invalid(format!("bandwidth must be positive, got {h}")));
    }
    if corr.is_empty() {
        return Err(Error::InsufficientCorrespondences { found: 0, required: 1 });
    }
    Ok(())
}

/// `lambda * tr(W^T K W)`.
pub fn regularizer(tps: &TpsTransform, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    let p = &tps.control_points;
    let mut total = 0.0;
    for (i, wi) in tps.weights.iter().enumerate() {
        for (j, wj) in tps.weights.iter().enumerate() {
            let k = kernel(dist(p[i], p[j]));
            total += k * (wi[0] * wj[0] + wi[1] * wj[1] + wi[2] * wj[2]);
        }
    }
    lambda * total
}

/// Negative inner product between the transformed target mixture and the
/// palette mixture, paired per correspondence, plus the bending penalty.
pub fn gmm_cost(tps: &TpsTransform, corr: &CorrespondenceSet, h: f64, lambda: f64) -> Result<f64> {
    check(corr, h)?;
    let n = corr.len() as f64;
    let mut sum = 0.0;
    for pair in &corr.pairs {
        let phi = tps.apply_array(pair.c_t.to_array());
        let p = pair.c_p.to_array();
        let r2 = (0..3).map(|k| (phi[k] - p[k]).powi(2)).sum::<f64>();
        sum += pair_density(r2, h);
    }
    Ok(-sum / (n * n) + regularizer(tps, lambda))
}

/// Gradient of [`gmm_cost`] with respect to the spline parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct TpsGradient {
    pub weights: Vec<[f64; 3]>,
    pub affine: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

pub fn gmm_cost_gradient(tps: &TpsTransform, corr: &CorrespondenceSet, h: f64, lambda: f64) -> Result<TpsGradient> {
    check(corr, h)?;
    let n = corr.len() as f64;
    let m = tps.control_points.len();
    let mut grad = TpsGradient {
        weights: vec![[0.0; 3]; m],
        affine: [[0.0; 3]; 3],
        translation: [0.0; 3],
    };
    for pair in &corr.pairs {
        let c = pair.c_t.to_array();
        let phi = tps.apply_array(c);
        let p = pair.c_p.to_array();
        let r = [phi[0] - p[0], phi[1] - p[1], phi[2] - p[2]];
        let r2 = r[0] * r[0] + r[1] * r[1] + r[2] * r[2];
        let scale = pair_density(r2, h) / (2.0 * h * h * n * n);
        let g = r.map(|v| v * scale);
        for ch in 0..3 {
            grad.translation[ch] += g[ch];
            for k in 0..3 {
                grad.affine[ch][k] += g[ch] * c[k];
            }
        }
        for (i, cp) in tps.control_points.iter().enumerate() {
            let k = kernel(dist(c, *cp));
            for ch in 0..3 {
                grad.weights[i][ch] += k * g[ch];
            }
        }
    }
    if lambda != 0.0 {
        let kmat = kernel_matrix(&tps.control_points);
        for i in 0..m {
            for j in 0..m {
                for ch in 0..3 {
                    grad.weights[i][ch] += 2.0 * lambda * kmat[(i, j)] * tps.weights[j][ch];
                }
            }
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::colour::LabColor;
    use crate::transfer::set_from;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_lab(rng: &mut ChaCha8Rng) -> [f64; 3] {
        [rng.random_range(0.0..100.0), rng.random_range(-60.0..60.0), rng.random_range(-60.0..60.0)]
    }

    fn random_instance(seed: u64, n: usize) -> (TpsTransform, CorrespondenceSet) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cps = TpsTransform::lattice([0.0, -60.0, -60.0], [100.0, 60.0, 60.0], [3, 3, 3]);
        let mut tps = TpsTransform::identity(cps);
        for w in tps.weights.iter_mut() {
            *w = [rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05)];
        }
        for row in tps.affine.iter_mut() {
            for v in row.iter_mut() {
                *v += rng.random_range(-0.1..0.1);
            }
        }
        tps.translation = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
        let pairs: Vec<_> = (0..n)
            .map(|_| {
                let t = random_lab(&mut rng);
                let phi = tps.apply_array(t);
                let p = [
                    phi[0] + rng.random_range(-8.0..8.0),
                    phi[1] + rng.random_range(-8.0..8.0),
                    phi[2] + rng.random_range(-8.0..8.0),
                ];
                (t, p)
            })
            .collect();
        (tps, set_from(&pairs))
    }

    #[test]
    fn single_matched_pair_at_unit_bandwidth() {
        let c = [50.0, 10.0, -10.0];
        let set = set_from(&[(c, c)]);
        let tps = TpsTransform::identity(vec![[0.0; 3]; 5]);
        let cost = gmm_cost(&tps, &set, 1.0, 0.0).unwrap();
        assert!((cost + (4.0 * PI).powf(-1.5)).abs() < 1e-15);
        assert!((cost + 0.0224484).abs() < 1e-7);
        let g = gmm_cost_gradient(&tps, &set, 1.0, 0.0).unwrap();
        assert_eq!(g.translation, [0.0; 3]);
    }

    #[test]
    fn distant_residual_vanishes() {
        let set = set_from(&[([50.0, 0.0, 0.0], [50.0 + 100.0 * 2.0, 0.0, 0.0])]);
        let tps = TpsTransform::identity(vec![[0.0; 3]; 5]);
        assert!(gmm_cost(&tps, &set, 2.0, 0.0).unwrap().abs() < 1e-12);
    }

    #[test]
    fn bad_bandwidth_and_empty_set() {
        let tps = TpsTransform::identity(vec![[0.0; 3]; 5]);
        let set = set_from(&[([0.0; 3], [0.0; 3])]);
        assert!(gmm_cost(&tps, &set, 0.0, 0.0).is_err());
        assert!(gmm_cost_gradient(&tps, &set, -1.0, 0.0).is_err());
        assert!(gmm_cost(&tps, &set_from(&[]), 1.0, 0.0).is_err());
    }

    #[test]
    fn matches_direct_summation() {
        let (tps, set) = random_instance(11, 20);
        let h = 6.0;
        let n = 20.0;
        let mut direct = 0.0;
        for pair in &set.pairs {
            let c = pair.c_t.to_array();
            let mut phi = [0.0; 3];
            for ch in 0..3 {
                phi[ch] = tps.translation[ch]
                    + tps.affine[ch][0] * c[0]
                    + tps.affine[ch][1] * c[1]
                    + tps.affine[ch][2] * c[2];
                for (w, p) in tps.weights.iter().zip(&tps.control_points) {
                    let r = ((c[0] - p[0]).powi(2) + (c[1] - p[1]).powi(2) + (c[2] - p[2]).powi(2)).sqrt();
                    phi[ch] -= w[ch] * r;
                }
            }
            let d: Vec<f64> = (0..3).map(|k| phi[k] - pair.c_p.to_array()[k]).collect();
            let sq = d.iter().map(|v| v * v).sum::<f64>();
            let var = 2.0 * h * h;
            let density = (2.0 * PI * var).powf(-1.5) * (-sq / (2.0 * var)).exp();
            direct -= density / (n * n);
        }
        let cost = gmm_cost(&tps, &set, h, 0.0).unwrap();
        assert!((cost - direct).abs() < 1e-10, "{cost} vs {direct}");
    }

    #[test]
    fn merged_set_cost_scales_as_inverse_square_count() {
        let (tps, a) = random_instance(12, 30);
        let (_, b) = random_instance(13, 20);
        let merged = crate::correspondence::merge_correspondences(&a, &b).unwrap();
        let h = 8.0;
        let ca = gmm_cost(&tps, &a, h, 0.0).unwrap();
        let cb = gmm_cost(&tps, &b, h, 0.0).unwrap();
        let cm = gmm_cost(&tps, &merged, h, 0.0).unwrap();
        let expect = (30.0f64.powi(2) * ca + 20.0f64.powi(2) * cb) / 50.0f64.powi(2);
        assert!((cm - expect).abs() < 1e-15);
    }

    #[test]
    fn regularizer_gradient_is_twice_lambda_k_w() {
        let (tps, _) = random_instance(14, 1);
        let far = set_from(&[([0.0; 3], [1e6, 0.0, 0.0])]);
        let lambda = 0.3;
        let g = gmm_cost_gradient(&tps, &far, 1.0, lambda).unwrap();
        let k = kernel_matrix(&tps.control_points);
        for i in 0..tps.weights.len() {
            for ch in 0..3 {
                let kw: f64 = (0..tps.weights.len()).map(|j| k[(i, j)] * tps.weights[j][ch]).sum();
                assert!((g.weights[i][ch] - 2.0 * lambda * kw).abs() < 1e-12);
            }
        }
    }

    fn perturbed(tps: &TpsTransform, which: usize, delta: f64) -> TpsTransform {
        let mut out = tps.clone();
        let m = tps.weights.len();
        if which < 3 * m {
            out.weights[which / 3][which % 3] += delta;
        } else if which < 3 * m + 9 {
            let k = which - 3 * m;
            out.affine[k / 3][k % 3] += delta;
        } else {
            out.translation[which - 3 * m - 9] += delta;
        }
        out
    }

    fn flat(g: &TpsGradient) -> Vec<f64> {
        let mut v: Vec<f64> = g.weights.iter().flatten().copied().collect();
        v.extend(g.affine.iter().flatten());
        v.extend(g.translation);
        v
    }

    fn finite_difference_error(seed: u64) -> f64 {
        let (tps, set) = random_instance(seed, 15);
        let (h, lambda) = (7.0, 1e-3);
        let analytic = flat(&gmm_cost_gradient(&tps, &set, h, lambda).unwrap());
        let step = 1e-4;
        let numeric: Vec<f64> = (0..analytic.len())
            .map(|i| {
                let up = gmm_cost(&perturbed(&tps, i, step), &set, h, lambda).unwrap();
                let down = gmm_cost(&perturbed(&tps, i, -step), &set, h, lambda).unwrap();
                (up - down) / (2.0 * step)
            })
            .collect();
        let diff: f64 = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
        diff / norm
    }

    #[test]
    fn gradient_matches_central_differences() {
        for seed in 0..100 {
            let err = finite_difference_error(1000 + seed);
            assert!(err < 1e-5, "seed {seed}: relative error {err:e}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn cost_is_permutation_invariant(seed in 0u64..1000, rot in 1usize..19) {
            let (tps, set) = random_instance(seed, 20);
            let mut shuffled = set.clone();
            shuffled.pairs.rotate_left(rot);
            shuffled.pairs.swap(0, 7);
            let a = gmm_cost(&tps, &set, 5.0, 1e-3).unwrap();
            let b = gmm_cost(&tps, &shuffled, 5.0, 1e-3).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300));
        }

        #[test]
        fn cost_is_translation_consistent(seed in 0u64..1000, dl in -20.0f64..20.0, da in -20.0f64..20.0, db in -20.0f64..20.0) {
            let (tps, set) = random_instance(seed, 20);
            let delta = [dl, da, db];
            let mut moved = set.clone();
            for p in moved.pairs.iter_mut() {
                let t = p.c_t.to_array();
                let q = p.c_p.to_array();
                p.c_t = LabColor::from_array([t[0] + dl, t[1] + da, t[2] + db]);
                p.c_p = LabColor::from_array([q[0] + dl, q[1] + da, q[2] + db]);
            }
            let mut conj = tps.clone();
            for cp in conj.control_points.iter_mut() {
                for k in 0..3 {
                    cp[k] += delta[k];
                }
            }
            for ch in 0..3 {
                let a_delta: f64 = (0..3).map(|k| tps.affine[ch][k] * delta[k]).sum();
                conj.translation[ch] = tps.translation[ch] + delta[ch] - a_delta;
            }
            let a = gmm_cost(&tps, &set, 5.0, 1e-3).unwrap();
            let b = gmm_cost(&conj, &moved, 5.0, 1e-3).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * a.abs());
        }
    }
}
