use crate::decode::{PlenopticRaw, WhiteBalanceFactors, WhiteImage, WI_FLOOR};
use crate::error::{Error, Result};
use crate::image::Image;

/// Linear-interpolated quantile (`p` in `[0, 1]`) of a sample set.
pub fn quantile(samples: &[f64], p: f64) -> f64 {
    assert!(!samples.is_empty());
    let mut v = samples.to_vec();
    let pos = p.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    let (_, &mut lo_val, upper) = v.select_nth_unstable_by(lo, f64::total_cmp);
    if frac == 0.0 || upper.is_empty() {
        return lo_val;
    }
    let hi_val = upper.iter().copied().fold(f64::INFINITY, f64::min);
    lo_val + frac * (hi_val - lo_val)
}

/// Multiplies red and blue CFA sites of the white image by their gains.
pub fn apply_white_balance(wi: &WhiteImage, wb: WhiteBalanceFactors) -> WhiteImage {
    let mut sensor = wi.sensor.clone();
    let w = sensor.width();
    for (i, v) in sensor.data_mut().iter_mut().enumerate() {
        *v *= wb.gain_for(wi.pattern.colour_at(i % w, i / w));
    }
    WhiteImage {
        sensor,
        pattern: wi.pattern,
    }
}

/// Applies the white-balance gains, then divides by the `percentile` quantile
/// so that isolated hot pixels do not set the scale.
pub fn normalize_white_image(wi: &WhiteImage, wb: WhiteBalanceFactors, percentile: f64) -> Result<WhiteImage> {
    wb.validate()?;
    if !(0.0..=1.0).contains(&percentile) {
        return Err(Error::invalid("percentile must lie in [0, 1]"));
    }
    let mut gained = apply_white_balance(wi, wb);
    let q = quantile(gained.sensor.data(), percentile);
    if !(q > 0.0) {
        return Err(Error::DegenerateWhiteImage(q));
    }
    for v in gained.sensor.data_mut() {
        *v /= q;
    }
    Ok(gained)
}

/// Output of [`devignette`].
#[derive(Clone, Debug)]
pub struct Devignetted {
    /// Devignetted mosaic, clipped to `[0, 1]`.
    pub image: Image,
    /// Samples that exceeded 1 before clipping.
    pub saturated: Vec<bool>,
    /// Samples whose white image value was below [`WI_FLOOR`].
    pub invalid: Vec<bool>,
}

impl Devignetted {
    pub fn saturated_fraction(&self) -> f64 {
        self.saturated.iter().filter(|&&s| s).count() as f64 / self.saturated.len().max(1) as f64
    }
}

/// Pixel-wise division of the (black-subtracted) RAW by the normalized white image.
pub fn devignette(raw: &PlenopticRaw, wi_norm: &WhiteImage) -> Result<Devignetted> {
    raw.sensor.check_same_shape(&wi_norm.sensor)?;
    let n = raw.sensor.len();
    let mut out = Vec::with_capacity(n);
    let mut saturated = vec![false; n];
    let mut invalid = vec![false; n];
    for (i, (&r, &w)) in raw.sensor.data().iter().zip(wi_norm.sensor.data()).enumerate() {
        invalid[i] = w < WI_FLOOR;
        let v = r / w.max(WI_FLOOR);
        if v > 1.0 {
            saturated[i] = true;
        }
        out.push(v.clamp(0.0, 1.0));
    }
    Ok(Devignetted {
        image: Image::from_vec(raw.sensor.width(), raw.sensor.height(), 1, out)?,
        saturated,
        invalid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decode::BayerPattern;
    use rand::{Rng, SeedableRng};

    fn wi(data: Vec<f64>, w: usize, h: usize) -> WhiteImage {
        WhiteImage::new(Image::from_vec(w, h, 1, data).unwrap(), BayerPattern::Rggb).unwrap()
    }

    fn raw(data: Vec<f64>, w: usize, h: usize) -> PlenopticRaw {
        PlenopticRaw::new(Image::from_vec(w, h, 1, data).unwrap(), BayerPattern::Rggb, 0.0, 1.0).unwrap()
    }

    #[test]
    fn quantile_matches_sorted_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let v: Vec<f64> = (0..1001).map(|_| rng.random()).collect();
        let mut sorted = v.clone();
        sorted.sort_by(f64::total_cmp);
        assert_eq!(quantile(&v, 0.5), sorted[500]);
        let pos = 0.999 * 1000.0;
        let expect = sorted[999] + (pos - 999.0) * (sorted[1000] - sorted[999]);
        assert!((quantile(&v, 0.999) - expect).abs() < 1e-15);
    }

    #[test]
    fn uniform_white_image_normalizes_to_one() {
        let out = normalize_white_image(&wi(vec![0.5; 64], 8, 8), WhiteBalanceFactors::UNITY, 0.999).unwrap();
        assert!(out.sensor.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn gains_cancel_site_imbalance() {
        // RGGB: red sites at 0.25, everything else 0.5.
        let data: Vec<f64> = (0..36)
            .map(|i| if (i % 6) % 2 == 0 && (i / 6) % 2 == 0 { 0.25 } else { 0.5 })
            .collect();
        let wb = WhiteBalanceFactors::new(2.0, 1.0).unwrap();
        let out = normalize_white_image(&wi(data, 6, 6), wb, 0.999).unwrap();
        let first = out.sensor.data()[0];
        assert!(out.sensor.data().iter().all(|&v| (v - first).abs() < 1e-15));
    }

    #[test]
    fn hot_pixels_do_not_set_the_scale() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut data: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
        let mut uniform_sorted = data.clone();
        uniform_sorted.sort_by(f64::total_cmp);
        for i in 0..5 {
            data[i * 1999] = 100.0;
        }
        // Oracle: 0.999 quantile of the 10 005-sample set by full sort.
        let mut all_sorted = data.clone();
        all_sorted.sort_by(f64::total_cmp);
        let pos = 0.999 * (all_sorted.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let oracle = all_sorted[lo] + (pos - lo as f64) * (all_sorted[lo + 1] - all_sorted[lo]);
        let uniform_q = uniform_sorted[(0.999 * 9999.0) as usize];

        let w = wi(data.clone(), 100, 100);
        let out = normalize_white_image(&w, WhiteBalanceFactors::UNITY, 0.999).unwrap();
        let divisor = data[1] / out.sensor.data()[1];
        assert!((divisor - oracle).abs() < 1e-12);
        assert!((divisor - uniform_q).abs() < 2e-3, "{divisor} vs {uniform_q}");
        assert!(divisor < 1.0);
        assert!((quantile(out.sensor.data(), 0.999) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn degenerate_white_image() {
        let res = normalize_white_image(&wi(vec![0.0; 16], 4, 4), WhiteBalanceFactors::UNITY, 0.999);
        assert!(matches!(res, Err(Error::DegenerateWhiteImage(_))));
    }

    #[test]
    fn flat_field_devignettes_to_ones() {
        let data: Vec<f64> = (0..64).map(|i| 0.1 + i as f64 / 80.0).collect();
        let d = devignette(&raw(data.clone(), 8, 8), &wi(data, 8, 8)).unwrap();
        assert!(d.image.data().iter().all(|&v| (v - 1.0).abs() < 1e-15));
        assert!(d.saturated.iter().all(|s| !s));
    }

    #[test]
    fn zero_raw_devignettes_to_zero() {
        let d = devignette(&raw(vec![0.0; 16], 4, 4), &wi(vec![0.7; 16], 4, 4)).unwrap();
        assert!(d.image.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn overexposed_sample_is_clipped_and_flagged() {
        let w = vec![0.6; 16];
        let mut r = vec![0.3; 16];
        r[5] = 0.6 * 1.2;
        let d = devignette(&raw(r, 4, 4), &wi(w, 4, 4)).unwrap();
        assert_eq!(d.image.data()[5], 1.0);
        assert!(d.saturated[5]);
        assert_eq!(d.saturated.iter().filter(|&&s| s).count(), 1);
    }

    #[test]
    fn dim_white_image_samples_are_flagged() {
        let mut w = vec![0.5; 16];
        w[2] = 1e-5;
        let d = devignette(&raw(vec![1e-6; 16], 4, 4), &wi(w, 4, 4)).unwrap();
        assert!(d.invalid[2]);
        assert!((d.image.data()[2] - 1e-6 / WI_FLOOR).abs() < 1e-15);
        assert_eq!(d.invalid.iter().filter(|&&s| s).count(), 1);
    }

    #[test]
    fn dimension_mismatch() {
        assert!(devignette(&raw(vec![0.0; 16], 4, 4), &wi(vec![1.0; 20], 5, 4)).is_err());
    }

    #[test]
    fn devignette_is_homogeneous_below_saturation() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let w: Vec<f64> = (0..400).map(|_| rng.random_range(0.2..1.0)).collect();
        let r: Vec<f64> = w.iter().map(|&x| x * rng.random_range(0.0..0.9)).collect();
        let base = devignette(&raw(r.clone(), 20, 20), &wi(w.clone(), 20, 20)).unwrap();
        for alpha in [0.1, 0.5, 1.0] {
            let scaled: Vec<f64> = r.iter().map(|v| v * alpha).collect();
            let d = devignette(&raw(scaled, 20, 20), &wi(w.clone(), 20, 20)).unwrap();
            for (a, b) in d.image.data().iter().zip(base.image.data()) {
                assert!((a - alpha * b).abs() < 1e-12);
            }
        }
    }
}
