use rayon::prelude::*;

use crate::colour::{self, WhitePoint};
use crate::error::Result;
use crate::image::Image;

use super::tps::TpsTransform;

/// Nodes per axis of the colour lookup lattice.
pub const LUT_SIZE: usize = 33;
const LO: [f64; 3] = [0.0, -128.0, -128.0];
const HI: [f64; 3] = [100.0, 127.0, 127.0];

/// A transform tabulated on a regular LAB lattice and read back trilinearly.
/// Colours outside the lattice extrapolate linearly from the border cell.
pub struct LabLut {
    nodes: Vec<[f64; 3]>,
}

impl LabLut {
    pub fn new(tps: &TpsTransform) -> Self {
        let n = LUT_SIZE;
        let nodes = (0..n * n * n)
            .into_par_iter()
            .map(|idx| {
                let (i, j, k) = (idx / (n * n), (idx / n) % n, idx % n);
                tps.apply_array([node(0, i), node(1, j), node(2, k)])
            })
            .collect();
        LabLut { nodes }
    }

    pub fn lookup(&self, c: [f64; 3]) -> [f64; 3] {
        let n = LUT_SIZE;
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for k in 0..3 {
            let pos = (c[k] - LO[k]) / (HI[k] - LO[k]) * (n - 1) as f64;
            let i = (pos.floor().max(0.0) as usize).min(n - 2);
            base[k] = i;
            frac[k] = pos - i as f64;
        }
        let mut out = [0.0; 3];
        for corner in 0..8 {
            let o = [corner >> 2 & 1, corner >> 1 & 1, corner & 1];
            let mut w = 1.0;
            for k in 0..3 {
                w *= if o[k] == 1 { frac[k] } else { 1.0 - frac[k] };
            }
            let v = self.nodes[((base[0] + o[0]) * n + base[1] + o[1]) * n + base[2] + o[2]];
            for ch in 0..3 {
                out[ch] += w * v[ch];
            }
        }
        out
    }
}

fn node(axis: usize, i: usize) -> f64 {
    LO[axis] + (HI[axis] - LO[axis]) * i as f64 / (LUT_SIZE - 1) as f64
}

/// Applies `tps` to a LAB image through the lookup lattice, without clipping.
pub fn recolour_lab(lab: &Image, tps: &TpsTransform) -> Result<Image> {
    lab.require_channels(3)?;
    let lut = LabLut::new(tps);
    let mut out = lab.clone();
    out.data_mut().par_chunks_exact_mut(3).for_each(|px| {
        let v = lut.lookup([px[0], px[1], px[2]]);
        px.copy_from_slice(&v);
    });
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct Recoloured {
    pub image: Image,
    pub clipped_pixels: usize,
}

/// Recolours a linear RGB image, clipping the result to the RGB gamut.
pub fn recolour_image(img: &Image, tps: &TpsTransform, white: WhitePoint) -> Result<Recoloured> {
    let lab = colour::rgb_to_lab(img, white)?;
    let mapped = recolour_lab(&lab, tps)?;
    let back = colour::lab_to_rgb(&mapped, white)?;
    Ok(Recoloured {
        image: back.image,
        clipped_pixels: back.clipped_pixels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transfer::tps::dist;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_rgb(seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(32, 24, 3, |_, _| [rng.random(), rng.random(), rng.random()])
    }

    fn smooth_tps() -> TpsTransform {
        let cps = TpsTransform::lattice([10.0, -60.0, -60.0], [90.0, 60.0, 60.0], [3, 3, 3]);
        let dst: Vec<_> = cps
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let wobble = ((i * 7) % 5) as f64 - 2.0;
                [c[0] * 0.95 + 3.0 + wobble, c[1] + 2.0 * wobble, c[2] - wobble]
            })
            .collect();
        TpsTransform::fit_exact(&cps, &dst).unwrap()
    }

    #[test]
    fn identity_round_trips() {
        let img = random_rgb(1);
        let tps = TpsTransform::identity(TpsTransform::lattice([0.0; 3], [1.0; 3], [2, 2, 2]));
        let out = recolour_image(&img, &tps, WhitePoint::D65).unwrap();
        for (a, b) in img.data().iter().zip(out.image.data()) {
            assert!((a - b).abs() < 1e-3);
        }
    }

    #[test]
    fn lightness_shift() {
        let lab = colour::rgb_to_lab(&random_rgb(2), WhitePoint::D65).unwrap();
        let mut tps = TpsTransform::identity(vec![[0.0; 3]; 4]);
        tps.translation = [10.0, 0.0, 0.0];
        let out = recolour_lab(&lab, &tps).unwrap();
        for (a, b) in lab.pixels().zip(out.pixels()) {
            assert!((b[0] - a[0] - 10.0).abs() < 0.1);
            assert!((b[1] - a[1]).abs() < 0.1);
        }
    }

    #[test]
    fn lattice_close_to_direct_evaluation() {
        let tps = smooth_tps();
        let lab = colour::rgb_to_lab(&random_rgb(3), WhitePoint::D65).unwrap();
        let out = recolour_lab(&lab, &tps).unwrap();
        for (a, b) in lab.pixels().zip(out.pixels()) {
            let direct = tps.apply_array([a[0], a[1], a[2]]);
            let err = dist(direct, [b[0], b[1], b[2]]);
            assert!(err < 0.5, "{err}");
        }
    }

    #[test]
    fn nodes_are_exact() {
        let tps = smooth_tps();
        let lut = LabLut::new(&tps);
        let c = [node(0, 7), node(1, 20), node(2, 3)];
        assert_eq!(lut.lookup(c), tps.apply_array(c));
    }

    #[test]
    fn clipping_is_counted() {
        let img = Image::filled(4, 4, 3, 0.9);
        let mut tps = TpsTransform::identity(vec![[0.0; 3]; 4]);
        tps.translation = [40.0, 0.0, 0.0];
        let out = recolour_image(&img, &tps, WhitePoint::D65).unwrap();
        assert_eq!(out.clipped_pixels, 16);
        assert!(out.image.data().iter().all(|&v| v <= 1.0));
    }
}
