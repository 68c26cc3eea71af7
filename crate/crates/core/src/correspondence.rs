//! Sparse colour correspondences between two views.
//!
//! A seed grid is matched with coarse-to-fine PatchMatch: random
//! initialization at the coarsest pyramid level, then alternating neighbour
//! propagation and shrinking random search, with displacements doubled when
//! moving to the next finer level. Seeds whose forward and backward matches
//! disagree are dropped.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::colour::{linear_rgb_to_lab, LabColor, WhitePoint};
use crate::error::{Error, Result};
use crate::image::Image;

/// Smallest correspondence count accepted by the colour transfer.
pub const N_MIN: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    /// Pixel position in the target view, `[x, y]`.
    pub pos_t: [usize; 2],
    /// Matching pixel position in the palette view.
    pub pos_p: [usize; 2],
    pub c_t: LabColor,
    pub c_p: LabColor,
}

impl Correspondence {
    /// `pos_p - pos_t`.
    pub fn displacement(&self) -> [isize; 2] {
        [
            self.pos_p[0] as isize - self.pos_t[0] as isize,
            self.pos_p[1] as isize - self.pos_t[1] as isize,
        ]
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CorrespondenceSet {
    pub pairs: Vec<Correspondence>,
    pub width: usize,
    pub height: usize,
    /// Number of seeds matched before the consistency check.
    pub seeds: usize,
}

impl CorrespondenceSet {
    pub fn empty(width: usize, height: usize) -> Self {
        CorrespondenceSet {
            pairs: Vec::new(),
            width,
            height,
            seeds: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn is_sufficient(&self, n_min: usize) -> bool {
        self.pairs.len() >= n_min
    }

    /// Fraction of seeds that passed the consistency check.
    pub fn survival_rate(&self) -> f64 {
        if self.seeds == 0 {
            0.0
        } else {
            self.pairs.len() as f64 / self.seeds as f64
        }
    }

    pub fn require(&self, n_min: usize) -> Result<()> {
        if self.is_sufficient(n_min) {
            Ok(())
        } else {
            Err(Error::InsufficientCorrespondences {
                found: self.pairs.len(),
                required: n_min,
            })
        }
    }

    /// Writes one `x y dx dy` line per pair.
    pub fn write_displacements<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# {} {} {}", self.width, self.height, self.pairs.len())?;
        for p in &self.pairs {
            let d = p.displacement();
            writeln!(out, "{} {} {} {}", p.pos_t[0], p.pos_t[1], d[0] as f64, d[1] as f64)?;
        }
        Ok(())
    }
}

/// Concatenates two sets over the same target image.
pub fn merge_correspondences(a: &CorrespondenceSet, b: &CorrespondenceSet) -> Result<CorrespondenceSet> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}", a.width, a.height),
            actual: format!("{}x{}", b.width, b.height),
        });
    }
    let mut pairs = a.pairs.clone();
    pairs.extend_from_slice(&b.pairs);
    Ok(CorrespondenceSet {
        pairs,
        width: a.width,
        height: a.height,
        seeds: a.seeds + b.seeds,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchConfig {
    pub seed_stride: usize,
    pub patch_radius: usize,
    pub levels: usize,
    /// Initial search radius in full-resolution pixels.
    pub search_radius: usize,
    pub fb_threshold: f64,
    /// Propagation and random search sweeps per pyramid level.
    pub iterations: usize,
    /// Rescale the target's luminance to the palette's before matching.
    pub normalize_gain: bool,
    pub white_point: WhitePoint,
    pub seed: u64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            seed_stride: 8,
            patch_radius: 4,
            levels: 3,
            search_radius: 16,
            fb_threshold: 2.0,
            iterations: 4,
            normalize_gain: true,
            white_point: WhitePoint::D65,
            seed: 0,
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seed_stride == 0 || self.levels == 0 || self.iterations == 0 {
            return Err(Error::invalid("seed_stride, levels and iterations must be positive"));
        }
        if !(self.fb_threshold >= 0.0) {
            return Err(Error::invalid("fb_threshold must be non-negative"));
        }
        self.white_point.validate()
    }
}

fn downsample(img: &Image) -> Image {
    let (w, h) = (img.width() / 2, img.height() / 2);
    let c = img.channels();
    let mut out = Image::new(w, h, c);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let s = img.get(2 * x, 2 * y, ch)
                    + img.get(2 * x + 1, 2 * y, ch)
                    + img.get(2 * x, 2 * y + 1, ch)
                    + img.get(2 * x + 1, 2 * y + 1, ch);
                out.set(x, y, ch, 0.25 * s);
            }
        }
    }
    out
}

fn pyramid(img: &Image, levels: usize) -> Vec<Image> {
    let mut out = vec![img.clone()];
    for _ in 1..levels {
        let next = downsample(out.last().unwrap());
        out.push(next);
    }
    out
}

struct Matcher<'a> {
    src: &'a Image,
    dst: &'a Image,
    radius: isize,
}

impl Matcher<'_> {
    fn in_bounds(&self, p: [isize; 2], d: [isize; 2]) -> bool {
        let (x, y) = (p[0] + d[0], p[1] + d[1]);
        x >= 0 && y >= 0 && x < self.dst.width() as isize && y < self.dst.height() as isize
    }

    fn sad(&self, p: [isize; 2], d: [isize; 2]) -> f64 {
        let r = self.radius;
        let mut sum = 0.0;
        for oy in -r..=r {
            for ox in -r..=r {
                for c in 0..3 {
                    let a = self.src.get_clamped(p[0] + ox, p[1] + oy, c);
                    let b = self.dst.get_clamped(p[0] + d[0] + ox, p[1] + d[1] + oy, c);
                    sum += (a - b).abs();
                }
            }
        }
        sum
    }
}

fn better(cost: f64, d: [isize; 2], best_cost: f64, best: [isize; 2]) -> bool {
    let norm = |v: [isize; 2]| v[0] * v[0] + v[1] * v[1];
    cost < best_cost || (cost == best_cost && norm(d) < norm(best))
}

fn jitter(rng: &mut ChaCha8Rng, r: isize) -> isize {
    rng.random_range(-(r as i64)..=r as i64) as isize
}

/// Full-resolution seed positions along one axis.
fn seed_axis(len: usize, stride: usize) -> Vec<usize> {
    (0..).map(|i| stride / 2 + i * stride).take_while(|&p| p < len).collect()
}

/// Displacement of every seed, row-major over the seed grid.
fn match_field(src: &Image, dst: &Image, cfg: &MatchConfig, rng: &mut ChaCha8Rng) -> Vec<[isize; 2]> {
    let xs = seed_axis(src.width(), cfg.seed_stride);
    let ys = seed_axis(src.height(), cfg.seed_stride);
    let (gw, gh) = (xs.len(), ys.len());
    let src_pyr = pyramid(src, cfg.levels);
    let dst_pyr = pyramid(dst, cfg.levels);
    let mut field = vec![[0isize; 2]; gw * gh];
    let mut cost = vec![f64::INFINITY; gw * gh];

    for level in (0..cfg.levels).rev() {
        let m = Matcher {
            src: &src_pyr[level],
            dst: &dst_pyr[level],
            radius: cfg.patch_radius as isize,
        };
        let scale = 1usize << level;
        let pos: Vec<[isize; 2]> = (0..gw * gh)
            .map(|i| {
                let x = (xs[i % gw] / scale).min(m.src.width() - 1);
                let y = (ys[i / gw] / scale).min(m.src.height() - 1);
                [x as isize, y as isize]
            })
            .collect();
        let search = if level + 1 == cfg.levels {
            cfg.search_radius.div_ceil(scale).max(1) as isize
        } else {
            2
        };

        for i in 0..gw * gh {
            let p = pos[i];
            let mut cands = vec![[0, 0]];
            if level + 1 == cfg.levels {
                cands.push([jitter(rng, search), jitter(rng, search)]);
            } else {
                cands.push([field[i][0] * 2, field[i][1] * 2]);
            }
            let mut best = [0, 0];
            let mut best_cost = f64::INFINITY;
            for d in cands {
                if m.in_bounds(p, d) {
                    let c = m.sad(p, d);
                    if better(c, d, best_cost, best) {
                        best = d;
                        best_cost = c;
                    }
                }
            }
            field[i] = best;
            cost[i] = best_cost;
        }

        for iter in 0..cfg.iterations {
            let forward = iter % 2 == 0;
            for k in 0..gw * gh {
                let i = if forward { k } else { gw * gh - 1 - k };
                let (gx, gy) = (i % gw, i / gw);
                let p = pos[i];
                let mut neighbours = Vec::with_capacity(4);
                if gx > 0 {
                    neighbours.push(i - 1);
                }
                if gx + 1 < gw {
                    neighbours.push(i + 1);
                }
                if gy > 0 {
                    neighbours.push(i - gw);
                }
                if gy + 1 < gh {
                    neighbours.push(i + gw);
                }
                for j in neighbours {
                    let d = field[j];
                    if d != field[i] && m.in_bounds(p, d) {
                        let c = m.sad(p, d);
                        if better(c, d, cost[i], field[i]) {
                            field[i] = d;
                            cost[i] = c;
                        }
                    }
                }
                let mut r = search;
                while r >= 1 {
                    let base = field[i];
                    let d = [
                        base[0] + jitter(rng, r),
                        base[1] + jitter(rng, r),
                    ];
                    if d != base && m.in_bounds(p, d) {
                        let c = m.sad(p, d);
                        if better(c, d, cost[i], field[i]) {
                            field[i] = d;
                            cost[i] = c;
                        }
                    }
                    r /= 2;
                }
            }
        }
    }
    field
}

fn mean3x3(img: &Image, x: usize, y: usize) -> [f64; 3] {
    let mut acc = [0.0; 3];
    for oy in -1..=1 {
        for ox in -1..=1 {
            for (c, a) in acc.iter_mut().enumerate() {
                *a += img.get_clamped(x as isize + ox, y as isize + oy, c);
            }
        }
    }
    acc.map(|v| v / 9.0)
}

fn gain_normalized(target: &Image, palette: &Image) -> Image {
    let t = target.luminance().mean();
    let p = palette.luminance().mean();
    if t > 0.0 && p > 0.0 {
        let g = p / t;
        target.map(|v| v * g)
    } else {
        target.clone()
    }
}

/// Matches a seed grid of `target` into `palette`.
///
/// Both images are linear RGB of the same size. Displacements point from the
/// target position to the palette position.
pub fn patch_match(target: &Image, palette: &Image, cfg: &MatchConfig) -> Result<CorrespondenceSet> {
    cfg.validate()?;
    target.require_channels(3)?;
    target.check_same_shape(palette)?;
    let min_side = target.width().min(target.height());
    let coarse = min_side >> (cfg.levels - 1);
    if coarse < 2 * cfg.patch_radius + 1 {
        return Err(Error::ImageTooSmall(format!(
            "{}x{} is too small for {} pyramid levels with patch radius {}",
            target.width(),
            target.height(),
            cfg.levels,
            cfg.patch_radius
        )));
    }

    let matched_target = if cfg.normalize_gain {
        gain_normalized(target, palette)
    } else {
        target.clone()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let fwd = match_field(&matched_target, palette, cfg, &mut rng);
    rng.set_stream(1);
    let bwd = match_field(palette, &matched_target, cfg, &mut rng);

    let xs = seed_axis(target.width(), cfg.seed_stride);
    let ys = seed_axis(target.height(), cfg.seed_stride);
    let gw = xs.len();
    let stride = cfg.seed_stride as f64;
    let offset = (cfg.seed_stride / 2) as f64;
    let mut pairs = Vec::new();
    for (i, d) in fwd.iter().enumerate() {
        let (x, y) = (xs[i % gw], ys[i / gw]);
        let qx = (x as isize + d[0]) as usize;
        let qy = (y as isize + d[1]) as usize;
        let bx = (((qx as f64 - offset) / stride).round().max(0.0) as usize).min(gw - 1);
        let by = (((qy as f64 - offset) / stride).round().max(0.0) as usize).min(ys.len() - 1);
        let b = bwd[by * gw + bx];
        let err = (((d[0] + b[0]).pow(2) + (d[1] + b[1]).pow(2)) as f64).sqrt();
        if err > cfg.fb_threshold {
            continue;
        }
        pairs.push(Correspondence {
            pos_t: [x, y],
            pos_p: [qx, qy],
            c_t: linear_rgb_to_lab(mean3x3(target, x, y), cfg.white_point),
            c_p: linear_rgb_to_lab(mean3x3(palette, qx, qy), cfg.white_point),
        });
    }
    Ok(CorrespondenceSet {
        pairs,
        width: target.width(),
        height: target.height(),
        seeds: fwd.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lightfield::ViewIndex;
    use crate::sim::{synth_lightfield, SceneKind};

    fn noise(w: usize, h: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(w, h, 3, |_, _| [rng.random(), rng.random(), rng.random()])
    }

    #[test]
    fn self_match_is_identity() {
        let img = noise(64, 48, 1);
        let set = patch_match(&img, &img, &MatchConfig::default()).unwrap();
        assert_eq!(set.seeds, 8 * 6);
        assert_eq!(set.len(), set.seeds);
        assert!(set.pairs.iter().all(|p| p.displacement() == [0, 0]));
        assert!(set.pairs.iter().all(|p| p.c_t == p.c_p));
    }

    #[test]
    fn recovers_a_global_translation() {
        let lf = synth_lightfield(SceneKind::TexturedDisparity, 3, 3, 96, 96, 4.0).unwrap();
        let palette = lf.view(ViewIndex::new(1, 1));
        let target = lf.view(ViewIndex::new(1, 2));
        let set = patch_match(target, palette, &MatchConfig::default()).unwrap();
        assert!(set.survival_rate() >= 0.9, "survival {}", set.survival_rate());
        let interior: Vec<_> = set
            .pairs
            .iter()
            .filter(|p| p.pos_t[0] >= 12 && p.pos_t[0] < 84 && p.pos_t[1] >= 12 && p.pos_t[1] < 84)
            .collect();
        assert!(!interior.is_empty());
        for p in interior {
            let d = p.displacement();
            let err = (((d[0] + 4).pow(2) + d[1].pow(2)) as f64).sqrt();
            assert!(err <= 2.0, "{:?} at {:?}", d, p.pos_t);
        }
    }

    #[test]
    fn incoherent_images_mostly_rejected() {
        let cfg = MatchConfig {
            fb_threshold: 1.0,
            ..MatchConfig::default()
        };
        let set = patch_match(&noise(96, 96, 2), &noise(96, 96, 3), &cfg).unwrap();
        assert!(set.survival_rate() < 0.2, "survival {}", set.survival_rate());
    }

    #[test]
    fn dark_target_still_matches() {
        let lf = synth_lightfield(SceneKind::TexturedDisparity, 3, 3, 64, 64, 2.0).unwrap();
        let palette = lf.view(ViewIndex::new(1, 1));
        let dark = lf.view(ViewIndex::new(1, 0)).map(|v| 0.1 * v);
        let set = patch_match(&dark, palette, &MatchConfig::default()).unwrap();
        assert!(set.survival_rate() >= 0.9);
        // colours come from the unnormalized target
        assert!(set.pairs.iter().all(|p| p.c_t.l < p.c_p.l));
    }

    #[test]
    fn deterministic_for_a_seed() {
        let a = noise(64, 64, 4);
        let b = noise(64, 64, 5);
        let cfg = MatchConfig::default();
        assert_eq!(patch_match(&a, &b, &cfg).unwrap(), patch_match(&a, &b, &cfg).unwrap());
    }

    #[test]
    fn small_images_rejected() {
        let img = noise(30, 30, 6);
        assert!(matches!(
            patch_match(&img, &img, &MatchConfig::default()),
            Err(Error::ImageTooSmall(_))
        ));
    }

    #[test]
    fn merge_concatenates() {
        let img = noise(64, 64, 7);
        let s = patch_match(&img, &img, &MatchConfig::default()).unwrap();
        let merged = merge_correspondences(&s, &CorrespondenceSet::empty(64, 64)).unwrap();
        assert_eq!(merged.pairs, s.pairs);
        let twice = merge_correspondences(&s, &s).unwrap();
        assert_eq!(twice.len(), 2 * s.len());
        assert!(merge_correspondences(&s, &CorrespondenceSet::empty(32, 64)).is_err());
    }

    #[test]
    fn displacement_dump_has_one_line_per_pair() {
        let img = noise(64, 64, 8);
        let s = patch_match(&img, &img, &MatchConfig::default()).unwrap();
        let mut buf = Vec::new();
        s.write_displacements(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), s.len() + 1);
    }
}
