//! Light field denoising by collaborative filtering of disparity-compensated
//! 4D patches stacked along a fifth, similarity dimension.
//!
//! Colour views are filtered in an orthonormal luminance-chrominance basis so
//! the noise level is the same in every channel. The hard-threshold stage is
//! always run; an empirical Wiener stage can follow it.

mod patch;
mod transform;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use patch::{
    angular_windows, build_4d_patch, disparity_candidates, find_similar, patch_origin, reference_axis,
    select_disparity, AngularWindow,
};
pub use transform::{apply_axis, dct_matrix, haar_matrix};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::lightfield::{ColourSpace, LightField, ViewIndex};
use crate::metrics::estimate_noise;

/// Reference patches filtered per parallel batch before aggregation.
const BATCH: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DenoiseStage {
    HardOnly,
    HardPlusWiener,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DenoiseParams {
    pub patch_size: usize,
    /// Largest angular block side filtered jointly.
    pub angular_window: usize,
    pub num_similar: usize,
    pub search_radius: usize,
    pub disparity_range: f64,
    pub disparity_step: f64,
    /// Threshold as a multiple of sigma.
    pub hard_threshold: f64,
    /// Per-channel noise level; `None` estimates it from the centre view.
    pub sigma: Option<f64>,
    pub stage: DenoiseStage,
    pub noise_patch_size: usize,
}

impl Default for DenoiseParams {
    fn default() -> Self {
        DenoiseParams {
            patch_size: 8,
            angular_window: 5,
            num_similar: 8,
            search_radius: 16,
            disparity_range: 2.0,
            disparity_step: 0.5,
            hard_threshold: 2.7,
            sigma: None,
            stage: DenoiseStage::HardOnly,
            noise_patch_size: crate::metrics::DEFAULT_PATCH_SIZE,
        }
    }
}

impl DenoiseParams {
    pub fn validate(&self) -> Result<()> {
        if !self.patch_size.is_power_of_two() || self.patch_size < 2 {
            return Err(Error::invalid("patch size must be a power of two of at least 2"));
        }
        if !self.num_similar.is_power_of_two() {
            return Err(Error::invalid("number of similar patches must be a power of two"));
        }
        if self.angular_window == 0 {
            return Err(Error::invalid("angular window must hold at least one view"));
        }
        if !(self.disparity_range >= 0.0 && self.disparity_step > 0.0) {
            return Err(Error::invalid("disparity range must be non-negative and its step positive"));
        }
        if !(self.hard_threshold >= 0.0) {
            return Err(Error::invalid("hard threshold must be non-negative"));
        }
        if let Some(s) = self.sigma {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::invalid(format!("sigma must be non-negative, got {s}")));
            }
        }
        Ok(())
    }
}

/// Group of 4D patches with layout `[similar][u][v][channel][y][x]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchStack5D {
    pub data: Vec<f64>,
    /// `[similar, u, v, channels, p, p]`.
    pub dims: [usize; 6],
    /// Reference-view corner of each member.
    pub positions: Vec<[usize; 2]>,
    pub disparities: Vec<f64>,
}

impl PatchStack5D {
    pub fn new(data: Vec<f64>, dims: [usize; 6]) -> Result<Self> {
        if data.len() != dims.iter().product::<usize>() {
            return Err(Error::invalid("stack data does not match its dimensions"));
        }
        if !dims[0].is_power_of_two() {
            return Err(Error::invalid("stack depth must be a power of two"));
        }
        Ok(PatchStack5D {
            data,
            dims,
            positions: vec![[0, 0]; dims[0]],
            disparities: vec![0.0; dims[0]],
        })
    }

    fn channel_stride(&self) -> usize {
        self.dims[4] * self.dims[5]
    }

    /// Whether a flat index is the all-zero-frequency coefficient of its channel.
    fn is_dc(&self, i: usize) -> bool {
        let per_channel_block = self.dims[3] * self.channel_stride();
        i % self.channel_stride() == 0 && i < per_channel_block
    }
}

/// Forward or inverse separable 5D transform.
pub fn transform_stack(stack: &mut PatchStack5D, inverse: bool) {
    let d = stack.dims;
    let mats = [
        (0, haar_matrix(d[0])),
        (1, dct_matrix(d[1])),
        (2, dct_matrix(d[2])),
        (4, dct_matrix(d[4])),
        (5, dct_matrix(d[5])),
    ];
    let order: Vec<_> = if inverse { mats.iter().collect() } else { mats.iter().rev().collect() };
    for (axis, m) in order {
        apply_axis(&mut stack.data, &d, *axis, m, inverse);
    }
}

/// Result of filtering one stack.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FilterOutcome {
    pub weight: f64,
    pub retained: usize,
}

/// Hard-thresholds the stack in the transform domain in place.
///
/// Coefficients below `lambda * sigma` in magnitude are zeroed except each
/// channel's DC. The aggregation weight is `1 / (1 + retained * sigma^2)`.
pub fn filter_stack(stack: &mut PatchStack5D, sigma: f64, lambda: f64) -> FilterOutcome {
    transform_stack(stack, false);
    let thr = lambda * sigma;
    let mut retained = 0;
    for i in 0..stack.data.len() {
        if stack.is_dc(i) {
            retained += 1;
        } else if stack.data[i].abs() < thr {
            stack.data[i] = 0.0;
        } else {
            retained += 1;
        }
    }
    transform_stack(stack, true);
    FilterOutcome {
        weight: 1.0 / (1.0 + retained as f64 * sigma * sigma),
        retained,
    }
}

/// Empirical Wiener shrinkage of `noisy` guided by the `pilot` estimate.
pub fn wiener_stack(noisy: &mut PatchStack5D, pilot: &PatchStack5D, sigma: f64) -> FilterOutcome {
    let mut pilot = pilot.clone();
    transform_stack(&mut pilot, false);
    transform_stack(noisy, false);
    let s2 = sigma * sigma;
    let mut energy = 0.0;
    for (c, p) in noisy.data.iter_mut().zip(&pilot.data) {
        let g = if s2 == 0.0 { 1.0 } else { p * p / (p * p + s2) };
        *c *= g;
        energy += g * g;
    }
    transform_stack(noisy, true);
    FilterOutcome {
        weight: 1.0 / (1.0 + energy * s2),
        retained: noisy.data.len(),
    }
}

const OPPONENT: [[f64; 3]; 3] = {
    let a = 0.577_350_269_189_625_8;
    let b = std::f64::consts::FRAC_1_SQRT_2;
    let c = 0.408_248_290_463_863;
    [[a, a, a], [b, 0.0, -b], [c, -2.0 * c, c]]
};

fn to_opponent(img: &Image) -> Image {
    if img.channels() == 1 {
        return img.clone();
    }
    let m = &OPPONENT;
    Image::from_fn(img.width(), img.height(), 3, |x, y| {
        let p = img.pixel(x, y);
        [0, 1, 2].map(|r| m[r][0] * p[0] + m[r][1] * p[1] + m[r][2] * p[2])
    })
}

fn from_opponent(img: &Image) -> Image {
    if img.channels() == 1 {
        return img.clone();
    }
    let m = &OPPONENT;
    Image::from_fn(img.width(), img.height(), 3, |x, y| {
        let p = img.pixel(x, y);
        [0, 1, 2].map(|r| m[0][r] * p[0] + m[1][r] * p[1] + m[2][r] * p[2])
    })
}

/// Noise level of one channel given the centre view's luminance estimate,
/// assuming independent noise of equal level in each channel.
pub fn channel_sigma_from_luminance(sigma_luma: f64, channels: usize) -> f64 {
    if channels == 1 {
        sigma_luma
    } else {
        sigma_luma / (0.2126f64.powi(2) + 0.7152f64.powi(2) + 0.0722f64.powi(2)).sqrt()
    }
}

/// Output of [`denoise_lightfield`].
#[derive(Clone, Debug)]
pub struct Denoised {
    pub lightfield: LightField,
    /// Per-channel noise level used.
    pub sigma: f64,
}

/// Resolves the noise level, estimating it on the centre view when unset.
pub fn resolve_sigma(lf: &LightField, params: &DenoiseParams) -> Result<f64> {
    match params.sigma {
        Some(s) => Ok(s),
        None => {
            let luma = estimate_noise(lf.centre_view(), params.noise_patch_size)?;
            Ok(channel_sigma_from_luminance(luma, lf.channels()))
        }
    }
}

/// Denoises every valid view; invalid views pass through untouched.
pub fn denoise_lightfield(lf: &LightField, params: &DenoiseParams) -> Result<Denoised> {
    params.validate()?;
    if lf.colour_space() == ColourSpace::Lab {
        return Err(Error::invalid("denoising expects an RGB light field"));
    }
    let p = params.patch_size;
    if lf.width() < p || lf.height() < p {
        return Err(Error::ImageTooSmall(format!(
            "views of {}x{} are smaller than the {p}x{p} patch",
            lf.width(),
            lf.height()
        )));
    }
    let sigma = resolve_sigma(lf, params)?;
    if sigma < 0.0 {
        return Err(Error::invalid("sigma must be non-negative"));
    }
    if sigma == 0.0 {
        return Ok(Denoised {
            lightfield: lf.clone(),
            sigma,
        });
    }
    let noisy = lf.map_views(lf.colour_space(), |_, img| Ok(to_opponent(img)))?;
    let windows = angular_windows(&noisy, params.angular_window);
    let mut estimate = run_stage(&noisy, None, &windows, params, sigma);
    if params.stage == DenoiseStage::HardPlusWiener {
        let pilot = rebuild(&noisy, &estimate)?;
        estimate = run_stage(&noisy, Some(&pilot), &windows, params, sigma);
    }
    let mut out = rebuild(&noisy, &estimate)?;
    out = out.map_views(lf.colour_space(), |v, img| {
        if lf.is_valid(v) {
            Ok(from_opponent(img))
        } else {
            Ok(lf.view(v).clone())
        }
    })?;
    out.set_history(lf.history().to_vec());
    out.push_history("denoised");
    Ok(Denoised { lightfield: out, sigma })
}

fn rebuild(template: &LightField, views: &[(ViewIndex, Image)]) -> Result<LightField> {
    let mut out = template.clone();
    for (v, img) in views {
        out.replace_view(*v, img.clone())?;
    }
    Ok(out)
}

/// Per-view accumulation buffers of one window.
struct Accumulator {
    num: Vec<Vec<f64>>,
    den: Vec<Vec<f64>>,
}

/// One filtering pass over all windows, returning the filtered valid views.
fn run_stage(
    noisy: &LightField,
    pilot: Option<&LightField>,
    windows: &[AngularWindow],
    params: &DenoiseParams,
    sigma: f64,
) -> Vec<(ViewIndex, Image)> {
    let mut out = Vec::new();
    for window in windows {
        // Grouping and disparities come from the pilot when there is one.
        let guide = pilot.unwrap_or(noisy);
        let filtered = filter_window(noisy, pilot, guide, window, params, sigma);
        out.extend(filtered);
    }
    out
}

fn filter_window(
    noisy: &LightField,
    pilot: Option<&LightField>,
    guide: &LightField,
    window: &AngularWindow,
    params: &DenoiseParams,
    sigma: f64,
) -> Vec<(ViewIndex, Image)> {
    let p = params.patch_size;
    let (w, h, c) = (noisy.width(), noisy.height(), noisy.channels());
    let reference = guide.view(window.reference);
    let xs = reference_axis(w, p, p / 2);
    let ys = reference_axis(h, p, p / 2);
    let refs: Vec<[usize; 2]> = ys.iter().flat_map(|&y| xs.iter().map(move |&x| [x, y])).collect();

    let groups: Vec<Vec<[usize; 2]>> = refs
        .par_iter()
        .map(|&pos| {
            let mut g = find_similar(reference, pos, params.num_similar, params.search_radius, p);
            let keep = 1 << (usize::BITS - 1 - g.len().leading_zeros());
            g.truncate(keep);
            g
        })
        .collect();

    let mut needed: Vec<usize> = groups.iter().flatten().map(|q| q[1] * w + q[0]).collect();
    needed.sort_unstable();
    needed.dedup();
    let candidates = disparity_candidates(params.disparity_range, params.disparity_step);
    let found: Vec<f64> = needed
        .par_iter()
        .map(|&i| select_disparity(guide, window, [i % w, i / w], &candidates, p))
        .collect();
    let mut disparity = vec![0.0; w * h];
    for (&i, d) in needed.iter().zip(found) {
        disparity[i] = d;
    }

    let nv = window.views.len();
    let mut acc = Accumulator {
        num: vec![vec![0.0; w * h * c]; nv],
        den: vec![vec![0.0; w * h]; nv],
    };
    let (su, sv) = window.shape;
    for batch in groups.chunks(BATCH) {
        let stacks: Vec<(PatchStack5D, f64)> = batch
            .par_iter()
            .map(|group| {
                let ds: Vec<f64> = group.iter().map(|q| disparity[q[1] * w + q[0]]).collect();
                let mut stack = gather(noisy, window, group, &ds, [su, sv, c, p]);
                let outcome = match pilot {
                    None => filter_stack(&mut stack, sigma, params.hard_threshold),
                    Some(pl) => {
                        let guide_stack = gather(pl, window, group, &ds, [su, sv, c, p]);
                        wiener_stack(&mut stack, &guide_stack, sigma)
                    }
                };
                (stack, outcome.weight)
            })
            .collect();
        for (stack, weight) in &stacks {
            splat(&mut acc, window, stack, *weight, w, h);
        }
    }

    window
        .views
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            let src = noisy.view(v);
            let mut img = src.clone();
            let data = img.data_mut();
            for i in 0..w * h {
                let d = acc.den[k][i];
                if d > 0.0 {
                    for ch in 0..c {
                        data[i * c + ch] = acc.num[k][i * c + ch] / d;
                    }
                }
            }
            (v, img)
        })
        .collect()
}

fn gather(lf: &LightField, window: &AngularWindow, group: &[[usize; 2]], ds: &[f64], shape: [usize; 4]) -> PatchStack5D {
    let [su, sv, c, p] = shape;
    let mut data = Vec::with_capacity(group.len() * su * sv * c * p * p);
    for (q, &d) in group.iter().zip(ds) {
        // disparities were only chosen among in-bounds candidates
        data.extend(build_4d_patch(lf, window, *q, d, p).expect("in-bounds patch"));
    }
    PatchStack5D {
        data,
        dims: [group.len(), su, sv, c, p, p],
        positions: group.to_vec(),
        disparities: ds.to_vec(),
    }
}

fn splat(acc: &mut Accumulator, window: &AngularWindow, stack: &PatchStack5D, weight: f64, w: usize, h: usize) {
    let [_, _, _, c, p, _] = stack.dims;
    let per_view = c * p * p;
    let per_member = window.views.len() * per_view;
    for (s, (&pos, &d)) in stack.positions.iter().zip(&stack.disparities).enumerate() {
        for (k, &v) in window.views.iter().enumerate() {
            let (ox, oy) = patch_origin(window, v, pos, d);
            let base = s * per_member + k * per_view;
            let num = &mut acc.num[k];
            let den = &mut acc.den[k];
            for dy in 0..p {
                for dx in 0..p {
                    let (x, y) = (ox + dx as f64, oy + dy as f64);
                    let (x0, y0) = (x.floor(), y.floor());
                    let (fx, fy) = (x - x0, y - y0);
                    let (xi, yi) = (x0 as usize, y0 as usize);
                    let taps = [
                        (xi, yi, (1.0 - fx) * (1.0 - fy)),
                        (xi + 1, yi, fx * (1.0 - fy)),
                        (xi, yi + 1, (1.0 - fx) * fy),
                        (xi + 1, yi + 1, fx * fy),
                    ];
                    for (tx, ty, bw) in taps {
                        if bw == 0.0 || tx >= w || ty >= h {
                            continue;
                        }
                        let i = ty * w + tx;
                        let wt = weight * bw;
                        den[i] += wt;
                        for ch in 0..c {
                            num[i * c + ch] += wt * stack.data[base + ch * p * p + dy * p + dx];
                        }
                    }
                }
            }
        }
    }
}
