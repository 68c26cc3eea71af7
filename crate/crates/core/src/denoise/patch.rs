//! Angular windows, disparity-compensated 4D patches and similarity search.

use crate::error::{Error, Result};
use crate::image::Image;
use crate::lightfield::{LightField, ViewIndex};

/// A rectangular block of views filtered together.
#[derive(Clone, Debug, PartialEq)]
pub struct AngularWindow {
    /// Valid member views in row-major order.
    pub views: Vec<ViewIndex>,
    /// Shape of the angular transform: the block size when every member is
    /// valid, otherwise `(1, views.len())`.
    pub shape: (usize, usize),
    /// Member whose patches anchor the similarity and disparity searches.
    pub reference: ViewIndex,
}

impl AngularWindow {
    /// Angular offset `(dx, dy)` of a member relative to the reference.
    pub fn offset(&self, v: ViewIndex) -> (f64, f64) {
        (
            v.col as f64 - self.reference.col as f64,
            v.row as f64 - self.reference.row as f64,
        )
    }
}

/// Splits `n` into `ceil(n / max)` near-equal consecutive ranges.
fn split(n: usize, max: usize) -> Vec<std::ops::Range<usize>> {
    let k = n.div_ceil(max);
    let (base, extra) = (n / k, n % k);
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let len = base + usize::from(i < extra);
        out.push(start..start + len);
        start += len;
    }
    out
}

/// Tiles the view grid into windows of at most `max` x `max` views.
pub fn angular_windows(lf: &LightField, max: usize) -> Vec<AngularWindow> {
    let max = max.max(1);
    let centre = lf.centre();
    let mut out = Vec::new();
    for rows in split(lf.rows(), max) {
        for cols in split(lf.cols(), max) {
            let views: Vec<ViewIndex> = rows
                .clone()
                .flat_map(|r| cols.clone().map(move |c| ViewIndex::new(r, c)))
                .filter(|&v| lf.is_valid(v))
                .collect();
            if views.is_empty() {
                continue;
            }
            let full = views.len() == rows.len() * cols.len();
            let shape = if full { (rows.len(), cols.len()) } else { (1, views.len()) };
            let mid = ViewIndex::new((rows.start + rows.end - 1) / 2, (cols.start + cols.end - 1) / 2);
            let reference = if views.contains(&centre) {
                centre
            } else {
                *views
                    .iter()
                    .min_by_key(|v| (v.chebyshev(mid), v.row.abs_diff(mid.row) + v.col.abs_diff(mid.col), v.row, v.col))
                    .unwrap()
            };
            out.push(AngularWindow { views, shape, reference });
        }
    }
    out
}

#[inline]
fn bilinear(img: &Image, x: f64, y: f64, c: usize) -> f64 {
    let x0 = x.floor();
    let y0 = y.floor();
    let (fx, fy) = (x - x0, y - y0);
    let (xi, yi) = (x0 as usize, y0 as usize);
    let x1 = (xi + 1).min(img.width() - 1);
    let y1 = (yi + 1).min(img.height() - 1);
    let top = img.get(xi, yi, c) * (1.0 - fx) + img.get(x1, yi, c) * fx;
    let bottom = img.get(xi, y1, c) * (1.0 - fx) + img.get(x1, y1, c) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Top-left corner of a member's patch.
pub fn patch_origin(window: &AngularWindow, v: ViewIndex, pos: [usize; 2], disparity: f64) -> (f64, f64) {
    let (ox, oy) = window.offset(v);
    (pos[0] as f64 + disparity * ox, pos[1] as f64 + disparity * oy)
}

fn fits(lf: &LightField, window: &AngularWindow, pos: [usize; 2], disparity: f64, p: usize) -> bool {
    let (w, h) = (lf.width() as f64, lf.height() as f64);
    window.views.iter().all(|&v| {
        let (x, y) = patch_origin(window, v, pos, disparity);
        x >= 0.0 && y >= 0.0 && x + (p - 1) as f64 <= w - 1.0 && y + (p - 1) as f64 <= h - 1.0
    })
}

/// Extracts the `p x p` patch of every window member, shifted by
/// `disparity` per view step. Samples are ordered `[view][channel][y][x]`.
pub fn build_4d_patch(
    lf: &LightField,
    window: &AngularWindow,
    pos: [usize; 2],
    disparity: f64,
    p: usize,
) -> Result<Vec<f64>> {
    if !fits(lf, window, pos, disparity, p) {
        return Err(Error::invalid(format!(
            "patch at {pos:?} with disparity {disparity} leaves a view"
        )));
    }
    let c = lf.channels();
    let mut out = Vec::with_capacity(window.views.len() * c * p * p);
    for &v in &window.views {
        let img = lf.view(v);
        let (x0, y0) = patch_origin(window, v, pos, disparity);
        for ch in 0..c {
            for dy in 0..p {
                for dx in 0..p {
                    out.push(bilinear(img, x0 + dx as f64, y0 + dy as f64, ch));
                }
            }
        }
    }
    Ok(out)
}

/// Candidate disparities ordered by magnitude, negative first on ties.
pub fn disparity_candidates(range: f64, step: f64) -> Vec<f64> {
    let mut out = vec![0.0];
    if step > 0.0 {
        let n = (range / step + 1e-9).floor() as usize;
        for k in 1..=n {
            out.push(-(k as f64) * step);
            out.push(k as f64 * step);
        }
    }
    out
}

/// Disparity minimizing the mean absolute difference, on channel 0, between
/// each member's patch and the reference patch. Candidates that push a patch
/// off a view are skipped; ties go to the smaller magnitude.
pub fn select_disparity(lf: &LightField, window: &AngularWindow, pos: [usize; 2], candidates: &[f64], p: usize) -> f64 {
    let others: Vec<ViewIndex> = window.views.iter().copied().filter(|&v| v != window.reference).collect();
    if others.is_empty() {
        return 0.0;
    }
    let reference = lf.view(window.reference);
    let mut best = (f64::INFINITY, 0.0);
    for &d in candidates {
        if !fits(lf, window, pos, d, p) {
            continue;
        }
        let mut sad = 0.0;
        for &v in &others {
            let img = lf.view(v);
            let (x0, y0) = patch_origin(window, v, pos, d);
            for dy in 0..p {
                for dx in 0..p {
                    let a = bilinear(img, x0 + dx as f64, y0 + dy as f64, 0);
                    sad += (a - reference.get(pos[0] + dx, pos[1] + dy, 0)).abs();
                }
            }
        }
        sad /= (others.len() * p * p) as f64;
        if sad < best.0 {
            best = (sad, d);
        }
    }
    best.1
}

/// The `n` positions within `radius` of `pos` whose channel-0 patches are
/// closest to the patch at `pos` in squared distance. `pos` itself always
/// comes first; ties are broken by scan order.
pub fn find_similar(img: &Image, pos: [usize; 2], n: usize, radius: usize, p: usize) -> Vec<[usize; 2]> {
    let max_x = img.width() - p;
    let max_y = img.height() - p;
    let mut cands: Vec<(f64, [usize; 2])> = Vec::new();
    for y in pos[1].saturating_sub(radius)..=(pos[1] + radius).min(max_y) {
        for x in pos[0].saturating_sub(radius)..=(pos[0] + radius).min(max_x) {
            if [x, y] == pos {
                continue;
            }
            let mut ssd = 0.0;
            for dy in 0..p {
                for dx in 0..p {
                    let d = img.get(x + dx, y + dy, 0) - img.get(pos[0] + dx, pos[1] + dy, 0);
                    ssd += d * d;
                }
            }
            cands.push((ssd, [x, y]));
        }
    }
    // stable sort keeps scan order among equal distances
    cands.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = vec![pos];
    out.extend(cands.into_iter().take(n.saturating_sub(1)).map(|c| c.1));
    out
}

/// Reference positions along one axis: every `step` pixels plus the last
/// position that fits a patch.
pub fn reference_axis(len: usize, p: usize, step: usize) -> Vec<usize> {
    let last = len - p;
    let mut out: Vec<usize> = (0..=last).step_by(step.max(1)).collect();
    if *out.last().unwrap() != last {
        out.push(last);
    }
    out
}
