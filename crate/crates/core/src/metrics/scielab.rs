use nalgebra::{DMatrix, Matrix3};

use crate::colour::{mat3_mul, xyz_to_lab, WhitePoint, RGB_TO_XYZ};
use crate::error::{Error, Result};
use crate::image::Image;

/// XYZ to the luminance, red-green and blue-yellow opponent channels.
pub const XYZ_TO_OPPONENT: [[f64; 3]; 3] = [
    [0.279, 0.72, -0.107],
    [-0.449, 0.29, -0.077],
    [0.086, -0.59, 0.501],
];

/// `(weight, spread in degrees of visual angle)` of each channel's Gaussians.
pub const LUM_KERNEL: [(f64, f64); 3] = [(1.00327, 0.05), (0.114416, 0.225), (-0.117686, 7.0)];
pub const RG_KERNEL: [(f64, f64); 2] = [(0.616725, 0.0685), (0.383275, 0.826)];
pub const BY_KERNEL: [(f64, f64); 2] = [(0.567885, 0.0920), (0.432115, 0.6451)];

pub const DEFAULT_SAMPLES_PER_DEGREE: f64 = 23.0;

/// Index into a signal of length `n` under half-sample symmetric extension.
fn reflect(j: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = j.rem_euclid(period) as usize;
    if m >= n {
        2 * n - 1 - m
    } else {
        m
    }
}

/// Dense `n x n` operator of a normalized Gaussian blur, truncated at three
/// standard deviations, with symmetric boundary extension folded in.
fn blur_operator(n: usize, sigma: f64) -> DMatrix<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|t| (-(t * t) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    let mut op = DMatrix::zeros(n, n);
    for i in 0..n {
        for (k, w) in taps.iter().enumerate() {
            let j = reflect(i as isize + k as isize - radius, n);
            op[(i, j)] += w / total;
        }
    }
    op
}

/// Applies a weighted sum of separable Gaussians to one plane.
fn filter_plane(plane: &DMatrix<f64>, kernel: &[(f64, f64)], spd: f64) -> DMatrix<f64> {
    let (h, w) = plane.shape();
    let mut out = DMatrix::zeros(h, w);
    for &(weight, spread) in kernel {
        let sigma = spread * spd;
        let rows = blur_operator(h, sigma);
        let cols = blur_operator(w, sigma);
        out += (rows * plane * cols.transpose()) * weight;
    }
    out
}

/// Spatially filtered CIELAB image of a linear RGB input.
pub fn scielab_lab(img: &Image, samples_per_degree: f64, white: WhitePoint) -> Result<Image> {
    img.require_channels(3)?;
    if !(samples_per_degree > 0.0) {
        return Err(Error::invalid("samples_per_degree must be positive"));
    }
    let (w, h) = (img.width(), img.height());
    let mut planes = [DMatrix::zeros(h, w), DMatrix::zeros(h, w), DMatrix::zeros(h, w)];
    for y in 0..h {
        for x in 0..w {
            let opp = mat3_mul(&XYZ_TO_OPPONENT, mat3_mul(&RGB_TO_XYZ, img.pixel(x, y)));
            for c in 0..3 {
                planes[c][(y, x)] = opp[c];
            }
        }
    }
    let filtered = [
        filter_plane(&planes[0], &LUM_KERNEL, samples_per_degree),
        filter_plane(&planes[1], &RG_KERNEL, samples_per_degree),
        filter_plane(&planes[2], &BY_KERNEL, samples_per_degree),
    ];
    let inv = Matrix3::from_fn(|r, c| XYZ_TO_OPPONENT[r][c])
        .try_inverse()
        .expect("opponent matrix is invertible");
    let inv: [[f64; 3]; 3] = std::array::from_fn(|r| std::array::from_fn(|c| inv[(r, c)]));
    Ok(Image::from_fn(w, h, 3, |x, y| {
        let opp = [filtered[0][(y, x)], filtered[1][(y, x)], filtered[2][(y, x)]];
        xyz_to_lab(mat3_mul(&inv, opp), white).to_array()
    }))
}

/// Mean S-CIELab difference between two linear RGB images.
pub fn scielab(a: &Image, b: &Image, samples_per_degree: f64) -> Result<f64> {
    scielab_with_white(a, b, samples_per_degree, WhitePoint::D65)
}

pub fn scielab_with_white(a: &Image, b: &Image, samples_per_degree: f64, white: WhitePoint) -> Result<f64> {
    a.check_same_shape(b)?;
    if a == b {
        return Ok(0.0);
    }
    let la = scielab_lab(a, samples_per_degree, white)?;
    let lb = scielab_lab(b, samples_per_degree, white)?;
    let total: f64 = la
        .pixels()
        .zip(lb.pixels())
        .map(|(p, q)| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt())
        .sum();
    Ok(total / la.len() as f64)
}
