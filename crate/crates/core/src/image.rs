use crate::error::{Error, Result};

/// A dense floating-point image stored row-major with interleaved channels.
///
/// Linear RGB and sRGB data is nominally in `[0, 1]`; LAB images keep the
/// native CIELAB ranges.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self::filled(width, height, channels, 0.0)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        assert!(channels == 1 || channels == 3, "channels must be 1 or 3");
        Image {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::invalid(format!("unsupported channel count {channels}")));
        }
        if data.len() != width * height * channels {
            return Err(Error::DimensionMismatch {
                expected: format!("{} samples", width * height * channels),
                actual: format!("{} samples", data.len()),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("image contains non-finite samples"));
        }
        Ok(Image {
            width,
            height,
            channels,
            data,
        })
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn<F>(width: usize, height: usize, channels: usize, mut f: F) -> Self
    where
        F: FnMut(usize, usize) -> [f64; 3],
    {
        let mut img = Image::new(width, height, channels);
        for y in 0..height {
            for x in 0..width {
                let px = f(x, y);
                let base = (y * width + x) * channels;
                img.data[base..base + channels].copy_from_slice(&px[..channels]);
            }
        }
        img
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.width == 0 || self.height == 0
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    /// Sample with coordinates clamped to the image border.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize, c: usize) -> f64 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.get(x, y, c)
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let base = (y * self.width + x) * self.channels;
        if self.channels == 3 {
            [self.data[base], self.data[base + 1], self.data[base + 2]]
        } else {
            let v = self.data[base];
            [v, v, v]
        }
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, px: [f64; 3]) {
        let base = (y * self.width + x) * self.channels;
        let n = self.channels;
        self.data[base..base + n].copy_from_slice(&px[..n]);
    }

    pub fn pixels(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.channels)
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub(crate) fn check_same_shape(&self, other: &Image) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.shape_string(),
                actual: other.shape_string(),
            })
        }
    }

    pub(crate) fn require_channels(&self, channels: usize) -> Result<()> {
        if self.channels == channels {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "expected a {channels}-channel image, got {} channels",
                self.channels
            )))
        }
    }

    pub fn shape_string(&self) -> String {
        format!("{}x{}x{}", self.width, self.height, self.channels)
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Image {
        Image {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Clamps every sample into `[lo, hi]`.
    pub fn clamp(&self, lo: f64, hi: f64) -> Image {
        self.map(|v| v.clamp(lo, hi))
    }

    /// Extracts one channel as a single-channel image.
    pub fn channel(&self, c: usize) -> Image {
        assert!(c < self.channels);
        Image {
            width: self.width,
            height: self.height,
            channels: 1,
            data: self.data.iter().skip(c).step_by(self.channels).copied().collect(),
        }
    }

    /// Rec.709 luminance of a linear RGB image (identity on single-channel input).
    pub fn luminance(&self) -> Image {
        if self.channels == 1 {
            return self.clone();
        }
        Image {
            width: self.width,
            height: self.height,
            channels: 1,
            data: self
                .pixels()
                .map(|p| 0.2126 * p[0] + 0.7152 * p[1] + 0.0722 * p[2])
                .collect(),
        }
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn channel_means(&self) -> Vec<f64> {
        let n = self.len().max(1) as f64;
        let mut sums = vec![0.0; self.channels];
        for px in self.pixels() {
            for (s, v) in sums.iter_mut().zip(px) {
                *s += v;
            }
        }
        sums.into_iter().map(|s| s / n).collect()
    }

    /// Copies a `w`x`h` window whose top-left corner is `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Image {
        assert!(x0 + w <= self.width && y0 + h <= self.height);
        let mut out = Image::new(w, h, self.channels);
        let c = self.channels;
        for y in 0..h {
            let src = ((y0 + y) * self.width + x0) * c;
            out.data[y * w * c..(y + 1) * w * c].copy_from_slice(&self.data[src..src + w * c]);
        }
        out
    }
}

/// Mean squared error between two images of identical shape.
pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    a.check_same_shape(b)?;
    let n = a.data.len().max(1) as f64;
    Ok(a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / n)
}

/// Peak signal-to-noise ratio in dB for a unit peak value.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    let e = mse(a, b)?;
    Ok(if e == 0.0 { f64::INFINITY } else { -10.0 * e.log10() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_wrong_length() {
        assert!(Image::from_vec(2, 2, 3, vec![0.0; 11]).is_err());
        assert!(Image::from_vec(2, 2, 2, vec![0.0; 8]).is_err());
    }

    #[test]
    fn rejects_nan() {
        assert!(Image::from_vec(1, 1, 1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn crop_and_channel() {
        let img = Image::from_fn(4, 3, 3, |x, y| [x as f64, y as f64, 7.0]);
        let c = img.crop(1, 1, 2, 2);
        assert_eq!(c.pixel(0, 0), [1.0, 1.0, 7.0]);
        assert_eq!(c.pixel(1, 1), [2.0, 2.0, 7.0]);
        assert_eq!(img.channel(1).get(2, 2, 0), 2.0);
    }

    #[test]
    fn psnr_of_identical_images_is_infinite() {
        let a = Image::filled(3, 3, 3, 0.4);
        assert!(psnr(&a, &a).unwrap().is_infinite());
        let b = Image::filled(3, 3, 3, 0.5);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
    }
}
