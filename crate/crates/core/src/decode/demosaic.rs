//! Gradient-corrected bilinear demosaicing (Malvar, He and Cutler 2004).

use rayon::prelude::*;

use crate::decode::{BayerPattern, CfaColour};
use crate::error::{Error, Result};
use crate::image::Image;

/// Reflect-101 border handling; keeps the CFA parity of mirrored samples.
#[inline]
fn mirror(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * (n - 1);
    let mut i = i.rem_euclid(period);
    if i >= n {
        i = period - i;
    }
    i as usize
}

/// Reconstructs RGB at every sensor pixel with the 5x5 gradient-corrected
/// linear filters. Output is clipped to `[0, 1]`.
pub fn demosaic(mosaic: &Image, pattern: BayerPattern) -> Result<Image> {
    mosaic.require_channels(1)?;
    let (w, h) = (mosaic.width(), mosaic.height());
    if w < 5 || h < 5 {
        return Err(Error::ImageTooSmall(format!("demosaic needs at least 5x5, got {w}x{h}")));
    }
    let src = mosaic.data();
    let mut out = Image::new(w, h, 3);
    out.data_mut().par_chunks_mut(w * 3).enumerate().for_each(|(y, row)| {
        let at = |x: usize, dx: isize, dy: isize| -> f64 {
            let xx = mirror(x as isize + dx, w);
            let yy = mirror(y as isize + dy, h);
            src[yy * w + xx]
        };
        for x in 0..w {
            let c = at(x, 0, 0);
            let cross1 = at(x, -1, 0) + at(x, 1, 0) + at(x, 0, -1) + at(x, 0, 1);
            let cross2 = at(x, -2, 0) + at(x, 2, 0) + at(x, 0, -2) + at(x, 0, 2);
            let diag = at(x, -1, -1) + at(x, 1, -1) + at(x, -1, 1) + at(x, 1, 1);
            let horiz1 = at(x, -1, 0) + at(x, 1, 0);
            let horiz2 = at(x, -2, 0) + at(x, 2, 0);
            let vert1 = at(x, 0, -1) + at(x, 0, 1);
            let vert2 = at(x, 0, -2) + at(x, 0, 2);

            let green_at_rb = (4.0 * c + 2.0 * cross1 - cross2) / 8.0;
            // Colour whose samples sit on the horizontal neighbours of a green site.
            let along_row = (5.0 * c + 4.0 * horiz1 - horiz2 - diag + 0.5 * vert2) / 8.0;
            let along_col = (5.0 * c + 4.0 * vert1 - vert2 - diag + 0.5 * horiz2) / 8.0;
            let opposite = (6.0 * c + 2.0 * diag - 1.5 * cross2) / 8.0;

            let rgb = match pattern.colour_at(x, y) {
                CfaColour::Red => [c, green_at_rb, opposite],
                CfaColour::Blue => [opposite, green_at_rb, c],
                CfaColour::Green => {
                    if pattern.colour_at(x + 1, y) == CfaColour::Red {
                        [along_row, c, along_col]
                    } else {
                        [along_col, c, along_row]
                    }
                }
            };
            for (dst, v) in row[x * 3..x * 3 + 3].iter_mut().zip(rgb) {
                *dst = v.clamp(0.0, 1.0);
            }
        }
    });
    Ok(out)
}
