//! Micro-lens array geometry shared by the decoder and the simulator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Arrangement of lenslet rows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LensletLayout {
    Square,
    /// Odd lenslet rows are shifted right by half a lenslet.
    HexRowOffset,
}

/// Mapping between lenslet indices and continuous sensor coordinates.
///
/// Sensor pixel `(x, y)` has its centre at integer coordinates. Lenslet
/// `(s, t)` (row, column) is centred at
/// `offset + R(rotation) * (t * spacing_x + hex_shift(s), s * spacing_y)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LensletGrid {
    pub spacing_x: f64,
    pub spacing_y: f64,
    pub rotation: f64,
    pub offset_x: f64,
    pub offset_y: f64,
    pub lens_rows: usize,
    pub lens_cols: usize,
    pub layout: LensletLayout,
}

/// Lenslet owning a sensor position, with the position's offset from the
/// lenslet centre expressed in the unrotated grid frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LensHit {
    pub row: usize,
    pub col: usize,
    pub dx: f64,
    pub dy: f64,
}

impl LensletGrid {
    /// A square, unrotated grid whose first lenslet sits at `(spacing / 2, spacing / 2)`.
    pub fn square(spacing: f64, lens_rows: usize, lens_cols: usize) -> Self {
        LensletGrid {
            spacing_x: spacing,
            spacing_y: spacing,
            rotation: 0.0,
            offset_x: (spacing / 2.0).floor(),
            offset_y: (spacing / 2.0).floor(),
            lens_rows,
            lens_cols,
            layout: LensletLayout::Square,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.spacing_x > 2.0 && self.spacing_y > 2.0) {
            return Err(Error::invalid("lenslet spacing must exceed 2 pixels"));
        }
        if !(self.rotation.abs() < 0.1) {
            return Err(Error::invalid("lenslet grid rotation must be below 0.1 rad"));
        }
        if self.lens_rows == 0 || self.lens_cols == 0 {
            return Err(Error::invalid("lenslet grid is empty"));
        }
        if !(self.offset_x.is_finite() && self.offset_y.is_finite()) {
            return Err(Error::invalid("lenslet grid offset must be finite"));
        }
        Ok(())
    }

    #[inline]
    fn hex_shift(&self, row: usize) -> f64 {
        match self.layout {
            LensletLayout::HexRowOffset if row % 2 == 1 => self.spacing_x / 2.0,
            _ => 0.0,
        }
    }

    /// Rotates a vector from the grid frame into the sensor frame.
    #[inline]
    pub fn rotate(&self, dx: f64, dy: f64) -> (f64, f64) {
        let (s, c) = self.rotation.sin_cos();
        (c * dx - s * dy, s * dx + c * dy)
    }

    #[inline]
    fn unrotate(&self, dx: f64, dy: f64) -> (f64, f64) {
        let (s, c) = self.rotation.sin_cos();
        (c * dx + s * dy, -s * dx + c * dy)
    }

    #[inline]
    fn local_centre(&self, row: usize, col: usize) -> (f64, f64) {
        (col as f64 * self.spacing_x + self.hex_shift(row), row as f64 * self.spacing_y)
    }

    /// Sensor coordinates of a lenslet centre.
    #[inline]
    pub fn lens_centre(&self, row: usize, col: usize) -> (f64, f64) {
        let (lx, ly) = self.local_centre(row, col);
        let (rx, ry) = self.rotate(lx, ly);
        (self.offset_x + rx, self.offset_y + ry)
    }

    /// Nearest lenslet centre to a sensor position.
    pub fn nearest_lens(&self, x: f64, y: f64) -> LensHit {
        let (lx, ly) = self.unrotate(x - self.offset_x, y - self.offset_y);
        let s0 = (ly / self.spacing_y).round() as isize;
        let mut best = LensHit {
            row: 0,
            col: 0,
            dx: f64::INFINITY,
            dy: f64::INFINITY,
        };
        let mut best_d2 = f64::INFINITY;
        for s in (s0 - 1)..=(s0 + 1) {
            let s = s.clamp(0, self.lens_rows as isize - 1) as usize;
            let t0 = ((lx - self.hex_shift(s)) / self.spacing_x).round() as isize;
            for t in (t0 - 1)..=(t0 + 1) {
                let t = t.clamp(0, self.lens_cols as isize - 1) as usize;
                let (cx, cy) = self.local_centre(s, t);
                let (dx, dy) = (lx - cx, ly - cy);
                let d2 = dx * dx + dy * dy;
                if d2 < best_d2 {
                    best_d2 = d2;
                    best = LensHit { row: s, col: t, dx, dy };
                }
            }
        }
        best
    }

    /// Micro-lens radius in pixels.
    pub fn radius(&self) -> f64 {
        self.spacing_x.min(self.spacing_y) / 2.0
    }

    /// Whether every lenslet centre lies on a `width` x `height` sensor.
    pub fn fits_sensor(&self, width: usize, height: usize) -> bool {
        let corners = [
            (0, 0),
            (0, self.lens_cols - 1),
            (self.lens_rows - 1, 0),
            (self.lens_rows - 1, self.lens_cols - 1),
        ];
        let mut ok = true;
        for (r, c) in corners {
            // Hex rows shift right, so check both parities of the last row.
            for rr in [r, r.saturating_sub(1)] {
                let (x, y) = self.lens_centre(rr, c);
                ok &= x >= 0.0 && y >= 0.0 && x <= (width - 1) as f64 && y <= (height - 1) as f64;
            }
        }
        ok
    }

    /// Smallest sensor that holds the grid with half a lenslet of margin.
    pub fn sensor_size(&self) -> (usize, usize) {
        let mut max_x: f64 = 0.0;
        let mut max_y: f64 = 0.0;
        for r in [0, self.lens_rows - 1, self.lens_rows.saturating_sub(2)] {
            for c in [0, self.lens_cols - 1] {
                let (x, y) = self.lens_centre(r, c);
                max_x = max_x.max(x);
                max_y = max_y.max(y);
            }
        }
        (
            (max_x + self.spacing_x / 2.0).ceil() as usize + 1,
            (max_y + self.spacing_y / 2.0).ceil() as usize + 1,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_lens_recovers_centres() {
        let mut g = LensletGrid::square(10.0, 8, 8);
        g.rotation = 0.03;
        g.layout = LensletLayout::HexRowOffset;
        g.offset_x = 6.3;
        g.offset_y = 5.1;
        for s in 0..8 {
            for t in 0..8 {
                let (x, y) = g.lens_centre(s, t);
                let hit = g.nearest_lens(x + 0.7, y - 1.2);
                assert_eq!((hit.row, hit.col), (s, t));
                let (rx, ry) = g.rotate(hit.dx, hit.dy);
                assert!((rx - 0.7).abs() < 1e-9 && (ry + 1.2).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn validation() {
        let mut g = LensletGrid::square(10.0, 4, 4);
        assert!(g.validate().is_ok());
        g.rotation = 0.2;
        assert!(g.validate().is_err());
        let g = LensletGrid::square(2.0, 4, 4);
        assert!(g.validate().is_err());
    }

    #[test]
    fn sensor_size_fits() {
        let mut g = LensletGrid::square(9.5, 12, 7);
        g.layout = LensletLayout::HexRowOffset;
        let (w, h) = g.sensor_size();
        assert!(g.fits_sensor(w, h));
    }
}
