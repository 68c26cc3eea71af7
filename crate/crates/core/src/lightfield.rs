use serde::{Deserialize, Serialize};

use crate::colour::{self, WhitePoint};
use crate::error::{Error, Result};
use crate::image::Image;

/// Colour encoding of the samples held by a [`LightField`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColourSpace {
    LinearRgb,
    Srgb,
    Lab,
}

/// Position of a sub-aperture image in the view grid; row 0 is the top row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ViewIndex {
    pub row: usize,
    pub col: usize,
}

impl ViewIndex {
    pub const fn new(row: usize, col: usize) -> Self {
        ViewIndex { row, col }
    }

    /// Chebyshev distance between two views.
    pub fn chebyshev(self, other: ViewIndex) -> usize {
        self.row.abs_diff(other.row).max(self.col.abs_diff(other.col))
    }
}

impl std::fmt::Display for ViewIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

/// A `rows` x `cols` grid of sub-aperture images.
///
/// Every view, valid or not, holds an image of the common shape so that view
/// indexing never needs an `Option`. Invalid views carry whatever data the
/// producer left there (typically zeros) and are skipped by processing stages.
#[derive(Clone, Debug, PartialEq)]
pub struct LightField {
    rows: usize,
    cols: usize,
    views: Vec<Image>,
    valid: Vec<bool>,
    colour_space: ColourSpace,
    white_point: WhitePoint,
    history: Vec<String>,
}

impl LightField {
    pub fn new(rows: usize, cols: usize, views: Vec<Image>, colour_space: ColourSpace) -> Result<Self> {
        let valid = vec![true; rows * cols];
        Self::with_mask(rows, cols, views, valid, colour_space)
    }

    pub fn with_mask(
        rows: usize,
        cols: usize,
        views: Vec<Image>,
        valid: Vec<bool>,
        colour_space: ColourSpace,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid("light field needs at least one view"));
        }
        if views.len() != rows * cols || valid.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: format!("{} views", rows * cols),
                actual: format!("{} views / {} mask entries", views.len(), valid.len()),
            });
        }
        let first = &views[0];
        if let Some(bad) = views.iter().find(|v| !v.same_shape(first)) {
            return Err(Error::DimensionMismatch {
                expected: first.shape_string(),
                actual: bad.shape_string(),
            });
        }
        let lf = LightField {
            rows,
            cols,
            views,
            valid,
            colour_space,
            white_point: WhitePoint::D65,
            history: Vec::new(),
        };
        let c = lf.centre();
        if !lf.is_valid(c) {
            return Err(Error::MissingCentreView { row: c.row, col: c.col });
        }
        Ok(lf)
    }

    /// Builds a light field by evaluating `f` for every view index.
    pub fn from_views_fn(
        rows: usize,
        cols: usize,
        colour_space: ColourSpace,
        mut f: impl FnMut(ViewIndex) -> Image,
    ) -> Result<Self> {
        let views = (0..rows * cols).map(|i| f(ViewIndex::new(i / cols, i % cols))).collect();
        Self::new(rows, cols, views, colour_space)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn num_views(&self) -> usize {
        self.rows * self.cols
    }

    pub fn width(&self) -> usize {
        self.views[0].width()
    }

    pub fn height(&self) -> usize {
        self.views[0].height()
    }

    pub fn channels(&self) -> usize {
        self.views[0].channels()
    }

    pub fn colour_space(&self) -> ColourSpace {
        self.colour_space
    }

    pub fn white_point(&self) -> WhitePoint {
        self.white_point
    }

    pub fn set_white_point(&mut self, wp: WhitePoint) -> Result<()> {
        wp.validate()?;
        self.white_point = wp;
        Ok(())
    }

    /// Processing stages applied so far, oldest first.
    pub fn history(&self) -> &[String] {
        &self.history
    }

    pub fn push_history(&mut self, stage: impl Into<String>) {
        self.history.push(stage.into());
    }

    pub fn set_history(&mut self, history: Vec<String>) {
        self.history = history;
    }

    pub fn centre(&self) -> ViewIndex {
        ViewIndex::new(self.rows / 2, self.cols / 2)
    }

    pub fn index_of(&self, v: ViewIndex) -> usize {
        assert!(v.row < self.rows && v.col < self.cols, "view {v} out of range");
        v.row * self.cols + v.col
    }

    pub fn view(&self, v: ViewIndex) -> &Image {
        &self.views[self.index_of(v)]
    }

    pub fn centre_view(&self) -> &Image {
        self.view(self.centre())
    }

    pub fn views(&self) -> &[Image] {
        &self.views
    }

    pub fn valid_mask(&self) -> &[bool] {
        &self.valid
    }

    pub fn is_valid(&self, v: ViewIndex) -> bool {
        self.valid[self.index_of(v)]
    }

    /// Replaces a view's pixels. The new image must match the common shape.
    pub fn replace_view(&mut self, v: ViewIndex, img: Image) -> Result<()> {
        let i = self.index_of(v);
        self.views[i].check_same_shape(&img)?;
        self.views[i] = img;
        Ok(())
    }

    /// Marks a view invalid. The centre view cannot be invalidated.
    pub fn invalidate(&mut self, v: ViewIndex) -> Result<()> {
        if v == self.centre() {
            return Err(Error::invalid("the centre view must stay valid"));
        }
        let i = self.index_of(v);
        self.valid[i] = false;
        Ok(())
    }

    pub fn indices(&self) -> impl Iterator<Item = ViewIndex> + '_ {
        (0..self.rows * self.cols).map(|i| ViewIndex::new(i / self.cols, i % self.cols))
    }

    pub fn valid_indices(&self) -> impl Iterator<Item = ViewIndex> + '_ {
        self.indices().filter(|&v| self.is_valid(v))
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Applies `f` to every view, keeping grid, mask and metadata.
    pub fn map_views(
        &self,
        colour_space: ColourSpace,
        mut f: impl FnMut(ViewIndex, &Image) -> Result<Image>,
    ) -> Result<LightField> {
        let mut views = Vec::with_capacity(self.views.len());
        for (i, img) in self.views.iter().enumerate() {
            views.push(f(ViewIndex::new(i / self.cols, i % self.cols), img)?);
        }
        let mut out = LightField::with_mask(self.rows, self.cols, views, self.valid.clone(), colour_space)?;
        out.white_point = self.white_point;
        out.history = self.history.clone();
        Ok(out)
    }

    /// Converts to linear RGB, whatever the current encoding.
    pub fn to_linear_rgb(&self) -> Result<LightField> {
        let wp = self.white_point;
        match self.colour_space {
            ColourSpace::LinearRgb => Ok(self.clone()),
            ColourSpace::Srgb => self.map_views(ColourSpace::LinearRgb, |_, v| colour::srgb_decode(v)),
            ColourSpace::Lab => {
                self.map_views(ColourSpace::LinearRgb, |_, v| Ok(colour::lab_to_rgb(v, wp)?.image))
            }
        }
    }

    pub fn to_lab(&self) -> Result<LightField> {
        let wp = self.white_point;
        match self.colour_space {
            ColourSpace::Lab => Ok(self.clone()),
            _ => self
                .to_linear_rgb()?
                .map_views(ColourSpace::Lab, |_, v| colour::rgb_to_lab(v, wp)),
        }
    }

    pub fn to_srgb(&self) -> Result<LightField> {
        match self.colour_space {
            ColourSpace::Srgb => Ok(self.clone()),
            _ => self
                .to_linear_rgb()?
                .map_views(ColourSpace::Srgb, |_, v| colour::srgb_encode(v)),
        }
    }
}
