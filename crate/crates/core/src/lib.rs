//! Lenslet light field decoding, colour correction and denoising.
//!
//! The crate turns a lenslet RAW capture plus its white image into a grid of
//! sub-aperture views, corrects colour inconsistencies between the views by
//! transferring the centre view's palette outward, and removes noise with a
//! collaborative filter that groups patches across views. A forward simulator
//! produces synthetic captures with known ground truth.
//!
//! ```
//! use lfpipe::{synth_lightfield, SceneKind};
//!
//! let lf = synth_lightfield(SceneKind::FlatGrey, 3, 3, 16, 16, 0.0).unwrap();
//! assert_eq!(lf.num_views(), 9);
//! assert_eq!(lf.centre_view().get(4, 4, 1), 0.5);
//! ```

pub mod bundle;
pub mod colour;
pub mod correspondence;
pub mod denoise;
pub mod decode;
pub mod error;
pub mod grid;
pub mod image;
pub mod io;
pub mod lightfield;
pub mod metrics;
pub mod propagation;
pub mod sim;
pub mod transfer;

pub use error::{Error, Result};
pub use grid::{LensletGrid, LensletLayout};
pub use image::Image;
pub use lightfield::{ColourSpace, LightField, ViewIndex};
pub use sim::{synth_lightfield, SceneKind};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/light-fields.md")]
    mod light_fields {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/decoding.md")]
    mod decoding {}
    #[doc = include_str!("../../../book/src/correspondences.md")]
    mod correspondences {}
    #[doc = include_str!("../../../book/src/colour-transfer.md")]
    mod colour_transfer {}
    #[doc = include_str!("../../../book/src/propagation.md")]
    mod propagation {}
    #[doc = include_str!("../../../book/src/denoising.md")]
    mod denoising {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
