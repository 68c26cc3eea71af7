//! Global colour transfer between views with a thin plate spline in CIELAB.
//!
//! The spline is fitted by registering two Gaussian mixtures: one centred on
//! the transformed target colours of a correspondence set, one on the matching
//! palette colours. The bandwidth is annealed from coarse to fine.

mod fit;
mod gmm;
mod lut;
mod tps;

pub use fit::{fit_transfer, fit_transfer_traced, FitTrace, StageTrace, TransferConfig};
pub use gmm::{gmm_cost, gmm_cost_gradient, pair_density, regularizer, TpsGradient};
pub use lut::{recolour_image, recolour_lab, LabLut, Recoloured, LUT_SIZE};
pub use tps::{kernel, TpsTransform};

#[cfg(test)]
pub(crate) fn set_from(pairs: &[([f64; 3], [f64; 3])]) -> crate::correspondence::CorrespondenceSet {
    use crate::colour::LabColor;
    use crate::correspondence::{Correspondence, CorrespondenceSet};
    CorrespondenceSet {
        pairs: pairs
            .iter()
            .map(|(t, p)| Correspondence {
                pos_t: [0, 0],
                pos_p: [0, 0],
                c_t: LabColor::from_array(*t),
                c_p: LabColor::from_array(*p),
            })
            .collect(),
        width: 1,
        height: 1,
        seeds: pairs.len(),
    }
}
