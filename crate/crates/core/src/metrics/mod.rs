//! Evaluation metrics: spatial CIELAB difference, LAB histogram distance and
//! blind noise level estimation.

mod histogram;
mod noise;
mod report;
mod scielab;

pub use histogram::{chi2, hist_chi2, lab_histogram, DEFAULT_BINS, LAB_RANGES};
pub use noise::{estimate_noise, DEFAULT_PATCH_SIZE};
pub use report::{comparison_table, lightfield_report, Aggregate, MetricReport, ReportConfig, ViewMetrics};
pub use scielab::{
    scielab, scielab_lab, scielab_with_white, BY_KERNEL, DEFAULT_SAMPLES_PER_DEGREE, LUM_KERNEL, RG_KERNEL,
    XYZ_TO_OPPONENT,
};
