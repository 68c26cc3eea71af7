use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::colour::rgb_to_lab;
use crate::error::Result;
use crate::lightfield::{LightField, ViewIndex};

use super::{estimate_noise, hist_chi2, scielab_with_white, DEFAULT_BINS, DEFAULT_PATCH_SIZE, DEFAULT_SAMPLES_PER_DEGREE};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReportConfig {
    pub samples_per_degree: f64,
    pub bins: usize,
    pub noise_patch_size: usize,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            samples_per_degree: DEFAULT_SAMPLES_PER_DEGREE,
            bins: DEFAULT_BINS,
            noise_patch_size: DEFAULT_PATCH_SIZE,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewMetrics {
    pub view: ViewIndex,
    pub scielab: f64,
    pub hist_chi2: f64,
    pub noise_sigma: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    /// Mean over valid non-centre views.
    pub scielab: f64,
    /// Mean over valid non-centre views.
    pub hist_chi2: f64,
    /// Mean over all valid views.
    pub noise_sigma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub label: String,
    pub per_view: Vec<ViewMetrics>,
    pub aggregate: Aggregate,
}

/// Scores every valid view against the centre view.
pub fn lightfield_report(lf: &LightField, cfg: &ReportConfig) -> Result<MetricReport> {
    let rgb = lf.to_linear_rgb()?;
    let white = lf.white_point();
    let centre = rgb.centre();
    let centre_lab = rgb_to_lab(rgb.centre_view(), white)?;
    let views: Vec<ViewIndex> = rgb.valid_indices().collect();
    let per_view = views
        .par_iter()
        .map(|&v| -> Result<ViewMetrics> {
            let img = rgb.view(v);
            let (s, h) = if v == centre {
                (0.0, 0.0)
            } else {
                (
                    scielab_with_white(img, rgb.centre_view(), cfg.samples_per_degree, white)?,
                    hist_chi2(&rgb_to_lab(img, white)?, &centre_lab, cfg.bins)?,
                )
            };
            Ok(ViewMetrics {
                view: v,
                scielab: s,
                hist_chi2: h,
                noise_sigma: estimate_noise(img, cfg.noise_patch_size)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let others: Vec<&ViewMetrics> = per_view.iter().filter(|m| m.view != centre).collect();
    let mean = |vals: Vec<f64>| if vals.is_empty() { 0.0 } else { vals.iter().sum::<f64>() / vals.len() as f64 };
    let aggregate = Aggregate {
        scielab: mean(others.iter().map(|m| m.scielab).collect()),
        hist_chi2: mean(others.iter().map(|m| m.hist_chi2).collect()),
        noise_sigma: mean(per_view.iter().map(|m| m.noise_sigma).collect()),
    };
    Ok(MetricReport {
        label: String::new(),
        per_view,
        aggregate,
    })
}

impl MetricReport {
    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Fixed-width table, one row per view followed by the aggregate row.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if !self.label.is_empty() {
            out.push_str(&format!("# {}\n", self.label));
        }
        out.push_str(&format!("{:>5} {:>5} {:>12} {:>12} {:>12}\n", "row", "col", "scielab", "hist_chi2", "noise"));
        for m in &self.per_view {
            out.push_str(&format!(
                "{:>5} {:>5} {:>12.6} {:>12.6} {:>12.6}\n",
                m.view.row, m.view.col, m.scielab, m.hist_chi2, m.noise_sigma
            ));
        }
        let a = &self.aggregate;
        out.push_str(&format!(
            "{:>11} {:>12.6} {:>12.6} {:>12.6}\n",
            "mean", a.scielab, a.hist_chi2, a.noise_sigma
        ));
        out
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["row", "col", "scielab", "hist_chi2", "noise_sigma"])
            .map_err(csv_error)?;
        for m in &self.per_view {
            w.serialize((m.view.row, m.view.col, m.scielab, m.hist_chi2, m.noise_sigma))
                .map_err(csv_error)?;
        }
        let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

fn csv_error(e: csv::Error) -> crate::error::Error {
    std::io::Error::other(e.to_string()).into()
}

/// One row per labelled report with its aggregate metrics.
pub fn comparison_table(reports: &[MetricReport]) -> String {
    let mut out = format!("{:<16} {:>12} {:>12} {:>12}\n", "run", "scielab", "hist_chi2", "noise");
    for r in reports {
        let a = &r.aggregate;
        out.push_str(&format!(
            "{:<16} {:>12.6} {:>12.6} {:>12.6}\n",
            r.label, a.scielab, a.hist_chi2, a.noise_sigma
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::colour::{lab_to_rgb, WhitePoint};
    use crate::sim::{synth_lightfield, SceneKind};

    #[test]
    fn identical_views_have_zero_distances() {
        let lf = synth_lightfield(SceneKind::TexturedDisparity, 3, 3, 40, 40, 0.0).unwrap();
        let r = lightfield_report(&lf, &ReportConfig::default()).unwrap();
        assert_eq!(r.per_view.len(), 9);
        assert_eq!(r.aggregate.scielab, 0.0);
        assert_eq!(r.aggregate.hist_chi2, 0.0);
    }

    #[test]
    fn equal_shifts_give_the_single_pair_value() {
        let lf = synth_lightfield(SceneKind::TexturedDisparity, 3, 3, 40, 40, 0.0).unwrap();
        let centre = lf.centre();
        let shifted = lf
            .map_views(lf.colour_space(), |v, img| {
                if v == centre {
                    return Ok(img.clone());
                }
                let mut lab = rgb_to_lab(img, WhitePoint::D65)?;
                for px in lab.data_mut().chunks_exact_mut(3) {
                    px[0] += 10.0;
                }
                Ok(lab_to_rgb(&lab, WhitePoint::D65)?.image)
            })
            .unwrap();
        let r = lightfield_report(&shifted, &ReportConfig::default()).unwrap();
        let single = r.per_view.iter().find(|m| m.view == ViewIndex::new(0, 0)).unwrap().hist_chi2;
        assert!(single > 0.1);
        assert!((r.aggregate.hist_chi2 - single).abs() < 1e-12);
        let direct: f64 = r.per_view.iter().map(|m| m.noise_sigma).sum::<f64>() / 9.0;
        assert!((r.aggregate.noise_sigma - direct).abs() < 1e-15);
    }

    #[test]
    fn tables_have_a_row_per_view() {
        let lf = synth_lightfield(SceneKind::SmoothGradient, 3, 3, 32, 32, 0.0).unwrap();
        let r = lightfield_report(&lf, &ReportConfig::default()).unwrap().with_label("x");
        assert_eq!(r.to_text().lines().count(), 1 + 1 + 9 + 1);
        assert_eq!(r.to_csv().unwrap().lines().count(), 10);
        assert_eq!(comparison_table(&[r.clone(), r]).lines().count(), 3);
    }
}
