//! Colour correction of a whole light field by repeated view-to-view transfer.
//!
//! A [`RecolourPlan`] lists which palette views correct each target view. The
//! plan is executed in dependency levels: every step of a level only reads
//! views finished in earlier levels, so the steps of one level run in
//! parallel.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correspondence::{merge_correspondences, patch_match, CorrespondenceSet, MatchConfig};
use crate::error::{Error, Result};
use crate::lightfield::{ColourSpace, LightField, ViewIndex};
use crate::transfer::{fit_transfer, recolour_image, TpsTransform, TransferConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PropagationScheme {
    /// Every view takes the centre view as palette.
    Centre,
    /// Colours spread outward one neighbour at a time.
    Prop,
    /// As `Prop`, with the centre view's correspondences added to each step.
    #[serde(rename = "prop+centre", alias = "prop-centre")]
    PropCentre,
}

impl PropagationScheme {
    pub fn name(self) -> &'static str {
        match self {
            PropagationScheme::Centre => "centre",
            PropagationScheme::Prop => "prop",
            PropagationScheme::PropCentre => "prop+centre",
        }
    }
}

impl std::str::FromStr for PropagationScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "centre" | "center" => Ok(PropagationScheme::Centre),
            "prop" => Ok(PropagationScheme::Prop),
            "prop+centre" | "prop-centre" | "prop+center" => Ok(PropagationScheme::PropCentre),
            _ => Err(Error::invalid(format!("unknown propagation scheme {s:?}"))),
        }
    }
}

impl fmt::Display for PropagationScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PaletteState {
    Original,
    Corrected,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Palette {
    pub view: ViewIndex,
    pub state: PaletteState,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanStep {
    pub target: ViewIndex,
    pub palettes: Vec<Palette>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecolourPlan {
    pub scheme: PropagationScheme,
    pub centre: ViewIndex,
    pub steps: Vec<PlanStep>,
}

/// Outward order from `c` over `0..n`: `c - 1, c + 1, c - 2, c + 2, ...`.
fn outward(c: usize, n: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(n.saturating_sub(1));
    for d in 1..n {
        if d <= c {
            out.push(c - d);
        }
        if c + d < n {
            out.push(c + d);
        }
    }
    out
}

fn toward(i: usize, c: usize) -> usize {
    if i < c {
        i + 1
    } else {
        i - 1
    }
}

/// Lists the recolouring steps for a `rows` x `cols` grid with validity `valid`.
pub fn build_plan(rows: usize, cols: usize, valid: &[bool], scheme: PropagationScheme) -> Result<RecolourPlan> {
    if valid.len() != rows * cols {
        return Err(Error::DimensionMismatch {
            expected: format!("{} mask entries", rows * cols),
            actual: valid.len().to_string(),
        });
    }
    let centre = ViewIndex::new(rows / 2, cols / 2);
    let is_valid = |v: ViewIndex| valid[v.row * cols + v.col];
    if !is_valid(centre) {
        return Err(Error::MissingCentreView {
            row: centre.row,
            col: centre.col,
        });
    }
    let original = |v: ViewIndex| Palette {
        view: v,
        state: if v == centre {
            PaletteState::Original
        } else {
            PaletteState::Corrected
        },
    };

    let mut steps = Vec::new();
    if scheme == PropagationScheme::Centre {
        for i in 0..rows * cols {
            let v = ViewIndex::new(i / cols, i % cols);
            if v != centre && is_valid(v) {
                steps.push(PlanStep {
                    target: v,
                    palettes: vec![original(centre)],
                });
            }
        }
        return Ok(RecolourPlan { scheme, centre, steps });
    }

    let mut order = Vec::new();
    for r in outward(centre.row, rows) {
        order.push((ViewIndex::new(r, centre.col), ViewIndex::new(toward(r, centre.row), centre.col)));
    }
    let mut row_order = vec![centre.row];
    row_order.extend(outward(centre.row, rows));
    for r in row_order {
        for c in outward(centre.col, cols) {
            order.push((ViewIndex::new(r, c), ViewIndex::new(r, toward(c, centre.col))));
        }
    }

    let mut done = vec![false; rows * cols];
    done[centre.row * cols + centre.col] = true;
    for (target, inner) in order {
        if !is_valid(target) {
            continue;
        }
        let palette = if done[inner.row * cols + inner.col] {
            inner
        } else {
            fallback_palette(target, centre, rows, cols, &done)
        };
        let mut palettes = vec![original(palette)];
        if scheme == PropagationScheme::PropCentre && palette != centre {
            palettes.push(original(centre));
        }
        steps.push(PlanStep { target, palettes });
        done[target.row * cols + target.col] = true;
    }
    Ok(RecolourPlan { scheme, centre, steps })
}

/// Finished view nearest to `target`, preferring views closer to the centre.
fn fallback_palette(target: ViewIndex, centre: ViewIndex, rows: usize, cols: usize, done: &[bool]) -> ViewIndex {
    (0..rows * cols)
        .filter(|&i| done[i])
        .map(|i| ViewIndex::new(i / cols, i % cols))
        .min_by_key(|v| (v.chebyshev(target), v.chebyshev(centre), v.row, v.col))
        .unwrap_or(centre)
}

impl RecolourPlan {
    /// Dependency level of every step: 1 + the deepest level among its palettes.
    pub fn levels(&self) -> Vec<usize> {
        let mut level_of = std::collections::BTreeMap::new();
        level_of.insert(self.centre, 0usize);
        self.steps
            .iter()
            .map(|s| {
                let l = 1 + s.palettes.iter().map(|p| level_of.get(&p.view).copied().unwrap_or(0)).max().unwrap_or(0);
                level_of.insert(s.target, l);
                l
            })
            .collect()
    }

    /// Checks that corrected palettes are produced earlier and every listed
    /// target appears once.
    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for s in &self.steps {
            if s.target == self.centre {
                return Err(Error::invalid("the centre view cannot be a target"));
            }
            for p in &s.palettes {
                let ok = match p.state {
                    PaletteState::Original => p.view == self.centre,
                    PaletteState::Corrected => seen.contains(&p.view),
                };
                if !ok {
                    return Err(Error::invalid(format!("palette {} of {} is not ready", p.view, s.target)));
                }
            }
            if !seen.insert(s.target) {
                return Err(Error::invalid(format!("{} is targeted twice", s.target)));
            }
        }
        Ok(())
    }
}

impl fmt::Display for RecolourPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# scheme {} centre {}", self.scheme, self.centre)?;
        for (s, level) in self.steps.iter().zip(self.levels()) {
            write!(f, "{} <-", s.target)?;
            for (i, p) in s.palettes.iter().enumerate() {
                let state = match p.state {
                    PaletteState::Original => "original",
                    PaletteState::Corrected => "corrected",
                };
                write!(f, "{} {} {}", if i == 0 { "" } else { "," }, p.view, state)?;
            }
            writeln!(f, " [level {level}]")?;
        }
        Ok(())
    }
}

/// Outcome of one recolouring step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewLog {
    pub target: ViewIndex,
    pub palettes: Vec<ViewIndex>,
    pub correspondences: usize,
    pub clipped_pixels: usize,
    pub transform: Option<TpsTransform>,
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct Recoloured {
    pub lightfield: LightField,
    pub plan: RecolourPlan,
    pub log: Vec<ViewLog>,
}

fn pair_seed(base: u64, lf: &LightField, target: ViewIndex, palette: ViewIndex) -> u64 {
    let pair = (lf.index_of(target) as u64) << 32 | lf.index_of(palette) as u64;
    base ^ pair.wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

fn run_step(
    lf: &LightField,
    step: &PlanStep,
    transfer_cfg: &TransferConfig,
    match_cfg: &MatchConfig,
) -> Result<(crate::image::Image, ViewLog)> {
    let target = lf.view(step.target);
    let mut corr = CorrespondenceSet::empty(lf.width(), lf.height());
    let mut palettes = Vec::new();
    for p in &step.palettes {
        // A palette invalidated by an earlier failure is replaced by the centre.
        let view = if lf.is_valid(p.view) { p.view } else { lf.centre() };
        if palettes.contains(&view) {
            continue;
        }
        palettes.push(view);
        let cfg = MatchConfig {
            seed: pair_seed(match_cfg.seed, lf, step.target, view),
            white_point: lf.white_point(),
            ..*match_cfg
        };
        let set = patch_match(target, lf.view(view), &cfg)?;
        corr = merge_correspondences(&corr, &set)?;
    }
    let mut log = ViewLog {
        target: step.target,
        palettes,
        correspondences: corr.len(),
        clipped_pixels: 0,
        transform: None,
        error: None,
    };
    let tps = fit_transfer(&corr, transfer_cfg)?;
    let out = recolour_image(target, &tps, lf.white_point())?;
    log.clipped_pixels = out.clipped_pixels;
    log.transform = Some(tps);
    Ok((out.image, log))
}

/// Recolours every valid non-centre view of a linear RGB light field.
///
/// Views without enough correspondences are marked invalid and logged; any
/// other error aborts the run.
pub fn recolour_lightfield(
    lf: &LightField,
    scheme: PropagationScheme,
    transfer_cfg: &TransferConfig,
    match_cfg: &MatchConfig,
) -> Result<Recoloured> {
    if lf.colour_space() != ColourSpace::LinearRgb {
        return Err(Error::invalid("recolouring expects a linear RGB light field"));
    }
    transfer_cfg.validate()?;
    match_cfg.validate()?;
    let plan = build_plan(lf.rows(), lf.cols(), lf.valid_mask(), scheme)?;
    let levels = plan.levels();
    let depth = levels.iter().copied().max().unwrap_or(0);
    let mut out = lf.clone();
    let mut log = Vec::with_capacity(plan.steps.len());

    for level in 1..=depth {
        let batch: Vec<&PlanStep> = plan
            .steps
            .iter()
            .zip(&levels)
            .filter(|(_, &l)| l == level)
            .map(|(s, _)| s)
            .collect();
        let results: Vec<_> = batch
            .par_iter()
            .map(|step| run_step(&out, step, transfer_cfg, match_cfg))
            .collect();
        for (step, res) in batch.into_iter().zip(results) {
            match res {
                Ok((img, entry)) => {
                    out.replace_view(step.target, img)?;
                    log.push(entry);
                }
                Err(e @ Error::InsufficientCorrespondences { .. }) => {
                    out.invalidate(step.target)?;
                    log.push(ViewLog {
                        target: step.target,
                        palettes: step.palettes.iter().map(|p| p.view).collect(),
                        correspondences: 0,
                        clipped_pixels: 0,
                        transform: None,
                        error: Some(e.to_string()),
                    });
                }
                Err(e) => return Err(e),
            }
        }
    }
    out.push_history(format!("recoloured:{}", scheme.name()));
    Ok(Recoloured {
        lightfield: out,
        plan,
        log,
    })
}
