//! Integrability diagnostics: fiber maps, projected supports, rest points and
//! the combined corner/foliation verdict.

mod aubry;
mod curvature;
mod fixed_points;
mod foliation;

pub use aubry::{aubry_support_approx, AubryError, AubrySupport, SupportClass, SupportParams};
pub use curvature::{gauss_curvature, max_abs_curvature};
pub use fixed_points::{fixed_point_scan, FixedPoint, FixedPointScan, ScanParams};
pub use foliation::{
    default_fibers, foliation_probe, hull_area, CGrid, FiberSample, FoliationProbe, FoliationProbeResult,
    COVERAGE_MIN, INJECTIVITY_MIN,
};

use rayon::prelude::*;
use serde::Serialize;

use crate::lagrangian::{Lagrangian, TorusPoint, Vec2};
use crate::loopmin::{MinimizeOptions, WindingClass};
use crate::mather::{corner_probe, BetaGrid, DirectBeta, HomologyClass, NodeRule, RationalClass, SubdiffEstimate};
use crate::weakkam::{Grid2, SolverParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    #[serde(rename = "consistent-with-C0-integrable")]
    ConsistentWithC0Integrable,
    #[serde(rename = "not-C0-integrable")]
    NotC0Integrable,
    Inconclusive,
}

impl Verdict {
    pub fn parse(s: &str) -> Option<Self> {
        [Verdict::ConsistentWithC0Integrable, Verdict::NotC0Integrable, Verdict::Inconclusive]
            .into_iter()
            .find(|v| v.as_str() == s)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::ConsistentWithC0Integrable => "consistent-with-C0-integrable",
            Verdict::NotC0Integrable => "not-C0-integrable",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

/// Resolutions and thresholds of [`c1_vs_integrability_report`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Budgets {
    pub beta_grid: BetaGrid,
    pub corner_classes: Vec<RationalClass>,
    /// Step divisor of the corner probe.
    pub corner_m: u32,
    /// Lower bound on the corner threshold.
    pub corner_floor: f64,
    /// Multiple of the flat-case noise in the corner threshold.
    pub noise_factor: f64,
    pub fibers: Vec<TorusPoint>,
    pub c_grid: CGrid,
    pub kam_m: usize,
    pub solver: SolverParams,
    /// Tolerance on potential range and curvature for the mechanical check.
    pub mechanical_tol: f64,
    pub mechanical_res: usize,
}

impl Default for Budgets {
    fn default() -> Self {
        Self {
            beta_grid: BetaGrid {
                nodes: NodeRule::PerUnit(48),
                k_max: 1,
                loop_opts: MinimizeOptions {
                    n_restarts: 4,
                    ..MinimizeOptions::default()
                },
                rest_res: 64,
            },
            corner_classes: default_class_ladder(),
            corner_m: 4,
            corner_floor: 1e-3,
            noise_factor: 10.0,
            fibers: default_fibers(),
            c_grid: CGrid::square(1.0, 5),
            kam_m: 32,
            solver: SolverParams::default(),
            mechanical_tol: 1e-6,
            mechanical_res: 32,
        }
    }
}

/// Sixteen classes: eight primitive directions at norms ½ and 1.
pub fn default_class_ladder() -> Vec<RationalClass> {
    let dirs = [(1, 0), (0, 1), (1, 1), (1, -1), (2, 1), (1, 2), (2, -1), (1, -2)];
    let mut out = Vec::new();
    for r in [0.5, 1.0] {
        for (p, q) in dirs {
            let w = WindingClass::new(p, q);
            out.push(RationalClass::new(w, r / w.as_vec().norm()).expect("positive scale"));
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct CornerSummary {
    pub max_gap: f64,
    /// Class attaining `max_gap` when that gap is significant.
    pub offending: Option<HomologyClass>,
    pub threshold: f64,
    pub flat_noise: f64,
    pub estimates: Vec<SubdiffEstimate>,
    pub failed: Vec<(HomologyClass, String)>,
}

impl CornerSummary {
    pub fn significant(&self) -> bool {
        self.offending.is_some()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FoliationSummary {
    pub injective: bool,
    pub covers: bool,
    pub passes: bool,
    pub min_injectivity: f64,
    pub min_coverage: f64,
    pub max_continuity: f64,
    pub probe: Option<FoliationProbe>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MechanicalCheck {
    pub potential_range: f64,
    pub max_abs_curvature: f64,
    pub tol: f64,
    /// Constant potential and flat metric.
    pub flat: bool,
    pub anomalous: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct IntegrabilityVerdict {
    pub verdict: Verdict,
    pub corner: CornerSummary,
    pub foliation: FoliationSummary,
    pub mechanical: Option<MechanicalCheck>,
    /// False when the foliation probe passes while a corner is found.
    pub foliation_implies_c1: bool,
    pub retained_prior: bool,
    pub notes: Vec<String>,
    pub budgets: Budgets,
}

fn scan_corners(spec: &Lagrangian, budgets: &Budgets) -> (Vec<SubdiffEstimate>, Vec<(HomologyClass, String)>) {
    let src = DirectBeta::new(spec, budgets.beta_grid.clone());
    let results: Vec<_> = budgets
        .corner_classes
        .par_iter()
        .map(|c| (c.h(), corner_probe(&src, c, budgets.corner_m)))
        .collect();
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for (h, r) in results {
        match r {
            Ok(e) => ok.push(e),
            Err(e) => failed.push((h, e.to_string())),
        }
    }
    (ok, failed)
}

fn mechanical_check(spec: &Lagrangian, res: usize, tol: f64) -> Option<MechanicalCheck> {
    let Lagrangian::Mechanical { metric, potential } = spec else {
        return None;
    };
    let values: Vec<f64> = (0..res * res)
        .map(|k| potential.value(&(Vec2::new((k / res) as f64, (k % res) as f64) / res as f64)))
        .collect();
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let k = max_abs_curvature(metric, res);
    Some(MechanicalCheck {
        potential_range: hi - lo,
        max_abs_curvature: k,
        tol,
        flat: hi - lo < tol && k < tol,
        anomalous: false,
    })
}

/// Corner scan against the flat-case calibration plus the foliation probe.
///
/// A `prior` verdict of `not-C0-integrable` is kept even if this run finds no
/// corner.
pub fn c1_vs_integrability_report(
    spec: &Lagrangian,
    budgets: &Budgets,
    prior: Option<Verdict>,
) -> IntegrabilityVerdict {
    let mut notes = Vec::new();
    let (flat_est, flat_failed) = scan_corners(&Lagrangian::flat(), budgets);
    let flat_noise = flat_est.iter().map(|e| e.corner_gap.abs()).fold(0.0, f64::max);
    if !flat_failed.is_empty() {
        notes.push(format!("{} flat calibration classes failed", flat_failed.len()));
    }
    let threshold = budgets.corner_floor.max(budgets.noise_factor * flat_noise);

    let (estimates, failed) = scan_corners(spec, budgets);
    let top = estimates.iter().max_by(|a, b| a.corner_gap.total_cmp(&b.corner_gap));
    let max_gap = top.map_or(f64::NEG_INFINITY, |e| e.corner_gap);
    let offending = top.filter(|e| e.corner_gap > threshold).map(|e| e.h);
    if !failed.is_empty() {
        notes.push(format!("{} of {} corner classes failed", failed.len(), budgets.corner_classes.len()));
    }
    let corner = CornerSummary {
        max_gap,
        offending,
        threshold,
        flat_noise,
        estimates,
        failed,
    };

    let foliation = match Grid2::new(budgets.kam_m).and_then(|g| {
        foliation_probe(spec, &budgets.fibers, budgets.c_grid, g, &budgets.solver)
    }) {
        Ok(probe) => {
            if !probe.excluded.is_empty() {
                notes.push(format!(
                    "{} of {} cohomology classes excluded from the foliation probe",
                    probe.excluded.len(),
                    budgets.c_grid.n * budgets.c_grid.n
                ));
            }
            FoliationSummary {
                injective: probe.fibers.iter().all(|f| f.injective()),
                covers: probe.fibers.iter().all(|f| f.covers()),
                passes: probe.passes(),
                min_injectivity: probe.min_injectivity(),
                min_coverage: probe.min_coverage(),
                max_continuity: probe.max_continuity(),
                probe: Some(probe),
                error: None,
            }
        }
        Err(e) => FoliationSummary {
            injective: false,
            covers: false,
            passes: false,
            min_injectivity: 0.0,
            min_coverage: 0.0,
            max_continuity: 0.0,
            probe: None,
            error: Some(e.to_string()),
        },
    };

    let mut verdict = if corner.significant() {
        Verdict::NotC0Integrable
    } else if foliation.passes && corner.failed.is_empty() {
        Verdict::ConsistentWithC0Integrable
    } else {
        Verdict::Inconclusive
    };
    let foliation_implies_c1 = !(foliation.passes && corner.significant());
    if !foliation_implies_c1 {
        notes.push("foliation probe passed although a corner was found: solver or resolution defect".into());
    }
    let mut retained_prior = false;
    if let Some(p) = prior {
        if p == Verdict::NotC0Integrable && verdict != Verdict::NotC0Integrable {
            verdict = Verdict::NotC0Integrable;
            retained_prior = true;
            notes.push("corner evidence retained from the prior run".into());
        }
    }
    let mut mechanical = mechanical_check(spec, budgets.mechanical_res, budgets.mechanical_tol);
    if let Some(m) = mechanical.as_mut() {
        if m.potential_range >= m.tol {
            notes.push(format!("potential is not constant (range {:e})", m.potential_range));
        }
        if m.max_abs_curvature >= m.tol {
            notes.push(format!("metric is curved (max |K| {:e})", m.max_abs_curvature));
        }
        m.anomalous = verdict == Verdict::ConsistentWithC0Integrable && !m.flat;
        if m.anomalous {
            notes.push("consistent verdict for a non-flat mechanical system is anomalous".into());
        }
    }
    IntegrabilityVerdict {
        verdict,
        corner,
        foliation,
        mechanical,
        foliation_implies_c1,
        retained_prior,
        notes,
        budgets: budgets.clone(),
    }
}
