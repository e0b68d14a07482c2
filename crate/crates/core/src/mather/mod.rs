//! Mather's β-function sampled at rational homology classes, its lower convex
//! envelope, and the Fenchel conjugate α.
//!
//! For `h = s(p,q)` with `(p,q)` primitive, a loop of winding `k(p,q)` and
//! period `k/s` has rotation vector `h`; its average action is an upper bound
//! for `β(h)`, exact when a minimizing measure is carried by periodic orbits.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::lagrangian::{Lagrangian, Vec2};
use crate::loopmin::{gcd, minimize_loop, rest_minimizer, Loop, LoopError, MinimizeOptions, WindingClass};

pub mod envelope;
pub mod radial;
pub mod subdiff;

pub use radial::{radial_derivative, radial_flat, RadialDerivative, RadialFlat};
pub use subdiff::{corner_probe, corner_scan, subdiff_onesided, BetaSource, DirectBeta, SubdiffEstimate};

pub type HomologyClass = Vec2;
pub type CohomologyClass = Vec2;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MatherError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("insufficient resolution: {0}")]
    InsufficientResolution(String),
    #[error(transparent)]
    Loop(#[from] LoopError),
}

/// `h = scale · (p, q)` with `(p, q)` primitive, or the zero class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RationalClass {
    pub direction: WindingClass,
    pub scale: f64,
}

impl RationalClass {
    pub const ZERO: RationalClass = RationalClass {
        direction: WindingClass::ZERO,
        scale: 0.0,
    };

    /// Reduces `(p, q)` to its primitive part, folding the gcd into the scale.
    pub fn new(direction: WindingClass, scale: f64) -> Result<Self, MatherError> {
        if direction.is_zero() || scale == 0.0 {
            return Ok(Self::ZERO);
        }
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(MatherError::InvalidInput(format!("scale must be positive, got {scale}")));
        }
        let g = gcd(direction.p, direction.q);
        Ok(Self {
            direction: direction.primitive(),
            scale: scale * g as f64,
        })
    }

    pub fn is_zero(&self) -> bool {
        self.direction.is_zero()
    }

    pub fn h(&self) -> HomologyClass {
        self.direction.as_vec() * self.scale
    }

    /// Period of the once-around loop.
    pub fn base_period(&self) -> f64 {
        1.0 / self.scale
    }

    /// Same direction, scale multiplied by `t`.
    pub fn scaled(&self, t: f64) -> Result<Self, MatherError> {
        Self::new(self.direction, self.scale * t)
    }
}

/// Recover `s(p,q)` from a homology class whose slope has denominator at
/// most `max_den`.
pub fn rationalize(h: HomologyClass, max_den: i64) -> Option<RationalClass> {
    if !h[0].is_finite() || !h[1].is_finite() {
        return None;
    }
    let m = h[0].abs().max(h[1].abs());
    if m < 1e-14 {
        return Some(RationalClass::ZERO);
    }
    // one component of u is ±1
    let u = h / m;
    for d in 1..=max_den {
        let w = (u * d as f64).map(f64::round);
        let cross = w[0] * u[1] - w[1] * u[0];
        if cross.abs() <= 1e-11 * w.norm() {
            let dir = WindingClass::new(w[0] as i64, w[1] as i64);
            return RationalClass::new(dir, h.norm() / w.norm()).ok();
        }
    }
    None
}

/// How many loop samples a minimization of period `T` gets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum NodeRule {
    /// `N` samples per once-around loop.
    Fixed(usize),
    /// `⌈N · max(T, ‖(p,q)‖)⌉` samples per once-around loop.
    PerUnit(usize),
}

impl NodeRule {
    pub fn nodes(&self, class: &RationalClass, k: usize) -> usize {
        let base = match *self {
            NodeRule::Fixed(n) => n,
            NodeRule::PerUnit(n) => {
                let len = class.base_period().max(class.direction.as_vec().norm());
                (n as f64 * len).ceil() as usize
            }
        };
        base.max(crate::loopmin::MIN_NODES) * k
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetaGrid {
    pub nodes: NodeRule,
    /// Deepest multiple `k(p,q)` tried.
    pub k_max: usize,
    pub loop_opts: MinimizeOptions,
    /// Resolution of the rest-point scan behind `β(0)`.
    pub rest_res: usize,
}

impl Default for BetaGrid {
    fn default() -> Self {
        Self {
            nodes: NodeRule::PerUnit(64),
            k_max: 3,
            loop_opts: MinimizeOptions::default(),
            rest_res: 128,
        }
    }
}

impl BetaGrid {
    pub fn validate(&self) -> Result<(), MatherError> {
        if self.k_max == 0 {
            return Err(MatherError::InvalidInput("k_max must be ≥ 1".into()));
        }
        if self.rest_res == 0 {
            return Err(MatherError::InvalidInput("rest_res must be ≥ 1".into()));
        }
        let n = match self.nodes {
            NodeRule::Fixed(n) | NodeRule::PerUnit(n) => n,
        };
        if n == 0 {
            return Err(MatherError::InvalidInput("node count must be ≥ 1".into()));
        }
        self.loop_opts.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BetaSample {
    pub class: RationalClass,
    pub value: f64,
    /// Winding of the realizing loop, `k(p,q)`; zero for rest points.
    pub winding: WindingClass,
    /// Period of the realizing loop; `0` for rest points.
    pub period: f64,
    pub residual: f64,
    pub converged: bool,
    pub lp: Option<Loop>,
    /// Rest point realizing `β(0)`.
    pub rest_point: Option<Vec2>,
}

impl BetaSample {
    pub fn h(&self) -> HomologyClass {
        self.class.h()
    }
}

/// Upper bound for `β(h)`: best average action over windings `k(p,q)`,
/// `k = 1..k_max`, or `min_x L(x, 0)` at the zero class.
pub fn beta_at(spec: &Lagrangian, class: &RationalClass, grid: &BetaGrid) -> Result<BetaSample, MatherError> {
    grid.validate()?;
    if class.is_zero() {
        let x = rest_minimizer(spec, grid.rest_res);
        return Ok(BetaSample {
            class: RationalClass::ZERO,
            value: spec.rest_value(&x),
            winding: WindingClass::ZERO,
            period: 0.0,
            residual: spec.rest_gradient(&x).norm(),
            converged: true,
            lp: None,
            rest_point: Some(x),
        });
    }
    let mut best: Option<BetaSample> = None;
    for k in 1..=grid.k_max {
        let winding = class.direction.scaled(k as i64);
        let period = k as f64 * class.base_period();
        let n = grid.nodes.nodes(class, k);
        let m = match minimize_loop(spec, winding, period, n, &grid.loop_opts) {
            Ok(m) => m,
            Err(LoopError::NoDescent { best }) => *best,
            Err(e) => return Err(e.into()),
        };
        let cand = BetaSample {
            class: *class,
            value: m.action / period,
            winding,
            period,
            residual: m.residual,
            converged: m.converged,
            lp: Some(m.lp),
            rest_point: None,
        };
        let better = match &best {
            None => true,
            Some(b) => match (cand.converged, b.converged) {
                (true, false) => true,
                (false, true) => false,
                _ => cand.value < b.value - 1e-12,
            },
        };
        if better {
            best = Some(cand);
        }
    }
    Ok(best.expect("k_max ≥ 1"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BetaTable {
    pub samples: Vec<BetaSample>,
    /// Lower convex envelope at each sample.
    pub env: Vec<f64>,
    /// Raw value strictly above the envelope: the loop was not globally
    /// minimizing, or a convex combination of other classes beats it.
    pub superseded: Vec<bool>,
    pub directions: Vec<WindingClass>,
    pub radii: Vec<f64>,
}

/// Raw values above the envelope by more than this are superseded.
pub const SUPERSEDED_TOL: f64 = 1e-9;

/// Fill the polar grid `directions × radii` (plus the zero class on request)
/// and convexify.
pub fn beta_scan(
    spec: &Lagrangian,
    directions: &[WindingClass],
    radii: &[f64],
    include_zero: bool,
    grid: &BetaGrid,
) -> Result<BetaTable, MatherError> {
    if directions.is_empty() || radii.is_empty() {
        return Err(MatherError::InvalidInput("empty direction or radius list".into()));
    }
    if let Some(r) = radii.iter().find(|r| !(**r > 0.0) || !r.is_finite()) {
        return Err(MatherError::InvalidInput(format!("radius {r} must be positive")));
    }
    if let Some(d) = directions.iter().find(|d| !d.is_primitive()) {
        return Err(MatherError::InvalidInput(format!("direction {d} is not primitive")));
    }
    grid.validate()?;
    let mut classes = Vec::with_capacity(directions.len() * radii.len() + 1);
    if include_zero {
        classes.push(RationalClass::ZERO);
    }
    for d in directions {
        for &r in radii {
            classes.push(RationalClass::new(*d, r)?);
        }
    }
    let samples = classes
        .par_iter()
        .map(|c| beta_at(spec, c, grid))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(BetaTable::from_samples(samples, directions.to_vec(), radii.to_vec()))
}

impl BetaTable {
    pub fn from_samples(samples: Vec<BetaSample>, directions: Vec<WindingClass>, radii: Vec<f64>) -> Self {
        let (points, values) = hull_input(&samples);
        let env: Vec<f64> = samples
            .iter()
            .map(|s| envelope::lower_envelope_at(&points, &values, s.h()).map_or(s.value, |e| e.min(s.value)))
            .collect();
        let superseded = samples
            .iter()
            .zip(&env)
            .map(|(s, e)| s.value > e + SUPERSEDED_TOL * (1.0 + e.abs()))
            .collect();
        Self {
            samples,
            env,
            superseded,
            directions,
            radii,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn all_converged(&self) -> bool {
        self.samples.iter().all(|s| s.converged)
    }

    pub fn points(&self) -> Vec<HomologyClass> {
        self.samples.iter().map(|s| s.h()).collect()
    }

    pub fn zero_sample(&self) -> Option<&BetaSample> {
        self.samples.iter().find(|s| s.class.is_zero())
    }

    /// Envelope at an arbitrary class inside the sampled hull.
    pub fn env_at(&self, h: HomologyClass) -> Result<f64, MatherError> {
        if let Some(i) = self.index_of(h) {
            return Ok(self.env[i]);
        }
        let (points, values) = hull_input(&self.samples);
        envelope::lower_envelope_at(&points, &values, h)
            .ok_or_else(|| MatherError::InsufficientResolution(format!("{h:?} lies outside the sampled hull")))
    }

    pub fn index_of(&self, h: HomologyClass) -> Option<usize> {
        self.samples.iter().position(|s| (s.h() - h).norm() < 1e-12 * (1.0 + h.norm()))
    }

    /// Largest sampled scale.
    pub fn outer_radius(&self) -> f64 {
        self.radii.iter().copied().fold(0.0, f64::max)
    }

    /// `h1,h2,beta_raw,beta_env,winding_p,winding_q,T,converged`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("h1,h2,beta_raw,beta_env,winding_p,winding_q,T,converged\n");
        for (s, e) in self.samples.iter().zip(&self.env) {
            let h = s.h();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                h[0], h[1], s.value, e, s.winding.p, s.winding.q, s.period, s.converged
            );
        }
        out
    }

    /// Collinear sample triples `a, m, b` with `m` between `a` and `b` whose
    /// envelope values violate convexity by more than `tol·(1 + |β|)`.
    pub fn convexity_violations(&self, tol: f64) -> Vec<(usize, usize, usize)> {
        let pts = self.points();
        let n = pts.len();
        let mut bad = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                let d = pts[b] - pts[a];
                let len2 = d.norm_squared();
                if len2 == 0.0 {
                    continue;
                }
                for m in 0..n {
                    if m == a || m == b {
                        continue;
                    }
                    let r = pts[m] - pts[a];
                    let cross = d[0] * r[1] - d[1] * r[0];
                    if cross.abs() > 1e-12 * len2 {
                        continue;
                    }
                    let lambda = r.dot(&d) / len2;
                    if !(lambda > 0.0 && lambda < 1.0) {
                        continue;
                    }
                    let chord = (1.0 - lambda) * self.env[a] + lambda * self.env[b];
                    if self.env[m] > chord + tol * (1.0 + chord.abs()) {
                        bad.push((a, m, b));
                    }
                }
            }
        }
        bad
    }

    /// Directions along which `t ↦ (β(th) − β(0))/t` decreases somewhere.
    pub fn superlinearity_violations(&self, tol: f64) -> Vec<WindingClass> {
        let Some(zero) = self.zero_sample() else {
            return Vec::new();
        };
        let i0 = self.index_of(zero.h()).expect("zero sample is in the table");
        let b0 = self.env[i0];
        let mut bad = Vec::new();
        for d in &self.directions {
            let mut ray: Vec<(f64, f64)> = self
                .samples
                .iter()
                .zip(&self.env)
                .filter(|(s, _)| s.class.direction == *d)
                .map(|(s, e)| (s.class.scale, (e - b0) / s.class.scale))
                .collect();
            ray.sort_by(|a, b| a.0.total_cmp(&b.0));
            if ray.windows(2).any(|w| w[1].1 < w[0].1 - tol * (1.0 + w[0].1.abs())) {
                bad.push(*d);
            }
        }
        bad
    }
}

/// Locations and values fed to the envelope; of several samples at the same
/// class only the converged one with the smallest residual is kept.
fn hull_input(samples: &[BetaSample]) -> (Vec<Vec2>, Vec<f64>) {
    let mut keep: Vec<usize> = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let h = s.h();
        match keep.iter().position(|&j| (samples[j].h() - h).norm() < 1e-12 * (1.0 + h.norm())) {
            None => keep.push(i),
            Some(slot) => {
                let j = keep[slot];
                let cur = &samples[j];
                if (s.converged, -s.residual) > (cur.converged, -cur.residual) {
                    keep[slot] = i;
                }
            }
        }
    }
    (
        keep.iter().map(|&i| samples[i].h()).collect(),
        keep.iter().map(|&i| samples[i].value).collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlphaEstimate {
    pub c: CohomologyClass,
    pub value: f64,
    /// Maximizing sample.
    pub argmax: HomologyClass,
    /// The maximizer sits on the outermost ring: the value may be too small.
    pub radius_too_small: bool,
}

/// `max_i ⟨c, h_i⟩ − β_env(h_i)`: a lower bound for `α(c)`.
pub fn alpha_conjugate(table: &BetaTable, c: CohomologyClass) -> Result<AlphaEstimate, MatherError> {
    if table.is_empty() {
        return Err(MatherError::InvalidInput("empty table".into()));
    }
    let mut best = (f64::NEG_INFINITY, 0usize);
    for (i, (s, e)) in table.samples.iter().zip(&table.env).enumerate() {
        let v = c.dot(&s.h()) - e;
        if v > best.0 + 1e-15 {
            best = (v, i);
        }
    }
    let sample = &table.samples[best.1];
    let outer = table.outer_radius();
    Ok(AlphaEstimate {
        c,
        value: best.0,
        argmax: sample.h(),
        radius_too_small: !sample.class.is_zero() && sample.class.scale >= outer * (1.0 - 1e-12),
    })
}

/// Re-scan with doubled outer radius while the conjugate maximizer stays on
/// the outer ring, at most `max_doublings` times.
pub fn alpha_with_extension(
    spec: &Lagrangian,
    table: &mut BetaTable,
    c: CohomologyClass,
    grid: &BetaGrid,
    max_doublings: usize,
) -> Result<AlphaEstimate, MatherError> {
    let mut est = alpha_conjugate(table, c)?;
    for _ in 0..max_doublings {
        if !est.radius_too_small {
            break;
        }
        let outer = table.outer_radius();
        let new_radii: Vec<f64> = table
            .radii
            .iter()
            .map(|r| r + outer)
            .filter(|r| *r <= 2.0 * outer * (1.0 + 1e-12))
            .collect();
        let extra = beta_scan(spec, &table.directions, &new_radii, false, grid)?;
        let mut samples = std::mem::take(&mut table.samples);
        samples.extend(extra.samples);
        let mut radii = table.radii.clone();
        radii.extend(new_radii);
        *table = BetaTable::from_samples(samples, table.directions.clone(), radii);
        est = alpha_conjugate(table, c)?;
    }
    Ok(est)
}

/// `α(c) + β_env(h) − ⟨c, h⟩`; nonnegative by construction, near zero when
/// `c ∈ ∂β(h)`.
pub fn fenchel_gap(table: &BetaTable, c: CohomologyClass, h: HomologyClass) -> Result<f64, MatherError> {
    let alpha = alpha_conjugate(table, c)?.value;
    Ok(alpha + table.env_at(h)? - c.dot(&h))
}

/// All primitive `(p, q)` with `max(|p|, |q|) ≤ max_entry`, sorted by angle.
pub fn primitive_directions(max_entry: i64) -> Vec<WindingClass> {
    let mut dirs = Vec::new();
    for p in -max_entry..=max_entry {
        for q in -max_entry..=max_entry {
            let w = WindingClass::new(p, q);
            if w.is_primitive() {
                dirs.push(w);
            }
        }
    }
    dirs.sort_by(|a, b| (a.q as f64).atan2(a.p as f64).total_cmp(&(b.q as f64).atan2(b.p as f64)));
    dirs
}

#[cfg(test)]
mod tests;
