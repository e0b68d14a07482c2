//! One-sided directional derivatives of β and corner detection.

use std::collections::HashMap;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::Serialize;

use super::{beta_at, rationalize, BetaGrid, BetaTable, HomologyClass, MatherError, RationalClass};
use crate::lagrangian::{Lagrangian, Vec2};

/// Anything that can report `β(h)`.
pub trait BetaSource: Sync {
    fn beta(&self, h: HomologyClass) -> Result<f64, MatherError>;
}

impl BetaSource for BetaTable {
    fn beta(&self, h: HomologyClass) -> Result<f64, MatherError> {
        self.env_at(h)
    }
}

/// Largest slope denominator [`DirectBeta`] accepts.
pub const DIRECT_MAX_DEN: i64 = 64;

/// Fresh loop minimizations at rational classes, memoized.
pub struct DirectBeta<'a> {
    pub spec: &'a Lagrangian,
    pub grid: BetaGrid,
    cache: Mutex<HashMap<(i64, i64, u64), f64>>,
}

impl<'a> DirectBeta<'a> {
    pub fn new(spec: &'a Lagrangian, grid: BetaGrid) -> Self {
        Self {
            spec,
            grid,
            cache: Mutex::new(HashMap::new()),
        }
    }
}

impl BetaSource for DirectBeta<'_> {
    fn beta(&self, h: HomologyClass) -> Result<f64, MatherError> {
        let class = rationalize(h, DIRECT_MAX_DEN).ok_or_else(|| {
            MatherError::InsufficientResolution(format!("{h:?} has no slope with denominator ≤ {DIRECT_MAX_DEN}"))
        })?;
        let key = (class.direction.p, class.direction.q, class.scale.to_bits());
        if let Some(v) = self.cache.lock().expect("cache poisoned").get(&key) {
            return Ok(*v);
        }
        let v = beta_at(self.spec, &class, &self.grid)?.value;
        self.cache.lock().expect("cache poisoned").insert(key, v);
        Ok(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SubdiffEstimate {
    pub h: HomologyClass,
    /// Unit direction.
    pub u: Vec2,
    pub eps: f64,
    pub d_plus: f64,
    pub d_minus: f64,
    pub corner_gap: f64,
}

/// Richardson-extrapolated one-sided derivatives of β at `h` along `u` from
/// the steps `ε` and `ε/2`.
pub fn subdiff_onesided(
    src: &dyn BetaSource,
    h: HomologyClass,
    u: Vec2,
    eps: f64,
) -> Result<SubdiffEstimate, MatherError> {
    let norm = u.norm();
    if !(norm > 0.0) || !(eps > 0.0) {
        return Err(MatherError::InvalidInput("direction and step must be nonzero".into()));
    }
    let u = u / norm;
    let b0 = src.beta(h)?;
    let quotient = |step: f64| -> Result<(f64, f64), MatherError> {
        let plus = (src.beta(h + u * step)? - b0) / step;
        let minus = (b0 - src.beta(h - u * step)?) / step;
        Ok((plus, minus))
    };
    let (p1, m1) = quotient(eps)?;
    let (p2, m2) = quotient(0.5 * eps)?;
    let d_plus = 2.0 * p2 - p1;
    let d_minus = 2.0 * m2 - m1;
    Ok(SubdiffEstimate {
        h,
        u,
        eps,
        d_plus,
        d_minus,
        corner_gap: d_plus - d_minus,
    })
}

/// Corner probe across the ray through each class: direction
/// `(−q, p)/‖(p,q)‖` and step `s‖(p,q)‖/m`, so that `h ± εu` and
/// `h ± εu/2` stay rational.
pub fn corner_scan(
    spec: &Lagrangian,
    classes: &[RationalClass],
    grid: &BetaGrid,
    m: u32,
) -> Result<Vec<SubdiffEstimate>, MatherError> {
    if m == 0 {
        return Err(MatherError::InvalidInput("step divisor must be ≥ 1".into()));
    }
    if classes.iter().any(|c| c.is_zero()) {
        return Err(MatherError::InvalidInput("corner scan needs nonzero classes".into()));
    }
    let src = DirectBeta::new(spec, grid.clone());
    classes.par_iter().map(|c| corner_probe(&src, c, m)).collect()
}

/// One class of [`corner_scan`].
pub fn corner_probe(src: &dyn BetaSource, class: &RationalClass, m: u32) -> Result<SubdiffEstimate, MatherError> {
    if m == 0 || class.is_zero() {
        return Err(MatherError::InvalidInput("corner probe needs a nonzero class and m ≥ 1".into()));
    }
    let w = class.direction.as_vec();
    let u = Vec2::new(-w[1], w[0]);
    subdiff_onesided(src, class.h(), u, class.scale * w.norm() / m as f64)
}
