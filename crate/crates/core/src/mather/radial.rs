//! β restricted to rays `t ↦ β(t h)`.

use serde::Serialize;

use super::subdiff::BetaSource;
use super::{beta_at, BetaGrid, HomologyClass, MatherError, RationalClass};
use crate::lagrangian::Lagrangian;
use crate::loopmin::{energy_profile, refine_loop, LoopError};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadialFlat {
    pub t_min: f64,
    pub t_max: f64,
    pub ladder: Vec<f64>,
    pub values: Vec<f64>,
    /// Second divided differences at interior ladder points; `NaN` at the ends.
    pub second_differences: Vec<f64>,
}

impl RadialFlat {
    pub fn is_trivial(&self) -> bool {
        self.t_min == self.t_max
    }
}

/// Maximal ladder interval around `t = 1` on which `t ↦ β(t h)` is affine
/// within `tol`. The ladder must be increasing and contain `1`.
pub fn radial_flat(
    src: &dyn BetaSource,
    h: HomologyClass,
    ladder: &[f64],
    tol: f64,
) -> Result<RadialFlat, MatherError> {
    if h.norm() == 0.0 {
        return Err(MatherError::InvalidInput("radial flat needs h ≠ 0".into()));
    }
    if ladder.windows(2).any(|w| !(w[1] > w[0])) || ladder.first().is_some_and(|t| !(*t > 0.0)) {
        return Err(MatherError::InvalidInput("ladder must be positive and increasing".into()));
    }
    let centre = ladder
        .iter()
        .position(|t| (t - 1.0).abs() < 1e-12)
        .ok_or_else(|| MatherError::InvalidInput("ladder must contain t = 1".into()))?;
    let values = ladder
        .iter()
        .map(|&t| src.beta(h * t))
        .collect::<Result<Vec<_>, _>>()?;
    let n = ladder.len();
    let mut sdd = vec![f64::NAN; n];
    for i in 1..n.saturating_sub(1) {
        let left = (values[i] - values[i - 1]) / (ladder[i] - ladder[i - 1]);
        let right = (values[i + 1] - values[i]) / (ladder[i + 1] - ladder[i]);
        sdd[i] = 2.0 * (right - left) / (ladder[i + 1] - ladder[i - 1]);
    }
    let affine = |i: usize| sdd[i].abs() < tol;
    let (lo, hi) = if centre == 0 || centre == n - 1 || !affine(centre) {
        (centre, centre)
    } else {
        let mut lo = centre - 1;
        while lo >= 1 && affine(lo) {
            lo -= 1;
        }
        let mut hi = centre + 1;
        while hi + 1 < n && affine(hi) {
            hi += 1;
        }
        (lo, hi)
    };
    Ok(RadialFlat {
        t_min: ladder[lo],
        t_max: ladder[hi],
        ladder: ladder.to_vec(),
        values,
        second_differences: sdd,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RadialDerivative {
    pub t: f64,
    pub beta: f64,
    pub d_plus: f64,
    pub d_minus: f64,
    /// `|D⁺ − D⁻|`.
    pub mismatch: f64,
    /// Mean energy along the minimizing loop at `t`.
    pub energy: f64,
    pub converged: bool,
}

/// One-sided derivatives of `t ↦ β(t h)` at `t`, `h = class`, from loops
/// warm-started at the minimizer for `t h` with the period changed and the
/// winding and sample count held fixed. Steps `δ` and `δ/2`, Richardson
/// extrapolated.
pub fn radial_derivative(
    spec: &Lagrangian,
    class: &RationalClass,
    t: f64,
    delta: f64,
    grid: &BetaGrid,
) -> Result<RadialDerivative, MatherError> {
    if class.is_zero() {
        return Err(MatherError::InvalidInput("radial derivative needs h ≠ 0".into()));
    }
    if !(t > delta) || !(delta > 0.0) {
        return Err(MatherError::InvalidInput(format!("need t > δ > 0, got t = {t}, δ = {delta}")));
    }
    let centre = beta_at(spec, &class.scaled(t)?, grid)?;
    let lp = centre.lp.clone().expect("nonzero class has a loop");
    let k = centre.winding.multiplicity();
    let mut converged = centre.converged;
    let mut at = |tt: f64| -> Result<f64, MatherError> {
        let period = k as f64 / (tt * class.scale);
        let init = lp.with_period(period)?;
        let m = match refine_loop(spec, &init, &grid.loop_opts) {
            Ok(m) => m,
            Err(LoopError::NoDescent { best }) => {
                converged = false;
                *best
            }
            Err(e) => return Err(e.into()),
        };
        Ok(m.action / period)
    };
    let b0 = centre.value;
    let mut quotients = [(0.0, 0.0); 2];
    for (slot, step) in quotients.iter_mut().zip([delta, 0.5 * delta]) {
        *slot = ((at(t + step)? - b0) / step, (b0 - at(t - step)?) / step);
    }
    let d_plus = 2.0 * quotients[1].0 - quotients[0].0;
    let d_minus = 2.0 * quotients[1].1 - quotients[0].1;
    let energies = energy_profile(spec, &lp);
    Ok(RadialDerivative {
        t,
        beta: b0,
        d_plus,
        d_minus,
        mismatch: (d_plus - d_minus).abs(),
        energy: energies.iter().sum::<f64>() / energies.len() as f64,
        converged,
    })
}
