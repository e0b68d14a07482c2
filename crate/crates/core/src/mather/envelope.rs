//! Lower convex envelope of a scattered sample cloud `(h_i, β_i)`.
//!
//! The envelope at `x` is the value of the linear program
//!
//! ```text
//! min Σ λ_i β_i   subject to   Σ λ_i h_i = x,  Σ λ_i = 1,  λ ≥ 0,
//! ```
//!
//! which is infeasible exactly when `x` lies outside the convex hull of the
//! sample locations.

use minilp::{ComparisonOp, OptimizationDirection, Problem};

use crate::lagrangian::Vec2;

/// `None` outside the hull.
pub fn lower_envelope_at(points: &[Vec2], values: &[f64], x: Vec2) -> Option<f64> {
    debug_assert_eq!(points.len(), values.len());
    if points.is_empty() {
        return None;
    }
    // shift so that the constraint right-hand sides stay O(1)
    let vmin = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mut problem = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<_> = values
        .iter()
        .map(|v| problem.add_var(v - vmin, (0.0, f64::INFINITY)))
        .collect();
    for c in 0..2 {
        let expr: Vec<_> = vars.iter().zip(points).map(|(&v, p)| (v, p[c] - x[c])).collect();
        problem.add_constraint(expr.as_slice(), ComparisonOp::Eq, 0.0);
    }
    let ones: Vec<_> = vars.iter().map(|&v| (v, 1.0)).collect();
    problem.add_constraint(ones.as_slice(), ComparisonOp::Eq, 1.0);
    let solution = problem.solve().ok()?;
    Some(solution.objective() + vmin)
}

/// Envelope evaluated at every sample location, clamped by the raw value.
pub fn lower_envelope(points: &[Vec2], values: &[f64]) -> Vec<f64> {
    use rayon::prelude::*;
    points
        .par_iter()
        .zip(values)
        .map(|(p, &v)| lower_envelope_at(points, values, *p).map_or(v, |e| e.min(v)))
        .collect()
}
