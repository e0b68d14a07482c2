//! Gauss curvature of a metric on the torus, Brioschi formula.

use crate::lagrangian::{Metric, Vec2};

/// `K(x)` from `E = g₁₁`, `F = g₁₂`, `G = g₂₂`, first derivatives analytic
/// and second derivatives by central differences of the first.
pub fn gauss_curvature(metric: &Metric, x: &Vec2) -> f64 {
    let h = 1e-5;
    let g = metric.at(x);
    let (e, f, gg) = (g[(0, 0)], g[(0, 1)], g[(1, 1)]);
    let [du, dv] = metric.derivatives(x);
    let (e_u, f_u, g_u) = (du[(0, 0)], du[(0, 1)], du[(1, 1)]);
    let (e_v, f_v, g_v) = (dv[(0, 0)], dv[(0, 1)], dv[(1, 1)]);
    let second = |axis: usize, comp: usize| {
        let step = if axis == 0 { Vec2::new(h, 0.0) } else { Vec2::new(0.0, h) };
        let plus = metric.derivatives(&(x + step));
        let minus = metric.derivatives(&(x - step));
        let (r, c) = [(0, 0), (0, 1), (1, 1)][comp];
        // returns ∂/∂axis of [∂/∂u, ∂/∂v] of the component
        [(plus[0][(r, c)] - minus[0][(r, c)]) / (2.0 * h), (plus[1][(r, c)] - minus[1][(r, c)]) / (2.0 * h)]
    };
    let e_vv = second(1, 0)[1];
    let f_uv = second(1, 1)[0];
    let g_uu = second(0, 2)[0];
    let a = nalgebra::Matrix3::new(
        -0.5 * e_vv + f_uv - 0.5 * g_uu,
        0.5 * e_u,
        f_u - 0.5 * e_v,
        f_v - 0.5 * g_u,
        e,
        f,
        0.5 * g_v,
        f,
        gg,
    );
    let b = nalgebra::Matrix3::new(0.0, 0.5 * e_v, 0.5 * g_u, 0.5 * e_v, e, f, 0.5 * g_u, f, gg);
    let det = e * gg - f * f;
    (a.determinant() - b.determinant()) / (det * det)
}

/// `max |K|` over a `res × res` grid.
pub fn max_abs_curvature(metric: &Metric, res: usize) -> f64 {
    (0..res * res)
        .map(|k| {
            let x = Vec2::new((k / res) as f64, (k % res) as f64) / res as f64;
            gauss_curvature(metric, &x).abs()
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lagrangian::TrigPoly;
    use std::f64::consts::TAU;
    use std::sync::Arc;

    #[test]
    fn flat_metric_has_no_curvature() {
        assert!(max_abs_curvature(&Metric::identity(), 16) < 1e-9);
        // constant but sheared metrics are flat too
        let m = Metric {
            a11: Arc::new(TrigPoly::constant(2.0)),
            a12: Arc::new(TrigPoly::constant(0.3)),
            a22: Arc::new(TrigPoly::constant(1.0)),
        };
        assert!(max_abs_curvature(&m, 16) < 1e-9);
    }

    #[test]
    fn conformal_metric_matches_closed_form() {
        // g = λ(x₁)·I with λ = 1 + a cos 2πx₁: K = −Δ ln λ / (2λ)
        let a = 0.2;
        let lam = TrigPoly::constant(1.0).with_term(a, [1, 0], crate::lagrangian::Harmonic::Cos);
        let m = Metric {
            a11: Arc::new(lam.clone()),
            a12: Arc::new(TrigPoly::constant(0.0)),
            a22: Arc::new(lam),
        };
        for i in 0..20 {
            let x1 = i as f64 / 20.0;
            let l = 1.0 + a * (TAU * x1).cos();
            let l1 = -a * TAU * (TAU * x1).sin();
            let l11 = -a * TAU * TAU * (TAU * x1).cos();
            let lap_log = l11 / l - (l1 / l).powi(2);
            let exact = -lap_log / (2.0 * l);
            let k = gauss_curvature(&m, &Vec2::new(x1, 0.37));
            assert!((k - exact).abs() < 1e-5 * (1.0 + exact.abs()), "x1={x1}: {k} vs {exact}");
        }
    }
}
