//! Rest points of the Euler–Lagrange flow: `v = 0` with `∂L/∂x(x, 0) = 0`.

use serde::Serialize;

use crate::lagrangian::{Lagrangian, Mat2, TorusPoint, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FixedPoint {
    pub x: TorusPoint,
    /// `L(x, 0)`.
    pub value: f64,
    pub minimizing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum FixedPointScan {
    /// `L(·, 0)` is constant: every point is a rest point.
    Everywhere { value: f64 },
    Points(Vec<FixedPoint>),
}

impl FixedPointScan {
    pub fn minimizing(&self) -> Vec<FixedPoint> {
        match self {
            FixedPointScan::Everywhere { .. } => Vec::new(),
            FixedPointScan::Points(p) => p.iter().copied().filter(|p| p.minimizing).collect(),
        }
    }

    /// Smallest `L(x, 0)` over the scan.
    pub fn min_value(&self) -> Option<f64> {
        match self {
            FixedPointScan::Everywhere { value } => Some(*value),
            FixedPointScan::Points(p) => p.iter().map(|p| p.value).reduce(f64::min),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanParams {
    /// Seed grid resolution.
    pub res: usize,
    /// Gradient norm accepted as critical.
    pub tol: f64,
    /// Slack in `L(x, 0) ≤ min + slack` for the minimizing flag.
    pub min_slack: f64,
}

impl Default for ScanParams {
    fn default() -> Self {
        Self {
            res: 64,
            tol: 1e-9,
            min_slack: 1e-9,
        }
    }
}

/// The function whose critical points are sought: `L(·, 0)` in general, `X`
/// itself for vector-field Lagrangians.
enum Target<'a> {
    Potential(&'a Lagrangian),
    Field(&'a Lagrangian),
}

impl Target<'_> {
    /// Residual vector and its Jacobian.
    fn residual(&self, x: &Vec2) -> (Vec2, Mat2) {
        let h = 1e-6;
        let f = |y: &Vec2| match self {
            Target::Potential(s) => s.rest_gradient(y),
            // ∂L/∂v(x, 0) = −X(x)
            Target::Field(s) => -s.grad_v(y, &Vec2::zeros()),
        };
        let r = f(x);
        let e1 = Vec2::new(h, 0.0);
        let e2 = Vec2::new(0.0, h);
        let c1 = (f(&(x + e1)) - f(&(x - e1))) / (2.0 * h);
        let c2 = (f(&(x + e2)) - f(&(x - e2))) / (2.0 * h);
        (r, Mat2::from_columns(&[c1, c2]))
    }
}

/// Grid scan for local minima of `|r|²` refined by minimum-norm Newton on `r`.
pub fn fixed_point_scan(spec: &Lagrangian, params: &ScanParams) -> FixedPointScan {
    let res = params.res.max(4);
    let grid = |i: usize, j: usize| Vec2::new(i as f64, j as f64) / res as f64;
    let values: Vec<f64> = (0..res * res).map(|k| spec.rest_value(&grid(k / res, k % res))).collect();
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    let target = match spec {
        Lagrangian::VectorField { .. } => Target::Field(spec),
        _ => Target::Potential(spec),
    };
    if matches!(target, Target::Potential(_)) && hi - lo < 1e-12 * (1.0 + lo.abs()) {
        let flat = (0..res * res).all(|k| spec.rest_gradient(&grid(k / res, k % res)).norm() < params.tol);
        if flat {
            return FixedPointScan::Everywhere { value: lo };
        }
    }
    let norms: Vec<f64> = (0..res * res)
        .map(|k| target.residual(&grid(k / res, k % res)).0.norm_squared())
        .collect();
    let at = |i: isize, j: isize| {
        let r = res as isize;
        norms[(i.rem_euclid(r) * r + j.rem_euclid(r)) as usize]
    };
    let mut found: Vec<Vec2> = Vec::new();
    for i in 0..res as isize {
        for j in 0..res as isize {
            let here = at(i, j);
            let is_min = (-1..=1).all(|di| (-1..=1).all(|dj| at(i + di, j + dj) >= here));
            if !is_min {
                continue;
            }
            let Some(x) = newton(&target, grid(i as usize, j as usize), params.tol) else {
                continue;
            };
            let x = TorusPoint::from_lift(x).coords();
            let dup = found
                .iter()
                .any(|y| TorusPoint::from_lift(*y).displacement_to(&TorusPoint::from_lift(x)).norm() < 1e-6);
            if !dup {
                found.push(x);
            }
        }
    }
    let min = found.iter().map(|x| spec.rest_value(x)).fold(f64::INFINITY, f64::min);
    let points = found
        .into_iter()
        .map(|x| {
            let value = spec.rest_value(&x);
            FixedPoint {
                x: TorusPoint::from_lift(x),
                value,
                minimizing: value <= min + params.min_slack,
            }
        })
        .collect();
    FixedPointScan::Points(points)
}

fn newton(target: &Target<'_>, mut x: Vec2, tol: f64) -> Option<Vec2> {
    for _ in 0..50 {
        let (r, jac) = target.residual(&x);
        if r.norm() < tol {
            return Some(x);
        }
        // minimum-norm step through the pseudo-inverse, so critical lines
        // are approached orthogonally
        let svd = jac.svd(true, true);
        let step = svd.pseudo_inverse(1e-8 * svd.singular_values.max().max(1e-300)).ok()? * r;
        if !step[0].is_finite() || !step[1].is_finite() || step.norm() > 0.5 {
            return None;
        }
        x -= step;
    }
    let (r, _) = target.residual(&x);
    (r.norm() < tol).then_some(x)
}
