//! Tonelli Lagrangians on the flat square torus `R²/Z²`.
//!
//! Three families are supported:
//!
//! * mechanical: `L(x,v) = ½ vᵀ g(x) v + f(x)` (kinetic energy *plus* the
//!   potential, so that minimizing fixed points sit at the minima of `f`);
//! * vector field: `L(x,v) = ½ ‖v − X(x)‖²`;
//! * custom: user evaluators for `L`, `∂L/∂v`, `∂L/∂x` and `∂²L/∂v²`.
//!
//! All evaluators work on lifted coordinates; the fields are 1-periodic so a
//! lift never needs to be reduced before evaluation.

use std::fmt;
use std::sync::Arc;

use nalgebra::{Matrix2, Vector2};

pub mod catalog;
mod field;
mod integrator;

pub use catalog::{CatalogError, SpecDescriptor};
pub use field::{Harmonic, ScalarField, TrigParseError, TrigPoly, TrigTerm};
pub use integrator::{integrate_orbit, Orbit};

pub type Vec2 = Vector2<f64>;
pub type Mat2 = Matrix2<f64>;
/// Tangent fiber coordinate.
pub type Velocity2 = Vec2;
/// Cotangent fiber coordinate.
pub type Momentum2 = Vec2;

/// Step used for derivatives that are not supplied analytically.
pub const FD_STEP: f64 = 1e-5;

/// Point on the torus, stored in the fundamental domain `[0,1)²`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct TorusPoint(Vec2);

impl TorusPoint {
    pub fn new(x1: f64, x2: f64) -> Self {
        Self::from_lift(Vec2::new(x1, x2))
    }

    pub fn from_lift(x: Vec2) -> Self {
        Self(Vec2::new(reduce(x[0]), reduce(x[1])))
    }

    pub fn coords(&self) -> Vec2 {
        self.0
    }

    /// Shortest lifted displacement from `self` to `other`.
    pub fn displacement_to(&self, other: &TorusPoint) -> Vec2 {
        let d = other.0 - self.0;
        Vec2::new(d[0] - d[0].round(), d[1] - d[1].round())
    }

    pub fn translate(&self, d: Vec2) -> Self {
        Self::from_lift(self.0 + d)
    }
}

impl fmt::Display for TorusPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.0[0], self.0[1])
    }
}

/// Reduce a real number into `[0, 1)`.
pub fn reduce(t: f64) -> f64 {
    let r = t - t.floor();
    // t slightly below an integer can round up to exactly 1.0
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LagrangianError {
    #[error("evaluator returned a non-finite value at x={x:?}, v={v:?}")]
    NonFinite { x: [f64; 2], v: [f64; 2] },
    #[error("fiber Hessian is not positive definite at x={x:?}, v={v:?} (smallest eigenvalue {eigenvalue})")]
    NotConvex {
        x: [f64; 2],
        v: [f64; 2],
        eigenvalue: f64,
    },
    #[error("metric is not positive definite at x={x:?} (smallest eigenvalue {eigenvalue})")]
    DegenerateMetric { x: [f64; 2], eigenvalue: f64 },
    #[error("evaluator is not 1-periodic at x={x:?} (defect {defect})")]
    NotPeriodic { x: [f64; 2], defect: f64 },
    #[error("fiber maximization did not converge at x={x:?}, p={p:?}")]
    NewtonDivergence { x: [f64; 2], p: [f64; 2] },
    #[error("fiber Hessian is numerically singular (condition number {condition:e})")]
    SingularMass { condition: f64 },
    #[error("time step must be positive, got {0}")]
    InvalidStep(f64),
}

/// Riemannian metric `g = [[a11, a12], [a12, a22]]`.
#[derive(Debug, Clone)]
pub struct Metric {
    pub a11: Arc<dyn ScalarField>,
    pub a12: Arc<dyn ScalarField>,
    pub a22: Arc<dyn ScalarField>,
}

impl Metric {
    pub fn identity() -> Self {
        Self {
            a11: Arc::new(TrigPoly::constant(1.0)),
            a12: Arc::new(TrigPoly::constant(0.0)),
            a22: Arc::new(TrigPoly::constant(1.0)),
        }
    }

    pub fn at(&self, x: &Vec2) -> Mat2 {
        let off = self.a12.value(x);
        Mat2::new(self.a11.value(x), off, off, self.a22.value(x))
    }

    /// `(∂g/∂x₁, ∂g/∂x₂)`.
    pub fn derivatives(&self, x: &Vec2) -> [Mat2; 2] {
        let d11 = self.a11.gradient(x);
        let d12 = self.a12.gradient(x);
        let d22 = self.a22.gradient(x);
        [
            Mat2::new(d11[0], d12[0], d12[0], d22[0]),
            Mat2::new(d11[1], d12[1], d12[1], d22[1]),
        ]
    }
}

type ValueFn = dyn Fn(&Vec2, &Vec2) -> f64 + Send + Sync;
type VectorFn = dyn Fn(&Vec2, &Vec2) -> Vec2 + Send + Sync;
type MatrixFn = dyn Fn(&Vec2, &Vec2) -> Mat2 + Send + Sync;

/// Lagrangian given by closed-form evaluators.
#[derive(Clone)]
pub struct CustomLagrangian {
    pub value: Arc<ValueFn>,
    pub grad_v: Arc<VectorFn>,
    pub grad_x: Arc<VectorFn>,
    pub hess_vv: Arc<MatrixFn>,
}

impl fmt::Debug for CustomLagrangian {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CustomLagrangian { .. }")
    }
}

#[derive(Debug, Clone)]
pub enum Lagrangian {
    Mechanical {
        metric: Metric,
        potential: Arc<dyn ScalarField>,
    },
    VectorField {
        field: [Arc<dyn ScalarField>; 2],
    },
    Custom(CustomLagrangian),
}

impl Lagrangian {
    pub fn mechanical(metric: Metric, potential: impl ScalarField + 'static) -> Self {
        Lagrangian::Mechanical {
            metric,
            potential: Arc::new(potential),
        }
    }

    pub fn flat() -> Self {
        Self::mechanical(Metric::identity(), TrigPoly::constant(0.0))
    }

    /// `f(x) = eps cos(2π x₁)` with the identity metric.
    pub fn pendulum(eps: f64) -> Self {
        Self::mechanical(Metric::identity(), TrigPoly::cos(eps, [1, 0]))
    }

    pub fn double_pendulum(eps1: f64, eps2: f64) -> Self {
        Self::mechanical(
            Metric::identity(),
            TrigPoly::cos(eps1, [1, 0]).with_term(eps2, [0, 1], Harmonic::Cos),
        )
    }

    pub fn vector_field(x1: impl ScalarField + 'static, x2: impl ScalarField + 'static) -> Self {
        Lagrangian::VectorField {
            field: [Arc::new(x1), Arc::new(x2)],
        }
    }

    pub fn constant_vector_field(omega: Vec2) -> Self {
        Self::vector_field(TrigPoly::constant(omega[0]), TrigPoly::constant(omega[1]))
    }

    pub fn is_mechanical(&self) -> bool {
        matches!(self, Lagrangian::Mechanical { .. })
    }

    fn field_at(field: &[Arc<dyn ScalarField>; 2], x: &Vec2) -> Vec2 {
        Vec2::new(field[0].value(x), field[1].value(x))
    }

    /// Raw `L(x,v)` on a lift.
    pub fn value(&self, x: &Vec2, v: &Vec2) -> f64 {
        match self {
            Lagrangian::Mechanical { metric, potential } => {
                0.5 * v.dot(&(metric.at(x) * v)) + potential.value(x)
            }
            Lagrangian::VectorField { field } => 0.5 * (v - Self::field_at(field, x)).norm_squared(),
            Lagrangian::Custom(c) => (c.value)(x, v),
        }
    }

    /// `∂L/∂v`.
    pub fn grad_v(&self, x: &Vec2, v: &Vec2) -> Vec2 {
        match self {
            Lagrangian::Mechanical { metric, .. } => metric.at(x) * v,
            Lagrangian::VectorField { field } => v - Self::field_at(field, x),
            Lagrangian::Custom(c) => (c.grad_v)(x, v),
        }
    }

    /// `∂L/∂x`.
    pub fn grad_x(&self, x: &Vec2, v: &Vec2) -> Vec2 {
        match self {
            Lagrangian::Mechanical { metric, potential } => {
                let dg = metric.derivatives(x);
                let df = potential.gradient(x);
                Vec2::new(
                    0.5 * v.dot(&(dg[0] * v)) + df[0],
                    0.5 * v.dot(&(dg[1] * v)) + df[1],
                )
            }
            Lagrangian::VectorField { field } => {
                let w = v - Self::field_at(field, x);
                let g1 = field[0].gradient(x);
                let g2 = field[1].gradient(x);
                -(g1 * w[0] + g2 * w[1])
            }
            Lagrangian::Custom(c) => (c.grad_x)(x, v),
        }
    }

    /// `L` together with both gradients; shares metric evaluations for the
    /// mechanical case.
    pub fn value_and_grads(&self, x: &Vec2, v: &Vec2) -> (f64, Vec2, Vec2) {
        match self {
            Lagrangian::Mechanical { metric, potential } => {
                let g = metric.at(x);
                let dg = metric.derivatives(x);
                let gv = g * v;
                let df = potential.gradient(x);
                let val = 0.5 * v.dot(&gv) + potential.value(x);
                let gx = Vec2::new(
                    0.5 * v.dot(&(dg[0] * v)) + df[0],
                    0.5 * v.dot(&(dg[1] * v)) + df[1],
                );
                (val, gv, gx)
            }
            _ => (self.value(x, v), self.grad_v(x, v), self.grad_x(x, v)),
        }
    }

    /// `∂²L/∂v²`.
    pub fn hess_vv(&self, x: &Vec2, v: &Vec2) -> Mat2 {
        match self {
            Lagrangian::Mechanical { metric, .. } => metric.at(x),
            Lagrangian::VectorField { .. } => Mat2::identity(),
            Lagrangian::Custom(c) => (c.hess_vv)(x, v),
        }
    }

    /// Mixed derivative `M[i][k] = ∂²L/∂v_i∂x_k`.
    pub fn mixed_vx(&self, x: &Vec2, v: &Vec2) -> Mat2 {
        match self {
            Lagrangian::Mechanical { metric, .. } => {
                let dg = metric.derivatives(x);
                let c0 = dg[0] * v;
                let c1 = dg[1] * v;
                Mat2::new(c0[0], c1[0], c0[1], c1[1])
            }
            Lagrangian::VectorField { field } => {
                let g1 = field[0].gradient(x);
                let g2 = field[1].gradient(x);
                -Mat2::new(g1[0], g1[1], g2[0], g2[1])
            }
            Lagrangian::Custom(c) => {
                let mut m = Mat2::zeros();
                for k in 0..2 {
                    let mut xp = *x;
                    let mut xm = *x;
                    xp[k] += FD_STEP;
                    xm[k] -= FD_STEP;
                    let col = ((c.grad_v)(&xp, v) - (c.grad_v)(&xm, v)) / (2.0 * FD_STEP);
                    m[(0, k)] = col[0];
                    m[(1, k)] = col[1];
                }
                m
            }
        }
    }

    /// Energy `⟨∂L/∂v, v⟩ − L`, i.e. `H` at the Legendre-matched momentum.
    pub fn energy(&self, x: &Vec2, v: &Vec2) -> f64 {
        self.grad_v(x, v).dot(v) - self.value(x, v)
    }

    /// `x ↦ L(x, 0)`, whose critical points are the rest points of the flow.
    pub fn rest_value(&self, x: &Vec2) -> f64 {
        self.value(x, &Vec2::zeros())
    }

    pub fn rest_gradient(&self, x: &Vec2) -> Vec2 {
        self.grad_x(x, &Vec2::zeros())
    }

    /// Checked `L(x,v)`.
    pub fn eval_lagrangian(&self, x: TorusPoint, v: Velocity2) -> Result<f64, LagrangianError> {
        let val = self.value(&x.coords(), &v);
        if val.is_finite() {
            Ok(val)
        } else {
            Err(non_finite(&x.coords(), &v))
        }
    }

    /// Legendre transform `p = ∂L/∂v(x,v)`.
    pub fn legendre_v_to_p(&self, x: TorusPoint, v: Velocity2) -> Momentum2 {
        self.grad_v(&x.coords(), &v)
    }

    /// `H(x,p) = sup_v ⟨p,v⟩ − L(x,v)`.
    pub fn eval_hamiltonian(&self, x: TorusPoint, p: Momentum2) -> Result<f64, LagrangianError> {
        self.hamiltonian(&x.coords(), &p)
    }

    /// Inverse Legendre transform: the velocity with `∂L/∂v(x,v) = p`.
    pub fn legendre_p_to_v(&self, x: &Vec2, p: &Vec2) -> Result<Vec2, LagrangianError> {
        match self {
            Lagrangian::Mechanical { metric, .. } => metric
                .at(x)
                .try_inverse()
                .map(|gi| gi * p)
                .ok_or(LagrangianError::SingularMass {
                    condition: f64::INFINITY,
                }),
            Lagrangian::VectorField { field } => Ok(p + Self::field_at(field, x)),
            Lagrangian::Custom(_) => self.fiber_maximizer(x, p),
        }
    }

    pub fn hamiltonian(&self, x: &Vec2, p: &Vec2) -> Result<f64, LagrangianError> {
        let h = match self {
            Lagrangian::Mechanical { metric, potential } => {
                let gi = metric
                    .at(x)
                    .try_inverse()
                    .ok_or(LagrangianError::SingularMass {
                        condition: f64::INFINITY,
                    })?;
                0.5 * p.dot(&(gi * p)) - potential.value(x)
            }
            Lagrangian::VectorField { field } => {
                0.5 * p.norm_squared() + p.dot(&Self::field_at(field, x))
            }
            Lagrangian::Custom(_) => {
                let v = self.fiber_maximizer(x, p)?;
                p.dot(&v) - self.value(x, &v)
            }
        };
        if h.is_finite() {
            Ok(h)
        } else {
            Err(LagrangianError::NewtonDivergence {
                x: [x[0], x[1]],
                p: [p[0], p[1]],
            })
        }
    }

    /// Damped Newton iteration for `argmax_v ⟨p,v⟩ − L(x,v)`.
    fn fiber_maximizer(&self, x: &Vec2, p: &Vec2) -> Result<Vec2, LagrangianError> {
        const MAX_ITERS: usize = 100;
        let objective = |v: &Vec2| p.dot(v) - self.value(x, v);
        let diverged = || LagrangianError::NewtonDivergence {
            x: [x[0], x[1]],
            p: [p[0], p[1]],
        };
        let mut v = Vec2::zeros();
        let mut obj = objective(&v);
        for _ in 0..MAX_ITERS {
            let residual = p - self.grad_v(x, &v);
            let scale = 1.0 + p.norm() + v.norm();
            if residual.norm() <= 1e-12 * scale {
                return Ok(v);
            }
            let step = self
                .hess_vv(x, &v)
                .try_inverse()
                .map(|hi| hi * residual)
                .ok_or_else(diverged)?;
            let mut t = 1.0;
            loop {
                let trial = v + step * t;
                let trial_obj = objective(&trial);
                if trial_obj.is_finite() && trial_obj >= obj - 1e-14 * obj.abs().max(1.0) {
                    v = trial;
                    obj = trial_obj;
                    break;
                }
                t *= 0.5;
                if t < 1e-12 {
                    return Err(diverged());
                }
            }
            if step.norm() * t <= 1e-10 * (1.0 + v.norm()) {
                return Ok(v);
            }
        }
        Err(diverged())
    }

    /// Sample-based validation of the Tonelli and periodicity invariants on a
    /// `res × res` grid with eight probe velocities per node.
    pub fn validate(&self, res: usize) -> Result<(), LagrangianError> {
        let velocities = probe_velocities();
        for i in 0..res {
            for j in 0..res {
                let x = Vec2::new(i as f64 / res as f64, j as f64 / res as f64);
                if let Lagrangian::Mechanical { metric, .. } = self {
                    let eig = smallest_eigenvalue(&metric.at(&x));
                    if !(eig > 0.0) {
                        return Err(LagrangianError::DegenerateMetric {
                            x: [x[0], x[1]],
                            eigenvalue: eig,
                        });
                    }
                }
                for v in &velocities {
                    let val = self.value(&x, v);
                    if !val.is_finite() {
                        return Err(non_finite(&x, v));
                    }
                    let eig = smallest_eigenvalue(&self.hess_vv(&x, v));
                    if !(eig > 0.0) {
                        return Err(LagrangianError::NotConvex {
                            x: [x[0], x[1]],
                            v: [v[0], v[1]],
                            eigenvalue: eig,
                        });
                    }
                    for shift in [Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)] {
                        let defect = (self.value(&(x + shift), v) - val).abs();
                        if defect > 1e-9 * (1.0 + val.abs()) {
                            return Err(LagrangianError::NotPeriodic {
                                x: [x[0], x[1]],
                                defect,
                            });
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn non_finite(x: &Vec2, v: &Vec2) -> LagrangianError {
    LagrangianError::NonFinite {
        x: [x[0], x[1]],
        v: [v[0], v[1]],
    }
}

pub(crate) fn probe_velocities() -> Vec<Vec2> {
    (0..8)
        .map(|k| {
            let theta = std::f64::consts::TAU * k as f64 / 8.0;
            let r = 0.5 + 0.5 * k as f64;
            Vec2::new(r * theta.cos(), r * theta.sin())
        })
        .collect()
}

/// Smallest eigenvalue of a symmetric 2×2 matrix.
pub fn smallest_eigenvalue(m: &Mat2) -> f64 {
    let a = m[(0, 0)];
    let d = m[(1, 1)];
    let b = 0.5 * (m[(0, 1)] + m[(1, 0)]);
    let mean = 0.5 * (a + d);
    let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    mean - rad
}

/// Condition number of a symmetric positive 2×2 matrix (infinite if not
/// positive definite).
pub fn condition_number(m: &Mat2) -> f64 {
    let a = m[(0, 0)];
    let d = m[(1, 1)];
    let b = 0.5 * (m[(0, 1)] + m[(1, 0)]);
    let mean = 0.5 * (a + d);
    let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    let lo = mean - rad;
    let hi = mean + rad;
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn diag_metric(a: f64, b: f64) -> Metric {
        Metric {
            a11: Arc::new(TrigPoly::constant(a)),
            a12: Arc::new(TrigPoly::constant(0.0)),
            a22: Arc::new(TrigPoly::constant(b)),
        }
    }

    fn wobbly() -> Lagrangian {
        Lagrangian::mechanical(
            Metric {
                a11: Arc::new("1 + 0.2 cos(1,0)".parse::<TrigPoly>().unwrap()),
                a12: Arc::new("0.1 sin(1,1)".parse::<TrigPoly>().unwrap()),
                a22: Arc::new("1.3 - 0.25 cos(0,1)".parse::<TrigPoly>().unwrap()),
            },
            "0.1 cos(1,0) + 0.05 sin(1,2)".parse::<TrigPoly>().unwrap(),
        )
    }

    fn rotating_field() -> Lagrangian {
        Lagrangian::vector_field(
            "0.3 + 0.2 sin(0,1)".parse::<TrigPoly>().unwrap(),
            "-0.1 + 0.15 cos(1,0)".parse::<TrigPoly>().unwrap(),
        )
    }

    /// Custom Lagrangian `½‖v‖² + ¼‖v‖⁴·0.1 + 0.1 cos(2πx₁)`, not quadratic in v.
    fn quartic() -> Lagrangian {
        use std::f64::consts::TAU;
        Lagrangian::Custom(CustomLagrangian {
            value: Arc::new(|x, v| {
                let n2 = v.norm_squared();
                0.5 * n2 + 0.025 * n2 * n2 + 0.1 * (TAU * x[0]).cos()
            }),
            grad_v: Arc::new(|_x, v| v * (1.0 + 0.1 * v.norm_squared())),
            grad_x: Arc::new(|x, _v| Vec2::new(-0.1 * TAU * (TAU * x[0]).sin(), 0.0)),
            hess_vv: Arc::new(|_x, v| {
                Mat2::identity() * (1.0 + 0.1 * v.norm_squared()) + (v * v.transpose()) * 0.2
            }),
        })
    }

    #[test]
    fn torus_point_reduces() {
        let p = TorusPoint::new(-0.25, 3.5);
        assert_eq!(p.coords(), Vec2::new(0.75, 0.5));
        let q = TorusPoint::new(-1e-18, 1.0);
        assert!(q.coords()[0] < 1.0 && q.coords()[1] == 0.0);
        let d = TorusPoint::new(0.95, 0.1).displacement_to(&TorusPoint::new(0.05, 0.9));
        assert!((d - Vec2::new(0.1, -0.2)).norm() < 1e-12);
    }

    #[test]
    fn lagrangian_examples() {
        let o = TorusPoint::new(0.0, 0.0);
        let flat = Lagrangian::flat();
        assert_eq!(flat.eval_lagrangian(o, Vec2::new(1.0, 0.0)).unwrap(), 0.5);
        let pend = Lagrangian::pendulum(0.1);
        assert!((pend.eval_lagrangian(o, Vec2::zeros()).unwrap() - 0.1).abs() < 1e-15);
        let vf = Lagrangian::constant_vector_field(Vec2::new(1.0, 0.0));
        assert_eq!(
            vf.eval_lagrangian(TorusPoint::new(0.3, 0.8), Vec2::new(1.0, 0.0))
                .unwrap(),
            0.0
        );
    }

    #[test]
    fn legendre_examples() {
        let o = TorusPoint::new(0.0, 0.0);
        let flat = Lagrangian::flat();
        assert_eq!(flat.legendre_v_to_p(o, Vec2::new(2.0, 3.0)), Vec2::new(2.0, 3.0));
        let diag = Lagrangian::mechanical(diag_metric(2.0, 1.0), TrigPoly::constant(0.0));
        assert_eq!(diag.legendre_v_to_p(o, Vec2::new(1.0, 1.0)), Vec2::new(2.0, 1.0));
        let vf = Lagrangian::constant_vector_field(Vec2::new(1.0, 0.0));
        assert_eq!(vf.legendre_v_to_p(o, Vec2::new(1.0, 0.0)), Vec2::zeros());
    }

    #[test]
    fn hamiltonian_examples() {
        let o = TorusPoint::new(0.0, 0.0);
        let flat = Lagrangian::flat();
        assert_eq!(flat.eval_hamiltonian(o, Vec2::new(1.0, 0.0)).unwrap(), 0.5);
        let pend = Lagrangian::pendulum(0.1);
        assert!((pend.eval_hamiltonian(o, Vec2::zeros()).unwrap() + 0.1).abs() < 1e-15);
        let diag = Lagrangian::mechanical(diag_metric(2.0, 1.0), TrigPoly::constant(0.0));
        assert!((diag.eval_hamiltonian(o, Vec2::new(2.0, 0.0)).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn legendre_consistency_on_random_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for spec in [wobbly(), rotating_field(), quartic(), Lagrangian::pendulum(0.3)] {
            for _ in 0..100 {
                let x = TorusPoint::new(rng.gen(), rng.gen());
                let v = Vec2::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
                let p = spec.legendre_v_to_p(x, v);
                let h = spec.eval_hamiltonian(x, p).unwrap();
                let expected = p.dot(&v) - spec.eval_lagrangian(x, v).unwrap();
                assert!((h - expected).abs() < 1e-9, "{h} vs {expected}");
                let back = spec.legendre_p_to_v(&x.coords(), &p).unwrap();
                assert!((back - v).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn fiber_convexity_and_periodicity() {
        for spec in [wobbly(), rotating_field(), quartic(), Lagrangian::flat()] {
            spec.validate(32).unwrap();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for spec in [wobbly(), rotating_field()] {
            for _ in 0..50 {
                let x = Vec2::new(rng.gen(), rng.gen());
                let v = Vec2::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
                for e in [Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)] {
                    let d = (spec.value(&(x + e), &v) - spec.value(&x, &v)).abs();
                    assert!(d < 1e-12, "{d}");
                }
            }
        }
    }

    #[test]
    fn validation_rejects_bad_specs() {
        let bad_metric = Lagrangian::mechanical(
            Metric {
                a11: Arc::new("0.5 cos(1,0)".parse::<TrigPoly>().unwrap()),
                a12: Arc::new(TrigPoly::constant(0.0)),
                a22: Arc::new(TrigPoly::constant(1.0)),
            },
            TrigPoly::constant(0.0),
        );
        assert!(matches!(
            bad_metric.validate(8),
            Err(LagrangianError::DegenerateMetric { .. })
        ));
        let concave = Lagrangian::Custom(CustomLagrangian {
            value: Arc::new(|_x, v| -v.norm_squared()),
            grad_v: Arc::new(|_x, v| -2.0 * v),
            grad_x: Arc::new(|_x, _v| Vec2::zeros()),
            hess_vv: Arc::new(|_x, _v| -2.0 * Mat2::identity()),
        });
        assert!(matches!(concave.validate(4), Err(LagrangianError::NotConvex { .. })));
        assert!(matches!(
            concave.eval_hamiltonian(TorusPoint::new(0.0, 0.0), Vec2::new(1.0, 0.0)),
            Err(LagrangianError::NewtonDivergence { .. })
        ));
        let aperiodic = Lagrangian::Custom(CustomLagrangian {
            value: Arc::new(|x, v| 0.5 * v.norm_squared() + x[0]),
            grad_v: Arc::new(|_x, v| *v),
            grad_x: Arc::new(|_x, _v| Vec2::new(1.0, 0.0)),
            hess_vv: Arc::new(|_x, _v| Mat2::identity()),
        });
        assert!(matches!(aperiodic.validate(4), Err(LagrangianError::NotPeriodic { .. })));
        let nan = Lagrangian::Custom(CustomLagrangian {
            value: Arc::new(|_x, _v| f64::NAN),
            grad_v: Arc::new(|_x, v| *v),
            grad_x: Arc::new(|_x, _v| Vec2::zeros()),
            hess_vv: Arc::new(|_x, _v| Mat2::identity()),
        });
        assert!(matches!(
            nan.eval_lagrangian(TorusPoint::new(0.0, 0.0), Vec2::zeros()),
            Err(LagrangianError::NonFinite { .. })
        ));
    }

    #[test]
    fn analytic_derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = 1e-6;
        for spec in [wobbly(), rotating_field()] {
            for _ in 0..20 {
                let x = Vec2::new(rng.gen(), rng.gen());
                let v = Vec2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                let gx = spec.grad_x(&x, &v);
                let gv = spec.grad_v(&x, &v);
                let mixed = spec.mixed_vx(&x, &v);
                for k in 0..2 {
                    let mut e = Vec2::zeros();
                    e[k] = h;
                    let fdx = (spec.value(&(x + e), &v) - spec.value(&(x - e), &v)) / (2.0 * h);
                    let fdv = (spec.value(&x, &(v + e)) - spec.value(&x, &(v - e))) / (2.0 * h);
                    assert!((fdx - gx[k]).abs() < 1e-7);
                    assert!((fdv - gv[k]).abs() < 1e-7);
                    let col = (spec.grad_v(&(x + e), &v) - spec.grad_v(&(x - e), &v)) / (2.0 * h);
                    assert!((col[0] - mixed[(0, k)]).abs() < 1e-7);
                    assert!((col[1] - mixed[(1, k)]).abs() < 1e-7);
                }
            }
        }
    }
}
