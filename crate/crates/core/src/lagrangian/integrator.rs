//! Classical fourth-order Runge–Kutta for the Euler–Lagrange flow.

use super::{condition_number, Lagrangian, LagrangianError, TorusPoint, Vec2, Velocity2};

/// Largest admissible condition number of `∂²L/∂v²`.
pub const MAX_MASS_CONDITION: f64 = 1e12;

#[derive(Debug, Clone)]
pub struct Orbit {
    pub states: Vec<(TorusPoint, Velocity2)>,
    /// Lifted positions, same indexing as `states`.
    pub lift: Vec<Vec2>,
    /// `max_k |E(x_k, v_k) − E(x_0, v_0)|`.
    pub energy_drift: f64,
}

fn acceleration(spec: &Lagrangian, x: &Vec2, v: &Vec2) -> Result<Vec2, LagrangianError> {
    let mass = spec.hess_vv(x, v);
    let condition = condition_number(&mass);
    if !(condition <= MAX_MASS_CONDITION) {
        return Err(LagrangianError::SingularMass { condition });
    }
    let rhs = spec.grad_x(x, v) - spec.mixed_vx(x, v) * v;
    mass.try_inverse()
        .map(|inv| inv * rhs)
        .ok_or(LagrangianError::SingularMass { condition })
}

/// Integrate `d/dt ∂L/∂v = ∂L/∂x` from `(x0, v0)`; returns `n_steps + 1` states.
pub fn integrate_orbit(
    spec: &Lagrangian,
    x0: TorusPoint,
    v0: Velocity2,
    dt: f64,
    n_steps: usize,
) -> Result<Orbit, LagrangianError> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(LagrangianError::InvalidStep(dt));
    }
    let mut x = x0.coords();
    let mut v = v0;
    let e0 = spec.energy(&x, &v);
    let mut drift: f64 = 0.0;
    let mut states = Vec::with_capacity(n_steps + 1);
    let mut lift = Vec::with_capacity(n_steps + 1);
    states.push((x0, v));
    lift.push(x);
    for _ in 0..n_steps {
        let k1x = v;
        let k1v = acceleration(spec, &x, &v)?;
        let x2 = x + k1x * (0.5 * dt);
        let v2 = v + k1v * (0.5 * dt);
        let k2x = v2;
        let k2v = acceleration(spec, &x2, &v2)?;
        let x3 = x + k2x * (0.5 * dt);
        let v3 = v + k2v * (0.5 * dt);
        let k3x = v3;
        let k3v = acceleration(spec, &x3, &v3)?;
        let x4 = x + k3x * dt;
        let v4 = v + k3v * dt;
        let k4x = v4;
        let k4v = acceleration(spec, &x4, &v4)?;
        x += (k1x + k2x * 2.0 + k3x * 2.0 + k4x) * (dt / 6.0);
        v += (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (dt / 6.0);
        drift = drift.max((spec.energy(&x, &v) - e0).abs());
        states.push((TorusPoint::from_lift(x), v));
        lift.push(x);
    }
    Ok(Orbit {
        states,
        lift,
        energy_drift: drift,
    })
}
