//! Discrete action of closed loops with a prescribed winding class.
//!
//! A loop is stored as `N` lifted samples `y_0..y_{N−1}` at uniform times
//! `t_k = kT/N`, closed by `y_N = y_0 + (p,q)`. Its action is the midpoint sum
//!
//! ```text
//! A(y) = Σ_k L((y_k + y_{k+1})/2, (y_{k+1} − y_k)/Δt) Δt,   Δt = T/N,
//! ```
//!
//! which is second-order accurate and has an exactly computable gradient.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::lagrangian::{Lagrangian, TorusPoint, Vec2};

pub mod lbfgs;
mod precond;

use lbfgs::{LbfgsConfig, StopReason};
use precond::CyclicSolver;

/// Smallest admissible number of loop samples.
pub const MIN_NODES: usize = 16;

/// Integer homology class `(p, q) ∈ H₁(T²; Z)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct WindingClass {
    pub p: i64,
    pub q: i64,
}

pub fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl WindingClass {
    pub const ZERO: WindingClass = WindingClass { p: 0, q: 0 };

    pub fn new(p: i64, q: i64) -> Self {
        Self { p, q }
    }

    pub fn is_zero(&self) -> bool {
        self.p == 0 && self.q == 0
    }

    /// `(p, q) / gcd(p, q)`; the zero class is its own primitive.
    pub fn primitive(&self) -> Self {
        let g = gcd(self.p, self.q);
        if g == 0 {
            *self
        } else {
            Self::new(self.p / g, self.q / g)
        }
    }

    pub fn is_primitive(&self) -> bool {
        gcd(self.p, self.q) == 1
    }

    pub fn multiplicity(&self) -> i64 {
        gcd(self.p, self.q)
    }

    pub fn scaled(&self, k: i64) -> Self {
        Self::new(self.p * k, self.q * k)
    }

    pub fn as_vec(&self) -> Vec2 {
        Vec2::new(self.p as f64, self.q as f64)
    }

    /// Counter-clockwise perpendicular `(−q, p)`.
    pub fn perpendicular(&self) -> Self {
        Self::new(-self.q, self.p)
    }
}

impl std::fmt::Display for WindingClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{})", self.p, self.q)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LoopError {
    #[error("invalid loop: {0}")]
    InvalidLoop(String),
    #[error("invalid minimizer options: {0}")]
    InvalidOptions(String),
    #[error("no restart reached the gradient tolerance (best residual {residual:e})", residual = .best.residual)]
    NoDescent { best: Box<LoopMinimum> },
}

/// Closed curve on the torus sampled at uniform times.
#[derive(Debug, Clone, PartialEq)]
pub struct Loop {
    nodes: Vec<Vec2>,
    period: f64,
    winding: WindingClass,
}

impl Loop {
    pub fn new(nodes: Vec<Vec2>, period: f64, winding: WindingClass) -> Result<Self, LoopError> {
        if nodes.len() < MIN_NODES {
            return Err(LoopError::InvalidLoop(format!(
                "need at least {MIN_NODES} samples, got {}",
                nodes.len()
            )));
        }
        if !(period > 0.0) || !period.is_finite() {
            return Err(LoopError::InvalidLoop(format!("period must be positive, got {period}")));
        }
        if nodes.iter().any(|y| !y[0].is_finite() || !y[1].is_finite()) {
            return Err(LoopError::InvalidLoop("non-finite sample".into()));
        }
        Ok(Self {
            nodes,
            period,
            winding,
        })
    }

    /// `y_k = start + (k/N)(p,q)`.
    pub fn straight(
        winding: WindingClass,
        period: f64,
        n: usize,
        start: Vec2,
    ) -> Result<Self, LoopError> {
        let w = winding.as_vec();
        let nodes = (0..n).map(|k| start + w * (k as f64 / n as f64)).collect();
        Self::new(nodes, period, winding)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn winding(&self) -> WindingClass {
        self.winding
    }

    pub fn dt(&self) -> f64 {
        self.period / self.nodes.len() as f64
    }

    pub fn nodes(&self) -> &[Vec2] {
        &self.nodes
    }

    /// Lifted sample with the closure convention: `node(N) = y_0 + (p,q)`.
    pub fn node(&self, k: usize) -> Vec2 {
        let n = self.nodes.len();
        let wraps = (k / n) as f64;
        self.nodes[k % n] + self.winding.as_vec() * wraps
    }

    /// Velocity on segment `k` (from `y_k` to `y_{k+1}`).
    pub fn segment_velocity(&self, k: usize) -> Vec2 {
        (self.node(k + 1) - self.node(k)) / self.dt()
    }

    /// Lifted midpoint of segment `k`.
    pub fn segment_midpoint(&self, k: usize) -> Vec2 {
        (self.node(k) + self.node(k + 1)) * 0.5
    }

    pub fn projected(&self) -> Vec<TorusPoint> {
        self.nodes.iter().map(|y| TorusPoint::from_lift(*y)).collect()
    }

    /// Rotation vector `(p,q)/T`.
    pub fn rotation_vector(&self) -> Vec2 {
        self.winding.as_vec() / self.period
    }

    /// Same samples, different period.
    pub fn with_period(&self, period: f64) -> Result<Self, LoopError> {
        Self::new(self.nodes.clone(), period, self.winding)
    }

    fn to_flat(&self) -> Vec<f64> {
        self.nodes.iter().flat_map(|y| [y[0], y[1]]).collect()
    }

    fn with_flat(&self, flat: &[f64]) -> Self {
        Self {
            nodes: flat.chunks_exact(2).map(|c| Vec2::new(c[0], c[1])).collect(),
            period: self.period,
            winding: self.winding,
        }
    }
}

/// Value and gradient of the discrete action on flattened samples.
fn action_flat(spec: &Lagrangian, flat: &[f64], grad: &mut [f64], period: f64, w: Vec2) -> f64 {
    let n = flat.len() / 2;
    let dt = period / n as f64;
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut total = 0.0;
    for k in 0..n {
        let a = Vec2::new(flat[2 * k], flat[2 * k + 1]);
        let kn = (k + 1) % n;
        let mut b = Vec2::new(flat[2 * kn], flat[2 * kn + 1]);
        if k + 1 == n {
            b += w;
        }
        let v = (b - a) / dt;
        let mid = (a + b) * 0.5;
        let (val, lv, lx) = spec.value_and_grads(&mid, &v);
        total += val * dt;
        let half = lx * (0.5 * dt);
        grad[2 * k] += half[0] - lv[0];
        grad[2 * k + 1] += half[1] - lv[1];
        grad[2 * kn] += half[0] + lv[0];
        grad[2 * kn + 1] += half[1] + lv[1];
    }
    total
}

/// `Σ_k L(mid_k, (y_{k+1} − y_k)/Δt) Δt`.
pub fn action(spec: &Lagrangian, lp: &Loop) -> f64 {
    (0..lp.len())
        .map(|k| spec.value(&lp.segment_midpoint(k), &lp.segment_velocity(k)) * lp.dt())
        .sum()
}

/// Exact gradient `∂A/∂y_k` of [`action`], including the closure term on `y_0`.
pub fn action_gradient(spec: &Lagrangian, lp: &Loop) -> Vec<Vec2> {
    let flat = lp.to_flat();
    let mut grad = vec![0.0; flat.len()];
    action_flat(spec, &flat, &mut grad, lp.period, lp.winding.as_vec());
    grad.chunks_exact(2).map(|c| Vec2::new(c[0], c[1])).collect()
}

fn sup_norm_over_dt(grad: &[f64], dt: f64) -> f64 {
    grad.chunks_exact(2)
        .map(|c| c[0].hypot(c[1]))
        .fold(0.0, f64::max)
        / dt
}

/// Sup over nodes of the discrete Euler–Lagrange defect
/// `‖(p_k − p_{k−1})/Δt − ½(∂L/∂x(mid_{k−1}) + ∂L/∂x(mid_k))‖`.
pub fn el_residual(spec: &Lagrangian, lp: &Loop) -> f64 {
    let n = lp.len();
    let dt = lp.dt();
    let seg: Vec<(Vec2, Vec2)> = (0..n)
        .map(|k| {
            let mid = lp.segment_midpoint(k);
            let v = lp.segment_velocity(k);
            (spec.grad_v(&mid, &v), spec.grad_x(&mid, &v))
        })
        .collect();
    (0..n)
        .map(|k| {
            let prev = &seg[(k + n - 1) % n];
            let cur = &seg[k];
            ((cur.0 - prev.0) / dt - (prev.1 + cur.1) * 0.5).norm()
        })
        .fold(0.0, f64::max)
}

/// Energy `H(x_k, p_k)` on every segment.
pub fn energy_profile(spec: &Lagrangian, lp: &Loop) -> Vec<f64> {
    (0..lp.len())
        .map(|k| spec.energy(&lp.segment_midpoint(k), &lp.segment_velocity(k)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinimizeOptions {
    pub n_restarts: usize,
    pub max_iters: usize,
    /// Target for [`el_residual`].
    pub g_tol: f64,
    pub seed: u64,
    /// Amplitude of the uniform node perturbation added to every initializer.
    pub perturbation: f64,
    /// L-BFGS memory.
    pub memory: usize,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            n_restarts: 8,
            max_iters: 4000,
            g_tol: 1e-9,
            seed: 0,
            perturbation: 1e-2,
            memory: 10,
        }
    }
}

impl MinimizeOptions {
    pub fn validate(&self) -> Result<(), LoopError> {
        if self.n_restarts == 0 {
            return Err(LoopError::InvalidOptions("n_restarts must be ≥ 1".into()));
        }
        if !(self.g_tol > 0.0) {
            return Err(LoopError::InvalidOptions("g_tol must be positive".into()));
        }
        if self.memory == 0 || self.max_iters == 0 {
            return Err(LoopError::InvalidOptions("memory and max_iters must be ≥ 1".into()));
        }
        if !(self.perturbation >= 0.0) {
            return Err(LoopError::InvalidOptions("perturbation must be ≥ 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopMinimum {
    pub lp: Loop,
    pub action: f64,
    pub residual: f64,
    pub converged: bool,
    pub restart: usize,
    pub iterations: usize,
}

/// Preconditioned L-BFGS descent from `init`. Never fails; convergence is
/// reported through the returned flag.
pub fn descend(spec: &Lagrangian, init: &Loop, opts: &MinimizeOptions) -> LoopMinimum {
    let n = init.len();
    let dt = init.dt();
    let period = init.period;
    let w = init.winding.as_vec();
    let solver = CyclicSolver::new(n, 1.0 / dt, dt);
    let scratch = std::cell::RefCell::new(vec![0.0; n]);
    let precondition = |d: &mut [f64]| {
        let mut buf = scratch.borrow_mut();
        for comp in 0..2 {
            for k in 0..n {
                buf[k] = d[2 * k + comp];
            }
            solver.solve(&mut buf[..]);
            for k in 0..n {
                d[2 * k + comp] = buf[k];
            }
        }
    };
    let cfg = LbfgsConfig {
        memory: opts.memory,
        max_iters: opts.max_iters,
        ..LbfgsConfig::default()
    };
    let g_tol = opts.g_tol;
    let report = lbfgs::minimize(
        |x, g| action_flat(spec, x, g, period, w),
        init.to_flat(),
        precondition,
        |g| sup_norm_over_dt(g, dt) < g_tol,
        &cfg,
    );
    let lp = init.with_flat(&report.x);
    let residual = el_residual(spec, &lp);
    LoopMinimum {
        action: report.f,
        residual,
        converged: report.stop == StopReason::Converged || residual < g_tol,
        restart: 0,
        iterations: report.iterations,
        lp,
    }
}

/// Warm-started descent; errors only if the result misses the tolerance.
pub fn refine_loop(
    spec: &Lagrangian,
    init: &Loop,
    opts: &MinimizeOptions,
) -> Result<LoopMinimum, LoopError> {
    opts.validate()?;
    let m = descend(spec, init, opts);
    if m.converged {
        Ok(m)
    } else {
        Err(LoopError::NoDescent { best: Box::new(m) })
    }
}

/// Grid-scan minimizer of `x ↦ L(x, 0)` refined by descent on its gradient.
pub fn rest_minimizer(spec: &Lagrangian, res: usize) -> Vec2 {
    let mut best = (f64::INFINITY, Vec2::zeros());
    for i in 0..res {
        for j in 0..res {
            let x = Vec2::new(i as f64 / res as f64, j as f64 / res as f64);
            let val = spec.rest_value(&x);
            if val < best.0 {
                best = (val, x);
            }
        }
    }
    let report = lbfgs::minimize(
        |x, g| {
            let p = Vec2::new(x[0], x[1]);
            let d = spec.rest_gradient(&p);
            g[0] = d[0];
            g[1] = d[1];
            spec.rest_value(&p)
        },
        vec![best.1[0], best.1[1]],
        |_| {},
        |g| g[0].abs().max(g[1].abs()) < 1e-12,
        &LbfgsConfig::default(),
    );
    let refined = Vec2::new(report.x[0], report.x[1]);
    if report.f <= best.0 {
        TorusPoint::from_lift(refined).coords()
    } else {
        best.1
    }
}

fn restart_rng(seed: u64, restart: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (restart as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Multi-start minimization over loops of winding `winding`, period `period`
/// and `n` samples.
///
/// Restart 0 starts from the straight loop through the origin, later restarts
/// from straight loops through uniformly random points; every initializer
/// gets a small uniform node perturbation. For the zero class the initializer
/// is the constant loop at the minimizer of `L(·, 0)`. The smallest action
/// among converged restarts wins, ties within `1e-12` going to the lower
/// restart index.
pub fn minimize_loop(
    spec: &Lagrangian,
    winding: WindingClass,
    period: f64,
    n: usize,
    opts: &MinimizeOptions,
) -> Result<LoopMinimum, LoopError> {
    opts.validate()?;
    // validates n and period
    Loop::straight(winding, period, n, Vec2::zeros())?;
    let rest = winding.is_zero().then(|| rest_minimizer(spec, 64));
    let results: Vec<LoopMinimum> = (0..opts.n_restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = restart_rng(opts.seed, r);
            let start = match rest {
                Some(x) => x,
                None if r == 0 => Vec2::zeros(),
                None => Vec2::new(rng.gen(), rng.gen()),
            };
            let mut init = Loop::straight(winding, period, n, start).expect("validated above");
            if opts.perturbation > 0.0 {
                for y in init.nodes.iter_mut() {
                    y[0] += opts.perturbation * rng.gen_range(-1.0..1.0);
                    y[1] += opts.perturbation * rng.gen_range(-1.0..1.0);
                }
            }
            let mut m = descend(spec, &init, opts);
            m.restart = r;
            m
        })
        .collect();
    select_best(results)
}

fn select_best(results: Vec<LoopMinimum>) -> Result<LoopMinimum, LoopError> {
    let pick = |candidates: &mut dyn Iterator<Item = &LoopMinimum>| -> Option<LoopMinimum> {
        let mut best: Option<&LoopMinimum> = None;
        for m in candidates {
            match best {
                Some(b) if m.action >= b.action - 1e-12 => {}
                _ => best = Some(m),
            }
        }
        best.cloned()
    };
    if let Some(best) = pick(&mut results.iter().filter(|m| m.converged)) {
        return Ok(best);
    }
    let best = pick(&mut results.iter()).expect("at least one restart");
    Err(LoopError::NoDescent {
        best: Box::new(best),
    })
}

/// CSV dump: metadata comments followed by `k,t,y1,y2` rows.
pub fn loop_to_csv(m: &LoopMinimum) -> String {
    let lp = &m.lp;
    let mut out = String::new();
    let _ = writeln!(out, "# winding = {},{}", lp.winding.p, lp.winding.q);
    let _ = writeln!(out, "# T = {}", lp.period);
    let _ = writeln!(out, "# action = {}", m.action);
    let _ = writeln!(out, "# residual = {}", m.residual);
    out.push_str("k,t,y1,y2\n");
    for (k, y) in lp.nodes.iter().enumerate() {
        let _ = writeln!(out, "{k},{},{},{}", k as f64 * lp.dt(), y[0], y[1]);
    }
    out
}

/// Parse a [`loop_to_csv`] dump back into `(loop, action, residual)`.
pub fn loop_from_csv(text: &str) -> Result<(Loop, f64, f64), LoopError> {
    let bad = |msg: &str| LoopError::InvalidLoop(format!("loop dump: {msg}"));
    let mut winding = None;
    let mut period = None;
    let mut act = None;
    let mut residual = None;
    let mut nodes = Vec::new();
    let mut header_seen = false;
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        if let Some(meta) = line.strip_prefix('#') {
            let (key, value) = meta.split_once('=').ok_or_else(|| bad("malformed comment"))?;
            let value = value.trim();
            let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad("bad number"));
            match key.trim() {
                "winding" => {
                    let (p, q) = value.split_once(',').ok_or_else(|| bad("bad winding"))?;
                    winding = Some(WindingClass::new(
                        p.trim().parse().map_err(|_| bad("bad winding"))?,
                        q.trim().parse().map_err(|_| bad("bad winding"))?,
                    ));
                }
                "T" => period = Some(num(value)?),
                "action" => act = Some(num(value)?),
                "residual" => residual = Some(num(value)?),
                _ => return Err(bad("unknown metadata key")),
            }
        } else if !header_seen {
            if line != "k,t,y1,y2" {
                return Err(bad("missing header"));
            }
            header_seen = true;
        } else {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 4 {
                return Err(bad("expected 4 columns"));
            }
            let k: usize = cols[0].parse().map_err(|_| bad("bad index"))?;
            if k != nodes.len() {
                return Err(bad("indices out of order"));
            }
            let y1: f64 = cols[2].parse().map_err(|_| bad("bad y1"))?;
            let y2: f64 = cols[3].parse().map_err(|_| bad("bad y2"))?;
            nodes.push(Vec2::new(y1, y2));
        }
    }
    let lp = Loop::new(
        nodes,
        period.ok_or_else(|| bad("missing T"))?,
        winding.ok_or_else(|| bad("missing winding"))?,
    )?;
    Ok((
        lp,
        act.ok_or_else(|| bad("missing action"))?,
        residual.ok_or_else(|| bad("missing residual"))?,
    ))
}
