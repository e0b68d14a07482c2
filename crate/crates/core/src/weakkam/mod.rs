//! Grid Lax–Oleinik iteration for the cell problem `H(x, c + du) = α(c)`.
//!
//! One step of length `dt` on the `M × M` periodic grid is
//!
//! ```text
//! u'(x) = min_{‖x−y‖_∞ ≤ W Δx} u(y) + dt·L((x+y)/2, (x−y)/dt) − ⟨c, x−y⟩,
//! ```
//!
//! with `x − y` the nearest lift. Iterating from `u ≡ 0` and renormalizing to
//! `min u = 0` converges to a critical solution; the per-step shift tends to
//! `−dt·α(c)`.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::lagrangian::{Lagrangian, LagrangianError, Mat2, TorusPoint, Vec2};
use crate::mather::CohomologyClass;

/// Smallest admissible grid resolution.
pub const MIN_RESOLUTION: usize = 32;
/// Largest admissible time step.
pub const MAX_DT: f64 = 0.5;
/// How many trailing shifts enter the α estimate.
pub const SHIFT_WINDOW: usize = 10;
/// Largest precomputed cost table, in entries.
const MAX_COST_TABLE: usize = 1 << 24;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WeakKamError {
    #[error("grid resolution {0} is below {MIN_RESOLUTION}")]
    InvalidGrid(usize),
    #[error("time step {0} outside (0, {MAX_DT}]")]
    InvalidStep(f64),
    #[error("window {0} must be at least 2 and below half the grid")]
    InvalidWindow(usize),
    #[error("window {window} too small: {fraction:.3} of the minimizers sit on its boundary")]
    WindowTooSmall { window: usize, fraction: f64 },
    #[error("no convergence after {iterations} steps (last increment {increment:e})")]
    NoConvergence {
        iterations: usize,
        increment: f64,
        field: Box<ValueField>,
    },
    #[error("relaxation {0} outside (0, 1]")]
    InvalidRelaxation(f64),
    #[error("field shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Lagrangian(#[from] LagrangianError),
}

/// `M × M` grid on `[0,1)²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Grid2 {
    pub m: usize,
}

impl Grid2 {
    pub fn new(m: usize) -> Result<Self, WeakKamError> {
        if m < MIN_RESOLUTION {
            return Err(WeakKamError::InvalidGrid(m));
        }
        Ok(Self { m })
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.m as f64
    }

    pub fn point(&self, i: usize, j: usize) -> Vec2 {
        Vec2::new(i as f64, j as f64) * self.spacing()
    }

    /// Nearest node.
    pub fn snap(&self, x: &TorusPoint) -> (usize, usize) {
        let c = x.coords() * self.m as f64;
        let idx = |t: f64| (t.round() as usize) % self.m;
        (idx(c[0]), idx(c[1]))
    }
}

/// Grid function with its cohomology class and α estimate. `u[i·M + j]` is
/// the value at `(i/M, j/M)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValueField {
    pub grid: Grid2,
    pub u: Vec<f64>,
    pub c: CohomologyClass,
    pub dt: f64,
    pub window: usize,
    pub alpha_estimate: f64,
    pub shifts: Vec<f64>,
    /// Sup-norm change of the normalized field per step.
    pub increments: Vec<f64>,
    pub converged: bool,
}

impl ValueField {
    pub fn zeros(grid: Grid2, c: CohomologyClass, dt: f64) -> Self {
        Self {
            grid,
            u: vec![0.0; grid.m * grid.m],
            c,
            dt,
            window: 0,
            alpha_estimate: f64::NAN,
            shifts: Vec::new(),
            increments: Vec::new(),
            converged: false,
        }
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        let m = self.grid.m;
        self.u[(i % m) * m + j % m]
    }

    /// Central-difference `du` at a node.
    pub fn gradient(&self, i: usize, j: usize) -> Vec2 {
        let m = self.grid.m;
        let h2 = 2.0 * self.grid.spacing();
        Vec2::new(
            (self.at(i + 1, j) - self.at(i + m - 1, j)) / h2,
            (self.at(i, j + 1) - self.at(i, j + m - 1)) / h2,
        )
    }

    /// Largest difference quotient between axis neighbours.
    pub fn lipschitz(&self) -> f64 {
        let m = self.grid.m;
        let mut k: f64 = 0.0;
        for i in 0..m {
            for j in 0..m {
                let u = self.at(i, j);
                k = k.max((self.at(i + 1, j) - u).abs()).max((self.at(i, j + 1) - u).abs());
            }
        }
        k * m as f64
    }

    /// `max u − min u`.
    pub fn oscillation(&self) -> f64 {
        let (lo, hi) = self
            .u
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
        hi - lo
    }

    /// Metadata header followed by `i,j,u` rows.
    pub fn to_csv(&self) -> String {
        let mut out = self.header();
        out.push_str("i,j,u\n");
        let m = self.grid.m;
        for i in 0..m {
            for j in 0..m {
                let _ = writeln!(out, "{i},{j},{}", self.at(i, j));
            }
        }
        out
    }

    /// Metadata header followed by `i,j,p1,p2` rows, `p = c + du`.
    pub fn gradient_csv(&self) -> String {
        let mut out = self.header();
        out.push_str("i,j,p1,p2\n");
        let m = self.grid.m;
        for i in 0..m {
            for j in 0..m {
                let p = self.c + self.gradient(i, j);
                let _ = writeln!(out, "{i},{j},{},{}", p[0], p[1]);
            }
        }
        out
    }

    fn header(&self) -> String {
        format!(
            "# M = {}\n# c = {},{}\n# dt = {}\n# alpha_estimate = {}\n",
            self.grid.m, self.c[0], self.c[1], self.dt, self.alpha_estimate
        )
    }
}

/// Per-node coefficients of `L` on the half-step lattice `k/(2M)`.
enum FieldCache {
    Mechanical { g: Vec<Mat2>, f: Vec<f64> },
    VectorField { x: Vec<Vec2> },
    Direct,
}

/// The one-step operator for fixed `(spec, c, dt, W)`.
pub struct LaxOleinik<'a> {
    spec: &'a Lagrangian,
    grid: Grid2,
    c: CohomologyClass,
    dt: f64,
    window: usize,
    cache: FieldCache,
    /// `cost[(i·D + k)·M + j]` for displacement `k` at node `(i, j)`, when
    /// small enough to store.
    table: Option<Vec<f64>>,
}

impl<'a> LaxOleinik<'a> {
    pub fn new(
        spec: &'a Lagrangian,
        grid: Grid2,
        c: CohomologyClass,
        dt: f64,
        window: usize,
    ) -> Result<Self, WeakKamError> {
        if grid.m < MIN_RESOLUTION {
            return Err(WeakKamError::InvalidGrid(grid.m));
        }
        if !(dt > 0.0 && dt <= MAX_DT) {
            return Err(WeakKamError::InvalidStep(dt));
        }
        if window < 2 || 2 * window >= grid.m {
            return Err(WeakKamError::InvalidWindow(window));
        }
        let half = 2 * grid.m;
        let half_point = |k: usize| Vec2::new((k / half) as f64, (k % half) as f64) / half as f64;
        let cache = match spec {
            Lagrangian::Mechanical { metric, potential } => FieldCache::Mechanical {
                g: (0..half * half).map(|k| metric.at(&half_point(k))).collect(),
                f: (0..half * half).map(|k| potential.value(&half_point(k))).collect(),
            },
            Lagrangian::VectorField { .. } => FieldCache::VectorField {
                x: (0..half * half)
                    .map(|k| {
                        // L(x, 0) = ½‖X‖² and ∂L/∂v(x, 0) = −X
                        -spec.grad_v(&half_point(k), &Vec2::zeros())
                    })
                    .collect(),
            },
            Lagrangian::Custom(_) => FieldCache::Direct,
        };
        let mut op = Self {
            spec,
            grid,
            c,
            dt,
            window,
            cache,
            table: None,
        };
        let m = grid.m;
        let nd = op.displacements();
        if m * m * nd <= MAX_COST_TABLE {
            let table: Vec<f64> = (0..m)
                .into_par_iter()
                .flat_map_iter(|i| {
                    let op = &op;
                    (0..nd).flat_map(move |k| (0..m).map(move |j| op.cost(i, j, k)))
                })
                .collect();
            op.table = Some(table);
        }
        Ok(op)
    }

    pub fn window(&self) -> usize {
        self.window
    }

    fn displacements(&self) -> usize {
        let side = 2 * self.window + 1;
        side * side
    }

    fn displacement(&self, k: usize) -> (isize, isize) {
        let side = 2 * self.window + 1;
        let w = self.window as isize;
        ((k / side) as isize - w, (k % side) as isize - w)
    }

    /// `dt·L(x − d/2, d/dt) − ⟨c, d⟩` for `d = (a, b)Δx` at node `(i, j)`.
    fn cost(&self, i: usize, j: usize, k: usize) -> f64 {
        let (a, b) = self.displacement(k);
        let dx = self.grid.spacing();
        let d = Vec2::new(a as f64, b as f64) * dx;
        let v = d / self.dt;
        let half = 2 * self.grid.m as isize;
        let hi = (2 * i as isize - a).rem_euclid(half) as usize;
        let hj = (2 * j as isize - b).rem_euclid(half) as usize;
        let slot = hi * half as usize + hj;
        let lag = match &self.cache {
            FieldCache::Mechanical { g, f } => 0.5 * v.dot(&(g[slot] * v)) + f[slot],
            FieldCache::VectorField { x } => 0.5 * (v - x[slot]).norm_squared(),
            FieldCache::Direct => {
                let mid = Vec2::new(hi as f64, hj as f64) / half as f64;
                self.spec.value(&mid, &v)
            }
        };
        self.dt * lag - self.c.dot(&d)
    }

    /// Unnormalized step; also returns the fraction of nodes whose argmin
    /// lies on the window boundary.
    pub fn apply_raw(&self, u: &[f64]) -> (Vec<f64>, f64) {
        let m = self.grid.m;
        assert_eq!(u.len(), m * m);
        let nd = self.displacements();
        let w = self.window as isize;
        // minima over interior and boundary displacements, kept apart so the
        // inner loops are plain branch-free minima
        let mut inner = vec![f64::INFINITY; m * m];
        let mut edge = vec![f64::INFINITY; m * m];
        let sweep = |i: usize, irow: &mut [f64], erow: &mut [f64]| {
            let mut local = if self.table.is_none() { vec![0.0; m] } else { Vec::new() };
            for k in 0..nd {
                let (a, b) = self.displacement(k);
                let orow = if a.abs() == w || b.abs() == w { &mut *erow } else { &mut *irow };
                let yi = (i as isize - a).rem_euclid(m as isize) as usize;
                let urow = &u[yi * m..(yi + 1) * m];
                let crow: &[f64] = match &self.table {
                    Some(t) => &t[(i * nd + k) * m..(i * nd + k + 1) * m],
                    None => {
                        for (j, c) in local.iter_mut().enumerate() {
                            *c = self.cost(i, j, k);
                        }
                        &local
                    }
                };
                // y_j = j − b (mod M), split into two contiguous runs
                let bb = b.rem_euclid(m as isize) as usize;
                let (head, tail) = orow.split_at_mut(bb);
                for ((o, uy), c) in tail.iter_mut().zip(&urow[..m - bb]).zip(&crow[bb..]) {
                    let val = uy + c;
                    *o = if val < *o { val } else { *o };
                }
                for ((o, uy), c) in head.iter_mut().zip(&urow[m - bb..]).zip(&crow[..bb]) {
                    let val = uy + c;
                    *o = if val < *o { val } else { *o };
                }
            }
        };
        inner
            .par_chunks_mut(m)
            .zip(edge.par_chunks_mut(m))
            .enumerate()
            .for_each(|(i, (irow, erow))| sweep(i, irow, erow));
        let mut on_boundary = 0usize;
        for (o, e) in inner.iter_mut().zip(&edge) {
            if *e < *o {
                *o = *e;
                on_boundary += 1;
            }
        }
        (inner, on_boundary as f64 / (m * m) as f64)
    }

    /// Normalized step: `(u' − min u', min u')`.
    pub fn step(&self, u: &[f64]) -> Result<(Vec<f64>, f64), WeakKamError> {
        let (mut next, boundary) = self.apply_raw(u);
        if boundary > 0.01 {
            return Err(WeakKamError::WindowTooSmall {
                window: self.window,
                fraction: boundary,
            });
        }
        let shift = next.iter().copied().fold(f64::INFINITY, f64::min);
        next.iter_mut().for_each(|v| *v -= shift);
        Ok((next, shift))
    }
}

/// One normalized Lax–Oleinik step from `field` with class `c`.
pub fn lax_oleinik_step(
    spec: &Lagrangian,
    field: &ValueField,
    c: CohomologyClass,
    dt: f64,
    window: usize,
) -> Result<(ValueField, f64), WeakKamError> {
    let op = LaxOleinik::new(spec, field.grid, c, dt, window)?;
    let (u, shift) = op.step(&field.u)?;
    let mut next = field.clone();
    next.u = u;
    next.c = c;
    next.dt = dt;
    next.window = window;
    next.shifts.push(shift);
    Ok((next, shift))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverParams {
    pub dt: f64,
    /// Sup-norm increment at which the iteration stops.
    pub tol: f64,
    pub max_iters: usize,
    /// Initial window; estimated from `c` and the Lagrangian when `None`.
    pub window: Option<usize>,
    /// Weight `θ` of the new iterate in `u ← (1−θ)u + θ·T(u)`; `1` is the
    /// plain iteration. Averaging breaks the periodic regimes the plain
    /// min-plus iteration can fall into on rotational classes.
    pub relaxation: f64,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            dt: 0.1,
            tol: 1e-10,
            max_iters: 5000,
            window: None,
            relaxation: 0.5,
        }
    }
}

/// Window covering the speeds a calibrated curve can reach, with margin.
pub fn estimate_window(spec: &Lagrangian, grid: Grid2, c: CohomologyClass, dt: f64) -> usize {
    let res = 32;
    let mut x_max: f64 = 0.0;
    let mut f_lo = f64::INFINITY;
    let mut f_hi = f64::NEG_INFINITY;
    let mut inv_max: f64 = 1.0;
    for i in 0..res {
        for j in 0..res {
            let x = Vec2::new(i as f64, j as f64) / res as f64;
            match spec {
                Lagrangian::Mechanical { metric, potential } => {
                    let f = potential.value(&x);
                    f_lo = f_lo.min(f);
                    f_hi = f_hi.max(f);
                    let g = metric.at(&x);
                    inv_max = inv_max.max(1.0 / crate::lagrangian::smallest_eigenvalue(&g));
                }
                _ => {
                    x_max = x_max.max(spec.grad_v(&x, &Vec2::zeros()).norm());
                }
            }
        }
    }
    let osc = if f_hi >= f_lo { f_hi - f_lo } else { 0.0 };
    let speed = inv_max * (c.norm() + (2.0 * osc * inv_max.max(1.0)).sqrt()) + 2.0 * x_max;
    let cells = (1.25 * speed * dt / grid.spacing()).ceil() as usize + 2;
    cells.clamp(2, grid.m / 2 - 1)
}

/// Iterate from `u ≡ 0` until the sup-norm increment drops below `tol`.
/// Each recorded shift is `min T(u)` for the normalized current iterate.
/// The window grows by half whenever minimizers press against it.
pub fn solve_weak_kam(
    spec: &Lagrangian,
    c: CohomologyClass,
    grid: Grid2,
    params: &SolverParams,
) -> Result<ValueField, WeakKamError> {
    if !(params.relaxation > 0.0 && params.relaxation <= 1.0) {
        return Err(WeakKamError::InvalidRelaxation(params.relaxation));
    }
    let theta = params.relaxation;
    let mut window = params
        .window
        .unwrap_or_else(|| estimate_window(spec, grid, c, params.dt));
    let mut op = LaxOleinik::new(spec, grid, c, params.dt, window)?;
    let mut field = ValueField::zeros(grid, c, params.dt);
    field.window = window;
    let mut increment = f64::INFINITY;
    while field.shifts.len() < params.max_iters {
        let (mut u, shift) = match op.step(&field.u) {
            Ok(r) => r,
            Err(WeakKamError::WindowTooSmall { .. }) if 3 * window / 2 < grid.m / 2 => {
                window = (3 * window).div_ceil(2);
                op = LaxOleinik::new(spec, grid, c, params.dt, window)?;
                field.window = window;
                continue;
            }
            Err(e) => return Err(e),
        };
        if theta < 1.0 {
            u.iter_mut().zip(&field.u).for_each(|(n, o)| *n = (1.0 - theta) * o + theta * *n);
            let lo = u.iter().copied().fold(f64::INFINITY, f64::min);
            u.iter_mut().for_each(|v| *v -= lo);
        }
        increment = u
            .iter()
            .zip(&field.u)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        field.u = u;
        field.shifts.push(shift);
        field.increments.push(increment);
        if increment < params.tol && field.shifts.len() >= SHIFT_WINDOW {
            field.converged = true;
            break;
        }
    }
    let tail = &field.shifts[field.shifts.len().saturating_sub(SHIFT_WINDOW)..];
    field.alpha_estimate = -tail.iter().sum::<f64>() / tail.len().max(1) as f64 / params.dt;
    if field.converged {
        Ok(field)
    } else {
        Err(WeakKamError::NoConvergence {
            iterations: field.shifts.len(),
            increment,
            field: Box::new(field),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubsolutionReport {
    /// `max_x H(x, c + du(x)) − α`.
    pub max_violation: f64,
    pub worst_node: (usize, usize),
    /// Nodes with `|H − α| < slack`.
    pub calibrated: Vec<(usize, usize)>,
    pub slack: f64,
    pub passes: bool,
}

/// `H(x, c + du)` against the α estimate at every node.
pub fn subsolution_check(
    spec: &Lagrangian,
    field: &ValueField,
    slack: f64,
) -> Result<SubsolutionReport, WeakKamError> {
    let m = field.grid.m;
    if field.u.len() != m * m {
        return Err(WeakKamError::Shape(format!("{} values for M = {m}", field.u.len())));
    }
    let values = (0..m * m)
        .into_par_iter()
        .map(|node| {
            let (i, j) = (node / m, node % m);
            let p = field.c + field.gradient(i, j);
            spec.hamiltonian(&field.grid.point(i, j), &p)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let alpha = field.alpha_estimate;
    let mut worst = (f64::NEG_INFINITY, (0, 0));
    let mut calibrated = Vec::new();
    for (node, h) in values.iter().enumerate() {
        let ij = (node / m, node % m);
        if h - alpha > worst.0 {
            worst = (h - alpha, ij);
        }
        if (h - alpha).abs() < slack {
            calibrated.push(ij);
        }
    }
    Ok(SubsolutionReport {
        max_violation: worst.0,
        worst_node: worst.1,
        calibrated,
        slack,
        passes: worst.0 < slack,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GraphSection {
    pub x0: TorusPoint,
    pub p: Vec2,
}

/// `p = c + du(x0)` at the node nearest `x0`.
pub fn graph_section(field: &ValueField, x0: TorusPoint) -> GraphSection {
    let (i, j) = field.grid.snap(&x0);
    GraphSection {
        x0: TorusPoint::from_lift(field.grid.point(i, j)),
        p: field.c + field.gradient(i, j),
    }
}
