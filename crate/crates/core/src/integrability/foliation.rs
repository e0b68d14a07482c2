//! Fiber map `c ↦ c + du_c(x₀)` over a rectangle of cohomology classes.

use rayon::prelude::*;
use serde::Serialize;

use crate::lagrangian::{Lagrangian, TorusPoint, Vec2};
use crate::mather::CohomologyClass;
use crate::weakkam::{graph_section, solve_weak_kam, Grid2, SolverParams, ValueField, WeakKamError};

/// Injectivity ratio a foliation must exceed.
pub const INJECTIVITY_MIN: f64 = 0.5;
/// Hull-area coverage a foliation must exceed.
pub const COVERAGE_MIN: f64 = 0.8;

/// `n × n` grid on `[lo₁, hi₁] × [lo₂, hi₂]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CGrid {
    pub lo: Vec2,
    pub hi: Vec2,
    pub n: usize,
}

impl CGrid {
    pub fn square(half: f64, n: usize) -> Self {
        Self {
            lo: Vec2::new(-half, -half),
            hi: Vec2::new(half, half),
            n,
        }
    }

    pub fn points(&self) -> Vec<CohomologyClass> {
        let n = self.n;
        let at = |k: usize, a: f64, b: f64| if n == 1 { 0.5 * (a + b) } else { a + (b - a) * k as f64 / (n - 1) as f64 };
        (0..n * n)
            .map(|k| Vec2::new(at(k / n, self.lo[0], self.hi[0]), at(k % n, self.lo[1], self.hi[1])))
            .collect()
    }

    pub fn area(&self) -> f64 {
        (self.hi[0] - self.lo[0]) * (self.hi[1] - self.lo[1])
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FiberSample {
    pub c: CohomologyClass,
    pub p: Vec2,
}

#[derive(Debug, Clone, Serialize)]
pub struct FoliationProbeResult {
    pub x0: TorusPoint,
    pub samples: Vec<FiberSample>,
    /// `min_{c ≠ c′} ‖p(c) − p(c′)‖ / ‖c − c′‖`.
    pub injectivity: f64,
    /// Same ratio, maximum.
    pub continuity: f64,
    /// Hull area of the `p`'s over hull area of the `c`'s.
    pub coverage: f64,
}

impl FoliationProbeResult {
    pub fn injective(&self) -> bool {
        self.injectivity > INJECTIVITY_MIN
    }

    pub fn covers(&self) -> bool {
        self.coverage > COVERAGE_MIN
    }

    pub fn passes(&self) -> bool {
        self.injective() && self.covers()
    }
}

/// Probe results for several fibers sharing one set of weak-KAM solves.
#[derive(Debug, Clone, Serialize)]
pub struct FoliationProbe {
    pub grid: CGrid,
    pub m: usize,
    pub fibers: Vec<FoliationProbeResult>,
    /// Classes whose solve failed, with the error text.
    pub excluded: Vec<(CohomologyClass, String)>,
    /// Iteration counts of the solves that converged.
    pub iterations: Vec<usize>,
}

impl FoliationProbe {
    pub fn passes(&self) -> bool {
        !self.fibers.is_empty() && self.fibers.iter().all(|f| f.passes())
    }

    pub fn min_injectivity(&self) -> f64 {
        self.fibers.iter().map(|f| f.injectivity).fold(f64::INFINITY, f64::min)
    }

    pub fn min_coverage(&self) -> f64 {
        self.fibers.iter().map(|f| f.coverage).fold(f64::INFINITY, f64::min)
    }

    pub fn max_continuity(&self) -> f64 {
        self.fibers.iter().map(|f| f.continuity).fold(0.0, f64::max)
    }
}

/// Default fibers: four points spread over the torus.
pub fn default_fibers() -> Vec<TorusPoint> {
    vec![
        TorusPoint::new(0.0, 0.0),
        TorusPoint::new(0.25, 0.5),
        TorusPoint::new(0.5, 0.25),
        TorusPoint::new(0.75, 0.75),
    ]
}

pub fn foliation_probe(
    spec: &Lagrangian,
    x0s: &[TorusPoint],
    c_grid: CGrid,
    grid: Grid2,
    params: &SolverParams,
) -> Result<FoliationProbe, WeakKamError> {
    if c_grid.n == 0 || x0s.is_empty() {
        return Err(WeakKamError::Shape("empty cohomology grid or fiber list".into()));
    }
    let cs = c_grid.points();
    let solves: Vec<(CohomologyClass, Result<ValueField, WeakKamError>)> = cs
        .par_iter()
        .map(|c| (*c, solve_weak_kam(spec, *c, grid, params)))
        .collect();
    let mut fields = Vec::new();
    let mut excluded = Vec::new();
    for (c, r) in solves {
        match r {
            Ok(f) => fields.push(f),
            // configuration errors are not per-class failures
            Err(e @ (WeakKamError::InvalidGrid(_)
            | WeakKamError::InvalidStep(_)
            | WeakKamError::InvalidWindow(_)
            | WeakKamError::InvalidRelaxation(_))) => return Err(e),
            Err(e) => excluded.push((c, e.to_string())),
        }
    }
    let iterations = fields.iter().map(|f| f.shifts.len()).collect();
    let fibers = x0s
        .iter()
        .map(|x0| {
            let samples: Vec<FiberSample> = fields
                .iter()
                .map(|f| FiberSample {
                    c: f.c,
                    p: graph_section(f, *x0).p,
                })
                .collect();
            let (injectivity, continuity) = ratios(&samples);
            let cs: Vec<Vec2> = samples.iter().map(|s| s.c).collect();
            let ps: Vec<Vec2> = samples.iter().map(|s| s.p).collect();
            let reference = hull_area(&cs);
            let coverage = if reference > 0.0 { hull_area(&ps) / reference } else { 0.0 };
            FoliationProbeResult {
                x0: *x0,
                samples,
                injectivity,
                continuity,
                coverage,
            }
        })
        .collect();
    Ok(FoliationProbe {
        grid: c_grid,
        m: grid.m,
        fibers,
        excluded,
        iterations,
    })
}

fn ratios(samples: &[FiberSample]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for (k, a) in samples.iter().enumerate() {
        for b in &samples[k + 1..] {
            let dc = (a.c - b.c).norm();
            if dc == 0.0 {
                continue;
            }
            let r = (a.p - b.p).norm() / dc;
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    if lo.is_infinite() {
        lo = 0.0;
    }
    (lo, hi)
}

/// Area of the convex hull (monotone chain).
pub fn hull_area(points: &[Vec2]) -> f64 {
    let mut pts: Vec<Vec2> = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return 0.0;
    }
    let cross = |o: &Vec2, a: &Vec2, b: &Vec2| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let mut hull: Vec<Vec2> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Vec2>> = if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for p in iter {
            while hull.len() >= start + 2 && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(*p);
        }
        hull.pop();
    }
    let n = hull.len();
    0.5 * (0..n)
        .map(|i| {
            let (a, b) = (hull[i], hull[(i + 1) % n]);
            a[0] * b[1] - a[1] * b[0]
        })
        .sum::<f64>()
        .abs()
}
