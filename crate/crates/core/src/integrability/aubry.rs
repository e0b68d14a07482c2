//! Projected support of the minimizers selected by `c`, with the
//! single-valuedness check on velocities.

use serde::Serialize;

use super::fixed_points::{fixed_point_scan, FixedPointScan, ScanParams};
use crate::lagrangian::{Lagrangian, TorusPoint, Vec2};
use crate::loopmin::{refine_loop, LoopError, MinimizeOptions};
use crate::mather::{alpha_conjugate, BetaTable, CohomologyClass, HomologyClass, MatherError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AubryError {
    #[error("no sample attains the Fenchel equality within {tol:e} (smallest gap {best:e})")]
    EmptySupport { tol: f64, best: f64 },
    #[error("raster resolution must be positive")]
    InvalidRaster,
    #[error(transparent)]
    Mather(#[from] MatherError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupportParams {
    /// Fenchel-gap tolerance selecting the classes.
    pub gap_tol: f64,
    pub raster: usize,
    /// Velocity spread allowed per occupied cell.
    pub spread_tol: f64,
    pub loop_opts: MinimizeOptions,
}

impl Default for SupportParams {
    fn default() -> Self {
        Self {
            gap_tol: 1e-3,
            raster: 64,
            spread_tol: 5e-2,
            loop_opts: MinimizeOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SupportClass {
    pub h: HomologyClass,
    pub gap: f64,
    /// Loop period; zero for rest points.
    pub period: f64,
    /// Whether the warm-started re-minimization met its tolerance.
    pub refined: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct AubrySupport {
    pub c: CohomologyClass,
    pub raster: usize,
    pub classes: Vec<SupportClass>,
    /// Normalized occupation mass, row-major in `(i, j)`.
    pub mass: Vec<f64>,
    /// Per-cell velocity spread, `0` for empty cells.
    pub spread: Vec<f64>,
    pub max_spread: f64,
    pub spread_tol: f64,
    pub graph_property: bool,
}

impl AubrySupport {
    pub fn occupied(&self) -> usize {
        self.mass.iter().filter(|m| **m > 0.0).count()
    }

    /// Mass in cells whose centre has `x₁` within `cells` cells of `line`.
    pub fn mass_near_vertical(&self, line: f64, cells: usize) -> f64 {
        let r = self.raster;
        (0..r * r)
            .filter(|k| {
                let x1 = (k / r) as f64 / r as f64;
                let d = (x1 - line).rem_euclid(1.0);
                d.min(1.0 - d) * r as f64 <= cells as f64 + 1e-9
            })
            .map(|k| self.mass[k])
            .sum()
    }

    /// Mask as CSV `i,j,mass,spread` over occupied cells.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("i,j,mass,spread\n");
        let r = self.raster;
        for k in 0..r * r {
            if self.mass[k] > 0.0 {
                out.push_str(&format!("{},{},{},{}\n", k / r, k % r, self.mass[k], self.spread[k]));
            }
        }
        out
    }

    /// Binary mask as plain PGM.
    pub fn to_pgm(&self) -> String {
        let r = self.raster;
        let mut out = format!("P2\n{r} {r}\n1\n");
        // rows top to bottom in x₂, columns in x₁
        for j in (0..r).rev() {
            let row: Vec<&str> = (0..r).map(|i| if self.mass[i * r + j] > 0.0 { "1" } else { "0" }).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }
}

struct Raster {
    r: usize,
    mass: Vec<f64>,
    lo: Vec<Vec2>,
    hi: Vec<Vec2>,
}

impl Raster {
    fn new(r: usize) -> Self {
        Self {
            r,
            mass: vec![0.0; r * r],
            lo: vec![Vec2::repeat(f64::INFINITY); r * r],
            hi: vec![Vec2::repeat(f64::NEG_INFINITY); r * r],
        }
    }

    fn add(&mut self, x: &TorusPoint, v: &Vec2, w: f64) {
        let c = x.coords() * self.r as f64;
        let cell = |t: f64| (t.floor() as usize).min(self.r - 1);
        let k = cell(c[0]) * self.r + cell(c[1]);
        self.mass[k] += w;
        self.lo[k] = self.lo[k].inf(v);
        self.hi[k] = self.hi[k].sup(v);
    }
}

/// Support of the classes `h` with `fenchel_gap(c, h) < gap_tol`.
pub fn aubry_support_approx(
    spec: &Lagrangian,
    c: CohomologyClass,
    table: &BetaTable,
    params: &SupportParams,
) -> Result<AubrySupport, AubryError> {
    if params.raster == 0 {
        return Err(AubryError::InvalidRaster);
    }
    let alpha = alpha_conjugate(table, c)?.value;
    let gaps: Vec<f64> = table
        .samples
        .iter()
        .map(|s| alpha + s.value - c.dot(&s.h()))
        .collect();
    let best = gaps.iter().copied().fold(f64::INFINITY, f64::min);
    let chosen: Vec<usize> = (0..gaps.len()).filter(|k| gaps[*k] < params.gap_tol).collect();
    if chosen.is_empty() {
        return Err(AubryError::EmptySupport {
            tol: params.gap_tol,
            best,
        });
    }
    let mut raster = Raster::new(params.raster);
    let mut classes = Vec::new();
    let weight = 1.0 / chosen.len() as f64;
    for k in chosen {
        let s = &table.samples[k];
        let mut refined = true;
        if let Some(lp) = &s.lp {
            let lp = match refine_loop(spec, lp, &params.loop_opts) {
                Ok(m) => m.lp,
                Err(LoopError::NoDescent { best }) => {
                    refined = false;
                    best.lp
                }
                Err(_) => {
                    refined = false;
                    lp.clone()
                }
            };
            let n = lp.len();
            for j in 0..n {
                let x = TorusPoint::from_lift(lp.segment_midpoint(j));
                raster.add(&x, &lp.segment_velocity(j), weight / n as f64);
            }
        } else {
            let scan = fixed_point_scan(spec, &ScanParams::default());
            match scan {
                FixedPointScan::Everywhere { .. } => {
                    let r = params.raster;
                    for q in 0..r * r {
                        let x = TorusPoint::new(((q / r) as f64 + 0.5) / r as f64, ((q % r) as f64 + 0.5) / r as f64);
                        raster.add(&x, &Vec2::zeros(), weight / (r * r) as f64);
                    }
                }
                FixedPointScan::Points(_) => {
                    let mins = scan.minimizing();
                    let fallback = s.rest_point.map(TorusPoint::from_lift);
                    let pts: Vec<TorusPoint> = if mins.is_empty() {
                        fallback.into_iter().collect()
                    } else {
                        mins.iter().map(|p| p.x).collect()
                    };
                    for x in &pts {
                        raster.add(x, &Vec2::zeros(), weight / pts.len() as f64);
                    }
                }
            }
        }
        classes.push(SupportClass {
            h: s.h(),
            gap: gaps[k],
            period: s.period,
            refined,
        });
    }
    let spread: Vec<f64> = (0..raster.mass.len())
        .map(|k| if raster.mass[k] > 0.0 { (raster.hi[k] - raster.lo[k]).norm() } else { 0.0 })
        .collect();
    let max_spread = spread.iter().copied().fold(0.0, f64::max);
    let total: f64 = raster.mass.iter().sum();
    let mass = raster.mass.iter().map(|m| m / total).collect();
    Ok(AubrySupport {
        c,
        raster: params.raster,
        classes,
        mass,
        spread,
        max_spread,
        spread_tol: params.spread_tol,
        graph_property: max_spread < params.spread_tol,
    })
}
