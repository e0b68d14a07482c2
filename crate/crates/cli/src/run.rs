//! Experiment dispatch.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use aubry::integrability::{
    aubry_support_approx, c1_vs_integrability_report, default_class_ladder, default_fibers, fixed_point_scan,
    foliation_probe, Budgets, CGrid, FixedPointScan, FoliationProbe, ScanParams, SupportParams, Verdict,
};
use aubry::lagrangian::{Lagrangian, Vec2};
use aubry::loopmin::{MinimizeOptions, WindingClass};
use aubry::mather::{
    alpha_with_extension, beta_scan, corner_probe, primitive_directions, BetaGrid, BetaTable, DirectBeta, NodeRule,
    RationalClass, SubdiffEstimate,
};
use aubry::weakkam::{solve_weak_kam, subsolution_check, Grid2, SolverParams, ValueField, WeakKamError};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::output::{self, JobStatus, Outputs, RunManifest};
use crate::plot::{self, PlotKind};
use crate::RunError;

#[derive(Debug, Clone, PartialEq)]
pub enum Experiment {
    BetaScan,
    Alpha,
    Subdiff,
    WeakKam,
    Foliation,
    /// `prior` is the verdict of an earlier report on the same spec.
    Report { prior: Option<Verdict> },
    Plot { kind: PlotKind, input: String },
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::BetaScan => "beta-scan",
            Experiment::Alpha => "alpha",
            Experiment::Subdiff => "subdiff",
            Experiment::WeakKam => "weakkam",
            Experiment::Foliation => "foliation",
            Experiment::Report { .. } => "report",
            Experiment::Plot { .. } => "plot",
        }
    }
}

/// Runs `experiment` in a pool of `config.run.workers` threads and writes its
/// outputs plus `manifest.json` into `out`.
pub fn run(config: &RunConfig, experiment: &Experiment, out: &Path) -> Result<RunManifest, RunError> {
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.run.workers)
        .build()
        .map_err(|e| RunError::Io(e.to_string()))?;
    let mut outputs = Outputs::default();
    let mut jobs = Vec::new();
    pool.install(|| execute(config, experiment, &mut outputs, &mut jobs))?;
    outputs.write_all(out).map_err(|e| RunError::Io(e.to_string()))?;
    let files = output::inventory(out).map_err(|e| RunError::Io(e.to_string()))?;
    let manifest = RunManifest {
        command: experiment.name().to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: serde_json::to_value(config).expect("serializable config"),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        jobs,
        files,
    };
    let mut text = serde_json::to_string_pretty(&manifest).expect("serializable manifest");
    text.push('\n');
    output::write_atomic(&out.join(output::MANIFEST), text.as_bytes()).map_err(|e| RunError::Io(e.to_string()))?;
    Ok(manifest)
}

fn check_jobs(config: &RunConfig, n: usize, what: &str) -> Result<(), RunError> {
    if n > config.run.max_jobs {
        return Err(RunError::BudgetExceeded {
            jobs: n,
            cap: config.run.max_jobs,
            what: what.to_string(),
        });
    }
    Ok(())
}

fn module(job: &str, e: impl std::fmt::Display) -> RunError {
    RunError::Module {
        job: job.to_string(),
        message: e.to_string(),
    }
}

pub fn beta_grid(config: &RunConfig) -> BetaGrid {
    let b = &config.beta;
    BetaGrid {
        nodes: if b.fixed_nodes {
            NodeRule::Fixed(b.nodes)
        } else {
            NodeRule::PerUnit(b.nodes)
        },
        k_max: b.k_max,
        loop_opts: MinimizeOptions {
            n_restarts: b.restarts,
            max_iters: b.max_iters,
            g_tol: b.g_tol,
            seed: config.run.seed,
            ..MinimizeOptions::default()
        },
        rest_res: b.rest_res,
    }
}

fn report_grid(config: &RunConfig) -> BetaGrid {
    let r = &config.report;
    BetaGrid {
        nodes: NodeRule::PerUnit(r.nodes),
        k_max: r.k_max,
        loop_opts: MinimizeOptions {
            n_restarts: r.restarts,
            seed: config.run.seed,
            ..MinimizeOptions::default()
        },
        rest_res: 64,
    }
}

pub fn solver_params(config: &RunConfig) -> SolverParams {
    let w = &config.weakkam;
    SolverParams {
        dt: w.dt,
        tol: w.tol,
        max_iters: w.max_iters,
        window: (w.window > 0).then_some(w.window),
        relaxation: w.relaxation,
    }
}

/// Classes of the corner ladder: the eight default directions at each norm.
pub fn corner_classes(norms: &[f64]) -> Vec<RationalClass> {
    let dirs: Vec<WindingClass> = default_class_ladder().iter().take(8).map(|c| c.direction).collect();
    let mut out = Vec::new();
    for r in norms {
        for d in &dirs {
            out.push(RationalClass::new(*d, r / d.as_vec().norm()).expect("positive norm"));
        }
    }
    out
}

pub fn budgets(config: &RunConfig) -> Budgets {
    let r = &config.report;
    Budgets {
        beta_grid: report_grid(config),
        corner_classes: corner_classes(&config.subdiff.norms),
        corner_m: r.corner_m,
        corner_floor: r.corner_floor,
        noise_factor: r.noise_factor,
        fibers: default_fibers()[..config.foliation.fibers].to_vec(),
        c_grid: CGrid::square(config.foliation.c_half, config.foliation.c_n),
        kam_m: config.foliation.m,
        solver: solver_params(config),
        mechanical_tol: r.mechanical_tol,
        mechanical_res: r.mechanical_res,
    }
}

fn execute(
    config: &RunConfig,
    experiment: &Experiment,
    outputs: &mut Outputs,
    jobs: &mut Vec<JobStatus>,
) -> Result<(), RunError> {
    let spec = config.spec.build().map_err(|e| RunError::Config(e.into()))?;
    match experiment {
        Experiment::BetaScan => {
            let table = scan_table(config, &spec, &beta_grid(config), jobs)?;
            outputs.add("beta_table.csv", table.to_csv());
            outputs.add_json("beta_summary.json", &table_summary(config, &spec, &table));
        }
        Experiment::Alpha => {
            let grid = beta_grid(config);
            let mut table = scan_table(config, &spec, &grid, jobs)?;
            let cs = CGrid::square(config.alpha.c_half, config.alpha.c_n).points();
            check_jobs(config, cs.len(), "alpha classes")?;
            let mut csv = String::from("c1,c2,alpha,argmax_h1,argmax_h2,radius_too_small\n");
            for c in cs {
                let a = alpha_with_extension(&spec, &mut table, c, &grid, config.alpha.max_doublings)
                    .map_err(|e| module(&format!("alpha c=({},{})", c[0], c[1]), e))?;
                writeln!(csv, "{},{},{},{},{},{}", c[0], c[1], a.value, a.argmax[0], a.argmax[1], a.radius_too_small)
                    .unwrap();
                if a.radius_too_small {
                    jobs.push(JobStatus::new(
                        format!("alpha c=({},{})", c[0], c[1]),
                        "unconverged",
                        Some("maximizer on the outer ring".into()),
                    ));
                }
            }
            outputs.add("alpha.csv", csv);
            outputs.add("beta_table.csv", table.to_csv());
        }
        Experiment::Subdiff => {
            let classes = corner_classes(&config.subdiff.norms);
            check_jobs(config, classes.len(), "corner classes")?;
            let src = DirectBeta::new(&spec, beta_grid(config));
            let results: Vec<_> = classes
                .par_iter()
                .map(|c| corner_probe(&src, c, config.subdiff.m))
                .collect();
            let mut ok = Vec::new();
            for (c, r) in classes.iter().zip(results) {
                let name = format!("corner h=({},{})", c.h()[0], c.h()[1]);
                match r {
                    Ok(e) => {
                        ok.push(e);
                        jobs.push(JobStatus::ok(name));
                    }
                    Err(e) => jobs.push(JobStatus::new(name, "failed", Some(e.to_string()))),
                }
            }
            outputs.add("subdiff.csv", subdiff_csv(&ok));
        }
        Experiment::WeakKam => weakkam(config, &spec, outputs, jobs)?,
        Experiment::Foliation => {
            let b = budgets(config);
            check_jobs(config, b.c_grid.n * b.c_grid.n, "foliation classes")?;
            let grid = Grid2::new(b.kam_m).map_err(|e| module("foliation", e))?;
            let probe = foliation_probe(&spec, &b.fibers, b.c_grid, grid, &b.solver).map_err(|e| module("foliation", e))?;
            for (c, e) in &probe.excluded {
                jobs.push(JobStatus::new(format!("weakkam c=({},{})", c[0], c[1]), "excluded", Some(e.clone())));
            }
            outputs.add("foliation.csv", foliation_csv(&probe));
            outputs.add_json("foliation.json", &foliation_summary(&probe));
        }
        Experiment::Report { prior } => report(config, &spec, *prior, outputs, jobs)?,
        Experiment::Plot { kind, input } => {
            let text = std::fs::read_to_string(input).map_err(|e| RunError::Io(format!("{input}: {e}")))?;
            let (svg, csv) = plot::render(*kind, &text, &config.plot).map_err(|e| module("plot", e))?;
            outputs.add(format!("{}.svg", kind.name()), svg);
            outputs.add(format!("{}.csv", kind.name()), csv);
        }
    }
    Ok(())
}

fn scan_table(
    config: &RunConfig,
    spec: &Lagrangian,
    grid: &BetaGrid,
    jobs: &mut Vec<JobStatus>,
) -> Result<BetaTable, RunError> {
    let dirs = primitive_directions(config.beta.directions);
    check_jobs(config, dirs.len() * config.beta.radii.len() + 1, "beta classes")?;
    let table = beta_scan(spec, &dirs, &config.beta.radii, config.beta.include_zero, grid)
        .map_err(|e| module("beta-scan", e))?;
    for s in &table.samples {
        let name = format!("beta h=({},{})", s.h()[0], s.h()[1]);
        jobs.push(if s.converged {
            JobStatus::ok(name)
        } else {
            JobStatus::new(name, "unconverged", Some(format!("residual {:e}", s.residual)))
        });
    }
    Ok(table)
}

#[derive(Serialize)]
struct TableSummary {
    spec: String,
    rows: usize,
    all_converged: bool,
    convexity_violations: usize,
    superlinearity_violations: usize,
    beta_zero: Option<f64>,
    min_rest_value: Option<f64>,
}

fn table_summary(config: &RunConfig, spec: &Lagrangian, table: &BetaTable) -> TableSummary {
    TableSummary {
        spec: config.spec.label(),
        rows: table.len(),
        all_converged: table.all_converged(),
        convexity_violations: table.convexity_violations(1e-9).len(),
        superlinearity_violations: table.superlinearity_violations(1e-9).len(),
        beta_zero: table.zero_sample().map(|s| s.value),
        min_rest_value: fixed_point_scan(spec, &ScanParams::default()).min_value(),
    }
}

pub fn subdiff_csv(estimates: &[SubdiffEstimate]) -> String {
    let mut csv = String::from("h1,h2,u1,u2,eps,d_plus,d_minus,corner_gap\n");
    for e in estimates {
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            e.h[0], e.h[1], e.u[0], e.u[1], e.eps, e.d_plus, e.d_minus, e.corner_gap
        )
        .unwrap();
    }
    csv
}

pub fn foliation_csv(probe: &FoliationProbe) -> String {
    let mut csv = String::from("x0_1,x0_2,c1,c2,p1,p2\n");
    for f in &probe.fibers {
        let x = f.x0.coords();
        for s in &f.samples {
            writeln!(csv, "{},{},{},{},{},{}", x[0], x[1], s.c[0], s.c[1], s.p[0], s.p[1]).unwrap();
        }
    }
    csv
}

#[derive(Serialize)]
struct FiberSummary {
    x0: Vec2,
    injectivity: f64,
    continuity: f64,
    coverage: f64,
    passes: bool,
}

fn foliation_summary(probe: &FoliationProbe) -> serde_json::Value {
    let fibers: Vec<FiberSummary> = probe
        .fibers
        .iter()
        .map(|f| FiberSummary {
            x0: f.x0.coords(),
            injectivity: f.injectivity,
            continuity: f.continuity,
            coverage: f.coverage,
            passes: f.passes(),
        })
        .collect();
    serde_json::json!({
        "m": probe.m,
        "c_grid": probe.grid,
        "passes": probe.passes(),
        "fibers": fibers,
        "excluded": probe.excluded,
    })
}

fn weakkam(config: &RunConfig, spec: &Lagrangian, outputs: &mut Outputs, jobs: &mut Vec<JobStatus>) -> Result<(), RunError> {
    let w = &config.weakkam;
    let grid = Grid2::new(w.m).map_err(|e| RunError::Config(crate::config::ConfigError::Invalid {
        field: "weakkam.m".into(),
        message: e.to_string(),
    }))?;
    let params = solver_params(config);
    let cs = CGrid::square(w.c_half, w.c_n).points();
    check_jobs(config, cs.len(), "weak KAM classes")?;
    let solved: Vec<Result<ValueField, WeakKamError>> = cs.par_iter().map(|c| solve_weak_kam(spec, *c, grid, &params)).collect();
    let mut csv = String::from("c1,c2,alpha_estimate,iterations,converged,window,max_violation,subsolution\n");
    for (k, (c, r)) in cs.iter().zip(solved).enumerate() {
        let name = format!("weakkam c=({},{})", c[0], c[1]);
        let field = match r {
            Ok(f) => {
                jobs.push(JobStatus::ok(&name));
                f
            }
            Err(WeakKamError::NoConvergence { field, increment, .. }) => {
                jobs.push(JobStatus::new(&name, "unconverged", Some(format!("last increment {increment:e}"))));
                *field
            }
            Err(e) => {
                jobs.push(JobStatus::new(&name, "failed", Some(e.to_string())));
                continue;
            }
        };
        let sub = subsolution_check(spec, &field, w.slack).map_err(|e| module(&name, e))?;
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            c[0],
            c[1],
            field.alpha_estimate,
            field.shifts.len(),
            field.converged,
            field.window,
            sub.max_violation,
            sub.passes
        )
        .unwrap();
        outputs.add(format!("u_{k:03}.csv"), field.to_csv());
        outputs.add(format!("grad_{k:03}.csv"), field.gradient_csv());
    }
    outputs.add("weakkam.csv", csv);
    Ok(())
}

fn report(
    config: &RunConfig,
    spec: &Lagrangian,
    prior: Option<Verdict>,
    outputs: &mut Outputs,
    jobs: &mut Vec<JobStatus>,
) -> Result<(), RunError> {
    let b = budgets(config);
    check_jobs(config, b.corner_classes.len() + b.c_grid.n * b.c_grid.n, "report jobs")?;
    let grid = b.beta_grid.clone();
    let table = scan_table(config, spec, &grid, jobs)?;
    let verdict = c1_vs_integrability_report(spec, &b, prior);
    for (h, e) in &verdict.corner.failed {
        jobs.push(JobStatus::new(format!("corner h=({},{})", h[0], h[1]), "failed", Some(e.clone())));
    }
    if let Some(probe) = &verdict.foliation.probe {
        for (c, e) in &probe.excluded {
            jobs.push(JobStatus::new(format!("weakkam c=({},{})", c[0], c[1]), "excluded", Some(e.clone())));
        }
        outputs.add("foliation.csv", foliation_csv(probe));
    }
    outputs.add("subdiff.csv", subdiff_csv(&verdict.corner.estimates));

    let scan = fixed_point_scan(spec, &ScanParams::default());
    outputs.add("fixed_points.csv", fixed_points_csv(&scan));
    let support_params = SupportParams {
        gap_tol: config.report.gap_tol,
        raster: config.report.support_raster,
        loop_opts: grid.loop_opts.clone(),
        ..SupportParams::default()
    };
    let support = match aubry_support_approx(spec, Vec2::zeros(), &table, &support_params) {
        Ok(s) => {
            outputs.add("support.csv", s.to_csv());
            outputs.add("support.pgm", s.to_pgm());
            serde_json::json!({
                "c": [0.0, 0.0],
                "classes": s.classes,
                "occupied": s.occupied(),
                "max_spread": s.max_spread,
                "graph_property": s.graph_property,
            })
        }
        Err(e) => {
            jobs.push(JobStatus::new("support c=(0,0)", "failed", Some(e.to_string())));
            serde_json::json!({ "error": e.to_string() })
        }
    };
    outputs.add("beta_table.csv", table.to_csv());
    outputs.add_json(
        "verdict.json",
        &serde_json::json!({
            "spec": config.spec.label(),
            "seed": config.run.seed,
            "verdict": verdict.verdict.as_str(),
            "evidence": verdict,
            "zero_class": {
                "beta_zero": table.zero_sample().map(|s| s.value),
                "min_rest_value": scan.min_value(),
            },
            "support": support,
        }),
    );
    Ok(())
}

fn fixed_points_csv(scan: &FixedPointScan) -> String {
    let mut csv = String::from("x1,x2,rest_value,minimizing\n");
    match scan {
        FixedPointScan::Everywhere { value } => {
            writeln!(csv, "# every point, rest value {value}").unwrap();
        }
        FixedPointScan::Points(pts) => {
            for p in pts {
                let x = p.x.coords();
                writeln!(csv, "{},{},{},{}", x[0], x[1], p.value, p.minimizing).unwrap();
            }
        }
    }
    csv
}
