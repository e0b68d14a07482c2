use std::path::PathBuf;
use std::process::ExitCode;

use aubry::integrability::Verdict;
use aubry_cli::plot::PlotKind;
use aubry_cli::{ConfigError, Experiment, RawConfig, RunConfig, RunError};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "aubry", version, about = "Minimal-action and weak KAM experiments on the 2-torus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// INI configuration file.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Catalog spec name, shorthand for `--set spec.name=NAME`.
    #[arg(long)]
    spec: Option<String>,
    /// Override one key, `section.key=value`; repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// β on a polar grid of rational classes.
    BetaScan(Common),
    /// α by conjugation of the β table.
    Alpha(Common),
    /// One-sided derivatives and corner gaps over the class ladder.
    Subdiff(Common),
    /// Weak KAM solutions on a grid of cohomology classes.
    Weakkam(Common),
    /// Fiber-map probe.
    Foliation(Common),
    /// Corner scan, foliation probe and verdict.
    Report {
        #[command(flatten)]
        common: Common,
        /// verdict.json of an earlier report whose corner evidence is kept.
        #[arg(long, value_name = "PATH")]
        prior: Option<PathBuf>,
    },
    /// SVG plus CSV rendering of an artifact.
    Plot {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        kind: String,
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
    },
}

fn load(common: &Common) -> Result<RunConfig, ConfigError> {
    let mut raw = match &common.config {
        Some(p) => RawConfig::from_file(p)?,
        None => RawConfig::default(),
    };
    raw.apply_env(std::env::vars())?;
    if let Some(name) = &common.spec {
        raw.set("spec", "name", name)?;
    }
    for s in &common.sets {
        raw.set_assignment(s)?;
    }
    if let Some(seed) = common.seed {
        raw.set("run", "seed", &seed.to_string())?;
    }
    if let Some(w) = common.workers {
        raw.set("run", "workers", &w.to_string())?;
    }
    RunConfig::from_raw(&raw)
}

fn read_prior(path: &PathBuf) -> Result<Verdict, RunError> {
    let text = std::fs::read_to_string(path).map_err(|e| RunError::Io(format!("{}: {e}", path.display())))?;
    let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| RunError::Io(format!("{}: {e}", path.display())))?;
    v.get("verdict")
        .and_then(|s| s.as_str())
        .and_then(Verdict::parse)
        .ok_or_else(|| RunError::Io(format!("{}: no verdict field", path.display())))
}

fn dispatch(cli: Cli) -> Result<(), RunError> {
    let (common, experiment) = match cli.command {
        Command::BetaScan(c) => (c, Experiment::BetaScan),
        Command::Alpha(c) => (c, Experiment::Alpha),
        Command::Subdiff(c) => (c, Experiment::Subdiff),
        Command::Weakkam(c) => (c, Experiment::WeakKam),
        Command::Foliation(c) => (c, Experiment::Foliation),
        Command::Report { common, prior } => {
            let prior = prior.as_ref().map(read_prior).transpose()?;
            (common, Experiment::Report { prior })
        }
        Command::Plot { common, kind, input } => {
            let kind: PlotKind = kind.parse().map_err(|e: aubry_cli::plot::PlotError| RunError::Module {
                job: "plot".into(),
                message: e.to_string(),
            })?;
            let input = input.to_string_lossy().into_owned();
            (common, Experiment::Plot { kind, input })
        }
    };
    let config = load(&common)?;
    aubry_cli::run(&config, &experiment, &common.out)?;
    Ok(())
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", serde_json::to_string(&e.record()).expect("serializable record"));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
