//! Run configuration: INI sections, environment overrides and validation.
//!
//! Every key has a default, so an empty configuration is valid. Layers apply
//! in order: file, `AUBRY_<SECTION>_<KEY>` environment variables, then
//! `--set section.key=value` flags.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use aubry::lagrangian::{CatalogError, SpecDescriptor};
use serde::Serialize;

pub const ENV_PREFIX: &str = "AUBRY_";

pub const SECTIONS: [&str; 9] = [
    "run", "spec", "beta", "alpha", "subdiff", "weakkam", "foliation", "report", "plot",
];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("unknown section [{0}]")]
    UnknownSection(String),
    #[error("unknown key `{key}` in [{section}]")]
    UnknownKey { section: String, key: String },
    #[error("invalid value for {field}: {message}")]
    Invalid { field: String, message: String },
    #[error(transparent)]
    Spec(#[from] CatalogError),
}

impl ConfigError {
    /// Dotted field name when the error concerns one key.
    pub fn field(&self) -> Option<String> {
        match self {
            ConfigError::UnknownKey { section, key } => Some(format!("{section}.{key}")),
            ConfigError::Invalid { field, .. } => Some(field.clone()),
            ConfigError::Spec(CatalogError::UnknownParam { param, .. }) => Some(format!("spec.{param}")),
            ConfigError::Spec(CatalogError::BadNumber { param, .. }) => Some(format!("spec.{param}")),
            _ => None,
        }
    }
}

/// Raw `section → key → value` layers before typing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig(pub BTreeMap<String, BTreeMap<String, String>>);

impl RawConfig {
    pub fn from_ini_str(text: &str) -> Result<Self, ConfigError> {
        let ini = ini::Ini::load_from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let mut raw = RawConfig::default();
        for (section, props) in ini.iter() {
            let Some(section) = section else {
                if let Some((key, _)) = props.iter().next() {
                    return Err(ConfigError::Parse(format!("key `{key}` outside any section")));
                }
                continue;
            };
            for (k, v) in props.iter() {
                raw.set(section, k, v)?;
            }
        }
        Ok(raw)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_ini_str(&text)
    }

    pub fn set(&mut self, section: &str, key: &str, value: &str) -> Result<(), ConfigError> {
        let section = section.trim().to_ascii_lowercase();
        if !SECTIONS.contains(&section.as_str()) {
            return Err(ConfigError::UnknownSection(section));
        }
        self.0
            .entry(section)
            .or_default()
            .insert(key.trim().to_ascii_lowercase(), value.trim().to_string());
        Ok(())
    }

    /// `section.key=value`.
    pub fn set_assignment(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (lhs, value) = assignment
            .split_once('=')
            .ok_or_else(|| ConfigError::Parse(format!("expected section.key=value, got `{assignment}`")))?;
        let (section, key) = lhs
            .split_once('.')
            .ok_or_else(|| ConfigError::Parse(format!("expected section.key=value, got `{assignment}`")))?;
        self.set(section, key, value)
    }

    /// Applies `AUBRY_<SECTION>_<KEY>` variables from `vars`.
    pub fn apply_env<I: IntoIterator<Item = (String, String)>>(&mut self, vars: I) -> Result<(), ConfigError> {
        let mut vars: Vec<(String, String)> = vars.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
        vars.sort();
        for (name, value) in vars {
            let rest = &name[ENV_PREFIX.len()..];
            let (section, key) = rest
                .split_once('_')
                .ok_or_else(|| ConfigError::Parse(format!("environment override `{name}` lacks a key")))?;
            self.set(section, key, &value)?;
        }
        Ok(())
    }
}

/// Typed view of one section that remembers which keys were read.
struct Section<'a> {
    name: &'static str,
    map: Option<&'a BTreeMap<String, String>>,
    used: Vec<&'static str>,
}

impl<'a> Section<'a> {
    fn new(raw: &'a RawConfig, name: &'static str) -> Self {
        Self {
            name,
            map: raw.0.get(name),
            used: Vec::new(),
        }
    }

    fn invalid(&self, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError::Invalid {
            field: format!("{}.{key}", self.name),
            message: message.into(),
        }
    }

    fn get<T: FromStr>(&mut self, key: &'static str, default: T) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        self.used.push(key);
        match self.map.and_then(|m| m.get(key)) {
            None => Ok(default),
            Some(v) => v.parse::<T>().map_err(|e| self.invalid(key, format!("`{v}`: {e}"))),
        }
    }

    fn float(&mut self, key: &'static str, default: f64) -> Result<f64, ConfigError> {
        let v = self.get(key, default)?;
        if !v.is_finite() {
            return Err(self.invalid(key, "must be finite"));
        }
        Ok(v)
    }

    fn positive(&mut self, key: &'static str, default: f64) -> Result<f64, ConfigError> {
        let v = self.float(key, default)?;
        if v <= 0.0 {
            return Err(self.invalid(key, format!("must be positive, got {v}")));
        }
        Ok(v)
    }

    fn count(&mut self, key: &'static str, default: i64) -> Result<usize, ConfigError> {
        let v: i64 = self.get(key, default)?;
        if v <= 0 {
            return Err(self.invalid(key, format!("must be positive, got {v}")));
        }
        Ok(v as usize)
    }

    fn list(&mut self, key: &'static str, default: &[f64]) -> Result<Vec<f64>, ConfigError> {
        self.used.push(key);
        let Some(raw) = self.map.and_then(|m| m.get(key)) else {
            return Ok(default.to_vec());
        };
        let items: Result<Vec<f64>, _> = raw.split(',').map(|s| s.trim().parse::<f64>()).collect();
        let items = items.map_err(|e| self.invalid(key, format!("`{raw}`: {e}")))?;
        if items.is_empty() || items.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(self.invalid(key, "must be a nonempty list of positive numbers"));
        }
        Ok(items)
    }

    fn finish(self) -> Result<(), ConfigError> {
        if let Some(map) = self.map {
            if let Some(key) = map.keys().find(|k| !self.used.contains(&k.as_str())) {
                return Err(ConfigError::UnknownKey {
                    section: self.name.to_string(),
                    key: key.clone(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSection {
    pub seed: u64,
    pub workers: usize,
    /// Upper bound on independent jobs per run.
    pub max_jobs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetaSection {
    /// Largest entry of the primitive directions.
    pub directions: i64,
    pub radii: Vec<f64>,
    pub include_zero: bool,
    /// Nodes per unit of period or length, or per loop when `fixed_nodes`.
    pub nodes: usize,
    pub fixed_nodes: bool,
    pub k_max: usize,
    pub restarts: usize,
    pub max_iters: usize,
    pub g_tol: f64,
    pub rest_res: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaSection {
    pub c_half: f64,
    pub c_n: usize,
    pub max_doublings: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubdiffSection {
    pub m: u32,
    pub norms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeakKamSection {
    pub m: usize,
    pub dt: f64,
    pub tol: f64,
    pub max_iters: usize,
    pub relaxation: f64,
    /// `0` picks the window from a velocity bound.
    pub window: usize,
    pub c_half: f64,
    pub c_n: usize,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoliationSection {
    pub m: usize,
    pub c_half: f64,
    pub c_n: usize,
    pub fibers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportSection {
    pub nodes: usize,
    pub k_max: usize,
    pub restarts: usize,
    pub corner_m: u32,
    pub corner_floor: f64,
    pub noise_factor: f64,
    pub mechanical_tol: f64,
    pub mechanical_res: usize,
    pub support_raster: usize,
    pub gap_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotSection {
    /// Level of the β-ball.
    pub level: f64,
    /// Corner-gap mark threshold.
    pub threshold: f64,
    /// Number of contour levels of the u-surface.
    pub contours: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub spec: SpecDescriptor,
    pub run: RunSection,
    pub beta: BetaSection,
    pub alpha: AlphaSection,
    pub subdiff: SubdiffSection,
    pub weakkam: WeakKamSection,
    pub foliation: FoliationSection,
    pub report: ReportSection,
    pub plot: PlotSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::from_raw(&RawConfig::default()).expect("defaults are valid")
    }
}

impl RunConfig {
    pub fn from_ini_str(text: &str) -> Result<Self, ConfigError> {
        Self::from_raw(&RawConfig::from_ini_str(text)?)
    }

    pub fn from_raw(raw: &RawConfig) -> Result<Self, ConfigError> {
        let spec = {
            let mut params = raw.0.get("spec").cloned().unwrap_or_default();
            let name = params.remove("name").unwrap_or_else(|| "flat".to_string());
            let mut d = SpecDescriptor::new(name);
            d.params = params;
            d.build()?;
            d
        };

        let mut s = Section::new(raw, "run");
        let run = RunSection {
            seed: s.get("seed", 0u64)?,
            workers: s.count("workers", 1)?,
            max_jobs: s.count("max_jobs", 10_000)?,
        };
        s.finish()?;

        let mut s = Section::new(raw, "beta");
        let beta = BetaSection {
            directions: s.count("directions", 1)? as i64,
            radii: s.list("radii", &[0.25, 0.5, 0.75, 1.0])?,
            include_zero: s.get("include_zero", true)?,
            nodes: s.count("nodes", 64)?,
            fixed_nodes: s.get("fixed_nodes", false)?,
            k_max: s.count("k_max", 3)?,
            restarts: s.count("restarts", 8)?,
            max_iters: s.count("max_iters", 4000)?,
            g_tol: s.positive("g_tol", 1e-9)?,
            rest_res: s.count("rest_res", 128)?,
        };
        s.finish()?;

        let mut s = Section::new(raw, "alpha");
        let alpha = AlphaSection {
            c_half: s.positive("c_half", 1.0)?,
            c_n: s.count("c_n", 5)?,
            max_doublings: s.get("max_doublings", 2usize)?,
        };
        s.finish()?;

        let mut s = Section::new(raw, "subdiff");
        let subdiff = SubdiffSection {
            m: s.count("m", 4)? as u32,
            norms: s.list("norms", &[0.5, 1.0])?,
        };
        s.finish()?;

        let mut s = Section::new(raw, "weakkam");
        let weakkam = WeakKamSection {
            m: s.count("m", 64)?,
            dt: s.positive("dt", 0.1)?,
            tol: s.positive("tol", 1e-10)?,
            max_iters: s.count("max_iters", 5000)?,
            relaxation: s.positive("relaxation", 0.5)?,
            window: s.get("window", 0usize)?,
            c_half: s.positive("c_half", 0.5)?,
            c_n: s.count("c_n", 3)?,
            slack: s.positive("slack", 2e-2)?,
        };
        s.finish()?;

        let mut s = Section::new(raw, "foliation");
        let foliation = FoliationSection {
            m: s.count("m", 32)?,
            c_half: s.positive("c_half", 1.0)?,
            c_n: s.count("c_n", 5)?,
            fibers: s.count("fibers", 4)?,
        };
        if foliation.fibers > 4 {
            return Err(s.invalid("fibers", "at most 4 default fibers"));
        }
        s.finish()?;

        let mut s = Section::new(raw, "report");
        let report = ReportSection {
            nodes: s.count("nodes", 48)?,
            k_max: s.count("k_max", 1)?,
            restarts: s.count("restarts", 4)?,
            corner_m: s.count("corner_m", 4)? as u32,
            corner_floor: s.positive("corner_floor", 1e-3)?,
            noise_factor: s.positive("noise_factor", 10.0)?,
            mechanical_tol: s.positive("mechanical_tol", 1e-6)?,
            mechanical_res: s.count("mechanical_res", 32)?,
            support_raster: s.count("support_raster", 64)?,
            gap_tol: s.positive("gap_tol", 1e-3)?,
        };
        s.finish()?;

        let mut s = Section::new(raw, "plot");
        let plot = PlotSection {
            level: s.positive("level", 0.125)?,
            threshold: s.positive("threshold", 1e-3)?,
            contours: s.count("contours", 8)?,
        };
        s.finish()?;

        Ok(RunConfig {
            spec,
            run,
            beta,
            alpha,
            subdiff,
            weakkam,
            foliation,
            report,
            plot,
        })
    }
}
