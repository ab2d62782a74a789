//! Experiment configuration: flat `key = value` lines grouped under
//! `[section]` headers. `#` and `;` start comments.
//!
//! ```text
//! [data]
//! model = model.mdl
//! dataset = synthetic:classes=3,per_class=34,side=16,seed=11
//!
//! [run]
//! methods = path, random
//! strategies = pgd, mim, attexplore
//! output = out
//!
//! [attack]
//! eps = 16
//! dp = 0.5
//!
//! [sweep]
//! axis = seed
//! values = 0, 1, 2
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::dataset::DatasetSource;
use crate::error::{Error, Result};
use crate::evaluation::BaselineMode;
use crate::model::Objective;
use crate::strategies::{AttackConfig, StrategyId};

/// Attribution method evaluated per sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    /// Attack-path integration, once per configured strategy.
    Path,
    Ig,
    Saliency,
    Random,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Path, Method::Ig, Method::Saliency, Method::Random];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Path => "path",
            Method::Ig => "ig",
            Method::Saliency => "saliency",
            Method::Random => "random",
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "path" | "attack-path" => Ok(Method::Path),
            "ig" => Ok(Method::Ig),
            "saliency" | "sm" => Ok(Method::Saliency),
            "random" => Ok(Method::Random),
            other => Err(Error::UnknownMethod(other.to_string())),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The single attack parameter varied across a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SweepAxis {
    #[default]
    None,
    Seed,
    Dp,
    Epsilon,
    Beta,
    Rho,
}

impl SweepAxis {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepAxis::None => "none",
            SweepAxis::Seed => "seed",
            SweepAxis::Dp => "dp",
            SweepAxis::Epsilon => "epsilon",
            SweepAxis::Beta => "beta",
            SweepAxis::Rho => "rho",
        }
    }

    /// Returns `base` with this axis set to `value`.
    pub fn apply(&self, base: &AttackConfig, value: f64) -> Result<AttackConfig> {
        let mut cfg = base.clone();
        match self {
            SweepAxis::None => {}
            SweepAxis::Seed => {
                if value < 0.0 || value.fract() != 0.0 {
                    return Err(Error::invalid(format!("seed sweep value {value} is not an integer")));
                }
                cfg.seed = value as u64;
            }
            SweepAxis::Dp => cfg.dp = value as f32,
            SweepAxis::Epsilon => cfg.eps = value as f32,
            SweepAxis::Beta => cfg.beta = value as f32,
            SweepAxis::Rho => cfg.rho = value as f32,
        }
        Ok(cfg)
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" | "" => Ok(SweepAxis::None),
            "seed" => Ok(SweepAxis::Seed),
            "dp" => Ok(SweepAxis::Dp),
            "epsilon" | "eps" => Ok(SweepAxis::Epsilon),
            "beta" => Ok(SweepAxis::Beta),
            "rho" => Ok(SweepAxis::Rho),
            other => Err(Error::invalid(format!("unknown sweep axis `{other}`"))),
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which class the attribution explains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TargetLabel {
    /// The model's argmax on the clean input.
    #[default]
    Predicted,
    /// The dataset label.
    Dataset,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: PathBuf,
    pub dataset: DatasetSource,
    /// Evaluate only the first `limit` samples (all when `None`).
    pub limit: Option<usize>,
    pub methods: Vec<Method>,
    pub strategies: Vec<StrategyId>,
    pub attack: AttackConfig,
    pub sweep_axis: SweepAxis,
    pub sweep_values: Vec<f64>,
    pub output: PathBuf,
    pub eval_steps: usize,
    pub baseline: BaselineMode,
    pub target: TargetLabel,
    pub ig_objective: Objective,
    /// Write a PGM heatmap per (sample, method, strategy).
    pub heatmaps: bool,
    /// Write the insertion/deletion curves per row as CSV.
    pub curves: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: PathBuf::from("model.mdl"),
            dataset: DatasetSource::Synthetic(Default::default()),
            limit: None,
            methods: vec![Method::Path],
            strategies: vec![StrategyId::AttExplore],
            attack: AttackConfig::default(),
            sweep_axis: SweepAxis::None,
            sweep_values: Vec::new(),
            output: PathBuf::from("results"),
            eval_steps: 50,
            baseline: BaselineMode::Zero,
            target: TargetLabel::Predicted,
            ig_objective: Objective::Loss,
            heatmaps: false,
            curves: false,
        }
    }
}

fn list<T: FromStr<Err = Error>>(v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(T::from_str)
        .collect()
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::invalid(format!("`{key}` expects a number, got `{v}`")))
}

fn flag(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::invalid(format!("`{key}` expects true/false, got `{v}`"))),
    }
}

impl ExperimentConfig {
    /// Parses config text. Relative paths are resolved against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut section = String::from("run");
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split(['#', ';']).next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = |e: Error| Error::Parse {
                line: i + 1,
                message: match e {
                    Error::InvalidArgument(m) => m,
                    other => other.to_string(),
                },
            };
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| at(Error::invalid(format!("bad section header `{line}`"))))?;
                section = name.trim().to_ascii_lowercase();
                if !["data", "run", "attack", "sweep"].contains(&section.as_str()) {
                    return Err(at(Error::invalid(format!("unknown section `[{section}]`"))));
                }
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| at(Error::invalid(format!("expected `key = value`, got `{line}`"))))?;
            cfg.set(&section, key.trim(), value.trim(), base_dir).map_err(at)?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).map_err(|e| match e {
            Error::Parse { line, message } => Error::format(path, format!("line {line}: {message}")),
            other => other,
        })
    }

    fn set(&mut self, section: &str, key: &str, v: &str, base: &Path) -> Result<()> {
        let resolve = |p: &str| {
            let p = PathBuf::from(p);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        let a = &mut self.attack;
        match (section, key) {
            ("data", "model") => self.model = resolve(v),
            ("data", "dataset") => {
                self.dataset = match v.parse()? {
                    DatasetSource::Dir(p) => DatasetSource::Dir(resolve(&p.to_string_lossy())),
                    s => s,
                }
            }
            ("data", "limit") => {
                let n: usize = num(key, v)?;
                self.limit = (n > 0).then_some(n);
            }
            ("run", "methods" | "method") => self.methods = list(v)?,
            ("run", "strategies" | "strategy") => {
                self.strategies = if v == "all" { StrategyId::ALL.to_vec() } else { list(v)? }
            }
            ("run", "output") => self.output = resolve(v),
            ("run", "eval_steps") => self.eval_steps = num(key, v)?,
            ("run", "baseline") => self.baseline = v.parse()?,
            ("run", "target") => {
                self.target = match v {
                    "predicted" => TargetLabel::Predicted,
                    "label" | "dataset" => TargetLabel::Dataset,
                    _ => return Err(Error::invalid(format!("unknown target `{v}`"))),
                }
            }
            ("run", "ig_objective") => {
                self.ig_objective = match v {
                    "loss" => Objective::Loss,
                    "logit" => Objective::Logit,
                    _ => return Err(Error::invalid(format!("unknown objective `{v}`"))),
                }
            }
            ("run", "heatmaps") => self.heatmaps = flag(key, v)?,
            ("run", "curves") => self.curves = flag(key, v)?,
            ("attack", "eps" | "epsilon") => a.eps = num(key, v)?,
            ("attack", "steps") => a.steps = num(key, v)?,
            ("attack", "alpha") => a.alpha = if v == "auto" { None } else { Some(num(key, v)?) },
            ("attack", "mu") => a.mu = num(key, v)?,
            ("attack", "ensemble") => a.ensemble = num(key, v)?,
            ("attack", "scales") => a.scales = num(key, v)?,
            ("attack", "freq_samples") => a.freq_samples = num(key, v)?,
            ("attack", "ig_steps") => a.ig_steps = num(key, v)?,
            ("attack", "dp") => a.dp = num(key, v)?,
            ("attack", "rho") => a.rho = num(key, v)?,
            ("attack", "sigma") => a.sigma = num(key, v)?,
            ("attack", "beta") => a.beta = num(key, v)?,
            ("attack", "low_frac") => a.low_frac = num(key, v)?,
            ("attack", "tim_kernel") => a.tim_kernel = num(key, v)?,
            ("attack", "tim_std") => a.tim_std = num(key, v)?,
            ("attack", "sia_splits") => a.sia_splits = num(key, v)?,
            ("attack", "gradient_noise") => a.gradient_noise = num(key, v)?,
            ("attack", "seed") => a.seed = num(key, v)?,
            ("sweep", "axis") => self.sweep_axis = v.parse()?,
            ("sweep", "values") => {
                self.sweep_values = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| num(key, s))
                    .collect::<Result<_>>()?
            }
            _ => return Err(Error::invalid(format!("unknown key `{key}` in [{section}]"))),
        }
        Ok(())
    }

    /// `(axis value label, attack config)` for every point of the sweep; a
    /// single unlabelled point when no axis is set.
    pub fn sweep_points(&self) -> Result<Vec<(String, AttackConfig)>> {
        if self.sweep_axis == SweepAxis::None {
            return Ok(vec![(String::new(), self.attack.clone())]);
        }
        self.sweep_values
            .iter()
            .map(|&v| Ok((format!("{v}"), self.sweep_axis.apply(&self.attack, v)?)))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::invalid("no methods configured"));
        }
        if self.methods.contains(&Method::Path) && self.strategies.is_empty() {
            return Err(Error::invalid("method `path` needs at least one strategy"));
        }
        if self.eval_steps == 0 {
            return Err(Error::invalid("eval_steps must be >= 1"));
        }
        if self.sweep_axis != SweepAxis::None && self.sweep_values.is_empty() {
            return Err(Error::invalid(format!("sweep axis `{}` has no values", self.sweep_axis)));
        }
        for (_, attack) in self.sweep_points()? {
            attack.validate()?;
        }
        if !self.model.is_file() {
            return Err(Error::format(&self.model, "model file not found"));
        }
        if let DatasetSource::Dir(d) = &self.dataset {
            if !d.is_dir() {
                return Err(Error::format(d, "dataset directory not found"));
            }
        }
        Ok(())
    }
}
