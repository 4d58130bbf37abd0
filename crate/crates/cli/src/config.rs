//! Run configuration: flat `section.key = value` files, presets, validation.

use std::fmt;
use std::path::{Path, PathBuf};

use qdcav_core::sweep::{NoiseSpec, Scenario, SweepMode, SweepRange, SweepSpec};
use qdcav_core::phonon::{DEFAULT_CUTOFF, DEFAULT_HUANG_RHYS, DEFAULT_ZPL_FWHM};
use qdcav_core::{CavityMode, LineLabel, PhononModel, QdLine, SpectralGrid};
use serde::{Deserialize, Serialize};
use toml::Value;

/// Every accepted key, in documentation order.
pub const KEYS: &[&str] = &[
    "grid.reference",
    "grid.half_width",
    "grid.n_points",
    "phonon.huang_rhys",
    "phonon.cutoff",
    "phonon.zpl_fwhm",
    "cavity.energy",
    "cavity.q",
    "cavity.drift",
    "lines.labels",
    "lines.energies",
    "lines.weights",
    "lines.shift_rate",
    "lines.t_ref",
    "sweep.mode",
    "sweep.start",
    "sweep.stop",
    "sweep.n_steps",
    "sweep.temperature",
    "instrument.sigma",
    "output.dir",
    "output.formats",
    "output.emit_spectra",
    "run.seed",
    "run.noise",
    "run.max_failure_fraction",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub reference: f64,
    pub half_width: f64,
    pub n_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhononConfig {
    pub huang_rhys: f64,
    pub cutoff: f64,
    pub zpl_fwhm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavityConfig {
    pub energy: f64,
    pub q: Vec<f64>,
    pub drift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinesConfig {
    pub labels: Vec<LineLabel>,
    pub energies: Vec<f64>,
    pub weights: Vec<f64>,
    pub shift_rate: f64,
    pub t_ref: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub mode: SweepMode,
    pub start: f64,
    pub stop: f64,
    pub n_steps: usize,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstrumentConfig {
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub formats: Vec<Format>,
    pub emit_spectra: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    pub noise: f64,
    pub max_failure_fraction: f64,
}

/// Fully resolved run parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub phonon: PhononConfig,
    pub cavity: CavityConfig,
    pub lines: LinesConfig,
    pub sweep: SweepConfig,
    pub instrument: InstrumentConfig,
    pub output: OutputConfig,
    pub run: RunSection,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issue {
    pub key: String,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "`{}`: {}", self.key, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid configuration:\n{}", list(.0))]
    Invalid(Vec<Issue>),
}

fn list(issues: &[Issue]) -> String {
    issues.iter().map(|i| format!("  {i}")).collect::<Vec<_>>().join("\n")
}

impl ConfigError {
    pub fn issues(&self) -> &[Issue] {
        match self {
            ConfigError::Invalid(v) => v,
            _ => &[],
        }
    }
}

impl RunConfig {
    pub fn from_scenario(scenario: Scenario) -> Self {
        let spec = scenario.spec();
        let first = spec.lines[0];
        let cav = spec.cavities[0];
        let q = match scenario {
            Scenario::Fig3a => vec![1000.0],
            Scenario::Fig3bcd => vec![1000.0, 3000.0, 5000.0],
            Scenario::Fig2ghi => vec![2000.0],
        };
        RunConfig {
            grid: GridConfig {
                reference: spec.grid.reference(),
                half_width: spec.grid.offset(spec.grid.n_points() - 1),
                n_points: spec.grid.n_points(),
            },
            phonon: PhononConfig {
                huang_rhys: DEFAULT_HUANG_RHYS,
                cutoff: DEFAULT_CUTOFF,
                zpl_fwhm: DEFAULT_ZPL_FWHM,
            },
            cavity: CavityConfig {
                energy: cav.omega_c(),
                q,
                drift: spec.cavity_drift,
            },
            lines: LinesConfig {
                labels: spec.lines.iter().map(|l| l.label).collect(),
                energies: spec.lines.iter().map(|l| l.e0_ref).collect(),
                weights: spec.lines.iter().map(|l| l.weight).collect(),
                shift_rate: first.shift_rate,
                t_ref: first.t_ref,
            },
            sweep: SweepConfig {
                mode: spec.mode,
                start: spec.range.start,
                stop: spec.range.stop,
                n_steps: spec.range.n_steps,
                temperature: spec.temperature,
            },
            instrument: InstrumentConfig {
                sigma: spec.instrument_sigma,
            },
            output: OutputConfig {
                dir: PathBuf::from("out"),
                formats: vec![Format::Csv],
                emit_spectra: false,
            },
            run: RunSection {
                seed: 0,
                noise: 0.0,
                max_failure_fraction: 0.2,
            },
        }
    }

    /// Builds the sweep specification. All problems are reported together.
    pub fn sweep_spec(&self) -> Result<SweepSpec, ConfigError> {
        let mut issues = Vec::new();
        let mut bad = |key: &str, message: String| {
            issues.push(Issue {
                key: key.to_string(),
                message,
            })
        };
        let positive = |v: f64| v > 0.0 && v.is_finite();

        let g = &self.grid;
        let grid = if !positive(g.half_width) {
            bad("grid.half_width", format!("must be positive, got {}", g.half_width));
            None
        } else if g.n_points < 3 {
            bad("grid.n_points", format!("need at least 3 points, got {}", g.n_points));
            None
        } else {
            SpectralGrid::centered(g.reference, g.half_width, g.n_points)
                .map_err(|e| bad("grid.reference", e.to_string()))
                .ok()
        };

        let p = &self.phonon;
        let mut phonon_ok = true;
        for (key, v) in [("phonon.huang_rhys", p.huang_rhys), ("phonon.cutoff", p.cutoff), ("phonon.zpl_fwhm", p.zpl_fwhm)] {
            if !positive(v) {
                bad(key, format!("must be positive, got {v}"));
                phonon_ok = false;
            }
        }
        let phonon = if phonon_ok {
            PhononModel::from_huang_rhys(p.huang_rhys, p.cutoff, p.zpl_fwhm)
                .map_err(|e| bad("phonon.huang_rhys", e.to_string()))
                .ok()
        } else {
            None
        };

        let c = &self.cavity;
        if !positive(c.energy) {
            bad("cavity.energy", format!("must be positive, got {}", c.energy));
        }
        if c.q.is_empty() {
            bad("cavity.q", "at least one quality factor is required".into());
        }
        for q in &c.q {
            if !positive(*q) {
                bad("cavity.q", format!("quality factors must be positive, got {q}"));
            }
        }
        if !c.drift.is_finite() {
            bad("cavity.drift", "must be finite".into());
        }

        let l = &self.lines;
        let n = l.labels.len();
        if n == 0 {
            bad("lines.labels", "at least one line is required".into());
        }
        for (i, a) in l.labels.iter().enumerate() {
            if l.labels[..i].contains(a) {
                bad("lines.labels", format!("label {a} is repeated"));
            }
        }
        if l.energies.len() != n {
            bad("lines.energies", format!("expected {n} values to match lines.labels, got {}", l.energies.len()));
        }
        if l.weights.len() != n {
            bad("lines.weights", format!("expected {n} values to match lines.labels, got {}", l.weights.len()));
        } else if l.weights.iter().any(|w| !(*w > 0.0)) {
            bad("lines.weights", "weights must be positive".into());
        } else if (l.weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            bad("lines.weights", format!("weights must sum to 1, got {}", l.weights.iter().sum::<f64>()));
        }
        if !l.shift_rate.is_finite() {
            bad("lines.shift_rate", "must be finite".into());
        }
        if !(l.t_ref >= 0.0 && l.t_ref.is_finite()) {
            bad("lines.t_ref", format!("must be a non-negative temperature, got {}", l.t_ref));
        }

        let s = &self.sweep;
        match s.mode {
            SweepMode::Detuning if n > 1 => bad("lines.labels", "a detuning sweep takes exactly one line".into()),
            SweepMode::Temperature if n > 3 => bad("lines.labels", "a temperature sweep takes at most three lines".into()),
            _ => {}
        }
        if !s.start.is_finite() {
            bad("sweep.start", "must be finite".into());
        }
        if !s.stop.is_finite() || s.stop == s.start {
            bad("sweep.stop", "must be finite and differ from sweep.start".into());
        }
        if s.mode == SweepMode::Temperature && s.start.min(s.stop) < 0.0 {
            bad("sweep.start", "temperatures must be non-negative".into());
        }
        if s.n_steps < 2 {
            bad("sweep.n_steps", format!("need at least 2 steps, got {}", s.n_steps));
        }
        if !(s.temperature >= 0.0 && s.temperature.is_finite()) {
            bad("sweep.temperature", format!("must be a non-negative temperature, got {}", s.temperature));
        }
        if !(self.instrument.sigma >= 0.0 && self.instrument.sigma.is_finite()) {
            bad("instrument.sigma", format!("must be non-negative, got {}", self.instrument.sigma));
        }
        if self.output.formats.is_empty() {
            bad("output.formats", "at least one format is required".into());
        }
        if !(self.run.noise >= 0.0 && self.run.noise.is_finite()) {
            bad("run.noise", format!("must be non-negative, got {}", self.run.noise));
        }
        if !(0.0..=1.0).contains(&self.run.max_failure_fraction) {
            bad("run.max_failure_fraction", format!("must lie in [0, 1], got {}", self.run.max_failure_fraction));
        }

        if let Some(grid) = grid {
            for (label, e) in l.labels.iter().zip(&l.energies) {
                if !grid.contains(*e) {
                    bad("lines.energies", format!("{label} line at {e} meV lies outside the grid"));
                }
            }
            if positive(c.energy) && !grid.contains(c.energy) {
                bad("cavity.energy", format!("{} meV lies outside the grid", c.energy));
            }
        }

        if !issues.is_empty() {
            return Err(ConfigError::Invalid(issues));
        }
        let lines = l
            .labels
            .iter()
            .zip(&l.energies)
            .zip(&l.weights)
            .map(|((&label, &e0_ref), &weight)| QdLine {
                label,
                e0_ref,
                shift_rate: l.shift_rate,
                t_ref: l.t_ref,
                weight,
            })
            .collect();
        let spec = SweepSpec {
            mode: s.mode,
            range: SweepRange {
                start: s.start,
                stop: s.stop,
                n_steps: s.n_steps,
            },
            cavities: c.q.iter().map(|&q| CavityMode::from_q(c.energy, q).expect("validated cavity")).collect(),
            lines,
            phonon: phonon.expect("validated phonon model"),
            temperature: s.temperature,
            instrument_sigma: self.instrument.sigma,
            cavity_drift: c.drift,
            grid: grid.expect("validated grid"),
            noise: (self.run.noise > 0.0).then_some(NoiseSpec {
                amplitude: self.run.noise,
                seed: self.run.seed,
            }),
        };
        spec.validate().map_err(|e| {
            ConfigError::Invalid(vec![Issue {
                key: "sweep".into(),
                message: e.to_string(),
            }])
        })?;
        Ok(spec)
    }
}

/// Loads a configuration file on top of `scenario`'s defaults. Files ending
/// in `.json` are read as a resolved configuration (the config echo).
pub fn load_config(path: impl AsRef<Path>, scenario: Scenario) -> Result<RunConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    if path.extension().is_some_and(|e| e == "json") {
        let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| ConfigError::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        cfg.sweep_spec()?;
        return Ok(cfg);
    }
    parse_config(&text, scenario)
}

/// Parses flat `section.key = value` text on top of `scenario`'s defaults.
/// Setting `sweep.mode` to the other sweep kind switches the defaults to
/// that kind's preset.
pub fn parse_config(text: &str, scenario: Scenario) -> Result<RunConfig, ConfigError> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse {
        line: e.span().map_or(0, |s| text[..s.start].lines().count().max(1)),
        message: e.message().to_string(),
    })?;

    let mut issues = Vec::new();
    let mut entries: Vec<(String, &Value)> = Vec::new();
    for (section, value) in &table {
        match value {
            Value::Table(inner) => {
                for (key, v) in inner {
                    let full = format!("{section}.{key}");
                    if KEYS.contains(&full.as_str()) {
                        entries.push((full, v));
                    } else {
                        issues.push(Issue {
                            key: full,
                            message: "unknown key".into(),
                        });
                    }
                }
            }
            _ => issues.push(Issue {
                key: section.clone(),
                message: "unknown key; expected `section.key = value`".into(),
            }),
        }
    }

    let mode = entries.iter().find(|(k, _)| k == "sweep.mode").map(|(_, v)| v.as_str().map(str::parse::<SweepMode>));
    let base = match mode {
        Some(Some(Ok(m))) if m != scenario.spec().mode => match m {
            SweepMode::Detuning => Scenario::Fig3a,
            SweepMode::Temperature => Scenario::Fig2ghi,
        },
        _ => scenario,
    };
    let mut cfg = RunConfig::from_scenario(base);
    for (key, v) in entries {
        if let Err(message) = assign(&mut cfg, &key, v) {
            issues.push(Issue { key, message });
        }
    }
    if !issues.is_empty() {
        if let Err(ConfigError::Invalid(more)) = cfg.sweep_spec() {
            let fresh: Vec<Issue> = more.into_iter().filter(|m| !issues.iter().any(|i| i.key == m.key)).collect();
            issues.extend(fresh);
        }
        return Err(ConfigError::Invalid(issues));
    }
    cfg.sweep_spec()?;
    Ok(cfg)
}

fn number(v: &Value) -> Result<f64, String> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        other => Err(format!("expected a number, got {}", other.type_str())),
    }
}

fn count(v: &Value) -> Result<usize, String> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as usize),
        other => Err(format!("expected a non-negative integer, got {other}")),
    }
}

fn numbers(v: &Value) -> Result<Vec<f64>, String> {
    match v {
        Value::Array(a) => a.iter().map(number).collect(),
        other => number(other).map(|x| vec![x]),
    }
}

fn strings(v: &Value) -> Result<Vec<String>, String> {
    let one = |v: &Value| v.as_str().map(str::to_string).ok_or_else(|| format!("expected a string, got {}", v.type_str()));
    match v {
        Value::Array(a) => a.iter().map(one).collect(),
        other => one(other).map(|s| vec![s]),
    }
}

fn assign(cfg: &mut RunConfig, key: &str, v: &Value) -> Result<(), String> {
    match key {
        "grid.reference" => cfg.grid.reference = number(v)?,
        "grid.half_width" => cfg.grid.half_width = number(v)?,
        "grid.n_points" => cfg.grid.n_points = count(v)?,
        "phonon.huang_rhys" => cfg.phonon.huang_rhys = number(v)?,
        "phonon.cutoff" => cfg.phonon.cutoff = number(v)?,
        "phonon.zpl_fwhm" => cfg.phonon.zpl_fwhm = number(v)?,
        "cavity.energy" => cfg.cavity.energy = number(v)?,
        "cavity.q" => cfg.cavity.q = numbers(v)?,
        "cavity.drift" => cfg.cavity.drift = number(v)?,
        "lines.labels" => {
            cfg.lines.labels = strings(v)?
                .iter()
                .map(|s| s.parse::<LineLabel>().map_err(|e| e.to_string()))
                .collect::<Result<_, _>>()?
        }
        "lines.energies" => cfg.lines.energies = numbers(v)?,
        "lines.weights" => cfg.lines.weights = numbers(v)?,
        "lines.shift_rate" => cfg.lines.shift_rate = number(v)?,
        "lines.t_ref" => cfg.lines.t_ref = number(v)?,
        "sweep.mode" => {
            cfg.sweep.mode = v
                .as_str()
                .ok_or("expected \"detuning\" or \"temperature\"")?
                .parse()
                .map_err(|e: qdcav_core::Error| e.to_string())?
        }
        "sweep.start" => cfg.sweep.start = number(v)?,
        "sweep.stop" => cfg.sweep.stop = number(v)?,
        "sweep.n_steps" => cfg.sweep.n_steps = count(v)?,
        "sweep.temperature" => cfg.sweep.temperature = number(v)?,
        "instrument.sigma" => cfg.instrument.sigma = number(v)?,
        "output.dir" => cfg.output.dir = PathBuf::from(v.as_str().ok_or("expected a path string")?),
        "output.formats" => {
            cfg.output.formats = strings(v)?
                .iter()
                .map(|s| match s.as_str() {
                    "csv" => Ok(Format::Csv),
                    "json" => Ok(Format::Json),
                    other => Err(format!("unknown format `{other}`, expected csv or json")),
                })
                .collect::<Result<_, _>>()?
        }
        "output.emit_spectra" => cfg.output.emit_spectra = v.as_bool().ok_or("expected true or false")?,
        "run.seed" => cfg.run.seed = count(v)? as u64,
        "run.noise" => cfg.run.noise = number(v)?,
        "run.max_failure_fraction" => cfg.run.max_failure_fraction = number(v)?,
        _ => unreachable!("key list and assignments out of sync: {key}"),
    }
    Ok(())
}
