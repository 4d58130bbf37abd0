//! Sweep orchestration and output files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use qdcav_core::sweep::{apparent_q, run_sweep, simulate_point, SweepPoint, SweepSeries, SweepSpec};
use qdcav_core::LineLabel;
use serde::Serialize;

use crate::config::{ConfigError, Format, RunConfig};

pub const CSV_HEADER: &str = "control_value,apparent_mode_energy_mev,apparent_mode_fwhm_mev,mode_intensity,qd_intensity_X,qd_intensity_CX,qd_intensity_XX,eq1_prediction_mev,q_apparent,resolvable_flag,ambiguity_flag";

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Sweep(#[from] qdcav_core::Error),

    #[error("{failures} of {total} sweep points failed, above the allowed fraction {limit}")]
    TooManyFailures { failures: usize, total: usize, limit: f64 },

    #[error("cannot start worker pool: {0}")]
    ThreadPool(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub points: usize,
    pub failures: usize,
    pub files: Vec<PathBuf>,
}

#[derive(Serialize)]
struct SeriesOut<'a> {
    q: f64,
    omega_c: f64,
    kappa: f64,
    points: &'a [SweepPoint],
}

/// Runs the configured sweep and writes its outputs into `cfg.output.dir`.
/// `threads` sizes the worker pool; `None` uses the available parallelism.
pub fn run(cfg: &RunConfig, threads: Option<usize>) -> Result<RunSummary, RunError> {
    let spec = cfg.sweep_spec()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| RunError::ThreadPool(e.to_string()))?;
    log::info!("running {} sweep with {} points per cavity on {} threads", spec.mode, spec.range.n_steps, pool.current_num_threads());
    let series = pool.install(|| run_sweep(&spec))?;

    let dir = &cfg.output.dir;
    create_dir(dir)?;
    let mut files = Vec::new();
    let mut emit = |name: String, contents: &str| -> Result<(), RunError> {
        let path = dir.join(name);
        write_file(&path, contents)?;
        files.push(path);
        Ok(())
    };

    if cfg.output.formats.contains(&Format::Csv) {
        emit("sweep.csv".into(), &sweep_csv(&series))?;
        if series.len() > 1 {
            for (s, q) in series.iter().zip(&cfg.cavity.q) {
                emit(format!("sweep_q{q}.csv"), &sweep_csv(std::slice::from_ref(s)))?;
            }
        }
    }
    if cfg.output.formats.contains(&Format::Json) {
        let out: Vec<SeriesOut> = series
            .iter()
            .zip(&cfg.cavity.q)
            .map(|(s, &q)| SeriesOut {
                q,
                omega_c: s.cavity.omega_c(),
                kappa: s.cavity.kappa(),
                points: &s.points,
            })
            .collect();
        emit("sweep.json".into(), &(serde_json::to_string_pretty(&out).expect("serialisable sweep") + "\n"))?;
    }
    emit("config-echo.json".into(), &config_echo(cfg))?;
    if cfg.output.emit_spectra {
        files.extend(write_spectra(&spec, cfg, &dir.join("spectra"))?);
    }

    let points: usize = series.iter().map(|s| s.points.len()).sum();
    let failures: usize = series.iter().flat_map(|s| &s.points).filter(|p| p.failed()).count();
    for p in series.iter().flat_map(|s| &s.points).filter(|p| p.failed()) {
        log::warn!("point {}: {}", p.control, p.failure.as_deref().unwrap_or("failed"));
    }
    if failures as f64 > cfg.run.max_failure_fraction * points as f64 {
        return Err(RunError::TooManyFailures {
            failures,
            total: points,
            limit: cfg.run.max_failure_fraction,
        });
    }
    Ok(RunSummary { points, failures, files })
}

pub fn config_echo(cfg: &RunConfig) -> String {
    serde_json::to_string_pretty(cfg).expect("serialisable config") + "\n"
}

/// One CSV table; multiple series are stacked in order.
pub fn sweep_csv(series: &[SweepSeries]) -> String {
    let mut out = String::with_capacity(128 * series.iter().map(|s| s.points.len() + 1).sum::<usize>());
    out.push_str(CSV_HEADER);
    out.push('\n');
    for p in series.iter().flat_map(|s| &s.points) {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let flag = |b: bool| if b { "1" } else { "0" };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            p.control,
            opt(p.apparent_mode_energy),
            opt(p.apparent_mode_fwhm),
            opt((!p.qd_intensities.is_empty()).then_some(p.mode_intensity)),
            opt(p.qd_intensity(LineLabel::X)),
            opt(p.qd_intensity(LineLabel::CX)),
            opt(p.qd_intensity(LineLabel::XX)),
            opt(p.eq1_prediction),
            opt(apparent_q(p, p.omega_c)),
            flag(p.resolvable),
            flag(p.ambiguous),
        );
    }
    out
}

fn write_spectra(spec: &SweepSpec, cfg: &RunConfig, dir: &Path) -> Result<Vec<PathBuf>, RunError> {
    create_dir(dir)?;
    let mut files = Vec::new();
    for (ci, q) in cfg.cavity.q.iter().enumerate() {
        let prefix = if cfg.cavity.q.len() > 1 { format!("q{q}_") } else { String::new() };
        for i in 0..spec.range.n_steps {
            let sim = simulate_point(spec, ci, i)?;
            let grid = sim.spectrum.grid();
            let mut text = String::with_capacity(32 * grid.n_points());
            text.push_str("energy_meV,density\n");
            for (e, v) in grid.energies().zip(sim.spectrum.values()) {
                let _ = writeln!(text, "{e},{v}");
            }
            let path = dir.join(format!("{prefix}point_{i:04}.csv"));
            write_file(&path, &text)?;
            files.push(path);
        }
    }
    Ok(files)
}

fn create_dir(dir: &Path) -> Result<(), RunError> {
    fs::create_dir_all(dir).map_err(|source| RunError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn write_file(path: &Path, contents: &str) -> Result<(), RunError> {
    fs::write(path, contents).map_err(|source| RunError::Io {
        path: path.to_path_buf(),
        source,
    })
}
