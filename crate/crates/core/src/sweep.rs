//! Detuning and temperature sweeps with multi-Lorentzian extraction of the
//! apparent cavity line.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cavity::{filter, CavityMode};
use crate::error::{Error, Result};
use crate::fitting::{classify_peaks, fit, FitResult, Peak, PeakModel};
use crate::phonon::{effective_1pl_fwhm, qd_emission, validate_lines, LineLabel, PhononModel, QdLine};
use crate::spectral::{gaussian_convolve, SpectralGrid, Spectrum};

/// A fitted mode wider than this multiple of the bare linewidth is treated as
/// a failed assignment.
const MAX_MODE_BROADENING: f64 = 3.0;

/// Fits that stop short of the strict gradient criterion (model mismatch
/// leaves a floating-point floor) are still used below this gradient ratio.
const USABLE_GRADIENT_RATIO: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepMode {
    Detuning,
    Temperature,
}

impl SweepMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepMode::Detuning => "detuning",
            SweepMode::Temperature => "temperature",
        }
    }
}

impl fmt::Display for SweepMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "detuning" => Ok(SweepMode::Detuning),
            "temperature" => Ok(SweepMode::Temperature),
            other => Err(Error::InvalidInput(format!("unknown sweep mode `{other}`"))),
        }
    }
}

/// Evenly spaced control values, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRange {
    pub start: f64,
    pub stop: f64,
    pub n_steps: usize,
}

impl SweepRange {
    pub fn value(&self, i: usize) -> f64 {
        if i + 1 == self.n_steps {
            return self.stop;
        }
        let last = (self.n_steps - 1) as f64;
        (self.start * (last - i as f64) + self.stop * i as f64) / last
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.n_steps).map(|i| self.value(i)).collect()
    }

    pub fn step(&self) -> f64 {
        (self.stop - self.start) / (self.n_steps - 1) as f64
    }
}

/// Additive uniform noise with amplitude `amplitude × peak value`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub amplitude: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub mode: SweepMode,
    pub range: SweepRange,
    /// One sweep is run per cavity.
    pub cavities: Vec<CavityMode>,
    pub lines: Vec<QdLine>,
    pub phonon: PhononModel,
    /// Fixed temperature of a detuning sweep (K).
    pub temperature: f64,
    /// Gaussian instrument response σ (meV), zero to disable.
    pub instrument_sigma: f64,
    /// Linear cavity drift in temperature sweeps (meV/K), relative to the sweep start.
    pub cavity_drift: f64,
    pub grid: SpectralGrid,
    pub noise: Option<NoiseSpec>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        let r = &self.range;
        if r.n_steps < 2 {
            return Err(Error::param("sweep.n_steps", format!("need at least 2 steps, got {}", r.n_steps)));
        }
        if !(r.start.is_finite() && r.stop.is_finite()) || r.start == r.stop {
            return Err(Error::param("sweep.range", "start and stop must be finite and distinct"));
        }
        if self.cavities.is_empty() {
            return Err(Error::param("cavity", "at least one cavity is required"));
        }
        validate_lines(&self.lines)?;
        match self.mode {
            SweepMode::Detuning if self.lines.len() != 1 => {
                return Err(Error::param("lines", "a detuning sweep takes exactly one line"));
            }
            SweepMode::Temperature if self.lines.len() > 3 => {
                return Err(Error::param("lines", "a temperature sweep takes one to three lines"));
            }
            SweepMode::Temperature if r.start.min(r.stop) < 0.0 => {
                return Err(Error::param("sweep.range", "temperatures must be non-negative"));
            }
            _ => {}
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(Error::param("sweep.temperature", "must be finite and non-negative"));
        }
        if !(self.instrument_sigma >= 0.0 && self.instrument_sigma.is_finite()) {
            return Err(Error::param("instrument.sigma", "must be finite and non-negative"));
        }
        if !self.cavity_drift.is_finite() {
            return Err(Error::param("cavity.drift", "must be finite"));
        }
        if let Some(n) = self.noise {
            if !(n.amplitude >= 0.0 && n.amplitude.is_finite()) {
                return Err(Error::param("run.noise", "must be finite and non-negative"));
            }
        }
        Ok(())
    }

    fn normalized_weights(&self) -> Vec<f64> {
        let total: f64 = self.lines.iter().map(|l| l.weight).sum();
        self.lines.iter().map(|l| l.weight / total).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineIntensity {
    pub label: LineLabel,
    pub value: f64,
}

/// Cavity-like peak as fitted, before resolvability screening.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FittedMode {
    pub center: f64,
    pub fwhm: f64,
    pub area: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    /// Detuning `ω_c − ω_QD` (meV) or temperature (K).
    pub control: f64,
    /// Bare cavity energy at this point.
    pub omega_c: f64,
    pub kappa: f64,
    /// Present only for resolvable, unambiguous points.
    pub apparent_mode_energy: Option<f64>,
    pub apparent_mode_fwhm: Option<f64>,
    /// Fraction of emission fed through the sideband into the mode.
    pub mode_intensity: f64,
    /// Weighted ZPL fraction per line.
    pub qd_intensities: Vec<LineIntensity>,
    pub eq1_prediction: Option<f64>,
    /// Detuning is small enough for the weighted-mean predictor.
    pub eq1_valid: bool,
    pub resolvable: bool,
    pub ambiguous: bool,
    pub one_phonon_valid: bool,
    pub fitted_mode: Option<FittedMode>,
    pub fit_converged: bool,
    pub failure: Option<String>,
}

impl SweepPoint {
    pub fn qd_intensity(&self, label: LineLabel) -> Option<f64> {
        self.qd_intensities.iter().find(|l| l.label == label).map(|l| l.value)
    }

    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSeries {
    pub cavity: CavityMode,
    pub points: Vec<SweepPoint>,
}

/// Weighted mean `(κ ω_QD + κ_1PL ω_c)/(κ + κ_1PL)` and whether
/// `|ω_c − ω_QD| ≤ 0.5·min(κ, κ_1PL)`.
pub fn pulled_frequency(omega_qd: f64, omega_c: f64, kappa: f64, kappa_1pl: f64) -> Result<(f64, bool)> {
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::param("kappa", format!("must be positive, got {kappa}")));
    }
    if !(kappa_1pl > 0.0) {
        return Err(Error::param("kappa_1pl", format!("must be positive, got {kappa_1pl}")));
    }
    let value = if kappa_1pl.is_infinite() {
        omega_c
    } else {
        (kappa * omega_qd + kappa_1pl * omega_c) / (kappa + kappa_1pl)
    };
    let valid = (omega_c - omega_qd).abs() <= 0.5 * kappa.min(kappa_1pl);
    Ok((value, valid))
}

/// `ω_c / apparent FWHM`, absent for unresolved points.
pub fn apparent_q(point: &SweepPoint, omega_c: f64) -> Option<f64> {
    point.apparent_mode_fwhm.map(|w| omega_c / w)
}

/// Emission spectrum at one sweep point together with the quantities the
/// fit is seeded and judged against.
#[derive(Debug, Clone)]
pub struct SimulatedPoint {
    pub control: f64,
    pub cavity: CavityMode,
    pub temperature: f64,
    pub spectrum: Spectrum,
    pub zpl_centers: Vec<f64>,
    pub qd_intensities: Vec<LineIntensity>,
    pub mode_intensity: f64,
    pub one_phonon_valid: bool,
}

/// Builds the (filtered, convolved, optionally noisy) spectrum of point
/// `index` of the sweep against cavity `cavity_index`.
pub fn simulate_point(spec: &SweepSpec, cavity_index: usize, index: usize) -> Result<SimulatedPoint> {
    let base = spec.cavities.get(cavity_index).ok_or_else(|| Error::param("cavity", "index out of range"))?;
    let control = spec.range.value(index);
    let (temperature, cavity) = match spec.mode {
        SweepMode::Detuning => {
            let e0 = spec.lines[0].e0(spec.temperature);
            (spec.temperature, base.retuned(e0 + control))
        }
        SweepMode::Temperature => {
            let drift = spec.cavity_drift * (control - spec.range.start);
            (control, base.retuned(base.omega_c() + drift))
        }
    };
    let weights = spec.normalized_weights();
    let mut values = vec![0.0; spec.grid.n_points()];
    let mut zpl_centers = Vec::with_capacity(spec.lines.len());
    let mut qd_intensities = Vec::with_capacity(spec.lines.len());
    let mut mode_intensity = 0.0;
    let mut one_phonon_valid = true;
    for (line, w) in spec.lines.iter().zip(&weights) {
        let em = qd_emission(&spec.phonon, line, temperature, &spec.grid)?;
        let f = filter(&cavity, &em.zpl, &em.one_phonon)?;
        for (v, s) in values.iter_mut().zip(f.spectrum.values()) {
            *v += w * s;
        }
        zpl_centers.push(em.e0);
        qd_intensities.push(LineIntensity {
            label: line.label,
            value: w * f.zpl_fraction,
        });
        mode_intensity += w * f.pl1_fraction;
        one_phonon_valid &= em.one_phonon_valid;
    }
    let mut spectrum = Spectrum::new(spec.grid, values)?;
    if spec.instrument_sigma > 0.0 {
        spectrum = gaussian_convolve(&spectrum, spec.instrument_sigma)?;
    }
    if let Some(noise) = spec.noise.filter(|n| n.amplitude > 0.0) {
        let seed = noise.seed.wrapping_add(index as u64).wrapping_add((cavity_index as u64) << 32);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let amp = noise.amplitude * spectrum.values()[spectrum.argmax()];
        let noisy = spectrum.values().iter().map(|v| v + amp * rng.gen_range(-1.0..=1.0)).collect();
        spectrum = Spectrum::from_measurement(spec.grid, noisy)?;
    }
    Ok(SimulatedPoint {
        control,
        cavity,
        temperature,
        spectrum,
        zpl_centers,
        qd_intensities,
        mode_intensity,
        one_phonon_valid,
    })
}

/// Fits one simulated point and screens the cavity-like peak.
pub fn analyze_point(spec: &SweepSpec, sim: &SimulatedPoint, kappa_1pl: f64) -> SweepPoint {
    let kappa = sim.cavity.kappa();
    let omega_c = sim.cavity.omega_c();
    let nearest_zpl = sim
        .zpl_centers
        .iter()
        .copied()
        .min_by(|a, b| (a - omega_c).abs().total_cmp(&(b - omega_c).abs()))
        .unwrap_or(omega_c);
    let (eq1_prediction, eq1_valid) = match pulled_frequency(nearest_zpl, omega_c, kappa, kappa_1pl) {
        Ok((v, ok)) => (Some(v), ok),
        Err(_) => (None, false),
    };
    let mut point = SweepPoint {
        control: sim.control,
        omega_c,
        kappa,
        apparent_mode_energy: None,
        apparent_mode_fwhm: None,
        mode_intensity: sim.mode_intensity,
        qd_intensities: sim.qd_intensities.clone(),
        eq1_prediction,
        eq1_valid,
        resolvable: false,
        ambiguous: true,
        one_phonon_valid: sim.one_phonon_valid,
        fitted_mode: None,
        fit_converged: false,
        failure: None,
    };

    let result = match fit_point(spec, sim) {
        Ok(r) => r,
        Err(e) => {
            point.failure = Some(e.to_string());
            return point;
        }
    };
    point.fit_converged = result.converged;
    let singular = result.diagnostic.as_deref().is_some_and(|d| d.contains("singular"));
    if singular || !(result.gradient_ratio <= USABLE_GRADIENT_RATIO) {
        point.failure = result.diagnostic.clone();
        return point;
    }
    let class = classify_peaks(&result, &sim.zpl_centers, spec.phonon.zpl_fwhm(), omega_c);
    let Some(mi) = class.mode_index else {
        return point;
    };
    let mode = result.model.peaks[mi];
    point.fitted_mode = Some(FittedMode {
        center: mode.center,
        fwhm: mode.fwhm,
        area: mode.area,
    });
    point.ambiguous = class.ambiguous || mode.fwhm > MAX_MODE_BROADENING * kappa;
    point.resolvable = is_resolvable(&result.model.peaks, mi)
        && !(spec.mode == SweepMode::Detuning && sim.control == 0.0);
    if point.resolvable && !point.ambiguous {
        point.apparent_mode_energy = Some(mode.center);
        point.apparent_mode_fwhm = Some(mode.fwhm);
    }
    point
}

/// The mode is resolved when its distance to every other peak exceeds half
/// the sum of the two half-widths (full widths at half maximum).
pub fn is_resolvable(peaks: &[Peak], mode_index: usize) -> bool {
    let m = peaks[mode_index];
    peaks
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != mode_index)
        .all(|(_, p)| (p.center - m.center).abs() > 0.5 * (p.fwhm + m.fwhm))
}

/// Seeds one ZPL peak per line and one cavity peak from the simulation's own
/// parameters, then fits.
fn fit_point(spec: &SweepSpec, sim: &SimulatedPoint) -> Result<FitResult> {
    let floor = 1e-9;
    let mut peaks: Vec<Peak> = sim
        .zpl_centers
        .iter()
        .zip(&sim.qd_intensities)
        .map(|(&c, q)| Peak {
            center: c,
            fwhm: spec.phonon.zpl_fwhm(),
            area: q.value.max(floor),
        })
        .collect();
    peaks.push(Peak {
        center: sim.cavity.omega_c(),
        fwhm: sim.cavity.kappa(),
        area: sim.mode_intensity.max(floor),
    });
    fit(&sim.spectrum, &PeakModel::new(peaks))
}

/// Runs the sweep for every cavity. Points are evaluated in parallel on the
/// current rayon pool; output order follows the control values.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepSeries>> {
    spec.validate()?;
    let kappa_1pl_fixed = match spec.mode {
        SweepMode::Detuning => Some(effective_1pl_fwhm(&spec.phonon, spec.temperature)?.fwhm),
        SweepMode::Temperature => None,
    };
    spec.cavities
        .iter()
        .enumerate()
        .map(|(ci, cav)| {
            let points = (0..spec.range.n_steps)
                .into_par_iter()
                .map(|i| evaluate(spec, ci, i, kappa_1pl_fixed))
                .collect();
            Ok(SweepSeries { cavity: *cav, points })
        })
        .collect()
}

fn evaluate(spec: &SweepSpec, ci: usize, i: usize, kappa_1pl: Option<f64>) -> SweepPoint {
    let sim = simulate_point(spec, ci, i);
    let k1 = match kappa_1pl {
        Some(k) => Ok(k),
        None => sim
            .as_ref()
            .map_err(|e| Error::InvalidInput(e.to_string()))
            .and_then(|s| effective_1pl_fwhm(&spec.phonon, s.temperature).map(|w| w.fwhm)),
    };
    match (sim, k1) {
        (Ok(sim), Ok(k1)) => analyze_point(spec, &sim, k1),
        (Err(e), _) | (_, Err(e)) => failed_point(spec, ci, i, e),
    }
}

fn failed_point(spec: &SweepSpec, ci: usize, i: usize, e: Error) -> SweepPoint {
    let cav = spec.cavities[ci];
    SweepPoint {
        control: spec.range.value(i),
        omega_c: cav.omega_c(),
        kappa: cav.kappa(),
        apparent_mode_energy: None,
        apparent_mode_fwhm: None,
        mode_intensity: 0.0,
        qd_intensities: Vec::new(),
        eq1_prediction: None,
        eq1_valid: false,
        resolvable: false,
        ambiguous: true,
        one_phonon_valid: false,
        fitted_mode: None,
        fit_converged: false,
        failure: Some(e.to_string()),
    }
}

/// Detuning sweep; `spec.mode` must be [`SweepMode::Detuning`].
pub fn detuning_sweep(spec: &SweepSpec) -> Result<Vec<SweepSeries>> {
    if spec.mode != SweepMode::Detuning {
        return Err(Error::param("sweep.mode", "expected a detuning sweep"));
    }
    run_sweep(spec)
}

/// Temperature sweep; `spec.mode` must be [`SweepMode::Temperature`].
pub fn temperature_sweep(spec: &SweepSpec) -> Result<Vec<SweepSeries>> {
    if spec.mode != SweepMode::Temperature {
        return Err(Error::param("sweep.mode", "expected a temperature sweep"));
    }
    run_sweep(spec)
}

/// Named parameter presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// Detuning sweep, Q = 1000, 40 K.
    Fig3a,
    /// Detuning sweeps at Q = 1000, 3000, 5000, 20 K.
    Fig3bcd,
    /// Temperature sweep of three lines across a Q = 2000 mode.
    Fig2ghi,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::Fig3a, Scenario::Fig3bcd, Scenario::Fig2ghi];

    pub fn as_str(&self) -> &'static str {
        match self {
            Scenario::Fig3a => "fig3a",
            Scenario::Fig3bcd => "fig3bcd",
            Scenario::Fig2ghi => "fig2ghi",
        }
    }

    pub fn spec(&self) -> SweepSpec {
        let cavity = |q: f64| CavityMode::from_q(1350.0, q).expect("valid preset cavity");
        let detuning = |qs: &[f64], temperature: f64| SweepSpec {
            mode: SweepMode::Detuning,
            range: SweepRange { start: -3.0, stop: 3.0, n_steps: 121 },
            cavities: qs.iter().map(|&q| cavity(q)).collect(),
            lines: vec![QdLine::fixed(LineLabel::X, 1350.0)],
            phonon: PhononModel::default(),
            temperature,
            instrument_sigma: 0.0,
            cavity_drift: 0.0,
            grid: SpectralGrid::default(),
            noise: None,
        };
        match self {
            Scenario::Fig3a => detuning(&[1000.0], 40.0),
            Scenario::Fig3bcd => detuning(&[1000.0, 3000.0, 5000.0], 20.0),
            Scenario::Fig2ghi => {
                let line = |label, offset: f64| QdLine {
                    label,
                    e0_ref: 1350.0 + offset,
                    shift_rate: -0.2,
                    t_ref: 10.0,
                    weight: 1.0 / 3.0,
                };
                SweepSpec {
                    mode: SweepMode::Temperature,
                    range: SweepRange { start: 10.0, stop: 50.0, n_steps: 81 },
                    cavities: vec![cavity(2000.0)],
                    lines: vec![line(LineLabel::CX, 1.0), line(LineLabel::X, 4.0), line(LineLabel::XX, 7.0)],
                    phonon: PhononModel::default(),
                    temperature: 20.0,
                    instrument_sigma: 0.0,
                    cavity_drift: 0.0,
                    grid: SpectralGrid::centered(1350.0, 12.0, 9601).expect("valid preset grid"),
                    noise: None,
                }
            }
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown scenario `{s}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn pulled_midpoint_and_limits() {
        let (v, _) = pulled_frequency(1349.0, 1351.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(v, 1350.0, max_relative = 1e-15);
        let (v, _) = pulled_frequency(1349.0, 1351.0, 1.0, f64::INFINITY).unwrap();
        assert_eq!(v, 1351.0);
        let (v, _) = pulled_frequency(1349.0, 1351.0, 1e12, 1.0).unwrap();
        assert!((v - 1349.0).abs() < 1e-9);
    }

    #[test]
    fn pulled_example() {
        let (v, valid) = pulled_frequency(1350.0, 1350.2, 1.35, 1.5).unwrap();
        // pull toward the QD: 0.2·1.35/2.85
        assert_relative_eq!(1350.2 - v, 0.094_736_842_105_263_16, max_relative = 1e-9);
        assert!(valid);
        let (_, valid) = pulled_frequency(1350.0, 1351.0, 1.35, 1.5).unwrap();
        assert!(!valid);
    }

    #[test]
    fn pulled_rejects_bad_widths() {
        assert!(pulled_frequency(1350.0, 1351.0, 0.0, 1.0).is_err());
        assert!(pulled_frequency(1350.0, 1351.0, 1.0, -1.0).is_err());
    }

    fn point_with_fwhm(w: Option<f64>) -> SweepPoint {
        SweepPoint {
            control: 0.5,
            omega_c: 1350.0,
            kappa: 1.35,
            apparent_mode_energy: w.map(|_| 1350.2),
            apparent_mode_fwhm: w,
            mode_intensity: 0.5,
            qd_intensities: vec![],
            eq1_prediction: None,
            eq1_valid: false,
            resolvable: w.is_some(),
            ambiguous: false,
            one_phonon_valid: true,
            fitted_mode: None,
            fit_converged: true,
            failure: None,
        }
    }

    #[test]
    fn apparent_q_definition() {
        assert_relative_eq!(apparent_q(&point_with_fwhm(Some(1.35)), 1350.0).unwrap(), 1000.0, max_relative = 1e-12);
        let full = apparent_q(&point_with_fwhm(Some(1.0)), 1350.0).unwrap();
        let half = apparent_q(&point_with_fwhm(Some(0.5)), 1350.0).unwrap();
        assert_relative_eq!(half, 2.0 * full, max_relative = 1e-12);
        assert_eq!(apparent_q(&point_with_fwhm(None), 1350.0), None);
    }

    #[test]
    fn range_values_hit_endpoints() {
        let r = SweepRange { start: -3.0, stop: 3.0, n_steps: 121 };
        let v = r.values();
        assert_eq!(v[0], -3.0);
        assert_eq!(v[60], 0.0);
        assert_eq!(v[120], 3.0);
    }

    #[test]
    fn validation() {
        let mut s = Scenario::Fig3a.spec();
        assert!(s.validate().is_ok());
        s.range.n_steps = 1;
        assert!(s.validate().is_err());
        let mut s = Scenario::Fig3a.spec();
        s.lines.push(QdLine::fixed(LineLabel::CX, 1351.0));
        assert!(s.validate().is_err());
        let mut s = Scenario::Fig2ghi.spec();
        assert!(s.validate().is_ok());
        s.instrument_sigma = -1.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn scenario_names_round_trip() {
        for sc in Scenario::ALL {
            assert_eq!(sc.as_str().parse::<Scenario>().unwrap(), sc);
        }
        assert!("fig9".parse::<Scenario>().is_err());
    }

    #[test]
    fn zero_detuning_is_unresolvable() {
        let mut spec = Scenario::Fig3bcd.spec();
        spec.cavities.drain(..2);
        spec.range = SweepRange { start: 0.0, stop: 1.0, n_steps: 2 };
        let series = run_sweep(&spec).unwrap();
        let p0 = &series[0].points[0];
        assert!(!p0.resolvable);
        assert_eq!(p0.apparent_mode_energy, None);
        let p1 = &series[0].points[1];
        assert!(p1.resolvable && !p1.ambiguous, "{p1:?}");
        let e = p1.apparent_mode_energy.unwrap();
        assert!(e > 1350.0 && e < 1351.0);
    }

    #[test]
    fn intensities_bounded() {
        let spec = Scenario::Fig2ghi.spec();
        for i in [0, 10, 40, 80] {
            let sim = simulate_point(&spec, 0, i).unwrap();
            let total: f64 = sim.mode_intensity + sim.qd_intensities.iter().map(|l| l.value).sum::<f64>();
            assert!((0.0..=1.0).contains(&sim.mode_intensity));
            assert!(total <= 1.0 + 1e-6, "{total}");
            assert_relative_eq!(sim.spectrum.integral(), 1.0, max_relative = 1e-6);
        }
    }

    #[test]
    fn three_line_spectrum_classified() {
        let spec = Scenario::Fig2ghi.spec();
        // 22 K: lines at 1348.6, 1351.6, 1354.6; mode at 1350
        let i = 24;
        let sim = simulate_point(&spec, 0, i).unwrap();
        let r = fit_point(&spec, &sim).unwrap();
        let c = classify_peaks(&r, &sim.zpl_centers, spec.phonon.zpl_fwhm(), 1350.0);
        let qd = c.labels.iter().filter(|l| matches!(l, crate::fitting::PeakLabel::QdLike(_))).count();
        assert_eq!(qd, 3);
        assert!(!c.ambiguous);
    }

    #[test]
    fn noise_is_seeded() {
        let mut spec = Scenario::Fig3a.spec();
        spec.noise = Some(NoiseSpec { amplitude: 0.01, seed: 7 });
        let a = simulate_point(&spec, 0, 3).unwrap();
        let b = simulate_point(&spec, 0, 3).unwrap();
        assert_eq!(a.spectrum, b.spectrum);
        let c = simulate_point(&spec, 0, 4).unwrap();
        let clean = Scenario::Fig3a.spec();
        let d = simulate_point(&clean, 0, 3).unwrap();
        assert_ne!(a.spectrum, d.spectrum);
        assert_ne!(a.spectrum.values()[0], c.spectrum.values()[0]);
    }
}
