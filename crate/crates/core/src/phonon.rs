//! Quantum-dot emission with acoustic-phonon sidebands.
//!
//! The emitter spectrum is a zero-phonon line (a narrow Lorentzian standing in
//! for the resolution-limited delta peak) plus the one-phonon line. The
//! one-phonon line is built from a superohmic spectral density
//! `J(ν) = α ν³ exp(−ν²/ν_c²)`: on the low-energy side a phonon is emitted with
//! weight `(n + 1)·J(ν)/ν²`, on the high-energy side one is absorbed with weight
//! `n·J(ν)/ν²`, `n` being the Bose-Einstein occupation at `ν = |ω − ω₀|`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{lorentz, SpectralGrid, Spectrum, K_B};

/// Huang-Rhys factor used when none is configured.
pub const DEFAULT_HUANG_RHYS: f64 = 0.05;

/// Phonon cutoff energy (meV). Chosen so that the effective one-phonon
/// linewidth at 20 K is 1.5 meV.
pub const DEFAULT_CUTOFF: f64 = 0.906;

/// Zero-phonon linewidth (meV), the lower end of a 50–100 µeV spectrometer resolution.
pub const DEFAULT_ZPL_FWHM: f64 = 0.05;

/// Thermal Debye-Waller exponent above which the one-phonon truncation is flagged.
pub const ONE_PHONON_LIMIT: f64 = 0.3;

/// Exciton-phonon coupling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhononModel {
    alpha: f64,
    nu_c: f64,
    zpl_fwhm: f64,
}

impl PhononModel {
    /// `alpha` in meV⁻², `nu_c` and `zpl_fwhm` in meV.
    pub fn new(alpha: f64, nu_c: f64, zpl_fwhm: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::param("alpha", format!("must be positive, got {alpha}")));
        }
        if !(nu_c > 0.0 && nu_c.is_finite()) {
            return Err(Error::param("nu_c", format!("must be positive, got {nu_c}")));
        }
        if !(zpl_fwhm > 0.0 && zpl_fwhm.is_finite()) {
            return Err(Error::param("zpl_fwhm", format!("must be positive, got {zpl_fwhm}")));
        }
        let pm = Self { alpha, nu_c, zpl_fwhm };
        let s = pm.huang_rhys();
        // S·e^-S peaks at S = 1, so the bound is taken on the rising branch
        if s >= 1.0 || s * (-s).exp() >= ONE_PHONON_LIMIT {
            return Err(Error::param(
                "huang_rhys",
                format!("S = {s} puts S·e^-S above {ONE_PHONON_LIMIT}; the one-phonon expansion does not hold"),
            ));
        }
        Ok(pm)
    }

    /// Builds the model from the Huang-Rhys factor, `alpha = 2S/ν_c²`.
    pub fn from_huang_rhys(huang_rhys: f64, nu_c: f64, zpl_fwhm: f64) -> Result<Self> {
        if !(huang_rhys > 0.0) {
            return Err(Error::param("huang_rhys", format!("must be positive, got {huang_rhys}")));
        }
        if !(nu_c > 0.0) {
            return Err(Error::param("nu_c", format!("must be positive, got {nu_c}")));
        }
        Self::new(2.0 * huang_rhys / (nu_c * nu_c), nu_c, zpl_fwhm)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn nu_c(&self) -> f64 {
        self.nu_c
    }

    pub fn zpl_fwhm(&self) -> f64 {
        self.zpl_fwhm
    }

    /// `S = ∫₀^∞ J(ν)/ν² dν = α ν_c² / 2`.
    pub fn huang_rhys(&self) -> f64 {
        0.5 * self.alpha * self.nu_c * self.nu_c
    }

    /// Phonon spectral density `J(ν)`.
    pub fn spectral_density(&self, nu: f64) -> Result<f64> {
        if !(nu >= 0.0) {
            return Err(Error::param("nu", format!("phonon energy must be non-negative, got {nu}")));
        }
        Ok(self.alpha * nu.powi(3) * (-(nu / self.nu_c).powi(2)).exp())
    }

    /// Zero-temperature sideband shape `J(ν)/ν²`.
    #[inline]
    fn sideband_shape(&self, nu: f64) -> f64 {
        self.alpha * nu * (-(nu / self.nu_c).powi(2)).exp()
    }

    /// Phonon energy at which the zero-temperature sideband peaks, `ν_c/√2`.
    pub fn sideband_peak_energy(&self) -> f64 {
        self.nu_c * std::f64::consts::FRAC_1_SQRT_2
    }

    /// `S·(2n̄ + 1)` with `n̄` taken at the sideband peak.
    pub fn thermal_coupling(&self, temperature: f64) -> f64 {
        let n = occupation(self.sideband_peak_energy(), temperature);
        self.huang_rhys() * (2.0 * n + 1.0)
    }

    /// Debye-Waller weight of the zero-phonon line.
    pub fn zpl_weight(&self, temperature: f64) -> f64 {
        (-self.thermal_coupling(temperature)).exp()
    }

    /// False once multi-phonon processes would no longer be negligible.
    pub fn one_phonon_valid(&self, temperature: f64) -> bool {
        self.thermal_coupling(temperature) <= ONE_PHONON_LIMIT
    }

    /// Unnormalised one-phonon density at signed detuning `d = ω − ω₀`.
    #[inline]
    pub fn one_phonon_density(&self, d: f64, temperature: f64) -> f64 {
        if d == 0.0 {
            return 0.0;
        }
        let nu = d.abs();
        let n = occupation(nu, temperature);
        let weight = if d < 0.0 { n + 1.0 } else { n };
        weight * self.sideband_shape(nu)
    }
}

impl Default for PhononModel {
    fn default() -> Self {
        Self::from_huang_rhys(DEFAULT_HUANG_RHYS, DEFAULT_CUTOFF, DEFAULT_ZPL_FWHM).expect("default phonon model is valid")
    }
}

/// Excitonic transition label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LineLabel {
    X,
    CX,
    XX,
}

impl LineLabel {
    pub const ALL: [LineLabel; 3] = [LineLabel::X, LineLabel::CX, LineLabel::XX];

    pub fn as_str(&self) -> &'static str {
        match self {
            LineLabel::X => "X",
            LineLabel::CX => "CX",
            LineLabel::XX => "XX",
        }
    }
}

impl fmt::Display for LineLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LineLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "X" => Ok(LineLabel::X),
            "CX" => Ok(LineLabel::CX),
            "XX" => Ok(LineLabel::XX),
            other => Err(Error::param("label", format!("unknown line `{other}`, expected X, CX or XX"))),
        }
    }
}

/// One excitonic transition with a linear temperature shift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QdLine {
    pub label: LineLabel,
    /// ZPL energy at `t_ref` (meV).
    pub e0_ref: f64,
    /// meV/K, usually negative.
    pub shift_rate: f64,
    pub t_ref: f64,
    /// Occupation probability.
    pub weight: f64,
}

impl QdLine {
    /// A line that does not move with temperature.
    pub fn fixed(label: LineLabel, e0: f64) -> Self {
        Self {
            label,
            e0_ref: e0,
            shift_rate: 0.0,
            t_ref: 0.0,
            weight: 1.0,
        }
    }

    pub fn e0(&self, temperature: f64) -> f64 {
        self.e0_ref + self.shift_rate * (temperature - self.t_ref)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.e0_ref.is_finite() || !self.shift_rate.is_finite() || !self.t_ref.is_finite() {
            return Err(Error::param("line", format!("{}: non-finite parameters", self.label)));
        }
        if !(0.0..=1.0).contains(&self.weight) {
            return Err(Error::param("weight", format!("{}: weight {} outside [0, 1]", self.label, self.weight)));
        }
        Ok(())
    }
}

/// Validates a set of lines: each valid, weights summing to one.
pub fn validate_lines(lines: &[QdLine]) -> Result<()> {
    if lines.is_empty() {
        return Err(Error::param("lines", "at least one line is required"));
    }
    for l in lines {
        l.validate()?;
    }
    let total: f64 = lines.iter().map(|l| l.weight).sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::param("weight", format!("line weights sum to {total}, expected 1")));
    }
    Ok(())
}

fn check_temperature(temperature: f64) -> Result<()> {
    if !(temperature >= 0.0) || !temperature.is_finite() {
        return Err(Error::param("temperature", format!("must be a finite non-negative kelvin value, got {temperature}")));
    }
    Ok(())
}

#[inline]
fn occupation(nu: f64, temperature: f64) -> f64 {
    if temperature == 0.0 {
        0.0
    } else {
        1.0 / (nu / (K_B * temperature)).exp_m1()
    }
}

/// Bose-Einstein occupation of a phonon of energy `nu` (meV) at `temperature` (K).
pub fn bose_occupation(nu: f64, temperature: f64) -> Result<f64> {
    if !(nu > 0.0) {
        return Err(Error::param("nu", format!("phonon energy must be positive, got {nu}")));
    }
    check_temperature(temperature)?;
    Ok(occupation(nu, temperature))
}

/// Unnormalised one-phonon line `Γ_1PL(T, ω)` centred on the ZPL at `e0`.
pub fn one_phonon_line(pm: &PhononModel, e0: f64, temperature: f64, grid: &SpectralGrid) -> Result<Spectrum> {
    check_temperature(temperature)?;
    if !grid.contains(e0) {
        return Err(Error::param("e0", format!("ZPL energy {e0} lies outside the grid")));
    }
    let reach = 5.0 * pm.nu_c();
    if !grid.contains(e0 - reach) || !grid.contains(e0 + reach) {
        log::warn!(
            "grid [{}, {}] does not hold the ±{reach:.2} meV phonon sideband around {e0}",
            grid.e_min(),
            grid.e_max()
        );
    }
    let c = grid.to_offset(e0);
    Ok(Spectrum::from_fn(*grid, |x| pm.one_phonon_density(x - c, temperature)))
}

/// Emitter spectrum split into its zero-phonon and one-phonon parts.
#[derive(Debug, Clone, PartialEq)]
pub struct QdEmission {
    /// ZPL Lorentzian with area `zpl_weight`.
    pub zpl: Spectrum,
    /// Sideband with area `1 − zpl_weight`.
    pub one_phonon: Spectrum,
    pub zpl_weight: f64,
    pub e0: f64,
    /// False when `S·(2n̄+1)` exceeds the one-phonon limit.
    pub one_phonon_valid: bool,
}

impl QdEmission {
    pub fn total(&self) -> Spectrum {
        self.zpl.combine(1.0, &self.one_phonon, 1.0).expect("parts share a grid")
    }
}

/// ZPL and one-phonon parts of `S_QD(ω, T)`, jointly normalised to unit area.
pub fn qd_emission(pm: &PhononModel, line: &QdLine, temperature: f64, grid: &SpectralGrid) -> Result<QdEmission> {
    check_temperature(temperature)?;
    let e0 = line.e0(temperature);
    let sideband = one_phonon_line(pm, e0, temperature, grid)?;
    let zpl = Spectrum::from_fn(*grid, {
        let c = grid.to_offset(e0);
        let w = pm.zpl_fwhm();
        move |x| lorentz(c - x, w)
    })
    .normalized()?;
    let mut zpl_weight = pm.zpl_weight(temperature);
    let sideband_area = sideband.integral();
    let one_phonon = if sideband_area > 0.0 {
        sideband.scaled((1.0 - zpl_weight) / sideband_area)
    } else {
        zpl_weight = 1.0;
        Spectrum::zeros(*grid)
    };
    Ok(QdEmission {
        zpl: zpl.scaled(zpl_weight),
        one_phonon,
        zpl_weight,
        e0,
        one_phonon_valid: pm.one_phonon_valid(temperature),
    })
}

/// `S_QD(ω, T) = Γ_ZPL(ω) + Γ_1PL(T, ω)`, unit area on the grid.
pub fn qd_spectrum(pm: &PhononModel, line: &QdLine, temperature: f64, grid: &SpectralGrid) -> Result<Spectrum> {
    Ok(qd_emission(pm, line, temperature, grid)?.total())
}

/// Full width at half maximum read off a sampled curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Width {
    pub fwhm: f64,
    /// More than one disjoint region lies above half maximum; `fwhm` is the outer width.
    pub multimodal: bool,
}

/// Half-maximum width of uniformly sampled `values` with spacing `step`,
/// using linear interpolation at the outer crossings.
pub fn half_max_width(values: &[f64], step: f64) -> Option<Width> {
    let imax = values.iter().enumerate().fold(0, |b, (i, v)| if *v > values[b] { i } else { b });
    let peak = *values.get(imax)?;
    if !(peak > 0.0) {
        return None;
    }
    let half = 0.5 * peak;
    let first = values.iter().position(|v| *v >= half)?;
    let last = values.iter().rposition(|v| *v >= half)?;
    let segments = values[first..=last]
        .windows(2)
        .filter(|w| w[0] >= half && w[1] < half)
        .count()
        + 1;
    let left = if first == 0 {
        0.0
    } else {
        let (a, b) = (values[first - 1], values[first]);
        (first - 1) as f64 + (half - a) / (b - a)
    };
    let right = if last + 1 == values.len() {
        last as f64
    } else {
        let (a, b) = (values[last], values[last + 1]);
        last as f64 + (a - half) / (a - b)
    };
    Some(Width {
        fwhm: (right - left) * step,
        multimodal: segments > 1,
    })
}

/// FWHM of the one-phonon line alone, read from a dense grid scan.
pub fn effective_1pl_fwhm(pm: &PhononModel, temperature: f64) -> Result<Width> {
    check_temperature(temperature)?;
    let half_width = (8.0 * pm.nu_c()).max(10.0);
    // even point count keeps the ZPL centre between two samples
    let mut n = (2.0 * half_width / 0.0025).ceil() as usize;
    if n % 2 == 1 {
        n += 1;
    }
    let grid = SpectralGrid::centered(0.0, half_width, n)?;
    let line = one_phonon_line(pm, 0.0, temperature, &grid)?;
    half_max_width(line.values(), grid.step())
        .ok_or_else(|| Error::InvalidInput("one-phonon line vanishes on the scan grid".into()))
}


#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn detailed_balance_holds(nu in 0.01f64..4.0, t in 1.0f64..80.0) {
            let pm = PhononModel::default();
            let ratio = pm.one_phonon_density(-nu, t) / pm.one_phonon_density(nu, t);
            let expected = (nu / (K_B * t)).exp();
            prop_assert!((ratio / expected - 1.0).abs() < 1e-9);
        }

        #[test]
        fn qd_spectrum_normalized_for_any_model(
            s in 0.005f64..0.3,
            nu_c in 0.3f64..2.0,
            zpl in 0.02f64..0.2,
            t in 0.0f64..60.0,
        ) {
            let pm = PhononModel::from_huang_rhys(s, nu_c, zpl).unwrap();
            let s = qd_spectrum(&pm, &QdLine::fixed(LineLabel::X, 1350.0), t, &SpectralGrid::default()).unwrap();
            prop_assert!((s.integral() - 1.0).abs() <= 1e-6);
        }
    }
}
