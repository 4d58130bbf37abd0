//! Weak-coupling cavity filter.
//!
//! The emitter decays into a continuum of cavity-shaped electromagnetic modes,
//! so the spectrum collected through the cavity is the emitter spectrum times
//! the cavity Lorentzian, renormalised by their overlap `Γ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{lorentz, trapezoid, SpectralGrid, Spectrum};

/// Overlaps below this are treated as zero.
pub const MIN_OVERLAP: f64 = 1e-300;

/// Bare cavity mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavityMode {
    omega_c: f64,
    kappa: f64,
}

impl CavityMode {
    /// Mode at `omega_c` (meV) with linewidth `kappa` (meV).
    pub fn from_kappa(omega_c: f64, kappa: f64) -> Result<Self> {
        if !(omega_c > 0.0 && omega_c.is_finite()) {
            return Err(Error::param("omega_c", format!("must be a positive energy, got {omega_c}")));
        }
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::param("kappa", format!("must be positive, got {kappa}")));
        }
        Ok(Self { omega_c, kappa })
    }

    /// Mode at `omega_c` with quality factor `q = omega_c / kappa`.
    pub fn from_q(omega_c: f64, q: f64) -> Result<Self> {
        if !(q > 0.0 && q.is_finite()) {
            return Err(Error::param("q", format!("must be positive, got {q}")));
        }
        Self::from_kappa(omega_c, omega_c / q)
    }

    pub fn omega_c(&self) -> f64 {
        self.omega_c
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn q_factor(&self) -> f64 {
        self.omega_c / self.kappa
    }

    /// Same linewidth, moved to `omega_c`.
    pub fn retuned(&self, omega_c: f64) -> Self {
        Self { omega_c, kappa: self.kappa }
    }

    /// Analytic `S_cav(ω) = (κ/2π) / ((κ/2)² + (ω_c − ω)²)`.
    pub fn density(&self, omega: f64) -> f64 {
        lorentz(self.omega_c - omega, self.kappa)
    }
}

/// Cavity Lorentzian sampled on `grid`, scaled to unit area on the grid.
pub fn cavity_spectrum(cav: &CavityMode, grid: &SpectralGrid) -> Result<Spectrum> {
    if !grid.contains(cav.omega_c) {
        return Err(Error::param("omega_c", format!("cavity energy {} lies outside the grid", cav.omega_c)));
    }
    let c = grid.to_offset(cav.omega_c);
    let k = cav.kappa;
    Spectrum::from_fn(*grid, |x| lorentz(c - x, k)).normalized()
}

/// Spectrum collected through the cavity.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredEmission {
    /// `S(ω) = S_cav(ω) S_QD(ω) / Γ`, unit area.
    pub spectrum: Spectrum,
    /// `Γ = ∫ S_cav S_QD dω`.
    pub gamma_norm: f64,
    /// Share of the collected emission coming from the zero-phonon line.
    pub zpl_fraction: f64,
    /// Share coming from the one-phonon sideband.
    pub pl1_fraction: f64,
    pub omega_c: f64,
}

/// Filters the ZPL and one-phonon parts through the cavity.
pub fn filter(cav: &CavityMode, zpl: &Spectrum, one_phonon: &Spectrum) -> Result<FilteredEmission> {
    if zpl.grid() != one_phonon.grid() {
        return Err(Error::GridMismatch);
    }
    let grid = *zpl.grid();
    let s_cav = cavity_spectrum(cav, &grid)?;
    let zpl_f: Vec<f64> = s_cav.values().iter().zip(zpl.values()).map(|(c, z)| c * z).collect();
    let pl1_f: Vec<f64> = s_cav.values().iter().zip(one_phonon.values()).map(|(c, p)| c * p).collect();
    let step = grid.step();
    let zpl_overlap = trapezoid(&zpl_f, step);
    let pl1_overlap = trapezoid(&pl1_f, step);
    let gamma = zpl_overlap + pl1_overlap;
    if !(gamma >= MIN_OVERLAP) {
        return Err(Error::DegenerateOverlap(gamma));
    }
    let values = zpl_f.iter().zip(&pl1_f).map(|(z, p)| (z + p) / gamma).collect();
    Ok(FilteredEmission {
        spectrum: Spectrum::new(grid, values)?,
        gamma_norm: gamma,
        zpl_fraction: zpl_overlap / gamma,
        pl1_fraction: pl1_overlap / gamma,
        omega_c: cav.omega_c,
    })
}

/// Filters a single broadband spectrum, all of it counted as sideband emission.
pub fn filter_spectrum(cav: &CavityMode, s: &Spectrum) -> Result<FilteredEmission> {
    filter(cav, &Spectrum::zeros(*s.grid()), s)
}

/// Emission on either side of a boundary energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SideIntensities {
    /// Side without the cavity.
    pub qd: f64,
    /// Side holding the bare cavity energy.
    pub mode: f64,
}

/// Splits the normalised spectrum at `boundary`. The half that contains the
/// bare cavity energy counts as mode emission (the upper half when the
/// boundary sits exactly on it).
pub fn zpl_vs_cavity_intensities(f: &FilteredEmission, boundary: f64) -> Result<SideIntensities> {
    let grid = f.spectrum.grid();
    if !grid.contains(boundary) {
        return Err(Error::param("boundary", format!("{boundary} lies outside the grid")));
    }
    let v = f.spectrum.values();
    let step = grid.step();
    let pos = (grid.to_offset(boundary) - grid.offset(0)) / step;
    let k = (pos.floor() as usize).min(v.len() - 2);
    let t = pos - k as f64;
    let yb = v[k] + t * (v[k + 1] - v[k]);
    let below = trapezoid(&v[..=k], step) + 0.5 * (v[k] + yb) * t * step;
    let above = 0.5 * (yb + v[k + 1]) * (1.0 - t) * step + trapezoid(&v[k + 1..], step);
    if f.omega_c >= boundary {
        Ok(SideIntensities { qd: below, mode: above })
    } else {
        Ok(SideIntensities { qd: above, mode: below })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phonon::{qd_emission, LineLabel, PhononModel, QdLine};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn grid() -> SpectralGrid {
        SpectralGrid::default()
    }

    #[test]
    fn kappa_and_q_agree() {
        let a = CavityMode::from_q(1350.0, 1000.0).unwrap();
        assert_relative_eq!(a.kappa(), 1.35, max_relative = 1e-12);
        let b = CavityMode::from_kappa(1350.0, a.kappa()).unwrap();
        assert_relative_eq!(b.q_factor(), 1000.0, max_relative = 1e-9);
        assert!(CavityMode::from_q(1350.0, -5.0).is_err());
        assert!(CavityMode::from_kappa(1350.0, 0.0).is_err());
    }

    #[test]
    fn cavity_density_peak() {
        let cav = CavityMode::from_q(1350.0, 1000.0).unwrap();
        assert_relative_eq!(cav.density(1350.0), 2.0 / (PI * cav.kappa()), max_relative = 1e-14);
    }

    #[test]
    fn cavity_spectrum_on_grid() {
        let cav = CavityMode::from_q(1350.0, 1000.0).unwrap();
        let s = cavity_spectrum(&cav, &grid()).unwrap();
        assert!((s.integral() - 1.0).abs() < 1e-4);
        assert_eq!(s.argmax(), grid().nearest_index(1350.0));
        assert!(cavity_spectrum(&cav.retuned(1400.0), &grid()).is_err());
    }

    #[test]
    fn white_source_returns_cavity() {
        let cav = CavityMode::from_q(1351.2, 3000.0).unwrap();
        let flat = Spectrum::new(grid(), vec![0.37; grid().n_points()]).unwrap();
        let f = filter_spectrum(&cav, &flat).unwrap();
        let s_cav = cavity_spectrum(&cav, &grid()).unwrap();
        for (a, b) in f.spectrum.values().iter().zip(s_cav.values()) {
            assert!((a - b).abs() <= 1e-12 * b);
        }
        assert_eq!(f.zpl_fraction, 0.0);
        assert_eq!(f.pl1_fraction, 1.0);
    }

    #[test]
    fn resonant_narrow_zpl_dominates() {
        let pm = PhononModel::from_huang_rhys(1e-6, 0.906, 0.05).unwrap();
        let em = qd_emission(&pm, &QdLine::fixed(LineLabel::X, 1350.0), 10.0, &grid()).unwrap();
        let cav = CavityMode::from_q(1350.0, 1000.0).unwrap();
        let f = filter(&cav, &em.zpl, &em.one_phonon).unwrap();
        assert!(f.zpl_fraction > 0.9999);
        assert!((f.zpl_fraction + f.pl1_fraction - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_overlap_is_an_error() {
        let g = SpectralGrid::centered(1350.0, 1.0, 101).unwrap();
        let cav = CavityMode::from_q(1350.0, 1000.0).unwrap();
        let r = filter(&cav, &Spectrum::zeros(g), &Spectrum::zeros(g));
        assert!(matches!(r, Err(Error::DegenerateOverlap(_))));
    }

    #[test]
    fn grids_must_match() {
        let g2 = SpectralGrid::centered(1350.0, 5.0, 101).unwrap();
        let cav = CavityMode::from_q(1350.0, 1000.0).unwrap();
        assert!(matches!(filter(&cav, &Spectrum::zeros(grid()), &Spectrum::zeros(g2)), Err(Error::GridMismatch)));
    }

    fn emission(delta: f64, temperature: f64, q: f64) -> FilteredEmission {
        let pm = PhononModel::default();
        let em = qd_emission(&pm, &QdLine::fixed(LineLabel::X, 1350.0), temperature, &grid()).unwrap();
        let cav = CavityMode::from_q(1350.0, q).unwrap().retuned(1350.0 + delta);
        filter(&cav, &em.zpl, &em.one_phonon).unwrap()
    }

    #[test]
    fn two_peaks_with_pulled_cavity_line() {
        let f = emission(1.0, 40.0, 1000.0);
        let g = grid();
        let v = f.spectrum.values();
        let maxima: Vec<usize> = (1..v.len() - 1).filter(|&i| v[i] > v[i - 1] && v[i] >= v[i + 1]).collect();
        assert_eq!(maxima.len(), 2, "{maxima:?}");
        assert!(maxima[0].abs_diff(g.nearest_index(1350.0)) <= 1);
        let mode = g.energy(maxima[1]);
        assert!(mode > 1350.0 && mode < 1351.0, "{mode}");
    }

    #[test]
    fn output_normalized_and_fractions_close() {
        for (d, t, q) in [(0.0, 5.0, 1000.0), (1.0, 40.0, 3000.0), (-2.5, 20.0, 5000.0)] {
            let f = emission(d, t, q);
            assert!((f.spectrum.integral() - 1.0).abs() <= 1e-6);
            assert!((f.zpl_fraction + f.pl1_fraction - 1.0).abs() <= 1e-6);
            assert!(f.gamma_norm > 0.0);
        }
    }

    #[test]
    fn split_intensities() {
        let f = emission(1.0, 20.0, 1000.0);
        let s = zpl_vs_cavity_intensities(&f, 1350.5).unwrap();
        assert!((s.qd + s.mode - 1.0).abs() < 1e-6);
        assert!(s.qd > s.mode);
        assert!(zpl_vs_cavity_intensities(&f, 1400.0).is_err());
    }

    #[test]
    fn symmetric_spectrum_splits_evenly() {
        let cav = CavityMode::from_q(1350.0, 1000.0).unwrap();
        let zpl = crate::spectral::sample_lorentzian(&grid(), 1350.0, 0.05).unwrap();
        let f = filter(&cav, &zpl, &Spectrum::zeros(grid())).unwrap();
        let s = zpl_vs_cavity_intensities(&f, 1350.0).unwrap();
        assert_relative_eq!(s.qd, 0.5, max_relative = 1e-9);
        assert_relative_eq!(s.mode, 0.5, max_relative = 1e-9);
    }

    #[test]
    fn far_detuned_cavity_still_fed() {
        let f = emission(5.0, 20.0, 1000.0);
        let s = zpl_vs_cavity_intensities(&f, 1352.5).unwrap();
        assert!(s.mode > 0.0);
    }

    #[test]
    fn boundary_step_bounded_by_bin_mass() {
        let f = emission(1.0, 20.0, 1000.0);
        let g = *f.spectrum.grid();
        let v = f.spectrum.values();
        let max_bin = v.windows(2).map(|w| 0.5 * (w[0] + w[1]) * g.step()).fold(0.0, f64::max);
        for b in [1350.3, 1350.5004, 1350.71] {
            let a = zpl_vs_cavity_intensities(&f, b).unwrap();
            let c = zpl_vs_cavity_intensities(&f, b + g.step()).unwrap();
            assert!((a.qd - c.qd).abs() <= max_bin);
        }
    }

    #[test]
    fn zpl_fraction_peaks_near_resonance() {
        let pm = PhononModel::default();
        let g = grid();
        let step = 0.05;
        for t in [20.0, 40.0] {
            let em = qd_emission(&pm, &QdLine::fixed(LineLabel::X, 1350.0), t, &g).unwrap();
            let base = CavityMode::from_q(1350.0, 1000.0).unwrap();
            let best = (0..121)
                .map(|i| -3.0 + i as f64 * step)
                .map(|d| (d, filter(&base.retuned(1350.0 + d), &em.zpl, &em.one_phonon).unwrap().zpl_fraction))
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            assert!(best.0.abs() <= step + 1e-9, "T={t}: argmax at {}", best.0);
        }
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn white_source_identity(omega in 1345.0f64..1355.0, q in 500.0f64..8000.0, level in 1e-3f64..1e3) {
            let g = SpectralGrid::default();
            let cav = CavityMode::from_q(omega, q).unwrap();
            let flat = Spectrum::new(g, vec![level; g.n_points()]).unwrap();
            let f = filter_spectrum(&cav, &flat).unwrap();
            let s = cavity_spectrum(&cav, &g).unwrap();
            for (a, b) in f.spectrum.values().iter().zip(s.values()) {
                prop_assert!((a - b).abs() <= 1e-12 * b);
            }
        }
    }
}
