//! Energy grids, sampled spectra and the line-shape primitives shared by the
//! rest of the crate.
//!
//! All energies are in meV with ħ = 1, so frequencies and energies are used
//! interchangeably. A grid keeps a reference energy and stores its bounds as
//! offsets from it; line shapes are evaluated on offsets so that detunings of
//! a few µeV are not swamped by the ~1.35 eV absolute scale.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Boltzmann constant in meV/K.
pub const K_B: f64 = 0.086_173_33;

/// Default reference energy (meV), in the InGaAs quantum-dot range near 935 nm.
pub const DEFAULT_REFERENCE: f64 = 1350.0;

/// Default half-width of the energy window around the reference (meV).
pub const DEFAULT_HALF_WIDTH: f64 = 10.0;

/// Default number of grid points (2.5 µeV step over ±10 meV).
pub const DEFAULT_POINTS: usize = 8001;

/// Uniform energy axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralGrid {
    reference: f64,
    lo: f64,
    hi: f64,
    n_points: usize,
}

impl SpectralGrid {
    /// Grid spanning `[e_min, e_max]` (absolute meV) with the default reference.
    pub fn new(e_min: f64, e_max: f64, n_points: usize) -> Result<Self> {
        Self::with_reference(DEFAULT_REFERENCE, e_min - DEFAULT_REFERENCE, e_max - DEFAULT_REFERENCE, n_points)
    }

    /// Grid spanning `reference ± half_width`.
    pub fn centered(reference: f64, half_width: f64, n_points: usize) -> Result<Self> {
        Self::with_reference(reference, -half_width, half_width, n_points)
    }

    /// Grid whose bounds are given as offsets from `reference`.
    pub fn with_reference(reference: f64, lo: f64, hi: f64, n_points: usize) -> Result<Self> {
        if !(reference.is_finite() && lo.is_finite() && hi.is_finite()) {
            return Err(Error::param("grid", "bounds must be finite"));
        }
        if n_points < 2 {
            return Err(Error::param("n_points", format!("need at least 2 points, got {n_points}")));
        }
        if lo >= hi {
            return Err(Error::param("grid", format!("e_min ({}) must be below e_max ({})", reference + lo, reference + hi)));
        }
        Ok(Self {
            reference,
            lo,
            hi,
            n_points,
        })
    }

    pub fn reference(&self) -> f64 {
        self.reference
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.n_points - 1) as f64
    }

    pub fn e_min(&self) -> f64 {
        self.reference + self.lo
    }

    pub fn e_max(&self) -> f64 {
        self.reference + self.hi
    }

    /// Offset of point `i` from the reference energy.
    #[inline]
    pub fn offset(&self, i: usize) -> f64 {
        if i + 1 == self.n_points {
            self.hi
        } else {
            self.lo + i as f64 * self.step()
        }
    }

    /// Absolute energy of point `i`.
    #[inline]
    pub fn energy(&self, i: usize) -> f64 {
        self.reference + self.offset(i)
    }

    pub fn energies(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_points).map(move |i| self.energy(i))
    }

    pub fn offsets(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_points).map(move |i| self.offset(i))
    }

    /// Converts an absolute energy into an offset from the reference.
    #[inline]
    pub fn to_offset(&self, energy: f64) -> f64 {
        energy - self.reference
    }

    pub fn contains(&self, energy: f64) -> bool {
        let d = self.to_offset(energy);
        d >= self.lo && d <= self.hi
    }

    /// Index of the grid point closest to `energy`, clamped to the grid.
    pub fn nearest_index(&self, energy: f64) -> usize {
        let x = (self.to_offset(energy) - self.lo) / self.step();
        x.round().clamp(0.0, (self.n_points - 1) as f64) as usize
    }

    /// Same axis translated by `delta` meV.
    pub fn shifted(&self, delta: f64) -> Self {
        Self {
            reference: self.reference + delta,
            ..*self
        }
    }
}

impl Default for SpectralGrid {
    fn default() -> Self {
        Self {
            reference: DEFAULT_REFERENCE,
            lo: -DEFAULT_HALF_WIDTH,
            hi: DEFAULT_HALF_WIDTH,
            n_points: DEFAULT_POINTS,
        }
    }
}

/// Spectral density (1/meV) sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    grid: SpectralGrid,
    values: Vec<f64>,
}

impl Spectrum {
    /// Builds a spectrum; values must be finite and non-negative.
    pub fn new(grid: SpectralGrid, values: Vec<f64>) -> Result<Self> {
        let s = Self::from_measurement(grid, values)?;
        if let Some((i, v)) = s.values.iter().enumerate().find(|(_, v)| **v < 0.0) {
            return Err(Error::InvalidInput(format!("negative spectral density {v} at index {i}")));
        }
        Ok(s)
    }

    /// Builds a spectrum from measured or noisy samples, which may dip below zero.
    pub fn from_measurement(grid: SpectralGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_points() {
            return Err(Error::InvalidInput(format!(
                "{} samples for a grid of {} points",
                values.len(),
                grid.n_points()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite sample at index {i}")));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: SpectralGrid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.n_points()],
        }
    }

    /// Samples `f(offset)` at every grid point. The caller guarantees finite non-negative output.
    pub(crate) fn from_fn(grid: SpectralGrid, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.offsets().map(f).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn integral(&self) -> f64 {
        trapezoid_integral(self)
    }

    /// Multiplies every sample by `factor` (must be non-negative).
    pub fn scaled(mut self, factor: f64) -> Self {
        debug_assert!(factor >= 0.0);
        self.values.iter_mut().for_each(|v| *v *= factor);
        self
    }

    /// Rescales to unit trapezoid integral.
    pub fn normalized(self) -> Result<Self> {
        let area = self.integral();
        if !(area > 0.0) {
            return Err(Error::InvalidInput("cannot normalise a spectrum with zero integral".into()));
        }
        Ok(self.scaled(1.0 / area))
    }

    /// Pointwise `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &Spectrum, b: f64) -> Result<Spectrum> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Ok(Spectrum {
            grid: self.grid,
            values,
        })
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        best
    }

    /// Same samples on a grid translated by `delta` meV.
    pub fn shifted(&self, delta: f64) -> Spectrum {
        Spectrum {
            grid: self.grid.shifted(delta),
            values: self.values.clone(),
        }
    }
}

/// Unit-area Lorentzian with full width at half maximum `fwhm`.
pub fn lorentzian(omega: f64, center: f64, fwhm: f64) -> Result<f64> {
    if !(fwhm > 0.0) {
        return Err(Error::param("fwhm", format!("must be positive, got {fwhm}")));
    }
    Ok(lorentz(center - omega, fwhm))
}

/// Lorentzian evaluated at detuning `d` from its center.
#[inline]
pub(crate) fn lorentz(d: f64, fwhm: f64) -> f64 {
    let hw = 0.5 * fwhm;
    hw / PI / (hw * hw + d * d)
}

/// Samples a unit-area Lorentzian on `grid`.
pub fn sample_lorentzian(grid: &SpectralGrid, center: f64, fwhm: f64) -> Result<Spectrum> {
    if !(fwhm > 0.0) {
        return Err(Error::param("fwhm", format!("must be positive, got {fwhm}")));
    }
    let c = grid.to_offset(center);
    Ok(Spectrum::from_fn(*grid, |x| lorentz(c - x, fwhm)))
}

/// Trapezoidal rule over uniformly spaced samples.
pub fn trapezoid(values: &[f64], step: f64) -> f64 {
    match values {
        [] | [_] => 0.0,
        [first, inner @ .., last] => step * (0.5 * (first + last) + inner.iter().sum::<f64>()),
    }
}

/// Trapezoidal integral of a sampled spectrum over its grid.
pub fn trapezoid_integral(s: &Spectrum) -> f64 {
    trapezoid(&s.values, s.grid.step())
}

/// Convolves with a unit-norm Gaussian of standard deviation `sigma` (meV),
/// truncated at ±5σ.
///
/// Each source bin spreads its content over the in-range part of the kernel,
/// renormalised under trapezoid weights, so the integral is unchanged even
/// next to the grid edges.
pub fn gaussian_convolve(s: &Spectrum, sigma: f64) -> Result<Spectrum> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::param("sigma", format!("must be non-negative, got {sigma}")));
    }
    let step = s.grid.step();
    let half = (5.0 * sigma / step).floor() as usize;
    if sigma == 0.0 || half == 0 {
        return Ok(s.clone());
    }
    let kernel: Vec<f64> = (0..=half)
        .map(|k| {
            let x = k as f64 * step / sigma;
            (-0.5 * x * x).exp()
        })
        .collect();
    let n = s.values.len();
    let end_weight = |i: usize| if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
    let mut out = vec![0.0; n];
    for (j, &v) in s.values.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        let lo = j.saturating_sub(half);
        let hi = (j + half).min(n - 1);
        let norm: f64 = (lo..=hi).map(|i| end_weight(i) * kernel[i.abs_diff(j)]).sum();
        let w = end_weight(j) * v / norm;
        for (i, o) in out.iter_mut().enumerate().take(hi + 1).skip(lo) {
            *o += w * kernel[i.abs_diff(j)];
        }
    }
    Spectrum::from_measurement(s.grid, out)
}
