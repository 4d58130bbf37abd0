//! Emission of a quantum dot weakly coupled to a low-Q cavity: acoustic-phonon
//! sidebands, cavity filtering, and multi-Lorentzian extraction of the
//! apparent cavity line across detuning and temperature sweeps.

#![allow(clippy::neg_cmp_op_on_partial_ord)]
//!
//! Energies are in meV, temperatures in K, with ħ = 1.

pub mod cavity;
pub mod error;
pub mod fitting;
pub mod import;
pub mod phonon;
pub mod spectral;
pub mod sweep;

pub use cavity::{cavity_spectrum, filter, filter_spectrum, zpl_vs_cavity_intensities, CavityMode, FilteredEmission, SideIntensities};
pub use error::{Error, Result};
pub use fitting::{classify_peaks, fit, fit_samples, fit_with, initialize_peaks, Classification, FitOptions, FitResult, Peak, PeakInit, PeakLabel, PeakModel};
pub use import::{parse_two_column, read_two_column};
pub use phonon::{
    bose_occupation, effective_1pl_fwhm, one_phonon_line, qd_emission, qd_spectrum, LineLabel, PhononModel, QdEmission, QdLine, Width,
};
pub use spectral::{gaussian_convolve, lorentzian, sample_lorentzian, trapezoid_integral, SpectralGrid, Spectrum, K_B};
pub use sweep::{
    apparent_q, detuning_sweep, pulled_frequency, run_sweep, temperature_sweep, NoiseSpec, Scenario, SweepMode, SweepPoint, SweepRange,
    SweepSeries, SweepSpec,
};
