//! Multi-Lorentzian least-squares decomposition.
//!
//! The model is `baseline + Σ area_k · L(ω; center_k, fwhm_k)` with unit-area
//! Lorentzians `L`. Widths and areas are fitted through their logarithms so
//! they stay positive. The optimiser is a damped Gauss-Newton iteration
//! (Levenberg-Marquardt with diagonal scaling) on an analytic Jacobian.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phonon::half_max_width;
use crate::spectral::{trapezoid, SpectralGrid, Spectrum};

pub const MAX_PEAKS: usize = 4;

/// Fraction of a Lorentzian's area inside ±1 FWHM of its centre, `(2/π)·atan 2`.
const CORE_FRACTION: f64 = 0.704_832_764_699_133_5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub center: f64,
    pub fwhm: f64,
    pub area: f64,
}

impl Peak {
    pub fn height(&self) -> f64 {
        2.0 * self.area / (PI * self.fwhm)
    }
}

/// Sum of Lorentzian peaks on a constant baseline.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PeakModel {
    pub peaks: Vec<Peak>,
    pub baseline: f64,
}

impl PeakModel {
    pub fn new(peaks: Vec<Peak>) -> Self {
        Self { peaks, baseline: 0.0 }
    }

    pub fn n_peaks(&self) -> usize {
        self.peaks.len()
    }

    pub fn evaluate(&self, energy: f64) -> f64 {
        self.baseline
            + self
                .peaks
                .iter()
                .map(|p| p.area * crate::spectral::lorentz(energy - p.center, p.fwhm))
                .sum::<f64>()
    }

    /// Samples the model on `grid`.
    pub fn render(&self, grid: &SpectralGrid) -> Spectrum {
        let local = self.to_local(grid);
        let values = grid.offsets().map(|x| local.evaluate(x)).collect();
        Spectrum::from_measurement(*grid, values).expect("finite model")
    }

    /// Parameter vector `[center, ln fwhm, ln area]` per peak, then the baseline.
    pub fn parameters(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(3 * self.peaks.len() + 1);
        for pk in &self.peaks {
            p.extend([pk.center, pk.fwhm.ln(), pk.area.ln()]);
        }
        p.push(self.baseline);
        p
    }

    /// Inverse of [`PeakModel::parameters`].
    pub fn from_parameters(p: &[f64]) -> Self {
        let n = (p.len() - 1) / 3;
        let peaks = (0..n)
            .map(|k| Peak {
                center: p[3 * k],
                fwhm: p[3 * k + 1].exp(),
                area: p[3 * k + 2].exp(),
            })
            .collect();
        Self {
            peaks,
            baseline: p[3 * n],
        }
    }

    /// Analytic derivatives of the model value at `energy` with respect to
    /// [`PeakModel::parameters`].
    pub fn jacobian_row(&self, energy: f64) -> Vec<f64> {
        let mut row = Vec::with_capacity(3 * self.peaks.len() + 1);
        for p in &self.peaks {
            row.extend(peak_derivatives(energy - p.center, p.fwhm, p.area));
        }
        row.push(1.0);
        row
    }

    fn validate(&self, grid: &SpectralGrid) -> Result<()> {
        if self.peaks.is_empty() || self.peaks.len() > MAX_PEAKS {
            return Err(Error::param("n_peaks", format!("need 1 to {MAX_PEAKS} peaks, got {}", self.peaks.len())));
        }
        for p in &self.peaks {
            if !(p.fwhm > 0.0 && p.fwhm.is_finite()) {
                return Err(Error::param("fwhm", format!("peak widths must be positive, got {}", p.fwhm)));
            }
            if !(p.area >= 0.0 && p.area.is_finite()) {
                return Err(Error::param("area", format!("peak areas must be non-negative, got {}", p.area)));
            }
            if !grid.contains(p.center) {
                return Err(Error::param("center", format!("peak centre {} lies outside the grid", p.center)));
            }
        }
        if !self.baseline.is_finite() {
            return Err(Error::param("baseline", "must be finite"));
        }
        Ok(())
    }

    /// Copy with centres expressed as offsets from the grid reference.
    fn to_local(&self, grid: &SpectralGrid) -> Self {
        let mut m = self.clone();
        m.peaks.iter_mut().for_each(|p| p.center = grid.to_offset(p.center));
        m
    }

    fn sort_by_center(&mut self) {
        self.peaks.sort_by(|a, b| a.center.total_cmp(&b.center));
    }
}

/// `[∂/∂center, ∂/∂ln fwhm, ∂/∂ln area]` of `area·L(d; fwhm)` with `d = ω − center`.
#[inline]
fn peak_derivatives(d: f64, fwhm: f64, area: f64) -> [f64; 3] {
    let hw = 0.5 * fwhm;
    let den = hw * hw + d * d;
    let y = area * hw / (PI * den);
    [2.0 * y * d / den, y * (d * d - hw * hw) / den, y]
}

/// Starting model picked from local maxima.
#[derive(Debug, Clone, PartialEq)]
pub struct PeakInit {
    pub model: PeakModel,
    /// Fewer than the requested number of separated maxima were found.
    pub shortfall: bool,
}

/// Seeds up to `n` peaks at the highest local maxima lying at least three
/// grid steps apart. Widths come from the local half-maximum crossings and
/// areas from the integral over ±1 FWHM.
pub fn initialize_peaks(s: &Spectrum, n: usize) -> Result<PeakInit> {
    if n == 0 {
        return Err(Error::param("n_peaks", "must request at least one peak"));
    }
    let v = s.values();
    let grid = s.grid();
    let step = grid.step();
    let mut maxima: Vec<usize> = (1..v.len() - 1).filter(|&i| v[i] > 0.0 && v[i] > v[i - 1] && v[i] >= v[i + 1]).collect();
    // stable: equal heights keep ascending energy order
    maxima.sort_by(|&a, &b| v[b].total_cmp(&v[a]));
    let mut chosen: Vec<usize> = Vec::with_capacity(n);
    for i in maxima {
        if chosen.len() == n {
            break;
        }
        if chosen.iter().all(|&j| i.abs_diff(j) >= 3) {
            chosen.push(i);
        }
    }
    let shortfall = chosen.len() < n;
    let mut peaks: Vec<Peak> = chosen
        .into_iter()
        .map(|i| {
            let fwhm = local_width(v, i, step);
            let reach = (fwhm / step).ceil() as usize;
            let lo = i.saturating_sub(reach);
            let hi = (i + reach).min(v.len() - 1);
            let area = (trapezoid(&v[lo..=hi], step) / CORE_FRACTION).max(f64::MIN_POSITIVE);
            Peak {
                center: grid.energy(i),
                fwhm,
                area,
            }
        })
        .collect();
    peaks.sort_by(|a, b| a.center.total_cmp(&b.center));
    Ok(PeakInit {
        model: PeakModel::new(peaks),
        shortfall,
    })
}

fn local_width(v: &[f64], i: usize, step: f64) -> f64 {
    let half = 0.5 * v[i];
    let left = (0..i).rev().find(|&j| v[j] < half).map(|j| {
        let t = (half - v[j]) / (v[j + 1] - v[j]);
        (i - j) as f64 - t
    });
    let right = (i + 1..v.len()).find(|&j| v[j] < half).map(|j| {
        let t = (v[j - 1] - half) / (v[j - 1] - v[j]);
        (j - 1 - i) as f64 + t
    });
    let w = match (left, right) {
        (Some(l), Some(r)) => l + r,
        (Some(l), None) => 2.0 * l,
        (None, Some(r)) => 2.0 * r,
        (None, None) => half_max_width(v, 1.0).map_or(1.0, |w| w.fwhm),
    };
    (w * step).max(step)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Stop once `‖Jᵀr‖` falls below this fraction of its initial value.
    pub gradient_tolerance: f64,
    /// Stop once an accepted step is below this fraction of `‖θ‖`.
    pub step_tolerance: f64,
    pub initial_damping: f64,
    /// Fit the constant baseline instead of holding it at its initial value.
    pub fit_baseline: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            gradient_tolerance: 1e-10,
            step_tolerance: 1e-12,
            initial_damping: 1e-3,
            fit_baseline: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// Optimised model, peaks sorted by centre.
    pub model: PeakModel,
    pub residual_rms: f64,
    pub n_iterations: usize,
    /// The gradient criterion was met.
    pub converged: bool,
    /// Variances of `[center, fwhm, area]` per peak (sorted order), then the
    /// baseline when it was fitted.
    pub covariance_diag: Vec<f64>,
    /// Sum of squared residuals after each accepted step, starting from the initial model.
    pub residual_history: Vec<f64>,
    /// `‖Jᵀr‖` at the solution relative to its initial value.
    pub gradient_ratio: f64,
    pub diagnostic: Option<String>,
}

/// Fits `init` to `s` with default options.
pub fn fit(s: &Spectrum, init: &PeakModel) -> Result<FitResult> {
    fit_with(s, init, &FitOptions::default())
}

/// Fits raw samples, rejecting non-finite values.
pub fn fit_samples(grid: &SpectralGrid, values: &[f64], init: &PeakModel, opts: &FitOptions) -> Result<FitResult> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("spectrum contains NaN or infinite samples".into()));
    }
    let s = Spectrum::from_measurement(*grid, values.to_vec())?;
    fit_with(&s, init, opts)
}

struct Problem<'a> {
    x: Vec<f64>,
    y: &'a [f64],
    n_peaks: usize,
    fit_baseline: bool,
    baseline: f64,
}

impl Problem<'_> {
    fn n_params(&self) -> usize {
        3 * self.n_peaks + usize::from(self.fit_baseline)
    }

    fn baseline(&self, theta: &[f64]) -> f64 {
        if self.fit_baseline {
            theta[3 * self.n_peaks]
        } else {
            self.baseline
        }
    }

    fn residuals(&self, theta: &[f64]) -> Vec<f64> {
        let b = self.baseline(theta);
        self.x
            .iter()
            .zip(self.y)
            .map(|(&x, &y)| {
                let mut m = b;
                for k in 0..self.n_peaks {
                    let d = x - theta[3 * k];
                    let hw = 0.5 * theta[3 * k + 1].exp();
                    m += theta[3 * k + 2].exp() * hw / (PI * (hw * hw + d * d));
                }
                m - y
            })
            .collect()
    }

    /// Returns `(JᵀJ, Jᵀr)`.
    fn normal_equations(&self, theta: &[f64], r: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
        let p = self.n_params();
        let mut jtj = DMatrix::<f64>::zeros(p, p);
        let mut jtr = DVector::<f64>::zeros(p);
        let mut row = vec![0.0; p];
        let widths: Vec<f64> = (0..self.n_peaks).map(|k| theta[3 * k + 1].exp()).collect();
        let areas: Vec<f64> = (0..self.n_peaks).map(|k| theta[3 * k + 2].exp()).collect();
        for (&x, &ri) in self.x.iter().zip(r) {
            for k in 0..self.n_peaks {
                let d = peak_derivatives(x - theta[3 * k], widths[k], areas[k]);
                row[3 * k..3 * k + 3].copy_from_slice(&d);
            }
            if self.fit_baseline {
                row[p - 1] = 1.0;
            }
            for a in 0..p {
                jtr[a] += row[a] * ri;
                for b in a..p {
                    jtj[(a, b)] += row[a] * row[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                jtj[(a, b)] = jtj[(b, a)];
            }
        }
        (jtj, jtr)
    }
}

/// Sum of squares with Neumaier compensation.
fn ssr(r: &[f64]) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0;
    for v in r {
        let x = v * v;
        let t = sum + x;
        c += if sum.abs() >= x { (sum - t) + x } else { (x - t) + sum };
        sum = t;
    }
    sum + c
}

/// Damped Gauss-Newton fit. Damping is multiplied by ten after a rejected
/// step and divided by ten after an accepted one.
pub fn fit_with(s: &Spectrum, init: &PeakModel, opts: &FitOptions) -> Result<FitResult> {
    let grid = *s.grid();
    init.validate(&grid)?;
    let local = init.to_local(&grid);
    let problem = Problem {
        x: grid.offsets().collect(),
        y: s.values(),
        n_peaks: local.n_peaks(),
        fit_baseline: opts.fit_baseline,
        baseline: local.baseline,
    };
    let mut theta: Vec<f64> = local
        .peaks
        .iter()
        .flat_map(|p| [p.center, p.fwhm.ln(), p.area.max(f64::MIN_POSITIVE).ln()])
        .collect();
    if opts.fit_baseline {
        theta.push(local.baseline);
    }
    let p = theta.len();

    let mut r = problem.residuals(&theta);
    let mut cost = ssr(&r);
    let mut history = vec![cost];
    let (mut jtj, mut g) = problem.normal_equations(&theta, &r);
    let g0 = g.norm();
    let mut lambda = opts.initial_damping;
    let mut iterations = 0;
    let mut diagnostic = None;

    let singular_column = (0..p).any(|a| !(jtj[(a, a)] > 0.0) || !jtj[(a, a)].is_finite());
    if singular_column {
        diagnostic = Some("singular normal equations: a parameter has no influence on the model".to_string());
    }

    let gradient_met = |g: &DVector<f64>| g.norm() <= opts.gradient_tolerance * g0 || g0 == 0.0;

    while diagnostic.is_none() && iterations < opts.max_iterations && !gradient_met(&g) {
        iterations += 1;
        let mut accepted = None;
        while lambda <= 1e30 {
            let mut m = jtj.clone();
            for a in 0..p {
                m[(a, a)] += lambda * jtj[(a, a)];
            }
            let Some(chol) = m.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let delta = chol.solve(&(-&g));
            let trial: Vec<f64> = theta.iter().zip(delta.iter()).map(|(t, d)| t + d).collect();
            let r_trial = problem.residuals(&trial);
            let c_trial = ssr(&r_trial);
            if c_trial.is_finite() && c_trial < cost {
                lambda = (lambda / 10.0).max(1e-15);
                accepted = Some((trial, r_trial, c_trial, delta.norm()));
                break;
            }
            lambda *= 10.0;
        }
        let Some((trial, r_trial, c_trial, step)) = accepted else {
            // no descent direction left at working precision
            break;
        };
        let theta_norm = trial.iter().map(|t| t * t).sum::<f64>().sqrt();
        theta = trial;
        r = r_trial;
        cost = c_trial;
        history.push(cost);
        (jtj, g) = problem.normal_equations(&theta, &r);
        if step <= opts.step_tolerance * (theta_norm + opts.step_tolerance) {
            break;
        }
    }

    if diagnostic.is_none() && jtj.clone().cholesky().is_none() {
        diagnostic = Some("singular normal equations at the solution".to_string());
    }
    let converged = diagnostic.is_none() && gradient_met(&g);
    if diagnostic.is_none() && !converged {
        diagnostic = Some(if iterations >= opts.max_iterations {
            format!("iteration limit of {} reached with gradient ratio {:.3e}", opts.max_iterations, g.norm() / g0)
        } else {
            format!("stalled with gradient ratio {:.3e}", g.norm() / g0)
        });
    }

    let n = problem.x.len();
    let dof = n.saturating_sub(p).max(1) as f64;
    let sigma2 = cost / dof;
    let inv = jtj.clone().try_inverse();
    let variance = |a: usize| inv.as_ref().map_or(f64::NAN, |m| sigma2 * m[(a, a)]);

    let mut fitted = PeakModel {
        peaks: (0..problem.n_peaks)
            .map(|k| Peak {
                center: grid.reference() + theta[3 * k],
                fwhm: theta[3 * k + 1].exp(),
                area: theta[3 * k + 2].exp(),
            })
            .collect(),
        baseline: problem.baseline(&theta),
    };
    let mut per_peak: Vec<(f64, [f64; 3])> = (0..problem.n_peaks)
        .map(|k| {
            let (f, a) = (fitted.peaks[k].fwhm, fitted.peaks[k].area);
            (
                fitted.peaks[k].center,
                [variance(3 * k), f * f * variance(3 * k + 1), a * a * variance(3 * k + 2)],
            )
        })
        .collect();
    per_peak.sort_by(|a, b| a.0.total_cmp(&b.0));
    fitted.sort_by_center();
    let mut covariance_diag: Vec<f64> = per_peak.into_iter().flat_map(|(_, v)| v).collect();
    if opts.fit_baseline {
        covariance_diag.push(variance(p - 1));
    }

    Ok(FitResult {
        model: fitted,
        residual_rms: (cost / n as f64).sqrt(),
        n_iterations: iterations,
        converged,
        covariance_diag,
        residual_history: history,
        gradient_ratio: if g0 == 0.0 { 0.0 } else { g.norm() / g0 },
        diagnostic,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PeakLabel {
    /// Zero-phonon line of the quantum-dot line at this index.
    QdLike(usize),
    CavityLike,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    /// One label per fitted peak, in the fit's (ascending-energy) order.
    pub labels: Vec<PeakLabel>,
    /// Index of the cavity-like peak closest to the bare cavity, if any.
    pub mode_index: Option<usize>,
    /// Zero or several cavity-like peaks were found.
    pub ambiguous: bool,
}

/// Labels fitted peaks as ZPLs of predicted lines or as cavity-like. Each
/// line claims at most one peak, the closest one within
/// `max(3·zpl_fwhm, 0.2 meV)`; pairs are matched in order of increasing
/// distance. Unclaimed peaks are cavity-like.
pub fn classify_peaks(r: &FitResult, zpl_centers: &[f64], zpl_fwhm: f64, omega_c: f64) -> Classification {
    let tolerance = (3.0 * zpl_fwhm).max(0.2);
    let peaks = &r.model.peaks;
    let mut pairs: Vec<(f64, usize, usize)> = peaks
        .iter()
        .enumerate()
        .flat_map(|(k, p)| zpl_centers.iter().enumerate().map(move |(l, c)| ((p.center - c).abs(), k, l)))
        .filter(|(d, _, _)| *d <= tolerance)
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut labels = vec![PeakLabel::CavityLike; peaks.len()];
    let mut line_taken = vec![false; zpl_centers.len()];
    for (_, k, l) in pairs {
        if labels[k] == PeakLabel::CavityLike && !line_taken[l] {
            labels[k] = PeakLabel::QdLike(l);
            line_taken[l] = true;
        }
    }
    let cavity: Vec<usize> = labels.iter().enumerate().filter(|(_, l)| **l == PeakLabel::CavityLike).map(|(i, _)| i).collect();
    let mode_index = cavity
        .iter()
        .copied()
        .min_by(|&a, &b| (r.model.peaks[a].center - omega_c).abs().total_cmp(&(r.model.peaks[b].center - omega_c).abs()));
    Classification {
        labels,
        mode_index,
        ambiguous: cavity.len() != 1,
    }
}


#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    fn grid() -> SpectralGrid {
        SpectralGrid::centered(1350.0, 6.0, 2401).unwrap()
    }

    fn model(c1: f64, c2: f64, f1: f64, f2: f64, a1: f64, a2: f64) -> PeakModel {
        PeakModel::new(vec![
            Peak { center: 1350.0 + c1, fwhm: f1, area: a1 },
            Peak { center: 1350.0 + c2, fwhm: f2, area: a2 },
        ])
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn fit_is_idempotent(c1 in -3.0f64..-1.0, c2 in 0.5f64..3.0, f1 in 0.05f64..0.5, f2 in 0.3f64..1.5, a1 in 0.1f64..1.0, a2 in 0.1f64..1.0) {
            let m = model(c1, c2, f1, f2, a1, a2);
            let r = fit(&m.render(&grid()), &m).unwrap();
            for (a, b) in r.model.peaks.iter().zip(&m.peaks) {
                prop_assert!((a.center - b.center).abs() <= 1e-8 * b.center);
                prop_assert!((a.fwhm / b.fwhm - 1.0).abs() <= 1e-8);
                prop_assert!((a.area / b.area - 1.0).abs() <= 1e-8);
            }
        }

        #[test]
        fn scale_equivariance(scale in 0.01f64..100.0, c2 in 0.5f64..3.0) {
            let truth = model(-1.5, c2, 0.2, 0.9, 0.4, 0.6);
            let s = truth.render(&grid());
            let start = model(-1.45, c2 + 0.1, 0.25, 0.8, 0.5, 0.5);
            let a = fit(&s, &start).unwrap();
            let scaled = s.clone().scaled(scale);
            let mut start_scaled = start.clone();
            start_scaled.peaks.iter_mut().for_each(|p| p.area *= scale);
            let b = fit(&scaled, &start_scaled).unwrap();
            for (pa, pb) in a.model.peaks.iter().zip(&b.model.peaks) {
                prop_assert!((pa.center - pb.center).abs() <= 1e-8 * pa.center);
                prop_assert!((pa.fwhm / pb.fwhm - 1.0).abs() <= 1e-8);
                prop_assert!((pb.area / (scale * pa.area) - 1.0).abs() <= 1e-8);
            }
        }

        #[test]
        fn shift_equivariance(shift in -20.0f64..20.0) {
            let truth = model(-1.0, 1.2, 0.1, 1.1, 0.5, 0.5);
            let s = truth.render(&grid());
            let start = model(-0.95, 1.0, 0.15, 0.9, 0.4, 0.6);
            let a = fit(&s, &start).unwrap();
            let mut start_shifted = start.clone();
            start_shifted.peaks.iter_mut().for_each(|p| p.center += shift);
            let b = fit(&s.shifted(shift), &start_shifted).unwrap();
            for (pa, pb) in a.model.peaks.iter().zip(&b.model.peaks) {
                prop_assert!((pb.center - pa.center - shift).abs() <= 1e-9);
                prop_assert!((pa.fwhm / pb.fwhm - 1.0).abs() <= 1e-8);
                prop_assert!((pa.area / pb.area - 1.0).abs() <= 1e-8);
            }
        }
    }
}
