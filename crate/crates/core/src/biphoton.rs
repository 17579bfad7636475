//! Joint spectral amplitude of the photon-pair source.
//!
//! The amplitude is stored on sum/difference detuning axes
//! `u = Ω_s + Ω_i`, `w = Ω_s − Ω_i`, both uniform and symmetric about zero,
//! where Ω is the detuning from the mean of the two center frequencies.
//! Exchanging the photons is the reflection `w → −w`, exact on the grid.

use std::f64::consts::{LN_2, PI};
use std::io::Write;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fiber_model::{self, angular_frequency, FiberError, FiberLink, C};

#[derive(Debug, Error)]
pub enum BiphotonError {
    #[error("invalid source parameter {field}: {reason}")]
    InvalidSource { field: &'static str, reason: String },
    #[error("grid of {points} points spanning ±{half_span:.3e} rad/s cannot hold ±6σ = ±{needed:.3e} rad/s on the {axis} axis")]
    GridTooSmall { axis: &'static str, points: usize, half_span: f64, needed: f64 },
    #[error("non-finite phase at Ω_s = {omega_s:.6e}, Ω_i = {omega_i:.6e} rad/s")]
    NonFinitePhase { omega_s: f64, omega_i: f64 },
    #[error(transparent)]
    Fiber(#[from] FiberError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// FWHM = FWHM_PER_SIGMA·σ for a Gaussian.
pub fn fwhm_per_sigma() -> f64 {
    2.0 * (2.0 * LN_2).sqrt()
}

/// Spectral parameters of the pair source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhotonPairSource {
    pub signal_nm: f64,
    pub idler_nm: f64,
    pub pump_center_nm: f64,
    pub pump_bandwidth_fwhm_nm: f64,
    pub repetition_rate_hz: f64,
    /// Detected pairs per second at the detection stage.
    pub pair_rate: f64,
    /// σ₊: intensity standard deviation of the sum detuning, rad/s.
    pub sum_bandwidth: f64,
    /// σ₋: intensity standard deviation of the difference detuning at fixed sum, rad/s.
    pub difference_bandwidth: f64,
    /// Slope of the difference-frequency center versus the sum detuning.
    #[serde(default)]
    pub ridge_skew: f64,
    pub distinguishability_factor: f64,
}

impl Default for PhotonPairSource {
    fn default() -> Self {
        Self {
            signal_nm: 1574.4,
            idler_nm: 1574.7,
            pump_center_nm: 787.0,
            pump_bandwidth_fwhm_nm: 25.0,
            repetition_rate_hz: 75e6,
            pair_rate: 4.07e6,
            sum_bandwidth: sum_bandwidth_from_pump(787.0, 25.0),
            difference_bandwidth: difference_bandwidth_for_dip_width(3.25e-12),
            ridge_skew: 0.0,
            distinguishability_factor: 0.6,
        }
    }
}

/// σ₊ of a pump with the given FWHM bandwidth (energy conservation).
pub fn sum_bandwidth_from_pump(pump_center_nm: f64, pump_fwhm_nm: f64) -> f64 {
    let lm = pump_center_nm * 1e-9;
    2.0 * PI * C * pump_fwhm_nm * 1e-9 / (lm * lm) / fwhm_per_sigma()
}

/// σ₋ whose HOM dip has the given FWHM (of the dip depth).
pub fn difference_bandwidth_for_dip_width(width_fwhm: f64) -> f64 {
    fwhm_per_sigma() / width_fwhm
}

impl PhotonPairSource {
    pub fn validate(&self) -> Result<(), BiphotonError> {
        let positive = [
            ("signal_nm", self.signal_nm),
            ("idler_nm", self.idler_nm),
            ("pump_center_nm", self.pump_center_nm),
            ("pump_bandwidth_fwhm_nm", self.pump_bandwidth_fwhm_nm),
            ("repetition_rate_hz", self.repetition_rate_hz),
            ("pair_rate", self.pair_rate),
            ("sum_bandwidth", self.sum_bandwidth),
            ("difference_bandwidth", self.difference_bandwidth),
        ];
        for (field, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(BiphotonError::InvalidSource { field, reason: format!("{v} must be > 0") });
            }
        }
        if !(0.0..=1.0).contains(&self.distinguishability_factor) {
            return Err(BiphotonError::InvalidSource {
                field: "distinguishability_factor",
                reason: format!("{} not in [0, 1]", self.distinguishability_factor),
            });
        }
        if !self.ridge_skew.is_finite() {
            return Err(BiphotonError::InvalidSource { field: "ridge_skew", reason: "not finite".into() });
        }
        let lhs = 1.0 / self.pump_center_nm;
        let rhs = 1.0 / self.signal_nm + 1.0 / self.idler_nm;
        if ((lhs - rhs) / lhs).abs() > 1e-3 {
            return Err(BiphotonError::InvalidSource {
                field: "pump_center_nm",
                reason: format!("energy conservation violated: 1/λp = {lhs:.6e}, 1/λs + 1/λi = {rhs:.6e}"),
            });
        }
        Ok(())
    }

    pub fn omega_signal(&self) -> f64 {
        angular_frequency(self.signal_nm)
    }

    pub fn omega_idler(&self) -> f64 {
        angular_frequency(self.idler_nm)
    }

    /// Mean of the two center frequencies, the common detuning origin.
    pub fn omega_center(&self) -> f64 {
        0.5 * (self.omega_signal() + self.omega_idler())
    }

    /// Wavelength of the common detuning origin, nm.
    pub fn center_nm(&self) -> f64 {
        fiber_model::wavelength_nm(self.omega_center())
    }

    /// Δ0 = ω_s − ω_i.
    pub fn center_difference(&self) -> f64 {
        self.omega_signal() - self.omega_idler()
    }

    /// Intensity standard deviation of the difference marginal.
    pub fn difference_marginal_sigma(&self) -> f64 {
        (self.difference_bandwidth.powi(2) + (self.ridge_skew * self.sum_bandwidth).powi(2)).sqrt()
    }
}

/// Grid shape for a JSA.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JsaGrid {
    pub sum_points: usize,
    pub difference_points: usize,
    pub sum_half_span: f64,
    pub difference_half_span: f64,
}

impl JsaGrid {
    /// Square grid spanning exactly ±6σ of each marginal (plus the center offset).
    pub fn covering(source: &PhotonPairSource, points: usize) -> Self {
        Self::with_points(source, points, points)
    }

    pub fn with_points(source: &PhotonPairSource, sum_points: usize, difference_points: usize) -> Self {
        Self {
            sum_points,
            difference_points,
            sum_half_span: 6.0 * source.sum_bandwidth,
            difference_half_span: source.center_difference().abs() + 6.0 * source.difference_marginal_sigma(),
        }
    }
}

/// Discretized two-photon spectral amplitude.
#[derive(Debug, Clone, PartialEq)]
pub struct JointSpectralAmplitude {
    sum_axis: Vec<f64>,
    difference_axis: Vec<f64>,
    /// Row-major, `[iu * n_w + iw]`.
    amplitude: Vec<Complex64>,
}

fn symmetric_axis(points: usize, half_span: f64) -> Vec<f64> {
    // cell-centered, so that axis[j] = −axis[n−1−j] exactly
    let step = 2.0 * half_span / points as f64;
    (0..points).map(|j| (j as f64 + 0.5 - points as f64 / 2.0) * step).collect()
}

impl JointSpectralAmplitude {
    pub fn sum_axis(&self) -> &[f64] {
        &self.sum_axis
    }

    pub fn difference_axis(&self) -> &[f64] {
        &self.difference_axis
    }

    pub fn amplitude(&self) -> &[Complex64] {
        &self.amplitude
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.sum_axis.len(), self.difference_axis.len())
    }

    pub fn sum_step(&self) -> f64 {
        self.sum_axis[1] - self.sum_axis[0]
    }

    pub fn difference_step(&self) -> f64 {
        self.difference_axis[1] - self.difference_axis[0]
    }

    /// Area element in (Ω_s, Ω_i) for one grid cell.
    pub fn cell_area(&self) -> f64 {
        0.5 * self.sum_step() * self.difference_step()
    }

    pub fn at(&self, iu: usize, iw: usize) -> Complex64 {
        self.amplitude[iu * self.difference_axis.len() + iw]
    }

    /// Copy with every amplitude multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.amplitude.iter_mut().for_each(|a| *a *= factor);
        out
    }

    /// Σ|f|²·dΩ_s·dΩ_i.
    pub fn norm(&self) -> f64 {
        self.amplitude.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.cell_area()
    }

    /// Signal and idler detunings of a grid point.
    pub fn detunings(&self, iu: usize, iw: usize) -> (f64, f64) {
        let u = self.sum_axis[iu];
        let w = self.difference_axis[iw];
        (0.5 * (u + w), 0.5 * (u - w))
    }

    /// Marginal |f|² density of the signal detuning, as (Ω_s, weight) samples.
    pub fn signal_marginal(&self) -> Vec<(f64, f64)> {
        let (nu, nw) = self.shape();
        let mut out = Vec::with_capacity(nu * nw);
        for iu in 0..nu {
            for iw in 0..nw {
                let (os, _) = self.detunings(iu, iw);
                out.push((os, self.at(iu, iw).norm_sqr() * self.cell_area()));
            }
        }
        out
    }

    /// CSV export: sum, difference, signal and idler detunings and the complex amplitude.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), BiphotonError> {
        writeln!(out, "sum_rad_s,difference_rad_s,signal_rad_s,idler_rad_s,re,im")?;
        let (nu, nw) = self.shape();
        for iu in 0..nu {
            for iw in 0..nw {
                let (os, oi) = self.detunings(iu, iw);
                let a = self.at(iu, iw);
                writeln!(
                    out,
                    "{:.11e},{:.11e},{:.11e},{:.11e},{:.11e},{:.11e}",
                    self.sum_axis[iu], self.difference_axis[iw], os, oi, a.re, a.im
                )?;
            }
        }
        Ok(())
    }
}

/// Square `grid_size × grid_size` Gaussian JSA covering ±6σ.
pub fn gaussian_jsa(source: &PhotonPairSource, grid_size: usize) -> Result<JointSpectralAmplitude, BiphotonError> {
    if grid_size < 64 {
        return Err(BiphotonError::GridTooSmall {
            axis: "sum",
            points: grid_size,
            half_span: 0.0,
            needed: 6.0 * source.sum_bandwidth,
        });
    }
    gaussian_jsa_on(source, JsaGrid::covering(source, grid_size))
}

/// Gaussian JSA on an explicit grid:
/// f ∝ exp(−u²/4σ₊²)·exp(−(w − Δ0 − κ·u)²/4σ₋²).
pub fn gaussian_jsa_on(source: &PhotonPairSource, grid: JsaGrid) -> Result<JointSpectralAmplitude, BiphotonError> {
    source.validate()?;
    let need_u = 6.0 * source.sum_bandwidth;
    let need_w = source.center_difference().abs() + 6.0 * source.difference_marginal_sigma();
    if grid.sum_points < 2 || grid.sum_half_span < need_u * (1.0 - 1e-12) {
        return Err(BiphotonError::GridTooSmall {
            axis: "sum",
            points: grid.sum_points,
            half_span: grid.sum_half_span,
            needed: need_u,
        });
    }
    if grid.difference_points < 2 || grid.difference_half_span < need_w * (1.0 - 1e-12) {
        return Err(BiphotonError::GridTooSmall {
            axis: "difference",
            points: grid.difference_points,
            half_span: grid.difference_half_span,
            needed: need_w,
        });
    }
    let sum_axis = symmetric_axis(grid.sum_points, grid.sum_half_span);
    let difference_axis = symmetric_axis(grid.difference_points, grid.difference_half_span);
    let sp = source.sum_bandwidth;
    let sm = source.difference_bandwidth;
    let d0 = source.center_difference();
    let kappa = source.ridge_skew;
    let mut amplitude = Vec::with_capacity(sum_axis.len() * difference_axis.len());
    for &u in &sum_axis {
        let pu = (-u * u / (4.0 * sp * sp)).exp();
        let wc = d0 + kappa * u;
        for &w in &difference_axis {
            let x = w - wc;
            amplitude.push(Complex64::new(pu * (-x * x / (4.0 * sm * sm)).exp(), 0.0));
        }
    }
    let mut jsa = JointSpectralAmplitude { sum_axis, difference_axis, amplitude };
    let scale = 1.0 / jsa.norm().sqrt();
    jsa.amplitude.iter_mut().for_each(|a| *a *= scale);
    Ok(jsa)
}

/// Multiply by exp(i[φ_s(Ω_s) + φ_i(Ω_i)]).
pub fn apply_dispersion<FS, FI>(
    jsa: &JointSpectralAmplitude,
    phase_signal: FS,
    phase_idler: FI,
) -> Result<JointSpectralAmplitude, BiphotonError>
where
    FS: Fn(f64) -> f64,
    FI: Fn(f64) -> f64,
{
    let (nu, nw) = jsa.shape();
    let mut out = jsa.clone();
    for iu in 0..nu {
        for iw in 0..nw {
            let (os, oi) = jsa.detunings(iu, iw);
            let phi = phase_signal(os) + phase_idler(oi);
            if !phi.is_finite() {
                return Err(BiphotonError::NonFinitePhase { omega_s: os, omega_i: oi });
            }
            out.amplitude[iu * nw + iw] *= Complex64::from_polar(1.0, phi);
        }
    }
    Ok(out)
}

/// Quadratic spectral phase φ(Ω) = linear·Ω + quadratic·Ω².
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct QuadraticPhase {
    /// Σ k′·l, s.
    pub linear: f64,
    /// ½·Σ k″·l, s².
    pub quadratic: f64,
}

impl QuadraticPhase {
    pub fn at(&self, omega: f64) -> f64 {
        self.linear * omega + self.quadratic * omega * omega
    }

    pub fn as_fn(self) -> impl Fn(f64) -> f64 {
        move |omega| self.at(omega)
    }

    pub fn plus(self, other: QuadraticPhase) -> QuadraticPhase {
        QuadraticPhase { linear: self.linear + other.linear, quadratic: self.quadratic + other.quadratic }
    }

    pub fn negated(self) -> QuadraticPhase {
        QuadraticPhase { linear: -self.linear, quadratic: -self.quadratic }
    }
}

/// Phase of a link expanded about `lambda_nm`, segments summed, constant dropped.
pub fn fiber_phase(link: &FiberLink, lambda_nm: f64, temp_c: f64) -> Result<QuadraticPhase, BiphotonError> {
    let model = link.dispersion();
    let mut phase = QuadraticPhase::default();
    for seg in link.segments() {
        let t = temp_c + seg.temperature_offset;
        let l = seg.length * model.length_scale(t);
        phase.linear += fiber_model::group_delay_coefficient(model, lambda_nm, t)? * l;
        phase.quadratic += 0.5 * fiber_model::gvd_coefficient(model, lambda_nm, t)? * l;
    }
    Ok(phase)
}

/// JSA after both arms, each expanded about the common center wavelength.
pub fn disperse_through(
    jsa: &JointSpectralAmplitude,
    source: &PhotonPairSource,
    link_signal: Option<&FiberLink>,
    link_idler: Option<&FiberLink>,
    temp_c: f64,
) -> Result<JointSpectralAmplitude, BiphotonError> {
    let center = source.center_nm();
    let ps = match link_signal {
        Some(l) => fiber_phase(l, center, temp_c)?,
        None => QuadraticPhase::default(),
    };
    let pi = match link_idler {
        Some(l) => fiber_phase(l, center, temp_c)?,
        None => QuadraticPhase::default(),
    };
    apply_dispersion(jsa, ps.as_fn(), pi.as_fn())
}
