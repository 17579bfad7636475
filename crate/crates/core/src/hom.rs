//! Hong-Ou-Mandel coincidence dip from the exchange overlap of the JSA.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use thiserror::Error;

use crate::biphoton::{fwhm_per_sigma, JointSpectralAmplitude};
use crate::rng::seeded_rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HomError {
    #[error("JSA norm {norm} differs from 1 by more than 1e-6")]
    NotNormalized { norm: f64 },
    #[error("dip not captured: minimum at the edge of the delay range")]
    DipNotCaptured,
    #[error("profile has no dip; width undefined")]
    FlatProfile,
    #[error("delay list must be non-empty, finite and strictly increasing")]
    InvalidDelays,
    #[error("distinguishability {0} not in [0, 1]")]
    InvalidDistinguishability(f64),
}

/// Coincidence probability versus relative delay.
#[derive(Debug, Clone, PartialEq)]
pub struct HomProfile {
    pub delays: Vec<f64>,
    pub coincidence_probability: Vec<f64>,
    /// Level reached far from the dip (½ for a lossless 50/50 splitter).
    pub baseline: f64,
}

/// Anything that gives a coincidence probability at a delay.
pub trait DipShape {
    fn probability(&self, delay: f64) -> f64;
    fn baseline(&self) -> f64;
}

impl DipShape for HomProfile {
    /// Linear interpolation; the baseline outside the sampled range.
    fn probability(&self, delay: f64) -> f64 {
        let d = &self.delays;
        if delay <= d[0] || delay >= d[d.len() - 1] {
            return self.baseline;
        }
        let k = d.partition_point(|&x| x <= delay);
        let (x0, x1) = (d[k - 1], d[k]);
        let (y0, y1) = (self.coincidence_probability[k - 1], self.coincidence_probability[k]);
        y0 + (y1 - y0) * (delay - x0) / (x1 - x0)
    }

    fn baseline(&self) -> f64 {
        self.baseline
    }
}

/// Closed-form Gaussian dip.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianDip {
    pub visibility: f64,
    pub width_fwhm: f64,
    pub center: f64,
}

impl GaussianDip {
    /// σ₋ such that the dip is exp(−σ₋²δ²/2).
    pub fn sigma_minus(&self) -> f64 {
        fwhm_per_sigma() / self.width_fwhm
    }

    pub fn profile(&self, delays: &[f64]) -> HomProfile {
        HomProfile {
            delays: delays.to_vec(),
            coincidence_probability: delays.iter().map(|&d| self.probability(d)).collect(),
            baseline: 0.5,
        }
    }
}

impl DipShape for GaussianDip {
    fn probability(&self, delay: f64) -> f64 {
        let s = self.sigma_minus();
        let x = delay - self.center;
        0.5 * (1.0 - self.visibility * (-0.5 * s * s * x * x).exp())
    }

    fn baseline(&self) -> f64 {
        0.5
    }
}

/// Uniform delay grid of `points` samples over `center ± half_span`.
pub fn delay_grid(center: f64, half_span: f64, points: usize) -> Vec<f64> {
    let step = 2.0 * half_span / (points - 1) as f64;
    (0..points).map(|k| center - half_span + step * k as f64).collect()
}

/// Exchange-overlap kernel K(w) = Σ_u f(u, w)·conj(f(u, −w))·dΩ_s dΩ_i.
fn exchange_kernel(jsa: &JointSpectralAmplitude) -> Vec<Complex64> {
    let (nu, nw) = jsa.shape();
    let area = jsa.cell_area();
    (0..nw)
        .map(|iw| {
            let mut acc = Complex64::new(0.0, 0.0);
            for iu in 0..nu {
                acc += jsa.at(iu, iw) * jsa.at(iu, nw - 1 - iw).conj();
            }
            acc * area
        })
        .collect()
}

/// P(δ) = ½[1 − D·Re ∫∫ f(Ω_s,Ω_i) f*(Ω_i,Ω_s) e^{−i(Ω_s−Ω_i)δ}].
pub fn hom_profile(
    jsa: &JointSpectralAmplitude,
    delays: &[f64],
    distinguishability: f64,
) -> Result<HomProfile, HomError> {
    let norm = jsa.norm();
    if (norm - 1.0).abs() > 1e-6 {
        return Err(HomError::NotNormalized { norm });
    }
    if !(0.0..=1.0).contains(&distinguishability) {
        return Err(HomError::InvalidDistinguishability(distinguishability));
    }
    if delays.is_empty() || delays.iter().any(|d| !d.is_finite()) || delays.windows(2).any(|p| p[1] <= p[0]) {
        return Err(HomError::InvalidDelays);
    }
    let kernel = exchange_kernel(jsa);
    let w = jsa.difference_axis();
    let probability = delays
        .par_iter()
        .map(|&delta| {
            let overlap: f64 =
                kernel.iter().zip(w).map(|(k, &wj)| (k * Complex64::from_polar(1.0, -wj * delta)).re).sum();
            0.5 * (1.0 - distinguishability * overlap)
        })
        .collect();
    Ok(HomProfile { delays: delays.to_vec(), coincidence_probability: probability, baseline: 0.5 })
}

/// Visibility of the undiluted overlap at δ (distinguishability 1).
pub fn structural_visibility(jsa: &JointSpectralAmplitude, delay: f64) -> Result<f64, HomError> {
    let p = hom_profile(jsa, &[delay], 1.0)?;
    Ok(1.0 - 2.0 * p.coincidence_probability[0])
}

/// Distinguishability factor giving `target` visibility for this JSA.
pub fn calibrate_distinguishability(jsa: &JointSpectralAmplitude, target: f64) -> Result<f64, HomError> {
    let v = structural_visibility(jsa, 0.0)?;
    let d = target / v;
    if !(0.0..=1.0).contains(&d) {
        return Err(HomError::InvalidDistinguishability(d));
    }
    Ok(d)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DipMetrics {
    pub visibility: f64,
    pub width_fwhm: f64,
    pub minimum_delay: f64,
    pub minimum_probability: f64,
}

/// Vertex of the parabola through three points.
fn parabola_vertex(x: [f64; 3], y: [f64; 3]) -> (f64, f64) {
    let d = (x[0] - x[1]) * (x[0] - x[2]) * (x[1] - x[2]);
    let a = (x[2] * (y[1] - y[0]) + x[1] * (y[0] - y[2]) + x[0] * (y[2] - y[1])) / d;
    let b = (x[2] * x[2] * (y[0] - y[1]) + x[1] * x[1] * (y[2] - y[0]) + x[0] * x[0] * (y[1] - y[2])) / d;
    let c =
        (x[1] * x[2] * (x[1] - x[2]) * y[0] + x[2] * x[0] * (x[2] - x[0]) * y[1] + x[0] * x[1] * (x[0] - x[1]) * y[2])
            / d;
    if a <= 0.0 {
        return (x[1], y[1]);
    }
    let xv = -b / (2.0 * a);
    (xv, c - b * b / (4.0 * a))
}

pub fn dip_metrics(profile: &HomProfile) -> Result<DipMetrics, HomError> {
    let p = &profile.coincidence_probability;
    let d = &profile.delays;
    if p.len() < 3 {
        return Err(HomError::InvalidDelays);
    }
    let (imin, &pmin) = p.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).expect("non-empty");
    let base = profile.baseline;
    if base - pmin <= 1e-12 * base {
        return Err(HomError::FlatProfile);
    }
    if imin == 0 || imin == p.len() - 1 {
        return Err(HomError::DipNotCaptured);
    }
    let (xv, yv) = parabola_vertex([d[imin - 1], d[imin], d[imin + 1]], [p[imin - 1], p[imin], p[imin + 1]]);
    let minimum = yv.min(pmin);
    let half = base - 0.5 * (base - minimum);
    let crossing = |range: &mut dyn Iterator<Item = usize>, step: isize| -> Option<f64> {
        for k in range {
            let j = (k as isize - step) as usize;
            if p[k] >= half {
                let t = (half - p[j]) / (p[k] - p[j]);
                return Some(d[j] + t * (d[k] - d[j]));
            }
        }
        None
    };
    let left = crossing(&mut (0..imin).rev(), -1).ok_or(HomError::DipNotCaptured)?;
    let right = crossing(&mut (imin + 1..p.len()), 1).ok_or(HomError::DipNotCaptured)?;
    Ok(DipMetrics {
        visibility: (base - minimum) / base,
        width_fwhm: right - left,
        minimum_delay: xv,
        minimum_probability: minimum,
    })
}

/// Visibility including an accidental floor, `accidental_fraction` = accidentals / baseline.
pub fn raw_visibility(corrected: f64, accidental_fraction: f64) -> f64 {
    corrected / (1.0 + accidental_fraction)
}

/// Poisson counts with mean pair_rate·dwell·P(δ)/baseline at each delay.
pub fn sample_dip_counts(profile: &HomProfile, pair_rate: f64, dwell: f64, seed: u64) -> Vec<u64> {
    let mut rng = seeded_rng(seed);
    profile
        .coincidence_probability
        .iter()
        .map(|&p| poisson(&mut rng, pair_rate * dwell * p / profile.baseline))
        .collect()
}

/// Poisson draw that accepts a zero mean.
pub fn poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map(|d| d.sample(rng) as u64).unwrap_or(0)
}
