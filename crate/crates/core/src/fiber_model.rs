//! Chromatic dispersion and thermo-optic drift of single-mode fiber.
//!
//! Wavelengths are passed in nm, temperatures in °C, lengths in m, times in s.
//! The index model is a temperature-dependent Sellmeier expression plus an
//! effective-index correction polynomial, loaded from a TOML data file.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::biphoton::PhotonPairSource;

/// Speed of light in vacuum, m/s.
pub const C: f64 = 299_792_458.0;

const BUNDLED_MODEL: &str = include_str!("../data/fused_silica_smf.toml");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FiberError {
    #[error("{parameter} = {value} outside model domain [{min}, {max}]")]
    Domain { parameter: &'static str, value: f64, min: f64, max: f64 },
    #[error("invalid segment: {field} = {value}")]
    InvalidSegment { field: &'static str, value: f64 },
    #[error("a fiber link needs at least one segment")]
    EmptyLink,
    #[error("segment length list is empty")]
    EmptyLengths,
    #[error("dispersion data: {0}")]
    Data(String),
}

/// One Sellmeier resonance with its linear temperature dependence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SellmeierTerm {
    pub amplitude: f64,
    pub resonance_um: f64,
    pub d_amplitude_dt: f64,
    pub d_resonance_dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Validity {
    pub wavelength_nm: [f64; 2],
    pub temperature_c: [f64; 2],
}

/// Temperature-dependent refractive-index model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DispersionModel {
    pub name: String,
    pub reference_temperature_c: f64,
    pub correction_center_um: f64,
    /// Polynomial coefficients in powers of (λ − center), λ in µm.
    pub correction: Vec<f64>,
    /// Linear length expansion per °C (0 disables the correction).
    #[serde(default)]
    pub thermal_expansion_per_c: f64,
    pub validity: Validity,
    pub terms: Vec<SellmeierTerm>,
}

/// Index and its first two wavelength derivatives (per µm).
#[derive(Debug, Clone, Copy)]
struct IndexDerivatives {
    n: f64,
    d1: f64,
    d2: f64,
}

impl DispersionModel {
    /// The bundled fused-silica SMF model.
    pub fn bundled() -> Self {
        Self::from_toml_str(BUNDLED_MODEL).expect("bundled dispersion model parses")
    }

    pub fn from_toml_str(text: &str) -> Result<Self, FiberError> {
        let model: Self = toml::from_str(text).map_err(|e| FiberError::Data(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, FiberError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| FiberError::Data(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_toml_str(&text)
    }

    fn validate(&self) -> Result<(), FiberError> {
        if self.terms.is_empty() {
            return Err(FiberError::Data("no Sellmeier terms".into()));
        }
        let [lo, hi] = self.validity.wavelength_nm;
        if !(lo > 0.0 && hi > lo) {
            return Err(FiberError::Data("bad wavelength validity range".into()));
        }
        let [tlo, thi] = self.validity.temperature_c;
        if !(thi > tlo) {
            return Err(FiberError::Data("bad temperature validity range".into()));
        }
        Ok(())
    }

    fn check_domain(&self, lambda_nm: f64, temp_c: f64) -> Result<(), FiberError> {
        let [lo, hi] = self.validity.wavelength_nm;
        if !(lambda_nm >= lo && lambda_nm <= hi) {
            return Err(FiberError::Domain { parameter: "wavelength_nm", value: lambda_nm, min: lo, max: hi });
        }
        let [tlo, thi] = self.validity.temperature_c;
        if !(temp_c >= tlo && temp_c <= thi) {
            return Err(FiberError::Domain { parameter: "temperature_c", value: temp_c, min: tlo, max: thi });
        }
        Ok(())
    }

    /// Closed-form n, dn/dλ, d²n/dλ² with λ in µm. No domain check.
    fn derivatives(&self, lambda_um: f64, temp_c: f64) -> IndexDerivatives {
        let dt = temp_c - self.reference_temperature_c;
        let l2 = lambda_um * lambda_um;
        // S = 1 + Σ A (1 + L² h), h = 1/(λ² − L²)
        let (mut s, mut s1, mut s2) = (1.0, 0.0, 0.0);
        for term in &self.terms {
            let a = term.amplitude + term.d_amplitude_dt * dt;
            let r = term.resonance_um + term.d_resonance_dt * dt;
            let r2 = r * r;
            let v = l2 - r2;
            let h = 1.0 / v;
            let h1 = -2.0 * lambda_um * h * h;
            let h2 = -2.0 * h * h + 8.0 * l2 * h * h * h;
            s += a * (1.0 + r2 * h);
            s1 += a * r2 * h1;
            s2 += a * r2 * h2;
        }
        let root = s.sqrt();
        let mut n = root;
        let mut d1 = s1 / (2.0 * root);
        let mut d2 = s2 / (2.0 * root) - s1 * s1 / (4.0 * s * root);

        let x = lambda_um - self.correction_center_um;
        let mut power = 1.0;
        for (k, q) in self.correction.iter().enumerate() {
            n += q * power;
            if k >= 1 {
                d1 += k as f64 * q * x.powi(k as i32 - 1);
            }
            if k >= 2 {
                d2 += (k * (k - 1)) as f64 * q * x.powi(k as i32 - 2);
            }
            power *= x;
        }
        IndexDerivatives { n, d1, d2 }
    }

    /// Length scale factor from thermal expansion at `temp_c`.
    pub fn length_scale(&self, temp_c: f64) -> f64 {
        1.0 + self.thermal_expansion_per_c * (temp_c - self.reference_temperature_c)
    }
}

/// Angular frequency (rad/s) of a vacuum wavelength in nm.
pub fn angular_frequency(lambda_nm: f64) -> f64 {
    2.0 * PI * C / (lambda_nm * 1e-9)
}

/// Vacuum wavelength (nm) of an angular frequency.
pub fn wavelength_nm(omega: f64) -> f64 {
    2.0 * PI * C / omega * 1e9
}

pub fn refractive_index(model: &DispersionModel, lambda_nm: f64, temp_c: f64) -> Result<f64, FiberError> {
    model.check_domain(lambda_nm, temp_c)?;
    Ok(model.derivatives(lambda_nm * 1e-3, temp_c).n)
}

/// k′ = dk/dω = (n − λ dn/dλ)/c, in s/m.
pub fn group_delay_coefficient(model: &DispersionModel, lambda_nm: f64, temp_c: f64) -> Result<f64, FiberError> {
    model.check_domain(lambda_nm, temp_c)?;
    let lu = lambda_nm * 1e-3;
    let d = model.derivatives(lu, temp_c);
    Ok((d.n - lu * d.d1) / C)
}

/// k″ = d²k/dω² = λ³/(2πc²)·d²n/dλ², in s²/m.
pub fn gvd_coefficient(model: &DispersionModel, lambda_nm: f64, temp_c: f64) -> Result<f64, FiberError> {
    model.check_domain(lambda_nm, temp_c)?;
    let lu = lambda_nm * 1e-3;
    let d = model.derivatives(lu, temp_c);
    let lm = lambda_nm * 1e-9;
    Ok(lm.powi(3) / (2.0 * PI * C * C) * d.d2 * 1e12)
}

/// Dispersion parameter D = −2πc·k″/λ², in ps/(nm·km).
pub fn dispersion_parameter(model: &DispersionModel, lambda_nm: f64, temp_c: f64) -> Result<f64, FiberError> {
    let k2 = gvd_coefficient(model, lambda_nm, temp_c)?;
    let lm = lambda_nm * 1e-9;
    Ok(-2.0 * PI * C * k2 / (lm * lm) * 1e6)
}

/// One spool or patch of fiber.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberSegment {
    /// Length in m.
    pub length: f64,
    /// Connector or splice loss in dB.
    #[serde(default)]
    pub excess_loss: f64,
    /// Attenuation in dB/km.
    #[serde(default = "default_attenuation")]
    pub attenuation: f64,
    /// Offset from the ambient temperature process, °C.
    #[serde(default)]
    pub temperature_offset: f64,
}

fn default_attenuation() -> f64 {
    0.2
}

impl FiberSegment {
    pub fn new(length: f64) -> Result<Self, FiberError> {
        let seg = Self { length, excess_loss: 0.0, attenuation: default_attenuation(), temperature_offset: 0.0 };
        seg.validate()?;
        Ok(seg)
    }

    pub fn with_loss(mut self, attenuation: f64, excess_loss: f64) -> Result<Self, FiberError> {
        self.attenuation = attenuation;
        self.excess_loss = excess_loss;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), FiberError> {
        if !(self.length > 0.0 && self.length.is_finite()) {
            return Err(FiberError::InvalidSegment { field: "length", value: self.length });
        }
        if !(self.attenuation >= 0.0 && self.attenuation.is_finite()) {
            return Err(FiberError::InvalidSegment { field: "attenuation", value: self.attenuation });
        }
        if !(self.excess_loss >= 0.0 && self.excess_loss.is_finite()) {
            return Err(FiberError::InvalidSegment { field: "excess_loss", value: self.excess_loss });
        }
        if !self.temperature_offset.is_finite() {
            return Err(FiberError::InvalidSegment { field: "temperature_offset", value: self.temperature_offset });
        }
        Ok(())
    }
}

/// Ordered segments sharing one dispersion model.
#[derive(Debug, Clone, PartialEq)]
pub struct FiberLink {
    segments: Vec<FiberSegment>,
    dispersion: Arc<DispersionModel>,
}

impl FiberLink {
    pub fn new(segments: Vec<FiberSegment>, dispersion: Arc<DispersionModel>) -> Result<Self, FiberError> {
        if segments.is_empty() {
            return Err(FiberError::EmptyLink);
        }
        for s in &segments {
            s.validate()?;
        }
        Ok(Self { segments, dispersion })
    }

    /// Segments of the given lengths (m) with default attenuation and no connectors.
    pub fn from_lengths(lengths: &[f64], dispersion: Arc<DispersionModel>) -> Result<Self, FiberError> {
        let segments = lengths.iter().map(|&l| FiberSegment::new(l)).collect::<Result<Vec<_>, _>>()?;
        Self::new(segments, dispersion)
    }

    pub fn segments(&self) -> &[FiberSegment] {
        &self.segments
    }

    pub fn dispersion(&self) -> &DispersionModel {
        &self.dispersion
    }

    pub fn dispersion_arc(&self) -> &Arc<DispersionModel> {
        &self.dispersion
    }

    pub fn total_length(&self) -> f64 {
        self.segments.iter().map(|s| s.length).sum()
    }

    pub fn lengths(&self) -> Vec<f64> {
        self.segments.iter().map(|s| s.length).collect()
    }

    /// Same segments traversed twice (out and back through the same spools).
    pub fn concatenated(&self, other: &FiberLink) -> FiberLink {
        let mut segments = self.segments.clone();
        segments.extend(other.segments.iter().cloned());
        FiberLink { segments, dispersion: self.dispersion.clone() }
    }

    /// Every segment length multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<FiberLink, FiberError> {
        let segments = self.segments.iter().map(|s| FiberSegment { length: s.length * factor, ..s.clone() }).collect();
        FiberLink::new(segments, self.dispersion.clone())
    }
}

/// Both terms of the path-delay difference, s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathDelay {
    /// (k′_i − k′_s)·l: the group-delay term.
    pub group_delay_term: f64,
    /// −(k″_i·ω_i − k″_s·ω_s)·l.
    pub gvd_term: f64,
}

impl PathDelay {
    pub fn total(&self) -> f64 {
        self.group_delay_term + self.gvd_term
    }
}

fn arm_sums(link: &FiberLink, lambda_nm: f64, temp_c: f64) -> Result<(f64, f64), FiberError> {
    let model = link.dispersion();
    let omega = angular_frequency(lambda_nm);
    let (mut k1l, mut k2wl) = (0.0, 0.0);
    for seg in link.segments() {
        let t = temp_c + seg.temperature_offset;
        let l = seg.length * model.length_scale(t);
        k1l += group_delay_coefficient(model, lambda_nm, t)? * l;
        k2wl += gvd_coefficient(model, lambda_nm, t)? * omega * l;
    }
    Ok((k1l, k2wl))
}

/// Path-delay difference between the idler and signal arms at ambient `temp_c`.
///
/// Positive values mean the idler arrives later.
pub fn path_delay_difference(
    link_signal: &FiberLink,
    link_idler: &FiberLink,
    source: &PhotonPairSource,
    temp_c: f64,
) -> Result<PathDelay, FiberError> {
    let (ks, ks2) = arm_sums(link_signal, source.signal_nm, temp_c)?;
    let (ki, ki2) = arm_sums(link_idler, source.idler_nm, temp_c)?;
    Ok(PathDelay { group_delay_term: ki - ks, gvd_term: -(ki2 - ks2) })
}

/// Per-arm group delay Σ k′(λ_arm, T_k)·l_k, s.
pub fn link_delay_at(link: &FiberLink, lambda_nm: f64, temp_c: f64) -> Result<f64, FiberError> {
    Ok(arm_sums(link, lambda_nm, temp_c)?.0)
}

/// Central difference in T with one Richardson step.
fn richardson_dt<F>(f: F, temp_c: f64, h: f64) -> Result<f64, FiberError>
where
    F: Fn(f64) -> Result<f64, FiberError>,
{
    let d = |h: f64| -> Result<f64, FiberError> { Ok((f(temp_c + h)? - f(temp_c - h)?) / (2.0 * h)) };
    let coarse = d(h)?;
    let fine = d(h / 2.0)?;
    Ok((4.0 * fine - coarse) / 3.0)
}

/// Temperature step used for thermo-optic derivatives, °C.
pub const TEMPERATURE_STEP: f64 = 0.01;

/// Temperature derivatives of k′ and k″·ω at one wavelength, per m per °C.
pub fn thermal_terms(model: &DispersionModel, lambda_nm: f64, temp_c: f64) -> Result<[f64; 2], FiberError> {
    let omega = angular_frequency(lambda_nm);
    let dk1 = richardson_dt(|t| group_delay_coefficient(model, lambda_nm, t), temp_c, TEMPERATURE_STEP)?;
    let dk2 = richardson_dt(|t| Ok(gvd_coefficient(model, lambda_nm, t)? * omega), temp_c, TEMPERATURE_STEP)?;
    Ok([dk1, dk2])
}

/// Sensitivity factor B, s/(m·°C): RSS of the first temperature derivatives
/// of k′_i, k′_s, k″_i·ω_i and k″_s·ω_s.
pub fn temperature_sensitivity_b(
    model: &DispersionModel,
    source: &PhotonPairSource,
    temp_c: f64,
) -> Result<f64, FiberError> {
    let s = thermal_terms(model, source.signal_nm, temp_c)?;
    let i = thermal_terms(model, source.idler_nm, temp_c)?;
    Ok((s[0] * s[0] + s[1] * s[1] + i[0] * i[0] + i[1] * i[1]).sqrt())
}

/// Drift coefficient of a link pair, s/°C, assuming each segment of each arm
/// contributes independently. Equals B·sqrt(Σ l_k²) for identical arms.
pub fn differential_drift_coefficient(
    link_signal: &FiberLink,
    link_idler: &FiberLink,
    source: &PhotonPairSource,
    temp_c: f64,
) -> Result<f64, FiberError> {
    let arm = |link: &FiberLink, lambda: f64| -> Result<f64, FiberError> {
        let mut acc = 0.0;
        for seg in link.segments() {
            let [a, b] = thermal_terms(link.dispersion(), lambda, temp_c + seg.temperature_offset)?;
            acc += seg.length * seg.length * (a * a + b * b);
        }
        Ok(acc)
    };
    Ok((arm(link_signal, source.signal_nm)? + arm(link_idler, source.idler_nm)?).sqrt())
}

/// Drift of one unsegmented fiber: B·l·ΔT.
pub fn drift_single(b: f64, length: f64, delta_t: f64) -> f64 {
    b * length * delta_t
}

/// Drift of a segmented fiber: B·sqrt(Σ l_k²)·ΔT.
pub fn drift_segmented(b: f64, lengths: &[f64], delta_t: f64) -> Result<f64, FiberError> {
    if lengths.is_empty() {
        return Err(FiberError::EmptyLengths);
    }
    if let Some(&bad) = lengths.iter().find(|&&l| !(l > 0.0)) {
        return Err(FiberError::InvalidSegment { field: "length", value: bad });
    }
    Ok(b * lengths.iter().map(|l| l * l).sum::<f64>().sqrt() * delta_t)
}

/// Total loss in dB: Σ (attenuation·length + excess loss).
pub fn link_loss(link: &FiberLink) -> f64 {
    link.segments().iter().map(|s| s.attenuation * s.length * 1e-3 + s.excess_loss).sum()
}
