//! Closed-loop arm balancing and out-of-loop offset measurement.
//!
//! The imbalance `x = d − s` is the arm delay change `d` since calibration
//! minus the delay-line setting `s`. The controller probes the HOM dip at
//! `x ± p`, inverts the dither error and moves the delay line once per update.

use std::f64::consts::PI;
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::biphoton::PhotonPairSource;
use crate::detection::{
    estimate_offset, fit_gaussian, sample_epoch_histogram, ArrivalDensity, ClockModel, DensitySampler, EpochSampling,
    FitOptions,
};
use crate::fiber_model::{differential_drift_coefficient, link_delay_at, FiberError, FiberLink};
use crate::hom::{poisson, DipShape, GaussianDip};
use crate::rng::{child_seed, component_rng, seeded_rng};
use crate::timing_stats::{OffsetSeries, StatsError};

#[derive(Debug, Error)]
pub enum SyncError {
    #[error("invalid {field}: {reason}")]
    InvalidParameter { field: &'static str, reason: String },
    #[error(transparent)]
    Fiber(#[from] FiberError),
    #[error("offset series: {0}")]
    Series(#[from] StatsError),
}

/// Ambient temperature: mean + amplitude·sin(2πt/period) + white noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemperatureProcess {
    pub mean: f64,
    pub amplitude: f64,
    pub period: f64,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for TemperatureProcess {
    fn default() -> Self {
        Self { mean: 22.0, amplitude: 0.25, period: 3600.0, noise_sigma: 0.0, seed: 0 }
    }
}

impl TemperatureProcess {
    pub fn validate(&self) -> Result<(), SyncError> {
        if !(self.amplitude >= 0.0) {
            return Err(SyncError::InvalidParameter { field: "amplitude", reason: "must be ≥ 0".into() });
        }
        if !(self.period > 0.0) {
            return Err(SyncError::InvalidParameter { field: "period", reason: "must be > 0".into() });
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(SyncError::InvalidParameter { field: "noise_sigma", reason: "must be ≥ 0".into() });
        }
        Ok(())
    }

    /// The noise sample is a pure function of (seed, t).
    pub fn temperature_at(&self, t: f64) -> f64 {
        let base = self.mean + self.amplitude * (2.0 * PI * t / self.period).sin();
        if self.noise_sigma == 0.0 {
            return base;
        }
        let mut rng = seeded_rng(child_seed(self.seed, &format!("temperature/{}", t.to_bits())));
        base + self.noise_sigma * crate::detection::standard_normal(&mut rng)
    }
}

/// Delay line with a quantized setting, stored as an integer step count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayActuator {
    /// Full travel, centered on zero, s.
    pub range: f64,
    pub resolution: f64,
    steps: i64,
}

impl DelayActuator {
    pub fn new(range: f64, resolution: f64) -> Result<Self, SyncError> {
        if !(resolution > 0.0) {
            return Err(SyncError::InvalidParameter { field: "resolution", reason: "must be > 0".into() });
        }
        if !(range > 2.0 * resolution) {
            return Err(SyncError::InvalidParameter {
                field: "range",
                reason: "must exceed two resolution steps".into(),
            });
        }
        Ok(Self { range, resolution, steps: 0 })
    }

    pub fn steps(&self) -> i64 {
        self.steps
    }

    pub fn setting(&self) -> f64 {
        self.steps as f64 * self.resolution
    }

    fn max_steps(&self) -> i64 {
        (0.5 * self.range / self.resolution + 1e-9).floor() as i64
    }

    /// Move to the nearest lattice point inside the range; returns false if clamped.
    pub fn set(&mut self, target: f64) -> bool {
        let want = (target / self.resolution).round();
        let max = self.max_steps();
        let clamped = want.clamp(-(max as f64), max as f64) as i64;
        self.steps = clamped;
        want.abs() <= max as f64
    }
}

/// Two-point dither controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LockController {
    /// Probes sit at ±probe_offset around the current setting, s.
    pub probe_offset: f64,
    pub dwell_per_probe: f64,
    pub gain: f64,
    pub update_period: f64,
    /// Lock is lost when |x| exceeds this at a probe time, s.
    pub capture_range: f64,
    /// Hold when the dip signal is below this many Poisson σ.
    #[serde(default = "default_hold_sigmas")]
    pub hold_sigmas: f64,
}

fn default_hold_sigmas() -> f64 {
    3.0
}

impl Default for LockController {
    fn default() -> Self {
        Self {
            probe_offset: 0.69e-12,
            dwell_per_probe: 10.0,
            gain: 1.0,
            update_period: 20.0,
            capture_range: 6.5e-12,
            hold_sigmas: 3.0,
        }
    }
}

impl LockController {
    pub fn validate(&self) -> Result<(), SyncError> {
        if !(self.dwell_per_probe > 0.0) {
            return Err(SyncError::InvalidParameter { field: "dwell_per_probe", reason: "must be > 0".into() });
        }
        if !(self.update_period >= 2.0 * self.dwell_per_probe) {
            return Err(SyncError::InvalidParameter {
                field: "update_period",
                reason: "must be ≥ 2·dwell_per_probe".into(),
            });
        }
        if !(self.probe_offset > 0.0) {
            return Err(SyncError::InvalidParameter { field: "probe_offset", reason: "must be > 0".into() });
        }
        if !(self.gain > 0.0 && self.gain <= 2.0) {
            return Err(SyncError::InvalidParameter { field: "gain", reason: "must be in (0, 2]".into() });
        }
        if !(self.capture_range > 0.0) {
            return Err(SyncError::InvalidParameter { field: "capture_range", reason: "must be > 0".into() });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LockStepOutcome {
    /// Counts at x + p and x − p.
    pub counts_plus: f64,
    pub counts_minus: f64,
    /// Estimated imbalance before the correction, s.
    pub estimate: f64,
    /// Change applied to the imbalance (−Δsetting), s.
    pub correction: f64,
    pub held: bool,
}

/// One probe-and-correct cycle. `imbalance` is the true x at probe time;
/// `hom_rate` the baseline coincidence rate. With `rng = None` the expected
/// counts are used.
pub fn lock_step(
    controller: &LockController,
    dip: &GaussianDip,
    actuator: &mut DelayActuator,
    imbalance: f64,
    hom_rate: f64,
    rng: Option<&mut ChaCha8Rng>,
) -> LockStepOutcome {
    let p = controller.probe_offset;
    let background = hom_rate * controller.dwell_per_probe;
    let mean = |x: f64| 2.0 * dip.probability(x) * background;
    let (cp, cm) = match rng {
        Some(r) => (poisson(r, mean(imbalance + p)) as f64, poisson(r, mean(imbalance - p)) as f64),
        None => (mean(imbalance + p), mean(imbalance - p)),
    };
    let den = cp + cm - 2.0 * background;
    let held = den.abs() < controller.hold_sigmas * (cp + cm).max(1.0).sqrt();
    let estimate = if held {
        0.0
    } else {
        let sigma_minus = dip.sigma_minus();
        let e = ((cp - cm) / den).clamp(-1.0 + 1e-12, 1.0 - 1e-12);
        let scale = 1.0 / (p * sigma_minus * sigma_minus);
        ((-e).atanh() * scale).clamp(-controller.capture_range, controller.capture_range)
    };
    let before = actuator.setting();
    actuator.set(before + controller.gain * estimate);
    LockStepOutcome { counts_plus: cp, counts_minus: cm, estimate, correction: -(actuator.setting() - before), held }
}

/// Out-of-loop measurement chain, per epoch.
#[derive(Debug, Clone)]
pub struct DetectionSetup {
    /// Density of t_s − t_i through the scenario links at calibration.
    pub density: Arc<ArrivalDensity>,
    /// Fitted center of the no-fiber calibration, s.
    pub calibration_center: f64,
    pub calibration_stderr: Option<f64>,
    pub epoch: EpochSampling,
    pub clock_a: ClockModel,
    pub clock_b: ClockModel,
    pub fit: FitOptions,
}

#[derive(Debug, Clone)]
pub struct SyncScenario {
    pub source: PhotonPairSource,
    pub link_signal: FiberLink,
    pub link_idler: FiberLink,
    pub temperature: TemperatureProcess,
    pub controller: LockController,
    pub dip: GaussianDip,
    /// Baseline HOM coincidence rate seen by the lock, cps.
    pub hom_rate: f64,
    pub actuator_range: f64,
    pub actuator_resolution: f64,
    pub lock_enabled: bool,
    /// Use expected counts instead of Poisson draws in the lock.
    pub noiseless: bool,
    pub detection: Option<DetectionSetup>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SyncEvent {
    LockLoss { t: f64, imbalance: f64 },
    Reacquired { t: f64, scan_steps: usize },
    ReacquisitionFailed { t: f64, scan_steps: usize },
    Hold { t: f64 },
    EpochRejected { t: f64, reason: String },
}

impl SyncEvent {
    pub fn time(&self) -> f64 {
        match self {
            SyncEvent::LockLoss { t, .. }
            | SyncEvent::Reacquired { t, .. }
            | SyncEvent::ReacquisitionFailed { t, .. }
            | SyncEvent::Hold { t }
            | SyncEvent::EpochRejected { t, .. } => *t,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            SyncEvent::LockLoss { t, imbalance } => {
                format!("{t:.11e} lock_loss imbalance_ps={:.11e}", imbalance * 1e12)
            }
            SyncEvent::Reacquired { t, scan_steps } => format!("{t:.11e} reacquired scan_steps={scan_steps}"),
            SyncEvent::ReacquisitionFailed { t, scan_steps } => {
                format!("{t:.11e} reacquisition_failed scan_steps={scan_steps}")
            }
            SyncEvent::Hold { t } => format!("{t:.11e} hold"),
            SyncEvent::EpochRejected { t, reason } => format!("{t:.11e} epoch_rejected {reason}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActuatorEntry {
    pub t: f64,
    pub steps: i64,
}

#[derive(Debug, Clone)]
pub struct SyncRun {
    /// d − s right after each correction, on the update grid.
    pub in_loop_residual: OffsetSeries,
    /// Imbalance at probe time, before the correction.
    pub imbalance_before: Vec<f64>,
    /// Arm delay change d at each update, s.
    pub path_drift: Vec<f64>,
    /// Longest gap-free stretch of epoch offsets; rejected epochs appear in `events`.
    pub out_of_loop_offsets: Option<OffsetSeries>,
    pub actuator_log: Vec<ActuatorEntry>,
    pub events: Vec<SyncEvent>,
}

impl SyncRun {
    pub fn lock_losses(&self) -> usize {
        self.events.iter().filter(|e| matches!(e, SyncEvent::LockLoss { .. })).count()
    }
}

/// Arm delay change model shared by the loop and the detection chain.
#[derive(Debug, Clone)]
pub struct DriftModel {
    source: PhotonPairSource,
    link_signal: FiberLink,
    link_idler: FiberLink,
    temperature: TemperatureProcess,
    coefficient: f64,
    reference: f64,
}

impl DriftModel {
    pub fn new(
        source: &PhotonPairSource,
        link_signal: &FiberLink,
        link_idler: &FiberLink,
        temperature: TemperatureProcess,
    ) -> Result<Self, SyncError> {
        temperature.validate()?;
        let coefficient = differential_drift_coefficient(link_signal, link_idler, source, temperature.mean)?;
        let mut m = Self {
            source: source.clone(),
            link_signal: link_signal.clone(),
            link_idler: link_idler.clone(),
            temperature,
            coefficient,
            reference: 0.0,
        };
        m.reference = m.common_mode(temperature.mean)?;
        Ok(m)
    }

    /// Drift coefficient of the uncorrelated per-segment terms, s/°C.
    pub fn coefficient(&self) -> f64 {
        self.coefficient
    }

    /// Idler minus signal group delay, each at its own wavelength.
    fn common_mode(&self, temp_c: f64) -> Result<f64, FiberError> {
        Ok(link_delay_at(&self.link_idler, self.source.idler_nm, temp_c)?
            - link_delay_at(&self.link_signal, self.source.signal_nm, temp_c)?)
    }

    /// d(t): change of the idler-minus-signal arm delay since calibration.
    pub fn delay_change(&self, t: f64) -> Result<f64, FiberError> {
        let temp = self.temperature.temperature_at(t);
        Ok(self.coefficient * (temp - self.temperature.mean) + self.common_mode(temp)? - self.reference)
    }
}

fn scan_offsets(k: usize, step: f64) -> f64 {
    // 0, +1, −1, +2, −2, ...
    let n = k.div_ceil(2) as f64;
    if k % 2 == 1 {
        n * step
    } else {
        -n * step
    }
}

/// Simulate `duration` seconds. The lock runs first on its own random stream,
/// then each detection epoch is drawn on a per-epoch stream.
pub fn run_sync(scenario: &SyncScenario, duration: f64, seed: u64) -> Result<SyncRun, SyncError> {
    let c = &scenario.controller;
    c.validate()?;
    if !(duration >= 3.0 * c.update_period) {
        return Err(SyncError::InvalidParameter {
            field: "duration",
            reason: "must cover at least three update periods".into(),
        });
    }
    if !(scenario.hom_rate > 0.0) {
        return Err(SyncError::InvalidParameter { field: "hom_rate", reason: "must be > 0".into() });
    }
    let drift = DriftModel::new(&scenario.source, &scenario.link_signal, &scenario.link_idler, scenario.temperature)?;
    let mut actuator = DelayActuator::new(scenario.actuator_range, scenario.actuator_resolution)?;
    let mut rng = component_rng(seed, "sync.lock");
    let dip = scenario.dip;
    let n_steps = (duration / c.update_period).floor() as usize;

    let mut times = Vec::with_capacity(n_steps);
    let mut residual = Vec::with_capacity(n_steps);
    let mut before = Vec::with_capacity(n_steps);
    let mut path = Vec::with_capacity(n_steps);
    let mut log = vec![ActuatorEntry { t: 0.0, steps: 0 }];
    let mut events = Vec::new();
    let mut busy_until = f64::NEG_INFINITY;
    let mut locked = true;

    for k in 0..n_steps {
        let t = k as f64 * c.update_period;
        let d = drift.delay_change(t)?;
        let x = d - actuator.setting();
        times.push(t);
        path.push(d);
        before.push(x);
        if !scenario.lock_enabled || t < busy_until {
            residual.push(x);
            continue;
        }
        if locked && x.abs() > c.capture_range {
            events.push(SyncEvent::LockLoss { t, imbalance: x });
            locked = false;
        }
        if !locked {
            // Outward scan; each position costs one dwell.
            let step = dip.width_fwhm / 4.0;
            let max_positions = 2 * (0.5 * scenario.actuator_range / step).ceil() as usize + 1;
            let background = scenario.hom_rate * c.dwell_per_probe;
            let origin = actuator.setting();
            let mut found = None;
            for j in 0..max_positions {
                let ts = t + j as f64 * c.dwell_per_probe;
                let pos = origin + scan_offsets(j, step);
                if pos.abs() > 0.5 * scenario.actuator_range {
                    continue;
                }
                let xs = drift.delay_change(ts)? - pos;
                let mean = 2.0 * dip.probability(xs) * background;
                let counts = if scenario.noiseless { mean } else { poisson(&mut rng, mean) as f64 };
                if counts < background - c.hold_sigmas * background.sqrt() {
                    found = Some((j, pos));
                    break;
                }
            }
            match found {
                Some((j, pos)) => {
                    actuator.set(pos);
                    busy_until = t + (j + 1) as f64 * c.dwell_per_probe;
                    events.push(SyncEvent::Reacquired { t: busy_until, scan_steps: j + 1 });
                    log.push(ActuatorEntry { t: busy_until, steps: actuator.steps() });
                    locked = true;
                }
                None => {
                    busy_until = t + max_positions as f64 * c.dwell_per_probe;
                    events.push(SyncEvent::ReacquisitionFailed { t, scan_steps: max_positions });
                }
            }
            residual.push(d - actuator.setting());
            continue;
        }
        let out = lock_step(
            c,
            &dip,
            &mut actuator,
            x,
            scenario.hom_rate,
            if scenario.noiseless { None } else { Some(&mut rng) },
        );
        if out.held {
            events.push(SyncEvent::Hold { t });
        }
        if log.last().map(|e| e.steps) != Some(actuator.steps()) {
            log.push(ActuatorEntry { t, steps: actuator.steps() });
        }
        residual.push(d - actuator.setting());
    }

    let out_of_loop = match &scenario.detection {
        Some(det) => {
            Some(detection_epochs(det, &drift, &log, duration, seed, &mut events, scenario.actuator_resolution)?)
        }
        None => None,
    };
    events.sort_by(|a, b| a.time().total_cmp(&b.time()));
    Ok(SyncRun {
        in_loop_residual: OffsetSeries::new(times, residual, None)?,
        imbalance_before: before,
        path_drift: path,
        out_of_loop_offsets: out_of_loop,
        actuator_log: log,
        events,
    })
}

/// Time average of the piecewise-constant actuator setting over [t0, t1).
pub fn mean_setting(log: &[ActuatorEntry], resolution: f64, t0: f64, t1: f64) -> f64 {
    let start = log.partition_point(|e| e.t <= t0).saturating_sub(1);
    let mut acc = 0.0;
    for (i, e) in log.iter().enumerate().skip(start) {
        let a = e.t.max(t0);
        let b = log.get(i + 1).map_or(t1, |n| n.t.min(t1));
        if b > a {
            acc += e.steps as f64 * (b - a);
        }
        if b >= t1 {
            break;
        }
    }
    acc / (t1 - t0) * resolution
}

/// (start, offset, uncertainty), or (start, rejection reason).
type EpochOutcome = Result<(f64, f64, f64), (f64, String)>;

fn detection_epochs(
    det: &DetectionSetup,
    drift: &DriftModel,
    log: &[ActuatorEntry],
    duration: f64,
    seed: u64,
    events: &mut Vec<SyncEvent>,
    resolution: f64,
) -> Result<OffsetSeries, SyncError> {
    let len = det.epoch.duration;
    if !(len > 0.0) {
        return Err(SyncError::InvalidParameter { field: "epoch.duration", reason: "must be > 0".into() });
    }
    let n = (duration / len).floor() as usize;
    let sampler: DensitySampler = det.density.sampler();
    let base = child_seed(seed, "sync.detection");
    let results: Vec<EpochOutcome> = (0..n)
        .into_par_iter()
        .map(|j| {
            let t0 = j as f64 * len;
            let mid = t0 + 0.5 * len;
            let d = drift.delay_change(mid).map_err(|e| (t0, e.to_string()))?;
            let clocks = det.clock_a.offset_at(mid) - det.clock_b.offset_at(mid);
            let mut rng = seeded_rng(child_seed(base, &j.to_string()));
            let hist = sample_epoch_histogram(&det.epoch, &sampler, clocks + d, &mut rng);
            let fit = fit_gaussian(&hist, &det.fit).map_err(|e| (t0, e.to_string()))?;
            let est = estimate_offset(&fit, det.calibration_center, det.calibration_stderr);
            let white = if det.clock_a.white_pm_sigma > 0.0 || det.clock_b.white_pm_sigma > 0.0 {
                // reading noise averages down with the number of coincidences
                let s = (det.clock_a.white_pm_sigma.powi(2) + det.clock_b.white_pm_sigma.powi(2)).sqrt();
                s / fit.peak_counts.max(1.0).sqrt() * crate::detection::standard_normal(&mut rng)
            } else {
                0.0
            };
            let setting = mean_setting(log, resolution, t0, t0 + len);
            Ok((t0, est.offset - setting + white, est.uncertainty))
        })
        .collect();
    // Rejected epochs split the series; the longest gap-free stretch is kept.
    let mut best: (usize, usize) = (0, 0);
    let mut start = 0;
    for (j, r) in results.iter().enumerate() {
        if let Err((t0, reason)) = r {
            events.push(SyncEvent::EpochRejected { t: *t0, reason: reason.clone() });
            start = j + 1;
        } else if j + 1 - start > best.1 - best.0 {
            best = (start, j + 1);
        }
    }
    let kept = results[best.0..best.1].iter().filter_map(|r| r.as_ref().ok());
    let (mut t, mut o, mut u) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for &(t0, off, unc) in kept {
        t.push(t0);
        o.push(off);
        u.push(unc);
    }
    Ok(OffsetSeries::new(t, o, Some(u))?)
}

/// Mean |T(t + w) − T(t)| over one period, sampled on a fine grid.
pub fn mean_abs_temperature_change(process: &TemperatureProcess, window: f64) -> f64 {
    let n = 36_000;
    let dt = process.period / n as f64;
    (0..n)
        .map(|k| {
            let t = k as f64 * dt;
            (process.temperature_at(t + window) - process.temperature_at(t)).abs()
        })
        .sum::<f64>()
        / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dip() -> GaussianDip {
        GaussianDip { visibility: 0.6, width_fwhm: 3.25e-12, center: 0.0 }
    }

    #[test]
    fn balanced_noiseless_step_is_zero() {
        let mut a = DelayActuator::new(1e-9, 1e-15).unwrap();
        let o = lock_step(&LockController::default(), &dip(), &mut a, 0.0, 1e4, None);
        assert_eq!(o.correction, 0.0);
        assert_eq!(a.steps(), 0);
    }

    #[test]
    fn positive_imbalance_restored() {
        let mut a = DelayActuator::new(1e-9, 1e-15).unwrap();
        let mut rng = seeded_rng(5);
        let o = lock_step(&LockController::default(), &dip(), &mut a, 500e-15, 1e5, Some(&mut rng));
        assert!(o.correction < 0.0);
        assert!((o.estimate - 500e-15).abs() < 50e-15, "{o:?}");
    }

    #[test]
    fn noiseless_inversion_is_exact_inside_capture() {
        for x in [-3e-12, -1e-12, 0.2e-12, 2.5e-12] {
            let mut a = DelayActuator::new(1e-9, 1e-15).unwrap();
            let o = lock_step(&LockController::default(), &dip(), &mut a, x, 1e4, None);
            assert!((o.estimate - x).abs() < 1e-18, "{x} {o:?}");
        }
    }

    #[test]
    fn actuator_quantizes_and_clamps() {
        let mut a = DelayActuator::new(1e-12, 1e-15).unwrap();
        assert!(a.set(1.2345e-13));
        assert_eq!(a.steps(), 123);
        assert!(!a.set(1e-11));
        assert_eq!(a.steps(), 500);
    }

    #[test]
    fn low_counts_hold() {
        let mut a = DelayActuator::new(1e-9, 1e-15).unwrap();
        let o = lock_step(&LockController::default(), &dip(), &mut a, 20e-12, 1e4, None);
        assert!(o.held);
        assert_eq!(a.steps(), 0);
    }

    #[test]
    fn mean_setting_is_time_weighted() {
        let log = [ActuatorEntry { t: 0.0, steps: 0 }, ActuatorEntry { t: 5.0, steps: 10 }];
        assert!((mean_setting(&log, 1.0, 0.0, 10.0) - 5.0).abs() < 1e-12);
        assert!((mean_setting(&log, 1.0, 6.0, 8.0) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn temperature_periodic_and_deterministic() {
        let p = TemperatureProcess { noise_sigma: 0.0, ..Default::default() };
        assert!((p.temperature_at(100.0) - p.temperature_at(3700.0)).abs() < 1e-12);
        let n = TemperatureProcess { noise_sigma: 0.01, seed: 3, ..Default::default() };
        assert_eq!(n.temperature_at(40.0), n.temperature_at(40.0));
    }
}
