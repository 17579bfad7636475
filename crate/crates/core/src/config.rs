//! Scenario configuration: TOML with unit-suffixed keys.
//!
//! Every section has defaults matching the 20 km scenario; only `master_seed`
//! is required. Unknown keys are rejected, and semantic checks report every
//! violation with its field path.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fiber_model::FiberSegment;

/// The bundled 20 km scenario.
pub const BUNDLED_20KM_CFG: &str = include_str!("../data/paper_20km.cfg");

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigIssue {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("{} invalid field(s):\n{}", .0.len(), .0.iter().map(|i| format!("  {i}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<ConfigIssue>),
    #[error("unknown preset `{0}` (known: {1})")]
    UnknownPreset(String, String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum AcquisitionPreset {
    /// Full-rate correlator, 100 s epochs.
    #[serde(rename = "tcspc-100s")]
    Tcspc100s,
    /// Event timers capped at 12 kcps, 12 s epochs.
    #[default]
    #[serde(rename = "et-12s")]
    Et12s,
}

impl AcquisitionPreset {
    pub fn epoch_s(self) -> f64 {
        match self {
            AcquisitionPreset::Tcspc100s => 100.0,
            AcquisitionPreset::Et12s => 12.0,
        }
    }

    pub fn rate_cap_cps(self) -> Option<f64> {
        match self {
            AcquisitionPreset::Tcspc100s => None,
            AcquisitionPreset::Et12s => Some(12e3),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AcquisitionPreset::Tcspc100s => "tcspc-100s",
            AcquisitionPreset::Et12s => "et-12s",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DipWidthConvention {
    /// Full width at half of the dip depth.
    #[default]
    FwhmOfDepth,
    /// Gaussian σ of the dip.
    Sigma,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceConfig {
    pub signal_nm: f64,
    pub idler_nm: f64,
    pub pump_center_nm: f64,
    pub pump_bandwidth_fwhm_nm: f64,
    pub repetition_rate_hz: f64,
    /// Pairs per second reaching the detection stage.
    pub pair_rate: f64,
    pub dip_width_ps: f64,
    pub dip_width_convention: DipWidthConvention,
    /// Target accidental-corrected HOM visibility.
    pub visibility: f64,
    /// Fixed ridge skew; calibrated from `calibration` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ridge_skew: Option<f64>,
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self {
            signal_nm: 1574.4,
            idler_nm: 1574.7,
            pump_center_nm: 787.0,
            pump_bandwidth_fwhm_nm: 25.0,
            repetition_rate_hz: 75e6,
            pair_rate: 4.07e6,
            dip_width_ps: 3.25,
            dip_width_convention: DipWidthConvention::FwhmOfDepth,
            visibility: 0.6,
            ridge_skew: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationConfig {
    /// Coincidence FWHM without fiber.
    pub no_fiber_width_ps: f64,
    /// Coincidence FWHM after `dispersed_arm_length_m` of fiber in each arm.
    pub dispersed_width_ps: f64,
    pub dispersed_arm_length_m: f64,
    /// Fixed instrument jitter σ; calibrated from `no_fiber_width_ps` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub instrument_jitter_ps: Option<f64>,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            no_fiber_width_ps: 62.0,
            dispersed_width_ps: 514.8,
            dispersed_arm_length_m: 10_000.0,
            instrument_jitter_ps: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct DispersionConfig {
    /// Coefficient file; the bundled silica model when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkConfig {
    /// Segment keys: `length` (m), `attenuation` (dB/km), `excess_loss` (dB),
    /// `temperature_offset` (°C).
    pub segments: Vec<FiberSegment>,
}

impl LinkConfig {
    pub fn from_lengths(lengths: &[f64], connector_loss: f64) -> Self {
        let segments = lengths
            .iter()
            .enumerate()
            .map(|(i, &l)| FiberSegment {
                length: l,
                excess_loss: if i == 0 { 0.0 } else { connector_loss },
                attenuation: 0.2,
                temperature_offset: 0.0,
            })
            .collect();
        Self { segments }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinksConfig {
    pub signal: LinkConfig,
    pub idler: LinkConfig,
}

impl Default for LinksConfig {
    fn default() -> Self {
        let arm = LinkConfig::from_lengths(&[5000.0, 4000.0, 1000.0], 0.3);
        Self { signal: arm.clone(), idler: arm }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorConfig {
    /// Lumped detection-path efficiency.
    pub efficiency: f64,
    pub timing_jitter_ps: f64,
    pub dark_rate_cps: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        // 272.54 cps coincidences over 33.3 kcps singles
        Self { efficiency: 272.54 / 33.3e3, timing_jitter_ps: 15.0, dark_rate_cps: 100.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DetectorsConfig {
    #[serde(default)]
    pub a: DetectorConfig,
    #[serde(default)]
    pub b: DetectorConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ClockConfig {
    pub initial_offset_ps: f64,
    pub fractional_frequency_offset: f64,
    pub white_pm_ps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ClocksConfig {
    #[serde(default)]
    pub a: ClockConfig,
    #[serde(default)]
    pub b: ClockConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TemperatureConfig {
    pub mean_c: f64,
    pub amplitude_c: f64,
    pub period_s: f64,
    pub noise_sigma_c: f64,
}

impl Default for TemperatureConfig {
    fn default() -> Self {
        Self { mean_c: 22.0, amplitude_c: 0.25, period_s: 3600.0, noise_sigma_c: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LockConfig {
    pub enabled: bool,
    pub noiseless: bool,
    pub probe_offset_ps: f64,
    pub dwell_s: f64,
    pub gain: f64,
    pub update_period_s: f64,
    pub capture_range_ps: f64,
    pub hold_sigmas: f64,
    /// Baseline HOM coincidence rate seen by the lock.
    pub hom_rate_cps: f64,
    pub actuator_range_ps: f64,
    pub actuator_resolution_fs: f64,
}

impl Default for LockConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            noiseless: false,
            probe_offset_ps: 0.69,
            dwell_s: 10.0,
            gain: 1.0,
            update_period_s: 20.0,
            capture_range_ps: 6.5,
            hold_sigmas: 3.0,
            hom_rate_cps: 1e4,
            actuator_range_ps: 1000.0,
            actuator_resolution_fs: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AcquisitionConfig {
    pub preset: AcquisitionPreset,
    pub bin_width_ps: f64,
    pub window_ps: f64,
    /// Overrides the preset epoch length.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epoch_s: Option<f64>,
    /// Overrides the preset per-detector rate cap.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate_cap_cps: Option<f64>,
    /// Duration of timestamp-level simulations (`coincidence`).
    pub timestamp_duration_s: f64,
    /// Also write the raw timestamp streams (large).
    pub write_timestamps: bool,
    pub memory_cap_events: u64,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self {
            preset: AcquisitionPreset::Et12s,
            bin_width_ps: 4.0,
            window_ps: 5000.0,
            epoch_s: None,
            rate_cap_cps: None,
            timestamp_duration_s: 100.0,
            write_timestamps: false,
            memory_cap_events: 50_000_000,
        }
    }
}

impl AcquisitionConfig {
    pub fn epoch(&self) -> f64 {
        self.epoch_s.unwrap_or(self.preset.epoch_s())
    }

    pub fn rate_cap(&self) -> Option<f64> {
        self.rate_cap_cps.or(self.preset.rate_cap_cps())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HomScanConfig {
    pub half_span_ps: f64,
    pub points: usize,
    pub dwell_s: f64,
    /// HOM coincidence baseline rate for sampled scans.
    pub rate_cps: f64,
}

impl Default for HomScanConfig {
    fn default() -> Self {
        Self { half_span_ps: 10.0, points: 201, dwell_s: 1.0, rate_cps: 1e4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    /// Square grid for HOM work.
    pub hom_points: usize,
    pub timing_sum_points: usize,
    pub timing_difference_points: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { hom_points: 512, timing_sum_points: 128, timing_difference_points: 16384 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerConfig {
    pub max_segments: usize,
    pub connector_loss_db: f64,
    pub loss_budget_db: f64,
    pub safety_factor: f64,
    pub delta_t_c: f64,
    /// Defaults to the dip width.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coherence_time_ps: Option<f64>,
    /// Defaults to the model value at the source wavelengths.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_s_per_m_c: Option<f64>,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            max_segments: 10,
            connector_loss_db: 0.3,
            loss_budget_db: 6.0,
            safety_factor: 1.5,
            delta_t_c: 0.006,
            coherence_time_ps: None,
            b_s_per_m_c: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub duration_s: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { duration_s: 1e5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Mandatory: there is no implicit entropy.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
    #[serde(default)]
    pub source: SourceConfig,
    #[serde(default)]
    pub calibration: CalibrationConfig,
    #[serde(default)]
    pub dispersion: DispersionConfig,
    #[serde(default)]
    pub link: LinksConfig,
    #[serde(default)]
    pub detectors: DetectorsConfig,
    #[serde(default)]
    pub clocks: ClocksConfig,
    #[serde(default)]
    pub temperature: TemperatureConfig,
    #[serde(default)]
    pub lock: LockConfig,
    #[serde(default)]
    pub acquisition: AcquisitionConfig,
    #[serde(default)]
    pub hom_scan: HomScanConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub planner: PlannerConfig,
    #[serde(default)]
    pub run: RunConfig,
}

/// Named modifications applied on top of a parsed config.
pub const PRESETS: &[(&str, &str)] = &[
    ("tcspc-100s", "full-rate correlator, 100 s epochs"),
    ("et-12s", "event timers at 12 kcps, 12 s epochs"),
    ("link-200m", "100 m per arm"),
    ("link-10km", "5 km per arm"),
    ("link-20km", "5 + 4 + 1 km per arm"),
    ("single-10km", "one unsegmented 10 km spool per arm"),
    ("amp05", "temperature amplitude 0.5 °C"),
    ("lock-off", "delay line frozen"),
];

/// Link presets used by the dip scan, as (name, per-arm segment lengths).
pub const LINK_PRESETS: &[(&str, &[f64])] =
    &[("link-200m", &[100.0]), ("link-10km", &[5000.0]), ("link-20km", &[5000.0, 4000.0, 1000.0])];

impl ScenarioConfig {
    /// Apply comma-separated presets in order.
    pub fn apply_presets(&mut self, names: &str) -> Result<(), ConfigError> {
        for name in names.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            self.apply_preset(name)?;
        }
        Ok(())
    }

    pub fn apply_preset(&mut self, name: &str) -> Result<(), ConfigError> {
        let connector = self.planner.connector_loss_db;
        match name {
            "tcspc-100s" => self.acquisition.preset = AcquisitionPreset::Tcspc100s,
            "et-12s" => self.acquisition.preset = AcquisitionPreset::Et12s,
            "single-10km" => self.set_arms(&[10_000.0], connector),
            "amp05" => self.temperature.amplitude_c = 0.5,
            "lock-off" => self.lock.enabled = false,
            _ => match LINK_PRESETS.iter().find(|(n, _)| *n == name) {
                Some((_, lengths)) => self.set_arms(lengths, connector),
                None => {
                    let known = PRESETS.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", ");
                    return Err(ConfigError::UnknownPreset(name.to_string(), known));
                }
            },
        }
        Ok(())
    }

    pub fn set_arms(&mut self, lengths: &[f64], connector_loss: f64) {
        let arm = LinkConfig::from_lengths(lengths, connector_loss);
        self.link = LinksConfig { signal: arm.clone(), idler: arm };
    }

    pub fn seed(&self) -> u64 {
        self.master_seed.expect("validated config has a seed")
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Every semantic violation, with field paths.
    pub fn validate(&self) -> Vec<ConfigIssue> {
        let mut v = Validator::default();
        if self.master_seed.is_none() {
            v.push("master_seed", "required (set it in the file or pass --seed)");
        }
        let s = &self.source;
        for (k, x) in [
            ("signal_nm", s.signal_nm),
            ("idler_nm", s.idler_nm),
            ("pump_center_nm", s.pump_center_nm),
            ("pump_bandwidth_fwhm_nm", s.pump_bandwidth_fwhm_nm),
            ("repetition_rate_hz", s.repetition_rate_hz),
            ("pair_rate", s.pair_rate),
            ("dip_width_ps", s.dip_width_ps),
        ] {
            v.positive(&format!("source.{k}"), x);
        }
        for (k, x) in [("signal_nm", s.signal_nm), ("idler_nm", s.idler_nm)] {
            v.within(&format!("source.{k}"), x, 1200.0, 1700.0);
        }
        v.within("source.visibility", s.visibility, 0.0, 1.0);
        if s.pump_center_nm > 0.0 && s.signal_nm > 0.0 && s.idler_nm > 0.0 {
            let lhs = 1.0 / s.pump_center_nm;
            let rhs = 1.0 / s.signal_nm + 1.0 / s.idler_nm;
            if ((lhs - rhs) / lhs).abs() > 1e-3 {
                v.push(
                    "source.pump_center_nm",
                    "energy conservation with the signal and idler wavelengths violated by more than 0.1%",
                );
            }
        }
        if let Some(k) = s.ridge_skew {
            v.finite("source.ridge_skew", k);
        }
        let c = &self.calibration;
        v.positive("calibration.no_fiber_width_ps", c.no_fiber_width_ps);
        v.positive("calibration.dispersed_width_ps", c.dispersed_width_ps);
        v.positive("calibration.dispersed_arm_length_m", c.dispersed_arm_length_m);
        if let Some(j) = c.instrument_jitter_ps {
            v.non_negative("calibration.instrument_jitter_ps", j);
        }
        for (arm, link) in [("signal", &self.link.signal), ("idler", &self.link.idler)] {
            if link.segments.is_empty() {
                v.push(&format!("link.{arm}.segments"), "at least one segment required");
            }
            for (i, seg) in link.segments.iter().enumerate() {
                let p = format!("link.{arm}.segments[{i}]");
                v.positive(&format!("{p}.length"), seg.length);
                v.non_negative(&format!("{p}.attenuation"), seg.attenuation);
                v.non_negative(&format!("{p}.excess_loss"), seg.excess_loss);
                v.within(&format!("{p}.temperature_offset"), seg.temperature_offset, -20.0, 20.0);
            }
        }
        for (name, d) in [("a", &self.detectors.a), ("b", &self.detectors.b)] {
            v.within(&format!("detectors.{name}.efficiency"), d.efficiency, 0.0, 1.0);
            v.non_negative(&format!("detectors.{name}.timing_jitter_ps"), d.timing_jitter_ps);
            v.non_negative(&format!("detectors.{name}.dark_rate_cps"), d.dark_rate_cps);
        }
        for (name, k) in [("a", &self.clocks.a), ("b", &self.clocks.b)] {
            v.finite(&format!("clocks.{name}.initial_offset_ps"), k.initial_offset_ps);
            v.finite(&format!("clocks.{name}.fractional_frequency_offset"), k.fractional_frequency_offset);
            v.non_negative(&format!("clocks.{name}.white_pm_ps"), k.white_pm_ps);
        }
        let t = &self.temperature;
        v.within("temperature.mean_c", t.mean_c, 0.0, 50.0);
        v.non_negative("temperature.amplitude_c", t.amplitude_c);
        v.positive("temperature.period_s", t.period_s);
        v.non_negative("temperature.noise_sigma_c", t.noise_sigma_c);
        if t.mean_c.abs() + t.amplitude_c > 50.0 || t.mean_c - t.amplitude_c < 0.0 {
            v.push("temperature.amplitude_c", "temperature excursion leaves the 0–50 °C model domain");
        }
        let l = &self.lock;
        v.positive("lock.probe_offset_ps", l.probe_offset_ps);
        v.positive("lock.dwell_s", l.dwell_s);
        v.within("lock.gain", l.gain, 1e-6, 2.0);
        v.positive("lock.update_period_s", l.update_period_s);
        if l.update_period_s < 2.0 * l.dwell_s {
            v.push("lock.update_period_s", "must be at least twice lock.dwell_s");
        }
        v.positive("lock.capture_range_ps", l.capture_range_ps);
        v.positive("lock.hold_sigmas", l.hold_sigmas);
        v.positive("lock.hom_rate_cps", l.hom_rate_cps);
        v.positive("lock.actuator_resolution_fs", l.actuator_resolution_fs);
        if l.actuator_range_ps * 1e3 <= 2.0 * l.actuator_resolution_fs {
            v.push("lock.actuator_range_ps", "must exceed two resolution steps");
        }
        let a = &self.acquisition;
        v.positive("acquisition.bin_width_ps", a.bin_width_ps);
        if a.window_ps < a.bin_width_ps {
            v.push("acquisition.window_ps", "must be at least one bin width");
        }
        if let Some(e) = a.epoch_s {
            v.positive("acquisition.epoch_s", e);
        }
        if let Some(r) = a.rate_cap_cps {
            v.positive("acquisition.rate_cap_cps", r);
        }
        v.positive("acquisition.timestamp_duration_s", a.timestamp_duration_s);
        if a.memory_cap_events == 0 {
            v.push("acquisition.memory_cap_events", "must be > 0");
        }
        let h = &self.hom_scan;
        v.positive("hom_scan.half_span_ps", h.half_span_ps);
        if h.points < 5 {
            v.push("hom_scan.points", "at least 5 points required");
        }
        v.non_negative("hom_scan.dwell_s", h.dwell_s);
        v.positive("hom_scan.rate_cps", h.rate_cps);
        let g = &self.grid;
        if g.hom_points < 64 {
            v.push("grid.hom_points", "at least 64 points required");
        }
        if g.timing_sum_points < 16 {
            v.push("grid.timing_sum_points", "at least 16 points required");
        }
        if g.timing_difference_points < 64 {
            v.push("grid.timing_difference_points", "at least 64 points required");
        }
        let p = &self.planner;
        if p.max_segments == 0 {
            v.push("planner.max_segments", "must be ≥ 1");
        }
        v.non_negative("planner.connector_loss_db", p.connector_loss_db);
        v.positive("planner.loss_budget_db", p.loss_budget_db);
        v.positive("planner.safety_factor", p.safety_factor);
        v.positive("planner.delta_t_c", p.delta_t_c);
        if let Some(c) = p.coherence_time_ps {
            v.positive("planner.coherence_time_ps", c);
        }
        if let Some(b) = p.b_s_per_m_c {
            v.positive("planner.b_s_per_m_c", b);
        }
        v.positive("run.duration_s", self.run.duration_s);
        v.issues
    }
}

#[derive(Default)]
struct Validator {
    issues: Vec<ConfigIssue>,
}

impl Validator {
    fn push(&mut self, path: &str, message: &str) {
        self.issues.push(ConfigIssue { path: path.to_string(), message: message.to_string() });
    }
    fn finite(&mut self, path: &str, x: f64) {
        if !x.is_finite() {
            self.push(path, &format!("{x} is not finite"));
        }
    }
    fn positive(&mut self, path: &str, x: f64) {
        if !(x > 0.0 && x.is_finite()) {
            self.push(path, &format!("{x} must be > 0"));
        }
    }
    fn non_negative(&mut self, path: &str, x: f64) {
        if !(x >= 0.0 && x.is_finite()) {
            self.push(path, &format!("{x} must be ≥ 0"));
        }
    }
    fn within(&mut self, path: &str, x: f64, lo: f64, hi: f64) {
        if !(x >= lo && x <= hi) {
            self.push(path, &format!("{x} not in [{lo}, {hi}]"));
        }
    }
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.chars().count(), |i| before[i + 1..].chars().count()) + 1;
    (line, column)
}

/// Parse without semantic validation.
pub fn parse_config_unvalidated(text: &str) -> Result<ScenarioConfig, ConfigError> {
    toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_column(text, s.start));
        ConfigError::Syntax { line, column, message: e.message().to_string() }
    })
}

/// Parse and validate.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let cfg = parse_config_unvalidated(text)?;
    finish(cfg)
}

/// Validate a config, returning every issue.
pub fn finish(cfg: ScenarioConfig) -> Result<ScenarioConfig, ConfigError> {
    let issues = cfg.validate();
    if issues.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError::Invalid(issues))
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ScenarioConfig, ConfigError> {
    parse_config(&std::fs::read_to_string(path)?)
}

/// The bundled scenario, parsed.
pub fn bundled_20km() -> ScenarioConfig {
    parse_config(BUNDLED_20KM_CFG).expect("bundled config is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_round_trips() {
        let a = bundled_20km();
        let b = parse_config(&a.to_toml_string()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.seed(), b.seed());
    }

    #[test]
    fn minimal_is_defaults() {
        let c = parse_config("master_seed = 1").unwrap();
        assert_eq!(c.link, LinksConfig::default());
    }

    #[test]
    fn syntax_error_has_position() {
        match parse_config("master_seed = 1\n[source\n") {
            Err(ConfigError::Syntax { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(matches!(
            parse_config("master_seed = 1\n[lock]\nspeed = 3\n"),
            Err(ConfigError::Syntax { line: 3, .. })
        ));
    }

    #[test]
    fn all_issues_collected() {
        let text =
            "[[link.signal.segments]]\nlength = -5.0\n[[link.idler.segments]]\nlength = 10.0\n[lock]\ngain = 7.0\n";
        let Err(ConfigError::Invalid(issues)) = parse_config(text) else { panic!() };
        let paths: Vec<&str> = issues.iter().map(|i| i.path.as_str()).collect();
        assert!(paths.contains(&"master_seed"));
        assert!(paths.contains(&"link.signal.segments[0].length"));
        assert!(paths.contains(&"lock.gain"));
    }

    #[test]
    fn presets_apply() {
        let mut c = bundled_20km();
        c.apply_presets("single-10km,amp05,tcspc-100s").unwrap();
        assert_eq!(c.link.signal.segments.len(), 1);
        assert_eq!(c.temperature.amplitude_c, 0.5);
        assert_eq!(c.acquisition.epoch(), 100.0);
        assert!(matches!(c.apply_preset("nope"), Err(ConfigError::UnknownPreset(..))));
    }
}
