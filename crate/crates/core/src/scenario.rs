//! Calibrated model objects built from a [`ScenarioConfig`].

use std::sync::Arc;

use thiserror::Error;

use crate::biphoton::{
    difference_bandwidth_for_dip_width, disperse_through, gaussian_jsa, gaussian_jsa_on, sum_bandwidth_from_pump,
    BiphotonError, JointSpectralAmplitude, JsaGrid, PhotonPairSource,
};
use crate::config::{ConfigError, DipWidthConvention, ScenarioConfig};
use crate::detection::{
    arrival_difference_density, instrument_jitter_for_width, ridge_skew_for_width, total_jitter, ArrivalDensity,
    ClockModel, DetectionError, DetectorModel, EpochSampling, FitError, FitOptions, TimestampSimulation,
};
use crate::fiber_model::{gvd_coefficient, temperature_sensitivity_b, DispersionModel, FiberError, FiberLink};
use crate::hom::{
    calibrate_distinguishability, delay_grid, dip_metrics, hom_profile, GaussianDip, HomError, HomProfile,
};
use crate::planner::{PlanConstraints, PlannerError};
use crate::sync_loop::{DetectionSetup, LockController, SyncError, SyncScenario, TemperatureProcess};
use crate::timing_stats::StatsError;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Fiber(#[from] FiberError),
    #[error(transparent)]
    Biphoton(#[from] BiphotonError),
    #[error(transparent)]
    Hom(#[from] HomError),
    #[error(transparent)]
    Detection(#[from] DetectionError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Sync(#[from] SyncError),
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub model: Arc<DispersionModel>,
    /// Ridge skew and distinguishability calibrated.
    pub source: PhotonPairSource,
    pub link_signal: FiberLink,
    pub link_idler: FiberLink,
    pub detector_a: DetectorModel,
    pub detector_b: DetectorModel,
    pub instrument_jitter: f64,
    pub clock_a: ClockModel,
    pub clock_b: ClockModel,
    pub temperature: TemperatureProcess,
    pub controller: LockController,
}

fn clock(c: &crate::config::ClockConfig) -> ClockModel {
    ClockModel {
        initial_offset: c.initial_offset_ps * 1e-12,
        fractional_frequency_offset: c.fractional_frequency_offset,
        white_pm_sigma: c.white_pm_ps * 1e-12,
    }
}

fn detector(d: &crate::config::DetectorConfig) -> DetectorModel {
    DetectorModel { efficiency: d.efficiency, timing_jitter: d.timing_jitter_ps * 1e-12, dark_rate: d.dark_rate_cps }
}

impl Scenario {
    /// Validate and calibrate. Costs one HOM overlap on the HOM grid.
    pub fn build(config: ScenarioConfig) -> Result<Self, ScenarioError> {
        let config = crate::config::finish(config)?;
        let model = Arc::new(match &config.dispersion.file {
            Some(path) => DispersionModel::from_file(path)?,
            None => DispersionModel::bundled(),
        });
        let s = &config.source;
        let difference_bandwidth = match s.dip_width_convention {
            DipWidthConvention::FwhmOfDepth => difference_bandwidth_for_dip_width(s.dip_width_ps * 1e-12),
            DipWidthConvention::Sigma => 1.0 / (s.dip_width_ps * 1e-12),
        };
        let mut source = PhotonPairSource {
            signal_nm: s.signal_nm,
            idler_nm: s.idler_nm,
            pump_center_nm: s.pump_center_nm,
            pump_bandwidth_fwhm_nm: s.pump_bandwidth_fwhm_nm,
            repetition_rate_hz: s.repetition_rate_hz,
            pair_rate: s.pair_rate,
            sum_bandwidth: sum_bandwidth_from_pump(s.pump_center_nm, s.pump_bandwidth_fwhm_nm),
            difference_bandwidth,
            ridge_skew: 0.0,
            distinguishability_factor: 1.0,
        };
        source.validate()?;
        let detector_a = detector(&config.detectors.a);
        let detector_b = detector(&config.detectors.b);
        let cal = &config.calibration;
        let instrument_jitter = match cal.instrument_jitter_ps {
            Some(j) => j * 1e-12,
            None => instrument_jitter_for_width(&source, &detector_a, &detector_b, cal.no_fiber_width_ps * 1e-12)?,
        };
        source.ridge_skew = match s.ridge_skew {
            Some(k) => k,
            None => {
                let k2 = gvd_coefficient(&model, source.center_nm(), config.temperature.mean_c)?;
                ridge_skew_for_width(
                    &source,
                    k2 * cal.dispersed_arm_length_m,
                    total_jitter(&detector_a, &detector_b, instrument_jitter),
                    cal.dispersed_width_ps * 1e-12,
                )?
            }
        };
        let jsa = gaussian_jsa(&source, config.grid.hom_points)?;
        source.distinguishability_factor = calibrate_distinguishability(&jsa, s.visibility)?;
        let link = |arm: &crate::config::LinkConfig| FiberLink::new(arm.segments.clone(), model.clone());
        let link_signal = link(&config.link.signal)?;
        let link_idler = link(&config.link.idler)?;
        let t = &config.temperature;
        let temperature = TemperatureProcess {
            mean: t.mean_c,
            amplitude: t.amplitude_c,
            period: t.period_s,
            noise_sigma: t.noise_sigma_c,
            seed: crate::rng::child_seed(config.seed(), "temperature"),
        };
        let l = &config.lock;
        let controller = LockController {
            probe_offset: l.probe_offset_ps * 1e-12,
            dwell_per_probe: l.dwell_s,
            gain: l.gain,
            update_period: l.update_period_s,
            capture_range: l.capture_range_ps * 1e-12,
            hold_sigmas: l.hold_sigmas,
        };
        controller.validate()?;
        Ok(Self {
            clock_a: clock(&config.clocks.a),
            clock_b: clock(&config.clocks.b),
            config,
            model,
            source,
            link_signal,
            link_idler,
            detector_a,
            detector_b,
            instrument_jitter,
            temperature,
            controller,
        })
    }

    pub fn seed(&self) -> u64 {
        self.config.seed()
    }

    pub fn links_from_lengths(&self, lengths: &[f64]) -> Result<FiberLink, ScenarioError> {
        Ok(FiberLink::from_lengths(lengths, self.model.clone())?)
    }

    pub fn hom_jsa(&self) -> Result<JointSpectralAmplitude, ScenarioError> {
        Ok(gaussian_jsa(&self.source, self.config.grid.hom_points)?)
    }

    /// HOM profile after the given arms at the mean temperature.
    pub fn dip_profile(
        &self,
        signal: Option<&FiberLink>,
        idler: Option<&FiberLink>,
    ) -> Result<HomProfile, ScenarioError> {
        let jsa = disperse_through(&self.hom_jsa()?, &self.source, signal, idler, self.config.temperature.mean_c)?;
        let h = &self.config.hom_scan;
        let delays = delay_grid(0.0, h.half_span_ps * 1e-12, h.points);
        Ok(hom_profile(&jsa, &delays, self.source.distinguishability_factor)?)
    }

    /// Gaussian dip seen by the lock, from the no-fiber profile.
    pub fn lock_dip(&self) -> Result<GaussianDip, ScenarioError> {
        let m = dip_metrics(&self.dip_profile(None, None)?)?;
        Ok(GaussianDip { visibility: m.visibility, width_fwhm: m.width_fwhm, center: 0.0 })
    }

    /// Density of t_s − t_i, through the scenario links or without fiber.
    pub fn arrival_density(&self, with_links: bool) -> Result<ArrivalDensity, ScenarioError> {
        let g = &self.config.grid;
        let jsa = gaussian_jsa_on(
            &self.source,
            JsaGrid::with_points(&self.source, g.timing_sum_points, g.timing_difference_points),
        )?;
        let jsa = if with_links {
            disperse_through(
                &jsa,
                &self.source,
                Some(&self.link_signal),
                Some(&self.link_idler),
                self.config.temperature.mean_c,
            )?
        } else {
            jsa
        };
        Ok(arrival_difference_density(&jsa, &self.detector_a, &self.detector_b, self.instrument_jitter)?)
    }

    /// Timestamp-level simulation parameters for the configured acquisition.
    pub fn timestamp_simulation(&self, duration: f64) -> TimestampSimulation {
        TimestampSimulation {
            pair_rate: self.source.pair_rate,
            duration,
            clock_a: self.clock_a,
            clock_b: self.clock_b,
            detector_a: self.detector_a,
            detector_b: self.detector_b,
            rate_cap: self.config.acquisition.rate_cap(),
            memory_cap_events: self.config.acquisition.memory_cap_events as usize,
        }
    }

    /// Histogram-level epoch parameters matching [`Self::timestamp_simulation`].
    pub fn epoch_sampling(&self) -> EpochSampling {
        let a = &self.config.acquisition;
        let sim = self.timestamp_simulation(a.epoch());
        let (ra, rb) = sim.singles_rates();
        EpochSampling {
            coincidence_rate: sim.coincidence_rate(),
            singles_a: ra,
            singles_b: rb,
            duration: a.epoch(),
            bin_width: a.bin_width_ps * 1e-12,
            window: a.window_ps * 1e-12,
        }
    }

    /// Out-of-loop chain. The calibration center is the expected no-fiber
    /// histogram center.
    pub fn detection_setup(&self, link_density: Arc<ArrivalDensity>, calibration: &ArrivalDensity) -> DetectionSetup {
        DetectionSetup {
            density: link_density,
            calibration_center: -calibration.mean(),
            calibration_stderr: None,
            epoch: self.epoch_sampling(),
            clock_a: self.clock_a,
            clock_b: self.clock_b,
            fit: FitOptions::default(),
        }
    }

    pub fn sync_scenario(&self, detection: Option<DetectionSetup>) -> Result<SyncScenario, ScenarioError> {
        let l = &self.config.lock;
        Ok(SyncScenario {
            source: self.source.clone(),
            link_signal: self.link_signal.clone(),
            link_idler: self.link_idler.clone(),
            temperature: self.temperature,
            controller: self.controller,
            dip: self.lock_dip()?,
            hom_rate: l.hom_rate_cps,
            actuator_range: l.actuator_range_ps * 1e-12,
            actuator_resolution: l.actuator_resolution_fs * 1e-15,
            lock_enabled: l.enabled,
            noiseless: l.noiseless,
            detection,
        })
    }

    pub fn sensitivity_b(&self) -> Result<f64, ScenarioError> {
        Ok(temperature_sensitivity_b(&self.model, &self.source, self.config.temperature.mean_c)?)
    }

    /// Planner constraints for the signal arm.
    pub fn plan_constraints(&self) -> Result<PlanConstraints, ScenarioError> {
        let p = &self.config.planner;
        Ok(PlanConstraints {
            total_length: self.link_signal.total_length(),
            max_segments: p.max_segments,
            connector_loss: p.connector_loss_db,
            attenuation: self.link_signal.segments()[0].attenuation,
            loss_budget: p.loss_budget_db,
            coherence_time: p.coherence_time_ps.unwrap_or(self.config.source.dip_width_ps) * 1e-12,
            b: match p.b_s_per_m_c {
                Some(b) => b,
                None => self.sensitivity_b()?,
            },
            delta_t: p.delta_t_c,
            safety_factor: p.safety_factor,
        })
    }
}
