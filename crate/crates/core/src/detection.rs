//! Two-site detection: arrival-time-difference density, timestamp streams,
//! coincidence histograms, Gaussian peak fitting and offset estimation.
//!
//! Stream `a` is the idler-side detector and stream `b` the signal-side one.
//! Histograms are over `t_a − t_b`, so a later idler gives a positive peak.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use nalgebra::{Matrix4, Vector4};
use rand::Rng;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::biphoton::{fwhm_per_sigma, JointSpectralAmplitude, PhotonPairSource};
use crate::hom::poisson;
use crate::rng::seeded_rng;

#[derive(Debug, Error)]
pub enum DetectionError {
    #[error("difference grid too coarse: phase step {max_step:.3} rad exceeds π/2; use at least {required_points} difference points")]
    Resolution { max_step: f64, required_points: usize },
    #[error("{expected_events:.3e} expected events exceed the memory cap of {cap}; split the run into shorter chunks")]
    Resource { expected_events: f64, cap: usize },
    #[error("stream {stream} is not strictly increasing at index {index}")]
    Unsorted { stream: String, index: usize },
    #[error("invalid {field}: {reason}")]
    InvalidParameter { field: &'static str, reason: String },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("fit rejected: {0}")]
    Rejected(String),
    #[error("peak not captured inside the histogram window")]
    PeakNotCaptured,
    #[error("fit did not converge after {iterations} iterations (residual norm {residual_norm:.4e})")]
    NonConvergence { iterations: usize, residual_norm: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorModel {
    pub efficiency: f64,
    /// Gaussian timing jitter σ, s.
    pub timing_jitter: f64,
    /// Dark counts per second.
    pub dark_rate: f64,
}

impl DetectorModel {
    pub fn validate(&self) -> Result<(), DetectionError> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(DetectionError::InvalidParameter {
                field: "efficiency",
                reason: format!("{} not in [0, 1]", self.efficiency),
            });
        }
        if !(self.timing_jitter >= 0.0) {
            return Err(DetectionError::InvalidParameter { field: "timing_jitter", reason: "must be ≥ 0".into() });
        }
        if !(self.dark_rate >= 0.0) {
            return Err(DetectionError::InvalidParameter { field: "dark_rate", reason: "must be ≥ 0".into() });
        }
        Ok(())
    }
}

/// Reading = t·(1 + y) + x0 + white phase noise.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClockModel {
    pub initial_offset: f64,
    pub fractional_frequency_offset: f64,
    pub white_pm_sigma: f64,
}

impl ClockModel {
    /// Offset of the clock from true time at `t`, without the white noise.
    pub fn offset_at(&self, t: f64) -> f64 {
        self.initial_offset + self.fractional_frequency_offset * t
    }

    pub fn read<R: Rng + ?Sized>(&self, t: f64, rng: &mut R) -> f64 {
        let noise = if self.white_pm_sigma > 0.0 { self.white_pm_sigma * standard_normal(rng) } else { 0.0 };
        t + self.offset_at(t) + noise
    }
}

pub(crate) fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(rand_distr::StandardNormal)
}

/// Probability density of t_s − t_i on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalDensity {
    pub times: Vec<f64>,
    /// Per second; Σ density·dt = 1.
    pub density: Vec<f64>,
}

impl ArrivalDensity {
    pub fn step(&self) -> f64 {
        self.times[1] - self.times[0]
    }

    pub fn integral(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.step()
    }

    pub fn mean(&self) -> f64 {
        self.times.iter().zip(&self.density).map(|(t, p)| t * p).sum::<f64>() * self.step()
    }

    pub fn std_dev(&self) -> f64 {
        let m = self.mean();
        (self.times.iter().zip(&self.density).map(|(t, p)| (t - m).powi(2) * p).sum::<f64>() * self.step()).sqrt()
    }

    /// Full width at half maximum by linear interpolation.
    pub fn fwhm(&self) -> f64 {
        let (imax, &pmax) = self.density.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).expect("non-empty");
        let half = 0.5 * pmax;
        let p = &self.density;
        let t = &self.times;
        let mut l = imax;
        while l > 0 && p[l] > half {
            l -= 1;
        }
        let mut r = imax;
        while r + 1 < p.len() && p[r] > half {
            r += 1;
        }
        let left = t[l] + (half - p[l]) / (p[l + 1] - p[l]) * (t[l + 1] - t[l]);
        let right = t[r - 1] + (half - p[r - 1]) / (p[r] - p[r - 1]) * (t[r] - t[r - 1]);
        right - left
    }

    /// Inverse-CDF sampler over grid cells.
    pub fn sampler(&self) -> DensitySampler {
        let mut cdf = Vec::with_capacity(self.density.len());
        let mut acc = 0.0;
        for &p in &self.density {
            acc += p.max(0.0);
            cdf.push(acc);
        }
        cdf.iter_mut().for_each(|c| *c /= acc);
        DensitySampler { start: self.times[0], step: self.step(), cdf }
    }
}

/// Draws values from an [`ArrivalDensity`].
#[derive(Debug, Clone)]
pub struct DensitySampler {
    start: f64,
    step: f64,
    cdf: Vec<f64>,
}

impl DensitySampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let k = self.cdf.partition_point(|&c| c < u).min(self.cdf.len() - 1);
        let lo = if k == 0 { 0.0 } else { self.cdf[k - 1] };
        let frac = if self.cdf[k] > lo { (u - lo) / (self.cdf[k] - lo) } else { 0.5 };
        self.start + (k as f64 - 0.5 + frac) * self.step
    }
}

/// Total Gaussian jitter σ of the detection chain.
pub fn total_jitter(a: &DetectorModel, b: &DetectorModel, instrument_jitter: f64) -> f64 {
    (a.timing_jitter.powi(2) + b.timing_jitter.powi(2) + instrument_jitter.powi(2)).sqrt()
}

/// Variance of t_s − t_i for the Gaussian JSA after equal per-arm GVD·length
/// `gvd_length` (s²), before jitter.
pub fn biphoton_difference_variance(source: &PhotonPairSource, gvd_length: f64) -> f64 {
    let sm = source.difference_bandwidth;
    1.0 / (sm * sm) + gvd_length.powi(2) * source.difference_marginal_sigma().powi(2)
}

/// Instrument jitter σ that makes the no-fiber FWHM equal `target_fwhm`.
pub fn instrument_jitter_for_width(
    source: &PhotonPairSource,
    a: &DetectorModel,
    b: &DetectorModel,
    target_fwhm: f64,
) -> Result<f64, DetectionError> {
    let target_var = (target_fwhm / fwhm_per_sigma()).powi(2);
    let rest =
        target_var - biphoton_difference_variance(source, 0.0) - a.timing_jitter.powi(2) - b.timing_jitter.powi(2);
    if rest < 0.0 {
        return Err(DetectionError::InvalidParameter {
            field: "timing_jitter",
            reason: "detector jitter alone exceeds the target width".into(),
        });
    }
    Ok(rest.sqrt())
}

/// Ridge skew κ that makes the dispersed FWHM equal `target_fwhm`.
pub fn ridge_skew_for_width(
    source: &PhotonPairSource,
    gvd_length: f64,
    jitter_sigma: f64,
    target_fwhm: f64,
) -> Result<f64, DetectionError> {
    let sm = source.difference_bandwidth;
    let target_var = (target_fwhm / fwhm_per_sigma()).powi(2);
    let chirp_var = target_var - jitter_sigma.powi(2) - 1.0 / (sm * sm);
    let marginal_sq = chirp_var / gvd_length.powi(2) - sm * sm;
    if marginal_sq < 0.0 {
        return Err(DetectionError::InvalidParameter {
            field: "ridge_skew",
            reason: "target width is below the unskewed dispersed width".into(),
        });
    }
    Ok(marginal_sq.sqrt() / source.sum_bandwidth)
}

/// Density of t_s − t_i: per-row FFT of the dispersed JSA along the difference
/// axis, |·|² summed over the sum axis, then convolved with the total jitter.
pub fn arrival_difference_density(
    jsa: &JointSpectralAmplitude,
    detector_a: &DetectorModel,
    detector_b: &DetectorModel,
    instrument_jitter: f64,
) -> Result<ArrivalDensity, DetectionError> {
    detector_a.validate()?;
    detector_b.validate()?;
    if !(instrument_jitter >= 0.0) {
        return Err(DetectionError::InvalidParameter { field: "instrument_jitter", reason: "must be ≥ 0".into() });
    }
    let (nu, nw) = jsa.shape();
    let dw = jsa.difference_step();
    let amp = jsa.amplitude();
    let peak = amp.iter().map(|a| a.norm_sqr()).fold(0.0, f64::max);
    let floor = 1e-12 * peak;

    // Mean linear phase slope along w, removed before the transform and
    // restored as a shift of the time axis.
    let (mut slope_num, mut slope_den) = (0.0, 0.0);
    for iu in 0..nu {
        for iw in 0..nw - 1 {
            let (a0, a1) = (amp[iu * nw + iw], amp[iu * nw + iw + 1]);
            let wgt = a0.norm_sqr().min(a1.norm_sqr());
            if wgt > floor {
                slope_num += wgt * (a1 * a0.conj()).arg();
                slope_den += wgt;
            }
        }
    }
    let slope = if slope_den > 0.0 { slope_num / slope_den / dw } else { 0.0 };
    let rotate = |iw: usize| Complex64::from_polar(1.0, -slope * dw * iw as f64);

    let mut max_step: f64 = 0.0;
    for iu in 0..nu {
        for iw in 0..nw - 1 {
            let (a0, a1) = (amp[iu * nw + iw] * rotate(iw), amp[iu * nw + iw + 1] * rotate(iw + 1));
            if a0.norm_sqr() > floor && a1.norm_sqr() > floor {
                max_step = max_step.max((a1 * a0.conj()).arg().abs());
            }
        }
    }
    if max_step > PI / 2.0 {
        let required = ((nw as f64) * max_step / (PI / 2.0)).ceil() as usize;
        return Err(DetectionError::Resolution { max_step, required_points: required.next_power_of_two() });
    }

    let mut planner = FftPlanner::<f64>::new();
    let mut n_fft = nw.next_power_of_two();
    let (times, mut density) = loop {
        let fft = planner.plan_fft_forward(n_fft);
        let mut acc = vec![0.0; n_fft];
        let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
        for iu in 0..nu {
            buf.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
            for iw in 0..nw {
                buf[iw] = amp[iu * nw + iw] * rotate(iw);
            }
            fft.process(&mut buf);
            for (a, b) in acc.iter_mut().zip(&buf) {
                *a += b.norm_sqr();
            }
        }
        let dtau = 4.0 * PI / (n_fft as f64 * dw);
        // fftshift: index k ↔ τ = (k − n/2)·dτ
        let half = n_fft / 2;
        let times: Vec<f64> = (0..n_fft).map(|k| (k as f64 - half as f64) * dtau + 2.0 * slope).collect();
        let dens: Vec<f64> = (0..n_fft).map(|k| acc[(k + half) % n_fft]).collect();
        let total: f64 = dens.iter().sum::<f64>() * dtau;
        let dens: Vec<f64> = dens.iter().map(|d| d / total).collect();
        let d = ArrivalDensity { times, density: dens };
        if d.std_dev() / dtau >= 8.0 || n_fft >= 1 << 22 {
            break (d.times, d.density);
        }
        n_fft *= 2;
    };

    let sigma = total_jitter(detector_a, detector_b, instrument_jitter);
    let dtau = times[1] - times[0];
    if sigma > 0.25 * dtau {
        let reach = (6.0 * sigma / dtau).ceil() as usize;
        let kernel: Vec<f64> = (0..=2 * reach)
            .map(|k| {
                let x = (k as f64 - reach as f64) * dtau;
                (-0.5 * x * x / (sigma * sigma)).exp()
            })
            .collect();
        let ksum: f64 = kernel.iter().sum();
        let n = density.len();
        let mut out = vec![0.0; n + 2 * reach];
        for (i, &p) in density.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for (k, &kv) in kernel.iter().enumerate() {
                out[i + k] += p * kv / ksum;
            }
        }
        let start = times[0] - reach as f64 * dtau;
        let new_times = (0..out.len()).map(|k| start + k as f64 * dtau).collect();
        density = out;
        return Ok(ArrivalDensity { times: new_times, density });
    }
    Ok(ArrivalDensity { times, density })
}

/// One detector's timestamps in its own clock timescale.
#[derive(Debug, Clone, PartialEq)]
pub struct TimestampStream {
    pub detector_id: String,
    pub times: Vec<f64>,
}

impl TimestampStream {
    pub fn validate(&self) -> Result<(), DetectionError> {
        if let Some(index) = self.times.windows(2).position(|w| w[1] <= w[0]) {
            return Err(DetectionError::Unsorted { stream: self.detector_id.clone(), index: index + 1 });
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, mut out: W, header: bool) -> Result<(), DetectionError> {
        if header {
            writeln!(out, "detector_id,time_ps")?;
        }
        for t in &self.times {
            writeln!(out, "{},{:.11e}", self.detector_id, t * 1e12)?;
        }
        Ok(())
    }
}

/// Write several streams to one CSV.
pub fn write_timestamps_csv(path: impl AsRef<Path>, streams: &[&TimestampStream]) -> Result<(), DetectionError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "detector_id,time_ps")?;
    for s in streams {
        s.write_csv(&mut f, false)?;
    }
    Ok(())
}

/// Read a `detector_id,time_ps` CSV into streams, in order of first appearance.
pub fn read_timestamps_csv(path: impl AsRef<Path>) -> Result<Vec<TimestampStream>, DetectionError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(csv_error)?;
    let mut streams: Vec<TimestampStream> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if line == 1 && record.get(0) == Some("detector_id") {
            continue;
        }
        let (Some(id), Some(t), 2) = (record.get(0), record.get(1), record.len()) else {
            return Err(DetectionError::Parse { line, reason: "expected detector_id,time_ps".into() });
        };
        let t: f64 = t.parse().map_err(|e| DetectionError::Parse { line, reason: format!("`{t}`: {e}") })?;
        match streams.iter_mut().find(|s| s.detector_id == id) {
            Some(s) => s.times.push(t * 1e-12),
            None => streams.push(TimestampStream { detector_id: id.to_string(), times: vec![t * 1e-12] }),
        }
    }
    for s in &streams {
        s.validate()?;
    }
    Ok(streams)
}

fn csv_error(e: csv::Error) -> DetectionError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => DetectionError::Io(io),
        other => DetectionError::Parse { line, reason: format!("{other:?}") },
    }
}

/// Parameters of a timestamp simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct TimestampSimulation {
    /// Pairs per second arriving at the detectors.
    pub pair_rate: f64,
    pub duration: f64,
    pub clock_a: ClockModel,
    pub clock_b: ClockModel,
    pub detector_a: DetectorModel,
    pub detector_b: DetectorModel,
    /// Input-rate cap per detector (event-timer throttle), counts/s.
    pub rate_cap: Option<f64>,
    pub memory_cap_events: usize,
}

impl TimestampSimulation {
    /// Acceptance probability of the rate cap for each stream.
    pub fn throttle(&self) -> (f64, f64) {
        let singles = |d: &DetectorModel| self.pair_rate * d.efficiency + d.dark_rate;
        match self.rate_cap {
            Some(cap) => ((cap / singles(&self.detector_a)).min(1.0), (cap / singles(&self.detector_b)).min(1.0)),
            None => (1.0, 1.0),
        }
    }

    /// Singles rates after throttling.
    pub fn singles_rates(&self) -> (f64, f64) {
        let (pa, pb) = self.throttle();
        (
            (self.pair_rate * self.detector_a.efficiency + self.detector_a.dark_rate) * pa,
            (self.pair_rate * self.detector_b.efficiency + self.detector_b.dark_rate) * pb,
        )
    }

    /// True coincidence rate after throttling.
    pub fn coincidence_rate(&self) -> f64 {
        let (pa, pb) = self.throttle();
        self.pair_rate * self.detector_a.efficiency * self.detector_b.efficiency * pa * pb
    }
}

/// Poisson pair emission, efficiency thinning, dark counts, rate cap and clocks.
pub fn simulate_timestamps(
    sim: &TimestampSimulation,
    density: &ArrivalDensity,
    seed: u64,
) -> Result<(TimestampStream, TimestampStream), DetectionError> {
    if !(sim.duration > 0.0) {
        return Err(DetectionError::InvalidParameter { field: "duration", reason: "must be > 0".into() });
    }
    if !(sim.pair_rate >= 0.0) {
        return Err(DetectionError::InvalidParameter { field: "pair_rate", reason: "must be ≥ 0".into() });
    }
    sim.detector_a.validate()?;
    sim.detector_b.validate()?;
    let (ra, rb) = sim.singles_rates();
    let expected = (ra + rb) * sim.duration;
    if expected > sim.memory_cap_events as f64 {
        return Err(DetectionError::Resource { expected_events: expected, cap: sim.memory_cap_events });
    }
    let (pa, pb) = sim.throttle();
    let ea = sim.detector_a.efficiency * pa;
    let eb = sim.detector_b.efficiency * pb;
    let mut rng = seeded_rng(seed);
    let t = sim.duration;
    let n_both = poisson(&mut rng, sim.pair_rate * ea * eb * t);
    let n_a_only = poisson(&mut rng, sim.pair_rate * ea * (1.0 - eb) * t);
    let n_b_only = poisson(&mut rng, sim.pair_rate * (1.0 - ea) * eb * t);
    let n_dark_a = poisson(&mut rng, sim.detector_a.dark_rate * pa * t);
    let n_dark_b = poisson(&mut rng, sim.detector_b.dark_rate * pb * t);

    let sampler = density.sampler();
    let mut a = Vec::with_capacity((n_both + n_a_only + n_dark_a) as usize);
    let mut b = Vec::with_capacity((n_both + n_b_only + n_dark_b) as usize);
    for _ in 0..n_both {
        let te = rng.random::<f64>() * t;
        let d = sampler.sample(&mut rng);
        a.push(te);
        b.push(te + d);
    }
    for _ in 0..n_a_only {
        let te = rng.random::<f64>() * t;
        a.push(te);
    }
    for _ in 0..n_b_only {
        let te = rng.random::<f64>() * t;
        b.push(te + sampler.sample(&mut rng));
    }
    for _ in 0..n_dark_a {
        a.push(rng.random::<f64>() * t);
    }
    for _ in 0..n_dark_b {
        b.push(rng.random::<f64>() * t);
    }
    let finish = |times: Vec<f64>, clock: &ClockModel, rng: &mut rand_chacha::ChaCha8Rng| {
        let mut out: Vec<f64> = times.into_iter().map(|x| clock.read(x, rng)).collect();
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    };
    let a = finish(a, &sim.clock_a, &mut rng);
    let b = finish(b, &sim.clock_b, &mut rng);
    Ok((TimestampStream { detector_id: "a".into(), times: a }, TimestampStream { detector_id: "b".into(), times: b }))
}

/// Histogram of t_a − t_b. Bin `k` is centered at `(k − half)·bin_width`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoincidenceHistogram {
    pub bin_width: f64,
    pub window: f64,
    pub bins: Vec<u64>,
    pub total_coincidences: u64,
}

impl CoincidenceHistogram {
    pub fn half_bins(&self) -> usize {
        self.bins.len() / 2
    }

    pub fn center(&self, k: usize) -> f64 {
        (k as f64 - self.half_bins() as f64) * self.bin_width
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.bins.len()).map(|k| self.center(k)).collect()
    }

    pub fn empty(bin_width: f64, window: f64) -> Self {
        let half = (window / bin_width).round() as usize;
        Self { bin_width, window: half as f64 * bin_width, bins: vec![0; 2 * half + 1], total_coincidences: 0 }
    }

    /// Add a difference value; returns false if it falls outside.
    pub fn add(&mut self, diff: f64) -> bool {
        let half = self.half_bins() as i64;
        let k = (diff / self.bin_width).round() as i64;
        if k < -half || k > half {
            return false;
        }
        self.bins[(k + half) as usize] += 1;
        self.total_coincidences += 1;
        true
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), DetectionError> {
        writeln!(out, "bin_center_ps,counts")?;
        for (k, c) in self.bins.iter().enumerate() {
            writeln!(out, "{:.11e},{}", self.center(k) * 1e12, c)?;
        }
        Ok(())
    }
}

/// Two-pointer sweep over sorted streams.
pub fn coincidence_histogram(
    a: &TimestampStream,
    b: &TimestampStream,
    bin_width: f64,
    window: f64,
) -> Result<CoincidenceHistogram, DetectionError> {
    if !(bin_width > 0.0) {
        return Err(DetectionError::InvalidParameter { field: "bin_width", reason: "must be > 0".into() });
    }
    if !(window >= bin_width) {
        return Err(DetectionError::InvalidParameter { field: "window", reason: "must be ≥ bin_width".into() });
    }
    a.validate()?;
    b.validate()?;
    let mut hist = CoincidenceHistogram::empty(bin_width, window);
    let edge = (hist.half_bins() as f64 + 0.5) * bin_width;
    let bt = &b.times;
    let mut lo = 0;
    for &ta in &a.times {
        while lo < bt.len() && bt[lo] < ta - edge {
            lo += 1;
        }
        let mut j = lo;
        while j < bt.len() && bt[j] <= ta + edge {
            hist.add(ta - bt[j]);
            j += 1;
        }
    }
    Ok(hist)
}

/// Histogram-level draw of one acquisition epoch: true coincidences from the
/// density (negated into t_a − t_b and shifted by `shift`) plus a uniform
/// accidental floor with mean r_a·r_b·bin_width·duration per bin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochSampling {
    pub coincidence_rate: f64,
    pub singles_a: f64,
    pub singles_b: f64,
    pub duration: f64,
    pub bin_width: f64,
    pub window: f64,
}

pub fn sample_epoch_histogram<R: Rng + ?Sized>(
    p: &EpochSampling,
    sampler: &DensitySampler,
    shift: f64,
    rng: &mut R,
) -> CoincidenceHistogram {
    let mut hist = CoincidenceHistogram::empty(p.bin_width, p.window);
    let n_true = poisson(rng, p.coincidence_rate * p.duration);
    for _ in 0..n_true {
        hist.add(shift - sampler.sample(rng));
    }
    let nbins = hist.bins.len() as f64;
    let n_acc = poisson(rng, p.singles_a * p.singles_b * p.bin_width * p.duration * nbins);
    let edge = (hist.half_bins() as f64 + 0.5) * p.bin_width;
    for _ in 0..n_acc {
        let x = -edge + rng.random::<f64>() * 2.0 * edge;
        hist.add(x.min(edge * (1.0 - 1e-15)));
    }
    hist
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Half-width of the fit window in units of the initial σ estimate.
    pub window_sigmas: f64,
    pub min_peak_to_background: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { max_iterations: 200, window_sigmas: 4.0, min_peak_to_background: 3.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianFitResult {
    pub center: f64,
    pub sigma: f64,
    /// Peak height, counts per bin.
    pub amplitude: f64,
    pub center_stderr: f64,
    pub sigma_stderr: f64,
    /// Counts per bin.
    pub background: f64,
    /// Counts under the Gaussian.
    pub peak_counts: f64,
    pub iterations: usize,
}

impl GaussianFitResult {
    pub fn fwhm(&self) -> f64 {
        self.sigma * fwhm_per_sigma()
    }
}

fn moving_average(y: &[f64], half: usize) -> Vec<f64> {
    let n = y.len();
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + y[i];
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

/// Poisson-weighted Levenberg–Marquardt fit of A·exp(−(t−c)²/2σ²) + b.
pub fn fit_gaussian(hist: &CoincidenceHistogram, opts: &FitOptions) -> Result<GaussianFitResult, FitError> {
    let n = hist.bins.len();
    if n < 8 {
        return Err(FitError::Rejected("histogram has fewer than 8 bins".into()));
    }
    let y: Vec<f64> = hist.bins.iter().map(|&c| c as f64).collect();
    let bw = hist.bin_width;
    let outer = (n / 10).max(1);
    let b0 = (y[..outer].iter().sum::<f64>() + y[n - outer..].iter().sum::<f64>()) / (2 * outer) as f64;
    // Coarse location from a heavily smoothed copy, then background-subtracted
    // moments over a shrinking window.
    let half = (n / 50).max(1);
    let smooth = moving_average(&y, half);
    let (coarse, &peak) = smooth.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).expect("non-empty");
    if coarse < half || coarse + half >= n {
        let mean = y.iter().sum::<f64>() / n as f64;
        let span = (2 * half + 1) as f64;
        if peak - mean > 6.0 * (mean / span).sqrt() + 3.0 / span {
            return Err(FitError::PeakNotCaptured);
        }
        return Err(FitError::Rejected("no significant peak inside the window".into()));
    }
    let (mut mu, mut sd) = (coarse as f64, (n / 40).max(2) as f64);
    let mut excess = 0.0;
    for _ in 0..8 {
        let reach = (3.0 * sd).max(3.0);
        let lo = (mu - reach).floor().max(0.0) as usize;
        let hi = ((mu + reach).ceil() as usize + 1).min(n);
        let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for k in lo..hi {
            let e = y[k] - b0;
            s0 += e;
            let d = k as f64 - mu;
            s1 += e * d;
            s2 += e * d * d;
        }
        if !(s0 > 0.0) {
            return Err(FitError::Rejected("no excess counts over background".into()));
        }
        let m = s1 / s0;
        let var = s2 / s0 - m * m;
        let m = (mu + m).clamp(0.0, (n - 1) as f64);
        if !(var > 0.0) {
            // sparse tails pull the window variance negative; recentre and narrow
            mu = m;
            sd = (0.5 * sd).max(0.5);
            excess = 0.0;
            continue;
        }
        mu = m;
        sd = var.sqrt().max(0.5);
        excess = s0;
    }
    if !(excess > 0.0) {
        return Err(FitError::Rejected("peak width is not resolved".into()));
    }
    if mu - 2.0 * sd < 0.0 || mu + 2.0 * sd > (n - 1) as f64 {
        return Err(FitError::PeakNotCaptured);
    }
    let i0 = (mu.round() as usize).min(n - 1);
    let sigma0 = sd * bw;
    // ±3σ moments see 97.3% of a Gaussian, with a truncated second moment.
    let a0 = excess / (0.9973 * sd * (2.0 * PI).sqrt());
    let s_max = a0 + b0;
    if b0 > 0.0 && s_max / b0 <= opts.min_peak_to_background {
        return Err(FitError::Rejected(format!(
            "peak-to-background ratio {:.2} ≤ {}",
            s_max / b0,
            opts.min_peak_to_background
        )));
    }
    let reach = ((2.0 * sd).ceil() as usize).max(1);
    let (lo2, hi2) = (i0.saturating_sub(reach), (i0 + reach + 1).min(n));
    let excess: f64 = y[lo2..hi2].iter().map(|v| v - b0).sum();
    let noise = (b0 * (hi2 - lo2) as f64 + 1.0).sqrt();
    if excess <= 5.0 * noise {
        return Err(FitError::Rejected(format!("peak excess {excess:.1} counts is not significant over background")));
    }

    let reach = (opts.window_sigmas * sigma0 / bw).ceil() as usize;
    let lo = i0.saturating_sub(reach);
    let hi = (i0 + reach + 1).min(n);
    // Work in bins relative to the peak bin so all four parameters are O(1).
    let origin = hist.center(i0);
    let t: Vec<f64> = (lo..hi).map(|k| (hist.center(k) - origin) / bw).collect();
    let yy = &y[lo..hi];

    let model = |p: &Vector4<f64>, ti: f64| -> (f64, Vector4<f64>) {
        let (a, c, s, b) = (p[0], p[1], p[2], p[3]);
        let x = ti - c;
        let e = (-0.5 * x * x / (s * s)).exp();
        let m = (a * e + b).max(1e-9);
        (m, Vector4::new(e, a * e * x / (s * s), a * e * x * x / (s * s * s), 1.0))
    };
    let nll = |p: &Vector4<f64>| -> f64 {
        t.iter()
            .zip(yy)
            .map(|(&ti, &yi)| {
                let (m, _) = model(p, ti);
                m - if yi > 0.0 { yi * m.ln() } else { 0.0 }
            })
            .sum()
    };
    // `observed` takes the larger of the expected and observed curvature per
    // bin; near a zero background the expected one overshoots.
    let normal = |p: &Vector4<f64>, observed: bool| -> (Matrix4<f64>, Vector4<f64>) {
        let mut h = Matrix4::zeros();
        let mut g = Vector4::zeros();
        for (&ti, &yi) in t.iter().zip(yy) {
            let (m, j) = model(p, ti);
            let w = 1.0 / m;
            let wh = if observed { w.max(yi * w * w) } else { w };
            h += j * j.transpose() * wh;
            g += j * ((yi - m) * w);
        }
        (h, g)
    };

    let mut p = Vector4::new(a0.max(1e-3), 0.0, sd, b0.max(0.0));
    let mut cost = nll(&p);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        iterations += 1;
        let (h, mut g) = normal(&p, true);
        let mut damped = h;
        for k in 0..4 {
            damped[(k, k)] += lambda * h[(k, k)].max(1e-300);
        }
        // background pinned at zero while the gradient pushes it negative
        if p[3] <= 0.0 && g[3] <= 0.0 {
            for k in 0..4 {
                damped[(3, k)] = 0.0;
                damped[(k, 3)] = 0.0;
            }
            damped[(3, 3)] = 1.0;
            g[3] = 0.0;
        }
        let Some(step) = damped.lu().solve(&g) else {
            lambda *= 10.0;
            continue;
        };
        let mut cand = p + step;
        cand[3] = cand[3].max(0.0);
        if !(cand[2] > 0.0 && cand[0] > 0.0) || !cand.iter().all(|v| v.is_finite()) {
            lambda *= 10.0;
            continue;
        }
        let c = nll(&cand);
        if c <= cost {
            // Newton decrement: expected further gain in log-likelihood.
            let small = step.dot(&g) < 1e-8;
            p = cand;
            let improvement = cost - c;
            cost = c;
            lambda = (lambda / 3.0).max(1e-12);
            if small || improvement < 1e-10 * cost.abs().max(1.0) {
                converged = true;
                break;
            }
        } else {
            lambda *= 4.0;
            if lambda > 1e12 {
                converged = true;
                break;
            }
        }
    }
    let residual_norm = t
        .iter()
        .zip(yy)
        .map(|(&ti, &yi)| {
            let (m, _) = model(&p, ti);
            (yi - m).powi(2) / m
        })
        .sum::<f64>()
        .sqrt();
    if !converged {
        return Err(FitError::NonConvergence { iterations, residual_norm });
    }
    let (mut h, _) = normal(&p, false);
    if p[3] <= 0.0 {
        // background at its bound: covariance of the other three
        for k in 0..4 {
            h[(3, k)] = 0.0;
            h[(k, 3)] = 0.0;
        }
        h[(3, 3)] = 1.0;
    }
    let cov = h.try_inverse().ok_or(FitError::NonConvergence { iterations, residual_norm })?;
    if !(cov[(1, 1)] > 0.0 && cov[(2, 2)] > 0.0) {
        return Err(FitError::NonConvergence { iterations, residual_norm });
    }
    let center = origin + p[1] * bw;
    if center.abs() > hist.half_bins() as f64 * bw {
        return Err(FitError::PeakNotCaptured);
    }
    Ok(GaussianFitResult {
        center,
        sigma: p[2] * bw,
        amplitude: p[0],
        center_stderr: cov[(1, 1)].sqrt() * bw,
        sigma_stderr: cov[(2, 2)].sqrt() * bw,
        background: p[3],
        peak_counts: p[0] * p[2] * (2.0 * PI).sqrt(),
        iterations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OffsetEstimate {
    pub offset: f64,
    pub uncertainty: f64,
}

/// offset = center − calibration center; stderrs added in quadrature.
pub fn estimate_offset(
    fit: &GaussianFitResult,
    calibration_center: f64,
    calibration_stderr: Option<f64>,
) -> OffsetEstimate {
    let cal = calibration_stderr.unwrap_or(0.0);
    OffsetEstimate {
        offset: fit.center - calibration_center,
        uncertainty: (fit.center_stderr.powi(2) + cal * cal).sqrt(),
    }
}
