use homsync::config::{bundled_20km, AcquisitionPreset};
use homsync::detection::{
    biphoton_difference_variance, coincidence_histogram, fit_gaussian, read_timestamps_csv, sample_epoch_histogram,
    simulate_timestamps, total_jitter, write_timestamps_csv, DetectionError, EpochSampling, FitOptions,
    TimestampStream,
};
use homsync::fiber_model::gvd_coefficient;
use homsync::rng::seeded_rng;
use homsync::scenario::Scenario;
use homsync::timing_stats::log_log_slope;
use proptest::prelude::*;

fn scenario(preset: AcquisitionPreset) -> Scenario {
    let mut cfg = bundled_20km();
    cfg.acquisition.preset = preset;
    Scenario::build(cfg).unwrap()
}

#[test]
fn accidental_floor_matches_singles_product() {
    let sc = scenario(AcquisitionPreset::Tcspc100s);
    let cal = sc.arrival_density(false).unwrap();
    let sim = sc.timestamp_simulation(100.0);
    let (a, b) = simulate_timestamps(&sim, &cal, 11).unwrap();
    let bw = 4e-12;
    let h = coincidence_histogram(&a, &b, bw, 5e-9).unwrap();
    // bins beyond ±2 ns hold accidentals only
    let far: Vec<u64> = (0..h.bins.len()).filter(|&k| h.center(k).abs() > 2e-9).map(|k| h.bins[k]).collect();
    let observed: f64 = far.iter().map(|&c| c as f64).sum();
    let (ra, rb) = (a.times.len() as f64 / 100.0, b.times.len() as f64 / 100.0);
    let expected = ra * rb * bw * 100.0 * far.len() as f64;
    assert!((observed - expected).abs() < 3.0 * expected.sqrt(), "{observed} vs {expected}");
}

#[test]
fn fitted_width_composes_biphoton_and_jitter() {
    let sc = scenario(AcquisitionPreset::Tcspc100s);
    let k2 = gvd_coefficient(&sc.model, sc.source.center_nm(), 22.0).unwrap();
    let jitter = total_jitter(&sc.detector_a, &sc.detector_b, sc.instrument_jitter);
    let link = sc.arrival_density(true).unwrap();
    let p = EpochSampling { coincidence_rate: 2e3, ..sc.epoch_sampling() };
    let h = sample_epoch_histogram(&p, &link.sampler(), 0.0, &mut seeded_rng(5));
    let f = fit_gaussian(&h, &FitOptions::default()).unwrap();
    let oracle = biphoton_difference_variance(&sc.source, k2 * 10e3) + jitter * jitter;
    assert!((f.sigma.powi(2) - oracle).abs() / oracle < 0.05, "{} vs {oracle}", f.sigma.powi(2));
}

#[test]
fn center_stderr_scales_as_inverse_sqrt_n() {
    let sc = scenario(AcquisitionPreset::Tcspc100s);
    let cal = sc.arrival_density(false).unwrap();
    let s = cal.sampler();
    let base = sc.epoch_sampling();
    let (mut ns, mut errs) = (Vec::new(), Vec::new());
    for (i, d) in [10.0, 30.0, 100.0, 300.0, 1000.0].into_iter().enumerate() {
        let p = EpochSampling { duration: d, ..base };
        // average the reported stderr over a few draws
        let mut acc = 0.0;
        let mut n = 0.0;
        for r in 0..8 {
            let h = sample_epoch_histogram(&p, &s, 0.0, &mut seeded_rng(100 * i as u64 + r));
            let f = fit_gaussian(&h, &FitOptions::default()).unwrap();
            acc += f.center_stderr;
            n += h.total_coincidences as f64;
        }
        ns.push(n / 8.0);
        errs.push(acc / 8.0);
    }
    let slope = log_log_slope(&ns, &errs);
    assert!((slope + 0.5).abs() < 0.05, "slope {slope}");
}

#[test]
fn injected_clock_offset_adds_linearly() {
    let mut sc = scenario(AcquisitionPreset::Tcspc100s);
    let cal = sc.arrival_density(false).unwrap();
    let fit = |sc: &Scenario| {
        let (a, b) = simulate_timestamps(&sc.timestamp_simulation(20.0), &cal, 3).unwrap();
        fit_gaussian(&coincidence_histogram(&a, &b, 4e-12, 5e-9).unwrap(), &FitOptions::default()).unwrap()
    };
    let f0 = fit(&sc);
    sc.clock_a.initial_offset = 250e-12;
    let f1 = fit(&sc);
    // same seed, same draws: the shift is exact up to the bin quantization of the fit input
    assert!((f1.center - f0.center - 250e-12).abs() < 4e-12, "{:e}", f1.center - f0.center);
}

#[test]
fn memory_cap_is_a_resource_error() {
    let sc = scenario(AcquisitionPreset::Tcspc100s);
    let cal = sc.arrival_density(false).unwrap();
    let mut sim = sc.timestamp_simulation(100.0);
    sim.memory_cap_events = 1000;
    assert!(matches!(simulate_timestamps(&sim, &cal, 1), Err(DetectionError::Resource { .. })));
}

#[test]
fn timestamps_round_trip_through_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ts.csv");
    let a = TimestampStream { detector_id: "a".into(), times: vec![1e-9, 2.5e-6, 3.0] };
    let b = TimestampStream { detector_id: "b".into(), times: vec![4e-12, 7.0] };
    write_timestamps_csv(&path, &[&a, &b]).unwrap();
    let back = read_timestamps_csv(&path).unwrap();
    assert_eq!(back.len(), 2);
    for (x, y) in back.iter().zip([&a, &b]) {
        assert_eq!(x.detector_id, y.detector_id);
        for (p, q) in x.times.iter().zip(&y.times) {
            assert!((p - q).abs() <= 1e-11 * q.abs());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn shifting_stream_b_moves_the_peak(shift in -2e-9f64..2e-9) {
        let base: Vec<f64> = (0..400).map(|k| k as f64 * 1e-6 + (k % 7) as f64 * 3e-11).collect();
        let a = TimestampStream { detector_id: "a".into(), times: base.clone() };
        let b = TimestampStream { detector_id: "b".into(), times: base.iter().map(|t| t + shift).collect() };
        let h = coincidence_histogram(&a, &b, 4e-12, 3e-9).unwrap();
        let k = h.bins.iter().enumerate().max_by_key(|(_, &c)| c).unwrap().0;
        prop_assert!((h.center(k) + shift).abs() <= 4e-12);
    }

    #[test]
    fn histogram_counts_every_pair_in_window(n in 1usize..200) {
        let a = TimestampStream { detector_id: "a".into(), times: (0..n).map(|k| k as f64 * 1e-6).collect() };
        let h = coincidence_histogram(&a, &a, 4e-12, 1e-9).unwrap();
        prop_assert_eq!(h.total_coincidences, n as u64);
        prop_assert_eq!(h.bins.iter().sum::<u64>(), n as u64);
    }
}
