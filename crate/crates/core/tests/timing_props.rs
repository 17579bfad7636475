use homsync::rng::seeded_rng;
use homsync::timing_stats::{
    default_m_ladder, log_log_slope, tdev, tdev_default, tdev_from_csv, tdev_values, tdev_values_nonoverlapping,
    OffsetSeries, StatsError,
};
use proptest::prelude::*;
use rand_distr::{Distribution, Normal};

fn white(n: usize, sigma: f64, seed: u64) -> Vec<f64> {
    let mut rng = seeded_rng(seed);
    let d = Normal::new(0.0, sigma).unwrap();
    (0..n).map(|_| d.sample(&mut rng)).collect()
}

#[test]
fn three_samples_give_the_hand_value() {
    let (v, c) = tdev_values(&[0.0, 1.0, 0.0], 1).unwrap();
    assert_eq!(c, 1);
    assert!((v - (4.0f64 / 6.0).sqrt()).abs() < 1e-15);
}

#[test]
fn quadratic_phase_has_closed_form() {
    // x_k = c·k²: every windowed second difference sum is 2c·m³
    let c = 3e-13;
    let x: Vec<f64> = (0..200).map(|k| c * (k * k) as f64).collect();
    for m in [1, 2, 5, 13, 60] {
        let (v, _) = tdev_values(&x, m).unwrap();
        let oracle = 2.0 * c * (m * m) as f64 / 6f64.sqrt();
        assert!((v - oracle).abs() <= 1e-9 * oracle, "m={m}: {v} vs {oracle}");
    }
}

#[test]
fn white_phase_noise_follows_sigma_over_sqrt_m() {
    let sigma = 1e-12;
    let s = OffsetSeries::uniform(0.0, 12.0, white(200_000, sigma, 9)).unwrap();
    let r = tdev(&s, &[1, 4, 16, 64, 256]);
    for (tau, v) in r.taus.iter().zip(&r.tdev) {
        let m = tau / 12.0;
        let oracle = sigma / m.sqrt();
        assert!((v - oracle).abs() / oracle < 0.05, "m={m}: {v} vs {oracle}");
    }
    let slope = log_log_slope(&r.taus, &r.tdev);
    assert!((slope + 0.5).abs() < 0.03, "slope {slope}");
}

#[test]
fn nonoverlapping_agrees_on_average() {
    let x = white(60_000, 1.0, 4);
    for m in [1, 8, 32] {
        let (a, _) = tdev_values(&x, m).unwrap();
        let (b, cb) = tdev_values_nonoverlapping(&x, m).unwrap();
        assert!((a - b).abs() / a < 4.0 / (cb as f64).sqrt(), "m={m}: {a} vs {b}");
    }
}

#[test]
fn gaps_and_short_series_are_errors() {
    let e = OffsetSeries::uniform(0.0, 1.0, vec![0.0; 3]).unwrap_err();
    assert_eq!(e, StatsError::TooShort { len: 3, min: 4 });
    let times = vec![0.0, 12.0, 24.0, 60.0, 72.0];
    let e = OffsetSeries::new(times, vec![0.0; 5], None).unwrap_err();
    assert_eq!(e, StatsError::Gap { index: 3, missing: 2 });
    let e = OffsetSeries::new(vec![0.0, 1.0, 2.0, 3.0], vec![0.0; 3], None).unwrap_err();
    assert!(matches!(e, StatsError::LengthMismatch { field: "offsets", .. }));
}

#[test]
fn taus_beyond_a_third_of_the_record_are_dropped() {
    let s = OffsetSeries::uniform(0.0, 2.0, white(30, 1.0, 1)).unwrap();
    let r = tdev(&s, &[1, 10, 11]);
    assert_eq!(r.taus, vec![2.0, 20.0]);
    assert_eq!(r.rejected, vec![11]);
    assert_eq!(default_m_ladder(30), vec![1, 2, 4, 8]);
}

#[test]
fn csv_input_in_picoseconds_is_rescaled() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("offsets.csv");
    let x = white(400, 2.0, 3);
    let mut text = String::from("# comment line\nt_s,offset_ps\n");
    for (k, v) in x.iter().enumerate() {
        text.push_str(&format!("{:.11e},{:.11e}\n", k as f64 * 100.0, v));
    }
    std::fs::write(&path, text).unwrap();
    let from_file = tdev_from_csv(&path).unwrap();
    let direct = tdev_default(&OffsetSeries::uniform(0.0, 100.0, x.iter().map(|v| v * 1e-12).collect()).unwrap());
    assert_eq!(from_file.taus, direct.taus);
    for (a, b) in from_file.tdev.iter().zip(&direct.tdev) {
        assert!((a - b).abs() <= 1e-10 * b);
    }
}

#[test]
fn exported_series_round_trips_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("series.csv");
    let s = OffsetSeries::uniform(3.0, 12.0, white(500, 7e-12, 21)).unwrap();
    s.write_csv(std::fs::File::create(&path).unwrap()).unwrap();
    assert_eq!(tdev_from_csv(&path).unwrap(), tdev_default(&s));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn linear_phase_ramp_is_invisible(a in -1e-9f64..1e-9, b in -1e-12f64..1e-12, n in 12usize..200) {
        let x: Vec<f64> = (0..n).map(|k| a + b * k as f64).collect();
        for m in default_m_ladder(n) {
            let (v, _) = tdev_values(&x, m).unwrap();
            prop_assert!(v <= 1e-9 * (a.abs() + b.abs() * n as f64));
        }
    }

    #[test]
    fn constant_shift_leaves_tdev_unchanged(shift in -1e3f64..1e3, seed in 0u64..1000) {
        let x = white(64, 1.0, seed);
        let y: Vec<f64> = x.iter().map(|v| v + shift).collect();
        for m in default_m_ladder(64) {
            let (a, _) = tdev_values(&x, m).unwrap();
            let (b, _) = tdev_values(&y, m).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + shift.abs()));
        }
    }

    #[test]
    fn scaling_phase_scales_tdev(k in -50.0f64..50.0, seed in 0u64..1000) {
        let x = white(64, 1.0, seed);
        let y: Vec<f64> = x.iter().map(|v| k * v).collect();
        for m in default_m_ladder(64) {
            let (a, _) = tdev_values(&x, m).unwrap();
            let (b, _) = tdev_values(&y, m).unwrap();
            prop_assert!((b - k.abs() * a).abs() <= 1e-12 * (1.0 + b));
        }
    }
}
