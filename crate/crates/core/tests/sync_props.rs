use std::sync::Arc;

use homsync::config::{bundled_20km, ScenarioConfig};
use homsync::scenario::Scenario;
use homsync::sync_loop::{run_sync, SyncEvent, SyncRun};

fn build(presets: &str, edit: impl FnOnce(&mut ScenarioConfig)) -> Scenario {
    let mut cfg = bundled_20km();
    cfg.apply_presets(presets).unwrap();
    edit(&mut cfg);
    Scenario::build(cfg).unwrap()
}

fn run(sc: &Scenario, duration: f64, with_detection: bool, seed: u64) -> SyncRun {
    let det = with_detection.then(|| {
        let cal = sc.arrival_density(false).unwrap();
        let link = Arc::new(sc.arrival_density(true).unwrap());
        sc.detection_setup(link, &cal)
    });
    run_sync(&sc.sync_scenario(det).unwrap(), duration, seed).unwrap()
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

fn peak_to_peak(x: &[f64]) -> f64 {
    x.iter().cloned().fold(f64::MIN, f64::max) - x.iter().cloned().fold(f64::MAX, f64::min)
}

#[test]
fn lock_suppresses_the_arm_drift() {
    let sc = build("", |_| {});
    let r = run(&sc, 20_000.0, false, 1);
    assert_eq!(r.lock_losses(), 0);
    let drift = rms(&r.path_drift);
    let resid = rms(r.in_loop_residual.offsets());
    assert!(resid < 0.05 * drift, "residual {resid:e} vs drift {drift:e}");
}

#[test]
fn open_loop_residual_is_the_drift() {
    let sc = build("lock-off", |_| {});
    let r = run(&sc, 5_000.0, false, 1);
    assert_eq!(r.in_loop_residual.offsets(), &r.path_drift[..]);
    assert_eq!(r.actuator_log.len(), 1);
}

#[test]
fn common_clock_offset_cancels_out_of_loop() {
    let base = build("", |_| {});
    let shifted = build("", |c| {
        c.clocks.a.initial_offset_ps = 300.0;
        c.clocks.b.initial_offset_ps = 300.0;
    });
    let a = run(&base, 1_200.0, true, 7).out_of_loop_offsets.unwrap();
    let b = run(&shifted, 1_200.0, true, 7).out_of_loop_offsets.unwrap();
    assert_eq!(a.offsets(), b.offsets());
}

#[test]
fn differential_clock_offset_appears_out_of_loop() {
    let base = build("", |_| {});
    let shifted = build("", |c| c.clocks.a.initial_offset_ps = 300.0);
    let a = run(&base, 1_200.0, true, 7).out_of_loop_offsets.unwrap();
    let b = run(&shifted, 1_200.0, true, 7).out_of_loop_offsets.unwrap();
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let moved = mean(b.offsets()) - mean(a.offsets());
    // the histogram shifts by the offset; only the bin quantization of the fit input differs
    assert!((moved.abs() - 300e-12).abs() < 4e-12, "{moved:e}");
}

#[test]
fn segmenting_the_arm_reduces_drift_and_lock_losses() {
    let single = build("single-10km", |_| {});
    let split = build("", |_| {});
    let rs = run(&single, 20_000.0, false, 3);
    let rm = run(&split, 20_000.0, false, 3);
    assert!(peak_to_peak(&rm.path_drift) < peak_to_peak(&rs.path_drift));
    assert!(rs.lock_losses() > rm.lock_losses(), "{} vs {}", rs.lock_losses(), rm.lock_losses());
    assert!(rs.events.iter().any(|e| matches!(e, SyncEvent::Reacquired { .. })));
}

#[test]
fn same_seed_same_run() {
    let sc = build("", |_| {});
    let a = run(&sc, 1_200.0, true, 11);
    let b = run(&sc, 1_200.0, true, 11);
    let c = run(&sc, 1_200.0, true, 12);
    assert_eq!(a.in_loop_residual, b.in_loop_residual);
    assert_eq!(a.out_of_loop_offsets, b.out_of_loop_offsets);
    assert_eq!(a.events, b.events);
    assert_ne!(a.out_of_loop_offsets, c.out_of_loop_offsets);
}

#[test]
fn too_short_duration_is_rejected() {
    let sc = build("", |_| {});
    assert!(run_sync(&sc.sync_scenario(None).unwrap(), 30.0, 1).is_err());
}
