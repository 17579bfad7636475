//! Lock the delay line for a few hours on the segmented link, then on a single
//! 10 km spool per arm where the drift outruns the capture range.

use homsync::config::bundled_20km;
use homsync::scenario::Scenario;
use homsync::sync_loop::run_sync;
use homsync::timing_stats::tdev_default;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for preset in ["link-20km", "single-10km"] {
        let mut cfg = bundled_20km();
        cfg.apply_preset(preset)?;
        let sc = Scenario::build(cfg)?;
        let run = run_sync(&sc.sync_scenario(None)?, 4.0 * 3600.0, sc.seed())?;
        let worst = run.imbalance_before.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let r = tdev_default(&run.in_loop_residual);
        println!(
            "{preset:>11}: {} lock losses in 4 h, worst imbalance {:.2} ps, in-loop TDEV {:.1} fs at {} s",
            run.lock_losses(),
            worst * 1e12,
            r.tdev.last().copied().unwrap_or(f64::NAN) * 1e15,
            r.taus.last().copied().unwrap_or(f64::NAN)
        );
        for e in run.events.iter().take(3) {
            println!("    {}", e.describe());
        }
    }
    Ok(())
}
