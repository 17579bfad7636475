//! TDEV of synthetic white phase noise: the log-log slope sits at −½.

use homsync::rng::seeded_rng;
use homsync::timing_stats::{log_log_slope, tdev_default, OffsetSeries};
use rand_distr::{Distribution, Normal};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = seeded_rng(3);
    let noise = Normal::new(0.0, 2e-12)?;
    let x: Vec<f64> = (0..20_000).map(|_| noise.sample(&mut rng)).collect();
    let series = OffsetSeries::uniform(0.0, 12.0, x)?;
    let r = tdev_default(&series);
    for (tau, v) in r.taus.iter().zip(&r.tdev) {
        println!("{tau:>8} s  {:.3} ps", v * 1e12);
    }
    println!("slope {:.3}", log_log_slope(&r.taus, &r.tdev));
    Ok(())
}
