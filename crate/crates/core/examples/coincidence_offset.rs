//! Timestamp-level offset measurement: no-fiber calibration, then the 20 km
//! link, each fitted with a Gaussian. An injected clock offset shows up
//! one-for-one in the estimate.

use homsync::config::bundled_20km;
use homsync::detection::{coincidence_histogram, estimate_offset, fit_gaussian, simulate_timestamps, FitOptions};
use homsync::fiber_model::path_delay_difference;
use homsync::scenario::Scenario;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut sc = Scenario::build(bundled_20km())?;
    let cal = sc.arrival_density(false)?;
    let link = sc.arrival_density(true)?;
    println!("coincidence FWHM: {:.2} ps without fiber, {:.2} ps with", cal.fwhm() * 1e12, link.fwhm() * 1e12);

    let opts = FitOptions::default();
    let measure = |sc: &Scenario, density, seed| -> Result<_, Box<dyn std::error::Error>> {
        let (a, b) = simulate_timestamps(&sc.timestamp_simulation(100.0), density, seed)?;
        let h = coincidence_histogram(&a, &b, 4e-12, 5e-9)?;
        Ok(fit_gaussian(&h, &opts)?)
    };
    let f0 = measure(&sc, &cal, 1)?;
    let f1 = measure(&sc, &link, 2)?;
    let est = estimate_offset(&f1, f0.center, Some(f0.center_stderr));
    let pd = path_delay_difference(&sc.link_signal, &sc.link_idler, &sc.source, 22.0)?;
    println!(
        "offset {:.2} ± {:.2} ps, group-delay prediction {:.2} ps",
        est.offset * 1e12,
        est.uncertainty * 1e12,
        pd.group_delay_term * 1e12
    );

    sc.clock_a.initial_offset = 100e-12;
    let f2 = measure(&sc, &link, 2)?;
    println!("with +100 ps on clock a: {:.2} ps", estimate_offset(&f2, f0.center, None).offset * 1e12);
    Ok(())
}
