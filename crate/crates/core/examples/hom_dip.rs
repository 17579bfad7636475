//! HOM dips for the three link lengths of the bundled scenario. The width
//! and visibility should not move with fiber length.

use homsync::config::{bundled_20km, LINK_PRESETS};
use homsync::hom::{dip_metrics, sample_dip_counts};
use homsync::scenario::Scenario;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sc = Scenario::build(bundled_20km())?;
    println!(
        "calibrated ridge skew {:.5}, distinguishability {:.4}",
        sc.source.ridge_skew, sc.source.distinguishability_factor
    );
    for (name, lengths) in LINK_PRESETS {
        let link = sc.links_from_lengths(lengths)?;
        let profile = sc.dip_profile(Some(&link), Some(&link))?;
        let m = dip_metrics(&profile)?;
        let counts = sample_dip_counts(&profile, 1e4, 1.0, 7);
        let min = counts.iter().min().copied().unwrap_or(0);
        println!(
            "{name:>10}: V = {:.4}, width = {:.4} ps, min at {:+.3} fs, fewest counts {min}",
            m.visibility,
            m.width_fwhm * 1e12,
            m.minimum_delay * 1e15
        );
    }
    Ok(())
}
