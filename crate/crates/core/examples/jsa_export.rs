//! Write the source JSA before and after 10 km per arm, plus its signal
//! marginal, as CSV.
//!
//! Usage: `cargo run --example jsa_export -- [OUT_DIR]`

use std::fs::File;
use std::io::BufWriter;
use std::sync::Arc;

use homsync::biphoton::{disperse_through, gaussian_jsa, PhotonPairSource};
use homsync::fiber_model::{DispersionModel, FiberLink};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "jsa_out".into());
    std::fs::create_dir_all(&out)?;
    let source = PhotonPairSource::default();
    let jsa = gaussian_jsa(&source, 96)?;
    let link = FiberLink::from_lengths(&[10e3], Arc::new(DispersionModel::bundled()))?;
    let dispersed = disperse_through(&jsa, &source, Some(&link), Some(&link), 22.0)?;

    jsa.write_csv(BufWriter::new(File::create(format!("{out}/jsa_source.csv"))?))?;
    dispersed.write_csv(BufWriter::new(File::create(format!("{out}/jsa_10km.csv"))?))?;
    // |f|² is unchanged by dispersion; only the phase moves.
    println!("norm before {:.6}, after {:.6}", jsa.norm(), dispersed.norm());

    let marginal = jsa.signal_marginal();
    let w: f64 = marginal.iter().map(|m| m.1).sum();
    let mean = marginal.iter().map(|m| m.0 * m.1).sum::<f64>() / w;
    let var = marginal.iter().map(|m| (m.0 - mean).powi(2) * m.1).sum::<f64>() / w;
    println!("signal detuning rms {:.3e} rad/s", var.sqrt());
    println!("wrote {out}/jsa_source.csv and {out}/jsa_10km.csv");
    Ok(())
}
