//! Fiber coefficients at the source wavelengths and the drift of single
//! versus segmented spools.

use std::sync::Arc;

use homsync::biphoton::PhotonPairSource;
use homsync::fiber_model::{
    dispersion_parameter, drift_segmented, drift_single, group_delay_coefficient, path_delay_difference,
    refractive_index, temperature_sensitivity_b, DispersionModel, FiberLink,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = Arc::new(DispersionModel::bundled());
    let source = PhotonPairSource::default();
    let t = 22.0;
    for nm in [source.signal_nm, source.idler_nm] {
        println!(
            "{nm} nm: n = {:.5}, n_g = {:.5}, D = {:.3} ps/(nm·km)",
            refractive_index(&model, nm, t)?,
            group_delay_coefficient(&model, nm, t)? * 299_792_458.0,
            dispersion_parameter(&model, nm, t)?
        );
    }
    let b = temperature_sensitivity_b(&model, &source, t)?;
    println!("B = {b:.4e} s/(m·°C)");

    let dt = 0.006;
    println!("single 10 km:  {:.3} ps", drift_single(b, 10e3, dt) * 1e12);
    println!("5 + 4 + 1 km:  {:.3} ps", drift_segmented(b, &[5e3, 4e3, 1e3], dt)? * 1e12);
    println!("10 × 1 km:     {:.3} ps", drift_segmented(b, &[1e3; 10], dt)? * 1e12);

    let link = FiberLink::from_lengths(&[5e3, 4e3, 1e3], model.clone())?;
    let pd = path_delay_difference(&link, &link, &source, t)?;
    println!("idler − signal group delay over 10 km per arm: {:.2} ps", pd.group_delay_term * 1e12);
    Ok(())
}
