//! Evaluates the built-in vegetation indices on a synthetic leaf spectrum,
//! then shows an index the sensor cannot supply.

use bitdnn::eval::{vegetation_index, VegetationIndex, DEFAULT_TOLERANCE_NM};
use bitdnn::synthetic::linear_wavelengths;

/// Low visible reflectance with a green peak, a red trough, a steep red
/// edge, and a bright NIR plateau with a water dip near 1200 nm.
fn leaf(w: f64) -> f64 {
    let bump = |c: f64, s: f64| (-0.5 * ((w - c) / s).powi(2)).exp();
    let edge = 1.0 / (1.0 + (-(w - 715.0) / 15.0).exp());
    0.04 + 0.08 * bump(550.0, 30.0) - 0.02 * bump(670.0, 20.0) + 0.45 * edge - 0.15 * bump(1200.0, 60.0)
}

fn main() -> bitdnn::Result<()> {
    let wavelengths = linear_wavelengths(451, 400.0, 1300.0);
    let spectrum: Vec<f64> = wavelengths.iter().map(|&w| leaf(w)).collect();
    for idx in VegetationIndex::ALL {
        let v = vegetation_index(&spectrum, &wavelengths, idx, DEFAULT_TOLERANCE_NM)?;
        println!("{:<11} {v:+.4}", idx.name());
    }

    let narrow = linear_wavelengths(101, 450.0, 950.0);
    let spectrum: Vec<f64> = narrow.iter().map(|&w| leaf(w)).collect();
    match vegetation_index(&spectrum, &narrow, VegetationIndex::Ndwi, DEFAULT_TOLERANCE_NM) {
        Ok(v) => println!("NDWI on 450-950 nm: {v}"),
        Err(e) => println!("NDWI on 450-950 nm: {e}"),
    }
    Ok(())
}
