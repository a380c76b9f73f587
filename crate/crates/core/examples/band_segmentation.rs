//! Splits a 400-1000 nm sensor into the default seven spectral regions and
//! shows how many bands land in each and the resulting feature count.

use bitdnn::data::{segment_bands, BandSliceSet, HsiCube};
use bitdnn::stage1::{feature_count, TriangularCap};
use bitdnn::synthetic::linear_wavelengths;

fn main() -> bitdnn::Result<()> {
    let wavelengths = linear_wavelengths(61, 400.0, 1000.0);
    let cube = HsiCube::new(1, 1, wavelengths.clone(), vec![0.5; 61])?;
    let slices = segment_bands(&cube, &BandSliceSet::default())?;

    println!("{:<10} {:>6}  range", "slice", "bands");
    for (slice, bands) in slices.slices.iter().zip(&slices.band_index_ranges) {
        let range = match (bands.first(), bands.last()) {
            (Some(&a), Some(&b)) => format!("{:.0}-{:.0} nm", wavelengths[a], wavelengths[b]),
            _ => "empty".to_string(),
        };
        println!("{:<10} {:>6}  {range}", slice.name, bands.len());
    }

    let m = slices.non_empty().len();
    for n_class in [3, 9, 17] {
        let full = feature_count(m, n_class, None)?;
        let capped = feature_count(m, n_class, TriangularCap::Auto.resolve(n_class))?;
        println!("{m} slices x {n_class:>2} classes: F_N = {full:>7} (capped {capped})");
    }
    Ok(())
}
