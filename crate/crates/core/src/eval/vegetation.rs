//! Two- and three-band vegetation indices evaluated on nearest bands.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::HsiCube;
use crate::error::{Error, Result};

pub const DEFAULT_TOLERANCE_NM: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VegetationIndex {
    #[serde(rename = "NDVI")]
    Ndvi,
    #[serde(rename = "PRI")]
    Pri,
    #[serde(rename = "CIred-edge")]
    CiRedEdge,
    #[serde(rename = "NDWI")]
    Ndwi,
    #[serde(rename = "TVI")]
    Tvi,
    #[serde(rename = "SIPI")]
    Sipi,
    #[serde(rename = "PSRI")]
    Psri,
    #[serde(rename = "NPCI")]
    Npci,
    #[serde(rename = "OSAVI")]
    Osavi,
}

impl VegetationIndex {
    pub const ALL: [VegetationIndex; 9] = [
        Self::Ndvi,
        Self::Pri,
        Self::CiRedEdge,
        Self::Ndwi,
        Self::Tvi,
        Self::Sipi,
        Self::Psri,
        Self::Npci,
        Self::Osavi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Ndvi => "NDVI",
            Self::Pri => "PRI",
            Self::CiRedEdge => "CIred-edge",
            Self::Ndwi => "NDWI",
            Self::Tvi => "TVI",
            Self::Sipi => "SIPI",
            Self::Psri => "PSRI",
            Self::Npci => "NPCI",
            Self::Osavi => "OSAVI",
        }
    }

    /// Wavelengths (nm) in the order [`VegetationIndex::evaluate`] expects.
    pub fn wavelengths(self) -> &'static [f64] {
        match self {
            Self::Ndvi | Self::CiRedEdge | Self::Osavi => &[760.0, 560.0],
            Self::Pri => &[570.0, 531.0],
            Self::Ndwi => &[860.0, 1240.0],
            Self::Tvi => &[750.0, 550.0, 670.0],
            Self::Sipi => &[800.0, 445.0, 680.0],
            Self::Psri => &[678.0, 550.0, 750.0],
            Self::Npci => &[680.0, 430.0],
        }
    }

    /// Applies the formula to reflectances at [`VegetationIndex::wavelengths`].
    pub fn evaluate(self, r: &[f64]) -> f64 {
        match self {
            Self::Ndvi | Self::Pri | Self::Ndwi | Self::Npci => (r[0] - r[1]) / (r[0] + r[1]),
            Self::CiRedEdge => r[0] / r[1] - 1.0,
            Self::Tvi => 0.5 * (120.0 * (r[0] - r[1]) - 200.0 * (r[2] - r[1])),
            Self::Sipi => (r[0] - r[1]) / (r[0] + r[2]),
            Self::Psri => (r[0] - r[1]) / r[2],
            Self::Osavi => (r[0] - r[1]) / (r[0] + r[1] + 0.16),
        }
    }
}

impl fmt::Display for VegetationIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for VegetationIndex {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown vegetation index {s:?}")))
    }
}

/// Index of the band center nearest to `target`, if within `tolerance_nm`.
/// Ties go to the lower band.
pub fn nearest_band(wavelengths: &[f64], target: f64, tolerance_nm: f64) -> Option<usize> {
    let (best, dist) = wavelengths
        .iter()
        .enumerate()
        .map(|(i, &w)| (i, (w - target).abs()))
        .min_by(|a, b| a.1.total_cmp(&b.1))?;
    (dist <= tolerance_nm).then_some(best)
}

/// Resolves the band indices an index needs on a sensor.
pub fn resolve_bands(index: VegetationIndex, wavelengths: &[f64], tolerance_nm: f64) -> Result<Vec<usize>> {
    index
        .wavelengths()
        .iter()
        .map(|&w| {
            nearest_band(wavelengths, w, tolerance_nm).ok_or_else(|| Error::WavelengthUnavailable {
                index: index.name().to_string(),
                wavelength_nm: w,
                tolerance_nm,
            })
        })
        .collect()
}

/// Index value for one spectrum. Poles (zero denominators) are reported
/// as numeric errors.
pub fn vegetation_index(
    spectrum: &[f64],
    wavelengths: &[f64],
    index: VegetationIndex,
    tolerance_nm: f64,
) -> Result<f64> {
    if spectrum.len() != wavelengths.len() {
        return Err(Error::Shape(format!(
            "spectrum has {} values for {} wavelengths",
            spectrum.len(),
            wavelengths.len()
        )));
    }
    let bands = resolve_bands(index, wavelengths, tolerance_nm)?;
    let r: Vec<f64> = bands.iter().map(|&b| spectrum[b]).collect();
    let v = index.evaluate(&r);
    if !v.is_finite() {
        return Err(Error::Numeric(format!("{index} undefined for reflectances {r:?}")));
    }
    Ok(v)
}

/// Index value at every pixel of the cube, row-major; pixels at a pole
/// yield `NaN`.
pub fn index_map(cube: &HsiCube, index: VegetationIndex, tolerance_nm: f64) -> Result<Vec<f64>> {
    let bands = resolve_bands(index, cube.wavelengths(), tolerance_nm)?;
    let mut out = Vec::with_capacity(cube.height() * cube.width());
    for r in 0..cube.height() {
        for c in 0..cube.width() {
            let px = cube.pixel(r, c);
            let refl: Vec<f64> = bands.iter().map(|&b| f64::from(px[b])).collect();
            let v = index.evaluate(&refl);
            out.push(if v.is_finite() { v } else { f64::NAN });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sensor() -> Vec<f64> {
        (0..=90).map(|i| 400.0 + 10.0 * i as f64).collect()
    }

    fn flat(value_at: impl Fn(f64) -> f64) -> (Vec<f64>, Vec<f64>) {
        let wl = sensor();
        (wl.iter().map(|&w| value_at(w)).collect(), wl)
    }

    #[test]
    fn ndvi_fixture() {
        let (s, wl) = flat(|w| if w == 760.0 { 0.5 } else if w == 560.0 { 0.1 } else { 0.3 });
        let v = vegetation_index(&s, &wl, VegetationIndex::Ndvi, DEFAULT_TOLERANCE_NM).unwrap();
        assert_abs_diff_eq!(v, 0.4 / 0.6, epsilon = 1e-15);
    }

    #[test]
    fn equal_bands_give_zero() {
        let (s, wl) = flat(|_| 0.3);
        for idx in [VegetationIndex::Ndvi, VegetationIndex::CiRedEdge] {
            assert_eq!(vegetation_index(&s, &wl, idx, DEFAULT_TOLERANCE_NM).unwrap(), 0.0);
        }
    }

    #[test]
    fn ndwi_out_of_range() {
        let wl: Vec<f64> = (0..=50).map(|i| 450.0 + 10.0 * i as f64).collect();
        let s = vec![0.3; wl.len()];
        let err = vegetation_index(&s, &wl, VegetationIndex::Ndwi, DEFAULT_TOLERANCE_NM).unwrap_err();
        match err {
            Error::WavelengthUnavailable { index, wavelength_nm, .. } => {
                assert_eq!(index, "NDWI");
                assert_eq!(wavelength_nm, 1240.0);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn nearest_band_tolerance() {
        let wl = [500.0, 512.0, 530.0];
        assert_eq!(nearest_band(&wl, 506.0, 10.0), Some(0));
        assert_eq!(nearest_band(&wl, 521.0, 10.0), Some(1));
        assert_eq!(nearest_band(&wl, 545.0, 10.0), None);
    }

    #[test]
    fn pole_is_error() {
        let (s, wl) = flat(|_| 0.0);
        assert!(matches!(
            vegetation_index(&s, &wl, VegetationIndex::Ndvi, DEFAULT_TOLERANCE_NM),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn names_round_trip() {
        for v in VegetationIndex::ALL {
            assert_eq!(v.name().parse::<VegetationIndex>().unwrap(), v);
        }
    }
}
