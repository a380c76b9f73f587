use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A hyperspectral reflectance cube stored band-interleaved-by-pixel,
/// row-major: `data[(r * width + c) * bands + b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HsiCube {
    height: usize,
    width: usize,
    bands: usize,
    wavelengths: Vec<f64>,
    data: Vec<f32>,
}

impl HsiCube {
    pub fn new(
        height: usize,
        width: usize,
        wavelengths: Vec<f64>,
        data: Vec<f32>,
    ) -> Result<Self> {
        let bands = wavelengths.len();
        if height == 0 || width == 0 || bands == 0 {
            return Err(Error::Shape(format!(
                "cube dimensions must be positive, got {height}x{width}x{bands}"
            )));
        }
        if data.len() != height * width * bands {
            return Err(Error::Shape(format!(
                "cube data has {} values, expected {}",
                data.len(),
                height * width * bands
            )));
        }
        check_increasing(&wavelengths)?;
        if let Some(offset) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { offset });
        }
        Ok(Self {
            height,
            width,
            bands,
            wavelengths,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn wavelengths(&self) -> &[f64] {
        &self.wavelengths
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Spectrum of one pixel.
    pub fn pixel(&self, row: usize, col: usize) -> &[f32] {
        let start = (row * self.width + col) * self.bands;
        &self.data[start..start + self.bands]
    }

    pub fn value(&self, row: usize, col: usize, band: usize) -> f32 {
        self.data[(row * self.width + col) * self.bands + band]
    }
}

fn check_increasing(wavelengths: &[f64]) -> Result<()> {
    if wavelengths.iter().any(|w| !w.is_finite()) {
        return Err(Error::InvalidArgument("wavelengths must be finite".into()));
    }
    if wavelengths.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(
            "wavelengths must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Per-band min-max scaling to `[0, 1]`. Constant bands map to 0.
pub fn normalize_cube(cube: &HsiCube) -> HsiCube {
    let bands = cube.bands;
    let mut lo = vec![f32::INFINITY; bands];
    let mut hi = vec![f32::NEG_INFINITY; bands];
    for px in cube.data.chunks_exact(bands) {
        for (b, &v) in px.iter().enumerate() {
            lo[b] = lo[b].min(v);
            hi[b] = hi[b].max(v);
        }
    }
    let data = cube
        .data
        .chunks_exact(bands)
        .flat_map(|px| {
            px.iter().enumerate().map(|(b, &v)| {
                let range = f64::from(hi[b]) - f64::from(lo[b]);
                if range > 0.0 {
                    ((f64::from(v) - f64::from(lo[b])) / range) as f32
                } else {
                    0.0
                }
            })
        })
        .collect();
    HsiCube {
        data,
        wavelengths: cube.wavelengths.clone(),
        ..*cube
    }
}

/// On-disk JSON header describing a raw cube file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CubeHeader {
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    pub dtype: String,
    pub interleave: String,
    pub wavelengths_nm: Vec<f64>,
    pub data_file: String,
}

pub fn load_cube(header_path: impl AsRef<Path>) -> Result<HsiCube> {
    let header_path = header_path.as_ref();
    let text = fs::read_to_string(header_path).map_err(|e| Error::io(header_path, e))?;
    let header: CubeHeader =
        serde_json::from_str(&text).map_err(|e| Error::format("cube header", e.to_string()))?;
    if header.dtype != "f32le" {
        return Err(Error::format(
            "cube header",
            format!("unsupported dtype {:?}", header.dtype),
        ));
    }
    if header.interleave != "bip" {
        return Err(Error::format(
            "cube header",
            format!("unsupported interleave {:?}", header.interleave),
        ));
    }
    if header.wavelengths_nm.len() != header.bands {
        return Err(Error::WavelengthCountMismatch {
            declared: header.bands,
            listed: header.wavelengths_nm.len(),
        });
    }
    let data_path = header_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&header.data_file);
    let raw = fs::read(&data_path).map_err(|e| Error::io(&data_path, e))?;
    let expected = header.height * header.width * header.bands * 4;
    if raw.len() != expected {
        return Err(Error::format(
            "cube data",
            format!("{} bytes, expected {expected}", raw.len()),
        ));
    }
    let data: Vec<f32> = raw
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    HsiCube::new(header.height, header.width, header.wavelengths_nm, data)
}

/// Writes `header_path` plus a raw little-endian file next to it named
/// after the header stem (`cube.json` -> `cube.raw`).
pub fn write_cube(cube: &HsiCube, header_path: impl AsRef<Path>) -> Result<()> {
    let header_path = header_path.as_ref();
    let stem = header_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("cube");
    let data_file = format!("{stem}.raw");
    let header = CubeHeader {
        height: cube.height,
        width: cube.width,
        bands: cube.bands,
        dtype: "f32le".into(),
        interleave: "bip".into(),
        wavelengths_nm: cube.wavelengths.clone(),
        data_file: data_file.clone(),
    };
    let text = serde_json::to_string_pretty(&header)
        .map_err(|e| Error::format("cube header", e.to_string()))?;
    fs::write(header_path, text).map_err(|e| Error::io(header_path, e))?;
    let bytes: Vec<u8> = cube.data.iter().flat_map(|v| v.to_le_bytes()).collect();
    let data_path = header_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(data_file);
    fs::write(&data_path, bytes).map_err(|e| Error::io(&data_path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_scales_band_endpoints() {
        let cube = HsiCube::new(1, 3, vec![500.0], vec![2.0, 4.0, 6.0]).unwrap();
        let n = normalize_cube(&cube);
        assert_eq!(n.data(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn constant_band_maps_to_zero() {
        let cube = HsiCube::new(1, 2, vec![500.0, 600.0], vec![5.0, 1.0, 5.0, 3.0]).unwrap();
        let n = normalize_cube(&cube);
        assert_eq!(n.data(), &[0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn rejects_non_increasing_wavelengths() {
        assert!(HsiCube::new(1, 1, vec![600.0, 500.0], vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn rejects_nan() {
        let err = HsiCube::new(1, 2, vec![500.0], vec![0.0, f32::NAN]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { offset: 1 }));
    }

    #[test]
    fn header_wavelength_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let header = dir.path().join("c.json");
        fs::write(
            &header,
            r#"{"height":1,"width":1,"bands":4,"dtype":"f32le","interleave":"bip",
                "wavelengths_nm":[500,650,800],"data_file":"c.raw"}"#,
        )
        .unwrap();
        let err = load_cube(&header).unwrap_err();
        assert!(err.to_string().contains("wavelength count mismatch"));
    }

    #[test]
    fn loads_hand_written_cube() {
        let dir = tempfile::tempdir().unwrap();
        let header = dir.path().join("c.json");
        fs::write(
            &header,
            r#"{"height":2,"width":2,"bands":3,"dtype":"f32le","interleave":"bip",
                "wavelengths_nm":[500,650,800],"data_file":"c.raw"}"#,
        )
        .unwrap();
        let vals: Vec<u8> = (0..12).flat_map(|i| (i as f32).to_le_bytes()).collect();
        fs::write(dir.path().join("c.raw"), vals).unwrap();
        let cube = load_cube(&header).unwrap();
        assert_eq!((cube.height(), cube.width(), cube.bands()), (2, 2, 3));
        assert_eq!(cube.value(1, 0, 2), 8.0);
        assert_eq!(cube.pixel(0, 1), &[3.0, 4.0, 5.0]);
    }

    #[test]
    fn non_finite_on_load_names_offset() {
        let dir = tempfile::tempdir().unwrap();
        let header = dir.path().join("c.json");
        fs::write(
            &header,
            r#"{"height":1,"width":2,"bands":1,"dtype":"f32le","interleave":"bip",
                "wavelengths_nm":[500],"data_file":"c.raw"}"#,
        )
        .unwrap();
        let vals: Vec<u8> = [1.0f32, f32::INFINITY]
            .iter()
            .flat_map(|v| v.to_le_bytes())
            .collect();
        fs::write(dir.path().join("c.raw"), vals).unwrap();
        let err = load_cube(&header).unwrap_err();
        assert!(err.to_string().contains("offset 1"), "{err}");
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_cube("/nonexistent/cube.json").unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
