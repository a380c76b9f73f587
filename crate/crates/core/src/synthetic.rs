//! Seeded synthetic scenes with Gaussian-shaped class spectra.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{HsiCube, LabelMap};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    pub n_class: usize,
    pub min_wavelength_nm: f64,
    pub max_wavelength_nm: f64,
    /// Standard deviation of the per-value Gaussian noise.
    pub noise: f64,
    /// Multiplies every generated value, e.g. to mimic raw sensor counts.
    pub gain: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            height: 12,
            width: 12,
            bands: 20,
            n_class: 3,
            min_wavelength_nm: 400.0,
            max_wavelength_nm: 1000.0,
            noise: 0.08,
            gain: 1.0,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub cube: HsiCube,
    pub labels: LabelMap,
    /// Noise-free class mean spectra, `[class][band]`.
    pub class_means: Vec<Vec<f64>>,
}

/// Evenly spaced band centers from `min` to `max` inclusive.
pub fn linear_wavelengths(bands: usize, min: f64, max: f64) -> Vec<f64> {
    match bands {
        0 => Vec::new(),
        1 => vec![min],
        _ => (0..bands)
            .map(|i| min + (max - min) * i as f64 / (bands - 1) as f64)
            .collect(),
    }
}

/// Mean spectrum of class `k` (0-based): a baseline plus a Gaussian bump
/// whose center moves across the spectral range with the class index.
pub fn class_mean(k: usize, n_class: usize, wavelengths: &[f64]) -> Vec<f64> {
    let lo = wavelengths.first().copied().unwrap_or(0.0);
    let hi = wavelengths.last().copied().unwrap_or(0.0);
    let center = lo + (hi - lo) * (k as f64 + 0.5) / n_class as f64;
    let width = (hi - lo).max(1.0) / (2.0 * n_class as f64);
    wavelengths
        .iter()
        .map(|&w| 0.2 + 0.6 * (-0.5 * ((w - center) / width).powi(2)).exp())
        .collect()
}

/// Generates a scene whose labels are vertical stripes `1..=n_class`.
pub fn gaussian_scene(cfg: &SyntheticConfig) -> Result<SyntheticScene> {
    if cfg.height == 0 || cfg.width == 0 || cfg.bands == 0 || cfg.n_class == 0 {
        return Err(Error::InvalidArgument("synthetic scene dimensions must be positive".into()));
    }
    if cfg.n_class > cfg.width {
        return Err(Error::InvalidArgument(format!(
            "{} classes do not fit in {} columns",
            cfg.n_class, cfg.width
        )));
    }
    let noise = Normal::new(0.0, cfg.noise)
        .map_err(|e| Error::InvalidArgument(format!("noise: {e}")))?;
    let wavelengths = linear_wavelengths(cfg.bands, cfg.min_wavelength_nm, cfg.max_wavelength_nm);
    let class_means: Vec<Vec<f64>> = (0..cfg.n_class).map(|k| class_mean(k, cfg.n_class, &wavelengths)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut labels = Vec::with_capacity(cfg.height * cfg.width);
    let mut data = Vec::with_capacity(cfg.height * cfg.width * cfg.bands);
    for _ in 0..cfg.height {
        for c in 0..cfg.width {
            let class = c * cfg.n_class / cfg.width;
            labels.push(class as u32 + 1);
            data.extend(
                class_means[class]
                    .iter()
                    .map(|&m| (cfg.gain * (m + noise.sample(&mut rng))) as f32),
            );
        }
    }
    Ok(SyntheticScene {
        cube: HsiCube::new(cfg.height, cfg.width, wavelengths, data)?,
        labels: LabelMap::with_n_class(cfg.height, cfg.width, labels, cfg.n_class)?,
        class_means,
    })
}
