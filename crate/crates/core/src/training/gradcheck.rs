//! Reverse-mode gradients versus central finite differences.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::capsule::Stage2Config;
use crate::data::{BandSlice, BandSliceSet, HsiCube};
use crate::error::{Error, Result};
use crate::model::{Ablation, Model, ModelConfig};
use crate::stage1::{Stage1Config, TriangularCap};
use crate::synthetic::{gaussian_scene, SyntheticConfig};
use crate::training::loss::MarginLossConfig;
use crate::training::train::Sample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GradcheckMode {
    /// Randomly initialized model on a synthetic scene.
    #[default]
    Random,
    /// Class capsules forced far past both margin edges with `theta = 0`,
    /// so the loss sits on a zero plateau.
    InactiveHinges,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradcheckConfig {
    pub seed: u64,
    pub mode: GradcheckMode,
    /// Number of parameter entries compared.
    pub samples: usize,
    pub step: f64,
    pub tolerance: f64,
    /// Denominator floor of the relative error.
    pub floor: f64,
    pub batch_size: usize,
    pub theta: f64,
    pub patch_size: usize,
    pub scene: SyntheticConfig,
    pub slices: BandSliceSet,
    pub stage1: Stage1Config,
    pub stage2: Stage2Config,
    pub margin: MarginLossConfig,
    /// Adds 1 to one analytic gradient entry (negative control).
    pub corrupt_gradient: bool,
    /// Redraw entries whose neighbourhood `±kink_guard·step` switches a
    /// relu, clamp, or hinge branch; near such boundaries the central
    /// difference is dominated by curvature rather than the derivative.
    pub skip_kinks: bool,
    pub kink_guard: f64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            seed: 11,
            mode: GradcheckMode::Random,
            samples: 240,
            step: 1e-5,
            tolerance: 1e-4,
            floor: 1e-6,
            batch_size: 4,
            theta: 0.0005,
            patch_size: 5,
            scene: SyntheticConfig {
                height: 8,
                width: 8,
                bands: 24,
                n_class: 3,
                gain: 100.0,
                ..Default::default()
            },
            slices: BandSliceSet::from_slices(vec![
                BandSlice::new("visible", None, Some(600.0)),
                BandSlice::new("red_edge", Some(600.0), Some(750.0)),
                BandSlice::new("nir", Some(750.0), None),
            ])
            .expect("static slices are ordered"),
            stage1: Stage1Config {
                triangular_cap: TriangularCap::None,
                ..Default::default()
            },
            stage2: Stage2Config {
                conv3_filters: 8,
                capsules: 4,
                capsule_dim: 4,
                decoder_hidden: 16,
                ..Default::default()
            },
            margin: MarginLossConfig::default(),
            corrupt_gradient: false,
            skip_kinks: true,
            kink_guard: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamCheck {
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub feature_len: usize,
    pub loss: f64,
    pub tolerance: f64,
    pub max_relative_error: f64,
    /// Entries redrawn because their stencil crossed a branch boundary.
    pub skipped: usize,
    pub passed: bool,
    pub seconds: f64,
    pub checks: Vec<ParamCheck>,
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

const MAX_REDRAWS: usize = 50;

/// Compares gradients of the mean batch loss at `samples` parameter
/// entries, visiting tensors round-robin with a random index in each.
#[allow(clippy::too_many_arguments)]
pub fn check_gradients(
    model: &Model,
    cube: &HsiCube,
    batch: &[Sample],
    margin: &MarginLossConfig,
    theta: f64,
    cfg: &GradcheckConfig,
    rng: &mut impl Rng,
) -> Result<GradcheckReport> {
    let started = Instant::now();
    let (loss, mut grads) = model.loss_and_gradients(cube, batch, margin, theta)?;
    let (_, base_pattern) = model.batch_loss_and_pattern(cube, batch, margin, theta)?;
    let names: Vec<String> = model.params().into_iter().map(|p| p.name).collect();
    if cfg.corrupt_gradient {
        grads[0][0] += 1.0;
    }
    let mut checks = Vec::with_capacity(cfg.samples);
    let mut skipped = 0;
    for k in 0..cfg.samples {
        let t = k % grads.len();
        let mut attempt = 0;
        let (i, numeric) = loop {
            let i = if cfg.corrupt_gradient && k == 0 {
                0
            } else {
                rng.random_range(0..grads[t].len())
            };
            let mut probe = model.clone();
            let origin = probe.params_mut()[t][i];
            let mut eval_at = |delta: f64| {
                probe.params_mut()[t][i] = origin + delta;
                probe.batch_loss_and_pattern(cube, batch, margin, theta)
            };
            let (plus, _) = eval_at(cfg.step)?;
            let (minus, _) = eval_at(-cfg.step)?;
            let smooth = !cfg.skip_kinks || {
                let reach = cfg.step * cfg.kink_guard.max(1.0);
                eval_at(reach)?.1 == base_pattern && eval_at(-reach)?.1 == base_pattern
            };
            attempt += 1;
            if smooth || !cfg.skip_kinks || attempt >= MAX_REDRAWS {
                break (i, (plus - minus) / (2.0 * cfg.step));
            }
            skipped += 1;
        };
        let analytic = grads[t][i];
        checks.push(ParamCheck {
            tensor: names[t].clone(),
            index: i,
            analytic,
            numeric,
            relative_error: relative_error(analytic, numeric, cfg.floor),
        });
    }
    let max_relative_error = checks.iter().map(|c| c.relative_error).fold(0.0, f64::max);
    Ok(GradcheckReport {
        feature_len: model.feature_len(),
        loss,
        tolerance: cfg.tolerance,
        max_relative_error,
        skipped,
        passed: max_relative_error < cfg.tolerance,
        seconds: started.elapsed().as_secs_f64(),
        checks,
    })
}

/// Builds the small model and scene described by `cfg` and checks it.
pub fn run_gradcheck(cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    if cfg.samples == 0 || cfg.batch_size == 0 {
        return Err(Error::Config("samples and batch_size must be positive".into()));
    }
    if cfg.step <= 0.0 || !cfg.step.is_finite() {
        return Err(Error::Config(format!("step must be positive, got {}", cfg.step)));
    }
    let scene = gaussian_scene(&cfg.scene)?;
    let model_cfg = ModelConfig {
        n_class: cfg.scene.n_class,
        bands: cfg.scene.bands,
        patch_size: cfg.patch_size,
        stage1: cfg.stage1.clone(),
        stage2: cfg.stage2.clone(),
        ablation: Ablation::default(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = Model::new(model_cfg, &cfg.slices, scene.cube.wavelengths(), &mut rng)?;
    let mut pool: Vec<Sample> = scene.labels.labeled().map(|(r, c)| ((r, c), scene.labels.get(r, c))).collect();
    let mut theta = cfg.theta;
    if cfg.mode == GradcheckMode::InactiveHinges {
        theta = 0.0;
        pool.retain(|s| s.1 == 1);
        saturate_class(&mut model, 0);
    }
    pool.shuffle(&mut rng);
    pool.truncate(cfg.batch_size);
    check_gradients(&model, &scene.cube, &pool, &cfg.margin, theta, cfg, &mut rng)
}

/// Zeroes the class-capsule transforms and gives `class` a large bias, so
/// its capsule length approaches 1 while every other length is 0.
fn saturate_class(model: &mut Model, class: usize) {
    let caps = &mut model.class_caps;
    caps.weights.iter_mut().for_each(|w| *w = 0.0);
    caps.biases.iter_mut().for_each(|b| *b = 0.0);
    caps.biases[class * caps.out_dim] = 1e3;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0, 1e-6), 0.0);
        assert_eq!(relative_error(2.0, 1.0, 1e-6), 0.5);
        assert_eq!(relative_error(1e-9, 0.0, 1e-6), 1e-3);
    }

    #[test]
    fn plateau_has_zero_gradients() {
        let cfg = GradcheckConfig {
            mode: GradcheckMode::InactiveHinges,
            samples: 40,
            ..Default::default()
        };
        let report = run_gradcheck(&cfg).unwrap();
        assert_eq!(report.loss, 0.0);
        assert!(report.checks.iter().all(|c| c.analytic == 0.0 && c.numeric == 0.0));
        assert!(report.passed);
    }

    #[test]
    fn corrupted_gradient_fails() {
        let cfg = GradcheckConfig {
            samples: 20,
            corrupt_gradient: true,
            ..Default::default()
        };
        assert!(!run_gradcheck(&cfg).unwrap().passed);
    }
}
