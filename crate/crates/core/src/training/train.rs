//! Mini-batch training loop.

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{BandSliceSet, HsiCube, LabelMap};
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};
use crate::training::adam::{Adam, AdamConfig};
use crate::training::loss::MarginLossConfig;

/// A labeled patch center: `((row, col), label)` with a 1-based label.
pub type Sample = ((usize, usize), u32);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Weight of the reconstruction term.
    pub theta: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub margin: MarginLossConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            epochs: 50,
            batch_size: 32,
            theta: 0.0005,
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            margin: MarginLossConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("beta1 and beta2 must lie in [0, 1)".into()));
        }
        if self.theta < 0.0 || !self.theta.is_finite() {
            return Err(Error::Config(format!("theta must be non-negative, got {}", self.theta)));
        }
        self.margin.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based epoch index.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_oa: f64,
    pub test_oa: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub history: Vec<EpochRecord>,
    /// Wall-clock seconds spent on the optimization pass of each epoch.
    pub epoch_seconds: Vec<f64>,
}

impl TrainReport {
    pub fn final_record(&self) -> Option<&EpochRecord> {
        self.history.last()
    }
}

/// History as CSV with a header row; empty `test_oa` when there is no
/// test set.
pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,train_loss,train_oa,test_oa\n");
    for r in history {
        let test = r.test_oa.map(|v| v.to_string()).unwrap_or_default();
        writeln!(out, "{},{},{},{}", r.epoch, r.train_loss, r.train_oa, test).expect("write to string");
    }
    out
}

/// Labeled samples for a list of coordinates.
pub fn samples_at(labels: &LabelMap, coords: &[(usize, usize)]) -> Vec<Sample> {
    coords.iter().map(|&(r, c)| ((r, c), labels.get(r, c))).collect()
}

/// Builds a model from `seed` and fits the triangular selection (if
/// capped) on the training spectra.
pub fn initialize_model(
    config: ModelConfig,
    slices: &BandSliceSet,
    cube: &HsiCube,
    train: &[Sample],
    seed: u64,
) -> Result<Model> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = Model::new(config, slices, cube.wavelengths(), &mut rng)?;
    let cap = model.config.stage1.triangular_cap.resolve(model.n_class());
    if cap.is_some() && model.config.ablation.enhancement {
        if train.is_empty() {
            return Err(Error::NoLabeledPixels);
        }
        let spectra: Vec<Vec<f64>> = train
            .iter()
            .map(|&((r, c), _)| cube.pixel(r, c).iter().map(|&v| f64::from(v)).collect())
            .collect();
        model.stage1.fit_triangular_cap(cap, spectra.iter().map(Vec::as_slice))?;
    }
    Ok(model)
}

/// Fraction of samples whose predicted class matches the label.
pub fn accuracy(model: &Model, cube: &HsiCube, samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::NoLabeledPixels);
    }
    let centers: Vec<(usize, usize)> = samples.iter().map(|s| s.0).collect();
    let outputs = model.classify(cube, &centers)?;
    let correct = outputs.iter().zip(samples).filter(|(o, s)| o.class == s.1).count();
    Ok(correct as f64 / samples.len() as f64)
}

/// Trains `model` in place. Batches are drawn from a shuffle seeded by
/// `seed`, so identical inputs give identical histories and weights.
/// `on_epoch` sees each record as soon as it is available.
pub fn train(
    model: &mut Model,
    cube: &HsiCube,
    train_set: &[Sample],
    test_set: &[Sample],
    cfg: &TrainConfig,
    seed: u64,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainReport> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::NoLabeledPixels);
    }
    model.check_cube(cube)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut adam = Adam::new(cfg.adam());
    let mut order: Vec<Sample> = train_set.to_vec();
    let mut report = TrainReport::default();
    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let (loss, grads) = model
                .loss_and_gradients(cube, batch, &cfg.margin, cfg.theta)
                .map_err(|e| diverged(epoch, e))?;
            if grads.iter().flatten().any(|g| !g.is_finite()) {
                return Err(Error::Numeric(format!("training diverged at epoch {epoch}: non-finite gradient")));
            }
            loss_sum += loss * batch.len() as f64;
            adam.step(model.params_mut(), &grads);
        }
        report.epoch_seconds.push(started.elapsed().as_secs_f64());
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / order.len() as f64,
            train_oa: accuracy(model, cube, train_set)?,
            test_oa: if test_set.is_empty() {
                None
            } else {
                Some(accuracy(model, cube, test_set)?)
            },
        };
        on_epoch(&record);
        report.history.push(record);
    }
    Ok(report)
}

fn diverged(epoch: usize, e: Error) -> Error {
    match e {
        Error::Numeric(msg) => Error::Numeric(format!("training diverged at epoch {epoch}: {msg}")),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let h = [
            EpochRecord {
                epoch: 1,
                train_loss: 0.5,
                train_oa: 0.25,
                test_oa: Some(1.0),
            },
            EpochRecord {
                epoch: 2,
                train_loss: 0.125,
                train_oa: 1.0,
                test_oa: None,
            },
        ];
        assert_eq!(
            history_csv(&h),
            "epoch,train_loss,train_oa,test_oa\n1,0.5,0.25,1\n2,0.125,1,\n"
        );
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = TrainConfig {
            batch_size: 0,
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}
