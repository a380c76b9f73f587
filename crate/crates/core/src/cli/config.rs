//! JSON run configuration.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::capsule::Stage2Config;
use crate::data::{load_cube, normalize_cube, BandSlice, BandSliceSet, HsiCube, LabelMap};
use crate::error::{Error, Result};
use crate::eval::LogBase;
use crate::model::{Ablation, ModelConfig, Variant};
use crate::stage1::Stage1Config;
use crate::synthetic::{gaussian_scene, SyntheticConfig};
use crate::training::TrainConfig;

/// Where the cube and labels come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetSource {
    /// A cube header (JSON + raw file) and a label CSV, relative to the
    /// config file.
    Files { cube: PathBuf, labels: PathBuf },
    /// A generated Gaussian-spectra scene.
    Synthetic(SyntheticConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetSource,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_patch_size")]
    pub patch_size: usize,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    /// Per-band min-max scaling before training and inference.
    #[serde(default = "default_true")]
    pub normalize: bool,
    /// Band slices; the seven visible-to-NIR slices when absent.
    #[serde(default)]
    pub slices: Option<Vec<BandSlice>>,
    #[serde(default)]
    pub ablation: Ablation,
    #[serde(default)]
    pub stage1: Stage1Config,
    #[serde(default)]
    pub stage2: Stage2Config,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub entropy_base: LogBase,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_patch_size() -> usize {
    7
}

fn default_train_fraction() -> f64 {
    2.0 / 3.0
}

fn default_true() -> bool {
    true
}

/// A cube and its labels, ready for a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// As loaded or generated.
    pub raw: HsiCube,
    /// What the network sees (normalized when configured).
    pub cube: HsiCube,
    pub labels: LabelMap,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config and makes its relative paths relative to the
    /// config file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        let base = std::path::absolute(path).map_err(|e| Error::io(path, e))?;
        cfg.rebase(base.parent().unwrap_or_else(|| Path::new("/")));
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        if let DatasetSource::Files { cube, labels } = &mut self.dataset {
            fix(cube);
            fix(labels);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 || self.patch_size.is_multiple_of(2) {
            return Err(Error::Config(format!("patch_size must be odd, got {}", self.patch_size)));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train_fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        self.train.validate()?;
        self.slice_set()?;
        Ok(())
    }

    pub fn slice_set(&self) -> Result<BandSliceSet> {
        match &self.slices {
            None => Ok(BandSliceSet::default()),
            Some(s) => BandSliceSet::from_slices(s.clone()).map_err(|e| Error::Config(e.to_string())),
        }
    }

    pub fn apply_variant(&mut self, variant: Variant) {
        self.ablation = variant.ablation();
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        let (raw, labels) = match &self.dataset {
            DatasetSource::Files { cube, labels } => (load_cube(cube)?, LabelMap::read_csv(labels)?),
            DatasetSource::Synthetic(s) => {
                let scene = gaussian_scene(s)?;
                (scene.cube, scene.labels)
            }
        };
        if (raw.height(), raw.width()) != (labels.height(), labels.width()) {
            return Err(Error::Shape(format!(
                "cube is {}x{} but labels are {}x{}",
                raw.height(),
                raw.width(),
                labels.height(),
                labels.width()
            )));
        }
        let cube = if self.normalize { normalize_cube(&raw) } else { raw.clone() };
        Ok(Dataset { raw, cube, labels })
    }

    pub fn model_config(&self, n_class: usize, bands: usize) -> ModelConfig {
        ModelConfig {
            n_class,
            bands,
            patch_size: self.patch_size,
            stage1: self.stage1.clone(),
            stage2: self.stage2.clone(),
            ablation: self.ablation,
        }
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_synthetic_config() {
        let cfg = RunConfig::from_json(r#"{"dataset": {"kind": "synthetic", "seed": 3}}"#).unwrap();
        assert_eq!(cfg.patch_size, 7);
        assert!((cfg.train_fraction - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(cfg.ablation, Variant::Model3.ablation());
        match cfg.dataset {
            DatasetSource::Synthetic(s) => assert_eq!(s.seed, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        for text in [
            r#"{"dataset": {"kind": "synthetic"}, "epochs": 3}"#,
            r#"{"dataset": {"kind": "synthetic", "colour": 1}}"#,
            r#"{"dataset": {"kind": "synthetic"}, "train": {"epoch": 3}}"#,
        ] {
            assert!(matches!(RunConfig::from_json(text), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(RunConfig::from_json(r#"{"dataset": {"kind": "synthetic"}, "patch_size": 6}"#).is_err());
        assert!(RunConfig::from_json(r#"{"dataset": {"kind": "synthetic"}, "train_fraction": 1.0}"#).is_err());
    }

    #[test]
    fn resolved_round_trip() {
        let cfg = RunConfig::from_json(
            r#"{"dataset": {"kind": "files", "cube": "a.json", "labels": "b.csv"}, "seed": 9}"#,
        )
        .unwrap();
        assert_eq!(RunConfig::from_json(&cfg.to_json_pretty()).unwrap(), cfg);
    }

    #[test]
    fn paths_are_relative_to_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        fs::write(&path, r#"{"dataset": {"kind": "files", "cube": "c.json", "labels": "l.csv"}}"#).unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.output_dir, dir.path().join("out"));
        match cfg.dataset {
            DatasetSource::Files { cube, .. } => assert_eq!(cube, dir.path().join("c.json")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn shipped_configs_parse() {
        for text in [include_str!("../../configs/synthetic.json"), include_str!("../../configs/files.json")] {
            RunConfig::from_json(text).unwrap();
        }
    }
}
