//! Single-file model checkpoints.
//!
//! Layout: the 8-byte magic `BITDNN01`, a little-endian `u64` manifest
//! length, the JSON manifest, then every parameter as little-endian `f64`
//! in manifest order.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::BandSliceSet;
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};

const MAGIC: &[u8; 8] = b"BITDNN01";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamEntry {
    pub name: String,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub model: ModelConfig,
    /// Slices segmented against the training cube's wavelengths.
    pub slices: BandSliceSet,
    pub wavelengths: Vec<f64>,
    /// Triangular triples in use, or `None` for all of them.
    pub triples: Option<Vec<[u32; 3]>>,
    pub seed: u64,
    pub params: Vec<ParamEntry>,
}

/// Serializes a model to bytes.
pub fn encode(model: &Model, wavelengths: &[f64], seed: u64) -> Result<Vec<u8>> {
    let params = model.params();
    let manifest = Manifest {
        model: model.config.clone(),
        slices: model.stage1.slices.clone(),
        wavelengths: wavelengths.to_vec(),
        triples: model.stage1.enhancement.triples.as_ref().map(|t| t.to_vec()),
        seed,
        params: params
            .iter()
            .map(|p| ParamEntry {
                name: p.name.clone(),
                len: p.values.len(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&manifest).map_err(|e| Error::format("checkpoint manifest", e.to_string()))?;
    let mut out = Vec::with_capacity(16 + json.len() + 8 * model.param_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for p in &params {
        for v in p.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Rebuilds a model from checkpoint bytes.
pub fn decode(bytes: &[u8]) -> Result<(Model, Manifest)> {
    let bad = |m: &str| Error::format("checkpoint", m.to_string());
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("missing magic header"));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let json = bytes.get(16..16 + len).ok_or_else(|| bad("truncated manifest"))?;
    let manifest: Manifest = serde_json::from_slice(json).map_err(|e| bad(&e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut model = Model::from_segmented(manifest.model.clone(), &manifest.slices, &mut rng)?;
    if let Some(t) = &manifest.triples {
        model.stage1.enhancement.triples = Some(t.clone().into());
    }
    let expected: Vec<ParamEntry> = model
        .params()
        .iter()
        .map(|p| ParamEntry {
            name: p.name.clone(),
            len: p.values.len(),
        })
        .collect();
    if expected != manifest.params {
        return Err(bad("parameter layout does not match the model configuration"));
    }
    let total: usize = expected.iter().map(|p| p.len).sum();
    let blob = &bytes[16 + len..];
    if blob.len() != 8 * total {
        return Err(bad(&format!("expected {} parameter bytes, found {}", 8 * total, blob.len())));
    }
    let mut chunks = blob.chunks_exact(8);
    for tensor in model.params_mut() {
        for v in tensor.iter_mut() {
            let raw = chunks.next().expect("length checked");
            *v = f64::from_le_bytes(raw.try_into().expect("8 bytes"));
            if !v.is_finite() {
                return Err(bad("non-finite parameter"));
            }
        }
    }
    Ok((model, manifest))
}

/// Writes a checkpoint atomically: a sibling temporary file is renamed
/// into place, so a failed write never leaves a partial checkpoint.
pub fn save(model: &Model, wavelengths: &[f64], seed: u64, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(model, wavelengths, seed)?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    fs::write(&tmp, &bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

pub fn load(path: impl AsRef<Path>) -> Result<(Model, Manifest)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capsule::Stage2Config;
    use crate::model::Ablation;
    use crate::stage1::{Stage1Config, TriangularCap};

    fn model(seed: u64) -> (Model, Vec<f64>) {
        let wl: Vec<f64> = (0..16).map(|i| 400.0 + 40.0 * i as f64).collect();
        let cfg = ModelConfig {
            n_class: 2,
            bands: 16,
            patch_size: 5,
            stage1: Stage1Config {
                triangular_cap: TriangularCap::None,
                ..Default::default()
            },
            stage2: Stage2Config {
                conv3_filters: 3,
                capsules: 2,
                capsule_dim: 2,
                decoder_hidden: 4,
                ..Default::default()
            },
            ablation: Ablation::default(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (Model::new(cfg, &BandSliceSet::default(), &wl, &mut rng).unwrap(), wl)
    }

    #[test]
    fn round_trip_is_exact() {
        let (mut m, wl) = model(3);
        m.stage1.enhancement.triples = Some(vec![[0, 1, 2], [1, 2, 4]].into());
        let bytes = encode(&m, &wl, 3).unwrap();
        let (back, manifest) = decode(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(manifest.seed, 3);
        assert_eq!(encode(&back, &wl, 3).unwrap(), bytes);
    }

    #[test]
    fn rejects_truncation_and_garbage() {
        let (m, wl) = model(1);
        let bytes = encode(&m, &wl, 1).unwrap();
        assert!(decode(&bytes[..bytes.len() - 8]).is_err());
        assert!(decode(b"not a checkpoint").is_err());
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let (m, wl) = model(2);
        save(&m, &wl, 2, &path).unwrap();
        assert_eq!(load(&path).unwrap().0, m);
        assert!(!dir.path().join("model.ckpt.partial").exists());
    }
}
