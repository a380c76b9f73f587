//! The train / evaluate / predict / interpret / gradcheck commands.
//!
//! Each command reads a [`RunConfig`], writes its artifacts into the
//! output directory, and returns the in-memory result. The `run_*` and
//! `interpret_*` helpers do the same work without touching the disk.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cli::config::{Dataset, RunConfig};
use crate::data::{split_samples, LabelMap, SampleSplit};
use crate::error::{Error, Result};
use crate::eval::{
    confusion, dunn_index, index_map, mcnemar, mcnemar_csv, metrics_report, per_class_entropy, r_squared,
    LogBase, McNemar, MetricsReport, VegetationIndex, DEFAULT_TOLERANCE_NM,
};
use crate::model::{Model, Variant};
use crate::training::checkpoint::{self, Manifest};
use crate::training::{
    history_csv, initialize_model, run_gradcheck, samples_at, train, EpochRecord, GradcheckConfig, GradcheckReport,
    Sample, TrainReport,
};

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub variant: Option<Variant>,
    pub output_dir: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(v) = self.variant {
            cfg.apply_variant(v);
        }
        if let Some(out) = &self.output_dir {
            cfg.output_dir = out.clone();
        }
    }
}

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const HISTORY_FILE: &str = "history.csv";
pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.json";
pub const SPLIT_FILE: &str = "split.json";

fn load_config(path: &Path, ov: &Overrides) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    ov.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serializes")
}

/// A trained model with the split and history that produced it.
#[derive(Debug, Clone)]
pub struct TrainedRun {
    pub model: Model,
    pub split: SampleSplit,
    pub report: TrainReport,
}

/// Splits, initializes, and trains according to `cfg`.
pub fn run_training(cfg: &RunConfig, data: &Dataset, on_epoch: impl FnMut(&EpochRecord)) -> Result<TrainedRun> {
    if data.labels.labeled_count() == 0 {
        return Err(Error::NoLabeledPixels);
    }
    let split = split_samples(&data.labels, cfg.train_fraction, cfg.seed)?;
    let train_set = samples_at(&data.labels, &split.train);
    let test_set = samples_at(&data.labels, &split.test);
    let model_cfg = cfg.model_config(data.labels.n_class(), data.cube.bands());
    let mut model = initialize_model(model_cfg, &cfg.slice_set()?, &data.cube, &train_set, cfg.seed)?;
    let report = train(&mut model, &data.cube, &train_set, &test_set, &cfg.train, cfg.seed, on_epoch)?;
    Ok(TrainedRun { model, split, report })
}

#[derive(Debug, Clone)]
pub struct TrainOutputs {
    pub checkpoint: PathBuf,
    pub history: PathBuf,
    pub resolved_config: PathBuf,
    pub split: PathBuf,
    pub run: TrainedRun,
}

/// Trains and writes the checkpoint, history CSV, resolved config, and
/// split. Nothing is written if loading or training fails.
pub fn cmd_train(config: &Path, ov: &Overrides, on_epoch: impl FnMut(&EpochRecord)) -> Result<TrainOutputs> {
    let cfg = load_config(config, ov)?;
    let data = cfg.load_dataset()?;
    let run = run_training(&cfg, &data, on_epoch)?;
    let dir = &cfg.output_dir;
    create_dir(dir)?;
    let out = TrainOutputs {
        checkpoint: dir.join(CHECKPOINT_FILE),
        history: dir.join(HISTORY_FILE),
        resolved_config: dir.join(RESOLVED_CONFIG_FILE),
        split: dir.join(SPLIT_FILE),
        run,
    };
    checkpoint::save(&out.run.model, data.cube.wavelengths(), cfg.seed, &out.checkpoint)?;
    write(&out.history, history_csv(&out.run.report.history))?;
    write(&out.resolved_config, cfg.to_json_pretty())?;
    out.run.split.write_json(&out.split)?;
    Ok(out)
}

fn load_checkpoint_for(path: &Path, data: &Dataset) -> Result<(Model, Manifest)> {
    let (model, manifest) = checkpoint::load(path)?;
    if manifest.wavelengths.len() != data.cube.bands() {
        return Err(Error::Shape(format!(
            "checkpoint expects {} bands, cube has {}",
            manifest.wavelengths.len(),
            data.cube.bands()
        )));
    }
    if manifest
        .wavelengths
        .iter()
        .zip(data.cube.wavelengths())
        .any(|(a, b)| (a - b).abs() > 1e-6)
    {
        return Err(Error::Shape("checkpoint wavelengths differ from the cube's".into()));
    }
    Ok((model, manifest))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    Train,
    #[default]
    Test,
    All,
}

impl std::str::FromStr for Subset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Self::Train),
            "test" => Ok(Self::Test),
            "all" => Ok(Self::All),
            other => Err(Error::InvalidArgument(format!("unknown subset {other:?}"))),
        }
    }
}

/// McNemar outcome against a second prediction, or why none exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub other: String,
    pub mcnemar: Option<McNemar>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub subset: Subset,
    pub metrics: MetricsReport,
    pub comparison: Option<Comparison>,
}

fn subset_coords(split: &SampleSplit, labels: &LabelMap, subset: Subset) -> Vec<(usize, usize)> {
    match subset {
        Subset::Train => split.train.clone(),
        Subset::Test => split.test.clone(),
        Subset::All => labels.labeled().collect(),
    }
}

fn compare_with(
    name: &str,
    other: &LabelMap,
    labels: &LabelMap,
    coords: &[(usize, usize)],
    predicted: &[u32],
) -> Result<Comparison> {
    if (other.height(), other.width()) != (labels.height(), labels.width()) {
        return Err(Error::Shape(format!(
            "comparison map is {}x{}, labels are {}x{}",
            other.height(),
            other.width(),
            labels.height(),
            labels.width()
        )));
    }
    let truth: Vec<u32> = coords.iter().map(|&(r, c)| labels.get(r, c)).collect();
    let theirs: Vec<u32> = coords.iter().map(|&(r, c)| other.get(r, c)).collect();
    Ok(match mcnemar(&truth, predicted, &theirs) {
        Ok(m) => Comparison {
            other: name.to_string(),
            mcnemar: Some(m),
            note: None,
        },
        Err(Error::NoDiscordantPairs) => Comparison {
            other: name.to_string(),
            mcnemar: None,
            note: Some(Error::NoDiscordantPairs.to_string()),
        },
        Err(e) => return Err(e),
    })
}

/// Metrics of `model` on `coords`, optionally compared with another map.
pub fn evaluate_model(
    model: &Model,
    data: &Dataset,
    coords: &[(usize, usize)],
    subset: Subset,
    compare: Option<(&str, &LabelMap)>,
) -> Result<EvaluationReport> {
    if coords.is_empty() {
        return Err(Error::NoLabeledPixels);
    }
    let predicted: Vec<u32> = model.classify(&data.cube, coords)?.iter().map(|o| o.class).collect();
    let truth: Vec<u32> = coords.iter().map(|&(r, c)| data.labels.get(r, c)).collect();
    let cm = confusion(&truth, &predicted, model.n_class())?;
    let comparison = compare
        .map(|(name, other)| compare_with(name, other, &data.labels, coords, &predicted))
        .transpose()?;
    Ok(EvaluationReport {
        subset,
        metrics: metrics_report(&cm)?,
        comparison,
    })
}

/// Writes `metrics.json` (and `mcnemar.csv` when comparing). The split
/// defaults to the one recomputed from the config seed.
pub fn cmd_evaluate(
    config: &Path,
    checkpoint_path: &Path,
    ov: &Overrides,
    split_path: Option<&Path>,
    subset: Subset,
    compare: Option<&Path>,
) -> Result<EvaluationReport> {
    let cfg = load_config(config, ov)?;
    let data = cfg.load_dataset()?;
    let (model, _) = load_checkpoint_for(checkpoint_path, &data)?;
    let split = match split_path {
        Some(p) => SampleSplit::read_json(p)?,
        None => split_samples(&data.labels, cfg.train_fraction, cfg.seed)?,
    };
    let coords = subset_coords(&split, &data.labels, subset);
    let other = compare.map(LabelMap::read_csv).transpose()?;
    let name = compare.map(|p| p.display().to_string()).unwrap_or_default();
    let report = evaluate_model(&model, &data, &coords, subset, other.as_ref().map(|o| (name.as_str(), o)))?;
    create_dir(&cfg.output_dir)?;
    write(&cfg.output_dir.join("metrics.json"), to_json(&report))?;
    if let Some(Comparison {
        mcnemar: Some(m), other, ..
    }) = &report.comparison
    {
        write(
            &cfg.output_dir.join("mcnemar.csv"),
            mcnemar_csv(&[("model".to_string(), other.clone(), *m)]),
        )?;
    }
    Ok(report)
}

/// Gray level of a class id in the PGM map: `round(id * 255 / n_class)`,
/// so 0 (unlabeled) is black and the last class is white.
pub fn gray_level(class: u32, n_class: usize) -> u8 {
    if n_class == 0 {
        return 0;
    }
    ((f64::from(class) * 255.0 / n_class as f64).round()).clamp(0.0, 255.0) as u8
}

/// Binary 8-bit PGM of a class map.
pub fn map_pgm(map: &LabelMap) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", map.width(), map.height()).into_bytes();
    out.extend(map.labels().iter().map(|&l| gray_level(l, map.n_class())));
    out
}

/// Class of every pixel in the cube.
pub fn predict_map(model: &Model, data: &Dataset) -> Result<LabelMap> {
    let (h, w) = (data.cube.height(), data.cube.width());
    let coords: Vec<(usize, usize)> = (0..h).flat_map(|r| (0..w).map(move |c| (r, c))).collect();
    let classes = model.classify(&data.cube, &coords)?.into_iter().map(|o| o.class).collect();
    LabelMap::with_n_class(h, w, classes, model.n_class())
}

#[derive(Debug, Clone)]
pub struct PredictOutputs {
    pub csv: PathBuf,
    pub pgm: PathBuf,
    pub map: LabelMap,
}

/// Writes `map.csv` and `map.pgm` for the full scene.
pub fn cmd_predict(config: &Path, checkpoint_path: &Path, ov: &Overrides) -> Result<PredictOutputs> {
    let cfg = load_config(config, ov)?;
    let data = cfg.load_dataset()?;
    let (model, _) = load_checkpoint_for(checkpoint_path, &data)?;
    let map = predict_map(&model, &data)?;
    create_dir(&cfg.output_dir)?;
    let out = PredictOutputs {
        csv: cfg.output_dir.join("map.csv"),
        pgm: cfg.output_dir.join("map.pgm"),
        map,
    };
    write(&out.csv, out.map.to_csv_string())?;
    write(&out.pgm, map_pgm(&out.map))?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassEntropy {
    pub class: u32,
    pub entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RSquaredEntry {
    pub feature: String,
    pub reference: String,
    /// `None` when either side has zero variance or too few pairs.
    pub r_squared: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpretabilityReport {
    pub pixels: usize,
    pub entropy_base: LogBase,
    pub feature_len: usize,
    /// Upper bound `log M` of the Stage-1 entropies.
    pub max_stage1_entropy: f64,
    pub stage1_entropy: Vec<ClassEntropy>,
    pub mean_stage1_entropy: f64,
    /// Entropy of the class-capsule activity vectors, which share one
    /// feature space across ablation variants.
    pub capsule_entropy: Vec<ClassEntropy>,
    pub mean_capsule_entropy: f64,
    pub dunn_index: Option<f64>,
    pub dunn_note: Option<String>,
    pub r_squared: Vec<RSquaredEntry>,
    /// References that could not be computed, with the reason.
    pub skipped_references: Vec<String>,
    pub comparison: Option<Comparison>,
}

/// Named per-pixel reference values (row-major, `NaN` where undefined).
pub type References = Vec<(String, Vec<f64>)>;

/// The built-in vegetation indices on the unnormalized cube; indices the
/// sensor cannot supply are reported in the second list.
pub fn builtin_references(data: &Dataset) -> (References, Vec<String>) {
    let mut refs = Vec::new();
    let mut skipped = Vec::new();
    for idx in VegetationIndex::ALL {
        match index_map(&data.raw, idx, DEFAULT_TOLERANCE_NM) {
            Ok(values) => refs.push((idx.name().to_string(), values)),
            Err(e) => skipped.push(e.to_string()),
        }
    }
    (refs, skipped)
}

/// Reads `row,col,<name>...` reference values; missing pixels are `NaN`.
pub fn read_references(path: &Path, height: usize, width: usize) -> Result<References> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| Error::format("reference CSV", e.to_string()))?
        .clone();
    if headers.len() < 3 || &headers[0] != "row" || &headers[1] != "col" {
        return Err(Error::format("reference CSV", "header must be row,col,<name>..."));
    }
    let mut refs: References = headers
        .iter()
        .skip(2)
        .map(|n| (n.to_string(), vec![f64::NAN; height * width]))
        .collect();
    for record in reader.records() {
        let record = record.map_err(|e| Error::format("reference CSV", e.to_string()))?;
        let parse = |i: usize| -> Result<f64> {
            record
                .get(i)
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| Error::format("reference CSV", format!("bad value in column {}", i + 1)))
        };
        let (r, c) = (parse(0)? as usize, parse(1)? as usize);
        if r >= height || c >= width {
            return Err(Error::format("reference CSV", format!("pixel ({r}, {c}) outside the cube")));
        }
        for (k, (_, values)) in refs.iter_mut().enumerate() {
            values[r * width + c] = parse(k + 2)?;
        }
    }
    Ok(refs)
}

fn class_entropies(features: &[Vec<f64>], labels: &[u32], base: LogBase) -> Result<(Vec<ClassEntropy>, f64)> {
    let per = per_class_entropy(features, labels, base)?;
    let mean = per.iter().map(|p| p.1).sum::<f64>() / per.len() as f64;
    Ok((
        per.into_iter().map(|(class, entropy)| ClassEntropy { class, entropy }).collect(),
        mean,
    ))
}

/// Per-pixel quantities the interpretability report and dumps draw on.
#[derive(Debug, Clone)]
pub struct FeatureDump {
    pub coords: Vec<(usize, usize)>,
    pub labels: Vec<u32>,
    pub names: Vec<String>,
    pub stage1: Vec<Vec<f64>>,
    pub activities: Vec<Vec<f64>>,
    pub lengths: Vec<Vec<f64>>,
}

pub fn dump_features(model: &Model, data: &Dataset, coords: &[(usize, usize)]) -> Result<FeatureDump> {
    model.check_cube(&data.cube)?;
    let stage1 = coords
        .iter()
        .map(|&(r, c)| {
            let s: Vec<f64> = data.cube.pixel(r, c).iter().map(|&v| f64::from(v)).collect();
            model.pixel_features(&s)
        })
        .collect();
    let outputs = model.classify(&data.cube, coords)?;
    Ok(FeatureDump {
        coords: coords.to_vec(),
        labels: coords.iter().map(|&(r, c)| data.labels.get(r, c)).collect(),
        names: model.stage1.feature_names(),
        stage1,
        activities: outputs.iter().map(|o| o.activities.clone()).collect(),
        lengths: outputs.into_iter().map(|o| o.lengths).collect(),
    })
}

/// Entropy, Dunn index, and R² of the base features against `references`
/// over all labeled pixels.
pub fn interpret_model(
    model: &Model,
    data: &Dataset,
    base: LogBase,
    references: &References,
) -> Result<(InterpretabilityReport, FeatureDump)> {
    let coords: Vec<(usize, usize)> = data.labels.labeled().collect();
    if coords.is_empty() {
        return Err(Error::NoLabeledPixels);
    }
    let dump = dump_features(model, data, &coords)?;
    let (stage1_entropy, mean_stage1_entropy) = class_entropies(&dump.stage1, &dump.labels, base)?;
    let (capsule_entropy, mean_capsule_entropy) = class_entropies(&dump.activities, &dump.labels, base)?;
    let (dunn, dunn_note) = match dunn_index(&dump.stage1, &dump.labels) {
        Ok(d) => (Some(d), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let base_len = model.stage1.base_len();
    let mut table = Vec::new();
    for (ref_name, values) in references {
        for f in 0..base_len {
            let (x, y): (Vec<f64>, Vec<f64>) = dump
                .coords
                .iter()
                .zip(&dump.stage1)
                .map(|(&(r, c), feat)| (feat[f], values[r * data.cube.width() + c]))
                .filter(|(_, y)| y.is_finite())
                .unzip();
            table.push(RSquaredEntry {
                feature: dump.names[f].clone(),
                reference: ref_name.clone(),
                r_squared: r_squared(&x, &y).ok(),
            });
        }
    }
    let log_m = (model.feature_len() as f64).ln()
        / match base {
            LogBase::Natural => 1.0,
            LogBase::Two => std::f64::consts::LN_2,
        };
    let report = InterpretabilityReport {
        pixels: coords.len(),
        entropy_base: base,
        feature_len: model.feature_len(),
        max_stage1_entropy: log_m,
        stage1_entropy,
        mean_stage1_entropy,
        capsule_entropy,
        mean_capsule_entropy,
        dunn_index: dunn,
        dunn_note,
        r_squared: table,
        skipped_references: Vec::new(),
        comparison: None,
    };
    Ok((report, dump))
}

fn rows_csv(header: &str, dump: &FeatureDump, rows: &[Vec<f64>]) -> String {
    let mut out = format!("row,col,label,{header}\n");
    for ((&(r, c), label), values) in dump.coords.iter().zip(&dump.labels).zip(rows) {
        write!(out, "{r},{c},{label}").expect("write to string");
        for v in values {
            write!(out, ",{v}").expect("write to string");
        }
        out.push('\n');
    }
    out
}

/// Writes `interpret.json` plus the CSV dumps `stage1_features.csv`,
/// `class_lengths.csv`, and `conv3_weights.csv`.
pub fn cmd_interpret(
    config: &Path,
    checkpoint_path: &Path,
    ov: &Overrides,
    references: Option<&Path>,
    compare: Option<&Path>,
) -> Result<InterpretabilityReport> {
    let cfg = load_config(config, ov)?;
    let data = cfg.load_dataset()?;
    let (model, _) = load_checkpoint_for(checkpoint_path, &data)?;
    let (refs, skipped) = match references {
        Some(p) => (read_references(p, data.cube.height(), data.cube.width())?, Vec::new()),
        None => builtin_references(&data),
    };
    let (mut report, dump) = interpret_model(&model, &data, cfg.entropy_base, &refs)?;
    report.skipped_references = skipped;
    if let Some(path) = compare {
        let other = LabelMap::read_csv(path)?;
        let predicted: Vec<u32> = dump
            .lengths
            .iter()
            .map(|l| crate::capsule::argmax(l) as u32 + 1)
            .collect();
        report.comparison = Some(compare_with(
            &path.display().to_string(),
            &other,
            &data.labels,
            &dump.coords,
            &predicted,
        )?);
    }
    let dir = &cfg.output_dir;
    create_dir(dir)?;
    write(&dir.join("interpret.json"), to_json(&report))?;
    write(&dir.join("stage1_features.csv"), rows_csv(&dump.names.join(","), &dump, &dump.stage1))?;
    let length_names: Vec<String> = (1..=model.n_class()).map(|c| format!("len_{c}")).collect();
    write(&dir.join("class_lengths.csv"), rows_csv(&length_names.join(","), &dump, &dump.lengths))?;
    write(&dir.join("conv3_weights.csv"), conv3_csv(&model))?;
    Ok(report)
}

/// Long-format dump of the first spatial convolution:
/// `filter,ky,kx,feature,weight`.
pub fn conv3_csv(model: &Model) -> String {
    let conv = &model.conv3;
    let names = model.stage1.feature_names();
    let mut out = String::from("filter,ky,kx,feature,weight\n");
    let mut idx = 0;
    for f in 0..conv.filters {
        for ky in 0..conv.kernel {
            for kx in 0..conv.kernel {
                for name in &names {
                    writeln!(out, "{f},{ky},{kx},{name},{}", conv.weights[idx]).expect("write to string");
                    idx += 1;
                }
            }
        }
    }
    out
}

/// Runs the finite-difference check from an optional JSON config and
/// writes `gradcheck.json`. A failed comparison is a numeric error.
pub fn cmd_gradcheck(config: Option<&Path>, ov: &Overrides) -> Result<GradcheckReport> {
    let mut cfg = match config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str::<GradcheckConfig>(&text).map_err(|e| Error::Config(e.to_string()))?
        }
        None => GradcheckConfig::default(),
    };
    if let Some(seed) = ov.seed {
        cfg.seed = seed;
    }
    let report = run_gradcheck(&cfg)?;
    if let Some(dir) = &ov.output_dir {
        create_dir(dir)?;
        write(&dir.join("gradcheck.json"), to_json(&report))?;
    }
    if !report.passed {
        return Err(Error::Numeric(format!(
            "gradient check failed: max relative error {:.3e} >= {:.1e}",
            report.max_relative_error, report.tolerance
        )));
    }
    Ok(report)
}

/// Labeled samples keyed by coordinate, for callers that hold a split.
pub fn samples_by_coord(samples: &[Sample]) -> HashMap<(usize, usize), u32> {
    samples.iter().copied().collect()
}
