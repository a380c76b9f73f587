//! The two-stage network: spectral Stage 1, capsule Stage 2, and the
//! reconstruction decoder.

use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::capsule::{argmax, record_routing, ClassCapsuleLayer, PrimaryCapsuleLayer, Stage2Config};
use crate::data::{patch_coords, BandSliceSet, HsiCube};
use crate::error::{Error, Result};
use crate::layers::{apply_activation, bind_pair, Activation, BoundWeights, Conv2dLayer, DenseLayer};
use crate::stage1::{BoundSliceNet, SliceFrontEnd, Stage1Config, Stage1Params};
use crate::training::loss::{one_hot, MarginLossConfig};

/// Architecture toggles used by the ablation variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Ablation {
    pub segmentation: bool,
    pub enhancement: bool,
}

impl Default for Ablation {
    fn default() -> Self {
        Variant::Model3.ablation()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Whole spectrum, no enhancement.
    Model1,
    /// Band slices, no enhancement.
    Model2,
    /// Band slices plus enhancement.
    Model3,
}

impl Variant {
    pub fn ablation(self) -> Ablation {
        match self {
            Variant::Model1 => Ablation {
                segmentation: false,
                enhancement: false,
            },
            Variant::Model2 => Ablation {
                segmentation: true,
                enhancement: false,
            },
            Variant::Model3 => Ablation {
                segmentation: true,
                enhancement: true,
            },
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "model1" => Ok(Variant::Model1),
            "model2" => Ok(Variant::Model2),
            "model3" => Ok(Variant::Model3),
            other => Err(Error::Config(format!("unknown variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub n_class: usize,
    pub bands: usize,
    pub patch_size: usize,
    pub stage1: Stage1Config,
    pub stage2: Stage2Config,
    pub ablation: Ablation,
}

/// Reconstruction head: masked class capsules -> hidden (relu) -> n_class.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoder {
    pub fc1: DenseLayer,
    pub fc2: DenseLayer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub stage1: Stage1Params,
    pub conv3: Conv2dLayer,
    pub primary: PrimaryCapsuleLayer,
    pub class_caps: ClassCapsuleLayer,
    pub decoder: Decoder,
}

/// Name and values of one parameter tensor.
#[derive(Debug, Clone)]
pub struct ParamRef<'a> {
    pub name: String,
    pub values: &'a [f64],
}

#[derive(Debug, Clone)]
pub(crate) struct BoundModel {
    stage1: Vec<BoundSliceNet>,
    conv3: BoundWeights,
    primary: BoundWeights,
    class_caps: BoundWeights,
    dec1: BoundWeights,
    dec2: BoundWeights,
    triples: Arc<[[u32; 3]]>,
}

/// Forward quantities for one patch.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchOutput {
    /// Class-capsule activities `v[n][d]`.
    pub activities: Vec<f64>,
    pub lengths: Vec<f64>,
    /// Predicted 1-based class.
    pub class: u32,
}

impl Model {
    /// Builds a freshly initialized model; `slices` is the slice
    /// definitions to segment against `wavelengths` (ignored when
    /// segmentation is disabled).
    pub fn new(config: ModelConfig, slices: &BandSliceSet, wavelengths: &[f64], rng: &mut impl Rng) -> Result<Self> {
        if wavelengths.len() != config.bands {
            return Err(Error::Shape(format!(
                "model configured for {} bands, cube has {}",
                config.bands,
                wavelengths.len()
            )));
        }
        let spec = if config.ablation.segmentation {
            slices.clone()
        } else {
            BandSliceSet::whole_spectrum()
        };
        let segmented = spec.segment(wavelengths)?;
        Self::from_segmented(config, &segmented, rng)
    }

    pub(crate) fn from_segmented(config: ModelConfig, segmented: &BandSliceSet, rng: &mut impl Rng) -> Result<Self> {
        if config.patch_size.is_multiple_of(2) {
            return Err(Error::Config(format!("patch size must be odd, got {}", config.patch_size)));
        }
        if config.n_class == 0 {
            return Err(Error::Config("n_class must be positive".into()));
        }
        if config.stage2.routing_iterations == 0 {
            return Err(Error::Config("routing_iterations must be at least 1".into()));
        }
        let stage1 = Stage1Params::new(segmented, &config.stage1, config.n_class, config.ablation.enhancement, rng)?;
        let s2 = &config.stage2;
        let conv3 = Conv2dLayer::new(stage1.feature_len(), s2.conv3_filters, s2.conv3_kernel, s2.conv3_stride, Activation::Relu)?
            .init(rng);
        let (h1, w1) = conv3
            .output_hw(config.patch_size, config.patch_size)
            .ok_or_else(|| Error::Config(format!("patch {} smaller than conv3 kernel", config.patch_size)))?;
        let primary = PrimaryCapsuleLayer::new(s2.conv3_filters, s2.capsules, s2.capsule_dim, s2.capsule_kernel, s2.capsule_stride)?
            .init(rng);
        let inputs = primary
            .output_count(h1, w1)
            .ok_or_else(|| Error::Config(format!("patch {} too small for the capsule kernel", config.patch_size)))?;
        let class_caps = ClassCapsuleLayer::new(inputs, config.n_class, s2.capsule_dim, s2.class_dim()).init(rng);
        let decoder = Decoder {
            fc1: DenseLayer::new(config.n_class * s2.class_dim(), s2.decoder_hidden, Activation::Relu).init(rng),
            fc2: DenseLayer::new(s2.decoder_hidden, config.n_class, Activation::Identity).init(rng),
        };
        Ok(Self {
            config,
            stage1,
            conv3,
            primary,
            class_caps,
            decoder,
        })
    }

    pub fn feature_len(&self) -> usize {
        self.stage1.feature_len()
    }

    pub fn n_class(&self) -> usize {
        self.config.n_class
    }

    pub fn class_dim(&self) -> usize {
        self.class_caps.out_dim
    }

    /// Parameters in their canonical order.
    pub fn params(&self) -> Vec<ParamRef<'_>> {
        let mut out = Vec::new();
        for net in &self.stage1.nets {
            let mut parts: Vec<(&str, &[f64])> = match &net.front {
                SliceFrontEnd::Conv { conv1, conv2 } => vec![
                    ("conv1.weight", &conv1.weights),
                    ("conv1.bias", &conv1.bias),
                    ("conv2.weight", &conv2.weights),
                    ("conv2.bias", &conv2.bias),
                ],
                SliceFrontEnd::Dense(d) => vec![("dense.weight", &d.weights), ("dense.bias", &d.biases)],
            };
            parts.extend([
                ("fc1.weight", net.fc1.weights.as_slice()),
                ("fc1.bias", &net.fc1.biases),
                ("fc2.weight", &net.fc2.weights),
                ("fc2.bias", &net.fc2.biases),
            ]);
            out.extend(parts.into_iter().map(|(part, values)| ParamRef {
                name: format!("stage1.{}.{part}", net.name),
                values,
            }));
        }
        let tail: [(&str, &[f64]); 10] = [
            ("conv3.weight", &self.conv3.weights),
            ("conv3.bias", &self.conv3.bias),
            ("primary.weight", &self.primary.conv.weights),
            ("primary.bias", &self.primary.conv.bias),
            ("class.weight", &self.class_caps.weights),
            ("class.bias", &self.class_caps.biases),
            ("decoder.fc1.weight", &self.decoder.fc1.weights),
            ("decoder.fc1.bias", &self.decoder.fc1.biases),
            ("decoder.fc2.weight", &self.decoder.fc2.weights),
            ("decoder.fc2.bias", &self.decoder.fc2.biases),
        ];
        out.extend(tail.into_iter().map(|(name, values)| ParamRef {
            name: name.to_string(),
            values,
        }));
        out
    }

    /// Mutable parameters in the same order as [`Model::params`].
    pub fn params_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out: Vec<&mut Vec<f64>> = Vec::new();
        for net in &mut self.stage1.nets {
            match &mut net.front {
                SliceFrontEnd::Conv { conv1, conv2 } => {
                    out.push(&mut conv1.weights);
                    out.push(&mut conv1.bias);
                    out.push(&mut conv2.weights);
                    out.push(&mut conv2.bias);
                }
                SliceFrontEnd::Dense(d) => {
                    out.push(&mut d.weights);
                    out.push(&mut d.biases);
                }
            }
            out.push(&mut net.fc1.weights);
            out.push(&mut net.fc1.biases);
            out.push(&mut net.fc2.weights);
            out.push(&mut net.fc2.biases);
        }
        out.push(&mut self.conv3.weights);
        out.push(&mut self.conv3.bias);
        out.push(&mut self.primary.conv.weights);
        out.push(&mut self.primary.conv.bias);
        out.push(&mut self.class_caps.weights);
        out.push(&mut self.class_caps.biases);
        out.push(&mut self.decoder.fc1.weights);
        out.push(&mut self.decoder.fc1.biases);
        out.push(&mut self.decoder.fc2.weights);
        out.push(&mut self.decoder.fc2.biases);
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.values.len()).sum()
    }

    pub(crate) fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundModel {
        let stage1 = self.stage1.bind(tape, trainable);
        BoundModel {
            stage1,
            conv3: bind_pair(tape, &self.conv3.weights, &self.conv3.bias, trainable),
            primary: bind_pair(tape, &self.primary.conv.weights, &self.primary.conv.bias, trainable),
            class_caps: bind_pair(tape, &self.class_caps.weights, &self.class_caps.biases, trainable),
            dec1: bind_pair(tape, &self.decoder.fc1.weights, &self.decoder.fc1.biases, trainable),
            dec2: bind_pair(tape, &self.decoder.fc2.weights, &self.decoder.fc2.biases, trainable),
            triples: self.stage1.triples(),
        }
    }

    pub(crate) fn record_pixel(&self, tape: &mut Tape, bound: &BoundModel, spectrum: &[f64]) -> Var {
        self.stage1.record_features(tape, &bound.stage1, &bound.triples, spectrum)
    }

    /// Records Stage 2 for a patch whose per-cell feature vectors are
    /// `cells` (row-major, `patch_size^2` entries). Returns the class
    /// capsule activities `v[n][d]`.
    pub(crate) fn record_capsules(&self, tape: &mut Tape, bound: &BoundModel, cells: &[Var]) -> Var {
        let s = self.config.patch_size;
        let input = tape.concat(cells);
        let o = tape.conv2d(input, bound.conv3.weight, bound.conv3.bias, self.conv3.shape(s, s));
        let o = apply_activation(tape, o, self.conv3.activation);
        let (h1, w1) = self.conv3.output_hw(s, s).expect("validated at build");
        let raw = tape.conv2d(o, bound.primary.weight, bound.primary.bias, self.primary.conv.shape(h1, w1));
        let poses = tape.squash(raw, self.primary.dim);
        let u_hat = tape.class_predict(poses, bound.class_caps.weight, bound.class_caps.bias, self.class_caps.shape());
        record_routing(tape, u_hat, self.class_caps.shape(), self.config.stage2.routing_iterations).activities
    }

    /// Records the reconstruction from activities masked to `class`
    /// (0-based).
    pub(crate) fn record_decoder(&self, tape: &mut Tape, bound: &BoundModel, activities: Var, class: usize) -> Var {
        let d = self.class_dim();
        let masked = tape.mask(activities, class * d..(class + 1) * d);
        let h = tape.dense(masked, bound.dec1.weight, bound.dec1.bias);
        let h = apply_activation(tape, h, self.decoder.fc1.activation);
        let y = tape.dense(h, bound.dec2.weight, bound.dec2.bias);
        apply_activation(tape, y, self.decoder.fc2.activation)
    }

    /// Total loss for one patch with 1-based `label`.
    pub(crate) fn record_patch_loss(
        &self,
        tape: &mut Tape,
        bound: &BoundModel,
        cells: &[Var],
        label: u32,
        margin: &MarginLossConfig,
        theta: f64,
    ) -> Var {
        let target = label as usize - 1;
        let v = self.record_capsules(tape, bound, cells);
        let lengths = tape.norms(v, self.class_dim());
        let margin_loss = tape.margin_loss(lengths, target, *margin);
        let recon = self.record_decoder(tape, bound, v, target);
        let recon_loss = tape.mse(recon, one_hot(label, self.n_class()));
        let weighted = tape.scale(recon_loss, theta);
        tape.add(margin_loss, weighted)
    }

    /// Enhanced Stage-1 feature vector for one spectrum.
    pub fn pixel_features(&self, spectrum: &[f64]) -> Vec<f64> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let x = self.record_pixel(&mut tape, &bound, spectrum);
        tape.value(x).to_vec()
    }

    /// Stage-1 features for every pixel of a cube, row-major.
    pub fn feature_map(&self, cube: &HsiCube) -> Result<Vec<Vec<f64>>> {
        self.check_cube(cube)?;
        Ok((0..cube.height() * cube.width())
            .into_par_iter()
            .map(|i| {
                let spectrum: Vec<f64> = cube
                    .pixel(i / cube.width(), i % cube.width())
                    .iter()
                    .map(|&v| f64::from(v))
                    .collect();
                self.pixel_features(&spectrum)
            })
            .collect())
    }

    /// Stage 2 on precomputed feature cells.
    pub fn classify_cells(&self, cells: &[&[f64]]) -> PatchOutput {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let vars: Vec<Var> = cells.iter().map(|c| tape.constant(c.to_vec())).collect();
        let v = self.record_capsules(&mut tape, &bound, &vars);
        let activities = tape.value(v).to_vec();
        let lengths = crate::kernels::group_norms(&activities, self.class_dim());
        let class = argmax(&lengths) as u32 + 1;
        PatchOutput {
            activities,
            lengths,
            class,
        }
    }

    /// Classifies the patches centered at `centers`, computing Stage 1
    /// only for the pixels those patches touch.
    pub fn classify(&self, cube: &HsiCube, centers: &[(usize, usize)]) -> Result<Vec<PatchOutput>> {
        self.check_cube(cube)?;
        let (h, w) = (cube.height(), cube.width());
        let mut needed = vec![false; h * w];
        for &center in centers {
            for (r, c) in patch_coords(h, w, center, self.config.patch_size)? {
                needed[r * w + c] = true;
            }
        }
        let features: Vec<Vec<f64>> = (0..h * w)
            .into_par_iter()
            .map(|i| {
                if !needed[i] {
                    return Vec::new();
                }
                let spectrum: Vec<f64> = cube.pixel(i / w, i % w).iter().map(|&v| f64::from(v)).collect();
                self.pixel_features(&spectrum)
            })
            .collect();
        self.classify_with_features(h, w, &features, centers)
    }

    /// Classifies patches against a precomputed row-major feature map.
    pub fn classify_with_features(
        &self,
        height: usize,
        width: usize,
        features: &[Vec<f64>],
        centers: &[(usize, usize)],
    ) -> Result<Vec<PatchOutput>> {
        let s = self.config.patch_size;
        centers
            .par_iter()
            .map(|&center| {
                let coords = patch_coords(height, width, center, s)?;
                let cells: Vec<&[f64]> = coords.iter().map(|&(r, c)| features[r * width + c].as_slice()).collect();
                Ok(self.classify_cells(&cells))
            })
            .collect()
    }

    pub(crate) fn check_cube(&self, cube: &HsiCube) -> Result<()> {
        if cube.bands() != self.config.bands {
            return Err(Error::Shape(format!(
                "model expects {} bands, cube has {}",
                self.config.bands,
                cube.bands()
            )));
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn record_patch(
        &self,
        tape: &mut Tape,
        bound: &BoundModel,
        cube: &HsiCube,
        center: (usize, usize),
        label: u32,
        margin: &MarginLossConfig,
        theta: f64,
    ) -> Result<Var> {
        if label == 0 || label as usize > self.n_class() {
            return Err(Error::InvalidArgument(format!("training label {label} out of range")));
        }
        let coords = patch_coords(cube.height(), cube.width(), center, self.config.patch_size)?;
        let mut seen: HashMap<(usize, usize), Var> = HashMap::new();
        let cells: Vec<Var> = coords
            .into_iter()
            .map(|rc| {
                *seen.entry(rc).or_insert_with(|| {
                    let spectrum: Vec<f64> = cube.pixel(rc.0, rc.1).iter().map(|&v| f64::from(v)).collect();
                    self.record_pixel(tape, bound, &spectrum)
                })
            })
            .collect();
        Ok(self.record_patch_loss(tape, bound, &cells, label, margin, theta))
    }

    pub(crate) fn bound_param_vars(bound: &BoundModel) -> Vec<Var> {
        let mut out = Vec::new();
        for net in &bound.stage1 {
            match &net.front {
                crate::stage1::BoundFront::Conv { conv1, conv2 } => {
                    out.extend([conv1.weight, conv1.bias, conv2.weight, conv2.bias]);
                }
                crate::stage1::BoundFront::Dense(d) => out.extend([d.weight, d.bias]),
            }
            out.extend([net.fc1.weight, net.fc1.bias, net.fc2.weight, net.fc2.bias]);
        }
        for w in [bound.conv3, bound.primary, bound.class_caps, bound.dec1, bound.dec2] {
            out.extend([w.weight, w.bias]);
        }
        out
    }

    /// Loss and parameter gradients for a single labeled patch.
    pub fn patch_loss_and_gradients(
        &self,
        cube: &HsiCube,
        center: (usize, usize),
        label: u32,
        margin: &MarginLossConfig,
        theta: f64,
    ) -> Result<(f64, Vec<Vec<f64>>)> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, true);
        let loss = self.record_patch(&mut tape, &bound, cube, center, label, margin, theta)?;
        let mut grads = tape.backward(loss)?;
        let vars = Self::bound_param_vars(&bound);
        Ok((tape.scalar(loss), vars.into_iter().map(|v| grads.take(v)).collect()))
    }

    /// Mean batch loss and its gradient for every parameter tensor, in
    /// [`Model::params`] order. Patches run in parallel; the reduction
    /// order is fixed, so results do not depend on the thread count.
    pub fn loss_and_gradients(
        &self,
        cube: &HsiCube,
        batch: &[((usize, usize), u32)],
        margin: &MarginLossConfig,
        theta: f64,
    ) -> Result<(f64, Vec<Vec<f64>>)> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let per_patch: Vec<(f64, Vec<Vec<f64>>)> = batch
            .par_iter()
            .map(|&(center, label)| self.patch_loss_and_gradients(cube, center, label, margin, theta))
            .collect::<Result<_>>()?;
        let scale = 1.0 / batch.len() as f64;
        let mut iter = per_patch.into_iter();
        let (mut loss, mut grads) = iter.next().expect("non-empty batch");
        for (l, g) in iter {
            loss += l;
            for (acc, part) in grads.iter_mut().zip(g) {
                for (a, b) in acc.iter_mut().zip(part) {
                    *a += b;
                }
            }
        }
        grads.iter_mut().flatten().for_each(|g| *g *= scale);
        Ok((loss * scale, grads))
    }

    /// Mean batch loss without gradients.
    pub fn batch_loss(
        &self,
        cube: &HsiCube,
        batch: &[((usize, usize), u32)],
        margin: &MarginLossConfig,
        theta: f64,
    ) -> Result<f64> {
        Ok(self.batch_loss_and_pattern(cube, batch, margin, theta)?.0)
    }

    /// Mean batch loss plus the concatenated branch patterns of every
    /// patch (see [`Tape::branch_pattern`]).
    pub fn batch_loss_and_pattern(
        &self,
        cube: &HsiCube,
        batch: &[((usize, usize), u32)],
        margin: &MarginLossConfig,
        theta: f64,
    ) -> Result<(f64, Vec<u8>)> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let per_patch: Vec<(f64, Vec<u8>)> = batch
            .par_iter()
            .map(|&(center, label)| {
                let mut tape = Tape::new();
                let bound = self.bind(&mut tape, false);
                let loss = self.record_patch(&mut tape, &bound, cube, center, label, margin, theta)?;
                Ok((tape.scalar(loss), tape.branch_pattern()))
            })
            .collect::<Result<_>>()?;
        let loss = per_patch.iter().map(|p| p.0).sum::<f64>() / batch.len() as f64;
        Ok((loss, per_patch.into_iter().flat_map(|p| p.1).collect()))
    }
}

/// Reconstruction from class-capsule activities masked to `class`
/// (1-based): every other capsule is zeroed before the two dense layers.
pub fn decoder_forward(activities: &[f64], class: u32, decoder: &Decoder, n_class: usize) -> Result<Vec<f64>> {
    if class == 0 || class as usize > n_class {
        return Err(Error::InvalidArgument(format!("class {class} outside [1, {n_class}]")));
    }
    if activities.len() != decoder.fc1.inputs || !activities.len().is_multiple_of(n_class) {
        return Err(Error::Shape(format!(
            "decoder expects {} activity values, got {}",
            decoder.fc1.inputs,
            activities.len()
        )));
    }
    let d = activities.len() / n_class;
    let c = class as usize - 1;
    let masked: Vec<f64> = activities
        .iter()
        .enumerate()
        .map(|(i, &v)| if i / d == c { v } else { 0.0 })
        .collect();
    decoder.fc2.forward(&decoder.fc1.forward(&masked)?)
}
