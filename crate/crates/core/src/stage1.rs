//! Spectral feature learning and index enhancement.
//!
//! Every non-empty band slice runs through a small network
//! (conv1 -> relu -> conv2 -> relu -> FC1 -> relu -> FC2) that emits
//! `n_class` values; slices too narrow for the convolution pair use a
//! single dense layer instead. The concatenated base features `x1` are
//! then expanded with two fixed transforms borrowed from vegetation
//! indices: a normalized difference over every pair and a signed
//! triangle area over every triple.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::data::BandSliceSet;
use crate::error::{Error, Result};
use crate::kernels;
use crate::layers::{apply_activation, bind_pair, Activation, BoundWeights, Conv1dLayer, DenseLayer};

/// How many triangular-index features to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TriangularCap {
    /// Keep all `C(n, 3)` features.
    None,
    /// No cap when `n_class <= 5`, otherwise keep 2000.
    #[default]
    Auto,
    Fixed(usize),
}

impl TriangularCap {
    pub const AUTO_LIMIT: usize = 2000;

    pub fn resolve(self, n_class: usize) -> Option<usize> {
        match self {
            TriangularCap::None => None,
            TriangularCap::Auto if n_class <= 5 => None,
            TriangularCap::Auto => Some(Self::AUTO_LIMIT),
            TriangularCap::Fixed(n) => Some(n),
        }
    }
}

impl Serialize for TriangularCap {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            TriangularCap::None => s.serialize_str("none"),
            TriangularCap::Auto => s.serialize_str("auto"),
            TriangularCap::Fixed(n) => s.serialize_u64(*n as u64),
        }
    }
}

impl<'de> Deserialize<'de> for TriangularCap {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Word(String),
            Count(usize),
        }
        match Raw::deserialize(d)? {
            Raw::Word(w) if w == "none" => Ok(TriangularCap::None),
            Raw::Word(w) if w == "auto" => Ok(TriangularCap::Auto),
            Raw::Word(w) => Err(serde::de::Error::custom(format!(
                "triangular_cap must be \"none\", \"auto\" or a count, got {w:?}"
            ))),
            Raw::Count(n) => Ok(TriangularCap::Fixed(n)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Stage1Config {
    pub conv1_filters: usize,
    pub conv1_kernel: usize,
    pub conv2_filters: usize,
    pub conv2_kernel: usize,
    pub conv_stride: usize,
    pub fc1_width: usize,
    /// Width of the dense layer replacing the conv pair on narrow slices.
    pub fallback_width: usize,
    /// Slices with fewer bands use the dense fallback.
    pub min_conv_bands: usize,
    pub epsilon: f64,
    pub triangular_cap: TriangularCap,
}

impl Default for Stage1Config {
    fn default() -> Self {
        Self {
            conv1_filters: 8,
            conv1_kernel: 5,
            conv2_filters: 16,
            conv2_kernel: 3,
            conv_stride: 1,
            fc1_width: 32,
            fallback_width: 16,
            min_conv_bands: 8,
            epsilon: 1e-8,
            triangular_cap: TriangularCap::Auto,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SliceFrontEnd {
    Conv { conv1: Conv1dLayer, conv2: Conv1dLayer },
    Dense(DenseLayer),
}

/// Network for one band slice, producing `n_class` base features.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceNet {
    pub name: String,
    pub bands: Vec<usize>,
    pub front: SliceFrontEnd,
    pub fc1: DenseLayer,
    pub fc2: DenseLayer,
}

impl SliceNet {
    fn build(name: &str, bands: &[usize], cfg: &Stage1Config, n_class: usize, rng: &mut impl Rng) -> Result<Self> {
        let nb = bands.len();
        let conv = (nb >= cfg.min_conv_bands)
            .then(|| -> Result<Option<(Conv1dLayer, Conv1dLayer, usize)>> {
                let conv1 = Conv1dLayer::new(1, cfg.conv1_filters, cfg.conv1_kernel, cfg.conv_stride)?;
                let conv2 = Conv1dLayer::new(cfg.conv1_filters, cfg.conv2_filters, cfg.conv2_kernel, cfg.conv_stride)?;
                Ok(conv1
                    .output_len(nb)
                    .and_then(|l1| conv2.output_len(l1))
                    .map(|l2| (conv1, conv2, l2 * cfg.conv2_filters)))
            })
            .transpose()?
            .flatten();
        let (front, width) = match conv {
            Some((conv1, conv2, width)) => (
                SliceFrontEnd::Conv {
                    conv1: conv1.init(rng),
                    conv2: conv2.init(rng),
                },
                width,
            ),
            None => (
                SliceFrontEnd::Dense(DenseLayer::new(nb, cfg.fallback_width, Activation::Relu).init(rng)),
                cfg.fallback_width,
            ),
        };
        Ok(Self {
            name: name.to_string(),
            bands: bands.to_vec(),
            front,
            fc1: DenseLayer::new(width, cfg.fc1_width, Activation::Relu).init(rng),
            fc2: DenseLayer::new(cfg.fc1_width, n_class, Activation::Identity).init(rng),
        })
    }
}

/// Enhancement settings frozen into a trained model.
#[derive(Debug, Clone, PartialEq)]
pub struct Enhancement {
    pub enabled: bool,
    pub epsilon: f64,
    /// Triangular triples in use; `None` means every lexicographic triple.
    pub triples: Option<Arc<[[u32; 3]]>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage1Params {
    pub slices: BandSliceSet,
    pub nets: Vec<SliceNet>,
    pub n_class: usize,
    pub enhancement: Enhancement,
}

impl Stage1Params {
    /// `slices` must already be segmented against the cube wavelengths.
    pub fn new(
        slices: &BandSliceSet,
        cfg: &Stage1Config,
        n_class: usize,
        enhance: bool,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let nets = slices
            .non_empty()
            .into_iter()
            .map(|i| SliceNet::build(&slices.slices[i].name, &slices.band_index_ranges[i], cfg, n_class, rng))
            .collect::<Result<Vec<_>>>()?;
        if nets.is_empty() {
            return Err(Error::NoBandOverlap);
        }
        let params = Self {
            slices: slices.clone(),
            nets,
            n_class,
            enhancement: Enhancement {
                enabled: enhance,
                epsilon: cfg.epsilon,
                triples: None,
            },
        };
        if enhance && params.base_len() < 3 {
            return Err(Error::TooFewBaseFeatures(params.base_len()));
        }
        Ok(params)
    }

    /// Number of non-empty slices.
    pub fn m(&self) -> usize {
        self.nets.len()
    }

    pub fn base_len(&self) -> usize {
        self.nets.len() * self.n_class
    }

    pub fn triangular_len(&self) -> usize {
        match &self.enhancement.triples {
            Some(t) => t.len(),
            None => binomial(self.base_len(), 3),
        }
    }

    /// Length of the enhanced feature vector.
    pub fn feature_len(&self) -> usize {
        let n = self.base_len();
        if self.enhancement.enabled {
            n + binomial(n, 2) + self.triangular_len()
        } else {
            n
        }
    }

    pub fn triples(&self) -> Arc<[[u32; 3]]> {
        self.enhancement
            .triples
            .clone()
            .unwrap_or_else(|| kernels::all_triples(self.base_len()).into())
    }

    /// Stable column names for the enhanced features (1-based positions).
    pub fn feature_names(&self) -> Vec<String> {
        let n = self.base_len();
        let mut names: Vec<String> = (1..=n).map(|i| format!("b1_{i}")).collect();
        if self.enhancement.enabled {
            for i in 1..=n {
                for j in i + 1..=n {
                    names.push(format!("bin_{i}_{j}"));
                }
            }
            for [i, j, h] in self.triples().iter() {
                names.push(format!("tri_{}_{}_{}", i + 1, j + 1, h + 1));
            }
        }
        names
    }
}

/// Layer leaves for one slice net.
#[derive(Debug, Clone)]
pub(crate) enum BoundFront {
    Conv { conv1: BoundWeights, conv2: BoundWeights },
    Dense(BoundWeights),
}

#[derive(Debug, Clone)]
pub(crate) struct BoundSliceNet {
    pub front: BoundFront,
    pub fc1: BoundWeights,
    pub fc2: BoundWeights,
}

impl Stage1Params {
    pub(crate) fn bind(&self, tape: &mut Tape, trainable: bool) -> Vec<BoundSliceNet> {
        self.nets
            .iter()
            .map(|net| BoundSliceNet {
                front: match &net.front {
                    SliceFrontEnd::Conv { conv1, conv2 } => BoundFront::Conv {
                        conv1: bind_pair(tape, &conv1.weights, &conv1.bias, trainable),
                        conv2: bind_pair(tape, &conv2.weights, &conv2.bias, trainable),
                    },
                    SliceFrontEnd::Dense(d) => BoundFront::Dense(bind_pair(tape, &d.weights, &d.biases, trainable)),
                },
                fc1: bind_pair(tape, &net.fc1.weights, &net.fc1.biases, trainable),
                fc2: bind_pair(tape, &net.fc2.weights, &net.fc2.biases, trainable),
            })
            .collect()
    }

    /// Records `x1` for one spectrum.
    pub(crate) fn record_base(&self, tape: &mut Tape, bound: &[BoundSliceNet], spectrum: &[f64]) -> Var {
        let parts: Vec<Var> = self
            .nets
            .iter()
            .zip(bound)
            .map(|(net, b)| {
                let input = tape.constant(net.bands.iter().map(|&i| spectrum[i]).collect());
                let hidden = match (&net.front, &b.front) {
                    (SliceFrontEnd::Conv { conv1, conv2 }, BoundFront::Conv { conv1: w1, conv2: w2 }) => {
                        let len0 = net.bands.len();
                        let h = tape.conv1d(input, w1.weight, w1.bias, conv1.shape(len0));
                        let h = tape.relu(h);
                        let len1 = conv1.output_len(len0).expect("validated at build");
                        let h = tape.conv1d(h, w2.weight, w2.bias, conv2.shape(len1));
                        tape.relu(h)
                    }
                    (SliceFrontEnd::Dense(d), BoundFront::Dense(w)) => {
                        let h = tape.dense(input, w.weight, w.bias);
                        apply_activation(tape, h, d.activation)
                    }
                    _ => unreachable!("binding mirrors the slice nets"),
                };
                let h = tape.dense(hidden, b.fc1.weight, b.fc1.bias);
                let h = apply_activation(tape, h, net.fc1.activation);
                let out = tape.dense(h, b.fc2.weight, b.fc2.bias);
                apply_activation(tape, out, net.fc2.activation)
            })
            .collect();
        tape.concat(&parts)
    }

    /// Records the enhanced feature vector `[x1, x2, x3]` for one spectrum.
    pub(crate) fn record_features(
        &self,
        tape: &mut Tape,
        bound: &[BoundSliceNet],
        triples: &Arc<[[u32; 3]]>,
        spectrum: &[f64],
    ) -> Var {
        let x1 = self.record_base(tape, bound, spectrum);
        if !self.enhancement.enabled {
            return x1;
        }
        let x2 = tape.binary_index(x1, self.enhancement.epsilon);
        let x3 = tape.triangular_index(x1, triples.clone());
        tape.concat(&[x1, x2, x3])
    }

    /// Fits the capped triangular selection on training spectra: keeps the
    /// `cap` highest-variance triples (ties by lexicographic order), then
    /// stores them in lexicographic order.
    pub fn fit_triangular_cap<'a>(&mut self, cap: Option<usize>, spectra: impl Iterator<Item = &'a [f64]>) -> Result<()> {
        let n = self.base_len();
        let total = binomial(n, 3);
        let Some(cap) = cap.filter(|&c| c < total) else {
            self.enhancement.triples = None;
            return Ok(());
        };
        let base: Vec<Vec<f64>> = spectra.map(|s| stage1_base_features(s, self)).collect::<Result<_>>()?;
        let all = kernels::all_triples(n);
        let values: Vec<Vec<f64>> = base.iter().map(|x| kernels::triangular_index(x, &all)).collect();
        self.enhancement.triples = Some(select_by_variance(&all, &values, cap).into());
        Ok(())
    }
}

fn select_by_variance(all: &[[u32; 3]], values: &[Vec<f64>], cap: usize) -> Vec<[u32; 3]> {
    let count = values.len().max(1) as f64;
    let variance: Vec<f64> = (0..all.len())
        .map(|k| {
            let mean = values.iter().map(|v| v[k]).sum::<f64>() / count;
            values.iter().map(|v| (v[k] - mean).powi(2)).sum::<f64>() / count
        })
        .collect();
    let mut order: Vec<usize> = (0..all.len()).collect();
    order.sort_by(|&a, &b| variance[b].total_cmp(&variance[a]).then(a.cmp(&b)));
    let mut keep: Vec<usize> = order.into_iter().take(cap).collect();
    keep.sort_unstable();
    keep.into_iter().map(|k| all[k]).collect()
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Base features `x1` (length `m * n_class`) for one pixel spectrum.
pub fn stage1_base_features(spectrum: &[f64], params: &Stage1Params) -> Result<Vec<f64>> {
    let bands = params.slices.band_index_ranges.iter().flatten().copied().max().map_or(0, |b| b + 1);
    if spectrum.len() < bands {
        return Err(Error::Shape(format!(
            "spectrum has {} bands, slices reference {bands}",
            spectrum.len()
        )));
    }
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, false);
    let x1 = params.record_base(&mut tape, &bound, spectrum);
    Ok(tape.value(x1).to_vec())
}

/// Normalized differences over every pair `i < j`, lexicographic, with a
/// sign-preserving `epsilon` guard and results clamped to `[-1, 1]`.
pub fn binary_index(x1: &[f64], epsilon: f64) -> Result<Vec<f64>> {
    if x1.len() < 2 {
        return Err(Error::TooFewBaseFeatures(x1.len()));
    }
    Ok(kernels::binary_index(x1, epsilon))
}

/// Signed triangle areas over every triple `i < j < h`, lexicographic.
pub fn triangular_index(x1: &[f64]) -> Result<Vec<f64>> {
    if x1.len() < 3 {
        return Err(Error::TooFewBaseFeatures(x1.len()));
    }
    Ok(kernels::triangular_index(x1, &kernels::all_triples(x1.len())))
}

/// Triangular index restricted to a fitted selection of triples.
pub fn triangular_index_selected(x1: &[f64], triples: &[[u32; 3]]) -> Result<Vec<f64>> {
    if let Some(bad) = triples.iter().find(|t| t[2] as usize >= x1.len() || !(t[0] < t[1] && t[1] < t[2])) {
        return Err(Error::InvalidArgument(format!("invalid triple {bad:?}")));
    }
    Ok(kernels::triangular_index(x1, triples))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnhancedFeatureVector {
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub x3: Vec<f64>,
    pub f_n: usize,
}

impl EnhancedFeatureVector {
    pub fn concat(&self) -> Vec<f64> {
        [&self.x1[..], &self.x2, &self.x3].concat()
    }
}

/// `triples` selects the triangular features; `None` keeps all.
pub fn enhance(x1: &[f64], epsilon: f64, triples: Option<&[[u32; 3]]>) -> Result<EnhancedFeatureVector> {
    if x1.len() < 3 {
        return Err(Error::TooFewBaseFeatures(x1.len()));
    }
    let x2 = binary_index(x1, epsilon)?;
    let x3 = match triples {
        Some(t) => triangular_index_selected(x1, t)?,
        None => triangular_index(x1)?,
    };
    Ok(EnhancedFeatureVector {
        f_n: x1.len() + x2.len() + x3.len(),
        x1: x1.to_vec(),
        x2,
        x3,
    })
}

/// `F_N = n + C(n, 2) + min(C(n, 3), cap)` with `n = m * n_class`.
pub fn feature_count(m: usize, n_class: usize, cap: Option<usize>) -> Result<usize> {
    let n = m * n_class;
    if m == 0 || n_class == 0 || n < 3 {
        return Err(Error::TooFewBaseFeatures(n));
    }
    let c3 = binomial(n, 3);
    Ok(n + binomial(n, 2) + cap.map_or(c3, |c| c3.min(c)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn binary_index_examples() {
        assert_abs_diff_eq!(binary_index(&[0.6, 0.2], 1e-8).unwrap()[0], 0.5, epsilon = 1e-7);
        assert_eq!(binary_index(&[0.3, 0.3], 1e-8).unwrap()[0], 0.0);
        assert!(binary_index(&[0.3], 1e-8).is_err());
    }

    #[test]
    fn binary_index_lengths() {
        for n in 2..=10 {
            let x: Vec<f64> = (0..n).map(|i| i as f64 + 1.0).collect();
            assert_eq!(binary_index(&x, 1e-8).unwrap().len(), n * (n - 1) / 2);
        }
    }

    #[test]
    fn triangular_examples() {
        assert_eq!(triangular_index(&[1.0, 1.0, 1.0]).unwrap(), vec![0.0]);
        assert_abs_diff_eq!(triangular_index(&[0.5, 0.3, 0.1]).unwrap()[0], 0.0, epsilon = 1e-15);
        assert_eq!(triangular_index(&[1.0, 0.0, 0.0]).unwrap(), vec![0.5]);
    }

    #[test]
    fn feature_count_examples() {
        assert_eq!(feature_count(7, 3, None).unwrap(), 1561);
        assert_eq!(feature_count(7, 17, None).unwrap(), 280959);
        assert_eq!(feature_count(7, 3, Some(100)).unwrap(), 331);
        assert!(matches!(feature_count(1, 2, None), Err(Error::TooFewBaseFeatures(2))));
    }

    #[test]
    fn enhance_zero_input() {
        let e = enhance(&[0.0; 21], 1e-8, None).unwrap();
        assert_eq!(e.f_n, 1561);
        assert!(e.x2.iter().chain(&e.x3).all(|&v| v == 0.0));
    }

    #[test]
    fn enhance_length_matches_count_exhaustively() {
        for m in 1..=30 {
            for n_class in 1..=30 {
                let n = m * n_class;
                if !(3..=30).contains(&n) {
                    continue;
                }
                let x: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
                let e = enhance(&x, 1e-8, None).unwrap();
                assert_eq!(e.f_n, feature_count(m, n_class, None).unwrap());
                assert_eq!(e.x2.len(), binomial(n, 2));
                assert_eq!(e.x3.len(), binomial(n, 3));
            }
        }
    }

    #[test]
    fn cap_resolution() {
        assert_eq!(TriangularCap::Auto.resolve(5), None);
        assert_eq!(TriangularCap::Auto.resolve(17), Some(2000));
        assert_eq!(TriangularCap::Fixed(7).resolve(3), Some(7));
        let parsed: TriangularCap = serde_json::from_str("\"none\"").unwrap();
        assert_eq!(parsed, TriangularCap::None);
        let parsed: TriangularCap = serde_json::from_str("100").unwrap();
        assert_eq!(parsed, TriangularCap::Fixed(100));
        assert!(serde_json::from_str::<TriangularCap>("\"many\"").is_err());
    }

    #[test]
    fn variance_selection_keeps_top_and_sorts() {
        let all = kernels::all_triples(4);
        // variances of the four triples: 0, 4, 1, 4
        let values = vec![vec![1.0, 0.0, 0.0, 2.0], vec![1.0, 4.0, 2.0, -2.0]];
        let keep = select_by_variance(&all, &values, 2);
        assert_eq!(keep, vec![all[1], all[3]]);
    }

    fn params(bands: usize, n_class: usize) -> Stage1Params {
        let wl: Vec<f64> = (0..bands).map(|i| 400.0 + 600.0 * i as f64 / bands as f64).collect();
        let slices = BandSliceSet::default().segment(&wl).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        Stage1Params::new(&slices, &Stage1Config::default(), n_class, true, &mut rng).unwrap()
    }

    #[test]
    fn base_length_is_m_times_classes() {
        let p = params(20, 3);
        assert_eq!(p.m(), 7);
        let x = stage1_base_features(&[0.5; 20], &p).unwrap();
        assert_eq!(x.len(), 21);
        assert_eq!(p.feature_len(), 1561);
        assert_eq!(p.feature_names().len(), 1561);
        assert_eq!(p.feature_names()[21], "bin_1_2");
        assert_eq!(p.feature_names()[1560], "tri_19_20_21");
    }

    #[test]
    fn five_slices_four_classes() {
        let slices = BandSliceSet::default()
            .segment(&[450.0, 550.0, 650.0, 700.0, 900.0])
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = Stage1Params::new(&slices, &Stage1Config::default(), 4, true, &mut rng).unwrap();
        assert_eq!(stage1_base_features(&[0.1, 0.2, 0.3, 0.4, 0.5], &p).unwrap().len(), 20);
    }

    #[test]
    fn zero_weights_give_zero_features() {
        let mut p = params(60, 3);
        for net in &mut p.nets {
            match &mut net.front {
                SliceFrontEnd::Conv { conv1, conv2 } => {
                    conv1.weights.fill(0.0);
                    conv2.weights.fill(0.0);
                }
                SliceFrontEnd::Dense(d) => d.weights.fill(0.0),
            }
            net.fc1.weights.fill(0.0);
            net.fc2.weights.fill(0.0);
        }
        assert!(p.nets.iter().any(|n| matches!(n.front, SliceFrontEnd::Conv { .. })));
        let x = stage1_base_features(&[0.7; 60], &p).unwrap();
        assert!(x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn capped_selection_fits_on_spectra() {
        let mut p = params(20, 3);
        let spectra: Vec<Vec<f64>> = (0..10).map(|k| (0..20).map(|b| ((k * b) as f64).cos()).collect()).collect();
        p.fit_triangular_cap(Some(100), spectra.iter().map(|s| s.as_slice())).unwrap();
        assert_eq!(p.triangular_len(), 100);
        assert_eq!(p.feature_len(), 331);
        let t = p.triples();
        assert!(t.windows(2).all(|w| w[0] < w[1]));
    }

    proptest! {
        #[test]
        fn binary_antisymmetric(a in 0.01f64..10.0, b in 0.01f64..10.0) {
            let ab = binary_index(&[a, b], 1e-8).unwrap()[0];
            let ba = binary_index(&[b, a], 1e-8).unwrap()[0];
            prop_assert!((ab + ba).abs() < 1e-15);
            prop_assert!((-1.0..=1.0).contains(&ab));
        }

        #[test]
        fn binary_scale_invariant(x in prop::collection::vec(0.01f64..10.0, 2..8), a in 0.1f64..100.0) {
            let scaled: Vec<f64> = x.iter().map(|v| v * a).collect();
            for (p, q) in binary_index(&x, 1e-8).unwrap().iter().zip(binary_index(&scaled, 1e-8).unwrap()) {
                prop_assert!((p - q).abs() < 1e-6);
            }
        }

        #[test]
        fn triangular_zero_on_affine(n in 3usize..12, a in -5.0f64..5.0, b in -5.0f64..5.0) {
            let x: Vec<f64> = (0..n).map(|i| a * i as f64 + b).collect();
            for v in triangular_index(&x).unwrap() {
                prop_assert!(v.abs() < 1e-9);
            }
        }

        #[test]
        fn triangular_homogeneous(x in prop::collection::vec(-3.0f64..3.0, 3..9), a in -4.0f64..4.0) {
            let scaled: Vec<f64> = x.iter().map(|v| v * a).collect();
            for (p, q) in triangular_index(&x).unwrap().iter().zip(triangular_index(&scaled).unwrap()) {
                prop_assert!((a * p - q).abs() < 1e-9);
            }
        }
    }
}
