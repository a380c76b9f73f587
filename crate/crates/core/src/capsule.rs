//! Primary capsules, class capsules, and routing-by-agreement.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::kernels::{self, CapsShape};
use crate::layers::{glorot_uniform, Activation, Conv2dLayer, FeatureMap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Stage2Config {
    pub conv3_filters: usize,
    pub conv3_kernel: usize,
    pub conv3_stride: usize,
    /// Number of capsule types (Z).
    pub capsules: usize,
    /// Neurons per primary capsule (K).
    pub capsule_dim: usize,
    pub capsule_kernel: usize,
    pub capsule_stride: usize,
    /// Class-capsule dimension; defaults to the capsule count.
    pub class_capsule_dim: Option<usize>,
    pub routing_iterations: usize,
    pub decoder_hidden: usize,
}

impl Default for Stage2Config {
    fn default() -> Self {
        Self {
            conv3_filters: 32,
            conv3_kernel: 3,
            conv3_stride: 1,
            capsules: 8,
            capsule_dim: 8,
            capsule_kernel: 3,
            capsule_stride: 1,
            class_capsule_dim: None,
            routing_iterations: 3,
            decoder_hidden: 64,
        }
    }
}

impl Stage2Config {
    pub fn class_dim(&self) -> usize {
        self.class_capsule_dim.unwrap_or(self.capsules)
    }
}

/// `capsules` convolutional capsules of `dim` neurons each, realised as
/// one linear conv with `capsules * dim` filters; filter `z * dim + k`
/// is neuron `k` of capsule `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimaryCapsuleLayer {
    pub capsules: usize,
    pub dim: usize,
    pub conv: Conv2dLayer,
}

impl PrimaryCapsuleLayer {
    pub fn new(in_channels: usize, capsules: usize, dim: usize, kernel: usize, stride: usize) -> Result<Self> {
        if capsules < 2 || dim < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 capsules of dimension >= 2, got {capsules} x {dim}"
            )));
        }
        Ok(Self {
            capsules,
            dim,
            conv: Conv2dLayer::new(in_channels, capsules * dim, kernel, stride, Activation::Identity)?,
        })
    }

    pub fn init(mut self, rng: &mut impl Rng) -> Self {
        self.conv = self.conv.init(rng);
        self
    }

    /// Pose-vector count for an input of the given spatial size.
    pub fn output_count(&self, height: usize, width: usize) -> Option<usize> {
        self.conv.output_hw(height, width).map(|(h, w)| h * w * self.capsules)
    }
}

/// Squash: rescales `u` to length `|u|^2 / (1 + |u|^2)`; zero stays zero.
pub fn squash(u: &[f64]) -> Vec<f64> {
    if u.is_empty() {
        return Vec::new();
    }
    kernels::squash_groups(u, u.len())
}

/// Squashed primary-capsule poses, flattened `[position][capsule][k]`.
pub fn primary_capsules(o: &FeatureMap, layer: &PrimaryCapsuleLayer) -> Result<Vec<f64>> {
    let raw = crate::layers::conv2d_forward(o, &layer.conv)?;
    Ok(kernels::squash_groups(&raw.data, layer.dim))
}

/// Transformation matrices `W[m][n]` (`out_dim x in_dim`) and per-class
/// biases `B[n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassCapsuleLayer {
    pub inputs: usize,
    pub n_class: usize,
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl ClassCapsuleLayer {
    pub fn new(inputs: usize, n_class: usize, in_dim: usize, out_dim: usize) -> Self {
        Self {
            inputs,
            n_class,
            in_dim,
            out_dim,
            weights: vec![0.0; inputs * n_class * out_dim * in_dim],
            biases: vec![0.0; n_class * out_dim],
        }
    }

    pub fn init(mut self, rng: &mut impl Rng) -> Self {
        self.weights = glorot_uniform(rng, self.in_dim, self.out_dim, self.weights.len());
        self
    }

    pub(crate) fn shape(&self) -> CapsShape {
        CapsShape {
            m: self.inputs,
            n: self.n_class,
            d: self.out_dim,
            k: self.in_dim,
        }
    }
}

/// Predictions `u_hat[m][n] = W[m][n] · pose[m] + B[n]`, flattened
/// `[m][n][d]`.
pub fn predict_vectors(poses: &[f64], layer: &ClassCapsuleLayer) -> Result<Vec<f64>> {
    if poses.len() != layer.inputs * layer.in_dim {
        return Err(Error::Shape(format!(
            "expected {} poses of dim {}, got {} values",
            layer.inputs,
            layer.in_dim,
            poses.len()
        )));
    }
    Ok(kernels::class_predict(layer.shape(), poses, &layer.weights, &layer.biases))
}

/// Outcome of routing one patch.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingState {
    pub inputs: usize,
    pub n_class: usize,
    pub dim: usize,
    /// Final logits `b[m][n]` (after the last agreement update).
    pub logits: Vec<f64>,
    /// Coupling coefficients `c[m][n]` used in the last iteration.
    pub coupling: Vec<f64>,
    /// `s[n][d]` of the last iteration.
    pub weighted: Vec<f64>,
    /// Class-capsule activities `v[n][d]`.
    pub activities: Vec<f64>,
    pub iterations: usize,
    /// Coupling coefficients of every iteration, in order.
    pub coupling_history: Vec<Vec<f64>>,
}

pub(crate) struct RoutedVars {
    pub activities: Var,
    pub weighted: Var,
    pub logits: Var,
    pub couplings: Vec<Var>,
}

/// Records routing on the tape. Each iteration computes couplings as a
/// softmax of the logits over classes, weighted sums, squashed
/// activities, then adds the agreement `v[n] · u_hat[m][n]` to the logits.
pub(crate) fn record_routing(tape: &mut Tape, u_hat: Var, shape: CapsShape, iterations: usize) -> RoutedVars {
    let mut logits = tape.constant(vec![0.0; shape.m * shape.n]);
    let mut couplings = Vec::with_capacity(iterations);
    let mut weighted = None;
    let mut activities = None;
    for it in 0..iterations {
        let c = tape.softmax_rows(logits, shape.n);
        couplings.push(c);
        let s = tape.weighted_sum(c, u_hat, shape);
        let v = tape.squash(s, shape.d);
        weighted = Some(s);
        activities = Some(v);
        if it + 1 < iterations {
            let a = tape.agreement(v, u_hat, shape);
            logits = tape.add(logits, a);
        }
    }
    RoutedVars {
        activities: activities.expect("at least one iteration"),
        weighted: weighted.expect("at least one iteration"),
        logits,
        couplings,
    }
}

/// Routes predictions `u_hat` (flattened `[m][n][d]`) to class capsules.
pub fn route(u_hat: &[f64], inputs: usize, n_class: usize, dim: usize, iterations: usize) -> Result<RoutingState> {
    if iterations == 0 {
        return Err(Error::InvalidArgument("routing needs at least one iteration".into()));
    }
    if u_hat.len() != inputs * n_class * dim {
        return Err(Error::Shape(format!(
            "u_hat has {} values, expected {inputs}x{n_class}x{dim}",
            u_hat.len()
        )));
    }
    let shape = CapsShape {
        m: inputs,
        n: n_class,
        d: dim,
        k: 0,
    };
    let mut tape = Tape::new();
    let u = tape.constant(u_hat.to_vec());
    let routed = record_routing(&mut tape, u, shape, iterations);
    let mut history = Vec::with_capacity(iterations);
    for (it, &c) in routed.couplings.iter().enumerate() {
        let values = tape.value(c);
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite coupling at routing iteration {}", it + 1)));
        }
        history.push(values.to_vec());
    }
    let activities = tape.value(routed.activities).to_vec();
    if activities.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("non-finite activity at routing iteration {iterations}")));
    }
    // The returned logits include the agreement from the final iteration.
    let mut logits = tape.value(routed.logits).to_vec();
    for (b, a) in logits
        .iter_mut()
        .zip(kernels::agreement(shape, &activities, u_hat))
    {
        *b += a;
    }
    Ok(RoutingState {
        inputs,
        n_class,
        dim,
        logits,
        coupling: history.last().cloned().unwrap_or_default(),
        weighted: tape.value(routed.weighted).to_vec(),
        activities,
        iterations,
        coupling_history: history,
    })
}

/// Per-class capsule lengths and the predicted 1-based class (argmax,
/// ties to the lowest id).
pub fn class_probabilities(state: &RoutingState) -> (Vec<f64>, u32) {
    let lengths = kernels::group_norms(&state.activities, state.dim);
    let class = argmax(&lengths) as u32 + 1;
    (lengths, class)
}

/// Index of the first maximum.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
