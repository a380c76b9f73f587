//! Trainable layers shared by both stages.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::kernels::{self, Conv1dShape, Conv2dShape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

/// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform(rng: &mut impl Rng, fan_in: usize, fan_out: usize, len: usize) -> Vec<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..len).map(|_| rng.random_range(-limit..=limit)).collect()
}

/// 1-D valid convolution. Input signals are `[position][channel]`;
/// weights are `[filter][channel][tap]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1dLayer {
    pub in_channels: usize,
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv1dLayer {
    pub fn new(in_channels: usize, filters: usize, kernel: usize, stride: usize) -> Result<Self> {
        if kernel == 0 || stride == 0 || filters == 0 || in_channels == 0 {
            return Err(Error::InvalidArgument(
                "conv1d kernel, stride, filters and channels must be positive".into(),
            ));
        }
        Ok(Self {
            in_channels,
            filters,
            kernel,
            stride,
            weights: vec![0.0; filters * in_channels * kernel],
            bias: vec![0.0; filters],
        })
    }

    pub fn init(mut self, rng: &mut impl Rng) -> Self {
        self.weights = glorot_uniform(
            rng,
            self.in_channels * self.kernel,
            self.filters * self.kernel,
            self.weights.len(),
        );
        self
    }

    /// Single-filter, single-channel layer from an explicit kernel.
    pub fn from_kernel(kernel: Vec<f64>, bias: f64, stride: usize) -> Result<Self> {
        let mut layer = Self::new(1, 1, kernel.len(), stride)?;
        layer.weights = kernel;
        layer.bias = vec![bias];
        Ok(layer)
    }

    pub fn output_len(&self, signal_len: usize) -> Option<usize> {
        (signal_len >= self.kernel).then(|| (signal_len - self.kernel) / self.stride + 1)
    }

    pub(crate) fn shape(&self, len: usize) -> Conv1dShape {
        Conv1dShape {
            len,
            in_ch: self.in_channels,
            out_ch: self.filters,
            kernel: self.kernel,
            stride: self.stride,
        }
    }
}

/// Valid 1-D convolution of a (multi-channel) signal, no activation.
/// Output is `[position][filter]`.
pub fn conv1d_forward(signal: &[f64], layer: &Conv1dLayer) -> Result<Vec<f64>> {
    if !signal.len().is_multiple_of(layer.in_channels) {
        return Err(Error::Shape(format!(
            "signal of {} values is not a multiple of {} channels",
            signal.len(),
            layer.in_channels
        )));
    }
    let len = signal.len() / layer.in_channels;
    if len < layer.kernel {
        return Err(Error::Shape(format!(
            "signal length {len} shorter than receptive field {}",
            layer.kernel
        )));
    }
    Ok(kernels::conv1d(layer.shape(len), signal, &layer.weights, &layer.bias))
}

/// Fully connected layer, weights `[out][in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
            activation,
        }
    }

    pub fn init(mut self, rng: &mut impl Rng) -> Self {
        self.weights = glorot_uniform(rng, self.inputs, self.outputs, self.weights.len());
        self
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.inputs {
            return Err(Error::Shape(format!(
                "dense layer expects {} inputs, got {}",
                self.inputs,
                input.len()
            )));
        }
        let out = kernels::dense(input, &self.weights, &self.biases);
        Ok(match self.activation {
            Activation::Relu => kernels::relu(&out),
            Activation::Identity => out,
        })
    }
}

/// 2-D valid cross-correlation over `[row][col][channel]` maps; weights
/// are `[filter][ky][kx][channel]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2dLayer {
    pub in_channels: usize,
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
    pub activation: Activation,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv2dLayer {
    pub fn new(
        in_channels: usize,
        filters: usize,
        kernel: usize,
        stride: usize,
        activation: Activation,
    ) -> Result<Self> {
        if kernel.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "conv2d kernel must be odd, got {kernel}"
            )));
        }
        if stride == 0 || filters == 0 || in_channels == 0 {
            return Err(Error::InvalidArgument(
                "conv2d stride, filters and channels must be positive".into(),
            ));
        }
        Ok(Self {
            in_channels,
            filters,
            kernel,
            stride,
            activation,
            weights: vec![0.0; filters * kernel * kernel * in_channels],
            bias: vec![0.0; filters],
        })
    }

    pub fn init(mut self, rng: &mut impl Rng) -> Self {
        let area = self.kernel * self.kernel;
        self.weights = glorot_uniform(
            rng,
            self.in_channels * area,
            self.filters * area,
            self.weights.len(),
        );
        self
    }

    pub fn output_hw(&self, height: usize, width: usize) -> Option<(usize, usize)> {
        (height >= self.kernel && width >= self.kernel).then(|| {
            (
                (height - self.kernel) / self.stride + 1,
                (width - self.kernel) / self.stride + 1,
            )
        })
    }

    pub(crate) fn shape(&self, height: usize, width: usize) -> Conv2dShape {
        Conv2dShape {
            height,
            width,
            in_ch: self.in_channels,
            out_ch: self.filters,
            kernel: self.kernel,
            stride: self.stride,
        }
    }
}

/// A `[row][col][channel]` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::Shape(format!(
                "feature map data {} != {height}x{width}x{channels}",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn at(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.data[(row * self.width + col) * self.channels + channel]
    }
}

pub fn conv2d_forward(map: &FeatureMap, layer: &Conv2dLayer) -> Result<FeatureMap> {
    if map.channels != layer.in_channels {
        return Err(Error::Shape(format!(
            "conv2d expects {} channels, got {}",
            layer.in_channels, map.channels
        )));
    }
    let (oh, ow) = layer.output_hw(map.height, map.width).ok_or_else(|| {
        Error::Shape(format!(
            "input {}x{} smaller than kernel {}",
            map.height, map.width, layer.kernel
        ))
    })?;
    let out = kernels::conv2d(layer.shape(map.height, map.width), &map.data, &layer.weights, &layer.bias);
    let out = match layer.activation {
        Activation::Relu => kernels::relu(&out),
        Activation::Identity => out,
    };
    FeatureMap::new(oh, ow, layer.filters, out)
}

/// Parameter leaves of one layer on a tape.
#[derive(Debug, Clone, Copy)]
pub(crate) struct BoundWeights {
    pub weight: Var,
    pub bias: Var,
}

pub(crate) fn bind_pair(tape: &mut Tape, weight: &[f64], bias: &[f64], trainable: bool) -> BoundWeights {
    let (weight, bias) = if trainable {
        (tape.param(weight.to_vec()), tape.param(bias.to_vec()))
    } else {
        (tape.constant(weight.to_vec()), tape.constant(bias.to_vec()))
    };
    BoundWeights { weight, bias }
}

pub(crate) fn apply_activation(tape: &mut Tape, x: Var, activation: Activation) -> Var {
    match activation {
        Activation::Relu => tape.relu(x),
        Activation::Identity => x,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_pick_kernel() {
        let layer = Conv1dLayer::from_kernel(vec![1.0, 0.0], 0.0, 1).unwrap();
        assert_eq!(conv1d_forward(&[1.0, 2.0, 3.0, 4.0], &layer).unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn box_kernel_sum() {
        let layer = Conv1dLayer::from_kernel(vec![1.0, 1.0, 1.0], 0.0, 1).unwrap();
        assert_eq!(conv1d_forward(&[1.0, 2.0, 3.0], &layer).unwrap(), vec![6.0]);
    }

    #[test]
    fn short_signal_is_error() {
        let layer = Conv1dLayer::from_kernel(vec![1.0, 1.0, 1.0], 0.0, 1).unwrap();
        assert!(conv1d_forward(&[1.0, 2.0], &layer).is_err());
    }

    #[test]
    fn stride_applied() {
        let layer = Conv1dLayer::from_kernel(vec![1.0, 1.0], 0.5, 2).unwrap();
        assert_eq!(conv1d_forward(&[1.0, 2.0, 3.0, 4.0, 5.0], &layer).unwrap(), vec![3.5, 7.5]);
    }

    /// Direct dot-product evaluation of each output position.
    fn conv1d_oracle(signal: &[f64], layer: &Conv1dLayer) -> Vec<f64> {
        let c = layer.in_channels;
        let len = signal.len() / c;
        let mut out = Vec::new();
        let mut p = 0;
        while p + layer.kernel <= len {
            for j in 0..layer.filters {
                let mut acc = layer.bias[j];
                for ch in 0..c {
                    for l in 0..layer.kernel {
                        acc += layer.weights[j * c * layer.kernel + ch * layer.kernel + l]
                            * signal[(p + l) * c + ch];
                    }
                }
                out.push(acc);
            }
            p += layer.stride;
        }
        out
    }

    proptest! {
        #[test]
        fn conv1d_matches_oracle(seed in any::<u64>(), len in 5usize..30, ch in 1usize..4, k in 1usize..5, stride in 1usize..3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut layer = Conv1dLayer::new(ch, 3, k, stride).unwrap().init(&mut rng);
            layer.bias = vec![0.1, -0.2, 0.3];
            let signal: Vec<f64> = (0..len * ch).map(|_| rng.random_range(-1.0..1.0)).collect();
            let got = conv1d_forward(&signal, &layer).unwrap();
            let want = conv1d_oracle(&signal, &layer);
            prop_assert_eq!(got.len(), want.len());
            for (a, b) in got.iter().zip(&want) {
                prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }

        #[test]
        fn conv1d_is_linear(seed in any::<u64>(), a in -5.0f64..5.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let layer = Conv1dLayer::new(1, 2, 3, 1).unwrap().init(&mut rng);
            let s: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
            let scaled: Vec<f64> = s.iter().map(|v| v * a).collect();
            let lhs = conv1d_forward(&scaled, &layer).unwrap();
            let rhs = conv1d_forward(&s, &layer).unwrap();
            for (x, y) in lhs.iter().zip(&rhs) {
                prop_assert!((x - a * y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conv2d_ones() {
        let map = FeatureMap::new(3, 3, 1, vec![1.0; 9]).unwrap();
        let mut layer = Conv2dLayer::new(1, 1, 3, 1, Activation::Relu).unwrap();
        layer.weights = vec![1.0; 9];
        let out = conv2d_forward(&map, &layer).unwrap();
        assert_eq!((out.height, out.width, out.data.clone()), (1, 1, vec![9.0]));
    }

    #[test]
    fn conv2d_delta_is_identity_on_interior() {
        let data: Vec<f64> = (0..25).map(|i| i as f64).collect();
        let map = FeatureMap::new(5, 5, 1, data).unwrap();
        let mut layer = Conv2dLayer::new(1, 1, 3, 1, Activation::Identity).unwrap();
        layer.weights[4] = 1.0;
        let out = conv2d_forward(&map, &layer).unwrap();
        for r in 0..3 {
            for c in 0..3 {
                assert_eq!(out.at(r, c, 0), map.at(r + 1, c + 1, 0));
            }
        }
    }

    #[test]
    fn conv2d_underflow() {
        let map = FeatureMap::new(2, 2, 1, vec![0.0; 4]).unwrap();
        let layer = Conv2dLayer::new(1, 1, 3, 1, Activation::Relu).unwrap();
        assert!(conv2d_forward(&map, &layer).is_err());
    }

    #[test]
    fn even_kernel_rejected() {
        assert!(Conv2dLayer::new(1, 1, 2, 1, Activation::Relu).is_err());
    }

    fn conv2d_oracle(map: &FeatureMap, layer: &Conv2dLayer) -> Vec<f64> {
        let (oh, ow) = layer.output_hw(map.height, map.width).unwrap();
        let k = layer.kernel;
        let mut out = vec![0.0; oh * ow * layer.filters];
        for oy in 0..oh {
            for ox in 0..ow {
                for f in 0..layer.filters {
                    let mut acc = layer.bias[f];
                    for ky in 0..k {
                        for kx in 0..k {
                            for c in 0..map.channels {
                                let w = layer.weights[((f * k + ky) * k + kx) * map.channels + c];
                                acc += w * map.at(oy * layer.stride + ky, ox * layer.stride + kx, c);
                            }
                        }
                    }
                    out[(oy * ow + ox) * layer.filters + f] = acc.max(0.0);
                }
            }
        }
        out
    }

    #[test]
    fn conv2d_matches_quadruple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (h, w, c, stride) in [(5, 5, 3, 1), (7, 6, 2, 2), (3, 9, 4, 1)] {
            let mut layer = Conv2dLayer::new(c, 4, 3, stride, Activation::Relu).unwrap().init(&mut rng);
            layer.bias = (0..4).map(|_| rng.random_range(-0.5..0.5)).collect();
            let data = (0..h * w * c).map(|_| rng.random_range(-1.0..1.0)).collect();
            let map = FeatureMap::new(h, w, c, data).unwrap();
            let got = conv2d_forward(&map, &layer).unwrap();
            for (a, b) in got.data.iter().zip(conv2d_oracle(&map, &layer)) {
                assert_relative_eq!(*a, b, max_relative = 1e-12, epsilon = 1e-300);
            }
        }
    }
}
