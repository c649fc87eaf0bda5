//! The fusion backbone: construction, parameter/MAC accounting, inference.
//!
//! All variants share the same three-block convolutional stem (8, 16, 32
//! filters), global average pooling and a linear classifier; the fusion depth
//! is selected purely by the per-layer group counts, so every variant has
//! identical activation shapes.

mod checkpoint;
mod forward;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use forward::{ForwardCache, ModelGradients};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::ChannelStats;
use crate::error::{Error, Result};
use crate::nn::{BatchNormParams, ConvLayerParams};
use crate::tensor::Tensor;

/// Where the two sensor streams are merged, or which single stream is used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionStrategy {
    /// Channels concatenated at the input, every convolution dense.
    Vanilla,
    /// First convolution grouped per modality, mixing afterwards.
    Early,
    /// First two convolutions grouped.
    Mid,
    /// All convolutions grouped; streams meet only at the classifier.
    Late,
    /// Thermal channel alone.
    IrOnly,
    /// Depth channel alone.
    TofOnly,
}

impl FusionStrategy {
    pub const ALL: [FusionStrategy; 6] = [
        FusionStrategy::Vanilla,
        FusionStrategy::Early,
        FusionStrategy::Mid,
        FusionStrategy::Late,
        FusionStrategy::IrOnly,
        FusionStrategy::TofOnly,
    ];

    /// The four multimodal fusion depths.
    pub const MULTIMODAL: [FusionStrategy; 4] = [
        FusionStrategy::Vanilla,
        FusionStrategy::Early,
        FusionStrategy::Mid,
        FusionStrategy::Late,
    ];

    /// Group count per convolution layer.
    pub fn groups(&self) -> [usize; 3] {
        match self {
            FusionStrategy::Vanilla => [1, 1, 1],
            FusionStrategy::Early => [2, 1, 1],
            FusionStrategy::Mid => [2, 2, 1],
            FusionStrategy::Late => [2, 2, 2],
            FusionStrategy::IrOnly | FusionStrategy::TofOnly => [1, 1, 1],
        }
    }

    /// Input channel count (2 fused, 1 unimodal).
    pub fn input_channels(&self) -> usize {
        if self.is_multimodal() {
            2
        } else {
            1
        }
    }

    pub fn is_multimodal(&self) -> bool {
        matches!(
            self,
            FusionStrategy::Vanilla | FusionStrategy::Early | FusionStrategy::Mid | FusionStrategy::Late
        )
    }

    pub fn name(&self) -> &'static str {
        match self {
            FusionStrategy::Vanilla => "vanilla",
            FusionStrategy::Early => "early",
            FusionStrategy::Mid => "mid",
            FusionStrategy::Late => "late",
            FusionStrategy::IrOnly => "ir_only",
            FusionStrategy::TofOnly => "tof_only",
        }
    }
}

impl std::str::FromStr for FusionStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vanilla" => Ok(FusionStrategy::Vanilla),
            "early" => Ok(FusionStrategy::Early),
            "mid" => Ok(FusionStrategy::Mid),
            "late" => Ok(FusionStrategy::Late),
            "ir_only" | "ir" => Ok(FusionStrategy::IrOnly),
            "tof_only" | "tof" => Ok(FusionStrategy::TofOnly),
            other => Err(Error::InvalidConfig(format!("unknown strategy '{other}'"))),
        }
    }
}

impl std::fmt::Display for FusionStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Static description of a backbone instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub strategy: FusionStrategy,
    pub height: usize,
    pub width: usize,
    pub filters: [usize; 3],
    pub num_classes: usize,
    pub bn_epsilon: f64,
    pub bn_momentum: f64,
}

impl ModelConfig {
    /// The canonical 8x8 backbone: filters 8/16/32, seven classes.
    pub fn standard(strategy: FusionStrategy) -> Self {
        Self {
            strategy,
            height: 8,
            width: 8,
            filters: [8, 16, 32],
            num_classes: 7,
            bn_epsilon: 1e-3,
            bn_momentum: 0.99,
        }
    }

    pub fn input_channels(&self) -> usize {
        self.strategy.input_channels()
    }

    /// Channel count entering each convolution layer.
    fn layer_channels(&self) -> [(usize, usize); 3] {
        [
            (self.input_channels(), self.filters[0]),
            (self.filters[0], self.filters[1]),
            (self.filters[1], self.filters[2]),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 || self.num_classes == 0 {
            return Err(Error::InvalidConfig("zero-sized model dimension".into()));
        }
        let groups = self.strategy.groups();
        for (layer, (cin, cout)) in self.layer_channels().into_iter().enumerate() {
            let g = groups[layer];
            if g == 0 || cin % g != 0 || cout % g != 0 {
                return Err(Error::InvalidGroups { groups: g, cin, cout });
            }
        }
        if !(self.bn_epsilon > 0.0) || !(0.0..1.0).contains(&self.bn_momentum) {
            return Err(Error::InvalidConfig("bad batch-norm hyperparameters".into()));
        }
        Ok(())
    }
}

/// One convolution + normalization stage of the stem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvBlock {
    pub conv: ConvLayerParams,
    pub bn: BatchNormParams,
}

/// A built backbone with its input normalization statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub config: ModelConfig,
    pub blocks: Vec<ConvBlock>,
    pub dense_weights: Tensor,
    pub dense_bias: Tensor,
    /// Per-input-channel mean/std the inputs must be normalized with.
    pub norm_stats: ChannelStats,
    pub seed: u64,
}

/// Builds a freshly initialized backbone. Kernels and the classifier weight
/// matrix are He-uniform over their fan-in, biases and beta start at zero,
/// gamma at one; the draw order is fixed so a seed fully determines the model.
pub fn build_model(config: &ModelConfig, seed: u64) -> Result<Model> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups = config.strategy.groups();

    let mut blocks = Vec::with_capacity(3);
    for (layer, (cin, cout)) in config.layer_channels().into_iter().enumerate() {
        let g = groups[layer];
        let cpg = cin / g;
        let fan_in = (9 * cpg) as f64;
        let limit = (6.0 / fan_in).sqrt();
        let kernel = Tensor::from_fn(&[3, 3, cpg, cout], |_| rng.gen_range(-limit..limit));
        let conv = ConvLayerParams::new(kernel, Tensor::zeros(&[cout]), g)?;
        let bn = BatchNormParams::new(cout, config.bn_epsilon, config.bn_momentum);
        blocks.push(ConvBlock { conv, bn });
    }

    let embed = config.filters[2];
    let limit = (6.0 / embed as f64).sqrt();
    let dense_weights =
        Tensor::from_fn(&[embed, config.num_classes], |_| rng.gen_range(-limit..limit));
    let dense_bias = Tensor::zeros(&[config.num_classes]);

    Ok(Model {
        norm_stats: ChannelStats::identity(config.input_channels()),
        config: config.clone(),
        blocks,
        dense_weights,
        dense_bias,
        seed,
    })
}

impl Model {
    /// Total stored parameters: conv kernels and biases, the classifier, and
    /// all four per-channel normalization vectors of every block.
    pub fn count_params(&self) -> usize {
        let mut total = 0;
        for b in &self.blocks {
            total += b.conv.kernel.len() + b.conv.bias.len();
            total += b.bn.gamma.len()
                + b.bn.beta.len()
                + b.bn.moving_mean.len()
                + b.bn.moving_var.len();
        }
        total + self.dense_weights.len() + self.dense_bias.len()
    }

    /// Multiply-accumulate count of one forward pass (convolutions and the
    /// classifier; normalization and activations excluded).
    pub fn count_macs(&self) -> usize {
        let hw = self.config.height * self.config.width;
        let mut total = 0;
        for b in &self.blocks {
            total += hw * 9 * b.conv.cin_per_group() * b.conv.cout();
        }
        total + self.dense_weights.len()
    }

    /// Shapes of every intermediate activation for one input sample.
    pub fn activation_shapes(&self) -> Vec<Vec<usize>> {
        let (h, w) = (self.config.height, self.config.width);
        let mut shapes: Vec<Vec<usize>> =
            self.config.filters.iter().map(|&f| vec![h, w, f]).collect();
        shapes.push(vec![self.config.filters[2]]);
        shapes.push(vec![self.config.num_classes]);
        shapes
    }

    /// Learnable tensors in a fixed order (paired with [`ModelGradients`]).
    pub fn param_tensors(&self) -> Vec<&Tensor> {
        let mut v = Vec::with_capacity(self.blocks.len() * 4 + 2);
        for b in &self.blocks {
            v.push(&b.conv.kernel);
            v.push(&b.conv.bias);
            v.push(&b.bn.gamma);
            v.push(&b.bn.beta);
        }
        v.push(&self.dense_weights);
        v.push(&self.dense_bias);
        v
    }

    pub fn param_tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = Vec::with_capacity(self.blocks.len() * 4 + 2);
        for b in &mut self.blocks {
            v.push(&mut b.conv.kernel);
            v.push(&mut b.conv.bias);
            v.push(&mut b.bn.gamma);
            v.push(&mut b.bn.beta);
        }
        v.push(&mut self.dense_weights);
        v.push(&mut self.dense_bias);
        v
    }

    /// Sum of squared conv/dense weights (the regularized set; biases and
    /// normalization parameters are excluded).
    pub fn weight_sum_sq(&self) -> f64 {
        self.blocks.iter().map(|b| b.conv.kernel.sum_sq()).sum::<f64>()
            + self.dense_weights.sum_sq()
    }
}
