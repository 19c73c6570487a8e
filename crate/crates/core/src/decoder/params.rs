//! Stage parameter containers and their seeded initialization. All weights
//! draw from one deterministic stream, uniform in [-1/sqrt(d), 1/sqrt(d)],
//! so a seed pins every forward pass bit for bit.

use ndarray::{Array1, Array2};
use rand_chacha::rand_core::RngCore;
use rand_chacha::ChaCha8Rng;

/// Affine map `y = x W + b` with `W` stored input by output.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearParams {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Per-channel scale and shift applied after row normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNormParams {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

/// One gate path: a linear layer, layer norm, then sigmoid.
#[derive(Debug, Clone, PartialEq)]
pub struct GateParams {
    pub fc: LinearParams,
    pub norm: LayerNormParams,
}

/// Multi-head self-attention projections.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub query: LinearParams,
    pub key: LinearParams,
    pub value: LinearParams,
    pub output: LinearParams,
    pub heads: usize,
}

/// Two-layer feed-forward block with a ReLU in between.
#[derive(Debug, Clone, PartialEq)]
pub struct FfnParams {
    pub hidden: LinearParams,
    pub out: LinearParams,
}

/// Projections for one masked cross-attention block: the query-side map,
/// key and value maps over features, and the mask-embedding map that turns
/// refined queries into mask logits.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossAttentionParams {
    pub query_mlp: LinearParams,
    pub key: LinearParams,
    pub value: LinearParams,
    pub mask_embed: LinearParams,
}

/// Every learned tensor one decoder stage uses.
#[derive(Debug, Clone, PartialEq)]
pub struct StageParams {
    pub gate_x: GateParams,
    pub gate_q: GateParams,
    pub self_attn: AttentionParams,
    pub ffn: FfnParams,
    /// Cross attention of all queries over scene features.
    pub cross_scene: CrossAttentionParams,
    /// Cross attention of part queries over part features.
    pub cross_part: CrossAttentionParams,
    /// Self attention over the part section after the part cross attention.
    pub part_self_attn: AttentionParams,
    pub part_ffn: FfnParams,
    /// Classification head: hidden layer, then per-class logits.
    pub class_hidden: LinearParams,
    pub class_out: LinearParams,
}

/// Uniform draw in [0, 1) with 53-bit resolution.
fn unit(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn draw(rng: &mut ChaCha8Rng, scale: f64) -> f64 {
    (2.0 * unit(rng) - 1.0) * scale
}

fn linear(rng: &mut ChaCha8Rng, input: usize, output: usize, scale: f64) -> LinearParams {
    let weight = Array2::from_shape_fn((input, output), |_| draw(rng, scale));
    let bias = Array1::from_shape_fn(output, |_| draw(rng, scale));
    LinearParams { weight, bias }
}

fn layer_norm(dim: usize) -> LayerNormParams {
    LayerNormParams { gamma: Array1::ones(dim), beta: Array1::zeros(dim) }
}

fn gate(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> GateParams {
    GateParams { fc: linear(rng, dim, dim, scale), norm: layer_norm(dim) }
}

fn attention(rng: &mut ChaCha8Rng, dim: usize, heads: usize, scale: f64) -> AttentionParams {
    AttentionParams {
        query: linear(rng, dim, dim, scale),
        key: linear(rng, dim, dim, scale),
        value: linear(rng, dim, dim, scale),
        output: linear(rng, dim, dim, scale),
        heads,
    }
}

fn ffn(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> FfnParams {
    FfnParams { hidden: linear(rng, dim, 2 * dim, scale), out: linear(rng, 2 * dim, dim, scale) }
}

fn cross(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> CrossAttentionParams {
    CrossAttentionParams {
        query_mlp: linear(rng, dim, dim, scale),
        key: linear(rng, dim, dim, scale),
        value: linear(rng, dim, dim, scale),
        mask_embed: linear(rng, dim, dim, scale),
    }
}

impl StageParams {
    /// Draws a full parameter set from the stream in a fixed field order.
    pub fn seeded(rng: &mut ChaCha8Rng, dim: usize, heads: usize, classes: usize) -> StageParams {
        let scale = 1.0 / (dim as f64).sqrt();
        StageParams {
            gate_x: gate(rng, dim, scale),
            gate_q: gate(rng, dim, scale),
            self_attn: attention(rng, dim, heads, scale),
            ffn: ffn(rng, dim, scale),
            cross_scene: cross(rng, dim, scale),
            cross_part: cross(rng, dim, scale),
            part_self_attn: attention(rng, dim, heads, scale),
            part_ffn: ffn(rng, dim, scale),
            class_hidden: linear(rng, dim, dim, scale),
            class_out: linear(rng, dim, classes, scale),
        }
    }
}

/// Uniform matrix in [-1/sqrt(d), 1/sqrt(d)] for feature and query
/// initialization, drawn from the same stream as the parameters.
pub(crate) fn seeded_matrix(
    rng: &mut ChaCha8Rng,
    rows: usize,
    cols: usize,
    dim: usize,
) -> Array2<f64> {
    let scale = 1.0 / (dim as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| draw(rng, scale))
}
