//! The individual decoder operations: soft mask grouping, gated dynamic
//! updates, multi-head self attention with a feed-forward tail, masked cross
//! attention, prediction heads, flow-aligned upsampling and positional
//! encoding.

use ndarray::{s, Array2, ArrayView2};

use super::checks::SimTrace;
use super::params::{AttentionParams, CrossAttentionParams, FfnParams, LinearParams, StageParams};
use super::{DecoderError, FeatureMap, FlowField, MaskLogits, QuerySet, LARGE_NEG, LN_EPS};

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn apply_linear(x: ArrayView2<f64>, p: &LinearParams) -> Result<Array2<f64>, DecoderError> {
    if x.ncols() != p.weight.nrows() {
        return Err(DecoderError::ShapeMismatch {
            context: "linear layer input",
            expected: vec![x.nrows(), p.weight.nrows()],
            got: vec![x.nrows(), x.ncols()],
        });
    }
    Ok(x.dot(&p.weight) + &p.bias)
}

fn apply_layer_norm(x: &Array2<f64>, p: &super::params::LayerNormParams) -> Array2<f64> {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let n = row.len() as f64;
        let mean = row.sum() / n;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let denom = (var + LN_EPS).sqrt();
        for (value, (&g, &b)) in row.iter_mut().zip(p.gamma.iter().zip(p.beta.iter())) {
            *value = (*value - mean) / denom * g + b;
        }
    }
    out
}

fn softmax_rows(mut scores: Array2<f64>, trace: Option<&mut SimTrace>, label: &str) -> Array2<f64> {
    let mut sums = Vec::with_capacity(scores.nrows());
    for mut row in scores.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for value in row.iter_mut() {
            *value = (*value - max).exp();
            total += *value;
        }
        for value in row.iter_mut() {
            *value /= total;
        }
        sums.push(row.sum());
    }
    if let Some(trace) = trace {
        trace.attention_row_sums.push((label.to_string(), sums));
    }
    scores
}

/// Pools feature vectors under each query's mask: `X_n = sum_p w_n(p) F(p)`
/// with `w` the sigmoid of the mask logits, or the hard 0.5-threshold
/// indicator when `binarized` is set.
pub fn mask_grouping(
    masks: &MaskLogits,
    features: &FeatureMap,
    binarized: bool,
) -> Result<Array2<f64>, DecoderError> {
    if masks.height() != features.height() || masks.width() != features.width() {
        return Err(DecoderError::ShapeMismatch {
            context: "grouping grids",
            expected: vec![features.height(), features.width()],
            got: vec![masks.height(), masks.width()],
        });
    }
    let weights = masks.matrix().mapv(|m| {
        if binarized {
            f64::from(sigmoid(m) > 0.5)
        } else {
            sigmoid(m)
        }
    });
    Ok(weights.dot(features.matrix()))
}

/// Gated fusion of grouped features into the queries:
/// `Q_hat = gate_x(X) * X + gate_q(X) * Q` elementwise, each gate being
/// `sigmoid(layer_norm(fc(X)))`.
pub fn dynamic_update(
    x: &Array2<f64>,
    queries: &QuerySet,
    params: &StageParams,
) -> Result<QuerySet, DecoderError> {
    dynamic_update_traced(x, queries, params, None)
}

pub(crate) fn dynamic_update_traced(
    x: &Array2<f64>,
    queries: &QuerySet,
    params: &StageParams,
    trace: Option<&mut SimTrace>,
) -> Result<QuerySet, DecoderError> {
    if x.shape() != queries.matrix().shape() {
        return Err(DecoderError::ShapeMismatch {
            context: "dynamic update inputs",
            expected: queries.matrix().shape().to_vec(),
            got: x.shape().to_vec(),
        });
    }
    let gate_x = apply_layer_norm(&apply_linear(x.view(), &params.gate_x.fc)?, &params.gate_x.norm)
        .mapv(sigmoid);
    let gate_q = apply_layer_norm(&apply_linear(x.view(), &params.gate_q.fc)?, &params.gate_q.norm)
        .mapv(sigmoid);
    if let Some(trace) = trace {
        trace.gates.extend(gate_x.iter().copied());
        trace.gates.extend(gate_q.iter().copied());
    }
    let updated = &gate_x * x + &gate_q * queries.matrix();
    Ok(queries.with_values(updated))
}

/// Multi-head self attention with a feed-forward tail:
/// `FFN(MHSA(Q) + Q)`, attention rows softmax-normalized per head.
pub fn mhsa_ffn(queries: &QuerySet, params: &StageParams) -> Result<QuerySet, DecoderError> {
    mhsa_ffn_traced(queries, &params.self_attn, &params.ffn, None, "mhsa")
}

pub(crate) fn mhsa_ffn_traced(
    queries: &QuerySet,
    attn: &AttentionParams,
    ffn: &FfnParams,
    mut trace: Option<&mut SimTrace>,
    label: &str,
) -> Result<QuerySet, DecoderError> {
    let dim = queries.dim();
    if attn.heads == 0 || !dim.is_multiple_of(attn.heads) {
        return Err(DecoderError::HeadDivisibility { dim, heads: attn.heads });
    }
    let n = queries.len();
    let head_dim = dim / attn.heads;
    let q = apply_linear(queries.matrix().view(), &attn.query)?;
    let k = apply_linear(queries.matrix().view(), &attn.key)?;
    let v = apply_linear(queries.matrix().view(), &attn.value)?;
    let mut context = Array2::zeros((n, dim));
    for head in 0..attn.heads {
        let cols = s![.., head * head_dim..(head + 1) * head_dim];
        let qh = q.slice(cols);
        let kh = k.slice(cols);
        let vh = v.slice(cols);
        let scores = qh.dot(&kh.t()) / (head_dim as f64).sqrt();
        let probs =
            softmax_rows(scores, trace.as_deref_mut(), &format!("{label}.head{head}"));
        context.slice_mut(cols).assign(&probs.dot(&vh));
    }
    let attended = apply_linear(context.view(), &attn.output)? + queries.matrix();
    let hidden = apply_linear(attended.view(), &ffn.hidden)?.mapv(|v| v.max(0.0));
    let out = apply_linear(hidden.view(), &ffn.out)?;
    Ok(queries.with_values(out))
}

/// Cross attention of queries over feature pixels, restricted by the
/// previous stage's masks.
///
/// Positions whose previous mask sigmoid exceeds one half attend normally;
/// the rest receive a large negative additive penalty. A query whose mask
/// allows nothing falls back to attending everywhere. Returns the refined
/// queries (with residual) and fresh mask logits from the refined queries
/// against the mask-embedding projection of the features.
///
/// This entry uses the scene-side projections and no key positional
/// encoding; stage drivers pick the projection set and encoding explicitly.
pub fn masked_cross_attention(
    queries: &QuerySet,
    prev_masks: &MaskLogits,
    features: &FeatureMap,
    params: &StageParams,
) -> Result<(QuerySet, MaskLogits), DecoderError> {
    masked_cross_attention_traced(
        queries,
        prev_masks,
        features,
        &params.cross_scene,
        None,
        None,
        "cross",
    )
}

pub(crate) fn masked_cross_attention_traced(
    queries: &QuerySet,
    prev_masks: &MaskLogits,
    features: &FeatureMap,
    cross: &CrossAttentionParams,
    key_pe: Option<&FeatureMap>,
    trace: Option<&mut SimTrace>,
    label: &str,
) -> Result<(QuerySet, MaskLogits), DecoderError> {
    if prev_masks.rows() != queries.len()
        || prev_masks.height() != features.height()
        || prev_masks.width() != features.width()
    {
        return Err(DecoderError::ShapeMismatch {
            context: "cross attention masks",
            expected: vec![queries.len(), features.height(), features.width()],
            got: vec![prev_masks.rows(), prev_masks.height(), prev_masks.width()],
        });
    }
    if queries.dim() != features.channels() {
        return Err(DecoderError::ShapeMismatch {
            context: "cross attention channels",
            expected: vec![queries.dim()],
            got: vec![features.channels()],
        });
    }
    let key_input = match key_pe {
        Some(pe) => {
            if pe.height() != features.height()
                || pe.width() != features.width()
                || pe.channels() != features.channels()
            {
                return Err(DecoderError::ShapeMismatch {
                    context: "key positional encoding",
                    expected: vec![features.height(), features.width(), features.channels()],
                    got: vec![pe.height(), pe.width(), pe.channels()],
                });
            }
            features.matrix() + pe.matrix()
        }
        None => features.matrix().clone(),
    };
    let keys = apply_linear(key_input.view(), &cross.key)?;
    let values = apply_linear(features.matrix().view(), &cross.value)?;
    let projected = apply_linear(queries.matrix().view(), &cross.query_mlp)?;
    let mut scores = projected.dot(&keys.t());
    for (query_row, mask_row) in
        scores.rows_mut().into_iter().zip(prev_masks.matrix().rows())
    {
        // sigmoid(m) > 0.5 is exactly m > 0.
        let any_allowed = mask_row.iter().any(|&m| m > 0.0);
        if !any_allowed {
            continue;
        }
        let mut query_row = query_row;
        for (score, &m) in query_row.iter_mut().zip(mask_row.iter()) {
            if m <= 0.0 {
                *score += LARGE_NEG;
            }
        }
    }
    let probs = softmax_rows(scores, trace, label);
    let refined = probs.dot(&values) + queries.matrix();
    let embed = apply_linear(features.matrix().view(), &cross.mask_embed)?;
    let mask_values = refined.dot(&embed.t());
    let masks = MaskLogits::new(features.height(), features.width(), mask_values)?;
    Ok((queries.with_values(refined), masks))
}

/// Mask logits by per-section dot products (scene sections against the
/// scene features, the part section against the part features) and class
/// logits from a two-layer head on the queries.
pub fn predict_masks_and_classes(
    queries: &QuerySet,
    scene: &FeatureMap,
    part: &FeatureMap,
    params: &StageParams,
) -> Result<(MaskLogits, Array2<f64>), DecoderError> {
    if scene.height() != part.height() || scene.width() != part.width() {
        return Err(DecoderError::ShapeMismatch {
            context: "prediction feature grids",
            expected: vec![scene.height(), scene.width()],
            got: vec![part.height(), part.width()],
        });
    }
    if queries.dim() != scene.channels() || queries.dim() != part.channels() {
        return Err(DecoderError::ShapeMismatch {
            context: "prediction channels",
            expected: vec![queries.dim()],
            got: vec![scene.channels(), part.channels()],
        });
    }
    let sections = queries.sections();
    let pixels = scene.pixels();
    let mut mask_values = Array2::zeros((queries.len(), pixels));
    let scene_rows = sections.scene_range();
    let part_rows = sections.part_range();
    mask_values
        .slice_mut(s![scene_rows.clone(), ..])
        .assign(&queries.matrix().slice(s![scene_rows, ..]).dot(&scene.matrix().t()));
    mask_values
        .slice_mut(s![part_rows.clone(), ..])
        .assign(&queries.matrix().slice(s![part_rows, ..]).dot(&part.matrix().t()));
    let masks = MaskLogits::new(scene.height(), scene.width(), mask_values)?;
    let hidden =
        apply_linear(queries.matrix().view(), &params.class_hidden)?.mapv(|v| v.max(0.0));
    let class_logits = apply_linear(hidden.view(), &params.class_out)?;
    Ok((masks, class_logits))
}

/// Bilinear upsampling of a low-resolution feature map to the flow field's
/// grid, displacing each sample by the flow before scaling to the source
/// grid. Sample positions clamp to the source border.
pub fn flow_align_upsample(
    low: &FeatureMap,
    flow: &FlowField,
    out_height: usize,
    out_width: usize,
) -> Result<FeatureMap, DecoderError> {
    if flow.height() != out_height || flow.width() != out_width {
        return Err(DecoderError::ShapeMismatch {
            context: "flow grid",
            expected: vec![out_height, out_width],
            got: vec![flow.height(), flow.width()],
        });
    }
    if out_height == 0 || out_width == 0 {
        return Err(DecoderError::InvalidConfig { reason: "empty upsample target" });
    }
    let channels = low.channels();
    let scale_x = if out_width > 1 {
        (low.width().saturating_sub(1)) as f64 / (out_width - 1) as f64
    } else {
        0.0
    };
    let scale_y = if out_height > 1 {
        (low.height().saturating_sub(1)) as f64 / (out_height - 1) as f64
    } else {
        0.0
    };
    let max_x = (low.width() - 1) as f64;
    let max_y = (low.height() - 1) as f64;
    let mut values = Array2::zeros((out_height * out_width, channels));
    for y in 0..out_height {
        for x in 0..out_width {
            let src_x = ((x as f64 + flow.dx(x, y)) * scale_x).clamp(0.0, max_x);
            let src_y = ((y as f64 + flow.dy(x, y)) * scale_y).clamp(0.0, max_y);
            let x0 = src_x.floor() as usize;
            let y0 = src_y.floor() as usize;
            let x1 = (x0 + 1).min(low.width() - 1);
            let y1 = (y0 + 1).min(low.height() - 1);
            let tx = src_x - x0 as f64;
            let ty = src_y - y0 as f64;
            let row = y * out_width + x;
            for c in 0..channels {
                let f00 = low.matrix()[[y0 * low.width() + x0, c]];
                let f01 = low.matrix()[[y0 * low.width() + x1, c]];
                let f10 = low.matrix()[[y1 * low.width() + x0, c]];
                let f11 = low.matrix()[[y1 * low.width() + x1, c]];
                let top = f00 * (1.0 - tx) + f01 * tx;
                let bottom = f10 * (1.0 - tx) + f11 * tx;
                values[[row, c]] = top * (1.0 - ty) + bottom * ty;
            }
        }
    }
    FeatureMap::new(out_height, out_width, values)
}

/// Fixed two-dimensional sinusoidal positional encoding. The first half of
/// the channels encodes the x position, the second half the y position,
/// alternating sine and cosine over geometrically spaced wavelengths.
pub fn positional_encoding(
    height: usize,
    width: usize,
    dim: usize,
) -> Result<FeatureMap, DecoderError> {
    if !dim.is_multiple_of(2) {
        return Err(DecoderError::OddChannels { dim });
    }
    let axis_dim = dim / 2;
    let encode = |pos: usize, channel: usize| -> f64 {
        let pair = (channel / 2) * 2;
        let angle = pos as f64 / 10_000f64.powf(pair as f64 / axis_dim as f64);
        if channel.is_multiple_of(2) {
            angle.sin()
        } else {
            angle.cos()
        }
    };
    FeatureMap::from_fn(height, width, dim, |x, y, c| {
        if c < axis_dim {
            encode(x, c)
        } else {
            encode(y, c - axis_dim)
        }
    })
}
