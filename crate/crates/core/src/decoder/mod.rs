//! Forward-only numeric simulator of a query-based two-branch mask decoder.
//! Queries grouped into thing, stuff and part sections attend over scene and
//! part feature maps, refine through gated updates and self attention, and
//! emit mask logits per stage. Everything is seeded and bit-reproducible.

mod checks;
mod ops;
mod params;
mod stage;

pub use checks::{run_invariant_suite, InvariantCheck, InvariantReport, SimTrace};
pub use ops::{
    dynamic_update, flow_align_upsample, mask_grouping, masked_cross_attention,
    mhsa_ffn, positional_encoding, predict_masks_and_classes,
};
pub use params::{
    AttentionParams, CrossAttentionParams, FfnParams, GateParams, LayerNormParams, LinearParams,
    StageParams,
};
pub use stage::{decoder_stage_v1, decoder_stage_v2, SimOutput, Simulation, StageOutput};

use ndarray::Array2;
use thiserror::Error;

/// Additive attention penalty for masked-out positions.
pub const LARGE_NEG: f64 = -1e9;
/// Layer-norm variance floor.
pub const LN_EPS: f64 = 1e-5;
/// Attention rows must sum to one within this bound.
pub const SOFTMAX_TOL: f64 = 1e-12;
/// Feature edits at masked-out positions may move outputs at most this much.
pub const MASKED_TOL: f64 = 1e-9;
/// Section-wise permutation equivariance bound for whole stages.
pub const EQUIV_TOL: f64 = 1e-6;

/// Errors from decoder simulation.
#[derive(Debug, Error, PartialEq)]
pub enum DecoderError {
    #[error("shape mismatch in {context}: expected {expected:?}, got {got:?}")]
    ShapeMismatch { context: &'static str, expected: Vec<usize>, got: Vec<usize> },
    #[error("channel count {dim} is not divisible by {heads} heads")]
    HeadDivisibility { dim: usize, heads: usize },
    #[error("positional encoding needs an even channel count, got {dim}")]
    OddChannels { dim: usize },
    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },
    #[error("invalid configuration: {reason}")]
    InvalidConfig { reason: &'static str },
}

/// Dense H by W by d feature values, stored pixel-major as an (H*W) by d
/// matrix. Row index is `y * width + x`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    height: usize,
    width: usize,
    values: Array2<f64>,
}

impl FeatureMap {
    pub fn new(height: usize, width: usize, values: Array2<f64>) -> Result<Self, DecoderError> {
        if values.nrows() != height * width {
            return Err(DecoderError::ShapeMismatch {
                context: "feature map rows",
                expected: vec![height * width, values.ncols()],
                got: vec![values.nrows(), values.ncols()],
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(DecoderError::NonFinite { context: "feature map" });
        }
        Ok(FeatureMap { height, width, values })
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self, DecoderError> {
        let values =
            Array2::from_shape_fn((height * width, channels), |(p, c)| f(p % width, p / width, c));
        FeatureMap::new(height, width, values)
    }

    pub fn constant(height: usize, width: usize, channels: usize, value: f64) -> Self {
        FeatureMap { height, width, values: Array2::from_elem((height * width, channels), value) }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.values.ncols()
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    /// The (H*W) by d value matrix.
    pub fn matrix(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn matrix_mut(&mut self) -> &mut Array2<f64> {
        &mut self.values
    }
}

/// Sizes of the three contiguous query sections, in thing, stuff, part order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuerySections {
    pub thing: usize,
    pub stuff: usize,
    pub part: usize,
}

impl QuerySections {
    pub fn total(&self) -> usize {
        self.thing + self.stuff + self.part
    }

    /// Rows covering things and stuff.
    pub fn scene_range(&self) -> std::ops::Range<usize> {
        0..self.thing + self.stuff
    }

    pub fn part_range(&self) -> std::ops::Range<usize> {
        self.thing + self.stuff..self.total()
    }

    pub fn thing_range(&self) -> std::ops::Range<usize> {
        0..self.thing
    }

    pub fn stuff_range(&self) -> std::ops::Range<usize> {
        self.thing..self.thing + self.stuff
    }
}

/// Query embeddings with recorded section boundaries.
#[derive(Debug, Clone, PartialEq)]
pub struct QuerySet {
    sections: QuerySections,
    values: Array2<f64>,
}

impl QuerySet {
    pub fn new(sections: QuerySections, values: Array2<f64>) -> Result<Self, DecoderError> {
        if values.nrows() != sections.total() {
            return Err(DecoderError::ShapeMismatch {
                context: "query rows",
                expected: vec![sections.total(), values.ncols()],
                got: vec![values.nrows(), values.ncols()],
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(DecoderError::NonFinite { context: "query set" });
        }
        Ok(QuerySet { sections, values })
    }

    pub fn sections(&self) -> QuerySections {
        self.sections
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    /// The N by d embedding matrix.
    pub fn matrix(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn matrix_mut(&mut self) -> &mut Array2<f64> {
        &mut self.values
    }

    /// Replaces the embedding matrix, keeping the sections.
    pub(crate) fn with_values(&self, values: Array2<f64>) -> QuerySet {
        debug_assert_eq!(values.nrows(), self.sections.total());
        QuerySet { sections: self.sections, values }
    }
}

/// Per-query mask logits over an H by W grid, stored as N by (H*W).
#[derive(Debug, Clone, PartialEq)]
pub struct MaskLogits {
    height: usize,
    width: usize,
    values: Array2<f64>,
}

impl MaskLogits {
    pub fn new(height: usize, width: usize, values: Array2<f64>) -> Result<Self, DecoderError> {
        if values.ncols() != height * width {
            return Err(DecoderError::ShapeMismatch {
                context: "mask logit columns",
                expected: vec![values.nrows(), height * width],
                got: vec![values.nrows(), values.ncols()],
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(DecoderError::NonFinite { context: "mask logits" });
        }
        Ok(MaskLogits { height, width, values })
    }

    pub fn zeros(rows: usize, height: usize, width: usize) -> Self {
        MaskLogits { height, width, values: Array2::zeros((rows, height * width)) }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    /// The N by (H*W) logit matrix.
    pub fn matrix(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn matrix_mut(&mut self) -> &mut Array2<f64> {
        &mut self.values
    }
}

/// Per-pixel displacement vectors on a target grid, stored as (H*W) by 2
/// with x displacement first.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    height: usize,
    width: usize,
    values: Array2<f64>,
}

impl FlowField {
    pub fn new(height: usize, width: usize, values: Array2<f64>) -> Result<Self, DecoderError> {
        if values.nrows() != height * width || values.ncols() != 2 {
            return Err(DecoderError::ShapeMismatch {
                context: "flow field",
                expected: vec![height * width, 2],
                got: vec![values.nrows(), values.ncols()],
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(DecoderError::NonFinite { context: "flow field" });
        }
        Ok(FlowField { height, width, values })
    }

    pub fn zero(height: usize, width: usize) -> Self {
        FlowField { height, width, values: Array2::zeros((height * width, 2)) }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dx(&self, x: usize, y: usize) -> f64 {
        self.values[[y * self.width + x, 0]]
    }

    pub fn dy(&self, x: usize, y: usize) -> f64 {
        self.values[[y * self.width + x, 1]]
    }

    pub fn matrix_mut(&mut self) -> &mut Array2<f64> {
        &mut self.values
    }
}

/// Which stage ordering the simulator runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arch {
    /// Joint update: per-section grouping, gated dynamic update, one shared
    /// self-attention block, direct dot-product masks.
    V1,
    /// Global-first: masked cross attention of all queries over scene
    /// features, then a part-only pass over part features.
    V2,
}

/// Full simulator configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    pub dim: usize,
    pub heads: usize,
    pub sections: QuerySections,
    pub stages: usize,
    pub arch: Arch,
    pub classes: usize,
    /// Pool grouped features over the hard 0.5-thresholded mask instead of
    /// sigmoid weights.
    pub binarized_grouping: bool,
    /// Add the positional encoding to cross-attention key inputs.
    pub pe_on_keys: bool,
    /// Run the part-only cross attention in v2 stages.
    pub pmc_enabled: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 0,
            height: 16,
            width: 16,
            dim: 32,
            heads: 4,
            sections: QuerySections { thing: 8, stuff: 8, part: 8 },
            stages: 3,
            arch: Arch::V2,
            classes: 10,
            binarized_grouping: false,
            pe_on_keys: true,
            pmc_enabled: true,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), DecoderError> {
        if self.height == 0 || self.width == 0 {
            return Err(DecoderError::InvalidConfig { reason: "grid has no pixels" });
        }
        if self.dim == 0 {
            return Err(DecoderError::InvalidConfig { reason: "channel count is zero" });
        }
        if self.heads == 0 || !self.dim.is_multiple_of(self.heads) {
            return Err(DecoderError::HeadDivisibility { dim: self.dim, heads: self.heads });
        }
        if self.sections.total() == 0 {
            return Err(DecoderError::InvalidConfig { reason: "no queries configured" });
        }
        if self.stages == 0 {
            return Err(DecoderError::InvalidConfig { reason: "stage count is zero" });
        }
        if self.classes == 0 {
            return Err(DecoderError::InvalidConfig { reason: "class count is zero" });
        }
        if self.pe_on_keys && !self.dim.is_multiple_of(2) {
            return Err(DecoderError::OddChannels { dim: self.dim });
        }
        Ok(())
    }
}
