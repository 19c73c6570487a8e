//! Whole decoder stages in both orderings, plus the seeded end-to-end
//! simulation that chains them over synthetic features.

use ndarray::{concatenate, s, Array2, Axis};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::checks::SimTrace;
use super::ops::{
    dynamic_update_traced, mask_grouping, masked_cross_attention_traced, mhsa_ffn_traced,
    positional_encoding, predict_masks_and_classes,
};
use super::params::{seeded_matrix, StageParams};
use super::{Arch, DecoderError, FeatureMap, MaskLogits, QuerySet, QuerySections, SimConfig};

fn check_stage_shapes(
    queries: &QuerySet,
    masks: &MaskLogits,
    scene: &FeatureMap,
    part: &FeatureMap,
) -> Result<(), DecoderError> {
    if scene.height() != part.height() || scene.width() != part.width() {
        return Err(DecoderError::ShapeMismatch {
            context: "stage feature grids",
            expected: vec![scene.height(), scene.width()],
            got: vec![part.height(), part.width()],
        });
    }
    if queries.dim() != scene.channels() || queries.dim() != part.channels() {
        return Err(DecoderError::ShapeMismatch {
            context: "stage feature channels",
            expected: vec![queries.dim()],
            got: vec![scene.channels(), part.channels()],
        });
    }
    if masks.rows() != queries.len()
        || masks.height() != scene.height()
        || masks.width() != scene.width()
    {
        return Err(DecoderError::ShapeMismatch {
            context: "stage masks",
            expected: vec![queries.len(), scene.height(), scene.width()],
            got: vec![masks.rows(), masks.height(), masks.width()],
        });
    }
    Ok(())
}

/// Mask logits as plain dot products, thing and stuff rows against the scene
/// features and part rows against the part features.
fn direct_masks(
    queries: &QuerySet,
    scene: &FeatureMap,
    part: &FeatureMap,
) -> Result<MaskLogits, DecoderError> {
    let sections = queries.sections();
    let mut values = Array2::zeros((queries.len(), scene.pixels()));
    let scene_rows = sections.scene_range();
    let part_rows = sections.part_range();
    values
        .slice_mut(s![scene_rows.clone(), ..])
        .assign(&queries.matrix().slice(s![scene_rows, ..]).dot(&scene.matrix().t()));
    values
        .slice_mut(s![part_rows.clone(), ..])
        .assign(&queries.matrix().slice(s![part_rows, ..]).dot(&part.matrix().t()));
    MaskLogits::new(scene.height(), scene.width(), values)
}

/// One joint-update stage: group each section's features under its masks,
/// fuse into the queries through the gates, self-attend over the unified
/// set, and emit direct dot-product masks.
pub fn decoder_stage_v1(
    queries: &QuerySet,
    masks: &MaskLogits,
    scene: &FeatureMap,
    part: &FeatureMap,
    params: &StageParams,
    binarized: bool,
) -> Result<(QuerySet, MaskLogits), DecoderError> {
    decoder_stage_v1_traced(queries, masks, scene, part, params, binarized, None)
}

pub(crate) fn decoder_stage_v1_traced(
    queries: &QuerySet,
    masks: &MaskLogits,
    scene: &FeatureMap,
    part: &FeatureMap,
    params: &StageParams,
    binarized: bool,
    mut trace: Option<&mut SimTrace>,
) -> Result<(QuerySet, MaskLogits), DecoderError> {
    check_stage_shapes(queries, masks, scene, part)?;
    let sections = queries.sections();
    let scene_masks = MaskLogits::new(
        masks.height(),
        masks.width(),
        masks.matrix().slice(s![sections.scene_range(), ..]).to_owned(),
    )?;
    let part_masks = MaskLogits::new(
        masks.height(),
        masks.width(),
        masks.matrix().slice(s![sections.part_range(), ..]).to_owned(),
    )?;
    let x_scene = mask_grouping(&scene_masks, scene, binarized)?;
    let x_part = mask_grouping(&part_masks, part, binarized)?;
    let x = concatenate(Axis(0), &[x_scene.view(), x_part.view()])
        .expect("both groupings share the channel count");
    let fused = dynamic_update_traced(&x, queries, params, trace.as_deref_mut())?;
    let refined = mhsa_ffn_traced(&fused, &params.self_attn, &params.ffn, trace, "v1.self")?;
    let masks_out = direct_masks(&refined, scene, part)?;
    Ok((refined, masks_out))
}

/// One global-first stage: masked cross attention of all queries over the
/// scene features with a self-attention block, then the same treatment of
/// the part section alone over the part features.
///
/// Thing and stuff mask rows come from the global pass, part mask rows from
/// the part pass. With `pmc_enabled` off the stage stops after the global
/// pass. `pe_on_keys` adds the sinusoidal encoding to the global pass's key
/// inputs.
pub fn decoder_stage_v2(
    queries: &QuerySet,
    masks: &MaskLogits,
    scene: &FeatureMap,
    part: &FeatureMap,
    params: &StageParams,
    pe_on_keys: bool,
    pmc_enabled: bool,
) -> Result<(QuerySet, MaskLogits), DecoderError> {
    decoder_stage_v2_traced(queries, masks, scene, part, params, pe_on_keys, pmc_enabled, None)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn decoder_stage_v2_traced(
    queries: &QuerySet,
    masks: &MaskLogits,
    scene: &FeatureMap,
    part: &FeatureMap,
    params: &StageParams,
    pe_on_keys: bool,
    pmc_enabled: bool,
    mut trace: Option<&mut SimTrace>,
) -> Result<(QuerySet, MaskLogits), DecoderError> {
    check_stage_shapes(queries, masks, scene, part)?;
    let pe = if pe_on_keys {
        Some(positional_encoding(scene.height(), scene.width(), queries.dim())?)
    } else {
        None
    };
    let (global, global_masks) = masked_cross_attention_traced(
        queries,
        masks,
        scene,
        &params.cross_scene,
        pe.as_ref(),
        trace.as_deref_mut(),
        "v2.gmc",
    )?;
    let refined =
        mhsa_ffn_traced(&global, &params.self_attn, &params.ffn, trace.as_deref_mut(), "v2.self")?;
    if !pmc_enabled {
        return Ok((refined, global_masks));
    }

    let part_rows = queries.sections().part_range();
    let part_sections = QuerySections { thing: 0, stuff: 0, part: part_rows.len() };
    let part_queries = QuerySet::new(
        part_sections,
        refined.matrix().slice(s![part_rows.clone(), ..]).to_owned(),
    )?;
    let part_masks = MaskLogits::new(
        global_masks.height(),
        global_masks.width(),
        global_masks.matrix().slice(s![part_rows.clone(), ..]).to_owned(),
    )?;
    let (part_refined, part_mask_out) = masked_cross_attention_traced(
        &part_queries,
        &part_masks,
        part,
        &params.cross_part,
        None,
        trace.as_deref_mut(),
        "v2.pmc",
    )?;
    let part_final = mhsa_ffn_traced(
        &part_refined,
        &params.part_self_attn,
        &params.part_ffn,
        trace,
        "v2.part_self",
    )?;

    let mut out_values = refined.matrix().clone();
    out_values.slice_mut(s![part_rows.clone(), ..]).assign(part_final.matrix());
    let mut out_masks = global_masks.matrix().clone();
    out_masks.slice_mut(s![part_rows, ..]).assign(part_mask_out.matrix());
    Ok((
        refined.with_values(out_values),
        MaskLogits::new(global_masks.height(), global_masks.width(), out_masks)?,
    ))
}

/// Queries and masks after one stage.
#[derive(Debug, Clone)]
pub struct StageOutput {
    pub queries: QuerySet,
    pub masks: MaskLogits,
}

/// Every stage's output plus the final prediction heads.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub stages: Vec<StageOutput>,
    /// Mask logits from the prediction head on the last stage's queries.
    pub masks: MaskLogits,
    /// Class logits, one row per query.
    pub class_logits: Array2<f64>,
}

/// A fully seeded decoder run: parameters, synthetic features and initial
/// queries all derive from one seed, so identical configurations reproduce
/// bit for bit.
#[derive(Debug, Clone)]
pub struct Simulation {
    cfg: SimConfig,
    params: Vec<StageParams>,
    scene: FeatureMap,
    part: FeatureMap,
    queries: QuerySet,
}

impl Simulation {
    /// Draws parameters for every stage, then the scene features, the part
    /// features and the initial queries, all from one stream.
    pub fn new(cfg: SimConfig) -> Result<Self, DecoderError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let params: Vec<StageParams> = (0..cfg.stages)
            .map(|_| StageParams::seeded(&mut rng, cfg.dim, cfg.heads, cfg.classes))
            .collect();
        let pixels = cfg.height * cfg.width;
        let scene = FeatureMap::new(
            cfg.height,
            cfg.width,
            seeded_matrix(&mut rng, pixels, cfg.dim, cfg.dim),
        )?;
        let part = FeatureMap::new(
            cfg.height,
            cfg.width,
            seeded_matrix(&mut rng, pixels, cfg.dim, cfg.dim),
        )?;
        let queries = QuerySet::new(
            cfg.sections,
            seeded_matrix(&mut rng, cfg.sections.total(), cfg.dim, cfg.dim),
        )?;
        Ok(Simulation { cfg, params, scene, part, queries })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn stage_params(&self) -> &[StageParams] {
        &self.params
    }

    pub fn scene_features(&self) -> &FeatureMap {
        &self.scene
    }

    pub fn part_features(&self) -> &FeatureMap {
        &self.part
    }

    pub fn initial_queries(&self) -> &QuerySet {
        &self.queries
    }

    /// Runs every stage from zero initial mask logits and applies the
    /// prediction heads to the last stage's queries.
    pub fn run(&self) -> Result<SimOutput, DecoderError> {
        self.run_traced(None)
    }

    pub(crate) fn run_traced(
        &self,
        mut trace: Option<&mut SimTrace>,
    ) -> Result<SimOutput, DecoderError> {
        let mut queries = self.queries.clone();
        let mut masks = MaskLogits::zeros(queries.len(), self.cfg.height, self.cfg.width);
        let mut stages = Vec::with_capacity(self.cfg.stages);
        for params in &self.params {
            let (next_queries, next_masks) = match self.cfg.arch {
                Arch::V1 => decoder_stage_v1_traced(
                    &queries,
                    &masks,
                    &self.scene,
                    &self.part,
                    params,
                    self.cfg.binarized_grouping,
                    trace.as_deref_mut(),
                )?,
                Arch::V2 => decoder_stage_v2_traced(
                    &queries,
                    &masks,
                    &self.scene,
                    &self.part,
                    params,
                    self.cfg.pe_on_keys,
                    self.cfg.pmc_enabled,
                    trace.as_deref_mut(),
                )?,
            };
            queries = next_queries.clone();
            masks = next_masks.clone();
            stages.push(StageOutput { queries: next_queries, masks: next_masks });
        }
        let last = self.params.last().expect("validated stage count is positive");
        let (final_masks, class_logits) =
            predict_masks_and_classes(&queries, &self.scene, &self.part, last)?;
        Ok(SimOutput { stages, masks: final_masks, class_logits })
    }
}
