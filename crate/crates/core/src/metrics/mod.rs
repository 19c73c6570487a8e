//! Segmentation quality metrics over panoptic part label maps.
//!
//! Evaluation is split into a per-image step that produces a
//! [`MetricAccumulator`] and an order-independent merge, so datasets can be
//! fanned out across workers and reduced in any grouping. Per-match IoU
//! contributions are accumulated as exact rationals and only converted to
//! floating point when a value is read out, which makes merged results
//! bit-identical no matter how the work was split.

mod matching;

use std::collections::BTreeMap;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::segmap::{extract_segments, PanopticPartMap, SegmapError};
use crate::taxonomy::{decode_uid, Taxonomy, Uid};

pub use matching::{iou, match_segments, mean_part_iou, Matching, TpPair};

/// Errors from matching, accumulation and report building.
#[derive(Debug, Error)]
pub enum MetricError {
    #[error("ground-truth grid {gt_width}x{gt_height} does not match prediction grid {pred_width}x{pred_height}")]
    GridMismatch { gt_width: u32, gt_height: u32, pred_width: u32, pred_height: u32 },
    #[error("empty pixel sets have no overlap score")]
    DegenerateInput,
    #[error("accumulators are bound to different taxonomies")]
    TaxonomyMismatch,
    #[error("accumulators were built with different evaluation settings")]
    ConfigMismatch,
    #[error("no class has any matches or errors to average over")]
    NoEvaluatableClass,
    #[error("{what} {value} outside [0, 1]")]
    RangeError { what: &'static str, value: f64 },
    #[error(transparent)]
    Segmap(#[from] SegmapError),
}

/// Evaluation switches. The defaults match common published practice:
/// predictions that mostly cover unlabeled ground truth are not penalized,
/// and mIoU averages over labels that actually occur.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MetricConfig {
    /// Drop unmatched predictions whose overlap with ground-truth void
    /// exceeds half their area instead of counting them as false positives.
    pub void_fp_rule: bool,
    /// Average mIoU over the whole label space, scoring absent labels zero,
    /// instead of only over labels present on either side.
    pub miou_full_labels: bool,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig { void_fp_rule: true, miou_full_labels: false }
    }
}

/// Class subsets the quality averages can range over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassFilter {
    All,
    WithParts,
    WithoutParts,
}

/// The two label spaces mIoU is measured on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelSpace {
    Scene,
    Part,
}

/// Match counts and IoU sums for one scene class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassStats {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    iou_scene_sum: BigRational,
    iou_part_sum: BigRational,
}

impl Default for ClassStats {
    fn default() -> Self {
        ClassStats {
            tp: 0,
            fp: 0,
            fn_: 0,
            iou_scene_sum: BigRational::zero(),
            iou_part_sum: BigRational::zero(),
        }
    }
}

impl ClassStats {
    /// Sum of scene IoU over this class's matches.
    pub fn iou_scene_sum(&self) -> f64 {
        rational_to_f64(&self.iou_scene_sum)
    }

    /// Sum of part-aware IoU over this class's matches.
    pub fn iou_part_sum(&self) -> f64 {
        rational_to_f64(&self.iou_part_sum)
    }
}

/// Intersection and union pixel counts for one label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LabelTally {
    pub intersection: u64,
    pub union: u64,
}

/// Mergeable evaluation state for a set of images sharing one taxonomy.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricAccumulator {
    taxonomy: Arc<Taxonomy>,
    cfg: MetricConfig,
    classes: BTreeMap<u32, ClassStats>,
    scene_tallies: BTreeMap<u32, LabelTally>,
    part_tallies: BTreeMap<(u32, u32), LabelTally>,
    images: u64,
    gt_unlabeled_instance_pixels: u64,
    pred_unlabeled_instance_pixels: u64,
}

impl MetricAccumulator {
    /// The empty accumulator, the identity element of the merge.
    pub fn new(taxonomy: Arc<Taxonomy>, cfg: MetricConfig) -> Self {
        MetricAccumulator {
            taxonomy,
            cfg,
            classes: BTreeMap::new(),
            scene_tallies: BTreeMap::new(),
            part_tallies: BTreeMap::new(),
            images: 0,
            gt_unlabeled_instance_pixels: 0,
            pred_unlabeled_instance_pixels: 0,
        }
    }

    pub fn taxonomy(&self) -> &Arc<Taxonomy> {
        &self.taxonomy
    }

    pub fn cfg(&self) -> &MetricConfig {
        &self.cfg
    }

    /// Number of image pairs accumulated.
    pub fn images(&self) -> u64 {
        self.images
    }

    pub fn class_stats(&self) -> &BTreeMap<u32, ClassStats> {
        &self.classes
    }

    pub fn scene_tallies(&self) -> &BTreeMap<u32, LabelTally> {
        &self.scene_tallies
    }

    pub fn part_tallies(&self) -> &BTreeMap<(u32, u32), LabelTally> {
        &self.part_tallies
    }

    /// Ground-truth pixels of thing classes without an instance id.
    pub fn gt_unlabeled_instance_pixels(&self) -> u64 {
        self.gt_unlabeled_instance_pixels
    }

    /// Predicted pixels of thing classes without an instance id.
    pub fn pred_unlabeled_instance_pixels(&self) -> u64 {
        self.pred_unlabeled_instance_pixels
    }

    /// Mean IoU over one label space.
    pub fn miou(&self, space: LabelSpace) -> Result<f64, MetricError> {
        miou_rational(self, space)
            .map(|r| rational_to_f64(&r))
            .ok_or(MetricError::NoEvaluatableClass)
    }
}

pub(crate) fn rational_to_f64(r: &BigRational) -> f64 {
    r.to_f64().expect("metric rationals are finite")
}

fn ratio(n: u64, d: u64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn scene_label(uid: Uid, taxonomy: &Taxonomy, index: usize) -> Result<Option<u32>, MetricError> {
    if uid == taxonomy.void_uid() {
        return Ok(None);
    }
    let triple = decode_uid(uid)
        .map_err(|source| SegmapError::InvalidUid { uid, index, source })?;
    if !taxonomy.contains(triple.sid) {
        return Err(SegmapError::UnknownClass { uid, index, sid: triple.sid }.into());
    }
    Ok(Some(triple.sid))
}

fn part_label(uid: Uid, taxonomy: &Taxonomy) -> Option<(u32, u32)> {
    if uid == taxonomy.void_uid() {
        return None;
    }
    let triple = decode_uid(uid).ok()?;
    let pid = triple.pid?;
    taxonomy.owns_pid(triple.sid, pid).then_some((triple.sid, pid))
}

fn tally_labels(
    acc: &mut MetricAccumulator,
    gt: &PanopticPartMap,
    pred: &PanopticPartMap,
) -> Result<(), MetricError> {
    let taxonomy = acc.taxonomy.clone();
    for (index, (&guid, &puid)) in gt.data().iter().zip(pred.data().iter()).enumerate() {
        let g = scene_label(guid, &taxonomy, index)?;
        let p = scene_label(puid, &taxonomy, index)?;
        match (g, p) {
            (Some(a), Some(b)) if a == b => {
                let t = acc.scene_tallies.entry(a).or_default();
                t.intersection += 1;
                t.union += 1;
            }
            (g, p) => {
                if let Some(a) = g {
                    acc.scene_tallies.entry(a).or_default().union += 1;
                }
                if let Some(b) = p {
                    acc.scene_tallies.entry(b).or_default().union += 1;
                }
            }
        }
        let g = part_label(guid, &taxonomy);
        let p = part_label(puid, &taxonomy);
        match (g, p) {
            (Some(a), Some(b)) if a == b => {
                let t = acc.part_tallies.entry(a).or_default();
                t.intersection += 1;
                t.union += 1;
            }
            (g, p) => {
                if let Some(a) = g {
                    acc.part_tallies.entry(a).or_default().union += 1;
                }
                if let Some(b) = p {
                    acc.part_tallies.entry(b).or_default().union += 1;
                }
            }
        }
    }
    Ok(())
}

/// Evaluates one ground-truth / prediction pair into a fresh accumulator.
pub fn evaluate_image(
    gt: &PanopticPartMap,
    pred: &PanopticPartMap,
    taxonomy: &Arc<Taxonomy>,
    cfg: &MetricConfig,
) -> Result<MetricAccumulator, MetricError> {
    if gt.dims() != pred.dims() {
        let (gt_width, gt_height) = gt.dims();
        let (pred_width, pred_height) = pred.dims();
        return Err(MetricError::GridMismatch { gt_width, gt_height, pred_width, pred_height });
    }
    let gset = extract_segments(gt, taxonomy)?;
    let pset = extract_segments(pred, taxonomy)?;
    let matching = match_segments(&gset, &pset, cfg)?;

    let mut acc = MetricAccumulator::new(taxonomy.clone(), *cfg);
    acc.images = 1;
    acc.gt_unlabeled_instance_pixels = gset.unlabeled_instance_pixels();
    acc.pred_unlabeled_instance_pixels = pset.unlabeled_instance_pixels();

    for pair in &matching.tp {
        let scene = ratio(pair.intersection, pair.union);
        let part = if taxonomy.has_parts(pair.class_id) {
            matching::mean_part_iou_exact(
                gt,
                pred,
                &gset.segments()[pair.gt_index],
                &pset.segments()[pair.pred_index],
                taxonomy,
            )
        } else {
            scene.clone()
        };
        let stats = acc.classes.entry(pair.class_id).or_default();
        stats.tp += 1;
        stats.iou_scene_sum += scene;
        stats.iou_part_sum += part;
    }
    for &g in &matching.unmatched_gt {
        acc.classes.entry(gset.segments()[g].class_id).or_default().fn_ += 1;
    }
    for &p in &matching.unmatched_pred {
        acc.classes.entry(pset.segments()[p].class_id).or_default().fp += 1;
    }

    tally_labels(&mut acc, gt, pred)?;
    Ok(acc)
}

/// Merges two accumulators. Commutative and associative with
/// [`MetricAccumulator::new`] as identity, and exact: any merge order yields
/// bit-identical reports.
pub fn merge_accumulators(
    a: MetricAccumulator,
    b: MetricAccumulator,
) -> Result<MetricAccumulator, MetricError> {
    if a.taxonomy != b.taxonomy {
        return Err(MetricError::TaxonomyMismatch);
    }
    if a.cfg != b.cfg {
        return Err(MetricError::ConfigMismatch);
    }
    let mut out = a;
    for (sid, stats) in b.classes {
        let e = out.classes.entry(sid).or_default();
        e.tp += stats.tp;
        e.fp += stats.fp;
        e.fn_ += stats.fn_;
        e.iou_scene_sum += stats.iou_scene_sum;
        e.iou_part_sum += stats.iou_part_sum;
    }
    for (sid, tally) in b.scene_tallies {
        let e = out.scene_tallies.entry(sid).or_default();
        e.intersection += tally.intersection;
        e.union += tally.union;
    }
    for (label, tally) in b.part_tallies {
        let e = out.part_tallies.entry(label).or_default();
        e.intersection += tally.intersection;
        e.union += tally.union;
    }
    out.images += b.images;
    out.gt_unlabeled_instance_pixels += b.gt_unlabeled_instance_pixels;
    out.pred_unlabeled_instance_pixels += b.pred_unlabeled_instance_pixels;
    Ok(out)
}

fn filter_accepts(taxonomy: &Taxonomy, filter: ClassFilter, sid: u32) -> bool {
    match filter {
        ClassFilter::All => true,
        ClassFilter::WithParts => taxonomy.has_parts(sid),
        ClassFilter::WithoutParts => !taxonomy.has_parts(sid),
    }
}

fn quality_rational(
    acc: &MetricAccumulator,
    filter: ClassFilter,
    part_branch: bool,
) -> Option<BigRational> {
    let mut sum = BigRational::zero();
    let mut count = 0u64;
    for (&sid, stats) in &acc.classes {
        if !filter_accepts(&acc.taxonomy, filter, sid) {
            continue;
        }
        if stats.tp + stats.fp + stats.fn_ == 0 {
            continue;
        }
        let branch = if part_branch { &stats.iou_part_sum } else { &stats.iou_scene_sum };
        // tp + (fp + fn) / 2, kept exact as (2 tp + fp + fn) / 2.
        let denom = ratio(2 * stats.tp + stats.fp + stats.fn_, 2);
        sum += branch / denom;
        count += 1;
    }
    (count > 0).then(|| sum / BigRational::from_integer(BigInt::from(count)))
}

fn miou_rational(acc: &MetricAccumulator, space: LabelSpace) -> Option<BigRational> {
    let mut fractions: Vec<BigRational> = Vec::new();
    let mut push = |tally: Option<&LabelTally>| {
        let tally = tally.copied().unwrap_or_default();
        if tally.union > 0 {
            fractions.push(ratio(tally.intersection, tally.union));
        } else if acc.cfg.miou_full_labels {
            fractions.push(BigRational::zero());
        }
    };
    match space {
        LabelSpace::Scene => {
            if acc.cfg.miou_full_labels {
                for class in acc.taxonomy.classes() {
                    push(acc.scene_tallies.get(&class.sid));
                }
            } else {
                for tally in acc.scene_tallies.values() {
                    push(Some(tally));
                }
            }
        }
        LabelSpace::Part => {
            if acc.cfg.miou_full_labels {
                for label in acc.taxonomy.part_labels() {
                    push(acc.part_tallies.get(&label));
                }
            } else {
                for tally in acc.part_tallies.values() {
                    push(Some(tally));
                }
            }
        }
    }
    if fractions.is_empty() {
        return None;
    }
    let count = fractions.len();
    let sum: BigRational = fractions.into_iter().sum();
    Some(sum / BigRational::from_integer(BigInt::from(count)))
}

/// Panoptic quality over a class subset: mean over classes of the summed
/// match IoU divided by `tp + (fp + fn) / 2`.
pub fn compute_pq(acc: &MetricAccumulator, filter: ClassFilter) -> Result<f64, MetricError> {
    quality_rational(acc, filter, false)
        .map(|r| rational_to_f64(&r))
        .ok_or(MetricError::NoEvaluatableClass)
}

/// Part-aware panoptic quality: like [`compute_pq`] but matches of
/// part-bearing classes contribute their mean part IoU instead.
pub fn compute_partpq(acc: &MetricAccumulator, filter: ClassFilter) -> Result<f64, MetricError> {
    quality_rational(acc, filter, true)
        .map(|r| rational_to_f64(&r))
        .ok_or(MetricError::NoEvaluatableClass)
}

/// Mean IoU of one map pair over a label space. Dataset-level mIoU comes
/// from [`MetricAccumulator::miou`], which pools counts before averaging.
pub fn compute_miou(
    gt: &PanopticPartMap,
    pred: &PanopticPartMap,
    space: LabelSpace,
    taxonomy: &Arc<Taxonomy>,
    cfg: &MetricConfig,
) -> Result<f64, MetricError> {
    if gt.dims() != pred.dims() {
        let (gt_width, gt_height) = gt.dims();
        let (pred_width, pred_height) = pred.dims();
        return Err(MetricError::GridMismatch { gt_width, gt_height, pred_width, pred_height });
    }
    let mut acc = MetricAccumulator::new(taxonomy.clone(), *cfg);
    tally_labels(&mut acc, gt, pred)?;
    acc.miou(space)
}

/// The two quality factors and their combined score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PwqBreakdown {
    /// Scene quality: scene mIoU times PQ over all classes.
    pub ssq: f64,
    /// Part quality: part mIoU times PartPQ over part-bearing classes.
    pub psq: f64,
    /// Square root of the mean of the two factors.
    pub pwq: f64,
}

/// Combines the four ingredient fractions into the whole-image quality
/// score. Each input must lie in `[0, 1]`.
pub fn compute_pwq(
    miou_scene: f64,
    pq_all: f64,
    miou_part: f64,
    partpq_parts: f64,
) -> Result<PwqBreakdown, MetricError> {
    for (what, value) in [
        ("scene mIoU", miou_scene),
        ("PQ", pq_all),
        ("part mIoU", miou_part),
        ("PartPQ", partpq_parts),
    ] {
        if !(0.0..=1.0).contains(&value) {
            return Err(MetricError::RangeError { what, value });
        }
    }
    let ssq = miou_scene * pq_all;
    let psq = miou_part * partpq_parts;
    Ok(PwqBreakdown { ssq, psq, pwq: ((ssq + psq) / 2.0).sqrt() })
}

/// Every metric of one evaluation. Values that need part-bearing classes are
/// `None` when the taxonomy or the data offers none.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub pq_all: f64,
    pub pq_parts: Option<f64>,
    pub pq_no_parts: Option<f64>,
    pub partpq_all: f64,
    pub partpq_parts: Option<f64>,
    pub partpq_no_parts: Option<f64>,
    pub miou_scene: f64,
    pub miou_part: Option<f64>,
    pub ssq: f64,
    pub psq: Option<f64>,
    pub pwq: Option<f64>,
}

/// Reads every metric out of an accumulator. Fails with
/// [`MetricError::NoEvaluatableClass`] when nothing was accumulated.
pub fn build_report(acc: &MetricAccumulator) -> Result<MetricReport, MetricError> {
    let pq_all_r = quality_rational(acc, ClassFilter::All, false)
        .ok_or(MetricError::NoEvaluatableClass)?;
    let partpq_all_r = quality_rational(acc, ClassFilter::All, true)
        .ok_or(MetricError::NoEvaluatableClass)?;
    let miou_scene_r = miou_rational(acc, LabelSpace::Scene)
        .ok_or(MetricError::NoEvaluatableClass)?;

    let pq_parts_r = quality_rational(acc, ClassFilter::WithParts, false);
    let pq_no_parts_r = quality_rational(acc, ClassFilter::WithoutParts, false);
    let partpq_parts_r = quality_rational(acc, ClassFilter::WithParts, true);
    let partpq_no_parts_r = quality_rational(acc, ClassFilter::WithoutParts, true);
    let miou_part_r = miou_rational(acc, LabelSpace::Part);

    let ssq_r = &miou_scene_r * &pq_all_r;
    let psq_r = match (&miou_part_r, &partpq_parts_r) {
        (Some(m), Some(q)) => Some(m * q),
        _ => None,
    };
    let pwq = psq_r.as_ref().map(|psq| {
        let half = BigRational::new(BigInt::from(1), BigInt::from(2));
        rational_to_f64(&((&ssq_r + psq) * half)).sqrt()
    });

    Ok(MetricReport {
        pq_all: rational_to_f64(&pq_all_r),
        pq_parts: pq_parts_r.as_ref().map(rational_to_f64),
        pq_no_parts: pq_no_parts_r.as_ref().map(rational_to_f64),
        partpq_all: rational_to_f64(&partpq_all_r),
        partpq_parts: partpq_parts_r.as_ref().map(rational_to_f64),
        partpq_no_parts: partpq_no_parts_r.as_ref().map(rational_to_f64),
        miou_scene: rational_to_f64(&miou_scene_r),
        miou_part: miou_part_r.as_ref().map(rational_to_f64),
        ssq: rational_to_f64(&ssq_r),
        psq: psq_r.as_ref().map(rational_to_f64),
        pwq,
    })
}
