//! Segment matching between a ground-truth and a predicted map, plus the
//! overlap scores the quality metrics are built from.

use std::collections::{BTreeMap, HashMap};

use num_bigint::BigInt;
use num_rational::BigRational;

use crate::segmap::{PanopticPartMap, Runs, Segment, SegmentSet, NO_SEGMENT};
use crate::taxonomy::{decode_uid, Taxonomy, Uid};

use super::{rational_to_f64, MetricConfig, MetricError};

/// Intersection over union of two pixel sets.
pub fn iou(a: &Runs, b: &Runs) -> Result<f64, MetricError> {
    let inter = a.intersection_len(b);
    let union = a.len() + b.len() - inter;
    if union == 0 {
        return Err(MetricError::DegenerateInput);
    }
    Ok(inter as f64 / union as f64)
}

/// One matched ground-truth / prediction pair of the same class.
#[derive(Debug, Clone, PartialEq)]
pub struct TpPair {
    pub class_id: u32,
    /// Index into the ground-truth segment list.
    pub gt_index: usize,
    /// Index into the prediction segment list.
    pub pred_index: usize,
    pub intersection: u64,
    pub union: u64,
    pub iou: f64,
}

/// Outcome of matching two segment sets.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Matching {
    /// Matched pairs, sorted by class then segment indices.
    pub tp: Vec<TpPair>,
    /// Ground-truth segments left without a partner (false negatives).
    pub unmatched_gt: Vec<usize>,
    /// Predictions left without a partner (false positives).
    pub unmatched_pred: Vec<usize>,
    /// Predictions dropped because they mostly cover ground-truth void.
    pub void_discarded_pred: Vec<usize>,
}

/// Matches segments of equal class across two sets.
///
/// A pair matches when its IoU exceeds one half, which makes the matching
/// unique without any assignment search: two predictions cannot both cover
/// more than half of the same ground-truth segment. Unmatched predictions
/// whose overlap with ground-truth void exceeds half their area are set
/// aside instead of counting as false positives (unless disabled).
pub fn match_segments(
    gt: &SegmentSet,
    pred: &SegmentSet,
    cfg: &MetricConfig,
) -> Result<Matching, MetricError> {
    if gt.dims() != pred.dims() {
        let (gt_width, gt_height) = gt.dims();
        let (pred_width, pred_height) = pred.dims();
        return Err(MetricError::GridMismatch { gt_width, gt_height, pred_width, pred_height });
    }

    let mut overlap: HashMap<(u32, u32), u64> = HashMap::new();
    for (&gs, &ps) in gt.pixel_segments().iter().zip(pred.pixel_segments()) {
        *overlap.entry((gs, ps)).or_insert(0) += 1;
    }

    let mut pairs: Vec<(u32, u32, u64)> = overlap
        .iter()
        .filter(|&(&(gs, ps), _)| gs != NO_SEGMENT && ps != NO_SEGMENT)
        .map(|(&(gs, ps), &count)| (gs, ps, count))
        .collect();
    pairs.sort_unstable();

    let mut matching = Matching::default();
    let mut matched_gt = vec![false; gt.segments().len()];
    let mut matched_pred = vec![false; pred.segments().len()];
    for (gs, ps, inter) in pairs {
        let gseg = &gt.segments()[gs as usize];
        let pseg = &pred.segments()[ps as usize];
        if gseg.class_id != pseg.class_id {
            continue;
        }
        let union = gseg.pixel_count() + pseg.pixel_count() - inter;
        if 2 * inter > union {
            debug_assert!(!matched_gt[gs as usize] && !matched_pred[ps as usize]);
            matched_gt[gs as usize] = true;
            matched_pred[ps as usize] = true;
            matching.tp.push(TpPair {
                class_id: gseg.class_id,
                gt_index: gs as usize,
                pred_index: ps as usize,
                intersection: inter,
                union,
                iou: inter as f64 / union as f64,
            });
        }
    }
    matching.tp.sort_by_key(|p| (p.class_id, p.gt_index, p.pred_index));

    matching.unmatched_gt = (0..gt.segments().len()).filter(|&i| !matched_gt[i]).collect();
    for (ps, seg) in pred.segments().iter().enumerate() {
        if matched_pred[ps] {
            continue;
        }
        if cfg.void_fp_rule {
            let void_overlap =
                overlap.get(&(NO_SEGMENT, ps as u32)).copied().unwrap_or(0);
            if 2 * void_overlap > seg.pixel_count() {
                matching.void_discarded_pred.push(ps);
                continue;
            }
        }
        matching.unmatched_pred.push(ps);
    }
    Ok(matching)
}

fn pid_of(uid: Uid) -> Option<u32> {
    decode_uid(uid).ok().and_then(|t| t.pid)
}

/// Exact rational form of [`mean_part_iou`]. Pixel indices of both segments
/// must lie inside their maps.
pub(crate) fn mean_part_iou_exact(
    gt_map: &PanopticPartMap,
    pred_map: &PanopticPartMap,
    gt_segment: &Segment,
    pred_segment: &Segment,
    taxonomy: &Taxonomy,
) -> BigRational {
    let mut inter: BTreeMap<u32, u64> = BTreeMap::new();
    let mut union: BTreeMap<u32, u64> = BTreeMap::new();
    for (px, in_gt, in_pred) in gt_segment.pixels.union_walk(&pred_segment.pixels) {
        let g = if in_gt { pid_of(gt_map.data()[px as usize]) } else { None };
        let p = if in_pred { pid_of(pred_map.data()[px as usize]) } else { None };
        match (g, p) {
            (Some(a), Some(b)) if a == b => {
                *inter.entry(a).or_insert(0) += 1;
                *union.entry(a).or_insert(0) += 1;
            }
            (g, p) => {
                if let Some(a) = g {
                    *union.entry(a).or_insert(0) += 1;
                }
                if let Some(b) = p {
                    *union.entry(b).or_insert(0) += 1;
                }
            }
        }
    }

    let sid = gt_segment.class_id;
    let mut sum = BigRational::from_integer(BigInt::from(0));
    let mut count = 0u64;
    for (&pid, &u) in &union {
        if !taxonomy.owns_pid(sid, pid) {
            continue;
        }
        let i = inter.get(&pid).copied().unwrap_or(0);
        sum += BigRational::new(BigInt::from(i), BigInt::from(u));
        count += 1;
    }
    if count == 0 {
        // Neither side labels any owned part inside the match; fall back to
        // the plain overlap of the two segments.
        let i = gt_segment.pixels.intersection_len(&pred_segment.pixels);
        let u = gt_segment.pixel_count() + pred_segment.pixel_count() - i;
        return BigRational::new(BigInt::from(i), BigInt::from(u));
    }
    sum / BigRational::from_integer(BigInt::from(count))
}

/// Mean IoU over the owned part classes present inside a matched pair.
///
/// The score walks the union of the two segments, tallies intersection and
/// union pixels per part id on each side, keeps the part ids the class owns,
/// and averages their IoU. A part labeled on only one side scores zero. When
/// no owned part appears at all the plain segment overlap is returned, so a
/// match never scores on parts nobody labeled.
pub fn mean_part_iou(
    gt_map: &PanopticPartMap,
    pred_map: &PanopticPartMap,
    gt_segment: &Segment,
    pred_segment: &Segment,
    taxonomy: &Taxonomy,
) -> Result<f64, MetricError> {
    if gt_map.dims() != pred_map.dims() {
        let (gt_width, gt_height) = gt_map.dims();
        let (pred_width, pred_height) = pred_map.dims();
        return Err(MetricError::GridMismatch { gt_width, gt_height, pred_width, pred_height });
    }
    if gt_segment.pixels.is_empty() || pred_segment.pixels.is_empty() {
        return Err(MetricError::DegenerateInput);
    }
    for (segment, map) in [(gt_segment, gt_map), (pred_segment, pred_map)] {
        let end = segment.pixels.runs().last().map_or(0, |&(s, l)| s as u64 + l as u64);
        if end > map.len() as u64 {
            return Err(MetricError::DegenerateInput);
        }
    }
    Ok(rational_to_f64(&mean_part_iou_exact(
        gt_map,
        pred_map,
        gt_segment,
        pred_segment,
        taxonomy,
    )))
}
