//! Brute-force metric evaluation built on per-pixel hash sets and plain
//! floating point. Deliberately naive: every overlap is counted by scanning
//! pixel sets, so results are easy to trust and serve as the yardstick for
//! the optimized accumulator path.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use pps_core::segmap::PanopticPartMap;
use pps_core::taxonomy::{decode_uid, ClassKind, Taxonomy};

/// Evaluation switches mirrored from the optimized path.
#[derive(Debug, Clone, Copy)]
pub struct RefConfig {
    /// Drop unmatched predictions whose overlap with ground-truth void
    /// exceeds half their area.
    pub void_rule: bool,
    /// Average IoU over the full label space instead of labels present in
    /// ground truth or prediction.
    pub miou_full_labels: bool,
}

impl Default for RefConfig {
    fn default() -> Self {
        RefConfig { void_rule: true, miou_full_labels: false }
    }
}

/// Per-class match counts and IoU sums over true positives.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RefClassCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub iou_scene_sum: f64,
    pub iou_part_sum: f64,
}

/// Raw per-dataset tallies before any averaging.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RefTally {
    pub classes: BTreeMap<u32, RefClassCounts>,
    /// Scene-level intersection and union pixel counts per class id.
    pub scene_iou: BTreeMap<u32, (u64, u64)>,
    /// Part-level intersection and union pixel counts per owned (sid, pid).
    pub part_iou: BTreeMap<(u32, u32), (u64, u64)>,
}

/// Final metric values; `None` where the input offers nothing to average.
#[derive(Debug, Clone, PartialEq)]
pub struct RefReport {
    pub pq_all: Option<f64>,
    pub pq_p: Option<f64>,
    pub pq_np: Option<f64>,
    pub partpq_all: Option<f64>,
    pub partpq_p: Option<f64>,
    pub partpq_np: Option<f64>,
    pub miou_scene: Option<f64>,
    pub miou_part: Option<f64>,
    pub ssq: Option<f64>,
    pub psq: Option<f64>,
    pub pwq: Option<f64>,
}

type PixelSet = HashSet<usize>;
type SegmentKey = (u32, Option<u32>);

fn segment_sets(map: &PanopticPartMap, taxonomy: &Taxonomy) -> HashMap<SegmentKey, PixelSet> {
    let mut sets: HashMap<SegmentKey, PixelSet> = HashMap::new();
    for (index, &uid) in map.data().iter().enumerate() {
        if uid == taxonomy.void_uid() {
            continue;
        }
        let triple = decode_uid(uid).expect("fixture uid must decode");
        let class = taxonomy.class(triple.sid).expect("fixture class must exist");
        let key = match (class.kind, triple.iid) {
            (ClassKind::Thing, Some(iid)) => (triple.sid, Some(iid)),
            _ => (triple.sid, None),
        };
        sets.entry(key).or_default().insert(index);
    }
    sets
}

fn pid_at(map: &PanopticPartMap, index: usize) -> Option<u32> {
    decode_uid(map.data()[index]).ok().and_then(|t| t.pid)
}

fn mean_part_iou_ref(
    gt_map: &PanopticPartMap,
    pred_map: &PanopticPartMap,
    gt_px: &PixelSet,
    pred_px: &PixelSet,
    sid: u32,
    taxonomy: &Taxonomy,
    scene_iou: f64,
) -> f64 {
    let domain: PixelSet = gt_px.union(pred_px).copied().collect();
    let mut inter: BTreeMap<u32, u64> = BTreeMap::new();
    let mut union: BTreeMap<u32, u64> = BTreeMap::new();
    for &px in &domain {
        let g = if gt_px.contains(&px) { pid_at(gt_map, px) } else { None };
        let p = if pred_px.contains(&px) { pid_at(pred_map, px) } else { None };
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
    let candidates: Vec<u32> = union
        .keys()
        .copied()
        .filter(|&pid| taxonomy.owns_pid(sid, pid))
        .collect();
    if candidates.is_empty() {
        // No owned part shows up on either side; score the match by its
        // scene overlap instead.
        return scene_iou;
    }
    let sum: f64 = candidates
        .iter()
        .map(|pid| {
            let i = *inter.get(pid).unwrap_or(&0) as f64;
            let u = union[pid] as f64;
            i / u
        })
        .sum();
    sum / candidates.len() as f64
}

/// Tallies one ground-truth / prediction pair by exhaustive pixel counting.
pub fn tally_image(
    gt: &PanopticPartMap,
    pred: &PanopticPartMap,
    taxonomy: &Taxonomy,
    cfg: &RefConfig,
) -> RefTally {
    assert_eq!(gt.dims(), pred.dims(), "fixture maps must share a grid");
    let gt_sets = segment_sets(gt, taxonomy);
    let pred_sets = segment_sets(pred, taxonomy);
    let gt_void: PixelSet = gt
        .data()
        .iter()
        .enumerate()
        .filter(|(_, &uid)| uid == taxonomy.void_uid())
        .map(|(i, _)| i)
        .collect();

    let mut tally = RefTally::default();
    let mut matched_gt: HashSet<SegmentKey> = HashSet::new();
    let mut matched_pred: HashSet<SegmentKey> = HashSet::new();

    let mut gt_keys: Vec<_> = gt_sets.keys().copied().collect();
    gt_keys.sort();
    let mut pred_keys: Vec<_> = pred_sets.keys().copied().collect();
    pred_keys.sort();

    for &gkey in &gt_keys {
        for &pkey in &pred_keys {
            if gkey.0 != pkey.0 {
                continue;
            }
            let g = &gt_sets[&gkey];
            let p = &pred_sets[&pkey];
            let inter = g.intersection(p).count() as u64;
            let union = g.len() as u64 + p.len() as u64 - inter;
            if 2 * inter <= union {
                continue;
            }
            let scene_iou = inter as f64 / union as f64;
            let part_iou = if taxonomy.has_parts(gkey.0) {
                mean_part_iou_ref(gt, pred, g, p, gkey.0, taxonomy, scene_iou)
            } else {
                scene_iou
            };
            let counts = tally.classes.entry(gkey.0).or_default();
            counts.tp += 1;
            counts.iou_scene_sum += scene_iou;
            counts.iou_part_sum += part_iou;
            matched_gt.insert(gkey);
            matched_pred.insert(pkey);
        }
    }

    for &gkey in &gt_keys {
        if !matched_gt.contains(&gkey) {
            tally.classes.entry(gkey.0).or_default().fn_ += 1;
        }
    }
    for &pkey in &pred_keys {
        if matched_pred.contains(&pkey) {
            continue;
        }
        if cfg.void_rule {
            let p = &pred_sets[&pkey];
            let overlap = p.intersection(&gt_void).count() as u64;
            if 2 * overlap > p.len() as u64 {
                continue;
            }
        }
        tally.classes.entry(pkey.0).or_default().fp += 1;
    }

    // Scene-level and part-level IoU tallies via explicit per-label pixel
    // sets on each side.
    let mut scene_sets: BTreeMap<u32, (PixelSet, PixelSet)> = BTreeMap::new();
    let mut part_sets: BTreeMap<(u32, u32), (PixelSet, PixelSet)> = BTreeMap::new();
    for (index, &uid) in gt.data().iter().enumerate() {
        if let Some(sid) = scene_label(uid, taxonomy) {
            scene_sets.entry(sid).or_default().0.insert(index);
        }
        if let Some(label) = part_label(uid, taxonomy) {
            part_sets.entry(label).or_default().0.insert(index);
        }
    }
    for (index, &uid) in pred.data().iter().enumerate() {
        if let Some(sid) = scene_label(uid, taxonomy) {
            scene_sets.entry(sid).or_default().1.insert(index);
        }
        if let Some(label) = part_label(uid, taxonomy) {
            part_sets.entry(label).or_default().1.insert(index);
        }
    }
    for (sid, (g, p)) in scene_sets {
        let i = g.intersection(&p).count() as u64;
        let u = g.union(&p).count() as u64;
        tally.scene_iou.insert(sid, (i, u));
    }
    for (label, (g, p)) in part_sets {
        let i = g.intersection(&p).count() as u64;
        let u = g.union(&p).count() as u64;
        tally.part_iou.insert(label, (i, u));
    }
    tally
}

fn scene_label(uid: u32, taxonomy: &Taxonomy) -> Option<u32> {
    if uid == taxonomy.void_uid() {
        return None;
    }
    let triple = decode_uid(uid).expect("fixture uid must decode");
    taxonomy.contains(triple.sid).then_some(triple.sid)
}

fn part_label(uid: u32, taxonomy: &Taxonomy) -> Option<(u32, u32)> {
    if uid == taxonomy.void_uid() {
        return None;
    }
    let triple = decode_uid(uid).expect("fixture uid must decode");
    let pid = triple.pid?;
    taxonomy.owns_pid(triple.sid, pid).then_some((triple.sid, pid))
}

/// Sums the tallies of several images.
pub fn merge_tallies(tallies: &[RefTally]) -> RefTally {
    let mut out = RefTally::default();
    for tally in tallies {
        for (&sid, counts) in &tally.classes {
            let e = out.classes.entry(sid).or_default();
            e.tp += counts.tp;
            e.fp += counts.fp;
            e.fn_ += counts.fn_;
            e.iou_scene_sum += counts.iou_scene_sum;
            e.iou_part_sum += counts.iou_part_sum;
        }
        for (&sid, &(i, u)) in &tally.scene_iou {
            let e = out.scene_iou.entry(sid).or_insert((0, 0));
            e.0 += i;
            e.1 += u;
        }
        for (&label, &(i, u)) in &tally.part_iou {
            let e = out.part_iou.entry(label).or_insert((0, 0));
            e.0 += i;
            e.1 += u;
        }
    }
    out
}

fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

fn quality(tally: &RefTally, part_branch: bool, filter: &BTreeSet<u32>) -> Option<f64> {
    let mut values = Vec::new();
    for (&sid, c) in &tally.classes {
        if !filter.contains(&sid) || c.tp + c.fp + c.fn_ == 0 {
            continue;
        }
        let sum = if part_branch { c.iou_part_sum } else { c.iou_scene_sum };
        values.push(sum / (c.tp as f64 + 0.5 * c.fp as f64 + 0.5 * c.fn_ as f64));
    }
    mean(&values)
}

/// Averages a tally into final metric values.
pub fn finalize(tally: &RefTally, taxonomy: &Taxonomy, cfg: &RefConfig) -> RefReport {
    let all: BTreeSet<u32> = taxonomy.classes().iter().map(|c| c.sid).collect();
    let with_parts: BTreeSet<u32> = taxonomy.sids_with_parts().into_iter().collect();
    let without_parts: BTreeSet<u32> = taxonomy.sids_without_parts().into_iter().collect();

    let pq_all = quality(tally, false, &all);
    let pq_p = quality(tally, false, &with_parts);
    let pq_np = quality(tally, false, &without_parts);
    let partpq_all = quality(tally, true, &all);
    let partpq_p = quality(tally, true, &with_parts);
    let partpq_np = quality(tally, true, &without_parts);

    let miou_scene = {
        let mut values = Vec::new();
        if cfg.miou_full_labels {
            for &sid in &all {
                let (i, u) = tally.scene_iou.get(&sid).copied().unwrap_or((0, 0));
                values.push(if u == 0 { 0.0 } else { i as f64 / u as f64 });
            }
        } else {
            for (&_sid, &(i, u)) in &tally.scene_iou {
                if u > 0 {
                    values.push(i as f64 / u as f64);
                }
            }
        }
        mean(&values)
    };
    let miou_part = {
        let mut values = Vec::new();
        if cfg.miou_full_labels {
            for label in taxonomy.part_labels() {
                let (i, u) = tally.part_iou.get(&label).copied().unwrap_or((0, 0));
                values.push(if u == 0 { 0.0 } else { i as f64 / u as f64 });
            }
        } else {
            for &(i, u) in tally.part_iou.values() {
                if u > 0 {
                    values.push(i as f64 / u as f64);
                }
            }
        }
        mean(&values)
    };

    let ssq = match (miou_scene, pq_all) {
        (Some(m), Some(q)) => Some(m * q),
        _ => None,
    };
    let psq = match (miou_part, partpq_p) {
        (Some(m), Some(q)) => Some(m * q),
        _ => None,
    };
    let pwq = match (ssq, psq) {
        (Some(s), Some(p)) => Some(((s + p) / 2.0).sqrt()),
        _ => None,
    };

    RefReport {
        pq_all,
        pq_p,
        pq_np,
        partpq_all,
        partpq_p,
        partpq_np,
        miou_scene,
        miou_part,
        ssq,
        psq,
        pwq,
    }
}

/// Tallies and finalizes a whole dataset.
pub fn evaluate_dataset(
    gts: &[PanopticPartMap],
    preds: &[PanopticPartMap],
    taxonomy: &Taxonomy,
    cfg: &RefConfig,
) -> (RefTally, RefReport) {
    assert_eq!(gts.len(), preds.len());
    let tallies: Vec<RefTally> = gts
        .iter()
        .zip(preds.iter())
        .map(|(g, p)| tally_image(g, p, taxonomy, cfg))
        .collect();
    let tally = merge_tallies(&tallies);
    let report = finalize(&tally, taxonomy, cfg);
    (tally, report)
}

/// Exhaustive minimum-cost row-to-column assignment for small matrices.
///
/// Enumerates every injection of rows into columns in lexicographic order and
/// keeps the first one achieving the minimum total, i.e. the lexicographically
/// smallest optimum. Factorial cost, so keep `rows` at 8 or below.
pub fn brute_force_assignment(costs: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let rows = costs.len();
    let cols = costs.first().map_or(0, Vec::len);
    assert!(rows <= cols, "needs rows <= cols");
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut current = Vec::with_capacity(rows);
    let mut used = vec![false; cols];
    fn recurse(
        costs: &[Vec<f64>],
        row: usize,
        used: &mut [bool],
        current: &mut Vec<usize>,
        total: f64,
        best: &mut Option<(Vec<usize>, f64)>,
    ) {
        if row == costs.len() {
            let better = match best {
                None => true,
                Some((_, b)) => total < *b,
            };
            if better {
                *best = Some((current.clone(), total));
            }
            return;
        }
        for col in 0..used.len() {
            if used[col] {
                continue;
            }
            used[col] = true;
            current.push(col);
            recurse(costs, row + 1, used, current, total + costs[row][col], best);
            current.pop();
            used[col] = false;
        }
    }
    recurse(costs, 0, &mut used, &mut current, 0.0, &mut best);
    best.unwrap_or((Vec::new(), 0.0))
}

/// Naive matching-cost matrix: every entry recomputes softmax, sigmoid and
/// both mask losses from textbook formulas with no sharing across pairs.
/// The plain `p.ln()` cross entropy needs logits of moderate magnitude.
#[allow(clippy::too_many_arguments)]
pub fn cost_matrix_ref(
    class_logits: &[Vec<f64>],
    mask_logits: &[Vec<f64>],
    target_classes: &[usize],
    target_masks: &[Vec<f64>],
    lambda_cls: f64,
    lambda_mask: f64,
    lambda_dice: f64,
    smooth: f64,
    squared_denominator: bool,
) -> Vec<Vec<f64>> {
    (0..class_logits.len())
        .map(|i| {
            (0..target_classes.len())
                .map(|j| {
                    let exps: Vec<f64> = class_logits[i].iter().map(|&x| x.exp()).collect();
                    let z: f64 = exps.iter().sum();
                    let cls = -(exps[target_classes[j]] / z);
                    let pixels = mask_logits[i].len();
                    let mut ce = 0.0;
                    let mut inter = 0.0;
                    let mut psum = 0.0;
                    let mut gsum = 0.0;
                    for (&x, &g) in mask_logits[i].iter().zip(&target_masks[j]) {
                        let p = 1.0 / (1.0 + (-x).exp());
                        ce -= g * p.ln() + (1.0 - g) * (1.0 - p).ln();
                        inter += p * g;
                        psum += if squared_denominator { p * p } else { p };
                        gsum += if squared_denominator { g * g } else { g };
                    }
                    ce /= pixels as f64;
                    let dice = 1.0 - (2.0 * inter + smooth) / (psum + gsum + smooth);
                    lambda_cls * cls + lambda_mask * ce + lambda_dice * dice
                })
                .collect()
        })
        .collect()
}
