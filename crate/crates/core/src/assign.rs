//! Training-side assignment math: mask losses, the bipartite matching cost
//! between mask predictions and targets, an exact minimum-cost assignment
//! solver, and the staged total loss.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;
use thiserror::Error;

/// Errors from loss and assignment computations.
#[derive(Debug, Error, PartialEq)]
pub enum AssignError {
    #[error("mask shapes differ: prediction has {pred} pixels, target has {target}")]
    MaskShape { pred: usize, target: usize },
    #[error("mask probability {value} at pixel {index} outside [0, 1]")]
    BadProbability { index: usize, value: f64 },
    #[error("target mask value {value} at index {index} is not binary")]
    NotBinary { index: usize, value: f64 },
    #[error("logit at index {index} of the {which} input is not finite")]
    NonFiniteLogit { which: &'static str, index: usize },
    #[error("target class {class} outside the {classes} class logits")]
    ClassOutOfRange { class: usize, classes: usize },
    #[error("inconsistent prediction count: {class_rows} class-logit rows, {mask_rows} mask rows")]
    PredictionCount { class_rows: usize, mask_rows: usize },
    #[error("inconsistent target count: {classes} class labels, {mask_rows} masks")]
    TargetCount { classes: usize, mask_rows: usize },
    #[error("cost matrix entry ({row}, {col}) is not finite")]
    NonFinite { row: usize, col: usize },
    #[error("{rows} rows exceed {cols} columns; pad the matrix square to allow unmatched rows")]
    RowsExceedCols { rows: usize, cols: usize },
    #[error("the staged loss needs at least one stage")]
    EmptyStages,
    #[error("{name} weight {value} is negative")]
    NegativeWeight { name: &'static str, value: f64 },
}

/// Dice-loss smoothing and denominator variant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiceConfig {
    pub smooth: f64,
    /// Use squared sums in the denominator instead of plain sums.
    pub squared_denominator: bool,
}

impl Default for DiceConfig {
    fn default() -> Self {
        DiceConfig { smooth: 1.0, squared_denominator: false }
    }
}

fn check_binary(target: ArrayView1<f64>) -> Result<(), AssignError> {
    for (index, &g) in target.iter().enumerate() {
        if g != 0.0 && g != 1.0 {
            return Err(AssignError::NotBinary { index, value: g });
        }
    }
    Ok(())
}

fn dice_from_probs(pred: ArrayView1<f64>, target: ArrayView1<f64>, cfg: &DiceConfig) -> f64 {
    let mut inter = 0.0;
    let mut psum = 0.0;
    let mut gsum = 0.0;
    for (&p, &g) in pred.iter().zip(target.iter()) {
        inter += p * g;
        if cfg.squared_denominator {
            psum += p * p;
            gsum += g * g;
        } else {
            psum += p;
            gsum += g;
        }
    }
    1.0 - (2.0 * inter + cfg.smooth) / (psum + gsum + cfg.smooth)
}

/// Dice loss between soft mask probabilities and a binary target:
/// `1 - (2*sum(p*g) + s) / (sum(p) + sum(g) + s)` with smoothing `s`.
pub fn dice_loss(
    pred: ArrayView1<f64>,
    target: ArrayView1<f64>,
    cfg: &DiceConfig,
) -> Result<f64, AssignError> {
    if pred.len() != target.len() {
        return Err(AssignError::MaskShape { pred: pred.len(), target: target.len() });
    }
    for (index, &p) in pred.iter().enumerate() {
        if !(0.0..=1.0).contains(&p) {
            return Err(AssignError::BadProbability { index, value: p });
        }
    }
    check_binary(target)?;
    Ok(dice_from_probs(pred, target, cfg))
}

/// Binary cross entropy of one logit against a 0/1 target, in the
/// overflow-free form `max(x, 0) - x*y + ln(1 + exp(-|x|))`.
fn bce_term(x: f64, y: f64) -> f64 {
    x.max(0.0) - x * y + (-x.abs()).exp().ln_1p()
}

fn bce_mean(logits: ArrayView1<f64>, target: ArrayView1<f64>) -> f64 {
    if logits.is_empty() {
        return 0.0;
    }
    let sum: f64 = logits.iter().zip(target.iter()).map(|(&x, &y)| bce_term(x, y)).sum();
    sum / logits.len() as f64
}

/// Mean binary cross entropy between mask logits and a binary target mask.
pub fn mask_ce_loss(logits: ArrayView1<f64>, target: ArrayView1<f64>) -> Result<f64, AssignError> {
    if logits.len() != target.len() {
        return Err(AssignError::MaskShape { pred: logits.len(), target: target.len() });
    }
    for (index, &x) in logits.iter().enumerate() {
        if !x.is_finite() {
            return Err(AssignError::NonFiniteLogit { which: "mask", index });
        }
    }
    check_binary(target)?;
    Ok(bce_mean(logits, target))
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax(logits: ArrayView1<f64>) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&x| (x - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Matching cost weights for classification, mask cross entropy and dice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchWeights {
    pub lambda_cls: f64,
    pub lambda_mask: f64,
    pub lambda_dice: f64,
}

impl Default for MatchWeights {
    fn default() -> Self {
        MatchWeights { lambda_cls: 2.0, lambda_mask: 5.0, lambda_dice: 5.0 }
    }
}

/// Pairwise matching costs, predictions along rows and targets along
/// columns, with the weighted components kept separately.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    pub total: Array2<f64>,
    pub class_cost: Array2<f64>,
    pub mask_ce_cost: Array2<f64>,
    pub dice_cost: Array2<f64>,
}

impl CostMatrix {
    /// Minimum-cost assignment of prediction rows to target columns.
    pub fn assign(&self) -> Result<Assignment, AssignError> {
        hungarian(self.total.view())
    }
}

/// Builds the prediction-to-target cost matrix
/// `cost(i, j) = lambda_cls * (-softmax prob of the target class)
///  + lambda_mask * mask cross entropy + lambda_dice * dice loss`.
///
/// `class_logits` is predictions by classes, `mask_logits` predictions by
/// pixels, `target_masks` targets by pixels with 0/1 entries. Rows are
/// computed in parallel; the result does not depend on the thread count.
pub fn build_cost_matrix(
    class_logits: ArrayView2<f64>,
    mask_logits: ArrayView2<f64>,
    target_classes: &[usize],
    target_masks: ArrayView2<f64>,
    weights: &MatchWeights,
    dice_cfg: &DiceConfig,
) -> Result<CostMatrix, AssignError> {
    let preds = class_logits.nrows();
    let classes = class_logits.ncols();
    if mask_logits.nrows() != preds {
        return Err(AssignError::PredictionCount {
            class_rows: preds,
            mask_rows: mask_logits.nrows(),
        });
    }
    let targets = target_classes.len();
    if target_masks.nrows() != targets {
        return Err(AssignError::TargetCount { classes: targets, mask_rows: target_masks.nrows() });
    }
    if mask_logits.ncols() != target_masks.ncols() {
        return Err(AssignError::MaskShape {
            pred: mask_logits.ncols(),
            target: target_masks.ncols(),
        });
    }
    for &class in target_classes {
        if class >= classes {
            return Err(AssignError::ClassOutOfRange { class, classes });
        }
    }
    for (index, &x) in class_logits.iter().enumerate() {
        if !x.is_finite() {
            return Err(AssignError::NonFiniteLogit { which: "class", index });
        }
    }
    for (index, &x) in mask_logits.iter().enumerate() {
        if !x.is_finite() {
            return Err(AssignError::NonFiniteLogit { which: "mask", index });
        }
    }
    for (index, &g) in target_masks.iter().enumerate() {
        if g != 0.0 && g != 1.0 {
            return Err(AssignError::NotBinary { index, value: g });
        }
    }

    let rows: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..preds)
        .into_par_iter()
        .map(|i| {
            let probs = softmax(class_logits.row(i));
            let mask_probs: Vec<f64> =
                mask_logits.row(i).iter().map(|&x| sigmoid(x)).collect();
            let mask_probs = ArrayView1::from(&mask_probs);
            let mut cls_row = Vec::with_capacity(targets);
            let mut ce_row = Vec::with_capacity(targets);
            let mut dice_row = Vec::with_capacity(targets);
            for j in 0..targets {
                cls_row.push(-probs[target_classes[j]]);
                ce_row.push(bce_mean(mask_logits.row(i), target_masks.row(j)));
                dice_row.push(dice_from_probs(mask_probs, target_masks.row(j), dice_cfg));
            }
            (cls_row, ce_row, dice_row)
        })
        .collect();

    let mut class_cost = Array2::zeros((preds, targets));
    let mut mask_ce_cost = Array2::zeros((preds, targets));
    let mut dice_cost = Array2::zeros((preds, targets));
    let mut total = Array2::zeros((preds, targets));
    for (i, (cls_row, ce_row, dice_row)) in rows.into_iter().enumerate() {
        for j in 0..targets {
            class_cost[[i, j]] = cls_row[j];
            mask_ce_cost[[i, j]] = ce_row[j];
            dice_cost[[i, j]] = dice_row[j];
            total[[i, j]] = weights.lambda_cls * cls_row[j]
                + weights.lambda_mask * ce_row[j]
                + weights.lambda_dice * dice_row[j];
        }
    }
    Ok(CostMatrix { total, class_cost, mask_ce_cost, dice_cost })
}

/// A row-to-column assignment and its cost under the original matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub row_to_col: Vec<usize>,
    pub total_cost: f64,
}

/// Exact minimum-cost assignment of every row to a distinct column.
///
/// Requires `rows <= cols`. Among all minimum-cost assignments the
/// lexicographically smallest column vector is returned, i.e. ties break
/// toward the lowest column for the lowest row.
pub fn hungarian(costs: ArrayView2<f64>) -> Result<Assignment, AssignError> {
    let rows = costs.nrows();
    let cols = costs.ncols();
    for ((row, col), &value) in costs.indexed_iter() {
        if !value.is_finite() {
            return Err(AssignError::NonFinite { row, col });
        }
    }
    if rows == 0 {
        return Ok(Assignment { row_to_col: Vec::new(), total_cost: 0.0 });
    }
    if rows > cols {
        return Err(AssignError::RowsExceedCols { rows, cols });
    }

    // Pad with zero-cost dummy rows so the matrix is square; any optimal
    // real assignment extends to an optimal square one and vice versa.
    let n = cols;
    let at = |i: usize, j: usize| -> f64 {
        if i < rows {
            costs[[i, j]]
        } else {
            0.0
        }
    };

    // Potentials-based shortest augmenting path solver, one-indexed with a
    // virtual column 0.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = at(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut optimal_total = 0.0;
    for (j, &i) in p.iter().enumerate().skip(1) {
        if i >= 1 && i - 1 < rows {
            optimal_total += at(i - 1, j - 1);
        }
    }

    // Complementary slackness: every optimal assignment uses only edges
    // whose reduced cost vanishes, so restrict to those and pick the
    // lexicographically smallest feasible choice row by row.
    let tol = 1e-9 * (1.0 + optimal_total.abs());
    let tight: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n).filter(|&j| at(i, j) - u[i + 1] - v[j + 1] <= tol).collect()
        })
        .collect();

    let mut taken = vec![false; n];
    let mut row_to_col = Vec::with_capacity(rows);
    for row in 0..rows {
        let mut chosen = None;
        for &col in &tight[row] {
            if taken[col] {
                continue;
            }
            taken[col] = true;
            if remaining_rows_feasible(row + 1, n, &tight, &taken) {
                chosen = Some(col);
                break;
            }
            taken[col] = false;
        }
        let col = chosen.expect("an optimal assignment always completes over tight edges");
        row_to_col.push(col);
    }

    let total_cost = row_to_col.iter().enumerate().map(|(r, &c)| costs[[r, c]]).sum();
    Ok(Assignment { row_to_col, total_cost })
}

/// Whether rows `start..n` can be matched to distinct untaken columns
/// through tight edges, by augmenting paths.
fn remaining_rows_feasible(start: usize, n: usize, tight: &[Vec<usize>], taken: &[bool]) -> bool {
    let mut col_owner = vec![usize::MAX; n];
    for row in start..n {
        let mut visited = vec![false; n];
        if !augment(row, tight, taken, &mut col_owner, &mut visited) {
            return false;
        }
    }
    true
}

fn augment(
    row: usize,
    tight: &[Vec<usize>],
    taken: &[bool],
    col_owner: &mut [usize],
    visited: &mut [bool],
) -> bool {
    for &col in &tight[row] {
        if taken[col] || visited[col] {
            continue;
        }
        visited[col] = true;
        if col_owner[col] == usize::MAX
            || augment(col_owner[col], tight, taken, col_owner, visited)
        {
            col_owner[col] = row;
            return true;
        }
    }
    false
}

/// Per-stage loss components. The part-semantic term is the optional extra
/// supervision some variants place on the part feature map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageComponents {
    pub part: f64,
    pub thing: f64,
    pub stuff: f64,
    pub cls: f64,
    pub part_semantic: Option<f64>,
}

impl StageComponents {
    pub fn new(part: f64, thing: f64, stuff: f64, cls: f64) -> Self {
        StageComponents { part, thing, stuff, cls, part_semantic: None }
    }
}

/// Non-negative weights for the staged loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda_part: f64,
    pub lambda_thing: f64,
    pub lambda_stuff: f64,
    pub lambda_cls: f64,
    pub lambda_part_semantic: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_part: 1.0,
            lambda_thing: 1.0,
            lambda_stuff: 1.0,
            lambda_cls: 1.0,
            lambda_part_semantic: 1.0,
        }
    }
}

impl LossWeights {
    fn validate(&self) -> Result<(), AssignError> {
        let named = [
            ("part", self.lambda_part),
            ("thing", self.lambda_thing),
            ("stuff", self.lambda_stuff),
            ("cls", self.lambda_cls),
            ("part_semantic", self.lambda_part_semantic),
        ];
        for (name, value) in named {
            if value < 0.0 {
                return Err(AssignError::NegativeWeight { name, value });
            }
        }
        Ok(())
    }
}

/// Weighted sum of the component losses over all stages.
pub fn total_loss(stages: &[StageComponents], weights: &LossWeights) -> Result<f64, AssignError> {
    if stages.is_empty() {
        return Err(AssignError::EmptyStages);
    }
    weights.validate()?;
    let mut total = 0.0;
    for stage in stages {
        total += weights.lambda_part * stage.part
            + weights.lambda_thing * stage.thing
            + weights.lambda_stuff * stage.stuff
            + weights.lambda_cls * stage.cls;
        if let Some(semantic) = stage.part_semantic {
            total += weights.lambda_part_semantic * semantic;
        }
    }
    Ok(total)
}
