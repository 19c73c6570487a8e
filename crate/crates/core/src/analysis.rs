//! Upper-bound analysis by ground-truth substitution: a prediction set is
//! evaluated three times, once as is, once with the panoptic component
//! replaced by ground truth, and once with the part component replaced.
//! The gaps between the runs show how much headroom each branch leaves.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::{merge_pps, split_parts, FusionConfig, FusionError, PartSource};
use crate::metrics::{
    build_report, evaluate_image, merge_accumulators, MetricAccumulator, MetricConfig,
    MetricError, MetricReport,
};
use crate::segmap::PanopticPartMap;
use crate::taxonomy::Taxonomy;

/// Which component, if any, is swapped for its ground-truth counterpart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleSetting {
    None,
    PanopticGt,
    PartGt,
}

impl OracleSetting {
    pub const ALL: [OracleSetting; 3] =
        [OracleSetting::None, OracleSetting::PanopticGt, OracleSetting::PartGt];

    pub fn label(self) -> &'static str {
        match self {
            OracleSetting::None => "none",
            OracleSetting::PanopticGt => "panoptic_gt",
            OracleSetting::PartGt => "part_gt",
        }
    }
}

/// One substitution run and its metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleRun {
    pub setting: OracleSetting,
    pub report: MetricReport,
}

/// Errors from the substitution harness.
#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("dataset slices differ in length: {gts} ground truths, {panoptic} panoptic predictions, {parts} part predictions")]
    LengthMismatch { gts: usize, panoptic: usize, parts: usize },
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
}

/// Evaluates the dataset under every [`OracleSetting`].
///
/// Ground-truth components come from [`split_parts`] of each ground-truth
/// map: the panoptic component strips part ids, the part component is the
/// bare part-id grid. The `none` run is exactly a plain evaluation of the
/// fused predictions.
pub fn run_oracle(
    gts: &[PanopticPartMap],
    pred_panoptic: &[PanopticPartMap],
    pred_parts: &[PartSource],
    taxonomy: &Arc<Taxonomy>,
    metric_cfg: &MetricConfig,
    fusion_cfg: &FusionConfig,
) -> Result<Vec<OracleRun>, AnalysisError> {
    if gts.len() != pred_panoptic.len() || gts.len() != pred_parts.len() {
        return Err(AnalysisError::LengthMismatch {
            gts: gts.len(),
            panoptic: pred_panoptic.len(),
            parts: pred_parts.len(),
        });
    }
    let mut runs = Vec::with_capacity(OracleSetting::ALL.len());
    for setting in OracleSetting::ALL {
        let mut acc = MetricAccumulator::new(taxonomy.clone(), *metric_cfg);
        for index in 0..gts.len() {
            let fused = match setting {
                OracleSetting::None => {
                    merge_pps(&pred_panoptic[index], &pred_parts[index], taxonomy, fusion_cfg)?
                }
                OracleSetting::PanopticGt => {
                    let (gt_panoptic, _) = split_parts(&gts[index], taxonomy)?;
                    merge_pps(&gt_panoptic, &pred_parts[index], taxonomy, fusion_cfg)?
                }
                OracleSetting::PartGt => {
                    let (_, gt_parts) = split_parts(&gts[index], taxonomy)?;
                    merge_pps(
                        &pred_panoptic[index],
                        &PartSource::Grid(gt_parts),
                        taxonomy,
                        fusion_cfg,
                    )?
                }
            };
            let image = evaluate_image(&gts[index], &fused, taxonomy, metric_cfg)?;
            acc = merge_accumulators(acc, image)?;
        }
        runs.push(OracleRun { setting, report: build_report(&acc)? });
    }
    Ok(runs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::PartGrid;
    use crate::taxonomy::{validate_taxonomy, ClassKind, ClassSpec, PartSpec, TaxonomyDoc};

    fn taxonomy() -> Arc<Taxonomy> {
        Arc::new(
            validate_taxonomy(TaxonomyDoc {
                void_uid: 0,
                classes: vec![
                    ClassSpec {
                        sid: 26,
                        name: "car".into(),
                        kind: ClassKind::Thing,
                        parts: vec![
                            PartSpec { pid: 1, name: "wheel".into() },
                            PartSpec { pid: 2, name: "body".into() },
                        ],
                    },
                    ClassSpec {
                        sid: 7,
                        name: "road".into(),
                        kind: ClassKind::Stuff,
                        parts: vec![],
                    },
                ],
            })
            .unwrap(),
        )
    }

    #[test]
    fn none_setting_equals_plain_evaluation() {
        let tax = taxonomy();
        let gt = PanopticPartMap::new(4, 1, vec![2_600_101, 2_600_102, 7, 7]).unwrap();
        let pan = PanopticPartMap::new(4, 1, vec![26_001, 26_001, 7, 7]).unwrap();
        let grid =
            PartGrid::new(4, 1, vec![1, 1, crate::fusion::NO_PART, crate::fusion::NO_PART]).unwrap();
        let parts = vec![PartSource::Grid(grid)];
        let metric_cfg = MetricConfig::default();
        let fusion_cfg = FusionConfig::default();
        let runs = run_oracle(
            std::slice::from_ref(&gt),
            std::slice::from_ref(&pan),
            &parts,
            &tax,
            &metric_cfg,
            &fusion_cfg,
        )
        .unwrap();

        let fused = merge_pps(&pan, &parts[0], &tax, &fusion_cfg).unwrap();
        let acc = evaluate_image(&gt, &fused, &tax, &metric_cfg).unwrap();
        let plain = build_report(&acc).unwrap();
        assert_eq!(runs[0].setting, OracleSetting::None);
        assert_eq!(runs[0].report, plain);
    }

    #[test]
    fn perfect_predictions_are_perfect_under_every_setting() {
        let tax = taxonomy();
        let gt = PanopticPartMap::new(4, 1, vec![2_600_101, 2_600_102, 7, 7]).unwrap();
        let (pan, grid) = split_parts(&gt, &tax).unwrap();
        let parts = vec![PartSource::Grid(grid)];
        let runs = run_oracle(
            std::slice::from_ref(&gt),
            std::slice::from_ref(&pan),
            &parts,
            &tax,
            &MetricConfig::default(),
            &FusionConfig::default(),
        )
        .unwrap();
        for run in runs {
            assert_eq!(run.report.pq_all, 1.0);
            assert_eq!(run.report.partpq_all, 1.0);
            assert_eq!(run.report.pwq, Some(1.0));
        }
    }

    #[test]
    fn substituting_ground_truth_restores_perfection() {
        let tax = taxonomy();
        let gt = PanopticPartMap::new(4, 1, vec![2_600_101, 2_600_102, 7, 7]).unwrap();
        // Panoptic prediction misses the car entirely.
        let pan = PanopticPartMap::new(4, 1, vec![7, 7, 7, 7]).unwrap();
        let (_, gt_grid) = split_parts(&gt, &tax).unwrap();
        let parts = vec![PartSource::Grid(gt_grid)];
        let runs = run_oracle(
            std::slice::from_ref(&gt),
            std::slice::from_ref(&pan),
            &parts,
            &tax,
            &MetricConfig::default(),
            &FusionConfig::default(),
        )
        .unwrap();
        assert!(runs[0].report.pq_all < 1.0);
        assert_eq!(runs[1].setting, OracleSetting::PanopticGt);
        assert_eq!(runs[1].report.pq_all, 1.0);
        assert_eq!(runs[1].report.pwq, Some(1.0));
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let tax = taxonomy();
        let gt = PanopticPartMap::filled(2, 1, 7);
        let err = run_oracle(
            std::slice::from_ref(&gt),
            &[],
            &[],
            &tax,
            &MetricConfig::default(),
            &FusionConfig::default(),
        );
        assert!(matches!(err, Err(AnalysisError::LengthMismatch { .. })));
    }
}
