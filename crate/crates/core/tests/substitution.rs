//! Ground-truth substitution on randomized fixtures: swapping in panoptic
//! ground truth moves scene quality without touching part quality, and
//! swapping in part ground truth does the opposite.

use std::sync::Arc;

use pps_core::analysis::{run_oracle, OracleRun, OracleSetting};
use pps_core::fusion::FusionConfig;
use pps_core::metrics::MetricConfig;
use pps_oracle::fixtures;

fn runs_for(fixture: &fixtures::SubstitutionFixture) -> Vec<OracleRun> {
    let taxonomy = Arc::new(fixture.taxonomy.clone());
    run_oracle(
        &fixture.gts,
        &fixture.pred_panoptic,
        &fixture.pred_parts,
        &taxonomy,
        &MetricConfig::default(),
        &FusionConfig::default(),
    )
    .unwrap()
}

#[test]
fn panoptic_substitution_moves_scene_quality_only() {
    for seed in 0..12u64 {
        let fixture = fixtures::scene_degraded_fixture(seed, 3, 12, 8);
        let runs = runs_for(&fixture);
        assert_eq!(runs[1].setting, OracleSetting::PanopticGt);
        let baseline = &runs[0].report;
        let with_gt_panoptic = &runs[1].report;
        assert!(
            baseline.ssq < with_gt_panoptic.ssq,
            "seed {seed}: ssq {} vs {}",
            baseline.ssq,
            with_gt_panoptic.ssq
        );
        assert_eq!(with_gt_panoptic.ssq, 1.0, "seed {seed}");
        assert_eq!(baseline.psq, with_gt_panoptic.psq, "seed {seed}");
        // The part predictions already equal ground truth, so substituting
        // them reproduces the baseline run exactly.
        assert_eq!(baseline, &runs[2].report, "seed {seed}");
    }
}

#[test]
fn part_substitution_moves_part_quality_only() {
    for seed in 0..12u64 {
        let fixture = fixtures::part_degraded_fixture(seed, 3, 12, 8);
        let runs = runs_for(&fixture);
        assert_eq!(runs[2].setting, OracleSetting::PartGt);
        let baseline = &runs[0].report;
        let with_gt_parts = &runs[2].report;
        assert!(
            baseline.psq.unwrap() < with_gt_parts.psq.unwrap(),
            "seed {seed}: psq {:?} vs {:?}",
            baseline.psq,
            with_gt_parts.psq
        );
        assert_eq!(with_gt_parts.psq, Some(1.0), "seed {seed}");
        assert_eq!(baseline.ssq, with_gt_parts.ssq, "seed {seed}");
        assert_eq!(baseline.ssq, 1.0, "seed {seed}");
        assert_eq!(baseline, &runs[1].report, "seed {seed}");
    }
}

#[test]
fn consistent_maps_survive_decompose_recompose() {
    use pps_core::fusion::{merge_pps, split_parts, PartSource};
    let taxonomy = fixtures::street_taxonomy();
    let mut rng = fixtures::rng(417);
    for _ in 0..50 {
        let map = fixtures::sanitize_parts(
            &fixtures::random_map(&mut rng, &taxonomy, 16, 16),
            &taxonomy,
        );
        let (panoptic, grid) = split_parts(&map, &taxonomy).unwrap();
        let back = merge_pps(
            &panoptic,
            &PartSource::Grid(grid),
            &taxonomy,
            &FusionConfig::default(),
        )
        .unwrap();
        assert_eq!(back, map);
    }
}
