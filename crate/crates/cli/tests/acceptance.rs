//! Release gate: ten checks covering the metric anchor, degeneracies,
//! reference equivalence, matching, fusion, substitution decoupling, the
//! simulator invariants, assignment optimality, parallel determinism and the
//! on-disk formats. Each check prints one pass/fail line.

mod common;

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::{write_map_dir, write_taxonomy_file};
use ndarray::Array2;
use pps_cli::evaluate::{cmd_evaluate, EvaluateArgs};
use pps_core::analysis::{run_oracle, OracleRun};
use pps_core::assign::hungarian;
use pps_core::decoder::{run_invariant_suite, Arch, SimConfig};
use pps_core::fusion::{
    merge_pps, split_parts, FusionConfig, PartGrid, PartSource, NO_PART,
};
use pps_core::metrics::{
    build_report, compute_pwq, evaluate_image, merge_accumulators, MetricAccumulator,
    MetricConfig, MetricReport,
};
use pps_core::segmap::{parse_ppsm, to_ppsm_bytes, PanopticPartMap};
use pps_core::taxonomy::{
    decode_uid, encode_uid, ClassKind, Taxonomy, UidTriple, MAX_IID, MAX_PID, MAX_SID,
};
use pps_oracle::fixtures::{
    below, no_parts_taxonomy, part_degraded_fixture, random_dataset, random_map,
    random_map_pair, rng, sanitize_parts, scene_degraded_fixture, street_taxonomy,
    SubstitutionFixture,
};
use pps_oracle::reference::{
    brute_force_assignment, finalize, merge_tallies, tally_image, RefConfig, RefTally,
};
use tempfile::TempDir;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if $cond {
        } else {
            return Err(format!($($msg)+));
        }
    };
}

fn criterion<F>(number: u32, name: &str, body: F)
where
    F: FnOnce() -> Result<String, String>,
{
    match body() {
        Ok(detail) => println!("criterion {number:02} ({name}): pass ({detail})"),
        Err(why) => {
            println!("criterion {number:02} ({name}): FAIL ({why})");
            panic!("criterion {number:02} ({name}) failed: {why}");
        }
    }
}

fn dataset_report(
    gts: &[PanopticPartMap],
    preds: &[PanopticPartMap],
    taxonomy: &Arc<Taxonomy>,
    cfg: &MetricConfig,
) -> Result<MetricReport, String> {
    let mut acc = MetricAccumulator::new(taxonomy.clone(), *cfg);
    for (gt, pred) in gts.iter().zip(preds) {
        let image = evaluate_image(gt, pred, taxonomy, cfg).map_err(|e| e.to_string())?;
        acc = merge_accumulators(acc, image).map_err(|e| e.to_string())?;
    }
    build_report(&acc).map_err(|e| e.to_string())
}

#[test]
fn criterion_01_pwq_composition_hits_the_published_anchor() {
    criterion(1, "pwq composition anchor", || {
        compute_pwq(0.496, 1.0, 0.275, 1.0).map_err(|e| e.to_string())?;
        let start = Instant::now();
        let breakdown = compute_pwq(0.496, 1.0, 0.275, 1.0).map_err(|e| e.to_string())?;
        let elapsed = start.elapsed();
        ensure!((breakdown.ssq - 0.496).abs() < 1e-15, "ssq {} is not 0.496", breakdown.ssq);
        ensure!((breakdown.psq - 0.275).abs() < 1e-15, "psq {} is not 0.275", breakdown.psq);
        ensure!(
            (0.6205..=0.6215).contains(&breakdown.pwq),
            "pwq {} outside [0.6205, 0.6215]",
            breakdown.pwq
        );
        let percent = format!("{:.1}", breakdown.pwq * 100.0);
        ensure!(percent == "62.1", "pwq renders as {percent}%, want 62.1%");
        ensure!(elapsed < Duration::from_millis(1), "one call took {elapsed:?}, budget 1 ms");
        Ok(format!("pwq {:.6} -> {percent}% in {elapsed:?}", breakdown.pwq))
    });
}

#[test]
fn criterion_02_partpq_degenerates_to_pq_without_parts() {
    criterion(2, "partpq/pq degeneracy", || {
        let start = Instant::now();
        let cfg = MetricConfig::default();
        let mut r = rng(202);

        let no_parts = Arc::new(no_parts_taxonomy());
        for case in 0..200 {
            let (gts, preds) = random_dataset(&mut r, &no_parts, 2, 12, 12);
            let report = dataset_report(&gts, &preds, &no_parts, &cfg)?;
            ensure!(
                report.partpq_all == report.pq_all,
                "no-part dataset {case}: partpq {} differs from pq {}",
                report.partpq_all,
                report.pq_all
            );
            ensure!(
                report.partpq_no_parts == report.pq_no_parts,
                "no-part dataset {case}: partless splits diverge"
            );
        }

        let street = Arc::new(street_taxonomy());
        for case in 0..120 {
            let (gts, preds) = random_dataset(&mut r, &street, 2, 12, 12);
            let report = dataset_report(&gts, &preds, &street, &cfg)?;
            ensure!(
                report.partpq_no_parts == report.pq_no_parts,
                "part-bearing dataset {case}: partless columns diverge: {:?} vs {:?}",
                report.partpq_no_parts,
                report.pq_no_parts
            );
        }

        let elapsed = start.elapsed();
        ensure!(elapsed < Duration::from_secs(10), "took {elapsed:?}, budget 10 s");
        Ok(format!("200 no-part + 120 part-bearing datasets, exact, in {elapsed:?}"))
    });
}

fn compare_counts(case: usize, acc: &MetricAccumulator, tally: &RefTally) -> Result<(), String> {
    let sids: BTreeSet<u32> =
        acc.class_stats().keys().chain(tally.classes.keys()).copied().collect();
    for sid in sids {
        let (tp, fp, fn_, iou_scene, iou_part) = match acc.class_stats().get(&sid) {
            Some(s) => (s.tp, s.fp, s.fn_, s.iou_scene_sum(), s.iou_part_sum()),
            None => (0, 0, 0, 0.0, 0.0),
        };
        let (rtp, rfp, rfn, riou_scene, riou_part) = match tally.classes.get(&sid) {
            Some(c) => (c.tp, c.fp, c.fn_, c.iou_scene_sum, c.iou_part_sum),
            None => (0, 0, 0, 0.0, 0.0),
        };
        ensure!(
            (tp, fp, fn_) == (rtp, rfp, rfn),
            "pair {case} class {sid}: counts ({tp},{fp},{fn_}) vs reference ({rtp},{rfp},{rfn})"
        );
        ensure!(
            (iou_scene - riou_scene).abs() <= 1e-12,
            "pair {case} class {sid}: scene IoU sum {iou_scene} vs reference {riou_scene}"
        );
        ensure!(
            (iou_part - riou_part).abs() <= 1e-12,
            "pair {case} class {sid}: part IoU sum {iou_part} vs reference {riou_part}"
        );
    }

    let labels: BTreeSet<u32> =
        acc.scene_tallies().keys().chain(tally.scene_iou.keys()).copied().collect();
    for sid in labels {
        let ours = acc
            .scene_tallies()
            .get(&sid)
            .map(|t| (t.intersection, t.union))
            .unwrap_or((0, 0));
        let theirs = tally.scene_iou.get(&sid).copied().unwrap_or((0, 0));
        ensure!(
            ours == theirs,
            "pair {case} scene label {sid}: {ours:?} vs reference {theirs:?}"
        );
    }
    let parts: BTreeSet<(u32, u32)> =
        acc.part_tallies().keys().chain(tally.part_iou.keys()).copied().collect();
    for key in parts {
        let ours = acc
            .part_tallies()
            .get(&key)
            .map(|t| (t.intersection, t.union))
            .unwrap_or((0, 0));
        let theirs = tally.part_iou.get(&key).copied().unwrap_or((0, 0));
        ensure!(
            ours == theirs,
            "pair {case} part label {key:?}: {ours:?} vs reference {theirs:?}"
        );
    }
    Ok(())
}

#[test]
fn criterion_03_pipeline_matches_the_independent_reference() {
    criterion(3, "reference equivalence", || {
        let start = Instant::now();
        let taxonomy = Arc::new(street_taxonomy());
        let cfg = MetricConfig::default();
        let ref_cfg = RefConfig::default();
        let mut r = rng(303);

        let mut acc = MetricAccumulator::new(taxonomy.clone(), cfg);
        let mut tallies = Vec::with_capacity(200);
        for case in 0..200 {
            let width = 1 + below(&mut r, 16);
            let height = 1 + below(&mut r, 16);
            let (gt, pred) = random_map_pair(&mut r, &taxonomy, width, height);
            let image = evaluate_image(&gt, &pred, &taxonomy, &cfg).map_err(|e| e.to_string())?;
            let tally = tally_image(&gt, &pred, &taxonomy, &ref_cfg);
            compare_counts(case, &image, &tally)?;
            acc = merge_accumulators(acc, image).map_err(|e| e.to_string())?;
            tallies.push(tally);
        }

        let reference = finalize(&merge_tallies(&tallies), &taxonomy, &ref_cfg);
        let report = build_report(&acc).map_err(|e| e.to_string())?;
        let pairs = [
            ("pq_all", Some(report.pq_all), reference.pq_all),
            ("pq_parts", report.pq_parts, reference.pq_p),
            ("pq_no_parts", report.pq_no_parts, reference.pq_np),
            ("partpq_all", Some(report.partpq_all), reference.partpq_all),
            ("partpq_parts", report.partpq_parts, reference.partpq_p),
            ("partpq_no_parts", report.partpq_no_parts, reference.partpq_np),
            ("miou_scene", Some(report.miou_scene), reference.miou_scene),
            ("miou_part", report.miou_part, reference.miou_part),
            ("ssq", Some(report.ssq), reference.ssq),
            ("psq", report.psq, reference.psq),
            ("pwq", report.pwq, reference.pwq),
        ];
        for (name, ours, theirs) in pairs {
            match (ours, theirs) {
                (None, None) => {}
                (Some(a), Some(b)) => {
                    ensure!((a - b).abs() <= 1e-12, "{name}: {a} vs reference {b}")
                }
                _ => ensure!(false, "{name}: {ours:?} vs reference {theirs:?}"),
            }
        }

        let elapsed = start.elapsed();
        ensure!(elapsed < Duration::from_secs(30), "took {elapsed:?}, budget 30 s");
        Ok(format!("200 map pairs, counts exact, ratios within 1e-12, in {elapsed:?}"))
    });
}

type SceneKey = (u32, Option<u32>);

/// Scene segment key per pixel: labeled thing instances stay separate, stuff
/// and unlabeled things pool per class, part digits never split segments.
fn scene_keys(map: &PanopticPartMap, taxonomy: &Taxonomy) -> Result<Vec<Option<SceneKey>>, String> {
    map.data()
        .iter()
        .map(|&uid| {
            if uid == taxonomy.void_uid() {
                return Ok(None);
            }
            let triple = decode_uid(uid).map_err(|e| e.to_string())?;
            let class = taxonomy
                .class(triple.sid)
                .ok_or_else(|| format!("unknown class {}", triple.sid))?;
            let instance = match class.kind {
                ClassKind::Thing => triple.iid,
                ClassKind::Stuff => None,
            };
            Ok(Some((triple.sid, instance)))
        })
        .collect()
}

#[test]
fn criterion_04_matching_never_reuses_a_segment() {
    criterion(4, "matching uniqueness", || {
        let taxonomy = Arc::new(street_taxonomy());
        let cfg = MetricConfig::default();
        let mut r = rng(404);
        let mut tp_total = 0u64;
        for case in 0..150 {
            let width = 1 + below(&mut r, 16);
            let height = 1 + below(&mut r, 16);
            let (gt, pred) = random_map_pair(&mut r, &taxonomy, width, height);

            let gt_keys = scene_keys(&gt, &taxonomy)?;
            let pred_keys = scene_keys(&pred, &taxonomy)?;
            let mut gt_size: HashMap<SceneKey, u64> = HashMap::new();
            let mut pred_size: HashMap<SceneKey, u64> = HashMap::new();
            let mut joint: HashMap<(SceneKey, SceneKey), u64> = HashMap::new();
            for (g, p) in gt_keys.iter().zip(&pred_keys) {
                if let Some(g) = g {
                    *gt_size.entry(*g).or_insert(0) += 1;
                }
                if let Some(p) = p {
                    *pred_size.entry(*p).or_insert(0) += 1;
                }
                if let (Some(g), Some(p)) = (g, p) {
                    *joint.entry((*g, *p)).or_insert(0) += 1;
                }
            }

            let mut gt_partners: HashMap<SceneKey, u32> = HashMap::new();
            let mut pred_partners: HashMap<SceneKey, u32> = HashMap::new();
            let mut qualifying = 0u64;
            for (&(g, p), &inter) in &joint {
                if g.0 != p.0 {
                    continue;
                }
                let union = gt_size[&g] + pred_size[&p] - inter;
                if 2 * inter > union {
                    *gt_partners.entry(g).or_insert(0) += 1;
                    *pred_partners.entry(p).or_insert(0) += 1;
                    qualifying += 1;
                }
            }
            for (key, partners) in &gt_partners {
                ensure!(
                    *partners <= 1,
                    "pair {case}: ground-truth segment {key:?} is in {partners} TP pairs"
                );
            }
            for (key, partners) in &pred_partners {
                ensure!(
                    *partners <= 1,
                    "pair {case}: predicted segment {key:?} is in {partners} TP pairs"
                );
            }

            let acc = evaluate_image(&gt, &pred, &taxonomy, &cfg).map_err(|e| e.to_string())?;
            let pipeline_tp: u64 = acc.class_stats().values().map(|s| s.tp).sum();
            ensure!(
                pipeline_tp == qualifying,
                "pair {case}: pipeline reports {pipeline_tp} TP, {qualifying} pairs qualify"
            );
            tp_total += qualifying;
        }
        Ok(format!("150 fixtures, {tp_total} TP pairs, every segment in at most one"))
    });
}

#[test]
fn criterion_05_fusion_round_trips_and_voids_mismatches() {
    criterion(5, "fusion correctness", || {
        let taxonomy = street_taxonomy();
        let fusion_cfg = FusionConfig::default();
        let mut r = rng(505);
        for case in 0..50 {
            let width = 2 + below(&mut r, 15);
            let height = 2 + below(&mut r, 15);
            let gt = sanitize_parts(&random_map(&mut r, &taxonomy, width, height), &taxonomy);
            let (panoptic, grid) = split_parts(&gt, &taxonomy).map_err(|e| e.to_string())?;
            let merged = merge_pps(&panoptic, &PartSource::Grid(grid), &taxonomy, &fusion_cfg)
                .map_err(|e| e.to_string())?;
            ensure!(
                to_ppsm_bytes(&merged) == to_ppsm_bytes(&gt),
                "fixture {case}: recombined bytes differ from the original"
            );
        }

        // Pixels: consistent car part, cross-class part, unowned part id,
        // partless vote target, stuff. Only the two contradictions may void.
        let car = encode_uid(UidTriple::instance(26, 1)).unwrap();
        let person = encode_uid(UidTriple::instance(24, 1)).unwrap();
        let road = encode_uid(UidTriple::semantic(7)).unwrap();
        let panoptic = PanopticPartMap::new(5, 1, vec![car, car, car, person, road]).unwrap();

        let part_map = PanopticPartMap::new(
            5,
            1,
            vec![
                encode_uid(UidTriple::part(26, 1, 2)).unwrap(),
                encode_uid(UidTriple::part(24, 1, 1)).unwrap(),
                encode_uid(UidTriple::part(26, 1, 9)).unwrap(),
                0,
                encode_uid(UidTriple::part(26, 1, 2)).unwrap(),
            ],
        )
        .unwrap();
        let fused = merge_pps(&panoptic, &PartSource::Map(part_map), &taxonomy, &fusion_cfg)
            .map_err(|e| e.to_string())?;
        let expected = vec![
            encode_uid(UidTriple::part(26, 1, 2)).unwrap(),
            0,
            0,
            person,
            road,
        ];
        ensure!(
            fused.data() == expected.as_slice(),
            "map-source mismatch voiding produced {:?}, want {expected:?}",
            fused.data()
        );

        let grid = PartGrid::new(5, 1, vec![1, NO_PART, 7, NO_PART, NO_PART]).unwrap();
        let fused = merge_pps(&panoptic, &PartSource::Grid(grid), &taxonomy, &fusion_cfg)
            .map_err(|e| e.to_string())?;
        let expected = vec![
            encode_uid(UidTriple::part(26, 1, 1)).unwrap(),
            car,
            0,
            person,
            road,
        ];
        ensure!(
            fused.data() == expected.as_slice(),
            "grid-source mismatch voiding produced {:?}, want {expected:?}",
            fused.data()
        );
        Ok("50 byte-identical round trips; contradictions void exactly the built pixels".into())
    });
}

fn oracle_runs(fixture: &SubstitutionFixture) -> Result<Vec<OracleRun>, String> {
    run_oracle(
        &fixture.gts,
        &fixture.pred_panoptic,
        &fixture.pred_parts,
        &Arc::new(fixture.taxonomy.clone()),
        &MetricConfig::default(),
        &FusionConfig::default(),
    )
    .map_err(|e| e.to_string())
}

#[test]
fn criterion_06_substitution_decouples_the_two_qualities() {
    criterion(6, "substitution decoupling", || {
        for seed in 0..4u64 {
            let runs = oracle_runs(&scene_degraded_fixture(seed, 3, 12, 8))?;
            let baseline = &runs[0].report;
            let substituted = &runs[1].report;
            ensure!(
                baseline.ssq != substituted.ssq,
                "seed {seed}: panoptic substitution left ssq at {}",
                baseline.ssq
            );
            ensure!(
                baseline.psq.map(f64::to_bits) == substituted.psq.map(f64::to_bits),
                "seed {seed}: psq moved from {:?} to {:?}",
                baseline.psq,
                substituted.psq
            );

            let runs = oracle_runs(&part_degraded_fixture(seed, 3, 12, 8))?;
            let baseline = &runs[0].report;
            let substituted = &runs[2].report;
            ensure!(
                baseline.psq != substituted.psq,
                "seed {seed}: part substitution left psq at {:?}",
                baseline.psq
            );
            ensure!(
                baseline.ssq.to_bits() == substituted.ssq.to_bits(),
                "seed {seed}: ssq moved from {} to {}",
                baseline.ssq,
                substituted.ssq
            );
        }
        Ok("4 seeds: each substitution moves only its own quality, the other bit-identical"
            .into())
    });
}

#[test]
fn criterion_07_simulator_invariants_hold_for_both_architectures() {
    criterion(7, "simulator invariants", || {
        let start = Instant::now();
        let mut checks_run = 0usize;
        for seed in 0..20u64 {
            for arch in [Arch::V1, Arch::V2] {
                let cfg = SimConfig { seed, arch, ..SimConfig::default() };
                let report = run_invariant_suite(&cfg).map_err(|e| e.to_string())?;
                for check in &report.checks {
                    ensure!(
                        check.passed,
                        "seed {seed} {arch:?}: {} failed ({})",
                        check.name,
                        check.detail
                    );
                }
                checks_run += report.checks.len();
            }
        }
        let elapsed = start.elapsed();
        ensure!(elapsed < Duration::from_secs(20), "took {elapsed:?}, budget 20 s");
        Ok(format!("20 seeds x v1/v2, {checks_run} checks, in {elapsed:?}"))
    });
}

#[test]
fn criterion_08_assignment_matches_the_brute_force_minimum() {
    criterion(8, "assignment optimality", || {
        let mut r = rng(808);
        for case in 0..500 {
            let rows = 1 + below(&mut r, 7) as usize;
            let cols = rows + below(&mut r, (8 - rows) as u32) as usize;
            // Sixteenths stay exact under every summation order, which makes
            // the equality below well defined.
            let matrix =
                Array2::from_shape_fn((rows, cols), |_| below(&mut r, 256) as f64 / 16.0);
            let as_rows: Vec<Vec<f64>> = matrix.outer_iter().map(|row| row.to_vec()).collect();

            let assignment = hungarian(matrix.view()).map_err(|e| e.to_string())?;
            let (_, best) = brute_force_assignment(&as_rows);
            ensure!(
                assignment.total_cost == best,
                "case {case} ({rows}x{cols}): hungarian {} vs brute force {best}",
                assignment.total_cost
            );

            let mut used = vec![false; cols];
            let mut replayed = 0.0;
            for (row, &col) in assignment.row_to_col.iter().enumerate() {
                ensure!(
                    col < cols && !used[col],
                    "case {case}: column {col} invalid or reused"
                );
                used[col] = true;
                replayed += matrix[(row, col)];
            }
            ensure!(
                replayed == assignment.total_cost,
                "case {case}: assignment replays to {replayed}, reported {}",
                assignment.total_cost
            );
        }
        Ok("500 matrices up to 7x7 hit the factorial minimum exactly".into())
    });
}

#[test]
fn criterion_09_parallel_evaluation_is_deterministic_and_scales() {
    criterion(9, "parallel determinism and speedup", || {
        let dir = TempDir::new().map_err(|e| e.to_string())?;
        let taxonomy = street_taxonomy();
        let mut r = rng(909);
        let mut gts = Vec::with_capacity(100);
        let mut preds = Vec::with_capacity(100);
        for _ in 0..100 {
            let (gt, pred) = random_map_pair(&mut r, &taxonomy, 256, 256);
            gts.push(gt);
            preds.push(pred);
        }
        let tax_path = write_taxonomy_file(dir.path(), &taxonomy);
        let gt_dir = write_map_dir(dir.path(), "gt", &gts);
        let pred_dir = write_map_dir(dir.path(), "pred", &preds);
        drop(gts);
        drop(preds);

        let args = |threads: usize, out: &str| EvaluateArgs {
            gt: gt_dir.clone(),
            pred: pred_dir.clone(),
            taxonomy: tax_path.clone(),
            out: Some(dir.path().join(out)),
            threads,
            no_void_fp_rule: false,
            miou_full_labels: false,
        };
        let start = Instant::now();
        let one = cmd_evaluate(&args(1, "one.json")).map_err(|e| e.to_string())?;
        let wall_one = start.elapsed();
        let start = Instant::now();
        let eight = cmd_evaluate(&args(8, "eight.json")).map_err(|e| e.to_string())?;
        let wall_eight = start.elapsed();

        ensure!(one == eight, "1-thread and 8-thread documents differ");
        let cores = std::thread::available_parallelism().map_or(0, |n| n.get());
        ensure!(
            wall_eight.as_secs_f64() <= 0.5 * wall_one.as_secs_f64(),
            "documents identical, but 8-thread wall {wall_eight:?} exceeds half of 1-thread \
             {wall_one:?} (host exposes {cores} core(s))"
        );
        Ok(format!(
            "identical documents; 1-thread {wall_one:?}, 8-thread {wall_eight:?}"
        ))
    });
}

#[test]
fn criterion_10_codecs_round_trip_and_the_golden_bytes_hold() {
    criterion(10, "codec and format stability", || {
        let start = Instant::now();
        for sid in 1..=MAX_SID {
            let triple = UidTriple::semantic(sid);
            let uid = encode_uid(triple).map_err(|e| e.to_string())?;
            ensure!(
                decode_uid(uid) == Ok(triple),
                "semantic uid {uid} does not round-trip"
            );
            for iid in 0..=MAX_IID {
                let triple = UidTriple::instance(sid, iid);
                let uid = encode_uid(triple).map_err(|e| e.to_string())?;
                ensure!(
                    decode_uid(uid) == Ok(triple),
                    "instance uid {uid} does not round-trip"
                );
                for pid in 0..=MAX_PID {
                    let triple = UidTriple::part(sid, iid, pid);
                    let uid = encode_uid(triple).map_err(|e| e.to_string())?;
                    ensure!(
                        decode_uid(uid) == Ok(triple),
                        "part uid {uid} does not round-trip"
                    );
                }
            }
        }

        let taxonomy = street_taxonomy();
        let mut r = rng(1010);
        for case in 0..20 {
            let width = 1 + below(&mut r, 32);
            let height = 1 + below(&mut r, 32);
            let map = random_map(&mut r, &taxonomy, width, height);
            let bytes = to_ppsm_bytes(&map);
            let back = parse_ppsm(&bytes).map_err(|e| e.to_string())?;
            ensure!(back == map, "map {case} changed across a write/read cycle");
            ensure!(
                to_ppsm_bytes(&back) == bytes,
                "map {case} bytes changed across a read/write cycle"
            );
        }

        let golden_map = PanopticPartMap::new(
            2,
            1,
            vec![encode_uid(UidTriple::part(26, 2, 5)).unwrap(), 0],
        )
        .unwrap();
        let golden: [u8; 22] = [
            0x50, 0x50, 0x53, 0x4D, // magic
            0x01, 0x00, // version 1
            0x02, 0x00, 0x00, 0x00, // width 2
            0x01, 0x00, 0x00, 0x00, // height 1
            0x0D, 0xAD, 0x27, 0x00, // uid 2600205
            0x00, 0x00, 0x00, 0x00, // void
        ];
        ensure!(
            to_ppsm_bytes(&golden_map) == golden,
            "golden bytes moved: {:?}",
            to_ppsm_bytes(&golden_map)
        );
        let elapsed = start.elapsed();
        Ok(format!(
            "full uid range, 20 map round trips, golden bytes stable, in {elapsed:?}"
        ))
    });
}
