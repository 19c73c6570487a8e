//! Runtime invariant checks over simulated decoder runs: softmax
//! normalization, gate ranges, masked invariance, within-section
//! permutation equivariance, shape preservation and bitwise determinism.

use ndarray::Array2;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ops::{masked_cross_attention_traced, positional_encoding};
use super::params::{seeded_matrix, StageParams};
use super::stage::{decoder_stage_v1_traced, decoder_stage_v2_traced, Simulation, StageOutput};
use super::{
    Arch, DecoderError, FeatureMap, MaskLogits, QuerySet, SimConfig, EQUIV_TOL, MASKED_TOL,
    SOFTMAX_TOL,
};

/// Quantities recorded while a simulation runs, for the invariant suite.
#[derive(Debug, Default)]
pub struct SimTrace {
    /// One entry per softmax application: a label and that batch's row sums.
    pub attention_row_sums: Vec<(String, Vec<f64>)>,
    /// Every gate activation produced by dynamic updates.
    pub gates: Vec<f64>,
}

/// Outcome of a single invariant check.
#[derive(Debug, Clone)]
pub struct InvariantCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// All check outcomes for one configuration.
#[derive(Debug, Clone)]
pub struct InvariantReport {
    pub checks: Vec<InvariantCheck>,
}

impl InvariantReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|check| check.passed)
    }
}

fn bits_equal(a: &Array2<f64>, b: &Array2<f64>) -> bool {
    a.shape() == b.shape()
        && a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits())
}

fn softmax_check(trace: &SimTrace) -> InvariantCheck {
    let mut worst = 0.0f64;
    let mut rows = 0usize;
    for (_, sums) in &trace.attention_row_sums {
        for &sum in sums {
            worst = worst.max((sum - 1.0).abs());
            rows += 1;
        }
    }
    InvariantCheck {
        name: "softmax_row_sums",
        passed: rows > 0 && worst <= SOFTMAX_TOL,
        detail: format!("max |row sum - 1| = {worst:.3e} over {rows} rows"),
    }
}

fn gate_check(cfg: &SimConfig, trace: &SimTrace) -> Result<InvariantCheck, DecoderError> {
    let gates = if trace.gates.is_empty() {
        // Only the joint-update stage exercises the gates; collect them from
        // a v1 run of the same configuration.
        let mut aux = SimTrace::default();
        let v1_cfg = SimConfig { arch: Arch::V1, ..*cfg };
        Simulation::new(v1_cfg)?.run_traced(Some(&mut aux))?;
        aux.gates
    } else {
        trace.gates.clone()
    };
    let min = gates.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = gates.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(InvariantCheck {
        name: "gate_range",
        passed: !gates.is_empty() && min > 0.0 && max < 1.0,
        detail: format!("{} gates in [{min:.3e}, {max:.6}]", gates.len()),
    })
}

fn masked_invariance_check(cfg: &SimConfig) -> Result<InvariantCheck, DecoderError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let params = StageParams::seeded(&mut rng, cfg.dim, cfg.heads, cfg.classes);
    let n = cfg.sections.total();
    let pixels = cfg.height * cfg.width;
    let queries = QuerySet::new(cfg.sections, seeded_matrix(&mut rng, n, cfg.dim, cfg.dim))?;
    let features = FeatureMap::new(
        cfg.height,
        cfg.width,
        seeded_matrix(&mut rng, pixels, cfg.dim, cfg.dim),
    )?;
    // Row r may attend pixel p exactly when r+p is even, so every row keeps
    // some allowed pixels and row 0 is blind to the odd ones.
    let masks = MaskLogits::new(
        cfg.height,
        cfg.width,
        Array2::from_shape_fn((n, pixels), |(r, p)| if (r + p) % 2 == 0 { 3.0 } else { -3.0 }),
    )?;
    let mut edited = features.clone();
    for p in (1..pixels).step_by(2) {
        for c in 0..cfg.dim {
            edited.matrix_mut()[[p, c]] += 5.0;
        }
    }
    let pe = if cfg.pe_on_keys {
        Some(positional_encoding(cfg.height, cfg.width, cfg.dim)?)
    } else {
        None
    };
    let (base, _) = masked_cross_attention_traced(
        &queries,
        &masks,
        &features,
        &params.cross_scene,
        pe.as_ref(),
        None,
        "masked",
    )?;
    let (moved, _) = masked_cross_attention_traced(
        &queries,
        &masks,
        &edited,
        &params.cross_scene,
        pe.as_ref(),
        None,
        "masked",
    )?;
    let mut worst = 0.0f64;
    for c in 0..cfg.dim {
        worst = worst.max((base.matrix()[[0, c]] - moved.matrix()[[0, c]]).abs());
    }
    Ok(InvariantCheck {
        name: "masked_invariance",
        passed: worst <= MASKED_TOL,
        detail: format!("max blind-row delta = {worst:.3e}"),
    })
}

fn run_stage(
    cfg: &SimConfig,
    sim: &Simulation,
    queries: &QuerySet,
    masks: &MaskLogits,
) -> Result<(QuerySet, MaskLogits), DecoderError> {
    let params = &sim.stage_params()[sim.stage_params().len() - 1];
    match cfg.arch {
        Arch::V1 => decoder_stage_v1_traced(
            queries,
            masks,
            sim.scene_features(),
            sim.part_features(),
            params,
            cfg.binarized_grouping,
            None,
        ),
        Arch::V2 => decoder_stage_v2_traced(
            queries,
            masks,
            sim.scene_features(),
            sim.part_features(),
            params,
            cfg.pe_on_keys,
            cfg.pmc_enabled,
            None,
        ),
    }
}

fn equivariance_check(cfg: &SimConfig, first: &StageOutput) -> Result<InvariantCheck, DecoderError> {
    let sim = Simulation::new(*cfg)?;
    let n = cfg.sections.total();
    // Rotate each section by one position; output row i reads input row
    // perm[i].
    let mut perm: Vec<usize> = (0..n).collect();
    for range in [
        cfg.sections.thing_range(),
        cfg.sections.stuff_range(),
        cfg.sections.part_range(),
    ] {
        let len = range.len();
        if len < 2 {
            continue;
        }
        for (offset, slot) in perm[range.clone()].iter_mut().enumerate() {
            *slot = range.start + (offset + 1) % len;
        }
    }

    let base = run_stage(cfg, &sim, &first.queries, &first.masks)?;

    let query_values = Array2::from_shape_fn((n, cfg.dim), |(i, j)| {
        first.queries.matrix()[[perm[i], j]]
    });
    let pixels = cfg.height * cfg.width;
    let mask_values = Array2::from_shape_fn((n, pixels), |(i, p)| {
        first.masks.matrix()[[perm[i], p]]
    });
    let permuted_queries = QuerySet::new(cfg.sections, query_values)?;
    let permuted_masks = MaskLogits::new(cfg.height, cfg.width, mask_values)?;
    let shuffled = run_stage(cfg, &sim, &permuted_queries, &permuted_masks)?;

    let mut worst = 0.0f64;
    for (i, &src) in perm.iter().enumerate() {
        for j in 0..cfg.dim {
            worst = worst.max((shuffled.0.matrix()[[i, j]] - base.0.matrix()[[src, j]]).abs());
        }
        for p in 0..pixels {
            worst = worst.max((shuffled.1.matrix()[[i, p]] - base.1.matrix()[[src, p]]).abs());
        }
    }
    Ok(InvariantCheck {
        name: "section_equivariance",
        passed: worst <= EQUIV_TOL,
        detail: format!("max permuted-run delta = {worst:.3e}"),
    })
}

fn shape_check(cfg: &SimConfig, stages: &[StageOutput], final_masks: &MaskLogits, class_logits: &Array2<f64>) -> InvariantCheck {
    let n = cfg.sections.total();
    let pixels = cfg.height * cfg.width;
    let stages_ok = stages.len() == cfg.stages
        && stages.iter().all(|stage| {
            stage.queries.matrix().shape() == [n, cfg.dim]
                && stage.masks.matrix().shape() == [n, pixels]
        });
    let heads_ok = final_masks.matrix().shape() == [n, pixels]
        && class_logits.shape() == [n, cfg.classes];
    InvariantCheck {
        name: "shape_preservation",
        passed: stages_ok && heads_ok,
        detail: format!(
            "{} stages of [{n}, {}] queries and [{n}, {pixels}] masks, classes [{n}, {}]",
            stages.len(),
            cfg.dim,
            cfg.classes
        ),
    }
}

fn determinism_check(cfg: &SimConfig) -> Result<InvariantCheck, DecoderError> {
    let a = Simulation::new(*cfg)?.run()?;
    let b = Simulation::new(*cfg)?.run()?;
    let stages_equal = a.stages.len() == b.stages.len()
        && a.stages.iter().zip(&b.stages).all(|(x, y)| {
            bits_equal(x.queries.matrix(), y.queries.matrix())
                && bits_equal(x.masks.matrix(), y.masks.matrix())
        });
    let heads_equal =
        bits_equal(a.masks.matrix(), b.masks.matrix()) && bits_equal(&a.class_logits, &b.class_logits);
    Ok(InvariantCheck {
        name: "determinism",
        passed: stages_equal && heads_equal,
        detail: if stages_equal && heads_equal {
            "two fresh runs agree bitwise".to_string()
        } else {
            "fresh runs diverged".to_string()
        },
    })
}

/// Runs the full invariant suite for one configuration: a traced simulation
/// feeds the softmax and gate checks, separate constructions probe masked
/// invariance and section equivariance, and two fresh runs probe
/// determinism.
pub fn run_invariant_suite(cfg: &SimConfig) -> Result<InvariantReport, DecoderError> {
    cfg.validate()?;
    let mut trace = SimTrace::default();
    let out = Simulation::new(*cfg)?.run_traced(Some(&mut trace))?;

    let checks = vec![
        softmax_check(&trace),
        gate_check(cfg, &trace)?,
        masked_invariance_check(cfg)?,
        equivariance_check(cfg, &out.stages[0])?,
        shape_check(cfg, &out.stages, &out.masks, &out.class_logits),
        determinism_check(cfg)?,
    ];
    Ok(InvariantReport { checks })
}
