//! Seeded forward simulator: run the invariant suite over one configuration
//! and optionally dump every tensor for outside inspection.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use pps_core::decoder::{
    run_invariant_suite, Arch, DecoderError, InvariantReport, QuerySections, SimConfig, Simulation,
};

use crate::files::write_bytes;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ArchChoice {
    /// Grouped update: section-wise mask grouping feeds a gated query update
    V1,
    /// Cross attention: masked cross attention with a dedicated part pass
    V2,
}

impl From<ArchChoice> for Arch {
    fn from(choice: ArchChoice) -> Arch {
        match choice {
            ArchChoice::V1 => Arch::V1,
            ArchChoice::V2 => Arch::V2,
        }
    }
}

fn parse_sections(text: &str) -> Result<QuerySections, String> {
    let fields: Vec<&str> = text.split(',').collect();
    if fields.len() != 3 {
        return Err("expected three comma-separated counts, like 8,8,8".to_string());
    }
    let mut counts = [0usize; 3];
    for (slot, field) in counts.iter_mut().zip(&fields) {
        *slot = field.trim().parse::<usize>().map_err(|err| format!("bad count {field:?}: {err}"))?;
    }
    Ok(QuerySections { thing: counts[0], stuff: counts[1], part: counts[2] })
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Seed for parameters, features and initial queries
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 16)]
    pub height: usize,
    #[arg(long, default_value_t = 16)]
    pub width: usize,
    /// Feature and query channel count
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    /// Self-attention heads; must divide --dim
    #[arg(long, default_value_t = 4)]
    pub heads: usize,
    /// Query counts as thing,stuff,part
    #[arg(long, value_name = "TH,ST,PT", default_value = "8,8,8", value_parser = parse_sections)]
    pub queries: QuerySections,
    #[arg(long, default_value_t = 3)]
    pub stages: usize,
    #[arg(long, value_enum, default_value_t = ArchChoice::V2)]
    pub arch: ArchChoice,
    /// Output classes of the prediction head
    #[arg(long, default_value_t = 10)]
    pub classes: usize,
    /// Group features with hard 0/1 mask weights instead of sigmoids
    #[arg(long)]
    pub binarized_grouping: bool,
    /// Leave positional encoding off the cross-attention keys
    #[arg(long)]
    pub no_pe_on_keys: bool,
    /// Skip the part cross-attention pass; part masks come from the
    /// global pass
    #[arg(long)]
    pub no_pmc: bool,
    /// Dump every tensor as PREFIX_name.json plus PREFIX_name.f32
    #[arg(long, value_name = "PREFIX")]
    pub dump: Option<PathBuf>,
}

impl SimulateArgs {
    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            seed: self.seed,
            height: self.height,
            width: self.width,
            dim: self.dim,
            heads: self.heads,
            sections: self.queries,
            stages: self.stages,
            arch: self.arch.into(),
            classes: self.classes,
            binarized_grouping: self.binarized_grouping,
            pe_on_keys: !self.no_pe_on_keys,
            pmc_enabled: !self.no_pmc,
        }
    }
}

fn internal(err: DecoderError) -> CliError {
    CliError::Invariant(format!("simulation failed: {err}"))
}

fn tensor_path(prefix: &Path, name: &str, ext: &str) -> PathBuf {
    let mut file_name =
        prefix.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    if !file_name.is_empty() {
        file_name.push('_');
    }
    file_name.push_str(name);
    file_name.push('.');
    file_name.push_str(ext);
    match prefix.parent() {
        Some(parent) if !parent.as_os_str().is_empty() => parent.join(file_name),
        _ => PathBuf::from(file_name),
    }
}

/// Writes one tensor as a JSON shape header next to a raw little-endian f32
/// payload.
fn dump_tensor<I>(prefix: &Path, name: &str, shape: &[usize], values: I) -> Result<(), CliError>
where
    I: Iterator<Item = f64>,
{
    let expected: usize = shape.iter().product();
    let mut payload = Vec::with_capacity(expected * 4);
    let mut count = 0usize;
    for value in values {
        payload.extend_from_slice(&(value as f32).to_le_bytes());
        count += 1;
    }
    if count != expected {
        return Err(CliError::Invariant(format!(
            "tensor {name} has {count} values, shape {shape:?} needs {expected}"
        )));
    }
    let data_path = tensor_path(prefix, name, "f32");
    write_bytes(&data_path, &payload)?;
    let data_file = data_path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| format!("{name}.f32"));
    let header = serde_json::json!({
        "name": name,
        "shape": shape,
        "dtype": "f32",
        "data": data_file,
    });
    let text = serde_json::to_string_pretty(&header)
        .map_err(|err| CliError::Format(format!("serializing tensor header: {err}")))?;
    write_bytes(&tensor_path(prefix, name, "json"), format!("{text}\n").as_bytes())
}

fn dump_run(prefix: &Path, cfg: &SimConfig) -> Result<(), CliError> {
    let sim = Simulation::new(*cfg).map_err(internal)?;
    let out = sim.run().map_err(internal)?;
    let (h, w, d) = (cfg.height, cfg.width, cfg.dim);
    let n = cfg.sections.total();

    let scene = sim.scene_features().matrix();
    dump_tensor(prefix, "scene_features", &[h, w, d], scene.iter().copied())?;
    let part = sim.part_features().matrix();
    dump_tensor(prefix, "part_features", &[h, w, d], part.iter().copied())?;
    let queries = sim.initial_queries().matrix();
    dump_tensor(prefix, "initial_queries", &[n, d], queries.iter().copied())?;
    for (index, stage) in out.stages.iter().enumerate() {
        let name = format!("stage{index}_queries");
        dump_tensor(prefix, &name, &[n, d], stage.queries.matrix().iter().copied())?;
        let name = format!("stage{index}_masks");
        dump_tensor(prefix, &name, &[n, h, w], stage.masks.matrix().iter().copied())?;
    }
    dump_tensor(prefix, "final_masks", &[n, h, w], out.masks.matrix().iter().copied())?;
    dump_tensor(prefix, "class_logits", &[n, cfg.classes], out.class_logits.iter().copied())?;
    Ok(())
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<InvariantReport, CliError> {
    let cfg = args.sim_config();
    cfg.validate().map_err(|err| CliError::Usage(err.to_string()))?;
    let report = run_invariant_suite(&cfg).map_err(internal)?;
    for check in &report.checks {
        let verdict = if check.passed { "pass" } else { "FAIL" };
        println!("{} {} ({})", check.name, verdict, check.detail);
    }
    if let Some(prefix) = &args.dump {
        dump_run(prefix, &cfg)?;
    }
    if report.all_passed() {
        println!("all {} invariant checks passed", report.checks.len());
        Ok(report)
    } else {
        let failed = report.checks.iter().filter(|c| !c.passed).count();
        Err(CliError::Invariant(format!(
            "{failed} of {} invariant checks failed",
            report.checks.len()
        )))
    }
}
