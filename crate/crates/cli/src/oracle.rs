//! Ground-truth substitution analysis: evaluate predictions as given, then
//! with the panoptic half replaced by ground truth, then with the part half
//! replaced, to attribute error to one component or the other.

use std::path::PathBuf;

use clap::Args;
use pps_core::analysis::run_oracle;
use pps_core::fusion::{FusionConfig, PartSource};
use pps_core::metrics::{MetricConfig, MetricReport};
use pps_core::segmap::PanopticPartMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::evaluate::build_pool;
use crate::files::{load_map, load_taxonomy, pair_directories, write_bytes};
use crate::CliError;

#[derive(Debug, Clone, Args)]
pub struct OracleArgs {
    /// Directory of ground-truth .ppsm maps
    #[arg(long, value_name = "DIR")]
    pub gt: PathBuf,
    /// Directory of predicted panoptic .ppsm maps
    #[arg(long, value_name = "DIR")]
    pub pred_panoptic: PathBuf,
    /// Directory of predicted part .ppsm maps
    #[arg(long, value_name = "DIR")]
    pub pred_part: PathBuf,
    /// Taxonomy JSON file
    #[arg(long, value_name = "FILE")]
    pub taxonomy: PathBuf,
    /// Write the report array here instead of stdout
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Worker threads for loading; 0 picks one per core
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
}

/// One substitution setting with the metrics it produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleEntry {
    pub setting: String,
    pub metrics: MetricReport,
}

pub fn cmd_oracle(args: &OracleArgs) -> Result<Vec<OracleEntry>, CliError> {
    let taxonomy = load_taxonomy(&args.taxonomy)?;
    let triples = pair_directories(&[&args.gt, &args.pred_panoptic, &args.pred_part])?;

    let pool = build_pool(args.threads)?;
    type LoadedTriple = (PanopticPartMap, PanopticPartMap, PartSource);
    let loaded: Result<Vec<LoadedTriple>, CliError> = pool.install(|| {
        triples
            .par_iter()
            .map(|(_, paths)| {
                let gt = load_map(&paths[0])?;
                let panoptic = load_map(&paths[1])?;
                let parts = PartSource::Map(load_map(&paths[2])?);
                Ok((gt, panoptic, parts))
            })
            .collect()
    });
    let mut gts = Vec::new();
    let mut panoptics = Vec::new();
    let mut parts = Vec::new();
    for (gt, panoptic, part) in loaded? {
        gts.push(gt);
        panoptics.push(panoptic);
        parts.push(part);
    }

    let runs = run_oracle(
        &gts,
        &panoptics,
        &parts,
        &taxonomy,
        &MetricConfig::default(),
        &FusionConfig::default(),
    )
    .map_err(|err| CliError::Format(err.to_string()))?;
    let entries: Vec<OracleEntry> = runs
        .into_iter()
        .map(|run| OracleEntry { setting: run.setting.label().to_string(), metrics: run.report })
        .collect();

    let json = serde_json::to_string_pretty(&entries)
        .map_err(|err| CliError::Format(format!("serializing report: {err}")))?;
    match &args.out {
        Some(path) => write_bytes(path, format!("{json}\n").as_bytes())?,
        None => println!("{json}"),
    }
    Ok(entries)
}
