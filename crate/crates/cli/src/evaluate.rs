//! Batch evaluation of a prediction directory against ground truth. Images
//! are scored in parallel and the per-image tallies merged exactly, so the
//! report does not depend on the worker count.

use std::path::PathBuf;

use clap::Args;
use pps_core::metrics::{evaluate_image, merge_accumulators, MetricAccumulator, MetricConfig};
use rayon::prelude::*;

use crate::files::{load_map, load_taxonomy, pair_directories, write_bytes};
use crate::report::{document_from_accumulator, ReportDocument};
use crate::CliError;

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// Directory of ground-truth .ppsm maps
    #[arg(long, value_name = "DIR")]
    pub gt: PathBuf,
    /// Directory of predicted .ppsm maps, paired with ground truth by stem
    #[arg(long, value_name = "DIR")]
    pub pred: PathBuf,
    /// Taxonomy JSON file
    #[arg(long, value_name = "FILE")]
    pub taxonomy: PathBuf,
    /// Write the report here instead of stdout
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Worker threads; 0 picks one per core
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    /// Count every unmatched prediction as a false positive, even when it
    /// mostly covers unlabeled ground truth
    #[arg(long)]
    pub no_void_fp_rule: bool,
    /// Average mIoU over the full label space instead of present labels
    #[arg(long)]
    pub miou_full_labels: bool,
}

impl EvaluateArgs {
    pub fn metric_config(&self) -> MetricConfig {
        MetricConfig {
            void_fp_rule: !self.no_void_fp_rule,
            miou_full_labels: self.miou_full_labels,
        }
    }
}

pub(crate) fn build_pool(threads: usize) -> Result<rayon::ThreadPool, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if threads > 0 {
        builder = builder.num_threads(threads);
    }
    builder.build().map_err(|err| CliError::Format(format!("cannot start thread pool: {err}")))
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<ReportDocument, CliError> {
    let taxonomy = load_taxonomy(&args.taxonomy)?;
    let pairs = pair_directories(&[&args.gt, &args.pred])?;
    let cfg = args.metric_config();

    let pool = build_pool(args.threads)?;
    let per_image: Result<Vec<MetricAccumulator>, CliError> = pool.install(|| {
        pairs
            .par_iter()
            .map(|(stem, paths)| {
                let gt = load_map(&paths[0])?;
                let pred = load_map(&paths[1])?;
                evaluate_image(&gt, &pred, &taxonomy, &cfg)
                    .map_err(|err| CliError::Format(format!("{stem}: {err}")))
            })
            .collect()
    });

    let mut total = MetricAccumulator::new(taxonomy, cfg);
    for acc in per_image? {
        total = merge_accumulators(total, acc)
            .map_err(|err| CliError::Format(format!("merging tallies: {err}")))?;
    }

    let doc = document_from_accumulator(&total)
        .map_err(|err| CliError::Format(format!("building report: {err}")))?;
    let json = serde_json::to_string_pretty(&doc)
        .map_err(|err| CliError::Format(format!("serializing report: {err}")))?;
    match &args.out {
        Some(path) => write_bytes(path, format!("{json}\n").as_bytes())?,
        None => println!("{json}"),
    }
    Ok(doc)
}
