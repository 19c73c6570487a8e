//! Fuse a panoptic map with a part map into one combined .ppsm file.

use std::path::PathBuf;

use clap::Args;
use pps_core::fusion::{merge_pps, FusionConfig, PartSource};

use crate::files::{load_map, load_taxonomy, save_map};
use crate::CliError;

#[derive(Debug, Clone, Args)]
pub struct MergeArgs {
    /// Panoptic .ppsm map (scene labels and instance ids, no part digits)
    #[arg(long, value_name = "FILE")]
    pub panoptic: PathBuf,
    /// Part .ppsm map on the same grid
    #[arg(long, value_name = "FILE")]
    pub parts: PathBuf,
    /// Taxonomy JSON file
    #[arg(long, value_name = "FILE")]
    pub taxonomy: PathBuf,
    /// Output .ppsm path
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Keep the panoptic label when the part vote names a part the scene
    /// class does not own, instead of voiding the pixel
    #[arg(long)]
    pub keep_mismatch: bool,
    /// Void part-class pixels that received no part vote, instead of
    /// keeping them partless
    #[arg(long)]
    pub void_unlabeled_parts: bool,
}

impl MergeArgs {
    pub fn fusion_config(&self) -> FusionConfig {
        FusionConfig {
            void_on_mismatch: !self.keep_mismatch,
            keep_unlabeled_parts: !self.void_unlabeled_parts,
        }
    }
}

pub fn cmd_merge(args: &MergeArgs) -> Result<(), CliError> {
    let taxonomy = load_taxonomy(&args.taxonomy)?;
    let panoptic = load_map(&args.panoptic)?;
    let parts = PartSource::Map(load_map(&args.parts)?);
    let fused = merge_pps(&panoptic, &parts, &taxonomy, &args.fusion_config())
        .map_err(|err| CliError::Format(err.to_string()))?;
    save_map(&args.out, &fused)
}
