//! Merging a panoptic prediction with a part prediction into one label map.
//!
//! The panoptic map decides the scene structure; the part source only refines
//! pixels of part-bearing classes. Pixels of partless classes are copied
//! through untouched, and a part label that contradicts the panoptic class is
//! discarded (voiding the pixel by default).

use thiserror::Error;

use crate::segmap::{PanopticPartMap, SegmapError};
use crate::taxonomy::{decode_uid, encode_uid, Taxonomy, Uid, UidTriple, MAX_PID};

/// Sentinel in [`PartGrid`] for pixels without a part prediction. Part id 0
/// is valid, so absence needs its own marker.
pub const NO_PART: u32 = u32::MAX;

/// Errors from fusion and decomposition.
#[derive(Debug, Error)]
pub enum FusionError {
    #[error("panoptic input already carries a part id (uid {uid} at pixel {index})")]
    UnexpectedPid { uid: Uid, index: usize },
    #[error("panoptic grid {pan_width}x{pan_height} does not match part grid {part_width}x{part_height}")]
    GridMismatch { pan_width: u32, pan_height: u32, part_width: u32, part_height: u32 },
    #[error("a {width}x{height} part grid needs {expected} entries, got {got}")]
    BadGrid { width: u32, height: u32, expected: usize, got: usize },
    #[error("part id {pid} at pixel {index} outside [0, {MAX_PID}]")]
    PartIdOutOfRange { pid: u32, index: usize },
    #[error("part map uid {uid} at pixel {index} does not decode: {source}")]
    BadPartUid { uid: Uid, index: usize, source: crate::taxonomy::UidError },
    #[error(transparent)]
    Segmap(#[from] SegmapError),
}

/// Fusion switches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FusionConfig {
    /// Void pixels whose part label contradicts the panoptic class
    /// (different scene class, or a part the class does not own). When off,
    /// the panoptic pixel is kept and the part label dropped.
    pub void_on_mismatch: bool,
    /// Keep panoptic pixels of part-bearing classes that received no part
    /// prediction. When off, such pixels become void.
    pub keep_unlabeled_parts: bool,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig { void_on_mismatch: true, keep_unlabeled_parts: true }
    }
}

/// Bare per-pixel part ids, [`NO_PART`] where nothing was predicted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartGrid {
    width: u32,
    height: u32,
    pids: Vec<u32>,
}

impl PartGrid {
    pub fn new(width: u32, height: u32, pids: Vec<u32>) -> Result<Self, FusionError> {
        let expected = width as usize * height as usize;
        if pids.len() != expected {
            return Err(FusionError::BadGrid { width, height, expected, got: pids.len() });
        }
        for (index, &pid) in pids.iter().enumerate() {
            if pid != NO_PART && pid > MAX_PID {
                return Err(FusionError::PartIdOutOfRange { pid, index });
            }
        }
        Ok(PartGrid { width, height, pids })
    }

    /// A grid with no part prediction anywhere.
    pub fn empty(width: u32, height: u32) -> Self {
        PartGrid { width, height, pids: vec![NO_PART; width as usize * height as usize] }
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn pids(&self) -> &[u32] {
        &self.pids
    }
}

/// Where part labels come from: a full label map whose part-form pixels are
/// read, or a bare per-pixel part-id grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PartSource {
    Map(PanopticPartMap),
    Grid(PartGrid),
}

impl PartSource {
    fn dims(&self) -> (u32, u32) {
        match self {
            PartSource::Map(map) => map.dims(),
            PartSource::Grid(grid) => grid.dims(),
        }
    }
}

/// The part label a source offers for one pixel.
enum PartVote {
    None,
    /// An owned part id consistent with the panoptic class.
    Pid(u32),
    /// A part label contradicting the panoptic class.
    Mismatch,
}

fn part_vote(
    parts: &PartSource,
    index: usize,
    sid: u32,
    taxonomy: &Taxonomy,
) -> Result<PartVote, FusionError> {
    match parts {
        PartSource::Map(map) => {
            let uid = map.data()[index];
            if uid == taxonomy.void_uid() {
                return Ok(PartVote::None);
            }
            let triple = decode_uid(uid)
                .map_err(|source| FusionError::BadPartUid { uid, index, source })?;
            let Some(pid) = triple.pid else {
                return Ok(PartVote::None);
            };
            if triple.sid != sid || !taxonomy.owns_pid(sid, pid) {
                return Ok(PartVote::Mismatch);
            }
            Ok(PartVote::Pid(pid))
        }
        PartSource::Grid(grid) => {
            let pid = grid.pids[index];
            if pid == NO_PART {
                return Ok(PartVote::None);
            }
            if !taxonomy.owns_pid(sid, pid) {
                return Ok(PartVote::Mismatch);
            }
            Ok(PartVote::Pid(pid))
        }
    }
}

/// Merges a panoptic map (which must carry no part ids) with a part source.
///
/// Per pixel: void stays void; partless-class pixels are copied; part-class
/// pixels gain the predicted part id when it is consistent, fall back to the
/// panoptic label when there is no prediction (configurable), and are voided
/// on contradiction (configurable). A part prediction on a pixel whose
/// instance id is unknown cannot be encoded and counts as no prediction.
pub fn merge_pps(
    panoptic: &PanopticPartMap,
    parts: &PartSource,
    taxonomy: &Taxonomy,
    cfg: &FusionConfig,
) -> Result<PanopticPartMap, FusionError> {
    if panoptic.dims() != parts.dims() {
        let (pan_width, pan_height) = panoptic.dims();
        let (part_width, part_height) = parts.dims();
        return Err(FusionError::GridMismatch { pan_width, pan_height, part_width, part_height });
    }
    let void = taxonomy.void_uid();
    let mut out = Vec::with_capacity(panoptic.len());
    for (index, &uid) in panoptic.data().iter().enumerate() {
        if uid == void {
            out.push(void);
            continue;
        }
        let triple = decode_uid(uid)
            .map_err(|source| SegmapError::InvalidUid { uid, index, source })?;
        if triple.pid.is_some() {
            return Err(FusionError::UnexpectedPid { uid, index });
        }
        if !taxonomy.contains(triple.sid) {
            return Err(SegmapError::UnknownClass { uid, index, sid: triple.sid }.into());
        }
        if !taxonomy.has_parts(triple.sid) {
            out.push(uid);
            continue;
        }
        let vote = match triple.iid {
            Some(_) => part_vote(parts, index, triple.sid, taxonomy)?,
            // Without an instance id the packed form cannot hold a part id.
            None => PartVote::None,
        };
        let fused = match vote {
            PartVote::Pid(pid) => {
                encode_uid(UidTriple::part(triple.sid, triple.iid.unwrap(), pid))
                    .expect("validated fields always encode")
            }
            PartVote::None => {
                if cfg.keep_unlabeled_parts {
                    uid
                } else {
                    void
                }
            }
            PartVote::Mismatch => {
                if cfg.void_on_mismatch {
                    void
                } else {
                    uid
                }
            }
        };
        out.push(fused);
    }
    Ok(PanopticPartMap::new(panoptic.width(), panoptic.height(), out).expect("same grid"))
}

/// Splits a map into its panoptic component (part ids stripped) and its part
/// component (bare part ids, [`NO_PART`] elsewhere). The inverse of
/// [`merge_pps`] for maps whose part labels are consistent.
pub fn split_parts(
    map: &PanopticPartMap,
    taxonomy: &Taxonomy,
) -> Result<(PanopticPartMap, PartGrid), FusionError> {
    let void = taxonomy.void_uid();
    let mut panoptic = Vec::with_capacity(map.len());
    let mut pids = Vec::with_capacity(map.len());
    for (index, &uid) in map.data().iter().enumerate() {
        if uid == void {
            panoptic.push(void);
            pids.push(NO_PART);
            continue;
        }
        let triple = decode_uid(uid)
            .map_err(|source| SegmapError::InvalidUid { uid, index, source })?;
        if !taxonomy.contains(triple.sid) {
            return Err(SegmapError::UnknownClass { uid, index, sid: triple.sid }.into());
        }
        match triple.pid {
            Some(pid) => {
                let stripped = encode_uid(UidTriple::instance(triple.sid, triple.iid.unwrap()))
                    .expect("decoded fields always encode");
                panoptic.push(stripped);
                pids.push(pid);
            }
            None => {
                panoptic.push(uid);
                pids.push(NO_PART);
            }
        }
    }
    let (width, height) = map.dims();
    Ok((
        PanopticPartMap::new(width, height, panoptic).expect("same grid"),
        PartGrid::new(width, height, pids).expect("pids decode in range"),
    ))
}
