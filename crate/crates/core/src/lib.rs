//! Measurement and model-math stack for panoptic part segmentation.
//!
//! The crate covers the full evaluation path for scene parsing with parts:
//! a label taxonomy with a packed uid codec ([`taxonomy`]), label maps with a
//! compact binary format and segment extraction ([`segmap`]), segmentation
//! quality metrics with exact, order-independent accumulation ([`metrics`]),
//! fusion of panoptic and part predictions into one map ([`fusion`]), a
//! ground-truth substitution harness for upper-bound studies ([`analysis`]),
//! bipartite query-to-target assignment with its losses ([`assign`]), and a
//! deterministic forward simulator of a query-based two-branch mask decoder
//! ([`decoder`]).

pub mod analysis;
pub mod assign;
pub mod decoder;
pub mod fusion;
pub mod metrics;
pub mod segmap;
pub mod taxonomy;
