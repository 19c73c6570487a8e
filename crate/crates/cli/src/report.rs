//! Evaluation report document: every metric as an exact fraction next to its
//! rounded percent rendering, plus metadata tying the run to its inputs.

use pps_core::metrics::{build_report, MetricAccumulator, MetricError};
use pps_core::taxonomy::Taxonomy;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// A metric stored both ways: the untouched fraction and the one-decimal
/// percent string derived from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub fraction: f64,
    pub percent: String,
}

impl MetricValue {
    pub fn new(fraction: f64) -> Self {
        MetricValue { fraction, percent: format!("{:.1}", fraction * 100.0) }
    }
}

fn optional(fraction: Option<f64>) -> Option<MetricValue> {
    fraction.map(MetricValue::new)
}

/// One metric split over all classes, the part-bearing ones and the rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriSplit {
    pub all: MetricValue,
    pub with_parts: Option<MetricValue>,
    pub without_parts: Option<MetricValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiouBlock {
    pub scene: MetricValue,
    pub part: Option<MetricValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityBlock {
    pub ssq: MetricValue,
    pub psq: Option<MetricValue>,
    pub pwq: Option<MetricValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFlags {
    pub void_fp_rule: bool,
    pub miou_full_labels: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub tool_version: String,
    pub taxonomy_sha256: String,
    pub image_count: u64,
    pub flags: ReportFlags,
}

/// Pixel counts that explain score loss without affecting any score directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub gt_unlabeled_instance_pixels: u64,
    pub pred_unlabeled_instance_pixels: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub meta: ReportMeta,
    pub pq: TriSplit,
    pub partpq: TriSplit,
    pub miou: MiouBlock,
    pub quality: QualityBlock,
    pub diagnostics: Diagnostics,
}

/// Hex SHA-256 of the taxonomy serialized back to its JSON document form.
pub fn taxonomy_digest(taxonomy: &Taxonomy) -> String {
    let doc = taxonomy.to_doc();
    let json = serde_json::to_string(&doc).expect("taxonomy document serializes");
    let mut hasher = Sha256::new();
    hasher.update(json.as_bytes());
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for byte in digest {
        hex.push_str(&format!("{byte:02x}"));
    }
    hex
}

pub fn document_from_accumulator(acc: &MetricAccumulator) -> Result<ReportDocument, MetricError> {
    let report = build_report(acc)?;
    Ok(ReportDocument {
        meta: ReportMeta {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            taxonomy_sha256: taxonomy_digest(acc.taxonomy()),
            image_count: acc.images(),
            flags: ReportFlags {
                void_fp_rule: acc.cfg().void_fp_rule,
                miou_full_labels: acc.cfg().miou_full_labels,
            },
        },
        pq: TriSplit {
            all: MetricValue::new(report.pq_all),
            with_parts: optional(report.pq_parts),
            without_parts: optional(report.pq_no_parts),
        },
        partpq: TriSplit {
            all: MetricValue::new(report.partpq_all),
            with_parts: optional(report.partpq_parts),
            without_parts: optional(report.partpq_no_parts),
        },
        miou: MiouBlock {
            scene: MetricValue::new(report.miou_scene),
            part: optional(report.miou_part),
        },
        quality: QualityBlock {
            ssq: MetricValue::new(report.ssq),
            psq: optional(report.psq),
            pwq: optional(report.pwq),
        },
        diagnostics: Diagnostics {
            gt_unlabeled_instance_pixels: acc.gt_unlabeled_instance_pixels(),
            pred_unlabeled_instance_pixels: acc.pred_unlabeled_instance_pixels(),
        },
    })
}
