//! Label universe for panoptic part segmentation: scene classes (things and
//! stuff), the part classes each scene class owns, and the packed integer
//! codec that stores a `(scene, instance, part)` triple in a single uid.
//!
//! Uids come in three forms, told apart by magnitude:
//!
//! * `sid` for semantic-only pixels (`1..=99`),
//! * `sid * 1_000 + iid` for instance pixels (`iid` in `0..=999`),
//! * `sid * 100_000 + iid * 100 + pid` for part pixels (`pid` in `0..=99`).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Packed label id as stored in a label map.
pub type Uid = u32;

/// Largest valid scene class id.
pub const MAX_SID: u32 = 99;
/// Largest valid instance id.
pub const MAX_IID: u32 = 999;
/// Largest valid part id.
pub const MAX_PID: u32 = 99;
/// Largest uid any valid triple can encode to.
pub const MAX_UID: u32 = MAX_SID * FULL_BASE + MAX_IID * PART_BASE + MAX_PID;

const INSTANCE_BASE: u32 = 1_000;
const PART_BASE: u32 = 100;
const FULL_BASE: u32 = 100_000;

/// Errors from [`encode_uid`] and [`decode_uid`].
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum UidError {
    #[error("{what} {value} out of range [{min}, {max}]")]
    Range {
        what: &'static str,
        value: u32,
        min: u32,
        max: u32,
    },
    #[error("part id requires an instance id")]
    PartWithoutInstance,
    #[error("uid {uid} decodes to scene id {sid} outside [1, 99]")]
    Form { uid: u32, sid: u32 },
}

/// A decoded uid: scene class id plus optional instance and part ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct UidTriple {
    pub sid: u32,
    pub iid: Option<u32>,
    pub pid: Option<u32>,
}

impl UidTriple {
    pub fn semantic(sid: u32) -> Self {
        UidTriple { sid, iid: None, pid: None }
    }

    pub fn instance(sid: u32, iid: u32) -> Self {
        UidTriple { sid, iid: Some(iid), pid: None }
    }

    pub fn part(sid: u32, iid: u32, pid: u32) -> Self {
        UidTriple { sid, iid: Some(iid), pid: Some(pid) }
    }
}

/// Packs a triple into a uid. A part id without an instance id is rejected
/// because the packed form cannot represent it.
pub fn encode_uid(triple: UidTriple) -> Result<Uid, UidError> {
    let UidTriple { sid, iid, pid } = triple;
    if !(1..=MAX_SID).contains(&sid) {
        return Err(UidError::Range { what: "scene id", value: sid, min: 1, max: MAX_SID });
    }
    if let Some(iid) = iid {
        if iid > MAX_IID {
            return Err(UidError::Range { what: "instance id", value: iid, min: 0, max: MAX_IID });
        }
    }
    if let Some(pid) = pid {
        if pid > MAX_PID {
            return Err(UidError::Range { what: "part id", value: pid, min: 0, max: MAX_PID });
        }
    }
    match (iid, pid) {
        (None, None) => Ok(sid),
        (Some(iid), None) => Ok(sid * INSTANCE_BASE + iid),
        (Some(iid), Some(pid)) => Ok(sid * FULL_BASE + iid * PART_BASE + pid),
        (None, Some(_)) => Err(UidError::PartWithoutInstance),
    }
}

/// Unpacks a uid, detecting its form by magnitude.
pub fn decode_uid(uid: Uid) -> Result<UidTriple, UidError> {
    if uid < INSTANCE_BASE {
        let sid = uid;
        if sid < 1 {
            return Err(UidError::Form { uid, sid });
        }
        Ok(UidTriple::semantic(sid))
    } else if uid < FULL_BASE {
        let sid = uid / INSTANCE_BASE;
        let iid = uid % INSTANCE_BASE;
        if sid > MAX_SID {
            // Unreachable for u32 inputs below FULL_BASE, kept for clarity.
            return Err(UidError::Form { uid, sid });
        }
        Ok(UidTriple::instance(sid, iid))
    } else {
        let sid = uid / FULL_BASE;
        let rest = uid % FULL_BASE;
        if !(1..=MAX_SID).contains(&sid) {
            return Err(UidError::Form { uid, sid });
        }
        Ok(UidTriple::part(sid, rest / PART_BASE, rest % PART_BASE))
    }
}

/// Whether a scene class is countable (things) or uncountable (stuff).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassKind {
    Thing,
    Stuff,
}

/// A part class owned by one scene class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartSpec {
    pub pid: u32,
    pub name: String,
}

/// One scene class and the part classes it owns. Stuff classes own no parts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSpec {
    pub sid: u32,
    pub name: String,
    pub kind: ClassKind,
    #[serde(default)]
    pub parts: Vec<PartSpec>,
}

impl ClassSpec {
    pub fn has_parts(&self) -> bool {
        !self.parts.is_empty()
    }
}

/// Raw taxonomy document as loaded from JSON, prior to validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaxonomyDoc {
    #[serde(default)]
    pub void_uid: Uid,
    pub classes: Vec<ClassSpec>,
}

/// Errors from [`validate_taxonomy`] and [`Taxonomy::from_json`].
#[derive(Debug, Error)]
pub enum TaxonomyError {
    #[error("taxonomy declares no classes")]
    Empty,
    #[error("duplicate scene class id {0}")]
    DuplicateClass(u32),
    #[error("scene class id {0} outside [1, 99]")]
    ClassIdOutOfRange(u32),
    #[error("duplicate part id {pid} in class {sid}")]
    DuplicatePart { sid: u32, pid: u32 },
    #[error("part id {pid} of class {sid} outside [0, 99]")]
    PartIdOutOfRange { sid: u32, pid: u32 },
    #[error("stuff class {0} declares parts")]
    PartsOnStuff(u32),
    #[error("void uid {0} collides with a class of the taxonomy")]
    VoidCollision(Uid),
    #[error("taxonomy JSON malformed: {0}")]
    Json(#[from] serde_json::Error),
}

/// Validated label universe. Classes are kept sorted by scene id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Taxonomy {
    classes: Vec<ClassSpec>,
    index: BTreeMap<u32, usize>,
    void_uid: Uid,
}

/// Checks a raw document and builds the indexed [`Taxonomy`].
pub fn validate_taxonomy(doc: TaxonomyDoc) -> Result<Taxonomy, TaxonomyError> {
    if doc.classes.is_empty() {
        return Err(TaxonomyError::Empty);
    }
    let mut classes = doc.classes;
    classes.sort_by_key(|c| c.sid);
    let mut index = BTreeMap::new();
    for (pos, class) in classes.iter().enumerate() {
        if class.sid < 1 || class.sid > MAX_SID {
            return Err(TaxonomyError::ClassIdOutOfRange(class.sid));
        }
        if index.insert(class.sid, pos).is_some() {
            return Err(TaxonomyError::DuplicateClass(class.sid));
        }
        if class.kind == ClassKind::Stuff && class.has_parts() {
            return Err(TaxonomyError::PartsOnStuff(class.sid));
        }
        let mut seen = std::collections::HashSet::new();
        for part in &class.parts {
            if part.pid > MAX_PID {
                return Err(TaxonomyError::PartIdOutOfRange { sid: class.sid, pid: part.pid });
            }
            if !seen.insert(part.pid) {
                return Err(TaxonomyError::DuplicatePart { sid: class.sid, pid: part.pid });
            }
        }
    }
    if let Ok(triple) = decode_uid(doc.void_uid) {
        if index.contains_key(&triple.sid) {
            return Err(TaxonomyError::VoidCollision(doc.void_uid));
        }
    }
    Ok(Taxonomy { classes, index, void_uid: doc.void_uid })
}

impl Taxonomy {
    /// Parses and validates a JSON document.
    pub fn from_json(text: &str) -> Result<Self, TaxonomyError> {
        let doc: TaxonomyDoc = serde_json::from_str(text)?;
        validate_taxonomy(doc)
    }

    /// The uid that marks unlabeled pixels (0 unless the document overrides it).
    pub fn void_uid(&self) -> Uid {
        self.void_uid
    }

    /// All classes, sorted by scene id.
    pub fn classes(&self) -> &[ClassSpec] {
        &self.classes
    }

    pub fn class(&self, sid: u32) -> Option<&ClassSpec> {
        self.index.get(&sid).map(|&pos| &self.classes[pos])
    }

    pub fn contains(&self, sid: u32) -> bool {
        self.index.contains_key(&sid)
    }

    /// Whether `sid` exists and owns at least one part class.
    pub fn has_parts(&self, sid: u32) -> bool {
        self.class(sid).is_some_and(ClassSpec::has_parts)
    }

    /// Whether `sid` exists and owns the part class `pid`.
    pub fn owns_pid(&self, sid: u32, pid: u32) -> bool {
        self.class(sid)
            .is_some_and(|c| c.parts.iter().any(|p| p.pid == pid))
    }

    /// Scene ids that own parts, ascending.
    pub fn sids_with_parts(&self) -> Vec<u32> {
        self.classes.iter().filter(|c| c.has_parts()).map(|c| c.sid).collect()
    }

    /// Scene ids that own no parts, ascending.
    pub fn sids_without_parts(&self) -> Vec<u32> {
        self.classes.iter().filter(|c| !c.has_parts()).map(|c| c.sid).collect()
    }

    /// The part label space: every owned `(sid, pid)` pair, ascending.
    pub fn part_labels(&self) -> Vec<(u32, u32)> {
        let mut labels = Vec::new();
        for class in &self.classes {
            for part in &class.parts {
                labels.push((class.sid, part.pid));
            }
        }
        labels.sort_unstable();
        labels
    }

    /// Rebuilds the raw document form, e.g. for canonical serialization.
    pub fn to_doc(&self) -> TaxonomyDoc {
        TaxonomyDoc { void_uid: self.void_uid, classes: self.classes.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_matches_worked_examples() {
        assert_eq!(encode_uid(UidTriple::semantic(7)), Ok(7));
        assert_eq!(encode_uid(UidTriple::instance(26, 2)), Ok(26_002));
        assert_eq!(encode_uid(UidTriple::part(26, 2, 5)), Ok(2_600_205));
    }

    #[test]
    fn decode_matches_worked_examples() {
        assert_eq!(decode_uid(7), Ok(UidTriple::semantic(7)));
        assert_eq!(decode_uid(26_002), Ok(UidTriple::instance(26, 2)));
        assert_eq!(decode_uid(2_600_205), Ok(UidTriple::part(26, 2, 5)));
    }

    #[test]
    fn encode_rejects_out_of_range_fields() {
        assert!(matches!(
            encode_uid(UidTriple::semantic(0)),
            Err(UidError::Range { what: "scene id", .. })
        ));
        assert!(matches!(
            encode_uid(UidTriple::semantic(100)),
            Err(UidError::Range { what: "scene id", .. })
        ));
        assert!(matches!(
            encode_uid(UidTriple::instance(5, 1000)),
            Err(UidError::Range { what: "instance id", .. })
        ));
        assert!(matches!(
            encode_uid(UidTriple::part(5, 0, 100)),
            Err(UidError::Range { what: "part id", .. })
        ));
    }

    #[test]
    fn encode_rejects_part_without_instance() {
        let triple = UidTriple { sid: 5, iid: None, pid: Some(1) };
        assert_eq!(encode_uid(triple), Err(UidError::PartWithoutInstance));
    }

    #[test]
    fn decode_rejects_invalid_forms() {
        assert!(matches!(decode_uid(0), Err(UidError::Form { uid: 0, sid: 0 })));
        assert!(matches!(decode_uid(MAX_UID + 1), Err(UidError::Form { .. })));
        assert!(matches!(decode_uid(u32::MAX), Err(UidError::Form { .. })));
    }

    #[test]
    fn round_trip_covers_every_form_boundary() {
        for uid in [1, 99, 1_000, 1_999, 99_000, 99_999, 100_000, 9_999_999] {
            let triple = decode_uid(uid).unwrap();
            assert_eq!(encode_uid(triple).unwrap(), uid);
        }
    }

    fn small_doc() -> TaxonomyDoc {
        TaxonomyDoc {
            void_uid: 0,
            classes: vec![
                ClassSpec {
                    sid: 26,
                    name: "car".into(),
                    kind: ClassKind::Thing,
                    parts: vec![
                        PartSpec { pid: 1, name: "wheel".into() },
                        PartSpec { pid: 2, name: "body".into() },
                    ],
                },
                ClassSpec { sid: 7, name: "road".into(), kind: ClassKind::Stuff, parts: vec![] },
            ],
        }
    }

    #[test]
    fn validate_accepts_and_indexes_a_small_taxonomy() {
        let tax = validate_taxonomy(small_doc()).unwrap();
        assert_eq!(tax.classes()[0].sid, 7);
        assert_eq!(tax.classes()[1].sid, 26);
        assert!(tax.has_parts(26));
        assert!(!tax.has_parts(7));
        assert!(tax.owns_pid(26, 1));
        assert!(!tax.owns_pid(26, 3));
        assert_eq!(tax.sids_with_parts(), vec![26]);
        assert_eq!(tax.sids_without_parts(), vec![7]);
        assert_eq!(tax.part_labels(), vec![(26, 1), (26, 2)]);
    }

    #[test]
    fn validate_rejects_duplicate_class() {
        let mut doc = small_doc();
        let dup = doc.classes[0].clone();
        doc.classes.push(dup);
        assert!(matches!(validate_taxonomy(doc), Err(TaxonomyError::DuplicateClass(26))));
    }

    #[test]
    fn validate_rejects_duplicate_part() {
        let mut doc = small_doc();
        doc.classes[0].parts.push(PartSpec { pid: 1, name: "spare".into() });
        assert!(matches!(
            validate_taxonomy(doc),
            Err(TaxonomyError::DuplicatePart { sid: 26, pid: 1 })
        ));
    }

    #[test]
    fn validate_rejects_parts_on_stuff() {
        let mut doc = small_doc();
        doc.classes[1].parts.push(PartSpec { pid: 1, name: "lane".into() });
        assert!(matches!(validate_taxonomy(doc), Err(TaxonomyError::PartsOnStuff(7))));
    }

    #[test]
    fn validate_rejects_class_id_out_of_range() {
        let mut doc = small_doc();
        doc.classes[0].sid = 100;
        assert!(matches!(validate_taxonomy(doc), Err(TaxonomyError::ClassIdOutOfRange(100))));
    }

    #[test]
    fn validate_rejects_void_collision() {
        let mut doc = small_doc();
        doc.void_uid = 26_001;
        assert!(matches!(validate_taxonomy(doc), Err(TaxonomyError::VoidCollision(26_001))));
    }

    #[test]
    fn validate_rejects_empty_taxonomy() {
        let doc = TaxonomyDoc { void_uid: 0, classes: vec![] };
        assert!(matches!(validate_taxonomy(doc), Err(TaxonomyError::Empty)));
    }

    #[test]
    fn json_round_trip_preserves_the_document() {
        let tax = validate_taxonomy(small_doc()).unwrap();
        let text = serde_json::to_string(&tax.to_doc()).unwrap();
        let back = Taxonomy::from_json(&text).unwrap();
        assert_eq!(back, tax);
    }

    #[test]
    fn json_rejects_unknown_fields() {
        let text = r#"{"void_uid": 0, "classes": [], "extra": 1}"#;
        assert!(matches!(Taxonomy::from_json(text), Err(TaxonomyError::Json(_))));
    }
}
