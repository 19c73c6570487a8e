//! Label-map container, the PPSM binary codec, and segment extraction.
//!
//! A map stores one uid per pixel in row-major order. The PPSM byte layout is
//! magic `"PPSM"`, version `u16`, width `u32`, height `u32`, then
//! `width * height` uids, all little-endian.

use std::collections::HashMap;
use std::io::{self, Read, Write};

use thiserror::Error;

use crate::taxonomy::{decode_uid, ClassKind, Taxonomy, Uid, UidError};

pub const PPSM_MAGIC: [u8; 4] = *b"PPSM";
pub const PPSM_VERSION: u16 = 1;

/// Sentinel in [`SegmentSet::segment_index_at`] pixel grids for void pixels.
pub const NO_SEGMENT: u32 = u32::MAX;

/// Errors from map construction, the PPSM codec, and segment extraction.
#[derive(Debug, Error)]
pub enum SegmapError {
    #[error("bad magic {0:?}, expected {PPSM_MAGIC:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported PPSM version {0}")]
    UnsupportedVersion(u16),
    #[error("truncated stream: need {expected} bytes, got {got}")]
    Truncated { expected: usize, got: usize },
    #[error("{0} trailing bytes after the pixel payload")]
    TrailingBytes(usize),
    #[error("a {width}x{height} grid needs {expected} uids, got {got}")]
    DimensionMismatch { width: u32, height: u32, expected: usize, got: usize },
    #[error("uid {uid} at pixel {index} does not decode: {source}")]
    InvalidUid { uid: Uid, index: usize, source: UidError },
    #[error("uid {uid} at pixel {index} references scene class {sid} missing from the taxonomy")]
    UnknownClass { uid: Uid, index: usize, sid: u32 },
    #[error("scene class {0} owns no part classes")]
    NotAPartClass(u32),
    #[error("segment pixel index {index} lies outside a {width}x{height} map")]
    ForeignSegment { index: u32, width: u32, height: u32 },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A per-pixel uid grid in row-major order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PanopticPartMap {
    width: u32,
    height: u32,
    data: Vec<Uid>,
}

impl PanopticPartMap {
    pub fn new(width: u32, height: u32, data: Vec<Uid>) -> Result<Self, SegmapError> {
        let expected = width as usize * height as usize;
        if data.len() != expected {
            return Err(SegmapError::DimensionMismatch {
                width,
                height,
                expected,
                got: data.len(),
            });
        }
        Ok(PanopticPartMap { width, height, data })
    }

    /// A map with every pixel set to `uid`.
    pub fn filled(width: u32, height: u32, uid: Uid) -> Self {
        PanopticPartMap {
            width,
            height,
            data: vec![uid; width as usize * height as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[Uid] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Uid] {
        &mut self.data
    }

    /// Row-major index of `(x, y)`.
    pub fn idx(&self, x: u32, y: u32) -> usize {
        debug_assert!(x < self.width && y < self.height);
        y as usize * self.width as usize + x as usize
    }

    pub fn get(&self, x: u32, y: u32) -> Uid {
        self.data[self.idx(x, y)]
    }

    pub fn set(&mut self, x: u32, y: u32, uid: Uid) {
        let idx = self.idx(x, y);
        self.data[idx] = uid;
    }
}

/// Reads a PPSM stream into a map.
pub fn read_ppsm<R: Read>(mut reader: R) -> Result<PanopticPartMap, SegmapError> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    parse_ppsm(&bytes)
}

/// Parses PPSM bytes into a map.
pub fn parse_ppsm(bytes: &[u8]) -> Result<PanopticPartMap, SegmapError> {
    const HEADER: usize = 4 + 2 + 4 + 4;
    if bytes.len() < HEADER {
        return Err(SegmapError::Truncated { expected: HEADER, got: bytes.len() });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if magic != PPSM_MAGIC {
        return Err(SegmapError::BadMagic(magic));
    }
    let version = u16::from_le_bytes(bytes[4..6].try_into().unwrap());
    if version != PPSM_VERSION {
        return Err(SegmapError::UnsupportedVersion(version));
    }
    let width = u32::from_le_bytes(bytes[6..10].try_into().unwrap());
    let height = u32::from_le_bytes(bytes[10..14].try_into().unwrap());
    let pixels = width as usize * height as usize;
    let expected = HEADER + pixels * 4;
    if bytes.len() < expected {
        return Err(SegmapError::Truncated { expected, got: bytes.len() });
    }
    if bytes.len() > expected {
        return Err(SegmapError::TrailingBytes(bytes.len() - expected));
    }
    let data = bytes[HEADER..]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    PanopticPartMap::new(width, height, data)
}

/// Writes a map as a PPSM stream.
pub fn write_ppsm<W: Write>(map: &PanopticPartMap, mut writer: W) -> Result<(), SegmapError> {
    writer.write_all(&to_ppsm_bytes(map))?;
    Ok(())
}

/// Serializes a map to PPSM bytes.
pub fn to_ppsm_bytes(map: &PanopticPartMap) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(14 + map.len() * 4);
    bytes.extend_from_slice(&PPSM_MAGIC);
    bytes.extend_from_slice(&PPSM_VERSION.to_le_bytes());
    bytes.extend_from_slice(&map.width().to_le_bytes());
    bytes.extend_from_slice(&map.height().to_le_bytes());
    for uid in map.data() {
        bytes.extend_from_slice(&uid.to_le_bytes());
    }
    bytes
}

/// Sorted run-length set of row-major pixel indices.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Runs {
    runs: Vec<(u32, u32)>,
    len: u64,
}

impl Runs {
    /// Appends an index. Indices must arrive strictly increasing.
    pub fn push_index(&mut self, index: u32) {
        if let Some(last) = self.runs.last_mut() {
            debug_assert!(index >= last.0 + last.1, "indices must be strictly increasing");
            if index == last.0 + last.1 {
                last.1 += 1;
                self.len += 1;
                return;
            }
        }
        self.runs.push((index, 1));
        self.len += 1;
    }

    pub fn from_indices<I: IntoIterator<Item = u32>>(indices: I) -> Self {
        let mut runs = Runs::default();
        for index in indices {
            runs.push_index(index);
        }
        runs
    }

    /// Number of pixels in the set.
    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn runs(&self) -> &[(u32, u32)] {
        &self.runs
    }

    /// Iterates the pixel indices in ascending order.
    pub fn iter(&self) -> impl Iterator<Item = u32> + '_ {
        self.runs.iter().flat_map(|&(start, len)| start..start + len)
    }

    /// Size of the intersection with another set.
    pub fn intersection_len(&self, other: &Runs) -> u64 {
        let mut total = 0u64;
        let (mut i, mut j) = (0, 0);
        while i < self.runs.len() && j < other.runs.len() {
            let (a0, alen) = self.runs[i];
            let (b0, blen) = other.runs[j];
            let (a1, b1) = (a0 + alen, b0 + blen);
            let lo = a0.max(b0);
            let hi = a1.min(b1);
            if hi > lo {
                total += (hi - lo) as u64;
            }
            if a1 <= b1 {
                i += 1;
            } else {
                j += 1;
            }
        }
        total
    }

    /// Walks the union of two sets, yielding each index with membership flags.
    pub fn union_walk<'a>(&'a self, other: &'a Runs) -> impl Iterator<Item = (u32, bool, bool)> + 'a {
        UnionWalk {
            a: self.runs.as_slice(),
            b: other.runs.as_slice(),
            ai: 0,
            bi: 0,
            a_next: self.runs.first().map(|r| r.0),
            b_next: other.runs.first().map(|r| r.0),
        }
    }
}

struct UnionWalk<'a> {
    a: &'a [(u32, u32)],
    b: &'a [(u32, u32)],
    ai: usize,
    bi: usize,
    a_next: Option<u32>,
    b_next: Option<u32>,
}

impl UnionWalk<'_> {
    fn advance_a(&mut self) {
        let (start, len) = self.a[self.ai];
        let cur = self.a_next.unwrap();
        if cur + 1 < start + len {
            self.a_next = Some(cur + 1);
        } else {
            self.ai += 1;
            self.a_next = self.a.get(self.ai).map(|r| r.0);
        }
    }

    fn advance_b(&mut self) {
        let (start, len) = self.b[self.bi];
        let cur = self.b_next.unwrap();
        if cur + 1 < start + len {
            self.b_next = Some(cur + 1);
        } else {
            self.bi += 1;
            self.b_next = self.b.get(self.bi).map(|r| r.0);
        }
    }
}

impl Iterator for UnionWalk<'_> {
    type Item = (u32, bool, bool);

    fn next(&mut self) -> Option<Self::Item> {
        match (self.a_next, self.b_next) {
            (None, None) => None,
            (Some(a), None) => {
                self.advance_a();
                Some((a, true, false))
            }
            (None, Some(b)) => {
                self.advance_b();
                Some((b, false, true))
            }
            (Some(a), Some(b)) => {
                if a < b {
                    self.advance_a();
                    Some((a, true, false))
                } else if b < a {
                    self.advance_b();
                    Some((b, false, true))
                } else {
                    self.advance_a();
                    self.advance_b();
                    Some((a, true, true))
                }
            }
        }
    }
}

/// One extracted segment: a scene class, an optional instance id, and its
/// pixel set. Thing pixels in semantic-only form and stuff pixels both yield
/// `instance: None`; all pixels of a stuff class collapse into one segment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub class_id: u32,
    pub instance: Option<u32>,
    pub pixels: Runs,
}

impl Segment {
    pub fn pixel_count(&self) -> u64 {
        self.pixels.len()
    }
}

/// All segments of one map, with a reverse pixel-to-segment grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentSet {
    width: u32,
    height: u32,
    segments: Vec<Segment>,
    pixel_segment: Vec<u32>,
    void_pixels: u64,
    unlabeled_instance_pixels: u64,
}

impl SegmentSet {
    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Index into [`segments`](Self::segments) for a pixel, `None` for void.
    pub fn segment_index_at(&self, pixel: usize) -> Option<usize> {
        match self.pixel_segment[pixel] {
            NO_SEGMENT => None,
            idx => Some(idx as usize),
        }
    }

    /// Raw pixel-to-segment grid with [`NO_SEGMENT`] marking void.
    pub fn pixel_segments(&self) -> &[u32] {
        &self.pixel_segment
    }

    pub fn void_pixels(&self) -> u64 {
        self.void_pixels
    }

    /// Pixels of thing classes that carried no instance id.
    pub fn unlabeled_instance_pixels(&self) -> u64 {
        self.unlabeled_instance_pixels
    }
}

/// Groups the pixels of a map into segments.
///
/// Every non-void uid must decode and reference a known scene class. Part ids
/// never split segments; they are measured separately. Segments come out
/// sorted by class id, then by instance id with unlabeled instances last.
pub fn extract_segments(
    map: &PanopticPartMap,
    taxonomy: &Taxonomy,
) -> Result<SegmentSet, SegmapError> {
    // Instance ids fit in 0..=999, so u32::MAX safely sorts unlabeled last.
    const UNLABELED: u32 = u32::MAX;
    let void = taxonomy.void_uid();
    let mut keys: Vec<(u32, u32)> = Vec::new();
    let mut key_index: HashMap<(u32, u32), u32> = HashMap::new();
    let mut provisional: Vec<u32> = Vec::with_capacity(map.len());
    let mut void_pixels = 0u64;
    let mut unlabeled_instance_pixels = 0u64;

    for (index, &uid) in map.data().iter().enumerate() {
        if uid == void {
            provisional.push(NO_SEGMENT);
            void_pixels += 1;
            continue;
        }
        let triple = decode_uid(uid)
            .map_err(|source| SegmapError::InvalidUid { uid, index, source })?;
        let class = taxonomy
            .class(triple.sid)
            .ok_or(SegmapError::UnknownClass { uid, index, sid: triple.sid })?;
        let key = match (class.kind, triple.iid) {
            (ClassKind::Thing, Some(iid)) => (triple.sid, iid),
            (ClassKind::Thing, None) => {
                unlabeled_instance_pixels += 1;
                (triple.sid, UNLABELED)
            }
            // Stuff is uncountable: any instance id collapses into the class.
            (ClassKind::Stuff, _) => (triple.sid, UNLABELED),
        };
        let next = keys.len() as u32;
        let slot = *key_index.entry(key).or_insert_with(|| {
            keys.push(key);
            next
        });
        provisional.push(slot);
    }

    let mut order: Vec<u32> = (0..keys.len() as u32).collect();
    order.sort_unstable_by_key(|&slot| keys[slot as usize]);
    let mut remap = vec![0u32; keys.len()];
    for (rank, &slot) in order.iter().enumerate() {
        remap[slot as usize] = rank as u32;
    }

    let mut segments: Vec<Segment> = order
        .iter()
        .map(|&slot| {
            let (sid, inst) = keys[slot as usize];
            Segment {
                class_id: sid,
                instance: (inst != UNLABELED).then_some(inst),
                pixels: Runs::default(),
            }
        })
        .collect();

    let mut pixel_segment = provisional;
    for (index, slot) in pixel_segment.iter_mut().enumerate() {
        if *slot == NO_SEGMENT {
            continue;
        }
        *slot = remap[*slot as usize];
        segments[*slot as usize].pixels.push_index(index as u32);
    }

    Ok(SegmentSet {
        width: map.width(),
        height: map.height(),
        segments,
        pixel_segment,
        void_pixels,
        unlabeled_instance_pixels,
    })
}

/// Pixel counts per part id within one segment.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PartHistogram {
    /// Pixels per part id, including part ids the class does not own.
    pub counts: std::collections::BTreeMap<u32, u64>,
    /// Pixels carrying no part id.
    pub unlabeled: u64,
}

/// Tallies part ids over the pixels of a segment of a part-bearing class.
pub fn part_histogram(
    map: &PanopticPartMap,
    segment: &Segment,
    taxonomy: &Taxonomy,
) -> Result<PartHistogram, SegmapError> {
    if !taxonomy.has_parts(segment.class_id) {
        return Err(SegmapError::NotAPartClass(segment.class_id));
    }
    let mut histogram = PartHistogram::default();
    for index in segment.pixels.iter() {
        let uid = *map.data().get(index as usize).ok_or(SegmapError::ForeignSegment {
            index,
            width: map.width(),
            height: map.height(),
        })?;
        let triple = decode_uid(uid)
            .map_err(|source| SegmapError::InvalidUid { uid, index: index as usize, source })?;
        match triple.pid {
            Some(pid) => *histogram.counts.entry(pid).or_insert(0) += 1,
            None => histogram.unlabeled += 1,
        }
    }
    Ok(histogram)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::{validate_taxonomy, ClassSpec, PartSpec, TaxonomyDoc};

    fn taxonomy() -> Taxonomy {
        validate_taxonomy(TaxonomyDoc {
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
        })
        .unwrap()
    }

    #[test]
    fn golden_bytes_for_a_single_pixel_map() {
        let map = PanopticPartMap::new(1, 1, vec![23]).unwrap();
        let bytes = to_ppsm_bytes(&map);
        assert_eq!(
            bytes,
            vec![
                0x50, 0x50, 0x53, 0x4D, // "PPSM"
                0x01, 0x00, // version 1
                0x01, 0x00, 0x00, 0x00, // width 1
                0x01, 0x00, 0x00, 0x00, // height 1
                0x17, 0x00, 0x00, 0x00, // uid 23
            ]
        );
        assert_eq!(bytes.len(), 18);
    }

    #[test]
    fn ppsm_round_trip_is_exact() {
        let map = PanopticPartMap::new(3, 2, vec![7, 26_001, 2_600_102, 0, 7, 26_002]).unwrap();
        let bytes = to_ppsm_bytes(&map);
        let back = parse_ppsm(&bytes).unwrap();
        assert_eq!(back, map);
        assert_eq!(to_ppsm_bytes(&back), bytes);
    }

    #[test]
    fn parse_rejects_bad_magic() {
        let mut bytes = to_ppsm_bytes(&PanopticPartMap::filled(1, 1, 7));
        bytes[0] = b'X';
        assert!(matches!(parse_ppsm(&bytes), Err(SegmapError::BadMagic(_))));
    }

    #[test]
    fn parse_rejects_unknown_version() {
        let mut bytes = to_ppsm_bytes(&PanopticPartMap::filled(1, 1, 7));
        bytes[4] = 2;
        assert!(matches!(parse_ppsm(&bytes), Err(SegmapError::UnsupportedVersion(2))));
    }

    #[test]
    fn parse_rejects_truncation_and_trailing_bytes() {
        let bytes = to_ppsm_bytes(&PanopticPartMap::filled(2, 2, 7));
        assert!(matches!(
            parse_ppsm(&bytes[..bytes.len() - 1]),
            Err(SegmapError::Truncated { .. })
        ));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(parse_ppsm(&extra), Err(SegmapError::TrailingBytes(1))));
    }

    #[test]
    fn map_construction_checks_dimensions() {
        assert!(matches!(
            PanopticPartMap::new(2, 2, vec![0; 3]),
            Err(SegmapError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn runs_cover_pushed_indices() {
        let runs = Runs::from_indices([0, 1, 2, 5, 6, 9]);
        assert_eq!(runs.len(), 6);
        assert_eq!(runs.runs(), &[(0, 3), (5, 2), (9, 1)]);
        assert_eq!(runs.iter().collect::<Vec<_>>(), vec![0, 1, 2, 5, 6, 9]);
    }

    #[test]
    fn runs_intersection_counts_shared_pixels() {
        let a = Runs::from_indices([0, 1, 2, 5, 6, 9]);
        let b = Runs::from_indices([2, 3, 5, 6, 7, 10]);
        assert_eq!(a.intersection_len(&b), 3);
        assert_eq!(b.intersection_len(&a), 3);
        assert_eq!(a.intersection_len(&Runs::default()), 0);
    }

    #[test]
    fn union_walk_labels_membership() {
        let a = Runs::from_indices([0, 1, 4]);
        let b = Runs::from_indices([1, 2, 4, 7]);
        let walked: Vec<_> = a.union_walk(&b).collect();
        assert_eq!(
            walked,
            vec![
                (0, true, false),
                (1, true, true),
                (2, false, true),
                (4, true, true),
                (7, false, true),
            ]
        );
    }

    #[test]
    fn extract_groups_by_class_and_instance() {
        // Row 0: road, road, car 1. Row 1: car 1 (part form), car 2, void.
        let map = PanopticPartMap::new(3, 2, vec![7, 7, 26_001, 2_600_102, 26_002, 0]).unwrap();
        let set = extract_segments(&map, &taxonomy()).unwrap();
        let summary: Vec<_> = set
            .segments()
            .iter()
            .map(|s| (s.class_id, s.instance, s.pixel_count()))
            .collect();
        assert_eq!(
            summary,
            vec![(7, None, 2), (26, Some(1), 2), (26, Some(2), 1)]
        );
        assert_eq!(set.void_pixels(), 1);
        assert_eq!(set.unlabeled_instance_pixels(), 0);
        assert_eq!(set.segment_index_at(0), Some(0));
        assert_eq!(set.segment_index_at(3), Some(1));
        assert_eq!(set.segment_index_at(5), None);
    }

    #[test]
    fn extract_flags_unlabeled_thing_instances() {
        // A bare thing sid groups into one semantic-only segment per class.
        let map = PanopticPartMap::new(2, 1, vec![26, 26]).unwrap();
        let set = extract_segments(&map, &taxonomy()).unwrap();
        assert_eq!(set.segments().len(), 1);
        assert_eq!(set.segments()[0].instance, None);
        assert_eq!(set.unlabeled_instance_pixels(), 2);
    }

    #[test]
    fn extract_partitions_every_non_void_pixel() {
        let map = PanopticPartMap::new(3, 2, vec![7, 0, 26_001, 26_001, 7, 2_600_201]).unwrap();
        let set = extract_segments(&map, &taxonomy()).unwrap();
        let covered: u64 = set.segments().iter().map(Segment::pixel_count).sum();
        assert_eq!(covered + set.void_pixels(), map.len() as u64);
    }

    #[test]
    fn extract_rejects_unknown_class_and_bad_uid() {
        let bad_class = PanopticPartMap::new(1, 1, vec![55]).unwrap();
        assert!(matches!(
            extract_segments(&bad_class, &taxonomy()),
            Err(SegmapError::UnknownClass { sid: 55, .. })
        ));
        let bad_uid = PanopticPartMap::new(1, 1, vec![u32::MAX]).unwrap();
        assert!(matches!(
            extract_segments(&bad_uid, &taxonomy()),
            Err(SegmapError::InvalidUid { .. })
        ));
    }

    #[test]
    fn part_histogram_counts_part_pixels() {
        let map = PanopticPartMap::new(2, 2, vec![2_600_101, 2_600_101, 2_600_102, 26_001]).unwrap();
        let set = extract_segments(&map, &taxonomy()).unwrap();
        let histogram = part_histogram(&map, &set.segments()[0], &taxonomy()).unwrap();
        assert_eq!(histogram.counts.get(&1), Some(&2));
        assert_eq!(histogram.counts.get(&2), Some(&1));
        assert_eq!(histogram.unlabeled, 1);
    }

    #[test]
    fn part_histogram_rejects_partless_classes() {
        let map = PanopticPartMap::new(1, 1, vec![7]).unwrap();
        let set = extract_segments(&map, &taxonomy()).unwrap();
        assert!(matches!(
            part_histogram(&map, &set.segments()[0], &taxonomy()),
            Err(SegmapError::NotAPartClass(7))
        ));
    }
}
