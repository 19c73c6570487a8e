//! Seeded random taxonomies and label-map pairs for metric tests. Maps are
//! built from nearest-site cells so segments stay connected-ish, and
//! predictions are derived from ground truth by local corruptions to produce
//! realistic mixes of matches, misses and false alarms.

use pps_core::fusion::{split_parts, PartGrid, PartSource, NO_PART};
use pps_core::segmap::PanopticPartMap;
use pps_core::taxonomy::{
    decode_uid, encode_uid, validate_taxonomy, ClassKind, ClassSpec, PartSpec, Taxonomy,
    TaxonomyDoc, UidTriple,
};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform integer in `[0, bound)`.
pub fn below(rng: &mut ChaCha8Rng, bound: u32) -> u32 {
    assert!(bound > 0);
    (rng.next_u64() % bound as u64) as u32
}

/// Bernoulli draw with probability `percent / 100`.
pub fn chance(rng: &mut ChaCha8Rng, percent: u32) -> bool {
    below(rng, 100) < percent
}

fn class(sid: u32, name: &str, kind: ClassKind, pids: &[u32]) -> ClassSpec {
    ClassSpec {
        sid,
        name: name.into(),
        kind,
        parts: pids
            .iter()
            .map(|&pid| PartSpec { pid, name: format!("{name}-part-{pid}") })
            .collect(),
    }
}

/// Two part-bearing things, one partless thing, two stuff classes.
pub fn small_part_taxonomy() -> Taxonomy {
    validate_taxonomy(TaxonomyDoc {
        void_uid: 0,
        classes: vec![
            class(24, "person", ClassKind::Thing, &[1, 2, 3]),
            class(26, "car", ClassKind::Thing, &[1, 2]),
            class(31, "train", ClassKind::Thing, &[]),
            class(7, "road", ClassKind::Stuff, &[]),
            class(23, "sky", ClassKind::Stuff, &[]),
        ],
    })
    .unwrap()
}

/// Street-scene style: 5 part-bearing things carrying 23 parts altogether,
/// plus partless things and stuff.
pub fn street_taxonomy() -> Taxonomy {
    validate_taxonomy(TaxonomyDoc {
        void_uid: 0,
        classes: vec![
            class(24, "person", ClassKind::Thing, &[1, 2, 3, 4]),
            class(25, "rider", ClassKind::Thing, &[1, 2, 3, 4]),
            class(26, "car", ClassKind::Thing, &[1, 2, 3, 4, 5]),
            class(27, "truck", ClassKind::Thing, &[1, 2, 3, 4, 5]),
            class(28, "bus", ClassKind::Thing, &[1, 2, 3, 4, 5]),
            class(31, "train", ClassKind::Thing, &[]),
            class(32, "motorcycle", ClassKind::Thing, &[]),
            class(7, "road", ClassKind::Stuff, &[]),
            class(21, "vegetation", ClassKind::Stuff, &[]),
            class(23, "sky", ClassKind::Stuff, &[]),
        ],
    })
    .unwrap()
}

/// Same scene classes as [`small_part_taxonomy`] but with every part list
/// emptied, for checks that part metrics collapse onto scene metrics.
pub fn no_parts_taxonomy() -> Taxonomy {
    validate_taxonomy(TaxonomyDoc {
        void_uid: 0,
        classes: vec![
            class(24, "person", ClassKind::Thing, &[]),
            class(26, "car", ClassKind::Thing, &[]),
            class(31, "train", ClassKind::Thing, &[]),
            class(7, "road", ClassKind::Stuff, &[]),
            class(23, "sky", ClassKind::Stuff, &[]),
        ],
    })
    .unwrap()
}

struct Site {
    x: i64,
    y: i64,
    uid_base: Option<(u32, Option<u32>)>,
    part_phase: u32,
}

/// Random ground-truth map: pixels join their nearest site, sites carry a
/// class (or void), thing sites get instance ids, and part-bearing instances
/// are striped with owned part ids. A slice of pixels stays part-unlabeled,
/// and a tiny fraction carries a non-owned part id to exercise filtering.
pub fn random_map(rng: &mut ChaCha8Rng, taxonomy: &Taxonomy, width: u32, height: u32) -> PanopticPartMap {
    let classes = taxonomy.classes();
    let nsites = 2 + below(rng, 5) as usize;
    let mut sites = Vec::with_capacity(nsites);
    for index in 0..nsites {
        let x = below(rng, width) as i64;
        let y = below(rng, height) as i64;
        let uid_base = if chance(rng, 8) {
            None
        } else {
            let spec = &classes[below(rng, classes.len() as u32) as usize];
            match spec.kind {
                ClassKind::Thing => {
                    if chance(rng, 10) {
                        Some((spec.sid, None))
                    } else {
                        Some((spec.sid, Some(index as u32 % 1000)))
                    }
                }
                ClassKind::Stuff => Some((spec.sid, None)),
            }
        };
        sites.push(Site { x, y, uid_base, part_phase: below(rng, 7) });
    }

    let mut data = Vec::with_capacity(width as usize * height as usize);
    for y in 0..height as i64 {
        for x in 0..width as i64 {
            let mut best = 0usize;
            let mut best_d = i64::MAX;
            for (i, s) in sites.iter().enumerate() {
                let d = (s.x - x).abs() + (s.y - y).abs();
                if d < best_d {
                    best_d = d;
                    best = i;
                }
            }
            let site = &sites[best];
            let uid = match site.uid_base {
                None => taxonomy.void_uid(),
                Some((sid, None)) => encode_uid(UidTriple::semantic(sid)).unwrap(),
                Some((sid, Some(iid))) => {
                    let parts = &taxonomy.class(sid).unwrap().parts;
                    if parts.is_empty() || chance(rng, 15) {
                        encode_uid(UidTriple::instance(sid, iid)).unwrap()
                    } else if chance(rng, 3) {
                        // A part id outside the owned list; metrics skip it.
                        let pid = (parts.iter().map(|p| p.pid).max().unwrap() + 1).min(99);
                        encode_uid(UidTriple::part(sid, iid, pid)).unwrap()
                    } else {
                        let stripe =
                            ((x / 2 + y / 3) as u32 + site.part_phase) % parts.len() as u32;
                        encode_uid(UidTriple::part(sid, iid, parts[stripe as usize].pid)).unwrap()
                    }
                }
            };
            data.push(uid);
        }
    }
    PanopticPartMap::new(width, height, data).unwrap()
}

/// Derives a prediction from ground truth by a few local corruptions:
/// rectangle relabels, rectangle voiding, part-id reshuffles and part
/// stripping. Leaves the ground truth itself untouched.
pub fn perturb_map(rng: &mut ChaCha8Rng, taxonomy: &Taxonomy, gt: &PanopticPartMap) -> PanopticPartMap {
    let (width, height) = gt.dims();
    let mut pred = gt.clone();
    let edits = 1 + below(rng, 4);
    for _ in 0..edits {
        let x0 = below(rng, width);
        let y0 = below(rng, height);
        let w = 1 + below(rng, width - x0);
        let h = 1 + below(rng, height - y0);
        let action = below(rng, 10);
        for y in y0..(y0 + h).min(height) {
            for x in x0..(x0 + w).min(width) {
                let uid = gt.get(x, y);
                let new = match action {
                    // Blank the rectangle.
                    0 => taxonomy.void_uid(),
                    // Stamp a fresh instance of a random class over it.
                    1 | 2 => {
                        let classes = taxonomy.classes();
                        let spec = &classes[below(rng, classes.len() as u32) as usize];
                        match spec.kind {
                            ClassKind::Thing => {
                                encode_uid(UidTriple::instance(spec.sid, 900)).unwrap()
                            }
                            ClassKind::Stuff => encode_uid(UidTriple::semantic(spec.sid)).unwrap(),
                        }
                    }
                    // Rotate part ids within the owned list, or strip them.
                    3..=5 => match pps_core::taxonomy::decode_uid(uid) {
                        Ok(t) if t.pid.is_some() => {
                            let parts = &taxonomy.class(t.sid).unwrap().parts;
                            if chance(rng, 25) {
                                encode_uid(UidTriple::instance(t.sid, t.iid.unwrap())).unwrap()
                            } else {
                                let pos = parts
                                    .iter()
                                    .position(|p| Some(p.pid) == t.pid)
                                    .unwrap_or(0);
                                let next = parts[(pos + 1) % parts.len()].pid;
                                encode_uid(UidTriple::part(t.sid, t.iid.unwrap(), next)).unwrap()
                            }
                        }
                        _ => uid,
                    },
                    // Keep the pixel.
                    _ => uid,
                };
                pred.set(x, y, new);
            }
        }
    }
    pred
}

/// A ground-truth / prediction pair over one grid.
pub fn random_map_pair(
    rng: &mut ChaCha8Rng,
    taxonomy: &Taxonomy,
    width: u32,
    height: u32,
) -> (PanopticPartMap, PanopticPartMap) {
    let gt = random_map(rng, taxonomy, width, height);
    let pred = perturb_map(rng, taxonomy, &gt);
    (gt, pred)
}

/// Replaces part ids the pixel's class does not own with the bare instance
/// form, leaving every other pixel untouched. The result survives a
/// decompose-recompose round trip byte for byte.
pub fn sanitize_parts(map: &PanopticPartMap, taxonomy: &Taxonomy) -> PanopticPartMap {
    let (width, height) = map.dims();
    let data = map
        .data()
        .iter()
        .map(|&uid| {
            if uid == taxonomy.void_uid() {
                return uid;
            }
            let triple = decode_uid(uid).unwrap();
            match triple.pid {
                Some(pid) if !taxonomy.owns_pid(triple.sid, pid) => {
                    encode_uid(UidTriple::instance(triple.sid, triple.iid.unwrap())).unwrap()
                }
                _ => uid,
            }
        })
        .collect();
    PanopticPartMap::new(width, height, data).unwrap()
}

/// Inputs for a ground-truth substitution study: per-image ground truth with
/// separate panoptic and part predictions.
pub struct SubstitutionFixture {
    pub taxonomy: Taxonomy,
    pub gts: Vec<PanopticPartMap>,
    pub pred_panoptic: Vec<PanopticPartMap>,
    pub pred_parts: Vec<PartSource>,
}

fn stamp_car_row(gt: &mut PanopticPartMap, taxonomy: &Taxonomy, y: u32) {
    let parts = &taxonomy.class(26).unwrap().parts;
    for x in 0..gt.width() {
        let pid = parts[x as usize % 2].pid;
        gt.set(x, y, encode_uid(UidTriple::part(26, 700, pid)).unwrap());
    }
}

fn random_partless_label(r: &mut ChaCha8Rng, taxonomy: &Taxonomy, partless: &[u32]) -> u32 {
    if chance(r, 25) {
        return taxonomy.void_uid();
    }
    let sid = partless[below(r, partless.len() as u32) as usize];
    match taxonomy.class(sid).unwrap().kind {
        ClassKind::Thing => encode_uid(UidTriple::instance(sid, 900 + below(r, 2))).unwrap(),
        ClassKind::Stuff => encode_uid(UidTriple::semantic(sid)).unwrap(),
    }
}

/// Fixture whose part predictions equal ground truth while the panoptic
/// prediction is degraded, and only on pixels of partless classes or void.
/// Substituting the panoptic ground truth must move scene quality and leave
/// part quality untouched.
pub fn scene_degraded_fixture(
    seed: u64,
    images: usize,
    width: u32,
    height: u32,
) -> SubstitutionFixture {
    assert!(height >= 2 && width >= 2);
    let taxonomy = street_taxonomy();
    let partless = taxonomy.sids_without_parts();
    let mut r = rng(seed);
    let mut gts = Vec::with_capacity(images);
    let mut pred_panoptic = Vec::with_capacity(images);
    let mut pred_parts = Vec::with_capacity(images);
    for _ in 0..images {
        let mut gt = sanitize_parts(&random_map(&mut r, &taxonomy, width, height), &taxonomy);
        // One partless row and one part-bearing row keep both metric
        // families populated.
        for x in 0..width {
            gt.set(x, 0, encode_uid(UidTriple::semantic(7)).unwrap());
        }
        stamp_car_row(&mut gt, &taxonomy, 1);
        let (panoptic, grid) = split_parts(&gt, &taxonomy).unwrap();
        let mut degraded = panoptic.clone();
        let mut changed = false;
        for y in 0..height {
            for x in 0..width {
                let uid = panoptic.get(x, y);
                let is_partless = uid == taxonomy.void_uid()
                    || !taxonomy.has_parts(decode_uid(uid).unwrap().sid);
                if is_partless && chance(&mut r, 20) {
                    let new = random_partless_label(&mut r, &taxonomy, &partless);
                    if new != uid {
                        changed = true;
                    }
                    degraded.set(x, y, new);
                }
            }
        }
        if !changed {
            degraded.set(0, 0, taxonomy.void_uid());
        }
        gts.push(gt);
        pred_panoptic.push(degraded);
        pred_parts.push(PartSource::Grid(grid));
    }
    SubstitutionFixture { taxonomy, gts, pred_panoptic, pred_parts }
}

/// Fixture whose panoptic prediction equals ground truth while part ids are
/// rotated within the owned list or dropped. Substituting the part ground
/// truth must move part quality and leave scene quality untouched.
pub fn part_degraded_fixture(
    seed: u64,
    images: usize,
    width: u32,
    height: u32,
) -> SubstitutionFixture {
    assert!(height >= 1 && width >= 2);
    let taxonomy = street_taxonomy();
    let mut r = rng(seed);
    let mut gts = Vec::with_capacity(images);
    let mut pred_panoptic = Vec::with_capacity(images);
    let mut pred_parts = Vec::with_capacity(images);
    for _ in 0..images {
        let mut gt = sanitize_parts(&random_map(&mut r, &taxonomy, width, height), &taxonomy);
        stamp_car_row(&mut gt, &taxonomy, 0);
        let (panoptic, grid) = split_parts(&gt, &taxonomy).unwrap();
        let mut pids = grid.pids().to_vec();
        let mut changed = false;
        for (index, pid) in pids.iter_mut().enumerate() {
            if *pid == NO_PART || !chance(&mut r, 30) {
                continue;
            }
            if chance(&mut r, 20) {
                *pid = NO_PART;
            } else {
                let sid = decode_uid(panoptic.data()[index]).unwrap().sid;
                let parts = &taxonomy.class(sid).unwrap().parts;
                let pos = parts.iter().position(|p| p.pid == *pid).unwrap();
                *pid = parts[(pos + 1) % parts.len()].pid;
            }
            changed = true;
        }
        if !changed {
            let parts = &taxonomy.class(26).unwrap().parts;
            pids[0] = if pids[0] == parts[0].pid { parts[1].pid } else { parts[0].pid };
        }
        gts.push(gt);
        pred_panoptic.push(panoptic);
        pred_parts.push(PartSource::Grid(PartGrid::new(width, height, pids).unwrap()));
    }
    SubstitutionFixture { taxonomy, gts, pred_panoptic, pred_parts }
}

/// A small dataset of pairs sharing one taxonomy.
pub fn random_dataset(
    rng: &mut ChaCha8Rng,
    taxonomy: &Taxonomy,
    images: usize,
    width: u32,
    height: u32,
) -> (Vec<PanopticPartMap>, Vec<PanopticPartMap>) {
    let mut gts = Vec::with_capacity(images);
    let mut preds = Vec::with_capacity(images);
    for _ in 0..images {
        let (gt, pred) = random_map_pair(rng, taxonomy, width, height);
        gts.push(gt);
        preds.push(pred);
    }
    (gts, preds)
}
