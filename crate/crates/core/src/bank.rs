//! Multi-view language memory bank.
//!
//! Every object label gets a low-dimensional ID drawn from an evenly spaced
//! lattice in `[0, 1]^3`. The ID is what the scene renders; the bank maps it
//! back to the per-view high-dimensional embeddings of that object. Rendered
//! features are matched to IDs by nearest L1 distance.

use std::sync::OnceLock;

use rand::seq::index;
use rand::SeedableRng;
use rand_xoshiro::SplitMix64;
use rayon::prelude::*;
use thiserror::Error;

use crate::scene::{Embedding, FeatureMap, Label, LabelMap, BACKGROUND_FEATURE};

pub const DEFAULT_EMBEDDING_DIM: usize = 512;

/// Reserved snap target for unlabeled pixels. Outside the ID cube.
const STRICT_FRACTION: f32 = 0.01;

pub const BACKGROUND_ID: [f32; 3] = BACKGROUND_FEATURE;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BankError {
    #[error("cannot generate IDs for zero labels")]
    NoLabels,
    #[error("too many labels: {0}")]
    TooManyLabels(usize),
    #[error("embedding for view {view}, label {label} has dimension {actual}, expected {expected}")]
    DimensionMismatch {
        view: usize,
        label: Label,
        expected: usize,
        actual: usize,
    },
    #[error("label {label} is outside 1..={max}")]
    LabelOutOfRange { label: Label, max: usize },
    #[error("view {view} is outside 0..{views}")]
    ViewOutOfRange { view: usize, views: usize },
    #[error("embedding for view {view}, label {label} is not finite")]
    NonFinite { view: usize, label: Label },
    #[error("duplicate embedding for view {view}, label {label}")]
    Duplicate { view: usize, label: Label },
    #[error("label {0} is not in the memory bank")]
    UnknownLabel(Label),
    #[error("label map {index} is {width}x{height}, expected {expected_width}x{expected_height}")]
    Shape {
        index: usize,
        width: u32,
        height: u32,
        expected_width: u32,
        expected_height: u32,
    },
    #[error("invalid bank: {0}")]
    Invalid(String),
}

/// Smallest `m` with `m^3 >= n`.
pub fn lattice_side(n: usize) -> usize {
    let mut m = (n as f64).cbrt().round().max(1.0) as usize;
    while m * m * m < n {
        m += 1;
    }
    while m > 1 && (m - 1) * (m - 1) * (m - 1) >= n {
        m -= 1;
    }
    m
}

/// Distance between neighbouring lattice points; `None` for a one-point
/// lattice.
pub fn lattice_spacing(m: usize) -> Option<f32> {
    (m >= 2).then(|| 1.0 / (m - 1) as f32)
}

fn lattice_point(m: usize, index: usize) -> [f32; 3] {
    if m == 1 {
        return [0.5; 3];
    }
    let coord = |k: usize| (k as f64 / (m - 1) as f64) as f32;
    [coord(index / (m * m)), coord(index / m % m), coord(index % m)]
}

/// Picks `n` distinct points of the `m^3` lattice, `m = ceil(cbrt(n))`,
/// uniformly without replacement. Deterministic in `(n, seed)`.
pub fn generate_ids(n: usize, seed: u64) -> Result<Vec<[f32; 3]>, BankError> {
    if n == 0 {
        return Err(BankError::NoLabels);
    }
    if n > Label::MAX as usize {
        return Err(BankError::TooManyLabels(n));
    }
    let m = lattice_side(n);
    let mut rng = SplitMix64::seed_from_u64(seed);
    Ok(index::sample(&mut rng, m * m * m, n)
        .into_iter()
        .map(|i| lattice_point(m, i))
        .collect())
}

#[inline]
pub fn l1(a: [f32; 3], b: [f32; 3]) -> f32 {
    (a[0] - b[0]).abs() + (a[1] - b[1]).abs() + (a[2] - b[2]).abs()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BankEntry {
    pub label: Label,
    pub id: [f32; 3],
    /// One embedding per view; absent views hold the zero sentinel.
    pub views: Vec<Embedding>,
}

/// Outcome of snapping a feature to the bank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Snapped {
    /// Index into [`MemoryBank::entries`].
    Entry(usize),
    Background,
}

/// One embedding record as produced by the region encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewEmbedding {
    pub view: usize,
    pub label: Label,
    pub embedding: Embedding,
}

#[derive(Debug)]
pub struct MemoryBank {
    dim: usize,
    lattice_m: usize,
    seed: u64,
    view_count: usize,
    entries: Vec<BankEntry>,
    reject_radius: Option<f32>,
    index: OnceLock<SnapIndex>,
}

impl Clone for MemoryBank {
    fn clone(&self) -> Self {
        Self {
            dim: self.dim,
            lattice_m: self.lattice_m,
            seed: self.seed,
            view_count: self.view_count,
            entries: self.entries.clone(),
            reject_radius: self.reject_radius,
            index: OnceLock::new(),
        }
    }
}

impl PartialEq for MemoryBank {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.lattice_m == other.lattice_m
            && self.seed == other.seed
            && self.view_count == other.view_count
            && self.entries == other.entries
            && self.reject_radius == other.reject_radius
    }
}

impl MemoryBank {
    /// Reassembles a bank from stored parts, checking every invariant. Used
    /// by file readers.
    pub fn from_parts(
        dim: usize,
        lattice_m: usize,
        seed: u64,
        view_count: usize,
        entries: Vec<BankEntry>,
    ) -> Result<Self, BankError> {
        if entries.is_empty() {
            return Err(BankError::NoLabels);
        }
        if lattice_m != lattice_side(entries.len()) {
            return Err(BankError::Invalid(format!(
                "lattice_m {lattice_m} does not match {} entries",
                entries.len()
            )));
        }
        for (i, e) in entries.iter().enumerate() {
            if e.label as usize != i + 1 {
                return Err(BankError::Invalid(format!(
                    "entry {i} has label {}, labels must be 1..=N in order",
                    e.label
                )));
            }
            if e.views.len() != view_count {
                return Err(BankError::Invalid(format!(
                    "label {} has {} views, expected {view_count}",
                    e.label,
                    e.views.len()
                )));
            }
            for (view, emb) in e.views.iter().enumerate() {
                if emb.dim() != dim {
                    return Err(BankError::DimensionMismatch {
                        view,
                        label: e.label,
                        expected: dim,
                        actual: emb.dim(),
                    });
                }
                if !emb.is_finite() {
                    return Err(BankError::NonFinite { view, label: e.label });
                }
                if !emb.is_zero() && (emb.norm() - 1.0).abs() > 1e-5 {
                    return Err(BankError::Invalid(format!(
                        "view {view} of label {} is not unit-norm",
                        e.label
                    )));
                }
            }
        }
        let expected = generate_ids(entries.len(), seed)?;
        if let Some(e) = entries.iter().zip(&expected).find(|(e, id)| e.id != **id) {
            return Err(BankError::Invalid(format!(
                "ID of label {} does not match seed {seed}",
                e.0.label
            )));
        }
        Ok(Self {
            dim,
            lattice_m,
            seed,
            view_count,
            entries,
            reject_radius: None,
            index: OnceLock::new(),
        })
    }

    /// Snap results farther than `radius` (L1) from every ID become
    /// background. Off by default.
    pub fn with_reject_radius(mut self, radius: Option<f32>) -> Self {
        self.reject_radius = radius;
        self.index = OnceLock::new();
        self
    }

    /// Half the lattice spacing, the natural rejection radius.
    pub fn half_spacing(&self) -> f32 {
        lattice_spacing(self.lattice_m).unwrap_or(1.0) / 2.0
    }

    /// A hundredth of the lattice spacing. Only pixels a single ID covers
    /// almost completely keep it; partially covered edges become background.
    pub fn strict_radius(&self) -> f32 {
        lattice_spacing(self.lattice_m).unwrap_or(1.0) * STRICT_FRACTION
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lattice_m(&self) -> usize {
        self.lattice_m
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn view_count(&self) -> usize {
        self.view_count
    }

    pub fn reject_radius(&self) -> Option<f32> {
        self.reject_radius
    }

    pub fn entries(&self) -> &[BankEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry_for_label(&self, label: Label) -> Option<&BankEntry> {
        (label as usize).checked_sub(1).and_then(|i| self.entries.get(i))
    }

    fn snap_index(&self) -> &SnapIndex {
        self.index.get_or_init(|| SnapIndex::build(&self.entries))
    }
}

/// Builds the bank for compacted label maps (labels `1..=N`, one map per
/// view). Missing `(view, label)` pairs become zero sentinels; all other
/// embeddings are L2-normalized.
pub fn build_bank(
    maps: &[LabelMap],
    embeddings: &[ViewEmbedding],
    dim: usize,
    seed: u64,
) -> Result<MemoryBank, BankError> {
    let views = maps.len();
    if let Some(first) = maps.first() {
        if let Some((index, m)) = maps.iter().enumerate().find(|(_, m)| !m.same_shape(first)) {
            return Err(BankError::Shape {
                index,
                width: m.width,
                height: m.height,
                expected_width: first.width,
                expected_height: first.height,
            });
        }
    }
    let n = maps
        .iter()
        .flat_map(|m| m.labels.iter().copied())
        .max()
        .unwrap_or(0) as usize;
    let ids = generate_ids(n, seed)?;
    let mut entries: Vec<BankEntry> = ids
        .into_iter()
        .enumerate()
        .map(|(i, id)| BankEntry {
            label: (i + 1) as Label,
            id,
            views: vec![Embedding::zeros(dim); views],
        })
        .collect();
    let mut seen = vec![false; n * views];
    for rec in embeddings {
        if rec.view >= views {
            return Err(BankError::ViewOutOfRange {
                view: rec.view,
                views,
            });
        }
        if rec.label == 0 || rec.label as usize > n {
            return Err(BankError::LabelOutOfRange {
                label: rec.label,
                max: n,
            });
        }
        if rec.embedding.dim() != dim {
            return Err(BankError::DimensionMismatch {
                view: rec.view,
                label: rec.label,
                expected: dim,
                actual: rec.embedding.dim(),
            });
        }
        if !rec.embedding.is_finite() {
            return Err(BankError::NonFinite {
                view: rec.view,
                label: rec.label,
            });
        }
        let slot = (rec.label as usize - 1) * views + rec.view;
        if std::mem::replace(&mut seen[slot], true) {
            return Err(BankError::Duplicate {
                view: rec.view,
                label: rec.label,
            });
        }
        entries[rec.label as usize - 1].views[rec.view] = rec.embedding.normalized();
    }
    Ok(MemoryBank {
        dim,
        lattice_m: lattice_side(n),
        seed,
        view_count: views,
        entries,
        reject_radius: None,
        index: OnceLock::new(),
    })
}

/// Semantic label image: each pixel gets the ID of its label, unlabeled
/// pixels get [`BACKGROUND_ID`].
pub fn label_image(map: &LabelMap, bank: &MemoryBank) -> Result<FeatureMap, BankError> {
    let mut lut = Vec::with_capacity(bank.len() + 1);
    lut.push(BACKGROUND_ID);
    lut.extend(bank.entries.iter().map(|e| e.id));
    let values = map
        .labels
        .iter()
        .map(|&l| lut.get(l as usize).copied().ok_or(BankError::UnknownLabel(l)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FeatureMap {
        width: map.width,
        height: map.height,
        values,
    })
}

/// Nearest bank entry under L1, by linear scan. Ties go to the smallest
/// label; the background candidate loses every tie.
pub fn snap(feature: [f32; 3], bank: &MemoryBank) -> Snapped {
    let mut best = Snapped::Background;
    let mut best_dist = f32::INFINITY;
    for (i, e) in bank.entries.iter().enumerate() {
        let d = l1(feature, e.id);
        if d < best_dist {
            best_dist = d;
            best = Snapped::Entry(i);
        }
    }
    finish_snap(feature, best, best_dist, bank.reject_radius)
}

#[inline]
fn finish_snap(feature: [f32; 3], best: Snapped, best_dist: f32, reject: Option<f32>) -> Snapped {
    if l1(feature, BACKGROUND_ID) < best_dist {
        return Snapped::Background;
    }
    match reject {
        Some(r) if best_dist > r => Snapped::Background,
        _ => best,
    }
}

/// Per-pixel snap results plus the distinct entries that were hit.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapMap {
    pub width: u32,
    pub height: u32,
    /// Entry index per pixel, [`SnapMap::BACKGROUND`] for background.
    pub indices: Vec<u32>,
    /// Distinct entry indices hit, ascending. Background is not listed.
    pub unique: Vec<u32>,
}

impl SnapMap {
    pub const BACKGROUND: u32 = u32::MAX;

    pub fn get(&self, x: u32, y: u32) -> Snapped {
        match self.indices[y as usize * self.width as usize + x as usize] {
            Self::BACKGROUND => Snapped::Background,
            i => Snapped::Entry(i as usize),
        }
    }
}

/// Pixelwise [`snap`] over a feature map, using an exact grid index.
pub fn snap_map(fm: &FeatureMap, bank: &MemoryBank) -> SnapMap {
    let index = bank.snap_index();
    let indices: Vec<u32> = fm
        .values
        .par_chunks(4096)
        .flat_map_iter(|chunk| {
            chunk.iter().map(|&f| match index.snap(f, bank) {
                Snapped::Entry(i) => i as u32,
                Snapped::Background => SnapMap::BACKGROUND,
            })
        })
        .collect();
    let mut hit = vec![false; bank.len()];
    for &i in &indices {
        if i != SnapMap::BACKGROUND {
            hit[i as usize] = true;
        }
    }
    let unique = hit
        .iter()
        .enumerate()
        .filter(|(_, &h)| h)
        .map(|(i, _)| i as u32)
        .collect();
    SnapMap {
        width: fm.width,
        height: fm.height,
        indices,
        unique,
    }
}

const GRID_CELLS: usize = 32;
/// Slack on the pruning test; far larger than any f32 rounding in `l1`.
const GRID_MARGIN: f32 = 1e-4;

/// Uniform grid over the feature domain. Each cell keeps every entry that can
/// be the nearest one for some point inside the cell, so scanning a cell's
/// candidates in entry order reproduces the linear scan exactly.
#[derive(Debug)]
struct SnapIndex {
    lo: [f32; 3],
    cell: [f32; 3],
    offsets: Vec<u32>,
    candidates: Vec<u32>,
}

impl SnapIndex {
    fn build(entries: &[BankEntry]) -> Self {
        // Rendered features lie in the hull of the IDs, the background
        // feature and the zero background.
        let points = entries
            .iter()
            .map(|e| e.id)
            .chain([BACKGROUND_ID, [0.0; 3]]);
        let mut lo = [f32::INFINITY; 3];
        let mut hi = [f32::NEG_INFINITY; 3];
        for p in points {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let cell = [0, 1, 2].map(|a| (hi[a] - lo[a]) / GRID_CELLS as f32);

        // Candidate `BACKGROUND` sentinel is entries.len().
        let targets: Vec<[f32; 3]> = entries.iter().map(|e| e.id).chain([BACKGROUND_ID]).collect();
        let mut offsets = Vec::with_capacity(GRID_CELLS.pow(3) + 1);
        let mut candidates = Vec::new();
        offsets.push(0);
        let mut min_d = vec![0.0f32; targets.len()];
        for cz in 0..GRID_CELLS {
            for cy in 0..GRID_CELLS {
                for cx in 0..GRID_CELLS {
                    let c = [cx, cy, cz];
                    let box_lo = [0, 1, 2].map(|a| lo[a] + c[a] as f32 * cell[a]);
                    let box_hi = [0, 1, 2].map(|a| box_lo[a] + cell[a]);
                    let mut bound = f32::INFINITY;
                    for (t, p) in targets.iter().enumerate() {
                        let (mut near, mut far) = (0.0f32, 0.0f32);
                        for a in 0..3 {
                            near += (box_lo[a] - p[a]).max(p[a] - box_hi[a]).max(0.0);
                            far += (p[a] - box_lo[a]).abs().max((p[a] - box_hi[a]).abs());
                        }
                        min_d[t] = near;
                        bound = bound.min(far);
                    }
                    candidates.extend(
                        (0..targets.len())
                            .filter(|&t| min_d[t] <= bound + GRID_MARGIN)
                            .map(|t| t as u32),
                    );
                    offsets.push(candidates.len() as u32);
                }
            }
        }
        Self {
            lo,
            cell,
            offsets,
            candidates,
        }
    }

    fn cell_of(&self, f: [f32; 3]) -> Option<usize> {
        let mut idx = [0usize; 3];
        for a in 0..3 {
            let t = (f[a] - self.lo[a]) / self.cell[a];
            if !(t >= 0.0 && t <= GRID_CELLS as f32) {
                return None;
            }
            idx[a] = (t as usize).min(GRID_CELLS - 1);
        }
        Some((idx[2] * GRID_CELLS + idx[1]) * GRID_CELLS + idx[0])
    }

    #[inline]
    fn snap(&self, f: [f32; 3], bank: &MemoryBank) -> Snapped {
        let Some(c) = self.cell_of(f) else {
            return snap(f, bank);
        };
        let n = bank.entries.len() as u32;
        let mut best = Snapped::Background;
        let mut best_dist = f32::INFINITY;
        for &t in &self.candidates[self.offsets[c] as usize..self.offsets[c + 1] as usize] {
            // Background is last in candidate order and is handled below.
            if t == n {
                break;
            }
            let d = l1(f, bank.entries[t as usize].id);
            if d < best_dist {
                best_dist = d;
                best = Snapped::Entry(t as usize);
            }
        }
        finish_snap(f, best, best_dist, bank.reject_radius)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn unit(dim: usize, axis: usize) -> Embedding {
        let mut v = vec![0.0; dim];
        v[axis] = 1.0;
        Embedding(v)
    }

    #[test]
    fn lattice_side_is_ceil_cbrt() {
        for (n, m) in [(1, 1), (2, 2), (8, 2), (9, 3), (27, 3), (28, 4), (64, 4), (100, 5), (256, 7)] {
            assert_eq!(lattice_side(n), m, "n = {n}");
        }
    }

    #[test]
    fn single_id_is_cube_center() {
        assert_eq!(generate_ids(1, 7).unwrap(), vec![[0.5; 3]]);
        assert_eq!(generate_ids(0, 7), Err(BankError::NoLabels));
    }

    #[test]
    fn eight_ids_exhaust_unit_cube_corners() {
        let ids = generate_ids(8, 3).unwrap();
        let set: HashSet<[u32; 3]> = ids.iter().map(|p| p.map(f32::to_bits)).collect();
        let mut corners = HashSet::new();
        for i in 0..8u32 {
            corners.insert([i >> 2 & 1, i >> 1 & 1, i & 1].map(|b| (b as f32).to_bits()));
        }
        assert_eq!(set, corners);
    }

    #[test]
    fn nine_ids_on_three_point_lattice() {
        let ids = generate_ids(9, 11).unwrap();
        let set: HashSet<[u32; 3]> = ids.iter().map(|p| p.map(f32::to_bits)).collect();
        assert_eq!(set.len(), 9);
        for p in &ids {
            for c in p {
                assert!([0.0, 0.5, 1.0].contains(c), "{p:?}");
            }
        }
    }

    #[test]
    fn build_bank_sentinels_and_normalization() {
        let maps = vec![
            LabelMap::new(2, 1, vec![1, 2]).unwrap(),
            LabelMap::new(2, 1, vec![1, 0]).unwrap(),
        ];
        let recs = vec![
            ViewEmbedding { view: 0, label: 1, embedding: Embedding(vec![2.0, 0.0, 0.0]) },
            ViewEmbedding { view: 1, label: 1, embedding: Embedding(vec![0.0, 3.0, 0.0]) },
            ViewEmbedding { view: 0, label: 2, embedding: Embedding(vec![0.0, 0.0, 5.0]) },
        ];
        let bank = build_bank(&maps, &recs, 3, 1).unwrap();
        assert_eq!(bank.len(), 2);
        assert_eq!(bank.entries()[0].views, vec![unit(3, 0), unit(3, 1)]);
        assert_eq!(bank.entries()[1].views, vec![unit(3, 2), Embedding::zeros(3)]);
    }

    #[test]
    fn build_bank_errors() {
        let maps = vec![LabelMap::new(1, 1, vec![1]).unwrap()];
        let rec = |view, label, dim| ViewEmbedding { view, label, embedding: unit(dim, 0) };
        assert!(matches!(build_bank(&maps, &[rec(0, 1, 4)], 3, 0), Err(BankError::DimensionMismatch { .. })));
        assert!(matches!(build_bank(&maps, &[rec(0, 2, 3)], 3, 0), Err(BankError::LabelOutOfRange { .. })));
        assert!(matches!(build_bank(&maps, &[rec(1, 1, 3)], 3, 0), Err(BankError::ViewOutOfRange { .. })));
        assert!(matches!(
            build_bank(&maps, &[rec(0, 1, 3), rec(0, 1, 3)], 3, 0),
            Err(BankError::Duplicate { .. })
        ));
        let empty = vec![LabelMap::filled(2, 2, 0)];
        assert_eq!(build_bank(&empty, &[], 3, 0), Err(BankError::NoLabels));
    }

    fn bank_with(n: usize, seed: u64) -> MemoryBank {
        let labels: Vec<Label> = (1..=n as Label).collect();
        let maps = vec![LabelMap::new(n as u32, 1, labels).unwrap()];
        build_bank(&maps, &[], 4, seed).unwrap()
    }

    #[test]
    fn label_image_lookup() {
        let bank = bank_with(3, 5);
        let map = LabelMap::new(3, 1, vec![2, 0, 3]).unwrap();
        let img = label_image(&map, &bank).unwrap();
        assert_eq!(img.values, vec![bank.entries()[1].id, BACKGROUND_ID, bank.entries()[2].id]);
        let bad = LabelMap::new(1, 1, vec![4]).unwrap();
        assert_eq!(label_image(&bad, &bank), Err(BankError::UnknownLabel(4)));
    }

    #[test]
    fn snap_exact_and_ties() {
        let bank = bank_with(8, 2);
        for (i, e) in bank.entries().iter().enumerate() {
            assert_eq!(snap(e.id, &bank), Snapped::Entry(i));
        }
        assert_eq!(snap(BACKGROUND_ID, &bank), Snapped::Background);
        // Center of the cube is L1-equidistant (1.5) from all eight corners.
        assert_eq!(snap([0.5; 3], &bank), Snapped::Entry(0));
    }

    #[test]
    fn background_loses_ties() {
        let bank = bank_with(1, 0);
        // ID (0.5, 0.5, 0.5); the point (-0.25, ...) is 2.25 from both.
        assert_eq!(snap([-0.25; 3], &bank), Snapped::Entry(0));
        assert_eq!(snap([-0.3; 3], &bank), Snapped::Background);
    }

    #[test]
    fn reject_radius_turns_far_pixels_into_background() {
        let bank = bank_with(8, 2).with_reject_radius(Some(0.25));
        assert_eq!(snap([0.5; 3], &bank), Snapped::Background);
        let id = bank.entries()[3].id;
        assert_eq!(snap(id, &bank), Snapped::Entry(3));
        let fm = FeatureMap::filled(2, 2, [0.5; 3]);
        assert!(snap_map(&fm, &bank).unique.is_empty());
    }

    #[test]
    fn snap_map_half_planes() {
        let bank = bank_with(9, 4);
        let (a, b) = (bank.entries()[2].id, bank.entries()[7].id);
        let values = (0..16).map(|i| if i % 4 < 2 { a } else { b }).collect();
        let fm = FeatureMap::new(4, 4, values).unwrap();
        let sm = snap_map(&fm, &bank);
        assert_eq!(sm.unique, vec![2, 7]);
        assert_eq!(sm.get(1, 3), Snapped::Entry(2));
        assert_eq!(sm.get(2, 0), Snapped::Entry(7));
        let constant = snap_map(&FeatureMap::filled(3, 3, a), &bank);
        assert_eq!(constant.unique, vec![2]);
    }

    #[test]
    fn from_parts_rejects_tampered_ids() {
        let bank = bank_with(4, 9);
        let mut entries = bank.entries().to_vec();
        let rebuilt = MemoryBank::from_parts(4, bank.lattice_m(), 9, 1, entries.clone()).unwrap();
        assert_eq!(rebuilt, bank);
        entries[0].id = [0.123, 0.0, 0.0];
        assert!(MemoryBank::from_parts(4, bank.lattice_m(), 9, 1, entries).is_err());
    }
}
