//! Multi-view mask association.
//!
//! A video tracker run over a sequence in which every input view is repeated
//! `K` times yields `V x K` label maps in one shared namespace. Voting over
//! the replicates of each view gives one consistent map per view.

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use crate::scene::{Label, LabelMap};

pub const DEFAULT_REPLICATES: usize = 5;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AssociationError {
    #[error("sequence needs at least one view and one replicate (views={views}, replicates={replicates})")]
    Empty { views: usize, replicates: usize },
    #[error("expected {expected} label maps for {views} views x {replicates} replicates, got {actual}")]
    Count {
        views: usize,
        replicates: usize,
        expected: usize,
        actual: usize,
    },
    #[error("label map {index} is {width}x{height}, expected {expected_width}x{expected_height}")]
    Shape {
        index: usize,
        width: u32,
        height: u32,
        expected_width: u32,
        expected_height: u32,
    },
}

/// Tracker output over a replicated sequence, view-major:
/// `maps[view * replicates + j]` is replicate `j` of `view`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicatedSequence {
    views: usize,
    replicates: usize,
    maps: Vec<LabelMap>,
}

impl ReplicatedSequence {
    pub fn new(views: usize, replicates: usize, maps: Vec<LabelMap>) -> Result<Self, AssociationError> {
        if views == 0 || replicates == 0 {
            return Err(AssociationError::Empty { views, replicates });
        }
        let expected = views * replicates;
        if maps.len() != expected {
            return Err(AssociationError::Count {
                views,
                replicates,
                expected,
                actual: maps.len(),
            });
        }
        let first = &maps[0];
        if let Some((index, m)) = maps.iter().enumerate().find(|(_, m)| !m.same_shape(first)) {
            return Err(AssociationError::Shape {
                index,
                width: m.width,
                height: m.height,
                expected_width: first.width,
                expected_height: first.height,
            });
        }
        Ok(Self {
            views,
            replicates,
            maps,
        })
    }

    pub fn views(&self) -> usize {
        self.views
    }

    pub fn replicates(&self) -> usize {
        self.replicates
    }

    pub fn replicate(&self, view: usize, j: usize) -> &LabelMap {
        &self.maps[view * self.replicates + j]
    }

    pub fn view_replicates(&self, view: usize) -> &[LabelMap] {
        &self.maps[view * self.replicates..(view + 1) * self.replicates]
    }
}

/// Most frequent label; ties go to the smallest label.
pub fn mode_label(labels: &mut [Label]) -> Label {
    labels.sort_unstable();
    let mut best = labels[0];
    let mut best_count = 0;
    let mut i = 0;
    while i < labels.len() {
        let mut j = i;
        while j < labels.len() && labels[j] == labels[i] {
            j += 1;
        }
        // Runs come in ascending label order, so `>` keeps the smallest on ties.
        if j - i > best_count {
            best_count = j - i;
            best = labels[i];
        }
        i = j;
    }
    best
}

/// Per-pixel majority vote over the replicates of each view.
pub fn vote(seq: &ReplicatedSequence) -> Vec<LabelMap> {
    (0..seq.views)
        .map(|view| {
            let reps = seq.view_replicates(view);
            let (width, height) = (reps[0].width, reps[0].height);
            let mut scratch = vec![0 as Label; reps.len()];
            let labels = (0..reps[0].labels.len())
                .map(|p| {
                    for (slot, map) in scratch.iter_mut().zip(reps) {
                        *slot = map.labels[p];
                    }
                    mode_label(&mut scratch)
                })
                .collect();
            LabelMap {
                width,
                height,
                labels,
            }
        })
        .collect()
}

/// Result of [`compact_labels`].
#[derive(Debug, Clone, PartialEq)]
pub struct Compaction {
    pub maps: Vec<LabelMap>,
    /// `(old, new)` pairs in new-label order. Label 0 is not listed.
    pub table: Vec<(Label, Label)>,
}

impl Compaction {
    /// Number of object labels `N`.
    pub fn count(&self) -> usize {
        self.table.len()
    }
}

/// Renumbers used labels to `1..=N` in order of first appearance (view-major,
/// then row-major). Label 0 stays 0.
pub fn compact_labels(maps: &[LabelMap]) -> Compaction {
    let mut lookup: HashMap<Label, Label> = HashMap::new();
    let mut table = Vec::new();
    for label in maps.iter().flat_map(|m| m.labels.iter().copied()) {
        if label != 0 && !lookup.contains_key(&label) {
            let new = (table.len() + 1) as Label;
            lookup.insert(label, new);
            table.push((label, new));
        }
    }
    let maps = maps
        .iter()
        .map(|m| LabelMap {
            width: m.width,
            height: m.height,
            labels: m
                .labels
                .iter()
                .map(|&l| if l == 0 { 0 } else { lookup[&l] })
                .collect(),
        })
        .collect();
    Compaction { maps, table }
}

/// Pixel counts of one label in every view.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelPresence {
    pub pixels: Vec<usize>,
}

impl LabelPresence {
    pub fn present(&self) -> Vec<bool> {
        self.pixels.iter().map(|&c| c > 0).collect()
    }

    pub fn view_count(&self) -> usize {
        self.pixels.iter().filter(|&&c| c > 0).count()
    }
}

/// Which views contain each non-zero label, and with how many pixels.
pub fn consistency_report(maps: &[LabelMap]) -> BTreeMap<Label, LabelPresence> {
    let mut report: BTreeMap<Label, LabelPresence> = BTreeMap::new();
    for (view, map) in maps.iter().enumerate() {
        for &label in map.labels.iter().filter(|&&l| l != 0) {
            report
                .entry(label)
                .or_insert_with(|| LabelPresence {
                    pixels: vec![0; maps.len()],
                })
                .pixels[view] += 1;
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(labels: &[Label]) -> LabelMap {
        LabelMap::new(labels.len() as u32, 1, labels.to_vec()).unwrap()
    }

    fn single_pixel_vote(labels: &[Label]) -> Label {
        let seq = ReplicatedSequence::new(1, labels.len(), labels.iter().map(|&l| map(&[l])).collect()).unwrap();
        vote(&seq)[0].labels[0]
    }

    #[test]
    fn vote_examples() {
        assert_eq!(single_pixel_vote(&[3, 3, 3, 7, 7]), 3);
        assert_eq!(single_pixel_vote(&[7, 3, 7, 3]), 3);
        assert_eq!(single_pixel_vote(&[9, 4, 4, 9, 1]), 4);
        assert_eq!(single_pixel_vote(&[2]), 2);
    }

    #[test]
    fn unanimous_replicates_reproduce_input() {
        let m = LabelMap::new(3, 2, vec![5, 5, 0, 1, 5, 2]).unwrap();
        let seq = ReplicatedSequence::new(1, 5, vec![m.clone(); 5]).unwrap();
        assert_eq!(vote(&seq), vec![m]);
    }

    #[test]
    fn sequence_validation() {
        assert!(matches!(
            ReplicatedSequence::new(0, 5, vec![]),
            Err(AssociationError::Empty { .. })
        ));
        assert!(matches!(
            ReplicatedSequence::new(2, 2, vec![map(&[1]); 3]),
            Err(AssociationError::Count { expected: 4, .. })
        ));
        assert!(matches!(
            ReplicatedSequence::new(1, 2, vec![map(&[1]), map(&[1, 2])]),
            Err(AssociationError::Shape { index: 1, .. })
        ));
    }

    #[test]
    fn compact_examples() {
        let c = compact_labels(&[map(&[0, 42, 7, 42])]);
        assert_eq!(c.table, vec![(42, 1), (7, 2)]);
        assert_eq!(c.maps[0].labels, vec![0, 1, 2, 1]);

        let c = compact_labels(&[map(&[0, 1, 2])]);
        assert_eq!(c.table, vec![(1, 1), (2, 2)]);

        let c = compact_labels(&[map(&[5, 5]), map(&[9, 0])]);
        assert_eq!(c.count(), 2);
        assert_eq!(c.table, vec![(5, 1), (9, 2)]);
        assert_eq!(c.maps[1].labels, vec![2, 0]);
    }

    #[test]
    fn report_examples() {
        let r = consistency_report(&[LabelMap::filled(5, 2, 4)]);
        assert_eq!(r[&4].pixels, vec![10]);

        let r = consistency_report(&[map(&[3, 0]), map(&[0, 0])]);
        assert_eq!(r[&3].present(), vec![true, false]);
        assert!(!r.contains_key(&0));
    }
}
