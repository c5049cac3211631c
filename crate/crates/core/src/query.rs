//! Open-vocabulary relevancy, localization and segmentation.
//!
//! Relevancy of a pixel against a query embedding `q` is
//!
//! ```text
//! max over views j  min over canon i  exp(L_j·q) / (exp(L_j·q) + exp(L_j·c_i))
//! ```
//!
//! where `L_j` are the pixel's per-view embeddings recovered through the
//! memory bank and `c_i` the canonical phrase embeddings. Views holding the
//! zero sentinel carry no information and are skipped.

use rayon::prelude::*;
use thiserror::Error;

use crate::bank::{snap_map, MemoryBank, SnapMap};
use crate::scene::{Embedding, FeatureMap};

pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const CANONICAL_PHRASES: [&str; 4] = ["object", "things", "stuff", "texture"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QueryError {
    #[error("at least one canonical embedding is required")]
    NoCanonical,
    #[error("at least one query is required")]
    NoQueries,
    #[error("{what} has dimension {actual}, expected {expected}")]
    Dimension {
        what: String,
        expected: usize,
        actual: usize,
    },
    #[error("{0} is the zero vector")]
    Zero(String),
    #[error("{0} has non-finite values")]
    NonFinite(String),
    #[error("threshold {0} must lie strictly between 0 and 1")]
    Threshold(f64),
    #[error("queries must share one canonical set")]
    CanonMismatch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuerySpec {
    query: Embedding,
    canonical: Vec<Embedding>,
    threshold: f64,
}

impl QuerySpec {
    /// Validates and L2-normalizes all embeddings.
    pub fn new(query: Embedding, canonical: Vec<Embedding>, threshold: f64) -> Result<Self, QueryError> {
        if canonical.is_empty() {
            return Err(QueryError::NoCanonical);
        }
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(QueryError::Threshold(threshold));
        }
        let dim = query.dim();
        let check = |e: &Embedding, what: String| {
            if e.dim() != dim {
                return Err(QueryError::Dimension {
                    what,
                    expected: dim,
                    actual: e.dim(),
                });
            }
            if !e.is_finite() {
                return Err(QueryError::NonFinite(what));
            }
            if e.is_zero() {
                return Err(QueryError::Zero(what));
            }
            Ok(())
        };
        check(&query, "query embedding".into())?;
        for (i, c) in canonical.iter().enumerate() {
            check(c, format!("canonical embedding {i}"))?;
        }
        Ok(Self {
            query: query.normalized(),
            canonical: canonical.iter().map(Embedding::normalized).collect(),
            threshold,
        })
    }

    /// Uses the embeddings as given, without normalizing. Unit-level checks
    /// of the scoring formula need raw dot products.
    pub fn raw(query: Embedding, canonical: Vec<Embedding>, threshold: f64) -> Self {
        Self {
            query,
            canonical,
            threshold,
        }
    }

    pub fn query(&self) -> &Embedding {
        &self.query
    }

    pub fn canonical(&self) -> &[Embedding] {
        &self.canonical
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn dim(&self) -> usize {
        self.query.dim()
    }
}

/// `exp(a) / (exp(a) + exp(b))`, evaluated as `1 / (1 + exp(b - a))`.
#[inline]
pub fn pairwise_term(a: f64, b: f64) -> f64 {
    1.0 / (1.0 + (b - a).exp())
}

/// Relevancy of one pixel's per-view embeddings. Zero sentinel views are
/// excluded; if every view is a sentinel the score is 0.
pub fn relevancy(views: &[Embedding], q: &QuerySpec) -> f64 {
    views
        .iter()
        .filter(|v| !v.is_zero())
        .map(|v| {
            let a = v.dot(&q.query);
            q.canonical
                .iter()
                .map(|c| pairwise_term(a, v.dot(c)))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelevancyMap {
    pub width: u32,
    pub height: u32,
    pub scores: Vec<f64>,
}

impl RelevancyMap {
    pub fn new(width: u32, height: u32, scores: Vec<f64>) -> Self {
        assert_eq!(scores.len(), width as usize * height as usize);
        Self {
            width,
            height,
            scores,
        }
    }

    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.scores[y as usize * self.width as usize + x as usize]
    }

    pub fn stats(&self) -> ScoreStats {
        let n = self.scores.len().max(1) as f64;
        ScoreStats {
            min: self.scores.iter().copied().fold(f64::INFINITY, f64::min),
            max: self.scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean: self.scores.iter().sum::<f64>() / n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

/// Scores every distinct snapped entry once and broadcasts to its pixels.
pub fn relevancy_map(fm: &FeatureMap, bank: &MemoryBank, q: &QuerySpec) -> RelevancyMap {
    relevancy_map_snapped(&snap_map(fm, bank), bank, q)
}

/// [`relevancy_map`] for a precomputed snap map.
pub fn relevancy_map_snapped(sm: &SnapMap, bank: &MemoryBank, q: &QuerySpec) -> RelevancyMap {
    let mut per_entry = vec![0.0f64; bank.len()];
    let scored: Vec<(u32, f64)> = sm
        .unique
        .par_iter()
        .map(|&i| (i, relevancy(&bank.entries()[i as usize].views, q)))
        .collect();
    for (i, s) in scored {
        per_entry[i as usize] = s;
    }
    let scores = sm
        .indices
        .iter()
        .map(|&i| {
            if i == SnapMap::BACKGROUND {
                0.0
            } else {
                per_entry[i as usize]
            }
        })
        .collect();
    RelevancyMap::new(sm.width, sm.height, scores)
}

/// Pixel with the highest score; ties go to the first in row-major order.
pub fn localize(rm: &RelevancyMap) -> (u32, u32) {
    let mut best = 0;
    for (i, &s) in rm.scores.iter().enumerate() {
        if s > rm.scores[best] {
            best = i;
        }
    }
    (best as u32 % rm.width, best as u32 / rm.width)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: u32,
    pub height: u32,
    pub values: Vec<bool>,
}

impl Mask {
    pub fn count(&self) -> usize {
        self.values.iter().filter(|&&v| v).count()
    }
}

/// Pixels whose score is strictly above `threshold`.
pub fn segment(rm: &RelevancyMap, threshold: f64) -> Mask {
    Mask {
        width: rm.width,
        height: rm.height,
        values: rm.scores.iter().map(|&s| s > threshold).collect(),
    }
}

/// Per-pixel class map: `0` for background, otherwise `1 + index` of the
/// winning query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassMap {
    pub width: u32,
    pub height: u32,
    pub classes: Vec<u16>,
}

impl ClassMap {
    pub fn get(&self, x: u32, y: u32) -> u16 {
        self.classes[y as usize * self.width as usize + x as usize]
    }
}

/// Assigns every pixel the query with the highest relevancy. Ties go to the
/// smallest query index; background pixels get class 0.
pub fn segment_multiclass(fm: &FeatureMap, bank: &MemoryBank, queries: &[QuerySpec]) -> Result<ClassMap, QueryError> {
    segment_multiclass_snapped(&snap_map(fm, bank), bank, queries)
}

pub fn segment_multiclass_snapped(
    sm: &SnapMap,
    bank: &MemoryBank,
    queries: &[QuerySpec],
) -> Result<ClassMap, QueryError> {
    let first = queries.first().ok_or(QueryError::NoQueries)?;
    if queries.iter().any(|q| q.canonical != first.canonical) {
        return Err(QueryError::CanonMismatch);
    }
    let mut per_entry = vec![0u16; bank.len()];
    for &i in &sm.unique {
        let views = &bank.entries()[i as usize].views;
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (k, q) in queries.iter().enumerate() {
            let s = relevancy(views, q);
            if s > best_score {
                best_score = s;
                best = k;
            }
        }
        per_entry[i as usize] = best as u16 + 1;
    }
    let classes = sm
        .indices
        .iter()
        .map(|&i| if i == SnapMap::BACKGROUND { 0 } else { per_entry[i as usize] })
        .collect();
    Ok(ClassMap {
        width: sm.width,
        height: sm.height,
        classes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn e(v: &[f32]) -> Embedding {
        Embedding(v.to_vec())
    }

    #[test]
    fn equal_logits_give_one_half() {
        // Every dot is zero.
        let q = QuerySpec::raw(e(&[0.0, 1.0, 0.0]), vec![e(&[0.0, 0.0, 1.0])], 0.5);
        assert_eq!(relevancy(&[e(&[1.0, 0.0, 0.0])], &q), 0.5);
    }

    #[test]
    fn min_over_canon_and_sentinel_exclusion() {
        // view . q = 1.0, view . canon = {0.0, 0.5}.
        let view = e(&[1.0, 0.0, 0.0]);
        let q = QuerySpec::raw(e(&[1.0, 0.0, 0.0]), vec![e(&[0.0, 1.0, 0.0]), e(&[0.5, 1.0, 0.0])], 0.5);
        let expected = 1.0 / (1.0 + (-0.5f64).exp());
        assert_abs_diff_eq!(relevancy(std::slice::from_ref(&view), &q), expected, epsilon = 1e-15);
        assert_abs_diff_eq!(expected, 0.62246, epsilon = 1e-5);
        let both = [view, Embedding::zeros(3)];
        assert_eq!(relevancy(&both, &q), relevancy(&both[..1], &q));
        assert_eq!(relevancy(&[Embedding::zeros(3), Embedding::zeros(3)], &q), 0.0);
    }

    #[test]
    fn query_spec_validation() {
        let q = e(&[1.0, 0.0]);
        assert_eq!(QuerySpec::new(q.clone(), vec![], 0.5), Err(QueryError::NoCanonical));
        assert!(matches!(QuerySpec::new(q.clone(), vec![e(&[1.0])], 0.5), Err(QueryError::Dimension { .. })));
        assert!(matches!(QuerySpec::new(q.clone(), vec![e(&[0.0, 0.0])], 0.5), Err(QueryError::Zero(_))));
        assert_eq!(QuerySpec::new(q.clone(), vec![q.clone()], 1.0), Err(QueryError::Threshold(1.0)));
        let spec = QuerySpec::new(e(&[3.0, 4.0]), vec![q], 0.3).unwrap();
        assert_abs_diff_eq!(spec.query().norm(), 1.0, epsilon = 1e-7);
    }

    #[test]
    fn localize_ties_are_row_major() {
        let rm = RelevancyMap::new(3, 2, vec![0.2; 6]);
        assert_eq!(localize(&rm), (0, 0));
        let rm = RelevancyMap::new(3, 2, vec![0.1, 0.1, 0.1, 0.1, 0.9, 0.9]);
        assert_eq!(localize(&rm), (1, 1));
    }

    #[test]
    fn segment_is_strict() {
        let rm = RelevancyMap::new(2, 1, vec![0.4, 0.4]);
        assert_eq!(segment(&rm, 0.5).count(), 0);
        let rm = RelevancyMap::new(3, 1, vec![0.5, 0.5000001, 0.7]);
        assert_eq!(segment(&rm, 0.5).values, vec![false, true, true]);
    }
}
