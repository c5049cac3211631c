//! Render and query operations shared by the CLI and the HTTP service.

use std::time::Instant;

use semsplat::query::{relevancy_map_snapped, segment_multiclass_snapped, QueryError, ScoreStats};
use semsplat::{
    localize, render_with, segment, snap_map, ClassMap, Embedding, Mask, PinholeCamera, QuerySpec, RenderOptions,
    RenderOutput,
};
use serde::{Deserialize, Serialize};

use crate::bundle::SceneBundle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Locate,
    Segment,
    Multiclass,
}

pub fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

pub fn render(bundle: &SceneBundle, cam: &PinholeCamera, tile_size: u32) -> RenderOutput {
    let opts = RenderOptions {
        tile_size,
        ..RenderOptions::default()
    };
    render_with(&bundle.scene.gaussians, cam, &opts)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Answer {
    Point { x: u32, y: u32, score: f64 },
    Mask(Mask),
    Classes(ClassMap),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryOutcome {
    pub answer: Answer,
    /// Relevancy statistics per query.
    pub stats: Vec<ScoreStats>,
    /// Distinct bank entries visible in the render.
    pub unique: usize,
    pub query_ms: f64,
}

/// Answers `queries` on a rendered feature map. Locate and segment use the
/// first query only.
pub fn query(
    bundle: &SceneBundle,
    rendered: &RenderOutput,
    queries: &[Embedding],
    canon: &[Embedding],
    mode: Mode,
    threshold: f64,
) -> Result<QueryOutcome, QueryError> {
    let specs = queries
        .iter()
        .map(|q| QuerySpec::new(q.clone(), canon.to_vec(), threshold))
        .collect::<Result<Vec<_>, _>>()?;
    let first = specs.first().ok_or(QueryError::NoQueries)?;
    let dim = bundle.bank.dim();
    if first.dim() != dim {
        return Err(QueryError::Dimension {
            what: "query embedding".into(),
            expected: dim,
            actual: first.dim(),
        });
    }
    let start = Instant::now();
    let sm = snap_map(&rendered.feature, &bundle.bank);
    let bank = &bundle.bank;
    let (answer, stats) = match mode {
        Mode::Locate => {
            let rm = relevancy_map_snapped(&sm, bank, first);
            let (x, y) = localize(&rm);
            (
                Answer::Point {
                    x,
                    y,
                    score: rm.get(x, y),
                },
                vec![rm.stats()],
            )
        }
        Mode::Segment => {
            let rm = relevancy_map_snapped(&sm, bank, first);
            (Answer::Mask(segment(&rm, threshold)), vec![rm.stats()])
        }
        Mode::Multiclass => {
            let classes = segment_multiclass_snapped(&sm, bank, &specs)?;
            let stats = specs.iter().map(|s| relevancy_map_snapped(&sm, bank, s).stats()).collect();
            (Answer::Classes(classes), stats)
        }
    };
    Ok(QueryOutcome {
        answer,
        stats,
        unique: sm.unique.len(),
        query_ms: ms(start),
    })
}
