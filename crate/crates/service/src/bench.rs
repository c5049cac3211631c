//! Render and query latency on the standard synthetic workloads.

use std::time::Instant;

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;
use semsplat::bank::DEFAULT_EMBEDDING_DIM;
use semsplat::query::{relevancy_map_snapped, CANONICAL_PHRASES};
use semsplat::synthetic::{benchmark_scene, query_workload, random_unit};
use semsplat::{render_tiled, segment, snap_map, QuerySpec};

/// Benchmark image size, width × height.
pub const BENCH_WIDTH: u32 = 576;
pub const BENCH_HEIGHT: u32 = 416;
pub const BENCH_GAUSSIANS: usize = 100_000;
pub const BENCH_IDS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Timing {
    pub mean_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
    pub iters: usize,
}

fn time<T>(iters: usize, mut f: impl FnMut() -> T) -> Timing {
    std::hint::black_box(f());
    let mut samples = Vec::with_capacity(iters);
    for _ in 0..iters {
        let t = Instant::now();
        std::hint::black_box(f());
        samples.push(t.elapsed().as_secs_f64() * 1e3);
    }
    Timing {
        mean_ms: samples.iter().sum::<f64>() / iters as f64,
        min_ms: samples.iter().copied().fold(f64::INFINITY, f64::min),
        max_ms: samples.iter().copied().fold(0.0, f64::max),
        iters,
    }
}

/// Tiled render of `gaussians` random splats at the benchmark size.
pub fn render_latency(seed: u64, gaussians: usize, tile_size: u32, iters: usize) -> Timing {
    let (scene, cam) = benchmark_scene(seed, gaussians, BENCH_WIDTH, BENCH_HEIGHT);
    time(iters, || render_tiled(&scene, &cam, tile_size))
}

/// Snap, score and threshold a rendered feature map holding `ids` distinct
/// objects, with four canonical phrases.
pub fn query_latency(seed: u64, ids: usize, iters: usize) -> Timing {
    let dim = DEFAULT_EMBEDDING_DIM;
    let (fm, bank) = query_workload(seed, ids, 2, dim, BENCH_WIDTH, BENCH_HEIGHT);
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed ^ 0x9e37_79b9);
    let canon = CANONICAL_PHRASES.iter().map(|_| random_unit(&mut rng, dim)).collect();
    let q = QuerySpec::new(random_unit(&mut rng, dim), canon, 0.5).expect("valid query");
    time(iters, || {
        let sm = snap_map(&fm, &bank);
        segment(&relevancy_map_snapped(&sm, &bank, &q), q.threshold())
    })
}

pub fn table(render: &Timing, query: &Timing, gaussians: usize, ids: usize) -> String {
    let mut s = format!(
        "{:<32} {:>10} {:>10} {:>10} {:>6}\n",
        "workload", "mean ms", "min ms", "max ms", "iters"
    );
    let rows = [
        (format!("render {BENCH_WIDTH}x{BENCH_HEIGHT} {gaussians} splats"), render),
        (format!("query {BENCH_WIDTH}x{BENCH_HEIGHT} {ids} ids"), query),
    ];
    for (name, t) in rows {
        s += &format!(
            "{:<32} {:>10.2} {:>10.2} {:>10.2} {:>6}\n",
            name, t.mean_ms, t.min_ms, t.max_ms, t.iters
        );
    }
    s
}
