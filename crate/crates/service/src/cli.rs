//! Command-line interface.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use semsplat::association::DEFAULT_REPLICATES;
use semsplat::bank::DEFAULT_EMBEDDING_DIM;
use semsplat::query::{DEFAULT_THRESHOLD, CANONICAL_PHRASES};
use semsplat::raster::DEFAULT_TILE_SIZE;
use semsplat::{build_bank, consistency_report, label_image, Embedding, LabelMap, PinholeCamera, ReplicatedSequence};
use serde::Deserialize;

use crate::bankfile::{read_bank, write_bank, EmbeddingRecords};
use crate::bench;
use crate::bundle::{self, assign_features, labels_file, synthetic_bundle, SceneBundle, SCENE_FILE};
use crate::camera::CameraSpec;
use crate::embed::Embedder;
use crate::format::{read_scene, write_scene, SceneFile};
use crate::ops::{self, Answer, Mode};
use crate::png::{encode_classes, encode_mask, encode_rgb, read_labels, write_labels};
use crate::server::{self, ServeConfig};

#[derive(Debug, Parser)]
#[command(name = "semsplat", version, about = "Semantic Gaussian splatting: render, query and serve scenes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Vote replicated tracker label maps into one compacted map per view.
    Associate(AssociateArgs),
    /// Build a memory bank from compacted label maps and region embeddings.
    Bank(BankArgs),
    /// Set Gaussian features from label maps and a bank.
    Assign(AssignArgs),
    /// Render a view to PNG.
    Render(RenderArgs),
    /// Run an open-vocabulary query on a view.
    Query(QueryArgs),
    /// Serve scenes over HTTP.
    Serve(ServeArgs),
    /// Print render and query latency tables.
    Bench(BenchArgs),
    /// Write the synthetic three-sphere scene bundle.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct AssociateArgs {
    /// Replicate label maps, view-major: all replicates of view 0, then view 1, ...
    #[arg(required = true)]
    pub maps: Vec<PathBuf>,
    #[arg(long)]
    pub views: usize,
    #[arg(long, default_value_t = DEFAULT_REPLICATES)]
    pub replicates: usize,
    /// Output directory for labels_<view>.png.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BankArgs {
    /// Compacted label maps, one per view in order.
    #[arg(long, required = true, num_args = 1..)]
    pub labels: Vec<PathBuf>,
    /// Region embedding records.
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub reject_radius: Option<f32>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AssignArgs {
    /// Pixel-aligned scene file.
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub bank: PathBuf,
    #[arg(long, required = true, num_args = 1..)]
    pub labels: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ViewArgs {
    /// Scene bundle directory or scene file.
    #[arg(long)]
    pub scene: PathBuf,
    /// Input view to render from.
    #[arg(long, conflicts_with = "camera")]
    pub view: Option<usize>,
    /// Camera JSON file.
    #[arg(long)]
    pub camera: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_TILE_SIZE)]
    pub tile_size: u32,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[command(flatten)]
    pub view: ViewArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Raw feature buffer: little-endian f32, three per pixel.
    #[arg(long)]
    pub features: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EmbedderArgs {
    /// Base URL of a service implementing POST /embed.
    #[arg(long, conflicts_with = "mock_embedder")]
    pub embedder_url: Option<String>,
    /// Use the built-in deterministic hash embedder.
    #[arg(long)]
    pub mock_embedder: bool,
    #[arg(long, default_value_t = DEFAULT_EMBEDDING_DIM)]
    pub mock_dim: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl EmbedderArgs {
    pub fn embedder(&self) -> Option<Embedder> {
        match (&self.embedder_url, self.mock_embedder) {
            (Some(url), _) => Some(Embedder::http(url)),
            (None, true) => Some(Embedder::mock(self.mock_dim, self.seed)),
            (None, false) => None,
        }
    }
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[command(flatten)]
    pub view: ViewArgs,
    /// Query text; repeat for multiclass.
    #[arg(long)]
    pub text: Vec<String>,
    /// JSON file holding one embedding or a list of embeddings.
    #[arg(long, conflicts_with = "text")]
    pub embedding: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "segment")]
    pub mode: Mode,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// Mask or class PNG for segment and multiclass.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub embedder: EmbedderArgs,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub scenes_dir: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: SocketAddr,
    #[arg(long, default_value_t = DEFAULT_TILE_SIZE)]
    pub tile_size: u32,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[command(flatten)]
    pub embedder: EmbedderArgs,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = bench::BENCH_GAUSSIANS)]
    pub gaussians: usize,
    #[arg(long, default_value_t = bench::BENCH_IDS)]
    pub ids: usize,
    #[arg(long, default_value_t = 10)]
    pub iters: usize,
    #[arg(long, default_value_t = DEFAULT_TILE_SIZE)]
    pub tile_size: u32,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "spheres")]
    pub name: String,
    #[arg(long, default_value_t = bench::BENCH_WIDTH)]
    pub width: u32,
    #[arg(long, default_value_t = bench::BENCH_HEIGHT)]
    pub height: u32,
    #[arg(long, default_value_t = DEFAULT_EMBEDDING_DIM)]
    pub dim: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Invalid invocation; exit code 2.
    #[error("{0}")]
    Usage(String),
    #[error("{0:#}")]
    Failed(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Usage(_) => 2,
            Self::Failed(_) => 1,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn fail(e: impl std::error::Error + Send + Sync + 'static) -> CliError {
    CliError::Failed(e.into())
}

pub async fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Associate(a) => associate(a),
        Command::Bank(a) => bank(a),
        Command::Assign(a) => assign(a),
        Command::Render(a) => render(a),
        Command::Query(a) => query(a).await,
        Command::Serve(a) => serve(a).await,
        Command::Bench(a) => {
            let r = bench::render_latency(a.seed, a.gaussians, a.tile_size, a.iters);
            let q = bench::query_latency(a.seed, a.ids, a.iters);
            print!("{}", bench::table(&r, &q, a.gaussians, a.ids));
            Ok(())
        }
        Command::Synth(a) => {
            let b = synthetic_bundle(&a.name, a.width, a.height, a.dim, a.seed).map_err(fail)?;
            b.save(&a.out).map_err(fail)?;
            println!("wrote {} ({} gaussians, {} objects)", a.out.display(), b.scene.gaussians.len(), b.bank.len());
            Ok(())
        }
    }
}

fn read_maps(paths: &[PathBuf]) -> Result<Vec<LabelMap>> {
    paths
        .iter()
        .map(|p| read_labels(p).map_err(|e| CliError::Failed(anyhow::anyhow!("{}: {e}", p.display()))))
        .collect()
}

fn associate(a: AssociateArgs) -> Result<()> {
    let maps = read_maps(&a.maps)?;
    let seq = ReplicatedSequence::new(a.views, a.replicates, maps).map_err(|e| CliError::Usage(e.to_string()))?;
    let compaction = bundle::associate(&seq);
    std::fs::create_dir_all(&a.out).map_err(fail)?;
    for (view, m) in compaction.maps.iter().enumerate() {
        write_labels(&a.out.join(labels_file(view)), m).map_err(fail)?;
    }
    println!("tracker label -> compact label");
    for (old, new) in &compaction.table {
        println!("{old:>8} -> {new}");
    }
    for (label, presence) in consistency_report(&compaction.maps) {
        println!("label {label}: visible in {}/{} views, pixels {:?}", presence.view_count(), a.views, presence.pixels);
    }
    Ok(())
}

fn bank(a: BankArgs) -> Result<()> {
    let maps = read_maps(&a.labels)?;
    let records = EmbeddingRecords::read(&a.embeddings).map_err(fail)?;
    let embeddings = records.to_view_embeddings().map_err(fail)?;
    let bank = build_bank(&maps, &embeddings, records.dim, a.seed)
        .map_err(fail)?
        .with_reject_radius(a.reject_radius);
    write_bank(&a.out, &bank).map_err(fail)?;
    println!("{} entries, lattice side {}, dim {}", bank.len(), bank.lattice_m(), bank.dim());
    Ok(())
}

fn assign(a: AssignArgs) -> Result<()> {
    let mut scene = read_scene(&a.scene).map_err(fail)?;
    if !scene.pixel_aligned {
        return Err(CliError::Usage(format!("{} is not pixel-aligned", a.scene.display())));
    }
    let bank = read_bank(&a.bank).map_err(fail)?;
    let images = read_maps(&a.labels)?
        .iter()
        .map(|m| label_image(m, &bank))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(fail)?;
    assign_features(&mut scene.gaussians, &images).map_err(fail)?;
    write_scene(&a.out, &scene).map_err(fail)?;
    println!("assigned {} gaussians", scene.gaussians.len());
    Ok(())
}

/// A bundle directory, or a bare scene file wrapped with an empty bank.
fn load_scene(path: &Path) -> Result<SceneFile> {
    let file = if path.is_dir() { path.join(SCENE_FILE) } else { path.to_path_buf() };
    read_scene(&file).map_err(|e| CliError::Failed(anyhow::anyhow!("{}: {e}", file.display())))
}

fn camera(v: &ViewArgs, inputs: &[PinholeCamera]) -> Result<PinholeCamera> {
    let spec = match (&v.view, &v.camera) {
        (_, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(fail)?;
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
        }
        (Some(view), None) => CameraSpec::View { view: *view },
        (None, None) => CameraSpec::View { view: 0 },
    };
    spec.resolve(inputs).map_err(|e| CliError::Usage(e.to_string()))
}

fn render(a: RenderArgs) -> Result<()> {
    let scene = load_scene(&a.view.scene)?;
    let cam = camera(&a.view, &scene.cameras)?;
    let opts = semsplat::RenderOptions {
        tile_size: a.view.tile_size,
        ..Default::default()
    };
    let start = std::time::Instant::now();
    let out = semsplat::render_with(&scene.gaussians, &cam, &opts);
    let elapsed = ops::ms(start);
    std::fs::write(&a.out, encode_rgb(&out.rgb)).map_err(fail)?;
    if let Some(path) = &a.features {
        let bytes: Vec<u8> = out.feature.values.iter().flatten().flat_map(|v| v.to_le_bytes()).collect();
        std::fs::write(path, bytes).map_err(fail)?;
    }
    println!("rendered {}x{} in {elapsed:.2} ms", cam.width, cam.height);
    Ok(())
}

#[derive(Deserialize)]
#[serde(untagged)]
enum EmbeddingFile {
    One(Vec<f32>),
    Many(Vec<Vec<f32>>),
}

async fn query(a: QueryArgs) -> Result<()> {
    let embedder = a.embedder.embedder();
    let queries: Vec<Embedding> = if let Some(path) = &a.embedding {
        let text = std::fs::read_to_string(path).map_err(fail)?;
        match serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))? {
            EmbeddingFile::One(v) => vec![Embedding(v)],
            EmbeddingFile::Many(v) => v.into_iter().map(Embedding).collect(),
        }
    } else if a.text.is_empty() {
        return Err(CliError::Usage("give --text or --embedding".into()));
    } else {
        let Some(embedder) = &embedder else {
            return Err(CliError::Usage(
                "--text needs an embedder: pass --embedder-url <URL> or --mock-embedder".into(),
            ));
        };
        embedder.embed(&a.text).await.map_err(fail)?
    };
    if !a.view.scene.is_dir() {
        return Err(CliError::Usage("query needs a scene bundle directory".into()));
    }
    let bundle = SceneBundle::load(&a.view.scene).map_err(fail)?;
    let canon = match (&bundle.canon, &embedder) {
        (Some(c), _) => c.embeddings().map_err(fail)?,
        (None, Some(e)) => {
            let phrases: Vec<String> = CANONICAL_PHRASES.iter().map(|s| s.to_string()).collect();
            e.embed(&phrases).await.map_err(fail)?
        }
        (None, None) => {
            return Err(CliError::Usage(
                "bundle has no canon.json; pass --embedder-url or --mock-embedder".into(),
            ))
        }
    };
    let cam = camera(&a.view, bundle.cameras())?;
    let start = std::time::Instant::now();
    let rendered = ops::render(&bundle, &cam, a.view.tile_size);
    let render_ms = ops::ms(start);
    let outcome = ops::query(&bundle, &rendered, &queries, &canon, a.mode, a.threshold).map_err(fail)?;
    match &outcome.answer {
        Answer::Point { x, y, score } => println!("point ({x}, {y}) score {score:.4}"),
        Answer::Mask(m) => {
            println!("mask {} pixels", m.count());
            if let Some(out) = &a.out {
                std::fs::write(out, encode_mask(m)).map_err(fail)?;
            }
        }
        Answer::Classes(c) => {
            println!("classes over {} queries", queries.len());
            if let Some(out) = &a.out {
                std::fs::write(out, encode_classes(c)).map_err(fail)?;
            }
        }
    }
    for (i, s) in outcome.stats.iter().enumerate() {
        println!("query {i}: relevancy min {:.4} max {:.4} mean {:.4}", s.min, s.max, s.mean);
    }
    println!(
        "{} ids visible; render {render_ms:.2} ms, query {:.2} ms",
        outcome.unique, outcome.query_ms
    );
    Ok(())
}

async fn serve(a: ServeArgs) -> Result<()> {
    server::serve(ServeConfig {
        scenes_dir: a.scenes_dir,
        bind: a.bind,
        embedder: a.embedder.embedder(),
        tile_size: a.tile_size,
        threshold: a.threshold,
    })
    .await?;
    Ok(())
}
