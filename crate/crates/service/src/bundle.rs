//! Scene bundles: the complete inferred representation of one scene and
//! its directory layout.
//!
//! ```text
//! <dir>/scene.slgs      gaussians, input cameras, metadata
//! <dir>/bank.json       memory bank
//! <dir>/labels_<i>.png  compacted label map of input view i
//! <dir>/canon.json      canonical phrase embeddings (optional)
//! ```

use std::path::Path;

use semsplat::association::AssociationError;
use semsplat::bank::BankError;
use semsplat::synthetic::SphereScene;
use semsplat::{
    build_bank, compact_labels, label_image, vote, Compaction, Embedding, FeatureMap, Label, LabelMap, MemoryBank,
    PinholeCamera, ReplicatedSequence, SemanticGaussian, ViewEmbedding,
};
use semsplat::query::CANONICAL_PHRASES;
use thiserror::Error;

use crate::bankfile::{read_bank, write_bank, CanonFile, TextFormatError};
use crate::embed::mock_embedding;
use crate::format::{read_scene, write_scene, FormatError, SceneFile};
use crate::png::{read_labels, write_labels, PngError};

pub const SCENE_FILE: &str = "scene.slgs";
pub const BANK_FILE: &str = "bank.json";
pub const CANON_FILE: &str = "canon.json";

pub fn labels_file(view: usize) -> String {
    format!("labels_{view}.png")
}

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("scene file: {0}")]
    Scene(#[from] FormatError),
    #[error("{0}")]
    Text(#[from] TextFormatError),
    #[error("label map {view}: {source}")]
    Labels { view: usize, source: PngError },
    #[error(transparent)]
    Bank(#[from] BankError),
    #[error(transparent)]
    Association(#[from] AssociationError),
    #[error(transparent)]
    Assign(#[from] AssignError),
    #[error("{maps} label maps for {views} views")]
    ViewCount { maps: usize, views: usize },
    #[error("label map {view} is {width}x{height}, camera is {cam_width}x{cam_height}")]
    MapShape {
        view: usize,
        width: u32,
        height: u32,
        cam_width: u32,
        cam_height: u32,
    },
    #[error("label {label} in view {view} has no bank entry (bank holds {entries})")]
    Uncovered { view: usize, label: Label, entries: usize },
    #[error("bank has {bank} views, scene has {scene}")]
    BankViews { bank: usize, scene: usize },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error, PartialEq)]
pub enum AssignError {
    #[error("{actual} gaussians for {expected} pixels")]
    Count { expected: usize, actual: usize },
}

/// Sets every pixel-aligned Gaussian's feature from the semantic label
/// image of its source pixel. Gaussians are view-major, row-major.
pub fn assign_features(gaussians: &mut [SemanticGaussian], label_images: &[FeatureMap]) -> Result<(), AssignError> {
    let expected: usize = label_images.iter().map(FeatureMap::len).sum();
    if gaussians.len() != expected {
        return Err(AssignError::Count {
            expected,
            actual: gaussians.len(),
        });
    }
    let features = label_images.iter().flat_map(|m| m.values.iter());
    for (g, f) in gaussians.iter_mut().zip(features) {
        g.feature = *f;
    }
    Ok(())
}

/// Votes replicate label maps and compacts the result to labels `1..=N`.
pub fn associate(seq: &ReplicatedSequence) -> Compaction {
    compact_labels(&vote(seq))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneBundle {
    pub scene: SceneFile,
    pub label_maps: Vec<LabelMap>,
    pub bank: MemoryBank,
    pub canon: Option<CanonFile>,
}

impl SceneBundle {
    /// Builds the bank over compacted label maps and assigns features to
    /// the pixel-aligned Gaussians.
    pub fn assemble(
        mut scene: SceneFile,
        label_maps: Vec<LabelMap>,
        embeddings: &[ViewEmbedding],
        dim: usize,
    ) -> Result<Self, BundleError> {
        let bank = build_bank(&label_maps, embeddings, dim, scene.seed)?;
        let images = label_maps
            .iter()
            .map(|m| label_image(m, &bank))
            .collect::<Result<Vec<_>, _>>()?;
        assign_features(&mut scene.gaussians, &images)?;
        let bundle = Self {
            scene,
            label_maps,
            bank,
            canon: None,
        };
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn name(&self) -> &str {
        &self.scene.name
    }

    pub fn cameras(&self) -> &[PinholeCamera] {
        &self.scene.cameras
    }

    pub fn validate(&self) -> Result<(), BundleError> {
        self.scene.validate()?;
        let views = self.scene.cameras.len();
        if self.label_maps.len() != views {
            return Err(BundleError::ViewCount {
                maps: self.label_maps.len(),
                views,
            });
        }
        if self.bank.view_count() != views {
            return Err(BundleError::BankViews {
                bank: self.bank.view_count(),
                scene: views,
            });
        }
        for (view, (m, cam)) in self.label_maps.iter().zip(&self.scene.cameras).enumerate() {
            if m.width != cam.width || m.height != cam.height {
                return Err(BundleError::MapShape {
                    view,
                    width: m.width,
                    height: m.height,
                    cam_width: cam.width,
                    cam_height: cam.height,
                });
            }
            if let Some(&label) = m.labels.iter().find(|&&l| l as usize > self.bank.len()) {
                return Err(BundleError::Uncovered {
                    view,
                    label,
                    entries: self.bank.len(),
                });
            }
        }
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<(), BundleError> {
        self.validate()?;
        std::fs::create_dir_all(dir)?;
        write_scene(&dir.join(SCENE_FILE), &self.scene)?;
        write_bank(&dir.join(BANK_FILE), &self.bank)?;
        for (view, m) in self.label_maps.iter().enumerate() {
            write_labels(&dir.join(labels_file(view)), m).map_err(|source| BundleError::Labels { view, source })?;
        }
        if let Some(canon) = &self.canon {
            canon.write(&dir.join(CANON_FILE))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, BundleError> {
        let scene = read_scene(&dir.join(SCENE_FILE))?;
        let bank = read_bank(&dir.join(BANK_FILE))?;
        let label_maps = (0..scene.cameras.len())
            .map(|view| read_labels(&dir.join(labels_file(view))).map_err(|source| BundleError::Labels { view, source }))
            .collect::<Result<Vec<_>, _>>()?;
        let canon_path = dir.join(CANON_FILE);
        let canon = if canon_path.exists() {
            Some(CanonFile::read(&canon_path)?)
        } else {
            None
        };
        let bundle = Self {
            scene,
            label_maps,
            bank,
            canon,
        };
        bundle.validate()?;
        Ok(bundle)
    }
}

/// Phrases naming the spheres of [`SphereScene::three_objects`].
pub const SYNTHETIC_PHRASES: [&str; 3] = ["red ball", "green ball", "blue ball"];

/// The three-sphere scene as a complete bundle. Region embeddings are the
/// mock embeddings of [`SYNTHETIC_PHRASES`], so text queries through the
/// mock embedder with the same `dim` and `seed` hit their object exactly.
pub fn synthetic_bundle(name: &str, width: u32, height: u32, dim: usize, seed: u64) -> Result<SceneBundle, BundleError> {
    let world = SphereScene::three_objects(width, height);
    let maps: Vec<LabelMap> = world.inputs.iter().map(|c| world.label_map(c)).collect();
    let compaction = compact_labels(&maps);
    let mut records = Vec::new();
    for (view, m) in compaction.maps.iter().enumerate() {
        for &(old, new) in &compaction.table {
            let object = world.spheres.iter().position(|s| s.label == old).expect("tracker label");
            if m.labels.contains(&new) {
                records.push(ViewEmbedding {
                    view,
                    label: new,
                    embedding: mock_embedding(SYNTHETIC_PHRASES[object], dim, seed),
                });
            }
        }
    }
    let scene = SceneFile {
        name: name.into(),
        seed,
        cameras: world.inputs.clone(),
        pixel_aligned: true,
        gaussians: world.pixel_aligned_gaussians(),
    };
    let mut bundle = SceneBundle::assemble(scene, compaction.maps, &records, dim)?;
    let radius = bundle.bank.strict_radius();
    bundle.bank = bundle.bank.with_reject_radius(Some(radius));
    let phrases: Vec<String> = CANONICAL_PHRASES.iter().map(|s| s.to_string()).collect();
    let canon: Vec<Embedding> = phrases.iter().map(|p| mock_embedding(p, dim, seed)).collect();
    bundle.canon = Some(CanonFile::new(&phrases, &canon));
    Ok(bundle)
}
