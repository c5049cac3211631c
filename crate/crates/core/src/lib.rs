//! Semantic Gaussian splatting engine.
//!
//! Renders low-dimensional semantic feature maps from 3D Gaussian scenes and
//! answers open-vocabulary queries through a multi-view language memory
//! bank.
//!
//! * [`scene`]: Gaussians, cameras, label and feature maps, embeddings.
//! * [`raster`]: projection and tiled front-to-back compositing.
//! * [`association`]: majority voting over replicated tracker output.
//! * [`bank`]: lattice IDs, the memory bank and nearest-ID snapping.
//! * [`query`]: relevancy scoring, localization and segmentation.
//! * [`synthetic`]: analytic scenes for tests and benchmarks.

pub mod association;
pub mod bank;
pub mod query;
pub mod raster;
pub mod scene;
pub mod synthetic;

pub use association::{compact_labels, consistency_report, vote, Compaction, ReplicatedSequence};
pub use bank::{build_bank, generate_ids, label_image, snap, snap_map, BankEntry, MemoryBank, SnapMap, Snapped, ViewEmbedding};
pub use query::{
    localize, relevancy, relevancy_map, segment, segment_multiclass, ClassMap, Mask, QuerySpec, RelevancyMap,
};
pub use raster::{render_reference, render_tiled, render_with, ProjectedGaussian, RenderOptions, RenderOutput};
pub use scene::{
    covariance_of, validate_scene, Embedding, FeatureMap, Label, LabelMap, PinholeCamera, SceneError,
    SemanticGaussian,
};
