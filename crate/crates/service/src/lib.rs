//! File formats, CLI and HTTP service for the semsplat engine.
//!
//! * [`format`]: the binary scene file.
//! * [`bankfile`]: bank, embedding-record and canonical-phrase JSON.
//! * [`png`]: label-map and result images.
//! * [`bundle`]: scene bundles and feature assignment.
//! * [`embed`]: the `/embed` client and the mock embedder.
//! * [`server`]: the HTTP service.

pub mod bankfile;
pub mod bench;
pub mod bundle;
pub mod camera;
pub mod cli;
pub mod embed;
pub mod format;
pub mod ops;
pub mod png;
pub mod server;

pub use bundle::{assign_features, SceneBundle};
pub use format::{read_scene, write_scene, SceneFile};
