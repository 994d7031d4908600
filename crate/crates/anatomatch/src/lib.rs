//! anatomatch: dense per-voxel embedding correspondence between 3D volumes.
//!
//! The library matches a template point in one embedding volume to its
//! location in another, either by plain nearest-neighbor search or by the
//! forward-backward fixed-point procedure: iterate the A->B->A round trip
//! from an L^3 cube of start points, keep the mutually-consistent matches
//! with small start offsets, fit a local least-squares linear model on them,
//! and average the per-point predictions.
//!
//! Around that core live the two contrastive losses used to train such
//! embeddings (voxel-wise InfoNCE and a prototypical supervised-contrastive
//! loss, both with exact analytic gradients), a procedural phantom generator
//! with exact ground-truth transforms, a toy feature+projection embedder,
//! evaluation metrics, and a CLI wiring everything into reproducible
//! experiments.
//!
//! Everything is deterministic: fixed seeds give bit-identical volumes,
//! matches, and reports, independent of worker count.

pub mod cli;
pub mod embedder;
pub mod error;
pub mod experiment;
pub mod filters;
pub mod fixedpoint;
pub mod geom;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod phantom;
pub mod similarity;
pub mod testkit;
pub mod trainer;
pub mod verify;
pub mod volume;

pub use error::{Error, ErrorClass, Result};
pub use fixedpoint::{match_point, MatchMethod, MatchMode, MatchResult, MatcherConfig};
pub use geom::{PhysPoint, VoxelPoint};
pub use similarity::{nn_match, SearchRegion, SimilarityScore};
pub use volume::{concat_unified, normalize, EmbeddingVolume, LabelVolume};
