//! Engine for AI-assisted interactive labeling of 3D images.
//!
//! The crate is organized by pipeline stage:
//!
//! - [`volume`]: grids, NIfTI-1 IO, resampling, distance transforms, overlap.
//! - [`guidance`]: click encoding, model input assembly, click simulation.
//! - [`likelihood`]: scribble-fitted intensity histograms and unary costs.
//! - [`graphcut`]: max-flow/min-cut and the scribble segmentation energy.
//! - [`model`]: the reference per-voxel model, its training schedules and
//!   checkpoints.
//! - [`active`]: uncertainty scoring and next-image selection.
//! - [`planner`]: dataset statistics and memory-bounded training plans.
//! - [`datastore`]: the on-disk image/label store.

pub mod active;
pub mod atomic;
pub mod datastore;
pub mod error;
pub mod graphcut;
pub mod guidance;
pub mod likelihood;
pub mod model;
pub mod planner;
pub mod stats;
pub mod synthetic;
pub mod volume;

pub use error::{Error, Result};
pub use volume::{ClickSet, Dims, LabelMask, ProbabilityMap, ScribbleMask, Volume};
