//! Track-driven motion compensation for dynamic 3D Gaussian scenes.
//!
//! Given the Gaussians of a first frame and dense per-view pixel tracks, the
//! crate estimates each Gaussian's position, rotation and scale in later
//! frames:
//!
//! 1. [`splat`] rasterizes per-pixel blending weights `alpha * T`.
//! 2. [`pwils`] fits a weighted affine motion per Gaussian and view from
//!    incrementally accumulated moments.
//! 3. [`multiview`] triangulates the moved means, solves the moved 3D
//!    covariance and decomposes it back into rotation and scale.
//! 4. [`regularize`] detects static Gaussians, median-filters motions over
//!    nearest neighbours and propagates motion into unsolvable Gaussians.
//! 5. [`pipeline`] ties the stages together over clips and a worker pool,
//!    with a synthetic scene generator and an oracle tracker for testing.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod geometry;
pub mod io;
pub mod multiview;
pub mod pipeline;
pub mod pwils;
pub mod regularize;
pub mod splat;

pub use config::{Config, PropagationAverage};
pub use error::{Error, Result};
pub use geometry::{
    apply_affine, covariance3d, project_gaussian, project_point, projection_jacobian,
    AffineMotion, CameraView, Gaussian2D, Gaussian3D, Sym2, Sym3,
};
pub use multiview::{MotionStatus, MotionUpdate};
pub use pwils::{MotionAccumulator, TrackField, ViewMotion};
pub use splat::{PixelContribution, WeightMap};
