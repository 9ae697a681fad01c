//! Annotation-aware image transforms.
//!
//! [`saug`] is the three-step pseudo-night heuristic; [`policy`] holds the
//! discretized op catalog used by policy search; [`geometry`] and
//! [`photometric`] implement the individual ops; [`roi`] covers box
//! occlusion and re-inserting daytime ROIs into generated images.

pub mod geometry;
pub mod photometric;
pub mod policy;
pub mod roi;
pub mod saug;

pub use policy::{apply_op, apply_subpolicy, OpKind, Policy, PolicyOp, SubPolicy};
pub use roi::{occlusion_op, reinsert_roi, OcclusionFill};
pub use saug::{saug_transform, SaugParams};
