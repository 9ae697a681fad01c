//! Core primitives for annotation-preserving day-to-night data augmentation.
//!
//! Everything in this crate is pure computation over in-memory images and
//! parameters: no file system, no clock, no ambient entropy. Randomness is
//! always threaded through an explicit [`rand::RngCore`] so every result is
//! reproducible from a seed. File formats, the CLI and pipeline orchestration
//! live in the `signforge` companion crate.
//!
//! Module map:
//!
//! - [`image`] / [`dataset`]: raster + box types, cropping, day/night tagging, splits
//! - [`transforms`]: SAUG darkening, the policy-op catalog, ROI re-insertion
//! - [`autodiff`] / [`nn`]: a small reverse-mode tape and conv building blocks
//! - [`gan`]: U-net generator, discriminator, adversarial and content losses, training
//! - [`policy_search`]: discretized policy space, categorical controller, search loop
//! - [`detect`]: detector interface, toy grid detector, matching and precision/recall
//! - [`augment`]: the combined 4x augmentation
//! - [`synth`]: procedural day/night corpora for desk-scale experiments
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod augment;
pub mod autodiff;
pub mod dataset;
pub mod detect;
mod error;
pub mod gan;
pub mod image;
pub mod math;
pub mod nn;
pub mod policy_search;
pub mod rng;
pub mod synth;
pub mod transforms;

pub use error::{Error, Result};
pub use image::{AnnotatedImage, BoundingBox, Domain, Provenance, RgbImage, Split};
