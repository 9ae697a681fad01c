//! Detector interface, greedy detection matching, precision/recall
//! reports with bootstrap resampling, and a small trainable grid detector.

mod matching;
mod report;
mod toy;

pub use matching::{match_detections, Counts, MatchOutcome, DEFAULT_IOU_THRESHOLD};
pub use report::{
    evaluate_counts, evaluate_with_resampling, precision_recall, EvalDomain, EvalOptions, EvalReport, MetricSummary,
    PrStats, Spread,
};
pub use toy::{ToyDetector, ToyDetectorConfig, ToyDetectorParams, DETECTOR_STRIDE};

use alloc::string::String;
use alloc::vec::Vec;

use crate::image::{AnnotatedImage, BoundingBox, RgbImage};
use crate::Result;

/// One predicted box. The class label lives on `bbox`.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub image_id: String,
    pub bbox: BoundingBox,
    pub confidence: f64,
}

impl Detection {
    pub fn new(image_id: impl Into<String>, bbox: BoundingBox, confidence: f64) -> Self {
        Self { image_id: image_id.into(), bbox, confidence }
    }

    pub fn class_label(&self) -> &str {
        &self.bbox.class_label
    }
}

/// Anything that can be trained on annotated images and asked for boxes.
///
/// `predict` must be a pure function of `params` and the pixels.
pub trait Detector {
    type Params;

    fn train(&self, dataset: &[AnnotatedImage], seed: u64) -> Result<Self::Params>;

    fn predict(
        &self,
        params: &Self::Params,
        image_id: &str,
        image: &RgbImage,
        confidence_threshold: f64,
    ) -> Vec<Detection>;
}
