use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;

use super::matching::{match_detections, Counts};
use super::Detector;
use crate::image::{string_enum, AnnotatedImage};
use crate::math::mean_std;

use crate::rng::substream;
use crate::{Error, Result};

/// Per-run values of one metric; `None` where it was undefined.
type Samples = Vec<Option<f64>>;

/// Which test images a report covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EvalDomain {
    Day,
    Night,
    All,
}

string_enum!(EvalDomain { Day => "day", Night => "night", All => "all" });

/// Counts with their ratios; a ratio with a zero denominator is `None`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PrStats {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

pub fn precision_recall(c: Counts) -> PrStats {
    let ratio = |num: u64, den: u64| (den > 0).then(|| num as f64 / den as f64);
    PrStats { tp: c.tp, fp: c.fp, fn_: c.fn_, precision: ratio(c.tp, c.tp + c.fp), recall: ratio(c.tp, c.tp + c.fn_) }
}

/// Mean and sample standard deviation over the runs where a metric was defined.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Spread {
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub defined_runs: usize,
}

impl Spread {
    fn of(values: &[Option<f64>]) -> Self {
        let v: Vec<f64> = values.iter().flatten().copied().collect();
        if v.is_empty() {
            return Self::default();
        }
        let (m, s) = mean_std(&v);
        Self { mean: Some(m), std: Some(s), defined_runs: v.len() }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricSummary {
    /// Metrics on the full, unresampled test set.
    pub stats: PrStats,
    pub precision: Spread,
    pub recall: Spread,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub domain: EvalDomain,
    pub runs: usize,
    pub per_class: BTreeMap<String, MetricSummary>,
    pub aggregate: MetricSummary,
    /// Micro-aggregated precision and recall of every resample run.
    pub run_aggregates: Vec<PrStats>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub iou_threshold: f64,
    pub confidence_threshold: f64,
    pub runs: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { iou_threshold: super::DEFAULT_IOU_THRESHOLD, confidence_threshold: 0.5, runs: 20 }
    }
}

fn sum_counts<'a>(items: impl Iterator<Item = &'a BTreeMap<String, Counts>>) -> BTreeMap<String, Counts> {
    let mut out: BTreeMap<String, Counts> = BTreeMap::new();
    for m in items {
        for (k, c) in m {
            *out.entry(k.clone()).or_default() += *c;
        }
    }
    out
}

fn micro(per_class: &BTreeMap<String, Counts>) -> Counts {
    let mut c = Counts::default();
    for v in per_class.values() {
        c += *v;
    }
    c
}

/// Builds a report from per-image counts, bootstrapping the image list
/// `runs` times. Run `r` draws from substream `r` of `seed`.
pub fn evaluate_counts(
    per_image: &[BTreeMap<String, Counts>],
    domain: EvalDomain,
    runs: usize,
    seed: u64,
) -> Result<EvalReport> {
    if runs == 0 {
        return Err(Error::OutOfRange { name: "runs", value: 0.0 });
    }
    let full = sum_counts(per_image.iter());
    let n = per_image.len();
    let mut class_runs: BTreeMap<String, (Samples, Samples)> =
        full.keys().map(|k| (k.clone(), (Vec::new(), Vec::new()))).collect();
    let mut run_aggregates = Vec::with_capacity(runs);
    for r in 0..runs {
        let mut rng = substream(seed, r as u64);
        let picks: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let sample = sum_counts(picks.iter().map(|&i| &per_image[i]));
        for (k, (p, rc)) in class_runs.iter_mut() {
            let s = precision_recall(sample.get(k).copied().unwrap_or_default());
            p.push(s.precision);
            rc.push(s.recall);
        }
        run_aggregates.push(precision_recall(micro(&sample)));
    }
    let per_class = full
        .iter()
        .map(|(k, c)| {
            let (p, r) = &class_runs[k];
            let summary =
                MetricSummary { stats: precision_recall(*c), precision: Spread::of(p), recall: Spread::of(r) };
            (k.clone(), summary)
        })
        .collect();
    let agg_p: Vec<_> = run_aggregates.iter().map(|s| s.precision).collect();
    let agg_r: Vec<_> = run_aggregates.iter().map(|s| s.recall).collect();
    Ok(EvalReport {
        domain,
        runs,
        per_class,
        aggregate: MetricSummary {
            stats: precision_recall(micro(&full)),
            precision: Spread::of(&agg_p),
            recall: Spread::of(&agg_r),
        },
        run_aggregates,
    })
}

/// Runs `detector` over `test_set` once, then bootstraps the per-image counts.
pub fn evaluate_with_resampling<D: Detector + ?Sized>(
    detector: &D,
    params: &D::Params,
    test_set: &[AnnotatedImage],
    domain: EvalDomain,
    options: &EvalOptions,
    seed: u64,
) -> Result<EvalReport> {
    let per_image: Vec<_> = test_set
        .iter()
        .map(|img| {
            let preds = detector.predict(params, &img.image_id, &img.image, options.confidence_threshold);
            match_detections(&preds, &img.boxes, options.iou_threshold).per_class
        })
        .collect();
    evaluate_counts(&per_image, domain, options.runs, seed)
}
