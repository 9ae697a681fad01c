use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::AddAssign;

use super::Detection;
use crate::image::BoundingBox;

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl AddAssign for Counts {
    fn add_assign(&mut self, o: Counts) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchOutcome {
    pub per_class: BTreeMap<String, Counts>,
    /// For each prediction in input order, the index of the truth it matched.
    pub assignment: Vec<Option<usize>>,
    /// Some prediction had two or more eligible unmatched truths when its
    /// turn came. Only then can greedy matching fall short of a
    /// maximum-cardinality assignment.
    pub contended: bool,
}

impl MatchOutcome {
    pub fn total(&self) -> Counts {
        let mut c = Counts::default();
        for v in self.per_class.values() {
            c += *v;
        }
        c
    }
}

/// Greedy one-to-one matching in descending confidence order.
///
/// Each prediction takes the unmatched same-class truth with the highest
/// IoU at or above `iou_threshold` (lowest index on ties) and counts as a
/// true positive, otherwise as a false positive of its own class. Equal
/// confidences keep input order. Unmatched truths are false negatives of
/// their class.
pub fn match_detections(preds: &[Detection], truths: &[BoundingBox], iou_threshold: f64) -> MatchOutcome {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].confidence.total_cmp(&preds[a].confidence));

    let mut per_class: BTreeMap<String, Counts> = BTreeMap::new();
    let mut taken = vec![false; truths.len()];
    let mut assignment = vec![None; preds.len()];
    let mut contended = false;

    for &pi in &order {
        let p = &preds[pi];
        let mut best: Option<(usize, f64)> = None;
        let mut eligible = 0;
        for (ti, t) in truths.iter().enumerate() {
            if taken[ti] || t.class_label != p.bbox.class_label {
                continue;
            }
            let iou = p.bbox.iou(t);
            if iou >= iou_threshold {
                eligible += 1;
                if best.is_none_or(|(_, b)| iou > b) {
                    best = Some((ti, iou));
                }
            }
        }
        contended |= eligible > 1;
        let entry = per_class.entry(p.bbox.class_label.clone()).or_default();
        match best {
            Some((ti, _)) => {
                taken[ti] = true;
                assignment[pi] = Some(ti);
                entry.tp += 1;
            }
            None => entry.fp += 1,
        }
    }
    for (t, _) in truths.iter().zip(&taken).filter(|(_, &k)| !k) {
        per_class.entry(t.class_label.clone()).or_default().fn_ += 1;
    }
    MatchOutcome { per_class, assignment, contended }
}
