//! COCO-style evaluation over circle IoU.
//!
//! Conventions: greedy score-ordered matching (stable on ties), at most
//! [`MAX_DETS`] highest-scoring detections per image, 101-point
//! interpolated precision, no crowd or ignore regions.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::fusion::Detection;
use crate::geometry::{ciou, Circle};

pub const MAX_DETS: usize = 100;
const RECALL_POINTS: usize = 101;

/// The ten cIoU thresholds 0.50, 0.55, ..., 0.95.
pub fn coco_thresholds() -> [f64; 10] {
    std::array::from_fn(|i| (50 + 5 * i) as f64 / 100.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub image_id: String,
    pub circles: Vec<Circle>,
}

impl GroundTruth {
    pub fn new(image_id: impl Into<String>, circles: Vec<Circle>) -> Self {
        GroundTruth {
            image_id: image_id.into(),
            circles,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdAp {
    pub threshold: f64,
    pub ap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MatchCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl MatchCounts {
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub map_50_95: f64,
    pub map_50: f64,
    pub map_75: f64,
    pub ar_50_95: f64,
    pub per_threshold_ap: Vec<ThresholdAp>,
    /// Counts at cIoU 0.5.
    pub matched_counts: MatchCounts,
}

/// Greedy matching of one image's detections against its ground truth.
///
/// Detections come back sorted by descending score (stable), each paired
/// with the index of the GT circle it claimed, if any.
pub fn match_detections<'a>(
    dets: &'a [Detection],
    gt: &GroundTruth,
    ciou_threshold: f64,
) -> Vec<(&'a Detection, Option<usize>)> {
    let mut order: Vec<&Detection> = dets.iter().collect();
    order.sort_by(|a, b| b.score().total_cmp(&a.score()));
    greedy_match(&order, &gt.circles, ciou_threshold)
        .into_iter()
        .zip(order)
        .map(|(m, d)| (d, m))
        .collect()
}

fn greedy_match(sorted: &[&Detection], gt: &[Circle], threshold: f64) -> Vec<Option<usize>> {
    let mut gt_taken = vec![false; gt.len()];
    sorted
        .iter()
        .map(|d| {
            let mut best: Option<(usize, f64)> = None;
            for (g, circle) in gt.iter().enumerate() {
                if gt_taken[g] {
                    continue;
                }
                let overlap = ciou(&d.circle, circle);
                if overlap >= threshold && best.is_none_or(|(_, b)| overlap > b) {
                    best = Some((g, overlap));
                }
            }
            let (g, _) = best?;
            gt_taken[g] = true;
            Some(g)
        })
        .collect()
}

/// Detections and ground truth grouped per image, with each image's
/// detections sorted by score and capped at [`MAX_DETS`].
struct Pool<'a> {
    images: Vec<(Vec<&'a Detection>, &'a [Circle])>,
    num_gt: usize,
}

impl<'a> Pool<'a> {
    fn new(dets: &'a [Detection], gts: &'a [GroundTruth]) -> Self {
        let mut by_image: BTreeMap<&str, Vec<&Detection>> = BTreeMap::new();
        for d in dets {
            by_image.entry(&d.image_id).or_default().push(d);
        }
        let mut gt_by_image: BTreeMap<&str, &[Circle]> = BTreeMap::new();
        for g in gts {
            gt_by_image.insert(&g.image_id, &g.circles);
        }
        let ids: BTreeSet<&str> = by_image.keys().chain(gt_by_image.keys()).copied().collect();

        let images = ids
            .into_iter()
            .map(|id| {
                let mut ds = by_image.remove(id).unwrap_or_default();
                ds.sort_by(|a, b| b.score().total_cmp(&a.score()));
                ds.truncate(MAX_DETS);
                (ds, gt_by_image.get(id).copied().unwrap_or(&[]))
            })
            .collect();
        Pool {
            images,
            num_gt: gts.iter().map(|g| g.circles.len()).sum(),
        }
    }

    /// `(score, is_true_positive)` for every pooled detection, sorted by
    /// descending score (stable in image order).
    fn scored_hits(&self, threshold: f64) -> Vec<(f64, bool)> {
        let mut hits: Vec<(f64, bool)> = self
            .images
            .iter()
            .flat_map(|(ds, gt)| {
                greedy_match(ds, gt, threshold)
                    .into_iter()
                    .zip(ds)
                    .map(|(m, d)| (d.score(), m.is_some()))
            })
            .collect();
        hits.sort_by(|a, b| b.0.total_cmp(&a.0));
        hits
    }

    fn counts(&self, threshold: f64) -> MatchCounts {
        let hits = self.scored_hits(threshold);
        let tp = hits.iter().filter(|h| h.1).count();
        MatchCounts {
            tp,
            fp: hits.len() - tp,
            fn_: self.num_gt - tp,
        }
    }

    fn average_precision(&self, threshold: f64) -> f64 {
        if self.num_gt == 0 {
            return 0.0;
        }
        let hits = self.scored_hits(threshold);
        let mut recall = Vec::with_capacity(hits.len());
        let mut precision = Vec::with_capacity(hits.len());
        let (mut tp, mut fp) = (0usize, 0usize);
        for &(_, hit) in &hits {
            if hit {
                tp += 1;
            } else {
                fp += 1;
            }
            recall.push(tp as f64 / self.num_gt as f64);
            precision.push(tp as f64 / (tp + fp) as f64);
        }
        // precision envelope: running maximum from the right
        for i in (0..precision.len().saturating_sub(1)).rev() {
            precision[i] = precision[i].max(precision[i + 1]);
        }
        let total: f64 = (0..RECALL_POINTS)
            .map(|k| {
                let level = k as f64 / (RECALL_POINTS - 1) as f64;
                let idx = recall.partition_point(|&r| r < level);
                precision.get(idx).copied().unwrap_or(0.0)
            })
            .sum();
        total / RECALL_POINTS as f64
    }

    fn recall(&self, threshold: f64) -> f64 {
        self.counts(threshold).recall()
    }
}

/// 101-point interpolated AP with detections pooled across images.
pub fn average_precision(dets: &[Detection], gts: &[GroundTruth], ciou_threshold: f64) -> f64 {
    Pool::new(dets, gts).average_precision(ciou_threshold)
}

/// Recall at one threshold under the per-image detection cap.
pub fn recall(dets: &[Detection], gts: &[GroundTruth], ciou_threshold: f64) -> f64 {
    Pool::new(dets, gts).recall(ciou_threshold)
}

pub fn match_counts(dets: &[Detection], gts: &[GroundTruth], ciou_threshold: f64) -> MatchCounts {
    Pool::new(dets, gts).counts(ciou_threshold)
}

/// Full report over the ten COCO thresholds.
///
/// Detections on images absent from `gts` are all false positives; GT
/// images with no detections count against recall.
pub fn evaluate(dets: &[Detection], gts: &[GroundTruth]) -> EvalReport {
    let pool = Pool::new(dets, gts);
    let thresholds = coco_thresholds();
    let per_threshold_ap: Vec<ThresholdAp> = thresholds
        .iter()
        .map(|&threshold| ThresholdAp {
            threshold,
            ap: pool.average_precision(threshold),
        })
        .collect();
    let mean = |xs: &mut dyn Iterator<Item = f64>| xs.sum::<f64>() / thresholds.len() as f64;
    EvalReport {
        map_50_95: mean(&mut per_threshold_ap.iter().map(|t| t.ap)),
        map_50: per_threshold_ap[0].ap,
        map_75: per_threshold_ap[5].ap,
        ar_50_95: mean(&mut thresholds.iter().map(|&t| pool.recall(t))),
        per_threshold_ap,
        matched_counts: pool.counts(0.5),
    }
}
