//! Weighted Circle Fusion and the circle-NMS / circle-Soft-NMS baselines.
//!
//! Fusion walks the model sets in caller order. The first set seeds the
//! running list; every later detection either folds into the best
//! overlapping entry (score-weighted mean of center and radius) or is
//! appended as a new singleton. Survivors must pass the mean-score or the
//! count threshold.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geometry::{ciou, Circle};

/// A scored circle produced by one model on one image.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub circle: Circle,
    score: f64,
    pub model_id: String,
    pub image_id: String,
}

impl Detection {
    pub fn new(
        circle: Circle,
        score: f64,
        model_id: impl Into<String>,
        image_id: impl Into<String>,
    ) -> Result<Self> {
        check_score(score)?;
        Ok(Detection {
            circle,
            score,
            model_id: model_id.into(),
            image_id: image_id.into(),
        })
    }

    pub fn score(&self) -> f64 {
        self.score
    }

    pub fn with_circle(&self, circle: Circle) -> Self {
        Detection {
            circle,
            ..self.clone()
        }
    }

    pub fn with_score(&self, score: f64) -> Result<Self> {
        check_score(score)?;
        Ok(Detection {
            score,
            ..self.clone()
        })
    }
}

fn check_score(score: f64) -> Result<()> {
    if score > 0.0 && score <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidScore(score))
    }
}

/// Processing order shared by fusion and suppression: score descending,
/// then radius descending, then input position.
fn processing_order(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&i, &j| rank_cmp(dets[i].score, dets[i].circle.r(), dets[j].score, dets[j].circle.r()));
    order
}

fn rank_cmp(score_a: f64, r_a: f64, score_b: f64, r_b: f64) -> Ordering {
    score_b.total_cmp(&score_a).then(r_b.total_cmp(&r_a))
}

/// A circle aggregated from one or more detections.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedCircle {
    circle: Circle,
    constituents: Vec<Detection>,
    weight_sum: f64,
    weighted_sums: [f64; 3],
    score_sum: f64,
}

impl FusedCircle {
    pub fn singleton(d: Detection) -> Self {
        let s = d.score;
        FusedCircle {
            circle: d.circle,
            weight_sum: s,
            weighted_sums: [d.circle.cx() * s, d.circle.cy() * s, d.circle.r() * s],
            score_sum: s,
            constituents: vec![d],
        }
    }

    /// Folds `d` into this entry. Geometry becomes the score-weighted mean
    /// over all constituents, kept exact through running sums.
    pub fn fuse_pair(mut self, d: Detection) -> Result<Self> {
        self.absorb(d)?;
        Ok(self)
    }

    fn absorb(&mut self, d: Detection) -> Result<()> {
        check_score(d.score)?;
        let s = d.score;
        self.weight_sum += s;
        self.weighted_sums[0] += d.circle.cx() * s;
        self.weighted_sums[1] += d.circle.cy() * s;
        self.weighted_sums[2] += d.circle.r() * s;
        self.score_sum += s;
        self.circle = Circle::from_parts_unchecked(
            self.weighted_sums[0] / self.weight_sum,
            self.weighted_sums[1] / self.weight_sum,
            self.weighted_sums[2] / self.weight_sum,
        );
        self.constituents.push(d);
        Ok(())
    }

    pub fn circle(&self) -> &Circle {
        &self.circle
    }

    pub fn mean_score(&self) -> f64 {
        self.score_sum / self.constituents.len() as f64
    }

    pub fn count(&self) -> usize {
        self.constituents.len()
    }

    pub fn constituents(&self) -> &[Detection] {
        &self.constituents
    }

    pub fn weight_sum(&self) -> f64 {
        self.weight_sum
    }

    /// Running `(Σ x·s, Σ y·s, Σ r·s)`.
    pub fn weighted_sums(&self) -> [f64; 3] {
        self.weighted_sums
    }

    pub fn image_id(&self) -> &str {
        &self.constituents[0].image_id
    }

    pub fn source_models(&self) -> impl Iterator<Item = &str> {
        self.constituents.iter().map(|d| d.model_id.as_str())
    }

    /// The fused entry seen as a single detection scored by its mean score.
    pub fn to_detection(&self, model_id: &str) -> Detection {
        Detection {
            circle: self.circle,
            score: self.mean_score(),
            model_id: model_id.to_string(),
            image_id: self.image_id().to_string(),
        }
    }
}

/// How the score and count thresholds combine when filtering fused entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThresholdRule {
    /// Keep when either threshold is met.
    #[default]
    Or,
    /// Keep only when both thresholds are met.
    And,
}

impl FromStr for ThresholdRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "or" => Ok(ThresholdRule::Or),
            "and" => Ok(ThresholdRule::And),
            other => Err(Error::InvalidConfig(format!("unknown threshold rule `{other}`"))),
        }
    }
}

impl fmt::Display for ThresholdRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ThresholdRule::Or => "or",
            ThresholdRule::And => "and",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WcfConfig {
    pub ciou_threshold: f64,
    pub t_score: f64,
    pub t_count: usize,
    pub rule: ThresholdRule,
}

impl Default for WcfConfig {
    fn default() -> Self {
        WcfConfig {
            ciou_threshold: 0.5,
            t_score: 0.9,
            t_count: 2,
            rule: ThresholdRule::Or,
        }
    }
}

impl WcfConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ciou_threshold > 0.0 && self.ciou_threshold < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "ciou threshold {} outside (0, 1)",
                self.ciou_threshold
            )));
        }
        if !(0.0..=1.0).contains(&self.t_score) {
            return Err(Error::InvalidConfig(format!(
                "t_score {} outside [0, 1]",
                self.t_score
            )));
        }
        if self.t_count < 1 {
            return Err(Error::InvalidConfig("t_count must be at least 1".into()));
        }
        Ok(())
    }

    pub fn keeps(&self, f: &FusedCircle) -> bool {
        let by_score = f.mean_score() >= self.t_score;
        let by_count = f.count() >= self.t_count;
        match self.rule {
            ThresholdRule::Or => by_score || by_count,
            ThresholdRule::And => by_score && by_count,
        }
    }
}

fn check_single_image<'a>(dets: impl IntoIterator<Item = &'a Detection>) -> Result<()> {
    let mut first: Option<&str> = None;
    for d in dets {
        match first {
            None => first = Some(&d.image_id),
            Some(id) if id != d.image_id => {
                return Err(Error::MixedImages {
                    expected: id.to_string(),
                    found: d.image_id.clone(),
                })
            }
            Some(_) => {}
        }
    }
    Ok(())
}

/// Runs the sequential fusion pass and returns every fused entry, before
/// thresholding, in insertion order.
///
/// Each entry absorbs at most one detection per incoming model set. An
/// incoming detection joins the eligible entry with the highest cIoU above
/// the threshold (earliest entry on ties).
pub fn wcf_merge(model_sets: &[Vec<Detection>], cfg: &WcfConfig) -> Result<Vec<FusedCircle>> {
    cfg.validate()?;
    check_single_image(model_sets.iter().flatten())?;

    let mut sets = model_sets.iter();
    let mut fused: Vec<FusedCircle> = match sets.next() {
        Some(first) => first.iter().cloned().map(FusedCircle::singleton).collect(),
        None => return Ok(Vec::new()),
    };

    for set in sets {
        let mut taken = vec![false; fused.len()];
        for idx in processing_order(set) {
            let d = &set[idx];
            let mut best: Option<(usize, f64)> = None;
            for (k, entry) in fused.iter().enumerate() {
                if taken[k] {
                    continue;
                }
                let overlap = ciou(&entry.circle, &d.circle);
                if overlap > cfg.ciou_threshold && best.is_none_or(|(_, b)| overlap > b) {
                    best = Some((k, overlap));
                }
            }
            match best {
                Some((k, _)) => {
                    fused[k].absorb(d.clone())?;
                    taken[k] = true;
                }
                None => {
                    fused.push(FusedCircle::singleton(d.clone()));
                    // the new entry already holds this model's vote
                    taken.push(true);
                }
            }
        }
    }
    Ok(fused)
}

/// Fused entries split into survivors and rejects, both in insertion order.
#[derive(Debug, Clone, Default)]
pub struct WcfOutcome {
    pub kept: Vec<FusedCircle>,
    pub dropped: Vec<FusedCircle>,
}

pub fn wcf_partition(model_sets: &[Vec<Detection>], cfg: &WcfConfig) -> Result<WcfOutcome> {
    let (kept, dropped) = wcf_merge(model_sets, cfg)?
        .into_iter()
        .partition(|f| cfg.keeps(f));
    Ok(WcfOutcome { kept, dropped })
}

/// Weighted Circle Fusion: merge, then drop entries failing the thresholds.
pub fn wcf(model_sets: &[Vec<Detection>], cfg: &WcfConfig) -> Result<Vec<FusedCircle>> {
    Ok(wcf_partition(model_sets, cfg)?.kept)
}

/// Greedy circle NMS. Survivors are returned in selection order.
pub fn circle_nms(dets: &[Detection], ciou_threshold: f64) -> Vec<Detection> {
    let mut suppressed = vec![false; dets.len()];
    let order = processing_order(dets);
    let mut keep = Vec::new();
    for (pos, &i) in order.iter().enumerate() {
        if suppressed[i] {
            continue;
        }
        keep.push(dets[i].clone());
        for &j in &order[pos + 1..] {
            if !suppressed[j] && ciou(&dets[i].circle, &dets[j].circle) > ciou_threshold {
                suppressed[j] = true;
            }
        }
    }
    keep
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SoftNmsMode {
    #[default]
    Linear,
    Gaussian,
}

impl FromStr for SoftNmsMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(SoftNmsMode::Linear),
            "gaussian" => Ok(SoftNmsMode::Gaussian),
            other => Err(Error::InvalidConfig(format!("unknown soft-nms mode `{other}`"))),
        }
    }
}

impl fmt::Display for SoftNmsMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SoftNmsMode::Linear => "linear",
            SoftNmsMode::Gaussian => "gaussian",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftNmsConfig {
    pub ciou_threshold: f64,
    pub mode: SoftNmsMode,
    pub sigma: f64,
    pub final_score_cut: f64,
}

impl Default for SoftNmsConfig {
    fn default() -> Self {
        SoftNmsConfig {
            ciou_threshold: 0.3,
            mode: SoftNmsMode::Linear,
            sigma: 0.5,
            final_score_cut: 0.001,
        }
    }
}

impl SoftNmsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) {
            return Err(Error::InvalidConfig(format!("sigma {} must be positive", self.sigma)));
        }
        if !(0.0..=1.0).contains(&self.ciou_threshold) {
            return Err(Error::InvalidConfig(format!(
                "ciou threshold {} outside [0, 1]",
                self.ciou_threshold
            )));
        }
        Ok(())
    }

    fn decay(&self, overlap: f64) -> f64 {
        match self.mode {
            SoftNmsMode::Linear => 1.0 - overlap,
            SoftNmsMode::Gaussian => (-(overlap * overlap) / self.sigma).exp(),
        }
    }
}

/// Circle Soft-NMS. Detections are emitted in selection order carrying
/// their decayed scores; those that end below the score cut (or at zero)
/// are dropped.
pub fn circle_soft_nms(dets: &[Detection], cfg: &SoftNmsConfig) -> Result<Vec<Detection>> {
    cfg.validate()?;
    let mut scores: Vec<f64> = dets.iter().map(|d| d.score).collect();
    let mut remaining: Vec<usize> = processing_order(dets);
    let mut emitted = Vec::with_capacity(dets.len());

    while !remaining.is_empty() {
        // stable pick: first maximum in the current ranking order
        let (pos, _) = remaining.iter().enumerate().fold(
            (0usize, remaining[0]),
            |(bp, bi), (p, &i)| {
                let better = rank_cmp(scores[i], dets[i].circle.r(), scores[bi], dets[bi].circle.r())
                    == Ordering::Less;
                if better {
                    (p, i)
                } else {
                    (bp, bi)
                }
            },
        );
        let top = remaining.remove(pos);
        emitted.push(top);
        for &j in &remaining {
            let overlap = ciou(&dets[top].circle, &dets[j].circle);
            if overlap > cfg.ciou_threshold {
                scores[j] *= cfg.decay(overlap);
            }
        }
    }

    Ok(emitted
        .into_iter()
        .filter(|&i| scores[i] >= cfg.final_score_cut && scores[i] > 0.0)
        .map(|i| Detection {
            score: scores[i],
            ..dets[i].clone()
        })
        .collect())
}
