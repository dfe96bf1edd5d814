//! Seeded synthetic ensembles and a Monte-Carlo cIoU estimator.
//!
//! Each model independently finds each ground-truth circle with a fixed
//! probability, reporting it with gaussian center jitter and a bounded
//! multiplicative radius error. False positives are placed away from every
//! ground-truth circle and from every detection already emitted on the
//! image, so each one lives in exactly one model's output.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::evaluation::GroundTruth;
use crate::fusion::Detection;
use crate::geometry::{ciou, Circle, Frame};

/// Name of the generator behind every stream in this module.
pub const PRNG_ALGORITHM: &str = "ChaCha8 (rand_chacha 0.9, seed_from_u64)";

/// Maximum cIoU allowed between two ground-truth circles, and between a
/// false positive and anything already on the image.
pub const SEPARATION_CIOU: f64 = 0.1;

const PLACEMENT_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthConfig {
    pub n_images: usize,
    pub gt_per_image: usize,
    pub n_models: usize,
    /// Standard deviation of the center offset, in pixels.
    pub pos_jitter_sigma: f64,
    /// Radius is scaled by a uniform factor in `[1 - f, 1 + f]`.
    pub radius_jitter_frac: f64,
    pub detect_prob: f64,
    /// Mean number of false positives per image per model (Poisson).
    pub fp_per_image_rate: f64,
    pub fp_score_range: (f64, f64),
    pub tp_score_range: (f64, f64),
    /// Ground-truth and false-positive radii are drawn uniformly from here.
    pub radius_range: (f64, f64),
    pub seed: u64,
    pub frame: Frame,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_images: 20,
            gt_per_image: 10,
            n_models: 5,
            pos_jitter_sigma: 1.0,
            radius_jitter_frac: 0.05,
            detect_prob: 0.9,
            fp_per_image_rate: 2.0,
            fp_score_range: (0.3, 0.8),
            tp_score_range: (0.6, 1.0),
            radius_range: (15.0, 30.0),
            seed: 0,
            frame: Frame::new(512.0, 512.0).expect("static frame"),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(0.0..=1.0).contains(&self.detect_prob) {
            return bad(format!("detect_prob {} outside [0, 1]", self.detect_prob));
        }
        if !(self.fp_per_image_rate >= 0.0 && self.fp_per_image_rate.is_finite()) {
            return bad(format!("fp rate {} must be finite and non-negative", self.fp_per_image_rate));
        }
        if !(self.pos_jitter_sigma >= 0.0 && self.pos_jitter_sigma.is_finite()) {
            return bad(format!("position jitter {} must be finite and non-negative", self.pos_jitter_sigma));
        }
        if !(0.0..1.0).contains(&self.radius_jitter_frac) {
            return bad(format!("radius jitter {} outside [0, 1)", self.radius_jitter_frac));
        }
        for (name, (lo, hi)) in [("fp_score_range", self.fp_score_range), ("tp_score_range", self.tp_score_range)] {
            if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
                return bad(format!("{name} ({lo}, {hi}) must satisfy 0 < lo <= hi <= 1"));
            }
        }
        let (rlo, rhi) = self.radius_range;
        if !(rlo > 0.0 && rlo <= rhi && rhi.is_finite()) {
            return bad(format!("radius_range ({rlo}, {rhi}) must satisfy 0 < lo <= hi"));
        }
        if 2.0 * rhi > self.frame.width().min(self.frame.height()) {
            return bad(format!("radius {rhi} does not fit in the frame"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthMetadata {
    pub prng: &'static str,
    pub config: SynthConfig,
}

/// Generated scenario. `detections[m]` holds model `m`'s output across all
/// images; `labels[m][k]` is the index (within its image's ground truth) of
/// the circle detection `k` came from, or `None` for a false positive.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthScenario {
    pub ground_truth: Vec<GroundTruth>,
    pub detections: Vec<Vec<Detection>>,
    pub labels: Vec<Vec<Option<usize>>>,
    pub metadata: SynthMetadata,
}

impl SynthScenario {
    pub fn model_id(m: usize) -> String {
        format!("model_{}", m + 1)
    }

    pub fn image_id(i: usize) -> String {
        format!("img_{i:04}")
    }

    /// Per-model detections on one image, in model order.
    pub fn model_sets(&self, image_id: &str) -> Vec<Vec<Detection>> {
        self.detections
            .iter()
            .map(|ds| ds.iter().filter(|d| d.image_id == image_id).cloned().collect())
            .collect()
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

fn random_circle(rng: &mut ChaCha8Rng, cfg: &SynthConfig) -> Circle {
    let r = uniform(rng, cfg.radius_range);
    let cx = uniform(rng, (r, cfg.frame.width() - r));
    let cy = uniform(rng, (r, cfg.frame.height() - r));
    Circle::new(cx, cy, r).expect("radius range validated")
}

fn place_apart(rng: &mut ChaCha8Rng, cfg: &SynthConfig, avoid: &[Circle], what: &str) -> Result<Circle> {
    for _ in 0..PLACEMENT_ATTEMPTS {
        let c = random_circle(rng, cfg);
        if avoid.iter().all(|o| ciou(o, &c) < SEPARATION_CIOU) {
            return Ok(c);
        }
    }
    Err(Error::Infeasible(format!(
        "could not place {what} after {PLACEMENT_ATTEMPTS} attempts with {} circles on the image",
        avoid.len()
    )))
}

/// Builds a scenario fully determined by `cfg` (seed included).
pub fn generate(cfg: &SynthConfig) -> Result<SynthScenario> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let jitter = Normal::new(0.0, cfg.pos_jitter_sigma).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let fp_count = if cfg.fp_per_image_rate > 0.0 {
        Some(Poisson::new(cfg.fp_per_image_rate).map_err(|e| Error::InvalidConfig(e.to_string()))?)
    } else {
        None
    };
    let (w, h) = (cfg.frame.width(), cfg.frame.height());

    let mut ground_truth = Vec::with_capacity(cfg.n_images);
    let mut detections = vec![Vec::new(); cfg.n_models];
    let mut labels = vec![Vec::new(); cfg.n_models];

    for i in 0..cfg.n_images {
        let image_id = SynthScenario::image_id(i);
        let mut gt: Vec<Circle> = Vec::with_capacity(cfg.gt_per_image);
        for _ in 0..cfg.gt_per_image {
            let c = place_apart(&mut rng, cfg, &gt, "a ground-truth circle")?;
            gt.push(c);
        }

        let mut occupied = gt.clone();
        for m in 0..cfg.n_models {
            for (g, truth) in gt.iter().enumerate() {
                if !rng.random_bool(cfg.detect_prob) {
                    continue;
                }
                let cx = (truth.cx() + jitter.sample(&mut rng)).clamp(0.0, w);
                let cy = (truth.cy() + jitter.sample(&mut rng)).clamp(0.0, h);
                let scale = if cfg.radius_jitter_frac > 0.0 {
                    rng.random_range(1.0 - cfg.radius_jitter_frac..=1.0 + cfg.radius_jitter_frac)
                } else {
                    1.0
                };
                let circle = Circle::new(cx, cy, truth.r() * scale)?;
                let score = uniform(&mut rng, cfg.tp_score_range);
                occupied.push(circle);
                detections[m].push(Detection::new(circle, score, SynthScenario::model_id(m), image_id.clone())?);
                labels[m].push(Some(g));
            }
        }
        for m in 0..cfg.n_models {
            let n = fp_count.map_or(0, |p| p.sample(&mut rng) as usize);
            for _ in 0..n {
                let circle = place_apart(&mut rng, cfg, &occupied, "a false positive")?;
                let score = uniform(&mut rng, cfg.fp_score_range);
                occupied.push(circle);
                detections[m].push(Detection::new(circle, score, SynthScenario::model_id(m), image_id.clone())?);
                labels[m].push(None);
            }
        }
        ground_truth.push(GroundTruth::new(image_id, gt));
    }

    Ok(SynthScenario {
        ground_truth,
        detections,
        labels,
        metadata: SynthMetadata {
            prng: PRNG_ALGORITHM,
            config: cfg.clone(),
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub ciou: f64,
    pub std_err: f64,
    /// Samples that landed in the union of the two discs.
    pub union_hits: u64,
}

/// Monte-Carlo cIoU: uniform samples over the joint bounding box.
///
/// Conditioned on landing in the union, a sample is uniform over it, so
/// the intersection fraction is a binomial proportion whose standard error
/// is reported alongside.
pub fn mc_ciou_oracle(a: &Circle, b: &Circle, samples: u64, seed: u64) -> McEstimate {
    let x0 = (a.cx() - a.r()).min(b.cx() - b.r());
    let x1 = (a.cx() + a.r()).max(b.cx() + b.r());
    let y0 = (a.cy() - a.r()).min(b.cy() - b.r());
    let y1 = (a.cy() + a.r()).max(b.cy() + b.r());
    let (ra2, rb2) = (a.r() * a.r(), b.r() * b.r());

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut union, mut both) = (0u64, 0u64);
    for _ in 0..samples {
        let x = x0 + (x1 - x0) * rng.random::<f64>();
        let y = y0 + (y1 - y0) * rng.random::<f64>();
        let in_a = (x - a.cx()).powi(2) + (y - a.cy()).powi(2) <= ra2;
        let in_b = (x - b.cx()).powi(2) + (y - b.cy()).powi(2) <= rb2;
        union += (in_a || in_b) as u64;
        both += (in_a && in_b) as u64;
    }
    if union == 0 {
        return McEstimate {
            ciou: 0.0,
            std_err: 0.0,
            union_hits: 0,
        };
    }
    let p = both as f64 / union as f64;
    McEstimate {
        ciou: p,
        std_err: (p * (1.0 - p) / union as f64).sqrt(),
        union_hits: union,
    }
}

/// Monte-Carlo intersection area with its standard error.
pub fn mc_intersection_area(a: &Circle, b: &Circle, samples: u64, seed: u64) -> (f64, f64) {
    let x0 = (a.cx() - a.r()).min(b.cx() - b.r());
    let x1 = (a.cx() + a.r()).max(b.cx() + b.r());
    let y0 = (a.cy() - a.r()).min(b.cy() - b.r());
    let y1 = (a.cy() + a.r()).max(b.cy() + b.r());
    let box_area = (x1 - x0) * (y1 - y0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut both = 0u64;
    for _ in 0..samples {
        let x = x0 + (x1 - x0) * rng.random::<f64>();
        let y = y0 + (y1 - y0) * rng.random::<f64>();
        let in_a = (x - a.cx()).powi(2) + (y - a.cy()).powi(2) <= a.r() * a.r();
        let in_b = (x - b.cx()).powi(2) + (y - b.cy()).powi(2) <= b.r() * b.r();
        both += (in_a && in_b) as u64;
    }
    let p = both as f64 / samples as f64;
    (p * box_area, box_area * (p * (1.0 - p) / samples as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::circle_intersection_area;

    fn small() -> SynthConfig {
        SynthConfig {
            n_images: 3,
            gt_per_image: 5,
            n_models: 3,
            seed: 11,
            ..Default::default()
        }
    }

    #[test]
    fn noiseless_models_reproduce_ground_truth() {
        let cfg = SynthConfig {
            detect_prob: 1.0,
            pos_jitter_sigma: 0.0,
            radius_jitter_frac: 0.0,
            fp_per_image_rate: 0.0,
            ..small()
        };
        let s = generate(&cfg).unwrap();
        let truth: Vec<Circle> = s.ground_truth.iter().flat_map(|g| g.circles.clone()).collect();
        for model in &s.detections {
            let got: Vec<Circle> = model.iter().map(|d| d.circle).collect();
            assert_eq!(got, truth);
        }
    }

    #[test]
    fn same_seed_same_scenario() {
        assert_eq!(generate(&small()).unwrap(), generate(&small()).unwrap());
        let other = SynthConfig { seed: 12, ..small() };
        assert_ne!(generate(&small()).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn zero_detect_prob_yields_only_false_positives() {
        let s = generate(&SynthConfig { detect_prob: 0.0, ..small() }).unwrap();
        assert!(s.labels.iter().flatten().all(Option::is_none));
        assert!(s.detections.iter().map(Vec::len).sum::<usize>() > 0);
    }

    #[test]
    fn separation_holds() {
        let s = generate(&small()).unwrap();
        for gt in &s.ground_truth {
            for (i, a) in gt.circles.iter().enumerate() {
                for b in &gt.circles[i + 1..] {
                    assert!(ciou(a, b) < SEPARATION_CIOU);
                }
            }
            let fps = s.detections.iter().zip(&s.labels).flat_map(|(ds, ls)| {
                ds.iter().zip(ls).filter(|(d, l)| l.is_none() && d.image_id == gt.image_id).map(|(d, _)| d)
            });
            for fp in fps {
                assert!(fp.score() <= 0.8);
                assert!(gt.circles.iter().all(|g| ciou(g, &fp.circle) < SEPARATION_CIOU));
            }
        }
    }

    #[test]
    fn infeasible_density_is_reported() {
        let cfg = SynthConfig {
            gt_per_image: 500,
            radius_range: (20.0, 20.0),
            frame: Frame::new(100.0, 100.0).unwrap(),
            ..small()
        };
        assert!(matches!(generate(&cfg), Err(Error::Infeasible(_))));
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(generate(&SynthConfig { detect_prob: 1.5, ..small() }).is_err());
        assert!(generate(&SynthConfig { fp_score_range: (0.9, 0.1), ..small() }).is_err());
        assert!(generate(&SynthConfig { tp_score_range: (0.0, 0.5), ..small() }).is_err());
        assert!(generate(&SynthConfig { fp_per_image_rate: -1.0, ..small() }).is_err());
    }

    #[test]
    fn oracle_trivial_cases() {
        let a = Circle::new(0.0, 0.0, 1.0).unwrap();
        let same = mc_ciou_oracle(&a, &a, 100_000, 1);
        assert_eq!(same.ciou, 1.0);
        let far = Circle::new(5.0, 0.0, 1.0).unwrap();
        assert_eq!(mc_ciou_oracle(&a, &far, 100_000, 1).ciou, 0.0);
    }

    #[test]
    fn oracle_matches_unit_lens() {
        let a = Circle::new(0.0, 0.0, 1.0).unwrap();
        let b = Circle::new(1.0, 0.0, 1.0).unwrap();
        let est = mc_ciou_oracle(&a, &b, 1_000_000, 3);
        assert!((est.ciou - 0.2430).abs() <= 3.0 * est.std_err + 1e-4, "{est:?}");
        let (area, se) = mc_intersection_area(&a, &b, 1_000_000, 4);
        assert!((area - circle_intersection_area(&a, &b)).abs() <= 3.0 * se);
    }
}
