//! Rotation-consistency harness: fuse, and separately fuse the quarter-turn
//! rotated inputs and rotate the result back; the two must agree.

use circle_fusion::fusion::{wcf, Detection, FusedCircle, WcfConfig};
use circle_fusion::geometry::{rotate90ccw, rotate90cw, Circle, Frame};
use circle_fusion::Result;
use serde::Serialize;

/// Largest accepted discrepancy, in pixels (and score units).
pub const TOLERANCE: f64 = 1e-6;

/// The comparable part of a fused entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusedSummary {
    pub circle: Circle,
    pub mean_score: f64,
    pub count: usize,
}

impl From<&FusedCircle> for FusedSummary {
    fn from(f: &FusedCircle) -> Self {
        FusedSummary {
            circle: *f.circle(),
            mean_score: f.mean_score(),
            count: f.count(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RotationReport {
    pub pass: bool,
    pub tolerance: f64,
    pub images: usize,
    pub fused_entries: usize,
    pub max_center_discrepancy: f64,
    pub max_radius_discrepancy: f64,
    pub max_score_discrepancy: f64,
    /// Images where the two runs disagree on the number of entries or on
    /// any entry's count.
    pub structural_mismatches: usize,
}

impl RotationReport {
    fn absorb(&mut self, direct: &[FusedSummary], round_trip: &[FusedSummary]) {
        self.images += 1;
        self.fused_entries += direct.len();
        let same_shape = direct.len() == round_trip.len()
            && direct.iter().zip(round_trip).all(|(a, b)| a.count == b.count);
        if !same_shape {
            self.structural_mismatches += 1;
            return;
        }
        for (a, b) in direct.iter().zip(round_trip) {
            let center = (a.circle.cx() - b.circle.cx())
                .abs()
                .max((a.circle.cy() - b.circle.cy()).abs());
            self.max_center_discrepancy = self.max_center_discrepancy.max(center);
            self.max_radius_discrepancy = self
                .max_radius_discrepancy
                .max((a.circle.r() - b.circle.r()).abs());
            self.max_score_discrepancy = self
                .max_score_discrepancy
                .max((a.mean_score - b.mean_score).abs());
        }
    }

    fn finish(mut self) -> Self {
        self.tolerance = TOLERANCE;
        self.pass = self.structural_mismatches == 0
            && self.max_center_discrepancy <= TOLERANCE
            && self.max_radius_discrepancy <= TOLERANCE
            && self.max_score_discrepancy <= TOLERANCE;
        self
    }
}

/// Returns `(direct, round_trip)` fusion results for one image, both in the
/// original frame.
pub fn fuse_both_ways(
    model_sets: &[Vec<Detection>],
    frame: &Frame,
    cfg: &WcfConfig,
) -> Result<(Vec<FusedSummary>, Vec<FusedSummary>)> {
    let direct = wcf(model_sets, cfg)?.iter().map(FusedSummary::from).collect();

    let rotated_frame = Frame::new(frame.height(), frame.width())?;
    let rotated: Vec<Vec<Detection>> = model_sets
        .iter()
        .map(|set| {
            set.iter()
                .map(|d| Ok(d.with_circle(rotate90cw(&d.circle, frame)?.0)))
                .collect::<Result<_>>()
        })
        .collect::<Result<_>>()?;

    let round_trip = wcf(&rotated, cfg)?
        .iter()
        .map(|f| {
            let (circle, _) = rotate90ccw(f.circle(), &rotated_frame)?;
            Ok(FusedSummary {
                circle,
                ..FusedSummary::from(f)
            })
        })
        .collect::<Result<_>>()?;
    Ok((direct, round_trip))
}

pub fn check<'a>(
    images: impl IntoIterator<Item = &'a [Vec<Detection>]>,
    frame: &Frame,
    cfg: &WcfConfig,
) -> Result<RotationReport> {
    let mut report = RotationReport::default();
    for sets in images {
        let (direct, round_trip) = fuse_both_ways(sets, frame, cfg)?;
        report.absorb(&direct, &round_trip);
    }
    Ok(report.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(x: f64, y: f64, r: f64, s: f64, m: &str) -> Detection {
        Detection::new(Circle::new(x, y, r).unwrap(), s, m, "img").unwrap()
    }

    #[test]
    fn single_circle_has_zero_discrepancy() {
        let frame = Frame::new(100.0, 60.0).unwrap();
        let sets = vec![vec![det(10.0, 20.0, 5.0, 0.95, "a")]];
        let report = check([sets.as_slice()], &frame, &WcfConfig::default()).unwrap();
        assert!(report.pass);
        assert_eq!(report.fused_entries, 1);
        assert_eq!(report.max_center_discrepancy, 0.0);
    }

    #[test]
    fn outside_frame_is_an_error() {
        let frame = Frame::new(10.0, 10.0).unwrap();
        let sets = vec![vec![det(20.0, 5.0, 1.0, 0.9, "a")]];
        assert!(check([sets.as_slice()], &frame, &WcfConfig::default()).is_err());
    }

    #[test]
    fn detects_structural_disagreement() {
        let mut report = RotationReport::default();
        let one = FusedSummary {
            circle: Circle::new(1.0, 1.0, 1.0).unwrap(),
            mean_score: 0.5,
            count: 1,
        };
        report.absorb(&[one], &[]);
        assert!(!report.finish().pass);
    }
}
