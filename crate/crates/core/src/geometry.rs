//! Circle primitives, analytic disc intersection, circle IoU and the
//! quarter-turn frame rotation used by the rotation-consistency harness.

use std::cmp::Ordering;
use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};

/// A disc in image pixel coordinates.
///
/// Construction rejects non-finite coordinates and non-positive radii, so
/// every `Circle` in the crate is valid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Circle {
    cx: f64,
    cy: f64,
    r: f64,
}

impl Circle {
    pub fn new(cx: f64, cy: f64, r: f64) -> Result<Self> {
        let reason = if !cx.is_finite() || !cy.is_finite() {
            "center must be finite"
        } else if !r.is_finite() {
            "radius must be finite"
        } else if r <= 0.0 {
            "radius must be positive"
        } else {
            return Ok(Circle { cx, cy, r });
        };
        Err(Error::InvalidCircle { cx, cy, r, reason })
    }

    /// Builds a circle whose validity is guaranteed by the caller, e.g. a
    /// positively weighted mean of valid circles.
    pub(crate) fn from_parts_unchecked(cx: f64, cy: f64, r: f64) -> Self {
        debug_assert!(cx.is_finite() && cy.is_finite() && r.is_finite() && r > 0.0);
        Circle { cx, cy, r }
    }

    pub fn cx(&self) -> f64 {
        self.cx
    }

    pub fn cy(&self) -> f64 {
        self.cy
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn area(&self) -> f64 {
        circle_area(self)
    }

    pub fn center_distance(&self, other: &Circle) -> f64 {
        (self.cx - other.cx).hypot(self.cy - other.cy)
    }

    /// Lexicographic order on (r, cx, cy); used to make binary kernels
    /// bitwise symmetric in their arguments.
    fn canonical_cmp(&self, other: &Circle) -> Ordering {
        self.r
            .total_cmp(&other.r)
            .then(self.cx.total_cmp(&other.cx))
            .then(self.cy.total_cmp(&other.cy))
    }
}

/// Image extent that circle centers live in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Frame {
    width: f64,
    height: f64,
}

impl Frame {
    pub fn new(width: f64, height: f64) -> Result<Self> {
        if width.is_finite() && height.is_finite() && width > 0.0 && height > 0.0 {
            Ok(Frame { width, height })
        } else {
            Err(Error::InvalidFrame { width, height })
        }
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    pub fn contains_center(&self, c: &Circle) -> bool {
        (0.0..=self.width).contains(&c.cx) && (0.0..=self.height).contains(&c.cy)
    }

    fn check(&self, c: &Circle) -> Result<()> {
        if self.contains_center(c) {
            Ok(())
        } else {
            Err(Error::OutsideFrame {
                cx: c.cx,
                cy: c.cy,
                width: self.width,
                height: self.height,
            })
        }
    }
}

pub fn circle_area(c: &Circle) -> f64 {
    PI * c.r * c.r
}

/// Exact area of the intersection of two discs.
pub fn circle_intersection_area(a: &Circle, b: &Circle) -> f64 {
    // Evaluate with the larger disc first so the result does not depend on
    // argument order, not even in the last bit.
    let (big, small) = match a.canonical_cmp(b) {
        Ordering::Less => (b, a),
        _ => (a, b),
    };
    let (r1, r2) = (big.r, small.r);
    let d = big.center_distance(small);

    if d >= r1 + r2 {
        return 0.0;
    }
    if d <= r1 - r2 {
        return circle_area(small);
    }

    let d2 = d * d;
    let alpha = ((d2 + r1 * r1 - r2 * r2) / (2.0 * d * r1)).clamp(-1.0, 1.0).acos();
    let beta = ((d2 + r2 * r2 - r1 * r1) / (2.0 * d * r2)).clamp(-1.0, 1.0).acos();
    let kite = (-d + r1 + r2) * (d + r1 - r2) * (d - r1 + r2) * (d + r1 + r2);
    let area = r1 * r1 * alpha + r2 * r2 * beta - 0.5 * kite.max(0.0).sqrt();
    area.clamp(0.0, circle_area(small))
}

/// Circle intersection-over-union of two discs, in `[0, 1]`.
pub fn ciou(a: &Circle, b: &Circle) -> f64 {
    let inter = circle_intersection_area(a, b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = circle_area(a) + circle_area(b) - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Rotates a circle a quarter turn clockwise inside its frame.
///
/// Continuous coordinates: `(x, y) -> (height - y, x)`; the returned frame
/// has its dimensions swapped.
pub fn rotate90cw(c: &Circle, f: &Frame) -> Result<(Circle, Frame)> {
    f.check(c)?;
    Ok((
        Circle::from_parts_unchecked(f.height - c.cy, c.cx, c.r),
        Frame {
            width: f.height,
            height: f.width,
        },
    ))
}

/// Inverse of [`rotate90cw`]: `(x, y) -> (y, width - x)`.
pub fn rotate90ccw(c: &Circle, f: &Frame) -> Result<(Circle, Frame)> {
    f.check(c)?;
    Ok((
        Circle::from_parts_unchecked(c.cy, f.width - c.cx, c.r),
        Frame {
            width: f.height,
            height: f.width,
        },
    ))
}
