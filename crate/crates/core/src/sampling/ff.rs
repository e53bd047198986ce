//! Advancing-front node placement with a spatially varying radius.
//!
//! A front of candidate points is kept ordered left to right. Each step
//! commits the lowest candidate `p`, drops every candidate closer than
//! `h(p)`, and replaces the gap between the surviving left and right
//! neighbours with five points on the arc of radius `h(p)` around `p`.

use std::f64::consts::PI;

use super::{NodeSet, Point2, Rect, SamplerKind, SamplingError};
use crate::rng::RngStream;

/// Hard cap on generated nodes; a radius field this fine is a caller bug.
pub const MAX_FF_NODES: usize = 4_000_000;

// Fractions of the angular gap between neighbours at which new candidates
// are placed. The endpoints are excluded so no candidate duplicates a
// neighbour direction.
const ARC_FRACTIONS: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];

/// Local target spacing of the node set.
pub trait RadiusField {
    fn radius(&self, p: Point2) -> f64;
}

#[derive(Clone, Copy, Debug)]
pub struct ConstantRadius(pub f64);

impl RadiusField for ConstantRadius {
    fn radius(&self, _p: Point2) -> f64 {
        self.0
    }
}

impl<F: Fn(Point2) -> f64> RadiusField for F {
    fn radius(&self, p: Point2) -> f64 {
        self(p)
    }
}

fn checked_radius<H: RadiusField + ?Sized>(h: &H, p: Point2) -> Result<f64, SamplingError> {
    let r = h.radius(p);
    if r > 0.0 && r.is_finite() {
        Ok(r)
    } else {
        Err(SamplingError::InvalidRadius {
            x: p.x,
            y: p.y,
            value: r,
        })
    }
}

/// Runs the advancing front directly in `bbox` coordinates, with `h`
/// evaluated in the same coordinates. Output is in commit order.
pub fn advancing_front<H: RadiusField + ?Sized>(
    bbox: Rect,
    h: &H,
    rng: &mut RngStream,
) -> Result<Vec<Point2>, SamplingError> {
    let mut front = Vec::new();
    let mut x = bbox.xmin;
    while x <= bbox.xmax {
        let r = checked_radius(h, Point2::new(x, bbox.ymin))?;
        // jitter in (0, 0.01 r]
        let jitter = 0.01 * r * (1.0 - rng.uniform());
        front.push(Point2::new(x, bbox.ymin + jitter));
        x += r;
    }

    let mut out = Vec::new();
    while let Some(idx) = lowest(&front) {
        let p = front[idx];
        if p.y > bbox.ymax {
            break;
        }
        if out.len() >= MAX_FF_NODES {
            return Err(SamplingError::NodeLimit(MAX_FF_NODES));
        }
        let r = checked_radius(h, p)?;
        out.push(p);

        let r2 = r * r;
        let left: Vec<Point2> = front[..idx]
            .iter()
            .copied()
            .filter(|q| q.dist2(p) >= r2)
            .collect();
        let right: Vec<Point2> = front[idx + 1..]
            .iter()
            .copied()
            .filter(|q| q.dist2(p) >= r2)
            .collect();

        // A missing neighbour means the front touches a side wall; the arc
        // end is aimed where the circle of radius r meets that wall.
        let ang_left = left.last().map_or_else(
            || {
                let gap = p.x - bbox.xmin;
                if gap < r {
                    (-gap / r).acos()
                } else {
                    PI
                }
            },
            |q| (q.y - p.y).atan2(q.x - p.x),
        );
        let ang_right = right.first().map_or_else(
            || {
                let gap = bbox.xmax - p.x;
                if gap < r {
                    (gap / r).acos()
                } else {
                    0.0
                }
            },
            |q| (q.y - p.y).atan2(q.x - p.x),
        );

        let mut next = left;
        next.reserve(ARC_FRACTIONS.len() + right.len());
        for f in ARC_FRACTIONS {
            let ang = ang_left - f * (ang_left - ang_right);
            let q = Point2::new(p.x + r * ang.cos(), p.y + r * ang.sin());
            if q.x >= bbox.xmin && q.x <= bbox.xmax {
                next.push(q);
            }
        }
        next.extend(right);
        front = next;
    }
    Ok(out)
}

fn lowest(front: &[Point2]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in front.iter().enumerate() {
        if best.is_none_or(|(_, y)| p.y < y) {
            best = Some((i, p.y));
        }
    }
    best.map(|(i, _)| i)
}

/// Generates nodes in the unit square according to `h` (unit-square units)
/// and maps them onto `rect`.
pub fn ff_generate<H: RadiusField + ?Sized>(
    rect: Rect,
    h: &H,
    rng: &mut RngStream,
) -> Result<NodeSet, SamplingError> {
    let unit = advancing_front(Rect::unit(), h, rng)?;
    let points = unit.into_iter().map(|p| rect.from_unit(p)).collect();
    Ok(NodeSet::new(points, rect, rng.seed(), SamplerKind::Ff))
}
