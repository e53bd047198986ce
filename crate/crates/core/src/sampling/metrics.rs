use super::{NodeSet, Point2, SamplingError};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpacingStats {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

/// Distance from each point to its nearest other point (brute force).
pub fn nearest_neighbor_distances(points: &[Point2]) -> Vec<f64> {
    points
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            points
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &q)| p.dist2(q))
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .collect()
}

pub fn nn_spacing_stats(ns: &NodeSet) -> Result<SpacingStats, SamplingError> {
    if ns.len() < 2 {
        return Err(SamplingError::TooFewPoints {
            needed: 2,
            got: ns.len(),
        });
    }
    let d = nearest_neighbor_distances(&ns.points);
    Ok(SpacingStats {
        min: d.iter().copied().fold(f64::INFINITY, f64::min),
        mean: d.iter().sum::<f64>() / d.len() as f64,
        max: d.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

/// Star discrepancy of a point set in `[0,1]²`, by enumerating every
/// anchored box whose corner sits on a point coordinate (or on 1).
///
/// Both the open and the closed box are counted at each corner so the
/// supremum over all anchored boxes is attained. O(n³); meant as an oracle
/// for a few hundred points.
pub fn star_discrepancy_bruteforce(points: &[Point2]) -> f64 {
    let n = points.len();
    if n == 0 {
        return 1.0;
    }
    let mut xs: Vec<f64> = points.iter().map(|p| p.x).chain([1.0]).collect();
    let mut ys: Vec<f64> = points.iter().map(|p| p.y).chain([1.0]).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    ys.sort_by(f64::total_cmp);
    ys.dedup();
    let nf = n as f64;
    let mut worst: f64 = 0.0;
    for &a in &xs {
        for &b in &ys {
            let mut open = 0usize;
            let mut closed = 0usize;
            for p in points {
                if p.x < a && p.y < b {
                    open += 1;
                }
                if p.x <= a && p.y <= b {
                    closed += 1;
                }
            }
            let vol = a * b;
            worst = worst.max(closed as f64 / nf - vol).max(vol - open as f64 / nf);
        }
    }
    worst
}

/// Order-preserving subset of `ns` for which `inside` holds.
pub fn filter_inside<F: Fn(Point2) -> bool>(ns: &NodeSet, inside: F) -> NodeSet {
    NodeSet {
        points: ns.points.iter().copied().filter(|&p| inside(p)).collect(),
        ..ns.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use crate::sampling::{sample_hammersley, sample_random, Rect, SamplerKind};

    fn set(points: Vec<Point2>) -> NodeSet {
        NodeSet::new(points, Rect::unit(), 0, SamplerKind::Random)
    }

    #[test]
    fn square_corners_spacing() {
        let ns = set(vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(0.0, 1.0),
            Point2::new(1.0, 1.0),
        ]);
        let s = nn_spacing_stats(&ns).unwrap();
        assert_eq!((s.min, s.mean, s.max), (1.0, 1.0, 1.0));
    }

    #[test]
    fn collinear_spacing() {
        let ns = set(vec![
            Point2::new(0.0, 0.0),
            Point2::new(0.1, 0.0),
            Point2::new(0.3, 0.0),
        ]);
        let s = nn_spacing_stats(&ns).unwrap();
        assert!((s.min - 0.1).abs() < 1e-15);
        assert!((s.max - 0.2).abs() < 1e-15);
        assert!((s.mean - 0.4 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn spacing_needs_two_points() {
        assert!(nn_spacing_stats(&set(vec![Point2::new(0.5, 0.5)])).is_err());
    }

    #[test]
    fn hammersley_points_distinct() {
        let ns = sample_hammersley(Rect::unit(), 100, 2).unwrap();
        assert!(nn_spacing_stats(&ns).unwrap().min > 0.0);
    }

    #[test]
    fn single_point_discrepancy() {
        assert_eq!(star_discrepancy_bruteforce(&[Point2::new(1.0, 1.0)]), 1.0);
        assert_eq!(star_discrepancy_bruteforce(&[Point2::new(0.5, 0.5)]), 0.75);
    }

    #[test]
    fn hammersley_beats_random_at_64() {
        let ham = star_discrepancy_bruteforce(&sample_hammersley(Rect::unit(), 64, 2).unwrap().points);
        let mean_random = (0..20)
            .map(|s| {
                let ns = sample_random(Rect::unit(), 64, &mut RngStream::new(s)).unwrap();
                star_discrepancy_bruteforce(&ns.points)
            })
            .sum::<f64>()
            / 20.0;
        assert!(ham < mean_random, "{ham} vs {mean_random}");
    }

    #[test]
    fn filter_identity_and_empty() {
        let ns = sample_random(Rect::unit(), 50, &mut RngStream::new(4)).unwrap();
        assert_eq!(filter_inside(&ns, |_| true), ns);
        assert!(filter_inside(&ns, |_| false).is_empty());
    }
}
