use super::{NodeSet, Point2, Rect, SamplerKind, SamplingError};
use crate::rng::RngStream;

/// `n` i.i.d. uniform points in `rect`.
pub fn sample_random(rect: Rect, n: usize, rng: &mut RngStream) -> Result<NodeSet, SamplingError> {
    if n == 0 {
        return Err(SamplingError::EmptyRequest);
    }
    let points = (0..n)
        .map(|_| {
            let u = rng.uniform();
            let v = rng.uniform();
            rect.from_unit(Point2::new(u, v))
        })
        .collect();
    Ok(NodeSet::new(points, rect, rng.seed(), SamplerKind::Random))
}

/// Latin hypercube design: each of the `n` equal-width strata per axis holds
/// exactly one point.
pub fn sample_lhs(rect: Rect, n: usize, rng: &mut RngStream) -> Result<NodeSet, SamplingError> {
    if n == 0 {
        return Err(SamplingError::EmptyRequest);
    }
    let mut xs: Vec<usize> = (0..n).collect();
    let mut ys: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut xs);
    rng.shuffle(&mut ys);
    let nf = n as f64;
    let points = xs
        .into_iter()
        .zip(ys)
        .map(|(sx, sy)| {
            let u = stratum_point(sx, rng.uniform(), nf);
            let v = stratum_point(sy, rng.uniform(), nf);
            rect.from_unit(Point2::new(u, v))
        })
        .collect();
    Ok(NodeSet::new(points, rect, rng.seed(), SamplerKind::Lhs))
}

// (s + u) / n can round up onto the next stratum's edge when u is within an
// ulp of 1; pull it back so the stratum invariant holds exactly.
fn stratum_point(stratum: usize, u: f64, n: f64) -> f64 {
    let v = (stratum as f64 + u) / n;
    let upper = (stratum as f64 + 1.0) / n;
    if v >= upper && stratum as f64 + 1.0 < n {
        stratum as f64 / n
    } else {
        v.min(1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_single_point_is_reproducible() {
        let a = sample_random(Rect::unit(), 1, &mut RngStream::new(11)).unwrap();
        let b = sample_random(Rect::unit(), 1, &mut RngStream::new(11)).unwrap();
        assert_eq!(a.points, b.points);
        assert!(Rect::unit().contains(a.points[0]));
    }

    #[test]
    fn random_mean_near_half() {
        let ns = sample_random(Rect::unit(), 10_000, &mut RngStream::new(5)).unwrap();
        let mean = ns.iter().map(|p| p.x).sum::<f64>() / 10_000.0;
        assert!((mean - 0.5).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn random_respects_rect() {
        let rect = Rect::new(2.0, 3.0, -1.0, 1.0).unwrap();
        let ns = sample_random(rect, 100, &mut RngStream::new(2)).unwrap();
        assert_eq!(ns.len(), 100);
        assert!(ns.iter().all(|&p| rect.contains(p)));
    }

    #[test]
    fn zero_points_rejected() {
        assert!(sample_random(Rect::unit(), 0, &mut RngStream::new(0)).is_err());
        assert!(sample_lhs(Rect::unit(), 0, &mut RngStream::new(0)).is_err());
    }

    #[test]
    fn lhs_four_points_one_per_quarter() {
        let ns = sample_lhs(Rect::unit(), 4, &mut RngStream::new(9)).unwrap();
        for axis in 0..2 {
            let mut bins: Vec<usize> = ns
                .iter()
                .map(|p| {
                    let v = if axis == 0 { p.x } else { p.y };
                    ((v * 4.0).floor() as usize).min(3)
                })
                .collect();
            bins.sort_unstable();
            assert_eq!(bins, vec![0, 1, 2, 3]);
        }
    }

    #[test]
    fn lhs_single_point() {
        let ns = sample_lhs(Rect::unit(), 1, &mut RngStream::new(1)).unwrap();
        assert_eq!(ns.len(), 1);
        assert!(Rect::unit().contains(ns.points[0]));
    }

    #[test]
    fn lhs_thousand_strata_exact() {
        let n = 1000;
        let ns = sample_lhs(Rect::unit(), n, &mut RngStream::new(77)).unwrap();
        let mut hx = vec![0usize; n];
        let mut hy = vec![0usize; n];
        for p in ns.iter() {
            hx[((p.x * n as f64).floor() as usize).min(n - 1)] += 1;
            hy[((p.y * n as f64).floor() as usize).min(n - 1)] += 1;
        }
        assert!(hx.iter().all(|&c| c == 1));
        assert!(hy.iter().all(|&c| c == 1));
    }
}
