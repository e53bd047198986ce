use super::{NodeSet, Point2, Rect, SamplerKind, SamplingError};

/// Radical inverse of `k` in base `p`: the base-`p` digits of `k` mirrored
/// about the radix point.
pub fn van_der_corput(mut k: u64, p: u64) -> f64 {
    debug_assert!(p >= 2);
    let base = p as f64;
    let mut scale = 1.0 / base;
    let mut out = 0.0;
    while k > 0 {
        out += (k % p) as f64 * scale;
        k /= p;
        scale /= base;
    }
    out
}

/// Hammersley set `{(k/n, Φ_p(k)) : k = 1..n}` mapped onto `rect`.
pub fn sample_hammersley(rect: Rect, n: usize, p: u64) -> Result<NodeSet, SamplingError> {
    if n == 0 {
        return Err(SamplingError::EmptyRequest);
    }
    let nf = n as f64;
    let points = (1..=n as u64)
        .map(|k| rect.from_unit(Point2::new(k as f64 / nf, van_der_corput(k, p))))
        .collect();
    Ok(NodeSet::new(points, rect, 0, SamplerKind::Hammersley))
}
