//! Closed-form derivatives of the analytic reference solutions, written out
//! by hand so they share nothing with the jet engine.

#![allow(dead_code)]

use rang_core::network::Dir;
use rang_core::problems::ProblemKind;
use rang_core::sampling::Point2;

/// `∂^order u / ∂dir^order` at a point, for `order ≤ 3`.
pub type Derivs = Box<dyn Fn(Dir, usize) -> f64>;

fn sech(z: f64) -> f64 {
    1.0 / z.cosh()
}

/// `f(z) = sech(2z)` and its first two derivatives.
fn sech2z(z: f64) -> [f64; 3] {
    let s = sech(2.0 * z);
    let t = (2.0 * z).tanh();
    [s, -2.0 * s * t, 4.0 * s * t * t - 4.0 * s * s * s]
}

fn wave(p: Point2) -> Derivs {
    let c = 3f64.sqrt();
    // (amplitude, direction of travel, shift)
    let terms = [(0.5, 1.0, 0.0), (-0.5, 1.0, -8.0), (0.5, -1.0, 0.0), (-0.5, -1.0, 8.0)];
    let mut d = [[0.0; 3]; 2];
    for (a, sgn, b) in terms {
        let f = sech2z(p.x + sgn * c * p.y + b);
        for k in 0..3 {
            d[0][k] += a * f[k];
            d[1][k] += a * (sgn * c).powi(k as i32) * f[k];
        }
    }
    Box::new(move |dir, order| match dir {
        Dir::X => d[0][order],
        Dir::T => d[1][order],
    })
}

fn kdv(p: Point2) -> Derivs {
    let c: f64 = 7.0;
    let (a, k) = (c / 2.0, c.sqrt() / 2.0);
    let xi = p.x - c * p.y + 7.0;
    let s = sech(k * xi);
    let t = (k * xi).tanh();
    let (s2, s4) = (s * s, s.powi(4));
    let dxi = [
        a * s2,
        -2.0 * a * k * s2 * t,
        -2.0 * a * k * k * (s4 - 2.0 * s2 * t * t),
        2.0 * a * k.powi(3) * (8.0 * s4 * t - 4.0 * s2 * t.powi(3)),
    ];
    Box::new(move |dir, order| match (dir, order) {
        (_, 0) => dxi[0],
        (Dir::X, n) => dxi[n],
        (Dir::T, n) => (-c).powi(n as i32) * dxi[n],
    })
}

fn poisson(p: Point2) -> Derivs {
    let s2 = 0.01;
    let gauss = |cx: f64, cy: f64| {
        let (dx, dy) = (p.x - cx, p.y - cy);
        let g = (-(dx * dx + dy * dy) / (2.0 * s2)).exp();
        // derivatives in x and in y, orders 0..=2
        let along = |d: f64| [g, -d / s2 * g, (d * d / (s2 * s2) - 1.0 / s2) * g];
        (along(dx), along(dy))
    };
    let (ax, ay) = gauss(0.3, 0.3);
    let (bx, by) = gauss(-0.3, -0.3);
    Box::new(move |dir, order| match dir {
        Dir::X => ax[order] - bx[order],
        Dir::T => ay[order] - by[order],
    })
}

fn conv_diff(p: Point2) -> Derivs {
    let (c, mu): (f64, f64) = (4.0, 0.05);
    let tau = p.y + 0.1;
    let xi = p.x + 2.0 - c * p.y;
    let u = 0.1 / mu.sqrt() / tau.sqrt() * (-xi * xi / (4.0 * mu * tau)).exp();
    let ux = u * (-xi / (2.0 * mu * tau));
    let uxx = u * (xi * xi / (4.0 * mu * mu * tau * tau) - 1.0 / (2.0 * mu * tau));
    let ut = u * (-1.0 / (2.0 * tau) + c * xi / (2.0 * mu * tau) + xi * xi / (4.0 * mu * tau * tau));
    Box::new(move |dir, order| match (dir, order) {
        (_, 0) => u,
        (Dir::X, 1) => ux,
        (Dir::X, 2) => uxx,
        (Dir::T, 1) => ut,
        _ => f64::NAN,
    })
}

/// Oracle for the analytic problems; `None` for grid-reference problems.
pub fn oracle(kind: ProblemKind, p: Point2) -> Option<Derivs> {
    match kind {
        ProblemKind::Wave => Some(wave(p)),
        ProblemKind::Kdv => Some(kdv(p)),
        ProblemKind::Poisson => Some(poisson(p)),
        ProblemKind::ConvDiff => Some(conv_diff(p)),
        ProblemKind::AllenCahn | ProblemKind::Schrodinger => None,
    }
}

pub const ANALYTIC: [ProblemKind; 4] = [
    ProblemKind::Wave,
    ProblemKind::Kdv,
    ProblemKind::Poisson,
    ProblemKind::ConvDiff,
];
