//! Point-set generation in rectangles.
//!
//! Every sampler works in the unit square and maps its output affinely onto
//! the target [`Rect`]. Radius fields handed to the advancing-front generator
//! are therefore expressed in unit-square units as well.

mod ff;
mod lowdisc;
mod metrics;
mod uniform;

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

pub use ff::{advancing_front, ff_generate, ConstantRadius, RadiusField, MAX_FF_NODES};
pub use lowdisc::{sample_hammersley, van_der_corput};
pub use metrics::{
    filter_inside, nearest_neighbor_distances, nn_spacing_stats, star_discrepancy_bruteforce,
    SpacingStats,
};
pub use uniform::{sample_lhs, sample_random};

#[derive(Debug, Error)]
pub enum SamplingError {
    #[error("invalid rectangle [{xmin}, {xmax}] x [{ymin}, {ymax}]")]
    InvalidRect {
        xmin: f64,
        xmax: f64,
        ymin: f64,
        ymax: f64,
    },
    #[error("radius field returned {value} at ({x}, {y}); radius must be positive and finite")]
    InvalidRadius { x: f64, y: f64, value: f64 },
    #[error("advancing front exceeded {0} nodes")]
    NodeLimit(usize),
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("sample count must be positive")]
    EmptyRequest,
    #[error("unknown sampler `{0}`")]
    UnknownSampler(String),
    #[error("malformed node file: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(self, other: Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn dist2(self, other: Point2) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }
}

/// Axis-aligned box `[xmin, xmax] x [ymin, ymax]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
}

impl Rect {
    pub fn new(xmin: f64, xmax: f64, ymin: f64, ymax: f64) -> Result<Self, SamplingError> {
        let finite = [xmin, xmax, ymin, ymax].iter().all(|v| v.is_finite());
        if !finite || xmin >= xmax || ymin >= ymax {
            return Err(SamplingError::InvalidRect {
                xmin,
                xmax,
                ymin,
                ymax,
            });
        }
        Ok(Self {
            xmin,
            xmax,
            ymin,
            ymax,
        })
    }

    pub const fn unit() -> Self {
        Self {
            xmin: 0.0,
            xmax: 1.0,
            ymin: 0.0,
            ymax: 1.0,
        }
    }

    pub fn width(&self) -> f64 {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> f64 {
        self.ymax - self.ymin
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, p: Point2) -> bool {
        p.x >= self.xmin && p.x <= self.xmax && p.y >= self.ymin && p.y <= self.ymax
    }

    /// Maps a unit-square point into this box. The result is clamped so
    /// that `u = 1` lands exactly on the far edge.
    pub fn from_unit(&self, p: Point2) -> Point2 {
        Point2::new(
            (self.xmin + self.width() * p.x).clamp(self.xmin, self.xmax),
            (self.ymin + self.height() * p.y).clamp(self.ymin, self.ymax),
        )
    }

    pub fn to_unit(&self, p: Point2) -> Point2 {
        Point2::new(
            (p.x - self.xmin) / self.width(),
            (p.y - self.ymin) / self.height(),
        )
    }

    pub fn approx_eq(&self, other: &Rect, tol: f64) -> bool {
        (self.xmin - other.xmin).abs() <= tol
            && (self.xmax - other.xmax).abs() <= tol
            && (self.ymin - other.ymin).abs() <= tol
            && (self.ymax - other.ymax).abs() <= tol
    }
}

impl fmt::Display for Rect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}, {}] x [{}, {}]",
            self.xmin, self.xmax, self.ymin, self.ymax
        )
    }
}

/// The nine collocation strategies compared by the benchmark harness.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SamplerKind {
    Random,
    RandomR,
    Hammersley,
    Lhs,
    LhsR,
    Ff,
    FfR,
    Rang,
    RangM,
}

impl SamplerKind {
    pub const ALL: [SamplerKind; 9] = [
        SamplerKind::Random,
        SamplerKind::RandomR,
        SamplerKind::Hammersley,
        SamplerKind::Lhs,
        SamplerKind::LhsR,
        SamplerKind::Ff,
        SamplerKind::FfR,
        SamplerKind::Rang,
        SamplerKind::RangM,
    ];

    /// Command-line / file-name spelling.
    pub fn name(self) -> &'static str {
        match self {
            SamplerKind::Random => "random",
            SamplerKind::RandomR => "random-r",
            SamplerKind::Hammersley => "hammersley",
            SamplerKind::Lhs => "lhs",
            SamplerKind::LhsR => "lhs-r",
            SamplerKind::Ff => "ff",
            SamplerKind::FfR => "ff-r",
            SamplerKind::Rang => "rang",
            SamplerKind::RangM => "rang-m",
        }
    }

    /// Display label used in tables and plots.
    pub fn label(self) -> &'static str {
        match self {
            SamplerKind::Random => "Random",
            SamplerKind::RandomR => "Random-R",
            SamplerKind::Hammersley => "Hammersley",
            SamplerKind::Lhs => "LHS",
            SamplerKind::LhsR => "LHS-R",
            SamplerKind::Ff => "FF",
            SamplerKind::FfR => "FF-R",
            SamplerKind::Rang => "RANG",
            SamplerKind::RangM => "RANG-m",
        }
    }

    /// Whether the collocation set is regenerated every resampling interval.
    pub fn resamples(self) -> bool {
        matches!(
            self,
            SamplerKind::RandomR
                | SamplerKind::LhsR
                | SamplerKind::FfR
                | SamplerKind::Rang
                | SamplerKind::RangM
        )
    }

    /// Memory coefficient for the residual-adaptive samplers.
    pub fn memory(self) -> Option<f64> {
        match self {
            SamplerKind::Rang => Some(0.0),
            SamplerKind::RangM => Some(0.9),
            _ => None,
        }
    }

    /// Samplers whose node count is set by a radius search rather than exactly.
    pub fn uses_radius_search(self) -> bool {
        matches!(
            self,
            SamplerKind::Ff | SamplerKind::FfR | SamplerKind::Rang | SamplerKind::RangM
        )
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SamplerKind {
    type Err = SamplingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        SamplerKind::ALL
            .into_iter()
            .find(|k| k.name() == key || k.label().to_ascii_lowercase() == key)
            .ok_or_else(|| SamplingError::UnknownSampler(s.to_string()))
    }
}

/// An ordered collection of collocation points inside `rect`.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeSet {
    pub points: Vec<Point2>,
    pub rect: Rect,
    pub seed: u64,
    pub sampler: SamplerKind,
}

impl NodeSet {
    pub fn new(points: Vec<Point2>, rect: Rect, seed: u64, sampler: SamplerKind) -> Self {
        Self {
            points,
            rect,
            seed,
            sampler,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Point2> {
        self.points.iter()
    }

    /// Affinely maps the set from its rectangle onto `target`.
    pub fn map_to(&self, target: Rect) -> NodeSet {
        let points = self
            .points
            .iter()
            .map(|&p| target.from_unit(self.rect.to_unit(p)))
            .collect();
        NodeSet {
            points,
            rect: target,
            ..self.clone()
        }
    }

    pub fn with_sampler(mut self, sampler: SamplerKind) -> Self {
        self.sampler = sampler;
        self
    }

    /// Writes `x,y` CSV with 17 significant digits per coordinate.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "x,y")?;
        for p in &self.points {
            writeln!(out, "{:.16e},{:.16e}", p.x, p.y)?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), SamplingError> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))?;
        Ok(())
    }

    /// Reads the `x,y` CSV format back. Rectangle, seed and sampler are not
    /// part of the file and must be supplied.
    pub fn read_csv<R: BufRead>(
        input: R,
        rect: Rect,
        seed: u64,
        sampler: SamplerKind,
    ) -> Result<NodeSet, SamplingError> {
        let mut lines = input.lines();
        match lines.next() {
            Some(Ok(h)) if h.trim() == "x,y" => {}
            Some(Ok(h)) => return Err(SamplingError::Parse(format!("bad header `{h}`"))),
            Some(Err(e)) => return Err(e.into()),
            None => return Err(SamplingError::Parse("empty file".into())),
        }
        let mut points = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let mut next = || -> Result<f64, SamplingError> {
                parts
                    .next()
                    .and_then(|s| s.trim().parse::<f64>().ok())
                    .ok_or_else(|| SamplingError::Parse(format!("row {}: `{line}`", i + 1)))
            };
            let x = next()?;
            let y = next()?;
            points.push(Point2::new(x, y));
        }
        Ok(NodeSet::new(points, rect, seed, sampler))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rect_rejects_degenerate() {
        assert!(Rect::new(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(Rect::new(1.0, 0.0, 0.0, 1.0).is_err());
        assert!(Rect::new(0.0, 1.0, 0.0, f64::NAN).is_err());
    }

    #[test]
    fn unit_map_hits_far_edges() {
        let r = Rect::new(-1.0, 1.0, 0.0, std::f64::consts::FRAC_PI_2).unwrap();
        let p = r.from_unit(Point2::new(1.0, 1.0));
        assert_eq!(p.x, 1.0);
        assert_eq!(p.y, std::f64::consts::FRAC_PI_2);
        let q = r.to_unit(Point2::new(0.0, std::f64::consts::FRAC_PI_4));
        assert!((q.x - 0.5).abs() < 1e-15 && (q.y - 0.5).abs() < 1e-15);
    }

    #[test]
    fn sampler_names_round_trip() {
        for k in SamplerKind::ALL {
            assert_eq!(k.name().parse::<SamplerKind>().unwrap(), k);
            assert_eq!(k.label().parse::<SamplerKind>().unwrap(), k);
        }
        assert!("rang-x".parse::<SamplerKind>().is_err());
        assert_eq!(SamplerKind::ALL.iter().filter(|k| k.resamples()).count(), 5);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let pts = vec![
            Point2::new(0.1, 1.0 / 3.0),
            Point2::new(std::f64::consts::PI, -2.5e-9),
        ];
        let ns = NodeSet::new(pts, Rect::unit(), 1, SamplerKind::Random);
        let mut buf = Vec::new();
        ns.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x,y\n"));
        let back = NodeSet::read_csv(&buf[..], Rect::unit(), 1, SamplerKind::Random).unwrap();
        assert_eq!(back, ns);
    }
}
