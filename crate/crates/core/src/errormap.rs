//! Gridded error fields and error-driven node generation.
//!
//! An error map is stored as values at cell centres of a uniform grid and
//! read back by nearest-neighbour lookup. [`standardize_combine`] turns the
//! raw error into a normalized map in `[0, 1]`, keeping a decayed copy of the
//! previous map (the memory term). [`radius_field_from`] converts that into
//! a local node spacing between `s/√r` and `s`, and [`arff`] runs the
//! advancing front with it. [`calibrated_arff`] bisects on `s` so the node
//! count lands near a target.

use std::io::{BufRead, Write};
use std::path::Path;

use thiserror::Error;

use crate::rng::RngStream;
use crate::sampling::{ff_generate, NodeSet, Point2, RadiusField, Rect, SamplingError};

/// Added to the standardization denominator so a flat error map maps to 0.
pub const DEFAULT_EPS: f64 = 1e-12;
/// Default error-grid resolution per axis.
pub const DEFAULT_GRID: usize = 128;

#[derive(Debug, Error)]
pub enum ErrorMapError {
    #[error("grid must be at least 2x2, got {nx}x{ny}")]
    GridTooSmall { nx: usize, ny: usize },
    #[error("expected {expected} grid values, got {got}")]
    WrongLength { expected: usize, got: usize },
    #[error("non-finite error value at grid node ({i}, {j})")]
    NonFinite { i: usize, j: usize },
    #[error("normalized value {value} at grid node ({i}, {j}) is outside [0, 1]")]
    OutOfRange { i: usize, j: usize, value: f64 },
    #[error("grid shapes differ: {a:?} vs {b:?}")]
    ShapeMismatch { a: (usize, usize), b: (usize, usize) },
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("malformed error-map file: {0}")]
    Parse(String),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Scalar field sampled at the cell centres of an `nx` by `ny` grid over
/// `rect`. Values are row-major with `x` varying fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct GridErrorMap {
    rect: Rect,
    nx: usize,
    ny: usize,
    values: Vec<f64>,
}

impl GridErrorMap {
    pub fn new(rect: Rect, nx: usize, ny: usize, values: Vec<f64>) -> Result<Self, ErrorMapError> {
        if nx < 2 || ny < 2 {
            return Err(ErrorMapError::GridTooSmall { nx, ny });
        }
        if values.len() != nx * ny {
            return Err(ErrorMapError::WrongLength {
                expected: nx * ny,
                got: values.len(),
            });
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(ErrorMapError::NonFinite {
                i: k % nx,
                j: k / nx,
            });
        }
        Ok(Self {
            rect,
            nx,
            ny,
            values,
        })
    }

    pub fn constant(rect: Rect, nx: usize, ny: usize, value: f64) -> Result<Self, ErrorMapError> {
        Self::new(rect, nx, ny, vec![value; nx * ny])
    }

    /// Samples `f` at every cell centre.
    pub fn from_fn<F: Fn(Point2) -> f64>(
        rect: Rect,
        nx: usize,
        ny: usize,
        f: F,
    ) -> Result<Self, ErrorMapError> {
        let values = cell_centres(rect, nx, ny).map(f).collect();
        Self::new(rect, nx, ny, values)
    }

    pub fn rect(&self) -> Rect {
        self.rect
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nx + i]
    }

    /// Cell centre of grid node `(i, j)`.
    pub fn node(&self, i: usize, j: usize) -> Point2 {
        cell_centre(self.rect, self.nx, self.ny, i, j)
    }

    /// Every cell centre in storage order.
    pub fn nodes(&self) -> impl Iterator<Item = Point2> + '_ {
        cell_centres(self.rect, self.nx, self.ny)
    }

    /// Same values reinterpreted over another rectangle.
    pub fn with_rect(mut self, rect: Rect) -> Self {
        self.rect = rect;
        self
    }

    /// Index of the grid node nearest to `p`. Points outside the rectangle
    /// are clamped; a point exactly between two nodes goes to the lower one.
    pub fn nearest_index(&self, p: Point2) -> (usize, usize) {
        let fx = (p.x - self.rect.xmin) / self.rect.width() * self.nx as f64;
        let fy = (p.y - self.rect.ymin) / self.rect.height() * self.ny as f64;
        (nearest_cell(fx, self.nx), nearest_cell(fy, self.ny))
    }

    pub fn nearest_value(&self, p: Point2) -> f64 {
        let (i, j) = self.nearest_index(p);
        self.value(i, j)
    }

    /// Header `nx,ny,xmin,xmax,ymin,ymax`, one line with those values, then
    /// `ny` rows of `nx` values.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "nx,ny,xmin,xmax,ymin,ymax")?;
        writeln!(
            out,
            "{},{},{:.16e},{:.16e},{:.16e},{:.16e}",
            self.nx, self.ny, self.rect.xmin, self.rect.xmax, self.rect.ymin, self.rect.ymax
        )?;
        for row in self.values.chunks(self.nx) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), ErrorMapError> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self, ErrorMapError> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| ErrorMapError::Parse("empty file".into()))??;
        if header.trim() != "nx,ny,xmin,xmax,ymin,ymax" {
            return Err(ErrorMapError::Parse(format!("bad header `{header}`")));
        }
        let meta = lines
            .next()
            .ok_or_else(|| ErrorMapError::Parse("missing dimensions".into()))??;
        let meta: Vec<&str> = meta.split(',').map(str::trim).collect();
        if meta.len() != 6 {
            return Err(ErrorMapError::Parse("dimension line needs 6 fields".into()));
        }
        let parse_usize = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| ErrorMapError::Parse(format!("bad count `{s}`")))
        };
        let parse_f64 = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| ErrorMapError::Parse(format!("bad number `{s}`")))
        };
        let nx = parse_usize(meta[0])?;
        let ny = parse_usize(meta[1])?;
        let rect = Rect::new(
            parse_f64(meta[2])?,
            parse_f64(meta[3])?,
            parse_f64(meta[4])?,
            parse_f64(meta[5])?,
        )?;
        let mut values = Vec::with_capacity(nx * ny);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            for field in line.split(',') {
                values.push(parse_f64(field.trim())?);
            }
        }
        Self::new(rect, nx, ny, values)
    }
}

fn nearest_cell(f: f64, n: usize) -> usize {
    // Cell k covers (k, k+1] in scaled units; the boundary point k belongs
    // to the lower cell, which is the declared tie-break.
    let k = f.ceil() - 1.0;
    if k.is_nan() || k < 0.0 {
        0
    } else {
        (k as usize).min(n - 1)
    }
}

fn cell_centre(rect: Rect, nx: usize, ny: usize, i: usize, j: usize) -> Point2 {
    Point2::new(
        rect.xmin + (i as f64 + 0.5) * rect.width() / nx as f64,
        rect.ymin + (j as f64 + 0.5) * rect.height() / ny as f64,
    )
}

fn cell_centres(rect: Rect, nx: usize, ny: usize) -> impl Iterator<Item = Point2> {
    (0..ny).flat_map(move |j| (0..nx).map(move |i| cell_centre(rect, nx, ny, i, j)))
}

/// Error map whose values are all in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedErrorMap(GridErrorMap);

impl NormalizedErrorMap {
    pub fn new(grid: GridErrorMap) -> Result<Self, ErrorMapError> {
        let nx = grid.nx;
        if let Some(k) = grid.values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(ErrorMapError::OutOfRange {
                i: k % nx,
                j: k / nx,
                value: grid.values[k],
            });
        }
        Ok(Self(grid))
    }

    pub fn zeros(rect: Rect, nx: usize, ny: usize) -> Result<Self, ErrorMapError> {
        Ok(Self(GridErrorMap::constant(rect, nx, ny, 0.0)?))
    }

    pub fn grid(&self) -> &GridErrorMap {
        &self.0
    }

    pub fn into_grid(self) -> GridErrorMap {
        self.0
    }

    pub fn values(&self) -> &[f64] {
        &self.0.values
    }

    pub fn nearest_value(&self, p: Point2) -> f64 {
        self.0.nearest_value(p)
    }
}

/// `ē = max{(|e| − inf|e|) / (sup|e| − inf|e| + ε), β·ẽ}`, elementwise,
/// with inf and sup taken over the grid values.
pub fn standardize_combine(
    e: &GridErrorMap,
    prior: &NormalizedErrorMap,
    beta: f64,
    eps: f64,
) -> Result<NormalizedErrorMap, ErrorMapError> {
    if e.shape() != prior.0.shape() {
        return Err(ErrorMapError::ShapeMismatch {
            a: e.shape(),
            b: prior.0.shape(),
        });
    }
    if !(0.0..=1.0).contains(&beta) {
        return Err(ErrorMapError::InvalidParam(format!("beta {beta} not in [0, 1]")));
    }
    if !(eps > 0.0) {
        return Err(ErrorMapError::InvalidParam(format!("eps {eps} must be positive")));
    }
    let (lo, hi) = e
        .values
        .iter()
        .map(|v| v.abs())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
    let denom = hi - lo + eps;
    let values = e
        .values
        .iter()
        .zip(&prior.0.values)
        .map(|(&v, &p)| ((v.abs() - lo) / denom).max(beta * p).clamp(0.0, 1.0))
        .collect();
    Ok(NormalizedErrorMap(GridErrorMap {
        values,
        ..e.clone()
    }))
}

/// Radius field `h = s·((1 − ē)(1 − 1/√r) + 1/√r)`, evaluated through a
/// nearest-neighbour lookup of `ē`.
///
/// The field is queried in unit-square coordinates and pulled back onto the
/// map's own rectangle.
#[derive(Clone, Debug)]
pub struct ErrorRadiusField {
    ebar: NormalizedErrorMap,
    scale: f64,
    span: f64,
}

impl ErrorRadiusField {
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Radius for a normalized error value.
    pub fn radius_for(&self, ebar: f64) -> f64 {
        // Same as ((1-ē)(1-q)+q)·s with q = 1/√r, arranged so ē = 0 gives
        // exactly s.
        self.scale * (1.0 - ebar * self.span)
    }
}

impl RadiusField for ErrorRadiusField {
    fn radius(&self, p: Point2) -> f64 {
        let q = self.ebar.grid().rect().from_unit(p);
        self.radius_for(self.ebar.nearest_value(q))
    }
}

pub fn radius_field_from(
    ebar: &NormalizedErrorMap,
    ratio: f64,
    scale: f64,
) -> Result<ErrorRadiusField, ErrorMapError> {
    if !(ratio >= 1.0) || !ratio.is_finite() {
        return Err(ErrorMapError::InvalidParam(format!("ratio {ratio} must be >= 1")));
    }
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(ErrorMapError::InvalidParam(format!("scale {scale} must be positive")));
    }
    Ok(ErrorRadiusField {
        ebar: ebar.clone(),
        scale,
        span: 1.0 - 1.0 / ratio.sqrt(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArffParams {
    /// Memory coefficient β in `[0, 1]`.
    pub beta: f64,
    /// Max-to-min density ratio r ≥ 1.
    pub ratio: f64,
    /// Largest radius s.
    pub scale: f64,
    pub eps: f64,
}

impl ArffParams {
    pub fn new(beta: f64, ratio: f64, scale: f64) -> Self {
        Self {
            beta,
            ratio,
            scale,
            eps: DEFAULT_EPS,
        }
    }
}

/// Error-adaptive advancing front. Returns the node set together with the
/// normalized map to be used as the prior of the next call.
pub fn arff(
    rect: Rect,
    e: &GridErrorMap,
    prior: &NormalizedErrorMap,
    params: ArffParams,
    rng: &mut RngStream,
) -> Result<(NodeSet, NormalizedErrorMap), ErrorMapError> {
    let ebar = standardize_combine(e, prior, params.beta, params.eps)?;
    let h = radius_field_from(&ebar, params.ratio, params.scale)?;
    let nodes = ff_generate(rect, &h, rng)?;
    Ok((nodes, ebar))
}

/// Search interval and stopping tolerances for the radius bisection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BisectionBounds {
    pub s_low: f64,
    pub s_up: f64,
    /// Accepted relative deviation of the node count.
    pub count_tol: f64,
    /// Stop once the interval is narrower than this.
    pub width_tol: f64,
}

impl BisectionBounds {
    pub const COUNT_TOL: f64 = 0.05;
    pub const WIDTH_TOL: f64 = 0.003;

    pub fn new(s_low: f64, s_up: f64) -> Result<Self, ErrorMapError> {
        if !(s_low > 0.0) || !(s_up > s_low) || !s_up.is_finite() {
            return Err(ErrorMapError::InvalidParam(format!(
                "bisection bounds [{s_low}, {s_up}] must satisfy 0 < low < up"
            )));
        }
        Ok(Self {
            s_low,
            s_up,
            count_tol: Self::COUNT_TOL,
            width_tol: Self::WIDTH_TOL,
        })
    }

    /// Brackets the uniform spacing `√(1/n)` of the unit square by two
    /// orders of magnitude.
    pub fn for_target(n_target: usize) -> Self {
        let base = (1.0 / n_target.max(1) as f64).sqrt();
        Self {
            s_low: 0.2 * base,
            s_up: 20.0 * base,
            count_tol: Self::COUNT_TOL,
            width_tol: Self::WIDTH_TOL,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CalibratedNodes {
    pub nodes: NodeSet,
    pub ebar: NormalizedErrorMap,
    pub scale: f64,
    /// Number of node sets generated during the search.
    pub generations: usize,
    /// Whether the count ended within `count_tol` of the target.
    pub within_tolerance: bool,
}

/// Bisects the radius scale until the node count is within `count_tol` of
/// `n_target` or the interval is narrower than `width_tol`, and returns the
/// last generated set.
///
/// Every trial draws from a clone of `rng`, so the trials differ only in `s`.
#[allow(clippy::too_many_arguments)]
pub fn calibrated_arff(
    rect: Rect,
    e: &GridErrorMap,
    prior: &NormalizedErrorMap,
    beta: f64,
    ratio: f64,
    n_target: usize,
    bounds: BisectionBounds,
    rng: &RngStream,
) -> Result<CalibratedNodes, ErrorMapError> {
    if n_target < 10 {
        return Err(ErrorMapError::InvalidParam(format!("target count {n_target} is below 10")));
    }
    let ebar = standardize_combine(e, prior, beta, DEFAULT_EPS)?;
    let target = n_target as f64;
    let (mut lo, mut up) = (bounds.s_low, bounds.s_up);
    let mut last: Option<(NodeSet, f64)> = None;
    let mut generations = 0;
    loop {
        let s = 0.5 * (lo + up);
        let h = radius_field_from(&ebar, ratio, s)?;
        generations += 1;
        let count = match ff_generate(rect, &h, &mut rng.clone()) {
            Ok(nodes) => {
                let n = nodes.len();
                last = Some((nodes, s));
                n
            }
            // Too fine to finish counts as "too many".
            Err(SamplingError::NodeLimit(_)) => usize::MAX,
            Err(err) => return Err(err.into()),
        };
        let within = count != usize::MAX
            && (count as f64 - target).abs() / target <= bounds.count_tol;
        if within {
            break;
        }
        if (count as f64) < target {
            up = s;
        } else {
            lo = s;
        }
        if up - lo < bounds.width_tol {
            break;
        }
    }
    let (nodes, scale) = last.ok_or(SamplingError::NodeLimit(crate::sampling::MAX_FF_NODES))?;
    let within_tolerance = (nodes.len() as f64 - target).abs() / target <= bounds.count_tol;
    Ok(CalibratedNodes {
        nodes,
        ebar,
        scale,
        generations,
        within_tolerance,
    })
}

/// Signed distance to the L-shaped region `[0,1]² \ (0.5,1]²`, positive
/// inside.
pub fn sdf_lshape(p: Point2) -> f64 {
    const L: [Point2; 6] = [
        Point2::new(0.0, 0.0),
        Point2::new(1.0, 0.0),
        Point2::new(1.0, 0.5),
        Point2::new(0.5, 0.5),
        Point2::new(0.5, 1.0),
        Point2::new(0.0, 1.0),
    ];
    polygon_sdf(&L, p)
}

/// Signed distance to a simple polygon, positive inside.
pub fn polygon_sdf(poly: &[Point2], p: Point2) -> f64 {
    let n = poly.len();
    let mut dist2 = f64::INFINITY;
    let mut inside = false;
    for k in 0..n {
        let a = poly[k];
        let b = poly[(k + 1) % n];
        dist2 = dist2.min(segment_dist2(a, b, p));
        if (a.y > p.y) != (b.y > p.y) {
            let x_cross = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x_cross {
                inside = !inside;
            }
        }
    }
    let d = dist2.sqrt();
    if inside {
        d
    } else {
        -d
    }
}

fn segment_dist2(a: Point2, b: Point2, p: Point2) -> f64 {
    let (vx, vy) = (b.x - a.x, b.y - a.y);
    let len2 = vx * vx + vy * vy;
    let t = if len2 > 0.0 {
        (((p.x - a.x) * vx + (p.y - a.y) * vy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    p.dist2(Point2::new(a.x + t * vx, a.y + t * vy))
}

/// L-shape demo field `e = 1 − SDF`, which is largest on the boundary.
pub fn lshape_error_map(nx: usize, ny: usize) -> Result<GridErrorMap, ErrorMapError> {
    GridErrorMap::from_fn(Rect::unit(), nx, ny, |p| 1.0 - sdf_lshape(p))
}

pub fn inside_lshape(p: Point2) -> bool {
    sdf_lshape(p) >= 0.0
}
