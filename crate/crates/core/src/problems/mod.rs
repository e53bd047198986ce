//! The six benchmark problems.
//!
//! Every problem lives on a rectangle with the spatial coordinate on the
//! horizontal axis and time (or `y` for Poisson) on the vertical axis, which
//! is also the input order of the network. A problem supplies its PDE
//! residual as a function of the network derivatives at a point, its initial
//! and boundary constraints, and a reference solution for the test MSE.

mod reference;

use std::f64::consts::PI;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::autodiff::{AutodiffError, Tape, VarRef};
use crate::network::{Dir, JetSpec};
use crate::pinn::LossWeights;
use crate::sampling::{Point2, Rect};

pub use reference::{load_grid_reference, GridReference};
pub(crate) use reference::linspace;

/// Default test-grid resolution per axis for analytic references.
pub const TEST_GRID: usize = 256;
/// Default IC/BC nodes per segment.
pub const CONDITION_NODES: usize = 200;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("reference file {0} not found")]
    MissingReference(PathBuf),
    #[error("problem {0} has no reference solution loaded")]
    NoReference(&'static str),
    #[error("reference grid covers {found}, expected {expected}")]
    RectMismatch { expected: Rect, found: Rect },
    #[error("non-finite value in reference row {row}")]
    NonFiniteReference { row: usize },
    #[error("malformed reference file: {0}")]
    Parse(String),
    #[error("residual needs order {order} along {dir:?}, which the jet spec {spec:?} does not carry")]
    MissingDerivative { dir: Dir, order: usize, spec: JetSpec },
    #[error("unknown problem `{0}` (expected allen-cahn, wave, schrodinger, kdv, poisson or conv-diff)")]
    UnknownProblem(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ProblemKind {
    AllenCahn,
    Wave,
    Schrodinger,
    Kdv,
    Poisson,
    ConvDiff,
}

impl ProblemKind {
    pub const ALL: [ProblemKind; 6] = [
        ProblemKind::AllenCahn,
        ProblemKind::Wave,
        ProblemKind::Schrodinger,
        ProblemKind::Kdv,
        ProblemKind::Poisson,
        ProblemKind::ConvDiff,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::AllenCahn => "allen-cahn",
            ProblemKind::Wave => "wave",
            ProblemKind::Schrodinger => "schrodinger",
            ProblemKind::Kdv => "kdv",
            ProblemKind::Poisson => "poisson",
            ProblemKind::ConvDiff => "conv-diff",
        }
    }

    /// Whether the reference solution must be loaded from a file.
    pub fn needs_reference_file(self) -> bool {
        matches!(self, ProblemKind::AllenCahn | ProblemKind::Schrodinger)
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProblemKind {
    type Err = ProblemError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ProblemKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| ProblemError::UnknownProblem(s.to_string()))
    }
}

/// Which loss term a constraint group feeds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Term {
    Initial,
    Boundary,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Constraint {
    /// `∂^order u_comp / ∂dir^order (p_i) − target_i`.
    Fixed {
        dir: Dir,
        order: usize,
        comp: usize,
        target: Vec<f64>,
    },
    /// The derivative at point `i` minus the derivative at point
    /// `i + n/2`; used for periodic boundaries.
    Matched { dir: Dir, order: usize, comp: usize },
}

impl Constraint {
    fn dir_order(&self) -> (Dir, usize) {
        match self {
            Constraint::Fixed { dir, order, .. } | Constraint::Matched { dir, order, .. } => {
                (*dir, *order)
            }
        }
    }
}

/// Gradient with respect to one derivative value: `(dir, order, point, comp, grad)`.
pub type DerivGrad = (Dir, usize, usize, usize, f64);

/// Equispaced IC or BC nodes with the constraints imposed on them. The
/// group contributes `weight · Σ_i Σ_c residual²` to its loss term.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionGroup {
    pub term: Term,
    pub weight: f64,
    pub points: Vec<Point2>,
    pub constraints: Vec<Constraint>,
}

impl ConditionGroup {
    /// Smallest jet spec covering every constraint.
    pub fn spec(&self) -> JetSpec {
        self.constraints.iter().fold(JetSpec::VALUE, |s, c| {
            let (dir, order) = c.dir_order();
            match dir {
                Dir::X => s.union(JetSpec { x: order, t: 0 }),
                Dir::T => s.union(JetSpec { x: 0, t: order }),
            }
        })
    }

    /// Squared residual sum of the group, given derivative values by
    /// `(dir, order, point, comp)`, together with the gradient of that
    /// weighted sum with respect to every derivative value it touched.
    pub fn evaluate<F>(&self, deriv: F) -> (f64, Vec<DerivGrad>)
    where
        F: Fn(Dir, usize, usize, usize) -> f64,
    {
        let mut loss = 0.0;
        let mut grads = Vec::new();
        for c in &self.constraints {
            match c {
                Constraint::Fixed {
                    dir,
                    order,
                    comp,
                    target,
                } => {
                    for (i, &tv) in target.iter().enumerate() {
                        let r = deriv(*dir, *order, i, *comp) - tv;
                        loss += self.weight * r * r;
                        grads.push((*dir, *order, i, *comp, 2.0 * self.weight * r));
                    }
                }
                Constraint::Matched { dir, order, comp } => {
                    let half = self.points.len() / 2;
                    for i in 0..half {
                        let r = deriv(*dir, *order, i, *comp) - deriv(*dir, *order, i + half, *comp);
                        loss += self.weight * r * r;
                        let g = 2.0 * self.weight * r;
                        grads.push((*dir, *order, i, *comp, g));
                        grads.push((*dir, *order, i + half, *comp, -g));
                    }
                }
            }
        }
        (loss, grads)
    }
}

/// Derivatives of the network outputs at one point, as tape variables.
#[derive(Clone, Debug)]
pub struct LocalDerivs {
    spec: JetSpec,
    outputs: usize,
    vars: Vec<VarRef>,
}

impl LocalDerivs {
    /// `vars[ch·outputs + comp]` holds the derivative in channel `ch` of
    /// `spec` (value, x-orders, then t-orders).
    pub fn new(spec: JetSpec, outputs: usize, vars: Vec<VarRef>) -> Self {
        assert_eq!(vars.len(), spec.channels() * outputs);
        Self { spec, outputs, vars }
    }

    /// Registers one tape leaf per available derivative, taking values from
    /// `f(dir, order, comp)`.
    pub fn leaves<F>(tape: &mut Tape, spec: JetSpec, outputs: usize, f: F) -> Self
    where
        F: Fn(Dir, usize, usize) -> f64,
    {
        let mut vars = Vec::with_capacity(spec.channels() * outputs);
        for ch in 0..spec.channels() {
            let (dir, order) = channel_dir_order(spec, ch);
            for comp in 0..outputs {
                vars.push(tape.leaf(f(dir, order, comp)));
            }
        }
        Self { spec, outputs, vars }
    }

    pub fn vars(&self) -> &[VarRef] {
        &self.vars
    }

    pub fn get(&self, dir: Dir, order: usize, comp: usize) -> Result<VarRef, ProblemError> {
        let ch = self
            .spec
            .channel(dir, order)
            .ok_or(ProblemError::MissingDerivative {
                dir,
                order,
                spec: self.spec,
            })?;
        Ok(self.vars[ch * self.outputs + comp])
    }

    pub fn value(&self, comp: usize) -> VarRef {
        self.vars[comp]
    }
}

/// Direction and order stored in a channel of `spec`.
pub fn channel_dir_order(spec: JetSpec, ch: usize) -> (Dir, usize) {
    if ch == 0 {
        (Dir::X, 0)
    } else if ch <= spec.x {
        (Dir::X, ch)
    } else {
        (Dir::T, ch - spec.x)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProblemDefaults {
    pub n_pde: usize,
    pub max_iter: usize,
    pub interval: usize,
    pub replicates: usize,
    pub weights: LossWeights,
}

/// Points and reference values used for the test MSE.
#[derive(Clone, Debug)]
pub struct TestSet {
    pub points: Vec<Point2>,
    /// `points.len() × outputs`, row-major.
    pub values: Vec<f64>,
    pub outputs: usize,
}

const WAVE_L: f64 = 4.0;
const WAVE_C2: f64 = 3.0;
const KDV_C: f64 = 7.0;
const POISSON_SIGMA: f64 = 0.1;
const CD_C: f64 = 4.0;
const CD_MU: f64 = 0.05;
const CD_L: f64 = 4.0;
const AC_DIFFUSION: f64 = 1e-4;

#[derive(Clone, Debug)]
pub struct PdeProblem {
    kind: ProblemKind,
    rect: Rect,
    outputs: usize,
    reference: Option<GridReference>,
    /// Allen–Cahn only: add the `|u_x(0, x)|²` term to the initial loss.
    pub initial_slope_term: bool,
}

fn sech(x: f64) -> f64 {
    1.0 / x.cosh()
}

impl PdeProblem {
    pub fn new(kind: ProblemKind) -> Self {
        let rect = |a, b, c, d| Rect::new(a, b, c, d).expect("valid problem rectangle");
        let (r, outputs) = match kind {
            ProblemKind::AllenCahn => (rect(-1.0, 1.0, 0.0, 1.0), 1),
            ProblemKind::Wave => (rect(-WAVE_L, WAVE_L, 0.0, 6.0), 1),
            ProblemKind::Schrodinger => (rect(-5.0, 5.0, 0.0, PI / 2.0), 2),
            ProblemKind::Kdv => (rect(-4.0 * PI, 4.0 * PI, 0.0, 2.0), 1),
            ProblemKind::Poisson => (rect(-1.0, 1.0, -1.0, 1.0), 1),
            ProblemKind::ConvDiff => (rect(-CD_L, CD_L, 0.0, 1.0), 1),
        };
        Self {
            kind,
            rect: r,
            outputs,
            reference: None,
            initial_slope_term: false,
        }
    }

    pub fn allen_cahn() -> Self {
        Self::new(ProblemKind::AllenCahn)
    }

    pub fn wave1d() -> Self {
        Self::new(ProblemKind::Wave)
    }

    pub fn schrodinger1d() -> Self {
        Self::new(ProblemKind::Schrodinger)
    }

    pub fn kdv() -> Self {
        Self::new(ProblemKind::Kdv)
    }

    pub fn poisson2d() -> Self {
        Self::new(ProblemKind::Poisson)
    }

    pub fn convection_diffusion() -> Self {
        Self::new(ProblemKind::ConvDiff)
    }

    /// Attaches a numerical reference after checking it covers the domain.
    pub fn with_reference(mut self, grid: GridReference) -> Result<Self, ProblemError> {
        if !grid.rect.approx_eq(&self.rect, 1e-9) {
            return Err(ProblemError::RectMismatch {
                expected: self.rect,
                found: grid.rect,
            });
        }
        if grid.components != self.outputs {
            return Err(ProblemError::Parse(format!(
                "{} needs {} reference components, grid has {}",
                self.kind, self.outputs, grid.components
            )));
        }
        self.reference = Some(grid);
        Ok(self)
    }

    /// Loads the reference grid from `path`.
    pub fn load_reference(self, path: &std::path::Path) -> Result<Self, ProblemError> {
        let grid = load_grid_reference(path, self.rect, self.outputs)?;
        self.with_reference(grid)
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn rect(&self) -> Rect {
        self.rect
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn has_initial_condition(&self) -> bool {
        self.kind != ProblemKind::Poisson
    }

    /// Jet degrees the residual needs along x and t (or y).
    pub fn pde_spec(&self) -> JetSpec {
        match self.kind {
            ProblemKind::Kdv => JetSpec { x: 3, t: 1 },
            ProblemKind::Wave | ProblemKind::Poisson => JetSpec { x: 2, t: 2 },
            ProblemKind::AllenCahn | ProblemKind::Schrodinger | ProblemKind::ConvDiff => {
                JetSpec { x: 2, t: 1 }
            }
        }
    }

    pub fn defaults(&self) -> ProblemDefaults {
        let w = LossWeights::default();
        let (n_pde, max_iter, interval, replicates) = match self.kind {
            ProblemKind::AllenCahn => (1000, 50_000, 1000, 30),
            ProblemKind::Wave => (1000, 15_000, 1000, 50),
            ProblemKind::Schrodinger => (1000, 50_000, 1000, 30),
            ProblemKind::Kdv => (1000, 50_000, 1000, 50),
            ProblemKind::Poisson => (400, 3000, 100, 100),
            ProblemKind::ConvDiff => (1000, 10_000, 1000, 60),
        };
        ProblemDefaults {
            n_pde,
            max_iter,
            interval,
            replicates,
            weights: w,
        }
    }

    /// Right-hand side `w_σ` of the Poisson problem.
    pub fn poisson_forcing(p: Point2) -> f64 {
        let s2 = POISSON_SIGMA * POISSON_SIGMA;
        let bump = |cx: f64, cy: f64| {
            let r2 = (p.x - cx).powi(2) + (p.y - cy).powi(2);
            (r2 - 2.0 * s2) / (s2 * s2) * (-r2 / (2.0 * s2)).exp()
        };
        bump(0.3, 0.3) - bump(-0.3, -0.3)
    }

    /// Initial condition of Allen–Cahn, `x²cos(πx)`.
    pub fn allen_cahn_initial(x: f64) -> f64 {
        x * x * (PI * x).cos()
    }

    /// Closed-form solution where one exists.
    pub fn analytic(&self, p: Point2) -> Option<Vec<f64>> {
        let (x, t) = (p.x, p.y);
        match self.kind {
            ProblemKind::Wave => {
                let a = WAVE_C2.sqrt() * t;
                let l = WAVE_L;
                Some(vec![
                    0.5 * sech(2.0 * (x + a)) - 0.5 * sech(2.0 * (x - 2.0 * l + a))
                        + 0.5 * sech(2.0 * (x - a))
                        - 0.5 * sech(2.0 * (x + 2.0 * l - a)),
                ])
            }
            ProblemKind::Kdv => {
                let s = sech(KDV_C.sqrt() / 2.0 * (x - KDV_C * t + 7.0));
                Some(vec![KDV_C / 2.0 * s * s])
            }
            ProblemKind::Poisson => {
                let g = |dx: f64, dy: f64| {
                    (-(dx * dx + dy * dy) / (2.0 * POISSON_SIGMA * POISSON_SIGMA)).exp()
                };
                Some(vec![g(x - 0.3, t - 0.3) - g(x + 0.3, t + 0.3)])
            }
            ProblemKind::ConvDiff => {
                let tau = CD_MU * (t + 0.1);
                let xi = x + 2.0 - CD_C * t;
                Some(vec![0.1 / tau.sqrt() * (-xi * xi / (4.0 * tau)).exp()])
            }
            ProblemKind::AllenCahn | ProblemKind::Schrodinger => None,
        }
    }

    pub fn reference_grid(&self) -> Option<&GridReference> {
        self.reference.as_ref()
    }

    /// PDE residual at `p` as tape variables, one per equation (two for
    /// Schrödinger: real and imaginary parts).
    pub fn residual(
        &self,
        tape: &mut Tape,
        p: Point2,
        d: &LocalDerivs,
    ) -> Result<Vec<VarRef>, ProblemError> {
        use Dir::{T, X};
        Ok(match self.kind {
            ProblemKind::AllenCahn => {
                let u = d.value(0);
                let u3 = tape.cube(u)?;
                let r = tape.lin_comb(
                    &[
                        (d.get(T, 1, 0)?, 1.0),
                        (d.get(X, 2, 0)?, -AC_DIFFUSION),
                        (u3, 5.0),
                        (u, -5.0),
                    ],
                    0.0,
                )?;
                vec![r]
            }
            ProblemKind::Wave => {
                let r = tape.lin_comb(&[(d.get(T, 2, 0)?, 1.0), (d.get(X, 2, 0)?, -WAVE_C2)], 0.0)?;
                vec![r]
            }
            ProblemKind::Schrodinger => {
                let (v, w) = (d.value(0), d.value(1));
                let v2 = tape.square(v)?;
                let w2 = tape.square(w)?;
                let m = tape.add(v2, w2)?;
                let mv = tape.mul(m, v)?;
                let mw = tape.mul(m, w)?;
                // i(v_t + i w_t) + ½(v_xx + i w_xx) + |u|²(v + i w)
                let re = tape.lin_comb(&[(d.get(T, 1, 1)?, -1.0), (d.get(X, 2, 0)?, 0.5), (mv, 1.0)], 0.0)?;
                let im = tape.lin_comb(&[(d.get(T, 1, 0)?, 1.0), (d.get(X, 2, 1)?, 0.5), (mw, 1.0)], 0.0)?;
                vec![re, im]
            }
            ProblemKind::Kdv => {
                let uux = tape.mul(d.value(0), d.get(X, 1, 0)?)?;
                let r = tape.lin_comb(&[(d.get(T, 1, 0)?, 1.0), (uux, 6.0), (d.get(X, 3, 0)?, 1.0)], 0.0)?;
                vec![r]
            }
            ProblemKind::Poisson => {
                let r = tape.lin_comb(
                    &[(d.get(X, 2, 0)?, 1.0), (d.get(T, 2, 0)?, 1.0)],
                    -Self::poisson_forcing(p),
                )?;
                vec![r]
            }
            ProblemKind::ConvDiff => {
                let r = tape.lin_comb(
                    &[(d.get(T, 1, 0)?, 1.0), (d.get(X, 1, 0)?, CD_C), (d.get(X, 2, 0)?, -CD_MU)],
                    0.0,
                )?;
                vec![r]
            }
        })
    }

    /// Residual components at `p` for derivative values given by
    /// `f(dir, order, comp)`, evaluated on a scratch tape.
    pub fn residual_values<F>(&self, p: Point2, f: F) -> Result<Vec<f64>, ProblemError>
    where
        F: Fn(Dir, usize, usize) -> f64,
    {
        let mut tape = Tape::new();
        let d = LocalDerivs::leaves(&mut tape, self.pde_spec(), self.outputs, f);
        let r = self.residual(&mut tape, p, &d)?;
        r.into_iter()
            .map(|v| tape.value(v).map_err(ProblemError::from))
            .collect()
    }

    /// Initial and boundary constraints on `n` equispaced nodes per segment.
    pub fn conditions(&self, n: usize) -> Vec<ConditionGroup> {
        let r = self.rect;
        let nf = n as f64;
        let xs: Vec<f64> = linspace(r.xmin, r.xmax, n).collect();
        let ts: Vec<f64> = linspace(r.ymin, r.ymax, n).collect();
        let initial_points: Vec<Point2> = xs.iter().map(|&x| Point2::new(x, r.ymin)).collect();
        let side = |x: f64| -> Vec<Point2> { ts.iter().map(|&t| Point2::new(x, t)).collect() };
        let fixed = |dir, order, comp, target| Constraint::Fixed {
            dir,
            order,
            comp,
            target,
        };
        let zero = vec![0.0; n];
        let dirichlet_sides = |value: f64| -> Vec<ConditionGroup> {
            [r.xmin, r.xmax]
                .iter()
                .map(|&x| ConditionGroup {
                    term: Term::Boundary,
                    weight: 1.0 / nf,
                    points: side(x),
                    constraints: vec![fixed(Dir::X, 0, 0, vec![value; n])],
                })
                .collect()
        };
        let initial = |constraints| ConditionGroup {
            term: Term::Initial,
            weight: 1.0 / nf,
            points: initial_points.clone(),
            constraints,
        };
        let initial_from_analytic = || -> Vec<f64> {
            initial_points
                .iter()
                .map(|&p| self.analytic(p).expect("analytic reference")[0])
                .collect()
        };
        match self.kind {
            ProblemKind::AllenCahn => {
                let ic: Vec<f64> = xs.iter().map(|&x| Self::allen_cahn_initial(x)).collect();
                let mut cs = vec![fixed(Dir::X, 0, 0, ic)];
                if self.initial_slope_term {
                    cs.push(fixed(Dir::X, 1, 0, zero.clone()));
                }
                let mut g = vec![initial(cs)];
                g.extend(dirichlet_sides(-1.0));
                g
            }
            ProblemKind::Wave => {
                let mut g = vec![initial(vec![
                    fixed(Dir::X, 0, 0, initial_from_analytic()),
                    fixed(Dir::T, 1, 0, zero.clone()),
                ])];
                g.extend(dirichlet_sides(0.0));
                g
            }
            ProblemKind::Kdv | ProblemKind::ConvDiff => {
                let mut g = vec![initial(vec![fixed(Dir::X, 0, 0, initial_from_analytic())])];
                g.extend(dirichlet_sides(0.0));
                g
            }
            ProblemKind::Schrodinger => {
                let ic: Vec<f64> = xs.iter().map(|&x| 2.0 * sech(x)).collect();
                let mut periodic_points = side(r.xmin);
                periodic_points.extend(side(r.xmax));
                vec![
                    initial(vec![fixed(Dir::X, 0, 0, ic), fixed(Dir::X, 0, 1, zero.clone())]),
                    ConditionGroup {
                        term: Term::Boundary,
                        weight: 1.0 / nf,
                        points: periodic_points,
                        constraints: vec![
                            Constraint::Matched { dir: Dir::X, order: 0, comp: 0 },
                            Constraint::Matched { dir: Dir::X, order: 0, comp: 1 },
                            Constraint::Matched { dir: Dir::X, order: 1, comp: 0 },
                            Constraint::Matched { dir: Dir::X, order: 1, comp: 1 },
                        ],
                    },
                ]
            }
            ProblemKind::Poisson => {
                let edges: [Vec<Point2>; 4] = [
                    xs.iter().map(|&x| Point2::new(x, r.ymin)).collect(),
                    xs.iter().map(|&x| Point2::new(x, r.ymax)).collect(),
                    side(r.xmin),
                    side(r.xmax),
                ];
                edges
                    .into_iter()
                    .map(|points| ConditionGroup {
                        term: Term::Boundary,
                        weight: 1.0 / (4.0 * nf),
                        points,
                        constraints: vec![fixed(Dir::X, 0, 0, zero.clone())],
                    })
                    .collect()
            }
        }
    }

    /// Test points and reference values: a 256×256 grid for analytic
    /// problems, the native grid of a loaded reference otherwise.
    pub fn test_set(&self) -> Result<TestSet, ProblemError> {
        if let Some(grid) = &self.reference {
            return Ok(TestSet {
                points: grid.nodes(),
                values: grid.values.clone(),
                outputs: grid.components,
            });
        }
        if self.kind.needs_reference_file() {
            return Err(ProblemError::NoReference(self.name()));
        }
        let r = self.rect;
        let xs: Vec<f64> = linspace(r.xmin, r.xmax, TEST_GRID).collect();
        let mut points = Vec::with_capacity(TEST_GRID * TEST_GRID);
        let mut values = Vec::with_capacity(TEST_GRID * TEST_GRID);
        for t in linspace(r.ymin, r.ymax, TEST_GRID) {
            for &x in &xs {
                let p = Point2::new(x, t);
                values.extend(self.analytic(p).expect("analytic reference"));
                points.push(p);
            }
        }
        Ok(TestSet {
            points,
            values,
            outputs: self.outputs,
        })
    }
}
