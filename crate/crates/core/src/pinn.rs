//! PINN losses and the residual-adaptive training loop.
//!
//! Network derivatives at the collocation and condition nodes come from the
//! batched jet pass. The PDE residual of each node is composed on a small
//! scalar tape whose leaves are those derivatives, so the tape only sees the
//! problem's algebra; its leaf gradients are pushed back through the batch.

use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use thiserror::Error;

use crate::autodiff::{AutodiffError, Tape};
use crate::errormap::{
    calibrated_arff, BisectionBounds, ErrorMapError, GridErrorMap, NormalizedErrorMap,
    DEFAULT_GRID,
};
use crate::network::{
    default_arch, init_params, AdamState, BatchJets, Dir, MlpParams, NetworkError,
};
use crate::problems::{
    channel_dir_order, ConditionGroup, LocalDerivs, PdeProblem, ProblemError, ProblemKind, Term,
    TestSet, CONDITION_NODES,
};
use crate::rng::RngStream;
use crate::sampling::{
    sample_hammersley, sample_lhs, sample_random, NodeSet, Point2, SamplerKind, SamplingError,
};

/// Points per batched forward pass when evaluating large grids.
const GRID_CHUNK: usize = 4096;
/// RNG stream reserved for network initialisation; node streams use the
/// resample index.
const INIT_STREAM: u64 = u64::MAX;

#[derive(Debug, Error)]
pub enum PinnError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("collocation node set is empty")]
    EmptyNodes,
    #[error("non-finite loss component {0}")]
    NonFinite(&'static str),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    ErrorMap(#[from] ErrorMapError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, PinnError>;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub pde: f64,
    pub initial: f64,
    pub boundary: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            pde: 0.2,
            initial: 2.0,
            boundary: 2.0,
        }
    }
}

impl LossWeights {
    pub fn new(pde: f64, initial: f64, boundary: f64) -> Result<Self> {
        let w = Self {
            pde,
            initial,
            boundary,
        };
        w.validate()?;
        Ok(w)
    }

    fn validate(&self) -> Result<()> {
        if [self.pde, self.initial, self.boundary]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite())
        {
            Ok(())
        } else {
            Err(PinnError::InvalidConfig(format!(
                "loss weights must be positive, got {self:?}"
            )))
        }
    }
}

/// `w_pde·L_pde + w_0·L_0 + w_b·L_b`.
pub fn total_loss(w: &LossWeights, l_pde: f64, l0: f64, lb: f64) -> Result<f64> {
    for (name, v) in [("L_pde", l_pde), ("L_0", l0), ("L_b", lb)] {
        if !v.is_finite() {
            return Err(PinnError::NonFinite(name));
        }
    }
    Ok(w.pde * l_pde + w.initial * l0 + w.boundary * lb)
}

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub max_iter: usize,
    /// Iterations between resamples; only resampling strategies use it.
    pub resample_interval: usize,
    pub n_pde: usize,
    /// Overrides the sampler's memory coefficient when set.
    pub beta: Option<f64>,
    pub ratio: f64,
    /// Bisection interval for the radius scale; `None` brackets the target.
    pub bounds: Option<BisectionBounds>,
    pub seed: u64,
    /// Error-grid nodes per axis.
    pub error_grid: usize,
    /// IC/BC nodes per segment.
    pub condition_nodes: usize,
    /// Iterations between loss/MSE records.
    pub log_every: usize,
    pub lr: f64,
    pub weights: LossWeights,
    /// Layer widths; `None` uses four hidden layers of 64.
    pub arch: Option<Vec<usize>>,
    /// Keep the normalized error map of every resample in the result.
    pub keep_error_maps: bool,
}

impl TrainConfig {
    /// The problem's default budget with the given seed.
    pub fn for_problem(problem: &PdeProblem, seed: u64) -> Self {
        let d = problem.defaults();
        Self {
            max_iter: d.max_iter,
            resample_interval: d.interval,
            n_pde: d.n_pde,
            beta: None,
            ratio: 100.0,
            bounds: None,
            seed,
            error_grid: DEFAULT_GRID,
            condition_nodes: CONDITION_NODES,
            log_every: 100,
            lr: 1e-3,
            weights: d.weights,
            arch: None,
            keep_error_maps: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(PinnError::InvalidConfig(m));
        if self.n_pde < 10 {
            return bad(format!("n_pde {} is below 10", self.n_pde));
        }
        if self.max_iter == 0 || self.resample_interval == 0 || self.log_every == 0 {
            return bad("iteration counts must be positive".into());
        }
        if !self.resample_interval.is_multiple_of(self.log_every) && !self.log_every.is_multiple_of(self.resample_interval) {
            return bad(format!(
                "resample interval {} and logging cadence {} must divide one another",
                self.resample_interval, self.log_every
            ));
        }
        if self.error_grid < 2 || self.condition_nodes < 2 {
            return bad("error grid and condition node counts must be at least 2".into());
        }
        if !(self.ratio >= 1.0) {
            return bad(format!("density ratio {} must be at least 1", self.ratio));
        }
        if let Some(b) = self.beta {
            if !(0.0..=1.0).contains(&b) {
                return bad(format!("beta {b} not in [0, 1]"));
            }
        }
        if !(self.lr > 0.0) {
            return bad(format!("learning rate {} must be positive", self.lr));
        }
        self.weights.validate()
    }
}

/// One logged row: losses at the parameters of iteration `iter`, before its
/// update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRecord {
    pub iter: usize,
    pub loss: f64,
    pub l0: f64,
    pub lb: f64,
    pub lpde: f64,
    pub mse: f64,
    /// Radius scale of the current node set, for radius-searched samplers.
    pub scale: Option<f64>,
}

/// Collocation set in use from iteration `iter` on.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub iter: usize,
    pub nodes: NodeSet,
    pub scale: Option<f64>,
    pub generations: usize,
    pub within_tolerance: bool,
    pub ebar: Option<NormalizedErrorMap>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Divergence {
    pub iter: usize,
    pub reason: String,
}

#[derive(Clone, Debug)]
pub struct TrainResult {
    pub problem: ProblemKind,
    pub sampler: SamplerKind,
    pub seed: u64,
    pub params: MlpParams,
    pub history: Vec<LogRecord>,
    pub snapshots: Vec<Snapshot>,
    pub divergence: Option<Divergence>,
}

impl TrainResult {
    /// MSE of the last finite record.
    pub fn final_mse(&self) -> f64 {
        self.history
            .iter()
            .rev()
            .map(|r| r.mse)
            .find(|m| m.is_finite())
            .unwrap_or(f64::NAN)
    }

    pub fn diverged(&self) -> bool {
        self.divergence.is_some()
    }

    /// `{problem}_{sampler}_{seed}`.
    pub fn stem(&self) -> String {
        run_stem(self.problem, self.sampler, self.seed)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "iter,loss,L0,Lb,Lpde,mse,s")?;
        for r in &self.history {
            let s = r.scale.map(|s| format!("{s:.17e}")).unwrap_or_default();
            writeln!(
                out,
                "{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{}",
                r.iter, r.loss, r.l0, r.lb, r.lpde, r.mse, s
            )?;
        }
        Ok(())
    }

    /// Writes the history CSV and one node CSV per snapshot into `dir`,
    /// returning the written paths.
    pub fn save(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let stem = self.stem();
        let mut written = Vec::with_capacity(1 + self.snapshots.len());
        let path = dir.join(format!("{stem}.csv"));
        let mut f = std::io::BufWriter::new(std::fs::File::create(&path)?);
        self.write_csv(&mut f)?;
        f.flush()?;
        written.push(path);
        for snap in &self.snapshots {
            let path = dir.join(format!("{stem}_nodes_{:06}.csv", snap.iter));
            snap.nodes.save_csv(&path)?;
            written.push(path);
        }
        Ok(written)
    }
}

pub fn run_stem(problem: ProblemKind, sampler: SamplerKind, seed: u64) -> String {
    format!("{}_{}_{}", problem.name(), sampler.name(), seed)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PdeLoss {
    /// Mean squared residual over the nodes.
    pub loss: f64,
    /// Euclidean norm of the residual at every node.
    pub residual_norms: Vec<f64>,
}

/// Sum of squared residuals of the batch, with an optional gradient with
/// respect to the jet coefficients scaled by `scale`.
fn pde_pass(
    problem: &PdeProblem,
    points: &[Point2],
    jets: &BatchJets,
    mut grad: Option<(&mut Array2<f64>, f64)>,
) -> Result<(f64, Vec<f64>)> {
    let spec = jets.spec();
    let outputs = problem.outputs();
    let out = jets.output();
    let mut total = 0.0;
    let mut norms = Vec::with_capacity(points.len());
    for (node, &p) in points.iter().enumerate() {
        let mut tape = Tape::new();
        let d = LocalDerivs::leaves(&mut tape, spec, outputs, |dir, order, comp| {
            let (row, f) = jets
                .slot(dir, order, node)
                .expect("leaves only visit channels of the spec");
            f * out[[row, comp]]
        });
        let r = problem.residual(&mut tape, p, &d)?;
        let pairs: Vec<_> = r.iter().map(|&v| (v, v)).collect();
        let sq = tape.dot(&pairs, None)?;
        let v = tape.value(sq)?;
        total += v;
        norms.push(v.sqrt());
        if let Some((g, scale)) = grad.as_mut() {
            let leaf_grads = tape.backward(sq)?;
            for (k, lg) in leaf_grads.into_iter().enumerate() {
                if lg != 0.0 {
                    let (dir, order) = channel_dir_order(spec, k / outputs);
                    jets.add_grad(g, dir, order, node, k % outputs, *scale * lg)?;
                }
            }
        }
    }
    Ok((total, norms))
}

/// Mean squared PDE residual of the network over `nodes`.
pub fn pde_loss(problem: &PdeProblem, params: &MlpParams, nodes: &NodeSet) -> Result<PdeLoss> {
    if nodes.is_empty() {
        return Err(PinnError::EmptyNodes);
    }
    let jets = params.forward_batch(&nodes.points, problem.pde_spec())?;
    let (sum, residual_norms) = pde_pass(problem, &nodes.points, &jets, None)?;
    Ok(PdeLoss {
        loss: sum / nodes.len() as f64,
        residual_norms,
    })
}

/// [`pde_loss`] with the network replaced by given derivatives:
/// `f(point, dir, order, comp)`.
pub fn pde_loss_from_fn<F>(problem: &PdeProblem, points: &[Point2], f: F) -> Result<PdeLoss>
where
    F: Fn(Point2, Dir, usize, usize) -> f64,
{
    if points.is_empty() {
        return Err(PinnError::EmptyNodes);
    }
    let mut sum = 0.0;
    let mut residual_norms = Vec::with_capacity(points.len());
    for &p in points {
        let r = problem.residual_values(p, |dir, order, comp| f(p, dir, order, comp))?;
        let sq: f64 = r.iter().map(|v| v * v).sum();
        sum += sq;
        residual_norms.push(sq.sqrt());
    }
    Ok(PdeLoss {
        loss: sum / points.len() as f64,
        residual_norms,
    })
}

fn condition_pass(
    params: &MlpParams,
    group: &ConditionGroup,
    grad: Option<(&mut [f64], f64)>,
) -> Result<f64> {
    let jets = params.forward_batch(&group.points, group.spec())?;
    let out = jets.output();
    let deriv = |dir, order, i, comp| {
        let (row, f) = jets
            .slot(dir, order, i)
            .expect("group spec covers its constraints");
        f * out[[row, comp]]
    };
    let (loss, local) = group.evaluate(deriv);
    if let Some((grads, scale)) = grad {
        let mut g = jets.zero_grad();
        for (dir, order, i, comp, v) in local {
            jets.add_grad(&mut g, dir, order, i, comp, scale * v)?;
        }
        params.backward_batch_into(&jets, &g, grads)?;
    }
    Ok(loss)
}

/// `(L_0, L_b)` of the network on the given condition groups. `L_0` is 0
/// for problems without an initial condition.
pub fn ic_bc_losses(params: &MlpParams, groups: &[ConditionGroup]) -> Result<(f64, f64)> {
    let (mut l0, mut lb) = (0.0, 0.0);
    for g in groups {
        let v = condition_pass(params, g, None)?;
        match g.term {
            Term::Initial => l0 += v,
            Term::Boundary => lb += v,
        }
    }
    Ok((l0, lb))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub pde: f64,
    pub initial: f64,
    pub boundary: f64,
}

/// Total loss and its gradient with respect to the flat parameters.
pub fn loss_and_grad(
    problem: &PdeProblem,
    params: &MlpParams,
    nodes: &[Point2],
    groups: &[ConditionGroup],
    weights: &LossWeights,
) -> Result<(LossBreakdown, Vec<f64>)> {
    if nodes.is_empty() {
        return Err(PinnError::EmptyNodes);
    }
    let mut grads = vec![0.0; params.len()];
    let jets = params.forward_batch(nodes, problem.pde_spec())?;
    let mut g = jets.zero_grad();
    let n = nodes.len() as f64;
    let (sum, _) = pde_pass(problem, nodes, &jets, Some((&mut g, weights.pde / n)))?;
    params.backward_batch_into(&jets, &g, &mut grads)?;
    let (mut l0, mut lb) = (0.0, 0.0);
    for group in groups {
        let (slot, w) = match group.term {
            Term::Initial => (&mut l0, weights.initial),
            Term::Boundary => (&mut lb, weights.boundary),
        };
        *slot += condition_pass(params, group, Some((&mut grads, w)))?;
    }
    let pde = sum / n;
    let total = total_loss(weights, pde, l0, lb)?;
    Ok((
        LossBreakdown {
            total,
            pde,
            initial: l0,
            boundary: lb,
        },
        grads,
    ))
}

/// Residual norm of the network at the cell centres of an `n × n` grid
/// over the problem rectangle.
pub fn residual_grid(problem: &PdeProblem, params: &MlpParams, n: usize) -> Result<GridErrorMap> {
    let shell = GridErrorMap::constant(problem.rect(), n, n, 0.0)?;
    let points: Vec<Point2> = shell.nodes().collect();
    let mut values = Vec::with_capacity(points.len());
    for chunk in points.chunks(GRID_CHUNK) {
        let jets = params.forward_batch(chunk, problem.pde_spec())?;
        let (_, norms) = pde_pass(problem, chunk, &jets, None)?;
        values.extend(norms);
    }
    Ok(GridErrorMap::new(problem.rect(), n, n, values)?)
}

/// Mean over the test points of the squared Euclidean error.
pub fn mse_on_test_set(params: &MlpParams, test: &TestSet) -> Result<f64> {
    let mut sum = 0.0;
    for (c, chunk) in test.points.chunks(GRID_CHUNK).enumerate() {
        let pred = params.predict(chunk)?;
        let base = c * GRID_CHUNK * test.outputs;
        for (i, row) in pred.outer_iter().enumerate() {
            for (k, u) in row.iter().enumerate() {
                let e = u - test.values[base + i * test.outputs + k];
                sum += e * e;
            }
        }
    }
    Ok(sum / test.points.len() as f64)
}

/// Test MSE against the problem's reference solution.
pub fn mse_on_grid(params: &MlpParams, problem: &PdeProblem) -> Result<f64> {
    mse_on_test_set(params, &problem.test_set()?)
}

/// Node counts in `n_bins` equal-width bins along the time axis of the
/// node set's rectangle. Nodes on the upper edge fall in the last bin.
pub fn time_histogram(ns: &NodeSet, n_bins: usize) -> Result<Vec<usize>> {
    if n_bins == 0 {
        return Err(PinnError::InvalidConfig("histogram needs at least one bin".into()));
    }
    let mut counts = vec![0; n_bins];
    let (lo, height) = (ns.rect.ymin, ns.rect.height());
    for p in ns.iter() {
        let b = (((p.y - lo) / height) * n_bins as f64).floor();
        counts[(b.max(0.0) as usize).min(n_bins - 1)] += 1;
    }
    Ok(counts)
}

struct Generated {
    nodes: NodeSet,
    scale: Option<f64>,
    generations: usize,
    within_tolerance: bool,
    ebar: Option<NormalizedErrorMap>,
}

fn generate_nodes(
    problem: &PdeProblem,
    sampler: SamplerKind,
    config: &TrainConfig,
    index: u64,
    e: &GridErrorMap,
    prior: &NormalizedErrorMap,
) -> Result<Generated> {
    let rect = problem.rect();
    let n = config.n_pde;
    let mut rng = RngStream::derive(config.seed, index);
    let exact = |nodes: NodeSet| Generated {
        nodes: nodes.with_sampler(sampler),
        scale: None,
        generations: 1,
        within_tolerance: true,
        ebar: None,
    };
    Ok(match sampler {
        SamplerKind::Random | SamplerKind::RandomR => exact(sample_random(rect, n, &mut rng)?),
        SamplerKind::Lhs | SamplerKind::LhsR => exact(sample_lhs(rect, n, &mut rng)?),
        SamplerKind::Hammersley => exact(sample_hammersley(rect, n, 2)?),
        SamplerKind::Ff | SamplerKind::FfR | SamplerKind::Rang | SamplerKind::RangM => {
            let beta = config.beta.or(sampler.memory()).unwrap_or(0.0);
            let bounds = config.bounds.unwrap_or_else(|| BisectionBounds::for_target(n));
            let c = calibrated_arff(rect, e, prior, beta, config.ratio, n, bounds, &rng)?;
            Generated {
                nodes: c.nodes.with_sampler(sampler),
                scale: Some(c.scale),
                generations: c.generations,
                within_tolerance: c.within_tolerance,
                ebar: Some(c.ebar),
            }
        }
    })
}

/// Trains a fresh network on `problem`, regenerating the collocation set
/// every `resample_interval` iterations for resampling strategies.
///
/// Iteration 0 uses a zero error map, so FF and RANG start from the same
/// constant-radius set. A non-finite loss or gradient stops the run and is
/// recorded in [`TrainResult::divergence`].
pub fn train(problem: &PdeProblem, config: &TrainConfig, sampler: SamplerKind) -> Result<TrainResult> {
    config.validate()?;
    let arch = config
        .arch
        .clone()
        .unwrap_or_else(|| default_arch(problem.outputs()));
    let mut params = init_params(&arch, &mut RngStream::derive(config.seed, INIT_STREAM))?;
    let mut adam = AdamState::with_lr(params.len(), config.lr);
    let groups = problem.conditions(config.condition_nodes);
    let test = problem.test_set()?;
    let g = config.error_grid;
    let zero_e = GridErrorMap::constant(problem.rect(), g, g, 0.0)?;
    let mut prior = NormalizedErrorMap::zeros(problem.rect(), g, g)?;

    let mut history = Vec::new();
    let mut snapshots: Vec<Snapshot> = Vec::new();
    let mut divergence = None;
    let mut current: Option<Generated> = None;

    for i in 0..=config.max_iter {
        let last = i == config.max_iter;
        if !last && i % config.resample_interval == 0 {
            let fresh = i == 0 || sampler.resamples();
            if fresh {
                let index = (i / config.resample_interval) as u64;
                let e = if i == 0 || !matches!(sampler, SamplerKind::Rang | SamplerKind::RangM) {
                    zero_e.clone()
                } else {
                    residual_grid(problem, &params, g)?
                };
                let gen = generate_nodes(problem, sampler, config, index, &e, &prior)?;
                if let Some(eb) = &gen.ebar {
                    if sampler.memory().is_some() {
                        prior = eb.clone();
                    }
                }
                current = Some(gen);
            }
            let cur = current.as_ref().expect("nodes generated at iteration 0");
            snapshots.push(Snapshot {
                iter: i,
                nodes: cur.nodes.clone(),
                scale: cur.scale,
                generations: if fresh { cur.generations } else { 0 },
                within_tolerance: cur.within_tolerance,
                ebar: if config.keep_error_maps { cur.ebar.clone() } else { None },
            });
        }
        let cur = current.as_ref().expect("nodes generated at iteration 0");
        let step = loss_and_grad(problem, &params, &cur.nodes.points, &groups, &config.weights);
        let (parts, grads) = match step {
            Ok(v) => v,
            Err(PinnError::NonFinite(what)) => {
                divergence = Some(Divergence {
                    iter: i,
                    reason: format!("non-finite {what}"),
                });
                break;
            }
            Err(err) => return Err(err),
        };
        if last || i % config.log_every == 0 {
            history.push(LogRecord {
                iter: i,
                loss: parts.total,
                l0: parts.initial,
                lb: parts.boundary,
                lpde: parts.pde,
                mse: mse_on_test_set(&params, &test)?,
                scale: cur.scale,
            });
        }
        if last {
            break;
        }
        match adam.step(params.as_mut_slice(), &grads) {
            Ok(()) => {}
            Err(NetworkError::NonFiniteGradient { index }) => {
                divergence = Some(Divergence {
                    iter: i,
                    reason: format!("non-finite gradient at parameter {index}"),
                });
                break;
            }
            Err(err) => return Err(err.into()),
        }
    }

    Ok(TrainResult {
        problem: problem.kind(),
        sampler,
        seed: config.seed,
        params,
        history,
        snapshots,
        divergence,
    })
}
