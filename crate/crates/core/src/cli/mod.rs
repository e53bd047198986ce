//! The `rang` command line: single runs, replicated suites and the L-shape
//! node demo.

pub mod plots;
pub mod suite;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::errormap::{arff, lshape_error_map, inside_lshape, ArffParams, ErrorMapError, NormalizedErrorMap, DEFAULT_GRID};
use crate::pinn::{train, PinnError, TrainConfig};
use crate::problems::{PdeProblem, ProblemError, ProblemKind};
use crate::rng::RngStream;
use crate::sampling::{filter_inside, Rect, SamplerKind, SamplingError};

pub use plots::emit_plot_scripts;
pub use suite::{run_suite, MseStats, Overrides, SamplerStats, SuiteOutcome, SuiteSpec, SuiteStats};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("missing artifacts: {}", .0.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "))]
    MissingArtifacts(Vec<PathBuf>),
    #[error(transparent)]
    Pinn(#[from] PinnError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    ErrorMap(#[from] ErrorMapError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Parser)]
#[command(name = "rang", about = "Residual-adaptive collocation for PINNs", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one network and write its history and node snapshots.
    Run(RunArgs),
    /// Replicated runs over several samplers with summary statistics.
    Suite(SuiteArgs),
    /// Node sets for demo error fields.
    Nodes(NodesArgs),
    /// Write plot scripts for an existing suite directory.
    Plots {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct ProblemArgs {
    #[arg(long)]
    pub problem: String,
    /// Reference grid CSV for allen-cahn and schrodinger.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Allen-Cahn only: add the |u_x(0, x)|² initial term.
    #[arg(long)]
    pub initial_slope: bool,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long)]
    pub sampler: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub interval: Option<usize>,
    #[arg(long)]
    pub n_pde: Option<usize>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Desk,
    Paper,
}

#[derive(Debug, Args)]
pub struct SuiteArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// `all` or a comma-separated list of sampler names.
    #[arg(long, default_value = "all")]
    pub samplers: String,
    /// Defaults to the preset's replicate count.
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long, value_enum, default_value = "desk")]
    pub preset: Preset,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub interval: Option<usize>,
    #[arg(long)]
    pub n_pde: Option<usize>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Demo {
    Lshape,
}

#[derive(Debug, Args)]
pub struct NodesArgs {
    #[arg(long, value_enum, default_value = "lshape")]
    pub demo: Demo,
    /// Density ratios, comma separated.
    #[arg(long, default_value = "1,10,100", value_delimiter = ',')]
    pub r: Vec<f64>,
    /// Radius scales, comma separated.
    #[arg(long, default_value = "0.08,0.04,0.02", value_delimiter = ',')]
    pub s: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

pub fn parse_samplers(list: &str) -> Result<Vec<SamplerKind>, CliError> {
    if list.trim() == "all" {
        return Ok(SamplerKind::ALL.to_vec());
    }
    let mut out = Vec::new();
    for name in list.split(',') {
        let s: SamplerKind = name.parse()?;
        if !out.contains(&s) {
            out.push(s);
        }
    }
    Ok(out)
}

/// Builds the named problem, loading its reference grid when one is given
/// or required.
pub fn build_problem(args: &ProblemArgs) -> Result<PdeProblem, CliError> {
    let kind: ProblemKind = args.problem.parse()?;
    let mut p = PdeProblem::new(kind);
    p.initial_slope_term = args.initial_slope;
    match (&args.reference, kind.needs_reference_file()) {
        (Some(path), _) => Ok(p.load_reference(path)?),
        (None, true) => Err(ProblemError::MissingReference(default_reference(kind)).into()),
        (None, false) => Ok(p),
    }
}

/// Where the reference generator script writes a problem's grid.
pub fn default_reference(kind: ProblemKind) -> PathBuf {
    PathBuf::from(format!("data/{}_reference.csv", kind.name()))
}

/// Reduced budget for a single machine: fewer iterations and replicates,
/// same node counts and resampling interval.
pub fn desk_overrides(kind: ProblemKind) -> (Overrides, usize) {
    let (iters, reps) = match kind {
        ProblemKind::Poisson => (3000, 5),
        ProblemKind::Wave => (15_000, 3),
        ProblemKind::ConvDiff => (5000, 3),
        ProblemKind::AllenCahn | ProblemKind::Schrodinger | ProblemKind::Kdv => (10_000, 3),
    };
    (
        Overrides {
            max_iter: Some(iters),
            ..Default::default()
        },
        reps,
    )
}

fn run_command(args: &RunArgs) -> Result<(), CliError> {
    let problem = build_problem(&args.problem)?;
    let sampler: SamplerKind = args.sampler.parse()?;
    let mut config = TrainConfig::for_problem(&problem, args.seed);
    Overrides {
        max_iter: args.iters,
        interval: args.interval,
        n_pde: args.n_pde,
        beta: args.beta,
        ..Default::default()
    }
    .apply(&mut config);
    let result = train(&problem, &config, sampler)?;
    let written = result.save(&args.out)?;
    println!("{}: final MSE {:.6e}{}", result.stem(), result.final_mse(), if result.diverged() { " (diverged)" } else { "" });
    println!("wrote {} files to {}", written.len(), args.out.display());
    Ok(())
}

fn suite_command(args: &SuiteArgs) -> Result<(), CliError> {
    let problem = build_problem(&args.problem)?;
    let (mut overrides, desk_reps) = match args.preset {
        Preset::Desk => desk_overrides(problem.kind()),
        Preset::Paper => (Overrides::default(), problem.defaults().replicates),
    };
    overrides.max_iter = args.iters.or(overrides.max_iter);
    overrides.interval = args.interval;
    overrides.n_pde = args.n_pde;
    let spec = SuiteSpec {
        problem,
        samplers: parse_samplers(&args.samplers)?,
        replicates: args.replicates.unwrap_or(desk_reps),
        base_seed: args.seed,
        overrides,
        out: Some(args.out.clone()),
    };
    let outcome = run_suite(&spec)?;
    let mut table = Vec::new();
    outcome.stats.write_csv(&mut table)?;
    print!("{}", String::from_utf8_lossy(&table));
    emit_plot_scripts(&args.out)?;
    Ok(())
}

/// L-shape node sets for every (r, s) pair, written as
/// `lshape_r{r}_s{s}.csv`.
pub fn lshape_nodes(ratios: &[f64], scales: &[f64], seed: u64, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(out)?;
    let e = lshape_error_map(DEFAULT_GRID, DEFAULT_GRID)?;
    let zero = NormalizedErrorMap::zeros(Rect::unit(), DEFAULT_GRID, DEFAULT_GRID)?;
    let mut written = Vec::new();
    for &r in ratios {
        for &s in scales {
            let mut rng = RngStream::new(seed);
            let (nodes, _) = arff(Rect::unit(), &e, &zero, ArffParams::new(0.0, r, s), &mut rng)?;
            let inside = filter_inside(&nodes, inside_lshape);
            let path = out.join(format!("lshape_r{r}_s{s}.csv"));
            inside.save_csv(&path)?;
            println!("r={r} s={s}: {} nodes inside the L-shape", inside.len());
            written.push(path);
        }
    }
    Ok(written)
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Run(a) => run_command(a),
        Command::Suite(a) => suite_command(a),
        Command::Nodes(a) => match a.demo {
            Demo::Lshape => lshape_nodes(&a.r, &a.s, a.seed, &a.out).map(|_| ()),
        },
        Command::Plots { out } => {
            for p in emit_plot_scripts(out)? {
                println!("{}", p.display());
            }
            Ok(())
        }
    }
}
