//! Replicated runs over several samplers and their summary statistics.

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::CliError;
use crate::pinn::{train, TrainConfig, TrainResult};
use crate::problems::PdeProblem;
use crate::sampling::SamplerKind;

/// Fields of [`TrainConfig`] a suite or run may override.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub max_iter: Option<usize>,
    pub interval: Option<usize>,
    pub n_pde: Option<usize>,
    pub beta: Option<f64>,
    pub log_every: Option<usize>,
    pub arch: Option<Vec<usize>>,
}

impl Overrides {
    pub fn apply(&self, config: &mut TrainConfig) {
        if let Some(v) = self.max_iter {
            config.max_iter = v;
        }
        if let Some(v) = self.interval {
            config.resample_interval = v;
        }
        if let Some(v) = self.n_pde {
            config.n_pde = v;
        }
        if self.beta.is_some() {
            config.beta = self.beta;
        }
        if let Some(v) = self.log_every {
            config.log_every = v;
        }
        if let Some(a) = &self.arch {
            config.arch = Some(a.clone());
        }
    }
}

#[derive(Clone, Debug)]
pub struct SuiteSpec {
    pub problem: PdeProblem,
    pub samplers: Vec<SamplerKind>,
    pub replicates: usize,
    pub base_seed: u64,
    pub overrides: Overrides,
    pub out: Option<PathBuf>,
}

impl SuiteSpec {
    /// Config of replicate `i`, seeded `base_seed + i`.
    pub fn config(&self, i: usize) -> TrainConfig {
        let mut c = TrainConfig::for_problem(&self.problem, self.base_seed + i as u64);
        self.overrides.apply(&mut c);
        c
    }
}

/// Summary of final MSEs. Quartiles interpolate linearly between order
/// statistics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MseStats {
    pub mean: f64,
    pub min: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub max: f64,
}

/// Quantile `q` of sorted data, interpolating at position `(n − 1)·q`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = (sorted.len() - 1) as f64 * q;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl MseStats {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() || values.iter().any(|v| v.is_nan()) {
            return None;
        }
        let mut s = values.to_vec();
        s.sort_by(f64::total_cmp);
        Some(Self {
            mean: s.iter().sum::<f64>() / s.len() as f64,
            min: s[0],
            p25: quantile_sorted(&s, 0.25),
            p50: quantile_sorted(&s, 0.5),
            p75: quantile_sorted(&s, 0.75),
            max: s[s.len() - 1],
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplerStats {
    pub sampler: SamplerKind,
    pub mse: MseStats,
    pub replicates: usize,
    pub diverged: usize,
}

#[derive(Clone, Debug)]
pub struct SuiteStats {
    pub problem: String,
    pub rows: Vec<SamplerStats>,
}

impl SuiteStats {
    pub fn get(&self, sampler: SamplerKind) -> Option<&SamplerStats> {
        self.rows.iter().find(|r| r.sampler == sampler)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# final test MSE per sampler; quartiles by linear interpolation between order statistics; diverged runs enter with their last finite MSE")?;
        writeln!(out, "sampler,mean,min,p25,p50,p75,max,replicates,diverged")?;
        for r in &self.rows {
            let m = r.mse;
            writeln!(
                out,
                "{},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{},{}",
                r.sampler.name(),
                m.mean,
                m.min,
                m.p25,
                m.p50,
                m.p75,
                m.max,
                r.replicates,
                r.diverged
            )?;
        }
        Ok(())
    }
}

/// Median across runs of the MSE at every iteration logged by all of them.
pub fn median_curve(runs: &[&TrainResult]) -> Vec<(usize, f64)> {
    let Some(first) = runs.first() else {
        return Vec::new();
    };
    first
        .history
        .iter()
        .filter_map(|rec| {
            let mut vals: Vec<f64> = runs
                .iter()
                .filter_map(|r| r.history.iter().find(|h| h.iter == rec.iter).map(|h| h.mse))
                .collect();
            if vals.len() != runs.len() {
                return None;
            }
            vals.sort_by(f64::total_cmp);
            Some((rec.iter, quantile_sorted(&vals, 0.5)))
        })
        .collect()
}

pub struct SuiteOutcome {
    pub stats: SuiteStats,
    pub runs: Vec<TrainResult>,
}

/// Trains every (sampler, replicate) pair on the rayon pool and aggregates
/// the final MSEs. Results are ordered by sampler then replicate, and all
/// files are written after the pool finishes.
pub fn run_suite(spec: &SuiteSpec) -> Result<SuiteOutcome, CliError> {
    if spec.replicates == 0 {
        return Err(CliError::Invalid("replicate count must be at least 1".into()));
    }
    if spec.samplers.is_empty() {
        return Err(CliError::Invalid("no samplers selected".into()));
    }
    let jobs: Vec<(SamplerKind, usize)> = spec
        .samplers
        .iter()
        .flat_map(|&s| (0..spec.replicates).map(move |i| (s, i)))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|&(s, i)| train(&spec.problem, &spec.config(i), s))
        .collect::<Result<Vec<_>, _>>()?;
    let rows = spec
        .samplers
        .iter()
        .map(|&s| {
            let mine: Vec<&TrainResult> = runs.iter().filter(|r| r.sampler == s).collect();
            let finals: Vec<f64> = mine.iter().map(|r| r.final_mse()).collect();
            let mse = MseStats::from_values(&finals).ok_or_else(|| {
                CliError::Invalid(format!("{s}: a replicate has no finite MSE"))
            })?;
            Ok(SamplerStats {
                sampler: s,
                mse,
                replicates: mine.len(),
                diverged: mine.iter().filter(|r| r.diverged()).count(),
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let stats = SuiteStats {
        problem: spec.problem.name().to_string(),
        rows,
    };
    let outcome = SuiteOutcome { stats, runs };
    if let Some(dir) = &spec.out {
        write_suite(dir, &outcome)?;
    }
    Ok(outcome)
}

pub const MANIFEST: &str = "manifest.csv";

pub fn stats_file(problem: &str) -> String {
    format!("{problem}_stats.csv")
}

pub fn curve_file(problem: &str, sampler: SamplerKind) -> String {
    format!("{problem}_{}_median_mse.csv", sampler.name())
}

/// Per-run CSVs and node snapshots under `runs/`, then the stats table, one
/// median-curve CSV per sampler and a manifest indexing everything.
pub fn write_suite(dir: &Path, outcome: &SuiteOutcome) -> Result<(), CliError> {
    let runs_dir = dir.join("runs");
    std::fs::create_dir_all(&runs_dir)?;
    let problem = &outcome.stats.problem;
    let mut manifest = String::from("problem,sampler,seed,run_csv,snapshots,final_mse,diverged\n");
    for r in &outcome.runs {
        r.save(&runs_dir)?;
        manifest.push_str(&format!(
            "{},{},{},runs/{}.csv,{},{:.6e},{}\n",
            problem,
            r.sampler.name(),
            r.seed,
            r.stem(),
            r.snapshots.len(),
            r.final_mse(),
            r.diverged()
        ));
    }
    let mut f = std::fs::File::create(dir.join(stats_file(problem)))?;
    outcome.stats.write_csv(&mut f)?;
    for row in &outcome.stats.rows {
        let mine: Vec<&TrainResult> = outcome.runs.iter().filter(|r| r.sampler == row.sampler).collect();
        let mut text = String::from("iter,median_mse\n");
        for (it, m) in median_curve(&mine) {
            text.push_str(&format!("{it},{m:.6e}\n"));
        }
        std::fs::write(dir.join(curve_file(problem, row.sampler)), text)?;
    }
    std::fs::write(dir.join(MANIFEST), manifest)?;
    Ok(())
}

/// Reads the `sampler` and `final_mse` columns back from a stats-less
/// manifest, for recomputing statistics independently of the engine.
pub fn read_manifest_finals(text: &str) -> Result<Vec<(SamplerKind, f64)>, CliError> {
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(CliError::Invalid(format!("manifest line {} has {} fields", k + 1, f.len())));
        }
        let sampler = f[1].parse().map_err(|e: crate::sampling::SamplingError| CliError::Invalid(e.to_string()))?;
        let mse = f[5]
            .parse()
            .map_err(|_| CliError::Invalid(format!("bad MSE `{}` on manifest line {}", f[5], k + 1)))?;
        out.push((sampler, mse));
    }
    Ok(out)
}
