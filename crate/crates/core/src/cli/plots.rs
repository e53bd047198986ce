//! Plot scripts for suite artifacts.
//!
//! The engine never plots. It writes small matplotlib scripts that read the
//! suite CSVs by relative path, so they can be run from the output
//! directory or adapted to another renderer.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use super::suite::{curve_file, MANIFEST};
use super::CliError;
use crate::sampling::SamplerKind;

struct ManifestRow {
    problem: String,
    sampler: SamplerKind,
    seed: u64,
    run_csv: String,
}

fn read_manifest(dir: &Path) -> Result<Vec<ManifestRow>, CliError> {
    let path = dir.join(MANIFEST);
    let text = std::fs::read_to_string(&path).map_err(|_| CliError::MissingArtifacts(vec![path.clone()]))?;
    let mut rows = Vec::new();
    for (k, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let bad = || CliError::Invalid(format!("{} line {} is malformed", path.display(), k + 1));
        if f.len() != 7 {
            return Err(bad());
        }
        rows.push(ManifestRow {
            problem: f[0].to_string(),
            sampler: f[1].parse().map_err(|_| bad())?,
            seed: f[2].parse().map_err(|_| bad())?,
            run_csv: f[3].to_string(),
        });
    }
    if rows.is_empty() {
        return Err(CliError::Invalid(format!("{} lists no runs", path.display())));
    }
    Ok(rows)
}

/// Snapshot files of a run, ordered by iteration.
fn snapshot_files(dir: &Path, stem: &str) -> Result<Vec<String>, CliError> {
    let prefix = format!("{stem}_nodes_");
    let mut names: Vec<String> = std::fs::read_dir(dir.join("runs"))?
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|n| n.starts_with(&prefix) && n.ends_with(".csv"))
        .collect();
    names.sort();
    Ok(names.into_iter().map(|n| format!("runs/{n}")).collect())
}

fn py_list(items: &[String]) -> String {
    let quoted: Vec<String> = items.iter().map(|s| format!("    {s:?},")).collect();
    format!("[\n{}\n]", quoted.join("\n"))
}

/// Writes the plot scripts into `dir` and returns their paths. Fails with
/// the list of missing files when the suite artifacts are incomplete.
pub fn emit_plot_scripts(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let rows = read_manifest(dir)?;
    let problem = rows[0].problem.clone();
    let mut samplers: Vec<SamplerKind> = Vec::new();
    for r in &rows {
        if !samplers.contains(&r.sampler) {
            samplers.push(r.sampler);
        }
    }
    let curves: Vec<String> = samplers.iter().map(|&s| curve_file(&problem, s)).collect();
    let mut missing: BTreeSet<PathBuf> = BTreeSet::new();
    for f in curves.iter().chain(rows.iter().map(|r| &r.run_csv)) {
        if !dir.join(f).is_file() {
            missing.insert(dir.join(f));
        }
    }
    if !missing.is_empty() {
        return Err(CliError::MissingArtifacts(missing.into_iter().collect()));
    }

    let mut written = Vec::new();
    let mut write = |name: String, body: String| -> Result<(), CliError> {
        let path = dir.join(name);
        std::fs::write(&path, body)?;
        written.push(path);
        Ok(())
    };

    let series: Vec<String> = samplers
        .iter()
        .zip(&curves)
        .map(|(s, f)| format!("({:?}, {:?})", s.label(), f))
        .collect();
    write(
        "plot_mse_curves.py".into(),
        format!(
            "import csv\nimport matplotlib.pyplot as plt\n\nSERIES = {}\n\nfor label, path in SERIES:\n    with open(path) as f:\n        rows = list(csv.DictReader(f))\n    plt.semilogy([int(r['iter']) for r in rows], [float(r['median_mse']) for r in rows], label=label)\nplt.xlabel('iteration')\nplt.ylabel('median test MSE')\nplt.title({:?})\nplt.legend()\nplt.savefig('{}_mse_curves.png', dpi=150)\n",
            py_list(&series),
            problem,
            problem
        ),
    )?;

    let labels: Vec<String> = samplers.iter().map(|s| format!("({:?}, {:?})", s.name(), s.label())).collect();
    write(
        "plot_mse_box.py".into(),
        format!(
            "import csv\nimport matplotlib.pyplot as plt\n\nSAMPLERS = {}\n\nwith open('manifest.csv') as f:\n    rows = list(csv.DictReader(f))\ndata = [[float(r['final_mse']) for r in rows if r['sampler'] == name] for name, _ in SAMPLERS]\nplt.boxplot(data, labels=[label for _, label in SAMPLERS])\nplt.yscale('log')\nplt.ylabel('final test MSE')\nplt.title({:?})\nplt.savefig('{}_mse_box.png', dpi=150)\n",
            py_list(&labels),
            problem,
            problem
        ),
    )?;

    for &s in samplers.iter().filter(|s| s.resamples()) {
        let Some(first) = rows.iter().find(|r| r.sampler == s) else { continue };
        let stem = format!("{}_{}_{}", problem, s.name(), first.seed);
        let snaps = snapshot_files(dir, &stem)?;
        if snaps.is_empty() {
            return Err(CliError::MissingArtifacts(vec![dir.join("runs").join(format!("{stem}_nodes_*.csv"))]));
        }
        write(
            format!("plot_nodes_{}.py", s.name()),
            format!(
                "import csv\nimport math\nimport matplotlib.pyplot as plt\n\nSNAPSHOTS = {}\n\ncols = min(5, len(SNAPSHOTS))\nrows = math.ceil(len(SNAPSHOTS) / cols)\nfig, axes = plt.subplots(rows, cols, figsize=(3 * cols, 3 * rows), squeeze=False)\nfor ax in axes.flat:\n    ax.axis('off')\nfor ax, path in zip(axes.flat, SNAPSHOTS):\n    with open(path) as f:\n        pts = [(float(r['x']), float(r['y'])) for r in csv.DictReader(f)]\n    ax.axis('on')\n    ax.scatter([p[0] for p in pts], [p[1] for p in pts], s=1)\n    ax.set_title(path.rsplit('_', 1)[1][:-4].lstrip('0') or '0', fontsize=8)\nfig.suptitle({:?})\nfig.savefig('{}_nodes.png', dpi=150)\n",
                py_list(&snaps),
                format!("{stem} collocation nodes by iteration"),
                stem
            ),
        )?;
        write(
            format!("plot_time_hist_{}.py", s.name()),
            format!(
                "import csv\nimport matplotlib.pyplot as plt\n\nSNAPSHOTS = {}\nBINS = 20\n\nfor path in SNAPSHOTS:\n    with open(path) as f:\n        ts = [float(r['y']) for r in csv.DictReader(f)]\n    plt.hist(ts, bins=BINS, histtype='step', label=path.rsplit('_', 1)[1][:-4])\nplt.xlabel('t')\nplt.ylabel('nodes')\nplt.legend(fontsize=6)\nplt.savefig('{}_time_hist.png', dpi=150)\n",
                py_list(&snaps),
                stem
            ),
        )?;
    }
    Ok(written)
}
