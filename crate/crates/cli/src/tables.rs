//! CSV outputs of `eval` and `sweep`.
//!
//! Both files start with a `# <schema>` comment line followed by a header.
//!
//! `phasecnmf-eval/1`:
//! `row,mixture,method,source,sdr_db,sir_db,sar_db,n_mixtures,status`.
//! `row` is `source` for one reference of one mixture (scores empty and
//! `status` holding the reason when the row was skipped) or `mean` for the
//! per-method average over every scored source.
//!
//! `phasecnmf-sweep/1`:
//! `sigma_u,sigma_r,sdr_db,sir_db,sar_db,n_mixtures,n_failed,error`,
//! one row per grid cell, means over the scored mixtures.

use std::io::Write;
use std::path::{Path, PathBuf};

use phasecnmf::dataset::{load_manifest, load_wav};
use phasecnmf::eval::{aggregate, bss_eval_best_permutation, EvalScores, SourceScore, DEFAULT_CAP_DB};
use phasecnmf::Method;
use rayon::prelude::*;

use crate::args::ModelArgs;
use crate::corpus::{estimate_name, mixture_label};
use crate::error::{CliError, CliResult};
use crate::separate::{default_stem_dir, separate_manifest, Overrides};

pub const EVAL_SCHEMA: &str = "phasecnmf-eval/1";
pub const SWEEP_SCHEMA: &str = "phasecnmf-sweep/1";

const EVAL_HEADER: [&str; 9] = [
    "row", "mixture", "method", "source", "sdr_db", "sir_db", "sar_db", "n_mixtures", "status",
];
const SWEEP_HEADER: [&str; 8] = [
    "sigma_u", "sigma_r", "sdr_db", "sir_db", "sar_db", "n_mixtures", "n_failed", "error",
];

fn db(v: f64) -> String {
    format!("{v:.4}")
}

fn open_csv(path: &Path, schema: &str) -> CliResult<csv::Writer<std::fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut file = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    writeln!(file, "# {schema}").map_err(|e| CliError::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn score_stems(manifest: &Path, method: Method) -> Result<EvalScores, String> {
    let loaded = load_manifest(manifest).map_err(|e| e.to_string())?;
    let truth = loaded
        .ground_truth_paths
        .as_ref()
        .ok_or_else(|| "manifest lists no ground truth".to_string())?;
    let dir = default_stem_dir(manifest, method);
    let mut estimates = Vec::new();
    for k in 0..loaded.manifest.n_sources {
        let path = dir.join(estimate_name(k));
        if !path.is_file() {
            return Err(format!("missing stem {}", path.display()));
        }
        estimates.push(load_wav(&path).map_err(|e| e.to_string())?.0);
    }
    let references = truth
        .iter()
        .map(|p| load_wav(p).map(|(s, _)| s))
        .collect::<phasecnmf::Result<Vec<_>>>()
        .map_err(|e| e.to_string())?;
    bss_eval_best_permutation(&estimates, &references, DEFAULT_CAP_DB).map_err(|e| e.to_string())
}

/// Scores every mixture's stems for every method; returns the number of
/// skipped (mixture, method) pairs.
pub fn run_eval(manifests: &[PathBuf], methods: &[Method], out: &Path) -> CliResult<usize> {
    let jobs: Vec<(usize, Method)> = (0..manifests.len())
        .flat_map(|i| methods.iter().map(move |&m| (i, m)))
        .collect();
    let results: Vec<Result<EvalScores, String>> =
        jobs.par_iter().map(|&(i, m)| score_stems(&manifests[i], m)).collect();

    let mut writer = open_csv(out, EVAL_SCHEMA)?;
    let csv_err = |e| CliError::csv(out, e);
    writer.write_record(EVAL_HEADER).map_err(csv_err)?;
    let mut skipped = 0;
    for (&(i, method), result) in jobs.iter().zip(&results) {
        let mixture = mixture_label(&manifests[i]);
        match result {
            Ok(scores) => {
                for (k, s) in scores.sources.iter().enumerate() {
                    writer
                        .write_record([
                            "source",
                            &mixture,
                            method.label(),
                            &k.to_string(),
                            &db(s.sdr_db),
                            &db(s.sir_db),
                            &db(s.sar_db),
                            "1",
                            "ok",
                        ])
                        .map_err(csv_err)?;
                }
            }
            Err(reason) => {
                skipped += 1;
                writer
                    .write_record(["source", &mixture, method.label(), "", "", "", "", "0", reason])
                    .map_err(csv_err)?;
            }
        }
    }
    if !manifests.is_empty() {
        for &method in methods {
            let scored: Vec<EvalScores> = jobs
                .iter()
                .zip(&results)
                .filter(|((_, m), _)| *m == method)
                .filter_map(|(_, r)| r.as_ref().ok().cloned())
                .collect();
            let (values, n, status) = match aggregate(&scored) {
                Ok(agg) => (Some(agg.mean), agg.n_mixtures, "ok".to_string()),
                Err(e) => (None, 0, e.to_string()),
            };
            write_mean(&mut writer, method, values, n, &status).map_err(csv_err)?;
        }
    }
    writer.flush().map_err(|e| CliError::io(out, e))?;
    Ok(skipped)
}

fn write_mean(
    writer: &mut csv::Writer<std::fs::File>,
    method: Method,
    mean: Option<SourceScore>,
    n: usize,
    status: &str,
) -> csv::Result<()> {
    let (sdr, sir, sar) = match mean {
        Some(m) => (db(m.sdr_db), db(m.sir_db), db(m.sar_db)),
        None => Default::default(),
    };
    writer.write_record(["mean", "", method.label(), "", &sdr, &sir, &sar, &n.to_string(), status])
}

/// One grid cell of the sweep.
#[derive(Debug, Clone)]
pub struct SweepCell {
    pub sigma_u: f64,
    pub sigma_r: f64,
    pub mean: Option<SourceScore>,
    pub n_mixtures: usize,
    pub n_failed: usize,
    pub error: String,
}

pub fn run_sweep(
    manifests: &[PathBuf],
    sigma_u: &[f64],
    sigma_r: &[f64],
    model: &ModelArgs,
    out: &Path,
) -> CliResult<Vec<SweepCell>> {
    if sigma_u.is_empty() || sigma_r.is_empty() {
        return Err(CliError::Usage("sweep grids must not be empty".into()));
    }
    if let Some(bad) = sigma_u.iter().chain(sigma_r).find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(CliError::Usage(format!("grid weight {bad} must be finite and nonnegative")));
    }
    let grid: Vec<(f64, f64)> = sigma_u.iter().flat_map(|&u| sigma_r.iter().map(move |&r| (u, r))).collect();
    let jobs: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|c| (0..manifests.len()).map(move |i| (c, i)))
        .collect();
    let results: Vec<Result<EvalScores, String>> = jobs
        .par_iter()
        .map(|&(c, i)| {
            let overrides = Overrides {
                method: Method::CnmfPhase,
                sigma_u: Some(grid[c].0),
                sigma_r: Some(grid[c].1),
                model: model.clone(),
            };
            let sep = separate_manifest(&manifests[i], &overrides).map_err(|e| e.to_string())?;
            sep.scores
                .ok_or_else(|| format!("{}: manifest lists no ground truth", manifests[i].display()))
        })
        .collect();

    let mut cells = Vec::new();
    for (c, &(u, r)) in grid.iter().enumerate() {
        let mut scored = Vec::new();
        let mut errors = Vec::new();
        for (&(cell, _), result) in jobs.iter().zip(&results) {
            if cell != c {
                continue;
            }
            match result {
                Ok(s) => scored.push(s.clone()),
                Err(e) => errors.push(e.clone()),
            }
        }
        let mean = aggregate(&scored).ok();
        cells.push(SweepCell {
            sigma_u: u,
            sigma_r: r,
            n_mixtures: mean.map_or(0, |a| a.n_mixtures),
            mean: mean.map(|a| a.mean),
            n_failed: errors.len(),
            error: errors.into_iter().next().unwrap_or_default(),
        });
    }

    let mut writer = open_csv(out, SWEEP_SCHEMA)?;
    let csv_err = |e| CliError::csv(out, e);
    writer.write_record(SWEEP_HEADER).map_err(csv_err)?;
    for cell in &cells {
        let (sdr, sir, sar) = match cell.mean {
            Some(m) => (db(m.sdr_db), db(m.sir_db), db(m.sar_db)),
            None => Default::default(),
        };
        writer
            .write_record([
                &cell.sigma_u.to_string(),
                &cell.sigma_r.to_string(),
                &sdr,
                &sir,
                &sar,
                &cell.n_mixtures.to_string(),
                &cell.n_failed.to_string(),
                &cell.error,
            ])
            .map_err(csv_err)?;
    }
    writer.flush().map_err(|e| CliError::io(out, e))?;
    Ok(cells)
}
