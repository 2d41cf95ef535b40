use std::path::{Path, PathBuf};
use std::time::Instant;

use phasecnmf::dataset::{load_manifest, load_wav, save_wav, LoadedManifest};
use phasecnmf::eval::{bss_eval_best_permutation, EvalScores, DEFAULT_CAP_DB};
use phasecnmf::pipeline::to_signals;
use phasecnmf::{run_method, stft, Method, SeparationConfig, StftConfig};
use serde::{Deserialize, Serialize};

use crate::corpus::{estimate_name, mixture_label};
use crate::error::{CliError, CliResult};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const REPORT_NAME: &str = "report.json";

/// Seconds spent in each stage of one run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub load_s: f64,
    pub stft_s: f64,
    pub separate_s: f64,
    pub synthesis_s: f64,
    pub eval_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub method: Method,
    pub mixture: String,
    pub manifest: PathBuf,
    pub config: SeparationConfig,
    pub stft: StftConfig,
    /// Sparsity weight actually used (resolved from the mixture when unset).
    pub sigma_s_resolved: f64,
    pub stems: Vec<PathBuf>,
    pub clipped_samples: usize,
    pub cost_trace: Vec<f64>,
    pub scores: Option<EvalScores>,
    pub timings: StageTimings,
}

/// Separation settings given on the command line, before the manifest
/// defaults are known.
#[derive(Debug, Clone)]
pub struct Overrides {
    pub method: Method,
    pub sigma_u: Option<f64>,
    pub sigma_r: Option<f64>,
    pub model: crate::args::ModelArgs,
}

impl Overrides {
    pub fn config(&self, loaded: &LoadedManifest) -> SeparationConfig {
        let mut config = self.model.apply(loaded.manifest.separation_config());
        if let Some(v) = self.sigma_u {
            config.sigma_u = v;
        }
        if let Some(v) = self.sigma_r {
            config.sigma_r = v;
        }
        config
    }
}

pub fn default_stem_dir(manifest: &Path, method: Method) -> PathBuf {
    manifest.parent().unwrap_or_else(|| Path::new(".")).join(method.label())
}

/// In-memory separation of one manifest; nothing is written.
pub struct Separated {
    pub config: SeparationConfig,
    pub stft: StftConfig,
    pub sigma_s: f64,
    pub stems: Vec<Vec<f64>>,
    pub sample_rate: u32,
    pub cost_trace: Vec<f64>,
    pub scores: Option<EvalScores>,
    pub timings: StageTimings,
}

pub fn separate_manifest(manifest: &Path, overrides: &Overrides) -> CliResult<Separated> {
    let clock = Instant::now();
    let loaded = load_manifest(manifest)?;
    if overrides.method.needs_onsets() && loaded.manifest.onsets.is_none() {
        return Err(CliError::Usage(format!(
            "{}: method {} needs onset frames, but the manifest has no `onsets` entry",
            manifest.display(),
            overrides.method
        )));
    }
    let config = overrides.config(&loaded);
    let (mixture, sample_rate) = load_wav(&loaded.mixture_path)?;
    let stft_config = loaded.manifest.stft_config(sample_rate)?;
    let mut timings = StageTimings {
        load_s: clock.elapsed().as_secs_f64(),
        ..Default::default()
    };

    let clock = Instant::now();
    let x = stft(&mixture, &stft_config)?;
    let onsets = match loaded.manifest.onsets {
        Some(_) => Some(loaded.manifest.onset_domains(x.n_frames())?),
        None => None,
    };
    timings.stft_s = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let out = run_method(&x, overrides.method, &config, onsets.as_deref())?;
    timings.separate_s = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let stems = to_signals(&out.estimates, &stft_config, mixture.len())?;
    timings.synthesis_s = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let scores = match &loaded.ground_truth_paths {
        Some(paths) => {
            let references = paths
                .iter()
                .map(|p| load_wav(p).map(|(s, _)| s))
                .collect::<phasecnmf::Result<Vec<_>>>()?;
            Some(bss_eval_best_permutation(&stems, &references, DEFAULT_CAP_DB)?)
        }
        None => None,
    };
    timings.eval_s = clock.elapsed().as_secs_f64();

    Ok(Separated {
        sigma_s: config.penalties(&x).sigma_s,
        config,
        stft: stft_config,
        stems,
        sample_rate,
        cost_trace: out.cost_trace,
        scores,
        timings,
    })
}

/// Separates, writes the stems and `report.json` into `out_dir`.
pub fn run_separate(manifest: &Path, overrides: &Overrides, out_dir: &Path) -> CliResult<RunReport> {
    let sep = separate_manifest(manifest, overrides)?;
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let mut stems = Vec::new();
    let mut clipped = 0;
    for (k, stem) in sep.stems.iter().enumerate() {
        let path = out_dir.join(estimate_name(k));
        clipped += save_wav(&path, stem, sep.sample_rate)?.clipped;
        stems.push(path);
    }
    let report = RunReport {
        schema_version: REPORT_SCHEMA_VERSION,
        method: overrides.method,
        mixture: mixture_label(manifest),
        manifest: manifest.to_path_buf(),
        config: sep.config,
        stft: sep.stft,
        sigma_s_resolved: sep.sigma_s,
        stems,
        clipped_samples: clipped,
        cost_trace: sep.cost_trace,
        scores: sep.scores,
        timings: sep.timings,
    };
    let path = out_dir.join(REPORT_NAME);
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    std::fs::write(&path, json).map_err(|e| CliError::io(&path, e))?;
    Ok(report)
}
