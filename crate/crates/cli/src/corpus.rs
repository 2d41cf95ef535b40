//! Corpus layout on disk.
//!
//! ```text
//! <corpus>/mix_000/manifest.toml
//!                  mixture.wav
//!                  source_0.wav, source_1.wav
//!                  <method>/estimate_0.wav, estimate_1.wav, report.json
//! ```

use std::path::{Path, PathBuf};

use log::warn;
use phasecnmf::dataset::manifest::SCHEMA_VERSION;
use phasecnmf::dataset::{
    corpus_item_seed, save_manifest, save_wav, synth_damped_mixture, Manifest, SeparationDefaults, StftSection,
    SynthConfig,
};
use rayon::prelude::*;

use crate::error::{CliError, CliResult};

pub const MANIFEST_NAME: &str = "manifest.toml";
pub const MIXTURE_NAME: &str = "mixture.wav";
/// Peak level of the loudest written signal.
pub const WAV_HEADROOM: f64 = 0.9;

pub fn source_name(k: usize) -> String {
    format!("source_{k}.wav")
}

pub fn estimate_name(k: usize) -> String {
    format!("estimate_{k}.wav")
}

pub fn mixture_dir_name(index: usize) -> String {
    format!("mix_{index:03}")
}

/// Writes one mixture directory and returns its path.
pub fn write_mixture(dir: &Path, seed: u64, config: &SynthConfig) -> CliResult<PathBuf> {
    let truth = synth_damped_mixture(seed, config)?;
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let peak = truth
        .sources
        .iter()
        .chain(std::iter::once(&truth.mixture))
        .flatten()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let gain = if peak > WAV_HEADROOM { WAV_HEADROOM / peak } else { 1.0 };
    let scaled = |x: &[f64]| x.iter().map(|v| v * gain).collect::<Vec<_>>();

    let fs = config.sample_rate;
    save_wav(dir.join(MIXTURE_NAME), &scaled(&truth.mixture), fs)?;
    let mut ground_truth = Vec::new();
    for (k, source) in truth.sources.iter().enumerate() {
        save_wav(dir.join(source_name(k)), &scaled(source), fs)?;
        ground_truth.push(PathBuf::from(source_name(k)));
    }
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        mixture: MIXTURE_NAME.into(),
        n_sources: truth.sources.len(),
        ground_truth: Some(ground_truth),
        onsets: Some(truth.spec.onset_frames.clone()),
        stft: StftSection {
            window_length: config.stft.window_length,
            hop: config.stft.hop,
        },
        separation: SeparationDefaults::default(),
        synthesis: Some(truth.spec),
        wav_gain: Some(gain),
    };
    let path = dir.join(MANIFEST_NAME);
    save_manifest(&path, &manifest)?;
    Ok(path)
}

pub fn synth_corpus(out: &Path, corpus_seed: u64, count: usize) -> CliResult<Vec<PathBuf>> {
    if count == 0 {
        warn!("count is 0, writing an empty corpus");
    }
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let config = SynthConfig::default();
    (0..count)
        .into_par_iter()
        .map(|i| write_mixture(&out.join(mixture_dir_name(i)), corpus_item_seed(corpus_seed, i), &config))
        .collect()
}

/// Manifests of a corpus directory, sorted by path. A directory that itself
/// holds a manifest is a one-mixture corpus.
pub fn find_manifests(corpus: &Path) -> CliResult<Vec<PathBuf>> {
    let own = corpus.join(MANIFEST_NAME);
    if own.is_file() {
        return Ok(vec![own]);
    }
    let entries = std::fs::read_dir(corpus).map_err(|e| CliError::io(corpus, e))?;
    let mut found = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| CliError::io(corpus, e))?;
        let candidate = entry.path().join(MANIFEST_NAME);
        if candidate.is_file() {
            found.push(candidate);
        }
    }
    found.sort();
    Ok(found)
}

/// Short label for a mixture: the name of its directory.
pub fn mixture_label(manifest: &Path) -> String {
    manifest
        .parent()
        .and_then(|p| p.file_name())
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| manifest.display().to_string())
}
