//! Mixture manifests (TOML).
//!
//! ```toml
//! schema_version = 1
//! mixture = "mixture.wav"          # relative to the manifest
//! n_sources = 2
//! ground_truth = ["source_0.wav", "source_1.wav"]   # optional
//! onsets = [[0, 173], [87, 173]]   # per source, STFT frame indexes
//! wav_gain = 0.25                  # optional, written by the generator
//!
//! [stft]                           # optional
//! window_length = 512
//! hop = 128
//!
//! [separation]                     # optional, every key optional
//! sigma_u = 0.2
//! sigma_r = 0.2
//! sigma_s = 0.01
//! p = 1.0
//! iterations = 10
//! init_iterations = 30
//! seed = 0
//!
//! [synthesis]                      # written by the generator
//! ...
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::synth::MixtureSpec;
use crate::error::{Error, Result};
use crate::phase::OnsetDomain;
use crate::separation::SeparationConfig;
use crate::stft::StftConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StftSection {
    pub window_length: usize,
    pub hop: usize,
}

impl Default for StftSection {
    fn default() -> Self {
        let d = StftConfig::default();
        Self {
            window_length: d.window_length,
            hop: d.hop,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeparationDefaults {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_u: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_r: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init_iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl SeparationDefaults {
    /// Overlays the values present here onto `base`.
    pub fn apply(&self, mut base: SeparationConfig) -> SeparationConfig {
        if let Some(v) = self.sigma_u {
            base.sigma_u = v;
        }
        if let Some(v) = self.sigma_r {
            base.sigma_r = v;
        }
        if self.sigma_s.is_some() {
            base.sigma_s = self.sigma_s;
        }
        if let Some(v) = self.p {
            base.sparsity_exponent = v;
        }
        if let Some(v) = self.iterations {
            base.outer_iterations = v;
        }
        if let Some(v) = self.init_iterations {
            base.init_nmf_iterations = v;
        }
        if let Some(v) = self.seed {
            base.seed = v;
        }
        base
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema_version: u32,
    pub mixture: PathBuf,
    pub n_sources: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<Vec<PathBuf>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub onsets: Option<Vec<Vec<usize>>>,
    #[serde(default)]
    pub stft: StftSection,
    #[serde(default)]
    pub separation: SeparationDefaults,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthesis: Option<MixtureSpec>,
    /// Common gain applied to the rendered synthesis before writing WAVs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wav_gain: Option<f64>,
}

impl Manifest {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Validation(format!("cannot serialize manifest: {e}")))
    }

    pub fn stft_config(&self, sample_rate: u32) -> Result<StftConfig> {
        StftConfig::new(self.stft.window_length, self.stft.hop, sample_rate)
    }

    pub fn separation_config(&self) -> SeparationConfig {
        self.separation.apply(SeparationConfig {
            n_sources: self.n_sources,
            ..SeparationConfig::default()
        })
    }

    /// Onset domains for every source; fails naming the first source
    /// without an onset list.
    pub fn onset_domains(&self, n_frames: usize) -> Result<Vec<OnsetDomain>> {
        let lists = self.onsets.as_deref().unwrap_or(&[]);
        (0..self.n_sources)
            .map(|k| {
                let frames = lists.get(k).ok_or_else(|| {
                    Error::Validation(format!("manifest has no onset frames for source {k}"))
                })?;
                OnsetDomain::new(frames.iter().copied(), n_frames)
                    .map_err(|e| Error::Validation(format!("source {k}: {e}")))
            })
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Validation(format!(
                "unsupported manifest schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.n_sources == 0 {
            return Err(Error::Validation("n_sources must be at least 1".into()));
        }
        if let Some(onsets) = &self.onsets {
            if onsets.len() > self.n_sources {
                return Err(Error::Validation(format!(
                    "{} onset lists for {} sources",
                    onsets.len(),
                    self.n_sources
                )));
            }
        }
        if let Some(gt) = &self.ground_truth {
            if gt.len() != self.n_sources {
                return Err(Error::Validation(format!(
                    "{} ground-truth files for {} sources",
                    gt.len(),
                    self.n_sources
                )));
            }
        }
        Ok(())
    }
}

/// A parsed manifest with paths resolved against its directory.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedManifest {
    pub path: PathBuf,
    pub manifest: Manifest,
    pub mixture_path: PathBuf,
    pub ground_truth_paths: Option<Vec<PathBuf>>,
}

impl LoadedManifest {
    pub fn dir(&self) -> &Path {
        self.path.parent().unwrap_or_else(|| Path::new("."))
    }
}

pub fn parse_manifest(text: &str) -> Result<Manifest> {
    let manifest: Manifest =
        toml::from_str(text).map_err(|e| Error::Validation(format!("malformed manifest: {e}")))?;
    manifest.validate()?;
    Ok(manifest)
}

/// Reads and validates a manifest. When the mixture file exists, onset
/// frames are also checked against its frame count.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<LoadedManifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest = parse_manifest(&text)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mixture_path = base.join(&manifest.mixture);
    let ground_truth_paths = manifest
        .ground_truth
        .as_ref()
        .map(|v| v.iter().map(|p| base.join(p)).collect());

    if let (Some(onsets), Ok(reader)) = (&manifest.onsets, hound::WavReader::open(&mixture_path)) {
        let spec = reader.spec();
        let samples = reader.duration() as usize;
        let stft = manifest.stft_config(spec.sample_rate)?;
        let n_frames = stft.n_frames(samples.max(1));
        for (k, frames) in onsets.iter().enumerate() {
            if let Some(&t) = frames.iter().find(|&&t| t >= n_frames) {
                return Err(Error::Validation(format!(
                    "source {k}: onset frame {t} is beyond the last frame {}",
                    n_frames - 1
                )));
            }
        }
    }

    Ok(LoadedManifest {
        path: path.to_path_buf(),
        manifest,
        mixture_path,
        ground_truth_paths,
    })
}

pub fn save_manifest(path: impl AsRef<Path>, manifest: &Manifest) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, manifest.to_toml()?).map_err(|e| Error::io(path, e))
}
