//! The three separation methods behind one entry point.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cnmf::ComplexModel;
use crate::dataset::GroundTruth;
use crate::error::{Error, Result};
use crate::eval::{bss_eval_best_permutation, EvalScores, DEFAULT_CAP_DB};
use crate::nmf::{kl_nmf_traced, wiener_filter};
use crate::phase::OnsetDomain;
use crate::separation::{separate, SeparationConfig};
use crate::stft::{istft, stft, ComplexSpectrogram, StftConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    /// KL-NMF on the magnitude, then Wiener filtering.
    #[serde(rename = "nmf-w")]
    NmfWiener,
    /// Sparse complex NMF without phase constraints.
    #[serde(rename = "cnmf")]
    Cnmf,
    /// Complex NMF with unwrapping and repetition phase constraints.
    #[serde(rename = "cnmf-phi")]
    CnmfPhase,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::NmfWiener, Method::Cnmf, Method::CnmfPhase];

    pub fn label(self) -> &'static str {
        match self {
            Method::NmfWiener => "nmf-w",
            Method::Cnmf => "cnmf",
            Method::CnmfPhase => "cnmf-phi",
        }
    }

    pub fn needs_onsets(self) -> bool {
        self == Method::CnmfPhase
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.label() == s)
            .ok_or_else(|| Error::Config(format!("unknown method '{s}' (expected nmf-w, cnmf or cnmf-phi)")))
    }
}

/// Separated spectrograms and the objective trace of the final stage
/// (KL divergence for NMF-W, the CNMF objective otherwise).
#[derive(Debug, Clone)]
pub struct MethodOutput {
    pub estimates: Vec<ComplexSpectrogram>,
    pub cost_trace: Vec<f64>,
}

pub fn run_method(
    x: &ComplexSpectrogram,
    method: Method,
    config: &SeparationConfig,
    onsets: Option<&[OnsetDomain]>,
) -> Result<MethodOutput> {
    config.validate()?;
    let k = config.n_sources;
    match method {
        Method::NmfWiener => {
            let (factors, trace) =
                kl_nmf_traced(&x.magnitude(), k, config.init_nmf_iterations, config.seed)?;
            Ok(MethodOutput {
                estimates: wiener_filter(x, &factors)?,
                cost_trace: trace,
            })
        }
        Method::Cnmf | Method::CnmfPhase => {
            let init = ComplexModel::from_nmf_wiener(x, k, config.init_nmf_iterations, config.seed)?;
            let (cfg, domains) = if method == Method::Cnmf {
                let cfg = SeparationConfig {
                    sigma_u: 0.0,
                    sigma_r: 0.0,
                    ..config.clone()
                };
                let domains = match onsets {
                    Some(o) => o.to_vec(),
                    None => vec![OnsetDomain::empty(x.n_frames()); k],
                };
                (cfg, domains)
            } else {
                let domains = onsets
                    .ok_or_else(|| Error::Validation("cnmf-phi requires onset frames for every source".into()))?
                    .to_vec();
                (config.clone(), domains)
            };
            let fit = separate(x, &cfg, &domains, Some(&init))?;
            Ok(MethodOutput {
                estimates: fit.estimates()?,
                cost_trace: fit.cost_trace,
            })
        }
    }
}

/// Inverse transforms, trimmed or zero-padded to `len` samples.
pub fn to_signals(estimates: &[ComplexSpectrogram], stft_config: &StftConfig, len: usize) -> Result<Vec<Vec<f64>>> {
    estimates
        .iter()
        .map(|e| {
            let mut y = istft(e, stft_config)?;
            y.resize(len, 0.0);
            Ok(y)
        })
        .collect()
}

/// Separated time signals plus the method's cost trace.
#[derive(Debug, Clone)]
pub struct SignalSeparation {
    pub stems: Vec<Vec<f64>>,
    pub cost_trace: Vec<f64>,
}

pub fn separate_signal(
    mixture: &[f64],
    stft_config: &StftConfig,
    method: Method,
    config: &SeparationConfig,
    onsets: Option<&[OnsetDomain]>,
) -> Result<SignalSeparation> {
    let x = stft(mixture, stft_config)?;
    let out = run_method(&x, method, config, onsets)?;
    Ok(SignalSeparation {
        stems: to_signals(&out.estimates, stft_config, mixture.len())?,
        cost_trace: out.cost_trace,
    })
}

/// Separates a synthetic mixture and scores it against its sources.
pub fn evaluate_ground_truth(
    truth: &GroundTruth,
    stft_config: &StftConfig,
    method: Method,
    config: &SeparationConfig,
) -> Result<(EvalScores, SignalSeparation)> {
    let n_frames = stft_config.n_frames(truth.mixture.len());
    let onsets = truth.spec.onset_domains(n_frames)?;
    let out = separate_signal(&truth.mixture, stft_config, method, config, Some(&onsets))?;
    let scores = bss_eval_best_permutation(&out.stems, &truth.sources, DEFAULT_CAP_DB)?;
    Ok((scores, out))
}
