//! Synthetic mixtures of harmonic damped-sinusoid sources.
//!
//! With `K` sources the timeline has `K + 1` segments: each source alone in
//! turn, then all of them together. A source restarts its event at the start
//! of every segment it is active in, so every activation is an exact repeat.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase::OnsetDomain;
use crate::stft::StftConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Partial {
    pub amplitude: f64,
    /// Radians.
    pub origin_phase: f64,
    /// Hz.
    pub frequency: f64,
    /// 1/s.
    pub damping: f64,
}

impl Partial {
    /// Sample `n` samples after the event start.
    pub fn sample(&self, n: usize, sample_rate: f64) -> f64 {
        let time = n as f64 / sample_rate;
        self.amplitude
            * (-self.damping * time).exp()
            * (2.0 * PI * self.frequency * time + self.origin_phase).cos()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub partials: Vec<Partial>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    /// Seconds.
    pub start: f64,
    /// Seconds.
    pub duration: f64,
    pub active_sources: Vec<usize>,
}

impl Segment {
    fn sample_range(&self, sample_rate: f64) -> std::ops::Range<usize> {
        let start = (self.start * sample_rate).round() as usize;
        let len = (self.duration * sample_rate).round() as usize;
        start..start + len
    }
}

/// Declarative description of a synthetic mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub sample_rate: u32,
    pub sources: Vec<SourceSpec>,
    pub segments: Vec<Segment>,
    /// Per source, the first frame starting at or after each event start.
    pub onset_frames: Vec<Vec<usize>>,
    pub seed: u64,
}

impl MixtureSpec {
    pub fn n_samples(&self) -> usize {
        let fs = self.sample_rate as f64;
        self.segments
            .iter()
            .map(|s| s.sample_range(fs).end)
            .max()
            .unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let nyquist = self.sample_rate as f64 / 2.0;
        for (k, source) in self.sources.iter().enumerate() {
            for p in &source.partials {
                if !(p.frequency > 0.0 && p.frequency < nyquist) {
                    return Err(Error::Config(format!(
                        "source {k}: partial at {} Hz is outside (0, {nyquist}) Hz",
                        p.frequency
                    )));
                }
                if !(p.damping >= 0.0) || !(p.amplitude > 0.0) {
                    return Err(Error::Config(format!(
                        "source {k}: amplitude must be > 0 and damping >= 0"
                    )));
                }
            }
        }
        for seg in &self.segments {
            if let Some(&k) = seg.active_sources.iter().find(|&&k| k >= self.sources.len()) {
                return Err(Error::Config(format!("segment references unknown source {k}")));
            }
        }
        Ok(())
    }

    /// Event start samples of source `k`.
    pub fn event_starts(&self, k: usize) -> Vec<usize> {
        let fs = self.sample_rate as f64;
        self.segments
            .iter()
            .filter(|s| s.active_sources.contains(&k))
            .map(|s| s.sample_range(fs).start)
            .collect()
    }

    pub fn onset_domains(&self, n_frames: usize) -> Result<Vec<OnsetDomain>> {
        self.onset_frames
            .iter()
            .map(|frames| OnsetDomain::new(frames.iter().copied(), n_frames))
            .collect()
    }

    /// Renders the source signals.
    pub fn render_sources(&self) -> Vec<Vec<f64>> {
        let fs = self.sample_rate as f64;
        let len = self.n_samples();
        let mut out = vec![vec![0.0; len]; self.sources.len()];
        for seg in &self.segments {
            let range = seg.sample_range(fs);
            for &k in &seg.active_sources {
                for (offset, n) in range.clone().enumerate() {
                    out[k][n] += self.sources[k]
                        .partials
                        .iter()
                        .map(|p| p.sample(offset, fs))
                        .sum::<f64>();
                }
            }
        }
        out
    }

    pub fn render(&self) -> Result<GroundTruth> {
        self.validate()?;
        let sources = self.render_sources();
        let len = self.n_samples();
        let mixture = (0..len).map(|n| sources.iter().map(|s| s[n]).sum()).collect();
        Ok(GroundTruth {
            mixture,
            sources,
            spec: self.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub mixture: Vec<f64>,
    pub sources: Vec<Vec<f64>>,
    pub spec: MixtureSpec,
}

/// Random ranges for the generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub sample_rate: u32,
    pub n_sources: usize,
    pub segment_duration: f64,
    /// Hz; every partial of a harmonic stack stays below the upper bound.
    pub frequency_range: (f64, f64),
    pub amplitude_range: (f64, f64),
    pub damping_range: (f64, f64),
    /// Inclusive.
    pub partials_range: (usize, usize),
    pub stft: StftConfig,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            sample_rate: 11025,
            n_sources: 2,
            segment_duration: 1.0,
            frequency_range: (100.0, 3000.0),
            amplitude_range: (0.5, 1.0),
            damping_range: (0.5, 5.0),
            partials_range: (3, 8),
            stft: StftConfig::default(),
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        let (lo, hi) = self.frequency_range;
        if !(lo > 0.0 && lo < hi) {
            return Err(Error::Config(format!("invalid frequency range {lo}..{hi}")));
        }
        if hi >= self.sample_rate as f64 / 2.0 {
            return Err(Error::Config(format!(
                "frequency range reaches {hi} Hz, above Nyquist for {} Hz",
                self.sample_rate
            )));
        }
        let (pmin, pmax) = self.partials_range;
        if pmin == 0 || pmin > pmax || lo * pmin as f64 > hi {
            return Err(Error::Config("invalid partial count range".into()));
        }
        if self.n_sources == 0 || !(self.segment_duration > 0.0) {
            return Err(Error::Config("need at least one source and a positive segment duration".into()));
        }
        if self.stft.sample_rate != self.sample_rate {
            return Err(Error::Config("STFT and synthesis sample rates differ".into()));
        }
        self.stft.validate()
    }

    /// Segment layout: each source alone in turn, then all together.
    pub fn layout(&self) -> Vec<Segment> {
        let d = self.segment_duration;
        let mut segments: Vec<Segment> = (0..self.n_sources)
            .map(|k| Segment {
                start: k as f64 * d,
                duration: d,
                active_sources: vec![k],
            })
            .collect();
        segments.push(Segment {
            start: self.n_sources as f64 * d,
            duration: d,
            active_sources: (0..self.n_sources).collect(),
        });
        segments
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo { rng.random_range(lo..hi) } else { lo }
}

/// Random harmonic sources in the configured layout.
pub fn random_mixture_spec(seed: u64, config: &SynthConfig) -> Result<MixtureSpec> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (f_lo, f_hi) = config.frequency_range;
    let sources = (0..config.n_sources)
        .map(|_| {
            let (pmin, pmax) = config.partials_range;
            let mut count = rng.random_range(pmin..=pmax);
            while f_lo * count as f64 > f_hi {
                count -= 1;
            }
            let fundamental = uniform(&mut rng, (f_lo, f_hi / count as f64));
            let partials = (1..=count)
                .map(|j| Partial {
                    amplitude: uniform(&mut rng, config.amplitude_range),
                    origin_phase: rng.random_range(-PI..PI),
                    frequency: j as f64 * fundamental,
                    damping: uniform(&mut rng, config.damping_range),
                })
                .collect();
            SourceSpec { partials }
        })
        .collect();
    with_layout(sources, config, seed)
}

/// Places the given sources in the standard layout and computes onset frames.
pub fn with_layout(sources: Vec<SourceSpec>, config: &SynthConfig, seed: u64) -> Result<MixtureSpec> {
    config.validate()?;
    if sources.len() != config.n_sources {
        return Err(Error::Config(format!(
            "{} sources given, layout expects {}",
            sources.len(),
            config.n_sources
        )));
    }
    let mut spec = MixtureSpec {
        sample_rate: config.sample_rate,
        sources,
        segments: config.layout(),
        onset_frames: Vec::new(),
        seed,
    };
    let n_frames = config.stft.n_frames(spec.n_samples());
    spec.onset_frames = (0..config.n_sources)
        .map(|k| {
            spec.event_starts(k)
                .into_iter()
                .map(|n0| config.stft.frame_at_or_after(n0))
                .filter(|&t| t < n_frames)
                .collect()
        })
        .collect();
    spec.validate()?;
    Ok(spec)
}

pub fn synth_damped_mixture(seed: u64, config: &SynthConfig) -> Result<GroundTruth> {
    random_mixture_spec(seed, config)?.render()
}

/// Seed of mixture `index` in a corpus.
pub fn corpus_item_seed(corpus_seed: u64, index: usize) -> u64 {
    // splitmix64 step, kept within the signed range so seeds survive TOML.
    let mut z = corpus_seed
        .wrapping_add((index as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    (z ^ (z >> 31)) & (i64::MAX as u64)
}

pub fn synth_corpus(corpus_seed: u64, count: usize, config: &SynthConfig) -> Result<Vec<GroundTruth>> {
    (0..count)
        .map(|i| synth_damped_mixture(corpus_item_seed(corpus_seed, i), config))
        .collect()
}

/// Two harmonic tones with one pair of partials (880 Hz and 888 Hz) sharing
/// a frequency channel at the default STFT settings, undamped. Returns the
/// ground truth and the shared channel.
pub fn overlap_fixture(config: &SynthConfig) -> Result<(GroundTruth, usize)> {
    let tone = |fundamental: f64, amplitudes: &[f64], phases: &[f64]| SourceSpec {
        partials: amplitudes
            .iter()
            .zip(phases)
            .enumerate()
            .map(|(j, (&amplitude, &origin_phase))| Partial {
                amplitude,
                origin_phase,
                frequency: (j + 1) as f64 * fundamental,
                damping: 0.0,
            })
            .collect(),
    };
    let sources = vec![
        tone(220.0, &[1.0, 0.8, 0.6, 0.9], &[0.3, -1.2, 2.0, 0.7]),
        tone(296.0, &[0.9, 0.7, 0.8], &[-0.4, 1.5, -2.5]),
    ];
    let cfg = SynthConfig {
        n_sources: 2,
        ..config.clone()
    };
    let spec = with_layout(sources, &cfg, 0)?;
    let channel = (880.0 * cfg.stft.window_length as f64 / cfg.sample_rate as f64).round() as usize;
    Ok((spec.render()?, channel))
}
