//! Short-time Fourier transform with a modified Hann window.
//!
//! Frames start at sample 0 with no centering: frame `t` covers samples
//! `[t * hop, t * hop + window_length)`. The tail is zero-padded so the last
//! frame is complete. Spectra are one-sided (`window_length / 2 + 1` bins)
//! and bin `f` corresponds to the normalized frequency `f / window_length`.
//!
//! The window is scaled so that its square overlap-adds to exactly one at
//! 75% overlap, which makes analysis followed by synthesis with the same
//! window an identity on the fully overlapped interior.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of frames overlapping any interior sample.
pub const OVERLAP_FACTOR: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StftConfig {
    pub window_length: usize,
    pub hop: usize,
    pub sample_rate: u32,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            window_length: 512,
            hop: 128,
            sample_rate: 11025,
        }
    }
}

impl StftConfig {
    pub fn new(window_length: usize, hop: usize, sample_rate: u32) -> Result<Self> {
        let config = Self {
            window_length,
            hop,
            sample_rate,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_length == 0 || self.hop == 0 || self.sample_rate == 0 {
            return Err(Error::Config(format!(
                "window length, hop and sample rate must be positive (got {}, {}, {})",
                self.window_length, self.hop, self.sample_rate
            )));
        }
        if !self.window_length.is_multiple_of(OVERLAP_FACTOR) || self.hop * OVERLAP_FACTOR != self.window_length
        {
            return Err(Error::Config(format!(
                "hop must be a quarter of the window length (window {}, hop {})",
                self.window_length, self.hop
            )));
        }
        Ok(())
    }

    pub fn fft_size(&self) -> usize {
        self.window_length
    }

    /// One-sided bin count.
    pub fn n_bins(&self) -> usize {
        self.window_length / 2 + 1
    }

    /// Number of frames produced for a signal of `len` samples.
    pub fn n_frames(&self, len: usize) -> usize {
        if len <= self.window_length {
            1
        } else {
            (len - self.window_length).div_ceil(self.hop) + 1
        }
    }

    /// Index of the first frame that starts at or after `sample`.
    pub fn frame_at_or_after(&self, sample: usize) -> usize {
        sample.div_ceil(self.hop)
    }

    /// Range of sample indexes covered by all four overlapping frames.
    pub fn interior(&self, n_frames: usize) -> std::ops::Range<usize> {
        (self.window_length - self.hop)..(n_frames * self.hop)
    }
}

/// `w(n) = sqrt(2/3) * sin^2(pi (n + 0.5) / N)`.
pub fn modified_hann(length: usize) -> Result<Vec<f64>> {
    if length == 0 || !length.is_multiple_of(OVERLAP_FACTOR) {
        return Err(Error::Config(format!(
            "modified Hann window length must be a positive multiple of 4, got {length}"
        )));
    }
    let scale = (2.0f64 / 3.0).sqrt();
    let n = length as f64;
    Ok((0..length)
        .map(|i| {
            let s = (PI * (i as f64 + 0.5) / n).sin();
            scale * s * s
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    values: Array2<Complex64>,
    config: StftConfig,
}

impl ComplexSpectrogram {
    pub fn new(values: Array2<Complex64>, config: StftConfig) -> Result<Self> {
        config.validate()?;
        let (bins, frames) = values.dim();
        if bins != config.n_bins() || frames == 0 {
            return Err(Error::Shape(format!(
                "spectrogram is {bins}x{frames}, expected {} bins and at least one frame",
                config.n_bins()
            )));
        }
        Ok(Self { values, config })
    }

    pub fn zeros(config: StftConfig, n_frames: usize) -> Result<Self> {
        Self::new(Array2::zeros((config.n_bins(), n_frames)), config)
    }

    pub fn values(&self) -> &Array2<Complex64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<Complex64> {
        self.values
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn n_bins(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_frames(&self) -> usize {
        self.values.ncols()
    }

    pub fn magnitude(&self) -> Array2<f64> {
        self.values.mapv(|c| c.norm())
    }

    /// Sum of squared magnitudes, `||X||^2`.
    pub fn energy(&self) -> f64 {
        self.values.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Replaces the coefficients, keeping the configuration.
    pub fn with_values(&self, values: Array2<Complex64>) -> Result<Self> {
        Self::new(values, self.config)
    }
}

pub fn stft(signal: &[f64], config: &StftConfig) -> Result<ComplexSpectrogram> {
    config.validate()?;
    if signal.is_empty() {
        return Err(Error::Shape("cannot transform an empty signal".into()));
    }
    let n = config.window_length;
    let window = modified_hann(n)?;
    let frames = config.n_frames(signal.len());
    let bins = config.n_bins();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);

    let mut values = Array2::<Complex64>::zeros((bins, frames));
    let mut buffer = vec![Complex64::new(0.0, 0.0); n];
    for t in 0..frames {
        let start = t * config.hop;
        for (i, slot) in buffer.iter_mut().enumerate() {
            let sample = signal.get(start + i).copied().unwrap_or(0.0);
            *slot = Complex64::new(sample * window[i], 0.0);
        }
        fft.process(&mut buffer);
        for f in 0..bins {
            values[[f, t]] = buffer[f];
        }
    }
    ComplexSpectrogram::new(values, *config)
}

/// Weighted overlap-add synthesis. The output has `window_length + (T - 1) * hop`
/// samples; only the interior (see [`StftConfig::interior`]) is an exact inverse.
pub fn istft(spec: &ComplexSpectrogram, config: &StftConfig) -> Result<Vec<f64>> {
    config.validate()?;
    if spec.n_bins() != config.n_bins() {
        return Err(Error::Shape(format!(
            "spectrogram has {} bins, configuration expects {}",
            spec.n_bins(),
            config.n_bins()
        )));
    }
    let n = config.window_length;
    let window = modified_hann(n)?;
    let frames = spec.n_frames();
    let bins = spec.n_bins();
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(n);

    let mut out = vec![0.0; n + (frames - 1) * config.hop];
    let mut buffer = vec![Complex64::new(0.0, 0.0); n];
    let values = spec.values();
    for t in 0..frames {
        for f in 0..bins {
            buffer[f] = values[[f, t]];
        }
        // DC and Nyquist must be real for a real frame.
        buffer[0].im = 0.0;
        buffer[bins - 1].im = 0.0;
        for f in bins..n {
            buffer[f] = buffer[n - f].conj();
        }
        ifft.process(&mut buffer);
        let start = t * config.hop;
        for (i, c) in buffer.iter().enumerate() {
            out[start + i] += window[i] * c.re / n as f64;
        }
    }
    Ok(out)
}
