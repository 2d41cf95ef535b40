//! 16-bit PCM mono WAV files.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use log::warn;

use crate::error::{Error, Result};

const SCALE: f64 = 32768.0;

fn ingestion(path: &Path, reason: impl Into<String>) -> Error {
    Error::Ingestion {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Reads a 16-bit PCM mono file into samples in `[-1, 1)`.
pub fn load_wav(path: impl AsRef<Path>) -> Result<(Vec<f64>, u32)> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = WavReader::new(std::io::BufReader::new(file))
        .map_err(|e| ingestion(path, e.to_string()))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(ingestion(path, format!("expected mono, found {} channels", spec.channels)));
    }
    if spec.sample_format != SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(ingestion(
            path,
            format!(
                "expected 16-bit integer PCM, found {}-bit {:?}",
                spec.bits_per_sample, spec.sample_format
            ),
        ));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f64 / SCALE))
        .collect::<std::result::Result<Vec<f64>, _>>()
        .map_err(|e| ingestion(path, e.to_string()))?;
    if samples.is_empty() {
        return Err(ingestion(path, "file contains no samples"));
    }
    Ok((samples, spec.sample_rate))
}

/// Outcome of [`save_wav`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SaveReport {
    /// Samples outside the representable range that were clipped.
    pub clipped: usize,
}

/// Writes samples as 16-bit PCM mono, clipping to the representable range.
pub fn save_wav(path: impl AsRef<Path>, signal: &[f64], sample_rate: u32) -> Result<SaveReport> {
    let path = path.as_ref();
    if let Some(bad) = signal.iter().find(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("cannot write non-finite sample {bad}")));
    }
    let spec = WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let to_err = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => ingestion(path, other.to_string()),
    };
    let mut writer = WavWriter::create(path, spec).map_err(to_err)?;
    let mut report = SaveReport::default();
    for &x in signal {
        let scaled = (x * SCALE).round();
        let clamped = scaled.clamp(i16::MIN as f64, i16::MAX as f64);
        if x.abs() > 1.0 {
            report.clipped += 1;
        }
        writer.write_sample(clamped as i16).map_err(to_err)?;
    }
    writer.finalize().map_err(to_err)?;
    if report.clipped > 0 {
        warn!("{}: clipped {} samples", path.display(), report.clipped);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn tone_round_trip_within_one_lsb() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tone.wav");
        let x: Vec<f64> = (0..4000)
            .map(|n| 0.9 * (2.0 * PI * 440.0 * n as f64 / 11025.0).sin())
            .collect();
        let report = save_wav(&path, &x, 11025).unwrap();
        assert_eq!(report.clipped, 0);
        let (y, sr) = load_wav(&path).unwrap();
        assert_eq!(sr, 11025);
        assert_eq!(y.len(), x.len());
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() <= 2f64.powi(-15));
        }
    }

    #[test]
    fn out_of_range_samples_are_clipped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("loud.wav");
        let report = save_wav(&path, &[0.0, 1.5, -2.0, 0.5, 1.0], 8000).unwrap();
        assert_eq!(report.clipped, 2);
        let (y, _) = load_wav(&path).unwrap();
        assert!((y[1] - 1.0).abs() <= 2f64.powi(-15));
        assert_eq!(y[2], -1.0);
    }

    #[test]
    fn empty_and_garbage_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let empty = dir.path().join("empty.wav");
        save_wav(&empty, &[], 8000).unwrap();
        assert!(matches!(load_wav(&empty), Err(Error::Ingestion { .. })));
        let zero_bytes = dir.path().join("zero.wav");
        std::fs::write(&zero_bytes, b"").unwrap();
        assert!(matches!(load_wav(&zero_bytes), Err(Error::Ingestion { .. })));
        let garbage = dir.path().join("garbage.wav");
        std::fs::write(&garbage, b"not a wav file at all").unwrap();
        assert!(matches!(load_wav(&garbage), Err(Error::Ingestion { .. })));
        assert!(matches!(load_wav(dir.path().join("missing.wav")), Err(Error::Io { .. })));
    }

    #[test]
    fn stereo_and_float_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stereo.wav");
        let spec = WavSpec { channels: 2, sample_rate: 8000, bits_per_sample: 16, sample_format: SampleFormat::Int };
        let mut w = WavWriter::create(&path, spec).unwrap();
        for _ in 0..8 {
            w.write_sample(0i16).unwrap();
        }
        w.finalize().unwrap();
        let err = load_wav(&path).unwrap_err().to_string();
        assert!(err.contains("mono"), "{err}");

        let path = dir.path().join("float.wav");
        let spec = WavSpec { channels: 1, sample_rate: 8000, bits_per_sample: 32, sample_format: SampleFormat::Float };
        let mut w = WavWriter::create(&path, spec).unwrap();
        w.write_sample(0.5f32).unwrap();
        w.finalize().unwrap();
        assert!(matches!(load_wav(&path), Err(Error::Ingestion { .. })));
    }
}
