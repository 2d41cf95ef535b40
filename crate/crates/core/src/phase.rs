//! Sinusoidal phase model: peak frequency estimation on spectral templates,
//! regions of influence, temporal phase unwrapping and the repeated-event
//! onset phase model, together with their penalty costs.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::ops::Range;

use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::stft::StftConfig;

/// Peaks below `max / PEAK_THRESHOLD_RATIO` are ignored.
pub const PEAK_THRESHOLD_RATIO: f64 = 100.0;

/// Floor applied to magnitudes before taking logs.
pub const LOG_FLOOR: f64 = 1e-12;

/// Frames where a source starts an event, on the STFT frame grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OnsetDomain {
    frames: BTreeSet<usize>,
    n_frames: usize,
}

impl OnsetDomain {
    pub fn new(frames: impl IntoIterator<Item = usize>, n_frames: usize) -> Result<Self> {
        let frames: BTreeSet<usize> = frames.into_iter().collect();
        if let Some(&last) = frames.iter().next_back() {
            if last >= n_frames {
                return Err(Error::Validation(format!(
                    "onset frame {last} is outside [0, {}]",
                    n_frames.saturating_sub(1)
                )));
            }
        }
        Ok(Self { frames, n_frames })
    }

    pub fn empty(n_frames: usize) -> Self {
        Self {
            frames: BTreeSet::new(),
            n_frames,
        }
    }

    pub fn contains(&self, t: usize) -> bool {
        self.frames.contains(&t)
    }

    pub fn frames(&self) -> impl Iterator<Item = usize> + '_ {
        self.frames.iter().copied()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    /// 1 on onset frames, 0 elsewhere.
    pub fn indicator(&self) -> Array1<f64> {
        Array1::from_shape_fn(self.n_frames, |t| if self.contains(t) { 1.0 } else { 0.0 })
    }

    /// 1 off onset frames, 0 on them.
    pub fn complement(&self) -> Array1<f64> {
        self.indicator().mapv(|v| 1.0 - v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    /// Refined, fractional bin index.
    pub bin: f64,
    pub amplitude: f64,
}

/// Vertex offset of the parabola through `(-1, a)`, `(0, b)`, `(1, c)`,
/// clipped to half a bin.
pub fn parabolic_offset(a: f64, b: f64, c: f64) -> f64 {
    let denom = a - 2.0 * b + c;
    if denom >= 0.0 {
        return 0.0;
    }
    (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
}

/// Quadratic interpolated FFT peak picking on a magnitude spectrum.
///
/// Strict local maxima at or above `max / 100` are refined on log magnitudes.
/// The global maximum is always reported, unrefined if it is not a strict
/// interior maximum. Peaks come back sorted by bin.
pub fn qifft_peaks(w: &[f64]) -> Result<Vec<Peak>> {
    if w.len() < 3 {
        return Err(Error::Config(format!(
            "peak estimation needs at least 3 bins, got {}",
            w.len()
        )));
    }
    if w.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::Domain("spectral magnitudes must be nonnegative".into()));
    }
    let log = |v: f64| v.max(LOG_FLOOR).ln();
    let (global, max) = w
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::MIN), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    let threshold = max / PEAK_THRESHOLD_RATIO;

    let mut peaks = Vec::new();
    let mut has_global = false;
    for m in 1..w.len() - 1 {
        if w[m] > w[m - 1] && w[m] > w[m + 1] && w[m] >= threshold {
            let (a, b, c) = (log(w[m - 1]), log(w[m]), log(w[m + 1]));
            let p = parabolic_offset(a, b, c);
            let amplitude = (b - 0.25 * (a - c) * p).exp();
            peaks.push(Peak {
                bin: m as f64 + p,
                amplitude,
            });
            has_global |= m == global;
        }
    }
    if !has_global {
        peaks.push(Peak {
            bin: global as f64,
            amplitude: max,
        });
        peaks.sort_by(|a, b| a.bin.total_cmp(&b.bin));
    }
    Ok(peaks)
}

/// Per-channel unwrapping frequencies for one source.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyMap {
    /// Normalized frequency (cycles per sample) used in each channel.
    pub nu: Array1<f64>,
    /// `exp(2i pi hop nu)`, the expected per-frame phase advance.
    pub mu: Array1<Complex64>,
    /// Channel interval owned by each peak, in peak order.
    pub regions: Vec<Range<usize>>,
}

impl FrequencyMap {
    pub fn from_nu(nu: Array1<f64>, hop: usize) -> Self {
        let mu = nu.mapv(|v| Complex64::from_polar(1.0, 2.0 * PI * hop as f64 * v));
        let regions = vec![0..nu.len()];
        Self { nu, mu, regions }
    }
}

/// Splits the channels into regions of influence, one per peak, bounded at
/// the midpoints between consecutive rounded peak bins. Every channel is
/// unwrapped with its owner's refined frequency.
pub fn regions_of_influence(peaks: &[f64], config: &StftConfig) -> Result<FrequencyMap> {
    if peaks.is_empty() {
        return Err(Error::Config("regions of influence need at least one peak".into()));
    }
    let n_bins = config.n_bins();
    let n = config.window_length as f64;
    let mut sorted = peaks.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let rounded: Vec<f64> = sorted.iter().map(|p| p.round()).collect();

    let mut regions = Vec::with_capacity(sorted.len());
    let mut start = 0usize;
    for i in 0..sorted.len() {
        let end = if i + 1 < sorted.len() {
            let mid = 0.5 * (rounded[i] + rounded[i + 1]);
            (mid.ceil().max(0.0) as usize).clamp(start, n_bins)
        } else {
            n_bins
        };
        regions.push(start..end);
        start = end;
    }

    let mut nu = Array1::zeros(n_bins);
    for (region, peak) in regions.iter().zip(&sorted) {
        let value = (peak / n).clamp(0.0, 0.5);
        for f in region.clone() {
            nu[f] = value;
        }
    }
    let mut map = FrequencyMap::from_nu(nu, config.hop);
    map.regions = regions;
    Ok(map)
}

/// Peak estimation followed by region assignment on a spectral template.
pub fn frequency_map(w: &[f64], config: &StftConfig) -> Result<FrequencyMap> {
    let peaks: Vec<f64> = qifft_peaks(w)?.into_iter().map(|p| p.bin).collect();
    regions_of_influence(&peaks, config)
}

/// Builds a phase field by the recursion `phi(f, t) = phi(f, t-1) + 2 pi hop nu(f)`,
/// resetting to the supplied vector at the listed onset frames.
pub fn unwrap_phase(
    initial: &[f64],
    nu: &[f64],
    hop: usize,
    n_frames: usize,
    onset_reset: &[(usize, Vec<f64>)],
) -> Result<Array2<f64>> {
    if n_frames == 0 {
        return Err(Error::Config("unwrapping needs at least one frame".into()));
    }
    if initial.len() != nu.len() || onset_reset.iter().any(|(_, v)| v.len() != nu.len()) {
        return Err(Error::Shape("phase vectors and frequencies differ in length".into()));
    }
    let n_bins = nu.len();
    let mut phase = Array2::zeros((n_bins, n_frames));
    for f in 0..n_bins {
        phase[[f, 0]] = initial[f];
    }
    for t in 1..n_frames {
        let reset = onset_reset.iter().find(|(frame, _)| *frame == t);
        for f in 0..n_bins {
            phase[[f, t]] = match reset {
                Some((_, v)) => v[f],
                None => phase[[f, t - 1]] + 2.0 * PI * hop as f64 * nu[f],
            };
        }
    }
    Ok(phase)
}

/// Unit-modulus field `exp(i phi)`.
pub fn unit_phasors(phase: &Array2<f64>) -> Array2<Complex64> {
    phase.mapv(|p| Complex64::from_polar(1.0, p))
}

/// Onset-masked Vandermonde field `Lambda(f, t) = 1_k(t) exp(i f lambda(t))`.
pub fn offset_field(lambda: &Array1<f64>, onsets: &OnsetDomain, n_bins: usize) -> Array2<Complex64> {
    let mut out = Array2::zeros((n_bins, lambda.len()));
    for t in onsets.frames() {
        for f in 0..n_bins {
            out[[f, t]] = Complex64::from_polar(1.0, f as f64 * lambda[t]);
        }
    }
    out
}

fn check_sources(x_mag: &Array2<f64>, phases: &[Array2<Complex64>], onsets: &[OnsetDomain]) -> Result<()> {
    if phases.len() != onsets.len() {
        return Err(Error::Shape(format!(
            "{} phase fields but {} onset domains",
            phases.len(),
            onsets.len()
        )));
    }
    if phases.iter().any(|p| p.dim() != x_mag.dim()) || onsets.iter().any(|o| o.n_frames() != x_mag.ncols()) {
        return Err(Error::Shape("phase fields or onsets do not match the mixture".into()));
    }
    Ok(())
}

/// `sum_{f,k} sum_{t not onset, t >= 1} |X|^2 |Phi(f,t) conj(Phi(f,t-1)) - mu(f)|^2`.
pub fn unwrapping_cost(
    x_mag: &Array2<f64>,
    phases: &[Array2<Complex64>],
    mu: &[Array1<Complex64>],
    onsets: &[OnsetDomain],
) -> Result<f64> {
    check_sources(x_mag, phases, onsets)?;
    if mu.len() != phases.len() || mu.iter().any(|m| m.len() != x_mag.nrows()) {
        return Err(Error::Shape("unwrapping frequencies do not match".into()));
    }
    let (n_bins, n_frames) = x_mag.dim();
    let mut total = 0.0;
    for ((phi, mu), onsets) in phases.iter().zip(mu).zip(onsets) {
        for t in 1..n_frames {
            if onsets.contains(t) {
                continue;
            }
            for f in 0..n_bins {
                let weight = x_mag[[f, t]] * x_mag[[f, t]];
                total += weight * (phi[[f, t]] * phi[[f, t - 1]].conj() - mu[f]).norm_sqr();
            }
        }
    }
    Ok(total)
}

/// `sum_{f,k} sum_{t onset} |X|^2 |Phi(f,t) - Psi(f) exp(i lambda(t) f)|^2`.
pub fn repetition_cost(
    x_mag: &Array2<f64>,
    phases: &[Array2<Complex64>],
    psi: &[Array1<Complex64>],
    lambda: &[Array1<f64>],
    onsets: &[OnsetDomain],
) -> Result<f64> {
    check_sources(x_mag, phases, onsets)?;
    if psi.len() != phases.len()
        || lambda.len() != phases.len()
        || psi.iter().any(|p| p.len() != x_mag.nrows())
        || lambda.iter().any(|l| l.len() != x_mag.ncols())
    {
        return Err(Error::Shape("repetition parameters do not match".into()));
    }
    let n_bins = x_mag.nrows();
    let mut total = 0.0;
    for (k, phi) in phases.iter().enumerate() {
        for t in onsets[k].frames() {
            for f in 0..n_bins {
                let weight = x_mag[[f, t]] * x_mag[[f, t]];
                let model = psi[k][f] * Complex64::from_polar(1.0, lambda[k][t] * f as f64);
                total += weight * (phi[[f, t]] - model).norm_sqr();
            }
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stft::{stft, StftConfig};
    use approx::assert_abs_diff_eq;

    fn spectrum_with_logs(center: usize, logs: [f64; 3], len: usize) -> Vec<f64> {
        let mut w = vec![1e-6; len];
        w[center - 1] = logs[0].exp();
        w[center] = logs[1].exp();
        w[center + 1] = logs[2].exp();
        w
    }

    #[test]
    fn symmetric_parabola_peaks_on_bin() {
        let w = spectrum_with_logs(10, [-2.0, 0.0, -2.0], 20);
        let peaks = qifft_peaks(&w).unwrap();
        assert_eq!(peaks.len(), 1);
        assert_abs_diff_eq!(peaks[0].bin, 10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(peaks[0].amplitude, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn asymmetric_parabola_offset() {
        // p = 0.5 (a - c) / (a - 2b + c) = 0.5 * (-2) / (-4)
        assert_abs_diff_eq!(parabolic_offset(-3.0, 0.0, -1.0), 0.25, epsilon = 1e-15);
        let w = spectrum_with_logs(10, [-3.0, 0.0, -1.0], 20);
        let peaks = qifft_peaks(&w).unwrap();
        assert_abs_diff_eq!(peaks[0].bin, 10.25, epsilon = 1e-12);
    }

    #[test]
    fn offset_is_clipped() {
        assert_eq!(parabolic_offset(0.0, 0.0, 0.0), 0.0);
        assert!(parabolic_offset(-1e-9, 0.0, -10.0).abs() <= 0.5);
    }

    #[test]
    fn flat_spectrum_reports_global_max() {
        let peaks = qifft_peaks(&[1.0; 8]).unwrap();
        assert_eq!(peaks, vec![Peak { bin: 0.0, amplitude: 1.0 }]);
        let ramp: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let peaks = qifft_peaks(&ramp).unwrap();
        assert_eq!(peaks.len(), 1);
        assert_eq!(peaks[0].bin, 7.0);
    }

    #[test]
    fn small_peaks_are_thresholded() {
        let mut w = vec![0.0; 30];
        w[5] = 1.0;
        w[20] = 0.009;
        w[25] = 0.02;
        let bins: Vec<f64> = qifft_peaks(&w).unwrap().iter().map(|p| p.bin.round()).collect();
        assert_eq!(bins, vec![5.0, 25.0]);
        assert!(qifft_peaks(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn off_bin_sinusoid_frequency() {
        let cfg = StftConfig::default();
        for &true_bin in &[30.3, 57.77, 101.5, 12.9] {
            let nu0 = true_bin / 512.0;
            let x: Vec<f64> = (0..4096).map(|n| (2.0 * PI * nu0 * n as f64 + 0.4).cos()).collect();
            let spec = stft(&x, &cfg).unwrap();
            let mag = spec.magnitude();
            let col: Vec<f64> = mag.column(5).to_vec();
            let peaks = qifft_peaks(&col).unwrap();
            let best = peaks.iter().max_by(|a, b| a.amplitude.total_cmp(&b.amplitude)).unwrap();
            assert!((best.bin - true_bin).abs() < 0.1, "{} vs {true_bin}", best.bin);
        }
    }

    #[test]
    fn single_peak_owns_everything() {
        let cfg = StftConfig::new(32, 8, 8000).unwrap();
        let map = regions_of_influence(&[8.0], &cfg).unwrap();
        assert_eq!(map.nu.len(), 17);
        assert!(map.nu.iter().all(|v| *v == 0.25));
        assert_eq!(map.regions, vec![0..17]);
    }

    #[test]
    fn midpoint_boundaries() {
        let cfg = StftConfig::new(32, 8, 8000).unwrap();
        let map = regions_of_influence(&[12.0, 4.0], &cfg).unwrap();
        assert_eq!(map.regions, vec![0..8, 8..17]);
        for f in 0..17 {
            let expected = if f < 8 { 4.0 / 32.0 } else { 12.0 / 32.0 };
            assert_eq!(map.nu[f], expected);
        }
        let map = regions_of_influence(&[4.0, 5.0], &cfg).unwrap();
        assert_eq!(map.regions, vec![0..5, 5..17]);
    }

    #[test]
    fn regions_partition_channels() {
        let cfg = StftConfig::default();
        let map = regions_of_influence(&[3.2, 3.4, 40.0, 41.0, 200.7, 256.0], &cfg).unwrap();
        let mut next = 0;
        for r in &map.regions {
            assert_eq!(r.start, next);
            next = r.end;
        }
        assert_eq!(next, cfg.n_bins());
        assert!(map.mu.iter().all(|m| (m.norm() - 1.0).abs() < 1e-12));
        assert!(map.nu.iter().all(|v| (0.0..=0.5).contains(v)));
    }

    #[test]
    fn unwrap_with_zero_frequency_is_constant() {
        let p = unwrap_phase(&[0.3, -1.0], &[0.0, 0.0], 128, 5, &[]).unwrap();
        for t in 0..5 {
            assert_eq!(p[[0, t]], 0.3);
            assert_eq!(p[[1, t]], -1.0);
        }
    }

    #[test]
    fn unwrap_increment_and_reset() {
        let p = unwrap_phase(&[0.0], &[1.0 / 512.0], 128, 4, &[(2, vec![5.0])]).unwrap();
        assert_abs_diff_eq!(p[[0, 1]] - p[[0, 0]], PI / 2.0, epsilon = 1e-15);
        assert_eq!(p[[0, 2]], 5.0);
        assert_abs_diff_eq!(p[[0, 3]], 5.0 + PI / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn unwrap_matches_stft_phase_of_centered_sinusoid() {
        let cfg = StftConfig::default();
        let bin = 37usize;
        let x: Vec<f64> = (0..8000)
            .map(|n| 0.8 * (2.0 * PI * bin as f64 * n as f64 / 512.0 + 1.1).cos())
            .collect();
        let spec = stft(&x, &cfg).unwrap();
        let frames = spec.n_frames() - 1;
        let nu = vec![bin as f64 / 512.0];
        let start = vec![spec.values()[[bin, 0]].arg()];
        let model = unwrap_phase(&start, &nu, cfg.hop, frames, &[]).unwrap();
        for t in 0..frames {
            let diff = spec.values()[[bin, t]].arg() - model[[0, t]];
            assert!(diff.sin().abs() < 1e-6 && diff.cos() > 0.0, "frame {t}");
        }
    }

    fn single_source(x_mag: Array2<f64>, phase: Array2<f64>, onsets: Vec<usize>) -> (Array2<f64>, Vec<Array2<Complex64>>, Vec<OnsetDomain>) {
        let t = x_mag.ncols();
        (x_mag, vec![unit_phasors(&phase)], vec![OnsetDomain::new(onsets, t).unwrap()])
    }

    #[test]
    fn unwrapping_cost_of_model_phase_is_zero() {
        let nu = vec![0.01, 0.1, 0.37];
        let phase = unwrap_phase(&[0.1, 2.0, -3.0], &nu, 128, 6, &[(3, vec![1.0, 1.0, 1.0])]).unwrap();
        let mu = FrequencyMap::from_nu(Array1::from(nu), 128).mu;
        let (mag, phases, onsets) = single_source(Array2::from_elem((3, 6), 1.7), phase, vec![3]);
        let cost = unwrapping_cost(&mag, &phases, std::slice::from_ref(&mu), &onsets).unwrap();
        assert!(cost < 1e-12);
        // without the onset the reset frame is penalized
        let onsets = vec![OnsetDomain::empty(6)];
        assert!(unwrapping_cost(&mag, &phases, &[mu], &onsets).unwrap() > 1.0);
    }

    #[test]
    fn unwrapping_cost_hand_values() {
        let phase = Array2::from_shape_vec((1, 2), vec![0.0, PI]).unwrap();
        let mu = Array1::from(vec![Complex64::new(1.0, 0.0)]);
        let (mag, phases, onsets) = single_source(Array2::ones((1, 2)), phase, vec![]);
        let c1 = unwrapping_cost(&mag, &phases, std::slice::from_ref(&mu), &onsets).unwrap();
        assert_abs_diff_eq!(c1, 4.0, epsilon = 1e-12);
        let c2 = unwrapping_cost(&(mag * 2.0), &phases, &[mu], &onsets).unwrap();
        assert_abs_diff_eq!(c2, 16.0, epsilon = 1e-12);
    }

    #[test]
    fn repetition_cost_values() {
        let n_bins = 4;
        let psi_angle = [0.2, -1.0, 2.5, 0.0];
        let lambda0 = 0.3;
        let mut phase = Array2::zeros((n_bins, 3));
        for f in 0..n_bins {
            phase[[f, 1]] = psi_angle[f] + lambda0 * f as f64;
            phase[[f, 0]] = 1.0;
            phase[[f, 2]] = -2.0;
        }
        let psi = Array1::from_iter(psi_angle.iter().map(|a| Complex64::from_polar(1.0, *a)));
        let lambda = Array1::from(vec![0.0, lambda0, 0.0]);
        let (mag, phases, onsets) = single_source(Array2::ones((n_bins, 3)), phase.clone(), vec![1]);
        let c = repetition_cost(&mag, &phases, std::slice::from_ref(&psi), std::slice::from_ref(&lambda), &onsets).unwrap();
        assert!(c < 1e-12);

        let empty = vec![OnsetDomain::empty(3)];
        assert_eq!(repetition_cost(&mag, &phases, std::slice::from_ref(&psi), std::slice::from_ref(&lambda), &empty).unwrap(), 0.0);

        let mut off = phase;
        off[[2, 1]] += PI;
        let (mag, phases, onsets) = single_source(Array2::ones((n_bins, 3)), off, vec![1]);
        let c = repetition_cost(&mag, &phases, &[psi], &[lambda], &onsets).unwrap();
        assert_abs_diff_eq!(c, 4.0, epsilon = 1e-12);
    }

    #[test]
    fn onset_domain_bounds() {
        assert!(OnsetDomain::new([0, 9], 10).is_ok());
        assert!(matches!(OnsetDomain::new([10], 10), Err(Error::Validation(_))));
        let d = OnsetDomain::new([1, 3], 5).unwrap();
        let sum = d.indicator() + d.complement();
        assert!(sum.iter().all(|v| *v == 1.0));
        assert_eq!(d.indicator().to_vec(), vec![0.0, 1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn offset_field_is_masked_vandermonde() {
        let d = OnsetDomain::new([2], 4).unwrap();
        let lambda = Array1::from(vec![0.5, 0.1, -0.7, 2.0]);
        let field = offset_field(&lambda, &d, 5);
        for f in 0..5 {
            for t in 0..4 {
                if t == 2 {
                    let expected = Complex64::from_polar(1.0, -0.7).powi(f as i32);
                    assert!((field[[f, t]] - expected).norm() < 1e-12);
                } else {
                    assert_eq!(field[[f, t]], Complex64::new(0.0, 0.0));
                }
            }
        }
    }
}
