//! Complex NMF under phase constraints.
//!
//! Cyclic coordinate descent over, for each source `k`: the unwrapping
//! frequencies `mu_k` (peak picking on `W_k`), the reference phase `Psi_k`,
//! the onset offsets `Lambda_k`, the phase field `Phi_k`, then `W_k` and
//! `H_k` with projection onto the nonnegative orthant and unit-norm
//! normalization of `W_k`. The objective is
//!
//! ```text
//! ||X - sum_k X_k||^2 + sigma_u C_u + sigma_r C_r + sigma_s C_s
//! ```
//!
//! with `C_u` the unwrapping penalty, `C_r` the onset repetition penalty and
//! `C_s = 2 sum H^p`.

use std::f64::consts::PI;

use log::debug;
use ndarray::{Array1, Array2, Zip};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cnmf::{check_sparsity_exponent, row_power_sum, squared_distance, ComplexModel};
use crate::error::{Error, Result};
use crate::nmf::FactorModel;
use crate::phase::{frequency_map, offset_field, repetition_cost, unwrapping_cost, FrequencyMap, OnsetDomain};
use crate::stft::{ComplexSpectrogram, StftConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationConfig {
    pub n_sources: usize,
    pub sigma_u: f64,
    pub sigma_r: f64,
    /// `None` selects `||X||^2 K^-(1 - p/2) 1e-5`.
    pub sigma_s: Option<f64>,
    pub sparsity_exponent: f64,
    pub outer_iterations: usize,
    pub init_nmf_iterations: usize,
    pub eps_guard: f64,
    pub seed: u64,
    /// Stop once the relative cost decrease of a sweep falls below this.
    pub tolerance: Option<f64>,
}

impl Default for SeparationConfig {
    fn default() -> Self {
        Self {
            n_sources: 2,
            sigma_u: 0.2,
            sigma_r: 0.2,
            sigma_s: None,
            sparsity_exponent: 1.0,
            outer_iterations: 10,
            init_nmf_iterations: 30,
            eps_guard: 1e-12,
            seed: 0,
            tolerance: None,
        }
    }
}

impl SeparationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_sources == 0 {
            return Err(Error::Config("at least one source is required".into()));
        }
        check_sparsity_exponent(self.sparsity_exponent)?;
        for (name, value) in [
            ("sigma_u", self.sigma_u),
            ("sigma_r", self.sigma_r),
            ("sigma_s", self.sigma_s.unwrap_or(0.0)),
        ] {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {value}")));
            }
        }
        if !(self.eps_guard > 0.0) {
            return Err(Error::Config("eps_guard must be positive".into()));
        }
        if self.init_nmf_iterations == 0 {
            return Err(Error::Config("at least one NMF initialization iteration is required".into()));
        }
        Ok(())
    }

    pub fn penalties(&self, x: &ComplexSpectrogram) -> Penalties {
        Penalties {
            sigma_u: self.sigma_u,
            sigma_r: self.sigma_r,
            sigma_s: self.sigma_s.unwrap_or_else(|| {
                default_sigma_s(x.energy(), self.n_sources, self.sparsity_exponent)
            }),
            p: self.sparsity_exponent,
        }
    }
}

/// `||X||^2 K^-(1 - p/2) 1e-5`.
pub fn default_sigma_s(energy: f64, n_sources: usize, p: f64) -> f64 {
    energy * (n_sources as f64).powf(-(1.0 - p / 2.0)) * 1e-5
}

/// Resolved penalty weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Penalties {
    pub sigma_u: f64,
    pub sigma_r: f64,
    pub sigma_s: f64,
    pub p: f64,
}

/// All parameters of one source.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceModel {
    pub w: Array1<f64>,
    pub h: Array1<f64>,
    pub phi: Array2<Complex64>,
    pub psi: Array1<Complex64>,
    /// Onset offset slopes in radians per bin; zero off the onset domain.
    pub lambda: Array1<f64>,
    /// `1_k(t) exp(i f lambda(t))`.
    pub lambda_field: Array2<Complex64>,
    pub nu: Array1<f64>,
    pub mu: Array1<Complex64>,
    pub onsets: OnsetDomain,
}

impl SourceModel {
    pub fn magnitude(&self) -> Array2<f64> {
        crate::nmf::outer(&self.w, &self.h)
    }

    /// `(W_k H_k) * Phi_k`.
    pub fn estimate(&self) -> Array2<Complex64> {
        let mut out = self.phi.clone();
        for ((f, t), c) in out.indexed_iter_mut() {
            *c *= self.w[f] * self.h[t];
        }
        out
    }

    pub fn set_frequencies(&mut self, map: FrequencyMap) {
        self.nu = map.nu;
        self.mu = map.mu;
    }
}

/// Result of a separation run.
#[derive(Debug, Clone)]
pub struct Separation {
    pub sources: Vec<SourceModel>,
    /// Objective at initialization and after every sweep.
    pub cost_trace: Vec<f64>,
    pub penalties: Penalties,
    pub stft: StftConfig,
}

impl Separation {
    pub fn estimates(&self) -> Result<Vec<ComplexSpectrogram>> {
        self.sources
            .iter()
            .map(|s| ComplexSpectrogram::new(s.estimate(), self.stft))
            .collect()
    }

    pub fn to_complex_model(&self) -> Result<ComplexModel> {
        let n_bins = self.sources[0].w.len();
        let n_frames = self.sources[0].h.len();
        let rank = self.sources.len();
        let mut w = Array2::zeros((n_bins, rank));
        let mut h = Array2::zeros((rank, n_frames));
        for (k, s) in self.sources.iter().enumerate() {
            w.column_mut(k).assign(&s.w);
            h.row_mut(k).assign(&s.h);
        }
        ComplexModel::new(
            FactorModel::new(w, h)?,
            self.sources.iter().map(|s| s.phi.clone()).collect(),
        )
    }
}

/// `B_k = X - sum_{l != k} X_l`.
pub fn residual(x: &Array2<Complex64>, estimates: &[Array2<Complex64>], k: usize) -> Array2<Complex64> {
    let mut b = x.clone();
    for (l, e) in estimates.iter().enumerate() {
        if l != k {
            b -= e;
        }
    }
    b
}

/// Full objective for the current source set.
pub fn total_cost(x: &ComplexSpectrogram, sources: &[SourceModel], penalties: &Penalties) -> Result<f64> {
    let mut estimate = Array2::<Complex64>::zeros(x.values().dim());
    for s in sources {
        estimate += &s.estimate();
    }
    let mut cost = squared_distance(x.values(), &estimate);
    let x_mag = x.magnitude();
    let phases: Vec<Array2<Complex64>> = sources.iter().map(|s| s.phi.clone()).collect();
    let onsets: Vec<OnsetDomain> = sources.iter().map(|s| s.onsets.clone()).collect();
    if penalties.sigma_u > 0.0 {
        let mu: Vec<Array1<Complex64>> = sources.iter().map(|s| s.mu.clone()).collect();
        cost += penalties.sigma_u * unwrapping_cost(&x_mag, &phases, &mu, &onsets)?;
    }
    if penalties.sigma_r > 0.0 {
        let psi: Vec<Array1<Complex64>> = sources.iter().map(|s| s.psi.clone()).collect();
        let lambda: Vec<Array1<f64>> = sources.iter().map(|s| s.lambda.clone()).collect();
        cost += penalties.sigma_r * repetition_cost(&x_mag, &phases, &psi, &lambda, &onsets)?;
    }
    if penalties.sigma_s > 0.0 {
        cost += penalties.sigma_s
            * 2.0
            * sources.iter().map(|s| row_power_sum(&s.h, penalties.p)).sum::<f64>();
    }
    Ok(cost)
}

/// Reference phase: `Psi(f) = phase of sum_{t in onsets} |X|^2 Phi(f,t) conj(Lambda(f,t))`.
/// Channels with a zero accumulator keep their previous value.
pub fn update_psi(source: &SourceModel, x_pow: &Array2<f64>) -> Array1<Complex64> {
    let mut psi = source.psi.clone();
    for f in 0..psi.len() {
        let acc: Complex64 = source
            .onsets
            .frames()
            .map(|t| source.phi[[f, t]] * source.lambda_field[[f, t]].conj() * x_pow[[f, t]])
            .sum();
        let n = acc.norm();
        if n > 0.0 {
            psi[f] = acc / n;
        }
    }
    psi
}

/// Onset offsets from the phase increments between adjacent channels:
/// `z(t) = sum_f |X(f,t)| |X(f+1,t)| conj(Phi(f,t)) Phi(f+1,t) Psi(f) conj(Psi(f+1))`,
/// `lambda(t) = arg z(t)` on onset frames (0 elsewhere or when `z(t) = 0`).
pub fn update_lambda(source: &SourceModel, x_mag: &Array2<f64>) -> (Array1<f64>, Array2<Complex64>) {
    let (n_bins, n_frames) = source.phi.dim();
    let mut lambda = Array1::zeros(n_frames);
    for t in source.onsets.frames() {
        let z: Complex64 = (0..n_bins.saturating_sub(1))
            .map(|f| {
                let reference = source.psi[f] * source.psi[f + 1].conj();
                let increment = source.phi[[f, t]].conj() * source.phi[[f + 1, t]];
                reference * increment * (x_mag[[f, t]] * x_mag[[f + 1, t]])
            })
            .sum();
        if z.norm() > 0.0 {
            lambda[t] = z.arg();
        }
    }
    let field = offset_field(&lambda, &source.onsets, n_bins);
    (lambda, field)
}

/// Phase update:
/// `rho = sigma_r Psi 1_k * Lambda + sigma_u mu (1 - 1_k) * Phi(., t-1)`,
/// `Phi = normalize(B * WH + (WH)^2 * rho)`. Bins with a zero numerator keep
/// their previous phase. `Phi(., -1)` is taken as zero.
///
/// Frames are visited in increasing order and `Phi(., t-1)` is the value
/// already updated in this pass, so with `B = 0` the result follows the
/// unwrapping recursion across the whole segment.
pub fn update_phi(source: &SourceModel, b: &Array2<Complex64>, sigma_u: f64, sigma_r: f64) -> Array2<Complex64> {
    let (n_bins, n_frames) = source.phi.dim();
    let mut phi = source.phi.clone();
    for t in 0..n_frames {
        let onset = source.onsets.contains(t);
        for f in 0..n_bins {
            let v = source.w[f] * source.h[t];
            let rho = if onset {
                source.psi[f] * source.lambda_field[[f, t]] * sigma_r
            } else if t > 0 {
                source.mu[f] * phi[[f, t - 1]] * sigma_u
            } else {
                Complex64::new(0.0, 0.0)
            };
            let numer = b[[f, t]] * v + rho * (v * v);
            let n = numer.norm();
            if n > 0.0 && n.is_finite() {
                phi[[f, t]] = numer / n;
            }
        }
    }
    phi
}

/// `beta = Re(B * conj(Phi))`.
pub fn projected_residual(b: &Array2<Complex64>, phi: &Array2<Complex64>) -> Array2<f64> {
    let mut beta = Array2::zeros(b.dim());
    Zip::from(&mut beta)
        .and(b)
        .and(phi)
        .for_each(|out, b, p| *out = (b * p.conj()).re);
    beta
}

/// `W(f) = max(0, sum_t beta(f,t) H(t) / sum_t H(t)^2)`; unchanged when `H = 0`.
pub fn update_w(source: &SourceModel, beta: &Array2<f64>, eps: f64) -> Array1<f64> {
    let denom: f64 = source.h.iter().map(|v| v * v).sum();
    if denom == 0.0 {
        return source.w.clone();
    }
    let numer = beta.dot(&source.h);
    numer.mapv(|n| (n / (denom + eps)).max(0.0))
}

/// `H(t) = max(0, sum_f W(f) beta(f,t) / (p sigma_s H(t)^(p-2) + sum_f W(f)^2))`,
/// with `H` floored at `eps` before the power. Frames with a zero denominator
/// are left unchanged.
pub fn update_h(source: &SourceModel, beta: &Array2<f64>, sigma_s: f64, p: f64, eps: f64) -> Array1<f64> {
    let w_energy: f64 = source.w.iter().map(|v| v * v).sum();
    let numer = beta.t().dot(&source.w);
    Array1::from_shape_fn(source.h.len(), |t| {
        let current = source.h[t];
        let sparsity = if sigma_s > 0.0 {
            p * sigma_s * current.max(eps).powf(p - 2.0)
        } else {
            0.0
        };
        let denom = sparsity + w_energy;
        if denom == 0.0 {
            current
        } else {
            (numer[t] / (denom + eps)).max(0.0)
        }
    })
}

/// Rescales to `||W_k||_2 = 1`, moving the norm into `H_k`.
pub fn normalize_factors(source: &mut SourceModel) {
    let norm = source.w.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        source.w.mapv_inplace(|v| v / norm);
        source.h.mapv_inplace(|v| v * norm);
    }
}

fn ensure_finite<'a>(
    update: &'static str,
    k: usize,
    mut values: impl Iterator<Item = &'a f64>,
) -> Result<()> {
    if values.any(|v| !v.is_finite()) {
        return Err(Error::Numerical {
            update,
            detail: format!("non-finite value in source {k}"),
        });
    }
    Ok(())
}

fn ensure_finite_complex<'a>(
    update: &'static str,
    k: usize,
    mut values: impl Iterator<Item = &'a Complex64>,
) -> Result<()> {
    if values.any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(Error::Numerical {
            update,
            detail: format!("non-finite value in source {k}"),
        });
    }
    Ok(())
}

/// Builds the initial source set from a complex model, drawing `psi` and
/// `lambda` uniformly in `[-pi, pi)`.
pub fn initial_sources(
    model: &ComplexModel,
    onsets: &[OnsetDomain],
    stft: &StftConfig,
    seed: u64,
) -> Result<Vec<SourceModel>> {
    let n_bins = model.factors.w.nrows();
    let n_frames = model.factors.h.ncols();
    // Separate stream from the NMF initializer, which uses `seed` directly.
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_9a5e);
    (0..model.rank())
        .map(|k| {
            let w = model.factors.w.column(k).to_owned();
            let h = model.factors.h.row(k).to_owned();
            let psi = Array1::from_shape_simple_fn(n_bins, || {
                Complex64::from_polar(1.0, rng.random_range(-PI..PI))
            });
            let drawn = Array1::from_shape_simple_fn(n_frames, || rng.random_range(-PI..PI));
            let lambda = Array1::from_shape_fn(n_frames, |t| {
                if onsets[k].contains(t) { drawn[t] } else { 0.0 }
            });
            let lambda_field = offset_field(&lambda, &onsets[k], n_bins);
            let map = frequency_map(w.as_slice().expect("contiguous column copy"), stft)?;
            let mut source = SourceModel {
                w,
                h,
                phi: model.phases[k].clone(),
                psi,
                lambda,
                lambda_field,
                nu: map.nu,
                mu: map.mu,
                onsets: onsets[k].clone(),
            };
            normalize_factors(&mut source);
            Ok(source)
        })
        .collect()
}

/// One full sweep over all sources, in place.
pub fn sweep(
    x: &ComplexSpectrogram,
    sources: &mut [SourceModel],
    penalties: &Penalties,
    eps: f64,
) -> Result<()> {
    let x_mag = x.magnitude();
    let x_pow = x_mag.mapv(|v| v * v);
    let stft = *x.config();
    let mut estimates: Vec<Array2<Complex64>> = sources.iter().map(|s| s.estimate()).collect();

    for k in 0..sources.len() {
        // B_k depends only on the other sources, so the refreshes after the
        // phase and normalization steps leave it unchanged within this block.
        let b = residual(x.values(), &estimates, k);
        let source = &mut sources[k];

        let map = frequency_map(source.w.as_slice().expect("owned vector"), &stft)?;
        source.set_frequencies(map);

        source.psi = update_psi(source, &x_pow);
        ensure_finite_complex("Psi", k, source.psi.iter())?;

        let (lambda, field) = update_lambda(source, &x_mag);
        ensure_finite("Lambda", k, lambda.iter())?;
        source.lambda = lambda;
        source.lambda_field = field;

        source.phi = update_phi(source, &b, penalties.sigma_u, penalties.sigma_r);
        ensure_finite_complex("Phi", k, source.phi.iter())?;

        let beta = projected_residual(&b, &source.phi);

        source.w = update_w(source, &beta, eps);
        ensure_finite("W", k, source.w.iter())?;

        source.h = update_h(source, &beta, penalties.sigma_s, penalties.p, eps);
        ensure_finite("H", k, source.h.iter())?;

        normalize_factors(source);
        estimates[k] = source.estimate();
    }
    Ok(())
}

/// Runs the phase-constrained CNMF. Without `init`, `W`, `H` and `Phi` come
/// from KL-NMF followed by Wiener filtering.
pub fn separate(
    x: &ComplexSpectrogram,
    config: &SeparationConfig,
    onsets: &[OnsetDomain],
    init: Option<&ComplexModel>,
) -> Result<Separation> {
    config.validate()?;
    if onsets.len() != config.n_sources {
        return Err(Error::Config(format!(
            "onsets given for {} sources, expected {}",
            onsets.len(),
            config.n_sources
        )));
    }
    if let Some(k) = onsets.iter().position(|o| o.n_frames() != x.n_frames()) {
        return Err(Error::Config(format!(
            "onset domain of source {k} spans {} frames, mixture has {}",
            onsets[k].n_frames(),
            x.n_frames()
        )));
    }
    if x.energy() == 0.0 && x.values().is_empty() {
        return Err(Error::Config("empty mixture".into()));
    }

    let owned;
    let model = match init {
        Some(m) => {
            if m.rank() != config.n_sources
                || m.factors.w.nrows() != x.n_bins()
                || m.factors.h.ncols() != x.n_frames()
            {
                return Err(Error::Shape("initial model does not match mixture".into()));
            }
            m
        }
        None => {
            owned = ComplexModel::from_nmf_wiener(x, config.n_sources, config.init_nmf_iterations, config.seed)?;
            &owned
        }
    };

    let penalties = config.penalties(x);
    let mut sources = initial_sources(model, onsets, x.config(), config.seed)?;
    let mut cost_trace = vec![total_cost(x, &sources, &penalties)?];
    for iteration in 0..config.outer_iterations {
        sweep(x, &mut sources, &penalties, config.eps_guard)?;
        let cost = total_cost(x, &sources, &penalties)?;
        if !cost.is_finite() {
            return Err(Error::Numerical {
                update: "total cost",
                detail: format!("non-finite objective after sweep {iteration}"),
            });
        }
        debug!("sweep {iteration}: cost {cost:.6e}");
        let previous = *cost_trace.last().expect("trace starts non-empty");
        cost_trace.push(cost);
        if let Some(tol) = config.tolerance {
            if (previous - cost).abs() <= tol * previous.abs() {
                break;
            }
        }
    }
    Ok(Separation {
        sources,
        cost_trace,
        penalties,
        stft: *x.config(),
    })
}
