//! Kullback-Leibler NMF with multiplicative updates, and Wiener soft masking.

use ndarray::{Array1, Array2, Axis};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::stft::ComplexSpectrogram;

/// Added to update denominators and used as the floor for factor entries.
pub const EPS_GUARD: f64 = 1e-12;

/// Nonnegative factors `V ~ W H`: `w` is F x K, `h` is K x T.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    pub w: Array2<f64>,
    pub h: Array2<f64>,
}

impl FactorModel {
    pub fn new(w: Array2<f64>, h: Array2<f64>) -> Result<Self> {
        if w.ncols() != h.nrows() || w.ncols() == 0 {
            return Err(Error::Shape(format!(
                "W is {}x{} but H is {}x{}",
                w.nrows(),
                w.ncols(),
                h.nrows(),
                h.ncols()
            )));
        }
        if w.iter().chain(h.iter()).any(|v| !(*v >= 0.0)) {
            return Err(Error::Domain("factor entries must be nonnegative".into()));
        }
        Ok(Self { w, h })
    }

    pub fn rank(&self) -> usize {
        self.w.ncols()
    }

    pub fn reconstruction(&self) -> Array2<f64> {
        self.w.dot(&self.h)
    }

    /// Rank-one magnitude `W_k H_k` of component `k`.
    pub fn component(&self, k: usize) -> Array2<f64> {
        outer(&self.w.column(k).to_owned(), &self.h.row(k).to_owned())
    }
}

pub(crate) fn outer(col: &Array1<f64>, row: &Array1<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((col.len(), row.len()));
    for (f, &a) in col.iter().enumerate() {
        for (t, &b) in row.iter().enumerate() {
            out[[f, t]] = a * b;
        }
    }
    out
}

/// Generalized KL divergence `sum v ln(v / x) - v + x`, with `0 ln 0 = 0`.
pub fn kl_divergence(v: &Array2<f64>, approx: &Array2<f64>) -> f64 {
    v.iter()
        .zip(approx.iter())
        .map(|(&a, &b)| {
            let b = b.max(EPS_GUARD);
            if a > 0.0 {
                a * (a / b).ln() - a + b
            } else {
                b
            }
        })
        .sum()
}

fn check_nonnegative(v: &Array2<f64>) -> Result<()> {
    if let Some(bad) = v.iter().find(|x| !(**x >= 0.0)) {
        return Err(Error::Domain(format!(
            "NMF input must be nonnegative and finite, found {bad}"
        )));
    }
    Ok(())
}

/// Draws `W` and `H` uniformly in (0, 1].
pub fn random_factors(n_bins: usize, n_frames: usize, rank: usize, seed: u64) -> FactorModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |shape: (usize, usize)| {
        Array2::from_shape_simple_fn(shape, || 1.0 - rng.random::<f64>())
    };
    let w = draw((n_bins, rank));
    let h = draw((rank, n_frames));
    FactorModel { w, h }
}

/// Runs `iterations` KL multiplicative updates from a seeded random start.
pub fn kl_nmf(v: &Array2<f64>, rank: usize, iterations: usize, seed: u64) -> Result<FactorModel> {
    kl_nmf_traced(v, rank, iterations, seed).map(|(model, _)| model)
}

/// Like [`kl_nmf`], also returning the divergence before the first and after
/// every iteration (`iterations + 1` values).
pub fn kl_nmf_traced(
    v: &Array2<f64>,
    rank: usize,
    iterations: usize,
    seed: u64,
) -> Result<(FactorModel, Vec<f64>)> {
    check_nonnegative(v)?;
    if rank == 0 || iterations == 0 {
        return Err(Error::Config(format!(
            "KL-NMF needs rank >= 1 and iterations >= 1 (got {rank}, {iterations})"
        )));
    }
    if v.is_empty() {
        return Err(Error::Shape("KL-NMF input is empty".into()));
    }
    let init = random_factors(v.nrows(), v.ncols(), rank, seed);
    kl_nmf_from(v, init, iterations)
}

/// KL multiplicative updates from a given starting point.
pub fn kl_nmf_from(
    v: &Array2<f64>,
    init: FactorModel,
    iterations: usize,
) -> Result<(FactorModel, Vec<f64>)> {
    check_nonnegative(v)?;
    let FactorModel { mut w, mut h } = init;
    if w.nrows() != v.nrows() || h.ncols() != v.ncols() || w.ncols() != h.nrows() {
        return Err(Error::Shape("initial factors do not match the data".into()));
    }

    let mut approx = w.dot(&h);
    let mut trace = Vec::with_capacity(iterations + 1);
    trace.push(kl_divergence(v, &approx));
    for _ in 0..iterations {
        // H <- H * (W^T (V / WH)) / (W^T 1)
        let quotient = data_ratio(v, &approx);
        let numer = w.t().dot(&quotient);
        let w_sum = w.sum_axis(Axis(0));
        for ((k, t), value) in h.indexed_iter_mut() {
            *value = (*value * numer[[k, t]] / (w_sum[k] + EPS_GUARD)).max(EPS_GUARD);
        }
        approx = w.dot(&h);

        // W <- W * ((V / WH) H^T) / (1 H^T)
        let quotient = data_ratio(v, &approx);
        let numer = quotient.dot(&h.t());
        let h_sum = h.sum_axis(Axis(1));
        for ((f, k), value) in w.indexed_iter_mut() {
            *value = (*value * numer[[f, k]] / (h_sum[k] + EPS_GUARD)).max(EPS_GUARD);
        }
        approx = w.dot(&h);
        trace.push(kl_divergence(v, &approx));
    }
    Ok((FactorModel { w, h }, trace))
}

fn data_ratio(v: &Array2<f64>, approx: &Array2<f64>) -> Array2<f64> {
    let mut out = v.clone();
    out.zip_mut_with(approx, |a, &b| *a /= b + EPS_GUARD);
    out
}

/// Power-domain soft masks `(W_k H_k)^2 / sum_l (W_l H_l)^2`, one per component.
/// Bins where every component is zero are split equally.
pub fn wiener_masks(model: &FactorModel) -> Vec<Array2<f64>> {
    let rank = model.rank();
    let powers: Vec<Array2<f64>> = (0..rank)
        .map(|k| model.component(k).mapv(|m| m * m))
        .collect();
    let mut total = Array2::<f64>::zeros(powers[0].dim());
    for p in &powers {
        total += p;
    }
    powers
        .into_iter()
        .map(|mut p| {
            p.zip_mut_with(&total, |m, &d| {
                *m = if d > 0.0 { *m / d } else { 1.0 / rank as f64 };
            });
            p
        })
        .collect()
}

/// Soft-masks the mixture STFT; every estimate keeps the mixture phase.
pub fn wiener_filter(x: &ComplexSpectrogram, model: &FactorModel) -> Result<Vec<ComplexSpectrogram>> {
    if model.w.nrows() != x.n_bins() || model.h.ncols() != x.n_frames() {
        return Err(Error::Shape(format!(
            "factors model {}x{}, mixture is {}x{}",
            model.w.nrows(),
            model.h.ncols(),
            x.n_bins(),
            x.n_frames()
        )));
    }
    wiener_masks(model)
        .into_iter()
        .map(|mask| {
            let mut values = x.values().clone();
            values.zip_mut_with(&mask, |c, &m| *c *= Complex64::new(m, 0.0));
            x.with_values(values)
        })
        .collect()
}
