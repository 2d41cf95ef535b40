//! Complex NMF model, its Euclidean data term and sparsity penalty, and the
//! unconstrained sparse CNMF baseline.

use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::nmf::{kl_nmf, wiener_filter, FactorModel};
use crate::phase::OnsetDomain;
use crate::separation::{separate, SeparationConfig};
use crate::stft::ComplexSpectrogram;

/// Tolerance on `|Phi| = 1`.
pub const UNIT_TOLERANCE: f64 = 1e-9;

/// `X^(f,t) = sum_k W(f,k) H(k,t) Phi_k(f,t)` with unit-modulus `Phi_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexModel {
    pub factors: FactorModel,
    pub phases: Vec<Array2<Complex64>>,
}

impl ComplexModel {
    pub fn new(factors: FactorModel, phases: Vec<Array2<Complex64>>) -> Result<Self> {
        let shape = (factors.w.nrows(), factors.h.ncols());
        if phases.len() != factors.rank() || phases.iter().any(|p| p.dim() != shape) {
            return Err(Error::Shape(format!(
                "expected {} phase fields of shape {:?}",
                factors.rank(),
                shape
            )));
        }
        if phases
            .iter()
            .flat_map(|p| p.iter())
            .any(|c| !((c.norm() - 1.0).abs() <= UNIT_TOLERANCE))
        {
            return Err(Error::Domain("phase fields must have unit modulus".into()));
        }
        Ok(Self { factors, phases })
    }

    pub fn rank(&self) -> usize {
        self.factors.rank()
    }

    /// `(W_k H_k) * Phi_k`.
    pub fn component(&self, k: usize) -> Array2<Complex64> {
        let mag = self.factors.component(k);
        let mut out = self.phases[k].clone();
        out.zip_mut_with(&mag, |c, &m| *c *= m);
        out
    }

    pub fn reconstruction(&self) -> Array2<Complex64> {
        let mut total = self.component(0);
        for k in 1..self.rank() {
            total += &self.component(k);
        }
        total
    }

    /// The NMF-W starting point: KL-NMF on `|X|`, phases from the Wiener
    /// estimates (the mixture phase; 1 where the mixture is zero).
    pub fn from_nmf_wiener(
        x: &ComplexSpectrogram,
        rank: usize,
        iterations: usize,
        seed: u64,
    ) -> Result<Self> {
        let factors = kl_nmf(&x.magnitude(), rank, iterations, seed)?;
        let phases = wiener_filter(x, &factors)?
            .iter()
            .map(|est| est.values().mapv(unit_or_one))
            .collect();
        Self::new(factors, phases)
    }
}

pub(crate) fn unit_or_one(c: Complex64) -> Complex64 {
    let n = c.norm();
    if n > 0.0 && n.is_finite() {
        c / n
    } else {
        Complex64::new(1.0, 0.0)
    }
}

/// `sum_{f,t} |X - X^|^2`.
pub fn euclidean_cost(x: &ComplexSpectrogram, model: &ComplexModel) -> Result<f64> {
    let estimate = model.reconstruction();
    if estimate.dim() != x.values().dim() {
        return Err(Error::Shape(format!(
            "model is {:?}, mixture is {:?}",
            estimate.dim(),
            x.values().dim()
        )));
    }
    Ok(squared_distance(x.values(), &estimate))
}

pub(crate) fn squared_distance(a: &Array2<Complex64>, b: &Array2<Complex64>) -> f64 {
    a.iter().zip(b.iter()).map(|(u, v)| (u - v).norm_sqr()).sum()
}

pub fn check_sparsity_exponent(p: f64) -> Result<()> {
    if p > 0.0 && p < 2.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("sparsity exponent must lie in (0, 2), got {p}")))
    }
}

/// `2 sum_{k,t} H(k,t)^p`.
pub fn sparsity_penalty(h: &Array2<f64>, p: f64) -> Result<f64> {
    check_sparsity_exponent(p)?;
    if h.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::Domain("activations must be nonnegative".into()));
    }
    Ok(2.0 * h.iter().map(|v| v.powf(p)).sum::<f64>())
}

/// Sparse CNMF without phase constraints: the phase-constrained solver with
/// both phase penalties switched off. Returns the fitted model and the
/// per-iteration objective.
pub fn cnmf_sparse(
    x: &ComplexSpectrogram,
    rank: usize,
    p: f64,
    sigma_s: f64,
    iterations: usize,
    init: &ComplexModel,
) -> Result<(ComplexModel, Vec<f64>)> {
    if init.rank() != rank {
        return Err(Error::Shape(format!(
            "initial model has rank {}, requested {rank}",
            init.rank()
        )));
    }
    let config = SeparationConfig {
        n_sources: rank,
        sigma_u: 0.0,
        sigma_r: 0.0,
        sigma_s: Some(sigma_s),
        sparsity_exponent: p,
        outer_iterations: iterations,
        ..SeparationConfig::default()
    };
    let onsets = vec![OnsetDomain::empty(x.n_frames()); rank];
    let fit = separate(x, &config, &onsets, Some(init))?;
    let trace = fit.cost_trace.clone();
    Ok((fit.to_complex_model()?, trace))
}

/// Sum of `H^p` over a single activation row.
pub(crate) fn row_power_sum(h: &Array1<f64>, p: f64) -> f64 {
    h.iter().map(|v| v.powf(p)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nmf::outer;
    use crate::stft::StftConfig;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn config() -> StftConfig {
        StftConfig::new(8, 2, 8000).unwrap()
    }

    fn random_phase(shape: (usize, usize), rng: &mut ChaCha8Rng) -> Array2<Complex64> {
        Array2::from_shape_simple_fn(shape, || {
            Complex64::from_polar(1.0, rng.random_range(-std::f64::consts::PI..std::f64::consts::PI))
        })
    }

    #[test]
    fn euclidean_cost_basics() {
        let cfg = config();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = Array2::from_shape_simple_fn((5, 2), || rng.random::<f64>());
        let h = Array2::from_shape_simple_fn((2, 4), || rng.random::<f64>());
        let phases = vec![random_phase((5, 4), &mut rng), random_phase((5, 4), &mut rng)];
        let model = ComplexModel::new(FactorModel::new(w, h).unwrap(), phases).unwrap();
        let x = ComplexSpectrogram::new(model.reconstruction(), cfg).unwrap();
        assert!(euclidean_cost(&x, &model).unwrap() < 1e-24);

        let zero = ComplexModel::new(
            FactorModel::new(Array2::zeros((5, 2)), Array2::zeros((2, 4))).unwrap(),
            model.phases.clone(),
        )
        .unwrap();
        let energy = x.energy();
        assert!((euclidean_cost(&x, &zero).unwrap() - energy).abs() < 1e-12 * energy);
    }

    #[test]
    fn euclidean_cost_hand_value() {
        let a = array![[Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)]];
        let b = Array2::<Complex64>::zeros((1, 2));
        assert_eq!(squared_distance(&a, &b), 2.0);
    }

    #[test]
    fn sparsity_penalty_values() {
        assert_eq!(sparsity_penalty(&Array2::zeros((2, 3)), 1.0).unwrap(), 0.0);
        assert_eq!(sparsity_penalty(&array![[1.0, 1.0]], 1.0).unwrap(), 4.0);
        assert_eq!(sparsity_penalty(&array![[4.0]], 0.5).unwrap(), 4.0);
        assert!(sparsity_penalty(&array![[1.0]], 2.0).is_err());
        assert!(sparsity_penalty(&array![[1.0]], 0.0).is_err());
    }

    #[test]
    fn model_rejects_non_unit_phase() {
        let f = FactorModel::new(Array2::ones((2, 1)), Array2::ones((1, 3))).unwrap();
        let bad = vec![Array2::from_elem((2, 3), Complex64::new(1.1, 0.0))];
        assert!(ComplexModel::new(f.clone(), bad).is_err());
        assert!(ComplexModel::new(f, vec![]).is_err());
    }

    fn planted_rank_one(seed: u64) -> (ComplexSpectrogram, ComplexModel) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = Array1::from_shape_simple_fn(5, || rng.random_range(0.2..1.0));
        let h = Array1::from_shape_simple_fn(9, || rng.random_range(0.2..2.0));
        let phase = random_phase((5, 9), &mut rng);
        let mut x = phase.clone();
        x.zip_mut_with(&outer(&w, &h), |c, &m| *c *= m);
        let x = ComplexSpectrogram::new(x, config()).unwrap();
        let init = ComplexModel::new(
            FactorModel::new(
                Array2::from_shape_simple_fn((5, 1), || rng.random_range(0.1..1.0)),
                Array2::from_shape_simple_fn((1, 9), || rng.random_range(0.1..1.0)),
            )
            .unwrap(),
            vec![random_phase((5, 9), &mut rng)],
        )
        .unwrap();
        (x, init)
    }

    #[test]
    fn sparse_cnmf_recovers_rank_one() {
        let (x, init) = planted_rank_one(4);
        let (model, trace) = cnmf_sparse(&x, 1, 1.0, 0.0, 10, &init).unwrap();
        let cost = euclidean_cost(&x, &model).unwrap();
        assert!(cost < 1e-6 * x.energy(), "{cost}");
        assert_eq!(trace.len(), 11);
    }

    #[test]
    fn sparse_cnmf_descends_when_overcomplete() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = Array2::from_shape_simple_fn((5, 12), || {
            Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        let x = ComplexSpectrogram::new(x, config()).unwrap();
        let init = ComplexModel::from_nmf_wiener(&x, 5, 30, 2).unwrap();
        let (_, trace) = cnmf_sparse(&x, 5, 1.0, 0.0, 20, &init).unwrap();
        for pair in trace.windows(2) {
            assert!(pair[1] <= pair[0] * (1.0 + 1e-9), "{pair:?}");
        }
    }

    #[test]
    fn heavy_sparsity_shrinks_activations() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Array2::from_shape_simple_fn((5, 12), || {
            Complex64::new(rng.random::<f64>(), rng.random::<f64>() - 0.5)
        });
        let x = ComplexSpectrogram::new(x, config()).unwrap();
        let init = ComplexModel::from_nmf_wiener(&x, 2, 30, 2).unwrap();
        let (free, _) = cnmf_sparse(&x, 2, 1.0, 0.0, 10, &init).unwrap();
        let (sparse, _) = cnmf_sparse(&x, 2, 1.0, 1e3 * x.energy(), 10, &init).unwrap();
        let sum = |m: &ComplexModel| m.factors.h.iter().sum::<f64>();
        assert!(sum(&sparse) < sum(&free));
    }
}
