//! Energy-ratio separation metrics (SDR, SIR, SAR).
//!
//! Each estimate is split into a target part (projection onto its own
//! reference), an interference part (projection onto the span of all
//! references, minus the target) and an artifact part (the rest). Gains are
//! time-invariant scalars; no distortion filters are allowed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_CAP_DB: f64 = 200.0;
pub const PROJECTION_VARIANT: &str = "scalar-gain";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceScore {
    pub sdr_db: f64,
    pub sir_db: f64,
    pub sar_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalScores {
    /// Indexed by reference.
    pub sources: Vec<SourceScore>,
    /// `permutation[j]` is the estimate paired with reference `j`.
    pub permutation: Vec<usize>,
    pub projection_variant: String,
    pub cap_db: f64,
}

impl EvalScores {
    pub fn mean(&self) -> SourceScore {
        mean_score(self.sources.iter())
    }
}

/// Components of one estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub target: Vec<f64>,
    pub interference: Vec<f64>,
    pub artifact: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn energy(a: &[f64]) -> f64 {
    dot(a, a)
}

/// Solves the small dense system `g a = c` by Gaussian elimination with
/// partial pivoting.
fn solve(mut g: Vec<Vec<f64>>, mut c: Vec<f64>) -> Option<Vec<f64>> {
    let n = c.len();
    let scale = g.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    for col in 0..n {
        let pivot = (col..n).max_by(|&a, &b| g[a][col].abs().total_cmp(&g[b][col].abs()))?;
        if g[pivot][col].abs() <= 1e-12 * scale {
            return None;
        }
        g.swap(col, pivot);
        c.swap(col, pivot);
        for row in col + 1..n {
            let factor = g[row][col] / g[col][col];
            for j in col..n {
                g[row][j] -= factor * g[col][j];
            }
            c[row] -= factor * c[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|j| g[row][j] * x[j]).sum();
        x[row] = (c[row] - tail) / g[row][row];
    }
    Some(x)
}

fn check_inputs(estimates: &[Vec<f64>], references: &[Vec<f64>]) -> Result<()> {
    if references.is_empty() || estimates.len() != references.len() {
        return Err(Error::Evaluation(format!(
            "{} estimates for {} references",
            estimates.len(),
            references.len()
        )));
    }
    let len = references[0].len();
    if estimates.iter().chain(references).any(|s| s.len() != len) {
        return Err(Error::Evaluation("all signals must have the same length".into()));
    }
    if let Some(k) = references.iter().position(|r| energy(r) == 0.0) {
        return Err(Error::Evaluation(format!("reference {k} has zero energy")));
    }
    Ok(())
}

/// Splits `estimate` against reference `target` among `references`.
pub fn decompose(estimate: &[f64], references: &[Vec<f64>], target: usize) -> Result<Decomposition> {
    let k = references.len();
    let gram: Vec<Vec<f64>> = (0..k)
        .map(|i| (0..k).map(|j| dot(&references[i], &references[j])).collect())
        .collect();
    let rhs: Vec<f64> = references.iter().map(|r| dot(r, estimate)).collect();
    let coeffs = solve(gram, rhs)
        .ok_or_else(|| Error::Evaluation("references are linearly dependent".into()))?;

    let reference = &references[target];
    let gain = dot(reference, estimate) / energy(reference);
    let target_part: Vec<f64> = reference.iter().map(|r| gain * r).collect();
    let mut projection = vec![0.0; estimate.len()];
    for (c, r) in coeffs.iter().zip(references) {
        for (p, v) in projection.iter_mut().zip(r) {
            *p += c * v;
        }
    }
    let interference = projection.iter().zip(&target_part).map(|(p, t)| p - t).collect();
    let artifact = estimate.iter().zip(&projection).map(|(e, p)| e - p).collect();
    Ok(Decomposition {
        target: target_part,
        interference,
        artifact,
    })
}

fn ratio_db(num: f64, den: f64, cap: f64) -> f64 {
    if den <= 0.0 {
        return cap;
    }
    if num <= 0.0 {
        return -cap;
    }
    (10.0 * (num / den).log10()).clamp(-cap, cap)
}

fn score(d: &Decomposition, cap: f64) -> SourceScore {
    let target = energy(&d.target);
    let interf = energy(&d.interference);
    let artif = energy(&d.artifact);
    let distortion: Vec<f64> = d.interference.iter().zip(&d.artifact).map(|(a, b)| a + b).collect();
    let signal: Vec<f64> = d.target.iter().zip(&d.interference).map(|(a, b)| a + b).collect();
    SourceScore {
        sdr_db: ratio_db(target, energy(&distortion), cap),
        sir_db: ratio_db(target, interf, cap),
        sar_db: ratio_db(energy(&signal), artif, cap),
    }
}

/// Scores estimate `j` against reference `j`.
pub fn bss_eval(estimates: &[Vec<f64>], references: &[Vec<f64>], cap_db: f64) -> Result<EvalScores> {
    check_inputs(estimates, references)?;
    let sources = estimates
        .iter()
        .enumerate()
        .map(|(j, e)| decompose(e, references, j).map(|d| score(&d, cap_db)))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalScores {
        sources,
        permutation: (0..references.len()).collect(),
        projection_variant: PROJECTION_VARIANT.into(),
        cap_db,
    })
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for rest in permutations(n - 1) {
        for pos in 0..=rest.len() {
            let mut p = rest.clone();
            p.insert(pos, n - 1);
            out.push(p);
        }
    }
    out.sort();
    out
}

/// Scores every estimate/reference pairing and keeps the one with the
/// highest mean SIR.
pub fn bss_eval_best_permutation(
    estimates: &[Vec<f64>],
    references: &[Vec<f64>],
    cap_db: f64,
) -> Result<EvalScores> {
    check_inputs(estimates, references)?;
    let k = references.len();
    // table[e][r]: estimate e against reference r
    let table = estimates
        .iter()
        .map(|e| {
            (0..k)
                .map(|r| decompose(e, references, r).map(|d| score(&d, cap_db)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let best = permutations(k)
        .into_iter()
        .map(|perm| {
            let sir: f64 = perm.iter().enumerate().map(|(r, &e)| table[e][r].sir_db).sum();
            (perm, sir)
        })
        .fold(None::<(Vec<usize>, f64)>, |best, (perm, sir)| match best {
            Some((_, s)) if s >= sir => best,
            _ => Some((perm, sir)),
        })
        .expect("at least one permutation");
    let permutation = best.0;
    Ok(EvalScores {
        sources: permutation.iter().enumerate().map(|(r, &e)| table[e][r]).collect(),
        permutation,
        projection_variant: PROJECTION_VARIANT.into(),
        cap_db,
    })
}

fn mean_score<'a>(scores: impl Iterator<Item = &'a SourceScore>) -> SourceScore {
    let (mut n, mut sdr, mut sir, mut sar) = (0usize, 0.0, 0.0, 0.0);
    for s in scores {
        n += 1;
        sdr += s.sdr_db;
        sir += s.sir_db;
        sar += s.sar_db;
    }
    let n = n.max(1) as f64;
    SourceScore {
        sdr_db: sdr / n,
        sir_db: sir / n,
        sar_db: sar / n,
    }
}

/// Corpus-level means over every (mixture, source) score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: SourceScore,
    pub n_mixtures: usize,
    pub n_sources: usize,
}

pub fn aggregate(scores: &[EvalScores]) -> Result<Aggregate> {
    if scores.is_empty() {
        return Err(Error::Evaluation("no scores to aggregate".into()));
    }
    let all: Vec<&SourceScore> = scores.iter().flat_map(|s| s.sources.iter()).collect();
    Ok(Aggregate {
        mean: mean_score(all.iter().copied()),
        n_mixtures: scores.len(),
        n_sources: all.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    /// Orthonormal pair by Gram-Schmidt.
    fn orthonormal(len: usize) -> Vec<Vec<f64>> {
        let a = noise(len, 1);
        let b = noise(len, 2);
        let na = energy(&a).sqrt();
        let a: Vec<f64> = a.iter().map(|v| v / na).collect();
        let proj = dot(&a, &b);
        let b: Vec<f64> = b.iter().zip(&a).map(|(v, u)| v - proj * u).collect();
        let nb = energy(&b).sqrt();
        vec![a, b.iter().map(|v| v / nb).collect()]
    }

    #[test]
    fn exact_and_scaled_estimates_hit_the_cap() {
        let refs = vec![noise(500, 3), noise(500, 4)];
        for gain in [1.0, 2.0] {
            let est: Vec<Vec<f64>> = refs.iter().map(|r| r.iter().map(|v| gain * v).collect()).collect();
            let s = bss_eval(&est, &refs, DEFAULT_CAP_DB).unwrap();
            for src in &s.sources {
                assert!(src.sdr_db > 150.0 && src.sir_db > 150.0 && src.sar_db > 150.0, "{src:?}");
                assert!(src.sdr_db <= DEFAULT_CAP_DB);
            }
        }
    }

    #[test]
    fn leakage_gives_closed_form_sir() {
        let refs = orthonormal(1000);
        let est0: Vec<f64> = refs[0].iter().zip(&refs[1]).map(|(a, b)| a + 0.1 * b).collect();
        let s = bss_eval(&[est0, refs[1].clone()], &refs, DEFAULT_CAP_DB).unwrap();
        assert_abs_diff_eq!(s.sources[0].sir_db, 20.0, epsilon = 0.01);
        assert_abs_diff_eq!(s.sources[0].sdr_db, 20.0, epsilon = 0.01);
        assert!(s.sources[0].sar_db > 150.0);
    }

    #[test]
    fn decomposition_is_orthogonal_and_exact() {
        let refs = vec![noise(400, 5), noise(400, 6), noise(400, 7)];
        let est = noise(400, 8);
        for target in 0..3 {
            let d = decompose(&est, &refs, target).unwrap();
            let total = energy(&d.target) + energy(&d.interference) + energy(&d.artifact);
            assert!((total - energy(&est)).abs() <= 1e-9 * energy(&est));
            let sum: Vec<f64> = (0..400).map(|i| d.target[i] + d.interference[i] + d.artifact[i]).collect();
            for (a, b) in sum.iter().zip(&est) {
                assert!((a - b).abs() < 1e-12);
            }
            let s = score(&d, DEFAULT_CAP_DB);
            assert!(s.sdr_db <= s.sir_db + 1e-9 && s.sdr_db <= s.sar_db + 1e-9);
        }
    }

    #[test]
    fn scale_invariance() {
        let refs = vec![noise(300, 9), noise(300, 10)];
        let est = vec![noise(300, 11), noise(300, 12)];
        let a = bss_eval(&est, &refs, DEFAULT_CAP_DB).unwrap();
        let scale = |v: &Vec<Vec<f64>>| -> Vec<Vec<f64>> { v.iter().map(|s| s.iter().map(|x| 3.7 * x).collect()).collect() };
        let b = bss_eval(&scale(&est), &scale(&refs), DEFAULT_CAP_DB).unwrap();
        for (x, y) in a.sources.iter().zip(&b.sources) {
            assert_abs_diff_eq!(x.sdr_db, y.sdr_db, epsilon = 1e-9);
            assert_abs_diff_eq!(x.sir_db, y.sir_db, epsilon = 1e-9);
            assert_abs_diff_eq!(x.sar_db, y.sar_db, epsilon = 1e-9);
        }
    }

    #[test]
    fn errors() {
        let refs = vec![noise(10, 1), vec![0.0; 10]];
        let err = bss_eval(&refs.clone(), &refs, DEFAULT_CAP_DB).unwrap_err();
        assert!(err.to_string().contains("reference 1"));
        assert!(bss_eval(&[noise(10, 1)], &[noise(11, 1)], DEFAULT_CAP_DB).is_err());
        let r = noise(10, 1);
        let dependent = vec![r.clone(), r.iter().map(|v| 2.0 * v).collect()];
        assert!(bss_eval(&dependent.clone(), &dependent, DEFAULT_CAP_DB).is_err());
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn permutation_is_resolved() {
        let refs = vec![noise(600, 20), noise(600, 21), noise(600, 22)];
        let est: Vec<Vec<f64>> = refs
            .iter()
            .enumerate()
            .map(|(k, r)| r.iter().zip(noise(600, 30 + k as u64)).map(|(a, b)| a + 0.2 * b).collect())
            .collect();
        let straight = bss_eval_best_permutation(&est, &refs, DEFAULT_CAP_DB).unwrap();
        assert_eq!(straight.permutation, vec![0, 1, 2]);
        let shuffled = vec![est[2].clone(), est[0].clone(), est[1].clone()];
        let permuted = bss_eval_best_permutation(&shuffled, &refs, DEFAULT_CAP_DB).unwrap();
        assert_eq!(permuted.permutation, vec![1, 2, 0]);
        assert_eq!(aggregate(std::slice::from_ref(&straight)).unwrap(), aggregate(&[permuted]).unwrap());
        assert_eq!(aggregate(std::slice::from_ref(&straight)).unwrap().mean, straight.mean());
    }

    #[test]
    fn aggregate_means() {
        let mk = |sdr: f64| EvalScores {
            sources: vec![SourceScore { sdr_db: sdr, sir_db: 2.0 * sdr, sar_db: sdr + 1.0 }],
            permutation: vec![0],
            projection_variant: PROJECTION_VARIANT.into(),
            cap_db: DEFAULT_CAP_DB,
        };
        let a = aggregate(&[mk(10.0), mk(20.0)]).unwrap();
        assert_eq!(a.mean.sdr_db, 15.0);
        assert_eq!(a.mean.sir_db, 30.0);
        assert_eq!(a.n_mixtures, 2);
    }

    #[test]
    fn permutation_enumeration() {
        assert_eq!(permutations(1), vec![vec![0]]);
        assert_eq!(permutations(3).len(), 6);
    }
}
