//! Shared synthetic data and independent oracles for integration tests.
#![allow(dead_code)]

use facedim::linalg::SquareMatrix;
use facedim::{Embedding, EmbeddingSet, GaussianTemplate};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Well-conditioned random SPD matrix: `B·Bᵀ/d + shift·I`.
pub fn random_spd(rng: &mut ChaCha8Rng, d: usize, shift: f64) -> SquareMatrix {
    let b = DMatrix::from_vec(d, d, normal_vec(rng, d * d));
    let mut a = &b * b.transpose() / d as f64;
    for i in 0..d {
        a[(i, i)] += shift;
    }
    // exact symmetry
    let sym = (&a + a.transpose()) * 0.5;
    to_square(&sym)
}

pub fn to_square(m: &DMatrix<f64>) -> SquareMatrix {
    let d = m.nrows();
    let mut out = SquareMatrix::zeros(d);
    for i in 0..d {
        for j in 0..d {
            out.set(i, j, m[(i, j)]);
        }
    }
    out
}

pub fn to_dmatrix(m: &SquareMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.dim(), m.dim(), m.as_slice())
}

/// `sqrt(δᵀ·inv(Σ)·δ)` with an explicit inverse.
pub fn explicit_inverse_distance(mean: &[f64], cov: &SquareMatrix, probe: &[f64]) -> f64 {
    let inv = to_dmatrix(cov).try_inverse().expect("invertible");
    let delta = DVector::from_iterator(mean.len(), probe.iter().zip(mean).map(|(x, m)| x - m));
    (delta.transpose() * inv * &delta)[(0, 0)].sqrt()
}

/// Two-pass covariance with explicit loops, plus `eps` on the diagonal.
pub fn naive_covariance(rows: &[Vec<f64>], eps: f64) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = rows.len();
    let d = rows[0].len();
    let mut mean = vec![0.0; d];
    for r in rows {
        for j in 0..d {
            mean[j] += r[j];
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut cov = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..d {
            let mut s = 0.0;
            for r in rows {
                s += (r[i] - mean[i]) * (r[j] - mean[j]);
            }
            cov[i][j] = s / (n - 1) as f64 + if i == j { eps } else { 0.0 };
        }
    }
    (mean, cov)
}

/// Draws `n` samples from `N(mean, Σ)` given Σ's Cholesky factor.
pub fn gaussian_samples(
    rng: &mut ChaCha8Rng,
    mean: &[f64],
    chol: &SquareMatrix,
    n: usize,
) -> Vec<Vec<f64>> {
    let d = mean.len();
    (0..n)
        .map(|_| {
            let z = normal_vec(rng, d);
            (0..d)
                .map(|i| mean[i] + (0..=i).map(|k| chol.get(i, k) * z[k]).sum::<f64>())
                .collect()
        })
        .collect()
}

pub fn set_of(rows: &[Vec<f64>], model: &str) -> EmbeddingSet {
    EmbeddingSet::from_rows(rows, model).unwrap()
}

pub fn embedding(values: &[f64], model: &str) -> Embedding {
    Embedding::new(values.to_vec(), model).unwrap()
}

pub fn template_with(mean: Vec<f64>, cov: &SquareMatrix) -> GaussianTemplate {
    GaussianTemplate::from_mean_covariance("t", mean, cov, "m").unwrap()
}

/// Synthetic identities: `per_identity` samples each from a Gaussian whose
/// center sits `separation` cluster scales from the origin along a random
/// direction. All clusters share one random covariance shape, normalized so
/// its mean per-axis variance is 1 (cluster scale 1).
pub struct SyntheticPopulation {
    pub dim: usize,
    pub identities: Vec<String>,
    pub samples: Vec<Vec<Vec<f64>>>,
}

pub fn synthetic_population(
    seed: u64,
    n_identities: usize,
    dim: usize,
    per_identity: usize,
    separation: f64,
) -> SyntheticPopulation {
    let mut rng = rng(seed);
    let raw = random_spd(&mut rng, dim, 0.5);
    let trace: f64 = (0..dim).map(|i| raw.get(i, i)).sum();
    let shape = SquareMatrix::from_row_major(
        dim,
        raw.as_slice().iter().map(|v| v * dim as f64 / trace).collect(),
    )
    .unwrap();
    let chol = facedim::linalg::cholesky_spd(&shape).unwrap();
    let lower = chol.lower().clone();
    let mut identities = Vec::new();
    let mut samples = Vec::new();
    for k in 0..n_identities {
        let dir = normal_vec(&mut rng, dim);
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        let center: Vec<f64> = dir.iter().map(|v| separation * v / norm).collect();
        identities.push(format!("id{k:02}"));
        samples.push(gaussian_samples(&mut rng, &center, &lower, per_identity));
    }
    SyntheticPopulation {
        dim,
        identities,
        samples,
    }
}

impl SyntheticPopulation {
    /// Per-identity split: first `n_train` rows train, the rest test.
    pub fn split(&self, n_train: usize, model: &str) -> (EmbeddingSet, EmbeddingSet) {
        let mut train = Vec::new();
        let mut train_labels = Vec::new();
        let mut test = Vec::new();
        let mut test_labels = Vec::new();
        for (id, rows) in self.identities.iter().zip(&self.samples) {
            for (i, r) in rows.iter().enumerate() {
                if i < n_train {
                    train.push(r.clone());
                    train_labels.push(id.clone());
                } else {
                    test.push(r.clone());
                    test_labels.push(id.clone());
                }
            }
        }
        (
            set_of(&train, model).with_labels(train_labels).unwrap(),
            set_of(&test, model).with_labels(test_labels).unwrap(),
        )
    }
}

/// Rates at threshold `t` by direct counting.
pub fn count_rates(genuine: &[f64], impostor: &[f64], t: f64) -> (f64, f64) {
    let far = impostor.iter().filter(|&&s| s <= t).count() as f64 / impostor.len() as f64;
    let frr = genuine.iter().filter(|&&s| s > t).count() as f64 / genuine.len() as f64;
    (far, frr)
}

/// Exhaustive EER: tries "accept nothing" and "accept everything ≤ s" for
/// every pooled score s, with the documented tie-break. Returns
/// (threshold_index, eer, far, frr) where index 0 is "accept nothing" and
/// index i ≥ 1 is the i-th smallest distinct score.
pub fn brute_force_eer(genuine: &[f64], impostor: &[f64]) -> (usize, f64, f64, f64) {
    let mut pooled: Vec<f64> = genuine.iter().chain(impostor).copied().collect();
    pooled.sort_by(f64::total_cmp);
    pooled.dedup();
    let mut candidates = vec![pooled[0] - 1.0];
    candidates.extend(&pooled);
    let mut best: Option<(usize, f64, f64, f64, f64)> = None;
    for (idx, &t) in candidates.iter().enumerate() {
        let (far, frr) = count_rates(genuine, impostor, t);
        let gap = (far - frr).abs();
        let mean = (far + frr) / 2.0;
        let better = match best {
            None => true,
            Some((_, bgap, bmean, _, _)) => gap < bgap || (gap == bgap && mean < bmean),
        };
        if better {
            best = Some((idx, gap, mean, far, frr));
        }
    }
    let (idx, _, mean, far, frr) = best.unwrap();
    (idx, mean, far, frr)
}
