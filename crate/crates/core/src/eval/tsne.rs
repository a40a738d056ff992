//! Exact t-SNE.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::featureset::FeatureVector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsneParams {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    pub exaggeration_iters: usize,
    pub momentum_switch_iter: usize,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    pub init_std: f64,
    pub seed: u64,
}

impl Default for TsneParams {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            momentum_switch_iter: 250,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            init_std: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection2D {
    pub points: Vec<[f64; 2]>,
    pub labels: Vec<Option<String>>,
    pub perplexity: f64,
    pub seed: u64,
    pub initial_kl: f64,
    /// KL at the end of early exaggeration, measured against the true P.
    pub post_exaggeration_kl: f64,
    pub final_kl: f64,
}

/// Row-stochastic conditional probabilities `P(j|i)` for one point, found by
/// bisection on the Gaussian precision.
#[derive(Debug, Clone, PartialEq)]
pub struct Conditional {
    pub probs: Vec<f64>,
    pub beta: f64,
    /// Shannon entropy in nats; `exp(entropy)` is the achieved perplexity.
    pub entropy: f64,
}

const ENTROPY_TOL: f64 = 1e-10;
const MAX_BISECTIONS: usize = 200;

fn squared_distances(x: &[Vec<f64>]) -> Array2<f64> {
    let n = x.len();
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        for j in i + 1..n {
            let v: f64 = x[i].iter().zip(&x[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            d[[i, j]] = v;
            d[[j, i]] = v;
        }
    }
    d
}

fn entropy_at(dist: &[f64], beta: f64, probs: &mut [f64]) -> f64 {
    // shift by the minimum distance so the largest weight is exp(0)
    let dmin = dist.iter().copied().fold(f64::INFINITY, f64::min);
    let mut sum = 0.0;
    for (p, &d) in probs.iter_mut().zip(dist) {
        *p = (-(d - dmin) * beta).exp();
        sum += *p;
    }
    let mut weighted = 0.0;
    for (p, &d) in probs.iter_mut().zip(dist) {
        *p /= sum;
        weighted += (d - dmin) * *p;
    }
    sum.ln() + beta * weighted
}

/// `dist` holds squared distances to every other point.
pub fn conditional_for(dist: &[f64], perplexity: f64) -> Conditional {
    let target = perplexity.ln();
    let mut probs = vec![0.0; dist.len()];
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    let mut beta = 1.0;
    let mut h = entropy_at(dist, beta, &mut probs);
    for _ in 0..MAX_BISECTIONS {
        if (h - target).abs() < ENTROPY_TOL {
            break;
        }
        if h > target {
            lo = beta;
            beta = if hi.is_finite() {
                (beta + hi) / 2.0
            } else {
                beta * 2.0
            };
        } else {
            hi = beta;
            beta = (beta + lo) / 2.0;
        }
        h = entropy_at(dist, beta, &mut probs);
    }
    Conditional {
        probs,
        beta,
        entropy: h,
    }
}

fn check_input(x: &[Vec<f64>], perplexity: f64) -> Result<(), EvalError> {
    if !(perplexity > 0.0) || (x.len() as f64) < 3.0 * perplexity || x.len() < 2 {
        return Err(EvalError::TooFewPoints {
            n: x.len(),
            perplexity,
        });
    }
    let d = x[0].len();
    if x.iter().any(|r| r.len() != d) {
        return Err(EvalError::RaggedInput);
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite);
    }
    Ok(())
}

/// Conditional distributions for every point (row `i` is `P(·|i)`, zero on
/// the diagonal).
pub fn conditional_probabilities(
    x: &[Vec<f64>],
    perplexity: f64,
) -> Result<Vec<Conditional>, EvalError> {
    check_input(x, perplexity)?;
    let d = squared_distances(x);
    let n = x.len();
    Ok((0..n)
        .map(|i| {
            let others: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| d[[i, j]]).collect();
            let mut c = conditional_for(&others, perplexity);
            c.probs.insert(i, 0.0);
            c
        })
        .collect())
}

/// Symmetrized joint distribution `(P(j|i) + P(i|j)) / 2n`.
pub fn joint_probabilities(x: &[Vec<f64>], perplexity: f64) -> Result<Array2<f64>, EvalError> {
    let cond = conditional_probabilities(x, perplexity)?;
    let n = x.len();
    let denom = 2.0 * n as f64;
    Ok(Array2::from_shape_fn((n, n), |(i, j)| {
        (cond[i].probs[j] + cond[j].probs[i]) / denom
    }))
}

fn student_t(y: &[[f64; 2]]) -> (Array2<f64>, f64) {
    let n = y.len();
    let mut num = Array2::zeros((n, n));
    let mut sum = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let dx = y[i][0] - y[j][0];
            let dy = y[i][1] - y[j][1];
            let v = 1.0 / (1.0 + dx * dx + dy * dy);
            num[[i, j]] = v;
            num[[j, i]] = v;
            sum += 2.0 * v;
        }
    }
    (num, sum)
}

pub fn kl_divergence(p: &Array2<f64>, y: &[[f64; 2]]) -> f64 {
    let (num, sum) = student_t(y);
    let mut kl = 0.0;
    for ((i, j), &pij) in p.indexed_iter() {
        if i != j && pij > 0.0 {
            let q = (num[[i, j]] / sum).max(f64::MIN_POSITIVE);
            kl += pij * (pij / q).ln();
        }
    }
    kl.max(0.0)
}

/// Embeds `x` in two dimensions. Returns the points and the KL divergence at
/// initialization, after early exaggeration and at the end.
pub fn tsne_embed(
    x: &[Vec<f64>],
    params: &TsneParams,
) -> Result<(Vec<[f64; 2]>, [f64; 3]), EvalError> {
    let p = joint_probabilities(x, params.perplexity)?;
    let n = x.len();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let normal =
        Normal::new(0.0, params.init_std).map_err(|_| EvalError::InvalidParameter("init_std"))?;
    let mut y: Vec<[f64; 2]> = (0..n)
        .map(|_| [normal.sample(&mut rng), normal.sample(&mut rng)])
        .collect();
    let mut update = vec![[0.0; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let initial_kl = kl_divergence(&p, &y);
    let mut post_exaggeration_kl = initial_kl;

    for iter in 0..params.iterations {
        if iter == params.exaggeration_iters {
            post_exaggeration_kl = kl_divergence(&p, &y);
        }
        let exaggeration = if iter < params.exaggeration_iters {
            params.early_exaggeration
        } else {
            1.0
        };
        let momentum = if iter < params.momentum_switch_iter {
            params.initial_momentum
        } else {
            params.final_momentum
        };
        let (num, sum) = student_t(&y);
        for i in 0..n {
            let mut grad = [0.0; 2];
            for j in 0..n {
                if i == j {
                    continue;
                }
                let w = (exaggeration * p[[i, j]] - num[[i, j]] / sum) * num[[i, j]];
                grad[0] += 4.0 * w * (y[i][0] - y[j][0]);
                grad[1] += 4.0 * w * (y[i][1] - y[j][1]);
            }
            for d in 0..2 {
                // adaptive per-coordinate gains
                gains[i][d] = if (grad[d] > 0.0) != (update[i][d] > 0.0) {
                    gains[i][d] + 0.2
                } else {
                    (gains[i][d] * 0.8).max(0.01)
                };
                update[i][d] =
                    momentum * update[i][d] - params.learning_rate * gains[i][d] * grad[d];
            }
        }
        for (yi, ui) in y.iter_mut().zip(&update) {
            yi[0] += ui[0];
            yi[1] += ui[1];
        }
        let mean = y.iter().fold([0.0; 2], |m, v| [m[0] + v[0], m[1] + v[1]]);
        for yi in &mut y {
            yi[0] -= mean[0] / n as f64;
            yi[1] -= mean[1] / n as f64;
        }
    }
    if params.iterations <= params.exaggeration_iters {
        post_exaggeration_kl = kl_divergence(&p, &y);
    }
    let final_kl = kl_divergence(&p, &y);
    if !final_kl.is_finite() {
        return Err(EvalError::NonFinite);
    }
    Ok((y, [initial_kl, post_exaggeration_kl, final_kl]))
}

/// Projects feature vectors, labelling points by their class name.
pub fn tsne(vectors: &[FeatureVector], params: &TsneParams) -> Result<Projection2D, EvalError> {
    let x: Vec<Vec<f64>> = vectors.iter().map(|v| v.values.clone()).collect();
    let (points, [initial_kl, post_exaggeration_kl, final_kl]) = tsne_embed(&x, params)?;
    Ok(Projection2D {
        points,
        labels: vectors
            .iter()
            .map(|v| v.label.map(|l| l.name().to_owned()))
            .collect(),
        perplexity: params.perplexity,
        seed: params.seed,
        initial_kl,
        post_exaggeration_kl,
        final_kl,
    })
}
