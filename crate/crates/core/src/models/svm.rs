//! One-vs-one kernel SVM trained with SMO.
//!
//! The binary solver minimizes `½ αᵀQα − eᵀα` subject to `0 ≤ α ≤ C` and
//! `yᵀα = 0`, picking working pairs with second-order (maximal gain)
//! selection. It stops once the maximal KKT violation drops below `tol`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::featureset::{FeatureSetId, FeatureVector, Normalizer};

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Kernel {
    Linear,
    Rbf { gamma: f64 },
}

impl Kernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            Kernel::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d2).exp()
            }
        }
    }
}

/// Kernel choice before the data-dependent `gamma` is resolved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum KernelSpec {
    Linear,
    /// `gamma: None` means `1 / (d · Var(X))` over the training matrix.
    Rbf {
        #[serde(default)]
        gamma: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmParams {
    pub c: f64,
    pub kernel: KernelSpec,
    pub tol: f64,
    pub max_iter: usize,
    /// Kernel rows kept in memory per binary problem.
    pub cache_rows: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            kernel: KernelSpec::Rbf { gamma: None },
            tol: 1e-3,
            max_iter: 10_000_000,
            cache_rows: 4096,
        }
    }
}

/// `1 / (d · Var(X))`, the variance taken over every entry of `X`.
pub fn scale_gamma(x: &[Vec<f64>]) -> f64 {
    let d = x.first().map_or(1, Vec::len).max(1);
    let n = (x.len() * d) as f64;
    let mean = x.iter().flatten().sum::<f64>() / n;
    let var = x.iter().flatten().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if var > 0.0 {
        1.0 / (d as f64 * var)
    } else {
        1.0 / d as f64
    }
}

impl KernelSpec {
    pub fn resolve(&self, x: &[Vec<f64>]) -> Kernel {
        match *self {
            KernelSpec::Linear => Kernel::Linear,
            KernelSpec::Rbf { gamma: Some(g) } => Kernel::Rbf { gamma: g },
            KernelSpec::Rbf { gamma: None } => Kernel::Rbf {
                gamma: scale_gamma(x),
            },
        }
    }
}

/// Kernel rows computed on demand with FIFO eviction.
struct KernelCache<'a> {
    x: &'a [&'a [f64]],
    kernel: Kernel,
    rows: Vec<Option<Vec<f64>>>,
    order: VecDeque<usize>,
    capacity: usize,
    diag: Vec<f64>,
}

impl<'a> KernelCache<'a> {
    fn new(x: &'a [&'a [f64]], kernel: Kernel, capacity: usize) -> Self {
        Self {
            diag: x.iter().map(|v| kernel.eval(v, v)).collect(),
            x,
            kernel,
            rows: vec![None; x.len()],
            order: VecDeque::new(),
            capacity: capacity.max(2),
        }
    }

    fn row(&mut self, i: usize) -> &[f64] {
        if self.rows[i].is_none() {
            if self.order.len() >= self.capacity {
                let evict = self.order.pop_front().expect("non-empty");
                self.rows[evict] = None;
            }
            let xi = self.x[i];
            let kernel = self.kernel;
            self.rows[i] = Some(self.x.iter().map(|xj| kernel.eval(xi, xj)).collect());
            self.order.push_back(i);
        }
        self.rows[i].as_deref().expect("just filled")
    }
}

/// Solution of one binary dual problem.
#[derive(Debug, Clone)]
pub struct BinarySolution {
    pub alpha: Vec<f64>,
    /// Gradient of the dual objective at the solution, `Qα − e`.
    pub gradient: Vec<f64>,
    /// Decision function offset: `f(x) = Σ αᵢyᵢK(xᵢ, x) + bias`.
    pub bias: f64,
    pub iterations: usize,
    /// Dual objective `eᵀα − ½αᵀQα` after every iteration, when recorded.
    pub objective_trace: Vec<f64>,
}

fn dual_objective(alpha: &[f64], grad: &[f64]) -> f64 {
    // f(α) = ½ Σ αᵢ (Gᵢ − 1); dual = −f
    -0.5 * alpha
        .iter()
        .zip(grad)
        .map(|(a, g)| a * (g - 1.0))
        .sum::<f64>()
}

/// SMO on a binary problem with labels `y ∈ {+1, −1}`.
pub fn solve_binary(
    x: &[&[f64]],
    y: &[f64],
    kernel: Kernel,
    params: &SvmParams,
    record_objective: bool,
) -> Result<BinarySolution, ModelError> {
    let n = x.len();
    let c = params.c;
    let mut cache = KernelCache::new(x, kernel, params.cache_rows);
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut trace = Vec::new();
    let is_up = |a: f64, yt: f64| (yt > 0.0 && a < c) || (yt < 0.0 && a > 0.0);
    let is_low = |a: f64, yt: f64| (yt > 0.0 && a > 0.0) || (yt < 0.0 && a < c);

    let mut iterations = 0;
    loop {
        // i: maximal violator in I_up
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..n {
            if is_up(alpha[t], y[t]) {
                let v = -y[t] * grad[t];
                if v > gmax {
                    gmax = v;
                    i_sel = Some(t);
                }
            }
        }
        let Some(i) = i_sel else { break };
        let qi: Vec<f64> = cache.row(i).to_vec();
        let mut gmin = f64::INFINITY;
        let mut best_gain = f64::INFINITY;
        let mut j_sel = None;
        for t in 0..n {
            if !is_low(alpha[t], y[t]) {
                continue;
            }
            let v = -y[t] * grad[t];
            gmin = gmin.min(v);
            let b = gmax - v;
            if b > 0.0 {
                let a = (cache.diag[i] + cache.diag[t] - 2.0 * qi[t]).max(TAU);
                let gain = -(b * b) / a;
                if gain <= best_gain {
                    best_gain = gain;
                    j_sel = Some(t);
                }
            }
        }
        if gmax - gmin < params.tol {
            break;
        }
        let Some(j) = j_sel else { break };
        if iterations >= params.max_iter {
            return Err(ModelError::NotConverged(iterations));
        }
        iterations += 1;

        let qj: Vec<f64> = cache.row(j).to_vec();
        let (yi, yj) = (y[i], y[j]);
        let (old_ai, old_aj) = (alpha[i], alpha[j]);
        let quad = (cache.diag[i] + cache.diag[j] - 2.0 * qi[j]).max(TAU);
        if yi != yj {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (dai, daj) = (alpha[i] - old_ai, alpha[j] - old_aj);
        for t in 0..n {
            // Q_it = y_i y_t K_it
            grad[t] += y[t] * (yi * qi[t] * dai + yj * qj[t] * daj);
        }
        if record_objective {
            trace.push(dual_objective(&alpha, &grad));
        }
    }

    // offset from free vectors, or the midpoint of the feasible interval
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free_sum, mut n_free) = (0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        let at_upper = alpha[t] >= c;
        let at_lower = alpha[t] <= 0.0;
        if at_upper {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if at_lower {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            free_sum += yg;
        }
    }
    let rho = if n_free > 0 {
        free_sum / n_free as f64
    } else {
        (ub + lb) / 2.0
    };
    Ok(BinarySolution {
        alpha,
        gradient: grad,
        bias: -rho,
        iterations,
        objective_trace: trace,
    })
}

/// One pairwise classifier: positive side is `pos_class`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseSvm {
    pub pos_class: usize,
    pub neg_class: usize,
    pub support_vectors: Vec<Vec<f64>>,
    /// `αᵢ·yᵢ` for each support vector.
    pub dual_coef: Vec<f64>,
    pub bias: f64,
}

impl PairwiseSvm {
    pub fn decision(&self, kernel: &Kernel, x: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.dual_coef)
            .map(|(sv, c)| c * kernel.eval(sv, x))
            .sum::<f64>()
            + self.bias
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    /// Sorted class labels seen in training.
    pub classes: Vec<usize>,
    pub kernel: Kernel,
    pub c: f64,
    pub dim: usize,
    pub pairs: Vec<PairwiseSvm>,
    pub set_id: Option<FeatureSetId>,
    /// Normalizer fitted on the training partition, applied by the pipeline
    /// before prediction.
    pub normalizer: Option<Normalizer>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SvmPrediction {
    pub label: usize,
    /// Votes per entry of [`SvmModel::classes`].
    pub votes: Vec<usize>,
}

/// Index of the largest count; ties go to the lowest index.
pub fn vote_winner(votes: &[usize]) -> usize {
    let mut best = 0;
    for (i, &v) in votes.iter().enumerate() {
        if v > votes[best] {
            best = i;
        }
    }
    best
}

impl SvmModel {
    pub fn train(x: &[Vec<f64>], y: &[usize], params: &SvmParams) -> Result<Self, ModelError> {
        if x.len() != y.len() {
            return Err(ModelError::LengthMismatch {
                samples: x.len(),
                labels: y.len(),
            });
        }
        if x.is_empty() {
            return Err(ModelError::EmptyTrainingSet);
        }
        let dim = x[0].len();
        for v in x {
            if v.len() != dim {
                return Err(ModelError::DimensionMismatch {
                    expected: dim,
                    got: v.len(),
                });
            }
            if v.iter().any(|f| !f.is_finite()) {
                return Err(ModelError::NonFiniteInput);
            }
        }
        if !(params.c > 0.0 && params.c.is_finite()) {
            return Err(ModelError::InvalidParameter(format!("C = {}", params.c)));
        }
        let mut classes: Vec<usize> = y.to_vec();
        classes.sort_unstable();
        classes.dedup();
        if classes.len() < 2 {
            return Err(ModelError::SingleClass);
        }
        let kernel = params.kernel.resolve(x);
        let mut pairs = Vec::new();
        for (a_pos, &a) in classes.iter().enumerate() {
            for &b in &classes[a_pos + 1..] {
                let idx: Vec<usize> = (0..x.len()).filter(|&i| y[i] == a || y[i] == b).collect();
                let xs: Vec<&[f64]> = idx.iter().map(|&i| x[i].as_slice()).collect();
                let ys: Vec<f64> = idx
                    .iter()
                    .map(|&i| if y[i] == a { 1.0 } else { -1.0 })
                    .collect();
                let sol = solve_binary(&xs, &ys, kernel, params, false)?;
                let (mut svs, mut coef) = (Vec::new(), Vec::new());
                for (k, &alpha) in sol.alpha.iter().enumerate() {
                    if alpha > 0.0 {
                        svs.push(xs[k].to_vec());
                        coef.push(alpha * ys[k]);
                    }
                }
                log::debug!(
                    "svm pair ({a}, {b}): {} samples, {} support vectors, {} iterations",
                    xs.len(),
                    svs.len(),
                    sol.iterations
                );
                pairs.push(PairwiseSvm {
                    pos_class: a,
                    neg_class: b,
                    support_vectors: svs,
                    dual_coef: coef,
                    bias: sol.bias,
                });
            }
        }
        Ok(Self {
            classes,
            kernel,
            c: params.c,
            dim,
            pairs,
            set_id: None,
            normalizer: None,
        })
    }

    pub fn predict(&self, x: &[f64]) -> Result<SvmPrediction, ModelError> {
        if x.len() != self.dim {
            return Err(ModelError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        let mut votes = vec![0usize; self.classes.len()];
        let pos_of = |c: usize| {
            self.classes
                .binary_search(&c)
                .expect("pair classes are known")
        };
        for p in &self.pairs {
            let winner = if p.decision(&self.kernel, x) > 0.0 {
                p.pos_class
            } else {
                p.neg_class
            };
            votes[pos_of(winner)] += 1;
        }
        Ok(SvmPrediction {
            label: self.classes[vote_winner(&votes)],
            votes,
        })
    }

    /// Predicts a feature vector, checking its set and dimension.
    pub fn predict_vector(&self, v: &FeatureVector) -> Result<SvmPrediction, ModelError> {
        if let Some(set) = self.set_id {
            if set != v.set_id {
                return Err(ModelError::WrongFeatureSet {
                    expected: set,
                    got: v.set_id,
                });
            }
        }
        self.predict(&v.values)
    }
}

/// Trains on feature vectors of a single set. `labels` are class indices.
pub fn svm_train(
    vectors: &[FeatureVector],
    labels: &[usize],
    params: &SvmParams,
) -> Result<SvmModel, ModelError> {
    let set_id = vectors.first().ok_or(ModelError::EmptyTrainingSet)?.set_id;
    if let Some(v) = vectors.iter().find(|v| v.set_id != set_id) {
        return Err(ModelError::WrongFeatureSet {
            expected: set_id,
            got: v.set_id,
        });
    }
    let x: Vec<Vec<f64>> = vectors.iter().map(|v| v.values.clone()).collect();
    let mut model = SvmModel::train(&x, labels, params)?;
    model.set_id = Some(set_id);
    Ok(model)
}

pub fn svm_predict(model: &SvmModel, v: &FeatureVector) -> Result<SvmPrediction, ModelError> {
    model.predict_vector(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// KKT residual of `y f(x)` for one training point.
    fn kkt_violation(alpha: f64, margin: f64, c: f64) -> f64 {
        if alpha <= 0.0 {
            (1.0 - margin).max(0.0)
        } else if alpha >= c {
            (margin - 1.0).max(0.0)
        } else {
            (margin - 1.0).abs()
        }
    }

    #[test]
    fn two_point_problem_is_symmetric() {
        let x = vec![vec![-1.0], vec![1.0]];
        let params = SvmParams {
            c: 1e6,
            kernel: KernelSpec::Linear,
            ..SvmParams::default()
        };
        let m = SvmModel::train(&x, &[0, 1], &params).unwrap();
        let p = &m.pairs[0];
        assert_eq!(p.support_vectors.len(), 2);
        assert!(p.decision(&m.kernel, &[0.0]).abs() < 1e-6);
        assert!(p.bias.abs() < 1e-6);
        assert_eq!(m.predict(&[-0.3]).unwrap().label, 0);
        assert_eq!(m.predict(&[0.3]).unwrap().label, 1);
    }

    #[test]
    fn xor_with_rbf() {
        let x = vec![
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            vec![0.0, 1.0],
            vec![1.0, 0.0],
        ];
        let y = [0, 0, 1, 1];
        let params = SvmParams {
            c: 10.0,
            kernel: KernelSpec::Rbf { gamma: Some(1.0) },
            ..SvmParams::default()
        };
        let m = SvmModel::train(&x, &y, &params).unwrap();
        for (xi, &yi) in x.iter().zip(&y) {
            assert_eq!(m.predict(xi).unwrap().label, yi);
        }
    }

    #[test]
    fn kkt_and_monotone_dual_on_noisy_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<Vec<f64>> = (0..120)
            .map(|i| {
                let c = if i % 2 == 0 { 0.5 } else { -0.5 };
                vec![c + rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]
            })
            .collect();
        let y: Vec<f64> = (0..120)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let xs: Vec<&[f64]> = x.iter().map(Vec::as_slice).collect();
        let params = SvmParams::default();
        let kernel = params.kernel.resolve(&x);
        let sol = solve_binary(&xs, &y, kernel, &params, true).unwrap();
        for w in sol.objective_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9);
        }
        for i in 0..x.len() {
            let f: f64 = (0..x.len())
                .map(|j| sol.alpha[j] * y[j] * kernel.eval(&x[j], &x[i]))
                .sum::<f64>()
                + sol.bias;
            assert!(kkt_violation(sol.alpha[i], y[i] * f, params.c) <= 1e-3);
            assert!((0.0..=params.c).contains(&sol.alpha[i]));
        }
        let balance: f64 = sol.alpha.iter().zip(&y).map(|(a, y)| a * y).sum();
        assert!(balance.abs() < 1e-9);
    }

    #[test]
    fn vote_ties_go_to_lowest_index() {
        assert_eq!(vote_winner(&[2, 1, 0]), 0);
        assert_eq!(vote_winner(&[1, 1, 1]), 0);
        assert_eq!(vote_winner(&[0, 2, 2]), 1);
    }

    #[test]
    fn training_errors() {
        let x = vec![vec![0.0], vec![1.0]];
        assert!(matches!(
            SvmModel::train(&x, &[1, 1], &SvmParams::default()),
            Err(ModelError::SingleClass)
        ));
        let bad = vec![vec![f64::NAN], vec![1.0]];
        assert!(matches!(
            SvmModel::train(&bad, &[0, 1], &SvmParams::default()),
            Err(ModelError::NonFiniteInput)
        ));
        let m = SvmModel::train(&x, &[0, 1], &SvmParams::default()).unwrap();
        assert!(matches!(
            m.predict(&[0.0, 1.0]),
            Err(ModelError::DimensionMismatch {
                expected: 1,
                got: 2
            })
        ));
    }

    #[test]
    fn stored_coefficients_respect_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<Vec<f64>> = (0..90).map(|_| vec![rng.random(), rng.random()]).collect();
        let y: Vec<usize> = x
            .iter()
            .map(|v| {
                if v[0] + v[1] > 1.0 {
                    2
                } else if v[0] > 0.5 {
                    1
                } else {
                    0
                }
            })
            .collect();
        let params = SvmParams {
            c: 2.0,
            ..SvmParams::default()
        };
        let m = SvmModel::train(&x, &y, &params).unwrap();
        assert_eq!(m.pairs.len(), 3);
        for p in &m.pairs {
            for c in &p.dual_coef {
                assert!(c.abs() > 0.0 && c.abs() <= 2.0);
            }
        }
    }

    #[test]
    fn predictions_ignore_training_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<Vec<f64>> = (0..40).map(|_| vec![rng.random(), rng.random()]).collect();
        let y: Vec<usize> = x.iter().map(|v| usize::from(v[0] > v[1])).collect();
        let m = SvmModel::train(&x, &y, &SvmParams::default()).unwrap();
        let mut order: Vec<usize> = (0..40).collect();
        order.reverse();
        let xr: Vec<_> = order.iter().map(|&i| x[i].clone()).collect();
        let yr: Vec<_> = order.iter().map(|&i| y[i]).collect();
        let mr = SvmModel::train(&xr, &yr, &SvmParams::default()).unwrap();
        for _ in 0..50 {
            let q = [rng.random::<f64>(), rng.random::<f64>()];
            let (a, b) = (
                m.pairs[0].decision(&m.kernel, &q),
                mr.pairs[0].decision(&mr.kernel, &q),
            );
            // both solve the same convex problem to tolerance
            assert!((a - b).abs() < 5e-3 || a.signum() == b.signum());
        }
    }
}
