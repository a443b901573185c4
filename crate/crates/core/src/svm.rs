//! RBF-kernel support vector classifier.
//!
//! Training solves the soft-margin dual
//!
//! ```text
//! min  1/2 a^T Q a - e^T a    s.t.  0 <= a_i <= C,  y^T a = 0,
//! Q_ij = y_i y_j K(x_i, x_j),  K(x, x') = exp(-gamma ||x - x'||^2)
//! ```
//!
//! by sequential minimal optimization with second-order working-set
//! selection and no shrinking. The decision function is
//! `f(x) = sum_i a_i y_i K(x_i, x) + b`; `f(x) == 0` is classified VF.

use std::collections::HashMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{class_counts, feature_dim, Dataset};
use crate::error::{invalid, Error, Result};
use crate::eval::{ConfusionMatrix, Metrics};
use crate::wfdb::EpisodeLabel;

const TAU: f64 = 1e-12;

pub fn rbf_kernel(x: &[f64], x2: &[f64], gamma: f64) -> Result<f64> {
    if x.len() != x2.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: x2.len(),
        });
    }
    if !(gamma >= 0.0) {
        return Err(invalid("gamma", "must be non-negative"));
    }
    Ok(rbf(x, x2, gamma))
}

fn rbf(x: &[f64], x2: &[f64], gamma: f64) -> f64 {
    let d: f64 = x.iter().zip(x2).map(|(a, b)| (a - b) * (a - b)).sum();
    (-gamma * d).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub c: f64,
    pub gamma: f64,
    /// Stop once the maximal KKT violation `m(a) - M(a)` is below this.
    pub tol: f64,
    pub max_iterations: u64,
    /// Kernel storage budget; the full matrix is kept when it fits.
    pub cache_bytes: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            c: 100.0,
            gamma: 45.0,
            tol: 1e-3,
            max_iterations: 10_000_000,
            cache_bytes: 512 << 20,
        }
    }
}

impl SvmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(invalid("c", format!("must be positive, got {}", self.c)));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(invalid("gamma", format!("must be non-negative, got {}", self.gamma)));
        }
        if !(self.tol > 0.0) {
            return Err(invalid("tol", "must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(invalid("max_iterations", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingStats {
    pub iterations: u64,
    /// `m(a) - M(a)` at termination.
    pub kkt_gap: f64,
    /// `1/2 a^T Q a - e^T a`.
    pub dual_objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub support_vectors: Vec<Vec<f64>>,
    /// `a_i * y_i` per support vector.
    pub dual_coefficients: Vec<f64>,
    pub bias: f64,
    pub gamma: f64,
    pub c: f64,
    pub stats: TrainingStats,
}

impl SvmModel {
    pub fn dim(&self) -> usize {
        self.support_vectors.first().map_or(0, Vec::len)
    }

    pub fn decision_value(&self, x: &[f64]) -> Result<f64> {
        if !self.support_vectors.is_empty() && x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        let sum: f64 = self
            .support_vectors
            .iter()
            .zip(&self.dual_coefficients)
            .map(|(sv, coef)| coef * rbf(sv, x, self.gamma))
            .sum();
        Ok(sum + self.bias)
    }

    /// `(label, decision value)`; a decision of exactly 0 is VF.
    pub fn predict(&self, x: &[f64]) -> Result<(EpisodeLabel, f64)> {
        let d = self.decision_value(x)?;
        let label = if d >= 0.0 {
            EpisodeLabel::Vf
        } else {
            EpisodeLabel::NotVf
        };
        Ok((label, d))
    }

    pub fn predict_batch(&self, x: &[Vec<f64>]) -> Result<Vec<(EpisodeLabel, f64)>> {
        x.par_iter().map(|row| self.predict(row)).collect()
    }
}

/// Kernel rows, either all precomputed or held in a bounded cache.
struct KernelRows<'a> {
    x: &'a [Vec<f64>],
    gamma: f64,
    capacity: usize,
    rows: HashMap<usize, (Arc<[f64]>, u64)>,
    clock: u64,
}

impl<'a> KernelRows<'a> {
    fn new(x: &'a [Vec<f64>], gamma: f64, cache_bytes: usize) -> Self {
        let n = x.len();
        let row_bytes = n * std::mem::size_of::<f64>();
        let capacity = (cache_bytes / row_bytes.max(1)).clamp(2, n.max(2));
        let mut k = Self {
            x,
            gamma,
            capacity,
            rows: HashMap::new(),
            clock: 0,
        };
        if capacity >= n {
            let all: Vec<Arc<[f64]>> = (0..n).into_par_iter().map(|i| k.compute(i)).collect();
            k.rows = all.into_iter().enumerate().map(|(i, r)| (i, (r, 0))).collect();
        }
        k
    }

    fn compute(&self, i: usize) -> Arc<[f64]> {
        let xi = &self.x[i];
        let row: Vec<f64> = if self.x.len() >= 512 {
            self.x.par_iter().map(|xt| rbf(xi, xt, self.gamma)).collect()
        } else {
            self.x.iter().map(|xt| rbf(xi, xt, self.gamma)).collect()
        };
        row.into()
    }

    fn row(&mut self, i: usize) -> Arc<[f64]> {
        self.clock += 1;
        if let Some(entry) = self.rows.get_mut(&i) {
            entry.1 = self.clock;
            return entry.0.clone();
        }
        if self.rows.len() >= self.capacity {
            let oldest = *self.rows.iter().min_by_key(|(_, (_, t))| *t).map(|(k, _)| k).unwrap();
            self.rows.remove(&oldest);
        }
        let row = self.compute(i);
        self.rows.insert(i, (row.clone(), self.clock));
        row
    }
}

fn check_training_set(x: &[Vec<f64>], y: &[EpisodeLabel]) -> Result<()> {
    feature_dim(x)?;
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    let (pos, neg) = class_counts(y);
    if pos == 0 || neg == 0 {
        return Err(Error::InsufficientData(format!(
            "SVM training needs both classes, got {pos} VF and {neg} NOT_VF"
        )));
    }
    Ok(())
}

/// Solves the dual to `params.tol` and returns the support-vector model.
pub fn train(x: &[Vec<f64>], y: &[EpisodeLabel], params: &SvmParams) -> Result<SvmModel> {
    params.validate()?;
    check_training_set(x, y)?;
    let n = x.len();
    let c = params.c;
    let ys: Vec<f64> = y.iter().map(|l| l.sign()).collect();
    let mut alpha = vec![0.0; n];
    // gradient of the dual objective, Q a - e
    let mut grad = vec![-1.0; n];
    let mut kernel = KernelRows::new(x, params.gamma, params.cache_bytes);
    let diag: Vec<f64> = x.iter().map(|r| rbf(r, r, params.gamma)).collect();
    let upper = |a: f64| a >= c;
    let lower = |a: f64| a <= 0.0;

    let mut iterations = 0u64;
    let gap = loop {
        // i maximizes -y_t G_t over I_up
        let mut g_max = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..n {
            let v = -ys[t] * grad[t];
            let in_up = if ys[t] > 0.0 {
                !upper(alpha[t])
            } else {
                !lower(alpha[t])
            };
            if in_up && v >= g_max {
                g_max = v;
                i_sel = Some(t);
            }
        }
        // j minimizes the second-order decrease over I_low
        let mut g_max2 = f64::NEG_INFINITY;
        let mut j_sel = None;
        let mut best_obj = f64::INFINITY;
        let k_i = i_sel.map(|i| kernel.row(i));
        for t in 0..n {
            let in_low = if ys[t] > 0.0 {
                !lower(alpha[t])
            } else {
                !upper(alpha[t])
            };
            if !in_low {
                continue;
            }
            let v = -ys[t] * grad[t];
            g_max2 = g_max2.max(-v);
            if let (Some(i), Some(k_i)) = (i_sel, &k_i) {
                let grad_diff = g_max - v;
                if grad_diff > 0.0 {
                    let quad = diag[i] + diag[t] - 2.0 * k_i[t];
                    let quad = if quad > 0.0 { quad } else { TAU };
                    let obj = -(grad_diff * grad_diff) / quad;
                    if obj <= best_obj {
                        best_obj = obj;
                        j_sel = Some(t);
                    }
                }
            }
        }
        let gap = g_max + g_max2;
        let (Some(i), Some(j)) = (i_sel, j_sel) else {
            break gap.max(0.0);
        };
        if gap < params.tol {
            break gap;
        }
        if iterations >= params.max_iterations {
            return Err(Error::NonConvergence {
                iterations: iterations as usize,
                max_violation: gap,
            });
        }
        iterations += 1;

        let k_i = k_i.expect("row for i");
        let k_j = kernel.row(j);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let q_ij = ys[i] * ys[j] * k_i[j];
        if ys[i] != ys[j] {
            let quad = diag[i] + diag[j] + 2.0 * q_ij;
            let quad = if quad > 0.0 { quad } else { TAU };
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
            let quad = diag[i] + diag[j] - 2.0 * q_ij;
            let quad = if quad > 0.0 { quad } else { TAU };
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
        let d_i = (alpha[i] - old_i) * ys[i];
        let d_j = (alpha[j] - old_j) * ys[j];
        for t in 0..n {
            grad[t] += ys[t] * (k_i[t] * d_i + k_j[t] * d_j);
        }
    };

    // b from free vectors, or the midpoint of the feasible interval
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut free_sum) = (0usize, 0.0);
    for t in 0..n {
        let yg = ys[t] * grad[t];
        if upper(alpha[t]) {
            if ys[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if lower(alpha[t]) {
            if ys[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            free_sum += yg;
        }
    }
    let rho = if free > 0 {
        free_sum / free as f64
    } else {
        0.5 * (ub + lb)
    };

    let dual_objective = 0.5 * alpha.iter().zip(&grad).map(|(a, g)| a * (g - 1.0)).sum::<f64>();
    let sv: Vec<usize> = (0..n).filter(|&t| alpha[t] > 0.0).collect();
    Ok(SvmModel {
        support_vectors: sv.iter().map(|&t| x[t].clone()).collect(),
        dual_coefficients: sv.iter().map(|&t| alpha[t] * ys[t]).collect(),
        bias: -rho,
        gamma: params.gamma,
        c,
        stats: TrainingStats {
            iterations,
            kkt_gap: gap,
            dual_objective,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GridObjective {
    GMean,
    Accuracy,
}

impl GridObjective {
    fn score(self, m: &Metrics) -> Option<f64> {
        match self {
            GridObjective::GMean => m.g_mean,
            GridObjective::Accuracy => m.accuracy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchSpec {
    pub c_values: Vec<f64>,
    pub gamma_values: Vec<f64>,
    pub objective: GridObjective,
}

impl Default for GridSearchSpec {
    fn default() -> Self {
        Self {
            c_values: vec![1.0, 10.0, 100.0],
            gamma_values: vec![15.0, 30.0, 45.0, 60.0],
            objective: GridObjective::GMean,
        }
    }
}

impl GridSearchSpec {
    pub fn validate(&self) -> Result<()> {
        if self.c_values.is_empty() || self.gamma_values.is_empty() {
            return Err(invalid("grid", "C and gamma grids must be non-empty"));
        }
        if self.c_values.iter().chain(&self.gamma_values).any(|v| !(*v > 0.0)) {
            return Err(invalid("grid", "grid values must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub c: f64,
    pub gamma: f64,
    pub confusion: ConfusionMatrix,
    /// Objective on the validation split; `None` when undefined.
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchReport {
    pub best_c: f64,
    pub best_gamma: f64,
    /// Row-major over `c_values` then `gamma_values`.
    pub points: Vec<GridPoint>,
}

/// Random holdout with exactly `n_vf` VF and `n_not_vf` NOT_VF rows in the
/// training split and everything else in the validation split.
pub fn holdout_split(data: &Dataset, n_vf: usize, n_not_vf: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::with_capacity(n_vf + n_not_vf);
    let mut valid = Vec::new();
    for (label, want) in [(EpisodeLabel::Vf, n_vf), (EpisodeLabel::NotVf, n_not_vf)] {
        let mut idx = data.indices_of(label);
        if idx.len() <= want {
            return Err(Error::InsufficientData(format!(
                "holdout wants {want} {label} training samples plus validation, only {} available",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        train.extend_from_slice(&idx[..want]);
        valid.extend_from_slice(&idx[want..]);
    }
    train.sort_unstable();
    valid.sort_unstable();
    Ok((data.subset(&train), data.subset(&valid)))
}

/// Trains one model per `(C, gamma)` in parallel and picks the best
/// validation score; ties go to the earlier grid point.
pub fn grid_search(
    train_set: &Dataset,
    validation: &Dataset,
    spec: &GridSearchSpec,
    base: &SvmParams,
) -> Result<GridSearchReport> {
    spec.validate()?;
    if validation.is_empty() {
        return Err(Error::EmptyInput("validation split"));
    }
    let grid: Vec<(f64, f64)> = spec
        .c_values
        .iter()
        .flat_map(|&c| spec.gamma_values.iter().map(move |&g| (c, g)))
        .collect();
    let points: Vec<GridPoint> = grid
        .par_iter()
        .map(|&(c, gamma)| {
            let params = SvmParams {
                c,
                gamma,
                ..base.clone()
            };
            let model = train(&train_set.features, &train_set.labels, &params)?;
            let predicted: Vec<EpisodeLabel> = model
                .predict_batch(&validation.features)?
                .into_iter()
                .map(|(l, _)| l)
                .collect();
            let confusion = ConfusionMatrix::from_labels(&validation.labels, &predicted)?;
            let score = spec.objective.score(&confusion.metrics()?);
            log::info!("grid point C={c} gamma={gamma}: score {score:?}");
            Ok(GridPoint {
                c,
                gamma,
                confusion,
                score,
            })
        })
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, p) in points.iter().enumerate() {
        let s = p.score.unwrap_or(f64::NEG_INFINITY);
        if s > points[best].score.unwrap_or(f64::NEG_INFINITY) {
            best = i;
        }
    }
    Ok(GridSearchReport {
        best_c: points[best].c,
        best_gamma: points[best].gamma,
        points,
    })
}
