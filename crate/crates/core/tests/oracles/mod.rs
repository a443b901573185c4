//! Independent reference computations used by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

/// Direct `O(N^2)` evaluation of `X[k] = sum_n x[n] exp(-2 pi i k n / N)`,
/// as `(re, im)` pairs.
pub fn direct_dft(x: &[f64]) -> Vec<(f64, f64)> {
    let n = x.len();
    (0..n)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (j, &v) in x.iter().enumerate() {
                let ang = -2.0 * PI * ((k * j) % n) as f64 / n as f64;
                re += v * ang.cos();
                im += v * ang.sin();
            }
            (re, im)
        })
        .collect()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

pub fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    (-gamma * a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()).exp()
}

/// Least-squares amplitude of the `f`-Hz component over the second half of `y`.
pub fn probe_amplitude(y: &[f64], f: f64, fs: f64) -> f64 {
    let start = y.len() / 2;
    let (mut ss, mut cc, mut sc, mut ys, mut yc) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (i, v) in y.iter().enumerate().skip(start) {
        let (s, c) = (2.0 * PI * f * i as f64 / fs).sin_cos();
        ss += s * s;
        cc += c * c;
        sc += s * c;
        ys += v * s;
        yc += v * c;
    }
    let det = ss * cc - sc * sc;
    ((ys * cc - yc * sc) / det).hypot((yc * ss - ys * sc) / det)
}

pub struct QpSolution {
    pub alpha: Vec<f64>,
    pub objective: f64,
}

/// `Q_ij = y_i y_j K(x_i, x_j)`.
pub fn dual_matrix(x: &[Vec<f64>], y: &[f64], gamma: f64) -> DMatrix<f64> {
    let n = x.len();
    DMatrix::from_fn(n, n, |i, j| y[i] * y[j] * rbf(&x[i], &x[j], gamma))
}

pub fn dual_objective(q: &DMatrix<f64>, alpha: &[f64]) -> f64 {
    let a = DVector::from_column_slice(alpha);
    0.5 * a.dot(&(q * &a)) - a.sum()
}

/// `m(a) - M(a)`: the largest KKT violation of the dual.
pub fn kkt_gap(q: &DMatrix<f64>, y: &[f64], alpha: &[f64], c: f64) -> f64 {
    let a = DVector::from_column_slice(alpha);
    let g = q * &a - DVector::from_element(alpha.len(), 1.0);
    let (mut up, mut low) = (f64::NEG_INFINITY, f64::INFINITY);
    for i in 0..alpha.len() {
        let v = -y[i] * g[i];
        let in_up = (y[i] > 0.0 && alpha[i] < c) || (y[i] < 0.0 && alpha[i] > 0.0);
        let in_low = (y[i] > 0.0 && alpha[i] > 0.0) || (y[i] < 0.0 && alpha[i] < c);
        if in_up {
            up = up.max(v);
        }
        if in_low {
            low = low.min(v);
        }
    }
    (up - low).max(0.0)
}

/// Projection onto `{0 <= a <= c, y^T a = 0}` by bisection on the
/// equality multiplier.
fn project(v: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let at = |lam: f64| -> Vec<f64> { v.iter().zip(y).map(|(vi, yi)| (vi - lam * yi).clamp(0.0, c)).collect() };
    let s = |a: &[f64]| a.iter().zip(y).map(|(ai, yi)| ai * yi).sum::<f64>();
    let bound = v.iter().fold(0.0f64, |m, x| m.max(x.abs())) + c + 1.0;
    let (mut lo, mut hi) = (-bound, bound);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if s(&at(mid)) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

/// Dense solve of the soft-margin dual: accelerated projected gradient with
/// restarts, then an exact equality-constrained solve on the free set found.
pub fn qp_oracle(x: &[Vec<f64>], y: &[f64], c: f64, gamma: f64) -> QpSolution {
    let n = x.len();
    let q = dual_matrix(x, y, gamma);
    let lmax = q.clone().symmetric_eigenvalues().max().max(1e-12);
    let step = 1.0 / lmax;
    let grad = |a: &[f64]| -> Vec<f64> {
        let av = DVector::from_column_slice(a);
        (&q * av).iter().map(|g| g - 1.0).collect()
    };
    let mut a = vec![0.0; n];
    let mut z = a.clone();
    let mut t = 1.0f64;
    let mut f_prev = f64::INFINITY;
    for _ in 0..40_000 {
        let g = grad(&z);
        let v: Vec<f64> = z.iter().zip(&g).map(|(zi, gi)| zi - step * gi).collect();
        let next = project(&v, y, c);
        let f_next = dual_objective(&q, &next);
        if f_next > f_prev {
            // restart momentum
            t = 1.0;
            z = a.clone();
            f_prev = dual_objective(&q, &a);
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        z = next
            .iter()
            .zip(&a)
            .map(|(nx, ax)| nx + (t - 1.0) / t_next * (nx - ax))
            .collect();
        a = next;
        t = t_next;
        f_prev = f_next;
    }
    let mut best = QpSolution {
        objective: dual_objective(&q, &a),
        alpha: a.clone(),
    };

    // polish: solve the KKT system on the free set with bounds fixed
    let eps = 1e-7 * c.max(1.0);
    let free: Vec<usize> = (0..n).filter(|&i| a[i] > eps && a[i] < c - eps).collect();
    if !free.is_empty() {
        let fixed: Vec<f64> = (0..n).map(|i| if a[i] >= c - eps { c } else { 0.0 }).collect();
        let m = free.len();
        let mut lhs = DMatrix::zeros(m + 1, m + 1);
        let mut rhs = DVector::zeros(m + 1);
        for (r, &i) in free.iter().enumerate() {
            for (s, &j) in free.iter().enumerate() {
                lhs[(r, s)] = q[(i, j)];
            }
            lhs[(r, m)] = y[i];
            lhs[(m, r)] = y[i];
            let off: f64 = (0..n).filter(|k| !free.contains(k)).map(|k| q[(i, k)] * fixed[k]).sum();
            rhs[r] = 1.0 - off;
        }
        rhs[m] = -(0..n)
            .filter(|k| !free.contains(k))
            .map(|k| y[k] * fixed[k])
            .sum::<f64>();
        if let Some(sol) = lhs.lu().solve(&rhs) {
            let mut polished = fixed;
            for (r, &i) in free.iter().enumerate() {
                polished[i] = sol[r];
            }
            let feasible = polished.iter().all(|v| *v >= -1e-12 && *v <= c + 1e-12)
                && polished.iter().zip(y).map(|(a, y)| a * y).sum::<f64>().abs() <= 1e-9;
            let obj = dual_objective(&q, &polished);
            if feasible && obj <= best.objective {
                best = QpSolution {
                    alpha: polished,
                    objective: obj,
                };
            }
        }
    }
    best
}
