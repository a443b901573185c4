//! Empirical mode decomposition and noise-level-crossing-ratio component
//! selection.
//!
//! The signal is split as `x = IMF_1 + IMF_2 + R` by repeated sifting. Each
//! sift subtracts the mean of the upper and lower cubic-spline envelopes
//! until the Cauchy-type criterion
//! `SD = sum (h_{k-1} - h_k)^2 / sum h_{k-1}^2 < sift_sd_threshold`
//! holds together with the extrema/zero-crossing balance of an IMF.
//!
//! Component selection then decides whether `IMF_1` alone is noise-like:
//!
//! ```text
//! V_n  = alpha * max(x)
//! n_L  = { t : |IMF_1(t)| <= V_n }
//! NLCR = sum_{n_L} IMF_1^2 / sum_{n_L} x^2
//! IMF  = IMF_1 + IMF_2   if NLCR <= beta
//!        IMF_1           otherwise
//! ```

pub mod spline;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use spline::NaturalSpline;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmdConfig {
    pub alpha: f64,
    pub beta: f64,
    pub max_imfs: usize,
    pub sift_sd_threshold: f64,
    pub max_sift_iterations: usize,
    /// Use `max|x|` instead of `max(x)` for the noise level.
    pub noise_level_abs: bool,
    /// Swap the two branches of the selection rule (sensitivity analysis).
    pub invert_nlcr_branch: bool,
}

impl Default for EmdConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            beta: 0.02,
            max_imfs: 2,
            sift_sd_threshold: 0.2,
            max_sift_iterations: 100,
            noise_level_abs: false,
            invert_nlcr_branch: false,
        }
    }
}

impl EmdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(invalid("alpha", "must be positive"));
        }
        if !(self.beta > 0.0) {
            return Err(invalid("beta", "must be positive"));
        }
        if self.max_sift_iterations < 1 {
            return Err(invalid("max_sift_iterations", "must be at least 1"));
        }
        if !(self.sift_sd_threshold > 0.0) {
            return Err(invalid("sift_sd_threshold", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImfSet {
    pub imfs: Vec<Vec<f64>>,
    pub residue: Vec<f64>,
    pub source_length: usize,
}

impl ImfSet {
    /// `sum(imfs) + residue`.
    pub fn reconstruct(&self) -> Vec<f64> {
        let mut out = self.residue.clone();
        for imf in &self.imfs {
            for (o, v) in out.iter_mut().zip(imf) {
                *o += v;
            }
        }
        out
    }

    /// The i-th IMF, or zeros when fewer were extracted.
    pub fn imf_or_zero(&self, i: usize) -> Vec<f64> {
        self.imfs
            .get(i)
            .cloned()
            .unwrap_or_else(|| vec![0.0; self.source_length])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectedComponents {
    pub imf: Vec<f64>,
    pub residue: Vec<f64>,
    pub nlcr: f64,
    pub noise_level_v_n: f64,
    /// True when the selected IMF is `IMF_1 + IMF_2`.
    pub merged_second_imf: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SiftOutcome {
    Imf {
        component: Vec<f64>,
        iterations: usize,
    },
    /// Not enough extrema left to build envelopes; decomposition stops.
    MonotoneResidue,
}

/// `(position, value)`.
type Knot = (f64, f64);

/// Interior extrema as `(position, value)`. A run of equal samples bounded
/// on both sides by lower (higher) samples is one maximum (minimum) placed at
/// the run's midpoint.
fn extrema(x: &[f64]) -> (Vec<Knot>, Vec<Knot>) {
    let mut maxima = Vec::new();
    let mut minima = Vec::new();
    let n = x.len();
    let mut i = 1;
    while i + 1 < n {
        let mut j = i;
        while j + 1 < n && x[j + 1] == x[i] {
            j += 1;
        }
        if j + 1 >= n {
            break;
        }
        let pos = 0.5 * (i + j) as f64;
        if x[i - 1] < x[i] && x[j + 1] < x[j] {
            maxima.push((pos, x[i]));
        } else if x[i - 1] > x[i] && x[j + 1] > x[j] {
            minima.push((pos, x[i]));
        }
        i = j + 1;
    }
    (maxima, minima)
}

fn zero_crossings(x: &[f64]) -> usize {
    let mut last = 0.0f64;
    let mut count = 0;
    for &v in x {
        if v == 0.0 {
            continue;
        }
        if last != 0.0 && (v > 0.0) != (last > 0.0) {
            count += 1;
        }
        last = v;
    }
    count
}

/// Interior extrema (flat runs count once) and sign changes (zeros take the sign of the
/// next nonzero sample).
pub fn count_extrema_zero_crossings(x: &[f64]) -> Result<(usize, usize)> {
    if x.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "need at least 3 samples to count extrema, got {}",
            x.len()
        )));
    }
    let (maxima, minima) = extrema(x);
    Ok((maxima.len() + minima.len(), zero_crossings(x)))
}

fn satisfies_imf_balance(x: &[f64]) -> bool {
    let (maxima, minima) = extrema(x);
    (maxima.len() + minima.len()).abs_diff(zero_crossings(x)) <= 1
}

/// Spline through `points`, with the two extrema nearest each edge mirrored
/// across it.
fn envelope(points: &[Knot], n: usize) -> Option<Vec<f64>> {
    let edge = (n - 1) as f64;
    let k = points.len();
    let mut knots: Vec<Knot> = Vec::with_capacity(k + 4);
    for &(t, v) in points[..2.min(k)].iter().rev() {
        knots.push((-t, v));
    }
    knots.extend_from_slice(points);
    for &(t, v) in points[k.saturating_sub(2)..].iter().rev() {
        knots.push((2.0 * edge - t, v));
    }
    let (ts, vs) = knots.into_iter().unzip();
    Some(NaturalSpline::new(ts, vs)?.sample_grid(n))
}

/// Mean of the upper and lower envelopes, `None` if either cannot be built.
pub fn envelope_mean(x: &[f64]) -> Option<Vec<f64>> {
    let (maxima, minima) = extrema(x);
    if maxima.len() < 2 || minima.len() < 2 {
        return None;
    }
    let upper = envelope(&maxima, x.len())?;
    let lower = envelope(&minima, x.len())?;
    Some(upper.iter().zip(&lower).map(|(u, l)| 0.5 * (u + l)).collect())
}

/// Extracts one IMF from `x`.
pub fn sift(x: &[f64], cfg: &EmdConfig) -> SiftOutcome {
    let Some(mut mean) = envelope_mean(x) else {
        return SiftOutcome::MonotoneResidue;
    };
    let mut h = x.to_vec();
    let mut iterations = 0;
    while iterations < cfg.max_sift_iterations {
        iterations += 1;
        let energy: f64 = h.iter().map(|v| v * v).sum();
        let change: f64 = mean.iter().map(|m| m * m).sum();
        for (v, m) in h.iter_mut().zip(&mean) {
            *v -= m;
        }
        let sd = if energy > 0.0 { change / energy } else { 0.0 };
        if sd < cfg.sift_sd_threshold && satisfies_imf_balance(&h) {
            break;
        }
        match envelope_mean(&h) {
            Some(m) => mean = m,
            None => break,
        }
    }
    SiftOutcome::Imf {
        component: h,
        iterations,
    }
}

/// Up to `cfg.max_imfs` IMFs by repeated sift-and-subtract; the residue is
/// whatever remains.
pub fn decompose(x: &[f64], cfg: &EmdConfig) -> ImfSet {
    let mut residue = x.to_vec();
    let mut imfs = Vec::with_capacity(cfg.max_imfs);
    while imfs.len() < cfg.max_imfs {
        match sift(&residue, cfg) {
            SiftOutcome::Imf { component, .. } => {
                for (r, c) in residue.iter_mut().zip(&component) {
                    *r -= c;
                }
                imfs.push(component);
            }
            SiftOutcome::MonotoneResidue => break,
        }
    }
    ImfSet {
        imfs,
        residue,
        source_length: x.len(),
    }
}

/// Applies the noise-level-crossing-ratio rule to choose the working IMF.
///
/// The residue is always the decomposition residue `R`; when `IMF_1` alone
/// is selected, `IMF_2` is dropped.
pub fn select_components(x: &[f64], imfset: &ImfSet, cfg: &EmdConfig) -> Result<SelectedComponents> {
    if x.len() != imfset.source_length {
        return Err(Error::DimensionMismatch {
            expected: imfset.source_length,
            actual: x.len(),
        });
    }
    if x.is_empty() {
        return Err(Error::EmptyInput("select_components"));
    }
    let imf1 = imfset.imf_or_zero(0);
    let imf2 = imfset.imf_or_zero(1);

    let peak = if cfg.noise_level_abs {
        x.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    } else {
        x.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    };
    let v_n = cfg.alpha * peak;

    let (mut num, mut den, mut any) = (0.0, 0.0, false);
    for (i1, xv) in imf1.iter().zip(x) {
        if i1.abs() <= v_n {
            any = true;
            num += i1 * i1;
            den += xv * xv;
        }
    }
    let nlcr = if !any {
        f64::INFINITY
    } else if den > 0.0 {
        num / den
    } else if num == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };

    let mut merge = nlcr <= cfg.beta;
    if cfg.invert_nlcr_branch {
        merge = !merge;
    }
    let imf = if merge {
        imf1.iter().zip(&imf2).map(|(a, b)| a + b).collect()
    } else {
        imf1
    };
    Ok(SelectedComponents {
        imf,
        residue: imfset.residue.clone(),
        nlcr,
        noise_level_v_n: v_n,
        merged_second_imf: merge,
    })
}
