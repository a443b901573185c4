//! DFT and the frequency-domain similarity features.
//!
//! For a signal `s` and a component `c` (the selected IMF or the residue)
//! with spectra `S` and `C`, feature `i` is
//!
//! ```text
//! Re(S[i] * conj(C[i])) / (||S|| * ||C||)
//! ```
//!
//! By Parseval the features sum to the time-domain cosine similarity of `s`
//! and `c`, and they are mirror-symmetric (`f[i] == f[(N - i) % N]`) for real
//! inputs.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DftCoefficients {
    pub values: Vec<Complex64>,
}

impl DftCoefficients {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Complex L2 norm over all coefficients.
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Forward DFT with `exp(-2 pi i k n / N)` kernel, no scaling.
pub fn dft(x: &[f64]) -> Result<DftCoefficients> {
    DftPlan::new(x.len())?.transform(x)
}

/// Reusable transform for one length.
#[derive(Clone)]
pub struct DftPlan {
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for DftPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DftPlan").field("len", &self.fft.len()).finish()
    }
}

impl DftPlan {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyInput("dft"));
        }
        Ok(Self {
            fft: FftPlanner::new().plan_fft_forward(n),
        })
    }

    pub fn len(&self) -> usize {
        self.fft.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fft.len() == 0
    }

    pub fn transform(&self, x: &[f64]) -> Result<DftCoefficients> {
        if x.len() != self.fft.len() {
            return Err(Error::DimensionMismatch {
                expected: self.fft.len(),
                actual: x.len(),
            });
        }
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft.process(&mut buf);
        Ok(DftCoefficients { values: buf })
    }
}

/// `a . b / (|a| |b|)`; 0 when either vector is zero.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub imf_similarity: Vec<f64>,
    pub r_similarity: Vec<f64>,
}

impl FeatureVector {
    /// IMF block followed by residue block, length `2N`.
    pub fn concatenated(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.imf_similarity.len() * 2);
        out.extend_from_slice(&self.imf_similarity);
        out.extend_from_slice(&self.r_similarity);
        out
    }
}

fn similarity_block(signal: &DftCoefficients, signal_norm: f64, comp: &DftCoefficients) -> Vec<f64> {
    let comp_norm = comp.norm();
    if signal_norm == 0.0 || comp_norm == 0.0 {
        return vec![0.0; signal.len()];
    }
    let scale = 1.0 / (signal_norm * comp_norm);
    signal
        .values
        .iter()
        .zip(&comp.values)
        .map(|(s, c)| (s * c.conj()).re * scale)
        .collect()
}

pub fn frequency_similarity_features(
    signal_dft: &DftCoefficients,
    imf_dft: &DftCoefficients,
    r_dft: &DftCoefficients,
) -> Result<FeatureVector> {
    let n = signal_dft.len();
    for other in [imf_dft, r_dft] {
        if other.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: other.len(),
            });
        }
    }
    let signal_norm = signal_dft.norm();
    Ok(FeatureVector {
        imf_similarity: similarity_block(signal_dft, signal_norm, imf_dft),
        r_similarity: similarity_block(signal_dft, signal_norm, r_dft),
    })
}
