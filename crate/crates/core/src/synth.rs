//! Synthetic ECG-like signals: tones, tone mixtures, QRS-like impulse trains
//! and noise, plus a labeled two-class episode corpus.
//!
//! VF-like episodes are dominated by a 3-8 Hz oscillation with slow amplitude
//! and frequency wander. QRS-like episodes are trains of narrow biphasic
//! complexes with a broad T wave at 50-150 beats per minute. Both get
//! baseline wander and white noise.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::wfdb::{window_len, EcgEpisode, EpisodeLabel, EpisodeSource};

pub fn tone(freq_hz: f64, amplitude: f64, phase: f64, fs: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| amplitude * (2.0 * PI * freq_hz * i as f64 / fs + phase).sin())
        .collect()
}

/// Sum of `(freq_hz, amplitude, phase)` tones.
pub fn tone_mixture(components: &[(f64, f64, f64)], fs: f64, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for &(f, a, p) in components {
        for (o, v) in out.iter_mut().zip(tone(f, a, p, fs, n)) {
            *o += v;
        }
    }
    out
}

pub fn white_noise<R: Rng + ?Sized>(sigma: f64, n: usize, rng: &mut R) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![0.0; n];
    }
    let d = Normal::new(0.0, sigma).expect("positive sigma");
    (0..n).map(|_| d.sample(rng)).collect()
}

fn gaussian(t: f64, center: f64, width: f64) -> f64 {
    let z = (t - center) / width;
    (-0.5 * z * z).exp()
}

/// Beat train at `rate_bpm` with up to `jitter` relative RR variation.
/// Each beat is a narrow R spike with small Q/S dips and a broad T wave.
pub fn qrs_train<R: Rng + ?Sized>(
    rate_bpm: f64,
    amplitude: f64,
    jitter: f64,
    fs: f64,
    n: usize,
    rng: &mut R,
) -> Vec<f64> {
    let rr = 60.0 / rate_bpm;
    let duration = n as f64 / fs;
    let mut beats = Vec::new();
    let mut t = rng.random_range(0.0..rr);
    while t < duration + 0.5 {
        beats.push(t);
        t += rr * (1.0 + rng.random_range(-jitter..=jitter));
    }
    (0..n)
        .map(|i| {
            let t = i as f64 / fs;
            beats
                .iter()
                .filter(|&&b| (t - b).abs() < 0.6)
                .map(|&b| {
                    amplitude
                        * (gaussian(t, b, 0.010)
                            - 0.15 * gaussian(t, b - 0.025, 0.008)
                            - 0.25 * gaussian(t, b + 0.025, 0.010)
                            + 0.25 * gaussian(t, b + 0.28, 0.045))
                })
                .sum()
        })
        .collect()
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn baseline_wander<R: Rng + ?Sized>(fs: f64, n: usize, rng: &mut R) -> Vec<f64> {
    tone(
        rng.random_range(0.1..0.4),
        rng.random_range(0.0..0.3),
        rng.random_range(0.0..2.0 * PI),
        fs,
        n,
    )
}

/// Tone-dominated VF-like signal with slow amplitude and frequency wander.
pub fn vf_like<R: Rng + ?Sized>(fs: f64, n: usize, noise_sd: f64, rng: &mut R) -> Vec<f64> {
    let f0 = rng.random_range(3.0..8.0);
    let amp = rng.random_range(0.3..1.5);
    let am_rate = rng.random_range(0.1..0.5);
    let am_depth = rng.random_range(0.0..0.4);
    let fm_depth = rng.random_range(0.0..0.4);
    let fm_rate = rng.random_range(0.1..0.4);
    let (p0, p1, p2) = (
        rng.random_range(0.0..2.0 * PI),
        rng.random_range(0.0..2.0 * PI),
        rng.random_range(0.0..2.0 * PI),
    );
    let mut phase = p0;
    let mut x: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / fs;
            let f = f0 + fm_depth * (2.0 * PI * fm_rate * t + p1).sin();
            phase += 2.0 * PI * f / fs;
            amp * (1.0 + am_depth * (2.0 * PI * am_rate * t + p2).sin()) * phase.sin()
        })
        .collect();
    // weak harmonic
    let h = tone(2.0 * f0, amp * rng.random_range(0.0..0.2), p1, fs, n);
    add_into(&mut x, &h);
    add_into(&mut x, &baseline_wander(fs, n, rng));
    add_into(&mut x, &white_noise(noise_sd, n, rng));
    x
}

/// Organized rhythm: QRS-like beats at 50-150 bpm.
pub fn qrs_like<R: Rng + ?Sized>(fs: f64, n: usize, noise_sd: f64, rng: &mut R) -> Vec<f64> {
    let rate = rng.random_range(50.0..150.0);
    let amp = rng.random_range(0.6..2.0);
    let mut x = qrs_train(rate, amp, 0.08, fs, n, rng);
    add_into(&mut x, &baseline_wander(fs, n, rng));
    add_into(&mut x, &white_noise(noise_sd, n, rng));
    x
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthCorpusConfig {
    pub n_vf: usize,
    pub n_not_vf: usize,
    pub sampling_rate_hz: f64,
    pub episode_length_s: f64,
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for SynthCorpusConfig {
    fn default() -> Self {
        Self {
            n_vf: 500,
            n_not_vf: 500,
            sampling_rate_hz: 250.0,
            episode_length_s: 5.0,
            noise_sd: 0.05,
            seed: 0,
        }
    }
}

/// `n_vf` VF-like then `n_not_vf` QRS-like episodes. Episode `i` uses its own
/// RNG stream, so the corpus is the same regardless of thread count.
pub fn synth_corpus(cfg: &SynthCorpusConfig) -> Result<Vec<EcgEpisode>> {
    if !(cfg.sampling_rate_hz > 0.0 && cfg.episode_length_s > 0.0) {
        return Err(invalid("synth", "sampling rate and episode length must be positive"));
    }
    let n = window_len(cfg.episode_length_s, cfg.sampling_rate_hz);
    (0..cfg.n_vf + cfg.n_not_vf)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            let vf = i < cfg.n_vf;
            let (samples, label, record) = if vf {
                (
                    vf_like(cfg.sampling_rate_hz, n, cfg.noise_sd, &mut rng),
                    EpisodeLabel::Vf,
                    "synth_vf",
                )
            } else {
                (
                    qrs_like(cfg.sampling_rate_hz, n, cfg.noise_sd, &mut rng),
                    EpisodeLabel::NotVf,
                    "synth_qrs",
                )
            };
            EcgEpisode::new(
                samples,
                cfg.sampling_rate_hz,
                cfg.episode_length_s,
                label,
                EpisodeSource {
                    record: record.into(),
                    start: i,
                },
            )
        })
        .collect()
}
