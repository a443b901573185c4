//! Four-stage conditioning applied to every episode before decomposition:
//! mean removal, a length-5 moving average, a 1 Hz drift high-pass and an
//! order-12 Butterworth low-pass at 20 Hz. All stages are causal.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterChainConfig {
    pub ma_order: usize,
    pub hp_cutoff_hz: f64,
    pub hp_order: usize,
    pub lp_cutoff_hz: f64,
    pub lp_order: usize,
}

impl Default for FilterChainConfig {
    fn default() -> Self {
        Self {
            ma_order: 5,
            hp_cutoff_hz: 1.0,
            hp_order: 2,
            lp_cutoff_hz: 20.0,
            lp_order: 12,
        }
    }
}

impl FilterChainConfig {
    pub fn validate(&self, fs: f64) -> Result<()> {
        if self.ma_order < 1 {
            return Err(invalid("ma_order", "must be at least 1"));
        }
        if !(self.hp_cutoff_hz > 0.0 && self.hp_cutoff_hz < self.lp_cutoff_hz && self.lp_cutoff_hz < fs / 2.0) {
            return Err(invalid(
                "lp_cutoff_hz",
                format!(
                    "need 0 < hp ({}) < lp ({}) < fs/2 ({})",
                    self.hp_cutoff_hz,
                    self.lp_cutoff_hz,
                    fs / 2.0
                ),
            ));
        }
        for (name, order) in [("hp_order", self.hp_order), ("lp_order", self.lp_order)] {
            if order < 2 || !order.is_multiple_of(2) {
                return Err(invalid(name, "must be even and at least 2"));
            }
        }
        Ok(())
    }
}

/// Direct-form-II-transposed second-order section, `a0` normalised to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Biquad {
    /// Pole magnitudes of `z^2 + a1 z + a2`.
    pub fn pole_magnitudes(&self) -> [f64; 2] {
        let disc = self.a1 * self.a1 - 4.0 * self.a2;
        if disc < 0.0 {
            // complex pair: |p|^2 = a2
            let m = self.a2.sqrt();
            [m, m]
        } else {
            let s = disc.sqrt();
            [((-self.a1 + s) / 2.0).abs(), ((-self.a1 - s) / 2.0).abs()]
        }
    }

    /// Magnitude response at `f` Hz.
    pub fn gain_at(&self, f: f64, fs: f64) -> f64 {
        let w = 2.0 * PI * f / fs;
        let (c1, s1, c2, s2) = (w.cos(), w.sin(), (2.0 * w).cos(), (2.0 * w).sin());
        let num_re = self.b0 + self.b1 * c1 + self.b2 * c2;
        let num_im = -(self.b1 * s1 + self.b2 * s2);
        let den_re = 1.0 + self.a1 * c1 + self.a2 * c2;
        let den_im = -(self.a1 * s1 + self.a2 * s2);
        (num_re.hypot(num_im)) / (den_re.hypot(den_im))
    }

    fn filter_in_place(&self, x: &mut [f64]) {
        let (mut z1, mut z2) = (0.0, 0.0);
        for v in x.iter_mut() {
            let input = *v;
            let out = self.b0 * input + z1;
            z1 = self.b1 * input - self.a1 * out + z2;
            z2 = self.b2 * input - self.a2 * out;
            *v = out;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ButterworthKind {
    Lowpass,
    Highpass,
}

/// Cascade of second-order sections.
#[derive(Debug, Clone, PartialEq)]
pub struct SosFilter {
    pub sections: Vec<Biquad>,
}

impl SosFilter {
    /// Even-order Butterworth via bilinear transform with pre-warping.
    ///
    /// Each analog prototype section is `1 / (s^2 + 2 sin(theta_k) s + 1)` with
    /// `theta_k = pi (2k + 1) / (2n)`; the high-pass uses `s^2` as numerator.
    pub fn butterworth(kind: ButterworthKind, order: usize, fc: f64, fs: f64) -> Result<Self> {
        if order < 2 || !order.is_multiple_of(2) {
            return Err(invalid("order", format!("{order} is not an even order >= 2")));
        }
        if !(fc > 0.0 && fc < fs / 2.0) {
            return Err(invalid("cutoff", format!("{fc} Hz is outside (0, {})", fs / 2.0)));
        }
        let k = (PI * fc / fs).tan();
        let k2 = k * k;
        let sections = (0..order / 2)
            .map(|i| {
                let theta = PI * (2 * i + 1) as f64 / (2 * order) as f64;
                let inv_q = 2.0 * theta.sin();
                let norm = 1.0 / (1.0 + inv_q * k + k2);
                let a1 = 2.0 * (k2 - 1.0) * norm;
                let a2 = (1.0 - inv_q * k + k2) * norm;
                match kind {
                    ButterworthKind::Lowpass => Biquad {
                        b0: k2 * norm,
                        b1: 2.0 * k2 * norm,
                        b2: k2 * norm,
                        a1,
                        a2,
                    },
                    ButterworthKind::Highpass => Biquad {
                        b0: norm,
                        b1: -2.0 * norm,
                        b2: norm,
                        a1,
                        a2,
                    },
                }
            })
            .collect();
        let filter = Self { sections };
        filter.check_stable()?;
        Ok(filter)
    }

    pub fn max_pole_magnitude(&self) -> f64 {
        self.sections
            .iter()
            .flat_map(|s| s.pole_magnitudes())
            .fold(0.0, f64::max)
    }

    fn check_stable(&self) -> Result<()> {
        let m = self.max_pole_magnitude();
        if m >= 1.0 {
            return Err(Error::UnstableFilter(m));
        }
        Ok(())
    }

    pub fn gain_at(&self, f: f64, fs: f64) -> f64 {
        self.sections.iter().map(|s| s.gain_at(f, fs)).product()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        for s in &self.sections {
            s.filter_in_place(&mut y);
        }
        y
    }
}

pub fn remove_mean(x: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::EmptyInput("remove_mean"));
    }
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    Ok(x.iter().map(|v| v - mean).collect())
}

/// Causal boxcar of length `order` with zero initial state.
pub fn moving_average(x: &[f64], order: usize) -> Result<Vec<f64>> {
    if order < 1 {
        return Err(invalid("ma_order", "must be at least 1"));
    }
    let scale = 1.0 / order as f64;
    Ok((0..x.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(order);
            x[lo..=i].iter().sum::<f64>() * scale
        })
        .collect())
}

/// Second-order Butterworth high-pass at `fc`.
pub fn highpass_drift(x: &[f64], fc: f64, fs: f64) -> Result<Vec<f64>> {
    Ok(SosFilter::butterworth(ButterworthKind::Highpass, 2, fc, fs)?.apply(x))
}

pub fn butterworth_lowpass(x: &[f64], fc: f64, fs: f64, order: usize) -> Result<Vec<f64>> {
    Ok(SosFilter::butterworth(ButterworthKind::Lowpass, order, fc, fs)?.apply(x))
}

/// Runs the whole chain on one episode's samples.
pub fn preprocess(x: &[f64], fs: f64, cfg: &FilterChainConfig) -> Result<Vec<f64>> {
    cfg.validate(fs)?;
    let y = remove_mean(x)?;
    let y = moving_average(&y, cfg.ma_order)?;
    let hp = SosFilter::butterworth(ButterworthKind::Highpass, cfg.hp_order, cfg.hp_cutoff_hz, fs)?;
    let lp = SosFilter::butterworth(ButterworthKind::Lowpass, cfg.lp_order, cfg.lp_cutoff_hz, fs)?;
    Ok(lp.apply(&hp.apply(&y)))
}

pub fn preprocess_episode(episode: &crate::wfdb::EcgEpisode, cfg: &FilterChainConfig) -> Result<Vec<f64>> {
    preprocess(&episode.samples, episode.sampling_rate_hz, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::SQRT_2;

    const FS: f64 = 250.0;

    fn tone(f: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| (2.0 * PI * f * i as f64 / FS).sin()).collect()
    }

    /// Least-squares sinusoid amplitude at `f` over the second half of `y`,
    /// after transients have decayed.
    fn probe_amplitude(y: &[f64], f: f64) -> f64 {
        let start = y.len() / 2;
        let (mut ss, mut cc, mut sc, mut ys, mut yc) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (i, v) in y.iter().enumerate().skip(start) {
            let w = 2.0 * PI * f * i as f64 / FS;
            let (s, c) = w.sin_cos();
            ss += s * s;
            cc += c * c;
            sc += s * c;
            ys += v * s;
            yc += v * c;
        }
        let det = ss * cc - sc * sc;
        let a = (ys * cc - yc * sc) / det;
        let b = (yc * ss - ys * sc) / det;
        a.hypot(b)
    }

    fn tail_peak(y: &[f64]) -> f64 {
        y[y.len() / 2..].iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    #[test]
    fn remove_mean_cases() {
        assert_eq!(remove_mean(&[1.0, 2.0, 3.0]).unwrap(), vec![-1.0, 0.0, 1.0]);
        assert_eq!(remove_mean(&[-1.0, 0.0, 1.0]).unwrap(), vec![-1.0, 0.0, 1.0]);
        assert!(matches!(remove_mean(&[]), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn moving_average_impulse_and_dc() {
        let mut impulse = vec![0.0; 8];
        impulse[0] = 1.0;
        let y = moving_average(&impulse, 5).unwrap();
        assert_eq!(y, vec![0.2, 0.2, 0.2, 0.2, 0.2, 0.0, 0.0, 0.0]);
        let y = moving_average(&[3.0; 10], 5).unwrap();
        for v in &y[4..] {
            assert!((v - 3.0).abs() < 1e-12);
        }
        assert!(moving_average(&[1.0], 0).is_err());
    }

    #[test]
    fn moving_average_nulls_fs_over_order() {
        // |sin(5 pi 50/250) / (5 sin(pi 50/250))| = 0
        let expected = ((5.0 * PI * 50.0 / FS).sin() / (5.0 * (PI * 50.0 / FS).sin())).abs();
        assert!(expected < 1e-12);
        let y = moving_average(&tone(50.0, 1000), 5).unwrap();
        assert!(y[4..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn highpass_blocks_dc_and_passes_10hz() {
        let y = highpass_drift(&vec![1.0; 5000], 1.0, FS).unwrap();
        assert!(tail_peak(&y) <= 0.01);
        let y = highpass_drift(&tone(10.0, 5000), 1.0, FS).unwrap();
        let a = probe_amplitude(&y, 10.0);
        assert!((0.89..=1.12).contains(&a), "{a}");
        assert!(highpass_drift(&vec![0.0; 100], 1.0, FS)
            .unwrap()
            .iter()
            .all(|v| *v == 0.0));
        assert!(highpass_drift(&[1.0], 200.0, FS).is_err());
    }

    #[test]
    fn butterworth_probe_amplitudes() {
        let a20 = probe_amplitude(&butterworth_lowpass(&tone(20.0, 20_000), 20.0, FS, 12).unwrap(), 20.0);
        assert!((a20 - 0.7079).abs() <= 0.04, "{a20}");
        let a5 = probe_amplitude(&butterworth_lowpass(&tone(5.0, 20_000), 20.0, FS, 12).unwrap(), 5.0);
        // analog formula 1/sqrt(1 + (5/20)^24) is 1 - 1.8e-15; pre-warping keeps it at 1
        assert!(a5 >= 0.999, "{a5}");
        let a60 = probe_amplitude(&butterworth_lowpass(&tone(60.0, 20_000), 20.0, FS, 12).unwrap(), 60.0);
        assert!(a60 <= 1e-5, "{a60}");
    }

    #[test]
    fn butterworth_design_properties() {
        let f = SosFilter::butterworth(ButterworthKind::Lowpass, 12, 20.0, FS).unwrap();
        assert_eq!(f.sections.len(), 6);
        assert!(f.max_pole_magnitude() < 1.0);
        assert!((f.gain_at(20.0, FS) - SQRT_2.recip()).abs() < 1e-9);
        // monotone passband
        let mut prev = f.gain_at(0.0, FS);
        for i in 1..=200 {
            let g = f.gain_at(i as f64 * 0.1, FS);
            assert!(g <= prev + 1e-12);
            prev = g;
        }
        assert!(SosFilter::butterworth(ButterworthKind::Lowpass, 3, 20.0, FS).is_err());
        assert!(SosFilter::butterworth(ButterworthKind::Lowpass, 12, 130.0, FS).is_err());
    }

    #[test]
    fn pipeline_passes_2hz() {
        let x = tone(2.0, 2500);
        let y = preprocess(&x, FS, &FilterChainConfig::default()).unwrap();
        assert_eq!(y.len(), x.len());
        let a = probe_amplitude(&y, 2.0);
        assert!((0.85..=1.1).contains(&a), "{a}");
        assert!(preprocess(&[0.0; 300], FS, &FilterChainConfig::default())
            .unwrap()
            .iter()
            .all(|v| *v == 0.0));
    }

    #[test]
    fn config_validation() {
        let cfg = FilterChainConfig::default();
        assert!(cfg.validate(250.0).is_ok());
        assert!(cfg.validate(30.0).is_err());
        assert!(FilterChainConfig {
            lp_order: 7,
            ..cfg.clone()
        }
        .validate(250.0)
        .is_err());
        assert!(FilterChainConfig { ma_order: 0, ..cfg }.validate(250.0).is_err());
    }

    proptest! {
        #[test]
        fn pipeline_is_linear(
            xs in prop::collection::vec(-5.0f64..5.0, 300),
            ys in prop::collection::vec(-5.0f64..5.0, 300),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
        ) {
            let cfg = FilterChainConfig::default();
            let x = remove_mean(&xs).unwrap();
            let y = remove_mean(&ys).unwrap();
            let combo: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
            let lhs = preprocess(&combo, FS, &cfg).unwrap();
            let px = preprocess(&x, FS, &cfg).unwrap();
            let py = preprocess(&y, FS, &cfg).unwrap();
            let scale = lhs.iter().fold(1e-12f64, |m, v| m.max(v.abs()));
            for i in 0..lhs.len() {
                let rhs = a * px[i] + b * py[i];
                prop_assert!((lhs[i] - rhs).abs() <= 1e-9 * scale.max(1.0));
            }
        }

        #[test]
        fn remove_mean_is_zero_mean(xs in prop::collection::vec(-1e3f64..1e3, 1..2000)) {
            let y = remove_mean(&xs).unwrap();
            let m = y.iter().sum::<f64>() / y.len() as f64;
            let scale = xs.iter().fold(1e-300f64, |a, v| a.max(v.abs()));
            prop_assert!(m.abs() <= 1e-12 * scale);
        }
    }
}
