//! Records, labeled episodes, and the sliding-window extractor.

use super::annotation::{RhythmAnnotation, RhythmLabel};
use super::header::RecordHeader;
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EpisodeLabel {
    Vf,
    NotVf,
}

impl EpisodeLabel {
    /// Classifier target: VF is the positive class.
    pub fn sign(self) -> f64 {
        match self {
            Self::Vf => 1.0,
            Self::NotVf => -1.0,
        }
    }

    pub fn from_sign(v: f64) -> Self {
        if v >= 0.0 {
            Self::Vf
        } else {
            Self::NotVf
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Vf => "VF",
            Self::NotVf => "NOT_VF",
        }
    }
}

impl std::str::FromStr for EpisodeLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "VF" | "1" => Ok(Self::Vf),
            "NOT_VF" | "NOTVF" | "NOT VF" | "0" => Ok(Self::NotVf),
            other => Err(Error::Malformed(format!("unknown episode label `{other}`"))),
        }
    }
}

impl std::fmt::Display for EpisodeLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EpisodeSource {
    pub record: String,
    pub start: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EcgEpisode {
    /// Samples in mV.
    pub samples: Vec<f64>,
    pub sampling_rate_hz: f64,
    pub episode_length_s: f64,
    pub label: EpisodeLabel,
    pub source: EpisodeSource,
}

impl EcgEpisode {
    pub fn new(
        samples: Vec<f64>,
        sampling_rate_hz: f64,
        episode_length_s: f64,
        label: EpisodeLabel,
        source: EpisodeSource,
    ) -> Result<Self> {
        if !(sampling_rate_hz > 0.0) {
            return Err(invalid("sampling_rate_hz", "must be positive"));
        }
        let expected = window_len(episode_length_s, sampling_rate_hz);
        if samples.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: samples.len(),
            });
        }
        Ok(Self {
            samples,
            sampling_rate_hz,
            episode_length_s,
            label,
            source,
        })
    }
}

/// Samples in a window of `seconds` at `fs`.
pub fn window_len(seconds: f64, fs: f64) -> usize {
    (seconds * fs).round() as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct EcgRecord {
    pub header: RecordHeader,
    /// Physical samples (mV), one sequence per signal.
    pub channels: Vec<Vec<f64>>,
    pub annotations: Vec<RhythmAnnotation>,
}

impl EcgRecord {
    pub fn new(header: RecordHeader, channels: Vec<Vec<f64>>, mut annotations: Vec<RhythmAnnotation>) -> Result<Self> {
        if channels.len() != header.n_signals {
            return Err(Error::DimensionMismatch {
                expected: header.n_signals,
                actual: channels.len(),
            });
        }
        for ch in &channels {
            if ch.len() != header.n_samples {
                return Err(Error::DimensionMismatch {
                    expected: header.n_samples,
                    actual: ch.len(),
                });
            }
        }
        annotations.sort_by_key(|a| a.sample_index);
        if let Some(a) = annotations.iter().find(|a| a.sample_index >= header.n_samples) {
            return Err(Error::Malformed(format!(
                "annotation at sample {} is past the record end ({})",
                a.sample_index, header.n_samples
            )));
        }
        Ok(Self {
            header,
            channels,
            annotations,
        })
    }

    /// Per-sample rhythm label; samples before the first annotation are NOT_VF.
    pub fn sample_labels(&self) -> Vec<RhythmLabel> {
        let n = self.header.n_samples;
        let mut labels = vec![RhythmLabel::NotVf; n];
        for (i, ann) in self.annotations.iter().enumerate() {
            let end = self.annotations.get(i + 1).map_or(n, |next| next.sample_index).min(n);
            labels[ann.sample_index..end].fill(ann.rhythm_label);
        }
        labels
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowConfig {
    pub episode_length_s: f64,
    pub hop_s: f64,
    pub channel: usize,
    /// A window is VF iff strictly more than this fraction of it is VF.
    pub vf_fraction: f64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            episode_length_s: 5.0,
            hop_s: 1.0,
            channel: 0,
            vf_fraction: 0.5,
        }
    }
}

/// Slides a window of `episode_length_s` over one channel in steps of `hop_s`.
/// Windows touching any NOISE sample are dropped.
pub fn extract_episodes(record: &EcgRecord, cfg: &WindowConfig) -> Result<Vec<EcgEpisode>> {
    let fs = record.header.sampling_rate_hz;
    let signal = record.channels.get(cfg.channel).ok_or_else(|| {
        invalid(
            "channel",
            format!(
                "index {} out of range for {} signals",
                cfg.channel, record.header.n_signals
            ),
        )
    })?;
    if !(cfg.episode_length_s > 0.0) {
        return Err(invalid("episode_length_s", "must be positive"));
    }
    if !(0.0..=1.0).contains(&cfg.vf_fraction) {
        return Err(invalid("vf_fraction", "must lie in [0, 1]"));
    }
    let len = window_len(cfg.episode_length_s, fs);
    let hop = window_len(cfg.hop_s, fs);
    if len == 0 || hop == 0 {
        return Err(invalid("hop_s", "window and hop must each span at least one sample"));
    }
    let n = signal.len();
    if n < len {
        return Ok(Vec::new());
    }

    // prefix counts of VF and NOISE samples
    let labels = record.sample_labels();
    let mut vf = vec![0usize; n + 1];
    let mut noise = vec![0usize; n + 1];
    for (i, l) in labels.iter().enumerate() {
        vf[i + 1] = vf[i] + usize::from(*l == RhythmLabel::Vf);
        noise[i + 1] = noise[i] + usize::from(*l == RhythmLabel::Noise);
    }

    let mut out = Vec::with_capacity((n - len) / hop + 1);
    for start in (0..=n - len).step_by(hop) {
        let end = start + len;
        if noise[end] > noise[start] {
            continue;
        }
        let vf_count = (vf[end] - vf[start]) as f64;
        let label = if vf_count > cfg.vf_fraction * len as f64 {
            EpisodeLabel::Vf
        } else {
            EpisodeLabel::NotVf
        };
        out.push(EcgEpisode {
            samples: signal[start..end].to_vec(),
            sampling_rate_hz: fs,
            episode_length_s: cfg.episode_length_s,
            label,
            source: EpisodeSource {
                record: record.header.record_name.clone(),
                start,
            },
        });
    }
    Ok(out)
}
