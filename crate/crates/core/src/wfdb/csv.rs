//! Plain-text episodes: `<name>.csv` holds one sample (mV) per line and the
//! sidecar `<name>.meta` holds `key=value` lines:
//!
//! ```text
//! fs=250
//! episode_length_s=5
//! label=VF
//! record=cu01        # optional, defaults to the file stem
//! start=0            # optional
//! ```

use std::fs;
use std::path::Path;

use super::episode::{EcgEpisode, EpisodeLabel, EpisodeSource};
use crate::error::{Error, Result};

pub fn parse_samples(text: &str) -> Result<Vec<f64>> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .map(|(i, l)| {
            // tolerate a trailing comma or extra columns; first column is the sample
            let field = l.split(',').next().unwrap_or(l).trim();
            field
                .parse::<f64>()
                .map_err(|_| Error::Malformed(format!("line {}: `{l}` is not a sample", i + 1)))
        })
        .collect()
}

pub fn parse_episode(samples_text: &str, meta_text: &str, default_record: &str) -> Result<EcgEpisode> {
    let mut fs_hz = None;
    let mut length = None;
    let mut label = None;
    let mut record = default_record.to_string();
    let mut start = 0usize;
    for (i, line) in meta_text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Malformed(format!("meta line {}: expected key=value", i + 1)))?;
        let bad = |what: &str| Error::Malformed(format!("meta line {}: bad {what} `{}`", i + 1, v.trim()));
        match k.trim() {
            "fs" | "sampling_rate_hz" => fs_hz = Some(v.trim().parse::<f64>().map_err(|_| bad("fs"))?),
            "episode_length_s" | "T_e" => length = Some(v.trim().parse::<f64>().map_err(|_| bad("episode length"))?),
            "label" => label = Some(v.parse::<EpisodeLabel>()?),
            "record" => record = v.trim().to_string(),
            "start" => start = v.trim().parse().map_err(|_| bad("start"))?,
            other => log::debug!("ignoring unknown meta key `{other}`"),
        }
    }
    let missing = |k: &str| Error::Malformed(format!("meta is missing `{k}`"));
    EcgEpisode::new(
        parse_samples(samples_text)?,
        fs_hz.ok_or_else(|| missing("fs"))?,
        length.ok_or_else(|| missing("episode_length_s"))?,
        label.ok_or_else(|| missing("label"))?,
        EpisodeSource { record, start },
    )
}

/// Reads `path` (a `.csv`) and its `.meta` sidecar.
pub fn read_episode(path: &Path) -> Result<EcgEpisode> {
    let samples = fs::read_to_string(path)?;
    let meta = fs::read_to_string(path.with_extension("meta"))?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("csv");
    parse_episode(&samples, &meta, stem)
}

pub fn write_episode(path: &Path, episode: &EcgEpisode) -> Result<()> {
    let mut body = String::with_capacity(episode.samples.len() * 12);
    for s in &episode.samples {
        body.push_str(&format!("{s}\n"));
    }
    fs::write(path, body)?;
    let meta = format!(
        "fs={}\nepisode_length_s={}\nlabel={}\nrecord={}\nstart={}\n",
        episode.sampling_rate_hz, episode.episode_length_s, episode.label, episode.source.record, episode.source.start
    );
    fs::write(path.with_extension("meta"), meta)?;
    Ok(())
}
