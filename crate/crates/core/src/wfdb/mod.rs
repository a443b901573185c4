//! Record ingestion: WFDB headers, signal files and rhythm annotations, plus
//! a plain CSV episode format, and slicing records into labeled episodes.

pub mod annotation;
pub mod csv;
pub mod episode;
pub mod header;
pub mod signal;

use std::fs;
use std::path::{Path, PathBuf};

pub use annotation::{
    parse_annotations, rhythm_annotations, RawAnnotation, RhythmAnnotation, RhythmLabel, RhythmVocabulary,
};
pub use episode::{extract_episodes, window_len, EcgEpisode, EcgRecord, EpisodeLabel, EpisodeSource, WindowConfig};
pub use header::{parse_header, RecordHeader, SignalSpec, StorageFormat};
pub use signal::{decode_adu, decode_signal, encode_format16, encode_format212};

use crate::error::{Error, Result};

/// Reads `<base>.hea`, its signal files, and `<base>.<annotator>` if present.
///
/// `path` may name the header itself or the record without extension.
pub fn read_record(path: &Path, annotator: &str, vocab: &RhythmVocabulary) -> Result<EcgRecord> {
    let base = match path.extension().and_then(|e| e.to_str()) {
        Some("hea") => path.with_extension(""),
        _ => path.to_path_buf(),
    };
    let dir = base.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut header = parse_header(&fs::read_to_string(with_ext(&base, "hea"))?)?;

    // Signals sharing a file are interleaved within it.
    let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
    for (i, s) in header.signals.iter().enumerate() {
        match groups.iter_mut().find(|(f, _)| *f == s.file_name) {
            Some((_, idx)) => idx.push(i),
            None => groups.push((s.file_name.clone(), vec![i])),
        }
    }

    let mut channels: Vec<Vec<f64>> = vec![Vec::new(); header.n_signals];
    for (file, idx) in &groups {
        let first = &header.signals[idx[0]];
        if idx
            .iter()
            .any(|&i| header.signals[i].storage_format != first.storage_format)
        {
            return Err(Error::Malformed(format!("signals in {file} use mixed storage formats")));
        }
        let bytes = fs::read(dir.join(file))?;
        let offset = first.byte_offset.min(bytes.len());
        let adu =
            decode_adu(&bytes[offset..], first.storage_format, idx.len(), header.n_samples).map_err(|e| match e {
                Error::Decode { offset: o, message } => Error::Decode {
                    offset: o + offset,
                    message: format!("{file}: {message}"),
                },
                other => other,
            })?;
        for (ch, &i) in adu.into_iter().zip(idx) {
            let spec = &header.signals[i];
            channels[i] = ch
                .into_iter()
                .map(|v| (v - spec.baseline) as f64 / spec.adc_gain)
                .collect();
        }
    }
    if header.n_samples == 0 {
        header.n_samples = channels.iter().map(Vec::len).min().unwrap_or(0);
        for ch in &mut channels {
            ch.truncate(header.n_samples);
        }
    }

    let ann_path = with_ext(&base, annotator);
    let annotations = if ann_path.exists() {
        let raw = parse_annotations(&fs::read(&ann_path)?)?;
        rhythm_annotations(&raw, vocab)
            .into_iter()
            .filter(|a| a.sample_index < header.n_samples)
            .collect()
    } else {
        log::warn!(
            "{}: no {annotator} annotations; every sample treated as NOT_VF",
            base.display()
        );
        Vec::new()
    };

    EcgRecord::new(header, channels, annotations)
}

fn with_ext(base: &Path, ext: &str) -> PathBuf {
    let mut s = base.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}
