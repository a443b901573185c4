//! Binary signal payloads in formats 212 and 16.
//!
//! Samples are stored frame-interleaved: for a record with signals `a, b`
//! the sample stream is `a0 b0 a1 b1 ...`. Format 212 packs consecutive
//! stream samples pairwise into three bytes; a trailing odd sample occupies
//! two bytes.

use super::header::{RecordHeader, StorageFormat};
use crate::error::{Error, Result};

fn sign_extend_12(v: u16) -> i32 {
    let v = (v & 0x0FFF) as i32;
    if v & 0x0800 != 0 {
        v - 0x1000
    } else {
        v
    }
}

/// Bytes needed to hold `count` samples.
pub fn payload_len(format: StorageFormat, count: usize) -> usize {
    match format {
        StorageFormat::Format212 => (count * 3).div_ceil(2),
        StorageFormat::Format16 => count * 2,
    }
}

/// Number of complete samples available in `len` bytes.
pub fn samples_in(format: StorageFormat, len: usize) -> usize {
    match format {
        StorageFormat::Format212 => (len / 3) * 2 + usize::from(len % 3 == 2),
        StorageFormat::Format16 => len / 2,
    }
}

pub fn decode_format212(bytes: &[u8], count: usize) -> Result<Vec<i32>> {
    let needed = payload_len(StorageFormat::Format212, count);
    if bytes.len() < needed {
        return Err(Error::Decode {
            offset: bytes.len(),
            message: format!("format 212 payload truncated: need {needed} bytes for {count} samples"),
        });
    }
    let mut out = Vec::with_capacity(count);
    for chunk in bytes[..needed].chunks(3) {
        let b0 = chunk[0] as u16;
        let b1 = chunk[1] as u16;
        out.push(sign_extend_12(b0 | ((b1 & 0x0F) << 8)));
        if out.len() < count {
            let b2 = chunk[2] as u16;
            out.push(sign_extend_12(b2 | ((b1 & 0xF0) << 4)));
        }
    }
    Ok(out)
}

/// Packs 12-bit two's-complement samples; values outside [-2048, 2047] wrap.
pub fn encode_format212(samples: &[i32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(payload_len(StorageFormat::Format212, samples.len()));
    for pair in samples.chunks(2) {
        let s0 = (pair[0] as u16) & 0x0FFF;
        out.push((s0 & 0xFF) as u8);
        match pair.get(1) {
            Some(&s1) => {
                let s1 = (s1 as u16) & 0x0FFF;
                out.push(((s0 >> 8) | ((s1 >> 8) << 4)) as u8);
                out.push((s1 & 0xFF) as u8);
            }
            None => out.push((s0 >> 8) as u8),
        }
    }
    out
}

pub fn decode_format16(bytes: &[u8], count: usize) -> Result<Vec<i32>> {
    let needed = payload_len(StorageFormat::Format16, count);
    if bytes.len() < needed {
        return Err(Error::Decode {
            offset: bytes.len(),
            message: format!("format 16 payload truncated: need {needed} bytes for {count} samples"),
        });
    }
    Ok(bytes[..needed]
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes([c[0], c[1]]) as i32)
        .collect())
}

pub fn encode_format16(samples: &[i32]) -> Vec<u8> {
    samples.iter().flat_map(|&s| (s as i16).to_le_bytes()).collect()
}

/// Decodes an interleaved stream of `n_signals` channels into per-channel
/// ADC values. `n_samples == 0` means "as many frames as the payload holds".
pub fn decode_adu(bytes: &[u8], format: StorageFormat, n_signals: usize, n_samples: usize) -> Result<Vec<Vec<i32>>> {
    let frames = if n_samples == 0 {
        samples_in(format, bytes.len()) / n_signals
    } else {
        n_samples
    };
    let count = frames * n_signals;
    let stream = match format {
        StorageFormat::Format212 => decode_format212(bytes, count)?,
        StorageFormat::Format16 => decode_format16(bytes, count)?,
    };
    let mut channels = vec![Vec::with_capacity(frames); n_signals];
    for frame in stream.chunks_exact(n_signals) {
        for (ch, &v) in channels.iter_mut().zip(frame) {
            ch.push(v);
        }
    }
    Ok(channels)
}

/// Decodes a signal file shared by every signal in `header` and converts to
/// physical units `(adu - baseline) / gain`.
///
/// `bytes` is the whole file; each signal's byte offset is honoured.
pub fn decode_signal(bytes: &[u8], header: &RecordHeader) -> Result<Vec<Vec<f64>>> {
    let first = header
        .signals
        .first()
        .ok_or(Error::EmptyInput("header has no signals"))?;
    if header
        .signals
        .iter()
        .any(|s| s.file_name != first.file_name || s.storage_format != first.storage_format)
    {
        return Err(Error::Malformed(
            "decode_signal expects every signal in one file with one format; use read_record".into(),
        ));
    }
    let offset = first.byte_offset.min(bytes.len());
    let adu = decode_adu(
        &bytes[offset..],
        first.storage_format,
        header.n_signals,
        header.n_samples,
    )
    .map_err(|e| match e {
        Error::Decode { offset: o, message } => Error::Decode {
            offset: o + offset,
            message,
        },
        other => other,
    })?;
    Ok(adu
        .into_iter()
        .zip(&header.signals)
        .map(|(ch, spec)| {
            ch.into_iter()
                .map(|v| (v - spec.baseline) as f64 / spec.adc_gain)
                .collect()
        })
        .collect())
}
