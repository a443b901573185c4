//! MIT-format annotation files (`.atr`) and rhythm extraction.
//!
//! Each record is a little-endian 16-bit word: the top 6 bits are the
//! annotation code, the low 10 bits a sample-time increment (or a payload
//! for the pseudo-codes). A zero word terminates the file.

use crate::error::{Error, Result};

pub const CODE_NOISE: u8 = 14;
pub const CODE_RHYTHM: u8 = 28;
/// `[` start of ventricular flutter/fibrillation.
pub const CODE_VF_ON: u8 = 32;
/// `]` end of ventricular flutter/fibrillation.
pub const CODE_VF_OFF: u8 = 33;

const SKIP: u8 = 59;
const NUM: u8 = 60;
const SUB: u8 = 61;
const CHN: u8 = 62;
const AUX: u8 = 63;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawAnnotation {
    pub sample: u64,
    pub code: u8,
    pub subtype: i32,
    pub channel: i32,
    pub num: i32,
    pub aux: Option<String>,
}

pub fn parse_annotations(bytes: &[u8]) -> Result<Vec<RawAnnotation>> {
    let mut out: Vec<RawAnnotation> = Vec::new();
    let mut time: i64 = 0;
    let mut num = 0;
    let mut channel = 0;
    let mut pos = 0;

    let word_at = |pos: usize| -> Result<u16> {
        bytes
            .get(pos..pos + 2)
            .map(|b| u16::from_le_bytes([b[0], b[1]]))
            .ok_or_else(|| Error::Annotation {
                offset: pos,
                message: "truncated annotation word".into(),
            })
    };

    while pos + 1 < bytes.len() {
        let word = word_at(pos)?;
        let start = pos;
        pos += 2;
        if word == 0 {
            break;
        }
        let code = (word >> 10) as u8;
        let value = word & 0x03FF;
        match code {
            SKIP => {
                let hi = word_at(pos)? as u32;
                let lo = word_at(pos + 2)? as u32;
                pos += 4;
                time += ((hi << 16) | lo) as i32 as i64;
            }
            NUM | SUB | CHN | AUX => {
                let last = out.last_mut().ok_or_else(|| Error::Annotation {
                    offset: start,
                    message: format!("modifier code {code} before any annotation"),
                })?;
                match code {
                    NUM => {
                        num = sign_extend_10(value);
                        last.num = num;
                    }
                    SUB => last.subtype = sign_extend_10(value),
                    CHN => {
                        channel = value as i32;
                        last.channel = channel;
                    }
                    _ => {
                        let len = value as usize;
                        let text = bytes.get(pos..pos + len).ok_or_else(|| Error::Annotation {
                            offset: pos,
                            message: format!("aux string of {len} bytes runs past end of file"),
                        })?;
                        let text = String::from_utf8_lossy(text).trim_end_matches('\0').to_string();
                        last.aux = Some(text);
                        pos += len + (len & 1);
                    }
                }
            }
            _ => {
                time += value as i64;
                if time < 0 {
                    return Err(Error::Annotation {
                        offset: start,
                        message: "annotation time became negative".into(),
                    });
                }
                out.push(RawAnnotation {
                    sample: time as u64,
                    code,
                    subtype: 0,
                    channel,
                    num,
                    aux: None,
                });
            }
        }
    }
    Ok(out)
}

fn sign_extend_10(v: u16) -> i32 {
    let v = (v & 0x03FF) as i32;
    if v & 0x0200 != 0 {
        v - 0x0400
    } else {
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RhythmLabel {
    Vf,
    NotVf,
    Noise,
}

/// A rhythm change: `label` holds from `sample_index` until the next change.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RhythmAnnotation {
    pub sample_index: usize,
    pub rhythm_label: RhythmLabel,
}

/// Which rhythm aux strings map to VF and noise. Anything else is NOT_VF.
#[derive(Debug, Clone, PartialEq)]
pub struct RhythmVocabulary {
    pub vf: Vec<String>,
    pub noise: Vec<String>,
}

impl Default for RhythmVocabulary {
    fn default() -> Self {
        Self {
            vf: vec!["(VF".into(), "(VFL".into()],
            noise: vec!["(NOISE".into()],
        }
    }
}

impl RhythmVocabulary {
    pub fn classify(&self, aux: &str) -> RhythmLabel {
        let aux = aux.trim();
        if self.vf.iter().any(|l| l == aux) {
            RhythmLabel::Vf
        } else if self.noise.iter().any(|l| l == aux) {
            RhythmLabel::Noise
        } else {
            RhythmLabel::NotVf
        }
    }
}

/// Extracts rhythm changes from rhythm (`+` with aux) and `[`/`]` annotations.
pub fn rhythm_annotations(raw: &[RawAnnotation], vocab: &RhythmVocabulary) -> Vec<RhythmAnnotation> {
    raw.iter()
        .filter_map(|a| {
            let label = match a.code {
                CODE_RHYTHM => vocab.classify(a.aux.as_deref()?),
                CODE_VF_ON => RhythmLabel::Vf,
                CODE_VF_OFF => RhythmLabel::NotVf,
                _ => return None,
            };
            Some(RhythmAnnotation {
                sample_index: a.sample as usize,
                rhythm_label: label,
            })
        })
        .collect()
}
