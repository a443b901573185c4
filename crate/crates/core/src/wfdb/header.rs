//! WFDB header (`.hea`) parsing.
//!
//! Only single-segment records are handled. The record line is
//! `name nsig [fs[/counter[(base)]] [nsamp [time [date]]]]` and each signal
//! line is `file format[xspf][:skew][+offset] [gain[(baseline)][/units]
//! [adcres [adczero [initval [checksum [blocksize [description]]]]]]]`.

use crate::error::{Error, Result};

/// Sampling rate assumed when the record line omits it.
pub const DEFAULT_SAMPLING_RATE_HZ: f64 = 250.0;
/// ADC gain assumed when a signal line omits it (or gives 0).
pub const DEFAULT_ADC_GAIN: f64 = 200.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StorageFormat {
    /// Two 12-bit two's-complement samples packed into three bytes.
    Format212,
    /// 16-bit little-endian two's-complement samples.
    Format16,
}

impl StorageFormat {
    pub fn from_code(code: u32) -> Result<Self> {
        match code {
            212 => Ok(Self::Format212),
            16 => Ok(Self::Format16),
            other => Err(Error::UnsupportedFormat(other)),
        }
    }

    pub fn code(self) -> u32 {
        match self {
            Self::Format212 => 212,
            Self::Format16 => 16,
        }
    }
}

/// One signal line of a header.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalSpec {
    pub file_name: String,
    pub storage_format: StorageFormat,
    /// Byte offset of the first sample in the signal file.
    pub byte_offset: usize,
    /// ADC units per physical unit (adu/mV for ECG).
    pub adc_gain: f64,
    /// ADC value corresponding to 0 physical units.
    pub baseline: i32,
    pub units: String,
    pub adc_resolution: u32,
    pub adc_zero: i32,
    pub initial_value: i32,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordHeader {
    pub record_name: String,
    pub n_signals: usize,
    pub sampling_rate_hz: f64,
    /// Samples per signal; 0 when the header leaves it unspecified.
    pub n_samples: usize,
    pub signals: Vec<SignalSpec>,
}

impl RecordHeader {
    /// Per-signal storage format codes, in signal order.
    pub fn storage_formats(&self) -> Vec<StorageFormat> {
        self.signals.iter().map(|s| s.storage_format).collect()
    }
}

fn header_err(line: usize, message: impl Into<String>) -> Error {
    Error::HeaderParse {
        line,
        message: message.into(),
    }
}

/// Leading unsigned digits of `token`, with the remainder.
fn split_number(token: &str) -> (&str, &str) {
    let end = token.find(|c: char| !c.is_ascii_digit()).unwrap_or(token.len());
    token.split_at(end)
}

pub fn parse_header(text: &str) -> Result<RecordHeader> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (record_line_no, record_line) = lines.next().ok_or_else(|| header_err(1, "missing record line"))?;
    let mut tokens = record_line.split_whitespace();

    let name_token = tokens
        .next()
        .ok_or_else(|| header_err(record_line_no, "missing record name"))?;
    if name_token.contains('/') {
        return Err(header_err(record_line_no, "multi-segment records are not supported"));
    }

    let n_signals: usize = tokens
        .next()
        .ok_or_else(|| header_err(record_line_no, "missing signal count"))?
        .parse()
        .map_err(|_| header_err(record_line_no, "signal count is not an integer"))?;
    if n_signals == 0 {
        return Err(header_err(record_line_no, "record declares zero signals"));
    }

    let sampling_rate_hz = match tokens.next() {
        None => DEFAULT_SAMPLING_RATE_HZ,
        Some(tok) => {
            let rate = tok.split(['/', '(']).next().unwrap_or(tok);
            let fs: f64 = rate
                .parse()
                .map_err(|_| header_err(record_line_no, format!("bad sampling rate `{tok}`")))?;
            if fs > 0.0 {
                fs
            } else if fs == 0.0 {
                DEFAULT_SAMPLING_RATE_HZ
            } else {
                return Err(header_err(record_line_no, "sampling rate must be positive"));
            }
        }
    };

    let n_samples = match tokens.next() {
        None => 0,
        Some(tok) => tok
            .parse()
            .map_err(|_| header_err(record_line_no, format!("bad sample count `{tok}`")))?,
    };

    let mut signals = Vec::with_capacity(n_signals);
    for (line_no, line) in lines {
        if signals.len() == n_signals {
            return Err(header_err(
                line_no,
                format!("found more signal lines than the {n_signals} declared"),
            ));
        }
        signals.push(parse_signal_line(line_no, line)?);
    }
    if signals.len() != n_signals {
        return Err(header_err(
            record_line_no,
            format!(
                "record declares {n_signals} signals but {} signal lines follow",
                signals.len()
            ),
        ));
    }

    Ok(RecordHeader {
        record_name: name_token.to_string(),
        n_signals,
        sampling_rate_hz,
        n_samples,
        signals,
    })
}

fn parse_signal_line(line_no: usize, line: &str) -> Result<SignalSpec> {
    let tokens: Vec<&str> = line.split_whitespace().collect();
    if tokens.len() < 2 {
        return Err(header_err(line_no, "signal line needs a file name and format"));
    }
    let file_name = tokens[0].to_string();

    let (code, mut rest) = split_number(tokens[1]);
    let code: u32 = code
        .parse()
        .map_err(|_| header_err(line_no, format!("bad format `{}`", tokens[1])))?;
    let storage_format = StorageFormat::from_code(code)?;
    let mut byte_offset = 0usize;
    while !rest.is_empty() {
        let marker = rest.as_bytes()[0];
        let (value, tail) = split_number(&rest[1..]);
        let value: usize = value
            .parse()
            .map_err(|_| header_err(line_no, format!("bad format modifier `{}`", tokens[1])))?;
        match marker {
            b'x' if value > 1 => return Err(header_err(line_no, "multi-sample frames are not supported")),
            b'x' | b':' => {}
            b'+' => byte_offset = value,
            _ => return Err(header_err(line_no, format!("bad format `{}`", tokens[1]))),
        }
        rest = tail;
    }

    let parse_int = |idx: usize, what: &str| -> Result<Option<i64>> {
        tokens
            .get(idx)
            .map(|t| {
                t.parse::<i64>()
                    .map_err(|_| header_err(line_no, format!("bad {what} `{t}`")))
            })
            .transpose()
    };

    let adc_resolution = parse_int(3, "ADC resolution")?.unwrap_or(match storage_format {
        StorageFormat::Format212 => 12,
        StorageFormat::Format16 => 16,
    }) as u32;
    let adc_zero = parse_int(4, "ADC zero")?.unwrap_or(0) as i32;
    let initial_value = parse_int(5, "initial value")?.unwrap_or(adc_zero as i64) as i32;
    let description = tokens.get(8..).map(|d| d.join(" ")).unwrap_or_default();

    let mut adc_gain = DEFAULT_ADC_GAIN;
    let mut baseline = adc_zero;
    let mut units = String::from("mV");
    if let Some(tok) = tokens.get(2) {
        let (gain_part, units_part) = match tok.split_once('/') {
            Some((g, u)) => (g, Some(u)),
            None => (*tok, None),
        };
        let (gain_str, baseline_str) = match gain_part.split_once('(') {
            Some((g, b)) => (
                g,
                Some(
                    b.strip_suffix(')')
                        .ok_or_else(|| header_err(line_no, format!("unbalanced baseline in `{tok}`")))?,
                ),
            ),
            None => (gain_part, None),
        };
        let gain: f64 = gain_str
            .parse()
            .map_err(|_| header_err(line_no, format!("bad ADC gain `{tok}`")))?;
        if gain != 0.0 {
            adc_gain = gain;
        }
        if let Some(b) = baseline_str {
            baseline = b
                .parse()
                .map_err(|_| header_err(line_no, format!("bad baseline `{tok}`")))?;
        }
        if let Some(u) = units_part {
            units = u.to_string();
        }
    }

    Ok(SignalSpec {
        file_name,
        storage_format,
        byte_offset,
        adc_gain,
        baseline,
        units,
        adc_resolution,
        adc_zero,
        initial_value,
        description,
    })
}
