//! Number formatting and small parsing helpers for the text file formats.

use std::fmt;
use std::path::{Path, PathBuf};

/// Formats `x` with `sig` significant digits, like C's `%.{sig}g`.
///
/// With `sig = 17` every finite `f64` round-trips exactly through `parse`.
pub fn fmt_sig(x: f64, sig: usize) -> String {
    assert!(sig >= 1);
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{:.*e}", sig - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -5 || exp >= sig as i32 {
        let m = trim_fraction(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (sig as i32 - 1 - exp).max(0) as usize;
        trim_fraction(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Malformed input file, located by path and 1-based line (or byte offset).
#[derive(Debug, Clone, PartialEq)]
pub struct FormatError {
    pub file: PathBuf,
    pub location: Location,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Location {
    Line(usize),
    Offset(u64),
    File,
}

impl FormatError {
    pub fn at_line(file: &Path, line: usize, message: impl Into<String>) -> Self {
        Self {
            file: file.to_path_buf(),
            location: Location::Line(line),
            message: message.into(),
        }
    }

    pub fn at_offset(file: &Path, offset: u64, message: impl Into<String>) -> Self {
        Self {
            file: file.to_path_buf(),
            location: Location::Offset(offset),
            message: message.into(),
        }
    }

    pub fn whole(file: &Path, message: impl Into<String>) -> Self {
        Self {
            file: file.to_path_buf(),
            location: Location::File,
            message: message.into(),
        }
    }
}

impl fmt::Display for FormatError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.location {
            Location::Line(l) => write!(f, "{}:{}: {}", self.file.display(), l, self.message),
            Location::Offset(o) => write!(f, "{} (byte {}): {}", self.file.display(), o, self.message),
            Location::File => write!(f, "{}: {}", self.file.display(), self.message),
        }
    }
}

impl std::error::Error for FormatError {}

/// Splits a CSV line and parses every field as `f64`.
pub fn parse_f64_fields(line: &str, sep: char) -> Result<Vec<f64>, String> {
    line.split(sep)
        .map(|f| {
            let f = f.trim();
            f.parse::<f64>().map_err(|_| format!("bad number {f:?}"))
        })
        .collect()
}

/// Reads a little-endian `f32` array.
pub fn f32_from_le_bytes(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect()
}

pub fn f32_to_le_bytes(values: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 4);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn matches_printf_g() {
        assert_eq!(fmt_sig(1.0, 17), "1");
        assert_eq!(fmt_sig(0.1, 17), "0.10000000000000001");
        assert_eq!(fmt_sig(123.5, 9), "123.5");
        assert_eq!(fmt_sig(1.5e-7, 17), "1.4999999999999999e-07");
        assert_eq!(fmt_sig(2.5e20, 9), "2.5e+20");
        assert_eq!(fmt_sig(-0.0, 17), "-0");
        assert_eq!(fmt_sig(0.0001, 9), "0.0001");
        assert_eq!(fmt_sig(99999.9999, 4), "1e+05");
    }

    proptest! {
        #[test]
        fn sig17_round_trips(bits in any::<u64>()) {
            let x = f64::from_bits(bits);
            prop_assume!(x.is_finite());
            let back: f64 = fmt_sig(x, 17).parse().unwrap();
            prop_assert_eq!(back.to_bits(), x.to_bits());
        }
    }
}
