//! 2D-2D correspondences between a reference image and a query image.
//!
//! Two built-in matchers implement [`Matcher`]: a Harris/NCC classical
//! matcher that works on any image, and an oracle matcher that pairs
//! simulator landmark annotations. Externally computed correspondences are
//! read from CSV with [`read_matches`].

mod classical;
mod oracle;

pub use classical::{detect_corners, ClassicalMatcher, ClassicalParams, Corner};
pub use oracle::{match_oracle, OracleMatcher, OracleMatches};

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::imaging::GrayImage;
use crate::observation::LandmarkObs;
use crate::textio::{fmt_sig, parse_f64_fields, FormatError};

#[derive(Debug, Error)]
pub enum MatchError {
    #[error("{0}")]
    Format(FormatError),
    #[error("{file}: row {row} has a pixel outside the {width}x{height} image")]
    OutOfBounds { file: String, row: usize, width: u32, height: u32 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Correspondence {
    pub uv_ref: (f64, f64),
    pub uv_query: (f64, f64),
    pub confidence: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatchSet {
    pub reference_node_id: u32,
    pub correspondences: Vec<Correspondence>,
}

impl MatchSet {
    pub fn empty(reference_node_id: u32) -> Self {
        Self {
            reference_node_id,
            correspondences: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.correspondences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.correspondences.is_empty()
    }

    /// Drops correspondences with confidence below `min_conf`.
    pub fn retain_confident(&mut self, min_conf: f64) {
        self.correspondences.retain(|c| c.confidence >= min_conf);
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("u_ref,v_ref,u_query,v_query,confidence\n");
        for c in &self.correspondences {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                fmt_sig(c.uv_ref.0, 9),
                fmt_sig(c.uv_ref.1, 9),
                fmt_sig(c.uv_query.0, 9),
                fmt_sig(c.uv_query.1, 9),
                fmt_sig(c.confidence, 9)
            );
        }
        out
    }
}

/// What a matcher may look at for one image.
#[derive(Clone, Copy, Debug)]
pub struct MatchView<'a> {
    pub image: &'a GrayImage,
    pub landmarks: Option<&'a [LandmarkObs]>,
}

impl<'a> MatchView<'a> {
    pub fn image(image: &'a GrayImage) -> Self {
        Self { image, landmarks: None }
    }
}

/// Pluggable correspondence source.
pub trait Matcher {
    fn correspond(&mut self, reference_id: u32, reference: MatchView<'_>, query: MatchView<'_>) -> MatchSet;
}

pub fn write_matches(path: &Path, set: &MatchSet) -> Result<(), MatchError> {
    std::fs::write(path, set.to_csv()).map_err(|source| MatchError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Reads a match CSV and checks every pixel against a `width × height`
/// image. Later rows repeating a query pixel are dropped.
pub fn read_matches(path: &Path, reference_node_id: u32, width: u32, height: u32) -> Result<MatchSet, MatchError> {
    let text = std::fs::read_to_string(path).map_err(|source| MatchError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_matches(&text, path, reference_node_id, width, height)
}

pub fn parse_matches(text: &str, path: &Path, reference_node_id: u32, width: u32, height: u32) -> Result<MatchSet, MatchError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "u_ref,v_ref,u_query,v_query,confidence" => {}
        _ => return Err(MatchError::Format(FormatError::at_line(path, 1, "missing match CSV header"))),
    }
    let inside = |u: f64, v: f64| u >= 0.0 && v >= 0.0 && u < width as f64 && v < height as f64;
    let mut set = MatchSet::empty(reference_node_id);
    let mut seen = std::collections::HashSet::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let row = i + 1;
        let f = parse_f64_fields(line, ',').map_err(|m| MatchError::Format(FormatError::at_line(path, row, m)))?;
        if f.len() != 5 || !f.iter().all(|v| v.is_finite()) {
            return Err(MatchError::Format(FormatError::at_line(path, row, "expected 5 finite fields")));
        }
        if !inside(f[0], f[1]) || !inside(f[2], f[3]) {
            return Err(MatchError::OutOfBounds {
                file: path.display().to_string(),
                row,
                width,
                height,
            });
        }
        if seen.insert((f[2].to_bits(), f[3].to_bits())) {
            set.correspondences.push(Correspondence {
                uv_ref: (f[0], f[1]),
                uv_query: (f[2], f[3]),
                confidence: f[4],
            });
        }
    }
    Ok(set)
}
