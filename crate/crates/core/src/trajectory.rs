//! Timestamped pose streams: text I/O and absolute trajectory error.
//!
//! Lines read `timestamp x y z qw qx qy qz`, 17 significant digits.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::geometry::Pose;
use crate::textio::{fmt_sig, FormatError};

pub type Trajectory = Vec<(f64, Pose)>;

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("{0}")]
    Format(FormatError),
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("trajectory is empty")]
    Empty,
    #[error("no pose pairs within {max_dt} s of each other")]
    NoMatches { max_dt: f64 },
}

pub fn format_line(t: f64, pose: &Pose) -> String {
    format!("{} {}", fmt_sig(t, 17), pose.to_text())
}

pub fn to_text(traj: &[(f64, Pose)]) -> String {
    let mut out = String::new();
    for (t, p) in traj {
        let _ = writeln!(out, "{}", format_line(*t, p));
    }
    out
}

pub fn write_trajectory(path: &Path, traj: &[(f64, Pose)]) -> Result<(), TrajectoryError> {
    std::fs::write(path, to_text(traj)).map_err(|source| TrajectoryError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Parses trajectory text. Blank lines and `#` comments are skipped; commas
/// are accepted as separators too.
pub fn parse_trajectory(text: &str, path: &Path) -> Result<Trajectory, TrajectoryError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |m: String| TrajectoryError::Format(FormatError::at_line(path, i + 1, m));
        let f = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|f| !f.is_empty())
            .map(|f| f.parse::<f64>().map_err(|_| format!("bad number {f:?}")))
            .collect::<Result<Vec<f64>, String>>()
            .map_err(err)?;
        if f.len() != 8 {
            return Err(err(format!("expected 8 fields, found {}", f.len())));
        }
        let pose = Pose::from_values(&f[1..]).map_err(|e| err(e.to_string()))?;
        out.push((f[0], pose));
    }
    Ok(out)
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory, TrajectoryError> {
    let text = std::fs::read_to_string(path).map_err(|source| TrajectoryError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_trajectory(&text, path)
}

/// Absolute trajectory error without any alignment transform.
#[derive(Clone, Debug, PartialEq)]
pub struct AteReport {
    pub rmse: f64,
    /// `(est timestamp, translation error)` per matched pair.
    pub errors: Vec<(f64, f64)>,
    pub matched: usize,
}

/// Pairs every estimated pose with the ground-truth pose nearest in time
/// (earlier one on ties) and keeps pairs at most `max_dt` apart.
pub fn compute_ate(gt: &[(f64, Pose)], est: &[(f64, Pose)], max_dt: f64) -> Result<AteReport, TrajectoryError> {
    if gt.is_empty() || est.is_empty() {
        return Err(TrajectoryError::Empty);
    }
    let mut sorted: Vec<&(f64, Pose)> = gt.iter().collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut errors = Vec::new();
    for (t, p) in est {
        let idx = sorted.partition_point(|g| g.0 < *t);
        let mut best: Option<(f64, &Pose)> = None;
        for j in [idx.wrapping_sub(1), idx] {
            if let Some(g) = sorted.get(j) {
                let dt = (g.0 - t).abs();
                if best.is_none_or(|(bd, _)| dt < bd) {
                    best = Some((dt, &g.1));
                }
            }
        }
        if let Some((dt, g)) = best {
            if dt <= max_dt {
                errors.push((*t, p.translation_distance(g)));
            }
        }
    }
    if errors.is_empty() {
        return Err(TrajectoryError::NoMatches { max_dt });
    }
    let rmse = (errors.iter().map(|e| e.1 * e.1).sum::<f64>() / errors.len() as f64).sqrt();
    Ok(AteReport {
        rmse,
        matched: errors.len(),
        errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;

    fn line_traj(n: usize, offset: f64) -> Trajectory {
        (0..n).map(|i| (i as f64 * 0.1, Pose::planar(i as f64 + offset, 0.0, 0.0, 0.1 * i as f64))).collect()
    }

    #[test]
    fn identical_trajectories_have_zero_error() {
        let t = line_traj(10, 0.0);
        let r = compute_ate(&t, &t, 0.01).unwrap();
        assert_eq!(r.rmse, 0.0);
        assert_eq!(r.matched, 10);
    }

    #[test]
    fn constant_offset_gives_offset() {
        let r = compute_ate(&line_traj(10, 0.0), &line_traj(10, 0.1), 0.01).unwrap();
        assert!((r.rmse - 0.1).abs() < 1e-12);
    }

    #[test]
    fn hand_built_errors() {
        let gt: Trajectory = (0..3).map(|i| (i as f64, Pose::identity())).collect();
        let est: Trajectory = [0.1, 0.2, 0.2]
            .iter()
            .enumerate()
            .map(|(i, e)| (i as f64, Pose::from_translation(Vec3::new(0.0, *e, 0.0))))
            .collect();
        let r = compute_ate(&gt, &est, 0.05).unwrap();
        assert!((r.rmse - 0.03f64.sqrt()).abs() < 1e-15);
        assert!((r.rmse - 0.1732).abs() < 1e-4);
    }

    #[test]
    fn association_respects_max_dt() {
        let gt = line_traj(5, 0.0);
        let est: Trajectory = gt.iter().map(|(t, p)| (t + 0.5, *p)).collect();
        assert!(matches!(compute_ate(&gt, &est, 0.05), Err(TrajectoryError::NoMatches { .. })));
        assert!(matches!(compute_ate(&[], &est, 0.05), Err(TrajectoryError::Empty)));
    }

    #[test]
    fn text_round_trip() {
        let t = line_traj(7, 1.0 / 3.0);
        let back = parse_trajectory(&to_text(&t), Path::new("x")).unwrap();
        assert_eq!(back, t);
    }
}
