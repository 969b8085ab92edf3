//! Segment directory format.
//!
//! ```text
//! intrinsics.txt       fx fy cx cy width height
//! frames.csv           index,timestamp,x,y,z,qw,qx,qy,qz
//! images/<i>.pgm       color
//! depth/<i>.f32        optional depth, camera size
//! landmarks/<i>.csv    optional simulator annotations (landmark_id,u,v,range)
//! odometry.txt         optional body-frame deltas, one trajectory line per tick
//! groundtruth.txt      optional ground-truth trajectory
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{MapError, Segment, SegmentFrame};
use crate::geometry::{CameraIntrinsics, Pose};
use crate::imaging::{read_depth, read_pgm, write_depth, write_pgm};
use crate::observation::{LandmarkObs, Observation};
use crate::textio::{fmt_sig, parse_f64_fields, FormatError};
use crate::trajectory::{read_trajectory, write_trajectory, Trajectory, TrajectoryError};

/// A segment with its optional odometry and ground-truth streams.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentFiles {
    pub segment: Segment,
    pub odometry: Option<Trajectory>,
    pub ground_truth: Option<Trajectory>,
}

fn traj_err(e: TrajectoryError) -> MapError {
    match e {
        TrajectoryError::Format(f) => MapError::Format(f),
        TrajectoryError::Io { path, source } => MapError::Io { path, source },
        other => MapError::InvalidSegment(other.to_string()),
    }
}

fn mkdir(path: &Path) -> Result<(), MapError> {
    fs::create_dir_all(path).map_err(|e| MapError::io(path, e))
}

pub fn save_segment(files: &SegmentFiles, dir: &Path) -> Result<(), MapError> {
    let seg = &files.segment;
    seg.validate()?;
    mkdir(&dir.join("images"))?;
    let write = |p: &Path, s: &str| fs::write(p, s).map_err(|e| MapError::io(p, e));
    write(&dir.join("intrinsics.txt"), &(seg.intrinsics.to_text() + "\n"))?;
    let mut frames = String::from("index,timestamp,x,y,z,qw,qx,qy,qz\n");
    for (i, f) in seg.frames.iter().enumerate() {
        let _ = writeln!(frames, "{i},{},{}", fmt_sig(f.timestamp, 17), f.pose.to_text().replace(' ', ","));
        write_pgm(&dir.join("images").join(format!("{i}.pgm")), &f.observation.color)?;
        if let Some(d) = &f.observation.depth {
            mkdir(&dir.join("depth"))?;
            write_depth(&dir.join("depth").join(format!("{i}.f32")), d)?;
        }
        if let Some(lms) = &f.observation.landmarks {
            mkdir(&dir.join("landmarks"))?;
            write_landmarks(&dir.join("landmarks").join(format!("{i}.csv")), lms)?;
        }
    }
    write(&dir.join("frames.csv"), &frames)?;
    if let Some(o) = &files.odometry {
        write_trajectory(&dir.join("odometry.txt"), o).map_err(traj_err)?;
    }
    if let Some(g) = &files.ground_truth {
        write_trajectory(&dir.join("groundtruth.txt"), g).map_err(traj_err)?;
    }
    Ok(())
}

pub fn write_landmarks(path: &Path, landmarks: &[LandmarkObs]) -> Result<(), MapError> {
    let mut text = String::from("landmark_id,u,v,range\n");
    for l in landmarks {
        let _ = writeln!(text, "{},{},{},{}", l.id, fmt_sig(l.u, 17), fmt_sig(l.v, 17), fmt_sig(l.range, 17));
    }
    fs::write(path, text).map_err(|e| MapError::io(path, e))
}

pub fn read_landmarks(path: &Path) -> Result<Vec<LandmarkObs>, MapError> {
    let text = fs::read_to_string(path).map_err(|e| MapError::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "landmark_id,u,v,range" => {}
        _ => return Err(MapError::Format(FormatError::at_line(path, 1, "expected header landmark_id,u,v,range"))),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f = parse_f64_fields(line, ',').map_err(|m| MapError::Format(FormatError::at_line(path, i + 1, m)))?;
        if f.len() != 4 || f[0] < 0.0 || f[0].fract() != 0.0 {
            return Err(MapError::Format(FormatError::at_line(path, i + 1, "expected landmark_id,u,v,range")));
        }
        out.push(LandmarkObs {
            id: f[0] as u32,
            u: f[1],
            v: f[2],
            range: f[3],
        });
    }
    Ok(out)
}

pub fn load_segment(dir: &Path) -> Result<SegmentFiles, MapError> {
    let ipath = dir.join("intrinsics.txt");
    let itext = fs::read_to_string(&ipath).map_err(|e| MapError::io(&ipath, e))?;
    let intrinsics =
        CameraIntrinsics::from_text(itext.trim()).map_err(|e| MapError::Format(FormatError::at_line(&ipath, 1, e.to_string())))?;
    let fpath = dir.join("frames.csv");
    let ftext = fs::read_to_string(&fpath).map_err(|e| MapError::io(&fpath, e))?;
    let mut lines = ftext.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "index,timestamp,x,y,z,qw,qx,qy,qz" => {}
        _ => return Err(MapError::Format(FormatError::at_line(&fpath, 1, "bad frames.csv header"))),
    }
    let mut frames = Vec::new();
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |m: String| MapError::Format(FormatError::at_line(&fpath, n + 1, m));
        let f = parse_f64_fields(line, ',').map_err(bad)?;
        if f.len() != 9 {
            return Err(bad(format!("expected 9 fields, found {}", f.len())));
        }
        let i = frames.len();
        if f[0] != i as f64 {
            return Err(bad(format!("expected index {i}")));
        }
        let pose = Pose::from_values(&f[2..]).map_err(|e| bad(e.to_string()))?;
        let color = read_pgm(&dir.join("images").join(format!("{i}.pgm")))?;
        let dpath = dir.join("depth").join(format!("{i}.f32"));
        let depth = if dpath.exists() {
            Some(read_depth(&dpath, intrinsics.width, intrinsics.height)?)
        } else {
            None
        };
        let lpath = dir.join("landmarks").join(format!("{i}.csv"));
        let landmarks = if lpath.exists() { Some(read_landmarks(&lpath)?) } else { None };
        frames.push(SegmentFrame {
            observation: Observation { color, depth, landmarks },
            pose,
            timestamp: f[1],
        });
    }
    let segment = Segment { intrinsics, frames };
    segment.validate()?;
    let opt = |name: &str| -> Result<Option<Trajectory>, MapError> {
        let p = dir.join(name);
        if p.exists() {
            read_trajectory(&p).map(Some).map_err(traj_err)
        } else {
            Ok(None)
        }
    };
    Ok(SegmentFiles {
        segment,
        odometry: opt("odometry.txt")?,
        ground_truth: opt("groundtruth.txt")?,
    })
}
