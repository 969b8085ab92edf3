//! Relocalization benchmark datasets: reference images with poses and
//! queries with depth and ground truth.
//!
//! ```text
//! intrinsics.txt            fx fy cx cy width height
//! refs/<i>.pgm              reference images
//! refs/poses.csv            index,x,y,z,qw,qx,qy,qz
//! refs/landmarks/<i>.csv    optional simulator annotations
//! queries/<j>.pgm
//! queries/depth/<j>.f32
//! queries/gt_poses.csv      index,ref,x,y,z,qw,qx,qy,qz
//! queries/landmarks/<j>.csv optional simulator annotations
//! matches/<j>.csv           optional external correspondences
//! ```
//!
//! Poses are world body poses. `ref` names the reference image a query is
//! localized against.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::{localize_against_node, PnpParams, RelocError, RelocResult};
use crate::geometry::{CameraIntrinsics, DepthRange, Pose};
use crate::imaging::{read_depth, read_pgm, write_depth, write_pgm, ImageIoError};
use crate::mapgraph::{read_landmarks, write_landmarks, MapError, MapNode};
use crate::matching::{read_matches, ClassicalMatcher, MatchError, MatchSet, MatchView, Matcher, OracleMatcher};
use crate::observation::Observation;
use crate::simworld::{render, GridWorld, SimError};
use crate::textio::{parse_f64_fields, FormatError};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Format(FormatError),
    #[error(transparent)]
    Image(#[from] ImageIoError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Reloc(#[from] RelocError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("invalid dataset: {0}")]
    Invalid(String),
}

fn io(path: &Path, source: std::io::Error) -> DatasetError {
    DatasetError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RelocQuery {
    pub observation: Observation,
    pub gt_pose: Pose,
    pub reference: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RelocDataset {
    pub intrinsics: CameraIntrinsics,
    /// References as bare map nodes (no descriptor).
    pub refs: Vec<MapNode>,
    pub queries: Vec<RelocQuery>,
}

fn pose_row(p: &Pose) -> String {
    p.to_text().replace(' ', ",")
}

pub fn save_reloc_dataset(ds: &RelocDataset, dir: &Path) -> Result<(), DatasetError> {
    let mkdir = |p: &Path| fs::create_dir_all(p).map_err(|e| io(p, e));
    let write = |p: &Path, s: &str| fs::write(p, s).map_err(|e| io(p, e));
    mkdir(&dir.join("refs"))?;
    mkdir(&dir.join("queries").join("depth"))?;
    write(&dir.join("intrinsics.txt"), &(ds.intrinsics.to_text() + "\n"))?;
    let mut poses = String::from("index,x,y,z,qw,qx,qy,qz\n");
    for (i, r) in ds.refs.iter().enumerate() {
        let img = r.image.as_ref().ok_or(RelocError::NoReferenceImage(r.id))?;
        write_pgm(&dir.join("refs").join(format!("{i}.pgm")), img)?;
        let _ = writeln!(poses, "{i},{}", pose_row(&r.pose));
        if let Some(l) = &r.landmarks {
            mkdir(&dir.join("refs").join("landmarks"))?;
            write_landmarks(&dir.join("refs").join("landmarks").join(format!("{i}.csv")), l)?;
        }
    }
    write(&dir.join("refs").join("poses.csv"), &poses)?;
    let mut gt = String::from("index,ref,x,y,z,qw,qx,qy,qz\n");
    for (j, q) in ds.queries.iter().enumerate() {
        let qdir = dir.join("queries");
        write_pgm(&qdir.join(format!("{j}.pgm")), &q.observation.color)?;
        let depth = q.observation.depth.as_ref().ok_or(RelocError::NoDepth)?;
        write_depth(&qdir.join("depth").join(format!("{j}.f32")), depth)?;
        if let Some(l) = &q.observation.landmarks {
            mkdir(&qdir.join("landmarks"))?;
            write_landmarks(&qdir.join("landmarks").join(format!("{j}.csv")), l)?;
        }
        let _ = writeln!(gt, "{j},{},{}", q.reference, pose_row(&q.gt_pose));
    }
    write(&dir.join("queries").join("gt_poses.csv"), &gt)
}

fn read_rows(path: &Path, header: &str, fields: usize) -> Result<Vec<Vec<f64>>, DatasetError> {
    let text = fs::read_to_string(path).map_err(|e| io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == header => {}
        _ => return Err(DatasetError::Format(FormatError::at_line(path, 1, format!("expected header {header}")))),
    }
    let mut rows = Vec::new();
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |m: String| DatasetError::Format(FormatError::at_line(path, n + 1, m));
        let f = parse_f64_fields(line, ',').map_err(bad)?;
        if f.len() != fields {
            return Err(bad(format!("expected {fields} fields, found {}", f.len())));
        }
        if f[0] != rows.len() as f64 {
            return Err(bad(format!("expected index {}", rows.len())));
        }
        rows.push(f);
    }
    Ok(rows)
}

fn pose_at(path: &Path, line: usize, v: &[f64]) -> Result<Pose, DatasetError> {
    Pose::from_values(v).map_err(|e| DatasetError::Format(FormatError::at_line(path, line, e.to_string())))
}

pub fn load_reloc_dataset(dir: &Path) -> Result<RelocDataset, DatasetError> {
    let ipath = dir.join("intrinsics.txt");
    let itext = fs::read_to_string(&ipath).map_err(|e| io(&ipath, e))?;
    let intrinsics = CameraIntrinsics::from_text(itext.trim())
        .map_err(|e| DatasetError::Format(FormatError::at_line(&ipath, 1, e.to_string())))?;
    let ppath = dir.join("refs").join("poses.csv");
    let mut refs = Vec::new();
    for (i, row) in read_rows(&ppath, "index,x,y,z,qw,qx,qy,qz", 8)?.iter().enumerate() {
        let lpath = dir.join("refs").join("landmarks").join(format!("{i}.csv"));
        refs.push(MapNode {
            id: i as u32,
            pose: pose_at(&ppath, i + 2, &row[1..])?,
            descriptor: Vec::new(),
            image: Some(read_pgm(&dir.join("refs").join(format!("{i}.pgm")))?),
            depth: None,
            landmarks: if lpath.exists() { Some(read_landmarks(&lpath)?) } else { None },
        });
    }
    let gpath = dir.join("queries").join("gt_poses.csv");
    let mut queries = Vec::new();
    for (j, row) in read_rows(&gpath, "index,ref,x,y,z,qw,qx,qy,qz", 9)?.iter().enumerate() {
        let reference = row[1];
        if reference < 0.0 || reference.fract() != 0.0 || reference as usize >= refs.len() {
            return Err(DatasetError::Format(FormatError::at_line(&gpath, j + 2, format!("no reference {reference}"))));
        }
        let qdir = dir.join("queries");
        let lpath = qdir.join("landmarks").join(format!("{j}.csv"));
        queries.push(RelocQuery {
            observation: Observation {
                color: read_pgm(&qdir.join(format!("{j}.pgm")))?,
                depth: Some(read_depth(&qdir.join("depth").join(format!("{j}.f32")), intrinsics.width, intrinsics.height)?),
                landmarks: if lpath.exists() { Some(read_landmarks(&lpath)?) } else { None },
            },
            gt_pose: pose_at(&gpath, j + 2, &row[2..])?,
            reference: reference as u32,
        });
    }
    Ok(RelocDataset { intrinsics, refs, queries })
}

/// Layout of a generated benchmark.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RelocGenParams {
    pub references: usize,
    pub queries_per_reference: usize,
    /// Query offsets are drawn up to this far from the reference, meters.
    pub max_offset: f64,
    /// And up to this much yaw, radians.
    pub max_yaw: f64,
    pub camera_height: f64,
    /// References must see at least this many landmarks.
    pub min_landmarks: usize,
}

impl Default for RelocGenParams {
    fn default() -> Self {
        Self {
            references: 10,
            queries_per_reference: 5,
            max_offset: 0.5,
            max_yaw: 0.25,
            camera_height: 0.6,
            min_landmarks: 60,
        }
    }
}

/// Seeded benchmark from a simulated world: references at random free
/// poses facing textured walls, queries at small random offsets from them.
pub fn generate_reloc_dataset(
    world: &GridWorld,
    k: &CameraIntrinsics,
    params: &RelocGenParams,
    seed: u64,
) -> Result<RelocDataset, DatasetError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cells = world.free_cells();
    if cells.is_empty() {
        return Err(DatasetError::Invalid("world has no free cells".into()));
    }
    let clearance = 0.35;
    let mut refs = Vec::new();
    let mut queries = Vec::new();
    let mut attempts = 0;
    while refs.len() < params.references {
        attempts += 1;
        if attempts > 1000 * params.references.max(1) {
            return Err(DatasetError::Invalid("could not place enough reference views".into()));
        }
        let (i, j) = cells[rng.random_range(0..cells.len())];
        let (cx, cy) = world.cell_center(i, j);
        let s = world.cell_size() / 2.0;
        let (x, y) = (cx + rng.random_range(-s..s), cy + rng.random_range(-s..s));
        let yaw = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        if !world.disk_free(x, y, clearance) {
            continue;
        }
        let pose = Pose::planar(x, y, params.camera_height, yaw);
        let frame = render(world, &pose, k)?;
        if frame.landmark_obs.len() < params.min_landmarks {
            continue;
        }
        let id = refs.len() as u32;
        let mut placed = 0;
        while placed < params.queries_per_reference {
            let r = params.max_offset * rng.random::<f64>().sqrt();
            let a = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            let dyaw = rng.random_range(-params.max_yaw..=params.max_yaw);
            let (qx, qy) = (x + r * a.cos(), y + r * a.sin());
            if !world.disk_free(qx, qy, clearance) {
                continue;
            }
            let q = Pose::planar(qx, qy, params.camera_height, yaw + dyaw);
            queries.push(RelocQuery {
                observation: render(world, &q, k)?.into_observation(),
                gt_pose: q,
                reference: id,
            });
            placed += 1;
        }
        refs.push(MapNode {
            id,
            pose,
            descriptor: Vec::new(),
            image: Some(frame.color),
            depth: None,
            landmarks: Some(frame.landmark_obs),
        });
    }
    Ok(RelocDataset {
        intrinsics: *k,
        refs,
        queries,
    })
}

/// Returns one fixed correspondence set, whatever it is asked.
struct Precomputed(MatchSet);

impl Matcher for Precomputed {
    fn correspond(&mut self, _: u32, _: MatchView<'_>, _: MatchView<'_>) -> MatchSet {
        self.0.clone()
    }
}

/// Where a benchmark run gets its correspondences.
#[derive(Clone, Debug, PartialEq)]
pub enum BenchMatcher {
    Classical,
    Oracle { outlier_rate: f64, noise_px: f64, seed: u64 },
    /// `matches/<j>.csv` under the dataset directory, filtered by confidence.
    Ingest { min_conf: f64 },
}

/// Localizes every query against its reference; returns each result with
/// its ground truth.
pub fn run_reloc_bench(
    ds: &RelocDataset,
    dir: &Path,
    matcher: &BenchMatcher,
    params: &PnpParams,
    range: &DepthRange,
) -> Result<Vec<(RelocResult, Pose)>, DatasetError> {
    let k = &ds.intrinsics;
    let mut classical = ClassicalMatcher::default();
    let mut oracle = match matcher {
        BenchMatcher::Oracle { outlier_rate, noise_px, seed } => Some(OracleMatcher::new(*outlier_rate, *noise_px, *seed)?),
        _ => None,
    };
    let mut out = Vec::with_capacity(ds.queries.len());
    for (j, q) in ds.queries.iter().enumerate() {
        let node = &ds.refs[q.reference as usize];
        let r = match matcher {
            BenchMatcher::Classical => localize_against_node(node, &q.observation, k, &mut classical, params, range)?,
            BenchMatcher::Oracle { .. } => {
                localize_against_node(node, &q.observation, k, oracle.as_mut().expect("built above"), params, range)?
            }
            BenchMatcher::Ingest { min_conf } => {
                let mut set = read_matches(&dir.join("matches").join(format!("{j}.csv")), node.id, k.width, k.height)?;
                set.retain_confident(*min_conf);
                localize_against_node(node, &q.observation, k, &mut Precomputed(set), params, range)?
            }
        };
        out.push((r, q.gt_pose));
    }
    Ok(out)
}

/// Writes one correspondence file per query in the ingest layout, from the
/// oracle matcher. Useful to exercise the ingest path end to end.
pub fn export_oracle_matches(ds: &RelocDataset, dir: &Path, seed: u64) -> Result<(), DatasetError> {
    let mdir = dir.join("matches");
    fs::create_dir_all(&mdir).map_err(|e| io(&mdir, e))?;
    let mut m = OracleMatcher::new(0.0, 0.0, seed)?;
    for (j, q) in ds.queries.iter().enumerate() {
        let node = &ds.refs[q.reference as usize];
        let set = m.correspond(
            node.id,
            MatchView {
                image: node.image.as_ref().ok_or(RelocError::NoReferenceImage(node.id))?,
                landmarks: node.landmarks.as_deref(),
            },
            MatchView {
                image: &q.observation.color,
                landmarks: q.observation.landmarks.as_deref(),
            },
        );
        crate::matching::write_matches(&mdir.join(format!("{j}.csv")), &set)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relocal::compute_reloc_metrics;
    use crate::simworld::Preset;

    fn small() -> (GridWorld, RelocDataset) {
        let world = Preset::Rooms.build(2);
        let params = RelocGenParams {
            references: 3,
            queries_per_reference: 4,
            ..RelocGenParams::default()
        };
        let ds = generate_reloc_dataset(&world, &CameraIntrinsics::default_sim(), &params, 8).unwrap();
        (world, ds)
    }

    #[test]
    fn round_trip() {
        let (_, ds) = small();
        assert_eq!(ds.refs.len(), 3);
        assert_eq!(ds.queries.len(), 12);
        let dir = tempfile::tempdir().unwrap();
        save_reloc_dataset(&ds, dir.path()).unwrap();
        let back = load_reloc_dataset(dir.path()).unwrap();
        assert_eq!(back.intrinsics, ds.intrinsics);
        assert_eq!(back.queries, ds.queries);
        assert_eq!(back.refs, ds.refs);
    }

    #[test]
    fn generation_is_seeded() {
        let (_, a) = small();
        let (_, b) = small();
        assert_eq!(a, b);
    }

    #[test]
    fn oracle_and_ingest_agree() {
        let (_, ds) = small();
        let dir = tempfile::tempdir().unwrap();
        save_reloc_dataset(&ds, dir.path()).unwrap();
        export_oracle_matches(&ds, dir.path(), 0).unwrap();
        let params = PnpParams::default();
        let range = DepthRange::default();
        let oracle = BenchMatcher::Oracle {
            outlier_rate: 0.0,
            noise_px: 0.0,
            seed: 0,
        };
        let a = run_reloc_bench(&ds, dir.path(), &oracle, &params, &range).unwrap();
        let b = run_reloc_bench(&ds, dir.path(), &BenchMatcher::Ingest { min_conf: 0.0 }, &params, &range).unwrap();
        for ((ra, _), (rb, _)) in a.iter().zip(&b) {
            // the match file keeps 9 significant digits per pixel
            assert_eq!((ra.status, ra.inliers), (rb.status, rb.inliers));
            assert!(ra.pose.translation_distance(&rb.pose) < 1e-6);
        }
        let m = compute_reloc_metrics(&a).unwrap();
        assert_eq!(m.pct_estimated, 100.0);
        assert!(m.max_et < 1e-5, "{m:?}");
    }

    #[test]
    fn bad_reference_index_is_rejected() {
        let (_, ds) = small();
        let dir = tempfile::tempdir().unwrap();
        save_reloc_dataset(&ds, dir.path()).unwrap();
        let p = dir.path().join("queries").join("gt_poses.csv");
        let text = fs::read_to_string(&p).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let mut f: Vec<&str> = lines[1].split(',').collect();
        f[1] = "7";
        lines[1] = f.join(",");
        fs::write(&p, lines.join("\n")).unwrap();
        match load_reloc_dataset(dir.path()) {
            Err(DatasetError::Format(e)) => assert_eq!(e.location, crate::textio::Location::Line(2)),
            other => panic!("{other:?}"),
        }
    }
}
