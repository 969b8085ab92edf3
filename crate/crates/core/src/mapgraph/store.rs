//! Map directory format.
//!
//! ```text
//! manifest.txt      key=value lines
//! nodes.csv         id,x,y,z,qw,qx,qy,qz
//! cng_edges.csv     id_a,id_b,weight
//! cvg_edges.csv     id_a,id_b,n_corr
//! descriptors.f32   little-endian float32, node-major
//! images/<id>.pgm   optional keyframe images
//! depth/<id>.f32    optional keyframe depth
//! landmarks.csv     optional simulator annotations
//! ```
//!
//! Besides the required manifest keys, `storage_bytes_depth`,
//! `storage_bytes_manifests` (the csv files), `depth_width`/`depth_height`
//! and `landmark_nodes` are written. Unknown keys are ignored on load.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{CngEdge, CvgEdge, MapError, MapNode, TopoMetricMap};
use crate::geometry::Pose;
use crate::imaging::{read_depth, read_pgm, write_depth, write_pgm};
use crate::observation::LandmarkObs;
use crate::textio::{f32_from_le_bytes, f32_to_le_bytes, fmt_sig, parse_f64_fields, FormatError};

pub const FORMAT_VERSION: u32 = 1;

/// Bytes on disk per artifact class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StorageReport {
    pub descriptors: u64,
    pub images: u64,
    pub depth: u64,
    /// nodes.csv, cng_edges.csv, cvg_edges.csv and landmarks.csv.
    pub manifests: u64,
}

impl StorageReport {
    pub fn total(&self) -> u64 {
        self.descriptors + self.images + self.depth + self.manifests
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<u64, MapError> {
    fs::write(path, bytes).map_err(|e| MapError::io(path, e))?;
    Ok(bytes.len() as u64)
}

fn mkdir(path: &Path) -> Result<(), MapError> {
    fs::create_dir_all(path).map_err(|e| MapError::io(path, e))
}

pub fn save_map(map: &TopoMetricMap, dir: &Path) -> Result<StorageReport, MapError> {
    map.validate()?;
    mkdir(dir)?;
    let mut report = StorageReport::default();

    let mut nodes = String::from("id,x,y,z,qw,qx,qy,qz\n");
    let mut descriptors = Vec::with_capacity(map.len() * map.descriptor_dim);
    for n in &map.nodes {
        let t = n.pose.translation();
        let q = n.pose.quaternion_wxyz();
        let fields: Vec<String> = [t.x, t.y, t.z, q[0], q[1], q[2], q[3]].iter().map(|v| fmt_sig(*v, 17)).collect();
        let _ = writeln!(nodes, "{},{}", n.id, fields.join(","));
        descriptors.extend_from_slice(&n.descriptor);
    }
    report.manifests += write(&dir.join("nodes.csv"), nodes.as_bytes())?;

    let mut cng = String::from("id_a,id_b,weight\n");
    for e in &map.cng_edges {
        let _ = writeln!(cng, "{},{},{}", e.a, e.b, fmt_sig(e.weight, 17));
    }
    report.manifests += write(&dir.join("cng_edges.csv"), cng.as_bytes())?;

    let mut cvg = String::from("id_a,id_b,n_corr\n");
    for e in &map.cvg_edges {
        let _ = writeln!(cvg, "{},{},{}", e.a, e.b, e.correspondences);
    }
    report.manifests += write(&dir.join("cvg_edges.csv"), cvg.as_bytes())?;

    report.descriptors = write(&dir.join("descriptors.f32"), &f32_to_le_bytes(&descriptors))?;

    let mut depth_size = None;
    for n in &map.nodes {
        if let Some(img) = &n.image {
            mkdir(&dir.join("images"))?;
            report.images += write_pgm(&dir.join("images").join(format!("{}.pgm", n.id)), img)?;
        }
        if let Some(d) = &n.depth {
            match depth_size {
                None => depth_size = Some((d.width, d.height)),
                Some(s) if s != (d.width, d.height) => {
                    return Err(MapError::Invariant("depth images differ in size".into()));
                }
                _ => {}
            }
            mkdir(&dir.join("depth"))?;
            report.depth += write_depth(&dir.join("depth").join(format!("{}.f32", n.id)), d)?;
        }
    }

    let landmark_nodes: Vec<String> = map.nodes.iter().filter(|n| n.landmarks.is_some()).map(|n| n.id.to_string()).collect();
    if !landmark_nodes.is_empty() {
        let mut lm = String::from("node_id,landmark_id,u,v,range\n");
        for n in &map.nodes {
            for l in n.landmarks.iter().flatten() {
                let _ = writeln!(lm, "{},{},{},{},{}", n.id, l.id, fmt_sig(l.u, 17), fmt_sig(l.v, 17), fmt_sig(l.range, 17));
            }
        }
        report.manifests += write(&dir.join("landmarks.csv"), lm.as_bytes())?;
    }

    let mut manifest = format!(
        "version={FORMAT_VERSION}\nnode_count={}\ndescriptor_dim={}\ngrid_res={}\nstorage_bytes_descriptors={}\nstorage_bytes_images={}\nstorage_bytes_depth={}\nstorage_bytes_manifests={}\n",
        map.len(),
        map.descriptor_dim,
        fmt_sig(map.grid_res, 17),
        report.descriptors,
        report.images,
        report.depth,
        report.manifests
    );
    if let Some((w, h)) = depth_size {
        let _ = writeln!(manifest, "depth_width={w}\ndepth_height={h}");
    }
    if !landmark_nodes.is_empty() {
        let _ = writeln!(manifest, "landmark_nodes={}", landmark_nodes.join(";"));
    }
    write(&dir.join("manifest.txt"), manifest.as_bytes())?;
    Ok(report)
}

fn read_text(path: &Path) -> Result<String, MapError> {
    fs::read_to_string(path).map_err(|e| MapError::io(path, e))
}

fn fmt_err(path: &Path, line: usize, msg: impl Into<String>) -> MapError {
    MapError::Format(FormatError::at_line(path, line, msg))
}

/// Data rows of a csv file with a fixed header, as (1-based line, fields).
fn csv_rows(path: &Path, header: &str) -> Result<Vec<(usize, Vec<f64>)>, MapError> {
    let text = read_text(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == header => {}
        _ => return Err(fmt_err(path, 1, format!("expected header `{header}`"))),
    }
    let width = header.split(',').count();
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f = parse_f64_fields(line, ',').map_err(|m| fmt_err(path, i + 1, m))?;
        if f.len() != width {
            return Err(fmt_err(path, i + 1, format!("expected {width} fields, found {}", f.len())));
        }
        rows.push((i + 1, f));
    }
    Ok(rows)
}

fn as_index(path: &Path, line: usize, v: f64) -> Result<u32, MapError> {
    if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
        Ok(v as u32)
    } else {
        Err(fmt_err(path, line, format!("{v} is not a valid id")))
    }
}

pub fn load_map(dir: &Path) -> Result<TopoMetricMap, MapError> {
    let manifest_path = dir.join("manifest.txt");
    let mut kv = BTreeMap::new();
    for (i, line) in read_text(&manifest_path)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| fmt_err(&manifest_path, i + 1, "expected key=value"))?;
        kv.insert(k.trim().to_string(), (i + 1, v.trim().to_string()));
    }
    let get = |key: &str| -> Result<&(usize, String), MapError> {
        kv.get(key)
            .ok_or_else(|| MapError::Format(FormatError::whole(&manifest_path, format!("missing key {key}"))))
    };
    let version = &get("version")?.1;
    if version.parse::<u32>().ok() != Some(FORMAT_VERSION) {
        return Err(MapError::VersionMismatch {
            found: version.clone(),
            expected: FORMAT_VERSION,
        });
    }
    let parse_usize = |key: &str| -> Result<usize, MapError> {
        let (line, v) = get(key)?;
        v.parse().map_err(|_| fmt_err(&manifest_path, *line, format!("bad {key}")))
    };
    let node_count = parse_usize("node_count")?;
    let dim = parse_usize("descriptor_dim")?;
    let grid_res: f64 = {
        let (line, v) = get("grid_res")?;
        v.parse().map_err(|_| fmt_err(&manifest_path, *line, "bad grid_res"))?
    };

    let nodes_path = dir.join("nodes.csv");
    let rows = csv_rows(&nodes_path, "id,x,y,z,qw,qx,qy,qz")?;
    if rows.len() != node_count {
        return Err(MapError::Format(FormatError::whole(
            &nodes_path,
            format!("{} rows for node_count {node_count}", rows.len()),
        )));
    }

    let desc_path = dir.join("descriptors.f32");
    let bytes = fs::read(&desc_path).map_err(|e| MapError::io(&desc_path, e))?;
    let expected = (node_count * dim * 4) as u64;
    if bytes.len() as u64 != expected {
        return Err(MapError::Format(FormatError::at_offset(
            &desc_path,
            bytes.len().min(expected as usize) as u64,
            format!("expected {expected} bytes, found {}", bytes.len()),
        )));
    }
    let desc = f32_from_le_bytes(&bytes);

    let depth_size = match (kv.get("depth_width"), kv.get("depth_height")) {
        (Some((lw, w)), Some((lh, h))) => Some((
            w.parse::<u32>().map_err(|_| fmt_err(&manifest_path, *lw, "bad depth_width"))?,
            h.parse::<u32>().map_err(|_| fmt_err(&manifest_path, *lh, "bad depth_height"))?,
        )),
        _ => None,
    };

    let mut landmarks: BTreeMap<u32, Vec<LandmarkObs>> = BTreeMap::new();
    if let Some((line, ids)) = kv.get("landmark_nodes") {
        for s in ids.split(';').filter(|s| !s.is_empty()) {
            let id: u32 = s.parse().map_err(|_| fmt_err(&manifest_path, *line, "bad landmark_nodes"))?;
            landmarks.insert(id, Vec::new());
        }
        let lm_path = dir.join("landmarks.csv");
        for (line, f) in csv_rows(&lm_path, "node_id,landmark_id,u,v,range")? {
            let node = as_index(&lm_path, line, f[0])?;
            let obs = LandmarkObs {
                id: as_index(&lm_path, line, f[1])?,
                u: f[2],
                v: f[3],
                range: f[4],
            };
            landmarks
                .get_mut(&node)
                .ok_or_else(|| fmt_err(&lm_path, line, format!("node {node} not listed in landmark_nodes")))?
                .push(obs);
        }
    }

    let mut map = TopoMetricMap::empty(dim, grid_res);
    for (i, (line, f)) in rows.into_iter().enumerate() {
        let id = as_index(&nodes_path, line, f[0])?;
        if id as usize != i {
            return Err(fmt_err(&nodes_path, line, format!("expected id {i}, found {id}")));
        }
        let pose = Pose::from_values(&f[1..]).map_err(|e| fmt_err(&nodes_path, line, e.to_string()))?;
        let image_path = dir.join("images").join(format!("{id}.pgm"));
        let image = if image_path.exists() { Some(read_pgm(&image_path)?) } else { None };
        let depth_path = dir.join("depth").join(format!("{id}.f32"));
        let depth = match (depth_path.exists(), depth_size) {
            (true, Some((w, h))) => Some(read_depth(&depth_path, w, h)?),
            (true, None) => {
                return Err(MapError::Format(FormatError::whole(&manifest_path, "depth files present without depth_width/depth_height")));
            }
            _ => None,
        };
        map.nodes.push(MapNode {
            id,
            pose,
            descriptor: desc[i * dim..(i + 1) * dim].to_vec(),
            image,
            depth,
            landmarks: landmarks.remove(&id),
        });
    }
    if let Some((id, _)) = landmarks.into_iter().next() {
        return Err(MapError::Format(FormatError::whole(&manifest_path, format!("landmark node {id} does not exist"))));
    }

    let cng_path = dir.join("cng_edges.csv");
    for (line, f) in csv_rows(&cng_path, "id_a,id_b,weight")? {
        map.cng_edges.push(CngEdge {
            a: as_index(&cng_path, line, f[0])?,
            b: as_index(&cng_path, line, f[1])?,
            weight: f[2],
        });
    }
    let cvg_path = dir.join("cvg_edges.csv");
    for (line, f) in csv_rows(&cvg_path, "id_a,id_b,n_corr")? {
        map.cvg_edges.push(CvgEdge {
            a: as_index(&cvg_path, line, f[0])?,
            b: as_index(&cvg_path, line, f[1])?,
            correspondences: as_index(&cvg_path, line, f[2])?,
        });
    }
    map.validate()?;
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{DepthImage, GrayImage};
    use crate::textio::Location;

    fn small_map() -> TopoMetricMap {
        let mut m = TopoMetricMap::empty(4, 0.1);
        for i in 0..3u32 {
            let mut d = vec![0.0f32; 4];
            d[i as usize] = 1.0;
            m.nodes.push(MapNode {
                id: i,
                pose: Pose::planar(i as f64 * 0.7, 0.1, 0.6, 0.3 * i as f64),
                descriptor: d,
                image: Some(GrayImage::from_fn(5, 4, |x, y| image::Luma([(x * 7 + y * 31 + i) as u8]))),
                depth: (i != 1).then(|| DepthImage::from_vec(2, 2, vec![1.0, 2.5, 0.0, 3.25])),
                landmarks: (i == 2).then(|| {
                    vec![LandmarkObs {
                        id: 9,
                        u: 1.5,
                        v: 2.25,
                        range: 1.0 / 3.0,
                    }]
                }),
            });
        }
        m.nodes[0].landmarks = Some(Vec::new());
        let w = (m.nodes[0].position() - m.nodes[1].position()).norm();
        m.cng_edges.push(CngEdge { a: 0, b: 1, weight: w });
        m.cvg_edges.push(CvgEdge { a: 0, b: 2, correspondences: 77 });
        m
    }

    #[test]
    fn round_trip_with_all_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let m = small_map();
        let report = save_map(&m, dir.path()).unwrap();
        assert_eq!(load_map(dir.path()).unwrap(), m);
        assert_eq!(report.descriptors, 48);
        assert_eq!(report.images, 3 * (fs::read(dir.path().join("images/0.pgm")).unwrap().len() as u64));
        assert_eq!(report.depth, 32);
    }

    #[test]
    fn empty_map_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let m = TopoMetricMap::empty(256, 0.1);
        let report = save_map(&m, dir.path()).unwrap();
        assert_eq!(report.images, 0);
        assert_eq!(load_map(dir.path()).unwrap(), m);
    }

    #[test]
    fn truncated_descriptors_name_the_file() {
        let dir = tempfile::tempdir().unwrap();
        save_map(&small_map(), dir.path()).unwrap();
        let p = dir.path().join("descriptors.f32");
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
        match load_map(dir.path()) {
            Err(MapError::Format(e)) => {
                assert!(e.file.ends_with("descriptors.f32"));
                assert_eq!(e.location, Location::Offset(45));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        save_map(&small_map(), dir.path()).unwrap();
        let p = dir.path().join("manifest.txt");
        let text = fs::read_to_string(&p).unwrap().replace("version=1", "version=2");
        fs::write(&p, text).unwrap();
        assert!(matches!(load_map(dir.path()), Err(MapError::VersionMismatch { .. })));
    }

    #[test]
    fn malformed_nodes_report_line() {
        let dir = tempfile::tempdir().unwrap();
        save_map(&small_map(), dir.path()).unwrap();
        let p = dir.path().join("nodes.csv");
        let text = fs::read_to_string(&p).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let mut fields: Vec<&str> = lines[1].split(',').collect();
        fields[2] = "zz";
        lines[1] = fields.join(",");
        fs::write(&p, lines.join("\n") + "\n").unwrap();
        match load_map(dir.path()) {
            Err(MapError::Format(e)) => assert_eq!(e.location, Location::Line(2)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_manifest_keys_are_ignored() {
        let dir = tempfile::tempdir().unwrap();
        let m = small_map();
        save_map(&m, dir.path()).unwrap();
        let p = dir.path().join("manifest.txt");
        let text = fs::read_to_string(&p).unwrap() + "comment=hello\n";
        fs::write(&p, text).unwrap();
        assert_eq!(load_map(dir.path()).unwrap(), m);
    }
}
