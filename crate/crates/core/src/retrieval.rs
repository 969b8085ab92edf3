//! Global image descriptors and exhaustive place retrieval.
//!
//! The built-in descriptor concatenates a mean-subtracted 8×8 intensity
//! thumbnail (64 values) with a 4×4 grid of 12-bin gradient orientation
//! histograms (192 values), each block L2-normalized and weighted equally,
//! for 256 dimensions. External descriptors of any dimension can replace the
//! map's descriptors through [`ingest_descriptors`].

use std::path::Path;

use thiserror::Error;

use crate::imaging::GrayImage;
use crate::mapgraph::TopoMetricMap;
use crate::textio::f32_from_le_bytes;

pub const DESCRIPTOR_DIM: usize = 256;
const THUMB: usize = 8;
const HIST_GRID: usize = 4;
const HIST_BINS: usize = 12;
/// Norm deviation that ingestion silently renormalizes.
const RENORM_TOLERANCE: f64 = 0.1;
/// Norm deviation accepted without touching the values.
const UNIT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("image is empty")]
    EmptyImage,
    #[error("map has no nodes")]
    EmptyMap,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("descriptor dimension mismatch: expected {expected} values, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("descriptor of node {node} has norm {norm}, too far from 1 to renormalize")]
    NonUnitNorm { node: usize, norm: f64 },
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Unit-norm global image descriptor.
#[derive(Clone, Debug, PartialEq)]
pub struct GlobalDescriptor {
    pub values: Vec<f32>,
}

impl GlobalDescriptor {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Ranked `(node_id, similarity)` list, best first.
#[derive(Clone, Debug, PartialEq)]
pub struct RetrievalResult {
    pub ranked: Vec<(u32, f64)>,
}

impl RetrievalResult {
    pub fn top1(&self) -> Option<(u32, f64)> {
        self.ranked.first().copied()
    }
}

/// Cosine similarity of two unit vectors, accumulated in f64.
pub fn similarity(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum()
}

fn block_bounds(n: usize, blocks: usize, i: usize) -> (usize, usize) {
    let lo = i * n / blocks;
    let hi = ((i + 1) * n / blocks).max(lo + 1).min(n);
    (lo.min(n - 1), hi)
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

pub fn extract_descriptor(image: &GrayImage) -> Result<GlobalDescriptor, RetrievalError> {
    let (w, h) = (image.width() as usize, image.height() as usize);
    if w == 0 || h == 0 {
        return Err(RetrievalError::EmptyImage);
    }
    let px = |x: usize, y: usize| image.as_raw()[y * w + x] as f64 / 255.0;

    let mut thumb = vec![0.0; THUMB * THUMB];
    for by in 0..THUMB {
        let (y0, y1) = block_bounds(h, THUMB, by);
        for bx in 0..THUMB {
            let (x0, x1) = block_bounds(w, THUMB, bx);
            let mut sum = 0.0;
            for y in y0..y1 {
                for x in x0..x1 {
                    sum += px(x, y);
                }
            }
            thumb[by * THUMB + bx] = sum / ((y1 - y0) * (x1 - x0)) as f64;
        }
    }
    let mean = thumb.iter().sum::<f64>() / thumb.len() as f64;
    // rounding residue of a flat thumbnail must not survive normalization
    thumb.iter_mut().for_each(|v| *v = if (*v - mean).abs() < 1e-12 { 0.0 } else { *v - mean });
    normalize(&mut thumb);

    let mut hist = vec![0.0; HIST_GRID * HIST_GRID * HIST_BINS];
    let bin_width = std::f64::consts::TAU / HIST_BINS as f64;
    for y in 1..h.saturating_sub(1) {
        let cy = (y * HIST_GRID / h).min(HIST_GRID - 1);
        for x in 1..w.saturating_sub(1) {
            let gx = px(x + 1, y) - px(x - 1, y);
            let gy = px(x, y + 1) - px(x, y - 1);
            let mag = gx.hypot(gy);
            if mag == 0.0 {
                continue;
            }
            let cx = (x * HIST_GRID / w).min(HIST_GRID - 1);
            let angle = gy.atan2(gx).rem_euclid(std::f64::consts::TAU);
            // soft assignment between the two nearest bin centers
            let pos = angle / bin_width - 0.5;
            let lo = pos.floor();
            let frac = pos - lo;
            let b0 = (lo as i64).rem_euclid(HIST_BINS as i64) as usize;
            let b1 = (b0 + 1) % HIST_BINS;
            let base = (cy * HIST_GRID + cx) * HIST_BINS;
            hist[base + b0] += mag * (1.0 - frac);
            hist[base + b1] += mag * frac;
        }
    }
    normalize(&mut hist);

    let mut values: Vec<f64> = thumb.into_iter().chain(hist).collect();
    normalize(&mut values);
    if values.iter().all(|v| *v == 0.0) {
        values[0] = 1.0;
    }
    Ok(GlobalDescriptor {
        values: values.into_iter().map(|v| v as f32).collect(),
    })
}

/// Exhaustive cosine retrieval; ties broken by ascending node id.
pub fn top_k(query: &[f32], map: &TopoMetricMap, k: usize) -> Result<RetrievalResult, RetrievalError> {
    if k == 0 {
        return Err(RetrievalError::ZeroK);
    }
    if map.is_empty() {
        return Err(RetrievalError::EmptyMap);
    }
    if query.len() != map.descriptor_dim {
        return Err(RetrievalError::DimensionMismatch {
            expected: map.descriptor_dim,
            found: query.len(),
        });
    }
    let mut ranked: Vec<(u32, f64)> = map.nodes.iter().map(|n| (n.id, similarity(query, &n.descriptor))).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(k);
    Ok(RetrievalResult { ranked })
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct IngestReport {
    /// Node ids whose descriptors were rescaled to unit norm.
    pub renormalized: Vec<u32>,
}

/// Replaces every node descriptor with the rows of a `descriptors.f32` file.
///
/// Rows are `dim` values long; the map adopts `dim` as its descriptor
/// dimension. Norms within 10% of one are rescaled with a warning.
pub fn ingest_descriptors(path: &Path, map: &mut TopoMetricMap, dim: usize) -> Result<IngestReport, RetrievalError> {
    let bytes = std::fs::read(path).map_err(|source| RetrievalError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let expected = map.len() * dim;
    if bytes.len() % 4 != 0 || bytes.len() / 4 != expected || dim == 0 {
        return Err(RetrievalError::DimensionMismatch {
            expected,
            found: bytes.len() / 4,
        });
    }
    let values = f32_from_le_bytes(&bytes);
    let mut rows: Vec<Vec<f32>> = values.chunks(dim).map(<[f32]>::to_vec).collect();
    let mut report = IngestReport::default();
    for (node, row) in rows.iter_mut().enumerate() {
        let norm = row.iter().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt();
        if (norm - 1.0).abs() <= UNIT_TOLERANCE {
            continue;
        }
        if !norm.is_finite() || (norm - 1.0).abs() > RENORM_TOLERANCE {
            return Err(RetrievalError::NonUnitNorm { node, norm });
        }
        log::warn!("descriptor of node {node} has norm {norm:.6}; renormalizing");
        row.iter_mut().for_each(|v| *v = (*v as f64 / norm) as f32);
        report.renormalized.push(node as u32);
    }
    for (n, row) in map.nodes.iter_mut().zip(rows) {
        n.descriptor = row;
    }
    map.descriptor_dim = dim;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose;
    use crate::mapgraph::MapNode;
    use crate::textio::f32_to_le_bytes;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn textured(seed: u64) -> GrayImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        GrayImage::from_fn(64, 48, |_, _| image::Luma([rng.random()]))
    }

    pub(crate) fn map_with(descriptors: Vec<Vec<f32>>) -> TopoMetricMap {
        let dim = descriptors[0].len();
        let mut m = TopoMetricMap::empty(dim, 0.1);
        for (i, d) in descriptors.into_iter().enumerate() {
            m.nodes.push(MapNode {
                id: i as u32,
                pose: Pose::identity(),
                descriptor: d,
                image: None,
                depth: None,
                landmarks: None,
            });
        }
        m
    }

    fn unit(dim: usize, i: usize) -> Vec<f32> {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        v
    }

    #[test]
    fn constant_image_falls_back_to_e0() {
        let d = extract_descriptor(&GrayImage::from_pixel(32, 32, image::Luma([90]))).unwrap();
        assert_eq!(d.dim(), DESCRIPTOR_DIM);
        assert_eq!(d.values, unit(DESCRIPTOR_DIM, 0));
    }

    #[test]
    fn empty_image_is_rejected() {
        assert!(matches!(extract_descriptor(&GrayImage::new(0, 0)), Err(RetrievalError::EmptyImage)));
    }

    #[test]
    fn descriptor_is_unit_and_deterministic() {
        let img = textured(3);
        let a = extract_descriptor(&img).unwrap();
        let b = extract_descriptor(&img.clone()).unwrap();
        assert_eq!(a, b);
        let n = a.values.iter().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-6);
        assert!((similarity(&a.values, &b.values) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn tiny_images_work() {
        for (w, h) in [(1, 1), (3, 2), (7, 9)] {
            let img = GrayImage::from_fn(w, h, |x, y| image::Luma([(x * 40 + y * 13) as u8]));
            let d = extract_descriptor(&img).unwrap();
            assert_eq!(d.dim(), DESCRIPTOR_DIM);
        }
    }

    #[test]
    fn similarity_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let a: Vec<f32> = (0..256).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b: Vec<f32> = (0..256).map(|_| rng.random_range(-1.0..1.0)).collect();
            assert_eq!(similarity(&a, &b), similarity(&b, &a));
        }
    }

    #[test]
    fn top_k_examples() {
        let map = map_with((0..10).map(|i| unit(16, i)).collect());
        let r = top_k(&unit(16, 7), &map, 3).unwrap();
        assert_eq!(r.ranked[0], (7, 1.0));
        // remaining are all zero similarity, so ascending ids
        assert_eq!(r.ranked[1].0, 0);
        assert_eq!(r.ranked[2].0, 1);
        let all = top_k(&unit(16, 2), &map, 50).unwrap();
        let mut ids: Vec<u32> = all.ranked.iter().map(|r| r.0).collect();
        assert!(all.ranked.windows(2).all(|w| w[0].1 >= w[1].1));
        ids.sort_unstable();
        assert_eq!(ids, (0..10).collect::<Vec<_>>());
        assert!(matches!(top_k(&unit(16, 2), &map, 0), Err(RetrievalError::ZeroK)));
        assert!(matches!(top_k(&unit(16, 0), &TopoMetricMap::empty(16, 0.1), 1), Err(RetrievalError::EmptyMap)));
    }

    #[test]
    fn ingest_rules() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.f32");
        let mut map = map_with(vec![unit(4, 0), unit(4, 1)]);
        let rows: Vec<f32> = [unit(4, 2), unit(4, 3)].concat();
        std::fs::write(&path, f32_to_le_bytes(&rows)).unwrap();
        let rep = ingest_descriptors(&path, &mut map, 4).unwrap();
        assert!(rep.renormalized.is_empty());
        assert_eq!(map.nodes[1].descriptor, unit(4, 3));

        assert!(matches!(
            ingest_descriptors(&path, &mut map, 3),
            Err(RetrievalError::DimensionMismatch { .. })
        ));

        let scaled: Vec<f32> = rows.iter().map(|v| v * 1.05).collect();
        std::fs::write(&path, f32_to_le_bytes(&scaled)).unwrap();
        let rep = ingest_descriptors(&path, &mut map, 4).unwrap();
        assert_eq!(rep.renormalized, vec![0, 1]);
        assert!((map.nodes[0].descriptor[2] - 1.0).abs() < 1e-6);

        let far: Vec<f32> = rows.iter().map(|v| v * 1.5).collect();
        std::fs::write(&path, f32_to_le_bytes(&far)).unwrap();
        assert!(matches!(
            ingest_descriptors(&path, &mut map, 4),
            Err(RetrievalError::NonUnitNorm { node: 0, .. })
        ));
    }
}
