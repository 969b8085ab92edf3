use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::rc::Rc;

use super::{Correspondence, MatchSet, MatchView, Matcher};
use crate::imaging::GrayImage;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassicalParams {
    pub max_corners: usize,
    pub nms_radius: u32,
    /// Half width of the square descriptor patch (5 gives 11×11).
    pub patch_radius: u32,
    pub ratio: f64,
    pub harris_k: f64,
    /// Corners weaker than this fraction of the strongest response are dropped.
    pub min_response_ratio: f64,
}

impl Default for ClassicalParams {
    fn default() -> Self {
        Self {
            max_corners: 500,
            nms_radius: 5,
            patch_radius: 5,
            ratio: 0.8,
            harris_k: 0.04,
            min_response_ratio: 1e-4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Corner {
    /// Subpixel location.
    pub u: f64,
    pub v: f64,
    pub response: f64,
}

struct Features {
    corners: Vec<Corner>,
    /// Zero-mean unit-norm patches, row-major, one per corner.
    patches: Vec<Vec<f32>>,
}

fn harris_response(img: &GrayImage, k: f64) -> Vec<f64> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let p = |x: usize, y: usize| img.as_raw()[y * w + x] as f64;
    let mut ixx = vec![0.0; w * h];
    let mut iyy = vec![0.0; w * h];
    let mut ixy = vec![0.0; w * h];
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let gx = (p(x + 1, y - 1) + 2.0 * p(x + 1, y) + p(x + 1, y + 1)) - (p(x - 1, y - 1) + 2.0 * p(x - 1, y) + p(x - 1, y + 1));
            let gy = (p(x - 1, y + 1) + 2.0 * p(x, y + 1) + p(x + 1, y + 1)) - (p(x - 1, y - 1) + 2.0 * p(x, y - 1) + p(x + 1, y - 1));
            let i = y * w + x;
            ixx[i] = gx * gx;
            iyy[i] = gy * gy;
            ixy[i] = gx * gy;
        }
    }
    // 5×5 box window
    let mut r = vec![f64::NEG_INFINITY; w * h];
    for y in 3..h.saturating_sub(3) {
        for x in 3..w.saturating_sub(3) {
            let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
            for yy in y - 2..=y + 2 {
                for xx in x - 2..=x + 2 {
                    let i = yy * w + xx;
                    a += ixx[i];
                    b += iyy[i];
                    c += ixy[i];
                }
            }
            r[y * w + x] = a * b - c * c - k * (a + b) * (a + b);
        }
    }
    r
}

/// Harris corners with greedy non-maximum suppression, strongest first.
///
/// Ties in response are broken by raster order. Locations are refined to
/// subpixel precision by a parabola fit along each axis.
pub fn detect_corners(img: &GrayImage, params: &ClassicalParams) -> Vec<Corner> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let border = params.patch_radius.max(3) as usize + 1;
    if w <= 2 * border || h <= 2 * border {
        return Vec::new();
    }
    let r = harris_response(img, params.harris_k);
    let max = r.iter().copied().fold(0.0f64, f64::max);
    if max <= 0.0 {
        return Vec::new();
    }
    let floor = max * params.min_response_ratio;
    let mut cands: Vec<(f64, usize, usize)> = Vec::new();
    for y in border..h - border {
        for x in border..w - border {
            let v = r[y * w + x];
            if v <= floor {
                continue;
            }
            // keep only 3×3 local maxima; earlier raster position wins ties
            let mut is_max = true;
            'n: for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let o = r[(y as i64 + dy) as usize * w + (x as i64 + dx) as usize];
                    let earlier = dy < 0 || (dy == 0 && dx < 0);
                    if o > v || (o == v && earlier) {
                        is_max = false;
                        break 'n;
                    }
                }
            }
            if is_max {
                cands.push((v, y, x));
            }
        }
    }
    cands.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    let rad = params.nms_radius as i64;
    let mut taken = vec![false; w * h];
    let mut out = Vec::new();
    for (v, y, x) in cands {
        if out.len() >= params.max_corners {
            break;
        }
        let blocked = (-rad..=rad).any(|dy| {
            (-rad..=rad).any(|dx| {
                let (xx, yy) = (x as i64 + dx, y as i64 + dy);
                xx >= 0 && yy >= 0 && (xx as usize) < w && (yy as usize) < h && taken[yy as usize * w + xx as usize]
            })
        });
        if blocked {
            continue;
        }
        taken[y * w + x] = true;
        let fit = |m: f64, c: f64, p: f64| {
            let den = m - 2.0 * c + p;
            if den < 0.0 {
                (0.5 * (m - p) / den).clamp(-0.5, 0.5)
            } else {
                0.0
            }
        };
        let du = fit(r[y * w + x - 1], v, r[y * w + x + 1]);
        let dv = fit(r[(y - 1) * w + x], v, r[(y + 1) * w + x]);
        out.push(Corner {
            u: x as f64 + du,
            v: y as f64 + dv,
            response: v,
        });
    }
    out
}

fn patch(img: &GrayImage, c: &Corner, radius: u32) -> Option<Vec<f32>> {
    let w = img.width() as usize;
    let (cx, cy) = (c.u.round() as i64, c.v.round() as i64);
    let r = radius as i64;
    let mut vals = Vec::with_capacity(((2 * r + 1) * (2 * r + 1)) as usize);
    for y in cy - r..=cy + r {
        for x in cx - r..=cx + r {
            if x < 0 || y < 0 || x as u32 >= img.width() || y as u32 >= img.height() {
                return None;
            }
            vals.push(img.as_raw()[y as usize * w + x as usize] as f64);
        }
    }
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    vals.iter_mut().for_each(|v| *v -= mean);
    let n = vals.iter().map(|v| v * v).sum::<f64>().sqrt();
    (n > 1e-9).then(|| vals.iter().map(|v| (v / n) as f32).collect())
}

/// Separable 5-tap binomial blur with clamped borders. Corners and patches
/// are taken from the blurred image, which makes them less sensitive to the
/// resampling a viewpoint change causes.
fn blur(img: &GrayImage) -> GrayImage {
    const TAPS: [f64; 5] = [0.0625, 0.25, 0.375, 0.25, 0.0625];
    let (w, h) = (img.width() as i64, img.height() as i64);
    let src = img.as_raw();
    let idx = |x: i64, y: i64| (y.clamp(0, h - 1) * w + x.clamp(0, w - 1)) as usize;
    let mut rows = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            rows[idx(x, y)] = TAPS.iter().zip(-2..=2).map(|(t, d)| t * src[idx(x + d, y)] as f64).sum();
        }
    }
    GrayImage::from_fn(w as u32, h as u32, |x, y| {
        let v: f64 = TAPS.iter().zip(-2..=2).map(|(t, d)| t * rows[idx(x as i64, y as i64 + d)]).sum();
        image::Luma([v.round() as u8])
    })
}

fn features(img: &GrayImage, params: &ClassicalParams) -> Features {
    let img = &blur(img);
    let mut corners = Vec::new();
    let mut patches = Vec::new();
    for c in detect_corners(img, params) {
        if let Some(p) = patch(img, &c, params.patch_radius) {
            corners.push(c);
            patches.push(p);
        }
    }
    Features { corners, patches }
}

fn sq_dist(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Best and second-best squared distance from `a` into `set`.
fn nearest_two(a: &[f32], set: &[Vec<f32>]) -> Option<(usize, f32, f32)> {
    let mut best: Option<(usize, f32)> = None;
    let mut second = f32::INFINITY;
    for (j, b) in set.iter().enumerate() {
        let d = sq_dist(a, b);
        match best {
            Some((_, bd)) if d >= bd => second = second.min(d),
            Some((_, bd)) => {
                second = bd;
                best = Some((j, d));
            }
            None => best = Some((j, d)),
        }
    }
    best.map(|(j, d)| (j, d, second))
}

/// Harris corners, 11×11 NCC patches, mutual nearest neighbor with a ratio
/// test. Per-image features are cached by image content.
pub struct ClassicalMatcher {
    pub params: ClassicalParams,
    cache: HashMap<u64, Rc<Features>>,
}

impl ClassicalMatcher {
    pub fn new(params: ClassicalParams) -> Self {
        Self {
            params,
            cache: HashMap::new(),
        }
    }

    fn features_for(&mut self, img: &GrayImage) -> Rc<Features> {
        let mut h = DefaultHasher::new();
        (img.width(), img.height()).hash(&mut h);
        img.as_raw().hash(&mut h);
        let key = h.finish();
        let params = self.params;
        self.cache.entry(key).or_insert_with(|| Rc::new(features(img, &params))).clone()
    }

    pub fn match_images(&mut self, reference_id: u32, img_ref: &GrayImage, img_query: &GrayImage) -> MatchSet {
        let fr = self.features_for(img_ref);
        let fq = self.features_for(img_query);
        let ratio2 = (self.params.ratio * self.params.ratio) as f32;
        let back: Vec<Option<usize>> = fr.patches.iter().map(|p| nearest_two(p, &fq.patches).map(|(j, _, _)| j)).collect();
        let mut set = MatchSet::empty(reference_id);
        for (qi, qp) in fq.patches.iter().enumerate() {
            let Some((ri, d1, d2)) = nearest_two(qp, &fr.patches) else { continue };
            if back[ri] != Some(qi) {
                continue;
            }
            if !(d1 < ratio2 * d2) {
                continue;
            }
            set.correspondences.push(Correspondence {
                uv_ref: (fr.corners[ri].u, fr.corners[ri].v),
                uv_query: (fq.corners[qi].u, fq.corners[qi].v),
                confidence: (1.0 - d1 as f64 / 2.0).max(0.0),
            });
        }
        set
    }
}

impl Default for ClassicalMatcher {
    fn default() -> Self {
        Self::new(ClassicalParams::default())
    }
}

impl Matcher for ClassicalMatcher {
    fn correspond(&mut self, reference_id: u32, reference: MatchView<'_>, query: MatchView<'_>) -> MatchSet {
        self.match_images(reference_id, reference.image, query.image)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blocks(seed: u64) -> GrayImage {
        // random 4×4-pixel blocks: plenty of corners, unique patches
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tiles: Vec<u8> = (0..32 * 32).map(|_| rng.random()).collect();
        GrayImage::from_fn(96, 80, |x, y| image::Luma([tiles[(y / 4 * 32 + x / 4) as usize]]))
    }

    #[test]
    fn constant_images_give_no_matches() {
        let img = GrayImage::from_pixel(64, 64, image::Luma([128]));
        assert!(ClassicalMatcher::default().match_images(0, &img, &img).is_empty());
    }

    #[test]
    fn self_match_is_identity() {
        let img = blocks(4);
        let mut m = ClassicalMatcher::default();
        let corners = features(&img, &m.params).corners;
        assert!(corners.len() >= 40, "{}", corners.len());
        let set = m.match_images(2, &img, &img);
        assert!(set.len() as f64 > 0.9 * corners.len() as f64, "{} of {}", set.len(), corners.len());
        for c in &set.correspondences {
            assert_eq!(c.uv_ref, c.uv_query);
            assert_eq!(c.confidence, 1.0);
        }
    }

    #[test]
    fn nms_keeps_corners_apart() {
        let img = blocks(8);
        let p = ClassicalParams::default();
        let cs = detect_corners(&img, &p);
        assert!(cs.len() <= p.max_corners);
        for (i, a) in cs.iter().enumerate() {
            for b in &cs[i + 1..] {
                let (dx, dy) = ((a.u.round() - b.u.round()).abs(), (a.v.round() - b.v.round()).abs());
                assert!(dx.max(dy) > p.nms_radius as f64);
            }
        }
        assert!(cs.windows(2).all(|w| w[0].response >= w[1].response));
    }

    #[test]
    fn shifted_image_matches_with_offset() {
        let img = blocks(5);
        let shifted = GrayImage::from_fn(96, 80, |x, y| *img.get_pixel((x + 3).min(95), (y + 2).min(79)));
        let set = ClassicalMatcher::default().match_images(0, &img, &shifted);
        assert!(set.len() > 30);
        let good = set
            .correspondences
            .iter()
            .filter(|c| (c.uv_ref.0 - c.uv_query.0 - 3.0).abs() < 0.5 && (c.uv_ref.1 - c.uv_query.1 - 2.0).abs() < 0.5)
            .count();
        assert!(good as f64 >= 0.95 * set.len() as f64);
    }

    #[test]
    fn no_duplicate_query_pixels() {
        let a = blocks(6);
        let b = blocks(7);
        let set = ClassicalMatcher::default().match_images(0, &a, &b);
        let mut keys: Vec<_> = set.correspondences.iter().map(|c| (c.uv_query.0.to_bits(), c.uv_query.1.to_bits())).collect();
        let n = keys.len();
        keys.sort_unstable();
        keys.dedup();
        assert_eq!(keys.len(), n);
    }
}
