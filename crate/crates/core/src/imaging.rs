//! Grayscale and depth images, their on-disk formats, and depth lookup.

use std::fs;
use std::io;
use std::path::Path;

pub use image::GrayImage;
use thiserror::Error;

use crate::geometry::DepthRange;
use crate::textio::{f32_from_le_bytes, f32_to_le_bytes};

#[derive(Debug, Error)]
pub enum ImageIoError {
    #[error("io error on {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("cannot decode {path}: {message}")]
    Decode { path: String, message: String },
    #[error("{path}: expected {expected} bytes, found {found}")]
    Size { path: String, expected: u64, found: u64 },
}

/// Row-major depth in meters. Non-positive or non-finite values are holes.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f32>,
}

impl DepthImage {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; (width * height) as usize],
        }
    }

    pub fn from_vec(width: u32, height: u32, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), (width * height) as usize);
        Self { width, height, data }
    }

    pub fn get(&self, x: u32, y: u32) -> f32 {
        self.data[(y * self.width + x) as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, d: f32) {
        self.data[(y * self.width + x) as usize] = d;
    }

    /// Depth interpolated at a subpixel location from its four neighbors.
    ///
    /// Interpolation runs on inverse depth, which is affine in pixel
    /// coordinates over a plane, so planar surfaces are reproduced exactly.
    /// Returns `None` if any neighbor is outside the image or invalid.
    pub fn bilinear(&self, u: f64, v: f64, range: &DepthRange) -> Option<f64> {
        if !(u >= 0.0 && v >= 0.0) {
            return None;
        }
        let x0 = u.floor() as u32;
        let y0 = v.floor() as u32;
        if x0 >= self.width || y0 >= self.height {
            return None;
        }
        let fx = u - x0 as f64;
        let fy = v - y0 as f64;
        let x1 = if fx > 0.0 { x0 + 1 } else { x0 };
        let y1 = if fy > 0.0 { y0 + 1 } else { y0 };
        if x1 >= self.width || y1 >= self.height {
            return None;
        }
        let mut inv = [0.0f64; 4];
        for (slot, (x, y)) in inv.iter_mut().zip([(x0, y0), (x1, y0), (x0, y1), (x1, y1)]) {
            let d = self.get(x, y) as f64;
            if !d.is_finite() || !range.contains(d) {
                return None;
            }
            *slot = 1.0 / d;
        }
        let top = inv[0] * (1.0 - fx) + inv[1] * fx;
        let bottom = inv[2] * (1.0 - fx) + inv[3] * fx;
        let id = top * (1.0 - fy) + bottom * fy;
        Some(1.0 / id)
    }
}

fn io_err(path: &Path, source: io::Error) -> ImageIoError {
    ImageIoError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes a binary 8-bit grayscale PGM (P5).
pub fn write_pgm(path: &Path, img: &GrayImage) -> Result<u64, ImageIoError> {
    let mut bytes = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    bytes.extend_from_slice(img.as_raw());
    fs::write(path, &bytes).map_err(|e| io_err(path, e))?;
    Ok(bytes.len() as u64)
}

pub fn read_pgm(path: &Path) -> Result<GrayImage, ImageIoError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let img = image::load_from_memory_with_format(&bytes, image::ImageFormat::Pnm).map_err(|e| {
        ImageIoError::Decode {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    })?;
    Ok(img.into_luma8())
}

/// Writes little-endian float32 depth, row-major, no header.
pub fn write_depth(path: &Path, depth: &DepthImage) -> Result<u64, ImageIoError> {
    let bytes = f32_to_le_bytes(&depth.data);
    fs::write(path, &bytes).map_err(|e| io_err(path, e))?;
    Ok(bytes.len() as u64)
}

pub fn read_depth(path: &Path, width: u32, height: u32) -> Result<DepthImage, ImageIoError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let expected = width as u64 * height as u64 * 4;
    if bytes.len() as u64 != expected {
        return Err(ImageIoError::Size {
            path: path.display().to_string(),
            expected,
            found: bytes.len() as u64,
        });
    }
    Ok(DepthImage::from_vec(width, height, f32_from_le_bytes(&bytes)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_inverse_depth_is_exact_on_a_plane() {
        // Plane z = 2 + 0.01 u in camera coordinates gives 1/z affine only for
        // true planes, so build depth from a tilted plane n·X = d instead.
        let (fx, cx) = (100.0, 8.0);
        let mut img = DepthImage::new(16, 16);
        let plane_depth = |u: f64, v: f64| {
            // plane x + 0.5 y + 2 z = 6 with X = z * ((u-cx)/fx, (v-cx)/fx, 1)
            6.0 / ((u - cx) / fx + 0.5 * (v - cx) / fx + 2.0)
        };
        for y in 0..16 {
            for x in 0..16 {
                img.set(x, y, plane_depth(x as f64, y as f64) as f32);
            }
        }
        let d = img.bilinear(3.3, 7.8, &DepthRange::default()).unwrap();
        assert!((d - plane_depth(3.3, 7.8)).abs() < 1e-6);
    }

    #[test]
    fn bilinear_rejects_holes_and_borders() {
        let mut img = DepthImage::from_vec(4, 4, vec![2.0; 16]);
        let r = DepthRange::default();
        assert_eq!(img.bilinear(1.0, 1.0, &r), Some(2.0));
        assert_eq!(img.bilinear(3.5, 1.0, &r), None);
        assert_eq!(img.bilinear(3.0, 3.0, &r), Some(2.0));
        img.set(2, 2, 0.0);
        assert_eq!(img.bilinear(1.5, 1.5, &r), None);
        assert_eq!(img.bilinear(-0.1, 1.0, &r), None);
    }

    #[test]
    fn pgm_and_depth_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = GrayImage::from_fn(7, 5, |x, y| image::Luma([(x * 31 + y * 7) as u8]));
        let p = dir.path().join("a.pgm");
        write_pgm(&p, &img).unwrap();
        assert_eq!(read_pgm(&p).unwrap(), img);
        let depth = DepthImage::from_vec(3, 2, vec![1.0, 2.5, 0.0, 7.25, f32::NAN, 3.0]);
        let dp = dir.path().join("d.f32");
        write_depth(&dp, &depth).unwrap();
        let back = read_depth(&dp, 3, 2).unwrap();
        assert_eq!(
            back.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            depth.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert!(matches!(read_depth(&dp, 4, 2), Err(ImageIoError::Size { .. })));
    }
}
