use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::SimError;
use crate::geometry::Vec3;
use crate::textio::{fmt_sig, FormatError};

pub const LANDMARKS_PER_FACE: u32 = 8;

/// Vertical wall face of a cell, named by its outward normal.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Face {
    XNeg,
    XPos,
    YNeg,
    YPos,
}

impl Face {
    pub const ALL: [Face; 4] = [Face::XNeg, Face::XPos, Face::YNeg, Face::YPos];

    pub fn index(self) -> u32 {
        match self {
            Face::XNeg => 0,
            Face::XPos => 1,
            Face::YNeg => 2,
            Face::YPos => 3,
        }
    }

    fn offset(self) -> (i64, i64) {
        match self {
            Face::XNeg => (-1, 0),
            Face::XPos => (1, 0),
            Face::YNeg => (0, -1),
            Face::YPos => (0, 1),
        }
    }
}

/// Identifier of the infinite plane a surface lies on. Pixels sharing a plane
/// id can be interpolated without mixing surfaces.
pub type PlaneId = u32;
pub const PLANE_FLOOR: PlaneId = 0;
pub const PLANE_NONE: PlaneId = u32::MAX;

const PLANE_STRIDE: u32 = 1 << 20;

/// Plane id of `face` of cell `(i, j)`.
pub fn face_plane(i: usize, j: usize, face: Face) -> PlaneId {
    let boundary = match face {
        Face::XNeg => i as u32,
        Face::XPos => i as u32 + 1,
        Face::YNeg => j as u32,
        Face::YPos => j as u32 + 1,
    };
    1 + face.index() * PLANE_STRIDE + boundary
}

#[derive(Clone, Debug, PartialEq)]
pub struct Landmark {
    pub id: u32,
    pub position: Vec3,
    pub plane: PlaneId,
}

/// Closed 2.5D world: an occupancy grid extruded to `wall_height`, standing on
/// the floor plane `z = 0`. Cell `(i, j)` covers
/// `[i·s, (i+1)·s) × [j·s, (j+1)·s)` for cell size `s`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridWorld {
    width: usize,
    height: usize,
    cell_size: f64,
    wall_height: f64,
    texture_seed: u64,
    occupied: Vec<bool>,
    landmarks: Vec<Landmark>,
}

impl GridWorld {
    pub fn new(
        width: usize,
        height: usize,
        cell_size: f64,
        wall_height: f64,
        texture_seed: u64,
        occupied: Vec<bool>,
    ) -> Result<Self, SimError> {
        if !(cell_size > 0.0) || !(wall_height > 0.0) {
            return Err(SimError::InvalidWorld("cell size and wall height must be positive".into()));
        }
        if width < 3 || height < 3 || occupied.len() != width * height {
            return Err(SimError::InvalidWorld("grid must be at least 3x3 and match its size".into()));
        }
        for i in 0..width {
            for j in 0..height {
                let border = i == 0 || j == 0 || i == width - 1 || j == height - 1;
                if border && !occupied[j * width + i] {
                    return Err(SimError::InvalidWorld(format!("boundary cell ({i}, {j}) is free")));
                }
            }
        }
        let mut world = Self {
            width,
            height,
            cell_size,
            wall_height,
            texture_seed,
            occupied,
            landmarks: Vec::new(),
        };
        world.landmarks = world.seed_landmarks();
        Ok(world)
    }

    /// Grid from rows of `#` (occupied) and `.` (free); the first row is `j = 0`.
    pub fn from_rows(rows: &[&str], cell_size: f64, wall_height: f64, texture_seed: u64) -> Result<Self, SimError> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.len());
        let mut occ = Vec::with_capacity(width * height);
        for (j, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(SimError::InvalidWorld(format!("row {j} has length {}", row.len())));
            }
            for c in row.chars() {
                match c {
                    '#' => occ.push(true),
                    '.' => occ.push(false),
                    other => return Err(SimError::InvalidWorld(format!("unexpected cell {other:?}"))),
                }
            }
        }
        Self::new(width, height, cell_size, wall_height, texture_seed, occ)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn wall_height(&self) -> f64 {
        self.wall_height
    }

    pub fn texture_seed(&self) -> u64 {
        self.texture_seed
    }

    pub fn landmarks(&self) -> &[Landmark] {
        &self.landmarks
    }

    /// Out-of-bounds cells count as occupied.
    pub fn is_occupied(&self, i: i64, j: i64) -> bool {
        if i < 0 || j < 0 || i as usize >= self.width || j as usize >= self.height {
            return true;
        }
        self.occupied[j as usize * self.width + i as usize]
    }

    pub fn set_occupied(&mut self, i: usize, j: usize, value: bool) {
        self.occupied[j * self.width + i] = value;
        self.landmarks = self.seed_landmarks();
    }

    pub fn cell_of(&self, x: f64, y: f64) -> (i64, i64) {
        ((x / self.cell_size).floor() as i64, (y / self.cell_size).floor() as i64)
    }

    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.cell_size, (j as f64 + 0.5) * self.cell_size)
    }

    pub fn is_free_point(&self, x: f64, y: f64) -> bool {
        let (i, j) = self.cell_of(x, y);
        !self.is_occupied(i, j)
    }

    /// True if a disk of radius `r` at `(x, y)` touches no occupied cell.
    pub fn disk_free(&self, x: f64, y: f64, r: f64) -> bool {
        let s = self.cell_size;
        let (i0, j0) = self.cell_of(x - r, y - r);
        let (i1, j1) = self.cell_of(x + r, y + r);
        for j in j0..=j1 {
            for i in i0..=i1 {
                if !self.is_occupied(i, j) {
                    continue;
                }
                let (lx, ly) = (i as f64 * s, j as f64 * s);
                let dx = (lx - x).max(0.0).max(x - (lx + s));
                let dy = (ly - y).max(0.0).max(y - (ly + s));
                if dx * dx + dy * dy < r * r {
                    return false;
                }
            }
        }
        true
    }

    /// Straight-line traversability between two points for a disk of radius
    /// `clearance`.
    pub fn line_of_sight(&self, a: (f64, f64), b: (f64, f64), clearance: f64) -> bool {
        let len = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
        let step = self.cell_size / 8.0;
        let n = (len / step).ceil().max(1.0) as usize;
        (0..=n).all(|k| {
            let s = k as f64 / n as f64;
            self.disk_free(a.0 + s * (b.0 - a.0), a.1 + s * (b.1 - a.1), clearance)
        })
    }

    /// Free cells, row-major.
    pub fn free_cells(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for j in 0..self.height {
            for i in 0..self.width {
                if !self.occupied[j * self.width + i] {
                    out.push((i, j));
                }
            }
        }
        out
    }

    fn exposed(&self, i: usize, j: usize, face: Face) -> bool {
        let (di, dj) = face.offset();
        !self.is_occupied(i as i64 + di, j as i64 + dj)
    }

    fn seed_landmarks(&self) -> Vec<Landmark> {
        let s = self.cell_size;
        let zmax = (self.wall_height - 0.1).min(2.2);
        let mut out = Vec::new();
        for j in 0..self.height {
            for i in 0..self.width {
                if !self.occupied[j * self.width + i] {
                    continue;
                }
                for face in Face::ALL {
                    if !self.exposed(i, j, face) {
                        continue;
                    }
                    let mut rng = ChaCha8Rng::seed_from_u64(mix(&[self.texture_seed, 0x1a4d, i as u64, j as u64, face.index() as u64]));
                    for _ in 0..LANDMARKS_PER_FACE {
                        let along = rng.random_range(0.08..0.92) * s;
                        let z = rng.random_range(0.1..zmax);
                        let (x0, y0) = (i as f64 * s, j as f64 * s);
                        let position = match face {
                            Face::XNeg => Vec3::new(x0, y0 + along, z),
                            Face::XPos => Vec3::new(x0 + s, y0 + along, z),
                            Face::YNeg => Vec3::new(x0 + along, y0, z),
                            Face::YPos => Vec3::new(x0 + along, y0 + s, z),
                        };
                        out.push(Landmark {
                            id: out.len() as u32,
                            position,
                            plane: face_plane(i, j, face),
                        });
                    }
                }
            }
        }
        out
    }

    /// Text form: header `width height cell_size wall_height texture_seed`,
    /// then one row of `#`/`.` per grid row.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{} {} {} {} {}\n",
            self.width,
            self.height,
            fmt_sig(self.cell_size, 17),
            fmt_sig(self.wall_height, 17),
            self.texture_seed
        );
        for j in 0..self.height {
            for i in 0..self.width {
                out.push(if self.occupied[j * self.width + i] { '#' } else { '.' });
            }
            let _ = writeln!(out);
        }
        out
    }

    pub fn from_text(text: &str, file: &Path) -> Result<Self, SimError> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| SimError::Format(FormatError::at_line(file, 1, "empty world file")))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        let bad = |m: &str| SimError::Format(FormatError::at_line(file, 1, m));
        if h.len() != 5 {
            return Err(bad("header must be `width height cell_size wall_height texture_seed`"));
        }
        let width: usize = h[0].parse().map_err(|_| bad("bad width"))?;
        let height: usize = h[1].parse().map_err(|_| bad("bad height"))?;
        let cell: f64 = h[2].parse().map_err(|_| bad("bad cell size"))?;
        let wall: f64 = h[3].parse().map_err(|_| bad("bad wall height"))?;
        let seed: u64 = h[4].parse().map_err(|_| bad("bad texture seed"))?;
        let mut occ = Vec::with_capacity(width * height);
        let mut rows = 0;
        for (n, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            if line.len() != width {
                return Err(SimError::Format(FormatError::at_line(file, n + 1, format!("expected {width} cells"))));
            }
            for c in line.chars() {
                match c {
                    '#' => occ.push(true),
                    '.' => occ.push(false),
                    _ => return Err(SimError::Format(FormatError::at_line(file, n + 1, format!("bad cell {c:?}")))),
                }
            }
            rows += 1;
        }
        if rows != height {
            return Err(SimError::Format(FormatError::whole(file, format!("expected {height} rows, found {rows}"))));
        }
        Self::new(width, height, cell, wall, seed, occ)
    }
}

/// SplitMix64-style hash of a word sequence.
pub(crate) fn mix(words: &[u64]) -> u64 {
    let mut h: u64 = 0x9E37_79B9_7F4A_7C15;
    for &w in words {
        h ^= w.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(h << 6).wrapping_add(h >> 2);
        h = splitmix(h);
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn room() -> GridWorld {
        GridWorld::from_rows(&["#####", "#...#", "#.#.#", "#...#", "#####"], 1.0, 2.0, 7).unwrap()
    }

    #[test]
    fn rejects_open_boundary() {
        assert!(GridWorld::from_rows(&["###", "#..", "###"], 1.0, 2.0, 0).is_err());
    }

    #[test]
    fn text_round_trip() {
        let w = room();
        let back = GridWorld::from_text(&w.to_text(), Path::new("w.txt")).unwrap();
        assert_eq!(back, w);
        assert!(GridWorld::from_text("5 5 1 2 7\n#####\n", Path::new("w.txt")).is_err());
    }

    #[test]
    fn landmarks_only_on_exposed_faces() {
        let w = room();
        // pillar at (2,2) has four exposed faces; each border cell adjacent to
        // the free ring exposes one face, corner cells none.
        let exposed_faces = 4 + 12;
        assert_eq!(w.landmarks().len(), exposed_faces * LANDMARKS_PER_FACE as usize);
        for lm in w.landmarks() {
            let (x, y) = (lm.position.x, lm.position.y);
            let on_grid_x = (x - x.round()).abs() < 1e-12;
            let on_grid_y = (y - y.round()).abs() < 1e-12;
            assert!(on_grid_x ^ on_grid_y);
        }
    }

    #[test]
    fn disk_and_line_of_sight() {
        let w = room();
        assert!(w.disk_free(1.5, 1.5, 0.4));
        assert!(!w.disk_free(1.5, 1.5, 0.6));
        assert!(w.line_of_sight((1.5, 1.5), (3.5, 1.5), 0.3));
        assert!(!w.line_of_sight((1.5, 1.5), (3.5, 3.5), 0.3));
    }
}
