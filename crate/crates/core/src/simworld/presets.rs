use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::world::GridWorld;
use super::SimError;

pub const PRESET_CELL: f64 = 0.5;
pub const PRESET_WALL_HEIGHT: f64 = 2.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Corridor,
    Rooms,
    Campus,
}

impl FromStr for Preset {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self, SimError> {
        match s {
            "corridor" => Ok(Preset::Corridor),
            "rooms" => Ok(Preset::Rooms),
            "campus" => Ok(Preset::Campus),
            other => Err(SimError::InvalidWorld(format!("unknown preset {other:?}"))),
        }
    }
}

struct Grid {
    w: usize,
    h: usize,
    occ: Vec<bool>,
}

impl Grid {
    fn closed(w: usize, h: usize) -> Self {
        Self {
            w,
            h,
            occ: vec![true; w * h],
        }
    }

    fn carve(&mut self, i0: usize, j0: usize, i1: usize, j1: usize) {
        for j in j0..=j1 {
            for i in i0..=i1 {
                self.occ[j * self.w + i] = false;
            }
        }
    }

    fn fill(&mut self, i0: usize, j0: usize, i1: usize, j1: usize) {
        for j in j0..=j1 {
            for i in i0..=i1 {
                self.occ[j * self.w + i] = true;
            }
        }
    }

    fn finish(self, seed: u64) -> GridWorld {
        GridWorld::new(self.w, self.h, PRESET_CELL, PRESET_WALL_HEIGHT, seed, self.occ).expect("preset grids are closed")
    }
}

const ROOM: usize = 12;
const ROOM_PITCH: usize = ROOM + 1;
const CAMPUS_STREET: usize = 10;
const CAMPUS_BLOCK_W: usize = 16;
const CAMPUS_BLOCK_H: usize = 12;

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Corridor => "corridor",
            Preset::Rooms => "rooms",
            Preset::Campus => "campus",
        }
    }

    pub fn build(self, seed: u64) -> GridWorld {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x005e_ed0f_3a11);
        match self {
            Preset::Corridor => {
                // 32 m x 3 m corridor with a few shallow alcoves.
                let mut g = Grid::closed(66, 10);
                g.carve(1, 2, 64, 7);
                let mut i = 4 + rng.random_range(0..4);
                while i + 3 < 62 {
                    let (lo, hi) = (i, i + 1 + rng.random_range(0..2));
                    if rng.random_bool(0.5) {
                        g.carve(lo, 1, hi, 1);
                    } else {
                        g.carve(lo, 8, hi, 8);
                    }
                    i += 6 + rng.random_range(0..6);
                }
                g.finish(seed)
            }
            Preset::Rooms => {
                let mut g = Grid::closed(3 * ROOM_PITCH + 1, 2 * ROOM_PITCH + 1);
                for r in 0..2 {
                    for c in 0..3 {
                        let (i0, j0) = (c * ROOM_PITCH + 1, r * ROOM_PITCH + 1);
                        g.carve(i0, j0, i0 + ROOM - 1, j0 + ROOM - 1);
                        // a seeded pillar per room, away from the center line
                        let pi = i0 + if rng.random_bool(0.5) { 2 } else { ROOM - 4 };
                        let pj = j0 + if rng.random_bool(0.5) { 2 } else { ROOM - 4 };
                        g.fill(pi, pj, pi + 1, pj + 1);
                    }
                }
                for r in 0..2 {
                    for c in 0..3 {
                        let (i0, j0) = (c * ROOM_PITCH + 1, r * ROOM_PITCH + 1);
                        if c + 1 < 3 {
                            let wall = (c + 1) * ROOM_PITCH;
                            g.carve(wall, j0 + 4, wall, j0 + 7);
                        }
                        if r + 1 < 2 {
                            let wall = (r + 1) * ROOM_PITCH;
                            g.carve(i0 + 4, wall, i0 + 7, wall);
                        }
                    }
                }
                g.finish(seed)
            }
            Preset::Campus => {
                let w = 4 * CAMPUS_STREET + 3 * CAMPUS_BLOCK_W + 2;
                let h = 3 * CAMPUS_STREET + 2 * CAMPUS_BLOCK_H + 2;
                let mut g = Grid::closed(w, h);
                g.carve(1, 1, w - 2, h - 2);
                for r in 0..2 {
                    for c in 0..3 {
                        let i0 = 1 + CAMPUS_STREET + c * (CAMPUS_STREET + CAMPUS_BLOCK_W);
                        let j0 = 1 + CAMPUS_STREET + r * (CAMPUS_STREET + CAMPUS_BLOCK_H);
                        g.fill(i0, j0, i0 + CAMPUS_BLOCK_W - 1, j0 + CAMPUS_BLOCK_H - 1);
                        // seeded notch so facades differ
                        let ni = i0 + 2 + rng.random_range(0..CAMPUS_BLOCK_W - 6);
                        g.carve(ni, j0, ni + 1, j0);
                    }
                }
                g.finish(seed)
            }
        }
    }

    /// Route used to record the mapping segment, world (x, y) meters. Every
    /// route covers its streets in both directions.
    pub fn mapping_route(self) -> Vec<(f64, f64)> {
        let s = PRESET_CELL;
        match self {
            Preset::Corridor => {
                let y = 5.0 * s;
                vec![(1.5, y), (31.5, y), (1.5, y)]
            }
            Preset::Rooms => {
                let center = |c: usize, r: usize| {
                    (
                        (c * ROOM_PITCH + 1 + ROOM / 2) as f64 * s,
                        (r * ROOM_PITCH + 1 + ROOM / 2) as f64 * s,
                    )
                };
                let lap = [(0, 0), (1, 0), (2, 0), (2, 1), (1, 1), (0, 1), (0, 0)];
                let mut route: Vec<(f64, f64)> = lap.iter().map(|&(c, r)| center(c, r)).collect();
                route.extend(lap.iter().rev().skip(1).map(|&(c, r)| center(c, r)));
                route
            }
            Preset::Campus => {
                let (xs, ys) = campus_streets();
                let (x0, x3) = (xs[0], xs[3]);
                let (y0, y1, y2) = (ys[0], ys[1], ys[2]);
                let mut route = vec![(x0, y0), (x3, y0), (x3, y2), (x0, y2), (x0, y0)];
                route.extend([(x0, y1), (x3, y1), (x3, y0), (x0, y0), (x0, y2), (x3, y2), (x3, y1), (x0, y1), (x0, y0)]);
                for &x in &xs[1..3] {
                    route.extend([(x, y0), (x, y2), (x, y0)]);
                }
                route.push((x0, y0));
                route
            }
        }
    }

    /// A closed loop of at least 100 m for long drives.
    pub fn long_loop(self) -> Option<Vec<(f64, f64)>> {
        match self {
            Preset::Campus => {
                let (xs, ys) = campus_streets();
                Some(vec![(xs[0], ys[0]), (xs[3], ys[0]), (xs[3], ys[2]), (xs[0], ys[2]), (xs[0], ys[0])])
            }
            _ => None,
        }
    }
}

/// Street center lines of the campus preset: x of the vertical streets and y
/// of the horizontal streets.
pub fn campus_streets() -> ([f64; 4], [f64; 3]) {
    let s = PRESET_CELL;
    let half = CAMPUS_STREET as f64 / 2.0;
    let xs = std::array::from_fn(|c| (1.0 + c as f64 * (CAMPUS_STREET + CAMPUS_BLOCK_W) as f64 + half) * s);
    let ys = std::array::from_fn(|r| (1.0 + r as f64 * (CAMPUS_STREET + CAMPUS_BLOCK_H) as f64 + half) * s);
    (xs, ys)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn routes_are_traversable() {
        for preset in [Preset::Corridor, Preset::Rooms, Preset::Campus] {
            let world = preset.build(7);
            let route = preset.mapping_route();
            for w in route.windows(2) {
                assert!(world.line_of_sight(w[0], w[1], 0.35), "{} {:?}", preset.name(), w);
            }
        }
    }

    #[test]
    fn campus_loop_is_long_enough() {
        let lp = Preset::Campus.long_loop().unwrap();
        let len: f64 = lp.windows(2).map(|w| (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1)).sum();
        assert!(len >= 100.0, "{len}");
    }

    #[test]
    fn presets_are_seed_deterministic() {
        assert_eq!(Preset::Corridor.build(3), Preset::Corridor.build(3));
        assert_ne!(Preset::Corridor.build(3), Preset::Corridor.build(4));
    }
}
