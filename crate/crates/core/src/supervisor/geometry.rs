//! Spatial layout of a cell path.
//!
//! Each path cell contributes one piece. The first and last cells contribute
//! the half from/to their centre. A cell passed straight through contributes
//! a full-width line, a 90° turn a quarter arc of radius `cell_size / 2`
//! between the two edge midpoints. Docks, reversals and intermediate
//! service stops are "via centre" cells: line to the centre, stop, line out.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::powertrain::AgvParams;
use crate::terminal_map::{Cell, Direction, TerminalMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SegmentKind {
    Straight,
    Curve,
    Crab,
}

impl SegmentKind {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(c: u8) -> Option<Self> {
        [SegmentKind::Straight, SegmentKind::Curve, SegmentKind::Crab].get(c as usize).copied()
    }
}

/// Speed class limit for a piece.
pub fn speed_limit_for(kind: SegmentKind, params: &AgvParams) -> f64 {
    match kind {
        SegmentKind::Straight => params.v_max_straight,
        SegmentKind::Curve => params.v_max_curve,
        SegmentKind::Crab => params.v_max_crab,
    }
}

/// One path cell's piece.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub length_m: f64,
    pub kind: SegmentKind,
    pub v_limit: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    /// Radians in (−π, π].
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self { x, y, heading: normalize_angle(heading) }
    }
}

/// Wraps an angle into (−π, π].
pub fn normalize_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    if r <= -PI {
        r += 2.0 * PI;
    }
    r
}

pub fn direction_heading(d: Direction) -> f64 {
    match d {
        Direction::E => 0.0,
        Direction::N => FRAC_PI_2,
        Direction::W => PI,
        Direction::S => -FRAC_PI_2,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Shape {
    Point { at: (f64, f64) },
    /// From `from` along `dir` for the full piece length.
    Line { from: (f64, f64), dir: Direction },
    /// Half line in, half line out through the centre.
    ViaCenter { from: (f64, f64), center: (f64, f64), dir_in: Direction, dir_out: Direction },
    Arc { pivot: (f64, f64), radius: f64, start_angle: f64, sweep_sign: f64, heading_in: f64 },
}

/// Arc-length parametrization of a path. `bounds[k]..bounds[k+1]` is the
/// stretch of path inside cell `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathGeometry {
    pub cells: Vec<Cell>,
    pub bounds: Vec<f64>,
    pub segments: Vec<Segment>,
    shapes: Vec<Shape>,
    /// Path indices whose cell centre lies on the path.
    pub stop_indices: Vec<usize>,
    /// Arc length at each path cell's stop point (NaN for curve cells).
    pub stop_s: Vec<f64>,
    /// Whether the vehicle must be at rest at this cell's centre.
    pub forced_stop: Vec<bool>,
    pub cell_size: f64,
}

fn dirs_of(path: &[Cell]) -> Vec<Direction> {
    path.windows(2)
        .map(|w| w[0].direction_to(w[1]).expect("path cells must be 4-adjacent"))
        .collect()
}

fn is_turn(a: Direction, b: Direction) -> bool {
    a != b && a != b.opposite()
}

fn left_of(d: Direction) -> Direction {
    match d {
        Direction::N => Direction::W,
        Direction::W => Direction::S,
        Direction::S => Direction::E,
        Direction::E => Direction::N,
    }
}

/// Classifies every path cell. `service` marks intermediate cells where the
/// vehicle must stop (pickup docks).
pub fn classify_path(map: &TerminalMap, path: &[Cell], params: &AgvParams, service: &[usize]) -> Vec<Segment> {
    let cs = map.cell_size();
    let n = path.len();
    let dirs = dirs_of(path);
    (0..n)
        .map(|k| {
            let dock = map.is_dock(path[k]);
            let (length_m, shape_kind) = if n == 1 {
                (0.0, SegmentKind::Straight)
            } else if k == 0 || k == n - 1 {
                (cs / 2.0, SegmentKind::Straight)
            } else {
                let (din, dout) = (dirs[k - 1], dirs[k]);
                let via = dock || service.contains(&k) || din == dout.opposite();
                if via {
                    (cs, SegmentKind::Straight)
                } else if is_turn(din, dout) {
                    (PI * cs / 4.0, SegmentKind::Curve)
                } else {
                    (cs, SegmentKind::Straight)
                }
            };
            let kind = if dock { SegmentKind::Crab } else { shape_kind };
            Segment { length_m, kind, v_limit: speed_limit_for(kind, params) }
        })
        .collect()
}

impl PathGeometry {
    /// `grid_rows` and `cell_size` place cells in the metric frame.
    pub fn new(path: &[Cell], segments: &[Segment], cell_size: f64, grid_rows: u32, service: &[usize]) -> Self {
        assert_eq!(path.len(), segments.len(), "one segment per path cell");
        assert!(!path.is_empty(), "path must not be empty");
        let n = path.len();
        let h = cell_size / 2.0;
        let center = |c: Cell| (f64::from(c.col) * cell_size, f64::from(grid_rows - 1 - c.row) * cell_size);
        let dirs = dirs_of(path);
        let mut bounds = Vec::with_capacity(n + 1);
        bounds.push(0.0);
        for s in segments {
            let last = *bounds.last().unwrap();
            bounds.push(last + s.length_m);
        }
        let mut shapes = Vec::with_capacity(n);
        let mut forced_stop = vec![false; n];
        let mut stop_s = vec![f64::NAN; n];
        forced_stop[0] = true;
        forced_stop[n - 1] = true;
        for k in 0..n {
            let c = center(path[k]);
            let shape = if n == 1 {
                Shape::Point { at: c }
            } else if k == 0 {
                Shape::Line { from: c, dir: dirs[0] }
            } else {
                let din = dirs[k - 1];
                let (ux, uy) = din.unit();
                let entry = (c.0 - ux * h, c.1 - uy * h);
                if k == n - 1 {
                    Shape::Line { from: entry, dir: din }
                } else {
                    let dout = dirs[k];
                    let via = segments[k].kind == SegmentKind::Crab || service.contains(&k) || din == dout.opposite();
                    if via {
                        forced_stop[k] = true;
                        Shape::ViaCenter { from: entry, center: c, dir_in: din, dir_out: dout }
                    } else if is_turn(din, dout) {
                        let (vx, vy) = dout.unit();
                        let pivot = (c.0 - ux * h + vx * h, c.1 - uy * h + vy * h);
                        let start_angle = (entry.1 - pivot.1).atan2(entry.0 - pivot.0);
                        let sweep_sign = if dout == left_of(din) { 1.0 } else { -1.0 };
                        Shape::Arc { pivot, radius: h, start_angle, sweep_sign, heading_in: direction_heading(din) }
                    } else {
                        Shape::Line { from: entry, dir: din }
                    }
                }
            };
            if !matches!(shape, Shape::Arc { .. }) {
                stop_s[k] = if k == 0 {
                    0.0
                } else if k == n - 1 {
                    bounds[n]
                } else {
                    bounds[k] + h
                };
            }
            shapes.push(shape);
        }
        let stop_indices = (0..n).filter(|&k| !stop_s[k].is_nan()).collect();
        Self {
            cells: path.to_vec(),
            bounds,
            segments: segments.to_vec(),
            shapes,
            stop_indices,
            stop_s,
            forced_stop,
            cell_size,
        }
    }

    pub fn total_length(&self) -> f64 {
        *self.bounds.last().unwrap()
    }

    /// Path index of the piece containing arc length `s` (lowest on ties).
    pub fn piece_at(&self, s: f64) -> usize {
        let n = self.cells.len();
        if s <= 0.0 {
            return 0;
        }
        match self.bounds[1..].iter().position(|&b| s <= b) {
            Some(k) => k.min(n - 1),
            None => n - 1,
        }
    }

    /// Pose at arc length `s` with heading along the path tangent.
    pub fn pose_at(&self, s: f64) -> Pose {
        let k = self.piece_at(s);
        let u = (s - self.bounds[k]).clamp(0.0, self.segments[k].length_m);
        match self.shapes[k] {
            Shape::Point { at } => Pose::new(at.0, at.1, 0.0),
            Shape::Line { from, dir } => {
                let (ux, uy) = dir.unit();
                Pose::new(from.0 + ux * u, from.1 + uy * u, direction_heading(dir))
            }
            Shape::ViaCenter { from, center, dir_in, dir_out } => {
                // The vehicle turns on the spot while stopped at the centre.
                let h = self.cell_size / 2.0;
                if u < h {
                    let (ux, uy) = dir_in.unit();
                    Pose::new(from.0 + ux * u, from.1 + uy * u, direction_heading(dir_in))
                } else {
                    let (ux, uy) = dir_out.unit();
                    let w = u - h;
                    Pose::new(center.0 + ux * w, center.1 + uy * w, direction_heading(dir_out))
                }
            }
            Shape::Arc { pivot, radius, start_angle, sweep_sign, heading_in } => {
                let phi = sweep_sign * u / radius;
                let a = start_angle + phi;
                Pose::new(pivot.0 + radius * a.cos(), pivot.1 + radius * a.sin(), heading_in + phi)
            }
        }
    }

    /// Signed curvature (1/m, positive = left) of the piece at `s`.
    pub fn curvature_at(&self, s: f64) -> f64 {
        match self.shapes[self.piece_at(s)] {
            Shape::Arc { radius, sweep_sign, .. } => sweep_sign / radius,
            _ => 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terminal_map::{build_map, MapSpec};
    use approx::assert_abs_diff_eq;

    fn grid() -> TerminalMap {
        build_map(&MapSpec::from_layout(&["++++", "++++", "++++"])).unwrap()
    }

    #[test]
    fn straight_path_lengths() {
        let m = grid();
        let p = AgvParams::default();
        let path = [Cell::new(0, 0), Cell::new(0, 1), Cell::new(0, 2), Cell::new(0, 3)];
        let segs = classify_path(&m, &path, &p, &[]);
        let g = PathGeometry::new(&path, &segs, 4.0, 3, &[]);
        assert_abs_diff_eq!(g.total_length(), 12.0);
        let pose = g.pose_at(6.0);
        assert_abs_diff_eq!(pose.x, 6.0);
        assert_abs_diff_eq!(pose.y, 8.0);
        assert_abs_diff_eq!(pose.heading, 0.0);
        assert_eq!(g.stop_indices, vec![0, 1, 2, 3]);
    }

    #[test]
    fn turn_is_quarter_arc() {
        let m = grid();
        let p = AgvParams::default();
        // East then south: a right turn in cell (0,1).
        let path = [Cell::new(0, 0), Cell::new(0, 1), Cell::new(1, 1)];
        let segs = classify_path(&m, &path, &p, &[]);
        assert_eq!(segs[1].kind, SegmentKind::Curve);
        assert_eq!(segs[1].v_limit, 3.0);
        let g = PathGeometry::new(&path, &segs, 4.0, 3, &[]);
        let end = g.pose_at(g.bounds[2]);
        // Exit midpoint of (0,1) towards south: x = 4, y = 8 - 2.
        assert_abs_diff_eq!(end.x, 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(end.y, 6.0, epsilon = 1e-12);
        assert_abs_diff_eq!(end.heading, -FRAC_PI_2, epsilon = 1e-12);
        assert!(g.stop_s[1].is_nan());
        assert!(g.curvature_at(g.bounds[1] + 0.1) < 0.0);
    }

    #[test]
    fn reversal_stops_at_center() {
        let m = build_map(&MapSpec::from_layout(&["Q", "|", "+"])).unwrap();
        let p = AgvParams::default();
        let path = [Cell::new(2, 0), Cell::new(1, 0), Cell::new(0, 0), Cell::new(1, 0), Cell::new(2, 0)];
        let segs = classify_path(&m, &path, &p, &[]);
        assert_eq!(segs[2].kind, SegmentKind::Crab);
        let g = PathGeometry::new(&path, &segs, 4.0, 3, &[]);
        assert!(g.forced_stop[2]);
        let at_dock = g.pose_at(g.stop_s[2]);
        assert_abs_diff_eq!(at_dock.y, 8.0);
        assert_abs_diff_eq!(g.pose_at(g.stop_s[2] - 1.0).heading, FRAC_PI_2);
        assert_abs_diff_eq!(g.pose_at(g.stop_s[2] + 1.0).heading, -FRAC_PI_2);
    }
}
