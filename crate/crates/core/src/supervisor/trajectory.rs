//! Timed trajectories: a cell path, its geometry, service stops and a speed
//! profile along the arc length.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::geometry::{PathGeometry, Pose, Segment};
use super::profile::{Profile, SpeedPiece};
use super::reservation::{Occupancy, OccupancyKind};
use crate::terminal_map::Cell;

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopAction {
    Load,
    Unload,
    /// Direction reversal; no dwell.
    Reverse,
}

impl StopAction {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(c: u8) -> Option<Self> {
        [StopAction::Load, StopAction::Unload, StopAction::Reverse].get(c as usize).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stop {
    pub path_index: usize,
    pub dwell_s: f64,
    pub action: StopAction,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellTiming {
    pub cell: Cell,
    pub enter_t: f64,
    pub exit_t: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub agv: u32,
    pub job: Option<u64>,
    pub revision: u32,
    pub priority: bool,
    pub grid_rows: u32,
    pub path: Vec<Cell>,
    pub segments: Vec<Segment>,
    pub stops: Vec<Stop>,
    pub profile: Profile,
    geom: PathGeometry,
}

/// Path indices of intermediate service stops.
pub fn service_indices(stops: &[Stop], path_len: usize) -> Vec<usize> {
    stops
        .iter()
        .filter(|s| s.action != StopAction::Reverse && s.path_index > 0 && s.path_index + 1 < path_len)
        .map(|s| s.path_index)
        .collect()
}

impl Trajectory {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        agv: u32,
        job: Option<u64>,
        priority: bool,
        path: Vec<Cell>,
        segments: Vec<Segment>,
        stops: Vec<Stop>,
        profile: Profile,
        cell_size: f64,
        grid_rows: u32,
    ) -> Self {
        let geom = PathGeometry::new(&path, &segments, cell_size, grid_rows, &service_indices(&stops, path.len()));
        Self { agv, job, revision: 0, priority, grid_rows, path, segments, stops, profile, geom }
    }

    pub fn geometry(&self) -> &PathGeometry {
        &self.geom
    }

    pub fn cell_size(&self) -> f64 {
        self.geom.cell_size
    }

    pub fn with_profile(&self, profile: Profile) -> Self {
        let mut t = self.clone();
        t.profile = profile;
        t.revision += 1;
        t
    }

    pub fn start_time(&self) -> f64 {
        self.profile.start_time()
    }

    /// Time the vehicle first reaches the goal centre.
    pub fn arrival_time(&self) -> f64 {
        self.profile.first_time_at(self.geom.total_length())
    }

    /// Start of service at `stop`: on arrival, or one dwell before
    /// departure when the stop is the start cell.
    pub fn service_start(&self, stop: &Stop) -> f64 {
        let s = self.geom.stop_s[stop.path_index];
        let arrive = self.profile.first_time_at(s);
        if stop.path_index == 0 {
            (self.profile.last_time_at(s) - stop.dwell_s).max(arrive)
        } else {
            arrive
        }
    }

    /// End of the final dwell.
    pub fn completion_time(&self) -> f64 {
        self.profile.end_time()
    }

    pub fn goal(&self) -> Cell {
        *self.path.last().unwrap()
    }

    pub fn pose_at(&self, t: f64) -> Pose {
        let (s, _, _) = self.profile.state_at(t);
        self.geom.pose_at(s)
    }

    /// `(s, v, a)` along the path at `t`.
    pub fn state_at(&self, t: f64) -> (f64, f64, f64) {
        self.profile.state_at(t)
    }

    /// Speed pieces of the whole path.
    pub fn speed_pieces(&self) -> Vec<SpeedPiece> {
        speed_pieces(&self.geom)
    }

    pub fn occupancy(&self) -> Vec<Occupancy> {
        occupancy_of(&self.geom, &self.profile)
    }

    /// Per-cell enter/exit times; the goal cell exits at the end of its dwell.
    pub fn timing(&self) -> Vec<CellTiming> {
        let n = self.path.len();
        let b = &self.geom.bounds;
        (0..n)
            .map(|k| CellTiming {
                cell: self.path[k],
                enter_t: if k == 0 { self.start_time() } else { self.profile.first_time_at(b[k]) },
                exit_t: if k + 1 == n { self.completion_time() } else { self.profile.last_time_at(b[k + 1]) },
            })
            .collect()
    }

    /// Total hold time per path cell, excluding service dwells.
    pub fn waits(&self) -> Vec<f64> {
        let n = self.path.len();
        let mut w = vec![0.0; n];
        for (t0, t1, s) in self.profile.holds() {
            let k = cell_of_s(&self.geom, s);
            w[k] += t1 - t0;
        }
        for st in &self.stops {
            w[st.path_index] = (w[st.path_index] - st.dwell_s).max(0.0);
        }
        w
    }

    /// Hash of the cell sequence; stable across re-timing.
    pub fn path_hash(&self) -> String {
        path_hash(&self.path)
    }
}

pub fn path_hash(path: &[Cell]) -> String {
    let mut h = Sha256::new();
    for c in path {
        h.update(c.row.to_le_bytes());
        h.update(c.col.to_le_bytes());
    }
    hex::encode(&h.finalize()[..8])
}

pub fn speed_pieces(geom: &PathGeometry) -> Vec<SpeedPiece> {
    geom.segments
        .iter()
        .enumerate()
        .map(|(k, s)| SpeedPiece { s0: geom.bounds[k], s1: geom.bounds[k + 1], v_max: s.v_limit })
        .collect()
}

/// Path cell of a stop point or hold position at `s`.
pub fn cell_of_s(geom: &PathGeometry, s: f64) -> usize {
    let n = geom.cells.len();
    if s >= geom.total_length() - EPS {
        return n - 1;
    }
    (0..n).find(|&k| s >= geom.bounds[k] - EPS && s < geom.bounds[k + 1] - EPS).unwrap_or(n - 1)
}

/// Footprint of a full profile: moving spans between holds, parked spans
/// during holds, and an open-ended park at the goal.
pub fn occupancy_of(geom: &PathGeometry, profile: &Profile) -> Vec<Occupancy> {
    let n = geom.cells.len();
    let b = &geom.bounds;
    let holds: Vec<(f64, f64, f64)> = profile.holds().filter(|h| h.1 - h.0 > EPS).collect();
    let mut out = Vec::new();
    for k in 0..n {
        let cell = geom.cells[k];
        let start = if k == 0 { profile.start_time() } else { profile.first_time_at(b[k]) };
        let last = k + 1 == n;
        let end = if last { profile.end_time() } else { profile.last_time_at(b[k + 1]) };
        let mut cur = start;
        for &(t0, t1, _) in holds.iter().filter(|h| cell_of_s(geom, h.2) == k) {
            if t0 > cur + EPS {
                out.push(Occupancy { cell, kind: OccupancyKind::Moving, start: cur, end: t0 });
            }
            out.push(Occupancy { cell, kind: OccupancyKind::Parked, start: t0, end: t1 });
            cur = t1;
        }
        if last {
            let arrive = if n == 1 { start } else { profile.first_time_at(b[n]).max(cur) };
            if arrive > cur + EPS {
                out.push(Occupancy { cell, kind: OccupancyKind::Moving, start: cur, end: arrive });
            }
            match out.last_mut() {
                Some(o) if o.cell == cell && o.kind == OccupancyKind::Parked && (o.end - arrive.max(cur)).abs() < EPS => {
                    o.end = f64::INFINITY
                }
                _ => out.push(Occupancy { cell, kind: OccupancyKind::Parked, start: arrive.max(cur), end: f64::INFINITY }),
            }
        } else if end > cur + EPS || cur == start {
            out.push(Occupancy { cell, kind: OccupancyKind::Moving, start: cur, end: end.max(cur) });
        }
    }
    out
}

/// Moving footprint of a motion fragment from path cell `ka` to `kb`,
/// occupying the first from `t_a` and the last until `t_b`.
pub fn fragment_footprint(geom: &PathGeometry, frag: &Profile, ka: usize, kb: usize, t_a: f64, t_b: f64) -> Vec<Occupancy> {
    let b = &geom.bounds;
    (ka..=kb)
        .map(|k| {
            let start = if k == ka { t_a } else { frag.first_time_at(b[k]) };
            let end = if k == kb { t_b } else { frag.last_time_at(b[k + 1]) };
            Occupancy { cell: geom.cells[k], kind: OccupancyKind::Moving, start, end: end.max(start) }
        })
        .collect()
}
