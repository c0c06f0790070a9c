//! Cell-time reservations.
//!
//! An entry says that one AGV may be somewhere in a cell during `[start, end]`.
//! Moving entries cover any pose on the cell's centre cross or its four
//! corner arcs; parked entries pin the vehicle at the centre. Two entries
//! conflict when their cells lie within the neighbourhood for their kinds and
//! their intervals come closer than the headway.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::terminal_map::Cell;

/// Slack for windows that meet exactly at the headway boundary.
const TOUCH: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OccupancyKind {
    Moving,
    Parked,
}

impl OccupancyKind {
    fn idx(self) -> usize {
        self as usize
    }
}

/// A time window in one cell, used both for table entries and for the
/// footprint of a candidate plan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Occupancy {
    pub cell: Cell,
    pub kind: OccupancyKind,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reservation {
    pub agv: u32,
    pub kind: OccupancyKind,
    pub start: f64,
    pub end: f64,
    pub priority: bool,
}

/// Local sample points of everywhere a vehicle may be for `kind`.
fn footprint(kind: OccupancyKind, cs: f64, samples: usize) -> Vec<(f64, f64)> {
    let h = cs / 2.0;
    match kind {
        OccupancyKind::Parked => vec![(0.0, 0.0)],
        OccupancyKind::Moving => {
            let mut pts = Vec::new();
            for i in 0..=samples {
                let u = -h + cs * i as f64 / samples as f64;
                pts.push((u, 0.0));
                pts.push((0.0, u));
            }
            for (cx, cy) in [(h, h), (-h, h), (-h, -h), (h, -h)] {
                let base = (-cy).atan2(-cx) - FRAC_PI_2 / 2.0;
                for i in 0..=samples {
                    let a = base + FRAC_PI_2 * i as f64 / samples as f64;
                    pts.push((cx + h * a.cos(), cy + h * a.sin()));
                }
            }
            pts
        }
    }
}

/// Cell offsets `(drow, dcol)` at which kinds `a` and `b` can come closer
/// than `min_sep`. Computed by sampling with a margin of one sample spacing.
pub fn conflict_offsets(a: OccupancyKind, b: OccupancyKind, cs: f64, min_sep: f64) -> Vec<(i32, i32)> {
    let samples = 64;
    let spacing = cs / samples as f64 * FRAC_PI_2;
    let pa = footprint(a, cs, samples);
    let pb = footprint(b, cs, samples);
    let reach = (min_sep / cs).ceil() as i32 + 1;
    let mut out = Vec::new();
    for dr in -reach..=reach {
        for dc in -reach..=reach {
            // Row grows southwards, y northwards.
            let (ox, oy) = (f64::from(dc) * cs, -f64::from(dr) * cs);
            let mut best = f64::INFINITY;
            for &(x1, y1) in &pa {
                for &(x2, y2) in &pb {
                    let d = ((x2 + ox - x1).powi(2) + (y2 + oy - y1).powi(2)).sqrt();
                    best = best.min(d);
                }
            }
            if best < min_sep + spacing {
                out.push((dr, dc));
            }
        }
    }
    out
}

/// Open interval helpers. Intervals are `(lo, hi)` with `lo < hi`.
pub fn merge_intervals(mut v: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    v.retain(|(a, b)| a < b);
    v.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(v.len());
    for (a, b) in v {
        match out.last_mut() {
            Some(last) if a < last.1 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}

/// Closed pieces of `[lo, hi]` outside the merged open intervals `forbidden`.
pub fn complement_within(forbidden: &[(f64, f64)], lo: f64, hi: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut cur = lo;
    for &(a, b) in forbidden {
        if b <= cur {
            continue;
        }
        if a >= hi {
            break;
        }
        if a >= cur {
            out.push((cur, a));
        }
        cur = cur.max(b);
        if cur > hi {
            break;
        }
    }
    if cur <= hi && cur < f64::INFINITY {
        out.push((cur, hi));
    }
    out
}

#[derive(Debug, Clone)]
pub struct ReservationTable {
    pub cell_size: f64,
    pub headway: f64,
    pub min_separation: f64,
    neighborhoods: [[Vec<(i32, i32)>; 2]; 2],
    cells: BTreeMap<Cell, Vec<Reservation>>,
    rows: u32,
    cols: u32,
}

impl ReservationTable {
    pub fn new(rows: u32, cols: u32, cell_size: f64, safety_radius: f64, headway: f64) -> Self {
        use OccupancyKind::*;
        let sep = 2.0 * safety_radius;
        let nb = |a, b| conflict_offsets(a, b, cell_size, sep);
        Self {
            cell_size,
            headway,
            min_separation: sep,
            neighborhoods: [[nb(Moving, Moving), nb(Moving, Parked)], [nb(Parked, Moving), nb(Parked, Parked)]],
            cells: BTreeMap::new(),
            rows,
            cols,
        }
    }

    pub fn neighborhood(&self, a: OccupancyKind, b: OccupancyKind) -> &[(i32, i32)] {
        &self.neighborhoods[a.idx()][b.idx()]
    }

    pub fn insert(&mut self, agv: u32, occ: &[Occupancy], priority: bool) {
        for o in occ {
            self.cells.entry(o.cell).or_default().push(Reservation {
                agv,
                kind: o.kind,
                start: o.start,
                end: o.end,
                priority,
            });
        }
    }

    pub fn remove_agv(&mut self, agv: u32) {
        for v in self.cells.values_mut() {
            v.retain(|r| r.agv != agv);
        }
        self.cells.retain(|_, v| !v.is_empty());
    }

    /// Drops the AGV's entries that ended before `t`.
    pub fn release_before(&mut self, agv: u32, t: f64) {
        for v in self.cells.values_mut() {
            v.retain(|r| r.agv != agv || r.end >= t);
        }
        self.cells.retain(|_, v| !v.is_empty());
    }

    /// Copy with each entry mapped, dropped when `f` returns `None`.
    pub fn filtered(&self, f: impl Fn(Cell, &Reservation) -> Option<Reservation>) -> Self {
        let mut out = self.clone();
        out.cells = self
            .cells
            .iter()
            .map(|(c, v)| (*c, v.iter().filter_map(|r| f(*c, r)).collect::<Vec<_>>()))
            .filter(|(_, v)| !v.is_empty())
            .collect();
        out
    }

    pub fn entries(&self) -> impl Iterator<Item = (Cell, &Reservation)> {
        self.cells.iter().flat_map(|(c, v)| v.iter().map(move |r| (*c, r)))
    }

    pub fn entries_of(&self, agv: u32) -> Vec<Occupancy> {
        self.entries()
            .filter(|(_, r)| r.agv == agv)
            .map(|(cell, r)| Occupancy { cell, kind: r.kind, start: r.start, end: r.end })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.cells.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    fn near(&self, cell: Cell, kind: OccupancyKind, other: OccupancyKind) -> impl Iterator<Item = (Cell, &Reservation)> {
        let (rows, cols) = (self.rows as i64, self.cols as i64);
        self.neighborhood(kind, other).iter().filter_map(move |&(dr, dc)| {
            let r = i64::from(cell.row) + i64::from(dr);
            let c = i64::from(cell.col) + i64::from(dc);
            if r < 0 || c < 0 || r >= rows || c >= cols {
                return None;
            }
            let nc = Cell::new(r as u32, c as u32);
            self.cells.get(&nc).map(|v| v.iter().filter(move |x| x.kind == other).map(move |x| (nc, x)))
        })
        .flatten()
    }

    /// Entries of other AGVs that conflict with `occ`, with `filter` applied.
    /// Windows that only touch at the headway boundary do not conflict.
    pub fn conflicting<'a>(
        &'a self,
        agv: u32,
        occ: &'a Occupancy,
        filter: impl Fn(&Reservation) -> bool + 'a,
    ) -> impl Iterator<Item = (Cell, &'a Reservation)> + 'a {
        let tau = self.headway;
        [OccupancyKind::Moving, OccupancyKind::Parked]
            .into_iter()
            .flat_map(move |k| self.near(occ.cell, occ.kind, k))
            .filter(move |(_, r)| r.agv != agv && filter(r) && r.start < occ.end + tau - TOUCH && occ.start < r.end + tau - TOUCH)
    }

    pub fn conflicts(&self, agv: u32, occ: &[Occupancy]) -> bool {
        occ.iter().any(|o| self.conflicting(agv, o, |_| true).next().is_some())
    }

    /// AGVs whose entries conflict with `occ`, sorted.
    pub fn conflicting_agvs(&self, agv: u32, occ: &[Occupancy], filter: impl Fn(&Reservation) -> bool + Copy) -> Vec<u32> {
        let mut ids: Vec<u32> = occ.iter().flat_map(|o| self.conflicting(agv, o, filter).map(|(_, r)| r.agv)).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Departure shifts `δ` that would make `occ` (relative times) conflict,
    /// as merged open intervals.
    pub fn forbidden_shifts(&self, agv: u32, occ: &[Occupancy]) -> Vec<(f64, f64)> {
        let tau = self.headway;
        let mut v = Vec::new();
        for o in occ {
            for k in [OccupancyKind::Moving, OccupancyKind::Parked] {
                for (_, r) in self.near(o.cell, o.kind, k) {
                    if r.agv == agv {
                        continue;
                    }
                    v.push((r.start - tau - o.end, r.end + tau - o.start));
                }
            }
        }
        merge_intervals(v)
    }

    /// Closed windows from `from` onwards during which the AGV may rest at
    /// the centre of `cell`.
    pub fn hold_windows(&self, agv: u32, cell: Cell, from: f64) -> Vec<(f64, f64)> {
        let tau = self.headway;
        let mut v = Vec::new();
        for k in [OccupancyKind::Moving, OccupancyKind::Parked] {
            for (_, r) in self.near(cell, OccupancyKind::Parked, k) {
                if r.agv != agv {
                    v.push((r.start - tau, r.end + tau));
                }
            }
        }
        complement_within(&merge_intervals(v), from, f64::INFINITY)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moving_neighbourhood_default_geometry() {
        let nb = conflict_offsets(OccupancyKind::Moving, OccupancyKind::Moving, 4.0, 5.0);
        assert_eq!(nb.len(), 13);
        assert!(nb.contains(&(0, 2)) && nb.contains(&(-2, 0)) && nb.contains(&(1, 1)));
        assert!(!nb.contains(&(2, 1)));
    }

    #[test]
    fn parked_neighbourhood_is_symmetric_and_small() {
        let pp = conflict_offsets(OccupancyKind::Parked, OccupancyKind::Parked, 4.0, 5.0);
        assert!(pp.contains(&(0, 0)) && pp.contains(&(0, 1)));
        assert!(!pp.contains(&(0, 2)));
        let mp = conflict_offsets(OccupancyKind::Moving, OccupancyKind::Parked, 4.0, 5.0);
        let pm = conflict_offsets(OccupancyKind::Parked, OccupancyKind::Moving, 4.0, 5.0);
        for &(r, c) in &mp {
            assert!(pm.contains(&(-r, -c)));
        }
    }

    #[test]
    fn large_cells_only_self_conflict() {
        let pp = conflict_offsets(OccupancyKind::Parked, OccupancyKind::Parked, 20.0, 5.0);
        assert_eq!(pp, vec![(0, 0)]);
    }

    #[test]
    fn complement_basic() {
        let f = merge_intervals(vec![(1.0, 2.0), (1.5, 3.0), (5.0, 6.0)]);
        assert_eq!(f, vec![(1.0, 3.0), (5.0, 6.0)]);
        assert_eq!(complement_within(&f, 0.0, 10.0), vec![(0.0, 1.0), (3.0, 5.0), (6.0, 10.0)]);
        assert_eq!(complement_within(&f, 1.5, 4.0), vec![(3.0, 4.0)]);
    }

    #[test]
    fn headway_separates() {
        let mut t = ReservationTable::new(5, 5, 4.0, 2.5, 1.0);
        let c = Cell::new(2, 2);
        t.insert(1, &[Occupancy { cell: c, kind: OccupancyKind::Moving, start: 0.0, end: 2.0 }], false);
        let probe = |s: f64, e: f64| vec![Occupancy { cell: c, kind: OccupancyKind::Moving, start: s, end: e }];
        assert!(t.conflicts(2, &probe(2.5, 3.0)));
        assert!(!t.conflicts(2, &probe(3.0, 4.0)));
        assert!(!t.conflicts(1, &probe(0.0, 1.0)));
        let f = t.forbidden_shifts(2, &probe(0.0, 1.0));
        assert_eq!(f, vec![(-2.0, 3.0)]);
    }
}
