//! Time-optimal free-flight routing over the static map.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::f64::consts::PI;

use super::geometry::{speed_limit_for, SegmentKind};
use super::SupervisorError;
use crate::powertrain::AgvParams;
use crate::terminal_map::{Cell, Direction, TerminalMap};

/// Traversal time of one path cell given how it is entered and left.
/// `None` on either side means the path starts or ends in the cell.
pub fn piece_cost(map: &TerminalMap, cell: Cell, din: Option<Direction>, dout: Option<Direction>, params: &AgvParams) -> f64 {
    let cs = map.cell_size();
    let dock = map.is_dock(cell);
    let kind_of = |k| if dock { SegmentKind::Crab } else { k };
    let (len, kind) = match (din, dout) {
        (None, None) => (0.0, SegmentKind::Straight),
        (None, Some(_)) | (Some(_), None) => (cs / 2.0, SegmentKind::Straight),
        (Some(a), Some(b)) if a != b && a != b.opposite() && !dock => (PI * cs / 4.0, SegmentKind::Curve),
        _ => (cs, SegmentKind::Straight),
    };
    len / speed_limit_for(kind_of(kind), params)
}

/// Free-flight cost of a full path.
pub fn path_cost(map: &TerminalMap, path: &[Cell], params: &AgvParams) -> f64 {
    let n = path.len();
    (0..n)
        .map(|k| {
            let din = (k > 0).then(|| path[k - 1].direction_to(path[k]).expect("adjacent"));
            let dout = (k + 1 < n).then(|| path[k].direction_to(path[k + 1]).expect("adjacent"));
            piece_cost(map, path[k], din, dout, params)
        })
        .sum()
}

fn turns_of(path: &[Cell]) -> usize {
    path.windows(3)
        .filter(|w| w[0].direction_to(w[1]) != w[1].direction_to(w[2]))
        .count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct State {
    cell: Cell,
    din: Option<Direction>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Key {
    cost: i64,
    turns: usize,
    path: Vec<Cell>,
}

impl Ord for Key {
    fn cmp(&self, o: &Self) -> Ordering {
        (self.cost, self.turns, &self.path).cmp(&(o.cost, o.turns, &o.path))
    }
}

impl PartialOrd for Key {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

fn quantize(c: f64) -> i64 {
    (c * 1e9).round() as i64
}

/// Shortest free-flight path from `start` to `goal`. Docks other than the
/// endpoints are never entered. Ties go to fewer turns, then to the
/// lexicographically smallest cell sequence.
pub fn plan_path(map: &TerminalMap, start: Cell, goal: Cell, params: &AgvParams) -> Result<Vec<Cell>, SupervisorError> {
    if !map.contains(start) || !map.contains(goal) {
        return Err(SupervisorError::Unreachable { from: start, to: goal });
    }
    if start == goal {
        return Ok(vec![start]);
    }
    let mut best: HashMap<State, Key> = HashMap::new();
    let mut heap = BinaryHeap::new();
    let mut cost_of: HashMap<State, f64> = HashMap::new();
    let s0 = State { cell: start, din: None };
    let k0 = Key { cost: 0, turns: 0, path: vec![start] };
    best.insert(s0, k0.clone());
    cost_of.insert(s0, 0.0);
    heap.push(std::cmp::Reverse((k0, s0.cell, s0.din.map(|d| d.bit()))));
    while let Some(std::cmp::Reverse((key, cell, din_bit))) = heap.pop() {
        let din = din_bit.map(|b| Direction::ALL.into_iter().find(|d| d.bit() == b).unwrap());
        let st = State { cell, din };
        if best.get(&st) != Some(&key) {
            continue;
        }
        if cell == goal {
            return Ok(key.path);
        }
        if cell != start && map.is_dock(cell) {
            continue;
        }
        let base = cost_of[&st];
        for next in map.neighbors(cell) {
            if map.is_dock(next) && next != goal {
                continue;
            }
            let dout = cell.direction_to(next).unwrap();
            if din == Some(dout.opposite()) && !map.is_dock(cell) {
                continue;
            }
            let mut c = base + piece_cost(map, cell, din, Some(dout), params);
            if next == goal {
                c += piece_cost(map, next, Some(dout), None, params);
            }
            let mut path = key.path.clone();
            path.push(next);
            let nk = Key { cost: quantize(c), turns: turns_of(&path), path };
            let ns = State { cell: next, din: Some(dout) };
            if best.get(&ns).map_or(true, |old| nk < *old) {
                best.insert(ns, nk.clone());
                cost_of.insert(ns, c);
                heap.push(std::cmp::Reverse((nk, next, Some(dout.bit()))));
            }
        }
    }
    Err(SupervisorError::Unreachable { from: start, to: goal })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terminal_map::{build_map, MapSpec};

    #[test]
    fn same_cell() {
        let m = build_map(&MapSpec::from_layout(&["++", "++"])).unwrap();
        let p = plan_path(&m, Cell::new(0, 0), Cell::new(0, 0), &AgvParams::default()).unwrap();
        assert_eq!(p, vec![Cell::new(0, 0)]);
    }

    #[test]
    fn obstacle_goal_unreachable() {
        let m = build_map(&MapSpec::from_layout(&["+++", "+#+", "+++"])).unwrap();
        let r = plan_path(&m, Cell::new(0, 0), Cell::new(1, 1), &AgvParams::default());
        assert!(matches!(r, Err(SupervisorError::Unreachable { .. })));
    }

    #[test]
    fn prefers_fewer_turns() {
        let m = build_map(&MapSpec::from_layout(&["+++", "+++", "+++"])).unwrap();
        let p = plan_path(&m, Cell::new(0, 0), Cell::new(2, 2), &AgvParams::default()).unwrap();
        assert_eq!(turns_of(&p), 1);
    }
}
