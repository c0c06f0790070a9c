//! Terminal workspace: a metric grid of quay cranes, stack lanes, one-way
//! roads and obstacles, plus job generation by container flow category.
//!
//! Layout text is read north to south, one character per cell:
//!
//! | char | meaning |
//! |------|---------|
//! | `#`  | obstacle |
//! | `Q`  | quay crane dock |
//! | `S`  | stack lane dock |
//! | `>` `<` `^` `v` | one-way road (E, W, N, S) |
//! | `-` `\|` | two-way road (E+W, N+S) |
//! | `+`  | road open in all four directions |
//!
//! Junctions that need another direction set use `directions` overrides.

use std::collections::VecDeque;
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::powertrain::ContainerClass;
use crate::rng::{keyed_rng, Stream};

pub const DEFAULT_CELL_SIZE_M: f64 = 4.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapError {
    #[error("invalid map: {0}")]
    InvalidMap(String),
    #[error("map has no {0} cells for the requested job mix")]
    NoEndpoints(&'static str),
    #[error("flow mix must be three non-negative fractions summing to 1, got {0:?}")]
    InvalidMix([f64; 3]),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    N,
    E,
    S,
    W,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::N, Direction::E, Direction::S, Direction::W];

    pub fn bit(self) -> u8 {
        1 << (self as u8)
    }

    pub fn opposite(self) -> Direction {
        match self {
            Direction::N => Direction::S,
            Direction::E => Direction::W,
            Direction::S => Direction::N,
            Direction::W => Direction::E,
        }
    }

    /// Unit vector in the metric frame (x east, y north).
    pub fn unit(self) -> (f64, f64) {
        match self {
            Direction::N => (0.0, 1.0),
            Direction::E => (1.0, 0.0),
            Direction::S => (0.0, -1.0),
            Direction::W => (-1.0, 0.0),
        }
    }

    pub fn from_char(c: char) -> Option<Direction> {
        match c.to_ascii_uppercase() {
            'N' => Some(Direction::N),
            'E' => Some(Direction::E),
            'S' => Some(Direction::S),
            'W' => Some(Direction::W),
            _ => None,
        }
    }
}

/// Grid cell. Ordering is row-major, which equals ordering by linear index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub row: u32,
    pub col: u32,
}

impl Cell {
    pub const fn new(row: u32, col: u32) -> Self {
        Self { row, col }
    }

    /// Neighbour one step in `dir`, unchecked against grid bounds except at 0.
    pub fn step(self, dir: Direction) -> Option<Cell> {
        match dir {
            Direction::N => self.row.checked_sub(1).map(|r| Cell::new(r, self.col)),
            Direction::S => Some(Cell::new(self.row + 1, self.col)),
            Direction::E => Some(Cell::new(self.row, self.col + 1)),
            Direction::W => self.col.checked_sub(1).map(|c| Cell::new(self.row, c)),
        }
    }

    /// Direction of a 4-adjacent cell.
    pub fn direction_to(self, other: Cell) -> Option<Direction> {
        Direction::ALL.into_iter().find(|&d| self.step(d) == Some(other))
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.row, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellKind {
    Road,
    QuayCrane,
    StackLane,
    Obstacle,
}

impl CellKind {
    pub fn is_dock(self) -> bool {
        matches!(self, CellKind::QuayCrane | CellKind::StackLane)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionOverride {
    /// `[row, col]`
    pub cell: [u32; 2],
    /// Any combination of `N`, `E`, `S`, `W`.
    pub dirs: String,
}

fn default_cell_size() -> f64 {
    DEFAULT_CELL_SIZE_M
}

fn default_true() -> bool {
    true
}

/// Serializable map description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSpec {
    #[serde(default = "default_cell_size")]
    pub cell_size: f64,
    pub layout: Vec<String>,
    #[serde(default)]
    pub directions: Vec<DirectionOverride>,
    /// When false, docks only need to be connected to some other dock in
    /// either direction (straight one-way corridors).
    #[serde(default = "default_true")]
    pub strongly_connected: bool,
}

impl MapSpec {
    pub fn from_layout<S: AsRef<str>>(rows: &[S]) -> Self {
        Self {
            cell_size: DEFAULT_CELL_SIZE_M,
            layout: rows.iter().map(|r| r.as_ref().to_string()).collect(),
            directions: Vec::new(),
            strongly_connected: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TerminalMap {
    width: u32,
    height: u32,
    cell_size: f64,
    kinds: Vec<CellKind>,
    dirs: Vec<u8>,
}

fn parse_cell_char(c: char) -> Option<(CellKind, u8)> {
    use Direction::*;
    let road = |ds: &[Direction]| Some((CellKind::Road, ds.iter().fold(0u8, |m, d| m | d.bit())));
    match c {
        '#' => Some((CellKind::Obstacle, 0)),
        'Q' => Some((CellKind::QuayCrane, 0)),
        'S' => Some((CellKind::StackLane, 0)),
        '>' => road(&[E]),
        '<' => road(&[W]),
        '^' => road(&[N]),
        'v' => road(&[S]),
        '-' => road(&[E, W]),
        '|' => road(&[N, S]),
        '+' => road(&[N, E, S, W]),
        _ => None,
    }
}

/// Builds and validates a map.
pub fn build_map(spec: &MapSpec) -> Result<TerminalMap, MapError> {
    let invalid = |m: String| Err(MapError::InvalidMap(m));
    if !(spec.cell_size.is_finite() && spec.cell_size > 0.0) {
        return invalid(format!("cell_size must be > 0, got {}", spec.cell_size));
    }
    let height = spec.layout.len();
    if height == 0 {
        return invalid("empty layout".into());
    }
    let width = spec.layout[0].chars().count();
    if width == 0 || width * height < 2 {
        return invalid("layout needs at least two cells".into());
    }
    let mut kinds = Vec::with_capacity(width * height);
    let mut dirs = Vec::with_capacity(width * height);
    for (r, line) in spec.layout.iter().enumerate() {
        if line.chars().count() != width {
            return invalid(format!("row {r} has {} cells, expected {width}", line.chars().count()));
        }
        for (c, ch) in line.chars().enumerate() {
            let Some((k, d)) = parse_cell_char(ch) else {
                return invalid(format!("unknown cell character {ch:?} at ({r},{c})"));
            };
            kinds.push(k);
            dirs.push(d);
        }
    }
    let mut map = TerminalMap { width: width as u32, height: height as u32, cell_size: spec.cell_size, kinds, dirs };
    for o in &spec.directions {
        let cell = Cell::new(o.cell[0], o.cell[1]);
        if !map.contains(cell) {
            return invalid(format!("direction override outside grid at {cell}"));
        }
        let mut mask = 0u8;
        for ch in o.dirs.chars() {
            let Some(d) = Direction::from_char(ch) else {
                return invalid(format!("bad direction {ch:?} in override at {cell}"));
            };
            mask |= d.bit();
        }
        if map.kind(cell) != CellKind::Road {
            return invalid(format!("direction override on non-road cell {cell}"));
        }
        let i = map.index(cell);
        map.dirs[i] = mask;
    }
    map.validate(spec.strongly_connected)?;
    Ok(map)
}

impl TerminalMap {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn contains(&self, cell: Cell) -> bool {
        cell.row < self.height && cell.col < self.width
    }

    pub fn index(&self, cell: Cell) -> usize {
        (cell.row * self.width + cell.col) as usize
    }

    pub fn cell_of_index(&self, i: usize) -> Cell {
        Cell::new(i as u32 / self.width, i as u32 % self.width)
    }

    pub fn kind(&self, cell: Cell) -> CellKind {
        self.kinds[self.index(cell)]
    }

    pub fn is_dock(&self, cell: Cell) -> bool {
        self.contains(cell) && self.kind(cell).is_dock()
    }

    pub fn allowed_directions(&self, cell: Cell) -> Vec<Direction> {
        let m = self.dirs[self.index(cell)];
        Direction::ALL.into_iter().filter(|d| m & d.bit() != 0).collect()
    }

    pub fn allows(&self, cell: Cell, dir: Direction) -> bool {
        self.dirs[self.index(cell)] & dir.bit() != 0
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.kinds.len()).map(|i| self.cell_of_index(i))
    }

    pub fn cells_of(&self, kind: CellKind) -> Vec<Cell> {
        self.cells().filter(|&c| self.kind(c) == kind).collect()
    }

    pub fn docks(&self) -> Vec<Cell> {
        self.cells().filter(|&c| self.kind(c).is_dock()).collect()
    }

    fn in_grid_step(&self, cell: Cell, dir: Direction) -> Option<Cell> {
        cell.step(dir).filter(|&n| self.contains(n))
    }

    /// Cells reachable in one move. Roads follow their allowed directions;
    /// docks may leave towards any adjacent road.
    pub fn neighbors(&self, cell: Cell) -> Vec<Cell> {
        match self.kind(cell) {
            CellKind::Obstacle => Vec::new(),
            CellKind::Road => self
                .allowed_directions(cell)
                .into_iter()
                .filter_map(|d| self.in_grid_step(cell, d))
                .filter(|&n| self.kind(n) != CellKind::Obstacle)
                .collect(),
            CellKind::QuayCrane | CellKind::StackLane => Direction::ALL
                .into_iter()
                .filter_map(|d| self.in_grid_step(cell, d))
                .filter(|&n| self.kind(n) == CellKind::Road)
                .collect(),
        }
    }

    /// Metric centre of a cell; x grows east, y grows north, origin at the
    /// south-west cell centre.
    pub fn center(&self, cell: Cell) -> (f64, f64) {
        (
            f64::from(cell.col) * self.cell_size,
            f64::from(self.height - 1 - cell.row) * self.cell_size,
        )
    }

    /// Cell containing a metric point, if inside the grid.
    pub fn cell_at(&self, x: f64, y: f64) -> Option<Cell> {
        let col = (x / self.cell_size + 0.5).floor();
        let up = (y / self.cell_size + 0.5).floor();
        if col < 0.0 || up < 0.0 || col >= f64::from(self.width) || up >= f64::from(self.height) {
            return None;
        }
        Some(Cell::new(self.height - 1 - up as u32, col as u32))
    }

    /// Docks reachable from `from` travelling through road cells only.
    fn docks_reachable_from(&self, from: Cell) -> Vec<bool> {
        let mut seen = vec![false; self.kinds.len()];
        let mut reached = vec![false; self.kinds.len()];
        let mut queue = VecDeque::from([from]);
        seen[self.index(from)] = true;
        while let Some(c) = queue.pop_front() {
            for n in self.neighbors(c) {
                let i = self.index(n);
                if seen[i] {
                    continue;
                }
                seen[i] = true;
                if self.kind(n).is_dock() {
                    reached[i] = true;
                } else {
                    queue.push_back(n);
                }
            }
        }
        reached
    }

    fn validate(&self, strongly_connected: bool) -> Result<(), MapError> {
        for cell in self.cells() {
            let i = self.index(cell);
            match self.kinds[i] {
                CellKind::Obstacle if self.dirs[i] != 0 => {
                    return Err(MapError::InvalidMap(format!("obstacle {cell} has allowed directions")));
                }
                CellKind::Road if self.dirs[i] == 0 => {
                    return Err(MapError::InvalidMap(format!("road {cell} has no allowed direction")));
                }
                k if k.is_dock() => {
                    let has_road = Direction::ALL
                        .into_iter()
                        .filter_map(|d| self.in_grid_step(cell, d))
                        .any(|n| self.kind(n) == CellKind::Road);
                    if !has_road {
                        return Err(MapError::InvalidMap(format!("dock {cell} is not adjacent to a road")));
                    }
                }
                _ => {}
            }
        }
        let docks = self.docks();
        if docks.len() < 2 {
            return Ok(());
        }
        let reach: Vec<Vec<bool>> = docks.iter().map(|&d| self.docks_reachable_from(d)).collect();
        for (a, &da) in docks.iter().enumerate() {
            if strongly_connected {
                for &db in &docks {
                    if da != db && !reach[a][self.index(db)] {
                        return Err(MapError::InvalidMap(format!("dock {db} is unreachable from dock {da}")));
                    }
                }
            } else {
                let out = docks.iter().any(|&db| db != da && reach[a][self.index(db)]);
                let inc = docks.iter().enumerate().any(|(b, &db)| db != da && reach[b][self.index(da)]);
                if !out && !inc {
                    return Err(MapError::InvalidMap(format!("dock {da} is connected to no other dock")));
                }
            }
        }
        Ok(())
    }

    /// Renders the map back to layout text plus direction overrides.
    pub fn to_spec(&self) -> MapSpec {
        let mut layout = Vec::new();
        let mut directions = Vec::new();
        for r in 0..self.height {
            let mut line = String::new();
            for c in 0..self.width {
                let cell = Cell::new(r, c);
                let ch = match self.kind(cell) {
                    CellKind::Obstacle => '#',
                    CellKind::QuayCrane => 'Q',
                    CellKind::StackLane => 'S',
                    CellKind::Road => {
                        let m = self.dirs[self.index(cell)];
                        let found = "><^v-|+".chars().find(|&ch| parse_cell_char(ch).map(|p| p.1) == Some(m));
                        found.unwrap_or_else(|| {
                            let dirs: String = self.allowed_directions(cell).iter().map(|d| format!("{d:?}")).collect();
                            directions.push(DirectionOverride { cell: [r, c], dirs });
                            '+'
                        })
                    }
                };
                line.push(ch);
            }
            layout.push(line);
        }
        MapSpec { cell_size: self.cell_size, layout, directions, strongly_connected: false }
    }
}

/// Container flow categories at a transhipment terminal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FlowCategory {
    /// Stack lane to quay crane.
    Export,
    /// Quay crane to stack lane.
    Import,
    /// Quay crane to quay crane.
    Transit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub id: u64,
    pub flow: FlowCategory,
    pub container: ContainerClass,
    pub pickup: Cell,
    pub dropoff: Cell,
    pub release_time: f64,
    #[serde(default)]
    pub priority: bool,
}

impl Job {
    /// Checks the endpoint rule for the job's flow category.
    pub fn endpoints_valid(&self, map: &TerminalMap) -> bool {
        if self.pickup == self.dropoff || !map.contains(self.pickup) || !map.contains(self.dropoff) {
            return false;
        }
        let (p, d) = (map.kind(self.pickup), map.kind(self.dropoff));
        match self.flow {
            FlowCategory::Export => p == CellKind::StackLane && d == CellKind::QuayCrane,
            FlowCategory::Import => p == CellKind::QuayCrane && d == CellKind::StackLane,
            FlowCategory::Transit => p == CellKind::QuayCrane && d == CellKind::QuayCrane,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JobGenOptions {
    /// Mean of the exponential gap between consecutive releases.
    pub mean_interarrival_s: f64,
    pub priority_fraction: f64,
}

impl Default for JobGenOptions {
    fn default() -> Self {
        Self { mean_interarrival_s: 30.0, priority_fraction: 0.0 }
    }
}

/// Largest-remainder apportionment of `count` over `fractions`.
pub fn apportion(fractions: [f64; 3], count: usize) -> [usize; 3] {
    let raw: Vec<f64> = fractions.iter().map(|f| f * count as f64).collect();
    let mut out = [0usize; 3];
    for i in 0..3 {
        out[i] = raw[i].floor() as usize;
    }
    let mut left = count - out.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let ra = raw[a] - raw[a].floor();
        let rb = raw[b] - raw[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        out[i] += 1;
        left -= 1;
    }
    out
}

/// `flow_mix` is (export, import, transit).
pub fn generate_jobs(map: &TerminalMap, flow_mix: [f64; 3], count: usize, seed: u64) -> Result<Vec<Job>, MapError> {
    generate_jobs_with(map, flow_mix, count, seed, &JobGenOptions::default())
}

pub fn generate_jobs_with(
    map: &TerminalMap,
    flow_mix: [f64; 3],
    count: usize,
    seed: u64,
    opts: &JobGenOptions,
) -> Result<Vec<Job>, MapError> {
    let sum: f64 = flow_mix.iter().sum();
    if flow_mix.iter().any(|f| !(f.is_finite() && *f >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(MapError::InvalidMix(flow_mix));
    }
    if count == 0 {
        return Ok(Vec::new());
    }
    let counts = apportion(flow_mix, count);
    let quays = map.cells_of(CellKind::QuayCrane);
    let stacks = map.cells_of(CellKind::StackLane);
    if counts[0] + counts[1] > 0 && quays.is_empty() {
        return Err(MapError::NoEndpoints("quay crane"));
    }
    if counts[0] + counts[1] > 0 && stacks.is_empty() {
        return Err(MapError::NoEndpoints("stack lane"));
    }
    if counts[2] > 0 && quays.len() < 2 {
        return Err(MapError::NoEndpoints("second quay crane"));
    }

    let mut rng = keyed_rng(seed, Stream::Jobs, &[count as u64]);
    let mut flows: Vec<FlowCategory> = Vec::with_capacity(count);
    flows.extend(std::iter::repeat(FlowCategory::Export).take(counts[0]));
    flows.extend(std::iter::repeat(FlowCategory::Import).take(counts[1]));
    flows.extend(std::iter::repeat(FlowCategory::Transit).take(counts[2]));
    flows.shuffle(&mut rng);

    let gap = Exp::new(1.0 / opts.mean_interarrival_s.max(1e-9)).expect("positive rate");
    let mut release = 0.0f64;
    let mut jobs = Vec::with_capacity(count);
    for (i, flow) in flows.into_iter().enumerate() {
        if i > 0 {
            release += gap.sample(&mut rng);
        }
        let (pickup, dropoff) = match flow {
            FlowCategory::Export => (*stacks.choose(&mut rng).unwrap(), *quays.choose(&mut rng).unwrap()),
            FlowCategory::Import => (*quays.choose(&mut rng).unwrap(), *stacks.choose(&mut rng).unwrap()),
            FlowCategory::Transit => {
                let pair: Vec<&Cell> = quays.choose_multiple(&mut rng, 2).collect();
                (*pair[0], *pair[1])
            }
        };
        let container = ContainerClass::ALL[rng.gen_range(0..4)];
        let priority = rng.gen_bool(opts.priority_fraction.clamp(0.0, 1.0));
        jobs.push(Job {
            id: i as u64,
            flow,
            container,
            pickup,
            dropoff,
            release_time: (release * 10.0).round() / 10.0,
            priority,
        });
    }
    Ok(jobs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corridor() -> TerminalMap {
        let mut spec = MapSpec::from_layout(&["Q>>>>Q"]);
        spec.strongly_connected = false;
        build_map(&spec).unwrap()
    }

    #[test]
    fn corridor_is_valid() {
        let m = corridor();
        assert_eq!(m.width(), 6);
        assert_eq!(m.neighbors(Cell::new(0, 2)), vec![Cell::new(0, 3)]);
    }

    #[test]
    fn obstacle_has_no_neighbors() {
        let m = build_map(&MapSpec::from_layout(&["Q+#", "++S"])).unwrap();
        assert!(m.neighbors(Cell::new(0, 2)).is_empty());
    }

    #[test]
    fn isolated_stack_is_rejected() {
        let spec = MapSpec::from_layout(&["Q+##", "++#S"]);
        assert!(matches!(build_map(&spec), Err(MapError::InvalidMap(_))));
    }

    #[test]
    fn unreachable_stack_is_rejected() {
        // The stack touches two roads, but neither is ever entered towards it.
        let spec = MapSpec::from_layout(&["Q>>>", "##S^"]);
        assert!(matches!(build_map(&spec), Err(MapError::InvalidMap(_))));
    }

    #[test]
    fn obstacle_with_directions_is_rejected() {
        let mut spec = MapSpec::from_layout(&["Q++", "+#S"]);
        spec.directions.push(DirectionOverride { cell: [1, 1], dirs: "N".into() });
        assert!(build_map(&spec).is_err());
    }

    #[test]
    fn center_and_cell_at_agree() {
        let m = build_map(&MapSpec::from_layout(&["Q++", "++S"])).unwrap();
        for c in m.cells() {
            let (x, y) = m.center(c);
            assert_eq!(m.cell_at(x + 1.0, y - 1.0), Some(c));
        }
        assert_eq!(m.center(Cell::new(1, 0)), (0.0, 0.0));
        assert_eq!(m.center(Cell::new(0, 2)), (8.0, 4.0));
    }

    #[test]
    fn spec_round_trip() {
        let mut spec = MapSpec::from_layout(&["Q+#", "+>S"]);
        spec.directions.push(DirectionOverride { cell: [1, 1], dirs: "NE".into() });
        let m = build_map(&spec).unwrap();
        assert_eq!(build_map(&m.to_spec()).unwrap(), m);
    }

    #[test]
    fn apportion_matches_rounding() {
        assert_eq!(apportion([0.4, 0.4, 0.2], 10), [4, 4, 2]);
        assert_eq!(apportion([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 10).iter().sum::<usize>(), 10);
        assert_eq!(apportion([0.5, 0.5, 0.0], 3), [2, 1, 0]);
    }

    #[test]
    fn no_jobs_and_bad_mix() {
        let m = corridor();
        assert!(generate_jobs(&m, [0.0, 0.0, 1.0], 0, 1).unwrap().is_empty());
        assert!(matches!(generate_jobs(&m, [0.5, 0.6, 0.0], 1, 1), Err(MapError::InvalidMix(_))));
        assert!(matches!(generate_jobs(&m, [1.0, 0.0, 0.0], 1, 1), Err(MapError::NoEndpoints(_))));
    }
}
