//! Seeded random terminals, fleets and job lists.
//!
//! Layout: quay cranes along row 0, a one-way ring road, and one-way
//! lanes every six rows. Docks hang off the lanes on two-way spurs, two
//! cells from the lane, so a parked AGV never crowds passing traffic.
//! AGVs park on stack docks that carry no jobs.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::scenario::{EngineSection, FleetEntry, JobsSection, Scenario, SCENARIO_VERSION};
use crate::comms::ChannelModel;
use crate::navigation::NoiseModel;
use crate::powertrain::{AgvParams, ContainerClass};
use crate::rng::{keyed_rng, Stream};
use crate::terminal_map::{Cell, DirectionOverride, FlowCategory, Job, MapSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RandomScenarioOptions {
    pub max_side: u32,
    pub max_agvs: usize,
    pub max_jobs: usize,
    pub priority_fraction: f64,
    pub mean_interarrival_s: f64,
}

impl Default for RandomScenarioOptions {
    fn default() -> Self {
        Self { max_side: 30, max_agvs: 8, max_jobs: 20, priority_fraction: 0.2, mean_interarrival_s: 20.0 }
    }
}

/// Ring-road layout with `bands` dock bands; width must be odd and at
/// least 7. Returns the map quay and stack dock cells.
pub fn ring_layout(width: u32, bands: u32, quay_cols: &[u32], stack_docks: &[(u32, u32)]) -> (MapSpec, Vec<Cell>, Vec<Cell>) {
    let w = width as usize;
    let h = (2 + 6 * bands + 1) as usize;
    let mut grid = vec![vec!['#'; w]; h];
    let mut dirs: Vec<Vec<String>> = vec![vec![String::new(); w]; h];
    let lanes: Vec<usize> = (0..=bands as usize).map(|i| 2 + 6 * i).collect();
    for (i, &r) in lanes.iter().enumerate() {
        let east = i > 0 && (i % 2 == 1 || r == h - 1);
        let east = if r == h - 1 { true } else { east };
        for c in 0..w {
            grid[r][c] = if east { '>' } else { '<' };
            dirs[r][c] = if east { "E".into() } else { "W".into() };
        }
    }
    for r in 2..h {
        if !lanes.contains(&r) {
            grid[r][0] = 'v';
            grid[r][w - 1] = '^';
        }
        dirs[r][0].push('S');
        dirs[r][w - 1].push('N');
    }
    // Ring corners and lane ends.
    dirs[2][w - 1] = "W".into();
    dirs[2][0] = "S".into();
    dirs[h - 1][0] = "E".into();
    dirs[h - 1][w - 1] = "N".into();
    for (i, &r) in lanes.iter().enumerate().skip(1) {
        if r == h - 1 {
            break;
        }
        if i % 2 == 1 {
            dirs[r][0] = "SE".into();
            dirs[r][w - 1] = "N".into();
        } else {
            dirs[r][0] = "S".into();
            dirs[r][w - 1] = "NW".into();
        }
    }
    let mut quays = Vec::new();
    for &c in quay_cols {
        let c = c as usize;
        grid[0][c] = 'Q';
        grid[1][c] = '|';
        dirs[2][c].push('N');
        quays.push(Cell::new(0, c as u32));
    }
    let mut stacks = Vec::new();
    for &(band, col) in stack_docks {
        // Even dock index: below lane `band`; odd: above lane `band + 1`.
        let lane = lanes[(band / 2) as usize];
        let c = col as usize;
        let (spur, dock, lane_row, dir) = if band % 2 == 0 { (lane + 1, lane + 2, lane, 'S') } else { (lane + 5, lane + 4, lane + 6, 'N') };
        grid[spur][c] = '|';
        grid[dock][c] = 'S';
        dirs[lane_row][c].push(dir);
        stacks.push(Cell::new(dock as u32, col));
    }
    let layout: Vec<String> = grid.iter().map(|r| r.iter().collect()).collect();
    let mut directions = Vec::new();
    for (r, row) in grid.iter().enumerate() {
        for (c, ch) in row.iter().enumerate() {
            if matches!(ch, '<' | '>' | '^' | 'v') {
                let single = match ch {
                    '<' => "W",
                    '>' => "E",
                    '^' => "N",
                    _ => "S",
                };
                if dirs[r][c] != single {
                    directions.push(DirectionOverride { cell: [r as u32, c as u32], dirs: dirs[r][c].clone() });
                }
            }
        }
    }
    (MapSpec { cell_size: 4.0, layout, directions, strongly_connected: true }, quays, stacks)
}

/// Random scenario from `seed`: map, fleet parked on dedicated stack docks,
/// and a mixed job list with some priority jobs.
pub fn random_scenario(seed: u64, opts: &RandomScenarioOptions) -> Scenario {
    let mut rng = keyed_rng(seed, Stream::Scenario, &[]);
    let max_bands = ((opts.max_side.saturating_sub(3)) / 6).max(1);
    let max_w = if opts.max_side % 2 == 1 { opts.max_side } else { opts.max_side - 1 }.max(9);
    loop {
        let bands = rng.gen_range(1..=max_bands);
        let width = 2 * rng.gen_range(4..=max_w / 2) + 1;
        let dock_cols: Vec<u32> = (2..width - 2).step_by(2).collect();
        let n_agvs = rng.gen_range(1..=opts.max_agvs.max(1));
        let quay_cols: Vec<u32> = dock_cols.iter().copied().filter(|_| rng.gen_bool(0.6)).collect();
        let mut stack_slots: Vec<(u32, u32)> = Vec::new();
        for band in 0..2 * bands {
            for &c in &dock_cols {
                if rng.gen_bool(0.6) {
                    stack_slots.push((band, c));
                }
            }
        }
        if quay_cols.len() < 2 || stack_slots.len() < n_agvs + 2 {
            continue;
        }
        let (map, quays, stacks) = ring_layout(width, bands, &quay_cols, &stack_slots);
        let mut idx: Vec<usize> = (0..stacks.len()).collect();
        idx.shuffle(&mut rng);
        let homes: Vec<Cell> = idx[..n_agvs].iter().map(|&i| stacks[i]).collect();
        let job_stacks: Vec<Cell> = idx[n_agvs..].iter().map(|&i| stacks[i]).collect();
        let fleet = homes
            .iter()
            .enumerate()
            .map(|(i, &start)| FleetEntry { id: i as u32 + 1, start, params: AgvParams::default(), battery: Default::default() })
            .collect();
        let n_jobs = rng.gen_range(1..=opts.max_jobs.max(1));
        let mut jobs = Vec::new();
        let mut t = 0.0;
        for id in 0..n_jobs as u64 {
            let flow = [FlowCategory::Export, FlowCategory::Import, FlowCategory::Transit][rng.gen_range(0..3)];
            let pick = |rng: &mut rand_chacha::ChaCha8Rng, from: &[Cell]| from[rng.gen_range(0..from.len())];
            let (pickup, dropoff) = match flow {
                FlowCategory::Export => (pick(&mut rng, &job_stacks), pick(&mut rng, &quays)),
                FlowCategory::Import => (pick(&mut rng, &quays), pick(&mut rng, &job_stacks)),
                FlowCategory::Transit => {
                    let a = pick(&mut rng, &quays);
                    let mut b = pick(&mut rng, &quays);
                    while b == a {
                        b = pick(&mut rng, &quays);
                    }
                    (a, b)
                }
            };
            let container = ContainerClass::ALL[rng.gen_range(0..ContainerClass::ALL.len())];
            jobs.push(Job { id, flow, container, pickup, dropoff, release_time: t, priority: rng.gen_bool(opts.priority_fraction) });
            let u: f64 = rng.gen_range(f64::EPSILON..1.0);
            t = ((t - u.ln() * opts.mean_interarrival_s) * 10.0).round() / 10.0;
        }
        return Scenario {
            version: SCENARIO_VERSION,
            map,
            fleet,
            jobs: JobsSection { list: jobs, generate: None },
            noise: NoiseModel::default(),
            channel: ChannelModel::default(),
            engine: EngineSection { seed, horizon_s: 7200.0, ..EngineSection::default() },
        };
    }
}
