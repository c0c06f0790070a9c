use std::f64::consts::PI;

use approx::assert_abs_diff_eq;
use quayfleet::powertrain::AgvParams;
use quayfleet::supervisor::geometry::classify_path;
use quayfleet::supervisor::profile::{duration_of, fastest_motion, SpeedPiece};
use quayfleet::supervisor::trajectory::service_indices;
use quayfleet::supervisor::{path_cost, plan_path, Anchor, Occupancy, Profile, ReservationTable, Scheduler, SupervisorError, Trajectory};
use quayfleet::terminal_map::{build_map, Cell, CellKind, MapSpec, TerminalMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Independent cell cost: half cells at the ends, straight or quarter-arc
/// pieces in between, all road cells.
fn oracle_cost(path: &[Cell], cs: f64, p: &AgvParams) -> f64 {
    let n = path.len();
    if n < 2 {
        return 0.0;
    }
    let mut c = 2.0 * (cs / 2.0) / p.v_max_straight;
    for w in path.windows(3) {
        let straight = (w[0].row == w[1].row && w[1].row == w[2].row) || (w[0].col == w[1].col && w[1].col == w[2].col);
        c += if straight { cs / p.v_max_straight } else { PI * cs / 4.0 / p.v_max_curve };
    }
    c
}

fn brute_force(map: &TerminalMap, at: Cell, goal: Cell, seen: &mut Vec<Cell>, p: &AgvParams, best: &mut Option<f64>) {
    if at == goal {
        let c = oracle_cost(seen, map.cell_size(), p);
        if best.map_or(true, |b| c < b) {
            *best = Some(c);
        }
        return;
    }
    for n in map.neighbors(at) {
        if !seen.contains(&n) {
            seen.push(n);
            brute_force(map, n, goal, seen, p, best);
            seen.pop();
        }
    }
}

fn random_grid(rng: &mut ChaCha8Rng) -> TerminalMap {
    let rows: Vec<String> = (0..5).map(|_| (0..5).map(|_| if rng.gen_bool(0.25) { '#' } else { '+' }).collect()).collect();
    let mut spec = MapSpec::from_layout(&rows);
    spec.strongly_connected = false;
    build_map(&spec).expect("road-only grid")
}

#[test]
fn planner_matches_exhaustive_search_on_small_grids() {
    let params = AgvParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut compared = 0;
    for _ in 0..12 {
        let map = random_grid(&mut rng);
        let roads: Vec<Cell> = map.cells().filter(|&c| map.kind(c) != CellKind::Obstacle).collect();
        for &a in &roads {
            for &b in &roads {
                if a == b {
                    continue;
                }
                let mut best = None;
                brute_force(&map, a, b, &mut vec![a], &params, &mut best);
                match (plan_path(&map, a, b, &params), best) {
                    (Ok(path), Some(c)) => {
                        assert_abs_diff_eq!(path_cost(&map, &path, &params), c, epsilon = 1e-9);
                        assert_abs_diff_eq!(oracle_cost(&path, map.cell_size(), &params), c, epsilon = 1e-9);
                        compared += 1;
                    }
                    (Err(SupervisorError::Unreachable { .. }), None) => {}
                    (got, want) => panic!("{a} -> {b}: planner {got:?}, exhaustive {want:?}"),
                }
            }
        }
    }
    assert!(compared > 500);
}

#[test]
fn long_straight_is_a_trapezoid() {
    // 0 -> 6 m/s at 2 m/s^2 takes 3 s over 9 m each way; 33 m cruise.
    let items = fastest_motion(&[SpeedPiece { s0: 0.0, s1: 51.0, v_max: 6.0 }], 0.0, 2.0).unwrap();
    assert_abs_diff_eq!(duration_of(&items), 3.0 + 33.0 / 6.0 + 3.0, epsilon = 1e-9);
    let p = Profile::new(items);
    assert_abs_diff_eq!(p.end_s(), 51.0, epsilon = 1e-12);
    assert_abs_diff_eq!(p.max_speed(), 6.0, epsilon = 1e-12);
    let (s, v, _) = p.state_at(1.5);
    assert_abs_diff_eq!(v, 3.0, epsilon = 1e-9);
    assert_abs_diff_eq!(s, 2.25, epsilon = 1e-9);
}

fn crossing() -> TerminalMap {
    let mut rows = vec!["#####v#####".to_string(); 11];
    rows[5] = ">>>>>+>>>>>".into();
    let mut spec = MapSpec::from_layout(&rows);
    spec.strongly_connected = false;
    build_map(&spec).unwrap()
}

fn shell(map: &TerminalMap, agv: u32, from: Cell, to: Cell, p: &AgvParams) -> Trajectory {
    let path = plan_path(map, from, to, p).unwrap();
    let seg = classify_path(map, &path, p, &service_indices(&[], path.len()));
    Trajectory::new(agv, None, false, path, seg, Vec::new(), Profile::default(), map.cell_size(), map.height())
}

fn shifted(occ: &[Occupancy], d: f64) -> Vec<Occupancy> {
    occ.iter().map(|o| Occupancy { start: o.start + d, end: o.end + d, ..*o }).collect()
}

#[test]
fn scheduler_beats_the_best_departure_delay_on_a_grid() {
    let p = AgvParams::default();
    let map = crossing();
    for (i, t_first) in [0.0, 0.7, 1.9, 3.3].into_iter().enumerate() {
        let mut table = ReservationTable::new(map.height(), map.width(), map.cell_size(), p.safety_radius_m, 1.0);
        let a = shell(&map, 1, Cell::new(5, 0), Cell::new(5, 10), &p);
        let pa = Scheduler::new(a.geometry(), &[], &table, 1, p.a_max).run(&Anchor::at_rest(t_first, t_first), 600.0).unwrap();
        table.insert(1, &a.with_profile(pa).occupancy(), false);

        let b = shell(&map, 2, Cell::new(0, 5), Cell::new(10, 5), &p);
        let empty = ReservationTable::new(map.height(), map.width(), map.cell_size(), p.safety_radius_m, 1.0);
        let free = b.with_profile(Scheduler::new(b.geometry(), &[], &empty, 2, p.a_max).run(&Anchor::at_rest(0.0, 0.0), 600.0).unwrap());
        // Oracle: smallest departure delay on a 0.1 s grid that clears the table.
        let free_occ = free.occupancy();
        let delay = (0..600).map(|k| k as f64 * 0.1).find(|&d| !table.conflicts(2, &shifted(&free_occ, d))).expect("some delay clears");

        let got = b.with_profile(Scheduler::new(b.geometry(), &[], &table, 2, p.a_max).run(&Anchor::at_rest(0.0, 0.0), 600.0).unwrap());
        assert!(!table.conflicts(2, &got.occupancy()), "case {i}: scheduled plan conflicts");
        assert!(got.arrival_time() <= free.arrival_time() + delay + 1e-9, "case {i}: {} vs {} + {delay}", got.arrival_time(), free.arrival_time());
        assert_eq!(got.path, free.path);
    }
}

