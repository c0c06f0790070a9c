//! Route planning and velocity scheduling for two AGVs through one
//! intersection. The second vehicle keeps its route and waits its turn.

use quayfleet::powertrain::AgvParams;
use quayfleet::supervisor::geometry::classify_path;
use quayfleet::supervisor::trajectory::service_indices;
use quayfleet::supervisor::{detect_conflicts, path_cost, plan_path, Anchor, Profile, ReservationTable, Scheduler, Trajectory};
use quayfleet::terminal_map::{build_map, Cell, MapSpec, TerminalMap};

fn schedule(map: &TerminalMap, table: &ReservationTable, agv: u32, from: Cell, to: Cell, params: &AgvParams) -> Trajectory {
    let path = plan_path(map, from, to, params).expect("route exists");
    println!("AGV {agv}: {} cells, free-flight cost {:.2} s", path.len(), path_cost(map, &path, params));
    let segments = classify_path(map, &path, params, &service_indices(&[], path.len()));
    let shell = Trajectory::new(agv, None, false, path, segments, Vec::new(), Profile::default(), map.cell_size(), map.height());
    let profile = Scheduler::new(shell.geometry(), &shell.stops, table, agv, params.a_max).run(&Anchor::at_rest(0.0, 0.0), 600.0).expect("schedulable");
    shell.with_profile(profile)
}

fn main() {
    let layout = ["#####v#####", "#####v#####", "#####v#####", "#####v#####", "#####v#####", ">>>>>+>>>>>", "#####v#####", "#####v#####", "#####v#####", "#####v#####", "#####v#####"];
    let mut spec = MapSpec::from_layout(&layout);
    spec.strongly_connected = false;
    let map = build_map(&spec).expect("valid layout");
    let params = AgvParams::default();
    let mut table = ReservationTable::new(map.height(), map.width(), map.cell_size(), params.safety_radius_m, 1.0);

    let first = schedule(&map, &table, 1, Cell::new(5, 0), Cell::new(5, 10), &params);
    table.insert(1, &first.occupancy(), false);
    let second = schedule(&map, &table, 2, Cell::new(0, 5), Cell::new(10, 5), &params);

    for t in [&first, &second] {
        let waited: f64 = t.waits().iter().sum();
        println!("AGV {}: arrives {:.2} s, waits {:.2} s, path {}", t.agv, t.arrival_time(), waited, t.path_hash());
        for c in t.timing().iter().filter(|c| c.cell == Cell::new(5, 5)) {
            println!("  crossing occupied {:.2}..{:.2} s", c.enter_t, c.exit_t);
        }
    }
    println!("separation sweep: {} violations", detect_conflicts(&[first, second], params.safety_radius_m).len());
}
