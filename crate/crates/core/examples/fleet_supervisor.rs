//! Cooperative scheduling on a ring-road terminal, then a priority job that
//! keeps its empty-terminal timing while earlier missions are re-timed on
//! unchanged paths.

use quayfleet::powertrain::{AgvParams, ContainerClass};
use quayfleet::sim::generate::ring_layout;
use quayfleet::supervisor::{assign_mission, FleetView, SupervisorConfig, SupervisorEvent};
use quayfleet::terminal_map::{build_map, Cell, FlowCategory, Job};

fn job(id: u64, from: Cell, to: Cell, flow: FlowCategory, priority: bool) -> Job {
    Job { id, flow, container: ContainerClass::Std40, pickup: from, dropoff: to, release_time: 0.0, priority }
}

fn main() {
    let stacks: Vec<(u32, u32)> = [2, 4, 6, 8].iter().flat_map(|&c| [(0, c), (1, c)]).collect();
    let (spec, quays, docks) = ring_layout(11, 1, &[2, 4, 6, 8], &stacks);
    for row in &spec.layout {
        println!("  {row}");
    }
    let map = build_map(&spec).expect("valid layout");
    let params = AgvParams::default();
    let fleet_init: Vec<_> = [docks[1], docks[3], docks[5]].iter().enumerate().map(|(i, &c)| (i as u32 + 1, params, c, 216_000.0)).collect();
    let mut fleet = FleetView::new(map, SupervisorConfig::default(), &fleet_init);

    let jobs = [
        job(1, quays[0], docks[6], FlowCategory::Import, false),
        job(2, quays[3], docks[0], FlowCategory::Import, false),
        job(3, docks[2], quays[1], FlowCategory::Export, true),
    ];
    for (k, j) in jobs.iter().enumerate() {
        let now = 5.0 * k as f64;
        match assign_mission(&mut fleet, j, now) {
            Ok(a) => {
                for ev in &a.events {
                    match ev {
                        SupervisorEvent::Assigned { agv, job, priority, arrival, free_flight_arrival, .. } => println!(
                            "job {job} -> AGV {agv} (priority {priority}): arrival {arrival:.1} s, empty terminal {free_flight_arrival:.1} s"
                        ),
                        SupervisorEvent::Retimed { agv, old_arrival, new_arrival, path_hash_before, path_hash_after, max_entry_delay_s, .. } => println!(
                            "  AGV {agv} re-timed: arrival {old_arrival:.1} -> {new_arrival:.1} s, largest cell delay {max_entry_delay_s:.1} s, path {path_hash_before} -> {path_hash_after}"
                        ),
                        other => println!("  {other:?}"),
                    }
                }
            }
            Err(e) => println!("job {} deferred: {e}", j.id),
        }
    }
    let sweep = quayfleet::supervisor::detect_conflicts(&fleet.active_trajectories().into_iter().cloned().collect::<Vec<_>>(), params.safety_radius_m);
    println!("separation sweep over committed plans: {} violations", sweep.len());
}
