//! Builds a terminal from a character layout plus direction overrides and draws a job list with a
//! given export/import/transit mix.

use quayfleet::sim::generate::ring_layout;
use quayfleet::terminal_map::{apportion, build_map, generate_jobs, CellKind};

fn main() {
    let (spec, _, _) = ring_layout(9, 1, &[2, 4, 6], &[(0, 2), (0, 4), (0, 6), (1, 2), (1, 4), (1, 6)]);
    for row in &spec.layout {
        println!("  {row}");
    }
    for o in &spec.directions {
        println!("  cell {:?} allows {}", o.cell, o.dirs);
    }
    let map = build_map(&spec).expect("valid layout");
    println!(
        "{}x{} cells of {} m: {} quay, {} stack, {} road",
        map.height(),
        map.width(),
        map.cell_size(),
        map.cells_of(CellKind::QuayCrane).len(),
        map.cells_of(CellKind::StackLane).len(),
        map.cells().filter(|&c| map.kind(c) == CellKind::Road).count()
    );
    let mix = [0.5, 0.3, 0.2];
    println!("12 jobs split {:?}", apportion(mix, 12));
    for j in generate_jobs(&map, mix, 12, 7).expect("enough docks") {
        println!("job {:>2} {:?} {:?}: {} -> {} at {:.1} s", j.id, j.flow, j.container, j.pickup, j.dropoff, j.release_time);
    }
    println!("\n{}", serde_json::to_string(&map.to_spec()).expect("serializes"));
}
