//! Runs the bundled demo scenario end to end and writes its trace.

use quayfleet::sim::{run, Scenario};
use quayfleet::supervisor::detect_conflicts;

fn main() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/demo.json");
    let scenario = Scenario::from_json(&std::fs::read_to_string(path).expect("demo scenario")).expect("valid scenario");
    let out = run(&scenario).expect("runs");
    print!("{}", out.metrics.summary());
    println!("trace: {} rows, sha256 {}", out.trace.len(), out.trace.hash());
    println!("separation sweep: {} violations", detect_conflicts(&out.trajectories, 2.5).len());
    for e in &out.energy {
        println!("AGV {}: {:.1} Wh from power samples, {:.1} Wh from the battery", e.agv, e.step_power_wh, e.battery_drain_wh);
    }
    let dest = std::env::temp_dir().join("quayfleet_demo_trace.csv");
    std::fs::write(&dest, out.trace.to_csv()).expect("write trace");
    println!("wrote {}", dest.display());
}
