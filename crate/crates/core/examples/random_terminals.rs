//! Random terminals, fleets and job mixes, each checked by the independent
//! separation sweep. Pass a seed range, e.g. `0 10`.

use quayfleet::sim::{random_scenario, run, RandomScenarioOptions};
use quayfleet::supervisor::detect_conflicts;

fn main() {
    let args: Vec<u64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let (lo, hi) = match args[..] {
        [a, b] => (a, b),
        [a] => (a, a + 1),
        _ => (0, 5),
    };
    for seed in lo..hi {
        let sc = random_scenario(seed, &RandomScenarioOptions::default());
        let out = run(&sc).expect("generated scenarios are valid");
        let sweep = detect_conflicts(&out.trajectories, 2.5);
        println!(
            "seed {seed:>3}: {:>2}x{:<2} map, {} AGVs, {:>2} jobs, {:>2} done, makespan {:>7.1} s, {:>5.1} containers/h, sweep {}",
            sc.map.layout.len(),
            sc.map.layout[0].len(),
            sc.fleet.len(),
            sc.jobs.list.len(),
            out.metrics.jobs_completed,
            out.metrics.makespan_s,
            out.metrics.throughput_per_h,
            sweep.len()
        );
    }
}
