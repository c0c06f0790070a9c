use approx::assert_abs_diff_eq;
use quayfleet::navigation::NoiseModel;
use quayfleet::powertrain::{AgvParams, ContainerClass};
use quayfleet::sim::{
    check_collisions, compute_metrics, random_scenario, replay_check, run, EngineSection, FleetEntry, JobsSection, RandomScenarioOptions, Scenario,
    SimError, Trace, Violation, SCENARIO_VERSION,
};
use quayfleet::supervisor::{detect_conflicts, Pose};
use quayfleet::terminal_map::{build_map, Cell, FlowCategory, Job, MapSpec};
use quayfleet::vehicle::pulse_quantum;

fn corridor(jobs: Vec<Job>) -> Scenario {
    let row = format!("Q{}S", ">".repeat(49));
    let mut map = MapSpec::from_layout(&[row]);
    map.strongly_connected = false;
    Scenario {
        version: SCENARIO_VERSION,
        map,
        fleet: vec![FleetEntry { id: 1, start: Cell::new(0, 0), params: AgvParams::default(), battery: Default::default() }],
        jobs: JobsSection { list: jobs, generate: None },
        noise: NoiseModel::default(),
        channel: Default::default(),
        engine: EngineSection { return_home: false, ..EngineSection::default() },
    }
}

fn import_job() -> Job {
    Job {
        id: 0,
        flow: FlowCategory::Import,
        container: ContainerClass::Std40,
        pickup: Cell::new(0, 0),
        dropoff: Cell::new(0, 50),
        release_time: 0.0,
        priority: false,
    }
}

/// Rest-to-rest time over pieces of (length, limit) at acceleration `a`,
/// entering each piece at the lower of adjacent limits.
fn oracle_time(pieces: &[(f64, f64)], a: f64) -> f64 {
    let mut t = 0.0;
    for (i, &(len, v)) in pieces.iter().enumerate() {
        let vin = if i == 0 { 0.0 } else { v.min(pieces[i - 1].1) };
        let vout = if i + 1 == pieces.len() { 0.0 } else { v.min(pieces[i + 1].1) };
        let (d_up, d_down) = ((v * v - vin * vin) / (2.0 * a), (v * v - vout * vout) / (2.0 * a));
        assert!(d_up + d_down <= len, "oracle assumes the limit is reached");
        t += (v - vin) / a + (v - vout) / a + (len - d_up - d_down) / v;
    }
    t
}

#[test]
fn single_job_corridor_makespan() {
    let sc = corridor(vec![import_job()]);
    let out = run(&sc).unwrap();
    // Half a dock cell in crab mode, 49 road cells, half a dock cell.
    let motion = oracle_time(&[(2.0, 1.0), (196.0, 6.0), (2.0, 1.0)], 2.0);
    assert_abs_diff_eq!(motion, 39.25, epsilon = 1e-12);
    let service = 60.0 + 60.0;
    let lead = sc.engine.dt;
    assert_eq!(out.metrics.jobs_completed, 1);
    assert_abs_diff_eq!(out.metrics.makespan_s, lead + motion + service, epsilon = 1e-6);
    assert!((out.metrics.makespan_s - (motion + service)).abs() <= sc.engine.dt + 1e-9);
    assert_abs_diff_eq!(out.metrics.total_distance_m, 200.0, epsilon = 1e-6);
    assert_abs_diff_eq!(out.metrics.throughput_per_h, 3600.0 / out.metrics.makespan_s, epsilon = 1e-9);
    assert_abs_diff_eq!(out.metrics.mean_job_wait_s, lead, epsilon = 1e-6);
}

#[test]
fn no_jobs_means_an_idle_run() {
    let out = run(&corridor(Vec::new())).unwrap();
    let m = &out.metrics;
    assert_eq!((m.jobs_completed, m.jobs_failed, m.collision_count), (0, 0, 0));
    assert_eq!(m.makespan_s, 0.0);
    assert_eq!(m.total_distance_m, 0.0);
    assert_eq!(m.total_energy_wh, 0.0);
}

#[test]
fn unreachable_job_fails_cleanly() {
    let mut job = import_job();
    job.flow = FlowCategory::Export;
    job.pickup = Cell::new(0, 50);
    job.dropoff = Cell::new(0, 0);
    let out = run(&corridor(vec![job])).unwrap();
    assert_eq!(out.metrics.jobs_failed, 1);
    assert_eq!(out.failed_jobs, vec![0]);
    assert_eq!(out.metrics.jobs_completed, 0);
}

#[test]
fn invalid_scenarios_are_rejected() {
    let mut sc = corridor(vec![import_job()]);
    sc.fleet.push(FleetEntry { id: 2, start: Cell::new(0, 1), params: AgvParams::default(), battery: Default::default() });
    assert!(matches!(run(&sc), Err(SimError::ScenarioInvalid(_))));
    let mut sc = corridor(vec![import_job()]);
    sc.engine.dt = 0.0;
    assert!(matches!(run(&sc), Err(SimError::ScenarioInvalid(_))));
    let mut sc = corridor(vec![import_job()]);
    sc.jobs.list[0].flow = FlowCategory::Transit;
    assert!(matches!(run(&sc), Err(SimError::ScenarioInvalid(_))));
    assert!(Scenario::from_json("{\"version\": 1}").is_err());
}

#[test]
fn scenario_json_round_trips() {
    let sc = random_scenario(3, &RandomScenarioOptions::default());
    assert_eq!(Scenario::from_json(&sc.to_json()).unwrap(), sc);
}

#[test]
fn overlapping_agvs_are_reported() {
    let map = build_map(&MapSpec::from_layout(&["++#"])).unwrap();
    let agvs = [(1, Pose::new(0.0, 0.0, 0.0), 2.5), (2, Pose::new(1.0, 0.0, 0.0), 2.5), (3, Pose::new(8.0, 0.0, 0.0), 2.5)];
    let v = check_collisions(1.0, &agvs, &map);
    assert!(v.iter().any(|x| matches!(x, Violation::Pair { a: 1, b: 2, .. })));
    assert!(v.iter().any(|x| matches!(x, Violation::Obstacle { agv: 3, .. })));
    assert!(!v.iter().any(|x| matches!(x, Violation::Pair { b: 3, .. })));
}

#[test]
fn replay_is_bit_identical_and_seed_sensitive() {
    let sc = random_scenario(5, &RandomScenarioOptions::default());
    let (a, b) = replay_check(&sc).unwrap();
    assert_eq!(a, b);
    let mut other = sc.clone();
    other.engine.seed += 1;
    assert_ne!(run(&other).unwrap().trace.hash(), a);
}

#[test]
fn trace_file_reproduces_metrics() {
    let sc = random_scenario(8, &RandomScenarioOptions::default());
    let out = run(&sc).unwrap();
    let parsed = Trace::from_csv(&out.trace.to_csv()).unwrap();
    assert_eq!(parsed, out.trace);
    assert_eq!(compute_metrics(&parsed).unwrap(), out.metrics);
    assert!(Trace::from_csv("t,kind\n1,agv").is_err());
}

#[test]
fn energy_and_pulses_balance() {
    for seed in [1, 2] {
        let sc = random_scenario(seed, &RandomScenarioOptions::default());
        let out = run(&sc).unwrap();
        assert!(detect_conflicts(&out.trajectories, 2.5).is_empty());
        for e in &out.energy {
            assert!((e.step_power_wh - e.battery_drain_wh).abs() <= 1e-9 * e.battery_drain_wh.max(1e-12));
            assert!((e.vehicle_wh - e.battery_drain_wh).abs() <= 1e-9 * e.battery_drain_wh.max(1e-12));
        }
        let q = pulse_quantum(&AgvParams::default());
        for s in &out.final_states {
            let mean = s.wheel_distance_m.iter().sum::<f64>() / 4.0;
            assert_abs_diff_eq!(mean, s.odometer_m, epsilon = 1e-6);
            for w in 0..4 {
                assert!((s.wheel_pulses[w] as f64 * q - s.wheel_distance_m[w]).abs() <= q / 2.0 + 1e-12);
            }
        }
        let drawn: f64 = out.energy.iter().map(|e| e.battery_drain_wh).sum();
        assert_abs_diff_eq!(out.metrics.total_energy_wh, drawn, epsilon = 1e-3);
    }
}

#[test]
fn lossy_channel_never_breaks_separation() {
    let mut sc = random_scenario(12, &RandomScenarioOptions::default());
    sc.channel.loss_rate = 0.05;
    let out = run(&sc).unwrap();
    assert!(out.violations.is_empty());
    assert!(detect_conflicts(&out.trajectories, 2.5).is_empty());
    for c in &out.command_log {
        assert!(!c.adopted || c.delivered <= c.effective_from + 1e-9, "{c:?}");
    }
}
