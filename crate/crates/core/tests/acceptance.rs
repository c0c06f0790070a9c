//! End-to-end acceptance: one line per criterion, written straight to
//! stdout so it shows up even when the harness captures output.

use std::collections::BTreeMap;
use std::io::Write;

use quayfleet::comms::{decode, encode, Endpoint, Message, Payload, StatusReport};
use quayfleet::navigation::{dead_reckon, nav_run, sample_gps, NoiseModel, PoseEstimate};
use quayfleet::powertrain::{agv_spec_table, size_battery_pack, AgvParams, Chemistry, ContainerClass};
use quayfleet::sim::{random_scenario, run, RandomScenarioOptions, SimOutcome};
use quayfleet::supervisor::{detect_conflicts, Pose, SupervisorEvent, Trajectory};
use quayfleet::vehicle::Mode;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const POWER_TOL: f64 = 0.015;
const TORQUE_TOL: f64 = 0.03;
const RPM_TOL: f64 = 0.01;
const MOTOR_RPM_TOL: f64 = 0.01;
const SUITE_SEEDS: std::ops::Range<u64> = 0..100;
const DT: f64 = 0.1;
const CLOSURE_POS_TOL: f64 = 1e-6;
const CLOSURE_HEADING_TOL: f64 = 1e-9;
const NAV_SEEDS: u64 = 20;
const GPS_SAMPLES: usize = 10_000;
const GPS_RADIUS_M: f64 = 15.0;
const GPS_SHARE: f64 = 0.93;
const ENERGY_REL_TOL: f64 = 1e-9;
const FUZZ_FRAMES: usize = 10_000;

fn report(n: u32, name: &str, pass: bool, detail: &str) -> bool {
    let mut out = std::io::stdout().lock();
    writeln!(out, "criterion {n:>2} {name:<28} {} {detail}", if pass { "PASS" } else { "FAIL" }).unwrap();
    pass
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn sizing_table() -> bool {
    let rows = agv_spec_table(&AgvParams::default());
    let reference = [(700.0, 30.0), (789.0, 33.0), (820.0, 35.0), (809.0, 34.0)];
    let mut worst = (0.0f64, 0.0f64);
    let mut ok = true;
    for (row, (kw, knm)) in rows.iter().zip(reference) {
        let (dp, dt) = (rel(row.total.power_w / 1000.0, kw), rel(row.total.torque_nm / 1000.0, knm));
        worst = (worst.0.max(dp), worst.1.max(dt));
        ok &= dp <= POWER_TOL && dt <= TORQUE_TOL;
    }
    let drpm = rel(rows[0].total.speed_rpm, 228.0);
    ok &= drpm <= RPM_TOL;
    report(1, "sizing table", ok, &format!("worst power {:.2}%, torque {:.2}%, wheel speed {:.2}%", worst.0 * 100.0, worst.1 * 100.0, drpm * 100.0))
}

fn motor_realization() -> bool {
    let rows = agv_spec_table(&AgvParams::default());
    let d = rel(rows[0].single_geared.speed_rpm, 462.0);
    let identity = rows.iter().all(|r| {
        r.per_wheel.power_w == r.total.power_w / 4.0 && r.per_wheel.torque_nm == r.total.torque_nm / 4.0 && r.per_wheel.motor_count == 4
    });
    report(
        2,
        "motor realization",
        d <= MOTOR_RPM_TOL && identity,
        &format!("geared motor {:.1} rpm ({:.2}%), per-wheel = total/4: {identity}", rows[0].single_geared.speed_rpm, d * 100.0),
    )
}

struct SuiteRun {
    seed: u64,
    out: SimOutcome,
    sweep_violations: usize,
    expected_jobs: usize,
}

fn suite() -> Vec<SuiteRun> {
    let opts = RandomScenarioOptions::default();
    SUITE_SEEDS
        .map(|seed| {
            let sc = random_scenario(seed, &opts);
            let out = run(&sc).expect("generated scenario runs");
            let sweep_violations = detect_conflicts(&out.trajectories, AgvParams::default().safety_radius_m).len();
            SuiteRun { seed, sweep_violations, expected_jobs: sc.jobs.list.len(), out }
        })
        .collect()
}

fn collision_freedom(runs: &[SuiteRun]) -> bool {
    let sweep: usize = runs.iter().map(|r| r.sweep_violations).sum();
    let live: usize = runs.iter().map(|r| r.out.violations.len()).sum();
    let unfinished: Vec<u64> = runs.iter().filter(|r| r.out.metrics.jobs_completed != r.expected_jobs).map(|r| r.seed).collect();
    report(
        3,
        "collision freedom",
        sweep == 0 && live == 0,
        &format!("{} runs, sweep violations {sweep}, in-run collisions {live}, runs with unfinished jobs {unfinished:?}", runs.len()),
    )
}

fn priority_optimality(runs: &[SuiteRun]) -> bool {
    let (mut jobs, mut with_conflict, mut delayed, mut arrival_later) = (0, 0, 0, 0);
    let mut failures = Vec::new();
    for r in runs {
        let actual: BTreeMap<u64, f64> = r.out.metrics.priority_delay_s.iter().copied().collect();
        for ev in &r.out.events {
            let SupervisorEvent::Assigned { job, priority: true, arrival, free_flight_arrival, .. } = ev else { continue };
            jobs += 1;
            let planned_ok = arrival - free_flight_arrival <= DT + 1e-9;
            let actual_ok = actual.get(job).is_some_and(|d| d.abs() <= DT + 1e-9);
            let retimes: Vec<(f64, bool)> = r
                .out
                .events
                .iter()
                .filter_map(|e| match e {
                    SupervisorEvent::Retimed { cause_job, conflicted: true, max_entry_delay_s, old_arrival, new_arrival, .. } if cause_job == job => {
                        Some((*max_entry_delay_s, new_arrival > old_arrival))
                    }
                    _ => None,
                })
                .collect();
            let conflict_ok = if retimes.is_empty() {
                true
            } else {
                with_conflict += 1;
                arrival_later += usize::from(retimes.iter().any(|x| x.1));
                retimes.iter().any(|x| x.0 > 0.0)
            };
            delayed += usize::from(!retimes.is_empty() && conflict_ok);
            if !(planned_ok && actual_ok && conflict_ok) {
                failures.push((r.seed, *job));
            }
        }
    }
    report(
        4,
        "priority optimality",
        failures.is_empty() && jobs > 0,
        &format!(
            "{jobs} priority jobs, {with_conflict} with conflicts, {delayed} delayed a conflicting AGV, {arrival_later} with a later goal arrival, failures {failures:?}"
        ),
    )
}

fn path_invariance(runs: &[SuiteRun]) -> bool {
    let (mut events, mut stable) = (0, 0);
    let mut per_mission_ok = true;
    for r in runs {
        for ev in &r.out.events {
            if let SupervisorEvent::Retimed { path_hash_before, path_hash_after, .. } = ev {
                events += 1;
                stable += usize::from(path_hash_before == path_hash_after);
            }
        }
        // Independently: every adopted plan for one mission follows one path.
        let mut paths: BTreeMap<(u32, u64), String> = BTreeMap::new();
        for t in &r.out.trajectories {
            if let Some(job) = t.job {
                let h = t.path_hash();
                per_mission_ok &= paths.entry((t.agv, job)).or_insert_with(|| h.clone()) == &h;
            }
        }
    }
    report(
        5,
        "cooperative path invariance",
        events == stable && per_mission_ok,
        &format!("{stable}/{events} re-timings kept their path, adopted plans per mission share one path: {per_mission_ok}"),
    )
}

fn loop_closure() -> bool {
    let d = 3.0;
    let start = PoseEstimate::exact(Pose::new(0.0, 0.0, 0.0));
    let mut est = start;
    for _ in 0..4 {
        for _ in 0..100 {
            est = dead_reckon(est, 0.1, 0.1, d);
        }
        let arc = std::f64::consts::FRAC_PI_2 * d / 2.0;
        est = dead_reckon(est, -arc, arc, d);
    }
    let pos = est.pose.x.hypot(est.pose.y);
    let head = quayfleet::supervisor::geometry::normalize_angle(est.pose.heading).abs();
    report(6, "odometry loop closure", pos <= CLOSURE_POS_TOL && head <= CLOSURE_HEADING_TOL, &format!("position {pos:.2e} m, heading {head:.2e} rad"))
}

fn fusion_benefit() -> bool {
    let noise = NoiseModel::default();
    let reps: Vec<_> = (0..NAV_SEEDS).map(|s| nav_run(s, &noise, 1000.0)).collect();
    let n = reps.len() as f64;
    let mean = |f: fn(&quayfleet::navigation::NavRunReport) -> f64| reps.iter().map(f).sum::<f64>() / n;
    let (fused, odo, raw) = (mean(|r| r.rms_fused), mean(|r| r.rms_odometry), mean(|r| r.rms_raw_gps));
    let (raw_r, dgps_r) = (mean(|r| r.mean_raw_radial), mean(|r| r.mean_dgps_radial));
    let samples: usize = reps.iter().map(|r| r.samples).sum();
    let ok = fused < odo && fused < raw && dgps_r < raw_r && noise.common_axis_sigma() > 0.0 && samples >= 1000;
    report(
        7,
        "navigation fusion benefit",
        ok,
        &format!("RMS fused {fused:.2} m, odometry {odo:.2} m, raw GPS {raw:.2} m; radial DGPS {dgps_r:.2} m vs raw {raw_r:.2} m over {samples} fixes"),
    )
}

fn gps_envelope() -> bool {
    let noise = NoiseModel { seed: 42, ..NoiseModel::default() };
    let truth = Pose::new(100.0, 200.0, 0.0);
    let inside = (0..GPS_SAMPLES)
        .filter(|&k| {
            let g = sample_gps(truth, &noise, 1, k as f64);
            (g.x - truth.x).hypot(g.y - truth.y) <= GPS_RADIUS_M
        })
        .count();
    let share = inside as f64 / GPS_SAMPLES as f64;
    report(8, "GPS accuracy envelope", share >= GPS_SHARE, &format!("{:.2}% of {GPS_SAMPLES} fixes within {GPS_RADIUS_M} m", share * 100.0))
}

fn energy_double_entry(runs: &[SuiteRun]) -> bool {
    let mut worst = 0.0f64;
    for r in runs {
        for e in &r.out.energy {
            let scale = e.battery_drain_wh.abs().max(1e-12);
            worst = worst.max((e.step_power_wh - e.battery_drain_wh).abs() / scale);
        }
    }
    let pack = size_battery_pack(Chemistry::LiFePO4.cell(), 640.0, 200_000.0);
    let summary = pack.summary();
    let pack_ok = pack.series_count == 200 && pack.parallel_count == 9 && summary == "200S9P, 216.0 kWh, 640.0 V";
    report(9, "energy double entry", worst <= ENERGY_REL_TOL && pack_ok, &format!("worst relative gap {worst:.1e}, pack {summary}"))
}

fn random_frame(rng: &mut ChaCha8Rng, traj: &Trajectory) -> Vec<u8> {
    match rng.gen_range(0..3) {
        0 => (0..rng.gen_range(0..64)).map(|_| rng.gen()).collect(),
        k => {
            let payload = if k == 1 {
                Payload::Status(StatusReport {
                    t: rng.gen_range(0.0..1e4),
                    estimate: PoseEstimate::exact(Pose::new(rng.gen_range(-1e3..1e3), rng.gen_range(-1e3..1e3), rng.gen_range(-3.2..3.2))),
                    mode: Mode::MoveToTarget,
                    speed: rng.gen_range(0.0..6.0),
                    battery_wh: rng.gen_range(0.0..2e5),
                    path_progress: rng.gen_range(0.0..1.0),
                    revision: Some(rng.gen_range(0..100)),
                    completed_revision: None,
                })
            } else {
                Payload::Command { mode: Mode::MoveToTarget, cargo: Some(ContainerClass::Std40), trajectory: Some(traj.clone()) }
            };
            let msg = Message { seq: rng.gen(), sender: Endpoint::Vehicle(rng.gen_range(1..9)), recipient: Endpoint::Supervisor, payload };
            let mut b = encode(&msg);
            for _ in 0..rng.gen_range(1..4) {
                if b.is_empty() {
                    break;
                }
                let i = rng.gen_range(0..b.len());
                match rng.gen_range(0..3) {
                    0 => b[i] ^= 1 << rng.gen_range(0..8),
                    1 => b.truncate(i),
                    _ => b.insert(i, rng.gen()),
                }
            }
            b
        }
    }
}

fn determinism(runs: &[SuiteRun]) -> bool {
    let opts = RandomScenarioOptions::default();
    let mismatched: Vec<u64> = runs
        .iter()
        .filter(|r| run(&random_scenario(r.seed, &opts)).expect("replay runs").trace.hash() != r.out.trace.hash())
        .map(|r| r.seed)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let traj = runs.iter().flat_map(|r| r.out.trajectories.iter()).max_by_key(|t| t.path.len()).expect("trajectories").clone();
    let outcomes = std::panic::catch_unwind(move || {
        let mut rejected = 0;
        for _ in 0..FUZZ_FRAMES {
            rejected += usize::from(decode(&random_frame(&mut rng, &traj)).is_err());
        }
        rejected
    });
    let detail = match &outcomes {
        Ok(rej) => format!("{} replays, mismatches {mismatched:?}; {FUZZ_FRAMES} fuzzed frames decoded without panic ({rej} rejected)", runs.len()),
        Err(_) => format!("{} replays, mismatches {mismatched:?}; decode panicked", runs.len()),
    };
    report(10, "determinism", mismatched.is_empty() && outcomes.is_ok(), &detail)
}

#[test]
fn acceptance() {
    let mut results = vec![sizing_table(), motor_realization()];
    let started = std::time::Instant::now();
    let runs = suite();
    let suite_s = started.elapsed().as_secs_f64();
    results.push(collision_freedom(&runs));
    results.push(priority_optimality(&runs));
    results.push(path_invariance(&runs));
    results.push(loop_closure());
    results.push(fusion_benefit());
    results.push(gps_envelope());
    results.push(energy_double_entry(&runs));
    results.push(determinism(&runs));
    writeln!(std::io::stdout().lock(), "suite of {} scenarios ran in {suite_s:.1} s, total {:.1} s", runs.len(), started.elapsed().as_secs_f64()).unwrap();
    let failed: Vec<usize> = results.iter().enumerate().filter(|(_, ok)| !**ok).map(|(i, _)| i + 1).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
