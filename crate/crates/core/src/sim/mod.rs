//! Fixed-step orchestration of vehicles, navigation, messaging and the
//! supervisor, with an independent collision check on true poses.

pub mod generate;
pub mod scenario;
pub mod trace;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comms::{Channel, Endpoint, Message, Payload, StatusReport};
use crate::navigation::Navigator;
use crate::powertrain::{AgvParams, ContainerClass};
use crate::supervisor::{
    assign_mission, check_lost, on_status, reposition, FleetView, Pose, Profile, StopAction, SupervisorError, SupervisorEvent,
    Trajectory,
};
use crate::terminal_map::{Cell, CellKind, Job, TerminalMap};
use crate::vehicle::{step_kinematics, Mode, VehicleState, PULSES_PER_REV};

pub use generate::{random_scenario, RandomScenarioOptions};
pub use scenario::{BatterySpec, EngineSection, FleetEntry, JobGenSpec, JobsSection, Scenario, SCENARIO_VERSION};
pub use trace::{compute_metrics, AgvSample, Metrics, Trace, TraceError, TraceRow, TRACE_HEADER};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("scenario invalid: {0}")]
    ScenarioInvalid(String),
}

/// Ground-truth separation or placement failure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Violation {
    Pair { t: f64, a: u32, b: u32, distance_m: f64 },
    Obstacle { t: f64, agv: u32 },
}

/// Pairwise distance test against the summed safety radii, plus a check
/// that every AGV centre lies on a drivable cell.
pub fn check_collisions(t: f64, agvs: &[(u32, Pose, f64)], map: &TerminalMap) -> Vec<Violation> {
    let mut out = Vec::new();
    for (i, a) in agvs.iter().enumerate() {
        match map.cell_at(a.1.x, a.1.y) {
            Some(c) if map.kind(c) != CellKind::Obstacle => {}
            _ => out.push(Violation::Obstacle { t, agv: a.0 }),
        }
        for b in &agvs[i + 1..] {
            let d = (a.1.x - b.1.x).hypot(a.1.y - b.1.y);
            if d < a.2 + b.2 {
                out.push(Violation::Pair { t, a: a.0, b: b.0, distance_m: d });
            }
        }
    }
    out
}

/// Per-AGV energy bookkeeping kept on two independent sides.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub agv: u32,
    /// Sum of per-step traction power times dt.
    pub step_power_wh: f64,
    /// Pack capacity minus remaining charge.
    pub battery_drain_wh: f64,
    /// Energy booked by the vehicle as drawn.
    pub vehicle_wh: f64,
}

#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub metrics: Metrics,
    pub trace: Trace,
    /// Every trajectory the vehicles executed, starting with a parked one
    /// per AGV, in adoption order.
    pub trajectories: Vec<Trajectory>,
    pub events: Vec<SupervisorEvent>,
    pub energy: Vec<EnergyLedger>,
    pub violations: Vec<Violation>,
    pub failed_jobs: Vec<u64>,
    pub final_states: Vec<VehicleState>,
    /// Latest time with a command delivered to a vehicle before it acted.
    pub command_log: Vec<CommandRecord>,
    pub end_time: f64,
    /// Encoded frames with send times, when requested.
    pub frames: Vec<(f64, Vec<u8>)>,
}

/// Command send and delivery times, for causality checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommandRecord {
    pub agv: u32,
    pub revision: u32,
    pub sent: f64,
    pub delivered: f64,
    /// Motion under this revision may only differ from the previous one
    /// from here on.
    pub effective_from: f64,
    pub adopted: bool,
}

#[derive(Debug, Clone)]
struct PendingJob {
    job: Job,
    next_try: f64,
    /// Fleet generation at the last failed attempt.
    tried_at_generation: Option<u64>,
    last_try: f64,
    last_reason: Option<String>,
}

struct Agv {
    id: u32,
    params: AgvParams,
    home: Cell,
    state: VehicleState,
    nav: Navigator,
    capacity_wh: f64,
    step_power_wh: f64,
    seq: u64,
    home_retry: f64,
}

fn parked(agv: u32, cell: Cell, map: &TerminalMap, params: &AgvParams) -> Trajectory {
    let segments = crate::supervisor::geometry::classify_path(map, &[cell], params, &[]);
    let profile = Profile { items: vec![crate::supervisor::ProfileItem::Hold { t0: 0.0, t1: 0.0, s: 0.0 }] };
    Trajectory::new(agv, None, false, vec![cell], segments, Vec::new(), profile, map.cell_size(), map.height())
}

fn event_row(trace: &mut Trace, t: f64, ev: &SupervisorEvent) {
    match ev {
        SupervisorEvent::Assigned { agv, job, priority, path_hash, start, arrival, free_flight_arrival, completion } => trace.push_event(
            t,
            "assigned",
            *job,
            &format!(
                "agv={agv};priority={};start={start:.6};arrival={arrival:.6};ff={free_flight_arrival:.6};completion={completion:.6};hash={path_hash}",
                u8::from(*priority)
            ),
        ),
        SupervisorEvent::Retimed {
            agv, job, cause_job, old_arrival, new_arrival, path_hash_before, path_hash_after, max_entry_delay_s, ..
        } => trace.push_event(
            t,
            "retimed",
            u64::from(*agv),
            &format!(
                "job={};cause={cause_job};old={old_arrival:.6};new={new_arrival:.6};delay={max_entry_delay_s:.6};hash_before={path_hash_before};hash_after={path_hash_after}",
                job.map_or("-".to_string(), |j| j.to_string())
            ),
        ),
        SupervisorEvent::Deferred { job, reason } => trace.push_event(t, "deferred", *job, reason),
        SupervisorEvent::Completed { agv, job } => trace.push_event(t, "completed", *job, &format!("agv={agv}")),
        SupervisorEvent::Lost { agv } => trace.push_event(t, "lost", u64::from(*agv), ""),
    }
}

impl Agv {
    fn sample(&self) -> AgvSample {
        let p = self.state.pose_true;
        let e = self.nav.estimate.pose;
        AgvSample {
            x: p.x,
            y: p.y,
            heading: p.heading,
            speed: self.state.speed,
            mode: self.state.mode,
            energy_wh: self.state.energy_wh,
            est_x: e.x,
            est_y: e.y,
            est_err_m: (e.x - p.x).hypot(e.y - p.y),
            odometer_m: self.state.odometer_m,
            pulses: self.state.wheel_pulses,
            drain_wh: self.capacity_wh - self.state.pack.remaining_wh,
        }
    }

    fn status(&self) -> StatusReport {
        StatusReport {
            t: self.state.t,
            estimate: self.nav.estimate,
            mode: self.state.mode,
            speed: self.state.speed,
            battery_wh: self.state.pack.remaining_wh,
            path_progress: self.state.path_progress,
            revision: self.state.trajectory.as_ref().map(|t| t.revision),
            completed_revision: self.state.completed_revision,
        }
    }

    fn send(&mut self, channel: &mut Channel, payload: Payload, now: f64) {
        self.seq += 1;
        channel.send(Message { seq: self.seq, sender: Endpoint::Vehicle(self.id), recipient: Endpoint::Supervisor, payload }, now);
    }

    /// Handles a delivered command. Returns whether it was adopted.
    fn on_command(&mut self, traj: Trajectory, cargo: Option<ContainerClass>) -> bool {
        match &self.state.trajectory {
            None => {
                let (s, v, _) = traj.state_at(self.state.t);
                let p0 = traj.geometry().pose_at(0.0);
                let here = (p0.x - self.state.pose_true.x).hypot(p0.y - self.state.pose_true.y) < 1e-6;
                if !here || s.abs() > 1e-9 || v.abs() > 1e-9 || self.state.depleted {
                    return false;
                }
                self.state.assign(traj, cargo).is_ok()
            }
            Some(_) => self.state.adopt_retime(traj),
        }
    }
}

/// A cooperative job that failed against an unchanged fleet is retried
/// after this long anyway, since its search horizon moves with time.
const STALE_RETRY_S: f64 = 60.0;

/// Exact time the profile first reaches the stop at `path_index`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Keep every encoded frame in [`SimOutcome::frames`].
    pub dump_frames: bool,
}

/// Runs a scenario to completion or to its horizon.
pub fn run(scenario: &Scenario) -> Result<SimOutcome, SimError> {
    run_with(scenario, RunOptions::default())
}

pub fn run_with(scenario: &Scenario, opts: RunOptions) -> Result<SimOutcome, SimError> {
    let (map, jobs) = scenario.prepare()?;
    let (noise, channel_model) = scenario.seeded_models();
    let eng = scenario.engine;
    let dt = eng.dt;
    let mut sup_cfg = eng.supervisor;
    // Commands take effect at the first step boundary after delivery.
    sup_cfg.command_lead_s = ((channel_model.latency / dt - 1e-9).ceil().max(1.0)) * dt;
    let status_every = scenario.steps_per(eng.status_period_s);
    let gps_every = scenario.steps_per(1.0);
    let max_steps = (eng.horizon_s / dt).ceil() as u64;

    let base = Pose::new(0.0, 0.0, 0.0);
    let mut agvs: Vec<Agv> = Vec::new();
    let mut executed: Vec<Trajectory> = Vec::new();
    let mut fleet_init = Vec::new();
    let mut sorted = scenario.fleet.clone();
    sorted.sort_by_key(|f| f.id);
    for f in &sorted {
        let (x, y) = map.center(f.start);
        let pose = Pose::new(x, y, 0.0);
        let pack = f.battery.pack();
        fleet_init.push((f.id, f.params, f.start, pack.remaining_wh));
        executed.push(parked(f.id, f.start, &map, &f.params));
        agvs.push(Agv {
            id: f.id,
            params: f.params,
            home: f.start,
            state: VehicleState::new(f.id, pose, pack),
            nav: Navigator::new(f.id, pose, eng.fix_source, base),
            capacity_wh: pack.capacity_wh,
            step_power_wh: 0.0,
            seq: 0,
            home_retry: 0.0,
        });
    }
    let mut fleet = FleetView::new(map.clone(), sup_cfg, &fleet_init);
    let mut channel = Channel::new(channel_model);
    if opts.dump_frames {
        channel.frame_log = Some(Vec::new());
    }
    let mut sup_seq = 0u64;
    let mut trace = Trace::new();
    let mut events = Vec::new();
    let mut violations = Vec::new();
    let mut command_log = Vec::new();
    let mut in_violation: BTreeSet<(u32, u32)> = BTreeSet::new();

    let mut unreleased: Vec<Job> = jobs.clone();
    unreleased.sort_by(|a, b| a.release_time.total_cmp(&b.release_time).then(a.id.cmp(&b.id)));
    unreleased.reverse();
    let mut pending: BTreeMap<u64, PendingJob> = BTreeMap::new();
    let mut open: BTreeSet<u64> = jobs.iter().map(|j| j.id).collect();
    let mut failed = Vec::new();
    // Commands sent but not yet delivered: (agv, revision) -> send time.
    let mut in_flight: BTreeMap<(u32, u32), f64> = BTreeMap::new();

    for a in &agvs {
        trace.push_sample(0.0, a.id, &a.sample());
    }

    let mut k: u64 = 0;
    let mut t = 0.0;
    while !open.is_empty() && k < max_steps {
        // Vehicles take delivered commands.
        for a in agvs.iter_mut() {
            for msg in channel.poll(Endpoint::Vehicle(a.id), t) {
                if let Payload::Command { cargo, trajectory: Some(traj), .. } = msg.payload {
                    let rev = traj.revision;
                    let sent = in_flight.remove(&(a.id, rev)).unwrap_or(t);
                    let effective = traj.profile.start_time() + sup_cfg.command_lead_s;
                    let adopted_traj = traj.clone();
                    let ok = a.on_command(traj, cargo);
                    command_log.push(CommandRecord { agv: a.id, revision: rev, sent, delivered: t, effective_from: effective, adopted: ok });
                    if ok {
                        executed.push(adopted_traj);
                    } else {
                        trace.push_event(t, "late_command", u64::from(a.id), &format!("rev={rev}"));
                    }
                    a.send(&mut channel, Payload::Ack { seq: msg.seq }, t);
                }
            }
        }

        // Supervisor reads status reports.
        for msg in channel.poll(Endpoint::Supervisor, t) {
            if let (Endpoint::Vehicle(id), Payload::Status(st)) = (msg.sender, &msg.payload) {
                if let Ok(evs) = on_status(&mut fleet, id, st, t) {
                    for ev in evs {
                        event_row(&mut trace, t, &ev);
                        if let SupervisorEvent::Completed { job, .. } = ev {
                            open.remove(&job);
                        }
                        events.push(ev);
                    }
                }
            }
        }
        for ev in check_lost(&mut fleet, t) {
            event_row(&mut trace, t, &ev);
            events.push(ev);
        }

        // Releases and assignments.
        while unreleased.last().is_some_and(|j| j.release_time <= t + 1e-9) {
            let job = unreleased.pop().unwrap();
            trace.push_event(job.release_time, "release", job.id, &format!("priority={}", u8::from(job.priority)));
            pending.insert(job.id, PendingJob { job, next_try: t, tried_at_generation: None, last_try: t, last_reason: None });
        }
        let mut order: Vec<(bool, f64, u64)> =
            pending.values().filter(|p| p.next_try <= t + 1e-9 && (p.job.priority || p.tried_at_generation != Some(fleet.generation) || t - p.last_try >= STALE_RETRY_S - 1e-9)).map(|p| (!p.job.priority, p.job.release_time, p.job.id)).collect();
        order.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));
        for (_, _, id) in order {
            let job = pending[&id].job.clone();
            match assign_mission(&mut fleet, &job, t) {
                Ok(asg) => {
                    pending.remove(&id);
                    let mut cmds = vec![(asg.agv, Some(asg.cargo), asg.trajectory)];
                    cmds.extend(asg.retimed.into_iter().map(|r| (r.agv, None, r)));
                    for (agv, cargo, traj) in cmds {
                        sup_seq += 1;
                        in_flight.insert((agv, traj.revision), t);
                        let cargo = cargo.or_else(|| fleet.agvs[&agv].job.as_ref().map(|j| j.container));
                        channel.send(
                            Message {
                                seq: sup_seq,
                                sender: Endpoint::Supervisor,
                                recipient: Endpoint::Vehicle(agv),
                                payload: Payload::Command { mode: Mode::MoveToTarget, cargo, trajectory: Some(traj) },
                            },
                            t,
                        );
                    }
                    for ev in asg.events {
                        event_row(&mut trace, t, &ev);
                        events.push(ev);
                    }
                }
                Err(e) => {
                    let p = pending.get_mut(&id).unwrap();
                    let (retry, permanent) = match e {
                        SupervisorError::NoVehicle => (eng.status_period_s, false),
                        SupervisorError::Unreachable { .. } => (0.0, true),
                        _ => (sup_cfg.retry_every_s, false),
                    };
                    let reason = e.to_string();
                    if permanent {
                        trace.push_event(t, "job_failed", id, &reason);
                        failed.push(id);
                        open.remove(&id);
                        pending.remove(&id);
                        continue;
                    }
                    p.next_try = t + retry;
                    p.tried_at_generation = Some(fleet.generation);
                    p.last_try = t;
                    if p.last_reason.as_deref() != Some(reason.as_str()) {
                        let ev = SupervisorEvent::Deferred { job: id, reason: reason.clone() };
                        event_row(&mut trace, t, &ev);
                        events.push(ev);
                        p.last_reason = Some(reason);
                    }
                }
            }
        }

        // Idle AGVs away from home drive back.
        if eng.return_home {
            for a in agvs.iter_mut() {
                let rec = &fleet.agvs[&a.id];
                if !rec.is_standby() || rec.cell == a.home || a.home_retry > t + 1e-9 || rec.last_status.is_none() {
                    continue;
                }
                match reposition(&mut fleet, a.id, a.home, t) {
                    Ok(traj) => {
                        sup_seq += 1;
                        in_flight.insert((a.id, traj.revision), t);
                        trace.push_event(t, "home", u64::from(a.id), &format!("rev={}", traj.revision));
                        channel.send(
                            Message {
                                seq: sup_seq,
                                sender: Endpoint::Supervisor,
                                recipient: Endpoint::Vehicle(a.id),
                                payload: Payload::Command { mode: Mode::MoveToTarget, cargo: None, trajectory: Some(traj) },
                            },
                            t,
                        );
                    }
                    Err(_) => a.home_retry = t + sup_cfg.retry_every_s,
                }
            }
        }

        // Physics, sensing, reporting.
        k += 1;
        let t1 = k as f64 * dt;
        for a in agvs.iter_mut() {
            let before = a.state.clone();
            let mut s = step_kinematics(a.state.clone(), &a.params, dt);
            s.t = t1;
            a.step_power_wh += s.last_power_w * dt / 3600.0;
            a.state = s;
            a.nav.update(t1, a.state.wheel_pulses, a.state.pose_true, &noise, PULSES_PER_REV, a.params.wheel_radius_m, a.params.wheelbase_d_m, k % gps_every == 0);
            let mut report_now = k % status_every == 0;
            if let Some(traj) = &before.trajectory {
                let job = traj.job.unwrap_or(u64::MAX);
                for stop in &traj.stops {
                    let (from, to) = match stop.action {
                        StopAction::Load => (Mode::Loading, "load_start"),
                        StopAction::Unload => (Mode::Unloading, "unload_start"),
                        StopAction::Reverse => continue,
                    };
                    if before.mode != from && a.state.mode == from && traj.job.is_some() {
                        trace.push_event(traj.service_start(stop), to, job, &format!("agv={}", a.id));
                    }
                }
                if a.state.trajectory.is_none() {
                    report_now = true;
                    if !a.state.depleted {
                        if let Some(j) = traj.job {
                            trace.push_event(traj.completion_time(), "job_done", j, &format!("agv={}", a.id));
                        }
                    }
                }
            }
            if report_now {
                let st = a.status();
                a.send(&mut channel, Payload::Status(st), t1);
            }
        }
        let poses: Vec<(u32, Pose, f64)> = agvs.iter().map(|a| (a.id, a.state.pose_true, a.params.safety_radius_m)).collect();
        let now_bad = check_collisions(t1, &poses, &map);
        let mut current = BTreeSet::new();
        for v in &now_bad {
            let key = match *v {
                Violation::Pair { a, b, .. } => (a, b),
                Violation::Obstacle { agv, .. } => (agv, u32::MAX),
            };
            current.insert(key);
            if !in_violation.contains(&key) {
                let info = match *v {
                    Violation::Pair { b, distance_m, .. } => format!("other={b};d={distance_m:.4}"),
                    Violation::Obstacle { .. } => "obstacle".to_string(),
                };
                trace.push_event(t1, "collision", u64::from(key.0), &info);
                violations.push(*v);
            }
        }
        in_violation = current;
        for a in &agvs {
            trace.push_sample(t1, a.id, &a.sample());
        }
        t = t1;
    }

    for id in open.iter() {
        if !failed.contains(id) {
            trace.push_event(t, "job_failed", *id, "horizon reached");
            failed.push(*id);
        }
    }
    let metrics = compute_metrics(&trace).expect("own trace parses");
    let energy = agvs
        .iter()
        .map(|a| EnergyLedger {
            agv: a.id,
            step_power_wh: a.step_power_wh,
            battery_drain_wh: a.capacity_wh - a.state.pack.remaining_wh,
            vehicle_wh: a.state.energy_wh,
        })
        .collect();
    Ok(SimOutcome {
        metrics,
        trace,
        trajectories: executed,
        events,
        energy,
        violations,
        failed_jobs: failed,
        final_states: agvs.into_iter().map(|a| a.state).collect(),
        command_log,
        end_time: t,
        frames: channel.frame_log.take().unwrap_or_default(),
    })
}

/// Runs the scenario twice and compares trace hashes.
pub fn replay_check(scenario: &Scenario) -> Result<(String, String), SimError> {
    let a = run(scenario)?.trace.hash();
    let b = run(scenario)?.trace.hash();
    Ok((a, b))
}
