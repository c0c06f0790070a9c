//! Fleet bookkeeping and mission assignment.
//!
//! Cooperative jobs are timed against everything already reserved, so
//! earlier missions never move. A priority job is planned as if the terminal
//! were empty; missions in its way are re-timed on their unchanged paths.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::geometry::classify_path;
use super::planner::{path_cost, plan_path};
use super::profile::{Profile, ProfileItem};
use super::reservation::{Occupancy, OccupancyKind, Reservation, ReservationTable};
use super::schedule::{stop_points, Anchor, Scheduler};
use super::trajectory::{service_indices, Stop, StopAction, Trajectory};
use super::SupervisorError;
use crate::comms::StatusReport;
use crate::powertrain::{traction_force_drive, AgvParams, ContainerClass};
use crate::terminal_map::{Cell, Job, TerminalMap};
use crate::vehicle::Mode;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SupervisorConfig {
    /// Minimum time gap between conflicting occupancies.
    pub headway_s: f64,
    /// Latest departure considered, counted from the decision time.
    pub horizon_s: f64,
    /// Delay between a decision and the first moment it may change motion.
    pub command_lead_s: f64,
    pub lost_after_s: f64,
    pub retry_every_s: f64,
    pub dwell_load_s: f64,
    pub dwell_unload_s: f64,
}

impl Default for SupervisorConfig {
    fn default() -> Self {
        Self {
            headway_s: 1.0,
            horizon_s: 600.0,
            command_lead_s: 0.1,
            lost_after_s: 5.0,
            retry_every_s: 10.0,
            dwell_load_s: 60.0,
            dwell_unload_s: 60.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgvRecord {
    pub id: u32,
    pub params: AgvParams,
    /// Where the supervisor believes the AGV rests when idle.
    pub cell: Cell,
    pub last_status: Option<StatusReport>,
    pub last_heard: f64,
    pub lost: bool,
    pub trajectory: Option<Trajectory>,
    pub job: Option<Job>,
    /// Assignment order; earlier missions rank higher.
    pub order: u64,
    /// Last trajectory revision issued.
    pub revision: u32,
    /// Revision the current mission started with; re-timings only raise it.
    pub mission_revision: u32,
    pub battery_wh: f64,
}

impl AgvRecord {
    pub fn is_standby(&self) -> bool {
        self.trajectory.is_none() && !self.lost
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SupervisorEvent {
    Assigned {
        agv: u32,
        job: u64,
        priority: bool,
        path_hash: String,
        start: f64,
        arrival: f64,
        /// Arrival of the same path on an empty terminal.
        free_flight_arrival: f64,
        completion: f64,
    },
    Retimed {
        agv: u32,
        job: Option<u64>,
        cause_job: u64,
        old_arrival: f64,
        new_arrival: f64,
        path_hash_before: String,
        path_hash_after: String,
        /// Whether the old timing conflicted with the priority plan.
        conflicted: bool,
        /// Largest delay in entering any path cell.
        max_entry_delay_s: f64,
    },
    Deferred {
        job: u64,
        reason: String,
    },
    Completed {
        agv: u32,
        job: u64,
    },
    Lost {
        agv: u32,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub agv: u32,
    pub trajectory: Trajectory,
    pub cargo: ContainerClass,
    pub retimed: Vec<Trajectory>,
    pub events: Vec<SupervisorEvent>,
}

#[derive(Debug, Clone)]
pub struct FleetView {
    pub map: TerminalMap,
    pub config: SupervisorConfig,
    pub agvs: BTreeMap<u32, AgvRecord>,
    pub table: ReservationTable,
    next_order: u64,
    /// Bumped on every committed change that can open up new schedules.
    pub generation: u64,
}

/// Energy (Wh) a profile draws with the given load, no regeneration.
pub fn profile_energy_wh(profile: &Profile, params: &AgvParams, container: Option<ContainerClass>) -> f64 {
    profile
        .items
        .iter()
        .map(|it| match *it {
            ProfileItem::Ramp { s0, s1, v0, v1, .. } if s1 > s0 => {
                let acc = (v1 * v1 - v0 * v0) / (2.0 * (s1 - s0));
                traction_force_drive(params, container, acc) * (s1 - s0) / 3600.0
            }
            _ => 0.0,
        })
        .sum()
}

fn parked_forever(cell: Cell, from: f64) -> Occupancy {
    Occupancy { cell, kind: OccupancyKind::Parked, start: from, end: f64::INFINITY }
}

impl FleetView {
    /// `fleet` lists (id, params, start cell, battery Wh).
    pub fn new(map: TerminalMap, config: SupervisorConfig, fleet: &[(u32, AgvParams, Cell, f64)]) -> Self {
        let radius = fleet.iter().map(|f| f.1.safety_radius_m).fold(0.0, f64::max).max(1e-6);
        let mut table = ReservationTable::new(map.height(), map.width(), map.cell_size(), radius, config.headway_s);
        let mut agvs = BTreeMap::new();
        for &(id, params, cell, battery_wh) in fleet {
            table.insert(id, &[parked_forever(cell, 0.0)], false);
            agvs.insert(
                id,
                AgvRecord {
                    id,
                    params,
                    cell,
                    last_status: None,
                    last_heard: 0.0,
                    lost: false,
                    trajectory: None,
                    job: None,
                    order: 0,
                    revision: 0,
                    mission_revision: 0,
                    battery_wh,
                },
            );
        }
        Self { map, config, agvs, table, next_order: 1, generation: 0 }
    }

    pub fn active_trajectories(&self) -> Vec<&Trajectory> {
        self.agvs.values().filter_map(|a| a.trajectory.as_ref()).collect()
    }

    /// Builds path, segments and stops for `job` starting from `from`.
    fn mission_shape(&self, params: &AgvParams, from: Cell, job: &Job) -> Result<(Vec<Cell>, Vec<Stop>, usize), SupervisorError> {
        let p1 = plan_path(&self.map, from, job.pickup, params)?;
        let p2 = plan_path(&self.map, job.pickup, job.dropoff, params)?;
        let pickup_idx = p1.len() - 1;
        let mut path = p1;
        path.extend_from_slice(&p2[1..]);
        let last = path.len() - 1;
        let mut stops = vec![Stop { path_index: pickup_idx, dwell_s: self.config.dwell_load_s, action: StopAction::Load }];
        for k in 1..last {
            if k != pickup_idx && path[k - 1] == path[k + 1] {
                stops.push(Stop { path_index: k, dwell_s: 0.0, action: StopAction::Reverse });
            }
        }
        stops.push(Stop { path_index: last, dwell_s: self.config.dwell_unload_s, action: StopAction::Unload });
        stops.sort_by_key(|s| s.path_index);
        Ok((path, stops, pickup_idx))
    }

    fn build_trajectory(
        &self,
        agv: u32,
        job: Option<&Job>,
        path: Vec<Cell>,
        stops: Vec<Stop>,
        now: f64,
        table: &ReservationTable,
    ) -> Result<Trajectory, SupervisorError> {
        let rec = &self.agvs[&agv];
        let params = rec.params;
        let svc = service_indices(&stops, path.len());
        let segments = classify_path(&self.map, &path, &params, &svc);
        let (job_id, priority) = job.map_or((None, false), |j| (Some(j.id), j.priority));
        let shell = Trajectory::new(agv, job_id, priority, path, segments, stops, Profile::default(), self.map.cell_size(), self.map.height());
        let t_start = now + self.config.command_lead_s;
        let mut ready = t_start;
        if shell.stops.first().is_some_and(|s| s.path_index == 0 && s.action == StopAction::Load) {
            ready += self.config.dwell_load_s;
        }
        let mut anchor = Anchor::at_rest(t_start, ready);
        if t_start > now {
            anchor.prefix = vec![ProfileItem::Hold { t0: now, t1: t_start, s: 0.0 }];
        }
        let profile = Scheduler::new(shell.geometry(), &shell.stops, table, agv, params.a_max).run(&anchor, now + self.config.horizon_s)?;
        let mut traj = shell.with_profile(profile);
        traj.revision = rec.revision + 1;
        Ok(traj)
    }

    /// Free-flight cost from the AGV's believed cell to `to`.
    fn approach_cost(&self, rec: &AgvRecord, to: Cell) -> Option<f64> {
        plan_path(&self.map, rec.cell, to, &rec.params).ok().map(|p| path_cost(&self.map, &p, &rec.params))
    }

    /// Chooses the nearest standby AGV with enough charge.
    pub fn choose_agv(&self, job: &Job) -> Result<u32, SupervisorError> {
        let mut best: Option<(f64, u32)> = None;
        for rec in self.agvs.values().filter(|r| r.is_standby()) {
            let Some(c) = self.approach_cost(rec, job.pickup) else { continue };
            if best.is_none_or_gt(c) {
                best = Some((c, rec.id));
            }
        }
        best.map(|b| b.1).ok_or(SupervisorError::NoVehicle)
    }

    fn charge_ok(&self, traj: &Trajectory, job: &Job) -> bool {
        let rec = &self.agvs[&traj.agv];
        profile_energy_wh(&traj.profile, &rec.params, Some(job.container)) <= rec.battery_wh
    }

    /// Table of what a priority plan must respect at decision time `t`:
    /// other priority missions, idle AGVs, and committed motion before `t`.
    fn immovables(&self, agv: u32, t: f64) -> ReservationTable {
        self.table.filtered(|_, r| {
            if r.agv == agv {
                return None;
            }
            let rec = &self.agvs[&r.agv];
            let movable = rec.trajectory.as_ref().is_some_and(|tr| !tr.priority && tr.completion_time() > t);
            if !movable || r.priority {
                return Some(*r);
            }
            (r.start < t).then_some(Reservation { end: r.end.min(t), ..*r })
        })
    }
}

trait BestExt {
    fn is_none_or_gt(&self, c: f64) -> bool;
}

impl BestExt for Option<(f64, u32)> {
    fn is_none_or_gt(&self, c: f64) -> bool {
        self.map_or(true, |(b, _)| c < b - 1e-9)
    }
}

/// Largest increase in cell entry time from `old` to `new` on the same path.
pub fn entry_delay(old: &Trajectory, new: &Trajectory) -> f64 {
    old.timing().iter().zip(new.timing()).skip(1).map(|(a, b)| b.enter_t - a.enter_t).fold(0.0, f64::max)
}

/// Assigns `job` to the nearest standby AGV and schedules it. On error the
/// fleet is unchanged.
pub fn assign_mission(fleet: &mut FleetView, job: &Job, now: f64) -> Result<Assignment, SupervisorError> {
    let agv = fleet.choose_agv(job)?;
    let rec = fleet.agvs[&agv].clone();
    let (path, stops, _) = fleet.mission_shape(&rec.params, rec.cell, job)?;
    let t_dec = now + fleet.config.command_lead_s;
    let mut table = fleet.table.clone();
    table.remove_agv(agv);
    // Cheap necessary conditions: a dwell-long window at the pickup and an
    // open-ended one at the dropoff, among entries that cannot move.
    let immovable;
    let fixed = if job.priority {
        immovable = fleet.immovables(agv, t_dec);
        &immovable
    } else {
        &table
    };
    let pick_ok = fixed.hold_windows(agv, job.pickup, now).iter().any(|w| w.1 - w.0 >= fleet.config.dwell_load_s - 1e-9);
    let drop_ok = fixed.hold_windows(agv, job.dropoff, now).last().is_some_and(|w| w.1.is_infinite());
    if !(pick_ok && drop_ok) {
        return Err(SupervisorError::Unschedulable { agv });
    }
    let empty = fleet.table.filtered(|_, _| None);
    let free = fleet.build_trajectory(agv, Some(job), path.clone(), stops.clone(), now, &empty)?;
    if !fleet.charge_ok(&free, job) {
        return Err(SupervisorError::NoVehicle);
    }
    let mut events = Vec::new();
    let mut retimed = Vec::new();
    let traj = if job.priority {
        let occ = free.occupancy();
        if fixed.conflicts(agv, &occ) {
            return Err(SupervisorError::Unschedulable { agv });
        }
        table.insert(agv, &occ, true);
        let movable = |r: &Reservation| !r.priority;
        let mut passes = 0;
        loop {
            let hit: Vec<u32> = table
                .conflicting_agvs(agv, &occ, movable)
                .into_iter()
                .filter(|a| fleet.agvs[a].trajectory.as_ref().is_some_and(|t| !t.priority && t.completion_time() > t_dec))
                .collect();
            if hit.is_empty() {
                break;
            }
            passes += 1;
            if passes > fleet.agvs.len() {
                return Err(SupervisorError::Unschedulable { agv });
            }
            let mut ordered: Vec<(u64, u32)> = hit.iter().map(|a| (fleet.agvs[a].order, *a)).collect();
            ordered.sort_unstable();
            for (_, other) in ordered {
                let orec = &fleet.agvs[&other];
                let old = retimed
                    .iter()
                    .rev()
                    .find(|t: &&Trajectory| t.agv == other)
                    .cloned()
                    .unwrap_or_else(|| orec.trajectory.clone().expect("active"));
                let sp = stop_points(old.geometry(), &old.stops);
                let anchor = Anchor::from_profile(&old.profile, t_dec, &sp);
                table.remove_agv(other);
                let profile = Scheduler::new(old.geometry(), &old.stops, &table, other, orec.params.a_max)
                    .run(&anchor, now + fleet.config.horizon_s)?;
                let mut nt = old.with_profile(profile);
                nt.revision = retimed.iter().filter(|t: &&Trajectory| t.agv == other).map(|t| t.revision).max().unwrap_or(orec.revision) + 1;
                table.insert(other, &nt.occupancy(), false);
                events.push(SupervisorEvent::Retimed {
                    agv: other,
                    job: old.job,
                    cause_job: job.id,
                    old_arrival: old.arrival_time(),
                    new_arrival: nt.arrival_time(),
                    path_hash_before: old.path_hash(),
                    path_hash_after: nt.path_hash(),
                    conflicted: true,
                    max_entry_delay_s: entry_delay(&old, &nt),
                });
                retimed.push(nt);
            }
        }
        free.clone()
    } else {
        let t = fleet.build_trajectory(agv, Some(job), path, stops, now, &table)?;
        table.insert(agv, &t.occupancy(), false);
        t
    };

    // Commit.
    fleet.table = table;
    fleet.generation += 1;
    let order = fleet.next_order;
    fleet.next_order += 1;
    for nt in &retimed {
        let r = fleet.agvs.get_mut(&nt.agv).unwrap();
        r.revision = r.revision.max(nt.revision);
        r.trajectory = Some(nt.clone());
    }
    // Keep only the newest re-timing per AGV for the caller.
    let mut latest: BTreeMap<u32, Trajectory> = BTreeMap::new();
    for nt in retimed {
        latest.insert(nt.agv, nt);
    }
    let r = fleet.agvs.get_mut(&agv).unwrap();
    r.trajectory = Some(traj.clone());
    r.job = Some(job.clone());
    r.order = order;
    r.revision = traj.revision;
    r.mission_revision = traj.revision;
    events.insert(
        0,
        SupervisorEvent::Assigned {
            agv,
            job: job.id,
            priority: job.priority,
            path_hash: traj.path_hash(),
            start: traj.start_time(),
            arrival: traj.arrival_time(),
            free_flight_arrival: free.arrival_time(),
            completion: traj.completion_time(),
        },
    );
    Ok(Assignment { agv, trajectory: traj, cargo: job.container, retimed: latest.into_values().collect(), events })
}

/// Sends an idle AGV to `to` without a job, timed around everything
/// already reserved.
pub fn reposition(fleet: &mut FleetView, agv: u32, to: Cell, now: f64) -> Result<Trajectory, SupervisorError> {
    let rec = fleet.agvs.get(&agv).ok_or(SupervisorError::UnknownVehicle(agv))?;
    if !rec.is_standby() {
        return Err(SupervisorError::NoVehicle);
    }
    let path = plan_path(&fleet.map, rec.cell, to, &rec.params)?;
    let mut stops = Vec::new();
    for k in 1..path.len().saturating_sub(1) {
        if path[k - 1] == path[k + 1] {
            stops.push(Stop { path_index: k, dwell_s: 0.0, action: StopAction::Reverse });
        }
    }
    let mut table = fleet.table.clone();
    table.remove_agv(agv);
    let traj = fleet.build_trajectory(agv, None, path, stops, now, &table)?;
    table.insert(agv, &traj.occupancy(), false);
    fleet.table = table;
    fleet.generation += 1;
    let order = fleet.next_order;
    fleet.next_order += 1;
    let r = fleet.agvs.get_mut(&agv).unwrap();
    r.trajectory = Some(traj.clone());
    r.order = order;
    r.revision = traj.revision;
    r.mission_revision = traj.revision;
    Ok(traj)
}

/// Applies a status report. Completes the mission when the AGV reports
/// standby after finishing its current trajectory, and releases entries
/// that lie behind the reported time.
pub fn on_status(fleet: &mut FleetView, from: u32, msg: &StatusReport, now: f64) -> Result<Vec<SupervisorEvent>, SupervisorError> {
    let headway = fleet.config.headway_s;
    let rec = fleet.agvs.get_mut(&from).ok_or(SupervisorError::UnknownVehicle(from))?;
    let mut events = Vec::new();
    if rec.last_status.as_ref().is_some_and(|s| s.t > msg.t) {
        return Ok(events);
    }
    rec.last_status = Some(msg.clone());
    rec.last_heard = now;
    rec.lost = false;
    rec.battery_wh = msg.battery_wh;
    let done = rec.trajectory.is_some()
        && msg.mode == Mode::Standby
        && msg.revision.is_none()
        && msg.completed_revision.is_some_and(|r| r >= rec.mission_revision);
    if done {
        let t = rec.trajectory.take().unwrap();
        rec.cell = t.goal();
        fleet.generation += 1;
        if let Some(job) = rec.job.take() {
            events.push(SupervisorEvent::Completed { agv: from, job: job.id });
        }
    }
    fleet.table.release_before(from, msg.t - headway);
    Ok(events)
}

/// Marks AGVs silent for too long as lost.
pub fn check_lost(fleet: &mut FleetView, now: f64) -> Vec<SupervisorEvent> {
    let limit = fleet.config.lost_after_s;
    let mut out = Vec::new();
    for rec in fleet.agvs.values_mut() {
        if !rec.lost && now - rec.last_heard > limit {
            rec.lost = true;
            out.push(SupervisorEvent::Lost { agv: rec.id });
        }
    }
    out
}
