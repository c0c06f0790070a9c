//! Brute-force separation sweep over timed trajectories.
//!
//! Deliberately independent of reservations: it samples poses and compares
//! distances.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::trajectory::Trajectory;

pub const SWEEP_DT: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Conflict {
    pub t: f64,
    pub a: u32,
    pub b: u32,
    pub distance_m: f64,
}

/// Every AGV follows its trajectories in order of `(start_time, revision)`;
/// at time `t` the latest one already started applies, and before the first
/// one the vehicle rests at its start. Returns sampled instants at which two
/// AGVs are closer than `2 · safety_radius`, earliest first.
pub fn detect_conflicts(trajectories: &[Trajectory], safety_radius_m: f64) -> Vec<Conflict> {
    let mut by_agv: BTreeMap<u32, Vec<&Trajectory>> = BTreeMap::new();
    for t in trajectories {
        by_agv.entry(t.agv).or_default().push(t);
    }
    if by_agv.len() < 2 {
        return Vec::new();
    }
    for v in by_agv.values_mut() {
        v.sort_by(|x, y| x.start_time().total_cmp(&y.start_time()).then(x.revision.cmp(&y.revision)));
    }
    let t_min = trajectories.iter().map(Trajectory::start_time).fold(f64::INFINITY, f64::min);
    let t_max = trajectories.iter().map(Trajectory::completion_time).fold(f64::NEG_INFINITY, f64::max);
    let agvs: Vec<(u32, Vec<&Trajectory>)> = by_agv.into_iter().collect();
    let sep = 2.0 * safety_radius_m;
    let mut out = Vec::new();
    let steps = ((t_max - t_min) / SWEEP_DT).ceil().max(0.0) as u64;
    for k in 0..=steps {
        let t = t_min + k as f64 * SWEEP_DT;
        let poses: Vec<(u32, f64, f64)> = agvs
            .iter()
            .map(|(id, trs)| {
                let i = trs.partition_point(|x| x.start_time() <= t).saturating_sub(1);
                let p = trs[i].pose_at(t);
                (*id, p.x, p.y)
            })
            .collect();
        for i in 0..poses.len() {
            for j in i + 1..poses.len() {
                let d = (poses[i].1 - poses[j].1).hypot(poses[i].2 - poses[j].2);
                if d < sep {
                    out.push(Conflict { t, a: poses[i].0, b: poses[j].0, distance_m: d });
                }
            }
        }
    }
    out
}
