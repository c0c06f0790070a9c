//! Earliest-arrival timing of a fixed path against existing reservations.
//!
//! The vehicle may only wait at cell centres on the path. Between two
//! consecutive rests it performs the fastest rest-to-rest motion. The search
//! is Dijkstra over (stop point, safe hold window) labels ordered by arrival
//! time: from a label, every leg to a later stop up to the next forced stop
//! is tried at each departure instant left free by the reservations, and the
//! arrival is matched against the target stop's hold windows.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use super::geometry::PathGeometry;
use super::profile::{clip_pieces, duration_of, fastest_motion, Profile, ProfileItem};
use super::reservation::{complement_within, Occupancy, ReservationTable};
use super::trajectory::{fragment_footprint, speed_pieces, Stop};
use super::SupervisorError;

const EPS: f64 = 1e-9;

/// A place on the path where the vehicle may stand still.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopPoint {
    pub path_index: usize,
    pub s: f64,
    /// Speed must be zero here.
    pub forced: bool,
    pub dwell_s: f64,
}

pub fn stop_points(geom: &PathGeometry, stops: &[Stop]) -> Vec<StopPoint> {
    geom.stop_indices
        .iter()
        .map(|&k| StopPoint {
            path_index: k,
            s: geom.stop_s[k],
            forced: geom.forced_stop[k],
            dwell_s: stops.iter().find(|s| s.path_index == k).map_or(0.0, |s| s.dwell_s),
        })
        .collect()
}

/// Where re-timing starts from: the committed motion before `t`, and the
/// path state at `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Anchor {
    pub t: f64,
    pub prefix: Vec<ProfileItem>,
    pub s: f64,
    pub v: f64,
    /// Earliest departure when resting at a stop (the rest of a dwell).
    pub ready_at: f64,
}

impl Anchor {
    pub fn at_rest(t: f64, ready_at: f64) -> Self {
        Self { t, prefix: Vec::new(), s: 0.0, v: 0.0, ready_at }
    }

    /// State of `profile` at `t`, keeping everything before as committed.
    pub fn from_profile(profile: &Profile, t: f64, stops: &[StopPoint]) -> Self {
        let (s, v, _) = profile.state_at(t);
        let prefix = profile.prefix_until(t);
        let mut ready_at = t;
        if v < EPS {
            if let Some(sp) = stops.iter().find(|sp| (sp.s - s).abs() < 1e-6) {
                // Dwell already begun at this stop counts.
                let began = profile
                    .holds()
                    .filter(|h| (h.2 - s).abs() < 1e-6 && h.0 <= t + EPS)
                    .map(|h| h.0)
                    .fold(f64::NAN, |_, x| x);
                if sp.dwell_s > 0.0 && !began.is_nan() {
                    ready_at = ready_at.max(began + sp.dwell_s);
                }
            }
        }
        Self { t, prefix, s, v, ready_at }
    }
}

#[derive(Debug, Clone)]
struct Leg {
    ramps: Vec<ProfileItem>,
    dur: f64,
    footprint: Vec<Occupancy>,
}

#[derive(Debug, Clone, Copy)]
struct Label {
    stop: usize,
    win: (f64, f64),
    t: f64,
    dep_min: f64,
    parent: Option<usize>,
    /// Departure from the parent stop.
    dep: f64,
}

#[derive(Debug, PartialEq)]
struct QItem(f64, usize, usize);

impl Eq for QItem {}

impl Ord for QItem {
    fn cmp(&self, o: &Self) -> Ordering {
        o.0.total_cmp(&self.0).then(self.1.cmp(&o.1)).then(o.2.cmp(&self.2))
    }
}

impl PartialOrd for QItem {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

pub struct Scheduler<'a> {
    geom: &'a PathGeometry,
    stops: Vec<StopPoint>,
    table: &'a ReservationTable,
    agv: u32,
    a_max: f64,
    legs: HashMap<(usize, usize), Option<Leg>>,
    windows: HashMap<usize, Vec<(f64, f64)>>,
}

impl<'a> Scheduler<'a> {
    pub fn new(geom: &'a PathGeometry, stops: &[Stop], table: &'a ReservationTable, agv: u32, a_max: f64) -> Self {
        Self { geom, stops: stop_points(geom, stops), table, agv, a_max, legs: HashMap::new(), windows: HashMap::new() }
    }

    pub fn stop_points(&self) -> &[StopPoint] {
        &self.stops
    }

    fn next_forced(&self, i: usize) -> usize {
        (i + 1..self.stops.len()).find(|&j| self.stops[j].forced).unwrap_or(self.stops.len() - 1)
    }

    fn motion(&self, s_a: f64, s_b: f64, v_a: f64, t_a: f64) -> Option<Leg> {
        let pieces = clip_pieces(&speed_pieces(self.geom), s_a, s_b);
        let ramps: Vec<ProfileItem> = fastest_motion(&pieces, v_a, self.a_max)?.iter().map(|r| r.shifted(t_a)).collect();
        let dur = duration_of(&ramps);
        let frag = Profile::new(ramps.clone());
        let ka = self.geom.piece_at(s_a);
        let kb = super::trajectory::cell_of_s(self.geom, s_b);
        let footprint = fragment_footprint(self.geom, &frag, ka, kb, t_a, t_a + dur);
        Some(Leg { ramps, dur, footprint })
    }

    fn leg(&mut self, i: usize, j: usize) -> Option<Leg> {
        if !self.legs.contains_key(&(i, j)) {
            let leg = self.motion(self.stops[i].s, self.stops[j].s, 0.0, 0.0);
            self.legs.insert((i, j), leg);
        }
        self.legs[&(i, j)].clone()
    }

    fn hold_windows(&mut self, j: usize) -> &[(f64, f64)] {
        let cell = self.geom.cells[self.stops[j].path_index];
        let (table, agv) = (self.table, self.agv);
        self.windows.entry(j).or_insert_with(|| table.hold_windows(agv, cell, f64::NEG_INFINITY))
    }

    fn window_at(&mut self, j: usize, t: f64) -> Option<(f64, f64)> {
        self.hold_windows(j).iter().copied().find(|w| w.0 <= t + EPS && t <= w.1 + EPS)
    }

    fn admissible(&self, j: usize, arrive: f64, win: (f64, f64)) -> bool {
        if j + 1 == self.stops.len() {
            win.1.is_infinite()
        } else {
            arrive + self.stops[j].dwell_s <= win.1 + EPS
        }
    }

    /// Earliest-arrival profile from `anchor`. Departures later than
    /// `latest_departure` are not considered.
    pub fn run(&mut self, anchor: &Anchor, latest_departure: f64) -> Result<Profile, SupervisorError> {
        let last = self.stops.len() - 1;
        let mut labels: Vec<Label> = Vec::new();
        let mut root_legs: HashMap<usize, Leg> = HashMap::new();
        let mut heap = BinaryHeap::new();
        let mut best: HashMap<(usize, u64), f64> = HashMap::new();

        let rest_stop = (anchor.v < EPS).then(|| self.stops.iter().position(|sp| (sp.s - anchor.s).abs() < 1e-6)).flatten();
        if let Some(i0) = rest_stop {
            let Some(win) = self.window_at(i0, anchor.t) else {
                return Err(SupervisorError::Unschedulable { agv: self.agv });
            };
            let dep_min = anchor.ready_at.max(anchor.t);
            if i0 == last && !win.1.is_infinite() {
                return Err(SupervisorError::Unschedulable { agv: self.agv });
            }
            labels.push(Label { stop: i0, win, t: anchor.t, dep_min, parent: None, dep: anchor.t });
            heap.push(QItem(anchor.t, i0, 0));
        } else {
            let first = self.stops.iter().position(|sp| sp.s > anchor.s + EPS).unwrap_or(last);
            let m = if self.stops[first].forced { first } else { self.next_forced(first) };
            let brake = anchor.v * anchor.v / (2.0 * self.a_max);
            for j in first..=m {
                if self.stops[j].s + 1e-9 < anchor.s + brake {
                    continue;
                }
                let Some(leg) = self.motion(anchor.s, self.stops[j].s, anchor.v, anchor.t) else { continue };
                if self.table.conflicts(self.agv, &leg.footprint) {
                    continue;
                }
                let arrive = anchor.t + leg.dur;
                let Some(win) = self.window_at(j, arrive) else { continue };
                if !self.admissible(j, arrive, win) {
                    continue;
                }
                let idx = labels.len();
                labels.push(Label { stop: j, win, t: arrive, dep_min: arrive + self.stops[j].dwell_s, parent: None, dep: anchor.t });
                root_legs.insert(idx, leg);
                heap.push(QItem(arrive, j, idx));
            }
        }

        while let Some(QItem(t, stop, idx)) = heap.pop() {
            let lab = labels[idx];
            if best.get(&(stop, lab.win.0.to_bits())).is_some_and(|&b| b < t - EPS) {
                continue;
            }
            if stop == last {
                return Ok(self.assemble(anchor, &labels, &root_legs, idx));
            }
            let lo = lab.dep_min.max(lab.t);
            let hi = lab.win.1.min(latest_departure);
            if lo > hi + EPS {
                continue;
            }
            let m = self.next_forced(stop);
            for j in stop + 1..=m {
                let Some(leg) = self.leg(stop, j) else { continue };
                let forbidden = self.table.forbidden_shifts(self.agv, &leg.footprint);
                let departures = complement_within(&forbidden, lo, hi);
                let windows: Vec<(f64, f64)> = self.hold_windows(j).to_vec();
                for &(dlo, dhi) in &departures {
                    let (alo, ahi) = (dlo + leg.dur, dhi + leg.dur);
                    for &w in windows.iter().filter(|w| w.1 + EPS >= alo) {
                        if w.0 > ahi + EPS {
                            break;
                        }
                        let arrive = w.0.max(alo);
                        if !self.admissible(j, arrive, w) {
                            continue;
                        }
                        let key = (j, w.0.to_bits());
                        if best.get(&key).is_some_and(|&b| b <= arrive + EPS) {
                            continue;
                        }
                        best.insert(key, arrive);
                        let nidx = labels.len();
                        labels.push(Label {
                            stop: j,
                            win: w,
                            t: arrive,
                            dep_min: arrive + self.stops[j].dwell_s,
                            parent: Some(idx),
                            dep: arrive - leg.dur,
                        });
                        heap.push(QItem(arrive, j, nidx));
                    }
                }
            }
        }
        Err(SupervisorError::Unschedulable { agv: self.agv })
    }

    fn assemble(&mut self, anchor: &Anchor, labels: &[Label], root_legs: &HashMap<usize, Leg>, end: usize) -> Profile {
        let mut chain = vec![end];
        while let Some(p) = labels[*chain.last().unwrap()].parent {
            chain.push(p);
        }
        chain.reverse();
        let mut items = anchor.prefix.clone();
        let head = chain[0];
        if let Some(leg) = root_legs.get(&head) {
            items.extend(leg.ramps.iter().copied());
        }
        for w in chain.windows(2) {
            let (a, b) = (labels[w[0]], labels[w[1]]);
            let sp = self.stops[a.stop];
            push_hold(&mut items, a.t, b.dep, sp.s);
            let leg = self.leg(a.stop, b.stop).expect("leg used in search");
            items.extend(leg.ramps.iter().map(|r| r.shifted(b.dep)));
        }
        let fin = labels[end];
        let last = self.stops[fin.stop];
        let fin_end = if chain.len() == 1 && !root_legs.contains_key(&end) { fin.dep_min } else { fin.t + last.dwell_s };
        push_hold(&mut items, fin.t, fin_end, last.s);
        if items.is_empty() {
            items.push(ProfileItem::Hold { t0: anchor.t, t1: anchor.t, s: anchor.s });
        }
        Profile::new(items)
    }
}

fn push_hold(items: &mut Vec<ProfileItem>, t0: f64, t1: f64, s: f64) {
    if t1 - t0 <= EPS {
        return;
    }
    if let Some(ProfileItem::Hold { t1: prev_t1, s: ps, .. }) = items.last_mut() {
        if (*ps - s).abs() < 1e-9 && (*prev_t1 - t0).abs() < 1e-6 {
            *prev_t1 = t1;
            return;
        }
    }
    items.push(ProfileItem::Hold { t0, t1, s });
}
