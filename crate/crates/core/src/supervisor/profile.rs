//! Time-parametrized motion along a path's arc length.
//!
//! A profile is a gap-free sequence of constant-acceleration ramps and
//! stationary holds with absolute start times. Motion between two rests is
//! the fastest one admitted by per-piece speed limits and the symmetric
//! acceleration bound: the pointwise minimum of a forward (acceleration)
//! and backward (braking) envelope in `v²`.

use serde::{Deserialize, Serialize};

const EPS: f64 = 1e-9;

/// A speed-limited stretch `[s0, s1]` of arc length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedPiece {
    pub s0: f64,
    pub s1: f64,
    pub v_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ProfileItem {
    Ramp { t0: f64, s0: f64, s1: f64, v0: f64, v1: f64 },
    Hold { t0: f64, t1: f64, s: f64 },
}

impl ProfileItem {
    pub fn t0(&self) -> f64 {
        match *self {
            ProfileItem::Ramp { t0, .. } | ProfileItem::Hold { t0, .. } => t0,
        }
    }

    pub fn t1(&self) -> f64 {
        match *self {
            ProfileItem::Ramp { t0, s0, s1, v0, v1 } => t0 + ramp_duration(s1 - s0, v0, v1),
            ProfileItem::Hold { t1, .. } => t1,
        }
    }

    pub fn s_range(&self) -> (f64, f64) {
        match *self {
            ProfileItem::Ramp { s0, s1, .. } => (s0, s1),
            ProfileItem::Hold { s, .. } => (s, s),
        }
    }

    pub fn shifted(&self, dt: f64) -> Self {
        let mut x = *self;
        match &mut x {
            ProfileItem::Ramp { t0, .. } => *t0 += dt,
            ProfileItem::Hold { t0, t1, .. } => {
                *t0 += dt;
                *t1 += dt;
            }
        }
        x
    }

    /// Position, speed and acceleration at `t`, clamped into the item.
    pub fn state_at(&self, t: f64) -> (f64, f64, f64) {
        match *self {
            ProfileItem::Hold { s, .. } => (s, 0.0, 0.0),
            ProfileItem::Ramp { t0, s0, s1, v0, v1 } => {
                let ds = s1 - s0;
                let dur = ramp_duration(ds, v0, v1);
                if dur <= 0.0 {
                    return (s1, v1, 0.0);
                }
                let acc = (v1 - v0) / dur;
                let tau = (t - t0).clamp(0.0, dur);
                (s0 + v0 * tau + 0.5 * acc * tau * tau, v0 + acc * tau, acc)
            }
        }
    }

    /// Time since the item start at which arc length `s` is reached.
    fn time_to(&self, s: f64) -> f64 {
        match *self {
            ProfileItem::Hold { .. } => 0.0,
            ProfileItem::Ramp { s0, s1, v0, v1, .. } => {
                let ds = s1 - s0;
                if ds <= 0.0 {
                    return 0.0;
                }
                let x = (s - s0).clamp(0.0, ds);
                let vs2 = v0 * v0 + (v1 * v1 - v0 * v0) * x / ds;
                let vs = vs2.max(0.0).sqrt();
                if v0 + vs <= 0.0 {
                    0.0
                } else {
                    2.0 * x / (v0 + vs)
                }
            }
        }
    }
}

pub fn ramp_duration(ds: f64, v0: f64, v1: f64) -> f64 {
    if ds <= 0.0 {
        0.0
    } else {
        2.0 * ds / (v0 + v1)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub items: Vec<ProfileItem>,
}

impl Profile {
    pub fn new(items: Vec<ProfileItem>) -> Self {
        Self { items }
    }

    pub fn start_time(&self) -> f64 {
        self.items.first().map_or(0.0, ProfileItem::t0)
    }

    pub fn end_time(&self) -> f64 {
        self.items.last().map_or(0.0, ProfileItem::t1)
    }

    pub fn end_s(&self) -> f64 {
        self.items.last().map_or(0.0, |i| i.s_range().1)
    }

    pub fn start_s(&self) -> f64 {
        self.items.first().map_or(0.0, |i| i.s_range().0)
    }

    fn item_index_at(&self, t: f64) -> Option<usize> {
        if self.items.is_empty() {
            return None;
        }
        let k = self.items.partition_point(|i| i.t1() < t);
        Some(k.min(self.items.len() - 1))
    }

    /// `(s, v, a)` at time `t`. Before the start the vehicle rests at the
    /// first position, after the end at the last.
    pub fn state_at(&self, t: f64) -> (f64, f64, f64) {
        match self.item_index_at(t) {
            None => (0.0, 0.0, 0.0),
            Some(_) if t < self.start_time() => (self.start_s(), 0.0, 0.0),
            Some(_) if t >= self.end_time() => (self.end_s(), 0.0, 0.0),
            Some(k) => self.items[k].state_at(t),
        }
    }

    /// Earliest time at which arc length `s` is reached.
    pub fn first_time_at(&self, s: f64) -> f64 {
        for it in &self.items {
            let (a, b) = it.s_range();
            if s <= b + EPS && s >= a - EPS {
                return it.t0() + it.time_to(s);
            }
            if s < a {
                return it.t0();
            }
        }
        self.end_time()
    }

    /// Latest time at which the vehicle is at arc length `s` (the end of a
    /// hold when it rests there).
    pub fn last_time_at(&self, s: f64) -> f64 {
        for it in self.items.iter().rev() {
            let (a, b) = it.s_range();
            if s <= b + EPS && s >= a - EPS {
                return match it {
                    ProfileItem::Hold { t1, .. } => *t1,
                    ProfileItem::Ramp { t0, .. } => t0 + it.time_to(s),
                };
            }
            if s > b {
                return it.t1();
            }
        }
        self.start_time()
    }

    /// Holds as `(t0, t1, s)`.
    pub fn holds(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.items.iter().filter_map(|i| match *i {
            ProfileItem::Hold { t0, t1, s } => Some((t0, t1, s)),
            _ => None,
        })
    }

    /// Items up to time `t`, the straddling one cut at `t`.
    pub fn prefix_until(&self, t: f64) -> Vec<ProfileItem> {
        let mut out = Vec::new();
        for it in &self.items {
            if it.t1() <= t + EPS {
                out.push(*it);
                continue;
            }
            if it.t0() < t - EPS {
                match *it {
                    ProfileItem::Hold { t0, s, .. } => out.push(ProfileItem::Hold { t0, t1: t, s }),
                    ProfileItem::Ramp { t0, s0, v0, .. } => {
                        let (s, v, _) = it.state_at(t);
                        out.push(ProfileItem::Ramp { t0, s0, s1: s, v0, v1: v });
                    }
                }
            }
            break;
        }
        out
    }

    pub fn max_speed(&self) -> f64 {
        self.items
            .iter()
            .map(|i| match *i {
                ProfileItem::Ramp { v0, v1, .. } => v0.max(v1),
                ProfileItem::Hold { .. } => 0.0,
            })
            .fold(0.0, f64::max)
    }
}

/// Fastest motion over contiguous `pieces` starting at speed `v_start` and
/// ending at rest, as ramps with times relative to the start. `None` when
/// the start speed exceeds the first limit or cannot be braked in time.
pub fn fastest_motion(pieces: &[SpeedPiece], v_start: f64, a_max: f64) -> Option<Vec<ProfileItem>> {
    let pieces: Vec<SpeedPiece> = pieces.iter().copied().filter(|p| p.s1 - p.s0 > EPS).collect();
    if pieces.is_empty() {
        return if v_start <= EPS { Some(Vec::new()) } else { None };
    }
    let n = pieces.len();
    let two_a = 2.0 * a_max;
    let lim: Vec<f64> = pieces.iter().map(|p| p.v_max * p.v_max).collect();
    let len: Vec<f64> = pieces.iter().map(|p| p.s1 - p.s0).collect();
    let v0sq = v_start * v_start;
    let mut fwd = vec![0.0; n];
    fwd[0] = v0sq;
    for k in 1..n {
        fwd[k] = (fwd[k - 1] + two_a * len[k - 1]).min(lim[k - 1]).min(lim[k]);
    }
    let mut bwd = vec![0.0; n];
    for k in (0..n - 1).rev() {
        bwd[k] = (bwd[k + 1] + two_a * len[k + 1]).min(lim[k + 1]).min(lim[k]);
    }
    let tol = 1e-7 * (1.0 + v0sq);
    if v0sq > lim[0] + tol || v0sq > bwd[0] + two_a * len[0] + tol {
        return None;
    }

    let mut ramps: Vec<ProfileItem> = Vec::new();
    let mut t = 0.0;
    for k in 0..n {
        let SpeedPiece { s0: p, s1: q, .. } = pieces[k];
        let (f, l, b) = (fwd[k], lim[k], bwd[k]);
        let env = |s: f64| (f + two_a * (s - p)).min(l).min(b + two_a * (q - s)).max(0.0);
        let mut cuts = vec![p, q, p + (l - f) / two_a, q - (l - b) / two_a, 0.5 * (p + q) + (b - f) / (2.0 * two_a)];
        cuts.retain(|&c| c >= p && c <= q);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup_by(|a, b| (*a - *b).abs() < EPS);
        for w in cuts.windows(2) {
            let (u, v) = (w[0], w[1]);
            let (va, vb) = (if u == p && k == 0 { v_start } else { env(u).sqrt() }, env(v).sqrt());
            let dur = ramp_duration(v - u, va, vb);
            push_merged(&mut ramps, ProfileItem::Ramp { t0: t, s0: u, s1: v, v0: va, v1: vb });
            t += dur;
        }
    }
    Some(ramps)
}

/// Appends a ramp, fusing it into the previous one when accelerations match.
fn push_merged(out: &mut Vec<ProfileItem>, item: ProfileItem) {
    if let (Some(ProfileItem::Ramp { t0, s0, s1: ps1, v0, v1: pv1 }), ProfileItem::Ramp { s1, v1, .. }) = (out.last().copied(), item) {
        let acc = |a: f64, b: f64, ds: f64| (b * b - a * a) / (2.0 * ds);
        let ds_prev = ps1 - s0;
        let ds_new = s1 - ps1;
        if ds_prev > EPS && ds_new > EPS && (acc(v0, pv1, ds_prev) - acc(pv1, v1, ds_new)).abs() < 1e-9 {
            *out.last_mut().unwrap() = ProfileItem::Ramp { t0, s0, s1, v0, v1 };
            return;
        }
    }
    out.push(item);
}

/// Restricts `pieces` to `[a, b]`.
pub fn clip_pieces(pieces: &[SpeedPiece], a: f64, b: f64) -> Vec<SpeedPiece> {
    pieces
        .iter()
        .filter_map(|p| {
            let s0 = p.s0.max(a);
            let s1 = p.s1.min(b);
            (s1 - s0 > EPS).then_some(SpeedPiece { s0, s1, v_max: p.v_max })
        })
        .collect()
}

pub fn duration_of(items: &[ProfileItem]) -> f64 {
    match (items.first(), items.last()) {
        (Some(f), Some(l)) => l.t1() - f.t0(),
        _ => 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn triangle_when_short() {
        // 4 m at 2 m/s²: peak sqrt(2·2·2) = 2.83 m/s, 2·sqrt(2) s total.
        let r = fastest_motion(&[SpeedPiece { s0: 0.0, s1: 4.0, v_max: 6.0 }], 0.0, 2.0).unwrap();
        assert_eq!(r.len(), 2);
        assert_abs_diff_eq!(duration_of(&r), 2.0 * 2f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn trapezoid_when_long() {
        // 100 m: 3 s up, 3 s down covering 18 m, 82 m at 6 m/s.
        let r = fastest_motion(&[SpeedPiece { s0: 0.0, s1: 100.0, v_max: 6.0 }], 0.0, 2.0).unwrap();
        assert_abs_diff_eq!(duration_of(&r), 6.0 + 82.0 / 6.0, epsilon = 1e-12);
    }

    #[test]
    fn slows_for_curve() {
        let pieces = [
            SpeedPiece { s0: 0.0, s1: 50.0, v_max: 6.0 },
            SpeedPiece { s0: 50.0, s1: 53.0, v_max: 3.0 },
            SpeedPiece { s0: 53.0, s1: 100.0, v_max: 6.0 },
        ];
        let r = fastest_motion(&pieces, 0.0, 2.0).unwrap();
        let p = Profile::new(r);
        let t_curve = p.first_time_at(51.0);
        let (_, v, _) = p.state_at(t_curve);
        assert!(v <= 3.0 + 1e-9);
        assert!(p.max_speed() <= 6.0 + 1e-12);
    }

    #[test]
    fn rejects_unstoppable_start() {
        assert!(fastest_motion(&[SpeedPiece { s0: 0.0, s1: 1.0, v_max: 6.0 }], 5.0, 2.0).is_none());
    }

    #[test]
    fn prefix_cuts_ramp() {
        let r = fastest_motion(&[SpeedPiece { s0: 0.0, s1: 100.0, v_max: 6.0 }], 0.0, 2.0).unwrap();
        let p = Profile::new(r);
        let pre = p.prefix_until(1.0);
        let last = pre.last().unwrap();
        assert_abs_diff_eq!(last.t1(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(last.s_range().1, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn last_time_covers_hold() {
        let p = Profile::new(vec![
            ProfileItem::Hold { t0: 0.0, t1: 5.0, s: 0.0 },
            ProfileItem::Ramp { t0: 5.0, s0: 0.0, s1: 1.0, v0: 0.0, v1: 2.0 },
        ]);
        assert_abs_diff_eq!(p.last_time_at(0.0), 5.0);
        assert_abs_diff_eq!(p.first_time_at(0.0), 0.0);
        assert_abs_diff_eq!(p.first_time_at(1.0), 6.0);
    }
}
