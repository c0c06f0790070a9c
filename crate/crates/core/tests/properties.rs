use proptest::prelude::*;

use quayfleet::comms::{decode, encode, Endpoint, Message, Payload, StatusReport};
use quayfleet::navigation::{dead_reckon, heading_delta, odometry_distance, PoseEstimate};
use quayfleet::powertrain::{size_battery_pack, Chemistry};
use quayfleet::supervisor::profile::{fastest_motion, Profile, ProfileItem, SpeedPiece};
use quayfleet::supervisor::reservation::{complement_within, merge_intervals};
use quayfleet::supervisor::{Occupancy, OccupancyKind, Pose, ReservationTable};
use quayfleet::terminal_map::{apportion, Cell};
use quayfleet::vehicle::Mode;

fn interval() -> impl Strategy<Value = (f64, f64)> {
    (0.0..100.0f64, 0.0..20.0f64).prop_map(|(a, w)| (a, a + w))
}

fn occupancy() -> impl Strategy<Value = Occupancy> {
    (0u32..6, 0u32..6, any::<bool>(), interval()).prop_map(|(r, c, parked, (start, end))| Occupancy {
        cell: Cell::new(r, c),
        kind: if parked { OccupancyKind::Parked } else { OccupancyKind::Moving },
        start,
        end,
    })
}

proptest! {
    #[test]
    fn reservation_conflicts_are_symmetric(a in occupancy(), b in occupancy()) {
        let table = |agv: u32, o: &Occupancy| {
            let mut t = ReservationTable::new(6, 6, 4.0, 2.5, 1.0);
            t.insert(agv, std::slice::from_ref(o), false);
            t
        };
        prop_assert_eq!(table(1, &a).conflicts(2, &[b]), table(2, &b).conflicts(1, &[a]));
        prop_assert!(!table(1, &a).conflicts(1, &[b]));
    }

    #[test]
    fn shifts_outside_forbidden_set_are_clear(a in occupancy(), b in occupancy(), d in -50.0..50.0f64) {
        let mut t = ReservationTable::new(6, 6, 4.0, 2.5, 1.0);
        t.insert(1, &[a], false);
        let forbidden = t.forbidden_shifts(2, &[b]);
        let moved = Occupancy { start: b.start + d, end: b.end + d, ..b };
        let inside = forbidden.iter().any(|w| d > w.0 + 1e-6 && d < w.1 - 1e-6);
        let outside = forbidden.iter().all(|w| d < w.0 - 1e-6 || d > w.1 + 1e-6);
        if inside {
            prop_assert!(t.conflicts(2, &[moved]));
        }
        if outside {
            prop_assert!(!t.conflicts(2, &[moved]));
        }
    }

    #[test]
    fn merged_intervals_partition_the_union(v in prop::collection::vec(interval(), 0..12), probe in 0.0..130.0f64) {
        let m = merge_intervals(v.clone());
        for w in m.windows(2) {
            prop_assert!(w[0].1 < w[1].0);
        }
        let in_raw = v.iter().any(|w| probe > w.0 && probe < w.1);
        let in_merged = m.iter().any(|w| probe > w.0 && probe < w.1);
        if in_raw {
            prop_assert!(in_merged);
        }
        let free = complement_within(&m, 0.0, 200.0);
        let in_free = free.iter().any(|w| probe >= w.0 && probe <= w.1);
        prop_assert!(!(in_free && in_raw));
        if !in_merged {
            prop_assert!(in_free);
        }
    }

    #[test]
    fn fastest_motion_respects_limits(
        pieces in prop::collection::vec((0.5..30.0f64, prop::sample::select(vec![1.0, 3.0, 6.0])), 1..6),
        a_max in 0.5..3.0f64,
    ) {
        let mut s = 0.0;
        let sp: Vec<SpeedPiece> = pieces.iter().map(|&(len, v)| { let p = SpeedPiece { s0: s, s1: s + len, v_max: v }; s += len; p }).collect();
        let items = fastest_motion(&sp, 0.0, a_max).expect("from rest is always feasible");
        let p = Profile::new(items.clone());
        prop_assert!((p.end_s() - s).abs() < 1e-9);
        for it in &items {
            if let ProfileItem::Ramp { s0, s1, v0, v1, .. } = *it {
                // v^2 is linear in s along a ramp; check it at every piece edge it covers.
                let v_at = |x: f64| (v0 * v0 + (v1 * v1 - v0 * v0) * (x - s0) / (s1 - s0)).max(0.0).sqrt();
                for q in sp.iter().filter(|q| q.s1 > s0 + 1e-9 && q.s0 < s1 - 1e-9) {
                    prop_assert!(v_at(q.s0.max(s0)).max(v_at(q.s1.min(s1))) <= q.v_max + 1e-9);
                }
                prop_assert!((v1 * v1 - v0 * v0).abs() / (2.0 * (s1 - s0)) <= a_max + 1e-9);
            }
        }
        let (_, v_end, _) = p.state_at(p.end_time());
        prop_assert!(v_end.abs() < 1e-9);
    }

    #[test]
    fn status_frames_round_trip(
        seq in any::<u64>(), id in 1u32..1000, t in 0.0..1e5f64, x in -1e4..1e4f64, y in -1e4..1e4f64, h in -3.14..3.14f64,
        speed in 0.0..6.0f64, wh in 0.0..3e5f64, rev in prop::option::of(0u32..1000), done in prop::option::of(0u32..1000),
    ) {
        let msg = Message {
            seq,
            sender: Endpoint::Vehicle(id),
            recipient: Endpoint::Supervisor,
            payload: Payload::Status(StatusReport {
                t,
                estimate: PoseEstimate::exact(Pose::new(x, y, h)),
                mode: Mode::MoveToTarget,
                speed,
                battery_wh: wh,
                path_progress: 0.0,
                revision: rev,
                completed_revision: done,
            }),
        };
        prop_assert_eq!(decode(&encode(&msg)).unwrap(), msg);
    }

    #[test]
    fn decode_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..256)) {
        let _ = decode(&bytes);
    }

    #[test]
    fn battery_pack_is_minimal(v in 12.0..1000.0f64, wh in 1000.0..500_000.0f64, k in 0usize..6) {
        let cell = Chemistry::ALL[k].cell();
        let p = size_battery_pack(cell, v, wh);
        let (s, n) = (f64::from(p.series_count), f64::from(p.parallel_count));
        prop_assert!(s * cell.cell_voltage_v >= v * (1.0 - 1e-12));
        prop_assert!((s - 1.0) * cell.cell_voltage_v < v);
        prop_assert!(s * n * cell.cell_energy_wh >= wh * (1.0 - 1e-12));
        prop_assert!(n == 1.0 || s * (n - 1.0) * cell.cell_energy_wh < wh);
    }

    #[test]
    fn straight_dead_reckoning_is_exact(x in -100.0..100.0f64, y in -100.0..100.0f64, h in -3.0..3.0f64, d in 0.0..50.0f64) {
        let e = dead_reckon(PoseEstimate::exact(Pose::new(x, y, h)), d, d, 3.0);
        prop_assert!((e.pose.x - (x + d * h.cos())).abs() < 1e-9);
        prop_assert!((e.pose.y - (y + d * h.sin())).abs() < 1e-9);
        prop_assert!((e.pose.heading - h).abs() < 1e-12);
    }

    #[test]
    fn heading_delta_is_antisymmetric(a in -5.0..5.0f64, b in -5.0..5.0f64, d in 0.5..5.0f64) {
        prop_assert!((heading_delta(a, b, d) + heading_delta(b, a, d)).abs() < 1e-12);
    }

    #[test]
    fn odometry_is_linear_in_pulses(n in -100_000i64..100_000, m in -100_000i64..100_000) {
        let f = |c| odometry_distance(c, 1024.0, 0.25);
        prop_assert!((f(n + m) - f(n) - f(m)).abs() < 1e-9);
    }

    #[test]
    fn apportion_conserves_count(a in 0.0..1.0f64, b in 0.0..1.0f64, count in 0usize..200) {
        let total = a + b + 1.0;
        let out = apportion([a / total, b / total, 1.0 / total], count);
        prop_assert_eq!(out.iter().sum::<usize>(), count);
    }
}
