//! Dead reckoning from exact wheel arcs around a 10 m square with on-the-spot
//! quarter turns; the estimate closes on the start pose.

use std::f64::consts::FRAC_PI_2;

use quayfleet::navigation::{dead_reckon, PoseEstimate};
use quayfleet::supervisor::Pose;

fn main() {
    let d = 3.0;
    let start = PoseEstimate::exact(Pose::new(0.0, 0.0, 0.0));
    let mut est = start;
    for side in 0..4 {
        for _ in 0..100 {
            est = dead_reckon(est, 0.1, 0.1, d);
        }
        // Pivot: wheels run equal arcs in opposite directions.
        let arc = FRAC_PI_2 * d / 2.0;
        est = dead_reckon(est, -arc, arc, d);
        println!("after side {}: x={:+.6} y={:+.6} heading={:+.6}", side + 1, est.pose.x, est.pose.y, est.pose.heading);
    }
    let gap = (est.pose.x - start.pose.x).hypot(est.pose.y - start.pose.y);
    println!("closure error {gap:.2e} m");
}
