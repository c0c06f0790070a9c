//! Seeded 1 km drives comparing dead reckoning, raw GPS and the fused
//! estimate, plus the differential correction of the common GPS bias.

use quayfleet::navigation::{nav_run, NoiseModel};

fn main() {
    let noise = NoiseModel::default();
    println!("RMS position error (m) and mean radial GPS error (m)");
    println!("{:>4} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9}", "seed", "fused", "fused raw", "odometry", "raw gps", "raw rad", "dgps rad");
    for seed in 0..20 {
        let r = nav_run(seed, &noise, 1000.0);
        println!(
            "{seed:>4} {:>9.2} {:>9.2} {:>9.2} {:>9.2} {:>9.2} {:>9.2}",
            r.rms_fused, r.rms_fused_raw_fix, r.rms_odometry, r.rms_raw_gps, r.mean_raw_radial, r.mean_dgps_radial
        );
    }
}
