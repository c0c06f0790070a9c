//! Traction force, torque, power and wheel speed per container class,
//! plus the two motor realizations.

use quayfleet::powertrain::{agv_spec_table, reference_figures, AgvParams};

fn main() {
    let params = AgvParams::default();
    println!("{:<14} {:>9} {:>10} {:>10} {:>9}", "class", "force kN", "torque kNm", "power kW", "wheel rpm");
    for row in agv_spec_table(&params) {
        let (ref_torque, ref_power, _) = reference_figures(row.container);
        println!(
            "{:<14} {:>9.2} {:>10.2} {:>10.2} {:>9.2}   (reference {ref_torque} kNm, {ref_power} kW)",
            row.container.label(),
            row.force_n / 1e3,
            row.total.torque_nm / 1e3,
            row.total.power_w / 1e3,
            row.total.speed_rpm,
        );
    }
    let first = &agv_spec_table(&params)[0];
    println!(
        "per-wheel motors: 4 x {:.2} kW at {:.1} rpm; single motor behind {}:1 reducer: {:.1} rpm",
        first.per_wheel.power_w / 1e3,
        first.per_wheel.speed_rpm,
        first.single_geared.gear_ratio,
        first.single_geared.speed_rpm
    );
}
