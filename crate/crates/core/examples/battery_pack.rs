//! Pack sizing for each cell chemistry, then draining a pack at constant power.

use quayfleet::powertrain::{size_battery_pack, Chemistry};

fn main() {
    for chem in Chemistry::ALL {
        let pack = size_battery_pack(chem.cell(), 640.0, 200_000.0);
        println!("{chem:?}: {}", pack.summary());
    }

    let mut pack = size_battery_pack(Chemistry::LiFePO4.cell(), 640.0, 200_000.0);
    let power_w = 700_000.0;
    let mut seconds = 0u32;
    while pack.consume(power_w, 1.0).is_ok() {
        seconds += 1;
    }
    println!("700 kW continuous empties the LiFePO4 pack after {seconds} s");
}
