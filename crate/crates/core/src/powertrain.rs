//! Electric drivetrain sizing and battery arithmetic.
//!
//! Traction force is inertial force plus rolling resistance:
//! `F = m·a + c·(m_agv + m_container)·g`, with `m = m_agv + m_container`.
//! Torque is `F·r_wheel`, power is `F·v`, and the wheel speed for a ground
//! speed `v` is `v / (2π·r) · 60` rpm.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PowertrainError {
    #[error("battery depleted after drawing {consumed_wh:.6} Wh")]
    Depleted { consumed_wh: f64 },
    #[error("invalid AGV parameters: {0}")]
    InvalidParams(String),
    #[error("unknown battery chemistry `{0}`")]
    UnknownChemistry(String),
}

/// ISO container classes with their tare and payload limits in kilograms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ContainerClass {
    Std20,
    Std40,
    HighCube40,
    HighCube45,
}

impl ContainerClass {
    pub const ALL: [ContainerClass; 4] = [
        ContainerClass::Std20,
        ContainerClass::Std40,
        ContainerClass::HighCube40,
        ContainerClass::HighCube45,
    ];

    pub fn tare_kg(self) -> f64 {
        match self {
            ContainerClass::Std20 => 2220.0,
            ContainerClass::Std40 => 3740.0,
            ContainerClass::HighCube40 => 3950.0,
            ContainerClass::HighCube45 => 4470.0,
        }
    }

    pub fn max_load_kg(self) -> f64 {
        match self {
            ContainerClass::Std20 => 22100.0,
            ContainerClass::Std40 => 27397.0,
            ContainerClass::HighCube40 => 29600.0,
            ContainerClass::HighCube45 => 28390.0,
        }
    }

    /// Gross container mass at maximum loading.
    pub fn total_kg(self) -> f64 {
        self.tare_kg() + self.max_load_kg()
    }

    pub fn label(self) -> &'static str {
        match self {
            ContainerClass::Std20 => "20' standard",
            ContainerClass::Std40 => "40' standard",
            ContainerClass::HighCube40 => "40' high cube",
            ContainerClass::HighCube45 => "45' high cube",
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }
}

impl fmt::Display for ContainerClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Physical constants of one AGV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgvParams {
    pub dead_weight_kg: f64,
    pub wheel_radius_m: f64,
    pub v_max_straight: f64,
    pub v_max_curve: f64,
    pub v_max_crab: f64,
    pub a_max: f64,
    /// Rolling resistance coefficient.
    pub rolling_coeff_c: f64,
    pub gravity: f64,
    /// Lateral wheel separation used for differential heading.
    pub wheelbase_d_m: f64,
    pub safety_radius_m: f64,
}

impl Default for AgvParams {
    fn default() -> Self {
        Self {
            dead_weight_kg: 30_000.0,
            wheel_radius_m: 0.25,
            v_max_straight: 6.0,
            v_max_curve: 3.0,
            v_max_crab: 1.0,
            a_max: 2.0,
            rolling_coeff_c: 0.015,
            gravity: 9.8,
            wheelbase_d_m: 3.0,
            safety_radius_m: 2.5,
        }
    }
}

impl AgvParams {
    pub fn validate(&self) -> Result<(), PowertrainError> {
        let positive = [
            ("dead_weight_kg", self.dead_weight_kg),
            ("wheel_radius_m", self.wheel_radius_m),
            ("v_max_straight", self.v_max_straight),
            ("v_max_curve", self.v_max_curve),
            ("v_max_crab", self.v_max_crab),
            ("a_max", self.a_max),
            ("rolling_coeff_c", self.rolling_coeff_c),
            ("gravity", self.gravity),
            ("wheelbase_d_m", self.wheelbase_d_m),
            ("safety_radius_m", self.safety_radius_m),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(PowertrainError::InvalidParams(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(self.v_max_crab <= self.v_max_curve && self.v_max_curve <= self.v_max_straight) {
            return Err(PowertrainError::InvalidParams(
                "speed limits must satisfy crab <= curve <= straight".into(),
            ));
        }
        Ok(())
    }

    pub fn total_mass_kg(&self, container: Option<ContainerClass>) -> f64 {
        self.dead_weight_kg + container.map_or(0.0, ContainerClass::total_kg)
    }
}

/// Total traction force in newtons.
///
/// Negative accelerations are accepted; the inertial term then reduces the
/// force, which is what a sizing calculation wants. Runtime energy accounting
/// uses [`traction_force_drive`] instead.
pub fn required_force(params: &AgvParams, container: Option<ContainerClass>, accel: f64) -> f64 {
    let m = params.total_mass_kg(container);
    let normal = m * params.gravity;
    m * accel + params.rolling_coeff_c * normal
}

/// Force drawn from the battery while driving: no regeneration, so braking
/// phases cost rolling resistance only.
pub fn traction_force_drive(params: &AgvParams, container: Option<ContainerClass>, accel: f64) -> f64 {
    required_force(params, container, accel.max(0.0))
}

pub fn motor_torque(force_n: f64, wheel_radius_m: f64) -> f64 {
    force_n * wheel_radius_m
}

pub fn motor_power(force_n: f64, speed_mps: f64) -> f64 {
    force_n * speed_mps
}

pub fn wheel_speed_rpm(speed_mps: f64, wheel_radius_m: f64) -> f64 {
    speed_mps / (2.0 * PI * wheel_radius_m) * 60.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotorSpec {
    pub torque_nm: f64,
    pub power_w: f64,
    pub speed_rpm: f64,
    pub motor_count: u32,
    pub gear_ratio: f64,
}

/// One row of the sizing table: the drivetrain total plus two realizations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizingRow {
    pub container: ContainerClass,
    pub force_n: f64,
    pub total: MotorSpec,
    /// One hub motor per wheel, no reduction.
    pub per_wheel: MotorSpec,
    /// One central motor behind a 2:1 reducer.
    pub single_geared: MotorSpec,
}

/// Reference figures (kNm, kW, rpm) per container class.
pub fn reference_figures(container: ContainerClass) -> (f64, f64, Option<f64>) {
    match container {
        ContainerClass::Std20 => (30.0, 700.0, Some(228.0)),
        ContainerClass::Std40 => (33.0, 789.0, None),
        ContainerClass::HighCube40 => (35.0, 820.0, None),
        ContainerClass::HighCube45 => (34.0, 809.0, None),
    }
}

/// Reference single-motor realization: (kW, rpm, kNm).
pub const REFERENCE_SINGLE_MOTOR: (f64, f64, f64) = (855.0, 462.0, 17.7);
/// Reference per-wheel realization: (kW, rpm, kNm).
pub const REFERENCE_PER_WHEEL: (f64, f64, f64) = (225.0, 229.3, 9.37);

const SINGLE_MOTOR_GEAR_RATIO: f64 = 2.0;

/// Sizing at full acceleration and top straight-line speed, one row per class.
pub fn agv_spec_table(params: &AgvParams) -> Vec<SizingRow> {
    ContainerClass::ALL
        .iter()
        .map(|&container| {
            let force_n = required_force(params, Some(container), params.a_max);
            let total = MotorSpec {
                torque_nm: motor_torque(force_n, params.wheel_radius_m),
                power_w: motor_power(force_n, params.v_max_straight),
                speed_rpm: wheel_speed_rpm(params.v_max_straight, params.wheel_radius_m),
                motor_count: 1,
                gear_ratio: 1.0,
            };
            let per_wheel = MotorSpec {
                torque_nm: total.torque_nm / 4.0,
                power_w: total.power_w / 4.0,
                speed_rpm: total.speed_rpm,
                motor_count: 4,
                gear_ratio: 1.0,
            };
            let single_geared = MotorSpec {
                torque_nm: total.torque_nm / SINGLE_MOTOR_GEAR_RATIO,
                power_w: total.power_w,
                speed_rpm: total.speed_rpm * SINGLE_MOTOR_GEAR_RATIO,
                motor_count: 1,
                gear_ratio: SINGLE_MOTOR_GEAR_RATIO,
            };
            SizingRow { container, force_n, total, per_wheel, single_geared }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Chemistry {
    LiFePO4,
    LeadAcid,
    NiCd,
    NiMH,
    LiMnNiCo,
    LiCoO2,
}

impl Chemistry {
    pub const ALL: [Chemistry; 6] = [
        Chemistry::LiFePO4,
        Chemistry::LeadAcid,
        Chemistry::NiCd,
        Chemistry::NiMH,
        Chemistry::LiMnNiCo,
        Chemistry::LiCoO2,
    ];

    pub fn cell(self) -> BatteryCell {
        let (v, wh) = match self {
            Chemistry::LiFePO4 => (3.2, 120.0),
            Chemistry::LeadAcid => (2.0, 35.0),
            Chemistry::NiCd => (1.2, 40.0),
            Chemistry::NiMH => (1.2, 80.0),
            Chemistry::LiMnNiCo => (3.7, 160.0),
            Chemistry::LiCoO2 => (3.7, 200.0),
        };
        BatteryCell { chemistry: self, cell_voltage_v: v, cell_energy_wh: wh }
    }
}

impl std::str::FromStr for Chemistry {
    type Err = PowertrainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        Ok(match norm.as_str() {
            "lifepo4" | "lfp" => Chemistry::LiFePO4,
            "leadacid" | "pb" => Chemistry::LeadAcid,
            "nicd" => Chemistry::NiCd,
            "nimh" => Chemistry::NiMH,
            "limnnico" | "nmc" => Chemistry::LiMnNiCo,
            "licoo2" | "lco" => Chemistry::LiCoO2,
            _ => return Err(PowertrainError::UnknownChemistry(s.to_string())),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryCell {
    pub chemistry: Chemistry,
    pub cell_voltage_v: f64,
    pub cell_energy_wh: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryPack {
    pub cell: BatteryCell,
    pub series_count: u32,
    pub parallel_count: u32,
    pub capacity_wh: f64,
    pub voltage_v: f64,
    pub remaining_wh: f64,
}

/// Smallest integer `n` with `n >= x`, forgiving representation error in `x`.
fn ceil_count(x: f64) -> u32 {
    let n = (x - x.abs() * 1e-12).ceil();
    n.max(1.0) as u32
}

/// Series cells reach the bus voltage, parallel strings reach the energy.
pub fn size_battery_pack(cell: BatteryCell, bus_voltage_v: f64, required_energy_wh: f64) -> BatteryPack {
    let series_count = ceil_count(bus_voltage_v / cell.cell_voltage_v);
    let string_wh = f64::from(series_count) * cell.cell_energy_wh;
    let parallel_count = ceil_count(required_energy_wh / string_wh);
    BatteryPack::new(cell, series_count, parallel_count)
}

impl BatteryPack {
    pub fn new(cell: BatteryCell, series_count: u32, parallel_count: u32) -> Self {
        let capacity_wh = f64::from(series_count) * f64::from(parallel_count) * cell.cell_energy_wh;
        Self {
            cell,
            series_count,
            parallel_count,
            capacity_wh,
            voltage_v: f64::from(series_count) * cell.cell_voltage_v,
            remaining_wh: capacity_wh,
        }
    }

    pub fn is_depleted(&self) -> bool {
        self.remaining_wh <= 0.0
    }

    /// Draws `power_w` for `dt_s` seconds. Returns the energy actually taken.
    pub fn consume(&mut self, power_w: f64, dt_s: f64) -> Result<f64, PowertrainError> {
        let want = power_w.max(0.0) * dt_s / 3600.0;
        let taken = want.min(self.remaining_wh);
        self.remaining_wh -= taken;
        if want > 0.0 && self.remaining_wh <= 0.0 {
            self.remaining_wh = 0.0;
            return Err(PowertrainError::Depleted { consumed_wh: taken });
        }
        Ok(taken)
    }

    /// `"200S9P, 216.0 kWh, 640.0 V"`
    pub fn summary(&self) -> String {
        format!(
            "{}S{}P, {:.1} kWh, {:.1} V",
            self.series_count,
            self.parallel_count,
            self.capacity_wh / 1000.0,
            self.voltage_v
        )
    }
}

/// Functional form of [`BatteryPack::consume`].
pub fn consume_energy(pack: BatteryPack, power_w: f64, dt_s: f64) -> (BatteryPack, Result<f64, PowertrainError>) {
    let mut next = pack;
    let r = next.consume(power_w, dt_s);
    (next, r)
}
