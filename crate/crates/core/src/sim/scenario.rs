//! Scenario files: map, fleet, jobs, noise, channel and engine settings.

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::comms::ChannelModel;
use crate::navigation::{FixSource, NoiseModel};
use crate::powertrain::{size_battery_pack, AgvParams, BatteryPack, Chemistry};
use crate::supervisor::SupervisorConfig;
use crate::terminal_map::{build_map, generate_jobs_with, Cell, Job, JobGenOptions, MapSpec, TerminalMap};

pub const SCENARIO_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BatterySpec {
    pub chemistry: Chemistry,
    pub bus_voltage_v: f64,
    pub energy_wh: f64,
}

impl Default for BatterySpec {
    fn default() -> Self {
        Self { chemistry: Chemistry::LiFePO4, bus_voltage_v: 640.0, energy_wh: 200_000.0 }
    }
}

impl BatterySpec {
    pub fn pack(&self) -> BatteryPack {
        size_battery_pack(self.chemistry.cell(), self.bus_voltage_v, self.energy_wh)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetEntry {
    pub id: u32,
    /// Start cell; idle AGVs return here.
    pub start: Cell,
    #[serde(default)]
    pub params: AgvParams,
    #[serde(default)]
    pub battery: BatterySpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobGenSpec {
    pub count: usize,
    pub flow_mix: [f64; 3],
    #[serde(default)]
    pub options: JobGenOptions,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JobsSection {
    pub list: Vec<Job>,
    /// Extra jobs drawn from the engine seed.
    pub generate: Option<JobGenSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineSection {
    pub dt: f64,
    pub horizon_s: f64,
    /// Master seed; noise, channel and job generation derive from it.
    pub seed: u64,
    pub fix_source: FixSource,
    pub status_period_s: f64,
    /// Idle AGVs drive back to their start cell.
    pub return_home: bool,
    pub supervisor: SupervisorConfig,
}

impl Default for EngineSection {
    fn default() -> Self {
        Self {
            dt: 0.1,
            horizon_s: 3600.0,
            seed: 0,
            fix_source: FixSource::Dgps,
            status_period_s: 1.0,
            return_home: true,
            supervisor: SupervisorConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub version: u32,
    pub map: MapSpec,
    pub fleet: Vec<FleetEntry>,
    #[serde(default)]
    pub jobs: JobsSection,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default)]
    pub channel: ChannelModel,
    #[serde(default)]
    pub engine: EngineSection,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        serde_json::from_str(text).map_err(|e| SimError::ScenarioInvalid(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Steps per `period` seconds, at least one.
    pub fn steps_per(&self, period: f64) -> u64 {
        ((period / self.engine.dt).round() as u64).max(1)
    }

    /// Builds the map and the full job list, checking every invariant.
    pub fn prepare(&self) -> Result<(TerminalMap, Vec<Job>), SimError> {
        let bad = |m: String| Err(SimError::ScenarioInvalid(m));
        if self.version != SCENARIO_VERSION {
            return bad(format!("unsupported version {}", self.version));
        }
        let e = &self.engine;
        if !(e.dt.is_finite() && e.dt > 0.0) {
            return bad("dt must be positive".into());
        }
        if !(e.horizon_s.is_finite() && e.horizon_s > 0.0) {
            return bad("horizon must be positive".into());
        }
        if !(e.status_period_s.is_finite() && e.status_period_s > 0.0) {
            return bad("status period must be positive".into());
        }
        let c = &self.channel;
        if !(c.latency.is_finite() && c.latency >= 0.0) || !(0.0..=1.0).contains(&c.loss_rate) {
            return bad("channel latency must be >= 0 and loss in [0, 1]".into());
        }
        let map = build_map(&self.map).map_err(|e| SimError::ScenarioInvalid(e.to_string()))?;
        if self.fleet.is_empty() {
            return bad("fleet is empty".into());
        }
        for (i, a) in self.fleet.iter().enumerate() {
            a.params.validate().map_err(|e| SimError::ScenarioInvalid(format!("AGV {}: {e}", a.id)))?;
            if !map.contains(a.start) || map.kind(a.start) == crate::terminal_map::CellKind::Obstacle {
                return bad(format!("AGV {} starts off the road network", a.id));
            }
            if !(a.battery.bus_voltage_v > 0.0 && a.battery.energy_wh > 0.0) {
                return bad(format!("AGV {} battery must be positive", a.id));
            }
            for b in &self.fleet[..i] {
                if b.id == a.id {
                    return bad(format!("duplicate AGV id {}", a.id));
                }
                if b.start == a.start {
                    return bad(format!("AGVs {} and {} share a start cell", b.id, a.id));
                }
                let (pa, pb) = (map.center(a.start), map.center(b.start));
                let sep = a.params.safety_radius_m + b.params.safety_radius_m;
                if (pa.0 - pb.0).hypot(pa.1 - pb.1) < sep {
                    return bad(format!("AGVs {} and {} start closer than their safety radii", b.id, a.id));
                }
            }
        }
        let mut jobs = self.jobs.list.clone();
        if let Some(g) = &self.jobs.generate {
            let base = jobs.iter().map(|j| j.id + 1).max().unwrap_or(0);
            let extra = generate_jobs_with(&map, g.flow_mix, g.count, self.engine.seed, &g.options)
                .map_err(|e| SimError::ScenarioInvalid(e.to_string()))?;
            jobs.extend(extra.into_iter().map(|mut j| {
                j.id += base;
                j
            }));
        }
        for (i, j) in jobs.iter().enumerate() {
            if !j.endpoints_valid(&map) {
                return bad(format!("job {} endpoints do not match its flow", j.id));
            }
            if !(j.release_time.is_finite() && j.release_time >= 0.0) {
                return bad(format!("job {} has a bad release time", j.id));
            }
            if jobs[..i].iter().any(|k| k.id == j.id) {
                return bad(format!("duplicate job id {}", j.id));
            }
        }
        Ok((map, jobs))
    }

    /// Noise and channel with their seeds taken from the engine seed.
    pub fn seeded_models(&self) -> (NoiseModel, ChannelModel) {
        let mut noise = self.noise.clone();
        noise.seed = self.engine.seed;
        let mut channel = self.channel;
        channel.seed = self.engine.seed;
        (noise, channel)
    }
}
