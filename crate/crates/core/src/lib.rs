//! Deterministic multi-AGV container terminal simulator and electric AGV
//! sizing toolkit.

pub mod cli;
pub mod comms;
pub mod navigation;
pub mod powertrain;
pub mod rng;
pub mod sim;
pub mod supervisor;
pub mod terminal_map;
pub mod vehicle;
