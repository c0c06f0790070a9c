//! Central traffic control: routing, velocity scheduling against a
//! reservation table, priority override and fleet bookkeeping.

pub mod conflicts;
pub mod fleet;
pub mod geometry;
pub mod planner;
pub mod profile;
pub mod reservation;
pub mod schedule;
pub mod trajectory;

use thiserror::Error;

use crate::terminal_map::Cell;

pub use conflicts::{detect_conflicts, Conflict};
pub use fleet::{
    assign_mission, check_lost, on_status, profile_energy_wh, reposition, AgvRecord, Assignment, FleetView, SupervisorConfig, SupervisorEvent,
};
pub use geometry::{Pose, Segment, SegmentKind};
pub use planner::{path_cost, plan_path};
pub use profile::{Profile, ProfileItem};
pub use reservation::{Occupancy, OccupancyKind, ReservationTable};
pub use schedule::{Anchor, Scheduler};
pub use trajectory::{Stop, StopAction, Trajectory};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SupervisorError {
    #[error("no route from {from} to {to}")]
    Unreachable { from: Cell, to: Cell },
    #[error("no feasible timing for AGV {agv} within the horizon")]
    Unschedulable { agv: u32 },
    #[error("no standby vehicle can take the job")]
    NoVehicle,
    #[error("status from unknown vehicle {0}")]
    UnknownVehicle(u32),
}
