//! Tracking, consensus and formation control for second-order nonholonomic
//! robots on SE(2).

pub mod controllers;
pub mod dynamics;
pub mod formation;
pub mod liegroup;
pub mod network;
pub mod scenario;
pub mod sim;

pub use controllers::{Gains, TrackingContext};
pub use dynamics::{ControlInput, InertiaParams, RelativeState, RobotState};
pub use formation::{FormationSpec, TransformedLeader};
pub use liegroup::{ExpCoords, LogBranch, Pose, Twist};
pub use network::{Link, Topology, VirtualLeader};
pub use scenario::{Mode, Scenario, ScenarioError};
pub use sim::{run, SimError, SimResult, Summary};
