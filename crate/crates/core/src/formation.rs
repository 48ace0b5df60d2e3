//! Formation tracking as consensus on a shifted reference.
//!
//! Each follower tracks its virtual leader moved by the desired offset
//! `ḡ = (θ̄, p̄)`. The heading `θ̄` is not free: it is whatever keeps the
//! shifted reference free of lateral slip at the leader's current velocity.

use nalgebra::Vector2;

use crate::controllers::{Gains, DEGENERATE_TOLERANCE};
use crate::dynamics::{ControlInput, RobotState};
use crate::liegroup::{adjoint, compose, inverse, LogBranch, Pose, Twist};
use crate::network::{pipeline_step, StepCommands, Topology, VirtualLeader};

/// Below this twist norm the leader counts as stopped and `θ̄` is held at 0.
pub const STOPPED_TWIST: f64 = 1e-6;

/// Desired offsets of each follower from its virtual leader, indexed by node.
/// Node 0 and nodes without an entry use a zero offset.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FormationSpec {
    offsets: Vec<Vector2<f64>>,
}

impl FormationSpec {
    pub fn new(node_count: usize) -> Self {
        FormationSpec {
            offsets: vec![Vector2::zeros(); node_count],
        }
    }

    pub fn with_offsets(offsets: Vec<Vector2<f64>>) -> Self {
        FormationSpec { offsets }
    }

    pub fn set(&mut self, node: usize, offset: Vector2<f64>) {
        if node >= self.offsets.len() {
            self.offsets.resize(node + 1, Vector2::zeros());
        }
        self.offsets[node] = offset;
    }

    pub fn offset(&self, node: usize) -> Vector2<f64> {
        self.offsets.get(node).copied().unwrap_or_else(Vector2::zeros)
    }
}

pub fn leader_stopped(twist: &Twist) -> bool {
    twist.norm() < STOPPED_TWIST
}

/// `θ̄ = atan2(ω x̄, v_x − ω ȳ)`; 0 while the leader is stopped or the
/// ratio is 0/0.
pub fn desired_attitude(offset: &Vector2<f64>, leader_twist: &Twist) -> f64 {
    if leader_stopped(leader_twist) {
        return 0.0;
    }
    let along = leader_twist.vx - leader_twist.omega * offset.y;
    let across = leader_twist.omega * offset.x;
    if along.abs() < DEGENERATE_TOLERANCE && across.abs() < DEGENERATE_TOLERANCE {
        0.0
    } else {
        across.atan2(along)
    }
}

/// Instantaneous `|dθ̄/dt|` under the leader's input — the rate the
/// constant-offset transport ignores.
pub fn desired_attitude_rate(offset: &Vector2<f64>, leader_twist: &Twist, leader_input: &ControlInput) -> f64 {
    if leader_stopped(leader_twist) {
        return 0.0;
    }
    let a = leader_twist.vx - leader_twist.omega * offset.y;
    let b = leader_twist.omega * offset.x;
    let den = a * a + b * b;
    if den < DEGENERATE_TOLERANCE * DEGENERATE_TOLERANCE {
        return 0.0;
    }
    let da = leader_input.u_x - leader_input.u_theta * offset.y;
    let db = leader_input.u_theta * offset.x;
    ((a * db - b * da) / den).abs()
}

/// The shifted reference `g_a = g_c ḡ`, `ξ_a = Ad_{ḡ⁻¹}ξ_c`, `u_a = Ad_{ḡ⁻¹}u_c`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransformedLeader {
    pub pose: Pose,
    pub twist: Twist,
    pub input: ControlInput,
    /// `ḡ` used for this instant.
    pub offset_pose: Pose,
}

impl TransformedLeader {
    pub fn as_virtual_leader(&self) -> VirtualLeader {
        VirtualLeader {
            pose: self.pose,
            twist: self.twist,
            input: self.input,
        }
    }
}

pub fn transformed_leader(leader: &VirtualLeader, offset: &Vector2<f64>) -> TransformedLeader {
    if *offset == Vector2::zeros() {
        // ḡ = I exactly; skip the arithmetic so zero offsets reproduce consensus bit for bit.
        return TransformedLeader {
            pose: leader.pose,
            twist: leader.twist,
            input: leader.input,
            offset_pose: Pose::identity(),
        };
    }
    let g_bar = Pose::from_parts(desired_attitude(offset, &leader.twist), *offset);
    let g_bar_inv = inverse(&g_bar);
    TransformedLeader {
        pose: compose(&leader.pose, &g_bar),
        twist: adjoint(&g_bar_inv, &leader.twist),
        input: ControlInput::from_twist(&adjoint(&g_bar_inv, &leader.input.as_twist())),
        offset_pose: g_bar,
    }
}

/// Formation commands plus the reference each follower used.
pub fn formation_step(
    topology: &Topology,
    states: &[RobotState],
    spec: &FormationSpec,
    leader_input: ControlInput,
    gains: &Gains,
    branch: LogBranch,
) -> StepCommands {
    pipeline_step(topology, states, leader_input, gains, branch, |node, vl| {
        transformed_leader(&vl, &spec.offset(node)).as_virtual_leader()
    })
}

/// Formation-tracking commands, indexed by node (entry 0 is `leader_input`).
pub fn formation_step_inputs(
    topology: &Topology,
    states: &[RobotState],
    spec: &FormationSpec,
    leader_input: ControlInput,
    gains: &Gains,
    branch: LogBranch,
) -> Vec<ControlInput> {
    formation_step(topology, states, spec, leader_input, gains, branch).inputs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::consensus_step_inputs;
    use std::f64::consts::FRAC_PI_2;

    fn leader(twist: Twist) -> VirtualLeader {
        VirtualLeader {
            pose: Pose::identity(),
            twist,
            input: ControlInput::zero(),
        }
    }

    #[test]
    fn attitude_examples() {
        let off = Vector2::new(-15.0, 15.0);
        assert_eq!(desired_attitude(&off, &Twist::new(0.0, 2.0, 0.0)), 0.0);
        assert_eq!(desired_attitude(&off, &Twist::zero()), 0.0);
        let tw = Twist::new(1.0, 0.0, 0.0);
        let th = desired_attitude(&Vector2::new(-15.0, 0.0), &tw);
        assert!((th + FRAC_PI_2).abs() < 1e-15);
        let t = transformed_leader(&leader(tw), &Vector2::new(-15.0, 0.0));
        assert!(t.twist.vy.abs() < 1e-10);
    }

    #[test]
    fn zero_offset_is_passthrough() {
        let vl = VirtualLeader {
            pose: Pose::new(0.3, 1.0, 2.0),
            twist: Twist::new(0.1, 1.0, 0.0),
            input: ControlInput::planar(0.2, 0.5),
        };
        assert_eq!(transformed_leader(&vl, &Vector2::zeros()).as_virtual_leader(), vl);
    }

    #[test]
    fn straight_leader_translation() {
        let t = transformed_leader(&leader(Twist::new(0.0, 1.0, 0.0)), &Vector2::new(-15.0, 0.0));
        assert_eq!(t.pose, Pose::new(0.0, -15.0, 0.0));
        assert_eq!(t.twist, Twist::new(0.0, 1.0, 0.0));
    }

    #[test]
    fn turning_leader_stays_nonholonomic() {
        let t = transformed_leader(&leader(Twist::new(0.1, 1.0, 0.0)), &Vector2::new(-15.0, 15.0));
        assert!(t.twist.vy.abs() < 1e-10);
    }

    #[test]
    fn attitude_rate_matches_finite_difference() {
        let off = Vector2::new(-15.0, 15.0);
        let tw = Twist::new(0.1, 1.0, 0.0);
        let u = ControlInput::planar(0.05, 0.3);
        let h = 1e-6;
        let ahead = Twist::new(tw.omega + h * u.u_theta, tw.vx + h * u.u_x, 0.0);
        let fd = (desired_attitude(&off, &ahead) - desired_attitude(&off, &tw)) / h;
        assert!((fd.abs() - desired_attitude_rate(&off, &tw, &u)).abs() < 1e-5);
    }

    #[test]
    fn zero_offsets_match_consensus() {
        let t = Topology::new(
            3,
            &[
                crate::network::Link::new(1, vec![0]),
                crate::network::Link::new(2, vec![0, 1]),
            ],
        )
        .unwrap();
        let states = vec![
            RobotState::planar(0.2, 1.0, -1.0, 0.1, 2.0),
            RobotState::planar(-0.4, -3.0, 4.0, 0.0, 0.5),
            RobotState::planar(2.0, 5.0, 1.0, -0.3, 0.0),
        ];
        let u0 = ControlInput::planar(0.3, 1.0);
        let g = Gains::default();
        let a = consensus_step_inputs(&t, &states, u0, &g, LogBranch::PlusPi);
        let b = formation_step_inputs(&t, &states, &FormationSpec::new(3), u0, &g, LogBranch::PlusPi);
        assert_eq!(a, b);
    }
}
