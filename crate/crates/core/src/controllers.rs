//! Stabilizers on SE(2) and the single-follower tracking law.
//!
//! The follower law splits the relative system `g₀₁` into an adjoint part
//! `g̃₀₁` (nonholonomic by construction) and a pure-rotation residual `g_e`,
//! stabilizes each, and maps the result back onto the follower's two
//! actuated channels.

use thiserror::Error;

use crate::dynamics::{relative_to, ControlInput, RelativeState, RobotState};
use crate::liegroup::{
    adjoint, compose, inverse, lie_bracket, log_se2, so2_log, ExpCoords, LogBranch, Pose, Twist,
};

/// Below this norm the adjoint-attitude vector is treated as zero.
pub const DEGENERATE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum ControlError {
    #[error("gain {name} must be positive, got {value}")]
    NonPositiveGain { name: &'static str, value: f64 },
}

/// Feedback gains `(k_p, k_d, k, k_e)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gains {
    k_p: f64,
    k_d: f64,
    k: f64,
    k_e: f64,
}

impl Gains {
    pub fn new(k_p: f64, k_d: f64, k: f64, k_e: f64) -> Result<Self, ControlError> {
        for (name, value) in [("k_p", k_p), ("k_d", k_d), ("k", k), ("k_e", k_e)] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(ControlError::NonPositiveGain { name, value });
            }
        }
        Ok(Gains { k_p, k_d, k, k_e })
    }

    pub fn k_p(&self) -> f64 {
        self.k_p
    }

    pub fn k_d(&self) -> f64 {
        self.k_d
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn k_e(&self) -> f64 {
        self.k_e
    }
}

impl Default for Gains {
    /// `(600, 500, 8, 250)`. The steering ratio `k·k_p / (k_p + k_e)` must sit
    /// well above one for the combined heading terms to let `β` steer; the
    /// overall scale buys settling within ~10 s from tens of metres out.
    /// Stiff: keep `k_d·dt` below about one.
    fn default() -> Self {
        Gains {
            k_p: 600.0,
            k_d: 500.0,
            k: 8.0,
            k_e: 250.0,
        }
    }
}

/// Bearing term `β = −arctan(q_y / q_x)` on the half-plane branch, so the
/// robot may approach the origin driving either forwards or backwards.
/// Zero at the origin; `∓π/2` on the `q_x = 0` axis.
pub fn beta(x: &ExpCoords) -> f64 {
    let (qx, qy) = (x.qx(), x.qy());
    if qx == 0.0 && qy == 0.0 {
        0.0
    } else if qx == 0.0 {
        -qy.signum() * std::f64::consts::FRAC_PI_2
    } else {
        -(qy / qx).atan()
    }
}

/// `u = −k_p[θ + kβ, q_x, 0] − k_d[ω, v_x, 0]`.
pub fn nonholonomic_stabilizer(x: &ExpCoords, twist: &Twist, gains: &Gains) -> ControlInput {
    ControlInput::planar(
        -gains.k_p * (x.theta + gains.k * beta(x)) - gains.k_d * twist.omega,
        -gains.k_p * x.qx() - gains.k_d * twist.vx,
    )
}

/// `û = −k_p log(g) − k_d ξ̂` for a fully actuated body. The log cut
/// (`trace(g) = −1`) resolves through `branch`.
pub fn fully_actuated_stabilizer(
    g: &Pose,
    twist: &Twist,
    k_p: f64,
    k_d: f64,
    branch: LogBranch,
) -> ControlInput {
    let x = log_se2(g, branch);
    ControlInput::new(
        -k_p * x.theta - k_d * twist.omega,
        -k_p * x.qx() - k_d * twist.vx,
        -k_p * x.qy() - k_d * twist.vy,
    )
}

/// Heading of the relative configuration that zeroes the relative lateral
/// velocity (the adjoint orbit). Zero when the leader is stationary relative
/// to the follower's position.
pub fn adjoint_attitude(rel: &RelativeState, leader_twist: &Twist) -> f64 {
    let r = rel.pose.p;
    let along = leader_twist.vx - leader_twist.omega * r.y;
    let across = leader_twist.omega * r.x;
    if along.abs() < DEGENERATE_TOLERANCE && across.abs() < DEGENERATE_TOLERANCE {
        0.0
    } else {
        across.atan2(along)
    }
}

/// `(v_x0 − ω₀ r_y) sin θ − ω₀ r_x cos θ`, the relative lateral velocity for
/// a relative heading `theta` at position `r`.
pub fn adjoint_orbit_residual(r: &nalgebra::Vector2<f64>, leader_twist: &Twist, theta: f64) -> f64 {
    let along = leader_twist.vx - leader_twist.omega * r.y;
    along * theta.sin() - leader_twist.omega * r.x * theta.cos()
}

/// Everything the tracking law reads at one instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrackingContext {
    pub relative: RelativeState,
    pub leader_twist: Twist,
    pub leader_input: ControlInput,
    /// `θ̃₀₁`.
    pub adjoint_attitude: f64,
    /// `θ₁ − θ̃₁`, taken through the rotation logarithm.
    pub follower_heading_error: f64,
    pub branch: LogBranch,
}

impl TrackingContext {
    pub fn new(
        leader_pose: &Pose,
        leader_twist: &Twist,
        leader_input: &ControlInput,
        follower: &RobotState,
        branch: LogBranch,
    ) -> Self {
        let relative = relative_to(leader_pose, leader_twist, follower);
        let adjoint_attitude = adjoint_attitude(&relative, leader_twist);
        // θ₁ − (θ₀ + θ̃₀₁) = θ₀₁ − θ̃₀₁; on the half-turn cut this is log(g_e),
        // so it shares the configured branch.
        let follower_heading_error = so2_log(relative.pose.theta() - adjoint_attitude, branch);
        TrackingContext {
            relative,
            leader_twist: *leader_twist,
            leader_input: *leader_input,
            adjoint_attitude,
            follower_heading_error,
            branch,
        }
    }

    pub fn from_states(
        leader: &RobotState,
        leader_input: &ControlInput,
        follower: &RobotState,
        branch: LogBranch,
    ) -> Self {
        Self::new(&leader.pose, &leader.twist, leader_input, follower, branch)
    }

    pub fn exp_coords(&self) -> ExpCoords {
        log_se2(&self.relative.pose, self.branch)
    }

    /// Follower body velocity, `ξ₁ = ξ₀₁ + Ad_{g₀₁⁻¹} ξ₀`.
    pub fn follower_twist(&self) -> Twist {
        self.relative.twist + adjoint(&inverse(&self.relative.pose), &self.leader_twist)
    }
}

/// The follower's force/torque command in closed form:
///
/// ```text
/// u_θ1 = −k_e(θ₁ − θ̃₁) − k_p(θ₀₁ + kβ₀₁) − k_d ω₀₁ + u_θ0
/// u_x1 = −k_p q_x01 − k_d v_x01 + (u_x0 − u_θ0 r_y01) cos θ₀₁ + u_θ0 r_x01 sin θ₀₁
/// ```
pub fn single_follower_tracking(ctx: &TrackingContext, gains: &Gains) -> ControlInput {
    let x = ctx.exp_coords();
    let r = ctx.relative.pose.p;
    let xi = ctx.relative.twist;
    let u0 = ctx.leader_input;
    let (s, c) = x.theta.sin_cos();
    let u_theta = -gains.k_e * ctx.follower_heading_error
        - gains.k_p * (x.theta + gains.k * beta(&x))
        - gains.k_d * xi.omega
        + u0.u_theta;
    let u_x = -gains.k_p * x.qx() - gains.k_d * xi.vx
        + (u0.u_x - u0.u_theta * r.y) * c
        + u0.u_theta * r.x * s;
    ControlInput::planar(u_theta, u_x)
}

/// The same law before simplification: `u_e + ũ₀₁ + Ad_{g₀₁⁻¹}u₀ + [ξ₁, ξ₀₁]`,
/// returned with its lateral component intact.
pub fn assembled_tracking(ctx: &TrackingContext, gains: &Gains) -> Twist {
    let x = ctx.exp_coords();
    let u_e = Twist::new(-gains.k_e * ctx.follower_heading_error, 0.0, 0.0);
    let u_adj = nonholonomic_stabilizer(&x, &ctx.relative.twist, gains).as_twist();
    let transported = adjoint(&inverse(&ctx.relative.pose), &ctx.leader_input.as_twist());
    let bracket = lie_bracket(&ctx.follower_twist(), &ctx.relative.twist);
    u_e + u_adj + transported + bracket
}

/// Gap between the closed-form law and the assembled one, over the
/// actuated channels and over all three.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LawDiscrepancy {
    pub actuated: f64,
    pub full: f64,
}

pub fn law_discrepancy(ctx: &TrackingContext, gains: &Gains) -> LawDiscrepancy {
    let printed = single_follower_tracking(ctx, gains).as_twist();
    let assembled = assembled_tracking(ctx, gains);
    let d = assembled - printed;
    LawDiscrepancy {
        actuated: d.omega.hypot(d.vx),
        full: d.norm(),
    }
}

/// The two relative subsystems behind the tracking law.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SubsystemDiagnostics {
    /// `g̃₀₁`: heading `θ̃₀₁`, position `r₀₁`.
    pub adjoint_pose: Pose,
    /// `g_e = g̃₀₁⁻¹ g₀₁`, a pure rotation.
    pub residual_pose: Pose,
    /// `ξ̃₀₁ = Ad_{g_e} ξ₁ − Ad_{g̃₀₁⁻¹} ξ₀`.
    pub adjoint_twist: Twist,
    /// `ξ_e`, zero under the auxiliary velocity `ξ̃₁ = Ad_{g_e} ξ₁`.
    pub residual_twist: Twist,
}

pub fn subsystem_diagnostics(ctx: &TrackingContext) -> SubsystemDiagnostics {
    let adjoint_pose = Pose::from_parts(ctx.adjoint_attitude, ctx.relative.pose.p);
    let residual_pose = compose(&inverse(&adjoint_pose), &ctx.relative.pose);
    let xi1 = ctx.follower_twist();
    let aux_twist = adjoint(&residual_pose, &xi1);
    let adjoint_twist = aux_twist - adjoint(&inverse(&adjoint_pose), &ctx.leader_twist);
    let residual_twist = xi1 - adjoint(&inverse(&residual_pose), &aux_twist);
    SubsystemDiagnostics {
        adjoint_pose,
        residual_pose,
        adjoint_twist,
        residual_twist,
    }
}
