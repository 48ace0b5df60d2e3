//! Second-order dynamics on SE(2) in double-integrator form, relative states
//! between robots, and recovery of physical wrenches from integrator inputs.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::liegroup::{adjoint, coadjoint_matrix, compose, exp_se2, inverse, ExpCoords, Pose, Twist};

/// Tolerance on lateral body velocity for a nonholonomic robot.
pub const CONSTRAINT_TOLERANCE: f64 = 1e-9;

/// Default integration step in seconds.
pub const DEFAULT_DT: f64 = 1e-3;

#[derive(Debug, Error, PartialEq)]
pub enum DynamicsError {
    #[error("time step must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("lateral input u_y = {0} on a nonholonomic robot")]
    LateralInput(f64),
    #[error("lateral velocity v_y = {0} on a nonholonomic robot")]
    LateralVelocity(f64),
    #[error("inertia parameters must be positive (J = {j}, m = {m})")]
    NonPositiveInertia { j: f64, m: f64 },
}

/// Integrator-level input `(u_θ, u_x, u_y)`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ControlInput {
    pub u_theta: f64,
    pub u_x: f64,
    pub u_y: f64,
}

impl ControlInput {
    pub const fn new(u_theta: f64, u_x: f64, u_y: f64) -> Self {
        ControlInput { u_theta, u_x, u_y }
    }

    /// Input with the lateral channel pinned to zero.
    pub const fn planar(u_theta: f64, u_x: f64) -> Self {
        ControlInput::new(u_theta, u_x, 0.0)
    }

    pub const fn zero() -> Self {
        ControlInput::new(0.0, 0.0, 0.0)
    }

    /// The input read as an algebra element, for adjoint transport.
    pub fn as_twist(&self) -> Twist {
        Twist::new(self.u_theta, self.u_x, self.u_y)
    }

    pub fn from_twist(t: &Twist) -> Self {
        ControlInput::new(t.omega, t.vx, t.vy)
    }

    pub fn to_vector(&self) -> Vector3<f64> {
        Vector3::new(self.u_theta, self.u_x, self.u_y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InertiaParams {
    j: f64,
    m: f64,
}

impl InertiaParams {
    pub fn new(j: f64, m: f64) -> Result<Self, DynamicsError> {
        if j > 0.0 && m > 0.0 {
            Ok(InertiaParams { j, m })
        } else {
            Err(DynamicsError::NonPositiveInertia { j, m })
        }
    }

    pub fn moment_of_inertia(&self) -> f64 {
        self.j
    }

    pub fn mass(&self) -> f64 {
        self.m
    }

    /// `diag(J, m, m)`.
    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&Vector3::new(self.j, self.m, self.m))
    }
}

impl Default for InertiaParams {
    fn default() -> Self {
        InertiaParams { j: 1.0, m: 1.0 }
    }
}

/// Full second-order state of one robot.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RobotState {
    pub pose: Pose,
    pub twist: Twist,
}

impl RobotState {
    pub fn new(pose: Pose, twist: Twist) -> Self {
        RobotState { pose, twist }
    }

    /// State from table-style initial conditions; lateral velocity is zero.
    pub fn planar(theta: f64, x: f64, y: f64, omega: f64, vx: f64) -> Self {
        RobotState {
            pose: Pose::new(theta, x, y),
            twist: Twist::new(omega, vx, 0.0),
        }
    }

    pub fn is_finite(&self) -> bool {
        [
            self.pose.theta(),
            self.pose.x(),
            self.pose.y(),
            self.twist.omega,
            self.twist.vx,
            self.twist.vy,
        ]
        .iter()
        .all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        [
            self.pose.x(),
            self.pose.y(),
            self.twist.omega,
            self.twist.vx,
            self.twist.vy,
        ]
        .iter()
        .fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Configuration and velocity of one robot seen from another. The twist is
/// always recomputed from the two absolute states.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RelativeState {
    pub pose: Pose,
    pub twist: Twist,
}

/// `g_ij = g_i⁻¹ g_j` and `ξ_ij = ξ_j − Ad_{g_ij⁻¹} ξ_i`.
pub fn relative_state(leader: &RobotState, follower: &RobotState) -> RelativeState {
    relative_to(&leader.pose, &leader.twist, follower)
}

/// Same as [`relative_state`] for a reference that is not a simulated robot
/// (a virtual or transformed leader).
pub fn relative_to(ref_pose: &Pose, ref_twist: &Twist, follower: &RobotState) -> RelativeState {
    let pose = compose(&inverse(ref_pose), &follower.pose);
    let twist = follower.twist - adjoint(&inverse(&pose), ref_twist);
    RelativeState { pose, twist }
}

fn advance(state: &RobotState, input: &ControlInput, dt: f64) -> RobotState {
    let twist = Twist::new(
        state.twist.omega + dt * input.u_theta,
        state.twist.vx + dt * input.u_x,
        state.twist.vy + dt * input.u_y,
    );
    let incr = exp_se2(&ExpCoords::new(dt * twist.omega, dt * twist.vx, dt * twist.vy));
    RobotState {
        pose: compose(&state.pose, &incr),
        twist,
    }
}

/// One Lie–Euler step for a nonholonomic robot: velocity first, then the pose
/// moves along the group exponential of the updated velocity.
pub fn step(state: &RobotState, input: &ControlInput, dt: f64) -> Result<RobotState, DynamicsError> {
    if !(dt > 0.0) {
        return Err(DynamicsError::NonPositiveStep(dt));
    }
    if input.u_y != 0.0 {
        return Err(DynamicsError::LateralInput(input.u_y));
    }
    if state.twist.vy.abs() > CONSTRAINT_TOLERANCE {
        return Err(DynamicsError::LateralVelocity(state.twist.vy));
    }
    Ok(advance(state, input, dt))
}

/// Same integrator without the nonholonomic checks, for a fully actuated body.
pub fn step_fully_actuated(
    state: &RobotState,
    input: &ControlInput,
    dt: f64,
) -> Result<RobotState, DynamicsError> {
    if !(dt > 0.0) {
        return Err(DynamicsError::NonPositiveStep(dt));
    }
    Ok(advance(state, input, dt))
}

/// `F = [𝕀]u − [ad_ξ]ᵀ[𝕀]ξ`, returned as `(torque, force_x, force_y)`.
pub fn recover_force(input: &ControlInput, twist: &Twist, params: &InertiaParams) -> Vector3<f64> {
    let inertia = params.matrix();
    inertia * input.to_vector() - coadjoint_matrix(twist).transpose() * inertia * twist.to_vector()
}

pub fn check_nonholonomic(state: &RobotState, tol: f64) -> bool {
    state.twist.vy.abs() <= tol
}

/// The constraint in spatial form, `[-sin θ, cos θ]·ṗ` with `ṗ = R v`.
pub fn lateral_slip(state: &RobotState) -> f64 {
    let pdot = state.pose.rotation() * state.twist.v();
    let th = state.pose.theta();
    -th.sin() * pdot.x + th.cos() * pdot.y
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_rejects_bad_arguments() {
        let s = RobotState::default();
        assert_eq!(
            step(&s, &ControlInput::zero(), 0.0),
            Err(DynamicsError::NonPositiveStep(0.0))
        );
        assert!(step(&s, &ControlInput::zero(), -1e-3).is_err());
        assert_eq!(
            step(&s, &ControlInput::new(0.0, 0.0, 0.5), 1e-3),
            Err(DynamicsError::LateralInput(0.5))
        );
        let slipping = RobotState::new(Pose::identity(), Twist::new(0.0, 0.0, 1e-3));
        assert!(matches!(
            step(&slipping, &ControlInput::zero(), 1e-3),
            Err(DynamicsError::LateralVelocity(_))
        ));
        assert!(step_fully_actuated(&slipping, &ControlInput::new(0.0, 0.0, 1.0), 1e-3).is_ok());
    }

    #[test]
    fn zero_input_from_rest_is_fixed() {
        let s = RobotState::default();
        assert_eq!(step(&s, &ControlInput::zero(), 0.01).unwrap(), s);
    }

    #[test]
    fn constant_forward_acceleration() {
        let mut s = RobotState::default();
        let u = ControlInput::planar(0.0, 1.0);
        for _ in 0..100 {
            s = step(&s, &u, 0.01).unwrap();
        }
        assert!((s.twist.vx - 1.0).abs() < 1e-9);
        // semi-implicit: x_N = dt² N(N+1)/2
        assert!((s.pose.x() - 0.505).abs() < 1e-12);
        assert_eq!(s.pose.y(), 0.0);
    }

    #[test]
    fn constant_angular_acceleration() {
        let mut s = RobotState::default();
        let u = ControlInput::planar(1.0, 0.0);
        for _ in 0..100 {
            s = step(&s, &u, 0.01).unwrap();
        }
        assert!((s.twist.omega - 1.0).abs() < 1e-9);
        assert!((s.pose.theta() - 0.505).abs() < 1e-12);
    }

    #[test]
    fn force_recovery() {
        let params = InertiaParams::new(1.0, 2.0).unwrap();
        assert_eq!(
            recover_force(&ControlInput::zero(), &Twist::zero(), &params),
            Vector3::zeros()
        );
        assert_eq!(
            recover_force(&ControlInput::planar(0.0, 1.0), &Twist::zero(), &params),
            Vector3::new(0.0, 2.0, 0.0)
        );
        // u = 0, ξ = (1, 1, 0), J = m = 1: adᵀξ = (0, 0, -1) by hand.
        let unit = InertiaParams::default();
        let f = recover_force(&ControlInput::zero(), &Twist::new(1.0, 1.0, 0.0), &unit);
        assert_eq!(f, Vector3::new(0.0, 0.0, 1.0));
        assert!(InertiaParams::new(0.0, 1.0).is_err());
    }

    #[test]
    fn nonholonomic_check() {
        let ok = RobotState::planar(0.7, 1.0, 2.0, 0.3, 4.0);
        assert!(check_nonholonomic(&ok, CONSTRAINT_TOLERANCE));
        assert!(lateral_slip(&ok).abs() < 1e-12);
        let bad = RobotState::new(Pose::identity(), Twist::new(0.0, 0.0, 1e-3));
        assert!(!check_nonholonomic(&bad, 1e-9));
    }

    #[test]
    fn self_relative_is_identity() {
        let s = RobotState::planar(0.4, 3.0, -1.0, 0.2, 1.5);
        let r = relative_state(&s, &s);
        assert!(r.pose.theta().abs() < 1e-15 && r.pose.p.norm() < 1e-12);
        assert!(r.twist.norm() < 1e-12);
    }

    #[test]
    fn relative_state_with_leader_at_rest() {
        let leader = RobotState::default();
        let follower = RobotState::planar(-std::f64::consts::FRAC_PI_2, 500.0, -500.0, 2.0, 10.0);
        let r = relative_state(&leader, &follower);
        assert_eq!(r.pose, follower.pose);
        assert_eq!(r.twist, Twist::new(2.0, 10.0, 0.0));
    }
}
