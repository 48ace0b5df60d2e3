//! Closed-form SE(2) / se(2) algebra.
//!
//! A [`Pose`] stores its heading and position directly rather than a 3×3
//! matrix; matrix forms are produced on demand for oracles and diagnostics.
//! Headings are kept in `(-π, π]` after every group operation.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};

/// Below this heading magnitude the Jacobian pair falls back to Taylor series.
pub const SERIES_THRESHOLD: f64 = 1e-4;

/// `|cos θ + 1|` below this value puts a rotation on the logarithm cut.
pub const BRANCH_TOLERANCE: f64 = 1e-9;

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let a = theta.rem_euclid(2.0 * PI);
    if a > PI {
        a - 2.0 * PI
    } else {
        a
    }
}

/// 2×2 rotation matrix through `theta`.
pub fn rotation(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// The 90° rotation generator `S` applied to `v`, i.e. `(-v.y, v.x)`.
#[inline]
pub fn perp(v: &Vector2<f64>) -> Vector2<f64> {
    Vector2::new(-v.y, v.x)
}

/// Which value the rotation logarithm takes when the rotation is exactly a
/// half turn (`trace(g) = -1`), where it is two-valued.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum LogBranch {
    #[default]
    PlusPi,
    MinusPi,
}

impl LogBranch {
    pub fn angle(self) -> f64 {
        match self {
            LogBranch::PlusPi => PI,
            LogBranch::MinusPi => -PI,
        }
    }

    pub fn is_cut(theta: f64) -> bool {
        (theta.cos() + 1.0).abs() < BRANCH_TOLERANCE
    }
}

/// Logarithm of the rotation through `theta`: the principal value, except on
/// the half-turn cut where `branch` picks the side. Within the cut tolerance
/// the angle is moved by 2π rather than snapped to `±π`, so it may sit a
/// hair outside `[−π, π]` but still exponentiates to the same rotation.
pub fn so2_log(theta: f64, branch: LogBranch) -> f64 {
    let w = wrap_angle(theta);
    if !LogBranch::is_cut(w) {
        return w;
    }
    match branch {
        LogBranch::PlusPi if w < 0.0 => w + 2.0 * PI,
        LogBranch::MinusPi if w > 0.0 => w - 2.0 * PI,
        _ => w,
    }
}

/// An element of SE(2): heading and planar position.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    theta: f64,
    pub p: Vector2<f64>,
}

impl Pose {
    pub fn new(theta: f64, x: f64, y: f64) -> Self {
        Pose {
            theta: wrap_angle(theta),
            p: Vector2::new(x, y),
        }
    }

    pub fn from_parts(theta: f64, p: Vector2<f64>) -> Self {
        Pose {
            theta: wrap_angle(theta),
            p,
        }
    }

    pub fn identity() -> Self {
        Pose {
            theta: 0.0,
            p: Vector2::zeros(),
        }
    }

    /// Heading in `(-π, π]`.
    #[inline]
    pub fn theta(&self) -> f64 {
        self.theta
    }

    #[inline]
    pub fn x(&self) -> f64 {
        self.p.x
    }

    #[inline]
    pub fn y(&self) -> f64 {
        self.p.y
    }

    pub fn rotation(&self) -> Matrix2<f64> {
        rotation(self.theta)
    }

    /// Homogeneous 3×3 matrix form.
    pub fn to_matrix(&self) -> Matrix3<f64> {
        let (s, c) = self.theta.sin_cos();
        Matrix3::new(c, -s, self.p.x, s, c, self.p.y, 0.0, 0.0, 1.0)
    }

    /// Reads a homogeneous matrix back; the rotation block is assumed orthonormal.
    pub fn from_matrix(m: &Matrix3<f64>) -> Self {
        Pose::new(m[(1, 0)].atan2(m[(0, 0)]), m[(0, 2)], m[(1, 2)])
    }

    /// Trace of the homogeneous matrix, `2cos θ + 1`.
    pub fn trace(&self) -> f64 {
        2.0 * self.theta.cos() + 1.0
    }

    pub fn compose(&self, other: &Pose) -> Pose {
        compose(self, other)
    }

    pub fn inverse(&self) -> Pose {
        inverse(self)
    }
}

impl Default for Pose {
    fn default() -> Self {
        Pose::identity()
    }
}

impl fmt::Display for Pose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Pose(theta: {:.6}, p: [{:.6}, {:.6}])",
            self.theta, self.p.x, self.p.y
        )
    }
}

/// An se(2) element in vector form `(ω, vx, vy)`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Twist {
    pub omega: f64,
    pub vx: f64,
    pub vy: f64,
}

impl Twist {
    pub const fn new(omega: f64, vx: f64, vy: f64) -> Self {
        Twist { omega, vx, vy }
    }

    pub const fn zero() -> Self {
        Twist::new(0.0, 0.0, 0.0)
    }

    #[inline]
    pub fn v(&self) -> Vector2<f64> {
        Vector2::new(self.vx, self.vy)
    }

    pub fn from_parts(omega: f64, v: Vector2<f64>) -> Self {
        Twist::new(omega, v.x, v.y)
    }

    pub fn to_vector(&self) -> Vector3<f64> {
        Vector3::new(self.omega, self.vx, self.vy)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Twist::new(v[0], v[1], v[2])
    }

    /// Matrix form `ξ̂`.
    pub fn hat(&self) -> Matrix3<f64> {
        Matrix3::new(
            0.0, -self.omega, self.vx, self.omega, 0.0, self.vy, 0.0, 0.0, 0.0,
        )
    }

    /// Inverse of [`Twist::hat`]; ignores the entries that are zero in se(2).
    pub fn vee(m: &Matrix3<f64>) -> Self {
        Twist::new(m[(1, 0)], m[(0, 2)], m[(1, 2)])
    }

    pub fn norm(&self) -> f64 {
        self.to_vector().norm()
    }

    pub fn scale(&self, s: f64) -> Twist {
        Twist::new(s * self.omega, s * self.vx, s * self.vy)
    }
}

impl std::ops::Add for Twist {
    type Output = Twist;
    fn add(self, rhs: Twist) -> Twist {
        Twist::new(self.omega + rhs.omega, self.vx + rhs.vx, self.vy + rhs.vy)
    }
}

impl std::ops::Sub for Twist {
    type Output = Twist;
    fn sub(self, rhs: Twist) -> Twist {
        Twist::new(self.omega - rhs.omega, self.vx - rhs.vx, self.vy - rhs.vy)
    }
}

impl std::ops::Neg for Twist {
    type Output = Twist;
    fn neg(self) -> Twist {
        Twist::new(-self.omega, -self.vx, -self.vy)
    }
}

/// Exponential coordinates `(θ, q)` of a pose.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ExpCoords {
    pub theta: f64,
    pub q: Vector2<f64>,
}

impl ExpCoords {
    pub fn new(theta: f64, qx: f64, qy: f64) -> Self {
        ExpCoords {
            theta,
            q: Vector2::new(qx, qy),
        }
    }

    #[inline]
    pub fn qx(&self) -> f64 {
        self.q.x
    }

    #[inline]
    pub fn qy(&self) -> f64 {
        self.q.y
    }

    pub fn to_vector(&self) -> Vector3<f64> {
        Vector3::new(self.theta, self.q.x, self.q.y)
    }

    pub fn norm(&self) -> f64 {
        self.to_vector().norm()
    }

    pub fn scale(&self, s: f64) -> ExpCoords {
        ExpCoords {
            theta: s * self.theta,
            q: s * self.q,
        }
    }
}

pub fn compose(a: &Pose, b: &Pose) -> Pose {
    Pose {
        theta: wrap_angle(a.theta + b.theta),
        p: a.p + rotation(a.theta) * b.p,
    }
}

pub fn inverse(g: &Pose) -> Pose {
    Pose {
        theta: wrap_angle(-g.theta),
        p: -(rotation(g.theta).transpose() * g.p),
    }
}

/// `A(θ)`, the left Jacobian mapping exponential-coordinate translation to position.
pub fn a_jacobian(theta: f64) -> Matrix2<f64> {
    let (s_over, c_over) = if theta.abs() < SERIES_THRESHOLD {
        let t2 = theta * theta;
        (
            1.0 - t2 / 6.0 + t2 * t2 / 120.0,
            theta * (0.5 - t2 / 24.0 + t2 * t2 / 720.0),
        )
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta)
    };
    Matrix2::new(s_over, -c_over, c_over, s_over)
}

/// `α(θ) = (θ/2) cot(θ/2)`.
pub fn alpha(theta: f64) -> f64 {
    if theta.abs() < SERIES_THRESHOLD {
        let t2 = theta * theta;
        1.0 - t2 / 12.0 - t2 * t2 / 720.0
    } else {
        let half = 0.5 * theta;
        half * half.cos() / half.sin()
    }
}

/// `A⁻¹(θ) = [[α, θ/2], [-θ/2, α]]`, valid for `|θ| < 2π`.
pub fn a_jacobian_inv(theta: f64) -> Matrix2<f64> {
    let a = alpha(theta);
    let h = 0.5 * theta;
    Matrix2::new(a, h, -h, a)
}

pub fn exp_se2(x: &ExpCoords) -> Pose {
    Pose::from_parts(x.theta, a_jacobian(x.theta) * x.q)
}

/// Group logarithm. On the half-turn cut the heading is taken from `branch`.
pub fn log_se2(g: &Pose, branch: LogBranch) -> ExpCoords {
    let theta = so2_log(g.theta, branch);
    ExpCoords {
        theta,
        q: a_jacobian_inv(theta) * g.p,
    }
}

/// `Ad_g ξ = g ξ̂ g⁻¹ = (ω, R v − ω S p)`.
pub fn adjoint(g: &Pose, xi: &Twist) -> Twist {
    let v = g.rotation() * xi.v() - xi.omega * perp(&g.p);
    Twist::from_parts(xi.omega, v)
}

/// `[x, y]`; the rotational part vanishes because SO(2) is abelian.
pub fn lie_bracket(x: &Twist, y: &Twist) -> Twist {
    let v = x.omega * perp(&y.v()) - y.omega * perp(&x.v());
    Twist::from_parts(0.0, v)
}

/// Matrix of `ad_ξ` in `(ω, vx, vy)` ordering, as used by the Euler–Poincaré
/// force recovery.
pub fn coadjoint_matrix(xi: &Twist) -> Matrix3<f64> {
    Matrix3::new(
        0.0, 0.0, 0.0, xi.vy, 0.0, -xi.omega, -xi.vx, xi.omega, 0.0,
    )
}
