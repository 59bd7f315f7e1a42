//! Planar rigid-frame arithmetic: rotations, frame changes and relative poses.
//!
//! Every robot keeps its own local coordinate system (origin at its position,
//! x-axis along its heading). All angles returned by this module are
//! normalized to `[0, 2π)`; angular *differences* used in error metrics are
//! wrapped to `(-π, π]` with [`wrap_to_pi`].

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

/// A 2D vector in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    #[inline]
    pub fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    /// Global angle of the vector in `[0, 2π)`; 0 for the zero vector.
    #[inline]
    pub fn angle(self) -> f64 {
        if self.x == 0.0 && self.y == 0.0 {
            0.0
        } else {
            normalize_angle(self.y.atan2(self.x))
        }
    }

    #[inline]
    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    #[inline]
    pub fn scale(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }

    /// Counterclockwise perpendicular `(-y, x)`.
    #[inline]
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }
}

impl std::ops::Add for Vec2 {
    type Output = Vec2;
    #[inline]
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl std::ops::Sub for Vec2 {
    type Output = Vec2;
    #[inline]
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl std::ops::Neg for Vec2 {
    type Output = Vec2;
    #[inline]
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Normalize an angle to `[0, 2π)`.
#[inline]
pub fn normalize_angle(theta: f64) -> f64 {
    let r = theta.rem_euclid(TAU);
    // rem_euclid can return TAU when theta is a tiny negative number.
    if r >= TAU {
        r - TAU
    } else {
        r
    }
}

/// Wrap an angular difference to `(-π, π]`.
#[inline]
pub fn wrap_to_pi(theta: f64) -> f64 {
    let r = normalize_angle(theta);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Unit vector of angle `theta`: `(cos θ, sin θ)`.
#[inline]
pub fn unit_vector(theta: f64) -> Vec2 {
    let (s, c) = theta.sin_cos();
    Vec2::new(c, s)
}

/// Apply the rotation matrix `R_θ` to `v`.
#[inline]
pub fn rotate(theta: f64, v: Vec2) -> Vec2 {
    let (s, c) = theta.sin_cos();
    Vec2::new(c * v.x - s * v.y, s * v.x + c * v.y)
}

/// A robot pose in the global frame: position in meters and heading in
/// radians, normalized to `[0, 2π)`. Ground truth only — algorithm code never
/// sees these.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec2,
    orientation: f64,
}

impl Pose {
    pub fn new(position: Vec2, orientation: f64) -> Self {
        Pose {
            position,
            orientation: normalize_angle(orientation),
        }
    }

    #[inline]
    pub fn orientation(&self) -> f64 {
        self.orientation
    }
}

/// Pose of one robot expressed in another robot's local frame: bearing and
/// distance locate it, orientation is the heading difference. Both angles are
/// in `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativePose {
    pub bearing: f64,
    pub distance: f64,
    pub orientation: f64,
}

impl RelativePose {
    pub fn new(bearing: f64, distance: f64, orientation: f64) -> Self {
        RelativePose {
            bearing: normalize_angle(bearing),
            distance,
            orientation: normalize_angle(orientation),
        }
    }

    pub fn identity() -> Self {
        RelativePose::new(0.0, 0.0, 0.0)
    }

    /// Position component `distance · ψ(bearing)`.
    #[inline]
    pub fn position(&self) -> Vec2 {
        unit_vector(self.bearing).scale(self.distance)
    }

    pub fn from_position(position: Vec2, orientation: f64) -> Self {
        RelativePose::new(position.angle(), position.norm(), orientation)
    }

    /// Pose of the observer in the target's frame.
    pub fn inverse(&self) -> RelativePose {
        Rigid::from(*self).inverse().into()
    }
}

/// Per-round self-motion measured by odometry: the robot's previous position
/// and heading expressed in its *new* (current-round) frame. A stationary
/// round is all zeros.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OdometryDelta {
    pub translation: Vec2,
    pub rotation: f64,
}

impl OdometryDelta {
    pub const ZERO: OdometryDelta = OdometryDelta {
        translation: Vec2::ZERO,
        rotation: 0.0,
    };

    pub fn new(translation: Vec2, rotation: f64) -> Self {
        OdometryDelta {
            translation,
            rotation,
        }
    }
}

/// A rigid frame change `T_{b←a}`: maps coordinates in frame `a` to frame
/// `b` via `q_b = t + R_r q_a`. The translation is the origin of `a` seen
/// from `b`, the rotation is `φ_a − φ_b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rigid {
    pub t: Vec2,
    pub r: f64,
}

impl Rigid {
    pub const IDENTITY: Rigid = Rigid {
        t: Vec2::ZERO,
        r: 0.0,
    };

    pub fn new(t: Vec2, r: f64) -> Self {
        Rigid { t, r }
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Rigid) -> Rigid {
        Rigid::new(self.t + rotate(self.r, other.t), self.r + other.r)
    }

    pub fn inverse(&self) -> Rigid {
        Rigid::new(-rotate(-self.r, self.t), -self.r)
    }

    pub fn apply(&self, p: Vec2) -> Vec2 {
        self.t + rotate(self.r, p)
    }
}

impl From<RelativePose> for Rigid {
    fn from(rp: RelativePose) -> Rigid {
        Rigid::new(rp.position(), rp.orientation)
    }
}

impl From<OdometryDelta> for Rigid {
    fn from(d: OdometryDelta) -> Rigid {
        Rigid::new(d.translation, d.rotation)
    }
}

impl From<Rigid> for RelativePose {
    fn from(r: Rigid) -> RelativePose {
        RelativePose::from_position(r.t, r.r)
    }
}

/// Relative pose of `target` in `observer`'s local frame:
/// `p_w|_u = R_{-φ_u}(p_w − p_u)`, `φ_w|_u = φ_w − φ_u`.
///
/// Bearing is defined as 0 when the robots coincide.
pub fn relative_pose(observer: &Pose, target: &Pose) -> RelativePose {
    let local = rotate(-observer.orientation, target.position - observer.position);
    RelativePose::from_position(local, target.orientation - observer.orientation)
}

/// Pose of `a` in `c`'s frame from the pose of `a` in `b`'s frame and `b` in
/// `c`'s frame.
pub fn compose_relative(a_in_b: &RelativePose, b_in_c: &RelativePose) -> RelativePose {
    Rigid::from(*b_in_c).compose(&Rigid::from(*a_in_b)).into()
}

/// Residual of the two-path identity between four poses:
/// `(p_{a_j→a_k} + p_{a_k→b_k}) − (p_{a_j→b_j} + p_{b_j→b_k})`.
///
/// Identically zero for every pose quadruple; kept as a test oracle.
pub fn cycle_residual(a_j: &Pose, a_k: &Pose, b_j: &Pose, b_k: &Pose) -> Vec2 {
    let lhs = (a_k.position - a_j.position) + (b_k.position - a_k.position);
    let rhs = (b_j.position - a_j.position) + (b_k.position - b_j.position);
    lhs - rhs
}
