//! Planar poses, rotations, and the map between world poses and the
//! relative shape coordinates `(rho, alpha1, alpha2)`.
//!
//! Convention: `R(alpha1) x1 = r21 / rho` and `R(alpha2) x2 = r12 / rho`,
//! with `r_ij = r_i - r_j` and `R` a counterclockwise rotation. The target
//! formation has the follower on the leader's right, `(rho0, -pi/2, pi/2)`.

use std::f64::consts::{PI, TAU};
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{FormationError, Result};

/// Distances at or below this are treated as coincident agents.
pub const RHO_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Unit vector at angle `theta` from the x axis.
    pub fn unit(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self { x: c, y: s }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the planar cross product.
    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<Vec2> for f64 {
    type Output = Vec2;
    fn mul(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self * rhs.x, self * rhs.y)
    }
}

/// Counterclockwise rotation of `v` by `angle`.
pub fn rotate(angle: f64, v: Vec2) -> Vec2 {
    let (s, c) = angle.sin_cos();
    Vec2::new(c * v.x - s * v.y, s * v.x + c * v.y)
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a - TAU * ((a + PI) / TAU).floor();
    if w <= -PI {
        w + TAU
    } else {
        w
    }
}

/// Removes `2 pi` jumps between consecutive samples so the sequence is
/// continuous. The first sample is kept as is.
pub fn unwrap_angles(a: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len());
    let mut offset = 0.0;
    for (k, &x) in a.iter().enumerate() {
        if k > 0 {
            offset += wrap_angle(x - a[k - 1]) - (x - a[k - 1]);
        }
        out.push(x + offset);
    }
    out
}

/// World-frame pose of a unicycle. The body frame is derived from `theta`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AgentState {
    pub r: Vec2,
    pub theta: f64,
}

impl AgentState {
    pub const fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { r: Vec2::new(x, y), theta }
    }

    /// Unit tangent (heading) vector.
    pub fn tangent(&self) -> Vec2 {
        Vec2::unit(self.theta)
    }

    /// Unit normal, the tangent rotated a quarter turn counterclockwise.
    pub fn normal(&self) -> Vec2 {
        let (s, c) = self.theta.sin_cos();
        Vec2::new(-s, c)
    }
}

/// Relative coordinates of a leader/follower pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeState {
    pub rho: f64,
    pub alpha1: f64,
    pub alpha2: f64,
}

impl ShapeState {
    /// Builds a shape state with wrapped angles. Rejects `rho <= 0`.
    pub fn new(rho: f64, alpha1: f64, alpha2: f64) -> Result<Self> {
        if !(rho > 0.0) {
            return Err(FormationError::NonpositiveDistance(rho));
        }
        Ok(Self { rho, alpha1: wrap_angle(alpha1), alpha2: wrap_angle(alpha2) })
    }

    /// The abreast formation at distance `rho0`, follower on the right.
    pub fn target(rho0: f64) -> Self {
        Self { rho: rho0, alpha1: -PI / 2.0, alpha2: PI / 2.0 }
    }

    pub fn reduced(&self) -> ReducedShapeState {
        ReducedShapeState { rho: self.rho, alpha1: self.alpha1 }
    }

    /// Same state with both angles wrapped into `(-pi, pi]`.
    pub fn wrapped(&self) -> Self {
        Self { rho: self.rho, alpha1: wrap_angle(self.alpha1), alpha2: wrap_angle(self.alpha2) }
    }

    /// Absolute distance to [`ShapeState::target`], angles on the circle.
    pub fn error_to_target(&self, rho0: f64) -> [f64; 3] {
        [(self.rho - rho0).abs(), wrap_angle(self.alpha1 + PI / 2.0).abs(), wrap_angle(self.alpha2 - PI / 2.0).abs()]
    }

    /// [`ShapeState::error_to_target`] relative to `(rho0, pi/2, pi/2)`.
    pub fn relative_error_to_target(&self, rho0: f64) -> [f64; 3] {
        let [r, a1, a2] = self.error_to_target(rho0);
        [r / rho0, a1 / (PI / 2.0), a2 / (PI / 2.0)]
    }
}

/// `(rho, alpha1)` on the `alpha2 = pi/2` manifold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReducedShapeState {
    pub rho: f64,
    pub alpha1: f64,
}

impl ReducedShapeState {
    pub fn new(rho: f64, alpha1: f64) -> Result<Self> {
        if !(rho > 0.0) {
            return Err(FormationError::NonpositiveDistance(rho));
        }
        Ok(Self { rho, alpha1 })
    }

    pub fn target(rho0: f64) -> Self {
        Self { rho: rho0, alpha1: -PI / 2.0 }
    }
}

pub(crate) fn guard_rho(rho: f64) -> Result<()> {
    if rho > RHO_EPS {
        Ok(())
    } else {
        Err(FormationError::CoincidentAgents { rho, threshold: RHO_EPS })
    }
}

/// Shape coordinates of `follower` relative to `leader`.
pub fn shape_from_world(leader: &AgentState, follower: &AgentState) -> Result<ShapeState> {
    let r21 = follower.r - leader.r;
    let rho = r21.norm();
    guard_rho(rho)?;
    let alpha1 = wrap_angle(r21.angle() - leader.theta);
    // r12 points the other way, so its angle is r21's plus pi.
    let alpha2 = wrap_angle(r21.angle() + PI - follower.theta);
    Ok(ShapeState { rho, alpha1, alpha2 })
}

/// Inverse of [`shape_from_world`]: places the follower given the leader pose.
pub fn follower_from_shape(leader: &AgentState, z: &ShapeState) -> AgentState {
    let bearing = leader.theta + z.alpha1;
    let r = leader.r + z.rho * Vec2::unit(bearing);
    AgentState { r, theta: wrap_angle(bearing + PI - z.alpha2) }
}
