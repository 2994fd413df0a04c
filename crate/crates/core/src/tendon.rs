//! Tendon displacement and joint bending.
//!
//! Each continuum joint is a constant-curvature backbone of length `l` between
//! two rigid offsets `a`. A motor of rotor radius `r` winds a tendon anchored
//! at lateral offset `d`; the closed-form relation between motor angle and
//! bend angle is [`motor_angle_from_bend`], inverted numerically by
//! [`bend_from_motor_angle`].
//!
//! Globally routed tendons (back, abdomen, spiral) are modeled as pulls acting
//! on a fixed moment arm and spread uniformly over all joints.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::RobotSpec;

/// Below this bend magnitude `(2/θ)·sin(θ/2)` is evaluated by its Taylor series.
pub const SERIES_THRESHOLD: f64 = 1e-4;

/// Margin kept from ±π when bounding the motor angle range.
pub const BEND_RANGE_MARGIN: f64 = 1e-6;

const BISECTION_TOL: f64 = 1e-13;

/// Geometry shared by every continuum joint, in millimetres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointGeometry {
    /// Rigid offset from motor face to the start of the backbone arc.
    pub a: f64,
    /// Lateral offset of the tendon anchor.
    pub d: f64,
    /// Backbone arc length.
    pub l: f64,
    /// Motor rotor radius.
    pub r: f64,
}

impl Default for JointGeometry {
    fn default() -> Self {
        Self {
            a: 7.0,
            d: 10.5,
            l: 20.0,
            r: 10.5,
        }
    }
}

impl JointGeometry {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("a", self.a), ("d", self.d), ("l", self.l), ("r", self.r)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidSpec(format!(
                    "joint geometry `{name}` must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Length of one joint along the backbone: both rigid offsets plus the arc.
    pub fn span(&self) -> f64 {
        2.0 * self.a + self.l
    }

    /// Motor angle range reachable with |θ| ≤ π − margin.
    pub fn motor_range(&self) -> (f64, f64) {
        let hi = motor_angle_unchecked(std::f64::consts::PI - BEND_RANGE_MARGIN, self);
        (-hi, hi)
    }
}

/// Auxiliary lengths of the bent joint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BendGeometry {
    /// Backbone arc radius, `l/θ`.
    pub x: f64,
    /// `x·tan(θ/2)`.
    pub y: f64,
    /// Tendon-side radius, `l/θ + a·cot(θ/2)`.
    pub big_r: f64,
}

impl BendGeometry {
    /// Returns `None` for a straight joint, where all three lengths diverge.
    pub fn new(theta: f64, geom: &JointGeometry) -> Option<Self> {
        let theta = theta.abs();
        if theta == 0.0 {
            return None;
        }
        let half = 0.5 * theta;
        let x = geom.l / theta;
        let y = x * half.tan();
        let big_r = (y + geom.a) / half.tan();
        Some(Self { x, y, big_r })
    }

    /// Retracted tendon length predicted by the half-triangle relation: `2(R − d)·sin(θ/2)`.
    pub fn tendon_chord(&self, theta: f64, geom: &JointGeometry) -> f64 {
        2.0 * (self.big_r - geom.d) * (0.5 * theta.abs()).sin()
    }
}

/// `(2/θ)·sin(θ/2)`, switching to its series near zero.
fn half_angle_sinc(theta: f64) -> f64 {
    if theta.abs() < SERIES_THRESHOLD {
        let t2 = theta * theta;
        1.0 - t2 / 24.0 + t2 * t2 / 1920.0
    } else {
        2.0 / theta * (0.5 * theta).sin()
    }
}

/// `1 − (2/θ)·sin(θ/2)` without cancellation near zero.
fn one_minus_half_angle_sinc(theta: f64) -> f64 {
    if theta.abs() < SERIES_THRESHOLD {
        let t2 = theta * theta;
        t2 / 24.0 - t2 * t2 / 1920.0
    } else {
        1.0 - half_angle_sinc(theta)
    }
}

fn motor_angle_unchecked(theta: f64, geom: &JointGeometry) -> f64 {
    let half = 0.5 * theta;
    // 1 − cos(θ/2) = 2·sin²(θ/4)
    let s4 = (0.25 * theta).sin();
    let t1 = 2.0 * geom.a / geom.r * (2.0 * s4 * s4);
    let t2 = geom.l / geom.r * one_minus_half_angle_sinc(theta);
    let t3 = 2.0 * geom.d / geom.r * half.sin();
    if theta >= 0.0 {
        t1 + t2 + t3
    } else {
        // right-side tendon: first two terms change sign
        -t1 - t2 + t3
    }
}

/// Motor angle (rad) needed to hold a joint at bend angle `theta` (rad).
pub fn motor_angle_from_bend(theta: f64, geom: &JointGeometry) -> Result<f64> {
    if !theta.is_finite() || theta.abs() >= std::f64::consts::PI {
        return Err(Error::BendOutOfRange { theta });
    }
    Ok(motor_angle_unchecked(theta, geom))
}

/// Bend angle (rad) produced by motor angle `alpha` (rad).
///
/// The forward map is strictly increasing on (0, π) and odd, so the inverse
/// is found by bisection on |α| and the sign restored afterwards.
pub fn bend_from_motor_angle(alpha: f64, geom: &JointGeometry) -> Result<f64> {
    let (min, max) = geom.motor_range();
    if !alpha.is_finite() || alpha < min || alpha > max {
        return Err(Error::MotorAngleOutOfRange { alpha, min, max });
    }
    if alpha == 0.0 {
        return Ok(0.0);
    }
    let target = alpha.abs();
    let mut lo = 0.0_f64;
    let mut hi = std::f64::consts::PI - BEND_RANGE_MARGIN;
    while hi - lo > BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if motor_angle_unchecked(mid, geom) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(alpha.signum() * 0.5 * (lo + hi))
}

/// Winding direction of the spiral tendons around the body.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpiralHandedness {
    #[default]
    Right,
    Left,
}

impl SpiralHandedness {
    /// Sign of the axial twist produced by a positive spiral pull; the body
    /// twists against the winding direction.
    pub fn twist_sign(self) -> f64 {
        match self {
            SpiralHandedness::Right => -1.0,
            SpiralHandedness::Left => 1.0,
        }
    }
}

/// Pull displacements (mm) of the globally routed tendons.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GlobalTendonState {
    /// Back tendons.
    pub upper_pull: f64,
    /// Abdomen tendons.
    pub lower_pull: f64,
    /// Spiral tendons.
    pub spiral_pull: f64,
}

impl GlobalTendonState {
    pub const ZERO: Self = Self {
        upper_pull: 0.0,
        lower_pull: 0.0,
        spiral_pull: 0.0,
    };

    pub fn new(upper_pull: f64, lower_pull: f64, spiral_pull: f64) -> Self {
        Self {
            upper_pull,
            lower_pull,
            spiral_pull,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.upper_pull, self.lower_pull, self.spiral_pull];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidGait(format!(
                "tendon pulls must be finite and non-negative, got {self:?}"
            )));
        }
        if self.upper_pull > 0.0 && self.lower_pull > 0.0 {
            return Err(Error::InvalidGait(
                "upper and lower tendons are antagonistic and cannot both be pulled".into(),
            ));
        }
        Ok(())
    }

    /// Net vertical pull; positive bends the body upward-concave.
    pub fn net_vertical(&self) -> f64 {
        self.upper_pull - self.lower_pull
    }

    /// Builds a state from a net vertical pull, assigning it to whichever
    /// antagonist is active.
    pub fn from_net_vertical(net: f64, spiral_pull: f64) -> Self {
        Self {
            upper_pull: net.max(0.0),
            lower_pull: (-net).max(0.0),
            spiral_pull,
        }
    }

    /// Linear blend between two states. The vertical pair is blended through
    /// its net value so that the antagonists are never pulled together.
    pub fn lerp(&self, other: &Self, s: f64) -> Self {
        let s = s.clamp(0.0, 1.0);
        let net = (1.0 - s) * self.net_vertical() + s * other.net_vertical();
        let spiral = (1.0 - s) * self.spiral_pull + s * other.spiral_pull;
        Self::from_net_vertical(net, spiral)
    }
}

/// Per-joint `(vertical_bend, axial_twist)` in radians produced by the global tendons.
///
/// Total vertical bend is `(L_u − L_l)/housing_radius` and total twist is
/// `L_t/housing_radius`, both split evenly among the joints.
pub fn global_tendons_to_joint_offsets(
    state: &GlobalTendonState,
    spec: &RobotSpec,
) -> Vec<(f64, f64)> {
    let n = spec.joint_count();
    let per_joint_vertical = state.net_vertical() / spec.housing_radius / n as f64;
    let per_joint_twist =
        spec.spiral_handedness.twist_sign() * state.spiral_pull / spec.housing_radius / n as f64;
    vec![(per_joint_vertical, per_joint_twist); n]
}
