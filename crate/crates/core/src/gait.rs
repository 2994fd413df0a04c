//! Motor setpoints for undulation, presets, taper and steering bias.
//!
//! Angles in this module are in degrees, matching how gaits are specified;
//! conversion to radians happens in [`joint_targets`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{JointConfig, RobotSpec};
use crate::tendon::{bend_from_motor_angle, global_tendons_to_joint_offsets, GlobalTendonState};

/// Default head-end amplitude boost, deg.
pub const DEFAULT_TAPER_DEG: f64 = 27.5;
/// Default steering clamp, deg.
pub const DEFAULT_BIAS_CLAMP_DEG: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GaitKind {
    Forward,
    Backward,
    Sidewinding,
    Custom,
}

impl GaitKind {
    pub const PRESETS: [GaitKind; 3] = [GaitKind::Forward, GaitKind::Backward, GaitKind::Sidewinding];

    pub fn as_str(self) -> &'static str {
        match self {
            GaitKind::Forward => "forward",
            GaitKind::Backward => "backward",
            GaitKind::Sidewinding => "sidewinding",
            GaitKind::Custom => "custom",
        }
    }
}

impl fmt::Display for GaitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GaitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "forward" => Ok(GaitKind::Forward),
            "backward" => Ok(GaitKind::Backward),
            "sidewinding" => Ok(GaitKind::Sidewinding),
            "custom" => Ok(GaitKind::Custom),
            other => Err(Error::InvalidGait(format!("unknown gait kind `{other}`"))),
        }
    }
}

/// Undulation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaitParams {
    /// Motor amplitude, deg.
    pub amplitude: f64,
    /// s.
    pub period: f64,
    /// Phase lag between consecutive motors, deg.
    pub phase_shift: f64,
    /// Extra amplitude at the head motor, tapering linearly to zero at the tail, deg.
    pub taper_head_extra: f64,
    pub tendons: GlobalTendonState,
    pub kind: GaitKind,
}

impl Default for GaitParams {
    fn default() -> Self {
        preset(GaitKind::Forward).expect("forward preset exists")
    }
}

impl GaitParams {
    /// Checks ranges and, for preset kinds, which tendons may be pulled.
    ///
    /// A zero amplitude is accepted as a stationary gait.
    pub fn validate(&self, spec: &RobotSpec) -> Result<()> {
        if !(self.period.is_finite() && self.period > 0.0) {
            return Err(Error::InvalidGait(format!("period must be positive, got {}", self.period)));
        }
        if !(self.phase_shift > 0.0 && self.phase_shift < 180.0) {
            return Err(Error::InvalidGait(format!(
                "phase shift must lie in (0, 180) deg, got {}",
                self.phase_shift
            )));
        }
        if !(self.taper_head_extra.is_finite() && self.taper_head_extra >= 0.0) {
            return Err(Error::InvalidGait(format!(
                "taper must be non-negative, got {}",
                self.taper_head_extra
            )));
        }
        let (_, max) = spec.joint_geometry.motor_range();
        let peak = self.amplitude + self.taper_head_extra;
        if !(self.amplitude.is_finite() && self.amplitude >= 0.0) || peak >= max.to_degrees() {
            return Err(Error::InvalidGait(format!(
                "amplitude {} deg (peak {peak} deg with taper) is outside the motor range (0, {:.3}) deg",
                self.amplitude,
                max.to_degrees()
            )));
        }
        self.tendons.validate()?;
        let t = &self.tendons;
        let bad = match self.kind {
            GaitKind::Forward => t.lower_pull > 0.0 || t.spiral_pull > 0.0,
            GaitKind::Backward => t.upper_pull > 0.0 || t.spiral_pull > 0.0,
            GaitKind::Sidewinding => t.lower_pull > 0.0,
            GaitKind::Custom => false,
        };
        if bad {
            return Err(Error::InvalidGait(format!(
                "tendon pulls {t:?} are inconsistent with the {} gait",
                self.kind
            )));
        }
        Ok(())
    }
}

/// Preset gait parameters.
pub fn preset(kind: GaitKind) -> Result<GaitParams> {
    let tendons = match kind {
        GaitKind::Forward => GlobalTendonState::new(52.4, 0.0, 0.0),
        GaitKind::Backward => GlobalTendonState::new(0.0, 69.8, 0.0),
        GaitKind::Sidewinding => GlobalTendonState::new(14.0, 0.0, 27.9),
        GaitKind::Custom => return Err(Error::NoPreset(kind.to_string())),
    };
    Ok(GaitParams {
        amplitude: 90.18,
        period: 3.0,
        phase_shift: 45.0,
        taper_head_extra: DEFAULT_TAPER_DEG,
        tendons,
        kind,
    })
}

/// Operator steering bias added to every motor, deg.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteeringInput {
    /// Positive turns left.
    pub bias: f64,
    pub clamp: f64,
}

impl Default for SteeringInput {
    fn default() -> Self {
        Self {
            bias: 0.0,
            clamp: DEFAULT_BIAS_CLAMP_DEG,
        }
    }
}

impl SteeringInput {
    /// Builds an input with the bias clamped to `±clamp`.
    pub fn new(bias: f64, clamp: f64) -> Self {
        let clamp = clamp.abs();
        Self {
            bias: bias.clamp(-clamp, clamp),
            clamp,
        }
    }

    pub fn with_bias(self, bias: f64) -> Self {
        Self::new(bias, self.clamp)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.bias.is_finite() || !self.clamp.is_finite() || self.bias.abs() > self.clamp {
            return Err(Error::InvalidGait(format!(
                "bias {} deg exceeds clamp {} deg",
                self.bias, self.clamp
            )));
        }
        Ok(())
    }
}

/// Additional amplitude for motor `i` of `n`, deg.
pub fn amplitude_taper(i: usize, n: usize, extra: f64) -> f64 {
    if n <= 1 {
        return extra;
    }
    extra * (1.0 - i as f64 / (n - 1) as f64)
}

/// Phase of motor `i` at time `t`, deg, reduced to `[0, 360)`.
fn phase_deg(i: usize, t: f64, params: &GaitParams) -> f64 {
    let cycles = (t / params.period).rem_euclid(1.0);
    (360.0 * cycles - i as f64 * params.phase_shift).rem_euclid(360.0)
}

/// Setpoint of motor `i` (of `n`) at time `t`, deg.
pub fn motor_setpoint(i: usize, n: usize, t: f64, params: &GaitParams, steer: &SteeringInput) -> f64 {
    let amp = params.amplitude + amplitude_taper(i, n, params.taper_head_extra);
    amp * phase_deg(i, t, params).to_radians().sin() + steer.bias
}

/// Setpoints for every motor at time `t`, deg.
pub fn motor_setpoints(n: usize, t: f64, params: &GaitParams, steer: &SteeringInput) -> Vec<f64> {
    (0..n).map(|i| motor_setpoint(i, n, t, params, steer)).collect()
}

/// Linear transition of the global tendon pulls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TendonRamp {
    pub from: GlobalTendonState,
    pub to: GlobalTendonState,
    /// s.
    pub start: f64,
    /// s.
    pub duration: f64,
}

impl TendonRamp {
    /// Ramp from slack tendons, starting at `t = 0` and lasting one period.
    pub fn episode_start(params: &GaitParams) -> Self {
        Self {
            from: GlobalTendonState::ZERO,
            to: params.tendons,
            start: 0.0,
            duration: params.period,
        }
    }

    pub fn state_at(&self, t: f64) -> GlobalTendonState {
        let s = if self.duration > 0.0 {
            ((t - self.start) / self.duration).clamp(0.0, 1.0)
        } else {
            1.0
        };
        self.from.lerp(&self.to, s)
    }

    pub fn is_finished(&self, t: f64) -> bool {
        t >= self.start + self.duration
    }
}

/// Joint shapes at time `t` with the given global tendon state.
pub fn joint_targets_with_tendons(
    t: f64,
    params: &GaitParams,
    steer: &SteeringInput,
    spec: &RobotSpec,
    tendons: &GlobalTendonState,
) -> Result<Vec<JointConfig>> {
    let n = spec.joint_count();
    let offsets = global_tendons_to_joint_offsets(tendons, spec);
    motor_setpoints(n, t, params, steer)
        .into_iter()
        .zip(offsets)
        .map(|(alpha, (vertical, twist))| {
            let lateral = bend_from_motor_angle(alpha.to_radians(), &spec.joint_geometry)?;
            Ok(JointConfig::new(lateral, vertical, twist))
        })
        .collect()
}

/// Joint shapes at time `t` of an episode, with tendons ramping in over the first period.
pub fn joint_targets(
    t: f64,
    params: &GaitParams,
    steer: &SteeringInput,
    spec: &RobotSpec,
) -> Result<Vec<JointConfig>> {
    let tendons = TendonRamp::episode_start(params).state_at(t);
    joint_targets_with_tendons(t, params, steer, spec, &tendons)
}

/// Number of sign changes along a setpoint sequence, counting exact zeros
/// (within `tol` of the largest magnitude) as crossings.
pub fn zero_crossings(values: &[f64], tol: f64) -> usize {
    let scale = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let eps = tol * scale;
    let mut count = 0;
    let mut last_sign = 0.0;
    for v in values {
        if v.abs() <= eps {
            count += 1;
            last_sign = 0.0;
            continue;
        }
        let s = v.signum();
        if last_sign != 0.0 && s != last_sign {
            count += 1;
        }
        last_sign = s;
    }
    count
}
