//! Fixed-step episode driver and locomotion metrics.
//!
//! Each tick poses the chain from the gait, rests it on the ground, expresses
//! it in its own planar frame, and lets the friction balance decide how that
//! frame moves in the world.

use nalgebra::{Point3, UnitQuaternion, Vector2};
use serde::{Deserialize, Serialize};

use crate::contact::{
    advance_pose, attach_offsets, detect_contacts, solve_quasi_static, BodyMotion, FrictionParams,
    SolverReport,
};
use crate::error::{Error, Result};
use crate::gait::{joint_targets_with_tendons, GaitKind, GaitParams, SteeringInput, TendonRamp};
use crate::kinematics::{
    forward_kinematics, rest_on_ground, shape_velocity_decomposed, to_planar_frame, BodyShape,
    PlanarPose, RobotSpec,
};
use crate::tendon::GlobalTendonState;

/// Default time step, s.
pub const DEFAULT_DT: f64 = 0.01;

/// Speeds measured on hardware, mm/s.
pub const HARDWARE_SPEEDS: [(GaitKind, f64); 3] = [
    (GaitKind::Forward, 27.6),
    (GaitKind::Backward, 35.5),
    (GaitKind::Sidewinding, 20.0),
];

/// Order-of-magnitude band simulated speeds are expected to fall in, mm/s.
pub const SPEED_SANITY_BAND: (f64, f64) = (5.0, 150.0);

pub fn hardware_speed(kind: GaitKind) -> Option<f64> {
    HARDWARE_SPEEDS.iter().find(|(k, _)| *k == kind).map(|(_, v)| *v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub spec: RobotSpec,
    pub gait: GaitParams,
    pub friction: FrictionParams,
    pub steering: SteeringInput,
    /// s.
    pub dt: f64,
    pub cycles: usize,
    pub output: Option<String>,
}

impl Default for SimConfig {
    fn default() -> Self {
        let spec = RobotSpec::default();
        Self {
            friction: FrictionParams {
                mu: spec.friction_coefficient,
                ..FrictionParams::default()
            },
            spec,
            gait: GaitParams::default(),
            steering: SteeringInput::default(),
            dt: DEFAULT_DT,
            cycles: 10,
            output: None,
        }
    }
}

impl SimConfig {
    pub fn with_gait(gait: GaitParams) -> Self {
        Self {
            gait,
            ..Self::default()
        }
    }

    /// Ticks per undulation period; the period must be a whole number of steps.
    pub fn ticks_per_cycle(&self) -> Result<usize> {
        ticks_per_cycle(self.gait.period, self.dt)
    }

    pub fn total_ticks(&self) -> Result<usize> {
        Ok(self.ticks_per_cycle()? * self.cycles)
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        self.gait.validate(&self.spec)?;
        self.friction.validate()?;
        self.steering.validate()?;
        if self.friction.mu != self.spec.friction_coefficient {
            return Err(Error::InvalidConfig(format!(
                "friction coefficient disagrees between robot ({}) and friction ({}) parameters",
                self.spec.friction_coefficient, self.friction.mu
            )));
        }
        if !(self.dt > 0.0) {
            return Err(Error::NonPositiveTimeStep(self.dt));
        }
        if self.dt > self.gait.period / 50.0 {
            return Err(Error::InvalidConfig(format!(
                "dt {} s exceeds period/50 = {} s",
                self.dt,
                self.gait.period / 50.0
            )));
        }
        if self.cycles < 1 {
            return Err(Error::InvalidConfig("cycles must be at least 1".into()));
        }
        self.ticks_per_cycle()?;
        Ok(())
    }
}

pub fn ticks_per_cycle(period: f64, dt: f64) -> Result<usize> {
    let ratio = period / dt;
    let n = ratio.round();
    if !(n >= 1.0) || (ratio - n).abs() > 1e-9 * n {
        return Err(Error::InvalidConfig(format!(
            "period {period} s is not a whole number of {dt} s steps"
        )));
    }
    Ok(n as usize)
}

/// Everything a tick reads but does not change.
#[derive(Debug, Clone, PartialEq)]
pub struct SimInputs {
    pub spec: RobotSpec,
    pub friction: FrictionParams,
    pub gait: GaitParams,
    pub steering: SteeringInput,
    pub ramp: TendonRamp,
}

impl SimInputs {
    pub fn from_config(config: &SimConfig) -> Self {
        Self {
            spec: config.spec,
            friction: config.friction,
            gait: config.gait,
            steering: config.steering,
            ramp: TendonRamp::episode_start(&config.gait),
        }
    }
}

/// Evolving episode state.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub tick: u64,
    /// Ticks since gait time zero.
    pub clock: u64,
    /// Gait time, s.
    pub t: f64,
    /// Pose of the body's planar frame in the world.
    pub pose: PlanarPose,
    /// Last solved motion; seeds the next solve.
    pub motion: BodyMotion,
    /// Body-frame velocity of the planar frame over the last tick.
    pub twist: BodyMotion,
    /// Resting attitude of the head frame, reused as the next tick's starting guess.
    pub rest_rotation: UnitQuaternion<f64>,
    /// Shape expressed in its planar frame.
    pub shape: BodyShape,
    /// Centerline indices touching the ground.
    pub contacts: Vec<usize>,
    pub tendons: GlobalTendonState,
    pub report: Option<SolverReport>,
}

impl SimState {
    /// Centerline in world coordinates.
    pub fn world_centerline(&self) -> Vec<Point3<f64>> {
        let iso = self.pose.to_isometry();
        self.shape.centerline.iter().map(|p| iso * p).collect()
    }
}

fn rested_local_shape(
    inputs: &SimInputs,
    t: f64,
    tendons: &GlobalTendonState,
    warm: &UnitQuaternion<f64>,
) -> Result<(BodyShape, UnitQuaternion<f64>)> {
    let cfg = joint_targets_with_tendons(t, &inputs.gait, &inputs.steering, &inputs.spec, tendons)?;
    let mut raw = forward_kinematics(&inputs.spec, &cfg)?;
    raw.timestamp = t;
    let (rested, rot) = rest_on_ground(&raw, warm);
    let (local, _) = to_planar_frame(&rested);
    Ok((local, rot))
}

fn contact_indices(shape: &BodyShape, inputs: &SimInputs) -> Vec<usize> {
    detect_contacts(shape, &inputs.spec, &inputs.friction)
        .iter()
        .map(|c| c.index)
        .collect()
}

/// Starting state at gait time zero with the body's planar frame placed at `pose`.
pub fn initial_state(inputs: &SimInputs, pose: PlanarPose) -> Result<SimState> {
    let t = 0.0;
    let tendons = inputs.ramp.state_at(t);
    let (shape, rest_rotation) = rested_local_shape(inputs, t, &tendons, &UnitQuaternion::identity())?;
    let contacts = contact_indices(&shape, inputs);
    Ok(SimState {
        tick: 0,
        clock: 0,
        t,
        pose,
        motion: BodyMotion::ZERO,
        twist: BodyMotion::ZERO,
        rest_rotation,
        shape,
        contacts,
        tendons,
        report: None,
    })
}

/// Advances one tick. Deterministic: equal inputs give bit-identical outputs.
pub fn step(inputs: &SimInputs, state: &SimState, dt: f64) -> Result<SimState> {
    let tick = state.tick + 1;
    let wrap = |e: Error| Error::Tick {
        tick,
        source: Box::new(e),
    };
    if !(dt > 0.0) {
        return Err(Error::NonPositiveTimeStep(dt));
    }
    let clock = state.clock + 1;
    let t1 = clock as f64 * dt;
    let tendons = inputs.ramp.state_at(t1);
    let (next, rest_rotation) =
        rested_local_shape(inputs, t1, &tendons, &state.rest_rotation).map_err(wrap)?;

    let vel = shape_velocity_decomposed(&state.shape, &next, dt).map_err(wrap)?;
    let mut contacts = detect_contacts(&state.shape, &inputs.spec, &inputs.friction);
    attach_offsets(&mut contacts, &vel.offsets);
    let report = solve_quasi_static(&contacts, &inputs.friction, inputs.spec.total_length, state.motion)
        .map_err(wrap)?;

    // velocity of the planar frame: solved rigid motion about the contact
    // centroid, transported to the frame origin, minus the rigid drift of the
    // shape within its own frame
    let m = report.motion;
    let c = report.centroid;
    let c0 = state.shape.planar_centroid();
    let twist = BodyMotion::new(
        m.vx + m.omega * c.y - vel.translation.x - vel.spin * c0.y,
        m.vy - m.omega * c.x - vel.translation.y + vel.spin * c0.x,
        m.omega - vel.spin,
    );
    let pose = advance_pose(&state.pose, &twist, dt);
    let contacts = contact_indices(&next, inputs);

    Ok(SimState {
        tick,
        clock,
        t: t1,
        pose,
        motion: m,
        twist,
        rest_rotation,
        shape: next,
        contacts,
        tendons,
        report: Some(report),
    })
}

/// One trajectory row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TickRow {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub vx: f64,
    pub vy: f64,
    pub omega: f64,
    pub contact_count: usize,
    /// Larger of the force and moment residuals, each relative to its tolerance scale.
    pub solver_residual: f64,
    pub solver_iterations: usize,
}

impl TickRow {
    pub fn pose(&self) -> PlanarPose {
        PlanarPose::new(self.x, self.y, self.heading)
    }

    fn from_state(state: &SimState, spec: &RobotSpec, friction: &FrictionParams) -> Self {
        let (residual, iterations) = match &state.report {
            Some(r) => {
                let scale = friction.mu * spec.weight();
                (
                    (r.force_residual / scale).max(r.moment_residual / (scale * spec.total_length)),
                    r.iterations,
                )
            }
            None => (0.0, 0),
        };
        Self {
            t: state.t,
            x: state.pose.x,
            y: state.pose.y,
            heading: state.pose.heading,
            vx: state.twist.vx,
            vy: state.twist.vy,
            omega: state.twist.omega,
            contact_count: 0,
            solver_residual: residual,
            solver_iterations: iterations,
        }
    }
}

/// World-frame centerline at one tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub centerline: Vec<[f64; 3]>,
    pub contacts: Vec<usize>,
}

impl Snapshot {
    pub fn from_state(state: &SimState) -> Self {
        Self {
            t: state.t,
            centerline: state.world_centerline().iter().map(|p| [p.x, p.y, p.z]).collect(),
            contacts: state.contacts.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryRecord {
    pub rows: Vec<TickRow>,
    pub snapshots: Option<Vec<Snapshot>>,
}

/// Stateful wrapper around [`step`] for interactive use.
#[derive(Debug, Clone)]
pub struct Simulator {
    inputs: SimInputs,
    state: SimState,
    dt: f64,
}

impl Simulator {
    pub fn new(config: &SimConfig) -> Result<Self> {
        config.validate()?;
        let inputs = SimInputs::from_config(config);
        let state = initial_state(&inputs, PlanarPose::default())?;
        Ok(Self {
            inputs,
            state,
            dt: config.dt,
        })
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn inputs(&self) -> &SimInputs {
        &self.inputs
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Advances one tick and returns its trajectory row.
    pub fn step(&mut self) -> Result<TickRow> {
        let contact_count = self.state.contacts.len();
        self.state = step(&self.inputs, &self.state, self.dt)?;
        let mut row = TickRow::from_state(&self.state, &self.inputs.spec, &self.inputs.friction);
        row.contact_count = contact_count;
        Ok(row)
    }

    /// Sets the steering bias, clamped; takes effect on the next tick.
    pub fn set_bias(&mut self, bias_deg: f64) {
        self.inputs.steering = self.inputs.steering.with_bias(bias_deg);
    }

    /// Switches gait, ramping the global tendons from their current pulls to
    /// the new ones over one period of the new gait.
    pub fn set_gait(&mut self, gait: GaitParams) -> Result<()> {
        gait.validate(&self.inputs.spec)?;
        self.inputs.ramp = TendonRamp {
            from: self.state.tendons,
            to: gait.tendons,
            start: self.state.t,
            duration: gait.period,
        };
        self.inputs.gait = gait;
        Ok(())
    }

    pub fn set_friction(&mut self, friction: FrictionParams) -> Result<()> {
        friction.validate()?;
        self.inputs.spec.friction_coefficient = friction.mu;
        self.inputs.friction = friction;
        Ok(())
    }

    /// Returns to the starting shape at gait time zero, keeping the world pose.
    pub fn reset(&mut self) -> Result<()> {
        self.inputs.ramp = TendonRamp::episode_start(&self.inputs.gait);
        let tick = self.state.tick;
        self.state = initial_state(&self.inputs, self.state.pose)?;
        self.state.tick = tick;
        Ok(())
    }
}

/// Runs `config.cycles` periods from the starting shape.
pub fn run_episode(config: &SimConfig) -> Result<TrajectoryRecord> {
    run_episode_with(config, false, |_, _| None)
}

/// Runs an episode, optionally recording snapshots, with `bias_at(tick, state)`
/// able to change the steering bias before each tick.
pub fn run_episode_with<F>(config: &SimConfig, snapshots: bool, mut bias_at: F) -> Result<TrajectoryRecord>
where
    F: FnMut(u64, &SimState) -> Option<f64>,
{
    let mut sim = Simulator::new(config)?;
    let ticks = config.total_ticks()?;
    let mut rows = Vec::with_capacity(ticks);
    let mut snaps = snapshots.then(|| Vec::with_capacity(ticks));
    for k in 0..ticks as u64 {
        if let Some(b) = bias_at(k, sim.state()) {
            sim.set_bias(b);
        }
        rows.push(sim.step()?);
        if let Some(s) = snaps.as_mut() {
            s.push(Snapshot::from_state(sim.state()));
        }
    }
    Ok(TrajectoryRecord { rows, snapshots: snaps })
}

/// Displacement over one period, resolved in the body frame at its start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleDisplacement {
    /// Towards the head, mm.
    pub axial: f64,
    /// Towards the body's left, mm.
    pub lateral: f64,
    /// deg.
    pub heading_change: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// mm/s.
    pub mean_speed: f64,
    /// deg per cycle, positive to the left.
    pub heading_drift: f64,
    /// Unit vector of the net displacement (zero if there is none).
    pub direction: [f64; 2],
    pub per_cycle: Vec<CycleDisplacement>,
    /// Sum of per-cycle axial displacements, mm.
    pub axial: f64,
    /// Sum of per-cycle lateral displacements, mm.
    pub lateral: f64,
    /// Net displacement over the measured cycles, mm.
    pub net_displacement: f64,
    pub cycles: usize,
}

impl Metrics {
    /// Net displacement per measured cycle, mm.
    pub fn displacement_per_cycle(&self) -> f64 {
        self.net_displacement / self.cycles.max(1) as f64
    }
}

/// Speed, drift and per-cycle displacement over whole cycles after the first.
pub fn compute_metrics(traj: &TrajectoryRecord, period: f64) -> Result<Metrics> {
    let dt = match traj.rows.first() {
        Some(r) => r.t,
        None => return Err(Error::TrajectoryTooShort { needed: 2, have: 0 }),
    };
    let per = ticks_per_cycle(period, dt)?;
    let have = traj.rows.len();
    if have < 2 * per {
        return Err(Error::TrajectoryTooShort { needed: 2 * per, have });
    }
    let full = have / per;
    let pose_at = |k: usize| traj.rows[k - 1].pose();
    let mut per_cycle = Vec::with_capacity(full - 1);
    for c in 1..full {
        let a = pose_at(c * per);
        let b = pose_at((c + 1) * per);
        let d = b.position() - a.position();
        let fwd = a.forward();
        per_cycle.push(CycleDisplacement {
            axial: d.dot(&fwd),
            lateral: fwd.perp(&d),
            heading_change: (b.heading - a.heading).to_degrees(),
        });
    }
    let start = pose_at(per);
    let end = pose_at(full * per);
    let net: Vector2<f64> = end.position() - start.position();
    let elapsed = end_time(traj, full * per) - end_time(traj, per);
    let cycles = full - 1;
    let norm = net.norm();
    Ok(Metrics {
        mean_speed: norm / elapsed,
        heading_drift: (end.heading - start.heading).to_degrees() / cycles as f64,
        direction: if norm > 0.0 { [net.x / norm, net.y / norm] } else { [0.0, 0.0] },
        axial: per_cycle.iter().map(|c| c.axial).sum(),
        lateral: per_cycle.iter().map(|c| c.lateral).sum(),
        per_cycle,
        net_displacement: norm,
        cycles,
    })
}

fn end_time(traj: &TrajectoryRecord, tick: usize) -> f64 {
    traj.rows[tick - 1].t
}
