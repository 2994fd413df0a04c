//! Simulation core for a tendon-driven snake robot: joint actuation, chain
//! kinematics, gait generation and quasi-static friction locomotion.

pub mod contact;
pub mod error;
pub mod gait;
pub mod io;
pub mod kinematics;
pub mod sim;
pub mod teleop;
pub mod tendon;

pub use contact::{
    advance_pose, detect_contacts, friction_force, solve_quasi_static, BodyMotion, ContactPoint,
    FrictionParams, SolverReport,
};
pub use error::{Error, Result};
pub use gait::{
    amplitude_taper, joint_targets, motor_setpoint, preset, GaitKind, GaitParams, SteeringInput,
    TendonRamp,
};
pub use kinematics::{
    forward_kinematics, joint_transform, settle_on_ground, shape_velocity, BodyShape, JointConfig,
    PlanarPose, RobotSpec,
};
pub use sim::{
    compute_metrics, run_episode, step, Metrics, SimConfig, SimState, Simulator, TickRow,
    TrajectoryRecord,
};
pub use teleop::{Command, LoggedCommand, ServerMessage, StateFrame, TeleopSession, TickOutcome};
pub use tendon::{
    bend_from_motor_angle, global_tendons_to_joint_offsets, motor_angle_from_bend, BendGeometry,
    GlobalTendonState, JointGeometry, SpiralHandedness,
};
