//! Teleoperation session: command handling, state frames and command logs.
//!
//! This is the transport-free half of the streaming service. A session owns a
//! [`Simulator`], applies operator commands between ticks and produces state
//! frames every `decimation` ticks. Replaying a command log against a fresh
//! session reproduces the same frames.

use std::collections::VecDeque;
use std::io::{BufRead, Write};

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gait::{preset, GaitKind};
use crate::sim::{SimConfig, Simulator};

/// Keys accepted by [`Command::SetParam`].
pub const PARAM_WHITELIST: [&str; 9] = [
    "gait.amplitude_deg",
    "gait.phase_shift_deg",
    "gait.taper_deg",
    "gait.Lu_mm",
    "gait.Ll_mm",
    "gait.Lt_mm",
    "mu",
    "smoothing_eps",
    "contact_eps_mm",
];

/// Operator command, tagged by `type` on the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Command {
    SetBias { value: f64 },
    SetGait { value: GaitKind },
    Start,
    Stop,
    Reset,
    SetParam { key: String, value: f64 },
}

impl Command {
    /// Parses a JSON command and checks everything that does not depend on session state.
    pub fn parse(text: &str) -> Result<Command> {
        let cmd: Command = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        cmd.validate()?;
        Ok(cmd)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Command::SetBias { value } if !value.is_finite() => Err(Error::InvalidField {
                field: "value".into(),
                message: "bias must be finite".into(),
            }),
            Command::SetGait { value: GaitKind::Custom } => Err(Error::NoPreset("custom".into())),
            Command::SetParam { key, value } => {
                if !PARAM_WHITELIST.contains(&key.as_str()) {
                    return Err(Error::UnknownParam(key.clone()));
                }
                if !value.is_finite() {
                    return Err(Error::InvalidField {
                        field: key.clone(),
                        message: "value must be finite".into(),
                    });
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FramePose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

/// Snapshot of the session broadcast to clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFrame {
    pub seq: u64,
    /// Gait time, s.
    pub t: f64,
    pub pose: FramePose,
    pub centerline: Vec<[f64; 3]>,
    pub contacts: Vec<usize>,
    /// Rolling one-period speed estimate, mm/s.
    pub speed: f64,
    pub gait: GaitKind,
    /// deg.
    pub bias: f64,
    pub running: bool,
}

/// Message sent from the service to clients, tagged by `type` on the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    State(StateFrame),
    Error { message: String },
    Warning { message: String },
}

impl ServerMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages always serialise")
    }
}

/// Command applied before the given session tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedCommand {
    pub tick: u64,
    pub command: Command,
}

pub fn write_command_log<W: Write>(entry: &LoggedCommand, mut out: W) -> Result<()> {
    let line = serde_json::to_string(entry).map_err(|e| Error::Io(e.to_string()))?;
    writeln!(out, "{line}")?;
    Ok(())
}

pub fn read_command_log<R: BufRead>(input: R) -> Result<Vec<LoggedCommand>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: LoggedCommand = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(entry);
    }
    Ok(out)
}

/// Result of one session tick.
#[derive(Debug, Clone, PartialEq)]
pub struct TickOutcome {
    pub frame: Option<StateFrame>,
    pub error: Option<Error>,
}

/// Interactive simulation with operator commands.
///
/// Sessions start stopped. Stopping freezes gait time, so a restart continues
/// the undulation from the phase it was paused at.
#[derive(Debug, Clone)]
pub struct TeleopSession {
    sim: Simulator,
    config: SimConfig,
    running: bool,
    tick: u64,
    seq: u64,
    decimation: u64,
    /// Running time and position, for the speed estimate.
    window: VecDeque<(f64, Vector2<f64>)>,
    elapsed: f64,
}

impl TeleopSession {
    pub fn new(config: &SimConfig, decimation: u64) -> Result<Self> {
        if decimation == 0 {
            return Err(Error::InvalidConfig("decimation must be at least 1".into()));
        }
        Ok(Self {
            sim: Simulator::new(config)?,
            config: config.clone(),
            running: false,
            tick: 0,
            seq: 0,
            decimation,
            window: VecDeque::new(),
            elapsed: 0.0,
        })
    }

    pub fn simulator(&self) -> &Simulator {
        &self.sim
    }

    pub fn is_running(&self) -> bool {
        self.running
    }

    /// Session ticks processed so far, running or not.
    pub fn tick_count(&self) -> u64 {
        self.tick
    }

    pub fn decimation(&self) -> u64 {
        self.decimation
    }

    pub fn dt(&self) -> f64 {
        self.sim.dt()
    }

    pub fn apply(&mut self, cmd: &Command) -> Result<()> {
        cmd.validate()?;
        match cmd {
            Command::SetBias { value } => self.sim.set_bias(*value),
            Command::SetGait { value } => self.sim.set_gait(preset(*value)?)?,
            Command::Start => self.running = true,
            Command::Stop => self.running = false,
            Command::Reset => {
                self.sim.reset()?;
                self.window.clear();
            }
            Command::SetParam { key, value } => self.set_param(key, *value)?,
        }
        Ok(())
    }

    fn set_param(&mut self, key: &str, value: f64) -> Result<()> {
        let (old_gait, old_friction) = (self.sim.inputs().gait, self.sim.inputs().friction);
        let mut gait = old_gait;
        let mut friction = old_friction;
        match key {
            "gait.amplitude_deg" => gait.amplitude = value,
            "gait.phase_shift_deg" => gait.phase_shift = value,
            "gait.taper_deg" => gait.taper_head_extra = value,
            "gait.Lu_mm" => gait.tendons.upper_pull = value,
            "gait.Ll_mm" => gait.tendons.lower_pull = value,
            "gait.Lt_mm" => gait.tendons.spiral_pull = value,
            "mu" => friction.mu = value,
            "smoothing_eps" => friction.smoothing_eps = value,
            "contact_eps_mm" => friction.contact_height_eps = value,
            other => return Err(Error::UnknownParam(other.to_string())),
        }
        if key.starts_with("gait.L") {
            gait.kind = GaitKind::Custom;
        }
        if gait != old_gait {
            self.sim.set_gait(gait)?;
        }
        if friction != old_friction {
            self.sim.set_friction(friction)?;
        }
        Ok(())
    }

    /// Processes one session tick: advances physics if running, and returns a
    /// frame every `decimation` ticks.
    ///
    /// A failed physics step leaves the state untouched and stops the session;
    /// the error is reported alongside the (possibly empty) frame.
    pub fn tick(&mut self) -> TickOutcome {
        let mut error = None;
        if self.running {
            match self.sim.step() {
                Ok(_) => self.record_position(),
                Err(e) => {
                    self.running = false;
                    error = Some(e);
                }
            }
        }
        self.tick += 1;
        let frame = (self.tick.is_multiple_of(self.decimation)).then(|| self.frame());
        TickOutcome { frame, error }
    }

    fn record_position(&mut self) {
        self.elapsed += self.sim.dt();
        let pose = self.sim.state().pose;
        self.window.push_back((self.elapsed, pose.position()));
        let span = self.sim.inputs().gait.period;
        while let Some(&(t0, _)) = self.window.front() {
            if self.elapsed - t0 > span + 1e-9 {
                self.window.pop_front();
            } else {
                break;
            }
        }
    }

    fn speed(&self) -> f64 {
        match (self.window.front(), self.window.back()) {
            (Some((t0, p0)), Some((t1, p1))) if t1 > t0 => (p1 - p0).norm() / (t1 - t0),
            _ => 0.0,
        }
    }

    /// Builds the next state frame.
    pub fn frame(&mut self) -> StateFrame {
        self.seq += 1;
        let st = self.sim.state();
        StateFrame {
            seq: self.seq,
            t: st.t,
            pose: FramePose {
                x: st.pose.x,
                y: st.pose.y,
                heading: st.pose.heading,
            },
            centerline: st.world_centerline().iter().map(|p| [p.x, p.y, p.z]).collect(),
            contacts: st.contacts.clone(),
            speed: self.speed(),
            gait: self.sim.inputs().gait.kind,
            bias: self.sim.inputs().steering.bias,
            running: self.running,
        }
    }

    /// The configuration the session was created from.
    pub fn config(&self) -> &SimConfig {
        &self.config
    }
}

/// Replays a command log for `ticks` session ticks and returns every frame produced.
pub fn replay(config: &SimConfig, decimation: u64, log: &[LoggedCommand], ticks: u64) -> Result<Vec<StateFrame>> {
    let mut session = TeleopSession::new(config, decimation)?;
    let mut frames = Vec::new();
    let mut next = 0;
    for k in 0..ticks {
        while next < log.len() && log[next].tick <= k {
            // commands rejected live were never logged, so failures here are real
            session.apply(&log[next].command)?;
            next += 1;
        }
        // a physics failure halts the session exactly as it did live
        frames.extend(session.tick().frame);
    }
    Ok(frames)
}
