//! Subcommand implementations for the `snakebot` binary.

use std::io::Write;
use std::path::{Path, PathBuf};

use snakebot_core::gait::DEFAULT_BIAS_CLAMP_DEG;
use snakebot_core::io::{export_snapshots, export_trajectory, load_config, SnapshotDocument};
use snakebot_core::sim::{hardware_speed, run_episode_with, SPEED_SANITY_BAND};
use snakebot_core::{compute_metrics, preset, Error, GaitKind, Metrics, SimConfig, TrajectoryRecord};

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_solver_failure() {
        return 3;
    }
    match err {
        Error::InvalidSpec(_)
        | Error::InvalidGait(_)
        | Error::InvalidFriction(_)
        | Error::InvalidConfig(_)
        | Error::NoPreset(_)
        | Error::NonPositiveTimeStep(_)
        | Error::MotorAngleOutOfRange { .. }
        | Error::Parse { .. }
        | Error::MissingField(_)
        | Error::InvalidField { .. }
        | Error::UnknownParam(_) => 2,
        _ => 1,
    }
}

/// Command-line overrides applied on top of a configuration file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub gait: Option<GaitKind>,
    pub cycles: Option<usize>,
    pub dt: Option<f64>,
    pub bias: Option<f64>,
}

/// Loads `path` (or the defaults) and applies overrides; `--gait` swaps in the preset.
pub fn resolve_config(path: Option<&Path>, o: &Overrides) -> Result<SimConfig, Error> {
    let mut c = match path {
        Some(p) => load_config(p)?,
        None => SimConfig::default(),
    };
    if let Some(kind) = o.gait {
        c.gait = preset(kind)?;
    }
    if let Some(n) = o.cycles {
        c.cycles = n;
    }
    if let Some(dt) = o.dt {
        c.dt = dt;
    }
    if let Some(b) = o.bias {
        c.steering = c.steering.with_bias(b);
    }
    c.validate()?;
    Ok(c)
}

/// Snapshot file written next to a trajectory.
pub fn snapshot_path(out: &Path) -> PathBuf {
    out.with_extension("snapshots.json")
}

pub fn run(config: &SimConfig, out: &Path, snapshots: bool) -> Result<(TrajectoryRecord, Option<PathBuf>), Error> {
    let traj = run_episode_with(config, snapshots, |_, _| None)?;
    export_trajectory(&traj, out)?;
    let snap_path = match &traj.snapshots {
        Some(frames) => {
            let path = snapshot_path(out);
            export_snapshots(
                &SnapshotDocument {
                    dt: config.dt,
                    frames: frames.clone(),
                },
                &path,
            )?;
            Some(path)
        }
        None => None,
    };
    Ok((traj, snap_path))
}

pub fn write_metrics<W: Write>(m: &Metrics, mut w: W) -> std::io::Result<()> {
    writeln!(w, "cycles measured     {}", m.cycles)?;
    writeln!(w, "mean speed          {:.2} mm/s", m.mean_speed)?;
    writeln!(w, "heading drift       {:+.2} deg/cycle", m.heading_drift)?;
    writeln!(w, "net displacement    {:.2} mm ({:.2} mm/cycle)", m.net_displacement, m.displacement_per_cycle())?;
    writeln!(w, "axial / lateral     {:+.2} / {:+.2} mm", m.axial, m.lateral)?;
    writeln!(w, "direction           ({:+.4}, {:+.4})", m.direction[0], m.direction[1])?;
    Ok(())
}

pub fn write_presets<W: Write>(mut w: W) -> std::io::Result<()> {
    writeln!(
        w,
        "{:<12} {:>10} {:>8} {:>10} {:>9} {:>6} {:>6} {:>6}",
        "gait", "alpha_deg", "T_s", "phase_deg", "taper_deg", "Lu_mm", "Ll_mm", "Lt_mm"
    )?;
    for kind in GaitKind::PRESETS {
        let p = preset(kind).expect("every listed kind has a preset");
        writeln!(
            w,
            "{:<12} {:>10.2} {:>8.1} {:>10.1} {:>9.1} {:>6.1} {:>6.1} {:>6.1}",
            kind.as_str(),
            p.amplitude,
            p.period,
            p.phase_shift,
            p.taper_head_extra,
            p.tendons.upper_pull,
            p.tendons.lower_pull,
            p.tendons.spiral_pull
        )?;
    }
    writeln!(w, "steering bias clamp: +/-{DEFAULT_BIAS_CLAMP_DEG} deg")?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeedComparison {
    pub kind: GaitKind,
    pub simulated: f64,
    pub hardware: f64,
    pub metrics: Metrics,
}

impl SpeedComparison {
    pub fn in_band(&self) -> bool {
        (SPEED_SANITY_BAND.0..=SPEED_SANITY_BAND.1).contains(&self.simulated)
    }
}

/// Runs every preset under `base` (its gait is replaced) and compares with hardware speeds.
pub fn speed_report(base: &SimConfig) -> Result<Vec<SpeedComparison>, Error> {
    GaitKind::PRESETS
        .iter()
        .map(|&kind| {
            let config = SimConfig {
                gait: preset(kind)?,
                ..base.clone()
            };
            config.validate()?;
            let traj = run_episode_with(&config, false, |_, _| None)?;
            let metrics = compute_metrics(&traj, config.gait.period)?;
            Ok(SpeedComparison {
                kind,
                simulated: metrics.mean_speed,
                hardware: hardware_speed(kind).expect("hardware speed for every preset"),
                metrics,
            })
        })
        .collect()
}

pub fn write_speed_report<W: Write>(rows: &[SpeedComparison], mut w: W) -> std::io::Result<()> {
    writeln!(
        w,
        "{:<12} {:>14} {:>14} {:>7}  band {}-{} mm/s",
        "gait", "sim_mm_s", "hardware_mm_s", "ratio", SPEED_SANITY_BAND.0, SPEED_SANITY_BAND.1
    )?;
    for r in rows {
        writeln!(
            w,
            "{:<12} {:>14.2} {:>14.2} {:>7.2}  {}",
            r.kind.as_str(),
            r.simulated,
            r.hardware,
            r.simulated / r.hardware,
            if r.in_band() { "in band" } else { "OUT OF BAND" }
        )?;
    }
    writeln!(w, "hardware speeds are reference values only; equality is not expected")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::MissingField("mu".into())), 2);
        assert_eq!(exit_code(&Error::InvalidConfig("x".into())), 2);
        let diverged = Error::SolverDiverged {
            iterations: 100,
            force_residual: 1.0,
            moment_residual: 1.0,
        };
        assert_eq!(exit_code(&diverged), 3);
        assert_eq!(
            exit_code(&Error::Tick {
                tick: 4,
                source: Box::new(diverged)
            }),
            3
        );
        assert_eq!(exit_code(&Error::Io("gone".into())), 1);
    }

    #[test]
    fn gait_override_uses_preset() {
        let c = resolve_config(
            None,
            &Overrides {
                gait: Some(GaitKind::Sidewinding),
                cycles: Some(3),
                bias: Some(50.0),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(c.gait, preset(GaitKind::Sidewinding).unwrap());
        assert_eq!(c.cycles, 3);
        assert_eq!(c.steering.bias, DEFAULT_BIAS_CLAMP_DEG);
    }

    #[test]
    fn bad_dt_is_a_config_error() {
        let err = resolve_config(
            None,
            &Overrides {
                dt: Some(0.007),
                ..Default::default()
            },
        )
        .unwrap_err();
        assert_eq!(exit_code(&err), 2);
    }

    #[test]
    fn presets_table_lists_every_gait() {
        let mut buf = Vec::new();
        write_presets(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("forward") && text.contains("backward") && text.contains("sidewinding"));
        assert!(text.contains("90.18") && text.contains("69.8") && text.contains("27.9"));
    }

    #[test]
    fn snapshot_path_sits_next_to_trajectory() {
        assert_eq!(snapshot_path(Path::new("out/run.csv")), PathBuf::from("out/run.snapshots.json"));
    }
}
