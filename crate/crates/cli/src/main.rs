use std::io::stdout;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use snakebot_cli::{exit_code, resolve_config, run, speed_report, write_metrics, write_presets, write_speed_report, Overrides};
use snakebot_core::io::{default_config_text, load_trajectory};
use snakebot_core::{compute_metrics, Error, GaitKind};
use snakebot_teleop::{ServiceConfig, DEFAULT_DECIMATION};

#[derive(Parser)]
#[command(name = "snakebot", version, about = "Tendon-driven snake robot simulator")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one episode and write its trajectory CSV.
    Run {
        /// Configuration file; built-in defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Replace the configured gait with a preset.
        #[arg(long)]
        gait: Option<GaitKind>,
        #[arg(long)]
        cycles: Option<usize>,
        /// Time step, s.
        #[arg(long)]
        dt: Option<f64>,
        /// Trajectory CSV path; falls back to the config's `output` key.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Constant steering bias, deg.
        #[arg(long, allow_hyphen_values = true)]
        bias: Option<f64>,
        /// Also write per-tick centerlines to <out>.snapshots.json.
        #[arg(long)]
        snapshots: bool,
    },
    /// Compute speed and heading metrics from a trajectory CSV.
    Metrics {
        #[arg(long)]
        traj: PathBuf,
        /// Undulation period the trajectory was recorded with, s.
        #[arg(long, default_value_t = 3.0)]
        period: f64,
        #[arg(long)]
        json: bool,
    },
    /// Print the gait presets.
    Presets,
    /// Print a default configuration file.
    DefaultConfig,
    /// Compare simulated preset speeds with the hardware reference speeds.
    Report {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        cycles: Option<usize>,
        #[arg(long)]
        dt: Option<f64>,
    },
    /// Serve the real-time teleoperation stream.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
        /// Record applied commands as JSON lines for replay.
        #[arg(long)]
        record: Option<PathBuf>,
        /// Broadcast one frame every N ticks.
        #[arg(long, default_value_t = DEFAULT_DECIMATION)]
        decimation: u64,
        /// Directory holding the built web console.
        #[arg(long)]
        static_dir: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}

fn io_err(e: std::io::Error) -> Error {
    e.into()
}

fn dispatch(cmd: Cmd) -> Result<(), Error> {
    match cmd {
        Cmd::Run {
            config,
            gait,
            cycles,
            dt,
            out,
            bias,
            snapshots,
        } => {
            let overrides = Overrides { gait, cycles, dt, bias };
            let c = resolve_config(config.as_deref(), &overrides)?;
            let out = out
                .or_else(|| c.output.clone().map(PathBuf::from))
                .ok_or_else(|| Error::MissingField("out".into()))?;
            let (traj, snaps) = run(&c, &out, snapshots)?;
            println!("wrote {} ticks to {}", traj.rows.len(), out.display());
            if let Some(p) = snaps {
                println!("wrote snapshots to {}", p.display());
            }
            match compute_metrics(&traj, c.gait.period) {
                Ok(m) => write_metrics(&m, stdout()).map_err(io_err)?,
                Err(Error::TrajectoryTooShort { .. }) => println!("too few cycles for metrics"),
                Err(e) => return Err(e),
            }
        }
        Cmd::Metrics { traj, period, json } => {
            let m = compute_metrics(&load_trajectory(&traj)?, period)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&m).map_err(|e| Error::Io(e.to_string()))?);
            } else {
                write_metrics(&m, stdout()).map_err(io_err)?;
            }
        }
        Cmd::Presets => write_presets(stdout()).map_err(io_err)?,
        Cmd::DefaultConfig => print!("{}", default_config_text()),
        Cmd::Report { config, cycles, dt } => {
            let base = resolve_config(
                config.as_deref(),
                &Overrides {
                    cycles,
                    dt,
                    ..Default::default()
                },
            )?;
            write_speed_report(&speed_report(&base)?, stdout()).map_err(io_err)?;
        }
        Cmd::Serve {
            config,
            bind,
            record,
            decimation,
            static_dir,
        } => {
            let sim = resolve_config(config.as_deref(), &Overrides::default())?;
            let service = ServiceConfig {
                decimation,
                record,
                static_dir,
                ..ServiceConfig::new(sim)
            };
            let rt = tokio::runtime::Runtime::new().map_err(io_err)?;
            println!("serving on http://{bind} (stream at /stream)");
            rt.block_on(snakebot_teleop::serve(service, &bind)).map_err(|e| match e {
                snakebot_teleop::ServiceError::Sim(e) => e,
                other => Error::Io(other.to_string()),
            })?;
        }
    }
    Ok(())
}
