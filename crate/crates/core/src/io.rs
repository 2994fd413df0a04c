//! Configuration files, trajectory CSV and replay snapshots.
//!
//! The configuration format is flat `key = value` text with `#` comments.
//! Lengths are in millimetres, angles in degrees and times in seconds; the
//! unit is part of each key name.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gait::GaitKind;
use crate::sim::{SimConfig, Snapshot, TickRow, TrajectoryRecord};
use crate::tendon::SpiralHandedness;

/// Keys every configuration file must define.
pub const REQUIRED_KEYS: [&str; 20] = [
    "module_count",
    "module_length_mm",
    "joint.a_mm",
    "joint.d_mm",
    "joint.l_mm",
    "joint.r_mm",
    "housing_radius_mm",
    "total_mass_kg",
    "mu",
    "smoothing_eps",
    "contact_eps_mm",
    "gait.amplitude_deg",
    "gait.period_s",
    "gait.phase_shift_deg",
    "gait.taper_deg",
    "gait.Lu_mm",
    "gait.Ll_mm",
    "gait.Lt_mm",
    "dt_s",
    "cycles",
];

/// Keys that may be omitted.
pub const OPTIONAL_KEYS: [&str; 7] = [
    "total_length_mm",
    "gait.kind",
    "spiral_handedness",
    "steering.bias_deg",
    "steering.clamp_deg",
    "gravity_m_s2",
    "output",
];

struct Entry {
    line: usize,
    value: String,
}

fn parse_entries(text: &str) -> Result<BTreeMap<String, Entry>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| Error::Parse {
            line,
            message: format!("expected `key = value`, got `{content}`"),
        })?;
        let key = key.trim();
        if !REQUIRED_KEYS.contains(&key) && !OPTIONAL_KEYS.contains(&key) {
            return Err(Error::Parse {
                line,
                message: format!("unknown key `{key}`"),
            });
        }
        let entry = Entry {
            line,
            value: value.trim().to_string(),
        };
        if map.insert(key.to_string(), entry).is_some() {
            return Err(Error::Parse {
                line,
                message: format!("duplicate key `{key}`"),
            });
        }
    }
    Ok(map)
}

struct Fields(BTreeMap<String, Entry>);

impl Fields {
    fn raw(&self, key: &str) -> Result<&Entry> {
        self.0.get(key).ok_or_else(|| Error::MissingField(key.to_string()))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let e = self.raw(key)?;
        e.value.parse().map_err(|err: T::Err| Error::InvalidField {
            field: key.to_string(),
            message: format!("line {}: {err}", e.line),
        })
    }

    fn optional<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        if self.0.contains_key(key) {
            self.parse(key).map(Some)
        } else {
            Ok(None)
        }
    }
}

impl std::str::FromStr for SpiralHandedness {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "right" => Ok(SpiralHandedness::Right),
            "left" => Ok(SpiralHandedness::Left),
            other => Err(Error::InvalidSpec(format!("unknown spiral handedness `{other}`"))),
        }
    }
}

impl std::fmt::Display for SpiralHandedness {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SpiralHandedness::Right => "right",
            SpiralHandedness::Left => "left",
        })
    }
}

/// Parses configuration text. Field-level problems are reported by key name;
/// the assembled configuration is then validated as a whole.
pub fn parse_config(text: &str) -> Result<SimConfig> {
    let f = Fields(parse_entries(text)?);
    for key in REQUIRED_KEYS {
        f.raw(key)?;
    }
    let mut c = SimConfig::default();
    let s = &mut c.spec;
    s.module_count = f.parse("module_count")?;
    s.module_length = f.parse("module_length_mm")?;
    s.joint_geometry.a = f.parse("joint.a_mm")?;
    s.joint_geometry.d = f.parse("joint.d_mm")?;
    s.joint_geometry.l = f.parse("joint.l_mm")?;
    s.joint_geometry.r = f.parse("joint.r_mm")?;
    s.housing_radius = f.parse("housing_radius_mm")?;
    s.total_mass = f.parse("total_mass_kg")?;
    s.friction_coefficient = f.parse("mu")?;
    s.total_length = match f.optional("total_length_mm")? {
        Some(v) => v,
        None => s.chain_length(),
    };
    if let Some(h) = f.optional("spiral_handedness")? {
        s.spiral_handedness = h;
    }
    if let Some(g) = f.optional("gravity_m_s2")? {
        s.gravity = g;
    }

    c.friction.mu = c.spec.friction_coefficient;
    c.friction.smoothing_eps = f.parse("smoothing_eps")?;
    c.friction.contact_height_eps = f.parse("contact_eps_mm")?;

    let g = &mut c.gait;
    g.amplitude = f.parse("gait.amplitude_deg")?;
    g.period = f.parse("gait.period_s")?;
    g.phase_shift = f.parse("gait.phase_shift_deg")?;
    g.taper_head_extra = f.parse("gait.taper_deg")?;
    g.tendons.upper_pull = f.parse("gait.Lu_mm")?;
    g.tendons.lower_pull = f.parse("gait.Ll_mm")?;
    g.tendons.spiral_pull = f.parse("gait.Lt_mm")?;
    g.kind = f.optional::<GaitKind>("gait.kind")?.unwrap_or(GaitKind::Custom);

    if let Some(clamp) = f.optional::<f64>("steering.clamp_deg")? {
        c.steering.clamp = clamp;
    }
    if let Some(bias) = f.optional::<f64>("steering.bias_deg")? {
        c.steering.bias = bias;
    }
    c.dt = f.parse("dt_s")?;
    c.cycles = f.parse("cycles")?;
    c.output = f.optional("output")?;
    c.validate()?;
    Ok(c)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<SimConfig> {
    parse_config(&fs::read_to_string(path)?)
}

/// Serialises a configuration so that [`parse_config`] reproduces it exactly.
pub fn format_config(c: &SimConfig) -> String {
    let s = &c.spec;
    let g = &c.gait;
    let mut out = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(out, "{k} = {v}");
    };
    kv("module_count", s.module_count.to_string());
    kv("module_length_mm", s.module_length.to_string());
    kv("total_length_mm", s.total_length.to_string());
    kv("joint.a_mm", s.joint_geometry.a.to_string());
    kv("joint.d_mm", s.joint_geometry.d.to_string());
    kv("joint.l_mm", s.joint_geometry.l.to_string());
    kv("joint.r_mm", s.joint_geometry.r.to_string());
    kv("housing_radius_mm", s.housing_radius.to_string());
    kv("total_mass_kg", s.total_mass.to_string());
    kv("gravity_m_s2", s.gravity.to_string());
    kv("spiral_handedness", s.spiral_handedness.to_string());
    kv("mu", c.friction.mu.to_string());
    kv("smoothing_eps", c.friction.smoothing_eps.to_string());
    kv("contact_eps_mm", c.friction.contact_height_eps.to_string());
    kv("gait.kind", g.kind.to_string());
    kv("gait.amplitude_deg", g.amplitude.to_string());
    kv("gait.period_s", g.period.to_string());
    kv("gait.phase_shift_deg", g.phase_shift.to_string());
    kv("gait.taper_deg", g.taper_head_extra.to_string());
    kv("gait.Lu_mm", g.tendons.upper_pull.to_string());
    kv("gait.Ll_mm", g.tendons.lower_pull.to_string());
    kv("gait.Lt_mm", g.tendons.spiral_pull.to_string());
    kv("steering.bias_deg", c.steering.bias.to_string());
    kv("steering.clamp_deg", c.steering.clamp.to_string());
    kv("dt_s", c.dt.to_string());
    kv("cycles", c.cycles.to_string());
    if let Some(o) = &c.output {
        kv("output", o.clone());
    }
    out
}

pub fn export_config(c: &SimConfig, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, format_config(c))?;
    Ok(())
}

/// Column order of trajectory CSV files.
pub const TRAJECTORY_COLUMNS: [&str; 10] = [
    "t",
    "x",
    "y",
    "heading",
    "vx",
    "vy",
    "omega",
    "contact_count",
    "solver_residual",
    "solver_iterations",
];

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io.to_string()),
        other => Error::Parse {
            line,
            message: format!("{other:?}"),
        },
    }
}

pub fn write_trajectory_csv<W: Write>(rows: &[TickRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    if rows.is_empty() {
        w.write_record(TRAJECTORY_COLUMNS).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectory_csv<R: Read>(input: R) -> Result<Vec<TickRow>> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers().map_err(csv_error)?.clone();
    if headers.iter().ne(TRAJECTORY_COLUMNS) {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "expected columns {}, got {}",
                TRAJECTORY_COLUMNS.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    r.deserialize().map(|row| row.map_err(csv_error)).collect()
}

pub fn export_trajectory(traj: &TrajectoryRecord, path: impl AsRef<Path>) -> Result<()> {
    let file = fs::File::create(path)?;
    write_trajectory_csv(&traj.rows, std::io::BufWriter::new(file))
}

pub fn load_trajectory(path: impl AsRef<Path>) -> Result<TrajectoryRecord> {
    let rows = read_trajectory_csv(std::io::BufReader::new(fs::File::open(path)?))?;
    Ok(TrajectoryRecord { rows, snapshots: None })
}

/// Replay document holding every tick's world-frame centerline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotDocument {
    pub dt: f64,
    pub frames: Vec<Snapshot>,
}

pub fn export_snapshots(doc: &SnapshotDocument, path: impl AsRef<Path>) -> Result<()> {
    let file = std::io::BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer(file, doc).map_err(|e| Error::Io(e.to_string()))
}

pub fn load_snapshots(path: impl AsRef<Path>) -> Result<SnapshotDocument> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: e.line(),
        message: e.to_string(),
    })
}

/// Default configuration text, with the forward preset.
pub fn default_config_text() -> String {
    let c = SimConfig {
        gait: crate::gait::preset(GaitKind::Forward).expect("forward preset exists"),
        ..SimConfig::default()
    };
    format_config(&c)
}
