use snakebot_core::io::{
    default_config_text, export_config, export_trajectory, load_config, load_trajectory, parse_config,
};
use snakebot_core::{preset, run_episode, Error, GaitKind, SimConfig};

#[test]
fn default_config_parses_to_the_forward_preset() {
    let c = parse_config(&default_config_text()).unwrap();
    assert_eq!(c.gait, preset(GaitKind::Forward).unwrap());
    assert_eq!(c.dt, 0.01);
    assert_eq!(c.cycles, 10);
}

#[test]
fn files_round_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = SimConfig::with_gait(preset(GaitKind::Sidewinding).unwrap());
    c.cycles = 2;
    let cfg = dir.path().join("side.cfg");
    export_config(&c, &cfg).unwrap();
    assert_eq!(load_config(&cfg).unwrap(), c);

    let traj = run_episode(&c).unwrap();
    let csv = dir.path().join("side.csv");
    export_trajectory(&traj, &csv).unwrap();
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), c.total_ticks().unwrap() + 1);
    assert_eq!(load_trajectory(&csv).unwrap().rows, traj.rows);
}

#[test]
fn missing_file_is_an_io_error() {
    let err = load_config("/nonexistent/snake.cfg").unwrap_err();
    assert!(matches!(err, Error::Io(_)));
}
