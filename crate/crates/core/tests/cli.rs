use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cable-beam"))
}

fn run(args: &[&str]) -> (i32, String) {
    let out = bin().args(args).output().expect("binary runs");
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stdout).into_owned())
}

fn header(path: &Path) -> String {
    std::fs::read_to_string(path)
        .expect("csv exists")
        .lines()
        .next()
        .unwrap_or_default()
        .to_string()
}

#[test]
fn dumped_defaults_reparse() {
    let dir = tempfile::tempdir().unwrap();
    let (code, text) = run(&["--dump-defaults"]);
    assert_eq!(code, 0);
    let cfg = dir.path().join("defaults.toml");
    std::fs::write(&cfg, &text).unwrap();
    let parsed = cable_beam::cli::config::Config::load(&cfg).unwrap();
    assert_eq!(parsed, cable_beam::cli::config::Config::default());
    assert_eq!(parsed.to_toml(), text.trim_end_matches('\n').to_string() + "\n");
}

#[test]
fn analysis_commands_write_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(run(&["equilibrium", "--out", out]).0, 0);
    assert!(header(&dir.path().join("equilibrium.csv")).starts_with("branch"));
    assert_eq!(run(&["stability", "--grid", "--out", out]).0, 0);
    assert!(header(&dir.path().join("stability.csv")).starts_with("tI,xi,branch,verdict"));
    assert_eq!(run(&["sensitivity", "--tI", "1,2", "--out", out]).0, 0);
    assert!(dir.path().join("sensitivity.csv").exists());
    assert!(std::fs::read_to_string(dir.path().join("run_info.txt")).unwrap().contains("sign_convention"));
}

#[test]
fn short_simulation_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("short.toml");
    std::fs::write(&cfg, "[sim]\nduration = 8.0\nrecord_every = 100\n").unwrap();
    let (code, _) = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, 0);
    let rows = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap().lines().count();
    assert_eq!(rows, 1 + 81);
}

#[test]
fn bad_inputs_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[load]\nmass = -1.0\n").unwrap();
    assert_eq!(run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out]).0, 1);
    std::fs::write(&cfg, "[load]\nmas = 1.0\n").unwrap();
    assert_eq!(run(&["equilibrium", "--config", cfg.to_str().unwrap(), "--out", out]).0, 1);
    std::fs::write(&cfg, "[uncertainty]\nmass = 1.5\n").unwrap();
    assert_eq!(run(&["equilibrium", "--config", cfg.to_str().unwrap(), "--out", out]).0, 1);
}
