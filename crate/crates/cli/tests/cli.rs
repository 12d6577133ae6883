//! Exit codes and outputs of the `idpt` binary.

use std::path::Path;
use std::process::{Command, Output};

fn idpt(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_idpt"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("run idpt")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn help_and_unknown_commands() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(idpt(dir.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(idpt(dir.path(), &["no-such-command"]).status.code(), Some(1));
    assert_eq!(idpt(dir.path(), &["count-params", "--threads", "0"]).status.code(), Some(1));
}

#[test]
fn config_errors_exit_1_with_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "# comment\nbackbone.depth = 1\nstrategy.kind = idpt\nnot.a_key = 3\n").unwrap();
    let o = idpt(dir.path(), &["count-params", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("line 2"), "{err}");
    assert!(err.contains("line 4"), "{err}");

    let o = idpt(dir.path(), &["count-params", "--set", "tune.lr=-1"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn missing_checkpoint_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = idpt(dir.path(), &["tune", "--set", "run.output_dir=out"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("backbone.ckpt"), "{}", stderr(&o));
}

#[test]
fn count_params_writes_table_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = idpt(dir.path(), &["count-params", "--set", "run.output_dir=out", "--seed", "7"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("out/count_params.csv")).unwrap();
    assert!(csv.starts_with("component,parameters\r\n"));
    assert!(csv.contains("total_trainable,"));
    let cfg = std::fs::read_to_string(dir.path().join("out/run_config.txt")).unwrap();
    assert!(cfg.contains("run.seed = 7"));

    // The written config is accepted back unchanged.
    let again = idpt(dir.path(), &["count-params", "--config", "out/run_config.txt"]);
    assert_eq!(again.status.code(), Some(0), "{}", stderr(&again));
    assert_eq!(std::fs::read_to_string(dir.path().join("out/run_config.txt")).unwrap(), cfg);
}
