use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn tgifs(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tgifs")).current_dir(dir).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = tgifs(dir.path(), &["budget", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"));
}

#[test]
fn bad_config_fails_with_one_line() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.cfg"), "nope=1\n").unwrap();
    let o = tgifs(dir.path(), &["compile", "bad.cfg"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.contains("unknown key 'nope'"));

    let o = tgifs(dir.path(), &["evolve", "missing.cfg"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn compiled_program_replays_like_a_direct_run() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.cfg"), "name=c\nsteps=20\ngamma_phi_per_s=0\n").unwrap();
    assert!(tgifs(dir.path(), &["compile", "c.cfg"]).status.success());
    for model in ["gate", "trotter"] {
        assert!(tgifs(dir.path(), &["--out", "direct", "evolve", "c.cfg", "--model", model]).status.success());
        let o = tgifs(dir.path(), &["--out", "replay", "evolve", "out/c/program.txt", "--config", "c.cfg", "--model", model]);
        assert!(o.status.success(), "{}", stderr(&o));
        let a = fs::read(dir.path().join("direct/c/xexpect.csv")).unwrap();
        let b = fs::read(dir.path().join("replay/c/xexpect.csv")).unwrap();
        assert_eq!(a, b, "{model}");
    }
}

#[test]
fn seeded_figure_reproduction_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let o = tgifs(dir.path(), &["--seed", "7", "--out", out, "reproduce", "fig3"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let files: Vec<_> = fs::read_dir(dir.path().join("a/fig3")).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert!(files.len() >= 8);
    for f in files {
        let a = fs::read(dir.path().join("a/fig3").join(&f)).unwrap();
        let b = fs::read(dir.path().join("b/fig3").join(&f)).unwrap();
        assert!(a == b, "{f:?} differs");
    }
}

#[test]
fn default_budget_prints_three_rows() {
    let dir = tempfile::tempdir().unwrap();
    let o = tgifs(dir.path(), &["budget"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 4, "{text}");
    assert!(rows[1].starts_with("dephasing") && rows[2].starts_with("trotter") && rows[3].starts_with("2pfd"));
    assert!(dir.path().join("out/canonical/budget.txt").exists());
}
