use std::fs;
use std::process::{Command, Output};

fn kvdamage(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kvdamage")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn run_writes_the_ledger() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("osc");
    let o = kvdamage(&["run", "builtin:oscillator_frozen", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("certified       true"));
    let csv = fs::read_to_string(out.join("energy.csv")).unwrap();
    assert!(csv.starts_with("k,t,kinetic,"));
    assert_eq!(csv.lines().count(), 102);
    assert!(out.join("scenario.toml").exists());
}

#[test]
fn run_accepts_a_file_and_a_step() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bar.toml");
    fs::write(
        &file,
        "[mesh]\nkind = \"interval\"\nlength = 1.0\nelements = 8\n\n[time]\nT = 0.1\n\n[output]\nvtk = false\n",
    )
    .unwrap();
    let out = dir.path().join("o");
    let o = kvdamage(&["run", file.to_str().unwrap(), "--tau", "0.01", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("(10 steps)"));
    assert_eq!(fs::read_dir(&out).unwrap().count(), 2);
}

#[test]
fn tau0_reports_both_checks() {
    let o = kvdamage(&["tau0", "builtin:bar1d"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.contains("tau0            5e-2"), "{s}");
    assert!(s.contains("stored energy   convex"), "{s}");
    assert!(s.contains("visco-damage    nonconvex"), "{s}");
}

#[test]
fn study_prints_orders() {
    let o = kvdamage(&["study", "builtin:quasistatic_bar", "--levels", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    assert!(s.contains("u orders") && s.contains("monotone"), "{s}");
}

#[test]
fn exit_codes() {
    assert_eq!(kvdamage(&["run", "builtin:nope"]).status.code(), Some(2));
    assert_eq!(kvdamage(&["study", "builtin:bar1d", "--levels", "2"]).status.code(), Some(2));
    assert_eq!(kvdamage(&["tau0", "/nonexistent/x.toml"]).status.code(), Some(4));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[mesh]\nkind = \"interval\"\nlength = 1.0\nelements = 4\n[damage]\nGc = -1.0\n[time]\nT = 1.0\n").unwrap();
    let o = kvdamage(&["run", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Gc"));
    let o = kvdamage(&["run", "builtin:bar1d", "--tau", "1", "--strict-tau0", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn nonconvergence_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("tight.toml");
    let o = kvdamage(&["run", "builtin:bar1d", "--out", dir.path().join("full").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("full").join("scenario.toml")).unwrap();
    assert!(text.contains("max_newton = 100"));
    fs::write(&file, text.replace("max_newton = 100", "max_newton = 1")).unwrap();
    let o = kvdamage(&["run", file.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("o").join("energy.csv").exists());
}
