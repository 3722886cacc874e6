use std::fs;

use kvdamage::fem::assemble_degraded_stiffness;
use kvdamage::integrator::{RunError, RunOptions};
use kvdamage::scenario::{
    builtin_scenario, builtin_source, load_scenario, parse_scenario_str, read_vtk, write_outputs, ScenarioError,
    ScenarioFile, CSV_HEADER,
};

const UNLOADED: &str = r#"
[mesh]
kind = "rectangle"
lx = 1.0
ly = 1.0
nx = 4
ny = 4

[elastic]
lambda = 1.0
mu = 1.0

[time]
T = 0.1
"#;

#[test]
fn unloaded_body_at_rest_stays_at_rest() {
    let sc = parse_scenario_str(UNLOADED, None).unwrap();
    let out = sc.run(&RunOptions::default()).unwrap();
    assert_eq!(out.trajectory.n_steps(), sc.n_steps);
    for s in &out.trajectory.states {
        assert!(s.u.iter().chain(&s.v).all(|x| *x == 0.0));
        assert!(s.alpha.iter().all(|a| *a == 1.0));
    }
    for r in &out.report.rows {
        assert!(r.mechanical().abs() < 1e-30 && r.margin.abs() < 1e-30, "{r:?}");
    }
    assert!(out.stats.iter().all(|s| s.newton_iters == 0));
}

#[test]
fn undamped_oscillator_loses_exactly_the_elastic_increment() {
    let mut file: ScenarioFile = toml::from_str(builtin_source("oscillator_frozen").unwrap()).unwrap();
    file.mesh = toml::from_str("kind = \"interval\"\nlength = 1.0\nelements = 10").unwrap();
    file.time.t_end = 0.4;
    let sc = kvdamage::scenario::Scenario::from_file(file, None).unwrap();
    let out = sc.run(&RunOptions::default()).unwrap();
    let m = &sc.model;
    let rows = &out.report.rows;
    let scale = rows.iter().map(|r| r.mechanical()).fold(0.0, f64::max);
    for k in 1..rows.len() {
        let (p, c) = (&out.trajectory.states[k - 1], &out.trajectory.states[k]);
        let kmat = assemble_degraded_stiffness(&m.mesh, &m.dofs, &m.material.elastic, &m.material.degradation, &m.pack(c));
        let du: Vec<f64> = c.u.iter().zip(&p.u).map(|(a, b)| a - b).collect();
        let loss = 0.5 * kmat.quad_form(&m.dofs.embed_u(&du));
        assert!(loss > 0.0);
        let decrement = rows[k - 1].mechanical() - rows[k].mechanical();
        assert!((decrement - loss).abs() <= 1e-12 * scale, "step {k}: {decrement} vs {loss}");
    }
}

#[test]
fn quasistatic_bar_follows_the_prescribed_end() {
    let sc = builtin_scenario("quasistatic_bar").unwrap();
    let out = sc.run(&RunOptions::default()).unwrap();
    let right = sc.mesh().tagged_nodes("right")[0];
    for s in &out.trajectory.states {
        assert!((s.u[right] - 1.5 * s.t).abs() <= 1e-14);
    }
    assert!(out.report.rows.iter().all(|r| r.kinetic == 0.0));
    let last = out.trajectory.last();
    assert!(last.alpha.iter().any(|a| *a < 0.9));
}

#[test]
fn outputs_are_written_and_readable() {
    let dir = tempfile::tempdir().unwrap();
    let mut sc = builtin_scenario("bar1d").unwrap().with_end_time(0.2).unwrap();
    sc.file.output.every = 2;
    let out = sc.run(&RunOptions::default()).unwrap();
    let files = write_outputs(&sc, &out, dir.path()).unwrap();

    let csv = fs::read_to_string(dir.path().join("energy.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], CSV_HEADER);
    assert_eq!(lines.len(), sc.n_steps + 2);
    let cols = CSV_HEADER.split(',').count();
    assert!(lines[1..].iter().all(|l| l.split(',').count() == cols));

    let again = load_scenario(&format!("file:{}", dir.path().join("scenario.toml").display())).unwrap();
    assert_eq!(again.file, sc.file);
    assert_eq!(again.n_steps, sc.n_steps);

    let vtk: Vec<_> = files.iter().filter(|p| p.extension().is_some_and(|e| e == "vtk")).collect();
    assert_eq!(vtk.len(), sc.n_steps / 2 + 1);
    let last = read_vtk(vtk.last().unwrap()).unwrap();
    for (a, b) in last.alpha.iter().zip(&out.trajectory.last().alpha) {
        assert!((a - b).abs() <= 1e-15);
    }
}

#[test]
fn scenario_specs() {
    assert!(load_scenario("builtin:notched_plate2d").is_ok());
    assert!(matches!(load_scenario("builtin:nope"), Err(ScenarioError::UnknownScenario(_))));
    assert!(matches!(load_scenario("file:/nonexistent/x.toml"), Err(ScenarioError::Io(_))));
    let err = parse_scenario_str("[mesh]\nkind = \"interval\"\nlength = -1.0\nelements = 0\n[time]\nT = 1.0\n", None)
        .unwrap_err();
    match err {
        ScenarioError::Validation(v) => assert!(v[0].starts_with("mesh"), "{v:?}"),
        e => panic!("{e}"),
    }
    let err = parse_scenario_str("[mesh]\nkind = \"interval\"\nlength = 1.0\nelements = 4\n[damage]\nGc = -1.0\n[dissipation]\neta = -2.0\n[time]\nT = 1.0\n", None)
        .unwrap_err();
    match err {
        ScenarioError::Validation(v) => assert!(v.len() >= 2, "{v:?}"),
        e => panic!("{e}"),
    }
}

#[test]
fn strict_mode_refuses_uncertified_steps() {
    let sc = builtin_scenario("bar1d").unwrap();
    let big = sc.with_tau(2.0 * sc.model.tau0).unwrap();
    assert!(big.warnings.iter().any(|w| w.contains("uncertified")));
    let err = big.run(&RunOptions { strict_tau0: true }).unwrap_err();
    assert!(matches!(err, RunError::Uncertified { .. }));
}
