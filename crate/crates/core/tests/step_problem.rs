use std::sync::Arc;

use kvdamage::fem::{DirichletSpec, Expr, LoadSpec, Mesh, ScalarField};
use kvdamage::material::MaterialParams;
use kvdamage::potential::{Model, PhiMode, State, StepProblem};
use kvdamage::solver::{relative_kkt_residual, solve_step, SolverConfig};
use rand::{Rng, SeedableRng};

fn at(dim: usize, lambda: f64, mu: f64) -> MaterialParams {
    MaterialParams::ambrosio_tortorelli(dim, lambda, mu, 0.1, 1.0, 0.2, 0.1, 0.05, 0.01, 1.0)
}

fn clamp_both_ends(value: &str) -> LoadSpec {
    let field = |s: &str| ScalarField::Expr(Expr::parse(s).unwrap());
    LoadSpec {
        dirichlet: vec![
            DirichletSpec { tag: "left".into(), component: 0, value: field("0") },
            DirichletSpec { tag: "right".into(), component: 0, value: field(value) },
        ],
        ..Default::default()
    }
}

#[test]
fn rigid_motion_stores_no_energy() {
    let mut rng = rand::rngs::StdRng::seed_from_u64(5);
    for mesh in [Mesh::interval(2.0, 9).unwrap(), Mesh::rectangle(1.0, 0.5, 4, 3).unwrap()] {
        let d = mesh.dim();
        let model = Model::new(Arc::new(mesh), at(d, 0.4, 0.7), LoadSpec::default(), PhiMode::Potential, false).unwrap();
        let mut s = State::zero(&model.dofs);
        let shift: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for n in 0..model.dofs.n_nodes() {
            for c in 0..d {
                s.u[n * d + c] = shift[c];
            }
        }
        let (elastic, phi, gradient) = model.stored_energy_of(&s);
        assert!(elastic.abs() < 1e-14, "{elastic}");
        assert!(phi.abs() < 1e-14 && gradient.abs() < 1e-14, "{phi} {gradient}");
    }
}

#[test]
fn homogeneous_bar_matches_scalar_minimizer() {
    // one element, both ends prescribed: the strain is uniform and the
    // damage step reduces to a scalar quadratic on [0, alpha_old]
    let (lambda, mu, eps, gc, eta) = (0.0, 0.5, 0.1, 0.2, 0.01);
    let c = lambda + 2.0 * mu;
    for (stretch, a_old) in [(0.3, 1.0), (1.2, 0.9), (3.0, 0.6), (0.05, 0.7)] {
        let model = Arc::new(
            Model::new(
                Arc::new(Mesh::interval(1.0, 1).unwrap()),
                at(1, lambda, mu),
                clamp_both_ends(&format!("{stretch}")),
                PhiMode::Potential,
                false,
            )
            .unwrap(),
        );
        let tau = model.tau0 / 2.0;
        let mut prev = State::zero(&model.dofs);
        prev.alpha = vec![a_old; 2];
        let sp = StepProblem::new(model.clone(), &prev, tau).unwrap();
        let sol = solve_step(&sp, &SolverConfig::default()).unwrap();

        // f(a) = C s^2 a^2 / 4 + Gc (1 - a)^2 / (2 eps) + eta (a - a_old)^2 / (2 tau) + const
        let a_star = ((gc / eps + eta * a_old / tau) / (0.5 * c * stretch * stretch + gc / eps + eta / tau))
            .clamp(0.0, a_old);
        for n in 0..2 {
            let a = sol.x[model.dofs.alpha(n)];
            assert!((a - a_star).abs() <= 1e-9 * a_star.max(1e-3), "{a} vs {a_star}");
        }
        assert_eq!(sol.x[model.dofs.u(1, 0)], stretch);
    }
}

#[test]
fn solution_is_stationary_in_the_relative_measure() {
    let mesh = Mesh::rectangle(1.0, 1.0, 5, 5).unwrap();
    let field = |s: &str| ScalarField::Expr(Expr::parse(s).unwrap());
    let loads = LoadSpec {
        body: vec![field("0"), field("-3*t")],
        dirichlet: (0..2)
            .map(|c| DirichletSpec { tag: "left".into(), component: c, value: field("0") })
            .collect(),
        ..Default::default()
    };
    let model = Arc::new(Model::new(Arc::new(mesh), at(2, 1.0, 1.0), loads, PhiMode::Potential, false).unwrap());
    let mut prev = State::zero(&model.dofs);
    prev.k = 40;
    prev.t = 40.0 * model.tau0 / 2.0;
    let sp = StepProblem::new(model.clone(), &prev, model.tau0 / 2.0).unwrap();
    let cfg = SolverConfig::default();
    let sol = solve_step(&sp, &cfg).unwrap();
    assert!(sol.stats.pg_norm <= cfg.grad_tol);
    assert!(relative_kkt_residual(&sp, &sol.x).unwrap() <= cfg.grad_tol);
    assert!(sol.stats.min_eig > 0.0);
    assert_eq!(sol.stats.negative_pivots, 0);
    for w in sol.stats.trace.windows(2) {
        assert!(w[1] <= w[0] + 1e-14 * w[0].abs());
    }
}
