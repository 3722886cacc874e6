use std::time::Instant;

use super::{field_relative, kkt_components, SolverConfig, SolverError, StepSolution, StepStats};
use crate::fem::{lanczos_extremes, Ldl, SparseSym};
use crate::potential::{EvalLevel, StepProblem};

const MAX_REFINE: usize = 4;
const SHIFT_START: f64 = 1e-8;
const SHIFT_LIMIT: f64 = 1e12;
// decreases below this fraction of the potential scale are round-off
const ROUNDOFF: f64 = 1e-13;
const SNAP_ULPS: f64 = 4.0;

/// Projected Newton on the box of `sp`. Unknowns with `movable[i] == false`
/// keep their start value.
pub fn minimize(
    sp: &StepProblem,
    cfg: &SolverConfig,
    start: &[f64],
    movable: Option<&[bool]>,
) -> Result<StepSolution, SolverError> {
    let clock = Instant::now();
    let n = sp.n();
    let (lo, hi) = sp.bounds();
    let fixed: Vec<bool> = (0..n)
        .map(|i| lo[i] == hi[i] || movable.is_some_and(|m| !m[i]))
        .collect();
    let mut x: Vec<f64> = sp
        .project(start)
        .into_iter()
        .zip(start)
        .enumerate()
        .map(|(i, (p, &s))| if movable.is_some_and(|m| !m[i]) { s } else { p })
        .collect();
    let mut stats = StepStats { certified: sp.is_certified(), ..Default::default() };
    let mut radius = f64::INFINITY;

    loop {
        let mut ev = sp.eval(&x, EvalLevel::Hessian)?;
        let g = ev.gradient.take().expect("requested");
        let h = ev.hessian.take().expect("requested");
        let f = ev.value;
        if stats.trace.is_empty() {
            stats.trace.push(f);
        }
        let mut r = kkt_components(&g, &x, lo, hi);
        for (ri, &fx) in r.iter_mut().zip(&fixed) {
            if fx {
                *ri = 0.0;
            }
        }
        stats.pg_norm = field_relative(sp, &r, &ev, movable);
        if stats.pg_norm <= cfg.grad_tol {
            finish(&mut stats, &h, &x, lo, hi, &fixed, cfg, clock);
            return Ok(StepSolution { x, stats });
        }
        if stats.newton_iters >= cfg.max_newton {
            finish(&mut stats, &h, &x, lo, hi, &fixed, cfg, clock);
            return Err(SolverError::NoConvergence { stats: Box::new(stats), last: x });
        }
        stats.newton_iters += 1;

        // active set: bounded unknowns close to a bound with the gradient
        // pushing outward
        let width = (0..n)
            .filter(|&i| !fixed[i])
            .map(|i| (x[i] - (x[i] - g[i]).clamp(lo[i], hi[i])).abs())
            .fold(0.0, f64::max)
            .min(cfg.active_eps);
        let active: Vec<bool> = (0..n)
            .map(|i| {
                fixed[i]
                    || (x[i] - lo[i] <= width && g[i] > 0.0)
                    || (hi[i] - x[i] <= width && g[i] < 0.0)
            })
            .collect();
        let keep: Vec<bool> = active.iter().map(|a| !a).collect();
        let (hff, idx) = h.submatrix(&keep);
        let gf: Vec<f64> = idx.iter().map(|&i| -g[i]).collect();
        let df = newton_direction(&hff, &gf, cfg, &mut stats)?;

        let hdiag = h.diag();
        let mut d = vec![0.0; n];
        for (k, &i) in idx.iter().enumerate() {
            d[i] = df[k];
        }
        for i in 0..n {
            if active[i] && !fixed[i] {
                d[i] = -g[i] / if hdiag[i] > 0.0 { hdiag[i] } else { 1.0 };
            }
        }
        if !stats.certified {
            let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            if radius.is_infinite() {
                radius = norm.max(f64::MIN_POSITIVE);
            }
            if norm > radius {
                d.iter_mut().for_each(|v| *v *= radius / norm);
            }
        }

        let fscale = [
            ev.breakdown.inertia,
            ev.breakdown.elastic,
            ev.breakdown.phi,
            ev.breakdown.gradient,
            ev.breakdown.load,
            ev.breakdown.viscous,
            ev.breakdown.dissipation,
        ]
        .iter()
        .map(|v| v.abs())
        .sum::<f64>()
        .max(f64::MIN_POSITIVE);

        let mut s = 1.0;
        let mut tries = 0;
        let (xs, fs) = loop {
            let xs: Vec<f64> = (0..n)
                .map(|i| if fixed[i] { x[i] } else { snap(x[i] + s * d[i], lo[i], hi[i]) })
                .collect();
            let pred: f64 = (0..n)
                .map(|i| if active[i] { g[i] * (xs[i] - x[i]) } else { s * g[i] * d[i] })
                .sum();
            let fs = sp.value(&xs)?;
            if fs - f <= cfg.armijo * pred {
                break (xs, fs);
            }
            if -pred <= ROUNDOFF * fscale && fs - f <= ROUNDOFF * fscale {
                break (xs, fs);
            }
            tries += 1;
            stats.backtracks += 1;
            if tries > cfg.max_backtracks {
                finish(&mut stats, &h, &x, lo, hi, &fixed, cfg, clock);
                return Err(SolverError::NoConvergence { stats: Box::new(stats), last: x });
            }
            s *= cfg.shrink;
        };

        if !stats.certified {
            let step: Vec<f64> = xs.iter().zip(&x).map(|(a, b)| a - b).collect();
            let model = step.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>() + 0.5 * h.quad_form(&step);
            let len = step.iter().map(|v| v * v).sum::<f64>().sqrt();
            let ratio = if model < 0.0 { (fs - f) / model } else { 1.0 };
            if ratio < 0.25 {
                radius = (0.25 * len).max(f64::MIN_POSITIVE);
                stats.rejected_steps += usize::from(ratio < 0.0);
            } else if ratio > 0.75 && len >= 0.99 * radius {
                radius *= 2.0;
            }
        }
        x = xs;
        stats.trace.push(fs);
    }
}

/// Clamp to `[lo, hi]`, landing exactly on a bound when within a few ulps.
fn snap(v: f64, lo: f64, hi: f64) -> f64 {
    let near = |b: f64| b.is_finite() && (v - b).abs() <= SNAP_ULPS * f64::EPSILON * b.abs().max(1.0);
    if near(lo) {
        lo
    } else if near(hi) {
        hi
    } else {
        v.clamp(lo, hi)
    }
}

/// Solve `H d = b`, adding a scaled diagonal shift until the factorization
/// is positive definite.
fn newton_direction(
    h: &SparseSym,
    b: &[f64],
    cfg: &SolverConfig,
    stats: &mut StepStats,
) -> Result<Vec<f64>, SolverError> {
    if h.n() == 0 {
        return Ok(Vec::new());
    }
    let diag = h.diag();
    let dmax = diag.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let weights: Vec<f64> = diag.iter().map(|v| v.abs().max(1e-12 * dmax)).collect();
    let mut mu = 0.0;
    let mut first = true;
    loop {
        let mut m = h.clone();
        if mu > 0.0 {
            m.add_diagonal(&weights.iter().map(|w| mu * w).collect::<Vec<_>>());
        }
        if let Ok(ldl) = Ldl::factor(&m) {
            if first {
                stats.negative_pivots = ldl.negative_pivots();
            }
            if ldl.negative_pivots() == 0 {
                let d = refined_solve(&ldl, &m, b, cfg.refine_tol);
                let descent: f64 = d.iter().zip(b).map(|(a, c)| a * c).sum();
                if descent > 0.0 && d.iter().all(|v| v.is_finite()) {
                    return Ok(d);
                }
            }
        }
        first = false;
        stats.levenberg_shifts += 1;
        mu = if mu == 0.0 { SHIFT_START } else { mu * 10.0 };
        if mu > SHIFT_LIMIT {
            return Err(SolverError::LinearSolveFailure(
                "no positive definite shift of the reduced Hessian found".into(),
            ));
        }
    }
}

fn refined_solve(ldl: &Ldl, a: &SparseSym, b: &[f64], tol: f64) -> Vec<f64> {
    let bn = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut x = ldl.solve(b);
    for _ in 0..MAX_REFINE {
        let ax = a.matvec(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
        if r.iter().fold(0.0f64, |m, v| m.max(v.abs())) <= tol * bn {
            break;
        }
        let dx = ldl.solve(&r);
        x.iter_mut().zip(&dx).for_each(|(p, q)| *p += q);
    }
    x
}

#[allow(clippy::too_many_arguments)]
fn finish(
    stats: &mut StepStats,
    h: &SparseSym,
    x: &[f64],
    lo: &[f64],
    hi: &[f64],
    fixed: &[bool],
    cfg: &SolverConfig,
    clock: Instant,
) {
    stats.active_set = (0..x.len())
        .filter(|&i| !fixed[i] && (x[i] <= lo[i] || x[i] >= hi[i]))
        .count();
    let keep: Vec<bool> = fixed.iter().map(|f| !f).collect();
    let (hf, _) = h.submatrix(&keep);
    stats.min_eig = if cfg.lanczos_steps > 0 && hf.n() > 0 {
        // symmetric diagonal scaling makes the estimate insensitive to the
        // very different magnitudes of the two fields
        let s: Vec<f64> = hf.diag().iter().map(|d| 1.0 / d.abs().max(f64::MIN_POSITIVE).sqrt()).collect();
        lanczos_extremes(hf.n(), cfg.lanczos_steps, |v| {
            let w: Vec<f64> = v.iter().zip(&s).map(|(a, b)| a * b).collect();
            hf.matvec(&w).iter().zip(&s).map(|(a, b)| a * b).collect()
        })
        .0
    } else {
        f64::NAN
    };
    stats.wall_time = clock.elapsed();
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::fem::{apply_dirichlet, Mesh, LoadSpec, ScalarField, Traction, Expr, DirichletSpec};
    use crate::material::MaterialParams;
    use crate::potential::{Model, PhiMode, State};
    use crate::solver::{energy_norm_distance, kkt_residual, relative_kkt_residual, solve_step, solve_step_from};
    use rand::{Rng, SeedableRng};

    fn bar(n: usize, frozen: bool) -> Arc<Model> {
        let mat = MaterialParams::ambrosio_tortorelli(1, 0.0, 0.5, 0.05, 1.0, 0.1, 0.1, 0.01, 1e-3, 1.0);
        let loads = LoadSpec {
            tractions: vec![Traction { tag: "right".into(), value: vec![ScalarField::Expr(Expr::parse("0.5*t").unwrap())] }],
            dirichlet: vec![DirichletSpec { tag: "left".into(), component: 0, value: ScalarField::Expr(Expr::parse("0").unwrap()) }],
            ..Default::default()
        };
        Arc::new(Model::new(Arc::new(Mesh::interval(1.0, n).unwrap()), mat, loads, PhiMode::Potential, frozen).unwrap())
    }

    #[test]
    fn equilibrium_start_takes_no_iterations() {
        let m = bar(10, false);
        let loads = LoadSpec::default();
        let m = Arc::new(Model::new(m.mesh.clone(), m.material.clone(), loads, PhiMode::Potential, false).unwrap());
        let sp = StepProblem::new(m.clone(), &State::zero(&m.dofs), m.tau0 / 2.0).unwrap();
        let sol = solve_step(&sp, &SolverConfig::default()).unwrap();
        assert_eq!(sol.stats.newton_iters, 0);
        assert_eq!(sol.x, sp.warm_start());
    }

    #[test]
    fn frozen_damage_matches_direct_solve() {
        let m = bar(12, true);
        let mut s = State::zero(&m.dofs);
        s.k = 3;
        s.alpha.iter_mut().enumerate().for_each(|(i, a)| *a = 1.0 - 0.03 * i as f64);
        s.v.iter_mut().enumerate().for_each(|(i, v)| *v = 0.1 * i as f64);
        let tau = 0.02;
        let sp = StepProblem::new(m.clone(), &s, tau).unwrap();
        let sol = solve_step(&sp, &SolverConfig::default()).unwrap();

        // the potential is quadratic in u: H x = H x0 - g(x0)
        let x0 = sp.warm_start();
        let h = sp.hessian(&x0).unwrap();
        let g = sp.gradient(&x0).unwrap();
        let hx0 = h.matvec(&x0);
        let b: Vec<f64> = hx0.iter().zip(&g).map(|(a, c)| a - c).collect();
        let (lo, hi) = sp.bounds();
        let pres: Vec<(usize, f64)> = (0..sp.n()).filter(|&i| lo[i] == hi[i]).map(|i| (i, lo[i])).collect();
        let red = apply_dirichlet(&h, &b, &pres).unwrap();
        let y = Ldl::factor(&red.matrix).unwrap().solve_refined(&red.matrix, &red.rhs);
        let direct = red.expand(&y);
        let umax = direct.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for i in 0..sp.n() {
            assert!((direct[i] - sol.x[i]).abs() <= 1e-10 * umax, "{i}");
        }
    }

    #[test]
    fn multi_start_agreement_in_certified_regime() {
        let m = bar(20, false);
        let mut s = State::zero(&m.dofs);
        s.k = 30;
        // strained prior state with damage beginning to drop
        for n in 0..m.dofs.n_nodes() {
            s.u[n] = 2.0 * m.mesh.coord(n)[0];
            s.alpha[n] = 1.0 - 0.3 * (m.mesh.coord(n)[0] - 0.5).powi(2);
        }
        let sp = StepProblem::new(m.clone(), &s, m.tau0 / 2.0).unwrap();
        let cfg = SolverConfig::default();
        let reference = solve_step(&sp, &cfg).unwrap();
        assert!(relative_kkt_residual(&sp, &reference.x).unwrap() <= 10.0 * cfg.grad_tol);
        assert!(kkt_residual(&sp, &reference.x).unwrap().is_finite());
        assert!(reference.stats.min_eig > 0.0);
        let h = sp.hessian(&reference.x).unwrap();
        let (lo, hi) = sp.bounds();
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        for _ in 0..10 {
            let start: Vec<f64> = (0..sp.n())
                .map(|i| {
                    if lo[i].is_finite() {
                        rng.gen_range(lo[i]..=hi[i])
                    } else {
                        reference.x[i] + rng.gen_range(-1.0..1.0)
                    }
                })
                .collect();
            let sol = solve_step_from(&sp, &cfg, &start).unwrap();
            assert!(energy_norm_distance(&h, &sol.x, &reference.x) <= 1e-8);
            for w in sol.stats.trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0));
            }
            for n in 0..m.dofs.n_nodes() {
                let a = sol.x[m.dofs.alpha(n)];
                assert!(a >= 0.0 && a <= s.alpha[n]);
            }
        }
    }

    #[test]
    fn identical_inputs_give_identical_iterates() {
        let m = bar(16, false);
        let mut s = State::zero(&m.dofs);
        s.k = 20;
        s.u.iter_mut().enumerate().for_each(|(i, u)| *u = 0.05 * i as f64);
        let sp = StepProblem::new(m, &s, 0.01).unwrap();
        let a = solve_step(&sp, &SolverConfig::default()).unwrap();
        let b = solve_step(&sp, &SolverConfig::default()).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.stats.trace, b.stats.trace);
    }
}
