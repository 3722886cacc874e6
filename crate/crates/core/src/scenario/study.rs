use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use super::{Scenario, ScenarioError};
use crate::fem::{assemble_degraded_stiffness, assemble_mass, assemble_viscous, SparseSym};
use crate::integrator::{apriori_diagnostics, AprioriNorms, RunError, RunOptions, RunOutput};
use crate::material::Density;
use crate::potential::{Model, State, StepProblem};
use crate::solver::{energy_norm_distance, SolverMode};

#[derive(Debug, Error)]
pub enum StudyError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("level {level}: {source}")]
    Run {
        level: usize,
        #[source]
        source: RunError,
    },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone)]
pub struct StudyOptions {
    /// Number of step halvings plus one; at least 3.
    pub levels: usize,
    /// Compare only on `[0, window]`; the runs stop there.
    pub window: Option<f64>,
    /// Also run the base level with the staggered solver.
    pub compare_staggered: bool,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self { levels: 3, window: None, compare_staggered: true }
    }
}

#[derive(Debug, Clone)]
pub struct LevelSummary {
    pub tau: f64,
    pub n_steps: usize,
    pub norms: AprioriNorms,
    pub newton_iters: usize,
    pub max_newton_iters: usize,
    pub certified: bool,
    pub wall_time: Duration,
}

#[derive(Debug, Clone)]
pub struct StaggeredComparison {
    pub tau: f64,
    /// Energy-norm distance of the final states.
    pub distance: f64,
    pub sweeps: usize,
    pub newton_staggered: usize,
    pub newton_monolithic: usize,
}

/// Errors against the closed-form modal solution.
#[derive(Debug, Clone)]
pub struct OscillatorCheck {
    /// Largest L2 error over the grid times, relative to the largest L2
    /// norm of the exact solution, per level.
    pub errors: Vec<f64>,
    pub orders: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct StudyResult {
    pub window_end: f64,
    pub levels: Vec<LevelSummary>,
    /// `max_k ||u_l(k tau_l) - u_{l+1}(k tau_l)||_L2` for consecutive levels.
    pub u_diffs: Vec<f64>,
    pub alpha_diffs: Vec<f64>,
    pub u_orders: Vec<f64>,
    pub alpha_orders: Vec<f64>,
    /// Differences strictly decrease across levels (or vanish).
    pub cauchy_monotone: bool,
    /// A-priori norms of every pair of levels within a factor 2.
    pub apriori_uniform: bool,
    pub staggered: Option<StaggeredComparison>,
    pub oscillator: Option<OscillatorCheck>,
}

fn orders(d: &[f64]) -> Vec<f64> {
    d.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

fn monotone(d: &[f64]) -> bool {
    d.windows(2).all(|w| w[1] < w[0] || (w[0] == 0.0 && w[1] == 0.0))
}

fn l2_dist(m: &SparseSym, a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    m.quad_form(&d).max(0.0).sqrt()
}

/// Runs the scenario at `tau, tau/2, ...` and compares the levels at the
/// grid times of the coarser one.
pub fn run_convergence_study(sc: &Scenario, opts: &StudyOptions) -> Result<StudyResult, StudyError> {
    if opts.levels < 3 {
        return Err(StudyError::Invalid(format!("a study needs at least 3 levels, got {}", opts.levels)));
    }
    if sc.tau > 0.5 * sc.model.tau0 * (1.0 + 1e-12) {
        return Err(StudyError::Invalid(format!(
            "base step {} must not exceed tau0/2 = {}",
            sc.tau,
            0.5 * sc.model.tau0
        )));
    }
    let window = opts.window.unwrap_or(sc.end_time()).min(sc.end_time());
    let base_steps = ((window / sc.tau) * (1.0 + 1e-12)).floor() as usize;
    if base_steps == 0 {
        return Err(StudyError::Invalid(format!("window {window} is shorter than one step")));
    }
    let window_end = base_steps as f64 * sc.tau;
    let base = sc.with_end_time(window_end)?;

    let scenarios: Vec<Scenario> = (0..opts.levels)
        .map(|l| base.with_tau(base.tau / f64::powi(2.0, l as i32)))
        .collect::<Result<_, _>>()?;
    let runs: Vec<(RunOutput, Duration)> = scenarios
        .par_iter()
        .enumerate()
        .map(|(level, s)| {
            let clock = Instant::now();
            s.run(&RunOptions::default())
                .map(|o| (o, clock.elapsed()))
                .map_err(|source| StudyError::Run { level, source })
        })
        .collect::<Result<_, _>>()?;

    let model = &base.model;
    let m_u = assemble_mass(&model.mesh, &model.dofs, &Density::Uniform(1.0));
    let m_a = &model.damage_mass;
    let mut u_diffs = Vec::new();
    let mut alpha_diffs = Vec::new();
    for l in 0..opts.levels - 1 {
        let (coarse, fine) = (&runs[l].0.trajectory, &runs[l + 1].0.trajectory);
        let (mut du, mut da) = (0.0f64, 0.0f64);
        for (k, s) in coarse.states.iter().enumerate() {
            let f = &fine.states[2 * k];
            du = du.max(l2_dist(&m_u, &model.dofs.embed_u(&s.u), &model.dofs.embed_u(&f.u)));
            da = da.max(l2_dist(m_a, &alpha_only(model, s), &alpha_only(model, f)));
        }
        u_diffs.push(du);
        alpha_diffs.push(da);
    }

    let levels: Vec<LevelSummary> = runs
        .iter()
        .zip(&scenarios)
        .map(|((o, wall), s)| LevelSummary {
            tau: s.tau,
            n_steps: s.n_steps,
            norms: apriori_diagnostics(&s.model, &o.trajectory),
            newton_iters: o.stats.iter().map(|st| st.newton_iters).sum(),
            max_newton_iters: o.stats.iter().map(|st| st.newton_iters).max().unwrap_or(0),
            certified: s.is_certified(),
            wall_time: *wall,
        })
        .collect();
    let apriori_uniform = levels
        .iter()
        .all(|a| levels.iter().all(|b| a.norms.within_factor(&b.norms, 2.0)));

    let staggered = if opts.compare_staggered {
        let mut cfg = base.solver.clone();
        cfg.mode = SolverMode::Staggered;
        let st_sc = base.with_solver(cfg)?;
        let st = st_sc.run(&RunOptions::default()).map_err(|source| StudyError::Run { level: 0, source })?;
        let mono = &runs[0].0;
        let traj = &mono.trajectory;
        let k = traj.n_steps();
        let sp = StepProblem::new(model.clone(), &traj.states[k - 1], base.tau)
            .map_err(|e| StudyError::Invalid(e.to_string()))?;
        let xm = model.pack(traj.last());
        let h = sp.hessian(&xm).map_err(|e| StudyError::Invalid(e.to_string()))?;
        Some(StaggeredComparison {
            tau: base.tau,
            distance: energy_norm_distance(&h, &model.pack(st.trajectory.last()), &xm),
            sweeps: st.stats.iter().map(|s| s.sweeps).sum(),
            newton_staggered: st.stats.iter().map(|s| s.newton_iters).sum(),
            newton_monolithic: mono.stats.iter().map(|s| s.newton_iters).sum(),
        })
    } else {
        None
    };

    let oscillator = if has_closed_form(model) {
        let mut errors = Vec::new();
        for ((o, _), s) in runs.iter().zip(&scenarios) {
            let times: Vec<f64> = o.trajectory.states.iter().map(|st| st.t).collect();
            let exact = oscillator_reference(&s.model, &s.initial, &times).map_err(StudyError::Invalid)?;
            let mut err = 0.0f64;
            let mut scale = 0.0f64;
            for (st, ex) in o.trajectory.states.iter().zip(&exact) {
                let e = model.dofs.embed_u(ex);
                err = err.max(l2_dist(&m_u, &model.dofs.embed_u(&st.u), &e));
                scale = scale.max(m_u.quad_form(&e).sqrt());
            }
            errors.push(err / scale.max(f64::MIN_POSITIVE));
        }
        Some(OscillatorCheck { orders: orders(&errors), errors })
    } else {
        None
    };

    Ok(StudyResult {
        window_end,
        cauchy_monotone: monotone(&u_diffs) && monotone(&alpha_diffs),
        u_orders: orders(&u_diffs),
        alpha_orders: orders(&alpha_diffs),
        u_diffs,
        alpha_diffs,
        levels,
        apriori_uniform,
        staggered,
        oscillator,
    })
}

fn alpha_only(model: &Model, s: &State) -> Vec<f64> {
    let mut x = vec![0.0; model.dofs.n_total()];
    for (n, a) in s.alpha.iter().enumerate() {
        x[model.dofs.alpha(n)] = *a;
    }
    x
}

/// Frozen damage, no loads and homogeneous, constant constraints.
fn has_closed_form(model: &Model) -> bool {
    let l = &model.loads;
    let fixed_zero = |t: f64| {
        model
            .constraints
            .values_at(&model.mesh, t)
            .map(|v| v.iter().all(|(_, x)| *x == 0.0))
            .unwrap_or(false)
    };
    model.freeze_damage
        && l.body.is_empty()
        && l.tractions.is_empty()
        && [0.0, 0.37, 1.0, 10.0].iter().all(|&t| fixed_zero(t))
}

/// Modal solution of `M u'' + D u' + K u = 0` with the damage frozen at
/// its initial value, at the given times (node-major displacements).
pub fn oscillator_reference(model: &Model, initial: &State, times: &[f64]) -> Result<Vec<Vec<f64>>, String> {
    if !has_closed_form(model) {
        return Err("closed form needs frozen damage, no loads and zero constraints".into());
    }
    let mesh = &model.mesh;
    let dofs = &model.dofs;
    let mat = &model.material;
    let x0 = model.pack(initial);
    let k_full = assemble_degraded_stiffness(mesh, dofs, &mat.elastic, &mat.degradation, &x0);
    let d_full = assemble_viscous(mesh, dofs, &mat.viscosity, &mat.elastic, &mat.degradation, &x0);
    let fixed: Vec<usize> = model.constraints.dofs();
    let free: Vec<usize> = (0..dofs.n_total()).filter(|i| !dofs.is_alpha(*i) && !fixed.contains(i)).collect();
    let n = free.len();
    let sub = |a: &SparseSym| DMatrix::from_fn(n, n, |i, j| a.get(free[i], free[j]));
    let (m, k, d) = (sub(&model.mass), sub(&k_full), sub(&d_full));

    let l = m.clone().cholesky().ok_or("mass matrix is not positive definite")?.l();
    let l_inv = l.clone().try_inverse().ok_or("singular mass factor")?;
    let a = &l_inv * &k * l_inv.transpose();
    let a = (&a + a.transpose()) * 0.5;
    let eig = a.symmetric_eigen();
    let phi = l_inv.transpose() * &eig.eigenvectors;
    let c = phi.transpose() * &d * &phi;
    let cmax = c.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    for i in 0..n {
        for j in 0..n {
            if i != j && c[(i, j)].abs() > 1e-8 * cmax {
                return Err("damping is not diagonal in the elastic modes".into());
            }
        }
    }
    let x0f = x0.clone();
    let v0 = dofs.embed_u(&initial.v);
    let u0 = DVector::from_iterator(n, free.iter().map(|&i| x0f[i]));
    let v0 = DVector::from_iterator(n, free.iter().map(|&i| v0[i]));
    let q0 = phi.transpose() * &m * u0;
    let p0 = phi.transpose() * &m * v0;

    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        let q = DVector::from_iterator(
            n,
            (0..n).map(|i| modal(eig.eigenvalues[i].max(0.0), c[(i, i)], q0[i], p0[i], t)),
        );
        let u = &phi * q;
        let mut full = vec![0.0; dofs.n_total()];
        for (r, &i) in free.iter().enumerate() {
            full[i] = u[r];
        }
        out.push(dofs.extract_u(&full));
    }
    Ok(out)
}

// q'' + c q' + w2 q = 0, q(0) = q0, q'(0) = p0
fn modal(w2: f64, c: f64, q0: f64, p0: f64, t: f64) -> f64 {
    let b = 0.5 * c;
    let disc = w2 - b * b;
    if disc > 1e-14 * w2 {
        let wd = disc.sqrt();
        (-b * t).exp() * (q0 * (wd * t).cos() + (p0 + b * q0) / wd * (wd * t).sin())
    } else if disc < -1e-14 * w2 {
        let s = (-disc).sqrt();
        let (r1, r2) = (-b + s, -b - s);
        let a1 = (p0 - r2 * q0) / (r1 - r2);
        let a2 = q0 - a1;
        a1 * (r1 * t).exp() + a2 * (r2 * t).exp()
    } else {
        (q0 + (p0 + b * q0) * t) * (-b * t).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modal_solutions_satisfy_their_equation() {
        for (w2, c) in [(4.0, 0.0), (4.0, 1.0), (4.0, 4.0), (4.0, 10.0)] {
            let q = |t: f64| modal(w2, c, 0.7, -0.3, t);
            assert!((q(0.0) - 0.7).abs() < 1e-12);
            let h = 1e-4;
            assert!(((q(h) - q(-h)) / (2.0 * h) + 0.3).abs() < 1e-6);
            for t in [0.3, 1.1] {
                let d1 = (q(t + h) - q(t - h)) / (2.0 * h);
                let d2 = (q(t + h) - 2.0 * q(t) + q(t - h)) / (h * h);
                assert!((d2 + c * d1 + w2 * q(t)).abs() < 1e-5, "{w2} {c} {t}");
            }
        }
    }

    #[test]
    fn orders_and_monotonicity() {
        assert_eq!(orders(&[4.0, 2.0, 1.0]), vec![1.0, 1.0]);
        assert!(monotone(&[4.0, 2.0]));
        assert!(!monotone(&[2.0, 2.0]));
        assert!(monotone(&[0.0, 0.0]));
    }
}
