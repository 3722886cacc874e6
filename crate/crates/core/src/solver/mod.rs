//! Per-step minimization of the incremental potential over the damage box.
//!
//! The monolithic solver is an active-set projected Newton method with a
//! projected Armijo line search. A staggered (alternating) variant serves
//! as a comparison baseline.

mod newton;
mod staggered;

pub use newton::minimize;
pub use staggered::staggered_step;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fem::SparseSym;
use crate::potential::{EvalLevel, PotentialError, PotentialEval, StepProblem};

const NOISE_ULPS: f64 = 64.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverMode {
    #[default]
    Monolithic,
    Staggered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Relative projected-gradient tolerance: per field, the largest KKT
    /// violation over the largest gradient term magnitude.
    pub grad_tol: f64,
    pub max_newton: usize,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    pub shrink: f64,
    pub max_backtracks: usize,
    pub mode: SolverMode,
    pub max_sweeps: usize,
    /// Residual tolerance of the iterative refinement in linear solves.
    pub refine_tol: f64,
    /// Upper bound on the width of the active-set detection band.
    pub active_eps: f64,
    /// Lanczos steps of the convexity monitor, 0 disables it.
    pub lanczos_steps: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            grad_tol: 1e-9,
            max_newton: 100,
            armijo: 1e-4,
            shrink: 0.5,
            max_backtracks: 60,
            mode: SolverMode::Monolithic,
            max_sweeps: 500,
            refine_tol: 1e-12,
            active_eps: 1e-3,
            lanczos_steps: 20,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), String> {
        let mut bad = Vec::new();
        if !(self.grad_tol > 0.0) {
            bad.push(format!("grad_tol = {} must be positive", self.grad_tol));
        }
        if self.max_newton < 1 {
            bad.push("max_newton must be at least 1".into());
        }
        if !(self.armijo > 0.0 && self.armijo < 0.5) {
            bad.push(format!("armijo = {} must lie in (0, 1/2)", self.armijo));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            bad.push(format!("shrink = {} must lie in (0, 1)", self.shrink));
        }
        if self.max_sweeps < 1 {
            bad.push("max_sweeps must be at least 1".into());
        }
        if !(self.refine_tol > 0.0) {
            bad.push(format!("refine_tol = {} must be positive", self.refine_tol));
        }
        if !(self.active_eps > 0.0) {
            bad.push(format!("active_eps = {} must be positive", self.active_eps));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(bad.join("; "))
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepStats {
    pub newton_iters: usize,
    pub backtracks: usize,
    /// Relative projected-gradient norm at the returned point.
    pub pg_norm: f64,
    /// Damage unknowns on a bound at the returned point.
    pub active_set: usize,
    /// Lanczos estimate of the smallest eigenvalue of the reduced Hessian.
    pub min_eig: f64,
    /// Negative pivots of the last unshifted factorization.
    pub negative_pivots: usize,
    pub levenberg_shifts: usize,
    /// Trust-region rejections (uncertified steps only).
    pub rejected_steps: usize,
    pub sweeps: usize,
    pub certified: bool,
    /// Potential value after each accepted iterate (per Newton iteration, or
    /// per sweep for the staggered solver), starting with the initial point.
    pub trace: Vec<f64>,
    pub wall_time: Duration,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("no convergence after {} iterations (projected gradient {:e})", .stats.newton_iters, .stats.pg_norm)]
    NoConvergence { stats: Box<StepStats>, last: Vec<f64> },
    #[error("staggered iteration stopped after {} sweeps (projected gradient {:e})", .stats.sweeps, .stats.pg_norm)]
    MaxSweeps { stats: Box<StepStats>, last: Vec<f64> },
    #[error("linear solve failed: {0}")]
    LinearSolveFailure(String),
    #[error(transparent)]
    Potential(#[from] PotentialError),
}

impl SolverError {
    pub fn stats(&self) -> Option<&StepStats> {
        match self {
            SolverError::NoConvergence { stats, .. } | SolverError::MaxSweeps { stats, .. } => {
                Some(stats)
            }
            _ => None,
        }
    }
}

/// Minimizer of one step in the combined layout.
#[derive(Debug, Clone)]
pub struct StepSolution {
    pub x: Vec<f64>,
    pub stats: StepStats,
}

/// Monolithic solve from the default warm start.
pub fn solve_step(sp: &StepProblem, cfg: &SolverConfig) -> Result<StepSolution, SolverError> {
    solve_step_from(sp, cfg, &sp.warm_start())
}

/// Monolithic solve from a given start, projected onto the box first.
pub fn solve_step_from(
    sp: &StepProblem,
    cfg: &SolverConfig,
    start: &[f64],
) -> Result<StepSolution, SolverError> {
    minimize(sp, cfg, start, None)
}

/// Dispatch on `cfg.mode`.
pub fn solve(sp: &StepProblem, cfg: &SolverConfig) -> Result<StepSolution, SolverError> {
    match cfg.mode {
        SolverMode::Monolithic => solve_step(sp, cfg),
        SolverMode::Staggered => staggered_step(sp, cfg),
    }
}

/// `v = 2 (u - u_old)/tau - v_old`.
pub fn velocity_update(u: &[f64], u_old: &[f64], v_old: &[f64], tau: f64) -> Vec<f64> {
    assert!(tau > 0.0, "step length must be positive");
    u.iter()
        .zip(u_old)
        .zip(v_old)
        .map(|((a, b), v)| 2.0 * (a - b) / tau - v)
        .collect()
}

/// Per-unknown violation of the box stationarity conditions: the gradient
/// in the interior, its outward part on a bound, 0 on fixed unknowns.
pub(crate) fn kkt_components(g: &[f64], x: &[f64], lower: &[f64], upper: &[f64]) -> Vec<f64> {
    g.iter()
        .zip(x)
        .zip(lower.iter().zip(upper))
        .map(|((&g, &x), (&lo, &hi))| {
            if lo == hi {
                0.0
            } else if x <= lo {
                g.min(0.0).abs()
            } else if x >= hi {
                g.max(0.0)
            } else {
                g.abs()
            }
        })
        .collect()
}

/// Largest absolute violation of the nodal complementarity conditions.
pub fn kkt_residual(sp: &StepProblem, x: &[f64]) -> Result<f64, SolverError> {
    let g = sp.gradient(x)?;
    let (lo, hi) = sp.bounds();
    Ok(kkt_components(&g, x, lo, hi).into_iter().fold(0.0, f64::max))
}

/// KKT violation relative to the gradient scale, taken per field
/// (displacement and damage) and maximized.
pub fn relative_kkt_residual(sp: &StepProblem, x: &[f64]) -> Result<f64, SolverError> {
    let ev = sp.eval(x, EvalLevel::Gradient)?;
    let (lo, hi) = sp.bounds();
    let r = kkt_components(ev.gradient.as_ref().expect("requested"), x, lo, hi);
    Ok(field_relative(sp, &r, &ev, None))
}

/// Per-field relative KKT measure. Components below the round-off level of
/// the gradient evaluation count as zero.
pub(crate) fn field_relative(
    sp: &StepProblem,
    r: &[f64],
    ev: &PotentialEval,
    movable: Option<&[bool]>,
) -> f64 {
    let dofs = &sp.model().dofs;
    let scale = ev.gradient_scale.as_ref().expect("gradient level");
    let noise = ev.gradient_noise.as_ref().expect("gradient level");
    let mut num = [0.0f64; 2];
    let mut den = [0.0f64; 2];
    for i in 0..r.len() {
        if movable.is_some_and(|m| !m[i]) {
            continue;
        }
        let f = usize::from(dofs.is_alpha(i));
        num[f] = num[f].max(r[i] - NOISE_ULPS * f64::EPSILON * noise[i]);
        den[f] = den[f].max(scale[i]);
    }
    (0..2)
        .map(|f| if num[f] == 0.0 { 0.0 } else { num[f] / den[f].max(f64::MIN_POSITIVE) })
        .fold(0.0, f64::max)
}

/// `sqrt(d^T H d / max(a^T H a, b^T H b))` with `d = a - b`.
pub fn energy_norm_distance(h: &SparseSym, a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let num = h.quad_form(&d).max(0.0);
    if num == 0.0 {
        return 0.0;
    }
    let den = h.quad_form(a).max(h.quad_form(b)).max(f64::MIN_POSITIVE);
    (num / den).sqrt()
}
