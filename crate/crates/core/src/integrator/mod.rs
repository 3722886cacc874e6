//! Time stepping: the step loop, trajectory interpolants, the energy
//! ledger with its discrete energy inequality, and a-priori norms.

mod diagnostics;
mod energy;
mod trajectory;

pub use diagnostics::{apriori_diagnostics, AprioriNorms};
pub use energy::{
    check_energy_inequality, energy_report, inequality_prefactor, kinetic_telescoping,
    step_increment, EnergyReport, EnergyRow, InequalityCheck, StepIncrement,
};
pub use trajectory::{Field, Trajectory};

use std::sync::Arc;

use thiserror::Error;

use crate::potential::{Model, PotentialError, State, StepProblem};
use crate::solver::{solve, velocity_update, SolverConfig, SolverError, StepStats};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Refuse to start when `tau` exceeds the critical step.
    pub strict_tau0: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trajectory: Trajectory,
    pub report: EnergyReport,
    pub stats: Vec<StepStats>,
}

#[derive(Debug, Clone, Error)]
pub enum RunError {
    #[error("step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: SolverError,
        partial: Box<RunOutput>,
    },
    #[error("step {tau} exceeds the critical step {tau0} and uncertified steps are refused")]
    Uncertified { tau: f64, tau0: f64 },
    #[error(transparent)]
    Potential(#[from] PotentialError),
}

impl RunError {
    /// Steps completed before the failure.
    pub fn partial(&self) -> Option<&RunOutput> {
        match self {
            RunError::Step { partial, .. } => Some(partial),
            _ => None,
        }
    }
}

/// Run `n_steps` steps of length `tau` from `initial`.
pub fn run(
    model: &Arc<Model>,
    initial: State,
    tau: f64,
    n_steps: usize,
    cfg: &SolverConfig,
    opts: &RunOptions,
) -> Result<RunOutput, RunError> {
    initial.check()?;
    if opts.strict_tau0 && !model.is_certified(tau) {
        return Err(RunError::Uncertified { tau, tau0: model.tau0 });
    }
    if !model.is_certified(tau) {
        log::warn!(
            "step {tau:e} exceeds the critical step {:e}; steps are uncertified",
            model.tau0
        );
    }
    let mut out = RunOutput {
        report: EnergyReport::new(model, tau, &initial),
        trajectory: Trajectory::new(tau, initial),
        stats: Vec::with_capacity(n_steps),
    };
    for k in 1..=n_steps {
        let prev = out.trajectory.last().clone();
        let sp = StepProblem::new(model.clone(), &prev, tau)?;
        let sol = match solve(&sp, cfg) {
            Ok(s) => s,
            Err(source) => {
                return Err(RunError::Step { step: k, source, partial: Box::new(out) });
            }
        };
        let (u, mut alpha) = model.dofs.unpack(&sol.x);
        // exact unidirectionality against round-off in the projection
        for (a, &a_old) in alpha.iter_mut().zip(&prev.alpha) {
            *a = a.clamp(0.0, a_old);
        }
        let v = velocity_update(&u, &prev.u, &prev.v, tau);
        let state = State { k, t: k as f64 * tau, u, v, alpha };
        let inc = step_increment(&sp, &model.pack(&state))?;
        out.report.push(model, &state, inc);
        log::debug!(
            "step {k}: {} Newton iterations, projected gradient {:.3e}",
            sol.stats.newton_iters,
            sol.stats.pg_norm
        );
        out.trajectory.states.push(state);
        out.stats.push(sol.stats);
    }
    Ok(out)
}
