use std::time::Instant;

use super::{minimize, relative_kkt_residual, SolverConfig, SolverError, StepSolution, StepStats};
use crate::potential::StepProblem;

/// Alternating minimization: displacement with damage held, then damage
/// with displacement held, until the full projected gradient meets
/// `cfg.grad_tol`.
pub fn staggered_step(sp: &StepProblem, cfg: &SolverConfig) -> Result<StepSolution, SolverError> {
    let clock = Instant::now();
    let dofs = &sp.model().dofs;
    let u_mask: Vec<bool> = (0..sp.n()).map(|i| !dofs.is_alpha(i)).collect();
    let a_mask: Vec<bool> = u_mask.iter().map(|m| !m).collect();
    let mut x = sp.warm_start();
    let mut stats = StepStats { certified: sp.is_certified(), ..Default::default() };
    stats.trace.push(sp.value(&x)?);
    loop {
        stats.pg_norm = relative_kkt_residual(sp, &x)?;
        if stats.pg_norm <= cfg.grad_tol {
            break;
        }
        if stats.sweeps >= cfg.max_sweeps {
            stats.wall_time = clock.elapsed();
            return Err(SolverError::MaxSweeps { stats: Box::new(stats), last: x });
        }
        stats.sweeps += 1;
        for mask in [&u_mask, &a_mask] {
            let part = minimize(sp, cfg, &x, Some(mask))?;
            stats.newton_iters += part.stats.newton_iters;
            stats.backtracks += part.stats.backtracks;
            stats.levenberg_shifts += part.stats.levenberg_shifts;
            x = part.x;
        }
        stats.trace.push(sp.value(&x)?);
    }
    let last = minimize(sp, &SolverConfig { max_newton: 1, ..cfg.clone() }, &x, None);
    match last {
        Ok(sol) => {
            stats.min_eig = sol.stats.min_eig;
            stats.active_set = sol.stats.active_set;
            stats.negative_pivots = sol.stats.negative_pivots;
        }
        Err(e) => {
            if let Some(s) = e.stats() {
                stats.min_eig = s.min_eig;
                stats.active_set = s.active_set;
            }
        }
    }
    stats.wall_time = clock.elapsed();
    Ok(StepSolution { x, stats })
}
