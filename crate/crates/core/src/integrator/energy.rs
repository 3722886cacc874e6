use std::sync::Arc;

use super::Trajectory;
use crate::potential::{Model, PotentialError, State, StepProblem};

/// Dissipated energy and external work of one step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepIncrement {
    /// `du^T D(alpha_old) du / tau`
    pub viscous: f64,
    /// `eta/tau int |d alpha|^2`
    pub damage: f64,
    /// Work of the averaged loads plus the reaction work at prescribed
    /// displacements.
    pub external: f64,
}

/// Increment of the step `sp` ending at `x` (combined layout).
pub fn step_increment(sp: &StepProblem, x: &[f64]) -> Result<StepIncrement, PotentialError> {
    let model = sp.model();
    let dofs = &model.dofs;
    let n = sp.n();
    let xp = sp.x_prev();
    let mut du = vec![0.0; n];
    let mut da = vec![0.0; n];
    for i in 0..n {
        if dofs.is_alpha(i) {
            da[i] = x[i] - xp[i];
        } else {
            du[i] = x[i] - xp[i];
        }
    }
    let tau = sp.tau();
    let viscous = sp.viscous_matrix().quad_form(&du) / tau;
    let damage = model.material.dissipation.eta * model.damage_mass.quad_form(&da) / tau;
    let (f, g) = sp.loads();
    let mut external: f64 = (0..n).map(|i| (f[i] + g[i]) * du[i]).sum();
    let (lo, hi) = sp.bounds();
    let constrained: Vec<usize> = (0..n).filter(|&i| !dofs.is_alpha(i) && lo[i] == hi[i]).collect();
    if !constrained.is_empty() {
        // the potential gradient at a prescribed unknown is the reaction
        let grad = sp.gradient(x)?;
        external += constrained.iter().map(|&i| grad[i] * du[i]).sum::<f64>();
    }
    Ok(StepIncrement { viscous, damage, external })
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EnergyRow {
    pub k: usize,
    pub t: f64,
    pub kinetic: f64,
    pub elastic: f64,
    /// `-int phi`
    pub phi: f64,
    pub gradient: f64,
    pub visc_diss: f64,
    pub dam_diss: f64,
    pub ext_work: f64,
    /// Right minus left side of the discrete energy inequality.
    pub margin: f64,
}

impl EnergyRow {
    pub fn stored(&self) -> f64 {
        self.elastic + self.phi + self.gradient
    }

    pub fn mechanical(&self) -> f64 {
        self.kinetic + self.stored()
    }

    fn magnitude(&self) -> f64 {
        [self.kinetic, self.elastic, self.phi, self.gradient, self.visc_diss, self.dam_diss, self.ext_work]
            .iter()
            .map(|v| v.abs())
            .sum()
    }
}

/// Energy ledger of a trajectory with cumulative dissipation and work.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub tau: f64,
    pub tau0: f64,
    pub rows: Vec<EnergyRow>,
}

impl EnergyReport {
    pub fn new(model: &Model, tau: f64, initial: &State) -> Self {
        let mut report = Self { tau, tau0: model.tau0, rows: Vec::new() };
        report.rows.push(row(model, initial, 0, 0.0, StepIncrement::default(), None));
        report
    }

    pub fn push(&mut self, model: &Model, state: &State, inc: StepIncrement) {
        let prev = *self.rows.last().expect("report holds the initial row");
        let r = row(model, state, state.k, state.t, inc, Some(&prev));
        self.rows.push(r);
        let p = inequality_prefactor(self.tau, self.tau0);
        let last = self.rows.len() - 1;
        self.rows[last].margin = margin_of(&self.rows[0], &self.rows[last], p);
    }

    pub fn initial_energy(&self) -> f64 {
        self.rows[0].mechanical()
    }

    /// `max(|initial energy|, largest sum of term magnitudes over the run)`,
    /// the reference for relative energy tolerances.
    pub fn energy_scale(&self) -> f64 {
        self.rows
            .iter()
            .map(EnergyRow::magnitude)
            .fold(self.initial_energy().abs(), f64::max)
    }
}

fn row(
    model: &Model,
    s: &State,
    k: usize,
    t: f64,
    inc: StepIncrement,
    prev: Option<&EnergyRow>,
) -> EnergyRow {
    let (elastic, phi, gradient) = model.stored_energy_of(s);
    let base = prev.copied().unwrap_or_default();
    EnergyRow {
        k,
        t,
        kinetic: model.kinetic(&s.v),
        elastic,
        phi,
        gradient,
        visc_diss: base.visc_diss + inc.viscous,
        dam_diss: base.dam_diss + inc.damage,
        ext_work: base.ext_work + inc.external,
        margin: 0.0,
    }
}

fn margin_of(first: &EnergyRow, r: &EnergyRow, prefactor: f64) -> f64 {
    let rhs = first.mechanical() + r.ext_work;
    let lhs = r.mechanical() + prefactor * (r.visc_diss + r.dam_diss);
    rhs - lhs
}

/// `1 - sqrt(tau/tau0)`, clipped at 0 beyond the threshold, 1 when the
/// threshold is infinite.
pub fn inequality_prefactor(tau: f64, tau0: f64) -> f64 {
    if tau0.is_infinite() {
        1.0
    } else {
        (1.0 - (tau / tau0).sqrt()).max(0.0)
    }
}

/// Ledger of an existing trajectory, recomputed step by step with the same
/// operators as the solver.
pub fn energy_report(model: &Arc<Model>, traj: &Trajectory) -> Result<EnergyReport, PotentialError> {
    let mut report = EnergyReport::new(model, traj.tau, &traj.states[0]);
    for k in 1..traj.states.len() {
        let sp = StepProblem::new(model.clone(), &traj.states[k - 1], traj.tau)?;
        let inc = step_increment(&sp, &model.pack(&traj.states[k]))?;
        report.push(model, &traj.states[k], inc);
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InequalityCheck {
    pub prefactor: f64,
    pub margins: Vec<f64>,
    pub tolerance: f64,
    /// Whether the check is binding (`tau <= tau0`); beyond the threshold it
    /// is advisory only.
    pub certified: bool,
    pub worst: f64,
    pub pass: bool,
}

/// Margins of the discrete energy inequality at every grid time, passing
/// when all are at least `-rel_tol * energy scale`.
pub fn check_energy_inequality(report: &EnergyReport, tau: f64, tau0: f64, rel_tol: f64) -> InequalityCheck {
    let prefactor = inequality_prefactor(tau, tau0);
    let margins: Vec<f64> = report.rows.iter().map(|r| margin_of(&report.rows[0], r, prefactor)).collect();
    let tolerance = rel_tol * report.energy_scale();
    let worst = margins.iter().copied().fold(f64::INFINITY, f64::min);
    InequalityCheck {
        prefactor,
        pass: worst >= -tolerance,
        margins,
        tolerance,
        certified: tau <= tau0,
        worst,
    }
}

/// `(sum_k (v^k - v^{k-1})^T M (v^k + v^{k-1})/2, T(v^K) - T(v^0), scale)`
/// where `scale` is the sum of the absolute summands.
pub fn kinetic_telescoping(model: &Model, traj: &Trajectory) -> (f64, f64, f64) {
    let mut sum = 0.0;
    let mut scale = 0.0;
    for w in traj.states.windows(2) {
        let dv: Vec<f64> = w[1].v.iter().zip(&w[0].v).map(|(a, b)| a - b).collect();
        let av: Vec<f64> = w[1].v.iter().zip(&w[0].v).map(|(a, b)| 0.5 * (a + b)).collect();
        let m_av = model.mass.matvec(&model.dofs.embed_u(&av));
        let term: f64 = model.dofs.embed_u(&dv).iter().zip(&m_av).map(|(a, b)| a * b).sum();
        sum += term;
        scale += term.abs();
    }
    let diff = model.kinetic(&traj.last().v) - model.kinetic(&traj.states[0].v);
    (sum, diff, scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prefactor_values() {
        assert_eq!(inequality_prefactor(0.25, 1.0), 0.5);
        assert_eq!(inequality_prefactor(1.0, f64::INFINITY), 1.0);
        assert_eq!(inequality_prefactor(4.0, 1.0), 0.0);
        assert_eq!(inequality_prefactor(0.0, 1.0), 1.0);
    }
}
