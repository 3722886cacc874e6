use std::sync::Arc;

use rayon::prelude::*;

use super::{Model, PhiMode, PotentialError, State};
use crate::fem::assembly::{
    alpha_at_quadrature, b_matrix, element_alpha_gradient, elastic_local, mean_gamma,
};
use crate::fem::quadrature::element_rule;
use crate::fem::{
    assemble_degraded_stiffness, assemble_viscous, damage_gradient_residual, time_averaged_loads,
    SparseSym,
};
use crate::material::{voigt_size, DamageEnergy};

/// Tolerance on the damage bounds before a point counts as infeasible.
pub const INFEASIBILITY_TOL: f64 = 1e-12;

const PARALLEL_MIN_ELEMS: usize = 512;
const DQ_DEGENERATE: f64 = 1e-12;

// 8-point Gauss-Legendre on [-1, 1]
const GL8_X: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL8_W: [f64; 8] = [
    0.101_228_536_290_376_3,
    0.222_381_034_453_374_5,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// Which derivatives [`StepProblem::eval`] computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EvalLevel {
    Value,
    Gradient,
    Hessian,
}

/// Per-term split of the potential value.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Breakdown {
    pub inertia: f64,
    pub elastic: f64,
    /// `-int phi` (or its difference-quotient counterpart).
    pub phi: f64,
    pub gradient: f64,
    pub load: f64,
    pub viscous: f64,
    pub dissipation: f64,
}

impl Breakdown {
    pub fn total(&self) -> f64 {
        self.inertia
            + self.elastic
            + self.phi
            + self.gradient
            + self.load
            + self.viscous
            + self.dissipation
    }
}

#[derive(Debug, Clone)]
pub struct PotentialEval {
    pub value: f64,
    pub breakdown: Breakdown,
    pub gradient: Option<Vec<f64>>,
    /// Sum of absolute per-term contributions to each gradient entry, the
    /// natural scale for relative stationarity tests.
    pub gradient_scale: Option<Vec<f64>>,
    /// Magnitude of the products summed into each gradient entry; its
    /// product with the machine epsilon bounds the evaluation round-off.
    pub gradient_noise: Option<Vec<f64>>,
    pub hessian: Option<SparseSym>,
}

/// `(phi-part, d/dalpha, d2/dalpha2)` of the damage-energy term at one point.
fn damage_term(phi: &DamageEnergy, mode: PhiMode, a: f64, a_old: f64) -> (f64, f64, f64) {
    match mode {
        PhiMode::Potential => (-phi.phi(a), -phi.dphi(a), -phi.d2phi(a)),
        PhiMode::DifferenceQuotient => {
            let d = a - a_old;
            if d.abs() <= DQ_DEGENERATE {
                return (-phi.dphi(a) * d, -phi.dphi(a), -0.5 * phi.d2phi(a));
            }
            let p0 = phi.phi(a_old);
            let quotient = |r: f64| (phi.phi(r) - p0) / (r - a_old);
            let mid = 0.5 * (a + a_old);
            let q: f64 = GL8_X
                .iter()
                .zip(GL8_W)
                .map(|(&s, w)| w * quotient(mid + 0.5 * d * s))
                .sum::<f64>()
                * 0.5
                * d;
            let dq = quotient(a);
            let ddq = (phi.dphi(a) * d - (phi.phi(a) - p0)) / (d * d);
            (-q, -dq, -ddq)
        }
    }
}

struct ElemOut {
    idx: Vec<usize>,
    parts: [f64; 4], // elastic, phi, gradient, dissipation
    grad: Vec<f64>,
    gabs: Vec<f64>,
    gnoise: Vec<f64>,
    hess: Vec<f64>,
}

/// One incremental problem: the previous state, the step length and all
/// data frozen over the step.
#[derive(Debug, Clone)]
pub struct StepProblem {
    model: Arc<Model>,
    prev: State,
    tau: f64,
    x_prev: Vec<f64>,
    free_flight: Vec<f64>,
    viscous: SparseSym,
    body: Vec<f64>,
    traction: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    const_hessian: SparseSym,
}

impl StepProblem {
    pub fn new(model: Arc<Model>, prev: &State, tau: f64) -> Result<Self, PotentialError> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(PotentialError::Invalid(format!("step length {tau} must be positive")));
        }
        prev.check()?;
        let dofs = model.dofs;
        let mesh = &model.mesh;
        let m = &model.material;
        let k = prev.k + 1;
        let x_prev = dofs.pack(&prev.u, &prev.alpha);
        let shifted: Vec<f64> = prev.u.iter().zip(&prev.v).map(|(u, v)| u + tau * v).collect();
        let free_flight = dofs.pack(&shifted, &prev.alpha);
        let viscous = assemble_viscous(mesh, &dofs, &m.viscosity, &m.elastic, &m.degradation, &x_prev);
        let (body, traction) = time_averaged_loads(&model.loads, k, tau, mesh, &dofs);

        let n = dofs.n_total();
        let mut lower = vec![f64::NEG_INFINITY; n];
        let mut upper = vec![f64::INFINITY; n];
        for node in 0..dofs.n_nodes() {
            let i = dofs.alpha(node);
            upper[i] = prev.alpha[node];
            lower[i] = if model.freeze_damage { prev.alpha[node] } else { 0.0 };
        }
        for (i, v) in model.constraints.values_at(mesh, k as f64 * tau)? {
            lower[i] = v;
            upper[i] = v;
        }

        let mut const_hessian = model.mass.clone();
        const_hessian.scale(2.0 / (tau * tau));
        const_hessian.add_scaled(&viscous, 1.0 / tau);
        if m.dissipation.eta != 0.0 {
            const_hessian.add_scaled(&model.damage_mass, m.dissipation.eta / tau);
        }
        Ok(Self {
            model,
            prev: prev.clone(),
            tau,
            x_prev,
            free_flight,
            viscous,
            body,
            traction,
            lower,
            upper,
            const_hessian,
        })
    }

    pub fn model(&self) -> &Arc<Model> {
        &self.model
    }

    pub fn prev(&self) -> &State {
        &self.prev
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Time at the end of the step.
    pub fn time(&self) -> f64 {
        (self.prev.k + 1) as f64 * self.tau
    }

    pub fn n(&self) -> usize {
        self.x_prev.len()
    }

    pub fn is_certified(&self) -> bool {
        self.model.is_certified(self.tau)
    }

    /// Bounds on every unknown in the combined layout: `[0, alpha_old]` on
    /// damage, the prescribed value on constrained displacements, unbounded
    /// otherwise.
    pub fn bounds(&self) -> (&[f64], &[f64]) {
        (&self.lower, &self.upper)
    }

    /// Nodal damage box `(lower, upper)`.
    pub fn feasible_box(&self) -> (Vec<f64>, Vec<f64>) {
        let dofs = &self.model.dofs;
        (dofs.extract_alpha(&self.lower), dofs.extract_alpha(&self.upper))
    }

    /// Previous state in the combined layout.
    pub fn x_prev(&self) -> &[f64] {
        &self.x_prev
    }

    /// Default start `(u_old + tau v_old, alpha_old)` with prescribed
    /// displacements imposed.
    pub fn warm_start(&self) -> Vec<f64> {
        self.project(&self.free_flight)
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&v, (&lo, &hi))| v.max(lo).min(hi))
            .collect()
    }

    /// Averaged body-force and traction vectors of this step.
    pub fn loads(&self) -> (&[f64], &[f64]) {
        (&self.body, &self.traction)
    }

    pub fn viscous_matrix(&self) -> &SparseSym {
        &self.viscous
    }

    pub fn check_feasible(&self, x: &[f64]) -> Result<(), PotentialError> {
        for (i, (&v, (&lo, &hi))) in x.iter().zip(self.lower.iter().zip(&self.upper)).enumerate() {
            if !self.model.dofs.is_alpha(i) {
                continue;
            }
            if !(v >= lo - INFEASIBILITY_TOL && v <= hi + INFEASIBILITY_TOL) {
                return Err(PotentialError::Infeasible { dof: i, value: v, lower: lo, upper: hi });
            }
        }
        Ok(())
    }

    pub fn value(&self, x: &[f64]) -> Result<f64, PotentialError> {
        Ok(self.eval(x, EvalLevel::Value)?.value)
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>, PotentialError> {
        Ok(self.eval(x, EvalLevel::Gradient)?.gradient.expect("requested"))
    }

    pub fn hessian(&self, x: &[f64]) -> Result<SparseSym, PotentialError> {
        Ok(self.eval(x, EvalLevel::Hessian)?.hessian.expect("requested"))
    }

    fn element(&self, e: usize, x: &[f64], level: EvalLevel) -> ElemOut {
        let model = &*self.model;
        let mesh = &*model.mesh;
        let dofs = &model.dofs;
        let mat = &model.material;
        let dim = mesh.dim();
        let nv = dim + 1;
        let blk = dim + 1;
        let nl = nv * blk;
        let el = mesh.element(e);
        let g = mesh.geometry(e);
        let meas = g.measure;
        let rule = element_rule(dim);
        let ms = voigt_size(dim);

        let idx: Vec<usize> = el
            .iter()
            .flat_map(|&n| (0..blk).map(move |c| blk * n + c))
            .collect();
        debug_assert!(idx.iter().zip(el.iter().flat_map(|&n| (0..blk).map(move |c| (n, c)))).all(
            |(&i, (n, c))| i == if c < dim { dofs.u(n, c) } else { dofs.alpha(n) }
        ));

        let bm = b_matrix(dim, g);
        let kc = nv * dim;
        let mut eps = [0.0; 6];
        for s in 0..ms {
            for a in 0..nv {
                for c in 0..dim {
                    eps[s] += bm[s * kc + a * dim + c] * x[dofs.u(el[a], c)];
                }
            }
        }
        let ce = mat.elastic.apply(&eps);
        let quad: f64 = (0..ms).map(|s| ce[s] * eps[s]).sum();

        let aq = alpha_at_quadrature(mesh, dofs, e, x);
        let aq_old = alpha_at_quadrature(mesh, dofs, e, &self.x_prev);
        let eta_tau = mat.dissipation.eta / self.tau;
        let ga = element_alpha_gradient(mesh, dofs, e, x);
        let grad_density = mat.gradient.density(&ga[..dim]);

        let mut sum_g = 0.0;
        let mut phi_val = 0.0;
        let mut dis = 0.0;
        let mut qd = Vec::with_capacity(rule.len());
        for (q, (&a, &a0)) in rule.iter().zip(aq.iter().zip(&aq_old)) {
            let (gm, dg, ddg) = mat.degradation.eval(a);
            let (p, dp, ddp) = damage_term(&mat.damage_energy, model.phi_mode, a, a0);
            sum_g += q.weight * gm;
            phi_val += q.weight * p;
            dis += q.weight * 0.5 * eta_tau * (a - a0).powi(2);
            qd.push((dg, ddg, dp, ddp, a - a0));
        }
        let parts = [
            0.5 * meas * sum_g * quad,
            meas * phi_val,
            meas * grad_density,
            meas * dis,
        ];
        if level == EvalLevel::Value {
            return ElemOut { idx, parts, grad: Vec::new(), gabs: Vec::new(), gnoise: Vec::new(), hess: Vec::new() };
        }

        let mut btce = vec![0.0; kc];
        for (k, b) in btce.iter_mut().enumerate() {
            *b = (0..ms).map(|s| bm[s * kc + k] * ce[s]).sum();
        }
        let flux = mat.gradient.flux_coefficient(&ga[..dim]);
        let mut grad = vec![0.0; nl];
        let mut gabs = vec![0.0; nl];
        let mut gnoise = vec![0.0; nl];
        let mut eps_abs = [0.0; 6];
        for s in 0..ms {
            for a in 0..nv {
                for c in 0..dim {
                    eps_abs[s] += (bm[s * kc + a * dim + c] * x[dofs.u(el[a], c)]).abs();
                }
            }
        }
        let ce_abs = mat.elastic.apply(&eps_abs);
        let quad_abs: f64 = (0..ms).map(|s| (ce_abs[s] * eps_abs[s]).abs()).sum();
        let mut grad_abs = [0.0; 3];
        for (j, ga_abs) in grad_abs.iter_mut().enumerate().take(dim) {
            *ga_abs = (0..nv).map(|b| (g.grads[b][j] * x[dofs.alpha(el[b])]).abs()).sum();
        }
        for a in 0..nv {
            for c in 0..dim {
                let v = meas * sum_g * btce[a * dim + c];
                grad[a * blk + c] = v;
                gabs[a * blk + c] = v.abs();
                gnoise[a * blk + c] =
                    meas * sum_g.abs() * (0..ms).map(|s| (bm[s * kc + a * dim + c] * ce_abs[s]).abs()).sum::<f64>();
            }
            let mut drive = 0.0;
            let mut dphi = 0.0;
            let mut dzeta = 0.0;
            let mut noise = 0.0;
            for (k, (q, &(dg, ddg, dp, ddp, da))) in rule.iter().zip(&qd).enumerate() {
                let w = meas * q.weight * q.bary[a];
                drive += w * 0.5 * dg * quad;
                dphi += w * dp;
                dzeta += w * eta_tau * da;
                let (ak, a0k) = (aq[k].abs(), aq_old[k].abs());
                noise += w.abs()
                    * (0.5 * (dg.abs() + ddg.abs() * ak) * quad_abs
                        + dp.abs()
                        + ddp.abs() * (ak + a0k)
                        + eta_tau * (ak + a0k));
            }
            let dgrad = meas * flux * (0..dim).map(|j| g.grads[a][j] * ga[j]).sum::<f64>();
            grad[a * blk + dim] = drive + dphi + dzeta + dgrad;
            gabs[a * blk + dim] = drive.abs() + dphi.abs() + dzeta.abs() + dgrad.abs();
            gnoise[a * blk + dim] =
                noise + meas * flux.abs() * (0..dim).map(|j| (g.grads[a][j] * grad_abs[j]).abs()).sum::<f64>();
        }
        if level == EvalLevel::Gradient {
            return ElemOut { idx, parts, grad, gabs, gnoise, hess: Vec::new() };
        }

        let mut hess = vec![0.0; nl * nl];
        let kuu = elastic_local(dim, g, &mat.elastic, sum_g);
        for a in 0..nv {
            for c in 0..dim {
                let r = a * blk + c;
                for b in 0..nv {
                    for d in 0..dim {
                        hess[r * nl + b * blk + d] = kuu[(a * dim + c) * kc + b * dim + d];
                    }
                    // u-alpha coupling
                    let mut s = 0.0;
                    for (q, &(dg, ..)) in rule.iter().zip(&qd) {
                        s += q.weight * dg * q.bary[b];
                    }
                    let v = meas * s * btce[a * dim + c];
                    hess[r * nl + b * blk + dim] = v;
                    hess[(b * blk + dim) * nl + r] = v;
                }
            }
        }
        let (ha, hb) = mat.gradient.hessian_coefficients(&ga[..dim]);
        for a in 0..nv {
            let gaa: f64 = (0..dim).map(|j| g.grads[a][j] * ga[j]).sum();
            for b in 0..nv {
                let gbb: f64 = (0..dim).map(|j| g.grads[b][j] * ga[j]).sum();
                let dd: f64 = (0..dim).map(|j| g.grads[a][j] * g.grads[b][j]).sum();
                let mut s = 0.0;
                for (q, &(_, ddg, _, ddp, _)) in rule.iter().zip(&qd) {
                    s += q.weight * (0.5 * ddg * quad + ddp) * q.bary[a] * q.bary[b];
                }
                hess[(a * blk + dim) * nl + b * blk + dim] =
                    meas * (s + ha * dd + hb * gaa * gbb);
            }
        }
        ElemOut { idx, parts, grad, gabs, gnoise, hess }
    }

    pub fn eval(&self, x: &[f64], level: EvalLevel) -> Result<PotentialEval, PotentialError> {
        self.check_feasible(x)?;
        let model = &*self.model;
        let dofs = &model.dofs;
        let n = self.n();
        let ne = model.mesh.n_elems();
        let outs: Vec<ElemOut> = if ne >= PARALLEL_MIN_ELEMS {
            (0..ne).into_par_iter().map(|e| self.element(e, x, level)).collect()
        } else {
            (0..ne).map(|e| self.element(e, x, level)).collect()
        };

        let mut bd = Breakdown::default();
        for o in &outs {
            bd.elastic += o.parts[0];
            bd.phi += o.parts[1];
            bd.gradient += o.parts[2];
            bd.dissipation += o.parts[3];
        }

        let mut w = vec![0.0; n];
        let mut du = vec![0.0; n];
        for i in 0..n {
            if !dofs.is_alpha(i) {
                w[i] = (x[i] - self.free_flight[i]) / self.tau;
                du[i] = x[i] - self.x_prev[i];
            }
        }
        let mw = model.mass.matvec(&w);
        let ddu = self.viscous.matvec(&du);
        bd.inertia = dot(&w, &mw);
        bd.viscous = 0.5 * dot(&du, &ddu) / self.tau;
        bd.load = -(0..n).map(|i| (self.body[i] + self.traction[i]) * x[i]).sum::<f64>();

        let mut ev = PotentialEval {
            value: bd.total(),
            breakdown: bd,
            gradient: None,
            gradient_scale: None,
            gradient_noise: None,
            hessian: None,
        };
        if level == EvalLevel::Value {
            return Ok(ev);
        }

        let mut grad = vec![0.0; n];
        let mut gabs = vec![0.0; n];
        let mut gnoise = vec![0.0; n];
        for o in &outs {
            for (k, &i) in o.idx.iter().enumerate() {
                grad[i] += o.grad[k];
                gabs[i] += o.gabs[k];
                gnoise[i] += o.gnoise[k];
            }
        }
        let mut wn = vec![0.0; n];
        let mut dn = vec![0.0; n];
        for i in 0..n {
            if !dofs.is_alpha(i) {
                wn[i] = (x[i].abs() + self.free_flight[i].abs()) / self.tau;
                dn[i] = x[i].abs() + self.x_prev[i].abs();
            }
        }
        let inertia_noise = model.mass.abs_matvec(&wn);
        let visc_noise = self.viscous.abs_matvec(&dn);
        for i in 0..n {
            let inertia = 2.0 * mw[i] / self.tau;
            let visc = ddu[i] / self.tau;
            let load = self.body[i] + self.traction[i];
            grad[i] += inertia + visc - load;
            gabs[i] += inertia.abs() + visc.abs() + load.abs();
            gnoise[i] += (2.0 * inertia_noise[i] + visc_noise[i]) / self.tau + load.abs();
        }
        ev.gradient = Some(grad);
        ev.gradient_scale = Some(gabs);
        ev.gradient_noise = Some(gnoise);
        if level == EvalLevel::Gradient {
            return Ok(ev);
        }

        let mut h = self.const_hessian.clone();
        for o in &outs {
            h.scatter(&o.idx, &o.hess);
        }
        ev.hessian = Some(h);
        Ok(ev)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(super) fn stored_energy_parts(model: &Model, x: &[f64]) -> (f64, f64, f64) {
    let mesh = &*model.mesh;
    let dofs = &model.dofs;
    let mat = &model.material;
    let rule = element_rule(mesh.dim());
    let mut elastic = 0.0;
    let mut phi = 0.0;
    for e in 0..mesh.n_elems() {
        let meas = mesh.geometry(e).measure;
        let eps = crate::fem::assembly::element_strain(mesh, dofs, e, x);
        elastic += 0.5 * meas * mean_gamma(mesh, dofs, &mat.degradation, e, x) * mat.elastic.quad(&eps);
        phi -= meas
            * rule
                .iter()
                .zip(alpha_at_quadrature(mesh, dofs, e, x))
                .map(|(q, a)| q.weight * mat.damage_energy.phi(a))
                .sum::<f64>();
    }
    (elastic, phi, model.gradient_energy(x))
}

/// Residual of the discrete equations at the end of a step, assembled from
/// the operators rather than from the potential:
///
/// ```text
/// r_u     = M (v - v_old)/tau + K(alpha) u + D(alpha_old) (u - u_old)/tau - F - G
/// r_alpha = int (1/2 gamma'(alpha) C1 e:e - phi'(alpha) + eta (alpha - alpha_old)/tau) N
///           + div-term of the gradient energy
/// ```
///
/// Returns the residual and, per entry, the sum of absolute term
/// magnitudes (the scale for relative checks). `v` is node-major.
pub fn weak_residual(sp: &StepProblem, x: &[f64], v: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let model = &*sp.model;
    let mesh = &*model.mesh;
    let dofs = &model.dofs;
    let mat = &model.material;
    let n = sp.n();
    let tau = sp.tau;

    let dv: Vec<f64> = v.iter().zip(&sp.prev.v).map(|(a, b)| (a - b) / tau).collect();
    let inertia = model.mass.matvec(&dofs.embed_u(&dv));
    let mut u_only = x.to_vec();
    let mut du = vec![0.0; n];
    for i in 0..n {
        if dofs.is_alpha(i) {
            u_only[i] = 0.0;
        } else {
            du[i] = (x[i] - sp.x_prev[i]) / tau;
        }
    }
    let k = assemble_degraded_stiffness(mesh, dofs, &mat.elastic, &mat.degradation, x);
    let elastic = k.matvec(&u_only);
    let viscous = sp.viscous.matvec(&du);
    let (grad_res, _) = damage_gradient_residual(mesh, dofs, x, &mat.gradient);

    let mut r = vec![0.0; n];
    let mut scale = vec![0.0; n];
    for i in 0..n {
        if dofs.is_alpha(i) {
            continue;
        }
        let load = sp.body[i] + sp.traction[i];
        r[i] = inertia[i] + elastic[i] + viscous[i] - load;
        scale[i] = inertia[i].abs() + elastic[i].abs() + viscous[i].abs() + load.abs();
    }
    let rule = element_rule(mesh.dim());
    for e in 0..mesh.n_elems() {
        let meas = mesh.geometry(e).measure;
        let eps = crate::fem::assembly::element_strain(mesh, dofs, e, x);
        let quad = mat.elastic.quad(&eps);
        let aq = alpha_at_quadrature(mesh, dofs, e, x);
        let aq_old = alpha_at_quadrature(mesh, dofs, e, &sp.x_prev);
        for (a, &node) in mesh.element(e).iter().enumerate() {
            let i = dofs.alpha(node);
            for (q, (&al, &al0)) in rule.iter().zip(aq.iter().zip(&aq_old)) {
                let w = meas * q.weight * q.bary[a];
                let drive = 0.5 * mat.degradation.dgamma(al) * quad;
                let (_, dphi, _) = damage_term(&mat.damage_energy, model.phi_mode, al, al0);
                let rate = mat.dissipation.eta * (al - al0) / tau;
                r[i] += w * (drive + dphi + rate);
                scale[i] += w * (drive.abs() + dphi.abs() + rate.abs());
            }
        }
    }
    for i in 0..n {
        if dofs.is_alpha(i) {
            r[i] += grad_res[i];
            scale[i] += grad_res[i].abs();
        }
    }
    (r, scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{Expr, LoadSpec, Mesh, ScalarField, Traction};
    use crate::material::{
        DegradationLaw, DissipationLaw, ElasticTensor, GradientTerm, MaterialParams,
        ViscosityModel,
    };
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    fn at_material(dim: usize) -> MaterialParams {
        let mut m = MaterialParams::ambrosio_tortorelli(dim, 0.5, 1.0, 0.2, 1.0, 0.3, 0.1, 0.05, 0.02, 1.3);
        m.gradient = GradientTerm::quadratic(0.05);
        m
    }

    fn model(mesh: Mesh, mat: MaterialParams, loads: LoadSpec) -> Arc<Model> {
        Arc::new(Model::new(Arc::new(mesh), mat, loads, PhiMode::Potential, false).unwrap())
    }

    fn random_state(model: &Model, seed: u64) -> State {
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let dofs = &model.dofs;
        let nu = dofs.n_nodes() * dofs.dim();
        State {
            k: 2,
            t: 0.0,
            u: (0..nu).map(|_| rng.gen_range(-0.2..0.2)).collect(),
            v: (0..nu).map(|_| rng.gen_range(-0.5..0.5)).collect(),
            alpha: (0..dofs.n_nodes()).map(|_| rng.gen_range(0.5..1.0)).collect(),
        }
    }

    fn random_feasible(sp: &StepProblem, seed: u64) -> Vec<f64> {
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let (lo, hi) = sp.bounds();
        sp.x_prev()
            .iter()
            .zip(lo.iter().zip(hi))
            .map(|(&x, (&l, &h))| {
                if h.is_finite() && l.is_finite() {
                    l + (h - l) * rng.gen_range(0.05..0.95)
                } else {
                    x + rng.gen_range(-0.1..0.1)
                }
            })
            .collect()
    }

    #[test]
    fn free_flight_with_no_energies_has_zero_value() {
        let mut mat = at_material(1);
        mat.degradation = DegradationLaw::Constant(1e-300);
        mat.elastic = ElasticTensor::identity(1).scaled(0.0);
        mat.viscosity = ViscosityModel { d0: ElasticTensor::identity(1).scaled(0.0), relaxation_time: 0.0 };
        mat.damage_energy = DamageEnergy::AtQuadratic { gc: 0.0, eps: 1.0 };
        mat.gradient = GradientTerm::quadratic(0.0);
        mat.dissipation = DissipationLaw::rate_independent();
        let mesh = Mesh::interval(1.0, 4).unwrap();
        let m = Arc::new(Model::new(Arc::new(mesh), mat, LoadSpec::default(), PhiMode::Potential, true).unwrap());
        let s = random_state(&m, 1);
        let sp = StepProblem::new(m, &s, 0.1).unwrap();
        let ev = sp.eval(&sp.warm_start(), EvalLevel::Gradient).unwrap();
        assert_eq!(ev.value, 0.0);
        assert!(ev.gradient.unwrap().iter().all(|g| g.abs() < 1e-14));
    }

    #[test]
    fn resting_state_value_is_stored_energy() {
        let m = model(Mesh::rectangle(1.0, 1.0, 3, 2).unwrap(), at_material(2), LoadSpec::default());
        let mut s = random_state(&m, 2);
        s.v.iter_mut().for_each(|v| *v = 0.0);
        let sp = StepProblem::new(m.clone(), &s, 0.05).unwrap();
        let ev = sp.eval(sp.x_prev(), EvalLevel::Value).unwrap();
        let (el, phi, gr) = m.stored_energy_of(&s);
        assert_relative_eq!(ev.value, el + phi + gr, max_relative = 1e-12);
        assert_relative_eq!(ev.breakdown.total(), ev.value, max_relative = 1e-12);
        assert_eq!(ev.breakdown.inertia, 0.0);
    }

    #[test]
    fn single_element_matches_hand_evaluation() {
        // one segment of length 2, d0 = 0.1, chi_R = 0.05, AT law
        let mesh = Mesh::interval(2.0, 1).unwrap();
        let mut mat = at_material(1);
        mat.elastic = ElasticTensor::identity(1).scaled(3.0);
        mat.viscosity.d0 = ElasticTensor::identity(1).scaled(0.1);
        let loads = LoadSpec {
            tractions: vec![Traction { tag: "right".into(), value: vec![ScalarField::Expr(Expr::parse("0.7").unwrap())] }],
            ..Default::default()
        };
        let m = model(mesh, mat, loads);
        let prev = State { k: 0, t: 0.0, u: vec![0.1, -0.2], v: vec![0.3, 0.4], alpha: vec![0.9, 0.8] };
        let tau = 0.1;
        let sp = StepProblem::new(m, &prev, tau).unwrap();
        let (u, a) = ([0.15, 0.05], [0.85, 0.6]);
        let x = [u[0], a[0], u[1], a[1]];
        let got = sp.value(&x).unwrap();

        // scalar oracle
        let (h, rho, e1, eps, eps0, gc, d0, chi, eta, kappa) = (2.0, 1.3, 3.0, 0.2, 1.0, 0.3, 0.1, 0.05, 0.02, 0.05);
        let gamma = |a: f64| 0.5 * ((eps / eps0) * (eps / eps0) + a * a);
        let phi = |a: f64| -gc * (1.0 - a) * (1.0 - a) / (2.0 * eps);
        let gp = 0.5 - 0.5 / 3f64.sqrt();
        let qp = [(1.0 - gp, gp), (gp, 1.0 - gp)];
        let interp = |f: [f64; 2], (n0, n1): (f64, f64)| n0 * f[0] + n1 * f[1];
        let w: Vec<f64> = (0..2).map(|i| (u[i] - prev.u[i]) / tau - prev.v[i]).collect();
        let inertia = rho * h / 6.0 * (2.0 * w[0] * w[0] + 2.0 * w[0] * w[1] + 2.0 * w[1] * w[1]);
        let strain = (u[1] - u[0]) / h;
        let mean = |f: &dyn Fn(f64) -> f64, v: [f64; 2]| 0.5 * qp.iter().map(|&q| f(interp(v, q))).sum::<f64>();
        let elastic = 0.5 * h * mean(&gamma, a) * e1 * strain * strain;
        let dphi = -h * mean(&phi, a);
        let grad = h * 0.5 * kappa * ((a[1] - a[0]) / h).powi(2);
        let d_old = d0 + chi * mean(&gamma, [0.9, 0.8]) * e1;
        let dstrain = ((u[1] - prev.u[1]) - (u[0] - prev.u[0])) / h;
        let visc = h * d_old * dstrain * dstrain / (2.0 * tau);
        let da = [a[0] - 0.9, a[1] - 0.8];
        let dis = h * eta / (2.0 * tau) * mean(&|z: f64| z * z, da);
        let load = -0.7 * u[1];
        let expected = inertia + elastic + dphi + grad + visc + dis + load;
        assert_relative_eq!(got, expected, max_relative = 1e-12);
    }

    fn fd_check(sp: &StepProblem, x: &[f64]) {
        let ev = sp.eval(x, EvalLevel::Hessian).unwrap();
        let g = ev.gradient.unwrap();
        let h = ev.hessian.unwrap();
        assert!(h.symmetry_defect() <= 1e-12 * h.max_abs());
        let (lo, hi) = sp.bounds();
        let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..x.len() {
            let step = 1e-6 * (1.0 + x[i].abs());
            let (mut xp, mut xm) = (x.to_vec(), x.to_vec());
            xp[i] += step;
            xm[i] -= step;
            if xp[i] > hi[i] || xm[i] < lo[i] {
                continue;
            }
            let fd = (sp.value(&xp).unwrap() - sp.value(&xm).unwrap()) / (2.0 * step);
            assert!((fd - g[i]).abs() <= 1e-6 * gmax.max(1e-3), "grad {i}: fd {fd} vs {}", g[i]);
        }
        // Hessian-vector product against gradient differences
        let mut rng = rand::rngs::StdRng::seed_from_u64(9);
        let dir: Vec<f64> = (0..x.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let s = 1e-6;
        let xp: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + s * d).collect();
        let xm: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a - s * d).collect();
        let (gp, gm) = (sp.gradient(&xp).unwrap(), sp.gradient(&xm).unwrap());
        let hv = h.matvec(&dir);
        let hmax = hv.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..x.len() {
            let fd = (gp[i] - gm[i]) / (2.0 * s);
            assert!((fd - hv[i]).abs() <= 1e-5 * hmax, "hv {i}: {fd} vs {}", hv[i]);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let loads = LoadSpec {
            body: vec![ScalarField::Expr(Expr::parse("x*t").unwrap()), ScalarField::Expr(Expr::parse("1").unwrap())],
            ..Default::default()
        };
        let m = model(Mesh::rectangle(1.0, 1.0, 2, 2).unwrap(), at_material(2), loads);
        for seed in 0..3 {
            let s = random_state(&m, seed);
            let sp = StepProblem::new(m.clone(), &s, 0.03).unwrap();
            // strictly inside the box: stay clear of the bounds
            let x = random_feasible(&sp, 100 + seed);
            fd_check(&sp, &x);
        }
    }

    #[test]
    fn difference_quotient_mode_is_consistent() {
        let mut mat = at_material(1);
        mat.damage_energy = DamageEnergy::Custom {
            phi: Arc::new(|a| 0.3 * a * a * a - 0.2 * a),
            dphi: Arc::new(|a| 0.9 * a * a - 0.2),
        };
        let mesh = Arc::new(Mesh::interval(1.0, 3).unwrap());
        let m = Arc::new(Model::new(mesh, mat, LoadSpec::default(), PhiMode::DifferenceQuotient, false).unwrap());
        let s = random_state(&m, 4);
        let sp = StepProblem::new(m, &s, 0.02).unwrap();
        let x = random_feasible(&sp, 5);
        fd_check(&sp, &x);
        // the residual carries the quotient itself
        let (p, dp, _) = damage_term(&sp.model.material.damage_energy, PhiMode::DifferenceQuotient, 0.4, 0.9);
        let phi = |a: f64| 0.3 * a * a * a - 0.2 * a;
        assert_relative_eq!(dp, -(phi(0.4) - phi(0.9)) / (0.4 - 0.9), max_relative = 1e-14);
        assert!(p.is_finite());
    }

    #[test]
    fn constant_gamma_decouples_blocks() {
        let mut mat = at_material(2);
        mat.degradation = DegradationLaw::Constant(0.7);
        let m = Arc::new(
            Model::new(Arc::new(Mesh::rectangle(1.0, 1.0, 2, 2).unwrap()), mat, LoadSpec::default(), PhiMode::Potential, true)
                .unwrap(),
        );
        let s = random_state(&m, 6);
        let sp = StepProblem::new(m.clone(), &s, 0.01).unwrap();
        let h = sp.hessian(&sp.warm_start()).unwrap();
        let dofs = m.dofs;
        for i in 0..dofs.n_total() {
            for (j, v) in h.row(i) {
                if dofs.is_alpha(i) != dofs.is_alpha(j) {
                    assert_eq!(v, 0.0);
                }
            }
        }
    }

    #[test]
    fn hessian_is_positive_definite_below_threshold() {
        let mat = MaterialParams::ambrosio_tortorelli(1, 0.0, 0.5, 0.1, 1.0, 1.0, 0.1, 0.0, 1e-3, 1.0);
        let m = model(Mesh::interval(1.0, 8).unwrap(), mat, LoadSpec::default());
        let tau = m.tau0 / 2.0;
        let mut rng = rand::rngs::StdRng::seed_from_u64(8);
        for seed in 0..5 {
            let mut s = random_state(&m, 20 + seed);
            s.u.iter_mut().for_each(|u| *u *= 50.0 * rng.gen_range(0.0..1.0));
            let sp = StepProblem::new(m.clone(), &s, tau).unwrap();
            let x = random_feasible(&sp, 30 + seed);
            let h = sp.hessian(&x).unwrap();
            let ev = nalgebra::SymmetricEigen::new(h.to_dense()).eigenvalues;
            assert!(ev.min() > 0.0, "min eig {}", ev.min());
        }
    }

    #[test]
    fn box_and_feasibility() {
        let m = model(Mesh::interval(1.0, 3).unwrap(), at_material(1), LoadSpec::default());
        let mut s = State::zero(&m.dofs);
        s.alpha = vec![1.0, 0.4, 0.0, 0.7];
        let sp = StepProblem::new(m, &s, 0.01).unwrap();
        let (lo, hi) = sp.feasible_box();
        assert_eq!(lo, vec![0.0; 4]);
        assert_eq!(hi, s.alpha);
        let mut x = sp.warm_start();
        x[sp.model().dofs.alpha(2)] = 1e-6;
        assert!(matches!(sp.value(&x), Err(PotentialError::Infeasible { .. })));
    }
}
