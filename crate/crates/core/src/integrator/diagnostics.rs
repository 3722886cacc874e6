use super::Trajectory;
use crate::fem::assembly::{alpha_at_quadrature, element_alpha_gradient};
use crate::fem::quadrature::element_rule;
use crate::fem::{assemble_mass, assemble_vector_laplacian, SparseSym};
use crate::material::Density;
use crate::potential::Model;

/// Discrete space-time norms whose uniform boundedness in `tau` the
/// convergence theory rests on.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AprioriNorms {
    /// `||u||_{H^1(I; H^1)}`
    pub u_h1_h1: f64,
    /// `||u||_{W^{1,inf}(I; L^2)}`
    pub u_w1inf_l2: f64,
    /// `||alpha||_{L^inf(I; W^{1,p})}`
    pub alpha_linf_w1p: f64,
    /// `||alpha||_{H^1(I; L^2)}`
    pub alpha_h1_l2: f64,
}

impl AprioriNorms {
    pub fn values(&self) -> [f64; 4] {
        [self.u_h1_h1, self.u_w1inf_l2, self.alpha_linf_w1p, self.alpha_h1_l2]
    }

    /// Every norm within `factor` of the other set (in both directions).
    pub fn within_factor(&self, other: &Self, factor: f64) -> bool {
        self.values().iter().zip(other.values()).all(|(&a, b)| {
            (a == 0.0 && b == 0.0) || (a <= factor * b && b <= factor * a)
        })
    }
}

// int over one step of |x(t)|^2_A for x affine between a and b
fn affine_sq(a_sq: f64, ab: f64, b_sq: f64, tau: f64) -> f64 {
    tau / 3.0 * (a_sq + ab + b_sq)
}

fn inner(m: &SparseSym, a: &[f64], b: &[f64]) -> f64 {
    m.matvec(a).iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Norms of the affine interpolants `u_tau`, `alpha_tau`.
pub fn apriori_diagnostics(model: &Model, traj: &Trajectory) -> AprioriNorms {
    let mesh = &model.mesh;
    let dofs = &model.dofs;
    let tau = traj.tau;
    let m = assemble_mass(mesh, dofs, &Density::Uniform(1.0));
    let mut h1 = assemble_vector_laplacian(mesh, dofs);
    h1.add_scaled(&m, 1.0);
    let s = &model.damage_mass;
    let p = model.material.gradient.p;
    let rule = element_rule(mesh.dim());

    let us: Vec<Vec<f64>> = traj.states.iter().map(|st| dofs.embed_u(&st.u)).collect();
    let alphas: Vec<Vec<f64>> = traj.states.iter().map(|st| model.pack(st)).collect();

    let w1p = |x: &[f64]| -> f64 {
        let mut total = 0.0;
        for e in 0..mesh.n_elems() {
            let meas = mesh.geometry(e).measure;
            let g = element_alpha_gradient(mesh, dofs, e, x);
            let gn = (g[0] * g[0] + g[1] * g[1]).sqrt();
            let vals: f64 = rule
                .iter()
                .zip(alpha_at_quadrature(mesh, dofs, e, x))
                .map(|(q, a)| q.weight * a.abs().powf(p))
                .sum();
            total += meas * (vals + gn.powf(p));
        }
        total.powf(1.0 / p)
    };
    let alpha_only = |x: &[f64]| -> Vec<f64> {
        x.iter().enumerate().map(|(i, v)| if dofs.is_alpha(i) { *v } else { 0.0 }).collect()
    };

    let mut u_h1 = 0.0;
    let mut u_inf: f64 = inner(&m, &us[0], &us[0]).sqrt();
    let mut a_h1 = 0.0;
    let mut a_inf = w1p(&alphas[0]);
    for k in 1..us.len() {
        let (ua, ub) = (&us[k - 1], &us[k]);
        let du: Vec<f64> = ub.iter().zip(ua).map(|(x, y)| (x - y) / tau).collect();
        u_h1 += affine_sq(inner(&h1, ua, ua), inner(&h1, ua, ub), inner(&h1, ub, ub), tau)
            + tau * inner(&h1, &du, &du);
        u_inf = u_inf.max(inner(&m, ub, ub).sqrt()).max(inner(&m, &du, &du).sqrt());

        let (aa, ab) = (alpha_only(&alphas[k - 1]), alpha_only(&alphas[k]));
        let da: Vec<f64> = ab.iter().zip(&aa).map(|(x, y)| (x - y) / tau).collect();
        a_h1 += affine_sq(inner(s, &aa, &aa), inner(s, &aa, &ab), inner(s, &ab, &ab), tau)
            + tau * inner(s, &da, &da);
        a_inf = a_inf.max(w1p(&alphas[k]));
    }
    AprioriNorms {
        u_h1_h1: u_h1.sqrt(),
        u_w1inf_l2: u_inf,
        alpha_linf_w1p: a_inf,
        alpha_h1_l2: a_h1.sqrt(),
    }
}
