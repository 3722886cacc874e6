//! Element loops for the spatial operators. Local matrices are computed in
//! parallel and scattered in element order, so results do not depend on the
//! thread count.

use rayon::prelude::*;

use super::dofs::DofMap;
use super::mesh::{ElemGeom, Mesh};
use super::quadrature::element_rule;
use super::sparse::SparseSym;
use crate::material::{
    strain_coefficient, voigt_size, DegradationLaw, Density, ElasticTensor, GradientTerm,
    ViscosityModel,
};

const PARALLEL_MIN_ELEMS: usize = 512;

/// Global displacement indices of an element, `a * d + c` ordering.
pub fn element_u_dofs(dofs: &DofMap, el: &[usize]) -> Vec<usize> {
    let d = dofs.dim();
    el.iter()
        .flat_map(|&n| (0..d).map(move |c| dofs.u(n, c)))
        .collect()
}

pub fn element_alpha_dofs(dofs: &DofMap, el: &[usize]) -> Vec<usize> {
    el.iter().map(|&n| dofs.alpha(n)).collect()
}

/// Strain-displacement matrix, `m x (nv d)` row-major.
pub fn b_matrix(dim: usize, g: &ElemGeom) -> Vec<f64> {
    let m = voigt_size(dim);
    let cols = (dim + 1) * dim;
    let mut b = vec![0.0; m * cols];
    for s in 0..m {
        for a in 0..=dim {
            for c in 0..dim {
                b[s * cols + a * dim + c] = strain_coefficient(dim, s, c, &g.grads[a][..dim]);
            }
        }
    }
    b
}

/// Constant strain of element `e` for the combined vector `x`.
pub fn element_strain(mesh: &Mesh, dofs: &DofMap, e: usize, x: &[f64]) -> [f64; 6] {
    let dim = mesh.dim();
    let b = b_matrix(dim, mesh.geometry(e));
    let idx = element_u_dofs(dofs, mesh.element(e));
    let cols = idx.len();
    let mut out = [0.0; 6];
    for s in 0..voigt_size(dim) {
        out[s] = idx.iter().enumerate().map(|(k, &i)| b[s * cols + k] * x[i]).sum();
    }
    out
}

/// Constant damage gradient of element `e`.
pub fn element_alpha_gradient(mesh: &Mesh, dofs: &DofMap, e: usize, x: &[f64]) -> [f64; 2] {
    let g = mesh.geometry(e);
    let mut out = [0.0; 2];
    for (a, &n) in mesh.element(e).iter().enumerate() {
        for j in 0..mesh.dim() {
            out[j] += g.grads[a][j] * x[dofs.alpha(n)];
        }
    }
    out
}

/// Damage values at the element quadrature points.
pub fn alpha_at_quadrature(mesh: &Mesh, dofs: &DofMap, e: usize, x: &[f64]) -> Vec<f64> {
    let el = mesh.element(e);
    element_rule(mesh.dim())
        .iter()
        .map(|q| el.iter().enumerate().map(|(a, &n)| q.bary[a] * x[dofs.alpha(n)]).sum())
        .collect()
}

/// Element average of `gamma(alpha_h)` by quadrature.
pub fn mean_gamma(mesh: &Mesh, dofs: &DofMap, law: &DegradationLaw, e: usize, x: &[f64]) -> f64 {
    element_rule(mesh.dim())
        .iter()
        .zip(alpha_at_quadrature(mesh, dofs, e, x))
        .map(|(q, a)| q.weight * law.gamma(a))
        .sum()
}

/// Runs `local` on every element (in parallel for large meshes) and scatters
/// the results in element order.
pub fn assemble_elements<F>(mesh: &Mesh, dofs: &DofMap, local: F) -> SparseSym
where
    F: Fn(usize) -> (Vec<usize>, Vec<f64>) + Sync,
{
    let order: Vec<usize> = (0..mesh.n_elems()).collect();
    assemble_in_order(mesh, dofs, &order, local)
}

pub(crate) fn assemble_in_order<F>(mesh: &Mesh, dofs: &DofMap, order: &[usize], local: F) -> SparseSym
where
    F: Fn(usize) -> (Vec<usize>, Vec<f64>) + Sync,
{
    let mut out = SparseSym::for_mesh(mesh, dofs);
    let parts: Vec<(Vec<usize>, Vec<f64>)> = if order.len() >= PARALLEL_MIN_ELEMS {
        order.par_iter().map(|&e| local(e)).collect()
    } else {
        order.iter().map(|&e| local(e)).collect()
    };
    for (idx, m) in &parts {
        out.scatter(idx, m);
    }
    out
}

// int N_a N_b over the element as a fraction of its measure, by quadrature
fn p1_mass_local(dim: usize, weight_at: impl Fn(&[f64; 3]) -> f64) -> Vec<f64> {
    let nv = dim + 1;
    let mut m = vec![0.0; nv * nv];
    for q in element_rule(dim) {
        let w = q.weight * weight_at(&q.bary);
        for a in 0..nv {
            for b in 0..nv {
                m[a * nv + b] += w * q.bary[a] * q.bary[b];
            }
        }
    }
    m
}

/// Consistent mass matrix `int rho u.w` on the displacement unknowns.
pub fn assemble_mass(mesh: &Mesh, dofs: &DofMap, rho: &Density) -> SparseSym {
    let dim = mesh.dim();
    let nv = dim + 1;
    assemble_elements(mesh, dofs, |e| {
        let el = mesh.element(e);
        let meas = mesh.geometry(e).measure;
        let scalar = p1_mass_local(dim, |bary| {
            el.iter().enumerate().map(|(a, &n)| bary[a] * rho.at_node(n)).sum()
        });
        let idx = element_u_dofs(dofs, el);
        let k = idx.len();
        let mut local = vec![0.0; k * k];
        for a in 0..nv {
            for b in 0..nv {
                for c in 0..dim {
                    local[(a * dim + c) * k + b * dim + c] = meas * scalar[a * nv + b];
                }
            }
        }
        (idx, local)
    })
}

/// Scalar P1 mass `weight * int alpha beta` on the damage unknowns.
pub fn assemble_scalar_mass(mesh: &Mesh, dofs: &DofMap, weight: f64) -> SparseSym {
    let dim = mesh.dim();
    let base = p1_mass_local(dim, |_| 1.0);
    assemble_elements(mesh, dofs, |e| {
        let meas = mesh.geometry(e).measure;
        let local = base.iter().map(|v| weight * meas * v).collect();
        (element_alpha_dofs(dofs, mesh.element(e)), local)
    })
}

/// Scalar P1 Laplacian `int grad alpha . grad beta` on the damage unknowns.
pub fn assemble_scalar_laplacian(mesh: &Mesh, dofs: &DofMap) -> SparseSym {
    let dim = mesh.dim();
    let nv = dim + 1;
    assemble_elements(mesh, dofs, |e| {
        let g = mesh.geometry(e);
        let mut local = vec![0.0; nv * nv];
        for a in 0..nv {
            for b in 0..nv {
                local[a * nv + b] =
                    g.measure * (0..dim).map(|j| g.grads[a][j] * g.grads[b][j]).sum::<f64>();
            }
        }
        (element_alpha_dofs(dofs, mesh.element(e)), local)
    })
}

/// Componentwise vector Laplacian `int grad u : grad w` on displacements.
pub fn assemble_vector_laplacian(mesh: &Mesh, dofs: &DofMap) -> SparseSym {
    let dim = mesh.dim();
    let nv = dim + 1;
    assemble_elements(mesh, dofs, |e| {
        let g = mesh.geometry(e);
        let idx = element_u_dofs(dofs, mesh.element(e));
        let k = idx.len();
        let mut local = vec![0.0; k * k];
        for a in 0..nv {
            for b in 0..nv {
                let v = g.measure * (0..dim).map(|j| g.grads[a][j] * g.grads[b][j]).sum::<f64>();
                for c in 0..dim {
                    local[(a * dim + c) * k + b * dim + c] = v;
                }
            }
        }
        (idx, local)
    })
}

/// `B^T T B` times the element measure and `factor`.
pub fn elastic_local(dim: usize, g: &ElemGeom, t: &ElasticTensor, factor: f64) -> Vec<f64> {
    let b = b_matrix(dim, g);
    let m = voigt_size(dim);
    let k = (dim + 1) * dim;
    let c = t.voigt();
    let mut local = vec![0.0; k * k];
    for p in 0..k {
        for s in 0..m {
            let bsp = b[s * k + p];
            if bsp == 0.0 {
                continue;
            }
            for r in 0..m {
                let w = factor * g.measure * bsp * c[(s, r)];
                if w == 0.0 {
                    continue;
                }
                for q in 0..k {
                    local[p * k + q] += w * b[r * k + q];
                }
            }
        }
    }
    local
}

/// Stiffness of `int C e(u) : e(w)` with `C` scaled per element.
pub fn assemble_stiffness(
    mesh: &Mesh,
    dofs: &DofMap,
    c: &ElasticTensor,
    factor: impl Fn(usize) -> f64 + Sync,
) -> SparseSym {
    let dim = mesh.dim();
    assemble_elements(mesh, dofs, |e| {
        let local = elastic_local(dim, mesh.geometry(e), c, factor(e));
        (element_u_dofs(dofs, mesh.element(e)), local)
    })
}

/// `int gamma(alpha_h) C1 e(u) : e(w)` with `gamma` integrated by quadrature;
/// `x` is a combined vector supplying the damage field.
pub fn assemble_degraded_stiffness(
    mesh: &Mesh,
    dofs: &DofMap,
    c1: &ElasticTensor,
    law: &DegradationLaw,
    x: &[f64],
) -> SparseSym {
    assemble_stiffness(mesh, dofs, c1, |e| mean_gamma(mesh, dofs, law, e, x))
}

/// `int D(alpha_h) e(u) : e(w)` with `D = D0 + chi_R gamma(alpha_h) C1`.
pub fn assemble_viscous(
    mesh: &Mesh,
    dofs: &DofMap,
    visc: &ViscosityModel,
    c1: &ElasticTensor,
    law: &DegradationLaw,
    x: &[f64],
) -> SparseSym {
    let dim = mesh.dim();
    assemble_elements(mesh, dofs, |e| {
        let g = mesh.geometry(e);
        let mut local = elastic_local(dim, g, &visc.d0, 1.0);
        if visc.relaxation_time != 0.0 {
            let f = visc.relaxation_time * mean_gamma(mesh, dofs, law, e, x);
            for (a, b) in local.iter_mut().zip(elastic_local(dim, g, c1, f)) {
                *a += b;
            }
        }
        (element_u_dofs(dofs, mesh.element(e)), local)
    })
}

/// `int kappa/p |grad alpha|^p` (or the regularized variant).
pub fn damage_gradient_energy(mesh: &Mesh, dofs: &DofMap, x: &[f64], term: &GradientTerm) -> f64 {
    (0..mesh.n_elems())
        .map(|e| {
            let g = element_alpha_gradient(mesh, dofs, e, x);
            mesh.geometry(e).measure * term.density(&g[..mesh.dim()])
        })
        .sum()
}

/// Gradient (as a combined-layout vector, nonzero on damage unknowns) and
/// Hessian of [`damage_gradient_energy`].
pub fn damage_gradient_residual(
    mesh: &Mesh,
    dofs: &DofMap,
    x: &[f64],
    term: &GradientTerm,
) -> (Vec<f64>, SparseSym) {
    let dim = mesh.dim();
    let nv = dim + 1;
    let mut res = vec![0.0; dofs.n_total()];
    for e in 0..mesh.n_elems() {
        let gm = mesh.geometry(e);
        let g = element_alpha_gradient(mesh, dofs, e, x);
        let c = term.flux_coefficient(&g[..dim]);
        for (a, &n) in mesh.element(e).iter().enumerate() {
            let dot: f64 = (0..dim).map(|j| gm.grads[a][j] * g[j]).sum();
            res[dofs.alpha(n)] += gm.measure * c * dot;
        }
    }
    let jac = assemble_elements(mesh, dofs, |e| {
        let gm = mesh.geometry(e);
        let g = element_alpha_gradient(mesh, dofs, e, x);
        let (a_coef, b_coef) = term.hessian_coefficients(&g[..dim]);
        let mut local = vec![0.0; nv * nv];
        for a in 0..nv {
            let ga: f64 = (0..dim).map(|j| gm.grads[a][j] * g[j]).sum();
            for b in 0..nv {
                let gb: f64 = (0..dim).map(|j| gm.grads[b][j] * g[j]).sum();
                let dd: f64 = (0..dim).map(|j| gm.grads[a][j] * gm.grads[b][j]).sum();
                local[a * nv + b] = gm.measure * (a_coef * dd + b_coef * ga * gb);
            }
        }
        (element_alpha_dofs(dofs, mesh.element(e)), local)
    });
    (res, jac)
}
