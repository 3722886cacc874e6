//! Constitutive laws of the damageable Kelvin-Voigt solid and the convexity
//! constants that certify the incremental problems.
//!
//! The elastic tensor degrades as `C(alpha) = gamma(alpha) C1` and the
//! viscous tensor as `D(alpha) = D0 + chi_R C(alpha)`. Damage enters through
//! the concave stored energy `phi`, the unidirectional dissipation `zeta` and
//! the gradient term `kappa/p |grad alpha|^p`.

mod convexity;
mod degradation;
mod laws;
mod tensor;

pub use convexity::{
    stored_hessian_psd_check, visco_damage_nonconvexity_witness, CheckReport, PsdSampleSpec,
    Witness,
};
pub use degradation::{gamma_extrema, CubicTable, DegradationLaw};
pub use laws::{
    DamageEnergy, DissipationLaw, GradientTerm, ScalarFn, ViscosityModel, GRADIENT_GUARD,
};
pub use tensor::{
    strain_coefficient, strain_from_gradient, tensor_from_voigt, tensor_norms,
    voigt_from_tensor, voigt_size, ElasticTensor,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MaterialError {
    #[error("degradation law is not strictly convex on [0,1] (min gamma'' = {min_gpp:e})")]
    DegenerateLaw { min_gpp: f64 },
    #[error("tensor is not positive definite (smallest eigenvalue {min_eig:e})")]
    NotPositiveDefinite { min_eig: f64 },
    #[error("no indefinite Hessian sample found (smallest Schur margin {margin:e})")]
    NoWitnessFound { margin: f64 },
    #[error("{0}")]
    Invalid(String),
}

/// Mass density, uniform or given per mesh node.
#[derive(Debug, Clone, PartialEq)]
pub enum Density {
    Uniform(f64),
    Nodal(Vec<f64>),
}

impl Density {
    pub fn at_node(&self, node: usize) -> f64 {
        match self {
            Self::Uniform(r) => *r,
            Self::Nodal(v) => v[node],
        }
    }

    /// Zero density everywhere: the quasistatic regime.
    pub fn is_quasistatic(&self) -> bool {
        match self {
            Self::Uniform(r) => *r == 0.0,
            Self::Nodal(v) => v.iter().all(|r| *r == 0.0),
        }
    }

    fn violations(&self) -> Vec<String> {
        match self {
            Self::Uniform(r) if !(*r >= 0.0) => vec![format!("rho ({r}) must be nonnegative")],
            Self::Nodal(v) if !self.is_quasistatic() && v.iter().any(|r| !(*r > 0.0)) => {
                vec!["rho: nodal density must be positive everywhere".into()]
            }
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MaterialParams {
    pub degradation: DegradationLaw,
    pub elastic: ElasticTensor,
    pub viscosity: ViscosityModel,
    pub damage_energy: DamageEnergy,
    pub dissipation: DissipationLaw,
    pub gradient: GradientTerm,
    pub density: Density,
}

impl MaterialParams {
    /// Ambrosio-Tortorelli phase-field material: `phi = -Gc (1-alpha)^2/(2 eps)`,
    /// `kappa = eps Gc`, `p = 2`, isotropic `C1` and `D0 = d0_scale C1`.
    #[allow(clippy::too_many_arguments)]
    pub fn ambrosio_tortorelli(
        dim: usize,
        lambda: f64,
        mu: f64,
        eps: f64,
        eps0: f64,
        gc: f64,
        d0_scale: f64,
        chi_r: f64,
        eta: f64,
        rho: f64,
    ) -> Self {
        let elastic = ElasticTensor::isotropic(dim, lambda, mu);
        Self {
            degradation: DegradationLaw::AmbrosioTortorelli { eps, eps0 },
            viscosity: ViscosityModel {
                d0: elastic.scaled(d0_scale),
                relaxation_time: chi_r,
            },
            elastic,
            damage_energy: DamageEnergy::AtQuadratic { gc, eps },
            dissipation: DissipationLaw::viscous(eta),
            gradient: GradientTerm::quadratic(eps * gc),
            density: Density::Uniform(rho),
        }
    }

    pub fn dim(&self) -> usize {
        self.elastic.dim()
    }

    /// Every violated admissibility condition, as human-readable lines.
    pub fn violations(&self) -> Vec<String> {
        let mut out = self.degradation.violations();
        if let Err(e) = gamma_extrema(&self.degradation) {
            out.push(e.to_string());
        }
        if let Err(e) = self.elastic.check_positive_definite() {
            out.push(format!("elastic: {e}"));
        }
        if let Err(e) = self.viscosity.d0.check_positive_definite() {
            out.push(format!("viscosity: D0 {e}"));
        }
        if self.viscosity.d0.dim() != self.dim() {
            out.push("viscosity: D0 dimension differs from C1".into());
        }
        if !(self.viscosity.relaxation_time >= 0.0) {
            out.push(format!(
                "viscosity: chi_R ({}) must be nonnegative",
                self.viscosity.relaxation_time
            ));
        }
        out.extend(self.damage_energy.violations());
        if !self.damage_energy.is_concave() {
            out.push("damage: phi must be concave (use the difference-quotient mode)".into());
        }
        out.extend(self.dissipation.violations());
        out.extend(self.gradient.violations());
        out.extend(self.density.violations());
        out
    }

    /// `C(alpha) e` in Voigt form.
    pub fn degraded_stress(&self, alpha: f64, e: &[f64]) -> [f64; 6] {
        let g = self.degradation.gamma(alpha);
        let mut s = self.elastic.apply(e);
        s.iter_mut().for_each(|x| *x *= g);
        s
    }

    /// `D(alpha) e_dot : e_dot`.
    pub fn viscous_quad(&self, alpha: f64, e_dot: &[f64]) -> f64 {
        self.viscosity.d0.quad(e_dot)
            + self.viscosity.relaxation_time * self.degradation.gamma(alpha) * self.elastic.quad(e_dot)
    }
}

/// `K >= 2 |C1|^2 |C1^-1| max gamma'^2 / min gamma''`, the smallest strain
/// stabilization making `(e, alpha) -> C(alpha)e:e/2 + K|e|^2/2` convex.
pub fn semiconvexity_constant(m: &MaterialParams) -> Result<f64, MaterialError> {
    let (min_gpp, max_gp_sq) = gamma_extrema(&m.degradation)?;
    let (c_norm, c_inv_norm) = tensor_norms(&m.elastic)?;
    Ok(2.0 * c_norm * c_norm * c_inv_norm * max_gp_sq / min_gpp)
}

/// Largest time step for which the incremental potential is strictly
/// convex: `min gamma'' / (2 |D0^-1| |C1|^2 |C1^-1| max gamma'^2)`.
pub fn critical_timestep(m: &MaterialParams) -> Result<f64, MaterialError> {
    if matches!(m.degradation, DegradationLaw::Constant(_)) {
        return Ok(f64::INFINITY);
    }
    let (min_gpp, max_gp_sq) = gamma_extrema(&m.degradation)?;
    let (c_norm, c_inv_norm) = tensor_norms(&m.elastic)?;
    let (_, d0_inv_norm) = tensor_norms(&m.viscosity.d0)?;
    if max_gp_sq == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(min_gpp / (2.0 * d0_inv_norm * c_norm * c_norm * c_inv_norm * max_gp_sq))
}

/// Kelvin-Voigt stress `gamma(alpha) C1 e + (D0 + chi_R gamma(alpha_old) C1) e_dot`
/// with the viscous moduli taken at the previous damage level.
pub fn stress(m: &MaterialParams, alpha: f64, e: &[f64], e_dot: &[f64], alpha_old: f64) -> Vec<f64> {
    let n = m.elastic.voigt_len();
    let g = m.degradation.gamma(alpha);
    let g_old = m.degradation.gamma(alpha_old);
    let ce = m.elastic.apply(e);
    let ced = m.elastic.apply(e_dot);
    let de = m.viscosity.d0.apply(e_dot);
    (0..n)
        .map(|i| g * ce[i] + de[i] + m.viscosity.relaxation_time * g_old * ced[i])
        .collect()
}

/// Damage driving force `gamma'(alpha) C1 e : e / 2`.
pub fn driving_force(m: &MaterialParams, alpha: f64, e: &[f64]) -> f64 {
    0.5 * m.degradation.dgamma(alpha) * m.elastic.quad(e)
}
