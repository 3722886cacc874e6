//! The per-step incremental potential in `(u, alpha)`.
//!
//! For a step of length `tau` from `(u_old, v_old, alpha_old)` the potential
//! is
//!
//! ```text
//! Pi(u, alpha) = int rho |(u - u_old)/tau - v_old|^2
//!              + 1/2 gamma(alpha) C1 e(u):e(u) - phi(alpha) + kappa/p |grad alpha|^p
//!              + 1/(2 tau) D(alpha_old) e(u - u_old):e(u - u_old)
//!              + eta/(2 tau) (alpha - alpha_old)^2
//!              - f.u - int_Gamma g.u
//! ```
//!
//! over `0 <= alpha <= alpha_old`. Its stationarity conditions are the
//! implicit scheme: midpoint rule for inertia with the velocity recovered as
//! `v = 2 (u - u_old)/tau - v_old`, backward Euler for the stored energy and
//! viscous moduli lagged one step.

mod step;

pub use step::{weak_residual, Breakdown, EvalLevel, PotentialEval, StepProblem, INFEASIBILITY_TOL};

use std::sync::Arc;

use thiserror::Error;

use crate::fem::{
    assemble_mass, assemble_scalar_mass, damage_gradient_energy, Constraints, DofMap, FemError,
    LoadSpec, Mesh, SparseSym,
};
use crate::material::{critical_timestep, MaterialError, MaterialParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PotentialError {
    #[error("unknown {dof} = {value} outside its bounds [{lower}, {upper}]")]
    Infeasible { dof: usize, value: f64, lower: f64, upper: f64 },
    #[error(transparent)]
    Material(#[from] MaterialError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error("{0}")]
    Invalid(String),
}

/// Nodal fields at one time level. Displacement and velocity are node-major
/// (`u[node * d + c]`).
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub k: usize,
    pub t: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub alpha: Vec<f64>,
}

impl State {
    pub fn zero(dofs: &DofMap) -> Self {
        let n = dofs.n_nodes();
        Self {
            k: 0,
            t: 0.0,
            u: vec![0.0; n * dofs.dim()],
            v: vec![0.0; n * dofs.dim()],
            alpha: vec![1.0; n],
        }
    }

    pub fn check(&self) -> Result<(), PotentialError> {
        if self.u.iter().chain(&self.v).chain(&self.alpha).any(|x| !x.is_finite()) {
            return Err(PotentialError::Invalid("state has non-finite entries".into()));
        }
        if let Some(a) = self.alpha.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(PotentialError::Invalid(format!("damage value {a} outside [0, 1]")));
        }
        Ok(())
    }
}

/// How the damage energy enters the incremental problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PhiMode {
    /// `-phi(alpha)`, valid for concave `phi`.
    #[default]
    Potential,
    /// `phi'` replaced by the difference quotient
    /// `(phi(alpha) - phi(alpha_old)) / (alpha - alpha_old)`, for
    /// non-concave `phi`. The quotient is itself the derivative of a
    /// potential, which is what gets minimized.
    DifferenceQuotient,
}

/// Spatial discretization shared by all steps of a run.
#[derive(Debug)]
pub struct Model {
    pub mesh: Arc<Mesh>,
    pub dofs: DofMap,
    pub material: MaterialParams,
    pub loads: LoadSpec,
    pub constraints: Constraints,
    pub mass: SparseSym,
    /// Unit scalar mass on the damage unknowns.
    pub damage_mass: SparseSym,
    pub phi_mode: PhiMode,
    /// Damage held at its initial value (degenerate box).
    pub freeze_damage: bool,
    /// Critical step of the material, infinite with frozen damage.
    pub tau0: f64,
}

impl Model {
    pub fn new(
        mesh: Arc<Mesh>,
        material: MaterialParams,
        loads: LoadSpec,
        phi_mode: PhiMode,
        freeze_damage: bool,
    ) -> Result<Self, PotentialError> {
        if mesh.dim() != material.dim() {
            return Err(PotentialError::Invalid(format!(
                "mesh dimension {} differs from material dimension {}",
                mesh.dim(),
                material.dim()
            )));
        }
        loads.validate(&mesh)?;
        let dofs = DofMap::new(&mesh);
        let mass = assemble_mass(&mesh, &dofs, &material.density);
        let damage_mass = assemble_scalar_mass(&mesh, &dofs, 1.0);
        let constraints = Constraints::new(&mesh, &dofs, &loads.dirichlet);
        let tau0 = if freeze_damage {
            f64::INFINITY
        } else {
            critical_timestep(&material)?
        };
        Ok(Self {
            mesh,
            dofs,
            material,
            loads,
            constraints,
            mass,
            damage_mass,
            phi_mode,
            freeze_damage,
            tau0,
        })
    }

    pub fn pack(&self, s: &State) -> Vec<f64> {
        self.dofs.pack(&s.u, &s.alpha)
    }

    /// `1/2 v^T M v`.
    pub fn kinetic(&self, v: &[f64]) -> f64 {
        0.5 * self.mass.quad_form(&self.dofs.embed_u(v))
    }

    /// Stored energy split as `(elastic, -int phi, gradient)` at a combined
    /// vector.
    pub fn stored_energy(&self, x: &[f64]) -> (f64, f64, f64) {
        step::stored_energy_parts(self, x)
    }

    pub fn stored_energy_of(&self, s: &State) -> (f64, f64, f64) {
        self.stored_energy(&self.pack(s))
    }

    pub fn gradient_energy(&self, x: &[f64]) -> f64 {
        damage_gradient_energy(&self.mesh, &self.dofs, x, &self.material.gradient)
    }

    /// Whether a step of length `tau` lies in the certified (convex) regime.
    pub fn is_certified(&self, tau: f64) -> bool {
        tau <= self.tau0
    }
}
