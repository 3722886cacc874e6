//! P1 finite elements on segments and triangles: meshes, unknown
//! numbering, quadrature, sparse storage and factorization, and assembly of
//! every spatial operator of the scheme.

pub mod assembly;
mod dirichlet;
mod dofs;
mod ldl;
mod loads;
mod mesh;
pub mod quadrature;
mod sparse;

pub use assembly::{
    assemble_degraded_stiffness, assemble_mass, assemble_scalar_laplacian, assemble_scalar_mass,
    assemble_stiffness, assemble_vector_laplacian, assemble_viscous, damage_gradient_energy,
    damage_gradient_residual,
};
pub use dirichlet::{apply_dirichlet, Constraints, ReducedSystem};
pub use dofs::DofMap;
pub use ldl::{lanczos_extremes, Ldl, PIVOT_TOL};
pub use loads::{
    assemble_body_load, assemble_traction, time_averaged_loads, DirichletSpec, Expr, LoadSpec,
    ScalarField, Traction, SIMPSON5,
};
pub use mesh::{build_mesh, ElemGeom, Facet, Mesh, MeshSpec};
pub use sparse::SparseSym;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FemError {
    #[error("bad mesh or load specification: {0}")]
    BadSpec(String),
    #[error("mesh file line {line}: {msg}")]
    FileFormat { line: usize, msg: String },
    #[error("i/o error: {0}")]
    Io(String),
    #[error("no boundary facets tagged `{0}`")]
    UnknownTag(String),
    #[error("expression error: {0}")]
    Expression(String),
    #[error("unknown {dof} constrained to both {first} and {second}")]
    InconsistentConstraint { dof: usize, first: f64, second: f64 },
    #[error("zero pivot {pivot:e} at row {index}")]
    SingularPivot { index: usize, pivot: f64 },
}
