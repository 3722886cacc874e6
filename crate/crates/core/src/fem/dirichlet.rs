use super::dofs::DofMap;
use super::loads::{DirichletSpec, ScalarField};
use super::mesh::Mesh;
use super::sparse::SparseSym;
use super::FemError;

/// Prescribed displacement components resolved to global unknowns.
#[derive(Debug, Clone, Default)]
pub struct Constraints {
    // (dof, node, field)
    entries: Vec<(usize, usize, ScalarField)>,
}

impl Constraints {
    pub fn new(mesh: &Mesh, dofs: &DofMap, specs: &[DirichletSpec]) -> Self {
        let mut entries = Vec::new();
        for s in specs {
            for n in mesh.tagged_nodes(&s.tag) {
                entries.push((dofs.u(n, s.component), n, s.value.clone()));
            }
        }
        Self { entries }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sorted, deduplicated constrained unknowns.
    pub fn dofs(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.entries.iter().map(|e| e.0).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// `(dof, value)` pairs at time `t`, sorted by dof.
    pub fn values_at(&self, mesh: &Mesh, t: f64) -> Result<Vec<(usize, f64)>, FemError> {
        let mut vals: Vec<(usize, f64)> = self
            .entries
            .iter()
            .map(|(dof, n, f)| (*dof, f.eval(t, mesh.coord(*n))))
            .collect();
        vals.sort_by_key(|p| p.0);
        dedup_consistent(vals)
    }
}

fn dedup_consistent(vals: Vec<(usize, f64)>) -> Result<Vec<(usize, f64)>, FemError> {
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(vals.len());
    for (dof, v) in vals {
        if !v.is_finite() {
            return Err(FemError::BadSpec(format!("prescribed value for unknown {dof} is not finite")));
        }
        match out.last() {
            Some(&(d, w)) if d == dof => {
                if (w - v).abs() > 1e-14 * w.abs().max(v.abs()).max(1.0) {
                    return Err(FemError::InconsistentConstraint { dof, first: w, second: v });
                }
            }
            _ => out.push((dof, v)),
        }
    }
    Ok(out)
}

/// Linear system restricted to the unconstrained unknowns.
#[derive(Debug, Clone)]
pub struct ReducedSystem {
    pub matrix: SparseSym,
    pub rhs: Vec<f64>,
    pub free: Vec<usize>,
    full: Vec<f64>,
}

impl ReducedSystem {
    /// Full-length vector with the free entries taken from `y`.
    pub fn expand(&self, y: &[f64]) -> Vec<f64> {
        let mut x = self.full.clone();
        for (k, &i) in self.free.iter().enumerate() {
            x[i] = y[k];
        }
        x
    }
}

/// Symmetric elimination of prescribed unknowns from `A x = b`: the
/// constrained rows and columns are dropped and their contribution moved to
/// the right-hand side.
pub fn apply_dirichlet(
    a: &SparseSym,
    b: &[f64],
    prescribed: &[(usize, f64)],
) -> Result<ReducedSystem, FemError> {
    let mut sorted = prescribed.to_vec();
    sorted.sort_by_key(|p| p.0);
    let sorted = dedup_consistent(sorted)?;
    let n = a.n();
    let mut full = vec![0.0; n];
    let mut keep = vec![true; n];
    for &(i, v) in &sorted {
        full[i] = v;
        keep[i] = false;
    }
    let lifted = a.matvec(&full);
    let (matrix, free) = a.submatrix(&keep);
    let rhs = free.iter().map(|&i| b[i] - lifted[i]).collect();
    Ok(ReducedSystem { matrix, rhs, free, full })
}
