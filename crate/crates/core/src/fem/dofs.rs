use super::mesh::Mesh;

/// Degree-of-freedom numbering for P1 displacement (`d` components per node)
/// and P1 damage on the same nodes. The unknowns of one node are stored
/// contiguously as `u_0, .., u_{d-1}, alpha`, which keeps the coupled system
/// banded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DofMap {
    dim: usize,
    n_nodes: usize,
}

impl DofMap {
    pub fn new(mesh: &Mesh) -> Self {
        Self {
            dim: mesh.dim(),
            n_nodes: mesh.n_nodes(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn block(&self) -> usize {
        self.dim + 1
    }

    pub fn n_total(&self) -> usize {
        self.block() * self.n_nodes
    }

    #[inline]
    pub fn u(&self, node: usize, comp: usize) -> usize {
        self.block() * node + comp
    }

    #[inline]
    pub fn alpha(&self, node: usize) -> usize {
        self.block() * node + self.dim
    }

    pub fn is_alpha(&self, dof: usize) -> bool {
        dof % self.block() == self.dim
    }

    /// Interleaves node-major displacement (`u[node * d + c]`) and damage.
    pub fn pack(&self, u: &[f64], alpha: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut x = vec![0.0; self.n_total()];
        for n in 0..self.n_nodes {
            for c in 0..d {
                x[self.u(n, c)] = u[n * d + c];
            }
            x[self.alpha(n)] = alpha[n];
        }
        x
    }

    pub fn unpack(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let d = self.dim;
        let mut u = vec![0.0; d * self.n_nodes];
        let mut alpha = vec![0.0; self.n_nodes];
        for n in 0..self.n_nodes {
            for c in 0..d {
                u[n * d + c] = x[self.u(n, c)];
            }
            alpha[n] = x[self.alpha(n)];
        }
        (u, alpha)
    }

    /// Scatters a node-major displacement vector into the combined layout,
    /// leaving damage entries zero.
    pub fn embed_u(&self, u: &[f64]) -> Vec<f64> {
        self.pack(u, &vec![0.0; self.n_nodes])
    }

    pub fn extract_u(&self, x: &[f64]) -> Vec<f64> {
        self.unpack(x).0
    }

    pub fn extract_alpha(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_nodes).map(|n| x[self.alpha(n)]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pack_round_trip_and_partition() {
        let m = Mesh::rectangle(1.0, 1.0, 2, 1).unwrap();
        let dofs = DofMap::new(&m);
        assert_eq!(dofs.n_total(), 18);
        let u: Vec<f64> = (0..12).map(f64::from).collect();
        let a: Vec<f64> = (0..6).map(|i| 0.1 * f64::from(i)).collect();
        let x = dofs.pack(&u, &a);
        assert_eq!(dofs.unpack(&x), (u, a));
        let n_alpha = (0..dofs.n_total()).filter(|&i| dofs.is_alpha(i)).count();
        assert_eq!(n_alpha, 6);
        assert_eq!(dofs.alpha(2), 8);
        assert_eq!(dofs.u(2, 1), 7);
    }
}
