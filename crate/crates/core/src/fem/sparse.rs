use std::sync::Arc;

use nalgebra::DMatrix;

use super::dofs::DofMap;
use super::mesh::Mesh;

#[derive(Debug, PartialEq, Eq)]
struct Pattern {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
}

/// Symmetric sparse matrix in CSR form with both triangles stored. Matrices
/// built for the same mesh share their pattern, so sums are entrywise.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSym {
    pattern: Arc<Pattern>,
    vals: Vec<f64>,
}

impl SparseSym {
    /// Zero matrix whose pattern holds, for each row, the sorted columns in
    /// `rows[i]` (the caller provides a structurally symmetric pattern).
    pub fn from_rows(rows: &[Vec<usize>]) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut cols = Vec::new();
        row_ptr.push(0);
        for r in rows {
            let mut r = r.clone();
            r.sort_unstable();
            r.dedup();
            cols.extend(r);
            row_ptr.push(cols.len());
        }
        let nnz = cols.len();
        Self {
            pattern: Arc::new(Pattern { row_ptr, cols }),
            vals: vec![0.0; nnz],
        }
    }

    /// Zero matrix coupling every unknown of a node with every unknown of
    /// the nodes sharing an element with it.
    pub fn for_mesh(mesh: &Mesh, dofs: &DofMap) -> Self {
        let b = dofs.block();
        let adj = mesh.node_neighbors();
        let rows: Vec<Vec<usize>> = (0..dofs.n_total())
            .map(|i| {
                adj[i / b]
                    .iter()
                    .flat_map(|&m| (0..b).map(move |c| m * b + c))
                    .collect()
            })
            .collect();
        Self::from_rows(&rows)
    }

    pub fn from_dense(a: &DMatrix<f64>) -> Self {
        let n = a.nrows();
        let rows: Vec<Vec<usize>> = (0..n)
            .map(|i| (0..n).filter(|&j| a[(i, j)] != 0.0 || a[(j, i)] != 0.0 || i == j).collect())
            .collect();
        let mut s = Self::from_rows(&rows);
        for i in 0..n {
            for k in s.range(i) {
                let j = s.pattern.cols[k];
                s.vals[k] = a[(i, j)];
            }
        }
        s
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            pattern: Arc::clone(&self.pattern),
            vals: vec![0.0; self.vals.len()],
        }
    }

    pub fn n(&self) -> usize {
        self.pattern.row_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    fn range(&self, i: usize) -> std::ops::Range<usize> {
        self.pattern.row_ptr[i]..self.pattern.row_ptr[i + 1]
    }

    /// `(column, value)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.range(i).map(move |k| (self.pattern.cols[k], self.vals[k]))
    }

    fn find(&self, i: usize, j: usize) -> Option<usize> {
        let r = self.range(i);
        self.pattern.cols[r.clone()]
            .binary_search(&j)
            .ok()
            .map(|k| r.start + k)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.find(i, j).map_or(0.0, |k| self.vals[k])
    }

    /// Adds `v` to entry `(i, j)` only; callers keep the matrix symmetric.
    ///
    /// # Panics
    /// If `(i, j)` is outside the pattern.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self
            .find(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) outside the sparsity pattern"));
        self.vals[k] += v;
    }

    /// Adds a dense symmetric element matrix at global indices `idx`.
    pub fn scatter(&mut self, idx: &[usize], local: &[f64]) {
        let m = idx.len();
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                let v = local[a * m + b];
                if v != 0.0 {
                    self.add(i, j, v);
                }
            }
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n()];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(j, a)| a * x[j]).sum();
        }
    }

    /// `|A| |x|` entrywise.
    pub fn abs_matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n()).map(|i| self.row(i).map(|(j, a)| (a * x[j]).abs()).sum()).collect()
    }

    /// `x^T A x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        (0..self.n())
            .map(|i| x[i] * self.row(i).map(|(j, a)| a * x[j]).sum::<f64>())
            .sum()
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.n()).map(|i| self.get(i, i)).collect()
    }

    pub fn scale(&mut self, s: f64) {
        self.vals.iter_mut().for_each(|v| *v *= s);
    }

    /// `self += s * other`.
    ///
    /// # Panics
    /// If the patterns differ.
    pub fn add_scaled(&mut self, other: &SparseSym, s: f64) {
        assert!(
            Arc::ptr_eq(&self.pattern, &other.pattern) || self.pattern == other.pattern,
            "matrices have different sparsity patterns"
        );
        for (a, b) in self.vals.iter_mut().zip(&other.vals) {
            *a += s * b;
        }
    }

    pub fn add_diagonal(&mut self, d: &[f64]) {
        for (i, &v) in d.iter().enumerate() {
            if v != 0.0 {
                self.add(i, i, v);
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            for (j, v) in self.row(i) {
                a[(i, j)] = v;
            }
        }
        a
    }

    /// Largest `|a_ij - a_ji|`.
    pub fn symmetry_defect(&self) -> f64 {
        (0..self.n())
            .flat_map(|i| self.row(i).map(move |(j, v)| (i, j, v)))
            .map(|(i, j, v)| (v - self.get(j, i)).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Principal submatrix on the rows and columns with `keep[i]`, and the
    /// kept global indices in order.
    pub fn submatrix(&self, keep: &[bool]) -> (SparseSym, Vec<usize>) {
        let idx: Vec<usize> = (0..self.n()).filter(|&i| keep[i]).collect();
        let mut local = vec![usize::MAX; self.n()];
        for (l, &g) in idx.iter().enumerate() {
            local[g] = l;
        }
        let mut row_ptr = Vec::with_capacity(idx.len() + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for &g in &idx {
            for (j, v) in self.row(g) {
                if keep[j] {
                    cols.push(local[j]);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        (
            SparseSym {
                pattern: Arc::new(Pattern { row_ptr, cols }),
                vals,
            },
            idx,
        )
    }

    /// Smallest column index in row `i`.
    pub fn first_col(&self, i: usize) -> usize {
        let r = self.range(i);
        if r.is_empty() {
            i
        } else {
            self.pattern.cols[r.start].min(i)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_round_trip_and_products() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, -1.0, 0.0, -1.0, 2.0]);
        let s = SparseSym::from_dense(&a);
        assert_eq!(s.nnz(), 7);
        assert_eq!(s.to_dense(), a);
        let x = [1.0, 2.0, 3.0];
        assert_eq!(s.matvec(&x), vec![6.0, 4.0, 4.0]);
        assert_eq!(s.quad_form(&x), 6.0 + 8.0 + 12.0);
        assert_eq!(s.symmetry_defect(), 0.0);

        let (sub, idx) = s.submatrix(&[true, false, true]);
        assert_eq!(idx, vec![0, 2]);
        assert_eq!(sub.to_dense(), DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 2.0]));
    }

    #[test]
    fn mesh_pattern_couples_neighbours() {
        let m = Mesh::interval(1.0, 3).unwrap();
        let dofs = DofMap::new(&m);
        let s = SparseSym::for_mesh(&m, &dofs);
        // node 1 touches nodes 0..=2, two unknowns each
        assert_eq!(s.row(2).count(), 6);
        assert_eq!(s.row(0).count(), 4);
        assert_eq!(s.first_col(7), 4);
    }
}
