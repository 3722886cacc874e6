//! Fourth-order tensors acting on symmetric strains, stored in orthonormal
//! Voigt form.
//!
//! A symmetric `d x d` strain is flattened to `m = d(d+1)/2` components with
//! the off-diagonal entries scaled by `sqrt(2)`, so that the Euclidean inner
//! product of two Voigt vectors equals the Frobenius product `e1 : e2` of the
//! tensors. Operator norms of a tensor on symmetric matrices then reduce to
//! extreme eigenvalues of its `m x m` Voigt matrix.

use nalgebra::{DMatrix, SymmetricEigen};
use std::f64::consts::SQRT_2;

use super::MaterialError;

/// Number of independent components of a symmetric `d x d` tensor.
pub const fn voigt_size(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

/// Voigt slot ordering for `d = 2`: `(0,0) (1,1) (0,1)`; for `d = 3`:
/// `(0,0) (1,1) (2,2) (1,2) (0,2) (0,1)`.
fn voigt_pairs(dim: usize) -> &'static [(usize, usize)] {
    match dim {
        1 => &[(0, 0)],
        2 => &[(0, 0), (1, 1), (0, 1)],
        3 => &[(0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1)],
        _ => panic!("unsupported dimension {dim}"),
    }
}

/// Flattens a symmetric `d x d` tensor into its orthonormal Voigt vector.
pub fn voigt_from_tensor(t: &DMatrix<f64>) -> Vec<f64> {
    let dim = t.nrows();
    voigt_pairs(dim)
        .iter()
        .map(|&(i, j)| {
            if i == j {
                t[(i, i)]
            } else {
                SQRT_2 * 0.5 * (t[(i, j)] + t[(j, i)])
            }
        })
        .collect()
}

/// Inverse of [`voigt_from_tensor`].
pub fn tensor_from_voigt(dim: usize, v: &[f64]) -> DMatrix<f64> {
    let mut t = DMatrix::zeros(dim, dim);
    for (slot, &(i, j)) in voigt_pairs(dim).iter().enumerate() {
        if i == j {
            t[(i, i)] = v[slot];
        } else {
            t[(i, j)] = v[slot] / SQRT_2;
            t[(j, i)] = v[slot] / SQRT_2;
        }
    }
    t
}

/// Symmetric gradient `sym(grad u)` in Voigt form, given the displacement
/// gradient `grad[i][j] = d u_i / d x_j`.
pub fn strain_from_gradient(dim: usize, grad: &[[f64; 3]; 3]) -> [f64; 6] {
    let mut e = [0.0; 6];
    for (slot, &(i, j)) in voigt_pairs(dim).iter().enumerate() {
        e[slot] = if i == j {
            grad[i][i]
        } else {
            SQRT_2 * 0.5 * (grad[i][j] + grad[j][i])
        };
    }
    e
}

/// Row `slot` of the strain-displacement operator for one node: returns the
/// coefficient multiplying displacement component `comp` when the shape
/// function gradient is `dn`.
pub fn strain_coefficient(dim: usize, slot: usize, comp: usize, dn: &[f64]) -> f64 {
    let (i, j) = voigt_pairs(dim)[slot];
    if i == j {
        if comp == i {
            dn[i]
        } else {
            0.0
        }
    } else if comp == i {
        dn[j] / SQRT_2
    } else if comp == j {
        dn[i] / SQRT_2
    } else {
        0.0
    }
}

/// Symmetric positive definite map on symmetric strains.
#[derive(Debug, Clone, PartialEq)]
pub struct ElasticTensor {
    dim: usize,
    mat: DMatrix<f64>,
}

impl ElasticTensor {
    /// Isotropic tensor `C e = lambda tr(e) I + 2 mu e`.
    pub fn isotropic(dim: usize, lambda: f64, mu: f64) -> Self {
        let m = voigt_size(dim);
        let mut mat = DMatrix::zeros(m, m);
        for i in 0..m {
            mat[(i, i)] = 2.0 * mu;
        }
        for i in 0..dim {
            for j in 0..dim {
                mat[(i, j)] += lambda;
            }
        }
        Self { dim, mat }
    }

    /// Identity on symmetric strains.
    pub fn identity(dim: usize) -> Self {
        let m = voigt_size(dim);
        Self {
            dim,
            mat: DMatrix::identity(m, m),
        }
    }

    /// Tensor given by its (orthonormal) Voigt matrix. The matrix is
    /// symmetrized; use [`ElasticTensor::check_positive_definite`] to validate.
    pub fn from_voigt(dim: usize, mat: DMatrix<f64>) -> Result<Self, MaterialError> {
        let m = voigt_size(dim);
        if mat.nrows() != m || mat.ncols() != m {
            return Err(MaterialError::Invalid(format!(
                "Voigt matrix for d = {dim} must be {m}x{m}, got {}x{}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        let sym = (&mat + mat.transpose()) * 0.5;
        Ok(Self { dim, mat: sym })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn voigt_len(&self) -> usize {
        self.mat.nrows()
    }

    pub fn voigt(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            mat: &self.mat * s,
        }
    }

    /// `C e` in Voigt form.
    pub fn apply(&self, e: &[f64]) -> [f64; 6] {
        let m = self.voigt_len();
        let mut out = [0.0; 6];
        for i in 0..m {
            let mut acc = 0.0;
            for j in 0..m {
                acc += self.mat[(i, j)] * e[j];
            }
            out[i] = acc;
        }
        out
    }

    /// `C e : e`.
    pub fn quad(&self, e: &[f64]) -> f64 {
        let ce = self.apply(e);
        (0..self.voigt_len()).map(|i| ce[i] * e[i]).sum()
    }

    /// Extreme eigenvalues `(min, max)` of the Voigt matrix.
    pub fn eigen_bounds(&self) -> (f64, f64) {
        let eig = SymmetricEigen::new(self.mat.clone());
        let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = eig
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        (min, max)
    }

    pub fn check_positive_definite(&self) -> Result<(), MaterialError> {
        let (min, _) = self.eigen_bounds();
        if min > 0.0 {
            Ok(())
        } else {
            Err(MaterialError::NotPositiveDefinite { min_eig: min })
        }
    }
}

/// Operator norms of `C` and `C^{-1}` on symmetric matrices with the
/// Frobenius norm: `(|C|, |C^{-1}|)`.
pub fn tensor_norms(c: &ElasticTensor) -> Result<(f64, f64), MaterialError> {
    let (min, max) = c.eigen_bounds();
    if min <= 0.0 {
        return Err(MaterialError::NotPositiveDefinite { min_eig: min });
    }
    Ok((max, 1.0 / min))
}
