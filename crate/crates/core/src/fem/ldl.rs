//! Profile (skyline) `L D L^T` factorization without pivoting.
//!
//! Works for indefinite matrices as long as no pivot vanishes; the number of
//! negative pivots equals the number of negative eigenvalues (Sylvester), so
//! the factorization doubles as a definiteness test.

use nalgebra::{DMatrix, SymmetricEigen};

use super::sparse::SparseSym;
use super::FemError;

/// Pivots below this fraction of the largest diagonal entry are singular.
pub const PIVOT_TOL: f64 = 1e-14;

#[derive(Debug, Clone)]
pub struct Ldl {
    first: Vec<usize>,
    start: Vec<usize>,
    l: Vec<f64>,
    d: Vec<f64>,
}

impl Ldl {
    pub fn factor(a: &SparseSym) -> Result<Self, FemError> {
        let n = a.n();
        let first: Vec<usize> = (0..n).map(|i| a.first_col(i)).collect();
        let mut start = Vec::with_capacity(n + 1);
        start.push(0);
        for i in 0..n {
            start.push(start[i] + (i - first[i]));
        }
        let mut l = vec![0.0; start[n]];
        let mut d = vec![0.0; n];
        let scale = (0..n).map(|i| a.get(i, i).abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);

        let mut t = vec![0.0; n];
        for i in 0..n {
            let fi = first[i];
            t[fi..=i].iter_mut().for_each(|x| *x = 0.0);
            for (j, v) in a.row(i) {
                if j <= i {
                    t[j] = v;
                }
            }
            // t[k] holds L_ik D_k once column k is done
            for j in fi..i {
                let lj = &l[start[j]..start[j + 1]];
                let k0 = fi.max(first[j]);
                let mut s = t[j];
                for k in k0..j {
                    s -= t[k] * lj[k - first[j]];
                }
                t[j] = s;
            }
            let li = &mut l[start[i]..start[i + 1]];
            let mut di = t[i];
            for j in fi..i {
                let lij = t[j] / d[j];
                li[j - fi] = lij;
                di -= t[j] * lij;
            }
            if !(di.abs() > PIVOT_TOL * scale) {
                return Err(FemError::SingularPivot { index: i, pivot: di });
            }
            d[i] = di;
        }
        Ok(Self { first, start, l, d })
    }

    pub fn n(&self) -> usize {
        self.d.len()
    }

    /// Number of negative pivots, i.e. of negative eigenvalues.
    pub fn negative_pivots(&self) -> usize {
        self.d.iter().filter(|&&x| x < 0.0).count()
    }

    pub fn min_pivot(&self) -> f64 {
        self.d.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut x = b.to_vec();
        for i in 0..n {
            let li = &self.l[self.start[i]..self.start[i + 1]];
            let fi = self.first[i];
            let s: f64 = li.iter().enumerate().map(|(k, v)| v * x[fi + k]).sum();
            x[i] -= s;
        }
        for i in 0..n {
            x[i] /= self.d[i];
        }
        for i in (0..n).rev() {
            let li = &self.l[self.start[i]..self.start[i + 1]];
            let fi = self.first[i];
            let xi = x[i];
            for (k, v) in li.iter().enumerate() {
                x[fi + k] -= v * xi;
            }
        }
        x
    }

    /// Solve with one step of iterative refinement against `a`.
    pub fn solve_refined(&self, a: &SparseSym, b: &[f64]) -> Vec<f64> {
        let mut x = self.solve(b);
        let ax = a.matvec(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let dx = self.solve(&r);
        x.iter_mut().zip(&dx).for_each(|(xi, di)| *xi += di);
        x
    }
}

const LANCZOS_BREAKDOWN: f64 = 1e-14;

/// Extreme Ritz values `(min, max)` of a symmetric operator after `steps`
/// Lanczos iterations with full reorthogonalization. The start vector is
/// fixed, so repeated calls agree bit for bit.
pub fn lanczos_extremes(
    n: usize,
    steps: usize,
    apply: impl Fn(&[f64]) -> Vec<f64>,
) -> (f64, f64) {
    if n == 0 {
        return (0.0, 0.0);
    }
    let m = steps.min(n).max(1);
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * (1.3 * i as f64).sin()).collect();
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut basis: Vec<Vec<f64>> = vec![v];
    let mut alpha = Vec::with_capacity(m);
    let mut beta: Vec<f64> = Vec::with_capacity(m);
    for j in 0..m {
        let mut w = apply(&basis[j]);
        let a = dot(&w, &basis[j]);
        alpha.push(a);
        for q in &basis {
            let c = dot(&w, q);
            w.iter_mut().zip(q).for_each(|(wi, qi)| *wi -= c * qi);
        }
        let b = norm(&w);
        if j + 1 == m || b <= LANCZOS_BREAKDOWN * (1.0 + a.abs()) {
            break;
        }
        beta.push(b);
        basis.push(w.into_iter().map(|x| x / b).collect());
    }
    let k = alpha.len();
    let mut t = DMatrix::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alpha[i];
        if i + 1 < k {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let ev = SymmetricEigen::new(t).eigenvalues;
    (ev.min(), ev.max())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn banded(n: usize, bw: usize, shift: f64, seed: u64) -> DMatrix<f64> {
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i.saturating_sub(bw)..=i {
                let v: f64 = rng.gen_range(-1.0..1.0);
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
            a[(i, i)] += shift;
        }
        a
    }

    #[test]
    fn solves_spd_and_indefinite_systems() {
        for (shift, seed) in [(6.0, 1), (0.3, 2)] {
            let a = banded(40, 4, shift, seed);
            let s = SparseSym::from_dense(&a);
            let f = Ldl::factor(&s).unwrap();
            let b: Vec<f64> = (0..40).map(|i| (i as f64).cos()).collect();
            let x = f.solve_refined(&s, &b);
            let r = s.matvec(&x);
            let err = r.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
            assert!(err < 1e-10, "residual {err}");
            // Sylvester inertia against a dense eigensolve
            let neg = SymmetricEigen::new(a).eigenvalues.iter().filter(|&&e| e < 0.0).count();
            assert_eq!(f.negative_pivots(), neg);
        }
    }

    #[test]
    fn singular_pivot_reported() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(
            Ldl::factor(&SparseSym::from_dense(&a)),
            Err(FemError::SingularPivot { index: 1, .. })
        ));
    }

    #[test]
    fn lanczos_brackets_spectrum() {
        let a = banded(60, 3, 2.0, 7);
        let s = SparseSym::from_dense(&a);
        let ev = SymmetricEigen::new(a).eigenvalues;
        let (lo, hi) = lanczos_extremes(60, 60, |x| s.matvec(x));
        assert!((lo - ev.min()).abs() < 1e-8 && (hi - ev.max()).abs() < 1e-8);
        let (lo20, _) = lanczos_extremes(60, 20, |x| s.matvec(x));
        assert!(lo20 >= ev.min() - 1e-12);
    }
}
