//! Pointwise convexity checks of the stored energy in `(e, alpha)`.

use nalgebra::{DMatrix, SymmetricEigen};

use super::{DegradationLaw, ElasticTensor, MaterialError};

/// Sampling grid for [`stored_hessian_psd_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct PsdSampleSpec {
    pub alpha_samples: usize,
    /// Largest strain norm `|e|` sampled.
    pub max_strain: f64,
    /// Number of geometrically spaced strain magnitudes in `[1e-3, max_strain]`
    /// (the zero strain is always included).
    pub magnitudes: usize,
    /// Relative tolerance on the smallest eigenvalue.
    pub rel_tol: f64,
}

impl Default for PsdSampleSpec {
    fn default() -> Self {
        Self {
            alpha_samples: 101,
            max_strain: 1e3,
            magnitudes: 25,
            rel_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub min_eigenvalue: f64,
    pub worst_alpha: f64,
    pub worst_strain: Vec<f64>,
    pub samples: usize,
    pub tolerance: f64,
    pub passed: bool,
}

/// Hessian of `(e, alpha) -> gamma(alpha) C1 e:e / 2 + K |e|^2 / 2`.
pub fn stored_hessian(
    law: &DegradationLaw,
    c1: &ElasticTensor,
    k: f64,
    e: &[f64],
    alpha: f64,
) -> DMatrix<f64> {
    let (g, dg, ddg) = law.eval(alpha);
    let m = c1.voigt_len();
    let ce = c1.apply(e);
    let mut h = DMatrix::zeros(m + 1, m + 1);
    for i in 0..m {
        for j in 0..m {
            h[(i, j)] = g * c1.voigt()[(i, j)];
        }
        h[(i, i)] += k;
        h[(i, m)] = dg * ce[i];
        h[(m, i)] = dg * ce[i];
    }
    h[(m, m)] = 0.5 * ddg * c1.quad(e);
    h
}

/// Hessian of `(e, alpha) -> gamma(alpha) C1 e:e / 2 + K alpha^2 / 2`, the
/// damage-viscosity stabilization that does not convexify.
pub fn visco_damage_hessian(
    law: &DegradationLaw,
    c1: &ElasticTensor,
    k: f64,
    e: &[f64],
    alpha: f64,
) -> DMatrix<f64> {
    let mut h = stored_hessian(law, c1, 0.0, e, alpha);
    let m = c1.voigt_len();
    h[(m, m)] += k;
    h
}

pub fn min_eigenvalue(h: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(h.clone())
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

// Unit strain directions: Voigt basis vectors, pairwise sums/differences and
// the eigenvectors of C1.
fn strain_directions(c1: &ElasticTensor) -> Vec<Vec<f64>> {
    let m = c1.voigt_len();
    let mut dirs = Vec::new();
    for i in 0..m {
        let mut v = vec![0.0; m];
        v[i] = 1.0;
        dirs.push(v);
        for j in i + 1..m {
            for s in [1.0, -1.0] {
                let mut w = vec![0.0; m];
                w[i] = std::f64::consts::FRAC_1_SQRT_2;
                w[j] = s * std::f64::consts::FRAC_1_SQRT_2;
                dirs.push(w);
            }
        }
    }
    let eig = SymmetricEigen::new(c1.voigt().clone());
    for c in 0..m {
        dirs.push(eig.eigenvectors.column(c).iter().cloned().collect());
    }
    dirs
}

/// Samples the Hessian of `gamma(alpha) C1 e:e/2 + K|e|^2/2` over a grid of
/// damage values and strains and reports its smallest eigenvalue.
pub fn stored_hessian_psd_check(
    law: &DegradationLaw,
    c1: &ElasticTensor,
    k: f64,
    spec: &PsdSampleSpec,
) -> CheckReport {
    let dirs = strain_directions(c1);
    let mut mags = vec![0.0];
    let n = spec.magnitudes.max(2);
    let lo: f64 = 1e-3f64.min(spec.max_strain);
    for i in 0..n {
        let t = i as f64 / (n - 1) as f64;
        mags.push(lo * (spec.max_strain / lo).powf(t));
    }
    let (_, c_max) = c1.eigen_bounds();
    let (g_max, _, gpp_max) = (0..spec.alpha_samples.max(2))
        .map(|i| law.eval(i as f64 / (spec.alpha_samples.max(2) - 1) as f64))
        .fold((0.0f64, 0.0f64, 0.0f64), |acc, (g, d, dd)| {
            (acc.0.max(g.abs()), acc.1.max(d.abs()), acc.2.max(dd.abs()))
        });
    let scale = (g_max * c_max + k)
        .max(0.5 * gpp_max * c_max * spec.max_strain * spec.max_strain)
        .max(1.0);
    let tolerance = spec.rel_tol * scale;

    let mut report = CheckReport {
        min_eigenvalue: f64::INFINITY,
        worst_alpha: 0.0,
        worst_strain: Vec::new(),
        samples: 0,
        tolerance,
        passed: true,
    };
    let na = spec.alpha_samples.max(2);
    for ia in 0..na {
        let alpha = ia as f64 / (na - 1) as f64;
        for &mag in &mags {
            // at zero strain every direction gives the same Hessian
            let dirs_here = if mag == 0.0 { &dirs[..1] } else { &dirs[..] };
            for dir in dirs_here {
                let e: Vec<f64> = dir.iter().map(|x| x * mag).collect();
                let lam = min_eigenvalue(&stored_hessian(law, c1, k, &e, alpha));
                report.samples += 1;
                if lam < report.min_eigenvalue {
                    report.min_eigenvalue = lam;
                    report.worst_alpha = alpha;
                    report.worst_strain = e;
                }
            }
        }
    }
    report.passed = report.min_eigenvalue >= -tolerance;
    report
}

#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub strain: Vec<f64>,
    pub alpha: f64,
    pub min_eig: f64,
    /// Smallest sampled `|e|` at which the Hessian was found indefinite.
    pub onset_magnitude: f64,
}

const WITNESS_EXTRA_DOUBLINGS: usize = 8;

/// Searches for an indefinite Hessian of `gamma(alpha) C1 e:e/2 + K alpha^2/2`.
///
/// The Schur complement on `alpha` is `K + (gamma''/2 - gamma'^2/gamma) C1 e:e`,
/// so an indefinite sample exists at `alpha` whenever
/// `gamma'^2/gamma > gamma''/2`. The strain is taken along the stiffest
/// direction of `C1` and doubled until the Hessian turns indefinite, then a
/// few more times; the most negative sample is returned.
pub fn visco_damage_nonconvexity_witness(
    law: &DegradationLaw,
    c1: &ElasticTensor,
    k: f64,
    alpha: Option<f64>,
) -> Result<Witness, MaterialError> {
    let rate = |a: f64| {
        let (g, dg, ddg) = law.eval(a);
        dg * dg / g - 0.5 * ddg
    };
    let alpha = match alpha {
        Some(a) => a,
        None => (0..=1000)
            .map(|i| i as f64 / 1000.0)
            .fold((0.0, f64::NEG_INFINITY), |best, a| {
                let r = rate(a);
                if r > best.1 {
                    (a, r)
                } else {
                    best
                }
            })
            .0,
    };
    let margin = rate(alpha);
    if !(margin > 0.0) {
        return Err(MaterialError::NoWitnessFound { margin });
    }
    let eig = SymmetricEigen::new(c1.voigt().clone());
    let imax = eig.eigenvalues.imax();
    let dir: Vec<f64> = eig.eigenvectors.column(imax).iter().cloned().collect();

    let mut best: Option<Witness> = None;
    let mut onset = None;
    let mut mag = 1.0;
    let mut extra = 0;
    while mag < 1e150 && extra <= WITNESS_EXTRA_DOUBLINGS {
        let e: Vec<f64> = dir.iter().map(|x| x * mag).collect();
        let lam = min_eigenvalue(&visco_damage_hessian(law, c1, k, &e, alpha));
        if lam < 0.0 {
            onset.get_or_insert(mag);
            extra += 1;
            if best.as_ref().map_or(true, |b| lam < b.min_eig) {
                best = Some(Witness {
                    strain: e,
                    alpha,
                    min_eig: lam,
                    onset_magnitude: 0.0,
                });
            }
        }
        mag *= 2.0;
    }
    match best {
        Some(mut w) => {
            w.onset_magnitude = onset.unwrap_or(0.0);
            Ok(w)
        }
        None => Err(MaterialError::NoWitnessFound { margin }),
    }
}
