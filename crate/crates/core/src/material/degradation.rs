use super::MaterialError;

/// Cubic spline through uniformly spaced samples on `[0, 1]` with not-a-knot
/// end conditions, so cubic data is reproduced exactly and the second
/// derivative does not collapse to zero at the ends.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicTable {
    values: Vec<f64>,
    // second derivatives at the knots
    curv: Vec<f64>,
}

impl CubicTable {
    pub fn new(values: Vec<f64>) -> Result<Self, MaterialError> {
        let n = values.len();
        if n < 4 {
            return Err(MaterialError::Invalid(format!(
                "tabulated law needs at least 4 samples, got {n}"
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(MaterialError::Invalid("tabulated law has non-finite samples".into()));
        }
        let curv = not_a_knot_curvatures(&values);
        Ok(Self { values, curv })
    }

    /// Tabulates `f` at `n` uniformly spaced points of `[0, 1]`.
    pub fn sample(n: usize, f: impl Fn(f64) -> f64) -> Result<Self, MaterialError> {
        let h = 1.0 / (n.max(2) - 1) as f64;
        Self::new((0..n).map(|i| f(i as f64 * h)).collect())
    }

    pub fn samples(&self) -> &[f64] {
        &self.values
    }

    fn h(&self) -> f64 {
        1.0 / (self.values.len() - 1) as f64
    }

    fn locate(&self, x: f64) -> (usize, f64, f64) {
        let h = self.h();
        let last = self.values.len() - 2;
        let i = ((x / h).floor() as usize).min(last);
        let a = (i + 1) as f64 * h - x;
        let b = x - i as f64 * h;
        (i, a, b)
    }

    /// Value, first and second derivative at `x` in `[0, 1]`.
    pub fn eval(&self, x: f64) -> (f64, f64, f64) {
        let h = self.h();
        let (i, a, b) = self.locate(x);
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.curv[i], self.curv[i + 1]);
        let v = m0 * a.powi(3) / (6.0 * h)
            + m1 * b.powi(3) / (6.0 * h)
            + (y0 - m0 * h * h / 6.0) * a / h
            + (y1 - m1 * h * h / 6.0) * b / h;
        let d1 = -m0 * a * a / (2.0 * h) + m1 * b * b / (2.0 * h) + (y1 - y0) / h
            - (m1 - m0) * h / 6.0;
        let d2 = (m0 * a + m1 * b) / h;
        (v, d1, d2)
    }
}

// On a uniform grid the not-a-knot rows M0 - 2 M1 + M2 = 0 and its mirror
// fold into the first and last interior equations, leaving a tridiagonal
// system for M1..M_{n-2}.
fn not_a_knot_curvatures(y: &[f64]) -> Vec<f64> {
    let n = y.len();
    let h = 1.0 / (n - 1) as f64;
    let k = n - 2;
    let rhs: Vec<f64> = (1..n - 1)
        .map(|i| (y[i + 1] - 2.0 * y[i] + y[i - 1]) / h)
        .collect();
    let mut sub = vec![h / 6.0; k];
    let mut diag = vec![2.0 * h / 3.0; k];
    let mut sup = vec![h / 6.0; k];
    // M0 = 2 M1 - M2
    diag[0] += 2.0 * h / 6.0;
    sup[0] -= h / 6.0;
    // M_{n-1} = 2 M_{n-2} - M_{n-3}
    diag[k - 1] += 2.0 * h / 6.0;
    sub[k - 1] -= h / 6.0;

    let mut inner = if k == 2 {
        // both folded rows touch the same unknowns; solve the 2x2 directly
        let (a11, a12, a21, a22) = (diag[0], sup[0], sub[1], diag[1]);
        let det = a11 * a22 - a12 * a21;
        vec![
            (rhs[0] * a22 - a12 * rhs[1]) / det,
            (a11 * rhs[1] - a21 * rhs[0]) / det,
        ]
    } else {
        thomas(&sub, &diag, &sup, &rhs)
    };
    let mut m = Vec::with_capacity(n);
    m.push(2.0 * inner[0] - inner[1]);
    m.append(&mut inner);
    let l = m.len();
    m.push(2.0 * m[l - 1] - m[l - 2]);
    m
}

fn thomas(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = sup[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let den = diag[i] - sub[i] * c[i - 1];
        c[i] = sup[i] / den;
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / den;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

/// Scalar degradation `gamma` in `C(alpha) = gamma(alpha) C1`.
#[derive(Debug, Clone, PartialEq)]
pub enum DegradationLaw {
    /// `gamma = ((eps/eps0)^2 + alpha^2) / 2`.
    AmbrosioTortorelli { eps: f64, eps0: f64 },
    /// `gamma = (c0 + alpha^2) / 2`.
    Quadratic { c0: f64 },
    Tabulated(CubicTable),
    /// Undegradable material, `gamma = value`. Not strictly convex, so it is
    /// rejected by [`gamma_extrema`]; useful for decoupled test problems.
    Constant(f64),
}

impl DegradationLaw {
    /// `(gamma, gamma', gamma'')` at `alpha`, clamped to `[0, 1]`.
    pub fn eval(&self, alpha: f64) -> (f64, f64, f64) {
        let a = alpha.clamp(0.0, 1.0);
        match self {
            Self::AmbrosioTortorelli { eps, eps0 } => {
                let r = eps / eps0;
                (0.5 * (r * r + a * a), a, 1.0)
            }
            Self::Quadratic { c0 } => (0.5 * (c0 + a * a), a, 1.0),
            Self::Tabulated(t) => t.eval(a),
            Self::Constant(g) => (*g, 0.0, 0.0),
        }
    }

    pub fn gamma(&self, alpha: f64) -> f64 {
        self.eval(alpha).0
    }

    pub fn dgamma(&self, alpha: f64) -> f64 {
        self.eval(alpha).1
    }

    pub fn d2gamma(&self, alpha: f64) -> f64 {
        self.eval(alpha).2
    }

    /// Violations of the admissibility conditions (positivity and
    /// `gamma'(0) = 0`). Strict convexity is reported by [`gamma_extrema`].
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        match self {
            Self::AmbrosioTortorelli { eps, eps0 } => {
                if !(*eps > 0.0) || !(*eps0 > 0.0) {
                    out.push(format!("degradation: eps ({eps}) and eps0 ({eps0}) must be positive"));
                }
            }
            Self::Quadratic { c0 } => {
                if !(*c0 > 0.0) {
                    out.push(format!("degradation: c0 ({c0}) must be positive"));
                }
            }
            Self::Tabulated(t) => {
                if t.samples().iter().any(|&g| g <= 0.0) {
                    out.push("degradation: tabulated gamma must be positive".into());
                }
                let (_, d0, _) = t.eval(0.0);
                let scale = t.samples().iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if d0.abs() > 1e-6 * scale.max(1.0) {
                    out.push(format!("degradation: gamma'(0) = {d0:e} must vanish"));
                }
            }
            Self::Constant(g) => {
                if !(*g > 0.0) {
                    out.push(format!("degradation: constant gamma ({g}) must be positive"));
                }
            }
        }
        out
    }
}

const EXTREMA_SAMPLES: usize = 2001;
const GOLDEN_TOL: f64 = 1e-10;

/// `(min gamma''([0,1]), max gamma'([0,1])^2)` by dense sampling followed
/// by golden-section refinement around the best sample.
pub fn gamma_extrema(law: &DegradationLaw) -> Result<(f64, f64), MaterialError> {
    let h = 1.0 / (EXTREMA_SAMPLES - 1) as f64;
    let grid = |i: usize| (i as f64 * h).min(1.0);
    let d2 = |a: f64| law.d2gamma(a);
    let neg_d1sq = |a: f64| -law.dgamma(a).powi(2);

    let refine = |f: &dyn Fn(f64) -> f64| {
        let (imin, _) = (0..EXTREMA_SAMPLES)
            .map(|i| (i, f(grid(i))))
            .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
        let lo = grid(imin.saturating_sub(1));
        let hi = grid((imin + 1).min(EXTREMA_SAMPLES - 1));
        let x = golden_min(f, lo, hi);
        f(x).min(f(grid(imin)))
    };

    let min_gpp = refine(&d2);
    let max_gp_sq = -refine(&neg_d1sq);
    if !(min_gpp > 0.0) {
        return Err(MaterialError::DegenerateLaw { min_gpp });
    }
    Ok((min_gpp, max_gp_sq))
}

fn golden_min(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > GOLDEN_TOL {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn at_and_quadratic_extrema_are_unity() {
        let at = DegradationLaw::AmbrosioTortorelli { eps: 0.01, eps0: 0.3 };
        assert_eq!(gamma_extrema(&at).unwrap(), (1.0, 1.0));
        let q = DegradationLaw::Quadratic { c0: 0.01 };
        assert_eq!(gamma_extrema(&q).unwrap(), (1.0, 1.0));
        let (g, d, dd) = q.eval(0.5);
        assert_relative_eq!(g, 0.5 * (0.01 + 0.25));
        assert_eq!((d, dd), (0.5, 1.0));
    }

    #[test]
    fn at_formula() {
        let at = DegradationLaw::AmbrosioTortorelli { eps: 0.1, eps0: 1.0 };
        assert_relative_eq!(at.gamma(1.0), 0.505, max_relative = 1e-15);
        assert_relative_eq!(at.gamma(0.0), 0.005, max_relative = 1e-15);
        assert_eq!(at.dgamma(0.0), 0.0);
        // clamped outside [0,1]
        assert_eq!(at.eval(1.2), at.eval(1.0));
        assert_eq!(at.eval(-0.3), at.eval(0.0));
    }

    #[test]
    fn tabulated_quartic_extrema_match_brute_force() {
        let g = |a: f64| 0.01 + a.powi(4) / 12.0 + a * a / 2.0;
        let dg = |a: f64| a.powi(3) / 3.0 + a;
        let ddg = |a: f64| a * a + 1.0;
        // oracle: closed-form derivatives on 10^6 points
        let n = 1_000_000;
        let (mut min_pp, mut max_p2) = (f64::INFINITY, 0.0f64);
        for i in 0..=n {
            let a = i as f64 / n as f64;
            min_pp = min_pp.min(ddg(a));
            max_p2 = max_p2.max(dg(a).powi(2));
        }
        assert_relative_eq!(min_pp, 1.0, max_relative = 1e-12);
        assert_relative_eq!(max_p2, 16.0 / 9.0, max_relative = 1e-12);

        let law = DegradationLaw::Tabulated(CubicTable::sample(1001, g).unwrap());
        let (a, b) = gamma_extrema(&law).unwrap();
        assert_relative_eq!(a, min_pp, max_relative = 1e-5);
        assert_relative_eq!(b, max_p2, max_relative = 1e-8);
        assert!(law.violations().is_empty());
    }

    #[test]
    fn spline_reproduces_cubics() {
        let f = |x: f64| 0.3 + 0.2 * x - x * x + 0.7 * x.powi(3);
        let t = CubicTable::sample(6, f).unwrap();
        for i in 0..=50 {
            let x = i as f64 / 50.0;
            let (v, d1, d2) = t.eval(x);
            assert_relative_eq!(v, f(x), epsilon = 1e-13);
            assert_relative_eq!(d1, 0.2 - 2.0 * x + 2.1 * x * x, epsilon = 1e-12);
            assert_relative_eq!(d2, -2.0 + 4.2 * x, epsilon = 1e-11);
        }
        // four samples: the 2x2 branch
        let t4 = CubicTable::sample(4, f).unwrap();
        assert_relative_eq!(t4.eval(0.37).0, f(0.37), epsilon = 1e-13);
    }

    #[test]
    fn degenerate_law_rejected() {
        let flat = DegradationLaw::Tabulated(CubicTable::sample(11, |a| 0.5 + 0.2 * a).unwrap());
        assert!(matches!(gamma_extrema(&flat), Err(MaterialError::DegenerateLaw { .. })));
        assert!(!flat.violations().is_empty()); // gamma'(0) != 0
        assert!(matches!(
            gamma_extrema(&DegradationLaw::Constant(1.0)),
            Err(MaterialError::DegenerateLaw { .. })
        ));
    }
}
