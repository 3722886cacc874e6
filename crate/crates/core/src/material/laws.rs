use std::fmt;
use std::sync::Arc;

use super::tensor::ElasticTensor;

/// Kelvin-Voigt viscosity `D(alpha) = D0 + chi_R C(alpha)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ViscosityModel {
    pub d0: ElasticTensor,
    pub relaxation_time: f64,
}

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Stored energy of damage `phi`, entering the stored energy as `-phi`.
#[derive(Clone)]
pub enum DamageEnergy {
    /// `phi = -Gc (1 - alpha)^2 / (2 eps)`.
    AtQuadratic { gc: f64, eps: f64 },
    Custom { phi: ScalarFn, dphi: ScalarFn },
}

impl fmt::Debug for DamageEnergy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::AtQuadratic { gc, eps } => f
                .debug_struct("AtQuadratic")
                .field("gc", gc)
                .field("eps", eps)
                .finish(),
            Self::Custom { .. } => f.write_str("Custom(..)"),
        }
    }
}

const CUSTOM_FD_STEP: f64 = 1e-6;

impl DamageEnergy {
    pub fn phi(&self, alpha: f64) -> f64 {
        match self {
            Self::AtQuadratic { gc, eps } => -gc * (1.0 - alpha).powi(2) / (2.0 * eps),
            Self::Custom { phi, .. } => phi(alpha),
        }
    }

    pub fn dphi(&self, alpha: f64) -> f64 {
        match self {
            Self::AtQuadratic { gc, eps } => gc * (1.0 - alpha) / eps,
            Self::Custom { dphi, .. } => dphi(alpha),
        }
    }

    /// Second derivative; central differences of `phi'` for custom laws.
    pub fn d2phi(&self, alpha: f64) -> f64 {
        match self {
            Self::AtQuadratic { gc, eps } => -gc / eps,
            Self::Custom { dphi, .. } => {
                let h = CUSTOM_FD_STEP;
                let lo = (alpha - h).max(0.0);
                let hi = (alpha + h).min(1.0);
                (dphi(hi) - dphi(lo)) / (hi - lo)
            }
        }
    }

    /// Secant test of concavity: `phi'` nonincreasing on a uniform grid.
    pub fn is_concave(&self) -> bool {
        let n = 1000;
        let mut prev = self.dphi(0.0);
        for i in 1..=n {
            let cur = self.dphi(i as f64 / n as f64);
            if cur > prev + 1e-12 * (1.0 + prev.abs()) {
                return false;
            }
            prev = cur;
        }
        true
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Self::AtQuadratic { gc, eps } = self {
            if !(*gc >= 0.0) {
                out.push(format!("damage: Gc ({gc}) must be nonnegative"));
            }
            if !(*eps > 0.0) {
                out.push(format!("damage: eps ({eps}) must be positive"));
            }
            return out;
        }
        if self.dphi(0.0) < 0.0 {
            out.push("damage: phi'(0) must be nonnegative".into());
        }
        out
    }
}

/// Damage dissipation `zeta(r) = eta/2 r^2` for `r <= 0`, `+inf` for `r > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DissipationLaw {
    pub eta: f64,
    /// Permits `eta = 0` (rate-independent phase-field regime), which gives
    /// up coercivity of `zeta`.
    pub allow_rate_independent: bool,
}

impl DissipationLaw {
    pub fn viscous(eta: f64) -> Self {
        Self {
            eta,
            allow_rate_independent: false,
        }
    }

    pub fn rate_independent() -> Self {
        Self {
            eta: 0.0,
            allow_rate_independent: true,
        }
    }

    pub fn zeta(&self, rate: f64) -> f64 {
        if rate > 0.0 {
            f64::INFINITY
        } else {
            0.5 * self.eta * rate * rate
        }
    }

    /// `rate * d zeta(rate)`, the dissipation rate (single-valued for `rate <= 0`).
    pub fn rate_times_subgradient(&self, rate: f64) -> f64 {
        if rate > 0.0 {
            f64::INFINITY
        } else {
            self.eta * rate * rate
        }
    }

    pub fn violations(&self) -> Vec<String> {
        if self.eta > 0.0 || (self.eta == 0.0 && self.allow_rate_independent) {
            Vec::new()
        } else if self.eta == 0.0 {
            vec!["dissipation: eta = 0 requires the rate-independent flag".into()]
        } else {
            vec![format!("dissipation: eta ({}) must be nonnegative", self.eta)]
        }
    }
}

/// Singular-point guard inside `|grad alpha|^(p-2)`.
pub const GRADIENT_GUARD: f64 = 1e-12;

/// Damage gradient energy density `kappa/p |g|^p`, or the regularized
/// `kappa (|g|^2/2 + eps_g/p |g|^p)` when `eps_g > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientTerm {
    pub kappa: f64,
    pub p: f64,
    pub eps_g: f64,
}

impl GradientTerm {
    pub fn quadratic(kappa: f64) -> Self {
        Self {
            kappa,
            p: 2.0,
            eps_g: 0.0,
        }
    }

    fn guarded_sq(&self, g: &[f64]) -> f64 {
        let s: f64 = g.iter().map(|x| x * x).sum();
        if self.p == 2.0 {
            s
        } else {
            s + GRADIENT_GUARD * GRADIENT_GUARD
        }
    }

    pub fn density(&self, g: &[f64]) -> f64 {
        let s = self.guarded_sq(g);
        let pw = s.powf(0.5 * self.p) / self.p;
        if self.eps_g > 0.0 {
            let plain: f64 = g.iter().map(|x| x * x).sum();
            self.kappa * (0.5 * plain + self.eps_g * pw)
        } else {
            self.kappa * pw
        }
    }

    /// Scalar `c` with flux `= c g`.
    pub fn flux_coefficient(&self, g: &[f64]) -> f64 {
        let s = self.guarded_sq(g);
        let pw = s.powf(0.5 * (self.p - 2.0));
        if self.eps_g > 0.0 {
            self.kappa * (1.0 + self.eps_g * pw)
        } else {
            self.kappa * pw
        }
    }

    /// `(a, b)` with Hessian of the density `= a I + b g g^T`.
    pub fn hessian_coefficients(&self, g: &[f64]) -> (f64, f64) {
        let a = self.flux_coefficient(g);
        if self.p == 2.0 {
            return (a, 0.0);
        }
        let s = self.guarded_sq(g);
        let b = (self.p - 2.0) * s.powf(0.5 * (self.p - 4.0));
        let w = if self.eps_g > 0.0 { self.eps_g } else { 1.0 };
        (a, self.kappa * w * b)
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.kappa > 0.0) {
            out.push(format!("gradient: kappa ({}) must be positive", self.kappa));
        }
        if !(self.p >= 2.0) {
            out.push(format!("gradient: p ({}) must be at least 2", self.p));
        }
        if !(self.eps_g >= 0.0) {
            out.push(format!("gradient: eps_g ({}) must be nonnegative", self.eps_g));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn at_damage_energy_is_concave() {
        let e = DamageEnergy::AtQuadratic { gc: 2.0, eps: 0.1 };
        assert_relative_eq!(e.phi(0.5), -2.0 * 0.25 / 0.2);
        assert_relative_eq!(e.dphi(0.0), 20.0);
        assert!(e.is_concave());
        assert!(e.violations().is_empty());
    }

    #[test]
    fn custom_convex_phi_is_not_concave() {
        let e = DamageEnergy::Custom {
            phi: Arc::new(|a| a * a),
            dphi: Arc::new(|a| 2.0 * a),
        };
        assert!(!e.is_concave());
        assert_relative_eq!(e.d2phi(0.4), 2.0, max_relative = 1e-8);
    }

    #[test]
    fn zeta_is_unidirectional() {
        let z = DissipationLaw::viscous(3.0);
        assert_eq!(z.zeta(0.0), 0.0);
        assert_eq!(z.zeta(1e-9), f64::INFINITY);
        assert_relative_eq!(z.zeta(-2.0), 6.0);
        assert_relative_eq!(z.rate_times_subgradient(-2.0), 12.0);
        assert!(DissipationLaw::viscous(0.0).violations().len() == 1);
        assert!(DissipationLaw::rate_independent().violations().is_empty());
    }

    #[test]
    fn gradient_density_derivatives_match_finite_differences() {
        for term in [
            GradientTerm::quadratic(1.5),
            GradientTerm { kappa: 0.7, p: 4.0, eps_g: 0.0 },
            GradientTerm { kappa: 0.7, p: 3.0, eps_g: 0.2 },
        ] {
            let g = [0.3, -1.2];
            let c = term.flux_coefficient(&g);
            let (a, b) = term.hessian_coefficients(&g);
            let h = 1e-6;
            for i in 0..2 {
                let mut gp = g;
                let mut gm = g;
                gp[i] += h;
                gm[i] -= h;
                let fd = (term.density(&gp) - term.density(&gm)) / (2.0 * h);
                assert_relative_eq!(fd, c * g[i], max_relative = 1e-8);
                for j in 0..2 {
                    let fdh = (term.flux_coefficient(&gp) * gp[j]
                        - term.flux_coefficient(&gm) * gm[j])
                        / (2.0 * h);
                    let exact = a * f64::from(u8::from(i == j)) + b * g[i] * g[j];
                    assert_relative_eq!(fdh, exact, max_relative = 1e-6, epsilon = 1e-9);
                }
            }
        }
    }
}
