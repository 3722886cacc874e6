//! TOML schema of scenario files.

use serde::{Deserialize, Serialize};

use crate::solver::SolverConfig;

fn one() -> f64 {
    1.0
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Uniform mass density; 0 selects the quasistatic problem.
    #[serde(default = "one")]
    pub rho: f64,
    pub mesh: MeshSection,
    #[serde(default)]
    pub degradation: DegradationSection,
    #[serde(default)]
    pub elastic: ElasticSection,
    #[serde(default)]
    pub viscosity: ViscositySection,
    #[serde(default)]
    pub damage: DamageSection,
    #[serde(default)]
    pub dissipation: DissipationSection,
    #[serde(default)]
    pub gradient: GradientSection,
    #[serde(default)]
    pub solver: SolverConfig,
    pub time: TimeSection,
    #[serde(default)]
    pub loads: LoadsSection,
    #[serde(default)]
    pub initial: InitialSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum MeshSection {
    Interval { length: f64, elements: usize },
    Rectangle { lx: f64, ly: f64, nx: usize, ny: usize },
    File { path: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DegradationSection {
    AmbrosioTortorelli { eps: f64, eps0: f64 },
    Quadratic { c0: f64 },
    /// Values on an equispaced grid of `[0, 1]`, interpolated by a cubic
    /// spline.
    Tabulated { samples: Vec<f64> },
    Constant { value: f64 },
}

impl Default for DegradationSection {
    fn default() -> Self {
        Self::AmbrosioTortorelli { eps: 0.05, eps0: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ElasticSection {
    pub lambda: f64,
    pub mu: f64,
}

impl Default for ElasticSection {
    fn default() -> Self {
        Self { lambda: 0.0, mu: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ViscositySection {
    /// `D0 = D0_scale * C1`.
    #[serde(rename = "D0_scale")]
    pub d0_scale: f64,
    #[serde(rename = "chi_R")]
    pub chi_r: f64,
}

impl Default for ViscositySection {
    fn default() -> Self {
        Self { d0_scale: 0.1, chi_r: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiModeKey {
    #[default]
    Potential,
    DifferenceQuotient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DamageSection {
    #[serde(rename = "Gc")]
    pub gc: f64,
    /// Length scale of the crack density, defaults to the degradation `eps`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(skip_serializing_if = "is_false")]
    pub frozen: bool,
    pub phi_mode: PhiModeKey,
}

impl Default for DamageSection {
    fn default() -> Self {
        Self { gc: 0.1, eps: None, frozen: false, phi_mode: PhiModeKey::Potential }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DissipationSection {
    pub eta: f64,
    #[serde(skip_serializing_if = "is_false")]
    pub rate_independent: bool,
}

impl Default for DissipationSection {
    fn default() -> Self {
        Self { eta: 1e-3, rate_independent: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradientSection {
    /// Defaults to `eps * Gc`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    pub p: f64,
    pub eps_g: f64,
}

impl Default for GradientSection {
    fn default() -> Self {
        Self { kappa: None, p: 2.0, eps_g: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    #[serde(rename = "T")]
    pub t_end: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    /// Step as a fraction of the critical step; used when `tau` is absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_over_tau0: Option<f64>,
}

/// A number, an expression in `t`, `x`, `y`, or a time series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldValue {
    Number(f64),
    Expr(String),
    Series { times: Vec<f64>, values: Vec<f64> },
}

impl From<f64> for FieldValue {
    fn from(v: f64) -> Self {
        Self::Number(v)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoadsSection {
    /// Body force per component; empty means none.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub body: Vec<FieldValue>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub traction: Vec<TractionSection>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub dirichlet: Vec<DirichletSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TractionSection {
    pub boundary: String,
    pub value: Vec<FieldValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirichletSection {
    pub boundary: String,
    pub component: usize,
    pub value: FieldValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialSection {
    /// Per component, evaluated at `t = 0`; empty means zero.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub u: Vec<FieldValue>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub v: Vec<FieldValue>,
    pub alpha: FieldValue,
    /// Pre-damaged line segments applied on top of `alpha`.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub seam: Vec<SeamSection>,
}

impl Default for InitialSection {
    fn default() -> Self {
        Self { u: Vec::new(), v: Vec::new(), alpha: FieldValue::Number(1.0), seam: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeamSection {
    pub from: [f64; 2],
    pub to: [f64; 2],
    pub value: f64,
    /// Nodes closer than this to the segment are set; defaults to half the
    /// smallest element size.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    /// Field dump every this many steps; 0 writes the initial and final
    /// states only.
    pub every: usize,
    pub vtk: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: None, every: 0, vtk: true }
    }
}
