//! Scenario files, built-in benchmarks, the step-halving study and output.

mod builtins;
pub mod config;
mod export;
mod study;

pub use builtins::{builtin_scenario, builtin_source, BUILTIN_NAMES};
pub use config::ScenarioFile;
pub use export::{export_csv, export_vtk, read_vtk, write_outputs, VtkData, CSV_HEADER};
pub use study::{
    oscillator_reference, run_convergence_study, LevelSummary, OscillatorCheck, StaggeredComparison,
    StudyError, StudyOptions, StudyResult,
};

use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

use crate::fem::{build_mesh, DirichletSpec, Expr, FemError, LoadSpec, Mesh, MeshSpec, ScalarField, Traction};
use crate::integrator::{run, RunError, RunOptions, RunOutput};
use crate::material::{
    CubicTable, DamageEnergy, DegradationLaw, Density, DissipationLaw, ElasticTensor, GradientTerm,
    MaterialParams, ViscosityModel,
};
use crate::potential::{Model, PhiMode, State};
use crate::solver::SolverConfig;
use config::{DegradationSection, FieldValue, MeshSection, PhiModeKey};

const DEFAULT_TAU_OVER_TAU0: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid scenario:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("unknown built-in scenario `{0}` (available: {names})", names = BUILTIN_NAMES.join(", "))]
    UnknownScenario(String),
}

/// A validated, ready-to-run scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    /// Source with defaults filled in.
    pub file: ScenarioFile,
    pub model: Arc<Model>,
    pub initial: State,
    pub tau: f64,
    pub n_steps: usize,
    pub solver: SolverConfig,
    /// Adjustments and advisories raised during validation.
    pub warnings: Vec<String>,
    base_dir: Option<PathBuf>,
}

/// Read and validate a scenario file.
pub fn parse_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io(format!("{}: {e}", path.display())))?;
    parse_scenario_str(&text, path.parent())
}

/// Parse scenario text; relative mesh paths resolve against `base_dir`.
pub fn parse_scenario_str(text: &str, base_dir: Option<&Path>) -> Result<Scenario, ScenarioError> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map(|s| line_col(text, s.start)).unwrap_or((0, 0));
        ScenarioError::Parse { line, column, message: e.message().trim().to_string() }
    })?;
    Scenario::from_file(file, base_dir)
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

/// `file:PATH`, `builtin:NAME` or a bare path.
pub fn load_scenario(spec: &str) -> Result<Scenario, ScenarioError> {
    match spec.strip_prefix("builtin:") {
        Some(name) => builtin_scenario(name),
        None => parse_scenario(Path::new(spec.strip_prefix("file:").unwrap_or(spec))),
    }
}

fn field(v: &FieldValue, what: &str, errs: &mut Vec<String>) -> ScalarField {
    let f = match v {
        FieldValue::Number(x) => Ok(ScalarField::Expr(Expr::constant(*x))),
        FieldValue::Expr(s) => Expr::parse(s).map(ScalarField::Expr),
        FieldValue::Series { times, values } => {
            let s = ScalarField::Series { times: times.clone(), values: values.clone() };
            s.validate().map(|_| s)
        }
    };
    f.unwrap_or_else(|e| {
        errs.push(format!("{what}: {e}"));
        ScalarField::Expr(Expr::constant(0.0))
    })
}

fn vector_field(vs: &[FieldValue], dim: usize, what: &str, errs: &mut Vec<String>) -> Vec<ScalarField> {
    if vs.is_empty() {
        return Vec::new();
    }
    if vs.len() != dim {
        errs.push(format!("{what}: expected {dim} components, found {}", vs.len()));
        return Vec::new();
    }
    vs.iter().enumerate().map(|(c, v)| field(v, &format!("{what}[{c}]"), errs)).collect()
}

fn distance_to_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let s = if len2 > 0.0 { ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let d = [ap[0] - s * ab[0], ap[1] - s * ab[1]];
    (d[0] * d[0] + d[1] * d[1]).sqrt()
}

impl Scenario {
    pub fn from_file(file: ScenarioFile, base_dir: Option<&Path>) -> Result<Self, ScenarioError> {
        let mut errs = Vec::new();
        let mut warnings = Vec::new();
        let mesh_spec = match &file.mesh {
            MeshSection::Interval { length, elements } => MeshSpec::Interval { length: *length, elements: *elements },
            MeshSection::Rectangle { lx, ly, nx, ny } => MeshSpec::Rectangle { lx: *lx, ly: *ly, nx: *nx, ny: *ny },
            MeshSection::File { path } => {
                let p = Path::new(path);
                MeshSpec::File(match base_dir {
                    Some(b) if p.is_relative() => b.join(p),
                    _ => p.to_path_buf(),
                })
            }
        };
        let mesh = match build_mesh(&mesh_spec) {
            Ok(m) => m,
            Err(FemError::Io(msg)) => return Err(ScenarioError::Io(msg)),
            Err(e) => return Err(ScenarioError::Validation(vec![format!("mesh: {e}")])),
        };
        let dim = mesh.dim();

        if !(file.rho >= 0.0 && file.rho.is_finite()) {
            errs.push(format!("rho ({}) must be nonnegative", file.rho));
        }
        let frozen = file.damage.frozen;
        let degradation = match &file.degradation {
            DegradationSection::AmbrosioTortorelli { eps, eps0 } => {
                if !(*eps > 0.0 && *eps0 > 0.0) {
                    errs.push(format!("degradation: eps ({eps}) and eps0 ({eps0}) must be positive"));
                }
                DegradationLaw::AmbrosioTortorelli { eps: *eps, eps0: *eps0 }
            }
            DegradationSection::Quadratic { c0 } => DegradationLaw::Quadratic { c0: *c0 },
            DegradationSection::Tabulated { samples } => match CubicTable::new(samples.clone()) {
                Ok(t) => DegradationLaw::Tabulated(t),
                Err(e) => {
                    errs.push(format!("degradation: {e}"));
                    DegradationLaw::Constant(1.0)
                }
            },
            DegradationSection::Constant { value } => {
                if !frozen {
                    errs.push("degradation: a constant law needs frozen damage".into());
                }
                DegradationLaw::Constant(*value)
            }
        };
        let eps = file.damage.eps.unwrap_or(match file.degradation {
            DegradationSection::AmbrosioTortorelli { eps, .. } => eps,
            _ => 0.05,
        });
        let elastic = ElasticTensor::isotropic(dim, file.elastic.lambda, file.elastic.mu);
        let vis = &file.viscosity;
        if !(vis.d0_scale >= 0.0) {
            errs.push(format!("viscosity: D0_scale ({}) must be nonnegative", vis.d0_scale));
        } else if vis.d0_scale == 0.0 && !frozen {
            errs.push("viscosity: D0_scale = 0 is only allowed with frozen damage".into());
        }
        let diss = &file.dissipation;
        if diss.rate_independent && diss.eta != 0.0 {
            errs.push(format!("dissipation: rate_independent requires eta = 0, found {}", diss.eta));
        }
        let material = MaterialParams {
            degradation,
            viscosity: ViscosityModel { d0: elastic.scaled(vis.d0_scale), relaxation_time: vis.chi_r },
            elastic,
            damage_energy: DamageEnergy::AtQuadratic { gc: file.damage.gc, eps },
            dissipation: DissipationLaw { eta: diss.eta, allow_rate_independent: diss.rate_independent },
            gradient: GradientTerm {
                kappa: file.gradient.kappa.unwrap_or(eps * file.damage.gc),
                p: file.gradient.p,
                eps_g: file.gradient.eps_g,
            },
            density: Density::Uniform(file.rho),
        };
        for v in material.violations() {
            let waived = frozen && (v.contains("not strictly convex") || v.starts_with("viscosity: D0"));
            if !waived {
                errs.push(v);
            }
        }

        let mut loads = LoadSpec {
            body: vector_field(&file.loads.body, dim, "loads.body", &mut errs),
            ..Default::default()
        };
        for (i, t) in file.loads.traction.iter().enumerate() {
            let what = format!("loads.traction[{i}]");
            if !mesh.has_tag(&t.boundary) {
                errs.push(format!("{what}: no boundary tagged `{}`", t.boundary));
                continue;
            }
            if t.value.len() != dim {
                errs.push(format!("{what}: expected {dim} components, found {}", t.value.len()));
                continue;
            }
            let value = vector_field(&t.value, dim, &what, &mut errs);
            loads.tractions.push(Traction { tag: t.boundary.clone(), value });
        }
        for (i, d) in file.loads.dirichlet.iter().enumerate() {
            let what = format!("loads.dirichlet[{i}]");
            if !mesh.has_tag(&d.boundary) {
                errs.push(format!("{what}: no boundary tagged `{}`", d.boundary));
                continue;
            }
            if d.component >= dim {
                errs.push(format!("{what}: component {} out of range for dimension {dim}", d.component));
                continue;
            }
            let value = field(&d.value, &what, &mut errs);
            loads.dirichlet.push(DirichletSpec { tag: d.boundary.clone(), component: d.component, value });
        }
        if file.rho == 0.0 && loads.dirichlet.is_empty() {
            errs.push("quasistatic scenario (rho = 0) needs at least one Dirichlet constraint".into());
        }

        let t_end = file.time.t_end;
        if !(t_end > 0.0 && t_end.is_finite()) {
            errs.push(format!("time: T ({t_end}) must be positive"));
        }
        if file.time.tau.is_some() && file.time.tau_over_tau0.is_some() {
            errs.push("time: give either tau or tau_over_tau0, not both".into());
        }
        if let Err(e) = file.solver.validate() {
            errs.push(format!("solver: {e}"));
        }

        let u0 = vector_field(&file.initial.u, dim, "initial.u", &mut errs);
        let v0 = vector_field(&file.initial.v, dim, "initial.v", &mut errs);
        let a0 = field(&file.initial.alpha, "initial.alpha", &mut errs);
        for (i, s) in file.initial.seam.iter().enumerate() {
            if !(0.0..=1.0).contains(&s.value) {
                errs.push(format!("initial.seam[{i}]: value {} outside [0, 1]", s.value));
            }
        }
        if !errs.is_empty() {
            return Err(ScenarioError::Validation(errs));
        }

        let n = mesh.n_nodes();
        let eval_vec = |fs: &[ScalarField]| -> Vec<f64> {
            let mut out = vec![0.0; n * dim];
            for node in 0..n {
                for (c, f) in fs.iter().enumerate() {
                    out[node * dim + c] = f.eval(0.0, mesh.coord(node));
                }
            }
            out
        };
        let mut alpha: Vec<f64> = (0..n).map(|node| a0.eval(0.0, mesh.coord(node))).collect();
        let h = mesh.min_size();
        for s in &file.initial.seam {
            let w = s.width.unwrap_or(0.5 * h);
            for (node, a) in alpha.iter_mut().enumerate() {
                if distance_to_segment(mesh.coord(node), s.from, s.to) <= w {
                    *a = a.min(s.value);
                }
            }
        }
        if let Some(a) = alpha.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            errs.push(format!("initial.alpha: value {a} outside [0, 1]"));
        }
        let initial = State { k: 0, t: 0.0, u: eval_vec(&u0), v: eval_vec(&v0), alpha };
        if let Err(e) = initial.check() {
            errs.push(format!("initial: {e}"));
        }
        if !errs.is_empty() {
            return Err(ScenarioError::Validation(errs));
        }

        let phi_mode = match file.damage.phi_mode {
            PhiModeKey::Potential => PhiMode::Potential,
            PhiModeKey::DifferenceQuotient => PhiMode::DifferenceQuotient,
        };
        let model = Model::new(Arc::new(mesh), material, loads, phi_mode, frozen)
            .map_err(|e| ScenarioError::Validation(vec![e.to_string()]))?;

        let requested = match (file.time.tau, file.time.tau_over_tau0) {
            (Some(t), _) => t,
            (None, r) => {
                let r = r.unwrap_or(DEFAULT_TAU_OVER_TAU0);
                if model.tau0.is_infinite() {
                    return Err(ScenarioError::Validation(vec![
                        "time: the critical step is infinite, give tau explicitly".into(),
                    ]));
                }
                r * model.tau0
            }
        };
        if !(requested > 0.0 && requested.is_finite()) {
            return Err(ScenarioError::Validation(vec![format!("time: tau ({requested}) must be positive")]));
        }
        let n_steps = ((t_end / requested) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        let tau = t_end / n_steps as f64;
        if (tau - requested).abs() > 1e-12 * requested {
            warnings.push(format!("tau adjusted from {requested} to {tau} so that T/tau = {n_steps}"));
        }
        if !model.is_certified(tau) {
            warnings.push(format!(
                "tau = {tau} exceeds the critical step tau0 = {}; steps are uncertified",
                model.tau0
            ));
        }
        Ok(Self {
            solver: file.solver.clone(),
            file,
            model: Arc::new(model),
            initial,
            tau,
            n_steps,
            warnings,
            base_dir: base_dir.map(Path::to_path_buf),
        })
    }

    pub fn name(&self) -> &str {
        self.file.name.as_deref().unwrap_or("scenario")
    }

    pub fn end_time(&self) -> f64 {
        self.file.time.t_end
    }

    pub fn mesh(&self) -> &Mesh {
        &self.model.mesh
    }

    pub fn is_certified(&self) -> bool {
        self.model.is_certified(self.tau)
    }

    /// Same scenario with an explicit step (adjusted to divide `T`).
    pub fn with_tau(&self, tau: f64) -> Result<Self, ScenarioError> {
        let mut f = self.file.clone();
        f.time.tau = Some(tau);
        f.time.tau_over_tau0 = None;
        Self::from_file(f, self.base_dir.as_deref())
    }

    /// Same scenario over `[0, t_end]` keeping the current step.
    pub fn with_end_time(&self, t_end: f64) -> Result<Self, ScenarioError> {
        let mut f = self.file.clone();
        f.time.t_end = t_end;
        f.time.tau = Some(self.tau);
        f.time.tau_over_tau0 = None;
        Self::from_file(f, self.base_dir.as_deref())
    }

    pub fn with_solver(&self, solver: SolverConfig) -> Result<Self, ScenarioError> {
        let mut f = self.file.clone();
        f.solver = solver;
        Self::from_file(f, self.base_dir.as_deref())
    }

    /// Canonical TOML form; parsing it yields the same scenario.
    pub fn to_toml(&self) -> String {
        toml::to_string(&self.file).expect("scenario files always serialize")
    }

    pub fn run(&self, opts: &RunOptions) -> Result<RunOutput, RunError> {
        run(&self.model, self.initial.clone(), self.tau, self.n_steps, &self.solver, opts)
    }
}
