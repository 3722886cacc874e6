use std::fmt;
use std::sync::Arc;

use evalexpr::{
    build_operator_tree, ContextWithMutableVariables, DefaultNumericTypes, HashMapContext, Node,
    Value,
};

use super::dofs::DofMap;
use super::mesh::Mesh;
use super::quadrature::{element_rule, facet_rule};
use super::FemError;

const FUNCTIONS: &[&str] = &[
    "sin", "cos", "tan", "exp", "ln", "sqrt", "abs", "pow", "atan", "atan2", "tanh", "sinh",
    "cosh", "hypot",
];

// Integer literals become floats (so `1/2` is 0.5) and bare math functions
// get their `math::` prefix.
fn normalize(src: &str) -> String {
    let chars: Vec<char> = src.chars().collect();
    let mut out = String::with_capacity(src.len() + 8);
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_ascii_alphabetic() || c == '_' {
            let s = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == ':') {
                i += 1;
            }
            let word: String = chars[s..i].iter().collect();
            if word == "pi" {
                out.push_str(&format!("{:?}", std::f64::consts::PI));
            } else if FUNCTIONS.contains(&word.as_str()) {
                out.push_str("math::");
                out.push_str(&word);
            } else {
                out.push_str(&word);
            }
        } else if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let s = i;
            let mut float = false;
            while i < chars.len() {
                let d = chars[i];
                if d.is_ascii_digit() {
                    i += 1;
                } else if d == '.' || d == 'e' || d == 'E' {
                    float = true;
                    i += 1;
                    if (d == 'e' || d == 'E') && matches!(chars.get(i), Some('+') | Some('-')) {
                        i += 1;
                    }
                } else {
                    break;
                }
            }
            let lit: String = chars[s..i].iter().collect();
            out.push_str(&lit);
            if !float {
                out.push_str(".0");
            }
        } else {
            out.push(c);
            i += 1;
        }
    }
    out
}

/// Closed-form scalar field of time `t` and position `x`, `y`. Supports the
/// usual arithmetic, `sin cos tan exp ln sqrt abs pow min max if` and `pi`.
#[derive(Clone)]
pub struct Expr {
    src: String,
    node: Arc<Node<DefaultNumericTypes>>,
    spatial: bool,
    constant: Option<f64>,
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({:?})", self.src)
    }
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.src == other.src
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Self, FemError> {
        let node = build_operator_tree::<DefaultNumericTypes>(&normalize(src))
            .map_err(|e| FemError::Expression(format!("`{src}`: {e}")))?;
        let mut spatial = false;
        let mut temporal = false;
        for v in node.iter_variable_identifiers() {
            match v {
                "x" | "y" => spatial = true,
                "t" => temporal = true,
                other => {
                    return Err(FemError::Expression(format!(
                        "`{src}`: unknown variable `{other}` (allowed: t, x, y)"
                    )))
                }
            }
        }
        let mut e = Self {
            src: src.to_string(),
            node: Arc::new(node),
            spatial,
            constant: None,
        };
        // evaluate once so malformed calls surface at parse time
        let v = e.try_eval(0.0, [0.0, 0.0])?;
        if !spatial && !temporal {
            e.constant = Some(v);
        }
        Ok(e)
    }

    pub fn constant(v: f64) -> Self {
        let mut e = Self::parse(&format!("{v:?}")).expect("float literal parses");
        e.constant = Some(v);
        e
    }

    pub fn source(&self) -> &str {
        &self.src
    }

    pub fn is_spatial(&self) -> bool {
        self.spatial
    }

    /// `Some(v)` if the expression depends on neither time nor space.
    pub fn as_constant(&self) -> Option<f64> {
        self.constant
    }

    fn try_eval(&self, t: f64, x: [f64; 2]) -> Result<f64, FemError> {
        if let Some(c) = self.constant {
            return Ok(c);
        }
        let mut ctx = HashMapContext::<DefaultNumericTypes>::new();
        for (k, v) in [("t", t), ("x", x[0]), ("y", x[1])] {
            ctx.set_value(k.into(), Value::Float(v))
                .map_err(|e| FemError::Expression(e.to_string()))?;
        }
        self.node
            .eval_number_with_context(&ctx)
            .map_err(|e| FemError::Expression(format!("`{}`: {e}", self.src)))
    }

    /// Value at `(t, x)`.
    ///
    /// # Panics
    /// If evaluation fails at runtime (e.g. a boolean result), which
    /// parse-time validation rules out for well-typed expressions.
    pub fn eval(&self, t: f64, x: [f64; 2]) -> f64 {
        self.try_eval(t, x).unwrap_or_else(|e| panic!("{e}"))
    }
}

/// Scalar load component: a closed-form field or a time series with linear
/// interpolation (held constant outside its range).
#[derive(Debug, Clone, PartialEq)]
pub enum ScalarField {
    Expr(Expr),
    Series { times: Vec<f64>, values: Vec<f64> },
}

impl ScalarField {
    pub fn eval(&self, t: f64, x: [f64; 2]) -> f64 {
        match self {
            Self::Expr(e) => e.eval(t, x),
            Self::Series { times, values } => {
                let k = times.partition_point(|&s| s <= t);
                if k == 0 {
                    values[0]
                } else if k == times.len() {
                    values[k - 1]
                } else {
                    let w = (t - times[k - 1]) / (times[k] - times[k - 1]);
                    (1.0 - w) * values[k - 1] + w * values[k]
                }
            }
        }
    }

    fn is_spatial(&self) -> bool {
        matches!(self, Self::Expr(e) if e.is_spatial())
    }

    fn is_zero(&self) -> bool {
        match self {
            Self::Expr(e) => e.as_constant() == Some(0.0),
            Self::Series { values, .. } => values.iter().all(|v| *v == 0.0),
        }
    }

    pub fn validate(&self) -> Result<(), FemError> {
        if let Self::Series { times, values } = self {
            if times.is_empty() || times.len() != values.len() {
                return Err(FemError::BadSpec("time series needs matching, nonempty times and values".into()));
            }
            if times.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(FemError::BadSpec("time series times must increase".into()));
            }
        }
        Ok(())
    }
}

/// Traction on the facets carrying `tag`, one field per component.
#[derive(Debug, Clone, PartialEq)]
pub struct Traction {
    pub tag: String,
    pub value: Vec<ScalarField>,
}

/// Prescribed displacement component on the nodes of tagged facets.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletSpec {
    pub tag: String,
    pub component: usize,
    pub value: ScalarField,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LoadSpec {
    /// Body force per component; empty means none.
    pub body: Vec<ScalarField>,
    pub tractions: Vec<Traction>,
    pub dirichlet: Vec<DirichletSpec>,
}

impl LoadSpec {
    pub fn validate(&self, mesh: &Mesh) -> Result<(), FemError> {
        let d = mesh.dim();
        if !self.body.is_empty() && self.body.len() != d {
            return Err(FemError::BadSpec(format!("body force needs {d} components")));
        }
        for f in &self.body {
            f.validate()?;
        }
        for tr in &self.tractions {
            if tr.value.len() != d {
                return Err(FemError::BadSpec(format!("traction on `{}` needs {d} components", tr.tag)));
            }
            if !mesh.has_tag(&tr.tag) {
                return Err(FemError::UnknownTag(tr.tag.clone()));
            }
            for f in &tr.value {
                f.validate()?;
            }
        }
        for dc in &self.dirichlet {
            if dc.component >= d {
                return Err(FemError::BadSpec(format!(
                    "Dirichlet component {} out of range for d = {d}",
                    dc.component
                )));
            }
            if !mesh.has_tag(&dc.tag) {
                return Err(FemError::UnknownTag(dc.tag.clone()));
            }
            dc.value.validate()?;
        }
        Ok(())
    }
}

/// Body-force load vector `int f(t) . w` at a single time.
pub fn assemble_body_load(mesh: &Mesh, dofs: &DofMap, f: &[ScalarField], t: f64) -> Vec<f64> {
    let mut out = vec![0.0; dofs.n_total()];
    let d = mesh.dim();
    for (c, fc) in f.iter().enumerate() {
        if fc.is_zero() {
            continue;
        }
        for e in 0..mesh.n_elems() {
            let el = mesh.element(e);
            let meas = mesh.geometry(e).measure;
            for q in element_rule(d) {
                let v = fc.eval(t, mesh.point(e, &q.bary));
                for (a, &n) in el.iter().enumerate() {
                    out[dofs.u(n, c)] += meas * q.weight * q.bary[a] * v;
                }
            }
        }
    }
    out
}

/// Traction load vector `int_Gamma g(t) . w` at a single time.
pub fn assemble_traction(mesh: &Mesh, dofs: &DofMap, tr: &Traction, t: f64) -> Vec<f64> {
    let mut out = vec![0.0; dofs.n_total()];
    let d = mesh.dim();
    for f in mesh.facets_tagged(&tr.tag) {
        let meas = mesh.facet_measure(f);
        for q in facet_rule(d) {
            let mut x = [0.0; 2];
            for (a, &n) in f.nodes.iter().enumerate() {
                let p = mesh.coord(n);
                x[0] += q.bary[a] * p[0];
                x[1] += q.bary[a] * p[1];
            }
            for (c, gc) in tr.value.iter().enumerate() {
                let v = gc.eval(t, x);
                for (a, &n) in f.nodes.iter().enumerate() {
                    out[dofs.u(n, c)] += meas * q.weight * q.bary[a] * v;
                }
            }
        }
    }
    out
}

/// Composite Simpson weights on 5 equispaced samples of the unit interval.
pub const SIMPSON5: [f64; 5] = [1.0 / 12.0, 4.0 / 12.0, 2.0 / 12.0, 4.0 / 12.0, 1.0 / 12.0];

/// Loads averaged over step `k`: `(1/tau) int_{(k-1)tau}^{k tau}` of the body
/// force and traction, as combined-layout vectors `(F_k, G_k)`.
pub fn time_averaged_loads(
    loads: &LoadSpec,
    k: usize,
    tau: f64,
    mesh: &Mesh,
    dofs: &DofMap,
) -> (Vec<f64>, Vec<f64>) {
    assert!(k >= 1, "steps are numbered from 1");
    let t0 = (k - 1) as f64 * tau;
    let times: Vec<f64> = (0..5).map(|s| t0 + 0.25 * s as f64 * tau).collect();
    let n = dofs.n_total();
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; n];

    let body_active = loads.body.iter().any(|c| !c.is_zero());
    if body_active {
        if loads.body.iter().any(ScalarField::is_spatial) {
            for (w, &t) in SIMPSON5.iter().zip(&times) {
                axpy(&mut f, *w, &assemble_body_load(mesh, dofs, &loads.body, t));
            }
        } else {
            // space-independent: mean in time times the unit load
            for (c, fc) in loads.body.iter().enumerate() {
                let mean: f64 = SIMPSON5.iter().zip(&times).map(|(w, &t)| w * fc.eval(t, [0.0; 2])).sum();
                let mut unit = vec![ScalarField::Expr(Expr::constant(0.0)); mesh.dim()];
                unit[c] = ScalarField::Expr(Expr::constant(1.0));
                axpy(&mut f, mean, &assemble_body_load(mesh, dofs, &unit, 0.0));
            }
        }
    }
    for tr in &loads.tractions {
        if tr.value.iter().all(ScalarField::is_zero) {
            continue;
        }
        for (w, &t) in SIMPSON5.iter().zip(&times) {
            axpy(&mut g, *w, &assemble_traction(mesh, dofs, tr, t));
        }
    }
    (f, g)
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += a * xi);
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn field(s: &str) -> ScalarField {
        ScalarField::Expr(Expr::parse(s).unwrap())
    }

    #[test]
    fn expressions() {
        assert_eq!(Expr::parse("1/2").unwrap().as_constant(), Some(0.5));
        let e = Expr::parse("2*t + sin(pi*x) - max(y, 1e-1)").unwrap();
        assert!(e.is_spatial());
        assert_relative_eq!(e.eval(1.5, [0.5, 0.0]), 3.0 + 1.0 - 0.1, max_relative = 1e-15);
        assert!(matches!(Expr::parse("z + 1"), Err(FemError::Expression(_))));
        assert!(matches!(Expr::parse("1 +"), Err(FemError::Expression(_))));
        assert_eq!(Expr::parse("2.5e-3*t").unwrap().eval(2.0, [0.0; 2]), 5e-3);
    }

    #[test]
    fn series_interpolates() {
        let s = ScalarField::Series { times: vec![0.0, 1.0, 3.0], values: vec![0.0, 2.0, 0.0] };
        assert_eq!(s.eval(0.5, [0.0; 2]), 1.0);
        assert_eq!(s.eval(2.0, [0.0; 2]), 1.0);
        assert_eq!(s.eval(9.0, [0.0; 2]), 0.0);
    }

    #[test]
    fn constant_body_force_is_reproduced_every_step() {
        let m = Mesh::rectangle(1.0, 2.0, 3, 3).unwrap();
        let dofs = DofMap::new(&m);
        let loads = LoadSpec { body: vec![field("0.5"), field("-2")], ..Default::default() };
        let stationary = assemble_body_load(&m, &dofs, &loads.body, 0.0);
        for k in [1, 4, 17] {
            let (f, g) = time_averaged_loads(&loads, k, 0.1, &m, &dofs);
            assert!(g.iter().all(|v| *v == 0.0));
            for (a, b) in f.iter().zip(&stationary) {
                assert!((a - b).abs() < 1e-14);
            }
        }
        let total: f64 = (0..m.n_nodes()).map(|n| stationary[dofs.u(n, 1)]).sum();
        assert_relative_eq!(total, -2.0 * 2.0, max_relative = 1e-13);
    }

    #[test]
    fn linear_in_time_mean_is_midpoint() {
        let m = Mesh::interval(1.0, 2).unwrap();
        let dofs = DofMap::new(&m);
        let loads = LoadSpec {
            tractions: vec![Traction { tag: "right".into(), value: vec![field("t")] }],
            ..Default::default()
        };
        let tau = 0.3;
        let (_, g) = time_averaged_loads(&loads, 1, tau, &m, &dofs);
        assert_relative_eq!(g[dofs.u(2, 0)], tau / 2.0, max_relative = 1e-14);
        let (_, g3) = time_averaged_loads(&loads, 3, tau, &m, &dofs);
        assert_relative_eq!(g3[dofs.u(2, 0)], 2.5 * tau, max_relative = 1e-14);
    }

    #[test]
    fn sinusoidal_traction_mean_approaches_midpoint_value_quadratically() {
        let m = Mesh::rectangle(1.0, 1.0, 2, 2).unwrap();
        let dofs = DofMap::new(&m);
        let tr = Traction { tag: "top".into(), value: vec![field("0"), field("sin(3*t + x)")] };
        let loads = LoadSpec { tractions: vec![tr.clone()], ..Default::default() };
        let node = m.tagged_nodes("top")[1];
        // steps centred on t = 0.25
        let err = |k: usize, tau: f64| {
            let (_, g) = time_averaged_loads(&loads, k, tau, &m, &dofs);
            let mid = assemble_traction(&m, &dofs, &tr, (k as f64 - 0.5) * tau);
            (g[dofs.u(node, 1)] - mid[dofs.u(node, 1)]).abs()
        };
        let (e1, e2) = (err(3, 0.1), err(8, 0.1 / 3.0));
        let order = (e1 / e2).ln() / 3f64.ln();
        assert!((order - 2.0).abs() < 0.05, "order {order}");
    }

    #[test]
    fn validation() {
        let m = Mesh::interval(1.0, 2).unwrap();
        let bad = LoadSpec {
            tractions: vec![Traction { tag: "top".into(), value: vec![field("1")] }],
            ..Default::default()
        };
        assert!(matches!(bad.validate(&m), Err(FemError::UnknownTag(_))));
    }
}
