use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{Scenario, ScenarioError};
use crate::fem::Mesh;
use crate::integrator::{EnergyReport, RunOutput};
use crate::potential::State;
use crate::solver::StepStats;

pub const CSV_HEADER: &str =
    "k,t,kinetic,elastic,phi,gradient,visc_diss,dam_diss,ext_work,ineq_margin,newton_iters,pg_norm";

fn io_err(path: &Path, e: std::io::Error) -> ScenarioError {
    ScenarioError::Io(format!("{}: {e}", path.display()))
}

/// Energy ledger with one row per grid time; `stats[k - 1]` belongs to
/// row `k`.
pub fn export_csv(report: &EnergyReport, stats: &[StepStats], path: &Path) -> Result<(), ScenarioError> {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in &report.rows {
        let (iters, pg) = match r.k.checked_sub(1).and_then(|i| stats.get(i)) {
            Some(st) => (st.newton_iters, st.pg_norm),
            None => (0, 0.0),
        };
        writeln!(
            s,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{:.6e}",
            r.k, r.t, r.kinetic, r.elastic, r.phi, r.gradient, r.visc_diss, r.dam_diss, r.ext_work, r.margin, iters, pg
        )
        .expect("writing to a string");
    }
    fs::write(path, s).map_err(|e| io_err(path, e))
}

fn pad3(v: &[f64], node: usize, dim: usize) -> [f64; 3] {
    let mut out = [0.0; 3];
    out[..dim].copy_from_slice(&v[node * dim..node * dim + dim]);
    out
}

/// Legacy ASCII VTK unstructured grid with point data `u`, `v`, `alpha`.
pub fn export_vtk(state: &State, mesh: &Mesh, path: &Path) -> Result<(), ScenarioError> {
    let n = mesh.n_nodes();
    let ne = mesh.n_elems();
    let nv = mesh.nodes_per_elem();
    let dim = mesh.dim();
    let mut s = String::new();
    let w = &mut s;
    let _ = writeln!(w, "# vtk DataFile Version 3.0");
    let _ = writeln!(w, "kvdamage k={} t={:.16e}", state.k, state.t);
    let _ = writeln!(w, "ASCII\nDATASET UNSTRUCTURED_GRID");
    let _ = writeln!(w, "POINTS {n} double");
    for p in mesh.coords() {
        let _ = writeln!(w, "{:.16e} {:.16e} 0", p[0], p[1]);
    }
    let _ = writeln!(w, "CELLS {ne} {}", ne * (nv + 1));
    for e in 0..ne {
        let el = mesh.element(e);
        let ids: Vec<String> = el.iter().map(|i| i.to_string()).collect();
        let _ = writeln!(w, "{nv} {}", ids.join(" "));
    }
    let _ = writeln!(w, "CELL_TYPES {ne}");
    let ty = if dim == 1 { 3 } else { 5 };
    for _ in 0..ne {
        let _ = writeln!(w, "{ty}");
    }
    let _ = writeln!(w, "POINT_DATA {n}");
    for (name, f) in [("u", &state.u), ("v", &state.v)] {
        let _ = writeln!(w, "VECTORS {name} double");
        for node in 0..n {
            let p = pad3(f, node, dim);
            let _ = writeln!(w, "{:.16e} {:.16e} {:.16e}", p[0], p[1], p[2]);
        }
    }
    let _ = writeln!(w, "SCALARS alpha double 1\nLOOKUP_TABLE default");
    for a in &state.alpha {
        let _ = writeln!(w, "{a:.16e}");
    }
    fs::write(path, s).map_err(|e| io_err(path, e))
}

/// Contents of a file written by [`export_vtk`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VtkData {
    pub points: Vec<[f64; 3]>,
    pub cells: Vec<Vec<usize>>,
    pub cell_types: Vec<u8>,
    pub u: Vec<[f64; 3]>,
    pub v: Vec<[f64; 3]>,
    pub alpha: Vec<f64>,
}

/// Minimal reader for the subset of the legacy format written here.
pub fn read_vtk(path: &Path) -> Result<VtkData, ScenarioError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let bad = |m: &str| ScenarioError::Io(format!("{}: {m}", path.display()));
    let mut lines = text.lines().skip(4);
    let mut out = VtkData::default();
    let nums = |l: &str| -> Result<Vec<f64>, ScenarioError> {
        l.split_whitespace().map(|t| t.parse::<f64>().map_err(|_| bad("bad number"))).collect()
    };
    let count = |l: Option<&str>, key: &str| -> Result<usize, ScenarioError> {
        let l = l.ok_or_else(|| bad("truncated"))?;
        let mut it = l.split_whitespace();
        if it.next() != Some(key) {
            return Err(bad(&format!("expected {key}")));
        }
        it.next().and_then(|t| t.parse().ok()).ok_or_else(|| bad("bad count"))
    };
    let triple = |v: Vec<f64>| -> Result<[f64; 3], ScenarioError> {
        v.try_into().map_err(|_| bad("expected three components"))
    };
    let n = count(lines.next(), "POINTS")?;
    for _ in 0..n {
        out.points.push(triple(nums(lines.next().ok_or_else(|| bad("truncated"))?)?)?);
    }
    let ne = count(lines.next(), "CELLS")?;
    for _ in 0..ne {
        let v = nums(lines.next().ok_or_else(|| bad("truncated"))?)?;
        out.cells.push(v[1..].iter().map(|x| *x as usize).collect());
    }
    count(lines.next(), "CELL_TYPES")?;
    for _ in 0..ne {
        out.cell_types.push(lines.next().and_then(|l| l.trim().parse().ok()).ok_or_else(|| bad("bad cell type"))?);
    }
    count(lines.next(), "POINT_DATA")?;
    while let Some(l) = lines.next() {
        let mut it = l.split_whitespace();
        match (it.next(), it.next()) {
            (Some("VECTORS"), Some(name)) => {
                let mut vals = Vec::with_capacity(n);
                for _ in 0..n {
                    vals.push(triple(nums(lines.next().ok_or_else(|| bad("truncated"))?)?)?);
                }
                match name {
                    "u" => out.u = vals,
                    "v" => out.v = vals,
                    _ => {}
                }
            }
            (Some("SCALARS"), Some("alpha")) => {
                lines.next();
                for _ in 0..n {
                    out.alpha.push(lines.next().and_then(|l| l.trim().parse().ok()).ok_or_else(|| bad("bad scalar"))?);
                }
            }
            _ => return Err(bad(&format!("unexpected line `{l}`"))),
        }
    }
    Ok(out)
}

/// Writes `energy.csv`, the canonical `scenario.toml` and the field dumps
/// into `dir`; returns the files written.
pub fn write_outputs(sc: &Scenario, out: &RunOutput, dir: &Path) -> Result<Vec<PathBuf>, ScenarioError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut files = Vec::new();
    let csv = dir.join("energy.csv");
    export_csv(&out.report, &out.stats, &csv)?;
    files.push(csv);
    let toml = dir.join("scenario.toml");
    fs::write(&toml, sc.to_toml()).map_err(|e| io_err(&toml, e))?;
    files.push(toml);
    if sc.file.output.vtk {
        let states = &out.trajectory.states;
        let last = states.len() - 1;
        let every = sc.file.output.every;
        for (k, s) in states.iter().enumerate() {
            if k == 0 || k == last || (every > 0 && k % every == 0) {
                let p = dir.join(format!("fields_{k:05}.vtk"));
                export_vtk(s, sc.mesh(), &p)?;
                files.push(p);
            }
        }
    }
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn vtk_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = rand::rngs::StdRng::seed_from_u64(1);
        for mesh in [Mesh::interval(1.0, 7).unwrap(), Mesh::rectangle(2.0, 1.0, 3, 2).unwrap()] {
            let (n, d) = (mesh.n_nodes(), mesh.dim());
            let s = State {
                k: 3,
                t: 0.3,
                u: (0..n * d).map(|_| rng.gen_range(-1.0..1.0) * 1e-3).collect(),
                v: (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                alpha: (0..n).map(|_| rng.gen_range(0.0..1.0)).collect(),
            };
            let p = dir.path().join("f.vtk");
            export_vtk(&s, &mesh, &p).unwrap();
            let back = read_vtk(&p).unwrap();
            assert_eq!(back.points.len(), n);
            assert_eq!(back.cells.len(), mesh.n_elems());
            assert_eq!(back.cell_types[0], if d == 1 { 3 } else { 5 });
            for node in 0..n {
                for c in 0..d {
                    let (a, b) = (back.u[node][c], s.u[node * d + c]);
                    assert!((a - b).abs() <= 1e-9 * b.abs().max(1e-300), "{a} {b}");
                    assert!((back.v[node][c] - s.v[node * d + c]).abs() <= 1e-9 * s.v[node * d + c].abs());
                }
                assert!((back.alpha[node] - s.alpha[node]).abs() <= 1e-9 * s.alpha[node]);
            }
        }
    }
}
