use std::path::{Path, PathBuf};

use super::FemError;

/// Boundary facet: a node in 1D, an edge in 2D.
#[derive(Debug, Clone, PartialEq)]
pub struct Facet {
    pub tag: String,
    pub nodes: Vec<usize>,
}

/// Measure and constant shape-function gradients of one P1 element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElemGeom {
    pub measure: f64,
    /// `grads[a][j] = d N_a / d x_j`.
    pub grads: [[f64; 2]; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub enum MeshSpec {
    Interval { length: f64, elements: usize },
    Rectangle { lx: f64, ly: f64, nx: usize, ny: usize },
    File(PathBuf),
}

/// Simplicial P1 mesh: segments in 1D, triangles in 2D.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    dim: usize,
    coords: Vec<[f64; 2]>,
    conn: Vec<usize>,
    facets: Vec<Facet>,
    geom: Vec<ElemGeom>,
}

pub fn build_mesh(spec: &MeshSpec) -> Result<Mesh, FemError> {
    match spec {
        MeshSpec::Interval { length, elements } => Mesh::interval(*length, *elements),
        MeshSpec::Rectangle { lx, ly, nx, ny } => Mesh::rectangle(*lx, *ly, *nx, *ny),
        MeshSpec::File(p) => Mesh::from_file(p),
    }
}

impl Mesh {
    /// `[0, length]` split into `n` equal segments; facets `left` and `right`.
    pub fn interval(length: f64, n: usize) -> Result<Self, FemError> {
        if !(length > 0.0) || n == 0 {
            return Err(FemError::BadSpec(format!(
                "interval needs positive length and elements (got {length}, {n})"
            )));
        }
        let h = length / n as f64;
        let coords = (0..=n).map(|i| [i as f64 * h, 0.0]).collect();
        let conn = (0..n).flat_map(|e| [e, e + 1]).collect();
        let facets = vec![
            Facet { tag: "left".into(), nodes: vec![0] },
            Facet { tag: "right".into(), nodes: vec![n] },
        ];
        Self::assemble(1, coords, conn, facets)
    }

    /// `[0, lx] x [0, ly]` with `nx x ny` cells, each cut into two triangles
    /// along its rising diagonal. Facets are tagged `bottom`, `right`, `top`,
    /// `left`.
    pub fn rectangle(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Self, FemError> {
        if !(lx > 0.0 && ly > 0.0) || nx == 0 || ny == 0 {
            return Err(FemError::BadSpec(format!(
                "rectangle needs positive extent and resolution (got {lx}x{ly}, {nx}x{ny})"
            )));
        }
        let id = |i: usize, j: usize| j * (nx + 1) + i;
        let mut coords = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                coords.push([lx * i as f64 / nx as f64, ly * j as f64 / ny as f64]);
            }
        }
        let mut conn = Vec::with_capacity(6 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let (n0, n1, n2, n3) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
                conn.extend_from_slice(&[n0, n1, n2, n0, n2, n3]);
            }
        }
        let mut facets = Vec::new();
        let mut edge = |tag: &str, a: usize, b: usize| {
            facets.push(Facet { tag: tag.into(), nodes: vec![a, b] });
        };
        for i in 0..nx {
            edge("bottom", id(i, 0), id(i + 1, 0));
        }
        for j in 0..ny {
            edge("right", id(nx, j), id(nx, j + 1));
        }
        for i in (0..nx).rev() {
            edge("top", id(i + 1, ny), id(i, ny));
        }
        for j in (0..ny).rev() {
            edge("left", id(0, j + 1), id(0, j));
        }
        Self::assemble(2, coords, conn, facets)
    }

    pub fn from_file(path: &Path) -> Result<Self, FemError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| FemError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Plain-text mesh: header `dim n_nodes n_elems`, then node coordinates,
    /// element connectivity (1-based) and boundary facets `tag node...`.
    /// Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, FemError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let bad = |line: usize, msg: String| FemError::FileFormat { line, msg };

        let (hl, header) = lines.next().ok_or_else(|| bad(0, "empty mesh file".into()))?;
        let head: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse())
            .collect::<Result<_, _>>()
            .map_err(|e| bad(hl, format!("header: {e}")))?;
        let [dim, nn, ne] = head[..] else {
            return Err(bad(hl, "header must be `dim n_nodes n_elems`".into()));
        };
        if !(1..=2).contains(&dim) {
            return Err(bad(hl, format!("unsupported dimension {dim}")));
        }
        let mut coords = Vec::with_capacity(nn);
        for _ in 0..nn {
            let (ln, l) = lines.next().ok_or_else(|| bad(0, "missing node lines".into()))?;
            let x: Vec<f64> = l
                .split_whitespace()
                .map(|t| t.parse())
                .collect::<Result<_, _>>()
                .map_err(|e| bad(ln, format!("node: {e}")))?;
            if x.len() != dim {
                return Err(bad(ln, format!("node needs {dim} coordinates")));
            }
            coords.push([x[0], if dim == 2 { x[1] } else { 0.0 }]);
        }
        let index = |ln: usize, t: &str| -> Result<usize, FemError> {
            let i: usize = t.parse().map_err(|e| bad(ln, format!("index: {e}")))?;
            if i == 0 || i > nn {
                return Err(bad(ln, format!("node index {i} out of range 1..={nn}")));
            }
            Ok(i - 1)
        };
        let mut conn = Vec::with_capacity(ne * (dim + 1));
        for _ in 0..ne {
            let (ln, l) = lines.next().ok_or_else(|| bad(0, "missing element lines".into()))?;
            let ids: Vec<&str> = l.split_whitespace().collect();
            if ids.len() != dim + 1 {
                return Err(bad(ln, format!("element needs {} nodes", dim + 1)));
            }
            for t in ids {
                conn.push(index(ln, t)?);
            }
        }
        let mut facets = Vec::new();
        for (ln, l) in lines {
            let mut it = l.split_whitespace();
            let tag = it.next().unwrap_or_default().to_string();
            let nodes = it.map(|t| index(ln, t)).collect::<Result<Vec<_>, _>>()?;
            if nodes.len() != dim {
                return Err(bad(ln, format!("facet needs {dim} nodes")));
            }
            facets.push(Facet { tag, nodes });
        }
        let mesh = Self::assemble(dim, coords, conn, facets)?;
        mesh.check_facets()?;
        Ok(mesh)
    }

    fn assemble(
        dim: usize,
        coords: Vec<[f64; 2]>,
        mut conn: Vec<usize>,
        facets: Vec<Facet>,
    ) -> Result<Self, FemError> {
        let nv = dim + 1;
        let mut geom = Vec::with_capacity(conn.len() / nv);
        for e in 0..conn.len() / nv {
            let el = &mut conn[e * nv..(e + 1) * nv];
            let mut g = element_geometry(dim, &coords, el);
            if g.measure < 0.0 {
                // reorient
                el.swap(0, 1);
                g = element_geometry(dim, &coords, el);
            }
            if !(g.measure > 0.0) {
                return Err(FemError::BadSpec(format!("element {e} is degenerate")));
            }
            geom.push(g);
        }
        Ok(Self { dim, coords, conn, facets, geom })
    }

    fn check_facets(&self) -> Result<(), FemError> {
        let nv = self.dim + 1;
        for f in &self.facets {
            let owners = (0..self.n_elems())
                .filter(|&e| f.nodes.iter().all(|n| self.element(e).contains(n)))
                .count();
            if owners != 1 {
                return Err(FemError::BadSpec(format!(
                    "facet {:?} ({}) belongs to {owners} elements",
                    f.nodes, f.tag
                )));
            }
            debug_assert!(f.nodes.len() == nv - 1);
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_nodes(&self) -> usize {
        self.coords.len()
    }

    pub fn n_elems(&self) -> usize {
        self.geom.len()
    }

    pub fn nodes_per_elem(&self) -> usize {
        self.dim + 1
    }

    pub fn coord(&self, node: usize) -> [f64; 2] {
        self.coords[node]
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    pub fn element(&self, e: usize) -> &[usize] {
        let nv = self.dim + 1;
        &self.conn[e * nv..(e + 1) * nv]
    }

    pub fn geometry(&self, e: usize) -> &ElemGeom {
        &self.geom[e]
    }

    pub fn facets(&self) -> &[Facet] {
        &self.facets
    }

    pub fn facets_tagged<'a>(&'a self, tag: &'a str) -> impl Iterator<Item = &'a Facet> + 'a {
        self.facets.iter().filter(move |f| f.tag == tag)
    }

    /// Nodes on facets with the given tag, sorted and deduplicated.
    pub fn tagged_nodes(&self, tag: &str) -> Vec<usize> {
        let mut v: Vec<usize> = self.facets_tagged(tag).flat_map(|f| f.nodes.clone()).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn has_tag(&self, tag: &str) -> bool {
        self.facets.iter().any(|f| f.tag == tag)
    }

    /// Length (2D) or unit weight (1D) of a facet.
    pub fn facet_measure(&self, f: &Facet) -> f64 {
        if self.dim == 1 {
            1.0
        } else {
            let (a, b) = (self.coords[f.nodes[0]], self.coords[f.nodes[1]]);
            ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
        }
    }

    pub fn volume(&self) -> f64 {
        self.geom.iter().map(|g| g.measure).sum()
    }

    /// Smallest element diameter proxy: `measure^(1/d)`.
    pub fn min_size(&self) -> f64 {
        self.geom
            .iter()
            .map(|g| g.measure.powf(1.0 / self.dim as f64))
            .fold(f64::INFINITY, f64::min)
    }

    /// Node adjacency through shared elements, including the node itself.
    pub fn node_neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n_nodes()];
        for e in 0..self.n_elems() {
            let el = self.element(e);
            for &a in el {
                adj[a].extend_from_slice(el);
            }
        }
        for a in &mut adj {
            a.sort_unstable();
            a.dedup();
        }
        adj
    }

    /// Physical point with barycentric coordinates `bary` in element `e`.
    pub fn point(&self, e: usize, bary: &[f64]) -> [f64; 2] {
        let mut x = [0.0; 2];
        for (a, &n) in self.element(e).iter().enumerate() {
            x[0] += bary[a] * self.coords[n][0];
            x[1] += bary[a] * self.coords[n][1];
        }
        x
    }
}

fn element_geometry(dim: usize, coords: &[[f64; 2]], el: &[usize]) -> ElemGeom {
    if dim == 1 {
        let h = coords[el[1]][0] - coords[el[0]][0];
        return ElemGeom {
            measure: h,
            grads: [[-1.0 / h, 0.0], [1.0 / h, 0.0], [0.0; 2]],
        };
    }
    let (p0, p1, p2) = (coords[el[0]], coords[el[1]], coords[el[2]]);
    let (x1, y1) = (p1[0] - p0[0], p1[1] - p0[1]);
    let (x2, y2) = (p2[0] - p0[0], p2[1] - p0[1]);
    let det = x1 * y2 - x2 * y1;
    let g1 = [y2 / det, -x2 / det];
    let g2 = [-y1 / det, x1 / det];
    ElemGeom {
        measure: 0.5 * det,
        grads: [[-g1[0] - g2[0], -g1[1] - g2[1]], g1, g2],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn interval_counts() {
        let m = Mesh::interval(1.0, 4).unwrap();
        assert_eq!((m.n_nodes(), m.n_elems()), (5, 4));
        assert_relative_eq!(m.volume(), 1.0, max_relative = 1e-14);
        assert_eq!(m.tagged_nodes("right"), vec![4]);
    }

    #[test]
    fn rectangle_counts_and_area() {
        let m = Mesh::rectangle(1.0, 1.0, 2, 2).unwrap();
        assert_eq!((m.n_nodes(), m.n_elems()), (9, 8));
        assert_relative_eq!(m.volume(), 1.0, max_relative = 1e-14);
        let m = Mesh::rectangle(2.5, 0.7, 7, 3).unwrap();
        assert_eq!(m.n_nodes(), 32);
        assert_relative_eq!(m.volume(), 2.5 * 0.7, max_relative = 1e-12);
        assert!((0..m.n_elems()).all(|e| m.geometry(e).measure > 0.0));
        assert_eq!(m.tagged_nodes("left").len(), 4);
        assert_eq!(m.facets().len(), 2 * (7 + 3));
    }

    #[test]
    fn gradients_sum_to_zero_and_reproduce_linears() {
        let m = Mesh::rectangle(1.0, 2.0, 3, 2).unwrap();
        for e in 0..m.n_elems() {
            let g = m.geometry(e);
            for j in 0..2 {
                let s: f64 = (0..3).map(|a| g.grads[a][j]).sum();
                assert!(s.abs() < 1e-12);
                // gradient of x_j interpolated is e_j
                for i in 0..2 {
                    let d: f64 = m
                        .element(e)
                        .iter()
                        .enumerate()
                        .map(|(a, &n)| m.coord(n)[i] * g.grads[a][j])
                        .sum();
                    assert!((d - f64::from(u8::from(i == j))).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn bad_specs_rejected() {
        assert!(matches!(Mesh::interval(0.0, 3), Err(FemError::BadSpec(_))));
        assert!(matches!(Mesh::rectangle(1.0, 1.0, 0, 2), Err(FemError::BadSpec(_))));
    }

    #[test]
    fn file_mesh_round_trip() {
        let text = "2 4 2\n0 0\n1 0\n1 1\n0 1\n1 2 3\n1 4 3  # clockwise, reoriented\nbottom 1 2\nright 2 3\n";
        let m = Mesh::parse(text).unwrap();
        assert_eq!(m.n_elems(), 2);
        assert_relative_eq!(m.volume(), 1.0);
        assert_eq!(m.tagged_nodes("right"), vec![1, 2]);

        let err = Mesh::parse("2 3 1\n0 0\n1 0\n0 1\n1 2 7\n").unwrap_err();
        assert!(matches!(err, FemError::FileFormat { line: 5, .. }));
        // diagonal is interior, shared by two elements
        let err = Mesh::parse("2 4 2\n0 0\n1 0\n1 1\n0 1\n1 2 3\n1 3 4\ndiag 1 3\n").unwrap_err();
        assert!(matches!(err, FemError::BadSpec(_)));
    }
}
