//! Degree-2 element rules in barycentric coordinates. Weights are fractions
//! of the element measure and sum to one.

/// Quadrature point: barycentric coordinates (unused trailing entries are 0)
/// and weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadPoint {
    pub bary: [f64; 3],
    pub weight: f64,
}

const G: f64 = 0.211_324_865_405_187_1; // (1 - 1/sqrt 3) / 2

static SEGMENT: [QuadPoint; 2] = [
    QuadPoint { bary: [1.0 - G, G, 0.0], weight: 0.5 },
    QuadPoint { bary: [G, 1.0 - G, 0.0], weight: 0.5 },
];

static TRIANGLE: [QuadPoint; 3] = [
    QuadPoint { bary: [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0], weight: 1.0 / 3.0 },
    QuadPoint { bary: [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0], weight: 1.0 / 3.0 },
    QuadPoint { bary: [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0], weight: 1.0 / 3.0 },
];

static POINT: [QuadPoint; 1] = [QuadPoint { bary: [1.0, 0.0, 0.0], weight: 1.0 }];

/// Rule on a `dim`-simplex: 2-point Gauss on segments, the 3-point interior
/// rule on triangles.
pub fn element_rule(dim: usize) -> &'static [QuadPoint] {
    match dim {
        0 => &POINT,
        1 => &SEGMENT,
        2 => &TRIANGLE,
        _ => panic!("no rule for dimension {dim}"),
    }
}

/// Rule on a boundary facet of a `dim`-dimensional mesh.
pub fn facet_rule(dim: usize) -> &'static [QuadPoint] {
    element_rule(dim - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    // exact integral over the reference simplex of prod bary_i^k_i, as a
    // fraction of its measure: d! prod k_i! / (d + sum k)!
    fn exact(dim: usize, k: &[u32]) -> f64 {
        let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
        let s: u32 = k.iter().sum();
        fact(dim as u32) * k.iter().map(|&x| fact(x)).product::<f64>() / fact(dim as u32 + s)
    }

    #[test]
    fn rules_are_exact_to_degree_two() {
        for dim in 1..=2 {
            let rule = element_rule(dim);
            let nv = dim + 1;
            let mut monos = vec![vec![0u32; nv]];
            for i in 0..nv {
                let mut m = vec![0; nv];
                m[i] = 1;
                monos.push(m);
                for j in i..nv {
                    let mut m = vec![0; nv];
                    m[i] += 1;
                    m[j] += 1;
                    monos.push(m);
                }
            }
            for k in monos {
                let q: f64 = rule
                    .iter()
                    .map(|p| p.weight * (0..nv).map(|i| p.bary[i].powi(k[i] as i32)).product::<f64>())
                    .sum();
                assert!((q - exact(dim, &k)).abs() < 1e-15, "dim {dim} {k:?}");
            }
        }
    }
}
