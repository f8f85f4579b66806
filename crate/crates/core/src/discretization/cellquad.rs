//! Per-cell and per-facet quadrature with the Muckenhoupt weight folded into the weights.

use super::mesh::{Facet, Mesh, Point};
use super::weight::{WeightMode, WeightSpec};
use crate::quadrature::{gauss_legendre, gauss_legendre_on, weighted_rule, Rule};

#[derive(Clone, Debug, Default)]
pub struct PointRule {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
}

/// Barycentres of the cells under the weight (`∫_K w x / ∫_K w`). Sampling potentials there
/// removes the first-order sampling error next to a degenerate face.
pub fn weighted_centroids(mesh: &Mesh, weight: &WeightSpec) -> Vec<Point> {
    if weight.is_unit() {
        return (0..mesh.n_cells()).map(|c| mesh.cell_centroid(c)).collect();
    }
    let quad = CellQuadrature::new(mesh, Some(weight), 2);
    (0..mesh.n_cells())
        .map(|c| {
            let r = quad.cell(c);
            let total: f64 = r.weights.iter().sum();
            let mut x = [0.0; 3];
            for (p, w) in r.points.iter().zip(&r.weights) {
                for j in 0..mesh.dim {
                    x[j] += w * p[j] / total;
                }
            }
            x
        })
        .collect()
}

/// Builds quadrature rules for the cells of one mesh.
pub struct CellQuadrature<'a> {
    mesh: &'a Mesh,
    weight: Option<WeightSpec>,
    order: usize,
    /// Weighted vertical rules per layer (Vertical mode).
    layers: Vec<Rule>,
    /// Distance mode: one-sided Jacobi-type rules on `[0, h]` for the first and last cell per axis.
    edge_rules: Vec<(Rule, Rule)>,
    reference: Rule,
}

impl<'a> CellQuadrature<'a> {
    /// `weight = None` gives plain Gauss–Legendre (unweighted integrals).
    pub fn new(mesh: &'a Mesh, weight: Option<&WeightSpec>, order: usize) -> Self {
        let weight = weight.copied().filter(|w| !w.is_unit());
        let reference = gauss_legendre(order);
        let mut layers = vec![];
        let mut edge_rules = vec![];
        if let Some(w) = weight {
            let a = w.alpha();
            match w.mode {
                WeightMode::Vertical => {
                    let z = &mesh.coords[mesh.vertical()];
                    layers = z.windows(2).map(|p| weighted_rule(p[0], p[1], a, order)).collect();
                }
                WeightMode::DistanceToBoundary => {
                    for j in 0..mesh.dim {
                        let c = &mesh.coords[j];
                        let n = c.len() - 1;
                        edge_rules.push((
                            weighted_rule(0.0, c[1] - c[0], a, order + 1),
                            weighted_rule(0.0, c[n] - c[n - 1], a, order + 1),
                        ));
                    }
                }
            }
        }
        Self { mesh, weight, order, layers, edge_rules, reference }
    }

    pub fn mesh(&self) -> &Mesh {
        self.mesh
    }

    fn gl(&self, a: f64, b: f64) -> Rule {
        let (c, h) = ((a + b) / 2.0, (b - a) / 2.0);
        Rule {
            nodes: self.reference.nodes.iter().map(|x| c + h * x).collect(),
            weights: self.reference.weights.iter().map(|w| w * h).collect(),
        }
    }

    pub fn cell(&self, c: usize) -> PointRule {
        let m = self.mesh;
        let (lo, hi) = m.cell_bounds(c);
        let multi = m.cell_multi(c);
        let dim = m.dim;
        let mut axes: Vec<Rule> = Vec::with_capacity(dim);
        // per axis: Some(face coordinate) if a one-sided weighted rule is used
        let mut touching: Vec<Option<f64>> = vec![None; dim];
        match self.weight {
            None => {
                for j in 0..dim {
                    axes.push(self.gl(lo[j], hi[j]));
                }
            }
            Some(w) if w.mode == WeightMode::Vertical => {
                for j in 0..dim - 1 {
                    axes.push(self.gl(lo[j], hi[j]));
                }
                axes.push(self.layers[multi[dim - 1]].clone());
            }
            Some(_) => {
                let order = self.order + 1;
                for j in 0..dim {
                    let last = m.cells_on(j) - 1;
                    if multi[j] == 0 {
                        let r = &self.edge_rules[j].0;
                        axes.push(Rule { nodes: r.nodes.iter().map(|t| lo[j] + t).collect(), weights: r.weights.clone() });
                        touching[j] = Some(m.lo[j]);
                    } else if multi[j] == last {
                        let r = &self.edge_rules[j].1;
                        axes.push(Rule { nodes: r.nodes.iter().map(|t| hi[j] - t).collect(), weights: r.weights.clone() });
                        touching[j] = Some(m.hi[j]);
                    } else {
                        axes.push(gauss_legendre_on(lo[j], hi[j], order));
                    }
                }
            }
        }
        let mut out = PointRule::default();
        tensor(&axes, &mut |p, wt| {
            let wt = match self.weight {
                Some(w) if w.mode == WeightMode::DistanceToBoundary => {
                    let a = w.alpha();
                    let mut corr = w.eval(m, &p);
                    for j in 0..dim {
                        if let Some(face) = touching[j] {
                            corr /= (p[j] - face).abs().powf(a);
                        }
                    }
                    wt * corr
                }
                _ => wt,
            };
            out.points.push(p);
            out.weights.push(wt);
        });
        out
    }

    /// Unweighted surface rule on a boundary facet.
    pub fn facet(&self, f: &Facet) -> PointRule {
        let (a, b) = self.mesh.facet_bounds(f);
        let axes: Vec<Rule> = (0..self.mesh.dim)
            .map(|j| if j == f.axis { Rule { nodes: vec![a[j]], weights: vec![1.0] } } else { self.gl(a[j], b[j]) })
            .collect();
        let mut out = PointRule::default();
        tensor(&axes, &mut |p, w| {
            out.points.push(p);
            out.weights.push(w);
        });
        out
    }
}

fn tensor(axes: &[Rule], f: &mut impl FnMut(Point, f64)) {
    fn rec(axes: &[Rule], j: usize, p: &mut Point, w: f64, f: &mut impl FnMut(Point, f64)) {
        if j == axes.len() {
            f(*p, w);
            return;
        }
        for (x, wx) in axes[j].nodes.iter().zip(&axes[j].weights) {
            p[j] = *x;
            rec(axes, j + 1, p, w * wx, f);
        }
    }
    let mut p = [0.0; 3];
    rec(axes, 0, &mut p, 1.0, f);
}

/// Shape-function values and gradients of the multilinear cell at `x`.
/// Local node `b` sits at offset `(b >> j) & 1` along axis `j`.
pub fn shape(dim: usize, lo: &Point, hi: &Point, x: &Point, vals: &mut [f64], grads: &mut [[f64; 3]]) {
    let mut l = [[0.0; 2]; 3];
    let mut dl = [[0.0; 2]; 3];
    for j in 0..dim {
        let h = hi[j] - lo[j];
        l[j] = [(hi[j] - x[j]) / h, (x[j] - lo[j]) / h];
        dl[j] = [-1.0 / h, 1.0 / h];
    }
    for b in 0..(1 << dim) {
        let mut v = 1.0;
        let mut g = [1.0; 3];
        for j in 0..dim {
            let bj = (b >> j) & 1;
            v *= l[j][bj];
            for (k, gk) in g.iter_mut().enumerate().take(dim) {
                *gk *= if k == j { dl[j][bj] } else { l[j][bj] };
            }
        }
        vals[b] = v;
        grads[b] = if dim == 2 { [g[0], g[1], 0.0] } else { g };
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::mesh::build_graded_box;

    #[test]
    fn shape_partition_of_unity() {
        let lo = [0.0, 0.0, 0.0];
        let hi = [0.5, 0.25, 2.0];
        let mut v = [0.0; 8];
        let mut g = [[0.0; 3]; 8];
        shape(3, &lo, &hi, &[0.1, 0.2, 0.7], &mut v, &mut g);
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for k in 0..3 {
            assert!(g.iter().map(|gi| gi[k]).sum::<f64>().abs() < 1e-14);
        }
    }

    #[test]
    fn vertical_weight_total_mass() {
        let m = build_graded_box(&[1.0, 1.0], &[3, 5], 0.7).unwrap();
        let w = WeightSpec::vertical(0.75).unwrap();
        let q = CellQuadrature::new(&m, Some(&w), 2);
        let total: f64 = (0..m.n_cells()).map(|c| q.cell(c).weights.iter().sum::<f64>()).sum();
        assert!((total - 2.0).abs() < 1e-13);
    }
}
