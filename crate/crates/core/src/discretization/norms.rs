use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::assembly::{assemble_cells, assemble_facets, CellCoefficients};
use super::cellquad::{shape, CellQuadrature};
use super::mesh::{BoundaryTag, Mesh, Point};
use super::weight::WeightSpec;
use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, SparseLu};

type C = Complex64;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedNorms {
    pub l2w: f64,
    /// Full weighted H¹ norm `(‖u‖² + ‖∇u‖²)^{1/2}`.
    pub h1w: f64,
    pub h1_seminorm: f64,
    pub l2_sigma1: f64,
    pub l2_boundary: f64,
}

/// Gram matrices of the weighted norms on one mesh.
#[derive(Clone, Debug)]
pub struct NormOperators {
    pub mass_w: CsrMatrix,
    pub stiff_w: CsrMatrix,
    pub mass_sigma1: CsrMatrix,
    pub mass_boundary: CsrMatrix,
}

impl NormOperators {
    pub fn new(mesh: &Mesh, weight: &WeightSpec) -> Self {
        let one = C::new(1.0, 0.0);
        Self {
            mass_w: assemble_cells(mesh, Some(weight), 2, None, |_| CellCoefficients::mass()),
            stiff_w: assemble_cells(mesh, Some(weight), 2, None, |_| CellCoefficients::stiffness()),
            mass_sigma1: assemble_facets(mesh, Some(BoundaryTag::Sigma1), |_| one),
            mass_boundary: assemble_facets(mesh, None, |_| one),
        }
    }

    pub fn norms(&self, u: &[C]) -> WeightedNorms {
        let q = |m: &CsrMatrix| m.form(u, u).re.max(0.0);
        let (l2, semi) = (q(&self.mass_w), q(&self.stiff_w));
        WeightedNorms {
            l2w: l2.sqrt(),
            h1w: (l2 + semi).sqrt(),
            h1_seminorm: semi.sqrt(),
            l2_sigma1: q(&self.mass_sigma1).sqrt(),
            l2_boundary: q(&self.mass_boundary).sqrt(),
        }
    }
}

/// Weighted norms of a nodal field.
pub fn weighted_norms(u: &[C], mesh: &Mesh, weight: &WeightSpec) -> WeightedNorms {
    NormOperators::new(mesh, weight).norms(u)
}

/// Value and gradient of a nodal field inside cell `c`.
pub fn eval_in_cell(mesh: &Mesh, c: usize, u: &[C], x: &Point) -> (C, [C; 3]) {
    let (lo, hi) = mesh.cell_bounds(c);
    let mut v = [0.0; 8];
    let mut g = [[0.0; 3]; 8];
    shape(mesh.dim, &lo, &hi, x, &mut v, &mut g);
    let mut val = C::new(0.0, 0.0);
    let mut grad = [C::new(0.0, 0.0); 3];
    for (b, n) in mesh.cell_nodes(c).into_iter().enumerate() {
        val += u[n] * v[b];
        for j in 0..3 {
            grad[j] += u[n] * g[b][j];
        }
    }
    (val, grad)
}

/// Locates the cell containing `x` (closed cells, lowest index wins).
pub fn locate(mesh: &Mesh, x: &Point) -> Option<usize> {
    let mut m = [0usize; 3];
    for j in 0..mesh.dim {
        let c = &mesh.coords[j];
        if x[j] < c[0] - 1e-12 || x[j] > c[c.len() - 1] + 1e-12 {
            return None;
        }
        let k = c.partition_point(|&t| t <= x[j]);
        m[j] = k.saturating_sub(1).min(c.len() - 2);
    }
    Some(mesh.cell_index(m))
}

/// Evaluates a nodal field at an arbitrary point of the box.
pub fn eval_field(mesh: &Mesh, u: &[C], x: &Point) -> Option<C> {
    locate(mesh, x).map(|c| eval_in_cell(mesh, c, u, x).0)
}

/// Weighted `L²` and `H¹`-seminorm errors against an analytic solution, by `order`-point
/// cell quadrature. Returns `(‖u_h − u‖_{L²w}, ‖∇(u_h − u)‖_{L²w})`.
pub fn error_norms<F, G>(mesh: &Mesh, weight: &WeightSpec, u: &[C], order: usize, exact: F, grad: G) -> (f64, f64)
where
    F: Fn(&Point) -> C,
    G: Fn(&Point) -> [C; 3],
{
    let quad = CellQuadrature::new(mesh, Some(weight), order);
    let (mut e0, mut e1) = (0.0, 0.0);
    for c in 0..mesh.n_cells() {
        let rule = quad.cell(c);
        for (p, &w) in rule.points.iter().zip(&rule.weights) {
            let (uh, gh) = eval_in_cell(mesh, c, u, p);
            e0 += w * (uh - exact(p)).norm_sqr();
            let ge = grad(p);
            e1 += w * (0..mesh.dim).map(|j| (gh[j] - ge[j]).norm_sqr()).sum::<f64>();
        }
    }
    (e0.sqrt(), e1.sqrt())
}

/// Discrete weighted-harmonic extension of boundary data: solves `∇·(w∇u) = 0` with
/// `u = g` on every boundary node. `g` is indexed like `mesh.partition().boundary`.
pub fn extend_trace(g: &[C], mesh: &Mesh, weight: &WeightSpec) -> Result<Vec<C>> {
    let part = mesh.partition();
    if g.len() != part.boundary.len() {
        return Err(Error::InvalidInput(format!("trace has {} values, expected {}", g.len(), part.boundary.len())));
    }
    let k = assemble_cells(mesh, Some(weight), 2, None, |_| CellCoefficients::stiffness());
    let n = mesh.n_nodes();
    let mut is_bnd = vec![false; n];
    let mut u = vec![C::new(0.0, 0.0); n];
    for (&i, &gi) in part.boundary.iter().zip(g) {
        is_bnd[i] = true;
        u[i] = gi;
    }
    let interior: Vec<usize> = (0..n).filter(|&i| !is_bnd[i]).collect();
    if interior.is_empty() {
        return Ok(u);
    }
    let kii = k.submatrix(&interior, &interior);
    let kib = k.submatrix(&interior, &part.boundary);
    let rhs: Vec<C> = kib.matvec(g).into_iter().map(|x| -x).collect();
    let lu = SparseLu::new(&kii).map_err(|e| Error::SolverBreakdown(format!("extension: {e}")))?;
    for (&i, v) in interior.iter().zip(lu.solve(&rhs)) {
        u[i] = v;
    }
    Ok(u)
}
