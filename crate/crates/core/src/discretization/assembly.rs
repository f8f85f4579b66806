use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use super::cellquad::{shape, weighted_centroids, CellQuadrature};
use super::fields::Potentials;
use super::mesh::{BoundaryTag, DofPartition, Facet, Mesh};
use super::weight::WeightSpec;
use crate::error::Result;
use crate::linalg::CsrMatrix;

type C = Complex64;

const ZERO: C = C::new(0.0, 0.0);

/// Cell-wise constant coefficients of a general second-order form
/// `∫ w [ κ ∇u·∇v̄ + (b·∇u) v̄ − i v̄ A·∇u + i u A·∇v̄ + c u v̄ ]`.
#[derive(Clone, Copy, Debug)]
pub struct CellCoefficients {
    pub diffusion: f64,
    pub advection: [C; 3],
    pub magnetic: [f64; 3],
    pub reaction: C,
}

impl CellCoefficients {
    pub fn stiffness() -> Self {
        Self { diffusion: 1.0, advection: [ZERO; 3], magnetic: [0.0; 3], reaction: ZERO }
    }

    pub fn mass() -> Self {
        Self { diffusion: 0.0, advection: [ZERO; 3], magnetic: [0.0; 3], reaction: C::new(1.0, 0.0) }
    }
}

/// Assembles a cell form over `cells` (all cells if `None`). Element matrices are computed in
/// parallel and scattered serially in cell order, so the result is independent of threading.
pub fn assemble_cells<F>(mesh: &Mesh, weight: Option<&WeightSpec>, order: usize, cells: Option<&[usize]>, coeff: F) -> CsrMatrix
where
    F: Fn(usize) -> CellCoefficients + Sync,
{
    let quad = CellQuadrature::new(mesh, weight, order);
    let all: Vec<usize>;
    let cells = match cells {
        Some(c) => c,
        None => {
            all = (0..mesh.n_cells()).collect();
            &all
        }
    };
    let nb = mesh.nodes_per_cell();
    let dim = mesh.dim;
    let locals: Vec<(Vec<usize>, Vec<C>)> = cells
        .par_iter()
        .map(|&c| {
            let k = coeff(c);
            let (lo, hi) = mesh.cell_bounds(c);
            let rule = quad.cell(c);
            let mut a = vec![ZERO; nb * nb];
            let mut v = [0.0; 8];
            let mut g = [[0.0; 3]; 8];
            for (p, &wq) in rule.points.iter().zip(&rule.weights) {
                shape(dim, &lo, &hi, p, &mut v, &mut g);
                for ta in 0..nb {
                    let a_grad_a: f64 = (0..3).map(|j| k.magnetic[j] * g[ta][j]).sum();
                    for tb in 0..nb {
                        let dot: f64 = (0..3).map(|j| g[ta][j] * g[tb][j]).sum();
                        let adv: C = (0..3).map(|j| k.advection[j] * g[tb][j]).sum();
                        let a_grad_b: f64 = (0..3).map(|j| k.magnetic[j] * g[tb][j]).sum();
                        let mag = C::new(0.0, -v[ta] * a_grad_b + v[tb] * a_grad_a);
                        a[ta * nb + tb] += wq * (k.diffusion * dot + adv * v[ta] + mag + k.reaction * (v[ta] * v[tb]));
                    }
                }
            }
            (mesh.cell_nodes(c), a)
        })
        .collect();
    let mut t = Vec::with_capacity(locals.len() * nb * nb);
    for (nodes, a) in locals {
        for ta in 0..nb {
            for tb in 0..nb {
                t.push((nodes[ta], nodes[tb], a[ta * nb + tb]));
            }
        }
    }
    CsrMatrix::from_triplets(mesh.n_nodes(), mesh.n_nodes(), t)
}

/// `∫_{facets with tag} c u v̄ dS` with facet-wise constant `c`.
pub fn assemble_facets<F>(mesh: &Mesh, tag: Option<BoundaryTag>, coeff: F) -> CsrMatrix
where
    F: Fn(&Facet) -> C,
{
    let quad = CellQuadrature::new(mesh, None, 2);
    let mut t = vec![];
    let nb = mesh.nodes_per_cell();
    let mut v = [0.0; 8];
    let mut g = [[0.0; 3]; 8];
    for f in mesh.facets.iter().filter(|f| tag.is_none_or(|t| f.tag == t)) {
        let c = coeff(f);
        if c == ZERO {
            continue;
        }
        let (lo, hi) = mesh.cell_bounds(f.cell);
        let nodes = mesh.cell_nodes(f.cell);
        let rule = quad.facet(f);
        let mut a = vec![0.0; nb * nb];
        for (p, &wq) in rule.points.iter().zip(&rule.weights) {
            shape(mesh.dim, &lo, &hi, p, &mut v, &mut g);
            for ta in 0..nb {
                for tb in 0..nb {
                    a[ta * nb + tb] += wq * v[ta] * v[tb];
                }
            }
        }
        for ta in 0..nb {
            for tb in 0..nb {
                if a[ta * nb + tb] != 0.0 {
                    t.push((nodes[ta], nodes[tb], c * a[ta * nb + tb]));
                }
            }
        }
    }
    CsrMatrix::from_triplets(mesh.n_nodes(), mesh.n_nodes(), t)
}

/// Discrete realization of the form `B_{s,A,V,q}(u, v) − λ (u, v)_w`.
/// Rows are test functions: `B(u, v) = v̄ᵀ K u`.
#[derive(Clone, Debug)]
pub struct SystemAssembly {
    pub mesh: Arc<Mesh>,
    pub weight: WeightSpec,
    pub potentials: Potentials,
    pub lambda: f64,
    /// `K − λ M_w`, Σ₁ Robin term included, constraints not applied.
    pub matrix: CsrMatrix,
    /// Weighted mass matrix `M_w`.
    pub mass: CsrMatrix,
    /// The Robin part `∫_{Σ₁} q u v̄`.
    pub robin: CsrMatrix,
    pub partition: DofPartition,
}

impl SystemAssembly {
    /// Constrained trace dofs: Σ₂ and `Rest` nodes.
    pub fn dirichlet_dofs(&self) -> Vec<usize> {
        let mut d: Vec<usize> = self.partition.sigma2.iter().chain(&self.partition.zero).copied().collect();
        d.sort_unstable();
        d
    }

    pub fn n_dofs(&self) -> usize {
        self.mesh.n_nodes()
    }
}

/// Assembles the mixed problem. Potentials enter as samples at the weighted cell barycentres
/// (resp. Σ₁ facet centroids).
pub fn assemble(mesh: &Arc<Mesh>, weight: &WeightSpec, potentials: &Potentials, lambda: f64) -> Result<SystemAssembly> {
    weight.validate()?;
    mesh.validate()?;
    potentials.validate(mesh, weight)?;
    let v = potentials.v.compile();
    let q = potentials.q.compile();
    let a = potentials.a.clone().filter(|a| !a.is_zero());
    let order = 2;
    let centres = weighted_centroids(mesh, weight);
    let form = assemble_cells(mesh, Some(weight), order, None, |c| {
        let x = centres[c];
        let av = a.as_ref().map(|a| a.eval(&x)).unwrap_or([0.0; 3]);
        let a2: f64 = av.iter().map(|t| t * t).sum();
        CellCoefficients {
            diffusion: 1.0,
            advection: [ZERO; 3],
            magnetic: av,
            reaction: C::new(v.eval(&x) + a2 - lambda, 0.0),
        }
    });
    let mass = assemble_cells(mesh, Some(weight), order, None, |_| CellCoefficients::mass());
    let robin = assemble_facets(mesh, Some(BoundaryTag::Sigma1), |f| C::new(q.eval(&mesh.facet_centroid(f)), 0.0));
    let matrix = form.add_scaled(&robin, C::new(1.0, 0.0));
    Ok(SystemAssembly {
        mesh: mesh.clone(),
        weight: *weight,
        potentials: potentials.clone(),
        lambda,
        matrix,
        mass,
        robin,
        partition: mesh.partition(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::fields::{ScalarField, VectorField};
    use crate::discretization::mesh::build_graded_box;

    #[test]
    fn neumann_kernel_and_hermitian() {
        for &s in &[0.5, 0.6, 0.75, 0.9] {
            let mesh = Arc::new(build_graded_box(&[1.0, 1.0], &[6, 6], 0.7).unwrap());
            let asm = assemble(&mesh, &WeightSpec::vertical(s).unwrap(), &Potentials::zero(), 0.0).unwrap();
            let ones = vec![C::new(1.0, 0.0); mesh.n_nodes()];
            let r = asm.matrix.matvec(&ones);
            let scale = asm.matrix.frobenius_norm();
            assert!(r.iter().all(|x| x.norm() < 1e-12 * scale));
            assert!(asm.matrix.hermitian_defect() < 1e-14);
        }
    }

    #[test]
    fn magnetic_terms_are_hermitian_and_complex() {
        let mesh = Arc::new(build_graded_box(&[1.0, 1.0], &[6, 6], 1.0).unwrap());
        let pots = Potentials::new(ScalarField::constant(0.3), ScalarField::constant(0.2))
            .with_magnetic(VectorField::swirl_on(&mesh, 2.0));
        let asm = assemble(&mesh, &WeightSpec::vertical(0.5).unwrap(), &pots, 0.0).unwrap();
        assert!(asm.matrix.hermitian_defect() < 1e-12);
        assert!(asm.matrix.triplets().any(|(r, c, v)| r != c && v.im.abs() > 1e-6));
    }
}
