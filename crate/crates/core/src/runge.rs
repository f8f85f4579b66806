//! Simultaneous boundary/bulk Runge approximation by solutions driven from Σ₂, and the
//! Liouville-transform consistency check.

use faer::{Mat, Side};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discretization::mesh::{BoundaryTag, Mesh, Point};
use crate::discretization::{assemble_cells, assemble_facets, CellCoefficients, ScalarField, SystemAssembly};
use crate::error::{Error, Result};
use crate::forward::Solver;
use crate::linalg::{norm2, tikhonov_lstsq, CsrMatrix, SparseLu};

type C = Complex64;
const ZERO: C = C::new(0.0, 0.0);

pub const DEFAULT_FRACTION: f64 = 0.4;

/// Cell-aligned sub-box strictly inside the domain.
#[derive(Clone, Debug, PartialEq)]
pub struct Subdomain {
    /// Cell index range `[a, b)` per axis.
    pub ranges: Vec<(usize, usize)>,
    pub cells: Vec<usize>,
    /// All nodes of the closed sub-box, ascending.
    pub nodes: Vec<usize>,
    pub interior_nodes: Vec<usize>,
    pub boundary_nodes: Vec<usize>,
}

impl Subdomain {
    pub fn from_ranges(mesh: &Mesh, ranges: &[(usize, usize)]) -> Result<Self> {
        if ranges.len() != mesh.dim {
            return Err(Error::InvalidInput("one cell range per axis required".into()));
        }
        for (j, &(a, b)) in ranges.iter().enumerate() {
            if a == 0 || b >= mesh.cells_on(j) || a >= b {
                return Err(Error::SubdomainTouchesBoundary);
            }
        }
        let cells = mesh.cells_in_range(ranges);
        let (mut nodes, mut interior, mut boundary) = (vec![], vec![], vec![]);
        for i in 0..mesh.n_nodes() {
            let m = mesh.node_multi(i);
            if (0..mesh.dim).all(|j| m[j] >= ranges[j].0 && m[j] <= ranges[j].1) {
                nodes.push(i);
                if (0..mesh.dim).all(|j| m[j] > ranges[j].0 && m[j] < ranges[j].1) {
                    interior.push(i);
                } else {
                    boundary.push(i);
                }
            }
        }
        Ok(Self { ranges: ranges.to_vec(), cells, nodes, interior_nodes: interior, boundary_nodes: boundary })
    }

    /// Sub-box covering the middle `fraction` of every axis, snapped to mesh lines.
    /// [`DEFAULT_FRACTION`] keeps a clearance of 0.3 box lengths to every face.
    pub fn centered(mesh: &Mesh, fraction: f64) -> Result<Self> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(Error::InvalidInput(format!("subdomain fraction {fraction} not in (0, 1)")));
        }
        let ranges: Vec<(usize, usize)> = (0..mesh.dim)
            .map(|j| {
                let c = &mesh.coords[j];
                let (lo, hi) = (c[0], c[c.len() - 1]);
                let mid = 0.5 * (lo + hi);
                let half = 0.5 * fraction * (hi - lo);
                let snap = |t: f64| (0..c.len()).min_by(|&a, &b| (c[a] - t).abs().partial_cmp(&(c[b] - t).abs()).unwrap()).unwrap();
                let a = snap(mid - half).max(1);
                let b = snap(mid + half).min(c.len() - 2).max(a + 1);
                (a, b)
            })
            .collect();
        Self::from_ranges(mesh, &ranges)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DictionaryFamily {
    /// Σ₂ hat functions in farthest-point order.
    Hats,
    /// Gaussian bumps centred at the same points.
    Bumps,
    /// Random smooth fields sampled on Σ₂.
    RandomSmooth,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BulkTopology {
    #[default]
    L2,
    H1bulk,
}

/// Σ₂ inputs and their solutions with restrictions to Σ₁ and Ω₁.
#[derive(Clone, Debug)]
pub struct Dictionary {
    pub family: DictionaryFamily,
    /// `|Σ₂| × N`.
    pub inputs: Mat<C>,
    /// `n_nodes × N` full solutions.
    pub solutions: Mat<C>,
    pub sigma1_nodes: Vec<usize>,
    pub omega1: Subdomain,
}

impl Dictionary {
    pub fn len(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The first `n` members (dictionaries are nested by construction).
    pub fn prefix(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            family: self.family,
            inputs: self.inputs.subcols(0, n).to_owned(),
            solutions: self.solutions.subcols(0, n).to_owned(),
            sigma1_nodes: self.sigma1_nodes.clone(),
            omega1: self.omega1.clone(),
        }
    }

    fn rows(&self, nodes: &[usize]) -> Mat<C> {
        Mat::from_fn(nodes.len(), self.len(), |i, j| self.solutions[(nodes[i], j)])
    }

    pub fn boundary_restriction(&self) -> Mat<C> {
        self.rows(&self.sigma1_nodes)
    }

    pub fn bulk_restriction(&self) -> Mat<C> {
        self.rows(&self.omega1.nodes)
    }

    pub fn member(&self, j: usize) -> Vec<C> {
        self.solutions.col(j).iter().copied().collect()
    }
}

/// Greedy farthest-point ordering of points, starting from the first one.
pub fn spread_order(points: &[Point]) -> Vec<usize> {
    let n = points.len();
    if n == 0 {
        return vec![];
    }
    let d2 = |a: &Point, b: &Point| (0..3).map(|j| (a[j] - b[j]).powi(2)).sum::<f64>();
    let mut order = vec![0];
    let mut dmin: Vec<f64> = points.iter().map(|p| d2(p, &points[0])).collect();
    for _ in 1..n {
        let mut best = 0;
        for i in 0..n {
            if dmin[i] > dmin[best] {
                best = i;
            }
        }
        order.push(best);
        for i in 0..n {
            dmin[i] = dmin[i].min(d2(&points[i], &points[best]));
        }
    }
    order
}

pub fn build_dictionary(asm: &SystemAssembly, omega1: &Subdomain, n: usize, family: DictionaryFamily, seed: u64) -> Result<Dictionary> {
    let solver = Solver::new(asm)?;
    build_dictionary_with(&solver, omega1, n, family, seed)
}

pub fn build_dictionary_with(solver: &Solver, omega1: &Subdomain, n: usize, family: DictionaryFamily, seed: u64) -> Result<Dictionary> {
    let asm = solver.assembly();
    let mesh = &asm.mesh;
    let s2 = &asm.partition.sigma2;
    let pts: Vec<Point> = s2.iter().map(|&i| mesh.vertex(i)).collect();
    let order = spread_order(&pts);
    if n == 0 || (family == DictionaryFamily::Hats && n > s2.len()) {
        return Err(Error::InvalidInput(format!("dictionary size {n} not in 1..={}", s2.len())));
    }
    let diam = (0..mesh.dim).map(|j| mesh.lengths[j].powi(2)).sum::<f64>().sqrt();
    let width = 0.08 * diam;
    let inputs = Mat::<C>::from_fn(s2.len(), n, |i, j| match family {
        DictionaryFamily::Hats => C::new(if i == order[j] { 1.0 } else { 0.0 }, 0.0),
        DictionaryFamily::Bumps => {
            let c = pts[order[j % pts.len()]];
            let r2: f64 = (0..3).map(|k| (pts[i][k] - c[k]).powi(2)).sum();
            C::new((-r2 / (2.0 * width * width)).exp(), 0.0)
        }
        DictionaryFamily::RandomSmooth => C::new(0.0, 0.0),
    });
    let inputs = if family == DictionaryFamily::RandomSmooth {
        let fields: Vec<_> = (0..n).map(|j| ScalarField::random_smooth(1.0, 8, seed.wrapping_add(j as u64)).compile()).collect();
        Mat::<C>::from_fn(s2.len(), n, |i, j| C::new(fields[j].eval(&pts[i]), 0.0))
    } else {
        inputs
    };
    let solutions = solver.poisson_many(&inputs);
    Ok(Dictionary { family, inputs, solutions, sigma1_nodes: asm.partition.sigma1.clone(), omega1: omega1.clone() })
}

/// Relative residual of the interior equation on Ω₁ for a nodal field.
pub fn interior_residual(asm: &SystemAssembly, omega1: &Subdomain, u: &[C]) -> f64 {
    let ku = asm.matrix.matvec(u);
    let r: Vec<C> = omega1.interior_nodes.iter().map(|&i| ku[i]).collect();
    let scale: f64 = omega1
        .interior_nodes
        .iter()
        .map(|&i| {
            let (cols, vals) = asm.matrix.row(i);
            cols.iter().zip(vals).map(|(&c, v)| (v * u[c]).norm()).sum::<f64>().powi(2)
        })
        .sum::<f64>()
        .sqrt();
    if scale == 0.0 {
        0.0
    } else {
        norm2(&r) / scale
    }
}

/// Local solution on Ω₁ with random smooth Dirichlet data on ∂Ω₁; values on `omega1.nodes`.
pub fn bulk_target(asm: &SystemAssembly, omega1: &Subdomain, seed: u64) -> Result<Vec<C>> {
    let f = ScalarField::random_smooth(1.0, 6, seed).compile();
    bulk_target_with(asm, omega1, |p| C::new(f.eval(p), 0.0))
}

pub fn bulk_target_with(asm: &SystemAssembly, omega1: &Subdomain, data: impl Fn(&Point) -> C) -> Result<Vec<C>> {
    let mesh = &asm.mesh;
    let ii = &omega1.interior_nodes;
    let bb = &omega1.boundary_nodes;
    let g: Vec<C> = bb.iter().map(|&i| data(&mesh.vertex(i))).collect();
    let mut vals = vec![ZERO; mesh.n_nodes()];
    for (&i, &v) in bb.iter().zip(&g) {
        vals[i] = v;
    }
    if !ii.is_empty() {
        let kii = asm.matrix.submatrix(ii, ii);
        let kib = asm.matrix.submatrix(ii, bb);
        let rhs: Vec<C> = kib.matvec(&g).into_iter().map(|v| -v).collect();
        let lu = SparseLu::new(&kii).map_err(|e| Error::SolverBreakdown(format!("local Ω₁ problem: {e}")))?;
        for (&i, v) in ii.iter().zip(lu.solve(&rhs)) {
            vals[i] = v;
        }
    }
    Ok(omega1.nodes.iter().map(|&i| vals[i]).collect())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitReport {
    pub coefficients: Vec<C>,
    pub boundary_error: f64,
    pub bulk_error: f64,
    /// `(boundary_error² + bulk_error²)^{1/2}`.
    pub combined_error: f64,
    pub alpha: f64,
    pub n: usize,
    /// `σ_max / σ_min` of the whitened stacked system.
    pub condition: f64,
    pub ill_conditioned: bool,
}

/// Hermitian square root of a PSD matrix (clipping tiny negative eigenvalues).
fn sqrt_psd(m: &Mat<C>) -> Result<Mat<C>> {
    let evd = m.self_adjoint_eigen(Side::Lower).map_err(|e| Error::SolverBreakdown(format!("dense eigensolver: {e:?}")))?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let n = m.nrows();
    let r: Vec<f64> = (0..n).map(|i| s[i].re.max(0.0).sqrt()).collect();
    Ok(Mat::from_fn(n, n, |i, j| (0..n).map(|k| u[(i, k)] * r[k] * u[(j, k)].conj()).sum()))
}

fn gram(m: &CsrMatrix, nodes: &[usize]) -> Mat<C> {
    m.submatrix(nodes, nodes).to_dense()
}

/// Norm Gram matrices on Σ₁ and Ω₁.
pub struct FitNorms {
    boundary: Mat<C>,
    bulk: Mat<C>,
    boundary_gram: Mat<C>,
    bulk_gram: Mat<C>,
}

impl FitNorms {
    pub fn new(asm: &SystemAssembly, dict: &Dictionary, topology: BulkTopology) -> Result<Self> {
        let mesh = &asm.mesh;
        let mb = assemble_facets(mesh, Some(BoundaryTag::Sigma1), |_| C::new(1.0, 0.0));
        let diff = if topology == BulkTopology::H1bulk { 1.0 } else { 0.0 };
        let mv = assemble_cells(mesh, Some(&asm.weight), 2, Some(&dict.omega1.cells), |_| CellCoefficients {
            diffusion: diff,
            reaction: C::new(1.0, 0.0),
            ..CellCoefficients::stiffness()
        });
        let boundary_gram = gram(&mb, &dict.sigma1_nodes);
        let bulk_gram = gram(&mv, &dict.omega1.nodes);
        Ok(Self { boundary: sqrt_psd(&boundary_gram)?, bulk: sqrt_psd(&bulk_gram)?, boundary_gram, bulk_gram })
    }

    fn norm(g: &Mat<C>, x: &[C]) -> f64 {
        let n = x.len();
        let mut s = ZERO;
        for j in 0..n {
            for i in 0..n {
                s += x[i].conj() * g[(i, j)] * x[j];
            }
        }
        s.re.max(0.0).sqrt()
    }

    pub fn boundary_norm(&self, x: &[C]) -> f64 {
        Self::norm(&self.boundary_gram, x)
    }

    pub fn bulk_norm(&self, x: &[C]) -> f64 {
        Self::norm(&self.bulk_gram, x)
    }
}

fn mat_vec(m: &Mat<C>, x: &[C]) -> Vec<C> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)] * x[j]).sum()).collect()
}

/// Tikhonov fit of `(t₁ on Σ₁, t₂ on Ω₁)` by dictionary combinations. Each block is
/// measured in its own norm and normalized by the target's norm. `alpha = None` uses
/// `1e-10 σ_max²`; `bulk_weight = 0` gives the boundary-only fit.
pub fn weighted_fit(norms: &FitNorms, dict: &Dictionary, t1: &[C], t2: &[C], alpha: Option<f64>, bulk_weight: f64) -> Result<FitReport> {
    let pb = dict.boundary_restriction();
    let pv = dict.bulk_restriction();
    if t1.len() != pb.nrows() || t2.len() != pv.nrows() {
        return Err(Error::InvalidInput("target sizes do not match Σ₁ / Ω₁ dofs".into()));
    }
    let n1 = norms.boundary_norm(t1);
    let n2 = norms.bulk_norm(t2);
    let s1 = if n1 > 0.0 { 1.0 / n1 } else { 1.0 };
    let s2 = bulk_weight * if n2 > 0.0 { 1.0 / n2 } else { 1.0 };
    let ab = &norms.boundary * &pb;
    let av = &norms.bulk * &pv;
    let (rb, rv) = (ab.nrows(), av.nrows());
    let a = Mat::<C>::from_fn(rb + rv, dict.len(), |i, j| if i < rb { ab[(i, j)] * s1 } else { av[(i - rb, j)] * s2 });
    let mut rhs = mat_vec(&norms.boundary, t1).into_iter().map(|v| v * s1).collect::<Vec<_>>();
    rhs.extend(mat_vec(&norms.bulk, t2).into_iter().map(|v| v * s2));
    let (coef0, sig) = tikhonov_lstsq(&a, &rhs, 0.0)?;
    let smax = sig.iter().cloned().fold(0.0, f64::max);
    let smin = sig.iter().cloned().fold(f64::INFINITY, f64::min);
    let alpha = alpha.unwrap_or(1e-10 * smax * smax);
    let coefficients = if alpha == 0.0 { coef0 } else { tikhonov_lstsq(&a, &rhs, alpha)?.0 };
    let rel = |e: f64, n: f64| if n > 0.0 { e / n } else { e };
    let eb: Vec<C> = mat_vec(&pb, &coefficients).iter().zip(t1).map(|(x, t)| x - t).collect();
    let ev: Vec<C> = mat_vec(&pv, &coefficients).iter().zip(t2).map(|(x, t)| x - t).collect();
    let boundary_error = rel(norms.boundary_norm(&eb), n1);
    let bulk_error = rel(norms.bulk_norm(&ev), n2);
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if condition > 1e12 {
        log::warn!("Runge fit is ill-conditioned (condition {condition:.3e})");
    }
    Ok(FitReport {
        coefficients,
        boundary_error,
        bulk_error,
        combined_error: boundary_error.hypot(bulk_error),
        alpha,
        n: dict.len(),
        condition,
        ill_conditioned: condition > 1e12,
    })
}

pub fn simultaneous_fit(asm: &SystemAssembly, dict: &Dictionary, t1: &[C], t2: &[C], alpha: Option<f64>, topology: BulkTopology) -> Result<FitReport> {
    weighted_fit(&FitNorms::new(asm, dict, topology)?, dict, t1, t2, alpha, 1.0)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RungeStudy {
    pub family: DictionaryFamily,
    pub joint: Vec<FitReport>,
    /// Fits of the boundary target alone, with their (unfitted) bulk errors.
    pub boundary_only: Vec<FitReport>,
}

/// Nested-N study for `t₁ = 1` on Σ₁ and a random local solution on Ω₁.
pub fn runge_study(asm: &SystemAssembly, omega1: &Subdomain, family: DictionaryFamily, sizes: &[usize], alpha: Option<f64>, topology: BulkTopology, seed: u64) -> Result<RungeStudy> {
    let nmax = sizes.iter().copied().max().unwrap_or(0);
    let full = build_dictionary(asm, omega1, nmax, family, seed)?;
    let t1 = vec![C::new(1.0, 0.0); full.sigma1_nodes.len()];
    let t2 = bulk_target(asm, omega1, seed)?;
    let norms = FitNorms::new(asm, &full, topology)?;
    let pairs: Vec<(FitReport, FitReport)> = sizes
        .par_iter()
        .map(|&n| {
            let d = full.prefix(n);
            Ok((weighted_fit(&norms, &d, &t1, &t2, alpha, 1.0)?, weighted_fit(&norms, &d, &t1, &t2, alpha, 0.0)?))
        })
        .collect::<Result<_>>()?;
    let (joint, boundary_only) = pairs.into_iter().unzip();
    Ok(RungeStudy { family, joint, boundary_only })
}

/// Relative residual of `−Δw + (Q + V) w = 0` for `w = ρ u` on a strictly interior sub-box,
/// where `(ρ, Q)` is the Liouville pair of the weight. Unweighted operators, potentials
/// sampled at cell centroids.
pub fn liouville_check(asm: &SystemAssembly, sub: &Subdomain, u: &[C]) -> Result<f64> {
    let mesh = &asm.mesh;
    let weight = &asm.weight;
    let v = asm.potentials.v.compile();
    let rho: Vec<f64> = (0..mesh.n_nodes())
        .map(|i| if sub.nodes.binary_search(&i).is_ok() { weight.liouville(mesh, &mesh.vertex(i)).0 } else { 0.0 })
        .collect();
    let w: Vec<C> = u.iter().zip(&rho).map(|(x, r)| x * r).collect();
    let k = assemble_cells(mesh, None, 2, Some(&sub.cells), |_| CellCoefficients::stiffness());
    let m = assemble_cells(mesh, None, 2, Some(&sub.cells), |c| {
        let x = mesh.cell_centroid(c);
        CellCoefficients { reaction: C::new(weight.liouville(mesh, &x).1 + v.eval(&x), 0.0), ..CellCoefficients::mass() }
    });
    let (kw, mw) = (k.matvec(&w), m.matvec(&w));
    let pick = |x: &[C]| sub.interior_nodes.iter().map(|&i| x[i]).collect::<Vec<_>>();
    let r: Vec<C> = sub.interior_nodes.iter().map(|&i| kw[i] + mw[i]).collect();
    let den = norm2(&pick(&kw)) + norm2(&pick(&mw));
    Ok(if den == 0.0 { 0.0 } else { norm2(&r) / den })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::{assemble, build_graded_box, Potentials, WeightSpec};
    use std::sync::Arc;

    fn setup(s: f64, n: usize, pots: Potentials) -> (SystemAssembly, Subdomain) {
        let mesh = Arc::new(build_graded_box(&[1.0, 1.0], &[n, n], 0.8).unwrap());
        let asm = assemble(&mesh, &WeightSpec::vertical(s).unwrap(), &pots, 0.0).unwrap();
        let sub = Subdomain::centered(&mesh, 0.5).unwrap();
        (asm, sub)
    }

    #[test]
    fn subdomain_is_interior() {
        let mesh = build_graded_box(&[1.0, 1.0], &[8, 8], 1.0).unwrap();
        let s = Subdomain::centered(&mesh, 0.5).unwrap();
        assert_eq!(s.ranges, vec![(2, 6), (2, 6)]);
        assert_eq!(s.nodes.len(), 25);
        assert_eq!(s.interior_nodes.len(), 9);
        assert!(matches!(Subdomain::from_ranges(&mesh, &[(0, 3), (2, 4)]), Err(Error::SubdomainTouchesBoundary)));
    }

    #[test]
    fn spread_order_is_a_permutation() {
        let pts: Vec<Point> = (0..10).map(|i| [i as f64, 0.0, 0.0]).collect();
        let o = spread_order(&pts);
        assert_eq!(o[..2], [0, 9]);
        let mut s = o.clone();
        s.sort();
        assert_eq!(s, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn dictionary_members_solve_interior_equation() {
        let (asm, sub) = setup(0.75, 10, Potentials::new(ScalarField::constant(1.0), ScalarField::constant(0.3)));
        for fam in [DictionaryFamily::Hats, DictionaryFamily::Bumps, DictionaryFamily::RandomSmooth] {
            let d = build_dictionary(&asm, &sub, 6, fam, 1).unwrap();
            for j in 0..d.len() {
                assert!(interior_residual(&asm, &sub, &d.member(j)) < 1e-10);
            }
            let p = build_dictionary(&asm, &sub, 3, fam, 1).unwrap();
            assert_eq!(p.inputs, d.prefix(3).inputs);
        }
    }

    #[test]
    fn bulk_target_trivial_cases() {
        let (asm, sub) = setup(0.5, 8, Potentials::zero());
        let z = bulk_target_with(&asm, &sub, |_| ZERO).unwrap();
        assert!(z.iter().all(|v| *v == ZERO));
        let c = bulk_target_with(&asm, &sub, |_| C::new(2.5, 0.0)).unwrap();
        assert!(c.iter().all(|v| (v - 2.5).norm() < 1e-12));
    }

    #[test]
    fn span_targets_are_reproduced() {
        let (asm, sub) = setup(0.5, 8, Potentials::new(ScalarField::constant(0.5), ScalarField::Zero));
        let d = build_dictionary(&asm, &sub, 5, DictionaryFamily::Hats, 0).unwrap();
        let u = d.member(3);
        let t1: Vec<C> = d.sigma1_nodes.iter().map(|&i| u[i]).collect();
        let t2: Vec<C> = sub.nodes.iter().map(|&i| u[i]).collect();
        let r = simultaneous_fit(&asm, &d, &t1, &t2, Some(0.0), BulkTopology::L2).unwrap();
        assert!(r.boundary_error < 1e-10 && r.bulk_error < 1e-10, "{r:?}");
    }

    #[test]
    fn liouville_identity_at_half() {
        let (asm, sub) = setup(0.5, 12, Potentials::new(ScalarField::constant(1.0), ScalarField::Zero));
        let u: Vec<C> = (0..asm.n_dofs()).map(|i| C::new((i as f64 * 0.37).sin(), 0.0)).collect();
        let r = liouville_check(&asm, &sub, &u).unwrap();
        // identical to the plain Schrödinger residual
        let kw = asm.matrix.matvec(&u);
        let m = assemble_cells(&asm.mesh, None, 2, Some(&sub.cells), |_| CellCoefficients::stiffness());
        let mm = assemble_cells(&asm.mesh, None, 2, Some(&sub.cells), |_| CellCoefficients::mass());
        let (a, b) = (m.matvec(&u), mm.matvec(&u));
        let pick = |x: &[C]| sub.interior_nodes.iter().map(|&i| x[i]).collect::<Vec<_>>();
        let plain = norm2(&pick(&kw)) / (norm2(&pick(&a)) + norm2(&pick(&b)));
        assert!((r - plain).abs() < 1e-12 * plain);
    }
}
