//! Mixed Dirichlet/Robin solves, Poisson operator, eigenvalue guard and weighted normal derivative.

use std::f64::consts::PI;
use std::sync::Arc;

use faer::Mat;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discretization::cellquad::{shape, CellQuadrature};
use crate::discretization::mesh::{BoundaryTag, Mesh, MeshSpec, Point};
use crate::discretization::norms::{error_norms, NormOperators};
use crate::discretization::{assemble, assemble_facets, Potentials, ScalarField, SystemAssembly, WeightSpec};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_generalized_eigen, loglog_slope, norm2, CsrMatrix, SparseLu};

type C = Complex64;
const ZERO: C = C::new(0.0, 0.0);

/// Data of the mixed problem, already reduced to nodal functionals.
#[derive(Clone, Debug)]
pub struct MixedData {
    /// Dirichlet values, indexed like `partition.sigma2`.
    pub f2: Vec<C>,
    /// `∫ w F₀ v̄ + ∫ w F̃·∇v̄` per node.
    pub bulk_load: Vec<C>,
    /// `∫_{Σ₁} f₁ v̄` per node.
    pub robin_load: Vec<C>,
    /// `‖F‖_{L²w} + ‖f₁‖_{L²(Σ₁)} + ‖f₂‖_{L²(Σ₂)}`.
    pub data_norm: f64,
}

pub type ScalarFn<'a> = &'a (dyn Fn(&Point) -> C + Sync);
pub type VectorFn<'a> = &'a (dyn Fn(&Point) -> [C; 3] + Sync);

impl MixedData {
    pub fn dirichlet(asm: &SystemAssembly, f2: Vec<C>) -> Self {
        let n = asm.n_dofs();
        let norm = sigma2_norm(asm, &f2);
        Self { f2, bulk_load: vec![ZERO; n], robin_load: vec![ZERO; n], data_norm: norm }
    }

    /// Builds the functionals from analytic data; `f2` is sampled at the Σ₂ nodes.
    pub fn from_functions(
        asm: &SystemAssembly,
        f2: ScalarFn,
        f0: Option<ScalarFn>,
        ftilde: Option<VectorFn>,
        f1: Option<ScalarFn>,
    ) -> Self {
        let mesh = &asm.mesh;
        let f2v: Vec<C> = asm.partition.sigma2.iter().map(|&i| f2(&mesh.vertex(i))).collect();
        let (bulk_load, fnorm) = load_vector(mesh, &asm.weight, f0, ftilde, 4);
        let (robin_load, f1norm) = match f1 {
            Some(f) => boundary_load(mesh, BoundaryTag::Sigma1, f, 4),
            None => (vec![ZERO; mesh.n_nodes()], 0.0),
        };
        let norm = fnorm + f1norm + sigma2_norm(asm, &f2v);
        Self { f2: f2v, bulk_load, robin_load, data_norm: norm }
    }
}

fn sigma2_norm(asm: &SystemAssembly, f2: &[C]) -> f64 {
    let mut u = vec![ZERO; asm.n_dofs()];
    for (&i, &v) in asm.partition.sigma2.iter().zip(f2) {
        u[i] = v;
    }
    let m = assemble_facets(&asm.mesh, Some(BoundaryTag::Sigma2), |_| C::new(1.0, 0.0));
    m.form(&u, &u).re.max(0.0).sqrt()
}

/// `∫ w F₀ v̄ + ∫ w F̃·∇v̄` for every nodal basis function, plus `‖F‖_{L²w}`.
pub fn load_vector(mesh: &Mesh, weight: &WeightSpec, f0: Option<ScalarFn>, ftilde: Option<VectorFn>, order: usize) -> (Vec<C>, f64) {
    let mut b = vec![ZERO; mesh.n_nodes()];
    if f0.is_none() && ftilde.is_none() {
        return (b, 0.0);
    }
    let quad = CellQuadrature::new(mesh, Some(weight), order);
    let nb = mesh.nodes_per_cell();
    let locals: Vec<(Vec<C>, f64)> = (0..mesh.n_cells())
        .into_par_iter()
        .map(|c| {
            let (lo, hi) = mesh.cell_bounds(c);
            let rule = quad.cell(c);
            let mut loc = vec![ZERO; nb];
            let mut nrm = 0.0;
            let mut v = [0.0; 8];
            let mut g = [[0.0; 3]; 8];
            for (p, &w) in rule.points.iter().zip(&rule.weights) {
                shape(mesh.dim, &lo, &hi, p, &mut v, &mut g);
                if let Some(f) = f0 {
                    let fv = f(p);
                    nrm += w * fv.norm_sqr();
                    for a in 0..nb {
                        loc[a] += w * fv * v[a];
                    }
                }
                if let Some(f) = ftilde {
                    let fv = f(p);
                    nrm += w * fv.iter().map(|x| x.norm_sqr()).sum::<f64>();
                    for a in 0..nb {
                        loc[a] += w * (0..3).map(|j| fv[j] * g[a][j]).sum::<C>();
                    }
                }
            }
            (loc, nrm)
        })
        .collect();
    let mut total = 0.0;
    for (c, (loc, nrm)) in locals.into_iter().enumerate() {
        total += nrm;
        for (a, n) in mesh.cell_nodes(c).into_iter().enumerate() {
            b[n] += loc[a];
        }
    }
    (b, total.sqrt())
}

/// `∫_{tag} f v̄ dS` per node, plus `‖f‖_{L²(tag)}`.
pub fn boundary_load(mesh: &Mesh, tag: BoundaryTag, f: ScalarFn, order: usize) -> (Vec<C>, f64) {
    let quad = CellQuadrature::new(mesh, None, order);
    let mut b = vec![ZERO; mesh.n_nodes()];
    let mut nrm = 0.0;
    let mut v = [0.0; 8];
    let mut g = [[0.0; 3]; 8];
    for fct in mesh.facets_tagged(tag) {
        let (lo, hi) = mesh.cell_bounds(fct.cell);
        let nodes = mesh.cell_nodes(fct.cell);
        let rule = quad.facet(fct);
        for (p, &w) in rule.points.iter().zip(&rule.weights) {
            shape(mesh.dim, &lo, &hi, p, &mut v, &mut g);
            let fv = f(p);
            nrm += w * fv.norm_sqr();
            for (a, &n) in nodes.iter().enumerate() {
                b[n] += w * fv * v[a];
            }
        }
    }
    (b, nrm.sqrt())
}

#[derive(Clone, Debug)]
pub struct Solution {
    /// Nodal coefficients on the whole mesh.
    pub u: Vec<C>,
    /// Relative residual of the reduced system.
    pub residual: f64,
    /// `‖u‖_{H¹w} / (‖F‖ + ‖f₁‖ + ‖f₂‖)` when the data is nonzero.
    pub apriori_ratio: Option<f64>,
    pub lambda: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Refuse to solve when λ is within `guard_tol (1 + |λ|)` of the spectrum.
    pub guard: bool,
    pub guard_tol: f64,
    pub residual_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { guard: true, guard_tol: 1e-8, residual_tol: 1e-10 }
    }
}

/// Factorized constrained system; immutable and shareable across threads.
pub struct Solver<'a> {
    asm: &'a SystemAssembly,
    lu: SparseLu,
    k_ii: CsrMatrix,
    k_id: CsrMatrix,
    opts: SolverOptions,
    /// Estimated distance from λ to the discrete spectrum.
    pub spectral_distance: f64,
}

impl<'a> Solver<'a> {
    pub fn new(asm: &'a SystemAssembly) -> Result<Self> {
        Self::with_options(asm, SolverOptions::default())
    }

    pub fn with_options(asm: &'a SystemAssembly, opts: SolverOptions) -> Result<Self> {
        let p = &asm.partition;
        let k_ii = asm.matrix.submatrix(&p.free, &p.free);
        let k_id = asm.matrix.submatrix(&p.free, &p.sigma2);
        let singular = |d: f64| Error::ZeroIsEigenvalue { lambda: asm.lambda, distance: d };
        let lu = match SparseLu::new(&k_ii) {
            Ok(lu) => lu,
            Err(_) if opts.guard => return Err(singular(0.0)),
            Err(e) => return Err(e),
        };
        let mut s = Self { asm, lu, k_ii, k_id, opts, spectral_distance: f64::INFINITY };
        if opts.guard && !p.free.is_empty() {
            let m_ii = asm.mass.submatrix(&p.free, &p.free);
            let d = s.estimate_spectral_distance(&m_ii);
            s.spectral_distance = d;
            if !(d > opts.guard_tol * (1.0 + asm.lambda.abs())) {
                return Err(singular(d));
            }
        }
        Ok(s)
    }

    /// Power iteration for `‖(K−λM)⁻¹M‖` in the M-inner product; its inverse is the distance
    /// from λ to the nearest generalized eigenvalue (the operator is M-self-adjoint).
    fn estimate_spectral_distance(&self, m: &CsrMatrix) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let mut x: Vec<C> = (0..m.nrows()).map(|_| C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let mut rho = 0.0;
        for _ in 0..8 {
            let mx = m.matvec(&x);
            let xn = m.form(&x, &x).re.sqrt();
            let y = self.lu.solve(&mx);
            if y.iter().any(|v| !v.is_finite()) {
                return 0.0;
            }
            let yn = m.form(&y, &y).re.sqrt();
            if yn == 0.0 || xn == 0.0 {
                return f64::INFINITY;
            }
            rho = yn / xn;
            x = y.into_iter().map(|v| v / yn).collect();
        }
        1.0 / rho
    }

    pub fn assembly(&self) -> &SystemAssembly {
        self.asm
    }

    fn reduced_rhs(&self, data: &MixedData) -> Vec<C> {
        let p = &self.asm.partition;
        let kf = self.k_id.matvec(&data.f2);
        p.free.iter().enumerate().map(|(k, &i)| data.bulk_load[i] + data.robin_load[i] - kf[k]).collect()
    }

    fn scatter(&self, free_vals: &[C], f2: &[C]) -> Vec<C> {
        let p = &self.asm.partition;
        let mut u = vec![ZERO; self.asm.n_dofs()];
        for (&i, &v) in p.free.iter().zip(free_vals) {
            u[i] = v;
        }
        for (&i, &v) in p.sigma2.iter().zip(f2) {
            u[i] = v;
        }
        u
    }

    pub fn solve(&self, data: &MixedData) -> Result<Solution> {
        let rhs = self.reduced_rhs(data);
        let mut x = self.lu.solve(&rhs);
        let mut res = self.residual(&x, &rhs);
        if res > self.opts.residual_tol {
            // one step of iterative refinement
            let r: Vec<C> = self.k_ii.matvec(&x).iter().zip(&rhs).map(|(a, b)| b - a).collect();
            for (xi, di) in x.iter_mut().zip(self.lu.solve(&r)) {
                *xi += di;
            }
            res = self.residual(&x, &rhs);
        }
        if !res.is_finite() || res > 1e3 * self.opts.residual_tol.max(1e-12) {
            return Err(Error::SolverBreakdown(format!("relative residual {res:e}")));
        }
        let u = self.scatter(&x, &data.f2);
        let apriori_ratio = (data.data_norm > 0.0).then(|| {
            let ops = NormOperators::new(&self.asm.mesh, &self.asm.weight);
            ops.norms(&u).h1w / data.data_norm
        });
        Ok(Solution { u, residual: res, apriori_ratio, lambda: self.asm.lambda })
    }

    fn residual(&self, x: &[C], rhs: &[C]) -> f64 {
        let kx = self.k_ii.matvec(x);
        let r: Vec<C> = kx.iter().zip(rhs).map(|(a, b)| b - a).collect();
        let scale = norm2(rhs).max(norm2(&kx));
        if scale == 0.0 {
            0.0
        } else {
            norm2(&r) / scale
        }
    }

    /// Poisson operator: Dirichlet data on Σ₂, no loads.
    pub fn poisson(&self, f: &[C]) -> Result<Solution> {
        let mut data = MixedData::dirichlet(self.asm, f.to_vec());
        data.data_norm = 0.0;
        self.solve(&data)
    }

    /// Poisson solutions for every column of `f` (`|Σ₂| × m`), returned as full nodal fields.
    pub fn poisson_many(&self, f: &Mat<C>) -> Mat<C> {
        let p = &self.asm.partition;
        let m = f.ncols();
        let cols: Vec<Vec<C>> = (0..m).map(|j| (0..f.nrows()).map(|i| f[(i, j)]).collect()).collect();
        let mut rhs = Mat::<C>::zeros(p.free.len(), m);
        let kf: Vec<Vec<C>> = cols.par_iter().map(|c| self.k_id.matvec(c)).collect();
        for j in 0..m {
            for i in 0..p.free.len() {
                rhs[(i, j)] = -kf[j][i];
            }
        }
        self.lu.solve_mat(&mut rhs);
        let mut out = Mat::<C>::zeros(self.asm.n_dofs(), m);
        for j in 0..m {
            for (k, &i) in p.free.iter().enumerate() {
                out[(i, j)] = rhs[(k, j)];
            }
            for (k, &i) in p.sigma2.iter().enumerate() {
                out[(i, j)] = cols[j][k];
            }
        }
        out
    }
}

pub fn solve_mixed(asm: &SystemAssembly, data: &MixedData) -> Result<Solution> {
    Solver::new(asm)?.solve(data)
}

pub fn poisson(asm: &SystemAssembly, f: &[C]) -> Result<Solution> {
    Solver::new(asm)?.poisson(f)
}

/// Pairings of the weighted outward co-normal derivative against the boundary hat functions.
#[derive(Clone, Debug)]
pub struct BoundaryFunctional {
    pub nodes: Vec<usize>,
    pub values: Vec<C>,
    /// Full nodal residual functional; ≈ 0 at interior nodes.
    full: Vec<C>,
}

impl BoundaryFunctional {
    /// `⟨w∂_ν u, g⟩` for boundary data `g` given through any nodal extension `ext`.
    pub fn pair(&self, ext: &[C]) -> C {
        self.full.iter().zip(ext).map(|(p, e)| e.conj() * p).sum()
    }

    /// Same pairing computed from boundary values only.
    pub fn pair_trace(&self, g: &[C]) -> C {
        self.values.iter().zip(g).map(|(p, e)| e.conj() * p).sum()
    }
}

/// `⟨w∂_ν u, φ_i⟩ = B(u, φ_i) − (q u, φ_i)_{Σ₁} + λ(u, φ_i)_w... − F(φ_i)`, computed through the
/// form (no differentiation). ν is the outward normal.
pub fn weighted_normal_derivative(asm: &SystemAssembly, sol: &Solution, data: &MixedData) -> BoundaryFunctional {
    let ku = asm.matrix.matvec(&sol.u);
    let qu = asm.robin.matvec(&sol.u);
    let full: Vec<C> = (0..asm.n_dofs()).map(|i| ku[i] - qu[i] - data.bulk_load[i]).collect();
    let nodes = asm.partition.boundary.clone();
    let values = nodes.iter().map(|&i| full[i]).collect();
    BoundaryFunctional { nodes, values, full }
}

/// Generalized eigenvalue of `(K, M_w)` (homogeneous Dirichlet on Σ₂ ∪ Rest, Robin on Σ₁)
/// nearest to the assembly's λ, by shift-invert block subspace iteration.
pub fn nearest_eigenvalue(asm: &SystemAssembly) -> Result<f64> {
    let p = &asm.partition;
    let n = p.free.len();
    if n == 0 {
        return Err(Error::InvalidInput("no free dofs".into()));
    }
    let mut a = asm.matrix.submatrix(&p.free, &p.free);
    let m = asm.mass.submatrix(&p.free, &p.free);
    let mut sigma = asm.lambda;
    let lu = match SparseLu::new(&a) {
        Ok(lu) => lu,
        Err(_) => {
            let eps = 1e-6 * (1.0 + sigma.abs());
            a = a.add_scaled(&m, C::new(-eps, 0.0));
            sigma += eps;
            SparseLu::new(&a)?
        }
    };
    let bs = n.min(6);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut x = Mat::<C>::from_fn(n, bs, |_, _| C::new(rng.gen_range(-1.0..1.0), 0.0));
    let mut last = f64::NAN;
    let mut res = f64::INFINITY;
    for it in 0..500 {
        let mut y = Mat::<C>::zeros(n, bs);
        for j in 0..bs {
            let xj: Vec<C> = (0..n).map(|i| x[(i, j)]).collect();
            let mx = m.matvec(&xj);
            for i in 0..n {
                y[(i, j)] = mx[i];
            }
        }
        lu.solve_mat(&mut y);
        let cols: Vec<Vec<C>> = (0..bs).map(|j| (0..n).map(|i| y[(i, j)]).collect()).collect();
        let ay: Vec<Vec<C>> = cols.iter().map(|c| a.matvec(c)).collect();
        let my: Vec<Vec<C>> = cols.iter().map(|c| m.matvec(c)).collect();
        let gram = |v: &Vec<Vec<C>>| Mat::<C>::from_fn(bs, bs, |i, j| crate::linalg::dot(&cols[i], &v[j]));
        let (ka, mb) = (gram(&ay), gram(&my));
        let (theta, vecs) = hermitian_generalized_eigen(&ka, &mb)?;
        let k = (0..theta.len()).min_by(|&i, &j| theta[i].abs().partial_cmp(&theta[j].abs()).unwrap()).unwrap();
        let t = theta[k];
        // residual of the selected Ritz pair
        let mut ax = vec![ZERO; n];
        let mut mxv = vec![ZERO; n];
        for (c, v) in vecs.col_iter().nth(k).unwrap().iter().enumerate() {
            for i in 0..n {
                ax[i] += ay[c][i] * v;
                mxv[i] += my[c][i] * v;
            }
        }
        let r: Vec<C> = ax.iter().zip(&mxv).map(|(a, b)| a - b * t).collect();
        res = norm2(&r) / (norm2(&ax) + t.abs() * norm2(&mxv)).max(1e-300);
        if res < 1e-11 || (it > 3 && (t - last).abs() < 1e-15 * (1.0 + t.abs()) && res < 1e-8) {
            return Ok(sigma + t);
        }
        last = t;
        x = Mat::<C>::from_fn(n, vecs.ncols().min(bs), |i, j| (0..bs).map(|c| cols[c][i] * vecs[(c, j)]).sum());
        if x.ncols() < bs {
            let extra = bs - x.ncols();
            let old = x.clone();
            x = Mat::<C>::from_fn(n, bs, |i, j| if j < old.ncols() { old[(i, j)] } else { C::new(rng.gen_range(-1.0..1.0), 0.0) });
            let _ = extra;
        }
    }
    Err(Error::EigsolverNoConvergence { iterations: 500, residual: res })
}

/// Manufactured solution `u* = cos(πx₁)(1 + x_d^{2s}/(2s))` with its data on the unit box:
/// `w∂_d u* = cos(πx₁)`, so the bulk load is `F₀ = (π² + V) u*` and the Robin data is
/// `f₁ = −cos(πx₁) + q u*`.
pub struct Manufactured {
    pub s: f64,
    pub v: f64,
    pub q: f64,
}

impl Manufactured {
    pub fn u(&self, p: &Point, d: usize) -> C {
        let t = p[d];
        C::new((PI * p[0]).cos() * (1.0 + t.powf(2.0 * self.s) / (2.0 * self.s)), 0.0)
    }

    pub fn grad(&self, p: &Point, d: usize) -> [C; 3] {
        let t = p[d];
        let c = (PI * p[0]).cos();
        let mut g = [ZERO; 3];
        g[0] = C::new(-PI * (PI * p[0]).sin() * (1.0 + t.powf(2.0 * self.s) / (2.0 * self.s)), 0.0);
        g[d] = C::new(c * t.powf(2.0 * self.s - 1.0), 0.0);
        g
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub s: f64,
    pub h: Vec<f64>,
    pub dofs: Vec<usize>,
    pub errors: Vec<f64>,
    pub pairwise_rates: Vec<f64>,
    pub rate: f64,
}

/// Weighted-H¹ errors of the manufactured solution under uniform refinement.
pub fn manufactured_convergence(base: &MeshSpec, s: f64, v: f64, q: f64, levels: usize) -> Result<ConvergenceStudy> {
    let weight = WeightSpec::vertical(s)?;
    let mfg = Manufactured { s, v, q };
    let pots = Potentials::new(ScalarField::constant(v), ScalarField::constant(q));
    let mut spec = base.clone();
    let (mut hs, mut errs, mut dofs) = (vec![], vec![], vec![]);
    for _ in 0..levels {
        let mesh = Arc::new(spec.build()?);
        let d = mesh.vertical();
        let asm = assemble(&mesh, &weight, &pots, 0.0)?;
        let f2 = |p: &Point| mfg.u(p, d);
        let f0 = |p: &Point| mfg.u(p, d) * (PI * PI + v);
        let f1 = |p: &Point| C::new(-(PI * p[0]).cos(), 0.0) + mfg.u(p, d) * q;
        let data = MixedData::from_functions(&asm, &f2, Some(&f0), None, Some(&f1));
        let sol = solve_mixed(&asm, &data)?;
        let (e0, e1) = error_norms(&mesh, &weight, &sol.u, 5, |p| mfg.u(p, d), |p| mfg.grad(p, d));
        hs.push((0..mesh.dim).map(|j| mesh.max_spacing(j)).fold(0.0, f64::max));
        errs.push((e0 * e0 + e1 * e1).sqrt());
        dofs.push(mesh.n_nodes());
        spec = spec.refined();
    }
    let pairwise = (1..levels).map(|k| (errs[k - 1] / errs[k]).ln() / (hs[k - 1] / hs[k]).ln()).collect();
    let rate = loglog_slope(&hs, &errs);
    Ok(ConvergenceStudy { s, h: hs, dofs, errors: errs, pairwise_rates: pairwise, rate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::mesh::{build_graded_box, TagRule};

    fn unit(cells: usize, grading: f64) -> Arc<Mesh> {
        Arc::new(build_graded_box(&[1.0, 1.0], &[cells, cells], grading).unwrap())
    }

    #[test]
    fn constants_solve_zero_potential_problem() {
        for &s in &[0.5, 0.75] {
            let mesh = unit(8, 0.7);
            let asm = assemble(&mesh, &WeightSpec::vertical(s).unwrap(), &Potentials::zero(), 0.0).unwrap();
            let f2 = vec![C::new(1.0, 0.0); asm.partition.sigma2.len()];
            let data = MixedData::dirichlet(&asm, f2);
            let sol = solve_mixed(&asm, &data).unwrap();
            assert!(sol.u.iter().all(|v| (v - 1.0).norm() < 1e-12));
            let dn = weighted_normal_derivative(&asm, &sol, &data);
            assert!(dn.values.iter().all(|v| v.norm() < 1e-11));
        }
    }

    #[test]
    fn poisson_is_linear() {
        let mesh = unit(6, 0.7);
        let pots = Potentials::new(ScalarField::random_smooth(1.0, 4, 1), ScalarField::constant(0.5));
        let asm = assemble(&mesh, &WeightSpec::vertical(0.75).unwrap(), &pots, 0.0).unwrap();
        let solver = Solver::new(&asm).unwrap();
        let n = asm.partition.sigma2.len();
        let f: Vec<C> = (0..n).map(|i| C::new((i as f64).sin(), 0.0)).collect();
        let g: Vec<C> = (0..n).map(|i| C::new(0.0, (i as f64 * 0.3).cos())).collect();
        let (a, b) = (C::new(2.0, -1.0), C::new(0.5, 0.25));
        let h: Vec<C> = f.iter().zip(&g).map(|(x, y)| a * x + b * y).collect();
        let (uf, ug, uh) = (solver.poisson(&f).unwrap().u, solver.poisson(&g).unwrap().u, solver.poisson(&h).unwrap().u);
        let scale = norm2(&uh);
        for i in 0..uh.len() {
            assert!((uh[i] - a * uf[i] - b * ug[i]).norm() < 1e-12 * scale);
        }
        assert!(solver.poisson(&vec![ZERO; n]).unwrap().u.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn dirichlet_laplacian_eigenvalue() {
        let mut m = build_graded_box(&[1.0, 1.0], &[32, 32], 1.0).unwrap();
        m.retag(TagRule::AllSigma2);
        let mesh = Arc::new(m);
        let w = WeightSpec::vertical(0.5).unwrap();
        let asm = assemble(&mesh, &w, &Potentials::zero(), 0.0).unwrap();
        let mu = nearest_eigenvalue(&asm).unwrap();
        assert!((mu / (2.0 * PI * PI) - 1.0).abs() < 0.05, "{mu}");
        let asm_c = assemble(&mesh, &w, &Potentials::new(ScalarField::constant(3.0), ScalarField::Zero), 0.0).unwrap();
        let mu_c = nearest_eigenvalue(&asm_c).unwrap();
        assert!((mu_c - mu - 3.0).abs() < 1e-8 * mu);
    }

    #[test]
    fn guard_rejects_eigenvalue_shift() {
        let mesh = unit(8, 0.7);
        let w = WeightSpec::vertical(0.75).unwrap();
        let pots = Potentials::new(ScalarField::Zero, ScalarField::constant(0.3));
        let mu = nearest_eigenvalue(&assemble(&mesh, &w, &pots, 0.0).unwrap()).unwrap();
        let shifted = assemble(&mesh, &w, &pots, mu).unwrap();
        assert!(matches!(Solver::new(&shifted), Err(Error::ZeroIsEigenvalue { .. })));
        let near = assemble(&mesh, &w, &pots, mu * (1.0 - 1e-3)).unwrap();
        assert!(Solver::new(&near).is_ok());
    }

    #[test]
    fn flux_pairing_is_extension_independent() {
        let mesh = unit(8, 0.8);
        let w = WeightSpec::vertical(0.6).unwrap();
        let pots = Potentials::new(ScalarField::constant(1.0), ScalarField::constant(0.4));
        let asm = assemble(&mesh, &w, &pots, 0.0).unwrap();
        let f2 = |p: &Point| C::new(p[0] + p[1] * p[1], 0.0);
        let f0 = |p: &Point| C::new((p[0] * 3.0).sin(), 0.0);
        let data = MixedData::from_functions(&asm, &f2, Some(&f0), None, None);
        let sol = solve_mixed(&asm, &data).unwrap();
        let dn = weighted_normal_derivative(&asm, &sol, &data);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let bnd: Vec<C> = asm.partition.boundary.iter().map(|_| C::new(rng.gen_range(-1.0..1.0), 0.0)).collect();
        let mut e1 = vec![ZERO; asm.n_dofs()];
        let mut e2: Vec<C> = (0..asm.n_dofs()).map(|_| C::new(rng.gen_range(-1.0..1.0), 0.0)).collect();
        for (&i, &g) in asm.partition.boundary.iter().zip(&bnd) {
            e1[i] = g;
            e2[i] = g;
        }
        let (p1, p2) = (dn.pair(&e1), dn.pair(&e2));
        assert!((p1 - p2).norm() < 1e-12 * p1.norm().max(1.0));
        assert!((p1 - dn.pair_trace(&bnd)).norm() < 1e-12 * p1.norm().max(1.0));
    }

    #[test]
    fn flux_of_linear_profile_on_strip() {
        // s = 1/2, u = x_d: outward flux on Σ₁ is −1
        let mesh = unit(8, 1.0);
        let w = WeightSpec::vertical(0.5).unwrap();
        let asm = assemble(&mesh, &w, &Potentials::zero(), 0.0).unwrap();
        let f1 = |_: &Point| C::new(-1.0, 0.0);
        let f2 = |p: &Point| C::new(p[1], 0.0);
        let data = MixedData::from_functions(&asm, &f2, None, None, Some(&f1));
        let sol = solve_mixed(&asm, &data).unwrap();
        for (i, p) in mesh.vertices().iter().enumerate() {
            assert!((sol.u[i].re - p[1]).abs() < 1e-12);
        }
        let dn = weighted_normal_derivative(&asm, &sol, &data);
        // test function g = 1 on Σ₁ nodes (including the corners)
        let mut ext = vec![ZERO; asm.n_dofs()];
        for &i in &asm.partition.sigma1 {
            ext[i] = C::new(1.0, 0.0);
        }
        let pairing = dn.pair(&ext);
        // −∫_{Σ₁} 1 plus the side contributions of the corner hats, which vanish (∂_ν x_d = 0)
        assert!((pairing.re + 1.0).abs() < 1e-12, "{pairing}");
    }
}
