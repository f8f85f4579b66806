//! Partial Dirichlet-to-Neumann maps on Σ₂, the Alessandrini identity and a disk cache.

use std::fs::{self, File, OpenOptions};
use std::path::{Path, PathBuf};

use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::discretization::cellquad::CellQuadrature;
use crate::discretization::mesh::{BoundaryTag, Point};
use crate::discretization::norms::eval_in_cell;
use crate::discretization::SystemAssembly;
use crate::error::{Error, Result};
use crate::forward::Solver;
use crate::io::{read_container, write_container, Decoder, Encoder, Kind};
use crate::linalg::mat_frobenius;

type C = Complex64;
const ZERO: C = C::new(0.0, 0.0);

/// Discrete map `f ↦ (B(u_f, φ_i))_{i ∈ Σ₂}` where `u_f` solves the homogeneous problem with
/// trace `f` on Σ₂. Rows and columns follow `partition.sigma2`.
#[derive(Clone, Debug, PartialEq)]
pub struct DtNMatrix {
    pub nodes: Vec<usize>,
    pub points: Vec<Point>,
    pub lambda: f64,
    pub matrix: Mat<C>,
}

impl DtNMatrix {
    pub fn dim(&self) -> usize {
        self.nodes.len()
    }

    pub fn apply(&self, f: &[C]) -> Vec<C> {
        let n = self.dim();
        let mut out = vec![ZERO; n];
        for j in 0..n {
            let fj = f[j];
            if fj != ZERO {
                for i in 0..n {
                    out[i] += self.matrix[(i, j)] * fj;
                }
            }
        }
        out
    }

    /// `gᴴ Λ f`.
    pub fn pairing(&self, g: &[C], f: &[C]) -> C {
        self.apply(f).iter().zip(g).map(|(a, b)| b.conj() * a).sum()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut e = Encoder::default();
        e.u64(self.nodes.len() as u64);
        for &n in &self.nodes {
            e.u64(n as u64);
        }
        for p in &self.points {
            e.f64(p[0]).f64(p[1]).f64(p[2]);
        }
        e.f64(self.lambda).matrix(&self.matrix);
        e.buf
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut d = Decoder::new(bytes);
        let n = d.u64()? as usize;
        if n.saturating_mul(32) > bytes.len() {
            return Err(Error::Format("node count exceeds payload".into()));
        }
        let nodes = (0..n).map(|_| d.u64().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
        let points = (0..n).map(|_| Ok([d.f64()?, d.f64()?, d.f64()?])).collect::<Result<Vec<_>>>()?;
        let lambda = d.f64()?;
        let matrix = d.matrix()?;
        d.finish()?;
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::Format("matrix shape does not match node count".into()));
        }
        Ok(Self { nodes, points, lambda, matrix })
    }
}

/// Builds the full matrix with one Poisson solve per Σ₂ dof (a single multi-RHS solve).
pub fn compute_dtn(asm: &SystemAssembly) -> Result<DtNMatrix> {
    compute_dtn_with(&Solver::new(asm)?)
}

pub fn compute_dtn_with(solver: &Solver) -> Result<DtNMatrix> {
    let asm = solver.assembly();
    let d = &asm.partition.sigma2;
    let n = d.len();
    let u = solver.poisson_many(&Mat::<C>::identity(n, n));
    let mut lam = Mat::<C>::zeros(n, n);
    let cols: Vec<Vec<C>> = (0..n)
        .map(|j| {
            let uj: Vec<C> = (0..u.nrows()).map(|i| u[(i, j)]).collect();
            let ku = asm.matrix.matvec(&uj);
            d.iter().map(|&i| ku[i]).collect()
        })
        .collect();
    for (j, c) in cols.iter().enumerate() {
        for i in 0..n {
            lam[(i, j)] = c[i];
        }
    }
    if lam.col_iter().any(|c| c.iter().any(|v| !v.is_finite())) {
        return Err(Error::SolverBreakdown("non-finite DtN entries".into()));
    }
    Ok(DtNMatrix { nodes: d.clone(), points: d.iter().map(|&i| asm.mesh.vertex(i)).collect(), lambda: asm.lambda, matrix: lam })
}

/// `Λ f` with a single Poisson solve.
pub fn apply_dtn(solver: &Solver, f: &[C]) -> Result<Vec<C>> {
    let asm = solver.assembly();
    if f.len() != asm.partition.sigma2.len() {
        return Err(Error::InvalidInput(format!("Σ₂ data has {} values, expected {}", f.len(), asm.partition.sigma2.len())));
    }
    let u = solver.poisson(f)?.u;
    let ku = asm.matrix.matvec(&u);
    Ok(asm.partition.sigma2.iter().map(|&i| ku[i]).collect())
}

/// `‖Λ − Λᴴ‖_F / ‖Λ‖_F`; zero for the real-potential self-adjoint problem.
pub fn symmetry_defect(dtn: &DtNMatrix) -> f64 {
    defect(&dtn.matrix, true)
}

/// `‖Λ − Λᵀ‖_F / ‖Λ‖_F`; nonzero as soon as a magnetic potential is present.
pub fn transpose_defect(dtn: &DtNMatrix) -> f64 {
    defect(&dtn.matrix, false)
}

fn defect(m: &Mat<C>, conj: bool) -> f64 {
    let n = m.nrows();
    let d = Mat::<C>::from_fn(n, n, |i, j| m[(i, j)] - if conj { m[(j, i)].conj() } else { m[(j, i)] });
    let nm = mat_frobenius(m);
    if nm == 0.0 {
        0.0
    } else {
        mat_frobenius(&d) / nm
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AlessandriniReport {
    /// `f₂ᴴ (Λ₁ − Λ₂) f₁`.
    pub lhs: C,
    /// The bulk and Σ₁ integrals of the potential differences against `u₁ ū₂`.
    pub rhs: C,
    pub absolute: f64,
    /// `|lhs − rhs| / (|lhs| + |rhs|)`, zero when both vanish.
    pub relative: f64,
}

/// Compares both sides of the integral identity for two potential sets on the same mesh.
/// `u₁` solves problem 1 with trace `f₁`, `u₂` problem 2 with trace `f₂`; the potentials are
/// integrated exactly (order-4 quadrature), not through their cell samples.
pub fn alessandrini_residual(asm1: &SystemAssembly, asm2: &SystemAssembly, f1: &[C], f2: &[C]) -> Result<AlessandriniReport> {
    if asm1.mesh.n_nodes() != asm2.mesh.n_nodes() || asm1.weight != asm2.weight || asm1.lambda != asm2.lambda {
        return Err(Error::InvalidInput("both problems must share mesh, weight and λ".into()));
    }
    let (s1, s2) = (Solver::new(asm1)?, Solver::new(asm2)?);
    let lhs_vec: Vec<C> = apply_dtn(&s1, f1)?.iter().zip(apply_dtn(&s2, f1)?).map(|(a, b)| a - b).collect();
    let lhs: C = lhs_vec.iter().zip(f2).map(|(a, g)| g.conj() * a).sum();
    let u1 = s1.poisson(f1)?.u;
    let u2 = s2.poisson(f2)?.u;

    let mesh = &asm1.mesh;
    let (p1, p2) = (&asm1.potentials, &asm2.potentials);
    let (v1, v2) = (p1.v.compile(), p2.v.compile());
    let (q1, q2) = (p1.q.compile(), p2.q.compile());
    let avec = |p: &crate::discretization::Potentials, x: &Point| p.a.as_ref().map(|a| a.eval(x)).unwrap_or([0.0; 3]);
    let quad = CellQuadrature::new(mesh, Some(&asm1.weight), 4);
    let mut rhs = ZERO;
    for c in 0..mesh.n_cells() {
        let rule = quad.cell(c);
        for (x, &w) in rule.points.iter().zip(&rule.weights) {
            let (a, ga) = eval_in_cell(mesh, c, &u1, x);
            let (b, gb) = eval_in_cell(mesh, c, &u2, x);
            let (a1, a2) = (avec(p1, x), avec(p2, x));
            let n1: f64 = a1.iter().map(|t| t * t).sum();
            let n2: f64 = a2.iter().map(|t| t * t).sum();
            let react = v1.eval(x) - v2.eval(x) + n1 - n2;
            let mut mag = ZERO;
            for j in 0..3 {
                mag += (a1[j] - a2[j]) * (a * gb[j].conj() - b.conj() * ga[j]);
            }
            rhs += w * (react * a * b.conj() + C::i() * mag);
        }
    }
    for f in mesh.facets_tagged(BoundaryTag::Sigma1) {
        let rule = quad.facet(f);
        for (x, &w) in rule.points.iter().zip(&rule.weights) {
            let a = eval_in_cell(mesh, f.cell, &u1, x).0;
            let b = eval_in_cell(mesh, f.cell, &u2, x).0;
            rhs += w * (q1.eval(x) - q2.eval(x)) * a * b.conj();
        }
    }
    let absolute = (lhs - rhs).norm();
    let den = lhs.norm() + rhs.norm();
    let relative = if den == 0.0 { 0.0 } else { absolute / den };
    Ok(AlessandriniReport { lhs, rhs, absolute, relative })
}

/// Content-addressed on-disk store of DtN matrices.
#[derive(Clone, Debug)]
pub struct DtnCache {
    dir: PathBuf,
}

impl DtnCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    /// `$DEGENLAB_CACHE`, else `<tmp>/degenlab-cache`.
    pub fn from_env() -> Self {
        let dir = std::env::var_os("DEGENLAB_CACHE").map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("degenlab-cache"));
        Self::new(dir)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.dtn"))
    }

    pub fn load(&self, key: &str) -> Result<Option<DtNMatrix>> {
        let p = self.path(key);
        if !p.exists() {
            return Ok(None);
        }
        DtNMatrix::decode(&read_container(&p, Kind::DtN)?).map(Some)
    }

    pub fn store(&self, key: &str, dtn: &DtNMatrix) -> Result<()> {
        write_container(&self.path(key), Kind::DtN, &dtn.encode())
    }

    /// Returns the cached matrix or computes and stores it; the flag reports a cache hit.
    /// An exclusive lock file serializes concurrent producers of the same key; unreadable
    /// entries are recomputed.
    pub fn get_or_compute<F>(&self, key: &str, compute: F) -> Result<(DtNMatrix, bool)>
    where
        F: FnOnce() -> Result<DtNMatrix>,
    {
        fs::create_dir_all(&self.dir)?;
        let lock: File = OpenOptions::new().create(true).truncate(false).write(true).open(self.dir.join(format!("{key}.lock")))?;
        lock.lock()?;
        if let Ok(Some(d)) = self.load(key) {
            return Ok((d, true));
        }
        let d = compute()?;
        self.store(key, &d)?;
        Ok((d, false))
    }
}
