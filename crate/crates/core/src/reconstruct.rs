//! Fourier inversion of the Alessandrini pairing sampled with CGO pairs.
//!
//! With `u₁ = e^{ξ·x}(e^{iθ/2} + r₁)` and `u₂ = e^{ξ̃·x}(e^{−iθ/2} + r₂)`, `ξ̃ = −ξ̄`, the pairing
//! tends to `T(k) = ∫ δV x_d^{1−2s} e^{iθ} + ∫_{Σ₁} δq e^{ik′·x′}`, `θ = k′·x′ + k_d x_d^{2s}`.
//! After `y_d = x_d^{2s}` the bulk term is an ordinary Fourier transform of
//! `g = δV(x′, y_d^{1/2s}) y_d^{1/s−2} / 2s`, while the boundary term does not depend on `k_d`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cgo::{construct_xi, solve_remainder, BcMode, CgoParams};
use crate::discretization::{assemble, Mesh, Point, Potentials, ScalarField, WeightSpec};
use crate::dtn::apply_dtn;
use crate::error::{Error, Result};
use crate::forward::Solver;
use crate::quadrature::{composite_gauss_legendre, composite_weighted, graded_breaks};

type C = Complex64;
const ZERO: C = C::new(0.0, 0.0);

/// Half-width of the default frequency grid (33 points per axis).
pub const DEFAULT_HALF: usize = 16;
/// Grid extent as a multiple of the declared bandwidth.
pub const EXTENT_FACTOR: f64 = 1.5;
/// Default bound on bulk leakage into the band-averaged boundary estimator, relative to `‖T‖∞`.
pub const DEFAULT_LEAKAGE: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleMode {
    /// Pairing of computed CGO solutions through the DtN maps.
    ExactCgo,
    /// The `τ → ∞` limit evaluated by quadrature.
    PhaseOnly,
}

/// The box `Π[lo_j, lo_j + L_j]` with Σ₁ at `x_d = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub dim: usize,
    pub lo: Vec<f64>,
    pub lengths: Vec<f64>,
}

impl Geometry {
    pub fn new(lo: &[f64], lengths: &[f64]) -> Result<Self> {
        let dim = lengths.len();
        if !(2..=3).contains(&dim) {
            return Err(Error::UnsupportedDimension(dim));
        }
        if lo.len() != dim || lo[dim - 1] != 0.0 {
            return Err(Error::InvalidInput("the box must have dim lower corners and start at x_d = 0".into()));
        }
        if let Some((axis, &l)) = lengths.iter().enumerate().find(|(_, l)| !(**l > 0.0)) {
            return Err(Error::NonPositiveExtent { axis, extent: l });
        }
        Ok(Self { dim, lo: lo.to_vec(), lengths: lengths.to_vec() })
    }

    pub fn from_mesh(mesh: &Mesh) -> Self {
        Self { dim: mesh.dim, lo: mesh.lo[..mesh.dim].to_vec(), lengths: mesh.lengths[..mesh.dim].to_vec() }
    }

    /// Range of the transform variable: `L_j` horizontally, `H^{2s}` vertically.
    pub fn extent(&self, s: f64, axis: usize) -> f64 {
        if axis + 1 == self.dim {
            self.lengths[axis].powf(2.0 * s)
        } else {
            self.lengths[axis]
        }
    }
}

/// Axis-aligned frequency grid `k = (m_j Δk_j)`, `|m_j| ≤ half`, symmetric about 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub half: usize,
    pub spacing: Vec<f64>,
}

impl FrequencyGrid {
    /// Extent `1.5 · bandwidth` per axis, capped so the period `2π/Δk` never drops below the
    /// box; the vertical axis at `s > 1/2` uses the period `H^{2s}` of the `y` variable.
    pub fn new(geom: &Geometry, s: f64, bandwidth: f64, half: usize) -> Result<Self> {
        if half == 0 {
            return Err(Error::InvalidInput("frequency grid needs at least one nonzero mode".into()));
        }
        let d = geom.dim - 1;
        let mut spacing = vec![];
        for j in 0..geom.dim {
            let natural = 2.0 * PI / geom.extent(s, j);
            if j == d && s > 0.5 {
                spacing.push(natural);
                continue;
            }
            if half as f64 * natural < bandwidth {
                return Err(Error::GridTooCoarse { kmax: half as f64 * natural, bandwidth });
            }
            spacing.push(if bandwidth > 0.0 { (EXTENT_FACTOR * bandwidth / half as f64).min(natural) } else { natural });
        }
        Ok(Self { half, spacing })
    }

    pub fn dim(&self) -> usize {
        self.spacing.len()
    }

    pub fn points_per_axis(&self) -> usize {
        2 * self.half + 1
    }

    pub fn len(&self) -> usize {
        self.points_per_axis().pow(self.dim() as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn period(&self, axis: usize) -> f64 {
        2.0 * PI / self.spacing[axis]
    }

    pub fn kmax(&self, axis: usize) -> f64 {
        self.half as f64 * self.spacing[axis]
    }

    pub fn axis(&self, axis: usize) -> Vec<f64> {
        let h = self.half as isize;
        (-h..=h).map(|m| m as f64 * self.spacing[axis]).collect()
    }

    /// Frequency at a row-major index (axis 0 slowest).
    pub fn point(&self, mut flat: usize) -> Point {
        let n = self.points_per_axis();
        let mut k = [0.0; 3];
        for j in (0..self.dim()).rev() {
            k[j] = ((flat % n) as f64 - self.half as f64) * self.spacing[j];
            flat /= n;
        }
        k
    }

    /// Index of `−k`.
    pub fn mirror(&self, mut flat: usize) -> usize {
        let n = self.points_per_axis();
        let mut out = 0;
        let mut stride = 1;
        for _ in 0..self.dim() {
            out += (n - 1 - flat % n) * stride;
            flat /= n;
            stride *= n;
        }
        out
    }
}

/// One axis of the tensor rule: nodes, weights (including `x^{1−2s}` vertically) and the
/// phase coordinate (`x`, resp. `x^{2s}`).
#[derive(Clone, Debug)]
struct AxisRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    phase: Vec<f64>,
}

/// Gauss rules resolving `e^{ik·φ}` for `|k| ≤ kmax` times a field of bandwidth `b`
/// (at most four radians of phase per 10-point panel).
fn axis_rule(geom: &Geometry, s: f64, axis: usize, kmax: f64, b: f64) -> AxisRule {
    let (lo, l) = (geom.lo[axis], geom.lengths[axis]);
    if axis + 1 < geom.dim {
        let panels = ((kmax + b) * l / 4.0).ceil() as usize + 2;
        let breaks: Vec<f64> = (0..=panels).map(|p| lo + l * p as f64 / panels as f64).collect();
        let r = composite_gauss_legendre(&breaks, 10);
        return AxisRule { phase: r.nodes.clone(), nodes: r.nodes, weights: r.weights };
    }
    let rate = 2.0 * s * kmax * l.powf(2.0 * s - 1.0) + b;
    let panels = (rate * l / 4.0).ceil() as usize + 2;
    let h0 = l / panels as f64;
    let mut breaks = graded_breaks(h0, 16, 0.5);
    breaks.extend((2..=panels).map(|p| if p == panels { l } else { p as f64 * h0 }));
    let r = composite_weighted(&breaks, 1.0 - 2.0 * s, 10);
    AxisRule { phase: r.nodes.iter().map(|x| x.powf(2.0 * s)).collect(), nodes: r.nodes, weights: r.weights }
}

fn kernel(rule: &AxisRule, freqs: &[f64]) -> Vec<Vec<C>> {
    freqs.iter().map(|&k| rule.phase.iter().zip(&rule.weights).map(|(&p, &w)| C::from_polar(w, k * p)).collect()).collect()
}

fn contract<F: Fn(&Point) -> f64 + Sync>(rules: &[AxisRule], kern: &[Vec<Vec<C>>], f: &F, x: &mut Point, level: usize) -> Vec<C> {
    let nk = kern[level].len();
    let tail: usize = kern[level + 1..].iter().map(|k| k.len()).product();
    let mut out = vec![ZERO; nk * tail];
    for (i, &xi) in rules[level].nodes.iter().enumerate() {
        x[level] = xi;
        if level + 1 == rules.len() {
            let v = f(x);
            if v != 0.0 {
                for m in 0..nk {
                    out[m] += kern[level][m][i] * v;
                }
            }
        } else {
            let sub = contract(rules, kern, f, x, level + 1);
            for m in 0..nk {
                let e = kern[level][m][i];
                for (o, v) in out[m * tail..(m + 1) * tail].iter_mut().zip(&sub) {
                    *o += e * v;
                }
            }
        }
    }
    out
}

/// `Σ_x w(x) f(x) e^{ik·φ(x)}` on the tensor grid of `freqs`, row-major; parallel over axis 0.
fn separable_transform<F: Fn(&Point) -> f64 + Sync>(rules: &[AxisRule], freqs: &[Vec<f64>], f: &F) -> Vec<C> {
    let kern: Vec<Vec<Vec<C>>> = rules.iter().zip(freqs).map(|(r, k)| kernel(r, k)).collect();
    if rules.len() == 1 {
        return contract(rules, &kern, f, &mut [0.0; 3], 0);
    }
    let subs: Vec<Vec<C>> = (0..rules[0].nodes.len())
        .into_par_iter()
        .map(|i| {
            let mut x = [0.0; 3];
            x[0] = rules[0].nodes[i];
            contract(rules, &kern, f, &mut x, 1)
        })
        .collect();
    let tail = subs.first().map_or(1, |s| s.len());
    let mut out = vec![ZERO; kern[0].len() * tail];
    for (m, row) in kern[0].iter().enumerate() {
        for (e, sub) in row.iter().zip(&subs) {
            for (o, v) in out[m * tail..(m + 1) * tail].iter_mut().zip(sub) {
                *o += e * v;
            }
        }
    }
    out
}

fn difference(a: &ScalarField, b: &ScalarField) -> impl Fn(&Point) -> f64 + Sync {
    let (a, b) = (a.compile(), b.compile());
    move |x: &Point| a.eval(x) - b.eval(x)
}

fn check_scalar(p1: &Potentials, p2: &Potentials) -> Result<()> {
    if p1.has_magnetic() || p2.has_magnetic() {
        return Err(Error::InvalidInput("the phase-only pairing covers scalar and boundary potentials only".into()));
    }
    Ok(())
}

fn bandwidth_of(p1: &Potentials, p2: &Potentials) -> f64 {
    [&p1.v, &p2.v, &p1.q, &p2.q].iter().map(|f| f.bandwidth()).fold(0.0, f64::max)
}

/// `T` on a tensor of frequencies: bulk over Ω plus the `k_d`-independent Σ₁ term.
fn phase_only_tensor(geom: &Geometry, s: f64, p1: &Potentials, p2: &Potentials, freqs: &[Vec<f64>]) -> Vec<C> {
    let d = geom.dim - 1;
    let b = bandwidth_of(p1, p2);
    let kmax: Vec<f64> = freqs.iter().map(|k| k.iter().fold(0.0, |a: f64, v| a.max(v.abs()))).collect();
    let rules: Vec<AxisRule> = (0..geom.dim).map(|j| axis_rule(geom, s, j, kmax[j], b)).collect();
    let mut t = if p1.v == p2.v { vec![ZERO; freqs.iter().map(|k| k.len()).product()] } else { separable_transform(&rules, freqs, &difference(&p1.v, &p2.v)) };
    if p1.q != p2.q {
        let tq = separable_transform(&rules[..d], &freqs[..d], &difference(&p1.q, &p2.q));
        let nd = freqs[d].len();
        for (i, v) in t.iter_mut().enumerate() {
            *v += tq[i / nd];
        }
    }
    t
}

/// `T(k)` for arbitrary frequencies.
pub fn phase_only_at(geom: &Geometry, s: f64, p1: &Potentials, p2: &Potentials, ks: &[Point]) -> Result<Vec<C>> {
    check_scalar(p1, p2)?;
    Ok(ks.iter().map(|k| phase_only_tensor(geom, s, p1, p2, &(0..geom.dim).map(|j| vec![k[j]]).collect::<Vec<_>>())[0]).collect())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FrequencySamples {
    pub mode: SampleMode,
    pub s: f64,
    pub geometry: Geometry,
    pub grid: FrequencyGrid,
    /// Row-major over the grid, axis 0 slowest.
    pub values: Vec<C>,
    /// Digest of geometry, `s`, grid and potentials.
    pub digest: String,
    /// `τ` used by [`SampleMode::ExactCgo`].
    pub tau: Option<f64>,
}

impl FrequencySamples {
    /// `max |T(−k) − conj T(k)|`.
    pub fn hermitian_defect(&self) -> f64 {
        (0..self.values.len()).map(|i| (self.values[self.grid.mirror(i)] - self.values[i].conj()).norm()).fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

fn samples_digest(geom: &Geometry, s: f64, grid: &FrequencyGrid, p1: &Potentials, p2: &Potentials, mode: SampleMode, tau: Option<f64>) -> String {
    crate::io::digest(&serde_json::json!({ "geometry": geom, "s": s, "grid": grid, "p1": p1, "p2": p2, "mode": mode, "tau": tau }))
}

/// Phase-only samples over a grid.
pub fn phase_only_samples(geom: &Geometry, s: f64, p1: &Potentials, p2: &Potentials, grid: &FrequencyGrid) -> Result<FrequencySamples> {
    check_scalar(p1, p2)?;
    if grid.dim() != geom.dim {
        return Err(Error::InvalidInput("grid and geometry dimensions differ".into()));
    }
    let freqs: Vec<Vec<f64>> = (0..geom.dim).map(|j| grid.axis(j)).collect();
    let values = phase_only_tensor(geom, s, p1, p2, &freqs);
    let digest = samples_digest(geom, s, grid, p1, p2, SampleMode::PhaseOnly, None);
    Ok(FrequencySamples { mode: SampleMode::PhaseOnly, s, geometry: geom.clone(), grid: grid.clone(), values, digest, tau: None })
}

/// The CGO pair for frequency `k`: amplitudes `e^{±iθ/2}`, exponents `ξ = τ(ζ₁ + iζ₂)` and
/// `ξ̃ = τ(−ζ₁ + iζ₂)`, so that `u₁ ū₂ = e^{iθ}(1 + O(r))`.
pub fn cgo_pair(k: &[f64], tau: f64, s: f64, dim: usize) -> Result<(CgoParams, CgoParams)> {
    let half: Vec<f64> = k.iter().map(|v| 0.5 * v).collect();
    let p1 = construct_xi(&half, tau, s, dim)?;
    let mut p2 = p1;
    p2.k = p1.k.map(|v| -v);
    p2.zeta1 = p1.zeta1.map(|v| -v);
    p2.xi = p1.xi.map(|z| C::new(-z.re, z.im));
    Ok((p1, p2))
}

/// `u = e^{ξ·x}(a + r)` at the given nodes.
fn cgo_values(mesh: &Mesh, weight: &WeightSpec, params: &CgoParams, pots: &Potentials, nodes: &[usize]) -> Result<Vec<C>> {
    let r = solve_remainder(mesh, weight, params, pots, BcMode::MinimumNorm)?;
    Ok(nodes
        .iter()
        .map(|&i| {
            let x = mesh.vertex(i);
            params.exponent(&x).exp() * (params.amplitude(&x) + r.r[i])
        })
        .collect())
}

/// Factorized forward problems for a pair of potentials on one mesh.
pub struct ExactPairing<'a> {
    weight: WeightSpec,
    p1: &'a Potentials,
    p2: &'a Potentials,
    s1: Solver<'a>,
    s2: Solver<'a>,
}

impl<'a> ExactPairing<'a> {
    pub fn new(asm1: &'a crate::discretization::SystemAssembly, asm2: &'a crate::discretization::SystemAssembly, p1: &'a Potentials, p2: &'a Potentials) -> Result<Self> {
        check_scalar(p1, p2)?;
        if !Arc::ptr_eq(&asm1.mesh, &asm2.mesh) && *asm1.mesh != *asm2.mesh {
            return Err(Error::InvalidInput("both problems must share the mesh".into()));
        }
        if !asm1.partition.zero.is_empty() {
            return Err(Error::InvalidInput("CGO traces need Σ₂ to cover every non-Σ₁ facet".into()));
        }
        Ok(Self { weight: asm1.weight, p1, p2, s1: Solver::new(asm1)?, s2: Solver::new(asm2)? })
    }

    /// `⟨(Λ₁ − Λ₂) f₁, f₂⟩` for the traces of the CGO pair at `(k, τ)`.
    pub fn sample(&self, k: &[f64], tau: f64) -> Result<C> {
        let asm = self.s1.assembly();
        let mesh = &asm.mesh;
        let (q1, q2) = cgo_pair(k, tau, self.weight.s, mesh.dim)?;
        let nodes = &asm.partition.sigma2;
        let f1 = cgo_values(mesh, &self.weight, &q1, self.p1, nodes)?;
        let f2 = cgo_values(mesh, &self.weight, &q2, self.p2, nodes)?;
        let a = apply_dtn(&self.s1, &f1)?;
        let b = apply_dtn(&self.s2, &f1)?;
        Ok(f2.iter().zip(a.iter().zip(&b)).map(|(g, (x, y))| g.conj() * (x - y)).sum())
    }
}

/// Samples over a grid in either mode. `ExactCgo` needs every grid frequency to be admissible.
pub fn sample_pairing(mesh: &Arc<Mesh>, weight: &WeightSpec, p1: &Potentials, p2: &Potentials, grid: &FrequencyGrid, mode: SampleMode, tau: f64) -> Result<FrequencySamples> {
    let geom = Geometry::from_mesh(mesh);
    match mode {
        SampleMode::PhaseOnly => phase_only_samples(&geom, weight.s, p1, p2, grid),
        SampleMode::ExactCgo => {
            let a1 = assemble(mesh, weight, p1, 0.0)?;
            let a2 = assemble(mesh, weight, p2, 0.0)?;
            let pairing = ExactPairing::new(&a1, &a2, p1, p2)?;
            let values = (0..grid.len()).map(|i| pairing.sample(&grid.point(i)[..mesh.dim], tau)).collect::<Result<Vec<_>>>()?;
            let digest = samples_digest(&geom, weight.s, grid, p1, p2, mode, Some(tau));
            Ok(FrequencySamples { mode, s: weight.s, geometry: geom, grid: grid.clone(), values, digest, tau: Some(tau) })
        }
    }
}

/// `|T_exact(k) − T_phase(k)|` over a τ sweep.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GapStudy {
    pub k: Vec<f64>,
    pub taus: Vec<f64>,
    pub exact: Vec<C>,
    pub phase: C,
    /// Relative gaps `|T_exact − T_phase| / |T_phase|`.
    pub gaps: Vec<f64>,
    pub slope: f64,
}

impl GapStudy {
    /// Each gap at most `1 + slack` times the previous one and the last below the first.
    pub fn decreasing(&self, slack: f64) -> bool {
        self.gaps.windows(2).all(|w| w[1] <= (1.0 + slack) * w[0]) && self.gaps.last() < self.gaps.first()
    }
}

pub fn cgo_gap_study(mesh: &Arc<Mesh>, weight: &WeightSpec, p1: &Potentials, p2: &Potentials, k: &[f64], taus: &[f64]) -> Result<GapStudy> {
    let a1 = assemble(mesh, weight, p1, 0.0)?;
    let a2 = assemble(mesh, weight, p2, 0.0)?;
    let pairing = ExactPairing::new(&a1, &a2, p1, p2)?;
    let mut kk = [0.0; 3];
    kk[..k.len()].copy_from_slice(k);
    let phase = phase_only_at(&Geometry::from_mesh(mesh), weight.s, p1, p2, &[kk])?[0];
    let exact = taus.par_iter().map(|&t| pairing.sample(k, t)).collect::<Result<Vec<_>>>()?;
    let scale = phase.norm().max(f64::MIN_POSITIVE);
    let gaps: Vec<f64> = exact.iter().map(|e| (e - phase).norm() / scale).collect();
    let slope = crate::linalg::loglog_slope(taus, &gaps);
    Ok(GapStudy { k: k.to_vec(), taus: taus.to_vec(), exact, phase, gaps, slope })
}

/// Applies `kernel` (rows: new length) along `axis` of a row-major tensor.
fn mode_product(t: &[C], shape: &[usize], axis: usize, kernel: &[Vec<C>]) -> (Vec<C>, Vec<usize>) {
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let (n, m) = (shape[axis], kernel.len());
    let mut out = vec![ZERO; outer * m * inner];
    for o in 0..outer {
        for (r, row) in kernel.iter().enumerate() {
            let dst = &mut out[(o * m + r) * inner..(o * m + r + 1) * inner];
            for (c, &kc) in row.iter().enumerate().take(n) {
                if kc == ZERO {
                    continue;
                }
                let src = &t[(o * n + c) * inner..(o * n + c + 1) * inner];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += kc * s;
                }
            }
        }
    }
    let mut sh = shape.to_vec();
    sh[axis] = m;
    (out, sh)
}

fn mode_products(t: &[C], shape: &[usize], kernels: &[Vec<Vec<C>>]) -> Vec<C> {
    let (mut cur, mut sh) = (t.to_vec(), shape.to_vec());
    for (axis, k) in kernels.iter().enumerate() {
        (cur, sh) = mode_product(&cur, &sh, axis, k);
    }
    cur
}

/// Cell-centred output grid with `n` points per axis.
fn output_axes(geom: &Geometry, n: usize) -> Vec<Vec<f64>> {
    (0..geom.dim).map(|j| (0..n).map(|i| geom.lo[j] + (i as f64 + 0.5) / n as f64 * geom.lengths[j]).collect()).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Reconstruction {
    pub s: f64,
    pub geometry: Geometry,
    pub grid: FrequencyGrid,
    /// Fourier coefficients of the bulk density `g` in `(x′, y_d)`, row-major over the grid.
    pub bulk_coefficients: Vec<C>,
    /// Fourier coefficients of `δq` over the horizontal sub-grid.
    pub q_coefficients: Option<Vec<C>>,
    /// Output grid per axis (cell centres).
    pub axes: Vec<Vec<f64>>,
    /// `δV` on the output grid, row-major.
    pub v: Vec<f64>,
    /// `δq` on the horizontal output grid.
    pub q: Option<Vec<f64>>,
    /// Largest imaginary part relative to the largest real part.
    pub imag_residue: f64,
    /// Spread of `T` across the averaging band relative to `‖T‖∞`.
    pub leakage: Option<f64>,
}

fn synthesis_kernel(freqs: &[f64], phases: &[f64]) -> Vec<Vec<C>> {
    phases.iter().map(|&y| freqs.iter().map(|&k| C::from_polar(1.0, -k * y)).collect()).collect()
}

fn evaluate(s: f64, geom: &Geometry, grid: &FrequencyGrid, bulk: &[C], q: Option<&[C]>, n_out: usize) -> (Vec<Vec<f64>>, Vec<f64>, Option<Vec<f64>>, f64) {
    let d = geom.dim - 1;
    let axes = output_axes(geom, n_out);
    let shape = vec![grid.points_per_axis(); geom.dim];
    let kern: Vec<Vec<Vec<C>>> = (0..geom.dim)
        .map(|j| {
            let ph: Vec<f64> = if j == d { axes[j].iter().map(|x| x.powf(2.0 * s)).collect() } else { axes[j].clone() };
            synthesis_kernel(&grid.axis(j), &ph)
        })
        .collect();
    let g = mode_products(bulk, &shape, &kern);
    let (mut re_max, mut im_max) = (0.0f64, 0.0f64);
    let v: Vec<f64> = g
        .iter()
        .enumerate()
        .map(|(i, z)| {
            let xd = axes[d][i % n_out];
            let z = z * (2.0 * s * xd.powf(4.0 * s - 2.0));
            re_max = re_max.max(z.re.abs());
            im_max = im_max.max(z.im.abs());
            z.re
        })
        .collect();
    let qv = q.map(|qc| {
        let qs = mode_products(qc, &shape[..d], &kern[..d]);
        qs.iter()
            .map(|z| {
                re_max = re_max.max(z.re.abs());
                im_max = im_max.max(z.im.abs());
                z.re
            })
            .collect()
    });
    (axes, v, qv, if re_max > 0.0 { im_max / re_max } else { im_max })
}

fn volume(grid: &FrequencyGrid, axes: std::ops::Range<usize>) -> f64 {
    axes.map(|j| grid.period(j)).product()
}

/// Inverts samples at `s = 1/2` with `q₁ = q₂`: `δV` is the Fourier series of `T` over the
/// (zero-padded) period box, restricted to Ω.
pub fn recover_v_fixed_q(samples: &FrequencySamples, n_out: usize) -> Result<Reconstruction> {
    if samples.s != 0.5 {
        return Err(Error::InvalidInput(format!("fixed-q inversion needs s = 1/2, got {}", samples.s)));
    }
    let (grid, geom) = (&samples.grid, &samples.geometry);
    let vol = volume(grid, 0..geom.dim);
    let bulk: Vec<C> = samples.values.iter().map(|t| t / vol).collect();
    let (axes, v, _, imag_residue) = evaluate(samples.s, geom, grid, &bulk, None, n_out);
    Ok(Reconstruction { s: samples.s, geometry: geom.clone(), grid: grid.clone(), bulk_coefficients: bulk, q_coefficients: None, axes, v, q: None, imag_residue, leakage: None })
}

/// Joint inversion: `q̂(k′)` is the mean of `T(k′, ·)` over the top quartile of `|k_d|`, where the
/// bulk transform has decayed; the rest is inverted in `(x′, y_d)` and mapped back to `x_d`.
pub fn recover_v_and_q(samples: &FrequencySamples, n_out: usize, leakage_threshold: f64) -> Result<Reconstruction> {
    let (grid, geom) = (&samples.grid, &samples.geometry);
    let d = geom.dim - 1;
    let n = grid.points_per_axis();
    let h = grid.half as isize;
    let band: Vec<usize> = (0..n).filter(|&i| 4 * (i as isize - h).unsigned_abs() > 3 * grid.half).collect();
    let tmax = samples.max_abs();
    let mut qhat = vec![ZERO; samples.values.len() / n];
    let mut leakage = 0.0f64;
    for (c, q) in qhat.iter_mut().enumerate() {
        let row = &samples.values[c * n..(c + 1) * n];
        let mean: C = band.iter().map(|&i| row[i]).sum::<C>() / band.len() as f64;
        let spread = (band.iter().map(|&i| (row[i] - mean).norm_sqr()).sum::<f64>() / band.len() as f64).sqrt();
        leakage = leakage.max(if tmax > 0.0 { spread / tmax } else { 0.0 });
        *q = mean;
    }
    if leakage > leakage_threshold {
        return Err(Error::BandTooNarrow { leakage, threshold: leakage_threshold });
    }
    let vol = volume(grid, 0..geom.dim);
    let bulk: Vec<C> = samples.values.iter().enumerate().map(|(i, t)| (t - qhat[i / n]) / vol).collect();
    let hvol = volume(grid, 0..d);
    let qc: Vec<C> = qhat.iter().map(|q| q / hvol).collect();
    let (axes, v, q, imag_residue) = evaluate(samples.s, geom, grid, &bulk, Some(&qc), n_out);
    Ok(Reconstruction {
        s: samples.s,
        geometry: geom.clone(),
        grid: grid.clone(),
        bulk_coefficients: bulk,
        q_coefficients: Some(qc),
        axes,
        v,
        q,
        imag_residue,
        leakage: Some(leakage),
    })
}

/// `∫_a^{a+L} e^{iκy} dy`.
fn box_transform(kappa: f64, a: f64, l: f64) -> C {
    let t = 0.5 * kappa * l;
    let sinc = if t.abs() < 1e-8 { 1.0 - t * t / 6.0 } else { t.sin() / t };
    C::from_polar(l * sinc, kappa * (a + 0.5 * l))
}

/// Phase-only samples of the reconstructed fields (restricted to Ω and Σ₁), in closed form.
pub fn resynthesize(rec: &Reconstruction) -> Vec<C> {
    let (grid, geom) = (&rec.grid, &rec.geometry);
    let d = geom.dim - 1;
    let n = grid.points_per_axis();
    let kern: Vec<Vec<Vec<C>>> = (0..geom.dim)
        .map(|j| {
            let k = grid.axis(j);
            let (a, l) = if j == d { (0.0, geom.extent(rec.s, d)) } else { (geom.lo[j], geom.lengths[j]) };
            k.iter().map(|&kn| k.iter().map(|&km| box_transform(kn - km, a, l)).collect()).collect()
        })
        .collect();
    let shape = vec![n; geom.dim];
    let mut t = mode_products(&rec.bulk_coefficients, &shape, &kern);
    if let Some(qc) = &rec.q_coefficients {
        let tq = mode_products(qc, &shape[..d], &kern[..d]);
        for (i, v) in t.iter_mut().enumerate() {
            *v += tq[i / n];
        }
    }
    t
}

/// `‖T_resynth − T‖₂ / ‖T‖₂`.
pub fn round_trip_residual(samples: &FrequencySamples, rec: &Reconstruction) -> f64 {
    let t = resynthesize(rec);
    let num: f64 = t.iter().zip(&samples.values).map(|(a, b)| (a - b).norm_sqr()).sum();
    let den: f64 = samples.values.iter().map(|b| b.norm_sqr()).sum();
    if den > 0.0 {
        (num / den).sqrt()
    } else {
        num.sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionErrors {
    /// Relative discrete L² error of `δV` on the output grid.
    pub v_rel_l2: f64,
    pub v_max_abs: f64,
    pub q_rel_l2: Option<f64>,
    pub q_max_abs: Option<f64>,
}

fn rel_l2(a: &[f64], b: &[f64]) -> (f64, f64) {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    let max = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    (if den > 0.0 { (num / den).sqrt() } else { num.sqrt() }, max)
}

/// Errors against the true differences `p1 − p2`.
pub fn reconstruction_errors(rec: &Reconstruction, p1: &Potentials, p2: &Potentials) -> ReconstructionErrors {
    let dim = rec.geometry.dim;
    let dv = difference(&p1.v, &p2.v);
    let dq = difference(&p1.q, &p2.q);
    let pts = |axes: &[Vec<f64>]| -> Vec<Point> {
        let mut out = vec![[0.0; 3]];
        for (j, ax) in axes.iter().enumerate() {
            out = out.iter().flat_map(|p| ax.iter().map(move |&x| {
                let mut q = *p;
                q[j] = x;
                q
            })).collect();
        }
        out
    };
    let truth_v: Vec<f64> = pts(&rec.axes).iter().map(&dv).collect();
    let (v_rel_l2, v_max_abs) = rel_l2(&rec.v, &truth_v);
    let (q_rel_l2, q_max_abs) = match &rec.q {
        Some(q) => {
            let truth: Vec<f64> = pts(&rec.axes[..dim - 1]).iter().map(&dq).collect();
            let (a, b) = rel_l2(q, &truth);
            (Some(a), Some(b))
        }
        None => (None, None),
    };
    ReconstructionErrors { v_rel_l2, v_max_abs, q_rel_l2, q_max_abs }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::gauss_legendre_on;

    fn unit(dim: usize) -> Geometry {
        Geometry::new(&vec![0.0; dim], &vec![1.0; dim]).unwrap()
    }

    /// Brute force with `x_d = t⁴` (smooth integrand for the tested s) and uniform panels.
    fn brute_force(geom: &Geometry, s: f64, dv: &dyn Fn(&Point) -> f64, dq: &dyn Fn(&Point) -> f64, k: &Point) -> C {
        let d = geom.dim - 1;
        let panel = |a: f64, b: f64| {
            let breaks: Vec<f64> = (0..=40).map(|i| a + (b - a) * i as f64 / 40.0).collect();
            composite_gauss_legendre(&breaks, 12)
        };
        let hz: Vec<_> = (0..d).map(|j| panel(geom.lo[j], geom.lo[j] + geom.lengths[j])).collect();
        let tz = panel(0.0, geom.lengths[d].powf(0.25));
        let mut total = ZERO;
        let mut idx = vec![0usize; d];
        loop {
            let mut x = [0.0; 3];
            let mut w = 1.0;
            for j in 0..d {
                x[j] = hz[j].nodes[idx[j]];
                w *= hz[j].weights[idx[j]];
            }
            let hp: f64 = (0..d).map(|j| k[j] * x[j]).sum();
            total += C::from_polar(w * dq(&x), hp);
            for (&t, &wt) in tz.nodes.iter().zip(&tz.weights) {
                x[d] = t.powi(4);
                let jac = 4.0 * t.powi(3) * x[d].powf(1.0 - 2.0 * s);
                total += C::from_polar(w * wt * jac * dv(&x), hp + k[d] * x[d].powf(2.0 * s));
            }
            let mut j = 0;
            while j < d {
                idx[j] += 1;
                if idx[j] < hz[j].len() {
                    break;
                }
                idx[j] = 0;
                j += 1;
            }
            if j == d {
                break;
            }
        }
        total
    }

    #[test]
    fn grid_layout_and_checks() {
        let g = unit(2);
        let grid = FrequencyGrid::new(&g, 0.5, 10.0, 4).unwrap();
        assert_eq!(grid.len(), 81);
        assert!((grid.spacing[0] - 3.75).abs() < 1e-15);
        let k = grid.point(3 * 9 + 7);
        assert_eq!([k[0], k[1]], [-3.75, 11.25]);
        assert_eq!(grid.point(grid.mirror(3 * 9 + 7))[..2], [3.75, -11.25]);
        assert!(matches!(FrequencyGrid::new(&g, 0.5, 100.0, 4), Err(Error::GridTooCoarse { .. })));
        let flat = FrequencyGrid::new(&g, 0.5, 0.0, 4).unwrap();
        assert!((flat.period(0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn identical_potentials_give_zero() {
        let p = Potentials::new(ScalarField::gaussian(1.0, &[0.5, 0.5], 0.1), ScalarField::constant(0.3));
        let g = unit(2);
        let grid = FrequencyGrid::new(&g, 0.75, 60.0, DEFAULT_HALF).unwrap();
        let t = phase_only_samples(&g, 0.75, &p, &p, &grid).unwrap();
        assert!(t.values.iter().all(|v| *v == ZERO));
    }

    #[test]
    fn phase_only_matches_brute_force() {
        for (s, dim) in [(0.5, 2), (0.75, 2), (0.75, 3)] {
            let lo = if dim == 2 { vec![-0.5, 0.0] } else { vec![-0.5, 0.0, 0.0] };
            let g = Geometry::new(&lo, &vec![1.0; dim]).unwrap();
            let c = if dim == 2 { vec![0.1, 0.45] } else { vec![0.1, 0.5, 0.45] };
            let p1 = Potentials::new(ScalarField::gaussian(1.3, &c, 0.12), ScalarField::cosine(0.4, &[2.0, -1.0, 0.0][..dim], 0.2));
            let p2 = Potentials::new(ScalarField::constant(0.2), ScalarField::constant(-0.1));
            let dv = difference(&p1.v, &p2.v);
            let dq = difference(&p1.q, &p2.q);
            let ks: Vec<Point> = if dim == 2 {
                vec![[0.0; 3], [7.0, 11.0, 0.0], [-20.0, -30.0, 0.0]]
            } else {
                vec![[0.0; 3], [7.0, -3.0, 11.0], [-20.0, 15.0, -30.0]]
            };
            let got = phase_only_at(&g, s, &p1, &p2, &ks).unwrap();
            for (k, t) in ks.iter().zip(got) {
                let want = brute_force(&g, s, &dv, &dq, k);
                assert!((t - want).norm() < 1e-10 * want.norm().max(1.0), "s={s} dim={dim} k={k:?}: {t} vs {want}");
            }
        }
    }

    #[test]
    fn hermitian_symmetry() {
        let g = unit(2);
        let p1 = Potentials::new(ScalarField::gaussian(1.0, &[0.4, 0.5], 0.1), ScalarField::cosine(1.0, &[3.0, 0.0], 0.0));
        let grid = FrequencyGrid::new(&g, 0.75, 60.0, DEFAULT_HALF).unwrap();
        let t = phase_only_samples(&g, 0.75, &p1, &Potentials::zero(), &grid).unwrap();
        assert!(t.hermitian_defect() < 1e-10 * t.max_abs().max(1.0));
    }

    #[test]
    fn transform_kernels_agree_with_direct_sums() {
        let mut t = vec![ZERO; 3 * 4];
        for (i, v) in t.iter_mut().enumerate() {
            *v = C::new(i as f64, 1.0 - i as f64 * 0.5);
        }
        let k0: Vec<Vec<C>> = (0..2).map(|r| (0..3).map(|c| C::new(r as f64 + c as f64, 1.0)).collect()).collect();
        let k1: Vec<Vec<C>> = (0..5).map(|r| (0..4).map(|c| C::new(1.0, (r * c) as f64)).collect()).collect();
        let out = mode_products(&t, &[3, 4], &[k0.clone(), k1.clone()]);
        for a in 0..2 {
            for b in 0..5 {
                let mut want = ZERO;
                for i in 0..3 {
                    for j in 0..4 {
                        want += k0[a][i] * k1[b][j] * t[i * 4 + j];
                    }
                }
                assert!((out[a * 5 + b] - want).norm() < 1e-12);
            }
        }
        let k = 2.7;
        let r = gauss_legendre_on(0.3, 1.1, 20);
        let direct: C = r.nodes.iter().zip(&r.weights).map(|(&y, &w)| C::from_polar(w, k * y)).sum();
        assert!((box_transform(k, 0.3, 0.8) - direct).norm() < 1e-13);
    }

    #[test]
    fn zero_samples_give_zero_fields() {
        let g = unit(2);
        let grid = FrequencyGrid::new(&g, 0.5, 10.0, 4).unwrap();
        let p = Potentials::zero();
        let t = phase_only_samples(&g, 0.5, &p, &p, &grid).unwrap();
        let rec = recover_v_fixed_q(&t, 16).unwrap();
        assert!(rec.v.iter().all(|v| *v == 0.0));
        let e = reconstruction_errors(&rec, &p, &p);
        assert_eq!(e.v_rel_l2, 0.0);
    }

    #[test]
    fn single_mode_lands_in_its_bin() {
        let g = unit(2);
        let p1 = Potentials::new(ScalarField::cosine(1.0, &[2.0 * PI, 0.0], 0.0), ScalarField::Zero);
        // Natural spacing: the mode is orthogonal to every other bin.
        let grid = FrequencyGrid::new(&g, 0.5, 0.0, 4).unwrap();
        let t = phase_only_samples(&g, 0.5, &p1, &Potentials::zero(), &grid).unwrap();
        let n = grid.points_per_axis();
        let row = |i: usize| t.values[i * n + grid.half];
        let best = (grid.half + 1..n).max_by(|&a, &b| row(a).norm().total_cmp(&row(b).norm())).unwrap();
        assert_eq!(best, grid.half + 1);
        assert!((0..n).filter(|i| i.abs_diff(grid.half) != 1).all(|i| row(i).norm() < 1e-10));
        // A cosine of unit amplitude puts half its mass at +k: amplitude = 2|T|/|Ω|.
        let amp = 2.0 * row(best).norm();
        assert!((amp - 1.0).abs() < 0.05, "amplitude {amp}");
    }

    #[test]
    fn constant_q_is_recovered_and_k_d_independent() {
        let g = unit(2);
        let p1 = Potentials::new(ScalarField::Zero, ScalarField::constant(0.7));
        let grid = FrequencyGrid::new(&g, 0.75, 0.0, 8).unwrap();
        let t = phase_only_samples(&g, 0.75, &p1, &Potentials::zero(), &grid).unwrap();
        let n = grid.points_per_axis();
        for c in 0..n {
            for i in 0..n {
                assert!((t.values[c * n + i] - t.values[c * n]).norm() < 1e-12);
            }
        }
        let rec = recover_v_and_q(&t, 32, DEFAULT_LEAKAGE).unwrap();
        let q = rec.q.as_ref().unwrap();
        assert!(q.iter().all(|v| (v - 0.7).abs() < 0.02 * 0.7), "{q:?}");
        assert!(round_trip_residual(&t, &rec) < 1e-10);
    }

    #[test]
    fn band_leakage_is_detected() {
        // A bulk density touching Σ₁ has a slowly decaying transform in k_d.
        let g = unit(2);
        let p1 = Potentials::new(ScalarField::constant(1.0), ScalarField::Zero);
        let grid = FrequencyGrid::new(&g, 0.75, 0.0, 4).unwrap();
        let t = phase_only_samples(&g, 0.75, &p1, &Potentials::zero(), &grid).unwrap();
        assert!(matches!(recover_v_and_q(&t, 16, 1e-3), Err(Error::BandTooNarrow { .. })));
    }

    #[test]
    fn resynthesis_matches_quadrature_of_reconstruction() {
        let g = unit(2);
        let p1 = Potentials::new(ScalarField::gaussian(1.0, &[0.5, 0.5], 0.12), ScalarField::gaussian(0.5, &[0.45], 0.15));
        let grid = FrequencyGrid::new(&g, 0.75, 50.0, 8).unwrap();
        let t = phase_only_samples(&g, 0.75, &p1, &Potentials::zero(), &grid).unwrap();
        let rec = recover_v_and_q(&t, 16, 1.0).unwrap();
        // Evaluate the reconstructed series pointwise and integrate it by brute force.
        let n = grid.points_per_axis();
        let series = |x: &Point, q: bool| -> f64 {
            let (kx, ky) = (grid.axis(0), grid.axis(1));
            if q {
                let qc = rec.q_coefficients.as_ref().unwrap();
                return kx.iter().zip(qc).map(|(k, c)| c * C::from_polar(1.0, -k * x[0])).sum::<C>().re;
            }
            let y = x[1].powf(1.5);
            let mut s = ZERO;
            for a in 0..n {
                for b in 0..n {
                    s += rec.bulk_coefficients[a * n + b] * C::from_polar(1.0, -(kx[a] * x[0] + ky[b] * y));
                }
            }
            (s * 1.5 * x[1]).re
        };
        let syn = resynthesize(&rec);
        for idx in [0, n * n / 2, 3 * n + 5] {
            let k = grid.point(idx);
            let want = brute_force(&g, 0.75, &|x| series(x, false), &|x| series(x, true), &k);
            assert!((syn[idx] - want).norm() < 1e-6 * want.norm().max(1e-3), "{idx}: {} vs {want}", syn[idx]);
        }
    }
}
