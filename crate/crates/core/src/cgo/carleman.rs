//! Empirical check of the Carleman inequality on separable analytic test fields.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::construct_xi;
use crate::error::{Error, Result};
use crate::linalg::loglog_slope;
use crate::quadrature::{composite_gauss_legendre, composite_weighted, graded_breaks, Rule};


/// Above this `‖q‖_∞` the `s = 1/2` inequality is not asserted.
pub const Q_SMALL: f64 = 0.25;

/// Value with first and second derivative.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet2 {
    pub v: f64,
    pub d1: f64,
    pub d2: f64,
}

impl Jet2 {
    pub fn var(x: f64) -> Self {
        Self { v: x, d1: 1.0, d2: 0.0 }
    }

    pub fn constant(c: f64) -> Self {
        Self { v: c, d1: 0.0, d2: 0.0 }
    }

    pub fn cos(self) -> Self {
        let (s, c) = self.v.sin_cos();
        Self { v: c, d1: -s * self.d1, d2: -c * self.d1 * self.d1 - s * self.d2 }
    }

    pub fn powi(self, n: i32) -> Self {
        let nf = n as f64;
        let p1 = if n >= 1 { self.v.powi(n - 1) } else { 0.0 };
        let p2 = if n >= 2 { self.v.powi(n - 2) } else { 0.0 };
        Self { v: self.v.powi(n), d1: nf * p1 * self.d1, d2: nf * (nf - 1.0) * p2 * self.d1 * self.d1 + nf * p1 * self.d2 }
    }

    pub fn scale(self, c: f64) -> Self {
        Self { v: c * self.v, d1: c * self.d1, d2: c * self.d2 }
    }
}

impl Add for Jet2 {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self { v: self.v + o.v, d1: self.d1 + o.d1, d2: self.d2 + o.d2 }
    }
}

impl Neg for Jet2 {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale(-1.0)
    }
}

impl Mul for Jet2 {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Self { v: self.v * o.v, d1: self.d1 * o.v + self.v * o.d1, d2: self.d2 * o.v + 2.0 * self.d1 * o.d1 + self.v * o.d2 }
    }
}

/// `u = Π_j φ_j(x_j) ψ(x_d^{2s})` on `[−L_j/2, L_j/2]^{d−1} × [0, H]`, with
/// `φ_j(t) = (1−t²)³(1 + a_j cos(m_j π t + p_j))`, `t = 2x_j/L_j`, and
/// `ψ(y) = (1 − (y/Y)²)³ (c₀ + c₁y + c₂y²)`, `Y = H^{2s}`. Both factors vanish to third order
/// on the sides and top, so `u` and its weighted co-normal derivative vanish off Σ₁.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CarlemanField {
    pub amplitude: f64,
    /// `(a, m, p)` per horizontal axis.
    pub horizontal: Vec<(f64, u32, f64)>,
    pub vertical: [f64; 3],
}

impl CarlemanField {
    pub fn random(dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let horizontal = (0..dim - 1).map(|_| (rng.gen_range(0.0..0.5), rng.gen_range(1..=3), rng.gen_range(0.0..2.0 * PI))).collect();
        let vertical = [rng.gen_range(0.5..1.5), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        Self { amplitude: 1.0, horizontal, vertical }
    }

    pub fn zero(dim: usize) -> Self {
        Self { amplitude: 0.0, ..Self::random(dim, 0) }
    }

    fn phi(&self, j: usize, len: f64, x: f64) -> Jet2 {
        let (a, m, p) = self.horizontal[j];
        let t = Jet2::var(x).scale(2.0 / len);
        let bump = (Jet2::constant(1.0) + -(t * t)).powi(3);
        let osc = Jet2::constant(1.0) + (t.scale(m as f64 * PI) + Jet2::constant(p)).cos().scale(a);
        bump * osc
    }

    fn psi(&self, big_y: f64, y: f64) -> Jet2 {
        let yv = Jet2::var(y);
        let z = yv.scale(1.0 / big_y);
        let [c0, c1, c2] = self.vertical;
        (Jet2::constant(1.0) + -(z * z)).powi(3) * (Jet2::constant(c0) + yv.scale(c1) + (yv * yv).scale(c2))
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CarlemanTerms {
    pub tau: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// `None` for the `0/0` case.
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CarlemanReport {
    pub s: f64,
    pub points: Vec<CarlemanTerms>,
    pub slope: Option<f64>,
    /// The boundedness claim is not asserted (`s = 1/2` with large `q`).
    pub skipped: bool,
    pub warning: Option<String>,
}

/// Geometry and potentials of the Carleman experiment; `V`, `q` constant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CarlemanSetup {
    pub s: f64,
    /// Horizontal lengths followed by the height.
    pub lengths: Vec<f64>,
    pub v: f64,
    pub q: f64,
}

impl CarlemanSetup {
    pub fn dim(&self) -> usize {
        self.lengths.len()
    }
}

/// Samples of one separable term on the per-axis quadrature nodes.
struct Sep(Vec<Vec<f64>>);

fn gram(a: &Sep, b: &Sep, weights: &[Vec<f64>]) -> f64 {
    a.0.iter().zip(&b.0).zip(weights).map(|((x, y), w)| x.iter().zip(y).zip(w).map(|((p, q), w)| p * q * w).sum::<f64>()).product()
}

fn norm(terms: &[Sep], weights: &[Vec<f64>]) -> f64 {
    let mut s = 0.0;
    for a in terms {
        for b in terms {
            s += gram(a, b, weights);
        }
    }
    s.max(0.0).sqrt()
}

/// `LHS = |ξ|^s ‖e^{ξ·x′}u‖_{Σ₁} + |ξ| ‖e^{ξ·x′}w^{1/2}u‖ + ‖e^{ξ·x′}w^{1/2}∇u‖`,
/// `RHS = ‖e^{ξ·x′}w^{1/2}F₀‖ + |ξ|^{1−s} ‖e^{ξ·x′}g‖_{Σ₁}` with `F₀ = −Δ′u − (2s)²x^{4s−2}ψ″Φ + Vu`,
/// `g = −2sψ′(0)Φ + qψ(0)Φ` computed from the field, `F̃ = 0`. `ξ` is horizontal with `|Re ξ| = τ`.
pub fn carleman_ratio(field: &CarlemanField, setup: &CarlemanSetup, tau: f64) -> Result<CarlemanTerms> {
    let dim = setup.dim();
    let d = dim - 1;
    let s = setup.s;
    if field.horizontal.len() != d {
        return Err(Error::InvalidInput("field dimension does not match the setup".into()));
    }
    let mut kd = vec![0.0; dim];
    kd[d] = 1.0;
    let params = construct_xi(&kd, tau, s, dim)?;
    let xin = params.xi_norm();
    let h = setup.lengths[d];
    let big_y = h.powf(2.0 * s);
    check_cutoff(field, setup)?;

    // horizontal rules resolve the exponential weight e^{2τζ₁·x′}
    let panels = (8.0 * tau).ceil().max(32.0) as usize;
    let hrules: Vec<Rule> = (0..d)
        .map(|j| {
            let l = setup.lengths[j];
            let breaks: Vec<f64> = (0..=panels).map(|i| -l / 2.0 + l * i as f64 / panels as f64).collect();
            composite_gauss_legendre(&breaks, 8)
        })
        .collect();
    let vrule = composite_weighted(&graded_breaks(h, 24, 0.6), 1.0 - 2.0 * s, 10);
    let mut weights: Vec<Vec<f64>> = hrules
        .iter()
        .enumerate()
        .map(|(j, r)| r.nodes.iter().zip(&r.weights).map(|(x, w)| w * (2.0 * tau * params.zeta1[j] * x).exp()).collect())
        .collect();
    weights.push(vrule.weights.clone());

    let amp = field.amplitude;
    let phis: Vec<Vec<Jet2>> = (0..d).map(|j| hrules[j].nodes.iter().map(|&x| field.phi(j, setup.lengths[j], x)).collect()).collect();
    let xs = &vrule.nodes;
    let psis: Vec<Jet2> = xs.iter().map(|&x| field.psi(big_y, x.powf(2.0 * s))).collect();
    let hv = |j: usize, f: &dyn Fn(&Jet2) -> f64| phis[j].iter().map(f).collect::<Vec<f64>>();
    let make = |deriv_axis: Option<(usize, u8)>, vert: Vec<f64>, c: f64| {
        let mut f: Vec<Vec<f64>> = (0..d)
            .map(|j| match deriv_axis {
                Some((a, 1)) if a == j => hv(j, &|p| p.d1),
                Some((a, 2)) if a == j => hv(j, &|p| p.d2),
                _ => hv(j, &|p| p.v),
            })
            .collect();
        f.push(vert.into_iter().map(|v| c * amp * v).collect());
        Sep(f)
    };
    let psi_v: Vec<f64> = psis.iter().map(|p| p.v).collect();
    let u = [make(None, psi_v.clone(), 1.0)];
    let mut grad = vec![];
    for j in 0..d {
        grad.push(make(Some((j, 1)), psi_v.clone(), 1.0));
    }
    let dpsi: Vec<f64> = xs.iter().zip(&psis).map(|(x, p)| 2.0 * s * x.powf(2.0 * s - 1.0) * p.d1).collect();
    grad.push(make(None, dpsi, 1.0));
    let grad_norm = grad.iter().map(|t| norm(std::slice::from_ref(t), &weights).powi(2)).sum::<f64>().sqrt();
    let mut f0 = vec![];
    for j in 0..d {
        f0.push(make(Some((j, 2)), psi_v.clone(), -1.0));
    }
    let vert2: Vec<f64> = xs.iter().zip(&psis).map(|(x, p)| -(2.0 * s).powi(2) * x.powf(4.0 * s - 2.0) * p.d2).collect();
    f0.push(make(None, vert2, 1.0));
    f0.push(make(None, psi_v, setup.v));

    // Σ₁ quantities
    let psi0 = field.psi(big_y, 0.0);
    let hweights = &weights[..d];
    let phi_sq: f64 = (0..d).map(|j| phis[j].iter().zip(&hweights[j]).map(|(p, w)| p.v * p.v * w).sum::<f64>()).product();
    let u_sigma = amp * psi0.v.abs() * phi_sq.sqrt();
    let g_sigma = amp * (-2.0 * s * psi0.d1 + setup.q * psi0.v).abs() * phi_sq.sqrt();

    let lhs = xin.powf(s) * u_sigma + xin * norm(&u, &weights) + grad_norm;
    let rhs = norm(&f0, &weights) + xin.powf(1.0 - s) * g_sigma;
    let ratio = if rhs == 0.0 && lhs == 0.0 { None } else { Some(lhs / rhs) };
    Ok(CarlemanTerms { tau, lhs, rhs, ratio })
}

/// Verifies that `u` and `∇u` vanish on the sides and the top.
fn check_cutoff(field: &CarlemanField, setup: &CarlemanSetup) -> Result<()> {
    let d = setup.dim() - 1;
    let h = setup.lengths[d];
    let big_y = h.powf(2.0 * setup.s);
    let mut worst: f64 = 0.0;
    for j in 0..d {
        let l = setup.lengths[j];
        for x in [-l / 2.0, l / 2.0] {
            let p = field.phi(j, l, x);
            worst = worst.max(p.v.abs()).max(p.d1.abs());
        }
    }
    let top = field.psi(big_y, big_y);
    worst = worst.max(top.v.abs()).max(top.d1.abs());
    if worst > 1e-10 {
        return Err(Error::CutoffViolation(worst));
    }
    Ok(())
}

/// Ratio over a τ sweep; the log-log slope measures growth.
pub fn carleman_sweep(field: &CarlemanField, setup: &CarlemanSetup, taus: &[f64]) -> Result<CarlemanReport> {
    let points: Vec<CarlemanTerms> = taus.iter().map(|&t| carleman_ratio(field, setup, t)).collect::<Result<_>>()?;
    let slope = if points.iter().all(|p| p.ratio.is_some()) {
        let r: Vec<f64> = points.iter().map(|p| p.ratio.unwrap()).collect();
        Some(loglog_slope(taus, &r))
    } else {
        None
    };
    let (skipped, warning) = if setup.s == 0.5 && setup.q.abs() > Q_SMALL {
        let msg = format!("s = 1/2 with |q| = {} > {Q_SMALL}: the inequality needs small q, boundedness not asserted", setup.q.abs());
        log::warn!("{msg}");
        (true, Some(msg))
    } else {
        (false, None)
    };
    Ok(CarlemanReport { s: setup.s, points, slope, skipped, warning })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jet_arithmetic_matches_finite_differences() {
        let f = |x: f64| {
            let t = Jet2::var(x);
            (t * t + Jet2::constant(0.3)).powi(3) * t.scale(2.0).cos()
        };
        let x = 0.37;
        let h = 1e-4;
        let j = f(x);
        assert!(((f(x + h).v - f(x - h).v) / (2.0 * h) - j.d1).abs() < 1e-7);
        assert!(((f(x + h).v - 2.0 * j.v + f(x - h).v) / (h * h) - j.d2).abs() < 1e-5);
    }

    #[test]
    fn zero_field_gives_sentinel() {
        let setup = CarlemanSetup { s: 0.75, lengths: vec![1.0, 1.0, 1.0], v: 1.0, q: 0.0 };
        let r = carleman_ratio(&CarlemanField::zero(3), &setup, 4.0).unwrap();
        assert_eq!((r.lhs, r.rhs, r.ratio), (0.0, 0.0, None));
    }

    #[test]
    fn large_q_at_half_is_skipped() {
        let setup = CarlemanSetup { s: 0.5, lengths: vec![1.0, 1.0, 1.0], v: 0.0, q: 2.0 };
        let r = carleman_sweep(&CarlemanField::random(3, 1), &setup, &[4.0, 8.0, 16.0]).unwrap();
        assert!(r.skipped && r.warning.is_some());
    }
}
