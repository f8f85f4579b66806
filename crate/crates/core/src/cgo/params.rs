use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::discretization::{Mesh, Point};
use crate::error::{Error, Result};

type C = Complex64;

/// Frequency data of a CGO solution `e^{ξ·x}(e^{ik′·x′ + ik_d x_d^{2s}} + r)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CgoParams {
    pub s: f64,
    pub dim: usize,
    pub k: [f64; 3],
    /// `τ(ζ₁ + iζ₂)`; vertical component zero unless `s = 1/2`.
    pub xi: [C; 3],
    pub tau: f64,
    pub zeta1: [f64; 3],
    pub zeta2: [f64; 3],
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Orthonormal `ζ₁ ⊥ ζ₂` in `k^⊥` (and `⊥ e_d` if `horizontal`) by Gram–Schmidt over the
/// coordinate axes.
fn plane(kk: &[f64; 3], dim: usize, horizontal: bool) -> Option<([f64; 3], [f64; 3])> {
    let mut basis: Vec<[f64; 3]> = vec![];
    let push = |v: [f64; 3], basis: &mut Vec<[f64; 3]>| {
        let mut w = v;
        for b in basis.iter() {
            let c = dot(&w, b);
            for j in 0..3 {
                w[j] -= c * b[j];
            }
        }
        let n = dot(&w, &w).sqrt();
        if n > 1e-8 {
            basis.push(w.map(|x| x / n));
        }
    };
    let mut ed = [0.0; 3];
    ed[dim - 1] = 1.0;
    if horizontal {
        push(ed, &mut basis);
    }
    if dot(kk, kk) > 0.0 {
        push(*kk, &mut basis);
    }
    let fixed = basis.len();
    // Vertical axis first: Re ξ_d ≥ 0 is then as large as possible.
    for j in std::iter::once(dim - 1).chain(0..dim - 1) {
        let mut e = [0.0; 3];
        e[j] = 1.0;
        push(e, &mut basis);
    }
    (basis.len() >= fixed + 2).then(|| (basis[fixed], basis[fixed + 1]))
}

/// Picks orthonormal `ζ₁ ⊥ ζ₂` in `k^⊥ ∩ e_d^⊥` and sets `ξ = τ(ζ₁ + iζ₂)`. At `s = 1/2`, when
/// that plane is too small, `ζ₁, ζ₂` are taken in `k^⊥` with `ζ₁` as vertical as possible, so
/// the `O(τ)` Σ₁ data carry a decaying layer rather than an oscillation in `x_d`.
pub fn construct_xi(k: &[f64], tau: f64, s: f64, dim: usize) -> Result<CgoParams> {
    if !(2..=3).contains(&dim) {
        return Err(Error::UnsupportedDimension(dim));
    }
    if k.len() != dim {
        return Err(Error::InvalidInput(format!("k has {} components, expected {dim}", k.len())));
    }
    if !(0.5..1.0).contains(&s) {
        return Err(Error::InvalidWeight(format!("s = {s} not in [1/2, 1)")));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidInput(format!("τ = {tau} must be positive")));
    }
    let mut kk = [0.0; 3];
    kk[..dim].copy_from_slice(k);
    let found = plane(&kk, dim, true).or_else(|| if s == 0.5 { plane(&kk, dim, false) } else { None });
    let Some((z1, z2)) = found else {
        let space = if s == 0.5 { "k^⊥" } else { "k^⊥ ∩ e_d^⊥" };
        return Err(Error::DimensionTooSmall(format!("{space} has dimension < 2 for k = {k:?} in dimension {dim}")));
    };
    let xi = [0, 1, 2].map(|j| C::new(tau * z1[j], tau * z2[j]));
    Ok(CgoParams { s, dim, k: kk, xi, tau, zeta1: z1, zeta2: z2 })
}

impl CgoParams {
    /// Complex length `|ξ| = √2 τ`.
    pub fn xi_norm(&self) -> f64 {
        self.xi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest of the defects `|ξ·ξ|`, `|ξ·k|`, `|ξ_d|` (s > 1/2), `||Re ξ| − |Im ξ||`, `|Re ξ·Im ξ|`,
    /// relative to `τ²` (resp. `τ`).
    pub fn invariant_defect(&self) -> f64 {
        let xx: C = self.xi.iter().map(|z| z * z).sum();
        let xk: C = self.xi.iter().zip(&self.k).map(|(z, k)| z * k).sum();
        let re: [f64; 3] = self.xi.map(|z| z.re);
        let im: [f64; 3] = self.xi.map(|z| z.im);
        let t = self.tau;
        let mut d = [xx.norm() / (t * t), xk.norm() / (t * (1.0 + dot(&self.k, &self.k).sqrt())), 0.0, 0.0, 0.0];
        if self.s > 0.5 {
            d[2] = self.xi[self.dim - 1].norm() / t;
        }
        d[3] = (dot(&re, &re).sqrt() - dot(&im, &im).sqrt()).abs() / t;
        d[4] = dot(&re, &im).abs() / (t * t);
        d.into_iter().fold(0.0, f64::max)
    }

    pub fn vertical_xi(&self) -> C {
        self.xi[self.dim - 1]
    }

    /// `ξ·x`.
    pub fn exponent(&self, x: &Point) -> C {
        (0..self.dim).map(|j| self.xi[j] * x[j]).sum()
    }

    /// The amplitude `a = e^{ik′·x′ + ik_d x_d^{2s}}`.
    pub fn amplitude(&self, x: &Point) -> C {
        let d = self.dim - 1;
        let ph: f64 = (0..d).map(|j| self.k[j] * x[j]).sum::<f64>() + self.k[d] * x[d].max(0.0).powf(2.0 * self.s);
        C::from_polar(1.0, ph)
    }

    /// Oscillation frequency to be resolved: `max(|ξ|, |k|)`.
    pub fn frequency(&self) -> f64 {
        self.xi_norm().max(dot(&self.k, &self.k).sqrt())
    }

    /// Refuses meshes with fewer than `required` cells per wavelength along any axis on which
    /// the phase varies: `max(|ξ|, |k|)` on axes spanned by `ζ₁, ζ₂`, the largest vertical
    /// phase derivative `2s|k_d|` (resp. `|k_j|`) on the others.
    pub fn check_resolution(&self, mesh: &Mesh, required: f64) -> Result<()> {
        for j in 0..self.dim {
            let omega = if self.zeta1[j] != 0.0 || self.zeta2[j] != 0.0 {
                self.frequency()
            } else if j == self.dim - 1 {
                2.0 * self.s * self.k[j].abs()
            } else {
                self.k[j].abs()
            };
            if omega == 0.0 {
                continue;
            }
            let cpw = 2.0 * std::f64::consts::PI / (omega * mesh.max_spacing(j));
            if cpw < required {
                return Err(Error::UnresolvedOscillation { axis: j, cells_per_wavelength: cpw, required });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_examples() {
        let p = construct_xi(&[1.0, 0.0, 0.0], 10.0, 0.5, 3).unwrap();
        assert_eq!(p.xi, [C::new(0.0, 0.0), C::new(0.0, 10.0), C::new(10.0, 0.0)]);
        assert!(matches!(construct_xi(&[1.0, 0.0, 0.0], 1.0, 0.75, 3), Err(Error::DimensionTooSmall(_))));
        let p = construct_xi(&[0.0, 0.0, 2.0], 3.0, 0.75, 3).unwrap();
        assert_eq!(p.xi, [C::new(3.0, 0.0), C::new(0.0, 3.0), C::new(0.0, 0.0)]);
        let p = construct_xi(&[0.0, 0.0], 4.0, 0.5, 2).unwrap();
        assert_eq!(p.xi, [C::new(0.0, 4.0), C::new(4.0, 0.0), C::new(0.0, 0.0)]);
        // Horizontal ξ is preferred at s = 1/2 when it exists.
        let p = construct_xi(&[0.0, 0.0, 0.0], 2.0, 0.5, 3).unwrap();
        assert_eq!(p.vertical_xi(), C::new(0.0, 0.0));
        assert!(matches!(construct_xi(&[1.0, 0.0], 4.0, 0.5, 2), Err(Error::DimensionTooSmall(_))));
        assert!(matches!(construct_xi(&[0.0, 0.0], 4.0, 0.75, 2), Err(Error::DimensionTooSmall(_))));
    }

    #[test]
    fn invariants_for_oblique_k() {
        for k in [[0.3, -1.2, 0.7], [2.0, 1.0, 0.0], [0.0, 0.0, 0.0]] {
            let p = construct_xi(&k, 7.5, 0.5, 3).unwrap();
            assert!(p.invariant_defect() < 1e-14, "{k:?}: {}", p.invariant_defect());
        }
        let p = construct_xi(&[0.0, 0.0, 5.0], 12.0, 0.8, 3).unwrap();
        assert!(p.invariant_defect() < 1e-14);
        assert!((p.xi_norm() - 12.0 * 2f64.sqrt()).abs() < 1e-12);
    }
}
