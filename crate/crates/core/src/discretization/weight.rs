use serde::{Deserialize, Serialize};

use super::mesh::{Mesh, Point};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WeightMode {
    /// `x_d^{1-2s}`
    Vertical,
    /// `d(x)^{1-2s}` with `d` the (smoothly clamped) distance to the box boundary.
    DistanceToBoundary,
}

/// Muckenhoupt weight specification.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    pub s: f64,
    pub mode: WeightMode,
    /// Plateau value of the clamped distance; `None` means half the inradius.
    #[serde(default)]
    pub clamp: Option<f64>,
}

impl WeightSpec {
    pub fn new(s: f64, mode: WeightMode) -> Result<Self> {
        let w = Self { s, mode, clamp: None };
        w.validate()?;
        Ok(w)
    }

    pub fn vertical(s: f64) -> Result<Self> {
        Self::new(s, WeightMode::Vertical)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s > 0.0 && self.s < 1.0) {
            return Err(Error::InvalidWeight(format!("s = {} outside (0, 1)", self.s)));
        }
        if let Some(c) = self.clamp {
            if !(c > 0.0) {
                return Err(Error::InvalidWeight(format!("clamp = {c} must be positive")));
            }
        }
        Ok(())
    }

    /// Exponent `1 - 2s`.
    pub fn alpha(&self) -> f64 {
        1.0 - 2.0 * self.s
    }

    pub fn is_unit(&self) -> bool {
        self.alpha() == 0.0
    }

    pub fn clamp_value(&self, mesh: &Mesh) -> f64 {
        self.clamp.unwrap_or_else(|| {
            let inradius = (0..mesh.dim).map(|j| mesh.lengths[j] / 2.0).fold(f64::INFINITY, f64::min);
            inradius / 2.0
        })
    }

    /// Distance that enters the weight, with the index of the nearest axis.
    pub fn distance(&self, mesh: &Mesh, x: &Point) -> (f64, usize) {
        match self.mode {
            WeightMode::Vertical => (x[mesh.vertical()], mesh.vertical()),
            WeightMode::DistanceToBoundary => {
                let (a, axis) = raw_box_distance(mesh, x);
                (SmoothClamp::new(self.clamp_value(mesh)).value(a), axis)
            }
        }
    }

    pub fn eval(&self, mesh: &Mesh, x: &Point) -> f64 {
        if self.is_unit() {
            return 1.0;
        }
        self.distance(mesh, x).0.powf(self.alpha())
    }

    /// `(ρ, Q)` with `ρ = d^{(1-2s)/2}` and `Q = Δρ / ρ`.
    pub fn liouville(&self, mesh: &Mesh, x: &Point) -> (f64, f64) {
        let b = self.alpha() / 2.0;
        match self.mode {
            WeightMode::Vertical => {
                let t = x[mesh.vertical()];
                (t.powf(b), b * (b - 1.0) / (t * t))
            }
            WeightMode::DistanceToBoundary => {
                let (a, _) = raw_box_distance(mesh, x);
                let c = SmoothClamp::new(self.clamp_value(mesh));
                let (p, p1, p2) = (c.value(a), c.d1(a), c.d2(a));
                (p.powf(b), b * (b - 1.0) * p1 * p1 / (p * p) + b * p2 / p)
            }
        }
    }
}

/// Unclamped Euclidean distance to the box boundary and the axis attaining it.
pub fn raw_box_distance(mesh: &Mesh, x: &Point) -> (f64, usize) {
    let mut best = (f64::INFINITY, 0);
    for j in 0..mesh.dim {
        let t = (x[j] - mesh.lo[j]).min(mesh.hi[j] - x[j]);
        if t < best.0 {
            best = (t, j);
        }
    }
    best
}

/// `φ(a) = a` for `a ≤ c/2`, constant `c` for `a ≥ 3c/2`, `C²` in between
/// (`φ' = 1 − smoothstep`).
#[derive(Clone, Copy, Debug)]
pub struct SmoothClamp {
    a0: f64,
    a1: f64,
}

impl SmoothClamp {
    pub fn new(c: f64) -> Self {
        Self { a0: 0.5 * c, a1: 1.5 * c }
    }

    fn u(&self, a: f64) -> f64 {
        ((a - self.a0) / (self.a1 - self.a0)).clamp(0.0, 1.0)
    }

    pub fn value(&self, a: f64) -> f64 {
        if a <= self.a0 {
            return a;
        }
        let u = self.u(a);
        self.a0 + (self.a1 - self.a0) * (u - u * u * u + 0.5 * u.powi(4))
    }

    pub fn d1(&self, a: f64) -> f64 {
        let u = self.u(a);
        1.0 - u * u * (3.0 - 2.0 * u)
    }

    pub fn d2(&self, a: f64) -> f64 {
        if a <= self.a0 || a >= self.a1 {
            return 0.0;
        }
        let u = self.u(a);
        -6.0 * u * (1.0 - u) / (self.a1 - self.a0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::mesh::build_graded_box;

    #[test]
    fn clamp_is_continuous_and_flat() {
        let c = SmoothClamp::new(0.2);
        assert_eq!(c.value(0.05), 0.05);
        assert!((c.value(0.3) - 0.2).abs() < 1e-15);
        assert!((c.value(0.5) - 0.2).abs() < 1e-15);
        let h = 1e-6;
        for &a in &[0.11, 0.17, 0.26] {
            let fd = (c.value(a + h) - c.value(a - h)) / (2.0 * h);
            assert!((fd - c.d1(a)).abs() < 1e-8);
            let fd2 = (c.d1(a + h) - c.d1(a - h)) / (2.0 * h);
            assert!((fd2 - c.d2(a)).abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_bad_s() {
        assert!(WeightSpec::vertical(1.0).is_err());
        assert!(WeightSpec::vertical(0.0).is_err());
    }

    #[test]
    fn liouville_potential_matches_finite_differences() {
        let m = build_graded_box(&[1.0, 1.0], &[4, 4], 1.0).unwrap();
        for mode in [WeightMode::Vertical, WeightMode::DistanceToBoundary] {
            let w = WeightSpec::new(0.75, mode).unwrap();
            let x = [0.45, 0.3, 0.0];
            let (rho, q) = w.liouville(&m, &x);
            let h = 1e-4;
            let f = |p: Point| w.liouville(&m, &p).0;
            let mut lap = 0.0;
            for j in 0..2 {
                let (mut a, mut b) = (x, x);
                a[j] += h;
                b[j] -= h;
                lap += (f(a) - 2.0 * rho + f(b)) / (h * h);
            }
            assert!((lap / rho - q).abs() < 1e-5 * q.abs().max(1.0), "{mode:?}: {} vs {q}", lap / rho);
        }
    }
}
