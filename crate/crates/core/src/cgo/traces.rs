//! Empirical constants of the boundary trace inequalities.

use serde::{Deserialize, Serialize};

use num_complex::Complex64;

use crate::discretization::{Mesh, NormOperators, ScalarField, WeightMode, WeightSpec};
use crate::error::{Error, Result};

type C = Complex64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceMode {
    /// `‖u‖_{∂Ω} / (μ⁻¹‖∇u‖ + μ‖u‖)`.
    Unweighted,
    /// `‖u‖_{∂Ω} / (μ^{−s}‖d^{α/2}∇u‖ + μ^{1−s}‖d^{α/2}u‖)`, `d` the distance to ∂Ω.
    Weighted,
}

/// Norm operators for one mesh and mode.
pub struct TraceNorms {
    ops: NormOperators,
    mode: TraceMode,
    s: f64,
}

impl TraceNorms {
    pub fn new(mesh: &Mesh, mode: TraceMode, s: f64) -> Result<Self> {
        let w = match mode {
            TraceMode::Unweighted => WeightSpec::new(0.5, WeightMode::DistanceToBoundary)?,
            TraceMode::Weighted => WeightSpec::new(s, WeightMode::DistanceToBoundary)?,
        };
        Ok(Self { ops: NormOperators::new(mesh, &w), mode, s })
    }

    pub fn ratio(&self, u: &[C], mu: f64, c0: f64) -> Result<f64> {
        if !(mu >= c0) {
            return Err(Error::InvalidInput(format!("μ = {mu} below c₀ = {c0}")));
        }
        let n = self.ops.norms(u);
        let den = match self.mode {
            TraceMode::Unweighted => n.h1_seminorm / mu + mu * n.l2w,
            TraceMode::Weighted => mu.powf(-self.s) * n.h1_seminorm + mu.powf(1.0 - self.s) * n.l2w,
        };
        Ok(if den == 0.0 { 0.0 } else { n.l2_boundary / den })
    }
}

pub fn trace_inequality_ratio(mesh: &Mesh, u: &[C], mu: f64, s: f64, mode: TraceMode) -> Result<f64> {
    TraceNorms::new(mesh, mode, s)?.ratio(u, mu, 1.0)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraceStudy {
    pub mode: TraceMode,
    pub s: f64,
    pub mus: Vec<f64>,
    /// `ratios[f][m]` for field `f` and `μ = mus[m]`.
    pub ratios: Vec<Vec<f64>>,
    /// Empirical constant: the largest ratio.
    pub constant: f64,
}

/// Logarithmic μ grid over one decade starting at `c0`.
pub fn mu_grid(c0: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| c0 * 10f64.powf(i as f64 / (n - 1).max(1) as f64)).collect()
}

/// Sweeps μ for interpolants of the given analytic fields.
pub fn trace_study(mesh: &Mesh, mode: TraceMode, s: f64, fields: &[ScalarField], mus: &[f64]) -> Result<TraceStudy> {
    let norms = TraceNorms::new(mesh, mode, s)?;
    let c0 = mus.iter().cloned().fold(f64::INFINITY, f64::min).min(1.0);
    let mut ratios = vec![];
    for f in fields {
        let cf = f.compile();
        let u: Vec<C> = mesh.vertices().iter().map(|p| C::new(cf.eval(p), 0.0)).collect();
        ratios.push(mus.iter().map(|&m| norms.ratio(&u, m, c0)).collect::<Result<Vec<_>>>()?);
    }
    let constant = ratios.iter().flatten().cloned().fold(0.0, f64::max);
    Ok(TraceStudy { mode, s, mus: mus.to_vec(), ratios, constant })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::build_graded_box;

    #[test]
    fn constant_on_unit_square() {
        let m = build_graded_box(&[1.0, 1.0], &[4, 4], 1.0).unwrap();
        let one = vec![C::new(1.0, 0.0); m.n_nodes()];
        let r = trace_inequality_ratio(&m, &one, 10.0, 0.5, TraceMode::Unweighted).unwrap();
        assert!((r - 0.2).abs() < 1e-12);
        assert!(trace_inequality_ratio(&m, &one, 0.5, 0.5, TraceMode::Unweighted).is_err());
        let w = trace_inequality_ratio(&m, &one, 2.0, 0.75, TraceMode::Weighted).unwrap();
        assert!(w.is_finite() && w > 0.0);
    }
}
