//! Named analytic field families used for potentials, boundary data and targets.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mesh::{Mesh, Point};
use super::weight::WeightSpec;
use crate::error::{Error, Result};

/// A real scalar field. Vector arguments (`center`, `frequency`) may be shorter than the
/// spatial dimension; missing components are ignored (resp. zero).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScalarField {
    #[default]
    Zero,
    Constant {
        value: f64,
    },
    GaussianBump {
        amplitude: f64,
        center: Vec<f64>,
        sigma: f64,
    },
    /// `amplitude · cos(k·x + phase)`
    CosineMode {
        amplitude: f64,
        frequency: Vec<f64>,
        #[serde(default)]
        phase: f64,
    },
    /// Seeded sum of `modes` cosines with integer frequencies (in units of π) up to `max_freq`,
    /// scaled so the coefficient sum equals `amplitude`.
    RandomSmooth {
        amplitude: f64,
        modes: usize,
        seed: u64,
        #[serde(default = "default_max_freq")]
        max_freq: u32,
        #[serde(default)]
        offset: f64,
    },
    Sum {
        terms: Vec<ScalarField>,
    },
}

fn default_max_freq() -> u32 {
    3
}

#[derive(Clone, Debug)]
enum Term {
    Const(f64),
    Gauss { amp: f64, center: [f64; 3], mask: [bool; 3], inv: f64 },
    Cos { amp: f64, k: [f64; 3], phase: f64 },
}

/// Fast evaluator for a [`ScalarField`].
#[derive(Clone, Debug)]
pub struct CompiledScalar {
    terms: Vec<Term>,
}

fn pad(v: &[f64]) -> ([f64; 3], [bool; 3]) {
    let mut out = [0.0; 3];
    let mut mask = [false; 3];
    for (j, x) in v.iter().take(3).enumerate() {
        out[j] = *x;
        mask[j] = true;
    }
    (out, mask)
}

impl ScalarField {
    pub fn constant(value: f64) -> Self {
        ScalarField::Constant { value }
    }

    pub fn gaussian(amplitude: f64, center: &[f64], sigma: f64) -> Self {
        ScalarField::GaussianBump { amplitude, center: center.to_vec(), sigma }
    }

    pub fn cosine(amplitude: f64, frequency: &[f64], phase: f64) -> Self {
        ScalarField::CosineMode { amplitude, frequency: frequency.to_vec(), phase }
    }

    pub fn random_smooth(amplitude: f64, modes: usize, seed: u64) -> Self {
        ScalarField::RandomSmooth { amplitude, modes, seed, max_freq: default_max_freq(), offset: 0.0 }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            ScalarField::Zero => true,
            ScalarField::Constant { value } => *value == 0.0,
            ScalarField::GaussianBump { amplitude, .. } | ScalarField::CosineMode { amplitude, .. } => *amplitude == 0.0,
            ScalarField::RandomSmooth { amplitude, offset, .. } => *amplitude == 0.0 && *offset == 0.0,
            ScalarField::Sum { terms } => terms.iter().all(|t| t.is_zero()),
        }
    }

    pub fn compile(&self) -> CompiledScalar {
        let mut terms = vec![];
        self.push_terms(&mut terms);
        CompiledScalar { terms }
    }

    fn push_terms(&self, out: &mut Vec<Term>) {
        match self {
            ScalarField::Zero => {}
            ScalarField::Constant { value } => out.push(Term::Const(*value)),
            ScalarField::GaussianBump { amplitude, center, sigma } => {
                let (c, mask) = pad(center);
                out.push(Term::Gauss { amp: *amplitude, center: c, mask, inv: 1.0 / (2.0 * sigma * sigma) });
            }
            ScalarField::CosineMode { amplitude, frequency, phase } => {
                out.push(Term::Cos { amp: *amplitude, k: pad(frequency).0, phase: *phase })
            }
            ScalarField::RandomSmooth { amplitude, modes, seed, max_freq, offset } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let mf = *max_freq as i64;
                let mut raw = vec![];
                for _ in 0..*modes {
                    let mut k = [0.0; 3];
                    for kj in k.iter_mut() {
                        *kj = PI * rng.gen_range(-mf..=mf) as f64;
                    }
                    let phase = rng.gen_range(0.0..2.0 * PI);
                    let kk = k.iter().map(|x| x * x).sum::<f64>() / (PI * PI);
                    let a: f64 = rng.gen_range(-1.0..1.0) / (1.0 + kk);
                    raw.push((a, k, phase));
                }
                let total: f64 = raw.iter().map(|r| r.0.abs()).sum::<f64>().max(1e-300);
                if *offset != 0.0 {
                    out.push(Term::Const(*offset));
                }
                for (a, k, phase) in raw {
                    out.push(Term::Cos { amp: amplitude * a / total, k, phase });
                }
            }
            ScalarField::Sum { terms } => terms.iter().for_each(|t| t.push_terms(out)),
        }
    }

    /// Spatial bandwidth: the frequency beyond which the spectrum is negligible.
    pub fn bandwidth(&self) -> f64 {
        match self {
            ScalarField::Zero | ScalarField::Constant { .. } => 0.0,
            ScalarField::GaussianBump { sigma, .. } => 6.0 / sigma,
            ScalarField::CosineMode { frequency, .. } => frequency.iter().map(|k| k * k).sum::<f64>().sqrt(),
            ScalarField::RandomSmooth { max_freq, .. } => PI * *max_freq as f64 * 3f64.sqrt(),
            ScalarField::Sum { terms } => terms.iter().map(|t| t.bandwidth()).fold(0.0, f64::max),
        }
    }

    pub fn eval(&self, x: &Point) -> f64 {
        self.compile().eval(x)
    }
}

impl CompiledScalar {
    pub fn eval(&self, x: &Point) -> f64 {
        self.terms
            .iter()
            .map(|t| match t {
                Term::Const(c) => *c,
                Term::Gauss { amp, center, mask, inv } => {
                    let r2: f64 = (0..3).filter(|&j| mask[j]).map(|j| (x[j] - center[j]).powi(2)).sum();
                    amp * (-r2 * inv).exp()
                }
                Term::Cos { amp, k, phase } => amp * (k[0] * x[0] + k[1] * x[1] + k[2] * x[2] + phase).cos(),
            })
            .sum()
    }

    pub fn grad(&self, x: &Point) -> [f64; 3] {
        let mut g = [0.0; 3];
        for t in &self.terms {
            match t {
                Term::Const(_) => {}
                Term::Gauss { amp, center, mask, inv } => {
                    let r2: f64 = (0..3).filter(|&j| mask[j]).map(|j| (x[j] - center[j]).powi(2)).sum();
                    let e = amp * (-r2 * inv).exp();
                    for j in 0..3 {
                        if mask[j] {
                            g[j] += -2.0 * inv * (x[j] - center[j]) * e;
                        }
                    }
                }
                Term::Cos { amp, k, phase } => {
                    let s = -amp * (k[0] * x[0] + k[1] * x[1] + k[2] * x[2] + phase).sin();
                    for j in 0..3 {
                        g[j] += s * k[j];
                    }
                }
            }
        }
        g
    }
}

/// A real vector field (magnetic potential).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum VectorField {
    #[default]
    Zero,
    Constant { value: Vec<f64> },
    /// `amplitude · (sin πx̃₁ cos πx̃₂, −cos πx̃₁ sin πx̃₂, 0)` with `x̃` the box-normalized
    /// coordinates; divergence free and tangential on every face of `[lo, hi]`.
    Swirl { amplitude: f64, lo: Vec<f64>, hi: Vec<f64> },
}

impl VectorField {
    pub fn swirl_on(mesh: &Mesh, amplitude: f64) -> Self {
        VectorField::Swirl { amplitude, lo: mesh.lo[..mesh.dim].to_vec(), hi: mesh.hi[..mesh.dim].to_vec() }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            VectorField::Zero => true,
            VectorField::Constant { value } => value.iter().all(|v| *v == 0.0),
            VectorField::Swirl { amplitude, .. } => *amplitude == 0.0,
        }
    }

    pub fn eval(&self, x: &Point) -> [f64; 3] {
        match self {
            VectorField::Zero => [0.0; 3],
            VectorField::Constant { value } => pad(value).0,
            VectorField::Swirl { amplitude, lo, hi } => {
                let t = |j: usize| PI * (x[j] - lo[j]) / (hi[j] - lo[j]);
                let (a, b) = (t(0), t(1));
                [amplitude * a.sin() * b.cos(), -amplitude * a.cos() * b.sin(), 0.0]
            }
        }
    }
}

/// Potentials `(V, q, A)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct Potentials {
    #[serde(default)]
    pub v: ScalarField,
    #[serde(default)]
    pub q: ScalarField,
    #[serde(default)]
    pub a: Option<VectorField>,
}

impl Potentials {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn new(v: ScalarField, q: ScalarField) -> Self {
        Self { v, q, a: None }
    }

    pub fn with_magnetic(mut self, a: VectorField) -> Self {
        self.a = Some(a);
        self
    }

    pub fn has_magnetic(&self) -> bool {
        self.a.as_ref().is_some_and(|a| !a.is_zero())
    }

    /// Checks finiteness, the s = 1/2 restriction for `A`, and `ν·A = 0` on the boundary.
    pub fn validate(&self, mesh: &Mesh, weight: &WeightSpec) -> Result<()> {
        let (v, q) = (self.v.compile(), self.q.compile());
        for c in 0..mesh.n_cells() {
            if !v.eval(&mesh.cell_centroid(c)).is_finite() {
                return Err(Error::InvalidInput("V is not finite".into()));
            }
        }
        for f in &mesh.facets {
            if !q.eval(&mesh.facet_centroid(f)).is_finite() {
                return Err(Error::InvalidInput("q is not finite".into()));
            }
        }
        if let Some(a) = self.a.as_ref().filter(|a| !a.is_zero()) {
            if (weight.s - 0.5).abs() > 1e-14 {
                return Err(Error::MagneticWithDegenerateWeight(weight.s));
            }
            let scale = mesh.vertices().iter().map(|p| a.eval(p).iter().map(|x| x.abs()).fold(0.0, f64::max)).fold(0.0, f64::max);
            for f in &mesh.facets {
                for p in mesh.facet_nodes(f).into_iter().map(|i| mesh.vertex(i)).chain([mesh.facet_centroid(f)]) {
                    let an = a.eval(&p)[f.axis];
                    if an.abs() > 1e-12 * scale.max(1.0) {
                        return Err(Error::InvalidInput(format!("ν·A = {an:e} ≠ 0 on the boundary")));
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::mesh::build_graded_box;

    #[test]
    fn random_smooth_is_deterministic() {
        let f = ScalarField::random_smooth(1.0, 6, 42).compile();
        let g = ScalarField::random_smooth(1.0, 6, 42).compile();
        let x = [0.3, 0.7, 0.1];
        assert_eq!(f.eval(&x), g.eval(&x));
        assert!(f.eval(&x).abs() <= 1.0 + 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let f = ScalarField::Sum {
            terms: vec![ScalarField::gaussian(2.0, &[0.5, 0.4], 0.2), ScalarField::random_smooth(1.0, 4, 3)],
        }
        .compile();
        let x = [0.31, 0.52, 0.0];
        let g = f.grad(&x);
        for j in 0..2 {
            let (mut a, mut b) = (x, x);
            a[j] += 1e-6;
            b[j] -= 1e-6;
            assert!(((f.eval(&a) - f.eval(&b)) / 2e-6 - g[j]).abs() < 1e-7);
        }
    }

    #[test]
    fn swirl_is_tangential_and_restricted_to_half() {
        let m = build_graded_box(&[1.0, 2.0], &[4, 4], 1.0).unwrap();
        let p = Potentials::zero().with_magnetic(VectorField::swirl_on(&m, 1.5));
        p.validate(&m, &WeightSpec::vertical(0.5).unwrap()).unwrap();
        assert!(matches!(
            p.validate(&m, &WeightSpec::vertical(0.75).unwrap()),
            Err(Error::MagneticWithDegenerateWeight(_))
        ));
        let bad = Potentials::zero().with_magnetic(VectorField::Constant { value: vec![1.0, 0.0] });
        assert!(bad.validate(&m, &WeightSpec::vertical(0.5).unwrap()).is_err());
    }
}
