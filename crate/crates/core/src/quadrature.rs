//! One-dimensional Gauss rules, including rules exact for `t^α · polynomial`.

use faer::{Mat, Side};

/// A one-dimensional quadrature rule.
#[derive(Clone, Debug, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    pub fn concat(rules: impl IntoIterator<Item = Rule>) -> Rule {
        let mut out = Rule { nodes: vec![], weights: vec![] };
        for r in rules {
            out.nodes.extend(r.nodes);
            out.weights.extend(r.weights);
        }
        out
    }
}

/// Gauss–Legendre on [-1, 1] by Newton iteration on the three-term recurrence.
pub fn gauss_legendre(n: usize) -> Rule {
    assert!(n >= 1);
    if n == 1 {
        return Rule { nodes: vec![0.0], weights: vec![2.0] };
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    Rule { nodes, weights }
}

pub fn gauss_legendre_on(a: f64, b: f64, n: usize) -> Rule {
    let r = gauss_legendre(n);
    let (c, h) = ((a + b) / 2.0, (b - a) / 2.0);
    Rule {
        nodes: r.nodes.iter().map(|x| c + h * x).collect(),
        weights: r.weights.iter().map(|w| w * h).collect(),
    }
}

/// Composite Gauss–Legendre over the panels delimited by `breaks`.
pub fn composite_gauss_legendre(breaks: &[f64], n: usize) -> Rule {
    Rule::concat(breaks.windows(2).map(|w| gauss_legendre_on(w[0], w[1], n)))
}

/// Golub–Welsch: nodes and weights from monic recurrence coefficients.
/// `beta[0]` is the total mass of the measure.
fn golub_welsch(alpha: &[f64], beta: &[f64]) -> Rule {
    let n = alpha.len();
    let j = Mat::<f64>::from_fn(n, n, |i, k| {
        if i == k {
            alpha[i]
        } else if i == k + 1 {
            beta[i].sqrt()
        } else if k == i + 1 {
            beta[k].sqrt()
        } else {
            0.0
        }
    });
    let evd = j.self_adjoint_eigen(Side::Lower).expect("tridiagonal eigensolver");
    let s = evd.S().column_vector();
    let u = evd.U();
    let mut pairs: Vec<(f64, f64)> = (0..n).map(|i| (s[i], beta[0] * u[(0, i)] * u[(0, i)])).collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    Rule { nodes: pairs.iter().map(|p| p.0).collect(), weights: pairs.iter().map(|p| p.1).collect() }
}

/// Gauss rule for `∫_0^1 t^α f(t) dt`, α > -1 (Gauss–Jacobi with parameters (0, α)).
pub fn gauss_jacobi_unit(n: usize, alpha: f64) -> Rule {
    assert!(alpha > -1.0);
    let (a, b) = (0.0, alpha);
    let ab = a + b;
    let mut al = vec![0.0; n];
    let mut be = vec![0.0; n];
    al[0] = (b - a) / (ab + 2.0);
    be[0] = 2f64.powf(ab + 1.0) / (b + 1.0);
    for k in 1..n {
        let kf = k as f64;
        let t = 2.0 * kf + ab;
        al[k] = (b * b - a * a) / (t * (t + 2.0));
        be[k] = 4.0 * kf * (kf + a) * (kf + b) * (kf + ab) / (t * t * (t + 1.0) * (t - 1.0));
    }
    let r = golub_welsch(&al, &be);
    let scale = 2f64.powf(-alpha - 1.0);
    Rule {
        nodes: r.nodes.iter().map(|x| (x + 1.0) / 2.0).collect(),
        weights: r.weights.iter().map(|w| w * scale).collect(),
    }
}

/// Discretized Stieltjes procedure for the weight `t^α` on `[a, b]`, `a > 0`.
fn stieltjes_power_weight(a: f64, b: f64, alpha: f64, n: usize) -> Rule {
    // Geometric panels (end ratio ≤ 2) keep t^α resolved when a ≪ b.
    let panels = ((b / a).log2().ceil() as usize).max(1);
    let r = (b / a).powf(1.0 / panels as f64);
    let breaks: Vec<f64> = (0..=panels).map(|j| if j == panels { b } else { a * r.powi(j as i32) }).collect();
    let base = composite_gauss_legendre(&breaks, (2 * n + 10).max(20));
    let m = base.len();
    let (c, h) = ((a + b) / 2.0, (b - a) / 2.0);
    let u: Vec<f64> = base.nodes.iter().map(|t| (t - c) / h).collect();
    let w: Vec<f64> = base.nodes.iter().zip(&base.weights).map(|(t, wk)| wk * t.powf(alpha)).collect();
    let mut al = vec![0.0; n];
    let mut be = vec![0.0; n];
    let mut p_prev = vec![0.0; m];
    let mut p = vec![1.0; m];
    let mut norm_prev = 1.0;
    for k in 0..n {
        let norm: f64 = (0..m).map(|i| w[i] * p[i] * p[i]).sum();
        al[k] = (0..m).map(|i| w[i] * u[i] * p[i] * p[i]).sum::<f64>() / norm;
        be[k] = if k == 0 { norm } else { norm / norm_prev };
        let next: Vec<f64> = (0..m)
            .map(|i| (u[i] - al[k]) * p[i] - if k == 0 { 0.0 } else { be[k] * p_prev[i] })
            .collect();
        p_prev = std::mem::replace(&mut p, next);
        norm_prev = norm;
    }
    let r = golub_welsch(&al, &be);
    Rule { nodes: r.nodes.iter().map(|x| c + h * x).collect(), weights: r.weights }
}

/// `n`-point Gauss rule for `∫_a^b t^α f(t) dt`, `0 ≤ a < b`.
pub fn weighted_rule(a: f64, b: f64, alpha: f64, n: usize) -> Rule {
    assert!(0.0 <= a && a < b);
    if alpha == 0.0 {
        gauss_legendre_on(a, b, n)
    } else if a == 0.0 {
        let r = gauss_jacobi_unit(n, alpha);
        let s = b.powf(alpha + 1.0);
        Rule { nodes: r.nodes.iter().map(|x| x * b).collect(), weights: r.weights.iter().map(|w| w * s).collect() }
    } else {
        stieltjes_power_weight(a, b, alpha, n)
    }
}

/// Composite weighted rule over the panels delimited by `breaks` (first break may be 0).
pub fn composite_weighted(breaks: &[f64], alpha: f64, n: usize) -> Rule {
    Rule::concat(breaks.windows(2).map(|w| weighted_rule(w[0], w[1], alpha, n)))
}

/// Panel breaks on `[0, b]` refined geometrically toward 0.
pub fn graded_breaks(b: f64, panels: usize, ratio: f64) -> Vec<f64> {
    let mut out = vec![0.0];
    let heights: Vec<f64> = (0..panels).map(|j| ratio.powi((panels - 1 - j) as i32)).collect();
    let total: f64 = heights.iter().sum();
    let mut acc = 0.0;
    for h in heights {
        acc += h / total * b;
        out.push(acc);
    }
    *out.last_mut().unwrap() = b;
    out
}

/// `∫_a^b t^{1-2s} t^m dt` in closed form.
pub fn weighted_cell_moment(a: f64, b: f64, s: f64, m: u32) -> f64 {
    let p = m as f64 + 2.0 - 2.0 * s;
    (b.powf(p) - a.powf(p)) / p
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_exact_for_polynomials() {
        for n in 1..12 {
            let r = gauss_legendre(n);
            for k in 0..(2 * n) {
                let exact = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
                let q = r.integrate(|x| x.powi(k as i32));
                assert!((q - exact).abs() < 1e-13, "n={n} k={k}: {q} vs {exact}");
            }
        }
    }

    #[test]
    fn jacobi_exact_for_weighted_monomials() {
        for &alpha in &[-0.8, -0.5, -0.2, 0.3, 0.6] {
            for n in 1..9 {
                let r = gauss_jacobi_unit(n, alpha);
                for k in 0..(2 * n) {
                    let exact = 1.0 / (k as f64 + alpha + 1.0);
                    let q = r.integrate(|x| x.powi(k as i32));
                    assert!((q - exact).abs() < 1e-12 * exact.max(1.0), "α={alpha} n={n} k={k}");
                }
            }
        }
    }

    #[test]
    fn weighted_rule_matches_moments_off_origin() {
        for &s in &[0.6, 0.75, 0.9] {
            let r = weighted_rule(0.1, 0.35, 1.0 - 2.0 * s, 3);
            for m in 0..6 {
                let exact = weighted_cell_moment(0.1, 0.35, s, m);
                let q = r.integrate(|t| t.powi(m as i32));
                assert!((q - exact).abs() < 1e-14 * exact.abs().max(1.0));
            }
        }
    }

    #[test]
    fn moment_examples() {
        assert!((weighted_cell_moment(0.0, 0.25, 0.75, 0) - 1.0).abs() < 1e-15);
        assert!((weighted_cell_moment(0.0, 0.3, 0.5, 0) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn graded_breaks_are_geometric() {
        let b = graded_breaks(1.0, 2, 0.5);
        assert!((b[1] - 1.0 / 3.0).abs() < 1e-15 && b[2] == 1.0);
    }
}
