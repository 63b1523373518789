//! Gauss–Legendre quadrature with globally adaptive interval bisection.

use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use crate::error::{invalid, Error, Result};

/// Nodes and weights of an `n`-point Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Computes the rule by Newton iteration on `P_n` from Chebyshev initial guesses.
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid("nodes", "a quadrature rule needs at least one node"));
        }
        let mut nodes = alloc::vec![0.0; n];
        let mut weights = alloc::vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() <= 1e-16 * x.abs().max(1.0) {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Ok(Self { nodes, weights })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Applies the rule on `[a, b]`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        let sum: f64 = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(mid + half * x))
            .sum();
        half * sum
    }
}

// Value and derivative of the Legendre polynomial of degree n at x.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Adaptive integrator: the interval with the largest error estimate is
/// bisected until the summed estimate meets `rel_tol * |I| + abs_tol`.
///
/// The error of a panel is `|Q[a,b] - (Q[a,m] + Q[m,b])|`, and the refined
/// value is kept.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveQuadrature {
    rule: GaussLegendre,
    rel_tol: f64,
    abs_tol: f64,
    max_subintervals: usize,
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

/// Integral estimate with its bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureEstimate {
    pub value: f64,
    pub error_estimate: f64,
    pub subintervals: usize,
}

impl Default for AdaptiveQuadrature {
    /// 64 nodes, relative tolerance 1e-8, absolute tolerance 1e-15 (roundoff
    /// level for integrands bounded by one on a unit interval), at most 1024
    /// subintervals.
    fn default() -> Self {
        Self::new(64, 1e-8, 1e-15, 1 << 10).expect("default quadrature settings are valid")
    }
}

impl AdaptiveQuadrature {
    pub fn new(nodes: usize, rel_tol: f64, abs_tol: f64, max_subintervals: usize) -> Result<Self> {
        if !(rel_tol >= 0.0) || !(abs_tol >= 0.0) || (rel_tol == 0.0 && abs_tol == 0.0) {
            return Err(invalid("tolerance", "need a positive relative or absolute tolerance"));
        }
        if max_subintervals == 0 {
            return Err(invalid("max_subintervals", "must be at least 1"));
        }
        Ok(Self {
            rule: GaussLegendre::new(nodes)?,
            rel_tol,
            abs_tol,
            max_subintervals,
        })
    }

    pub fn rel_tol(&self) -> f64 {
        self.rel_tol
    }

    pub fn rule(&self) -> &GaussLegendre {
        &self.rule
    }

    fn panel<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, f: &mut F) -> Panel {
        let m = 0.5 * (a + b);
        let whole = self.rule.integrate(a, b, &mut *f);
        let left = self.rule.integrate(a, m, &mut *f);
        let right = self.rule.integrate(m, b, &mut *f);
        let value = left + right;
        Panel {
            a,
            b,
            value,
            error: (whole - value).abs(),
        }
    }

    /// Integrates `f` over `[a, b]`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, f: F) -> Result<QuadratureEstimate> {
        self.integrate_with_breaks(a, b, &[], f)
    }

    /// Integrates `f` over `[a, b]` starting from panels split at `breaks`.
    ///
    /// Breakpoints outside `(a, b)` or not strictly increasing are ignored.
    pub fn integrate_with_breaks<F: FnMut(f64) -> f64>(
        &self,
        a: f64,
        b: f64,
        breaks: &[f64],
        mut f: F,
    ) -> Result<QuadratureEstimate> {
        if !(a.is_finite() && b.is_finite()) || b < a {
            return Err(invalid("interval", "need finite bounds with a <= b"));
        }
        if a == b {
            return Ok(QuadratureEstimate {
                value: 0.0,
                error_estimate: 0.0,
                subintervals: 0,
            });
        }
        let mut edges = Vec::with_capacity(breaks.len() + 2);
        edges.push(a);
        for &x in breaks {
            if x > *edges.last().unwrap() && x < b {
                edges.push(x);
            }
        }
        edges.push(b);

        let mut panels: Vec<Panel> = edges
            .windows(2)
            .map(|w| self.panel(w[0], w[1], &mut f))
            .collect();

        loop {
            let value: f64 = panels.iter().map(|p| p.value).sum();
            let error: f64 = panels.iter().map(|p| p.error).sum();
            if !value.is_finite() {
                return Err(Error::FormulaDomain(alloc::format!(
                    "integrand produced a non-finite value on [{a}, {b}]"
                )));
            }
            if error <= self.rel_tol * value.abs() + self.abs_tol {
                return Ok(QuadratureEstimate {
                    value,
                    error_estimate: error,
                    subintervals: panels.len(),
                });
            }
            let (worst, _) = panels
                .iter()
                .enumerate()
                .fold((0, -1.0), |acc, (i, p)| if p.error > acc.1 { (i, p.error) } else { acc });
            let p = panels[worst];
            let m = 0.5 * (p.a + p.b);
            let too_narrow = !(m > p.a && m < p.b);
            if panels.len() >= self.max_subintervals || too_narrow {
                return Err(Error::Quadrature {
                    lower: a,
                    upper: b,
                    estimate: value,
                    error_estimate: error,
                    subintervals: panels.len(),
                });
            }
            panels[worst] = self.panel(p.a, m, &mut f);
            panels.push(self.panel(m, p.b, &mut f));
        }
    }
}
