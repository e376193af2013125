//! Compactified radial mesh and sampled radial Kähler potentials.
//!
//! Nodes are uniform in `y = -log(1 - ρ/R2)`, so `ρ(y) = R2 (1 - e^{-y})` and the
//! distance to the boundary is `s(y) = R2 - ρ = R2 e^{-y}`. With `dρ/dy = s` the
//! chain rule gives
//!
//! ```text
//! Φ'(ρ)  = Φ_y / s
//! Φ''(ρ) = (Φ_yy + Φ_y) / s²
//! ```

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum node count for the second-order stencils.
pub const MIN_STENCIL_NODES: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: usize,
    pub r2: f64,
    pub y_max: f64,
    pub m: usize,
}

#[derive(Debug, Clone)]
pub struct RadialGrid {
    n: usize,
    r2: f64,
    y_max: f64,
    h: f64,
    y: Vec<f64>,
    rho: Vec<f64>,
    dist: Vec<f64>,
}

impl RadialGrid {
    pub fn new(n: usize, r2: f64, y_max: f64, m: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("dimension must be at least 1".into()));
        }
        if !(r2 > 0.0 && r2.is_finite()) {
            return Err(Error::InvalidArgument(format!("R2 must be positive, got {r2}")));
        }
        if !(y_max > 0.0 && y_max.is_finite()) {
            return Err(Error::InvalidArgument(format!("y_max must be positive, got {y_max}")));
        }
        if m < 3 {
            return Err(Error::InsufficientResolution { nodes: m, required: 3 });
        }
        let h = y_max / (m - 1) as f64;
        let y: Vec<f64> = (0..m).map(|i| i as f64 * h).collect();
        // exp_m1 keeps ρ accurate near the center.
        let rho = y.iter().map(|&y| -r2 * (-y).exp_m1()).collect();
        let dist = y.iter().map(|&y| r2 * (-y).exp()).collect();
        Ok(Self { n, r2, y_max, h, y, rho, dist })
    }

    pub fn from_spec(spec: &GridSpec) -> Result<Self> {
        Self::new(spec.n, spec.r2, spec.y_max, spec.m)
    }

    pub fn spec(&self) -> GridSpec {
        GridSpec { n: self.n, r2: self.r2, y_max: self.y_max, m: self.len() }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn r2(&self) -> f64 {
        self.r2
    }

    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    /// Uniform step in `y`.
    pub fn step(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    /// Boundary distance `R2 - ρ` at each node.
    pub fn dist(&self) -> &[f64] {
        &self.dist
    }

    pub fn rho_of_y(&self, y: f64) -> f64 {
        -self.r2 * (-y).exp_m1()
    }

    /// Same grid with the step halved (`2m - 1` nodes); even nodes coincide.
    pub fn refined(&self) -> Result<Self> {
        Self::new(self.n, self.r2, self.y_max, 2 * self.len() - 1)
    }

    pub fn require_stencil(&self) -> Result<()> {
        if self.len() < MIN_STENCIL_NODES {
            return Err(Error::InsufficientResolution { nodes: self.len(), required: MIN_STENCIL_NODES });
        }
        Ok(())
    }
}

/// Second-order first derivative in `y` (one-sided three-point stencils at the ends).
pub fn d1(v: &[f64], h: f64) -> Vec<f64> {
    let m = v.len();
    let mut out = vec![0.0; m];
    out[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h);
    for i in 1..m - 1 {
        out[i] = (v[i + 1] - v[i - 1]) / (2.0 * h);
    }
    out[m - 1] = (3.0 * v[m - 1] - 4.0 * v[m - 2] + v[m - 3]) / (2.0 * h);
    out
}

/// Second-order second derivative in `y` (one-sided four-point stencils at the ends).
pub fn d2(v: &[f64], h: f64) -> Vec<f64> {
    let m = v.len();
    let h2 = h * h;
    let mut out = vec![0.0; m];
    out[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / h2;
    for i in 1..m - 1 {
        out[i] = (v[i + 1] - 2.0 * v[i] + v[i - 1]) / h2;
    }
    out[m - 1] = (2.0 * v[m - 1] - 5.0 * v[m - 2] + 4.0 * v[m - 3] - v[m - 4]) / h2;
    out
}

/// Tangential (`A = Φ'`) and radial (`B = Φ' + ρΦ''`) eigenvalues of `i∂∂̄Φ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricEigenvalues {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl MetricEigenvalues {
    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    /// `alpha * self + beta * other`, node-wise.
    pub fn combine(&self, alpha: f64, other: &Self, beta: f64) -> Self {
        let mix = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(x, y)| alpha * x + beta * y).collect() };
        Self { a: mix(&self.a, &other.a), b: mix(&self.b, &other.b) }
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self { a: self.a.iter().map(|x| k * x).collect(), b: self.b.iter().map(|x| k * x).collect() }
    }

    /// First node where either eigenvalue fails to be positive.
    pub fn first_non_positive(&self) -> Option<usize> {
        self.a.iter().zip(&self.b).position(|(&a, &b)| !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()))
    }

    pub fn ensure_positive(&self) -> Result<()> {
        match self.first_non_positive() {
            Some(node) => Err(Error::NonKahler { node, a: self.a[node], b: self.b[node] }),
            None => Ok(()),
        }
    }

    pub fn min(&self) -> f64 {
        self.a.iter().chain(&self.b).copied().fold(f64::INFINITY, f64::min)
    }

    /// Largest node-wise relative deviation `|x/y - 1|` over both fields.
    pub fn max_relative_deviation(&self, reference: &Self) -> f64 {
        self.a
            .iter()
            .zip(&reference.a)
            .chain(self.b.iter().zip(&reference.b))
            .map(|(x, y)| ((x - y) / y).abs())
            .fold(0.0, f64::max)
    }
}

/// Closed-form part of a potential: values with exact `ρ`-derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticPart {
    pub values: Vec<f64>,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
}

impl AnalyticPart {
    fn eigenvalues(&self, rho: &[f64]) -> MetricEigenvalues {
        MetricEigenvalues {
            a: self.d1.clone(),
            b: self.d1.iter().zip(&self.d2).zip(rho).map(|((d1, d2), r)| d1 + r * d2).collect(),
        }
    }
}

/// A U(n)-invariant potential `Φ(ρ)` sampled on a [`RadialGrid`].
///
/// The potential is held as an optional closed-form part (exact derivatives) plus a
/// sampled part that is differentiated by finite differences. Linear combinations keep
/// the two parts separate, so background metrics never pick up differencing error.
#[derive(Debug, Clone)]
pub struct RadialPotential {
    grid: Arc<RadialGrid>,
    analytic: Option<AnalyticPart>,
    sampled: Vec<f64>,
}

impl RadialPotential {
    pub fn zero(grid: Arc<RadialGrid>) -> Self {
        let m = grid.len();
        Self { grid, analytic: None, sampled: vec![0.0; m] }
    }

    pub fn sampled(grid: Arc<RadialGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "field length {} does not match grid size {}",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite potential at node {i}")));
        }
        Ok(Self { grid, analytic: None, sampled: values })
    }

    /// Samples `f(ρ)` at the nodes; derivatives will be taken by finite differences.
    pub fn from_fn(grid: Arc<RadialGrid>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.rho().iter().map(|&r| f(r)).collect();
        Self::sampled(grid, values)
    }

    /// Closed-form potential given `Φ`, `Φ'` and `Φ''` as functions of `ρ`.
    pub fn analytic(
        grid: Arc<RadialGrid>,
        f: impl Fn(f64) -> f64,
        f1: impl Fn(f64) -> f64,
        f2: impl Fn(f64) -> f64,
    ) -> Result<Self> {
        let rho = grid.rho();
        let part = AnalyticPart {
            values: rho.iter().map(|&r| f(r)).collect(),
            d1: rho.iter().map(|&r| f1(r)).collect(),
            d2: rho.iter().map(|&r| f2(r)).collect(),
        };
        Self::from_parts(grid, Some(part), None)
    }

    pub fn from_parts(
        grid: Arc<RadialGrid>,
        analytic: Option<AnalyticPart>,
        sampled: Option<Vec<f64>>,
    ) -> Result<Self> {
        let m = grid.len();
        let sampled = sampled.unwrap_or_else(|| vec![0.0; m]);
        if sampled.len() != m {
            return Err(Error::InvalidArgument("sampled field length mismatch".into()));
        }
        if let Some(p) = &analytic {
            if p.values.len() != m || p.d1.len() != m || p.d2.len() != m {
                return Err(Error::InvalidArgument("analytic field length mismatch".into()));
            }
            if let Some(i) = p.values.iter().chain(&p.d1).chain(&p.d2).position(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!("non-finite analytic potential data (entry {i})")));
            }
        }
        Ok(Self { grid, analytic, sampled })
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn analytic_part(&self) -> Option<&AnalyticPart> {
        self.analytic.as_ref()
    }

    pub fn sampled_part(&self) -> &[f64] {
        &self.sampled
    }

    /// Total potential values at the nodes.
    pub fn values(&self) -> Vec<f64> {
        match &self.analytic {
            Some(p) => p.values.iter().zip(&self.sampled).map(|(a, s)| a + s).collect(),
            None => self.sampled.clone(),
        }
    }

    pub fn scaled(&self, k: f64) -> Self {
        self.combine(k, &Self::zero(self.grid.clone()), 0.0)
    }

    /// `alpha * self + beta * other`. Both must live on the same grid.
    pub fn combine(&self, alpha: f64, other: &Self, beta: f64) -> Self {
        let mix = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(x, y)| alpha * x + beta * y).collect() };
        let analytic = match (&self.analytic, &other.analytic) {
            (None, None) => None,
            (Some(p), None) => Some(AnalyticPart {
                values: p.values.iter().map(|v| alpha * v).collect(),
                d1: p.d1.iter().map(|v| alpha * v).collect(),
                d2: p.d2.iter().map(|v| alpha * v).collect(),
            }),
            (None, Some(q)) => Some(AnalyticPart {
                values: q.values.iter().map(|v| beta * v).collect(),
                d1: q.d1.iter().map(|v| beta * v).collect(),
                d2: q.d2.iter().map(|v| beta * v).collect(),
            }),
            (Some(p), Some(q)) => {
                Some(AnalyticPart { values: mix(&p.values, &q.values), d1: mix(&p.d1, &q.d1), d2: mix(&p.d2, &q.d2) })
            }
        };
        Self { grid: self.grid.clone(), analytic, sampled: mix(&self.sampled, &other.sampled) }
    }

    /// Adds a sampled field (e.g. a flow potential `u`).
    pub fn plus_sampled(&self, field: &[f64]) -> Self {
        let mut out = self.clone();
        for (s, f) in out.sampled.iter_mut().zip(field) {
            *s += f;
        }
        out
    }

    /// Eigenvalues of the closed-form part only (zero if there is none).
    pub(crate) fn analytic_eigenvalues(&self) -> MetricEigenvalues {
        match &self.analytic {
            Some(p) => p.eigenvalues(self.grid.rho()),
            None => {
                let m = self.grid.len();
                MetricEigenvalues { a: vec![0.0; m], b: vec![0.0; m] }
            }
        }
    }
}

/// Finite-difference eigenvalues of a sampled field in the compactified chart.
pub(crate) fn sampled_eigenvalues(grid: &RadialGrid, v: &[f64]) -> MetricEigenvalues {
    let h = grid.step();
    let dy = d1(v, h);
    let dyy = d2(v, h);
    let mut a = Vec::with_capacity(v.len());
    let mut b = Vec::with_capacity(v.len());
    for i in 0..v.len() {
        let s = grid.dist()[i];
        let r = grid.rho()[i];
        let first = dy[i] / s;
        a.push(first);
        b.push(first + r * (dyy[i] + dy[i]) / (s * s));
    }
    MetricEigenvalues { a, b }
}
