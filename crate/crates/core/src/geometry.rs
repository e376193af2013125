//! Kähler calculus for U(n)-invariant metrics `ω = i∂∂̄Φ(|z|²)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{d1, sampled_eigenvalues, MetricEigenvalues, RadialGrid, RadialPotential};

/// Eigenvalue fields of `i∂∂̄Φ`: closed-form part exactly, sampled part by
/// second-order differences in `y`.
pub fn metric_eigenvalues(phi: &RadialPotential) -> Result<MetricEigenvalues> {
    let grid = phi.grid();
    grid.require_stencil()?;
    let exact = phi.analytic_eigenvalues();
    let fd = sampled_eigenvalues(grid, phi.sampled_part());
    Ok(exact.combine(1.0, &fd, 1.0))
}

/// `det g = A^{n-1} B` per node.
pub fn ma_determinant(eig: &MetricEigenvalues, n: usize) -> Result<Vec<f64>> {
    eig.ensure_positive()?;
    Ok(eig.a.iter().zip(&eig.b).map(|(a, b)| a.powi(n as i32 - 1) * b).collect())
}

/// `log det g`, computed as a sum of logs to stay finite for large eigenvalues.
pub fn log_determinant(eig: &MetricEigenvalues, n: usize) -> Result<Vec<f64>> {
    eig.ensure_positive()?;
    let k = (n - 1) as f64;
    Ok(eig.a.iter().zip(&eig.b).map(|(a, b)| k * a.ln() + b.ln()).collect())
}

/// `Δ_ω v = (n-1) v'/A + (v' + ρ v'')/B`, with the center limit `n v'(0)/A(0)`.
pub fn laplacian_radial(v: &[f64], eig: &MetricEigenvalues, grid: &RadialGrid, n: usize) -> Result<Vec<f64>> {
    grid.require_stencil()?;
    if v.len() != grid.len() || eig.len() != grid.len() {
        return Err(Error::InvalidArgument("field length does not match grid".into()));
    }
    eig.ensure_positive()?;
    // v' and v' + ρv'' are exactly the A and B "eigenvalues" of v.
    let lv = sampled_eigenvalues(grid, v);
    let k = (n - 1) as f64;
    let mut out: Vec<f64> = (0..v.len()).map(|i| k * lv.a[i] / eig.a[i] + lv.b[i] / eig.b[i]).collect();
    out[0] = n as f64 * lv.a[0] / eig.a[0];
    Ok(out)
}

/// Potential `-log det g`; its `i∂∂̄` is the Ricci form.
pub fn ricci_potential(phi: &RadialPotential, n: usize) -> Result<RadialPotential> {
    let eig = metric_eigenvalues(phi)?;
    let logdet = log_determinant(&eig, n).map_err(|e| match e {
        Error::NonKahler { node, a, b } => Error::LogArgument { node, value: a.min(b) },
        other => other,
    })?;
    RadialPotential::sampled(phi.grid().clone(), logdet.into_iter().map(|v| -v).collect())
}

/// Normalized curvature scalars of a U(n)-invariant metric along the `z₁`-axis.
///
/// With `A' = dA/dρ`, `B' = dB/dρ`:
///
/// ```text
/// H_rad   = -(ρ B'/B)' / B
/// H_mix   = (-(B' - A') + ρ A'^2 / A) / (A B)
/// H_tan   = -2 A' / A^2
/// H_cross = -A' / A^2
/// ```
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurvatureComponents {
    pub n: usize,
    pub h_rad: Vec<f64>,
    mixed: Option<MixedComponents>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MixedComponents {
    h_mix: Vec<f64>,
    h_tan: Vec<f64>,
    h_cross: Vec<f64>,
}

impl CurvatureComponents {
    fn mixed(&self) -> Result<&MixedComponents> {
        self.mixed
            .as_ref()
            .ok_or(Error::UnsupportedDimension { n: self.n, what: "mixed curvature components need n >= 2" })
    }

    pub fn h_mix(&self) -> Result<&[f64]> {
        Ok(&self.mixed()?.h_mix)
    }

    pub fn h_tan(&self) -> Result<&[f64]> {
        Ok(&self.mixed()?.h_tan)
    }

    pub fn h_cross(&self) -> Result<&[f64]> {
        Ok(&self.mixed()?.h_cross)
    }
}

pub fn curvature_components(phi: &RadialPotential, n: usize) -> Result<CurvatureComponents> {
    let grid = phi.grid();
    let eig = metric_eigenvalues(phi)?;
    eig.ensure_positive()?;
    let h = grid.step();
    let s = grid.dist();
    let rho = grid.rho();
    let by_rho = |field: &[f64]| -> Vec<f64> { d1(field, h).iter().zip(s).map(|(d, s)| d / s).collect() };
    let da = by_rho(&eig.a);
    let db = by_rho(&eig.b);
    // (ρ B'/B)' = (ρ (log B)')' is the B-eigenvalue of the potential log B.
    let log_b: Vec<f64> = eig.b.iter().map(|b| b.ln()).collect();
    let lb = sampled_eigenvalues(grid, &log_b);
    let h_rad = lb.b.iter().zip(&eig.b).map(|(q, b)| -q / b).collect();

    let mixed = (n >= 2).then(|| {
        let m = grid.len();
        let mut h_mix = Vec::with_capacity(m);
        let mut h_tan = Vec::with_capacity(m);
        let mut h_cross = Vec::with_capacity(m);
        for i in 0..m {
            let (a, b) = (eig.a[i], eig.b[i]);
            h_mix.push((-(db[i] - da[i]) + rho[i] * da[i] * da[i] / a) / (a * b));
            h_tan.push(-2.0 * da[i] / (a * a));
            h_cross.push(-da[i] / (a * a));
        }
        MixedComponents { h_mix, h_tan, h_cross }
    });
    Ok(CurvatureComponents { n, h_rad, mixed })
}

/// `∫ √B dr` with `r = √ρ`, trapezoid rule on the nodes up to `up_to_y` (the last
/// partial interval is interpolated linearly; `up_to_y` is clamped to `y_max`).
pub fn radial_geodesic_length(eig: &MetricEigenvalues, grid: &RadialGrid, up_to_y: f64) -> f64 {
    let y_end = up_to_y.clamp(0.0, grid.y_max());
    let ys = grid.y();
    let r: Vec<f64> = grid.rho().iter().map(|p| p.sqrt()).collect();
    let g: Vec<f64> = eig.b.iter().map(|b| b.max(0.0).sqrt()).collect();
    let mut total = 0.0;
    for i in 0..ys.len() - 1 {
        if ys[i] >= y_end {
            break;
        }
        if ys[i + 1] <= y_end {
            total += 0.5 * (g[i] + g[i + 1]) * (r[i + 1] - r[i]);
        } else {
            let r_end = grid.rho_of_y(y_end).sqrt();
            let w = (r_end - r[i]) / (r[i + 1] - r[i]);
            let g_end = g[i] + w * (g[i + 1] - g[i]);
            total += 0.5 * (g[i] + g_end) * (r_end - r[i]);
            break;
        }
    }
    total
}

/// Geodesic length evaluated at every node.
pub fn geodesic_length_profile(eig: &MetricEigenvalues, grid: &RadialGrid) -> Vec<f64> {
    let r: Vec<f64> = grid.rho().iter().map(|p| p.sqrt()).collect();
    let g: Vec<f64> = eig.b.iter().map(|b| b.max(0.0).sqrt()).collect();
    let mut out = Vec::with_capacity(r.len());
    let mut acc = 0.0;
    out.push(0.0);
    for i in 0..r.len() - 1 {
        acc += 0.5 * (g[i] + g[i + 1]) * (r[i + 1] - r[i]);
        out.push(acc);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn grid(m: usize) -> Arc<RadialGrid> {
        Arc::new(RadialGrid::new(2, 1.0, 12.0, m).unwrap())
    }

    #[test]
    fn euclidean_eigenvalues_are_one() {
        let g = grid(801);
        let exact = RadialPotential::analytic(g.clone(), |r| r, |_| 1.0, |_| 0.0).unwrap();
        let eig = metric_eigenvalues(&exact).unwrap();
        assert!(eig.a.iter().chain(&eig.b).all(|v| *v == 1.0));
        // ρ is not polynomial in y, so the sampled version is exact only to O(h²).
        // Differencing error of functions smooth in ρ grows like h² e^y, so the sampled
        // check stays in y <= 6.
        let phi = RadialPotential::from_fn(g.clone(), |r| r).unwrap();
        let eig = metric_eigenvalues(&phi).unwrap();
        let h = g.step();
        for i in 0..g.len() {
            let tol = h * h * g.y()[i].exp();
            assert!((eig.a[i] - 1.0).abs() < tol, "{}", eig.a[i]);
            assert!((eig.b[i] - 1.0).abs() < tol, "{}", eig.b[i]);
        }
    }

    #[test]
    fn hyperbolic_eigenvalues_at_half() {
        // ρ = 0.5 is the node y = ln 2; choose a grid that hits it.
        let m = 1001;
        let y_max = 10.0 * 2.0_f64.ln();
        let g = Arc::new(RadialGrid::new(2, 1.0, y_max, m).unwrap());
        let phi = RadialPotential::from_fn(g.clone(), |r| -(1.0 - r).ln()).unwrap();
        let eig = metric_eigenvalues(&phi).unwrap();
        let i = 100;
        assert!((g.rho()[i] - 0.5).abs() < 1e-12);
        // Φ = y is linear in the chart, so the stencils are exact.
        assert!((eig.a[i] - 2.0).abs() < 1e-9);
        assert!((eig.b[i] - 4.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_quadratic_is_flagged() {
        let g = grid(101);
        let phi = RadialPotential::analytic(g, |r| r * r, |r| 2.0 * r, |_| 2.0).unwrap();
        let eig = metric_eigenvalues(&phi).unwrap();
        assert_eq!(eig.a[0], 0.0);
        assert!(matches!(ma_determinant(&eig, 2), Err(Error::NonKahler { node: 0, .. })));
    }

    #[test]
    fn determinant_examples() {
        let ones = MetricEigenvalues { a: vec![1.0; 3], b: vec![1.0; 3] };
        assert_eq!(ma_determinant(&ones, 2).unwrap(), vec![1.0; 3]);
        let e = MetricEigenvalues { a: vec![2.0], b: vec![5.0] };
        assert_eq!(ma_determinant(&e, 3).unwrap(), vec![20.0]);
    }

    #[test]
    fn insufficient_resolution() {
        let g = Arc::new(RadialGrid::new(2, 1.0, 5.0, 4).unwrap());
        let phi = RadialPotential::from_fn(g, |r| r).unwrap();
        assert!(matches!(metric_eigenvalues(&phi), Err(Error::InsufficientResolution { nodes: 4, .. })));
    }

    #[test]
    fn laplacian_examples() {
        let g = grid(401);
        let flat = MetricEigenvalues { a: vec![1.0; g.len()], b: vec![1.0; g.len()] };
        let v: Vec<f64> = g.rho().to_vec();
        let lap = laplacian_radial(&v, &flat, &g, 2).unwrap();
        // ρ is not polynomial in y, so interior values carry O(h²) error.
        let h = g.step();
        for (i, l) in lap.iter().enumerate() {
            assert!((l - 2.0).abs() < h * h * g.y()[i].exp(), "node {i}: {l}");
        }
        let c = vec![3.7; g.len()];
        let lap = laplacian_radial(&c, &flat, &g, 2).unwrap();
        for (i, l) in lap.iter().enumerate() {
            assert!(l.abs() < 1e-11 * (2.0 * g.y()[i]).exp(), "node {i}: {l}");
        }
    }

    #[test]
    fn unsupported_dimension() {
        let g = Arc::new(RadialGrid::new(1, 1.0, 8.0, 101).unwrap());
        let phi = RadialPotential::from_fn(g, |r| -(1.0 - r).ln()).unwrap();
        let c = curvature_components(&phi, 1).unwrap();
        assert!(matches!(c.h_mix(), Err(Error::UnsupportedDimension { n: 1, .. })));
        let h2 = c.h_rad.len() as f64;
        let step = 8.0 / (h2 - 1.0);
        for (i, h) in c.h_rad.iter().enumerate() {
            assert!((h + 2.0).abs() < 2.0 * step * step, "node {i}: {h}");
        }
    }

    #[test]
    fn geodesic_length_examples() {
        let g = grid(801);
        let flat = MetricEigenvalues { a: vec![1.0; g.len()], b: vec![1.0; g.len()] };
        assert!((radial_geodesic_length(&flat, &g, 1e9) - 1.0).abs() < 1e-5);
        let four = MetricEigenvalues { a: vec![4.0; g.len()], b: vec![4.0; g.len()] };
        assert!((radial_geodesic_length(&four, &g, 1e9) - 2.0).abs() < 1e-5);
    }
}
