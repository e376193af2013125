//! Elliptic Newton solver for the limit Kähler-Einstein equations
//!
//! ```text
//! log det(base + i∂∂̄u) - log det(ω_ref) = λ u - f
//! ```
//!
//! Domain modes: `base = ω_ref = ω̄`, `λ = n + 1`, `f` the Cheng-Yau function.
//! General modes: `base = -Ric(ω_M)`, `ω_ref = ω_M`, `λ = 1`, `f = 0`.

use serde::{Deserialize, Serialize};

use crate::background::{relative_form_norm, BackgroundFamily};
use crate::error::{Error, Result};
use crate::geometry::{log_determinant, metric_eigenvalues, ricci_potential};
use crate::grid::{sampled_eigenvalues, MetricEigenvalues, RadialPotential};
use crate::tridiag::Tridiagonal;

const MAX_ITER: usize = 60;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeSolution {
    pub u_inf: Vec<f64>,
    pub residual_norm: f64,
    pub newton_iterations: usize,
    pub residual_history: Vec<f64>,
}

/// Discrete limit equation on a fixed grid.
#[derive(Debug, Clone)]
pub struct LimitEquation {
    n: usize,
    lambda: f64,
    base: MetricEigenvalues,
    log_ref: Vec<f64>,
    f: Vec<f64>,
    h: f64,
    rho: Vec<f64>,
    dist: Vec<f64>,
}

impl LimitEquation {
    pub fn new(family: &BackgroundFamily, f: &[f64]) -> Result<Self> {
        let grid = family.grid();
        grid.require_stencil()?;
        if f.len() != grid.len() {
            return Err(Error::InvalidArgument("f does not match grid".into()));
        }
        let base = metric_eigenvalues(&family.base)?;
        base.ensure_positive()?;
        let f = if family.mode.is_general() { vec![0.0; f.len()] } else { f.to_vec() };
        Ok(Self {
            n: family.n,
            lambda: family.lambda,
            base,
            log_ref: family.log_reference_volume()?,
            f,
            h: grid.step(),
            rho: grid.rho().to_vec(),
            dist: grid.dist().to_vec(),
        })
    }

    fn len(&self) -> usize {
        self.f.len()
    }

    /// Far-end value with `i∂∂̄u` dropped against the base.
    pub fn boundary_constant(&self) -> f64 {
        let i = self.len() - 1;
        let k = (self.n - 1) as f64;
        (k * self.base.a[i].ln() + self.base.b[i].ln() - self.log_ref[i] + self.f[i]) / self.lambda
    }

    /// Residual (Dirichlet row at the last node); `None` where the metric degenerates.
    fn residual(&self, u: &[f64], mut jac: Option<&mut Tridiagonal>) -> Option<Vec<f64>> {
        let (n, m, h) = (self.n, self.len(), self.h);
        let k = (n - 1) as f64;
        let mut g = vec![0.0; m];
        let c = [-3.0, 4.0, -1.0];
        let a0 = self.base.a[0] + (c[0] * u[0] + c[1] * u[1] + c[2] * u[2]) / (2.0 * h * self.dist[0]);
        if !(a0 > 0.0) {
            return None;
        }
        g[0] = n as f64 * a0.ln() - self.log_ref[0] - self.lambda * u[0] + self.f[0];
        if let Some(j) = jac.as_deref_mut() {
            let w = n as f64 / (a0 * 2.0 * h * self.dist[0]);
            j.diag[0] = w * c[0] - self.lambda;
            j.upper[0] = w * c[1];
            j.corner = w * c[2];
        }
        for i in 1..m - 1 {
            let (s, r) = (self.dist[i], self.rho[i]);
            let d1 = (u[i + 1] - u[i - 1]) / (2.0 * h);
            let d2 = (u[i + 1] - 2.0 * u[i] + u[i - 1]) / (h * h);
            let a = self.base.a[i] + d1 / s;
            let b = self.base.b[i] + d1 / s + r * (d2 + d1) / (s * s);
            if !(a > 0.0 && b > 0.0) {
                return None;
            }
            g[i] = k * a.ln() + b.ln() - self.log_ref[i] - self.lambda * u[i] + self.f[i];
            if let Some(j) = jac.as_deref_mut() {
                let q = r / (s * s);
                let a_side = 1.0 / (2.0 * h * s);
                j.upper[i] = k * a_side / a + (a_side + q * (1.0 / (h * h) + 0.5 / h)) / b;
                j.lower[i] = -k * a_side / a + (-a_side + q * (1.0 / (h * h) - 0.5 / h)) / b;
                j.diag[i] = -2.0 * q / (h * h * b) - self.lambda;
            }
        }
        g[m - 1] = u[m - 1] - self.boundary_constant();
        if let Some(j) = jac {
            j.diag[m - 1] = 1.0;
            j.lower[m - 1] = 0.0;
        }
        Some(g)
    }

    /// Damped Newton from `guess`.
    pub fn solve_from(&self, guess: &[f64], tol: f64) -> Result<KeSolution> {
        if !(tol >= 1e-12) {
            return Err(Error::InvalidArgument(format!("tolerance must be >= 1e-12, got {tol}")));
        }
        if guess.len() != self.len() {
            return Err(Error::InvalidArgument("guess does not match grid".into()));
        }
        let m = self.len();
        let mut u = guess.to_vec();
        let mut history = Vec::new();
        let Some(mut g) = self.residual(&u, None) else {
            return Err(Error::OracleDivergence { history });
        };
        let mut norm = sup(&g);
        history.push(norm);
        for iter in 0..MAX_ITER {
            if norm <= tol {
                return Ok(KeSolution {
                    u_inf: u,
                    residual_norm: norm,
                    newton_iterations: iter,
                    residual_history: history,
                });
            }
            let mut jac = Tridiagonal::zeros(m);
            self.residual(&u, Some(&mut jac));
            let neg: Vec<f64> = g.iter().map(|v| -v).collect();
            let delta = jac.solve(&neg).map_err(|_| Error::OracleDivergence { history: history.clone() })?;
            let mut theta = 1.0;
            let mut accepted = false;
            for _ in 0..40 {
                let trial: Vec<f64> = u.iter().zip(&delta).map(|(a, d)| a + theta * d).collect();
                if let Some(gt) = self.residual(&trial, None) {
                    let nt = sup(&gt);
                    if nt < norm {
                        u = trial;
                        g = gt;
                        norm = nt;
                        accepted = true;
                        break;
                    }
                }
                theta *= 0.5;
            }
            history.push(norm);
            if !accepted {
                return Err(Error::OracleDivergence { history });
            }
        }
        if norm <= tol {
            return Ok(KeSolution {
                u_inf: u,
                residual_norm: norm,
                newton_iterations: MAX_ITER,
                residual_history: history,
            });
        }
        Err(Error::OracleDivergence { history })
    }
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Solves the limit equation of `family` starting from `u ≡ 0`.
pub fn solve_limit(family: &BackgroundFamily, f: &[f64], tol: f64) -> Result<KeSolution> {
    let eq = LimitEquation::new(family, f)?;
    eq.solve_from(&vec![0.0; f.len()], tol)
}

/// Eigenvalues of `base + i∂∂̄u_∞`.
pub fn limit_metric(family: &BackgroundFamily, sol: &KeSolution) -> Result<MetricEigenvalues> {
    let base = metric_eigenvalues(&family.base)?;
    Ok(base.combine(1.0, &sampled_eigenvalues(family.grid(), &sol.u_inf), 1.0))
}

/// Defect of `Ric(ω) = -λω`: node-wise sup of the eigenvalues of
/// `i∂∂̄[-log det ω + λΦ]` relative to those of `ω`.
pub fn ke_residual(potential: &RadialPotential, lambda: f64, n: usize) -> Result<f64> {
    let eig = metric_eigenvalues(potential)?;
    eig.ensure_positive()?;
    let defect = ricci_potential(potential, n)?.combine(1.0, potential, lambda);
    relative_form_norm(&defect, &eig)
}

/// Log-volume ratio `log det(base + i∂∂̄u) - log det(ω_ref)` of a candidate solution.
pub fn log_volume_ratio(family: &BackgroundFamily, u: &[f64]) -> Result<Vec<f64>> {
    let eig = metric_eigenvalues(&family.base.plus_sampled(u))?;
    let lr = family.log_reference_volume()?;
    Ok(log_determinant(&eig, family.n)?.iter().zip(&lr).map(|(a, b)| a - b).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::background::{cheng_yau_f, metric_preset, DefiningFunction, FlowMode, Preset};
    use crate::grid::RadialGrid;
    use std::sync::Arc;

    fn grid(m: usize) -> Arc<RadialGrid> {
        Arc::new(RadialGrid::new(2, 1.0, 12.0, m).unwrap())
    }

    fn domain(preset: Preset, m: usize) -> (BackgroundFamily, Vec<f64>) {
        let df = DefiningFunction::from_preset(preset, grid(m)).unwrap();
        let phi0 = metric_preset(Preset::Euclidean { c: 0.5 }, &df).unwrap();
        let fam = BackgroundFamily::domain(FlowMode::Normalized, &df, phi0).unwrap();
        (fam, cheng_yau_f(&df, 2).unwrap())
    }

    #[test]
    fn ball_solution_is_zero() {
        let (fam, f) = domain(Preset::Ball { radius: 1.0 }, 401);
        let sol = solve_limit(&fam, &f, 1e-11).unwrap();
        assert!(sol.residual_norm <= 1e-11);
        assert!(sup(&sol.u_inf) < 1e-12);
    }

    #[test]
    fn general_hyperbolic_constant() {
        let df = DefiningFunction::from_preset(Preset::Ball { radius: 1.0 }, grid(401)).unwrap();
        let omega_m = metric_preset(Preset::HyperbolicBg, &df).unwrap();
        let phi0 = metric_preset(Preset::Euclidean { c: 0.5 }, &df).unwrap();
        let fam = BackgroundFamily::general(FlowMode::GeneralNormalized, omega_m, phi0).unwrap();
        let sol = solve_limit(&fam, &vec![0.0; 401], 1e-11).unwrap();
        let target = 2.0 * 3f64.ln();
        assert!(sol.u_inf.iter().all(|u| (u - target).abs() < 1e-8));
    }

    #[test]
    fn perturbed_ball_matches_exact_limit() {
        // ω̄_φ + i∂∂̄ log(1.5 + 0.5ρ) = ω̄ of the unit ball.
        let m = 801;
        let (fam, f) = domain(Preset::PerturbedBall { a: 0.5, radius: 1.0 }, m);
        let sol = solve_limit(&fam, &f, 1e-11).unwrap();
        let g = fam.grid();
        let err = g.rho().iter().zip(&sol.u_inf).map(|(r, u)| (u - (1.5 + 0.5 * r).ln()).abs()).fold(0.0, f64::max);
        assert!(err < 1e-4, "{err}");
        let ball = domain(Preset::Ball { radius: 1.0 }, m).0;
        let target = metric_eigenvalues(&ball.base).unwrap();
        let dev = limit_metric(&fam, &sol).unwrap().max_relative_deviation(&target);
        assert!(dev < 1e-4, "{dev}");
    }

    #[test]
    fn initial_guess_independence() {
        let (fam, f) = domain(Preset::PerturbedBall { a: 0.5, radius: 1.0 }, 201);
        let eq = LimitEquation::new(&fam, &f).unwrap();
        let tol = 1e-11;
        let a = eq.solve_from(&vec![0.0; 201], tol).unwrap();
        let b = eq.solve_from(&vec![1.0; 201], tol).unwrap();
        let d = a.u_inf.iter().zip(&b.u_inf).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(d < 10.0 * tol, "{d}");
    }

    #[test]
    fn quadratic_convergence_tail() {
        let (fam, f) = domain(Preset::PerturbedBall { a: 0.5, radius: 1.0 }, 201);
        let eq = LimitEquation::new(&fam, &f).unwrap();
        let sol = eq.solve_from(&vec![1.0; 201], 1e-12).unwrap();
        let h = &sol.residual_history;
        assert!(h.len() >= 3, "{h:?}");
        // Last contraction is much faster than linear.
        let k = h.len();
        let (r1, r2) = (h[k - 2] / h[k - 3], h[k - 1] / h[k - 2]);
        assert!(r2 < 0.1 || r2 < r1 * r1 * 10.0, "{h:?}");
    }

    #[test]
    fn grid_refinement_is_second_order() {
        let errs: Vec<f64> = [201, 401]
            .iter()
            .map(|&m| {
                let (fam, f) = domain(Preset::PerturbedBall { a: 0.5, radius: 1.0 }, m);
                let sol = solve_limit(&fam, &f, 1e-12).unwrap();
                let g = fam.grid();
                g.rho().iter().zip(&sol.u_inf).map(|(r, u)| (u - (1.5 + 0.5 * r).ln()).abs()).fold(0.0, f64::max)
            })
            .collect();
        let ratio = errs[0] / errs[1];
        assert!((3.0..5.0).contains(&ratio), "{errs:?}");
    }

    #[test]
    fn ke_residual_examples() {
        let g = grid(401);
        let h = g.step();
        let hyp = RadialPotential::analytic(
            g.clone(),
            |r| -(1.0 - r).ln(),
            |r| 1.0 / (1.0 - r),
            |r| 1.0 / ((1.0 - r) * (1.0 - r)),
        )
        .unwrap();
        assert!(ke_residual(&hyp, 3.0, 2).unwrap() <= 5.0 * h * h);
        let euc = RadialPotential::analytic(g, |r| r, |_| 1.0, |_| 0.0).unwrap();
        assert!((ke_residual(&euc, 3.0, 2).unwrap() - 3.0).abs() < 1e-9);
    }

    #[test]
    fn boundary_constants() {
        let (fam, f) = domain(Preset::PerturbedBall { a: 0.5, radius: 1.0 }, 201);
        let eq = LimitEquation::new(&fam, &f).unwrap();
        assert!((eq.boundary_constant() - 2f64.ln()).abs() < 1e-4);
    }
}
