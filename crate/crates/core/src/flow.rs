//! Backward-Euler solver for the complex Monge-Ampère flows.
//!
//! Every flow has the form
//!
//! ```text
//! u̇ = log det(ω_t + i∂∂̄u) - log det(ω_ref) - λ₀ u + f
//! ```
//!
//! with `ω_t = α(t)·ω₀ + β(t)·base` from [`BackgroundFamily`]. The last node follows
//! the far-field ODE obtained by dropping `i∂∂̄u` against the background there.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::background::{BackgroundFamily, FlowMode};
use crate::error::{Error, Result};
use crate::geometry::{log_determinant, metric_eigenvalues};
use crate::grid::{sampled_eigenvalues, GridSpec, MetricEigenvalues};
use crate::quadrature::integrate_from_singular;
use crate::tridiag::Tridiagonal;

const MAX_HALVINGS: usize = 10;
const MAX_LINE_SEARCH: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub dt_max: f64,
    /// Ramp `κ` in `dt = min(dt_max, κ(t + ε))`.
    pub kappa: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub horizon: f64,
    /// Snapshot density in the uniform output grid.
    pub snapshots_per_unit: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dt_max: 0.01,
            kappa: 0.1,
            newton_tol: 1e-10,
            newton_max_iter: 30,
            horizon: 1.0,
            snapshots_per_unit: 50.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.dt_max > 0.0 && self.dt_max.is_finite()) {
            errs.push(format!("dt_max must be positive, got {}", self.dt_max));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            errs.push(format!("kappa must be positive, got {}", self.kappa));
        }
        if !(self.newton_tol >= 1e-13 && self.newton_tol.is_finite()) {
            errs.push(format!("newton_tol must be >= 1e-13, got {}", self.newton_tol));
        }
        if self.newton_max_iter == 0 {
            errs.push("newton_max_iter must be positive".into());
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            errs.push(format!("horizon must be >= 0, got {}", self.horizon));
        }
        if !(self.snapshots_per_unit > 0.0 && self.snapshots_per_unit.is_finite()) {
            errs.push(format!("snapshots_per_unit must be positive, got {}", self.snapshots_per_unit));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Scenario(errs))
        }
    }

    /// Uniform snapshot grid on `[0, horizon]` merged with `extra` (sorted, deduplicated).
    pub fn output_times(&self, extra: &[f64]) -> Vec<f64> {
        let count = (self.horizon * self.snapshots_per_unit).ceil() as usize;
        let mut times: Vec<f64> = (0..=count).map(|k| (k as f64 / self.snapshots_per_unit).min(self.horizon)).collect();
        times.extend(extra.iter().copied().filter(|t| *t >= 0.0 && *t <= self.horizon));
        times.sort_by(f64::total_cmp);
        times.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + b.abs()));
        times
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowState {
    pub mode: FlowMode,
    pub t: f64,
    pub eps: f64,
    pub u: Vec<f64>,
    pub udot: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub u: Vec<f64>,
    pub udot: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub steps: usize,
    pub newton_iterations: usize,
    pub halvings: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub mode: FlowMode,
    pub eps: f64,
    pub n: usize,
    pub lambda: f64,
    pub grid: GridSpec,
    pub solver: SolverConfig,
    pub fingerprint: String,
    pub snapshots: Vec<Snapshot>,
    pub stats: RunStats,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }

    /// Snapshot whose time is closest to `t`.
    pub fn nearest(&self, t: f64) -> &Snapshot {
        self.snapshots
            .iter()
            .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
            .expect("trajectory has at least one snapshot")
    }

    /// Cubic Lagrange interpolation of `u` in time.
    pub fn interpolate_u(&self, t: f64) -> Result<Vec<f64>> {
        let times = self.times();
        let last = *times.last().expect("non-empty");
        if t < 0.0 || t > last * (1.0 + 1e-12) {
            return Err(Error::OutOfRange { requested: t, horizon: last });
        }
        if let Some(k) = times.iter().position(|s| (s - t).abs() <= 1e-12 * (1.0 + t)) {
            return Ok(self.snapshots[k].u.clone());
        }
        if times.len() < 4 {
            return Err(Error::InvalidArgument("cubic interpolation needs 4 snapshots".into()));
        }
        let right = times.partition_point(|s| *s < t);
        let start = right.saturating_sub(2).min(times.len() - 4);
        let idx = start..start + 4;
        let mut out = vec![0.0; self.snapshots[0].u.len()];
        for j in idx.clone() {
            let w: f64 = idx.clone().filter(|&k| k != j).map(|k| (t - times[k]) / (times[j] - times[k])).product();
            for (o, v) in out.iter_mut().zip(&self.snapshots[j].u) {
                *o += w * v;
            }
        }
        Ok(out)
    }
}

/// Background-to-reference eigenvalue ratios at the far end of the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FarField {
    pub c_tan: f64,
    pub c_rad: f64,
    pub mu_tan: f64,
    pub mu_rad: f64,
    pub f: f64,
}

impl FarField {
    /// `ω₀ ~ c·ω_ref`, `base ~ μ·ω_ref` in both directions.
    pub fn isotropic(c: f64, mu: f64, f: f64) -> Self {
        Self { c_tan: c, c_rad: c, mu_tan: mu, mu_rad: mu, f }
    }

    fn log_det_ratio(&self, n: usize, alpha: f64, beta: f64) -> f64 {
        (n - 1) as f64 * (alpha * self.c_tan + beta * self.mu_tan).ln() + (alpha * self.c_rad + beta * self.mu_rad).ln()
    }
}

/// Far-field solution `u(t) = ∫₀ᵗ e^{-λ₀(t-τ)} (log det ratio(τ) + f) dτ`.
///
/// Unnormalized with `c = 0`, `μ = 1` this is `n∫₀ᵗ log(λ(s+ε))ds + t·f`.
pub fn boundary_value(mode: FlowMode, t: f64, eps: f64, n: usize, far: &FarField) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let lambda = mode.lambda(n);
    let l0 = mode.zeroth_order(n);
    let integrand = |tau: f64| {
        let (alpha, beta) = mode.coefficients(tau, eps, lambda);
        (-l0 * (t - tau)).exp() * (far.log_det_ratio(n, alpha, beta) + far.f)
    };
    integrate_from_singular(&integrand, t, 1e-12)
}

/// Step from `t` toward the next output time `target` (clipped onto it).
fn next_step(t: f64, target: f64, eps: f64, cfg: &SolverConfig) -> f64 {
    let dt = cfg.dt_max.min(cfg.kappa * (t + eps));
    if t + dt >= target - 1e-12 * (1.0 + target) {
        target - t
    } else {
        dt
    }
}

/// End times of the steps [`FlowProblem::run`] takes when no step is halved.
pub fn step_schedule(eps: f64, cfg: &SolverConfig, times: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    let mut t = 0.0;
    for &target in times.iter().skip(1) {
        while t < target {
            t += next_step(t, target, eps, cfg);
            if (t - target).abs() <= 1e-12 * (1.0 + target) {
                t = target;
            }
            out.push(t);
        }
    }
    out
}

/// Backward-Euler solution of the far-field ODE on the solver's step schedule,
/// sampled at `times`. Its gap to [`boundary_value`] measures the time-discretization
/// error of the scheme on the comparison functions.
pub fn far_field_backward_euler(
    mode: FlowMode,
    n: usize,
    eps: f64,
    far: &FarField,
    cfg: &SolverConfig,
    times: &[f64],
) -> Vec<f64> {
    let lambda = mode.lambda(n);
    let l0 = mode.zeroth_order(n);
    let mut out = Vec::with_capacity(times.len());
    let (mut t, mut u) = (0.0, 0.0);
    for &target in times {
        while t < target {
            let dt = next_step(t, target, eps, cfg);
            t += dt;
            if (t - target).abs() <= 1e-12 * (1.0 + target) {
                t = target;
            }
            let (alpha, beta) = mode.coefficients(t, eps, lambda);
            u = (u + dt * (far.log_det_ratio(n, alpha, beta) + far.f)) / (1.0 + dt * l0);
        }
        out.push(u);
    }
    out
}

/// `s = (e^{λt} - 1)/λ`, the unnormalized time matching normalized time `t`.
pub fn unnormalized_time(t: f64, lambda: f64) -> f64 {
    (lambda * t).exp_m1() / lambda
}

/// Precomputed data of one flow: background eigenvalues, reference volume and `f`.
#[derive(Debug, Clone)]
pub struct FlowProblem {
    pub family: BackgroundFamily,
    pub f: Vec<f64>,
    eig0: MetricEigenvalues,
    eig_base: MetricEigenvalues,
    log_ref: Vec<f64>,
}

struct NewtonFailure {
    iterations: usize,
    residual: f64,
}

impl FlowProblem {
    /// `f` is the Cheng-Yau function in domain modes and ignored (zero) in general modes.
    pub fn new(family: BackgroundFamily, f: Vec<f64>) -> Result<Self> {
        let grid = family.grid().clone();
        grid.require_stencil()?;
        if f.len() != grid.len() {
            return Err(Error::InvalidArgument("f does not match grid".into()));
        }
        let f = if family.mode.is_general() { vec![0.0; grid.len()] } else { f };
        let eig0 = metric_eigenvalues(&family.omega0)?;
        let eig_base = metric_eigenvalues(&family.base)?;
        let log_ref = family.log_reference_volume()?;
        Ok(Self { family, f, eig0, eig_base, log_ref })
    }

    pub fn with_mode(&self, mode: FlowMode) -> Result<Self> {
        Ok(Self { family: self.family.with_mode(mode)?, ..self.clone() })
    }

    pub fn mode(&self) -> FlowMode {
        self.family.mode
    }

    pub fn n(&self) -> usize {
        self.family.n
    }

    pub fn len(&self) -> usize {
        self.f.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f.is_empty()
    }

    pub fn log_reference(&self) -> &[f64] {
        &self.log_ref
    }

    pub fn initial_eigenvalues(&self) -> &MetricEigenvalues {
        &self.eig0
    }

    pub fn base_eigenvalues(&self) -> &MetricEigenvalues {
        &self.eig_base
    }

    pub fn background_eigenvalues(&self, t: f64, eps: f64) -> MetricEigenvalues {
        let (alpha, beta) = self.family.mode.coefficients(t, eps, self.family.lambda);
        self.eig0.combine(alpha, &self.eig_base, beta)
    }

    /// Eigenvalues of `ω_t + i∂∂̄u` at every node (differenced at the last node too).
    pub fn metric_eigenvalues(&self, u: &[f64], t: f64, eps: f64) -> MetricEigenvalues {
        let grid = self.family.grid();
        self.background_eigenvalues(t, eps).combine(1.0, &sampled_eigenvalues(grid, u), 1.0)
    }

    pub fn far_field(&self) -> FarField {
        let last = self.len() - 1;
        let r = metric_eigenvalues(&self.family.reference).expect("reference validated in new");
        FarField {
            c_tan: self.eig0.a[last] / r.a[last],
            c_rad: self.eig0.b[last] / r.b[last],
            mu_tan: self.eig_base.a[last] / r.a[last],
            mu_rad: self.eig_base.b[last] / r.b[last],
            f: self.f[last],
        }
    }

    /// Right-hand side at `(u, t, ε)`; the last node uses the far-field equation.
    pub fn rhs(&self, u: &[f64], t: f64, eps: f64) -> Result<Vec<f64>> {
        let n = self.n();
        let l0 = self.family.mode.zeroth_order(n);
        let bg = self.background_eigenvalues(t, eps);
        let mut eig = self.metric_eigenvalues(u, t, eps);
        let last = self.len() - 1;
        eig.a[last] = bg.a[last];
        eig.b[last] = bg.b[last];
        let mut logdet = log_determinant(&eig, n)?;
        logdet[0] = n as f64 * eig.a[0].ln();
        Ok((0..self.len()).map(|i| logdet[i] - self.log_ref[i] - l0 * u[i] + self.f[i]).collect())
    }

    pub fn initial_state(&self, eps: f64) -> Result<FlowState> {
        let u = vec![0.0; self.len()];
        let udot = self.rhs(&u, 0.0, eps)?;
        Ok(FlowState { mode: self.mode(), t: 0.0, eps, u, udot })
    }

    /// One backward-Euler step of size `dt`, solved by damped Newton.
    pub fn step(&self, state: &FlowState, dt: f64, cfg: &SolverConfig) -> Result<FlowState> {
        self.try_step(state, dt, cfg).map(|(s, _)| s).map_err(|e| Error::StepFailure {
            t: state.t,
            dt,
            halvings: 0,
            iterations: e.iterations,
            residual: e.residual,
        })
    }

    fn try_step(
        &self,
        state: &FlowState,
        dt: f64,
        cfg: &SolverConfig,
    ) -> std::result::Result<(FlowState, usize), NewtonFailure> {
        let t_new = state.t + dt;
        let (u_new, iterations) = self.newton(&state.u, t_new, state.eps, dt, cfg)?;
        let udot =
            self.rhs(&u_new, t_new, state.eps).map_err(|_| NewtonFailure { iterations, residual: f64::INFINITY })?;
        Ok((FlowState { mode: state.mode, t: t_new, eps: state.eps, u: u_new, udot }, iterations))
    }

    fn newton(
        &self,
        u_prev: &[f64],
        t: f64,
        eps: f64,
        dt: f64,
        cfg: &SolverConfig,
    ) -> std::result::Result<(Vec<f64>, usize), NewtonFailure> {
        let n = self.n();
        let m = self.len();
        let last = m - 1;
        let l0 = self.family.mode.zeroth_order(n);
        let bg = self.background_eigenvalues(t, eps);

        let far = (n - 1) as f64 * bg.a[last].ln() + bg.b[last].ln() - self.log_ref[last];
        let boundary = (u_prev[last] + dt * (far + self.f[last])) / (1.0 + dt * l0);

        // Explicit predictor, falling back to the previous state.
        let fail = |iterations, residual| NewtonFailure { iterations, residual };
        let mut guesses = Vec::with_capacity(2);
        if let Ok(r) = self.rhs(u_prev, t, eps) {
            guesses.push(u_prev.iter().zip(&r).map(|(u, r)| u + dt * r).collect::<Vec<_>>());
        }
        guesses.push(u_prev.to_vec());
        let (mut u, mut g) = guesses
            .into_iter()
            .find_map(|mut u| {
                u[last] = boundary;
                self.residual(&u, u_prev, &bg, dt, l0, None).map(|g| (u, g))
            })
            .ok_or_else(|| fail(0, f64::INFINITY))?;
        let mut norm = sup(&g);
        for iter in 0..cfg.newton_max_iter {
            if norm <= cfg.newton_tol {
                return Ok((u, iter));
            }
            let mut jac = Tridiagonal::zeros(m);
            self.residual(&u, u_prev, &bg, dt, l0, Some(&mut jac));
            let neg: Vec<f64> = g.iter().map(|v| -v).collect();
            let delta = jac.solve(&neg).map_err(|_| fail(iter, norm))?;
            let mut theta = 1.0;
            let mut accepted = false;
            for _ in 0..MAX_LINE_SEARCH {
                let trial: Vec<f64> = u.iter().zip(&delta).map(|(a, d)| a + theta * d).collect();
                if let Some(g_trial) = self.residual(&trial, u_prev, &bg, dt, l0, None) {
                    let trial_norm = sup(&g_trial);
                    if trial_norm < norm || trial_norm <= cfg.newton_tol {
                        u = trial;
                        g = g_trial;
                        norm = trial_norm;
                        accepted = true;
                        break;
                    }
                }
                theta *= 0.5;
            }
            if !accepted {
                return Err(fail(iter + 1, norm));
            }
        }
        if norm <= cfg.newton_tol {
            Ok((u, cfg.newton_max_iter))
        } else {
            Err(fail(cfg.newton_max_iter, norm))
        }
    }

    /// Backward-Euler residual `U - u - dt·R(U)`; `None` if the metric is not positive.
    /// Fills the exact Jacobian when `jac` is given.
    fn residual(
        &self,
        u: &[f64],
        u_prev: &[f64],
        bg: &MetricEigenvalues,
        dt: f64,
        l0: f64,
        mut jac: Option<&mut Tridiagonal>,
    ) -> Option<Vec<f64>> {
        let grid = self.family.grid();
        let n = self.n();
        let k = (n - 1) as f64;
        let m = self.len();
        let h = grid.step();
        let rho = grid.rho();
        let s = grid.dist();
        let mut g = vec![0.0; m];

        // Center: B = A, one-sided first difference.
        let c = [-3.0, 4.0, -1.0];
        let a_u = (c[0] * u[0] + c[1] * u[1] + c[2] * u[2]) / (2.0 * h * s[0]);
        let a0 = bg.a[0] + a_u;
        if !(a0 > 0.0) {
            return None;
        }
        let r0 = n as f64 * a0.ln() - self.log_ref[0] - l0 * u[0] + self.f[0];
        g[0] = u[0] - u_prev[0] - dt * r0;
        if let Some(j) = jac.as_deref_mut() {
            let w = dt * n as f64 / (a0 * 2.0 * h * s[0]);
            j.diag[0] = 1.0 + dt * l0 - w * c[0];
            j.upper[0] = -w * c[1];
            j.corner = -w * c[2];
        }

        let inv2h = 0.5 / h;
        let invh2 = 1.0 / (h * h);
        for i in 1..m - 1 {
            let d1 = (u[i + 1] - u[i - 1]) * inv2h;
            let d2 = (u[i + 1] - 2.0 * u[i] + u[i - 1]) * invh2;
            let (si, ri) = (s[i], rho[i]);
            let a = bg.a[i] + d1 / si;
            let b = bg.b[i] + d1 / si + ri * (d2 + d1) / (si * si);
            if !(a > 0.0 && b > 0.0) {
                return None;
            }
            let r = k * a.ln() + b.ln() - self.log_ref[i] - l0 * u[i] + self.f[i];
            g[i] = u[i] - u_prev[i] - dt * r;
            if let Some(j) = jac.as_deref_mut() {
                let q = ri / (si * si);
                let da_up = inv2h / si;
                let db_up = inv2h / si + q * (invh2 + inv2h);
                let db_lo = -inv2h / si + q * (invh2 - inv2h);
                let db_mid = -2.0 * q * invh2;
                j.upper[i] = -dt * (k * da_up / a + db_up / b);
                j.lower[i] = -dt * (-k * da_up / a + db_lo / b);
                j.diag[i] = 1.0 + dt * l0 - dt * db_mid / b;
            }
        }

        if let Some(j) = jac {
            j.diag[m - 1] = 1.0;
            j.lower[m - 1] = 0.0;
        }
        Some(g)
    }

    /// Runs the flow from `u = 0` to `cfg.horizon`, storing snapshots at
    /// `cfg.output_times(extra_times)`.
    pub fn run(&self, eps: f64, cfg: &SolverConfig, extra_times: &[f64]) -> Result<Trajectory> {
        cfg.validate()?;
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
        }
        let times = cfg.output_times(extra_times);
        let mut state = self.initial_state(eps)?;
        let mut snapshots = vec![Snapshot { t: 0.0, u: state.u.clone(), udot: state.udot.clone() }];
        let mut stats = RunStats::default();
        for &target in times.iter().skip(1) {
            while state.t < target {
                let mut dt = next_step(state.t, target, eps, cfg);
                let mut halvings = 0;
                loop {
                    match self.try_step(&state, dt, cfg) {
                        Ok((next, iters)) => {
                            stats.newton_iterations += iters;
                            state = next;
                            break;
                        }
                        Err(e) if halvings >= MAX_HALVINGS => {
                            return Err(Error::StepFailure {
                                t: state.t,
                                dt,
                                halvings,
                                iterations: e.iterations,
                                residual: e.residual,
                            });
                        }
                        Err(_) => {
                            halvings += 1;
                            stats.halvings += 1;
                            dt *= 0.5;
                        }
                    }
                }
                stats.steps += 1;
                if (state.t - target).abs() <= 1e-12 * (1.0 + target) {
                    state.t = target;
                }
            }
            snapshots.push(Snapshot { t: state.t, u: state.u.clone(), udot: state.udot.clone() });
        }
        Ok(Trajectory {
            mode: self.mode(),
            eps,
            n: self.n(),
            lambda: self.family.lambda,
            grid: self.family.grid().spec(),
            solver: *cfg,
            fingerprint: String::new(),
            snapshots,
            stats,
        })
    }
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

impl SolverConfig {
    /// Same schedule with `dt_max` and `κ` halved.
    pub fn halved(&self) -> Self {
        Self { dt_max: 0.5 * self.dt_max, kappa: 0.5 * self.kappa, ..*self }
    }
}

/// Step-doubling extrapolation `2·fine - coarse` of two runs with the same snapshot
/// times, `fine` using [`SolverConfig::halved`]. Cancels the leading `O(dt)` error.
pub fn richardson(coarse: &Trajectory, fine: &Trajectory) -> Result<Trajectory> {
    let same_times = coarse.snapshots.len() == fine.snapshots.len()
        && coarse.snapshots.iter().zip(&fine.snapshots).all(|(a, b)| a.t == b.t);
    if !same_times || coarse.eps != fine.eps || coarse.mode != fine.mode {
        return Err(Error::InvalidArgument("extrapolation needs matching trajectories".into()));
    }
    let mut out = fine.clone();
    for (o, c) in out.snapshots.iter_mut().zip(&coarse.snapshots) {
        for (x, y) in o.u.iter_mut().zip(&c.u) {
            *x = 2.0 * *x - y;
        }
        for (x, y) in o.udot.iter_mut().zip(&c.udot) {
            *x = 2.0 * *x - y;
        }
    }
    out.stats.steps += coarse.stats.steps;
    out.stats.newton_iterations += coarse.stats.newton_iterations;
    out.stats.halvings += coarse.stats.halvings;
    Ok(out)
}

impl FlowProblem {
    /// [`FlowProblem::run`] at `cfg` and `cfg.halved()`, combined by [`richardson`].
    pub fn run_extrapolated(&self, eps: f64, cfg: &SolverConfig, extra_times: &[f64]) -> Result<Trajectory> {
        let (coarse, fine) =
            rayon::join(|| self.run(eps, cfg, extra_times), || self.run(eps, &cfg.halved(), extra_times));
        let mut out = richardson(&coarse?, &fine?)?;
        out.solver = *cfg;
        Ok(out)
    }
}

/// Result of an `ε`-ladder.
#[derive(Debug, Clone)]
pub struct Continuation {
    pub trajectories: Vec<Trajectory>,
    /// `δ_k = sup |u_{ε_k} - u_{ε_{k+1}}|` over common snapshots and nodes.
    pub deltas: Vec<f64>,
}

pub fn validate_ladder(ladder: &[f64]) -> Result<()> {
    if ladder.is_empty() {
        return Err(Error::InvalidArgument("empty eps ladder".into()));
    }
    if ladder.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
        return Err(Error::InvalidArgument("eps ladder entries must be positive".into()));
    }
    if ladder.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument("eps ladder must be strictly decreasing".into()));
    }
    Ok(())
}

/// Runs one trajectory per `ε` (in parallel) and the successive sup-differences.
pub fn epsilon_continuation(
    problem: &FlowProblem,
    cfg: &SolverConfig,
    ladder: &[f64],
    extra_times: &[f64],
) -> Result<Continuation> {
    validate_ladder(ladder)?;
    let trajectories = ladder.par_iter().map(|&eps| problem.run(eps, cfg, extra_times)).collect::<Result<Vec<_>>>()?;
    let deltas = trajectories.windows(2).map(|w| trajectory_distance(&w[0], &w[1])).collect();
    Ok(Continuation { trajectories, deltas })
}

/// Sup over common snapshot times and all nodes of `|u₁ - u₂|`.
pub fn trajectory_distance(a: &Trajectory, b: &Trajectory) -> f64 {
    let mut out: f64 = 0.0;
    for sa in &a.snapshots {
        if let Some(sb) = b.snapshots.iter().find(|sb| (sb.t - sa.t).abs() <= 1e-12 * (1.0 + sa.t)) {
            out = out.max(sa.u.iter().zip(&sb.u).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max));
        }
    }
    out
}

/// A metric of the normalized flow reconstructed from an unnormalized trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct RescaledMetric {
    pub t: f64,
    /// Matching unnormalized time.
    pub s: f64,
    pub eigenvalues: MetricEigenvalues,
}

/// `ω̃(t) = e^{-λt} ω(s)` with `s = (e^{λt} - 1)/λ`, `ω(s) = ω_s + i∂∂̄u(s)` evaluated by
/// cubic interpolation of `u` between snapshots.
pub fn rescale_to_normalized(traj: &Trajectory, problem: &FlowProblem, times: &[f64]) -> Result<Vec<RescaledMetric>> {
    if traj.mode.is_normalized() || problem.mode() != traj.mode {
        return Err(Error::InvalidArgument("rescaling needs the matching unnormalized problem".into()));
    }
    let lambda = traj.lambda;
    let horizon = traj.snapshots.last().map_or(0.0, |s| s.t);
    times
        .iter()
        .map(|&t| {
            let s = unnormalized_time(t, lambda);
            if s > horizon * (1.0 + 1e-12) {
                return Err(Error::OutOfRange { requested: t, horizon });
            }
            let u = traj.interpolate_u(s)?;
            let eig = problem.metric_eigenvalues(&u, s, traj.eps).scaled((-lambda * t).exp());
            Ok(RescaledMetric { t, s, eigenvalues: eig })
        })
        .collect()
}
