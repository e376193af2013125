//! Defining functions, the Cheng-Yau background `ω̄ = -i∂∂̄ log(-φ)`, the function `f`
//! and the time-dependent background families of the four flows.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{log_determinant, metric_eigenvalues, ricci_potential};
use crate::grid::{AnalyticPart, MetricEigenvalues, RadialGrid, RadialPotential};

/// A registry entry: `name(args)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Preset {
    /// `φ = ρ - R²`.
    Ball { radius: f64 },
    /// `φ = ρ + aρ² - (R² + aR⁴)`; the same ball as `Ball { radius }`.
    PerturbedBall { a: f64, radius: f64 },
    /// The Cheng-Yau background of the scenario's defining function.
    HyperbolicBg,
    /// `Φ = cρ`.
    Euclidean { c: f64 },
    /// `Φ = aρ + bρ²`.
    Quadratic { a: f64, b: f64 },
}

pub const PRESET_REGISTRY: &[(&str, &str, &str)] = &[
    ("ball(R)", "defining function", "phi = rho - R^2; R in (0, 100]"),
    ("perturbed-ball(a,R)", "defining function", "phi = rho + a rho^2 - (R^2 + a R^4); a in [0, 10], R in (0, 100]"),
    (
        "hyperbolic-bg",
        "metric potential",
        "Phi = -log(-phi) of the scenario's defining function (initial metric or omega_M)",
    ),
    ("euclidean(c)", "metric potential", "Phi = c rho; c in (0, 1e3]"),
    ("quadratic(a,b)", "metric potential", "Phi = a rho + b rho^2; a in (0, 1e3], b >= -a/(4 R2)"),
];

pub fn list_presets() -> String {
    let mut out = String::from("preset                 kind               parameters\n");
    for (name, kind, params) in PRESET_REGISTRY {
        out.push_str(&format!("{name:<22} {kind:<18} {params}\n"));
    }
    out
}

impl Preset {
    pub fn is_defining_function(&self) -> bool {
        matches!(self, Preset::Ball { .. } | Preset::PerturbedBall { .. })
    }

    /// `R2 = R²` for defining-function presets.
    pub fn r2(&self) -> Option<f64> {
        match *self {
            Preset::Ball { radius } | Preset::PerturbedBall { radius, .. } => Some(radius * radius),
            _ => None,
        }
    }

    fn check_ranges(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        match *self {
            Preset::Ball { radius } | Preset::PerturbedBall { radius, .. } if !(radius > 0.0 && radius <= 100.0) => {
                bad(format!("radius {radius} out of range (0, 100]"))
            }
            Preset::PerturbedBall { a, .. } if !(0.0..=10.0).contains(&a) => {
                bad(format!("perturbation a = {a} out of range [0, 10]"))
            }
            Preset::Euclidean { c } if !(c > 0.0 && c <= 1e3) => {
                bad(format!("euclidean scale {c} out of range (0, 1e3]"))
            }
            Preset::Quadratic { a, .. } if !(a > 0.0 && a <= 1e3) => {
                bad(format!("quadratic coefficient a = {a} out of range (0, 1e3]"))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Preset::Ball { radius } => write!(f, "ball({radius})"),
            Preset::PerturbedBall { a, radius } => write!(f, "perturbed-ball({a},{radius})"),
            Preset::HyperbolicBg => write!(f, "hyperbolic-bg"),
            Preset::Euclidean { c } => write!(f, "euclidean({c})"),
            Preset::Quadratic { a, b } => write!(f, "quadratic({a},{b})"),
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, args) = match s.find('(') {
            Some(open) => {
                let close = s.rfind(')').filter(|&c| c == s.len() - 1 && c > open);
                let close = close.ok_or_else(|| Error::UnknownPreset(s.to_string()))?;
                let args = s[open + 1..close]
                    .split(',')
                    .map(|a| a.trim().parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| Error::UnknownPreset(s.to_string()))?;
                (s[..open].trim(), args)
            }
            None => (s, Vec::new()),
        };
        let preset = match (name, args.as_slice()) {
            ("ball", [r]) => Preset::Ball { radius: *r },
            ("perturbed-ball", [a, r]) => Preset::PerturbedBall { a: *a, radius: *r },
            ("hyperbolic-bg", []) => Preset::HyperbolicBg,
            ("euclidean", [c]) => Preset::Euclidean { c: *c },
            ("quadratic", [a, b]) => Preset::Quadratic { a: *a, b: *b },
            _ => return Err(Error::UnknownPreset(s.to_string())),
        };
        preset.check_ranges()?;
        Ok(preset)
    }
}

/// A radial strictly plurisubharmonic defining function sampled exactly at the nodes.
#[derive(Debug, Clone)]
pub struct DefiningFunction {
    pub grid: Arc<RadialGrid>,
    pub phi: Vec<f64>,
    pub phi_prime: Vec<f64>,
    pub phi_second: Vec<f64>,
}

impl DefiningFunction {
    pub fn from_preset(preset: Preset, grid: Arc<RadialGrid>) -> Result<Self> {
        let r2 =
            preset.r2().ok_or_else(|| Error::InvalidArgument(format!("{preset} is not a defining-function preset")))?;
        if ((r2 - grid.r2()) / r2).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "grid R2 = {} does not match domain of {preset} (R2 = {r2})",
                grid.r2()
            )));
        }
        let a = match preset {
            Preset::PerturbedBall { a, .. } => a,
            _ => 0.0,
        };
        // φ = -(R2 - ρ)(1 + a(R2 + ρ)), written in factored form so that φ stays
        // accurate when R2 - ρ is tiny.
        let rho = grid.rho();
        let dist = grid.dist();
        let phi = rho.iter().zip(dist).map(|(r, s)| -s * (1.0 + a * (r2 + r))).collect();
        let phi_prime = rho.iter().map(|r| 1.0 + 2.0 * a * r).collect();
        let phi_second = vec![2.0 * a; grid.len()];
        Self::new(grid, phi, phi_prime, phi_second)
    }

    pub fn new(grid: Arc<RadialGrid>, phi: Vec<f64>, phi_prime: Vec<f64>, phi_second: Vec<f64>) -> Result<Self> {
        let df = Self { grid, phi, phi_prime, phi_second };
        df.validate()?;
        Ok(df)
    }

    fn validate(&self) -> Result<()> {
        let rho = self.grid.rho();
        for i in 0..self.grid.len() {
            if !(self.phi[i] < 0.0) {
                return Err(Error::InvalidDefiningFunction {
                    node: i,
                    reason: format!("phi = {:e} is not negative", self.phi[i]),
                });
            }
            let a = self.phi_prime[i];
            let b = a + rho[i] * self.phi_second[i];
            if !(a > 0.0 && b > 0.0) {
                return Err(Error::InvalidDefiningFunction {
                    node: i,
                    reason: format!("not strictly plurisubharmonic (A = {a:e}, B = {b:e})"),
                });
            }
        }
        // φ must vanish on the boundary: first-order extrapolation from the last node.
        let last = self.grid.len() - 1;
        let bound = 2.0 * self.phi_prime[last] * self.grid.dist()[last];
        if self.phi[last].abs() >= bound {
            return Err(Error::InvalidDefiningFunction {
                node: last,
                reason: format!(
                    "|phi| = {:e} at the last node does not vanish at the boundary (bound {bound:e})",
                    self.phi[last].abs()
                ),
            });
        }
        Ok(())
    }

    /// Eigenvalues `(A_φ, B_φ)` of `i∂∂̄φ`.
    pub fn hessian_eigenvalues(&self) -> MetricEigenvalues {
        let rho = self.grid.rho();
        MetricEigenvalues {
            a: self.phi_prime.clone(),
            b: (0..self.grid.len()).map(|i| self.phi_prime[i] + rho[i] * self.phi_second[i]).collect(),
        }
    }
}

/// `Φ̄ = -log(-φ)` with eigenvalues from the exact derivative fields of `φ`.
pub fn background_metric(df: &DefiningFunction) -> Result<RadialPotential> {
    if let Some(node) = df.phi.iter().position(|p| !(*p < 0.0)) {
        return Err(Error::InvalidDefiningFunction {
            node,
            reason: format!("phi = {:e} is not negative", df.phi[node]),
        });
    }
    let m = df.grid.len();
    let mut part = AnalyticPart { values: Vec::with_capacity(m), d1: Vec::with_capacity(m), d2: Vec::with_capacity(m) };
    for i in 0..m {
        let (p, p1, p2) = (df.phi[i], df.phi_prime[i], df.phi_second[i]);
        part.values.push(-(-p).ln());
        part.d1.push(-p1 / p);
        part.d2.push(-p2 / p + (p1 * p1) / (p * p));
    }
    RadialPotential::from_parts(df.grid.clone(), Some(part), None)
}

/// `f = log( det(φ_{i j̄}) · (|dφ|²_φ - φ) )`.
pub fn cheng_yau_f(df: &DefiningFunction, n: usize) -> Result<Vec<f64>> {
    let rho = df.grid.rho();
    let eig = df.hessian_eigenvalues();
    (0..df.grid.len())
        .map(|i| {
            let (a, b) = (eig.a[i], eig.b[i]);
            let grad2 = df.phi_prime[i] * df.phi_prime[i] * rho[i] / b;
            let det = a.powi(n as i32 - 1) * b;
            let arg = det * (grad2 - df.phi[i]);
            if arg > 0.0 && arg.is_finite() {
                Ok(arg.ln())
            } else {
                Err(Error::LogArgument { node: i, value: arg })
            }
        })
        .collect()
}

/// Sup over nodes of the eigenvalues of `i∂∂̄[ricci_potential(Φ̄) + (n+1)Φ̄ + f]`,
/// measured relative to the eigenvalues of `ω̄`.
pub fn cy_identity_residual(df: &DefiningFunction, n: usize) -> Result<f64> {
    let bg = background_metric(df)?;
    let f = cheng_yau_f(df, n)?;
    let combo = ricci_potential(&bg, n)?.combine(1.0, &bg, (n + 1) as f64).plus_sampled(&f);
    relative_form_norm(&combo, &metric_eigenvalues(&bg)?)
}

/// `max_i max(|A_ψ/A_ω|, |B_ψ/B_ω|)`: the size of the (1,1)-form `i∂∂̄ψ` measured in `ω`.
pub(crate) fn relative_form_norm(psi: &RadialPotential, omega: &MetricEigenvalues) -> Result<f64> {
    let e = metric_eigenvalues(psi)?;
    Ok((0..e.len()).map(|i| (e.a[i] / omega.a[i]).abs().max((e.b[i] / omega.b[i]).abs())).fold(0.0, f64::max))
}

/// The four Monge-Ampère flows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlowMode {
    Unnormalized,
    Normalized,
    GeneralUnnormalized,
    GeneralNormalized,
}

impl FlowMode {
    pub const ALL: [FlowMode; 4] =
        [FlowMode::Unnormalized, FlowMode::Normalized, FlowMode::GeneralUnnormalized, FlowMode::GeneralNormalized];

    pub fn is_general(self) -> bool {
        matches!(self, FlowMode::GeneralUnnormalized | FlowMode::GeneralNormalized)
    }

    pub fn is_normalized(self) -> bool {
        matches!(self, FlowMode::Normalized | FlowMode::GeneralNormalized)
    }

    /// Normalization constant: `n + 1` on domains, `1` with a general background.
    pub fn lambda(self, n: usize) -> f64 {
        if self.is_general() {
            1.0
        } else {
            (n + 1) as f64
        }
    }

    /// Coefficient of the `-u` term in the flow equation.
    pub fn zeroth_order(self, n: usize) -> f64 {
        if self.is_normalized() {
            self.lambda(n)
        } else {
            0.0
        }
    }

    pub fn counterpart(self) -> FlowMode {
        match self {
            FlowMode::Unnormalized => FlowMode::Normalized,
            FlowMode::Normalized => FlowMode::Unnormalized,
            FlowMode::GeneralUnnormalized => FlowMode::GeneralNormalized,
            FlowMode::GeneralNormalized => FlowMode::GeneralUnnormalized,
        }
    }

    /// Weights `(α, β)` of the family `α·Φ₀ + β·base` at time `t`.
    ///
    /// Normalized modes carry `ε` as `β = 1 - e^{-λt} + λε e^{-λt}`, the image of the
    /// unnormalized `ε`-family under the exponential rescaling.
    pub fn coefficients(self, t: f64, eps: f64, lambda: f64) -> (f64, f64) {
        if self.is_normalized() {
            let decay = (-lambda * t).exp();
            (decay, -(-lambda * t).exp_m1() + lambda * eps * decay)
        } else {
            (1.0, lambda * (t + eps))
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FlowMode::Unnormalized => "unnormalized",
            FlowMode::Normalized => "normalized",
            FlowMode::GeneralUnnormalized => "general-unnormalized",
            FlowMode::GeneralNormalized => "general-normalized",
        }
    }
}

impl fmt::Display for FlowMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FlowMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FlowMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s.trim())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown mode `{s}`")))
    }
}

/// Evolving background `α(t)·Φ₀ + β(t)·base` together with the reference volume form.
///
/// Domain modes: `base = Φ̄`, reference `ω̄ⁿ`. General modes: `base` is the potential of
/// `-Ric(ω_M)`, reference `ω_Mⁿ`.
#[derive(Debug, Clone)]
pub struct BackgroundFamily {
    pub mode: FlowMode,
    pub n: usize,
    pub lambda: f64,
    pub omega0: RadialPotential,
    pub base: RadialPotential,
    pub reference: RadialPotential,
}

impl BackgroundFamily {
    pub fn domain(mode: FlowMode, df: &DefiningFunction, omega0: RadialPotential) -> Result<Self> {
        if mode.is_general() {
            return Err(Error::InvalidArgument(format!("{mode} needs a general background")));
        }
        let n = df.grid.dim();
        let bg = background_metric(df)?;
        Ok(Self { mode, n, lambda: mode.lambda(n), omega0, base: bg.clone(), reference: bg })
    }

    pub fn general(mode: FlowMode, omega_m: RadialPotential, omega0: RadialPotential) -> Result<Self> {
        if !mode.is_general() {
            return Err(Error::InvalidArgument(format!("{mode} is not a general mode")));
        }
        let n = omega_m.grid().dim();
        let base = ricci_potential(&omega_m, n)?.scaled(-1.0);
        Ok(Self { mode, n, lambda: mode.lambda(n), omega0, base, reference: omega_m })
    }

    /// Same data, other normalization.
    pub fn with_mode(&self, mode: FlowMode) -> Result<Self> {
        if mode.is_general() != self.mode.is_general() {
            return Err(Error::InvalidArgument(format!("cannot switch {} to {mode}", self.mode)));
        }
        Ok(Self { mode, ..self.clone() })
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        self.omega0.grid()
    }

    pub fn family_at(&self, t: f64, eps: f64) -> Result<RadialPotential> {
        if !(t >= 0.0 && eps >= 0.0) {
            return Err(Error::InvalidArgument(format!("need t >= 0 and eps >= 0, got t = {t}, eps = {eps}")));
        }
        let (alpha, beta) = self.mode.coefficients(t, eps, self.lambda);
        Ok(self.omega0.combine(alpha, &self.base, beta))
    }

    /// The `t → ∞` limit of the normalized family (the base metric itself).
    pub fn limit_base(&self) -> &RadialPotential {
        &self.base
    }

    pub fn log_reference_volume(&self) -> Result<Vec<f64>> {
        log_determinant(&metric_eigenvalues(&self.reference)?, self.n)
    }
}

/// Smallest `c` with `ω₀ ≤ c·ω_ref` node-wise: `max_i max(A₀/A, B₀/B)`.
pub fn comparison_constant(omega0: &MetricEigenvalues, reference: &MetricEigenvalues) -> f64 {
    (0..omega0.len())
        .map(|i| (omega0.a[i] / reference.a[i]).max(omega0.b[i] / reference.b[i]))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Node-wise extremes of `μ` in `c₁ ω ≤ -Ric(ω) ≤ c₂ ω` for a radial metric.
pub fn negative_ricci_bounds(omega: &RadialPotential, n: usize) -> Result<(f64, f64)> {
    let e = metric_eigenvalues(omega)?;
    let neg_ric = metric_eigenvalues(&ricci_potential(omega, n)?.scaled(-1.0))?;
    let ratios = neg_ric.a.iter().zip(&e.a).chain(neg_ric.b.iter().zip(&e.b)).map(|(r, g)| r / g);
    Ok(ratios.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v))))
}

/// Builds a metric potential from a preset.
pub fn metric_preset(preset: Preset, df: &DefiningFunction) -> Result<RadialPotential> {
    let grid = df.grid.clone();
    match preset {
        Preset::HyperbolicBg => background_metric(df),
        Preset::Euclidean { c } => RadialPotential::analytic(grid, move |r| c * r, move |_| c, |_| 0.0),
        Preset::Quadratic { a, b } => {
            let pot = RadialPotential::analytic(
                grid,
                move |r| a * r + b * r * r,
                move |r| a + 2.0 * b * r,
                move |_| 2.0 * b,
            )?;
            metric_eigenvalues(&pot)?.ensure_positive()?;
            Ok(pot)
        }
        other => Err(Error::InvalidArgument(format!("{other} is not a metric preset"))),
    }
}
