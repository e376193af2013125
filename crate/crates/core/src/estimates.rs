//! Machine checks of the a-priori estimates against computed trajectories.
//!
//! Estimates with unspecified constants are checked as functional forms: a
//! compensated quantity must stay bounded, or a fitted envelope must hold at every
//! snapshot with fixed slack. Inequalities with explicit right-hand sides carry a
//! separately reported discretization slack.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::background::{comparison_constant, cy_identity_residual, negative_ricci_bounds, DefiningFunction};
use crate::error::Result;
use crate::flow::{
    boundary_value, far_field_backward_euler, step_schedule, FarField, FlowProblem, RescaledMetric, Trajectory,
};
use crate::geometry::{curvature_components, geodesic_length_profile, metric_eigenvalues};
use crate::grid::{MetricEigenvalues, RadialPotential};

/// Every check name, in report order.
pub const CHECK_MANIFEST: [&str; 22] = [
    "c0_precise",
    "time_derivative_upper",
    "time_derivative_lower",
    "metric_equivalence",
    "trace_bound",
    "schwarz_lemma",
    "general_c0",
    "general_time_derivative",
    "general_metric_equivalence",
    "normalized_c0",
    "normalized_time_derivative",
    "normalized_metric_equivalence",
    "general_normalized_c0",
    "general_normalized_decay",
    "general_normalized_metric_equivalence",
    "rescaling_consistency",
    "epsilon_cauchy",
    "ke_convergence",
    "defining_function_independence",
    "completeness",
    "curvature_asymptote",
    "cheng_yau_identity",
];

/// Start of the uniform-in-time window for normalized checks.
pub const T0: f64 = 0.5;
/// Relative slack of fitted decay envelopes.
pub const FIT_SLACK: f64 = 0.2;
/// Relative discretization tolerance of the Schwarz inequality.
pub const SCHWARZ_TOL: f64 = 1e-2;
/// Geodesic-length slope in `y` above which a metric is flagged complete.
pub const COMPLETE_SLOPE: f64 = 1e-2;
/// Distance of the scale-normalized mixed curvature from `-1`.
pub const CURVATURE_TOL: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckStatus {
    Pass,
    Fail,
    NotApplicable,
}

impl CheckStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "fail",
            CheckStatus::NotApplicable => "not-applicable",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub status: CheckStatus,
    /// Distance from failure, or the bounding constant for boundedness checks.
    #[serde(deserialize_with = "nan_from_null")]
    pub margin: f64,
    /// Discretization slack already granted to the inequality.
    pub slack: f64,
    pub detail: String,
}

/// JSON has no NaN; it is written as `null` and read back here.
fn nan_from_null<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

impl Check {
    fn new(name: &str, status: CheckStatus, margin: f64, slack: f64, detail: String) -> Self {
        Self { name: name.into(), status, margin, slack, detail }
    }

    pub fn not_applicable(name: &str, why: &str) -> Self {
        Self::new(name, CheckStatus::NotApplicable, f64::NAN, 0.0, why.into())
    }

    fn bounded(name: &str, value: f64, what: &str) -> Self {
        let status = if value.is_finite() { CheckStatus::Pass } else { CheckStatus::Fail };
        Self::new(name, status, value, 0.0, format!("{what} = {value:.6e}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub fingerprint: String,
    pub checks: Vec<Check>,
    #[serde(deserialize_with = "nan_map_from_null")]
    pub constants: BTreeMap<String, f64>,
}

fn nan_map_from_null<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<BTreeMap<String, f64>, D::Error> {
    let raw = BTreeMap::<String, Option<f64>>::deserialize(d)?;
    Ok(raw.into_iter().map(|(k, v)| (k, v.unwrap_or(f64::NAN))).collect())
}

impl EstimateReport {
    /// Orders `checks` by the manifest and marks the missing ones not applicable.
    pub fn assemble(fingerprint: &str, checks: Vec<Check>, constants: BTreeMap<String, f64>) -> Self {
        let ordered = CHECK_MANIFEST
            .iter()
            .map(|name| {
                checks
                    .iter()
                    .find(|c| c.name == *name)
                    .cloned()
                    .unwrap_or_else(|| Check::not_applicable(name, "not evaluated in this scenario"))
            })
            .collect();
        Self { fingerprint: fingerprint.into(), checks: ordered, constants }
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_text(&self) -> String {
        let w = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
        let mut out = format!("fingerprint {}\n", self.fingerprint);
        for c in &self.checks {
            let _ = writeln!(
                out,
                "{:<w$}  {:<14}  margin {:>13}  slack {:>10.3e}  {}",
                c.name,
                c.status.as_str(),
                format!("{:.6e}", c.margin),
                c.slack,
                c.detail,
            );
        }
        for (k, v) in &self.constants {
            let _ = writeln!(out, "constant {k} = {v:.6e}");
        }
        out
    }
}

/// Snapshot-wise metric eigenvalues of a trajectory.
fn metrics(traj: &Trajectory, problem: &FlowProblem) -> Vec<MetricEigenvalues> {
    traj.snapshots.iter().map(|s| problem.metric_eigenvalues(&s.u, s.t, traj.eps)).collect()
}

fn reference_eigenvalues(problem: &FlowProblem) -> Result<MetricEigenvalues> {
    metric_eigenvalues(&problem.family.reference)
}

/// First snapshot time reached after ten solver steps.
fn t_min(traj: &Trajectory) -> f64 {
    let times = traj.times();
    let schedule = step_schedule(traj.eps, &traj.solver, &times);
    let after = schedule.get(9).copied().unwrap_or(f64::INFINITY);
    times.into_iter().find(|t| *t >= after).unwrap_or(f64::INFINITY)
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(*x), hi.max(*x)))
}

/// Eigenvalue ratios `ω/ω_ref` at one snapshot: `(min, max)`.
fn ratio_range(eig: &MetricEigenvalues, reference: &MetricEigenvalues) -> (f64, f64) {
    let r: Vec<f64> = (0..eig.len()).flat_map(|i| [eig.a[i] / reference.a[i], eig.b[i] / reference.b[i]]).collect();
    min_max(&r)
}

/// `lower ≤ u(t) ≤ upper` for all snapshots `t > 0` and nodes, with backward-Euler slack.
fn bracket_check(
    name: &str,
    traj: &Trajectory,
    lo: (&FarField, f64),
    hi: (&FarField, f64),
    offset: &dyn Fn(f64) -> f64,
    from: f64,
) -> Check {
    let mode = traj.mode;
    let n = traj.n;
    let times = traj.times();
    let slack_of = |far: &FarField| -> Vec<f64> {
        let be = far_field_backward_euler(mode, n, traj.eps, far, &traj.solver, &times);
        times.iter().zip(&be).map(|(t, b)| (b - boundary_value(mode, *t, traj.eps, n, far)).abs()).collect()
    };
    let (slack_lo, slack_hi) = (slack_of(lo.0), slack_of(hi.0));
    let mut margin = f64::INFINITY;
    let mut max_slack: f64 = 0.0;
    let mut worst = None;
    for (k, s) in traj.snapshots.iter().enumerate() {
        if s.t <= 0.0 || s.t < from {
            continue;
        }
        let lower = boundary_value(mode, s.t, traj.eps, n, lo.0) + lo.1 * offset(s.t);
        let upper = boundary_value(mode, s.t, traj.eps, n, hi.0) + hi.1 * offset(s.t);
        let slack = slack_lo[k].max(slack_hi[k]) + 1e-9;
        max_slack = max_slack.max(slack);
        for (i, u) in s.u.iter().enumerate() {
            let m = (u - lower + slack).min(upper + slack - u);
            if m < margin {
                margin = m;
                worst = Some((i, s.t, lower, upper, *u));
            }
        }
    }
    match worst {
        None => Check::not_applicable(name, "no snapshot with t > 0"),
        Some((i, t, lower, upper, u)) => {
            let status = if margin >= 0.0 { CheckStatus::Pass } else { CheckStatus::Fail };
            let detail = format!("tightest at node {i}, t = {t}: {lower:.6} <= {u:.6} <= {upper:.6}");
            Check::new(name, status, margin, max_slack, detail)
        }
    }
}

/// Checks of the unnormalized flow (domain or general background).
pub fn check_apriori_unnormalized(
    traj: &Trajectory,
    problem: &FlowProblem,
    constants: &mut BTreeMap<String, f64>,
) -> Result<Vec<Check>> {
    let mode = traj.mode;
    if mode.is_normalized() {
        return Ok(Vec::new());
    }
    let general = mode.is_general();
    let n = traj.n;
    let nf = n as f64;
    let reference = reference_eigenvalues(problem)?;
    let c = comparison_constant(problem.initial_eigenvalues(), &reference);
    let (mu_lo, mu_hi) = if general { negative_ricci_bounds(&problem.family.reference, n)? } else { (1.0, 1.0) };
    let (f_lo, f_hi) = min_max(&problem.f);
    constants.insert("c".into(), c);
    constants.insert("base_ratio_min".into(), mu_lo);
    constants.insert("base_ratio_max".into(), mu_hi);
    let mut checks = Vec::new();

    let names = if general {
        ["general_c0", "general_time_derivative", "general_metric_equivalence"]
    } else {
        ["c0_precise", "time_derivative_upper", "metric_equivalence"]
    };

    let lo = FarField::isotropic(0.0, mu_lo, f_lo);
    let hi = FarField::isotropic(c, mu_hi, f_hi);
    if mu_lo > 0.0 {
        checks.push(bracket_check(names[0], traj, (&lo, 0.0), (&hi, 0.0), &|_| 0.0, 0.0));
    } else {
        checks.push(Check::not_applicable(names[0], "base is not bounded below by the reference metric"));
    }

    let tmin = t_min(traj);
    let window: Vec<_> = traj.snapshots.iter().filter(|s| s.t >= tmin).collect();
    let upper = window.iter().flat_map(|s| s.udot.iter().map(move |d| s.t * (d - nf).max(0.0))).fold(0.0, f64::max);
    let lower =
        window.iter().flat_map(|s| s.udot.iter().map(move |d| (nf * s.t.ln() - d).max(0.0))).fold(0.0, f64::max);
    if window.is_empty() {
        checks.push(Check::not_applicable(names[1], "no snapshot after the ramp layer"));
        if !general {
            checks.push(Check::not_applicable("time_derivative_lower", "no snapshot after the ramp layer"));
        }
    } else if general {
        let both = upper.max(lower);
        let mut ch = Check::bounded(names[1], both, "sup max(t(udot - n)+, (n log t - udot)+)");
        ch.detail.push_str(&format!(" on [{tmin}, {}]", traj.solver.horizon));
        checks.push(ch);
        constants.insert("C1".into(), lower);
        constants.insert("C2".into(), upper);
    } else {
        checks.push(Check::bounded(names[1], upper, "sup t(udot - n)+"));
        checks.push(Check::bounded("time_derivative_lower", lower, "sup (n log t - udot)+"));
        constants.insert("C1".into(), lower);
        constants.insert("C2".into(), upper);
    }

    let eigs = metrics(traj, problem);
    let mut worst: Option<(f64, f64, f64)> = None;
    let mut ok = true;
    for (s, e) in traj.snapshots.iter().zip(&eigs) {
        if s.t <= 0.0 {
            continue;
        }
        let (lo, hi) = ratio_range(e, &reference);
        ok &= lo > 0.0 && hi.is_finite();
        if worst.is_none_or(|(_, l, _)| lo < l) {
            worst = Some((s.t, lo, hi));
        }
        if s.t == traj.solver.horizon || (s.t - 1.0).abs() < 1e-12 {
            constants.insert(format!("C3(t={})", s.t), lo);
            constants.insert(format!("C4(t={})", s.t), hi);
        }
    }
    checks.push(match worst {
        None => Check::not_applicable(names[2], "no snapshot with t > 0"),
        Some((t, lo, hi)) => Check::new(
            names[2],
            if ok { CheckStatus::Pass } else { CheckStatus::Fail },
            lo,
            0.0,
            format!("smallest ratio {lo:.6e} at t = {t} (largest there {hi:.6e})"),
        ),
    });

    // tr_ω ω_ref ≤ e^{C/t} on [t_min, 1].
    let mut trace = f64::NEG_INFINITY;
    let mut seen = false;
    for (s, e) in traj.snapshots.iter().zip(&eigs) {
        if s.t < tmin || s.t > 1.0 {
            continue;
        }
        seen = true;
        for i in 0..e.len() {
            let tr = (nf - 1.0) * reference.a[i] / e.a[i] + reference.b[i] / e.b[i];
            trace = trace.max(s.t * tr.ln());
        }
    }
    if seen {
        constants.insert("trace_C".into(), trace);
        checks.push(Check::bounded("trace_bound", trace, "sup t log tr"));
    } else {
        checks.push(Check::not_applicable("trace_bound", "no snapshot in [t_min, 1]"));
    }

    checks.push(schwarz_check(traj, &problem.family.reference, &eigs, constants)?);
    Ok(checks)
}

/// `det ω(t)/det ω_cmp ≥ (Ct)ⁿ(1 - tol)` with `C` the comparison metric's Ricci bound.
pub fn schwarz_check(
    traj: &Trajectory,
    comparison: &RadialPotential,
    eigs: &[MetricEigenvalues],
    constants: &mut BTreeMap<String, f64>,
) -> Result<Check> {
    let name = "schwarz_lemma";
    let n = traj.n;
    let (c_ric, _) = negative_ricci_bounds(comparison, n)?;
    if !(c_ric > 1e-8) {
        return Ok(Check::not_applicable(name, "comparison metric has no negative Ricci bound"));
    }
    constants.insert("schwarz_C".into(), c_ric);
    let cmp = metric_eigenvalues(comparison)?;
    let k = (n - 1) as i32;
    let mut margin = f64::INFINITY;
    let mut worst = None;
    for (s, e) in traj.snapshots.iter().zip(eigs) {
        if s.t <= 0.0 {
            continue;
        }
        let bound = (c_ric * s.t).powi(n as i32);
        for i in 0..e.len() {
            let ratio = (e.a[i] / cmp.a[i]).powi(k) * (e.b[i] / cmp.b[i]);
            let m = ratio / bound - (1.0 - SCHWARZ_TOL);
            if m < margin {
                margin = m;
                worst = Some((i, s.t, ratio, bound));
            }
        }
    }
    Ok(match worst {
        None => Check::not_applicable(name, "no snapshot with t > 0"),
        Some((i, t, ratio, bound)) => Check::new(
            name,
            if margin >= 0.0 { CheckStatus::Pass } else { CheckStatus::Fail },
            margin,
            SCHWARZ_TOL,
            format!("tightest at node {i}, t = {t}: det ratio {ratio:.6e} vs (Ct)^n = {bound:.6e}, C = {c_ric:.6}"),
        ),
    })
}

/// Least-squares line `y ≈ a + b x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let k = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / k, y.iter().sum::<f64>() / k);
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (my - b * mx, b)
}

/// Envelope `exp(a + b x(t))` fitted to `log y` over positive samples; pass iff every
/// sample stays below `(1 + FIT_SLACK)` times it.
fn envelope_fit(
    name: &str,
    samples: &[(f64, f64)],
    x_of: &dyn Fn(f64) -> f64,
    what: &str,
) -> (Check, Option<(f64, f64)>) {
    let pos: Vec<(f64, f64)> = samples.iter().copied().filter(|(_, y)| *y > 0.0).collect();
    if pos.len() < 2 {
        let detail = format!("{what}: fewer than two positive samples, envelope trivially holds");
        return (Check::new(name, CheckStatus::Pass, f64::INFINITY, FIT_SLACK, detail), None);
    }
    let x: Vec<f64> = pos.iter().map(|(t, _)| x_of(*t)).collect();
    let ly: Vec<f64> = pos.iter().map(|(_, y)| y.ln()).collect();
    let (a, b) = linear_fit(&x, &ly);
    let mut margin = f64::INFINITY;
    let mut at = 0.0;
    for (t, y) in &pos {
        let env = (a + b * x_of(*t)).exp();
        let m = 1.0 + FIT_SLACK - y / env;
        if m < margin {
            margin = m;
            at = *t;
        }
    }
    let status = if margin >= 0.0 { CheckStatus::Pass } else { CheckStatus::Fail };
    let detail = format!("{what}: fitted C = {:.6e}, exponent {b:.4}; tightest at t = {at}", a.exp());
    (Check::new(name, status, margin, FIT_SLACK, detail), Some((a.exp(), b)))
}

/// Checks of the normalized flows over `[T0, T]`.
pub fn check_apriori_normalized(
    traj: &Trajectory,
    problem: &FlowProblem,
    constants: &mut BTreeMap<String, f64>,
) -> Result<Vec<Check>> {
    let mode = traj.mode;
    if !mode.is_normalized() {
        return Ok(Vec::new());
    }
    let general = mode.is_general();
    let names = if general {
        ["general_normalized_c0", "general_normalized_decay", "general_normalized_metric_equivalence"]
    } else {
        ["normalized_c0", "normalized_time_derivative", "normalized_metric_equivalence"]
    };
    if traj.solver.horizon < 3.0 {
        return Ok(names.iter().map(|n| Check::not_applicable(n, "horizon below 3")).collect());
    }
    let lambda = traj.lambda;
    let window: Vec<_> = traj.snapshots.iter().filter(|s| s.t >= T0).collect();
    let sup_u = window.iter().flat_map(|s| s.u.iter()).fold(0.0_f64, |a, v| a.max(v.abs()));
    let sup_udot = window.iter().flat_map(|s| s.udot.iter()).fold(0.0_f64, |a, v| a.max(v.abs()));
    let lower_c1 = window.iter().flat_map(|s| s.udot.iter()).fold(0.0_f64, |a, v| a.max(-v));
    constants.insert("C0".into(), sup_u);
    constants.insert("C1".into(), lower_c1);
    let reference = reference_eigenvalues(problem)?;
    let mut checks = Vec::new();

    if general {
        let c = sup_u.max(sup_udot);
        checks.push(Check::bounded(names[0], c, "sup_[t0,T] max(|u|, |udot|)"));
    } else {
        let c = comparison_constant(problem.initial_eigenvalues(), &reference);
        constants.insert("c".into(), c);
        let f_abs = problem.f.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let lo = FarField::isotropic(0.0, 1.0, 0.0);
        let hi = FarField::isotropic(c, 1.0, 0.0);
        let offset = move |t: f64| f_abs * (1.0 + (-lambda * t).exp());
        let mut ch = bracket_check(names[0], traj, (&lo, -1.0), (&hi, 1.0), &offset, 0.0);
        if ch.status == CheckStatus::Pass && !sup_u.is_finite() {
            ch.status = CheckStatus::Fail;
        }
        ch.detail.push_str(&format!("; sup_[t0,T] |u| = {sup_u:.6e}"));
        checks.push(ch);
    }

    let samples: Vec<(f64, f64)> =
        window.iter().map(|s| (s.t, s.udot.iter().fold(f64::NEG_INFINITY, |a, v| a.max(*v)))).collect();
    let (mut ch, fit) = if general {
        let scaled: Vec<(f64, f64)> = samples.iter().map(|(t, y)| (*t, t.exp() * y)).collect();
        envelope_fit(names[1], &scaled, &|t| t.ln(), "e^t udot+ ~ C t^b")
    } else {
        envelope_fit(names[1], &samples, &|t| t.ln() - lambda * t, "udot+ ~ C (t e^{-lambda t})^b")
    };
    if let Some((c, b)) = fit {
        constants.insert("C2".into(), c);
        constants.insert("decay_exponent".into(), b);
    }
    ch.detail.push_str(&format!("; lower bound C1 = {lower_c1:.6e}"));
    if !lower_c1.is_finite() {
        ch.status = CheckStatus::Fail;
    }
    checks.push(ch);

    let mut c3: f64 = 1.0;
    for s in &window {
        let e = problem.metric_eigenvalues(&s.u, s.t, traj.eps);
        let (lo, hi) = ratio_range(&e, &reference);
        c3 = c3.max(hi).max(if lo > 0.0 { 1.0 / lo } else { f64::INFINITY });
    }
    constants.insert("C3".into(), c3);
    checks.push(Check::bounded(names[2], c3, "C3 with C3^-1 w_ref <= w <= C3 w_ref on [t0,T]"));
    Ok(checks)
}

/// Slope of the radial geodesic length in `y` over the last half of the grid.
pub fn completeness_slope(eig: &MetricEigenvalues, problem: &FlowProblem) -> f64 {
    let grid = problem.family.grid();
    let len = geodesic_length_profile(eig, grid);
    let half = grid.len() / 2;
    linear_fit(&grid.y()[half..], &len[half..]).1
}

/// Completeness at every `t > 0`, scale-normalized curvature asymptote and the
/// Cheng-Yau identity.
pub fn check_geometry(
    traj: &Trajectory,
    problem: &FlowProblem,
    df: Option<&DefiningFunction>,
    constants: &mut BTreeMap<String, f64>,
) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let eigs = metrics(traj, problem);
    let slope0 = completeness_slope(problem.initial_eigenvalues(), problem);
    constants.insert("length_slope_t0".into(), slope0);
    let mut min_slope = f64::INFINITY;
    let mut at = 0.0;
    for (s, e) in traj.snapshots.iter().zip(&eigs).skip(1) {
        let k = completeness_slope(e, problem);
        if k < min_slope {
            min_slope = k;
            at = s.t;
        }
    }
    let initial = if slope0 > COMPLETE_SLOPE { "complete" } else { "incomplete" };
    checks.push(if traj.snapshots.len() < 2 {
        Check::not_applicable("completeness", "no snapshot with t > 0")
    } else {
        Check::new(
            "completeness",
            if min_slope > COMPLETE_SLOPE { CheckStatus::Pass } else { CheckStatus::Fail },
            min_slope - COMPLETE_SLOPE,
            0.0,
            format!("min length slope {min_slope:.4e} at t = {at}; initial metric {initial} (slope {slope0:.3e})"),
        )
    });

    let n = traj.n;
    if traj.mode.is_general() || n < 2 {
        let why = if n < 2 { "mixed curvature needs n >= 2" } else { "general background" };
        checks.push(Check::not_applicable("curvature_asymptote", why));
    } else {
        checks.push(curvature_check(traj, problem)?);
    }

    match df {
        Some(df) if !traj.mode.is_general() => {
            let h = df.grid.step();
            let r = cy_identity_residual(df, n)?;
            constants.insert("cy_residual".into(), r);
            let bound = 5.0 * h * h;
            checks.push(Check::new(
                "cheng_yau_identity",
                if r <= bound { CheckStatus::Pass } else { CheckStatus::Fail },
                bound - r,
                bound,
                format!("residual {r:.3e} vs 5h^2 = {bound:.3e}"),
            ));
        }
        _ => checks.push(Check::not_applicable("cheng_yau_identity", "no defining function")),
    }
    Ok(checks)
}

/// `H_mix` of `ω₀ + ω̄`, and `β(t)·H_mix(ω(t))` for `t > 0`, within `CURVATURE_TOL`
/// of `-1` over the last tenth of the nodes.
fn curvature_check(traj: &Trajectory, problem: &FlowProblem) -> Result<Check> {
    let name = "curvature_asymptote";
    let n = traj.n;
    let fam = &problem.family;
    let m = problem.len();
    let from = m - m / 10;
    let mut worst = (0.0_f64, -1.0, 0);
    let mut record = |dev: f64, t: f64, node: usize| {
        if dev > worst.0 {
            worst = (dev, t, node);
        }
    };
    let sum = fam.omega0.combine(1.0, &fam.base, 1.0);
    let c = curvature_components(&sum, n)?;
    for (i, h) in c.h_mix()?.iter().enumerate().skip(from) {
        record((h + 1.0).abs(), -1.0, i);
    }
    for s in traj.snapshots.iter().filter(|s| s.t > 0.0) {
        let (_, beta) = traj.mode.coefficients(s.t, traj.eps, fam.lambda);
        let pot = fam.family_at(s.t, traj.eps)?.plus_sampled(&s.u);
        let c = curvature_components(&pot, n)?;
        for (i, h) in c.h_mix()?.iter().enumerate().skip(from) {
            record((beta * h + 1.0).abs(), s.t, i);
        }
    }
    let (dev, t, node) = worst;
    let when = if t < 0.0 { "w0 + w_bar".to_string() } else { format!("t = {t}") };
    Ok(Check::new(
        name,
        if dev <= CURVATURE_TOL { CheckStatus::Pass } else { CheckStatus::Fail },
        CURVATURE_TOL - dev,
        0.0,
        format!("largest |beta H_mix + 1| = {dev:.3e} at node {node}, {when}"),
    ))
}

/// Sup-relative deviation of two eigenvalue fields, as a pass/fail check.
fn eigen_agreement(name: &str, a: &MetricEigenvalues, b: &MetricEigenvalues, tol: f64, what: &str) -> Check {
    let dev = a.max_relative_deviation(b);
    Check::new(
        name,
        if dev <= tol { CheckStatus::Pass } else { CheckStatus::Fail },
        tol - dev,
        0.0,
        format!("{what}: sup-relative deviation {dev:.3e} (tolerance {tol:.1e})"),
    )
}

/// Rescaled unnormalized metrics against a directly-run normalized flow.
pub fn rescaling_consistency(rescaled: &[RescaledMetric], direct: &[(f64, MetricEigenvalues)], tol: f64) -> Check {
    let name = "rescaling_consistency";
    let mut worst = (0.0_f64, 0.0);
    for r in rescaled {
        if let Some((_, e)) = direct.iter().find(|(t, _)| (t - r.t).abs() < 1e-12) {
            let dev = r.eigenvalues.max_relative_deviation(e);
            if dev >= worst.0 {
                worst = (dev, r.t);
            }
        }
    }
    if rescaled.is_empty() {
        return Check::not_applicable(name, "no matched times");
    }
    Check::new(
        name,
        if worst.0 <= tol { CheckStatus::Pass } else { CheckStatus::Fail },
        tol - worst.0,
        0.0,
        format!("largest sup-relative deviation {:.3e} at t = {} over {} times", worst.0, worst.1, rescaled.len()),
    )
}

/// `δ_k` strictly decreasing along the ladder.
pub fn epsilon_cauchy(deltas: &[f64]) -> Check {
    let name = "epsilon_cauchy";
    if deltas.len() < 2 {
        return Check::not_applicable(name, "ladder shorter than three rungs");
    }
    let margin = deltas.windows(2).map(|w| w[0] - w[1]).fold(f64::INFINITY, f64::min);
    let detail = format!("deltas [{}]", deltas.iter().map(|d| format!("{d:.4e}")).collect::<Vec<_>>().join(", "));
    Check::new(name, if margin > 0.0 { CheckStatus::Pass } else { CheckStatus::Fail }, margin, 0.0, detail)
}

/// Flow metric at the horizon against the oracle limit metric.
pub fn ke_convergence(flow: &MetricEigenvalues, limit: &MetricEigenvalues, tol: f64) -> Check {
    eigen_agreement("ke_convergence", flow, limit, tol, "flow vs limit metric")
}

/// Potential-level variant for general modes: `sup |ũ(T) - ũ_∞|`.
pub fn ke_convergence_potential(u: &[f64], u_inf: &[f64], tol: f64) -> Check {
    let (dev, node) = u.iter().zip(u_inf).enumerate().map(|(i, (a, b))| ((a - b).abs(), i)).fold((0.0, 0), |acc, x| {
        if x.0 > acc.0 {
            x
        } else {
            acc
        }
    });
    Check::new(
        "ke_convergence",
        if dev <= tol { CheckStatus::Pass } else { CheckStatus::Fail },
        tol - dev,
        0.0,
        format!("sup |u(T) - u_inf| = {dev:.3e} at node {node}; center u(T) = {:.6}, u_inf = {:.6}", u[0], u_inf[0]),
    )
}

pub fn defining_function_independence(a: &MetricEigenvalues, b: &MetricEigenvalues, tol: f64) -> Check {
    eigen_agreement("defining_function_independence", a, b, tol, "limit metrics of the two defining functions")
}
