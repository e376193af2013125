//! Scenario orchestration: ε-ladder runs, oracle, checks and file emission.
//!
//! Exit codes: 0 all enabled checks pass, 1 invalid scenario, 2 a check failed,
//! 3 solver failure, 4 I/O failure.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::background::{DefiningFunction, FlowMode};
use crate::error::{Error, Result};
use crate::estimates::{
    check_apriori_normalized, check_apriori_unnormalized, check_geometry, defining_function_independence,
    epsilon_cauchy, ke_convergence, ke_convergence_potential, rescaling_consistency, Check, CheckStatus,
    EstimateReport, T0,
};
use crate::flow::{
    rescale_to_normalized, trajectory_distance, unnormalized_time, FlowProblem, SolverConfig, Trajectory,
};
use crate::grid::RadialGrid;
use crate::io::{list_sidecars, read_trajectory, run_stem, write_trajectory};
use crate::oracle::{ke_residual, limit_metric, solve_limit, KeSolution};
use crate::scenario::{parse_scenario, ScenarioConfig};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_CHECK_FAILED: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_IO: i32 = 4;

/// Relative tolerance of the rescaling identity.
pub const RESCALE_TOL: f64 = 1e-4;
/// Tolerance of flow-to-oracle agreement at the horizon.
pub const KE_TOL: f64 = 1e-3;
/// Sup-relative tolerance between limit metrics of two defining functions.
pub const DF_TOL: f64 = 1e-3;
/// Interior deviation allowed by the boundary audit.
pub const AUDIT_TOL: f64 = 1e-6;
/// Name of the canonical scenario copy written next to the results.
pub const SCENARIO_FILE: &str = "scenario.kfs";

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io(_) | Error::Csv(_) | Error::Json(_) | Error::Format(_) => EXIT_IO,
        Error::Scenario(_) | Error::UnknownPreset(_) => EXIT_INVALID,
        _ => EXIT_SOLVER,
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub quiet: bool,
    pub grid_refine: u32,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: EstimateReport,
    pub out_dir: PathBuf,
    pub trajectories: Vec<Trajectory>,
    pub limit: Option<KeSolution>,
    pub audit: Option<f64>,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.report.all_pass() {
            EXIT_PASS
        } else {
            EXIT_CHECK_FAILED
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct RefinementLevel {
    m: usize,
    exit_code: i32,
    /// `sup |u(T)|` difference to the previous level on its nodes.
    difference_to_coarser: Option<f64>,
}

fn log(opts: &RunOptions, msg: impl AsRef<str>) {
    if !opts.quiet {
        eprintln!("{}", msg.as_ref());
    }
}

fn run_one(
    problem: &FlowProblem,
    eps: f64,
    cfg: &SolverConfig,
    extra: &[f64],
    extrapolate: bool,
) -> Result<Trajectory> {
    if extrapolate {
        problem.run_extrapolated(eps, cfg, extra)
    } else {
        problem.run(eps, cfg, extra)
    }
}

/// Runs the whole ladder; trajectories are ordered like the ladder.
pub fn run_ladder(config: &ScenarioConfig, problem: &FlowProblem) -> Result<(Vec<Trajectory>, Vec<f64>)> {
    let fingerprint = config.fingerprint();
    let mut extra = config.output_times.clone();
    extra.extend(&config.rescale_times);
    let mut trajs = config
        .eps_ladder
        .par_iter()
        .map(|&eps| run_one(problem, eps, &config.solver, &extra, config.extrapolate))
        .collect::<Result<Vec<_>>>()?;
    for t in &mut trajs {
        t.fingerprint = fingerprint.clone();
    }
    let deltas = trajs.windows(2).map(|w| trajectory_distance(&w[0], &w[1])).collect();
    Ok((trajs, deltas))
}

/// The rescaling check at the finest `ε`: unnormalized and normalized flows run with
/// `cfg.halved()` and step-doubling extrapolation, compared at the normalized times.
pub fn rescaling_check(config: &ScenarioConfig, problem: &FlowProblem, eps: f64) -> Result<Check> {
    let name = "rescaling_consistency";
    let lambda = problem.family.lambda;
    let (normalized, unnormalized) = if config.mode.is_normalized() {
        (problem.clone(), problem.with_mode(config.mode.counterpart())?)
    } else {
        (problem.with_mode(config.mode.counterpart())?, problem.clone())
    };
    let horizon = config.solver.horizon;
    let times: Vec<f64> = config
        .rescale_times
        .iter()
        .copied()
        .filter(|&t| {
            if config.mode.is_normalized() {
                t <= horizon
            } else {
                unnormalized_time(t, lambda) <= horizon * (1.0 + 1e-12)
            }
        })
        .collect();
    let Some(&t_last) = times.iter().max_by(|a, b| a.total_cmp(b)) else {
        return Ok(Check::not_applicable(name, "no rescale time inside the horizon"));
    };
    if t_last <= 0.0 {
        return Ok(Check::not_applicable(name, "no positive rescale time inside the horizon"));
    }
    let s_times: Vec<f64> = times.iter().map(|&t| unnormalized_time(t, lambda)).collect();
    let s_last = unnormalized_time(t_last, lambda);
    let base = config.solver.halved();
    let cfg_n = SolverConfig { horizon: t_last, snapshots_per_unit: 1.0 / t_last, ..base };
    let cfg_u = SolverConfig { horizon: s_last, snapshots_per_unit: 1.0 / s_last, ..base };
    let (direct, unnorm) = rayon::join(
        || normalized.run_extrapolated(eps, &cfg_n, &times),
        || unnormalized.run_extrapolated(eps, &cfg_u, &s_times),
    );
    let (direct, unnorm) = (direct?, unnorm?);
    let rescaled = rescale_to_normalized(&unnorm, &unnormalized, &times)?;
    let direct: Vec<_> = times
        .iter()
        .map(|&t| {
            let s = direct.nearest(t);
            (t, normalized.metric_eigenvalues(&s.u, s.t, eps))
        })
        .collect();
    Ok(rescaling_consistency(&rescaled, &direct, RESCALE_TOL))
}

/// Limit solution of the normalized counterpart of `problem`.
pub fn oracle_for(problem: &FlowProblem, tol: f64) -> Result<(FlowProblem, KeSolution)> {
    let normalized = if problem.mode().is_normalized() {
        problem.clone()
    } else {
        problem.with_mode(problem.mode().counterpart())?
    };
    let sol = solve_limit(&normalized.family, &normalized.f, tol)?;
    Ok((normalized, sol))
}

fn ke_check(traj: &Trajectory, normalized: &FlowProblem, sol: &KeSolution) -> Result<Check> {
    let last = traj.snapshots.last().expect("non-empty");
    if !traj.mode.is_normalized() {
        return Ok(Check::not_applicable("ke_convergence", "unnormalized flows do not converge"));
    }
    if last.t < T0 {
        return Ok(Check::not_applicable("ke_convergence", "horizon shorter than the uniform window"));
    }
    if traj.mode.is_general() {
        Ok(ke_convergence_potential(&last.u, &sol.u_inf, KE_TOL))
    } else {
        let flow = normalized.metric_eigenvalues(&last.u, last.t, traj.eps);
        Ok(ke_convergence(&flow, &limit_metric(&normalized.family, sol)?, KE_TOL))
    }
}

/// Limit metrics of the normalized domain flow for the scenario's two defining functions.
fn df_independence(config: &ScenarioConfig, grid: &std::sync::Arc<RadialGrid>) -> Result<Check> {
    let name = "defining_function_independence";
    let Some(alt) = config.alt_domain else {
        return Ok(Check::not_applicable(name, "no alt_domain in the scenario"));
    };
    if config.mode.is_general() {
        return Ok(Check::not_applicable(name, "general background does not depend on the domain"));
    }
    let mode = FlowMode::Normalized;
    let (a, b) = rayon::join(
        || -> Result<_> {
            let (p, _) = config.problem_on(grid.clone(), config.domain, mode)?;
            let sol = solve_limit(&p.family, &p.f, config.oracle_tol)?;
            limit_metric(&p.family, &sol)
        },
        || -> Result<_> {
            let (p, _) = config.problem_on(grid.clone(), alt, mode)?;
            let sol = solve_limit(&p.family, &p.f, config.oracle_tol)?;
            limit_metric(&p.family, &sol)
        },
    );
    Ok(defining_function_independence(&a?, &b?, DF_TOL))
}

/// Sup over shared nodes of `|u(T)|` differences between the scenario and a copy whose
/// chart extends two units further at the same spacing.
pub fn boundary_audit(config: &ScenarioConfig, traj: &Trajectory) -> Result<f64> {
    let grid = config.grid()?;
    let extra = (2.0 / grid.step()).round() as usize;
    let wide = config.grid_with(config.m + extra, config.y_max + extra as f64 * grid.step())?;
    let (problem, _) = config.problem_on(wide, config.domain, config.mode)?;
    let far = run_one(&problem, traj.eps, &config.solver, &config.output_times, config.extrapolate)?;
    let (a, b) = (traj.snapshots.last().expect("non-empty"), far.snapshots.last().expect("non-empty"));
    // Compare away from the old far end, where the two boundary conditions differ.
    let keep = grid.y().partition_point(|y| *y <= config.y_max - 2.0);
    Ok(a.u[..keep].iter().zip(&b.u[..keep]).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
}

fn checks_from_trajectories(
    config: &ScenarioConfig,
    problem: &FlowProblem,
    df: &DefiningFunction,
    trajs: &[Trajectory],
    deltas: &[f64],
    oracle: Option<(&FlowProblem, &KeSolution)>,
    constants: &mut BTreeMap<String, f64>,
) -> Result<Vec<Check>> {
    let finest = trajs.last().expect("ladder non-empty");
    let mut checks = Vec::new();
    checks.extend(check_apriori_unnormalized(finest, problem, constants)?);
    checks.extend(check_apriori_normalized(finest, problem, constants)?);
    let df = (!config.mode.is_general()).then_some(df);
    checks.extend(check_geometry(finest, problem, df, constants)?);
    checks.push(if finest.snapshots.len() < 2 {
        Check::not_applicable("epsilon_cauchy", "no snapshot with t > 0")
    } else {
        epsilon_cauchy(deltas)
    });
    for (k, d) in deltas.iter().enumerate() {
        constants.insert(format!("delta_{k}"), *d);
    }
    if let Some((normalized, sol)) = oracle {
        checks.push(ke_check(finest, normalized, sol)?);
        constants.insert("oracle_residual".into(), sol.residual_norm);
        if finest.mode.is_normalized() {
            let last = finest.snapshots.last().expect("non-empty");
            let potential = problem.family.family_at(last.t, finest.eps)?.plus_sampled(&last.u);
            if let Ok(r) = ke_residual(&potential, problem.family.lambda, problem.n()) {
                constants.insert("ke_residual_final".into(), r);
            }
        }
    }
    Ok(checks)
}

fn disable(checks: Vec<Check>, config: &ScenarioConfig) -> Vec<Check> {
    checks
        .into_iter()
        .map(|c| if config.is_enabled(&c.name) { c } else { Check::not_applicable(&c.name, "disabled") })
        .collect()
}

/// Runs one resolution of the scenario into `out_dir`.
pub fn run_scenario_in(config: &ScenarioConfig, out_dir: &Path, opts: &RunOptions) -> Result<RunOutcome> {
    let grid = config.grid()?;
    let (problem, df) = config.problem_on(grid.clone(), config.domain, config.mode)?;
    log(opts, format!("{}: {} on m = {}, ladder {:?}", config.name, config.mode, config.m, config.eps_ladder));
    let (trajs, deltas) = run_ladder(config, &problem)?;
    let finest = trajs.last().expect("ladder non-empty");
    log(opts, format!("ladder done: {} steps at the finest eps", finest.stats.steps));

    let oracle = if config.mode.is_normalized() { Some(oracle_for(&problem, config.oracle_tol)?) } else { None };
    let mut constants = BTreeMap::new();
    let mut checks = checks_from_trajectories(
        config,
        &problem,
        &df,
        &trajs,
        &deltas,
        oracle.as_ref().map(|(p, s)| (p, s)),
        &mut constants,
    )?;
    if config.is_enabled("rescaling_consistency") {
        checks.push(rescaling_check(config, &problem, finest.eps)?);
    }
    if config.is_enabled("defining_function_independence") {
        checks.push(df_independence(config, &grid)?);
    }
    let audit = if config.audit {
        let dev = boundary_audit(config, finest)?;
        constants.insert("boundary_audit_deviation".into(), dev);
        if dev > AUDIT_TOL {
            log(opts, format!("audit flag: interior moved by {dev:.3e} when y_max grew by 2"));
        }
        Some(dev)
    } else {
        None
    };
    let report = EstimateReport::assemble(&config.fingerprint(), disable(checks, config), constants);

    std::fs::create_dir_all(out_dir)?;
    // The copy lives in its own output directory.
    let mut copy = config.clone();
    copy.out_dir = PathBuf::from(".");
    std::fs::write(out_dir.join(SCENARIO_FILE), copy.to_canonical())?;
    let limit = oracle.map(|(_, s)| s);
    for (i, t) in trajs.iter().enumerate() {
        let attach = (i + 1 == trajs.len()).then_some(limit.as_ref()).flatten();
        write_trajectory(out_dir, &run_stem(t.mode, t.eps), t, &grid, attach)?;
    }
    if let Some(l) = &limit {
        std::fs::write(out_dir.join("oracle.json"), serde_json::to_string_pretty(l)?)?;
    }
    std::fs::write(out_dir.join("report.json"), report.to_json()?)?;
    std::fs::write(out_dir.join("report.txt"), report.to_text())?;
    Ok(RunOutcome { report, out_dir: out_dir.to_path_buf(), trajectories: trajs, limit, audit })
}

/// Runs the scenario, and with `grid_refine = k` also at `2m - 1`, ... nodes into
/// `m<nodes>` subdirectories. Returns the outcome of the finest level.
pub fn run_scenario(config: &ScenarioConfig, opts: &RunOptions) -> Result<RunOutcome> {
    if opts.grid_refine == 0 {
        return run_scenario_in(config, &config.out_dir, opts);
    }
    let mut levels = Vec::new();
    let mut previous: Option<Vec<f64>> = None;
    let mut worst = EXIT_PASS;
    let mut last = None;
    for k in 0..=opts.grid_refine {
        let c = config.refined(k);
        let outcome = run_scenario_in(&c, &config.out_dir.join(format!("m{}", c.m)), opts)?;
        let u_final = outcome.trajectories.last().and_then(|t| t.snapshots.last()).map(|s| s.u.clone());
        let diff = match (&previous, &u_final) {
            (Some(p), Some(u)) => Some(p.iter().enumerate().map(|(i, v)| (v - u[2 * i]).abs()).fold(0.0, f64::max)),
            _ => None,
        };
        worst = worst.max(outcome.exit_code());
        levels.push(RefinementLevel { m: c.m, exit_code: outcome.exit_code(), difference_to_coarser: diff });
        previous = u_final;
        last = Some(outcome);
    }
    std::fs::write(config.out_dir.join("refinement.json"), serde_json::to_string_pretty(&levels)?)?;
    let mut outcome = last.expect("at least one level");
    if worst != EXIT_PASS && outcome.report.all_pass() {
        outcome.report.checks.push(Check {
            name: "grid_refinement".into(),
            status: CheckStatus::Fail,
            margin: f64::NAN,
            slack: 0.0,
            detail: "a coarser level failed".into(),
        });
    }
    Ok(outcome)
}

/// Re-evaluates the trajectory-based checks on a results directory. Checks that need
/// fresh runs (rescaling, defining-function independence) are taken from the stored report.
pub fn check_directory(dir: &Path) -> Result<EstimateReport> {
    let text = std::fs::read_to_string(dir.join(SCENARIO_FILE))?;
    let config = parse_scenario(&text)?;
    let fingerprint = config.fingerprint();
    let grid = config.grid()?;
    let (problem, df) = config.problem_on(grid, config.domain, config.mode)?;
    let mut trajs = Vec::new();
    let mut limit = None;
    for path in list_sidecars(dir)? {
        let (t, l) = read_trajectory(&path)?;
        if t.fingerprint != fingerprint {
            return Err(Error::Format(format!("{}: fingerprint does not match {SCENARIO_FILE}", path.display())));
        }
        if l.is_some() {
            limit = l;
        }
        trajs.push(t);
    }
    if trajs.is_empty() {
        return Err(Error::Format(format!("{}: no trajectories", dir.display())));
    }
    trajs.sort_by(|a, b| b.eps.total_cmp(&a.eps));
    let deltas: Vec<f64> = trajs.windows(2).map(|w| trajectory_distance(&w[0], &w[1])).collect();
    let oracle = match (limit, config.mode.is_normalized()) {
        (Some(u_inf), true) => {
            Some(KeSolution { u_inf, residual_norm: f64::NAN, newton_iterations: 0, residual_history: Vec::new() })
        }
        _ => None,
    };
    let mut constants = BTreeMap::new();
    let mut checks = checks_from_trajectories(
        &config,
        &problem,
        &df,
        &trajs,
        &deltas,
        oracle.as_ref().map(|s| (&problem, s)),
        &mut constants,
    )?;
    constants.remove("oracle_residual");
    if let Ok(stored) = std::fs::read_to_string(dir.join("report.json")) {
        let stored: EstimateReport = serde_json::from_str(&stored)?;
        for name in ["rescaling_consistency", "defining_function_independence"] {
            if let Some(c) = stored.get(name) {
                checks.push(c.clone());
            }
        }
    }
    Ok(EstimateReport::assemble(&fingerprint, disable(checks, &config), constants))
}

/// Solves the limit equation of a scenario and writes `oracle.csv` / `oracle.json`.
pub fn run_oracle(config: &ScenarioConfig, out_dir: &Path) -> Result<KeSolution> {
    let grid = config.grid()?;
    let (problem, _) = config.problem_on(grid.clone(), config.domain, config.mode)?;
    let (_, sol) = oracle_for(&problem, config.oracle_tol)?;
    std::fs::create_dir_all(out_dir)?;
    let mut w = csv::Writer::from_path(out_dir.join("oracle.csv"))?;
    w.write_record(["y", "rho", "u@t=inf"])?;
    for i in 0..grid.len() {
        w.write_record([format!("{:e}", grid.y()[i]), format!("{:e}", grid.rho()[i]), format!("{:e}", sol.u_inf[i])])?;
    }
    w.flush()?;
    std::fs::write(out_dir.join("oracle.json"), serde_json::to_string_pretty(&sol)?)?;
    Ok(sol)
}
