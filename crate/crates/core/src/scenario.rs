//! Scenario files: flat `key = value` lines grouped under `[section]` headers.
//!
//! ```text
//! name = ball
//! mode = normalized
//! n = 2
//!
//! [grid]
//! m = 801
//! y_max = 12
//!
//! [presets]
//! domain = ball(1)
//! initial = euclidean(0.5)
//!
//! [solver]
//! horizon = 5
//!
//! [continuation]
//! eps_ladder = 0.1, 0.05, 0.025, 0.0125
//! ```
//!
//! `#` starts a comment. See [`SCHEMA`] for every key, its default and range.

use std::path::PathBuf;
use std::sync::Arc;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::background::{
    cheng_yau_f, metric_preset, negative_ricci_bounds, BackgroundFamily, DefiningFunction, FlowMode, Preset,
};
use crate::error::{Error, Result};
use crate::estimates::CHECK_MANIFEST;
use crate::flow::{validate_ladder, FlowProblem, SolverConfig};
use crate::grid::RadialGrid;

/// `(section, key, default, description)`; an empty default marks a required key.
pub const SCHEMA: &[(&str, &str, &str, &str)] = &[
    ("", "name", "scenario", "free-form label"),
    ("", "mode", "", "unnormalized | normalized | general-unnormalized | general-normalized"),
    ("", "n", "", "complex dimension, 1..=4"),
    ("grid", "m", "801", "number of nodes, 51..=20001"),
    ("grid", "y_max", "12", "compactified chart extent, 4..=40"),
    ("presets", "domain", "", "defining function: ball(R) | perturbed-ball(a,R)"),
    ("presets", "initial", "", "initial metric potential preset"),
    ("presets", "omega_m", "none", "background metric of the general modes"),
    ("presets", "alt_domain", "none", "second defining function of the same ball"),
    ("solver", "dt_max", "0.01", "largest time step"),
    ("solver", "kappa", "0.1", "step ramp: dt = min(dt_max, kappa (t + eps))"),
    ("solver", "newton_tol", "1e-10", "sup-norm Newton tolerance, >= 1e-13"),
    ("solver", "newton_max_iter", "30", "Newton iterations per step"),
    ("solver", "horizon", "1", "final time T"),
    ("solver", "snapshots_per_unit", "50", "snapshot density"),
    ("solver", "extrapolate", "false", "combine runs at dt and dt/2 (2 fine - coarse)"),
    ("continuation", "eps_ladder", "0.1, 0.05, 0.025, 0.0125", "strictly decreasing, positive"),
    ("output", "times", "", "extra snapshot times"),
    ("output", "dir", "out", "output directory"),
    ("checks", "enabled", "all", "`all` or a list of check names"),
    ("checks", "rescale_times", "0.2, 0.5, 1, 2", "normalized times of the rescaling check"),
    ("checks", "oracle_tol", "1e-10", "elliptic Newton tolerance"),
    ("checks", "audit", "false", "repeat with y_max + 2 and compare the interior"),
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub mode: FlowMode,
    pub n: usize,
    pub m: usize,
    pub y_max: f64,
    pub domain: Preset,
    pub initial: Preset,
    pub omega_m: Option<Preset>,
    pub alt_domain: Option<Preset>,
    pub solver: SolverConfig,
    pub extrapolate: bool,
    pub eps_ladder: Vec<f64>,
    pub output_times: Vec<f64>,
    pub out_dir: PathBuf,
    pub enabled: Vec<String>,
    pub rescale_times: Vec<f64>,
    pub oracle_tol: f64,
    pub audit: bool,
}

fn parse_list(v: &str) -> std::result::Result<Vec<f64>, String> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|x| x.trim().parse::<f64>().map_err(|_| format!("`{}` is not a number", x.trim()))).collect()
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ")
}

fn fmt_opt(p: &Option<Preset>) -> String {
    p.map_or_else(|| "none".to_string(), |p| p.to_string())
}

/// Parses scenario text, collecting every violation.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig> {
    let mut errs: Vec<String> = Vec::new();
    let mut values: Vec<(&str, &str, String)> = Vec::new();
    let mut section = "";
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') && line.ends_with(']') {
            let name = line[1..line.len() - 1].trim();
            match SCHEMA.iter().find(|(s, ..)| *s == name && !s.is_empty()) {
                Some((s, ..)) => section = s,
                None => {
                    errs.push(format!("line {}: unknown section [{name}]", lineno + 1));
                    section = "?";
                }
            }
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            errs.push(format!("line {}: expected `key = value`", lineno + 1));
            continue;
        };
        let key = key.trim();
        if section == "?" {
            continue;
        }
        match SCHEMA.iter().find(|(s, k, ..)| *s == section && *k == key) {
            Some((s, k, ..)) => {
                if values.iter().any(|(vs, vk, _)| vs == s && vk == k) {
                    errs.push(format!("line {}: duplicate key `{key}`", lineno + 1));
                }
                values.push((s, k, value.trim().to_string()));
            }
            None => {
                let place = if section.is_empty() { String::new() } else { format!(" in [{section}]") };
                errs.push(format!("line {}: unknown key `{key}`{place}", lineno + 1));
            }
        }
    }

    let get = |section: &str, key: &str| -> Option<String> {
        values.iter().rev().find(|(s, k, _)| *s == section && *k == key).map(|(.., v)| v.clone()).or_else(|| {
            SCHEMA
                .iter()
                .find(|(s, k, d, _)| *s == section && *k == key && !d.is_empty())
                .map(|(_, _, d, _)| d.to_string())
        })
    };
    let required = |errs: &mut Vec<String>, section: &str, key: &str| -> Option<String> {
        let v = get(section, key);
        if v.is_none() {
            errs.push(format!("missing required key `{key}`"));
        }
        v
    };
    fn num<T: std::str::FromStr>(errs: &mut Vec<String>, key: &str, v: Option<String>) -> Option<T> {
        let v = v?;
        match v.parse::<T>() {
            Ok(x) => Some(x),
            Err(_) => {
                errs.push(format!("`{key}`: cannot parse `{v}`"));
                None
            }
        }
    }
    let preset = |errs: &mut Vec<String>, key: &str, v: Option<String>| -> Option<Option<Preset>> {
        let v = v?;
        if v == "none" {
            return Some(None);
        }
        match v.parse::<Preset>() {
            Ok(p) => Some(Some(p)),
            Err(e) => {
                errs.push(format!("`{key}`: {e}"));
                None
            }
        }
    };
    let list = |errs: &mut Vec<String>, key: &str, v: Option<String>| -> Option<Vec<f64>> {
        match parse_list(&v.unwrap_or_default()) {
            Ok(l) => Some(l),
            Err(e) => {
                errs.push(format!("`{key}`: {e}"));
                None
            }
        }
    };

    let name = get("", "name").unwrap_or_default();
    let mode = required(&mut errs, "", "mode").and_then(|v| match v.parse::<FlowMode>() {
        Ok(m) => Some(m),
        Err(e) => {
            errs.push(format!("`mode`: {e}"));
            None
        }
    });
    let n: Option<usize> = {
        let v = required(&mut errs, "", "n");
        num(&mut errs, "n", v)
    };
    if let Some(n) = n {
        if !(1..=4).contains(&n) {
            errs.push(format!("dimension out of range [1,4]: n = {n}"));
        }
    }
    let m: Option<usize> = num(&mut errs, "m", get("grid", "m"));
    if let Some(m) = m {
        if !(51..=20001).contains(&m) {
            errs.push(format!("node count out of range [51,20001]: m = {m}"));
        }
    }
    let y_max: Option<f64> = num(&mut errs, "y_max", get("grid", "y_max"));
    if let Some(y) = y_max {
        if !(4.0..=40.0).contains(&y) {
            errs.push(format!("y_max out of range [4,40]: y_max = {y}"));
        }
    }
    let domain = {
        let v = required(&mut errs, "presets", "domain");
        preset(&mut errs, "domain", v).flatten()
    };
    if let Some(d) = domain {
        if !d.is_defining_function() {
            errs.push(format!("`domain`: {d} is not a defining-function preset"));
        }
    }
    let initial = {
        let v = required(&mut errs, "presets", "initial");
        preset(&mut errs, "initial", v).flatten()
    };
    if let Some(p) = initial {
        if p.is_defining_function() {
            errs.push(format!("`initial`: {p} is not a metric preset"));
        }
    }
    let omega_m = preset(&mut errs, "omega_m", get("presets", "omega_m")).flatten();
    if let Some(p) = omega_m {
        if p.is_defining_function() {
            errs.push(format!("`omega_m`: {p} is not a metric preset"));
        }
    }
    if let Some(mode) = mode {
        if mode.is_general() && omega_m.is_none() {
            errs.push(format!("mode {mode} requires `omega_m`"));
        }
    }
    let alt_domain = preset(&mut errs, "alt_domain", get("presets", "alt_domain")).flatten();
    if let (Some(a), Some(d)) = (alt_domain, domain) {
        if !a.is_defining_function() {
            errs.push(format!("`alt_domain`: {a} is not a defining-function preset"));
        } else if a.r2() != d.r2() {
            errs.push(format!("`alt_domain`: {a} does not describe the same ball as {d}"));
        }
    }

    let solver = SolverConfig {
        dt_max: num(&mut errs, "dt_max", get("solver", "dt_max")).unwrap_or(f64::NAN),
        kappa: num(&mut errs, "kappa", get("solver", "kappa")).unwrap_or(f64::NAN),
        newton_tol: num(&mut errs, "newton_tol", get("solver", "newton_tol")).unwrap_or(f64::NAN),
        newton_max_iter: num(&mut errs, "newton_max_iter", get("solver", "newton_max_iter")).unwrap_or(0),
        horizon: num(&mut errs, "horizon", get("solver", "horizon")).unwrap_or(f64::NAN),
        snapshots_per_unit: num(&mut errs, "snapshots_per_unit", get("solver", "snapshots_per_unit"))
            .unwrap_or(f64::NAN),
    };
    if let Err(Error::Scenario(list)) = solver.validate() {
        errs.extend(list);
    }
    let extrapolate: Option<bool> = num(&mut errs, "extrapolate", get("solver", "extrapolate"));
    let eps_ladder = list(&mut errs, "eps_ladder", get("continuation", "eps_ladder"));
    if let Some(l) = &eps_ladder {
        if let Err(e) = validate_ladder(l) {
            errs.push(format!("`eps_ladder`: {e}"));
        }
    }
    let output_times = list(&mut errs, "times", get("output", "times"));
    if let Some(t) = &output_times {
        if t.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
            errs.push("`times`: output times must be non-negative".into());
        }
    }
    let out_dir = PathBuf::from(get("output", "dir").unwrap_or_default());
    let enabled_raw = get("checks", "enabled").unwrap_or_default();
    let enabled: Vec<String> = if enabled_raw.trim() == "all" {
        CHECK_MANIFEST.iter().map(|s| s.to_string()).collect()
    } else {
        let names: Vec<String> =
            enabled_raw.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
        for n in &names {
            if !CHECK_MANIFEST.contains(&n.as_str()) {
                errs.push(format!("`enabled`: unknown check `{n}`"));
            }
        }
        names
    };
    let rescale_times = list(&mut errs, "rescale_times", get("checks", "rescale_times"));
    if let Some(t) = &rescale_times {
        if t.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
            errs.push("`rescale_times`: times must be non-negative".into());
        }
    }
    let oracle_tol: Option<f64> = num(&mut errs, "oracle_tol", get("checks", "oracle_tol"));
    if let Some(t) = oracle_tol {
        if !(t >= 1e-12) {
            errs.push(format!("`oracle_tol` must be >= 1e-12, got {t}"));
        }
    }
    let audit: Option<bool> = num(&mut errs, "audit", get("checks", "audit"));

    if !errs.is_empty() {
        return Err(Error::Scenario(errs));
    }
    Ok(ScenarioConfig {
        name,
        mode: mode.expect("checked"),
        n: n.expect("checked"),
        m: m.expect("checked"),
        y_max: y_max.expect("checked"),
        domain: domain.expect("checked"),
        initial: initial.expect("checked"),
        omega_m,
        alt_domain,
        solver,
        extrapolate: extrapolate.expect("checked"),
        eps_ladder: eps_ladder.expect("checked"),
        output_times: output_times.expect("checked"),
        out_dir,
        enabled,
        rescale_times: rescale_times.expect("checked"),
        oracle_tol: oracle_tol.expect("checked"),
        audit: audit.expect("checked"),
    })
}

impl ScenarioConfig {
    /// Canonical text: every key in schema order, floats in shortest round-trip form.
    pub fn to_canonical(&self) -> String {
        let s = &self.solver;
        let enabled = if self.enabled.len() == CHECK_MANIFEST.len()
            && CHECK_MANIFEST.iter().zip(&self.enabled).all(|(a, b)| *a == b)
        {
            "all".to_string()
        } else {
            self.enabled.join(", ")
        };
        format!(
            "name = {}\nmode = {}\nn = {}\n\n[grid]\nm = {}\ny_max = {:?}\n\n[presets]\ndomain = {}\n\
             initial = {}\nomega_m = {}\nalt_domain = {}\n\n[solver]\ndt_max = {:?}\nkappa = {:?}\n\
             newton_tol = {:?}\nnewton_max_iter = {}\nhorizon = {:?}\nsnapshots_per_unit = {:?}\n\
             extrapolate = {}\n\n[continuation]\neps_ladder = {}\n\n[output]\ntimes = {}\ndir = {}\n\n\
             [checks]\nenabled = {}\nrescale_times = {}\noracle_tol = {:?}\naudit = {}\n",
            self.name,
            self.mode,
            self.n,
            self.m,
            self.y_max,
            self.domain,
            self.initial,
            fmt_opt(&self.omega_m),
            fmt_opt(&self.alt_domain),
            s.dt_max,
            s.kappa,
            s.newton_tol,
            s.newton_max_iter,
            s.horizon,
            s.snapshots_per_unit,
            self.extrapolate,
            fmt_list(&self.eps_ladder),
            fmt_list(&self.output_times),
            self.out_dir.display(),
            enabled,
            fmt_list(&self.rescale_times),
            self.oracle_tol,
            self.audit,
        )
    }

    /// SHA-256 of the canonical text without the output directory.
    pub fn fingerprint(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        let digest = Sha256::digest(c.to_canonical().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn grid(&self) -> Result<Arc<RadialGrid>> {
        self.grid_with(self.m, self.y_max)
    }

    pub fn grid_with(&self, m: usize, y_max: f64) -> Result<Arc<RadialGrid>> {
        let r2 = self.domain.r2().expect("domain validated");
        Ok(Arc::new(RadialGrid::new(self.n, r2, y_max, m)?))
    }

    /// The flow problem of `mode` on `grid`, with its defining function.
    pub fn problem_on(
        &self,
        grid: Arc<RadialGrid>,
        domain: Preset,
        mode: FlowMode,
    ) -> Result<(FlowProblem, DefiningFunction)> {
        let df = DefiningFunction::from_preset(domain, grid)?;
        let phi0 = metric_preset(self.initial, &df)?;
        let family = if mode.is_general() {
            let omega_m = metric_preset(self.omega_m.expect("validated for general modes"), &df)?;
            let (c0, _) = negative_ricci_bounds(&omega_m, self.n)?;
            if !(c0 > 0.0) {
                return Err(Error::Scenario(vec![format!(
                    "omega_m must satisfy Ric <= -C0 omega_m with C0 > 0; best C0 = {c0:.3e}"
                )]));
            }
            BackgroundFamily::general(mode, omega_m, phi0)?
        } else {
            BackgroundFamily::domain(mode, &df, phi0)?
        };
        let f = cheng_yau_f(&df, self.n)?;
        Ok((FlowProblem::new(family, f)?, df))
    }

    pub fn problem(&self) -> Result<(FlowProblem, DefiningFunction)> {
        self.problem_on(self.grid()?, self.domain, self.mode)
    }

    /// Same scenario at `2m - 1` nodes, `k` times.
    pub fn refined(&self, k: u32) -> Self {
        let mut c = self.clone();
        for _ in 0..k {
            c.m = 2 * c.m - 1;
        }
        c
    }

    pub fn is_enabled(&self, check: &str) -> bool {
        self.enabled.iter().any(|c| c == check)
    }
}

/// Schema table for `--help`-style listings and documentation.
pub fn schema_text() -> String {
    let mut out = String::new();
    for (section, key, default, desc) in SCHEMA {
        let s = if section.is_empty() { "-" } else { section };
        let d = if default.is_empty() { "(required)" } else { default };
        out.push_str(&format!("{s:<13} {key:<19} {d:<26} {desc}\n"));
    }
    out
}
