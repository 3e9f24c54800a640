use std::io::Write;
use std::path::{Path, PathBuf};

use kcycle::cycle::{check_closure, solve_cycle, sweep_delta, CLOSURE_FACTOR};
use kcycle::stasis::{check_regularity, find_stasis, find_weights};
use kcycle::{CyclePoints, KCycle, RegularityReport, StasisError, SweepConfig, Weights};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::output::{sweep_csv, to_json};
use crate::scenario::{self, Problem, Scenario, SCHEMA_VERSION};
use crate::{CliError, EXIT_FAILURE, EXIT_NON_REGULAR, EXIT_OK};

/// Number of smallest-delta sweep points used for the convergence fit.
pub const TAIL_POINTS: usize = 8;
/// Integrator tightening factor for closure re-verification.
pub const VERIFY_TIGHTENING: f64 = 10.0;
/// Relative slack allowed between a recorded leg time and delta * m_j.
const LEG_TIME_SLACK: f64 = 1e-14;

pub struct Context<'a> {
    pub out_dir: PathBuf,
    pub tol: Option<f64>,
    pub json: bool,
    pub verbose: bool,
    pub stdout: &'a mut dyn Write,
    pub stderr: &'a mut dyn Write,
}

impl Context<'_> {
    fn say(&mut self, text: &str) -> Result<(), CliError> {
        self.stdout
            .write_all(text.as_bytes())
            .map_err(CliError::Stdout)
    }

    fn note(&mut self, text: &str) {
        if self.verbose {
            let _ = writeln!(self.stderr, "{text}");
        }
    }

    fn write_file(&mut self, name: &str, contents: &str) -> Result<PathBuf, CliError> {
        let path = self.out_dir.join(name);
        std::fs::create_dir_all(&self.out_dir)
            .and_then(|_| std::fs::write(&path, contents))
            .map_err(|source| CliError::Output {
                path: path.clone(),
                source,
            })?;
        self.note(&format!("wrote {}", path.display()));
        Ok(path)
    }
}

fn list(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.12e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn to_vec(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct RegularitySummary {
    pub smallest_singular_value: f64,
    pub largest_singular_value: f64,
    pub condition_number: f64,
    pub threshold: f64,
    pub is_regular: bool,
    pub weighted_jacobian: Vec<Vec<f64>>,
}

impl From<&RegularityReport> for RegularitySummary {
    fn from(r: &RegularityReport) -> Self {
        Self {
            smallest_singular_value: r.smallest_singular_value,
            largest_singular_value: r.largest_singular_value,
            condition_number: r.condition_number,
            threshold: r.threshold,
            is_regular: r.is_regular,
            weighted_jacobian: rows(&r.weighted_jacobian),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StasisReport {
    pub scenario: String,
    /// `solve_point` (weights pinned) or `solve_weights` (point pinned).
    pub mode: &'static str,
    /// `regular` or `non_regular`.
    pub status: &'static str,
    pub x0: Vec<f64>,
    pub weights: Vec<f64>,
    pub residual_norm: f64,
    pub tolerance: f64,
    pub iterations: Option<usize>,
    pub solution_set_dim: Option<usize>,
    pub regularity: RegularitySummary,
}

impl StasisReport {
    fn is_regular(&self) -> bool {
        self.regularity.is_regular
    }

    fn text(&self) -> String {
        let r = &self.regularity;
        let mut s = format!(
            "scenario        {}\nmode            {}\nstatus          {}\nx0              {}\nweights         {}\nresidual        {:.6e} (tol {:.1e})\n",
            self.scenario,
            self.mode,
            self.status,
            list(&self.x0),
            list(&self.weights),
            self.residual_norm,
            self.tolerance
        );
        if let Some(d) = self.solution_set_dim {
            s += &format!("weight set dim  {d}\n");
        }
        s += &format!(
            "sigma_min       {:.6e}\nsigma_max       {:.6e}\ncondition       {:.6e}\nthreshold       {:.6e}\n",
            r.smallest_singular_value, r.largest_singular_value, r.condition_number, r.threshold
        );
        s
    }
}

/// Finds the stasis point (or the weights) the scenario asks for, and its
/// regularity. A Newton solve that reaches tolerance on a singular weighted
/// Jacobian is reported as found but non-regular, not as an error.
pub fn solve_stasis(p: &Problem, tol: f64, force_weights: bool) -> Result<StasisReport, CliError> {
    let name = p.name().to_string();
    let report = |mode,
                  x0: &DVector<f64>,
                  w: &Weights,
                  residual_norm,
                  iterations,
                  dim,
                  reg: &RegularityReport| {
        StasisReport {
            scenario: name.clone(),
            mode,
            status: if reg.is_regular {
                "regular"
            } else {
                "non_regular"
            },
            x0: to_vec(x0),
            weights: w.as_slice().to_vec(),
            residual_norm,
            tolerance: tol,
            iterations,
            solution_set_dim: dim,
            regularity: reg.into(),
        }
    };

    if force_weights || p.weights.is_none() {
        let x = p
            .point
            .as_ref()
            .ok_or_else(|| CliError::Scenario("solving for weights needs stasis_point".into()))?;
        let sol = find_weights(&p.fields, x, tol)?;
        let reg = check_regularity(&p.fields, &sol.weights, x)?;
        return Ok(report(
            "solve_weights",
            x,
            &sol.weights,
            sol.residual_norm,
            None,
            Some(sol.solution_set_dim),
            &reg,
        ));
    }

    let w = p.weights.as_ref().expect("checked above");
    match find_stasis(&p.fields, w, &p.guess, tol) {
        Ok(s) => Ok(report(
            "solve_point",
            &s.x0,
            w,
            s.residual_norm,
            Some(s.iterations),
            None,
            &s.regularity,
        )),
        Err(StasisError::SingularJacobian {
            point,
            residual_norm,
            ..
        }) if residual_norm <= tol => {
            let reg = check_regularity(&p.fields, w, &point)?;
            Ok(report(
                "solve_point",
                &point,
                w,
                residual_norm,
                None,
                None,
                &reg,
            ))
        }
        Err(e) => Err(e.into()),
    }
}

fn regular_stasis(p: &Problem, ctx: &mut Context) -> Result<(DVector<f64>, Weights), CliError> {
    let tol = p.scenario.tolerances.stasis_tol;
    let report = solve_stasis(p, tol, false)?;
    ctx.note(&format!(
        "stasis x0 = {} (residual {:.3e}, sigma_min {:.3e})",
        list(&report.x0),
        report.residual_norm,
        report.regularity.smallest_singular_value
    ));
    if !report.is_regular() {
        return Err(CliError::NonRegular(format!(
            "stasis point {} is not regular: sigma_min {:.6e} <= threshold {:.6e}; no cycle branch is guaranteed",
            list(&report.x0),
            report.regularity.smallest_singular_value,
            report.regularity.threshold
        )));
    }
    let w = Weights::new(report.weights).map_err(CliError::from)?;
    Ok((DVector::from_vec(report.x0), w))
}

pub fn stasis(p: &Problem, ctx: &mut Context, force_weights: bool) -> Result<i32, CliError> {
    let tol = ctx.tol.unwrap_or(p.scenario.tolerances.stasis_tol);
    let report = solve_stasis(p, tol, force_weights)?;
    let text = if ctx.json {
        to_json(&report)
    } else {
        report.text()
    };
    ctx.say(&text)?;
    Ok(if report.is_regular() {
        EXIT_OK
    } else {
        EXIT_NON_REGULAR
    })
}

/// A solved cycle together with everything needed to re-check it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CycleRecord {
    pub schema_version: u32,
    pub scenario: Scenario,
    pub x0: Vec<f64>,
    pub weights: Vec<f64>,
    pub cycle_tol: f64,
    pub delta: f64,
    pub leg_times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub leg_mismatches: Vec<f64>,
    pub closure_residual: f64,
    pub newton_iters: usize,
    pub residual_norm: f64,
}

pub fn record_file_name(scenario: &str) -> String {
    format!("{scenario}.cycle.json")
}

pub fn cycle(p: &Problem, delta: f64, ctx: &mut Context) -> Result<i32, CliError> {
    let tol = ctx.tol.unwrap_or(p.scenario.tolerances.cycle_tol);
    let (x0, w) = regular_stasis(p, ctx)?;
    let seed = CyclePoints::constant(&x0, p.fields.len())?;
    let c = solve_cycle(&p.fields, &w, &seed, delta, tol, &p.integrator)?;
    ctx.note(&format!("newton iterations {}", c.newton_iters));
    let record = CycleRecord {
        schema_version: SCHEMA_VERSION,
        scenario: p.scenario.clone(),
        x0: to_vec(&x0),
        weights: w.as_slice().to_vec(),
        cycle_tol: tol,
        delta: c.delta,
        leg_times: c.leg_times.clone(),
        points: c.points.points().iter().map(to_vec).collect(),
        leg_mismatches: c.leg_mismatches.clone(),
        closure_residual: c.closure_residual,
        newton_iters: c.newton_iters,
        residual_norm: c.residual_norm,
    };
    let json = to_json(&record);
    let path = ctx.write_file(&record_file_name(p.name()), &json)?;
    if ctx.json {
        ctx.say(&json)?;
    } else {
        let mut s = format!(
            "scenario        {}\ndelta           {:.12e}\n",
            p.name(),
            delta
        );
        for (j, x) in record.points.iter().enumerate() {
            s += &format!("x_{:<13} {}\n", j + 1, list(x));
        }
        s += &format!(
            "leg times       {}\nclosure         {:.6e}\nnewton iters    {}\nrecord          {}\n",
            list(&record.leg_times),
            record.closure_residual,
            record.newton_iters,
            path.display()
        );
        ctx.say(&s)?;
    }
    Ok(EXIT_OK)
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub record: String,
    pub scenario: String,
    pub delta: f64,
    pub cycle_tol: f64,
    pub limit: f64,
    pub leg_mismatches: Vec<f64>,
    pub closure: f64,
    pub pass: bool,
}

fn bad_record(msg: impl Into<String>) -> CliError {
    CliError::Record(msg.into())
}

/// Re-checks a record's structural invariants and rebuilds its cycle.
fn rebuild(record: CycleRecord) -> Result<(Problem, Weights, KCycle), CliError> {
    if record.schema_version != SCHEMA_VERSION {
        return Err(bad_record(format!(
            "unsupported schema_version {}",
            record.schema_version
        )));
    }
    let p = scenario::resolve(record.scenario, None)?;
    let (n, k) = (p.dimension(), p.fields.len());
    if !(record.delta > 0.0 && record.delta.is_finite()) {
        return Err(bad_record("delta must be positive"));
    }
    if record.weights.len() != k || record.leg_times.len() != k || record.points.len() != k {
        return Err(bad_record(format!(
            "expected {k} weights, leg times and points"
        )));
    }
    if record.points.iter().any(|x| x.len() != n) {
        return Err(bad_record(format!("every point needs {n} coordinates")));
    }
    let w = Weights::new(record.weights).map_err(|e| bad_record(e.to_string()))?;
    for (j, (&t, &m)) in record.leg_times.iter().zip(w.as_slice()).enumerate() {
        let expected = record.delta * m;
        if (t - expected).abs() > LEG_TIME_SLACK * expected {
            return Err(bad_record(format!(
                "leg {} time {t:e} is not delta * m_{} = {expected:e}",
                j + 1,
                j + 1
            )));
        }
    }
    let points = CyclePoints::new(
        record
            .points
            .iter()
            .map(|x| DVector::from_column_slice(x))
            .collect(),
    )?;
    let cycle = KCycle {
        points,
        delta: record.delta,
        leg_times: record.leg_times,
        leg_mismatches: record.leg_mismatches,
        closure_residual: record.closure_residual,
        newton_iters: record.newton_iters,
        residual_norm: record.residual_norm,
    };
    Ok((p, w, cycle))
}

pub fn verify(file: &Path, ctx: &mut Context) -> Result<i32, CliError> {
    let text = std::fs::read_to_string(file).map_err(|source| CliError::Io {
        path: file.to_path_buf(),
        source,
    })?;
    let record: CycleRecord = serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: file.to_path_buf(),
        source,
    })?;
    let tol = ctx.tol.unwrap_or(record.cycle_tol);
    let (p, w, cycle) = rebuild(record)?;
    let cfg = p.integrator.tightened(VERIFY_TIGHTENING);
    let check = check_closure(&p.fields, &w, &cycle, &cfg)?;
    let limit = CLOSURE_FACTOR * tol;
    let report = VerifyReport {
        record: file.display().to_string(),
        scenario: p.name().to_string(),
        delta: cycle.delta,
        cycle_tol: tol,
        limit,
        pass: check.closure <= limit,
        leg_mismatches: check.leg_mismatches,
        closure: check.closure,
    };
    if ctx.json {
        ctx.say(&to_json(&report))?;
    } else {
        let mut s = format!(
            "scenario        {}\ndelta           {:.12e}\n",
            report.scenario, report.delta
        );
        for (j, m) in report.leg_mismatches.iter().enumerate() {
            s += &format!("leg {:<11} mismatch {:.6e}\n", j + 1, m);
        }
        s += &format!(
            "closure         {:.6e} (limit {:.1e})\nresult          {}\n",
            report.closure,
            report.limit,
            if report.pass { "pass" } else { "FAIL" }
        );
        ctx.say(&s)?;
    }
    Ok(if report.pass { EXIT_OK } else { EXIT_FAILURE })
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub scenario: String,
    pub x0: Vec<f64>,
    pub weights: Vec<f64>,
    pub delta_max: f64,
    pub steps: usize,
    pub cycle_tol: f64,
    pub rows: usize,
    pub largest_delta: f64,
    pub reached_target: bool,
    pub failure: Option<String>,
    pub tail_points: usize,
    pub tail_monotone: bool,
    pub loglog_slope: Option<f64>,
    /// `computed` or `not computed` (fewer than two points).
    pub slope_status: &'static str,
    pub csv: String,
}

pub fn sweep(p: &Problem, ctx: &mut Context) -> Result<i32, CliError> {
    let spec = p
        .scenario
        .sweep
        .ok_or_else(|| CliError::Scenario("scenario has no sweep block".into()))?;
    let tol = ctx.tol.unwrap_or(p.scenario.tolerances.cycle_tol);
    let (x0, w) = regular_stasis(p, ctx)?;
    let config = SweepConfig::geometric(spec.delta_max, spec.steps);
    let result = sweep_delta(&p.fields, &w, &x0, &config, tol, &p.integrator)?;
    if ctx.verbose {
        for r in &result.records {
            ctx.note(&format!(
                "delta {:.6e}  distance {:.6e}  newton {}",
                r.delta, r.max_distance_to_x0, r.cycle.newton_iters
            ));
        }
    }

    let csv_name = format!("{}.sweep.csv", p.name());
    let csv = sweep_csv(&result, p.fields.len(), p.dimension());
    let csv_path = ctx.write_file(&csv_name, &csv)?;
    let slope = result.loglog_slope(TAIL_POINTS);
    let summary = SweepSummary {
        scenario: p.name().to_string(),
        x0: to_vec(&x0),
        weights: w.as_slice().to_vec(),
        delta_max: spec.delta_max,
        steps: spec.steps,
        cycle_tol: tol,
        rows: result.records.len(),
        largest_delta: result.largest_delta,
        reached_target: result.reached_target(),
        failure: result.failure.clone(),
        tail_points: result.tail(TAIL_POINTS).len(),
        tail_monotone: result.tail_is_monotone(TAIL_POINTS),
        loglog_slope: slope,
        slope_status: if slope.is_some() {
            "computed"
        } else {
            "not computed"
        },
        csv: csv_name,
    };
    let json = to_json(&summary);
    let json_path = ctx.write_file(&format!("{}.sweep.json", p.name()), &json)?;
    if ctx.json {
        ctx.say(&json)?;
    } else {
        let slope_text = slope.map_or_else(|| "not computed".to_string(), |s| format!("{s:.6}"));
        let mut s = format!(
            "scenario        {}\nrows            {}\nlargest delta   {:.6e}\nslope (tail {})  {}\ntail monotone   {}\n",
            summary.scenario,
            summary.rows,
            summary.largest_delta,
            summary.tail_points,
            slope_text,
            summary.tail_monotone
        );
        if let Some(f) = &summary.failure {
            s += &format!("branch lost     {f}\n");
        }
        s += &format!(
            "csv             {}\nsummary         {}\n",
            csv_path.display(),
            json_path.display()
        );
        ctx.say(&s)?;
    }
    Ok(EXIT_OK)
}
