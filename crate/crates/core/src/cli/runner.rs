//! Flow runs driven by a [`RunConfig`]: diagnostics CSV, summary, checkpoints.

use std::fmt::Write as _;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::checkpoint::{fmt_f64, Checkpoint};
use super::diagnostics::{self, Check, DiagnosticsRow, CSV_HEADER};
use super::{RunConfig, EXIT_ASSERTION, EXIT_OK, EXIT_SINGULAR};
use crate::chern;
use crate::error::{Error, Result};
use crate::flow::{self, FlowState, StepControl};
use crate::functionals::{self, AccumulatorLedger};
use crate::models::{self, ModelSpec, Purpose};

pub const CSV_FILE: &str = "diagnostics.csv";
pub const SUMMARY_FILE: &str = "summary.txt";

/// Relative distance from the predicted cone exit within which an
/// integrator failure counts as the expected singular time.
pub const SINGULAR_TIME_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Completed,
    /// Integrator failed at `time`, within tolerance of the predicted exit.
    Singular { time: f64, predicted: f64 },
    /// A check failed, or the flow stopped where no singularity is expected.
    AssertionFailed,
}

impl RunStatus {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunStatus::Completed => EXIT_OK,
            RunStatus::Singular { .. } => EXIT_SINGULAR,
            RunStatus::AssertionFailed => EXIT_ASSERTION,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub status: RunStatus,
    /// Rows written by this invocation.
    pub rows: Vec<DiagnosticsRow>,
    /// Failed checks as `(t, check)`.
    pub failures: Vec<(f64, Check)>,
    pub summary: Vec<(String, String)>,
    pub out_dir: PathBuf,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        self.status.exit_code()
    }

    pub fn summary_value(&self, key: &str) -> Option<&str> {
        self.summary.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

fn build_model(config: &RunConfig) -> Result<ModelSpec> {
    let model = ModelSpec::build(config.model, &config.params)?;
    models::validate(&model, Purpose::Flow)?;
    Ok(model)
}

/// Runs the flow from `t = 0` to `config.t_max`, replacing any previous
/// diagnostics in the output directory.
pub fn run(config: &RunConfig) -> Result<RunOutcome> {
    config.validate()?;
    let model = build_model(config)?;
    fs::create_dir_all(&config.out_dir)?;
    let csv_path = config.out_dir.join(CSV_FILE);
    let mut csv = BufWriter::new(File::create(&csv_path)?);
    writeln!(csv, "{CSV_HEADER}")?;
    let state = FlowState::initial(&model)?;
    drive(config, &model, state, 0, true, csv)
}

/// Continues a run from a checkpoint, appending to the diagnostics CSV.
/// A checkpoint at or beyond `t_max` exits cleanly without new rows.
pub fn resume(checkpoint: &Path, config: &RunConfig) -> Result<RunOutcome> {
    config.validate()?;
    let ckpt = Checkpoint::read(checkpoint)?;
    let model = build_model(config)?;
    check_compatible(&ckpt, config, &model)?;
    fs::create_dir_all(&config.out_dir)?;
    let csv_path = config.out_dir.join(CSV_FILE);
    let fresh = !csv_path.exists();
    let file = OpenOptions::new().create(true).append(true).open(&csv_path)?;
    let mut csv = BufWriter::new(file);
    if fresh {
        writeln!(csv, "{CSV_HEADER}")?;
    }
    let state = FlowState::at(&model, ckpt.t, ckpt.phi, ckpt.ledger)?;
    if ckpt.t >= config.t_max {
        csv.flush()?;
        let summary = summarize(config, &model, &state, &RunStatus::Completed, &[], &[])?;
        write_summary(&config.out_dir, &summary)?;
        return Ok(RunOutcome {
            status: RunStatus::Completed,
            rows: Vec::new(),
            failures: Vec::new(),
            summary,
            out_dir: config.out_dir.clone(),
        });
    }
    drive(config, &model, state, ckpt.sample_index + 1, false, csv)
}

/// Every setting that affects the trajectory must match exactly.
fn check_compatible(ckpt: &Checkpoint, config: &RunConfig, model: &ModelSpec) -> Result<()> {
    let mismatch = |what: &str, a: String, b: String| {
        Err(Error::CheckpointMismatch(format!("{what}: checkpoint has {a}, config has {b}")))
    };
    if ckpt.model != config.model {
        return mismatch("model", ckpt.model.to_string(), config.model.to_string());
    }
    if ckpt.n != model.n || ckpt.reduction_dims != model.chart.reduction_dims {
        return mismatch("dimension", ckpt.n.to_string(), model.n.to_string());
    }
    if model.is_grid() && ckpt.points_per_axis != model.chart.points_per_axis {
        return mismatch(
            "grid_points",
            ckpt.points_per_axis.to_string(),
            model.chart.points_per_axis.to_string(),
        );
    }
    if !model.is_grid() && ckpt.phi.len() != model.initial_potential().len() {
        return mismatch("state size", ckpt.phi.len().to_string(), model.initial_potential().len().to_string());
    }
    let mut cfg_params = config.params.clone();
    let mut ck_params = ckpt.params.clone();
    cfg_params.grid_points = None;
    ck_params.grid_points = None;
    if cfg_params != ck_params {
        return mismatch("parameters", format!("{ck_params:?}"), format!("{cfg_params:?}"));
    }
    if ckpt.dt != config.dt {
        return mismatch("dt", fmt_f64(ckpt.dt), fmt_f64(config.dt));
    }
    if ckpt.sample_interval != config.sample_interval {
        return mismatch(
            "sample_interval",
            fmt_f64(ckpt.sample_interval),
            fmt_f64(config.sample_interval),
        );
    }
    Ok(())
}

fn make_checkpoint(config: &RunConfig, model: &ModelSpec, state: &FlowState, sample_index: usize) -> Checkpoint {
    Checkpoint {
        model: model.id,
        t: state.t,
        n: model.n,
        points_per_axis: model.chart.points_per_axis,
        reduction_dims: model.chart.reduction_dims,
        sample_index,
        dt: config.dt,
        sample_interval: config.sample_interval,
        params: model.params.clone(),
        ledger: state.ledger.clone(),
        phi: state.phi.clone(),
    }
}

/// Whether sample `k` is due for a checkpoint.
fn checkpoint_due(config: &RunConfig, k: usize, last: bool) -> bool {
    if config.checkpoint.is_none() {
        return false;
    }
    if last {
        return true;
    }
    match config.checkpoint_interval {
        Some(iv) if k > 0 => {
            let prev = ((config.sample_time(k - 1) / iv) + 1e-9).floor();
            let cur = ((config.sample_time(k) / iv) + 1e-9).floor();
            cur > prev
        }
        _ => false,
    }
}

fn drive(
    config: &RunConfig,
    model: &ModelSpec,
    mut state: FlowState,
    first_sample: usize,
    sample_first: bool,
    mut csv: BufWriter<File>,
) -> Result<RunOutcome> {
    let ctl = config.step_control()?;
    let num_samples = config.num_samples();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut prev_accum = if sample_first {
        None
    } else {
        Some((state.ledger.scalar_l2_accum, state.ledger.ricci_l2_accum))
    };
    let mut status = RunStatus::Completed;
    let start = if sample_first {
        let (row, checks) = diagnostics::sample_row(model, &mut state, None)?;
        emit(&mut csv, &mut rows, &mut failures, row, checks)?;
        prev_accum = Some((row.scalar_l2_accum, row.ricci_l2_accum));
        if checkpoint_due(config, 0, num_samples == 1) {
            write_checkpoint(config, model, &state, 0)?;
        }
        1
    } else {
        first_sample
    };
    for k in start..num_samples {
        let t_next = config.sample_time(k);
        state = match flow::advance_to(model, state.clone(), t_next, &ctl) {
            Ok(next) => next,
            Err(Error::StepSizeUnderflow { t, .. }) => {
                status = singular_status(model, t);
                break;
            }
            Err(e) => return Err(e),
        };
        let (row, checks) = diagnostics::sample_row(model, &mut state, prev_accum)?;
        emit(&mut csv, &mut rows, &mut failures, row, checks)?;
        prev_accum = Some((row.scalar_l2_accum, row.ricci_l2_accum));
        if checkpoint_due(config, k, k + 1 == num_samples) {
            write_checkpoint(config, model, &state, k)?;
        }
    }
    csv.flush()?;
    let mut post = Vec::new();
    if let Some(check) = diagnostics::abc_history_check(&state.ledger) {
        if !check.pass {
            failures.push((state.t, check.clone()));
        }
        post.push(check);
    }
    if !failures.is_empty() && status == RunStatus::Completed {
        status = RunStatus::AssertionFailed;
    }
    let summary = summarize(config, model, &state, &status, &rows, &post)?;
    write_summary(&config.out_dir, &summary)?;
    Ok(RunOutcome {
        status,
        rows,
        failures,
        summary,
        out_dir: config.out_dir.clone(),
    })
}

fn emit(
    csv: &mut BufWriter<File>,
    rows: &mut Vec<DiagnosticsRow>,
    failures: &mut Vec<(f64, Check)>,
    row: DiagnosticsRow,
    checks: Vec<Check>,
) -> Result<()> {
    writeln!(csv, "{}", row.to_csv_line())?;
    failures.extend(checks.into_iter().filter(|c| !c.pass).map(|c| (row.t, c)));
    rows.push(row);
    Ok(())
}

fn write_checkpoint(config: &RunConfig, model: &ModelSpec, state: &FlowState, k: usize) -> Result<()> {
    if let Some(path) = &config.checkpoint {
        make_checkpoint(config, model, state, k).write(path)?;
    }
    Ok(())
}

fn singular_status(model: &ModelSpec, time: f64) -> RunStatus {
    match flow::detect_cone_exit(model, f64::INFINITY) {
        Some(predicted) if ((time - predicted) / predicted).abs() <= SINGULAR_TIME_TOLERANCE => {
            RunStatus::Singular { time, predicted }
        }
        _ => RunStatus::AssertionFailed,
    }
}

fn summarize(
    config: &RunConfig,
    model: &ModelSpec,
    state: &FlowState,
    status: &RunStatus,
    rows: &[DiagnosticsRow],
    post: &[Check],
) -> Result<Vec<(String, String)>> {
    let mut s: Vec<(String, String)> = Vec::new();
    let mut put = |k: &str, v: String| s.push((k.to_string(), v));
    let ledger: &AccumulatorLedger = &state.ledger;
    put("model", model.id.to_string());
    put(
        "status",
        match status {
            RunStatus::Completed => "completed",
            RunStatus::Singular { .. } => "singular",
            RunStatus::AssertionFailed => "assertion_failed",
        }
        .to_string(),
    );
    put("t_max", fmt_f64(config.t_max));
    put("t_final", fmt_f64(state.t));
    put("rows_written", rows.len().to_string());
    put("scalar_l2_accum", fmt_f64(ledger.scalar_l2_accum));
    put("ricci_l2_accum", fmt_f64(ledger.ricci_l2_accum));
    put("inf_scalar", fmt_f64(ledger.inf_scalar));
    put("lower_scalar_c", fmt_f64(ledger.lower_scalar_c()));
    if let Some(e0) = ledger.e0() {
        put("e0", fmt_f64(e0));
    }
    if let Some((_, e)) = ledger.e_history.last() {
        put("e_final", fmt_f64(*e));
    }
    if let RunStatus::Singular { time, predicted } = status {
        put("singular_time", fmt_f64(*time));
        put("predicted_singular_time", fmt_f64(*predicted));
    }
    if model.nef_flag {
        let red = functionals::check_reduction_inequality(&AccumulatorLedger::default(), ledger, model, 0.0, state.t)?;
        put("reduction_lhs", fmt_f64(red.lhs));
        put("reduction_rhs", fmt_f64(red.rhs));
        put("reduction_slack", fmt_f64(red.slack));
        put("reduction_dropped_term", fmt_f64(red.dropped_term));
    }
    match functionals::check_scalar_theorem(ledger, model, state.t) {
        Ok(b) => {
            put("numerical_dimension", b.nu.to_string());
            put("c_prime", fmt_f64(b.c_prime));
            put("scalar_bound", fmt_f64(b.bound));
            put("bound_slack", fmt_f64(b.scalar_theorem_slack));
        }
        Err(Error::HypothesisViolated(why)) => put("scalar_bound", format!("skipped ({why})")),
        Err(Error::NotNef(_)) => put("scalar_bound", "skipped (not nef)".to_string()),
        Err(Error::NoClosedForm(_)) => {}
        Err(e) => return Err(e),
    }
    // tail of the scalar accumulator from the last tenth of the samples
    let tail_len = (rows.len() / 10).max(3).min(rows.len());
    let tail: Vec<(f64, f64)> = rows[rows.len() - tail_len..]
        .iter()
        .map(|r| (r.t, r.scalar_l2_accum))
        .collect();
    if tail.len() >= 3 {
        let fit = functionals::exponential_tail_fit(&tail);
        put("scalar_tail_rate", fmt_f64(fit.rate));
        put("scalar_tail_estimate", fmt_f64(fit.tail));
        put("scalar_l2_accum_extrapolated", fmt_f64(ledger.scalar_l2_accum + fit.tail));
    }
    for c in post {
        put(&format!("{}_measured", c.name), fmt_f64(c.measured));
        put(&format!("{}_tolerance", c.name), fmt_f64(c.tolerance));
    }
    if model.n == 2 && !matches!(status, RunStatus::Singular { .. }) {
        let my = chern::my_number(model, &state.metric)?;
        put("my_topological", fmt_f64(my.my_topological));
        put("my_curvature_integral", fmt_f64(my.my_curvature_integral));
        put("my_lower_bound", fmt_f64(my.my_lower_bound));
        put("c2_integral", fmt_f64(my.c2_integral));
        put("c1_sq_integral", fmt_f64(my.c1_sq_integral));
    }
    Ok(s)
}

fn write_summary(dir: &Path, summary: &[(String, String)]) -> Result<()> {
    let mut text = String::new();
    for (k, v) in summary {
        let _ = writeln!(text, "{k} = {v}");
    }
    fs::write(dir.join(SUMMARY_FILE), text)?;
    Ok(())
}

/// Advances the initial state of `model` to `t_end` with fixed settings;
/// shared by the verification suites.
pub fn flow_to(model: &ModelSpec, t_end: f64, ctl: &StepControl) -> Result<FlowState> {
    flow::advance_to(model, FlowState::initial(model)?, t_end, ctl)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelId;

    fn config(model: ModelId, dir: &Path) -> RunConfig {
        let mut c = RunConfig::new(model);
        c.out_dir = dir.to_path_buf();
        c
    }

    #[test]
    fn product_run_completes() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = config(ModelId::ProductESigma, dir.path());
        c.t_max = 1.0;
        c.sample_interval = 0.1;
        let out = run(&c).unwrap();
        assert_eq!(out.status, RunStatus::Completed, "{:?}", out.failures);
        assert_eq!(out.rows.len(), 11);
        let text = fs::read_to_string(dir.path().join(CSV_FILE)).unwrap();
        assert_eq!(diagnostics::parse_csv(&text).unwrap(), out.rows);
        let summary = fs::read_to_string(dir.path().join(SUMMARY_FILE)).unwrap();
        assert!(summary.contains("scalar_l2_accum = "));
    }

    #[test]
    fn projective_plane_is_singular() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = config(ModelId::Cp2Round, dir.path());
        c.t_max = 1.0;
        let out = run(&c).unwrap();
        let predicted = (1.0f64 + 6.0 * std::f64::consts::PI).ln() - (6.0 * std::f64::consts::PI).ln();
        match out.status {
            RunStatus::Singular { time, .. } => assert!(((time - predicted) / predicted).abs() < 0.05),
            other => panic!("{other:?}"),
        }
        assert_eq!(out.exit_code(), EXIT_SINGULAR);
    }

    #[test]
    fn resume_rejects_other_model() {
        let dir = tempfile::tempdir().unwrap();
        let ck = dir.path().join("state.ckpt");
        let mut c = config(ModelId::ProductESigma, dir.path());
        c.t_max = 0.1;
        c.sample_interval = 0.05;
        c.checkpoint = Some(ck.clone());
        run(&c).unwrap();
        let other = config(ModelId::ProductSigmaSigma, dir.path());
        assert!(matches!(resume(&ck, &other), Err(Error::CheckpointMismatch(_))));
    }
}
