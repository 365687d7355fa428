use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::config::{run_seed, DatasetChoice, ExperimentConfig, GridConfig, SolverSettings};
use super::io::{
    fmt_f64, read_json, read_matrix_csv, read_series_csv, write_json, write_matrix_csv,
    write_plain, write_series_csv,
};
use crate::datagen::{make_dataset, Dataset, DatasetSpec, GroundTruth, Preset};
use crate::error::{Error, Result};
use crate::lgssm::{FixedParams, TimeSeries};
use crate::linalg::spd_inverse;
use crate::metrics::{evaluate, EdgeOptions, MetricsReport};
use crate::solver::{fit, FitResult, Mode};

/// Runs `f` on a pool of `jobs` threads (all cores when `jobs` is 0).
pub fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

pub fn generate(cfg: &ExperimentConfig, out: &Path) -> Result<Dataset> {
    let spec = cfg.dataset.spec(cfg.seed);
    let ds = make_dataset(&spec)?;
    write_matrix_csv(&out.join("A_star.csv"), &ds.truth.a_star)?;
    write_matrix_csv(&out.join("P_star.csv"), &ds.truth.p_star)?;
    write_series_csv(&out.join("train.csv"), &ds.train)?;
    write_series_csv(&out.join("test.csv"), &ds.test)?;
    write_json(&out.join("spec.json"), &json!({ "spec": spec }), &cfg.hash())?;
    Ok(ds)
}

fn read_spec(dir: &Path) -> Result<DatasetSpec> {
    let path = dir.join("spec.json");
    let value = read_json(&path)?;
    let spec = value.get("spec").cloned().ok_or_else(|| Error::Parse {
        path: path.display().to_string(),
        msg: "missing `spec` field".into(),
    })?;
    serde_json::from_value(spec).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        msg: e.to_string(),
    })
}

/// Spec, fixed model parts and one series of a `generate` output directory.
pub fn load_series(dir: &Path, file: &str) -> Result<(DatasetSpec, FixedParams, TimeSeries)> {
    let series = read_series_csv(&dir.join(file))?;
    let spec = read_spec(dir)?;
    if series.ny() != spec.nx {
        return Err(Error::DimensionMismatch(format!(
            "{file} has {} columns, spec.json declares {} states",
            series.ny(),
            spec.nx
        )));
    }
    let fixed = spec.fixed_params();
    Ok((spec, fixed, series))
}

#[derive(Debug, Clone, Serialize)]
struct FitSummary<'a> {
    mode: Mode,
    lambda_a: f64,
    lambda_p: f64,
    loss_trace: &'a [f64],
    outer_iterations: usize,
    converged: bool,
    inner_fallbacks: usize,
    wall_time_seconds: f64,
}

pub fn fit_dir(cfg: &ExperimentConfig, data: &Path, out: &Path) -> Result<FitResult> {
    let (spec, fixed, train) = load_series(data, "train.csv")?;
    let res = fit(&train, &fixed, &cfg.solver.solver_config(spec.nx))?;
    write_matrix_csv(&out.join("A_hat.csv"), &res.a_hat)?;
    write_matrix_csv(&out.join("P_hat.csv"), &res.p_hat)?;
    let summary = FitSummary {
        mode: cfg.solver.mode,
        lambda_a: cfg.solver.lambda_a,
        lambda_p: cfg.solver.lambda_p,
        loss_trace: &res.loss_trace,
        outer_iterations: res.outer_iterations,
        converged: res.converged,
        inner_fallbacks: res.inner_fallbacks,
        wall_time_seconds: res.wall_time_seconds,
    };
    write_json(&out.join("fit.json"), &summary, &cfg.hash())?;
    Ok(res)
}

/// Scores `A_hat.csv`/`P_hat.csv` in `fit_out` against the truth and test
/// series in `data`.
pub fn eval_dirs(cfg: &ExperimentConfig, data: &Path, fit_out: &Path, out: &Path) -> Result<MetricsReport> {
    let (spec, fixed, test) = load_series(data, "test.csv")?;
    let a_star = read_matrix_csv(&data.join("A_star.csv"))?;
    let p_star = read_matrix_csv(&data.join("P_star.csv"))?;
    let a_hat = read_matrix_csv(&fit_out.join("A_hat.csv"))?;
    let p_hat = read_matrix_csv(&fit_out.join("P_hat.csv"))?;
    let gt = GroundTruth {
        q_star: spd_inverse(&p_star, "P_star")?,
        a_star,
        p_star,
        spec,
    };
    let report = evaluate(&gt, &a_hat, &p_hat, &fixed, &test, EdgeOptions::default())?;
    write_json(&out.join("metrics.json"), &report, &cfg.hash())?;
    Ok(report)
}

/// One fit plus its evaluation on the held-out series.
pub fn fit_and_evaluate(ds: &Dataset, settings: &SolverSettings) -> Result<(FitResult, MetricsReport)> {
    let cfg = settings.solver_config(ds.truth.a_star.nrows());
    let res = fit(&ds.train, &ds.fixed, &cfg)?;
    let report = evaluate(&ds.truth, &res.a_hat, &res.p_hat, &ds.fixed, &ds.test, EdgeOptions::default())?;
    Ok((res, report))
}

#[derive(Debug, Clone, Serialize)]
pub struct RunOutcome {
    pub run: usize,
    pub seed: u64,
    pub report: Option<MetricsReport>,
    pub error: Option<String>,
    pub outer_iterations: usize,
    pub wall_time_seconds: f64,
}

/// All runs of one configuration and their aggregates over the successful
/// runs, in `MetricsReport::COLUMNS` order.
#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub label: String,
    pub lambda_a: f64,
    pub lambda_p: f64,
    pub runs: Vec<RunOutcome>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl RunRecord {
    pub fn new(label: String, lambda_a: f64, lambda_p: f64, runs: Vec<RunOutcome>) -> Self {
        let rows: Vec<[f64; 11]> = runs
            .iter()
            .filter_map(|r| r.report.as_ref().map(MetricsReport::to_row))
            .collect();
        let mut mean = vec![f64::NAN; 11];
        let mut std = vec![f64::NAN; 11];
        for c in 0..11 {
            let vals: Vec<f64> = rows.iter().map(|r| r[c]).filter(|v| v.is_finite()).collect();
            if vals.is_empty() {
                continue;
            }
            let n = vals.len() as f64;
            let m = vals.iter().sum::<f64>() / n;
            mean[c] = m;
            std[c] = (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
        }
        Self {
            label,
            lambda_a,
            lambda_p,
            runs,
            mean,
            std,
        }
    }

    pub fn column_mean(&self, name: &str) -> f64 {
        MetricsReport::COLUMNS
            .iter()
            .position(|c| *c == name)
            .map_or(f64::NAN, |i| self.mean[i])
    }

    pub fn failures(&self) -> usize {
        self.runs.iter().filter(|r| r.error.is_some()).count()
    }
}

/// Training/test datasets for `runs` consecutive run seeds.
pub fn datasets_for_runs(choice: &DatasetChoice, master_seed: u64, runs: usize) -> Result<Vec<Dataset>> {
    (0..runs)
        .into_par_iter()
        .map(|i| make_dataset(&choice.spec(run_seed(master_seed, i))))
        .collect()
}

/// Fits `settings` on every dataset; failures are recorded, not raised.
pub fn run_all(datasets: &[Dataset], settings: &SolverSettings, label: String) -> RunRecord {
    let runs = datasets
        .par_iter()
        .enumerate()
        .map(|(i, ds)| outcome(i, ds, settings))
        .collect();
    RunRecord::new(label, settings.lambda_a, settings.lambda_p, runs)
}

fn outcome(run: usize, ds: &Dataset, settings: &SolverSettings) -> RunOutcome {
    match fit_and_evaluate(ds, settings) {
        Ok((res, report)) => RunOutcome {
            run,
            seed: ds.truth.spec.seed,
            report: Some(report),
            error: None,
            outer_iterations: res.outer_iterations,
            wall_time_seconds: res.wall_time_seconds,
        },
        Err(e) => RunOutcome {
            run,
            seed: ds.truth.spec.seed,
            report: None,
            error: Some(e.to_string()),
            outer_iterations: 0,
            wall_time_seconds: 0.0,
        },
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GridResult {
    pub cells: Vec<RunRecord>,
    /// Index into `cells` of the selected cell, if any cell succeeded.
    pub best: Option<usize>,
    pub selection_metric: super::config::SelectionMetric,
}

impl GridResult {
    pub fn best_cell(&self) -> Option<&RunRecord> {
        self.best.map(|i| &self.cells[i])
    }
}

/// Fits every `(lambda_a, lambda_p)` cell on the same datasets, cells in
/// row-major order over `(lambda_a, lambda_p)`.
pub fn run_grid(datasets: &[Dataset], settings: &SolverSettings, grid: &GridConfig) -> GridResult {
    let cells: Vec<(f64, f64)> = grid
        .lambda_a_values
        .iter()
        .flat_map(|&la| grid.lambda_p_values.iter().map(move |&lp| (la, lp)))
        .collect();
    let tasks: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..datasets.len()).map(move |r| (c, r)))
        .collect();
    let outcomes: Vec<RunOutcome> = tasks
        .par_iter()
        .map(|&(c, r)| {
            let (la, lp) = cells[c];
            outcome(r, &datasets[r], &settings.with_mode(settings.mode, la, lp))
        })
        .collect();
    let mut outcomes = outcomes.into_iter();
    let records: Vec<RunRecord> = cells
        .iter()
        .map(|&(la, lp)| {
            let runs = outcomes.by_ref().take(datasets.len()).collect();
            RunRecord::new(format!("{la},{lp}"), la, lp, runs)
        })
        .collect();

    let metric = grid.selection_metric;
    let score = |rec: &RunRecord| {
        let vals: Vec<f64> = rec
            .runs
            .iter()
            .filter_map(|r| r.report.as_ref().map(|m| metric.extract(m)))
            .collect();
        if vals.is_empty() {
            f64::NAN
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        }
    };
    let mut best: Option<(usize, f64)> = None;
    for (i, rec) in records.iter().enumerate() {
        let s = score(rec);
        if s.is_finite() && best.is_none_or(|(_, b)| s < b) {
            best = Some((i, s));
        }
    }
    GridResult {
        cells: records,
        best: best.map(|(i, _)| i),
        selection_metric: metric,
    }
}

fn header_with(prefix: &[&str]) -> String {
    let mut cols: Vec<&str> = prefix.to_vec();
    cols.extend(MetricsReport::COLUMNS);
    cols.join(",")
}

pub fn grid_csv(result: &GridResult) -> String {
    let mut out = header_with(&["lambda_a", "lambda_p", "run", "seed", "status"]);
    out.push_str(",outer_iterations\n");
    for cell in &result.cells {
        for run in &cell.runs {
            let status = match &run.error {
                None => "ok".to_string(),
                Some(e) => format!("\"error: {}\"", e.replace('"', "'")),
            };
            let metrics: Vec<String> = match &run.report {
                Some(r) => r.to_row().iter().map(|v| fmt_f64(*v)).collect(),
                None => vec![String::new(); 11],
            };
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                fmt_f64(cell.lambda_a),
                fmt_f64(cell.lambda_p),
                run.run,
                run.seed,
                status,
                metrics.join(","),
                run.outer_iterations
            ));
        }
    }
    out
}

pub fn grid_cmd(cfg: &ExperimentConfig, out: &Path) -> Result<GridResult> {
    let grid = cfg
        .grid
        .clone()
        .ok_or_else(|| Error::InvalidConfig("the grid command needs a `grid` section".into()))?;
    let datasets = datasets_for_runs(&cfg.dataset, cfg.seed, grid.runs)?;
    let result = run_grid(&datasets, &cfg.solver, &grid);
    write_plain(&out.join("grid.csv"), &grid_csv(&result))?;
    let summary: Vec<_> = result
        .cells
        .iter()
        .map(|c| json!({ "lambda_a": c.lambda_a, "lambda_p": c.lambda_p, "mean": c.mean, "failures": c.failures() }))
        .collect();
    let body = json!({
        "selection_metric": grid.selection_metric,
        "best": result.best_cell(),
        "cells": summary,
    });
    write_json(&out.join("best.json"), &body, &cfg.hash())?;
    Ok(result)
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkRow {
    pub dataset: Preset,
    pub method: Mode,
    pub record: RunRecord,
}

/// Penalties for every method on one dataset: tuned on the grid when
/// requested, else the configured ones.
fn penalties(cfg: &ExperimentConfig, preset: Preset) -> Result<(f64, f64)> {
    match (&cfg.grid, cfg.benchmark.tune) {
        (Some(grid), true) => {
            // Tuning series use seeds disjoint from the benchmark seeds.
            let tune_seed = cfg.seed.wrapping_add(1_000_000);
            let data = datasets_for_runs(&DatasetChoice::Preset(preset), tune_seed, grid.runs)?;
            let settings = cfg.solver.with_mode(Mode::Dglasso, 0.0, 0.0);
            let res = run_grid(&data, &settings, grid);
            let best = res.best_cell().ok_or_else(|| {
                Error::InvalidConfig(format!("every grid cell failed on dataset {preset}"))
            })?;
            Ok((best.lambda_a, best.lambda_p))
        }
        _ => Ok((cfg.solver.lambda_a, cfg.solver.lambda_p)),
    }
}

pub fn run_benchmark(cfg: &ExperimentConfig) -> Result<Vec<BenchmarkRow>> {
    let mut rows = Vec::new();
    for &preset in &cfg.benchmark.datasets {
        let (la, lp) = penalties(cfg, preset)?;
        let data = datasets_for_runs(&DatasetChoice::Preset(preset), cfg.seed, cfg.benchmark.seeds)?;
        for (method, a, p) in [
            (Mode::Dglasso, la, lp),
            (Mode::Mlem, 0.0, 0.0),
            (Mode::AOnly, la, 0.0),
            (Mode::POnly, 0.0, lp),
        ] {
            let settings = cfg.solver.with_mode(method, a, p);
            let record = run_all(&data, &settings, format!("{preset}/{method}"));
            rows.push(BenchmarkRow {
                dataset: preset,
                method,
                record,
            });
        }
    }
    Ok(rows)
}

pub fn benchmark_csv(rows: &[BenchmarkRow]) -> String {
    let mut out = header_with(&["dataset", "method", "lambda_a", "lambda_p", "failures"]);
    out.push('\n');
    for row in rows {
        let vals: Vec<String> = row.record.mean.iter().map(|v| fmt_f64(*v)).collect();
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.dataset,
            row.method,
            fmt_f64(row.record.lambda_a),
            fmt_f64(row.record.lambda_p),
            row.record.failures(),
            vals.join(",")
        ));
    }
    out
}

pub fn benchmark_markdown(rows: &[BenchmarkRow]) -> String {
    let mut out = String::from("| dataset | method |");
    for c in MetricsReport::COLUMNS {
        out.push_str(&format!(" {c} |"));
    }
    out.push_str("\n|---|---|");
    out.push_str(&"---|".repeat(MetricsReport::COLUMNS.len()));
    out.push('\n');
    for row in rows {
        out.push_str(&format!("| {} | {} |", row.dataset, row.method));
        for v in &row.record.mean {
            out.push_str(&format!(" {v:.4e} |"));
        }
        out.push('\n');
    }
    out
}

pub fn benchmark_cmd(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<BenchmarkRow>> {
    let rows = run_benchmark(cfg)?;
    write_plain(&out.join("benchmark.csv"), &benchmark_csv(&rows))?;
    write_plain(&out.join("benchmark.md"), &benchmark_markdown(&rows))?;
    write_json(&out.join("benchmark.json"), &json!({ "rows": rows }), &cfg.hash())?;
    Ok(rows)
}
