//! Experiment orchestration: SNR sweeps and stream-allocation searches over
//! a parsed scenario, with CSV emission and an optional JSON mirror.

use detequiv::montecarlo::{run_replications, MetricKind, ReplicationStats};
use detequiv::scenario::{
    evaluate_deterministic, rate_with_interference_det, search_stream_grid, EvalDiagnostics,
    InterferenceParams, ScenarioSpec, StreamSearchResult,
};
use detequiv::solver::SolverConfig;
use serde_json::json;

use crate::scnfile::BuiltScenario;

/// Run mode: which columns of the sweep output are populated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Deterministic equivalents only.
    Solve,
    /// Monte Carlo only.
    Mc,
    /// Both.
    Sweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unit {
    Nats,
    Bits,
}

impl Unit {
    pub fn name(&self) -> &'static str {
        match self {
            Unit::Nats => "nats",
            Unit::Bits => "bits",
        }
    }

    fn scale(&self, v: f64) -> f64 {
        match self {
            Unit::Nats => v,
            Unit::Bits => v / std::f64::consts::LN_2,
        }
    }
}

/// One output row of a sweep.
struct SweepRow {
    snr_db: f64,
    metric: &'static str,
    det_value: Option<f64>,
    mc: Option<ReplicationStats<f64>>,
    diagnostics: Option<EvalDiagnostics>,
    status: Option<String>,
}

pub struct SweepOutput {
    pub csv: String,
    pub json: serde_json::Value,
    /// True if any row recorded a numerical failure.
    pub any_failed: bool,
}

fn csv_field_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Quotes a status string for CSV if needed.
fn csv_status(s: &Option<String>) -> String {
    match s {
        None => "ok".to_string(),
        Some(msg) => {
            if msg.contains(',') || msg.contains('"') || msg.contains('\n') {
                format!("\"{}\"", msg.replace('"', "\"\""))
            } else {
                msg.clone()
            }
        }
    }
}

fn snr_to_sigma2(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

/// Metrics evaluated for one single-system scenario.
const SINGLE_METRICS: [MetricKind; 2] = [MetricKind::MutualInfo, MetricKind::MmseSumRate];

fn single_system_rows(
    scenario: &ScenarioSpec<f64>,
    mode: Mode,
    snr_db: &[f64],
    reps: usize,
    seed: u64,
    cfg: &SolverConfig<f64>,
) -> Vec<SweepRow> {
    let mut rows = Vec::new();
    for &snr in snr_db {
        let sigma2 = snr_to_sigma2(snr);
        let det = if mode != Mode::Mc {
            Some(evaluate_deterministic(scenario, sigma2, cfg))
        } else {
            None
        };
        let mc = if mode != Mode::Solve {
            Some(run_replications(
                scenario,
                &SINGLE_METRICS,
                sigma2,
                reps,
                seed,
            ))
        } else {
            None
        };
        for (idx, metric) in SINGLE_METRICS.iter().enumerate() {
            let mut status = None;
            let det_value = match &det {
                Some(Ok((report, _))) => Some(match metric {
                    MetricKind::MutualInfo => report.mutual_info,
                    MetricKind::MmseSumRate => report.mmse_sum_rate,
                }),
                Some(Err(e)) => {
                    status = Some(e.to_string());
                    None
                }
                None => None,
            };
            let diagnostics = match &det {
                Some(Ok((_, d))) => Some(*d),
                _ => None,
            };
            let mc_stats = match &mc {
                Some(Ok(stats)) => Some(stats[idx].clone()),
                Some(Err(e)) => {
                    status = Some(e.to_string());
                    None
                }
                None => None,
            };
            rows.push(SweepRow {
                snr_db: snr,
                metric: metric.name(),
                det_value,
                mc: mc_stats,
                diagnostics,
                status,
            });
        }
    }
    rows
}

/// The interference pair is summarized by the sum of the two receivers'
/// mutual informations; Monte Carlo replications run per receiver and the
/// moments of the sum combine in quadrature.
fn interference_rows(
    params: &InterferenceParams<f64>,
    streams: (usize, usize),
    mode: Mode,
    snr_db: &[f64],
    reps: usize,
    seed: u64,
    cfg: &SolverConfig<f64>,
) -> Vec<SweepRow> {
    let mut rows = Vec::new();
    let scenarios =
        match detequiv::scenario::build_interference_channel(params, streams.0, streams.1) {
            Ok(s) => s,
            Err(e) => {
                return snr_db
                    .iter()
                    .map(|&snr| SweepRow {
                        snr_db: snr,
                        metric: "sum_mutual_info",
                        det_value: None,
                        mc: None,
                        diagnostics: None,
                        status: Some(e.to_string()),
                    })
                    .collect();
            }
        };
    for &snr in snr_db {
        let sigma2 = snr_to_sigma2(snr);
        let mut status = None;
        let det_value = if mode != Mode::Mc {
            let mut total = 0.0;
            let mut ok = true;
            for s in &scenarios {
                match rate_with_interference_det(s, sigma2, cfg) {
                    Ok(v) => total += v,
                    Err(e) => {
                        status = Some(e.to_string());
                        ok = false;
                        break;
                    }
                }
            }
            ok.then_some(total)
        } else {
            None
        };
        let mc = if mode != Mode::Solve {
            let mut mean = 0.0;
            let mut var = 0.0;
            let mut se2 = 0.0;
            let mut ok = true;
            for (q, s) in scenarios.iter().enumerate() {
                match run_replications(s, &[MetricKind::MutualInfo], sigma2, reps, seed + q as u64)
                {
                    Ok(stats) => {
                        mean += stats[0].mean;
                        var += stats[0].std_dev * stats[0].std_dev;
                        se2 += stats[0].std_err * stats[0].std_err;
                    }
                    Err(e) => {
                        status = Some(e.to_string());
                        ok = false;
                        break;
                    }
                }
            }
            ok.then(|| ReplicationStats {
                metric_name: "sum_mutual_info".into(),
                mean,
                std_dev: var.sqrt(),
                std_err: se2.sqrt(),
                n_reps: reps,
                seed,
            })
        } else {
            None
        };
        rows.push(SweepRow {
            snr_db: snr,
            metric: "sum_mutual_info",
            det_value,
            mc,
            diagnostics: None,
            status,
        });
    }
    rows
}

/// Runs a sweep over the SNR grid and renders the CSV plus JSON mirror.
pub fn run_sweep(
    built: &BuiltScenario,
    mode: Mode,
    snr_db: &[f64],
    reps: usize,
    seed: u64,
    unit: Unit,
    cfg: &SolverConfig<f64>,
) -> SweepOutput {
    let rows = match built {
        BuiltScenario::Single(s) => single_system_rows(s, mode, snr_db, reps, seed, cfg),
        BuiltScenario::Interference { params, streams } => {
            interference_rows(params, *streams, mode, snr_db, reps, seed, cfg)
        }
    };

    let mut csv =
        String::from("snr_db,metric,det_value,mc_mean,mc_std,mc_stderr,n_reps,unit,status\n");
    let mut json_rows = Vec::new();
    let mut any_failed = false;
    for row in &rows {
        any_failed |= row.status.is_some();
        let det = row.det_value.map(|v| unit.scale(v));
        let (mean, std, se, n) = match &row.mc {
            Some(s) => (
                Some(unit.scale(s.mean)),
                Some(unit.scale(s.std_dev)),
                Some(unit.scale(s.std_err)),
                Some(s.n_reps),
            ),
            None => (None, None, None, None),
        };
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            row.snr_db,
            row.metric,
            csv_field_opt(det),
            csv_field_opt(mean),
            csv_field_opt(std),
            csv_field_opt(se),
            n.map(|v| v.to_string()).unwrap_or_default(),
            unit.name(),
            csv_status(&row.status)
        ));
        json_rows.push(json!({
            "snr_db": row.snr_db,
            "metric": row.metric,
            "det_value": det,
            "mc_mean": mean,
            "mc_std": std,
            "mc_stderr": se,
            "n_reps": n,
            "status": row.status.clone().unwrap_or_else(|| "ok".into()),
            "solver": row.diagnostics.map(|d| json!({
                "outer_iters": d.outer_iters,
                "residual": d.residual,
                "interference_outer_iters": d.interference_outer_iters,
                "interference_residual": d.interference_residual,
            })),
        }));
    }
    SweepOutput {
        csv,
        json: json!({ "unit": unit.name(), "rows": json_rows }),
        any_failed,
    }
}

pub struct SearchOutput {
    pub csv: String,
    pub json: serde_json::Value,
    pub any_failed: bool,
}

/// Runs the exhaustive stream search at a single SNR; `reps > 0` adds a
/// Monte Carlo cross-check of the argmax cell.
pub fn run_stream_search(
    params: &InterferenceParams<f64>,
    snr_db: f64,
    reps: usize,
    seed: u64,
    unit: Unit,
    cfg: &SolverConfig<f64>,
) -> Result<SearchOutput, detequiv::Error> {
    let sigma2 = snr_to_sigma2(snr_db);
    let result: StreamSearchResult<f64> = {
        let mats = params.correlations()?;
        search_stream_grid(params.tx_antennas[0], params.tx_antennas[1], |n1, n2| {
            let mut total = 0.0;
            for q in 0..2 {
                let s = mats.receiver_scenario(params, q, [n1, n2])?;
                total += rate_with_interference_det(&s, sigma2, cfg)?;
            }
            Ok(total)
        })?
    };

    let mut csv = String::from("n1,n2,sum_rate,status\n");
    let mut cells = Vec::new();
    for (i, row) in result.table.iter().enumerate() {
        for (j, value) in row.iter().enumerate() {
            let status = match value {
                Some(_) => None,
                None => Some(
                    result
                        .failures
                        .iter()
                        .find(|f| f.n1 == i + 1 && f.n2 == j + 1)
                        .map(|f| f.message.clone())
                        .unwrap_or_else(|| "failed".into()),
                ),
            };
            let scaled = value.map(|v| unit.scale(v));
            csv.push_str(&format!(
                "{},{},{},{}\n",
                i + 1,
                j + 1,
                csv_field_opt(scaled),
                csv_status(&status)
            ));
            cells.push(json!({
                "n1": i + 1,
                "n2": j + 1,
                "sum_rate": scaled,
                "status": status.unwrap_or_else(|| "ok".into()),
            }));
        }
    }
    csv.push_str(&format!(
        "# best n1={} n2={} sum_rate={}\n",
        result.best.0,
        result.best.1,
        unit.scale(result.objective)
    ));

    let mut mc_check = serde_json::Value::Null;
    if reps > 0 {
        let scenarios =
            detequiv::scenario::build_interference_channel(params, result.best.0, result.best.1)?;
        let mut mean = 0.0;
        let mut se2 = 0.0;
        for (q, s) in scenarios.iter().enumerate() {
            let stats =
                run_replications(s, &[MetricKind::MutualInfo], sigma2, reps, seed + q as u64)?;
            mean += stats[0].mean;
            se2 += stats[0].std_err * stats[0].std_err;
        }
        csv.push_str(&format!(
            "# mc_check n1={} n2={} mean={} stderr={} reps={reps}\n",
            result.best.0,
            result.best.1,
            unit.scale(mean),
            unit.scale(se2.sqrt())
        ));
        mc_check = json!({
            "n1": result.best.0,
            "n2": result.best.1,
            "mean": unit.scale(mean),
            "stderr": unit.scale(se2.sqrt()),
            "reps": reps,
        });
    }

    let any_failed = !result.failures.is_empty();
    Ok(SearchOutput {
        csv,
        json: json!({
            "unit": unit.name(),
            "snr_db": snr_db,
            "best": { "n1": result.best.0, "n2": result.best.1, "sum_rate": unit.scale(result.objective) },
            "cells": cells,
            "mc_check": mc_check,
        }),
        any_failed,
    })
}
