//! Writes a finished experiment to its run directory.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use wgbsl_core::linalg;
use wgbsl_core::sim::Dataset;
use wgbsl_core::vb::{TraceRow, VbRun};
use wgbsl_core::wg;

use crate::config::ExperimentConfig;
use crate::experiment::{summarize, Fit, RunResult, Setup, SummaryRow};
use crate::metrics;
use crate::output::{fmt_f64 as f, read_csv, FileEntry, RunDir};

const GRID_POINTS: usize = 201;

fn floats(values: &[f64]) -> impl Iterator<Item = String> + '_ {
    values.iter().map(|v| f(*v))
}

fn trace_rows(trace: &[TraceRow]) -> Vec<Vec<String>> {
    trace
        .iter()
        .map(|t| {
            vec![
                t.iteration.to_string(),
                f(t.lb),
                f(t.smoothed_lb),
                f(t.alpha),
                t.patience.to_string(),
                f(t.cv_norm),
                format!("{:016x}", t.lambda_hash),
            ]
        })
        .collect()
}

const TRACE_HEADER: [&str; 7] = ["iteration", "lb", "smoothed_lb", "alpha", "patience", "cv_norm", "lambda_hash"];

#[derive(Serialize)]
struct VbParamsFile<'a> {
    format: &'static str,
    method: &'a str,
    seed: u64,
    mu: Vec<f64>,
    vech_c: Vec<f64>,
    iterations: usize,
    converged: bool,
    config: &'a crate::config::VbSection,
}

fn vb_params_json<'a>(
    config: &'a ExperimentConfig,
    method: &'a str,
    seed: u64,
    run: &VbRun,
) -> VbParamsFile<'a> {
    VbParamsFile {
        format: "wgbsl-vb-params 1",
        method,
        seed,
        mu: run.state.lambda.mu.iter().copied().collect(),
        vech_c: linalg::vech(&run.state.lambda.c),
        iterations: run.state.iteration,
        converged: run.state.converged,
        config: &config.vb,
    }
}

fn cloud_rows(points: &[Vec<f64>]) -> Vec<Vec<String>> {
    points.iter().map(|p| floats(p).collect()).collect()
}

fn summary_header(d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("s{i}")).collect()
}

fn write_summary_csv(run: &mut RunDir, rows: &[SummaryRow]) -> Result<()> {
    run.write_csv(
        "summary.csv",
        &["method", "succeeded", "failed", "mse_mean", "mse_sd", "md_mean", "md_sd", "single_replicate"],
        rows.iter().map(|r| {
            vec![
                r.method.clone(),
                r.succeeded.to_string(),
                r.failed.to_string(),
                f(r.mse_mean),
                f(r.mse_sd),
                f(r.md_mean),
                f(r.md_sd),
                r.single_replicate.to_string(),
            ]
        }),
    )
}

fn write_observed(run: &mut RunDir, setup: &Setup) -> Result<()> {
    match &setup.observed {
        Dataset::Univariate(values) => {
            run.write_csv("observed_data.csv", &["index", "y"], values.iter().enumerate().map(|(i, v)| vec![i.to_string(), f(*v)]))?
        }
        Dataset::Toads(obs) => {
            let mut rows = Vec::new();
            for day in 0..obs.days() {
                for toad in 0..obs.toads() {
                    rows.push(vec![day.to_string(), toad.to_string(), f(obs.get(day, toad))]);
                }
            }
            run.write_csv("observed_data.csv", &["day", "toad", "position"], rows)?
        }
    }
    let wg_obs = setup.wg.as_ref().map(|w| &w.s_obs);
    let rows = setup.s_obs.iter().enumerate().map(|(i, v)| {
        let mut row = vec![format!("s{}", i + 1), f(*v)];
        if let Some(t) = wg_obs {
            row.push(f(t[i]));
        }
        row
    });
    let header: &[&str] = if wg_obs.is_some() { &["summary", "raw", "transformed"] } else { &["summary", "raw"] };
    run.write_csv("observed_summaries.csv", header, rows)
}

fn write_wg(run: &mut RunDir, setup: &Setup) -> Result<()> {
    let Some(wg) = &setup.wg else { return Ok(()) };
    run.write_bytes("wg_transform.txt", wg.transform.to_artifact().as_bytes())?;
    let d = wg.transform.dim();
    let header = summary_header(d);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    if !wg.test_before.is_empty() {
        run.write_csv("wg_cloud_before.csv", &header, cloud_rows(&wg.test_before))?;
        run.write_csv("wg_cloud_after.csv", &header, cloud_rows(&wg.test_after))?;
    }
    let mut diag = Vec::new();
    for (name, m) in [("before", wg.mardia_before), ("after", wg.mardia_after)] {
        if let Some(m) = m {
            diag.push(vec![name.to_string(), f(m.skewness), f(m.kurtosis), f(m.excess_kurtosis)]);
        }
    }
    if !diag.is_empty() {
        run.write_csv("wg_mardia.csv", &["cloud", "skewness", "kurtosis", "excess_kurtosis"], diag)?;
    }
    if let Some(training) = &wg.training {
        // Entry i is the bound before step i, so the kept transform ends at
        // entry `steps.len()`.
        let target = wg::lower_bound_target(d);
        let kept = wg.transform.steps.len();
        run.write_csv(
            "wg_lb_trace.csv",
            &["iteration", "lb", "smoothed_lb", "components", "kept", "target"],
            training.lb_trace.iter().enumerate().map(|(i, lb)| {
                vec![
                    i.to_string(),
                    f(*lb),
                    f(training.smoothed_lb[i]),
                    training.components[i].to_string(),
                    u8::from(i <= kept).to_string(),
                    f(target),
                ]
            }),
        )?;
    }
    Ok(())
}

fn write_results(run: &mut RunDir, config: &ExperimentConfig, setup: &Setup, results: &[RunResult]) -> Result<()> {
    if results.is_empty() {
        return Ok(());
    }
    let sim = setup.simulator.as_ref();
    let names = sim.param_names();
    let mut header: Vec<String> =
        ["method", "replicate", "seed", "status", "mse", "mahalanobis", "iterations", "diagnostic"].map(String::from).to_vec();
    header.extend(names.iter().map(|n| format!("{n}_hat")));
    header.push("error".into());
    let header_ref: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = results.iter().map(|r| {
        let mut row = vec![r.method.label(), r.replicate.to_string(), r.seed.to_string()];
        match &r.outcome {
            Ok(e) => {
                row.extend(["ok".to_string(), f(e.mse), f(e.mahalanobis), e.iterations().to_string(), f(e.diagnostic())]);
                row.extend(floats(&e.theta_hat));
                row.push(String::new());
            }
            Err(msg) => {
                row.extend(["failed", "", "", "", ""].map(String::from));
                row.extend(names.iter().map(|_| String::new()));
                row.push(msg.clone());
            }
        }
        row
    });
    run.write_csv("replicates.csv", &header_ref, rows)?;

    let labelled: Vec<(String, Option<(f64, f64)>)> = results.iter().map(|r| (r.method.label(), r.metrics())).collect();
    write_summary_csv(run, &summarize(&labelled))?;

    for r in results {
        let Ok(est) = &r.outcome else { continue };
        let label = r.method.label();
        let stem = format!("{label}_r{}", r.replicate);
        let mut grid_rows = Vec::new();
        match &est.fit {
            Fit::Vb(vb) => {
                run.write_csv(&format!("traces/vb_trace_{stem}.csv"), &TRACE_HEADER, trace_rows(&vb.trace))?;
                run.write_json(&format!("params/vb_params_{stem}.json"), &vb_params_json(config, &label, r.seed, vb))?;
                for (i, name) in names.iter().enumerate() {
                    for (x, d) in metrics::vb_marginal_grid(sim, &vb.state.lambda, i, GRID_POINTS) {
                        grid_rows.push(vec![name.to_string(), f(x), f(d)]);
                    }
                }
            }
            Fit::Mcmc(chain) => {
                let mut header: Vec<String> = vec!["iteration".into()];
                header.extend(names.iter().map(|n| n.to_string()));
                let gdim = chain.gammas.first().map_or(0, Vec::len);
                header.extend((1..=gdim).map(|i| format!("gamma{i}")));
                header.extend(["loglik".to_string(), "accepted".to_string()]);
                let header_ref: Vec<&str> = header.iter().map(String::as_str).collect();
                let rows = (0..chain.thetas.len()).map(|t| {
                    let mut row = vec![t.to_string()];
                    row.extend(floats(&sim.constrain(&chain.thetas[t])));
                    row.extend(floats(&chain.gammas[t]));
                    row.push(f(chain.loglik[t]));
                    row.push(u8::from(chain.accepted[t]).to_string());
                    row
                });
                run.write_csv(&format!("chains/mcmc_chain_{stem}.csv"), &header_ref, rows)?;
                let start = (chain.thetas.len() as f64 * config.mcmc.burn_in).floor() as usize;
                let kept: Vec<Vec<f64>> = chain.thetas[start..].iter().map(|t| sim.constrain(t)).collect();
                for (i, name) in names.iter().enumerate() {
                    let column: Vec<f64> = kept.iter().map(|t| t[i]).collect();
                    for (x, d) in metrics::kde_grid(&column, GRID_POINTS) {
                        grid_rows.push(vec![name.to_string(), f(x), f(d)]);
                    }
                }
            }
        }
        run.write_csv(&format!("posteriors/posterior_{stem}.csv"), &["parameter", "x", "density"], grid_rows)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct Manifest<'a> {
    format: &'static str,
    name: &'a str,
    seed: u64,
    workers: usize,
    theta0: Option<&'a [f64]>,
    timings: Vec<Timing>,
    failures: Vec<Failure>,
    config: &'a ExperimentConfig,
    files: &'a [FileEntry],
}

#[derive(Serialize)]
struct Timing {
    stage: String,
    seconds: f64,
}

#[derive(Serialize)]
struct Failure {
    method: String,
    replicate: usize,
    error: String,
}

/// Writes every output and the manifest; the manifest is written last and
/// lists all other files with their hashes.
pub fn write_run(
    root: &Path,
    config: &ExperimentConfig,
    setup: &Setup,
    results: &[RunResult],
    workers: usize,
) -> Result<Vec<FileEntry>> {
    let mut run = RunDir::create(root)?;
    write_observed(&mut run, setup)?;
    if let Some(pilot) = &setup.pilot {
        run.write_csv("pilot_trace.csv", &TRACE_HEADER, trace_rows(&pilot.trace))?;
    }
    write_wg(&mut run, setup)?;
    write_results(&mut run, config, setup, results)?;

    let mut timings: Vec<Timing> =
        setup.timings.iter().map(|(s, t)| Timing { stage: s.clone(), seconds: *t }).collect();
    timings.extend(results.iter().map(|r| Timing {
        stage: format!("{}_r{}", r.method.label(), r.replicate),
        seconds: r.seconds,
    }));
    let failures = results
        .iter()
        .filter_map(|r| {
            r.outcome.as_ref().err().map(|e| Failure { method: r.method.label(), replicate: r.replicate, error: e.clone() })
        })
        .collect();
    let files = run.files().to_vec();
    let manifest = Manifest {
        format: "wgbsl-manifest 1",
        name: &config.experiment.name,
        seed: config.experiment.seed,
        workers,
        theta0: setup.theta0.as_deref(),
        timings,
        failures,
        config,
        files: &files,
    };
    run.write_json("manifest.json", &manifest)?;
    Ok(run.files().to_vec())
}

/// Recomputes `summary.csv` from an existing `replicates.csv`.
pub fn rebuild_summary(dir: &Path) -> Result<Vec<SummaryRow>> {
    let (header, rows) = read_csv(&dir.join("replicates.csv"))?;
    let col = |name: &str| header.iter().position(|h| h == name).with_context(|| format!("column {name} missing"));
    let (method, status, mse, md) = (col("method")?, col("status")?, col("mse")?, col("mahalanobis")?);
    let mut labelled = Vec::new();
    for row in &rows {
        let value = match row[status].as_str() {
            "ok" => Some((row[mse].parse::<f64>()?, row[md].parse::<f64>()?)),
            "failed" => None,
            other => bail!("unknown status {other:?}"),
        };
        labelled.push((row[method].clone(), value));
    }
    let summary = summarize(&labelled);
    let mut run = RunDir::create(dir)?;
    write_summary_csv(&mut run, &summary)?;
    Ok(summary)
}

/// Plain-text table of a summary.
pub fn format_table(rows: &[SummaryRow]) -> String {
    let mut out = format!("{:<16}{:>6}{:>8}{:>22}{:>22}\n", "method", "ok", "failed", "MSE mean (sd)", "MD mean (sd)");
    for r in rows {
        let mark = if r.single_replicate { "*" } else { "" };
        out.push_str(&format!(
            "{:<16}{:>6}{:>8}{:>22}{:>22}\n",
            r.method,
            r.succeeded,
            r.failed,
            format!("{:.4} ({:.4}){mark}", r.mse_mean, r.mse_sd),
            format!("{:.4} ({:.4}){mark}", r.md_mean, r.md_sd),
        ));
    }
    if rows.iter().any(|r| r.single_replicate) {
        out.push_str("* single replicate; sd reported as 0\n");
    }
    out
}
