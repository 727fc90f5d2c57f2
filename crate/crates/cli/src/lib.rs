//! Command implementations behind the `regretlab` binary: run, sweep,
//! solve, and verify, all pure functions of (config bytes, overrides).

pub mod config;
pub mod csv;
pub mod report;

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use regretlab_core::simulator::{sweep, RunLedger, SweepAggregate};

use crate::config::{base_run_config, parse_config, sweep_run_configs, ConfigFile};
use crate::csv::ledger_to_csv;
use crate::report::{solve_report, verify, SolveReport, VerifyOutcome};

fn read_config(path: &Path, overrides: &[(String, String)]) -> Result<(String, ConfigFile)> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let cfg = parse_config(&text, overrides)?;
    Ok((text, cfg))
}

fn write_provenance(out_dir: &Path, original: &str, cfg: &ConfigFile) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("config.orig.toml"), original)?;
    let resolved = toml::to_string(cfg).context("serializing resolved config")?;
    fs::write(out_dir.join("config.resolved.toml"), resolved)?;
    Ok(())
}

pub fn parse_overrides(raw: &[String]) -> Result<Vec<(String, String)>> {
    raw.iter()
        .map(|s| {
            s.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .with_context(|| format!("override \"{s}\" is not KEY=VALUE"))
        })
        .collect()
}

/// `run`: one seeded run; emits run.csv, summary.json, and config copies.
pub fn cmd_run(config_path: &Path, out_dir: &Path, overrides: &[(String, String)]) -> Result<RunLedger> {
    let (original, cfg) = read_config(config_path, overrides)?;
    let rc = base_run_config(&cfg)?;
    let ledger = regretlab_core::simulator::run(&rc)?;
    write_provenance(out_dir, &original, &cfg)?;
    fs::write(out_dir.join("run.csv"), ledger_to_csv(&ledger))?;
    let summary = serde_json::to_string_pretty(&ledger.summary)?;
    fs::write(out_dir.join("summary.json"), summary + "\n")?;
    Ok(ledger)
}

#[derive(Serialize)]
struct SweepRunStatus {
    seed: u64,
    ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    final_cum_regret: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    final_n_probe: Option<u64>,
}

#[derive(Serialize)]
struct SweepReport {
    aggregate: SweepAggregate,
    runs: Vec<SweepRunStatus>,
}

/// `sweep`: replicate the run config across `[sweep] seeds`, optionally in
/// parallel; emits run_seed<seed>.csv per run plus aggregate.json. Output
/// bytes do not depend on the parallelism level.
pub fn cmd_sweep(
    config_path: &Path,
    out_dir: &Path,
    parallel: usize,
    overrides: &[(String, String)],
) -> Result<SweepAggregate> {
    let (original, cfg) = read_config(config_path, overrides)?;
    let configs = sweep_run_configs(&cfg)?;
    let result = sweep(&configs, parallel);
    write_provenance(out_dir, &original, &cfg)?;
    let mut statuses = Vec::with_capacity(configs.len());
    for (rc, outcome) in configs.iter().zip(result.runs.iter()) {
        match outcome {
            Ok(ledger) => {
                let name = format!("run_seed{}.csv", rc.seed);
                fs::write(out_dir.join(name), ledger_to_csv(ledger))?;
                statuses.push(SweepRunStatus {
                    seed: rc.seed,
                    ok: true,
                    error: None,
                    final_cum_regret: Some(ledger.summary.final_cum_regret),
                    final_n_probe: ledger.summary.final_n_probe,
                });
            }
            Err(e) => statuses.push(SweepRunStatus {
                seed: rc.seed,
                ok: false,
                error: Some(e.to_string()),
                final_cum_regret: None,
                final_n_probe: None,
            }),
        }
    }
    let report = SweepReport { aggregate: result.aggregate.clone(), runs: statuses };
    fs::write(
        out_dir.join("aggregate.json"),
        serde_json::to_string_pretty(&report)? + "\n",
    )?;
    Ok(result.aggregate)
}

/// `solve`: oracle report for the instance at the configured (K, delta);
/// K defaults to 1000 when the run section omits it.
pub fn cmd_solve(
    config_path: &Path,
    json: bool,
    overrides: &[(String, String)],
) -> Result<(SolveReport, String)> {
    let (_, cfg) = read_config(config_path, overrides)?;
    let spec = cfg.instance.to_spec()?;
    let episodes = cfg.run.episodes.unwrap_or(1000);
    let report = solve_report(&spec, episodes, cfg.run.delta)?;
    let rendered = if json {
        serde_json::to_string_pretty(&report)? + "\n"
    } else {
        report.render_text()
    };
    Ok((report, rendered))
}

/// `verify`: run with all diagnostics forced on; render a one-line verdict.
pub fn cmd_verify(
    config_path: &Path,
    overrides: &[(String, String)],
) -> Result<(VerifyOutcome, String)> {
    let (_, cfg) = read_config(config_path, overrides)?;
    let rc = base_run_config(&cfg)?;
    let outcome = verify(&rc)?;
    let line = match &outcome.first_failure {
        None => format!(
            "verify: PASS ({} episodes; optimism violations {}, strong {})",
            outcome.episodes, outcome.optimism_violations, outcome.strong_optimism_violations
        ),
        Some(f) => format!(
            "verify: FAIL at episode {} check {} (optimism_ok={}, strong_optimism_ok={})",
            f.episode, f.check, f.optimism_ok, f.strong_optimism_ok
        ),
    };
    Ok((outcome, line))
}
