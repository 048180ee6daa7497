//! The `run` subcommand: one scenario or a sweep, emitted as CSV rows.
//!
//! Rows are byte-stable: fixed two-decimal percentages, integer
//! nanoseconds, and sweep rows in grid order regardless of `--jobs`.

use std::fs;
use std::process::ExitCode;

use anyhow::{Context, Result};
use ponsim::{
    run_scenario_with, run_sweep, scenario_seed, RunOptions, ScenarioResult, SweepPoint,
};

use crate::settings::{resolve_out, Settings};
use crate::RunArgs;

pub const CSV_HEADER: &str = "num_channels,channel_rate_gbps,tuning_time_ns,load_pct,\
sla_share_pct,seed,compliance_pct,breach_events,mean_delay_ns,p99_delay_ns,retunes";

pub fn cmd_run(args: &RunArgs) -> Result<ExitCode> {
    let settings = Settings::resolve(args)?;
    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    let mut failed = 0u32;

    if settings.sweep {
        let grid = settings.grid();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(args.jobs)
            .build()
            .context("cannot build the worker pool")?;
        let results = pool.install(|| run_sweep(&grid, RunOptions::default()));
        for (point, result) in &results {
            match result {
                Ok(r) => {
                    csv.push_str(&csv_row(point, r));
                    csv.push('\n');
                }
                Err(e) => {
                    failed += 1;
                    eprintln!(
                        "sweep point failed: {}x{} tuning {} ns load {:.0}% share {:.0}% seed {}: {e}",
                        point.channels,
                        point.channel_rate / 1_000_000_000,
                        point.tuning.ns(),
                        point.load * 100.0,
                        point.sla_share * 100.0,
                        point.seed,
                    );
                }
            }
        }
    } else {
        let mut cfg = settings.scenario();
        cfg.seed = scenario_seed(
            settings.seed,
            cfg.channels,
            cfg.channel_rate,
            cfg.tuning_time,
            cfg.load,
            cfg.sla_share,
        );
        let point = SweepPoint {
            channels: cfg.channels,
            channel_rate: cfg.channel_rate,
            tuning: cfg.tuning_time,
            load: cfg.load,
            sla_share: cfg.sla_share,
            seed: settings.seed,
            config: cfg.clone(),
        };
        let result = run_scenario_with(&cfg, RunOptions::default())?;
        csv.push_str(&csv_row(&point, &result));
        csv.push('\n');
    }

    match &args.out {
        Some(path) => {
            let path = resolve_out(path);
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)
                    .with_context(|| format!("cannot create {}", parent.display()))?;
            }
            fs::write(&path, &csv).with_context(|| format!("cannot write {}", path.display()))?;
        }
        None => print!("{csv}"),
    }

    if failed > 0 {
        eprintln!("{failed} sweep points failed");
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn csv_row(p: &SweepPoint, r: &ScenarioResult) -> String {
    format!(
        "{},{},{},{:.2},{:.2},{},{:.2},{},{},{},{}",
        p.channels,
        p.channel_rate / 1_000_000_000,
        p.tuning.ns(),
        p.load * 100.0,
        p.sla_share * 100.0,
        p.seed,
        r.compliance_pct,
        r.breach_events,
        r.mean_delay_ns.round() as i64,
        r.p99_delay_ns,
        r.retunes,
    )
}
