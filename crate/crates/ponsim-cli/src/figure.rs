//! The `figure` subcommand: reduce a sweep CSV to the compliance-vs-share
//! curves of one tuning time, averaged over seeds.
//!
//! Two files per invocation: a long-format CSV and a gnuplot column layout
//! with one series per (channel layout, load), shares on the x axis.

use std::cmp::Reverse;
use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};

use crate::run::CSV_HEADER;
use crate::FigureArgs;

/// The sweep columns the reduction needs; percent columns are kept in
/// hundredths so they can serve as exact keys.
struct SweepRow {
    channels: u32,
    rate_gbps: u64,
    tuning_ns: i64,
    load_c: i64,
    share_c: i64,
    compliance: f64,
}

type SeriesKey = (Reverse<u32>, u64, i64);

pub fn cmd_figure(args: &FigureArgs) -> Result<ExitCode> {
    let text = fs::read_to_string(&args.input)
        .with_context(|| format!("cannot read {}", args.input.display()))?;
    let rows = parse_sweep_csv(&text)
        .with_context(|| format!("{} is not a sweep CSV", args.input.display()))?;

    let selected: Vec<&SweepRow> = rows.iter().filter(|r| r.tuning_ns == args.tuning).collect();
    if selected.is_empty() {
        bail!(
            "no rows with tuning time {} ns in {}",
            args.tuning,
            args.input.display()
        );
    }

    // Seed-averaged compliance per series and share; key order fixes the
    // series order (descending channel count, then load).
    let mut series: BTreeMap<SeriesKey, BTreeMap<i64, (f64, u64)>> = BTreeMap::new();
    for r in &selected {
        let cell = series
            .entry((Reverse(r.channels), r.rate_gbps, r.load_c))
            .or_default()
            .entry(r.share_c)
            .or_insert((0.0, 0));
        cell.0 += r.compliance;
        cell.1 += 1;
    }

    let mut long = String::from("num_channels,channel_rate_gbps,load_pct,sla_share_pct,compliance_pct\n");
    for ((Reverse(channels), rate, load_c), points) in &series {
        for (share_c, (sum, count)) in points {
            long.push_str(&format!(
                "{},{},{},{},{:.2}\n",
                channels,
                rate,
                fmt_pct(*load_c),
                fmt_pct(*share_c),
                sum / *count as f64,
            ));
        }
    }

    let shares: Vec<i64> = {
        let mut all: Vec<i64> = series.values().flat_map(|p| p.keys().copied()).collect();
        all.sort_unstable();
        all.dedup();
        all
    };
    let mut dat = String::from("# sla_share_pct");
    for ((Reverse(channels), rate, load_c), _) in &series {
        dat.push_str(&format!(" {}x{}_load{}", channels, rate, fmt_compact(*load_c)));
    }
    dat.push('\n');
    for share_c in &shares {
        dat.push_str(&fmt_compact(*share_c));
        for points in series.values() {
            match points.get(share_c) {
                Some((sum, count)) => dat.push_str(&format!(" {:.2}", sum / *count as f64)),
                None => dat.push_str(" nan"),
            }
        }
        dat.push('\n');
    }

    let dir = out_dir(args);
    fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let csv_path = dir.join(format!("figure_tuning_{}ns.csv", args.tuning));
    let dat_path = dir.join(format!("figure_tuning_{}ns.dat", args.tuning));
    fs::write(&csv_path, &long).with_context(|| format!("cannot write {}", csv_path.display()))?;
    fs::write(&dat_path, &dat).with_context(|| format!("cannot write {}", dat_path.display()))?;
    println!("{}", csv_path.display());
    println!("{}", dat_path.display());
    Ok(ExitCode::SUCCESS)
}

fn out_dir(args: &FigureArgs) -> PathBuf {
    if let Some(dir) = &args.out_dir {
        return dir.clone();
    }
    if let Some(dir) = std::env::var_os("PONSIM_OUT_DIR") {
        return PathBuf::from(dir);
    }
    PathBuf::from(".")
}

fn parse_sweep_csv(text: &str) -> Result<Vec<SweepRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header == CSV_HEADER => {}
        Some(other) => bail!("unexpected header {other:?}"),
        None => bail!("empty file"),
    }
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 11 {
            bail!("line {}: expected 11 fields, got {}", lineno + 2, fields.len());
        }
        let num = |i: usize| -> Result<f64> {
            fields[i]
                .parse()
                .with_context(|| format!("line {}: bad number {:?}", lineno + 2, fields[i]))
        };
        rows.push(SweepRow {
            channels: num(0)? as u32,
            rate_gbps: num(1)? as u64,
            tuning_ns: num(2)? as i64,
            load_c: (num(3)? * 100.0).round() as i64,
            share_c: (num(4)? * 100.0).round() as i64,
            compliance: num(6)?,
        });
    }
    Ok(rows)
}

/// Percent in hundredths, printed with the sweep's two decimals.
fn fmt_pct(c: i64) -> String {
    format!("{:.2}", c as f64 / 100.0)
}

/// Percent in hundredths with trailing zeros trimmed, for column labels
/// and x values.
fn fmt_compact(c: i64) -> String {
    let s = fmt_pct(c);
    let t = s.trim_end_matches('0').trim_end_matches('.');
    if t.is_empty() { "0".into() } else { t.into() }
}
