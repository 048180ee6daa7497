//! Scenario execution: the per-frame loop tying traffic generation, the
//! merge, and SLA tracking together, plus multi-scenario sweeps.
//!
//! Each frame runs generate, merge, record, recompute in that order, so
//! the priorities used while merging frame `n` reflect the rates as of the
//! end of frame `n - 1`. The first compliance window is warm-up: its frames
//! are simulated but excluded from every reported statistic.

use rayon::prelude::*;
use thiserror::Error;

use crate::merge::MergeState;
use crate::model::{Allocation, ConfigError, ScenarioConfig};
use crate::sla::SlaTracker;
use crate::time::{BitsPerSec, TimeNs};
use crate::traffic::{build_flow_population, generate_frame, mix_coords, TrafficError};
use crate::verify::ScheduleChecker;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Traffic(#[from] TrafficError),
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Re-validate every frame's schedule with the independent checker.
    pub check_invariants: bool,
}

/// Aggregated statistics of one scenario, warm-up excluded.
///
/// `compliance_pct` is flow-level: every measured frame contributes one
/// breach event per SLA flow over its threshold in that frame, and the
/// percentage is `100 * (1 - events / (sla_flows * frames))`. Scenarios
/// with no SLA flows or no measured frames are vacuously compliant. Delay
/// statistics cover SLA grants only; best-effort requests may ride toward
/// the scheduling horizon by design.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub frames_measured: u64,
    pub grants: u64,
    pub sla_grants: u64,
    pub breach_events: u64,
    pub compliance_pct: f64,
    pub mean_delay_ns: f64,
    pub p99_delay_ns: i64,
    pub max_delay_ns: i64,
    pub retunes: u64,
    pub collisions: u64,
    pub deadline_misses: u64,
    pub invariant_violations: u64,
    pub first_violation: Option<String>,
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioResult, SimError> {
    run_scenario_with(cfg, RunOptions::default())
}

pub fn run_scenario_with(
    cfg: &ScenarioConfig,
    opts: RunOptions,
) -> Result<ScenarioResult, SimError> {
    cfg.validate()?;
    let flows = build_flow_population(cfg)?;
    let mut tracker = SlaTracker::new(&flows, cfg.window_frames, cfg.window_mode);
    let mut merge = MergeState::new(cfg);
    let mut checker = opts.check_invariants.then(|| ScheduleChecker::new(cfg));

    let warmup = cfg.window_frames as u64;
    let mut frames_measured = 0u64;
    let mut grants = 0u64;
    let mut sla_grants = 0u64;
    let mut breach_events = 0u64;
    let mut retunes = 0u64;
    let mut collisions = 0u64;
    let mut deadline_misses = 0u64;
    let mut invariant_violations = 0u64;
    let mut first_violation: Option<String> = None;
    let mut sla_delays: Vec<i64> = Vec::new();

    for frame in 0..cfg.frames as u64 {
        let maps = generate_frame(&flows, frame, cfg)?;
        let out = merge.merge_frame(&maps, frame, &tracker);
        let all: Vec<&Allocation> = maps.iter().flat_map(|m| &m.allocations).collect();

        if let Some(ck) = checker.as_mut() {
            if let Err(e) = ck.check_frame(&all, &out.grants, frame) {
                invariant_violations += 1;
                first_violation.get_or_insert_with(|| format!("frame {frame}: {e}"));
            }
        }
        for (a, d) in all.iter().zip(&out.delays) {
            tracker.record_grant(a.flow, *d, frame);
        }
        tracker.recompute_rates(frame);

        if frame >= warmup {
            frames_measured += 1;
            grants += all.len() as u64;
            breach_events += tracker.breached_count() as u64;
            retunes += out.retunes as u64;
            collisions += out.collisions as u64;
            deadline_misses += out.deadline_misses as u64;
            for (a, d) in all.iter().zip(&out.delays) {
                if a.sla.is_some() {
                    sla_grants += 1;
                    sla_delays.push(d.ns());
                }
            }
        }
    }

    let denom = tracker.tracked_count() as u64 * frames_measured;
    let compliance_pct = if denom == 0 {
        100.0
    } else {
        100.0 * (1.0 - breach_events as f64 / denom as f64)
    };
    let mean_delay_ns = if sla_delays.is_empty() {
        0.0
    } else {
        sla_delays.iter().sum::<i64>() as f64 / sla_delays.len() as f64
    };
    let p99_delay_ns = percentile(&mut sla_delays, 0.99);
    let max_delay_ns = sla_delays.iter().copied().max().unwrap_or(0);

    Ok(ScenarioResult {
        frames_measured,
        grants,
        sla_grants,
        breach_events,
        compliance_pct,
        mean_delay_ns,
        p99_delay_ns,
        max_delay_ns,
        retunes,
        collisions,
        deadline_misses,
        invariant_violations,
        first_violation,
    })
}

/// Nearest-rank percentile; 0 for an empty sample.
fn percentile(values: &mut [i64], q: f64) -> i64 {
    if values.is_empty() {
        return 0;
    }
    let rank = ((q * values.len() as f64).ceil() as usize).clamp(1, values.len());
    let (_, v, _) = values.select_nth_unstable(rank - 1);
    *v
}

/// Scenario seed for one grid cell: the user-visible seed mixed with the
/// cell coordinates, so no two cells share a traffic stream and adding
/// grid points never perturbs existing ones.
pub fn scenario_seed(
    seed: u64,
    channels: u32,
    channel_rate: BitsPerSec,
    tuning: TimeNs,
    load: f64,
    sla_share: f64,
) -> u64 {
    mix_coords(
        seed,
        &[
            channels as u64,
            channel_rate,
            tuning.ns() as u64,
            (load * 1000.0).round() as u64,
            (sla_share * 1000.0).round() as u64,
        ],
    )
}

/// Cartesian sweep over channel layouts, tuning times, loads, SLA shares
/// and seeds. Every combination becomes one scenario whose RNG seed mixes
/// the sweep seed with the grid coordinates, so scenarios never share
/// traffic by accident.
#[derive(Debug, Clone)]
pub struct SweepGrid {
    /// `(channels, per-channel rate)` layouts.
    pub channel_configs: Vec<(u32, BitsPerSec)>,
    pub tuning_times: Vec<TimeNs>,
    pub loads: Vec<f64>,
    pub sla_shares: Vec<f64>,
    pub seeds: Vec<u64>,
    pub base: ScenarioConfig,
}

/// One grid point, carrying the fully resolved scenario config.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub channels: u32,
    pub channel_rate: BitsPerSec,
    pub tuning: TimeNs,
    pub load: f64,
    pub sla_share: f64,
    pub seed: u64,
    pub config: ScenarioConfig,
}

impl SweepGrid {
    /// The full evaluation grid: three 200G channel layouts, four tuning
    /// classes, three loads, shares from 10% to 100%, five seeds.
    pub fn full_evaluation(base: ScenarioConfig) -> Self {
        SweepGrid {
            channel_configs: vec![
                (8, 25_000_000_000),
                (4, 50_000_000_000),
                (1, 200_000_000_000),
            ],
            tuning_times: [0, 250, 1_000, 15_000].map(TimeNs).to_vec(),
            loads: vec![0.2, 0.5, 0.8],
            sla_shares: (1..=10).map(|s| s as f64 / 10.0).collect(),
            seeds: (1..=5).collect(),
            base,
        }
    }

    /// Grid points in row order: channel layout, tuning, load, share, seed.
    pub fn points(&self) -> Vec<SweepPoint> {
        let mut out = Vec::new();
        for &(channels, channel_rate) in &self.channel_configs {
            for &tuning in &self.tuning_times {
                for &load in &self.loads {
                    for &sla_share in &self.sla_shares {
                        for &seed in &self.seeds {
                            let mut config = self.base.clone();
                            config.channels = channels;
                            config.channel_rate = channel_rate;
                            config.tuning_time = tuning;
                            config.load = load;
                            config.sla_share = sla_share;
                            config.seed =
                                scenario_seed(seed, channels, channel_rate, tuning, load, sla_share);
                            out.push(SweepPoint {
                                channels,
                                channel_rate,
                                tuning,
                                load,
                                sla_share,
                                seed,
                                config,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

/// Runs every grid point, in parallel, preserving row order. Failures are
/// carried per point, never aborting the rest of the sweep.
pub fn run_sweep(
    grid: &SweepGrid,
    opts: RunOptions,
) -> Vec<(SweepPoint, Result<ScenarioResult, SimError>)> {
    grid.points()
        .into_par_iter()
        .map(|p| {
            let r = run_scenario_with(&p.config, opts);
            (p, r)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LoadAccounting, VirtualTimeline};

    fn small(frames: u32) -> ScenarioConfig {
        ScenarioConfig {
            frames,
            load: 0.3,
            timeline: VirtualTimeline::FullCapacity,
            accounting: LoadAccounting::Occupied,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let cfg = small(40);
        let a = run_scenario(&cfg).unwrap();
        let b = run_scenario(&cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn results_have_consistent_counts() {
        let cfg = small(40);
        let r = run_scenario(&cfg).unwrap();
        assert_eq!(r.frames_measured, 32);
        assert!(r.grants > 0);
        assert!(r.sla_grants > 0 && r.sla_grants <= r.grants);
        assert!((0.0..=100.0).contains(&r.compliance_pct));
        assert!(r.mean_delay_ns >= 0.0);
        assert!(r.p99_delay_ns <= r.max_delay_ns);
        assert!(r.invariant_violations == 0 && r.first_violation.is_none());
    }

    #[test]
    fn the_warmup_window_is_not_measured() {
        let cfg = small(8);
        let r = run_scenario(&cfg).unwrap();
        assert_eq!(r.frames_measured, 0);
        assert_eq!(r.grants, 0);
        assert_eq!(r.compliance_pct, 100.0);
        assert_eq!(r.p99_delay_ns, 0);
    }

    #[test]
    fn light_load_schedules_pass_the_checker_on_every_layout() {
        for (channels, rate) in [(8u32, 25_000_000_000u64), (4, 50_000_000_000), (1, 200_000_000_000)] {
            let cfg = ScenarioConfig {
                channels,
                channel_rate: rate,
                ..small(24)
            };
            let r = run_scenario_with(&cfg, RunOptions { check_invariants: true }).unwrap();
            assert_eq!(r.invariant_violations, 0, "{channels} channels: {:?}", r.first_violation);
        }
    }

    #[test]
    fn invariants_hold_with_tuning_costs() {
        let cfg = ScenarioConfig { tuning_time: TimeNs(15_000), ..small(24) };
        let r = run_scenario_with(&cfg, RunOptions { check_invariants: true }).unwrap();
        assert_eq!(r.invariant_violations, 0, "{:?}", r.first_violation);
    }

    #[test]
    fn sweep_rows_keep_grid_order_and_match_single_runs() {
        let grid = SweepGrid {
            channel_configs: vec![(8, 25_000_000_000), (1, 200_000_000_000)],
            tuning_times: vec![TimeNs::ZERO],
            loads: vec![0.2],
            sla_shares: vec![0.5, 1.0],
            seeds: vec![1, 2],
            base: small(16),
        };
        let rows = run_sweep(&grid, RunOptions::default());
        assert_eq!(rows.len(), 8);
        let expect: Vec<(u32, f64, u64)> = vec![
            (8, 0.5, 1), (8, 0.5, 2), (8, 1.0, 1), (8, 1.0, 2),
            (1, 0.5, 1), (1, 0.5, 2), (1, 1.0, 1), (1, 1.0, 2),
        ];
        for ((p, r), (ch, share, seed)) in rows.iter().zip(expect) {
            assert_eq!((p.channels, p.sla_share, p.seed), (ch, share, seed));
            let solo = run_scenario(&p.config).unwrap();
            assert_eq!(r.as_ref().unwrap(), &solo);
        }
    }

    #[test]
    fn grid_points_decorrelate_their_scenario_seeds() {
        let grid = SweepGrid::full_evaluation(small(16));
        let points = grid.points();
        let mut seeds: Vec<u64> = points.iter().map(|p| p.config.seed).collect();
        seeds.sort_unstable();
        seeds.dedup();
        assert_eq!(seeds.len(), points.len());
    }

    #[test]
    fn the_full_grid_has_the_documented_shape() {
        let grid = SweepGrid::full_evaluation(small(16));
        assert_eq!(grid.points().len(), 3 * 4 * 3 * 10 * 5);
    }

    #[test]
    fn an_unservable_load_reports_a_config_error() {
        let cfg = ScenarioConfig { load: 1.2, ..small(16) };
        let err = run_scenario(&cfg).unwrap_err();
        assert!(err.to_string().contains("load exceeds capacity"));
    }
}
