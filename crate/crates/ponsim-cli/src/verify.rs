//! The `verify` subcommand: checks the production scheduler against the
//! exact oracle, cross-checks the oracle against a plain enumeration here
//! in the binary, replays scenarios under the schedule checker, and
//! recounts the SLA tracker's windows from a flat grant log.

use std::process::ExitCode;

use anyhow::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ponsim::oracle::{heuristic_gap, random_instance, solve_exact, DiscreteInstance};
use ponsim::{
    build_flow_population, generate_frame, run_scenario_with, Allocation, FlowProfile,
    LoadAccounting, MergeState, RunOptions, ScenarioConfig, ScheduleChecker, SlaClass, SlaTracker,
    TimeNs, VirtualTimeline, WindowMode,
};

use crate::VerifyArgs;

pub fn cmd_verify(args: &VerifyArgs) -> Result<ExitCode> {
    let checks = [
        oracle_admissibility(args.instances, args.seed),
        oracle_enumeration(args.seed),
        schedule_invariants(args.inject_overlap),
        tracker_recount(args.seed),
    ];
    let mut all_ok = true;
    for check in checks {
        match check {
            Ok(msg) => println!("PASS {msg}"),
            Err(msg) => {
                all_ok = false;
                println!("FAIL {msg}");
            }
        }
    }
    Ok(if all_ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

/// The heuristic may never breach fewer flows than the exact optimum.
fn oracle_admissibility(instances: u64, seed: u64) -> Result<String, String> {
    let mut at_optimum = 0u64;
    for k in 0..instances {
        let inst = random_instance(seed.wrapping_add(k));
        let gap = heuristic_gap(&inst);
        if gap.heuristic.0 < gap.exact.0 {
            return Err(format!(
                "oracle admissibility: instance {k}: heuristic breaches {} flows, below the optimum {}",
                gap.heuristic.0, gap.exact.0
            ));
        }
        if gap.heuristic.0 == gap.exact.0 {
            at_optimum += 1;
        }
    }
    Ok(format!(
        "oracle admissibility: {instances} instances, heuristic at the optimum on {at_optimum}"
    ))
}

/// The exact solver against an independent enumeration of every placement.
fn oracle_enumeration(seed: u64) -> Result<String, String> {
    let mut checked = 0u32;
    let mut draw = 0u64;
    while checked < 20 && draw < 4_000 {
        let inst = random_instance(seed.wrapping_add(0x0e97).wrapping_add(draw));
        draw += 1;
        if inst.allocs.len() > 4 {
            continue;
        }
        let exact = solve_exact(&inst)
            .ok_or_else(|| format!("oracle enumeration: draw {draw}: no exact solution"))?
            .objective;
        let brute = enumerate_best(&inst)
            .ok_or_else(|| format!("oracle enumeration: draw {draw}: no feasible placement"))?;
        if exact != brute {
            return Err(format!(
                "oracle enumeration: draw {draw}: solver found {exact:?}, enumeration {brute:?}"
            ));
        }
        checked += 1;
    }
    Ok(format!(
        "oracle enumeration: {checked} instances of up to 4 allocations match"
    ))
}

/// Best (breached flows, late allocations) over every channel and start
/// assignment. Written against the instance contract only: starts at or
/// after the request, bursts inside the horizon, channels exclusive.
fn enumerate_best(inst: &DiscreteInstance) -> Option<(u32, u32)> {
    fn place(
        inst: &DiscreteInstance,
        i: usize,
        masks: &mut [u32],
        starts: &mut Vec<u32>,
        best: &mut Option<(u32, u32)>,
    ) {
        if i == inst.allocs.len() {
            // (flow, total, late, threshold); the first allocation of a
            // flow fixes its threshold.
            let mut flows: Vec<(u32, u32, u32, f64)> = Vec::new();
            for (a, &s) in inst.allocs.iter().zip(starts.iter()) {
                let late = u32::from(s > a.maxtime);
                match flows.iter_mut().find(|f| f.0 == a.flow) {
                    Some(f) => {
                        f.1 += 1;
                        f.2 += late;
                    }
                    None => flows.push((a.flow, 1, late, a.threshold)),
                }
            }
            let mut objective = (0u32, 0u32);
            for (_, total, late, threshold) in &flows {
                objective.1 += late;
                if *late as f64 / *total as f64 > *threshold {
                    objective.0 += 1;
                }
            }
            if best.map_or(true, |b| objective < b) {
                *best = Some(objective);
            }
            return;
        }
        let a = inst.allocs[i];
        if a.len > inst.horizon {
            return;
        }
        for c in 0..inst.channels as usize {
            for s in a.requested..=(inst.horizon - a.len) {
                let mask = ((1u32 << a.len) - 1) << s;
                if masks[c] & mask != 0 {
                    continue;
                }
                masks[c] |= mask;
                starts.push(s);
                place(inst, i + 1, masks, starts, best);
                starts.pop();
                masks[c] &= !mask;
            }
        }
    }

    let mut best = None;
    let mut masks = vec![0u32; inst.channels as usize];
    place(inst, 0, &mut masks, &mut Vec::new(), &mut best);
    best
}

/// Replays three scenarios with the independent checker on every frame, or
/// corrupts one grant first to prove the checker is actually wired in.
fn schedule_invariants(inject_overlap: bool) -> Result<String, String> {
    if inject_overlap {
        return injected_overlap();
    }
    let cases: [(u32, u64, f64, f64); 3] =
        [(8, 25, 0.5, 0.5), (4, 50, 0.8, 0.8), (1, 200, 0.8, 1.0)];
    for (channels, rate, load, share) in cases {
        let cfg = ScenarioConfig {
            channels,
            channel_rate: rate * 1_000_000_000,
            load,
            sla_share: share,
            frames: 64,
            seed: 11,
            timeline: VirtualTimeline::FullCapacity,
            accounting: LoadAccounting::Occupied,
            ..ScenarioConfig::default()
        };
        let r = run_scenario_with(&cfg, RunOptions { check_invariants: true })
            .map_err(|e| format!("schedule invariants: {channels}x{rate}: {e}"))?;
        if r.invariant_violations > 0 {
            return Err(format!(
                "schedule invariants: {channels}x{rate} load {load} share {share}: {}",
                r.first_violation.unwrap_or_default()
            ));
        }
    }
    Ok("schedule invariants: 3 scenarios, 64 frames each, no violations".into())
}

fn injected_overlap() -> Result<String, String> {
    let cfg = ScenarioConfig {
        channels: 2,
        load: 0.3,
        frames: 1,
        timeline: VirtualTimeline::FullCapacity,
        accounting: LoadAccounting::Occupied,
        ..ScenarioConfig::default()
    };
    let fail = |e: String| format!("schedule invariants (inject setup): {e}");
    let flows = build_flow_population(&cfg).map_err(|e| fail(e.to_string()))?;
    let maps = generate_frame(&flows, 0, &cfg).map_err(|e| fail(e.to_string()))?;
    let tracker = SlaTracker::new(&flows, cfg.window_frames, cfg.window_mode);
    let mut merge = MergeState::new(&cfg);
    let mut grants = merge.merge_frame(&maps, 0, &tracker).grants;
    let all: Vec<&Allocation> = maps.iter().flat_map(|m| &m.allocations).collect();
    if grants.len() < 2 {
        return Err(fail("need at least two grants to overlap".into()));
    }

    // Drop the earliest-requested grant onto the latest burst: same channel,
    // same start. The victim's requested time bounds the new start from
    // below, so the only broken rule is channel exclusivity.
    let target = (0..grants.len())
        .max_by_key(|&i| (grants[i].scheduled_start, grants[i].alloc_id))
        .unwrap();
    let victim = (0..grants.len())
        .filter(|&i| i != target)
        .min_by_key(|&i| (all[i].requested_start, all[i].id))
        .unwrap();
    grants[victim].scheduled_start = grants[target].scheduled_start;
    grants[victim].channel = grants[target].channel;
    grants[victim].receiver = grants[target].receiver;

    let mut checker = ScheduleChecker::new(&cfg);
    match checker.check_frame(&all, &grants, 0) {
        Err(e) => Err(format!("schedule invariants (injected overlap): {e}")),
        Ok(()) => Err("schedule invariants: injected overlap was not detected".into()),
    }
}

/// The tracker's windowed rates against a recount from a flat log of every
/// recorded grant.
fn tracker_recount(seed: u64) -> Result<String, String> {
    const STREAMS: u64 = 50;
    const FRAMES: u64 = 40;
    const WINDOW: u32 = 8;
    let profiles: Vec<FlowProfile> = (0..4)
        .map(|f| FlowProfile {
            flow: f,
            vno: 0,
            onu: f,
            sla: Some(if f % 2 == 0 { SlaClass::GOLD } else { SlaClass::SILVER }),
            weight: 1.0,
        })
        .collect();
    for stream in 0..STREAMS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9).wrapping_add(stream));
        let mut tracker = SlaTracker::new(&profiles, WINDOW, WindowMode::Sliding);
        let mut log: Vec<(u64, u32, bool)> = Vec::new();
        for frame in 0..FRAMES {
            for p in &profiles {
                for _ in 0..rng.gen_range(0..4) {
                    let delay = TimeNs(rng.gen_range(0..26_000));
                    log.push((frame, p.flow, delay > p.sla.unwrap().latency_target));
                    tracker.record_grant(p.flow, delay, frame);
                }
            }
            tracker.recompute_rates(frame);
            for p in &profiles {
                let mut late = 0u64;
                let mut total = 0u64;
                for &(f, flow, breach) in &log {
                    if flow == p.flow && frame - f < WINDOW as u64 {
                        total += 1;
                        late += breach as u64;
                    }
                }
                let want = if total == 0 { 0.0 } else { late as f64 / total as f64 };
                let got = tracker.non_compliance_rate(p.flow);
                if got.to_bits() != want.to_bits() {
                    return Err(format!(
                        "tracker recount: stream {stream} frame {frame} flow {}: tracker {got}, recount {want}",
                        p.flow
                    ));
                }
            }
        }
    }
    Ok(format!("tracker recount: {STREAMS} random grant streams match exactly"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumeration_scores_a_forced_late_instance() {
        use ponsim::oracle::DiscreteAlloc;
        // Two same-flow allocations on one channel, horizon 4: one of the
        // 2-slot bursts must start at slot 2, past maxtime 1, so the best
        // objective is one late allocation; 1/2 late stays under the 0.6
        // threshold, so no flow breach.
        let inst = DiscreteInstance {
            channels: 1,
            horizon: 4,
            allocs: vec![
                DiscreteAlloc { requested: 0, len: 2, maxtime: 1, flow: 0, threshold: 0.6 },
                DiscreteAlloc { requested: 0, len: 2, maxtime: 1, flow: 0, threshold: 0.6 },
            ],
        };
        assert_eq!(enumerate_best(&inst), Some((0, 1)));
        // A tighter threshold turns the same lateness into a flow breach.
        let mut breached = inst.clone();
        for a in &mut breached.allocs {
            a.threshold = 0.4;
        }
        assert_eq!(enumerate_best(&breached), Some((1, 1)));
    }

    #[test]
    fn enumeration_agrees_with_the_solver_on_small_draws() {
        let mut checked = 0;
        for k in 0..400u64 {
            let inst = random_instance(70_000 + k);
            if inst.allocs.len() > 3 {
                continue;
            }
            let exact = solve_exact(&inst).unwrap().objective;
            assert_eq!(enumerate_best(&inst), Some(exact), "draw {k}");
            checked += 1;
            if checked == 10 {
                break;
            }
        }
        assert_eq!(checked, 10);
    }

    #[test]
    fn injected_overlap_is_reported_as_channel_exclusivity() {
        let err = injected_overlap().unwrap_err();
        assert!(err.contains("channel exclusivity violated"), "{err}");
    }

    #[test]
    fn tracker_recount_matches_on_default_seed() {
        assert!(tracker_recount(1).is_ok());
    }
}
