//! Exact reference solver for small discrete scheduling instances.
//!
//! Instances live on a slotted time axis (horizon of at most 32 slots, at
//! most a few allocations) so optimal schedules can be found by exhaustive
//! search. The objective is lexicographic: first the number of flows pushed
//! over their lateness threshold, then the number of late allocations. The
//! production scheduler can be run on the same instance through a direct
//! slot-to-nanosecond mapping, which bounds its optimality gap.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::merge::MergeState;
use crate::model::{Allocation, ScenarioConfig, SlaClass, VirtualBmap};
use crate::sla::SlaTracker;
use crate::time::TimeNs;
use crate::traffic::{mix_coords, FlowProfile};

/// One slot equals one guarded reference burst: 7,500 ns of payload at
/// 25 Gbit/s plus the 330 ns guard.
pub const SLOT_NS: i64 = 7_830;
const SLOT_RATE: u64 = 25_000_000_000;

/// One allocation on the slotted axis. `maxtime` is the latest start slot
/// that still counts as on time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscreteAlloc {
    pub requested: u32,
    pub len: u32,
    pub maxtime: u32,
    pub flow: u32,
    /// On-time fraction may drop to `1 - threshold` before the flow counts
    /// as breached: late/total must exceed it.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteInstance {
    pub channels: u32,
    /// Number of slots; starts occupy `[start, start + len)` within it.
    pub horizon: u32,
    pub allocs: Vec<DiscreteAlloc>,
}

/// Lexicographic objective: (breached flows, late allocations).
pub type Objective = (u32, u32);

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub objective: Objective,
    /// `(channel, start)` per allocation, in instance order.
    pub placements: Vec<(u32, u32)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapReport {
    pub exact: Objective,
    pub heuristic: Objective,
    pub heuristic_placements: Vec<(u32, u32)>,
}

impl DiscreteInstance {
    pub fn validate(&self) -> Result<(), String> {
        if self.channels == 0 {
            return Err("instance needs at least one channel".into());
        }
        if self.horizon == 0 || self.horizon > 32 {
            return Err(format!("horizon {} outside 1..=32", self.horizon));
        }
        for (i, a) in self.allocs.iter().enumerate() {
            if a.len == 0 {
                return Err(format!("alloc {i} has zero length"));
            }
            if a.requested + a.len > self.horizon {
                return Err(format!("alloc {i} cannot fit after its requested slot"));
            }
            if a.maxtime < a.requested {
                return Err(format!("alloc {i} is late before it can start"));
            }
            if !(0.0..1.0).contains(&a.threshold) {
                return Err(format!("alloc {i} threshold outside [0, 1)"));
            }
        }
        Ok(())
    }

    /// Allocation counts per flow, shared by every objective computation.
    fn flow_totals(&self) -> Vec<(u32, u32, f64)> {
        let mut flows: Vec<(u32, u32, f64)> = Vec::new();
        for a in &self.allocs {
            match flows.iter_mut().find(|(f, ..)| *f == a.flow) {
                Some((_, n, _)) => *n += 1,
                None => flows.push((a.flow, 1, a.threshold)),
            }
        }
        flows
    }
}

/// Scores a full placement. Fails on any overlap, out-of-range start, or
/// start before the requested slot.
pub fn objective_of(
    inst: &DiscreteInstance,
    placements: &[(u32, u32)],
) -> Result<Objective, String> {
    if placements.len() != inst.allocs.len() {
        return Err("placement count mismatch".into());
    }
    let mut masks = vec![0u32; inst.channels as usize];
    let flows = inst.flow_totals();
    let mut late = vec![0u32; flows.len()];
    for (i, (a, &(c, s))) in inst.allocs.iter().zip(placements).enumerate() {
        if c >= inst.channels {
            return Err(format!("alloc {i} on channel {c}"));
        }
        if s < a.requested || s + a.len > inst.horizon {
            return Err(format!("alloc {i} start {s} out of range"));
        }
        let mask = ((1u32 << a.len) - 1) << s;
        if masks[c as usize] & mask != 0 {
            return Err(format!("alloc {i} overlaps on channel {c}"));
        }
        masks[c as usize] |= mask;
        if s > a.maxtime {
            let f = flows.iter().position(|(f, ..)| *f == a.flow).unwrap();
            late[f] += 1;
        }
    }
    Ok(score(&flows, &late))
}

/// Breach rule shared with the SLA tracker: late/total strictly above the
/// threshold.
fn score(flows: &[(u32, u32, f64)], late: &[u32]) -> Objective {
    let mut breached = 0;
    let mut lates = 0;
    for ((_, total, threshold), &l) in flows.iter().zip(late) {
        lates += l;
        if l as f64 / *total as f64 > *threshold {
            breached += 1;
        }
    }
    (breached, lates)
}

struct Solver<'a> {
    inst: &'a DiscreteInstance,
    flows: Vec<(u32, u32, f64)>,
    flow_of: Vec<usize>,
    best: Option<Solution>,
}

impl Solver<'_> {
    fn best_objective(&self) -> Objective {
        self.best.as_ref().map_or((u32::MAX, u32::MAX), |s| s.objective)
    }

    fn dfs(
        &mut self,
        depth: usize,
        masks: &mut Vec<u32>,
        late: &mut Vec<u32>,
        placements: &mut Vec<(u32, u32)>,
    ) {
        // Already-committed lateness can only grow deeper in the tree.
        if score(&self.flows, late) >= self.best_objective() {
            return;
        }
        if depth == self.inst.allocs.len() {
            self.best = Some(Solution {
                objective: score(&self.flows, late),
                placements: placements.clone(),
            });
            return;
        }
        let a = self.inst.allocs[depth];
        let mask_of = |s: u32| ((1u32 << a.len) - 1) << s;
        for c in 0..self.inst.channels as usize {
            // Channels with identical occupancy are interchangeable; trying
            // the first of each kind covers all schedules up to relabeling.
            if masks[..c].contains(&masks[c]) {
                continue;
            }
            for s in a.requested..=self.inst.horizon - a.len {
                if masks[c] & mask_of(s) != 0 {
                    continue;
                }
                masks[c] |= mask_of(s);
                late[self.flow_of[depth]] += u32::from(s > a.maxtime);
                placements.push((c as u32, s));
                self.dfs(depth + 1, masks, late, placements);
                placements.pop();
                late[self.flow_of[depth]] -= u32::from(s > a.maxtime);
                masks[c] &= !mask_of(s);
            }
        }
    }
}

/// Finds a lexicographically optimal schedule, or `None` when the instance
/// admits no feasible placement.
pub fn solve_exact(inst: &DiscreteInstance) -> Option<Solution> {
    inst.validate().expect("invalid instance");
    let flows = inst.flow_totals();
    let flow_of = inst
        .allocs
        .iter()
        .map(|a| flows.iter().position(|(f, ..)| *f == a.flow).unwrap())
        .collect();
    let mut solver = Solver { inst, flows, flow_of, best: None };
    let mut masks = vec![0u32; inst.channels as usize];
    let mut late = vec![0u32; solver.flows.len()];
    let mut placements = Vec::with_capacity(inst.allocs.len());
    solver.dfs(0, &mut masks, &mut late, &mut placements);
    solver.best
}

/// Runs the production merge on a discrete instance by mapping slots onto
/// the nanosecond axis: every allocation becomes one guarded 25G burst of
/// `len` slots from its own single-burst ONU.
pub fn heuristic_schedule(inst: &DiscreteInstance) -> Result<Vec<(u32, u32)>, String> {
    inst.validate()?;
    let n = inst.allocs.len() as u32;
    let cfg = ScenarioConfig {
        channels: inst.channels,
        channel_rate: SLOT_RATE,
        tuning_time: TimeNs::ZERO,
        vno_count: 1,
        onus_per_vno: n.max(1),
        flows_per_onu: 1,
        ..ScenarioConfig::default()
    };

    let allocations: Vec<Allocation> = inst
        .allocs
        .iter()
        .enumerate()
        .map(|(i, a)| Allocation {
            id: i as u64,
            vno: 0,
            onu: i as u32,
            flow: a.flow,
            requested_start: TimeNs(a.requested as i64 * SLOT_NS),
            payload_bits: (a.len as u64 * SLOT_NS as u64 - 330) * 25,
            sla: Some(SlaClass {
                latency_target: TimeNs((a.maxtime - a.requested) as i64 * SLOT_NS),
                compliance_pct: (1.0 - a.threshold) * 100.0,
            }),
        })
        .collect();
    let profiles: Vec<FlowProfile> = inst
        .flow_totals()
        .iter()
        .map(|&(flow, _, threshold)| FlowProfile {
            flow,
            vno: 0,
            onu: 0,
            sla: Some(SlaClass {
                latency_target: TimeNs(SLOT_NS),
                compliance_pct: (1.0 - threshold) * 100.0,
            }),
            weight: 1.0,
        })
        .collect();

    let tracker = SlaTracker::new(&profiles, cfg.window_frames, cfg.window_mode);
    let mut st = MergeState::new(&cfg);
    let maps = vec![VirtualBmap { vno: 0, frame: 0, allocations }];
    let out = st.merge_frame(&maps, 0, &tracker);

    out.grants
        .iter()
        .map(|g| {
            let ns = g.scheduled_start.ns();
            if ns % SLOT_NS != 0 {
                return Err(format!("grant start {ns} off the slot grid"));
            }
            Ok((g.channel, (ns / SLOT_NS) as u32))
        })
        .collect()
}

/// Solves an instance both ways and scores the production schedule against
/// the optimum.
pub fn heuristic_gap(inst: &DiscreteInstance) -> GapReport {
    let exact = solve_exact(inst).expect("admissible instance").objective;
    let placements = heuristic_schedule(inst).expect("mappable instance");
    let heuristic = objective_of(inst, &placements)
        .expect("the merged schedule must stay feasible within the horizon");
    GapReport { exact, heuristic, heuristic_placements: placements }
}

/// Draws a random admissible instance: 1..=3 channels, at most 8
/// allocations of 1..=3 slots, and a horizon sized so that even a fully
/// serialized schedule fits.
pub fn random_instance(seed: u64) -> DiscreteInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_coords(seed, &[0x6f72_6163_6c65]));
    let channels = rng.gen_range(1..=3u32);
    let request_span = rng.gen_range(4..=8u32);
    let budget = 16 - request_span;
    let count = rng.gen_range(2..=budget.min(8));

    let mut lens = Vec::with_capacity(count as usize);
    let mut left = budget;
    for i in 0..count {
        let reserve = count - i - 1;
        let len = rng.gen_range(1..=(left - reserve).min(3));
        lens.push(len);
        left -= len;
    }
    let total_len: u32 = lens.iter().sum();
    let horizon = request_span + total_len;

    let thresholds: Vec<f64> = (0..count)
        .map(|_| [0.0, 0.25, 0.34, 0.5][rng.gen_range(0..4usize)])
        .collect();
    let allocs = lens
        .iter()
        .map(|&len| {
            let requested = rng.gen_range(0..request_span);
            let slack = rng.gen_range(0..=3u32);
            let flow = rng.gen_range(1..=count);
            DiscreteAlloc {
                requested,
                len,
                maxtime: (requested + slack).min(horizon - len),
                flow,
                threshold: thresholds[(flow - 1) as usize],
            }
        })
        .collect();
    DiscreteInstance { channels, horizon, allocs }
}
