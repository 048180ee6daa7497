//! Per-VNO bandwidth-map generation.
//!
//! Every frame, each VNO requests a set of bursts whose sizes are drawn
//! uniformly around a rate-independent mean and whose start times are spread
//! uniformly over the VNO's own virtual timeline. The timeline is planned in
//! lanes (one for the whole VNO, or one per ONU, depending on the configured
//! timeline mode); within a lane, bursts are guard-separated at their
//! physical transmission time, so every map is a schedule the VNO could run
//! if it were alone on the PON. The generator targets a configured fraction
//! of total upstream capacity and splits it across VNOs by weight.
//!
//! Randomness is drawn from an independent stream per (seed, VNO, frame), so
//! a frame's maps can be regenerated in isolation and the simulation is
//! deterministic under any execution order.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{
    Allocation, LoadAccounting, ScenarioConfig, SlaClass, VirtualBmap, VirtualTimeline, FlowId,
    VnoId,
};
use crate::time::{transmission_time, TimeNs};

/// Static description of one traffic flow.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowProfile {
    pub flow: FlowId,
    pub vno: VnoId,
    pub onu: u32,
    /// `None` marks best-effort.
    pub sla: Option<SlaClass>,
    /// Relative share of the VNO's load carried by this flow.
    pub weight: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum TrafficError {
    #[error("sla share out of range: {0} (expected [0, 1])")]
    ShareOutOfRange(f64),
    #[error("requested load does not fit on the virtual timeline of vno {vno}: needs {needed} of {frame}")]
    LoadDoesNotFit { vno: VnoId, needed: TimeNs, frame: TimeNs },
}

/// SplitMix64 step; stable across platforms and releases.
pub(crate) fn mix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Combines a seed with coordinate values into a fresh stream seed.
pub(crate) fn mix_coords(base: u64, coords: &[u64]) -> u64 {
    let mut h = mix64(base);
    for &c in coords {
        h = mix64(h ^ c);
    }
    h
}

/// Independent random stream for one (seed, VNO, frame) triple.
pub fn frame_rng(seed: u64, vno: VnoId, frame: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_coords(seed, &[vno as u64, frame]))
}

/// Builds the flow population for a scenario.
///
/// SLA status is assigned so the SLA flows carry `sla_share` of the total
/// weight (to one-flow granularity), spread as evenly as possible across
/// VNOs, and the SLA flows alternate between the two service classes.
pub fn build_flow_population(cfg: &ScenarioConfig) -> Result<Vec<FlowProfile>, TrafficError> {
    if !(0.0..=1.0).contains(&cfg.sla_share) {
        return Err(TrafficError::ShareOutOfRange(cfg.sla_share));
    }
    let per_vno = (cfg.onus_per_vno * cfg.flows_per_onu) as u64;
    let total = per_vno * cfg.vno_count as u64;
    let target_sla = (cfg.sla_share * total as f64).round() as u64;

    // Even spread: every VNO gets the base count, the remainder goes to the
    // lowest VNO indices.
    let base = target_sla / cfg.vno_count as u64;
    let rem = target_sla % cfg.vno_count as u64;

    let mut flows = Vec::with_capacity(total as usize);
    let mut class_toggle = 0u64;
    for vno in 0..cfg.vno_count {
        let sla_here = base + u64::from((vno as u64) < rem);
        let mut assigned = 0u64;
        for onu_local in 0..cfg.onus_per_vno {
            let onu = vno * cfg.onus_per_vno + onu_local;
            for k in 0..cfg.flows_per_onu {
                let flow = onu * cfg.flows_per_onu + k;
                let sla = if assigned < sla_here {
                    assigned += 1;
                    let class = if class_toggle % 2 == 0 { SlaClass::GOLD } else { SlaClass::SILVER };
                    class_toggle += 1;
                    Some(class)
                } else {
                    None
                };
                flows.push(FlowProfile { flow, vno, onu, sla, weight: 1.0 });
            }
        }
    }
    Ok(flows)
}

/// Per-VNO share of the load budget, in cost bits (see `LoadAccounting`).
fn vno_budget_bits(cfg: &ScenarioConfig, vno: VnoId) -> u64 {
    let weight_sum: f64 = if cfg.vno_weights.is_empty() {
        cfg.vno_count as f64
    } else {
        cfg.vno_weights.iter().sum()
    };
    let weight = if cfg.vno_weights.is_empty() { 1.0 } else { cfg.vno_weights[vno as usize] };
    let frame_bits = cfg.total_capacity() as f64 * cfg.frame_duration.ns() as f64 / 1e9;
    (cfg.load * frame_bits * weight / weight_sum).round() as u64
}

/// Wire cost of one burst against the load budget.
fn burst_cost(cfg: &ScenarioConfig, payload_bits: u64) -> u64 {
    match cfg.accounting {
        LoadAccounting::Payload => payload_bits,
        LoadAccounting::Occupied => {
            let guard_bits =
                (cfg.guard_time.ns() as u128 * cfg.reference_rate() as u128 / 1_000_000_000) as u64;
            payload_bits + guard_bits
        }
    }
}

/// Generates the virtual bandwidth maps of all VNOs for one frame.
///
/// Each VNO's realized cost lands within one burst of its budget (the final
/// burst is kept only when that gets closer to the target). Fails when the
/// requested load cannot fit on the VNO's virtual timeline once guard gaps
/// are accounted for.
pub fn generate_frame(
    flows: &[FlowProfile],
    frame: u64,
    cfg: &ScenarioConfig,
) -> Result<Vec<VirtualBmap>, TrafficError> {
    let mean = cfg.mean_burst_bits();
    let (spread_lo, spread_hi) = cfg.burst_spread;
    let lo = (spread_lo * mean as f64).max(1.0);
    let hi = (spread_hi * mean as f64).max(lo);
    let reference_rate = cfg.reference_rate();

    let mut maps = Vec::with_capacity(cfg.vno_count as usize);
    for vno in 0..cfg.vno_count {
        let mut rng = frame_rng(cfg.seed, vno, frame);
        let budget = vno_budget_bits(cfg, vno);

        // Draw burst sizes until the accumulated cost is as close to the
        // budget as a single burst allows.
        let mut sizes: Vec<u64> = Vec::new();
        let mut acc = 0u64;
        while acc < budget {
            let size = rng.gen_range(lo..=hi).round() as u64;
            let cost = burst_cost(cfg, size);
            let overshoot = (acc + cost).saturating_sub(budget);
            if overshoot > budget - acc {
                break;
            }
            sizes.push(size);
            acc += cost;
        }

        // Attribute each burst to a flow, weighted by the flow's share. On a
        // full-capacity timeline the owner also decides the burst's planning
        // lane, and a lane is never filled past the frame: candidates whose
        // ONU has no room left are excluded from the draw, and when no lane
        // can take the burst the remainder of the frame's draw is dropped
        // before it is ever requested.
        let vno_flows: Vec<&FlowProfile> = flows.iter().filter(|f| f.vno == vno).collect();
        assert!(!vno_flows.is_empty(), "vno {vno} has no flows");
        let mut durations: Vec<TimeNs> =
            sizes.iter().map(|&b| transmission_time(b, reference_rate)).collect();
        let guard = cfg.guard_time.ns();
        let mut owners: Vec<&FlowProfile> = Vec::with_capacity(sizes.len());
        match cfg.timeline {
            VirtualTimeline::SingleChannel => {
                let total_weight: f64 = vno_flows.iter().map(|f| f.weight).sum();
                for _ in 0..sizes.len() {
                    let mut r = rng.gen_range(0.0..total_weight);
                    let mut pick = *vno_flows.last().unwrap();
                    for f in &vno_flows {
                        if r < f.weight {
                            pick = *f;
                            break;
                        }
                        r -= f.weight;
                    }
                    owners.push(pick);
                }
            }
            VirtualTimeline::FullCapacity => {
                // A lane keeps one mean burst of slack: an ONU scheduled
                // wall to wall has no room to absorb the displacement the
                // merge may impose, and falls behind its own next frame.
                let reserve =
                    transmission_time(mean, reference_rate).ns() + guard;
                let cap = cfg.frame_duration.ns() - reserve;
                let mut lane_span = vec![0i64; cfg.onus_per_vno as usize];
                for (i, dur) in durations.iter().enumerate() {
                    let fits = |f: &&&FlowProfile| {
                        let used = lane_span[(f.onu % cfg.onus_per_vno) as usize];
                        let sep = if used == 0 { 0 } else { guard };
                        used + sep + dur.ns() <= cap
                    };
                    let open: Vec<&&FlowProfile> = vno_flows.iter().filter(fits).collect();
                    let total_weight: f64 = open.iter().map(|f| f.weight).sum();
                    if open.is_empty() || total_weight <= 0.0 {
                        durations.truncate(i);
                        break;
                    }
                    let mut r = rng.gen_range(0.0..total_weight);
                    let mut pick = **open.last().unwrap();
                    for f in &open {
                        if r < f.weight {
                            pick = **f;
                            break;
                        }
                        r -= f.weight;
                    }
                    let lane = &mut lane_span[(pick.onu % cfg.onus_per_vno) as usize];
                    *lane += if *lane == 0 { 0 } else { guard } + dur.ns();
                    owners.push(pick);
                }
            }
        }
        let n = owners.len();

        // Spread the bursts over the virtual timeline. Each planning lane is
        // a guard-separated chain padded with uniformly drawn gaps from its
        // leftover slack. A single-channel timeline plans the whole map as
        // one lane; a full-capacity timeline gives every ONU its own lane,
        // so different ONUs may overlap in time while one ONU's bursts are
        // always spaced by their physical transmission time.
        let lanes: Vec<Vec<usize>> = match cfg.timeline {
            VirtualTimeline::SingleChannel => vec![(0..n).collect()],
            VirtualTimeline::FullCapacity => {
                let mut by_onu: Vec<(u32, Vec<usize>)> = Vec::new();
                for (i, owner) in owners.iter().enumerate() {
                    match by_onu.iter_mut().find(|(o, _)| *o == owner.onu) {
                        Some((_, lane)) => lane.push(i),
                        None => by_onu.push((owner.onu, vec![i])),
                    }
                }
                by_onu.sort_by_key(|(onu, _)| *onu);
                by_onu.into_iter().map(|(_, lane)| lane).collect()
            }
        };

        let mut starts = vec![0i64; n];
        for lane in &lanes {
            let span: i64 = lane.iter().map(|&i| durations[i].ns()).sum::<i64>()
                + guard * (lane.len() as i64 - 1).max(0);
            let slack = cfg.frame_duration.ns() - span;
            if slack < 0 {
                return Err(TrafficError::LoadDoesNotFit {
                    vno,
                    needed: TimeNs(span),
                    frame: cfg.frame_duration,
                });
            }
            let mut offsets: Vec<f64> =
                (0..lane.len()).map(|_| rng.gen_range(0.0..=1.0)).collect();
            offsets.sort_by(|a, b| a.total_cmp(b));
            let mut chain = 0i64;
            for (k, &i) in lane.iter().enumerate() {
                starts[i] = (offsets[k] * slack as f64).floor() as i64 + chain;
                chain += durations[i].ns() + guard;
            }
        }

        let mut allocations = Vec::with_capacity(n);
        for i in 0..n {
            let owner = owners[i];
            assert!(vno < 1 << 8 && i < 1 << 16, "allocation id fields overflow");
            allocations.push(Allocation {
                id: (frame << 24) | ((vno as u64) << 16) | i as u64,
                vno,
                onu: owner.onu,
                flow: owner.flow,
                requested_start: TimeNs(starts[i]),
                payload_bits: sizes[i],
                sla: owner.sla,
            });
        }
        debug_assert!(allocations
            .iter()
            .all(|a| a.requested_start >= TimeNs::ZERO && a.requested_start < cfg.frame_duration));

        maps.push(VirtualBmap { vno, frame, allocations });
    }
    Ok(maps)
}
