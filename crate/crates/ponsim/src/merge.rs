//! Merging of per-VNO bandwidth maps onto the physical channels.
//!
//! The merge runs once per frame. Requests become eligible at their
//! requested times; whenever transmission capacity frees up, the eligible
//! request with the highest priority is placed next. Priority is the
//! collision order: SLA traffic before best-effort, flows closest to
//! breaching their SLA first. Uncontended requests therefore keep their
//! requested times exactly, while contention resolves in priority order:
//! best-effort requests absorb the displacement (they may slide toward the
//! scheduling horizon) so SLA latency is governed by SLA-on-SLA congestion.
//! No request is ever dropped and none is moved earlier than its requested
//! time.
//!
//! When the winning request cannot start yet (its transceiver is busy or it
//! was requested later), eligible requests from other ONUs that finish
//! before that start are committed in front of it. Such a fill grant ends
//! at or before the winner's start on every table it touches, so the
//! winner's placement is the one previewed before any fill: channel time
//! that would otherwise sit idle is used without delaying anyone ahead.
//!
//! All availability tables carry absolute times and persist across frames,
//! so a burst that runs past the frame boundary delays the next frame's
//! grants on that channel.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use crate::model::{
    Allocation, ChannelId, PhysicalGrant, ScenarioConfig, SortPolicy, VirtualBmap,
};
use crate::sla::SlaTracker;
use crate::time::{BitsPerSec, TimeNs};

#[derive(Debug, Clone, Copy)]
struct Transceiver {
    free_at: TimeNs,
    /// Channel the laser is currently tuned to; `None` until first use.
    channel: Option<ChannelId>,
}

/// One placement decision, not yet committed to the tables.
#[derive(Debug, Clone, Copy)]
struct Placement {
    tx_idx: usize,
    channel: usize,
    sched: TimeNs,
    tuned: bool,
}

/// Persistent scheduler state: availability tables for channels, receivers
/// and per-ONU transceivers.
#[derive(Debug, Clone)]
pub struct MergeState {
    channel_rate: BitsPerSec,
    guard: TimeNs,
    tuning: TimeNs,
    frame_duration: TimeNs,
    horizon: TimeNs,
    policy: SortPolicy,
    channels: u32,
    per_onu: u32,
    channel_free: Vec<TimeNs>,
    receiver_free: Vec<TimeNs>,
    /// Indexed `[onu][row]`.
    transceivers: Vec<Vec<Transceiver>>,
}

/// Result of merging one frame. `grants` and `delays` line up with the
/// flattened input order of the bandwidth maps.
#[derive(Debug, Clone, PartialEq)]
pub struct MergeOutcome {
    pub grants: Vec<PhysicalGrant>,
    pub delays: Vec<TimeNs>,
    /// Requests that could not all hold a channel at their requested times
    /// (frame-local capacity probe).
    pub collisions: u32,
    /// Grants whose transceiver had to change channels.
    pub retunes: u32,
    /// Grants scheduled past the owner's latest acceptable start.
    pub deadline_misses: u32,
}

impl MergeState {
    /// State for a scenario with one tunable transceiver per ONU.
    pub fn new(cfg: &ScenarioConfig) -> Self {
        Self::with_transceivers(cfg, 1)
    }

    /// State with `per_onu` transceiver rows per ONU.
    pub fn with_transceivers(cfg: &ScenarioConfig, per_onu: u32) -> Self {
        assert!(per_onu > 0, "each onu needs a transceiver");
        MergeState {
            channel_rate: cfg.channel_rate,
            guard: cfg.guard_time,
            tuning: cfg.tuning_time,
            frame_duration: cfg.frame_duration,
            horizon: cfg.frame_horizon(),
            policy: cfg.sort_policy,
            channels: cfg.channels,
            per_onu,
            channel_free: vec![TimeNs::ZERO; cfg.channels as usize],
            receiver_free: vec![TimeNs::ZERO; cfg.channels as usize],
            transceivers: vec![
                vec![Transceiver { free_at: TimeNs::ZERO, channel: None }; per_onu as usize];
                cfg.onu_count() as usize
            ],
        }
    }

    /// Computes the placement of one request without committing it.
    ///
    /// Transceiver: the earliest-free row of the ONU. Channel: earliest
    /// effective availability `max(channel_free, requested)`, preferring the
    /// row's current channel on ties, then the lowest index. Start: the
    /// latest of the request, the channel, the receiver, and the transceiver
    /// plus the tuning time when the chosen channel differs from the current
    /// one (a first use needs no retune).
    fn place(&self, alloc: &Allocation, requested_abs: TimeNs) -> Placement {
        let rows = &self.transceivers[alloc.onu as usize];
        let tx_idx = rows
            .iter()
            .enumerate()
            .min_by_key(|(i, t)| (t.free_at, *i))
            .map(|(i, _)| i)
            .unwrap();
        let current = rows[tx_idx].channel;

        let mut chosen = 0usize;
        let mut best: Option<(TimeNs, u8, u32)> = None;
        for (c, &free) in self.channel_free.iter().enumerate() {
            let avail = free.max(requested_abs);
            let tie = u8::from(current != Some(c as ChannelId));
            let key = (avail, tie, c as u32);
            if best.map_or(true, |b| key < b) {
                best = Some(key);
                chosen = c;
            }
        }
        let tuned = current.is_some() && current != Some(chosen as ChannelId);

        let tx_ready = if tuned {
            rows[tx_idx].free_at + self.tuning
        } else {
            rows[tx_idx].free_at
        };
        let sched = requested_abs
            .max(self.channel_free[chosen])
            .max(self.receiver_free[chosen])
            .max(tx_ready);
        Placement { tx_idx, channel: chosen, sched, tuned }
    }

    fn commit(&mut self, alloc: &Allocation, p: Placement) -> PhysicalGrant {
        let busy_until = p.sched + alloc.duration_on(self.channel_rate) + self.guard;
        self.channel_free[p.channel] = busy_until;
        self.receiver_free[p.channel] = busy_until;
        let tx = &mut self.transceivers[alloc.onu as usize][p.tx_idx];
        tx.free_at = busy_until;
        tx.channel = Some(p.channel as ChannelId);
        PhysicalGrant {
            alloc_id: alloc.id,
            channel: p.channel as ChannelId,
            scheduled_start: p.sched,
            transceiver: alloc.onu * self.per_onu + p.tx_idx as u32,
            receiver: p.channel as u32,
            tuned: p.tuned,
        }
    }

    /// Places one request at the earliest feasible time at or after
    /// `requested_abs` and commits the availability tables.
    pub fn assign(&mut self, alloc: &Allocation, requested_abs: TimeNs) -> PhysicalGrant {
        let p = self.place(alloc, requested_abs);
        debug_assert!(p.sched >= requested_abs);
        self.commit(alloc, p)
    }

    /// Merges one frame's bandwidth maps into physical grants.
    ///
    /// The tracker is read-only here; it reflects the rates computed at the
    /// end of the previous frame.
    pub fn merge_frame(
        &mut self,
        bmaps: &[VirtualBmap],
        frame: u64,
        tracker: &SlaTracker,
    ) -> MergeOutcome {
        let frame_start = self.frame_duration.times(frame as i64);
        let all: Vec<&Allocation> = bmaps.iter().flat_map(|m| &m.allocations).collect();
        let n = all.len();

        let (_, colliding) =
            detect_collisions(&all, self.channels, self.channel_rate, self.guard);
        let collisions = colliding.len() as u32;

        // Release order: requests become eligible at their requested times.
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| (all[i].requested_start, all[i].id));

        // Eligible requests, best collision key first.
        let mut eligible: BinaryHeap<Reverse<(PriorityKey, usize)>> = BinaryHeap::new();
        let mut next = 0usize;

        let mut grants: Vec<Option<PhysicalGrant>> = vec![None; n];
        let mut delays = vec![TimeNs::ZERO; n];
        let mut retunes = 0u32;
        let mut deadline_misses = 0u32;
        let mut done = 0usize;
        while done < n {
            if eligible.is_empty() {
                let i = order[next];
                next += 1;
                eligible.push(Reverse((
                    priority_key(all[i], tracker, self.horizon, self.policy),
                    i,
                )));
                continue;
            }
            // Settle on the highest-priority request among everything that
            // is eligible by the time its transmission would actually start.
            let (i, placement) = loop {
                let &Reverse((_, i)) = eligible.peek().unwrap();
                let p = self.place(all[i], frame_start + all[i].requested_start);
                let mut grew = false;
                while next < n && frame_start + all[order[next]].requested_start <= p.sched {
                    let k = order[next];
                    next += 1;
                    eligible.push(Reverse((
                        priority_key(all[k], tracker, self.horizon, self.policy),
                        k,
                    )));
                    grew = true;
                }
                if !grew {
                    break (i, p);
                }
            };
            eligible.pop();
            let a = all[i];
            let requested_abs = frame_start + a.requested_start;
            // Fill the wait: eligible requests from other ONUs whose guarded
            // end fits at or before the settled start go first. They leave
            // every table at or below that start and never touch this ONU's
            // rows, so `placement` stays exact; earliest end commits first.
            while !eligible.is_empty() {
                let floor = *self.channel_free.iter().min().unwrap();
                let mut pick: Option<(TimeNs, PriorityKey, usize, Placement)> = None;
                for &Reverse((key, j)) in eligible.iter() {
                    let q = all[j];
                    if q.onu == a.onu {
                        continue;
                    }
                    let q_req = frame_start + q.requested_start;
                    let tail = q.duration_on(self.channel_rate) + self.guard;
                    if q_req.max(floor) + tail > placement.sched {
                        continue;
                    }
                    let p = self.place(q, q_req);
                    let end = p.sched + tail;
                    if end > placement.sched {
                        continue;
                    }
                    if pick.map_or(true, |(e, k, jj, _)| (end, key, j) < (e, k, jj)) {
                        pick = Some((end, key, j, p));
                    }
                }
                let Some((_, _, j, p)) = pick else { break };
                eligible.retain(|&Reverse((_, jj))| jj != j);
                let q = all[j];
                let g = self.commit(q, p);
                delays[j] = g.scheduled_start - (frame_start + q.requested_start);
                retunes += u32::from(g.tuned);
                if g.scheduled_start > frame_start + q.maxtime(self.horizon) {
                    deadline_misses += 1;
                }
                grants[j] = Some(g);
                done += 1;
            }
            let g = self.commit(a, placement);
            delays[i] = g.scheduled_start - requested_abs;
            retunes += u32::from(g.tuned);
            if g.scheduled_start > frame_start + a.maxtime(self.horizon) {
                deadline_misses += 1;
            }
            grants[i] = Some(g);
            done += 1;
        }

        MergeOutcome {
            grants: grants.into_iter().map(|g| g.unwrap()).collect(),
            delays,
            collisions,
            retunes,
            deadline_misses,
        }
    }
}

/// Splits the requests of one frame into a set that fits at its requested
/// times on the available channels and the colliding remainder.
///
/// Requests are swept in `(requested_start, id)` order over an idealized
/// frame-local view: channels start free and each accepted request occupies
/// one until its guarded end. A request finding no channel free at its
/// requested time joins the colliding set and occupies nothing.
///
/// Returns indices into `allocations`: the clear set in sweep order, then
/// the colliding set in sweep order.
pub fn detect_collisions(
    allocations: &[&Allocation],
    channels: u32,
    rate: BitsPerSec,
    guard: TimeNs,
) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..allocations.len()).collect();
    order.sort_by_key(|&i| (allocations[i].requested_start, allocations[i].id));

    // Min-heap of guarded end times of the occupied channels.
    let mut ends: BinaryHeap<Reverse<i64>> = (0..channels).map(|_| Reverse(0i64)).collect();
    let mut clear = Vec::with_capacity(order.len());
    let mut colliding = Vec::new();
    for i in order {
        let a = allocations[i];
        let req = a.requested_start.ns();
        match ends.peek() {
            Some(&Reverse(end)) if end <= req => {
                ends.pop();
                ends.push(Reverse(req + a.duration_on(rate).ns() + guard.ns()));
                clear.push(i);
            }
            _ => colliding.push(i),
        }
    }
    (clear, colliding)
}

/// Heap-friendly form of the collision order, smaller sorts first.
type PriorityKey = (bool, u64, i64, u64, u64);

/// Maps a float to bits whose unsigned order matches `f64::total_cmp`.
fn total_order_bits(x: f64) -> u64 {
    let b = x.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}

fn priority_key(
    a: &Allocation,
    tracker: &SlaTracker,
    horizon: TimeNs,
    policy: SortPolicy,
) -> PriorityKey {
    let metric = match policy {
        SortPolicy::BreachMargin => tracker.margin(a.flow),
        SortPolicy::RateAscending => tracker.non_compliance_rate(a.flow),
    };
    (
        a.sla.is_none(),
        total_order_bits(metric),
        a.maxtime(horizon).ns(),
        a.payload_bits,
        a.id,
    )
}

/// Priority order for contending requests: SLA traffic before best-effort,
/// then by the configured policy (flows nearest their breach threshold
/// first, or lowest current non-compliance rate first), then the earlier
/// latest-acceptable start, the smaller payload, and finally the id.
pub fn collision_cmp(
    a: &Allocation,
    b: &Allocation,
    tracker: &SlaTracker,
    horizon: TimeNs,
    policy: SortPolicy,
) -> Ordering {
    priority_key(a, tracker, horizon, policy).cmp(&priority_key(b, tracker, horizon, policy))
}
