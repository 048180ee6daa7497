//! Independent verification of merged schedules.
//!
//! The checker re-derives every constraint from the grants themselves. It
//! shares no state with the scheduler, so a scheduling bug cannot hide by
//! corrupting the tables it is checked against. State carried across
//! `check_frame` calls is only what physics carries across frames: busy
//! windows that spill over the frame boundary and the channel each laser
//! was last tuned to.

use std::collections::HashSet;

use thiserror::Error;

use crate::model::{Allocation, ChannelId, PhysicalGrant, ScenarioConfig};
use crate::time::{BitsPerSec, TimeNs};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("grant conservation violated: {0}")]
    Conservation(String),
    #[error("grant starts before its request: alloc {alloc} scheduled {sched} requested {requested}")]
    EarlyStart { alloc: u64, sched: TimeNs, requested: TimeNs },
    #[error("channel exclusivity violated: {0}")]
    Channel(String),
    #[error("receiver exclusivity violated: {0}")]
    Receiver(String),
    #[error("transceiver constraint violated: {0}")]
    Transceiver(String),
    #[error("grant out of bounds: {0}")]
    Bounds(String),
}

#[derive(Debug, Clone, Copy)]
struct TxState {
    free_at: TimeNs,
    channel: Option<ChannelId>,
}

/// Frame-by-frame schedule validator.
pub struct ScheduleChecker {
    channels: u32,
    per_onu: u32,
    rate: BitsPerSec,
    guard: TimeNs,
    tuning: TimeNs,
    frame_duration: TimeNs,
    /// Guarded end of the last burst seen per channel.
    channel_carry: Vec<TimeNs>,
    receiver_carry: Vec<TimeNs>,
    tx: Vec<Vec<TxState>>,
}

impl ScheduleChecker {
    pub fn new(cfg: &ScenarioConfig) -> Self {
        Self::with_transceivers(cfg, 1)
    }

    pub fn with_transceivers(cfg: &ScenarioConfig, per_onu: u32) -> Self {
        ScheduleChecker {
            channels: cfg.channels,
            per_onu,
            rate: cfg.channel_rate,
            guard: cfg.guard_time,
            tuning: cfg.tuning_time,
            frame_duration: cfg.frame_duration,
            channel_carry: vec![TimeNs::ZERO; cfg.channels as usize],
            receiver_carry: vec![TimeNs::ZERO; cfg.channels as usize],
            tx: vec![
                vec![TxState { free_at: TimeNs::ZERO, channel: None }; per_onu as usize];
                cfg.onu_count() as usize
            ],
        }
    }

    /// Validates one frame's grants against its allocations.
    ///
    /// Checks, in order: grant/allocation alignment and id uniqueness, no
    /// start before its request, channel and receiver bounds, guarded
    /// exclusivity per channel and per receiver (including busy windows
    /// carried over from earlier frames), and per-transceiver feasibility
    /// (guarded spacing, the tuning gap on every channel change, and the
    /// grant's retune flag matching the laser's actual state).
    ///
    /// Carry state is updated even when a violation is found, so later
    /// frames are still checked against the schedule as emitted. Returns
    /// the first violation.
    pub fn check_frame(
        &mut self,
        allocations: &[&Allocation],
        grants: &[PhysicalGrant],
        frame: u64,
    ) -> Result<(), ScheduleError> {
        if allocations.len() != grants.len() {
            return Err(ScheduleError::Conservation(format!(
                "frame {frame} has {} allocations but {} grants",
                allocations.len(),
                grants.len()
            )));
        }
        let frame_start = self.frame_duration.times(frame as i64);
        let mut errors: Vec<ScheduleError> = Vec::new();

        let mut seen: HashSet<u64> = HashSet::with_capacity(grants.len());
        for (a, g) in allocations.iter().zip(grants) {
            if a.id != g.alloc_id {
                errors.push(ScheduleError::Conservation(format!(
                    "grant for alloc {} is aligned with alloc {}",
                    g.alloc_id, a.id
                )));
            }
            if !seen.insert(g.alloc_id) {
                errors.push(ScheduleError::Conservation(format!(
                    "alloc {} granted twice",
                    g.alloc_id
                )));
            }
            if g.channel >= self.channels {
                errors.push(ScheduleError::Bounds(format!(
                    "alloc {} on channel {} of {}",
                    g.alloc_id, g.channel, self.channels
                )));
            }
            if g.receiver >= self.channels {
                errors.push(ScheduleError::Bounds(format!(
                    "alloc {} on receiver {} of {}",
                    g.alloc_id, g.receiver, self.channels
                )));
            }
            let row = g.transceiver as u64;
            let owner = (row / self.per_onu as u64) as u32;
            if owner != a.onu || g.transceiver >= a.onu * self.per_onu + self.per_onu {
                errors.push(ScheduleError::Bounds(format!(
                    "alloc {} of onu {} granted on transceiver {}",
                    g.alloc_id, a.onu, g.transceiver
                )));
            }
            let requested = frame_start + a.requested_start;
            if g.scheduled_start < requested {
                errors.push(ScheduleError::EarlyStart {
                    alloc: g.alloc_id,
                    sched: g.scheduled_start,
                    requested,
                });
            }
        }

        // Guarded busy intervals, grouped three ways.
        let guarded_end = |a: &Allocation, g: &PhysicalGrant| {
            g.scheduled_start + a.duration_on(self.rate) + self.guard
        };
        let mut order: Vec<usize> = (0..grants.len()).collect();
        order.sort_by_key(|&i| (grants[i].scheduled_start, grants[i].alloc_id));

        let mut channel_last = self.channel_carry.clone();
        let mut receiver_last = self.receiver_carry.clone();
        for &i in &order {
            let (a, g) = (allocations[i], &grants[i]);
            let end = guarded_end(a, g);
            if let Some(last) = channel_last.get_mut(g.channel as usize) {
                if g.scheduled_start < *last {
                    errors.push(ScheduleError::Channel(format!(
                        "alloc {} starts at {} on channel {} still busy until {}",
                        g.alloc_id, g.scheduled_start, g.channel, last
                    )));
                }
                *last = end.max(*last);
            }
            if let Some(last) = receiver_last.get_mut(g.receiver as usize) {
                if g.scheduled_start < *last {
                    errors.push(ScheduleError::Receiver(format!(
                        "alloc {} starts at {} on receiver {} still busy until {}",
                        g.alloc_id, g.scheduled_start, g.receiver, last
                    )));
                }
                *last = end.max(*last);
            }
        }
        self.channel_carry = channel_last;
        self.receiver_carry = receiver_last;

        let mut tx_next = self.tx.clone();
        for &i in &order {
            let (a, g) = (allocations[i], &grants[i]);
            let onu = a.onu as usize;
            let row = (g.transceiver as usize).wrapping_sub(onu * self.per_onu as usize);
            let Some(state) = tx_next.get_mut(onu).and_then(|r| r.get_mut(row)) else {
                continue; // already reported as out of bounds
            };
            let retune = state.channel.is_some() && state.channel != Some(g.channel);
            if g.tuned != retune {
                errors.push(ScheduleError::Transceiver(format!(
                    "alloc {} marked tuned={} but the laser was on {:?} and transmits on {}",
                    g.alloc_id, g.tuned, state.channel, g.channel
                )));
            }
            let ready = if retune { state.free_at + self.tuning } else { state.free_at };
            if g.scheduled_start < ready {
                errors.push(ScheduleError::Transceiver(format!(
                    "alloc {} starts at {} but transceiver {} is not ready before {}",
                    g.alloc_id, g.scheduled_start, g.transceiver, ready
                )));
            }
            state.free_at = guarded_end(a, g).max(state.free_at);
            state.channel = Some(g.channel);
        }
        self.tx = tx_next;

        match errors.into_iter().next() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alloc(id: u64, onu: u32, start: i64, bits: u64) -> Allocation {
        Allocation {
            id,
            vno: 0,
            onu,
            flow: onu,
            requested_start: TimeNs(start),
            payload_bits: bits,
            sla: None,
        }
    }

    fn grant(id: u64, channel: u32, start: i64, onu: u32, tuned: bool) -> PhysicalGrant {
        PhysicalGrant {
            alloc_id: id,
            channel,
            scheduled_start: TimeNs(start),
            transceiver: onu,
            receiver: channel,
            tuned,
        }
    }

    fn cfg() -> ScenarioConfig {
        ScenarioConfig::default()
    }

    #[test]
    fn a_valid_schedule_passes_across_frames() {
        let mut ck = ScheduleChecker::new(&cfg());
        let a0 = alloc(1, 0, 0, 187_500);
        let a1 = alloc(2, 1, 0, 187_500);
        ck.check_frame(&[&a0, &a1], &[grant(1, 0, 0, 0, false), grant(2, 1, 0, 1, false)], 0)
            .unwrap();
        let b0 = alloc(3, 0, 0, 187_500);
        ck.check_frame(&[&b0], &[grant(3, 0, 125_000, 0, false)], 1).unwrap();
    }

    #[test]
    fn overlapping_bursts_on_one_channel_are_rejected() {
        let mut ck = ScheduleChecker::new(&cfg());
        let a0 = alloc(1, 0, 0, 187_500);
        let a1 = alloc(2, 1, 0, 187_500);
        let err = ck
            .check_frame(&[&a0, &a1], &[grant(1, 0, 0, 0, false), grant(2, 0, 3_000, 1, false)], 0)
            .unwrap_err();
        assert!(err.to_string().contains("channel exclusivity violated"), "{err}");
    }

    #[test]
    fn guard_spacing_is_exact() {
        // 187,500 bits at 25G occupy 7,500 ns plus the 330 ns guard.
        let a0 = alloc(1, 0, 0, 187_500);
        let a1 = alloc(2, 1, 0, 187_500);
        let mut ck = ScheduleChecker::new(&cfg());
        ck.check_frame(&[&a0, &a1], &[grant(1, 0, 0, 0, false), grant(2, 0, 7_830, 1, false)], 0)
            .unwrap();
        let mut ck = ScheduleChecker::new(&cfg());
        let err = ck
            .check_frame(&[&a0, &a1], &[grant(1, 0, 0, 0, false), grant(2, 0, 7_829, 1, false)], 0)
            .unwrap_err();
        assert!(matches!(err, ScheduleError::Channel(_)));
    }

    #[test]
    fn receivers_are_checked_independently_of_channels() {
        let mut ck = ScheduleChecker::new(&cfg());
        let a0 = alloc(1, 0, 0, 187_500);
        let a1 = alloc(2, 1, 0, 187_500);
        let mut second = grant(2, 1, 1_000, 1, false);
        second.receiver = 0; // wired to the wrong receiver
        let err = ck
            .check_frame(&[&a0, &a1], &[grant(1, 0, 0, 0, false), second], 0)
            .unwrap_err();
        assert!(matches!(err, ScheduleError::Receiver(_)));
    }

    #[test]
    fn starting_before_the_request_is_rejected() {
        let mut ck = ScheduleChecker::new(&cfg());
        let a = alloc(1, 0, 40_000, 187_500);
        let err = ck.check_frame(&[&a], &[grant(1, 0, 39_999, 0, false)], 0).unwrap_err();
        assert!(matches!(err, ScheduleError::EarlyStart { .. }));
        // The request time is frame-relative: frame 1 shifts it by 125,000.
        let mut ck = ScheduleChecker::new(&cfg());
        let err = ck.check_frame(&[&a], &[grant(1, 0, 40_000, 0, false)], 1).unwrap_err();
        assert!(matches!(err, ScheduleError::EarlyStart { .. }));
    }

    #[test]
    fn conservation_catches_misaligned_and_duplicate_grants() {
        let a0 = alloc(1, 0, 0, 187_500);
        let a1 = alloc(2, 1, 0, 187_500);
        let mut ck = ScheduleChecker::new(&cfg());
        let err = ck
            .check_frame(&[&a0, &a1], &[grant(2, 1, 0, 1, false), grant(1, 0, 0, 0, false)], 0)
            .unwrap_err();
        assert!(matches!(err, ScheduleError::Conservation(_)));
        let mut ck = ScheduleChecker::new(&cfg());
        let err = ck
            .check_frame(&[&a0, &a1], &[grant(1, 0, 0, 0, false), grant(1, 1, 20_000, 0, false)], 0)
            .unwrap_err();
        assert!(matches!(err, ScheduleError::Conservation(_)));
        let mut ck = ScheduleChecker::new(&cfg());
        let err = ck.check_frame(&[&a0], &[], 0).unwrap_err();
        assert!(matches!(err, ScheduleError::Conservation(_)));
    }

    #[test]
    fn one_laser_cannot_transmit_twice_at_once() {
        let mut ck = ScheduleChecker::new(&cfg());
        let a0 = alloc(1, 0, 0, 187_500);
        let a1 = alloc(2, 0, 0, 187_500);
        // Different channels, same ONU, same instant.
        let err = ck
            .check_frame(&[&a0, &a1], &[grant(1, 0, 0, 0, false), grant(2, 1, 0, 0, true)], 0)
            .unwrap_err();
        assert!(matches!(err, ScheduleError::Transceiver(_)));
    }

    #[test]
    fn channel_hops_need_the_tuning_gap_and_the_flag() {
        let cfg = ScenarioConfig { tuning_time: TimeNs(1_000), ..ScenarioConfig::default() };
        let a0 = alloc(1, 0, 0, 187_500);
        let a1 = alloc(2, 0, 0, 187_500);
        // Laser busy until 7,830, retune adds 1,000.
        let ok = [grant(1, 0, 0, 0, false), grant(2, 1, 8_830, 0, true)];
        ScheduleChecker::new(&cfg).check_frame(&[&a0, &a1], &ok, 0).unwrap();

        let tight = [grant(1, 0, 0, 0, false), grant(2, 1, 8_829, 0, true)];
        let err = ScheduleChecker::new(&cfg).check_frame(&[&a0, &a1], &tight, 0).unwrap_err();
        assert!(matches!(err, ScheduleError::Transceiver(_)));

        // Hopping without raising the retune flag is a wiring error.
        let unflagged = [grant(1, 0, 0, 0, false), grant(2, 1, 8_830, 0, false)];
        let err = ScheduleChecker::new(&cfg).check_frame(&[&a0, &a1], &unflagged, 0).unwrap_err();
        assert!(matches!(err, ScheduleError::Transceiver(_)));

        // The first use of a laser is not a retune.
        let first = [grant(1, 0, 0, 0, true)];
        let err = ScheduleChecker::new(&cfg).check_frame(&[&a0], &first, 0).unwrap_err();
        assert!(matches!(err, ScheduleError::Transceiver(_)));
    }

    #[test]
    fn staying_on_channel_needs_no_gap_across_frames() {
        let cfg = ScenarioConfig { tuning_time: TimeNs(15_000), ..ScenarioConfig::default() };
        let mut ck = ScheduleChecker::new(&cfg);
        let a = alloc(1, 0, 120_000, 187_500);
        ck.check_frame(&[&a], &[grant(1, 2, 120_000, 0, false)], 0).unwrap();
        // Busy until 127,830; the same channel continues without tuning.
        let b = alloc(2, 0, 0, 187_500);
        ck.check_frame(&[&b], &[grant(2, 2, 127_830, 0, false)], 1).unwrap();
        // A hop right after would need 127,830 + 15,000.
        let mut ck = ScheduleChecker::new(&cfg);
        ck.check_frame(&[&a], &[grant(1, 2, 120_000, 0, false)], 0).unwrap();
        let err = ck.check_frame(&[&b], &[grant(2, 3, 127_830, 0, true)], 1).unwrap_err();
        assert!(matches!(err, ScheduleError::Transceiver(_)));
    }

    #[test]
    fn busy_channels_carry_into_the_next_frame() {
        let mut ck = ScheduleChecker::new(&cfg());
        let a = alloc(1, 0, 120_000, 187_500);
        ck.check_frame(&[&a], &[grant(1, 0, 120_000, 0, false)], 0).unwrap();
        // Channel 0 is busy until 127,830, past the frame boundary.
        let b = alloc(2, 1, 0, 187_500);
        let err = ck.check_frame(&[&b], &[grant(2, 0, 125_000, 1, false)], 1).unwrap_err();
        assert!(err.to_string().contains("channel exclusivity violated"), "{err}");
        // Carry state was still updated: yet another early grant is caught.
        let c = alloc(3, 2, 0, 187_500);
        let err = ck.check_frame(&[&c], &[grant(3, 0, 127_000, 2, false)], 1).unwrap_err();
        assert!(matches!(err, ScheduleError::Channel(_)));
    }

    #[test]
    fn out_of_range_ids_are_bounds_errors() {
        let mut ck = ScheduleChecker::new(&cfg());
        let a = alloc(1, 0, 0, 187_500);
        let err = ck.check_frame(&[&a], &[grant(1, 8, 0, 0, false)], 0).unwrap_err();
        assert!(matches!(err, ScheduleError::Bounds(_)));
        // A grant on another ONU's transceiver is a wiring error.
        let mut ck = ScheduleChecker::new(&cfg());
        let err = ck.check_frame(&[&a], &[grant(1, 0, 0, 3, false)], 0).unwrap_err();
        assert!(matches!(err, ScheduleError::Bounds(_)));
    }
}
