//! Core domain types shared by the traffic generator, the merging engine and
//! the sweep runner.
//!
//! The model follows the virtual-DBA architecture: each VNO produces a
//! per-frame virtual bandwidth map (a list of time-only allocation requests),
//! and the merging engine turns those into physical grants on the shared
//! channels. Payload sizes are stored in bits so they are independent of the
//! line rate of the channel a grant eventually lands on.

use thiserror::Error;

use crate::time::{transmission_time, BitsPerSec, TimeNs};

/// Upstream frame period.
pub const FRAME_DURATION: TimeNs = TimeNs(125_000);

/// Idle gap required between consecutive bursts on a channel.
pub const DEFAULT_GUARD: TimeNs = TimeNs(330);

/// Compliance window, in frames (8 x 125 us = 1 ms).
pub const DEFAULT_WINDOW_FRAMES: u32 = 8;

/// Line rate that anchors burst sizing: the mean burst is a fraction of the
/// frame capacity at this rate, regardless of the channel config under test.
pub const BURST_REFERENCE_RATE: BitsPerSec = 25_000_000_000;

pub type VnoId = u32;
/// Global ONU index (`vno * onus_per_vno + local`).
pub type OnuId = u32;
/// Global flow index, dense over the whole population.
pub type FlowId = u32;
pub type AllocId = u64;
pub type ChannelId = u32;

/// Latency target plus the fraction of traffic that must meet it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlaClass {
    pub latency_target: TimeNs,
    /// Percentage of slots that must arrive within the target, in (0, 100].
    pub compliance_pct: f64,
}

impl SlaClass {
    /// Tight class: 12.5 us target, 90% of slots on time.
    pub const GOLD: SlaClass = SlaClass {
        latency_target: TimeNs(12_500),
        compliance_pct: 90.0,
    };

    /// Relaxed class: 25 us target, 95% of slots on time.
    pub const SILVER: SlaClass = SlaClass {
        latency_target: TimeNs(25_000),
        compliance_pct: 95.0,
    };

    /// Fraction of slots allowed to miss the target, in [0, 1).
    pub fn non_compliance_threshold(&self) -> f64 {
        (100.0 - self.compliance_pct) / 100.0
    }
}

/// One upstream transmission request inside a virtual bandwidth map.
///
/// `requested_start` is relative to the owning frame and carries no channel:
/// wavelength assignment is entirely the merging engine's business.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub id: AllocId,
    pub vno: VnoId,
    pub onu: OnuId,
    pub flow: FlowId,
    /// Offset from the frame start, in [0, frame_duration).
    pub requested_start: TimeNs,
    pub payload_bits: u64,
    /// `None` marks best-effort traffic.
    pub sla: Option<SlaClass>,
}

impl Allocation {
    /// Transmission time of the payload at the given line rate.
    pub fn duration_on(&self, rate: BitsPerSec) -> TimeNs {
        transmission_time(self.payload_bits, rate)
    }

    /// Latest acceptable start time, relative to the frame start.
    ///
    /// SLA traffic must start within its latency target; best-effort traffic
    /// gets the scheduling-horizon sentinel instead (it can slide up to the
    /// horizon without being counted late).
    pub fn maxtime(&self, frame_horizon: TimeNs) -> TimeNs {
        match self.sla {
            Some(class) => self.requested_start + class.latency_target,
            None => frame_horizon,
        }
    }
}

/// Per-frame bandwidth map produced by one VNO's scheduler.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualBmap {
    pub vno: VnoId,
    pub frame: u64,
    /// Sorted by `requested_start`.
    pub allocations: Vec<Allocation>,
}

impl VirtualBmap {
    /// True when consecutive allocations are guard-separated on a single
    /// timeline at `reference_rate` (the generator's invariant).
    pub fn is_collision_free(&self, reference_rate: BitsPerSec, guard: TimeNs) -> bool {
        self.allocations.windows(2).all(|w| {
            w[1].requested_start >= w[0].requested_start + w[0].duration_on(reference_rate) + guard
        })
    }
}

/// Physical grant emitted by the merging engine; times are absolute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhysicalGrant {
    pub alloc_id: AllocId,
    pub channel: ChannelId,
    pub scheduled_start: TimeNs,
    /// Row in the transceiver table that carries the burst.
    pub transceiver: u32,
    /// Receiver that terminates the burst (one per channel).
    pub receiver: u32,
    /// True when the transceiver had to retune to reach `channel`.
    pub tuned: bool,
}

/// How a VNO's virtual timeline is laid out during generation. Bursts
/// always occupy their physical transmission time at the per-channel rate;
/// the mode decides how much of the PON the VNO plans across.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VirtualTimeline {
    /// The VNO plans its whole map as one serial lane, as if it owned a
    /// single wavelength. Caps the load one VNO can request.
    #[default]
    SingleChannel,
    /// The VNO plans as if it owned the whole PON: different ONUs may
    /// request overlapping times, while each ONU's own bursts remain
    /// serialized on its lane.
    FullCapacity,
}

/// What counts against the load budget during generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LoadAccounting {
    /// Payload bits only.
    #[default]
    Payload,
    /// Payload bits plus the guard gap each burst occupies on the wire.
    Occupied,
}

/// Compliance window behaviour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WindowMode {
    /// Window slides one frame at a time.
    #[default]
    Sliding,
    /// Window resets at fixed block boundaries.
    Tumbling,
}

/// Ordering of the colliding set during merge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SortPolicy {
    /// Flows closest to breaching their SLA go first.
    #[default]
    BreachMargin,
    /// Flows with the lowest current non-compliance rate go first.
    RateAscending,
}

/// Full description of one simulated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub channels: u32,
    pub channel_rate: BitsPerSec,
    pub frame_duration: TimeNs,
    pub guard_time: TimeNs,
    pub tuning_time: TimeNs,
    pub vno_count: u32,
    pub onus_per_vno: u32,
    pub flows_per_onu: u32,
    /// Offered load as a fraction of total upstream capacity, in (0, 1].
    pub load: f64,
    /// Fraction of the load carried by SLA flows, in [0, 1].
    pub sla_share: f64,
    /// Mean burst size as a fraction of the frame at `BURST_REFERENCE_RATE`.
    pub mean_burst_fraction: f64,
    /// Burst sizes are drawn uniformly from this multiplicative range
    /// around the mean.
    pub burst_spread: (f64, f64),
    /// Optional per-VNO load weights; empty means equal split.
    pub vno_weights: Vec<f64>,
    pub window_frames: u32,
    /// Best-effort scheduling horizon, in frames.
    pub horizon_frames: u32,
    pub frames: u32,
    pub seed: u64,
    pub timeline: VirtualTimeline,
    pub accounting: LoadAccounting,
    pub window_mode: WindowMode,
    pub sort_policy: SortPolicy,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            channels: 8,
            channel_rate: 25_000_000_000,
            frame_duration: FRAME_DURATION,
            guard_time: DEFAULT_GUARD,
            tuning_time: TimeNs::ZERO,
            vno_count: 5,
            onus_per_vno: 4,
            flows_per_onu: 2,
            load: 0.5,
            sla_share: 0.5,
            mean_burst_fraction: 0.06,
            burst_spread: (0.5, 1.5),
            vno_weights: Vec::new(),
            window_frames: DEFAULT_WINDOW_FRAMES,
            horizon_frames: 2,
            frames: 5000,
            seed: 1,
            timeline: VirtualTimeline::default(),
            accounting: LoadAccounting::default(),
            window_mode: WindowMode::default(),
            sort_policy: SortPolicy::default(),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("load exceeds capacity: {0} (expected a fraction in (0, 1])")]
    LoadExceedsCapacity(f64),
    #[error("sla share out of range: {0} (expected [0, 1])")]
    ShareOutOfRange(f64),
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl ScenarioConfig {
    pub fn total_capacity(&self) -> BitsPerSec {
        self.channel_rate * self.channels as u64
    }

    /// Line rate of one virtual planning lane: the physical channel rate,
    /// so virtual spacing equals the time a burst really occupies.
    pub fn reference_rate(&self) -> BitsPerSec {
        self.channel_rate
    }

    /// Mean burst size in bits (rate-independent).
    pub fn mean_burst_bits(&self) -> u64 {
        let per_ns = BURST_REFERENCE_RATE as f64 / 1e9;
        (self.mean_burst_fraction * self.frame_duration.ns() as f64 * per_ns).round() as u64
    }

    /// Absolute end of the scheduling horizon for frame 0; per-frame callers
    /// shift it by the frame start.
    pub fn frame_horizon(&self) -> TimeNs {
        self.frame_duration.times(self.horizon_frames as i64)
    }

    pub fn onu_count(&self) -> u32 {
        self.vno_count * self.onus_per_vno
    }

    pub fn flow_count(&self) -> u32 {
        self.onu_count() * self.flows_per_onu
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.load > 0.0 && self.load <= 1.0) {
            return Err(ConfigError::LoadExceedsCapacity(self.load));
        }
        if !(0.0..=1.0).contains(&self.sla_share) {
            return Err(ConfigError::ShareOutOfRange(self.sla_share));
        }
        if self.channels == 0 || self.channel_rate == 0 {
            return Err(ConfigError::Invalid("need at least one channel with a positive rate".into()));
        }
        if self.vno_count == 0 || self.onus_per_vno == 0 || self.flows_per_onu == 0 {
            return Err(ConfigError::Invalid("population counts must be positive".into()));
        }
        if self.frame_duration <= TimeNs::ZERO || self.guard_time < TimeNs::ZERO {
            return Err(ConfigError::Invalid("frame and guard must be non-negative".into()));
        }
        if self.tuning_time < TimeNs::ZERO {
            return Err(ConfigError::Invalid("tuning time must be non-negative".into()));
        }
        if self.window_frames == 0 || self.horizon_frames == 0 {
            return Err(ConfigError::Invalid("window and horizon must be positive".into()));
        }
        if !(self.mean_burst_fraction > 0.0 && self.mean_burst_fraction <= 1.0) {
            return Err(ConfigError::Invalid("mean burst fraction out of range".into()));
        }
        let (lo, hi) = self.burst_spread;
        if !(lo > 0.0 && hi >= lo) {
            return Err(ConfigError::Invalid("burst spread must be positive and ordered".into()));
        }
        if !self.vno_weights.is_empty() {
            if self.vno_weights.len() != self.vno_count as usize {
                return Err(ConfigError::Invalid("vno weights must match vno count".into()));
            }
            if self.vno_weights.iter().any(|w| !(*w >= 0.0)) || self.vno_weights.iter().sum::<f64>() <= 0.0 {
                return Err(ConfigError::Invalid("vno weights must be non-negative with a positive sum".into()));
            }
        }
        if self.mean_burst_bits() == 0 {
            return Err(ConfigError::Invalid("mean burst rounds to zero bits".into()));
        }
        Ok(())
    }
}
