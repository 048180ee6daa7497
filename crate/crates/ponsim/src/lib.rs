//! Frame-driven simulator for multi-tenant TWDM-PON upstream scheduling.
//!
//! Several virtual network operators (VNOs) each run their own dynamic
//! bandwidth assignment and hand the physical OLT a *virtual* bandwidth map
//! every 125 us frame. The physical scheduler must merge those maps onto a
//! small set of shared upstream wavelengths, delaying bursts that collide and
//! retuning ONU transmitters when a burst moves to another channel. This
//! crate models that pipeline end to end:
//!
//! * [`traffic`] draws per-VNO bandwidth maps for a configurable load,
//!   SLA mix and burst-size distribution, deterministically per seed,
//! * [`merge`] implements the per-frame merging heuristic (collision
//!   detection, breach-aware ordering, channel/transceiver/receiver tables),
//! * [`sla`] tracks per-flow latency compliance over a sliding 1 ms window,
//! * [`oracle`] solves small discretised instances exactly, as a reference
//!   point for the heuristic,
//! * [`sim`] wires everything into scenario runs and parameter sweeps,
//! * [`verify`] re-checks finished schedules against the feasibility rules.
//!
//! All state advances frame by frame; there is no event queue. Times are
//! integer nanoseconds throughout ([`TimeNs`]), and every random draw comes
//! from a counter-based stream keyed by (seed, VNO, frame), so results are
//! reproducible regardless of threading.

pub mod merge;
pub mod model;
pub mod oracle;
pub mod sim;
pub mod sla;
pub mod time;
pub mod traffic;
pub mod verify;

pub use merge::{collision_cmp, detect_collisions, MergeOutcome, MergeState};
pub use model::{
    Allocation, AllocId, ChannelId, ConfigError, FlowId, LoadAccounting, OnuId, PhysicalGrant,
    ScenarioConfig, SlaClass, SortPolicy, VirtualBmap, VirtualTimeline, VnoId, WindowMode,
    DEFAULT_GUARD, DEFAULT_WINDOW_FRAMES, FRAME_DURATION,
};
pub use sim::{
    run_scenario, run_scenario_with, run_sweep, scenario_seed, RunOptions, ScenarioResult,
    SimError, SweepGrid, SweepPoint,
};
pub use sla::SlaTracker;
pub use time::{transmission_time, BitsPerSec, TimeNs};
pub use traffic::{build_flow_population, generate_frame, FlowProfile, TrafficError};
pub use verify::{ScheduleChecker, ScheduleError};
