//! Per-flow latency-compliance tracking.
//!
//! Every SLA flow owns a ring of per-frame counters covering the compliance
//! window (8 frames = 1 ms by default). A granted slot counts as delayed when
//! its delay strictly exceeds the flow's latency target; a flow is in breach
//! when the delayed fraction over the window strictly exceeds the fraction
//! its class allows. Rates are recomputed once per frame, after all grants
//! of that frame have been recorded, so the merging engine always sorts on
//! the previous frame's state.

use crate::model::{FlowId, SlaClass, WindowMode};
use crate::time::TimeNs;
use crate::traffic::FlowProfile;

#[derive(Debug, Clone, Copy)]
struct FrameCounts {
    frame: u64,
    delayed: u32,
    total: u32,
}

const NEVER: u64 = u64::MAX;

#[derive(Debug, Clone)]
struct TrackedFlow {
    class: SlaClass,
    ring: Vec<FrameCounts>,
    rate: f64,
    breached: bool,
}

/// Sliding-window breach table over all SLA flows of a scenario.
///
/// Best-effort flows are not tracked: recording against one is a no-op and
/// queries return the neutral values (rate 0, never breached).
#[derive(Debug, Clone)]
pub struct SlaTracker {
    window: u64,
    mode: WindowMode,
    flows: Vec<Option<TrackedFlow>>,
}

impl SlaTracker {
    pub fn new(flows: &[FlowProfile], window_frames: u32, mode: WindowMode) -> Self {
        let max_id = flows.iter().map(|f| f.flow).max().map_or(0, |m| m + 1);
        let mut slots: Vec<Option<TrackedFlow>> = vec![None; max_id as usize];
        for f in flows {
            if let Some(class) = f.sla {
                slots[f.flow as usize] = Some(TrackedFlow {
                    class,
                    ring: vec![
                        FrameCounts { frame: NEVER, delayed: 0, total: 0 };
                        window_frames as usize
                    ],
                    rate: 0.0,
                    breached: false,
                });
            }
        }
        SlaTracker { window: window_frames as u64, mode, flows: slots }
    }

    /// Number of SLA flows under tracking.
    pub fn tracked_count(&self) -> u32 {
        self.flows.iter().filter(|f| f.is_some()).count() as u32
    }

    /// Ids of all tracked flows, ascending.
    pub fn tracked_flows(&self) -> impl Iterator<Item = FlowId> + '_ {
        self.flows
            .iter()
            .enumerate()
            .filter(|(_, f)| f.is_some())
            .map(|(i, _)| i as FlowId)
    }

    /// Records one granted slot for `flow` in `frame`.
    pub fn record_grant(&mut self, flow: FlowId, delay: TimeNs, frame: u64) {
        let Some(Some(tf)) = self.flows.get_mut(flow as usize) else {
            return;
        };
        let idx = (frame % self.window) as usize;
        let slot = &mut tf.ring[idx];
        if slot.frame != frame {
            *slot = FrameCounts { frame, delayed: 0, total: 0 };
        }
        slot.total += 1;
        if delay > tf.class.latency_target {
            slot.delayed += 1;
        }
    }

    /// Recomputes every flow's windowed rate at the end of `frame`, sliding
    /// the window forward (or cutting it at the block boundary in tumbling
    /// mode).
    pub fn recompute_rates(&mut self, frame: u64) {
        let window = self.window;
        let mode = self.mode;
        for tf in self.flows.iter_mut().flatten() {
            let mut delayed = 0u64;
            let mut total = 0u64;
            for slot in &tf.ring {
                if slot.frame == NEVER || slot.frame > frame {
                    continue;
                }
                let in_window = match mode {
                    WindowMode::Sliding => frame - slot.frame < window,
                    WindowMode::Tumbling => slot.frame / window == frame / window,
                };
                if in_window {
                    delayed += slot.delayed as u64;
                    total += slot.total as u64;
                }
            }
            tf.rate = if total == 0 { 0.0 } else { delayed as f64 / total as f64 };
            tf.breached = tf.rate > tf.class.non_compliance_threshold();
        }
    }

    /// Windowed non-compliance rate as of the last recompute.
    pub fn non_compliance_rate(&self, flow: FlowId) -> f64 {
        match self.flows.get(flow as usize) {
            Some(Some(tf)) => tf.rate,
            _ => 0.0,
        }
    }

    /// Distance to the breach threshold; smaller means closer to breaching.
    /// Untracked flows are infinitely far away.
    pub fn margin(&self, flow: FlowId) -> f64 {
        match self.flows.get(flow as usize) {
            Some(Some(tf)) => tf.class.non_compliance_threshold() - tf.rate,
            _ => f64::INFINITY,
        }
    }

    pub fn is_breached(&self, flow: FlowId) -> bool {
        matches!(self.flows.get(flow as usize), Some(Some(tf)) if tf.breached)
    }

    /// Number of flows in breach as of the last recompute.
    pub fn breached_count(&self) -> u32 {
        self.flows
            .iter()
            .flatten()
            .filter(|tf| tf.breached)
            .count() as u32
    }
}
