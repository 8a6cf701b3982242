//! Periodic URLLC traffic: per-device phase-offset generation, per-packet
//! deadline tracking, and emission of the per-direction network-layer state
//! signal (1 while the last reception succeeded, 0 from a missed deadline
//! until the next on-time delivery).

use crate::engine::SimTime;
use crate::metrics::{StateTrace, TraceBuilder};
use crate::{DeviceId, Direction};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UrllcConfig {
    pub period_ms: f64,
    pub ul_bytes: u64,
    pub dl_bytes: u64,
    pub delay_bound_ul_ms: f64,
    pub delay_bound_dl_ms: f64,
    pub survival_time_ms: f64,
}

impl Default for UrllcConfig {
    fn default() -> Self {
        UrllcConfig {
            period_ms: 5.0,
            ul_bytes: 64,
            dl_bytes: 80,
            delay_bound_ul_ms: 6.0,
            delay_bound_dl_ms: 2.0,
            survival_time_ms: 5.0,
        }
    }
}

impl UrllcConfig {
    pub fn period(&self) -> SimTime {
        SimTime::from_secs_f64(self.period_ms / 1e3)
    }

    pub fn packet_bytes(&self, dir: Direction) -> u64 {
        match dir {
            Direction::Ul => self.ul_bytes,
            Direction::Dl => self.dl_bytes,
        }
    }

    pub fn delay_bound(&self, dir: Direction) -> SimTime {
        let ms = match dir {
            Direction::Ul => self.delay_bound_ul_ms,
            Direction::Dl => self.delay_bound_dl_ms,
        };
        SimTime::from_secs_f64(ms / 1e3)
    }

    pub fn survival_time(&self) -> SimTime {
        SimTime::from_secs_f64(self.survival_time_ms / 1e3)
    }
}

/// Packet generation instants phase + m * period for all m with time below
/// the horizon.
pub fn generate(phase: SimTime, period: SimTime, horizon: SimTime) -> Vec<SimTime> {
    assert!(period > SimTime::ZERO);
    let mut out = Vec::new();
    let mut t = phase;
    while t < horizon {
        out.push(t);
        t = t + period;
    }
    out
}

pub type PacketId = usize;

#[derive(Debug, Clone, Copy)]
pub struct PacketRecord {
    pub device: DeviceId,
    pub direction: Direction,
    pub gen_time: SimTime,
    pub deadline: SimTime,
    pub delivered: Option<SimTime>,
    pub failed: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrafficCounts {
    pub generated: u64,
    pub delivered_on_time: u64,
    pub failed: u64,
    pub delivered_late: u64,
}

/// Tally restricted to packets that came due within the horizon: those
/// satisfy delivered_on_time + failed = due exactly.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DueSummary {
    pub due: u64,
    pub delivered_on_time: u64,
    pub failed: u64,
}

/// Per-run URLLC bookkeeping: packet outcomes and the per-(device,
/// direction) network-layer state traces.
pub struct UrllcTracker {
    records: Vec<PacketRecord>,
    by_sdu: HashMap<(DeviceId, Direction, u64), PacketId>,
    sdu_of_packet: HashMap<PacketId, u64>,
    traces: BTreeMap<(DeviceId, Direction), TraceBuilder>,
    counts: TrafficCounts,
}

impl UrllcTracker {
    pub fn new(devices: &[DeviceId]) -> Self {
        let mut traces = BTreeMap::new();
        for &d in devices {
            for dir in Direction::BOTH {
                traces.insert((d, dir), TraceBuilder::new());
            }
        }
        UrllcTracker {
            records: Vec::new(),
            by_sdu: HashMap::new(),
            sdu_of_packet: HashMap::new(),
            traces,
            counts: TrafficCounts::default(),
        }
    }

    pub fn register(
        &mut self,
        device: DeviceId,
        direction: Direction,
        gen_time: SimTime,
        deadline: SimTime,
    ) -> PacketId {
        let id = self.records.len();
        self.records.push(PacketRecord {
            device,
            direction,
            gen_time,
            deadline,
            delivered: None,
            failed: false,
        });
        self.counts.generated += 1;
        id
    }

    /// Associates the packet with the RLC SDU carrying it. A packet the RLC
    /// buffer rejected simply stays unbound and fails at its deadline.
    pub fn bind_sdu(&mut self, id: PacketId, sdu_seq: u64) {
        let r = &self.records[id];
        self.by_sdu.insert((r.device, r.direction, sdu_seq), id);
        self.sdu_of_packet.insert(id, sdu_seq);
    }

    pub fn record(&self, id: PacketId) -> &PacketRecord {
        &self.records[id]
    }

    /// Reassembly completed for the SDU of some packet. On-time completion
    /// sets the state to 1 at the delivery instant; a late completion is a
    /// failure already recorded at the deadline and changes nothing.
    pub fn on_delivered(
        &mut self,
        device: DeviceId,
        direction: Direction,
        sdu_seq: u64,
        t: SimTime,
    ) {
        let Some(&id) = self.by_sdu.get(&(device, direction, sdu_seq)) else {
            return;
        };
        let r = &mut self.records[id];
        if r.delivered.is_some() {
            return;
        }
        r.delivered = Some(t);
        if !r.failed && t <= r.deadline {
            self.counts.delivered_on_time += 1;
            self.traces
                .get_mut(&(device, direction))
                .expect("trace")
                .push(t, true);
        } else {
            self.counts.delivered_late += 1;
        }
    }

    /// Deadline expiry. When the packet has not completed in time the state
    /// drops to 0 at the deadline (the application observes absence at the
    /// bound); the packet's SDU sequence is returned so the caller can
    /// discard its reassembly buffer.
    pub fn on_deadline(&mut self, id: PacketId, now: SimTime) -> Option<u64> {
        let r = &mut self.records[id];
        debug_assert_eq!(r.deadline, now);
        if r.delivered.is_some_and(|t| t <= r.deadline) {
            return None;
        }
        r.failed = true;
        self.counts.failed += 1;
        let key = (r.device, r.direction);
        self.traces.get_mut(&key).expect("trace").push(now, false);
        self.sdu_of_packet.get(&id).copied()
    }

    pub fn counts(&self) -> TrafficCounts {
        self.counts
    }

    /// Outcome conservation over packets whose deadline fell inside the run:
    /// each was either delivered on time or failed, never both or neither.
    pub fn conservation_holds(&self, horizon: SimTime) -> bool {
        self.records
            .iter()
            .filter(|r| r.deadline <= horizon)
            .all(|r| {
                let on_time = r.delivered.is_some_and(|t| t <= r.deadline) && !r.failed;
                on_time != r.failed
            })
    }

    /// Outcome tally over packets whose deadline fell inside the run.
    pub fn due_summary(&self, horizon: SimTime) -> DueSummary {
        let mut s = DueSummary::default();
        for r in self.records.iter().filter(|r| r.deadline <= horizon) {
            s.due += 1;
            if r.failed {
                s.failed += 1;
            } else if r.delivered.is_some_and(|t| t <= r.deadline) {
                s.delivered_on_time += 1;
            }
        }
        s
    }

    /// Final per-(device, direction) network-layer state traces.
    pub fn finish(self, horizon: SimTime) -> BTreeMap<(DeviceId, Direction), StateTrace> {
        self.traces
            .into_iter()
            .map(|(k, b)| (k, b.finish(horizon)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ms(v: u64) -> SimTime {
        SimTime::from_ms(v)
    }

    #[test]
    fn generation_follows_phase_and_period() {
        assert_eq!(
            generate(SimTime::ZERO, ms(5), ms(20)),
            vec![ms(0), ms(5), ms(10), ms(15)]
        );
        assert_eq!(
            generate(ms(1), ms(5), ms(20)),
            vec![ms(1), ms(6), ms(11), ms(16)]
        );
    }

    #[test]
    fn paper_scale_packet_count() {
        // 10 devices over 100 s at 5 ms period: 200,000 per direction.
        let per_device = generate(SimTime::ZERO, ms(5), SimTime::from_secs(100)).len();
        assert_eq!(per_device, 20_000);
        assert_eq!(per_device * 10, 200_000);
    }

    fn tracker() -> UrllcTracker {
        UrllcTracker::new(&[0])
    }

    #[test]
    fn on_time_delivery_keeps_state_up() {
        let mut tr = tracker();
        let id = tr.register(0, Direction::Ul, ms(0), ms(6));
        tr.bind_sdu(id, 0);
        tr.on_delivered(0, Direction::Ul, 0, ms(4));
        assert!(tr.on_deadline(id, ms(6)).is_none());
        let traces = tr.finish(ms(100));
        assert_eq!(traces[&(0, Direction::Ul)].availability(), 1.0);
    }

    #[test]
    fn late_delivery_counts_as_failure_at_the_bound() {
        let mut tr = tracker();
        let id = tr.register(0, Direction::Ul, ms(0), ms(6));
        tr.bind_sdu(id, 0);
        assert_eq!(tr.on_deadline(id, ms(6)), Some(0));
        tr.on_delivered(0, Direction::Ul, 0, ms(8));
        let c = tr.counts();
        assert_eq!(c.failed, 1);
        assert_eq!(c.delivered_on_time, 0);
        assert_eq!(c.delivered_late, 1);
        let traces = tr.finish(ms(100));
        let x = &traces[&(0, Direction::Ul)];
        assert!(x.value_at(ms(5)));
        assert!(!x.value_at(ms(6)), "state must drop at the deadline");
        assert!(!x.value_at(ms(50)), "late completion must not raise it");
    }

    #[test]
    fn never_delivered_packet_drops_state_at_deadline() {
        let mut tr = tracker();
        let id = tr.register(0, Direction::Dl, ms(0), ms(6));
        tr.bind_sdu(id, 3);
        assert_eq!(tr.on_deadline(id, ms(6)), Some(3));
        let traces = tr.finish(ms(100));
        assert!(!traces[&(0, Direction::Dl)].value_at(ms(6)));
    }

    #[test]
    fn recovery_after_failure_raises_state() {
        let mut tr = tracker();
        let a = tr.register(0, Direction::Ul, ms(0), ms(6));
        tr.bind_sdu(a, 0);
        let b = tr.register(0, Direction::Ul, ms(5), ms(11));
        tr.bind_sdu(b, 1);
        tr.on_deadline(a, ms(6));
        tr.on_delivered(0, Direction::Ul, 1, ms(9));
        tr.on_deadline(b, ms(11));
        let traces = tr.finish(ms(100));
        let x = &traces[&(0, Direction::Ul)];
        assert!(!x.value_at(ms(7)));
        assert!(x.value_at(ms(9)));
        assert_eq!(x.zero_intervals(), vec![(ms(6), ms(9))]);
    }

    #[test]
    fn conservation_over_due_packets() {
        let mut tr = tracker();
        for k in 0..10u64 {
            let id = tr.register(0, Direction::Ul, ms(5 * k), ms(5 * k + 6));
            tr.bind_sdu(id, k);
        }
        for k in 0..10u64 {
            if k % 3 == 0 {
                tr.on_delivered(0, Direction::Ul, k, ms(5 * k + 2));
            }
            tr.on_deadline(k as PacketId, ms(5 * k + 6));
        }
        let horizon = SimTime::from_secs(1);
        assert!(tr.conservation_holds(horizon));
        let c = tr.counts();
        assert_eq!(c.generated, 10);
        let due = tr.due_summary(horizon);
        assert_eq!(due.due, 10);
        assert_eq!(due.delivered_on_time + due.failed, due.due);
    }
}
