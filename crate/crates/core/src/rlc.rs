//! Radio link control entities: acknowledged mode for AI bearers (lossless
//! up to a retransmission cap), unacknowledged mode for URLLC bearers,
//! segmentation of SDUs into transport-block-sized PDUs, and in-order
//! reassembly on the receiving side.
//!
//! One entity models both ends of a (device, bearer, direction) bearer; the
//! simulation is monolithic so the peer state lives in the same object.
//! Loss detection in AM is driven directly by the MAC drop notification
//! rather than status-PDU polling.

use crate::engine::SimTime;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RlcConfig {
    /// Fixed per-PDU header in bytes.
    pub header_bytes: u64,
    /// Number of losses of one PDU after which the owning SDU fails (AM).
    pub am_max_retx: u8,
    /// Transmit buffer cap in bytes; 0 means unlimited.
    pub buffer_cap_bytes: u64,
}

impl Default for RlcConfig {
    fn default() -> Self {
        RlcConfig {
            header_bytes: 5,
            am_max_retx: 8,
            buffer_cap_bytes: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RlcMode {
    Am,
    Um,
}

/// One segment of an SDU. Segments of one SDU are contiguous,
/// non-overlapping, and sum to its size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RlcPdu {
    pub sdu_seq: u64,
    pub offset: u64,
    pub len: u64,
    pub is_last: bool,
    /// Flush epoch the PDU was segmented under; stale-epoch PDUs are inert.
    pub epoch: u32,
}

/// A fully reassembled SDU handed to the upper layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeliveredSdu {
    pub seq: u64,
    pub size_bytes: u64,
    pub tag: u64,
    pub enqueue_time: SimTime,
    pub delivered_at: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PduOutcome {
    /// Nothing to do (UM loss, ack bookkeeping, stale epoch).
    None,
    /// AM loss requeued for RLC retransmission.
    RetxQueued,
    /// The owning SDU exhausted its retransmission budget.
    SduFailed(u64),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AuditCounts {
    pub enqueued: u64,
    pub delivered: u64,
    pub failed: u64,
    pub cancelled: u64,
    /// SDUs rejected at enqueue by the buffer cap (never counted as enqueued).
    pub discarded_at_enqueue: u64,
}

impl AuditCounts {
    /// SDUs accepted but not yet delivered, failed, or cancelled.
    pub fn open(&self) -> u64 {
        self.enqueued - self.delivered - self.failed - self.cancelled
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SduStatus {
    Open,
    Delivered,
    Failed,
    Cancelled,
}

#[derive(Debug)]
struct SduMeta {
    size: u64,
    tag: u64,
    enqueue_time: SimTime,
    status: SduStatus,
}

#[derive(Debug)]
struct TxSdu {
    seq: u64,
    size: u64,
    next_offset: u64,
}

#[derive(Debug, Default)]
struct RxBuffer {
    segments: BTreeMap<u64, u64>,
    covered: u64,
}

pub struct RlcEntity {
    mode: RlcMode,
    header_bytes: u64,
    am_max_retx: u8,
    buffer_cap_bytes: u64,
    epoch: u32,
    next_seq: u64,
    tx_queue: VecDeque<TxSdu>,
    retx_queue: VecDeque<RlcPdu>,
    retx_counts: HashMap<(u64, u64), u8>,
    meta: HashMap<u64, SduMeta>,
    rx_buffers: HashMap<u64, RxBuffer>,
    /// Completed SDUs waiting for in-order release (AM only): seq -> completion time.
    rx_ready: BTreeMap<u64, SimTime>,
    release_gate: u64,
    dead_rx: HashSet<u64>,
    counts: AuditCounts,
}

impl RlcEntity {
    pub fn new(mode: RlcMode, cfg: &RlcConfig) -> Self {
        RlcEntity {
            mode,
            header_bytes: cfg.header_bytes,
            am_max_retx: cfg.am_max_retx,
            buffer_cap_bytes: cfg.buffer_cap_bytes,
            epoch: 0,
            next_seq: 0,
            tx_queue: VecDeque::new(),
            retx_queue: VecDeque::new(),
            retx_counts: HashMap::new(),
            meta: HashMap::new(),
            rx_buffers: HashMap::new(),
            rx_ready: BTreeMap::new(),
            release_gate: 0,
            dead_rx: HashSet::new(),
            counts: AuditCounts::default(),
        }
    }

    pub fn mode(&self) -> RlcMode {
        self.mode
    }

    pub fn header_bytes(&self) -> u64 {
        self.header_bytes
    }

    pub fn counts(&self) -> AuditCounts {
        self.counts
    }

    /// Appends an SDU FIFO. Returns its sequence number, or `None` when the
    /// configured buffer cap rejects it.
    pub fn enqueue_sdu(&mut self, size_bytes: u64, tag: u64, now: SimTime) -> Option<u64> {
        assert!(size_bytes >= 1, "empty SDU");
        if self.buffer_cap_bytes > 0 && self.queued_payload_bytes() + size_bytes > self.buffer_cap_bytes
        {
            self.counts.discarded_at_enqueue += 1;
            return None;
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.meta.insert(
            seq,
            SduMeta {
                size: size_bytes,
                tag,
                enqueue_time: now,
                status: SduStatus::Open,
            },
        );
        self.tx_queue.push_back(TxSdu {
            seq,
            size: size_bytes,
            next_offset: 0,
        });
        self.counts.enqueued += 1;
        Some(seq)
    }

    fn queued_payload_bytes(&self) -> u64 {
        let fresh: u64 = self
            .tx_queue
            .iter()
            .map(|s| s.size - s.next_offset)
            .sum();
        let retx: u64 = self.retx_queue.iter().map(|p| p.len).sum();
        fresh + retx
    }

    /// Payload bytes the MAC still has to carry for this entity, including
    /// AM retransmissions.
    pub fn queued_bytes(&self) -> u64 {
        self.queued_payload_bytes()
    }

    pub fn has_tx_data(&self) -> bool {
        !self.retx_queue.is_empty() || self.tx_queue.iter().any(|s| s.next_offset < s.size)
    }

    /// Hands the MAC the next PDU fitting in `max_bytes` (header included).
    /// AM serves the retransmission queue first; an oversized retransmission
    /// is re-segmented so its head fits. Returns `None` when nothing fits or
    /// nothing is queued.
    pub fn next_pdu(&mut self, max_bytes: u64) -> Option<RlcPdu> {
        if max_bytes < self.header_bytes + 1 {
            return None;
        }
        let budget = max_bytes - self.header_bytes;

        if self.mode == RlcMode::Am {
            if let Some(mut pdu) = self.retx_queue.pop_front() {
                if pdu.len > budget {
                    let count = self
                        .retx_counts
                        .get(&(pdu.sdu_seq, pdu.offset))
                        .copied()
                        .unwrap_or(0);
                    let tail = RlcPdu {
                        sdu_seq: pdu.sdu_seq,
                        offset: pdu.offset + budget,
                        len: pdu.len - budget,
                        is_last: pdu.is_last,
                        epoch: pdu.epoch,
                    };
                    self.retx_counts.insert((tail.sdu_seq, tail.offset), count);
                    self.retx_queue.push_front(tail);
                    pdu.len = budget;
                    pdu.is_last = false;
                }
                return Some(pdu);
            }
        }

        while let Some(head) = self.tx_queue.front_mut() {
            if self.meta[&head.seq].status != SduStatus::Open {
                self.tx_queue.pop_front();
                continue;
            }
            let remaining = head.size - head.next_offset;
            if remaining == 0 {
                self.tx_queue.pop_front();
                continue;
            }
            let len = remaining.min(budget);
            let pdu = RlcPdu {
                sdu_seq: head.seq,
                offset: head.next_offset,
                len,
                is_last: head.next_offset + len == head.size,
                epoch: self.epoch,
            };
            head.next_offset += len;
            if head.next_offset == head.size {
                self.tx_queue.pop_front();
            }
            return Some(pdu);
        }
        None
    }

    /// MAC verdict for one transmitted PDU: an ack is bookkeeping only; a
    /// drop is final in UM, and in AM requeues the segment until the loss
    /// budget is exhausted, at which point the owning SDU fails.
    pub fn on_pdu_outcome(&mut self, pdu: &RlcPdu, delivered: bool) -> PduOutcome {
        if pdu.epoch != self.epoch {
            return PduOutcome::None;
        }
        if delivered || self.mode == RlcMode::Um {
            return PduOutcome::None;
        }
        let status = self.meta.get(&pdu.sdu_seq).map(|m| m.status);
        if status != Some(SduStatus::Open) {
            return PduOutcome::None;
        }
        let count = self.retx_counts.entry((pdu.sdu_seq, pdu.offset)).or_insert(0);
        *count += 1;
        if *count >= self.am_max_retx {
            let seq = pdu.sdu_seq;
            self.mark_failed(seq);
            PduOutcome::SduFailed(seq)
        } else {
            self.retx_queue.push_back(*pdu);
            PduOutcome::RetxQueued
        }
    }

    fn mark_failed(&mut self, seq: u64) {
        if let Some(m) = self.meta.get_mut(&seq) {
            m.status = SduStatus::Failed;
        }
        self.counts.failed += 1;
        self.retx_queue.retain(|p| p.sdu_seq != seq);
        self.retx_counts.retain(|(s, _), _| *s != seq);
        self.tx_queue.retain(|s| s.seq != seq);
        self.rx_buffers.remove(&seq);
        self.rx_ready.remove(&seq);
    }

    /// Receiver side: one decoded segment arrives. Duplicates are ignored
    /// idempotently; the SDU completes exactly when its whole byte range is
    /// covered. AM holds completed SDUs until all predecessors resolved.
    pub fn rx_deliver(&mut self, pdu: &RlcPdu, now: SimTime) -> Vec<DeliveredSdu> {
        if pdu.epoch != self.epoch || self.dead_rx.contains(&pdu.sdu_seq) {
            return Vec::new();
        }
        let Some(m) = self.meta.get(&pdu.sdu_seq) else {
            return Vec::new();
        };
        if m.status != SduStatus::Open {
            return Vec::new();
        }
        let size = m.size;
        let buf = self.rx_buffers.entry(pdu.sdu_seq).or_default();
        if buf.segments.contains_key(&pdu.offset) {
            return Vec::new();
        }
        buf.segments.insert(pdu.offset, pdu.len);
        buf.covered += pdu.len;
        debug_assert!(buf.covered <= size, "overlapping segments");
        if buf.covered < size {
            return Vec::new();
        }
        self.rx_buffers.remove(&pdu.sdu_seq);
        match self.mode {
            RlcMode::Um => {
                let m = self.meta.get_mut(&pdu.sdu_seq).expect("meta");
                m.status = SduStatus::Delivered;
                self.counts.delivered += 1;
                vec![DeliveredSdu {
                    seq: pdu.sdu_seq,
                    size_bytes: size,
                    tag: m.tag,
                    enqueue_time: m.enqueue_time,
                    delivered_at: now,
                }]
            }
            RlcMode::Am => {
                self.rx_ready.insert(pdu.sdu_seq, now);
                self.release_in_order(now)
            }
        }
    }

    /// Releases every completed SDU whose predecessors have all resolved.
    /// Call after a failure outcome too: a failed SDU unblocks successors.
    pub fn release_in_order(&mut self, now: SimTime) -> Vec<DeliveredSdu> {
        let mut out = Vec::new();
        while self.release_gate < self.next_seq {
            let seq = self.release_gate;
            let status = self.meta[&seq].status;
            match status {
                SduStatus::Failed | SduStatus::Cancelled | SduStatus::Delivered => {
                    self.release_gate += 1;
                }
                SduStatus::Open => {
                    if self.rx_ready.remove(&seq).is_some() {
                        let m = self.meta.get_mut(&seq).expect("meta");
                        m.status = SduStatus::Delivered;
                        self.counts.delivered += 1;
                        out.push(DeliveredSdu {
                            seq,
                            size_bytes: m.size,
                            tag: m.tag,
                            enqueue_time: m.enqueue_time,
                            delivered_at: now,
                        });
                        self.release_gate += 1;
                    } else {
                        break;
                    }
                }
            }
        }
        out
    }

    /// Drops the partial reassembly buffer of one SDU and swallows any of
    /// its segments that arrive later (URLLC deadline expiry).
    pub fn discard_rx(&mut self, seq: u64) {
        self.rx_buffers.remove(&seq);
        self.dead_rx.insert(seq);
        if let Some(m) = self.meta.get_mut(&seq) {
            if m.status == SduStatus::Open {
                m.status = SduStatus::Cancelled;
                self.counts.cancelled += 1;
            }
        }
    }

    /// Removes all queued and in-flight state. PDUs segmented before the
    /// flush become inert: stale deliveries and MAC verdicts are ignored.
    pub fn flush(&mut self) {
        self.epoch += 1;
        for m in self.meta.values_mut() {
            if m.status == SduStatus::Open {
                m.status = SduStatus::Cancelled;
                self.counts.cancelled += 1;
            }
        }
        self.tx_queue.clear();
        self.retx_queue.clear();
        self.retx_counts.clear();
        self.rx_buffers.clear();
        self.rx_ready.clear();
        self.dead_rx.clear();
        self.release_gate = self.next_seq;
    }
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        // Segmentation partitions the SDU: contiguous, non-overlapping
        // offsets that sum to its size, with is_last on the final PDU only.
        #[test]
        fn segmentation_partitions_sdu(size in 1u64..200_000, budget in 6u64..20_000) {
            let mut e = RlcEntity::new(RlcMode::Am, &RlcConfig::default());
            e.enqueue_sdu(size, 0, SimTime::ZERO).unwrap();
            let mut pdus = Vec::new();
            while let Some(p) = e.next_pdu(budget) {
                pdus.push(p);
            }
            let mut expected_offset = 0u64;
            for (i, p) in pdus.iter().enumerate() {
                prop_assert_eq!(p.offset, expected_offset);
                prop_assert!(p.len >= 1);
                prop_assert!(p.len + e.header_bytes() <= budget);
                expected_offset += p.len;
                prop_assert_eq!(p.is_last, i == pdus.len() - 1);
            }
            prop_assert_eq!(expected_offset, size);
        }
    }
}
