//! Per-TTI, per-cell, per-direction resource allocation. HARQ
//! retransmissions outrank new data; within new data URLLC strictly
//! outranks AI: no new AI transport block is granted while a URLLC request
//! went unserved and PRBs remained free.
//!
//! Round-robin pointers persist across TTIs per class. Retransmissions
//! reuse their original MCS and PRB count; link adaptation applies to new
//! data only.

use crate::radio::{tb_capacity, McsEntry};
use crate::rlc::RlcPdu;
use crate::{Bearer, DeviceId};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, VecDeque};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MacConfig {
    /// TTIs between a transmission and its HARQ feedback.
    pub harq_rtt_ttis: u64,
    pub max_tx_urllc_ul: u8,
    pub max_tx_urllc_dl: u8,
    pub max_tx_ai_ul: u8,
    pub max_tx_ai_dl: u8,
}

impl Default for MacConfig {
    fn default() -> Self {
        MacConfig {
            harq_rtt_ttis: 4,
            max_tx_urllc_ul: 3,
            max_tx_urllc_dl: 2,
            max_tx_ai_ul: 10,
            max_tx_ai_dl: 10,
        }
    }
}

/// New-data demand of one bearer at TTI start.
#[derive(Debug, Clone, Copy)]
pub struct SchedRequest {
    pub device: DeviceId,
    pub bearer: Bearer,
    pub queued_bytes: u64,
}

pub type ProcId = u64;

/// One outstanding transport block and its retransmission budget.
#[derive(Debug, Clone)]
pub struct HarqProcess {
    pub id: ProcId,
    pub device: DeviceId,
    pub bearer: Bearer,
    pub mcs: McsEntry,
    pub prb_len: u16,
    pub tb_bits: u64,
    pub tx_count: u8,
    pub max_tx: u8,
    pub pdus: Vec<RlcPdu>,
}

#[derive(Debug, Clone, Copy)]
pub struct Grant {
    pub device: DeviceId,
    pub bearer: Bearer,
    pub prb_start: u16,
    pub prb_len: u16,
    pub mcs: McsEntry,
    pub tb_bits: u64,
    pub new_data: bool,
    pub proc: ProcId,
}

/// Result of one scheduling pass, plus the facts the strict-priority
/// invariant is checked against.
#[derive(Debug, Clone)]
pub struct TtiAllocation {
    pub tti: u64,
    pub grants: Vec<Grant>,
    /// URLLC requests with queued data that received no grant this TTI.
    pub urllc_unserved: u16,
    /// PRBs still free once every URLLC grant was placed.
    pub free_after_urllc: u16,
}

#[derive(Debug)]
pub enum FeedbackOutcome {
    /// Transport block acknowledged; process freed.
    Delivered(HarqProcess),
    /// Negative ack with budget left; queued for retransmission.
    Requeued,
    /// Retransmission budget exhausted; the loss is reported to RLC.
    Dropped(HarqProcess),
    /// Process no longer exists (purged by a bearer flush).
    Stale,
}

fn class_index(bearer: Bearer) -> usize {
    match bearer {
        Bearer::Urllc => 0,
        Bearer::Ai => 1,
    }
}

#[derive(Debug, Default)]
struct RetxClass {
    queues: BTreeMap<DeviceId, VecDeque<ProcId>>,
    last_served: Option<DeviceId>,
}

/// Scheduler state for one (cell, direction) pair.
pub struct CellScheduler {
    prbs: u16,
    max_tx: [u8; 2],
    next_proc: ProcId,
    procs: HashMap<ProcId, HarqProcess>,
    retx: [RetxClass; 2],
    last_new_data: [Option<DeviceId>; 2],
}

impl CellScheduler {
    pub fn new(prbs: u16, max_tx_urllc: u8, max_tx_ai: u8) -> Self {
        CellScheduler {
            prbs,
            max_tx: [max_tx_urllc, max_tx_ai],
            next_proc: 0,
            procs: HashMap::new(),
            retx: [RetxClass::default(), RetxClass::default()],
            last_new_data: [None, None],
        }
    }

    pub fn process(&self, id: ProcId) -> Option<&HarqProcess> {
        self.procs.get(&id)
    }

    /// Allocates one TTI: HARQ retransmissions first (URLLC before AI,
    /// round-robin within class), then new URLLC data, then new AI data —
    /// the latter only once every queued URLLC request holds a grant or no
    /// PRB is left.
    pub fn schedule_tti<F>(
        &mut self,
        tti: u64,
        requests: &[SchedRequest],
        mut mcs_for: F,
        overhead: f64,
        header_bytes: u64,
    ) -> TtiAllocation
    where
        F: FnMut(DeviceId, Bearer) -> McsEntry,
    {
        let mut grants = Vec::new();
        let mut cursor: u16 = 0;

        for bearer in [Bearer::Urllc, Bearer::Ai] {
            self.serve_retx(bearer, &mut cursor, &mut grants);
        }

        let urllc_unserved = self.serve_new_data(
            Bearer::Urllc,
            requests,
            &mut cursor,
            &mut grants,
            &mut mcs_for,
            overhead,
            header_bytes,
        );
        let free_after_urllc = self.prbs - cursor;

        if urllc_unserved == 0 || free_after_urllc == 0 {
            self.serve_new_data(
                Bearer::Ai,
                requests,
                &mut cursor,
                &mut grants,
                &mut mcs_for,
                overhead,
                header_bytes,
            );
        }

        debug_assert!(grants.iter().map(|g| g.prb_len as u32).sum::<u32>() <= self.prbs as u32);
        TtiAllocation {
            tti,
            grants,
            urllc_unserved,
            free_after_urllc,
        }
    }

    fn serve_retx(&mut self, bearer: Bearer, cursor: &mut u16, grants: &mut Vec<Grant>) {
        let ci = class_index(bearer);
        loop {
            let devices: Vec<DeviceId> = self.retx[ci].queues.keys().copied().collect();
            if devices.is_empty() {
                return;
            }
            let order = rotate_after(&devices, self.retx[ci].last_served);
            let mut progressed = false;
            for device in order {
                let free = self.prbs - *cursor;
                if free == 0 {
                    return;
                }
                let queue = self.retx[ci].queues.get_mut(&device).expect("retx queue");
                let Some(&pid) = queue.front() else { continue };
                let fits = self.procs[&pid].prb_len <= free;
                if !fits {
                    continue;
                }
                queue.pop_front();
                if queue.is_empty() {
                    self.retx[ci].queues.remove(&device);
                }
                let proc = self.procs.get_mut(&pid).expect("live process");
                proc.tx_count += 1;
                grants.push(Grant {
                    device,
                    bearer,
                    prb_start: *cursor,
                    prb_len: proc.prb_len,
                    mcs: proc.mcs,
                    tb_bits: proc.tb_bits,
                    new_data: false,
                    proc: pid,
                });
                *cursor += proc.prb_len;
                self.retx[ci].last_served = Some(device);
                progressed = true;
            }
            if !progressed {
                return;
            }
        }
    }

    /// Grants new-data TBs round-robin; at most one per device per TTI.
    /// Returns how many requests of this class got nothing.
    #[allow(clippy::too_many_arguments)]
    fn serve_new_data<F>(
        &mut self,
        bearer: Bearer,
        requests: &[SchedRequest],
        cursor: &mut u16,
        grants: &mut Vec<Grant>,
        mcs_for: &mut F,
        overhead: f64,
        header_bytes: u64,
    ) -> u16
    where
        F: FnMut(DeviceId, Bearer) -> McsEntry,
    {
        let ci = class_index(bearer);
        let mut candidates: Vec<&SchedRequest> = requests
            .iter()
            .filter(|r| r.bearer == bearer && r.queued_bytes > 0)
            .collect();
        candidates.sort_by_key(|r| r.device);
        let ids: Vec<DeviceId> = candidates.iter().map(|r| r.device).collect();
        let order = rotate_after(&ids, self.last_new_data[ci]);

        let mut unserved = 0u16;
        for device in order {
            let req = candidates
                .iter()
                .find(|r| r.device == device)
                .expect("candidate");
            let free = self.prbs - *cursor;
            if free == 0 {
                unserved += 1;
                continue;
            }
            let mcs = mcs_for(device, bearer);
            let wanted_bits = 8 * (req.queued_bytes + header_bytes);
            let prb_len = prbs_for(wanted_bits, &mcs, overhead, free);
            let tb_bits = tb_capacity(prb_len, &mcs, overhead);
            if tb_bits / 8 < header_bytes + 1 {
                // Too few bits even for one minimal PDU: leave the PRBs alone.
                unserved += 1;
                continue;
            }
            let pid = self.next_proc;
            self.next_proc += 1;
            self.procs.insert(
                pid,
                HarqProcess {
                    id: pid,
                    device,
                    bearer,
                    mcs,
                    prb_len,
                    tb_bits,
                    tx_count: 1,
                    max_tx: self.max_tx[ci],
                    pdus: Vec::new(),
                },
            );
            grants.push(Grant {
                device,
                bearer,
                prb_start: *cursor,
                prb_len,
                mcs,
                tb_bits,
                new_data: true,
                proc: pid,
            });
            *cursor += prb_len;
            self.last_new_data[ci] = Some(device);
        }
        unserved
    }

    /// Stores the segments carried by a freshly granted transport block.
    /// A new-data grant whose RLC pull came up empty is abandoned here.
    pub fn attach_pdus(&mut self, pid: ProcId, pdus: Vec<RlcPdu>) {
        if pdus.is_empty() {
            self.procs.remove(&pid);
            return;
        }
        self.procs.get_mut(&pid).expect("live process").pdus = pdus;
    }

    pub fn on_feedback(&mut self, pid: ProcId, ack: bool) -> FeedbackOutcome {
        let Some(proc) = self.procs.get(&pid) else {
            return FeedbackOutcome::Stale;
        };
        if ack {
            return FeedbackOutcome::Delivered(self.procs.remove(&pid).expect("live process"));
        }
        if proc.tx_count < proc.max_tx {
            let (device, bearer) = (proc.device, proc.bearer);
            self.retx[class_index(bearer)]
                .queues
                .entry(device)
                .or_default()
                .push_back(pid);
            FeedbackOutcome::Requeued
        } else {
            FeedbackOutcome::Dropped(self.procs.remove(&pid).expect("live process"))
        }
    }

    /// Drops every process and pending retransmission of one bearer of one
    /// device (bearer flush). In-flight feedback for them resolves as stale.
    pub fn purge(&mut self, device: DeviceId, bearer: Bearer) {
        let ci = class_index(bearer);
        self.retx[ci].queues.remove(&device);
        self.procs
            .retain(|_, p| !(p.device == device && p.bearer == bearer));
    }
}

/// Order `ids` (sorted ascending) starting just after `last`.
fn rotate_after(ids: &[DeviceId], last: Option<DeviceId>) -> Vec<DeviceId> {
    match last {
        None => ids.to_vec(),
        Some(last) => {
            let pivot = ids.partition_point(|&d| d <= last);
            let mut out = Vec::with_capacity(ids.len());
            out.extend_from_slice(&ids[pivot..]);
            out.extend_from_slice(&ids[..pivot]);
            out
        }
    }
}

/// Smallest PRB count whose capacity covers `wanted_bits`, capped at `free`.
fn prbs_for(wanted_bits: u64, mcs: &McsEntry, overhead: f64, free: u16) -> u16 {
    for p in 1..=free {
        if tb_capacity(p, mcs, overhead) >= wanted_bits {
            return p;
        }
    }
    free
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radio::default_mcs_table;

    fn mcs(index: usize) -> McsEntry {
        default_mcs_table()[index - 1]
    }

    fn req(device: DeviceId, bearer: Bearer, queued: u64) -> SchedRequest {
        SchedRequest {
            device,
            bearer,
            queued_bytes: queued,
        }
    }

    #[test]
    fn urllc_granted_before_ai_when_capacity_for_one() {
        // 4 PRBs at mid MCS fit one 64+5 byte packet and nothing more.
        let mut s = CellScheduler::new(4, 3, 10);
        let alloc = s.schedule_tti(
            0,
            &[req(1, Bearer::Ai, 2_000_000), req(0, Bearer::Urllc, 64)],
            |_, _| mcs(5),
            0.14,
            5,
        );
        assert_eq!(alloc.grants.len(), 1);
        assert_eq!(alloc.grants[0].bearer, Bearer::Urllc);
        assert_eq!(alloc.urllc_unserved, 0);
    }

    #[test]
    fn ai_alone_is_granted() {
        let mut s = CellScheduler::new(106, 3, 10);
        let alloc = s.schedule_tti(0, &[req(5, Bearer::Ai, 10_000)], |_, _| mcs(10), 0.14, 5);
        assert_eq!(alloc.grants.len(), 1);
        assert_eq!(alloc.grants[0].bearer, Bearer::Ai);
        assert!(alloc.grants[0].new_data);
    }

    #[test]
    fn round_robin_rotates_across_ttis() {
        // Room for exactly one URLLC TB per TTI.
        let mut s = CellScheduler::new(4, 3, 10);
        let requests = [req(0, Bearer::Urllc, 64), req(1, Bearer::Urllc, 64)];
        let a = s.schedule_tti(0, &requests, |_, _| mcs(5), 0.14, 5);
        assert_eq!(a.grants.len(), 1);
        assert_eq!(a.grants[0].device, 0);
        assert_eq!(a.urllc_unserved, 1);
        let b = s.schedule_tti(1, &requests, |_, _| mcs(5), 0.14, 5);
        assert_eq!(b.grants[0].device, 1, "pointer must advance");
    }

    #[test]
    fn ai_waits_while_urllc_unserved_and_prbs_free() {
        // Device 1 sits at the lowest MCS where 2 leftover PRBs cannot carry
        // header+1 bytes, so it goes unserved while PRBs remain free. AI
        // must not ride them.
        let table = default_mcs_table();
        assert!(tb_capacity(2, &table[0], 0.14) / 8 < 6);
        let mut s = CellScheduler::new(6, 3, 10);
        let requests = [
            req(0, Bearer::Urllc, 170),
            req(1, Bearer::Urllc, 30),
            req(2, Bearer::Ai, 1_000_000),
        ];
        // 170 + 5 bytes need 4 PRBs at entry 10, leaving 2 PRBs free.
        let alloc = s.schedule_tti(
            0,
            &requests,
            |d, _| if d == 0 { mcs(10) } else { mcs(1) },
            0.14,
            5,
        );
        let urllc_grants = alloc
            .grants
            .iter()
            .filter(|g| g.bearer == Bearer::Urllc)
            .count();
        assert_eq!(urllc_grants, 1);
        assert_eq!(alloc.urllc_unserved, 1);
        assert!(alloc.free_after_urllc > 0);
        assert!(
            alloc.grants.iter().all(|g| g.bearer != Bearer::Ai),
            "AI granted while URLLC starved: {:?}",
            alloc.grants
        );
    }

    #[test]
    fn ai_uses_leftover_prbs_once_urllc_served() {
        let mut s = CellScheduler::new(106, 3, 10);
        let requests = [req(0, Bearer::Urllc, 64), req(1, Bearer::Ai, 2_000_000)];
        let alloc = s.schedule_tti(0, &requests, |_, _| mcs(8), 0.14, 5);
        assert_eq!(alloc.urllc_unserved, 0);
        let ai: Vec<_> = alloc.grants.iter().filter(|g| g.bearer == Bearer::Ai).collect();
        assert_eq!(ai.len(), 1);
        let used: u16 = alloc.grants.iter().map(|g| g.prb_len).sum();
        assert_eq!(used, 106, "AI should absorb all leftover PRBs");
    }

    #[test]
    fn prb_ranges_are_disjoint_within_a_tti() {
        let mut s = CellScheduler::new(106, 3, 10);
        let requests: Vec<SchedRequest> = (0..8)
            .map(|d| req(d, if d % 2 == 0 { Bearer::Urllc } else { Bearer::Ai }, 500))
            .collect();
        let alloc = s.schedule_tti(0, &requests, |_, _| mcs(3), 0.14, 5);
        let mut used = vec![false; 106];
        for g in &alloc.grants {
            for p in g.prb_start..g.prb_start + g.prb_len {
                assert!(!used[p as usize], "PRB {p} double-booked");
                used[p as usize] = true;
            }
        }
    }

    fn one_grant(s: &mut CellScheduler, bearer: Bearer) -> Grant {
        let alloc = s.schedule_tti(0, &[req(0, bearer, 64)], |_, _| mcs(5), 0.14, 5);
        let g = alloc.grants[0];
        s.attach_pdus(
            g.proc,
            vec![RlcPdu {
                sdu_seq: 0,
                offset: 0,
                len: 64,
                is_last: true,
                epoch: 0,
            }],
        );
        g
    }

    #[test]
    fn urllc_dl_drops_after_two_nacks() {
        let mut s = CellScheduler::new(106, 2, 10);
        let g = one_grant(&mut s, Bearer::Urllc);
        assert!(matches!(s.on_feedback(g.proc, false), FeedbackOutcome::Requeued));
        // Retransmission grant.
        let alloc = s.schedule_tti(1, &[], |_, _| mcs(5), 0.14, 5);
        assert_eq!(alloc.grants.len(), 1);
        assert!(!alloc.grants[0].new_data);
        assert!(matches!(
            s.on_feedback(g.proc, false),
            FeedbackOutcome::Dropped(p) if p.tx_count == 2
        ));
    }

    #[test]
    fn ack_on_first_attempt_frees_the_process() {
        let mut s = CellScheduler::new(106, 3, 10);
        let g = one_grant(&mut s, Bearer::Urllc);
        assert!(matches!(
            s.on_feedback(g.proc, true),
            FeedbackOutcome::Delivered(p) if p.tx_count == 1
        ));
        assert!(s.process(g.proc).is_none());
    }

    #[test]
    fn ai_survives_nine_nacks_and_delivers_on_tenth() {
        let mut s = CellScheduler::new(106, 3, 10);
        let g = one_grant(&mut s, Bearer::Ai);
        for tti in 1..=9u64 {
            assert!(matches!(s.on_feedback(g.proc, false), FeedbackOutcome::Requeued));
            let alloc = s.schedule_tti(tti, &[], |_, _| mcs(5), 0.14, 5);
            assert_eq!(alloc.grants.len(), 1, "tti {tti}");
        }
        assert!(matches!(
            s.on_feedback(g.proc, true),
            FeedbackOutcome::Delivered(p) if p.tx_count == 10
        ));
    }

    #[test]
    fn retx_outranks_new_data_and_defers_when_too_wide() {
        let mut s = CellScheduler::new(10, 3, 10);
        // Fill the TTI with one wide URLLC TB, then nack it.
        let alloc = s.schedule_tti(0, &[req(0, Bearer::Urllc, 2000)], |_, _| mcs(1), 0.14, 5);
        let wide = alloc.grants[0];
        assert_eq!(wide.prb_len, 10);
        s.attach_pdus(
            wide.proc,
            vec![RlcPdu {
                sdu_seq: 0,
                offset: 0,
                len: 100,
                is_last: false,
                epoch: 0,
            }],
        );
        assert!(matches!(s.on_feedback(wide.proc, false), FeedbackOutcome::Requeued));
        // Retx takes the whole TTI ahead of new data.
        let next = s.schedule_tti(1, &[req(1, Bearer::Urllc, 30)], |_, _| mcs(1), 0.14, 5);
        assert_eq!(next.grants.len(), 1);
        assert_eq!(next.grants[0].proc, wide.proc);
        assert!(!next.grants[0].new_data);
    }

    #[test]
    fn purge_makes_feedback_stale() {
        let mut s = CellScheduler::new(106, 3, 10);
        let g = one_grant(&mut s, Bearer::Ai);
        s.purge(0, Bearer::Ai);
        assert!(matches!(s.on_feedback(g.proc, false), FeedbackOutcome::Stale));
    }
}
