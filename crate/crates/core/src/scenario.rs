//! One full simulation run: placement, per-TTI scheduling with cross-sector
//! interference, HARQ and RLC delivery, URLLC deadline tracking, the n-sync
//! learning rounds, and KPI extraction.
//!
//! The run is time-driven at TTI boundaries for radio events and
//! event-driven for everything else. A run is deterministic in (config,
//! seed); independent runs share no state and may execute in parallel.

use crate::config::ScenarioConfig;
use crate::engine::{EventQueue, RngStream, SimTime};
use crate::fl::{self, LearnerRegistry, Orchestrator, RoundDetail, RoundKpi};
use crate::mac::{CellScheduler, FeedbackOutcome, ProcId, SchedRequest, TtiAllocation};
use crate::metrics::StateTrace;
use crate::radio::{self, build_link, CellGeometry, LinkState, McsEntry, Position};
use crate::rlc::{DeliveredSdu, PduOutcome, RlcEntity, RlcMode, RlcPdu};
use crate::traffic::{self, DueSummary, TrafficCounts, UrllcTracker};
use crate::{Bearer, DeviceId, Direction};
use std::collections::{BTreeMap, HashMap};

/// Scheduling granularity: one 0.5 ms slot.
pub const TTI_NS: u64 = 500_000;
pub const TTI: SimTime = SimTime::from_ns(TTI_NS);

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Diverged(#[from] fl::Diverged),
    #[error("learner setup failed: {0}")]
    UnknownLearner(String),
}

/// Per-grant trace record (emitted when allocation tracing is enabled).
#[derive(Debug, Clone, Copy)]
pub struct GrantRecord {
    pub device: DeviceId,
    pub bearer: Bearer,
    pub prb_start: u16,
    pub prb_len: u16,
    pub mcs_index: u8,
    pub tb_bits: u64,
    pub new_data: bool,
    pub sinr_db: f64,
}

/// Per-(cell, direction, TTI) trace record: raw scheduling facts for
/// independent invariant scans.
#[derive(Debug, Clone)]
pub struct TtiTraceRecord {
    pub tti: u64,
    pub cell: u8,
    pub direction: Direction,
    pub requests: Vec<(DeviceId, Bearer, u64)>,
    pub free_after_urllc: u16,
    pub grants: Vec<GrantRecord>,
}

/// Availability of one URLLC device over the run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceAvailability {
    pub device_id: DeviceId,
    pub avail_ul: f64,
    pub avail_dl: f64,
    pub avail_combined: f64,
}

/// Everything one run produces.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub run_id: String,
    pub seed: u64,
    pub n_ai_devices: u32,
    pub eta: f64,
    pub n_required: u32,
    pub model_bytes: u64,
    pub config_hash: String,
    pub config_echo: String,
    pub urllc: Vec<DeviceAvailability>,
    pub ai_rounds: Vec<RoundKpi>,
    pub ai_detail: Vec<RoundDetail>,
    pub traffic: TrafficCounts,
    pub traffic_conserved: bool,
    pub due: DueSummary,
    pub alloc_trace: Option<Vec<TtiTraceRecord>>,
    /// Per-direction application-layer state traces of URLLC devices.
    pub urllc_traces: BTreeMap<(DeviceId, Direction), StateTrace>,
}

enum Ev {
    TtiBoundary,
    PacketArrival {
        packet: traffic::PacketId,
    },
    PacketDeadline {
        packet: traffic::PacketId,
    },
    TbReceived {
        device: DeviceId,
        bearer: Bearer,
        direction: Direction,
        pdus: Vec<RlcPdu>,
    },
    HarqFeedback {
        cell: usize,
        direction: Direction,
        proc: ProcId,
        ack: bool,
    },
    ComputeDone {
        device_index: usize,
        round: u64,
    },
    RoundTrigger {
        round: u64,
    },
    MetricSample,
}

struct DeviceCtx {
    id: DeviceId,
    bearer: Bearer,
    cell: usize,
}

struct Sim {
    cfg: ScenarioConfig,
    horizon: SimTime,
    mcs_table: Vec<McsEntry>,
    devices: Vec<DeviceCtx>,
    links: Vec<LinkState>,
    cell_members: [Vec<DeviceId>; 3],
    rlc: HashMap<(DeviceId, Bearer, Direction), RlcEntity>,
    sched: HashMap<(usize, Direction), CellScheduler>,
    est_sinr: HashMap<(DeviceId, Direction), f64>,
    rng_decode: RngStream,
    traffic: UrllcTracker,
    orchestrator: Option<Orchestrator>,
    urllc_count: u32,
    fatal: Option<SimError>,
    trace: Option<Vec<TtiTraceRecord>>,
    traffic_conserved: bool,
}

impl Sim {
    fn new(cfg: ScenarioConfig, seed: u64) -> Result<Self, SimError> {
        let horizon = cfg.horizon();
        let geom = CellGeometry {
            gnb: Position::new(
                cfg.deployment.hall_m[0] / 2.0,
                cfg.deployment.hall_m[1] / 2.0,
                cfg.deployment.gnb_height_m,
            ),
            sector_azimuths_deg: cfg.deployment.sector_azimuths_deg,
        };

        let m = cfg.deployment.urllc_devices;
        let n = cfg.fl.devices;
        let mut placement = RngStream::new(seed, "placement");
        let mut shadowing = RngStream::new(seed, "shadowing");
        let mut blockage = RngStream::new(seed, "blockage");

        let mut devices = Vec::with_capacity((m + n) as usize);
        let mut links = Vec::with_capacity((m + n) as usize);
        let mut cell_members: [Vec<DeviceId>; 3] = Default::default();
        let mut rlc = HashMap::new();
        for id in 0..(m + n) {
            let bearer = if id < m { Bearer::Urllc } else { Bearer::Ai };
            let pos = Position::new(
                placement.range(0.0, cfg.deployment.hall_m[0]),
                placement.range(0.0, cfg.deployment.hall_m[1]),
                cfg.deployment.device_height_m,
            );
            let link = build_link(&cfg.radio, &geom, id, &pos, &mut shadowing, &mut blockage);
            let cell = link.serving_cell;
            cell_members[cell].push(id);
            let mode = match bearer {
                Bearer::Urllc => RlcMode::Um,
                Bearer::Ai => RlcMode::Am,
            };
            for dir in Direction::BOTH {
                rlc.insert((id, bearer, dir), RlcEntity::new(mode, &cfg.rlc));
            }
            devices.push(DeviceCtx { id, bearer, cell });
            links.push(link);
        }

        let mut sched = HashMap::new();
        for cell in 0..3 {
            for dir in Direction::BOTH {
                let (urllc_max, ai_max) = match dir {
                    Direction::Ul => (cfg.mac.max_tx_urllc_ul, cfg.mac.max_tx_ai_ul),
                    Direction::Dl => (cfg.mac.max_tx_urllc_dl, cfg.mac.max_tx_ai_dl),
                };
                sched.insert(
                    (cell, dir),
                    CellScheduler::new(cfg.radio.prbs, urllc_max, ai_max),
                );
            }
        }

        // Initial SINR estimates from a nominal noise-only link budget; the
        // outer loop converges onto measured values within a few grants.
        let mut est_sinr = HashMap::new();
        for d in &devices {
            let link = &links[d.id as usize];
            let gain = link.sectors[d.cell].gain_db(&cfg.radio);
            let nominal_prbs = 12u16.min(cfg.radio.prbs);
            let noise = radio::noise_mw(&cfg.radio, nominal_prbs);
            for dir in Direction::BOTH {
                let s_mw = match dir {
                    Direction::Ul => {
                        radio::dbm_to_mw(radio::watts_to_dbm(cfg.radio.tx_power_ul_w) + gain)
                    }
                    Direction::Dl => {
                        radio::dbm_to_mw(radio::watts_to_dbm(cfg.radio.tx_power_dl_w) + gain)
                            * nominal_prbs as f64
                            / cfg.radio.prbs as f64
                    }
                };
                est_sinr.insert((d.id, dir), radio::sinr_db(s_mw, noise, 0.0));
            }
        }

        let orchestrator = if n > 0 {
            let learner = LearnerRegistry::builtin()
                .create(&cfg.fl.learner, &cfg.fl)
                .map_err(|e| SimError::UnknownLearner(e.to_string()))?;
            let mut learner_rng = RngStream::new(seed, "learner");
            Some(Orchestrator::new(&cfg.fl, learner, &mut learner_rng))
        } else {
            None
        };

        let urllc_ids: Vec<DeviceId> = (0..m).collect();
        let trace = cfg.sim.trace_allocations.then(Vec::new);
        Ok(Sim {
            horizon,
            mcs_table: radio::default_mcs_table(),
            devices,
            links,
            cell_members,
            rlc,
            sched,
            est_sinr,
            rng_decode: RngStream::new(seed, "decode"),
            traffic: UrllcTracker::new(&urllc_ids),
            orchestrator,
            urllc_count: m,
            fatal: None,
            trace,
            traffic_conserved: true,
            cfg,
        })
    }

    fn entity(&mut self, device: DeviceId, bearer: Bearer, dir: Direction) -> &mut RlcEntity {
        self.rlc.get_mut(&(device, bearer, dir)).expect("entity")
    }

    fn ai_device_id(&self, index: usize) -> DeviceId {
        self.urllc_count + index as u32
    }

    fn ai_index(&self, device: DeviceId) -> usize {
        (device - self.urllc_count) as usize
    }

    fn handle(&mut self, q: &mut EventQueue<Ev>, now: SimTime, ev: Ev) {
        if self.fatal.is_some() {
            return;
        }
        match ev {
            Ev::TtiBoundary => self.on_tti(q, now),
            Ev::PacketArrival { packet } => self.on_packet_arrival(packet, now),
            Ev::PacketDeadline { packet } => self.on_packet_deadline(packet, now),
            Ev::TbReceived {
                device,
                bearer,
                direction,
                pdus,
            } => self.on_tb_received(q, device, bearer, direction, pdus, now),
            Ev::HarqFeedback {
                cell,
                direction,
                proc,
                ack,
            } => self.on_harq_feedback(q, cell, direction, proc, ack, now),
            Ev::ComputeDone {
                device_index,
                round,
            } => self.on_compute_done(device_index, round, now),
            Ev::RoundTrigger { round } => self.on_round_trigger(q, round, now),
            Ev::MetricSample => {
                self.traffic_conserved = self.traffic.conservation_holds(self.horizon);
            }
        }
    }

    fn on_packet_arrival(&mut self, packet: traffic::PacketId, now: SimTime) {
        let rec = *self.traffic.record(packet);
        let bytes = self.cfg.urllc.packet_bytes(rec.direction);
        if let Some(seq) = self
            .entity(rec.device, Bearer::Urllc, rec.direction)
            .enqueue_sdu(bytes, packet as u64, now)
        {
            self.traffic.bind_sdu(packet, seq);
        }
    }

    fn on_packet_deadline(&mut self, packet: traffic::PacketId, now: SimTime) {
        let rec = *self.traffic.record(packet);
        if let Some(seq) = self.traffic.on_deadline(packet, now) {
            self.entity(rec.device, Bearer::Urllc, rec.direction)
                .discard_rx(seq);
        }
    }

    fn collect_requests(&self, cell: usize, dir: Direction) -> Vec<SchedRequest> {
        let mut out = Vec::new();
        for &id in &self.cell_members[cell] {
            let bearer = self.devices[id as usize].bearer;
            let queued = self.rlc[&(id, bearer, dir)].queued_bytes();
            if queued > 0 {
                out.push(SchedRequest {
                    device: id,
                    bearer,
                    queued_bytes: queued,
                });
            }
        }
        out
    }

    fn on_tti(&mut self, q: &mut EventQueue<Ev>, now: SimTime) {
        let tti = now.as_ns() / TTI_NS;
        for dir in Direction::BOTH {
            let mut allocs: Vec<TtiAllocation> = Vec::with_capacity(3);
            let mut request_snapshots = Vec::with_capacity(3);
            for cell in 0..3 {
                let requests = self.collect_requests(cell, dir);
                // Link adaptation off the smoothed measured SINR.
                let mut mcs_of: HashMap<DeviceId, McsEntry> = HashMap::new();
                for r in &requests {
                    let est = self.est_sinr[&(r.device, dir)];
                    let target = match r.bearer {
                        Bearer::Urllc => self.cfg.radio.bler_target_urllc,
                        Bearer::Ai => self.cfg.radio.bler_target_ai,
                    };
                    mcs_of.insert(
                        r.device,
                        *radio::select_mcs(&self.mcs_table, est, target, self.cfg.radio.bler_slope_db),
                    );
                }
                let alloc = self
                    .sched
                    .get_mut(&(cell, dir))
                    .expect("scheduler")
                    .schedule_tti(
                        tti,
                        &requests,
                        |device, _| mcs_of[&device],
                        self.cfg.radio.overhead,
                        self.cfg.rlc.header_bytes,
                    );
                request_snapshots.push(requests);
                allocs.push(alloc);
            }

            // Fill new-data transport blocks from the RLC queues.
            for cell in 0..3 {
                let grants: Vec<_> = allocs[cell].grants.iter().filter(|g| g.new_data).copied().collect();
                for g in grants {
                    let header = self.cfg.rlc.header_bytes;
                    let entity = self.entity(g.device, g.bearer, dir);
                    let mut budget = g.tb_bits / 8;
                    let mut pdus = Vec::new();
                    while budget >= header + 1 {
                        match entity.next_pdu(budget) {
                            Some(p) => {
                                budget -= p.len + header;
                                pdus.push(p);
                            }
                            None => break,
                        }
                    }
                    self.sched
                        .get_mut(&(cell, dir))
                        .expect("scheduler")
                        .attach_pdus(g.proc, pdus);
                }
            }

            // Resolve every transmission against the full interference picture.
            let rtt = TTI * self.cfg.mac.harq_rtt_ttis;
            for cell in 0..3 {
                let mut grant_records = Vec::new();
                for gi in 0..allocs[cell].grants.len() {
                    let g = allocs[cell].grants[gi];
                    let Some(proc) = self.sched[&(cell, dir)].process(g.proc) else {
                        continue;
                    };
                    let pdus = proc.pdus.clone();
                    let sinr = self.transmission_sinr(cell, dir, &g, &allocs);
                    let est = self.est_sinr.get_mut(&(g.device, dir)).expect("estimate");
                    let alpha = self.cfg.radio.sinr_ema_alpha;
                    *est = alpha * sinr + (1.0 - alpha) * *est;
                    let ok = radio::decode(&self.cfg.radio, sinr, &g.mcs, &mut self.rng_decode);
                    if self.trace.is_some() {
                        grant_records.push(GrantRecord {
                            device: g.device,
                            bearer: g.bearer,
                            prb_start: g.prb_start,
                            prb_len: g.prb_len,
                            mcs_index: g.mcs.index,
                            tb_bits: g.tb_bits,
                            new_data: g.new_data,
                            sinr_db: sinr,
                        });
                    }
                    if ok {
                        q.schedule(
                            now + TTI,
                            Ev::TbReceived {
                                device: g.device,
                                bearer: g.bearer,
                                direction: dir,
                                pdus,
                            },
                        );
                    }
                    q.schedule(
                        now + rtt,
                        Ev::HarqFeedback {
                            cell,
                            direction: dir,
                            proc: g.proc,
                            ack: ok,
                        },
                    );
                }
                if let Some(trace) = &mut self.trace {
                    trace.push(TtiTraceRecord {
                        tti,
                        cell: cell as u8,
                        direction: dir,
                        requests: request_snapshots[cell]
                            .iter()
                            .map(|r| (r.device, r.bearer, r.queued_bytes))
                            .collect(),
                        free_after_urllc: allocs[cell].free_after_urllc,
                        grants: grant_records,
                    });
                    grant_records = Vec::new();
                }
                let _ = grant_records;
            }
        }

        let next = now + TTI;
        if next < self.horizon {
            q.schedule(next, Ev::TtiBoundary);
        }
    }

    /// SINR of one grant given every concurrent allocation in this
    /// direction. Uplink: full device power over the grant, interference
    /// from other-cell uplinks weighted by PRB overlap. Downlink: flat
    /// power spectral density across the carrier, interference from
    /// other sectors of the same site.
    fn transmission_sinr(
        &self,
        cell: usize,
        dir: Direction,
        g: &crate::mac::Grant,
        allocs: &[TtiAllocation],
    ) -> f64 {
        let r = &self.cfg.radio;
        let link = &self.links[g.device as usize];
        let noise = radio::noise_mw(r, g.prb_len);
        let mut interference = 0.0;
        match dir {
            Direction::Ul => {
                let s_mw =
                    radio::dbm_to_mw(radio::watts_to_dbm(r.tx_power_ul_w) + link.sectors[cell].gain_db(r));
                for (oc, alloc) in allocs.iter().enumerate() {
                    if oc == cell {
                        continue;
                    }
                    for og in &alloc.grants {
                        let overlap =
                            radio::prb_overlap(g.prb_start, g.prb_len, og.prb_start, og.prb_len);
                        if overlap == 0 {
                            continue;
                        }
                        let olink = &self.links[og.device as usize];
                        let p_dbm =
                            radio::watts_to_dbm(r.tx_power_ul_w) + olink.sectors[cell].gain_db(r);
                        interference +=
                            radio::dbm_to_mw(p_dbm) * overlap as f64 / og.prb_len as f64;
                    }
                }
                radio::sinr_db(s_mw, noise, interference)
            }
            Direction::Dl => {
                let frac = g.prb_len as f64 / r.prbs as f64;
                let s_mw = radio::dbm_to_mw(
                    radio::watts_to_dbm(r.tx_power_dl_w) + link.sectors[cell].gain_db(r),
                ) * frac;
                for (oc, alloc) in allocs.iter().enumerate() {
                    if oc == cell {
                        continue;
                    }
                    for og in &alloc.grants {
                        let overlap =
                            radio::prb_overlap(g.prb_start, g.prb_len, og.prb_start, og.prb_len);
                        if overlap == 0 {
                            continue;
                        }
                        let p_dbm =
                            radio::watts_to_dbm(r.tx_power_dl_w) + link.sectors[oc].gain_db(r);
                        interference += radio::dbm_to_mw(p_dbm) * overlap as f64 / r.prbs as f64;
                    }
                }
                radio::sinr_db(s_mw, noise, interference)
            }
        }
    }

    fn on_tb_received(
        &mut self,
        q: &mut EventQueue<Ev>,
        device: DeviceId,
        bearer: Bearer,
        dir: Direction,
        pdus: Vec<RlcPdu>,
        now: SimTime,
    ) {
        let entity = self.entity(device, bearer, dir);
        let mut released = Vec::new();
        for pdu in &pdus {
            released.extend(entity.rx_deliver(pdu, now));
        }
        self.route_delivered(q, device, bearer, dir, released, now);
    }

    fn route_delivered(
        &mut self,
        q: &mut EventQueue<Ev>,
        device: DeviceId,
        bearer: Bearer,
        dir: Direction,
        released: Vec<DeliveredSdu>,
        now: SimTime,
    ) {
        for sdu in released {
            match bearer {
                Bearer::Urllc => {
                    self.traffic
                        .on_delivered(device, dir, sdu.seq, sdu.delivered_at);
                }
                Bearer::Ai => {
                    let index = self.ai_index(device);
                    let orch = self.orchestrator.as_mut().expect("orchestrator");
                    match dir {
                        Direction::Dl => {
                            if let Some(compute_at) = orch.on_dl_delivered(index, sdu.tag, now) {
                                q.schedule(
                                    compute_at,
                                    Ev::ComputeDone {
                                        device_index: index,
                                        round: sdu.tag,
                                    },
                                );
                            }
                        }
                        Direction::Ul => match orch.on_ul_delivered(index, sdu.tag, now) {
                            Ok(Some(trigger_at)) => {
                                q.schedule(trigger_at, Ev::RoundTrigger { round: sdu.tag + 1 });
                            }
                            Ok(None) => {}
                            Err(e) => {
                                self.fatal = Some(e.into());
                                return;
                            }
                        },
                    }
                }
            }
        }
    }

    fn on_harq_feedback(
        &mut self,
        q: &mut EventQueue<Ev>,
        cell: usize,
        dir: Direction,
        proc: ProcId,
        ack: bool,
        now: SimTime,
    ) {
        let outcome = self
            .sched
            .get_mut(&(cell, dir))
            .expect("scheduler")
            .on_feedback(proc, ack);
        match outcome {
            FeedbackOutcome::Delivered(p) => {
                let entity = self.entity(p.device, p.bearer, dir);
                for pdu in &p.pdus {
                    entity.on_pdu_outcome(pdu, true);
                }
            }
            FeedbackOutcome::Dropped(p) => {
                let entity = self.entity(p.device, p.bearer, dir);
                let mut failed_any = false;
                for pdu in &p.pdus {
                    if let PduOutcome::SduFailed(_) = entity.on_pdu_outcome(pdu, false) {
                        failed_any = true;
                    }
                }
                if failed_any {
                    // A failed SDU can unblock in-order successors.
                    let released = self.entity(p.device, p.bearer, dir).release_in_order(now);
                    self.route_delivered(q, p.device, p.bearer, dir, released, now);
                }
            }
            FeedbackOutcome::Requeued | FeedbackOutcome::Stale => {}
        }
    }

    fn on_compute_done(&mut self, device_index: usize, round: u64, now: SimTime) {
        let orch = self.orchestrator.as_mut().expect("orchestrator");
        match orch.on_compute_done(device_index, round, now) {
            Ok(true) => {
                let device = self.ai_device_id(device_index);
                let bytes = self.cfg.fl.model_bytes();
                self.entity(device, Bearer::Ai, Direction::Ul)
                    .enqueue_sdu(bytes, round, now);
            }
            Ok(false) => {}
            Err(e) => self.fatal = Some(e.into()),
        }
    }

    fn on_round_trigger(&mut self, q: &mut EventQueue<Ev>, round: u64, now: SimTime) {
        let Some(orch) = self.orchestrator.as_mut() else {
            return;
        };
        if round > 0 {
            orch.finalize_round();
        }
        orch.begin_round(round, now);
        let n = orch.n_devices();
        let bytes = self.cfg.fl.model_bytes();
        for index in 0..n {
            let device = self.ai_device_id(index);
            let cell = self.devices[device as usize].cell;
            // Cancel stale transfers of the previous round end to end:
            // queued SDUs, partial reassembly, and in-flight HARQ processes.
            for dir in Direction::BOTH {
                self.entity(device, Bearer::Ai, dir).flush();
                self.sched
                    .get_mut(&(cell, dir))
                    .expect("scheduler")
                    .purge(device, Bearer::Ai);
            }
            self.entity(device, Bearer::Ai, Direction::Dl)
                .enqueue_sdu(bytes, round, now);
        }
        let _ = q;
    }

    fn into_result(self, run_id: String, seed: u64) -> RunResult {
        let survival = self.cfg.urllc.survival_time();
        let traffic_counts = self.traffic.counts();
        let due = self.traffic.due_summary(self.horizon);
        let traces = self.traffic.finish(self.horizon);
        let mut urllc = Vec::with_capacity(self.urllc_count as usize);
        for dev in 0..self.urllc_count {
            let y_ul = traces[&(dev, Direction::Ul)].apply_survival(survival);
            let y_dl = traces[&(dev, Direction::Dl)].apply_survival(survival);
            urllc.push(DeviceAvailability {
                device_id: dev,
                avail_ul: y_ul.availability(),
                avail_dl: y_dl.availability(),
                avail_combined: y_ul.and(&y_dl).availability(),
            });
        }
        let (ai_rounds, ai_detail) = match &self.orchestrator {
            Some(o) => (o.kpis().to_vec(), o.details().to_vec()),
            None => (Vec::new(), Vec::new()),
        };
        RunResult {
            run_id,
            seed,
            n_ai_devices: self.cfg.fl.devices,
            eta: self.cfg.fl.effective_eta(),
            n_required: self.cfg.fl.effective_n(),
            model_bytes: self.cfg.fl.model_bytes(),
            config_hash: self.cfg.config_hash(),
            config_echo: self.cfg.echo_toml(),
            urllc,
            ai_rounds,
            ai_detail,
            traffic: traffic_counts,
            traffic_conserved: self.traffic_conserved,
            due,
            alloc_trace: self.trace,
            urllc_traces: traces,
        }
    }
}

/// Runs one scenario to completion. Deterministic in (config, seed).
pub fn run_scenario(cfg: &ScenarioConfig, seed: u64) -> Result<RunResult, crate::Error> {
    run_scenario_with_id(cfg, seed, format!("run-s{seed}"))
}

pub fn run_scenario_with_id(
    cfg: &ScenarioConfig,
    seed: u64,
    run_id: String,
) -> Result<RunResult, crate::Error> {
    cfg.validate()?;
    let horizon = cfg.horizon();
    let urllc_cfg = cfg.urllc.clone();
    let m = cfg.deployment.urllc_devices;

    let mut sim = Sim::new(cfg.clone(), seed)?;
    let mut q: EventQueue<Ev> = EventQueue::new();

    // URLLC arrivals and deadlines, pre-scheduled with per-device random
    // phases so bursts never synchronize across devices.
    let mut phase_rng = RngStream::new(seed, "traffic-phase");
    for dev in 0..m {
        for dir in Direction::BOTH {
            let phase = SimTime::from_ns(
                (phase_rng.uniform() * urllc_cfg.period().as_ns() as f64) as u64,
            );
            for gen in traffic::generate(phase, urllc_cfg.period(), horizon) {
                let deadline = gen + urllc_cfg.delay_bound(dir);
                let packet = sim.traffic.register(dev, dir, gen, deadline);
                q.schedule(gen, Ev::PacketArrival { packet });
                q.schedule(deadline, Ev::PacketDeadline { packet });
            }
        }
    }

    if sim.orchestrator.is_some() {
        q.schedule(SimTime::ZERO, Ev::RoundTrigger { round: 0 });
    }
    q.schedule(horizon, Ev::MetricSample);
    // The first TTI boundary goes last so same-instant arrivals and the
    // round start are visible to the scheduler.
    q.schedule(SimTime::ZERO, Ev::TtiBoundary);

    q.run_until(horizon, |q, now, ev| sim.handle(q, now, ev));

    if let Some(err) = sim.fatal.take() {
        return Err(err.into());
    }
    Ok(sim.into_result(run_id, seed))
}
