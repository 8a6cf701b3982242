//! The n-sync distributed-learning protocol: a master co-located behind the
//! gNB broadcasts the model to N devices as unicast DL transfers, devices
//! compute and upload, and the master updates the global model from the
//! first n completed uploads. Uploads still in flight when the next round
//! starts are cancelled; late complete uploads are discarded.

pub mod learner;
pub mod problem;

pub use learner::{Learner, LearnerRegistry};
pub use problem::{subset_gradient_variance, DeviceQuadratic, LearnerProblem};

use crate::engine::{RngStream, SimTime};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlConfig {
    /// Number of participating devices (N). Zero disables the workflow.
    pub devices: u32,
    /// Required fraction of uploads per iteration; n = ceil(eta * N).
    pub eta: Option<f64>,
    /// Required upload count per iteration; overrides nothing, must agree
    /// with `eta` when both are set.
    pub n: Option<u32>,
    /// Model parameter count (payload sizing only).
    pub model_params: u64,
    pub bytes_per_param: u64,
    /// Learner strategy name, resolved through the registry.
    pub learner: String,
    pub step_size: f64,
    pub local_steps: u32,
    /// Dimension of the verifiable learner numerics.
    pub dim: usize,
    /// Condition number cap of the generated quadratics.
    pub problem_condition: f64,
    /// Device compute model: base + per-parameter cost.
    pub compute_base_s: f64,
    pub compute_per_param_ns: f64,
    /// Master-side global update cost.
    pub master_compute_s: f64,
}

impl Default for FlConfig {
    fn default() -> Self {
        FlConfig {
            devices: 20,
            eta: None,
            n: None,
            model_params: 500_000,
            bytes_per_param: 4,
            learner: "gradient".to_owned(),
            step_size: 0.25,
            local_steps: 1,
            dim: 10,
            problem_condition: 5.0,
            compute_base_s: 0.05,
            compute_per_param_ns: 100.0,
            master_compute_s: 0.02,
        }
    }
}

impl FlConfig {
    pub fn model_bytes(&self) -> u64 {
        self.bytes_per_param * self.model_params
    }

    /// Uploads required per iteration. Defaults to N (fully synchronous).
    pub fn effective_n(&self) -> u32 {
        match (self.n, self.eta) {
            (Some(n), _) => n,
            (None, Some(eta)) => ((eta * self.devices as f64).ceil() as u32).max(1),
            (None, None) => self.devices,
        }
    }

    pub fn effective_eta(&self) -> f64 {
        if self.devices == 0 {
            return 1.0;
        }
        self.effective_n() as f64 / self.devices as f64
    }

    pub fn compute_delay(&self) -> SimTime {
        SimTime::from_secs_f64(self.compute_base_s)
            + SimTime::from_ns((self.compute_per_param_ns * self.model_params as f64) as u64)
    }

    pub fn master_delay(&self) -> SimTime {
        SimTime::from_secs_f64(self.master_compute_s)
    }
}

/// n-th smallest per-device completion delay plus the master compute cost.
/// Because the master cost is device-independent this equals the minimum
/// over all n-subsets of the subset maximum.
pub fn nth_completion_delay(delays: &[f64], n: usize, master_s: f64) -> f64 {
    assert!(n >= 1, "need at least one upload");
    assert!(
        delays.len() >= n,
        "only {} of {} required uploads completed",
        delays.len(),
        n
    );
    let mut sorted = delays.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted[n - 1] + master_s
}

/// Distance of the current model to the closed-form minimizer.
pub fn convergence_check(
    w: &DVector<f64>,
    problem: &LearnerProblem,
    tol: f64,
) -> (bool, f64) {
    let distance = (w - problem.minimizer()).norm();
    (distance <= tol, distance)
}

/// Per-iteration bookkeeping of the broadcast/compute/upload legs.
#[derive(Debug, Clone)]
pub struct RoundState {
    pub k: u64,
    pub started_at: SimTime,
    pub dl_done: Vec<Option<SimTime>>,
    pub compute_done: Vec<Option<SimTime>>,
    pub ul_done: Vec<Option<SimTime>>,
    pub received_order: Vec<usize>,
    pub first_n: Option<Vec<usize>>,
}

impl RoundState {
    fn new(k: u64, n_devices: usize, started_at: SimTime) -> Self {
        RoundState {
            k,
            started_at,
            dl_done: vec![None; n_devices],
            compute_done: vec![None; n_devices],
            ul_done: vec![None; n_devices],
            received_order: Vec::new(),
            first_n: None,
        }
    }

    /// Completion delays (upload done minus round start) of every device
    /// that finished its upload, in device order.
    pub fn completion_delays_s(&self) -> Vec<f64> {
        self.ul_done
            .iter()
            .flatten()
            .map(|&t| (t - self.started_at).as_secs_f64())
            .collect()
    }
}

/// One completed iteration as reported in the KPI output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundKpi {
    pub round: u64,
    pub delay_s: f64,
    pub received_at_update: u32,
    pub dist_to_minimizer: f64,
}

/// Per-device timing detail of one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundDetail {
    pub round: u64,
    pub device_index: u32,
    pub dl_s: Option<f64>,
    pub compute_s: Option<f64>,
    pub ul_s: Option<f64>,
    pub in_first_n: bool,
}

#[derive(Debug, thiserror::Error)]
#[error("learner diverged at round {round}: non-finite model values (step size too large?)")]
pub struct Diverged {
    pub round: u64,
}

/// Master-side protocol state machine. The scenario drives it with
/// delivery/compute events and owns the radio side (bearer flushes, SDU
/// enqueueing, event scheduling).
pub struct Orchestrator {
    n_required: usize,
    compute_delay: SimTime,
    master_delay: SimTime,
    learner: Box<dyn Learner>,
    problem: LearnerProblem,
    w: DVector<f64>,
    minimizer: DVector<f64>,
    round: RoundState,
    pending_upload: Vec<Option<DVector<f64>>>,
    staged: Option<DVector<f64>>,
    kpis: Vec<RoundKpi>,
    details: Vec<RoundDetail>,
}

impl Orchestrator {
    pub fn new(cfg: &FlConfig, learner: Box<dyn Learner>, rng: &mut RngStream) -> Self {
        assert!(cfg.devices > 0, "orchestrator needs at least one device");
        let n_devices = cfg.devices as usize;
        let problem = LearnerProblem::generate(rng, n_devices, cfg.dim, cfg.problem_condition);
        let minimizer = problem.minimizer();
        let w = DVector::zeros(cfg.dim);
        Orchestrator {
            n_required: cfg.effective_n() as usize,
            compute_delay: cfg.compute_delay(),
            master_delay: cfg.master_delay(),
            learner,
            problem,
            w,
            minimizer,
            round: RoundState::new(0, n_devices, SimTime::ZERO),
            pending_upload: vec![None; n_devices],
            staged: None,
            kpis: Vec::new(),
            details: Vec::new(),
        }
    }

    pub fn n_devices(&self) -> usize {
        self.pending_upload.len()
    }

    pub fn n_required(&self) -> usize {
        self.n_required
    }

    pub fn current_round(&self) -> u64 {
        self.round.k
    }

    pub fn round(&self) -> &RoundState {
        &self.round
    }

    pub fn model(&self) -> &DVector<f64> {
        &self.w
    }

    pub fn problem(&self) -> &LearnerProblem {
        &self.problem
    }

    pub fn distance_to_minimizer(&self) -> f64 {
        (&self.w - &self.minimizer).norm()
    }

    pub fn kpis(&self) -> &[RoundKpi] {
        &self.kpis
    }

    pub fn details(&self) -> &[RoundDetail] {
        &self.details
    }

    /// Opens iteration `k` at `now`. The caller has already flushed stale
    /// bearer state and enqueues one model-sized DL SDU per device, tagged
    /// with `k`.
    pub fn begin_round(&mut self, k: u64, now: SimTime) {
        self.round = RoundState::new(k, self.n_devices(), now);
        self.pending_upload.fill(None);
        self.staged = None;
    }

    /// Broadcast leg finished for one device. Returns the instant its local
    /// compute completes; the caller schedules the compute event.
    pub fn on_dl_delivered(
        &mut self,
        device: usize,
        round_tag: u64,
        now: SimTime,
    ) -> Option<SimTime> {
        if round_tag != self.round.k || self.round.dl_done[device].is_some() {
            return None;
        }
        self.round.dl_done[device] = Some(now);
        Some(now + self.compute_delay)
    }

    /// Local compute finished: the device runs its learner step on the
    /// broadcast model and stages the payload for upload. Stale rounds are
    /// dropped (the device missed the cut and must wait for the next model).
    pub fn on_compute_done(
        &mut self,
        device: usize,
        round_tag: u64,
        now: SimTime,
    ) -> Result<bool, Diverged> {
        if round_tag != self.round.k {
            return Ok(false);
        }
        self.round.compute_done[device] = Some(now);
        let payload = self.learner.local_update(self.problem.device(device), &self.w);
        if payload.iter().any(|x| !x.is_finite()) {
            return Err(Diverged { round: self.round.k });
        }
        self.pending_upload[device] = Some(payload);
        Ok(true)
    }

    /// Upload leg finished for one device. When this is the n-th completed
    /// upload the first-n set freezes, the global update is staged, and the
    /// caller gets the instant at which to trigger the next round.
    pub fn on_ul_delivered(
        &mut self,
        device: usize,
        round_tag: u64,
        now: SimTime,
    ) -> Result<Option<SimTime>, Diverged> {
        if round_tag != self.round.k || self.round.ul_done[device].is_some() {
            return Ok(None);
        }
        self.round.ul_done[device] = Some(now);
        self.round.received_order.push(device);
        if self.round.received_order.len() != self.n_required {
            return Ok(None);
        }
        let first_n = self.round.received_order.clone();
        let uploads: Vec<DVector<f64>> = first_n
            .iter()
            .map(|&i| {
                self.pending_upload[i]
                    .clone()
                    .expect("completed upload must have a staged payload")
            })
            .collect();
        let next = self.learner.global_update(&self.w, &uploads);
        if next.iter().any(|x| !x.is_finite()) {
            return Err(Diverged { round: self.round.k });
        }
        self.round.first_n = Some(first_n);
        self.staged = Some(next);
        Ok(Some(now + self.master_delay))
    }

    /// Applies the staged update (the next-round trigger fired): records the
    /// iteration KPI and per-device detail. The caller then begins round
    /// k + 1.
    pub fn finalize_round(&mut self) -> RoundKpi {
        let staged = self.staged.take().expect("no staged update to finalize");
        self.w = staged;
        let round = &self.round;
        let delays = round.completion_delays_s();
        let delay_s = nth_completion_delay(&delays, self.n_required, self.master_delay.as_secs_f64());
        let kpi = RoundKpi {
            round: round.k,
            delay_s,
            received_at_update: round.received_order.len() as u32,
            dist_to_minimizer: (&self.w - &self.minimizer).norm(),
        };
        self.kpis.push(kpi);
        let first_n = round.first_n.clone().unwrap_or_default();
        let base = round.started_at;
        for dev in 0..self.n_devices() {
            self.details.push(RoundDetail {
                round: round.k,
                device_index: dev as u32,
                dl_s: round.dl_done[dev].map(|t| (t - base).as_secs_f64()),
                compute_s: round.compute_done[dev].map(|t| (t - base).as_secs_f64()),
                ul_s: round.ul_done[dev].map(|t| (t - base).as_secs_f64()),
                in_first_n: first_n.contains(&dev),
            });
        }
        kpi
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nth_completion_examples() {
        assert_eq!(nth_completion_delay(&[5.0, 3.0, 8.0], 2, 1.0), 6.0);
        assert_eq!(nth_completion_delay(&[5.0, 3.0, 8.0], 1, 1.0), 4.0);
        assert_eq!(nth_completion_delay(&[5.0, 3.0, 8.0], 3, 1.0), 9.0);
    }

    #[test]
    #[should_panic(expected = "required uploads")]
    fn nth_completion_needs_enough_uploads() {
        nth_completion_delay(&[5.0], 2, 1.0);
    }

    /// Brute force over all n-subsets: min over subsets of the subset max.
    fn brute_force_delay(delays: &[f64], n: usize, master_s: f64) -> f64 {
        use itertools::Itertools;
        delays
            .iter()
            .copied()
            .combinations(n)
            .map(|subset| subset.into_iter().fold(f64::NEG_INFINITY, f64::max) + master_s)
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn order_statistic_equals_subset_enumeration() {
        let mut rng = RngStream::new(17, "delay-oracle");
        for _ in 0..50 {
            let n_dev = 2 + rng.index(10);
            let n = 1 + rng.index(n_dev);
            let delays: Vec<f64> = (0..n_dev).map(|_| rng.range(0.0, 100.0)).collect();
            let master = rng.range(0.0, 5.0);
            assert_eq!(
                nth_completion_delay(&delays, n, master),
                brute_force_delay(&delays, n, master)
            );
        }
    }

    #[test]
    fn convergence_check_cases() {
        let p = LearnerProblem::new(vec![
            DeviceQuadratic::scalar(1.0, 1.0),
            DeviceQuadratic::scalar(1.0, 3.0),
        ]);
        let (ok, d) = convergence_check(&DVector::from_element(1, 2.0), &p, 1e-9);
        assert!(ok);
        assert!(d < 1e-12);
        let (ok, d) = convergence_check(&DVector::from_element(1, 2.0 + 2e-9), &p, 1e-9);
        assert!(!ok);
        assert!(d > 1e-9);
    }

    fn test_cfg(devices: u32, n: u32) -> FlConfig {
        FlConfig {
            devices,
            n: Some(n),
            dim: 1,
            step_size: 0.5,
            compute_base_s: 0.1,
            compute_per_param_ns: 0.0,
            master_compute_s: 1.0,
            ..FlConfig::default()
        }
    }

    #[test]
    fn effective_n_from_eta_uses_ceiling() {
        let cfg = FlConfig {
            devices: 60,
            eta: Some(0.4),
            ..FlConfig::default()
        };
        assert_eq!(cfg.effective_n(), 24);
        let cfg = FlConfig {
            devices: 10,
            eta: Some(0.35),
            ..FlConfig::default()
        };
        assert_eq!(cfg.effective_n(), 4);
        let cfg = FlConfig {
            devices: 10,
            ..FlConfig::default()
        };
        assert_eq!(cfg.effective_n(), 10);
    }

    #[test]
    fn round_flow_fixes_first_n_and_reports_delay() {
        let cfg = test_cfg(3, 2);
        let learner = LearnerRegistry::builtin().create("gradient", &cfg).unwrap();
        let mut rng = RngStream::new(1, "learner");
        let mut orch = Orchestrator::new(&cfg, learner, &mut rng);
        let t0 = SimTime::from_secs(10);
        orch.begin_round(0, t0);

        for dev in 0..3 {
            let compute_at = orch.on_dl_delivered(dev, 0, t0 + SimTime::from_ms(5)).unwrap();
            assert!(orch.on_compute_done(dev, 0, compute_at).unwrap());
        }
        // Uploads complete at 3 s, 5 s, 8 s after round start.
        assert!(orch
            .on_ul_delivered(1, 0, t0 + SimTime::from_secs(3))
            .unwrap()
            .is_none());
        let trigger = orch
            .on_ul_delivered(0, 0, t0 + SimTime::from_secs(5))
            .unwrap()
            .expect("second upload freezes the set");
        assert_eq!(trigger, t0 + SimTime::from_secs(6));
        // A third upload may still land before the trigger fires.
        assert!(orch
            .on_ul_delivered(2, 0, t0 + SimTime::from_secs(5) + SimTime::from_ms(100))
            .unwrap()
            .is_none());

        let kpi = orch.finalize_round();
        assert!((kpi.delay_s - 6.0).abs() < 1e-9);
        assert_eq!(kpi.received_at_update, 3);
        assert_eq!(orch.round().first_n.as_deref(), Some(&[1, 0][..]));
        let detail = orch.details();
        assert_eq!(detail.len(), 3);
        assert!(detail[2].in_first_n == false && detail[0].in_first_n && detail[1].in_first_n);
    }

    #[test]
    fn stale_round_tags_are_ignored() {
        let cfg = test_cfg(2, 2);
        let learner = LearnerRegistry::builtin().create("gradient", &cfg).unwrap();
        let mut rng = RngStream::new(1, "learner");
        let mut orch = Orchestrator::new(&cfg, learner, &mut rng);
        orch.begin_round(3, SimTime::from_secs(1));
        assert!(orch.on_dl_delivered(0, 2, SimTime::from_secs(2)).is_none());
        assert!(!orch.on_compute_done(0, 2, SimTime::from_secs(2)).unwrap());
        assert!(orch
            .on_ul_delivered(0, 2, SimTime::from_secs(2))
            .unwrap()
            .is_none());
    }
}
