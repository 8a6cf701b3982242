//! Experiment grids over the n-sync parameters: fixed N with varying
//! upload fraction, and fixed upload count with varying device pool. Runs
//! execute in parallel, one engine per run; results are ordered by grid
//! position so parallelism never shows in the output.

use crate::config::{ConfigError, ScenarioConfig};
use crate::scenario::{run_scenario_with_id, RunResult};
use rayon::prelude::*;

fn invalid(key: &str, reason: impl Into<String>) -> crate::Error {
    crate::Error::Config(ConfigError::Invalid {
        key: key.to_owned(),
        reason: reason.into(),
    })
}

/// Seeds 1..=count, the default seed plan of the sweep commands.
pub fn default_seeds(count: u64) -> Vec<u64> {
    (1..=count).collect()
}

fn run_grid(jobs: Vec<(ScenarioConfig, u64, String)>) -> Result<Vec<RunResult>, crate::Error> {
    jobs.into_par_iter()
        .map(|(cfg, seed, run_id)| run_scenario_with_id(&cfg, seed, run_id))
        .collect()
}

/// Fixed device pool N, sweeping the required upload fraction.
pub fn sweep_eval1(
    base: &ScenarioConfig,
    n_devices: u32,
    etas: &[f64],
    seeds: &[u64],
) -> Result<Vec<RunResult>, crate::Error> {
    if n_devices == 0 {
        return Err(invalid("sweep.fixed", "eval1 needs N >= 1"));
    }
    if etas.is_empty() || seeds.is_empty() {
        return Err(invalid("sweep.vary", "need at least one eta and one seed"));
    }
    for &eta in etas {
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(invalid("sweep.vary", format!("eta {eta} outside (0, 1]")));
        }
    }
    let mut jobs = Vec::with_capacity(etas.len() * seeds.len());
    for &eta in etas {
        let mut cfg = base.clone();
        cfg.fl.devices = n_devices;
        cfg.fl.eta = Some(eta);
        cfg.fl.n = None;
        cfg.validate()?;
        let n = cfg.fl.effective_n();
        for &seed in seeds {
            jobs.push((cfg.clone(), seed, format!("eval1-N{n_devices}-n{n}-s{seed}")));
        }
    }
    run_grid(jobs)
}

/// Fixed upload count n, sweeping the device pool size N >= n.
pub fn sweep_eval2(
    base: &ScenarioConfig,
    n_required: u32,
    n_devices_list: &[u32],
    seeds: &[u64],
) -> Result<Vec<RunResult>, crate::Error> {
    if n_required == 0 {
        return Err(invalid("sweep.fixed", "eval2 needs n >= 1"));
    }
    if n_devices_list.is_empty() || seeds.is_empty() {
        return Err(invalid("sweep.vary", "need at least one N and one seed"));
    }
    if let Some(&bad) = n_devices_list.iter().find(|&&n| n < n_required) {
        return Err(invalid(
            "sweep.vary",
            format!("N = {bad} is below the required upload count n = {n_required}"),
        ));
    }
    let mut jobs = Vec::with_capacity(n_devices_list.len() * seeds.len());
    for &n_dev in n_devices_list {
        let mut cfg = base.clone();
        cfg.fl.devices = n_dev;
        cfg.fl.n = Some(n_required);
        cfg.fl.eta = None;
        cfg.validate()?;
        for &seed in seeds {
            jobs.push((
                cfg.clone(),
                seed,
                format!("eval2-N{n_dev}-n{n_required}-s{seed}"),
            ));
        }
    }
    run_grid(jobs)
}
