//! UTF-8 CSV emission with header rows, the run manifest and config echo,
//! and the text summary used by the report command.

use crate::metrics::{box_stats, percentile, requirement_check};
use crate::scenario::RunResult;
use crate::ScenarioConfig;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum OutputError {
    #[error("output I/O failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV emission failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("no results to emit")]
    Empty,
    #[error("cannot summarize {0}: {1}")]
    BadInput(PathBuf, String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KpiUrllcRow {
    pub run_id: String,
    pub seed: u64,
    #[serde(rename = "N")]
    pub n_devices: u32,
    pub eta: f64,
    pub n: u32,
    pub model_bytes: u64,
    pub device_id: u32,
    pub avail_ul: f64,
    pub avail_dl: f64,
    pub avail_combined: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KpiAiRow {
    pub run_id: String,
    pub seed: u64,
    #[serde(rename = "N")]
    pub n_devices: u32,
    pub eta: f64,
    pub n: u32,
    pub model_bytes: u64,
    pub round_k: u64,
    pub d_k_ai_s: f64,
    pub n_received_at_update: u32,
    pub dist_to_wstar: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AiRoundDetailRow {
    pub run_id: String,
    pub round_k: u64,
    pub device_id: u32,
    pub d_dl_s: Option<f64>,
    pub d_compute_s: Option<f64>,
    pub d_ul_s: Option<f64>,
    pub in_first_n: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestRow {
    pub run_id: String,
    pub seed: u64,
    pub config_hash: String,
}

#[derive(Debug, Clone, Serialize)]
struct AllocTraceRow {
    run_id: String,
    tti: u64,
    cell: u8,
    dir: &'static str,
    device_id: u32,
    bearer: &'static str,
    prb_start: u16,
    prb_len: u16,
    mcs_index: u8,
    tb_bits: u64,
    new_data: bool,
    sinr_db: f64,
}

pub fn urllc_rows(results: &[RunResult]) -> Vec<KpiUrllcRow> {
    let mut rows = Vec::new();
    for r in results {
        for d in &r.urllc {
            rows.push(KpiUrllcRow {
                run_id: r.run_id.clone(),
                seed: r.seed,
                n_devices: r.n_ai_devices,
                eta: r.eta,
                n: r.n_required,
                model_bytes: r.model_bytes,
                device_id: d.device_id,
                avail_ul: d.avail_ul,
                avail_dl: d.avail_dl,
                avail_combined: d.avail_combined,
            });
        }
    }
    rows
}

pub fn ai_rows(results: &[RunResult]) -> Vec<KpiAiRow> {
    let mut rows = Vec::new();
    for r in results {
        for k in &r.ai_rounds {
            rows.push(KpiAiRow {
                run_id: r.run_id.clone(),
                seed: r.seed,
                n_devices: r.n_ai_devices,
                eta: r.eta,
                n: r.n_required,
                model_bytes: r.model_bytes,
                round_k: k.round,
                d_k_ai_s: k.delay_s,
                n_received_at_update: k.received_at_update,
                dist_to_wstar: k.dist_to_minimizer,
            });
        }
    }
    rows
}

fn detail_rows(results: &[RunResult]) -> Vec<AiRoundDetailRow> {
    let mut rows = Vec::new();
    for r in results {
        let ai_base = r.urllc.len() as u32;
        for d in &r.ai_detail {
            rows.push(AiRoundDetailRow {
                run_id: r.run_id.clone(),
                round_k: d.round,
                device_id: ai_base + d.device_index,
                d_dl_s: d.dl_s,
                d_compute_s: d.compute_s,
                d_ul_s: d.ul_s,
                in_first_n: d.in_first_n,
            });
        }
    }
    rows
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), OutputError> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Writes every output file for a result set. On any failure the files
/// written so far are removed so no partial output survives.
pub fn emit_csv(
    results: &[RunResult],
    base_config: &ScenarioConfig,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, OutputError> {
    if results.is_empty() {
        return Err(OutputError::Empty);
    }
    fs::create_dir_all(out_dir)?;
    let mut written: Vec<PathBuf> = Vec::new();
    let outcome = (|| -> Result<(), OutputError> {
        let urllc = out_dir.join("kpi_urllc.csv");
        write_csv(&urllc, &urllc_rows(results))?;
        written.push(urllc);

        let ai = out_dir.join("kpi_ai.csv");
        write_csv(&ai, &ai_rows(results))?;
        written.push(ai);

        let detail = out_dir.join("ai_round_detail.csv");
        write_csv(&detail, &detail_rows(results))?;
        written.push(detail);

        let manifest = out_dir.join("run_manifest.csv");
        let manifest_rows: Vec<ManifestRow> = results
            .iter()
            .map(|r| ManifestRow {
                run_id: r.run_id.clone(),
                seed: r.seed,
                config_hash: r.config_hash.clone(),
            })
            .collect();
        write_csv(&manifest, &manifest_rows)?;
        written.push(manifest);

        let echo = out_dir.join("config_echo.toml");
        fs::write(&echo, base_config.echo_toml())?;
        written.push(echo);

        let trace_rows: Vec<AllocTraceRow> = results
            .iter()
            .filter_map(|r| r.alloc_trace.as_ref().map(|t| (r, t)))
            .flat_map(|(r, trace)| {
                trace.iter().flat_map(move |rec| {
                    rec.grants.iter().map(move |g| AllocTraceRow {
                        run_id: r.run_id.clone(),
                        tti: rec.tti,
                        cell: rec.cell,
                        dir: rec.direction.label(),
                        device_id: g.device,
                        bearer: g.bearer.label(),
                        prb_start: g.prb_start,
                        prb_len: g.prb_len,
                        mcs_index: g.mcs_index,
                        tb_bits: g.tb_bits,
                        new_data: g.new_data,
                        sinr_db: g.sinr_db,
                    })
                })
            })
            .collect();
        if !trace_rows.is_empty() {
            let trace = out_dir.join("alloc_trace.csv");
            write_csv(&trace, &trace_rows)?;
            written.push(trace);
        }
        Ok(())
    })();
    match outcome {
        Ok(()) => Ok(written),
        Err(e) => {
            for f in &written {
                let _ = fs::remove_file(f);
            }
            // The file that failed mid-write may exist too.
            Err(e)
        }
    }
}

/// One sweep point: the parameters that identify a group of runs.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct SweepPoint {
    pub n_devices: u32,
    pub n_required: u32,
    pub eta: f64,
    pub model_bytes: u64,
}

fn point_key(n_devices: u32, n_required: u32, model_bytes: u64) -> (u32, u32, u64) {
    (n_devices, n_required, model_bytes)
}

/// Text summary per sweep point: availability median and 1st percentile
/// with the requirement verdict, and training-delay box statistics.
pub fn summary_from_rows(
    urllc: &[KpiUrllcRow],
    ai: &[KpiAiRow],
    a_req: f64,
    gamma: f64,
) -> String {
    let mut groups: BTreeMap<(u32, u32, u64), (SweepPoint, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for row in urllc {
        let e = groups
            .entry(point_key(row.n_devices, row.n, row.model_bytes))
            .or_insert_with(|| {
                (
                    SweepPoint {
                        n_devices: row.n_devices,
                        n_required: row.n,
                        eta: row.eta,
                        model_bytes: row.model_bytes,
                    },
                    Vec::new(),
                    Vec::new(),
                )
            });
        e.1.push(row.avail_combined);
    }
    for row in ai {
        let e = groups
            .entry(point_key(row.n_devices, row.n, row.model_bytes))
            .or_insert_with(|| {
                (
                    SweepPoint {
                        n_devices: row.n_devices,
                        n_required: row.n,
                        eta: row.eta,
                        model_bytes: row.model_bytes,
                    },
                    Vec::new(),
                    Vec::new(),
                )
            });
        e.2.push(row.d_k_ai_s);
    }

    let mut out = String::new();
    out.push_str(&format!(
        "{:>4} {:>4} {:>5} {:>12} | {:>10} {:>10} {:>6} | {:>42}\n",
        "N", "n", "eta", "model_bytes", "avail_med", "avail_p1", "req", "d_ai_s min/q25/med/q75/max"
    ));
    for (_, (pt, avails, delays)) in &groups {
        let avail_part = if avails.is_empty() {
            format!("{:>10} {:>10} {:>6}", "-", "-", "-")
        } else {
            let med = percentile(avails, 0.50);
            let p1 = percentile(avails, 0.01);
            let req = requirement_check(avails, a_req, gamma);
            format!(
                "{med:>10.6} {p1:>10.6} {:>6}",
                if req.pass { "pass" } else { "FAIL" }
            )
        };
        let delay_part = if delays.is_empty() {
            "-".to_string()
        } else {
            let b = box_stats(delays);
            format!(
                "{:.3}/{:.3}/{:.3}/{:.3}/{:.3}",
                b.min, b.q25, b.median, b.q75, b.max
            )
        };
        out.push_str(&format!(
            "{:>4} {:>4} {:>5.2} {:>12} | {} | {:>42}\n",
            pt.n_devices, pt.n_required, pt.eta, pt.model_bytes, avail_part, delay_part
        ));
    }
    out
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, OutputError> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| OutputError::BadInput(path.to_path_buf(), e.to_string()))?;
    rdr.deserialize()
        .collect::<Result<Vec<T>, csv::Error>>()
        .map_err(|e| OutputError::BadInput(path.to_path_buf(), e.to_string()))
}

/// Rebuilds the summary from an output directory written by `emit_csv`.
pub fn report_from_dir(dir: &Path) -> Result<String, OutputError> {
    let urllc: Vec<KpiUrllcRow> = read_csv(&dir.join("kpi_urllc.csv"))?;
    let ai: Vec<KpiAiRow> = read_csv(&dir.join("kpi_ai.csv"))?;
    let (a_req, gamma) = match fs::read_to_string(dir.join("config_echo.toml")) {
        Ok(text) => match ScenarioConfig::from_toml_str(&text) {
            Ok(cfg) => (
                cfg.metrics.availability_requirement,
                cfg.metrics.sensitivity,
            ),
            Err(_) => (0.95, 0.01),
        },
        Err(_) => (0.95, 0.01),
    };
    Ok(summary_from_rows(&urllc, &ai, a_req, gamma))
}
