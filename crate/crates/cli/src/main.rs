use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use coexsim::config::Profile;
use coexsim::output::{ai_rows, emit_csv, report_from_dir, summary_from_rows, urllc_rows};
use coexsim::sweep::{default_seeds, sweep_eval1, sweep_eval2};
use coexsim::{run_scenario, ScenarioConfig};
use std::path::PathBuf;

/// Discrete-event simulator of URLLC and distributed-learning traffic
/// sharing a 5G-NR cell under strict-priority QoS.
#[derive(Parser)]
#[command(name = "coexsim", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Scenario configuration file (TOML). An empty file selects the
    /// default deployment profile.
    #[arg(long)]
    config: PathBuf,
    /// Execution profile overriding the horizon: desk (20 s) or paper (100 s).
    #[arg(long)]
    profile: Option<Profile>,
    /// Collect per-grant allocation trace records into alloc_trace.csv.
    #[arg(long)]
    trace: bool,
}

impl ConfigArgs {
    fn load(&self) -> Result<ScenarioConfig> {
        let mut cfg = ScenarioConfig::parse_file(&self.config)
            .with_context(|| format!("loading {}", self.config.display()))?;
        if let Some(p) = self.profile {
            cfg.apply_profile(p);
        }
        if self.trace {
            cfg.sim.trace_allocations = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario with one seed and write the KPI files.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// Simulation seed.
        #[arg(long)]
        seed: u64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment grid and write the combined KPI files.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        /// Grid kind: eval1 (fixed N, vary eta) or eval2 (fixed n, vary N).
        #[arg(long)]
        mode: String,
        /// Fixed parameter, e.g. N=60 (eval1) or n=30 (eval2).
        #[arg(long)]
        fixed: String,
        /// Varied parameter list, e.g. eta=0.4,0.6,0.8,1.0 or N=30,50.
        /// Defaults to eta=0.4,0.6,0.8,1.0 for eval1.
        #[arg(long)]
        vary: Option<String>,
        /// Number of seeds (runs 1..=seeds per grid point); defaults to the
        /// config seed list.
        #[arg(long)]
        seeds: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize the KPI files in a results directory.
    Report {
        /// Directory previously written by run or sweep.
        #[arg(long = "in")]
        input: PathBuf,
    },
}

fn parse_kv(arg: &str, expected_key: &str) -> Result<String> {
    match arg.split_once('=') {
        Some((k, v)) if k == expected_key => Ok(v.to_owned()),
        Some((k, _)) => bail!("expected {expected_key}=<value>, got key '{k}'"),
        None => bail!("expected {expected_key}=<value>, got '{arg}'"),
    }
}

fn parse_list<T: std::str::FromStr>(v: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    v.split(',')
        .map(|s| {
            s.trim()
                .parse::<T>()
                .map_err(|e| anyhow::anyhow!("bad list entry '{s}': {e}"))
        })
        .collect()
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run { config, seed, out } => {
            let cfg = config.load()?;
            let result = run_scenario(&cfg, seed)?;
            let results = vec![result];
            emit_csv(&results, &cfg, &out)?;
            print!(
                "{}",
                summary_from_rows(
                    &urllc_rows(&results),
                    &ai_rows(&results),
                    cfg.metrics.availability_requirement,
                    cfg.metrics.sensitivity,
                )
            );
            println!("wrote {}", out.display());
        }
        Command::Sweep {
            config,
            mode,
            fixed,
            vary,
            seeds,
            out,
        } => {
            let cfg = config.load()?;
            let seed_list = match seeds {
                Some(k) => default_seeds(k),
                None => cfg.sim.seeds.clone(),
            };
            let results = match mode.as_str() {
                "eval1" => {
                    let n_devices: u32 = parse_kv(&fixed, "N")?.parse()?;
                    let etas: Vec<f64> = match &vary {
                        Some(v) => parse_list(&parse_kv(v, "eta")?)?,
                        None => vec![0.4, 0.6, 0.8, 1.0],
                    };
                    sweep_eval1(&cfg, n_devices, &etas, &seed_list)?
                }
                "eval2" => {
                    let n_required: u32 = parse_kv(&fixed, "n")?.parse()?;
                    let vary = vary.context("eval2 needs --vary N=<list>")?;
                    let pools: Vec<u32> = parse_list(&parse_kv(&vary, "N")?)?;
                    sweep_eval2(&cfg, n_required, &pools, &seed_list)?
                }
                other => bail!("unknown sweep mode '{other}', expected eval1|eval2"),
            };
            emit_csv(&results, &cfg, &out)?;
            print!(
                "{}",
                summary_from_rows(
                    &urllc_rows(&results),
                    &ai_rows(&results),
                    cfg.metrics.availability_requirement,
                    cfg.metrics.sensitivity,
                )
            );
            println!("wrote {} runs to {}", results.len(), out.display());
        }
        Command::Report { input } => {
            print!("{}", report_from_dir(&input)?);
        }
    }
    Ok(())
}
