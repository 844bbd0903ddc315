use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use dopplerfg::bounds::WeightingConstants;
use dopplerfg::codec::{peg, write_alist};
use dopplerfg::harness::{self, ExperimentConfig, Scenario};
use dopplerfg::Result;

/// Monte Carlo driver for joint phase/Doppler estimation and decoding.
#[derive(Parser)]
#[command(name = "sim", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// SNR points in dB (comma separated); overrides `sim.snr_db`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    snr: Option<Vec<f64>>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for the CSV and the gnuplot script.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Paper-scale trial counts (10x the desk defaults).
    #[arg(long)]
    full: bool,
    /// Extra `key=value` overrides, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepKind {
    Particles,
    Iters,
    Nodes,
}

#[derive(Subcommand)]
enum Cmd {
    /// JCRB and WBCRB diagonals over an SNR list.
    Bounds {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        snr_list: Option<Vec<f64>>,
        /// Defaults to the configured preamble plus the code length.
        #[arg(long)]
        frame_len: Option<usize>,
        #[arg(long)]
        omega_max: Option<f64>,
        #[arg(long)]
        eps_max: Option<f64>,
        #[arg(long)]
        h: Option<f64>,
    },
    /// Single-node estimation MSE against the bounds.
    Mse {
        #[command(flatten)]
        common: Common,
    },
    /// Bit error rate of the iterative receiver.
    Ber {
        #[command(flatten)]
        common: Common,
    },
    /// Per-symbol particle-filter traces at a fixed truth.
    Converge {
        #[command(flatten)]
        common: Common,
    },
    /// BER over particle count, global iterations or node count.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        kind: SweepKind,
    },
    /// Build a regular PEG code and write it as alist.
    Peg {
        #[arg(long, default_value_t = 252)]
        checks: usize,
        #[arg(long, default_value_t = 504)]
        bits: usize,
        #[arg(long, default_value_t = 3)]
        col_degree: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn build_config(scenario: Scenario, c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::for_scenario(scenario);
    if c.full {
        cfg.n_bursts *= 10;
    }
    if let Some(p) = &c.config {
        cfg.apply_file(p)?;
        cfg.scenario = scenario;
    }
    if let Some(s) = &c.snr {
        cfg.snr_db.clone_from(s);
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.out.clone_from(o);
    }
    for kv in &c.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| dopplerfg::Error::Config {
            key: kv.clone(),
            msg: "expected KEY=VALUE".into(),
        })?;
        cfg.set(k.trim(), v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run_and_write(cfg: &ExperimentConfig) -> Result<()> {
    eprintln!(
        "sim {}: {} bursts x {} SNR points, fingerprint {}",
        cfg.scenario,
        cfg.n_bursts,
        cfg.snr_db.len(),
        cfg.fingerprint()
    );
    let rows = harness::run(cfg)?;
    write_rows(cfg, &rows)
}

fn write_rows(cfg: &ExperimentConfig, rows: &[harness::ResultRow]) -> Result<()> {
    let csv = cfg.out.join(format!("{}.csv", cfg.scenario));
    harness::emit_csv(rows, cfg, &csv)?;
    harness::emit_plotscript(rows, &csv, &cfg.out.join(format!("{}.gp", cfg.scenario)))?;
    for r in rows.iter().filter(|r| r.index.is_none()) {
        let param = r.param.map(|p| format!(" [{p}]")).unwrap_or_default();
        println!(
            "{:>6.2} dB{param} {:<16} {:.6e} (se {:.2e}, n {})",
            r.snr_db, r.metric, r.value, r.std_error, r.n_trials
        );
    }
    eprintln!("wrote {}", csv.display());
    Ok(())
}

fn main_inner(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Bounds {
            common,
            snr_list,
            frame_len,
            omega_max,
            eps_max,
            h,
        } => {
            let mut cfg = build_config(Scenario::Bounds, &common)?;
            if let Some(s) = snr_list {
                cfg.snr_db = s;
            }
            if let Some(w) = omega_max {
                cfg.set("channel.omega_max", &w.to_string())?;
            }
            if let Some(e) = eps_max {
                cfg.set("channel.epsilon_max", &e.to_string())?;
            }
            if let Some(h) = h {
                cfg.h = h;
            }
            let gap = WeightingConstants::quadrature_discrepancy(cfg.h)?;
            if gap > 1e-8 {
                return Err(dopplerfg::Error::Config {
                    key: "bounds.h".into(),
                    msg: format!("weighting constants disagree with quadrature by {gap:e}"),
                });
            }
            let rows = harness::run_bounds(&cfg, frame_len)?;
            write_rows(&cfg, &rows)
        }
        Cmd::Mse { common } => run_and_write(&build_config(Scenario::Mse, &common)?),
        Cmd::Ber { common } => run_and_write(&build_config(Scenario::Ber, &common)?),
        Cmd::Converge { common } => run_and_write(&build_config(Scenario::Converge, &common)?),
        Cmd::Sweep { common, kind } => {
            let scenario = match kind {
                SweepKind::Particles => Scenario::SweepParticles,
                SweepKind::Iters => Scenario::SweepIters,
                SweepKind::Nodes => Scenario::SweepNodes,
            };
            run_and_write(&build_config(scenario, &common)?)
        }
        Cmd::Peg {
            checks,
            bits,
            col_degree,
            seed,
            out,
        } => {
            let h = peg::build(checks, bits, col_degree, seed);
            eprintln!("girth {}", peg::girth(&h));
            std::fs::write(&out, write_alist(&h)).map_err(|e| dopplerfg::Error::Io {
                path: out,
                source: e,
            })
        }
    }
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
