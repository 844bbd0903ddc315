//! Flat `key = value` experiment configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::channel::{ChannelParams, PriorSpec};
use crate::error::{Error, Result};
use crate::fg_engine::{Feedback, GlobalLoopConfig};
use crate::pf_estimator::{PfConfig, ZetaDomain};
use crate::rw_estimator::{MeanMode, RwConfig, SigmaWMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Mse,
    Ber,
    Converge,
    Bounds,
    SweepParticles,
    SweepIters,
    SweepNodes,
}

impl Scenario {
    pub const ALL: [Scenario; 7] = [
        Self::Mse,
        Self::Ber,
        Self::Converge,
        Self::Bounds,
        Self::SweepParticles,
        Self::SweepIters,
        Self::SweepNodes,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Mse => "mse",
            Self::Ber => "ber",
            Self::Converge => "converge",
            Self::Bounds => "bounds",
            Self::SweepParticles => "sweep-particles",
            Self::SweepIters => "sweep-iters",
            Self::SweepNodes => "nodes",
        }
    }
}

impl FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown scenario '{s}'")))
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    Pf,
    Rw,
    /// True channel parameters handed to the message loop.
    Genie,
}

impl FromStr for EstimatorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pf" => Ok(Self::Pf),
            "rw" => Ok(Self::Rw),
            "genie" => Ok(Self::Genie),
            _ => Err(Error::invalid(format!(
                "unknown estimator '{s}' (pf|rw|genie)"
            ))),
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Pf => "pf",
            Self::Rw => "rw",
            Self::Genie => "genie",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub snr_db: Vec<f64>,
    pub n_bursts: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub n_preamble: usize,
    pub preamble_seed: u64,
    pub prior: PriorSpec,
    pub n_nodes: usize,
    pub estimator: EstimatorKind,
    pub global: GlobalLoopConfig,
    pub alist_path: Option<PathBuf>,
    pub pf: PfConfig,
    pub rw: RwConfig,
    pub h: f64,
    /// Fixed channel parameters for every node and burst; drawn from the
    /// prior when `None`.
    pub truth: Option<ChannelParams>,
    /// Values swept by the sweep scenarios.
    pub sweep_values: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::Mse,
            snr_db: vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0],
            n_bursts: 200,
            seed: 1,
            out: PathBuf::from("results"),
            n_preamble: 30,
            preamble_seed: 0,
            prior: PriorSpec::default(),
            n_nodes: 1,
            estimator: EstimatorKind::Rw,
            global: GlobalLoopConfig::default(),
            alist_path: None,
            pf: PfConfig::default(),
            rw: RwConfig::default(),
            h: 1.0,
            truth: None,
            sweep_values: Vec::new(),
        }
    }
}

/// Every recognised key, in canonical order.
pub const KEYS: &[&str] = &[
    "sim.scenario",
    "sim.snr_db",
    "sim.n_bursts",
    "sim.seed",
    "sim.out",
    "frame.n_preamble",
    "frame.preamble_seed",
    "channel.omega_max",
    "channel.epsilon_max",
    "channel.n_nodes",
    "fg.global_iters",
    "fg.feedback",
    "fg.estimator",
    "ldpc.alist_path",
    "ldpc.max_iters",
    "pf.n_particles",
    "pf.fine_tune",
    "pf.alpha",
    "pf.zeta",
    "pf.zeta_domain",
    "pf.gamma_scale",
    "pf.theta_th",
    "pf.omega_th",
    "pf.resample_fraction",
    "rw.n_q",
    "rw.sigma_w_mode",
    "rw.mean_mode",
    "bounds.h",
    "converge.truth",
    "sweep.values",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e: T::Err| Error::Config {
        key: key.to_string(),
        msg: format!("cannot parse '{value}': {e}"),
    })
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn join(v: &[f64]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

impl ExperimentConfig {
    /// Defaults for a scenario: the convergence study uses its own truth
    /// and a wider ω prior, BER studies use more frames.
    pub fn for_scenario(scenario: Scenario) -> Self {
        let mut cfg = Self {
            scenario,
            ..Self::default()
        };
        match scenario {
            Scenario::Mse => {}
            Scenario::Ber => {
                cfg.n_bursts = 2000;
                cfg.snr_db = vec![-3.0, -2.5, -2.0, -1.5, -1.0, -0.5, 0.0];
            }
            Scenario::Converge => {
                cfg.estimator = EstimatorKind::Pf;
                cfg.snr_db = vec![8.0];
                cfg.n_bursts = 100;
                cfg.prior = PriorSpec::new(0.02, 1e-5).expect("valid prior");
                cfg.truth = Some(ChannelParams::new(2.0, 0.011, -9e-6));
            }
            Scenario::Bounds => {
                cfg.snr_db = (-30..=20).step_by(2).map(f64::from).collect();
            }
            Scenario::SweepParticles => {
                cfg.estimator = EstimatorKind::Pf;
                cfg.n_bursts = 1000;
                cfg.snr_db = vec![0.0];
                cfg.sweep_values = vec![100.0, 200.0, 300.0, 400.0, 500.0, 600.0];
            }
            Scenario::SweepIters => {
                cfg.n_bursts = 2000;
                cfg.snr_db = vec![-2.0, -1.0, 0.0];
                cfg.sweep_values = vec![1.0, 2.0, 3.0, 4.0];
            }
            Scenario::SweepNodes => {
                cfg.n_bursts = 2000;
                cfg.snr_db = vec![-6.0, -5.0, -4.0, -3.0, -2.0, -1.0, 0.0];
                cfg.sweep_values = vec![1.0, 2.0, 3.0];
            }
        }
        cfg
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "sim.scenario" => self.scenario = parse(key, value)?,
            "sim.snr_db" => self.snr_db = parse_list(key, value)?,
            "sim.n_bursts" => self.n_bursts = parse(key, value)?,
            "sim.seed" => self.seed = parse(key, value)?,
            "sim.out" => self.out = PathBuf::from(value),
            "frame.n_preamble" => self.n_preamble = parse(key, value)?,
            "frame.preamble_seed" => self.preamble_seed = parse(key, value)?,
            "channel.omega_max" => {
                self.prior = PriorSpec::new(parse(key, value)?, self.prior.epsilon_max)?
            }
            "channel.epsilon_max" => {
                self.prior = PriorSpec::new(self.prior.omega_max, parse(key, value)?)?
            }
            "channel.n_nodes" => self.n_nodes = parse(key, value)?,
            "fg.global_iters" => self.global.n_global_iters = parse(key, value)?,
            "fg.feedback" => self.global.feedback = parse::<Feedback>(key, value)?,
            "fg.estimator" => self.estimator = parse(key, value)?,
            "ldpc.alist_path" => {
                self.alist_path =
                    (!value.is_empty() && value != "bundled").then(|| PathBuf::from(value))
            }
            "ldpc.max_iters" => self.global.decoder_iters = parse(key, value)?,
            "pf.n_particles" => self.pf.n_particles = parse(key, value)?,
            "pf.fine_tune" => self.pf.fine_tune.enabled = parse(key, value)?,
            "pf.alpha" => self.pf.fine_tune.alpha = parse(key, value)?,
            "pf.zeta" => self.pf.fine_tune.zeta = parse(key, value)?,
            "pf.zeta_domain" => self.pf.fine_tune.zeta_domain = parse::<ZetaDomain>(key, value)?,
            "pf.gamma_scale" => self.pf.fine_tune.gamma_scale = parse(key, value)?,
            "pf.theta_th" => self.pf.fine_tune.theta_th = parse(key, value)?,
            "pf.omega_th" => self.pf.fine_tune.omega_th = parse(key, value)?,
            "pf.resample_fraction" => self.pf.resample_fraction = parse(key, value)?,
            "rw.n_q" => self.rw.n_q = parse(key, value)?,
            "rw.sigma_w_mode" => self.rw.sigma_w_mode = parse::<SigmaWMode>(key, value)?,
            "rw.mean_mode" => self.rw.mean_mode = parse::<MeanMode>(key, value)?,
            "bounds.h" => self.h = parse(key, value)?,
            "converge.truth" => {
                self.truth = if value.is_empty() || value == "prior" {
                    None
                } else {
                    match parse_list(key, value)?[..] {
                        [t, w, e] => Some(ChannelParams::new(t, w, e)),
                        _ => {
                            return Err(Error::Config {
                                key: key.into(),
                                msg: "expected theta,omega,epsilon".into(),
                            })
                        }
                    }
                }
            }
            "sweep.values" => self.sweep_values = parse_list(key, value)?,
            _ => {
                return Err(Error::Config {
                    key: key.to_string(),
                    msg: "unknown key".into(),
                })
            }
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let ft = &self.pf.fine_tune;
        Some(match key {
            "sim.scenario" => self.scenario.to_string(),
            "sim.snr_db" => join(&self.snr_db),
            "sim.n_bursts" => self.n_bursts.to_string(),
            "sim.seed" => self.seed.to_string(),
            "sim.out" => self.out.display().to_string(),
            "frame.n_preamble" => self.n_preamble.to_string(),
            "frame.preamble_seed" => self.preamble_seed.to_string(),
            "channel.omega_max" => self.prior.omega_max.to_string(),
            "channel.epsilon_max" => self.prior.epsilon_max.to_string(),
            "channel.n_nodes" => self.n_nodes.to_string(),
            "fg.global_iters" => self.global.n_global_iters.to_string(),
            "fg.feedback" => self.global.feedback.to_string(),
            "fg.estimator" => self.estimator.to_string(),
            "ldpc.alist_path" => self
                .alist_path
                .as_ref()
                .map_or_else(|| "bundled".to_string(), |p| p.display().to_string()),
            "ldpc.max_iters" => self.global.decoder_iters.to_string(),
            "pf.n_particles" => self.pf.n_particles.to_string(),
            "pf.fine_tune" => ft.enabled.to_string(),
            "pf.alpha" => ft.alpha.to_string(),
            "pf.zeta" => ft.zeta.to_string(),
            "pf.zeta_domain" => ft.zeta_domain.to_string(),
            "pf.gamma_scale" => ft.gamma_scale.to_string(),
            "pf.theta_th" => ft.theta_th.to_string(),
            "pf.omega_th" => ft.omega_th.to_string(),
            "pf.resample_fraction" => self.pf.resample_fraction.to_string(),
            "rw.n_q" => self.rw.n_q.to_string(),
            "rw.sigma_w_mode" => self.rw.sigma_w_mode.to_string(),
            "rw.mean_mode" => self.rw.mean_mode.to_string(),
            "bounds.h" => self.h.to_string(),
            "converge.truth" => self.truth.map_or_else(
                || "prior".to_string(),
                |p| join(&[p.theta, p.omega, p.epsilon]),
            ),
            "sweep.values" => join(&self.sweep_values),
            _ => return None,
        })
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Config {
                key: format!("line {}", i + 1),
                msg: format!("expected key = value, got '{line}'"),
            })?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text)
    }

    /// All keys with their current values.
    pub fn entries(&self) -> BTreeMap<&'static str, String> {
        KEYS.iter()
            .map(|&k| (k, self.get(k).expect("listed key")))
            .collect()
    }

    pub fn to_text(&self) -> String {
        KEYS.iter()
            .map(|&k| format!("{k} = {}\n", self.get(k).expect("listed key")))
            .collect()
    }

    /// First 16 hex digits of SHA-256 over the canonical dump. `sim.out`
    /// is excluded so moving the output directory keeps the fingerprint.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.entries() {
            if k == "sim.out" {
                continue;
            }
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(v.as_bytes());
            h.update(b"\n");
        }
        h.finalize()
            .iter()
            .take(8)
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |k: &str, m: &str| {
            Err(Error::Config {
                key: k.into(),
                msg: m.into(),
            })
        };
        if self.n_bursts == 0 {
            return bad("sim.n_bursts", "must be at least 1");
        }
        if self.snr_db.is_empty() {
            return bad("sim.snr_db", "empty SNR list");
        }
        if self.n_nodes == 0 {
            return bad("channel.n_nodes", "must be at least 1");
        }
        if self.global.n_global_iters == 0 {
            return bad("fg.global_iters", "must be at least 1");
        }
        if let Some(p) = &self.alist_path {
            if !p.exists() {
                return bad(
                    "ldpc.alist_path",
                    &format!("{} does not exist", p.display()),
                );
            }
        }
        if let Some(t) = &self.truth {
            if !self.prior.contains(t) {
                return bad("converge.truth", "outside the prior support");
            }
        }
        if matches!(
            self.scenario,
            Scenario::SweepParticles | Scenario::SweepIters | Scenario::SweepNodes
        ) && self.sweep_values.is_empty()
        {
            return bad("sweep.values", "empty sweep");
        }
        Ok(())
    }
}
