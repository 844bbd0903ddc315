use rand::Rng;
use rayon::prelude::*;

use super::{pairwise_sum, EstimatorKind, ExperimentConfig, ResultRow, Scenario, Summary};
use crate::bounds::bounds_sweep;
use crate::channel::{apply, sample_params, snr_db_to_sigma2, ChannelParams, NodeObservation};
use crate::circular::{resultant, wrapped_diff};
use crate::codec::{bundled_code, LdpcCode};
use crate::error::{Error, Result};
use crate::fg_engine::{
    coherent_decode, run_global_loop, GenieEstimator, MessageBoard, NodeEstimator, SymbolPmf,
};
use crate::framing::{build_frame, generate_preamble, FrameConfig};
use crate::pf_estimator::PfEstimator;
use crate::rng::{Role, SimRng, StreamKey};
use crate::rw_estimator::RwEstimator;

/// Code and preamble shared by every burst of an experiment.
#[derive(Debug, Clone)]
pub struct Setup {
    pub code: LdpcCode,
    pub preamble: Vec<u8>,
    /// True when the bundled PEG code stands in for the reference code.
    pub code_substituted: bool,
}

impl Setup {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let (code, code_substituted) = match &cfg.alist_path {
            Some(p) => (LdpcCode::load(p)?, false),
            None => (bundled_code(), true),
        };
        Ok(Self {
            code,
            preamble: generate_preamble(cfg.preamble_seed, cfg.n_preamble),
            code_substituted,
        })
    }

    pub fn frame_config(&self) -> FrameConfig {
        FrameConfig::new(self.preamble.len(), self.code.n())
    }

    pub fn frame_len(&self) -> usize {
        self.frame_config().len()
    }

    /// Incoming symbol messages before any decoding: known preamble, uniform data.
    pub fn semi_data_aided_incoming(&self) -> Vec<SymbolPmf> {
        MessageBoard::new(1, &self.preamble, self.code.n())
            .downward
            .swap_remove(0)
    }
}

/// One transmitted codeword seen by every node.
#[derive(Debug, Clone)]
pub struct Burst {
    pub info: Vec<u8>,
    pub truth: Vec<ChannelParams>,
    pub observations: Vec<NodeObservation>,
}

/// Payload, channel parameters and noise come from separate streams keyed
/// by (seed, burst, node), so the same burst index reuses them across SNR
/// points and configurations.
pub fn simulate_burst(
    cfg: &ExperimentConfig,
    setup: &Setup,
    snr_db: f64,
    burst: u64,
    n_nodes: usize,
) -> Result<Burst> {
    let mut rng = StreamKey::new(cfg.seed, burst, 0, Role::Payload).rng();
    let info: Vec<u8> = (0..setup.code.k())
        .map(|_| rng.random_range(0..2u8))
        .collect();
    let codeword = setup.code.encode(&info)?;
    let frame = build_frame(&setup.preamble, &codeword, &setup.frame_config())?;
    let sigma2 = snr_db_to_sigma2(snr_db);
    let mut truth = Vec::with_capacity(n_nodes);
    let mut observations = Vec::with_capacity(n_nodes);
    for node in 0..n_nodes {
        let p = cfg.truth.unwrap_or_else(|| {
            sample_params(
                &mut StreamKey::new(cfg.seed, burst, node as u32, Role::Params).rng(),
                &cfg.prior,
            )
        });
        let mut noise = StreamKey::new(cfg.seed, burst, node as u32, Role::Noise).rng();
        observations.push(apply(&frame, &p, sigma2, node, &mut noise));
        truth.push(p);
    }
    Ok(Burst {
        info,
        truth,
        observations,
    })
}

fn estimator_rngs(cfg: &ExperimentConfig, burst: u64, n_nodes: usize) -> Vec<SimRng> {
    (0..n_nodes)
        .map(|n| StreamKey::new(cfg.seed, burst, n as u32, Role::Estimator).rng())
        .collect()
}

#[derive(Debug, Clone)]
pub enum Backend {
    Pf(PfEstimator),
    Rw(RwEstimator),
    Genie,
}

impl Backend {
    pub fn new(cfg: &ExperimentConfig, setup: &Setup) -> Result<Self> {
        Ok(match cfg.estimator {
            EstimatorKind::Pf => Self::Pf(PfEstimator::new(cfg.pf, cfg.prior)?),
            EstimatorKind::Rw => Self::Rw(RwEstimator::new(cfg.rw, &cfg.prior, setup.frame_len())?),
            EstimatorKind::Genie => Self::Genie,
        })
    }

    /// Single-pass estimate of one node's parameters.
    pub fn estimate_once(
        &self,
        obs: &NodeObservation,
        truth: &ChannelParams,
        incoming: &[SymbolPmf],
        n_preamble: usize,
        rng: &mut SimRng,
    ) -> Result<ChannelParams> {
        match self {
            Self::Pf(pf) => Ok(pf.run(obs, incoming, n_preamble, rng)?.params),
            Self::Rw(rw) => Ok(rw.run(obs, incoming, n_preamble)?.params),
            Self::Genie => Ok(*truth),
        }
    }
}

fn for_bursts<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    (0..n as u64).into_par_iter().map(f).collect()
}

fn bound_rows(cfg: &ExperimentConfig, frame_len: usize, snr_db: f64) -> Result<Vec<ResultRow>> {
    let mut rows = Vec::new();
    for r in bounds_sweep(&[snr_db], frame_len, &cfg.prior, cfg.h)? {
        for w in &r.warnings {
            eprintln!("bounds at {snr_db} dB: {w}");
        }
        for (name, d) in [("jcrb", r.jcrb_diag()), ("wbcrb", r.wbcrb_diag())] {
            for (p, v) in ["theta", "omega", "epsilon"].iter().zip(d) {
                rows.push(ResultRow::new(cfg, snr_db, format!("{name}_{p}"), v));
            }
        }
    }
    Ok(rows)
}

/// Single-node semi data-aided estimation MSE per SNR, with the θ error
/// wrapped to (−π, π]. Estimator failures are counted, not fatal.
pub fn run_mse(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let setup = Setup::new(cfg)?;
    let backend = Backend::new(cfg, &setup)?;
    let incoming = setup.semi_data_aided_incoming();
    let mut rows = Vec::new();
    for &snr in &cfg.snr_db {
        let trials = for_bursts(cfg.n_bursts, |b| -> Result<Option<[f64; 3]>> {
            let burst = simulate_burst(cfg, &setup, snr, b, 1)?;
            let truth = burst.truth[0];
            let mut rng = StreamKey::new(cfg.seed, b, 0, Role::Estimator).rng();
            Ok(backend
                .estimate_once(
                    &burst.observations[0],
                    &truth,
                    &incoming,
                    setup.preamble.len(),
                    &mut rng,
                )
                .ok()
                .map(|e| {
                    [
                        wrapped_diff(e.theta, truth.theta).powi(2),
                        (e.omega - truth.omega).powi(2),
                        (e.epsilon - truth.epsilon).powi(2),
                    ]
                }))
        });
        let trials: Vec<Option<[f64; 3]>> = trials.into_iter().collect::<Result<_>>()?;
        let ok: Vec<[f64; 3]> = trials.iter().flatten().copied().collect();
        let failures = trials.len() - ok.len();
        for (i, name) in ["mse_theta", "mse_omega", "mse_epsilon"].iter().enumerate() {
            let s = Summary::of(&ok.iter().map(|t| t[i]).collect::<Vec<_>>());
            if s.n > 0 {
                rows.push(ResultRow::new(cfg, snr, *name, s.mean).with_stats(&s));
            }
        }
        rows.push(ResultRow::new(cfg, snr, "failures", failures as f64));
        rows.extend(bound_rows(cfg, setup.frame_len(), snr)?);
    }
    Ok(rows)
}

struct BerTrial {
    errors: usize,
    genie_errors: usize,
    dropouts: usize,
}

/// BER over information bits of the full receiver, with the coherent
/// receiver on the same bursts as the `ber_genie` baseline.
pub fn run_ber(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let setup = Setup::new(cfg)?;
    let backend = Backend::new(cfg, &setup)?;
    let k = setup.code.k() as f64;
    let mut rows = Vec::new();
    for &snr in &cfg.snr_db {
        let trials = for_bursts(cfg.n_bursts, |b| -> Result<BerTrial> {
            let burst = simulate_burst(cfg, &setup, snr, b, cfg.n_nodes)?;
            let mut rngs = estimator_rngs(cfg, b, cfg.n_nodes);
            let genie;
            let est: &dyn NodeEstimator = match &backend {
                Backend::Pf(p) => p,
                Backend::Rw(r) => r,
                Backend::Genie => {
                    genie = GenieEstimator {
                        truth: burst.truth.clone(),
                    };
                    &genie
                }
            };
            let out = run_global_loop(
                &burst.observations,
                &setup.preamble,
                &setup.code,
                est,
                &cfg.global,
                &mut rngs,
            )?;
            let reference = coherent_decode(
                &burst.observations,
                &burst.truth,
                setup.preamble.len(),
                &setup.code,
                cfg.global.decoder_iters,
            );
            let count = |bits: &[u8]| bits.iter().zip(&burst.info).filter(|(a, b)| a != b).count();
            Ok(BerTrial {
                errors: count(&out.info_bits),
                genie_errors: count(&reference),
                dropouts: out.flags.iter().filter(|f| f.contains("dropped")).count(),
            })
        });
        let trials: Vec<BerTrial> = trials.into_iter().collect::<Result<_>>()?;
        let frac =
            |f: fn(&BerTrial) -> usize| trials.iter().map(|t| f(t) as f64 / k).collect::<Vec<_>>();
        let ber = Summary::of(&frac(|t| t.errors));
        let genie = Summary::of(&frac(|t| t.genie_errors));
        let fer = Summary::of(
            &trials
                .iter()
                .map(|t| f64::from(u8::from(t.errors > 0)))
                .collect::<Vec<_>>(),
        );
        let dropouts: f64 =
            pairwise_sum(&trials.iter().map(|t| t.dropouts as f64).collect::<Vec<_>>());
        rows.push(ResultRow::new(cfg, snr, "ber", ber.mean).with_stats(&ber));
        rows.push(ResultRow::new(cfg, snr, "ber_genie", genie.mean).with_stats(&genie));
        rows.push(ResultRow::new(cfg, snr, "fer", fer.mean).with_stats(&fer));
        rows.push(ResultRow::new(cfg, snr, "dropouts", dropouts));
    }
    Ok(rows)
}

/// Per-symbol particle-filter traces at a fixed truth, averaged over bursts,
/// with fine-tuning on (`param` = 1) and off (`param` = 0).
pub fn run_convergence(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    if cfg.estimator != EstimatorKind::Pf {
        return Err(Error::Config {
            key: "fg.estimator".into(),
            msg: "convergence traces need the particle filter".into(),
        });
    }
    let truth = cfg.truth.ok_or_else(|| Error::Config {
        key: "converge.truth".into(),
        msg: "a fixed truth is required".into(),
    })?;
    let setup = Setup::new(cfg)?;
    let incoming = setup.semi_data_aided_incoming();
    let n_p = setup.preamble.len();
    let mut rows = Vec::new();
    for &snr in &cfg.snr_db {
        for ft in [true, false] {
            let mut pf_cfg = cfg.pf;
            pf_cfg.fine_tune.enabled = ft;
            let pf = PfEstimator::new(pf_cfg, cfg.prior)?;
            let runs = for_bursts(cfg.n_bursts, |b| -> Result<_> {
                let burst = simulate_burst(cfg, &setup, snr, b, 1)?;
                let mut rng = StreamKey::new(cfg.seed, b, 0, Role::Estimator).rng();
                Ok(pf
                    .run(&burst.observations[0], &incoming, n_p, &mut rng)
                    .ok()
                    .map(|o| (o.trace, o.fine_tuned_at)))
            });
            let runs: Vec<_> = runs.into_iter().collect::<Result<Vec<_>>>()?;
            let ok: Vec<_> = runs.iter().flatten().collect();
            let param = f64::from(u8::from(ft));
            let push = |rows: &mut Vec<ResultRow>, name: &str, k: Option<usize>, s: Summary| {
                let mut r = ResultRow::new(cfg, snr, name, s.mean)
                    .with_stats(&s)
                    .with_param(param);
                r.index = k;
                rows.push(r);
            };
            if ok.is_empty() {
                rows.push(
                    ResultRow::new(cfg, snr, "failures", runs.len() as f64).with_param(param),
                );
                continue;
            }
            let len = ok[0].0.len();
            for k in 0..len {
                let at = |f: &dyn Fn(&ChannelParams) -> f64| {
                    ok.iter().map(|(t, _)| f(&t[k])).collect::<Vec<_>>()
                };
                let n = ok.len() as f64;
                let (theta_mean, _) = resultant(ok.iter().map(|(t, _)| (t[k].theta, 1.0 / n)));
                let mut r = ResultRow::new(cfg, snr, "mean_theta", theta_mean)
                    .with_param(param)
                    .with_index(k);
                r.n_trials = ok.len();
                rows.push(r);
                push(
                    &mut rows,
                    "mean_omega",
                    Some(k),
                    Summary::of(&at(&|p| p.omega)),
                );
                push(
                    &mut rows,
                    "mean_epsilon",
                    Some(k),
                    Summary::of(&at(&|p| p.epsilon)),
                );
                push(
                    &mut rows,
                    "abs_err_theta",
                    Some(k),
                    Summary::of(&at(&|p| wrapped_diff(p.theta, truth.theta).abs())),
                );
                push(
                    &mut rows,
                    "abs_err_omega",
                    Some(k),
                    Summary::of(&at(&|p| (p.omega - truth.omega).abs())),
                );
                push(
                    &mut rows,
                    "abs_err_epsilon",
                    Some(k),
                    Summary::of(&at(&|p| (p.epsilon - truth.epsilon).abs())),
                );
            }
            let fired: Vec<f64> = ok.iter().filter_map(|(_, f)| f.map(|k| k as f64)).collect();
            let rate = Summary::of(
                &ok.iter()
                    .map(|(_, f)| f64::from(u8::from(f.is_some())))
                    .collect::<Vec<_>>(),
            );
            push(&mut rows, "fine_tune_rate", None, rate);
            if !fired.is_empty() {
                push(&mut rows, "fine_tune_k", None, Summary::of(&fired));
            }
            rows.push(
                ResultRow::new(cfg, snr, "failures", (runs.len() - ok.len()) as f64)
                    .with_param(param),
            );
        }
    }
    Ok(rows)
}

/// BER for every value of `sweep.values`, applied to the particle count,
/// the global iteration count or the node count.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for &v in &cfg.sweep_values {
        if !(v >= 1.0 && v.fract() == 0.0) {
            return Err(Error::Config {
                key: "sweep.values".into(),
                msg: format!("{v} is not a positive integer"),
            });
        }
        let mut c = cfg.clone();
        match cfg.scenario {
            Scenario::SweepParticles => c.pf.n_particles = v as usize,
            Scenario::SweepIters => c.global.n_global_iters = v as usize,
            Scenario::SweepNodes => c.n_nodes = v as usize,
            s => return Err(Error::invalid(format!("scenario {s} is not a sweep"))),
        }
        let fp = cfg.fingerprint();
        rows.extend(run_ber(&c)?.into_iter().map(|mut r| {
            r.fingerprint.clone_from(&fp);
            r.with_param(v)
        }));
    }
    Ok(rows)
}

/// Bound diagonals per SNR for a frame of `frame_len` symbols, or the
/// configured frame when `None`.
pub fn run_bounds(cfg: &ExperimentConfig, frame_len: Option<usize>) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let len = match frame_len {
        Some(l) => l,
        None => Setup::new(cfg)?.frame_len(),
    };
    let mut rows = Vec::new();
    for &snr in &cfg.snr_db {
        rows.extend(bound_rows(cfg, len, snr)?);
    }
    Ok(rows)
}

/// Dispatches on `cfg.scenario`.
pub fn run(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    match cfg.scenario {
        Scenario::Mse => run_mse(cfg),
        Scenario::Ber => run_ber(cfg),
        Scenario::Converge => run_convergence(cfg),
        Scenario::Bounds => run_bounds(cfg, None),
        Scenario::SweepParticles | Scenario::SweepIters | Scenario::SweepNodes => run_sweep(cfg),
    }
}

/// SNR at which a BER curve crosses `target`, by linear interpolation of
/// log10(BER) between the bracketing grid points. Zero BER is replaced by
/// `floor` (e.g. half an error over the bits simulated). `None` when the
/// curve never brackets the target.
pub fn ber_crossing(points: &[(f64, f64)], target: f64, floor: f64) -> Option<f64> {
    let mut pts: Vec<(f64, f64)> = points.iter().map(|&(s, b)| (s, b.max(floor))).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts.windows(2).find_map(|w| {
        let ((s0, b0), (s1, b1)) = (w[0], w[1]);
        if b0 >= target && b1 <= target && b0 > b1 {
            let t = (b0.log10() - target.log10()) / (b0.log10() - b1.log10());
            Some(s0 + t * (s1 - s0))
        } else if b0 == target {
            Some(s0)
        } else {
            None
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(scenario: Scenario) -> ExperimentConfig {
        let mut c = ExperimentConfig::for_scenario(scenario);
        c.n_bursts = 4;
        c.snr_db = vec![4.0];
        c.pf.n_particles = 50;
        c
    }

    #[test]
    fn bursts_are_reproducible_and_distinct() {
        let cfg = small(Scenario::Ber);
        let setup = Setup::new(&cfg).unwrap();
        let a = simulate_burst(&cfg, &setup, 3.0, 5, 2).unwrap();
        let b = simulate_burst(&cfg, &setup, 3.0, 5, 2).unwrap();
        assert_eq!(a.observations, b.observations);
        assert_ne!(a.truth[0], a.truth[1]);
        assert_ne!(a.observations[0].samples, a.observations[1].samples);
        let c = simulate_burst(&cfg, &setup, 3.0, 6, 2).unwrap();
        assert_ne!(a.info, c.info);
        assert_eq!(a.observations[0].len(), 534);
        assert!(setup.code_substituted);
    }

    #[test]
    fn fixed_truth_is_used_for_all_nodes() {
        let mut cfg = small(Scenario::Ber);
        cfg.truth = Some(ChannelParams::new(1.0, 0.001, 0.0));
        let setup = Setup::new(&cfg).unwrap();
        let b = simulate_burst(&cfg, &setup, 3.0, 0, 3).unwrap();
        assert!(b.truth.iter().all(|t| *t == cfg.truth.unwrap()));
    }

    #[test]
    fn genie_mse_is_zero_and_bounds_attached() {
        let mut cfg = small(Scenario::Mse);
        cfg.estimator = EstimatorKind::Genie;
        let rows = run_mse(&cfg).unwrap();
        let get = |m: &str| rows.iter().find(|r| r.metric == m).unwrap();
        assert_eq!(get("mse_theta").value, 0.0);
        assert_eq!(get("mse_theta").n_trials, 4);
        assert_eq!(get("failures").value, 0.0);
        assert!(get("jcrb_omega").value > 0.0);
        assert!(get("wbcrb_epsilon").value > 0.0);
    }

    #[test]
    fn rw_mse_runs_and_is_deterministic() {
        let cfg = small(Scenario::Mse);
        let a = run_mse(&cfg).unwrap();
        assert_eq!(a, run_mse(&cfg).unwrap());
        let theta = a.iter().find(|r| r.metric == "mse_theta").unwrap();
        assert!(theta.value.is_finite() && theta.value < 1.0);
    }

    #[test]
    fn genie_ber_matches_coherent_baseline() {
        let mut cfg = small(Scenario::Ber);
        cfg.estimator = EstimatorKind::Genie;
        cfg.snr_db = vec![-2.0];
        cfg.n_bursts = 6;
        let rows = run_ber(&cfg).unwrap();
        let get = |m: &str| rows.iter().find(|r| r.metric == m).unwrap().value;
        assert_eq!(get("ber"), get("ber_genie"));
    }

    #[test]
    fn convergence_rows_cover_every_symbol() {
        let mut cfg = small(Scenario::Converge);
        cfg.n_bursts = 2;
        cfg.snr_db = vec![8.0];
        let rows = run_convergence(&cfg).unwrap();
        let n = rows
            .iter()
            .filter(|r| r.metric == "abs_err_omega" && r.param == Some(1.0))
            .count();
        assert_eq!(n, 534);
        let mut rw = cfg.clone();
        rw.estimator = EstimatorKind::Rw;
        assert!(run_convergence(&rw).is_err());
    }

    #[test]
    fn sweep_tags_rows_with_the_swept_value() {
        let mut cfg = small(Scenario::SweepIters);
        cfg.n_bursts = 2;
        cfg.sweep_values = vec![1.0, 2.0];
        let rows = run_sweep(&cfg).unwrap();
        assert!(rows
            .iter()
            .any(|r| r.param == Some(2.0) && r.metric == "ber"));
        assert!(rows.iter().all(|r| r.fingerprint == cfg.fingerprint()));
        cfg.sweep_values = vec![1.5];
        assert!(run_sweep(&cfg).is_err());
    }

    #[test]
    fn crossing_interpolates_in_log_domain() {
        let pts = [(0.0, 1e-1), (1.0, 1e-3), (2.0, 1e-5)];
        assert!((ber_crossing(&pts, 1e-2, 1e-9).unwrap() - 0.5).abs() < 1e-12);
        assert!((ber_crossing(&pts, 1e-4, 1e-9).unwrap() - 1.5).abs() < 1e-12);
        assert_eq!(ber_crossing(&pts, 1.0, 1e-9), None);
        assert_eq!(ber_crossing(&pts, 1e-7, 1e-9), None);
        // a zero-error point is floored
        let z = [(0.0, 1e-2), (1.0, 0.0)];
        assert!((ber_crossing(&z, 1e-3, 1e-4).unwrap() - 0.5).abs() < 1e-12);
    }
}
