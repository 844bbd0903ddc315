//! Quantized random-walk phase tracker: forward/backward sum-product over an
//! N_q-point phase grid, posterior phase means, unwrapping and a quadratic
//! fit to (θ̂, ω̂, ε̂).

use std::f64::consts::{PI, TAU};

use crate::channel::{ChannelParams, NodeObservation, PriorSpec};
use crate::circular::{unwrap, wrap_angle};
use crate::error::{Error, Result};
use crate::fg_engine::{quadratic_phase_pmfs, NodeEstimate, NodeEstimator, SymbolPmf};
use crate::fit::{quadratic_fit, FitResult};
use crate::rng::SimRng;

/// How σ²_W is derived from the priors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SigmaWMode {
    /// δφ_m/6.
    #[default]
    Paper,
    /// δφ_m²/3, the variance of U(−δφ_m, δφ_m).
    UniformVar,
}

impl std::str::FromStr for SigmaWMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Self::Paper),
            "uniform_var" => Ok(Self::UniformVar),
            _ => Err(Error::invalid(format!("unknown sigma_w mode `{s}`"))),
        }
    }
}

impl std::fmt::Display for SigmaWMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Paper => "paper",
            Self::UniformVar => "uniform_var",
        })
    }
}

/// How a grid posterior is reduced to one phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MeanMode {
    /// arg Σ μ(φ)·e^{jφ}.
    #[default]
    Circular,
    /// Σ φ·μ(φ) over grid angles in (−π, π).
    Linear,
}

impl std::str::FromStr for MeanMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "circular" => Ok(Self::Circular),
            "linear" => Ok(Self::Linear),
            _ => Err(Error::invalid(format!("unknown mean mode `{s}`"))),
        }
    }
}

impl std::fmt::Display for MeanMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Circular => "circular",
            Self::Linear => "linear",
        })
    }
}

/// Largest phase increment over a frame, ω_m + ε_m(2L − 3).
pub fn delta_phi_max(prior: &PriorSpec, frame_len: usize) -> f64 {
    prior.omega_max + prior.epsilon_max * (2.0 * frame_len as f64 - 3.0)
}

pub fn sigma_w2_from_priors(prior: &PriorSpec, frame_len: usize, mode: SigmaWMode) -> f64 {
    let d = delta_phi_max(prior, frame_len);
    match mode {
        SigmaWMode::Paper => d / 6.0,
        SigmaWMode::UniformVar => d * d / 3.0,
    }
}

/// Taps below this fraction of the largest are skipped when applying the
/// kernel.
const TAP_FLOOR: f64 = 1e-18;

/// Phase grid with cell centres −π + 2π(ℓ + ½)/N_q and a wrapped-Gaussian
/// circulant transition kernel.
#[derive(Debug, Clone)]
pub struct PhaseGrid {
    n_q: usize,
    sigma_w2: f64,
    angles: Vec<f64>,
    cos: Vec<f64>,
    sin: Vec<f64>,
    /// taps[d] = kernel[ℓ][ℓ + d mod N_q]; rows sum to 1.
    taps: Vec<f64>,
    band: Vec<(usize, f64)>,
}

impl PhaseGrid {
    pub fn new(n_q: usize, sigma_w2: f64) -> Result<Self> {
        if n_q < 4 {
            return Err(Error::invalid(format!("n_q must be at least 4, got {n_q}")));
        }
        if !(sigma_w2 > 0.0 && sigma_w2.is_finite()) {
            return Err(Error::invalid(format!(
                "sigma_w2 must be positive, got {sigma_w2}"
            )));
        }
        let step = TAU / n_q as f64;
        let angles: Vec<f64> = (0..n_q).map(|l| -PI + step * (l as f64 + 0.5)).collect();
        let sigma = sigma_w2.sqrt();
        // Translates beyond ~9σ contribute below 1e-17 relative.
        let g_max = (9.0 * sigma / TAU).ceil() as i64 + 1;
        let mut taps: Vec<f64> = (0..n_q)
            .map(|d| {
                // |offset| keeps taps[d] and taps[N_q − d] bit-identical.
                let delta = step * d.min(n_q - d) as f64;
                (-g_max..=g_max)
                    .map(|g| {
                        let x = delta + TAU * g as f64;
                        (-x * x / (2.0 * sigma_w2)).exp()
                    })
                    .sum()
            })
            .collect();
        let total: f64 = taps.iter().sum();
        taps.iter_mut().for_each(|t| *t /= total);
        let peak = taps.iter().cloned().fold(0.0, f64::max);
        let band = taps
            .iter()
            .enumerate()
            .filter(|(_, &t)| t > TAP_FLOOR * peak)
            .map(|(d, &t)| (d, t))
            .collect();
        Ok(Self {
            n_q,
            sigma_w2,
            cos: angles.iter().map(|a| a.cos()).collect(),
            sin: angles.iter().map(|a| a.sin()).collect(),
            angles,
            taps,
            band,
        })
    }

    pub fn n_q(&self) -> usize {
        self.n_q
    }

    pub fn sigma_w2(&self) -> f64 {
        self.sigma_w2
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn kernel(&self, from: usize, to: usize) -> f64 {
        self.taps[(to + self.n_q - from) % self.n_q]
    }

    pub fn kernel_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n_q)
            .map(|l| (0..self.n_q).map(|m| self.kernel(l, m)).collect())
            .collect()
    }

    /// out[ℓ] = Σ_m v[m]·kernel[m][ℓ], using only non-negligible taps.
    pub fn propagate(&self, v: &[f64], out: &mut [f64]) {
        let n = self.n_q;
        for (l, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for &(d, t) in &self.band {
                acc += t * v[(l + n - d) % n];
            }
            *o = acc;
        }
    }

    /// Same as [`propagate`](Self::propagate) with the full N_q² sum.
    pub fn propagate_dense(&self, v: &[f64], out: &mut [f64]) {
        for (l, o) in out.iter_mut().enumerate() {
            *o = (0..self.n_q).map(|m| v[m] * self.kernel(m, l)).sum();
        }
    }

    /// Normalized local message μ_{f_k→φ_k} over the grid:
    /// Σ_x μ(x)·exp{−|y − x·e^{jφ}|²/σ²}, evaluated in the log domain.
    pub fn local_message(
        &self,
        y: num_complex::Complex64,
        incoming: &SymbolPmf,
        sigma2: f64,
        out: &mut [f64],
    ) {
        let [p0, p1] = incoming.probs;
        let (l0, l1) = (p0.ln(), p1.ln());
        let mut max = f64::NEG_INFINITY;
        for (l, o) in out.iter_mut().enumerate() {
            // |y − x e^{jφ}|² = |y|² + 1 − 2x·Re(y e^{−jφ}); the constant drops.
            let a = 2.0 * (y.re * self.cos[l] + y.im * self.sin[l]) / sigma2;
            let (u, v) = (l0 + a, l1 - a);
            let hi = u.max(v);
            *o = if hi == f64::NEG_INFINITY {
                hi
            } else {
                hi + (-(u - v).abs()).exp().ln_1p()
            };
            max = max.max(*o);
        }
        let mut total = 0.0;
        for o in out.iter_mut() {
            *o = (*o - max).exp();
            total += *o;
        }
        out.iter_mut().for_each(|o| *o /= total);
    }
}

/// Normalizes in place; falls back to uniform and returns true when the
/// vector carries no mass.
fn normalize_or_uniform(v: &mut [f64]) -> bool {
    let s: f64 = v.iter().sum();
    if s > 0.0 && s.is_finite() {
        v.iter_mut().for_each(|x| *x /= s);
        false
    } else {
        let u = 1.0 / v.len() as f64;
        v.iter_mut().for_each(|x| *x = u);
        true
    }
}

/// Grid messages for one frame, stored row-major (L × N_q).
#[derive(Debug, Clone)]
pub struct GridMessages {
    n_q: usize,
    pub local: Vec<f64>,
    pub forward: Vec<f64>,
    pub backward: Vec<f64>,
    pub posterior: Vec<f64>,
    /// Positions where a product vanished and was replaced by uniform.
    pub degenerate: usize,
}

impl GridMessages {
    pub fn len(&self) -> usize {
        self.local.len() / self.n_q
    }

    pub fn is_empty(&self) -> bool {
        self.local.is_empty()
    }

    fn row(v: &[f64], n_q: usize, k: usize) -> &[f64] {
        &v[k * n_q..(k + 1) * n_q]
    }

    pub fn local_at(&self, k: usize) -> &[f64] {
        Self::row(&self.local, self.n_q, k)
    }

    pub fn forward_at(&self, k: usize) -> &[f64] {
        Self::row(&self.forward, self.n_q, k)
    }

    pub fn backward_at(&self, k: usize) -> &[f64] {
        Self::row(&self.backward, self.n_q, k)
    }

    pub fn posterior_at(&self, k: usize) -> &[f64] {
        Self::row(&self.posterior, self.n_q, k)
    }
}

/// Forward/backward recursions from precomputed local messages
/// (`local.len()` = L·N_q).
pub fn forward_backward_local(local: Vec<f64>, grid: &PhaseGrid) -> GridMessages {
    let n = grid.n_q();
    let len = local.len() / n;
    let uniform = 1.0 / n as f64;
    let mut forward = vec![uniform; len * n];
    let mut backward = vec![uniform; len * n];
    let mut degenerate = 0;
    let mut prod = vec![0.0; n];

    for k in 1..len {
        let (done, rest) = forward.split_at_mut(k * n);
        let prev = &done[(k - 1) * n..];
        for ((p, f), l) in prod.iter_mut().zip(prev).zip(&local[(k - 1) * n..k * n]) {
            *p = f * l;
        }
        let out = &mut rest[..n];
        grid.propagate(&prod, out);
        degenerate += usize::from(normalize_or_uniform(out));
    }
    for k in (0..len.saturating_sub(1)).rev() {
        let (head, tail) = backward.split_at_mut((k + 1) * n);
        let next = &tail[..n];
        for ((p, b), l) in prod
            .iter_mut()
            .zip(next)
            .zip(&local[(k + 1) * n..(k + 2) * n])
        {
            *p = b * l;
        }
        let out = &mut head[k * n..];
        grid.propagate(&prod, out);
        degenerate += usize::from(normalize_or_uniform(out));
    }

    let mut posterior: Vec<f64> = local
        .iter()
        .zip(&forward)
        .zip(&backward)
        .map(|((l, f), b)| l * f * b)
        .collect();
    for row in posterior.chunks_mut(n) {
        degenerate += usize::from(normalize_or_uniform(row));
    }
    GridMessages {
        n_q: n,
        local,
        forward,
        backward,
        posterior,
        degenerate,
    }
}

/// Local messages and forward/backward recursions for one node.
/// `incoming[k]` is the symbol PMF at every frame position.
pub fn forward_backward(
    obs: &NodeObservation,
    incoming: &[SymbolPmf],
    grid: &PhaseGrid,
) -> Result<GridMessages> {
    if incoming.len() != obs.len() {
        return Err(Error::LengthMismatch {
            what: "incoming symbol messages",
            expected: obs.len(),
            got: incoming.len(),
        });
    }
    let n = grid.n_q();
    let mut local = vec![0.0; obs.len() * n];
    for (k, row) in local.chunks_mut(n).enumerate() {
        grid.local_message(obs.samples[k], &incoming[k], obs.sigma2, row);
    }
    Ok(forward_backward_local(local, grid))
}

pub fn posterior_phase_mean(posterior: &[f64], grid: &PhaseGrid, mode: MeanMode) -> f64 {
    match mode {
        MeanMode::Circular => {
            let (mut c, mut s) = (0.0, 0.0);
            for ((p, cs), sn) in posterior.iter().zip(&grid.cos).zip(&grid.sin) {
                c += p * cs;
                s += p * sn;
            }
            s.atan2(c)
        }
        MeanMode::Linear => posterior.iter().zip(&grid.angles).map(|(p, a)| p * a).sum(),
    }
}

/// Upward PMFs for k ≥ N_p from a fitted trajectory.
pub fn upward_messages(
    fit: &FitResult,
    obs: &NodeObservation,
    n_preamble: usize,
) -> Vec<SymbolPmf> {
    let params = ChannelParams::new(fit.theta_hat, fit.omega_hat, fit.epsilon_hat);
    quadratic_phase_pmfs(obs, &params, n_preamble)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RwConfig {
    pub n_q: usize,
    pub sigma_w_mode: SigmaWMode,
    pub mean_mode: MeanMode,
}

impl Default for RwConfig {
    fn default() -> Self {
        Self {
            n_q: 100,
            sigma_w_mode: SigmaWMode::Paper,
            mean_mode: MeanMode::Circular,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RwOutput {
    pub fit: FitResult,
    /// Per-symbol posterior phase means, unwrapped.
    pub phases: Vec<f64>,
    pub params: ChannelParams,
    pub upward: Vec<SymbolPmf>,
    pub degenerate: usize,
}

/// Random-walk estimator with its grid built once for a frame length.
#[derive(Debug, Clone)]
pub struct RwEstimator {
    pub cfg: RwConfig,
    grid: PhaseGrid,
}

impl RwEstimator {
    pub fn new(cfg: RwConfig, prior: &PriorSpec, frame_len: usize) -> Result<Self> {
        let s2 = sigma_w2_from_priors(prior, frame_len, cfg.sigma_w_mode);
        Ok(Self {
            cfg,
            grid: PhaseGrid::new(cfg.n_q, s2)?,
        })
    }

    pub fn grid(&self) -> &PhaseGrid {
        &self.grid
    }

    pub fn run(
        &self,
        obs: &NodeObservation,
        incoming: &[SymbolPmf],
        n_preamble: usize,
    ) -> Result<RwOutput> {
        let msgs = forward_backward(obs, incoming, &self.grid)?;
        let means: Vec<f64> = (0..obs.len())
            .map(|k| posterior_phase_mean(msgs.posterior_at(k), &self.grid, self.cfg.mean_mode))
            .collect();
        let phases = unwrap(&means);
        let fit = quadratic_fit(&phases, 0)?;
        let upward = upward_messages(&fit, obs, n_preamble);
        Ok(RwOutput {
            params: ChannelParams::new(wrap_angle(fit.theta_hat), fit.omega_hat, fit.epsilon_hat),
            fit,
            phases,
            upward,
            degenerate: msgs.degenerate,
        })
    }
}

impl NodeEstimator for RwEstimator {
    fn estimate(
        &self,
        obs: &NodeObservation,
        incoming: &[SymbolPmf],
        n_preamble: usize,
        _rng: &mut SimRng,
    ) -> Result<NodeEstimate> {
        let out = self.run(obs, incoming, n_preamble)?;
        let mut flags = Vec::new();
        if out.degenerate > 0 {
            flags.push(format!("{} degenerate grid products", out.degenerate));
        }
        Ok(NodeEstimate {
            params: out.params,
            upward: out.upward,
            flags,
        })
    }
}
