//! Sequential importance sampling particle filter over (θ, ω, ε) with
//! moment-matched von Mises / beta proposals, systematic resampling and
//! fine-tuning by quadratic regression of the phase history.

use rand::Rng;
use rand_distr::{Beta, Distribution};

use crate::channel::{ChannelParams, NodeObservation, PriorSpec};
use crate::circular::{
    kappa_from_resultant, resultant, unwrap, wrap_angle, wrapped_diff, VonMises,
};
use crate::error::{Error, Result};
use crate::fg_engine::{quadratic_phase_pmfs, NodeEstimate, NodeEstimator, SymbolPmf};
use crate::fit::{quadratic_fit, FitResult};
use crate::rng::SimRng;

/// Beta variances are kept at least this fraction of m(1−m).
const BETA_VAR_FLOOR: f64 = 1e-12;
/// Beta means are kept this far from 0 and 1.
const BETA_MEAN_MARGIN: f64 = 1e-9;
/// Resultant length below which θ̂ is considered undefined.
const RESULTANT_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FineTuneConfig {
    pub enabled: bool,
    /// Half-width α of the θ regeneration window.
    pub alpha: f64,
    /// Half-width ζ of the ω regeneration window, read in `zeta_domain`.
    pub zeta: f64,
    pub zeta_domain: ZetaDomain,
    /// γ = gamma_scale·ε_m.
    pub gamma_scale: f64,
    /// Trigger threshold on the weighted angular variance of θ.
    pub theta_th: f64,
    /// Trigger threshold on the weighted variance of Ω = (ω + ω_m)/(2ω_m).
    pub omega_th: f64,
}

/// Units of the ω regeneration half-width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ZetaDomain {
    /// ζ is a half-width on Ω ∈ (0, 1); the ω window is ±2ω_m·ζ.
    #[default]
    Translated,
    /// ζ is a half-width in radians/symbol.
    Radians,
}

impl std::str::FromStr for ZetaDomain {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "translated" => Ok(Self::Translated),
            "radians" => Ok(Self::Radians),
            _ => Err(Error::invalid(format!(
                "unknown zeta domain '{s}' (translated|radians)"
            ))),
        }
    }
}

impl std::fmt::Display for ZetaDomain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Translated => "translated",
            Self::Radians => "radians",
        })
    }
}

impl Default for FineTuneConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            alpha: 0.1,
            zeta: 0.01,
            zeta_domain: ZetaDomain::Translated,
            gamma_scale: 0.1,
            theta_th: 0.05,
            omega_th: 1e-5,
        }
    }
}

impl FineTuneConfig {
    /// ω regeneration half-width in radians/symbol.
    pub fn zeta_radians(&self, prior: &PriorSpec) -> f64 {
        match self.zeta_domain {
            ZetaDomain::Translated => 2.0 * prior.omega_max * self.zeta,
            ZetaDomain::Radians => self.zeta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("zeta", self.zeta),
            ("gamma_scale", self.gamma_scale),
            ("theta_th", self.theta_th),
            ("omega_th", self.omega_th),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!(
                    "fine-tune {name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PfConfig {
    pub n_particles: usize,
    pub fine_tune: FineTuneConfig,
    /// Resample when N_eff ≤ resample_fraction·N.
    pub resample_fraction: f64,
}

impl Default for PfConfig {
    fn default() -> Self {
        Self {
            n_particles: 400,
            fine_tune: FineTuneConfig::default(),
            resample_fraction: 0.5,
        }
    }
}

/// Weighted particles over (θ, ω, ε).
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSet {
    pub theta: Vec<f64>,
    pub omega: Vec<f64>,
    pub epsilon: Vec<f64>,
    pub weights: Vec<f64>,
}

impl ParticleSet {
    /// Uniform draws from the priors with equal weights.
    pub fn init(n: usize, prior: &PriorSpec, rng: &mut SimRng) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid(format!(
                "need at least 2 particles, got {n}"
            )));
        }
        let mut ps = Self {
            theta: Vec::with_capacity(n),
            omega: Vec::with_capacity(n),
            epsilon: Vec::with_capacity(n),
            weights: vec![1.0 / n as f64; n],
        };
        for _ in 0..n {
            ps.theta.push(wrap_angle(
                rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
            ));
            ps.omega
                .push(rng.random_range(-prior.omega_max..prior.omega_max));
            ps.epsilon.push(if prior.epsilon_max > 0.0 {
                rng.random_range(-prior.epsilon_max..prior.epsilon_max)
            } else {
                0.0
            });
        }
        Ok(ps)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// 1/Σw².
    pub fn effective_sample_size(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }

    /// Weighted circular mean of θ and mean resultant length.
    pub fn theta_resultant(&self) -> (f64, f64) {
        resultant(self.theta.iter().copied().zip(self.weights.iter().copied()))
    }

    /// Weighted mean squared wrapped deviation of θ about its circular mean.
    pub fn theta_variance(&self) -> f64 {
        let (mu, _) = self.theta_resultant();
        self.theta
            .iter()
            .zip(&self.weights)
            .map(|(&t, &w)| w * wrapped_diff(t, mu).powi(2))
            .sum()
    }

    /// Weighted mean and variance of a coordinate mapped through `f`.
    fn moments(&self, values: &[f64], f: impl Fn(f64) -> f64) -> (f64, f64) {
        let mean: f64 = values
            .iter()
            .zip(&self.weights)
            .map(|(&v, &w)| w * f(v))
            .sum();
        let var = values
            .iter()
            .zip(&self.weights)
            .map(|(&v, &w)| w * (f(v) - mean).powi(2))
            .sum();
        (mean, var)
    }

    /// Weighted variance of Ω = (ω + ω_m)/(2ω_m).
    pub fn omega_unit_variance(&self, prior: &PriorSpec) -> f64 {
        self.moments(&self.omega, |w| to_unit(w, prior.omega_max)).1
    }

    fn set_uniform_weights(&mut self) {
        let u = 1.0 / self.len() as f64;
        self.weights.iter_mut().for_each(|w| *w = u);
    }
}

/// x ∈ (−m, m) ↦ (x + m)/(2m) ∈ (0, 1).
pub fn to_unit(x: f64, half_width: f64) -> f64 {
    (x + half_width) / (2.0 * half_width)
}

/// Inverse of [`to_unit`].
pub fn from_unit(u: f64, half_width: f64) -> f64 {
    2.0 * half_width * u - half_width
}

/// Moment-matched beta shapes for one translated coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaFit {
    pub mean: f64,
    pub var: f64,
    pub u: f64,
    pub v: f64,
    /// The variance was clamped to keep the shapes positive.
    pub clamped: bool,
}

impl BetaFit {
    pub fn from_moments(mean: f64, var: f64) -> Self {
        let m = mean.clamp(BETA_MEAN_MARGIN, 1.0 - BETA_MEAN_MARGIN);
        let cap = m * (1.0 - m);
        let (mut var, mut clamped) = (var, false);
        if !(var < cap) {
            var = 0.999 * cap;
            clamped = true;
        }
        let var = var.max(BETA_VAR_FLOOR * cap);
        let c = cap / var - 1.0;
        Self {
            mean: m,
            var,
            u: m * c,
            v: (1.0 - m) * c,
            clamped,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProposalStats {
    pub mu_theta: f64,
    pub kappa_theta: f64,
    pub omega: BetaFit,
    /// `None` when ε_m = 0 and ε is fixed at zero.
    pub epsilon: Option<BetaFit>,
}

impl ProposalStats {
    pub fn clamped(&self) -> bool {
        self.omega.clamped || self.epsilon.is_some_and(|e| e.clamped)
    }
}

pub fn proposal_stats(ps: &ParticleSet, prior: &PriorSpec) -> ProposalStats {
    let (mu, r) = ps.theta_resultant();
    let (om, ov) = ps.moments(&ps.omega, |w| to_unit(w, prior.omega_max));
    let epsilon = (prior.epsilon_max > 0.0).then(|| {
        let (em, ev) = ps.moments(&ps.epsilon, |e| to_unit(e, prior.epsilon_max));
        BetaFit::from_moments(em, ev)
    });
    ProposalStats {
        mu_theta: mu,
        kappa_theta: kappa_from_resultant(r),
        omega: BetaFit::from_moments(om, ov),
        epsilon,
    }
}

/// Replaces every particle position by a draw from the proposal. Weights
/// are left untouched.
pub fn draw_particles(
    ps: &mut ParticleSet,
    stats: &ProposalStats,
    prior: &PriorSpec,
    rng: &mut SimRng,
) -> Result<()> {
    let vm = VonMises::new(stats.mu_theta, stats.kappa_theta);
    let beta = |b: &BetaFit| {
        Beta::new(b.u, b.v).map_err(|e| Error::invalid(format!("beta({}, {}): {e}", b.u, b.v)))
    };
    let bo = beta(&stats.omega)?;
    let be = stats.epsilon.as_ref().map(beta).transpose()?;
    for i in 0..ps.len() {
        ps.theta[i] = vm.sample(rng);
        ps.omega[i] = from_unit(bo.sample(rng), prior.omega_max);
        ps.epsilon[i] = match &be {
            Some(b) => from_unit(b.sample(rng), prior.epsilon_max),
            None => 0.0,
        };
    }
    Ok(())
}

/// ln Σ_X μ(X)·exp{−|y − X·e^{jφ}|²/σ²} up to a φ-independent constant.
#[inline]
fn log_symbol_evidence(y: num_complex::Complex64, phi: f64, l0: f64, l1: f64, sigma2: f64) -> f64 {
    let (s, c) = phi.sin_cos();
    let a = 2.0 * (y.re * c + y.im * s) / sigma2;
    let (u, v) = (l0 + a, l1 - a);
    let hi = u.max(v);
    if hi == f64::NEG_INFINITY {
        hi
    } else {
        hi + (-(u - v).abs()).exp().ln_1p()
    }
}

/// w_k ∝ w_{k−1}·Σ_X μ(X)·exp{−|y_k − X·e^{jφ_k}|²/σ²}, normalized in the
/// log domain. Returns true if every weight vanished and uniform weights
/// were restored.
pub fn update_weights(
    ps: &mut ParticleSet,
    y: num_complex::Complex64,
    k: usize,
    incoming: &SymbolPmf,
    sigma2: f64,
) -> bool {
    let (l0, l1) = (incoming.probs[0].ln(), incoming.probs[1].ln());
    let kf = k as f64;
    let mut max = f64::NEG_INFINITY;
    for i in 0..ps.len() {
        let phi = ps.theta[i] + ps.omega[i] * kf + ps.epsilon[i] * kf * kf;
        let lw = ps.weights[i].ln() + log_symbol_evidence(y, phi, l0, l1, sigma2);
        ps.weights[i] = lw;
        if lw > max {
            max = lw;
        }
    }
    normalize_log_weights(&mut ps.weights, max)
}

fn normalize_log_weights(w: &mut [f64], max: f64) -> bool {
    if !max.is_finite() {
        let u = 1.0 / w.len() as f64;
        w.iter_mut().for_each(|x| *x = u);
        return true;
    }
    let mut total = 0.0;
    for x in w.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    w.iter_mut().for_each(|x| *x /= total);
    false
}

/// Systematic resampling; weights are reset to 1/N.
pub fn resample(ps: &mut ParticleSet, rng: &mut SimRng) {
    let n = ps.len();
    let step = 1.0 / n as f64;
    let mut u = rng.random::<f64>() * step;
    let mut idx = Vec::with_capacity(n);
    let mut cum = ps.weights[0];
    let mut j = 0;
    for _ in 0..n {
        while u > cum && j + 1 < n {
            j += 1;
            cum += ps.weights[j];
        }
        idx.push(j);
        u += step;
    }
    let pick = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
    ps.theta = pick(&ps.theta);
    ps.omega = pick(&ps.omega);
    ps.epsilon = pick(&ps.epsilon);
    ps.set_uniform_weights();
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PfEstimate {
    pub params: ChannelParams,
    /// θ̂ + ω̂k + ε̂k², not wrapped.
    pub phi: f64,
    /// The resultant vanished and the previous θ̂ was reused.
    pub theta_undefined: bool,
}

pub fn estimate(ps: &ParticleSet, k: usize, previous_theta: f64) -> PfEstimate {
    let (mu, r) = ps.theta_resultant();
    let undefined = r < RESULTANT_FLOOR;
    let theta = if undefined { previous_theta } else { mu };
    let omega: f64 = ps.omega.iter().zip(&ps.weights).map(|(a, w)| a * w).sum();
    let epsilon: f64 = ps.epsilon.iter().zip(&ps.weights).map(|(a, w)| a * w).sum();
    let params = ChannelParams::new(theta, omega, epsilon);
    PfEstimate {
        params,
        phi: params.unwrapped_phase(k),
        theta_undefined: undefined,
    }
}

/// Per-symbol phase estimates φ̂_0, φ̂_1, ...
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PhaseHistory {
    phases: Vec<f64>,
}

impl PhaseHistory {
    pub fn push(&mut self, phi: f64) {
        self.phases.push(phi);
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.phases
    }

    /// The history with 2π jumps (from θ̂ crossing ±π) removed.
    pub fn unwrapped(&self) -> Vec<f64> {
        unwrap(&self.phases)
    }
}

/// Regenerates the cloud around a quadratic fit of the history and weights
/// it with the current observation alone.
#[allow(clippy::too_many_arguments)]
pub fn fine_tune(
    ps: &mut ParticleSet,
    history: &PhaseHistory,
    y: num_complex::Complex64,
    k: usize,
    incoming: &SymbolPmf,
    sigma2: f64,
    cfg: &FineTuneConfig,
    prior: &PriorSpec,
    rng: &mut SimRng,
) -> Result<FitResult> {
    if history.len() < 3 {
        return Err(Error::invalid(format!(
            "fine-tuning needs at least 3 history points, got {}",
            history.len()
        )));
    }
    let fit = quadratic_fit(&history.unwrapped(), 0)?;
    let gamma = cfg.gamma_scale * prior.epsilon_max;
    let zeta = cfg.zeta_radians(prior);
    let omega_c = window_centre(fit.omega_hat, zeta, prior.omega_max);
    let epsilon_c = window_centre(fit.epsilon_hat, gamma, prior.epsilon_max);
    for i in 0..ps.len() {
        ps.theta[i] = wrap_angle(fit.theta_hat + rng.random_range(-cfg.alpha..=cfg.alpha));
        ps.omega[i] =
            (omega_c + rng.random_range(-zeta..=zeta)).clamp(-prior.omega_max, prior.omega_max);
        ps.epsilon[i] = if gamma > 0.0 {
            (epsilon_c + rng.random_range(-gamma..=gamma))
                .clamp(-prior.epsilon_max, prior.epsilon_max)
        } else {
            0.0
        };
    }
    ps.set_uniform_weights();
    update_weights(ps, y, k, incoming, sigma2);
    Ok(fit)
}

/// Centre of a ±half window, moved so the window stays inside (−bound, bound)
/// when it fits.
fn window_centre(centre: f64, half: f64, bound: f64) -> f64 {
    if half < bound {
        centre.clamp(-bound + half, bound - half)
    } else {
        centre.clamp(-bound, bound)
    }
}

/// Upward PMFs for k ≥ N_p from the end-of-frame estimates.
pub fn upward_messages(
    final_params: &ChannelParams,
    obs: &NodeObservation,
    n_preamble: usize,
) -> Vec<SymbolPmf> {
    quadratic_phase_pmfs(obs, final_params, n_preamble)
}

#[derive(Debug, Clone)]
pub struct PfOutput {
    pub params: ChannelParams,
    /// (θ̂_k, ω̂_k, ε̂_k) after every symbol.
    pub trace: Vec<ChannelParams>,
    pub history: PhaseHistory,
    pub fine_tuned_at: Option<usize>,
    /// Quadratic fit of the history used by fine-tuning.
    pub fine_tune_fit: Option<FitResult>,
    pub n_resamples: usize,
    pub upward: Vec<SymbolPmf>,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct PfEstimator {
    pub cfg: PfConfig,
    pub prior: PriorSpec,
}

impl PfEstimator {
    pub fn new(cfg: PfConfig, prior: PriorSpec) -> Result<Self> {
        if cfg.n_particles < 2 {
            return Err(Error::invalid("need at least 2 particles"));
        }
        if !(cfg.resample_fraction > 0.0 && cfg.resample_fraction <= 1.0) {
            return Err(Error::invalid("resample_fraction must lie in (0, 1]"));
        }
        cfg.fine_tune.validate()?;
        Ok(Self { cfg, prior })
    }

    /// One pass over the frame. `incoming[k]` is the symbol PMF at every
    /// position.
    pub fn run(
        &self,
        obs: &NodeObservation,
        incoming: &[SymbolPmf],
        n_preamble: usize,
        rng: &mut SimRng,
    ) -> Result<PfOutput> {
        if incoming.len() != obs.len() {
            return Err(Error::LengthMismatch {
                what: "incoming symbol messages",
                expected: obs.len(),
                got: incoming.len(),
            });
        }
        if obs.is_empty() {
            return Err(Error::invalid("empty observation"));
        }
        let prior = &self.prior;
        let ft = &self.cfg.fine_tune;
        let n = self.cfg.n_particles;
        let mut ps = ParticleSet::init(n, prior, rng)?;
        let mut history = PhaseHistory::default();
        let mut trace = Vec::with_capacity(obs.len());
        let mut flags = Vec::new();
        let (mut n_clamped, mut n_degenerate, mut n_undefined) = (0usize, 0usize, 0usize);
        let mut fine_tuned_at = None;
        let mut fine_tune_fit = None;
        let mut n_resamples = 0;
        let mut prev_theta = 0.0;

        for k in 0..obs.len() {
            let y = obs.samples[k];
            let stats = proposal_stats(&ps, prior);
            n_clamped += usize::from(stats.clamped());
            draw_particles(&mut ps, &stats, prior, rng)?;
            n_degenerate += usize::from(update_weights(&mut ps, y, k, &incoming[k], obs.sigma2));
            if ps.effective_sample_size() <= self.cfg.resample_fraction * n as f64 {
                resample(&mut ps, rng);
                n_resamples += 1;
            }
            if ft.enabled
                && fine_tuned_at.is_none()
                && k > n_preamble
                && ps.theta_variance() < ft.theta_th
                && ps.omega_unit_variance(prior) < ft.omega_th
            {
                match fine_tune(
                    &mut ps,
                    &history,
                    y,
                    k,
                    &incoming[k],
                    obs.sigma2,
                    ft,
                    prior,
                    rng,
                ) {
                    Ok(fit) => {
                        fine_tuned_at = Some(k);
                        fine_tune_fit = Some(fit);
                    }
                    Err(e) => flags.push(format!("fine-tune skipped at k={k}: {e}")),
                }
            }
            let est = estimate(&ps, k, prev_theta);
            n_undefined += usize::from(est.theta_undefined);
            prev_theta = est.params.theta;
            history.push(est.phi);
            trace.push(est.params);
        }

        for (count, what) in [
            (n_clamped, "beta variance clamps"),
            (n_degenerate, "weight underflow resets"),
            (n_undefined, "undefined circular means"),
        ] {
            if count > 0 {
                flags.push(format!("{count} {what}"));
            }
        }
        let params = *trace.last().expect("non-empty frame");
        Ok(PfOutput {
            upward: upward_messages(&params, obs, n_preamble),
            params,
            trace,
            history,
            fine_tuned_at,
            fine_tune_fit,
            n_resamples,
            flags,
        })
    }
}

impl NodeEstimator for PfEstimator {
    fn estimate(
        &self,
        obs: &NodeObservation,
        incoming: &[SymbolPmf],
        n_preamble: usize,
        rng: &mut SimRng,
    ) -> Result<NodeEstimate> {
        let out = self.run(obs, incoming, n_preamble, rng)?;
        Ok(NodeEstimate {
            params: out.params,
            upward: out.upward,
            flags: out.flags,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::apply;
    use crate::fg_engine::symbol_likelihood;
    use crate::framing::{build_frame, FrameConfig};
    use crate::rng::{seeded, Role, StreamKey};
    use num_complex::Complex64;
    use proptest::prelude::*;
    use rand::Rng;
    use std::f64::consts::PI;

    fn set(theta: &[f64], omega: &[f64], epsilon: &[f64], weights: &[f64]) -> ParticleSet {
        ParticleSet {
            theta: theta.to_vec(),
            omega: omega.to_vec(),
            epsilon: epsilon.to_vec(),
            weights: weights.to_vec(),
        }
    }

    #[test]
    fn init_is_uniform_and_reproducible() {
        let prior = PriorSpec::default();
        let a = ParticleSet::init(400, &prior, &mut seeded(1)).unwrap();
        let b = ParticleSet::init(400, &prior, &mut seeded(1)).unwrap();
        assert_eq!(a, b);
        assert!(a.weights.iter().all(|&w| w == 1.0 / 400.0));
        assert!(a.omega.iter().all(|w| w.abs() <= 0.01));
        assert!(a.epsilon.iter().all(|e| e.abs() <= 1e-5));
        assert!(ParticleSet::init(1, &prior, &mut seeded(1)).is_err());
        let fixed =
            ParticleSet::init(10, &PriorSpec::new(0.01, 0.0).unwrap(), &mut seeded(2)).unwrap();
        assert!(fixed.epsilon.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn concentrated_theta_hits_kappa_cap() {
        let ps = set(&[0.7; 4], &[0.0; 4], &[0.0; 4], &[0.25; 4]);
        let s = proposal_stats(&ps, &PriorSpec::default());
        assert!((s.mu_theta - 0.7).abs() < 1e-12);
        assert_eq!(s.kappa_theta, crate::circular::KAPPA_CAP);
        // Identical ω particles give zero variance: shapes stay finite.
        assert!(s.omega.u.is_finite() && s.omega.v.is_finite());
    }

    #[test]
    fn symmetric_theta_pair_has_zero_mean() {
        let ps = set(&[0.4, -0.4], &[0.0; 2], &[0.0; 2], &[0.5; 2]);
        assert!(proposal_stats(&ps, &PriorSpec::default()).mu_theta.abs() < 1e-15);
    }

    #[test]
    fn beta_moment_matching_recovers_shapes() {
        let mut rng = seeded(3);
        let b = Beta::new(2.0, 5.0).unwrap();
        let n = 100_000;
        let prior = PriorSpec::default();
        let omega: Vec<f64> = (0..n)
            .map(|_| from_unit(b.sample(&mut rng), prior.omega_max))
            .collect();
        let ps = ParticleSet {
            theta: vec![0.0; n],
            epsilon: vec![0.0; n],
            weights: vec![1.0 / n as f64; n],
            omega,
        };
        let s = proposal_stats(&ps, &prior);
        assert!((s.omega.u / 2.0 - 1.0).abs() < 0.05, "U = {}", s.omega.u);
        assert!((s.omega.v / 5.0 - 1.0).abs() < 0.05, "V = {}", s.omega.v);
    }

    #[test]
    fn beta_variance_clamp() {
        let f = BetaFit::from_moments(0.5, 0.3);
        assert!(f.clamped);
        assert!((f.var - 0.999 * 0.25).abs() < 1e-15);
        assert!(f.u > 0.0 && f.v > 0.0);
        let g = BetaFit::from_moments(0.3, 0.01);
        assert!(!g.clamped);
        // Boundary mean stays usable.
        let h = BetaFit::from_moments(1.0, 0.0);
        assert!(h.u > 0.0 && h.v > 0.0 && h.u.is_finite());
        assert!(Beta::new(h.u, h.v).is_ok());
    }

    #[test]
    fn huge_beta_shapes_sample_near_mean() {
        let f = BetaFit::from_moments(0.5, 0.0);
        let b = Beta::new(f.u, f.v).unwrap();
        let mut rng = seeded(4);
        for _ in 0..100 {
            let x: f64 = b.sample(&mut rng);
            assert!((x - 0.5).abs() < 1e-4);
        }
    }

    #[test]
    fn translation_round_trips() {
        for &w in &[-0.01, -0.003, 0.0, 0.0071, 0.01] {
            assert!((from_unit(to_unit(w, 0.01), 0.01) - w).abs() < 1e-15);
        }
        for &e in &[-1e-5, 3e-6, 1e-5] {
            assert!((from_unit(to_unit(e, 1e-5), 1e-5) - e).abs() < 1e-15 * 1e-5 * 10.0);
        }
    }

    #[test]
    fn draws_follow_proposal_limits() {
        let prior = PriorSpec::default();
        let mut ps = ParticleSet::init(10_000, &prior, &mut seeded(5)).unwrap();
        let stats = ProposalStats {
            mu_theta: 1.0,
            kappa_theta: 1e8,
            omega: BetaFit::from_moments(0.5, 1.0 / 12.0),
            epsilon: Some(BetaFit::from_moments(0.5, 1.0 / 12.0)),
        };
        draw_particles(&mut ps, &stats, &prior, &mut seeded(6)).unwrap();
        assert!(ps.theta.iter().all(|t| (t - 1.0).abs() < 1e-2));
        // Beta(1, 1) back-translates to U(−ω_m, ω_m).
        let mean: f64 = ps.omega.iter().sum::<f64>() / 1e4;
        let var: f64 = ps.omega.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / 1e4;
        assert!(mean.abs() < 3e-4);
        assert!((var / (0.02f64.powi(2) / 12.0) - 1.0).abs() < 0.05);
        let stats = ProposalStats {
            kappa_theta: 0.0,
            ..stats
        };
        draw_particles(&mut ps, &stats, &prior, &mut seeded(7)).unwrap();
        let (_, r) = resultant(ps.theta.iter().map(|&t| (t, 1e-4)));
        assert!(r < 0.03);
    }

    #[test]
    fn weights_match_hand_computation() {
        let mut ps = set(
            &[0.0, 0.5, -1.0],
            &[0.01, 0.0, -0.02],
            &[1e-5, 0.0, 0.0],
            &[0.2, 0.3, 0.5],
        );
        let y = Complex64::new(0.6, 0.3);
        let k = 10;
        let inc = SymbolPmf::normalized(0.7, 0.3).unwrap();
        let s2 = 0.8;
        let expected: Vec<f64> = (0..3)
            .map(|i| {
                let phi = ps.theta[i] + ps.omega[i] * 10.0 + ps.epsilon[i] * 100.0;
                ps.weights[i]
                    * (0.7 * symbol_likelihood(y, 1.0, phi, s2)
                        + 0.3 * symbol_likelihood(y, -1.0, phi, s2))
            })
            .collect();
        let total: f64 = expected.iter().sum();
        assert!(!update_weights(&mut ps, y, k, &inc, s2));
        for (w, e) in ps.weights.iter().zip(&expected) {
            assert!((w - e / total).abs() < 1e-14);
        }
    }

    #[test]
    fn sharp_noise_selects_true_particle() {
        let mut ps = set(&[0.3, 1.0, -2.0], &[0.0; 3], &[0.0; 3], &[1.0 / 3.0; 3]);
        let y = Complex64::from_polar(1.0, 0.3);
        update_weights(&mut ps, y, 0, &SymbolPmf::point_mass(0), 1e-6);
        assert!(ps.weights[0] > 1.0 - 1e-12);
    }

    #[test]
    fn equidistant_particles_tie_under_uniform_symbols() {
        let mut ps = set(&[0.2, -0.2], &[0.0; 2], &[0.0; 2], &[0.5; 2]);
        update_weights(
            &mut ps,
            Complex64::new(0.9, 0.0),
            0,
            &SymbolPmf::UNIFORM,
            0.5,
        );
        assert!((ps.weights[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn all_zero_weights_reset_to_uniform() {
        let mut ps = set(&[0.0, 1.0], &[0.0; 2], &[0.0; 2], &[0.0, 0.0]);
        assert!(update_weights(
            &mut ps,
            Complex64::new(1.0, 0.0),
            0,
            &SymbolPmf::UNIFORM,
            1.0
        ));
        assert_eq!(ps.weights, vec![0.5, 0.5]);
    }

    #[test]
    fn effective_sample_size_identities() {
        let ps = set(&[0.0; 5], &[0.0; 5], &[0.0; 5], &[0.2; 5]);
        assert!((ps.effective_sample_size() - 5.0).abs() < 1e-12);
        let mut ps = set(
            &[0.1, 0.2, 0.3],
            &[1e-3, 2e-3, 3e-3],
            &[0.0; 3],
            &[0.0, 1.0, 0.0],
        );
        assert_eq!(ps.effective_sample_size(), 1.0);
        resample(&mut ps, &mut seeded(8));
        assert_eq!(ps.theta, vec![0.2; 3]);
        assert_eq!(ps.omega, vec![2e-3; 3]);
        assert!(ps.weights.iter().all(|&w| w == 1.0 / 3.0));
    }

    #[test]
    fn resampling_is_unbiased() {
        let mut rng = seeded(9);
        let n = 50;
        let omega: Vec<f64> = (0..n).map(|_| rng.random_range(-0.01..0.01)).collect();
        let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>().powi(3)).collect();
        let tot: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / tot).collect();
        let before: f64 = omega.iter().zip(&weights).map(|(a, b)| a * b).sum();
        let base = set(&vec![0.0; n], &omega, &vec![0.0; n], &weights);
        let trials = 10_000;
        let means: Vec<f64> = (0..trials)
            .map(|_| {
                let mut ps = base.clone();
                resample(&mut ps, &mut rng);
                ps.omega.iter().sum::<f64>() / n as f64
            })
            .collect();
        let m = means.iter().sum::<f64>() / trials as f64;
        let sd = (means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (trials - 1) as f64).sqrt();
        assert!(
            (m - before).abs() < 3.0 * sd / (trials as f64).sqrt(),
            "{m} vs {before}"
        );
    }

    #[test]
    fn estimate_examples() {
        let ps = set(&[0.4], &[0.002], &[-3e-6], &[1.0]);
        let e = estimate(&ps, 0, 0.0);
        assert_eq!(e.params, ChannelParams::new(0.4, 0.002, -3e-6));
        assert_eq!(e.phi, 0.4);
        let ps = set(&[2.5, -2.5], &[0.0; 2], &[0.0; 2], &[0.5; 2]);
        assert!((estimate(&ps, 3, 0.0).params.theta.abs() - PI).abs() < 1e-12);
        let ps = set(&[0.0, PI], &[0.0; 2], &[0.0; 2], &[0.5; 2]);
        let e = estimate(&ps, 0, 1.25);
        assert!(e.theta_undefined);
        assert_eq!(e.params.theta, 1.25);
    }

    proptest! {
        #[test]
        fn circular_mean_is_rotation_equivariant(
            thetas in proptest::collection::vec(-1.0f64..1.0, 2..20),
            alpha in -PI..PI
        ) {
            let n = thetas.len();
            let w = vec![1.0 / n as f64; n];
            let a = set(&thetas, &vec![0.0; n], &vec![0.0; n], &w);
            let rot: Vec<f64> = thetas.iter().map(|t| wrap_angle(t + alpha)).collect();
            let b = set(&rot, &vec![0.0; n], &vec![0.0; n], &w);
            let ea = estimate(&a, 0, 0.0).params.theta;
            let eb = estimate(&b, 0, 0.0).params.theta;
            prop_assert!(wrapped_diff(eb, ea + alpha).abs() < 1e-9);
        }

        #[test]
        fn weights_stay_normalized(
            seed in 0u64..1000, k in 0usize..600, re in -2.0f64..2.0, im in -2.0f64..2.0,
            l in -10.0f64..10.0, s2 in 0.01f64..5.0
        ) {
            let prior = PriorSpec::default();
            let mut ps = ParticleSet::init(50, &prior, &mut seeded(seed)).unwrap();
            update_weights(&mut ps, Complex64::new(re, im), k, &SymbolPmf::from_log_ratio(l), s2);
            prop_assert!((ps.weights.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            prop_assert!(ps.weights.iter().all(|&w| w >= 0.0));
            resample(&mut ps, &mut seeded(seed + 1));
            prop_assert!((ps.weights.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn fine_tune_brackets_exact_history() {
        let truth = ChannelParams::new(1.0, 0.004, -5e-6);
        let mut h = PhaseHistory::default();
        for m in 0..200 {
            h.push(wrap_angle(truth.unwrapped_phase(m)));
        }
        let prior = PriorSpec::default();
        let cfg = FineTuneConfig::default();
        let mut ps = ParticleSet::init(400, &prior, &mut seeded(10)).unwrap();
        let y = Complex64::from_polar(1.0, truth.unwrapped_phase(200));
        let fit = fine_tune(
            &mut ps,
            &h,
            y,
            200,
            &SymbolPmf::point_mass(0),
            0.5,
            &cfg,
            &prior,
            &mut seeded(11),
        )
        .unwrap();
        assert!((fit.omega_hat - truth.omega).abs() < 1e-9);
        assert!((fit.epsilon_hat - truth.epsilon).abs() < 1e-9);
        assert!(wrapped_diff(fit.theta_hat, truth.theta).abs() < 1e-9);
        assert!(ps
            .theta
            .iter()
            .all(|&t| wrapped_diff(t, 1.0).abs() <= 0.1 + 1e-12));
        assert!(ps
            .omega
            .iter()
            .all(|w| (w - truth.omega).abs() <= 2e-4 + 1e-15));
        assert!(ps
            .epsilon
            .iter()
            .all(|e| (e - truth.epsilon).abs() <= 1e-6 + 1e-18));
        assert!((ps.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let short = PhaseHistory {
            phases: vec![0.0, 0.1],
        };
        assert!(fine_tune(
            &mut ps,
            &short,
            y,
            2,
            &SymbolPmf::UNIFORM,
            0.5,
            &cfg,
            &prior,
            &mut seeded(1)
        )
        .is_err());
    }

    #[test]
    fn upward_limits() {
        let p = ChannelParams::new(-0.4, 0.003, 2e-6);
        let bits = [1u8, 0, 0, 1, 1, 0];
        let obs = NodeObservation {
            samples: bits
                .iter()
                .enumerate()
                .map(|(k, &b)| {
                    (1.0 - 2.0 * b as f64) * Complex64::from_polar(1.0, p.unwrapped_phase(k))
                })
                .collect(),
            sigma2: 1e-3,
            node_id: 0,
        };
        let up = upward_messages(&p, &obs, 2);
        for (u, &b) in up.iter().zip(&bits[2..]) {
            assert!(u.probs[b as usize] > 1.0 - 1e-12);
        }
        let loud = NodeObservation {
            sigma2: 1e13,
            ..obs
        };
        assert!(upward_messages(&p, &loud, 0)
            .iter()
            .all(|u| (u.probs[0] - 0.5).abs() < 1e-9));
    }

    fn noisy_frame(
        truth: ChannelParams,
        snr_db: f64,
        seed: u64,
    ) -> (NodeObservation, Vec<SymbolPmf>) {
        let len = 534;
        let mut rng = StreamKey::new(seed, 0, 0, Role::Payload).rng();
        let bits: Vec<u8> = (0..len).map(|_| rng.random_range(0..2)).collect();
        let frame = build_frame(&bits[..30], &bits[30..], &FrameConfig::new(30, len - 30)).unwrap();
        let s2 = crate::channel::snr_db_to_sigma2(snr_db);
        let obs = apply(
            &frame,
            &truth,
            s2,
            0,
            &mut StreamKey::new(seed, 0, 0, Role::Noise).rng(),
        );
        let inc = bits
            .iter()
            .enumerate()
            .map(|(k, &b)| {
                if k < 30 {
                    SymbolPmf::known_bit(b)
                } else {
                    SymbolPmf::UNIFORM
                }
            })
            .collect();
        (obs, inc)
    }

    #[test]
    fn run_is_deterministic_and_never_tunes_in_preamble() {
        let truth = ChannelParams::new(-1.2, 0.005, 4e-6);
        let (obs, inc) = noisy_frame(truth, 8.0, 1);
        let est = PfEstimator::new(PfConfig::default(), PriorSpec::default()).unwrap();
        let a = est.run(&obs, &inc, 30, &mut seeded(12)).unwrap();
        let b = est.run(&obs, &inc, 30, &mut seeded(12)).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.trace.len(), 534);
        assert_eq!(a.upward.len(), 504);
        if let Some(k) = a.fine_tuned_at {
            assert!(k > 30);
        }
    }

    #[test]
    fn window_centre_keeps_window_inside_prior() {
        assert_eq!(window_centre(3e-5, 1e-6, 1e-5), 9e-6);
        assert_eq!(window_centre(-3e-5, 1e-6, 1e-5), -9e-6);
        assert_eq!(window_centre(2e-6, 1e-6, 1e-5), 2e-6);
        assert_eq!(window_centre(0.5, 0.02, 0.01), 0.01);
        let cfg = FineTuneConfig::default();
        assert!((cfg.zeta_radians(&PriorSpec::default()) - 2e-4).abs() < 1e-18);
        let literal = FineTuneConfig {
            zeta_domain: ZetaDomain::Radians,
            ..cfg
        };
        assert_eq!(literal.zeta_radians(&PriorSpec::default()), 0.01);
        assert_eq!(
            "radians".parse::<ZetaDomain>().unwrap(),
            ZetaDomain::Radians
        );
        assert!("rad".parse::<ZetaDomain>().is_err());
    }

    #[test]
    fn tracks_parameters_at_high_snr() {
        let truth = ChannelParams::new(2.0, 0.006, -7e-6);
        let est = PfEstimator::new(PfConfig::default(), PriorSpec::default()).unwrap();
        let (mut om, mut th, mut fired) = (0.0, 0.0, 0);
        for seed in 0..8 {
            let (obs, inc) = noisy_frame(truth, 10.0, seed);
            let out = est.run(&obs, &inc, 30, &mut seeded(100 + seed)).unwrap();
            fired += usize::from(out.fine_tuned_at.is_some());
            om += (out.params.omega - truth.omega).abs() / 8.0;
            th += wrapped_diff(out.params.theta, truth.theta).abs() / 8.0;
        }
        assert!(fired >= 6, "fired {fired}");
        assert!(om < 2e-3, "mean |dω| {om}");
        assert!(th < 0.3, "mean |dθ| {th}");
    }
}
