//! Quadratic-phase AWGN channel seen by each receive node.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::circular::wrap_angle;
use crate::error::{Error, Result};
use crate::framing::Frame;

/// Unknown channel parameters of one node.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ChannelParams {
    /// Initial phase, radians in (−π, π].
    pub theta: f64,
    /// Doppler shift, radians/symbol.
    pub omega: f64,
    /// Doppler rate, radians/symbol².
    pub epsilon: f64,
}

impl ChannelParams {
    pub fn new(theta: f64, omega: f64, epsilon: f64) -> Self {
        Self {
            theta,
            omega,
            epsilon,
        }
    }

    /// θ + ωk + εk², not wrapped.
    pub fn unwrapped_phase(&self, k: usize) -> f64 {
        let k = k as f64;
        self.theta + self.omega * k + self.epsilon * k * k
    }
}

/// Uniform priors: θ ~ U(−π, π), ω ~ U(−ω_m, ω_m), ε ~ U(−ε_m, ε_m).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorSpec {
    pub omega_max: f64,
    pub epsilon_max: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            omega_max: 0.01,
            epsilon_max: 1e-5,
        }
    }
}

impl PriorSpec {
    /// Sanity ceilings for the "ω_m ≪ 1, ε_m ≪ 1" assumptions.
    pub const OMEGA_CEILING: f64 = 0.5;
    pub const EPSILON_CEILING: f64 = 1e-2;

    pub fn new(omega_max: f64, epsilon_max: f64) -> Result<Self> {
        if !(omega_max > 0.0 && omega_max < Self::OMEGA_CEILING) {
            return Err(Error::invalid(format!(
                "omega_max must be in (0, {}), got {omega_max}",
                Self::OMEGA_CEILING
            )));
        }
        if !(epsilon_max >= 0.0 && epsilon_max < Self::EPSILON_CEILING) {
            return Err(Error::invalid(format!(
                "epsilon_max must be in [0, {}), got {epsilon_max}",
                Self::EPSILON_CEILING
            )));
        }
        Ok(Self {
            omega_max,
            epsilon_max,
        })
    }

    pub fn contains(&self, p: &ChannelParams) -> bool {
        p.omega.abs() <= self.omega_max && p.epsilon.abs() <= self.epsilon_max
    }
}

/// Received samples of one node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeObservation {
    pub samples: Vec<Complex64>,
    /// Total complex noise variance σ² (σ²/2 per real dimension).
    pub sigma2: f64,
    pub node_id: usize,
}

impl NodeObservation {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

fn symmetric_uniform<R: Rng + ?Sized>(rng: &mut R, half_width: f64) -> f64 {
    half_width * (2.0 * rng.random::<f64>() - 1.0)
}

pub fn sample_params<R: Rng + ?Sized>(rng: &mut R, prior: &PriorSpec) -> ChannelParams {
    let theta = wrap_angle(symmetric_uniform(rng, std::f64::consts::PI));
    let omega = symmetric_uniform(rng, prior.omega_max);
    let epsilon = symmetric_uniform(rng, prior.epsilon_max);
    ChannelParams {
        theta,
        omega,
        epsilon,
    }
}

/// Wrapped phase φ_k ∈ (−π, π] for k = 0..len.
pub fn phase_trajectory(p: &ChannelParams, len: usize) -> Vec<f64> {
    (0..len).map(|k| wrap_angle(p.unwrapped_phase(k))).collect()
}

/// y_k = x_k·e^{jφ_k} + v_k, v_k ~ CN(0, σ²).
pub fn apply<R: Rng + ?Sized>(
    frame: &Frame,
    p: &ChannelParams,
    sigma2: f64,
    node_id: usize,
    rng: &mut R,
) -> NodeObservation {
    assert!(sigma2 > 0.0, "sigma2 must be positive");
    let sd = (0.5 * sigma2).sqrt();
    let samples = frame
        .symbols
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let rot = Complex64::from_polar(1.0, p.unwrapped_phase(k));
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            x * rot + Complex64::new(sd * re, sd * im)
        })
        .collect();
    NodeObservation {
        samples,
        sigma2,
        node_id,
    }
}

/// SNR as E_s/N₀ in dB with unit-energy symbols: σ² = 10^(−SNR/10).
pub fn snr_db_to_sigma2(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::framing::{build_frame, FrameConfig};
    use crate::rng::{seeded, Role, StreamKey};
    use std::f64::consts::PI;

    #[test]
    fn params_within_prior_and_uniform_variance() {
        let prior = PriorSpec::new(0.01, 1e-5).unwrap();
        let mut rng = seeded(1);
        let n = 100_000;
        let draws: Vec<ChannelParams> = (0..n).map(|_| sample_params(&mut rng, &prior)).collect();
        assert!(draws
            .iter()
            .all(|p| prior.contains(p) && p.theta > -PI && p.theta <= PI));
        let mean = draws.iter().map(|p| p.omega).sum::<f64>() / n as f64;
        let var = draws.iter().map(|p| (p.omega - mean).powi(2)).sum::<f64>() / n as f64;
        let expect = (2.0 * 0.01f64).powi(2) / 12.0;
        assert!((var / expect - 1.0).abs() < 0.05, "{var} vs {expect}");
    }

    #[test]
    fn zero_rate_prior_gives_zero_rate() {
        let prior = PriorSpec::new(0.01, 0.0).unwrap();
        let mut rng = seeded(2);
        for _ in 0..100 {
            assert_eq!(sample_params(&mut rng, &prior).epsilon, 0.0);
        }
    }

    #[test]
    fn params_reproducible() {
        let prior = PriorSpec::default();
        let a = sample_params(&mut seeded(4), &prior);
        let b = sample_params(&mut seeded(4), &prior);
        assert_eq!(a, b);
    }

    #[test]
    fn prior_validation() {
        assert!(PriorSpec::new(0.0, 1e-5).is_err());
        assert!(PriorSpec::new(0.9, 1e-5).is_err());
        assert!(PriorSpec::new(0.01, -1.0).is_err());
    }

    #[test]
    fn trajectory_examples() {
        assert!(phase_trajectory(&ChannelParams::default(), 10)
            .iter()
            .all(|&p| p == 0.0));
        let p = ChannelParams::new(2.0, 0.011, -9e-6);
        let phi = phase_trajectory(&p, 101);
        assert!((phi[100] - 3.01).abs() < 1e-12);
        let p = ChannelParams::new(0.0, PI, 0.0);
        let phi = phase_trajectory(&p, 6);
        for (k, v) in phi.iter().enumerate() {
            let expect = if k % 2 == 0 { 0.0 } else { PI };
            assert!((v - expect).abs() < 1e-12, "k={k} {v}");
        }
    }

    fn frame(n: usize) -> Frame {
        build_frame(&[], &vec![0; n], &FrameConfig::new(0, n)).unwrap()
    }

    #[test]
    fn noiseless_apply_is_identity_and_isometry() {
        let f = frame(64);
        let mut rng = seeded(3);
        let obs = apply(&f, &ChannelParams::default(), 1e-300, 0, &mut rng);
        for (y, x) in obs.samples.iter().zip(&f.symbols) {
            assert!((y - x).norm() < 1e-140);
        }
        let p = ChannelParams::new(1.0, 0.01, 1e-5);
        let obs = apply(&f, &p, 1e-300, 0, &mut rng);
        assert!(obs.samples.iter().all(|y| (y.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn noise_splits_evenly_between_dimensions() {
        let n = 100_000;
        let f = frame(n);
        let obs = apply(&f, &ChannelParams::default(), 1.0, 0, &mut seeded(5));
        let var = |it: &mut dyn Iterator<Item = f64>, mean: f64| {
            it.map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64
        };
        let vr = var(&mut obs.samples.iter().map(|y| y.re), 1.0);
        let vi = var(&mut obs.samples.iter().map(|y| y.im), 0.0);
        assert!((vr - 0.5).abs() < 0.01, "{vr}");
        assert!((vi - 0.5).abs() < 0.01, "{vi}");
    }

    #[test]
    fn node_streams_are_uncorrelated() {
        let n = 100_000;
        let f = frame(n);
        let p = ChannelParams::default();
        let a = apply(
            &f,
            &p,
            1.0,
            0,
            &mut StreamKey::new(9, 0, 0, Role::Noise).rng(),
        );
        let b = apply(
            &f,
            &p,
            1.0,
            1,
            &mut StreamKey::new(9, 0, 1, Role::Noise).rng(),
        );
        let corr: f64 = a
            .samples
            .iter()
            .zip(&b.samples)
            .map(|(x, y)| (x.re - 1.0) * (y.re - 1.0))
            .sum::<f64>()
            / n as f64
            / 0.5;
        // 5σ band for a sample correlation of n independent pairs.
        assert!(corr.abs() < 5.0 / (n as f64).sqrt(), "corr {corr}");
    }

    #[test]
    fn snr_conversion() {
        assert_eq!(snr_db_to_sigma2(0.0), 1.0);
        assert!((snr_db_to_sigma2(10.0) - 0.1).abs() < 1e-15);
        assert!((snr_db_to_sigma2(-10.0) - 10.0).abs() < 1e-12);
    }
}
