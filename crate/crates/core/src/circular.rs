//! Circular statistics: angle wrapping, weighted resultants, von Mises
//! sampling and concentration estimation.

use std::f64::consts::{PI, TAU};

use rand::Rng;

/// Wrap an angle into (−π, π]. Both ±π map to +π.
pub fn wrap_angle(x: f64) -> f64 {
    let mut r = x.rem_euclid(TAU); // [0, 2π)
    if r > PI {
        r -= TAU;
    }
    if r == -PI {
        r = PI;
    }
    r
}

/// Smallest signed difference a − b modulo 2π, in (−π, π].
pub fn wrapped_diff(a: f64, b: f64) -> f64 {
    wrap_angle(a - b)
}

/// Removes 2π jumps so successive differences lie in [−π, π]. The first
/// element is kept as is.
pub fn unwrap(phases: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(phases.len());
    let mut offset = 0.0;
    for (i, &p) in phases.iter().enumerate() {
        if i > 0 {
            let d = p - phases[i - 1];
            if d.abs() > PI {
                offset += TAU * ((wrap_angle(d) - d) / TAU).round();
            }
        }
        out.push(p + offset);
    }
    out
}

/// Weighted resultant Σ w·e^{jθ}, returned as (angle, length).
///
/// With normalized weights the length is the mean resultant length R̄.
pub fn resultant<I>(pairs: I) -> (f64, f64)
where
    I: IntoIterator<Item = (f64, f64)>,
{
    let (mut c, mut s) = (0.0, 0.0);
    for (theta, w) in pairs {
        c += w * theta.cos();
        s += w * theta.sin();
    }
    (s.atan2(c), c.hypot(s))
}

/// Upper cap for the von Mises concentration.
pub const KAPPA_CAP: f64 = 1e4;

/// Approximate inverse of A(κ) = I₁(κ)/I₀(κ) from a mean resultant length,
/// using the three-branch approximation of Best and Fisher. Capped at
/// [`KAPPA_CAP`].
pub fn kappa_from_resultant(r_bar: f64) -> f64 {
    let r = r_bar.clamp(0.0, 1.0);
    let k = if r < 0.53 {
        2.0 * r + r.powi(3) + 5.0 * r.powi(5) / 6.0
    } else if r < 0.85 {
        -0.4 + 1.39 * r + 0.43 / (1.0 - r)
    } else {
        let d = r.powi(3) - 4.0 * r * r + 3.0 * r;
        if d <= 0.0 {
            KAPPA_CAP
        } else {
            1.0 / d
        }
    };
    k.clamp(0.0, KAPPA_CAP)
}

/// Draws from the von Mises (Tikhonov) distribution VM(mu, kappa).
///
/// Best–Fisher rejection sampler; for very large κ the wrapped normal with
/// variance 1/κ is used instead.
#[derive(Debug, Clone, Copy)]
pub struct VonMises {
    mu: f64,
    kappa: f64,
    s: f64,
}

impl VonMises {
    pub fn new(mu: f64, kappa: f64) -> Self {
        let kappa = kappa.max(0.0);
        let s = if kappa > 1e-8 && kappa <= 1e5 {
            let r = 1.0 + (1.0 + 4.0 * kappa * kappa).sqrt();
            let rho = (r - (2.0 * r).sqrt()) / (2.0 * kappa);
            (1.0 + rho * rho) / (2.0 * rho)
        } else {
            0.0
        };
        Self { mu, kappa, s }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.kappa <= 1e-8 {
            return wrap_angle(PI * (2.0 * rng.random::<f64>() - 1.0));
        }
        if self.kappa > 1e5 {
            let n: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng);
            return wrap_angle(self.mu + n / self.kappa.sqrt());
        }
        let s = self.s;
        loop {
            let u: f64 = rng.random();
            let z = (PI * u).cos();
            let w = (1.0 + s * z) / (s + z);
            let y = self.kappa * (s - w);
            let v: f64 = rng.random();
            if y * (2.0 - y) - v > 0.0 || (y / v).ln() + 1.0 - y >= 0.0 {
                let sign = if rng.random::<f64>() < 0.5 { -1.0 } else { 1.0 };
                return wrap_angle(self.mu + sign * w.clamp(-1.0, 1.0).acos());
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;

    #[test]
    fn unwrap_examples() {
        let u = unwrap(&[3.1, -3.1]);
        assert_eq!(u[0], 3.1);
        assert!((u[1] - (TAU - 3.1)).abs() < 1e-12, "{u:?}");
        let smooth = [0.1, 0.5, 1.2, 0.4, -2.0];
        assert_eq!(unwrap(&smooth), smooth.to_vec());
        assert!(unwrap(&[]).is_empty());
    }

    proptest! {
        #[test]
        fn unwrap_recovers_wrapped_ramps(
            start in -3.0f64..3.0, slope in -2.5f64..2.5, n in 1usize..200
        ) {
            let truth: Vec<f64> = (0..n).map(|k| start + slope * k as f64).collect();
            let wrapped: Vec<f64> = truth.iter().map(|&x| wrap_angle(x)).collect();
            let u = unwrap(&wrapped);
            for (i, (a, b)) in u.iter().zip(&truth).enumerate() {
                prop_assert!((a - b - (u[0] - truth[0])).abs() < 1e-9);
                prop_assert!(wrapped_diff(*a, wrapped[i]).abs() < 1e-9);
                if i > 0 {
                    prop_assert!((a - u[i - 1]).abs() <= PI + 1e-12);
                }
            }
        }
    }

    #[test]
    fn wrap_boundaries() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert_eq!(wrap_angle(0.0), 0.0);
        assert!((wrap_angle(3.01) - 3.01).abs() < 1e-15);
        assert!((wrap_angle(3.5) - (3.5 - TAU)).abs() < 1e-12);
        assert!((wrap_angle(-7.0) - (-7.0 + TAU)).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn wrap_range_and_congruence(x in -1e4f64..1e4) {
            let w = wrap_angle(x);
            prop_assert!(w > -PI && w <= PI);
            let k = ((x - w) / TAU).round();
            prop_assert!((x - w - k * TAU).abs() < 1e-9);
        }

        #[test]
        fn wrapped_error_is_minimal(a in -10.0f64..10.0, b in -10.0f64..10.0) {
            let d = wrapped_diff(a, b);
            for g in -3..=3 {
                let alt = a - b + g as f64 * TAU;
                prop_assert!(d * d <= alt * alt + 1e-9);
            }
        }
    }

    #[test]
    fn kappa_branches_are_continuous_enough() {
        // Branch joins of the approximation are close but not exact.
        let lo = kappa_from_resultant(0.5299999);
        let hi = kappa_from_resultant(0.53);
        assert!((lo - hi).abs() < 0.01, "{lo} {hi}");
        let lo = kappa_from_resultant(0.8499999);
        let hi = kappa_from_resultant(0.85);
        assert!((lo - hi).abs() < 0.05, "{lo} {hi}");
        assert_eq!(kappa_from_resultant(1.0), KAPPA_CAP);
        assert_eq!(kappa_from_resultant(0.0), 0.0);
    }

    #[test]
    fn von_mises_zero_kappa_is_uniform() {
        let vm = VonMises::new(1.0, 0.0);
        let mut rng = seeded(3);
        let n = 100_000;
        let (_, len) = resultant((0..n).map(|_| (vm.sample(&mut rng), 1.0 / n as f64)));
        assert!(len < 0.01, "resultant {len}");
    }

    #[test]
    fn von_mises_mean_and_concentration() {
        let vm = VonMises::new(2.5, 4.0);
        let mut rng = seeded(5);
        let n = 200_000;
        let (ang, len) = resultant((0..n).map(|_| (vm.sample(&mut rng), 1.0 / n as f64)));
        assert!(wrapped_diff(ang, 2.5).abs() < 0.01);
        // A(4) = I1(4)/I0(4) = 0.863523...
        assert!((len - 0.863_523).abs() < 0.003, "R = {len}");
        let k = kappa_from_resultant(len);
        assert!((k - 4.0).abs() < 0.25, "kappa {k}");
    }

    #[test]
    fn von_mises_huge_kappa_concentrates() {
        let vm = VonMises::new(-3.0, KAPPA_CAP);
        let mut rng = seeded(9);
        for _ in 0..1000 {
            assert!(wrapped_diff(vm.sample(&mut rng), -3.0).abs() < 0.06);
        }
    }
}
