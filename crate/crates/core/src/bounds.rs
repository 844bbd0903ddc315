//! Data-aided joint CRB and weighted Bayesian CRB for (θ, ω, ε).

use statrs::function::beta::ln_beta;

use crate::channel::{snr_db_to_sigma2, PriorSpec};
use crate::error::{Error, Result};

pub type Mat3 = [[f64; 3]; 3];

/// Equilibrated condition number above which an inverse is reported as
/// ill-conditioned.
pub const COND_WARN: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FimSpec {
    /// Frame length L.
    pub frame_len: usize,
    pub sigma2: f64,
}

impl FimSpec {
    pub fn new(frame_len: usize, sigma2: f64) -> Result<Self> {
        if frame_len < 3 {
            return Err(Error::invalid(format!(
                "frame length must be >= 3, got {frame_len}"
            )));
        }
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::invalid(format!(
                "sigma2 must be positive, got {sigma2}"
            )));
        }
        Ok(Self { frame_len, sigma2 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WbcrbSpec {
    pub fim: FimSpec,
    pub prior: PriorSpec,
    /// Weighting index h.
    pub h: f64,
}

/// Power sums Σ_{k=0}^{L−1} k^p for p = 0..4.
pub fn power_sums(frame_len: usize) -> [f64; 5] {
    let n = (frame_len as f64) - 1.0;
    let s1 = n * (n + 1.0) / 2.0;
    let s2 = n * (n + 1.0) * (2.0 * n + 1.0) / 6.0;
    let s4 = n * (n + 1.0) * (2.0 * n + 1.0) * (3.0 * n * n + 3.0 * n - 1.0) / 30.0;
    [frame_len as f64, s1, s2, s1 * s1, s4]
}

/// Fisher information of (θ, ω, ε) for known symbols.
pub fn fim(spec: &FimSpec) -> Mat3 {
    let s = power_sums(spec.frame_len);
    let c = 2.0 / spec.sigma2;
    [
        [c * s[0], c * s[1], c * s[2]],
        [c * s[1], c * s[2], c * s[3]],
        [c * s[2], c * s[3], c * s[4]],
    ]
}

/// Closed-form inverse of [`fim`].
pub fn jcrb(spec: &FimSpec) -> Mat3 {
    let l = spec.frame_len as f64;
    let f = spec.sigma2 / 2.0;
    let cubic = l * l * l + 3.0 * l * l + 2.0 * l;
    let quintic = l.powi(5) - 5.0 * l.powi(3) + 4.0 * l;
    let tt = (9.0 * (l - 1.0) * l + 6.0) / (l * (l + 1.0) * (l + 2.0));
    let tw = (18.0 - 36.0 * l) / cubic;
    let te = 30.0 / cubic;
    let ww = 12.0 * (2.0 * l - 1.0) * (8.0 * l - 11.0) / quintic;
    let we = -180.0 / (l * (l * l * l + l * l - 4.0 * l - 4.0));
    let ee = 180.0 / quintic;
    [
        [f * tt, f * tw, f * te],
        [f * tw, f * ww, f * we],
        [f * te, f * we, f * ee],
    ]
}

fn beta_fn(a: f64, b: f64) -> f64 {
    ln_beta(a, b).exp()
}

/// Expectations of the weighting functions under the uniform priors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightingConstants {
    /// E[q], the scalar of E[Q] = e_q·I.
    pub e_q: f64,
    /// Scalar multiplying P₃ in E[J_p].
    pub e_jp: f64,
    /// E[q²], diagonal weight of E[J_d].
    pub lambda1: f64,
    /// E[q]², off-diagonal weight of E[J_d].
    pub lambda2: f64,
}

impl WeightingConstants {
    pub fn new(h: f64) -> Result<Self> {
        if !(h > 0.5 && h.is_finite()) {
            return Err(Error::invalid(format!(
                "weighting index h must exceed 1/2 (B(2h+1, 2h-1) undefined), got {h}"
            )));
        }
        let b_half = beta_fn(0.5, 1.0 + h);
        Ok(Self {
            e_q: 2f64.powf(-1.0 - 2.0 * h) * b_half,
            e_jp: h * beta_fn(2.0 * h + 1.0, 2.0 * h - 1.0),
            lambda1: h * 2f64.powf(-4.0 * h) / (0.5 + 2.0 * h) * beta_fn(0.5, 2.0 * h),
            lambda2: 4f64.powf(-1.0 - 2.0 * h) * b_half * b_half,
        })
    }

    /// The same constants by direct numerical integration over the
    /// normalized prior support u ∈ (0, 1), where q = (u(1−u))^h.
    pub fn by_quadrature(h: f64) -> Self {
        let q = |u: f64| (u * (1.0 - u)).powf(h);
        // Squared score of ln(p·q) times q², in units of the prior width.
        let jp = |u: f64| {
            let d = h * (1.0 - 2.0 * u);
            (u * (1.0 - u)).powf(2.0 * h - 2.0) * d * d
        };
        let e_q = gauss_legendre_01(q);
        Self {
            e_q,
            e_jp: gauss_legendre_01(jp),
            lambda1: gauss_legendre_01(|u| q(u) * q(u)),
            lambda2: e_q * e_q,
        }
    }

    /// Largest relative disagreement between closed form and quadrature.
    pub fn quadrature_discrepancy(h: f64) -> Result<f64> {
        let a = Self::new(h)?;
        let b = Self::by_quadrature(h);
        let rel = |x: f64, y: f64| ((x - y) / x).abs();
        Ok(rel(a.e_q, b.e_q)
            .max(rel(a.e_jp, b.e_jp))
            .max(rel(a.lambda1, b.lambda1))
            .max(rel(a.lambda2, b.lambda2)))
    }
}

/// ∫₀¹ f(u) du after the substitution u = (1 − cos t)/2, which removes the
/// endpoint singularities of powers of u(1−u).
fn gauss_legendre_01(f: impl Fn(f64) -> f64) -> f64 {
    let half_pi = std::f64::consts::FRAC_PI_2;
    gauss_legendre(
        |t| f((1.0 - (half_pi * t).cos()) / 2.0) * (half_pi * t).sin() * half_pi / 2.0,
        2.0,
    )
}

/// Composite 20-point Gauss–Legendre over 64 panels of (0, width).
fn gauss_legendre(f: impl Fn(f64) -> f64, width: f64) -> f64 {
    const X: [f64; 10] = [
        0.076_526_521_133_497_33,
        0.227_785_851_141_645_07,
        0.373_706_088_715_419_56,
        0.510_867_001_950_827_1,
        0.636_053_680_726_515,
        0.746_331_906_460_150_8,
        0.839_116_971_822_218_8,
        0.912_234_428_251_326,
        0.963_971_927_277_913_8,
        0.993_128_599_185_094_9,
    ];
    const W: [f64; 10] = [
        0.152_753_387_130_725_85,
        0.149_172_986_472_603_75,
        0.142_096_109_318_382_05,
        0.131_688_638_449_176_63,
        0.118_194_531_961_518_42,
        0.101_930_119_817_240_44,
        0.083_276_741_576_704_75,
        0.062_672_048_334_109_06,
        0.040_601_429_800_386_94,
        0.017_614_007_139_152_12,
    ];
    const PANELS: usize = 64;
    let hw = 0.5 * width / PANELS as f64;
    let mut total = 0.0;
    for p in 0..PANELS {
        let mid = (2 * p + 1) as f64 * hw;
        let mut acc = 0.0;
        for (x, w) in X.iter().zip(&W) {
            acc += w * (f(mid - hw * x) + f(mid + hw * x));
        }
        total += acc * hw;
    }
    total
}

/// Inverse of a symmetric positive-definite 3×3 matrix via the adjugate of
/// its diagonally equilibrated form. Returns the inverse and the
/// equilibrated condition number (Frobenius).
pub fn inverse3(a: &Mat3) -> Result<(Mat3, f64)> {
    let d: Vec<f64> = (0..3).map(|i| a[i][i]).collect();
    if d.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::invalid("matrix diagonal must be positive"));
    }
    let s: Vec<f64> = d.iter().map(|x| x.sqrt()).collect();
    let mut b = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            b[i][j] = a[i][j] / (s[i] * s[j]);
        }
    }
    let cof =
        |r0: usize, r1: usize, c0: usize, c1: usize| b[r0][c0] * b[r1][c1] - b[r0][c1] * b[r1][c0];
    let adj = [
        [cof(1, 2, 1, 2), -cof(0, 2, 1, 2), cof(0, 1, 1, 2)],
        [-cof(1, 2, 0, 2), cof(0, 2, 0, 2), -cof(0, 1, 0, 2)],
        [cof(1, 2, 0, 1), -cof(0, 2, 0, 1), cof(0, 1, 0, 1)],
    ];
    let det = b[0][0] * adj[0][0] + b[0][1] * adj[1][0] + b[0][2] * adj[2][0];
    if !(det.abs() > 0.0 && det.is_finite()) {
        return Err(Error::invalid("singular matrix"));
    }
    let mut inv = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            inv[i][j] = adj[i][j] / det / (s[i] * s[j]);
        }
    }
    let frob = |m: &Mat3| m.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
    let binv: Mat3 = std::array::from_fn(|i| std::array::from_fn(|j| adj[i][j] / det));
    Ok((inv, frob(&b) * frob(&binv)))
}

/// E[Q]·(E[J_d] + E[J_p])⁻¹·E[Q], plus the equilibrated condition number of
/// the inverted matrix.
pub fn wbcrb_with_condition(spec: &WbcrbSpec) -> Result<(Mat3, f64)> {
    let c = WeightingConstants::new(spec.h)?;
    let (wm, em) = (spec.prior.omega_max, spec.prior.epsilon_max);
    if !(wm > 0.0 && em > 0.0) {
        return Err(Error::invalid(
            "WBCRB needs omega_max > 0 and epsilon_max > 0",
        ));
    }
    let p3 = [
        (1.0 / (2.0 * std::f64::consts::PI)).powi(2),
        (1.0 / (2.0 * wm)).powi(2),
        (1.0 / (2.0 * em)).powi(2),
    ];
    let j = fim(&spec.fim);
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for k in 0..3 {
            let lam = if i == k { c.lambda1 } else { c.lambda2 };
            m[i][k] = lam * j[i][k];
        }
        m[i][i] += c.e_jp * p3[i];
    }
    let (inv, cond) = inverse3(&m)?;
    let q2 = c.e_q * c.e_q;
    Ok((inv.map(|row| row.map(|x| q2 * x)), cond))
}

pub fn wbcrb(spec: &WbcrbSpec) -> Result<Mat3> {
    wbcrb_with_condition(spec).map(|(m, _)| m)
}

pub fn diag(m: &Mat3) -> [f64; 3] {
    [m[0][0], m[1][1], m[2][2]]
}

/// Prior variances ((2π)²/12, (2ω_m)²/12, (2ε_m)²/12).
pub fn prior_variances(prior: &PriorSpec) -> [f64; 3] {
    let w = |half: f64| (2.0 * half).powi(2) / 12.0;
    [
        w(std::f64::consts::PI),
        w(prior.omega_max),
        w(prior.epsilon_max),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrbReport {
    pub snr_db: f64,
    pub jcrb: Mat3,
    pub wbcrb: Mat3,
    /// Ill-conditioning notices; empty when all inverses were benign.
    pub warnings: Vec<String>,
}

impl CrbReport {
    pub fn jcrb_diag(&self) -> [f64; 3] {
        diag(&self.jcrb)
    }

    pub fn wbcrb_diag(&self) -> [f64; 3] {
        diag(&self.wbcrb)
    }
}

/// JCRB and WBCRB at each SNR (Es/N0, dB).
pub fn bounds_sweep(
    snr_db: &[f64],
    frame_len: usize,
    prior: &PriorSpec,
    h: f64,
) -> Result<Vec<CrbReport>> {
    snr_db
        .iter()
        .map(|&snr| {
            let fim_spec = FimSpec::new(frame_len, snr_db_to_sigma2(snr))?;
            let (w, cond) = wbcrb_with_condition(&WbcrbSpec {
                fim: fim_spec,
                prior: *prior,
                h,
            })?;
            let mut warnings = Vec::new();
            if cond > COND_WARN {
                warnings.push(format!(
                    "WBCRB information matrix condition number {cond:.3e}"
                ));
            }
            Ok(CrbReport {
                snr_db: snr,
                jcrb: jcrb(&fim_spec),
                wbcrb: w,
                warnings,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matmul(a: &Mat3, b: &Mat3) -> Mat3 {
        std::array::from_fn(|i| std::array::from_fn(|j| (0..3).map(|k| a[i][k] * b[k][j]).sum()))
    }

    fn rel_frob(a: &Mat3, b: &Mat3) -> f64 {
        let num: f64 = (0..9)
            .map(|i| (a[i / 3][i % 3] - b[i / 3][i % 3]).powi(2))
            .sum();
        let den: f64 = (0..9).map(|i| b[i / 3][i % 3].powi(2)).sum();
        (num / den).sqrt()
    }

    #[test]
    fn fim_small_frame_by_hand() {
        let f = fim(&FimSpec::new(3, 2.0).unwrap());
        assert_eq!(f, [[3.0, 3.0, 5.0], [3.0, 5.0, 9.0], [5.0, 9.0, 17.0]]);
    }

    #[test]
    fn fim_symmetry_and_scaling() {
        let a = fim(&FimSpec::new(534, 0.7).unwrap());
        let b = fim(&FimSpec::new(534, 1.4).unwrap());
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(a[i][j], a[j][i]);
                assert!((b[i][j] - a[i][j] / 2.0).abs() <= 1e-15 * a[i][j].abs());
            }
        }
    }

    #[test]
    fn power_sums_match_loops() {
        for l in [3usize, 10, 534, 1000] {
            let s = power_sums(l);
            for p in 0..5 {
                let direct: f64 = (0..l).map(|k| (k as f64).powi(p as i32)).sum();
                assert!((s[p] - direct).abs() <= 1e-12 * direct, "L={l} p={p}");
            }
        }
    }

    #[test]
    fn closed_form_inverts_fim() {
        for l in (3..=1000).step_by(7).chain([10, 100, 534]) {
            let spec = FimSpec::new(l, 0.37).unwrap();
            let j = jcrb(&spec);
            let (num, _) = inverse3(&fim(&spec)).unwrap();
            assert!(rel_frob(&j, &num) < 1e-9, "L={l}");
        }
        for l in [10, 100, 534] {
            let spec = FimSpec::new(l, 1.0).unwrap();
            let prod = matmul(&jcrb(&spec), &fim(&spec));
            for i in 0..3 {
                for k in 0..3 {
                    let want = if i == k { 1.0 } else { 0.0 };
                    assert!(
                        (prod[i][k] - want).abs() < 1e-9,
                        "L={l} ({i},{k}) {}",
                        prod[i][k]
                    );
                }
            }
        }
    }

    #[test]
    fn theta_entry_formula() {
        let l = 534.0;
        let want = 0.5 * (9.0 * (l - 1.0) * l + 6.0) / (l * (l + 1.0) * (l + 2.0));
        assert_eq!(jcrb(&FimSpec::new(534, 1.0).unwrap())[0][0], want);
    }

    #[test]
    fn jcrb_decreases_with_frame_length() {
        let mut prev = diag(&jcrb(&FimSpec::new(10, 1.0).unwrap()));
        for l in 11..=1000 {
            let d = diag(&jcrb(&FimSpec::new(l, 1.0).unwrap()));
            for i in 0..3 {
                assert!(d[i] < prev[i], "L={l} entry {i}");
            }
            prev = d;
        }
    }

    #[test]
    fn fim_is_positive_definite() {
        for l in [3usize, 4, 50, 534, 1000] {
            let a = fim(&FimSpec::new(l, 1.0).unwrap());
            // Leading principal minors.
            let m1 = a[0][0];
            let m2 = a[0][0] * a[1][1] - a[0][1] * a[1][0];
            let (inv, _) = inverse3(&a).unwrap();
            assert!(m1 > 0.0 && m2 > 0.0);
            assert!(diag(&inv).iter().all(|&x| x > 0.0));
        }
    }

    #[test]
    fn weighting_constants_at_h1() {
        let c = WeightingConstants::new(1.0).unwrap();
        assert!((c.lambda1 - 1.0 / 30.0).abs() < 1e-14);
        assert!((c.lambda2 - 1.0 / 36.0).abs() < 1e-14);
        assert!((c.e_q - 1.0 / 6.0).abs() < 1e-14);
        assert!((c.e_jp - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn weighting_constants_match_quadrature() {
        for h in [0.75, 1.0, 1.25, 1.5, 2.0, 3.0] {
            let d = WeightingConstants::quadrature_discrepancy(h).unwrap();
            assert!(d < 1e-8, "h={h}: {d}");
        }
    }

    #[test]
    fn small_weighting_index_is_rejected() {
        assert!(WeightingConstants::new(0.5).is_err());
        assert!(WeightingConstants::new(0.3).is_err());
        assert!(bounds_sweep(&[0.0], 534, &PriorSpec::default(), 0.5).is_err());
    }

    #[test]
    fn low_snr_floors_are_prior_variances() {
        let r = &bounds_sweep(&[-60.0], 534, &PriorSpec::default(), 1.0).unwrap()[0];
        let d = r.wbcrb_diag();
        let want = [3.2899, 3.333e-5, 3.333e-11];
        for i in 0..3 {
            assert!((d[i] / want[i] - 1.0).abs() < 0.01, "{i}: {}", d[i]);
        }
    }

    #[test]
    fn wbcrb_approaches_jcrb_for_narrow_prior() {
        let r = &bounds_sweep(&[0.0], 534, &PriorSpec::default(), 1.0).unwrap()[0];
        for (w, j) in r.wbcrb_diag().iter().zip(r.jcrb_diag()) {
            assert!(w / j <= 1.10, "{w} vs {j}");
        }
        // With λ₁ ≠ λ₂ the weighted information is not proportional to the
        // FIM, so the ratio levels off below 1 instead of reaching it.
        let rows = bounds_sweep(&[30.0, 60.0], 534, &PriorSpec::default(), 1.0).unwrap();
        for i in 0..3 {
            let a = rows[0].wbcrb_diag()[i] / rows[0].jcrb_diag()[i];
            let b = rows[1].wbcrb_diag()[i] / rows[1].jcrb_diag()[i];
            assert!(b < 1.0 && (a / b - 1.0).abs() < 1e-3, "{i}: {a} {b}");
        }
    }

    #[test]
    fn wbcrb_monotone_and_below_prior() {
        let prior = PriorSpec::default();
        let snrs: Vec<f64> = (-60..=30).map(|s| s as f64).collect();
        let rows = bounds_sweep(&snrs, 534, &prior, 1.0).unwrap();
        let pv = prior_variances(&prior);
        for w in rows.windows(2) {
            for i in 0..3 {
                assert!(w[1].wbcrb_diag()[i] <= w[0].wbcrb_diag()[i] * (1.0 + 1e-12));
            }
        }
        for r in &rows {
            for i in 0..3 {
                assert!(r.wbcrb_diag()[i] <= pv[i] * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn sweep_shapes() {
        assert!(bounds_sweep(&[], 534, &PriorSpec::default(), 1.0)
            .unwrap()
            .is_empty());
        let rows = bounds_sweep(&[0.0, 5.0, 10.0], 534, &PriorSpec::default(), 1.0).unwrap();
        assert_eq!(rows.len(), 3);
        let spec = FimSpec::new(534, 1.0).unwrap();
        assert_eq!(rows[0].jcrb, jcrb(&spec));
        assert!(FimSpec::new(2, 1.0).is_err());
    }
}
