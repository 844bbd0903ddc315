//! Least-squares quadratic trajectory fit f(k) = θ + ωk + εk².

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult {
    pub theta_hat: f64,
    pub omega_hat: f64,
    pub epsilon_hat: f64,
    /// Residual sum of squares.
    pub rss: f64,
}

impl FitResult {
    pub fn eval(&self, k: f64) -> f64 {
        self.theta_hat + self.omega_hat * k + self.epsilon_hat * k * k
    }
}

/// Fits `phases[i]` observed at k = k0 + i.
///
/// Internally regresses on t = (k − c)/s with c the centre and s the
/// half-span of the index range, then maps the coefficients back to k.
pub fn quadratic_fit(phases: &[f64], k0: usize) -> Result<FitResult> {
    let n = phases.len();
    if n < 3 {
        return Err(Error::invalid(format!(
            "quadratic fit needs at least 3 points, got {n}"
        )));
    }
    let c = k0 as f64 + (n - 1) as f64 / 2.0;
    let s = ((n - 1) as f64 / 2.0).max(1.0);
    let t = |i: usize| ((k0 + i) as f64 - c) / s;

    // Normal equations in the basis {1, t, t²}.
    let mut m = [0.0f64; 5]; // Σ t^p, p = 0..4
    let mut r = [0.0f64; 3]; // Σ t^p·φ
    for (i, &phi) in phases.iter().enumerate() {
        let ti = t(i);
        let mut p = 1.0;
        for (j, mj) in m.iter_mut().enumerate() {
            *mj += p;
            if j < 3 {
                r[j] += p * phi;
            }
            p *= ti;
        }
    }
    let a = [[m[0], m[1], m[2]], [m[1], m[2], m[3]], [m[2], m[3], m[4]]];
    let [b0, b1, b2] = solve3(a, r).ok_or_else(|| Error::invalid("singular fit"))?;

    // b0 + b1·(k−c)/s + b2·(k−c)²/s² expanded in powers of k.
    let e = b2 / (s * s);
    let w = b1 / s - 2.0 * e * c;
    let th = b0 - b1 * c / s + e * c * c;

    let rss = phases
        .iter()
        .enumerate()
        .map(|(i, &phi)| {
            let ti = t(i);
            let d = phi - (b0 + b1 * ti + b2 * ti * ti);
            d * d
        })
        .sum();
    Ok(FitResult {
        theta_hat: th,
        omega_hat: w,
        epsilon_hat: e,
        rss,
    })
}

/// Gaussian elimination with partial pivoting.
fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for j in col..3 {
                a[row][j] -= f * a[col][j];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let mut acc = b[row];
        for j in row + 1..3 {
            acc -= a[row][j] * x[j];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}
