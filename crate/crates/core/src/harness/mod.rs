//! Monte Carlo experiments, result tables and their CSV / gnuplot output.

mod config;
mod experiments;
mod output;

pub use config::{EstimatorKind, ExperimentConfig, Scenario, KEYS};
pub use experiments::{
    ber_crossing, run, run_ber, run_bounds, run_convergence, run_mse, run_sweep, simulate_burst,
    Backend, Burst, Setup,
};
pub use output::{
    csv_string, emit_csv, emit_plotscript, plotscript_string, CSV_COLUMNS, CSV_VERSION,
};

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scenario: String,
    pub snr_db: f64,
    /// Swept quantity (particles, iterations, nodes, fine-tuning on/off).
    pub param: Option<f64>,
    /// Symbol index for per-symbol traces.
    pub index: Option<usize>,
    pub metric: String,
    pub value: f64,
    pub n_trials: usize,
    pub std_error: f64,
    pub fingerprint: String,
    pub seed: u64,
}

impl ResultRow {
    pub fn new(cfg: &ExperimentConfig, snr_db: f64, metric: impl Into<String>, value: f64) -> Self {
        Self {
            scenario: cfg.scenario.to_string(),
            snr_db,
            param: None,
            index: None,
            metric: metric.into(),
            value,
            n_trials: 0,
            std_error: 0.0,
            fingerprint: cfg.fingerprint(),
            seed: cfg.seed,
        }
    }

    pub fn with_stats(mut self, s: &Summary) -> Self {
        self.n_trials = s.n;
        self.std_error = s.std_error;
        self
    }

    pub fn with_param(mut self, p: f64) -> Self {
        self.param = Some(p);
        self
    }

    pub fn with_index(mut self, k: usize) -> Self {
        self.index = Some(k);
        self
    }
}

/// Summation by recursive halving; the split depends only on the length, so
/// the result is fixed by the input order.
pub fn pairwise_sum(x: &[f64]) -> f64 {
    if x.len() <= 8 {
        return x.iter().sum();
    }
    let (a, b) = x.split_at(x.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// Sample mean with standard error s/√n.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
}

impl Summary {
    pub fn of(x: &[f64]) -> Self {
        let n = x.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                std_error: f64::NAN,
                n,
            };
        }
        let mean = pairwise_sum(x) / n as f64;
        let std_error = if n > 1 {
            let dev: Vec<f64> = x.iter().map(|v| (v - mean).powi(2)).collect();
            (pairwise_sum(&dev) / (n - 1) as f64 / n as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std_error, n }
    }
}
