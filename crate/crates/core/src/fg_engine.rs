//! Sum-product plumbing shared by both estimators: symbol likelihoods,
//! combination of per-node messages, the PMF/LLR bridge to the decoder, and
//! the outer estimation ↔ decoding loop.
//!
//! Symbol index 0 is the BPSK symbol +1 (bit 0), index 1 is −1 (bit 1).

use num_complex::Complex64;

use crate::channel::{ChannelParams, NodeObservation};
use crate::codec::{LdpcCode, LLR_CLIP};
use crate::error::{Error, Result};
use crate::framing::BPSK_ALPHABET;
use crate::rng::SimRng;

/// Probability mass over the BPSK alphabet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymbolPmf {
    pub probs: [f64; 2],
}

impl SymbolPmf {
    pub const UNIFORM: SymbolPmf = SymbolPmf { probs: [0.5, 0.5] };

    /// Normalizes non-negative masses; `None` if both are zero or invalid.
    pub fn normalized(p0: f64, p1: f64) -> Option<Self> {
        let s = p0 + p1;
        if !(s > 0.0 && s.is_finite()) || p0 < 0.0 || p1 < 0.0 {
            return None;
        }
        Some(Self {
            probs: [p0 / s, p1 / s],
        })
    }

    /// Point mass on symbol `index`.
    pub fn point_mass(index: usize) -> Self {
        let mut probs = [0.0; 2];
        probs[index] = 1.0;
        Self { probs }
    }

    /// Point mass on the symbol transmitted for `bit`.
    pub fn known_bit(bit: u8) -> Self {
        Self::point_mass(bit as usize)
    }

    /// From a log-ratio ln p(+1)/p(−1), without clipping.
    pub fn from_log_ratio(l: f64) -> Self {
        if l >= 0.0 {
            let e = (-l).exp();
            Self {
                probs: [1.0 / (1.0 + e), e / (1.0 + e)],
            }
        } else {
            let e = l.exp();
            Self {
                probs: [e / (1.0 + e), 1.0 / (1.0 + e)],
            }
        }
    }

    pub fn sum(&self) -> f64 {
        self.probs[0] + self.probs[1]
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        self.probs
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| -p * p.ln())
            .sum()
    }
}

/// Unnormalized likelihood exp{−|y − x·e^{jφ}|²/σ²} for a real BPSK symbol.
pub fn symbol_likelihood(y: Complex64, x: f64, phi: f64, sigma2: f64) -> f64 {
    let r = y - x * Complex64::from_polar(1.0, phi);
    (-r.norm_sqr() / sigma2).exp()
}

/// ln p(y|+1,φ) − ln p(y|−1,φ) = 4·Re(y·e^{−jφ})/σ².
pub fn phase_log_ratio(y: Complex64, phi: f64, sigma2: f64) -> f64 {
    let (s, c) = phi.sin_cos();
    4.0 * (y.re * c + y.im * s) / sigma2
}

/// Normalized symbol PMF of one observation given the phase, computed in the
/// log domain.
pub fn phase_pmf(y: Complex64, phi: f64, sigma2: f64) -> SymbolPmf {
    SymbolPmf::from_log_ratio(phase_log_ratio(y, phi, sigma2))
}

/// Upward PMFs for k ∈ [n_preamble, L) under the quadratic phase
/// θ + ωk + εk² of `params`.
pub fn quadratic_phase_pmfs(
    obs: &NodeObservation,
    params: &ChannelParams,
    n_preamble: usize,
) -> Vec<SymbolPmf> {
    (n_preamble..obs.len())
        .map(|k| phase_pmf(obs.samples[k], params.unwrapped_phase(k), obs.sigma2))
        .collect()
}

/// Normalized product of per-node PMFs at one position. The flag is set when
/// the product vanishes and the uniform PMF is returned instead.
pub fn combine_nodes(upward: &[SymbolPmf]) -> Result<(SymbolPmf, bool)> {
    if upward.is_empty() {
        return Err(Error::invalid("combine_nodes needs at least one node"));
    }
    let (mut p0, mut p1) = (1.0, 1.0);
    for m in upward {
        p0 *= m.probs[0];
        p1 *= m.probs[1];
        // Keep the running product away from underflow.
        let s = p0 + p1;
        if s > 0.0 {
            p0 /= s;
            p1 /= s;
        }
    }
    Ok(match SymbolPmf::normalized(p0, p1) {
        Some(p) => (p, false),
        None => (SymbolPmf::UNIFORM, true),
    })
}

fn clip_llr(l: f64) -> f64 {
    l.clamp(-LLR_CLIP, LLR_CLIP)
}

/// Bit LLR ln p(bit 0)/p(bit 1), clipped at ±38.
pub fn pmf_to_llr(p: &SymbolPmf) -> f64 {
    let [p0, p1] = p.probs;
    if p1 == 0.0 {
        return LLR_CLIP;
    }
    if p0 == 0.0 {
        return -LLR_CLIP;
    }
    clip_llr(p0.ln() - p1.ln())
}

/// Logistic inverse of [`pmf_to_llr`] (input clipped at ±38).
pub fn llr_to_pmf(llr: f64) -> SymbolPmf {
    SymbolPmf::from_log_ratio(clip_llr(llr))
}

/// What a node estimator hands back for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeEstimate {
    /// Final (θ̂, ω̂, ε̂).
    pub params: ChannelParams,
    /// Upward PMFs μ_{f_k→x_k} for the data positions k ≥ N_p.
    pub upward: Vec<SymbolPmf>,
    /// Estimator-specific anomalies (degenerate weights, skipped fits, ...).
    pub flags: Vec<String>,
}

/// A per-node estimator of the lower factor graph.
pub trait NodeEstimator: Sync {
    /// `incoming[k]` is μ_{x_k→f_k} for every frame position.
    fn estimate(
        &self,
        obs: &NodeObservation,
        incoming: &[SymbolPmf],
        n_preamble: usize,
        rng: &mut SimRng,
    ) -> Result<NodeEstimate>;
}

/// Supplies the true parameters of each node; the coherent reference.
#[derive(Debug, Clone)]
pub struct GenieEstimator {
    pub truth: Vec<ChannelParams>,
}

impl NodeEstimator for GenieEstimator {
    fn estimate(
        &self,
        obs: &NodeObservation,
        _incoming: &[SymbolPmf],
        n_preamble: usize,
        _rng: &mut SimRng,
    ) -> Result<NodeEstimate> {
        let params = *self
            .truth
            .get(obs.node_id)
            .ok_or_else(|| Error::invalid(format!("no truth for node {}", obs.node_id)))?;
        Ok(NodeEstimate {
            params,
            upward: quadratic_phase_pmfs(obs, &params, n_preamble),
            flags: Vec::new(),
        })
    }
}

/// How the symbol message sent back down to each node is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Feedback {
    /// Decoder message times the upward messages of all other nodes.
    #[default]
    Extrinsic,
    /// Decoder message times the upward messages of all nodes.
    Posterior,
}

impl std::str::FromStr for Feedback {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "extrinsic" => Ok(Self::Extrinsic),
            "posterior" => Ok(Self::Posterior),
            _ => Err(Error::invalid(format!("unknown feedback mode `{s}`"))),
        }
    }
}

impl std::fmt::Display for Feedback {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Extrinsic => "extrinsic",
            Self::Posterior => "posterior",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlobalLoopConfig {
    /// Estimation ↔ decoding iterations G.
    pub n_global_iters: usize,
    pub feedback: Feedback,
    /// Decoder iteration budget per global iteration.
    pub decoder_iters: usize,
}

impl Default for GlobalLoopConfig {
    fn default() -> Self {
        Self {
            n_global_iters: 1,
            feedback: Feedback::Extrinsic,
            decoder_iters: crate::codec::DEFAULT_MAX_ITERS,
        }
    }
}

/// Per-frame message state: upward and downward PMFs for every node and
/// position, plus the decoder's extrinsic LLRs on the data positions.
#[derive(Debug, Clone)]
pub struct MessageBoard {
    n_preamble: usize,
    preamble: Vec<SymbolPmf>,
    pub upward: Vec<Vec<SymbolPmf>>,
    pub downward: Vec<Vec<SymbolPmf>>,
    pub decoder_extrinsic: Vec<f64>,
}

impl MessageBoard {
    /// Fresh board: preamble positions carry point masses, data positions
    /// are uniform.
    pub fn new(n_nodes: usize, preamble_bits: &[u8], n_data: usize) -> Self {
        let n_preamble = preamble_bits.len();
        let preamble: Vec<SymbolPmf> = preamble_bits
            .iter()
            .map(|&b| SymbolPmf::known_bit(b))
            .collect();
        let mut row = preamble.clone();
        row.resize(n_preamble + n_data, SymbolPmf::UNIFORM);
        Self {
            n_preamble,
            preamble,
            upward: vec![row.clone(); n_nodes],
            downward: vec![row; n_nodes],
            decoder_extrinsic: vec![0.0; n_data],
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.upward.len()
    }

    pub fn n_preamble(&self) -> usize {
        self.n_preamble
    }

    pub fn len(&self) -> usize {
        self.n_preamble + self.decoder_extrinsic.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Stores a node's upward messages for the data positions. Preamble
    /// positions keep their point masses.
    pub fn set_upward(&mut self, node: usize, data_pmfs: &[SymbolPmf]) {
        let row = &mut self.upward[node];
        row[self.n_preamble..].copy_from_slice(data_pmfs);
    }

    pub fn set_upward_uniform(&mut self, node: usize) {
        let np = self.n_preamble;
        self.upward[node][np..].fill(SymbolPmf::UNIFORM);
    }

    /// Combined data-position PMFs over all nodes, and how many positions
    /// were degenerate.
    pub fn combined(&self) -> (Vec<SymbolPmf>, usize) {
        let mut degenerate = 0;
        let mut buf = Vec::with_capacity(self.n_nodes());
        let out = (self.n_preamble..self.len())
            .map(|k| {
                buf.clear();
                buf.extend(self.upward.iter().map(|row| row[k]));
                let (p, flag) = combine_nodes(&buf).expect("board has at least one node");
                degenerate += usize::from(flag);
                p
            })
            .collect();
        (out, degenerate)
    }

    /// Rebuilds the downward messages from the decoder extrinsic LLRs.
    pub fn update_downward(&mut self, feedback: Feedback) -> usize {
        let mut degenerate = 0;
        let n = self.n_nodes();
        let mut buf = Vec::with_capacity(n + 1);
        for k in self.n_preamble..self.len() {
            let dec = llr_to_pmf(self.decoder_extrinsic[k - self.n_preamble]);
            for node in 0..n {
                buf.clear();
                buf.push(dec);
                for (m, row) in self.upward.iter().enumerate() {
                    if feedback == Feedback::Posterior || m != node {
                        buf.push(row[k]);
                    }
                }
                let (p, flag) = combine_nodes(&buf).expect("non-empty");
                degenerate += usize::from(flag);
                self.downward[node][k] = p;
            }
        }
        for row in &mut self.downward {
            row[..self.n_preamble].copy_from_slice(&self.preamble);
        }
        degenerate
    }
}

/// State recorded after each global iteration.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    /// Per node; `None` when the node dropped out.
    pub estimates: Vec<Option<ChannelParams>>,
    pub codeword: Vec<u8>,
    pub info_bits: Vec<u8>,
    pub decoder_converged: bool,
    pub decoder_iterations: usize,
    pub degenerate_positions: usize,
}

#[derive(Debug, Clone)]
pub struct LoopOutput {
    pub info_bits: Vec<u8>,
    pub iterations: Vec<IterationRecord>,
    /// Messages describing node dropouts and estimator anomalies.
    pub flags: Vec<String>,
}

/// Runs G rounds of per-node estimation, combination across nodes, LDPC
/// decoding and feedback. `rngs[n]` drives node n's estimator.
pub fn run_global_loop(
    observations: &[NodeObservation],
    preamble_bits: &[u8],
    code: &LdpcCode,
    estimator: &dyn NodeEstimator,
    cfg: &GlobalLoopConfig,
    rngs: &mut [SimRng],
) -> Result<LoopOutput> {
    if observations.is_empty() {
        return Err(Error::invalid("no observations"));
    }
    if rngs.len() != observations.len() {
        return Err(Error::LengthMismatch {
            what: "per-node rngs",
            expected: observations.len(),
            got: rngs.len(),
        });
    }
    if cfg.n_global_iters == 0 {
        return Err(Error::invalid("n_global_iters must be at least 1"));
    }
    let n_preamble = preamble_bits.len();
    let n_data = code.n();
    for obs in observations {
        if obs.len() != n_preamble + n_data {
            return Err(Error::LengthMismatch {
                what: "observation",
                expected: n_preamble + n_data,
                got: obs.len(),
            });
        }
    }

    let mut board = MessageBoard::new(observations.len(), preamble_bits, n_data);
    let mut records = Vec::with_capacity(cfg.n_global_iters);
    let mut flags = Vec::new();

    for iter in 0..cfg.n_global_iters {
        let mut estimates = Vec::with_capacity(observations.len());
        for (n, (obs, rng)) in observations.iter().zip(rngs.iter_mut()).enumerate() {
            match estimator.estimate(obs, &board.downward[n], n_preamble, rng) {
                Ok(est) => {
                    board.set_upward(n, &est.upward);
                    flags.extend(
                        est.flags
                            .into_iter()
                            .map(|f| format!("iter {iter} node {n}: {f}")),
                    );
                    estimates.push(Some(est.params));
                }
                Err(e) => {
                    board.set_upward_uniform(n);
                    flags.push(format!("iter {iter} node {n}: dropped ({e})"));
                    estimates.push(None);
                }
            }
        }

        let (combined, mut degenerate) = board.combined();
        let llrs: Vec<f64> = combined.iter().map(pmf_to_llr).collect();
        let beliefs = code.decode(&llrs, cfg.decoder_iters);
        board.decoder_extrinsic.clone_from(&beliefs.extrinsic);
        degenerate += board.update_downward(cfg.feedback);

        let codeword = beliefs.hard_decision();
        records.push(IterationRecord {
            estimates,
            info_bits: code.extract_info(&codeword),
            codeword,
            decoder_converged: beliefs.converged,
            decoder_iterations: beliefs.iterations,
            degenerate_positions: degenerate,
        });
    }

    Ok(LoopOutput {
        info_bits: records.last().expect("G >= 1").info_bits.clone(),
        iterations: records,
        flags,
    })
}

/// Coherent reference receiver: channel LLRs 4·Re(y·e^{−jφ_k})/σ² from the
/// true phases, combined over nodes by summation, then one decoder pass.
pub fn coherent_decode(
    observations: &[NodeObservation],
    truth: &[ChannelParams],
    n_preamble: usize,
    code: &LdpcCode,
    decoder_iters: usize,
) -> Vec<u8> {
    let llrs: Vec<f64> = (n_preamble..n_preamble + code.n())
        .map(|k| {
            let total: f64 = observations
                .iter()
                .zip(truth)
                .map(|(o, p)| {
                    clip_llr(phase_log_ratio(
                        o.samples[k],
                        p.unwrapped_phase(k),
                        o.sigma2,
                    ))
                })
                .sum();
            clip_llr(total)
        })
        .collect();
    code.extract_info(&code.decode(&llrs, decoder_iters).hard_decision())
}

/// Index of the symbol `x` within [`BPSK_ALPHABET`].
pub fn bpsk_index(x: f64) -> usize {
    BPSK_ALPHABET
        .iter()
        .position(|&s| s == x)
        .expect("BPSK symbol")
}
