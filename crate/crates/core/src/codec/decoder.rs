//! Flooding sum-product decoder with the tanh rule at check nodes.

use super::ParityCheckMatrix;

/// Magnitude at which all LLRs are clipped.
pub const LLR_CLIP: f64 = 38.0;
pub const DEFAULT_MAX_ITERS: usize = 50;

/// Decoder output. Positive LLR favours bit 0.
#[derive(Debug, Clone, PartialEq)]
pub struct BitBeliefs {
    /// Channel plus all check messages.
    pub posterior: Vec<f64>,
    /// Check messages only (posterior minus channel input).
    pub extrinsic: Vec<f64>,
    pub iterations: usize,
    /// Hard decision of `posterior` satisfies every check.
    pub converged: bool,
}

impl BitBeliefs {
    pub fn hard_decision(&self) -> Vec<u8> {
        self.posterior.iter().map(|&l| u8::from(l < 0.0)).collect()
    }
}

fn clip(x: f64) -> f64 {
    x.clamp(-LLR_CLIP, LLR_CLIP)
}

/// Edge-indexed Tanner graph. Edges are numbered in row order.
#[derive(Debug, Clone)]
pub struct Decoder {
    n: usize,
    row_start: Vec<usize>,
    edge_var: Vec<usize>,
    var_edges: Vec<Vec<usize>>,
}

impl Decoder {
    pub fn new(h: &ParityCheckMatrix) -> Self {
        let mut row_start = Vec::with_capacity(h.n_rows() + 1);
        let mut edge_var = Vec::with_capacity(h.n_edges());
        let mut var_edges = vec![Vec::new(); h.n_cols()];
        row_start.push(0);
        for row in h.rows() {
            for &c in row {
                var_edges[c].push(edge_var.len());
                edge_var.push(c);
            }
            row_start.push(edge_var.len());
        }
        Self {
            n: h.n_cols(),
            row_start,
            edge_var,
            var_edges,
        }
    }

    fn syndrome_ok(&self, hard: &[u8]) -> bool {
        self.row_start.windows(2).all(|w| {
            self.edge_var[w[0]..w[1]]
                .iter()
                .fold(0u8, |acc, &v| acc ^ hard[v])
                == 0
        })
    }

    /// Decode channel LLRs (positive favours 0). Runs at most `max_iters`
    /// flooding iterations and stops as soon as the hard decision satisfies
    /// all checks.
    pub fn decode(&self, channel: &[f64], max_iters: usize) -> BitBeliefs {
        assert_eq!(channel.len(), self.n, "LLR vector length");
        let max_iters = max_iters.max(1);
        let ch: Vec<f64> = channel.iter().map(|&l| clip(l)).collect();
        let n_edges = self.edge_var.len();
        let mut v2c: Vec<f64> = self.edge_var.iter().map(|&v| ch[v]).collect();
        let mut c2v = vec![0.0; n_edges];
        let mut posterior = ch.clone();
        let mut hard = vec![0u8; self.n];
        let mut t = Vec::new();
        let mut iterations = 0;
        let mut converged = false;

        for it in 1..=max_iters {
            iterations = it;
            // Check update via prefix/suffix products of tanh(v2c/2).
            for w in self.row_start.windows(2) {
                let (a, b) = (w[0], w[1]);
                t.clear();
                t.extend(v2c[a..b].iter().map(|&l| (0.5 * l).tanh()));
                let mut prefix = 1.0;
                for (i, e) in (a..b).enumerate() {
                    c2v[e] = prefix;
                    prefix *= t[i];
                }
                let mut suffix = 1.0;
                for (i, e) in (a..b).enumerate().rev() {
                    let p = c2v[e] * suffix;
                    c2v[e] = clip(2.0 * p.atanh());
                    suffix *= t[i];
                }
            }
            // Posterior and hard decision.
            for (v, edges) in self.var_edges.iter().enumerate() {
                let total = ch[v] + edges.iter().map(|&e| c2v[e]).sum::<f64>();
                posterior[v] = clip(total);
                hard[v] = u8::from(total < 0.0);
            }
            if self.syndrome_ok(&hard) {
                converged = true;
                break;
            }
            // Variable update (extrinsic per edge).
            for (v, edges) in self.var_edges.iter().enumerate() {
                let total = ch[v] + edges.iter().map(|&e| c2v[e]).sum::<f64>();
                for &e in edges {
                    v2c[e] = clip(total - c2v[e]);
                }
            }
        }

        let extrinsic = self
            .var_edges
            .iter()
            .map(|edges| clip(edges.iter().map(|&e| c2v[e]).sum::<f64>()))
            .collect();
        BitBeliefs {
            posterior,
            extrinsic,
            iterations,
            converged,
        }
    }
}
