//! Systematic encoder obtained by Gaussian elimination of H over GF(2).

use super::ParityCheckMatrix;
use crate::error::{Error, Result};

type Words = Vec<u64>;

fn get(w: &[u64], i: usize) -> bool {
    (w[i / 64] >> (i % 64)) & 1 == 1
}

fn set(w: &mut [u64], i: usize) {
    w[i / 64] |= 1 << (i % 64);
}

/// H reduced to [I | P] on a column permutation. Pivot columns carry parity
/// bits, the remaining columns carry information bits in increasing order.
#[derive(Debug, Clone)]
pub struct Encoder {
    n: usize,
    pivot_cols: Vec<usize>,
    info_cols: Vec<usize>,
    /// Row i: which information bits feed the parity bit at `pivot_cols[i]`.
    parity: Vec<Words>,
}

impl Encoder {
    pub fn new(h: &ParityCheckMatrix) -> Self {
        let n = h.n_cols();
        let words = n.div_ceil(64);
        let mut m: Vec<Words> = h
            .rows()
            .iter()
            .map(|row| {
                let mut w = vec![0u64; words];
                for &c in row {
                    set(&mut w, c);
                }
                w
            })
            .collect();

        let mut pivot_cols = Vec::new();
        let mut rank = 0;
        for c in 0..n {
            if rank == m.len() {
                break;
            }
            let Some(p) = (rank..m.len()).find(|&r| get(&m[r], c)) else {
                continue;
            };
            m.swap(rank, p);
            let pivot = m[rank].clone();
            for (r, row) in m.iter_mut().enumerate() {
                if r != rank && get(row, c) {
                    row.iter_mut().zip(&pivot).for_each(|(a, b)| *a ^= b);
                }
            }
            pivot_cols.push(c);
            rank += 1;
        }
        m.truncate(rank);

        let mut is_pivot = vec![false; n];
        for &c in &pivot_cols {
            is_pivot[c] = true;
        }
        let info_cols: Vec<usize> = (0..n).filter(|&c| !is_pivot[c]).collect();
        let k = info_cols.len();
        let parity = m
            .iter()
            .map(|row| {
                let mut w = vec![0u64; k.div_ceil(64)];
                for (j, &c) in info_cols.iter().enumerate() {
                    if get(row, c) {
                        set(&mut w, j);
                    }
                }
                w
            })
            .collect();

        Self {
            n,
            pivot_cols,
            info_cols,
            parity,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Effective number of information bits, N_c − rank(H).
    pub fn k(&self) -> usize {
        self.info_cols.len()
    }

    pub fn rank(&self) -> usize {
        self.pivot_cols.len()
    }

    /// Codeword positions holding the information bits, in order.
    pub fn info_positions(&self) -> &[usize] {
        &self.info_cols
    }

    pub fn encode(&self, info: &[u8]) -> Result<Vec<u8>> {
        if info.len() != self.k() {
            return Err(Error::LengthMismatch {
                what: "information word",
                expected: self.k(),
                got: info.len(),
            });
        }
        let mut d = vec![0u64; self.k().div_ceil(64)];
        let mut cw = vec![0u8; self.n];
        for (j, (&bit, &c)) in info.iter().zip(&self.info_cols).enumerate() {
            if bit > 1 {
                return Err(Error::invalid(format!("information bit {j} is {bit}")));
            }
            if bit == 1 {
                set(&mut d, j);
                cw[c] = 1;
            }
        }
        for (row, &c) in self.parity.iter().zip(&self.pivot_cols) {
            let ones: u32 = row.iter().zip(&d).map(|(a, b)| (a & b).count_ones()).sum();
            cw[c] = (ones & 1) as u8;
        }
        Ok(cw)
    }

    pub fn extract_info(&self, codeword: &[u8]) -> Vec<u8> {
        self.info_cols.iter().map(|&c| codeword[c]).collect()
    }
}
