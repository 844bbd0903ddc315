//! GF(2) LDPC codes: parity-check matrices, systematic encoding and
//! sum-product decoding.

mod alist;
mod decoder;
mod encoder;
pub mod peg;

use std::path::Path;

pub use alist::{parse_alist, write_alist};
pub use decoder::{BitBeliefs, Decoder, DEFAULT_MAX_ITERS, LLR_CLIP};
pub use encoder::Encoder;

use crate::error::{Error, Result};

/// Sparse binary parity-check matrix stored as row and column adjacency.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParityCheckMatrix {
    n_rows: usize,
    n_cols: usize,
    rows: Vec<Vec<usize>>,
    cols: Vec<Vec<usize>>,
}

impl ParityCheckMatrix {
    /// Builds a matrix from per-row column indices (0-based).
    pub fn from_rows(n_cols: usize, rows: Vec<Vec<usize>>) -> Result<Self> {
        let n_rows = rows.len();
        let mut cols = vec![Vec::new(); n_cols];
        for (r, row) in rows.iter().enumerate() {
            for &c in row {
                if c >= n_cols {
                    return Err(Error::invalid(format!(
                        "row {r}: column index {c} out of range (n_cols = {n_cols})"
                    )));
                }
                if cols[c].last() == Some(&r) {
                    return Err(Error::invalid(format!("row {r}: duplicate column {c}")));
                }
                cols[c].push(r);
            }
        }
        let mut rows = rows;
        for row in rows.iter_mut() {
            row.sort_unstable();
            if row.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::invalid("duplicate edge within a row"));
            }
        }
        Ok(Self {
            n_rows,
            n_cols,
            rows,
            cols,
        })
    }

    /// Builds a matrix from a dense 0/1 row-major description.
    pub fn from_dense(dense: &[Vec<u8>]) -> Result<Self> {
        let n_cols = dense.first().map_or(0, Vec::len);
        let rows = dense
            .iter()
            .map(|r| {
                if r.len() != n_cols {
                    return Err(Error::LengthMismatch {
                        what: "dense row",
                        expected: n_cols,
                        got: r.len(),
                    });
                }
                Ok(r.iter()
                    .enumerate()
                    .filter(|(_, &b)| b != 0)
                    .map(|(c, _)| c)
                    .collect())
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_rows(n_cols, rows)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.rows
    }

    pub fn cols(&self) -> &[Vec<usize>] {
        &self.cols
    }

    pub fn n_edges(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn to_dense(&self) -> Vec<Vec<u8>> {
        let mut d = vec![vec![0u8; self.n_cols]; self.n_rows];
        for (r, row) in self.rows.iter().enumerate() {
            for &c in row {
                d[r][c] = 1;
            }
        }
        d
    }

    /// True when every check is satisfied by `bits`.
    pub fn syndrome_ok(&self, bits: &[u8]) -> bool {
        self.rows
            .iter()
            .all(|row| row.iter().fold(0u8, |acc, &c| acc ^ (bits[c] & 1)) == 0)
    }
}

/// A parity-check matrix together with its systematic encoder.
#[derive(Debug, Clone)]
pub struct LdpcCode {
    h: ParityCheckMatrix,
    encoder: Encoder,
    decoder: Decoder,
}

impl LdpcCode {
    pub fn new(h: ParityCheckMatrix) -> Self {
        let encoder = Encoder::new(&h);
        let decoder = Decoder::new(&h);
        Self {
            h,
            encoder,
            decoder,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self::new(load_alist(path)?))
    }

    pub fn h(&self) -> &ParityCheckMatrix {
        &self.h
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn decoder(&self) -> &Decoder {
        &self.decoder
    }

    /// Coded length N_c.
    pub fn n(&self) -> usize {
        self.h.n_cols()
    }

    /// Effective information length K = N_c − rank(H).
    pub fn k(&self) -> usize {
        self.encoder.k()
    }

    pub fn encode(&self, info: &[u8]) -> Result<Vec<u8>> {
        self.encoder.encode(info)
    }

    pub fn decode(&self, llrs: &[f64], max_iters: usize) -> BitBeliefs {
        self.decoder.decode(llrs, max_iters)
    }

    pub fn extract_info(&self, codeword: &[u8]) -> Vec<u8> {
        self.encoder.extract_info(codeword)
    }
}

pub fn load_alist(path: impl AsRef<Path>) -> Result<ParityCheckMatrix> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_alist(&text)
}

/// Regular (3,6) PEG code with 252 checks and 504 bits, generated by
/// [`peg::build`] and shipped with the crate. Used whenever no alist path is
/// configured; results obtained with it are marked code-substituted.
pub const BUNDLED_PEG_ALIST: &str = include_str!("../../fixtures/peg_3_6_252x504.alist");

pub fn bundled_code() -> LdpcCode {
    LdpcCode::new(parse_alist(BUNDLED_PEG_ALIST).expect("bundled alist is well-formed"))
}
