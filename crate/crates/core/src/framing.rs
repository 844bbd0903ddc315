//! BPSK mapping and frame assembly: preamble followed by coded data.

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{Role, StreamKey};

/// Frame layout. Only BPSK (M = 2) is implemented.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameConfig {
    pub n_preamble: usize,
    pub n_data: usize,
}

impl FrameConfig {
    pub const ALPHABET_SIZE: usize = 2;

    pub fn new(n_preamble: usize, n_data: usize) -> Self {
        Self { n_preamble, n_data }
    }

    /// Total frame length L = N_p + N_d.
    pub fn len(&self) -> usize {
        self.n_preamble + self.n_data
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Coded bits carried by the data part, N_d·log2(M).
    pub fn n_coded_bits(&self) -> usize {
        self.n_data
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub symbols: Vec<Complex64>,
    /// True on preamble (known) positions.
    pub preamble_mask: Vec<bool>,
}

impl Frame {
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn n_preamble(&self) -> usize {
        self.preamble_mask.iter().filter(|&&m| m).count()
    }
}

/// BPSK symbol for a bit: 0 → +1, 1 → −1.
pub fn bpsk_symbol(bit: u8) -> Complex64 {
    if bit == 0 {
        Complex64::new(1.0, 0.0)
    } else {
        Complex64::new(-1.0, 0.0)
    }
}

/// The BPSK alphabet in bit order: index 0 is +1 (bit 0), index 1 is −1.
pub const BPSK_ALPHABET: [f64; 2] = [1.0, -1.0];

pub fn modulate_bpsk(bits: &[u8]) -> Vec<Complex64> {
    bits.iter().map(|&b| bpsk_symbol(b)).collect()
}

/// Hard demapper sign(Re y).
pub fn demap_hard(symbols: &[Complex64]) -> Vec<u8> {
    symbols.iter().map(|s| u8::from(s.re < 0.0)).collect()
}

/// Seeded pseudo-random preamble bits.
pub fn generate_preamble(seed: u64, n: usize) -> Vec<u8> {
    let mut rng = StreamKey::new(seed, 0, 0, Role::Preamble).rng();
    (0..n).map(|_| rng.random_range(0..2u8)).collect()
}

pub fn build_frame(preamble_bits: &[u8], data_bits: &[u8], cfg: &FrameConfig) -> Result<Frame> {
    if preamble_bits.len() != cfg.n_preamble {
        return Err(Error::LengthMismatch {
            what: "preamble",
            expected: cfg.n_preamble,
            got: preamble_bits.len(),
        });
    }
    if data_bits.len() != cfg.n_data {
        return Err(Error::LengthMismatch {
            what: "data bits",
            expected: cfg.n_data,
            got: data_bits.len(),
        });
    }
    let mut symbols = modulate_bpsk(preamble_bits);
    symbols.extend(modulate_bpsk(data_bits));
    let mut preamble_mask = vec![true; cfg.n_preamble];
    preamble_mask.resize(cfg.len(), false);
    Ok(Frame {
        symbols,
        preamble_mask,
    })
}
