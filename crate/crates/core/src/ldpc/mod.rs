//! Quasi-cyclic LDPC code: parity-check structure, systematic encoder and a
//! layered belief-propagation decoder.
//!
//! The shipped code is the rate-2/3, n = 1944 quasi-cyclic code with lifting
//! size 81. Its base matrix lives in `r23_n1944_z81.txt`.

mod decoder;

use std::sync::OnceLock;

pub use decoder::DecodeOutcome;

const R23_N1944: &str = include_str!("r23_n1944_z81.txt");

/// A binary LDPC code described by its sparse parity-check matrix.
#[derive(Debug, Clone)]
pub struct LdpcCode {
    n: usize,
    k: usize,
    /// Variable indices of every check, in check order.
    checks: Vec<Vec<usize>>,
    /// Dense inverse of the parity part of H, one bit-row per parity bit.
    parity_inverse: Vec<Vec<u64>>,
}

impl LdpcCode {
    /// The rate-2/3 code of length 1944 used for all payloads.
    pub fn rate_2_3() -> &'static LdpcCode {
        static CODE: OnceLock<LdpcCode> = OnceLock::new();
        CODE.get_or_init(|| {
            LdpcCode::from_base_matrix(R23_N1944, 81).expect("shipped base matrix is valid")
        })
    }

    /// Builds a code from a textual base matrix and lifting size. The last
    /// `rows` block columns are taken as the parity part and must be
    /// invertible over GF(2).
    pub fn from_base_matrix(text: &str, z: usize) -> Result<LdpcCode, String> {
        let base: Vec<Vec<Option<usize>>> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| {
                l.split_whitespace()
                    .map(|t| {
                        if t == "-" {
                            Ok(None)
                        } else {
                            t.parse::<usize>()
                                .map(|s| Some(s % z))
                                .map_err(|e| format!("bad shift {t:?}: {e}"))
                        }
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<_, _>>()?;
        let mb = base.len();
        let nb = base.first().map_or(0, Vec::len);
        if mb == 0 || nb <= mb || base.iter().any(|r| r.len() != nb) {
            return Err("base matrix must be rectangular with more columns than rows".into());
        }
        let n = nb * z;
        let m = mb * z;
        let k = n - m;

        let mut checks = Vec::with_capacity(m);
        for row in &base {
            for r in 0..z {
                let vars = row
                    .iter()
                    .enumerate()
                    .filter_map(|(j, s)| s.map(|s| j * z + (r + s) % z))
                    .collect();
                checks.push(vars);
            }
        }

        let words = m.div_ceil(64);
        // Parity part of H as dense rows, augmented with the identity.
        let mut a: Vec<Vec<u64>> = checks
            .iter()
            .map(|vars: &Vec<usize>| {
                let mut row = vec![0u64; words];
                for &v in vars.iter().filter(|&&v| v >= k) {
                    let c = v - k;
                    row[c / 64] ^= 1 << (c % 64);
                }
                row
            })
            .collect();
        let mut inv: Vec<Vec<u64>> = (0..m)
            .map(|i| {
                let mut row = vec![0u64; words];
                row[i / 64] |= 1 << (i % 64);
                row
            })
            .collect();
        for col in 0..m {
            let (w, b) = (col / 64, 1u64 << (col % 64));
            let pivot = (col..m)
                .find(|&r| a[r][w] & b != 0)
                .ok_or_else(|| "parity part of H is singular".to_string())?;
            a.swap(col, pivot);
            inv.swap(col, pivot);
            for r in 0..m {
                if r != col && a[r][w] & b != 0 {
                    for i in 0..words {
                        let (src_a, src_i) = (a[col][i], inv[col][i]);
                        a[r][i] ^= src_a;
                        inv[r][i] ^= src_i;
                    }
                }
            }
        }

        Ok(LdpcCode {
            n,
            k,
            checks,
            parity_inverse: inv,
        })
    }

    /// Codeword length.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Information bits per codeword.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn rate(&self) -> f64 {
        self.k as f64 / self.n as f64
    }

    pub fn checks(&self) -> &[Vec<usize>] {
        &self.checks
    }

    /// Systematic encoding: the codeword is `info` followed by parity bits.
    pub fn encode(&self, info: &[u8]) -> Vec<u8> {
        assert_eq!(info.len(), self.k, "info block must hold k bits");
        let m = self.n - self.k;
        let words = m.div_ceil(64);
        let mut syndrome = vec![0u64; words];
        for (c, vars) in self.checks.iter().enumerate() {
            let bit = vars
                .iter()
                .filter(|&&v| v < self.k)
                .fold(0u8, |acc, &v| acc ^ (info[v] & 1));
            if bit != 0 {
                syndrome[c / 64] |= 1 << (c % 64);
            }
        }
        let mut word = Vec::with_capacity(self.n);
        word.extend(info.iter().map(|b| b & 1));
        word.extend(self.parity_inverse.iter().map(|row| {
            let ones: u32 = row
                .iter()
                .zip(&syndrome)
                .map(|(a, s)| (a & s).count_ones())
                .sum();
            (ones & 1) as u8
        }));
        word
    }

    /// True when every parity check is satisfied.
    pub fn is_codeword(&self, word: &[u8]) -> bool {
        word.len() == self.n
            && self
                .checks
                .iter()
                .all(|vars| vars.iter().fold(0u8, |acc, &v| acc ^ (word[v] & 1)) == 0)
    }

    /// Belief-propagation decoding of channel LLRs (positive favours bit 0).
    pub fn decode(&self, llrs: &[f64], max_iterations: usize) -> DecodeOutcome {
        decoder::decode_layered(self, llrs, max_iterations)
    }
}
