//! Transmit side: preamble, pilot grid, LDPC-coded QPSK payload and OFDM
//! modulation.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dsp::UnitaryDft;
use crate::error::{Error, Result};
use crate::grid::ComplexGrid;
use crate::ldpc::LdpcCode;
use crate::params::FrameConfig;

/// Salt mixed into the pilot seed for the filler bits that pad the frame
/// after the last codeword.
const FILLER_SALT: u64 = 0xf111_e7b1_75a1_7000;

/// Complex baseband samples at the nominal rate.
#[derive(Debug, Clone, PartialEq)]
pub struct IqStream {
    pub samples: Vec<Complex64>,
    pub nominal_rate: f64,
    /// Index of the first frame sample, when known.
    pub origin_index: Option<usize>,
}

impl IqStream {
    pub fn new(samples: Vec<Complex64>, nominal_rate: f64) -> Self {
        IqStream {
            samples,
            nominal_rate,
            origin_index: None,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn mean_power(&self) -> f64 {
        mean_power(&self.samples)
    }

    pub fn ensure_finite(&self) -> Result<()> {
        match self.samples.iter().position(|s| !s.re.is_finite() || !s.im.is_finite()) {
            Some(i) => Err(Error::Data(format!("non-finite sample at index {i}"))),
            None => Ok(()),
        }
    }
}

pub fn mean_power(x: &[Complex64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|v| v.norm_sqr()).sum::<f64>() / x.len() as f64
}

/// Classification of a resource element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ElementKind {
    ScPreamble,
    SfoPreamble,
    Pilot,
    Data,
}

/// True if payload element `(k, mp)` (payload-relative symbol index) is a pilot.
#[inline]
pub fn is_pilot(cfg: &FrameConfig, k: usize, mp: usize) -> bool {
    k % cfg.pilot_freq_spacing == 0 && mp % cfg.pilot_time_spacing == 0
}

/// Element class at subcarrier `k` of frame symbol `m`.
pub fn element_kind(cfg: &FrameConfig, k: usize, m: usize) -> ElementKind {
    if m < cfg.m_sc {
        ElementKind::ScPreamble
    } else if m < cfg.m_preamble() {
        ElementKind::SfoPreamble
    } else if is_pilot(cfg, k, m - cfg.m_preamble()) {
        ElementKind::Pilot
    } else {
        ElementKind::Data
    }
}

fn qpsk_point(b1: u8, b0: u8) -> Complex64 {
    Complex64::new(
        (1.0 - 2.0 * f64::from(b1 & 1)) * FRAC_1_SQRT_2,
        (1.0 - 2.0 * f64::from(b0 & 1)) * FRAC_1_SQRT_2,
    )
}

fn random_qpsk(rng: &mut ChaCha8Rng) -> Complex64 {
    let r: u8 = rng.random();
    qpsk_point(r >> 1, r)
}

/// Gray QPSK mapping of bit pairs `(b1, b0)`, unit average power.
pub fn map_qpsk(bits: &[u8]) -> Result<Vec<Complex64>> {
    if bits.len() % 2 != 0 {
        return Err(Error::Framing(format!(
            "QPSK needs an even number of bits, got {}",
            bits.len()
        )));
    }
    Ok(bits.chunks_exact(2).map(|p| qpsk_point(p[0], p[1])).collect())
}

/// Hard-decision QPSK demapping.
pub fn demap_qpsk_hard(symbols: &[Complex64]) -> Vec<u8> {
    symbols
        .iter()
        .flat_map(|s| [u8::from(s.re < 0.0), u8::from(s.im < 0.0)])
        .collect()
}

/// Known pilot values in payload order: pilot symbol `j`, pilot subcarrier `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotPattern {
    per_symbol: usize,
    values: Vec<Complex64>,
}

impl PilotPattern {
    pub fn new(cfg: &FrameConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.pilot_seed);
        let per_symbol = cfg.pilot_subcarriers();
        let values = (0..cfg.pilot_count()).map(|_| random_qpsk(&mut rng)).collect();
        PilotPattern { per_symbol, values }
    }

    /// Value of the `i`-th pilot subcarrier in the `j`-th pilot symbol.
    #[inline]
    pub fn value(&self, i: usize, j: usize) -> Complex64 {
        self.values[j * self.per_symbol + i]
    }
}

/// Frequency-domain preamble symbols plus the differential code of the
/// second Schmidl-Cox symbol (one entry per even subcarrier).
#[derive(Debug, Clone, PartialEq)]
pub struct Preamble {
    pub symbols: Vec<Vec<Complex64>>,
    pub sc_differential: Vec<Complex64>,
}

pub fn build_preamble(cfg: &FrameConfig) -> Preamble {
    let n = cfg.n_subcarriers;
    let zero = Complex64::new(0.0, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.preamble_seed);

    let c: Vec<Complex64> = (0..n / 2).map(|_| random_qpsk(&mut rng)).collect();
    let v: Vec<Complex64> = (0..n / 2).map(|_| random_qpsk(&mut rng)).collect();

    let mut first = vec![zero; n];
    let mut second = vec![zero; n];
    for i in 0..n / 2 {
        first[2 * i] = c[i] * std::f64::consts::SQRT_2;
        second[2 * i] = c[i] * v[i];
        second[2 * i + 1] = random_qpsk(&mut rng);
    }

    let mut symbols = Vec::with_capacity(cfg.m_preamble());
    symbols.push(first);
    symbols.push(second);
    // Extra S&C symbols beyond the first two carry plain PN content.
    for _ in 2..cfg.m_sc {
        symbols.push((0..n).map(|_| random_qpsk(&mut rng)).collect());
    }
    symbols.truncate(cfg.m_sc);
    for _ in 0..cfg.m_sfo / 2 {
        let s: Vec<Complex64> = (0..n).map(|_| random_qpsk(&mut rng)).collect();
        symbols.push(s.clone());
        symbols.push(s);
    }
    Preamble {
        symbols,
        sc_differential: v,
    }
}

/// Time-domain first S&C symbol without cyclic prefix.
pub fn sc_reference(cfg: &FrameConfig) -> Vec<Complex64> {
    let mut s = build_preamble(cfg).symbols.swap_remove(0);
    UnitaryDft::new(cfg.n_subcarriers).inverse(&mut s);
    s
}

/// Info bits and their systematic LDPC codewords.
#[derive(Debug, Clone, PartialEq)]
pub struct PayloadBits {
    pub info_bits: Vec<u8>,
    /// Concatenated codewords; the last block's info part is zero-padded.
    pub coded_bits: Vec<u8>,
    pub codeword_count: usize,
}

fn check_coding(cfg: &FrameConfig) -> Result<&'static LdpcCode> {
    let code = LdpcCode::rate_2_3();
    if cfg.bits_per_symbol != 2 || (cfg.code_rate - code.rate()).abs() > 1e-9 {
        return Err(Error::Framing(format!(
            "only QPSK with the rate-2/3 code is supported (bits_per_symbol {}, code_rate {})",
            cfg.bits_per_symbol, cfg.code_rate
        )));
    }
    Ok(code)
}

/// Whole codewords that fit into the data elements of one frame.
pub fn codeword_capacity(cfg: &FrameConfig) -> usize {
    cfg.data_capacity() * cfg.bits_per_symbol / LdpcCode::rate_2_3().n()
}

/// Maximum info bits per frame.
pub fn info_capacity(cfg: &FrameConfig) -> usize {
    codeword_capacity(cfg) * LdpcCode::rate_2_3().k()
}

pub fn encode_payload(info_bits: &[u8], cfg: &FrameConfig) -> Result<PayloadBits> {
    let code = check_coding(cfg)?;
    let max = info_capacity(cfg);
    if info_bits.len() > max {
        return Err(Error::Capacity {
            requested: info_bits.len(),
            max_info_bits: max,
        });
    }
    let k = code.k();
    let codeword_count = info_bits.len().div_ceil(k);
    let mut coded_bits = Vec::with_capacity(codeword_count * code.n());
    let mut block = vec![0u8; k];
    for chunk in info_bits.chunks(k) {
        block[..chunk.len()].copy_from_slice(chunk);
        block[chunk.len()..].fill(0);
        coded_bits.extend(code.encode(&block));
    }
    Ok(PayloadBits {
        info_bits: info_bits.iter().map(|b| b & 1).collect(),
        coded_bits,
        codeword_count,
    })
}

/// Pads coded bits with seeded filler so they occupy every data element.
pub fn frame_bits(cfg: &FrameConfig, coded_bits: &[u8]) -> Result<Vec<u8>> {
    let total = cfg.data_capacity() * cfg.bits_per_symbol;
    if coded_bits.len() > total {
        return Err(Error::Framing(format!(
            "{} coded bits exceed the {total} data bit slots",
            coded_bits.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.pilot_seed ^ FILLER_SALT);
    let mut bits = coded_bits.to_vec();
    bits.extend((coded_bits.len()..total).map(|_| rng.random_range(0..2u8)));
    Ok(bits)
}

/// Discrete-frequency frame: N rows, M = M_pb + M_pl columns.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameGrid {
    pub grid: ComplexGrid,
    pub cfg: FrameConfig,
}

impl FrameGrid {
    pub fn kind(&self, k: usize, m: usize) -> ElementKind {
        element_kind(&self.cfg, k, m)
    }

    /// Payload columns only.
    pub fn payload(&self) -> ComplexGrid {
        self.grid
            .column_range(self.cfg.m_preamble(), self.cfg.m_total())
    }

    pub fn count(&self, kind: ElementKind) -> usize {
        (0..self.grid.cols())
            .map(|m| (0..self.grid.rows()).filter(|&k| self.kind(k, m) == kind).count())
            .sum()
    }
}

/// Payload columns with pilots and the data symbols in column-major order.
pub fn payload_grid(cfg: &FrameConfig, data: &[Complex64]) -> Result<ComplexGrid> {
    if data.len() != cfg.data_capacity() {
        return Err(Error::Framing(format!(
            "expected {} payload symbols, got {}",
            cfg.data_capacity(),
            data.len()
        )));
    }
    let pilots = PilotPattern::new(cfg);
    let mut next = data.iter();
    Ok(ComplexGrid::from_fn(cfg.n_subcarriers, cfg.m_payload, |k, mp| {
        if is_pilot(cfg, k, mp) {
            pilots.value(k / cfg.pilot_freq_spacing, mp / cfg.pilot_time_spacing)
        } else {
            *next.next().expect("count checked")
        }
    }))
}

pub fn assemble_frame(cfg: &FrameConfig, payload_symbols: &[Complex64]) -> Result<FrameGrid> {
    cfg.ensure_valid()?;
    let payload = payload_grid(cfg, payload_symbols)?;
    let preamble = build_preamble(cfg);
    let columns = preamble
        .symbols
        .into_iter()
        .chain(payload.columns().map(<[Complex64]>::to_vec));
    Ok(FrameGrid {
        grid: ComplexGrid::from_columns(cfg.n_subcarriers, columns),
        cfg: cfg.clone(),
    })
}

/// Per-column unitary IDFT with cyclic prefix, columns concatenated.
pub fn ofdm_modulate(grid: &ComplexGrid, cp_len: usize) -> Vec<Complex64> {
    let n = grid.rows();
    let dft = UnitaryDft::new(n);
    let mut out = Vec::with_capacity((n + cp_len) * grid.cols());
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for col in grid.columns() {
        buf.copy_from_slice(col);
        dft.inverse(&mut buf);
        out.extend_from_slice(&buf[n - cp_len..]);
        out.extend_from_slice(&buf);
    }
    out
}

/// Inverse of [`ofdm_modulate`]: drops each cyclic prefix and applies a unitary DFT.
pub fn ofdm_demodulate(samples: &[Complex64], n: usize, cp_len: usize) -> Result<ComplexGrid> {
    let len = n + cp_len;
    if samples.len() % len != 0 {
        return Err(Error::Framing(format!(
            "{} samples is not a whole number of {len}-sample symbols",
            samples.len()
        )));
    }
    let dft = UnitaryDft::new(n);
    let mut grid = ComplexGrid::zeros(n, samples.len() / len);
    for (m, sym) in samples.chunks_exact(len).enumerate() {
        let col = grid.column_mut(m);
        col.copy_from_slice(&sym[cp_len..]);
        dft.forward(col);
    }
    Ok(grid)
}

pub fn modulate(frame: &FrameGrid) -> IqStream {
    IqStream {
        samples: ofdm_modulate(&frame.grid, frame.cfg.cp_len),
        nominal_rate: frame.cfg.bandwidth_hz,
        origin_index: Some(0),
    }
}

/// Everything produced on the transmit side for one frame.
#[derive(Debug, Clone)]
pub struct TxFrame {
    pub payload: PayloadBits,
    pub frame: FrameGrid,
    pub stream: IqStream,
}

pub fn transmit(cfg: &FrameConfig, info_bits: &[u8]) -> Result<TxFrame> {
    cfg.ensure_valid()?;
    let payload = encode_payload(info_bits, cfg)?;
    let symbols = map_qpsk(&frame_bits(cfg, &payload.coded_bits)?)?;
    let frame = assemble_frame(cfg, &symbols)?;
    let stream = modulate(&frame);
    Ok(TxFrame {
        payload,
        frame,
        stream,
    })
}

/// Seeded uniformly random info bits.
pub fn random_bits(count: usize, seed: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| rng.random_range(0..2u8)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> FrameConfig {
        FrameConfig {
            n_subcarriers: 256,
            cp_len: 64,
            m_payload: 64,
            ..FrameConfig::short_pl()
        }
    }

    #[test]
    fn qpsk_definition() {
        let s = map_qpsk(&[0, 0, 0, 1, 1, 0, 1, 1]).unwrap();
        let r = FRAC_1_SQRT_2;
        assert_eq!(s[0], Complex64::new(r, r));
        assert_eq!(s[1], Complex64::new(r, -r));
        assert_eq!(s[2], Complex64::new(-r, r));
        assert_eq!(s[3], Complex64::new(-r, -r));
        let mean: Complex64 = s.iter().sum::<Complex64>() / 4.0;
        assert!(mean.norm() < 1e-15);
        assert!((mean_power(&s) - 1.0).abs() < 1e-15);
        assert!(map_qpsk(&[1, 0, 1]).is_err());
    }

    #[test]
    fn preamble_structure() {
        let cfg = small();
        let p = build_preamble(&cfg);
        assert_eq!(p.symbols.len(), 12);
        for pair in p.symbols[2..].chunks(2) {
            assert_eq!(pair[0], pair[1]);
        }
        assert_ne!(p.symbols[2], p.symbols[4]);
        assert!(p.symbols[0].iter().skip(1).step_by(2).all(|v| v.norm() == 0.0));
        for s in &p.symbols {
            assert!((mean_power(s) - 1.0).abs() < 1e-12);
        }
        let t = sc_reference(&cfg);
        let h = cfg.n_subcarriers / 2;
        for i in 0..h {
            assert!((t[i] - t[i + h]).norm() < 1e-12);
        }
        assert_eq!(build_preamble(&cfg), p);
    }

    #[test]
    fn frame_length_and_cp() {
        let cfg = small();
        let bits = random_bits(info_capacity(&cfg), 1);
        let tx = transmit(&cfg, &bits).unwrap();
        assert_eq!(tx.stream.len(), cfg.frame_len());
        let l = cfg.symbol_len();
        for sym in tx.stream.samples.chunks(l) {
            for i in 0..cfg.cp_len {
                assert_eq!(sym[i], sym[i + cfg.n_subcarriers]);
            }
        }
        let back = ofdm_demodulate(&tx.stream.samples, cfg.n_subcarriers, cfg.cp_len).unwrap();
        assert!(back.max_relative_error(&tx.frame.grid) < 1e-10);
    }

    #[test]
    fn masks_partition_grid() {
        let cfg = small();
        let tx = transmit(&cfg, &[]).unwrap();
        let f = &tx.frame;
        let total: usize = [
            ElementKind::ScPreamble,
            ElementKind::SfoPreamble,
            ElementKind::Pilot,
            ElementKind::Data,
        ]
        .iter()
        .map(|&k| f.count(k))
        .sum();
        assert_eq!(total, cfg.n_subcarriers * cfg.m_total());
        assert_eq!(f.count(ElementKind::Pilot), cfg.pilot_count());
        assert_eq!(f.count(ElementKind::Data), cfg.data_capacity());
    }

    #[test]
    fn capacity_error_reports_limit() {
        let cfg = small();
        let max = info_capacity(&cfg);
        match encode_payload(&vec![0; max + 1], &cfg) {
            Err(Error::Capacity { max_info_bits, .. }) => assert_eq!(max_info_bits, max),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn short_block_is_zero_padded() {
        let cfg = small();
        let code = LdpcCode::rate_2_3();
        let bits = random_bits(1000, 2);
        let p = encode_payload(&bits, &cfg).unwrap();
        assert_eq!(p.codeword_count, 1);
        assert_eq!(&p.coded_bits[..1000], &bits[..]);
        assert!(p.coded_bits[1000..code.k()].iter().all(|&b| b == 0));
        assert!(code.is_codeword(&p.coded_bits));
    }
}
