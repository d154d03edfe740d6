//! Communication receiver: OFDM demodulation, pilot-aided main-path Doppler
//! correction, CFR interpolation, residual SFO alignment, zero-forcing
//! equalization and LDPC decoding.

use std::f64::consts::{PI, SQRT_2};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dsp::{parabolic_offset, signed_bin, weighted_line_fit, UnitaryDft};
use crate::error::{Error, Result, Stage};
use crate::grid::ComplexGrid;
use crate::ldpc::LdpcCode;
use crate::params::FrameConfig;
use crate::tx::{self, is_pilot, IqStream, PilotPattern};

/// Minimum strongest-tap level over the CIR median for Doppler tracking.
pub const MIN_MAIN_TAP_DB: f64 = 6.0;
/// Zero-padding factor of the pilot CIRs used for delay tracking.
pub const CIR_ZERO_PAD: usize = 4;
/// |Ĥ| below this marks an element as erased.
const ERASURE_LEVEL: f64 = 1e-6;
const NOISE_FLOOR: f64 = 1e-10;
/// Pilot subcarriers on each side averaged into a noise estimate.
const NOISE_SMOOTHING: usize = 4;

/// Demodulated payload, `N × M_pl`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedGrid {
    pub grid: ComplexGrid,
    pub cfg: FrameConfig,
}

pub fn demodulate_frame(payload: &IqStream, cfg: &FrameConfig) -> Result<ReceivedGrid> {
    let expected = cfg.symbol_len() * cfg.m_payload;
    if payload.len() != expected {
        return Err(Error::Framing(format!(
            "payload stream has {} samples, expected {expected}",
            payload.len()
        ))
        .at(Stage::Demodulation));
    }
    let grid = tx::ofdm_demodulate(&payload.samples, cfg.n_subcarriers, cfg.cp_len)
        .map_err(|e| e.at(Stage::Demodulation))?;
    Ok(ReceivedGrid {
        grid,
        cfg: cfg.clone(),
    })
}

/// Least-squares channel estimates at the pilots, `N/ΔN_pil × M_pl/ΔM_pil`.
pub fn pilot_estimates(rg: &ReceivedGrid) -> ComplexGrid {
    let cfg = &rg.cfg;
    let pilots = PilotPattern::new(cfg);
    ComplexGrid::from_fn(cfg.pilot_subcarriers(), cfg.pilot_symbols(), |i, j| {
        rg.grid.get(i * cfg.pilot_freq_spacing, j * cfg.pilot_time_spacing) / pilots.value(i, j)
    })
}

/// Zero-padded impulse response of one frequency-domain column, with the
/// spectrum split at its midpoint so that delays come out symmetric.
/// Output bin `q` corresponds to delay `q / zero_pad` in units of the
/// original inverse-DFT bins; the upper half holds negative delays.
pub fn padded_cir(column: &[Complex64], zero_pad: usize, dft: &UnitaryDft) -> Vec<Complex64> {
    let n = column.len();
    let len = n * zero_pad;
    debug_assert_eq!(dft.len(), len);
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    let half = n / 2;
    buf[..half].copy_from_slice(&column[..half]);
    buf[len - (n - half)..].copy_from_slice(&column[half..]);
    dft.inverse(&mut buf);
    buf
}

/// Signed delay of padded-CIR bin `q`.
#[inline]
pub fn padded_delay(q: usize, len: usize, zero_pad: usize) -> f64 {
    signed_bin(q, len) / zero_pad as f64
}

/// Strongest tap of a padded CIR: (bin, parabolic delay, complex value, power).
fn strongest(cir: &[Complex64], zero_pad: usize) -> (usize, f64, Complex64, f64) {
    let len = cir.len();
    let (q, p) = cir
        .iter()
        .map(|v| v.norm_sqr())
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty CIR");
    let l = cir[(q + len - 1) % len].norm();
    let r = cir[(q + 1) % len].norm();
    let off = parabolic_offset(l, cir[q].norm(), r);
    (q, padded_delay(q, len, zero_pad) + off / zero_pad as f64, cir[q], p)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Main-path Doppler estimate and the de-rotated grid.
pub fn estimate_main_doppler(rg: &ReceivedGrid) -> Result<(f64, ReceivedGrid)> {
    let f = main_doppler(rg).map_err(|e| e.at(Stage::DopplerEstimation))?;
    let mut out = rg.clone();
    derotate_columns(&mut out.grid, &rg.cfg, f);
    Ok((f, out))
}

fn derotate_columns(grid: &mut ComplexGrid, cfg: &FrameConfig, f: f64) {
    if f == 0.0 {
        return;
    }
    let step = f * cfg.symbol_len() as f64 * cfg.sample_period();
    for m in 0..grid.cols() {
        let r = Complex64::from_polar(1.0, -2.0 * PI * (step * m as f64).fract());
        grid.column_mut(m).iter_mut().for_each(|v| *v *= r);
    }
}

fn main_doppler(rg: &ReceivedGrid) -> Result<f64> {
    let cfg = &rg.cfg;
    let pilots = pilot_estimates(rg);
    let np = pilots.rows();
    let dft = UnitaryDft::new(np * CIR_ZERO_PAD);
    let mut taps = Vec::with_capacity(pilots.cols());
    let (mut peak_sum, mut median_sum) = (0.0, 0.0);
    for col in pilots.columns() {
        let cir = padded_cir(col, CIR_ZERO_PAD, &dft);
        let (_, _, value, p) = strongest(&cir, CIR_ZERO_PAD);
        peak_sum += p;
        // The padded response is oversampled; the median uses the native bins.
        median_sum += median(cir.iter().step_by(CIR_ZERO_PAD).map(|v| v.norm_sqr()).collect());
        taps.push(value);
    }
    let ratio_db = 10.0 * (peak_sum / median_sum.max(f64::MIN_POSITIVE)).log10();
    if !(ratio_db >= MIN_MAIN_TAP_DB) {
        return Err(Error::WeakMainPath {
            peak_over_median_db: ratio_db,
        });
    }
    let dt = cfg.pilot_time_spacing as f64 * cfg.symbol_len() as f64 * cfg.sample_period();
    if taps.len() < 2 {
        return Ok(0.0);
    }
    let lag: Complex64 = taps.windows(2).map(|w| w[1] * w[0].conj()).sum();
    let f0 = lag.arg() / (2.0 * PI * dt);
    // Refine with a line fit to the residual phase after removing f0.
    let mut unwrapped = 0.0;
    let mut prev = 0.0;
    let mut pts = Vec::with_capacity(taps.len());
    for (j, h) in taps.iter().enumerate() {
        let ph = (h * Complex64::from_polar(1.0, -2.0 * PI * f0 * dt * j as f64)).arg();
        if j > 0 {
            let mut d = ph - prev;
            d -= 2.0 * PI * (d / (2.0 * PI)).round();
            unwrapped += d;
        } else {
            unwrapped = ph;
        }
        prev = ph;
        pts.push((j as f64, unwrapped, h.norm_sqr()));
    }
    let slope = weighted_line_fit(pts).map_or(0.0, |(_, b)| b);
    Ok(f0 + slope / (2.0 * PI * dt))
}

/// Where a CFR entry came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CfrSource {
    Measured,
    Interpolated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CfrEstimate {
    pub cfr: ComplexGrid,
    /// Least-squares estimates at the pilots.
    pub pilots: ComplexGrid,
    pub main_doppler_hat: f64,
    /// Main-path delay drift in seconds per payload symbol.
    pub delay_slope_hat: f64,
}

impl CfrEstimate {
    pub fn source(&self, cfg: &FrameConfig, k: usize, mp: usize) -> CfrSource {
        if is_pilot(cfg, k, mp) {
            CfrSource::Measured
        } else {
            CfrSource::Interpolated
        }
    }
}

/// Bilinear CFR interpolation: along frequency within each pilot symbol
/// (the subcarrier axis wraps), then along time with the last pilot symbol
/// held to the frame end.
pub fn interpolate_cfr(pilots: &ComplexGrid, cfg: &FrameConfig) -> ComplexGrid {
    let n = cfg.n_subcarriers;
    let (dn, dm) = (cfg.pilot_freq_spacing, cfg.pilot_time_spacing);
    let np = pilots.rows();
    let freq = ComplexGrid::from_fn(n, pilots.cols(), |k, j| {
        let i0 = k / dn;
        let a = (k % dn) as f64 / dn as f64;
        let v0 = pilots.get(i0, j);
        if a == 0.0 {
            v0
        } else {
            v0 * (1.0 - a) + pilots.get((i0 + 1) % np, j) * a
        }
    });
    let last = pilots.cols() - 1;
    ComplexGrid::from_fn(n, cfg.m_payload, |k, m| {
        let j0 = (m / dm).min(last);
        let a = (m - j0 * dm) as f64 / dm as f64;
        let v0 = freq.get(k, j0);
        if a == 0.0 || j0 == last {
            v0
        } else {
            v0 * (1.0 - a) + freq.get(k, j0 + 1) * a
        }
    })
}

pub fn estimate_cfr(rg: &ReceivedGrid, main_doppler_hat: f64) -> CfrEstimate {
    let pilots = pilot_estimates(rg);
    CfrEstimate {
        cfr: interpolate_cfr(&pilots, &rg.cfg),
        pilots,
        main_doppler_hat,
        delay_slope_hat: 0.0,
    }
}

/// Main-tap delay track of the pilot symbols and its line fit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DelayTrack {
    /// (payload symbol, main-tap delay in samples) per pilot symbol.
    pub delays: Vec<(usize, f64)>,
    pub intercept: f64,
    /// Samples per payload symbol.
    pub slope: f64,
    pub residual_rms: f64,
}

/// Main-path delay of every pilot symbol from its zero-padded CIR.
pub fn track_main_delay(pilots: &ComplexGrid, cfg: &FrameConfig) -> DelayTrack {
    let np = pilots.rows();
    let dft = UnitaryDft::new(np * CIR_ZERO_PAD);
    let mut pts = Vec::with_capacity(pilots.cols());
    for (j, col) in pilots.columns().enumerate() {
        let cir = padded_cir(col, CIR_ZERO_PAD, &dft);
        let (_, d, _, p) = strongest(&cir, CIR_ZERO_PAD);
        // Pilot CIR bins are one sample apart.
        pts.push(((j * cfg.pilot_time_spacing) as f64, d, p));
    }
    let (intercept, slope) = weighted_line_fit(pts.iter().copied()).unwrap_or_else(|| {
        let d = pts.first().map_or(0.0, |p| p.1);
        (d, 0.0)
    });
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    let residual_rms = if sw > 0.0 {
        (pts.iter().map(|p| p.2 * (p.1 - intercept - slope * p.0).powi(2)).sum::<f64>() / sw).sqrt()
    } else {
        0.0
    };
    DelayTrack {
        delays: pts.iter().map(|p| (p.0 as usize, p.1)).collect(),
        intercept,
        slope,
        residual_rms,
    }
}

/// Outcome of the residual SFO alignment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualSfo {
    pub track: DelayTrack,
    pub applied: bool,
    /// The delay fit residual exceeded the warning level.
    pub warning: bool,
}

/// Fit residual (samples RMS) above which the alignment is flagged.
pub const RESIDUAL_WARNING_SAMPLES: f64 = 0.5;

fn rotate_delay_drift(grid: &mut ComplexGrid, slope: f64, time_step: usize) {
    let n = grid.rows();
    for col in 0..grid.cols() {
        let shift = slope * (col * time_step) as f64;
        for (k, v) in grid.column_mut(col).iter_mut().enumerate() {
            *v *= Complex64::from_polar(1.0, 2.0 * PI * signed_bin(k, n) * shift / n as f64);
        }
    }
}

/// Aligns the payload symbols on the main-path delay of the first one by
/// undoing the fitted linear drift as per-subcarrier phase ramps.
pub fn compensate_residual_sfo(rg: &ReceivedGrid, est: &CfrEstimate) -> (ReceivedGrid, CfrEstimate, ResidualSfo) {
    let cfg = &rg.cfg;
    let track = track_main_delay(&est.pilots, cfg);
    let mut out = rg.clone();
    let mut est = est.clone();
    rotate_delay_drift(&mut out.grid, track.slope, 1);
    rotate_delay_drift(&mut est.cfr, track.slope, 1);
    // Pilot columns sit every ΔM_pil symbols, and their subcarrier index is
    // k = i·ΔN_pil, which the ramp must see.
    let n = cfg.n_subcarriers;
    for j in 0..est.pilots.cols() {
        let shift = track.slope * (j * cfg.pilot_time_spacing) as f64;
        for i in 0..est.pilots.rows() {
            let k = i * cfg.pilot_freq_spacing;
            *est.pilots.get_mut(i, j) *= Complex64::from_polar(1.0, 2.0 * PI * signed_bin(k, n) * shift / n as f64);
        }
    }
    est.delay_slope_hat = track.slope * cfg.sample_period();
    let warning = track.residual_rms > RESIDUAL_WARNING_SAMPLES;
    (
        out,
        est,
        ResidualSfo {
            track,
            applied: true,
            warning,
        },
    )
}

/// Zero-forced data symbols with per-symbol post-equalization noise variance.
#[derive(Debug, Clone, PartialEq)]
pub struct Equalized {
    pub symbols: Vec<Complex64>,
    pub noise_var: Vec<f64>,
    pub erased: Vec<bool>,
    /// Noise variance per subcarrier before equalization.
    pub subcarrier_noise: Vec<f64>,
}

/// Per-subcarrier noise variance from leave-one-out pilot prediction errors.
pub fn pilot_noise_variance(pilots: &ComplexGrid, cfg: &FrameConfig) -> Vec<f64> {
    let (np, mp) = (pilots.rows(), pilots.cols());
    let raw: Vec<f64> = (0..np)
        .map(|i| {
            let mut acc = 0.0;
            let mut count = 0usize;
            if mp >= 3 {
                for j in 1..mp - 1 {
                    let pred = (pilots.get(i, j - 1) + pilots.get(i, j + 1)) * 0.5;
                    acc += (pilots.get(i, j) - pred).norm_sqr();
                    count += 1;
                }
            } else if np >= 3 {
                for j in 0..mp {
                    let pred = (pilots.get((i + np - 1) % np, j) + pilots.get((i + 1) % np, j)) * 0.5;
                    acc += (pilots.get(i, j) - pred).norm_sqr();
                    count += 1;
                }
            }
            // The prediction error carries 1 + 1/2 noise variances.
            if count == 0 {
                NOISE_FLOOR
            } else {
                acc / count as f64 / 1.5
            }
        })
        .collect();
    let smoothed: Vec<f64> = (0..np)
        .map(|i| {
            let w = NOISE_SMOOTHING.min(np / 2);
            let sum: f64 = (0..=2 * w).map(|o| raw[(i + np + o - w) % np]).sum();
            (sum / (2 * w + 1) as f64).max(NOISE_FLOOR)
        })
        .collect();
    let n = cfg.n_subcarriers;
    let dn = cfg.pilot_freq_spacing;
    (0..n)
        .map(|k| smoothed[((k + dn / 2) / dn) % np])
        .collect()
}

/// Data elements of the payload grid in column-major order.
pub fn data_positions(cfg: &FrameConfig) -> impl Iterator<Item = (usize, usize)> + '_ {
    (0..cfg.m_payload).flat_map(move |m| {
        (0..cfg.n_subcarriers)
            .filter(move |&k| !is_pilot(cfg, k, m))
            .map(move |k| (k, m))
    })
}

pub fn equalize(rg: &ReceivedGrid, est: &CfrEstimate) -> Equalized {
    let cfg = &rg.cfg;
    let subcarrier_noise = pilot_noise_variance(&est.pilots, cfg);
    let cap = cfg.data_capacity();
    let mut symbols = Vec::with_capacity(cap);
    let mut noise_var = Vec::with_capacity(cap);
    let mut erased = Vec::with_capacity(cap);
    for (k, m) in data_positions(cfg) {
        let h = est.cfr.get(k, m);
        let hn = h.norm_sqr();
        if h.norm() < ERASURE_LEVEL || !hn.is_finite() {
            symbols.push(Complex64::new(0.0, 0.0));
            noise_var.push(f64::INFINITY);
            erased.push(true);
        } else {
            symbols.push(rg.grid.get(k, m) / h);
            noise_var.push(subcarrier_noise[k] / hn);
            erased.push(false);
        }
    }
    Equalized {
        symbols,
        noise_var,
        erased,
        subcarrier_noise,
    }
}

/// QPSK LLRs (positive favours bit 0); erased symbols give zero.
pub fn qpsk_llrs(eq: &Equalized) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * eq.symbols.len());
    for ((s, &v), &e) in eq.symbols.iter().zip(&eq.noise_var).zip(&eq.erased) {
        if e || !v.is_finite() {
            out.extend([0.0, 0.0]);
        } else {
            let scale = 2.0 * SQRT_2 / v;
            out.extend([scale * s.re, scale * s.im]);
        }
    }
    out
}

/// Decoder output for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub info_bits: Vec<u8>,
    pub codewords: Vec<Vec<u8>>,
    pub converged: Vec<bool>,
    pub iterations: Vec<usize>,
}

pub fn decode_payload(llrs: &[f64], cfg: &FrameConfig, info_len: usize, max_iterations: usize) -> Result<Decoded> {
    let code = LdpcCode::rate_2_3();
    let max = tx::info_capacity(cfg);
    if info_len > max {
        return Err(Error::Capacity {
            requested: info_len,
            max_info_bits: max,
        }
        .at(Stage::Decoding));
    }
    let count = info_len.div_ceil(code.k());
    if llrs.len() < count * code.n() {
        return Err(Error::Framing("fewer LLRs than coded bits".into()).at(Stage::Decoding));
    }
    let mut info_bits = Vec::with_capacity(count * code.k());
    let mut codewords = Vec::with_capacity(count);
    let mut converged = Vec::with_capacity(count);
    let mut iterations = Vec::with_capacity(count);
    for block in llrs.chunks_exact(code.n()).take(count) {
        let out = code.decode(block, max_iterations);
        info_bits.extend_from_slice(&out.codeword[..code.k()]);
        codewords.push(out.codeword);
        converged.push(out.converged);
        iterations.push(out.iterations);
    }
    info_bits.truncate(info_len);
    Ok(Decoded {
        info_bits,
        codewords,
        converged,
        iterations,
    })
}

/// 2-D histogram of equalized symbols over `[-2, 2]²`, log-normalized to its
/// peak: `ln(1 + count) / ln(1 + max count)`, so empty bins are 0 and the peak 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstellationHistogram {
    pub bins: usize,
    pub half_range: f64,
    /// Row-major over (in-phase bin, quadrature bin).
    pub density: Vec<f64>,
}

impl ConstellationHistogram {
    pub const BINS: usize = 201;
    pub const HALF_RANGE: f64 = 2.0;

    pub fn from_symbols<'a>(symbols: impl IntoIterator<Item = &'a Complex64>) -> Self {
        let bins = Self::BINS;
        let r = Self::HALF_RANGE;
        let width = 2.0 * r / bins as f64;
        let mut counts = vec![0u64; bins * bins];
        for s in symbols {
            let bx = ((s.re + r) / width).floor();
            let by = ((s.im + r) / width).floor();
            if (0.0..bins as f64).contains(&bx) && (0.0..bins as f64).contains(&by) {
                counts[bx as usize * bins + by as usize] += 1;
            }
        }
        let peak = (counts.iter().copied().max().unwrap_or(0).max(1) as f64).ln_1p();
        ConstellationHistogram {
            bins,
            half_range: r,
            density: counts.iter().map(|&c| (c as f64).ln_1p() / peak).collect(),
        }
    }

    /// Centre of bin `i` along either axis.
    pub fn bin_center(&self, i: usize) -> f64 {
        let width = 2.0 * self.half_range / self.bins as f64;
        -self.half_range + (i as f64 + 0.5) * width
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommMetrics {
    /// Bit error rates; `None` when the transmitted bits are unknown.
    pub pre_fec_ber: Option<f64>,
    pub post_fec_ber: Option<f64>,
    pub evm_rms_percent: f64,
    pub frames_decoded: usize,
    pub codewords: usize,
    pub codewords_failed: usize,
    pub info_bits: usize,
    pub info_bit_errors: Option<usize>,
    pub coded_bit_errors: Option<usize>,
    pub erased_symbols: usize,
    pub main_doppler_hz: f64,
    pub delay_slope_samples_per_symbol: f64,
    pub residual_sfo_compensated: bool,
    pub residual_sfo_warning: bool,
}

/// EVM in percent of equalized symbols against a reference.
pub fn evm_percent(symbols: &[Complex64], reference: &[Complex64], erased: &[bool]) -> f64 {
    let (mut err, mut pow) = (0.0, 0.0);
    for ((s, r), &e) in symbols.iter().zip(reference).zip(erased) {
        if !e {
            err += (s - r).norm_sqr();
            pow += r.norm_sqr();
        }
    }
    if pow == 0.0 {
        0.0
    } else {
        100.0 * (err / pow).sqrt()
    }
}

fn hard_decisions(symbols: &[Complex64]) -> Vec<Complex64> {
    tx::map_qpsk(&tx::demap_qpsk_hard(symbols)).expect("even bit count")
}

fn count_errors(a: &[u8], b: &[u8]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RxOptions {
    pub doppler_correction: bool,
    pub residual_sfo_compensation: bool,
    pub max_iterations: usize,
}

impl Default for RxOptions {
    fn default() -> Self {
        RxOptions {
            doppler_correction: true,
            residual_sfo_compensation: true,
            max_iterations: 50,
        }
    }
}

/// Everything the communication receiver produces for one frame.
#[derive(Debug, Clone)]
pub struct RxOutput {
    /// Doppler-corrected and aligned payload grid.
    pub grid: ReceivedGrid,
    pub cfr: CfrEstimate,
    pub residual: ResidualSfo,
    pub equalized: Equalized,
    pub decoded: Decoded,
    pub metrics: CommMetrics,
}

/// Runs the receiver on a synchronized payload stream. `reference` holds the
/// transmitted info bits when known; EVM then uses the true symbols,
/// otherwise hard decisions.
pub fn receive(
    payload: &IqStream,
    cfg: &FrameConfig,
    opts: &RxOptions,
    info_len: usize,
    reference: Option<&[u8]>,
) -> Result<RxOutput> {
    if let Some(r) = reference {
        if r.len() != info_len {
            return Err(Error::Data(format!(
                "reference has {} bits but {info_len} were announced",
                r.len()
            )));
        }
    }
    let rg = demodulate_frame(payload, cfg)?;
    let (f_d, rg) = if opts.doppler_correction {
        estimate_main_doppler(&rg)?
    } else {
        (0.0, rg)
    };
    let est = estimate_cfr(&rg, f_d);
    let (rg, est, residual) = if opts.residual_sfo_compensation {
        compensate_residual_sfo(&rg, &est)
    } else {
        let track = track_main_delay(&est.pilots, cfg);
        let warning = track.residual_rms > RESIDUAL_WARNING_SAMPLES;
        (
            rg,
            est,
            ResidualSfo {
                track,
                applied: false,
                warning,
            },
        )
    };
    let eq = equalize(&rg, &est);
    let llrs = qpsk_llrs(&eq);
    let decoded = decode_payload(&llrs, cfg, info_len, opts.max_iterations)?;

    let code = LdpcCode::rate_2_3();
    let coded_len = decoded.codewords.len() * code.n();
    let received_coded: Vec<u8> = llrs[..coded_len].iter().map(|&l| u8::from(l < 0.0)).collect();
    let (evm, info_errors, coded_errors) = match reference {
        Some(bits) => {
            let payload_bits = tx::encode_payload(bits, cfg).map_err(|e| e.at(Stage::Decoding))?;
            let frame_bits = tx::frame_bits(cfg, &payload_bits.coded_bits)?;
            let tx_symbols = tx::map_qpsk(&frame_bits)?;
            (
                evm_percent(&eq.symbols, &tx_symbols, &eq.erased),
                Some(count_errors(&decoded.info_bits, bits)),
                Some(count_errors(&received_coded, &payload_bits.coded_bits)),
            )
        }
        None => (evm_percent(&eq.symbols, &hard_decisions(&eq.symbols), &eq.erased), None, None),
    };
    let failed = decoded.converged.iter().filter(|&&c| !c).count();
    let ratio = |e: usize, n: usize| if n == 0 { 0.0 } else { e as f64 / n as f64 };
    let metrics = CommMetrics {
        pre_fec_ber: coded_errors.map(|e| ratio(e, coded_len)),
        post_fec_ber: info_errors.map(|e| ratio(e, info_len)),
        evm_rms_percent: evm,
        frames_decoded: usize::from(failed == 0),
        codewords: decoded.codewords.len(),
        codewords_failed: failed,
        info_bits: info_len,
        info_bit_errors: info_errors,
        coded_bit_errors: coded_errors,
        erased_symbols: eq.erased.iter().filter(|&&e| e).count(),
        main_doppler_hz: f_d,
        delay_slope_samples_per_symbol: residual.track.slope,
        residual_sfo_compensated: residual.applied,
        residual_sfo_warning: residual.warning,
    };
    Ok(RxOutput {
        grid: rg,
        cfr: est,
        residual,
        equalized: eq,
        decoded,
        metrics,
    })
}
