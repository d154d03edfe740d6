//! Receiver synchronization: Schmidl-Cox coarse timing and CFO, localized CFO
//! pre-correction, cross-correlation fine timing, pairwise weighted-LS SFO
//! estimation and multirate resampling.

use std::f64::consts::PI;
use std::ops::Range;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dsp::{design_lowpass, kaiser_beta, signed_bin, weighted_line_fit, UnitaryDft};
use crate::error::{Error, Result, Stage};
use crate::params::FrameConfig;
use crate::tx::{build_preamble, mean_power, sc_reference, IqStream};

/// Fraction of the peak metric that delimits the timing plateau.
const PLATEAU_LEVEL: f64 = 0.9;
/// Samples around the correlation peak excluded from the sidelobe search.
const MAINLOBE_HALF_WIDTH: usize = 3;
/// Below this accumulated drift (samples over the stream) resampling is skipped.
const RESAMPLE_MIN_DRIFT: f64 = 1e-4;
/// Fraction of the band used by the SFO phase-slope fit.
const TSAI_BAND: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyncOptions {
    /// Minimum Schmidl-Cox metric peak for frame lock.
    pub lock_threshold: f64,
    /// Minimum fine-timing correlation peak-to-sidelobe ratio.
    pub psr_threshold: f64,
    /// Resample the stream with the estimated SFO.
    pub sfo_correction: bool,
}

impl Default for SyncOptions {
    fn default() -> Self {
        SyncOptions {
            lock_threshold: 0.3,
            psr_threshold: 2.0,
            sfo_correction: true,
        }
    }
}

/// Coarse acquisition result.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseSync {
    pub coarse_start: usize,
    /// Fractional CFO in Hz, within ±B/N.
    pub cfo_fraction: f64,
    /// Integer CFO in subcarrier spacings (always even).
    pub cfo_integer: i64,
    /// Combined CFO estimate in Hz.
    pub cfo_hat: f64,
    pub peak_metric: f64,
    pub metric_offset: usize,
    /// Timing metric around the peak, starting at `metric_offset`.
    pub metric: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairSlope {
    /// Frame index of the first symbol of the pair.
    pub symbol: usize,
    /// Phase slope in radians per subcarrier.
    pub slope: f64,
    pub sfo: f64,
    /// Relative weight in the combined estimate.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SfoEstimate {
    pub sfo: f64,
    pub pairs: Vec<PairSlope>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyncReport {
    pub coarse_start: usize,
    pub fine_start: usize,
    pub cfo_hat: f64,
    pub cfo_fraction_hz: f64,
    pub cfo_integer: i64,
    pub sfo_hat: f64,
    pub sfo_corrected: bool,
    pub peak_metric: f64,
    pub peak_to_sidelobe: f64,
    pub timing_metric_offset: usize,
    pub timing_metric: Vec<f64>,
    pub pair_phase_slopes: Vec<PairSlope>,
}

/// Running half-symbol correlation `P(d)` and half of the window energy.
struct ScAccumulator<'a> {
    y: &'a [Complex64],
    l: usize,
    d: usize,
    p: Complex64,
    e: f64,
}

impl<'a> ScAccumulator<'a> {
    fn new(y: &'a [Complex64], l: usize, d: usize) -> Self {
        let mut a = ScAccumulator {
            y,
            l,
            d,
            p: Complex64::new(0.0, 0.0),
            e: 0.0,
        };
        a.recompute();
        a
    }

    fn recompute(&mut self) {
        let (y, l, d) = (self.y, self.l, self.d);
        self.p = (0..l).map(|i| y[d + i].conj() * y[d + i + l]).sum();
        self.e = y[d..d + 2 * l].iter().map(|v| v.norm_sqr()).sum();
    }

    fn advance(&mut self) {
        let (y, l, d) = (self.y, self.l, self.d);
        self.p += y[d + l].conj() * y[d + 2 * l] - y[d].conj() * y[d + l];
        self.e += y[d + 2 * l].norm_sqr() - y[d].norm_sqr();
        self.d += 1;
        if self.d % 4096 == 0 {
            self.recompute();
        }
    }

    fn metric(&self, floor: f64) -> f64 {
        let r = self.e / 2.0;
        if r <= floor {
            0.0
        } else {
            (self.p.norm_sqr() / (r * r)).min(1.0)
        }
    }
}

/// Coarse frame start, CFO estimate and timing metric.
pub fn schmidl_cox(y: &IqStream, cfg: &FrameConfig, lock_threshold: f64) -> Result<CoarseSync> {
    schmidl_cox_inner(y, cfg, lock_threshold).map_err(|e| e.at(Stage::SchmidlCox))
}

fn schmidl_cox_inner(y: &IqStream, cfg: &FrameConfig, lock_threshold: f64) -> Result<CoarseSync> {
    let n = cfg.n_subcarriers;
    let l = n / 2;
    let ncp = cfg.cp_len;
    let s = &y.samples;
    if s.len() < 2 * cfg.symbol_len() + n {
        return Err(Error::Framing(format!(
            "stream of {} samples cannot hold the synchronization preamble",
            s.len()
        )));
    }
    let floor = 1e-9 * mean_power(s).max(f64::MIN_POSITIVE) * l as f64;
    let last = s.len() - 2 * l;

    let mut acc = ScAccumulator::new(s, l, 0);
    let (mut best_d, mut best) = (0, acc.metric(floor));
    while acc.d < last {
        acc.advance();
        let m = acc.metric(floor);
        if m > best {
            best = m;
            best_d = acc.d;
        }
    }
    if !(best >= lock_threshold) {
        return Err(Error::NoLock {
            peak_metric: best,
            threshold: lock_threshold,
        });
    }

    let lo = best_d.saturating_sub(n);
    let hi = (best_d + n).min(last);
    let mut acc = ScAccumulator::new(s, l, lo);
    let mut metric = Vec::with_capacity(hi - lo + 1);
    let mut corr = Vec::with_capacity(hi - lo + 1);
    loop {
        metric.push(acc.metric(floor));
        corr.push(acc.p);
        if acc.d == hi {
            break;
        }
        acc.advance();
    }
    let level = PLATEAU_LEVEL * best;
    let first = metric.iter().position(|&m| m >= level).unwrap_or(best_d - lo);
    let end = metric.iter().rposition(|&m| m >= level).unwrap_or(best_d - lo);
    let mid = lo + (first + end) / 2;
    let coarse_start = mid.saturating_sub(ncp / 2);

    // Plateau edges mix in samples from outside the repeated symbol; only the
    // central part enters the CFO estimate.
    let q = (ncp / 4).min((end - first) / 4);
    let centre = (first + end) / 2;
    let p: Complex64 = corr[centre - q..=centre + q].iter().sum();
    let ts = cfg.sample_period();
    let cfo_fraction = p.arg() / (PI * n as f64 * ts);

    let cfo_integer = integer_cfo(s, cfg, coarse_start, cfo_fraction)?;
    let cfo_hat = cfo_fraction + cfo_integer as f64 * cfg.subcarrier_spacing();
    Ok(CoarseSync {
        coarse_start,
        cfo_fraction,
        cfo_integer,
        cfo_hat,
        peak_metric: best,
        metric_offset: lo,
        metric,
    })
}

/// Resolves the CFO ambiguity in multiples of 2·B/N from the differential
/// code between the two Schmidl-Cox symbols.
fn integer_cfo(s: &[Complex64], cfg: &FrameConfig, coarse: usize, cfo_fraction: f64) -> Result<i64> {
    let n = cfg.n_subcarriers;
    let ncp = cfg.cp_len;
    let w1 = coarse + ncp / 2;
    let w2 = w1 + cfg.symbol_len();
    if w2 + n > s.len() {
        return Err(Error::Framing("second Schmidl-Cox symbol runs past the stream end".into()));
    }
    let dft = UnitaryDft::new(n);
    let f = cfo_fraction * cfg.sample_period();
    let spectrum = |start: usize| {
        let mut buf: Vec<Complex64> = (0..n)
            .map(|i| s[start + i] * Complex64::from_polar(1.0, -2.0 * PI * f * i as f64))
            .collect();
        dft.forward(&mut buf);
        buf
    };
    let y1 = spectrum(w1);
    let y2 = spectrum(w2);
    let v = build_preamble(cfg).sc_differential;
    let half = n / 2;
    let span = (n / 4) as i64;
    let mut best = (0i64, -1.0);
    for g in -span..span {
        let shift = (2 * g).rem_euclid(n as i64) as usize;
        let b: Complex64 = (0..half)
            .map(|i| {
                let k = (2 * i + shift) % n;
                y1[k].conj() * y2[k] * v[i].conj()
            })
            .sum();
        let b = b.norm_sqr();
        if b > best.1 {
            best = (g, b);
        }
    }
    Ok(2 * best.0)
}

/// Multiplies `samples[region]` by `e^{-j2π cfo n T}`, `n` counted from the region start.
pub fn derotate(samples: &mut [Complex64], region: Range<usize>, cfo_hz: f64, fs: f64) {
    let f = cfo_hz / fs;
    if f == 0.0 {
        return;
    }
    for (n, v) in samples[region].iter_mut().enumerate() {
        *v *= Complex64::from_polar(1.0, -2.0 * PI * (f * n as f64).fract());
    }
}

/// CFO correction restricted to `region` of the stream.
pub fn local_cfo_correct(y: &IqStream, cfo_hat: f64, region: Range<usize>) -> Result<IqStream> {
    if region.start > region.end || region.end > y.len() {
        return Err(Error::Framing(format!(
            "region {region:?} outside a stream of {} samples",
            y.len()
        )));
    }
    let mut out = y.clone();
    derotate(&mut out.samples, region, cfo_hat, y.nominal_rate);
    Ok(out)
}

/// Fine-timing search result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FineTiming {
    pub fine_start: usize,
    pub peak_to_sidelobe: f64,
    /// Correlation peak normalized by both energies, in [0, 1].
    pub peak_correlation: f64,
}

/// Half-width of the fine-timing search window; kept inside half an S&C
/// symbol so the repeated half does not produce a competing peak.
pub fn fine_search_half_width(cfg: &FrameConfig) -> usize {
    cfg.cp_len.min(cfg.n_subcarriers / 2 - 4).max(1)
}

/// Frame start by cross-correlating against the known first preamble symbol.
pub fn fine_timing(y: &IqStream, cfg: &FrameConfig, coarse_start: usize, psr_threshold: f64) -> Result<FineTiming> {
    fine_timing_at(&y.samples, 0, cfg, coarse_start, psr_threshold).map_err(|e| e.at(Stage::FineTiming))
}

/// `samples` holds the stream starting at absolute index `offset`.
fn fine_timing_at(
    samples: &[Complex64],
    offset: usize,
    cfg: &FrameConfig,
    coarse_start: usize,
    psr_threshold: f64,
) -> Result<FineTiming> {
    let n = cfg.n_subcarriers;
    let ncp = cfg.cp_len;
    let reference = sc_reference(cfg);
    let w = fine_search_half_width(cfg);
    let lo = coarse_start.saturating_sub(w).max(offset);
    let hi = (coarse_start + w).min((offset + samples.len()).saturating_sub(n + ncp));
    if hi < lo {
        return Err(Error::Framing("fine timing window lies outside the stream".into()));
    }
    let corr: Vec<f64> = (lo..=hi)
        .map(|d| {
            let seg = &samples[d - offset + ncp..d - offset + ncp + n];
            reference
                .iter()
                .zip(seg)
                .map(|(r, v)| r.conj() * v)
                .sum::<Complex64>()
                .norm()
        })
        .collect();
    let (peak_i, &peak) = corr
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty window");
    let sidelobe = corr
        .iter()
        .enumerate()
        .filter(|(i, _)| i.abs_diff(peak_i) > MAINLOBE_HALF_WIDTH)
        .map(|(_, &c)| c)
        .fold(0.0, f64::max);
    let psr = if sidelobe > 0.0 { peak / sidelobe } else { f64::INFINITY };
    if !(psr >= psr_threshold) {
        return Err(Error::AmbiguousTiming {
            ratio: psr,
            threshold: psr_threshold,
        });
    }
    let seg = &samples[lo + peak_i - offset + ncp..lo + peak_i - offset + ncp + n];
    let energy = (mean_power(&reference) * mean_power(seg)).sqrt() * n as f64;
    Ok(FineTiming {
        fine_start: lo + peak_i,
        peak_to_sidelobe: psr,
        peak_correlation: if energy > 0.0 { peak / energy } else { 0.0 },
    })
}

/// Normalized SFO from the identical preamble pairs.
pub fn estimate_sfo_tsai(y: &IqStream, cfg: &FrameConfig, fine_start: usize, cfo_hat: f64) -> Result<SfoEstimate> {
    tsai_inner(&y.samples, cfg, fine_start, cfo_hat).map_err(|e| e.at(Stage::SfoEstimation))
}

fn tsai_inner(s: &[Complex64], cfg: &FrameConfig, fine_start: usize, cfo_hat: f64) -> Result<SfoEstimate> {
    let n = cfg.n_subcarriers;
    let lsym = cfg.symbol_len();
    let backoff = cfg.cp_len / 4;
    let dft = UnitaryDft::new(n);
    let f = cfo_hat * cfg.sample_period();
    let spectrum = |m: usize| -> Option<Vec<Complex64>> {
        let start = fine_start + m * lsym + cfg.cp_len - backoff;
        if start + n > s.len() {
            return None;
        }
        let mut buf: Vec<Complex64> = (0..n)
            .map(|i| {
                let rel = (start + i - fine_start) as f64;
                s[start + i] * Complex64::from_polar(1.0, -2.0 * PI * (f * rel).fract())
            })
            .collect();
        dft.forward(&mut buf);
        Some(buf)
    };

    // Subcarriers near Nyquist see the phase distortion of any fractional
    // interpolation between the two clocks, so only the passband is fitted.
    let edge = TSAI_BAND * n as f64 / 2.0;
    let to_sfo = |slope: f64| slope * n as f64 / (2.0 * PI * lsym as f64);
    let mut raw = Vec::new();
    for pair in 0..cfg.m_sfo / 2 {
        let m = cfg.m_sc + 2 * pair;
        let (Some(ya), Some(yb)) = (spectrum(m), spectrum(m + 1)) else {
            break;
        };
        let z: Vec<Complex64> = ya.iter().zip(&yb).map(|(a, b)| a.conj() * b).collect();
        let w: Vec<f64> = ya
            .iter()
            .zip(&yb)
            .map(|(a, b)| 0.5 * (a.norm_sqr() + b.norm_sqr()))
            .collect();
        let rot = Complex64::from_polar(1.0, -z.iter().sum::<Complex64>().arg());
        let pts: Vec<(f64, f64, f64)> = (0..n)
            .map(|k| (signed_bin(k, n), (z[k] * rot).arg(), w[k]))
            .filter(|p| p.0.abs() <= edge)
            .collect();
        let Some((a, b)) = weighted_line_fit(pts.iter().copied()) else {
            continue;
        };
        let (sw, sx) = pts.iter().fold((0.0, 0.0), |(sw, sx), p| (sw + p.2, sx + p.2 * p.0));
        let mx = sx / sw;
        let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - mx).powi(2)).sum();
        let resid: f64 = pts.iter().map(|p| p.2 * (p.1 - a - b * p.0).powi(2)).sum::<f64>() / sw;
        let var = (resid / sxx).max(1e-300);
        raw.push((m, b, var));
    }
    if raw.is_empty() {
        return Err(Error::Estimation("no usable SFO preamble pair".into()));
    }
    let total: f64 = raw.iter().map(|r| 1.0 / r.2).sum();
    let slope = raw.iter().map(|r| r.1 / r.2).sum::<f64>() / total;
    let pairs = raw
        .iter()
        .map(|&(symbol, slope, var)| PairSlope {
            symbol,
            slope,
            sfo: to_sfo(slope),
            weight: (1.0 / var) / total,
        })
        .collect();
    Ok(SfoEstimate {
        sfo: to_sfo(slope),
        pairs,
    })
}

/// Three-stage sample-rate converter: polyphase FIR interpolation by 8,
/// cubic Lagrange arbitrary-ratio conversion at the high rate, FIR
/// decimation by 8. All filters are centred, so the chain has no latency.
#[derive(Debug, Clone)]
pub struct Resampler {
    interp: Vec<f64>,
    decim: Vec<f64>,
}

const UP: usize = 8;
const INTERP_TAPS: usize = 321;
const DECIM_TAPS: usize = 69;
const BLOCK: usize = 4096;

impl Default for Resampler {
    fn default() -> Self {
        Self::new()
    }
}

impl Resampler {
    pub fn new() -> Self {
        Resampler {
            interp: design_lowpass(INTERP_TAPS, 0.5 / UP as f64, kaiser_beta(70.0), UP as f64),
            decim: design_lowpass(DECIM_TAPS, 0.095, kaiser_beta(80.0), 1.0),
        }
    }

    /// `out[n] = x(t0 + n·step)` in input sample units.
    pub fn process(&self, x: &[Complex64], t0: f64, step: f64, out_len: usize) -> Vec<Complex64> {
        let zero = Complex64::new(0.0, 0.0);
        let hi_half = (INTERP_TAPS / 2) as i64;
        let d_half = (DECIM_TAPS / 2) as i64;
        let up = UP as i64;
        let len = x.len() as i64;
        let mut out = Vec::with_capacity(out_len);
        let mut u = Vec::new();
        let mut v = Vec::new();

        let mut n0 = 0usize;
        while n0 < out_len {
            let n1 = (n0 + BLOCK).min(out_len);
            // High-rate output indices feeding this block of outputs.
            let i_lo = up * n0 as i64 - d_half;
            let i_hi = up * (n1 as i64 - 1) + d_half;
            let pos = |i: i64| up as f64 * t0 + i as f64 * step;
            let j_lo = pos(i_lo).floor() as i64 - 1;
            let j_hi = pos(i_hi).floor() as i64 + 2;

            u.clear();
            u.extend((j_lo..=j_hi).map(|j| {
                let m_lo = (j - hi_half).div_euclid(up) + i64::from((j - hi_half).rem_euclid(up) != 0);
                let m_hi = (j + hi_half).div_euclid(up);
                let mut acc = zero;
                for m in m_lo.max(0)..=m_hi.min(len - 1) {
                    acc += x[m as usize] * self.interp[(j - up * m + hi_half) as usize];
                }
                acc
            }));

            v.clear();
            v.extend((i_lo..=i_hi).map(|i| {
                let s = pos(i);
                let b = s.floor();
                let mu = s - b;
                let k = (b as i64 - 1 - j_lo) as usize;
                let w = [
                    -mu * (mu - 1.0) * (mu - 2.0) / 6.0,
                    (mu + 1.0) * (mu - 1.0) * (mu - 2.0) / 2.0,
                    -(mu + 1.0) * mu * (mu - 2.0) / 2.0,
                    (mu + 1.0) * mu * (mu - 1.0) / 6.0,
                ];
                u[k] * w[0] + u[k + 1] * w[1] + u[k + 2] * w[2] + u[k + 3] * w[3]
            }));

            for n in n0..n1 {
                let c = (up * n as i64 - i_lo) as usize;
                let mut acc = zero;
                for (t, &h) in self.decim.iter().enumerate() {
                    acc += v[c + d_half as usize - t] * h;
                }
                out.push(acc);
            }
            n0 = n1;
        }
        out
    }
}

/// Removes an SFO δ̂: output sample `n` is the input at `n / (1 + δ̂)`.
pub fn resample_correct(y: &IqStream, sfo_hat: f64) -> IqStream {
    if y.is_empty() || sfo_hat.abs() * (y.len() as f64) < RESAMPLE_MIN_DRIFT {
        return y.clone();
    }
    let out_len = ((y.len() - 1) as f64 * (1.0 + sfo_hat)).floor() as usize + 1;
    IqStream {
        samples: Resampler::new().process(&y.samples, 0.0, 1.0 / (1.0 + sfo_hat), out_len),
        nominal_rate: y.nominal_rate,
        origin_index: y.origin_index.map(|o| (o as f64 * (1.0 + sfo_hat)).round() as usize),
    }
}

/// Full synchronization chain; returns the CFO-corrected payload samples
/// (exactly `M_pl` symbols, zero-filled if the stream ends early).
pub fn synchronize(y: &IqStream, cfg: &FrameConfig, opts: &SyncOptions) -> Result<(IqStream, SyncReport)> {
    cfg.ensure_valid()?;
    y.ensure_finite()?;
    let fs = y.nominal_rate;
    let coarse = schmidl_cox(y, cfg, opts.lock_threshold)?;

    let lsym = cfg.symbol_len();
    let w = fine_search_half_width(cfg);
    let region = coarse.coarse_start.saturating_sub(w)
        ..(coarse.coarse_start + w + cfg.m_preamble() * lsym).min(y.len());
    let mut local = y.samples[region.clone()].to_vec();
    let len = local.len();
    derotate(&mut local, 0..len, coarse.cfo_hat, fs);
    let fine = fine_timing_at(&local, region.start, cfg, coarse.coarse_start, opts.psr_threshold)
        .map_err(|e| e.at(Stage::FineTiming))?;

    let sfo = tsai_inner(&y.samples, cfg, fine.fine_start, coarse.cfo_hat).map_err(|e| e.at(Stage::SfoEstimation))?;

    let frame_len = cfg.frame_len();
    let tail = &y.samples[fine.fine_start..];
    let apply = opts.sfo_correction && sfo.sfo.abs() * frame_len as f64 >= RESAMPLE_MIN_DRIFT;
    let mut frame = if apply {
        if !(sfo.sfo.abs() < crate::channel::MAX_SFO) {
            return Err(Error::Estimation(format!("SFO estimate {} out of range", sfo.sfo)).at(Stage::Resampling));
        }
        Resampler::new().process(tail, 0.0, 1.0 / (1.0 + sfo.sfo), frame_len)
    } else {
        tail[..frame_len.min(tail.len())].to_vec()
    };
    frame.resize(frame_len, Complex64::new(0.0, 0.0));

    let mut payload = frame.split_off(cfg.m_preamble() * lsym);
    drop(frame);
    let cfo_payload = if apply { coarse.cfo_hat / (1.0 + sfo.sfo) } else { coarse.cfo_hat };
    let plen = payload.len();
    derotate(&mut payload, 0..plen, cfo_payload, fs);

    let report = SyncReport {
        coarse_start: coarse.coarse_start,
        fine_start: fine.fine_start,
        cfo_hat: coarse.cfo_hat,
        cfo_fraction_hz: coarse.cfo_fraction,
        cfo_integer: coarse.cfo_integer,
        sfo_hat: sfo.sfo,
        sfo_corrected: apply,
        peak_metric: coarse.peak_metric,
        peak_to_sidelobe: fine.peak_to_sidelobe,
        timing_metric_offset: coarse.metric_offset,
        timing_metric: coarse.metric,
        pair_phase_slopes: sfo.pairs,
    };
    Ok((
        IqStream {
            samples: payload,
            nominal_rate: fs,
            origin_index: Some(0),
        },
        report,
    ))
}
