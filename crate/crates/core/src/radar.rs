//! Range-Doppler processing of the estimated channel, pilot-only or full
//! frame with data-aided reconstruction, and simple peak detection.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::comm_rx::{CfrEstimate, Decoded, ReceivedGrid};
use crate::dsp::{hamming, parabolic_offset, signed_bin, UnitaryDft};
use crate::error::{Error, Result, Stage};
use crate::grid::ComplexGrid;
use crate::ldpc::LdpcCode;
use crate::params::{FrameConfig, SensingMode, C0};
use crate::tx;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    Hamming,
    Rectangular,
}

impl WindowKind {
    fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            WindowKind::Hamming => hamming(n),
            WindowKind::Rectangular => vec![1.0; n],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            WindowKind::Hamming => "hamming",
            WindowKind::Rectangular => "rectangular",
        }
    }
}

/// Channel matrix used for sensing: pilot estimates or the full payload.
pub fn cfr_for_sensing(
    rg: &ReceivedGrid,
    est: &CfrEstimate,
    mode: SensingMode,
    decoded: Option<&Decoded>,
) -> Result<ComplexGrid> {
    match mode {
        SensingMode::PilotOnly => Ok(est.pilots.clone()),
        SensingMode::FullFrame => {
            let decoded = decoded.ok_or_else(|| {
                Error::Reconstruction("full-frame sensing needs the decoded payload".into())
                    .at(Stage::RadarReconstruction)
            })?;
            check_reencoding(&rg.cfg, decoded).map_err(|e| e.at(Stage::RadarReconstruction))?;
            full_frame_cfr(rg, &decoded.info_bits).map_err(|e| e.at(Stage::RadarReconstruction))
        }
    }
}

fn check_reencoding(cfg: &FrameConfig, decoded: &Decoded) -> Result<()> {
    let code = LdpcCode::rate_2_3();
    let payload = tx::encode_payload(&decoded.info_bits, cfg)?;
    let consistent = payload.codeword_count == decoded.codewords.len()
        && payload
            .coded_bits
            .chunks_exact(code.n())
            .zip(&decoded.codewords)
            .all(|(a, b)| a == &b[..]);
    if consistent {
        Ok(())
    } else {
        Err(Error::Reconstruction(
            "decoded codewords do not re-encode from the decoded info bits".into(),
        ))
    }
}

/// `Y / X` over every payload element, with `X` rebuilt from `info_bits`.
pub fn full_frame_cfr(rg: &ReceivedGrid, info_bits: &[u8]) -> Result<ComplexGrid> {
    let cfg = &rg.cfg;
    let payload = tx::encode_payload(info_bits, cfg)?;
    let symbols = tx::map_qpsk(&tx::frame_bits(cfg, &payload.coded_bits)?)?;
    let x = tx::payload_grid(cfg, &symbols)?;
    Ok(ComplexGrid::from_fn(cfg.n_subcarriers, cfg.m_payload, |k, m| {
        rg.grid.get(k, m) / x.get(k, m)
    }))
}

/// Range interval of the computed map, in metres of relative bistatic range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeCrop {
    pub min_m: f64,
    pub max_m: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RangeDopplerMap {
    /// dB relative to the peak, row-major: range bin × Doppler bin.
    pub magnitude_db: Vec<f64>,
    pub range_axis: Vec<f64>,
    pub doppler_axis: Vec<f64>,
    pub mode: SensingMode,
    pub window: WindowKind,
    pub zero_pad: usize,
    /// Peak power before normalization.
    pub peak_power: f64,
    /// The range axis spans the whole unambiguous interval and wraps around.
    pub range_cyclic: bool,
}

impl RangeDopplerMap {
    pub fn range_bins(&self) -> usize {
        self.range_axis.len()
    }

    pub fn doppler_bins(&self) -> usize {
        self.doppler_axis.len()
    }

    #[inline]
    pub fn get(&self, r: usize, d: usize) -> f64 {
        self.magnitude_db[r * self.doppler_axis.len() + d]
    }

    pub fn range_step(&self) -> f64 {
        axis_step(&self.range_axis)
    }

    pub fn doppler_step(&self) -> f64 {
        axis_step(&self.doppler_axis)
    }

    /// Bin indices of the global maximum.
    pub fn peak(&self) -> (usize, usize) {
        let i = self
            .magnitude_db
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map_or(0, |(i, _)| i);
        (i / self.doppler_bins(), i % self.doppler_bins())
    }

    /// Mean power (dB rel. peak) over every bin outside all `exclude` boxes.
    pub fn floor_db(&self, exclude: &[Guard]) -> f64 {
        let (mut sum, mut count) = (0.0, 0usize);
        for (r, &rv) in self.range_axis.iter().enumerate() {
            for (d, &dv) in self.doppler_axis.iter().enumerate() {
                if !exclude.iter().any(|g| g.contains(rv, dv)) {
                    sum += 10f64.powf(self.get(r, d) / 10.0);
                    count += 1;
                }
            }
        }
        10.0 * (sum / count.max(1) as f64).log10()
    }
}

/// Rectangle in the range-Doppler plane. An infinite half-width covers the
/// whole axis, so a line of sidelobes can be masked.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Guard {
    pub range_m: f64,
    pub doppler_hz: f64,
    pub range_half_width_m: f64,
    pub doppler_half_width_hz: f64,
}

impl Guard {
    pub fn contains(&self, range_m: f64, doppler_hz: f64) -> bool {
        (range_m - self.range_m).abs() <= self.range_half_width_m
            && (doppler_hz - self.doppler_hz).abs() <= self.doppler_half_width_hz
    }
}

fn axis_step(axis: &[f64]) -> f64 {
    if axis.len() < 2 {
        0.0
    } else {
        axis[1] - axis[0]
    }
}

/// Delay/range spacing of one unpadded bin (c0 / B).
pub fn range_bin_m(cfg: &FrameConfig) -> f64 {
    C0 / cfg.bandwidth_hz
}

/// Unambiguous range interval `[0, R_max,ua)` of a mode.
pub fn full_crop(cfg: &FrameConfig, mode: SensingMode) -> RangeCrop {
    let (dn, _) = mode.effective_spacing(cfg);
    RangeCrop {
        min_m: 0.0,
        max_m: (cfg.n_subcarriers / dn) as f64 * range_bin_m(cfg),
    }
}

/// Windowed periodogram: inverse DFT over subcarriers (zero-padded) to
/// range, forward DFT over symbols (zero-padded, centred) to Doppler.
/// `cfr` is `N/ΔN × M_pl/ΔM` for pilot-only and `N × M_pl` for full-frame
/// sensing.
pub fn range_doppler(
    cfr: &ComplexGrid,
    cfg: &FrameConfig,
    mode: SensingMode,
    window: WindowKind,
    zero_pad: usize,
    crop: Option<RangeCrop>,
) -> Result<RangeDopplerMap> {
    let (dn, dm) = mode.effective_spacing(cfg);
    let (rows, cols) = (cfr.rows(), cfr.cols());
    if rows != cfg.n_subcarriers / dn || cols != cfg.m_payload / dm {
        return Err(Error::Framing(format!(
            "sensing matrix is {rows}×{cols}, expected {}×{}",
            cfg.n_subcarriers / dn,
            cfg.m_payload / dm
        )));
    }
    if zero_pad == 0 {
        return Err(Error::Framing("zero-padding factor must be positive".into()));
    }
    if cfr.as_slice().iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::Data("sensing matrix holds non-finite values".into()));
    }

    let range_len = rows * zero_pad;
    let doppler_len = cols * zero_pad;
    let range_step = range_bin_m(cfg) / zero_pad as f64;
    let crop = crop.unwrap_or_else(|| full_crop(cfg, mode));
    let t_lo = (crop.min_m / range_step).ceil() as i64;
    let t_hi = (crop.max_m / range_step).ceil() as i64;
    let t_hi = t_hi.min(t_lo + range_len as i64);
    if t_hi <= t_lo {
        return Err(Error::Framing("empty range crop".into()));
    }
    let selected: Vec<(usize, f64)> = (t_lo..t_hi)
        .map(|t| (t.rem_euclid(range_len as i64) as usize, t as f64 * range_step))
        .collect();

    // Frequency window over signed subcarrier order, so it tapers at the band edges.
    let wf = window.coefficients(rows);
    let wt = window.coefficients(cols);
    let half = rows / 2;
    let range_dft = UnitaryDft::new(range_len);
    let mut profiles = ComplexGrid::zeros(cols, selected.len());
    let mut buf = vec![Complex64::new(0.0, 0.0); range_len];
    for m in 0..cols {
        buf.fill(Complex64::new(0.0, 0.0));
        let col = cfr.column(m);
        for (k, &v) in col.iter().enumerate() {
            let ks = signed_bin(k, rows);
            let w = wf[(ks + half as f64) as usize];
            let slot = if k < half { k } else { range_len - (rows - k) };
            buf[slot] = v * (w * wt[m]);
        }
        range_dft.inverse_raw(&mut buf);
        for (s, &(q, _)) in selected.iter().enumerate() {
            profiles.set(m, s, buf[q]);
        }
    }

    let doppler_dft = UnitaryDft::new(doppler_len);
    let mut power = Vec::with_capacity(selected.len() * doppler_len);
    let mut dbuf = vec![Complex64::new(0.0, 0.0); doppler_len];
    for s in 0..selected.len() {
        dbuf.fill(Complex64::new(0.0, 0.0));
        dbuf[..cols].copy_from_slice(profiles.column(s));
        doppler_dft.forward_raw(&mut dbuf);
        let shift = doppler_len / 2;
        power.extend((0..doppler_len).map(|u| dbuf[(u + doppler_len - shift) % doppler_len].norm_sqr()));
    }
    drop(profiles);

    let peak_power = power.iter().cloned().fold(0.0, f64::max);
    let magnitude_db = power
        .iter()
        .map(|&p| {
            if peak_power > 0.0 && p > 0.0 {
                (10.0 * (p / peak_power).log10()).max(-300.0)
            } else {
                -300.0
            }
        })
        .collect();
    let doppler_step = cfg.bandwidth_hz / (cfg.symbol_len() * cfg.m_payload) as f64 / zero_pad as f64;
    let doppler_axis = (0..doppler_len)
        .map(|u| (u as f64 - (doppler_len / 2) as f64) * doppler_step)
        .collect();
    Ok(RangeDopplerMap {
        magnitude_db,
        range_axis: selected.iter().map(|s| s.1).collect(),
        doppler_axis,
        mode,
        window,
        zero_pad,
        peak_power,
        range_cyclic: selected.len() == range_len,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Detection {
    pub rel_bistatic_range: f64,
    pub doppler_shift: f64,
    pub magnitude_db: f64,
}

/// Local maxima (3×3) above `threshold_db` relative to the peak, refined by
/// parabolic interpolation along both axes, strongest first.
pub fn extract_peaks(map: &RangeDopplerMap, threshold_db: f64, max_peaks: usize) -> Vec<Detection> {
    let (nr, nd) = (map.range_bins(), map.doppler_bins());
    let mut found = Vec::new();
    for r in 0..nr {
        for d in 0..nd {
            let v = map.get(r, d);
            if v < threshold_db {
                continue;
            }
            let mut is_max = true;
            'nb: for dr in -1i64..=1 {
                for dd in -1i64..=1 {
                    if dr == 0 && dd == 0 {
                        continue;
                    }
                    let mut rr = r as i64 + dr;
                    if map.range_cyclic {
                        rr = rr.rem_euclid(nr as i64);
                    } else if rr < 0 || rr >= nr as i64 {
                        continue;
                    }
                    let d2 = (d as i64 + dd).rem_euclid(nd as i64) as usize;
                    let w = map.get(rr as usize, d2);
                    // Ties are broken towards the lower index so plateaus yield one peak.
                    if w > v || (w == v && (dr, dd) < (0, 0)) {
                        is_max = false;
                        break 'nb;
                    }
                }
            }
            if !is_max {
                continue;
            }
            let r_off = if map.range_cyclic && nr >= 3 {
                parabolic_offset(map.get((r + nr - 1) % nr, d), v, map.get((r + 1) % nr, d))
            } else if r > 0 && r + 1 < nr {
                parabolic_offset(map.get(r - 1, d), v, map.get(r + 1, d))
            } else {
                0.0
            };
            let d_off = if nd >= 3 {
                parabolic_offset(map.get(r, (d + nd - 1) % nd), v, map.get(r, (d + 1) % nd))
            } else {
                0.0
            };
            found.push(Detection {
                rel_bistatic_range: map.range_axis[r] + r_off * map.range_step(),
                doppler_shift: map.doppler_axis[d] + d_off * map.doppler_step(),
                magnitude_db: v,
            });
        }
    }
    found.sort_by(|a, b| b.magnitude_db.total_cmp(&a.magnitude_db));
    found.truncate(max_peaks);
    found
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SceneTarget {
    pub relative_range_m: f64,
    /// Absolute bistatic range, when the main-path length is known.
    pub bistatic_range_m: Option<f64>,
    pub doppler_hz: f64,
    pub magnitude_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SceneReport {
    /// True when ranges are relative to the main path only.
    pub relative: bool,
    pub known_main_range_m: Option<f64>,
    pub targets: Vec<SceneTarget>,
}

/// Converts detections to absolute bistatic ranges when the main-path
/// length is known. Negative relative ranges (paths shorter than the
/// synchronization reference) keep their sign.
pub fn bistatic_scene_report(detections: &[Detection], known_main_range: Option<f64>) -> SceneReport {
    SceneReport {
        relative: known_main_range.is_none(),
        known_main_range_m: known_main_range,
        targets: detections
            .iter()
            .map(|d| SceneTarget {
                relative_range_m: d.rel_bistatic_range,
                bistatic_range_m: known_main_range.map(|m| m + d.rel_bistatic_range),
                doppler_hz: d.doppler_shift,
                magnitude_db: d.magnitude_db,
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn small() -> FrameConfig {
        FrameConfig {
            n_subcarriers: 256,
            cp_len: 64,
            m_payload: 64,
            ..FrameConfig::short_pl()
        }
    }

    /// Ideal full-frame CFR of a set of (gain, delay in samples, Doppler in Hz) paths.
    fn synthetic(cfg: &FrameConfig, paths: &[(f64, f64, f64)]) -> ComplexGrid {
        let n = cfg.n_subcarriers;
        let tsym = cfg.symbol_len() as f64 / cfg.bandwidth_hz;
        ComplexGrid::from_fn(n, cfg.m_payload, |k, m| {
            paths
                .iter()
                .map(|&(a, d, f)| {
                    let ph = -2.0 * PI * signed_bin(k, n) * d / n as f64 + 2.0 * PI * f * tsym * m as f64;
                    Complex64::from_polar(a, ph)
                })
                .sum()
        })
    }

    #[test]
    fn point_target_lands_on_its_bin() {
        let cfg = small();
        let df = cfg.bandwidth_hz / (cfg.symbol_len() * cfg.m_payload) as f64;
        let cfr = synthetic(&cfg, &[(1.0, 10.0, 3.0 * df)]);
        let map = range_doppler(&cfr, &cfg, SensingMode::FullFrame, WindowKind::Hamming, 4, None).unwrap();
        let (r, d) = map.peak();
        assert_eq!(map.get(r, d), 0.0);
        assert!((map.range_axis[r] - 3.0).abs() < 1e-9);
        assert!((map.doppler_axis[d] - 3.0 * df).abs() < 1e-6);
        assert_eq!(map.range_bins(), 4 * cfg.n_subcarriers);
        assert!((map.range_step() - 0.3 / 4.0).abs() < 1e-12);
    }

    #[test]
    fn two_targets_are_separated() {
        let cfg = small();
        let df = cfg.bandwidth_hz / (cfg.symbol_len() * cfg.m_payload) as f64;
        let cfr = synthetic(&cfg, &[(1.0, 3.0, 0.0), (0.5, 8.0, 10.0 * df)]);
        let map = range_doppler(&cfr, &cfg, SensingMode::FullFrame, WindowKind::Hamming, 4, None).unwrap();
        let det = extract_peaks(&map, -10.0, 10);
        assert!(det.len() >= 2);
        assert!((det[0].rel_bistatic_range - 0.9).abs() < 0.15);
        assert!((det[1].rel_bistatic_range - 2.4).abs() < 0.15);
        assert!((det[1].doppler_shift - 10.0 * df).abs() < df / 2.0);
        assert!(extract_peaks(&map, -200.0, 3).len() == 3);
    }

    #[test]
    fn scene_report_flags_relative() {
        let d = [Detection {
            rel_bistatic_range: 2.175,
            doppler_shift: 0.0,
            magnitude_db: -30.0,
        }];
        let rep = bistatic_scene_report(&d, Some(100.0));
        assert!(!rep.relative);
        assert!((rep.targets[0].bistatic_range_m.unwrap() - 102.175).abs() < 1e-12);
        let rep = bistatic_scene_report(&d, None);
        assert!(rep.relative && rep.targets[0].bistatic_range_m.is_none());
    }

    #[test]
    fn negative_crop_keeps_sign() {
        let cfg = small();
        let cfr = synthetic(&cfg, &[(1.0, 0.0, 0.0), (0.3, -5.0, 0.0)]);
        let crop = RangeCrop { min_m: -3.0, max_m: 3.0 };
        let map = range_doppler(&cfr, &cfg, SensingMode::FullFrame, WindowKind::Hamming, 4, Some(crop)).unwrap();
        let det = extract_peaks(&map, -20.0, 2);
        assert!((det[1].rel_bistatic_range + 1.5).abs() < 0.05, "{det:?}");
    }
}
