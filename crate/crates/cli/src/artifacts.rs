//! Artifact files: JSON reports, plot-ready CSV tables and binary maps.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use radcom_core::comm_rx::{padded_cir, padded_delay, ConstellationHistogram};
use radcom_core::dsp::UnitaryDft;
use radcom_core::grid::ComplexGrid;
use radcom_core::radar::RangeDopplerMap;
use radcom_core::FrameConfig;
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::iq::write_iq;
use crate::pipeline::{RxResult, SensingResult};
use crate::scenario::Scenario;

/// Zero-padding of the exported CIR and its half-width in samples.
pub const CIR_ZERO_PAD: usize = 4;
pub const CIR_HALF_WIDTH: usize = 32;
/// Doppler interval exported by default, in Hz around zero.
pub const DEFAULT_DOPPLER_EXPORT_HZ: f64 = 10e3;

/// Nine significant digits.
pub fn fmt9(x: f64) -> String {
    format!("{x:.8e}")
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serializes") + "\n"
}

pub fn constellation_csv(h: &ConstellationHistogram) -> String {
    let mut s = String::from("bin_x,bin_y,normalized_density\n");
    for x in 0..h.bins {
        for y in 0..h.bins {
            let d = h.density[x * h.bins + y];
            let _ = writeln!(s, "{},{},{}", fmt9(h.bin_center(x)), fmt9(h.bin_center(y)), fmt9(d));
        }
    }
    s
}

/// Per-pilot-symbol CIR magnitudes around the main tap, in dB relative to
/// the strongest tap of the whole frame.
pub fn cir_evolution_csv(pilots: &ComplexGrid, cfg: &FrameConfig) -> String {
    let np = pilots.rows();
    let len = np * CIR_ZERO_PAD;
    let dft = UnitaryDft::new(len);
    let half = (CIR_HALF_WIDTH * CIR_ZERO_PAD).min(len / 2 - 1) as i64;
    let profiles: Vec<Vec<(f64, f64)>> = pilots
        .columns()
        .map(|col| {
            let cir = padded_cir(col, CIR_ZERO_PAD, &dft);
            (-half..=half)
                .map(|t| {
                    let q = t.rem_euclid(len as i64) as usize;
                    (padded_delay(q, len, CIR_ZERO_PAD), cir[q].norm_sqr())
                })
                .collect()
        })
        .collect();
    let peak = profiles.iter().flatten().map(|p| p.1).fold(0.0, f64::max);
    let ts_ns = 1e9 / cfg.bandwidth_hz;
    let mut s = String::from("payload_symbol,delay_samples,rel_delay_ns,magnitude_db\n");
    for (j, prof) in profiles.iter().enumerate() {
        let m = j * cfg.pilot_time_spacing;
        for &(d, p) in prof {
            let db = if p > 0.0 && peak > 0.0 { (10.0 * (p / peak).log10()).max(-300.0) } else { -300.0 };
            let _ = writeln!(s, "{m},{},{},{}", fmt9(d), fmt9(d * ts_ns), fmt9(db));
        }
    }
    s
}

fn doppler_window(sc: &Scenario, map: &RangeDopplerMap) -> Vec<usize> {
    let lo = sc.radar.doppler_min_hz.unwrap_or(-DEFAULT_DOPPLER_EXPORT_HZ);
    let hi = sc.radar.doppler_max_hz.unwrap_or(DEFAULT_DOPPLER_EXPORT_HZ);
    (0..map.doppler_bins())
        .filter(|&d| (lo..=hi).contains(&map.doppler_axis[d]))
        .collect()
}

pub fn rd_map_csv(map: &RangeDopplerMap, doppler_bins: &[usize]) -> String {
    let mut s = String::from("range_m,doppler_hz,mag_db\n");
    for r in 0..map.range_bins() {
        for &d in doppler_bins {
            let _ = writeln!(
                s,
                "{},{},{}",
                fmt9(map.range_axis[r]),
                fmt9(map.doppler_axis[d]),
                fmt9(map.get(r, d))
            );
        }
    }
    s
}

#[derive(Serialize)]
struct MapSidecar<'a> {
    format: &'static str,
    layout: &'static str,
    mode: &'a str,
    window: &'a str,
    zero_pad: usize,
    range_bins: usize,
    doppler_bins: usize,
    range_first_m: f64,
    range_step_m: f64,
    doppler_first_hz: f64,
    doppler_step_hz: f64,
}

/// Row-major `f32` dB grid plus a JSON sidecar with the axes.
pub fn rd_map_binary(map: &RangeDopplerMap, doppler_bins: &[usize]) -> (Vec<u8>, String) {
    let mut bytes = Vec::with_capacity(map.range_bins() * doppler_bins.len() * 4);
    for r in 0..map.range_bins() {
        for &d in doppler_bins {
            bytes.extend_from_slice(&(map.get(r, d) as f32).to_le_bytes());
        }
    }
    let side = MapSidecar {
        format: "f32_le",
        layout: "row_major_range_by_doppler",
        mode: map.mode.as_str(),
        window: map.window.as_str(),
        zero_pad: map.zero_pad,
        range_bins: map.range_bins(),
        doppler_bins: doppler_bins.len(),
        range_first_m: map.range_axis.first().copied().unwrap_or(0.0),
        range_step_m: map.range_step(),
        doppler_first_hz: doppler_bins.first().map_or(0.0, |&d| map.doppler_axis[d]),
        doppler_step_hz: map.doppler_step(),
    };
    (bytes, json(&side))
}

pub fn detections_csv(results: &[SensingResult]) -> String {
    let mut s = String::from("mode,rel_bistatic_range_m,bistatic_range_m,doppler_hz,magnitude_db\n");
    for r in results {
        for t in &r.scene.targets {
            let abs = t.bistatic_range_m.map(fmt9).unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{},{abs},{},{}",
                r.mode.as_str(),
                fmt9(t.relative_range_m),
                fmt9(t.doppler_hz),
                fmt9(t.magnitude_db)
            );
        }
    }
    s
}

/// Renders every receive-side artifact in memory.
pub fn render(sc: &Scenario, res: &RxResult) -> Vec<(String, Vec<u8>)> {
    let cfg = sc.frame_config();
    let mut files: Vec<(String, Vec<u8>)> = vec![
        ("sync_report.json".into(), json(&res.sync).into_bytes()),
        ("comm_metrics.json".into(), json(&res.rx.metrics).into_bytes()),
        (
            "constellation.csv".into(),
            constellation_csv(&ConstellationHistogram::from_symbols(&res.rx.equalized.symbols)).into_bytes(),
        ),
        ("cir_evolution.csv".into(), cir_evolution_csv(&res.rx.cfr.pilots, &cfg).into_bytes()),
    ];
    for s in &res.sensing {
        let bins = doppler_window(sc, &s.map);
        let mode = s.mode.as_str();
        files.push((format!("rd_map_{mode}.csv"), rd_map_csv(&s.map, &bins).into_bytes()));
        let (bin, side) = rd_map_binary(&s.map, &bins);
        files.push((format!("rd_map_{mode}.f32"), bin));
        files.push((format!("rd_map_{mode}.f32.json"), side.into_bytes()));
    }
    files.push(("detections.csv".into(), detections_csv(&res.sensing).into_bytes()));
    files
}

/// Writes the rendered artifacts (and optional IQ files) into `dir`.
pub fn write_all(
    dir: &Path,
    files: &[(String, Vec<u8>)],
    iq: &[(&str, &radcom_core::IqStream)],
) -> CliResult<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut written = Vec::new();
    for (name, bytes) in files {
        let p = dir.join(name);
        fs::write(&p, bytes).map_err(|e| CliError::io(&p, e))?;
        written.push(p);
    }
    for (name, stream) in iq {
        let p = dir.join(name);
        write_iq(&p, stream, name.trim_end_matches(".iq"))?;
        written.push(p);
    }
    Ok(written)
}
