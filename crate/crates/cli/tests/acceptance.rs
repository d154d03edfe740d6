//! Acceptance checks; prints one PASS/FAIL line per criterion.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use num_complex::Complex64;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRng, TestRunner};
use radcom_cli::artifacts::cir_evolution_csv;
use radcom_cli::pipeline::{run, RunResult};
use radcom_cli::scenario::{load_scenario, Scenario};
use radcom_core::channel::{add_awgn, apply_paths_and_cfo, apply_sfo, run_channel, ChannelScenario};
use radcom_core::comm_rx::{receive, track_main_delay};
use radcom_core::ldpc::LdpcCode;
use radcom_core::params::radar_performance;
use radcom_core::radar::{range_bin_m, Guard};
use radcom_core::sync::{resample_correct, synchronize};
use radcom_core::tx::{demap_qpsk_hard, map_qpsk, ofdm_demodulate, ofdm_modulate, random_bits, transmit};
use radcom_core::{ComplexGrid, IqStream, SensingMode};

type Outcome = Result<String, String>;

fn scenario_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn load(name: &str) -> Result<(Scenario, PathBuf), String> {
    let p = scenario_path(name);
    let sc = load_scenario(&p, true).map_err(|e| e.to_string())?;
    Ok((sc, p))
}

fn run_named(name: &str) -> Result<(Scenario, RunResult), String> {
    let (sc, p) = load(name)?;
    let res = run(&sc, &p).map_err(|e| e.to_string())?;
    Ok((sc, res))
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// 1. Closed-form table values printed by `radcom params`.
fn params_table() -> Outcome {
    let dir = std::env::temp_dir().join(format!("radcom-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    let t = Instant::now();
    for preset in ["long_pl", "short_pl"] {
        let f = dir.join(format!("{preset}.json"));
        std::fs::write(&f, format!("\"{preset}\"")).map_err(|e| e.to_string())?;
        let o = Command::new(env!("CARGO_BIN_EXE_radcom"))
            .arg("params")
            .arg(&f)
            .output()
            .map_err(|e| e.to_string())?;
        if !o.status.success() {
            return Err(String::from_utf8_lossy(&o.stderr).into_owned());
        }
        out.push(String::from_utf8_lossy(&o.stdout).into_owned());
    }
    let elapsed = t.elapsed().as_secs_f64();
    let _ = std::fs::remove_dir_all(&dir);
    let row = |text: &str, label: &str| -> Vec<String> {
        text.lines()
            .find(|l| l.starts_with(label))
            .map(|l| l[label.len()..].split_whitespace().map(str::to_string).collect())
            .unwrap_or_default()
    };
    let (long, short) = (&out[0], &out[1]);
    let expect: [(&str, &str, &[&str]); 9] = [
        (long, "processing gain G_p [dB]", &["69.24", "60.21"]),
        (long, "range resolution [m]", &["0.30", "0.30"]),
        (long, "max. unambiguous range [m]", &["614.4", "307.2"]),
        (long, "max. ISI-free range [m]", &["153.6", "153.6"]),
        (long, "Doppler resolution [Hz]", &["95.37", "95.37"]),
        (long, "max. unambiguous Doppler [kHz]", &["195.31", "48.83"]),
        (long, "max. ICI-free Doppler [kHz]", &["48.83", "48.83"]),
        (long, "data rate [Gbit/s]", &["0.93"]),
        (short, "Doppler resolution [Hz]", &["762.94", "762.94"]),
    ];
    let mut bad: Vec<String> = expect
        .iter()
        .filter(|(text, label, want)| row(text, label) != want.iter().map(|s| s.to_string()).collect::<Vec<_>>())
        .map(|(text, label, want)| format!("{label}: {:?} != {want:?}", row(text, label)))
        .collect();
    if row(short, "data rate [Gbit/s]") != ["0.91"] {
        bad.push(format!("short data rate {:?}", row(short, "data rate [Gbit/s]")));
    }
    if !bad.is_empty() {
        return Err(bad.join("; "));
    }
    check(
        elapsed < 1.0,
        format!("G_p 69.24/60.21 dB, dR 0.30 m, R 614.4/307.2/153.6 m, dfD 95.37/762.94 Hz, fD 195.31/48.83/48.83 kHz, 0.93/0.91 Gbit/s; both presets in {elapsed:.3} s"),
    )
}

// 2. Clean loopback at N = 256.
fn clean_loopback() -> Outcome {
    let t = Instant::now();
    let (_, res) = run_named("loopback_n256.json")?;
    let m = &res.rx.rx.metrics;
    check(
        m.info_bit_errors == Some(0) && m.evm_rms_percent < 0.01,
        format!(
            "{} info bits, {:?} errors, EVM {:.2e}% ({:.1} s)",
            m.info_bits,
            m.info_bit_errors,
            m.evm_rms_percent,
            t.elapsed().as_secs_f64()
        ),
    )
}

// 3. Short-payload synchronization over 100 noise seeds.
fn sync_monte_carlo() -> Outcome {
    let t = Instant::now();
    let (sc, _) = load("short_pl_sync.json")?;
    let cfg = sc.frame_config();
    let ch = sc.channel.clone().ok_or("scenario lacks a channel")?;
    let imp = &ch.impairments;
    let df = cfg.subcarrier_spacing();
    let true_start = (imp.sto_s * cfg.bandwidth_hz).round() as usize;
    if (imp.cfo_hz - 0.3 * df).abs() > 1e-6
        || imp.sfo != 2e-5
        || imp.snr_db != Some(15.0)
        || true_start != 5000
        || cfg.m_payload != 512
    {
        return Err("short_pl_sync.json does not hold the criterion settings".into());
    }
    let bits = random_bits(sc.info_len(), sc.payload.seed.unwrap_or(0));
    let tx = transmit(&cfg, &bits).map_err(|e| e.to_string())?;
    let (mut timing_ok, mut ber_fail) = (0, 0);
    let mut rel = Vec::new();
    for seed in 0..100u64 {
        let mut ch = ch.clone();
        ch.impairments.noise_seed = seed;
        let y = run_channel(&tx.stream, &ch).map_err(|e| e.to_string())?;
        match synchronize(&y, &cfg, &sc.sync) {
            Ok((payload, rep)) => {
                if rep.fine_start.abs_diff(true_start) <= 1 {
                    timing_ok += 1;
                }
                rel.push((rep.sfo_hat - imp.sfo).abs() / imp.sfo);
                match receive(&payload, &cfg, &sc.receiver, bits.len(), Some(&bits)) {
                    Ok(out) if out.metrics.post_fec_ber == Some(0.0) => {}
                    _ => ber_fail += 1,
                }
            }
            Err(_) => {
                rel.push(f64::INFINITY);
                ber_fail += 1;
            }
        }
    }
    rel.sort_by(f64::total_cmp);
    let median = 0.5 * (rel[49] + rel[50]);
    check(
        timing_ok >= 99 && median <= 0.05 && ber_fail == 0,
        format!(
            "timing within 1 sample {timing_ok}/100, median SFO error {:.2}%, seeds with post-FEC errors {ber_fail} ({:.0} s)",
            100.0 * median,
            t.elapsed().as_secs_f64()
        ),
    )
}

/// Per-symbol main-tap delay from cir_evolution.csv, refined parabolically on the dB values.
fn csv_delays(csv: &str) -> Vec<(f64, f64)> {
    let mut rows: Vec<(usize, f64, f64)> = Vec::new();
    for line in csv.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        rows.push((f[0].parse().unwrap(), f[1].parse().unwrap(), f[3].parse().unwrap()));
    }
    let mut out = Vec::new();
    for chunk in rows.chunk_by(|a, b| a.0 == b.0) {
        let i = (0..chunk.len()).max_by(|&a, &b| chunk[a].2.total_cmp(&chunk[b].2)).unwrap();
        let mut d = chunk[i].1;
        if i > 0 && i + 1 < chunk.len() {
            let (l, c, r) = (chunk[i - 1].2, chunk[i].2, chunk[i + 1].2);
            let den = l - 2.0 * c + r;
            if den != 0.0 {
                d += 0.5 * (l - r) / den * (chunk[i + 1].1 - chunk[i].1);
            }
        }
        out.push((chunk[0].0 as f64, d));
    }
    out
}

fn slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

// 4. Linear delay migration without compensation, none with it.
fn delay_migration() -> Outcome {
    let t = Instant::now();
    let (sc, res) = run_named("fig2_migration.json")?;
    let cfg = sc.frame_config();
    let delta = sc.channel.as_ref().map_or(0.0, |c| c.impairments.sfo);
    let csv = cir_evolution_csv(&res.rx.rx.cfr.pilots, &cfg);
    drop(res);
    let fitted = slope(&csv_delays(&csv));
    // A fast receiver clock shortens the main-path delay.
    let expected = -delta * cfg.symbol_len() as f64;
    let slope_ok = (fitted - expected).abs() <= 0.1 * expected.abs();

    let (sc2, res2) = run_named("fig2_migration_compensated.json")?;
    let cfg2 = sc2.frame_config();
    let track = track_main_delay(&res2.rx.rx.cfr.pilots, &cfg2);
    let drift = (track.slope * cfg2.m_payload as f64).abs();
    let span = {
        let d: Vec<f64> = track.delays.iter().map(|p| p.1).collect();
        d.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - d.iter().cloned().fold(f64::INFINITY, f64::min)
    };
    check(
        slope_ok && drift <= 0.5,
        format!(
            "uncompensated slope {fitted:.6} vs {expected:.6} samples/symbol (|delta|(N+N_CP) = {:.6}); compensated drift {drift:.3} samples, span {span:.3} ({:.0} s)",
            expected.abs(),
            t.elapsed().as_secs_f64()
        ),
    )
}

// 5. EVM contrast between long and short payloads.
fn constellation_contrast() -> Outcome {
    let t = Instant::now();
    let (a, long) = run_named("fig3_long_pl.json")?;
    let evm_long = long.rx.rx.metrics.evm_rms_percent;
    drop(long);
    let (b, short) = run_named("fig3_short_pl.json")?;
    let evm_short = short.rx.rx.metrics.evm_rms_percent;
    if a.channel != b.channel || a.receiver != b.receiver || a.sync != b.sync {
        return Err("fig3 scenarios differ beyond the payload length".into());
    }
    check(
        evm_long > evm_short,
        format!(
            "EVM long {evm_long:.2}% > short {evm_short:.2}% ({:.0} s)",
            t.elapsed().as_secs_f64()
        ),
    )
}

// 6. Point target 7.25 ns behind the main path.
fn point_target() -> Outcome {
    let t = Instant::now();
    let (sc, res) = run_named("fig4_target.json")?;
    let cfg = sc.frame_config();
    let full = res
        .rx
        .sensing
        .iter()
        .find(|s| s.mode == SensingMode::FullFrame)
        .ok_or("no full-frame result")?;
    let dr = range_bin_m(&cfg);
    let dfd = radar_performance(&cfg, SensingMode::FullFrame).map_err(|e| e.to_string())?.doppler_resolution;
    let hit = full
        .detections
        .iter()
        .find(|d| (d.rel_bistatic_range - 2.175).abs() <= dr / 2.0 && (d.doppler_shift - 2000.0).abs() <= dfd / 2.0);
    let elapsed = t.elapsed().as_secs_f64();
    match hit {
        Some(d) => check(
            elapsed < 60.0,
            format!(
                "detected at {:.4} m, {:.1} Hz, {:.1} dB (window 2.175 +/- {:.3} m, 2000 +/- {:.1} Hz; {elapsed:.0} s)",
                d.rel_bistatic_range,
                d.doppler_shift,
                d.magnitude_db,
                dr / 2.0,
                dfd / 2.0
            ),
        ),
        None => Err(format!("no detection near 2.175 m / 2 kHz in {:?}", full.detections)),
    }
}

// 7. Floor difference between the sensing modes and pilot-spacing aliasing.
fn gain_and_alias() -> Outcome {
    let t = Instant::now();
    let sc: Scenario = serde_json::from_value(serde_json::json!({
        "frame": {
            "n_subcarriers": 256, "cp_len": 96, "m_sc": 2, "m_sfo": 10, "m_payload": 256,
            "pilot_freq_spacing": 4, "pilot_time_spacing": 2, "bandwidth_hz": 1.0e9
        },
        "channel": {
            "main_path": { "gain": [1.0, 0.0] },
            "secondary_paths": [{ "gain": [0.1, 0.0], "delay_s": 80.0e-9, "doppler_hz": 50000.0 }],
            "impairments": { "sto_s": 2.0e-6, "snr_db": 10.0, "noise_seed": 21 }
        },
        "payload": { "seed": 22 },
        "radar": { "threshold_db": -30.0, "max_peaks": 4 }
    }))
    .map_err(|e| e.to_string())?;
    let res = run(&sc, Path::new("<gain scenario>")).map_err(|e| e.to_string())?;
    let cfg = sc.frame_config();
    if res.rx.rx.metrics.codewords_failed != 0 {
        return Err("payload did not decode".into());
    }
    let dr = range_bin_m(&cfg);
    let (true_r, alias_r) = (80.0 * dr, (80.0 - 64.0) * dr);
    let mut floors = [0.0; 2];
    let mut alias_ok = true;
    let mut notes = Vec::new();
    for (i, mode) in [SensingMode::FullFrame, SensingMode::PilotOnly].into_iter().enumerate() {
        let s = res.rx.sensing.iter().find(|s| s.mode == mode).ok_or("missing mode")?;
        let step_d = 4.0 * s.map.doppler_step();
        // Mask the sidelobe crosses through both paths.
        let cross = |r: f64, f: f64| {
            [
                Guard { range_m: r, doppler_hz: 0.0, range_half_width_m: 3.0 * dr, doppler_half_width_hz: f64::INFINITY },
                Guard { range_m: 0.0, doppler_hz: f, range_half_width_m: f64::INFINITY, doppler_half_width_hz: 3.0 * step_d },
            ]
        };
        let target_r = if mode == SensingMode::FullFrame { true_r } else { alias_r };
        let guards: Vec<Guard> = cross(0.0, 0.0).into_iter().chain(cross(target_r, 50e3)).collect();
        floors[i] = s.map.floor_db(&guards);
        let near = |r: f64| {
            s.detections
                .iter()
                .skip(1)
                .any(|d| (d.rel_bistatic_range - r).abs() <= dr && (d.doppler_shift - 50e3).abs() <= step_d)
        };
        let ok = match mode {
            SensingMode::FullFrame => near(true_r) && !near(alias_r),
            SensingMode::PilotOnly => near(alias_r) && !near(true_r),
        };
        alias_ok &= ok;
        notes.push(format!("{} peak at {}", mode.as_str(), if near(true_r) { "true range" } else if near(alias_r) { "alias" } else { "neither" }));
    }
    let diff = floors[1] - floors[0];
    let expected = radar_performance(&cfg, SensingMode::FullFrame).map_err(|e| e.to_string())?.processing_gain_db
        - radar_performance(&cfg, SensingMode::PilotOnly).map_err(|e| e.to_string())?.processing_gain_db;
    check(
        (diff - expected).abs() <= 1.5 && alias_ok,
        format!(
            "floor full {:.2} dB, pilot {:.2} dB, difference {diff:.2} vs {expected:.2} dB; path at {true_r:.1} m: {} ({:.0} s)",
            floors[0],
            floors[1],
            notes.join(", "),
            t.elapsed().as_secs_f64()
        ),
    )
}

// 8. Property suites with 100 randomized cases each.
fn property_suites() -> Outcome {
    let cases = 100;
    let runner = || {
        let config = Config { cases, failure_persistence: None, ..Config::default() };
        TestRunner::new_with_rng(config.clone(), TestRng::deterministic_rng(config.rng_algorithm))
    };
    let fail = |m: String| TestCaseError::fail(m);
    let mut results: Vec<(&str, Result<(), String>)> = Vec::new();

    results.push((
        "qpsk+ofdm round trip",
        runner()
            .run(&(any::<u64>(), 0usize..32), |(seed, cp)| {
                let bits = random_bits(2 * 64 * 6, seed);
                if demap_qpsk_hard(&map_qpsk(&bits).unwrap()) != bits {
                    return Err(fail("qpsk".into()));
                }
                let syms = map_qpsk(&bits).unwrap();
                let g = ComplexGrid::from_columns(64, syms.chunks(64).map(|c| c.to_vec()));
                let back = ofdm_demodulate(&ofdm_modulate(&g, cp), 64, cp).unwrap();
                if back.max_relative_error(&g) > 1e-10 {
                    return Err(fail("ofdm".into()));
                }
                Ok(())
            })
            .map_err(|e| e.to_string()),
    ));

    results.push((
        "ldpc parity",
        runner()
            .run(&any::<u64>(), |seed| {
                let code = LdpcCode::rate_2_3();
                let cw = code.encode(&random_bits(code.k(), seed));
                if code.is_codeword(&cw) && cw.len() == code.n() {
                    Ok(())
                } else {
                    Err(fail("parity violated".into()))
                }
            })
            .map_err(|e| e.to_string()),
    ));

    results.push((
        "resampler inversion",
        runner()
            .run(&(-1e-4f64..1e-4, prop::collection::vec((-0.4f64..0.4, 0.2f64..1.0, -PI..PI), 1..4)), |(delta, tones)| {
                let s: Vec<Complex64> = (0..6000)
                    .map(|n| tones.iter().map(|&(f, a, p)| Complex64::from_polar(a, 2.0 * PI * f * n as f64 + p)).sum())
                    .collect();
                let x = IqStream::new(s, 1e9);
                let y = resample_correct(&apply_sfo(&x, delta), delta);
                let peak = x.samples.iter().map(|v| v.norm()).fold(0.0, f64::max);
                let err = (200..5700).map(|i| (y.samples[i] - x.samples[i]).norm()).fold(0.0, f64::max);
                if err / peak < 1e-3 {
                    Ok(())
                } else {
                    Err(fail(format!("relative error {}", err / peak)))
                }
            })
            .map_err(|e| e.to_string()),
    ));

    results.push((
        "awgn calibration",
        runner()
            .run(&(-10.0f64..40.0, 0.01f64..100.0, any::<u64>()), |(snr, p, seed)| {
                let z = IqStream::new(vec![Complex64::new(0.0, 0.0); 200_000], 1e9);
                let y = add_awgn(&z, Some(snr), p, seed);
                let got = 10.0 * (p / y.mean_power()).log10();
                if (got - snr).abs() < 0.1 {
                    Ok(())
                } else {
                    Err(fail(format!("{got} vs {snr}")))
                }
            })
            .map_err(|e| e.to_string()),
    ));

    results.push((
        "shift theorem",
        runner()
            .run(&(0usize..=16, any::<u64>()), |(d, seed)| {
                let (n, cp) = (64usize, 16usize);
                let syms = map_qpsk(&random_bits(2 * n * 4, seed)).unwrap();
                let g = ComplexGrid::from_columns(n, syms.chunks(n).map(|c| c.to_vec()));
                let mut sc = ChannelScenario::clean();
                sc.main_path.delay_s = d as f64 * 1e-9;
                let y = apply_paths_and_cfo(&IqStream::new(ofdm_modulate(&g, cp), 1e9), &sc).unwrap();
                let rx = ofdm_demodulate(&y.samples[..4 * (n + cp)], n, cp).unwrap();
                let expected = ComplexGrid::from_fn(n, 4, |k, m| {
                    g.get(k, m) * Complex64::from_polar(1.0, -2.0 * PI * (k * d % n) as f64 / n as f64)
                });
                if rx.max_relative_error(&expected) < 1e-10 {
                    Ok(())
                } else {
                    Err(fail("shift theorem violated".into()))
                }
            })
            .map_err(|e| e.to_string()),
    ));

    let failed: Vec<String> = results
        .iter()
        .filter_map(|(name, r)| r.as_ref().err().map(|e| format!("{name}: {e}")))
        .collect();
    let names: Vec<&str> = results.iter().map(|r| r.0).collect();
    if failed.is_empty() {
        Ok(format!("{} suites x {cases} cases: {}", names.len(), names.join(", ")))
    } else {
        Err(failed.join("; "))
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("table golden numbers", params_table),
        ("noiseless loopback", clean_loopback),
        ("synchronization under impairment", sync_monte_carlo),
        ("delay migration", delay_migration),
        ("long vs short constellation", constellation_contrast),
        ("radar point target", point_target),
        ("processing gain and aliasing", gain_and_alias),
        ("property suites", property_suites),
    ];
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut failures = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = (i + 1).to_string();
        if filter.as_deref().is_some_and(|x| x != id) {
            continue;
        }
        match f() {
            Ok(detail) => println!("[PASS] criterion {id} {name}: {detail}"),
            Err(detail) => {
                failures += 1;
                println!("[FAIL] criterion {id} {name}: {detail}");
            }
        }
    }
    if failures > 0 {
        std::process::exit(1);
    }
}
