//! Closed-form performance table printed by `radcom params`.

use std::fmt::Write as _;

use radcom_core::params::{comm_throughput, radar_performance};
use radcom_core::{FrameConfig, Result, SensingMode};

pub fn render(cfg: &FrameConfig) -> Result<String> {
    let full = radar_performance(cfg, SensingMode::FullFrame)?;
    let pilot = radar_performance(cfg, SensingMode::PilotOnly)?;
    let rate = comm_throughput(cfg)?;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "N = {}, N_CP = {}, M_pb = {}, M_pl = {}, pilot spacing = ({}, {}), B = {} MHz",
        cfg.n_subcarriers,
        cfg.cp_len,
        cfg.m_preamble(),
        cfg.m_payload,
        cfg.pilot_freq_spacing,
        cfg.pilot_time_spacing,
        cfg.bandwidth_hz / 1e6
    );
    let _ = writeln!(s, "{:<34}{:>12}{:>12}", "", "full", "pilot");
    let mut row = |label: &str, a: String, b: String| {
        let _ = writeln!(s, "{label:<34}{a:>12}{b:>12}");
    };
    row("processing gain G_p [dB]", format!("{:.2}", full.processing_gain_db), format!("{:.2}", pilot.processing_gain_db));
    row("range resolution [m]", format!("{:.2}", full.range_resolution), format!("{:.2}", pilot.range_resolution));
    row("max. unambiguous range [m]", format!("{:.1}", full.max_unamb_range), format!("{:.1}", pilot.max_unamb_range));
    row("max. ISI-free range [m]", format!("{:.1}", full.max_isi_free_range), format!("{:.1}", pilot.max_isi_free_range));
    row("Doppler resolution [Hz]", format!("{:.2}", full.doppler_resolution), format!("{:.2}", pilot.doppler_resolution));
    row(
        "max. unambiguous Doppler [kHz]",
        format!("{:.2}", full.max_unamb_doppler / 1e3),
        format!("{:.2}", pilot.max_unamb_doppler / 1e3),
    );
    row(
        "max. ICI-free Doppler [kHz]",
        format!("{:.2}", full.max_ici_free_doppler / 1e3),
        format!("{:.2}", pilot.max_ici_free_doppler / 1e3),
    );
    let _ = writeln!(s, "{:<34}{:>12.2}", "data rate [Gbit/s]", rate / 1e9);
    Ok(s)
}
