//! Frame configuration and closed-form radar/communication performance figures.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light used for all delay-to-range conversions (m/s).
///
/// The rounded value reproduces the published range figures exactly
/// (e.g. 2048 subcarriers at 1 GHz give 614.4 m).
pub const C0: f64 = 3.0e8;

/// OFDM frame, pilot and coding parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameConfig {
    /// Subcarriers per OFDM symbol (N).
    pub n_subcarriers: usize,
    /// Cyclic prefix length in samples (N_CP).
    pub cp_len: usize,
    /// Schmidl-Cox preamble symbols (M_S&C).
    pub m_sc: usize,
    /// SFO preamble symbols, arranged as identical pairs (M_SFO).
    pub m_sfo: usize,
    /// Payload symbols (M_pl).
    pub m_payload: usize,
    /// Pilot spacing in subcarriers (ΔN_pil).
    pub pilot_freq_spacing: usize,
    /// Pilot spacing in payload symbols (ΔM_pil).
    pub pilot_time_spacing: usize,
    /// Occupied bandwidth in Hz, equal to the nominal sample rate.
    pub bandwidth_hz: f64,
    #[serde(default = "default_bits_per_symbol")]
    pub bits_per_symbol: usize,
    #[serde(default = "default_code_rate")]
    pub code_rate: f64,
    #[serde(default = "default_pilot_seed")]
    pub pilot_seed: u64,
    #[serde(default = "default_preamble_seed")]
    pub preamble_seed: u64,
}

fn default_bits_per_symbol() -> usize {
    2
}

fn default_code_rate() -> f64 {
    2.0 / 3.0
}

fn default_pilot_seed() -> u64 {
    0x5eed_0001
}

fn default_preamble_seed() -> u64 {
    0x5eed_0002
}

impl FrameConfig {
    /// Long-payload parameter set (4096 payload symbols).
    pub fn long_pl() -> Self {
        FrameConfig {
            n_subcarriers: 2048,
            cp_len: 512,
            m_sc: 2,
            m_sfo: 10,
            m_payload: 4096,
            pilot_freq_spacing: 2,
            pilot_time_spacing: 4,
            bandwidth_hz: 1.0e9,
            bits_per_symbol: 2,
            code_rate: 2.0 / 3.0,
            pilot_seed: default_pilot_seed(),
            preamble_seed: default_preamble_seed(),
        }
    }

    /// Short-payload parameter set (512 payload symbols).
    pub fn short_pl() -> Self {
        FrameConfig {
            m_payload: 512,
            ..Self::long_pl()
        }
    }

    /// Preamble length M_pb = M_S&C + M_SFO.
    pub fn m_preamble(&self) -> usize {
        self.m_sc + self.m_sfo
    }

    /// Total OFDM symbols M = M_pb + M_pl.
    pub fn m_total(&self) -> usize {
        self.m_preamble() + self.m_payload
    }

    /// Samples per OFDM symbol including the cyclic prefix.
    pub fn symbol_len(&self) -> usize {
        self.n_subcarriers + self.cp_len
    }

    pub fn frame_len(&self) -> usize {
        self.symbol_len() * self.m_total()
    }

    pub fn sample_period(&self) -> f64 {
        1.0 / self.bandwidth_hz
    }

    /// Subcarrier spacing B/N in Hz.
    pub fn subcarrier_spacing(&self) -> f64 {
        self.bandwidth_hz / self.n_subcarriers as f64
    }

    pub fn pilot_subcarriers(&self) -> usize {
        self.n_subcarriers / self.pilot_freq_spacing
    }

    pub fn pilot_symbols(&self) -> usize {
        self.m_payload / self.pilot_time_spacing
    }

    pub fn pilot_count(&self) -> usize {
        self.pilot_subcarriers() * self.pilot_symbols()
    }

    /// Number of payload resource elements carrying data.
    pub fn data_capacity(&self) -> usize {
        self.n_subcarriers * self.m_payload - self.pilot_count()
    }

    /// Every violated invariant, in a fixed order.
    pub fn violations(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        for (name, value) in [
            ("N", self.n_subcarriers),
            ("N_CP", self.cp_len),
            ("M_S&C", self.m_sc),
            ("M_SFO", self.m_sfo),
            ("M_pl", self.m_payload),
            ("ΔN_pil", self.pilot_freq_spacing),
            ("ΔM_pil", self.pilot_time_spacing),
            ("bits_per_symbol", self.bits_per_symbol),
        ] {
            if value == 0 {
                v.push(Violation::NotPositive(name));
            }
        }
        if self.m_sfo % 2 != 0 {
            v.push(Violation::SfoPreambleOdd);
        }
        if self.n_subcarriers % 2 != 0 {
            v.push(Violation::SubcarriersOdd);
        }
        if self.pilot_freq_spacing > 0 && self.n_subcarriers % self.pilot_freq_spacing != 0 {
            v.push(Violation::SubcarriersNotDivisible);
        }
        if self.pilot_time_spacing > 0 && self.m_payload % self.pilot_time_spacing != 0 {
            v.push(Violation::PayloadNotDivisible);
        }
        if self.cp_len >= self.n_subcarriers {
            v.push(Violation::CyclicPrefixTooLong);
        }
        if !(self.bandwidth_hz.is_finite() && self.bandwidth_hz > 0.0) {
            v.push(Violation::Bandwidth);
        }
        if !(0.0..=1.0).contains(&self.code_rate) {
            v.push(Violation::CodeRate);
        }
        v
    }
}

/// A single violated configuration invariant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Violation {
    NotPositive(&'static str),
    SfoPreambleOdd,
    SubcarriersOdd,
    SubcarriersNotDivisible,
    PayloadNotDivisible,
    CyclicPrefixTooLong,
    Bandwidth,
    CodeRate,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NotPositive(name) => write!(f, "{name} must be positive"),
            Violation::SfoPreambleOdd => f.write_str("M_SFO must be even"),
            Violation::SubcarriersOdd => f.write_str("N must be even"),
            Violation::SubcarriersNotDivisible => f.write_str("N not divisible by ΔN_pil"),
            Violation::PayloadNotDivisible => f.write_str("M_pl not divisible by ΔM_pil"),
            Violation::CyclicPrefixTooLong => f.write_str("N_CP must be smaller than N"),
            Violation::Bandwidth => f.write_str("bandwidth must be finite and positive"),
            Violation::CodeRate => f.write_str("code rate must lie in [0, 1]"),
        }
    }
}

/// Returns every violated invariant of `cfg`, or `Ok(())`.
pub fn validate_config(cfg: &FrameConfig) -> std::result::Result<(), Vec<Violation>> {
    let v = cfg.violations();
    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}

pub(crate) fn ensure_valid(cfg: &FrameConfig) -> Result<()> {
    validate_config(cfg).map_err(Error::Config)
}

impl FrameConfig {
    /// `Ok` if valid, otherwise a configuration error listing every violation.
    pub fn ensure_valid(&self) -> Result<()> {
        ensure_valid(self)
    }
}

/// Which resource elements feed the radar processing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensingMode {
    PilotOnly,
    FullFrame,
}

impl SensingMode {
    /// Effective (frequency, time) spacing of the elements used for sensing.
    pub fn effective_spacing(self, cfg: &FrameConfig) -> (usize, usize) {
        match self {
            SensingMode::PilotOnly => (cfg.pilot_freq_spacing, cfg.pilot_time_spacing),
            SensingMode::FullFrame => (1, 1),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SensingMode::PilotOnly => "pilot_only",
            SensingMode::FullFrame => "full_frame",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RadarPerformance {
    pub processing_gain_db: f64,
    pub range_resolution: f64,
    pub max_unamb_range: f64,
    pub max_isi_free_range: f64,
    pub doppler_resolution: f64,
    pub max_unamb_doppler: f64,
    pub max_ici_free_doppler: f64,
}

pub fn radar_performance(cfg: &FrameConfig, mode: SensingMode) -> Result<RadarPerformance> {
    ensure_valid(cfg)?;
    let (dn, dm) = mode.effective_spacing(cfg);
    let n = cfg.n_subcarriers as f64;
    let ncp = cfg.cp_len as f64;
    let mpl = cfg.m_payload as f64;
    let b = cfg.bandwidth_hz;
    let gain = (n / dn as f64) * (mpl / dm as f64);
    Ok(RadarPerformance {
        processing_gain_db: 10.0 * gain.log10(),
        range_resolution: C0 / b,
        max_unamb_range: (n / dn as f64) * C0 / b,
        max_isi_free_range: ncp * C0 / b,
        doppler_resolution: b / ((n + ncp) * mpl),
        max_unamb_doppler: b / (2.0 * dm as f64 * (n + ncp)),
        max_ici_free_doppler: b / (10.0 * n),
    })
}

/// Net information rate at 100 % duty cycle in bit/s.
pub fn comm_throughput(cfg: &FrameConfig) -> Result<f64> {
    ensure_valid(cfg)?;
    let payload_elements = cfg.data_capacity() as f64;
    let frame_duration = cfg.frame_len() as f64 / cfg.bandwidth_hz;
    Ok(cfg.bits_per_symbol as f64 * cfg.code_rate * payload_elements / frame_duration)
}
