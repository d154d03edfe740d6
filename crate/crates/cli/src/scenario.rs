//! JSON scenario schema.

use std::fs;
use std::path::{Path, PathBuf};

use radcom_core::channel::ChannelScenario;
use radcom_core::comm_rx::RxOptions;
use radcom_core::params::validate_config;
use radcom_core::radar::{RangeCrop, WindowKind};
use radcom_core::sync::SyncOptions;
use radcom_core::tx::info_capacity;
use radcom_core::{FrameConfig, SensingMode};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    LongPl,
    ShortPl,
}

impl Preset {
    pub fn config(self) -> FrameConfig {
        match self {
            Preset::LongPl => FrameConfig::long_pl(),
            Preset::ShortPl => FrameConfig::short_pl(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PayloadSpec {
    /// Seed of the info-bit generator; also the BER reference for captures.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Info bits per frame; defaults to the frame capacity.
    #[serde(default)]
    pub info_bits: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadarOptions {
    pub zero_pad: usize,
    pub window: WindowKind,
    /// Detection threshold in dB relative to the map peak.
    pub threshold_db: f64,
    pub max_peaks: usize,
    pub known_main_range_m: Option<f64>,
    /// Range interval that is computed and exported; defaults to -16..128
    /// range bins around the main path, clipped to the unambiguous range.
    pub range_min_m: Option<f64>,
    pub range_max_m: Option<f64>,
    /// Doppler interval exported to CSV; detection always uses the full axis.
    pub doppler_min_hz: Option<f64>,
    pub doppler_max_hz: Option<f64>,
}

impl Default for RadarOptions {
    fn default() -> Self {
        RadarOptions {
            zero_pad: 4,
            window: WindowKind::Hamming,
            threshold_db: -25.0,
            max_peaks: 10,
            known_main_range_m: None,
            range_min_m: None,
            range_max_m: None,
            doppler_min_hz: None,
            doppler_max_hz: None,
        }
    }
}

impl RadarOptions {
    pub fn crop(&self, full: RangeCrop) -> RangeCrop {
        RangeCrop {
            min_m: self.range_min_m.unwrap_or(full.min_m),
            max_m: self.range_max_m.unwrap_or(full.max_m),
        }
    }

    fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        if !(1..=16).contains(&self.zero_pad) {
            p.push("radar.zero_pad must be between 1 and 16".to_string());
        }
        if !(self.threshold_db < 0.0) {
            p.push("radar.threshold_db must be negative".to_string());
        }
        if self.max_peaks == 0 {
            p.push("radar.max_peaks must be positive".to_string());
        }
        if let (Some(a), Some(b)) = (self.range_min_m, self.range_max_m) {
            if !(a < b) {
                p.push("radar.range_min_m must be below radar.range_max_m".to_string());
            }
        }
        if let (Some(a), Some(b)) = (self.doppler_min_hz, self.doppler_max_hz) {
            if !(a < b) {
                p.push("radar.doppler_min_hz must be below radar.doppler_max_hz".to_string());
            }
        }
        p
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputOptions {
    pub dir: Option<PathBuf>,
    /// Also write tx.iq and rx.iq.
    pub write_iq: bool,
}

fn default_modes() -> Vec<SensingMode> {
    vec![SensingMode::PilotOnly, SensingMode::FullFrame]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: Option<String>,
    /// Named frame configuration; exclusive with `frame`.
    #[serde(default)]
    pub preset: Option<Preset>,
    #[serde(default)]
    pub frame: Option<FrameConfig>,
    /// Propagation and impairments; required by `run`, ignored by `capture`.
    #[serde(default)]
    pub channel: Option<ChannelScenario>,
    pub payload: PayloadSpec,
    #[serde(default)]
    pub sync: SyncOptions,
    #[serde(default)]
    pub receiver: RxOptions,
    #[serde(default)]
    pub radar: RadarOptions,
    #[serde(default = "default_modes")]
    pub sensing_modes: Vec<SensingMode>,
    #[serde(default)]
    pub output: OutputOptions,
}

impl Scenario {
    pub fn frame_config(&self) -> FrameConfig {
        match (&self.frame, self.preset) {
            (Some(f), _) => f.clone(),
            (None, Some(p)) => p.config(),
            (None, None) => FrameConfig::long_pl(),
        }
    }

    pub fn info_len(&self) -> usize {
        self.payload
            .info_bits
            .unwrap_or_else(|| info_capacity(&self.frame_config()))
    }

    /// Semantic checks beyond the schema; every problem is reported.
    pub fn problems(&self, needs_channel: bool) -> Vec<String> {
        let mut p = Vec::new();
        match (&self.frame, self.preset) {
            (Some(_), Some(_)) => p.push("give either `preset` or `frame`, not both".to_string()),
            (None, None) => p.push("missing frame configuration: set `preset` or `frame`".to_string()),
            _ => {}
        }
        let cfg = self.frame_config();
        let violations = validate_config(&cfg).err().unwrap_or_default();
        p.extend(violations.iter().map(|v| format!("frame: {v}")));
        if violations.is_empty() {
            let cap = info_capacity(&cfg);
            match self.payload.info_bits {
                Some(0) => p.push("payload.info_bits must be positive".to_string()),
                Some(n) if n > cap => p.push(format!(
                    "payload.info_bits = {n} exceeds the frame capacity of {cap} info bits"
                )),
                _ => {}
            }
        }
        if needs_channel {
            match &self.channel {
                None => p.push("missing field `channel`".to_string()),
                Some(ch) => {
                    if let Err(e) = ch.validate() {
                        p.push(format!("channel: {e}"));
                    }
                }
            }
            if self.payload.seed.is_none() {
                p.push("missing field `payload.seed`".to_string());
            }
        }
        if self.sensing_modes.is_empty() {
            p.push("sensing_modes must not be empty".to_string());
        }
        if !(self.sync.lock_threshold > 0.0 && self.sync.lock_threshold < 1.0) {
            p.push("sync.lock_threshold must lie in (0, 1)".to_string());
        }
        if self.receiver.max_iterations == 0 {
            p.push("receiver.max_iterations must be positive".to_string());
        }
        p.extend(self.radar.problems());
        p
    }
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::schema(path, &e))
}

/// Parses and checks a scenario file.
pub fn load_scenario(path: &Path, needs_channel: bool) -> CliResult<Scenario> {
    let sc: Scenario = read_json(path)?;
    let problems = sc.problems(needs_channel);
    if problems.is_empty() {
        Ok(sc)
    } else {
        Err(CliError::input(path, problems.join("; ")))
    }
}

/// Frame configuration from either a scenario file or a bare frame file
/// (a `FrameConfig` object or a preset name string).
pub fn load_frame_config(path: &Path) -> CliResult<FrameConfig> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| CliError::schema(path, &e))?;
    let cfg = if value.get("payload").is_some() || value.get("preset").is_some() {
        let sc: Scenario = serde_json::from_str(&text).map_err(|e| CliError::schema(path, &e))?;
        match (&sc.frame, sc.preset) {
            (Some(_), Some(_)) => return Err(CliError::input(path, "give either `preset` or `frame`, not both")),
            _ => sc.frame_config(),
        }
    } else if value.is_string() {
        serde_json::from_str::<Preset>(&text)
            .map_err(|e| CliError::schema(path, &e))?
            .config()
    } else {
        serde_json::from_str::<FrameConfig>(&text).map_err(|e| CliError::schema(path, &e))?
    };
    validate_config(&cfg).map_err(|v| {
        CliError::input(path, v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))
    })?;
    Ok(cfg)
}
