//! Little-endian interleaved `f32` IQ files with a JSON sidecar
//! (`<file>.json`) holding the sample rate and length.

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use radcom_core::IqStream;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::scenario::read_json;

pub const FORMAT: &str = "cf32_le";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IqSidecar {
    pub format: String,
    pub sample_rate_hz: f64,
    pub sample_count: usize,
    /// Sample index of the first frame sample, when known (simulated streams).
    #[serde(default)]
    pub frame_origin: Option<usize>,
    #[serde(default)]
    pub description: Option<String>,
}

pub fn sidecar_path(iq: &Path) -> PathBuf {
    let mut s = iq.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Rounds every sample to `f32` precision, the resolution of the file format.
pub fn quantize(stream: &IqStream) -> IqStream {
    IqStream {
        samples: stream
            .samples
            .iter()
            .map(|v| Complex64::new(v.re as f32 as f64, v.im as f32 as f64))
            .collect(),
        ..stream.clone()
    }
}

pub fn encode(stream: &IqStream) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(stream.len() * 8);
    for v in &stream.samples {
        bytes.extend_from_slice(&(v.re as f32).to_le_bytes());
        bytes.extend_from_slice(&(v.im as f32).to_le_bytes());
    }
    bytes
}

pub fn decode(bytes: &[u8]) -> Option<Vec<Complex64>> {
    if bytes.len() % 8 != 0 {
        return None;
    }
    let f = |b: &[u8]| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64;
    Some(bytes.chunks_exact(8).map(|c| Complex64::new(f(&c[..4]), f(&c[4..]))).collect())
}

pub fn write_iq(path: &Path, stream: &IqStream, description: &str) -> CliResult<()> {
    fs::write(path, encode(stream)).map_err(|e| CliError::io(path, e))?;
    let sidecar = IqSidecar {
        format: FORMAT.to_string(),
        sample_rate_hz: stream.nominal_rate,
        sample_count: stream.len(),
        frame_origin: stream.origin_index,
        description: Some(description.to_string()),
    };
    let side = sidecar_path(path);
    let json = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    fs::write(&side, json + "\n").map_err(|e| CliError::io(&side, e))
}

pub fn read_iq(path: &Path) -> CliResult<IqStream> {
    let side = sidecar_path(path);
    if !side.exists() {
        return Err(CliError::input(path, format!("missing sidecar {}", side.display())));
    }
    let meta: IqSidecar = read_json(&side)?;
    if meta.format != FORMAT {
        return Err(CliError::input(
            &side,
            format!("unsupported sample format `{}`, expected `{FORMAT}`", meta.format),
        ));
    }
    if !(meta.sample_rate_hz > 0.0 && meta.sample_rate_hz.is_finite()) {
        return Err(CliError::input(&side, "sample_rate_hz must be positive"));
    }
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    let expected = meta.sample_count * 8;
    if bytes.len() != expected {
        return Err(CliError::input(
            path,
            format!(
                "file holds {} bytes but the sidecar declares {} samples ({expected} bytes); truncated or mismatched capture",
                bytes.len(),
                meta.sample_count
            ),
        ));
    }
    let samples = decode(&bytes).expect("length checked");
    if samples.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(CliError::input(path, "capture contains non-finite samples"));
    }
    Ok(IqStream {
        samples,
        nominal_rate: meta.sample_rate_hz,
        origin_index: meta.frame_origin,
    })
}
