use std::fmt;

use thiserror::Error;

use crate::params::Violation;

/// Receiver stage that produced a failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    SchmidlCox,
    FineTiming,
    SfoEstimation,
    Resampling,
    Demodulation,
    DopplerEstimation,
    ChannelEstimation,
    Decoding,
    RadarReconstruction,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::SchmidlCox => "schmidl_cox",
            Stage::FineTiming => "fine_timing",
            Stage::SfoEstimation => "sfo_estimation",
            Stage::Resampling => "resampling",
            Stage::Demodulation => "demodulation",
            Stage::DopplerEstimation => "doppler_estimation",
            Stage::ChannelEstimation => "channel_estimation",
            Stage::Decoding => "decoding",
            Stage::RadarReconstruction => "radar_reconstruction",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {}", join_violations(.0))]
    Config(Vec<Violation>),

    #[error("payload of {requested} info bits exceeds frame capacity of {max_info_bits} info bits")]
    Capacity {
        requested: usize,
        max_info_bits: usize,
    },

    #[error("framing error: {0}")]
    Framing(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("no frame lock: peak timing metric {peak_metric:.3} below threshold {threshold:.3}")]
    NoLock { peak_metric: f64, threshold: f64 },

    #[error("ambiguous timing: correlation peak-to-sidelobe ratio {ratio:.2} below {threshold:.2}")]
    AmbiguousTiming { ratio: f64, threshold: f64 },

    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("weak main path: strongest CIR tap only {peak_over_median_db:.1} dB above median")]
    WeakMainPath { peak_over_median_db: f64 },

    #[error("reconstruction error: {0}")]
    Reconstruction(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Tags the error with `stage` unless it already carries a tag.
    pub fn at(self, stage: Stage) -> Error {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    /// Stage tag if this error came out of a receiver stage.
    pub fn stage(&self) -> Option<Stage> {
        match self {
            Error::Stage { stage, .. } => Some(*stage),
            _ => None,
        }
    }
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;
