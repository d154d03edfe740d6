//! Bistatic OFDM joint radar-communication link simulator.

pub mod channel;
pub mod comm_rx;
pub mod dsp;
pub mod error;
pub mod grid;
pub mod ldpc;
pub mod params;
pub mod radar;
pub mod sync;
pub mod tx;

pub use error::{Error, Result, Stage};
pub use params::{FrameConfig, SensingMode};
pub use grid::ComplexGrid;
pub use tx::IqStream;
