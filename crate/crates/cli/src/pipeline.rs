//! TX → channel → RX execution for scenarios and captures.

use std::path::Path;

use radcom_core::channel::run_channel;
use radcom_core::comm_rx::{receive, RxOutput};
use radcom_core::radar::{
    bistatic_scene_report, cfr_for_sensing, extract_peaks, full_crop, range_bin_m, range_doppler, Detection,
    RangeCrop, RangeDopplerMap, SceneReport,
};
use radcom_core::sync::{synchronize, SyncReport};
use radcom_core::tx::{random_bits, transmit};
use radcom_core::{IqStream, SensingMode, Stage};

use crate::error::{CliError, CliResult};
use crate::iq::quantize;
use crate::scenario::Scenario;

/// Default range crop in unpadded range bins around the main path.
const DEFAULT_CROP_BINS: (f64, f64) = (-16.0, 128.0);

pub struct SensingResult {
    pub mode: SensingMode,
    pub map: RangeDopplerMap,
    pub detections: Vec<Detection>,
    pub scene: SceneReport,
}

/// Everything the receive side produces.
pub struct RxResult {
    pub sync: SyncReport,
    pub rx: RxOutput,
    pub sensing: Vec<SensingResult>,
}

pub struct RunResult {
    pub tx: IqStream,
    /// Received stream at file precision, as written to `rx.iq`.
    pub rx_stream: IqStream,
    pub rx: RxResult,
}

pub fn default_crop(sc: &Scenario, mode: SensingMode) -> RangeCrop {
    let cfg = sc.frame_config();
    let bin = range_bin_m(&cfg);
    let full = full_crop(&cfg, mode);
    let def = RangeCrop {
        min_m: DEFAULT_CROP_BINS.0 * bin,
        max_m: (DEFAULT_CROP_BINS.1 * bin).min(full.max_m + DEFAULT_CROP_BINS.0 * bin),
    };
    sc.radar.crop(def)
}

/// Transmits the scenario payload through the scenario channel.
pub fn simulate(sc: &Scenario, path: &Path) -> CliResult<(IqStream, IqStream)> {
    let cfg = sc.frame_config();
    let seed = sc
        .payload
        .seed
        .ok_or_else(|| CliError::input(path, "missing field `payload.seed`"))?;
    let channel = sc
        .channel
        .as_ref()
        .ok_or_else(|| CliError::input(path, "missing field `channel`"))?;
    let bits = random_bits(sc.info_len(), seed);
    let tx = transmit(&cfg, &bits).map_err(|e| CliError::from_core(path, "transmit", e))?;
    let rx = run_channel(&tx.stream, channel).map_err(|e| CliError::from_core(path, "channel", e))?;
    Ok((tx.stream, quantize(&rx)))
}

/// Synchronization, communication receiver and radar processing.
pub fn process(sc: &Scenario, stream: &IqStream, path: &Path) -> CliResult<RxResult> {
    let cfg = sc.frame_config();
    if (stream.nominal_rate - cfg.bandwidth_hz).abs() > 1e-6 * cfg.bandwidth_hz {
        return Err(CliError::input(
            path,
            format!(
                "sample rate {} Hz does not match the configured bandwidth {} Hz",
                stream.nominal_rate, cfg.bandwidth_hz
            ),
        ));
    }
    let info_len = sc.info_len();
    let reference = sc.payload.seed.map(|s| random_bits(info_len, s));

    let (payload, sync) = synchronize(stream, &cfg, &sc.sync)
        .map_err(|e| CliError::from_core(path, &Stage::SchmidlCox.to_string(), e))?;
    let rx = receive(&payload, &cfg, &sc.receiver, info_len, reference.as_deref())
        .map_err(|e| CliError::from_core(path, &Stage::Demodulation.to_string(), e))?;

    let mut sensing = Vec::new();
    for &mode in &sc.sensing_modes {
        let radar_err = |e| CliError::from_core(path, &Stage::RadarReconstruction.to_string(), e);
        let cfr = cfr_for_sensing(&rx.grid, &rx.cfr, mode, Some(&rx.decoded)).map_err(radar_err)?;
        let map = range_doppler(
            &cfr,
            &cfg,
            mode,
            sc.radar.window,
            sc.radar.zero_pad,
            Some(default_crop(sc, mode)),
        )
        .map_err(radar_err)?;
        let detections = extract_peaks(&map, sc.radar.threshold_db, sc.radar.max_peaks);
        let scene = bistatic_scene_report(&detections, sc.radar.known_main_range_m);
        sensing.push(SensingResult {
            mode,
            map,
            detections,
            scene,
        });
    }
    Ok(RxResult { sync, rx, sensing })
}

pub fn run(sc: &Scenario, path: &Path) -> CliResult<RunResult> {
    let (tx, rx_stream) = simulate(sc, path)?;
    let rx = process(sc, &rx_stream, path)?;
    Ok(RunResult { tx, rx_stream, rx })
}
