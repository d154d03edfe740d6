//! Bistatic propagation and receiver impairments: multipath with per-path
//! delay and Doppler, timing/carrier offsets, sampling clock offset and AWGN.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dsp::{kaiser_beta, SincKernel};
use crate::error::{Error, Result};
use crate::tx::IqStream;

/// Largest accepted |δ|.
pub const MAX_SFO: f64 = 1e-3;

const DELAY_TAPS: usize = 63;
const DELAY_BETA: f64 = 8.0;
const SFO_TAPS: usize = 97;
const SFO_PHASES: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropagationPath {
    /// Complex path gain α, as `[re, im]`.
    pub gain: Complex64,
    /// Propagation delay τ in seconds.
    #[serde(default)]
    pub delay_s: f64,
    /// Doppler shift in Hz.
    #[serde(default)]
    pub doppler_hz: f64,
}

impl PropagationPath {
    pub fn new(gain: Complex64, delay_s: f64, doppler_hz: f64) -> Self {
        PropagationPath {
            gain,
            delay_s,
            doppler_hz,
        }
    }

    pub fn unit() -> Self {
        PropagationPath::new(Complex64::new(1.0, 0.0), 0.0, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImpairmentSet {
    /// Sampling time offset τ_Δ in seconds.
    #[serde(default)]
    pub sto_s: f64,
    /// Carrier frequency offset f_Δ in Hz.
    #[serde(default)]
    pub cfo_hz: f64,
    /// Carrier phase offset φ_Δ in radians.
    #[serde(default)]
    pub cpo_rad: f64,
    /// Normalized sampling frequency offset δ.
    #[serde(default)]
    pub sfo: f64,
    /// SNR relative to the main-path receive power; `None` disables noise.
    #[serde(default)]
    pub snr_db: Option<f64>,
    #[serde(default)]
    pub noise_seed: u64,
}

impl Default for ImpairmentSet {
    fn default() -> Self {
        ImpairmentSet {
            sto_s: 0.0,
            cfo_hz: 0.0,
            cpo_rad: 0.0,
            sfo: 0.0,
            snr_db: None,
            noise_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelScenario {
    pub main_path: PropagationPath,
    #[serde(default)]
    pub secondary_paths: Vec<PropagationPath>,
    #[serde(default)]
    pub impairments: ImpairmentSet,
}

impl ChannelScenario {
    /// Unit main path, no impairments.
    pub fn clean() -> Self {
        ChannelScenario {
            main_path: PropagationPath::unit(),
            secondary_paths: Vec::new(),
            impairments: ImpairmentSet::default(),
        }
    }

    pub fn paths(&self) -> impl Iterator<Item = &PropagationPath> {
        std::iter::once(&self.main_path).chain(&self.secondary_paths)
    }

    pub fn validate(&self) -> Result<()> {
        let main = self.main_path.gain.norm();
        for (i, p) in self.paths().enumerate() {
            let finite = p.gain.re.is_finite()
                && p.gain.im.is_finite()
                && p.delay_s.is_finite()
                && p.doppler_hz.is_finite();
            if !finite {
                return Err(Error::Scenario(format!("path {i} has non-finite parameters")));
            }
            if p.delay_s < 0.0 {
                return Err(Error::Scenario(format!("path {i} has negative delay")));
            }
            if i > 0 && p.gain.norm() >= main {
                return Err(Error::Scenario(format!(
                    "secondary path {i} must be weaker than the main path"
                )));
            }
        }
        let imp = &self.impairments;
        if !(imp.sfo.abs() < MAX_SFO) {
            return Err(Error::Scenario(format!(
                "|sfo| = {} exceeds the bound {MAX_SFO}",
                imp.sfo
            )));
        }
        if ![imp.sto_s, imp.cfo_hz, imp.cpo_rad].iter().all(|v| v.is_finite())
            || imp.snr_db.is_some_and(|s| !s.is_finite())
        {
            return Err(Error::Scenario("impairments must be finite".into()));
        }
        Ok(())
    }
}

/// `e^{j2π f n T}` evaluated without accumulating phase error over long streams.
#[inline]
fn phasor(cycles_per_sample: f64, n: usize) -> Complex64 {
    let turns = (cycles_per_sample * n as f64).fract();
    Complex64::from_polar(1.0, 2.0 * PI * turns)
}

/// Multipath propagation followed by the common CFO/CPO rotation.
pub fn apply_paths_and_cfo(x: &IqStream, scenario: &ChannelScenario) -> Result<IqStream> {
    x.ensure_finite()?;
    let fs = x.nominal_rate;
    let ts = 1.0 / fs;
    let sto = scenario.impairments.sto_s * fs;
    let delays: Vec<f64> = scenario.paths().map(|p| p.delay_s * fs + sto).collect();
    if let Some(d) = delays.iter().find(|&&d| d < 0.0 || !d.is_finite()) {
        return Err(Error::Scenario(format!(
            "total path delay of {d} samples is not representable"
        )));
    }
    let max_delay = delays.iter().cloned().fold(0.0, f64::max);
    let out_len = x.len() + max_delay.ceil() as usize;
    let kernel = SincKernel::new(DELAY_TAPS, DELAY_BETA);
    let half = kernel.half_len() as isize;

    let mut out = vec![Complex64::new(0.0, 0.0); out_len];
    let mut delayed = vec![Complex64::new(0.0, 0.0); out_len];
    for (path, &d) in scenario.paths().zip(&delays) {
        let shift = d.round();
        let mu = shift - d;
        let shift = shift as isize;
        if mu.abs() < 1e-12 {
            delayed.fill(Complex64::new(0.0, 0.0));
            for (i, v) in x.samples.iter().enumerate() {
                let n = i as isize + shift;
                if (n as usize) < out_len {
                    delayed[n as usize] = *v;
                }
            }
        } else {
            let w = kernel.weights(mu);
            let len = x.len() as isize;
            for (n, slot) in delayed.iter_mut().enumerate() {
                let c = n as isize - shift;
                let lo = (-half).max(-c);
                let hi = half.min(len - 1 - c);
                let mut acc = Complex64::new(0.0, 0.0);
                for i in lo..=hi {
                    acc += x.samples[(c + i) as usize] * w[(i + half) as usize];
                }
                *slot = acc;
            }
        }
        let fd = path.doppler_hz * ts;
        for (n, (o, v)) in out.iter_mut().zip(&delayed).enumerate() {
            *o += path.gain * phasor(fd, n) * v;
        }
    }

    let imp = &scenario.impairments;
    if imp.cfo_hz != 0.0 || imp.cpo_rad != 0.0 {
        let cpo = Complex64::from_polar(1.0, imp.cpo_rad);
        let f = imp.cfo_hz * ts;
        for (n, o) in out.iter_mut().enumerate() {
            *o *= phasor(f, n) * cpo;
        }
    }
    Ok(IqStream {
        samples: out,
        nominal_rate: fs,
        origin_index: Some(delays[0].round() as usize),
    })
}

/// Resamples at `t_n = n(1 + δ)`: a receiver clock running fast by δ.
pub fn apply_sfo(x: &IqStream, delta: f64) -> IqStream {
    if delta == 0.0 || x.is_empty() {
        return x.clone();
    }
    let table = SincKernel::new(SFO_TAPS, kaiser_beta(90.0)).tabulate(SFO_PHASES);
    let ratio = 1.0 + delta;
    let out_len = ((x.len() - 1) as f64 / ratio).floor() as usize + 1;
    let samples = (0..out_len)
        .map(|n| table.interpolate(&x.samples, n as f64 * ratio))
        .collect();
    IqStream {
        samples,
        nominal_rate: x.nominal_rate,
        origin_index: x.origin_index.map(|o| (o as f64 / ratio).round() as usize),
    }
}

/// Adds circular complex Gaussian noise of variance `ref_power / 10^(snr/10)`.
pub fn add_awgn(x: &IqStream, snr_db: Option<f64>, ref_power: f64, seed: u64) -> IqStream {
    let Some(snr) = snr_db else {
        return x.clone();
    };
    let sigma = (ref_power / 10f64.powf(snr / 10.0) / 2.0).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = x
        .samples
        .iter()
        .map(|v| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            v + Complex64::new(re, im) * sigma
        })
        .collect();
    IqStream {
        samples,
        nominal_rate: x.nominal_rate,
        origin_index: x.origin_index,
    }
}

/// Full channel: paths and CFO, then SFO, then noise referenced to the
/// main-path receive power.
pub fn run_channel(x: &IqStream, scenario: &ChannelScenario) -> Result<IqStream> {
    scenario.validate()?;
    let imp = &scenario.impairments;
    let y = apply_paths_and_cfo(x, scenario)?;
    let y = apply_sfo(&y, imp.sfo);
    let ref_power = scenario.main_path.gain.norm_sqr() * x.mean_power();
    Ok(add_awgn(&y, imp.snr_db, ref_power, imp.noise_seed))
}
