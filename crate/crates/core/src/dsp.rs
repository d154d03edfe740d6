//! Shared DSP building blocks: unitary DFTs, Kaiser windows, windowed-sinc
//! kernels and FIR design.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Unitary DFT pair of a fixed size (1/√N scaling in both directions).
#[derive(Clone)]
pub struct UnitaryDft {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    scale: f64,
}

impl std::fmt::Debug for UnitaryDft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("UnitaryDft").field("n", &self.n).finish()
    }
}

impl UnitaryDft {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        UnitaryDft {
            n,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
            scale: 1.0 / (n as f64).sqrt(),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        self.fwd.process(buf);
        buf.iter_mut().for_each(|x| *x *= self.scale);
    }

    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.inv.process(buf);
        buf.iter_mut().for_each(|x| *x *= self.scale);
    }

    /// Unnormalized transforms, for processing gains that must stay coherent.
    pub fn forward_raw(&self, buf: &mut [Complex64]) {
        self.fwd.process(buf);
    }

    pub fn inverse_raw(&self, buf: &mut [Complex64]) {
        self.inv.process(buf);
    }
}

/// Physical (signed) index of DFT bin `k` for an `n`-point transform.
#[inline]
pub fn signed_bin(k: usize, n: usize) -> f64 {
    if k >= n / 2 {
        k as f64 - n as f64
    } else {
        k as f64
    }
}

/// Zeroth-order modified Bessel function of the first kind.
pub fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        let r = half / k as f64;
        term *= r * r;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Kaiser window evaluated at `u ∈ [-1, 1]`; zero outside.
pub fn kaiser(u: f64, beta: f64) -> f64 {
    if u.abs() > 1.0 {
        return 0.0;
    }
    bessel_i0(beta * (1.0 - u * u).sqrt()) / bessel_i0(beta)
}

/// Kaiser β for a stopband attenuation in dB.
pub fn kaiser_beta(atten_db: f64) -> f64 {
    if atten_db > 50.0 {
        0.1102 * (atten_db - 8.7)
    } else if atten_db >= 21.0 {
        0.5842 * (atten_db - 21.0).powf(0.4) + 0.07886 * (atten_db - 21.0)
    } else {
        0.0
    }
}

#[inline]
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Kaiser-windowed sinc interpolation kernel with a fixed number of taps.
///
/// A value at fractional time `t` is formed from the `taps` samples centred
/// on `round(t)`; at integer `t` the kernel degenerates to a unit impulse.
#[derive(Debug, Clone)]
pub struct SincKernel {
    half: usize,
    span: f64,
    beta: f64,
}

impl SincKernel {
    /// `taps` must be odd.
    pub fn new(taps: usize, beta: f64) -> Self {
        assert!(taps % 2 == 1, "sinc kernel needs an odd tap count");
        let half = taps / 2;
        SincKernel {
            half,
            span: half as f64 + 1.0,
            beta,
        }
    }

    pub fn half_len(&self) -> usize {
        self.half
    }

    pub fn taps(&self) -> usize {
        2 * self.half + 1
    }

    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        sinc(u) * kaiser(u / self.span, self.beta)
    }

    /// Tap weights for the samples `round(t) - half ..= round(t) + half` given
    /// the offset `mu = t - round(t)`.
    pub fn weights(&self, mu: f64) -> Vec<f64> {
        let h = self.half as isize;
        (-h..=h).map(|i| self.eval(mu - i as f64)).collect()
    }

    /// Tabulates the kernel for fast fractional evaluation.
    pub fn tabulate(&self, phases: usize) -> SincTable {
        let span = self.half as f64 + 1.0;
        let len = (2.0 * span * phases as f64).ceil() as usize + 2;
        let origin = span;
        let step = 1.0 / phases as f64;
        let table = (0..len)
            .map(|i| {
                let u = i as f64 * step - origin;
                if (u - u.round()).abs() < 1e-12 {
                    if u.round() == 0.0 {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    self.eval(u)
                }
            })
            .collect();
        SincTable {
            half: self.half,
            phases: phases as f64,
            origin,
            table,
        }
    }
}

/// Linearly interpolated lookup of a [`SincKernel`].
#[derive(Debug, Clone)]
pub struct SincTable {
    half: usize,
    phases: f64,
    origin: f64,
    table: Vec<f64>,
}

impl SincTable {
    #[inline]
    fn lookup(&self, u: f64) -> f64 {
        let pos = (u + self.origin) * self.phases;
        let i = pos.floor();
        let frac = pos - i;
        let i = i as usize;
        if i + 1 >= self.table.len() {
            return 0.0;
        }
        self.table[i] * (1.0 - frac) + self.table[i + 1] * frac
    }

    /// Band-limited interpolation of `x` at fractional index `t`; samples
    /// outside the sequence are zero.
    pub fn interpolate(&self, x: &[Complex64], t: f64) -> Complex64 {
        let center = t.round();
        let mu = t - center;
        let center = center as isize;
        let h = self.half as isize;
        let mut acc = Complex64::new(0.0, 0.0);
        if mu == 0.0 {
            if center >= 0 && (center as usize) < x.len() {
                return x[center as usize];
            }
            return acc;
        }
        let lo = (center - h).max(0);
        let hi = (center + h).min(x.len() as isize - 1);
        for j in lo..=hi {
            let w = self.lookup(mu - (j - center) as f64);
            acc += x[j as usize] * w;
        }
        acc
    }
}

/// Kaiser-windowed sinc lowpass with `taps` (odd) coefficients and cutoff
/// `cutoff` in cycles/sample (0.5 = Nyquist); unity DC gain times `gain`.
pub fn design_lowpass(taps: usize, cutoff: f64, beta: f64, gain: f64) -> Vec<f64> {
    assert!(taps % 2 == 1);
    let half = (taps / 2) as f64;
    let mut h: Vec<f64> = (0..taps)
        .map(|i| {
            let x = i as f64 - half;
            2.0 * cutoff * sinc(2.0 * cutoff * x) * kaiser(x / (half + 1.0), beta)
        })
        .collect();
    let sum: f64 = h.iter().sum();
    h.iter_mut().for_each(|c| *c *= gain / sum);
    h
}

/// Magnitude response of a real FIR at `f` cycles/sample.
pub fn fir_response(h: &[f64], f: f64) -> f64 {
    let half = (h.len() / 2) as f64;
    let acc: Complex64 = h
        .iter()
        .enumerate()
        .map(|(i, &c)| Complex64::from_polar(c, -2.0 * PI * f * (i as f64 - half)))
        .sum();
    acc.norm()
}

/// Sub-bin offset of a peak from three samples around it (parabola vertex).
#[inline]
pub fn parabolic_offset(left: f64, center: f64, right: f64) -> f64 {
    let denom = left - 2.0 * center + right;
    if denom.abs() < 1e-300 {
        0.0
    } else {
        (0.5 * (left - right) / denom).clamp(-0.5, 0.5)
    }
}

/// Hamming window of length `n`.
pub fn hamming(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

/// Weighted least-squares line fit `y ≈ a + b x`; returns `(a, b)`.
pub fn weighted_line_fit(pts: impl IntoIterator<Item = (f64, f64, f64)>) -> Option<(f64, f64)> {
    let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (x, y, w) in pts {
        sw += w;
        sx += w * x;
        sy += w * y;
        sxx += w * x * x;
        sxy += w * x * y;
    }
    if sw <= 0.0 {
        return None;
    }
    let mx = sx / sw;
    let my = sy / sw;
    let vxx = sxx / sw - mx * mx;
    if vxx <= 1e-300 {
        return None;
    }
    let b = (sxy / sw - mx * my) / vxx;
    Some((my - b * mx, b))
}
