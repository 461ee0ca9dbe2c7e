//! Sampled waveforms: pulse synthesis, convolution, AWGN, sinc resampling and
//! idealized correlation synchronization.
//!
//! Amplitudes are preserved across rates: resampling keeps sample values of a
//! band-limited signal, so the discrete energy of a signal scales with its
//! rate.

use std::f64::consts::PI;
use std::io::Write;

use rand_distr::{Distribution, Normal};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::channel::ChannelRealization;
use crate::error::{Error, Result};
use crate::seed;

/// Number of sinc zero crossings kept on each side of the resampling kernel.
pub const SINC_LOBES: f64 = 32.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SampledSignal {
    pub samples: Vec<f64>,
    pub rate: f64,
    pub t0: f64,
}

impl SampledSignal {
    pub fn new(samples: Vec<f64>, rate: f64, t0: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Empty("signal has no samples"));
        }
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::InvalidParameter(format!("sample rate {rate}")));
        }
        Ok(Self { samples, rate, t0 })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.rate
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|v| v * v).sum()
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn time_of(&self, index: usize) -> f64 {
        self.t0 + index as f64 / self.rate
    }

    /// First `len` samples, zero-padded when the signal is shorter.
    pub fn window(&self, len: usize) -> SampledSignal {
        let mut samples = self.samples.clone();
        samples.resize(len.max(1), 0.0);
        SampledSignal { samples, rate: self.rate, t0: self.t0 }
    }

    pub fn scaled(&self, factor: f64) -> SampledSignal {
        SampledSignal {
            samples: self.samples.iter().map(|v| v * factor).collect(),
            rate: self.rate,
            t0: self.t0,
        }
    }

    /// `t,value` rows with a header, for debugging.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "value"])?;
        for (i, v) in self.samples.iter().enumerate() {
            w.write_record([format!("{:e}", self.time_of(i)), format!("{v:e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_rates(a: f64, b: f64) -> Result<()> {
    if ((a - b) / a).abs() > 1e-12 {
        return Err(Error::RateMismatch { left: a, right: b });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseSpec {
    pub center_frequency: f64,
    pub bandwidth_minus10db: f64,
    pub duration: f64,
}

impl Default for PulseSpec {
    fn default() -> Self {
        Self { center_frequency: 4.5e9, bandwidth_minus10db: 1e9, duration: 2e-9 }
    }
}

impl PulseSpec {
    /// Lowest rate accepted by [`make_pulse`].
    pub fn min_rate(&self) -> f64 {
        2.0 * (self.center_frequency + self.bandwidth_minus10db / 2.0)
    }

    /// Standard deviation of the Gaussian envelope whose power spectrum is
    /// 10 dB down at `center +- bandwidth/2`.
    pub fn envelope_sigma(&self) -> f64 {
        10f64.ln().sqrt() / (PI * self.bandwidth_minus10db)
    }

    fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0 && self.center_frequency > 0.0 && self.bandwidth_minus10db > 0.0) {
            return Err(Error::InvalidParameter(format!("pulse {self:?}")));
        }
        Ok(())
    }
}

/// Gaussian-windowed sinusoid supported on `[0, T_p]`, unit energy at `rate`.
pub fn make_pulse(spec: &PulseSpec, rate: f64) -> Result<SampledSignal> {
    spec.validate()?;
    let required = spec.min_rate();
    if rate < required * (1.0 - 1e-12) {
        return Err(Error::Undersampled { rate, required });
    }
    let n = ((spec.duration * rate).round() as usize).max(1);
    let sigma = spec.envelope_sigma();
    let center = spec.duration / 2.0;
    let mut samples: Vec<f64> = (0..n)
        .map(|i| {
            let t = (i as f64 + 0.5) / rate - center;
            (-t * t / (2.0 * sigma * sigma)).exp() * (2.0 * PI * spec.center_frequency * t).sin()
        })
        .collect();
    let norm = samples.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::ZeroEnergy);
    }
    samples.iter_mut().for_each(|v| *v /= norm);
    SampledSignal::new(samples, rate, 0.0)
}

/// Passes `sig` through `cir`, each path placed at the nearest sample.
pub fn convolve(sig: &SampledSignal, cir: &ChannelRealization) -> SampledSignal {
    let mut taps: Vec<(usize, f64)> = cir
        .delays()
        .iter()
        .zip(cir.amplitudes())
        .map(|(&d, &a)| ((d * sig.rate).round() as usize, a))
        .collect();
    taps.retain(|&(_, a)| a != 0.0);
    let last = taps.iter().map(|&(k, _)| k).max().unwrap_or(0);
    let mut out = vec![0.0; sig.len() + last];
    for (k, a) in taps {
        for (o, &x) in out[k..].iter_mut().zip(&sig.samples) {
            *o += a * x;
        }
    }
    SampledSignal { samples: out, rate: sig.rate, t0: sig.t0 }
}

/// Full linear convolution of two signals at the same rate.
pub fn convolve_full(a: &SampledSignal, b: &SampledSignal) -> Result<SampledSignal> {
    check_rates(a.rate, b.rate)?;
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.samples.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (o, &y) in out[i..].iter_mut().zip(&b.samples) {
            *o += x * y;
        }
    }
    Ok(SampledSignal { samples: out, rate: a.rate, t0: a.t0 + b.t0 })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub snr_db: f64,
}

impl NoiseSpec {
    /// `sigma_w^2 = P_pulse / 10^(snr/10)`.
    pub fn variance(&self, pulse_power: f64) -> f64 {
        pulse_power / 10f64.powf(self.snr_db / 10.0)
    }
}

/// Mean power of a pulse over its support, `(1/T_p) * integral p^2`.
pub fn pulse_power(pulse: &SampledSignal) -> f64 {
    pulse.energy() / pulse.len() as f64
}

/// Adds white Gaussian noise at the level fixed by the pulse power and SNR.
pub fn add_awgn(
    sig: &SampledSignal,
    noise: &NoiseSpec,
    pulse: &SampledSignal,
    seed: u64,
) -> Result<SampledSignal> {
    if !noise.snr_db.is_finite() {
        return Err(Error::InvalidParameter(format!("snr {} dB", noise.snr_db)));
    }
    let std = noise.variance(pulse_power(pulse)).sqrt();
    let normal = Normal::new(0.0, std).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut rng = seed::rng(seed);
    let samples = sig.samples.iter().map(|v| v + normal.sample(&mut rng)).collect();
    Ok(SampledSignal { samples, rate: sig.rate, t0: sig.t0 })
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Windowed-sinc resampling to `new_rate`, covering the same time span.
///
/// The kernel cuts off at half the lower of the two rates, keeps
/// [`SINC_LOBES`] zero crossings on each side and is tapered by a raised
/// cosine. Upsampling by an integer factor passes through the input samples.
pub fn resample(sig: &SampledSignal, new_rate: f64) -> Result<SampledSignal> {
    if !(new_rate > 0.0 && new_rate.is_finite()) {
        return Err(Error::InvalidParameter(format!("sample rate {new_rate}")));
    }
    let old_rate = sig.rate;
    let ratio = old_rate / new_rate;
    let out_len = ((sig.len() as f64 / ratio).round() as usize).max(1);
    // Kernel expressed in input-sample units.
    let bw = new_rate.min(old_rate) / old_rate;
    let half_width = SINC_LOBES / bw;
    let n_in = sig.len() as isize;
    let samples = (0..out_len)
        .map(|m| {
            let pos = m as f64 * ratio;
            let lo = ((pos - half_width).ceil() as isize).max(0);
            let hi = ((pos + half_width).floor() as isize).min(n_in - 1);
            let mut acc = 0.0;
            for n in lo..=hi {
                let d = pos - n as f64;
                let taper = 0.5 * (1.0 + (PI * d / half_width).cos());
                acc += sig.samples[n as usize] * bw * sinc(bw * d) * taper;
            }
            acc
        })
        .collect();
    Ok(SampledSignal { samples, rate: new_rate, t0: sig.t0 })
}

/// Cross-correlation `c[lag] = sum_i received[lag + i] * reference[i]` for
/// every lag where the reference fits inside the received signal.
pub fn cross_correlation(received: &[f64], reference: &[f64]) -> Vec<f64> {
    let lags = received.len() + 1 - reference.len();
    if (lags as f64) * (reference.len() as f64) < 2e5 {
        return (0..lags).map(|lag| direct_corr(received, reference, lag)).collect();
    }
    let size = (received.len() + reference.len()).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let mut a: Vec<Complex64> = received.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    a.resize(size, Complex64::default());
    let mut b: Vec<Complex64> = reference.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    b.resize(size, Complex64::default());
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= y.conj();
    }
    inv.process(&mut a);
    a[..lags].iter().map(|c| c.re / size as f64).collect()
}

fn direct_corr(received: &[f64], reference: &[f64], lag: usize) -> f64 {
    received[lag..lag + reference.len()].iter().zip(reference).map(|(x, y)| x * y).sum()
}

/// Lag maximizing the cross-correlation; the smallest lag wins ties.
pub fn best_lag(received: &[f64], reference: &[f64]) -> Result<usize> {
    if reference.is_empty() {
        return Err(Error::Empty("reference signal"));
    }
    if received.len() < reference.len() {
        return Err(Error::DimensionMismatch { expected: reference.len(), got: received.len() });
    }
    let corr = cross_correlation(received, reference);
    let max = corr.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let scale = received.iter().map(|v| v * v).sum::<f64>().sqrt()
        * reference.iter().map(|v| v * v).sum::<f64>().sqrt();
    // FFT values are only approximate; candidates near the top are rescored
    // exactly so ties resolve the same way as an exhaustive search.
    let slack = 1e-9 * scale;
    let mut best = (0usize, f64::NEG_INFINITY);
    for (lag, &c) in corr.iter().enumerate() {
        if c >= max - slack {
            let exact = direct_corr(received, reference, lag);
            if exact > best.1 {
                best = (lag, exact);
            }
        }
    }
    Ok(best.0)
}

/// Window of `received`, of the reference length, starting at [`best_lag`].
pub fn correlate_sync(received: &SampledSignal, reference: &SampledSignal) -> Result<SampledSignal> {
    check_rates(received.rate, reference.rate)?;
    let lag = best_lag(&received.samples, &reference.samples)?;
    Ok(SampledSignal {
        samples: received.samples[lag..lag + reference.len()].to_vec(),
        rate: received.rate,
        t0: received.time_of(lag),
    })
}
