//! Sparse CIR estimation by search-subtract-readjust.
//!
//! Each iteration correlates the residual with the pulse template, takes the
//! strongest delay not already detected, projects out its amplitude and then
//! refits every detected amplitude jointly by least squares against the
//! original observation. Stops once the residual energy falls below a
//! fraction of the observation energy or `max_paths` delays are detected.

use nalgebra::{DMatrix, DVector};

use crate::channel::ChannelRealization;
use crate::error::{Error, Result};
use crate::waveform::{make_pulse, resample, PulseSpec, SampledSignal};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorConfig {
    pub max_paths: usize,
    pub residual_energy_fraction: f64,
    pub template: PulseSpec,
    /// Rate of the observations handed to the estimator.
    pub rate: f64,
    /// Rate at which the transmitted pulse has unit energy. The template is
    /// that pulse seen at `rate`, so estimated amplitudes are channel taps.
    pub pulse_rate: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            max_paths: 40,
            residual_energy_fraction: 0.05,
            template: PulseSpec::default(),
            rate: 10e9,
            pulse_rate: crate::channel::SIMULATION_RATE,
        }
    }
}

impl EstimatorConfig {
    fn validate(&self) -> Result<()> {
        if self.max_paths == 0 {
            return Err(Error::InvalidParameter("max_paths must be >= 1".into()));
        }
        if !(self.residual_energy_fraction > 0.0 && self.residual_energy_fraction < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "residual_energy_fraction {} not in (0, 1)",
                self.residual_energy_fraction
            )));
        }
        Ok(())
    }
}

/// The expected received waveform of a unit path, sampled at the estimator
/// rate. `samples[j]` sits `offset + j` samples after the path delay; the
/// offset is negative when resampling leaves precursor ringing.
#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    pub samples: Vec<f64>,
    pub offset: isize,
}

impl Template {
    pub fn new(cfg: &EstimatorConfig) -> Result<Self> {
        if (cfg.pulse_rate - cfg.rate).abs() <= 1e-12 * cfg.rate {
            return Ok(Self { samples: make_pulse(&cfg.template, cfg.rate)?.samples, offset: 0 });
        }
        let pulse = make_pulse(&cfg.template, cfg.pulse_rate)?;
        // Pad so the resampling kernel's ringing is kept on both sides.
        let ratio = (cfg.pulse_rate / cfg.rate).round() as usize;
        let margin = 40 * ratio;
        let mut padded = vec![0.0; margin];
        padded.extend(&pulse.samples);
        padded.extend(vec![0.0; margin]);
        let at_rate = resample(&SampledSignal::new(padded, cfg.pulse_rate, 0.0)?, cfg.rate)?;
        let peak = at_rate.peak();
        let keep = |v: &f64| v.abs() > 1e-4 * peak;
        let first = at_rate.samples.iter().position(keep).unwrap_or(0);
        let last = at_rate.samples.iter().rposition(keep).unwrap_or(0);
        Ok(Self {
            samples: at_rate.samples[first..=last].to_vec(),
            offset: first as isize - (margin / ratio) as isize,
        })
    }

    /// Overlap of the template placed at `delay` with `[0, len)`, as
    /// `(first signal index, template slice)`.
    fn placed(&self, delay: usize, len: usize) -> (usize, &[f64]) {
        let start = delay as isize + self.offset;
        let skip = (-start).max(0) as usize;
        let first = start.max(0) as usize;
        if skip >= self.samples.len() || first >= len {
            return (first.min(len), &[]);
        }
        let take = (self.samples.len() - skip).min(len - first);
        (first, &self.samples[skip..skip + take])
    }

    fn dot(&self, delay: usize, x: &[f64]) -> f64 {
        let (first, t) = self.placed(delay, x.len());
        x[first..first + t.len()].iter().zip(t).map(|(a, b)| a * b).sum()
    }

    fn axpy(&self, delay: usize, alpha: f64, x: &mut [f64]) {
        let len = x.len();
        let (first, t) = self.placed(delay, len);
        for (o, v) in x[first..first + t.len()].iter_mut().zip(t) {
            *o += alpha * v;
        }
    }

    fn overlap(&self, a: usize, b: usize, len: usize) -> f64 {
        let mut col = vec![0.0; len];
        self.axpy(a, 1.0, &mut col);
        self.dot(b, &col)
    }

    /// Noiseless observation of paths at sample delays with amplitudes.
    pub fn synthesize(&self, paths: &[(usize, f64)], len: usize) -> Vec<f64> {
        let mut y = vec![0.0; len];
        for &(d, a) in paths {
            self.axpy(d, a, &mut y);
        }
        y
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CirEstimate {
    /// Detected paths, excess delay.
    pub cir: ChannelRealization,
    /// Delay of the first detected path relative to the observation start.
    pub onset: f64,
    /// Residual energy before the first and after every iteration.
    pub residual_energies: Vec<f64>,
}

/// Least-squares amplitudes for the given delays against `y`.
fn refit(template: &Template, delays: &[usize], y: &[f64]) -> Vec<f64> {
    let k = delays.len();
    let gram = DMatrix::from_fn(k, k, |i, j| template.overlap(delays[i], delays[j], y.len()));
    let rhs = DVector::from_iterator(k, delays.iter().map(|&d| template.dot(d, y)));
    match gram.clone().cholesky() {
        Some(c) => c.solve(&rhs).iter().cloned().collect(),
        None => gram
            .svd(true, true)
            .solve(&rhs, 1e-12)
            .map(|v| v.iter().cloned().collect())
            .unwrap_or_else(|_| vec![0.0; k]),
    }
}

pub fn estimate_cir_detailed(y: &SampledSignal, cfg: &EstimatorConfig) -> Result<CirEstimate> {
    cfg.validate()?;
    if ((y.rate - cfg.rate) / cfg.rate).abs() > 1e-12 {
        return Err(Error::RateMismatch { left: y.rate, right: cfg.rate });
    }
    let initial: f64 = y.energy();
    if !(initial > 0.0) {
        return Err(Error::ZeroEnergy);
    }
    let template = Template::new(cfg)?;
    let x = &y.samples;
    let len = x.len();

    let mut detected: Vec<usize> = Vec::new();
    let mut taken = vec![false; len];
    let mut amplitudes: Vec<f64> = Vec::new();
    let mut residual = x.clone();
    let mut energies = vec![initial];

    while detected.len() < cfg.max_paths {
        // Search.
        let mut best: Option<(usize, f64)> = None;
        for d in (0..len).filter(|&d| !taken[d]) {
            let c = template.dot(d, &residual).abs();
            if best.is_none_or(|(_, b)| c > b) {
                best = Some((d, c));
            }
        }
        let Some((delay, _)) = best else { break };
        let norm = template.overlap(delay, delay, len);
        if norm <= 0.0 {
            taken[delay] = true;
            continue;
        }
        // Subtract.
        let amp = template.dot(delay, &residual) / norm;
        template.axpy(delay, -amp, &mut residual);
        detected.push(delay);
        taken[delay] = true;

        // Readjust.
        amplitudes = refit(&template, &detected, x);
        residual = x.clone();
        for (&d, &a) in detected.iter().zip(&amplitudes) {
            template.axpy(d, -a, &mut residual);
        }
        let energy: f64 = residual.iter().map(|v| v * v).sum();
        energies.push(energy);
        if energy < cfg.residual_energy_fraction * initial {
            break;
        }
    }

    let mut paths: Vec<(usize, f64)> = detected.into_iter().zip(amplitudes).collect();
    paths.sort_by_key(|p| p.0);
    let first = paths[0].0;
    let delays = paths.iter().map(|&(d, _)| (d - first) as f64 / cfg.rate).collect();
    let amps = paths.iter().map(|&(_, a)| a).collect();
    Ok(CirEstimate {
        cir: ChannelRealization::new(delays, amps)?,
        onset: y.t0 + first as f64 / cfg.rate,
        residual_energies: energies,
    })
}

/// Estimated CIR in excess delay.
pub fn estimate_cir(y: &SampledSignal, cfg: &EstimatorConfig) -> Result<ChannelRealization> {
    Ok(estimate_cir_detailed(y, cfg)?.cir)
}
