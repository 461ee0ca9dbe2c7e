//! Physical-layer simulation shared by the deconvolution evaluation and the
//! protocol: pulse probing over a channel, conversion to the processing
//! rate, the cooperator's kernel, and transmission of an s-signal.

use std::fmt;

use crate::channel::{ChannelRealization, SIMULATION_RATE};
use crate::deconv::{solve, ConvolutionOperator, DeconvMethod, DeconvSolution, SolverSettings};
use crate::error::{Error, Result};
use crate::estimator::{estimate_cir, EstimatorConfig};
use crate::waveform::{
    add_awgn, convolve, correlate_sync, make_pulse, resample, NoiseSpec, PulseSpec, SampledSignal,
};

/// Relative magnitude below which the ringing of a band-limited kernel is
/// trimmed.
const KERNEL_TRIM: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u8);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 < 26 {
            write!(f, "{}", (b'A' + self.0) as char)
        } else {
            write!(f, "N{}", self.0)
        }
    }
}

/// Undirected link; ordered by its sorted node pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LinkId {
    lo: NodeId,
    hi: NodeId,
}

impl LinkId {
    pub fn new(a: NodeId, b: NodeId) -> Result<Self> {
        if a == b {
            return Err(Error::InvalidParameter(format!("link {a}-{b} is a self loop")));
        }
        Ok(Self { lo: a.min(b), hi: a.max(b) })
    }

    pub fn nodes(&self) -> (NodeId, NodeId) {
        (self.lo, self.hi)
    }

    pub fn contains(&self, n: NodeId) -> bool {
        self.lo == n || self.hi == n
    }
}

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.lo, self.hi)
    }
}

/// Where AWGN enters the deconvolution experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseMode {
    /// Only the probes used for estimation and as deconvolution target.
    #[default]
    PreEstimationOnly,
    /// Also on the received s-signal.
    EntirelyNoisy,
}

impl NoiseMode {
    pub fn name(&self) -> &'static str {
        match self {
            NoiseMode::PreEstimationOnly => "pre-estimation-only",
            NoiseMode::EntirelyNoisy => "entirely-noisy",
        }
    }
}

impl std::str::FromStr for NoiseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "pre-estimation-only" | "pre" => Ok(NoiseMode::PreEstimationOnly),
            "entirely-noisy" | "full" => Ok(NoiseMode::EntirelyNoisy),
            other => Err(Error::InvalidParameter(format!("unknown noise mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhyConfig {
    pub pulse: PulseSpec,
    /// Observation window, seconds.
    pub window: f64,
    pub processing_rate: f64,
    /// `None` disables AWGN everywhere.
    pub snr_db: Option<f64>,
    pub estimator: EstimatorConfig,
    /// Bypass the estimator: the kernel is the band-limited true CIR.
    pub perfect_estimation: bool,
}

impl Default for PhyConfig {
    fn default() -> Self {
        Self {
            pulse: PulseSpec::default(),
            window: 50e-9,
            processing_rate: 10e9,
            snr_db: Some(20.0),
            estimator: EstimatorConfig::default(),
            perfect_estimation: false,
        }
    }
}

/// Probing and whispering at the simulation rate, processing at
/// `processing_rate`.
#[derive(Debug, Clone)]
pub struct Phy {
    cfg: PhyConfig,
    pulse: SampledSignal,
}

impl Phy {
    pub fn new(cfg: PhyConfig) -> Result<Self> {
        if !(cfg.window > 0.0) {
            return Err(Error::InvalidParameter(format!("window {} must be positive", cfg.window)));
        }
        if !(cfg.processing_rate > 0.0 && cfg.processing_rate <= SIMULATION_RATE) {
            return Err(Error::InvalidParameter(format!(
                "processing rate {} outside (0, {SIMULATION_RATE}]",
                cfg.processing_rate
            )));
        }
        if let Some(snr) = cfg.snr_db {
            if !snr.is_finite() {
                return Err(Error::InvalidParameter(format!("snr {snr} dB")));
            }
        }
        let estimator = EstimatorConfig { rate: cfg.processing_rate, pulse_rate: SIMULATION_RATE, template: cfg.pulse, ..cfg.estimator };
        let cfg = PhyConfig { estimator, ..cfg };
        let pulse = make_pulse(&cfg.pulse, SIMULATION_RATE)?;
        Ok(Self { cfg, pulse })
    }

    pub fn config(&self) -> &PhyConfig {
        &self.cfg
    }

    pub fn pulse(&self) -> &SampledSignal {
        &self.pulse
    }

    /// Samples per observation window at the simulation rate.
    pub fn window_len(&self) -> usize {
        (self.cfg.window * SIMULATION_RATE).round() as usize
    }

    fn noise(&self) -> Option<NoiseSpec> {
        self.cfg.snr_db.map(|snr_db| NoiseSpec { snr_db })
    }

    /// Noiseless `p * h` over the observation window.
    pub fn clean_observation(&self, h: &ChannelRealization) -> SampledSignal {
        convolve(&self.pulse, h).window(self.window_len())
    }

    /// Received probe: `p * h` plus AWGN drawn from `noise_seed`.
    pub fn probe(&self, h: &ChannelRealization, noise_seed: u64) -> Result<SampledSignal> {
        self.add_noise(self.clean_observation(h), noise_seed)
    }

    fn add_noise(&self, sig: SampledSignal, seed: u64) -> Result<SampledSignal> {
        match self.noise() {
            Some(n) => add_awgn(&sig, &n, &self.pulse, seed),
            None => Ok(sig),
        }
    }

    pub fn to_processing(&self, sig: &SampledSignal) -> Result<SampledSignal> {
        resample(sig, self.cfg.processing_rate)
    }

    /// Cooperator's kernel at the processing rate: the estimated CIR of its
    /// observation of the generator's probe, or in perfect mode the true CIR
    /// band-limited to the processing rate.
    pub fn kernel(&self, h_true: &ChannelRealization, observation: &SampledSignal) -> Result<Vec<f64>> {
        let rate = self.cfg.processing_rate;
        if self.cfg.perfect_estimation {
            let ratio = SIMULATION_RATE / rate;
            let pad = (crate::waveform::SINC_LOBES * ratio).ceil() as usize;
            let taps = h_true.to_excess_delay().sample(SIMULATION_RATE);
            let mut padded = vec![0.0; pad];
            padded.extend(taps);
            padded.extend(std::iter::repeat_n(0.0, pad));
            let sig = SampledSignal::new(padded, SIMULATION_RATE, 0.0)?;
            let k: Vec<f64> = resample(&sig, rate)?.samples.iter().map(|v| v * ratio).collect();
            let peak = k.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if peak == 0.0 {
                return Err(Error::ZeroEnergy);
            }
            let first = k.iter().position(|v| v.abs() > KERNEL_TRIM * peak).expect("peak > 0");
            let last = k.iter().rposition(|v| v.abs() > KERNEL_TRIM * peak).expect("peak > 0");
            Ok(k[first..=last].to_vec())
        } else {
            let y = if (observation.rate - rate).abs() > 1e-6 * rate {
                self.to_processing(observation)?
            } else {
                observation.clone()
            };
            Ok(estimate_cir(&y, &self.cfg.estimator)?.sample(rate))
        }
    }

    /// Solves `kernel * s = y` for the s-signal at the processing rate.
    pub fn deconvolve(
        &self,
        kernel: &[f64],
        y: &SampledSignal,
        method: DeconvMethod,
        settings: &SolverSettings,
        seed: u64,
    ) -> Result<(SampledSignal, DeconvSolution)> {
        let op = ConvolutionOperator::new(kernel.to_vec(), y.len())?;
        let sol = solve(method, &op, &y.samples, settings, seed)?;
        let t0 = y.t0 - (kernel.len() - 1) as f64 / y.rate;
        let s = SampledSignal::new(sol.s.clone(), y.rate, t0)?;
        Ok((s, sol))
    }

    /// Transmits the s-signal over `h`: interpolation to the simulation rate,
    /// propagation and, when `noise_seed` is given, AWGN.
    pub fn transmit(
        &self,
        s: &SampledSignal,
        h: &ChannelRealization,
        noise_seed: Option<u64>,
    ) -> Result<SampledSignal> {
        let up = resample(s, SIMULATION_RATE)?;
        let received = convolve(&up, h);
        match noise_seed {
            Some(seed) => self.add_noise(received, seed),
            None => Ok(received),
        }
    }

    /// Whispered observation aligned with `target` by correlation.
    pub fn synchronize(&self, received: &SampledSignal, target: &SampledSignal) -> Result<SampledSignal> {
        if received.len() < target.len() {
            correlate_sync(&received.window(target.len()), target)
        } else {
            correlate_sync(received, target)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate, ChannelModelParams};

    #[test]
    fn link_ids_are_canonical() {
        let (a, b) = (NodeId(0), NodeId(2));
        assert_eq!(LinkId::new(a, b).unwrap(), LinkId::new(b, a).unwrap());
        assert_eq!(LinkId::new(b, a).unwrap().to_string(), "A-C");
        assert!(LinkId::new(a, a).is_err());
        assert!(LinkId::new(NodeId(0), NodeId(1)).unwrap() < LinkId::new(NodeId(0), NodeId(2)).unwrap());
        assert!(LinkId::new(NodeId(0), NodeId(2)).unwrap() < LinkId::new(NodeId(1), NodeId(2)).unwrap());
    }

    #[test]
    fn probe_shapes() {
        let phy = Phy::new(PhyConfig::default()).unwrap();
        let h = generate(&ChannelModelParams::cm1(), 3).unwrap();
        let y = phy.probe(&h, 1).unwrap();
        assert_eq!(y.len(), 5000);
        assert_eq!(phy.to_processing(&y).unwrap().len(), 500);
        assert_eq!(y, phy.probe(&h, 1).unwrap());
        assert_ne!(y, phy.probe(&h, 2).unwrap());
        let clean = Phy::new(PhyConfig { snr_db: None, ..PhyConfig::default() }).unwrap();
        assert_eq!(clean.probe(&h, 1).unwrap(), phy.clean_observation(&h));
    }

    #[test]
    fn perfect_whisper_reproduces_target() {
        let cfg = PhyConfig { snr_db: None, perfect_estimation: true, ..PhyConfig::default() };
        let phy = Phy::new(cfg).unwrap();
        let p = ChannelModelParams::cm1();
        let (h_ab, h_ac) = (generate(&p, 10).unwrap(), generate(&p, 11).unwrap());
        let target = phy.clean_observation(&h_ab);
        let y = phy.to_processing(&target).unwrap();
        let kernel = phy.kernel(&h_ac, &phy.clean_observation(&h_ac)).unwrap();
        let (s, sol) =
            phy.deconvolve(&kernel, &y, DeconvMethod::MlMinNorm, &SolverSettings::default(), 0).unwrap();
        assert!(sol.residual_norm < 1e-8 * y.energy().sqrt());
        let r = phy.transmit(&s, &h_ac, None).unwrap();
        let synced = phy.synchronize(&r, &target).unwrap();
        let back = phy.to_processing(&synced).unwrap();
        let err: f64 = back.samples.iter().zip(&y.samples).map(|(a, b)| (a - b).powi(2)).sum();
        // Residual mismatch comes from the resampling filters' transition
        // band near the processing Nyquist frequency.
        assert!(err < 1e-2 * y.energy(), "relative error {}", err / y.energy());
    }
}
