//! Sparse multipath channel realizations.
//!
//! Realizations follow the Saleh-Valenzuela cluster/ray structure used by the
//! IEEE 802.15.4a channel models: clusters and rays arrive as Poisson
//! processes, mean path power decays exponentially in both the cluster delay
//! and the intra-cluster ray delay, and each path gets a random fading
//! magnitude and an equiprobable sign. Only the excess delay is modeled, so
//! the first path always sits at delay zero.
//!
//! Delays are continuous. They are snapped to a sample grid only when a
//! realization is sampled ([`ChannelRealization::sample`]).

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma, Normal};

use crate::error::{Error, Result};
use crate::seed;

/// Rate at which generated realizations are energy-normalized.
pub const SIMULATION_RATE: f64 = 100e9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FadingLaw {
    /// Path magnitude `sqrt(mean power) * 10^(x/20)`, `x ~ N(0, sigma_db^2)`.
    Lognormal { sigma_db: f64 },
    /// Path power Gamma distributed with shape `m` (fixed Nakagami-m).
    Nakagami { m: f64 },
}

/// Cluster/ray model parameters. Rates in 1/ns, times in ns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelModelParams {
    pub cluster_arrival_rate: f64,
    pub ray_arrival_rate: f64,
    pub cluster_decay: f64,
    pub ray_decay: f64,
    pub max_excess_delay: f64,
    pub fading: FadingLaw,
}

impl ChannelModelParams {
    /// Indoor residential line-of-sight values (802.15.4a CM1 family).
    pub fn cm1() -> Self {
        Self {
            cluster_arrival_rate: 0.047,
            ray_arrival_rate: 1.54,
            cluster_decay: 22.61,
            ray_decay: 12.53,
            max_excess_delay: 40.0,
            fading: FadingLaw::Nakagami { m: 1.17 },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("cluster_arrival_rate", self.cluster_arrival_rate),
            ("ray_arrival_rate", self.ray_arrival_rate),
            ("cluster_decay", self.cluster_decay),
            ("ray_decay", self.ray_decay),
            ("max_excess_delay", self.max_excess_delay),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        match self.fading {
            FadingLaw::Lognormal { sigma_db } if !(sigma_db >= 0.0 && sigma_db.is_finite()) => {
                Err(Error::InvalidParameter(format!("lognormal sigma {sigma_db} dB")))
            }
            FadingLaw::Nakagami { m } if !(m >= 0.5 && m.is_finite()) => {
                Err(Error::InvalidParameter(format!("nakagami m {m} < 0.5")))
            }
            _ => Ok(()),
        }
    }

    /// Short `key=value` description for CSV metadata.
    pub fn describe(&self) -> String {
        let fading = match self.fading {
            FadingLaw::Lognormal { sigma_db } => format!("lognormal({sigma_db}dB)"),
            FadingLaw::Nakagami { m } => format!("nakagami(m={m})"),
        };
        format!(
            "cluster_rate={}/ns ray_rate={}/ns cluster_decay={}ns ray_decay={}ns max_delay={}ns fading={}",
            self.cluster_arrival_rate,
            self.ray_arrival_rate,
            self.cluster_decay,
            self.ray_decay,
            self.max_excess_delay,
            fading
        )
    }
}

impl Default for ChannelModelParams {
    fn default() -> Self {
        Self::cm1()
    }
}

/// A channel impulse response `sum_k x_k delta(t - tau_k)`. Delays in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    delays: Vec<f64>,
    amplitudes: Vec<f64>,
}

impl ChannelRealization {
    pub fn new(delays: Vec<f64>, amplitudes: Vec<f64>) -> Result<Self> {
        if delays.is_empty() {
            return Err(Error::Empty("channel has no paths"));
        }
        if delays.len() != amplitudes.len() {
            return Err(Error::DimensionMismatch { expected: delays.len(), got: amplitudes.len() });
        }
        if delays.iter().chain(&amplitudes).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite path parameter".into()));
        }
        if delays[0] < 0.0 || delays.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter(
                "delays must be non-negative and strictly increasing".into(),
            ));
        }
        Ok(Self { delays, amplitudes })
    }

    /// A single unit path at zero delay.
    pub fn identity() -> Self {
        Self { delays: vec![0.0], amplitudes: vec![1.0] }
    }

    pub fn delays(&self) -> &[f64] {
        &self.delays
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn path_count(&self) -> usize {
        self.delays.len()
    }

    pub fn max_delay(&self) -> f64 {
        *self.delays.last().expect("non-empty")
    }

    /// Taps on a uniform grid at `rate`, each path snapped to the nearest
    /// sample. Paths falling into the same sample add up.
    pub fn sample(&self, rate: f64) -> Vec<f64> {
        let len = (self.max_delay() * rate).round() as usize + 1;
        let mut taps = vec![0.0; len];
        for (&d, &a) in self.delays.iter().zip(&self.amplitudes) {
            taps[(d * rate).round() as usize] += a;
        }
        taps
    }

    /// Energy of the sampled taps at `rate`.
    pub fn energy(&self, rate: f64) -> f64 {
        self.sample(rate).iter().map(|v| v * v).sum()
    }

    /// Same paths shifted so the first one sits at zero delay.
    pub fn to_excess_delay(&self) -> Self {
        let first = self.delays[0];
        Self {
            delays: self.delays.iter().map(|d| d - first).collect(),
            amplitudes: self.amplitudes.clone(),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            delays: self.delays.clone(),
            amplitudes: self.amplitudes.iter().map(|a| a * factor).collect(),
        }
    }

    /// `delay_ns,amplitude` rows with a header.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["delay_ns", "amplitude"])?;
        for (d, a) in self.delays.iter().zip(&self.amplitudes) {
            w.write_record([format!("{}", d * 1e9), format!("{a}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Rescales the amplitudes so the CIR sampled at `rate` has unit energy.
pub fn normalize_energy(cir: &ChannelRealization, rate: f64) -> Result<ChannelRealization> {
    let energy = cir.energy(rate);
    if !(energy > 0.0) {
        return Err(Error::ZeroEnergy);
    }
    Ok(cir.scaled(energy.sqrt().recip()))
}

fn path_magnitude<R: Rng>(rng: &mut R, mean_power: f64, fading: FadingLaw) -> f64 {
    match fading {
        FadingLaw::Lognormal { sigma_db } => {
            let x = if sigma_db > 0.0 {
                Normal::new(0.0, sigma_db).expect("validated").sample(rng)
            } else {
                0.0
            };
            mean_power.sqrt() * 10f64.powf(x / 20.0)
        }
        FadingLaw::Nakagami { m } => {
            let power = Gamma::new(m, mean_power / m).expect("validated").sample(rng);
            power.sqrt()
        }
    }
}

/// Draws one realization. Pure function of `(params, seed)`.
pub fn generate(params: &ChannelModelParams, seed: u64) -> Result<ChannelRealization> {
    params.validate()?;
    let mut rng = seed::rng(seed);
    let cluster_gap = Exp::new(params.cluster_arrival_rate).expect("validated");
    let ray_gap = Exp::new(params.ray_arrival_rate).expect("validated");
    let horizon = params.max_excess_delay;

    let mut paths: Vec<(f64, f64)> = Vec::new();
    let mut cluster_start = 0.0;
    while cluster_start < horizon {
        let mut ray = 0.0;
        while cluster_start + ray < horizon {
            let mean_power =
                (-cluster_start / params.cluster_decay - ray / params.ray_decay).exp();
            let magnitude = path_magnitude(&mut rng, mean_power, params.fading);
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            paths.push(((cluster_start + ray) * 1e-9, sign * magnitude));
            ray += ray_gap.sample(&mut rng);
        }
        cluster_start += cluster_gap.sample(&mut rng);
    }

    paths.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut delays: Vec<f64> = Vec::with_capacity(paths.len());
    let mut amplitudes: Vec<f64> = Vec::with_capacity(paths.len());
    for (d, a) in paths {
        if delays.last() == Some(&d) {
            *amplitudes.last_mut().expect("paired") += a;
        } else {
            delays.push(d);
            amplitudes.push(a);
        }
    }
    let cir = ChannelRealization::new(delays, amplitudes)?.to_excess_delay();
    normalize_energy(&cir, SIMULATION_RATE)
}
