//! Signal-to-bits conversion: windowing, squaring, low-pass filtering and
//! decimation of received signals, then two-bit Gray-coded quantization with
//! guard bands and reconciliation of the dropped indices across nodes.

use std::collections::BTreeSet;
use std::io::Write;

use crate::error::{Error, Result};
use crate::link::LinkId;
use crate::waveform::SampledSignal;

/// Interior cell borders of the uniform two-bit quantizer on `[0, 1]`.
pub const CELL_BORDERS: [f64; 3] = [0.25, 0.5, 0.75];
/// Gray labels of the four cells, lowest first.
pub const LABELS: [&str; 4] = ["00", "01", "11", "10"];
pub const MAX_GUARD_BAND: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreprocessConfig {
    /// Observation window from the start of the signal, seconds.
    pub window: f64,
    /// Moving-average low-pass; the filter spans `1 / lowpass_cutoff` seconds.
    pub lowpass_cutoff: f64,
    /// Rate of the output values.
    pub output_rate: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self { window: 50e-9, lowpass_cutoff: 0.5e9, output_rate: 0.5e9 }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("window", self.window),
            ("lowpass cutoff", self.lowpass_cutoff),
            ("output rate", self.output_rate),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} {v} must be positive")));
            }
        }
        Ok(())
    }

    /// Number of values produced per signal.
    pub fn output_len(&self) -> usize {
        (self.window * self.output_rate).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantizerConfig {
    pub guard_band: f64,
}

impl Default for QuantizerConfig {
    fn default() -> Self {
        Self { guard_band: 0.0 }
    }
}

impl QuantizerConfig {
    pub fn new(guard_band: f64) -> Result<Self> {
        let cfg = Self { guard_band };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=MAX_GUARD_BAND).contains(&self.guard_band) {
            return Err(Error::InvalidParameter(format!(
                "guard band {} not in [0, {MAX_GUARD_BAND}]",
                self.guard_band
            )));
        }
        Ok(())
    }
}

/// Quantized bits of one node: two bits per kept sample, in index order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitMaterial {
    pub bits: String,
    pub kept_indices: Vec<usize>,
    pub dropped_indices: Vec<usize>,
}

impl BitMaterial {
    pub fn sample_count(&self) -> usize {
        self.kept_indices.len() + self.dropped_indices.len()
    }

    pub fn bit_len(&self) -> usize {
        self.bits.len()
    }

    /// Label of the `k`-th kept sample.
    fn label(&self, k: usize) -> &str {
        &self.bits[2 * k..2 * k + 2]
    }
}

/// Windowed, squared, low-passed, decimated and min-max normalized signal.
pub fn preprocess(sig: &SampledSignal, cfg: &PreprocessConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if sig.rate < cfg.output_rate {
        return Err(Error::Undersampled { rate: sig.rate, required: cfg.output_rate });
    }
    let n_out = cfg.output_len();
    if n_out == 0 {
        return Err(Error::InvalidParameter("window shorter than one output sample".into()));
    }
    let n_win = (cfg.window * sig.rate).round() as usize;
    let energy: Vec<f64> = sig.window(n_win).samples.iter().map(|v| v * v).collect();

    let block = sig.rate / cfg.output_rate;
    let width = (sig.rate / cfg.lowpass_cutoff).round().max(1.0) as usize;
    let values: Vec<f64> = (0..n_out)
        .map(|k| {
            let centre = (k as f64 + 0.5) * block;
            let lo = (centre - width as f64 / 2.0).round().max(0.0) as usize;
            let hi = (lo + width).min(n_win);
            let lo = lo.min(hi.saturating_sub(1));
            energy[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect();

    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(max > min) {
        return Err(Error::ConstantSignal);
    }
    Ok(values.iter().map(|v| (v - min) / (max - min)).collect())
}

/// Concatenation of per-link vectors in canonical link order.
pub fn concat_links(per_link: &[(LinkId, Vec<f64>)]) -> Result<Vec<f64>> {
    let mut ordered: Vec<&(LinkId, Vec<f64>)> = per_link.iter().collect();
    ordered.sort_by_key(|(id, _)| *id);
    if let Some(w) = ordered.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::DuplicateLink(w[0].0.to_string()));
    }
    Ok(ordered.iter().flat_map(|(_, v)| v.iter().copied()).collect())
}

/// Cell index with borders belonging to the upper cell and 1 to the top one.
fn cell(v: f64) -> usize {
    ((4.0 * v).floor() as usize).min(3)
}

fn in_guard_band(v: f64, gb: f64) -> bool {
    gb > 0.0 && CELL_BORDERS.iter().any(|b| (v - b).abs() <= gb)
}

pub fn quantize(values: &[f64], cfg: &QuantizerConfig) -> Result<BitMaterial> {
    cfg.validate()?;
    let mut out = BitMaterial {
        bits: String::with_capacity(2 * values.len()),
        kept_indices: Vec::new(),
        dropped_indices: Vec::new(),
    };
    for (index, &value) in values.iter().enumerate() {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::OutOfRange { index, value });
        }
        if in_guard_band(value, cfg.guard_band) {
            out.dropped_indices.push(index);
        } else {
            out.kept_indices.push(index);
            out.bits.push_str(LABELS[cell(value)]);
        }
    }
    Ok(out)
}

/// Removes from every node the union of all nodes' dropped indices.
pub fn reconcile_indices(materials: &[BitMaterial]) -> Result<Vec<BitMaterial>> {
    let Some(first) = materials.first() else {
        return Ok(Vec::new());
    };
    let count = first.sample_count();
    if let Some(m) = materials.iter().find(|m| m.sample_count() != count) {
        return Err(Error::DimensionMismatch { expected: count, got: m.sample_count() });
    }
    let dropped: BTreeSet<usize> =
        materials.iter().flat_map(|m| m.dropped_indices.iter().copied()).collect();
    Ok(materials
        .iter()
        .map(|m| {
            let mut bits = String::new();
            let mut kept = Vec::new();
            for (k, &index) in m.kept_indices.iter().enumerate() {
                if !dropped.contains(&index) {
                    kept.push(index);
                    bits.push_str(m.label(k));
                }
            }
            BitMaterial { bits, kept_indices: kept, dropped_indices: dropped.iter().copied().collect() }
        })
        .collect())
}

/// One `(node, bits, dropped_indices)` row per material; indices joined by `;`.
pub fn write_materials_csv<W: Write>(materials: &[(String, BitMaterial)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["node", "bits", "dropped_indices"])?;
    for (node, m) in materials {
        let dropped: Vec<String> = m.dropped_indices.iter().map(|i| i.to_string()).collect();
        w.write_record([node.as_str(), m.bits.as_str(), dropped.join(";").as_str()])?;
    }
    w.flush()?;
    Ok(())
}
