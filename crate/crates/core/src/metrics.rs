//! Evaluation statistics.

use std::io::Write;

use crate::error::{Error, Result};
use crate::waveform::{correlate_sync, SampledSignal};

/// One evaluated (configuration, method) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSample {
    pub config_id: usize,
    pub method: String,
    pub snr_db: f64,
    pub gb: Option<f64>,
    pub rmse: f64,
    pub rmse_normalized: f64,
    pub corrcoef: f64,
    pub bit_match: Option<f64>,
    pub key_len: Option<usize>,
}

impl MetricSample {
    pub const HEADER: [&'static str; 9] = [
        "config_id",
        "method",
        "snr_db",
        "gb",
        "rmse",
        "rmse_normalized",
        "corrcoef",
        "bit_match",
        "key_len",
    ];

    pub fn record(&self) -> Vec<String> {
        let opt = |v: Option<String>| v.unwrap_or_default();
        vec![
            self.config_id.to_string(),
            self.method.clone(),
            self.snr_db.to_string(),
            opt(self.gb.map(|g| g.to_string())),
            self.rmse.to_string(),
            self.rmse_normalized.to_string(),
            self.corrcoef.to_string(),
            opt(self.bit_match.map(|b| b.to_string())),
            opt(self.key_len.map(|k| k.to_string())),
        ]
    }

    pub fn write_csv<W: Write>(samples: &[MetricSample], out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::HEADER)?;
        for s in samples {
            w.write_record(s.record())?;
        }
        w.flush()?;
        Ok(())
    }
}

fn rms_diff(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// RMSE between `target` and the window of `received` aligned to it. With
/// `normalized`, both are first divided by their peak magnitude.
pub fn rmse_after_sync(received: &SampledSignal, target: &SampledSignal, normalized: bool) -> Result<f64> {
    if received.is_empty() || target.is_empty() {
        return Err(Error::Empty("signal"));
    }
    let received = if received.len() < target.len() { received.window(target.len()) } else { received.clone() };
    let synced = correlate_sync(&received, target)?;
    let (mut a, mut b) = (synced.samples, target.samples.clone());
    if normalized {
        for v in [&mut a, &mut b] {
            let m = max_abs(v);
            if m > 0.0 {
                v.iter_mut().for_each(|x| *x /= m);
            }
        }
    }
    Ok(rms_diff(&a, &b))
}

/// Pearson correlation; 0 when either vector is constant.
pub fn corrcoef(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), got: b.len() });
    }
    if a.is_empty() {
        return Err(Error::Empty("correlation input"));
    }
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Ok(0.0);
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Empirical CDF.
#[derive(Debug, Clone, PartialEq)]
pub struct Ecdf {
    sorted: Vec<f64>,
}

impl Ecdf {
    pub fn new(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Empty("ecdf samples"));
        }
        if samples.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidParameter("NaN sample".into()));
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self { sorted })
    }

    /// Fraction of samples `<= x`.
    pub fn eval(&self, x: f64) -> f64 {
        self.sorted.partition_point(|v| *v <= x) as f64 / self.sorted.len() as f64
    }

    /// Smallest sample with `eval >= q`.
    pub fn quantile(&self, q: f64) -> f64 {
        let n = self.sorted.len();
        let k = ((q.clamp(0.0, 1.0) * n as f64).ceil() as usize).clamp(1, n);
        self.sorted[k - 1]
    }

    pub fn points(&self) -> Vec<(f64, f64)> {
        let n = self.sorted.len() as f64;
        self.sorted.iter().enumerate().map(|(i, &v)| (v, (i + 1) as f64 / n)).collect()
    }
}

/// Median, averaging the two central values for even counts.
pub fn median(samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("median input"));
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    Ok(if n % 2 == 1 { s[n / 2] } else { 0.5 * (s[n / 2 - 1] + s[n / 2]) })
}

/// Fraction of equal positions in two equal-length bit strings.
pub fn bit_match_ratio(x: &str, y: &str) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), got: y.len() });
    }
    if x.is_empty() {
        return Err(Error::Empty("bit string"));
    }
    let same = x.bytes().zip(y.bytes()).filter(|(a, b)| a == b).count();
    Ok(same as f64 / x.len() as f64)
}

/// Mean and standard error of the mean.
pub fn mean_and_stderr(samples: &[f64]) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::Empty("mean input"));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return Ok((mean, 0.0));
    }
    let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}
