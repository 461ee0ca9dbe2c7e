//! Seeded batch sweeps over channel configurations, written as CSV.
//!
//! Configuration `c` draws everything from `derive(seed, [CONFIG, c])`, so
//! each row depends only on the master seed and its configuration id. Rows
//! are computed in parallel and emitted in configuration order.

use std::fmt::Write as _;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;

use crate::channel::{generate, ChannelModelParams, ChannelRealization};
use crate::deconv::{DeconvMethod, Penalty, SolverSettings};
use crate::error::{Error, Result};
use crate::link::{NoiseMode, Phy, PhyConfig};
use crate::metrics::{corrcoef, mean_and_stderr, median, rmse_after_sync};
use crate::protocol::{
    count_packets, finalize_ckd, finalize_ckg, observe_ckd, observe_ckg, rounds_for_budget,
    KeyScheme, RoundConfig, TrafficModel, PHASES,
};
use crate::quantizer::QuantizerConfig;
use crate::seed::{self, tag};

pub const CSV_VERSION: &str = "whisper-csv/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    DeconvEval,
    ProtocolCompare,
    Traffic,
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::DeconvEval => "deconv-eval",
            Scenario::ProtocolCompare => "protocol-compare",
            Scenario::Traffic => "traffic",
        }
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "deconv-eval" => Ok(Scenario::DeconvEval),
            "protocol-compare" => Ok(Scenario::ProtocolCompare),
            "traffic" => Ok(Scenario::Traffic),
            other => Err(Error::InvalidParameter(format!("unknown scenario '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub seed: u64,
    pub n_configs: usize,
    pub snr_list: Vec<f64>,
    pub gb_list: Vec<f64>,
    /// Solvers compared by deconv-eval; the first one drives protocol-compare.
    pub methods: Vec<DeconvMethod>,
    pub noise_modes: Vec<NoiseMode>,
    /// Packet budget per configuration for protocol-compare.
    pub budget: u64,
    /// Mesh sizes for the traffic table.
    pub node_range: (u64, u64),
    pub lead_setup_packets: u64,
    pub penalty: Penalty,
    pub em_iterations: usize,
    /// Worker threads; `None` uses all cores.
    pub threads: Option<usize>,
    pub channel: ChannelModelParams,
}

impl ExperimentConfig {
    pub fn new(scenario: Scenario) -> Self {
        let (n_configs, methods) = match scenario {
            Scenario::ProtocolCompare => (500, vec![DeconvMethod::Map(0.01)]),
            _ => (
                5000,
                vec![
                    DeconvMethod::Ml,
                    DeconvMethod::Map(0.01),
                    DeconvMethod::Map(1.0),
                    DeconvMethod::MapCv,
                    DeconvMethod::Em,
                ],
            ),
        };
        Self {
            scenario,
            seed: 0,
            n_configs,
            snr_list: vec![10.0, 20.0],
            gb_list: (0..=5).map(|i| i as f64 * 0.02).collect(),
            methods,
            noise_modes: vec![NoiseMode::PreEstimationOnly],
            budget: 140,
            node_range: (3, 10),
            lead_setup_packets: 0,
            penalty: Penalty::Identity,
            em_iterations: 30,
            threads: None,
            channel: ChannelModelParams::cm1(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_configs == 0 {
            return Err(Error::InvalidParameter("configs must be >= 1".into()));
        }
        if self.snr_list.is_empty() || self.snr_list.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidParameter("snr list must be non-empty and finite".into()));
        }
        for &gb in &self.gb_list {
            QuantizerConfig::new(gb)?;
        }
        if self.gb_list.is_empty() {
            return Err(Error::Empty("guard band list"));
        }
        if self.methods.is_empty() {
            return Err(Error::Empty("method list"));
        }
        if self.noise_modes.is_empty() {
            return Err(Error::Empty("noise mode list"));
        }
        if self.node_range.0 < 3 || self.node_range.1 < self.node_range.0 {
            return Err(Error::InvalidParameter(format!(
                "node range {}..{} must start at 3 or more",
                self.node_range.0, self.node_range.1
            )));
        }
        if self.em_iterations == 0 {
            return Err(Error::InvalidParameter("em iterations must be >= 1".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::InvalidParameter("threads must be >= 1".into()));
        }
        self.channel.validate()
    }

    /// Sets one option from its textual `key = value` form.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let bad = |what: &str| Error::InvalidParameter(format!("invalid {what} '{value}'"));
        let list = |v: &str| -> Vec<String> {
            v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
        };
        match key.trim().replace('_', "-").as_str() {
            "scenario" => {
                let scenario: Scenario = value.parse()?;
                if scenario != self.scenario {
                    let keep = self.clone();
                    *self = Self::new(scenario);
                    self.seed = keep.seed;
                    self.threads = keep.threads;
                }
            }
            "seed" => self.seed = value.parse().map_err(|_| bad("seed"))?,
            "configs" => self.n_configs = value.parse().map_err(|_| bad("configs"))?,
            "snr" => {
                self.snr_list = list(value)
                    .iter()
                    .map(|s| s.parse::<f64>().map_err(|_| bad("snr")))
                    .collect::<Result<_>>()?
            }
            "gb" => {
                self.gb_list = list(value)
                    .iter()
                    .map(|s| s.parse::<f64>().map_err(|_| bad("gb")))
                    .collect::<Result<_>>()?
            }
            "methods" => {
                self.methods = list(value).iter().map(|s| s.parse()).collect::<Result<_>>()?
            }
            "noise-mode" => {
                self.noise_modes = if value == "both" {
                    vec![NoiseMode::PreEstimationOnly, NoiseMode::EntirelyNoisy]
                } else {
                    list(value).iter().map(|s| s.parse()).collect::<Result<_>>()?
                }
            }
            "budget" => self.budget = value.parse().map_err(|_| bad("budget"))?,
            "nodes" => {
                let (lo, hi) = value.split_once("..").ok_or_else(|| bad("node range"))?;
                let hi = hi.trim_start_matches('=');
                self.node_range = (
                    lo.trim().parse().map_err(|_| bad("node range"))?,
                    hi.trim().parse().map_err(|_| bad("node range"))?,
                );
            }
            "lead-setup" => self.lead_setup_packets = value.parse().map_err(|_| bad("lead setup"))?,
            "penalty" => {
                self.penalty = match value {
                    "identity" => Penalty::Identity,
                    "difference" => Penalty::FirstDifference,
                    _ => return Err(bad("penalty")),
                }
            }
            "em-iterations" => self.em_iterations = value.parse().map_err(|_| bad("em iterations"))?,
            "threads" => self.threads = Some(value.parse().map_err(|_| bad("threads"))?),
            other => return Err(Error::InvalidParameter(format!("unknown option '{other}'"))),
        }
        Ok(())
    }

    /// Parses a line-oriented `key = value` file; `#` starts a comment.
    pub fn apply_file(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::InvalidParameter(format!("line {}: expected key = value", i + 1))
            })?;
            self.apply(k, v)?;
        }
        Ok(())
    }

    fn solver(&self) -> SolverSettings {
        SolverSettings {
            penalty: self.penalty,
            em_iterations: self.em_iterations,
            ..SolverSettings::default()
        }
    }

    /// Every setting on one comment line.
    pub fn metadata_line(&self) -> String {
        let join = |v: Vec<String>| v.join(",");
        let mut s = format!("# {CSV_VERSION} scenario={} seed={}", self.scenario.name(), self.seed);
        let _ = write!(
            s,
            " configs={} snr={} gb={} methods={} noise_mode={} budget={} nodes={}..{} lead_setup={} \
             penalty={:?} em_iterations={} channel=[{}]",
            self.n_configs,
            join(self.snr_list.iter().map(|v| v.to_string()).collect()),
            join(self.gb_list.iter().map(|v| v.to_string()).collect()),
            join(self.methods.iter().map(|m| m.to_string()).collect()),
            join(self.noise_modes.iter().map(|m| m.name().to_string()).collect()),
            self.budget,
            self.node_range.0,
            self.node_range.1,
            self.lead_setup_packets,
            self.penalty,
            self.em_iterations,
            self.channel.describe(),
        );
        s
    }

    fn traffic_model(&self) -> TrafficModel {
        TrafficModel { node_count: 3, lead_setup_packets: self.lead_setup_packets }
    }
}

fn config_seed(cfg: &ExperimentConfig, config_id: usize) -> u64 {
    seed::derive(cfg.seed, &[tag::CONFIG, config_id as u64])
}

fn draw_channels(params: &ChannelModelParams, base: u64, count: u64) -> Result<Vec<ChannelRealization>> {
    (0..count).map(|i| generate(params, seed::derive(base, &[tag::CHANNEL, i]))).collect()
}

/// Runs `f` for every configuration id, in parallel, keeping id order.
fn par_configs<T, F>(cfg: &ExperimentConfig, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<Vec<T>> + Sync + Send,
{
    let run = || -> Result<Vec<T>> {
        let chunks: Vec<Result<Vec<T>>> = (0..cfg.n_configs).into_par_iter().map(&f).collect();
        let mut out = Vec::new();
        for c in chunks {
            out.extend(c?);
        }
        Ok(out)
    };
    match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidParameter(e.to_string()))?
            .install(run),
        None => run(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeconvRow {
    pub config_id: usize,
    pub method: DeconvMethod,
    pub snr_db: f64,
    pub noise_mode: NoiseMode,
    pub rmse: f64,
    pub rmse_normalized: f64,
    pub corrcoef: f64,
    pub effective_lambda: Option<f64>,
}

impl DeconvRow {
    pub const HEADER: [&'static str; 8] = [
        "config_id",
        "method",
        "snr_db",
        "noise_mode",
        "rmse",
        "rmse_normalized",
        "corrcoef",
        "effective_lambda",
    ];

    fn record(&self) -> Vec<String> {
        vec![
            self.config_id.to_string(),
            self.method.to_string(),
            self.snr_db.to_string(),
            self.noise_mode.name().to_string(),
            self.rmse.to_string(),
            self.rmse_normalized.to_string(),
            self.corrcoef.to_string(),
            self.effective_lambda.map(|l| l.to_string()).unwrap_or_default(),
        ]
    }
}

/// One configuration of the deconvolution evaluation: cooperator A whispers
/// its observation of the A-B channel to C through the A-C channel.
pub fn deconv_config(cfg: &ExperimentConfig, config_id: usize) -> Result<Vec<DeconvRow>> {
    let base = config_seed(cfg, config_id);
    let ch = draw_channels(&cfg.channel, base, 2)?;
    let (h_ab, h_ac) = (&ch[0], &ch[1]);
    let solver = cfg.solver();
    let mut rows = Vec::new();
    for (si, &snr) in cfg.snr_list.iter().enumerate() {
        let phy = Phy::new(PhyConfig { snr_db: Some(snr), ..PhyConfig::default() })?;
        let si = si as u64;
        let y_ba = phy.probe(h_ab, seed::derive(base, &[tag::PROBE_NOISE, si, 0]))?;
        let y_ca = phy.probe(h_ac, seed::derive(base, &[tag::PROBE_NOISE, si, 1]))?;
        let kernel = phy.kernel(h_ac, &y_ca)?;
        let y = phy.to_processing(&y_ba)?;
        let target = phy.clean_observation(h_ab);
        for &method in &cfg.methods {
            let cv_seed = seed::derive(base, &[tag::CV_PARTITION, si]);
            let (s, sol) = phy.deconvolve(&kernel, &y, method, &solver, cv_seed)?;
            for &mode in &cfg.noise_modes {
                let noise_seed = match mode {
                    NoiseMode::PreEstimationOnly => None,
                    NoiseMode::EntirelyNoisy => Some(seed::derive(base, &[tag::WHISPER_NOISE, si])),
                };
                let r = phy.transmit(&s, h_ac, noise_seed)?;
                let synced = phy.synchronize(&r, &target)?;
                rows.push(DeconvRow {
                    config_id,
                    method,
                    snr_db: snr,
                    noise_mode: mode,
                    rmse: rmse_after_sync(&synced, &target, false)?,
                    rmse_normalized: rmse_after_sync(&synced, &target, true)?,
                    corrcoef: corrcoef(&synced.samples, &target.samples)?,
                    effective_lambda: sol.effective_lambda,
                });
            }
        }
    }
    Ok(rows)
}

pub fn run_deconv_eval(cfg: &ExperimentConfig) -> Result<Vec<DeconvRow>> {
    cfg.validate()?;
    par_configs(cfg, |c| deconv_config(cfg, c))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolRow {
    pub config_id: usize,
    pub snr_db: f64,
    pub gb: f64,
    pub ckg_rounds: u64,
    pub ckd_rounds: u64,
    pub ckg_key_bits: usize,
    pub ckd_key_bits: usize,
    pub ckg_agreed_rounds: usize,
    pub ckd_agreed_rounds: usize,
    /// Mean over rounds of the mean pairwise bit matching.
    pub ckg_bit_match: Option<f64>,
    pub ckd_bit_match: Option<f64>,
}

impl ProtocolRow {
    pub const HEADER: [&'static str; 12] = [
        "config_id",
        "snr_db",
        "gb",
        "ckg_rounds",
        "ckd_rounds",
        "ckg_key_bits",
        "ckd_key_bits",
        "key_diff_bits",
        "ckg_agreed_rounds",
        "ckd_agreed_rounds",
        "ckg_bit_match",
        "ckd_bit_match",
    ];

    pub fn key_diff(&self) -> f64 {
        self.ckg_key_bits as f64 - self.ckd_key_bits as f64
    }

    fn record(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        vec![
            self.config_id.to_string(),
            self.snr_db.to_string(),
            self.gb.to_string(),
            self.ckg_rounds.to_string(),
            self.ckd_rounds.to_string(),
            self.ckg_key_bits.to_string(),
            self.ckd_key_bits.to_string(),
            self.key_diff().to_string(),
            self.ckg_agreed_rounds.to_string(),
            self.ckd_agreed_rounds.to_string(),
            opt(self.ckg_bit_match),
            opt(self.ckd_bit_match),
        ]
    }
}

fn mean_of(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// One configuration of the CKG/CKD comparison at equal packet budget.
/// Round `r` of both schemes sees the same fresh channels.
pub fn protocol_config(cfg: &ExperimentConfig, config_id: usize) -> Result<Vec<ProtocolRow>> {
    let base = config_seed(cfg, config_id);
    let traffic = cfg.traffic_model();
    let n_ckg = rounds_for_budget(cfg.budget, &traffic, KeyScheme::Ckg)?;
    let n_ckd = rounds_for_budget(cfg.budget, &traffic, KeyScheme::Ckd)?;
    let method = cfg.methods[0];
    let quantizers: Vec<QuantizerConfig> =
        cfg.gb_list.iter().map(|&gb| QuantizerConfig::new(gb)).collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for (si, &snr) in cfg.snr_list.iter().enumerate() {
        let mut ckg: Vec<(usize, usize, Vec<f64>)> = vec![(0, 0, Vec::new()); quantizers.len()];
        let mut ckd = ckg.clone();
        for r in 0..n_ckg.max(n_ckd) {
            let round_base = seed::derive(base, &[tag::ROUND, r]);
            let channels = draw_channels(&cfg.channel, round_base, 3)?;
            let round_cfg = |stream: u64| RoundConfig {
                snr_db: Some(snr),
                deconv_method: method,
                solver: cfg.solver(),
                traffic,
                seed: seed::derive(round_base, &[si as u64, stream]),
                ..RoundConfig::default()
            };
            if r < n_ckg {
                let obs = observe_ckg(&channels, &round_cfg(0))?;
                for (acc, q) in ckg.iter_mut().zip(&quantizers) {
                    let res = finalize_ckg(&obs, q, &traffic)?;
                    acc.0 += res.key_length_bits;
                    acc.1 += res.agreed as usize;
                    acc.2.extend(res.bit_match);
                }
            }
            if r < n_ckd {
                let rc = round_cfg(1);
                let obs = observe_ckd(&channels, &rc)?;
                for (acc, q) in ckd.iter_mut().zip(&quantizers) {
                    let res = finalize_ckd(&obs, q, &traffic, rc.seed)?;
                    acc.0 += res.key_length_bits;
                    acc.1 += res.agreed as usize;
                    acc.2.extend(res.bit_match);
                }
            }
        }
        for ((g, d), &gb) in ckg.iter().zip(&ckd).zip(&cfg.gb_list) {
            rows.push(ProtocolRow {
                config_id,
                snr_db: snr,
                gb,
                ckg_rounds: n_ckg,
                ckd_rounds: n_ckd,
                ckg_key_bits: g.0,
                ckd_key_bits: d.0,
                ckg_agreed_rounds: g.1,
                ckd_agreed_rounds: d.1,
                ckg_bit_match: mean_of(&g.2),
                ckd_bit_match: mean_of(&d.2),
            });
        }
    }
    Ok(rows)
}

pub fn run_protocol_compare(cfg: &ExperimentConfig) -> Result<Vec<ProtocolRow>> {
    cfg.validate()?;
    par_configs(cfg, |c| protocol_config(cfg, c))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrafficRow {
    pub node_count: u64,
    pub scheme: KeyScheme,
    /// Packets per phase, in [`PHASES`] order; absent phases are zero.
    pub phases: [u64; 6],
    pub total: u64,
}

pub fn run_traffic(cfg: &ExperimentConfig) -> Result<Vec<TrafficRow>> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for n in cfg.node_range.0..=cfg.node_range.1 {
        for scheme in [KeyScheme::Ckd, KeyScheme::Ckg] {
            let model = TrafficModel { node_count: n, lead_setup_packets: cfg.lead_setup_packets };
            let ledger = count_packets(&model, scheme)?;
            let phases = PHASES.map(|p| ledger.phase(p).unwrap_or(0));
            rows.push(TrafficRow { node_count: n, scheme, phases, total: ledger.total() });
        }
    }
    Ok(rows)
}

fn write_table<W: Write>(meta: &str, header: &[&str], records: Vec<Vec<String>>, mut out: W) -> Result<()> {
    writeln!(out, "{meta}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for r in records {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs the configured scenario and writes its raw CSV.
pub fn run<W: Write>(cfg: &ExperimentConfig, out: W) -> Result<()> {
    let meta = cfg.metadata_line();
    match cfg.scenario {
        Scenario::DeconvEval => {
            let rows = run_deconv_eval(cfg)?;
            write_table(&meta, &DeconvRow::HEADER, rows.iter().map(DeconvRow::record).collect(), out)
        }
        Scenario::ProtocolCompare => {
            let rows = run_protocol_compare(cfg)?;
            write_table(&meta, &ProtocolRow::HEADER, rows.iter().map(ProtocolRow::record).collect(), out)
        }
        Scenario::Traffic => {
            let mut header = vec!["node_count", "scheme"];
            header.extend(PHASES);
            header.push("total");
            let records = run_traffic(cfg)?
                .iter()
                .map(|r| {
                    let mut rec = vec![r.node_count.to_string(), r.scheme.to_string()];
                    rec.extend(r.phases.iter().map(|p| p.to_string()));
                    rec.push(r.total.to_string());
                    rec
                })
                .collect();
            write_table(&meta, &header, records, out)
        }
    }
}

/// Aggregates of the deconvolution rows per (method, snr, noise mode).
pub fn summarize_deconv(rows: &[DeconvRow]) -> Result<Vec<Vec<String>>> {
    let mut keys: Vec<(String, f64, NoiseMode)> = Vec::new();
    for r in rows {
        let k = (r.method.to_string(), r.snr_db, r.noise_mode);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.iter()
        .map(|(m, snr, mode)| {
            let sel: Vec<&DeconvRow> = rows
                .iter()
                .filter(|r| r.method.to_string() == *m && r.snr_db == *snr && r.noise_mode == *mode)
                .collect();
            let col = |f: fn(&DeconvRow) -> f64| sel.iter().map(|r| f(r)).collect::<Vec<f64>>();
            let lambdas: Vec<f64> = sel.iter().filter_map(|r| r.effective_lambda).collect();
            Ok(vec![
                m.clone(),
                snr.to_string(),
                mode.name().to_string(),
                sel.len().to_string(),
                median(&col(|r| r.rmse))?.to_string(),
                median(&col(|r| r.rmse_normalized))?.to_string(),
                median(&col(|r| r.corrcoef))?.to_string(),
                if lambdas.is_empty() { String::new() } else { median(&lambdas)?.to_string() },
            ])
        })
        .collect()
}

pub const DECONV_SUMMARY_HEADER: [&str; 8] = [
    "method",
    "snr_db",
    "noise_mode",
    "n",
    "median_rmse",
    "median_rmse_normalized",
    "median_corrcoef",
    "median_effective_lambda",
];

/// Aggregates of the protocol rows per (snr, gb).
pub fn summarize_protocol(rows: &[ProtocolRow]) -> Result<Vec<Vec<String>>> {
    let mut keys: Vec<(f64, f64)> = Vec::new();
    for r in rows {
        if !keys.contains(&(r.snr_db, r.gb)) {
            keys.push((r.snr_db, r.gb));
        }
    }
    keys.iter()
        .map(|&(snr, gb)| {
            let sel: Vec<&ProtocolRow> = rows.iter().filter(|r| r.snr_db == snr && r.gb == gb).collect();
            let diffs: Vec<f64> = sel.iter().map(|r| r.key_diff()).collect();
            let (d, d_se) = mean_and_stderr(&diffs)?;
            let stat = |v: Vec<f64>| -> Result<(String, String)> {
                if v.is_empty() {
                    return Ok((String::new(), String::new()));
                }
                let (m, se) = mean_and_stderr(&v)?;
                Ok((m.to_string(), se.to_string()))
            };
            let (g, g_se) = stat(sel.iter().filter_map(|r| r.ckg_bit_match).collect())?;
            let (c, c_se) = stat(sel.iter().filter_map(|r| r.ckd_bit_match).collect())?;
            Ok(vec![
                snr.to_string(),
                gb.to_string(),
                sel.len().to_string(),
                d.to_string(),
                d_se.to_string(),
                g,
                g_se,
                c,
                c_se,
            ])
        })
        .collect()
}

pub const PROTOCOL_SUMMARY_HEADER: [&str; 9] = [
    "snr_db",
    "gb",
    "n",
    "mean_key_diff_bits",
    "stderr_key_diff_bits",
    "mean_ckg_bit_match",
    "stderr_ckg_bit_match",
    "mean_ckd_bit_match",
    "stderr_ckd_bit_match",
];

/// Runs the scenario and writes the raw CSV to `raw` and, for the sampled
/// scenarios, the aggregate CSV to `summary`.
pub fn run_with_summary<W: Write, S: Write>(cfg: &ExperimentConfig, raw: W, summary: S) -> Result<()> {
    let meta = cfg.metadata_line();
    match cfg.scenario {
        Scenario::DeconvEval => {
            let rows = run_deconv_eval(cfg)?;
            let agg = summarize_deconv(&rows)?;
            write_table(&meta, &DeconvRow::HEADER, rows.iter().map(DeconvRow::record).collect(), raw)?;
            write_table(&meta, &DECONV_SUMMARY_HEADER, agg, summary)
        }
        Scenario::ProtocolCompare => {
            let rows = run_protocol_compare(cfg)?;
            let agg = summarize_protocol(&rows)?;
            write_table(&meta, &ProtocolRow::HEADER, rows.iter().map(ProtocolRow::record).collect(), raw)?;
            write_table(&meta, &PROTOCOL_SUMMARY_HEADER, agg, summary)
        }
        Scenario::Traffic => run(cfg, raw),
    }
}
