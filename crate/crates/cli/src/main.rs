//! `whisper`: batch runner for the deconvolution, protocol and traffic
//! sweeps. Settings come from an optional `key = value` file, then flags.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Parser;
use whisper_core::experiment::{run, run_with_summary, ExperimentConfig, Scenario};

#[derive(Debug, Parser)]
#[command(name = "whisper", version, about = "Channel-whispering key generation experiments")]
struct Args {
    /// deconv-eval, protocol-compare or traffic.
    #[arg(long)]
    scenario: Option<String>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of channel configurations.
    #[arg(long)]
    configs: Option<usize>,
    /// Comma-separated SNR list in dB.
    #[arg(long)]
    snr: Option<String>,
    /// Comma-separated guard-band list.
    #[arg(long)]
    gb: Option<String>,
    /// Comma-separated solvers: ml, ml-min-norm, map:<lambda>, map-cv, em.
    #[arg(long)]
    methods: Option<String>,
    /// pre-estimation-only, entirely-noisy, or both.
    #[arg(long)]
    noise_mode: Option<String>,
    /// Packet budget shared by both key schemes (protocol-compare).
    #[arg(long)]
    budget: Option<u64>,
    /// Node range for the traffic table, e.g. 3..10.
    #[arg(long)]
    nodes: Option<String>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Raw CSV destination; stdout if absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write medians / means per group to this CSV.
    #[arg(long)]
    summarize: Option<PathBuf>,
    /// Line-oriented `key = value` settings file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn build_config(args: &Args) -> Result<ExperimentConfig> {
    let file = match &args.config {
        Some(p) => Some(std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?),
        None => None,
    };
    let scenario: Scenario = match (&args.scenario, &file) {
        (Some(s), _) => s.parse()?,
        (None, Some(text)) => file_scenario(text)?.unwrap_or(Scenario::DeconvEval),
        (None, None) => Scenario::DeconvEval,
    };
    let mut cfg = ExperimentConfig::new(scenario);
    if let Some(text) = &file {
        // The scenario is already settled; a conflicting line would reset everything else.
        let rest: String = text
            .lines()
            .filter(|l| !is_key(l, "scenario"))
            .map(|l| format!("{l}\n"))
            .collect();
        cfg.apply_file(&rest).context("config file")?;
    }
    let flags: [(&str, Option<String>); 9] = [
        ("seed", args.seed.map(|v| v.to_string())),
        ("configs", args.configs.map(|v| v.to_string())),
        ("snr", args.snr.clone()),
        ("gb", args.gb.clone()),
        ("methods", args.methods.clone()),
        ("noise-mode", args.noise_mode.clone()),
        ("budget", args.budget.map(|v| v.to_string())),
        ("nodes", args.nodes.clone()),
        ("threads", args.threads.map(|v| v.to_string())),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.apply(key, &v).with_context(|| format!("--{key}"))?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn is_key(line: &str, key: &str) -> bool {
    line.split('#')
        .next()
        .and_then(|l| l.split_once('='))
        .is_some_and(|(k, _)| k.trim() == key)
}

fn file_scenario(text: &str) -> Result<Option<Scenario>> {
    let line = text.lines().rev().find(|l| is_key(l, "scenario"));
    Ok(match line {
        Some(l) => {
            let value = l.split('#').next().unwrap_or("").split_once('=').map(|(_, v)| v).unwrap_or("");
            Some(value.parse()?)
        }
        None => None,
    })
}

fn writer(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn main() -> Result<()> {
    let args = Args::parse();
    let cfg = build_config(&args)?;
    let raw = writer(&args.out)?;
    match &args.summarize {
        Some(path) => {
            let summary = writer(&Some(path.clone()))?;
            run_with_summary(&cfg, raw, summary)?;
        }
        None => run(&cfg, raw)?,
    }
    Ok(())
}
