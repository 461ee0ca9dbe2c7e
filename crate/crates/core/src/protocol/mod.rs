//! Three-node protocol rounds.
//!
//! A CKG round probes all three links, lets one cooperator per generator
//! whisper the generator's non-adjacent observation, and turns each node's
//! three link observations into bits. A CKD round quantizes each link at its
//! two endpoints only; the lead node then distributes a random group key.
//! Both end with an exact-match agreement gate in place of error correction.
//!
//! Simulation is split from quantization ([`observe_ckg`] and
//! [`finalize_ckg`], and the CKD counterparts) so a guard-band sweep reuses
//! the same received signals.

mod traffic;

pub use traffic::{count_packets, rounds_for_budget, KeyScheme, TrafficLedger, TrafficModel, PHASES};

use rand::Rng;

use crate::channel::ChannelRealization;
use crate::deconv::{DeconvMethod, SolverSettings};
use crate::error::{Error, Result};
use crate::estimator::EstimatorConfig;
use crate::link::{LinkId, NodeId, Phy, PhyConfig};
use crate::metrics::bit_match_ratio;
use crate::quantizer::{
    concat_links, preprocess, quantize, reconcile_indices, BitMaterial, PreprocessConfig,
    QuantizerConfig,
};
use crate::seed::{self, tag};
use crate::waveform::SampledSignal;

pub const NODES: [NodeId; 3] = [NodeId(0), NodeId(1), NodeId(2)];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Cooperator,
    Initiator,
    Generator,
}

/// `(cooperator, initiator, generator)` for each of the three whisperings.
pub const ROTATIONS: [[NodeId; 3]; 3] = [
    [NodeId(0), NodeId(1), NodeId(2)],
    [NodeId(1), NodeId(2), NodeId(0)],
    [NodeId(2), NodeId(0), NodeId(1)],
];

/// Role of `node` in `rotation`.
pub fn role_of(rotation: &[NodeId; 3], node: NodeId) -> Role {
    match rotation.iter().position(|&n| n == node) {
        Some(0) => Role::Cooperator,
        Some(1) => Role::Initiator,
        _ => Role::Generator,
    }
}

/// Links in canonical order `[A-B, A-C, B-C]`.
pub fn links() -> [LinkId; 3] {
    [
        LinkId::new(NODES[0], NODES[1]).expect("distinct"),
        LinkId::new(NODES[0], NODES[2]).expect("distinct"),
        LinkId::new(NODES[1], NODES[2]).expect("distinct"),
    ]
}

fn link_index(a: NodeId, b: NodeId) -> usize {
    let l = LinkId::new(a, b).expect("distinct nodes");
    links().iter().position(|&x| x == l).expect("three-node link")
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundConfig {
    /// `None` disables AWGN everywhere.
    pub snr_db: Option<f64>,
    pub deconv_method: DeconvMethod,
    pub solver: SolverSettings,
    pub quantizer: QuantizerConfig,
    pub preprocess: PreprocessConfig,
    pub estimator: EstimatorConfig,
    pub perfect_estimation: bool,
    pub traffic: TrafficModel,
    pub seed: u64,
    /// Physical identity of each node used when deriving noise seeds, so a
    /// relabeling of the nodes keeps every physical event's noise.
    pub node_tags: [u64; 3],
}

impl Default for RoundConfig {
    fn default() -> Self {
        Self {
            snr_db: Some(20.0),
            deconv_method: DeconvMethod::Map(0.01),
            solver: SolverSettings::default(),
            quantizer: QuantizerConfig::default(),
            preprocess: PreprocessConfig::default(),
            estimator: EstimatorConfig::default(),
            perfect_estimation: false,
            traffic: TrafficModel::default(),
            seed: 0,
            node_tags: [0, 1, 2],
        }
    }
}

impl RoundConfig {
    fn phy(&self) -> Result<Phy> {
        Phy::new(PhyConfig {
            snr_db: self.snr_db,
            estimator: self.estimator,
            perfect_estimation: self.perfect_estimation,
            ..PhyConfig::default()
        })
    }

    fn event_seed(&self, kind: u64, from: NodeId, to: NodeId) -> u64 {
        seed::derive(self.seed, &[kind, self.node_tags[from.0 as usize], self.node_tags[to.0 as usize]])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundResult {
    pub scheme: KeyScheme,
    /// Bits per node after index reconciliation (CKG) or the group key as
    /// recovered by each node (CKD).
    pub per_node_bits: Vec<BitMaterial>,
    pub agreed: bool,
    pub key_length_bits: usize,
    /// Mean pairwise bit matching before error correction; `None` when no
    /// bits survive.
    pub bit_match: Option<f64>,
    pub traffic: TrafficLedger,
}

/// Preprocessed link observations of every node.
#[derive(Debug, Clone, PartialEq)]
pub struct CkgObservations {
    /// Per node, its three `(link, values)` pairs.
    pub per_node: Vec<Vec<(LinkId, Vec<f64>)>>,
}

/// Preprocessed observations of each link at its two endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct CkdObservations {
    /// Per link in canonical order, values at the lower and higher node.
    pub per_link: Vec<(LinkId, [Vec<f64>; 2])>,
}

fn check_channels(channels: &[ChannelRealization]) -> Result<()> {
    if channels.len() != 3 {
        return Err(Error::DimensionMismatch { expected: 3, got: channels.len() });
    }
    Ok(())
}

/// Probes of every ordered pair, at the simulation rate: `[tx][rx]`.
fn probe_all(phy: &Phy, channels: &[ChannelRealization], cfg: &RoundConfig) -> Result<Vec<Vec<Option<SampledSignal>>>> {
    let mut out = vec![vec![None, None, None], vec![None, None, None], vec![None, None, None]];
    for tx in NODES {
        for rx in NODES.into_iter().filter(|&r| r != tx) {
            let h = &channels[link_index(tx, rx)];
            let seed = cfg.event_seed(tag::PROBE_NOISE, tx, rx);
            out[tx.0 as usize][rx.0 as usize] = Some(phy.probe(h, seed)?);
        }
    }
    Ok(out)
}

fn received<'a>(probes: &'a [Vec<Option<SampledSignal>>], tx: NodeId, rx: NodeId) -> &'a SampledSignal {
    probes[tx.0 as usize][rx.0 as usize].as_ref().expect("probed")
}

/// Probing and whispering of one CKG round, up to preprocessed values.
pub fn observe_ckg(channels: &[ChannelRealization], cfg: &RoundConfig) -> Result<CkgObservations> {
    check_channels(channels)?;
    let phy = cfg.phy()?;
    let probes = probe_all(&phy, channels, cfg)?;
    let mut per_node: Vec<Vec<(LinkId, Vec<f64>)>> = vec![Vec::new(), Vec::new(), Vec::new()];

    for node in NODES {
        for other in NODES.into_iter().filter(|&o| o != node) {
            let y = phy.to_processing(received(&probes, other, node))?;
            per_node[node.0 as usize].push((LinkId::new(node, other)?, preprocess(&y, &cfg.preprocess)?));
        }
    }

    for [coop, init, gen] in ROTATIONS {
        let kernel_link = link_index(coop, gen);
        let whisper_link = link_index(coop, init);
        let h = &channels[kernel_link];
        let kernel = phy.kernel(h, received(&probes, gen, coop))?;
        let y = phy.to_processing(received(&probes, init, coop))?;
        let solve_seed = cfg.event_seed(tag::CV_PARTITION, coop, gen);
        let (s, _) = phy.deconvolve(&kernel, &y, cfg.deconv_method, &cfg.solver, solve_seed)?;
        let noise_seed = cfg.snr_db.map(|_| cfg.event_seed(tag::WHISPER_NOISE, coop, gen));
        let r = phy.transmit(&s, h, noise_seed)?;
        let reference = phy.clean_observation(&channels[whisper_link]);
        let synced = phy.synchronize(&r, &reference)?;
        let w = phy.to_processing(&synced)?;
        per_node[gen.0 as usize].push((LinkId::new(coop, init)?, preprocess(&w, &cfg.preprocess)?));
    }
    Ok(CkgObservations { per_node })
}

fn mean_pairwise_match(bits: &[&str]) -> Result<Option<f64>> {
    if bits.iter().any(|b| b.is_empty()) {
        return Ok(None);
    }
    let mut acc = Vec::new();
    for i in 0..bits.len() {
        for j in i + 1..bits.len() {
            acc.push(bit_match_ratio(bits[i], bits[j])?);
        }
    }
    Ok(Some(acc.iter().sum::<f64>() / acc.len() as f64))
}

/// Quantization, drop-index reconciliation and the agreement gate.
pub fn finalize_ckg(obs: &CkgObservations, quantizer: &QuantizerConfig, traffic: &TrafficModel) -> Result<RoundResult> {
    let materials = obs
        .per_node
        .iter()
        .map(|links| quantize(&concat_links(links)?, quantizer))
        .collect::<Result<Vec<_>>>()?;
    let reconciled = reconcile_indices(&materials)?;
    let bits: Vec<&str> = reconciled.iter().map(|m| m.bits.as_str()).collect();
    let agreed = bits.windows(2).all(|w| w[0] == w[1]);
    let bit_match = mean_pairwise_match(&bits)?;
    let key_length_bits = if agreed { bits[0].len() } else { 0 };
    Ok(RoundResult {
        scheme: KeyScheme::Ckg,
        per_node_bits: reconciled,
        agreed,
        key_length_bits,
        bit_match,
        traffic: count_packets(traffic, KeyScheme::Ckg)?,
    })
}

pub fn run_ckg_round(channels: &[ChannelRealization], cfg: &RoundConfig) -> Result<RoundResult> {
    finalize_ckg(&observe_ckg(channels, cfg)?, &cfg.quantizer, &cfg.traffic)
}

/// Probing of one CKD round: each link observed in both directions.
pub fn observe_ckd(channels: &[ChannelRealization], cfg: &RoundConfig) -> Result<CkdObservations> {
    check_channels(channels)?;
    let phy = cfg.phy()?;
    let probes = probe_all(&phy, channels, cfg)?;
    let per_link = links()
        .into_iter()
        .map(|l| {
            let (lo, hi) = l.nodes();
            let at_lo = preprocess(&phy.to_processing(received(&probes, hi, lo))?, &cfg.preprocess)?;
            let at_hi = preprocess(&phy.to_processing(received(&probes, lo, hi))?, &cfg.preprocess)?;
            Ok((l, [at_lo, at_hi]))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CkdObservations { per_link })
}

fn xor(a: &str, b: &str) -> String {
    a.bytes().zip(b.bytes()).map(|(x, y)| if x == y { '0' } else { '1' }).collect()
}

fn key_material(bits: String) -> BitMaterial {
    BitMaterial { kept_indices: (0..bits.len() / 2).collect(), dropped_indices: Vec::new(), bits }
}

/// Pairwise keys, then a random group key from the lead node sent to each
/// other node XOR-ed with their pairwise key.
pub fn finalize_ckd(
    obs: &CkdObservations,
    quantizer: &QuantizerConfig,
    traffic: &TrafficModel,
    seed: u64,
) -> Result<RoundResult> {
    let mut pairwise = Vec::with_capacity(obs.per_link.len());
    let mut matches = Vec::new();
    for (link, [lo, hi]) in &obs.per_link {
        let r = reconcile_indices(&[quantize(lo, quantizer)?, quantize(hi, quantizer)?])?;
        let (a, b) = (r[0].bits.clone(), r[1].bits.clone());
        if !a.is_empty() {
            matches.push(bit_match_ratio(&a, &b)?);
        }
        pairwise.push((*link, a, b));
    }

    // The lead node is the smallest id and needs its keys with every other node.
    let lead = NODES[0];
    let needed: Vec<&(LinkId, String, String)> =
        pairwise.iter().filter(|(l, _, _)| l.contains(lead)).collect();
    let all_agree = needed.iter().all(|(_, a, b)| a == b);
    let len = needed.iter().map(|(_, a, _)| a.len()).min().unwrap_or(0);
    let mut rng = seed::rng(seed::derive(seed, &[tag::GROUP_KEY]));
    let group: String = (0..len).map(|_| if rng.random::<bool>() { '1' } else { '0' }).collect();

    let mut per_node = vec![key_material(group.clone())];
    for (_, lead_side, other_side) in &needed {
        let message = xor(&group, &lead_side[..len]);
        per_node.push(key_material(xor(&message, &other_side[..len])));
    }
    let agreed = all_agree && per_node.windows(2).all(|w| w[0].bits == w[1].bits);
    Ok(RoundResult {
        scheme: KeyScheme::Ckd,
        per_node_bits: per_node,
        agreed,
        key_length_bits: if agreed { len } else { 0 },
        bit_match: (!matches.is_empty()).then(|| matches.iter().sum::<f64>() / matches.len() as f64),
        traffic: count_packets(traffic, KeyScheme::Ckd)?,
    })
}

pub fn run_ckd_round(channels: &[ChannelRealization], cfg: &RoundConfig) -> Result<RoundResult> {
    finalize_ckd(&observe_ckd(channels, cfg)?, &cfg.quantizer, &cfg.traffic, cfg.seed)
}
