//! Packet accounting for one group key over a full mesh of `N` nodes.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KeyScheme {
    /// Cooperative key generation (channel whispering).
    Ckg,
    /// Pairwise keys plus a lead-node group key distributed by XOR.
    Ckd,
}

impl fmt::Display for KeyScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KeyScheme::Ckg => "ckg",
            KeyScheme::Ckd => "ckd",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrafficModel {
    pub node_count: u64,
    /// Packets spent electing or announcing the lead node.
    pub lead_setup_packets: u64,
}

impl Default for TrafficModel {
    fn default() -> Self {
        Self { node_count: 3, lead_setup_packets: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrafficLedger {
    pub scheme: KeyScheme,
    pub node_count: u64,
    /// `(phase, packets)` in protocol order.
    pub phases: Vec<(&'static str, u64)>,
}

impl TrafficLedger {
    pub fn total(&self) -> u64 {
        self.phases.iter().map(|(_, n)| n).sum()
    }

    pub fn phase(&self, name: &str) -> Option<u64> {
        self.phases.iter().find(|(p, _)| *p == name).map(|(_, n)| *n)
    }
}

pub const PHASES: [&str; 6] =
    ["probing", "s_signals", "dropping", "error_correction", "lead_setup", "key_distribution"];

pub fn count_packets(model: &TrafficModel, scheme: KeyScheme) -> Result<TrafficLedger> {
    let n = model.node_count;
    if n < 3 {
        return Err(Error::InvalidParameter(format!("need at least 3 nodes, got {n}")));
    }
    let x = model.lead_setup_packets;
    let pairs = n * (n - 1) / 2;
    let phases = match scheme {
        KeyScheme::Ckd => vec![
            ("probing", n),
            ("dropping", n * (n - 1)),
            ("error_correction", pairs),
            ("lead_setup", x),
            ("key_distribution", n - 1),
        ],
        KeyScheme::Ckg => vec![
            ("probing", n),
            ("s_signals", n * (pairs - (n - 1))),
            ("lead_setup", x),
            ("dropping", n),
            ("error_correction", 1),
        ],
    };
    Ok(TrafficLedger { scheme, node_count: n, phases })
}

/// Whole rounds affordable with `budget` packets.
pub fn rounds_for_budget(budget: u64, model: &TrafficModel, scheme: KeyScheme) -> Result<u64> {
    Ok(budget / count_packets(model, scheme)?.total())
}
