//! Communication and computation accounting.
//!
//! Byte sizes use the FP32 wire format (4 bytes per parameter) and MiB
//! (1 MB = 1,048,576 bytes). Budgets are compared against the mean
//! per-client cumulative cost (download + upload).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BYTES_PER_PARAM: u64 = 4;
pub const LOSS_ENTRY_BYTES: u64 = 8;
pub const BYTES_PER_MB: f64 = 1_048_576.0;
pub const FLOPS_PER_GFLOP: f64 = 1e9;

pub fn model_bytes(param_count: usize) -> u64 {
    param_count as u64 * BYTES_PER_PARAM
}

pub fn bytes_to_mb(bytes: f64) -> f64 {
    bytes / BYTES_PER_MB
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "clad")]
    Clad,
    #[serde(rename = "local")]
    Local,
    #[serde(rename = "fedavg")]
    FedAvg,
    #[serde(rename = "ifca")]
    Ifca,
    #[serde(rename = "cfl-ads")]
    CflAdStandard,
    #[serde(rename = "cfl-ade")]
    CflAdEnhanced,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Clad,
        Algorithm::Local,
        Algorithm::FedAvg,
        Algorithm::Ifca,
        Algorithm::CflAdStandard,
        Algorithm::CflAdEnhanced,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Clad => "clad",
            Algorithm::Local => "local",
            Algorithm::FedAvg => "fedavg",
            Algorithm::Ifca => "ifca",
            Algorithm::CflAdStandard => "cfl-ads",
            Algorithm::CflAdEnhanced => "cfl-ade",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::field("algorithm", format!("unknown algorithm '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Clustering,
    Stabilized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Traffic {
    pub download: u64,
    pub upload: u64,
}

impl Traffic {
    pub fn total(self) -> u64 {
        self.download + self.upload
    }
}

/// Per-client bytes exchanged in `round` (round 0 is setup, before training).
pub fn round_traffic(algorithm: Algorithm, phase: Phase, k: usize, model_bytes: u64, round: usize) -> Traffic {
    let k = k as u64;
    if round == 0 {
        return match algorithm {
            Algorithm::Local => Traffic {
                download: model_bytes,
                upload: 0,
            },
            _ => Traffic::default(),
        };
    }
    match (algorithm, phase) {
        (Algorithm::Local, _) => Traffic::default(),
        (Algorithm::Clad, Phase::Clustering) => Traffic {
            download: k * model_bytes,
            upload: model_bytes + k * LOSS_ENTRY_BYTES,
        },
        (Algorithm::Ifca, Phase::Clustering) => Traffic {
            download: k * model_bytes,
            upload: model_bytes,
        },
        _ => Traffic {
            download: model_bytes,
            upload: model_bytes,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClientCost {
    pub download: u64,
    pub upload: u64,
    pub flops: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerSnapshot {
    pub round: usize,
    pub total_bytes: u64,
    pub total_flops: u64,
    pub mean_bytes: f64,
    pub mean_flops: f64,
}

/// Cumulative per-client costs with one snapshot per recorded round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostLedger {
    pub clients: Vec<ClientCost>,
    pub snapshots: Vec<LedgerSnapshot>,
}

impl CostLedger {
    pub fn new(num_clients: usize) -> Self {
        Self {
            clients: vec![ClientCost::default(); num_clients],
            snapshots: Vec::new(),
        }
    }

    /// Adds one round of traffic and FLOPs. `participants` pairs a client
    /// index with the FLOPs that client spent this round.
    pub fn record_round(
        &mut self,
        round: usize,
        algorithm: Algorithm,
        phase: Phase,
        k: usize,
        model_bytes: u64,
        participants: &[(usize, u64)],
    ) -> Result<()> {
        if let Some(last) = self.snapshots.last() {
            if round <= last.round {
                return Err(Error::Config(format!(
                    "round {round} recorded after round {}",
                    last.round
                )));
            }
        }
        let traffic = round_traffic(algorithm, phase, k, model_bytes, round);
        for &(client, flops) in participants {
            let c = self
                .clients
                .get_mut(client)
                .ok_or_else(|| Error::Config(format!("client index {client} outside ledger")))?;
            c.download += traffic.download;
            c.upload += traffic.upload;
            c.flops += flops;
        }
        let total_bytes: u64 = self.clients.iter().map(|c| c.download + c.upload).sum();
        let total_flops: u64 = self.clients.iter().map(|c| c.flops).sum();
        let n = self.clients.len().max(1) as f64;
        self.snapshots.push(LedgerSnapshot {
            round,
            total_bytes,
            total_flops,
            mean_bytes: total_bytes as f64 / n,
            mean_flops: total_flops as f64 / n,
        });
        Ok(())
    }
}

/// A communication (MB) or computation (GFLOP) budget per client.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Budget {
    Bytes(f64),
    Flops(f64),
}

impl Budget {
    /// Whether a mean per-client cost fits within the budget.
    pub fn admits(&self, mean_bytes: f64, mean_flops: f64) -> bool {
        match self {
            Budget::Bytes(b) => mean_bytes <= *b,
            Budget::Flops(f) => mean_flops <= *f,
        }
    }
}

impl fmt::Display for Budget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Budget::Bytes(b) => write!(f, "{}MB", bytes_to_mb(*b)),
            Budget::Flops(x) => write!(f, "{}GFLOP", x / FLOPS_PER_GFLOP),
        }
    }
}

impl FromStr for Budget {
    type Err = Error;

    /// Accepts `<number>MB` or `<number>GFLOP` (case-insensitive).
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let bad = || Error::field("budget", format!("'{s}' is not <number>MB or <number>GFLOP"));
        let (num, ctor): (&str, fn(f64) -> Budget) = if let Some(n) = lower.strip_suffix("gflop") {
            (n, |v| Budget::Flops(v * FLOPS_PER_GFLOP))
        } else if let Some(n) = lower.strip_suffix("mb") {
            (n, |v| Budget::Bytes(v * BYTES_PER_MB))
        } else {
            return Err(bad());
        };
        let v: f64 = num.trim().parse().map_err(|_| bad())?;
        if !(v >= 0.0) || !v.is_finite() {
            return Err(bad());
        }
        Ok(ctor(v))
    }
}

/// Index of the last snapshot whose mean per-client cost is within the
/// budget; 0 (the initial evaluation) if none is.
pub fn budget_index(snapshots: &[LedgerSnapshot], budget: Budget) -> usize {
    snapshots
        .iter()
        .rposition(|s| budget.admits(s.mean_bytes, s.mean_flops))
        .unwrap_or(0)
}

/// Metrics row aligned with the snapshot selected by [`budget_index`].
pub fn metric_at_budget<'a, T>(logs: &'a [T], ledger: &CostLedger, budget: Budget) -> Result<&'a T> {
    if logs.len() != ledger.snapshots.len() {
        return Err(Error::shape(
            "round logs vs ledger snapshots",
            ledger.snapshots.len(),
            logs.len(),
        ));
    }
    logs.get(budget_index(&ledger.snapshots, budget))
        .ok_or(Error::Empty("round logs"))
}

/// `(ours − best) / best`, `None` when the baseline is zero.
pub fn relative_gain(ours: f64, best_baseline: f64) -> Option<f64> {
    (best_baseline != 0.0).then(|| (ours - best_baseline) / best_baseline)
}
