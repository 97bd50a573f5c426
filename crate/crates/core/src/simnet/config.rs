//! Scenario configuration, read from TOML.
//!
//! Every table rejects unknown keys and the file must carry
//! `version = 1`. Omitted tables take their defaults.
//!
//! ```toml
//! version = 1
//! seed = 7
//!
//! [network]
//! watchers = 35
//! juniors = 10
//!
//! [scenario.double_spend]
//! adversarial = true
//! ```

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::epoch::SecurityParams;
use crate::units::{Fraction, MicroInter, Tick, MICRO_PER_INTER};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("unsupported config version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(
        "epoch duration T_ep = {t_ep} must exceed D·δ_min = {diameter}·{delta_min} = {bound} \
         (D is the topology diameter)"
    )]
    EpochTooShort {
        t_ep: Tick,
        diameter: u64,
        delta_min: Tick,
        bound: Tick,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub version: u32,
    pub seed: u64,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub security: SecurityParams,
    #[serde(default)]
    pub gossip: GossipParams,
    #[serde(default)]
    pub adversary: AdversaryConfig,
    pub scenario: Scenario,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    Complete,
    Ring,
    Path,
    /// Random spanning tree plus `extra_edges` chords.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClientPolicy {
    /// Act only on a Green certificate.
    RequireGreen,
    /// Act on the best-supported hash unless Red.
    AcceptYellow,
    /// Like `RequireGreen`, but a Red stream defers the decision.
    WaitAfterRed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub watchers: u64,
    pub juniors: u64,
    pub clients: u64,
    pub topology: TopologyKind,
    pub extra_edges: usize,
    pub t_ep: Tick,
    pub epochs: u64,
    pub stream_inter: MicroInter,
    pub node_stake: MicroInter,
    /// Overrides the size derived from `stream_inter`.
    pub swarm_size: Option<u64>,
    /// Ticks after epoch start at which swarm members sign digests.
    pub digest_delay: Option<Tick>,
    /// Ticks after epoch start at which clients decide.
    pub decide_delay: Option<Tick>,
    pub client_policy: ClientPolicy,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            watchers: 35,
            juniors: 10,
            clients: 2,
            topology: TopologyKind::Complete,
            extra_edges: 0,
            t_ep: 100,
            epochs: 2,
            stream_inter: MICRO_PER_INTER,
            node_stake: MICRO_PER_INTER,
            swarm_size: None,
            digest_delay: None,
            decide_delay: None,
            client_policy: ClientPolicy::RequireGreen,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GossipParams {
    pub kappa: u64,
    pub rounds: u64,
    /// Per-hop latency in ticks.
    pub delta_min: Tick,
}

impl Default for GossipParams {
    fn default() -> Self {
        Self {
            kappa: 5,
            rounds: 3,
            delta_min: 1,
        }
    }
}

/// Scenario drivers script the attack itself; these knobs set its shape
/// where a scenario leaves room for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdversaryConfig {
    /// Share of the swarm that equivocates in the first epoch.
    pub controlled_watcher_fraction: Fraction,
    /// Client indices, `0..clients`.
    pub eclipsed_clients: BTreeSet<u64>,
    pub suppress_pocs: bool,
    pub junior_fraction: Fraction,
}

impl Default for AdversaryConfig {
    fn default() -> Self {
        Self {
            controlled_watcher_fraction: Fraction::new(0, 1),
            eclipsed_clients: BTreeSet::new(),
            suppress_pocs: true,
            junior_fraction: Fraction::new(0, 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    DoubleSpend(DoubleSpendParams),
    Disagreement(DisagreementParams),
    Corruption(CorruptionParams),
    GossipMeasure(GossipMeasureParams),
    RippleTrace(RippleTraceParams),
    EconomySoak(EconomySoakParams),
}

impl Scenario {
    pub fn kind(&self) -> &'static str {
        match self {
            Scenario::DoubleSpend(_) => "double_spend",
            Scenario::Disagreement(_) => "disagreement",
            Scenario::Corruption(_) => "corruption",
            Scenario::GossipMeasure(_) => "gossip_measure",
            Scenario::RippleTrace(_) => "ripple_trace",
            Scenario::EconomySoak(_) => "economy_soak",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DoubleSpendParams {
    /// Number of transfers that each spend the whole balance (2 or 3).
    pub conflicting: usize,
    pub balance: u64,
    /// Also run every adversary subset presenting a divergent hash.
    pub adversarial: bool,
}

impl Default for DoubleSpendParams {
    fn default() -> Self {
        Self {
            conflicting: 2,
            balance: 100,
            adversarial: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DisagreementParams {
    pub sufficiency_sizes: Vec<u64>,
    pub sufficiency_runs: u64,
    pub necessity_sizes: Vec<u64>,
    pub necessity_runs: u64,
    /// Runs for each of the two single-condition families.
    pub control_runs: u64,
}

impl Default for DisagreementParams {
    fn default() -> Self {
        Self {
            sufficiency_sizes: vec![6, 35],
            sufficiency_runs: 25,
            necessity_sizes: vec![6, 9, 12],
            necessity_runs: 1000,
            control_runs: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorruptionParams {
    pub swarm: u64,
    pub colluders: u64,
    /// Eligible watcher pool; must leave a full swarm after convictions.
    pub pool: u64,
    /// Colluders show the conflicting attestation to one random junior only.
    pub stealth: bool,
    pub runs: u64,
    /// Per-colluder gain from a completed double-spend, micro-INTER.
    pub gain: MicroInter,
}

impl Default for CorruptionParams {
    fn default() -> Self {
        Self {
            swarm: 35,
            colluders: 24,
            pool: 70,
            stealth: false,
            runs: 200,
            gain: MICRO_PER_INTER,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GossipCell {
    pub f_j: Fraction,
    pub kappa: u64,
    pub rounds: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GossipMeasureParams {
    /// Junior fraction of the headline cell; κ and r come from `[gossip]`.
    pub f_j: Fraction,
    pub trials: u64,
    pub juniors: u64,
    /// Rounds of gossip in one epoch.
    pub epoch_rounds: u64,
    pub grid: Vec<GossipCell>,
    pub grid_trials: u64,
}

impl Default for GossipMeasureParams {
    fn default() -> Self {
        let mut grid = Vec::new();
        for f in [Fraction::new(1, 4), Fraction::new(1, 3), Fraction::new(1, 2)] {
            for kappa in [3, 5] {
                for rounds in [2, 3] {
                    grid.push(GossipCell { f_j: f, kappa, rounds });
                }
            }
        }
        Self {
            f_j: Fraction::new(1, 3),
            trials: 100_000,
            juniors: 60,
            epoch_rounds: 20,
            grid,
            grid_trials: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RippleTraceParams {
    pub topologies: u64,
    pub min_nodes: u64,
    pub max_nodes: u64,
    pub delta_fee: MicroInter,
}

impl Default for RippleTraceParams {
    fn default() -> Self {
        Self {
            topologies: 1000,
            min_nodes: 2,
            max_nodes: 200,
            delta_fee: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EconomySoakParams {
    pub events: u64,
    pub streams: u64,
    pub coins: u64,
    pub nodes: u64,
    #[doc(hidden)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inject_fault_at: Option<u64>,
}

impl Default for EconomySoakParams {
    fn default() -> Self {
        Self {
            events: 10_000,
            streams: 8,
            coins: 3,
            nodes: 6,
            inject_fault_at: None,
        }
    }
}

impl SimConfig {
    /// Default settings for one scenario kind.
    pub fn new(seed: u64, scenario: Scenario) -> Self {
        Self {
            version: CONFIG_VERSION,
            seed,
            network: NetworkConfig::default(),
            security: SecurityParams::default(),
            gossip: GossipParams::default(),
            adversary: AdversaryConfig::default(),
            scenario,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: SimConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.version != CONFIG_VERSION {
            return Err(ConfigError::Version {
                found: self.version,
                expected: CONFIG_VERSION,
            });
        }
        let n = &self.network;
        if n.t_ep == 0 {
            return bad("network.t_ep must be positive");
        }
        if n.epochs == 0 {
            return bad("network.epochs must be positive");
        }
        if n.clients == 0 {
            return bad("network.clients must be positive");
        }
        if self.gossip.kappa == 0 || self.gossip.rounds == 0 {
            return bad("gossip.kappa and gossip.rounds must be at least 1");
        }
        if self.gossip.delta_min == 0 {
            return bad("gossip.delta_min must be positive");
        }
        let a = &self.adversary;
        if !a.controlled_watcher_fraction.is_unit_interval() || !a.junior_fraction.is_unit_interval() {
            return bad("adversary fractions must lie in [0, 1]");
        }
        if let Some(&c) = a.eclipsed_clients.iter().find(|&&c| c >= n.clients) {
            return Err(ConfigError::Invalid(format!(
                "eclipsed client {c} does not exist ({} clients)",
                n.clients
            )));
        }
        let s = &self.security;
        if s.c == 0 || s.inter_base == 0 {
            return bad("security.c and security.inter_base must be positive");
        }
        if let Err(e) = s.hoepman_bound() {
            return Err(ConfigError::Invalid(format!("security: {e}")));
        }
        match &self.scenario {
            Scenario::DoubleSpend(p) if !(2..=3).contains(&p.conflicting) => {
                bad("double_spend.conflicting must be 2 or 3")
            }
            Scenario::DoubleSpend(p) if p.balance == 0 => bad("double_spend.balance must be positive"),
            Scenario::Disagreement(p)
                if p.sufficiency_sizes.iter().chain(&p.necessity_sizes).any(|&n| n < 3) =>
            {
                bad("disagreement swarm sizes must be at least 3")
            }
            Scenario::Corruption(p) if p.colluders > p.swarm || p.swarm > p.pool => {
                bad("corruption needs colluders <= swarm <= pool")
            }
            Scenario::Corruption(p) if p.swarm == 0 => bad("corruption.swarm must be positive"),
            Scenario::GossipMeasure(p) => {
                let cells = p.grid.iter().map(|c| (c.f_j, c.kappa, c.rounds));
                let all = std::iter::once((p.f_j, self.gossip.kappa, self.gossip.rounds)).chain(cells);
                for (f, k, r) in all {
                    if f.numer() >= f.denom() || k == 0 || r == 0 {
                        return bad("gossip cells need f_j < 1, kappa >= 1, rounds >= 1");
                    }
                }
                if p.juniors < 2 || p.epoch_rounds < self.gossip.rounds {
                    return bad("gossip_measure needs juniors >= 2 and epoch_rounds >= rounds");
                }
                Ok(())
            }
            Scenario::RippleTrace(p) if p.min_nodes == 0 || p.min_nodes > p.max_nodes => {
                bad("ripple_trace needs 1 <= min_nodes <= max_nodes")
            }
            Scenario::EconomySoak(p)
                if p.streams < 2 || p.coins == 0 || p.coins > p.streams || p.nodes == 0 =>
            {
                bad("economy_soak needs streams >= 2, 1 <= coins <= streams, nodes >= 1")
            }
            _ => Ok(()),
        }
    }
}
