//! Run reports: full JSON plus CSV views of colour timelines and
//! statistics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::economy::Audit;
use crate::ripple::RippleTrace;
use crate::units::Tick;

use super::config::SimConfig;
use super::gossip::CellResult;
use super::world::WorldOutcome;

/// A named property evaluated by a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

/// One CSV statistics row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatRow {
    pub suite: String,
    pub cell: String,
    pub statistic: String,
    pub value: f64,
    pub bound: Option<f64>,
    pub pass: bool,
}

/// A world kept in full for inspection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldSample {
    pub label: String,
    pub outcome: WorldOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RippleSummary {
    pub index: u64,
    pub nodes: u64,
    pub edges: u64,
    pub diameter: u64,
    pub fee: u64,
    pub processed: u64,
    pub max_hops: u64,
    pub repeats: u64,
    pub duplicates_discarded: u64,
    pub quiescent: bool,
    /// Nodes processing the same id re-injected in its own epoch.
    pub reinjected_same_epoch: u64,
    /// The same, one epoch later after eviction.
    pub reinjected_next_epoch: u64,
    /// The same, two epochs later, once the id has left the tables.
    pub reinjected_after_retention: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRow {
    pub label: String,
    pub tick: Tick,
    pub audit: Audit,
}

/// Bounded-Yellow bookkeeping folded over every world of a run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct YellowStats {
    pub worlds: u64,
    /// Longest Yellow stretch inside one epoch at a non-eclipsed client.
    pub max_yellow_within_epoch: Tick,
    /// Epoch-client pairs with no active equivocator that never went Green.
    pub honest_epochs_without_green: u64,
    /// Worlds where some Red stretch did not end at the next shuffle.
    pub red_exit_violations: u64,
}

impl YellowStats {
    pub fn add(&mut self, o: &WorldOutcome) {
        self.worlds += 1;
        self.max_yellow_within_epoch = self.max_yellow_within_epoch.max(o.max_yellow_within_epoch);
        self.honest_epochs_without_green += o.honest_epochs_without_green.len() as u64;
        self.red_exit_violations += u64::from(!o.red_exits_at_shuffle);
    }

    pub fn bounded(&self, t_ep: Tick) -> bool {
        self.max_yellow_within_epoch <= t_ep
            && self.honest_epochs_without_green == 0
            && self.red_exit_violations == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub kind: String,
    pub seed: u64,
    pub config: SimConfig,
    pub t_ep: Tick,
    pub conflicting_finality: u64,
    pub yellow: YellowStats,
    pub audits_ok: bool,
    pub checks: Vec<Check>,
    pub table: Vec<StatRow>,
    pub stats: BTreeMap<String, serde_json::Value>,
    pub samples: Vec<WorldSample>,
    pub gossip_cells: Vec<CellResult>,
    pub ripple_summaries: Vec<RippleSummary>,
    pub ripple_traces: Vec<RippleTrace>,
    pub audits: Vec<AuditRow>,
}

#[derive(Serialize)]
struct TimelineRow<'a> {
    sample: &'a str,
    client: u64,
    tick: Tick,
    colour: &'static str,
}

impl RunReport {
    pub fn new(config: &SimConfig) -> Self {
        Self {
            kind: config.scenario.kind().to_string(),
            seed: config.seed,
            config: config.clone(),
            t_ep: config.network.t_ep,
            conflicting_finality: 0,
            yellow: YellowStats::default(),
            audits_ok: true,
            checks: Vec::new(),
            table: Vec::new(),
            stats: BTreeMap::new(),
            samples: Vec::new(),
            gossip_cells: Vec::new(),
            ripple_summaries: Vec::new(),
            ripple_traces: Vec::new(),
            audits: Vec::new(),
        }
    }

    pub fn check(&mut self, name: &str, pass: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.to_string(),
            pass,
            detail: detail.into(),
        });
    }

    pub fn stat(&mut self, key: &str, value: impl Serialize) {
        self.stats.insert(
            key.to_string(),
            serde_json::to_value(value).expect("statistics serialise"),
        );
    }

    pub fn find(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Every check passed and every audit held.
    pub fn passed(&self) -> bool {
        self.audits_ok && self.checks.iter().all(|c| c.pass)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialise")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    /// `sample,client,tick,colour`, one row per colour change.
    pub fn timelines_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for s in &self.samples {
            for (client, tl) in &s.outcome.timelines {
                for (tick, colour) in tl {
                    w.serialize(TimelineRow {
                        sample: &s.label,
                        client: client.0,
                        tick: *tick,
                        colour: colour.name(),
                    })
                    .expect("csv row");
                }
            }
        }
        finish(w)
    }

    /// `suite,cell,statistic,value,bound,pass`.
    pub fn stats_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.table {
            w.serialize(row).expect("csv row");
        }
        finish(w)
    }
}

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("csv flush")).expect("csv is utf-8")
}
