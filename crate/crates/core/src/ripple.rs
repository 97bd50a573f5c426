//! Ripple deduplication and fee-bearing propagation.
//!
//! Every node keeps a seen-table of ripple ids `(origin, msg_hash, epoch)`.
//! A ripple is processed at most once per node while its id is retained,
//! which is for the id's own epoch and the next one. Each hop costs
//! `delta_fee`, so propagation stops when the fee runs out even without
//! deduplication.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::crypto::{Digest, NodeId};
use crate::topology::Topology;
use crate::units::{Epoch, MicroInter, StreamId, Tick};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RippleId {
    pub origin: StreamId,
    pub msg_hash: Digest,
    pub epoch: Epoch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeenTable {
    pub owner: NodeId,
    entries: BTreeSet<RippleId>,
}

impl SeenTable {
    pub fn new(owner: NodeId) -> Self {
        Self {
            owner,
            entries: BTreeSet::new(),
        }
    }

    pub fn contains(&self, rid: &RippleId) -> bool {
        self.entries.contains(rid)
    }

    pub fn insert(&mut self, rid: RippleId) -> bool {
        self.entries.insert(rid)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Removes entries with `epoch < current − 1`.
    pub fn evict(&mut self, current: Epoch) {
        let floor = current.saturating_sub(1);
        self.entries.retain(|r| r.epoch >= floor);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RippleMessage {
    pub rid: RippleId,
    #[serde(with = "hex")]
    pub payload: Vec<u8>,
    pub hop_count: u64,
    pub fee_remaining: MicroInter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscardReason {
    DuplicateRid,
    FeeExhausted,
    /// The id's epoch is older than the retention window.
    StaleEpoch,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RippleOutcome {
    Forwarded { to: Vec<NodeId>, msg: RippleMessage },
    Discarded(DiscardReason),
}

/// One node's handling of an incoming ripple.
pub fn process_ripple(
    table: &mut SeenTable,
    neighbours: &BTreeSet<NodeId>,
    msg: &RippleMessage,
    current: Epoch,
    delta_fee: MicroInter,
) -> RippleOutcome {
    if table.contains(&msg.rid) {
        return RippleOutcome::Discarded(DiscardReason::DuplicateRid);
    }
    if msg.rid.epoch + 1 < current {
        return RippleOutcome::Discarded(DiscardReason::StaleEpoch);
    }
    if msg.fee_remaining < delta_fee {
        return RippleOutcome::Discarded(DiscardReason::FeeExhausted);
    }
    table.insert(msg.rid);
    RippleOutcome::Forwarded {
        to: neighbours.iter().copied().collect(),
        msg: RippleMessage {
            fee_remaining: msg.fee_remaining - delta_fee,
            hop_count: msg.hop_count + 1,
            ..msg.clone()
        },
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DurationCheck {
    Ok { diameter: u64, connected: bool },
    Violation { bound: Tick, diameter: u64 },
}

/// `T_ep` must exceed `D · δ_min` for the graph's diameter `D`. For a
/// disconnected graph the largest component diameter is used and
/// `connected` is false.
pub fn check_epoch_duration(topology: &Topology, delta_min: Tick, t_ep: Tick) -> DurationCheck {
    let diameter = topology.diameter();
    let bound = diameter * delta_min;
    if t_ep > bound {
        DurationCheck::Ok {
            diameter,
            connected: topology.is_connected(),
        }
    } else {
        DurationCheck::Violation { bound, diameter }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RippleTrace {
    /// Nodes in processing order, origin first.
    pub nodes_processed: Vec<NodeId>,
    pub max_hops: u64,
    pub duplicates_discarded: u64,
    pub fee_exhausted: u64,
    pub stale_discarded: u64,
    /// Nodes that processed the ripple more than once.
    pub repeats: u64,
    pub deliveries: u64,
    pub quiescent: bool,
}

/// Runs one ripple to quiescence over fresh seen-tables.
pub fn trace_ripple(
    topology: &Topology,
    origin: NodeId,
    msg: RippleMessage,
    current: Epoch,
    delta_fee: MicroInter,
) -> RippleTrace {
    let mut tables = BTreeMap::new();
    trace_ripple_with(&mut tables, topology, origin, msg, current, delta_fee)
}

/// Runs one ripple to quiescence, reusing and updating `tables`.
///
/// The origin refuses a stale id and otherwise records it without paying a
/// fee; each receiving node pays `delta_fee`. Deliveries are handled in FIFO order, which matches uniform
/// per-hop latency.
pub fn trace_ripple_with(
    tables: &mut BTreeMap<NodeId, SeenTable>,
    topology: &Topology,
    origin: NodeId,
    msg: RippleMessage,
    current: Epoch,
    delta_fee: MicroInter,
) -> RippleTrace {
    let mut trace = RippleTrace::default();
    let mut counts: BTreeMap<NodeId, u64> = BTreeMap::new();
    let table = tables.entry(origin).or_insert_with(|| SeenTable::new(origin));
    let mut queue = VecDeque::new();
    if msg.rid.epoch + 1 < current {
        trace.stale_discarded += 1;
    } else if table.insert(msg.rid) {
        trace.nodes_processed.push(origin);
        *counts.entry(origin).or_default() += 1;
        for &w in topology.neighbours(origin) {
            queue.push_back((w, msg.clone()));
        }
    } else {
        trace.duplicates_discarded += 1;
    }
    // every accepted hop burns at least one fee unit, or is deduplicated
    let budget = (topology.len() as u64 + 1) * (topology.edge_count() as u64 * 2 + 1) + 1;
    while let Some((v, m)) = queue.pop_front() {
        trace.deliveries += 1;
        if trace.deliveries > budget {
            return trace;
        }
        let table = tables.entry(v).or_insert_with(|| SeenTable::new(v));
        match process_ripple(table, topology.neighbours(v), &m, current, delta_fee) {
            RippleOutcome::Forwarded { to, msg } => {
                trace.nodes_processed.push(v);
                trace.max_hops = trace.max_hops.max(msg.hop_count);
                let c = counts.entry(v).or_default();
                *c += 1;
                if *c == 2 {
                    trace.repeats += 1;
                }
                queue.extend(to.into_iter().map(|w| (w, msg.clone())));
            }
            RippleOutcome::Discarded(DiscardReason::DuplicateRid) => trace.duplicates_discarded += 1,
            RippleOutcome::Discarded(DiscardReason::FeeExhausted) => trace.fee_exhausted += 1,
            RippleOutcome::Discarded(DiscardReason::StaleEpoch) => trace.stale_discarded += 1,
        }
    }
    trace.quiescent = true;
    trace
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::hash;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn msg(ep: Epoch, fee: MicroInter) -> RippleMessage {
        RippleMessage {
            rid: RippleId {
                origin: StreamId(1),
                msg_hash: hash(b"m"),
                epoch: ep,
            },
            payload: vec![1, 2, 3],
            hop_count: 0,
            fee_remaining: fee,
        }
    }

    #[test]
    fn first_then_duplicate() {
        let mut t = SeenTable::new(NodeId(0));
        let nb = BTreeSet::from([NodeId(1), NodeId(2)]);
        let m = msg(0, 10);
        match process_ripple(&mut t, &nb, &m, 0, 1) {
            RippleOutcome::Forwarded { to, msg } => {
                assert_eq!(to, vec![NodeId(1), NodeId(2)]);
                assert_eq!((msg.fee_remaining, msg.hop_count), (9, 1));
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(
            process_ripple(&mut t, &nb, &m, 0, 1),
            RippleOutcome::Discarded(DiscardReason::DuplicateRid)
        );
    }

    #[test]
    fn zero_fee_is_exhausted() {
        let mut t = SeenTable::new(NodeId(0));
        assert_eq!(
            process_ripple(&mut t, &BTreeSet::new(), &msg(0, 0), 0, 1),
            RippleOutcome::Discarded(DiscardReason::FeeExhausted)
        );
        assert!(t.is_empty());
    }

    #[test]
    fn eviction_window() {
        let mut t = SeenTable::new(NodeId(0));
        t.insert(msg(5, 1).rid);
        t.evict(6);
        assert_eq!(t.len(), 1);
        t.evict(7);
        assert!(t.is_empty());
        let mut empty = SeenTable::new(NodeId(0));
        empty.evict(3);
        assert!(empty.is_empty());
    }

    #[test]
    fn epoch_duration_checks() {
        let p = Topology::path(10);
        assert_eq!(
            check_epoch_duration(&p, 1, 20),
            DurationCheck::Ok {
                diameter: 9,
                connected: true
            }
        );
        assert_eq!(
            check_epoch_duration(&p, 1, 9),
            DurationCheck::Violation {
                bound: 9,
                diameter: 9
            }
        );
        assert!(matches!(
            check_epoch_duration(&Topology::empty(1), 1, 1),
            DurationCheck::Ok { diameter: 0, .. }
        ));
    }

    #[test]
    fn ring_trace() {
        let t = trace_ripple(&Topology::ring(10), NodeId(0), msg(0, 1_000), 0, 1);
        assert_eq!(t.nodes_processed.len(), 10);
        assert_eq!(t.duplicates_discarded, 11);
        assert_eq!(t.max_hops, 5);
        assert!(t.quiescent);
    }

    #[test]
    fn complete_graph_trace() {
        let t = trace_ripple(&Topology::complete(5), NodeId(0), msg(0, 1_000), 0, 1);
        assert_eq!(t.nodes_processed.len(), 5);
        // origin sends 4, each of the 4 receivers sends 4, 4 of 20 are new
        assert_eq!(t.duplicates_discarded, 16);
        assert!(t.quiescent);
    }

    #[test]
    fn fee_limits_reach() {
        let t = trace_ripple(&Topology::path(10), NodeId(0), msg(0, 3), 0, 1);
        assert_eq!(t.nodes_processed, (0..4).map(NodeId).collect::<Vec<_>>());
        assert_eq!(t.fee_exhausted, 1);
    }

    #[test]
    fn retention_across_epochs() {
        let topo = Topology::ring(6);
        let mut tables = BTreeMap::new();
        trace_ripple_with(&mut tables, &topo, NodeId(0), msg(4, 100), 4, 1);
        for ep in [4, 5] {
            for t in tables.values_mut() {
                t.evict(ep);
            }
            let again = trace_ripple_with(&mut tables, &topo, NodeId(3), msg(4, 100), ep, 1);
            assert!(again.nodes_processed.is_empty(), "epoch {ep}");
        }
        for t in tables.values_mut() {
            t.evict(6);
        }
        let late = trace_ripple_with(&mut tables, &topo, NodeId(3), msg(4, 100), 6, 1);
        // past retention the origin refuses the id instead of treating it as new
        assert!(late.nodes_processed.is_empty());
        assert_eq!(late.stale_discarded, 1);
    }

    #[test]
    fn fee_strictly_decreases_along_chains() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let n = rng.gen_range(2..40);
            let topo = Topology::random_connected(n, n as usize, &mut rng);
            let mut m = msg(0, 50);
            let mut tables: BTreeMap<NodeId, SeenTable> = BTreeMap::new();
            let mut v = NodeId(0);
            loop {
                let table = tables.entry(v).or_insert_with(|| SeenTable::new(v));
                match process_ripple(table, topo.neighbours(v), &m, 0, 1) {
                    RippleOutcome::Forwarded { to, msg } => {
                        assert!(msg.fee_remaining < m.fee_remaining);
                        m = msg;
                        v = to[rng.gen_range(0..to.len())];
                    }
                    RippleOutcome::Discarded(_) => break,
                }
            }
        }
    }
}
