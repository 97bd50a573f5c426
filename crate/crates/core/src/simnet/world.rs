//! The discrete-event world: one watched stream, its swarm, juniors and
//! clients exchanging attestations, digests and PoCs over a topology.
//!
//! Events are ordered by `(time, sequence)`, the sequence being assigned at
//! enqueue. Every hop costs `δ_min` ticks. Honest nodes forward each item
//! once, on first receipt, to all neighbours not already covered by the
//! sender; this reaches exactly the nodes plain flooding would, at the same
//! times.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashSet};
use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::consensus::{
    evaluate_finality, junior_observe, make_attestation, red_threshold_check, supermajority,
    Attestation, Colour, ColourTracker, FinalityCertificate, GossipDigest, JuniorState,
    Observation, ProofOfCorruption, WatcherState,
};
use crate::crypto::{Contribution, Digest, Encoder, KeyPair, NodeId, PublicKey};
use crate::economy::{Audit, Ledger};
use crate::epoch::{assign_swarm, staking_eligible, EpochState, SeedSchedule};
use crate::ripple::{check_epoch_duration, DurationCheck};
use crate::stream::Rules;
use crate::topology::Topology;
use crate::units::{Epoch, MicroInter, StreamId, Tick};

use super::config::{ClientPolicy, ConfigError, SimConfig, TopologyKind};
use super::SimError;

/// The stream every world watches.
pub const WATCHED: StreamId = StreamId(1);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Watcher,
    Junior,
    Client,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Targets {
    /// Every topology neighbour.
    #[default]
    All,
    /// Direct injection, regardless of topology.
    Only(BTreeSet<NodeId>),
}

/// A scripted adversary. Controlled nodes never detect PoCs. During
/// `epoch`, controlled swarm members holding `fake_hash` sign both hashes
/// and deliver each to its targets.
#[derive(Debug, Clone, Default)]
pub struct Attack {
    pub watchers: BTreeSet<NodeId>,
    pub juniors: BTreeSet<NodeId>,
    pub fake_hash: Option<Digest>,
    pub real_to: Targets,
    pub fake_to: Targets,
    /// Digests listing every other swarm member, one per hash.
    pub forge_digests: bool,
    /// Controlled nodes forward nothing they receive.
    pub suppress: bool,
    /// Clients cut off from every honest node.
    pub eclipsed: BTreeSet<NodeId>,
    pub cuts: Vec<(NodeId, NodeId)>,
    pub epoch: Epoch,
}

impl Attack {
    fn controls(&self, v: NodeId) -> bool {
        self.watchers.contains(&v) || self.juniors.contains(&v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSpec {
    pub seed: u64,
    pub watchers: u64,
    pub juniors: u64,
    pub clients: u64,
    pub swarm_size: usize,
    pub topology: TopologyKind,
    pub extra_edges: usize,
    pub t_ep: Tick,
    pub delta: Tick,
    pub digest_delay: Option<Tick>,
    pub decide_delay: Option<Tick>,
    pub epochs: u64,
    pub stake: MicroInter,
    pub stream_inter: MicroInter,
    pub policy: ClientPolicy,
}

impl WorldSpec {
    pub fn from_config(cfg: &SimConfig) -> Self {
        let n = &cfg.network;
        let size = n
            .swarm_size
            .unwrap_or_else(|| cfg.security.swarm_size(n.stream_inter, n.watchers));
        Self {
            seed: cfg.seed,
            watchers: n.watchers,
            juniors: n.juniors,
            clients: n.clients,
            swarm_size: size as usize,
            topology: n.topology,
            extra_edges: n.extra_edges,
            t_ep: n.t_ep,
            delta: cfg.gossip.delta_min,
            digest_delay: n.digest_delay,
            decide_delay: n.decide_delay,
            epochs: n.epochs,
            stake: n.node_stake,
            stream_inter: n.stream_inter,
            policy: n.client_policy,
        }
    }

    pub fn node_count(&self) -> u64 {
        self.watchers + self.juniors + self.clients
    }

    pub fn clients(&self) -> impl Iterator<Item = NodeId> {
        let first = self.watchers + self.juniors;
        (first..first + self.clients).map(NodeId)
    }

    pub fn juniors(&self) -> impl Iterator<Item = NodeId> {
        (self.watchers..self.watchers + self.juniors).map(NodeId)
    }

    pub fn role(&self, v: NodeId) -> Role {
        if v.0 < self.watchers {
            Role::Watcher
        } else if v.0 < self.watchers + self.juniors {
            Role::Junior
        } else {
            Role::Client
        }
    }
}

#[derive(Debug)]
enum Body {
    Att(Attestation),
    Digest(GossipDigest),
    Poc(ProofOfCorruption),
}

#[derive(Debug)]
struct Item {
    id: u64,
    epoch: Epoch,
    body: Body,
}

#[derive(Debug)]
enum Event {
    Deliver {
        to: usize,
        from: usize,
        item: Rc<Item>,
        covered: bool,
    },
    Head {
        to: usize,
        hash: Digest,
    },
    Digest {
        node: usize,
    },
    Decide {
        client: usize,
    },
}

#[derive(Debug)]
struct Queued {
    at: Tick,
    seq: u64,
    event: Event,
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.seq) == (other.at, other.seq)
    }
}

impl Eq for Queued {}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Queued {
    // reversed: BinaryHeap pops the earliest event
    fn cmp(&self, other: &Self) -> Ordering {
        (other.at, other.seq).cmp(&(self.at, self.seq))
    }
}

struct NodeState {
    id: NodeId,
    role: Role,
    adversarial: bool,
    keys: KeyPair,
    watcher: WatcherState,
    junior: JuniorState,
    seen: HashSet<u64>,
    atts: Vec<Attestation>,
    digests: Vec<GossipDigest>,
    attested: Option<Digest>,
    tracker: ColourTracker,
    certificate: Option<FinalityCertificate>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CertRecord {
    pub client: NodeId,
    pub epoch: Epoch,
    pub hash: Digest,
    pub members: Vec<NodeId>,
    pub at: Tick,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub client: NodeId,
    pub epoch: Epoch,
    pub at: Tick,
    pub colour: Colour,
    pub accepted: Option<Digest>,
    pub deferred: bool,
}

/// One PoC and how it travelled.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PocRecord {
    pub id: Digest,
    pub node: NodeId,
    pub stream: StreamId,
    pub epoch: Epoch,
    pub discovered_by: NodeId,
    pub discovered_at: Tick,
    /// Nodes that forwarded it, each holding one lottery ticket.
    pub forwarders: BTreeSet<NodeId>,
    pub suppressed_by: BTreeSet<NodeId>,
    pub clients_reached: BTreeSet<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochAudit {
    pub epoch: Epoch,
    pub tick: Tick,
    pub audit: Audit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldOutcome {
    pub seed: u64,
    pub t_ep: Tick,
    pub swarms: Vec<BTreeSet<NodeId>>,
    pub attackers: BTreeSet<NodeId>,
    pub eclipsed: BTreeSet<NodeId>,
    pub timelines: BTreeMap<NodeId, Vec<(Tick, Colour)>>,
    pub certificates: Vec<CertRecord>,
    pub decisions: Vec<Decision>,
    pub pocs: Vec<PocRecord>,
    pub audits: Vec<EpochAudit>,
    pub slashed: BTreeMap<NodeId, MicroInter>,
    pub winnings: BTreeMap<NodeId, MicroInter>,
    /// Epochs in which clients hold certificates for different hashes.
    pub conflicting_epochs: Vec<Epoch>,
    /// Longest Yellow stretch within one epoch, over non-eclipsed clients.
    pub max_yellow_within_epoch: Tick,
    /// Longest Yellow stretch across shuffles, over non-eclipsed clients.
    pub max_yellow: Tick,
    /// Non-eclipsed clients that never saw Green in an epoch whose swarm
    /// held no active equivocator.
    pub honest_epochs_without_green: Vec<(NodeId, Epoch)>,
    /// Every Red stretch ended exactly at the following shuffle.
    pub red_exits_at_shuffle: bool,
    pub deliveries: u64,
    pub duplicates: u64,
}

impl WorldOutcome {
    pub fn audits_ok(&self) -> bool {
        self.audits.iter().all(|a| a.audit.ok())
    }

    pub fn verified_pocs(&self, epoch: Epoch) -> usize {
        self.pocs.iter().filter(|p| p.epoch == epoch).count()
    }

    pub fn certificates_in(&self, epoch: Epoch) -> impl Iterator<Item = &CertRecord> {
        self.certificates.iter().filter(move |c| c.epoch == epoch)
    }

    pub fn ever_red(&self) -> bool {
        self.timelines.values().flatten().any(|(_, c)| *c == Colour::Red)
    }
}

pub struct SimWorld {
    spec: WorldSpec,
    clock: Tick,
    topology: Topology,
    adj: Vec<Vec<usize>>,
    edge: Vec<Vec<bool>>,
    nodes: Vec<NodeState>,
    dir: BTreeMap<NodeId, PublicKey>,
    queue: BinaryHeap<Queued>,
    seq: u64,
    next_item: u64,
    rng: ChaCha8Rng,
    attack: Attack,
    seeds: SeedSchedule,
    state: EpochState,
    in_swarm: Vec<bool>,
    ledger: Ledger,
    heads: Vec<Digest>,
    digest_delay: Tick,
    decide_delay: Tick,
    swarms: Vec<BTreeSet<NodeId>>,
    certificates: Vec<CertRecord>,
    decisions: Vec<Decision>,
    pocs: BTreeMap<Digest, PocRecord>,
    poc_items: BTreeMap<Digest, Rc<Item>>,
    audits: Vec<EpochAudit>,
    slashed: BTreeMap<NodeId, MicroInter>,
    deliveries: u64,
    duplicates: u64,
}

/// Default head for `epoch` when a scenario does not supply one.
pub fn synthetic_head(epoch: Epoch) -> Digest {
    let mut enc = Encoder::tagged("ic/sim-head");
    enc.u64(WATCHED.0).u64(epoch);
    enc.hash()
}

fn build_topology<R: Rng>(spec: &WorldSpec, rng: &mut R) -> Topology {
    let n = spec.node_count();
    match spec.topology {
        TopologyKind::Complete => Topology::complete(n),
        TopologyKind::Ring => Topology::ring(n),
        TopologyKind::Path => Topology::path(n),
        TopologyKind::Random => Topology::random_connected(n, spec.extra_edges, rng),
    }
}

fn duration_ok(topology: &Topology, delta: Tick, t_ep: Tick) -> Result<u64, ConfigError> {
    match check_epoch_duration(topology, delta, t_ep) {
        DurationCheck::Ok { diameter, .. } => Ok(diameter),
        DurationCheck::Violation { bound, diameter } => Err(ConfigError::EpochTooShort {
            t_ep,
            diameter,
            delta_min: delta,
            bound,
        }),
    }
}

impl SimWorld {
    /// Builds the world with every node honest. `heads[e]` is the head the
    /// executor publishes in epoch `e`; the last entry repeats, and an empty
    /// list gives a fresh synthetic head per epoch.
    pub fn new(spec: WorldSpec, heads: Vec<Digest>) -> Result<Self, SimError> {
        if spec.swarm_size == 0 || spec.watchers == 0 {
            return Err(ConfigError::Invalid("the world needs watchers and a non-empty swarm".into()).into());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let topology = build_topology(&spec, &mut rng);
        let diameter = duration_ok(&topology, spec.delta, spec.t_ep)?;
        let d = spec.delta;
        let digest_delay = spec.digest_delay.unwrap_or((4 * diameter + 4) * d);
        let decide_delay = spec
            .decide_delay
            .unwrap_or(digest_delay + (2 * diameter + 2) * d);
        if decide_delay >= spec.t_ep || digest_delay == 0 || digest_delay > decide_delay {
            return Err(ConfigError::Invalid(format!(
                "need 0 < digest_delay ({digest_delay}) <= decide_delay ({decide_delay}) < t_ep ({})",
                spec.t_ep
            ))
            .into());
        }

        let total = spec.stream_inter + spec.stake * spec.watchers;
        let mut ledger = Ledger::new(total, KeyPair::for_node(NodeId(u64::MAX), spec.seed));
        let stream_key = KeyPair::for_node(NodeId(u64::MAX - 1), spec.seed);
        ledger.create_stream(WATCHED, stream_key, Rules::Plain, spec.stream_inter, 0)?;
        let mut nodes = Vec::new();
        let mut dir = BTreeMap::new();
        for i in 0..spec.node_count() {
            let id = NodeId(i);
            let keys = KeyPair::for_node(id, spec.seed);
            dir.insert(id, keys.public.clone());
            let role = spec.role(id);
            if role == Role::Watcher {
                ledger.stake(id, spec.stake, 0)?;
            }
            nodes.push(NodeState {
                id,
                role,
                adversarial: false,
                watcher: WatcherState::new(id, keys.clone()),
                keys,
                junior: JuniorState::new(id),
                seen: HashSet::new(),
                atts: Vec::new(),
                digests: Vec::new(),
                attested: None,
                tracker: ColourTracker::new(0),
                certificate: None,
            });
        }

        let mut seeds = SeedSchedule::new();
        let contributions = randao_contributions(&mut rng, spec.watchers + spec.juniors);
        let seed0 = seeds.complete_round(0, &contributions).seed;
        let n = spec.node_count() as usize;
        let mut world = Self {
            clock: 0,
            adj: Vec::new(),
            edge: Vec::new(),
            topology,
            nodes,
            dir,
            queue: BinaryHeap::new(),
            seq: 0,
            next_item: 0,
            rng,
            attack: Attack::default(),
            seeds,
            state: EpochState {
                epoch: 0,
                seed: seed0,
                t_ep: spec.t_ep,
                assignments: BTreeMap::new(),
            },
            in_swarm: vec![false; n],
            ledger,
            heads,
            digest_delay,
            decide_delay,
            swarms: Vec::new(),
            certificates: Vec::new(),
            decisions: Vec::new(),
            pocs: BTreeMap::new(),
            poc_items: BTreeMap::new(),
            audits: Vec::new(),
            slashed: BTreeMap::new(),
            deliveries: 0,
            duplicates: 0,
            spec,
        };
        world.rebuild_adjacency();
        world.audits.push(EpochAudit {
            epoch: 0,
            tick: 0,
            audit: world.ledger.audit(),
        });
        world.assign(0)?;
        world.schedule_epoch();
        Ok(world)
    }

    /// Installs an adversary, applying its eclipse and cuts to the
    /// topology. Must precede `run`.
    pub fn set_attack(&mut self, attack: Attack) -> Result<(), SimError> {
        for v in attack.watchers.iter().chain(&attack.juniors) {
            if let Some(node) = self.nodes.get_mut(v.0 as usize) {
                node.adversarial = true;
            }
        }
        for &c in &attack.eclipsed {
            for v in 0..self.nodes.len() as u64 {
                if !attack.controls(NodeId(v)) {
                    self.topology.remove_edge(c, NodeId(v));
                }
            }
        }
        for &(a, b) in &attack.cuts {
            self.topology.remove_edge(a, b);
        }
        duration_ok(&self.topology, self.spec.delta, self.spec.t_ep)?;
        self.rebuild_adjacency();
        self.attack = attack;
        Ok(())
    }

    pub fn spec(&self) -> &WorldSpec {
        &self.spec
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn epoch_state(&self) -> &EpochState {
        &self.state
    }

    pub fn swarm(&self) -> &BTreeSet<NodeId> {
        self.state.swarm(WATCHED).expect("the watched stream is always assigned")
    }

    pub fn digest_delay(&self) -> Tick {
        self.digest_delay
    }

    pub fn decide_delay(&self) -> Tick {
        self.decide_delay
    }

    pub fn public_keys(&self) -> &BTreeMap<NodeId, PublicKey> {
        &self.dir
    }

    /// Runs every epoch to completion.
    pub fn run(mut self) -> WorldOutcome {
        for e in 0..self.spec.epochs {
            let end = (e + 1) * self.spec.t_ep;
            while self.queue.peek().is_some_and(|q| q.at < end) {
                let q = self.queue.pop().expect("peeked");
                self.clock = q.at;
                self.dispatch(q.event);
            }
            self.queue.clear();
            self.clock = end;
            self.advance();
        }
        self.outcome()
    }

    fn rebuild_adjacency(&mut self) {
        let n = self.nodes.len();
        self.adj = (0..n)
            .map(|v| {
                self.topology
                    .neighbours(NodeId(v as u64))
                    .iter()
                    .map(|w| w.0 as usize)
                    .collect()
            })
            .collect();
        self.edge = vec![vec![false; n]; n];
        for (v, ws) in self.adj.iter().enumerate() {
            for &w in ws {
                self.edge[v][w] = true;
            }
        }
    }

    fn epoch(&self) -> Epoch {
        self.state.epoch
    }

    fn assign(&mut self, epoch: Epoch) -> Result<(), SimError> {
        let n = self.spec.swarm_size;
        let eligible: BTreeSet<NodeId> = (0..self.spec.watchers)
            .map(NodeId)
            .filter(|&v| {
                !self.ledger.is_convicted(v)
                    && staking_eligible(self.ledger.staked(v), self.spec.stream_inter, n as u64)
            })
            .collect();
        let seed = *self.seeds.seed(epoch)?;
        let assignment = assign_swarm(&seed, WATCHED, n, &eligible)?;
        self.in_swarm.iter_mut().for_each(|b| *b = false);
        for v in &assignment.members {
            self.in_swarm[v.0 as usize] = true;
        }
        self.swarms.push(assignment.members.clone());
        self.state = EpochState {
            epoch,
            seed,
            t_ep: self.spec.t_ep,
            assignments: BTreeMap::from([(WATCHED, assignment)]),
        };
        Ok(())
    }

    fn schedule(&mut self, at: Tick, event: Event) {
        self.seq += 1;
        self.queue.push(Queued {
            at,
            seq: self.seq,
            event,
        });
    }

    fn schedule_epoch(&mut self) {
        let e = self.epoch();
        let start = e * self.spec.t_ep;
        let hash = match self.heads.last() {
            Some(last) => *self.heads.get(e as usize).unwrap_or(last),
            None => synthetic_head(e),
        };
        let members: Vec<usize> = self.swarm().iter().map(|v| v.0 as usize).collect();
        for &m in &members {
            self.schedule(start + self.spec.delta, Event::Head { to: m, hash });
        }
        for &m in &members {
            self.schedule(start + self.digest_delay, Event::Digest { node: m });
        }
        let clients: Vec<usize> = self.spec.clients().map(|c| c.0 as usize).collect();
        for c in clients {
            self.schedule(start + self.decide_delay, Event::Decide { client: c });
        }
    }

    fn new_item(&mut self, body: Body) -> Rc<Item> {
        self.next_item += 1;
        Rc::new(Item {
            id: self.next_item,
            epoch: self.epoch(),
            body,
        })
    }

    fn send(&mut self, from: usize, to: usize, item: Rc<Item>, covered: bool) {
        self.deliveries += 1;
        let at = self.clock + self.spec.delta;
        self.schedule(
            at,
            Event::Deliver {
                to,
                from,
                item,
                covered,
            },
        );
    }

    /// Sends to every neighbour of `from`, skipping those the previous
    /// sender already reached.
    fn broadcast(&mut self, from: usize, item: &Rc<Item>, skip_covered_by: Option<usize>) {
        let targets: Vec<usize> = self.adj[from]
            .iter()
            .copied()
            .filter(|&w| match skip_covered_by {
                Some(s) => w != s && !self.edge[s][w],
                None => true,
            })
            .collect();
        for w in targets {
            self.send(from, w, item.clone(), true);
        }
    }

    fn send_to(&mut self, from: usize, item: &Rc<Item>, targets: &Targets) {
        match targets {
            Targets::All => self.broadcast(from, item, None),
            Targets::Only(set) => {
                for t in set {
                    self.send(from, t.0 as usize, item.clone(), false);
                }
            }
        }
    }

    fn attacking(&self, v: usize) -> bool {
        self.nodes[v].adversarial
            && self.attack.fake_hash.is_some()
            && self.attack.epoch == self.epoch()
            && self.attack.watchers.contains(&self.nodes[v].id)
    }

    fn forwards(&self, v: usize) -> bool {
        !(self.nodes[v].adversarial && self.attack.suppress)
    }

    fn dispatch(&mut self, event: Event) {
        match event {
            Event::Deliver {
                to,
                from,
                item,
                covered,
            } => self.on_deliver(to, from, item, covered),
            Event::Head { to, hash } => self.on_head(to, hash),
            Event::Digest { node } => self.on_digest(node),
            Event::Decide { client } => self.on_decide(client),
        }
    }

    fn on_head(&mut self, v: usize, hash: Digest) {
        let ep = self.epoch();
        if self.attacking(v) {
            let fake = self.attack.fake_hash.expect("attacking implies a fake hash");
            let node = &mut self.nodes[v];
            node.attested = Some(hash);
            let real = make_attestation(&node.keys, node.id, WATCHED, hash, ep);
            let forged = make_attestation(&node.keys, node.id, WATCHED, fake, ep);
            let (real_to, fake_to) = (self.attack.real_to.clone(), self.attack.fake_to.clone());
            let a = self.new_item(Body::Att(real));
            let b = self.new_item(Body::Att(forged));
            self.nodes[v].seen.extend([a.id, b.id]);
            self.send_to(v, &a, &real_to);
            self.send_to(v, &b, &fake_to);
            return;
        }
        let node = &mut self.nodes[v];
        let Ok(att) = node.watcher.attest(WATCHED, hash, ep) else {
            return;
        };
        node.attested = Some(hash);
        node.atts.push(att.clone());
        if !node.adversarial {
            junior_observe(&mut node.junior, &Observation::Attestation(att.clone()), ep, &self.dir);
        }
        let item = self.new_item(Body::Att(att));
        self.nodes[v].seen.insert(item.id);
        self.broadcast(v, &item, None);
    }

    fn on_digest(&mut self, v: usize) {
        let ep = self.epoch();
        let swarm = self.swarm().clone();
        if self.attacking(v) && self.attack.forge_digests {
            let id = self.nodes[v].id;
            let peers: BTreeSet<NodeId> = swarm.iter().copied().filter(|&p| p != id).collect();
            let fake = self.attack.fake_hash.expect("attacking implies a fake hash");
            let real = self.nodes[v].attested.unwrap_or(fake);
            for (hash, targets) in [(real, self.attack.real_to.clone()), (fake, self.attack.fake_to.clone())] {
                let d = GossipDigest::new(&self.nodes[v].keys, id, WATCHED, hash, ep, peers.clone());
                let item = self.new_item(Body::Digest(d));
                self.nodes[v].seen.insert(item.id);
                self.send_to(v, &item, &targets);
            }
            return;
        }
        let node = &self.nodes[v];
        let Some(hash) = node.attested else {
            return;
        };
        // a member that has seen a PoC for the stream signs nothing further
        if !node.adversarial && node.junior.lol.implicated(WATCHED, ep).next().is_some() {
            return;
        }
        let peers: BTreeSet<NodeId> = node
            .atts
            .iter()
            .filter(|a| a.hash == hash && a.node != node.id && swarm.contains(&a.node))
            .map(|a| a.node)
            .collect();
        let d = GossipDigest::new(&node.keys, node.id, WATCHED, hash, ep, peers);
        self.nodes[v].digests.push(d.clone());
        let item = self.new_item(Body::Digest(d));
        self.nodes[v].seen.insert(item.id);
        self.broadcast(v, &item, None);
    }

    fn on_deliver(&mut self, to: usize, from: usize, item: Rc<Item>, covered: bool) {
        if !self.nodes[to].seen.insert(item.id) {
            self.duplicates += 1;
            return;
        }
        let ep = self.epoch();
        if item.epoch != ep {
            return;
        }
        let adversarial = self.nodes[to].adversarial;
        let mut relay = self.forwards(to);
        let mut found = Vec::new();
        match &item.body {
            Body::Att(a) => {
                let node = &mut self.nodes[to];
                node.atts.push(a.clone());
                if !adversarial {
                    found = junior_observe(&mut node.junior, &Observation::Attestation(a.clone()), ep, &self.dir);
                }
            }
            Body::Digest(d) => self.nodes[to].digests.push(d.clone()),
            Body::Poc(p) => {
                if adversarial {
                    if !relay {
                        if let Some(rec) = self.pocs.get_mut(&p.id()) {
                            rec.suppressed_by.insert(self.nodes[to].id);
                        }
                    }
                } else {
                    let fresh = junior_observe(&mut self.nodes[to].junior, &Observation::Poc(p.clone()), ep, &self.dir);
                    if fresh.is_empty() {
                        relay = false;
                    } else {
                        self.learn_poc(to, p);
                    }
                }
            }
        }
        if relay {
            self.broadcast(to, &item, covered.then_some(from));
            if let Body::Poc(p) = &item.body {
                self.ticket(to, p.id());
            }
        }
        for p in found {
            self.discovered(to, p);
        }
        if self.nodes[to].role == Role::Client && !adversarial {
            self.client_check(to);
        }
    }

    fn discovered(&mut self, v: usize, poc: ProofOfCorruption) {
        let id = poc.id();
        let item = match self.poc_items.get(&id) {
            Some(item) => item.clone(),
            None => {
                let item = self.new_item(Body::Poc(poc.clone()));
                self.poc_items.insert(id, item.clone());
                self.pocs.insert(
                    id,
                    PocRecord {
                        id,
                        node: poc.node(),
                        stream: poc.stream(),
                        epoch: poc.epoch(),
                        discovered_by: self.nodes[v].id,
                        discovered_at: self.clock,
                        forwarders: BTreeSet::new(),
                        suppressed_by: BTreeSet::new(),
                        clients_reached: BTreeSet::new(),
                    },
                );
                item
            }
        };
        if !self.nodes[v].seen.insert(item.id) {
            return;
        }
        self.learn_poc(v, &poc);
        self.broadcast(v, &item, None);
        self.ticket(v, id);
    }

    fn learn_poc(&mut self, v: usize, poc: &ProofOfCorruption) {
        let node = &mut self.nodes[v];
        node.watcher.note_poc(poc.stream(), poc.epoch());
        if node.role == Role::Client {
            if let Some(rec) = self.pocs.get_mut(&poc.id()) {
                rec.clients_reached.insert(node.id);
            }
        }
    }

    fn ticket(&mut self, v: usize, poc: Digest) {
        let id = self.nodes[v].id;
        self.ledger.add_ticket(poc, id, self.clock);
        if let Some(rec) = self.pocs.get_mut(&poc) {
            rec.forwarders.insert(id);
        }
    }

    fn client_check(&mut self, c: usize) {
        let ep = self.epoch();
        let swarm = self.swarm().clone();
        let now = self.clock;
        let node = &mut self.nodes[c];
        if node.tracker.current().value == Colour::Red {
            return;
        }
        if red_threshold_check(&node.junior.lol, WATCHED, ep, &swarm) {
            node.tracker.set(Colour::Red, now).expect("Red is reachable from any colour");
            return;
        }
        if node.certificate.is_some()
            || node.junior.lol.implicated(WATCHED, ep).next().is_some()
            || node.digests.len() < supermajority(swarm.len())
        {
            return;
        }
        let out = evaluate_finality(WATCHED, ep, &swarm, &node.atts, &node.digests, &[], &self.dir);
        if let Ok(cert) = out.result {
            node.tracker.set(Colour::Green, now).expect("Yellow to Green");
            self.certificates.push(CertRecord {
                client: node.id,
                epoch: ep,
                hash: cert.hash,
                members: cert.members().into_iter().collect(),
                at: now,
            });
            node.certificate = Some(cert);
        }
    }

    fn on_decide(&mut self, c: usize) {
        let ep = self.epoch();
        let node = &self.nodes[c];
        let colour = node.tracker.current().value;
        let certified = node.certificate.as_ref().map(|x| x.hash);
        let (accepted, deferred) = match (self.spec.policy, colour) {
            (_, Colour::Green) => (certified, false),
            (ClientPolicy::WaitAfterRed, Colour::Red) => (None, true),
            (ClientPolicy::AcceptYellow, Colour::Yellow) => (best_supported(&node.atts, ep), false),
            _ => (None, false),
        };
        self.decisions.push(Decision {
            client: node.id,
            epoch: ep,
            at: self.clock,
            colour,
            accepted,
            deferred,
        });
    }

    /// Shuffle: convict, slash, draw, reseed and reassign.
    fn advance(&mut self) {
        let now = self.clock;
        let ep = self.epoch();
        let next = ep + 1;
        let contributions = randao_contributions(&mut self.rng, self.spec.watchers + self.spec.juniors);
        let seed_next = self.seeds.complete_round(next, &contributions).seed;

        let mut convicting: BTreeMap<NodeId, Vec<Digest>> = BTreeMap::new();
        for rec in self.pocs.values().filter(|r| r.epoch == ep) {
            convicting.entry(rec.node).or_default().push(rec.id);
        }
        for (v, ids) in convicting {
            if !self.ledger.is_convicted(v) {
                let out = self.ledger.slash(v, &ids, now);
                *self.slashed.entry(v).or_insert(0) += out.amount;
            }
        }
        self.ledger.draw_all(&seed_next, now);
        self.audits.push(EpochAudit {
            epoch: ep,
            tick: now,
            audit: self.ledger.audit(),
        });

        for node in &mut self.nodes {
            if node.role == Role::Client {
                node.tracker.shuffle(now);
            }
        }
        if next >= self.spec.epochs {
            return;
        }
        for node in &mut self.nodes {
            node.junior.evict(next);
            node.seen.clear();
            node.atts.clear();
            node.digests.clear();
            node.attested = None;
            node.certificate = None;
        }
        if self.assign(next).is_ok() {
            self.schedule_epoch();
        }
    }

    fn outcome(self) -> WorldOutcome {
        let t_ep = self.spec.t_ep;
        let end = self.spec.epochs * t_ep;
        let mut conflicting_epochs = Vec::new();
        for e in 0..self.spec.epochs {
            let hashes: BTreeSet<Digest> = self
                .certificates
                .iter()
                .filter(|c| c.epoch == e)
                .map(|c| c.hash)
                .collect();
            if hashes.len() > 1 {
                conflicting_epochs.push(e);
            }
        }
        let observers: Vec<&NodeState> = self
            .nodes
            .iter()
            .filter(|n| n.role == Role::Client && !self.attack.eclipsed.contains(&n.id))
            .collect();
        let max_yellow_within_epoch = observers
            .iter()
            .map(|n| n.tracker.max_yellow_within_epoch(end))
            .max()
            .unwrap_or(0);
        let max_yellow = observers.iter().map(|n| n.tracker.max_yellow(end)).max().unwrap_or(0);

        let mut honest_epochs_without_green = Vec::new();
        for (e, swarm) in self.swarms.iter().enumerate() {
            let e = e as Epoch;
            let active_attack = self.attack.fake_hash.is_some()
                && self.attack.epoch == e
                && swarm.iter().any(|v| self.attack.watchers.contains(v));
            if active_attack {
                continue;
            }
            for n in &observers {
                if !self.certificates.iter().any(|c| c.epoch == e && c.client == n.id) {
                    honest_epochs_without_green.push((n.id, e));
                }
            }
        }

        let mut red_exits_at_shuffle = true;
        let mut timelines = BTreeMap::new();
        for n in self.nodes.iter().filter(|n| n.role == Role::Client) {
            let tl = n.tracker.timeline().to_vec();
            for w in tl.windows(2) {
                if w[0].1 == Colour::Red && (w[1].1 != Colour::Yellow || w[1].0 != (w[0].0 / t_ep + 1) * t_ep) {
                    red_exits_at_shuffle = false;
                }
            }
            timelines.insert(n.id, tl);
        }
        let winnings = self
            .nodes
            .iter()
            .map(|n| (n.id, self.ledger.winnings(n.id)))
            .filter(|(_, w)| *w > 0)
            .collect();
        WorldOutcome {
            seed: self.spec.seed,
            t_ep,
            swarms: self.swarms,
            attackers: self.attack.watchers.union(&self.attack.juniors).copied().collect(),
            eclipsed: self.attack.eclipsed,
            timelines,
            certificates: self.certificates,
            decisions: self.decisions,
            pocs: self.pocs.into_values().collect(),
            audits: self.audits,
            slashed: self.slashed,
            winnings,
            conflicting_epochs,
            max_yellow_within_epoch,
            max_yellow,
            honest_epochs_without_green,
            red_exits_at_shuffle,
            deliveries: self.deliveries,
            duplicates: self.duplicates,
        }
    }
}

fn randao_contributions<R: Rng>(rng: &mut R, count: u64) -> Vec<Contribution> {
    (0..count)
        .map(|i| Contribution::honest(NodeId(i), rng.gen::<[u8; 32]>().to_vec()))
        .collect()
}

fn best_supported(atts: &[Attestation], epoch: Epoch) -> Option<Digest> {
    let mut support: BTreeMap<Digest, BTreeSet<NodeId>> = BTreeMap::new();
    for a in atts.iter().filter(|a| a.epoch == epoch && a.stream == WATCHED) {
        support.entry(a.hash).or_default().insert(a.node);
    }
    support
        .into_iter()
        .max_by(|x, y| x.1.len().cmp(&y.1.len()).then_with(|| y.0.cmp(&x.0)))
        .map(|(h, _)| h)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(watchers: u64, juniors: u64, clients: u64, n: usize) -> WorldSpec {
        WorldSpec {
            seed: 5,
            watchers,
            juniors,
            clients,
            swarm_size: n,
            topology: TopologyKind::Complete,
            extra_edges: 0,
            t_ep: 100,
            delta: 1,
            digest_delay: None,
            decide_delay: None,
            epochs: 2,
            stake: 1_000_000,
            stream_inter: 1_000_000,
            policy: ClientPolicy::RequireGreen,
        }
    }

    #[test]
    fn honest_world_goes_green_every_epoch() {
        let w = SimWorld::new(spec(35, 10, 2, 35), vec![]).unwrap();
        assert_eq!(w.swarm().len(), 35);
        assert!(w.ledger().audit().ok());
        let out = w.run();
        assert_eq!(out.certificates.len(), 4);
        assert!(out.conflicting_epochs.is_empty());
        assert!(out.honest_epochs_without_green.is_empty());
        assert!(out.max_yellow_within_epoch < 100);
        assert!(out.audits_ok());
        assert!(out.pocs.is_empty());
    }

    #[test]
    fn short_epoch_is_rejected_with_the_bound() {
        let mut s = spec(8, 0, 2, 8);
        s.topology = TopologyKind::Path;
        s.t_ep = 9;
        match SimWorld::new(s, vec![]) {
            Err(SimError::Config(ConfigError::EpochTooShort { diameter, bound, .. })) => {
                assert_eq!((diameter, bound), (9, 9));
            }
            other => panic!("{:?}", other.err()),
        }
    }

    #[test]
    fn single_equivocator_is_caught_and_slashed() {
        let mut w = SimWorld::new(spec(40, 10, 2, 35), vec![]).unwrap();
        let liar = *w.swarm().iter().next().unwrap();
        w.set_attack(Attack {
            watchers: BTreeSet::from([liar]),
            fake_hash: Some(synthetic_head(99)),
            suppress: true,
            ..Attack::default()
        })
        .unwrap();
        let out = w.run();
        assert_eq!(out.verified_pocs(0), 1);
        assert_eq!(out.slashed.get(&liar), Some(&1_000_000));
        assert!(!out.ever_red());
        assert!(out.certificates.iter().all(|c| !c.members.contains(&liar)));
        assert!(!out.swarms[1].contains(&liar));
        assert_eq!(out.winnings.get(&liar), None);
        assert!(out.winnings.values().sum::<u64>() == 1_000_000);
        assert!(out.audits_ok());
    }

    #[test]
    fn identical_seeds_give_identical_outcomes() {
        let a = SimWorld::new(spec(35, 5, 2, 35), vec![]).unwrap().run();
        let b = SimWorld::new(spec(35, 5, 2, 35), vec![]).unwrap().run();
        assert_eq!(a, b);
    }
}
