//! Attestations, Proofs of Corruption, finality and stream colour.
//!
//! A watcher's attestation claims that it has seen exactly one hash for a
//! stream this epoch and no Proof of Corruption (PoC). Two attestations from
//! one signer for the same stream and epoch with different hashes form a PoC,
//! which anyone can check with the signer's public key alone.
//!
//! Finality needs a supermajority of supermajorities: at least
//! `M1 = ⌈2n/3⌉` swarm members attest the same hash, each of them reports
//! (in a signed gossip digest) at least `M1` *other* members' own
//! attestations for it, and no PoC for the stream and epoch is known.
//!
//! ```
//! use intercloud::consensus::{supermajority, is_red_count};
//! assert_eq!(supermajority(35), 24);
//! assert!(!is_red_count(23, 35));
//! assert!(is_red_count(24, 35));
//! ```

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{
    self, CryptoError, Decoder, Digest, Encoder, KeyDirectory, KeyPair, NodeId, Signature,
};
use crate::units::{Epoch, StreamId, Tick};

/// `⌈2n/3⌉`, the finality threshold.
pub fn supermajority(n: usize) -> usize {
    (2 * n).div_ceil(3)
}

/// Red iff strictly more than two thirds of the swarm is implicated.
pub fn is_red_count(count: usize, n: usize) -> bool {
    3 * count > 2 * n
}

/// Lower bound on the overlap of two supermajority quorums in a swarm of `n`.
pub fn min_quorum_intersection(n: usize) -> usize {
    (2 * supermajority(n)).saturating_sub(n)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Attestation {
    pub node: NodeId,
    pub stream: StreamId,
    pub hash: Digest,
    pub epoch: Epoch,
    pub sig: Signature,
}

impl Attestation {
    fn signing_bytes(node: NodeId, stream: StreamId, hash: &Digest, epoch: Epoch) -> Vec<u8> {
        let mut enc = Encoder::tagged("ic/attest");
        enc.u64(node.0).u64(stream.0).digest(hash).u64(epoch);
        enc.finish()
    }

    pub fn verify<D: KeyDirectory + ?Sized>(&self, dir: &D) -> bool {
        let Some(pk) = dir.public_key(self.node) else {
            return false;
        };
        let body = Self::signing_bytes(self.node, self.stream, &self.hash, self.epoch);
        crypto::verify(pk, &body, &self.sig).unwrap_or(false)
    }

    /// Same signer, stream and epoch; different hash.
    pub fn conflicts_with(&self, other: &Attestation) -> bool {
        self.node == other.node
            && self.stream == other.stream
            && self.epoch == other.epoch
            && self.hash != other.hash
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut enc = Encoder::tagged("ic/att");
        enc.u64(self.node.0)
            .u64(self.stream.0)
            .digest(&self.hash)
            .u64(self.epoch)
            .bytes(self.sig.as_bytes());
        enc.finish()
    }

    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, CryptoError> {
        dec.expect_tag("ic/att")?;
        Ok(Self {
            node: NodeId(dec.u64()?),
            stream: StreamId(dec.u64()?),
            hash: dec.digest()?,
            epoch: dec.u64()?,
            sig: Signature(dec.bytes()?.to_vec()),
        })
    }

    pub fn decode(buf: &[u8]) -> Result<Self, CryptoError> {
        let mut dec = Decoder::new(buf);
        let a = Self::decode_from(&mut dec)?;
        dec.finish()?;
        Ok(a)
    }
}

/// Signs an attestation unconditionally. Honest nodes go through
/// [`WatcherState::attest`], which enforces the single-hash claim.
pub fn make_attestation(
    keys: &KeyPair,
    node: NodeId,
    stream: StreamId,
    hash: Digest,
    epoch: Epoch,
) -> Attestation {
    let sig = keys.sign(&Attestation::signing_bytes(node, stream, &hash, epoch));
    Attestation {
        node,
        stream,
        hash,
        epoch,
        sig,
    }
}

/// A pair of conflicting attestations, stored with `a1.hash < a2.hash`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ProofOfCorruption {
    pub a1: Attestation,
    pub a2: Attestation,
}

impl ProofOfCorruption {
    /// Builds the structure without checking it. Use [`detect_conflict`] for
    /// checked construction.
    pub fn from_pair(a: Attestation, b: Attestation) -> Self {
        if a.hash <= b.hash {
            Self { a1: a, a2: b }
        } else {
            Self { a1: b, a2: a }
        }
    }

    pub fn node(&self) -> NodeId {
        self.a1.node
    }

    pub fn stream(&self) -> StreamId {
        self.a1.stream
    }

    pub fn epoch(&self) -> Epoch {
        self.a1.epoch
    }

    pub fn id(&self) -> Digest {
        crypto::hash(&self.encode())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut enc = Encoder::tagged("ic/poc");
        enc.bytes(&self.a1.encode()).bytes(&self.a2.encode());
        enc.finish()
    }

    pub fn decode(buf: &[u8]) -> Result<Self, CryptoError> {
        let mut dec = Decoder::new(buf);
        dec.expect_tag("ic/poc")?;
        let a1 = Attestation::decode(dec.bytes()?)?;
        let a2 = Attestation::decode(dec.bytes()?)?;
        dec.finish()?;
        Ok(Self { a1, a2 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PocCheck {
    Valid,
    UnknownSigner,
    BadSignature,
    NotConflicting,
}

/// Full verdict on a PoC. Needs nothing but the signer's public key.
pub fn check_poc<D: KeyDirectory + ?Sized>(poc: &ProofOfCorruption, dir: &D) -> PocCheck {
    if !poc.a1.conflicts_with(&poc.a2) {
        return PocCheck::NotConflicting;
    }
    if dir.public_key(poc.node()).is_none() {
        return PocCheck::UnknownSigner;
    }
    if !poc.a1.verify(dir) || !poc.a2.verify(dir) {
        return PocCheck::BadSignature;
    }
    PocCheck::Valid
}

pub fn verify_poc<D: KeyDirectory + ?Sized>(poc: &ProofOfCorruption, dir: &D) -> bool {
    check_poc(poc, dir) == PocCheck::Valid
}

/// A PoC iff the two attestations conflict and both signatures verify.
pub fn detect_conflict<D: KeyDirectory + ?Sized>(
    a1: &Attestation,
    a2: &Attestation,
    dir: &D,
) -> Option<ProofOfCorruption> {
    let poc = ProofOfCorruption::from_pair(a1.clone(), a2.clone());
    verify_poc(&poc, dir).then_some(poc)
}

/// A member's signed report of which peers' own attestations it has received.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GossipDigest {
    pub node: NodeId,
    pub stream: StreamId,
    pub hash: Digest,
    pub epoch: Epoch,
    pub attested_peers: BTreeSet<NodeId>,
    pub sig: Signature,
}

impl GossipDigest {
    fn signing_bytes(
        node: NodeId,
        stream: StreamId,
        hash: &Digest,
        epoch: Epoch,
        peers: &BTreeSet<NodeId>,
    ) -> Vec<u8> {
        let mut enc = Encoder::tagged("ic/digest");
        enc.u64(node.0)
            .u64(stream.0)
            .digest(hash)
            .u64(epoch)
            .count(peers.len());
        for p in peers {
            enc.u64(p.0);
        }
        enc.finish()
    }

    pub fn new(
        keys: &KeyPair,
        node: NodeId,
        stream: StreamId,
        hash: Digest,
        epoch: Epoch,
        attested_peers: BTreeSet<NodeId>,
    ) -> Self {
        let sig = keys.sign(&Self::signing_bytes(node, stream, &hash, epoch, &attested_peers));
        Self {
            node,
            stream,
            hash,
            epoch,
            attested_peers,
            sig,
        }
    }

    pub fn verify<D: KeyDirectory + ?Sized>(&self, dir: &D) -> bool {
        let Some(pk) = dir.public_key(self.node) else {
            return false;
        };
        let body = Self::signing_bytes(
            self.node,
            self.stream,
            &self.hash,
            self.epoch,
            &self.attested_peers,
        );
        crypto::verify(pk, &body, &self.sig).unwrap_or(false)
    }

    /// Peers counted for condition (ii): swarm members other than the author.
    pub fn peer_count(&self, swarm: &BTreeSet<NodeId>) -> usize {
        self.attested_peers
            .iter()
            .filter(|p| **p != self.node && swarm.contains(p))
            .count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinalityCertificate {
    pub stream: StreamId,
    pub hash: Digest,
    pub epoch: Epoch,
    pub attestations: Vec<Attestation>,
    pub digests: Vec<GossipDigest>,
}

impl FinalityCertificate {
    pub fn members(&self) -> BTreeSet<NodeId> {
        self.attestations.iter().map(|a| a.node).collect()
    }

    /// Re-checks the certificate from scratch against the swarm and the
    /// verifier's own PoC knowledge.
    pub fn verify<D: KeyDirectory + ?Sized>(
        &self,
        swarm: &BTreeSet<NodeId>,
        known_pocs: &[ProofOfCorruption],
        dir: &D,
    ) -> Result<(), NotFinal> {
        let out = evaluate_finality(
            self.stream,
            self.epoch,
            swarm,
            &self.attestations,
            &self.digests,
            known_pocs,
            dir,
        );
        match out.result {
            Ok(c) if c.hash == self.hash => Ok(()),
            Ok(_) => Err(NotFinal::ConditionI),
            Err(e) => Err(e),
        }
    }
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NotFinal {
    #[error("fewer than ⌈2n/3⌉ members attested one hash")]
    ConditionI,
    #[error("fewer than ⌈2n/3⌉ attesters showed ⌈2n/3⌉ peer attestations")]
    ConditionII,
    #[error("a Proof of Corruption for this stream and epoch is known")]
    ConditionIII,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinalityDiagnostics {
    pub non_swarm_ignored: usize,
    pub bad_signatures: usize,
    pub off_target: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FinalityOutcome {
    pub result: Result<FinalityCertificate, NotFinal>,
    pub diagnostics: FinalityDiagnostics,
    /// Conflicts found among the received attestations themselves.
    pub discovered_pocs: Vec<ProofOfCorruption>,
}

/// Decides finality for `(stream, epoch)` from what one observer holds.
///
/// Conditions are checked in order and the first unmet one is reported.
/// Condition (iii) fails on any verified PoC for the stream and epoch, either
/// supplied in `known_pocs` or formed from the received attestations.
pub fn evaluate_finality<D: KeyDirectory + ?Sized>(
    stream: StreamId,
    epoch: Epoch,
    swarm: &BTreeSet<NodeId>,
    attestations: &[Attestation],
    digests: &[GossipDigest],
    known_pocs: &[ProofOfCorruption],
    dir: &D,
) -> FinalityOutcome {
    let m1 = supermajority(swarm.len());
    let mut diag = FinalityDiagnostics::default();
    let mut by_node: BTreeMap<NodeId, Vec<&Attestation>> = BTreeMap::new();
    for a in attestations {
        if a.stream != stream || a.epoch != epoch {
            diag.off_target += 1;
        } else if !swarm.contains(&a.node) {
            diag.non_swarm_ignored += 1;
        } else if !a.verify(dir) {
            diag.bad_signatures += 1;
        } else {
            let seen = by_node.entry(a.node).or_default();
            if !seen.iter().any(|s| s.hash == a.hash) {
                seen.push(a);
            }
        }
    }

    let mut discovered = Vec::new();
    let mut by_hash: BTreeMap<Digest, Vec<&Attestation>> = BTreeMap::new();
    for atts in by_node.values() {
        if atts.len() > 1 {
            discovered.push(ProofOfCorruption::from_pair(atts[0].clone(), atts[1].clone()));
        }
        for a in atts {
            by_hash.entry(a.hash).or_default().push(a);
        }
    }

    let finish = |result| FinalityOutcome {
        result,
        diagnostics: diag.clone(),
        discovered_pocs: discovered.clone(),
    };

    // largest support wins; ties go to the smaller hash
    let best = by_hash
        .iter()
        .max_by(|x, y| x.1.len().cmp(&y.1.len()).then_with(|| y.0.cmp(x.0)));
    let Some((&hash, support)) = best else {
        return finish(Err(NotFinal::ConditionI));
    };
    if swarm.is_empty() || support.len() < m1 {
        return finish(Err(NotFinal::ConditionI));
    }

    let mut qualified = Vec::new();
    let mut used_digests = Vec::new();
    for a in support {
        let digest = digests.iter().find(|d| {
            d.node == a.node
                && d.stream == stream
                && d.epoch == epoch
                && d.hash == hash
                && d.peer_count(swarm) >= m1
                && d.verify(dir)
        });
        if let Some(d) = digest {
            qualified.push((*a).clone());
            used_digests.push(d.clone());
        }
    }
    if qualified.len() < m1 {
        return finish(Err(NotFinal::ConditionII));
    }

    let implicated = known_pocs
        .iter()
        .any(|p| p.stream() == stream && p.epoch() == epoch && verify_poc(p, dir));
    if implicated || !discovered.is_empty() {
        return finish(Err(NotFinal::ConditionIII));
    }

    finish(Ok(FinalityCertificate {
        stream,
        hash,
        epoch,
        attestations: qualified,
        digests: used_digests,
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Colour {
    Green,
    Yellow,
    Red,
}

impl Colour {
    pub fn name(self) -> &'static str {
        match self {
            Colour::Green => "green",
            Colour::Yellow => "yellow",
            Colour::Red => "red",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamColour {
    pub value: Colour,
    pub since: Tick,
}

/// Red overrides everything; otherwise Green with a matching certificate,
/// else Yellow. Every assigned member counts as active.
pub fn colour_of(
    stream: StreamId,
    epoch: Epoch,
    certificate: Option<&FinalityCertificate>,
    lol: &ListOfLiars,
    swarm: &BTreeSet<NodeId>,
) -> Colour {
    if red_threshold_check(lol, stream, epoch, swarm) {
        Colour::Red
    } else if certificate.is_some_and(|c| c.stream == stream && c.epoch == epoch) {
        Colour::Green
    } else {
        Colour::Yellow
    }
}

pub fn red_threshold_check(
    lol: &ListOfLiars,
    stream: StreamId,
    epoch: Epoch,
    swarm: &BTreeSet<NodeId>,
) -> bool {
    let count = lol
        .implicated(stream, epoch)
        .filter(|n| swarm.contains(n))
        .count();
    !swarm.is_empty() && is_red_count(count, swarm.len())
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("colour transition {from:?} -> {to:?} is not allowed within an epoch")]
pub struct ColourError {
    pub from: Colour,
    pub to: Colour,
}

/// One stream's colour with its full timeline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColourTracker {
    current: StreamColour,
    timeline: Vec<(Tick, Colour)>,
}

impl ColourTracker {
    pub fn new(now: Tick) -> Self {
        Self {
            current: StreamColour {
                value: Colour::Yellow,
                since: now,
            },
            timeline: vec![(now, Colour::Yellow)],
        }
    }

    pub fn current(&self) -> StreamColour {
        self.current
    }

    pub fn timeline(&self) -> &[(Tick, Colour)] {
        &self.timeline
    }

    /// Moves within an epoch: Yellow→Green, Yellow→Red, Green→Red only.
    pub fn set(&mut self, to: Colour, now: Tick) -> Result<(), ColourError> {
        use Colour::*;
        let from = self.current.value;
        if from == to {
            return Ok(());
        }
        match (from, to) {
            (Yellow, Green) | (Yellow, Red) | (Green, Red) => {
                self.push(to, now);
                Ok(())
            }
            _ => Err(ColourError { from, to }),
        }
    }

    /// Epoch shuffle: a fresh swarm has to attest again. Always recorded,
    /// even when already Yellow, so per-epoch stretches stay visible.
    pub fn shuffle(&mut self, now: Tick) {
        self.push(Colour::Yellow, now);
    }

    fn push(&mut self, value: Colour, now: Tick) {
        self.current = StreamColour { value, since: now };
        self.timeline.push((now, value));
    }

    /// Longest continuous Yellow stretch, with the last one closed at `end`.
    /// Stretches continue across shuffles.
    pub fn max_yellow(&self, end: Tick) -> Tick {
        self.longest_yellow(end, false)
    }

    /// Longest Yellow stretch inside a single epoch.
    pub fn max_yellow_within_epoch(&self, end: Tick) -> Tick {
        self.longest_yellow(end, true)
    }

    fn longest_yellow(&self, end: Tick, split_at_shuffle: bool) -> Tick {
        let mut best = 0;
        let mut start = None;
        for &(t, c) in &self.timeline {
            match (c, start) {
                (Colour::Yellow, None) => start = Some(t),
                (Colour::Yellow, Some(s)) => {
                    if split_at_shuffle {
                        best = best.max(t - s);
                        start = Some(t);
                    }
                }
                (_, Some(s)) => {
                    best = best.max(t - s);
                    start = None;
                }
                (_, None) => {}
            }
        }
        if let Some(s) = start {
            best = best.max(end.saturating_sub(s));
        }
        best
    }
}

/// Verified PoCs held for the current and previous epoch.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ListOfLiars {
    entries: BTreeMap<Digest, (ProofOfCorruption, Epoch)>,
    implicated: BTreeMap<(StreamId, Epoch), BTreeSet<NodeId>>,
}

impl ListOfLiars {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stores a PoC the caller has verified. Returns false for duplicates.
    pub fn insert(&mut self, poc: ProofOfCorruption, seen_at: Epoch) -> bool {
        let id = poc.id();
        if self.entries.contains_key(&id) {
            return false;
        }
        self.implicated
            .entry((poc.stream(), poc.epoch()))
            .or_default()
            .insert(poc.node());
        self.entries.insert(id, (poc, seen_at));
        true
    }

    pub fn contains(&self, id: &Digest) -> bool {
        self.entries.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn implicated(&self, stream: StreamId, epoch: Epoch) -> impl Iterator<Item = NodeId> + '_ {
        self.implicated
            .get(&(stream, epoch))
            .into_iter()
            .flat_map(|s| s.iter().copied())
    }

    pub fn is_implicated(&self, node: NodeId) -> bool {
        self.implicated.values().any(|s| s.contains(&node))
    }

    pub fn pocs(&self) -> impl Iterator<Item = &ProofOfCorruption> {
        self.entries.values().map(|(p, _)| p)
    }

    pub fn pocs_for(&self, stream: StreamId, epoch: Epoch) -> Vec<ProofOfCorruption> {
        self.pocs()
            .filter(|p| p.stream() == stream && p.epoch() == epoch)
            .cloned()
            .collect()
    }

    /// Drops PoCs about epochs older than `current − 1`.
    pub fn evict(&mut self, current: Epoch) {
        let floor = current.saturating_sub(1);
        self.entries.retain(|_, (p, _)| p.epoch() >= floor);
        self.implicated.retain(|(_, ep), _| *ep >= floor);
    }
}

/// Honest watcher bookkeeping: attest the first hash only, and never after a
/// PoC for the stream and epoch has been seen.
#[derive(Debug, Clone)]
pub struct WatcherState {
    pub node: NodeId,
    keys: KeyPair,
    attested: BTreeMap<(StreamId, Epoch), Digest>,
    poc_seen: BTreeSet<(StreamId, Epoch)>,
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum Refusal {
    #[error("already attested a different hash this epoch")]
    AlreadyAttested,
    #[error("a Proof of Corruption for this stream is known")]
    PocSeen,
}

impl WatcherState {
    pub fn new(node: NodeId, keys: KeyPair) -> Self {
        Self {
            node,
            keys,
            attested: BTreeMap::new(),
            poc_seen: BTreeSet::new(),
        }
    }

    pub fn attest(
        &mut self,
        stream: StreamId,
        hash: Digest,
        epoch: Epoch,
    ) -> Result<Attestation, Refusal> {
        if self.poc_seen.contains(&(stream, epoch)) {
            return Err(Refusal::PocSeen);
        }
        match self.attested.get(&(stream, epoch)) {
            Some(h) if *h != hash => return Err(Refusal::AlreadyAttested),
            _ => {}
        }
        self.attested.insert((stream, epoch), hash);
        Ok(make_attestation(&self.keys, self.node, stream, hash, epoch))
    }

    pub fn note_poc(&mut self, stream: StreamId, epoch: Epoch) {
        self.poc_seen.insert((stream, epoch));
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Observation {
    Attestation(Attestation),
    Digest(GossipDigest),
    Poc(ProofOfCorruption),
}

/// A junior observer: watches gossip, keeps the List of Liars.
#[derive(Debug, Clone)]
pub struct JuniorState {
    pub node: NodeId,
    pub lol: ListOfLiars,
    first_seen: BTreeMap<(NodeId, StreamId, Epoch), Attestation>,
    forwarded: BTreeSet<(Digest, Epoch)>,
    pub dropped: usize,
}

impl JuniorState {
    pub fn new(node: NodeId) -> Self {
        Self {
            node,
            lol: ListOfLiars::new(),
            first_seen: BTreeMap::new(),
            forwarded: BTreeSet::new(),
            dropped: 0,
        }
    }

    pub fn has_forwarded(&self, id: &Digest, epoch: Epoch) -> bool {
        self.forwarded.contains(&(*id, epoch))
    }

    pub fn evict(&mut self, current: Epoch) {
        let floor = current.saturating_sub(1);
        self.lol.evict(current);
        self.first_seen.retain(|(_, _, ep), _| *ep >= floor);
        self.forwarded.retain(|(_, ep)| *ep >= floor);
    }
}

/// Processes one observation. Returns the PoCs to broadcast; each PoC goes
/// out at most once per epoch from a given junior.
pub fn junior_observe<D: KeyDirectory + ?Sized>(
    state: &mut JuniorState,
    incoming: &Observation,
    current: Epoch,
    dir: &D,
) -> Vec<ProofOfCorruption> {
    let poc = match incoming {
        Observation::Digest(_) => return Vec::new(),
        Observation::Attestation(a) => {
            if !a.verify(dir) {
                state.dropped += 1;
                return Vec::new();
            }
            let key = (a.node, a.stream, a.epoch);
            match state.first_seen.get(&key) {
                None => {
                    state.first_seen.insert(key, a.clone());
                    return Vec::new();
                }
                Some(prev) => match detect_conflict(prev, a, dir) {
                    Some(p) => p,
                    None => return Vec::new(),
                },
            }
        }
        Observation::Poc(p) => {
            if !verify_poc(p, dir) {
                state.dropped += 1;
                return Vec::new();
            }
            p.clone()
        }
    };
    state.lol.insert(poc.clone(), current);
    if state.forwarded.insert((poc.id(), current)) {
        vec![poc]
    } else {
        Vec::new()
    }
}
