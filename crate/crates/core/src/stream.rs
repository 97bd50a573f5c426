//! Append-only streams, economic relations and transfers.
//!
//! A stream's log is a hash chain: every message records the digest of its
//! predecessor, the genesis message records [`empty_digest`]. Coin transfers
//! flow only through relations created beforehand, and every transfer moves
//! exactly `Δ = a · exRate(c)` micro-INTER of security weight along with the
//! coins, so the sum of weights is unchanged.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{self, empty_digest, Digest, Encoder, KeyPair, PublicKey, Signature};
use crate::units::{CoinId, Epoch, ExchangeRate, MicroInter, RateError, StreamId, Tick};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    Content,
    Transfer,
    Emit,
    Retire,
    ReserveAdjust,
    Relate,
    Unrelate,
}

impl MessageKind {
    fn code(self) -> u8 {
        match self {
            MessageKind::Content => 0,
            MessageKind::Transfer => 1,
            MessageKind::Emit => 2,
            MessageKind::Retire => 3,
            MessageKind::ReserveAdjust => 4,
            MessageKind::Relate => 5,
            MessageKind::Unrelate => 6,
        }
    }

    /// Coin-layer messages change balances, weight or rates; everything else
    /// is content.
    pub fn is_coin_layer(self) -> bool {
        !matches!(self, MessageKind::Content)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub prev: Digest,
    #[serde(with = "hex")]
    pub payload: Vec<u8>,
    pub lamport_ts: u64,
    pub kind: MessageKind,
    pub author: PublicKey,
    pub author_sig: Signature,
}

impl Message {
    fn signing_bytes(
        stream: StreamId,
        prev: &Digest,
        kind: MessageKind,
        ts: u64,
        payload: &[u8],
    ) -> Vec<u8> {
        let mut enc = Encoder::tagged("ic/msg-body");
        enc.u64(stream.0)
            .digest(prev)
            .u8(kind.code())
            .u64(ts)
            .bytes(payload);
        enc.finish()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut enc = Encoder::tagged("ic/msg");
        enc.digest(&self.prev)
            .u8(self.kind.code())
            .u64(self.lamport_ts)
            .bytes(&self.payload)
            .bytes(self.author.as_bytes())
            .bytes(self.author_sig.as_bytes());
        enc.finish()
    }

    pub fn digest(&self) -> Digest {
        crypto::hash(&self.encode())
    }
}

/// The enumerated behaviours a stream's rules may take.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Rules {
    Plain,
    SimpleCoin { owner: PublicKey },
    Currency { allow_emit: bool, allow_retire: bool },
}

impl Rules {
    pub fn digest(&self) -> Digest {
        let mut enc = Encoder::tagged("ic/rules");
        match self {
            Rules::Plain => {
                enc.u8(0);
            }
            Rules::SimpleCoin { owner } => {
                enc.u8(1).bytes(owner.as_bytes());
            }
            Rules::Currency {
                allow_emit,
                allow_retire,
            } => {
                enc.u8(2).u8(*allow_emit as u8).u8(*allow_retire as u8);
            }
        }
        enc.hash()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StreamError {
    #[error("signer is neither the owner nor an authorised executor of {0}")]
    AuthError(StreamId),
    #[error("message does not extend the head of {0}; committed history is immutable")]
    AppendOnlyViolation(StreamId),
    #[error("relation {from} -> {to} already exists")]
    DuplicateRelation { from: StreamId, to: StreamId },
    #[error("relation endpoints must be distinct streams")]
    SelfRelation,
    #[error("hash chain broken at index {0}")]
    BrokenChain(usize),
    #[error("rate-limit table must have strictly increasing windows and non-decreasing caps")]
    BadRateLimit,
}

/// Maximum outflow as a function of window length, in micro-INTER.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RateLimit {
    /// `floor(cap · window / period)`.
    Linear { cap: MicroInter, period: Tick },
    /// Piecewise-linear through `(0, 0)` and the listed points, flat after
    /// the last one.
    Table { points: Vec<(Tick, MicroInter)> },
    Unlimited,
}

impl RateLimit {
    pub fn linear(cap: MicroInter, period: Tick) -> Self {
        RateLimit::Linear { cap, period }
    }

    pub fn table(points: Vec<(Tick, MicroInter)>) -> Result<Self, StreamError> {
        let ok = !points.is_empty()
            && points[0].0 > 0
            && points
                .windows(2)
                .all(|w| w[0].0 < w[1].0 && w[0].1 <= w[1].1);
        if !ok {
            return Err(StreamError::BadRateLimit);
        }
        Ok(RateLimit::Table { points })
    }

    pub fn allowance(&self, window: Tick) -> MicroInter {
        match self {
            RateLimit::Unlimited => MicroInter::MAX,
            RateLimit::Linear { cap, period } => {
                let v = *cap as u128 * window as u128 / (*period).max(1) as u128;
                v.min(MicroInter::MAX as u128) as MicroInter
            }
            RateLimit::Table { points } => {
                let mut prev = (0u64, 0u64);
                for &(w, c) in points {
                    if window <= w {
                        let span = (w - prev.0) as u128;
                        let rise = (c - prev.1) as u128;
                        let into = (window - prev.0) as u128;
                        return prev.1 + (rise * into / span) as u64;
                    }
                    prev = (w, c);
                }
                prev.1
            }
        }
    }
}

/// Timestamped outflows checked against a [`RateLimit`] over every window.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutflowWindow {
    history: Vec<(Tick, MicroInter)>,
}

impl OutflowWindow {
    /// Sliding-window admission: with the new outflow `num / den` included,
    /// every half-open window `(now − W, now]` must carry at most `limit(W)`.
    pub fn admits(&self, limit: &RateLimit, now: Tick, num: u128, den: u128) -> bool {
        let cap = |w: Tick| limit.allowance(w) as u128 * den;
        let mut acc = num;
        if acc > cap(1) {
            return false;
        }
        for &(t, d) in self.history.iter().rev() {
            if t > now {
                continue;
            }
            acc += d as u128 * den;
            if acc > cap(now - t + 1) {
                return false;
            }
        }
        true
    }

    pub fn record(&mut self, now: Tick, amount: MicroInter) {
        self.history.push((now, amount));
    }

    pub fn history(&self) -> &[(Tick, MicroInter)] {
        &self.history
    }
}

/// A pre-established channel from one stream to another.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relation {
    pub from: StreamId,
    pub to: StreamId,
    pub rate_limit: RateLimit,
    pub permitted_coins: BTreeSet<CoinId>,
    pub created_at: Tick,
    pub last_transfer_ts: Option<Tick>,
    window: OutflowWindow,
}

impl Relation {
    fn admits(&self, now: Tick, num: u128, den: u128) -> bool {
        self.window.admits(&self.rate_limit, now, num, den)
    }

    fn record(&mut self, now: Tick, delta: MicroInter) {
        self.last_transfer_ts = Some(now);
        self.window.record(now, delta);
    }

    /// `(time, Δ)` for every transfer that used this relation.
    pub fn history(&self) -> &[(Tick, MicroInter)] {
        self.window.history()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferRequest {
    pub from: StreamId,
    pub to: StreamId,
    pub coin: CoinId,
    pub amount: u64,
    pub lamport_ts: u64,
    pub nonce: Digest,
}

impl TransferRequest {
    pub fn new(from: StreamId, to: StreamId, coin: CoinId, amount: u64, lamport_ts: u64) -> Self {
        let mut enc = Encoder::tagged("ic/nonce");
        enc.u64(from.0)
            .u64(to.0)
            .u64(coin.0)
            .u64(amount)
            .u64(lamport_ts);
        Self {
            from,
            to,
            coin,
            amount,
            lamport_ts,
            nonce: enc.hash(),
        }
    }

    pub fn with_nonce(mut self, nonce: Digest) -> Self {
        self.nonce = nonce;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvalidReason {
    ZeroAmount,
    NoRelation,
    CoinNotPermitted,
    RateLimited,
    InsufficientBalance,
    Replay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Validity {
    Valid,
    Invalid(InvalidReason),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransferError {
    #[error("transfer rejected: {0:?}")]
    Invalid(InvalidReason),
    #[error(transparent)]
    Rate(#[from] RateError),
    #[error(transparent)]
    Stream(#[from] StreamError),
    #[error("request endpoints do not match the supplied streams")]
    WrongStreams,
}

/// What a transfer message records: the amount, the rate used and the
/// resulting weight movement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferRecord {
    pub from: StreamId,
    pub to: StreamId,
    pub coin: CoinId,
    pub amount: u64,
    pub rate: ExchangeRate,
    pub delta: MicroInter,
    pub nonce: Digest,
    pub at: Tick,
}

impl TransferRecord {
    pub fn encode(&self) -> Vec<u8> {
        let mut enc = Encoder::tagged("ic/transfer");
        enc.u64(self.from.0)
            .u64(self.to.0)
            .u64(self.coin.0)
            .u64(self.amount)
            .u64(self.rate.reserve)
            .u64(self.rate.supply)
            .u64(self.delta)
            .digest(&self.nonce)
            .u64(self.at);
        enc.finish()
    }
}

/// One stream: its log, weight, balances and relation indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stream {
    pub id: StreamId,
    pub owner_key: PublicKey,
    pub executors: Vec<PublicKey>,
    log: Vec<Message>,
    head: Digest,
    pub inter: MicroInter,
    pub balances: BTreeMap<CoinId, u64>,
    pub rules: Rules,
    pub rules_hash: Digest,
    outbound: BTreeMap<StreamId, Relation>,
    inbound: BTreeSet<StreamId>,
    nonce_epoch: Epoch,
    seen_nonces: BTreeSet<Digest>,
    outflows: Vec<TransferRecord>,
}

impl Stream {
    pub fn new(id: StreamId, owner_key: PublicKey, inter: MicroInter, rules: Rules) -> Self {
        let rules_hash = rules.digest();
        Self {
            id,
            owner_key,
            executors: Vec::new(),
            log: Vec::new(),
            head: empty_digest(),
            inter,
            balances: BTreeMap::new(),
            rules,
            rules_hash,
            outbound: BTreeMap::new(),
            inbound: BTreeSet::new(),
            nonce_epoch: 0,
            seen_nonces: BTreeSet::new(),
            outflows: Vec::new(),
        }
    }

    pub fn log(&self) -> &[Message] {
        &self.log
    }

    /// The state hash `h_i`: digest of the latest message, or the empty
    /// digest for a stream with no messages.
    pub fn head(&self) -> Digest {
        self.head
    }

    pub fn balance(&self, coin: CoinId) -> u64 {
        self.balances.get(&coin).copied().unwrap_or(0)
    }

    pub fn relation_to(&self, to: StreamId) -> Option<&Relation> {
        self.outbound.get(&to)
    }

    pub fn relations(&self) -> impl Iterator<Item = &Relation> {
        self.outbound.values()
    }

    pub fn related_from(&self) -> &BTreeSet<StreamId> {
        &self.inbound
    }

    pub fn outflow_records(&self) -> &[TransferRecord] {
        &self.outflows
    }

    fn authorised(&self, key: &PublicKey) -> bool {
        *key == self.owner_key || self.executors.contains(key)
    }

    fn next_ts(&self) -> u64 {
        self.log.last().map_or(0, |m| m.lamport_ts + 1)
    }

    /// Signs and appends a new message at the head.
    pub fn append(
        &mut self,
        payload: Vec<u8>,
        kind: MessageKind,
        signer: &KeyPair,
    ) -> Result<Message, StreamError> {
        if !self.authorised(&signer.public) {
            return Err(StreamError::AuthError(self.id));
        }
        let ts = self.next_ts();
        let body = Message::signing_bytes(self.id, &self.head, kind, ts, &payload);
        let msg = Message {
            prev: self.head,
            payload,
            lamport_ts: ts,
            kind,
            author: signer.public.clone(),
            author_sig: signer.sign(&body),
        };
        self.head = msg.digest();
        self.log.push(msg.clone());
        Ok(msg)
    }

    /// The message `append` would produce, without committing it.
    pub fn preview(
        &self,
        payload: Vec<u8>,
        kind: MessageKind,
        signer: &KeyPair,
    ) -> Result<Message, StreamError> {
        let mut scratch = Stream {
            log: self.log.last().cloned().into_iter().collect(),
            ..Stream::new(self.id, self.owner_key.clone(), 0, Rules::Plain)
        };
        scratch.head = self.head;
        scratch.executors = self.executors.clone();
        scratch.append(payload, kind, signer)
    }

    /// Commits a message built elsewhere. It must extend the current head.
    pub fn commit(&mut self, msg: Message) -> Result<(), StreamError> {
        if msg.prev != self.head || msg.lamport_ts != self.next_ts() {
            return Err(StreamError::AppendOnlyViolation(self.id));
        }
        if !self.authorised(&msg.author) || !self.signature_ok(&msg) {
            return Err(StreamError::AuthError(self.id));
        }
        self.head = msg.digest();
        self.log.push(msg);
        Ok(())
    }

    fn signature_ok(&self, msg: &Message) -> bool {
        let body = Message::signing_bytes(self.id, &msg.prev, msg.kind, msg.lamport_ts, &msg.payload);
        crypto::verify(&msg.author, &body, &msg.author_sig).unwrap_or(false)
    }

    /// Re-verifies the whole chain: links, timestamps and signatures.
    pub fn verify_chain(&self) -> Result<(), StreamError> {
        let mut prev = empty_digest();
        let mut last_ts = None;
        for (i, m) in self.log.iter().enumerate() {
            let ts_ok = last_ts.is_none_or(|t| m.lamport_ts > t);
            if m.prev != prev || !ts_ok || !self.signature_ok(m) {
                return Err(StreamError::BrokenChain(i));
            }
            prev = m.digest();
            last_ts = Some(m.lamport_ts);
        }
        if prev != self.head {
            return Err(StreamError::BrokenChain(self.log.len()));
        }
        Ok(())
    }

    /// Starts a new replay-protection epoch.
    pub fn begin_epoch(&mut self, epoch: Epoch) {
        if epoch != self.nonce_epoch {
            self.nonce_epoch = epoch;
            self.seen_nonces.clear();
        }
    }

    /// Canonical binary export of the log: message count, then each message.
    pub fn export_log_binary(&self) -> Vec<u8> {
        let mut enc = Encoder::tagged("ic/log");
        enc.u64(self.id.0).count(self.log.len());
        for m in &self.log {
            enc.bytes(&m.encode());
        }
        enc.finish()
    }

    pub fn export_log_json(&self) -> serde_json::Value {
        serde_json::json!({
            "stream": self.id,
            "head": self.head,
            "messages": self.log,
        })
    }

    #[cfg(test)]
    pub(crate) fn log_mut(&mut self) -> &mut Vec<Message> {
        &mut self.log
    }
}

/// Creates the relation `from → to` and indexes it on both streams.
pub fn relate(
    from: &mut Stream,
    to: &mut Stream,
    rate_limit: RateLimit,
    permitted_coins: BTreeSet<CoinId>,
    now: Tick,
    signer: &KeyPair,
) -> Result<Relation, StreamError> {
    if from.id == to.id {
        return Err(StreamError::SelfRelation);
    }
    if from.outbound.contains_key(&to.id) {
        return Err(StreamError::DuplicateRelation {
            from: from.id,
            to: to.id,
        });
    }
    let mut enc = Encoder::tagged("ic/relate");
    enc.u64(to.id.0).count(permitted_coins.len());
    for c in &permitted_coins {
        enc.u64(c.0);
    }
    from.append(enc.finish(), MessageKind::Relate, signer)?;
    let rel = Relation {
        from: from.id,
        to: to.id,
        rate_limit,
        permitted_coins,
        created_at: now,
        last_transfer_ts: None,
        window: OutflowWindow::default(),
    };
    from.outbound.insert(to.id, rel.clone());
    to.inbound.insert(from.id);
    Ok(rel)
}

/// Checks the four transfer conditions, then replay. The first failure wins.
pub fn validate_transfer(
    sender: &Stream,
    req: &TransferRequest,
    rate: &ExchangeRate,
    now: Tick,
) -> Validity {
    use InvalidReason::*;
    if req.amount == 0 {
        return Validity::Invalid(ZeroAmount);
    }
    let Some(rel) = sender.outbound.get(&req.to) else {
        return Validity::Invalid(NoRelation);
    };
    if !rel.permitted_coins.contains(&req.coin) {
        return Validity::Invalid(CoinNotPermitted);
    }
    let num = req.amount as u128 * rate.reserve as u128;
    if !rel.admits(now, num, rate.supply as u128) {
        return Validity::Invalid(RateLimited);
    }
    if sender.balance(req.coin) < req.amount {
        return Validity::Invalid(InsufficientBalance);
    }
    if sender.seen_nonces.contains(&req.nonce) {
        return Validity::Invalid(Replay);
    }
    Validity::Valid
}

/// Applies a validated transfer: debits coins and weight at the sender,
/// credits them at the receiver, and appends the transfer message to both
/// logs. Returns the record, whose `delta` is the weight that moved.
pub fn apply_transfer(
    sender: &mut Stream,
    receiver: &mut Stream,
    req: &TransferRequest,
    rate: &ExchangeRate,
    now: Tick,
    sender_key: &KeyPair,
    receiver_key: &KeyPair,
) -> Result<TransferRecord, TransferError> {
    if sender.id != req.from || receiver.id != req.to {
        return Err(TransferError::WrongStreams);
    }
    if let Validity::Invalid(r) = validate_transfer(sender, req, rate, now) {
        return Err(TransferError::Invalid(r));
    }
    let delta = rate.value_of(req.amount)?;
    if !sender.authorised(&sender_key.public) {
        return Err(StreamError::AuthError(sender.id).into());
    }
    if !receiver.authorised(&receiver_key.public) {
        return Err(StreamError::AuthError(receiver.id).into());
    }
    let record = TransferRecord {
        from: sender.id,
        to: receiver.id,
        coin: req.coin,
        amount: req.amount,
        rate: *rate,
        delta,
        nonce: req.nonce,
        at: now,
    };
    let payload = record.encode();
    sender.append(payload.clone(), MessageKind::Transfer, sender_key)?;
    receiver.append(payload, MessageKind::Transfer, receiver_key)?;

    // the backing invariant guarantees inter ≥ Δ here
    sender.inter -= delta;
    receiver.inter += delta;
    *sender.balances.entry(req.coin).or_insert(0) -= req.amount;
    *receiver.balances.entry(req.coin).or_insert(0) += req.amount;
    sender.seen_nonces.insert(req.nonce);
    sender
        .outbound
        .get_mut(&req.to)
        .expect("validated relation exists")
        .record(now, delta);
    sender.outflows.push(record.clone());
    Ok(record)
}

/// Total order used by the executor: Lamport timestamp, then nonce bytes.
pub fn serialize_concurrent(mut requests: Vec<TransferRequest>) -> Vec<TransferRequest> {
    requests.sort_by(|a, b| {
        a.lamport_ts
            .cmp(&b.lamport_ts)
            .then_with(|| a.nonce.cmp(&b.nonce))
    });
    requests
}

/// Weight that left `stream` in the half-open window `(start, end]`.
pub fn outflow(stream: &Stream, start: Tick, end: Tick) -> MicroInter {
    stream
        .outflows
        .iter()
        .filter(|r| r.at > start && r.at <= end)
        .map(|r| r.delta)
        .sum()
}
