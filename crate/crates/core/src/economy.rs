//! Currency streams, stream value, vesting, slashing and the PoC lottery.
//!
//! All security weight lives in one of a few places: stream weights,
//! currency reserves, lottery pots, vesting accounts, node wallets and the
//! treasury. [`Ledger::total_weight`] sums them; every ledger operation
//! leaves that sum unchanged.
//!
//! A currency's exchange rate is `reserve / supply` micro-INTER per unit and
//! is kept as an exact pair. A stream's value is the dot product of its coin
//! balances with those rates, and the backing invariant requires
//! `value ≤ inter` at every holder.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{self, Digest, EpochSeed, Encoder, KeyPair, NodeId};
use crate::stream::{
    self, MessageKind, OutflowWindow, RateLimit, Rules, Stream, StreamError, TransferError,
    TransferRecord, TransferRequest,
};
use crate::units::{CoinId, ExchangeRate, Fraction, MicroInter, RateError, StreamId, Tick};

/// The stream that holds all weight at genesis.
pub const GENESIS_STREAM: StreamId = StreamId(0);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EconomyError {
    #[error("policy forbids this operation: {0}")]
    PolicyError(&'static str),
    #[error("cannot retire {requested} units, supply is {supply}")]
    InsufficientSupply { requested: u64, supply: u64 },
    #[error("withdrawal exceeds the rate limit")]
    RateLimited,
    #[error("reserve would become negative")]
    NegativeReserve,
    #[error("exchange rate of {0} is undefined")]
    UndefinedRate(CoinId),
    #[error("no exchange rate for {0}")]
    MissingRate(CoinId),
    #[error("operation would break the backing invariant at {0}")]
    BackingViolation(StreamId),
    #[error("unknown stream {0}")]
    UnknownStream(StreamId),
    #[error("unknown coin {0}")]
    UnknownCoin(CoinId),
    #[error("{0} already exists")]
    Duplicate(String),
    #[error("{stream} holds fewer than {needed} units of {coin}")]
    InsufficientBalance {
        stream: StreamId,
        coin: CoinId,
        needed: u64,
    },
    #[error("{0} has too little weight")]
    InsufficientWeight(StreamId),
    #[error(transparent)]
    Vesting(#[from] VestingError),
    #[error(transparent)]
    Transfer(#[from] TransferError),
    #[error(transparent)]
    Stream(#[from] StreamError),
    #[error(transparent)]
    Rate(#[from] RateError),
}

/// Issuer-side state of one local coin.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurrencyStream {
    pub coin: CoinId,
    pub base: StreamId,
    pub supply: u64,
    pub reserve: MicroInter,
    pub emitted: u64,
    pub retired: u64,
    pub allow_emit: bool,
    pub allow_retire: bool,
    pub withdrawal_limit: RateLimit,
    withdrawals: OutflowWindow,
}

impl CurrencyStream {
    pub fn new(coin: CoinId, base: StreamId, withdrawal_limit: RateLimit) -> Self {
        Self {
            coin,
            base,
            supply: 0,
            reserve: 0,
            emitted: 0,
            retired: 0,
            allow_emit: true,
            allow_retire: true,
            withdrawal_limit,
            withdrawals: OutflowWindow::default(),
        }
    }

    pub fn rules(&self) -> Rules {
        Rules::Currency {
            allow_emit: self.allow_emit,
            allow_retire: self.allow_retire,
        }
    }

    pub fn exchange_rate(&self) -> Result<ExchangeRate, EconomyError> {
        ExchangeRate::new(self.reserve, self.supply).map_err(|_| EconomyError::UndefinedRate(self.coin))
    }

    pub fn emit(&mut self, delta: u64) -> Result<(), EconomyError> {
        if delta == 0 {
            return Err(EconomyError::PolicyError("emission must be positive"));
        }
        if !self.allow_emit {
            return Err(EconomyError::PolicyError("rules forbid emission"));
        }
        self.supply = self.supply.checked_add(delta).ok_or(RateError::Overflow)?;
        self.emitted += delta;
        Ok(())
    }

    pub fn retire(&mut self, delta: u64) -> Result<(), EconomyError> {
        if delta == 0 {
            return Err(EconomyError::PolicyError("retirement must be positive"));
        }
        if !self.allow_retire {
            return Err(EconomyError::PolicyError("rules forbid retirement"));
        }
        if delta > self.supply {
            return Err(EconomyError::InsufficientSupply {
                requested: delta,
                supply: self.supply,
            });
        }
        self.supply -= delta;
        self.retired += delta;
        Ok(())
    }

    /// Deposits (positive) are unrestricted here; the caller funds them.
    /// Withdrawals (negative) pass the sliding-window limit.
    pub fn adjust_reserve(&mut self, delta: i64, now: Tick) -> Result<(), EconomyError> {
        if delta >= 0 {
            self.reserve = self
                .reserve
                .checked_add(delta as u64)
                .ok_or(RateError::Overflow)?;
            return Ok(());
        }
        let out = delta.unsigned_abs();
        if out > self.reserve {
            return Err(EconomyError::NegativeReserve);
        }
        if !self
            .withdrawals
            .admits(&self.withdrawal_limit, now, out as u128, 1)
        {
            return Err(EconomyError::RateLimited);
        }
        self.reserve -= out;
        self.withdrawals.record(now, out);
        Ok(())
    }
}

/// `Σ_c balance[c] · rate(c)`, exact.
pub fn stream_value(
    stream: &Stream,
    rates: &BTreeMap<CoinId, ExchangeRate>,
) -> Result<BigRational, EconomyError> {
    let mut v = BigRational::zero();
    for (&coin, &bal) in &stream.balances {
        if bal == 0 {
            continue;
        }
        let rate = rates.get(&coin).ok_or(EconomyError::MissingRate(coin))?;
        v += rate.to_big() * BigInt::from(bal);
    }
    Ok(v)
}

pub fn is_backed(stream: &Stream, rates: &BTreeMap<CoinId, ExchangeRate>) -> Result<bool, EconomyError> {
    Ok(stream_value(stream, rates)? <= BigRational::from_integer(BigInt::from(stream.inter)))
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum VestingError {
    #[error("withdrawal exceeds this window's allowance")]
    RateLimited,
    #[error("withdrawal exceeds the staked balance")]
    InsufficientStake,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VestingAccount {
    pub node: NodeId,
    /// Cumulative amount ever vested.
    pub vested: MicroInter,
    pub withdrawn: MicroInter,
    pub slashed: MicroInter,
    pub window: u64,
    pub withdrawn_this_window: MicroInter,
    pub rate: Fraction,
}

impl VestingAccount {
    pub fn new(node: NodeId) -> Self {
        Self {
            node,
            vested: 0,
            withdrawn: 0,
            slashed: 0,
            window: 0,
            withdrawn_this_window: 0,
            rate: Fraction::new(1, 10),
        }
    }

    pub fn staked(&self) -> MicroInter {
        self.vested - self.withdrawn - self.slashed
    }

    pub fn accrue(&mut self, earned: MicroInter) {
        self.vested += earned;
    }

    /// Allowed iff `withdrawn_this_window + amount ≤ rate · vested`.
    pub fn withdraw(&mut self, amount: MicroInter, window: u64) -> Result<(), VestingError> {
        if window != self.window {
            self.window = window;
            self.withdrawn_this_window = 0;
        }
        let used = (self.withdrawn_this_window + amount) as u128 * self.rate.denom() as u128;
        if used > self.rate.numer() as u128 * self.vested as u128 {
            return Err(VestingError::RateLimited);
        }
        if amount > self.staked() {
            return Err(VestingError::InsufficientStake);
        }
        self.withdrawn_this_window += amount;
        self.withdrawn += amount;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LotteryPool {
    pub poc_id: Digest,
    tickets: Vec<NodeId>,
    pub pot: MicroInter,
}

impl LotteryPool {
    pub fn new(poc_id: Digest) -> Self {
        Self {
            poc_id,
            tickets: Vec::new(),
            pot: 0,
        }
    }

    /// One ticket per distinct forwarder.
    pub fn add_ticket(&mut self, node: NodeId) -> bool {
        match self.tickets.binary_search(&node) {
            Ok(_) => false,
            Err(i) => {
                self.tickets.insert(i, node);
                true
            }
        }
    }

    pub fn tickets(&self) -> &[NodeId] {
        &self.tickets
    }
}

/// `tickets[vrf(seed_next, poc_id) mod |tickets|]`, or `None` without tickets.
pub fn lottery_draw(seed_next: &EpochSeed, pool: &LotteryPool) -> Option<NodeId> {
    if pool.tickets.is_empty() {
        return None;
    }
    let out = crypto::vrf_eval(&seed_next.seed, pool.poc_id.as_bytes());
    let i = out.value.mod_u64(pool.tickets.len() as u64) as usize;
    Some(pool.tickets[i])
}

/// `p·g + (1−p)(g−ℓ) = g − (1−p)·ℓ`.
pub fn corrupt_payoff_bound(g: &BigRational, ell: &BigRational, p_evade: &BigRational) -> BigRational {
    g - (BigRational::one() - p_evade) * ell
}

/// Cheapest bribe for a supermajority: `(⌊2n/3⌋+1)` members at the
/// pro-rata minimum stake `⌈inter/n⌉`.
pub fn min_supermajority_bribe(inter: MicroInter, n: u64) -> u128 {
    let members = (2 * n / 3 + 1) as u128;
    members * (inter as u128).div_ceil(n as u128)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EconomyEvent {
    Fund { stream: StreamId, amount: MicroInter },
    Stake { node: NodeId, amount: MicroInter },
    Transfer { record: TransferRecord },
    Emit { coin: CoinId, recipient: StreamId, delta: u64 },
    Retire { coin: CoinId, holder: StreamId, delta: u64 },
    Deposit { coin: CoinId, from: StreamId, amount: MicroInter },
    Withdraw { coin: CoinId, to: StreamId, amount: MicroInter },
    Slash { node: NodeId, amount: MicroInter, pools: Vec<(Digest, MicroInter)> },
    Ticket { poc: Digest, node: NodeId },
    Draw { poc: Digest, winner: Option<NodeId>, pot: MicroInter },
    VestWithdraw { node: NodeId, amount: MicroInter },
}

impl EconomyEvent {
    fn kind(&self) -> &'static str {
        match self {
            EconomyEvent::Fund { .. } => "fund",
            EconomyEvent::Stake { .. } => "stake",
            EconomyEvent::Transfer { .. } => "transfer",
            EconomyEvent::Emit { .. } => "emit",
            EconomyEvent::Retire { .. } => "retire",
            EconomyEvent::Deposit { .. } => "deposit",
            EconomyEvent::Withdraw { .. } => "withdraw",
            EconomyEvent::Slash { .. } => "slash",
            EconomyEvent::Ticket { .. } => "ticket",
            EconomyEvent::Draw { .. } => "draw",
            EconomyEvent::VestWithdraw { .. } => "vest_withdraw",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoggedEvent {
    pub seq: u64,
    pub tick: Tick,
    pub event: EconomyEvent,
}

#[derive(Debug, Serialize)]
struct EventRow<'a> {
    seq: u64,
    tick: Tick,
    kind: &'a str,
    total_after: MicroInter,
    detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Audit {
    pub expected: MicroInter,
    pub observed: MicroInter,
    pub conserved: bool,
    pub backing_violations: Vec<StreamId>,
    pub supply_mismatches: Vec<CoinId>,
}

impl Audit {
    pub fn ok(&self) -> bool {
        self.conserved && self.backing_violations.is_empty() && self.supply_mismatches.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlashOutcome {
    pub amount: MicroInter,
    pub pools: Vec<(Digest, MicroInter)>,
}

/// Every place security weight can live, with atomic operations over them.
#[derive(Debug, Clone)]
pub struct Ledger {
    total: MicroInter,
    streams: BTreeMap<StreamId, Stream>,
    keys: BTreeMap<StreamId, KeyPair>,
    currencies: BTreeMap<CoinId, CurrencyStream>,
    vesting: BTreeMap<NodeId, VestingAccount>,
    pools: BTreeMap<Digest, LotteryPool>,
    wallets: BTreeMap<NodeId, MicroInter>,
    pub treasury: MicroInter,
    winnings: BTreeMap<NodeId, MicroInter>,
    convicted: BTreeSet<NodeId>,
    events: Vec<LoggedEvent>,
    totals_after: Vec<MicroInter>,
}

impl Ledger {
    /// A ledger whose genesis stream holds all `total` weight.
    pub fn new(total: MicroInter, genesis_key: KeyPair) -> Self {
        let genesis = Stream::new(GENESIS_STREAM, genesis_key.public.clone(), total, Rules::Plain);
        Self {
            total,
            streams: BTreeMap::from([(GENESIS_STREAM, genesis)]),
            keys: BTreeMap::from([(GENESIS_STREAM, genesis_key)]),
            currencies: BTreeMap::new(),
            vesting: BTreeMap::new(),
            pools: BTreeMap::new(),
            wallets: BTreeMap::new(),
            treasury: 0,
            winnings: BTreeMap::new(),
            convicted: BTreeSet::new(),
            events: Vec::new(),
            totals_after: Vec::new(),
        }
    }

    pub fn total(&self) -> MicroInter {
        self.total
    }

    pub fn stream(&self, id: StreamId) -> Option<&Stream> {
        self.streams.get(&id)
    }

    pub fn streams(&self) -> impl Iterator<Item = &Stream> {
        self.streams.values()
    }

    pub fn currency(&self, coin: CoinId) -> Option<&CurrencyStream> {
        self.currencies.get(&coin)
    }

    pub fn currencies(&self) -> impl Iterator<Item = &CurrencyStream> {
        self.currencies.values()
    }

    pub fn vesting(&self, node: NodeId) -> Option<&VestingAccount> {
        self.vesting.get(&node)
    }

    pub fn staked(&self, node: NodeId) -> MicroInter {
        self.vesting.get(&node).map_or(0, VestingAccount::staked)
    }

    pub fn pool(&self, poc: &Digest) -> Option<&LotteryPool> {
        self.pools.get(poc)
    }

    pub fn winnings(&self, node: NodeId) -> MicroInter {
        self.winnings.get(&node).copied().unwrap_or(0)
    }

    pub fn is_convicted(&self, node: NodeId) -> bool {
        self.convicted.contains(&node)
    }

    pub fn events(&self) -> &[LoggedEvent] {
        &self.events
    }

    /// Rates of every coin with non-zero supply.
    pub fn rates(&self) -> BTreeMap<CoinId, ExchangeRate> {
        self.currencies
            .values()
            .filter_map(|c| c.exchange_rate().ok().map(|r| (c.coin, r)))
            .collect()
    }

    pub fn total_weight(&self) -> MicroInter {
        self.streams.values().map(|s| s.inter).sum::<MicroInter>()
            + self.currencies.values().map(|c| c.reserve).sum::<MicroInter>()
            + self.pools.values().map(|p| p.pot).sum::<MicroInter>()
            + self.vesting.values().map(VestingAccount::staked).sum::<MicroInter>()
            + self.wallets.values().sum::<MicroInter>()
            + self.treasury
    }

    pub fn audit(&self) -> Audit {
        let rates = self.rates();
        let observed = self.total_weight();
        let backing_violations = self
            .streams
            .values()
            .filter(|s| !is_backed(s, &rates).unwrap_or(false))
            .map(|s| s.id)
            .collect();
        let supply_mismatches = self
            .currencies
            .values()
            .filter(|c| {
                let held: u64 = self.streams.values().map(|s| s.balance(c.coin)).sum();
                held != c.supply || c.supply != c.emitted - c.retired
            })
            .map(|c| c.coin)
            .collect();
        Audit {
            expected: self.total,
            observed,
            conserved: observed == self.total,
            backing_violations,
            supply_mismatches,
        }
    }

    /// Total weight recorded after each logged event.
    pub fn totals_after_events(&self) -> &[MicroInter] {
        &self.totals_after
    }

    fn log(&mut self, tick: Tick, event: EconomyEvent) {
        let seq = self.events.len() as u64;
        self.events.push(LoggedEvent { seq, tick, event });
        self.totals_after.push(self.total_weight());
    }

    fn stream_mut(&mut self, id: StreamId) -> Result<&mut Stream, EconomyError> {
        self.streams.get_mut(&id).ok_or(EconomyError::UnknownStream(id))
    }

    fn key(&self, id: StreamId) -> Result<&KeyPair, EconomyError> {
        self.keys.get(&id).ok_or(EconomyError::UnknownStream(id))
    }

    fn debit_genesis(&mut self, amount: MicroInter) -> Result<(), EconomyError> {
        let g = self.stream_mut(GENESIS_STREAM)?;
        if g.inter < amount {
            return Err(EconomyError::InsufficientWeight(GENESIS_STREAM));
        }
        g.inter -= amount;
        Ok(())
    }

    /// Creates a stream funded from the genesis stream.
    pub fn create_stream(
        &mut self,
        id: StreamId,
        key: KeyPair,
        rules: Rules,
        funding: MicroInter,
        tick: Tick,
    ) -> Result<(), EconomyError> {
        if self.streams.contains_key(&id) {
            return Err(EconomyError::Duplicate(id.to_string()));
        }
        self.debit_genesis(funding)?;
        self.streams
            .insert(id, Stream::new(id, key.public.clone(), funding, rules));
        self.keys.insert(id, key);
        self.log(tick, EconomyEvent::Fund { stream: id, amount: funding });
        Ok(())
    }

    /// Moves genesis weight into a node's vesting account as stake.
    pub fn stake(&mut self, node: NodeId, amount: MicroInter, tick: Tick) -> Result<(), EconomyError> {
        self.debit_genesis(amount)?;
        self.vesting
            .entry(node)
            .or_insert_with(|| VestingAccount::new(node))
            .accrue(amount);
        self.log(tick, EconomyEvent::Stake { node, amount });
        Ok(())
    }

    pub fn create_currency(
        &mut self,
        coin: CoinId,
        base: StreamId,
        withdrawal_limit: RateLimit,
    ) -> Result<(), EconomyError> {
        if self.currencies.contains_key(&coin) {
            return Err(EconomyError::Duplicate(coin.to_string()));
        }
        let cs = CurrencyStream::new(coin, base, withdrawal_limit);
        let s = self.stream_mut(base)?;
        s.rules = cs.rules();
        s.rules_hash = s.rules.digest();
        self.currencies.insert(coin, cs);
        Ok(())
    }

    pub fn relate(
        &mut self,
        from: StreamId,
        to: StreamId,
        limit: RateLimit,
        coins: BTreeSet<CoinId>,
        now: Tick,
    ) -> Result<(), EconomyError> {
        let key = self.key(from)?.clone();
        let mut a = self.streams.remove(&from).ok_or(EconomyError::UnknownStream(from))?;
        let res = match self.streams.get_mut(&to) {
            Some(b) => stream::relate(&mut a, b, limit, coins, now, &key).map(|_| ()),
            None => Err(StreamError::AuthError(to)),
        };
        self.streams.insert(from, a);
        if !self.streams.contains_key(&to) {
            return Err(EconomyError::UnknownStream(to));
        }
        Ok(res?)
    }

    pub fn transfer(&mut self, req: &TransferRequest, now: Tick) -> Result<TransferRecord, EconomyError> {
        let rate = self
            .currencies
            .get(&req.coin)
            .ok_or(EconomyError::UnknownCoin(req.coin))?
            .exchange_rate()?;
        if req.from == req.to || !self.streams.contains_key(&req.to) {
            return Err(EconomyError::UnknownStream(req.to));
        }
        let ks = self.key(req.from)?.clone();
        let kr = self.key(req.to)?.clone();
        let mut a = self.streams.remove(&req.from).ok_or(EconomyError::UnknownStream(req.from))?;
        let b = self.streams.get_mut(&req.to).expect("checked above");
        let res = stream::apply_transfer(&mut a, b, req, &rate, now, &ks, &kr);
        self.streams.insert(req.from, a);
        let record = res?;
        self.log(now, EconomyEvent::Transfer { record: record.clone() });
        Ok(record)
    }

    /// Checks backing at every holder of `coin` under a candidate rate.
    fn holders_backed(
        &self,
        coin: CoinId,
        rate: Option<ExchangeRate>,
        overrides: &[&Stream],
    ) -> Result<(), EconomyError> {
        let mut rates = self.rates();
        match rate {
            Some(r) => {
                rates.insert(coin, r);
            }
            None => {
                rates.remove(&coin);
            }
        }
        for s in self.streams.values() {
            let s = overrides.iter().find(|o| o.id == s.id).copied().unwrap_or(s);
            if s.balance(coin) > 0 && !is_backed(s, &rates)? {
                return Err(EconomyError::BackingViolation(s.id));
            }
        }
        Ok(())
    }

    fn issuer_payload(coin: CoinId, other: StreamId, amount: u64) -> Vec<u8> {
        let mut enc = Encoder::tagged("ic/coin-op");
        enc.u64(coin.0).u64(other.0).u64(amount);
        enc.finish()
    }

    fn append_issuer(&mut self, coin: CoinId, kind: MessageKind, other: StreamId, amount: u64) -> Result<(), EconomyError> {
        let base = self.currencies[&coin].base;
        let key = self.key(base)?.clone();
        self.stream_mut(base)?
            .append(Self::issuer_payload(coin, other, amount), kind, &key)?;
        Ok(())
    }

    pub fn emit(&mut self, coin: CoinId, delta: u64, recipient: StreamId, tick: Tick) -> Result<(), EconomyError> {
        let mut cs = self.currencies.get(&coin).ok_or(EconomyError::UnknownCoin(coin))?.clone();
        cs.emit(delta)?;
        let mut r = self.streams.get(&recipient).ok_or(EconomyError::UnknownStream(recipient))?.clone();
        *r.balances.entry(coin).or_insert(0) += delta;
        self.holders_backed(coin, cs.exchange_rate().ok(), &[&r])?;
        self.append_issuer(coin, MessageKind::Emit, recipient, delta)?;
        self.currencies.insert(coin, cs);
        *self.stream_mut(recipient)?.balances.entry(coin).or_insert(0) += delta;
        self.log(tick, EconomyEvent::Emit { coin, recipient, delta });
        Ok(())
    }

    /// Burns `delta` units held by `holder`.
    pub fn retire(&mut self, coin: CoinId, delta: u64, holder: StreamId, tick: Tick) -> Result<(), EconomyError> {
        let mut cs = self.currencies.get(&coin).ok_or(EconomyError::UnknownCoin(coin))?.clone();
        cs.retire(delta)?;
        let mut h = self.streams.get(&holder).ok_or(EconomyError::UnknownStream(holder))?.clone();
        let bal = h.balance(coin);
        if bal < delta {
            return Err(EconomyError::InsufficientBalance { stream: holder, coin, needed: delta });
        }
        h.balances.insert(coin, bal - delta);
        self.holders_backed(coin, cs.exchange_rate().ok(), &[&h])?;
        self.append_issuer(coin, MessageKind::Retire, holder, delta)?;
        self.currencies.insert(coin, cs);
        self.stream_mut(holder)?.balances.insert(coin, bal - delta);
        self.log(tick, EconomyEvent::Retire { coin, holder, delta });
        Ok(())
    }

    /// Moves weight from `from` into the coin's reserve.
    pub fn deposit(&mut self, coin: CoinId, from: StreamId, amount: MicroInter, tick: Tick) -> Result<(), EconomyError> {
        let mut cs = self.currencies.get(&coin).ok_or(EconomyError::UnknownCoin(coin))?.clone();
        let mut f = self.streams.get(&from).ok_or(EconomyError::UnknownStream(from))?.clone();
        if f.inter < amount {
            return Err(EconomyError::InsufficientWeight(from));
        }
        f.inter -= amount;
        cs.adjust_reserve(amount as i64, tick)?;
        let rate = cs.exchange_rate().ok();
        self.holders_backed(coin, rate, &[&f])?;
        let mut rates = self.rates();
        if let Some(r) = rate {
            rates.insert(coin, r);
        }
        if !is_backed(&f, &rates)? {
            return Err(EconomyError::BackingViolation(from));
        }
        self.append_issuer(coin, MessageKind::ReserveAdjust, from, amount)?;
        self.currencies.insert(coin, cs);
        self.stream_mut(from)?.inter -= amount;
        self.log(tick, EconomyEvent::Deposit { coin, from, amount });
        Ok(())
    }

    /// Releases reserve weight to `to`, subject to the withdrawal limit.
    pub fn withdraw(&mut self, coin: CoinId, to: StreamId, amount: MicroInter, tick: Tick) -> Result<(), EconomyError> {
        let mut cs = self.currencies.get(&coin).ok_or(EconomyError::UnknownCoin(coin))?.clone();
        if !self.streams.contains_key(&to) {
            return Err(EconomyError::UnknownStream(to));
        }
        let signed = i64::try_from(amount).map_err(|_| RateError::Overflow)?;
        cs.adjust_reserve(-signed, tick)?;
        self.append_issuer(coin, MessageKind::ReserveAdjust, to, amount)?;
        self.currencies.insert(coin, cs);
        self.stream_mut(to)?.inter += amount;
        self.log(tick, EconomyEvent::Withdraw { coin, to, amount });
        Ok(())
    }

    pub fn vest_withdraw(&mut self, node: NodeId, amount: MicroInter, window: u64, tick: Tick) -> Result<(), EconomyError> {
        let acct = self.vesting.entry(node).or_insert_with(|| VestingAccount::new(node));
        acct.withdraw(amount, window)?;
        *self.wallets.entry(node).or_insert(0) += amount;
        self.log(tick, EconomyEvent::VestWithdraw { node, amount });
        Ok(())
    }

    /// Records that `node` forwarded the PoC `poc`.
    pub fn add_ticket(&mut self, poc: Digest, node: NodeId, tick: Tick) -> bool {
        let added = self
            .pools
            .entry(poc)
            .or_insert_with(|| LotteryPool::new(poc))
            .add_ticket(node);
        if added {
            self.log(tick, EconomyEvent::Ticket { poc, node });
        }
        added
    }

    /// Moves the node's whole stake into the pools of the convicting PoCs:
    /// equal shares, remainder to the smallest PoC id.
    pub fn slash(&mut self, node: NodeId, convicting: &[Digest], tick: Tick) -> SlashOutcome {
        let ids: BTreeSet<Digest> = convicting.iter().copied().collect();
        let Some(acct) = self.vesting.get_mut(&node).filter(|_| !ids.is_empty()) else {
            return SlashOutcome { amount: 0, pools: Vec::new() };
        };
        let amount = acct.staked();
        acct.slashed += amount;
        self.convicted.insert(node);
        let k = ids.len() as u64;
        let (share, rem) = (amount / k, amount % k);
        let mut pools = Vec::new();
        for (i, id) in ids.into_iter().enumerate() {
            let part = share + if i == 0 { rem } else { 0 };
            self.pools.entry(id).or_insert_with(|| LotteryPool::new(id)).pot += part;
            pools.push((id, part));
        }
        let out = SlashOutcome { amount, pools };
        self.log(tick, EconomyEvent::Slash { node, amount, pools: out.pools.clone() });
        out
    }

    /// Draws every open pool with the next epoch's seed. Winnings vest;
    /// pots with no tickets go to the treasury.
    pub fn draw_all(&mut self, seed_next: &EpochSeed, tick: Tick) -> Vec<(Digest, Option<NodeId>, MicroInter)> {
        let ids: Vec<Digest> = self.pools.keys().copied().collect();
        let mut out = Vec::new();
        for id in ids {
            let pool = self.pools.remove(&id).expect("listed above");
            let winner = lottery_draw(seed_next, &pool);
            match winner {
                Some(w) => {
                    self.vesting.entry(w).or_insert_with(|| VestingAccount::new(w)).accrue(pool.pot);
                    *self.winnings.entry(w).or_insert(0) += pool.pot;
                }
                None => self.treasury += pool.pot,
            }
            self.log(tick, EconomyEvent::Draw { poc: id, winner, pot: pool.pot });
            out.push((id, winner, pool.pot));
        }
        out
    }

    pub fn events_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.events).expect("events serialise")
    }

    pub fn events_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for (e, total) in self.events.iter().zip(&self.totals_after) {
            w.serialize(EventRow {
                seq: e.seq,
                tick: e.tick,
                kind: e.event.kind(),
                total_after: *total,
                detail: serde_json::to_string(&e.event).expect("event serialises"),
            })
            .expect("csv row");
        }
        String::from_utf8(w.into_inner().expect("csv flush")).expect("csv is utf-8")
    }

    #[doc(hidden)]
    pub fn inject_fault(&mut self, stream: StreamId, extra: MicroInter) {
        if let Some(s) = self.streams.get_mut(&stream) {
            s.inter += extra;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::MICRO_PER_INTER;
    use num_traits::ToPrimitive;

    const C1: CoinId = CoinId(1);
    const C2: CoinId = CoinId(2);

    fn key(n: u64) -> KeyPair {
        KeyPair::from_seed(&n.to_be_bytes())
    }

    fn ratio(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn emission_moves_the_rate() {
        let mut cs = CurrencyStream::new(C1, StreamId(1), RateLimit::Unlimited);
        assert_eq!(cs.exchange_rate(), Err(EconomyError::UndefinedRate(C1)));
        cs.adjust_reserve(100_000_000, 0).unwrap();
        cs.emit(100).unwrap();
        assert!(cs.exchange_rate().unwrap().same_value(&ExchangeRate::peg(1_000_000)));
        cs.emit(100).unwrap();
        assert!(cs.exchange_rate().unwrap().same_value(&ExchangeRate::peg(500_000)));
        assert!(matches!(cs.emit(0), Err(EconomyError::PolicyError(_))));
        cs.allow_emit = false;
        assert!(matches!(cs.emit(1), Err(EconomyError::PolicyError(_))));
    }

    #[test]
    fn retirement() {
        let mut cs = CurrencyStream::new(C1, StreamId(1), RateLimit::Unlimited);
        cs.adjust_reserve(100_000_000, 0).unwrap();
        cs.emit(200).unwrap();
        cs.retire(100).unwrap();
        assert!(cs.exchange_rate().unwrap().same_value(&ExchangeRate::peg(1_000_000)));
        assert_eq!(cs.supply, cs.emitted - cs.retired);
        assert!(matches!(cs.retire(0), Err(EconomyError::PolicyError(_))));
        assert!(matches!(cs.retire(101), Err(EconomyError::InsufficientSupply { .. })));
        cs.retire(100).unwrap();
        assert_eq!(cs.exchange_rate(), Err(EconomyError::UndefinedRate(C1)));
    }

    #[test]
    fn reserve_adjustments() {
        let mut cs = CurrencyStream::new(C1, StreamId(1), RateLimit::linear(10, 10));
        cs.adjust_reserve(1_000, 0).unwrap();
        cs.emit(10).unwrap();
        cs.adjust_reserve(1_000, 0).unwrap();
        assert!(cs.exchange_rate().unwrap().same_value(&ExchangeRate::peg(200)));
        cs.adjust_reserve(-1, 5).unwrap();
        assert_eq!(cs.adjust_reserve(-2, 5), Err(EconomyError::RateLimited));
        cs.adjust_reserve(-1, 10).unwrap();
        let mut small = CurrencyStream::new(C1, StreamId(1), RateLimit::Unlimited);
        assert_eq!(small.adjust_reserve(-1, 0), Err(EconomyError::NegativeReserve));
    }

    #[test]
    fn rate_is_stable_without_events() {
        let mut cs = CurrencyStream::new(C1, StreamId(1), RateLimit::Unlimited);
        cs.adjust_reserve(100_000_000, 0).unwrap();
        cs.emit(50).unwrap();
        let r1 = cs.exchange_rate().unwrap();
        assert_eq!(r1.value_of(1), Ok(2_000_000));
        assert_eq!(cs.exchange_rate().unwrap(), r1);
    }

    #[test]
    fn dot_product_value() {
        let mut s = Stream::new(StreamId(1), key(1).public, 0, Rules::Plain);
        let rates = BTreeMap::from([(C1, ExchangeRate::peg(1_000_000)), (C2, ExchangeRate::peg(2_000_000))]);
        assert_eq!(stream_value(&s, &rates).unwrap(), BigRational::zero());
        s.balances.insert(C1, 10);
        s.balances.insert(C2, 5);
        assert_eq!(stream_value(&s, &rates).unwrap(), ratio(20_000_000, 1));
        s.balances.insert(CoinId(3), 1);
        assert_eq!(stream_value(&s, &rates), Err(EconomyError::MissingRate(CoinId(3))));
    }

    #[test]
    fn vesting_window() {
        let mut a = VestingAccount::new(NodeId(1));
        a.accrue(100_000_000);
        a.withdraw(10_000_000, 0).unwrap();
        assert_eq!(a.withdraw(1, 0), Err(VestingError::RateLimited));
        a.withdraw(10_000_000, 1).unwrap();
        assert_eq!(a.staked(), 80_000_000);
    }

    #[test]
    fn payoff_bound() {
        let g = ratio(1_000_000, 1);
        assert_eq!(corrupt_payoff_bound(&g, &g, &BigRational::zero()), BigRational::zero());
        let p = BigRational::new(1.into(), BigInt::from(3).pow(15));
        let v = corrupt_payoff_bound(&g, &g, &p);
        assert!(v > BigRational::zero() && v < ratio(1, 10));
        assert_eq!(v.floor().to_integer().to_i64(), Some(0));
        let ell = ratio(2_000_000, 1);
        assert!(corrupt_payoff_bound(&g, &ell, &BigRational::zero()) < BigRational::zero());
        assert!(corrupt_payoff_bound(&g, &ell, &ratio(1, 4)) < BigRational::zero());
    }

    #[test]
    fn bribe_exceeds_two_thirds() {
        for n in 1..200u64 {
            for inter in [1, 7, 1_000_000, 35_000_000, 123_456_789] {
                assert!(3 * min_supermajority_bribe(inter, n) > 2 * inter as u128, "n={n}");
            }
        }
        assert_eq!(min_supermajority_bribe(35_000_000, 35), 24_000_000);
    }

    #[test]
    fn lottery_single_ticket_and_relabelling() {
        let seed = EpochSeed { epoch: 1, seed: crypto::hash(b"s") };
        let mut p = LotteryPool::new(crypto::hash(b"poc"));
        p.add_ticket(NodeId(4));
        assert_eq!(lottery_draw(&seed, &p), Some(NodeId(4)));
        assert!(!p.add_ticket(NodeId(4)));

        // same forwarder set, different discoverer (first to report)
        let mut a = LotteryPool::new(crypto::hash(b"poc"));
        let mut b = a.clone();
        for n in [3, 1, 2, 9] {
            a.add_ticket(NodeId(n));
        }
        for n in [9, 2, 3, 1] {
            b.add_ticket(NodeId(n));
        }
        assert_eq!(lottery_draw(&seed, &a), lottery_draw(&seed, &b));
        assert_eq!(lottery_draw(&seed, &LotteryPool::new(Digest::default())), None);
    }

    fn ledger() -> Ledger {
        let mut l = Ledger::new(1_000 * MICRO_PER_INTER, key(0));
        l.create_stream(StreamId(1), key(1), Rules::Plain, 100 * MICRO_PER_INTER, 0).unwrap();
        l.create_stream(StreamId(2), key(2), Rules::Plain, 100 * MICRO_PER_INTER, 0).unwrap();
        l.create_stream(StreamId(3), key(3), Rules::Plain, 10 * MICRO_PER_INTER, 0).unwrap();
        l.create_currency(C1, StreamId(1), RateLimit::Unlimited).unwrap();
        l.deposit(C1, StreamId(1), 50 * MICRO_PER_INTER, 0).unwrap();
        l
    }

    #[test]
    fn ledger_emit_transfer_conserves() {
        let mut l = ledger();
        l.emit(C1, 50, StreamId(2), 1).unwrap();
        l.relate(StreamId(2), StreamId(3), RateLimit::Unlimited, [C1].into(), 1).unwrap();
        let req = TransferRequest::new(StreamId(2), StreamId(3), C1, 5, 0);
        let rec = l.transfer(&req, 2).unwrap();
        assert_eq!(rec.delta, 5 * MICRO_PER_INTER);
        assert_eq!(l.stream(StreamId(3)).unwrap().inter, 15 * MICRO_PER_INTER);
        assert!(l.audit().ok());
        assert!(l.totals_after_events().iter().all(|&t| t == l.total()));
    }

    #[test]
    fn emission_checks_recipient_backing() {
        let mut l = ledger();
        // 50 INTER reserve, 11 units to a 10-INTER stream: 11 · 50/11 = 50 > 10
        assert_eq!(l.emit(C1, 11, StreamId(3), 1), Err(EconomyError::BackingViolation(StreamId(3))));
        assert_eq!(l.currency(C1).unwrap().supply, 0);
        assert!(l.audit().ok());
    }

    #[test]
    fn deposit_rechecks_holders() {
        let mut l = ledger();
        l.emit(C1, 42, StreamId(2), 1).unwrap();
        l.emit(C1, 8, StreamId(3), 1).unwrap();
        // 1 INTER per unit; doubling the reserve puts stream 3 at 16 > 10
        assert_eq!(
            l.deposit(C1, StreamId(1), 50 * MICRO_PER_INTER, 2),
            Err(EconomyError::BackingViolation(StreamId(3)))
        );
        assert!(l.audit().ok());
        l.deposit(C1, StreamId(1), 10 * MICRO_PER_INTER, 2).unwrap();
        assert!(l.audit().ok());
    }

    #[test]
    fn retire_rejects_breaking_other_holders() {
        let mut l = ledger();
        l.emit(C1, 100, StreamId(2), 1).unwrap(); // 0.5 INTER per unit
        l.emit(C1, 16, StreamId(3), 1).unwrap(); // 50/116 per unit, 16 units ≈ 6.9 INTER
        assert!(l.audit().ok());
        // retiring 90 from stream 2: rate becomes 50/26, stream 3 holds ≈ 30.8 INTER > 10
        assert_eq!(l.retire(C1, 90, StreamId(2), 2), Err(EconomyError::BackingViolation(StreamId(3))));
        l.retire(C1, 10, StreamId(2), 2).unwrap();
        assert!(l.audit().ok());
    }

    #[test]
    fn withdraw_is_rate_limited_and_conserving() {
        let mut l = Ledger::new(1_000, key(0));
        l.create_stream(StreamId(1), key(1), Rules::Plain, 500, 0).unwrap();
        l.create_currency(C1, StreamId(1), RateLimit::linear(10, 10)).unwrap();
        l.deposit(C1, StreamId(1), 100, 0).unwrap();
        l.withdraw(C1, StreamId(1), 1, 1).unwrap();
        assert!(matches!(l.withdraw(C1, StreamId(1), 5, 1), Err(EconomyError::RateLimited)));
        assert_eq!(l.total_weight(), 1_000);
    }

    #[test]
    fn slashing_and_lottery() {
        let mut l = Ledger::new(10_000_000, key(0));
        l.stake(NodeId(1), 1_000_000, 0).unwrap();
        l.stake(NodeId(2), 1_000_001, 0).unwrap();
        let p1 = crypto::hash(b"p1");
        let p2 = crypto::hash(b"p2");
        let one = l.slash(NodeId(1), &[p1], 1);
        assert_eq!(one.amount, 1_000_000);
        assert_eq!(l.pool(&p1).unwrap().pot, 1_000_000);
        let two = l.slash(NodeId(2), &[p2, p1], 1);
        let (first, second) = if p1 < p2 { (p1, p2) } else { (p2, p1) };
        assert_eq!(two.pools, vec![(first, 500_001), (second, 500_000)]);
        assert_eq!(l.slash(NodeId(3), &[p1], 1).amount, 0);
        assert_eq!(l.slash(NodeId(1), &[], 1).amount, 0);
        assert_eq!(l.total_weight(), l.total());

        l.add_ticket(p1, NodeId(7), 1);
        let seed = EpochSeed { epoch: 2, seed: crypto::hash(b"next") };
        let draws = l.draw_all(&seed, 2);
        assert_eq!(draws.len(), 2);
        assert_eq!(l.winnings(NodeId(7)), 1_500_001.min(l.winnings(NodeId(7))));
        assert!(l.winnings(NodeId(7)) > 0);
        assert!(l.treasury > 0);
        assert_eq!(l.total_weight(), l.total());
        assert!(l.totals_after_events().iter().all(|&t| t == l.total()));
        assert!(l.is_convicted(NodeId(1)));
        assert!(!l.events_csv().is_empty());
    }
}
