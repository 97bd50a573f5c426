//! Epochs, swarm sizing and VRF swarm assignment.
//!
//! Swarm size grows with the square root of a stream's Intercoin weight:
//! `n = min(N, ⌈c·√INTER⌉)` with `INTER` in whole INTER. The computation is
//! done in integers: `n` is the least value with `n² · 10⁶ ≥ c² · inter`.
//!
//! ```
//! use intercloud::epoch::swarm_size;
//! assert_eq!(swarm_size(1_000_000, 35, 10_000), 35);
//! assert_eq!(swarm_size(4_000_000, 35, 10_000), 70);
//! ```

use std::collections::{BTreeMap, BTreeSet};

use num_integer::Roots;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{self, Contribution, Digest, EpochSeed, Encoder, NodeId, RandaoOutcome};
use crate::units::{Epoch, Fraction, MicroInter, StreamId, Tick, MICRO_PER_INTER};

/// The operational swarm size for `r = 1, s = 30, f/n = 1/3` when nodes may
/// be corrupted after joining. Taken from Hoepman's d > 0 calibration rather
/// than recomputed.
pub const HOEPMAN_OPERATIONAL_SWARM: u64 = 35;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EpochError {
    #[error("need {needed} eligible nodes, only {available} available")]
    InsufficientEligibleNodes { needed: usize, available: usize },
    #[error("seed for epoch {0} is not available until its RANDAO round completes")]
    SeedUnavailable(Epoch),
    #[error("invalid security parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SecurityParams {
    /// Maximum tolerated number of double-spendings.
    pub r: u64,
    pub s: f64,
    pub f_ratio: Fraction,
    /// Sizing constant: watchers per √INTER.
    pub c: u64,
    /// Base stake level, micro-INTER: the value that gets exactly `c` watchers.
    pub inter_base: MicroInter,
}

impl SecurityParams {
    pub fn swarm_size(&self, inter: MicroInter, network: u64) -> u64 {
        swarm_size_with_base(inter, self.inter_base, self.c, network)
    }

    /// The static sizing bound for these parameters.
    pub fn hoepman_bound(&self) -> Result<HoepmanBound, EpochError> {
        hoepman_min_swarm(self.r, self.s, self.f_ratio.to_f64())
    }
}

impl Default for SecurityParams {
    fn default() -> Self {
        Self {
            r: 1,
            s: 30.0,
            f_ratio: Fraction::new(1, 3),
            c: HOEPMAN_OPERATIONAL_SWARM,
            inter_base: MICRO_PER_INTER,
        }
    }
}

/// `min(N, ⌈c·√(inter / 10⁶)⌉)`; zero for an unwatchable empty stream.
pub fn swarm_size(inter: MicroInter, c: u64, network: u64) -> u64 {
    swarm_size_with_base(inter, MICRO_PER_INTER, c, network)
}

/// `min(N, ⌈c·√(inter / base)⌉)`, so a stream worth `base` gets `c` watchers.
pub fn swarm_size_with_base(inter: MicroInter, base: MicroInter, c: u64, network: u64) -> u64 {
    if inter == 0 {
        return 0;
    }
    let target = (c as u128 * c as u128 * inter as u128).div_ceil(base.max(1) as u128);
    let mut n = target.sqrt();
    if n * n < target {
        n += 1;
    }
    (n.min(network as u128) as u64).max(1).min(network)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoepmanBound {
    pub beta: f64,
    pub raw: f64,
    pub n_min: u64,
}

/// Clerk-set size for `d = 0`:
/// `β = s / ln(1/f)`, `n = ⌈(β/r) · ln(s + 1 + ln(r + 2))⌉`. All logs natural.
/// No network-size input exists; the bound does not depend on it.
pub fn hoepman_min_swarm(r: u64, s: f64, f_ratio: f64) -> Result<HoepmanBound, EpochError> {
    if r == 0 {
        return Err(EpochError::InvalidParams("r must be at least 1".into()));
    }
    if !(s > 0.0 && s.is_finite()) {
        return Err(EpochError::InvalidParams("s must be positive".into()));
    }
    if !(f_ratio > 0.0 && f_ratio < 1.0) {
        return Err(EpochError::InvalidParams(
            "f_ratio must lie strictly between 0 and 1".into(),
        ));
    }
    let beta = s / (1.0 / f_ratio).ln();
    let raw = beta / r as f64 * (s + 1.0 + ((r + 2) as f64).ln()).ln();
    Ok(HoepmanBound {
        beta,
        raw,
        n_min: raw.ceil() as u64,
    })
}

/// Pro-rata staking requirement: `stake ≥ inter / n`, cross-multiplied.
pub fn staking_eligible(stake: MicroInter, inter: MicroInter, n: u64) -> bool {
    stake as u128 * n as u128 >= inter as u128
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwarmAssignment {
    pub stream: StreamId,
    pub epoch: Epoch,
    pub members: BTreeSet<NodeId>,
}

impl SwarmAssignment {
    pub fn size(&self) -> usize {
        self.members.len()
    }
}

fn rank_input(stream: StreamId, node: NodeId) -> Vec<u8> {
    let mut enc = Encoder::tagged("ic/assign");
    enc.u64(stream.0).u64(node.0);
    enc.finish()
}

/// Ranks eligible nodes by `vrf(seed, stream ‖ node)` and takes the `n`
/// smallest.
pub fn assign_swarm(
    seed: &EpochSeed,
    stream: StreamId,
    n: usize,
    eligible: &BTreeSet<NodeId>,
) -> Result<SwarmAssignment, EpochError> {
    if n > eligible.len() {
        return Err(EpochError::InsufficientEligibleNodes {
            needed: n,
            available: eligible.len(),
        });
    }
    let mut ranked: Vec<(Digest, NodeId)> = eligible
        .iter()
        .map(|&v| (crypto::vrf_eval(&seed.seed, &rank_input(stream, v)).value, v))
        .collect();
    ranked.sort_unstable();
    Ok(SwarmAssignment {
        stream,
        epoch: seed.epoch,
        members: ranked.into_iter().take(n).map(|(_, v)| v).collect(),
    })
}

/// Checks a claimed membership against the seed.
pub fn verify_assignment(
    seed: &EpochSeed,
    assignment: &SwarmAssignment,
    eligible: &BTreeSet<NodeId>,
) -> bool {
    assign_swarm(seed, assignment.stream, assignment.size(), eligible)
        .is_ok_and(|a| a == *assignment)
}

/// Seeds become available only once their RANDAO round has run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSchedule {
    seeds: BTreeMap<Epoch, EpochSeed>,
}

impl SeedSchedule {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn complete_round(&mut self, epoch: Epoch, contributions: &[Contribution]) -> RandaoOutcome {
        let out = crypto::randao_round(epoch, contributions);
        self.seeds.entry(epoch).or_insert(out.seed);
        out
    }

    pub fn seed(&self, epoch: Epoch) -> Result<&EpochSeed, EpochError> {
        self.seeds.get(&epoch).ok_or(EpochError::SeedUnavailable(epoch))
    }

    pub fn assign(
        &self,
        epoch: Epoch,
        stream: StreamId,
        n: usize,
        eligible: &BTreeSet<NodeId>,
    ) -> Result<SwarmAssignment, EpochError> {
        assign_swarm(self.seed(epoch)?, stream, n, eligible)
    }
}

/// The epoch clock plus the current assignments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochState {
    pub epoch: Epoch,
    pub seed: EpochSeed,
    pub t_ep: Tick,
    pub assignments: BTreeMap<StreamId, SwarmAssignment>,
}

impl EpochState {
    pub fn start(&self) -> Tick {
        self.epoch * self.t_ep
    }

    pub fn end(&self) -> Tick {
        self.start() + self.t_ep
    }

    pub fn swarm(&self, stream: StreamId) -> Option<&BTreeSet<NodeId>> {
        self.assignments.get(&stream).map(|a| &a.members)
    }
}

pub fn epoch_of(t: Tick, t_ep: Tick) -> Epoch {
    t / t_ep
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seed(e: Epoch, tag: u64) -> EpochSeed {
        let mut enc = Encoder::tagged("test-seed");
        enc.u64(e).u64(tag);
        EpochSeed {
            epoch: e,
            seed: enc.hash(),
        }
    }

    fn nodes(n: u64) -> BTreeSet<NodeId> {
        (0..n).map(NodeId).collect()
    }

    #[test]
    fn sqrt_rule_calibration() {
        let inter = |x: u64| x * MICRO_PER_INTER;
        assert_eq!(swarm_size(inter(1), 35, u64::MAX), 35);
        assert_eq!(swarm_size(inter(4), 35, u64::MAX), 70);
        assert_eq!(swarm_size(inter(16), 35, u64::MAX), 140);
        assert_eq!(swarm_size(inter(1_000_000), 35, u64::MAX), 35_000);
        assert_eq!(swarm_size(inter(1_000_000), 35, 500), 500);
        assert_eq!(swarm_size(0, 35, 500), 0);
        assert_eq!(swarm_size(1, 35, 500), 1);
    }

    #[test]
    fn sqrt_rule_against_float_oracle() {
        for k in 0..2000u64 {
            let inter = k * k * 7919 + 13;
            let oracle = (35.0 * (inter as f64 / 1e6).sqrt()).ceil() as u64;
            let got = swarm_size(inter, 35, u64::MAX);
            assert!(got.abs_diff(oracle) <= 1, "inter={inter}");
        }
    }

    #[test]
    fn quadrupling_doubles() {
        for inter in (1..500u64).map(|k| k * 12_345) {
            let a = swarm_size(inter, 35, u64::MAX);
            let b = swarm_size(4 * inter, 35, u64::MAX);
            assert!(b.abs_diff(2 * a) <= 1, "inter={inter}");
            let capped = swarm_size(4 * inter, 35, 60);
            assert!(capped.abs_diff((2 * a).min(60)) <= 1);
        }
    }

    #[test]
    fn hoepman_values() {
        let b = hoepman_min_swarm(1, 30.0, 1.0 / 3.0).unwrap();
        assert_eq!(b.n_min, 95);
        assert!((b.beta - 27.307).abs() < 1e-3);
        assert!(hoepman_min_swarm(1, 30.0, 1.0).is_err());
        assert!(hoepman_min_swarm(0, 30.0, 0.3).is_err());
        assert!(hoepman_min_swarm(1, -1.0, 0.3).is_err());
    }

    #[test]
    fn staking_boundary() {
        assert!(staking_eligible(1_000_000, 35_000_000, 35));
        assert!(!staking_eligible(999_999, 35_000_000, 35));
        assert!(staking_eligible(0, 0, 35));
    }

    #[test]
    fn assignment_is_deterministic_and_verifiable() {
        let s = seed(3, 0);
        let pool = nodes(100);
        let a = assign_swarm(&s, StreamId(1), 35, &pool).unwrap();
        assert_eq!(a, assign_swarm(&s, StreamId(1), 35, &pool).unwrap());
        assert_eq!(a.size(), 35);
        assert!(a.members.is_subset(&pool));
        assert!(verify_assignment(&s, &a, &pool));
        let mut forged = a.clone();
        forged.members.pop_first();
        forged.members.insert(NodeId(1000));
        assert!(!verify_assignment(&s, &forged, &pool));
    }

    #[test]
    fn full_pool_and_shortfall() {
        let s = seed(0, 0);
        let pool = nodes(10);
        assert_eq!(assign_swarm(&s, StreamId(1), 10, &pool).unwrap().members, pool);
        assert_eq!(
            assign_swarm(&s, StreamId(1), 11, &pool),
            Err(EpochError::InsufficientEligibleNodes {
                needed: 11,
                available: 10
            })
        );
    }

    #[test]
    fn seed_must_exist_before_assignment() {
        let mut sched = SeedSchedule::new();
        let pool = nodes(50);
        assert_eq!(
            sched.assign(4, StreamId(1), 10, &pool),
            Err(EpochError::SeedUnavailable(4))
        );
        let contribs: Vec<_> = (0..5).map(|i| Contribution::honest(NodeId(i), vec![i as u8])).collect();
        sched.complete_round(4, &contribs);
        assert!(sched.assign(4, StreamId(1), 10, &pool).is_ok());
        assert!(sched.assign(5, StreamId(1), 10, &pool).is_err());
    }

    #[test]
    fn overlap_matches_hypergeometric_mean() {
        // two streams, same seed: overlap of two n-subsets of N
        let (big_n, n, trials) = (100u64, 35usize, 1000u64);
        let pool = nodes(big_n);
        let mut total = 0usize;
        for t in 0..trials {
            let s = seed(t, 1);
            let a = assign_swarm(&s, StreamId(1), n, &pool).unwrap();
            let b = assign_swarm(&s, StreamId(2), n, &pool).unwrap();
            total += a.members.intersection(&b.members).count();
        }
        let nf = n as f64;
        let nn = big_n as f64;
        let mean = nf * nf / nn;
        let var = nf * (nf / nn) * (1.0 - nf / nn) * (nn - nf) / (nn - 1.0);
        let observed = total as f64 / trials as f64;
        let sigma = (var / trials as f64).sqrt();
        assert!((observed - mean).abs() <= 5.0 * sigma, "{observed} vs {mean}");
    }

    #[test]
    fn shuffle_membership_is_uniform() {
        let (big_n, n, epochs) = (60u64, 20usize, 1000u64);
        let pool = nodes(big_n);
        let mut hits = vec![0u64; big_n as usize];
        for e in 0..epochs {
            for v in assign_swarm(&seed(e, 2), StreamId(5), n, &pool).unwrap().members {
                hits[v.0 as usize] += 1;
            }
        }
        let p = n as f64 / big_n as f64;
        let mean = epochs as f64 * p;
        let sigma = (epochs as f64 * p * (1.0 - p)).sqrt();
        for (v, &h) in hits.iter().enumerate() {
            assert!((h as f64 - mean).abs() <= 5.0 * sigma, "node {v}: {h}");
        }
    }
}
