//! Round-based random push gossip, used to measure PoC delivery.
//!
//! The population is `juniors` junior observers plus one client, which is
//! the last index. Each round every forwarding holder sends the item to
//! `κ` peers drawn independently and uniformly from everyone but itself.
//! Adversarial juniors occupy the lowest indices and, when suppressing,
//! never forward. The origin is the first honest junior, so exactly a
//! fraction `f_J` of its candidate peers is adversarial when
//! `juniors · f_J` is an integer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::units::Fraction;

use super::config::GossipCell;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Population {
    pub juniors: u64,
    pub adversarial: u64,
    pub suppress: bool,
}

impl Population {
    pub fn new(juniors: u64, f_j: Fraction, suppress: bool) -> Self {
        Self {
            juniors,
            adversarial: f_j.floor_mul(juniors),
            suppress,
        }
    }

    pub fn size(&self) -> usize {
        self.juniors as usize + 1
    }

    pub fn client(&self) -> usize {
        self.juniors as usize
    }

    pub fn origin(&self) -> usize {
        self.adversarial as usize
    }

    pub fn is_adversarial(&self, v: usize) -> bool {
        (v as u64) < self.adversarial
    }

    fn forwards(&self, v: usize) -> bool {
        !(self.suppress && self.is_adversarial(v))
    }
}

/// Who received the item in which round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Broadcast {
    /// `received[v]` is the round in which `v` first got the item; the
    /// origin has round 0.
    pub received: Vec<Option<u64>>,
    /// Every push, as `(round, from, to)`.
    pub pushes: Vec<(u64, u32, u32)>,
}

impl Broadcast {
    pub fn holders_by(&self, round: u64) -> usize {
        self.received.iter().filter(|r| r.is_some_and(|r| r <= round)).count()
    }
}

fn pick_peer<R: Rng>(rng: &mut R, n: usize, from: usize) -> usize {
    let p = rng.gen_range(0..n - 1);
    if p >= from {
        p + 1
    } else {
        p
    }
}

/// Full delivery schedule for `rounds` rounds from `origin`.
pub fn gossip_broadcast<R: Rng>(
    pop: &Population,
    origin: usize,
    kappa: u64,
    rounds: u64,
    rng: &mut R,
) -> Broadcast {
    let n = pop.size();
    let mut received = vec![None; n];
    received[origin] = Some(0);
    let mut holders = vec![origin];
    let mut pushes = Vec::new();
    for round in 1..=rounds {
        let mut fresh = Vec::new();
        for &h in &holders {
            if !pop.forwards(h) || n < 2 {
                continue;
            }
            for _ in 0..kappa {
                let to = pick_peer(rng, n, h);
                pushes.push((round, h as u32, to as u32));
                if received[to].is_none() {
                    received[to] = Some(round);
                    fresh.push(to);
                }
            }
        }
        holders.extend(fresh);
    }
    Broadcast { received, pushes }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialOutcome {
    /// Some honest node besides the origin held the item after `rounds`.
    pub escaped: bool,
    /// The client held the item by the end of the epoch.
    pub client_reached: bool,
}

/// One trial from the standard origin, stopping early once both outcomes
/// are settled.
pub fn gossip_trial<R: Rng>(
    pop: &Population,
    kappa: u64,
    rounds: u64,
    epoch_rounds: u64,
    rng: &mut R,
    have: &mut Vec<bool>,
    holders: &mut Vec<usize>,
) -> TrialOutcome {
    let n = pop.size();
    let (origin, client) = (pop.origin(), pop.client());
    have.clear();
    have.resize(n, false);
    holders.clear();
    have[origin] = true;
    holders.push(origin);
    let mut escaped = false;
    for round in 1..=epoch_rounds.max(rounds) {
        let current = holders.len();
        for i in 0..current {
            let h = holders[i];
            if !pop.forwards(h) {
                continue;
            }
            for _ in 0..kappa {
                let to = pick_peer(rng, n, h);
                if !have[to] {
                    have[to] = true;
                    holders.push(to);
                    if !pop.is_adversarial(to) && round <= rounds {
                        escaped = true;
                    }
                }
            }
        }
        if round >= rounds && have[client] {
            break;
        }
    }
    TrialOutcome {
        escaped,
        client_reached: have[client],
    }
}

/// Monte Carlo result for one `(f_J, κ, r)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub f_j: Fraction,
    pub kappa: u64,
    pub rounds: u64,
    pub trials: u64,
    pub seed: u64,
    pub escape_failures: u64,
    pub non_deliveries: u64,
    pub escape_failure_rate: f64,
    pub non_delivery_rate: f64,
    /// `f_J^{κr}`.
    pub bound: f64,
    /// Binomial standard deviation at the bound.
    pub sigma: f64,
    pub pass: bool,
}

pub fn analytic_bound(f_j: Fraction, kappa: u64, rounds: u64) -> f64 {
    f_j.to_f64().powi((kappa * rounds) as i32)
}

pub fn measure_cell(
    cell: &GossipCell,
    juniors: u64,
    epoch_rounds: u64,
    suppress: bool,
    trials: u64,
    seed: u64,
) -> CellResult {
    let GossipCell { f_j, kappa, rounds } = *cell;
    let pop = Population::new(juniors, f_j, suppress);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut have, mut holders) = (Vec::new(), Vec::new());
    let (mut escape_failures, mut non_deliveries) = (0, 0);
    for _ in 0..trials {
        let t = gossip_trial(&pop, kappa, rounds, epoch_rounds, &mut rng, &mut have, &mut holders);
        escape_failures += u64::from(!t.escaped);
        non_deliveries += u64::from(!t.client_reached);
    }
    let bound = analytic_bound(f_j, kappa, rounds);
    let sigma = (bound * (1.0 - bound) / trials.max(1) as f64).sqrt();
    let escape_failure_rate = escape_failures as f64 / trials.max(1) as f64;
    let non_delivery_rate = non_deliveries as f64 / trials.max(1) as f64;
    let limit = bound + 3.0 * sigma;
    CellResult {
        f_j,
        kappa,
        rounds,
        trials,
        seed,
        escape_failures,
        non_deliveries,
        escape_failure_rate,
        non_delivery_rate,
        bound,
        sigma,
        pass: escape_failure_rate <= limit && non_delivery_rate <= limit,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn honest_world_reaches_everyone() {
        let pop = Population::new(60, Fraction::new(0, 1), true);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut coverage = Vec::new();
        for r in 1..=6 {
            let mut total = 0;
            for _ in 0..200 {
                total += gossip_broadcast(&pop, 0, 5, r, &mut rng).holders_by(r);
            }
            coverage.push(total as f64 / (200.0 * pop.size() as f64));
        }
        assert!(coverage.windows(2).all(|w| w[0] <= w[1]));
        assert!(coverage[5] > 0.99, "{coverage:?}");
    }

    #[test]
    fn suppressing_adversarial_origin_delivers_nothing() {
        let pop = Population::new(60, Fraction::new(1, 2), true);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let b = gossip_broadcast(&pop, 0, 5, 10, &mut rng);
        assert!(b.pushes.is_empty());
        assert_eq!(b.holders_by(10), 1);
    }

    #[test]
    fn origin_sees_exact_adversarial_fraction() {
        let pop = Population::new(60, Fraction::new(1, 3), true);
        assert_eq!(pop.adversarial, 20);
        assert!(!pop.is_adversarial(pop.origin()));
    }

    #[test]
    fn escape_failure_tracks_the_bound() {
        // f = 1/2, κ = 1, r = 2: bound 1/4
        let c = measure_cell(&GossipCell { f_j: Fraction::new(1, 2), kappa: 1, rounds: 2 }, 60, 20, true, 20_000, 1);
        assert!((c.escape_failure_rate - 0.25).abs() < 0.02, "{c:?}");
        assert!(c.pass);
    }
}
