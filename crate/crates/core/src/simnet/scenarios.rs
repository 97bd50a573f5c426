//! Scenario drivers. Each builds its worlds from the config and folds the
//! outcomes into a [`RunReport`].

use std::collections::{BTreeMap, BTreeSet};

use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rand::seq::{IteratorRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::crypto::{Digest, Encoder, EpochSeed, KeyPair, NodeId};
use crate::economy::{corrupt_payoff_bound, min_supermajority_bribe, Ledger};
use crate::ripple::{trace_ripple_with, RippleId, RippleMessage, SeenTable};
use crate::stream::{
    apply_transfer, relate, serialize_concurrent, InvalidReason, MessageKind, RateLimit, Rules,
    Stream, TransferError, TransferRequest,
};
use crate::topology::Topology;
use crate::units::{CoinId, ExchangeRate, MicroInter, StreamId, MICRO_PER_INTER};

use super::config::{
    CorruptionParams, DisagreementParams, DoubleSpendParams, EconomySoakParams, GossipCell,
    GossipMeasureParams, RippleTraceParams, SimConfig,
};
use super::gossip::measure_cell;
use super::report::{AuditRow, RippleSummary, RunReport, StatRow, WorldSample};
use super::world::{Attack, SimWorld, Targets, WorldOutcome, WorldSpec, WATCHED};
use super::{batch, SimError};

/// Independent seed for run `i` of `suite`.
pub fn run_seed(seed: u64, suite: &str, i: u64) -> u64 {
    let mut enc = Encoder::tagged("ic/sim-run");
    enc.u64(seed).bytes(suite.as_bytes()).u64(i);
    enc.hash().prefix_u64()
}

/// The conflicting hash adversaries present in `epoch`.
pub fn fake_head(epoch: u64) -> Digest {
    let mut enc = Encoder::tagged("ic/sim-fake");
    enc.u64(WATCHED.0).u64(epoch);
    enc.hash()
}

fn spec_with(cfg: &SimConfig, seed: u64, watchers: u64, juniors: u64, clients: u64, swarm: u64) -> WorldSpec {
    let mut s = WorldSpec::from_config(cfg);
    s.seed = seed;
    s.watchers = watchers;
    s.juniors = juniors;
    s.clients = clients;
    s.swarm_size = swarm as usize;
    s
}

fn fold(report: &mut RunReport, o: &WorldOutcome) {
    report.yellow.add(o);
    report.conflicting_finality += o.conflicting_epochs.len() as u64;
    if !o.audits_ok() {
        report.audits_ok = false;
        for a in o.audits.iter().filter(|a| !a.audit.ok()) {
            report.audits.push(AuditRow {
                label: format!("world {} epoch {}", o.seed, a.epoch),
                tick: a.tick,
                audit: a.audit.clone(),
            });
        }
    }
}

fn sample(report: &mut RunReport, label: impl Into<String>, o: &WorldOutcome) {
    report.samples.push(WorldSample {
        label: label.into(),
        outcome: o.clone(),
    });
}

fn yellow_checks(report: &mut RunReport) {
    let y = report.yellow.clone();
    report.check(
        "bounded_yellow",
        y.bounded(report.t_ep),
        format!(
            "max Yellow within an epoch {} (T_ep {}), {} honest epochs without Green, {} late Red exits over {} worlds",
            y.max_yellow_within_epoch, report.t_ep, y.honest_epochs_without_green, y.red_exit_violations, y.worlds
        ),
    );
}

// ---------------------------------------------------------------- double spend

const DS_COIN: CoinId = CoinId(1);
const DS_SENDER: StreamId = StreamId(10);

struct Spend {
    head: Digest,
    applied: usize,
    rejected: Vec<TransferError>,
    transfers_logged: usize,
}

fn ds_keys(k: usize) -> (KeyPair, Vec<KeyPair>) {
    let sender = KeyPair::from_seed(b"ic/sim-ds-sender");
    let receivers = (0..k)
        .map(|i| KeyPair::from_seed(format!("ic/sim-ds-receiver-{i}").as_bytes()))
        .collect();
    (sender, receivers)
}

fn ds_streams(p: &DoubleSpendParams, sk: &KeyPair, rks: &[KeyPair]) -> (Stream, Vec<Stream>) {
    let mut sender = Stream::new(DS_SENDER, sk.public.clone(), p.balance as MicroInter, Rules::Plain);
    sender.balances.insert(DS_COIN, p.balance);
    let mut receivers = Vec::new();
    for (i, rk) in rks.iter().enumerate() {
        let mut r = Stream::new(StreamId(11 + i as u64), rk.public.clone(), 0, Rules::Plain);
        relate(&mut sender, &mut r, RateLimit::Unlimited, BTreeSet::from([DS_COIN]), 0, sk)
            .expect("fresh streams relate");
        receivers.push(r);
    }
    (sender, receivers)
}

fn ds_request(p: &DoubleSpendParams, i: usize, ts: u64) -> TransferRequest {
    TransferRequest::new(DS_SENDER, StreamId(11 + i as u64), DS_COIN, p.balance, ts)
}

/// Applies the requests in the given order, each spending the full balance.
fn execute(p: &DoubleSpendParams, order: &[TransferRequest]) -> Spend {
    let (sk, rks) = ds_keys(p.conflicting);
    let (mut sender, mut receivers) = ds_streams(p, &sk, &rks);
    let (mut applied, mut rejected) = (0, Vec::new());
    for req in order {
        let i = (req.to.0 - 11) as usize;
        match apply_transfer(&mut sender, &mut receivers[i], req, &ExchangeRate::peg(1), 1, &sk, &rks[i]) {
            Ok(_) => applied += 1,
            Err(e) => rejected.push(e),
        }
    }
    Spend {
        head: sender.head(),
        applied,
        transfers_logged: sender.log().iter().filter(|m| m.kind == MessageKind::Transfer).count(),
        rejected,
    }
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for rest in permutations(k - 1) {
        for pos in 0..=rest.len() {
            let mut p = rest.clone();
            p.insert(pos, k - 1);
            out.push(p);
        }
    }
    out.sort();
    out
}

fn run_double_spend(cfg: &SimConfig, p: &DoubleSpendParams, report: &mut RunReport) -> Result<(), SimError> {
    let k = p.conflicting;
    let small = |seed: u64| {
        let mut s = spec_with(cfg, seed, 4, 0, 1, 4);
        s.epochs = 1;
        s
    };

    // sequential: the second spend of the same balance is invalid
    let (sk, rks) = ds_keys(k);
    let (mut sender, mut receivers) = ds_streams(p, &sk, &rks);
    let first = apply_transfer(&mut sender, &mut receivers[0], &ds_request(p, 0, 0), &ExchangeRate::peg(1), 1, &sk, &rks[0]);
    let second = apply_transfer(&mut sender, &mut receivers[1], &ds_request(p, 1, 1), &ExchangeRate::peg(1), 2, &sk, &rks[1]);
    report.check(
        "sequential_second_invalid",
        first.is_ok() && matches!(second, Err(TransferError::Invalid(InvalidReason::InsufficientBalance))),
        format!("first {:?}, second {:?}", first.map(|_| ()), second.map(|_| ())),
    );

    let mut combos = 0u64;
    let mut honest_ok = true;
    let mut honest_detail = String::new();
    let mut adversarial_worlds = 0u64;
    let mut adversarial_ok = true;
    let mut adversarial_detail = String::new();
    let mut world_index = 0u64;
    for mask in 0..(1u64 << k) {
        let ts: Vec<u64> = (0..k).map(|i| (mask >> i) & 1).collect();
        let mut heads = BTreeSet::new();
        for perm in permutations(k) {
            combos += 1;
            let arrivals: Vec<TransferRequest> = perm.iter().map(|&i| ds_request(p, i, ts[i])).collect();
            let spend = execute(p, &serialize_concurrent(arrivals));
            let rejections_ok = spend.rejected.iter().all(|e| {
                matches!(e, TransferError::Invalid(InvalidReason::InsufficientBalance))
            });
            if spend.applied != 1 || spend.transfers_logged != 1 || !rejections_ok {
                honest_ok = false;
                honest_detail = format!("ts {ts:?} order {perm:?}: {} applied", spend.applied);
            }
            heads.insert(spend.head);
        }
        if heads.len() != 1 {
            honest_ok = false;
            honest_detail = format!("ts {ts:?}: {} distinct heads across orders", heads.len());
        }
        let real = *heads.iter().next().expect("at least one order");

        world_index += 1;
        let out = SimWorld::new(small(run_seed(cfg.seed, "double_spend", world_index)), vec![real])?.run();
        fold(report, &out);
        let greens: BTreeSet<Digest> = out.certificates_in(0).map(|c| c.hash).collect();
        if greens != BTreeSet::from([real]) {
            honest_ok = false;
            honest_detail = format!("ts {ts:?}: Green hashes {greens:?}");
        }
        if mask == 0 {
            sample(report, "honest", &out);
        }

        if !p.adversarial {
            continue;
        }
        let mut reversed = serialize_concurrent((0..k).map(|i| ds_request(p, i, ts[i])).collect());
        reversed.reverse();
        let fake = execute(p, &reversed).head;
        if fake == real {
            adversarial_ok = false;
            adversarial_detail = format!("ts {ts:?}: reversed order gives the same head");
            continue;
        }
        for subset in 1u64..16 {
            world_index += 1;
            let mut w = SimWorld::new(small(run_seed(cfg.seed, "double_spend", world_index)), vec![real])?;
            let attackers: BTreeSet<NodeId> = (0..4).filter(|i| subset >> i & 1 == 1).map(NodeId).collect();
            w.set_attack(Attack {
                watchers: attackers,
                fake_hash: Some(fake),
                ..Attack::default()
            })?;
            let out = w.run();
            fold(report, &out);
            adversarial_worlds += 1;
            let pocs = out.verified_pocs(0);
            let greens = out.certificates_in(0).count();
            if pocs == 0 || greens != 0 {
                adversarial_ok = false;
                adversarial_detail = format!("ts {ts:?} attackers {subset:04b}: {pocs} PoCs, {greens} Green");
            }
            if mask == 0 && subset == 1 {
                sample(report, "adversarial", &out);
            }
        }
    }
    report.check(
        "concurrent_single_green",
        honest_ok,
        if honest_ok {
            format!("{combos} order and timestamp combinations, one applied transfer and one Green hash each")
        } else {
            honest_detail
        },
    );
    if p.adversarial {
        report.check(
            "divergent_hash_poc_no_green",
            adversarial_ok,
            if adversarial_ok {
                format!("{adversarial_worlds} attacker subsets and timestamps, each with a PoC and no Green")
            } else {
                adversarial_detail
            },
        );
    }
    report.stat("order_combinations", combos);
    report.stat("adversarial_worlds", adversarial_worlds);
    Ok(())
}

// ----------------------------------------------------------------- disagreement

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Isolation {
    /// Both clients cut from every honest node.
    Full,
    /// Each client keeps one honest neighbour.
    Partial,
    None,
}

struct Construction {
    n: u64,
    attackers: usize,
    isolation: Isolation,
}

/// The four-phase construction: attackers sign both hashes, deliver each to
/// one client only, forge digests and suppress every PoC.
fn construction(cfg: &SimConfig, seed: u64, c: &Construction) -> Result<WorldOutcome, SimError> {
    let spec = spec_with(cfg, seed, 2 * c.n, cfg.network.juniors, 2, c.n);
    let mut clients = spec.clients();
    let (c1, c2) = (clients.next().expect("two clients"), clients.next().expect("two clients"));
    let node_count = spec.node_count();
    let mut w = SimWorld::new(spec, vec![])?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let members: Vec<NodeId> = w.swarm().iter().copied().collect();
    let attackers: BTreeSet<NodeId> = members.choose_multiple(&mut rng, c.attackers).copied().collect();
    let honest: Vec<NodeId> = (0..node_count)
        .map(NodeId)
        .filter(|v| !attackers.contains(v) && *v != c1 && *v != c2)
        .collect();
    let mut cuts = Vec::new();
    let mut eclipsed = BTreeSet::new();
    match c.isolation {
        Isolation::Full => eclipsed.extend([c1, c2]),
        Isolation::Partial => {
            cuts.push((c1, c2));
            for client in [c1, c2] {
                let keep = *honest.choose(&mut rng).expect("honest nodes exist");
                cuts.extend(honest.iter().filter(|&&h| h != keep).map(|&h| (client, h)));
            }
        }
        Isolation::None => {}
    }
    w.set_attack(Attack {
        fake_hash: (!attackers.is_empty()).then(|| fake_head(0)),
        watchers: attackers,
        real_to: Targets::Only(BTreeSet::from([c1])),
        fake_to: Targets::Only(BTreeSet::from([c2])),
        forge_digests: true,
        suppress: true,
        eclipsed,
        cuts,
        ..Attack::default()
    })?;
    Ok(w.run())
}

fn both_clients_warned(o: &WorldOutcome) -> bool {
    let reached: BTreeSet<NodeId> = o
        .pocs
        .iter()
        .filter(|p| p.epoch == 0)
        .flat_map(|p| p.clients_reached.iter().copied())
        .collect();
    o.timelines.keys().all(|c| reached.contains(c))
}

fn run_disagreement(cfg: &SimConfig, p: &DisagreementParams, report: &mut RunReport) -> Result<(), SimError> {
    // sufficiency: (I) and (II) together
    for &n in &p.sufficiency_sizes {
        let attackers = (2 * n / 3 + 1) as usize;
        let outs = batch(p.sufficiency_runs, |i| {
            let seed = run_seed(cfg.seed, &format!("sufficiency-{n}"), i);
            construction(cfg, seed, &Construction { n, attackers, isolation: Isolation::Full })
        });
        let mut conflicting = 0;
        for (i, o) in outs.into_iter().enumerate() {
            let o = o?;
            conflicting += u64::from(o.conflicting_epochs.contains(&0));
            fold(report, &o);
            if i == 0 {
                sample(report, format!("sufficiency n={n}"), &o);
            }
        }
        let runs = p.sufficiency_runs;
        report.check(
            &format!("sufficiency_n{n}"),
            conflicting == runs && runs > 0,
            format!("|A| = {attackers}, dual eclipse: conflicting finality in {conflicting}/{runs} runs"),
        );
        report.table.push(StatRow {
            suite: "sufficiency".into(),
            cell: format!("n={n}"),
            statistic: "conflicting_rate".into(),
            value: conflicting as f64 / runs.max(1) as f64,
            bound: Some(1.0),
            pass: conflicting == runs,
        });
        report.stat(&format!("sufficiency_n{n}_conflicting"), conflicting);
    }

    // necessity: at most 2/3 compromised, every client keeps an honest path
    let families: [(&str, u64, Isolation); 3] = [
        ("necessity", p.necessity_runs, Isolation::Partial),
        ("compromise_only", p.control_runs, Isolation::None),
        ("eclipse_only", p.control_runs, Isolation::Full),
    ];
    let sizes = &p.necessity_sizes;
    for (family, runs, isolation) in families {
        let outs = batch(runs, |i| {
            let seed = run_seed(cfg.seed, family, i);
            let n = sizes[i as usize % sizes.len()];
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let attackers = match isolation {
                Isolation::Partial => rng.gen_range(0..=2 * n / 3),
                Isolation::None => 2 * n / 3 + 1,
                Isolation::Full => rng.gen_range(0..=n / 3),
            } as usize;
            construction(cfg, seed, &Construction { n, attackers, isolation }).map(|o| (n, attackers, o))
        });
        let (mut conflicting, mut attacked, mut warned) = (0u64, 0u64, 0u64);
        for (i, r) in outs.into_iter().enumerate() {
            let (n, attackers, o) = r?;
            conflicting += o.conflicting_epochs.len() as u64;
            if attackers > 0 {
                attacked += 1;
                warned += u64::from(both_clients_warned(&o));
            }
            fold(report, &o);
            if i < sizes.len() && attackers > 0 {
                sample(report, format!("{family} n={n} |A|={attackers}"), &o);
            }
        }
        let warned_ok = isolation == Isolation::Full || warned == attacked;
        report.check(
            family,
            conflicting == 0 && warned_ok,
            format!(
                "{runs} runs: {conflicting} conflicting finalities; PoCs reached both clients in {warned}/{attacked} attacked runs"
            ),
        );
        report.table.push(StatRow {
            suite: family.into(),
            cell: format!("sizes={sizes:?}"),
            statistic: "conflicting_count".into(),
            value: conflicting as f64,
            bound: Some(0.0),
            pass: conflicting == 0,
        });
        report.stat(&format!("{family}_conflicting"), conflicting);
        report.stat(&format!("{family}_runs"), runs);
    }

    // honest controls
    let outs = batch(p.control_runs, |i| {
        let seed = run_seed(cfg.seed, "control", i);
        let n = sizes[i as usize % sizes.len()];
        construction(cfg, seed, &Construction { n, attackers: 0, isolation: Isolation::None })
    });
    let mut greens = 0;
    for o in outs {
        let o = o?;
        greens += u64::from(o.honest_epochs_without_green.is_empty());
        fold(report, &o);
    }
    report.check(
        "honest_control",
        greens == p.control_runs,
        format!("{greens}/{} honest worlds Green every epoch", p.control_runs),
    );
    Ok(())
}

// ------------------------------------------------------------------- corruption

struct CorruptionRun {
    colluders: u64,
    evaded: u64,
    fake_certified: bool,
    payoff_sum: BigRational,
    red: bool,
    outcome: WorldOutcome,
}

fn corruption_world(
    cfg: &SimConfig,
    p: &CorruptionParams,
    seed: u64,
    colluders: u64,
    stealth: bool,
) -> Result<CorruptionRun, SimError> {
    let spec = spec_with(cfg, seed, p.pool, cfg.network.juniors, cfg.network.clients, p.swarm);
    let juniors: Vec<NodeId> = spec.juniors().collect();
    let mut w = SimWorld::new(spec, vec![])?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc0de);
    let members: Vec<NodeId> = w.swarm().iter().copied().collect();
    let colluding: BTreeSet<NodeId> = members.choose_multiple(&mut rng, colluders as usize).copied().collect();
    let bad_juniors: BTreeSet<NodeId> = juniors
        .choose_multiple(&mut rng, cfg.adversary.junior_fraction.floor_mul(juniors.len() as u64) as usize)
        .copied()
        .collect();
    let fake_to = match juniors.choose(&mut rng) {
        Some(&j) if stealth => Targets::Only(BTreeSet::from([j])),
        _ => Targets::All,
    };
    let fake = fake_head(0);
    w.set_attack(Attack {
        watchers: colluding.clone(),
        juniors: bad_juniors,
        fake_hash: Some(fake),
        fake_to,
        suppress: cfg.adversary.suppress_pocs,
        eclipsed: cfg.adversary.eclipsed_clients.iter().map(|&c| NodeId(p.pool + cfg.network.juniors + c)).collect(),
        ..Attack::default()
    })?;
    let outcome = w.run();
    let fake_certified = outcome
        .certificates_in(0)
        .any(|c| c.hash == fake && !outcome.eclipsed.contains(&c.client));
    let g = BigRational::from_integer(p.gain.into());
    let mut payoff_sum = BigRational::zero();
    let mut evaded = 0;
    for v in &colluding {
        let slashed = outcome.slashed.get(v).copied().unwrap_or(0);
        evaded += u64::from(slashed == 0);
        let gain = if fake_certified { g.clone() } else { BigRational::zero() };
        payoff_sum += gain - BigRational::from_integer(slashed.into());
    }
    let red = outcome.timelines.values().flatten().any(|(t, c)| *t < outcome.t_ep && *c == crate::consensus::Colour::Red);
    Ok(CorruptionRun {
        colluders,
        evaded,
        fake_certified,
        payoff_sum,
        red,
        outcome,
    })
}

fn run_corruption(cfg: &SimConfig, p: &CorruptionParams, report: &mut RunReport) -> Result<(), SimError> {
    let g = BigRational::from_integer(p.gain.into());
    let ell = BigRational::from_integer(cfg.network.node_stake.into());
    let runs = batch(p.runs, |i| corruption_world(cfg, p, run_seed(cfg.seed, "corruption", i), p.colluders, p.stealth));

    let (mut within, mut red_runs, mut certified) = (0u64, 0u64, 0u64);
    let (mut total_colluders, mut total_evaded) = (0u64, 0u64);
    let mut payoff_total = BigRational::zero();
    let mut worst = None::<(f64, f64)>;
    let mut suppressor_winnings: MicroInter = 0;
    let mut forwarder_runs = 0u64;
    let mut runs_with_pocs = 0u64;
    let mut fresh_green = true;
    for (i, r) in runs.into_iter().enumerate() {
        let r = r?;
        fold(report, &r.outcome);
        if r.colluders == 0 {
            continue;
        }
        let k = BigRational::from_integer(r.colluders.into());
        let p_hat = BigRational::new(r.evaded.into(), r.colluders.into());
        let mean = &r.payoff_sum / &k;
        let bound = corrupt_payoff_bound(&g, &ell, &p_hat);
        within += u64::from(mean <= bound);
        let gap = (mean.to_f64().unwrap_or(f64::NAN), bound.to_f64().unwrap_or(f64::NAN));
        if worst.is_none_or(|w| gap.0 - gap.1 > w.0 - w.1) {
            worst = Some(gap);
        }
        total_colluders += r.colluders;
        total_evaded += r.evaded;
        payoff_total += r.payoff_sum;
        red_runs += u64::from(r.red);
        certified += u64::from(r.fake_certified);
        suppressor_winnings += r
            .outcome
            .attackers
            .iter()
            .map(|v| r.outcome.winnings.get(v).copied().unwrap_or(0))
            .sum::<MicroInter>();
        if !r.outcome.pocs.is_empty() {
            runs_with_pocs += 1;
            forwarder_runs += u64::from(r.outcome.winnings.keys().any(|v| !r.outcome.attackers.contains(v)));
        }
        fresh_green &= r.outcome.honest_epochs_without_green.is_empty();
        if i == 0 {
            sample(report, format!("corruption {} of {}", p.colluders, p.swarm), &r.outcome);
        }
    }
    let counted = if p.colluders == 0 { 0 } else { p.runs };
    report.check(
        "payoff_within_bound",
        within == counted,
        format!("{within}/{counted} runs with mean colluder payoff <= g - (1 - p_evade) * stake; worst (payoff, bound) {worst:?}"),
    );
    if total_colluders > 0 {
        let p_all = BigRational::new(total_evaded.into(), total_colluders.into());
        let mean = &payoff_total / BigRational::from_integer(total_colluders.into());
        let bound = corrupt_payoff_bound(&g, &ell, &p_all);
        report.check(
            "mean_payoff_within_bound",
            mean <= bound,
            format!(
                "mean {:.3} <= bound {:.3} at p_evade {:.4}",
                mean.to_f64().unwrap_or(f64::NAN),
                bound.to_f64().unwrap_or(f64::NAN),
                p_all.to_f64().unwrap_or(f64::NAN)
            ),
        );
        report.stat("p_evade", p_all.to_f64().unwrap_or(f64::NAN));
        report.stat("mean_payoff", mean.to_f64().unwrap_or(f64::NAN));
    }
    let over = 3 * p.colluders > 2 * p.swarm;
    if !p.stealth && p.colluders > 0 {
        let expect = if over { p.runs } else { 0 };
        report.check(
            "red_threshold",
            red_runs == expect,
            format!("{red_runs}/{} runs Red with {} of {} equivocating", p.runs, p.colluders, p.swarm),
        );
    }
    report.check(
        "fresh_swarm_green",
        fresh_green,
        "every non-eclipsed client reaches Green in epochs without an active equivocator",
    );
    if cfg.adversary.suppress_pocs {
        report.check(
            "suppressors_earn_nothing",
            suppressor_winnings == 0,
            format!("suppressing nodes won {suppressor_winnings} µINTER"),
        );
    }
    report.check(
        "forwarders_rewarded",
        forwarder_runs == runs_with_pocs,
        format!("honest forwarders won a pool in {forwarder_runs}/{runs_with_pocs} runs with PoCs"),
    );
    report.stat("red_runs", red_runs);
    report.stat("fake_certified_runs", certified);

    // a single equivocator: caught, slashed, never Red, never certified
    let singles = (p.runs / 10).max(1);
    let mut single_ok = 0;
    for r in batch(singles, |i| corruption_world(cfg, p, run_seed(cfg.seed, "single", i), 1, false)) {
        let r = r?;
        fold(report, &r.outcome);
        let liar = *r.outcome.attackers.iter().find(|v| r.outcome.swarms[0].contains(v)).expect("one colluder");
        let ok = r.outcome.verified_pocs(0) == 1
            && r.outcome.slashed.get(&liar) == Some(&cfg.network.node_stake)
            && !r.red
            && r.outcome.certificates.iter().all(|c| !c.members.contains(&liar));
        single_ok += u64::from(ok);
    }
    report.check(
        "single_equivocator",
        single_ok == singles,
        format!("{single_ok}/{singles} runs: one PoC, full slash, not Red, excluded from every certificate"),
    );

    let inter = cfg.network.stream_inter;
    let bribe = min_supermajority_bribe(inter, p.swarm);
    report.check(
        "min_bribe_exceeds_two_thirds",
        3 * bribe > 2 * inter as u128,
        format!("minimum supermajority bribe {bribe} µINTER against 2/3 of {inter}"),
    );
    report.stat("min_supermajority_bribe", bribe);
    report.table.push(StatRow {
        suite: "corruption".into(),
        cell: format!("colluders={} swarm={} stealth={}", p.colluders, p.swarm, p.stealth),
        statistic: "runs_within_bound".into(),
        value: within as f64,
        bound: Some(counted as f64),
        pass: within == counted,
    });
    Ok(())
}

// ---------------------------------------------------------------------- gossip

fn run_gossip(cfg: &SimConfig, p: &GossipMeasureParams, report: &mut RunReport) {
    let (kappa, rounds) = (cfg.gossip.kappa, cfg.gossip.rounds);
    let suppress = cfg.adversary.suppress_pocs;
    let main = measure_cell(&GossipCell { f_j: p.f_j, kappa, rounds }, p.juniors, p.epoch_rounds, suppress, p.trials, run_seed(cfg.seed, "gossip", 0));
    report.check(
        "headline_cell",
        main.pass && main.non_delivery_rate <= 1e-6,
        format!(
            "f_J={} κ={kappa} r={rounds}: escape failure {:.2e}, non-delivery {:.2e}, bound {:.2e} over {} trials",
            p.f_j, main.escape_failure_rate, main.non_delivery_rate, main.bound, main.trials
        ),
    );
    let cells = &p.grid;
    let results = batch(cells.len() as u64, |i| {
        let c = &cells[i as usize];
        measure_cell(c, p.juniors, p.epoch_rounds, suppress, p.grid_trials, run_seed(cfg.seed, "gossip", i + 1))
    });
    let failing: Vec<String> = results
        .iter()
        .filter(|c| !c.pass)
        .map(|c| format!("({}, {}, {})", c.f_j, c.kappa, c.rounds))
        .collect();
    report.check(
        "grid_within_3_sigma",
        failing.is_empty(),
        if failing.is_empty() {
            format!("{} cells within bound + 3σ", results.len())
        } else {
            format!("cells over bound + 3σ: {}", failing.join(", "))
        },
    );
    for (suite, c) in std::iter::once(("headline", &main)).chain(results.iter().map(|c| ("grid", c))) {
        let cell = format!("f_J={} κ={} r={}", c.f_j, c.kappa, c.rounds);
        let limit = c.bound + 3.0 * c.sigma;
        for (statistic, value) in [("escape_failure_rate", c.escape_failure_rate), ("non_delivery_rate", c.non_delivery_rate)] {
            report.table.push(StatRow {
                suite: suite.into(),
                cell: cell.clone(),
                statistic: statistic.into(),
                value,
                bound: Some(c.bound),
                pass: value <= limit,
            });
        }
    }
    report.gossip_cells.push(main);
    report.gossip_cells.extend(results);
}

// ---------------------------------------------------------------------- ripple

const FULL_TRACES: u64 = 3;

fn run_ripple(cfg: &SimConfig, p: &RippleTraceParams, report: &mut RunReport) {
    let summaries = batch(p.topologies, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(run_seed(cfg.seed, "ripple", i));
        let n = rng.gen_range(p.min_nodes..=p.max_nodes);
        let topo = Topology::random_connected(n, (n / 2) as usize, &mut rng);
        let origin = NodeId(rng.gen_range(0..n));
        let epoch = 1;
        let rid = RippleId {
            origin: StreamId(origin.0),
            msg_hash: crate::crypto::hash(&i.to_be_bytes()),
            epoch,
        };
        let msg = RippleMessage {
            rid,
            payload: i.to_be_bytes().to_vec(),
            hop_count: 0,
            fee_remaining: n * p.delta_fee,
        };
        let mut tables: BTreeMap<NodeId, SeenTable> = BTreeMap::new();
        let trace = trace_ripple_with(&mut tables, &topo, origin, msg.clone(), epoch, p.delta_fee);
        let reinject = |current: u64, tables: &mut BTreeMap<NodeId, SeenTable>| {
            for t in tables.values_mut() {
                t.evict(current);
            }
            trace_ripple_with(tables, &topo, origin, msg.clone(), current, p.delta_fee).nodes_processed.len() as u64
        };
        let same = reinject(epoch, &mut tables);
        let next = reinject(epoch + 1, &mut tables);
        let after = reinject(epoch + 2, &mut tables);
        let summary = RippleSummary {
            index: i,
            nodes: n,
            edges: topo.edge_count() as u64,
            diameter: topo.diameter(),
            fee: n * p.delta_fee,
            processed: trace.nodes_processed.len() as u64,
            max_hops: trace.max_hops,
            repeats: trace.repeats,
            duplicates_discarded: trace.duplicates_discarded,
            quiescent: trace.quiescent,
            reinjected_same_epoch: same,
            reinjected_next_epoch: next,
            reinjected_after_retention: after,
        };
        (summary, (i < FULL_TRACES).then_some(trace))
    });
    let mut bad = Vec::new();
    for (s, trace) in summaries {
        let ok = s.quiescent && s.max_hops <= s.nodes && s.repeats == 0 && s.processed == s.nodes;
        let dedup = s.reinjected_same_epoch == 0 && s.reinjected_next_epoch == 0 && s.reinjected_after_retention == 0;
        if !(ok && dedup) {
            bad.push(s.index);
        }
        report.ripple_summaries.push(s);
        report.ripple_traces.extend(trace);
    }
    let max_hops = report.ripple_summaries.iter().map(|s| s.max_hops).max().unwrap_or(0);
    report.check(
        "ripple_termination",
        bad.is_empty(),
        if bad.is_empty() {
            format!(
                "{} topologies: quiescent, every node once, max hops {max_hops}, re-injections discarded",
                p.topologies
            )
        } else {
            format!("failing topologies {bad:?}")
        },
    );
    report.stat("max_hops", max_hops);
}

// ----------------------------------------------------------------- economy soak

const SOAK_COUNTS: [&str; 12] = [
    "transfer", "transfer", "transfer", "emit", "retire", "deposit", "withdraw", "slash", "ticket", "draw",
    "vest_withdraw", "stake",
];

fn run_soak(cfg: &SimConfig, p: &EconomySoakParams, report: &mut RunReport) -> Result<(), SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(run_seed(cfg.seed, "soak", 0));
    let funding = 1_000 * MICRO_PER_INTER;
    let stake = 10 * MICRO_PER_INTER;
    let spare = 1_000 * MICRO_PER_INTER;
    let total = funding * p.streams + stake * p.nodes + spare;
    let mut ledger = Ledger::new(total, KeyPair::for_node(NodeId(u64::MAX), cfg.seed));
    let streams: Vec<StreamId> = (0..p.streams).map(|i| StreamId(100 + i)).collect();
    let coins: Vec<CoinId> = (1..=p.coins).map(CoinId).collect();
    let nodes: Vec<NodeId> = (0..p.nodes).map(NodeId).collect();
    for &s in &streams {
        ledger.create_stream(s, KeyPair::for_node(NodeId(1 << 32 | s.0), cfg.seed), Rules::Plain, funding, 0)?;
    }
    for (i, &c) in coins.iter().enumerate() {
        let base = streams[i];
        ledger.create_currency(c, base, RateLimit::linear(5 * MICRO_PER_INTER, 50))?;
        ledger.deposit(c, base, 100 * MICRO_PER_INTER, 0)?;
        ledger.emit(c, 100, base, 0)?;
    }
    for &a in &streams {
        for &b in &streams {
            if a != b {
                ledger.relate(a, b, RateLimit::Unlimited, coins.iter().copied().collect(), 0)?;
            }
        }
    }
    for &v in &nodes {
        ledger.stake(v, stake, 0)?;
    }
    let pocs: Vec<Digest> = (0..8u64).map(|i| crate::crypto::hash(&i.to_be_bytes())).collect();
    report.audits.push(AuditRow {
        label: "genesis".into(),
        tick: 0,
        audit: ledger.audit(),
    });

    let mut accepted: BTreeMap<&str, u64> = BTreeMap::new();
    let mut rejected: BTreeMap<&str, u64> = BTreeMap::new();
    let (mut conserved_every, mut backed_every) = (true, true);
    for i in 0..p.events {
        let tick = i + 1;
        let kind = SOAK_COUNTS[rng.gen_range(0..SOAK_COUNTS.len())];
        let s = *streams.choose(&mut rng).expect("streams");
        let c = *coins.choose(&mut rng).expect("coins");
        let v = *nodes.choose(&mut rng).expect("nodes");
        let balance = ledger.stream(s).map_or(0, |st| st.balance(c));
        let ok = match kind {
            "transfer" => {
                let to = *streams.iter().filter(|&&t| t != s).choose(&mut rng).expect("two streams");
                let amount = rng.gen_range(1..=balance.max(1));
                ledger.transfer(&TransferRequest::new(s, to, c, amount, tick), tick).is_ok()
            }
            "emit" => ledger.emit(c, rng.gen_range(1..=50), s, tick).is_ok(),
            "retire" => ledger.retire(c, rng.gen_range(1..=balance.max(1)), s, tick).is_ok(),
            "deposit" => ledger.deposit(c, s, rng.gen_range(1..=10 * MICRO_PER_INTER), tick).is_ok(),
            "withdraw" => ledger.withdraw(c, s, rng.gen_range(1..=10 * MICRO_PER_INTER), tick).is_ok(),
            "slash" => {
                let take = rng.gen_range(1..=2);
                let ids: Vec<Digest> = pocs.choose_multiple(&mut rng, take).copied().collect();
                ledger.slash(v, &ids, tick).amount > 0
            }
            "ticket" => ledger.add_ticket(*pocs.choose(&mut rng).expect("pocs"), v, tick),
            "draw" => {
                let seed = EpochSeed {
                    epoch: tick,
                    seed: Digest(rng.gen()),
                };
                !ledger.draw_all(&seed, tick).is_empty()
            }
            "vest_withdraw" => ledger
                .vest_withdraw(v, rng.gen_range(1..=MICRO_PER_INTER), tick / 100, tick)
                .is_ok(),
            _ => ledger.stake(v, rng.gen_range(1..=MICRO_PER_INTER), tick).is_ok(),
        };
        *if ok { accepted.entry(kind) } else { rejected.entry(kind) }.or_default() += 1;
        if p.inject_fault_at == Some(i) {
            ledger.inject_fault(s, 1);
        }
        let audit = ledger.audit();
        conserved_every &= audit.conserved;
        backed_every &= audit.backing_violations.is_empty() && audit.supply_mismatches.is_empty();
        if !audit.ok() {
            report.audits_ok = false;
            if report.audits.len() < 16 {
                report.audits.push(AuditRow {
                    label: format!("event {i} ({kind})"),
                    tick,
                    audit,
                });
            }
        } else if (i + 1) % 1000 == 0 {
            report.audits.push(AuditRow {
                label: format!("after {} events", i + 1),
                tick,
                audit,
            });
        }
    }
    let totals_constant = ledger.totals_after_events().iter().all(|&t| t == total);
    report.check(
        "conservation_every_event",
        conserved_every && totals_constant,
        format!("{} events, total {total} µINTER", p.events),
    );
    report.check(
        "backing_every_event",
        backed_every,
        "every stream's coin value within its weight after every event",
    );
    report.stat("accepted", &accepted);
    report.stat("rejected", &rejected);
    report.stat("ledger_events", ledger.events().len());
    report.stat("treasury", ledger.treasury);
    Ok(())
}

/// Runs the configured scenario. Identical configs give identical reports.
pub fn run_scenario(cfg: &SimConfig) -> Result<RunReport, SimError> {
    use super::config::Scenario::*;
    cfg.validate()?;
    let mut report = RunReport::new(cfg);
    let sizing = cfg.security.hoepman_bound()?;
    report.stat("security_sizing", sizing);
    match &cfg.scenario {
        DoubleSpend(p) => run_double_spend(cfg, p, &mut report)?,
        Disagreement(p) => run_disagreement(cfg, p, &mut report)?,
        Corruption(p) => run_corruption(cfg, p, &mut report)?,
        GossipMeasure(p) => run_gossip(cfg, p, &mut report),
        RippleTrace(p) => run_ripple(cfg, p, &mut report),
        EconomySoak(p) => run_soak(cfg, p, &mut report)?,
    }
    if report.yellow.worlds > 0 {
        yellow_checks(&mut report);
        report.stat("conflicting_finality", report.conflicting_finality);
    }
    Ok(report)
}

/// A world built from the network section, with the adversary section
/// applied: the lowest-numbered `⌊fraction · n⌋` swarm members sign a second
/// head in epoch 0 and send it to the eclipsed clients (or to everyone when
/// none are eclipsed), and `⌊f_J · juniors⌋` juniors are controlled.
pub fn build_world(cfg: &SimConfig) -> Result<SimWorld, SimError> {
    cfg.validate()?;
    let spec = WorldSpec::from_config(cfg);
    let mut w = SimWorld::new(spec.clone(), vec![])?;
    let a = &cfg.adversary;
    let first_client = cfg.network.watchers + cfg.network.juniors;
    let eclipsed: BTreeSet<NodeId> = a.eclipsed_clients.iter().map(|&c| NodeId(first_client + c)).collect();
    let k = a.controlled_watcher_fraction.floor_mul(w.swarm().len() as u64) as usize;
    let watchers: BTreeSet<NodeId> = w.swarm().iter().take(k).copied().collect();
    let juniors: BTreeSet<NodeId> = spec.juniors().take(a.junior_fraction.floor_mul(spec.juniors) as usize).collect();
    if eclipsed.is_empty() && watchers.is_empty() && juniors.is_empty() {
        return Ok(w);
    }
    let fake_to = if eclipsed.is_empty() { Targets::All } else { Targets::Only(eclipsed.clone()) };
    w.set_attack(Attack {
        fake_hash: (!watchers.is_empty()).then(|| fake_head(0)),
        watchers,
        juniors,
        fake_to,
        suppress: a.suppress_pocs,
        eclipsed,
        ..Attack::default()
    })?;
    Ok(w)
}
