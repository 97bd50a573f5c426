//! Acceptance suite: one pass/fail line per criterion, non-zero exit if any
//! fails.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use intercloud::consensus::{min_quorum_intersection, supermajority};
use intercloud::crypto::{hash, EpochSeed, NodeId};
use intercloud::economy::{lottery_draw, LotteryPool};
use intercloud::epoch::{hoepman_min_swarm, swarm_size, HOEPMAN_OPERATIONAL_SWARM};
use intercloud::simnet::config::{
    CorruptionParams, DisagreementParams, DoubleSpendParams, EconomySoakParams,
    GossipMeasureParams, RippleTraceParams,
};
use intercloud::simnet::report::YellowStats;
use intercloud::simnet::{run_scenario, RunReport, Scenario, SimConfig};
use intercloud::units::{Fraction, MICRO_PER_INTER};

const SEED: u64 = 20_240_601;

struct Line {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
    elapsed: Duration,
    limit: Option<Duration>,
}

struct Suite {
    lines: Vec<Line>,
}

impl Suite {
    fn record(&mut self, id: u32, name: &'static str, limit: Option<u64>, f: impl FnOnce() -> (bool, String)) {
        let start = Instant::now();
        let (pass, detail) = f();
        let elapsed = start.elapsed();
        let limit = limit.map(Duration::from_secs);
        let in_time = limit.is_none_or(|l| elapsed < l);
        let line = Line {
            id,
            name,
            pass: pass && in_time,
            detail,
            elapsed,
            limit,
        };
        println!(
            "[{}] criterion {:>2} {}: {} ({:.2}s{})",
            if line.pass { "PASS" } else { "FAIL" },
            line.id,
            line.name,
            line.detail,
            line.elapsed.as_secs_f64(),
            match line.limit {
                Some(l) if in_time => format!(" < {}s", l.as_secs()),
                Some(l) => format!(" exceeds {}s", l.as_secs()),
                None => String::new(),
            }
        );
        self.lines.push(line);
    }
}

fn run(scenario: Scenario) -> RunReport {
    run_scenario(&SimConfig::new(SEED, scenario)).expect("scenario runs")
}

fn summary(r: &RunReport, names: &[&str]) -> (bool, String) {
    let mut pass = r.audits_ok;
    let mut parts = Vec::new();
    for name in names {
        match r.find(name) {
            Some(c) => {
                pass &= c.pass;
                parts.push(c.detail.clone());
            }
            None => {
                pass = false;
                parts.push(format!("{name}: missing"));
            }
        }
    }
    (pass, parts.join("; "))
}

/// Every pair of subsets of size at least `⌈2n/3⌉` meets in at least
/// `⌈n/3⌉` members.
fn exhaustive_intersection(n: u32) -> (u32, u32) {
    let quorum = (2 * n).div_ceil(3);
    let sets: Vec<u32> = (0u32..1 << n).filter(|s| s.count_ones() >= quorum).collect();
    let min = sets
        .iter()
        .flat_map(|a| sets.iter().map(move |b| (a & b).count_ones()))
        .min()
        .unwrap_or(0);
    (min, sets.len() as u32)
}

fn main() -> ExitCode {
    let mut suite = Suite { lines: Vec::new() };
    let mut reports: BTreeMap<&str, RunReport> = BTreeMap::new();

    suite.record(1, "Hoepman sizing", Some(1), || {
        let b = hoepman_min_swarm(1, 30.0, 1.0 / 3.0).expect("valid parameters");
        let pass = b.n_min.abs_diff(95) <= 1 && HOEPMAN_OPERATIONAL_SWARM == 35;
        (pass, format!("n_min {} (raw {:.3}), operational {}", b.n_min, b.raw, HOEPMAN_OPERATIONAL_SWARM))
    });

    suite.record(2, "square-root scaling", Some(1), || {
        let got: Vec<u64> = [1, 4, 16, 1_000_000]
            .iter()
            .map(|&i| swarm_size(i * MICRO_PER_INTER, 35, u64::MAX))
            .collect();
        (got == [35, 70, 140, 35_000], format!("swarm sizes {got:?}"))
    });

    suite.record(3, "ripple termination", Some(60), || {
        let r = run(Scenario::RippleTrace(RippleTraceParams::default()));
        let out = summary(&r, &["ripple_termination"]);
        reports.insert("ripple", r);
        out
    });

    suite.record(4, "conservation", Some(60), || {
        let r = run(Scenario::EconomySoak(EconomySoakParams::default()));
        let out = summary(&r, &["conservation_every_event", "backing_every_event"]);
        reports.insert("soak", r);
        out
    });

    suite.record(5, "double spend", Some(30), || {
        let r = run(Scenario::DoubleSpend(DoubleSpendParams::default()));
        let out = summary(&r, &["sequential_second_invalid", "concurrent_single_green", "divergent_hash_poc_no_green"]);
        reports.insert("double_spend", r);
        out
    });

    suite.record(6, "gossip bound", Some(300), || {
        let r = run(Scenario::GossipMeasure(GossipMeasureParams::default()));
        let out = summary(&r, &["headline_cell", "grid_within_3_sigma"]);
        reports.insert("gossip", r);
        out
    });

    suite.record(7, "disagreement", Some(300), || {
        let r = run(Scenario::Disagreement(DisagreementParams::default()));
        let out = summary(
            &r,
            &["necessity", "compromise_only", "eclipse_only", "sufficiency_n6", "sufficiency_n35"],
        );
        reports.insert("disagreement", r);
        out
    });

    suite.record(8, "quorum intersection", Some(10), || {
        let structural = (1..1000usize).all(|n| min_quorum_intersection(n) >= n.div_ceil(3) && supermajority(n) == (2 * n).div_ceil(3));
        let (min6, sets) = exhaustive_intersection(6);
        (
            structural && min6 >= 2 && min_quorum_intersection(6) == min6 as usize,
            format!("n in 1..1000 structural {structural}; n=6 exhaustive over {sets} quorums: minimum overlap {min6}"),
        )
    });

    suite.record(10, "rational incorruptibility", Some(120), || {
        let open = run(Scenario::Corruption(CorruptionParams::default()));
        let mut stealth_cfg = SimConfig::new(
            SEED,
            Scenario::Corruption(CorruptionParams {
                stealth: true,
                ..CorruptionParams::default()
            }),
        );
        stealth_cfg.adversary.junior_fraction = Fraction::new(1, 3);
        let stealth = run_scenario(&stealth_cfg).expect("scenario runs");
        let names = [
            "payoff_within_bound",
            "mean_payoff_within_bound",
            "single_equivocator",
            "min_bribe_exceeds_two_thirds",
        ];
        let (a, da) = summary(&open, &["red_threshold"]);
        let (b, db) = summary(&open, &names);
        let (c, dc) = summary(&stealth, &names[..2]);
        reports.insert("corruption", open);
        reports.insert("corruption_stealth", stealth);
        (a && b && c, format!("open: {da}; {db}; stealth: {dc}"))
    });

    suite.record(9, "bounded Yellow", None, || {
        let mut total = YellowStats::default();
        let mut t_ep = u64::MAX;
        for r in reports.values().filter(|r| r.yellow.worlds > 0) {
            let y = &r.yellow;
            total.worlds += y.worlds;
            total.max_yellow_within_epoch = total.max_yellow_within_epoch.max(y.max_yellow_within_epoch);
            total.honest_epochs_without_green += y.honest_epochs_without_green;
            total.red_exit_violations += y.red_exit_violations;
            t_ep = t_ep.min(r.t_ep);
        }
        (
            total.worlds > 0 && total.bounded(t_ep),
            format!(
                "{} worlds: max Yellow within an epoch {} <= T_ep {}, {} honest epochs without Green, {} Red exits off the shuffle",
                total.worlds, total.max_yellow_within_epoch, t_ep, total.honest_epochs_without_green, total.red_exit_violations
            ),
        )
    });

    suite.record(11, "lottery fairness", Some(60), || {
        let draws = 10_000u64;
        let tickets: Vec<NodeId> = (0..10).map(|i| NodeId(100 + 7 * i)).collect();
        let poc = hash(b"fixed-poc");
        let pool_from = |first: usize| {
            let mut p = LotteryPool::new(poc);
            p.add_ticket(tickets[first]);
            for &t in &tickets {
                p.add_ticket(t);
            }
            p
        };
        let pools: Vec<LotteryPool> = (0..tickets.len()).map(pool_from).collect();
        let mut wins: BTreeMap<NodeId, u64> = BTreeMap::new();
        let mut relabel_changes = 0;
        for i in 0..draws {
            let seed = EpochSeed {
                epoch: i,
                seed: hash(&i.to_be_bytes()),
            };
            let winner = lottery_draw(&seed, &pools[0]).expect("tickets exist");
            relabel_changes += pools[1..].iter().filter(|p| lottery_draw(&seed, p) != Some(winner)).count();
            *wins.entry(winner).or_default() += 1;
        }
        let p = 1.0 / tickets.len() as f64;
        let mean = draws as f64 * p;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        let worst = tickets
            .iter()
            .map(|t| (wins.get(t).copied().unwrap_or(0) as f64 - mean).abs() / sigma)
            .fold(0.0, f64::max);
        let suppressors: Vec<String> = ["corruption", "corruption_stealth"]
            .iter()
            .filter_map(|k| reports.get(k))
            .map(|r| r.find("suppressors_earn_nothing").map_or("missing".to_string(), |c| c.detail.clone()))
            .collect();
        let suppress_ok = suppressors.len() == 2
            && ["corruption", "corruption_stealth"]
                .iter()
                .all(|k| reports[k].find("suppressors_earn_nothing").is_some_and(|c| c.pass));
        (
            worst <= 5.0 && relabel_changes == 0 && suppress_ok,
            format!(
                "{draws} draws over {} tickets: worst deviation {worst:.2}σ; {relabel_changes} outcomes changed by relabelling the discoverer; {}",
                tickets.len(),
                suppressors.join("; ")
            ),
        )
    });

    suite.record(12, "determinism", None, || {
        let mut reruns = Vec::new();
        let mut differing = Vec::new();
        for (name, r) in &reports {
            let again = run_scenario(&r.config).expect("scenario runs");
            reruns.push(*name);
            if again.to_json() != r.to_json() || again.stats_csv() != r.stats_csv() || again.timelines_csv() != r.timelines_csv() {
                differing.push(*name);
            }
        }
        (
            differing.is_empty() && !reruns.is_empty(),
            format!("re-ran {} scenarios; byte-different reports: {differing:?}", reruns.len()),
        )
    });

    suite.lines.sort_by_key(|l| l.id);
    let failed: Vec<u32> = suite.lines.iter().filter(|l| !l.pass).map(|l| l.id).collect();
    println!(
        "acceptance: {}/{} criteria passed{}",
        suite.lines.len() - failed.len(),
        suite.lines.len(),
        if failed.is_empty() { String::new() } else { format!("; failed {failed:?}") }
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
