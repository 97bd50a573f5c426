//! The shipped configs parse, and scaled-down runs of each scenario pass
//! and reproduce byte for byte.

use std::path::PathBuf;

use intercloud::simnet::config::ConfigError;
use intercloud::simnet::{run_scenario, Scenario, SimConfig, SimError};

fn load(name: &str) -> Result<SimConfig, ConfigError> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    SimConfig::from_toml_str(&std::fs::read_to_string(path).unwrap())
}

/// Shrinks a shipped config so the suite stays fast in debug builds.
fn small(mut cfg: SimConfig) -> SimConfig {
    match &mut cfg.scenario {
        Scenario::DoubleSpend(_) => {}
        Scenario::Disagreement(p) => {
            p.sufficiency_sizes = vec![6];
            p.sufficiency_runs = 3;
            p.necessity_sizes = vec![6];
            p.necessity_runs = 20;
            p.control_runs = 5;
        }
        Scenario::Corruption(p) => p.runs = 10,
        Scenario::GossipMeasure(p) => {
            p.trials = 2_000;
            p.grid_trials = 500;
        }
        Scenario::RippleTrace(p) => {
            p.topologies = 20;
            p.max_nodes = 40;
        }
        Scenario::EconomySoak(p) => p.events = 500,
    }
    cfg
}

const SHIPPED: [&str; 7] = [
    "double_spend.toml",
    "disagreement.toml",
    "corruption.toml",
    "corruption_stealth.toml",
    "gossip.toml",
    "ripple.toml",
    "economy_soak.toml",
];

#[test]
fn shipped_configs_parse_and_round_trip() {
    for name in SHIPPED {
        let cfg = load(name).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(SimConfig::from_toml_str(&cfg.to_toml_string()).unwrap(), cfg, "{name}");
    }
}

#[test]
fn scaled_down_runs_pass_and_reproduce() {
    for name in SHIPPED {
        let cfg = small(load(name).unwrap());
        let a = run_scenario(&cfg).unwrap();
        if !matches!(cfg.scenario, Scenario::GossipMeasure(_)) {
            // Small trial counts cannot resolve the 1e-6 headline target.
            let failed: Vec<_> = a.checks.iter().filter(|c| !c.pass).collect();
            assert!(a.passed(), "{name}: {failed:?}");
        }
        let b = run_scenario(&cfg).unwrap();
        assert_eq!(a.to_json(), b.to_json(), "{name}");
        assert_eq!(a.timelines_csv(), b.timelines_csv(), "{name}");
    }
}

#[test]
fn seeds_change_the_report() {
    let mut cfg = small(load("corruption.toml").unwrap());
    let a = run_scenario(&cfg).unwrap().to_json();
    cfg.seed += 1;
    assert_ne!(run_scenario(&cfg).unwrap().to_json(), a);
}

#[test]
fn short_epoch_config_is_rejected_with_the_bound() {
    let cfg = load("short_epoch.toml").unwrap();
    match run_scenario(&cfg) {
        Err(SimError::Config(e @ ConfigError::EpochTooShort { diameter: 4, bound: 4, .. })) => {
            assert!(e.to_string().contains("D·δ_min"));
        }
        other => panic!("{:?}", other.map(|r| r.kind)),
    }
}
