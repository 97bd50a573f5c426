//! `intercloud`: run scenarios, sweep parameter grids, check proofs of
//! corruption and size swarms.
//!
//! Exit codes:
//! - 0: success, or a valid proof for `verify-poc`
//! - 1: `verify-poc` read a well-formed but invalid proof
//! - 2: unreadable, unparsable or invalid input (config, grid, proof, parameters)
//! - 3: an invariant audit failed
//! - 4: the run finished with a failed property check, or `audit` could not
//!   reproduce the report

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use intercloud::consensus::{check_poc, PocCheck, ProofOfCorruption};
use intercloud::crypto::{PublicKey, SingleKey};
use intercloud::epoch::{hoepman_min_swarm, swarm_size, HOEPMAN_OPERATIONAL_SWARM};
use intercloud::simnet::config::{GossipCell, GossipMeasureParams, Scenario};
use intercloud::simnet::gossip::measure_cell;
use intercloud::simnet::{batch, run_scenario, RunReport, SimConfig, SimError};
use intercloud::units::{Fraction, MICRO_PER_INTER};

const EXIT_INVALID: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_AUDIT: u8 = 3;
const EXIT_CHECK: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "intercloud", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario config and write its report.
    Run {
        config: PathBuf,
        /// Replace the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, env = "INTERCLOUD_OUT", default_value = "intercloud-out")]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Evaluate a gossip grid over (f_J, κ, r) or a sizing grid over INTER.
    Sweep {
        /// Supplies gossip population, epoch rounds, trials and c.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Gossip cell `f_J,kappa,rounds`, e.g. `1/3,5,3`. Repeatable.
        #[arg(long = "cell")]
        cells: Vec<String>,
        /// Stream value in INTER. Repeatable.
        #[arg(long = "inter")]
        inters: Vec<u64>,
        /// Seed per gossip cell. Repeatable; defaults to the config seed.
        #[arg(long = "seed")]
        seeds: Vec<u64>,
        #[arg(long)]
        trials: Option<u64>,
        /// Also write `sweep.csv` here.
        #[arg(long, env = "INTERCLOUD_OUT")]
        out: Option<PathBuf>,
    },
    /// Check a JSON file `{"poc": ..., "public_key": "<hex>"}` with no other state.
    VerifyPoc { file: PathBuf },
    /// Minimum swarm size for `r` double-spends at security `s`.
    Hoepman {
        r: u64,
        s: f64,
        /// Corrupt fraction `f/n`, e.g. `1/3`.
        f_ratio: Fraction,
        /// Print the operational constant instead.
        #[arg(long)]
        operational: bool,
    },
    /// Re-run a stored JSON report's config and compare the bytes.
    Audit { report: PathBuf },
}

/// An error carrying its exit code; the message goes to standard error.
struct Failure(u8, String);

impl Failure {
    fn input(msg: impl Into<String>) -> Self {
        Failure(EXIT_INPUT, msg.into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, seed, out, format } => cmd_run(&config, seed, &out, format),
        Command::Sweep {
            config,
            cells,
            inters,
            seeds,
            trials,
            out,
        } => cmd_sweep(config.as_deref(), &cells, &inters, &seeds, trials, out.as_deref()),
        Command::VerifyPoc { file } => cmd_verify_poc(&file),
        Command::Hoepman { r, s, f_ratio, operational } => cmd_hoepman(r, s, f_ratio, operational),
        Command::Audit { report } => cmd_audit(&report),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(code, msg)) => {
            eprintln!("intercloud: {msg}");
            ExitCode::from(code)
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Failure::input(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn load_config(path: &Path) -> Result<SimConfig, Failure> {
    SimConfig::from_toml_str(&read(path)?).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn execute(cfg: &SimConfig) -> Result<RunReport, Failure> {
    run_scenario(cfg).map_err(|e| match e {
        SimError::Economy(e) => Failure(EXIT_AUDIT, format!("audit failed: {e}")),
        e => Failure::input(e.to_string()),
    })
}

fn print_checks(report: &RunReport) {
    for c in &report.checks {
        println!("[{}] {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
}

fn verdict(report: &RunReport) -> Result<(), Failure> {
    if !report.audits_ok {
        return Err(Failure(EXIT_AUDIT, "invariant audit failed".into()));
    }
    let failed: Vec<&str> = report.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure(EXIT_CHECK, format!("failed checks: {}", failed.join(", "))))
    }
}

fn cmd_run(config: &Path, seed: Option<u64>, out: &Path, format: Format) -> Result<(), Failure> {
    let mut cfg = load_config(config)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let report = execute(&cfg)?;
    let stem = format!("{}-{}", report.kind, report.seed);
    let written = match format {
        Format::Json => {
            let path = out.join(format!("{stem}.json"));
            write(&path, &report.to_json())?;
            vec![path]
        }
        Format::Csv => {
            let timelines = out.join(format!("{stem}.timelines.csv"));
            let stats = out.join(format!("{stem}.stats.csv"));
            write(&timelines, &report.timelines_csv())?;
            write(&stats, &report.stats_csv())?;
            vec![timelines, stats]
        }
    };
    print_checks(&report);
    for path in written {
        println!("wrote {}", path.display());
    }
    verdict(&report)
}

fn parse_cell(text: &str) -> Result<(Fraction, u64, u64), Failure> {
    let bad = || Failure::input(format!("cell {text:?}: expected f_J,kappa,rounds"));
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    let [f, k, r] = parts.as_slice() else {
        return Err(bad());
    };
    let f: Fraction = f.parse().map_err(|_| bad())?;
    let (k, r) = (k.parse().map_err(|_| bad())?, r.parse().map_err(|_| bad())?);
    if f.to_f64() >= 1.0 || k == 0 || r == 0 {
        return Err(bad());
    }
    Ok((f, k, r))
}

fn cmd_sweep(
    config: Option<&Path>,
    cells: &[String],
    inters: &[u64],
    seeds: &[u64],
    trials: Option<u64>,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let cfg = match config {
        Some(p) => Some(load_config(p)?),
        None => None,
    };
    let csv = match (cells.is_empty(), inters.is_empty()) {
        (true, true) => return Err(Failure::input("empty grid: pass --cell or --inter")),
        (false, false) => return Err(Failure::input("a sweep covers either --cell or --inter, not both")),
        (false, true) => gossip_sweep(cfg.as_ref(), cells, seeds, trials)?,
        (true, false) => sizing_sweep(cfg.as_ref(), inters),
    };
    print!("{csv}");
    if let Some(dir) = out {
        write(&dir.join("sweep.csv"), &csv)?;
    }
    Ok(())
}

fn gossip_sweep(cfg: Option<&SimConfig>, cells: &[String], seeds: &[u64], trials: Option<u64>) -> Result<String, Failure> {
    let params = match cfg.map(|c| &c.scenario) {
        Some(Scenario::GossipMeasure(p)) => p.clone(),
        _ => GossipMeasureParams::default(),
    };
    let suppress = cfg.is_none_or(|c| c.adversary.suppress_pocs);
    let trials = trials.unwrap_or(params.grid_trials);
    let seeds = match seeds {
        [] => vec![cfg.map_or(0, |c| c.seed)],
        s => s.to_vec(),
    };
    let cells = cells.iter().map(|c| parse_cell(c)).collect::<Result<Vec<_>, _>>()?;
    let jobs: Vec<_> = cells.iter().flat_map(|&c| seeds.iter().map(move |&s| (c, s))).collect();
    let results = batch(jobs.len() as u64, |i| {
        let ((f, k, r), seed) = jobs[i as usize];
        measure_cell(&GossipCell { f_j: f, kappa: k, rounds: r }, params.juniors, params.epoch_rounds, suppress, trials, seed)
    });
    let mut csv = String::from("seed,f_j,kappa,rounds,trials,escape_failure_rate,non_delivery_rate,bound,sigma,pass\n");
    for c in results {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{:e},{:e},{:e},{:e},{}",
            c.seed, c.f_j, c.kappa, c.rounds, c.trials, c.escape_failure_rate, c.non_delivery_rate, c.bound, c.sigma, c.pass
        );
    }
    Ok(csv)
}

fn sizing_sweep(cfg: Option<&SimConfig>, inters: &[u64]) -> String {
    let c = cfg.map_or(HOEPMAN_OPERATIONAL_SWARM, |c| c.security.c);
    let mut csv = String::from("inter,c,n,analytic,pass\n");
    for &inter in inters {
        let n = swarm_size(inter.saturating_mul(MICRO_PER_INTER), c, u64::MAX);
        let analytic = c as f64 * (inter as f64).sqrt();
        let pass = n as f64 + 1e-9 >= analytic && (n as f64) < analytic + 1.0;
        let _ = writeln!(csv, "{inter},{c},{n},{analytic},{pass}");
    }
    csv
}

fn cmd_verify_poc(file: &Path) -> Result<(), Failure> {
    let text = read(file)?;
    let parse = |e: serde_json::Error| Failure::input(format!("{}: {e}", file.display()));
    let mut value: serde_json::Value = serde_json::from_str(&text).map_err(parse)?;
    let field = |v: &mut serde_json::Value, k: &str| {
        v.get_mut(k)
            .map(serde_json::Value::take)
            .ok_or_else(|| Failure::input(format!("{}: missing field {k:?}", file.display())))
    };
    let poc: ProofOfCorruption = serde_json::from_value(field(&mut value, "poc")?).map_err(parse)?;
    let key: PublicKey = serde_json::from_value(field(&mut value, "public_key")?).map_err(parse)?;
    let outcome = check_poc(&poc, &SingleKey(poc.node(), key));
    println!("{outcome:?}: node {} stream {} epoch {}", poc.node().0, poc.stream().0, poc.epoch());
    match outcome {
        PocCheck::Valid => Ok(()),
        other => Err(Failure(EXIT_INVALID, format!("proof rejected: {other:?}"))),
    }
}

fn cmd_hoepman(r: u64, s: f64, f_ratio: Fraction, operational: bool) -> Result<(), Failure> {
    let b = hoepman_min_swarm(r, s, f_ratio.to_f64()).map_err(|e| Failure::input(e.to_string()))?;
    if operational {
        println!("{HOEPMAN_OPERATIONAL_SWARM}");
        println!("# operational constant for nodes corruptible after joining; Hoepman's calibration, not recomputed");
    } else {
        println!("{}", b.n_min);
        println!("# raw {:.3}, beta {:.3}; operational constant {HOEPMAN_OPERATIONAL_SWARM}", b.raw, b.beta);
    }
    Ok(())
}

fn cmd_audit(path: &Path) -> Result<(), Failure> {
    let text = read(path)?;
    let stored = RunReport::from_json(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    stored.config.validate().map_err(|e| Failure::input(e.to_string()))?;
    let again = execute(&stored.config)?;
    print_checks(&again);
    if !again.audits_ok {
        return Err(Failure(EXIT_AUDIT, "invariant audit failed".into()));
    }
    if again.to_json() != text.trim_end() {
        return Err(Failure(EXIT_CHECK, "re-run does not reproduce the stored report".into()));
    }
    println!("reproduced {} bytes", text.len());
    verdict(&again)
}
