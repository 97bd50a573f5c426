use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use intercloud::consensus::{make_attestation, ProofOfCorruption};
use intercloud::crypto::{hash, KeyPair, NodeId};
use intercloud::simnet::config::{DoubleSpendParams, EconomySoakParams, TopologyKind};
use intercloud::simnet::{Scenario, SimConfig};
use intercloud::units::StreamId;
use serde_json::{json, Value};
use tempfile::TempDir;

fn intercloud(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_intercloud"))
        .args(args)
        .env_remove("INTERCLOUD_OUT")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, cfg: &SimConfig) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, cfg.to_toml_string()).unwrap();
    path
}

fn double_spend() -> SimConfig {
    SimConfig::new(7, Scenario::DoubleSpend(DoubleSpendParams::default()))
}

#[test]
fn valid_double_spend_run_writes_reports_and_exits_zero() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "ds.toml", &double_spend());
    let out = dir.path().join("out");
    let o = intercloud(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let json = std::fs::read_to_string(out.join("double_spend-7.json")).unwrap();
    assert!(json.contains("\"concurrent_single_green\""));

    let o = intercloud(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--format", "csv", "--seed", "8"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(out.join("double_spend-8.timelines.csv").exists());
    assert!(out.join("double_spend-8.stats.csv").exists());
}

#[test]
fn output_dir_defaults_from_the_environment() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "ds.toml", &double_spend());
    let out = dir.path().join("env-out");
    let o = Command::new(env!("CARGO_BIN_EXE_intercloud"))
        .args(["run", cfg.to_str().unwrap()])
        .env("INTERCLOUD_OUT", &out)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(out.join("double_spend-7.json").exists());
}

#[test]
fn identical_runs_write_identical_bytes() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "ds.toml", &double_spend());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = intercloud(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0);
    }
    let read = |d: &Path| std::fs::read(d.join("double_spend-7.json")).unwrap();
    assert_eq!(read(&a), read(&b));
}

#[test]
fn short_epoch_exits_two_citing_the_bound() {
    let dir = TempDir::new().unwrap();
    let mut cfg = double_spend();
    cfg.network.topology = TopologyKind::Path;
    cfg.network.t_ep = 3;
    let path = write_config(dir.path(), "short.toml", &cfg);
    let o = intercloud(&["run", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("D·δ_min"), "{}", stderr(&o));
}

#[test]
fn malformed_and_unknown_fields_exit_two() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bad.toml");
    let text = double_spend().to_toml_string().replace("version = 1", "version = 1\nsurprise = true");
    std::fs::write(&path, text).unwrap();
    assert_eq!(code(&intercloud(&["run", path.to_str().unwrap()])), 2);
    assert_eq!(code(&intercloud(&["run", dir.path().join("missing.toml").to_str().unwrap()])), 2);
}

#[test]
fn injected_conservation_fault_exits_three() {
    let dir = TempDir::new().unwrap();
    let cfg = SimConfig::new(
        3,
        Scenario::EconomySoak(EconomySoakParams {
            events: 500,
            inject_fault_at: Some(200),
            ..EconomySoakParams::default()
        }),
    );
    let path = write_config(dir.path(), "fault.toml", &cfg);
    let o = intercloud(&["run", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn audit_reproduces_a_stored_report() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "ds.toml", &double_spend());
    let out = dir.path().join("out");
    assert_eq!(code(&intercloud(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])), 0);
    let report = out.join("double_spend-7.json");
    let o = intercloud(&["audit", report.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let text = std::fs::read_to_string(&report).unwrap();
    std::fs::write(&report, text.replacen("\"pass\": true", "\"pass\": false", 1)).unwrap();
    assert_eq!(code(&intercloud(&["audit", report.to_str().unwrap()])), 4);
    std::fs::write(&report, &text[..text.len() / 2]).unwrap();
    assert_eq!(code(&intercloud(&["audit", report.to_str().unwrap()])), 2);
}

fn poc_file() -> Value {
    let node = NodeId(4);
    let keys = KeyPair::for_node(node, 11);
    let a = make_attestation(&keys, node, StreamId(1), hash(b"real"), 2);
    let b = make_attestation(&keys, node, StreamId(1), hash(b"fake"), 2);
    json!({ "poc": ProofOfCorruption::from_pair(a, b), "public_key": keys.public })
}

fn verify(dir: &Path, text: &str) -> Output {
    let path = dir.join("poc.json");
    std::fs::write(&path, text).unwrap();
    intercloud(&["verify-poc", path.to_str().unwrap()])
}

#[test]
fn verify_poc_accepts_a_valid_proof() {
    let dir = TempDir::new().unwrap();
    let o = verify(dir.path(), &poc_file().to_string());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).starts_with("Valid"));
}

#[test]
fn verify_poc_rejects_a_tampered_hash() {
    let dir = TempDir::new().unwrap();
    let mut file = poc_file();
    let h = file["poc"]["a1"]["hash"].as_str().unwrap().to_string();
    let flipped = if h.starts_with('0') { "1" } else { "0" };
    file["poc"]["a1"]["hash"] = Value::String(format!("{flipped}{}", &h[1..]));
    assert_eq!(code(&verify(dir.path(), &file.to_string())), 1);
}

#[test]
fn verify_poc_rejects_a_foreign_key() {
    let dir = TempDir::new().unwrap();
    let mut file = poc_file();
    file["public_key"] = json!(KeyPair::for_node(NodeId(5), 11).public);
    assert_eq!(code(&verify(dir.path(), &file.to_string())), 1);
}

#[test]
fn verify_poc_truncated_file_exits_two() {
    let dir = TempDir::new().unwrap();
    let text = poc_file().to_string();
    assert_eq!(code(&verify(dir.path(), &text[..text.len() - 20])), 2);
    assert_eq!(code(&verify(dir.path(), "{\"poc\": 1}")), 2);
}

#[test]
fn hoepman_prints_the_bound_and_the_operational_constant() {
    let o = intercloud(&["hoepman", "1", "30", "1/3"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).lines().next(), Some("95"));
    assert!(stdout(&o).contains("operational constant 35"));
    let o = intercloud(&["hoepman", "1", "30", "1/3", "--operational"]);
    assert_eq!(stdout(&o).lines().next(), Some("35"));
    assert_eq!(code(&intercloud(&["hoepman", "1", "30", "1"])), 2);
    assert_eq!(code(&intercloud(&["hoepman", "0", "30", "1/3"])), 2);
}

#[test]
fn sizing_sweep_scales_with_the_square_root() {
    let o = intercloud(&["sweep", "--inter", "1", "--inter", "4", "--inter", "16"]);
    assert_eq!(code(&o), 0);
    let n: Vec<String> = stdout(&o)
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().to_string())
        .collect();
    assert_eq!(n, ["35", "70", "140"]);
}

#[test]
fn gossip_sweep_gives_one_deterministic_row_per_seed() {
    let dir = TempDir::new().unwrap();
    let args = ["sweep", "--cell", "1/3,5,3", "--seed", "1", "--seed", "2", "--trials", "2000"];
    let first = intercloud(&args);
    assert_eq!(code(&first), 0, "{}", stderr(&first));
    let text = stdout(&first);
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    for row in &rows {
        let cols: Vec<&str> = row.split(',').collect();
        let bound: f64 = cols[7].parse().unwrap();
        assert!((bound - 7e-8).abs() < 1e-9, "bound {bound}");
        assert_eq!(cols[9], "true");
    }
    let mut with_out = args.to_vec();
    with_out.extend(["--out", dir.path().to_str().unwrap()]);
    assert_eq!(stdout(&intercloud(&with_out)), text);
    assert_eq!(std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap(), text);
}

#[test]
fn empty_or_mixed_grid_is_an_error() {
    assert_eq!(code(&intercloud(&["sweep"])), 2);
    assert_eq!(code(&intercloud(&["sweep", "--cell", "1/3,5,3", "--inter", "4"])), 2);
    assert_eq!(code(&intercloud(&["sweep", "--cell", "1/3,5"])), 2);
}

#[test]
fn exactly_one_subcommand_is_required() {
    assert_eq!(code(&intercloud(&[])), 2);
    assert_eq!(code(&intercloud(&["hoepman", "1", "30", "1/3", "run"])), 2);
}
