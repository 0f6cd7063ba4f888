use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

const MESH: &str = r#"
seed = 5
[topology]
leaves = 4
spine_ratio = "1/2"
servers_per_rack = 25
wavelengths = 4
[workload]
duration = 0.05
sets_per_rack = 2
tau_l = 1.0
[network]
mf_rate = 5e9
[sweep]
loads = [0.25, 0.5, 0.75, 1.0]
"#;

const QUEUE: &str = r#"
seed = 11
[topology]
leaves = 2
spine_ratio = "1/2"
servers_per_rack = 1
wavelengths = 2
[queueing]
hops = 2
packets = 40000
[sweep]
loads = [0.5]
flats = [0.0, 0.2]
t_qos = [1e-3, 2e-3, 4e-3, 8e-3]
"#;

const MILP: &str = r#"
[topology]
leaves = 2
spine_ratio = "1/2"
servers_per_rack = 2
wavelengths = 2
[milp]
brute = { intensity = { kind = "minimal" } }
flows = [
  { src = [0, 0], dst = [1, 0], demand = 2e9 },
  { src = [0, 1], dst = [1, 1], demand = 1e9, class = "critical" },
]
"#;

struct Run {
    dir: tempfile::TempDir,
}

impl Run {
    fn new(config: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("exp.toml"), config).unwrap();
        Self { dir }
    }

    fn out(&self) -> PathBuf {
        self.dir.path().join("out")
    }

    fn tgfso(&self, args: &[&str]) -> Output {
        let cfg = self.dir.path().join("exp.toml");
        Command::new(env!("CARGO_BIN_EXE_tgfso"))
            .arg("--config")
            .arg(&cfg)
            .arg("--out")
            .arg(self.out())
            .args(args)
            .env("RUST_LOG", "warn")
            .output()
            .unwrap()
    }

    fn read(&self, name: &str) -> String {
        fs::read_to_string(self.out().join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
    }
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn csv_rows(text: &str) -> Vec<BTreeMap<String, String>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let head = r.headers().unwrap().clone();
    r.records()
        .map(|rec| {
            head.iter()
                .zip(rec.unwrap().iter())
                .map(|(h, v)| (h.to_string(), v.to_string()))
                .collect()
        })
        .collect()
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

#[test]
fn provision_writes_every_rack_pair_and_a_manifest() {
    let run = Run::new(MESH);
    let o = run.tgfso(&["provision"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&run.read("lightpaths.csv"));
    // CF and MF per ordered pair.
    assert_eq!(rows.len(), 2 * 4 * 3);
    for r in &rows {
        assert_ne!(r["src_rack"], r["dst_rack"]);
        assert_eq!(r["intensity"].split(';').count(), 2);
    }
    let manifest: serde_json::Value = serde_json::from_str(&run.read("manifest-provision.json")).unwrap();
    assert_eq!(manifest["seed"], 5);
    let cfg = fs::read(run.dir.path().join("exp.toml")).unwrap();
    assert_eq!(manifest["config_sha256"], hex::encode(Sha256::digest(&cfg)));
    for (name, hash) in manifest["outputs"].as_object().unwrap() {
        let bytes = fs::read(run.out().join(name)).unwrap();
        assert_eq!(hash.as_str().unwrap(), hex::encode(Sha256::digest(&bytes)), "{name}");
    }
    assert!(manifest["outputs"].get("link_budget.csv").is_some());
}

#[test]
fn too_few_wavelengths_exit_with_provisioning_code() {
    let run = Run::new(&MESH.replace("wavelengths = 4", "wavelengths = 2"));
    let o = run.tgfso(&["provision"]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("ceil(2(N-1)/(eta N)) = 3"), "{err}");
}

#[test]
fn empty_sweep_writes_nothing() {
    let run = Run::new(&MESH.replace("loads = [0.25, 0.5, 0.75, 1.0]", "loads = []"));
    let o = run.tgfso(&["simulate"]);
    assert_eq!(code(&o), 0);
    assert!(!run.out().exists());
    assert_eq!(code(&run.tgfso(&["compare"])), 0);
    assert!(!run.out().exists());
}

#[test]
fn simulate_is_deterministic_with_one_row_per_load_and_policy() {
    let a = Run::new(MESH);
    assert_eq!(code(&a.tgfso(&["simulate", "--jobs", "2"])), 0);
    let b = Run::new(MESH);
    assert_eq!(code(&b.tgfso(&["simulate", "--jobs", "1"])), 0);
    assert_eq!(files(&a.out()), files(&b.out()));

    let rows = csv_rows(&a.read("network.csv"));
    assert_eq!(rows.len(), 4 * 3);
    for p in ["tg-fso", "ecmp-fso", "ecmp-legacy"] {
        assert_eq!(rows.iter().filter(|r| r["policy"] == p).count(), 4);
    }
}

#[test]
fn policy_and_seed_flags_override_the_config() {
    let run = Run::new(MESH);
    let o = run.tgfso(&["simulate", "--policy", "tg-fso", "--seed", "99"]);
    assert_eq!(code(&o), 0);
    let rows = csv_rows(&run.read("network.csv"));
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r["policy"] == "tg-fso" && r["seed"] == "99"));
    assert!(run.tgfso(&["simulate", "--policy", "bogus"]).status.code() != Some(0));
}

#[test]
fn compare_lists_every_policy_per_load() {
    let run = Run::new(MESH);
    assert_eq!(code(&run.tgfso(&["compare"])), 0);
    let rows = csv_rows(&run.read("compare.csv"));
    assert_eq!(rows.len(), 12);
    let loads: Vec<&str> = rows.iter().map(|r| r["load"].as_str()).collect();
    assert_eq!(loads[..3], ["0.25"; 3]);
}

#[test]
fn queueing_then_analyze_pairs_simulation_with_model() {
    let run = Run::new(QUEUE);
    // Analysis alone flags the missing simulation.
    assert_eq!(code(&run.tgfso(&["analyze"])), 0);
    let alone = csv_rows(&run.read("analysis.csv"));
    assert!(alone.iter().all(|r| r["sim_data"] == "false" && r["sim_wait_high"].is_empty()));

    assert_eq!(code(&run.tgfso(&["--mode", "queueing", "simulate"])), 0);
    assert_eq!(code(&run.tgfso(&["analyze"])), 0);
    let rows = csv_rows(&run.read("analysis.csv"));
    assert_eq!(rows.len(), 2 * 2);
    for r in &rows {
        assert_eq!(r["sim_data"], "true");
        let err: f64 = r["rel_err_high"].parse().unwrap();
        assert!(err < 0.1, "{r:?}");
    }
    // No EF packets stay low: the low class waits like the high class.
    let lone = rows.iter().find(|r| r["flat"] == "0.0").unwrap();
    assert_eq!(lone["wait_low"], lone["wait_high"]);
    assert!(lone["sim_wait_low"].is_empty());

    let blocking = csv_rows(&run.read("analysis_blocking.csv"));
    assert_eq!(blocking.len(), 2 * 4);
    for flat in ["0.0", "0.2"] {
        let p: Vec<f64> = blocking
            .iter()
            .filter(|r| r["flat"] == flat)
            .map(|r| r["p_block"].parse().unwrap())
            .collect();
        assert!(p.windows(2).all(|w| w[1] <= w[0]), "{p:?}");
    }
    assert!(run.out().join("manifest-simulate-queueing.json").exists());
    assert!(run.out().join("manifest-analyze.json").exists());
}

#[test]
fn unstable_points_exit_three_and_keep_the_rest() {
    let cfg = QUEUE
        .replace("loads = [0.5]", "loads = [0.5, 1.5]")
        .replace("packets = 40000", "packets = 40000\nqueue_cap = 200");
    let run = Run::new(&cfg);
    assert_eq!(code(&run.tgfso(&["--mode", "queueing", "simulate"])), 3);
    let rows = csv_rows(&run.read("queueing.csv"));
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r["rho"] == "0.5"));
    assert_eq!(code(&run.tgfso(&["analyze"])), 3);
}

#[test]
fn milp_exports_solves_and_checks() {
    let run = Run::new(MILP);
    let o = run.tgfso(&["milp", "--brute"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let lp = run.read("milp.lp");
    assert!(lp.starts_with("\\ traffic grooming: 2 flows"));
    let inst: serde_json::Value = serde_json::from_str(&run.read("instance.json")).unwrap();
    let summary: serde_json::Value = serde_json::from_str(&run.read("milp_summary.json")).unwrap();
    assert_eq!(inst["variables"].as_array().unwrap().len() as u64, summary["variables"].as_u64().unwrap());
    let report: serde_json::Value = serde_json::from_str(&run.read("milp_brute.json")).unwrap();
    assert_eq!(report["brute"]["verdict"], "PASS");
    assert_eq!(report["heuristic"]["verdict"], "PASS");
    assert!(report["admitted_gap"].as_f64().unwrap() >= 0.0);

    let optimum = run.out().join("milp_optimum.json");
    let o = run.tgfso(&["milp", "--check", optimum.to_str().unwrap()]);
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "PASS");

    let mut values: BTreeMap<String, f64> = serde_json::from_str(&fs::read_to_string(&optimum).unwrap()).unwrap();
    let lt = values.keys().find(|k| k.starts_with("LT_")).unwrap().clone();
    values.insert(lt, 99.0);
    let bad = run.dir.path().join("bad.json");
    fs::write(&bad, serde_json::to_string(&values).unwrap()).unwrap();
    let o = run.tgfso(&["milp", "--check", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("FAIL"));
}

#[test]
fn provision_can_export_the_exact_model() {
    let run = Run::new(MILP);
    assert_eq!(code(&run.tgfso(&["provision", "--lp"])), 0);
    assert!(run.read("milp.lp").ends_with("End\n"));
    assert_eq!(csv_rows(&run.read("lightpaths.csv")).len(), 4);
}

#[test]
fn bad_config_is_a_plain_failure() {
    let run = Run::new("[topology]\nleaves = 2\n");
    assert_eq!(code(&run.tgfso(&["provision"])), 1);
}
