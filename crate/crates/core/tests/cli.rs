//! End-to-end tests of the `decern` binary: exit codes, file contracts,
//! determinism of the machine artifacts.

use std::path::Path;
use std::process::{Command, Output};

fn decern(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_decern"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) {
    std::fs::write(dir.join(name), body).unwrap();
}

const BASE_CONFIG: &str = "\
dataset.path = data.dcrn
strategy = entropy
cycles = 2
seeds = 1,2
train.epochs = 15
train.lr = 0.01
output.dir = out
";

fn generate_fixture(dir: &Path) {
    let out = decern(
        &[
            "generate",
            "--classes",
            "4",
            "--per-class",
            "20",
            "--dim",
            "8",
            "--seed",
            "3",
            "--out",
            "data.dcrn",
        ],
        dir,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn generate_writes_exact_size_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    generate_fixture(dir.path());

    // 4 classes * ceil(0.7 * 20) = 56 train samples
    let n = 56;
    let d = 8;
    let size = std::fs::metadata(dir.path().join("data.dcrn")).unwrap().len();
    assert_eq!(size as usize, 28 + n * d * 8 + n * 4);
    // test sibling: 4 * 6 = 24 samples
    let tsize = std::fs::metadata(dir.path().join("data.test.dcrn")).unwrap().len();
    assert_eq!(tsize as usize, 28 + 24 * d * 8 + 24 * 4);
    assert!(dir.path().join("data.json").exists());

    let first = std::fs::read(dir.path().join("data.dcrn")).unwrap();
    generate_fixture(dir.path());
    let second = std::fs::read(dir.path().join("data.dcrn")).unwrap();
    assert_eq!(first, second);
}

#[test]
fn generate_rejects_zero_classes_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = decern(
        &[
            "generate", "--classes", "0", "--per-class", "5", "--dim", "4", "--out", "x.dcrn",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_emits_summary_and_identical_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    generate_fixture(dir.path());
    write_config(dir.path(), "cfg.txt", BASE_CONFIG);

    let out = decern(&["run", "--config", "cfg.txt"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    // one table row per cycle
    assert_eq!(stdout.lines().filter(|l| l.trim_start().starts_with(['0', '1'])).count(), 2);

    let report1 = std::fs::read(dir.path().join("out/report.json")).unwrap();
    let curves1 = std::fs::read(dir.path().join("out/curves.csv")).unwrap();
    let out = decern(&["run", "--config", "cfg.txt"], dir.path());
    assert!(out.status.success());
    assert_eq!(report1, std::fs::read(dir.path().join("out/report.json")).unwrap());
    assert_eq!(curves1, std::fs::read(dir.path().join("out/curves.csv")).unwrap());
}

#[test]
fn run_overrides_are_echoed_into_the_report() {
    let dir = tempfile::tempdir().unwrap();
    generate_fixture(dir.path());
    write_config(dir.path(), "cfg.txt", BASE_CONFIG);

    let out = decern(
        &[
            "run",
            "--config",
            "cfg.txt",
            "--set",
            "strategy=decern",
            "--set",
            "decern.R=0.1",
            "--set",
            "decern.xi=0.8",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = std::fs::read_to_string(dir.path().join("out/report.json")).unwrap();
    assert!(report.contains("\"strategy\": \"decern\""));
    assert!(report.contains("\"decern.R\": \"0.1\""));
    assert!(report.contains("\"decern.xi\": \"0.8\""));
}

#[test]
fn run_rejects_unknown_override_key() {
    let dir = tempfile::tempdir().unwrap();
    generate_fixture(dir.path());
    write_config(dir.path(), "cfg.txt", BASE_CONFIG);
    let out = decern(
        &["run", "--config", "cfg.txt", "--set", "no.such.key=1"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_missing_dataset_exits_2_and_infeasible_budget_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    write_config(
        dir.path(),
        "cfg.txt",
        "dataset.path = nope.dcrn\noutput.dir = out\n",
    );
    let out = decern(&["run", "--config", "cfg.txt"], dir.path());
    assert_eq!(out.status.code(), Some(2));

    generate_fixture(dir.path());
    write_config(dir.path(), "cfg2.txt", BASE_CONFIG);
    let out = decern(
        &["run", "--config", "cfg2.txt", "--set", "cycles=50"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("cycle"), "{stderr}");
}

#[test]
fn sweep_shares_cycle_zero_pools_and_compares_strategies() {
    let dir = tempfile::tempdir().unwrap();
    generate_fixture(dir.path());
    write_config(
        dir.path(),
        "sweep.txt",
        "dataset.path = data.dcrn\nstrategies = random,decern\ncycles = 2\nseeds = 1,2\ntrain.epochs = 15\ntrain.lr = 0.01\noutput.dir = out\n",
    );
    let out = decern(&["sweep", "--config", "sweep.txt"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("final-cycle comparison"));
    assert!(stdout.contains("random"));
    assert!(stdout.contains("decern"));

    // pool-hash audit: cycle-0 hashes equal across strategies per seed
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/report.json")).unwrap())
            .unwrap();
    let strategies = report["strategies"].as_array().unwrap();
    assert_eq!(strategies.len(), 2);
    for seed_idx in 0..2 {
        let h0 = &strategies[0]["seeds"][seed_idx]["cycles"][0]["pool_hash"];
        let h1 = &strategies[1]["seeds"][seed_idx]["cycles"][0]["pool_hash"];
        assert_eq!(h0, h1);
    }
    // curves.csv spans both strategies: header + 2 strategies * 2 seeds * 2 cycles
    let curves = std::fs::read_to_string(dir.path().join("out/curves.csv")).unwrap();
    assert_eq!(curves.lines().count(), 1 + 8);
}

#[test]
fn sweep_with_empty_strategy_list_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    generate_fixture(dir.path());
    write_config(
        dir.path(),
        "sweep.txt",
        "dataset.path = data.dcrn\noutput.dir = out\n",
    );
    let out = decern(&["sweep", "--config", "sweep.txt"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn report_roundtrip_is_lossless_and_rejects_bad_schema() {
    let dir = tempfile::tempdir().unwrap();
    generate_fixture(dir.path());
    write_config(dir.path(), "cfg.txt", BASE_CONFIG);
    let out = decern(&["run", "--config", "cfg.txt"], dir.path());
    assert!(out.status.success());

    let out = decern(
        &[
            "report",
            "--report",
            "out/report.json",
            "--out-dir",
            "reemit",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let a = std::fs::read(dir.path().join("out/curves.csv")).unwrap();
    let b = std::fs::read(dir.path().join("reemit/curves.csv")).unwrap();
    assert_eq!(a, b);

    // corrupted JSON -> exit 4
    std::fs::write(dir.path().join("bad.json"), "{broken").unwrap();
    let out = decern(&["report", "--report", "bad.json"], dir.path());
    assert_eq!(out.status.code(), Some(4));

    // version mismatch -> exit 4
    let mut report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/report.json")).unwrap())
            .unwrap();
    report["version"] = serde_json::json!(42);
    std::fs::write(
        dir.path().join("old.json"),
        serde_json::to_string(&report).unwrap(),
    )
    .unwrap();
    let out = decern(&["report", "--report", "old.json"], dir.path());
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn csv_dataset_ingestion_works_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    // tiny csv fixture: 2-d features, label last
    let mut train = String::from("f0,f1,label\n");
    let mut test = String::from("f0,f1,label\n");
    for i in 0..12 {
        let (x, y, c) = if i % 2 == 0 {
            (-4.0 + 0.1 * i as f64, 0.5, 0)
        } else {
            (4.0 + 0.1 * i as f64, -0.5, 1)
        };
        train.push_str(&format!("{x},{y},{c}\n"));
        test.push_str(&format!("{},{y},{c}\n", x + 0.05));
    }
    std::fs::write(dir.path().join("train.csv"), train).unwrap();
    std::fs::write(dir.path().join("test.csv"), test).unwrap();
    write_config(
        dir.path(),
        "cfg.txt",
        "dataset.path = train.csv\ndataset.test_path = test.csv\nstrategy = margin\ncycles = 2\nseeds = 1\ntrain.epochs = 20\ntrain.lr = 0.05\nbudget.k = 2\noutput.dir = out\n",
    );
    let out = decern(&["run", "--config", "cfg.txt"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("out/curves.csv").exists());
}

#[test]
fn score_dump_writes_per_cycle_audit_files() {
    let dir = tempfile::tempdir().unwrap();
    generate_fixture(dir.path());
    write_config(
        dir.path(),
        "cfg.txt",
        "dataset.path = data.dcrn\nstrategy = decern\ncycles = 3\nseeds = 1\ntrain.epochs = 10\ntrain.lr = 0.01\nscore_dump = true\noutput.dir = out\n",
    );
    let out = decern(&["run", "--config", "cfg.txt"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    // cycles 1 and 2 score the pool; cycle 0 is the random seed round
    for cycle in [1, 2] {
        let path = dir.path().join(format!("out/scores/decern_seed1_cycle{cycle}.csv"));
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "index,score,selected");
        // 56 train samples, 4 labeled per round
        let expected_rows = 56 - 4 * cycle;
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), expected_rows);
        let selected = rows.iter().filter(|r| r.ends_with(",1")).count();
        assert_eq!(selected, 4);
    }
    assert!(!dir.path().join("out/scores/decern_seed1_cycle0.csv").exists());
}
