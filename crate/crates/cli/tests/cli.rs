use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn onebit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_onebit"))
        .args(args)
        .env_remove("ONEBIT_THREADS")
        .output()
        .expect("spawn onebit")
}

fn ok(args: &[&str]) -> String {
    let out = onebit(args);
    assert!(
        out.status.success(),
        "onebit {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn matrix_observe_oracle_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.bin");
    let u = dir.path().join("u.txt");
    ok(&["matrix", "--m", "24", "--n", "40", "--seed", "7", "--out", p(&a)]);
    let obs = ok(&["observe", "--matrix", p(&a), "--support", "3,17,30"]);
    assert_eq!(obs.split_whitespace().count(), 24);
    fs::write(&u, &obs).unwrap();

    let mut expected = vec!["0"; 40];
    for j in [3, 17, 30] {
        expected[j] = "1";
    }
    for solver in ["bnb", "exhaustive"] {
        let out = ok(&["oracle", "--matrix", p(&a), "--observation", p(&u), "--k", "3", "--solver", solver]);
        let mut lines = out.lines();
        assert_eq!(lines.next(), Some("found"));
        let z: Vec<&str> = lines.next().unwrap().split_whitespace().collect();
        // With 24 observations of a 3-sparse signal in 40 dimensions the
        // feasible set is almost surely the true support alone.
        assert_eq!(z, expected, "solver {solver}");
    }
}

#[test]
fn oracle_reports_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.bin");
    let u = dir.path().join("u.txt");
    ok(&["matrix", "--m", "12", "--n", "10", "--seed", "3", "--out", p(&a)]);
    // A k=1 signal with every observation +1 needs a column with all
    // entries positive; with 12 Gaussian rows that essentially never exists.
    fs::write(&u, ["+1"; 12].join(" ")).unwrap();
    let out = ok(&["oracle", "--matrix", p(&a), "--observation", p(&u), "--k", "1"]);
    assert_eq!(out.trim(), "infeasible");
}

#[test]
fn train_then_recover() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.bin");
    let model = dir.path().join("net.bin");
    let log = dir.path().join("log.csv");
    let common = [
        "--preset", "desk", "--n", "16", "--k", "2", "--m", "12", "--alpha", "8", "--steps", "20",
        "--batch-size", "10",
    ];
    let mut args = vec!["train"];
    args.extend(common);
    args.extend(["--new-matrix", p(&a), "--model", p(&model), "--log", p(&log)]);
    ok(&args);
    let csv = fs::read_to_string(&log).unwrap();
    assert!(csv.starts_with("step,loss"));
    assert_eq!(csv.lines().count(), 21);

    let mut args = vec!["train"];
    args.extend(common);
    let ens = dir.path().join("ens.bin");
    args.extend(["--matrix", p(&a), "--ensemble", "3", "--model", p(&ens)]);
    ok(&args);

    let obs = ok(&["observe", "--matrix", p(&a), "--support", "0,5"]);
    let u = dir.path().join("u.txt");
    fs::write(&u, obs).unwrap();
    for m in [&model, &ens] {
        let out = ok(&["recover", "--model", p(m), "--observation", p(&u)]);
        let bits: Vec<&str> = out.split_whitespace().collect();
        assert_eq!(bits.len(), 16);
        assert!(bits.iter().all(|b| *b == "0" || *b == "1"));
    }
}

#[test]
fn benchmark_writes_csv_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let args = [
        "benchmark", "--preset", "desk", "--n", "16", "--k", "2", "--m-values", "8,12", "--curve-m", "12", "--alpha", "8",
        "--steps", "10", "--batch-size", "10", "--ensemble-sizes", "1,3", "--trials", "20",
        "--timing-instances", "10", "--timing", "--output", p(&out_dir),
    ];
    ok(&args);
    let sweep = fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    let mut lines = sweep.lines();
    assert_eq!(lines.next(), Some("#schema=onebit-sweep/1"));
    assert_eq!(
        lines.next(),
        Some("m,method,recovery_rate,wilson95_low,wilson95_high,mean_recovery_seconds")
    );
    let methods: Vec<&str> = lines.map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(methods, ["nn_s1", "nn_s3", "ip_bnb", "nn_s1", "nn_s3", "ip_bnb"]);
    let timing = fs::read_to_string(out_dir.join("timing.csv")).unwrap();
    assert!(timing.starts_with("#schema=onebit-timing/1\n"));
    assert!(out_dir.join("config.txt").exists());

    // Same seed, same table (apart from the wall-clock column).
    let strip = |s: &str| s.lines().map(|l| l.rsplit_once(',').map_or(l, |x| x.0).to_string()).collect::<Vec<_>>();
    ok(&args);
    let again = fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    assert_eq!(strip(&sweep), strip(&again));
}

#[test]
fn errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.bin");
    let out = onebit(&["recover", "--model", p(&missing), "--observation", p(&missing)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    let garbage = dir.path().join("garbage.bin");
    fs::write(&garbage, b"not a model").unwrap();
    let u = dir.path().join("u.txt");
    fs::write(&u, "+1 -1").unwrap();
    let out = onebit(&["recover", "--model", p(&garbage), "--observation", p(&u)]);
    assert_eq!(out.status.code(), Some(1));

    let out = onebit(&["benchmark", "--preset", "nonexistent"]);
    assert_eq!(out.status.code(), Some(1));

    let out = onebit(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));

    let out = Command::new(env!("CARGO_BIN_EXE_onebit"))
        .args(["matrix", "--m", "2", "--n", "2", "--out", p(&dir.path().join("a.bin"))])
        .env("ONEBIT_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
