//! End-to-end runs of the `qdeny` binary.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const SCHEMA: &str = include_str!("../schema/report.schema.json");

fn qdeny(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qdeny"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn assert_schema_valid(report: &Value) {
    let schema: Value = serde_json::from_str(SCHEMA).unwrap();
    let v = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = v.iter_errors(report).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{errors:?}");
}

fn run_report(args: &[&str], dir: &Path, name: &str) -> (i32, Value) {
    let out = dir.join(name);
    let mut all = args.to_vec();
    all.extend(["--out", out.to_str().unwrap()]);
    let o = qdeny(&all);
    let c = code(&o);
    assert!(
        c != 2,
        "usage error: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    (c, read_json(&out))
}

#[test]
fn twin_deniability_passes_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "deniability-exp",
        "--family",
        "twin",
        "--n",
        "8",
        "--trials",
        "4",
        "--seed",
        "42",
    ];
    let (c1, r1) = run_report(&args, dir.path(), "a.json");
    let (c2, r2) = run_report(&args, dir.path(), "b.json");
    assert_eq!((c1, c2), (0, 0));
    assert!(r1["metrics"]["max_trace_distance"].as_f64().unwrap() <= 1e-10);
    assert_eq!(r1["metrics"], r2["metrics"]);
    assert_eq!(r1["criteria"], r2["criteria"]);
    assert_schema_valid(&r1);
}

#[test]
fn oracle_equivalence_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let (c, r) = run_report(
        &[
            "oracle-equiv",
            "--n",
            "3",
            "--circuits",
            "40",
            "--seed",
            "7",
        ],
        dir.path(),
        "r.json",
    );
    assert_eq!(c, 0);
    assert!(r["metrics"]["max_tv"].as_f64().unwrap() <= 1e-9);
    assert_eq!(r["metrics"]["tvs"].as_array().unwrap().len(), 40);
    assert_schema_valid(&r);
}

#[test]
fn failed_check_exits_one_and_still_writes_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let (c, r) = run_report(
        &[
            "extract-claw",
            "--trials",
            "50",
            "--seed",
            "4",
            "--tol",
            "claw_rate_min=0.99",
        ],
        dir.path(),
        "r.json",
    );
    assert_eq!(c, 1);
    assert_eq!(r["pass"], Value::Bool(false));
    assert_schema_valid(&r);
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    for bad in [
        r#"{"experiment":"oracle-equiv","seed":1,"circuitz":3}"#,
        r#"{"experiment":"oracle-equiv"}"#,
        r#"{"experiment":"no-such","seed":1}"#,
        r#"{"experiment":"oracle-equiv","seed":1,"family":"twin"}"#,
        r#"{"experiment":"oracle-equiv","seed":1,"tolerances":{"tv":0.1}}"#,
        r#"{"experiment":"bound-check","seed":1,"L":2,"l":2}"#,
    ] {
        std::fs::write(&cfg, bad).unwrap();
        let o = qdeny(&["run", "--config", cfg.to_str().unwrap()]);
        assert_eq!(code(&o), 2, "{bad}");
    }
    assert_eq!(code(&qdeny(&["oracle-equiv", "--circuits", "3"])), 2);
    assert_eq!(
        code(&qdeny(&[
            "extract-claw",
            "--seed",
            "1",
            "--family",
            "lattice"
        ])),
        2
    );
}

#[test]
fn run_config_matches_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(
        &cfg,
        r#"{"experiment":"bound-check","seed":9,"n":6,"L":2,"l":1,"keys":2,"tolerances":{"equality":1e-13}}"#,
    )
    .unwrap();
    let out = dir.path().join("a.json");
    let o = qdeny(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let a = read_json(&out);
    let (_, b) = run_report(
        &[
            "bound-check",
            "--seed",
            "9",
            "--n",
            "6",
            "--L",
            "2",
            "--l",
            "1",
            "--keys",
            "2",
            "--tol",
            "equality=1e-13",
        ],
        dir.path(),
        "b.json",
    );
    assert_eq!(a["metrics"], b["metrics"]);
    assert_eq!(a["metrics"]["bound"].as_f64().unwrap(), 0.5);
}

#[test]
fn structure_experiments_pass() {
    let dir = tempfile::tempdir().unwrap();
    for (i, args) in [
        vec!["xor-structure", "--seed", "1", "--keys", "2"],
        vec![
            "xor-structure",
            "--seed",
            "1",
            "--keys",
            "2",
            "--strategy",
            "broken",
        ],
        vec!["clean-structure", "--seed", "3", "--keys", "2"],
        vec![
            "extract-claw",
            "--seed",
            "4",
            "--trials",
            "100",
            "--strategy",
            "noquery",
        ],
    ]
    .into_iter()
    .enumerate()
    {
        let (c, r) = run_report(&args, dir.path(), &format!("{i}.json"));
        assert_eq!(c, 0, "{args:?}");
        assert!(!r["criteria"].as_array().unwrap().is_empty());
        assert_schema_valid(&r);
    }
}

#[test]
fn bound_check_skips_when_precondition_fails() {
    let dir = tempfile::tempdir().unwrap();
    let (c, r) = run_report(
        &[
            "bound-check",
            "--seed",
            "2",
            "--n",
            "6",
            "--L",
            "2",
            "--keys",
            "1",
            "--strategy",
            "honest",
        ],
        dir.path(),
        "r.json",
    );
    assert_eq!(c, 0);
    assert_eq!(r["metrics"]["precondition"], Value::Bool(false));
    assert!(r["criteria"].as_array().unwrap().is_empty());
}

#[test]
fn keygen_encrypt_decrypt_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n).to_str().unwrap().to_string();
    let (k, t, c) = (p("key.json"), p("td.json"), p("ct.json"));
    assert_eq!(
        code(&qdeny(&[
            "keygen",
            "--family",
            "exact",
            "--n",
            "8",
            "--seed",
            "11",
            "--key-out",
            &k,
            "--td-out",
            &t
        ])),
        0
    );
    for scheme in ["deniable", "unexp"] {
        for m in ["0", "1"] {
            let o = qdeny(&[
                "encrypt", "--key", &k, "--td", &t, "--scheme", scheme, "-m", m, "--seed", "5",
                "--out", &c,
            ]);
            assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
            let o = qdeny(&["decrypt", "--key", &k, "--td", &t, "--in", &c]);
            assert_eq!(code(&o), 0);
            let v: Value = serde_json::from_slice(&o.stdout).unwrap();
            assert_eq!(v["message"].to_string(), m, "{scheme}");
        }
    }

    let mut ct = read_json(Path::new(&c));
    let z = ct["ciphertext"]["z_prime"].as_str().unwrap().to_string();
    let flipped = format!("{:02x}", u8::from_str_radix(&z, 16).unwrap() ^ 1);
    ct["ciphertext"]["z_prime"] = Value::String(flipped);
    std::fs::write(&c, ct.to_string()).unwrap();
    let o = qdeny(&["decrypt", "--key", &k, "--td", &t, "--in", &c]);
    assert_eq!(code(&o), 1);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["message"].is_null());

    let o = qdeny(&[
        "decrypt",
        "--family",
        "exact",
        "--n",
        "8",
        "--key-seed",
        "12",
        "--in",
        &c,
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn lattice_keys_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let c = dir.path().join("ct.json");
    let c = c.to_str().unwrap();
    let src = ["--family", "lattice", "--preset", "desk", "--key-seed", "3"];
    let mut enc = vec![
        "encrypt", "--scheme", "unexp", "--L", "2", "-m", "1", "--seed", "8", "--out", c,
    ];
    enc.extend(src);
    assert_eq!(code(&qdeny(&enc)), 0);
    let mut dec = vec!["decrypt", "--in", c];
    dec.extend(src);
    let o = qdeny(&dec);
    assert_eq!(code(&o), 0);
    assert_eq!(
        serde_json::from_slice::<Value>(&o.stdout).unwrap()["message"],
        1
    );
}

#[test]
fn fast_suite_reports_every_criterion() {
    let dir = tempfile::tempdir().unwrap();
    let (c, r) = run_report(
        &["suite", "--profile", "fast", "--seed", "1"],
        dir.path(),
        "s.json",
    );
    let ids: Vec<&str> = r["criteria"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["id"].as_str().unwrap())
        .collect();
    let want: Vec<String> = (1..=10).map(|i| format!("C{i}")).collect();
    assert_eq!(ids, want);
    assert_eq!(c, 0, "{}", r["criteria"]);
    assert_eq!(r["timings"].as_object().unwrap().len(), 10);
    assert_schema_valid(&r);
}
