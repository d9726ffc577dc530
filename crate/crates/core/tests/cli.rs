use std::path::{Path, PathBuf};

use univlab::cli::{run, EXIT_FAILURE, EXIT_OK, EXIT_USAGE};

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("univlab-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn univlab(args: &[&str]) -> i32 {
    run(std::iter::once("univlab").chain(args.iter().copied()))
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&read(path)).unwrap()
}

const CAUCHY: &str = r#"{"ensemble":{"family":"finite_support_toy","d":2,"n":3,"seed":1},
  "observable":{"kind":"cauchy","zeta":[0.0,1.0]},"samples":500,"seed":3}"#;
const CAUCHY_REORDERED: &str = r#"{"seed":3,"samples":500,
  "observable":{"zeta":[0.0,1.0],"kind":"cauchy"},"ensemble":{"seed":1,"n":3,"d":2,"family":"finite_support_toy"}}"#;

#[test]
fn usage_errors_exit_with_two() {
    let dir = scratch("usage");
    assert_eq!(univlab(&["no-such-command"]), EXIT_USAGE);
    assert_eq!(univlab(&["bench", "--bogus"]), EXIT_USAGE);
    let out = dir.join("o");
    let out = out.to_str().unwrap();
    assert_eq!(univlab(&["bench", "--observable", "nope", "--out", out]), EXIT_USAGE);
    assert_eq!(univlab(&["bench", "--sweep", "m=1,2", "--out", out]), EXIT_USAGE);
    let bad = dir.join("bad.json");
    std::fs::write(&bad, "{not json").unwrap();
    assert_eq!(univlab(&["bench", "--config", bad.to_str().unwrap(), "--out", out]), EXIT_USAGE);
    let invalid = dir.join("invalid.json");
    std::fs::write(&invalid, CAUCHY.replace("\"samples\":500", "\"samples\":5")).unwrap();
    assert_eq!(univlab(&["bench", "--config", invalid.to_str().unwrap(), "--out", out]), EXIT_USAGE);
    let unknown = dir.join("unknown.json");
    std::fs::write(&unknown, r#"{"seed":1,"colour":"red"}"#).unwrap();
    assert_eq!(univlab(&["verify-identities", "--config", unknown.to_str().unwrap(), "--out", out]), EXIT_USAGE);
    assert_eq!(univlab(&["stats", "--threads", "0", "--out", out]), EXIT_USAGE);
    assert_eq!(univlab(&["--help"]), EXIT_OK);
}

#[test]
fn verify_identities_writes_reports() {
    let dir = scratch("identities");
    let out = dir.join("run");
    let code = univlab(&["verify-identities", "--filter", "cube-inequality", "--out", out.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK);
    let report = json(&out.join("report.json"));
    assert_eq!(report["total"], 3);
    assert_eq!(report["passed"], 3);
    let csv = read(&out.join("summary.csv"));
    assert_eq!(csv.lines().count(), 4);
    let manifest = json(&out.join("manifest.json"));
    assert_eq!(manifest["command"], "verify-identities");
    assert!(manifest["config_hash"].as_str().unwrap().len() >= 16);
}

#[test]
fn bench_is_deterministic_and_thread_independent() {
    let dir = scratch("bench");
    let cfg = dir.join("cauchy.json");
    std::fs::write(&cfg, CAUCHY).unwrap();
    let (a, b) = (dir.join("a"), dir.join("b"));
    let cfg = cfg.to_str().unwrap();
    assert_eq!(univlab(&["bench", "--config", cfg, "--out", a.to_str().unwrap()]), EXIT_OK);
    assert_eq!(univlab(&["bench", "--config", cfg, "--threads", "1", "--out", b.to_str().unwrap()]), EXIT_OK);
    for file in ["report.json", "summary.csv"] {
        assert_eq!(read(&a.join(file)), read(&b.join(file)), "{file}");
    }
    let report = json(&a.join("report.json"));
    assert_eq!(report["pass"], true);
    assert_eq!(report["reports"].as_array().unwrap().len(), 1);
}

#[test]
fn manifest_hash_ignores_key_order_and_tracks_seed() {
    let dir = scratch("hash");
    let hash = |text: &str, name: &str, extra: &[&str]| {
        let cfg = dir.join(format!("{name}.json"));
        std::fs::write(&cfg, text).unwrap();
        let out = dir.join(name);
        let mut args = vec!["bench", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
        args.extend_from_slice(extra);
        assert_eq!(univlab(&args), EXIT_OK);
        json(&out.join("manifest.json"))["config_hash"].as_str().unwrap().to_string()
    };
    let h1 = hash(CAUCHY, "plain", &[]);
    let h2 = hash(CAUCHY_REORDERED, "reordered", &[]);
    let h3 = hash(CAUCHY, "seeded", &["--seed", "99"]);
    assert_eq!(h1, h2);
    assert_ne!(h1, h3);
}

#[test]
fn bench_sweep_writes_sweep_csv() {
    let dir = scratch("sweep");
    let cfg = dir.join("moments.json");
    std::fs::write(
        &cfg,
        r#"{"ensemble":{"family":"rademacher_scalar","n":10},"observable":{"kind":"scalar_moments","p":4.0},"mode":"exact"}"#,
    )
    .unwrap();
    let out = dir.join("run");
    let code = univlab(&["bench", "--config", cfg.to_str().unwrap(), "--sweep", "n=10,20,40", "--out", out.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK);
    let csv = read(&out.join("sweep.csv"));
    assert_eq!(csv.lines().count(), 4);
    let report = json(&out.join("report.json"));
    assert_eq!(report["sweeps"][0]["ns"], serde_json::json!([10, 20, 40]));
}

#[test]
fn stats_writes_statistics_and_spectrum() {
    let dir = scratch("stats");
    let out = dir.join("run");
    assert_eq!(univlab(&["stats", "--out", out.to_str().unwrap()]), EXIT_OK);
    let report = json(&out.join("report.json"));
    assert_eq!(report["statistics"]["sigma2"]["provenance"], "exact");
    let msd = read(&out.join("msd.csv"));
    assert!(msd.starts_with("bin_center,mass"));
    let mass: f64 = msd.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap()).sum();
    assert!((mass - 1.0).abs() < 1e-9);
}

#[test]
fn unbounded_summands_fail_in_exact_mode() {
    let dir = scratch("unbounded");
    let cfg = dir.join("big.json");
    std::fs::write(
        &cfg,
        r#"{"ensemble":{"family":"gaussian_coefficient","d":2,"n":4,"seed":1},"observable":{"kind":"resolvent_norm","zeta":[0.0,1.0],"p":2},"mode":"exact"}"#,
    )
    .unwrap();
    let out = dir.join("run");
    let out = out.to_str().unwrap();
    assert_eq!(univlab(&["bench", "--config", cfg.to_str().unwrap(), "--out", out]), EXIT_FAILURE);
    // Monte Carlo mode substitutes a running maximum and flags the affected forms.
    assert_eq!(univlab(&["bench", "--config", cfg.to_str().unwrap(), "--mode", "mc", "--out", out]), EXIT_OK);
    let report = json(&Path::new(out).join("report.json"));
    assert_eq!(report["reports"][0]["optimistic"], true);
}
