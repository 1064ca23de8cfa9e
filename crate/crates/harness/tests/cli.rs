use std::path::{Path, PathBuf};
use std::process::Command;

use batsim::ExperimentConfig;
use batsim_core::converter::ConverterParams;
use serde_json::Value;
use tempfile::TempDir;

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn batsim(args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_batsim")).args(args).output().unwrap();
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn write_config(dir: &Path, cfg: &Value) -> String {
    write(dir, "config.json", &cfg.to_string()).display().to_string()
}

fn zero_params(dir: &Path) -> PathBuf {
    write(dir, "zero.json", &serde_json::to_string(&ConverterParams::zeros()).unwrap())
}

const EVENTS: &str = "outs_pre,bases_pre,outcome,outs_post,bases_post,runs
0,0,SINGLE,0,1,0
0,1,SINGLE,0,3,0
0,1,SINGLE,0,5,0
0,3,K,1,3,0
1,3,GO,2,6,0
2,6,HR,2,0,3
";

#[test]
fn print_config_dumps_defaults() {
    let r = batsim(&["--print-config", "--seed", "5"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let cfg: ExperimentConfig = serde_json::from_str(&r.stdout).unwrap();
    assert_eq!(cfg.seed, 5);
    assert_eq!(ExperimentConfig { seed: 2018, ..cfg }, ExperimentConfig::default());
}

#[test]
fn build_transitions_from_small_log() {
    let dir = TempDir::new().unwrap();
    let events = write(dir.path(), "events.csv", EVENTS);
    let r = batsim(&["build-transitions", events.to_str().unwrap()]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let table: Value = serde_json::from_str(&r.stdout).unwrap();
    let rows = table["rows"].as_object().unwrap();
    assert!(rows.len() <= 6 && !rows.is_empty());
    assert!(rows.contains_key("0-1-SINGLE"));
}

#[test]
fn build_transitions_errors_and_lenient_mode() {
    let dir = TempDir::new().unwrap();
    let empty = write(dir.path(), "empty.csv", "");
    let r = batsim(&["build-transitions", empty.to_str().unwrap()]);
    assert_eq!(r.code, 3);
    assert!(r.stderr.contains("no events"), "{}", r.stderr);

    let bad = EVENTS.replace("0,3,K,1,3,0", "0,3,K,1,3,5");
    let bad = write(dir.path(), "bad.csv", &bad);
    let strict = batsim(&["build-transitions", bad.to_str().unwrap()]);
    assert_eq!(strict.code, 3);
    assert!(strict.stderr.contains("line 5"), "{}", strict.stderr);
    let lenient = batsim(&["build-transitions", bad.to_str().unwrap(), "--lenient"]);
    assert_eq!(lenient.code, 0, "{}", lenient.stderr);
    assert!(lenient.stderr.contains("1 rejected"), "{}", lenient.stderr);
}

#[test]
fn config_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), &serde_json::json!({ "n_games": 0 }));
    assert_eq!(batsim(&["--config", &cfg, "simulate"]).code, 2);
    let cfg = write_config(dir.path(), &serde_json::json!({ "converter": { "n_players": 1 } }));
    let r = batsim(&["--config", &cfg, "train-converter"]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("at least two players"), "{}", r.stderr);
    assert_eq!(batsim(&["--config", "/nonexistent/config.json", "simulate"]).code, 2);
    assert_eq!(batsim(&["no-such-command"]).code, 2);
}

#[test]
fn simulate_writes_stats_and_histogram() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), &serde_json::json!({ "n_games": 2000 }));
    let hist = dir.path().join("hist.csv");
    let r = batsim(&["--config", &cfg, "simulate", "--histogram", hist.to_str().unwrap()]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let v: Value = serde_json::from_str(&r.stdout).unwrap();
    assert_eq!(v["stats"]["n"], 2000);
    let text = std::fs::read_to_string(hist).unwrap();
    assert!(text.starts_with("runs,count\n"));
    let total: u64 = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse::<u64>().unwrap()).sum();
    assert_eq!(total, 2000);
}

#[test]
fn validate_against_own_and_other_seed() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), &serde_json::json!({ "n_games": 100000 }));
    let own = dir.path().join("own.csv");
    let other = dir.path().join("other.csv");
    for (seed, path) in [("1", &own), ("2", &other)] {
        let r = batsim(&["--config", &cfg, "--seed", seed, "simulate", "--histogram", path.to_str().unwrap()]);
        assert_eq!(r.code, 0, "{}", r.stderr);
    }
    let paired = dir.path().join("paired.csv");
    let r = batsim(&[
        "--config",
        &cfg,
        "--seed",
        "1",
        "validate",
        "--reference",
        own.to_str().unwrap(),
        "--histogram",
        paired.to_str().unwrap(),
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let v: Value = serde_json::from_str(&r.stdout).unwrap();
    assert_eq!(v["tv_distance"], 0.0);
    assert_eq!(v["mean_difference"], 0.0);
    assert!(std::fs::read_to_string(paired).unwrap().starts_with("runs,simulated,reference\n"));

    let r = batsim(&["--config", &cfg, "--seed", "1", "validate", "--reference", other.to_str().unwrap()]);
    let v: Value = serde_json::from_str(&r.stdout).unwrap();
    assert!(v["tv_distance"].as_f64().unwrap() < 0.02, "{v}");

    let bad = write(dir.path(), "bad.csv", "runs,count\n0,5\n1,-2\n");
    let r = batsim(&["--config", &cfg, "validate", "--reference", bad.to_str().unwrap()]);
    assert_eq!(r.code, 3);
    assert!(r.stderr.contains("line 3"), "{}", r.stderr);
    let missing = dir.path().join("missing.csv");
    assert_eq!(batsim(&["validate", "--reference", missing.to_str().unwrap()]).code, 3);
}

fn sweep_rows(text: &str) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(
        r.headers().unwrap().iter().collect::<Vec<_>>().join(","),
        "mode,d_alpha,d_woba,theta_o,theta_l,mean_runs,stderr,delta_vs_baseline,n_games,truncated,fallbacks,infeasible_triples"
    );
    r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect()
}

fn num(s: &str) -> f64 {
    s.parse().unwrap()
}

#[test]
fn degenerate_sweep_matches_baseline() {
    let dir = TempDir::new().unwrap();
    let params = zero_params(dir.path());
    let cfg = write_config(
        dir.path(),
        &serde_json::json!({
            "n_games": 5000,
            "converter": { "params_path": params },
            "sweep": { "d_alpha_grid": [0.0], "d_woba_grid": [0.0] }
        }),
    );
    let r = batsim(&["--config", &cfg, "sweep"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let rows = sweep_rows(&r.stdout);
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][0], "baseline");
    assert_eq!(num(&rows[0][7]), 0.0);
    let (d, se) = (num(&rows[1][7]), num(&rows[1][6]));
    assert!(d.abs() <= 2.0 * se * 2f64.sqrt(), "delta {d}");
}

#[test]
fn full_grid_has_every_pair_plus_baseline() {
    let dir = TempDir::new().unwrap();
    let params = zero_params(dir.path());
    let cfg = write_config(
        dir.path(),
        &serde_json::json!({ "n_games": 200, "converter": { "params_path": params } }),
    );
    let r = batsim(&["--config", &cfg, "sweep", "--mode", "strategy-grid"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let rows = sweep_rows(&r.stdout);
    assert_eq!(rows.len(), 29);
    assert!(rows[1..].iter().all(|r| r[0] == "strategy-grid"));
    let first: Vec<&str> = rows[1..].iter().take(4).map(|r| r[2].as_str()).collect();
    assert_eq!(first, ["0", "-0.005", "-0.01", "-0.015"]);
}

#[test]
fn threshold_sweep_skips_invalid_pairs_and_shares_baseline() {
    let dir = TempDir::new().unwrap();
    let params = zero_params(dir.path());
    let cfg = write_config(
        dir.path(),
        &serde_json::json!({
            "n_games": 3000,
            "converter": { "params_path": params },
            "sweep": {
                "d_alpha_grid": [0.1],
                "d_woba_grid": [0.0],
                "theta_o_grid": [0.3, 1.0],
                "theta_l_grid": [0.3, 0.5]
            }
        }),
    );
    let t = batsim(&["--config", &cfg, "-vv", "sweep", "--mode", "threshold-grid"]);
    assert_eq!(t.code, 0, "{}", t.stderr);
    let rows = sweep_rows(&t.stdout);
    // (0.3, 0.3) and (0.3, 0.5) are skipped.
    assert_eq!(rows.len(), 3);
    assert!(t.stderr.contains("skipping theta_o=0.3 theta_l=0.5"), "{}", t.stderr);
    assert_eq!((num(&rows[1][3]), num(&rows[1][4])), (1.0, 0.3));

    let s = batsim(&["--config", &cfg, "sweep", "--mode", "strategy-grid"]);
    let srows = sweep_rows(&s.stdout);
    assert_eq!(srows[0], rows[0]);

    // Flag totals are plain sums of the per-row counts.
    for rows in [&rows, &srows] {
        for col in [9, 10, 11] {
            let total: u64 = rows.iter().map(|r| r[col].parse::<u64>().unwrap()).sum();
            assert!(total >= rows.iter().map(|r| r[col].parse::<u64>().unwrap()).max().unwrap());
        }
    }
}

#[test]
fn compute_re_fit_lineup_and_convert() {
    let dir = TempDir::new().unwrap();
    let r = batsim(&["compute-re"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let v: Value = serde_json::from_str(&r.stdout).unwrap();
    let re = v["run_expectancy"].as_object().unwrap();
    assert_eq!(re.len(), 24);
    assert!(re["0-0"].as_f64().unwrap() > re["2-0"].as_f64().unwrap());

    let r = batsim(&["fit-lineup"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(r.stdout, batsim::data::TABLE1_FITTED_JSON);

    let params = zero_params(dir.path());
    let cfg = write_config(dir.path(), &serde_json::json!({ "converter": { "params_path": params } }));
    let r = batsim(&["--config", &cfg, "convert", "--slot", "4", "--d-alpha", "0", "--d-woba", "0"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let v: Value = serde_json::from_str(&r.stdout).unwrap();
    assert_eq!(v["normal"], v["converted"]);
    let r = batsim(&["--config", &cfg, "convert", "--d-alpha", "0.1", "--d-woba", "0.01"]);
    assert_eq!(r.code, 2);
}
