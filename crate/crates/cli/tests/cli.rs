use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;
use sha2::{Digest, Sha256};

const BIN: &str = env!("CARGO_BIN_EXE_causal-audit");

struct Run {
    code: i32,
    dir: Option<PathBuf>,
    stderr: String,
}

fn run(args: &[&str]) -> Run {
    run_env(args, &[])
}

fn run_env(args: &[&str], env: &[(&str, &str)]) -> Run {
    let mut cmd = Command::new(BIN);
    cmd.args(args);
    for (k, v) in env {
        cmd.env(k, v);
    }
    let out = cmd.output().expect("binary runs");
    let stdout = String::from_utf8(out.stdout).unwrap();
    Run {
        code: out.status.code().unwrap_or(-1),
        dir: stdout.lines().last().map(PathBuf::from),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

fn ok(args: &[&str]) -> PathBuf {
    let r = run(args);
    assert_eq!(r.code, 0, "{args:?}: {}", r.stderr);
    r.dir.expect("run dir printed")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Relative path -> bytes for every file below `dir`.
fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn generate(tmp: &Path, extra: &[&str]) -> PathBuf {
    let out = tmp.join("gen");
    let mut args = vec!["generate", "--out", s(&out)];
    args.extend_from_slice(extra);
    ok(&args).join("dataset.csv")
}

#[test]
fn zero_units_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let r = run(&["generate", "--n", "0", "--out", s(tmp.path())]);
    assert_eq!(r.code, 2);
}

#[test]
fn generate_is_deterministic_and_reports_the_true_effect() {
    let tmp = tempfile::tempdir().unwrap();
    let flags = ["--n", "5000", "--seed", "7", "--tau-race", "-0.6"];
    let a = ok(&[&["generate", "--out", s(&tmp.path().join("a"))][..], &flags].concat());
    let b = ok(&[&["generate", "--out", s(&tmp.path().join("b"))][..], &flags].concat());
    assert_eq!(a.file_name(), b.file_name());
    assert_eq!(snapshot(&a), snapshot(&b));

    let mut rdr = csv::Reader::from_path(a.join("truth.csv")).unwrap();
    let (mut sum, mut n) = (0.0, 0.0);
    for row in rdr.deserialize::<BTreeMap<String, String>>() {
        let row = row.unwrap();
        let t: f64 = row["y_if_treated"].parse().unwrap();
        let c: f64 = row["y_if_control"].parse().unwrap();
        sum += t - c;
        n += 1.0;
    }
    assert_eq!(n, 5000.0);
    let truth = json(&a.join("truth.json"));
    assert!((truth["true_ate"].as_f64().unwrap() - sum / n).abs() < 1e-12);
    assert!(truth["true_ate"].as_f64().unwrap() < 0.0);
}

#[test]
fn degenerate_dataset_exits_one_with_sectioned_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("tiny.csv");
    fs::write(
        &data,
        "id,race,gender,country,prestige,h_index,outcome\na,0,0,0,0,1,1\nb,0,1,0,1,2,2\nc,0,0,1,0,3,3\n",
    )
    .unwrap();
    let r = run(&["audit", "--data", s(&data), "--n-boot", "200", "--out", s(&tmp.path().join("o"))]);
    assert_eq!(r.code, 1, "{}", r.stderr);
    let report = json(&r.dir.unwrap().join("report.json"));
    let race = &report["audit"]["attributes"][0];
    assert_eq!(race["attribute"], "race");
    assert!(race["estimates"][0]["estimate"].is_null());
    assert!(race["estimates"][0]["error"].as_str().unwrap().contains("no treated units"));
}

#[test]
fn missing_data_and_bad_flags_are_usage_errors() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run(&["audit", "--data", s(&tmp.path().join("nope.csv"))]).code, 2);
    assert_eq!(run(&["audit"]).code, 2);
    assert_eq!(run(&["audit", "--data", "x.csv", "--n-boot", "50"]).code, 2);
    assert_eq!(run(&["sweep", "--data", "x.csv", "--lambdas", "1,0"]).code, 2);
    let data = generate(tmp.path(), &["--n", "300"]);
    let out = tmp.path().join("o");
    assert_eq!(run(&["audit", "--data", s(&data), "--alpha", "1.5", "--out", s(&out)]).code, 2);
    assert_eq!(run(&["audit", "--data", s(&data), "--clip", "0.9,0.1", "--out", s(&out)]).code, 2);
    assert_eq!(run(&["train", "--data", s(&data), "--lambda", "-1", "--out", s(&out)]).code, 2);
    assert_eq!(run(&["ablate", "--data", s(&data), "--weights", "1", "--out", s(&out)]).code, 2);
    let r = run_env(&["generate", "--out", s(&out)], &[("CAUSAL_AUDIT_THREADS", "zero")]);
    assert_eq!(r.code, 2);
}

#[test]
fn reports_validate_against_the_published_schema() {
    let tmp = tempfile::tempdir().unwrap();
    let data = generate(tmp.path(), &["--n", "600", "--seed", "3"]);
    let d = s(&data);
    let out = tmp.path().join("runs");
    let o = s(&out);
    let dirs = [
        ok(&["audit", "--data", d, "--n-boot", "200", "--out", o]),
        ok(&["train", "--data", d, "--lambda", "1", "--epochs", "50", "--out", o]),
        ok(&["sweep", "--data", d, "--lambdas", "0,1", "--epochs", "50", "--out", o]),
        ok(&["ablate", "--data", d, "--epochs", "50", "--out", o]),
    ];
    for dir in &dirs {
        let schema = json(&dir.join("report.schema.json"));
        let validator = jsonschema::validator_for(&schema).expect("schema compiles");
        let report = json(&dir.join("report.json"));
        let errors: Vec<String> = validator.iter_errors(&report).map(|e| e.to_string()).collect();
        assert!(errors.is_empty(), "{}: {errors:?}", dir.display());
        assert_eq!(report["run_id"].as_str(), dir.file_name().and_then(|n| n.to_str()));

        let index = json(&dir.join("index.json"));
        for f in index["files"].as_array().unwrap() {
            let bytes = fs::read(dir.join(f["path"].as_str().unwrap())).unwrap();
            assert_eq!(f["sha256"].as_str().unwrap(), hex::encode(Sha256::digest(&bytes)));
        }
    }
    let mut broken = json(&dirs[0].join("report.json"));
    broken["audit"]["attributes"][0]["attribute"] = "age".into();
    let schema = json(&dirs[0].join("report.schema.json"));
    assert!(!jsonschema::is_valid(&schema, &broken));
}

#[test]
fn config_file_overrides_flags_and_rejects_unknown_keys() {
    let tmp = tempfile::tempdir().unwrap();
    let data = generate(tmp.path(), &["--n", "400"]);
    let cfg = tmp.path().join("cfg.json");
    let out = tmp.path().join("o");

    fs::write(&cfg, r#"{"n_boot": 250, "seed": 9}"#).unwrap();
    let dir = ok(&["audit", "--config", s(&cfg), "--data", s(&data), "--n-boot", "900", "--out", s(&out)]);
    let rc = json(&dir.join("run_config.json"));
    assert_eq!(rc["n_boot"], 250);
    assert_eq!(rc["seed"], 9);
    let est = &json(&dir.join("report.json"))["audit"]["attributes"][1]["estimates"][0]["estimate"];
    assert_eq!(est["n_boot"], 250);
    assert_eq!(est["seed"], 9);

    fs::write(&cfg, r#"{"n_boots": 250}"#).unwrap();
    let r = run(&["audit", "--config", s(&cfg), "--data", s(&data), "--out", s(&out)]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("n_boots"));

    fs::write(&cfg, r#"{"command": "sweep"}"#).unwrap();
    assert_eq!(run(&["audit", "--config", s(&cfg), "--data", s(&data), "--out", s(&out)]).code, 2);
    fs::write(&cfg, "[1, 2]").unwrap();
    assert_eq!(run(&["audit", "--config", s(&cfg), "--data", s(&data), "--out", s(&out)]).code, 2);
    fs::write(&cfg, r#"{"n_boot": "many"}"#).unwrap();
    assert_eq!(run(&["audit", "--config", s(&cfg), "--data", s(&data), "--out", s(&out)]).code, 2);
}

#[test]
fn persisted_run_config_replays_bit_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let data = generate(tmp.path(), &["--n", "500", "--seed", "11"]);
    let first = ok(&["audit", "--data", s(&data), "--n-boot", "200", "--seed", "4", "--out", s(&tmp.path().join("a"))]);
    let cfg = first.join("run_config.json");
    let again = ok(&["audit", "--config", s(&cfg), "--out", s(&tmp.path().join("b"))]);
    assert_eq!(first.file_name(), again.file_name());
    assert_eq!(snapshot(&first), snapshot(&again));

    let sw = ok(&["sweep", "--data", s(&data), "--lambdas", "0,2", "--epochs", "40", "--out", s(&tmp.path().join("c"))]);
    let sw2 = ok(&["sweep", "--config", s(&sw.join("run_config.json")), "--out", s(&tmp.path().join("d"))]);
    assert_eq!(snapshot(&sw), snapshot(&sw2));

    let threaded = run_env(
        &["sweep", "--config", s(&sw.join("run_config.json")), "--out", s(&tmp.path().join("e"))],
        &[("CAUSAL_AUDIT_THREADS", "3")],
    );
    assert_eq!(threaded.code, 0);
    assert_eq!(snapshot(&sw), snapshot(&threaded.dir.unwrap()));
}

#[test]
fn report_rerenders_identical_views() {
    let tmp = tempfile::tempdir().unwrap();
    let data = generate(tmp.path(), &["--n", "500"]);
    let out = tmp.path().join("o");
    let dirs = [
        ok(&["audit", "--data", s(&data), "--n-boot", "200", "--out", s(&out)]),
        ok(&["ablate", "--data", s(&data), "--epochs", "40", "--out", s(&out)]),
        ok(&["train", "--data", s(&data), "--lambda", "2", "--epochs", "40", "--out", s(&out)]),
    ];
    for dir in dirs {
        let before = snapshot(&dir);
        fs::remove_dir_all(dir.join("tables")).unwrap();
        fs::remove_dir_all(dir.join("figures")).ok();
        ok(&["report", s(&dir)]);
        let after = snapshot(&dir);
        let views = |m: &BTreeMap<String, Vec<u8>>| -> BTreeMap<String, Vec<u8>> {
            m.iter()
                .filter(|(k, _)| (k.starts_with("tables") || k.starts_with("figures")) && !k.ends_with("ranking.csv"))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect()
        };
        assert!(!views(&before).is_empty());
        assert_eq!(views(&before), views(&after), "{}", dir.display());
    }
    assert_eq!(run(&["report", s(&tmp.path().join("missing"))]).code, 1);
}

#[test]
fn audit_outputs_are_complete() {
    let tmp = tempfile::tempdir().unwrap();
    let data = generate(tmp.path(), &["--n", "800"]);
    let dir = ok(&["audit", "--data", s(&data), "--n-boot", "200", "--out", s(&tmp.path().join("o"))]);
    for f in [
        "tables/summary.txt",
        "tables/balance.csv",
        "tables/ate.csv",
        "tables/ate.txt",
        "tables/stratified.csv",
        "tables/intersectional.csv",
        "figures/ate_forest.svg",
        "figures/propensity_overlap_race.svg",
        "figures/acceptance_by_h_index_country.svg",
    ] {
        assert!(dir.join(f).is_file(), "{f}");
    }
    let ate = fs::read_to_string(dir.join("tables/ate.csv")).unwrap();
    let header = ate.lines().next().unwrap();
    assert!(header.contains("method") && header.contains("seed"));
    assert_eq!(ate.lines().count(), 7);
    let report = json(&dir.join("report.json"));
    for a in report["audit"]["attributes"].as_array().unwrap() {
        for e in a["estimates"].as_array().unwrap() {
            let est = &e["estimate"];
            let ci = est["ci"].as_array().unwrap();
            assert!(ci[0].as_f64() <= est["ate"].as_f64() && est["ate"].as_f64() <= ci[1].as_f64());
            assert_eq!(est["seed"], 0);
        }
    }
}

fn sweep_rows(dir: &Path) -> Vec<Value> {
    json(&dir.join("report.json"))["study"]["rows"].as_array().unwrap().clone()
}

#[test]
fn sweep_shrinks_race_effect_and_lambda_zero_matches_train() {
    let tmp = tempfile::tempdir().unwrap();
    let data = generate(
        tmp.path(),
        &["--n", "3000", "--seed", "2", "--race-rate", "0.2", "--tau-race", "-1.0", "--confounding", "0"],
    );
    let out = tmp.path().join("o");
    let sw = ok(&["sweep", "--data", s(&data), "--epochs", "600", "--out", s(&out)]);
    let rows = sweep_rows(&sw);
    let lambdas: Vec<f64> = rows.iter().map(|r| r["lambda"].as_f64().unwrap()).collect();
    assert_eq!(lambdas, [0.0, 0.5, 1.0, 5.0, 10.0]);
    let ate = |i: usize| rows[i]["ate_race"].as_f64().unwrap().abs();
    assert!(ate(4) < ate(0), "{} vs {}", ate(4), ate(0));
    assert!(sw.join("figures/ate_vs_lambda.svg").is_file());
    assert_eq!(fs::read_dir(sw.join("models")).unwrap().count(), 5);

    let tr = ok(&["train", "--data", s(&data), "--lambda", "0", "--epochs", "600", "--out", s(&out)]);
    let groups = &json(&tr.join("report.json"))["train"]["model"]["evaluation"]["groups"];
    for (i, attr) in ["race", "gender", "country"].iter().enumerate() {
        assert_eq!(groups[i]["attribute"], *attr);
        assert_eq!(groups[i]["rank_gap"], rows[0][format!("rank_gap_{attr}")]);
    }
}

#[test]
fn ablation_table_layout() {
    let tmp = tempfile::tempdir().unwrap();
    let data = generate(tmp.path(), &["--n", "500"]);
    let dir = ok(&["ablate", "--data", s(&data), "--epochs", "40", "--out", s(&tmp.path().join("o"))]);
    let txt = fs::read_to_string(dir.join("tables/ablation.txt")).unwrap();
    let lines: Vec<&str> = txt.lines().collect();
    assert!(lines[0].starts_with("Weights (race:country)"));
    assert!(lines[0].contains("Race gap") && lines[0].contains("Country gap") && lines[0].contains("NDCG"));
    for (line, label) in lines[2..].iter().zip([
        "Baseline",
        "Balanced (0.5:0.5)",
        "Race-Focused (0.9:0.1)",
        "Country-Focused (0.1:0.9)",
    ]) {
        assert!(line.starts_with(label), "{line}");
    }
}

#[test]
fn audit_interval_covers_true_effect_across_replications() {
    let tmp = tempfile::tempdir().unwrap();
    let mut covered = 0;
    for rep in 0..20u64 {
        let seed = rep.to_string();
        let root = tmp.path().join(format!("r{rep}"));
        let gen = ok(&["generate", "--n", "2000", "--seed", &seed, "--out", s(&root)]);
        let truth = json(&gen.join("truth.json"))["true_ate"].as_f64().unwrap();
        let data = gen.join("dataset.csv");
        let dir = ok(&["audit", "--data", s(&data), "--n-boot", "200", "--seed", &seed, "--strata", "1", "--out", s(&root)]);
        let est = &json(&dir.join("report.json"))["audit"]["attributes"][0]["estimates"][0]["estimate"];
        assert_eq!(est["method"], "ipw");
        let lo = est["ci"][0].as_f64().unwrap();
        let hi = est["ci"][1].as_f64().unwrap();
        covered += usize::from(lo <= truth && truth <= hi);
    }
    assert!(covered >= 18, "covered {covered} of 20");
}
