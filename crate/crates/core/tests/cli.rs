use std::fmt::Write as _;
use std::path::Path;
use std::process::{Command, Output};

fn varbench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_varbench"))
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_scores(path: &Path, shift: f64) {
    let mut s = String::from("task,algorithm,replicate,value,seed_data\n");
    for r in 1..=30u32 {
        // A deterministic wiggle keeps the two columns from tying.
        let wiggle = 0.01 * ((r * 7 % 11) as f64 / 11.0 - 0.5);
        writeln!(s, "cifar,A,{r},{},{}", 0.80 + shift + wiggle, 40 + r).unwrap();
        writeln!(s, "cifar,B,{r},{},{}", 0.80 - wiggle * 0.5, 40 + r).unwrap();
    }
    std::fs::write(path, s).unwrap();
}

#[test]
fn clear_separation_is_significant_and_meaningful() {
    let dir = tempfile::tempdir().unwrap();
    let scores = dir.path().join("scores.csv");
    let out = dir.path().join("decision.json");
    write_scores(&scores, 0.05);
    let o = varbench(&[
        "compare",
        scores.to_str().unwrap(),
        "--seed",
        "1",
        "--pair-on",
        "data",
        "--format",
        "records",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let doc: serde_json::Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(doc["data"]["decision"]["verdict"], "significant_and_meaningful", "{doc}");
    assert_eq!(doc["data"]["decision"]["p_a_gt_b"], 1.0);
    assert_eq!(doc["header"]["seed"], 1);
}

#[test]
fn swapping_algorithms_flips_the_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let scores = dir.path().join("scores.csv");
    write_scores(&scores, 0.05);
    let o = varbench(&["compare", scores.to_str().unwrap(), "--seed", "1", "--a", "B", "--b", "A"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("not_significant") || stdout(&o).contains("not significant"), "{}", stdout(&o));
}

#[test]
fn csv_output_carries_provenance_header() {
    let dir = tempfile::tempdir().unwrap();
    let scores = dir.path().join("scores.csv");
    let out = dir.path().join("decision.csv");
    write_scores(&scores, 0.05);
    let o = varbench(&["compare", scores.to_str().unwrap(), "--seed", "9", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# varbench "));
    assert_eq!(lines.next().unwrap(), "# command: compare");
    assert_eq!(lines.next().unwrap(), "# seed: 9");
    assert!(lines.next().unwrap().starts_with("# config: {"));
}

#[test]
fn stochastic_commands_require_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let scores = dir.path().join("scores.csv");
    write_scores(&scores, 0.05);
    for args in [
        vec!["compare", scores.to_str().unwrap()],
        vec!["simulate", "--repetitions", "100"],
        vec!["hpo-demo"],
    ] {
        let o = varbench(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
        assert!(stderr(&o).contains("seed"), "{}", stderr(&o));
    }
}

#[test]
fn sample_size_defaults_to_29() {
    let o = varbench(&["sample-size"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "29\n");
}

#[test]
fn gamma_near_half_warns() {
    let o = varbench(&["sample-size", "--gamma", "0.51"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).trim().parse::<u64>().unwrap() > 10_000);
    assert!(stderr(&o).contains("WARN"), "{}", stderr(&o));
}

#[test]
fn gamma_of_one_half_is_rejected() {
    let o = varbench(&["sample-size", "--gamma", "0.5"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("gamma"), "{}", stderr(&o));
}

#[test]
fn few_simulation_repetitions_warn() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.toml");
    std::fs::write(&config, "[simulation]\npab_grid = [0.5, 0.9]\nbootstrap_resamples = 100\n").unwrap();
    let o = varbench(&["simulate", "--seed", "3", "--repetitions", "100", "--config", config.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("repetitions per point"), "{}", stderr(&o));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.toml");
    std::fs::write(&config, "seed = 1\n[simulation]\nrepetitons = 500\n").unwrap();
    let o = varbench(&["simulate", "--config", config.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("repetitons"), "{}", stderr(&o));
}

#[test]
fn noise_free_pipeline_gives_zero_estimator_variance() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.toml");
    let out = dir.path().join("study.csv");
    std::fs::write(
        &config,
        r#"seed = 11

[synthpipe]
base_risk = 0.1
method = "grid"
space = [
    { name = "lr", lower = 1e-4, upper = 0.1, scale = "log10" },
    { name = "dropout", lower = 0.0, upper = 0.8 },
]
optimum = { lr = 0.003, dropout = 0.3 }
curvature = { lr = 0.16, dropout = 0.16 }
component_sds = { data = 0.0, init = 0.0 }

[estimate]
k_grid = [1, 4]
repetitions = 5
variants = ["ideal", "fixed_all"]

[estimate.setup]
source_size = 100
train_size = 100
test_size = 30
budget = 9
"#,
    )
    .unwrap();
    let o = varbench(&["estimate", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let headers = reader.headers().unwrap().clone();
    let col = headers.iter().position(|h| h == "std_error").unwrap();
    let mut rows = 0;
    for rec in reader.records() {
        let rec = rec.unwrap();
        assert_eq!(rec[col].parse::<f64>().unwrap(), 0.0, "{rec:?}");
        rows += 1;
    }
    assert_eq!(rows, 4);
}

#[test]
fn variance_rejects_runs_that_vary_two_sources_at_once() {
    let dir = tempfile::tempdir().unwrap();
    let scores = dir.path().join("runs.csv");
    let mut s = String::from("task,algorithm,replicate,value,seed_data,seed_init\n");
    for r in 1..=10u32 {
        writeln!(s, "t,A,{r},{},{},{}", 0.5 + r as f64 / 100.0, r, 100 + r).unwrap();
    }
    std::fs::write(&scores, s).unwrap();
    let o = varbench(&["variance", scores.to_str().unwrap(), "--seed", "2"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn variance_reports_one_row_per_source() {
    let dir = tempfile::tempdir().unwrap();
    let scores = dir.path().join("runs.csv");
    let out = dir.path().join("variance.csv");
    let mut s = String::from("task,algorithm,replicate,value,seed_data,seed_init\n");
    let mut rep = 1;
    for i in 0..10u32 {
        writeln!(s, "t,A,{rep},{},{},7", 0.5 + (i % 3) as f64 / 50.0, 100 + i).unwrap();
        rep += 1;
        writeln!(s, "t,A,{rep},{},1,{}", 0.5 + (i % 2) as f64 / 100.0, 200 + i).unwrap();
        rep += 1;
    }
    std::fs::write(&scores, s).unwrap();
    let o = varbench(&["variance", scores.to_str().unwrap(), "--seed", "2", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert!(body[0].starts_with("task,algorithm,source,runs,variance,std,ratio"), "{text}");
    assert_eq!(body.len(), 3, "{text}");
}

#[test]
fn binomial_sd_matches_closed_form() {
    let o = varbench(&["binomial-sd", "--tau", "0.5", "--n-test", "10000"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("0.005"), "{}", stdout(&o));
}
