//! End-to-end runs of the `tooldag` binary on synthetic corpora.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_tooldag");

fn tooldag(out: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

/// Run and return the run directory printed on stdout; panics on failure.
fn ok(out: &Path, args: &[&str]) -> PathBuf {
    let o = tooldag(out, args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    PathBuf::from(String::from_utf8(o.stdout).unwrap().trim())
}

fn code(out: &Path, args: &[&str]) -> i32 {
    tooldag(out, args).status.code().expect("exit code")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn synth(out: &Path, args: &[&str]) -> PathBuf {
    let mut all = vec!["synth"];
    all.extend_from_slice(args);
    ok(out, &all)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn oracle_edge_lists_match_generator() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = synth(tmp.path(), &["--n-trajectories", "25"]);
    let run = ok(tmp.path(), &["oracle", "--log", s(&corpus.join("log.jsonl"))]);
    let edges = fs::read_to_string(run.join("edges.jsonl")).unwrap();
    let truth = fs::read_to_string(corpus.join("truth.jsonl")).unwrap();
    assert_eq!(edges, truth);
    assert!(run.join("edges.csv").exists());
    let summary = json(&run.join("summary.json"));
    assert_eq!(summary["n_trajectories"], 25);
}

#[test]
fn typed_oracle_is_precise_against_substring() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = synth(tmp.path(), &["--typed", "--n-trajectories", "30"]);
    let run = ok(
        tmp.path(),
        &[
            "oracle",
            "--log",
            s(&corpus.join("log.jsonl")),
            "--oracle",
            "typed",
            "--schema",
            s(&corpus.join("schema.json")),
            "--compare",
        ],
    );
    let a = &json(&run.join("summary.json"))["agreement"];
    assert_eq!(a["precision"], 1.0);
    assert_eq!(a["n_not_subset"], 0);
    assert_eq!(
        fs::read_to_string(run.join("edges.jsonl")).unwrap(),
        fs::read_to_string(corpus.join("truth.jsonl")).unwrap()
    );
}

#[test]
fn oracle_usage_errors_and_empty_log() {
    let tmp = tempfile::tempdir().unwrap();
    let log = tmp.path().join("empty.jsonl");
    fs::write(&log, "").unwrap();
    assert_eq!(code(tmp.path(), &["oracle", "--log", s(&log), "--oracle", "typed"]), 2);
    assert_eq!(code(tmp.path(), &["oracle", "--log", s(&tmp.path().join("missing.jsonl"))]), 2);
    assert_eq!(code(tmp.path(), &["oracle"]), 2);
    let run = ok(tmp.path(), &["oracle", "--log", s(&log)]);
    assert_eq!(fs::read_to_string(run.join("edges.jsonl")).unwrap(), "");
    assert_eq!(json(&run.join("summary.json"))["n_trajectories"], 0);
}

#[test]
fn probe_recovers_planted_edges_and_is_repeatable() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = synth(tmp.path(), &["--n-trajectories", "40", "--noise-sd", "0.5"]);
    let args = ["probe", "--corpus", s(&corpus), "--n-resamples", "200", "--per-layer"];
    let a = ok(&tmp.path().join("a"), &args);
    let b = ok(&tmp.path().join("b"), &args);
    for f in ["report.json", "scores.csv", "per_layer.csv", "strata.csv", "summary.csv", "config.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_eq!(a.file_name(), b.file_name());
    let r = json(&a.join("report.json"));
    assert!(r["auroc"].as_f64().unwrap() >= 0.95, "{}", r["auroc"]);
    assert_eq!(r["per_layer"].as_array().unwrap().len(), 7);
    assert!(r["conditional_gap"]["delta"]["point"].as_f64().unwrap() > 0.1);
}

#[test]
fn transitive_task_without_positives_is_untestable() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = synth(tmp.path(), &["--n-trajectories", "20", "--signal-mode", "planted_linear"]);
    let run = ok(
        tmp.path(),
        &["probe", "--corpus", s(&corpus), "--task", "transitive_only", "--n-resamples", "50"],
    );
    let r = json(&run.join("report.json"));
    assert!(r["auroc"].is_null());
    assert!(r["untestable"].as_str().unwrap().contains("no positive"));
    let csv = fs::read_to_string(run.join("summary.csv")).unwrap();
    assert!(csv.contains("no positive pairs"));
}

#[test]
fn missing_activation_file_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = synth(tmp.path(), &["--n-trajectories", "6"]);
    let victim = fs::read_dir(corpus.join("activations")).unwrap().next().unwrap().unwrap().path();
    fs::remove_file(victim).unwrap();
    assert_eq!(code(tmp.path(), &["probe", "--corpus", s(&corpus)]), 2);
}

#[test]
fn config_file_env_and_flags_layer() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = synth(tmp.path(), &["--n-trajectories", "12"]);
    let cfg = tmp.path().join("run.json");
    fs::write(&cfg, format!(r#"{{"corpus": "{}", "n_resamples": 30, "probe": {{"c": 0.1}}}}"#, s(&corpus))).unwrap();
    let o = Command::new(BIN)
        .args(["probe", "--config", s(&cfg), "--n-perms", "3", "--seed", "7", "--out", s(tmp.path())])
        .env("TOOLDAG_N_RESAMPLES", "40")
        .env("TOOLDAG_PROBE__MAX_ITER", "500")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let run = PathBuf::from(String::from_utf8(o.stdout).unwrap().trim());
    let echo = json(&run.join("config.json"));
    let c = &echo["config"];
    assert_eq!(c["n_resamples"], 40);
    assert_eq!(c["n_perms"], 3);
    assert_eq!(c["seed"], 7);
    assert_eq!(c["probe"]["c"], 0.1);
    assert_eq!(c["probe"]["max_iter"], 500);
    assert_eq!(echo["command"], "probe");
    assert!(run.ends_with(format!("probe-{}", echo["run_id"].as_str().unwrap())));

    fs::write(&cfg, r#"{"n_resampels": 30}"#).unwrap();
    assert_eq!(code(tmp.path(), &["probe", "--config", s(&cfg)]), 2);
}

#[test]
fn controls_on_null_and_positional_corpora() {
    let tmp = tempfile::tempdir().unwrap();
    let null = synth(tmp.path(), &["--n-trajectories", "30", "--signal-mode", "none", "--name", "nul"]);
    let run = ok(
        tmp.path(),
        &["controls", "--corpus", s(&null), "--n-perms", "50", "--n-resamples", "100"],
    );
    let c = json(&run.join("controls.json"));
    let perm = &c["families"][0]["permutation"];
    assert!(perm["p_value"].as_f64().unwrap() > 0.1, "{perm}");
    assert_eq!(c["families"].as_array().unwrap().len(), 4);
    assert!(run.join("controls.csv").exists() && run.join("gaps.csv").exists());

    let pos = synth(tmp.path(), &["--n-trajectories", "30", "--signal-mode", "positional_only", "--name", "pos"]);
    let run = ok(tmp.path(), &["controls", "--corpus", s(&pos), "--n-perms", "0", "--n-resamples", "200"]);
    let c = json(&run.join("controls.json"));
    let auroc = |k: usize| c["families"][k]["auroc"].as_f64().unwrap();
    let (resid, scaffold, surface) = (auroc(0), auroc(2), auroc(3));
    assert!(surface > resid && scaffold > resid, "{resid} {scaffold} {surface}");
    let gap = &c["gaps"][0];
    assert_eq!(gap["baseline"], "positional");
    assert!(gap["delta"]["point"].as_f64().unwrap().abs() <= 0.02, "{gap}");
}

#[test]
fn random_init_needs_second_activation_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = synth(tmp.path(), &["--n-trajectories", "8"]);
    assert_eq!(code(tmp.path(), &["controls", "--corpus", s(&corpus), "--random-init"]), 2);
    let missing = tmp.path().join("nowhere");
    assert_eq!(
        code(
            tmp.path(),
            &["controls", "--corpus", s(&corpus), "--random-init", "--random-init-activations", s(&missing)]
        ),
        2
    );
}

#[test]
fn decode_noiseless_corpus_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = synth(tmp.path(), &["--n-trajectories", "30", "--noise-sd", "0"]);
    let run = ok(tmp.path(), &["decode", "--corpus", s(&corpus), "--n-sims", "50"]);
    let d = json(&run.join("decode.json"));
    assert_eq!(d["n_decoded"], 30);
    assert_eq!(d["all_acyclic"], true);
    assert_eq!(d["frac_exact"], 1.0);
    assert_eq!(fs::read_to_string(run.join("decoded.jsonl")).unwrap().lines().count(), 30);
}

#[test]
fn counterfactual_plan_change_shifts_decoded_plans() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = synth(tmp.path(), &["--n-trajectories", "30", "--noise-sd", "0.5", "--counterpart"]);
    let run = ok(
        tmp.path(),
        &["counterfactual", "--corpus", s(&corpus), "--counterpart-corpus", s(&corpus.join("counterpart"))],
    );
    let c = json(&run.join("counterfactual.json"));
    assert_eq!(c["n_pairs"], 30);
    assert!(c["plan_shift"]["cohens_d"]["d"].as_f64().unwrap() > 0.5, "{}", c["plan_shift"]["cohens_d"]);
    assert_eq!(fs::read_to_string(run.join("pairs.csv")).unwrap().lines().count(), 31);
    assert_eq!(code(tmp.path(), &["counterfactual", "--corpus", s(&corpus)]), 2);
}

#[test]
fn counterfactual_transforms_write_logs() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = synth(tmp.path(), &["--typed", "--n-trajectories", "20"]);
    let log_path = corpus.join("log.jsonl");
    let common = ["counterfactual", "--log", s(&log_path)];
    let mut vc = common.to_vec();
    vc.extend(["--transform", "value_corruption"]);
    let run = ok(tmp.path(), &vc);
    let t = json(&run.join("transform.json"));
    assert_eq!(t["n_written"], 20);
    let log = fs::read_to_string(run.join("log.jsonl")).unwrap();
    assert!(log.lines().all(|l| l.contains("\"condition\": \"value_corrupted\"") || l.contains("\"condition\":\"value_corrupted\"")));
    assert_eq!(fs::read_to_string(run.join("corruptions.jsonl")).unwrap().lines().count(), 20);

    let mut sk = common.to_vec();
    sk.extend(["--transform", "skip_tool"]);
    let run = ok(tmp.path(), &sk);
    let ids: Vec<String> = fs::read_to_string(run.join("log.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap()["trajectory_id"].as_str().unwrap().to_string())
        .collect();
    assert!(ids.iter().all(|i| i.ends_with("-skip")));
}

#[test]
fn patch_identity_pairs_are_zero_and_donor_pairs_positive() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = synth(
        tmp.path(),
        &["--n-trajectories", "40", "--signal-mode", "donor_contrast", "--noise-sd", "0.5"],
    );
    let run = ok(tmp.path(), &["patch", "--corpus", s(&corpus), "--n-resamples", "500", "--layers", "0,28"]);
    let p = json(&run.join("patch.json"));
    assert_eq!(p["n_pairs"], 20);
    for layer in p["layers"].as_array().unwrap() {
        assert!(layer["ci"]["lo"].as_f64().unwrap() > 0.0, "{layer}");
        assert!(layer["frac_toward_donor"].as_f64().unwrap() >= 0.8);
    }

    let first = fs::read_to_string(corpus.join("log.jsonl")).unwrap();
    let id = serde_json::from_str::<Value>(first.lines().next().unwrap()).unwrap()["trajectory_id"].clone();
    let pairs = serde_json::json!([{
        "donor_id": id, "target_id": id, "shared_prefix_len": 2,
        "differing_edge": [0, 1], "donor_has_edge": true
    }]);
    let file = tmp.path().join("pairs.json");
    fs::write(&file, pairs.to_string()).unwrap();
    let run = ok(tmp.path(), &["patch", "--corpus", s(&corpus), "--pairs", s(&file), "--n-resamples", "10"]);
    let p = json(&run.join("patch.json"));
    for layer in p["layers"].as_array().unwrap() {
        assert_eq!(layer["per_pair_delta"], serde_json::json!([0.0]));
    }
}

#[test]
fn patch_uses_a_saved_probe() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = synth(tmp.path(), &["--n-trajectories", "20", "--signal-mode", "donor_contrast"]);
    let probe = ok(tmp.path(), &["probe", "--corpus", s(&corpus), "--n-resamples", "20", "--save-probe"]);
    let run = ok(
        tmp.path(),
        &["patch", "--corpus", s(&corpus), "--probe-dir", s(&probe), "--n-resamples", "20", "--layers", "14"],
    );
    let p = json(&run.join("patch.json"));
    assert_eq!(p["probe_source"], s(&probe));
    let wrong = ok(tmp.path(), &["probe", "--corpus", s(&corpus), "--features", "residual:V0", "--n-resamples", "20", "--save-probe"]);
    assert_eq!(code(tmp.path(), &["patch", "--corpus", s(&corpus), "--probe-dir", s(&wrong)]), 2);
}

#[test]
fn sweep_over_three_corpora() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = vec!["sweep".to_string()];
    for (k, noise) in ["0.3", "1.0", "2.0"].iter().enumerate() {
        let name = format!("c{k}");
        let seed = (k + 1).to_string();
        let dir = synth(
            tmp.path(),
            &["--n-trajectories", "25", "--noise-sd", noise, "--name", &name, "--seed", &seed],
        );
        args.push("--corpus".into());
        args.push(format!("{name}={}", s(&dir)));
    }
    args.extend(["--n-resamples", "100", "--min-groups", "10", "--min-positives", "10"].map(String::from));
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    let run = ok(tmp.path(), &refs);
    let t = json(&run.join("sweep.json"));
    assert_eq!(t["rows"].as_array().unwrap().len(), 3);
    assert!(t["spearman_rho"].is_number());
    assert_eq!(fs::read_to_string(run.join("sweep.csv")).unwrap().lines().count(), 4);
    assert_eq!(code(tmp.path(), &["sweep"]), 2);
    assert_eq!(code(tmp.path(), &["sweep", "--corpus", "nodir"]), 2);
}

#[test]
fn synth_writes_full_corpora() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = synth(tmp.path(), &["--n-trajectories", "4", "--signal-mode", "layer_localized:28", "--counterpart"]);
    for f in ["log.jsonl", "truth.jsonl", "synth_config.json", "synth.json", "synth.csv", "config.json"] {
        assert!(dir.join(f).exists(), "{f}");
    }
    assert_eq!(fs::read_dir(dir.join("activations")).unwrap().count(), 4);
    assert_eq!(fs::read_dir(dir.join("counterpart").join("activations")).unwrap().count(), 4);
    let cfg = json(&dir.join("synth_config.json"));
    assert_eq!(cfg["signal_mode"], serde_json::json!({"mode": "layer_localized", "layer": 28}));
    assert_eq!(code(tmp.path(), &["synth", "--signal-mode", "layer_localized:99"]), 2);
    assert_eq!(code(tmp.path(), &["synth", "--signal-mode", "sideways"]), 2);
    assert_eq!(code(tmp.path(), &["synth", "--jobs", "0"]), 2);
}
