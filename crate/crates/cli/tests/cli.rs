use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn stylemetric(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stylemetric"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = stylemetric(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A synthetic dataset plus its calibrated supervision manifest.
struct Fixture {
    tmp: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let tmp = tempfile::tempdir().unwrap();
        let f = Fixture { tmp };
        ok(&["synth", "--identities", "8", "--test-identities", "3", "--seed", "1", "-o", s(&f.path("data"))]);
        ok(&[
            "calibrate",
            "--responses",
            s(&f.data("responses.csv")),
            "--samples",
            s(&f.data("train_samples.jsonl")),
            "-o",
            s(&f.path("cal")),
        ]);
        ok(&[
            "build-pairs",
            "--curves",
            s(&f.path("cal/curves.json")),
            "--samples",
            s(&f.data("train_samples.jsonl")),
            "-o",
            s(&f.path("sup")),
        ]);
        f
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.tmp.path().join(rel)
    }

    fn data(&self, file: &str) -> PathBuf {
        self.path("data").join(file)
    }

    fn train(&self, out: &str, extra: &[&str]) -> Output {
        let (manifest, provenance, features) =
            (self.path("sup/supervision.jsonl"), self.path("sup/provenance.json"), self.data("features.txt"));
        let mut args = vec![
            "train",
            "--manifest",
            s(&manifest),
            "--provenance",
            s(&provenance),
            "--features",
            s(&features),
            "--batch-identities",
            "5",
            "--hidden-dim",
            "32",
            "--deterministic",
        ];
        args.extend_from_slice(extra);
        let out_dir = self.path(out);
        args.extend_from_slice(&["-o", s(&out_dir)]);
        stylemetric(&args)
    }

    fn read(&self, rel: &str) -> String {
        std::fs::read_to_string(self.path(rel)).unwrap()
    }
}

#[test]
fn full_toy_pipeline_reports_every_key() {
    let f = Fixture::new();
    let out = f.train("run", &["--total-iterations", "20", "--checkpoint-every", "10"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let ckpt = f.path("run/checkpoint.json");
    let feats = f.data("features.txt");
    let test = f.data("test_samples.jsonl");
    let train = f.data("train_samples.jsonl");
    ok(&["embed", "--checkpoint", s(&ckpt), "--features", s(&feats), "--manifest", s(&test), "-o", s(&f.path("emb"))]);
    ok(&["embed", "--checkpoint", s(&ckpt), "--features", s(&feats), "--manifest", s(&train), "-o", s(&f.path("emb_train"))]);
    let emb = f.path("emb/embeddings.txt");
    ok(&["eval-verify", "--embeddings", s(&emb), "--pairs", s(&f.data("pairs.csv")), "--fpr-target", "0.05", "-o", s(&f.path("ev"))]);
    ok(&["eval-retrieve", "--gallery", s(&emb), "--manifest", s(&test), "-o", s(&f.path("er"))]);
    ok(&["eval-pose", "--embeddings", s(&emb), "--manifest", s(&test), "-o", s(&f.path("ep"))]);
    ok(&[
        "eval-agreement",
        "--embeddings",
        s(&f.path("emb_train/embeddings.txt")),
        "--responses",
        s(&f.data("responses.csv")),
        "-o",
        s(&f.path("ea")),
    ]);
    ok(&[
        "report",
        "--partial",
        s(&f.path("ev/report.json")),
        "--partial",
        s(&f.path("er/report.json")),
        "--partial",
        s(&f.path("ep/report.json")),
        "--partial",
        s(&f.path("ea/report.json")),
        "--scores",
        s(&f.path("ev/scores.csv")),
        "-o",
        s(&f.path("final")),
    ]);

    let report: serde_json::Value = serde_json::from_str(&f.read("final/report.json")).unwrap();
    let obj = report.as_object().unwrap();
    for key in [
        "tpr_at_fpr_1e2",
        "tpr_at_fpr_1e3",
        "tpr_at_fpr_1e4",
        "acc_at_0.3",
        "acc_at_0.4",
        "acc_at_0.5",
        "auroc",
        "retrieval_top4",
        "pose_consistency",
        "kappa",
        "mcc",
    ] {
        assert!(obj.contains_key(key), "missing {key}");
    }
    assert_eq!(obj.len(), 11);
    for key in ["auroc", "retrieval_top4", "pose_consistency"] {
        assert!(obj[key].is_f64(), "{key} = {}", obj[key]);
    }
    assert_eq!(f.read("final/roc_linear.csv").lines().count(), 102);
    assert_eq!(f.read("final/roc_log.csv").lines().nth(1).unwrap().split(',').next(), Some("0.0001"));
    assert_eq!(f.read("ev/operating_points.csv").lines().count(), 5);
    assert!(f.path("run/checkpoint-000010.json").exists());
    assert!(f.path("run/checkpoint-000020.json").exists());
}

#[test]
fn ten_iterations_give_ten_log_rows() {
    let f = Fixture::new();
    let out = f.train("run", &["--total-iterations", "10"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let log = f.read("run/loss_log.csv");
    let mut lines = log.lines();
    assert_eq!(lines.next(), Some("iteration,l_ang,l_scon,l_reg,total,wall_ms"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 10);
    assert!(rows.iter().all(|r| r.ends_with(",0")));
}

#[test]
fn deterministic_runs_are_byte_identical() {
    let f = Fixture::new();
    for dir in ["a", "b"] {
        let out = f.train(dir, &["--total-iterations", "15", "--seed", "3"]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    for file in ["loss_log.csv", "checkpoint.json", "hyperparams.conf"] {
        assert_eq!(f.read(&format!("a/{file}")), f.read(&format!("b/{file}")), "{file}");
    }
    let other = f.train("c", &["--total-iterations", "15", "--seed", "4"]);
    assert!(other.status.success());
    assert_ne!(f.read("a/loss_log.csv"), f.read("c/loss_log.csv"));
}

#[test]
fn resume_continues_the_same_run() {
    let f = Fixture::new();
    assert!(f.train("full", &["--total-iterations", "12", "--checkpoint-every", "6"]).status.success());
    assert!(f.train("part", &["--total-iterations", "6", "--checkpoint-every", "6"]).status.success());
    let resume = f.path("part/checkpoint.json");
    let out = f.train("part", &["--resume", s(&resume), "--total-iterations", "12"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(f.read("full/loss_log.csv"), f.read("part/loss_log.csv"));
    assert_eq!(f.read("full/checkpoint.json"), f.read("part/checkpoint.json"));
}

#[test]
fn flags_override_config_which_overrides_defaults() {
    let f = Fixture::new();
    let config = f.path("hp.conf");
    std::fs::write(&config, "margin_m = 0.3\nlearning_rate = 1e-3\n").unwrap();
    let out = f.train("run", &["--config", s(&config), "--margin-m", "0.2", "--total-iterations", "2"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let effective = f.read("run/hyperparams.conf");
    assert!(effective.contains("margin_m = 0.2\n"), "{effective}");
    assert!(effective.contains("learning_rate = 0.001\n"), "{effective}");
    assert!(effective.contains("scale_alpha = 32\n"), "{effective}");
}

#[test]
fn conflicting_overrides_are_rejected() {
    let f = Fixture::new();
    let out = f.train("run", &["--margin-m", "0.2", "--set", "margin_m=0.4", "--total-iterations", "2"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("margin_m"), "{}", stderr(&out));
    assert!(!f.path("run").exists());
    let same = f.train("run", &["--margin-m", "0.2", "--set", "margin_m=0.2", "--total-iterations", "2"]);
    assert!(same.status.success(), "{}", stderr(&same));
    let bad = f.train("bad", &["--set", "no_such_key=1"]);
    assert_eq!(code(&bad), 2);
}

#[test]
fn external_backbone_is_a_validation_error() {
    let f = Fixture::new();
    let out = f.train("run", &["--architecture", "external", "--total-iterations", "2"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("unsupported"), "{}", stderr(&out));
}

#[test]
fn missing_file_exits_one_naming_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.csv");
    let out = stylemetric(&["calibrate", "--responses", s(&missing), "--samples", s(&missing), "-o", s(tmp.path())]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("nope.csv"), "{}", stderr(&out));
}

#[test]
fn malformed_response_row_exits_two_naming_the_line() {
    let f = Fixture::new();
    let good = std::fs::read_to_string(f.data("responses.csv")).unwrap();
    let mut lines: Vec<String> = good.lines().map(str::to_string).collect();
    lines[3] = lines[3].replacen("forced_choice", "telepathy", 1);
    let broken = f.path("broken.csv");
    std::fs::write(&broken, lines.join("\n") + "\n").unwrap();
    let out = stylemetric(&[
        "calibrate",
        "--responses",
        s(&broken),
        "--samples",
        s(&f.data("train_samples.jsonl")),
        "-o",
        s(&f.path("cal2")),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains(":4:"), "{}", stderr(&out));
}

#[test]
fn build_pairs_threshold_and_provenance() {
    let f = Fixture::new();
    let provenance: serde_json::Value = serde_json::from_str(&f.read("sup/provenance.json")).unwrap();
    assert_eq!(provenance["threshold"], 0.9);
    let curves: serde_json::Value = serde_json::from_str(&f.read("cal/curves.json")).unwrap();
    let combos = provenance["combos"].as_array().unwrap();
    let curves = curves.as_array().unwrap();
    assert_eq!(combos.len(), curves.len());
    for (c, curve) in combos.iter().zip(curves) {
        assert_eq!((&c["method"], &c["style"]), (&curve["method"], &curve["style"]));
        // the synthetic log loses one correct answer per level, so the two
        // lowest levels present at or above 0.9 are the ones kept
        let want: Vec<&serde_json::Value> = curve["levels"]
            .as_array()
            .unwrap()
            .iter()
            .filter(|l| l["accuracy"].as_f64().unwrap() >= 0.9)
            .map(|l| &l["strength"])
            .take(2)
            .collect();
        let got: Vec<&serde_json::Value> = c["levels"].as_array().unwrap().iter().map(|l| &l["strength"]).collect();
        assert_eq!(got, want, "{c}");
    }

    let out = stylemetric(&[
        "build-pairs",
        "--curves",
        s(&f.path("cal/curves.json")),
        "--samples",
        s(&f.data("train_samples.jsonl")),
        "--threshold",
        "1.01",
        "-o",
        s(&f.path("strict")),
    ]);
    assert_eq!(code(&out), 0);
    assert!(stderr(&out).contains("warning"), "{}", stderr(&out));
    assert_eq!(f.read("strict/supervision.jsonl"), "");
}

#[test]
fn self_pairs_without_negatives_exit_two() {
    let f = Fixture::new();
    assert!(f.train("run", &["--total-iterations", "2"]).status.success());
    ok(&[
        "embed",
        "--checkpoint",
        s(&f.path("run/checkpoint.json")),
        "--features",
        s(&f.data("features.txt")),
        "--manifest",
        s(&f.data("test_samples.jsonl")),
        "-o",
        s(&f.path("emb")),
    ]);
    let emb = std::fs::read_to_string(f.path("emb/embeddings.txt")).unwrap();
    let ids: Vec<&str> = emb.lines().skip(1).map(|l| l.split_whitespace().next().unwrap()).collect();
    let pairs = f.path("self.csv");
    let text: String = ids.iter().map(|id| format!("{id},{id},1\n")).collect();
    std::fs::write(&pairs, format!("id_a,id_b,same\n{text}")).unwrap();
    let out = stylemetric(&[
        "eval-verify",
        "--embeddings",
        s(&f.path("emb/embeddings.txt")),
        "--pairs",
        s(&pairs),
        "-o",
        s(&f.path("ev")),
    ]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(!f.path("ev/report.json").exists());
}

#[test]
fn reference_embeddings_ignore_adapters() {
    let f = Fixture::new();
    assert!(f.train("run", &["--total-iterations", "5"]).status.success());
    let embed = |out: &str, extra: &[&str]| {
        let (ckpt, feats) = (f.path("run/checkpoint.json"), f.data("features.txt"));
        let dir = f.path(out);
        let mut args = vec!["embed", "--checkpoint", s(&ckpt), "--features", s(&feats), "-o", s(&dir)];
        args.extend_from_slice(extra);
        ok(&args);
    };
    embed("adapted", &[]);
    embed("frozen", &["--reference"]);
    assert_ne!(f.read("adapted/embeddings.txt"), f.read("frozen/embeddings.txt"));
}

#[test]
fn help_documents_defaults() {
    let out = ok(&["train", "--help"]);
    let help = String::from_utf8_lossy(&out.stdout);
    for needle in ["[default: 0.5]", "[default: 32]", "[default: 56]", "[default: 2e-4]", "[default: 30000]"] {
        assert!(help.contains(needle), "missing {needle}");
    }
}
