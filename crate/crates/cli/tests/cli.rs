use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;
use std::time::Duration;

use serde_json::Value;
use tempfile::TempDir;

fn genexp(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_genexp"))
        .env("GENEXP_OUTPUT_ROOT", root)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(root: &Path, args: &[&str]) -> String {
    let out = genexp(root, args);
    assert!(
        out.status.success(),
        "{args:?} failed with {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails(root: &Path, args: &[&str], code: i32) -> String {
    let out = genexp(root, args);
    assert_eq!(out.status.code(), Some(code), "{args:?}\nstderr:\n{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stderr).unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// A small dataset and a trained model shared by the tests.
struct Pipeline {
    dir: TempDir,
}

impl Pipeline {
    fn root(&self) -> &Path {
        self.dir.path()
    }
}

fn pipeline() -> &'static Pipeline {
    static P: OnceLock<Pipeline> = OnceLock::new();
    P.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        ok(root, &["gen-data", "--dataset", "ba2motifs", "--count", "200", "--seed", "0", "--out", "data.json"]);
        ok(
            root,
            &[
                "train-gnn", "--data", "data.json", "--out", "model.ckpt", "--layer", "gin", "--layers", "3", "--hidden", "16",
                "--epochs", "40", "--batch-size", "16", "--seed", "1",
            ],
        );
        Pipeline { dir }
    })
}

fn train_random(root: &Path, out: &str) {
    ok(root, &["train-explainer", "--data", "data.json", "--model", "model.ckpt", "--family", "random", "--seed", "3", "--out", out]);
}

#[test]
fn gen_data_is_byte_identical_and_prints_stats() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["gen-data", "--dataset", "ba2motifs", "--count", "1000", "--seed", "0", "--out", "d.json"];
    let stdout = ok(dir.path(), &args);
    let first = std::fs::read(dir.path().join("d.json")).unwrap();
    let snap = std::fs::read(dir.path().join("d.json.config.toml")).unwrap();
    ok(dir.path(), &args);
    assert_eq!(first, std::fs::read(dir.path().join("d.json")).unwrap());
    assert_eq!(snap, std::fs::read(dir.path().join("d.json.config.toml")).unwrap());

    let v: Value = serde_json::from_slice(&first).unwrap();
    let graphs = v["graphs"].as_array().unwrap();
    assert_eq!(graphs.len(), 1000);
    assert!(graphs.iter().all(|g| g["split"].is_string() && g["ground_truth_edges"].is_array()));
    assert!(stdout.contains("graphs         1000"), "{stdout}");
    assert!(stdout.contains("classes        2"), "{stdout}");
}

#[test]
fn gen_data_rejects_bad_arguments() {
    let dir = tempfile::tempdir().unwrap();
    let err = fails(dir.path(), &["gen-data", "--dataset", "cora", "--count", "10", "--seed", "0"], 2);
    assert!(err.contains("cora"), "{err}");
    fails(dir.path(), &["gen-data", "--dataset", "ba2motifs", "--count", "0", "--seed", "0"], 2);
    fails(dir.path(), &["gen-data", "--dataset", "ba2motifs", "--count", "10"], 2);
    fails(dir.path(), &["no-such-command"], 2);
}

#[test]
fn multishapes_generator_is_available() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(dir.path(), &["gen-data", "--dataset", "ba-multishapes", "--count", "40", "--seed", "2"]);
    assert!(dir.path().join("ba-multishapes-2.json").exists(), "{stdout}");
}

#[test]
fn train_gnn_missing_data_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let err = fails(dir.path(), &["train-gnn", "--data", "nowhere.json", "--seed", "0"], 2);
    assert!(err.contains("nowhere.json"), "{err}");
}

#[test]
fn train_gnn_writes_sidecar_history_and_accuracy() {
    let p = pipeline();
    let side = json(&p.root().join("model.ckpt.json"));
    assert_eq!(side["gnn_config"]["layer_kind"], "gin");
    assert_eq!(side["gnn_config"]["num_layers"], 3);
    assert_eq!(side["dataset_sha256"].as_str().unwrap().len(), 64);
    let acc = side["test_accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    let hist = std::fs::read_to_string(p.root().join("model.ckpt.history.csv")).unwrap();
    assert_eq!(hist.lines().next().unwrap(), "epoch,train_loss,val_loss,val_acc");
    assert!(hist.lines().count() > 1);

    let stdout = ok(
        p.root(),
        &["train-gnn", "--data", "data.json", "--out", "gcn.ckpt", "--layer", "gcn", "--layers", "2", "--epochs", "2", "--seed", "0"],
    );
    assert!(stdout.contains("test accuracy"), "{stdout}");
    let side = json(&p.root().join("gcn.ckpt.json"));
    assert_eq!(side["gnn_config"]["layer_kind"], "gcn");
    assert_eq!(side["gnn_config"]["num_layers"], 2);
}

#[test]
fn config_file_values_yield_to_flags() {
    let p = pipeline();
    std::fs::write(
        p.root().join("cfg.toml"),
        "seed = 5\n[gnn]\nhidden_dim = 8\nmax_epochs = 2\n[dataset]\npath = \"data.json\"\n",
    )
    .unwrap();
    ok(p.root(), &["--config", "cfg.toml", "train-gnn", "--hidden", "4", "--out", "cfg.ckpt"]);
    let side = json(&p.root().join("cfg.ckpt.json"));
    assert_eq!(side["gnn_config"]["hidden_dim"], 4);
    assert_eq!(side["gnn_config"]["max_epochs"], 2);
    assert_eq!(side["seed"], 5);
    let snap = std::fs::read_to_string(p.root().join("cfg.ckpt.config.toml")).unwrap();
    assert!(snap.contains("hidden_dim = 4"), "{snap}");

    std::fs::write(p.root().join("bad.toml"), "[gnn]\nhiden_dim = 8\n").unwrap();
    fails(p.root(), &["--config", "bad.toml", "train-gnn"], 2);
}

#[test]
fn diverging_training_exits_4() {
    let p = pipeline();
    fails(p.root(), &["train-gnn", "--data", "data.json", "--out", "nan.ckpt", "--lr", "1e300", "--epochs", "3", "--seed", "0"], 4);
    assert!(!p.root().join("nan.ckpt").exists());
    fails(
        p.root(),
        &["train-explainer", "--data", "data.json", "--model", "model.ckpt", "--family", "maskgen", "--lr", "1e300", "--epochs", "2", "--out", "nan-ex.ckpt"],
        4,
    );
}

#[test]
fn explain_refuses_a_different_model() {
    let p = pipeline();
    let root = p.root();
    train_random(root, "rand-hash.ckpt");
    ok(root, &["train-gnn", "--data", "data.json", "--out", "other.ckpt", "--epochs", "1", "--seed", "9"]);
    let err = fails(root, &["explain", "--explainer", "rand-hash.ckpt", "--model", "other.ckpt", "--data", "data.json", "--out", "hash-out"], 3);
    let expected = json(&root.join("rand-hash.ckpt.json"))["model_sha256"].as_str().unwrap().to_string();
    let actual = sha_of(&root.join("other.ckpt"));
    assert!(err.contains(&expected) && err.contains(&actual), "{err}");
}

fn sha_of(path: &Path) -> String {
    let out = Command::new("sha256sum").arg(path).output().unwrap();
    String::from_utf8(out.stdout).unwrap().split_whitespace().next().unwrap().to_string()
}

#[test]
fn corrupted_checkpoint_exits_3() {
    let p = pipeline();
    let root = p.root();
    let mut bytes = std::fs::read(root.join("model.ckpt")).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x55;
    std::fs::write(root.join("corrupt.ckpt"), bytes).unwrap();
    std::fs::copy(root.join("model.ckpt.json"), root.join("corrupt.ckpt.json")).unwrap();
    fails(root, &["train-explainer", "--data", "data.json", "--model", "corrupt.ckpt", "--family", "random", "--seed", "0", "--out", "c.ckpt"], 3);
}

#[test]
fn evaluate_empty_directory_exits_2() {
    let p = pipeline();
    std::fs::create_dir_all(p.root().join("empty")).unwrap();
    fails(p.root(), &["evaluate", "--explanations", "empty", "--model", "model.ckpt", "--data", "data.json"], 2);
}

fn strip_time(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("wall_time_ms");
    v
}

#[test]
fn random_family_auc_is_near_half() {
    let p = pipeline();
    let root = p.root();
    train_random(root, "rand.ckpt");
    ok(root, &["explain", "--explainer", "rand.ckpt", "--model", "model.ckpt", "--data", "data.json", "--out", "rand-a", "--all"]);
    ok(root, &["explain", "--explainer", "rand.ckpt", "--model", "model.ckpt", "--data", "data.json", "--out", "rand-b", "--all"]);
    let files: Vec<PathBuf> = std::fs::read_dir(root.join("rand-a")).unwrap().map(|e| e.unwrap().path()).collect();
    let graphs: Vec<_> = files.iter().filter(|f| f.file_name().unwrap().to_str().unwrap().starts_with("graph_")).collect();
    assert_eq!(graphs.len(), 200);
    for f in graphs {
        let other = root.join("rand-b").join(f.file_name().unwrap());
        assert_eq!(strip_time(json(f)), strip_time(json(&other)));
    }

    let stdout = ok(root, &["evaluate", "--explanations", "rand-a", "--model", "model.ckpt", "--data", "data.json", "--workers", "2"]);
    let report = json(&root.join("rand-a/report.json"));
    let auc = report["gt_auc"].as_f64().unwrap();
    assert!((auc - 0.5).abs() <= 0.05, "AUC {auc}\n{stdout}");
    assert_eq!(report["family"], "random");
}

#[test]
fn end_to_end_maskgen_with_report() {
    let p = pipeline();
    let root = p.root();
    ok(
        root,
        &["train-explainer", "--data", "data.json", "--model", "model.ckpt", "--family", "maskgen", "--epochs", "3", "--seed", "0", "--out", "mg.ckpt"],
    );
    ok(root, &["explain", "--explainer", "mg.ckpt", "--model", "model.ckpt", "--data", "data.json", "--out", "mg", "--k", "6"]);
    let eval = ["evaluate", "--explanations", "mg", "--model", "model.ckpt", "--data", "data.json", "--out", "mg-report", "--oracle"];
    ok(root, &eval);
    let csv1 = std::fs::read(root.join("mg-report.csv")).unwrap();
    let json1 = std::fs::read(root.join("mg-report.json")).unwrap();
    ok(root, &eval);
    assert_eq!(csv1, std::fs::read(root.join("mg-report.csv")).unwrap());
    assert_eq!(json1, std::fs::read(root.join("mg-report.json")).unwrap());

    let header = String::from_utf8(csv1).unwrap().lines().next().unwrap().to_string();
    assert_eq!(
        header,
        "graph_index,family,dataset,seed,initial_correct,explanation_correct,num_hard_edges,gt_jaccard,wall_time_ms"
    );
    let report = json(&root.join("mg-report.json"));
    let faith = report["faithfulness"].as_f64().unwrap();
    let fid = report["fidelity_acc"].as_f64().unwrap();
    assert_eq!(faith, 1.0 - fid);
    let oracle = json(&root.join("mg-report.oracle.json"));
    assert_eq!(oracle["violations"], 0);
    assert_eq!(oracle["skipped"].as_u64().unwrap() + oracle["checked"].as_u64().unwrap(), 20);

    // the standard split has no unseen graphs
    fails(
        root,
        &["evaluate", "--explanations", "mg", "--model", "model.ckpt", "--data", "data.json", "--out", "mg-gen", "--generalization", "--explainer", "mg.ckpt"],
        2,
    );

    let stdout = ok(root, &["report", "mg-report.json", "--out", "charts"]);
    assert!(stdout.contains("maskgen"), "{stdout}");
    for name in ["faithfulness.svg", "timing.svg", "generalization.svg"] {
        let text = std::fs::read_to_string(root.join("charts").join(name)).unwrap();
        let doc = roxmltree::Document::parse(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(doc.root_element().tag_name().name(), "svg");
        let bars = doc.descendants().filter(|n| n.attribute("class") == Some("bar")).count();
        let want = if name == "generalization.svg" { 0 } else { 1 };
        assert_eq!(bars, want, "{name}");
    }
    let timing = std::fs::read_to_string(root.join("charts/timing.svg")).unwrap();
    let doc = roxmltree::Document::parse(&timing).unwrap();
    assert!(doc.descendants().any(|n| n.attribute("class") == Some("y-axis") && n.attribute("data-scale") == Some("log")));

    // a second dataset name cannot be merged into the same charts
    let mut other = report.clone();
    other["dataset"] = Value::from("elsewhere");
    std::fs::write(root.join("other-report.json"), serde_json::to_string(&other).unwrap()).unwrap();
    fails(root, &["report", "mg-report.json", "other-report.json", "--out", "charts2"], 2);

    // tampered aggregates are an integrity failure
    let mut bad = report;
    bad["faithfulness"] = Value::from(0.123);
    std::fs::write(root.join("bad-report.json"), serde_json::to_string(&bad).unwrap()).unwrap();
    fails(root, &["report", "bad-report.json"], 3);
}

#[test]
fn generalization_flag_fills_the_gap() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    ok(root, &["gen-data", "--dataset", "ba2motifs", "--count", "200", "--seed", "4", "--split", "seen-unseen", "--out", "su.json"]);
    ok(root, &["train-gnn", "--data", "su.json", "--out", "su.ckpt", "--epochs", "5", "--hidden", "8", "--seed", "0"]);
    ok(root, &["train-explainer", "--data", "su.json", "--model", "su.ckpt", "--family", "saliency", "--seed", "0", "--out", "sal.ckpt"]);
    ok(root, &["explain", "--explainer", "sal.ckpt", "--model", "su.ckpt", "--data", "su.json", "--out", "sal"]);
    ok(
        root,
        &["evaluate", "--explanations", "sal", "--model", "su.ckpt", "--data", "su.json", "--generalization", "--explainer", "sal.ckpt"],
    );
    let report = json(&root.join("sal/report.json"));
    let gap = report["generalization_discrepancy"].as_f64().unwrap();
    assert!((-1.0..=1.0).contains(&gap));
    ok(root, &["report", "sal/report.json", "--out", "charts"]);
    let text = std::fs::read_to_string(root.join("charts/generalization.svg")).unwrap();
    let doc = roxmltree::Document::parse(&text).unwrap();
    assert_eq!(doc.descendants().filter(|n| n.attribute("class") == Some("bar")).count(), 1);
}

#[test]
fn killed_training_leaves_no_checkpoint() {
    let p = pipeline();
    let root = p.root();
    let mut child = Command::new(env!("CARGO_BIN_EXE_genexp"))
        .env("GENEXP_OUTPUT_ROOT", root)
        .args(["train-gnn", "--data", "data.json", "--out", "killed.ckpt", "--epochs", "100000", "--patience", "100000", "--seed", "0"])
        .spawn()
        .unwrap();
    std::thread::sleep(Duration::from_millis(1500));
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(!root.join("killed.ckpt").exists());
    assert!(!root.join("killed.ckpt.json").exists());
}
