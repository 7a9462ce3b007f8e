//! The `spd` binary on small hand-made files.

use std::path::Path;
use std::process::{Command, Output};

use spd_core::io::{write_embeddings, Dtype, EmbeddingFile};
use spd_core::Matrix;
use tempfile::TempDir;

fn spd(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spd"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn write(dir: &TempDir, name: &str, text: &str) {
    std::fs::write(dir.path().join(name), text).unwrap();
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Exit code plus the bracketed error code from the one-line message.
fn failure(out: &Output) -> (i32, String) {
    let err = stderr(out);
    let code = err
        .lines()
        .find_map(|l| l.strip_prefix("error[")?.split_once(']').map(|(c, _)| c.to_string()))
        .unwrap_or_default();
    (out.status.code().unwrap(), code)
}

fn records(path: &Path) -> Vec<serde_json::Value> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn value(records: &[serde_json::Value], config: &str, name: &str) -> f64 {
    records
        .iter()
        .find(|r| r["config"] == config && r["name"] == name)
        .unwrap_or_else(|| panic!("no {config}/{name}"))["value"]
        .as_f64()
        .unwrap()
}

/// Two tight clusters, one per class, along the first axis.
fn two_clusters(dir: &TempDir, n: usize) {
    let data = (0..n)
        .flat_map(|i| {
            let s = if i % 2 == 0 { -2.0 } else { 2.0 };
            [s + 0.01 * i as f64, (i % 3) as f64, 0.5]
        })
        .collect();
    let file = EmbeddingFile {
        matrix: Matrix::new(n, 3, data).unwrap(),
        dtype: Dtype::F64,
    };
    write_embeddings(&dir.path().join("x.emb"), &file).unwrap();
}

#[test]
fn single_class_labels_exit_with_degenerate_labels() {
    let dir = TempDir::new().unwrap();
    two_clusters(&dir, 10);
    let rows: String = (0..10).map(|i| format!("{i},0\n")).collect();
    write(&dir, "y.csv", &format!("sample_index,a\n{rows}"));
    let out = spd(dir.path(), &["fit", "--embeddings", "x.emb", "--labels", "y.csv", "--attribute", "a", "--out", "a.spd", "--seed", "1"]);
    assert_eq!(failure(&out), (11, "DegenerateLabels".into()), "{}", stderr(&out));
    assert!(!dir.path().join("a.spd").exists());
}

#[test]
fn one_sided_group_exits_with_empty_group() {
    let dir = TempDir::new().unwrap();
    write(&dir, "p.csv", "sample_index,predicted,group\n0,1,0\n1,0,0\n2,1,0\n");
    let out = spd(dir.path(), &["evaluate", "classification", "--run", "x=p.csv", "--bootstrap", "0"]);
    assert_eq!(failure(&out), (12, "EmptyGroup".into()), "{}", stderr(&out));
}

#[test]
fn missing_seed_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    two_clusters(&dir, 10);
    let rows: String = (0..10).map(|i| format!("{i},{}\n", i % 2)).collect();
    write(&dir, "y.csv", &format!("sample_index,a\n{rows}"));
    let out = spd(dir.path(), &["fit", "--embeddings", "x.emb", "--labels", "y.csv", "--attribute", "a", "--out", "a.spd"]);
    assert_eq!(failure(&out), (2, "Usage".into()));
}

#[test]
fn malformed_inputs_name_the_file() {
    let dir = TempDir::new().unwrap();
    write(&dir, "bad.emb", "EMB1 but not really");
    write(&dir, "y.csv", "sample_index,a\n0,0\n1,1\n");
    let out = spd(dir.path(), &["fit", "--embeddings", "bad.emb", "--labels", "y.csv", "--attribute", "a", "--out", "o", "--seed", "1"]);
    assert_eq!(failure(&out), (4, "Format".into()));
    assert!(stderr(&out).contains("bad.emb"));

    write(&dir, "p.csv", "sample_index,predicted\n0,1\n");
    let out = spd(dir.path(), &["evaluate", "classification", "--run", "x=p.csv"]);
    assert_eq!(failure(&out), (4, "Schema".into()));
    assert!(stderr(&out).contains("p.csv:1"));

    let out = spd(dir.path(), &["evaluate", "classification", "--run", "x=missing.csv"]);
    assert_eq!(failure(&out), (3, "Io".into()));
}

#[test]
fn label_rows_must_match_embedding_rows() {
    let dir = TempDir::new().unwrap();
    two_clusters(&dir, 10);
    write(&dir, "y.csv", "sample_index,a\n0,0\n1,1\n");
    let out = spd(dir.path(), &["fit", "--embeddings", "x.emb", "--labels", "y.csv", "--attribute", "a", "--out", "o", "--seed", "1"]);
    assert_eq!(failure(&out).0, 4);
}

#[test]
fn classification_reports_delta_dp_and_improvement() {
    let dir = TempDir::new().unwrap();
    // prediction equals group: ΔDP = 1
    write(&dir, "base.csv", "sample_index,predicted,group\n0,0,0\n1,0,0\n2,1,1\n3,1,1\n");
    // group 0 always 0, group 1 split evenly: ΔDP = 0.5
    write(&dir, "new.csv", "sample_index,predicted,group\n0,0,0\n1,0,0\n2,1,1\n3,0,1\n");
    let out = spd(dir.path(), &["evaluate", "classification", "--run", "base=base.csv", "--run", "new=new.csv", "--bootstrap", "0", "--out", "m.jsonl"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let r = records(&dir.path().join("m.jsonl"));
    assert_eq!(value(&r, "base", "delta_dp"), 1.0);
    assert_eq!(value(&r, "new", "delta_dp"), 0.5);
    assert_eq!(value(&r, "new", "improvement_delta_dp"), 50.0);
    assert!(!r.iter().any(|e| e["config"] == "base" && e["name"] == "improvement_delta_dp"));
}

#[test]
fn tiny_retrieval_run() {
    let dir = TempDir::new().unwrap();
    write(&dir, "items.csv", "item,attribute\n0,0\n1,1\n2,0\n3,1\n");
    // query 0 finds its item first, query 1 third
    write(&dir, "r.csv", "query,ground_truth,ranking\n0,2,2 0 1 3\n1,3,1 0 3 2\n");
    let out = spd(
        dir.path(),
        &["evaluate", "retrieval", "--run", "r=r.csv", "--items", "items.csv", "--recall-k", "1,3", "--skew-k", "2", "--bootstrap", "0", "--out", "m.jsonl"],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let r = records(&dir.path().join("m.jsonl"));
    assert_eq!(value(&r, "r", "recall@1"), 0.5);
    assert_eq!(value(&r, "r", "recall@3"), 1.0);
    // query 0's top 2 is all group 0; query 1's is balanced. With α = 1:
    // query 0 worst term |log((0 + 1) / (2 + 2) / 0.5)| = log 2
    let skew = value(&r, "r", "skew@2");
    assert!((skew - std::f64::consts::LN_2 / 2.0).abs() < 1e-12, "{skew}");
}

#[test]
fn generation_run_reports_mismatch_composite() {
    let dir = TempDir::new().unwrap();
    let mut text = String::from("profession,requested,detected\n");
    for i in 0..100 {
        text += &format!("doctor,male,{}\n", if i == 0 { "female" } else { "male" });
        text += &format!("doctor,female,{}\n", if i < 5 { "male" } else { "female" });
    }
    write(&dir, "g.csv", &text);
    let out = spd(dir.path(), &["evaluate", "generation", "--run", "g=g.csv", "--n", "1", "--bootstrap", "0", "--out", "m.jsonl"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let r = records(&dir.path().join("m.jsonl"));
    assert!((value(&r, "g", "mrc") - 5.0).abs() < 1e-12);
}

#[test]
fn fit_summary_matches_the_artifact() {
    let dir = TempDir::new().unwrap();
    two_clusters(&dir, 40);
    let rows: String = (0..40).map(|i| format!("{i},{}\n", i % 2)).collect();
    write(&dir, "y.csv", &format!("sample_index,a\n{rows}"));
    let out = spd(
        dir.path(),
        &["fit", "--embeddings", "x.emb", "--labels", "y.csv", "--attribute", "a", "--out", "a.spd", "--summary", "s.json", "--seed", "3", "--r", "1", "--n-trees", "5"],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("s.json")).unwrap()).unwrap();
    let art = match spd_core::io::read_artifact(&dir.path().join("a.spd")).unwrap() {
        spd_core::debias::DebiasArtifact::Spd(a) => a,
        other => panic!("{other:?}"),
    };
    assert_eq!(summary["attribute"], "a");
    assert_eq!(summary["method"], "spd");
    assert_eq!(summary["d_b"], art.subspace.dim_subspace());
    assert_eq!(summary["n_selected"], art.neutral.n_selected);
    let trail: Vec<f64> = summary["per_iteration_accuracy"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert_eq!(trail, art.subspace.per_iteration_accuracy);

    // applying is deterministic and keeps the dtype
    for out in ["o1.emb", "o2.emb"] {
        let o = spd(dir.path(), &["apply", "--embeddings", "x.emb", "--artifact", "a.spd", "--out", out]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let (a, b) = (std::fs::read(dir.path().join("o1.emb")).unwrap(), std::fs::read(dir.path().join("o2.emb")).unwrap());
    assert_eq!(a, b);
    assert_eq!(spd_core::io::read_embeddings(&dir.path().join("o1.emb")).unwrap().dtype, Dtype::F64);
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = TempDir::new().unwrap();
    two_clusters(&dir, 10);
    write(&dir, "c.toml", "rr = 3\n");
    write(&dir, "y.csv", "sample_index,a\n0,0\n1,1\n");
    let out = spd(dir.path(), &["fit", "--embeddings", "x.emb", "--labels", "y.csv", "--config", "c.toml", "--out", "o"]);
    assert_eq!(failure(&out), (5, "Config".into()));
}
