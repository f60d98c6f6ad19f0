use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_multirank"))
}

fn s(p: &Path) -> String {
    p.to_str().unwrap().to_owned()
}

/// Small synthetic dataset on disk: three layers, 30 nodes.
fn dataset() -> (TempDir, PathBuf) {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("data");
    let st = bin()
        .args([
            "synth",
            "--points-per-class",
            "10",
            "--seed",
            "4",
            "--out",
            &s(&dir),
        ])
        .status()
        .unwrap();
    assert!(st.success());
    (tmp, dir)
}

fn layer_flags(dir: &Path) -> Vec<String> {
    (0..3)
        .flat_map(|l| {
            [
                "--features".to_owned(),
                s(&dir.join(format!("layer_{l}.csv"))),
            ]
        })
        .collect()
}

#[test]
fn build_query_eval_pipeline() {
    let (tmp, dir) = dataset();
    let graph = tmp.path().join("graph.txt");
    let out = bin()
        .arg("build")
        .args(layer_flags(&dir))
        .args(["--k", "4", "--out", &s(&graph)])
        .output()
        .unwrap();
    assert!(out.status.success());
    let summary = String::from_utf8(out.stderr).unwrap();
    assert_eq!(
        summary.lines().filter(|l| l.starts_with("layer=")).count(),
        3
    );

    let ranks = tmp.path().join("ranks");
    let out = bin()
        .args([
            "query",
            "--graph",
            &s(&graph),
            "--labels",
            &s(&dir.join("labeled.csv")),
        ])
        .args(["--queries", "0,15", "--top-n", "8", "--out", &s(&ranks)])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("query=0 iters="));
    let ranking = fs::read_to_string(ranks.join("query_15.csv")).unwrap();
    let lines: Vec<&str> = ranking.lines().collect();
    assert_eq!(lines[0], "rank,node_id,score");
    assert_eq!(lines.len(), 9);
    assert!(lines[1..]
        .iter()
        .all(|l| !l.split(',').nth(1).unwrap().eq("15")));

    let report = tmp.path().join("report.csv");
    let st = bin()
        .args([
            "eval",
            "--rankings",
            &s(&ranks),
            "--truth",
            &s(&dir.join("labels.csv")),
        ])
        .args([
            "--labels",
            &s(&dir.join("labeled.csv")),
            "--graph",
            &s(&graph),
            "--out",
            &s(&report),
        ])
        .status()
        .unwrap();
    assert!(st.success());
    let text = fs::read_to_string(report).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "query_id,AP,NDCG@5,NDCG@10,NDCG@20,NDCG@40,NS,predicted_category"
    );
    assert!(lines[1].starts_with("0,"));
    assert!(lines.iter().any(|l| l.starts_with("mean,")));
    assert!(lines.iter().any(|l| l.starts_with("category:class0,")));
    assert!(lines.iter().any(|l| l.starts_with("category:class1,")));
}

#[test]
fn uniform_policy_runs_without_labels() {
    let (tmp, dir) = dataset();
    let st = bin()
        .arg("query")
        .args(layer_flags(&dir))
        .args([
            "--alpha-policy",
            "uniform",
            "--queries",
            "3",
            "--out",
            &s(&tmp.path().join("r")),
        ])
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));
    assert!(tmp.path().join("r/query_3.csv").exists());
}

#[test]
fn learned_policy_without_labels_is_a_config_error() {
    let (tmp, dir) = dataset();
    let out = bin()
        .arg("query")
        .args(layer_flags(&dir))
        .args(["--queries", "3", "--out", &s(&tmp.path().join("r"))])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("label"));
}

#[test]
fn mismatched_item_counts_are_rejected() {
    let (tmp, dir) = dataset();
    let short = tmp.path().join("short.csv");
    let text = fs::read_to_string(dir.join("layer_1.csv")).unwrap();
    let kept: Vec<&str> = text.lines().take(20).collect();
    fs::write(&short, kept.join("\n") + "\n").unwrap();
    let out = bin()
        .args([
            "build",
            "--features",
            &s(&dir.join("layer_0.csv")),
            "--features",
            &s(&short),
        ])
        .args(["--out", &s(&tmp.path().join("g.txt"))])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn relevance_pairs_fill_the_ns_column() {
    let (tmp, dir) = dataset();
    let ranks = tmp.path().join("ranks");
    let st = bin()
        .arg("query")
        .args(layer_flags(&dir))
        .args([
            "--alpha-policy",
            "uniform",
            "--queries",
            "0,1",
            "--top-n",
            "6",
            "--out",
            &s(&ranks),
        ])
        .status()
        .unwrap();
    assert!(st.success());
    let pairs = tmp.path().join("pairs.csv");
    fs::write(&pairs, "0,1\n0,2\n0,3\n1,0\n1,2\n1,3\n").unwrap();
    let out = bin()
        .args([
            "eval",
            "--rankings",
            &s(&ranks),
            "--ground-truth",
            &s(&pairs),
            "--nodes",
            "30",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let ns: f64 = text
        .lines()
        .find(|l| l.starts_with("0,"))
        .unwrap()
        .split(',')
        .nth(6)
        .unwrap()
        .parse()
        .unwrap();
    assert!((0.0..=4.0).contains(&ns));
}

#[test]
fn config_file_supplies_flags() {
    let (tmp, dir) = dataset();
    let cfg = tmp.path().join("run.conf");
    let feats: Vec<String> = (0..3)
        .map(|l| s(&dir.join(format!("layer_{l}.csv"))))
        .collect();
    fs::write(
        &cfg,
        format!(
            "# shared settings\nfeatures = {}\nalpha-policy = uniform\neta = 0.8\n",
            feats.join(",")
        ),
    )
    .unwrap();
    let st = bin()
        .args([
            "--config",
            &s(&cfg),
            "query",
            "--queries",
            "2",
            "--out",
            &s(&tmp.path().join("r")),
        ])
        .status()
        .unwrap();
    assert!(st.success());
}

#[test]
fn help_exits_cleanly_and_garbage_does_not() {
    assert!(bin().arg("--help").output().unwrap().status.success());
    assert_eq!(
        bin().arg("frobnicate").output().unwrap().status.code(),
        Some(2)
    );
}
