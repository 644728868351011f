use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

fn transa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_transa"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Writes a small named-triple dataset: 50 entities, 3 relations,
/// 240/30/30 triples.
fn raw_dataset(dir: &Path) -> [PathBuf; 3] {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut triples = std::collections::BTreeSet::new();
    while triples.len() < 300 {
        let h = rng.gen_range(0..50);
        let r = rng.gen_range(0..3);
        let t = (h + 1 + rng.gen_range(0..5) + 7 * r) % 50;
        triples.insert((h, r, t));
    }
    let lines: Vec<String> = triples
        .iter()
        .map(|(h, r, t)| format!("ent{h}\trel{r}\tent{t}\n"))
        .collect();
    // Spread held-out triples over the list so their entities also appear in training.
    let (mut train, mut valid, mut test) = (String::new(), String::new(), String::new());
    for (i, line) in lines.iter().enumerate() {
        match i % 10 {
            3 => valid.push_str(line),
            7 => test.push_str(line),
            _ => train.push_str(line),
        }
    }
    let paths = [
        dir.join("train.txt"),
        dir.join("valid.txt"),
        dir.join("test.txt"),
    ];
    for (path, text) in paths.iter().zip([train, valid, test]) {
        fs::write(path, text).unwrap();
    }
    paths
}

fn ingested(dir: &Path) -> PathBuf {
    let [train, valid, test] = raw_dataset(dir);
    let graph = dir.join("graph");
    let out = transa(&[
        "ingest",
        "--train",
        p(&train),
        "--valid",
        p(&valid),
        "--test",
        p(&test),
        "--out",
        p(&graph),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    graph
}

fn train_small(graph: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "train",
        "--graph",
        p(graph),
        "--dim",
        "8",
        "--epochs",
        "5",
        "--batch",
        "40",
        "--out",
        p(out),
    ];
    if !extra.contains(&"--lr") {
        args.extend(["--lr", "0.01"]);
    }
    args.extend_from_slice(extra);
    transa(&args)
}

fn files_in(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

#[test]
fn ingest_prints_summary_and_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let [train, valid, test] = raw_dataset(dir.path());
    let run = |name: &str| {
        let out_dir = dir.path().join(name);
        let out = transa(&[
            "ingest",
            "--train",
            p(&train),
            "--valid",
            p(&valid),
            "--test",
            p(&test),
            "--out",
            p(&out_dir),
        ]);
        assert_eq!(code(&out), 0);
        (stdout(&out), out_dir)
    };
    let (summary, a) = run("a");
    assert!(
        summary.contains("rels=3") && summary.contains("train=240"),
        "{summary}"
    );
    let (_, b) = run("b");
    assert_eq!(files_in(&a), files_in(&b));
    for name in files_in(&a) {
        assert_eq!(
            fs::read(a.join(&name)).unwrap(),
            fs::read(b.join(&name)).unwrap(),
            "{name} differs"
        );
    }

    // Re-ingesting the serialized id triples reproduces them exactly.
    let c = dir.path().join("c");
    let (tr, va, te) = (a.join("train.tsv"), a.join("valid.tsv"), a.join("test.tsv"));
    let out = transa(&[
        "ingest",
        "--format",
        "ids",
        "--train",
        p(&tr),
        "--valid",
        p(&va),
        "--test",
        p(&te),
        "--out",
        p(&c),
    ]);
    assert_eq!(code(&out), 0);
    for split in ["train.tsv", "valid.tsv", "test.tsv"] {
        assert_eq!(
            fs::read(a.join(split)).unwrap(),
            fs::read(c.join(split)).unwrap(),
            "{split} differs"
        );
    }
}

#[test]
fn missing_input_is_a_data_error_and_writes_nothing() {
    let dir = TempDir::new().unwrap();
    let [train, valid, _] = raw_dataset(dir.path());
    let out_dir = dir.path().join("graph");
    let missing = dir.path().join("absent.txt");
    let out = transa(&[
        "ingest",
        "--train",
        p(&train),
        "--valid",
        p(&valid),
        "--test",
        p(&missing),
        "--out",
        p(&out_dir),
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.txt"));
    assert!(!out_dir.exists());
}

#[test]
fn malformed_line_reports_its_location() {
    let dir = TempDir::new().unwrap();
    let [train, valid, test] = raw_dataset(dir.path());
    fs::write(&test, "ent1\trel0\n").unwrap();
    let out = transa(&[
        "ingest",
        "--train",
        p(&train),
        "--valid",
        p(&valid),
        "--test",
        p(&test),
        "--out",
        p(&dir.path().join("g")),
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("test.txt:1"));
}

#[test]
fn train_eval_bound_export_round_trip() {
    let dir = TempDir::new().unwrap();
    let graph = ingested(dir.path());
    let run = dir.path().join("run");
    let out = train_small(&graph, &run, &[]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        files_in(&run),
        ["config.toml", "epochs.json", "epochs.tsv", "model.tsv"]
    );
    let epochs: serde_json::Value =
        serde_json::from_slice(&fs::read(run.join("epochs.json")).unwrap()).unwrap();
    assert_eq!(epochs.as_array().unwrap().len(), 5);

    let model = run.join("model.tsv");
    let lp = dir.path().join("lp");
    let out = transa(&[
        "eval",
        "--graph",
        p(&graph),
        "--model",
        p(&model),
        "--per-relation",
        "--out",
        p(&lp),
    ]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("filtered"));
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(lp.join("lp_report.json")).unwrap()).unwrap();
    let mr = report["filtered_mean_rank"].as_f64().unwrap();
    assert!((1.0..=50.0).contains(&mr));
    assert!(lp.join("lp_per_relation.tsv").exists());

    let tc = dir.path().join("tc");
    let out = transa(&[
        "eval",
        "--graph",
        p(&graph),
        "--model",
        p(&model),
        "--task",
        "tc",
        "--out",
        p(&tc),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(tc.join("tc_report.json")).unwrap()).unwrap();
    assert_eq!(report["negatives"], "position-compatible");
    assert!((0.0..=1.0).contains(&report["accuracy"].as_f64().unwrap()));

    let bound = dir.path().join("bound");
    let out = transa(&[
        "bound",
        "--graph",
        p(&graph),
        "--model",
        p(&model),
        "--margin",
        "0.5,2",
        "--out",
        p(&bound),
    ]);
    assert_eq!(code(&out), 0);
    let rows: serde_json::Value =
        serde_json::from_slice(&fs::read(bound.join("risk.json")).unwrap()).unwrap();
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 2);
    for row in rows {
        assert!(row["bound"].as_f64().unwrap() >= row["empirical_risk"].as_f64().unwrap());
    }

    let export = dir.path().join("export");
    let out = transa(&[
        "export",
        "--graph",
        p(&graph),
        "--model",
        p(&model),
        "--exact",
        "--out",
        p(&export),
    ]);
    assert_eq!(code(&out), 0);
    let entities = fs::read_to_string(export.join("entity_embeddings.tsv")).unwrap();
    assert_eq!(entities.lines().count(), 50);
    assert_eq!(entities.lines().next().unwrap().split('\t').count(), 9);
}

#[test]
fn training_is_deterministic_and_config_replays() {
    let dir = TempDir::new().unwrap();
    let graph = ingested(dir.path());
    let (a, b, c) = (
        dir.path().join("a"),
        dir.path().join("b"),
        dir.path().join("c"),
    );
    assert_eq!(code(&train_small(&graph, &a, &["--seed", "4"])), 0);
    assert_eq!(
        code(&train_small(&graph, &b, &["--seed", "4", "--threads", "3"])),
        0
    );
    let model_a = fs::read(a.join("model.tsv")).unwrap();
    assert_eq!(model_a, fs::read(b.join("model.tsv")).unwrap());

    let out = transa(&[
        "train",
        "--config",
        p(&a.join("config.toml")),
        "--out",
        p(&c),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(model_a, fs::read(c.join("model.tsv")).unwrap());

    let d = dir.path().join("d");
    assert_eq!(code(&train_small(&graph, &d, &["--seed", "5"])), 0);
    assert_ne!(model_a, fs::read(d.join("model.tsv")).unwrap());
}

#[test]
fn preset_values_are_recorded_and_flags_win() {
    let dir = TempDir::new().unwrap();
    let graph = ingested(dir.path());
    let run = dir.path().join("run");
    let out = transa(&[
        "train",
        "--preset",
        "fb13-tc",
        "--graph",
        p(&graph),
        "--epochs",
        "1",
        "--dim",
        "4",
        "--out",
        p(&run),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let cfg: toml::Table =
        toml::from_str(&fs::read_to_string(run.join("config.toml")).unwrap()).unwrap();
    assert_eq!(cfg["preset"].as_str(), Some("fb13-tc"));
    assert_eq!(cfg["batch"].as_integer(), Some(480));
    assert_eq!(cfg["lr"].as_float(), Some(0.001));
    assert_eq!(cfg["dim"].as_integer(), Some(4));
    assert_eq!(cfg["dissim"].as_str(), Some("l1"));
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = TempDir::new().unwrap();
    let graph = ingested(dir.path());
    let out_dir = dir.path().join("x");
    for args in [
        vec![
            "train",
            "--graph",
            p(&graph),
            "--no-such-flag",
            "--out",
            p(&out_dir),
        ],
        vec![
            "train",
            "--graph",
            p(&graph),
            "--preset",
            "nope",
            "--out",
            p(&out_dir),
        ],
        vec![
            "train",
            "--graph",
            p(&graph),
            "--margin-mode",
            "fixed:-1",
            "--out",
            p(&out_dir),
        ],
        vec![
            "train",
            "--graph",
            p(&graph),
            "--mu",
            "1.5",
            "--out",
            p(&out_dir),
        ],
        vec!["train", "--out", p(&out_dir)],
        vec![
            "bound",
            "--graph",
            p(&graph),
            "--model",
            "m.tsv",
            "--out",
            p(&out_dir),
        ],
        vec![
            "--threads",
            "0",
            "partition",
            "--graph",
            p(&graph),
            "-k",
            "2",
            "--out",
            p(&out_dir),
        ],
    ] {
        let out = transa(&args);
        assert_eq!(
            code(&out),
            1,
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    assert_eq!(code(&transa(&["--help"])), 0);
}

#[test]
fn diverging_training_exits_with_three_and_keeps_a_model() {
    let dir = TempDir::new().unwrap();
    let graph = ingested(dir.path());
    let run = dir.path().join("run");
    let out = train_small(&graph, &run, &["--lr", "1e308"]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("non-finite"));
    let model = fs::read_to_string(run.join("model.tsv")).unwrap();
    assert!(!model.contains("NaN") && !model.contains("inf"));
}

#[test]
fn model_from_another_graph_is_rejected() {
    let dir = TempDir::new().unwrap();
    let graph = ingested(dir.path());
    let run = dir.path().join("run");
    assert_eq!(code(&train_small(&graph, &run, &[])), 0);

    let other = dir.path().join("other");
    fs::create_dir(&other).unwrap();
    let small = other.join("t.txt");
    fs::write(&small, "a\tr\tb\nb\tr\tc\n").unwrap();
    let g2 = other.join("g");
    assert_eq!(
        code(&transa(&[
            "ingest",
            "--train",
            p(&small),
            "--valid",
            p(&small),
            "--test",
            p(&small),
            "--out",
            p(&g2)
        ])),
        0
    );
    let out = transa(&[
        "eval",
        "--graph",
        p(&g2),
        "--model",
        p(&run.join("model.tsv")),
        "--out",
        p(&other.join("e")),
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("mismatch"));
}

#[test]
fn partition_and_sweep_write_their_tables() {
    let dir = TempDir::new().unwrap();
    let graph = ingested(dir.path());
    let parts = dir.path().join("parts");
    let out = transa(&[
        "partition",
        "--graph",
        p(&graph),
        "-k",
        "3",
        "--seed",
        "2",
        "--out",
        p(&parts),
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(
        files_in(&parts),
        ["config.toml", "part-00", "part-01", "part-02"]
    );
    assert!(parts.join("part-01").join("source_relations.tsv").exists());

    let sweep = dir.path().join("sweep");
    let out = transa(&[
        "sweep",
        "--graph",
        p(&graph),
        "--dim",
        "6",
        "--epochs",
        "3",
        "--batch",
        "40",
        "--margins",
        "0.5,1,2",
        "--out",
        p(&sweep),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let tsv = fs::read_to_string(sweep.join("sweep.tsv")).unwrap();
    assert_eq!(tsv.lines().count(), 4);
    assert!(tsv.starts_with("margin\traw_mean_rank"));
}
