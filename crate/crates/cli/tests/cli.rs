use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use onh_cli::artifacts::{read_manifest, sha256_file, MANIFEST};
use onh_cli::config::ExperimentConfig;
use proptest::prelude::*;
use tempfile::TempDir;

fn onh(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_onh")).args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn demo_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/demo.json")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Relative path and content of every file below `root`.
fn tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(PathBuf, Vec<u8>)>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(root, root, &mut out);
    out.sort();
    out
}

fn assert_manifest_complete(dir: &Path) {
    let m = read_manifest(dir).unwrap();
    assert_eq!(m.tool, "onh");
    assert_eq!(m.version, env!("CARGO_PKG_VERSION"));
    assert_eq!(m.config_hash.len(), 64);
    for f in &m.files {
        assert_eq!(sha256_file(&dir.join(&f.path)).unwrap(), f.sha256, "{}", f.path);
    }
}

#[test]
fn phantom_generation_is_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        let o = onh(&["phantom", "generate", "--n", "8", "--seed", "7", "--out", s(d)]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let (ta, tb) = (tree(&a), tree(&b));
    assert_eq!(ta.len(), 1 + 1 + 8 * 6);
    assert!(ta == tb, "trees differ");
    assert_manifest_complete(&a);
}

#[test]
fn parallel_generation_matches_serial() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let o = onh(&["phantom", "generate", "--n", "4", "--seed", "3", "--out", s(&a)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = onh(&["phantom", "generate", "--n", "4", "--seed", "3", "--jobs", "3", "--out", s(&b)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(tree(&a) == tree(&b));
}

#[test]
fn usage_errors_exit_1_without_writing() {
    let tmp = TempDir::new().unwrap();
    let cwd_files = || fs::read_dir(tmp.path()).unwrap().count();

    let o = Command::new(env!("CARGO_BIN_EXE_onh")).current_dir(tmp.path()).arg("eval").output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--config"));
    assert_eq!(cwd_files(), 0);

    let out = tmp.path().join("p");
    let o = onh(&["phantom", "generate", "--n", "2", "--seed", "1", "--out", s(&out), "--colour", "red"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--colour"));
    assert!(!out.exists());

    let o = onh(&["train", "svm", "--config", s(&demo_config())]);
    assert_eq!(o.status.code(), Some(1));

    let o = onh(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    let o = onh(&["--version"]);
    assert_eq!(o.status.code(), Some(0));
}

fn write_config(dir: &Path, edit: impl FnOnce(&mut serde_json::Value)) -> PathBuf {
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(demo_config()).unwrap()).unwrap();
    v["output_dir"] = serde_json::Value::String(dir.join("run").to_string_lossy().into_owned());
    edit(&mut v);
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    path
}

#[test]
fn malformed_configs_name_the_field() {
    let cases: Vec<(Box<dyn Fn(&mut serde_json::Value)>, &str)> = vec![
        (Box::new(|v| v["methods"]["rf"]["n_tress"] = 10.into()), "methods.rf"),
        (Box::new(|v| v["cohort"]["n"] = "many".into()), "cohort.n"),
        (Box::new(|v| v["cv"]["folds"] = 1.into()), "cv.folds"),
        (Box::new(|v| v["methods"]["dgcnn"]["head_widths"] = serde_json::json!([4, 3])), "methods.dgcnn"),
        (Box::new(|v| v["surprise"] = true.into()), "surprise"),
        (Box::new(|v| v["methods"] = serde_json::json!({})), "methods"),
        (Box::new(|v| v["points"] = 5.into()), "points"),
    ];
    for (edit, field) in cases {
        let tmp = TempDir::new().unwrap();
        let cfg = write_config(tmp.path(), edit);
        let o = onh(&["eval", "--config", s(&cfg)]);
        assert_eq!(o.status.code(), Some(1), "{field}: {}", stderr(&o));
        assert!(stderr(&o).contains(field), "{field} not named in: {}", stderr(&o));
        assert!(!tmp.path().join("run").exists(), "{field}: files were written");
    }

    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("broken.json"), "{\"output_dir\": ").unwrap();
    let o = onh(&["eval", "--config", s(&tmp.path().join("broken.json"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn eval_writes_complete_reproducible_artifacts() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let o = onh(&["eval", "--config", s(&demo_config()), "--out", s(&a)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = onh(&["eval", "--config", s(&demo_config()), "--out", s(&b), "--jobs", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));

    for f in [
        "metrics.jsonl",
        "summary.json",
        "predictions.csv",
        "critical_points.jsonl",
        "labels.csv",
        "structural_params.csv",
        "splits.json",
    ] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_eq!(read_manifest(&a).unwrap().config_hash, read_manifest(&b).unwrap().config_hash);
    assert_manifest_complete(&a);

    let metrics = fs::read_to_string(a.join("metrics.jsonl")).unwrap();
    assert_eq!(metrics.lines().count(), 3 * 3);
    let labels = fs::read_to_string(a.join("labels.csv")).unwrap();
    assert_eq!(labels.lines().count(), 25);

    let o = onh(&["eval", "--config", s(&demo_config()), "--out", s(&a)]);
    assert_eq!(o.status.code(), Some(1), "non-empty output directory must be refused");

    let o = onh(&["critical-points", "--run", s(&a), "--ply"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let crit = a.join("critical_points");
    let csv = fs::read_to_string(crit.join("critical_density.csv")).unwrap();
    assert!(csv.starts_with("x_mm,y_mm,z_mm,count\n"));
    assert!(fs::read_to_string(crit.join("critical_density.ply")).unwrap().starts_with("ply\n"));
    assert_manifest_complete(&crit);
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(summary["max_critical_set"].as_u64().unwrap() <= 32);

    let o = onh(&["critical-points", "--run", s(&a), "--fold", "1", "--out", s(&tmp.path().join("c1"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = onh(&["critical-points", "--run", s(&a), "--fold", "9", "--out", s(&tmp.path().join("c9"))]);
    assert_eq!(o.status.code(), Some(1));

    let o = onh(&["report", "--run", s(&a)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = String::from_utf8(o.stdout).unwrap();
    for m in ["ae", "dgcnn", "rf"] {
        assert!(table.lines().any(|l| l.starts_with(m)), "{m} missing from\n{table}");
    }
    let report = a.join("report");
    assert_eq!(fs::read_to_string(report.join("table.txt")).unwrap(), table);
    let roc = fs::read_to_string(report.join("roc_points.csv")).unwrap();
    assert!(roc.starts_with("method,fold,fpr,tpr\n"));
    let mean = fs::read_to_string(report.join("mean_roc.csv")).unwrap();
    assert_eq!(mean.lines().count(), 1 + 3 * 101);
    assert_manifest_complete(&report);
}

#[test]
fn extraction_and_labelling_commands() {
    let tmp = TempDir::new().unwrap();
    let p = tmp.path().join("p");
    let o = onh(&["phantom", "generate", "--n", "3", "--seed", "21", "--out", s(&p)]);
    assert!(o.status.success(), "{}", stderr(&o));

    let pc = tmp.path().join("pc");
    let o = onh(&["extract", "pointcloud", "--phantom", s(&p), "--id", "onh_0002", "--n", "300", "--ply", "--out", s(&pc)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let cloud = onh_geometry::io::read_cloud_csv(&pc.join("onh_0002.csv")).unwrap();
    assert_eq!(cloud.len(), 300);
    assert!(pc.join("onh_0002.ply").is_file());
    assert!(pc.join(MANIFEST).is_file());

    let o = onh(&["extract", "pointcloud", "--phantom", s(&p), "--id", "onh_0042", "--out", s(&tmp.path().join("x"))]);
    assert_eq!(o.status.code(), Some(1));

    let pp = tmp.path().join("pp");
    let o = onh(&["extract", "params", "--phantom", s(&p), "--out", s(&pp)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let params = fs::read_to_string(pp.join("structural_params.csv")).unwrap();
    assert_eq!(params.lines().count(), 4);
    assert_eq!(params.lines().next().unwrap().split(',').count(), 1 + onh_baselines::FEATURE_COUNT);

    let pl = tmp.path().join("pl");
    let o = onh(&["label", "strain", "--phantom", s(&p), "--out", s(&pl)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let labels = fs::read_to_string(pl.join("labels.csv")).unwrap();
    assert!(labels.starts_with("id,e_eff,threshold,label\n"));
    assert_eq!(labels.lines().count(), 4);

    let o = onh(&["label", "strain", "--phantom", s(&p), "--threshold", "-1", "--out", s(&tmp.path().join("y"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn corrupt_inputs_are_runtime_failures() {
    let tmp = TempDir::new().unwrap();
    let p = tmp.path().join("p");
    let o = onh(&["phantom", "generate", "--n", "2", "--seed", "4", "--out", s(&p)]);
    assert!(o.status.success(), "{}", stderr(&o));
    fs::write(p.join("onh_0001").join("volume.raw"), [0u8; 10]).unwrap();
    let o = onh(&["extract", "params", "--phantom", s(&p), "--out", s(&tmp.path().join("pp"))]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    let o = onh(&["extract", "params", "--phantom", s(&tmp.path().join("missing")), "--out", s(&tmp.path().join("q"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn train_subcommand_uses_one_split() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("rf");
    let o = onh(&["train", "rf", "--config", s(&demo_config()), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("models/fold0/rf.json").is_file());
    assert!(!out.join("models/fold0/dgcnn.bin").exists());
    let metrics = fs::read_to_string(out.join("metrics.jsonl")).unwrap();
    assert_eq!(metrics.lines().count(), 1);
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["methods"]["rf"]["folds"], 1);

    let cfg = write_config(tmp.path(), |v| {
        v["methods"].as_object_mut().unwrap().remove("dgcnn");
    });
    let o = onh(&["train", "dgcnn", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("methods.dgcnn"));
}

#[test]
fn demo_config_parses_and_hash_ignores_placement() {
    let text = fs::read_to_string(demo_config()).unwrap();
    let cfg = ExperimentConfig::from_json(&text).unwrap();
    let mut moved = cfg.clone();
    moved.output_dir = PathBuf::from("/elsewhere");
    moved.jobs = 4;
    assert_eq!(cfg.hash(), moved.hash());
    let mut changed = cfg.clone();
    changed.cv.seed += 1;
    assert_ne!(cfg.hash(), changed.hash());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn resolved_configs_round_trip(n in 6usize..400, folds in 2usize..6, points in 64usize..4096, seed in any::<u64>(), jobs in 1usize..9) {
        let mut cfg = ExperimentConfig::from_json(&fs::read_to_string(demo_config()).unwrap()).unwrap();
        cfg.cohort.n = n;
        cfg.cohort.seed = seed;
        cfg.cv.folds = folds;
        cfg.points = points;
        cfg.jobs = jobs;
        let text = serde_json::to_string(&cfg).unwrap();
        let back = ExperimentConfig::from_json(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.hash(), cfg.hash());
    }
}
