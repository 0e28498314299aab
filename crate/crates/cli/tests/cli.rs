use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use serde_json::{json, Value};

const DATA: &str = "synthetic:n=60,k=3,v=2,dims=5,separation=2";

fn glc(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_glc"));
    cmd.args(args).env_remove("GLC_THREADS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("glc runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn ok(args: &[&str]) -> Output {
    let out = glc(args, &[]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    out
}

/// Short-run training keys, as a config file.
fn quick_config(dir: &Path) -> String {
    let path = dir.join("quick.json");
    let cfg = json!({
        "profile": "desk",
        "pretrain_epochs": 2,
        "epochs": 3,
        "batch_size": 32,
        "eval_every": 2,
        "eval_runs": 2,
        "kmeans_restarts": 2
    });
    fs::write(&path, cfg.to_string()).unwrap();
    path.display().to_string()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn keys(v: &Value) -> Vec<String> {
    v.as_object().unwrap().keys().cloned().collect()
}

fn golden(key: &str) -> Value {
    let g: Value = serde_json::from_str(include_str!("golden/schema.json")).unwrap();
    g[key].clone()
}

fn golden_keys(key: &str) -> Vec<String> {
    let mut k: Vec<String> = golden(key)
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s.as_str().unwrap().to_string())
        .collect();
    k.sort();
    k
}

fn header(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_dataset(dir: &Path, view1: &str, view2: &str, labels: &str, extra: &str) {
    fs::create_dir_all(dir).unwrap();
    fs::write(dir.join("view_1.csv"), view1).unwrap();
    fs::write(dir.join("view_2.csv"), view2).unwrap();
    fs::write(dir.join("labels.csv"), labels).unwrap();
    let n = labels.lines().count();
    fs::write(
        dir.join("manifest.json"),
        format!(
            r#"{{"n_views": 2, "n_samples": {n}, "K": 2, "views": ["view_1.csv", "view_2.csv"], "labels": "labels.csv"{extra}}}"#
        ),
    )
    .unwrap();
}

#[test]
fn prepare_clean_copies_bytes_and_adds_full_mask() {
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("src");
    // irregular formatting must survive the copy untouched
    write_dataset(
        &src,
        "1.0, 2\n3,4.50\n5,6\n-1,0\n",
        "0.1\n0.2\n0.3\n0.4\n",
        "0\n1\n0\n1\n",
        "",
    );
    let out = tmp.path().join("out");
    ok(&["prepare", "--dataset", s(&src), "--setting", "clean", "--out", s(&out)]);
    for f in ["view_1.csv", "view_2.csv", "labels.csv"] {
        assert_eq!(fs::read(src.join(f)).unwrap(), fs::read(out.join(f)).unwrap(), "{f}");
    }
    assert_eq!(fs::read_to_string(out.join("mask.csv")).unwrap(), "1,1\n".repeat(4));
    let m = read_json(&out.join("manifest.json"));
    assert_eq!(m["mask"], "mask.csv");
    assert_eq!(m["standardize"], true);
}

#[test]
fn prepare_incomplete_masks_the_requested_rows_idempotently() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        ok(&[
            "prepare",
            "--dataset",
            DATA,
            "--setting",
            "incomplete",
            "--rate",
            "0.5",
            "--seed",
            "4",
            "--out",
            s(out),
        ]);
    }
    let mask = fs::read_to_string(a.join("mask.csv")).unwrap();
    assert_eq!(mask.lines().count(), 60);
    assert_eq!(mask.lines().filter(|l| l.contains('0')).count(), 30);
    assert!(mask.lines().all(|l| l.contains('1')));
    for f in ["view_1.csv", "view_2.csv", "labels.csv", "mask.csv", "manifest.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    ok(&[
        "prepare",
        "--dataset",
        DATA,
        "--setting",
        "noise",
        "--rate",
        "0.5",
        "--out",
        s(&a),
    ]);
    let flags = fs::read_to_string(a.join("noise_flags.csv")).unwrap();
    assert_eq!(flags.lines().filter(|l| l.contains('1')).count(), 30);
}

#[test]
fn train_writes_artifacts_and_echoes_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = quick_config(tmp.path());
    let out = tmp.path().join("run");
    let stdout = ok(&[
        "train",
        "--config",
        &cfg,
        "--dataset",
        DATA,
        "--setting",
        "incomplete",
        "--rate",
        "0.3",
        "--out",
        s(&out),
    ])
    .stdout;
    let stdout = String::from_utf8(stdout).unwrap();
    assert!(
        stdout.contains("ACC") && stdout.contains("NMI") && stdout.contains("ARI"),
        "{stdout}"
    );
    let history = fs::read_to_string(out.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 1 + 2 + 3);
    let report = read_json(&out.join("report.json"));
    assert_eq!(
        (report["config"]["alpha"].as_f64(), report["config"]["beta"].as_f64()),
        (Some(0.1), Some(1.0))
    );
    assert_eq!(report["config"]["epochs"], 3);
    assert_eq!(report["report"]["runs"].as_array().unwrap().len(), 2);
    let checkpoint = read_json(&out.join("checkpoint.json"));
    assert_eq!(checkpoint["config_hash"], report["config_hash"]);
    assert_eq!(checkpoint["model"]["views"].as_array().unwrap().len(), 2);
}

#[test]
fn artifacts_match_golden_schema() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = quick_config(tmp.path());
    let run = tmp.path().join("run");
    ok(&["train", "--config", &cfg, "--dataset", DATA, "--out", s(&run)]);
    let report = read_json(&run.join("report.json"));
    assert_eq!(report["schema_version"], golden("schema_version"));
    let mut k = keys(&report);
    k.sort();
    assert_eq!(k, golden_keys("report.json"));
    let mut k = keys(&read_json(&run.join("checkpoint.json")));
    k.sort();
    assert_eq!(k, golden_keys("checkpoint.json"));
    assert_eq!(keys(&report["config"]), golden_keys("config"));
    assert_eq!(keys(&report["report"]), golden_keys("cluster_report"));
    assert_eq!(keys(&report["report"]["runs"][0]), golden_keys("cluster_run"));
    assert_eq!(keys(&report["report"]["mean"]), golden_keys("metrics"));
    assert_eq!(header(&run.join("history.csv")), golden("history.csv"));

    let sweep = tmp.path().join("sweep");
    ok(&[
        "sweep",
        "--config",
        &cfg,
        "--dataset",
        DATA,
        "--rates",
        "0.1",
        "--out",
        s(&sweep),
    ]);
    let report = read_json(&sweep.join("sweep.json"));
    assert_eq!(keys(&report), golden_keys("sweep.json"));
    assert_eq!(keys(&report["cells"][0]), golden_keys("cell"));
    assert_eq!(header(&sweep.join("sweep.csv")), golden("sweep.csv"));
    assert_eq!(header(&sweep.join("sweep_table.csv")), golden("sweep_table.csv"));

    let ablate = tmp.path().join("ablate");
    ok(&[
        "ablate",
        "--config",
        &cfg,
        "--dataset",
        DATA,
        "--rate",
        "0.1",
        "--out",
        s(&ablate),
    ]);
    assert_eq!(header(&ablate.join("ablation.csv")), golden("ablation.csv"));
    assert_eq!(header(&ablate.join("ablation_cells.csv")), golden("sweep.csv"));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("x");
    assert_eq!(code(&glc(&["train", "--rate", "1.5", "--out", s(&out)], &[])), 1);
    assert_eq!(code(&glc(&["train", "--alpha", "-1", "--out", s(&out)], &[])), 1);
    assert_eq!(code(&glc(&["train", "--no-such-flag"], &[])), 1);
    assert_eq!(code(&glc(&["sweep", "--out", s(&out)], &[("GLC_THREADS", "0")])), 1);
    let missing = tmp.path().join("missing");
    assert_eq!(
        code(&glc(&["train", "--dataset", s(&missing), "--out", s(&out)], &[])),
        2
    );

    let bad = tmp.path().join("bad");
    write_dataset(&bad, "1,x\n", "1\n", "0\n", "");
    assert_eq!(code(&glc(&["prepare", "--dataset", s(&bad), "--out", s(&out)], &[])), 2);

    let huge = tmp.path().join("huge");
    let big = "1e300,-1e300\n-1e300,1e300\n".repeat(4);
    write_dataset(&huge, &big, &big, &"0\n1\n".repeat(4), r#", "standardize": false"#);
    let cfg = quick_config(tmp.path());
    let o = glc(
        &["train", "--config", &cfg, "--dataset", s(&huge), "--out", s(&out)],
        &[],
    );
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("non-finite"));
}

#[test]
fn sweep_covers_the_product_and_cells_reproduce() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = quick_config(tmp.path());
    let out = tmp.path().join("sweep");
    ok(&[
        "sweep",
        "--config",
        &cfg,
        "--dataset",
        DATA,
        "--setting",
        "incomplete,noise",
        "--rates",
        "0.1,0.5",
        "--out",
        s(&out),
    ]);
    let report = read_json(&out.join("sweep.json"));
    let cells = report["cells"].as_array().unwrap();
    let mut coords: Vec<(String, f64)> = cells
        .iter()
        .map(|c| (c["setting"].as_str().unwrap().to_string(), c["rate"].as_f64().unwrap()))
        .collect();
    coords.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let expected = [("incomplete", 0.1), ("incomplete", 0.5), ("noise", 0.1), ("noise", 0.5)];
    assert_eq!(coords, expected.map(|(s, r)| (s.to_string(), r)));
    assert_eq!(fs::read_to_string(out.join("sweep.csv")).unwrap().lines().count(), 5);
    assert_eq!(
        fs::read_to_string(out.join("sweep_table.csv")).unwrap().lines().count(),
        3
    );
    assert!(out.join("cells/noise_0.5_full/history.csv").exists());

    // rerun one cell from its recorded config alone
    let cell = &cells[3];
    let cell_cfg = tmp.path().join("cell.json");
    fs::write(&cell_cfg, cell["config"].to_string()).unwrap();
    let rerun = tmp.path().join("rerun");
    ok(&["train", "--config", s(&cell_cfg), "--out", s(&rerun)]);
    let again = read_json(&rerun.join("report.json"));
    assert_eq!(again["config_hash"], cell["config_hash"]);
    assert_eq!(again["run_seed"], cell["run_seed"]);
    assert_eq!(again["report"], cell["report"]);
}

#[test]
fn single_cell_sweep_equals_train() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = quick_config(tmp.path());
    let (sweep, train) = (tmp.path().join("s"), tmp.path().join("t"));
    let common = [
        "--config",
        &cfg,
        "--dataset",
        DATA,
        "--setting",
        "incomplete",
        "--rates",
        "0",
        "--seed",
        "9",
    ];
    ok(&[&["sweep"], &common[..], &["--out", s(&sweep)]].concat());
    ok(&[&["train"], &common[..], &["--out", s(&train)]].concat());
    let cells = read_json(&sweep.join("sweep.json"))["cells"].clone();
    assert_eq!(cells.as_array().unwrap().len(), 1);
    let t = read_json(&train.join("report.json"));
    assert_eq!(cells[0]["report"], t["report"]);
    assert_eq!(cells[0]["config_hash"], t["config_hash"]);
}

#[test]
fn sweep_records_failed_cells_and_exits_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = quick_config(tmp.path());
    let out = tmp.path().join("sweep");
    // a single view cannot be made incomplete, except at rate 0
    let one_view = "synthetic:n=30,k=3,v=1,dims=4";
    let o = glc(
        &[
            "sweep",
            "--config",
            &cfg,
            "--dataset",
            one_view,
            "--setting",
            "incomplete",
            "--rates",
            "0,0.5",
            "--out",
            s(&out),
        ],
        &[],
    );
    assert_eq!(code(&o), 1);
    let cells = read_json(&out.join("sweep.json"))["cells"].clone();
    assert_eq!(cells[0]["status"], "ok");
    assert_eq!(cells[1]["status"], "failed");
    assert!(cells[1]["error"].as_str().unwrap().contains("2 views"));
    assert!(cells[1]["report"].is_null());
}

fn without_wall_time(mut v: Value) -> Value {
    for cell in v["cells"].as_array_mut().unwrap() {
        cell.as_object_mut().unwrap().remove("wall_time_s");
    }
    v.as_object_mut().unwrap().remove("config");
    v
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = quick_config(tmp.path());
    let mut reports = Vec::new();
    for threads in ["1", "3"] {
        let out = tmp.path().join(threads);
        let args = [
            "ablate",
            "--config",
            &cfg,
            "--dataset",
            DATA,
            "--setting",
            "incomplete,noise",
            "--out",
            s(&out),
        ];
        let o = glc(&args, &[("GLC_THREADS", threads)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        reports.push((
            without_wall_time(read_json(&out.join("ablate.json"))),
            fs::read(out.join("ablation.csv")).unwrap(),
        ));
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn ablation_rows_share_data_and_seeds() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = quick_config(tmp.path());
    let out = tmp.path().join("ab");
    ok(&[
        "ablate",
        "--config",
        &cfg,
        "--dataset",
        DATA,
        "--setting",
        "noise",
        "--alpha",
        "0.3",
        "--out",
        s(&out),
    ]);
    let cells = read_json(&out.join("ablate.json"))["cells"].clone();
    let cells = cells.as_array().unwrap();
    assert_eq!(cells.len(), 3);
    let weights: Vec<(String, f64, f64)> = cells
        .iter()
        .map(|c| {
            let cfg = &c["config"];
            (
                c["ablation"].as_str().unwrap().to_string(),
                cfg["alpha"].as_f64().unwrap(),
                cfg["beta"].as_f64().unwrap(),
            )
        })
        .collect();
    assert_eq!(
        weights,
        vec![
            ("rec".into(), 0.0, 0.0),
            ("rec+ggc".into(), 0.3, 0.0),
            ("full".into(), 0.3, 1.0)
        ]
    );
    assert!(cells.iter().all(|c| c["run_seed"] == cells[0]["run_seed"]));
    let table = fs::read_to_string(out.join("ablation.csv")).unwrap();
    let rows: Vec<&str> = table.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(rows, ["rec", "rec+ggc", "full"]);
}

#[test]
fn desk_profile_trains_within_budget() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("desk");
    let t = Instant::now();
    ok(&[
        "train",
        "--profile",
        "desk",
        "--dataset",
        "synthetic:n=300,k=3",
        "--setting",
        "incomplete",
        "--rate",
        "0.3",
        "--out",
        s(&out),
    ]);
    assert!(t.elapsed() < Duration::from_secs(300));
    assert_eq!(
        fs::read_to_string(out.join("history.csv")).unwrap().lines().count(),
        1 + 50 + 100
    );
}
