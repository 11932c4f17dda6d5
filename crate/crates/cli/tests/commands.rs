use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_volterra");

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("VOLTERRA_OUT")
        .output()
        .expect("spawn volterra")
}

fn ok(o: &Output) {
    assert!(
        o.status.success(),
        "status {:?}\nstdout: {}\nstderr: {}",
        o.status,
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
}

fn read_tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.push((
                    p.strip_prefix(dir).unwrap().to_path_buf(),
                    fs::read(&p).unwrap(),
                ));
            }
        }
    }
    files.sort();
    files
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn small_bank(out: &Path, count: &str) -> PathBuf {
    ok(&run(
        &[
            "simulate",
            "--bank",
            "d4like",
            "--count",
            count,
            "--seed",
            "7",
            "--n-train",
            "200",
            "--n-test",
            "200",
        ],
        out,
    ));
    out.join("d4like-s7")
}

#[test]
fn simulate_writes_manifest_and_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let bank = small_bank(a.path(), "5");
    small_bank(b.path(), "5");

    let manifest = json(&bank.join("manifest.json"));
    let entries = manifest["datasets"].as_array().unwrap();
    assert_eq!(entries.len(), 5);
    for e in entries {
        let dir = bank.join(e["dir"].as_str().unwrap());
        assert!(dir.join("meta.json").is_file());
        assert!(dir.join("data.csv").is_file());
    }
    assert_eq!(read_tree(a.path()), read_tree(b.path()));
}

#[test]
fn invalid_bank_is_a_config_error_naming_the_field() {
    let t = tempfile::tempdir().unwrap();
    let o = run(&["simulate", "--bank", "d9like"], t.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bank"));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let t = tempfile::tempdir().unwrap();
    let cfg = t.path().join("run.toml");
    fs::write(&cfg, "[simulate]\nbank = \"d4like\"\ncolour = 1\n").unwrap();
    let o = run(&["--config", cfg.to_str().unwrap(), "simulate"], t.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("colour"));
}

#[test]
fn config_file_values_apply_and_flags_override_them() {
    let t = tempfile::tempdir().unwrap();
    let cfg = t.path().join("run.toml");
    fs::write(
        &cfg,
        "[simulate]\nbank = \"d4like\"\ncount = 3\nseed = 11\nn_train = 60\nn_test = 40\n",
    )
    .unwrap();
    ok(&run(
        &[
            "--config",
            cfg.to_str().unwrap(),
            "simulate",
            "--count",
            "2",
        ],
        t.path(),
    ));
    let manifest = json(&t.path().join("d4like-s11/manifest.json"));
    assert_eq!(manifest["datasets"].as_array().unwrap().len(), 2);
    assert_eq!(manifest["datasets"][0]["n_train"], 60);
    assert_eq!(manifest["datasets"][0]["n_test"], 40);
}

#[test]
fn reference_config_is_accepted() {
    let t = tempfile::tempdir().unwrap();
    let o = run(&["config-reference"], t.path());
    ok(&o);
    let cfg = t.path().join("ref.toml");
    fs::write(&cfg, &o.stdout).unwrap();
    let o = run(
        &[
            "--config",
            cfg.to_str().unwrap(),
            "simulate",
            "--count",
            "1",
            "--n-train",
            "40",
        ],
        t.path(),
    );
    ok(&o);
}

#[test]
fn output_root_falls_back_to_environment() {
    let t = tempfile::tempdir().unwrap();
    let o = Command::new(BIN)
        .args([
            "simulate",
            "--bank",
            "d1like",
            "--count",
            "1",
            "--n-train",
            "30",
        ])
        .env("VOLTERRA_OUT", t.path())
        .output()
        .unwrap();
    ok(&o);
    assert!(t.path().join("d1like-s0/manifest.json").is_file());
}

#[test]
fn missing_dataset_is_an_io_error() {
    let t = tempfile::tempdir().unwrap();
    let missing = t.path().join("nowhere");
    let o = run(&["fit", "--dataset", missing.to_str().unwrap()], t.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nowhere"));
}

#[test]
fn fast_path_needs_a_wiener_variant() {
    let t = tempfile::tempdir().unwrap();
    let bank = small_bank(t.path(), "1");
    let ds = bank.join("d4like-0000");
    let o = run(
        &[
            "fit",
            "--dataset",
            ds.to_str().unwrap(),
            "--variant",
            "dc-ob",
            "--path",
            "fast",
        ],
        t.path(),
    );
    assert_eq!(o.status.code(), Some(2));
}

fn fit(ds: &Path, path: &str, out: &Path) -> Value {
    ok(&run(
        &[
            "fit",
            "--dataset",
            ds.to_str().unwrap(),
            "--variant",
            "dc-ob-w",
            "--path",
            path,
            "--memory",
            "12",
            "--restarts",
            "1",
            "--max-iters",
            "300",
        ],
        out,
    ));
    json(&out.join(format!("models/d4like-0000-dc-ob-w-{path}/model.json")))
}

#[test]
fn fit_then_predict_and_fast_matches_dense() {
    let t = tempfile::tempdir().unwrap();
    let bank = small_bank(t.path(), "1");
    let ds = bank.join("d4like-0000");

    let dense = fit(&ds, "dense", t.path());
    let fast = fit(&ds, "fast", t.path());
    assert_eq!(dense["path_used"], "dense");
    assert_eq!(fast["path_used"], "fast_separable");
    for m in [&dense, &fast] {
        assert_eq!(m["variant"], "dc-ob-w");
        assert_eq!(m["seed"], 0);
        assert!(m["cost"].as_f64().unwrap().is_finite());
        assert!(m["hyper"].is_object());
    }
    let pd = dense["test_pfit"].as_f64().unwrap();
    let pf = fast["test_pfit"].as_f64().unwrap();
    assert!((pd - pf).abs() <= 1e-4, "dense {pd} vs fast {pf}");

    let metrics = fs::read_to_string(t.path().join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 3);
    assert!(metrics.starts_with("dataset,variant,path"));

    let model = t.path().join("models/d4like-0000-dc-ob-w-fast/model.json");
    let o = run(&["predict", "--model", model.to_str().unwrap()], t.path());
    ok(&o);
    let preds = fs::read_to_string(model.with_file_name("predictions.csv")).unwrap();
    let rows: Vec<(f64, f64)> = preds
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
            (f[1], f[2])
        })
        .collect();
    assert_eq!(rows.len(), 200);
    let mean = rows.iter().map(|r| r.1).sum::<f64>() / rows.len() as f64;
    let err: f64 = rows.iter().map(|r| (r.1 - r.0).powi(2)).sum::<f64>().sqrt();
    let dev: f64 = rows
        .iter()
        .map(|r| (r.1 - mean).powi(2))
        .sum::<f64>()
        .sqrt();
    let recomputed = 100.0 * (1.0 - err / dev);
    assert!((recomputed - pf).abs() < 1e-6, "{recomputed} vs {pf}");
}

#[test]
fn report_covers_every_pair() {
    let t = tempfile::tempdir().unwrap();
    let bank = small_bank(t.path(), "2");
    let manifest = bank.join("manifest.json");
    ok(&run(
        &[
            "report",
            "--manifest",
            manifest.to_str().unwrap(),
            "--variants",
            "dc-bd-w,dc-ob-w",
            "--memory",
            "10",
            "--restarts",
            "1",
            "--max-iters",
            "200",
            "--workers",
            "1",
        ],
        t.path(),
    ));
    let report = json(&bank.join("report.json"));
    assert_eq!(report["records"].as_array().unwrap().len(), 4);
    assert_eq!(report["aggregates"].as_array().unwrap().len(), 2);
    let csv = fs::read_to_string(bank.join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn benchmark_prints_one_row_per_length_with_finite_slope() {
    let t = tempfile::tempdir().unwrap();
    ok(&run(
        &[
            "benchmark",
            "--N",
            "200,400,800",
            "--memory",
            "10",
            "--repetitions",
            "2",
            "--variants",
            "dc-bd-w/fast,dc-ob-w/dense",
        ],
        t.path(),
    ));
    let text = fs::read_to_string(t.path().join("timings.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("variant,N,median_s,slope"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 6);
    for v in ["dc-bd-w/fast", "dc-ob-w/dense"] {
        let ns: Vec<&str> = rows.iter().filter(|r| r[0] == v).map(|r| r[1]).collect();
        assert_eq!(ns, ["200", "400", "800"]);
    }
    for r in &rows {
        assert!(r[2].parse::<f64>().unwrap() > 0.0);
        assert!(r[3].parse::<f64>().unwrap().is_finite());
    }
}
