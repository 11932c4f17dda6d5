use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use volterra_core::estimator::fit as fit_model;
use volterra_core::metrics::{
    benchmark_timing, pfit, run_monte_carlo, write_report, write_timings, MonteCarloConfig,
    TimingConfig,
};
use volterra_core::simulator::{build_databank, read_dataset, write_dataset};
use volterra_core::{
    predict as predict_window, BankKind, BankSpec, Dataset, FitConfig, FittedModel, KernelHyper,
    OptimizerConfig, SolverPath,
};

use crate::config::{
    parse_bank, parse_init, parse_path, parse_timed, parse_variant, BenchmarkSection, FitSection,
    PredictSection, ReportSection, SimulateSection,
};
use crate::error::{CliError, CliResult};
use crate::{BenchmarkArgs, FitArgs, FitParams, PredictArgs, ReportArgs, SimulateArgs};

const DEFAULT_MEMORY: usize = 30;

#[derive(Debug, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    /// Relative to the manifest's directory.
    pub dir: PathBuf,
    pub n_train: usize,
    pub n_test: usize,
    pub snr_db: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub bank: BankSpec,
    pub datasets: Vec<ManifestEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ModelFile {
    pub dataset: PathBuf,
    pub dataset_id: String,
    pub variant: String,
    pub seed: u64,
    pub path_used: SolverPath,
    pub cost: f64,
    pub test_pfit: f64,
    pub hyper: KernelHyper,
    pub config: FitConfig,
}

#[derive(Debug, Serialize)]
struct MetricsRow<'a> {
    dataset: &'a str,
    variant: &'a str,
    path: &'a str,
    order: usize,
    memory: usize,
    pfit: f64,
    cost: f64,
    fit_seconds: f64,
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display(), e))?;
    }
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::io(path.display(), e))?;
    fs::write(path, text + "\n").map_err(|e| CliError::io(path.display(), e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
    serde_json::from_str(&text).map_err(|e| CliError::io(path.display(), e))
}

fn path_name(p: SolverPath) -> &'static str {
    match p {
        SolverPath::Dense => "dense",
        SolverPath::FastSeparable => "fast",
    }
}

fn load_dataset(dir: &Path) -> CliResult<Dataset> {
    read_dataset(dir).map_err(|e| match CliError::from(e) {
        CliError::Io(m) => CliError::io(dir.display(), m),
        other => other,
    })
}

fn bank_order(ds: &Dataset) -> usize {
    BankKind::parse(&ds.bank).map_or(2, |k| k.model_order())
}

pub fn simulate(a: SimulateArgs, f: &SimulateSection, out: &Path) -> CliResult<()> {
    let name = a
        .bank
        .or_else(|| f.bank.clone())
        .unwrap_or_else(|| "d4like".into());
    let kind = parse_bank(&name, a.order.or(f.order), a.snr_db.or(f.snr_db))?;
    let count = a.count.or(f.count).unwrap_or(20);
    if count == 0 {
        return Err(CliError::Config("count: must be >= 1".into()));
    }
    let seed = a.seed.or(f.seed).unwrap_or(0);
    let mut spec = BankSpec::new(kind, count, seed);
    if let Some(n) = a.n_train.or(f.n_train) {
        if n < 2 {
            return Err(CliError::Config("n_train: must be >= 2".into()));
        }
        spec.n_train = n;
    }
    if let Some(n) = a.n_test.or(f.n_test) {
        if n == 0 {
            return Err(CliError::Config("n_test: must be >= 1".into()));
        }
        spec.n_test = Some(n);
    }

    let root = out.join(format!("{}-s{seed}", kind.tag()));
    let datasets = build_databank(&spec)?;
    let mut entries = Vec::with_capacity(datasets.len());
    for ds in &datasets {
        let dir = root.join(&ds.id);
        write_dataset(ds, &dir)?;
        entries.push(ManifestEntry {
            id: ds.id.clone(),
            dir: PathBuf::from(&ds.id),
            n_train: ds.n_train,
            n_test: ds.n_test(),
            snr_db: ds.snr_db,
        });
    }
    write_json(
        &root.join("manifest.json"),
        &Manifest {
            bank: spec,
            datasets: entries,
        },
    )?;
    println!("wrote {} datasets to {}", datasets.len(), root.display());
    Ok(())
}

/// Merges fit flags over the `[fit]` section; `order` falls back to `default_order`.
fn fit_config(p: &FitParams, f: &FitSection, default_order: usize) -> CliResult<FitConfig> {
    let variant = parse_variant(
        p.variant
            .as_deref()
            .or(f.variant.as_deref())
            .unwrap_or("dc-ob"),
    )?;
    let order = p.order.or(f.order).unwrap_or(default_order);
    let memory = p.memory.or(f.memory).unwrap_or(DEFAULT_MEMORY);
    let mut cfg = FitConfig::new(variant, order, memory);
    if let Some(s) = p.path.as_deref().or(f.path.as_deref()) {
        cfg.path = parse_path(s)?;
    }
    if let Some(s) = p.init.as_deref().or(f.init.as_deref()) {
        cfg.init_policy = parse_init(s)?;
    }
    let d = OptimizerConfig::default();
    cfg.optimizer.restarts = p.restarts.or(f.restarts).unwrap_or(d.restarts);
    cfg.optimizer.max_iters = p.max_iters.or(f.max_iters).unwrap_or(d.max_iters);
    cfg.optimizer.seed = p.seed.or(f.seed).unwrap_or(d.seed);
    cfg.validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    Ok(cfg)
}

fn training_memory(cfg: &FitConfig) -> Option<usize> {
    (cfg.path == SolverPath::FastSeparable).then_some(cfg.memory)
}

fn append_metrics(path: &Path, row: &MetricsRow) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display(), e))?;
    }
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| CliError::io(path.display(), e))?;
    let fresh = file.metadata().map(|m| m.len() == 0).unwrap_or(true);
    let mut w = csv::WriterBuilder::new()
        .has_headers(fresh)
        .from_writer(file);
    w.serialize(row)
        .map_err(|e| CliError::io(path.display(), e))?;
    w.flush().map_err(|e| CliError::io(path.display(), e))
}

pub fn fit(a: FitArgs, f: &FitSection, out: &Path) -> CliResult<()> {
    let ds = load_dataset(&a.dataset)?;
    let cfg = fit_config(&a.params, f, bank_order(&ds))?;
    let data = ds.training_data(training_memory(&cfg))?;
    let t0 = std::time::Instant::now();
    let model = fit_model(&data, &cfg)?;
    let fit_seconds = t0.elapsed().as_secs_f64();
    let yhat = predict_window(&model, &ds.u, ds.n_train, ds.n_test())?;
    let score = pfit(ds.test_outputs(), &yhat)?;

    let used = path_name(model.path_used);
    let dir = a.model_dir.unwrap_or_else(|| {
        out.join("models")
            .join(format!("{}-{}-{used}", ds.id, cfg.variant.name))
    });
    write_json(
        &dir.join("model.json"),
        &ModelFile {
            dataset: a.dataset.clone(),
            dataset_id: ds.id.clone(),
            variant: cfg.variant.name.clone(),
            seed: cfg.optimizer.seed,
            path_used: model.path_used,
            cost: model.cost,
            test_pfit: score,
            hyper: model.hyper.clone(),
            config: cfg.clone(),
        },
    )?;
    append_metrics(
        &out.join("metrics.csv"),
        &MetricsRow {
            dataset: &ds.id,
            variant: &cfg.variant.name,
            path: used,
            order: cfg.order,
            memory: cfg.memory,
            pfit: score,
            cost: model.cost,
            fit_seconds,
        },
    )?;
    println!(
        "{} {} ({used}): PFit = {score:.4}, cost = {:.6e}, model at {}",
        ds.id,
        cfg.variant.name,
        model.cost,
        dir.display()
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct PredictionRow {
    t: usize,
    y_hat: f64,
    y_clean: f64,
}

pub fn predict(a: PredictArgs, f: &PredictSection, out: &Path) -> CliResult<()> {
    let model_path = a
        .model
        .or_else(|| f.model.clone())
        .ok_or_else(|| CliError::Config("model: no model file given".into()))?;
    let saved: ModelFile = read_json(&model_path)?;
    let ds_dir = a
        .dataset
        .or_else(|| f.dataset.clone())
        .unwrap_or(saved.dataset.clone());
    let ds = load_dataset(&ds_dir)?;
    let data = ds.training_data(training_memory(&saved.config))?;
    let model = FittedModel::from_hyper(&data, &saved.config, saved.hyper)?;
    let yhat = predict_window(&model, &ds.u, ds.n_train, ds.n_test())?;
    let score = pfit(ds.test_outputs(), &yhat)?;

    let dir = model_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| out.to_path_buf());
    let path = dir.join("predictions.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::io(path.display(), e))?;
    for (k, (&y_hat, &y_clean)) in yhat.iter().zip(ds.test_outputs()).enumerate() {
        w.serialize(PredictionRow {
            t: ds.n_train + k,
            y_hat,
            y_clean,
        })
        .map_err(|e| CliError::io(path.display(), e))?;
    }
    w.flush().map_err(|e| CliError::io(path.display(), e))?;
    println!(
        "{} {}: PFit = {score:.4}, predictions at {}",
        ds.id,
        saved.variant,
        path.display()
    );
    Ok(())
}

pub fn benchmark(a: BenchmarkArgs, f: &BenchmarkSection, out: &Path) -> CliResult<()> {
    let name = a
        .bank
        .or_else(|| f.bank.clone())
        .unwrap_or_else(|| "d4like".into());
    let bank = parse_bank(&name, None, None)?;
    let tc = TimingConfig {
        bank,
        n_list: a
            .n
            .or_else(|| f.n.clone())
            .unwrap_or_else(|| vec![1000, 2000, 4000, 8000]),
        memory: a.memory.or(f.memory).unwrap_or(50),
        order: a.order.or(f.order),
        repetitions: a.repetitions.or(f.repetitions).unwrap_or(5),
        seed: a.seed.or(f.seed).unwrap_or(0),
    };
    if tc.n_list.is_empty() || tc.n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::Config(
            "N: must be a nonempty ascending list".into(),
        ));
    }
    if tc.memory == 0 || tc.repetitions == 0 || tc.order == Some(0) {
        return Err(CliError::Config(
            "memory, repetitions and order must be >= 1".into(),
        ));
    }
    let names = a
        .variants
        .or_else(|| f.variants.clone())
        .unwrap_or_else(|| {
            [
                "dc-ob-w/fast",
                "dc-decay-w/fast",
                "dc-bd-w/fast",
                "dc-ob-w/dense",
            ]
            .map(String::from)
            .to_vec()
        });
    let variants = names
        .iter()
        .map(|s| parse_timed(s))
        .collect::<CliResult<Vec<_>>>()?;
    let table = benchmark_timing(&tc, &variants)?;
    let path = out.join("timings.csv");
    write_timings(&table, &path)?;
    println!(
        "{:<20} {:>8} {:>14} {:>8}",
        "variant", "N", "median_s", "slope"
    );
    for r in &table.rows {
        println!(
            "{:<20} {:>8} {:>14.6e} {:>8.3}",
            r.variant, r.n, r.median_s, r.slope
        );
    }
    println!("timings at {}", path.display());
    Ok(())
}

pub fn report(a: ReportArgs, f: &ReportSection, fit: &FitSection) -> CliResult<()> {
    let manifest_path = a
        .manifest
        .or_else(|| f.manifest.clone())
        .ok_or_else(|| CliError::Config("manifest: no manifest given".into()))?;
    let manifest: Manifest = read_json(&manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let datasets = manifest
        .datasets
        .iter()
        .map(|e| load_dataset(&base.join(&e.dir)))
        .collect::<CliResult<Vec<_>>>()?;
    let names = a
        .variants
        .or_else(|| f.variants.clone())
        .unwrap_or_else(|| {
            ["dc-ob", "dc-bd", "control-bd-delta"]
                .map(String::from)
                .to_vec()
        });
    let variants = names
        .iter()
        .map(|s| parse_variant(s))
        .collect::<CliResult<Vec<_>>>()?;

    // Validate the shared settings once, against the first variant.
    let order = a.params.order.or(fit.order);
    let probe = fit_config(
        &FitParams {
            variant: Some(names.first().cloned().unwrap_or_default()),
            ..a.params.clone()
        },
        fit,
        order.unwrap_or(manifest.bank.kind.model_order()),
    )?;
    let mc = MonteCarloConfig {
        memory: probe.memory,
        order,
        path: probe.path,
        init_policy: probe.init_policy,
        optimizer: probe.optimizer,
        workers: a.workers.or(f.workers).unwrap_or(0),
    };
    if mc.path == SolverPath::FastSeparable {
        if let Some(v) = variants.iter().find(|v| v.output_dc) {
            return Err(CliError::Config(format!(
                "path: the fast path needs Wiener variants, got '{}'",
                v.name
            )));
        }
    }
    let report = run_monte_carlo(&datasets, &variants, &mc)?;
    let dir = a.report_dir.unwrap_or_else(|| base.to_path_buf());
    write_report(&report, &dir)?;
    for agg in &report.aggregates {
        let fmt = |s: Option<volterra_core::metrics::Summary>| {
            s.map_or("-".to_string(), |s| {
                format!("{:.2} (median {:.2})", s.mean, s.median)
            })
        };
        println!(
            "{:<18} PFit {}  GFit {}  NFit {}  failed {}",
            agg.variant,
            fmt(agg.pfit),
            fmt(agg.gfit),
            fmt(agg.nfit),
            agg.failed
        );
    }
    println!("report at {}", dir.display());
    Ok(())
}
