//! Fit metrics, Monte Carlo orchestration and EB-cost timing.

use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VolterraError};
use crate::estimator::{
    decompose_wiener, fit, predict, Anchor, EbProblem, FitConfig, KernelVariant, OptimizerConfig,
    SolverPath,
};
use crate::kernels::{BlockStructure, DcParams, Kappa2, KernelHyper};
use crate::output_kernel::InitPolicy;
use crate::simulator::{build_databank, BankKind, BankSpec, Dataset};

/// `100 · (1 - ‖ref - est‖ / ‖ref - mean(ref)‖)`.
pub fn fit_percent(reference: &[f64], estimate: &[f64]) -> Result<f64> {
    if reference.len() != estimate.len() {
        return Err(VolterraError::DimensionMismatch(format!(
            "reference has {} values, estimate {}",
            reference.len(),
            estimate.len()
        )));
    }
    if reference.is_empty() {
        return Err(VolterraError::DegenerateReference);
    }
    let mean = reference.iter().sum::<f64>() / reference.len() as f64;
    let spread: f64 = reference.iter().map(|r| (r - mean).powi(2)).sum();
    if !(spread > 0.0) {
        return Err(VolterraError::DegenerateReference);
    }
    let err: f64 = reference
        .iter()
        .zip(estimate)
        .map(|(r, e)| (r - e).powi(2))
        .sum();
    Ok(100.0 * (1.0 - (err / spread).sqrt()))
}

/// Prediction fit of `y_hat` against the noise-free outputs.
pub fn pfit(y_true: &[f64], y_hat: &[f64]) -> Result<f64> {
    fit_percent(y_true, y_hat)
}

/// Impulse-response fit.
pub fn gfit(g_true: &[f64], g_hat: &[f64]) -> Result<f64> {
    fit_percent(g_true, g_hat)
}

pub const NFIT_POINTS: usize = 301;

/// `-1.5, -1.49, ..., 1.5`.
pub fn nfit_grid() -> Vec<f64> {
    (0..NFIT_POINTS).map(|i| -1.5 + 0.01 * i as f64).collect()
}

/// Static-nonlinearity fit over [`nfit_grid`].
pub fn nfit(nl_true: impl Fn(f64) -> f64, nl_hat: impl Fn(f64) -> f64) -> Result<f64> {
    let grid = nfit_grid();
    let r: Vec<f64> = grid.iter().map(|&x| nl_true(x)).collect();
    let e: Vec<f64> = grid.iter().map(|&x| nl_hat(x)).collect();
    fit_percent(&r, &e)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitRecord {
    pub dataset: String,
    pub variant: String,
    pub pfit: f64,
    pub gfit: Option<f64>,
    pub nfit: Option<f64>,
    pub cost: f64,
    pub fit_seconds: f64,
    pub predict_seconds: f64,
    pub hyper: Option<KernelHyper>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

impl Summary {
    /// Summary over the finite values; `None` when there are none.
    pub fn of(values: impl IntoIterator<Item = f64>) -> Option<Self> {
        let mut v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        Some(Self {
            count: v.len(),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            median: quantile(&v, 0.5),
            q1: quantile(&v, 0.25),
            q3: quantile(&v, 0.75),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariantAggregate {
    pub variant: String,
    pub failed: usize,
    pub pfit: Option<Summary>,
    pub gfit: Option<Summary>,
    pub nfit: Option<Summary>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub records: Vec<FitRecord>,
    pub aggregates: Vec<VariantAggregate>,
}

impl FitReport {
    pub fn from_records(records: Vec<FitRecord>) -> Self {
        let mut names: Vec<String> = Vec::new();
        for r in &records {
            if !names.contains(&r.variant) {
                names.push(r.variant.clone());
            }
        }
        let aggregates = names
            .into_iter()
            .map(|name| {
                let rs: Vec<&FitRecord> = records.iter().filter(|r| r.variant == name).collect();
                VariantAggregate {
                    failed: rs.iter().filter(|r| !r.pfit.is_finite()).count(),
                    pfit: Summary::of(rs.iter().map(|r| r.pfit)),
                    gfit: Summary::of(rs.iter().filter_map(|r| r.gfit)),
                    nfit: Summary::of(rs.iter().filter_map(|r| r.nfit)),
                    variant: name,
                }
            })
            .collect();
        Self {
            records,
            aggregates,
        }
    }

    pub fn aggregate(&self, variant: &str) -> Option<&VariantAggregate> {
        self.aggregates.iter().find(|a| a.variant == variant)
    }

    pub fn mean_pfit(&self, variant: &str) -> Option<f64> {
        self.aggregate(variant)?.pfit.map(|s| s.mean)
    }
}

#[derive(Debug, Serialize)]
struct CsvRecord<'a> {
    dataset: &'a str,
    variant: &'a str,
    pfit: f64,
    gfit: Option<f64>,
    nfit: Option<f64>,
    cost: f64,
    fit_seconds: f64,
    predict_seconds: f64,
    error: &'a str,
}

/// Writes `report.json` and `report.csv` into `dir`.
pub fn write_report(report: &FitReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(
        dir.join("report.json"),
        serde_json::to_string_pretty(report)?,
    )?;
    let mut w = csv::Writer::from_path(dir.join("report.csv"))?;
    for r in &report.records {
        w.serialize(CsvRecord {
            dataset: &r.dataset,
            variant: &r.variant,
            pfit: r.pfit,
            gfit: r.gfit,
            nfit: r.nfit,
            cost: r.cost,
            fit_seconds: r.fit_seconds,
            predict_seconds: r.predict_seconds,
            error: r.error.as_deref().unwrap_or(""),
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Settings shared by every fit in a Monte Carlo run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonteCarloConfig {
    pub memory: usize,
    /// Defaults to the bank's model order.
    pub order: Option<usize>,
    pub path: SolverPath,
    pub init_policy: InitPolicy,
    pub optimizer: OptimizerConfig,
    /// Worker threads; `0` uses the global pool.
    pub workers: usize,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            memory: 30,
            order: None,
            path: SolverPath::Dense,
            init_policy: InitPolicy::TrimToKnown,
            optimizer: OptimizerConfig::default(),
            workers: 0,
        }
    }
}

impl MonteCarloConfig {
    pub fn fit_config(&self, variant: &KernelVariant, order: usize) -> FitConfig {
        FitConfig {
            path: self.path,
            variant: variant.clone(),
            order,
            memory: self.memory,
            optimizer: self.optimizer,
            init_policy: self.init_policy,
        }
    }
}

/// First index with a nonzero true impulse-response value, and that value.
pub fn true_anchor(g: &[f64]) -> Option<Anchor> {
    let i = g.iter().position(|v| v.abs() > 1e-12)?;
    Some(Anchor {
        value: g[i],
        index: Some(i),
    })
}

/// Fits one dataset with one variant and scores it on the dataset's test split.
pub fn evaluate_pair(ds: &Dataset, variant: &KernelVariant, cfg: &FitConfig) -> FitRecord {
    let mut rec = FitRecord {
        dataset: ds.id.clone(),
        variant: variant.name.clone(),
        pfit: f64::NAN,
        gfit: None,
        nfit: None,
        cost: f64::NAN,
        fit_seconds: f64::NAN,
        predict_seconds: f64::NAN,
        hyper: None,
        error: None,
    };
    let run = |rec: &mut FitRecord| -> Result<()> {
        let memory = (cfg.path == SolverPath::FastSeparable).then_some(cfg.memory);
        let data = ds.training_data(memory)?;
        let t0 = Instant::now();
        let model = fit(&data, cfg)?;
        rec.fit_seconds = t0.elapsed().as_secs_f64();
        rec.cost = model.cost;
        rec.hyper = Some(model.hyper.clone());
        let t1 = Instant::now();
        let yhat = predict(&model, &ds.u, ds.n_train, ds.n_test())?;
        rec.predict_seconds = t1.elapsed().as_secs_f64();
        rec.pfit = pfit(ds.test_outputs(), &yhat)?;
        let wiener_truth = ds.system.g2.is_none() && ds.system.linear_branch.is_none();
        if wiener_truth && !variant.output_dc {
            let n = cfg.memory;
            let g_true: Vec<f64> = (0..n)
                .map(|t| ds.system.g1.ir.get(t).copied().unwrap_or(0.0))
                .collect();
            if let Some(anchor) = true_anchor(&g_true) {
                let dec = decompose_wiener(&model, anchor)?;
                rec.gfit = Some(gfit(&g_true, &dec.g_hat)?);
                rec.nfit = Some(nfit(
                    |x| ds.system.nonlinearity(x),
                    |x| dec.nonlinearity.eval(x),
                )?);
            }
        }
        Ok(())
    };
    if let Err(e) = run(&mut rec) {
        rec.error = Some(e.to_string());
        if !rec.pfit.is_finite() {
            rec.pfit = f64::NAN;
        }
    }
    rec
}

/// Fits every `(dataset, variant)` pair; individual failures are recorded, not returned.
pub fn run_monte_carlo(
    datasets: &[Dataset],
    variants: &[KernelVariant],
    cfg: &MonteCarloConfig,
) -> Result<FitReport> {
    if datasets.is_empty() {
        return Err(VolterraError::InvalidArgument("databank is empty".into()));
    }
    if variants.is_empty() {
        return Err(VolterraError::InvalidArgument(
            "no kernel variants given".into(),
        ));
    }
    if cfg.memory == 0 {
        return Err(VolterraError::InvalidArgument("memory must be >= 1".into()));
    }
    let pairs: Vec<(&Dataset, &KernelVariant)> = datasets
        .iter()
        .flat_map(|d| variants.iter().map(move |v| (d, v)))
        .collect();
    let work = || -> Vec<FitRecord> {
        pairs
            .par_iter()
            .map(|(d, v)| {
                let order = cfg
                    .order
                    .unwrap_or_else(|| BankKind::parse(&d.bank).map_or(2, |k| k.model_order()));
                evaluate_pair(d, v, &cfg.fit_config(v, order))
            })
            .collect()
    };
    let records = if cfg.workers == 0 {
        work()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| VolterraError::InvalidArgument(e.to_string()))?
            .install(work)
    };
    Ok(FitReport::from_records(records))
}

/// Builds the bank and runs [`run_monte_carlo`] on it.
pub fn run_monte_carlo_bank(
    bank: &BankSpec,
    variants: &[KernelVariant],
    cfg: &MonteCarloConfig,
) -> Result<FitReport> {
    run_monte_carlo(&build_databank(bank)?, variants, cfg)
}

/// A kernel variant timed on a given solver path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedVariant {
    pub variant: KernelVariant,
    pub path: SolverPath,
}

impl TimedVariant {
    pub fn label(&self) -> String {
        let p = match self.path {
            SolverPath::Dense => "dense",
            SolverPath::FastSeparable => "fast",
        };
        format!("{}/{p}", self.variant.name)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimingRow {
    pub variant: String,
    pub n: usize,
    pub median_s: f64,
    pub slope: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimingTable {
    pub rows: Vec<TimingRow>,
}

impl TimingTable {
    pub fn slope(&self, variant: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.variant == variant)
            .map(|r| r.slope)
    }

    pub fn median(&self, variant: &str, n: usize) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.variant == variant && r.n == n)
            .map(|r| r.median_s)
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Hyperparameters at which timing runs evaluate the EB cost.
pub fn timing_hyper(cfg: &FitConfig, var_y: f64) -> KernelHyper {
    let alpha = 10f64.ln() / cfg.memory as f64;
    let k1 = DcParams::unit(alpha, 0.5 * alpha);
    KernelHyper {
        a: vec![1.0; cfg.order],
        h0: 0.0,
        k1,
        k2: if cfg.variant.output_dc {
            Kappa2::Dc(k1)
        } else {
            Kappa2::Delta
        },
        zeta: cfg.variant.zeta,
        structure: cfg.variant.structure,
        sigma2: 0.1 * var_y,
        memory: cfg.memory,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingConfig {
    pub bank: BankKind,
    pub n_list: Vec<usize>,
    pub memory: usize,
    pub order: Option<usize>,
    pub repetitions: usize,
    pub seed: u64,
}

/// Median wall time of one EB-cost evaluation per `(variant, N)`, run serially on the
/// calling thread after one discarded warm-up evaluation.
pub fn benchmark_timing(tc: &TimingConfig, variants: &[TimedVariant]) -> Result<TimingTable> {
    if tc.n_list.is_empty() || tc.n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(VolterraError::InvalidArgument(
            "N list must be nonempty and ascending".into(),
        ));
    }
    if tc.repetitions == 0 || variants.is_empty() {
        return Err(VolterraError::InvalidArgument(
            "need at least one repetition and one variant".into(),
        ));
    }
    let order = tc.order.unwrap_or(tc.bank.model_order());
    let mut medians = vec![Vec::with_capacity(tc.n_list.len()); variants.len()];
    for &n in &tc.n_list {
        let mut spec = BankSpec::new(tc.bank, 1, tc.seed);
        spec.n_train = n;
        spec.n_test = Some(1);
        let ds = build_databank(&spec)?.remove(0);
        for (k, tv) in variants.iter().enumerate() {
            let cfg = FitConfig {
                path: tv.path,
                variant: tv.variant.clone(),
                order,
                memory: tc.memory,
                optimizer: OptimizerConfig::default(),
                init_policy: InitPolicy::TrimToKnown,
            };
            let memory = (tv.path == SolverPath::FastSeparable).then_some(tc.memory);
            let data = ds.training_data(memory)?;
            let problem = EbProblem::new(&data, &cfg)?;
            if problem.path() != tv.path {
                return Err(VolterraError::InvalidArgument(format!(
                    "{} fell back to the dense path at N = {n}",
                    tv.label()
                )));
            }
            let h = timing_hyper(&cfg, problem.output_variance());
            problem.evaluate(&h)?;
            let mut times = Vec::with_capacity(tc.repetitions);
            for _ in 0..tc.repetitions {
                let t0 = Instant::now();
                let e = problem.evaluate(&h)?;
                times.push(t0.elapsed().as_secs_f64());
                std::hint::black_box(e.cost);
            }
            times.sort_by(f64::total_cmp);
            medians[k].push(quantile(&times, 0.5));
        }
    }
    let xs: Vec<f64> = tc.n_list.iter().map(|&n| n as f64).collect();
    let mut rows = Vec::new();
    for (tv, m) in variants.iter().zip(&medians) {
        let slope = if xs.len() > 1 {
            loglog_slope(&xs, m)
        } else {
            f64::NAN
        };
        for (&n, &t) in tc.n_list.iter().zip(m) {
            rows.push(TimingRow {
                variant: tv.label(),
                n,
                median_s: t,
                slope,
            });
        }
    }
    Ok(TimingTable { rows })
}

pub fn write_timings(table: &TimingTable, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["variant", "N", "median_s", "slope"])?;
    for r in &table.rows {
        w.write_record([
            r.variant.clone(),
            r.n.to_string(),
            format!("{:.6e}", r.median_s),
            format!("{:.4}", r.slope),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// The diagonal-structure variant with κ2 forced to a delta, used as a misspecified control
/// on Wiener–Hammerstein data.
pub fn mismatched_control() -> KernelVariant {
    let mut v = KernelVariant::preset("dc-bd-w").expect("preset");
    v.name = "control-bd-delta".into();
    debug_assert_eq!(v.structure, BlockStructure::Diagonal);
    v
}
