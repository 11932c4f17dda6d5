//! Empirical-Bayes hyperparameter estimation, prediction, and post-fit map extraction.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, VolterraError};
use crate::kernels::{
    dc_gram, zeta_vector, BlockStructure, DcParams, Kappa2, KernelHyper, ZetaSpec, DENSE_LIMIT,
};
use crate::linalg::{least_squares, CovarianceFactor, DenseCholesky};
use crate::multi_index::{block_len, unflatten, VolterraMap};
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::output_kernel::{
    build_qw, conv2_kappa, output_kernel_between, regressor_rows, InitPolicy, RowSpan,
};
use crate::separable::{
    left_generators, power_columns, right_generators, separability_rank, DcOperator, GeneratorPair,
    InputFactors, SeparableInputDesc, WoodburyFactor,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverPath {
    #[default]
    Dense,
    FastSeparable,
}

/// A named kernel configuration: block structure, ζ, and whether κ2 is a DC kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelVariant {
    pub name: String,
    pub structure: BlockStructure,
    pub zeta: ZetaSpec,
    /// `true` for Wiener–Hammerstein kernels (DC κ2), `false` for the Wiener form.
    pub output_dc: bool,
}

impl KernelVariant {
    pub const PRESETS: [&'static str; 6] = [
        "dc-bd",
        "dc-decay",
        "dc-ob",
        "dc-bd-w",
        "dc-decay-w",
        "dc-ob-w",
    ];

    pub fn preset(name: &str) -> Result<Self> {
        let (base, wiener) = match name.strip_suffix("-w") {
            Some(b) => (b, true),
            None => (name, false),
        };
        let (structure, zeta) = match base {
            "dc-bd" => (BlockStructure::Diagonal, ZetaSpec::exp_decay()),
            "dc-decay" => (BlockStructure::Full, ZetaSpec::exp_decay()),
            "dc-ob" => (BlockStructure::Full, ZetaSpec::ortho_basis(100)),
            _ => {
                return Err(VolterraError::InvalidArgument(format!(
                    "unknown kernel variant '{name}' (expected one of {:?})",
                    Self::PRESETS
                )))
            }
        };
        Ok(Self {
            name: name.to_string(),
            structure,
            zeta,
            output_dc: !wiener,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub alpha: (f64, f64),
    pub beta: (f64, f64),
    /// σ² bounds relative to the output variance.
    pub sigma2_rel: (f64, f64),
    pub a_abs_max: f64,
}

impl Default for Bounds {
    fn default() -> Self {
        Self {
            alpha: (1e-4, 2.0),
            beta: (0.0, 2.0),
            sigma2_rel: (1e-8, 10.0),
            a_abs_max: 1e3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub restarts: usize,
    pub max_iters: usize,
    pub tol_cost: f64,
    pub seed: u64,
    pub bounds: Bounds,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            restarts: 5,
            max_iters: 2000,
            tol_cost: 1e-6,
            seed: 0,
            bounds: Bounds::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub path: SolverPath,
    pub variant: KernelVariant,
    pub order: usize,
    pub memory: usize,
    pub optimizer: OptimizerConfig,
    pub init_policy: InitPolicy,
}

impl FitConfig {
    pub fn new(variant: KernelVariant, order: usize, memory: usize) -> Self {
        Self {
            path: SolverPath::Dense,
            variant,
            order,
            memory,
            optimizer: OptimizerConfig::default(),
            init_policy: InitPolicy::TrimToKnown,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(VolterraError::InvalidArgument(m.to_string()));
        if self.order == 0 {
            return bad("order must be >= 1");
        }
        if self.memory == 0 {
            return bad("memory must be >= 1");
        }
        let o = &self.optimizer;
        if o.restarts == 0 {
            return bad("restarts must be >= 1");
        }
        let b = &o.bounds;
        let ok = |lo: f64, hi: f64| lo.is_finite() && hi.is_finite() && lo <= hi;
        if !(ok(b.alpha.0, b.alpha.1) && b.alpha.0 > 0.0)
            || !(ok(b.beta.0, b.beta.1) && b.beta.0 >= 0.0)
            || !(ok(b.sigma2_rel.0, b.sigma2_rel.1) && b.sigma2_rel.0 > 0.0)
            || !(b.a_abs_max.is_finite() && b.a_abs_max > 0.0)
        {
            return bad("optimizer bounds must be finite, ordered, and positive where required");
        }
        if self.path == SolverPath::FastSeparable && self.variant.output_dc {
            return bad("the separable path needs a Wiener (delta κ2) kernel variant");
        }
        if self.path == SolverPath::FastSeparable && self.init_policy == InitPolicy::PreWindowZero {
            return bad("the separable path needs the trim-to-known initial condition policy");
        }
        Ok(())
    }

    fn burn(&self) -> usize {
        if self.variant.output_dc {
            self.memory - 1
        } else {
            0
        }
    }

    /// First training output time.
    pub fn first_output(&self) -> usize {
        match self.init_policy {
            InitPolicy::PreWindowZero => 0,
            InitPolicy::TrimToKnown => self.memory - 1 + self.burn(),
        }
    }
}

/// Training record; `u[t]` and `y[t]` share the time index.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingData {
    pub u: Vec<f64>,
    pub y: Vec<f64>,
    #[serde(skip)]
    pub input: Option<SeparableInputDesc>,
}

impl TrainingData {
    pub fn new(u: Vec<f64>, y: Vec<f64>) -> Self {
        Self { u, y, input: None }
    }

    pub fn with_input(mut self, desc: SeparableInputDesc) -> Self {
        self.input = Some(desc);
        self
    }
}

#[derive(Debug, Clone)]
pub enum CovFactor {
    Dense(DenseCholesky),
    Woodbury(WoodburyFactor),
}

impl CovFactor {
    fn as_dyn(&self) -> &dyn CovarianceFactor {
        match self {
            CovFactor::Dense(f) => f,
            CovFactor::Woodbury(f) => f,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub cost: f64,
    pub h0: f64,
    /// `Y - h0`.
    pub centered: DVector<f64>,
    /// `S⁻¹ (Y - h0)`.
    pub weights: DVector<f64>,
    pub factor: CovFactor,
}

struct FastData {
    factors: InputFactors,
    u_powers: Vec<DMatrix<f64>>,
}

/// Everything about a training set that does not depend on the hyperparameters.
pub struct EbProblem {
    cfg: FitConfig,
    path: SolverPath,
    first: usize,
    y: DVector<f64>,
    var_y: f64,
    /// Regressor rows `first - burn .. first + count` (dense path only).
    psi_ext: Option<DMatrix<f64>>,
    fast: Option<FastData>,
}

fn population_variance(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
}

impl EbProblem {
    pub fn new(data: &TrainingData, cfg: &FitConfig) -> Result<Self> {
        cfg.validate()?;
        if data.u.len() != data.y.len() {
            return Err(VolterraError::DimensionMismatch(format!(
                "input has {} samples, output {}",
                data.u.len(),
                data.y.len()
            )));
        }
        let n = cfg.memory;
        let first = cfg.first_output();
        if data.u.len() <= first || (cfg.init_policy == InitPolicy::TrimToKnown && data.u.len() < n)
        {
            return Err(VolterraError::InsufficientData {
                len: data.u.len(),
                memory: n,
            });
        }
        let count = data.u.len() - first;
        let y = DVector::from_column_slice(&data.y[first..]);
        let var_y = population_variance(&data.y[first..]);
        if !(var_y > 0.0) {
            return Err(VolterraError::ZeroSignal);
        }

        let mut path = cfg.path;
        let mut fast = None;
        if path == SolverPath::FastSeparable {
            let desc = data.input.as_ref().ok_or_else(|| {
                VolterraError::InvalidArgument("separable path needs an input descriptor".into())
            })?;
            desc.verify_against(&data.u, first, count, n)?;
            let gamma = separability_rank(
                cfg.order,
                desc.rank(),
                cfg.variant.structure == BlockStructure::Full,
            );
            if gamma > count {
                path = SolverPath::Dense;
            } else {
                let factors = InputFactors::new(desc, first, count, n);
                let u_powers = power_columns(&factors.u, cfg.order, true);
                fast = Some(FastData { factors, u_powers });
            }
        }
        let psi_ext = if path == SolverPath::Dense {
            let burn = cfg.burn().min(first);
            Some(regressor_rows(&data.u, n, first - burn, count + burn))
        } else {
            None
        };
        Ok(Self {
            cfg: cfg.clone(),
            path,
            first,
            y,
            var_y,
            psi_ext,
            fast,
        })
    }

    pub fn path(&self) -> SolverPath {
        self.path
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn first_output(&self) -> usize {
        self.first
    }

    pub fn output_variance(&self) -> f64 {
        self.var_y
    }

    pub fn config(&self) -> &FitConfig {
        &self.cfg
    }

    fn factor(&self, h: &KernelHyper) -> Result<CovFactor> {
        h.validate()?;
        let n = self.cfg.memory;
        let zeta = zeta_vector(n, &h.zeta, &h.k1);
        match self.path {
            SolverPath::Dense => {
                let psi = self.psi_ext.as_ref().expect("dense data");
                let k1 = dc_gram(n, &h.k1);
                let qw = build_qw(psi, &k1, &zeta, &h.a, h.structure);
                let mut q = match h.k2 {
                    Kappa2::Delta => qw,
                    Kappa2::Dc(_) => {
                        let off = psi.nrows() - self.len();
                        let full = conv2_kappa(&h.k2, n, &qw);
                        drop(qw);
                        if off == 0 {
                            full
                        } else {
                            full.view((off, off), (self.len(), self.len())).into_owned()
                        }
                    }
                };
                for i in 0..q.nrows() {
                    q[(i, i)] += h.sigma2;
                }
                Ok(CovFactor::Dense(DenseCholesky::new(q)?))
            }
            SolverPath::FastSeparable => {
                let fast = self.fast.as_ref().expect("fast data");
                let core = fast.factors.core(&DcOperator { params: h.k1, n });
                let v = &fast.factors.u * core;
                let v_powers = power_columns(&v, h.order(), false);
                let psi = fast.factors.psi(&zeta);
                let gen = GeneratorPair {
                    u_bar: left_generators(&fast.u_powers, &psi, &h.a, h.structure),
                    v_bar: right_generators(&v_powers, &psi, &h.a, h.structure),
                };
                Ok(CovFactor::Woodbury(WoodburyFactor::new(gen, h.sigma2)?))
            }
        }
    }

    /// EB cost with `h0` profiled as the generalized-least-squares mean.
    pub fn evaluate(&self, h: &KernelHyper) -> Result<Evaluation> {
        self.evaluate_inner(h, true)
    }

    /// EB cost at the supplied `h.h0`.
    pub fn evaluate_fixed_mean(&self, h: &KernelHyper) -> Result<Evaluation> {
        self.evaluate_inner(h, false)
    }

    fn evaluate_inner(&self, h: &KernelHyper, profile: bool) -> Result<Evaluation> {
        self.check_hyper(h)?;
        let factor = self.factor(h)?;
        let f = factor.as_dyn();
        let h0 = if profile {
            let ones = DVector::from_element(self.len(), 1.0);
            let s1 = f.solve(&ones);
            let sy = f.solve(&self.y);
            sy.sum() / s1.sum()
        } else {
            h.h0
        };
        let centered = self.y.add_scalar(-h0);
        let weights = f.solve(&centered);
        let cost = centered.dot(&weights) + f.log_det();
        if !cost.is_finite() || !h0.is_finite() {
            return Err(VolterraError::NonFinite("EB cost"));
        }
        Ok(Evaluation {
            cost,
            h0,
            centered,
            weights,
            factor,
        })
    }

    fn check_hyper(&self, h: &KernelHyper) -> Result<()> {
        if h.memory != self.cfg.memory || h.order() != self.cfg.order {
            return Err(VolterraError::DimensionMismatch(format!(
                "hyperparameters have n={}, M={}, problem has n={}, M={}",
                h.memory,
                h.order(),
                self.cfg.memory,
                self.cfg.order
            )));
        }
        if h.k2.is_delta() == self.cfg.variant.output_dc {
            return Err(VolterraError::InvalidArgument(
                "κ2 kind does not match the kernel variant".into(),
            ));
        }
        Ok(())
    }
}

/// EB cost `(Y-h0)ᵀ S⁻¹ (Y-h0) + log det S` at the given hyperparameters.
pub fn eb_objective(h: &KernelHyper, data: &TrainingData, cfg: &FitConfig) -> Result<f64> {
    Ok(EbProblem::new(data, cfg)?.evaluate_fixed_mean(h)?.cost)
}

/// Log-scale parameter vector used by the optimizer.
#[derive(Debug, Clone)]
struct Layout {
    output_dc: bool,
    order: usize,
    /// Magnitudes of the initial `a_m`, used as step floors.
    a_scale: Vec<f64>,
}

const BETA_SHIFT: f64 = 1e-6;

impl Layout {
    fn sigma_index(&self) -> usize {
        2 + if self.output_dc { 2 } else { 0 }
    }

    fn bounds(&self, b: &Bounds, var_y: f64) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![b.alpha.0.ln(), (b.beta.0 + BETA_SHIFT).ln()];
        let mut hi = vec![b.alpha.1.ln(), (b.beta.1 + BETA_SHIFT).ln()];
        if self.output_dc {
            lo.extend_from_slice(&[b.alpha.0.ln(), (b.beta.0 + BETA_SHIFT).ln()]);
            hi.extend_from_slice(&[b.alpha.1.ln(), (b.beta.1 + BETA_SHIFT).ln()]);
        }
        lo.push((b.sigma2_rel.0 * var_y).ln());
        hi.push((b.sigma2_rel.1 * var_y).ln());
        for _ in 0..self.order {
            lo.push(-b.a_abs_max);
            hi.push(b.a_abs_max);
        }
        (lo, hi)
    }

    fn decode(&self, x: &[f64], cfg: &FitConfig) -> KernelHyper {
        let dc = |la: f64, lb: f64| DcParams::unit(la.exp(), (lb.exp() - BETA_SHIFT).max(0.0));
        let k1 = dc(x[0], x[1]);
        let k2 = if self.output_dc {
            Kappa2::Dc(dc(x[2], x[3]))
        } else {
            Kappa2::Delta
        };
        let s = self.sigma_index();
        KernelHyper {
            a: x[s + 1..].to_vec(),
            h0: 0.0,
            k1,
            k2,
            zeta: cfg.variant.zeta,
            structure: cfg.variant.structure,
            sigma2: x[s].exp(),
            memory: cfg.memory,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RestartSummary {
    pub cost: f64,
    pub iters: usize,
    pub evals: usize,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct FittedModel {
    pub hyper: KernelHyper,
    pub cost: f64,
    pub config: FitConfig,
    pub path_used: SolverPath,
    pub first_time: usize,
    pub train: TrainingData,
    pub restarts: Vec<RestartSummary>,
    pub eval: Evaluation,
}

/// Mean diagonal of each single-degree output-kernel block, for coefficient scaling.
fn block_scales(data: &TrainingData, cfg: &FitConfig, k1: &DcParams, k2: &Kappa2) -> Vec<f64> {
    let n = cfg.memory;
    let first = cfg.first_output();
    let burn = cfg.burn().min(first);
    let count = data.u.len() - first;
    let psi = regressor_rows(&data.u, n, first - burn, count + burn);
    let b = &psi * dc_gram(n, k1);
    let k2g = k2.gram(n);
    let mut sums = vec![0.0; cfg.order];
    for i in 0..count {
        let t = i + burn;
        for x1 in 0..n.min(t + 1) {
            for x2 in 0..n.min(t + 1) {
                let w = k2g[(x1, x2)];
                if w == 0.0 {
                    continue;
                }
                let x = b.row(t - x1).dot(&psi.row(t - x2));
                let mut p = x;
                for s in sums.iter_mut() {
                    *s += w * p;
                    p *= x;
                }
            }
        }
    }
    sums.iter().map(|s| s / count as f64).collect()
}

fn initial_point(
    layout: &Layout,
    data: &TrainingData,
    cfg: &FitConfig,
    var_y: f64,
    lo: &[f64],
    hi: &[f64],
) -> Vec<f64> {
    let n = cfg.memory as f64;
    let alpha = (10f64.ln() / n).clamp(cfg.optimizer.bounds.alpha.0, cfg.optimizer.bounds.alpha.1);
    let beta = 0.5 * alpha;
    let k1 = DcParams::unit(alpha, beta);
    let k2 = if layout.output_dc {
        Kappa2::Dc(k1)
    } else {
        Kappa2::Delta
    };
    let scales = block_scales(data, cfg, &k1, &k2);
    let mut x = vec![alpha.ln(), (beta + BETA_SHIFT).ln()];
    if layout.output_dc {
        x.extend_from_slice(&[alpha.ln(), (beta + BETA_SHIFT).ln()]);
    }
    x.push((0.1 * var_y).ln());
    let share = 0.9 * var_y / cfg.order as f64;
    for s in scales {
        let a = if s > 0.0 && s.is_finite() {
            (share / s).sqrt()
        } else {
            1.0
        };
        x.push(a);
    }
    for ((v, l), h) in x.iter_mut().zip(lo).zip(hi) {
        *v = v.clamp(*l, *h);
    }
    x
}

fn perturb(x0: &[f64], layout: &Layout, rng: &mut ChaCha8Rng, lo: &[f64], hi: &[f64]) -> Vec<f64> {
    let s = layout.sigma_index();
    let mut x = x0.to_vec();
    for (i, v) in x.iter_mut().enumerate() {
        let z: f64 = StandardNormal.sample(rng);
        if i <= s {
            *v += z;
        } else {
            let sign = if rand::Rng::gen_bool(rng, 0.5) {
                1.0
            } else {
                -1.0
            };
            *v = sign * v.abs() * z.exp();
        }
    }
    for ((v, l), h) in x.iter_mut().zip(lo).zip(hi) {
        *v = v.clamp(*l, *h);
    }
    x
}

fn simplex_steps(x: &[f64], layout: &Layout) -> Vec<f64> {
    let s = layout.sigma_index();
    x.iter()
        .enumerate()
        .map(|(i, v)| {
            if i <= s {
                0.5
            } else {
                (0.5 * v.abs()).max(0.1 * layout.a_scale[i - s - 1])
            }
        })
        .collect()
}

/// Random stream for restart `k`; earlier restarts do not depend on the restart count.
pub fn restart_rng(seed: u64, k: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k as u64);
    rng
}

/// Multi-start Nelder–Mead minimization of the EB cost.
pub fn fit(data: &TrainingData, cfg: &FitConfig) -> Result<FittedModel> {
    let problem = EbProblem::new(data, cfg)?;
    let mut layout = Layout {
        output_dc: cfg.variant.output_dc,
        order: cfg.order,
        a_scale: vec![1.0; cfg.order],
    };
    let var_y = problem.output_variance();
    let (lo, hi) = layout.bounds(&cfg.optimizer.bounds, var_y);
    let x0 = initial_point(&layout, data, cfg, var_y, &lo, &hi);
    let s = layout.sigma_index();
    layout.a_scale = x0[s + 1..]
        .iter()
        .map(|v| if *v != 0.0 { v.abs() } else { 1.0 })
        .collect();
    let objective = |x: &[f64]| {
        problem
            .evaluate(&layout.decode(x, cfg))
            .map(|e| e.cost)
            .unwrap_or(f64::INFINITY)
    };
    let opts = NelderMeadOptions {
        max_iters: cfg.optimizer.max_iters,
        tol_cost: cfg.optimizer.tol_cost,
    };

    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut summaries = Vec::with_capacity(cfg.optimizer.restarts);
    for k in 0..cfg.optimizer.restarts {
        let start = if k == 0 {
            x0.clone()
        } else {
            perturb(
                &x0,
                &layout,
                &mut restart_rng(cfg.optimizer.seed, k),
                &lo,
                &hi,
            )
        };
        if !objective(&start).is_finite() {
            summaries.push(RestartSummary {
                cost: f64::INFINITY,
                iters: 0,
                evals: 1,
                converged: false,
            });
            continue;
        }
        let r = nelder_mead(
            objective,
            &start,
            &simplex_steps(&start, &layout),
            &lo,
            &hi,
            opts,
        );
        summaries.push(RestartSummary {
            cost: r.f,
            iters: r.iters,
            evals: r.evals,
            converged: r.converged,
        });
        if best.as_ref().is_none_or(|(_, f)| r.f < *f) {
            best = Some((r.x, r.f));
        }
    }
    let (mut x, mut f) = best.ok_or(VolterraError::AllRestartsFailed {
        restarts: cfg.optimizer.restarts,
    })?;
    // One more simplex from the best point guards against premature collapse.
    let polish = nelder_mead(objective, &x, &simplex_steps(&x, &layout), &lo, &hi, opts);
    if polish.f < f {
        x = polish.x;
        f = polish.f;
    }
    let mut hyper = layout.decode(&x, cfg);
    let eval = problem.evaluate(&hyper)?;
    debug_assert!((eval.cost - f).abs() <= 1e-9 * f.abs().max(1.0));
    hyper.h0 = eval.h0;
    Ok(FittedModel {
        cost: eval.cost,
        hyper,
        config: cfg.clone(),
        path_used: problem.path(),
        first_time: problem.first_output(),
        train: data.clone(),
        restarts: summaries,
        eval,
    })
}

impl FittedModel {
    /// Rebuilds the cached factorization for known hyperparameters (`h.h0` is re-profiled).
    pub fn from_hyper(data: &TrainingData, cfg: &FitConfig, hyper: KernelHyper) -> Result<Self> {
        let problem = EbProblem::new(data, cfg)?;
        let eval = problem.evaluate(&hyper)?;
        let mut hyper = hyper;
        hyper.h0 = eval.h0;
        Ok(Self {
            cost: eval.cost,
            hyper,
            config: cfg.clone(),
            path_used: problem.path(),
            first_time: problem.first_output(),
            train: data.clone(),
            restarts: Vec::new(),
            eval,
        })
    }

    pub fn train_len(&self) -> usize {
        self.eval.weights.len()
    }
}

const PREDICT_CHUNK: usize = 1024;

/// Predicted outputs at times `start..start + count` of the series `u` (zero before index 0).
pub fn predict(model: &FittedModel, u: &[f64], start: usize, count: usize) -> Result<Vec<f64>> {
    let h = &model.hyper;
    let n = h.memory;
    if start + count > u.len() {
        return Err(VolterraError::DimensionMismatch(format!(
            "prediction window ends at {} but input has {} samples",
            start + count,
            u.len()
        )));
    }
    match (&model.eval.factor, model.path_used) {
        (CovFactor::Woodbury(f), SolverPath::FastSeparable) => {
            let desc = model.train.input.as_ref().ok_or_else(|| {
                VolterraError::InvalidArgument("fast-path model lost its input descriptor".into())
            })?;
            desc.verify_against(u, start, count, n)?;
            let z = f.core_weights(&model.eval.centered);
            let zeta = zeta_vector(n, &h.zeta, &h.k1);
            let mut out = Vec::with_capacity(count);
            let mut c0 = 0;
            while c0 < count {
                let len = PREDICT_CHUNK.min(count - c0);
                let factors = InputFactors::new(desc, start + c0, len, n);
                let powers = power_columns(&factors.u, h.order(), true);
                let psi = factors.psi(&zeta);
                let u_bar = left_generators(&powers, &psi, &h.a, h.structure);
                out.extend((u_bar * &z).add_scalar(h.h0).iter());
                c0 += len;
            }
            Ok(out)
        }
        _ => {
            let train = RowSpan::new(&model.train.u, model.first_time, model.train_len());
            let mut out = Vec::with_capacity(count);
            let mut c0 = 0;
            while c0 < count {
                let len = PREDICT_CHUNK.min(count - c0);
                let cross = output_kernel_between(h, RowSpan::new(u, start + c0, len), train);
                out.extend((cross * &model.eval.weights).add_scalar(h.h0).iter());
                c0 += len;
            }
            Ok(out)
        }
    }
}

/// Posterior-mean Volterra map of degree `m`, over `n` lags (Wiener) or `2n - 1` lags
/// (Wiener–Hammerstein).
pub fn extract_map(model: &FittedModel, m: usize) -> Result<VolterraMap> {
    let h = &model.hyper;
    let order = h.order();
    if m == 0 || m > order {
        return Err(VolterraError::InvalidArgument(format!(
            "map degree must be in 1..={order}"
        )));
    }
    let n = h.memory;
    let lags = if h.k2.is_delta() { n } else { 2 * n - 1 };
    let size = block_len(lags, m).unwrap_or(usize::MAX);
    if size > DENSE_LIMIT {
        return Err(VolterraError::SizeExceeded {
            required: size,
            limit: DENSE_LIMIT,
        });
    }
    let count = model.train_len();
    let burn = if h.k2.is_delta() {
        0
    } else {
        (n - 1).min(model.first_time)
    };
    let psi = regressor_rows(&model.train.u, n, model.first_time - burn, count + burn);
    let g = dc_gram(n, &h.k1) * psi.transpose();
    let zeta = zeta_vector(n, &h.zeta, &h.k1);
    let psi_z = &psi * &zeta;
    let w = &model.eval.weights;

    match h.k2 {
        Kappa2::Delta => Ok(wiener_functional(h, m, &g, &zeta, &psi_z, w.as_slice())),
        Kappa2::Dc(_) => {
            let k2 = h.k2.gram(n);
            let rows = count + burn;
            let mut out = VolterraMap::zeros(m, lags);
            let mut idx = vec![0usize; m];
            for x1 in 0..n {
                let beta: Vec<f64> = (0..rows)
                    .map(|e| {
                        (0..n)
                            .filter_map(|x2| {
                                let i = (e + x2).checked_sub(burn)?;
                                (i < count).then(|| k2[(x1, x2)] * w[i])
                            })
                            .sum()
                    })
                    .collect();
                let part = wiener_functional(h, m, &g, &zeta, &psi_z, &beta);
                for flat in 0..part.values.len() {
                    unflatten(flat, n, &mut idx);
                    let shifted: Vec<usize> = idx.iter().map(|t| t + x1).collect();
                    let k = crate::multi_index::flatten(&shifted, lags);
                    out.values[k] += part.values[flat];
                }
            }
            Ok(out)
        }
    }
}

/// `Σ_j β_j Σ_q K^w_{mq}(τ, ·) φ_q(j)` over lags `0..n`.
fn wiener_functional(
    h: &KernelHyper,
    m: usize,
    g: &DMatrix<f64>,
    zeta: &DVector<f64>,
    psi_z: &DVector<f64>,
    beta: &[f64],
) -> VolterraMap {
    let n = g.nrows();
    let a = &h.a;
    let full = h.structure == BlockStructure::Full;
    // Per-row weight multiplying Π_i G(τ_i, j).
    let lead: Vec<f64> = if full {
        let mut eta = vec![a[a.len() - 1]; beta.len()];
        for q in (m..a.len()).rev() {
            for (e, p) in eta.iter_mut().zip(psi_z.iter()) {
                *e = a[q - 1] + p * *e;
            }
        }
        eta.iter()
            .zip(beta)
            .map(|(e, b)| a[m - 1] * e * b)
            .collect()
    } else {
        beta.iter().map(|b| a[m - 1] * a[m - 1] * b).collect()
    };
    let mut out = VolterraMap::zeros(m, n);
    let mut idx = vec![0usize; m];
    for flat in 0..out.values.len() {
        unflatten(flat, n, &mut idx);
        let mut acc = 0.0;
        for j in 0..beta.len() {
            let mut prod = 1.0;
            for &t in &idx {
                prod *= g[(t, j)];
            }
            acc += lead[j] * prod;
            if full && m > 1 {
                // Lower-degree partners q < m put ζ on the trailing indices.
                let mut head = beta[j];
                for q in 1..m {
                    head *= g[(idx[q - 1], j)];
                    let tail: f64 = idx[q..].iter().map(|&t| zeta[t]).product();
                    acc += a[m - 1] * a[q - 1] * head * tail;
                }
            }
        }
        out.values[flat] = acc;
    }
    out
}

/// Real polynomial `Σ_k coeffs[k] x^k`. With a `domain`, arguments are clamped into
/// it before evaluation, so the curve is held constant past the fitted support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    pub coeffs: Vec<f64>,
    #[serde(default)]
    pub domain: Option<(f64, f64)>,
}

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self {
            coeffs,
            domain: None,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let x = match self.domain {
            Some((lo, hi)) => x.clamp(lo, hi),
            None => x,
        };
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }
}

/// Known first nonzero impulse-response value, optionally with its index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub value: f64,
    pub index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WienerDecomposition {
    pub g_hat: Vec<f64>,
    pub nonlinearity: Polynomial,
    pub anchor_index: usize,
}

pub const ANCHOR_THRESHOLD: f64 = 1e-3;

/// Splits a Wiener-form model into a linear impulse response and a static polynomial.
pub fn decompose_wiener(model: &FittedModel, anchor: Anchor) -> Result<WienerDecomposition> {
    if !model.hyper.k2.is_delta() {
        return Err(VolterraError::InvalidArgument(
            "Wiener decomposition needs a delta κ2".into(),
        ));
    }
    let h1 = extract_map(model, 1)?.values;
    let peak = h1.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(peak > 0.0 && peak.is_finite()) {
        return Err(VolterraError::DegenerateFirstOrder);
    }
    let t0 = match anchor.index {
        Some(i) if i < h1.len() => i,
        Some(i) => {
            return Err(VolterraError::InvalidArgument(format!(
                "anchor index {i} outside the memory"
            )))
        }
        None => h1
            .iter()
            .position(|v| v.abs() > ANCHOR_THRESHOLD * peak)
            .ok_or(VolterraError::DegenerateFirstOrder)?,
    };
    if h1[t0].abs() <= f64::EPSILON * peak {
        return Err(VolterraError::DegenerateFirstOrder);
    }
    let scale = anchor.value / h1[t0];
    let g_hat: Vec<f64> = h1.iter().map(|v| v * scale).collect();

    let first = model.first_time;
    let count = model.train_len();
    let n = g_hat.len();
    let psi = regressor_rows(&model.train.u, n, first, count);
    let x = psi * DVector::from_column_slice(&g_hat);
    let lo = x.min();
    let hi = x.max();
    let span = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
    let order = model.hyper.order();
    let vander = DMatrix::from_fn(count, order + 1, |i, k| (x[i] / span).powi(k as i32));
    let y = DVector::from_column_slice(&model.train.y[first..first + count]);
    let c = least_squares(&vander, &y)?;
    let coeffs = c
        .iter()
        .enumerate()
        .map(|(k, v)| v / span.powi(k as i32))
        .collect();
    Ok(WienerDecomposition {
        g_hat,
        nonlinearity: Polynomial {
            coeffs,
            domain: Some((lo, hi)),
        },
        anchor_index: t0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::dense_kernel_matrix_with_lags;
    use crate::output_kernel::dense_phi;
    use approx::assert_relative_eq;

    fn series(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    fn hyper(cfg: &FitConfig, a: Vec<f64>) -> KernelHyper {
        KernelHyper {
            a,
            h0: 0.3,
            k1: DcParams::unit(0.4, 0.2),
            k2: if cfg.variant.output_dc {
                Kappa2::Dc(DcParams::unit(0.6, 0.1))
            } else {
                Kappa2::Delta
            },
            zeta: cfg.variant.zeta,
            structure: cfg.variant.structure,
            sigma2: 0.2,
            memory: cfg.memory,
        }
    }

    #[test]
    fn presets_parse() {
        for name in KernelVariant::PRESETS {
            let v = KernelVariant::preset(name).unwrap();
            assert_eq!(v.output_dc, !name.ends_with("-w"));
        }
        assert!(KernelVariant::preset("dc-xx").is_err());
    }

    #[test]
    fn pure_noise_cost() {
        let y = series(50, 1);
        let data = TrainingData::new(series(50, 2), y.clone());
        let mut cfg = FitConfig::new(KernelVariant::preset("dc-bd-w").unwrap(), 2, 3);
        cfg.init_policy = InitPolicy::PreWindowZero;
        let var = population_variance(&y);
        let mean = y.iter().sum::<f64>() / 50.0;
        let mut h = hyper(&cfg, vec![0.0, 0.0]);
        h.h0 = mean;
        h.sigma2 = var;
        let cost = eb_objective(&h, &data, &cfg).unwrap();
        assert_relative_eq!(cost, 50.0 + 50.0 * var.ln(), max_relative = 1e-12);
    }

    #[test]
    fn profiled_mean_minimizes_cost() {
        let data = TrainingData::new(
            series(40, 3),
            series(40, 4).iter().map(|v| v + 1.0).collect(),
        );
        let cfg = FitConfig::new(KernelVariant::preset("dc-ob").unwrap(), 2, 3);
        let p = EbProblem::new(&data, &cfg).unwrap();
        let mut h = hyper(&cfg, vec![0.7, -0.4]);
        let best = p.evaluate(&h).unwrap();
        for d in [-1e-2, 1e-2, -0.3, 0.3] {
            h.h0 = best.h0 + d;
            assert!(p.evaluate_fixed_mean(&h).unwrap().cost > best.cost);
        }
    }

    #[test]
    fn large_noise_cost_grows() {
        let data = TrainingData::new(series(40, 5), series(40, 6));
        let cfg = FitConfig::new(KernelVariant::preset("dc-decay-w").unwrap(), 2, 4);
        let p = EbProblem::new(&data, &cfg).unwrap();
        let mut h = hyper(&cfg, vec![0.5, 0.5]);
        h.sigma2 = 50.0;
        let c1 = p.evaluate(&h).unwrap().cost;
        h.sigma2 = 100.0;
        assert!(p.evaluate(&h).unwrap().cost > c1);
    }

    #[test]
    fn dense_weights_match_phi_oracle_for_maps() {
        let u = series(30, 7);
        let y = series(30, 8);
        let data = TrainingData::new(u.clone(), y.clone());
        for name in ["dc-ob-w", "dc-bd-w", "dc-decay"] {
            let cfg = FitConfig::new(KernelVariant::preset(name).unwrap(), 2, 3);
            let h = hyper(&cfg, vec![0.8, -0.5]);
            let model = FittedModel::from_hyper(&data, &cfg, h.clone()).unwrap();
            let lags = if cfg.variant.output_dc { 5 } else { 3 };
            let first = model.first_time;
            let psi = regressor_rows(&u, lags, first, u.len() - first);
            let phi = dense_phi(&psi, 2).unwrap();
            let p = dense_kernel_matrix_with_lags(&h, lags).unwrap();
            let theta = &p * phi.transpose() * &model.eval.weights;
            let h1 = extract_map(&model, 1).unwrap();
            let h2 = extract_map(&model, 2).unwrap();
            let dense: Vec<f64> = theta.iter().copied().collect();
            let mine: Vec<f64> = h1.values.iter().chain(&h2.values).copied().collect();
            for (a, b) in mine.iter().zip(&dense) {
                assert_relative_eq!(a, b, max_relative = 1e-8, epsilon = 1e-11);
            }
            // Dense θ reproduces in-sample predictions.
            let yhat = predict(&model, &u, first, u.len() - first).unwrap();
            let via_theta = &phi * &theta;
            for (a, b) in yhat.iter().zip(via_theta.iter()) {
                assert_relative_eq!(*a, b + model.hyper.h0, max_relative = 1e-8, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn zero_coefficients_predict_mean() {
        let data = TrainingData::new(series(30, 9), series(30, 10));
        let cfg = FitConfig::new(KernelVariant::preset("dc-ob-w").unwrap(), 2, 3);
        let h = hyper(&cfg, vec![0.0, 0.0]);
        let model = FittedModel::from_hyper(&data, &cfg, h).unwrap();
        let yhat = predict(&model, &data.u, 5, 10).unwrap();
        assert!(yhat.iter().all(|v| (v - model.hyper.h0).abs() < 1e-14));
        assert!(extract_map(&model, 1).unwrap().max_abs() == 0.0);
    }

    #[test]
    fn fast_path_matches_dense() {
        use crate::separable::{separate_input, InputFamily};
        let len = 120;
        let fam = InputFamily::DampedSinusoid {
            amplitude: 1.0,
            decay: 0.01,
            omega: 0.7,
            phase: 0.2,
        };
        let u: Vec<f64> = (0..len).map(|t| fam.value(t as f64).unwrap()).collect();
        let y: Vec<f64> = u
            .iter()
            .zip(series(len, 11))
            .map(|(a, e)| a * a + 0.5 * a + 0.1 * e)
            .collect();
        let desc = separate_input(fam, len + 40, 6).unwrap();
        let data = TrainingData::new(u.clone(), y).with_input(desc);
        let ext: Vec<f64> = (0..len + 40)
            .map(|t| {
                u.get(t)
                    .copied()
                    .unwrap_or_else(|| (0.7 * t as f64 + 0.2).cos() * (-0.01 * t as f64).exp())
            })
            .collect();
        for name in ["dc-ob-w", "dc-bd-w", "dc-decay-w"] {
            let dense_cfg = FitConfig::new(KernelVariant::preset(name).unwrap(), 3, 6);
            let mut fast_cfg = dense_cfg.clone();
            fast_cfg.path = SolverPath::FastSeparable;
            let h = hyper(&dense_cfg, vec![0.9, 0.6, -0.3]);
            let d = FittedModel::from_hyper(&data, &dense_cfg, h.clone()).unwrap();
            let f = FittedModel::from_hyper(&data, &fast_cfg, h).unwrap();
            assert_eq!(f.path_used, SolverPath::FastSeparable);
            assert_relative_eq!(d.cost, f.cost, max_relative = 1e-8);
            assert_relative_eq!(d.hyper.h0, f.hyper.h0, max_relative = 1e-8, epsilon = 1e-10);
            let pd = predict(&d, &ext, len, 40).unwrap();
            let pf = predict(&f, &ext, len, 40).unwrap();
            for (a, b) in pd.iter().zip(&pf) {
                assert_relative_eq!(a, b, max_relative = 1e-6, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn fit_recovers_wiener_structure() {
        let u = series(260, 12);
        let g = [1.0, 0.6, 0.3, 0.1];
        let x: Vec<f64> = (0..u.len())
            .map(|t| (0..4).filter(|&b| b <= t).map(|b| g[b] * u[t - b]).sum())
            .collect();
        let e = series(260, 13);
        let y: Vec<f64> = x
            .iter()
            .zip(&e)
            .map(|(x, e)| 0.5 + x + 0.3 * x * x + 0.02 * e)
            .collect();
        let data = TrainingData::new(u.clone(), y);
        let mut cfg = FitConfig::new(KernelVariant::preset("dc-ob-w").unwrap(), 2, 6);
        cfg.optimizer.restarts = 2;
        let model = fit(&data, &cfg).unwrap();
        let yhat = predict(&model, &u, 5, 255).unwrap();
        let err: f64 = yhat
            .iter()
            .zip(&data.y[5..])
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>();
        let var: f64 = population_variance(&data.y[5..]) * 255.0;
        assert!(err / var < 0.01, "relative residual {}", err / var);
        let dec = decompose_wiener(
            &model,
            Anchor {
                value: 1.0,
                index: None,
            },
        )
        .unwrap();
        assert_eq!(dec.anchor_index, 0);
        for (a, b) in dec.g_hat.iter().zip(g) {
            assert!((a - b).abs() < 0.05, "{:?}", dec.g_hat);
        }
        let c = &dec.nonlinearity.coeffs;
        assert!(
            (c[0] - 0.5).abs() < 0.05 && (c[1] - 1.0).abs() < 0.05 && (c[2] - 0.3).abs() < 0.05,
            "{c:?}"
        );
    }

    #[test]
    fn polynomial_eval() {
        let mut p = Polynomial::new(vec![1.0, -2.0, 0.5]);
        assert_relative_eq!(p.eval(2.0), 1.0 - 4.0 + 2.0);
        p.domain = Some((-1.0, 1.0));
        assert_relative_eq!(p.eval(2.0), p.eval(1.0));
        assert_relative_eq!(p.eval(-3.0), 1.0 + 2.0 + 0.5);
    }

    #[test]
    fn bad_configs_are_rejected() {
        let mut cfg = FitConfig::new(KernelVariant::preset("dc-ob").unwrap(), 2, 3);
        cfg.path = SolverPath::FastSeparable;
        assert!(cfg.validate().is_err());
        cfg.variant = KernelVariant::preset("dc-ob-w").unwrap();
        assert!(cfg.validate().is_ok());
        cfg.init_policy = InitPolicy::PreWindowZero;
        assert!(cfg.validate().is_err());
        let mut cfg = FitConfig::new(KernelVariant::preset("dc-ob-w").unwrap(), 2, 3);
        cfg.optimizer.restarts = 0;
        assert!(cfg.validate().is_err());
    }
}
