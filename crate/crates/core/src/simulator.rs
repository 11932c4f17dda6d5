//! Ground-truth block-oriented systems, input signals, noisy datasets and their serialization.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VolterraError};
use crate::estimator::TrainingData;
use crate::kernels::DENSE_LIMIT;
use crate::multi_index::{block_len, unflatten, VolterraMap};
use crate::separable::{separate_input, InputFamily, SeparableInputDesc};

pub const IR_TOL: f64 = 1e-10;
pub const IR_CAP: usize = 4096;

/// Discrete-time rational transfer function in powers of `q⁻¹`, with a cached impulse response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LtiSystem {
    pub num: Vec<f64>,
    pub den: Vec<f64>,
    pub poles: Vec<Complex64>,
    pub zeros: Vec<Complex64>,
    pub gain: f64,
    pub ir: Vec<f64>,
}

fn poly_from_roots(roots: &[Complex64]) -> Vec<f64> {
    // Π (1 - r q⁻¹), coefficients in increasing powers of q⁻¹.
    let mut c = vec![Complex64::new(1.0, 0.0)];
    for r in roots {
        let mut next = c.clone();
        next.push(Complex64::new(0.0, 0.0));
        for k in 0..c.len() {
            next[k + 1] -= r * c[k];
        }
        c = next;
    }
    c.iter().map(|v| v.re).collect()
}

fn roots_of(coeffs: &[f64]) -> Vec<Complex64> {
    // Roots in z of Σ c_k z^{d-k}, via the companion matrix.
    let mut c = coeffs.to_vec();
    while c.len() > 1 && c[c.len() - 1] == 0.0 {
        c.pop();
    }
    let lead = match c.iter().position(|v| *v != 0.0) {
        Some(i) => i,
        None => return Vec::new(),
    };
    let c = &c[lead..];
    let d = c.len() - 1;
    if d == 0 {
        return Vec::new();
    }
    let comp = DMatrix::from_fn(d, d, |i, j| {
        if i == 0 {
            -c[j + 1] / c[0]
        } else if j + 1 == i {
            1.0
        } else {
            0.0
        }
    });
    comp.complex_eigenvalues().iter().copied().collect()
}

fn impulse_response(num: &[f64], den: &[f64]) -> Vec<f64> {
    let mut g = Vec::with_capacity(IR_CAP);
    for t in 0..IR_CAP {
        let mut v = num.get(t).copied().unwrap_or(0.0);
        for k in 1..den.len().min(t + 1) {
            v -= den[k] * g[t - k];
        }
        g.push(v / den[0]);
    }
    let keep = g
        .iter()
        .rposition(|v| v.abs() >= IR_TOL)
        .map_or(1, |i| i + 1);
    g.truncate(keep);
    g
}

impl LtiSystem {
    /// `G(q) = Σ num_k q⁻ᵏ / Σ den_k q⁻ᵏ`; `den[0]` must be nonzero.
    pub fn from_tf(num: Vec<f64>, den: Vec<f64>) -> Result<Self> {
        if num.is_empty() || den.is_empty() || den[0] == 0.0 {
            return Err(VolterraError::InvalidArgument(
                "transfer function needs a numerator and a denominator with den[0] != 0".into(),
            ));
        }
        if num.iter().chain(&den).any(|v| !v.is_finite()) {
            return Err(VolterraError::NonFinite("transfer function coefficients"));
        }
        let poles = roots_of(&den);
        if poles.iter().any(|p| p.norm() >= 1.0) {
            return Err(VolterraError::InvalidArgument(
                "unstable transfer function".into(),
            ));
        }
        let zeros = roots_of(&num);
        let gain = num.iter().find(|v| **v != 0.0).copied().unwrap_or(0.0) / den[0];
        let ir = impulse_response(&num, &den);
        Ok(Self {
            num,
            den,
            poles,
            zeros,
            gain,
            ir,
        })
    }

    pub fn fir(g: Vec<f64>) -> Result<Self> {
        Self::from_tf(g, vec![1.0])
    }

    pub fn identity() -> Self {
        Self::fir(vec![1.0]).expect("identity is valid")
    }

    pub fn scaled(&self, k: f64) -> Self {
        let mut s = self.clone();
        s.num.iter_mut().for_each(|v| *v *= k);
        s.ir.iter_mut().for_each(|v| *v *= k);
        s.gain *= k;
        s
    }

    /// Truncated impulse-response convolution with zero initial conditions.
    pub fn filter(&self, u: &[f64]) -> Vec<f64> {
        convolve(&self.ir, u)
    }
}

fn convolve(g: &[f64], u: &[f64]) -> Vec<f64> {
    (0..u.len())
        .map(|t| {
            g.iter()
                .take(t + 1)
                .enumerate()
                .map(|(k, gk)| gk * u[t - k])
                .sum()
        })
        .collect()
}

/// Five real poles in `[0.7, 0.8]` and the rest in `[0.1, 0.5]`, for example.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverdampedSpec {
    pub count: usize,
    pub dominant: (f64, f64),
    pub rest: (f64, f64),
}

fn conjugate_roots(count: usize, modulus: (f64, f64), rng: &mut impl Rng) -> Vec<Complex64> {
    let mut roots = Vec::with_capacity(count);
    let draw = |rng: &mut dyn rand::RngCore| {
        if modulus.0 == modulus.1 {
            modulus.0
        } else {
            rng.gen_range(modulus.0..=modulus.1)
        }
    };
    for _ in 0..count / 2 {
        let r = draw(rng);
        let th = rng.gen_range(0.0..PI);
        let p = Complex64::from_polar(r, th);
        roots.push(p);
        roots.push(p.conj());
    }
    if count % 2 == 1 {
        roots.push(Complex64::new(draw(rng), 0.0));
    }
    roots
}

/// Random stable system of the given order, normalized so that `‖g‖₂ = 1` up to a random sign.
pub fn random_stable_lti(
    order: usize,
    modulus_range: (f64, f64),
    overdamped: Option<OverdampedSpec>,
    rng: &mut impl Rng,
) -> Result<LtiSystem> {
    let (lo, hi) = modulus_range;
    if order == 0 || !(0.0 < lo && lo <= hi && hi < 1.0) {
        return Err(VolterraError::InvalidArgument(
            "order must be >= 1 and modulus bounds inside (0, 1)".into(),
        ));
    }
    let mut poles = Vec::with_capacity(order);
    match overdamped {
        Some(spec) => {
            let (dl, dh) = spec.dominant;
            let (rl, rh) = spec.rest;
            if spec.count > order
                || !(0.0 < dl && dl <= dh && dh < 1.0)
                || !(0.0 < rl && rl <= rh && rh < 1.0)
            {
                return Err(VolterraError::InvalidArgument(
                    "invalid overdamped specification".into(),
                ));
            }
            for _ in 0..spec.count {
                poles.push(Complex64::new(rng.gen_range(dl..=dh), 0.0));
            }
            poles.extend(conjugate_roots(order - spec.count, spec.rest, rng));
        }
        None => poles.extend(conjugate_roots(order, modulus_range, rng)),
    }
    let zeros = conjugate_roots(order - 1, modulus_range, rng);
    let den = poly_from_roots(&poles);
    let num = poly_from_roots(&zeros);
    let ir = impulse_response(&num, &den);
    let norm = ir.iter().map(|v| v * v).sum::<f64>().sqrt();
    let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let k = sign / norm;
    Ok(LtiSystem {
        num: num.iter().map(|v| v * k).collect(),
        den,
        poles,
        zeros,
        gain: k,
        ir: ir.iter().map(|v| v * k).collect(),
    })
}

/// `clamp(slope · x, -limit, limit)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Saturation {
    pub slope: f64,
    pub limit: f64,
}

impl Saturation {
    pub fn eval(&self, x: f64) -> f64 {
        (self.slope * x).clamp(-self.limit, self.limit)
    }
}

/// `y = G_lin[u] + G2[φ(G1[u])]`, where `φ` is the polynomial `Σ a_m x^m` unless overridden.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhSystem {
    pub g1: LtiSystem,
    /// `None` is the identity (Wiener system).
    pub g2: Option<LtiSystem>,
    /// `a_0..a_M`.
    pub a: Vec<f64>,
    pub nl_override: Option<Saturation>,
    pub linear_branch: Option<LtiSystem>,
}

impl WhSystem {
    pub fn nonlinearity(&self, x: f64) -> f64 {
        match &self.nl_override {
            Some(s) => s.eval(x),
            None => self.a.iter().rev().fold(0.0, |acc, c| acc * x + c),
        }
    }

    pub fn order(&self) -> usize {
        self.a.len().saturating_sub(1)
    }
}

/// Noise-free output with the system at rest (zero input) before `t = 0`.
pub fn simulate_wh(sys: &WhSystem, u: &[f64]) -> Vec<f64> {
    let x = sys.g1.filter(u);
    let rest = sys.nonlinearity(0.0);
    let z: Vec<f64> = x.iter().map(|v| sys.nonlinearity(*v) - rest).collect();
    let mut y = match &sys.g2 {
        Some(g2) => {
            let dc: f64 = g2.ir.iter().sum();
            g2.filter(&z).into_iter().map(|v| v + rest * dc).collect()
        }
        None => z.into_iter().map(|v| v + rest).collect::<Vec<_>>(),
    };
    if let Some(lin) = &sys.linear_branch {
        for (yv, l) in y.iter_mut().zip(lin.filter(u)) {
            *yv += l;
        }
    }
    y
}

/// Exact offset `h0` and maps `h_1..h_M` over lags `0..n`.
pub fn true_volterra_maps(
    sys: &WhSystem,
    n: usize,
    order: usize,
) -> Result<(f64, Vec<VolterraMap>)> {
    if sys.nl_override.is_some() {
        return Err(VolterraError::NonPolynomial);
    }
    let size = block_len(n, order).unwrap_or(usize::MAX);
    if size > DENSE_LIMIT {
        return Err(VolterraError::SizeExceeded {
            required: size,
            limit: DENSE_LIMIT,
        });
    }
    let identity = [1.0];
    let g2: &[f64] = sys.g2.as_ref().map_or(&identity, |g| &g.ir);
    let g1 = &sys.g1.ir;
    let g1_at = |t: usize| g1.get(t).copied().unwrap_or(0.0);
    let coef = |m: usize| sys.a.get(m).copied().unwrap_or(0.0);
    let h0 = coef(0) * g2.iter().sum::<f64>();
    let mut maps = Vec::with_capacity(order);
    let mut idx = vec![0usize; order];
    for m in 1..=order {
        let mut map = VolterraMap::zeros(m, n);
        let am = coef(m);
        if am != 0.0 {
            for flat in 0..map.values.len() {
                unflatten(flat, n, &mut idx[..m]);
                let tmin = *idx[..m].iter().min().unwrap();
                let mut acc = 0.0;
                for (tau, g) in g2.iter().enumerate().take(tmin + 1) {
                    acc += g * idx[..m].iter().map(|&t| g1_at(t - tau)).product::<f64>();
                }
                map.values[flat] = am * acc;
            }
        }
        if m == 1 {
            if let Some(lin) = &sys.linear_branch {
                for (v, g) in map.values.iter_mut().zip(&lin.ir) {
                    *v += g;
                }
            }
        }
        maps.push(map);
    }
    Ok((h0, maps))
}

/// `y(t) = h0 + Σ_m Σ_τ h_m(τ) Π u(t - τ_i)`, with zero input before `t = 0`.
pub fn volterra_eval(h0: f64, maps: &[VolterraMap], u: &[f64]) -> Vec<f64> {
    let mut idx = Vec::new();
    (0..u.len())
        .map(|t| {
            let mut y = h0;
            for map in maps {
                idx.resize(map.degree, 0);
                for (flat, h) in map.values.iter().enumerate() {
                    if *h == 0.0 {
                        continue;
                    }
                    unflatten(flat, map.lags, &mut idx);
                    if idx.iter().any(|&s| s > t) {
                        continue;
                    }
                    y += h * idx.iter().map(|&s| u[t - s]).product::<f64>();
                }
            }
            y
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputKind {
    WhiteGaussian,
    /// Band edges are fractions of the Nyquist frequency.
    Multisine {
        band: (f64, f64),
        n_sines: usize,
    },
    DecayingCosine {
        lambda: f64,
        omega: f64,
        phase: f64,
    },
}

impl InputKind {
    /// Closed-form family for deterministic inputs that admit a separable descriptor.
    pub fn separable_family(&self) -> Option<InputFamily> {
        match *self {
            InputKind::DecayingCosine {
                lambda,
                omega,
                phase,
            } => Some(InputFamily::DampedSinusoid {
                amplitude: 1.0,
                decay: lambda,
                omega,
                phase,
            }),
            _ => None,
        }
    }
}

pub fn generate_input(kind: &InputKind, n_total: usize, rng: &mut impl Rng) -> Result<Vec<f64>> {
    match *kind {
        InputKind::WhiteGaussian => Ok((0..n_total).map(|_| StandardNormal.sample(rng)).collect()),
        InputKind::Multisine { band, n_sines } => {
            if n_sines == 0 || !(0.0 <= band.0 && band.0 < band.1 && band.1 <= 1.0) {
                return Err(VolterraError::InvalidArgument(
                    "multisine needs n_sines >= 1 and 0 <= band.0 < band.1 <= 1".into(),
                ));
            }
            let step = (band.1 - band.0) / n_sines as f64;
            let sines: Vec<(f64, f64)> = (0..n_sines)
                .map(|k| {
                    let f = band.0 + (k as f64 + 0.5) * step;
                    (PI * f, rng.gen_range(0.0..2.0 * PI))
                })
                .collect();
            let u: Vec<f64> = (0..n_total)
                .map(|t| sines.iter().map(|(w, p)| (w * t as f64 + p).cos()).sum())
                .collect();
            Ok(normalize_power(u))
        }
        InputKind::DecayingCosine {
            lambda,
            omega,
            phase,
        } => Ok((0..n_total)
            .map(|t| {
                let t = t as f64;
                (-lambda * t).exp() * (omega * t + phase).cos()
            })
            .collect()),
    }
}

/// Scales to unit mean square.
pub fn normalize_power(u: Vec<f64>) -> Vec<f64> {
    let p = u.iter().map(|v| v * v).sum::<f64>() / u.len().max(1) as f64;
    if p > 0.0 {
        let k = p.sqrt().recip();
        u.into_iter().map(|v| v * k).collect()
    } else {
        u
    }
}

/// Passes an input through a shaping filter and restores unit power.
pub fn shape_input(u: &[f64], filter: &LtiSystem) -> Vec<f64> {
    normalize_power(filter.filter(u))
}

pub fn variance(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
}

pub fn snr_noise_variance(y_clean: &[f64], snr_db: f64) -> Result<f64> {
    let v = variance(y_clean);
    if !(v > 0.0) {
        return Err(VolterraError::ZeroSignal);
    }
    Ok(v / 10f64.powf(snr_db / 10.0))
}

pub fn add_white_noise(y: &[f64], sigma2: f64, rng: &mut impl Rng) -> Vec<f64> {
    let s = sigma2.sqrt();
    y.iter()
        .map(|v| {
            let e: f64 = StandardNormal.sample(rng);
            v + s * e
        })
        .collect()
}

/// Adds white Gaussian noise at the requested SNR; returns the noisy output and `σ²`.
pub fn add_noise(y_clean: &[f64], snr_db: f64, rng: &mut impl Rng) -> Result<(Vec<f64>, f64)> {
    let sigma2 = snr_noise_variance(y_clean, snr_db)?;
    Ok((add_white_noise(y_clean, sigma2, rng), sigma2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum D2Config {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BankKind {
    D1like,
    D2like {
        config: D2Config,
        order: usize,
        snr_db: f64,
    },
    D3like,
    D4like,
}

impl BankKind {
    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name.to_ascii_lowercase().as_str() {
            "d1" | "d1like" => BankKind::D1like,
            "d2a" | "d2like-a" => BankKind::D2like {
                config: D2Config::A,
                order: 2,
                snr_db: 10.0,
            },
            "d2" | "d2b" | "d2like" | "d2like-b" => BankKind::D2like {
                config: D2Config::B,
                order: 2,
                snr_db: 10.0,
            },
            "d3" | "d3like" => BankKind::D3like,
            "d4" | "d4like" => BankKind::D4like,
            _ => {
                return Err(VolterraError::InvalidArgument(format!(
                    "unknown bank '{name}' (expected d1like, d2like-a, d2like-b, d3like, d4like)"
                )))
            }
        })
    }

    pub fn tag(&self) -> &'static str {
        match self {
            BankKind::D1like => "d1like",
            BankKind::D2like {
                config: D2Config::A,
                ..
            } => "d2like-a",
            BankKind::D2like {
                config: D2Config::B,
                ..
            } => "d2like-b",
            BankKind::D3like => "d3like",
            BankKind::D4like => "d4like",
        }
    }

    pub fn default_train_len(&self) -> usize {
        match self {
            BankKind::D3like => 300,
            _ => 400,
        }
    }

    /// Test length as a multiple of the training length.
    pub fn test_factor(&self) -> usize {
        match self {
            BankKind::D3like => 1,
            _ => 5,
        }
    }

    /// Volterra order used when fitting this bank.
    pub fn model_order(&self) -> usize {
        match self {
            BankKind::D1like => 2,
            BankKind::D2like { order, .. } => *order,
            BankKind::D3like => 9,
            BankKind::D4like => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BankSpec {
    pub kind: BankKind,
    pub count: usize,
    pub n_train: usize,
    /// Defaults to the bank's multiple of `n_train`.
    pub n_test: Option<usize>,
    pub seed: u64,
}

impl BankSpec {
    pub fn new(kind: BankKind, count: usize, seed: u64) -> Self {
        Self {
            kind,
            count,
            n_train: kind.default_train_len(),
            n_test: None,
            seed,
        }
    }

    pub fn test_len(&self) -> usize {
        self.n_test
            .unwrap_or(self.kind.test_factor() * self.n_train)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub id: String,
    pub bank: String,
    pub seed: u64,
    pub index: usize,
    pub n_train: usize,
    pub sigma2_true: f64,
    pub snr_db: f64,
    pub input_kind: InputKind,
    pub system: WhSystem,
    #[serde(skip)]
    pub u: Vec<f64>,
    #[serde(skip)]
    pub y_noisy: Vec<f64>,
    #[serde(skip)]
    pub y_clean: Vec<f64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn n_test(&self) -> usize {
        self.len() - self.n_train
    }

    /// Closed-form separable descriptor of the input, verified for memory `n`.
    pub fn separable_input(&self, n: usize) -> Option<Result<SeparableInputDesc>> {
        self.input_kind
            .separable_family()
            .map(|fam| separate_input(fam, self.len(), n))
    }

    /// Noisy training portion, with the input descriptor attached when `memory` is given and
    /// the input is separable.
    pub fn training_data(&self, memory: Option<usize>) -> Result<TrainingData> {
        let mut data = TrainingData::new(
            self.u[..self.n_train].to_vec(),
            self.y_noisy[..self.n_train].to_vec(),
        );
        if let Some(n) = memory {
            if let Some(desc) = self.separable_input(n) {
                data = data.with_input(desc?);
            }
        }
        Ok(data)
    }

    pub fn test_outputs(&self) -> &[f64] {
        &self.y_clean[self.n_train..]
    }

    /// Empirical SNR over the whole record.
    pub fn realized_snr_db(&self) -> f64 {
        let clean = &self.y_clean;
        let noise: Vec<f64> = self.y_noisy.iter().zip(clean).map(|(a, b)| a - b).collect();
        10.0 * (variance(clean) / variance(&noise)).log10()
    }
}

fn uniform_coeffs(order: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..=order).map(|_| rng.gen_range(-1.0..=1.0)).collect()
}

pub const D2B_MAX_ATTEMPTS: usize = 1000;
pub const D2B_RATIO: (f64, f64) = (0.1, 10.0);

/// Draws coefficients until every consecutive order-variance ratio lies in [`D2B_RATIO`].
fn balanced_coeffs(
    g1: &LtiSystem,
    g2: &LtiSystem,
    u: &[f64],
    order: usize,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    let x = g1.filter(u);
    let unit_var: Vec<f64> = (1..=order)
        .map(|m| variance(&g2.filter(&x.iter().map(|v| v.powi(m as i32)).collect::<Vec<_>>())))
        .collect();
    for _ in 0..D2B_MAX_ATTEMPTS {
        let a = uniform_coeffs(order, rng);
        let ok = (1..order).all(|m| {
            let r = a[m + 1].powi(2) * unit_var[m] / (a[m].powi(2) * unit_var[m - 1]);
            r.is_finite() && (D2B_RATIO.0..=D2B_RATIO.1).contains(&r)
        });
        if ok {
            return Ok(a);
        }
    }
    Err(VolterraError::ConstraintUnsatisfiable {
        attempts: D2B_MAX_ATTEMPTS,
    })
}

pub const D3_DEN: [f64; 7] = [1.0, -2.67, 2.96, -2.01, 0.914, -0.181, -0.0102];
pub const D3_NUM: [f64; 7] = [0.0, -0.467, 1.12, -0.925, 0.308, -0.0364, 0.00110];
pub const D3_NOISE_VAR: f64 = 0.01;
pub const D3_SATURATION: Saturation = Saturation {
    slope: 2.0,
    limit: 1.0,
};

pub fn d1_system() -> WhSystem {
    let g1 = LtiSystem::from_tf(vec![0.0, 0.7568], vec![1.0, -1.812, 0.8578]).expect("stable");
    let g2 = LtiSystem::from_tf(vec![0.0, 1.063], vec![1.0, -1.706, 0.7491]).expect("stable");
    // (G1 u)·(1.5 G1 u) through G2, plus a static gain of 2 in parallel.
    WhSystem {
        g1,
        g2: Some(g2),
        a: vec![0.0, 0.0, 1.5],
        nl_override: None,
        linear_branch: Some(LtiSystem::fir(vec![2.0]).expect("static gain")),
    }
}

pub fn d3_system() -> WhSystem {
    WhSystem {
        g1: LtiSystem::from_tf(D3_NUM.to_vec(), D3_DEN.to_vec()).expect("stable"),
        g2: None,
        a: Vec::new(),
        nl_override: Some(D3_SATURATION),
        linear_branch: None,
    }
}

pub fn dataset_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn build_one(spec: &BankSpec, index: usize) -> Result<Dataset> {
    let mut rng = dataset_rng(spec.seed, index);
    let total = spec.n_train + spec.test_len();
    let white = InputKind::WhiteGaussian;
    let (system, input_kind, noise) = match spec.kind {
        BankKind::D1like => (
            d1_system(),
            InputKind::Multisine {
                band: (0.0, 1.0),
                n_sines: 100,
            },
            Noise::Snr(20.0),
        ),
        BankKind::D2like {
            config,
            order,
            snr_db,
        } => {
            if order == 0 {
                return Err(VolterraError::InvalidArgument(
                    "D2 order must be >= 1".into(),
                ));
            }
            let g1 = match config {
                D2Config::A => random_stable_lti(30, (0.1, 0.9), None, &mut rng)?,
                D2Config::B => random_stable_lti(
                    15,
                    (0.1, 0.9),
                    Some(OverdampedSpec {
                        count: 5,
                        dominant: (0.7, 0.8),
                        rest: (0.1, 0.5),
                    }),
                    &mut rng,
                )?,
            };
            let g2 = random_stable_lti(30, (0.1, 0.9), None, &mut rng)?;
            let u = generate_input(&white, total, &mut rng)?;
            let a = match config {
                D2Config::A => uniform_coeffs(order, &mut rng),
                D2Config::B => balanced_coeffs(&g1, &g2, &u[..spec.n_train], order, &mut rng)?,
            };
            let sys = WhSystem {
                g1,
                g2: Some(g2),
                a,
                nl_override: None,
                linear_branch: None,
            };
            return finish(spec, index, sys, white, u, Noise::Snr(snr_db), &mut rng);
        }
        BankKind::D3like => (d3_system(), white, Noise::Variance(D3_NOISE_VAR)),
        BankKind::D4like => {
            let g1 = random_stable_lti(15, (0.1, 0.9), None, &mut rng)?;
            let sys = WhSystem {
                g1,
                g2: None,
                a: uniform_coeffs(3, &mut rng),
                nl_override: None,
                linear_branch: None,
            };
            let input = InputKind::DecayingCosine {
                lambda: 0.0003,
                omega: 0.1,
                phase: PI / 3.0,
            };
            (sys, input, Noise::Snr(10.0))
        }
    };
    let u = generate_input(&input_kind, total, &mut rng)?;
    finish(spec, index, system, input_kind, u, noise, &mut rng)
}

enum Noise {
    Snr(f64),
    Variance(f64),
}

fn finish(
    spec: &BankSpec,
    index: usize,
    system: WhSystem,
    input_kind: InputKind,
    u: Vec<f64>,
    noise: Noise,
    rng: &mut ChaCha8Rng,
) -> Result<Dataset> {
    let y_clean = simulate_wh(&system, &u);
    let train_var = variance(&y_clean[..spec.n_train]);
    if !(train_var > 0.0) {
        return Err(VolterraError::ZeroSignal);
    }
    let (sigma2, snr_db) = match noise {
        Noise::Snr(snr) => (snr_noise_variance(&y_clean, snr)?, snr),
        Noise::Variance(s2) => (s2, 10.0 * (variance(&y_clean) / s2).log10()),
    };
    let y_noisy = add_white_noise(&y_clean, sigma2, rng);
    Ok(Dataset {
        id: format!("{}-{:04}", spec.kind.tag(), index),
        bank: spec.kind.tag().to_string(),
        seed: spec.seed,
        index,
        n_train: spec.n_train,
        sigma2_true: sigma2,
        snr_db,
        input_kind,
        system,
        u,
        y_noisy,
        y_clean,
    })
}

/// Generates `spec.count` datasets; dataset `i` only depends on `(spec, i)`.
pub fn build_databank(spec: &BankSpec) -> Result<Vec<Dataset>> {
    if spec.count == 0 {
        return Err(VolterraError::InvalidArgument(
            "databank count must be >= 1".into(),
        ));
    }
    if spec.n_train < 2 {
        return Err(VolterraError::InvalidArgument(
            "n_train must be >= 2".into(),
        ));
    }
    (0..spec.count)
        .into_par_iter()
        .map(|i| build_one(spec, i))
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    t: usize,
    u: f64,
    y_noisy: f64,
    y_clean: f64,
}

/// Writes `meta.json` and `data.csv` into `dir`.
pub fn write_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("meta.json"), serde_json::to_string_pretty(ds)?)?;
    let mut w = csv::Writer::from_path(dir.join("data.csv"))?;
    for t in 0..ds.len() {
        w.serialize(Row {
            t,
            u: ds.u[t],
            y_noisy: ds.y_noisy[t],
            y_clean: ds.y_clean[t],
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let mut ds: Dataset = serde_json::from_str(&fs::read_to_string(dir.join("meta.json"))?)?;
    let mut r = csv::Reader::from_path(dir.join("data.csv"))?;
    for (i, row) in r.deserialize::<Row>().enumerate() {
        let row = row?;
        if row.t != i {
            return Err(VolterraError::InvalidArgument(format!(
                "data.csv row {i} has t = {}",
                row.t
            )));
        }
        ds.u.push(row.u);
        ds.y_noisy.push(row.y_noisy);
        ds.y_clean.push(row.y_clean);
    }
    if ds.n_train >= ds.len() {
        return Err(VolterraError::InvalidArgument(format!(
            "dataset has {} samples but n_train = {}",
            ds.len(),
            ds.n_train
        )));
    }
    Ok(ds)
}
