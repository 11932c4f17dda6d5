//! DC kernel, ζ functions, and the multi-index Wiener / Wiener–Hammerstein kernels.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, SQRT_2};

use crate::error::{Result, VolterraError};
use crate::multi_index::{block_len, block_offsets, unflatten};

/// Guard on `lags^M` for any dense multi-index construction.
pub const DENSE_LIMIT: usize = 100_000;

/// Parameters of `c² e^{-α(t+s)} e^{-β|t-s|}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DcParams {
    pub c: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl DcParams {
    pub fn new(c: f64, alpha: f64, beta: f64) -> Result<Self> {
        let p = Self { c, alpha, beta };
        if p.is_admissible() {
            Ok(p)
        } else {
            Err(VolterraError::InvalidArgument(format!(
                "DC parameters need c >= 0, alpha > 0, beta >= 0 (got c={c}, alpha={alpha}, beta={beta})"
            )))
        }
    }

    /// Unit-scale parameters, the default for κ1 and κ2.
    pub fn unit(alpha: f64, beta: f64) -> Self {
        Self {
            c: 1.0,
            alpha,
            beta,
        }
    }

    pub fn is_admissible(&self) -> bool {
        self.c.is_finite()
            && self.c >= 0.0
            && self.alpha.is_finite()
            && self.alpha > 0.0
            && self.beta.is_finite()
            && self.beta >= 0.0
    }
}

pub fn dc_eval(t: usize, s: usize, p: &DcParams) -> f64 {
    let (t, s) = (t as f64, s as f64);
    p.c * p.c * (-p.alpha * (t + s) - p.beta * (t - s).abs()).exp()
}

/// Zero whenever any lag is negative, otherwise `f` on the (now non-negative) lags.
pub fn causal_eval<const K: usize>(lags: [i64; K], f: impl FnOnce([usize; K]) -> f64) -> f64 {
    if lags.iter().any(|&l| l < 0) {
        return 0.0;
    }
    f(lags.map(|l| l as usize))
}

pub fn dc_causal(t: i64, s: i64, p: &DcParams) -> f64 {
    causal_eval([t, s], |[t, s]| dc_eval(t, s, p))
}

/// Gram matrix of the DC kernel on lags `0..n`.
pub fn dc_gram(n: usize, p: &DcParams) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| dc_eval(i, j, p))
}

/// Sign of the exponent in the DC eigenfunctions.
///
/// `Printed` uses `e^{(β-α)t}`; `Negated` uses `e^{-(α+β)t}`. Only `Printed` reproduces
/// the kernel through its Mercer expansion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenSign {
    #[default]
    Printed,
    Negated,
}

impl EigenSign {
    fn envelope(self, p: &DcParams, t: f64) -> f64 {
        match self {
            EigenSign::Printed => ((p.beta - p.alpha) * t).exp(),
            EigenSign::Negated => (-(p.alpha + p.beta) * t).exp(),
        }
    }
}

/// `ε_i = 1 / ((i - 1/2)² π²)`, `i >= 1`.
pub fn dc_eigenvalue(i: usize) -> f64 {
    assert!(i >= 1, "eigen index starts at 1");
    let k = i as f64 - 0.5;
    1.0 / (k * k * PI * PI)
}

/// `ψ_i(t) = √2 e^{(β-α)t} sin((i - 1/2) π e^{-2βt})` under the printed convention.
pub fn dc_eigenfunction(i: usize, t: f64, p: &DcParams, sign: EigenSign) -> f64 {
    assert!(i >= 1, "eigen index starts at 1");
    let x = (-2.0 * p.beta * t).exp();
    SQRT_2 * sign.envelope(p, t) * ((i as f64 - 0.5) * PI * x).sin()
}

pub fn dc_eigenpair(i: usize, p: &DcParams, sign: EigenSign) -> (f64, impl Fn(usize) -> f64 + '_) {
    (dc_eigenvalue(i), move |t| {
        dc_eigenfunction(i, t as f64, p, sign)
    })
}

/// `sup_{t,s<n} |c² Σ_{i≤L} ε_i ψ_i(t) ψ_i(s) - κ(t,s)|`.
pub fn mercer_error(terms: usize, n: usize, p: &DcParams, sign: EigenSign) -> f64 {
    let psi = DMatrix::from_fn(n, terms, |t, i| dc_eigenfunction(i + 1, t as f64, p, sign));
    let mut worst = 0.0f64;
    for t in 0..n {
        for s in 0..n {
            let approx: f64 = (0..terms)
                .map(|i| dc_eigenvalue(i + 1) * psi[(t, i)] * psi[(s, i)])
                .sum();
            worst = worst.max((p.c * p.c * approx - dc_eval(t, s, p)).abs());
        }
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ZetaVariant {
    ExpDecay,
    OrthoBasis { l: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZetaSpec {
    pub variant: ZetaVariant,
    #[serde(default)]
    pub sign: EigenSign,
}

impl ZetaSpec {
    pub fn exp_decay() -> Self {
        Self {
            variant: ZetaVariant::ExpDecay,
            sign: EigenSign::Printed,
        }
    }

    pub fn ortho_basis(l: usize) -> Self {
        Self {
            variant: ZetaVariant::OrthoBasis { l },
            sign: EigenSign::Printed,
        }
    }
}

/// ζ at a non-negative lag, sharing the κ1 parameters `k1`.
pub fn zeta_eval(t: usize, z: &ZetaSpec, k1: &DcParams) -> f64 {
    let tf = t as f64;
    match z.variant {
        ZetaVariant::ExpDecay => k1.c * (-(k1.alpha + k1.beta) * tf).exp(),
        ZetaVariant::OrthoBasis { l } => {
            // Σ √2 ε_i ψ_i(t) = 2 env(t) Σ ε_i sin((i-½)θ), θ = π e^{-2βt}.
            let theta = PI * (-2.0 * k1.beta * tf).exp();
            let two_cos = 2.0 * theta.cos();
            let mut prev = -(0.5 * theta).sin();
            let mut cur = (0.5 * theta).sin();
            let mut acc = 0.0;
            for i in 1..=l {
                acc += dc_eigenvalue(i) * cur;
                let next = two_cos * cur - prev;
                prev = cur;
                cur = next;
            }
            k1.c * 2.0 * z.sign.envelope(k1, tf) * acc
        }
    }
}

pub fn zeta_causal(t: i64, z: &ZetaSpec, k1: &DcParams) -> f64 {
    causal_eval([t], |[t]| zeta_eval(t, z, k1))
}

pub fn zeta_vector(n: usize, z: &ZetaSpec, k1: &DcParams) -> DVector<f64> {
    DVector::from_fn(n, |t, _| zeta_eval(t, z, k1))
}

/// The output-side kernel κ2: either a DC kernel or the Kronecker delta that collapses
/// the Wiener–Hammerstein kernel to its Wiener form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Kappa2 {
    Delta,
    Dc(DcParams),
}

impl Kappa2 {
    pub fn eval(&self, t: usize, s: usize) -> f64 {
        match self {
            Kappa2::Delta => {
                if t == 0 && s == 0 {
                    1.0
                } else {
                    0.0
                }
            }
            Kappa2::Dc(p) => dc_eval(t, s, p),
        }
    }

    pub fn gram(&self, n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, n, |i, j| self.eval(i, j))
    }

    pub fn is_delta(&self) -> bool {
        matches!(self, Kappa2::Delta)
    }
}

/// Whether the kernel couples Volterra maps of different degree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockStructure {
    #[default]
    Full,
    Diagonal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelHyper {
    /// Polynomial coefficients `a_1..a_M`.
    pub a: Vec<f64>,
    pub h0: f64,
    pub k1: DcParams,
    pub k2: Kappa2,
    pub zeta: ZetaSpec,
    pub structure: BlockStructure,
    pub sigma2: f64,
    /// Memory length `n`.
    pub memory: usize,
}

impl KernelHyper {
    pub fn order(&self) -> usize {
        self.a.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.a.is_empty() {
            return Err(VolterraError::InvalidArgument(
                "order M must be >= 1".into(),
            ));
        }
        if self.memory == 0 {
            return Err(VolterraError::InvalidArgument(
                "memory n must be >= 1".into(),
            ));
        }
        if !(self.sigma2.is_finite() && self.sigma2 > 0.0) {
            return Err(VolterraError::InvalidArgument(format!(
                "sigma2 must be positive, got {}",
                self.sigma2
            )));
        }
        if !self.k1.is_admissible() {
            return Err(VolterraError::InvalidArgument(
                "k1 parameters not admissible".into(),
            ));
        }
        if let Kappa2::Dc(p) = self.k2 {
            if !p.is_admissible() {
                return Err(VolterraError::InvalidArgument(
                    "k2 parameters not admissible".into(),
                ));
            }
        }
        if let ZetaVariant::OrthoBasis { l } = self.zeta.variant {
            if l == 0 {
                return Err(VolterraError::InvalidArgument(
                    "ortho-basis l must be >= 1".into(),
                ));
            }
        }
        if self.a.iter().any(|v| !v.is_finite()) || !self.h0.is_finite() {
            return Err(VolterraError::NonFinite("polynomial coefficients"));
        }
        Ok(())
    }

    /// Multiplier of block `(p, q)`; zero off the diagonal for block-diagonal kernels.
    pub fn block_weight(&self, p: usize, q: usize) -> f64 {
        if self.structure == BlockStructure::Diagonal && p != q {
            0.0
        } else {
            self.a[p - 1] * self.a[q - 1]
        }
    }
}

/// `K^w_pq` for arbitrary κ1 and ζ evaluators that accept possibly negative lags.
pub fn wiener_kernel_with(
    t: &[i64],
    s: &[i64],
    a_p: f64,
    a_q: f64,
    k1: impl Fn(i64, i64) -> f64,
    zeta: impl Fn(i64) -> f64,
) -> f64 {
    let common = t.len().min(s.len());
    let mut v = a_p * a_q;
    for i in 0..common {
        v *= k1(t[i], s[i]);
    }
    for &x in t[common..].iter().chain(&s[common..]) {
        v *= zeta(x);
    }
    v
}

pub fn wiener_kernel_eval(
    t: &[i64],
    s: &[i64],
    a_p: f64,
    a_q: f64,
    k1: &DcParams,
    z: &ZetaSpec,
) -> f64 {
    wiener_kernel_with(
        t,
        s,
        a_p,
        a_q,
        |x, y| dc_causal(x, y, k1),
        |x| zeta_causal(x, z, k1),
    )
}

/// `Σ_{ξ1,ξ2<n} κ2(ξ1,ξ2) K^w(t-ξ1, s-ξ2)` for arbitrary evaluators.
#[allow(clippy::too_many_arguments)]
pub fn wh_kernel_with(
    t: &[i64],
    s: &[i64],
    a_p: f64,
    a_q: f64,
    k1: impl Fn(i64, i64) -> f64,
    k2: impl Fn(usize, usize) -> f64,
    zeta: impl Fn(i64) -> f64,
    n: usize,
) -> f64 {
    let mut ts = t.to_vec();
    let mut ss = s.to_vec();
    let mut acc = 0.0;
    for xi1 in 0..n {
        for (d, &o) in ts.iter_mut().zip(t) {
            *d = o - xi1 as i64;
        }
        for xi2 in 0..n {
            let w = k2(xi1, xi2);
            if w == 0.0 {
                continue;
            }
            for (d, &o) in ss.iter_mut().zip(s) {
                *d = o - xi2 as i64;
            }
            acc += w * wiener_kernel_with(&ts, &ss, a_p, a_q, &k1, &zeta);
        }
    }
    acc
}

/// Wiener–Hammerstein kernel entry with κ1 and ζ windowed to lags `0..n`.
#[allow(clippy::too_many_arguments)]
pub fn wh_kernel_eval(
    t: &[i64],
    s: &[i64],
    a_p: f64,
    a_q: f64,
    k1: &DcParams,
    k2: &Kappa2,
    z: &ZetaSpec,
    n: usize,
) -> f64 {
    let inside = |x: i64| x >= 0 && (x as usize) < n;
    wh_kernel_with(
        t,
        s,
        a_p,
        a_q,
        |x, y| {
            if inside(x) && inside(y) {
                dc_eval(x as usize, y as usize, k1)
            } else {
                0.0
            }
        },
        |x, y| k2.eval(x, y),
        |x| {
            if inside(x) {
                zeta_eval(x as usize, z, k1)
            } else {
                0.0
            }
        },
        n,
    )
}

/// Dense prior covariance `P` (without the h0 entry) over lags `0..n`.
pub fn dense_kernel_matrix(h: &KernelHyper) -> Result<DMatrix<f64>> {
    dense_kernel_matrix_with_lags(h, h.memory)
}

/// Dense `P` over lags `0..lags`; with `lags > n` the Wiener–Hammerstein kernel spans its
/// full `2n - 1` effective memory while κ1 and ζ stay windowed to `0..n`.
pub fn dense_kernel_matrix_with_lags(h: &KernelHyper, lags: usize) -> Result<DMatrix<f64>> {
    h.validate()?;
    let order = h.order();
    let n = h.memory;
    let top = block_len(lags, order).unwrap_or(usize::MAX);
    if top > DENSE_LIMIT {
        return Err(VolterraError::SizeExceeded {
            required: top,
            limit: DENSE_LIMIT,
        });
    }
    let k1 = DMatrix::from_fn(lags, lags, |i, j| {
        if i < n && j < n {
            dc_eval(i, j, &h.k1)
        } else {
            0.0
        }
    });
    let zeta: Vec<f64> = (0..lags)
        .map(|t| {
            if t < n {
                zeta_eval(t, &h.zeta, &h.k1)
            } else {
                0.0
            }
        })
        .collect();
    let k2 = h.k2.gram(n);
    let offsets = block_offsets(lags, order);
    let dim = offsets[order];
    let mut out = DMatrix::zeros(dim, dim);

    let mut ti = vec![0usize; order];
    let mut si = vec![0usize; order];
    for p in 1..=order {
        for q in p..=order {
            let w = h.block_weight(p, q);
            if w == 0.0 {
                continue;
            }
            let (rows, cols) = (offsets[p] - offsets[p - 1], offsets[q] - offsets[q - 1]);
            for r in 0..rows {
                unflatten(r, lags, &mut ti[..p]);
                for c in 0..cols {
                    unflatten(c, lags, &mut si[..q]);
                    let v = w * shifted_sum(&ti[..p], &si[..q], &k1, &zeta, &k2);
                    out[(offsets[p - 1] + r, offsets[q - 1] + c)] = v;
                    out[(offsets[q - 1] + c, offsets[p - 1] + r)] = v;
                }
            }
        }
    }
    Ok(out)
}

/// `Σ_{ξ1,ξ2} κ2(ξ1,ξ2) Π κ1(t_i-ξ1, s_i-ξ2) Π ζ(...)` with tabulated κ1 and ζ.
fn shifted_sum(
    t: &[usize],
    s: &[usize],
    k1: &DMatrix<f64>,
    zeta: &[f64],
    k2: &DMatrix<f64>,
) -> f64 {
    let n = k2.nrows();
    let common = t.len().min(s.len());
    let t_min = t.iter().copied().min().unwrap_or(0);
    let s_min = s.iter().copied().min().unwrap_or(0);
    let mut acc = 0.0;
    for xi1 in 0..n.min(t_min + 1) {
        for xi2 in 0..n.min(s_min + 1) {
            let w = k2[(xi1, xi2)];
            if w == 0.0 {
                continue;
            }
            let mut v = w;
            for i in 0..common {
                v *= k1[(t[i] - xi1, s[i] - xi2)];
            }
            for &x in &t[common..] {
                v *= zeta[x - xi1];
            }
            for &x in &s[common..] {
                v *= zeta[x - xi2];
            }
            acc += v;
        }
    }
    acc
}

/// True when the smallest eigenvalue is at least `-tol (1 + ‖M‖₂)`.
pub fn min_eig_check(m: &DMatrix<f64>, tol: f64) -> bool {
    if m.nrows() == 0 {
        return true;
    }
    let eig = SymmetricEigen::new(m.clone());
    let norm = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let min = eig
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    min >= -tol * (1.0 + norm)
}
