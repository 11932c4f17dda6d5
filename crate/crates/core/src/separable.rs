//! Separable-input fast path: generators of `Q = ŪV̄ᵀ` and Woodbury-based EB evaluation.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

use crate::error::{Result, VolterraError};
use crate::kernels::{BlockStructure, DcParams};

pub type SeqFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Closed-form input families with a known finite separation `u(t-b) = Σ π_i(t) ρ_i(b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputFamily {
    /// `amplitude · e^{-decay·t}`
    Exponential {
        amplitude: f64,
        decay: f64,
    },
    /// `amplitude · e^{-decay·t} cos(omega·t + phase)`
    DampedSinusoid {
        amplitude: f64,
        decay: f64,
        omega: f64,
        phase: f64,
    },
    /// `(Σ_k coeffs[k] t^k) · e^{-decay·t}`
    PolyTimesExp {
        coeffs: Vec<f64>,
        decay: f64,
    },
    Custom,
}

impl InputFamily {
    /// Closed-form value at (possibly negative) time `t`; `None` for `Custom`.
    pub fn value(&self, t: f64) -> Option<f64> {
        Some(match self {
            InputFamily::Exponential { amplitude, decay } => amplitude * (-decay * t).exp(),
            InputFamily::DampedSinusoid {
                amplitude,
                decay,
                omega,
                phase,
            } => amplitude * (-decay * t).exp() * (omega * t + phase).cos(),
            InputFamily::PolyTimesExp { coeffs, decay } => {
                coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c) * (-decay * t).exp()
            }
            InputFamily::Custom => return None,
        })
    }
}

#[derive(Clone)]
pub struct SeparableInputDesc {
    pub family: InputFamily,
    pub pi: Vec<SeqFn>,
    pub rho: Vec<SeqFn>,
}

impl fmt::Debug for SeparableInputDesc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SeparableInputDesc")
            .field("family", &self.family)
            .field("rank", &self.rank())
            .finish()
    }
}

fn seq(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> SeqFn {
    Arc::new(f)
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

impl SeparableInputDesc {
    pub fn rank(&self) -> usize {
        self.pi.len()
    }

    /// Descriptor from user-supplied factors, verified against `u` on output times
    /// `first..first + count` and lags `0..n` (zero before the record).
    pub fn custom(
        pi: Vec<SeqFn>,
        rho: Vec<SeqFn>,
        u: &[f64],
        first: usize,
        count: usize,
        n: usize,
    ) -> Result<Self> {
        if pi.is_empty() || pi.len() != rho.len() {
            return Err(VolterraError::InvalidArgument(
                "custom separation needs equally many (>= 1) pi and rho factors".into(),
            ));
        }
        let d = Self {
            family: InputFamily::Custom,
            pi,
            rho,
        };
        d.verify_against(u, first, count, n)?;
        Ok(d)
    }

    pub fn separated(&self, t: usize, b: usize) -> f64 {
        let (t, b) = (t as f64, b as f64);
        self.pi
            .iter()
            .zip(&self.rho)
            .map(|(p, r)| p(t) * r(b))
            .sum()
    }

    /// Checks `u(t-b) = Σ π_i(t) ρ_i(b)` on every (t, b) of the given rows.
    pub fn verify_against(&self, u: &[f64], first: usize, count: usize, n: usize) -> Result<()> {
        let scale = u.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for t in first..first + count {
            for b in 0..n {
                let expect = if t >= b && t - b < u.len() {
                    u[t - b]
                } else {
                    0.0
                };
                let residual = (self.separated(t, b) - expect).abs();
                if !(residual <= SEPARATION_TOL * scale) {
                    return Err(VolterraError::SeparationCheckFailed { t, b, residual });
                }
            }
        }
        Ok(())
    }
}

pub const SEPARATION_TOL: f64 = 1e-12;

/// Minimal-rank descriptor for a declared family, checked on `t < n_total`, `b < n`.
pub fn separate_input(family: InputFamily, n_total: usize, n: usize) -> Result<SeparableInputDesc> {
    let (pi, rho): (Vec<SeqFn>, Vec<SeqFn>) = match family.clone() {
        InputFamily::Exponential { amplitude, decay } => (
            vec![seq(move |t| amplitude * (-decay * t).exp())],
            vec![seq(move |b| (decay * b).exp())],
        ),
        InputFamily::DampedSinusoid {
            amplitude,
            decay,
            omega,
            phase,
        } => (
            vec![
                seq(move |t| amplitude * (-decay * t).exp() * (omega * t + phase).cos()),
                seq(move |t| amplitude * (-decay * t).exp() * (omega * t + phase).sin()),
            ],
            vec![
                seq(move |b| (decay * b).exp() * (omega * b).cos()),
                seq(move |b| (decay * b).exp() * (omega * b).sin()),
            ],
        ),
        InputFamily::PolyTimesExp { coeffs, decay } => {
            if coeffs.is_empty() {
                return Err(VolterraError::InvalidArgument(
                    "polynomial has no coefficients".into(),
                ));
            }
            let d = coeffs.len() - 1;
            let coeffs = Arc::new(coeffs);
            let mut pi = Vec::with_capacity(d + 1);
            let mut rho = Vec::with_capacity(d + 1);
            // (t-b)^k = Σ_j C(k,j) t^{k-j} (-b)^j, grouped by j.
            for j in 0..=d {
                let c = Arc::clone(&coeffs);
                pi.push(seq(move |t| {
                    let mut acc = 0.0;
                    for k in j..c.len() {
                        acc += c[k] * binomial(k, j) * t.powi((k - j) as i32);
                    }
                    acc * (-decay * t).exp()
                }));
                rho.push(seq(move |b| (-b).powi(j as i32) * (decay * b).exp()));
            }
            (pi, rho)
        }
        InputFamily::Custom => {
            return Err(VolterraError::InvalidArgument(
                "custom inputs are built with SeparableInputDesc::custom".into(),
            ))
        }
    };
    let desc = SeparableInputDesc {
        family: family.clone(),
        pi,
        rho,
    };
    let mut scale = 1.0f64;
    for t in 0..n_total {
        scale = scale.max(family.value(t as f64).unwrap().abs());
    }
    for t in 0..n_total {
        for b in 0..n.min(t + 1) {
            let expect = family.value(t as f64 - b as f64).unwrap();
            let residual = (desc.separated(t, b) - expect).abs();
            if !(residual <= SEPARATION_TOL * scale) {
                return Err(VolterraError::SeparationCheckFailed { t, b, residual });
            }
        }
    }
    Ok(desc)
}

/// Anything that can form `K · H` for an `n×n` kernel Gram matrix `K`.
pub trait KernelOperator {
    fn dim(&self) -> usize;
    fn apply(&self, h: &DMatrix<f64>) -> DMatrix<f64>;
}

impl KernelOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, h: &DMatrix<f64>) -> DMatrix<f64> {
        self * h
    }
}

/// Extended-`p` semiseparable kernel: `κ(t,s) = Σ μ_i(t) ν_i(s)` for `t >= s`, mirrored above.
#[derive(Clone)]
pub struct SemiseparableKernelDesc {
    pub p: usize,
    pub mu: Vec<SeqFn>,
    pub nu: Vec<SeqFn>,
    pub n: usize,
}

impl fmt::Debug for SemiseparableKernelDesc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SemiseparableKernelDesc")
            .field("p", &self.p)
            .field("n", &self.n)
            .finish()
    }
}

impl SemiseparableKernelDesc {
    /// DC kernel generators, balanced so both factors stay near unit magnitude.
    /// `None` when the factors would overflow on `0..n`.
    pub fn dc(params: &DcParams, n: usize) -> Option<Self> {
        let span = n.saturating_sub(1) as f64;
        let up = params.alpha + params.beta;
        let lo = params.alpha - params.beta;
        let shift = 0.5 * up * span;
        let worst = (0.5 * up * span).max(shift + lo.abs() * span);
        if !(worst < 700.0) || params.c == 0.0 {
            return None;
        }
        let c2 = params.c * params.c;
        Some(Self {
            p: 1,
            mu: vec![seq(move |t| c2 * (shift - up * t).exp())],
            nu: vec![seq(move |s| (-lo * s - shift).exp())],
            n,
        })
    }

    pub fn eval(&self, t: usize, s: usize) -> f64 {
        let (hi, lo) = if t >= s { (t, s) } else { (s, t) };
        self.mu
            .iter()
            .zip(&self.nu)
            .map(|(m, v)| m(hi as f64) * v(lo as f64))
            .sum()
    }

    /// Checks the factorization against `kernel` on the full `n×n` grid.
    pub fn check_grid(&self, kernel: impl Fn(usize, usize) -> f64, tol: f64) -> Result<()> {
        for t in 0..self.n {
            for s in 0..=t {
                let k = kernel(t, s);
                let residual = (self.eval(t, s) - k).abs();
                if !(residual <= tol * (1.0 + k.abs())) {
                    return Err(VolterraError::SeparationCheckFailed { t, b: s, residual });
                }
            }
        }
        Ok(())
    }
}

/// `K · H` in `O(n p r)` by forward and backward cumulative sums.
pub fn semiseparable_apply(desc: &SemiseparableKernelDesc, h: &DMatrix<f64>) -> DMatrix<f64> {
    let n = desc.n;
    assert_eq!(h.nrows(), n, "H must have n rows");
    let mut out = DMatrix::zeros(n, h.ncols());
    for i in 0..desc.p {
        let mu: Vec<f64> = (0..n).map(|t| (desc.mu[i])(t as f64)).collect();
        let nu: Vec<f64> = (0..n).map(|t| (desc.nu[i])(t as f64)).collect();
        for c in 0..h.ncols() {
            let col = h.column(c);
            let mut fwd = 0.0;
            for t in 0..n {
                fwd += nu[t] * col[t];
                out[(t, c)] += mu[t] * fwd;
            }
            let mut bwd = 0.0;
            for t in (0..n).rev() {
                out[(t, c)] += nu[t] * bwd;
                bwd += mu[t] * col[t];
            }
        }
    }
    out
}

impl KernelOperator for SemiseparableKernelDesc {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, h: &DMatrix<f64>) -> DMatrix<f64> {
        semiseparable_apply(self, h)
    }
}

/// DC kernel applied through first-order recurrences on the kernel values themselves,
/// which cannot overflow for any admissible parameters.
#[derive(Debug, Clone, Copy)]
pub struct DcOperator {
    pub params: DcParams,
    pub n: usize,
}

impl KernelOperator for DcOperator {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, h: &DMatrix<f64>) -> DMatrix<f64> {
        let DcParams { c, alpha, beta } = self.params;
        let n = self.n;
        let c2 = c * c;
        let down = (-(alpha + beta)).exp();
        let up = (alpha - beta).exp();
        let diag: Vec<f64> = (0..n)
            .map(|t| c2 * (-2.0 * alpha * t as f64).exp())
            .collect();
        let next: Vec<f64> = (0..n)
            .map(|t| c2 * (-alpha * (2 * t + 1) as f64 - beta).exp())
            .collect();
        let mut out = DMatrix::zeros(n, h.ncols());
        for col in 0..h.ncols() {
            let x = h.column(col);
            // L(t) = e^{-(α+β)} L(t-1) + κ(t,t) h(t)
            let mut lower = 0.0;
            for t in 0..n {
                lower = down * lower + diag[t] * x[t];
                out[(t, col)] = lower;
            }
            // W(t) = e^{α-β} W(t+1) + κ(t,t+1) h(t+1)
            let mut upper = 0.0;
            for t in (0..n.saturating_sub(1)).rev() {
                upper = up * upper + next[t] * x[t + 1];
                out[(t, col)] += upper;
            }
        }
        out
    }
}

/// Per-dataset samples of the input factors: `U[t,i] = π_i(t)` and `H[b,i] = ρ_i(b)`.
#[derive(Debug, Clone)]
pub struct InputFactors {
    pub u: DMatrix<f64>,
    pub h: DMatrix<f64>,
}

impl InputFactors {
    pub fn new(desc: &SeparableInputDesc, first: usize, count: usize, n: usize) -> Self {
        let r = desc.rank();
        Self {
            u: DMatrix::from_fn(count, r, |t, i| (desc.pi[i])((first + t) as f64)),
            h: DMatrix::from_fn(n, r, |b, i| (desc.rho[i])(b as f64)),
        }
    }

    /// `Hᵀ K1 H`, the `r×r` core linking `U` and `V`.
    pub fn core(&self, k1: &impl KernelOperator) -> DMatrix<f64> {
        self.h.transpose() * k1.apply(&self.h)
    }

    /// `ψ = Ψζ = U (Hᵀζ)`.
    pub fn psi(&self, zeta: &DVector<f64>) -> DVector<f64> {
        &self.u * (self.h.transpose() * zeta)
    }
}

/// `(U, V, H)` with `Ψ K1 Ψᵀ = U Vᵀ` on output times `first..first + count`.
pub fn base_generators(
    desc: &SeparableInputDesc,
    k1: &impl KernelOperator,
    first: usize,
    count: usize,
) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let f = InputFactors::new(desc, first, count, k1.dim());
    let v = &f.u * f.core(k1);
    (f.u, v, f.h)
}

/// Compositions `b_1 + ... + b_r = m`, lexicographic with the largest `b_1` first.
pub fn compositions(r: usize, m: usize) -> Vec<Vec<usize>> {
    fn rec(r: usize, m: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if r == 1 {
            prefix.push(m);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for b in (0..=m).rev() {
            prefix.push(b);
            rec(r - 1, m - b, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(r, m, &mut Vec::with_capacity(r), &mut out);
    out
}

/// `γ_m = C(r + m - 1, m)`.
pub fn power_rank(r: usize, m: usize) -> usize {
    let mut acc: u128 = 1;
    for i in 0..m {
        acc = acc * (r + i) as u128 / (i + 1) as u128;
    }
    acc as usize
}

pub fn separability_rank(order: usize, r: usize, with_offdiag: bool) -> usize {
    assert!(order >= 1 && r >= 1);
    if with_offdiag {
        power_rank(r, order) + 2 * (1..order).map(|m| power_rank(r, m)).sum::<usize>()
    } else {
        (1..=order).map(|m| power_rank(r, m)).sum()
    }
}

fn multinomial(parts: &[usize]) -> f64 {
    let mut total = 0;
    let mut acc = 1.0;
    for &b in parts {
        for i in 1..=b {
            total += 1;
            acc *= total as f64 / i as f64;
        }
    }
    acc
}

/// Hadamard powers `m = 1..=order` of `UVᵀ` as generator pairs; coefficients sit on the left.
pub fn hadamard_powers(
    u: &DMatrix<f64>,
    v: &DMatrix<f64>,
    order: usize,
) -> Vec<(DMatrix<f64>, DMatrix<f64>)> {
    let left = power_columns(u, order, true);
    let right = power_columns(v, order, false);
    left.into_iter().zip(right).collect()
}

pub fn hadamard_power_generators(
    u: &DMatrix<f64>,
    v: &DMatrix<f64>,
    m: usize,
) -> (DMatrix<f64>, DMatrix<f64>) {
    assert!(m >= 1);
    hadamard_powers(u, v, m).pop().unwrap()
}

/// Multinomial columns `Π_i w_i^{b_i}` for every degree `1..=order`.
pub fn power_columns(w: &DMatrix<f64>, order: usize, with_coeff: bool) -> Vec<DMatrix<f64>> {
    let (rows, r) = w.shape();
    // pow[i][k] = column i raised elementwise to k.
    let mut pow: Vec<Vec<Vec<f64>>> = Vec::with_capacity(r);
    for i in 0..r {
        let col: Vec<f64> = w.column(i).iter().copied().collect();
        let mut table = vec![vec![1.0; rows], col.clone()];
        for k in 2..=order {
            let prev = &table[k - 1];
            table.push(prev.iter().zip(&col).map(|(a, b)| a * b).collect());
        }
        pow.push(table);
    }
    (1..=order)
        .map(|m| {
            let comps = compositions(r, m);
            let mut out = DMatrix::zeros(rows, comps.len());
            for (c, parts) in comps.iter().enumerate() {
                let coeff = if with_coeff { multinomial(parts) } else { 1.0 };
                let mut dst = out.column_mut(c);
                dst.fill(coeff);
                for (i, &b) in parts.iter().enumerate() {
                    if b == 0 {
                        continue;
                    }
                    for (d, p) in dst.iter_mut().zip(&pow[i][b]) {
                        *d *= p;
                    }
                }
            }
            out
        })
        .collect()
}

/// `η_m = Σ_{ℓ>=m} a_ℓ ψ^{ℓ-m}` for `m = 1..=M`.
pub fn eta_vectors(psi: &DVector<f64>, a: &[f64]) -> Vec<DVector<f64>> {
    let order = a.len();
    let mut out = vec![DVector::zeros(psi.len()); order];
    out[order - 1] = DVector::from_element(psi.len(), a[order - 1]);
    for m in (0..order - 1).rev() {
        let next = out[m + 1].component_mul(psi);
        out[m] = next.add_scalar(a[m]);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Left,
    Right,
}

fn assemble_side(
    powers: &[DMatrix<f64>],
    psi: &DVector<f64>,
    a: &[f64],
    structure: BlockStructure,
    side: Side,
) -> DMatrix<f64> {
    let order = a.len();
    assert_eq!(powers.len(), order, "need one power block per degree");
    let rows = psi.len();
    let width: usize = match structure {
        BlockStructure::Full => {
            powers[order - 1].ncols()
                + 2 * powers[..order - 1].iter().map(|p| p.ncols()).sum::<usize>()
        }
        BlockStructure::Diagonal => powers.iter().map(|p| p.ncols()).sum(),
    };
    let mut out = DMatrix::zeros(rows, width);
    let mut col = 0;
    let mut put = |block: &DMatrix<f64>, weight: &dyn Fn(usize) -> f64| {
        for c in 0..block.ncols() {
            let src = block.column(c);
            let mut dst = out.column_mut(col);
            for t in 0..rows {
                dst[t] = src[t] * weight(t);
            }
            col += 1;
        }
    };
    match structure {
        BlockStructure::Full => {
            let eta = eta_vectors(psi, a);
            let sign = if side == Side::Left { -1.0 } else { 1.0 };
            for m in 0..order - 1 {
                put(&powers[m], &|t| eta[m][t]);
                put(&powers[m], &|t| sign * psi[t] * eta[m + 1][t]);
            }
            let last = if side == Side::Left {
                a[order - 1] * a[order - 1]
            } else {
                1.0
            };
            put(&powers[order - 1], &|_| last);
        }
        BlockStructure::Diagonal => {
            for m in 0..order {
                let w = if side == Side::Left { a[m] * a[m] } else { 1.0 };
                put(&powers[m], &|_| w);
            }
        }
    }
    out
}

/// `Ū` from the coefficient-carrying power blocks `U_m` and `ψ`.
pub fn left_generators(
    u_powers: &[DMatrix<f64>],
    psi: &DVector<f64>,
    a: &[f64],
    structure: BlockStructure,
) -> DMatrix<f64> {
    assemble_side(u_powers, psi, a, structure, Side::Left)
}

/// `V̄` from the plain power blocks `V_m` and `ψ`.
pub fn right_generators(
    v_powers: &[DMatrix<f64>],
    psi: &DVector<f64>,
    a: &[f64],
    structure: BlockStructure,
) -> DMatrix<f64> {
    assemble_side(v_powers, psi, a, structure, Side::Right)
}

#[derive(Debug, Clone)]
pub struct GeneratorPair {
    pub u_bar: DMatrix<f64>,
    pub v_bar: DMatrix<f64>,
}

impl GeneratorPair {
    pub fn gamma(&self) -> usize {
        self.u_bar.ncols()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        &self.u_bar * self.v_bar.transpose()
    }
}

pub fn assemble_q_generators(
    u: &DMatrix<f64>,
    v: &DMatrix<f64>,
    psi: &DVector<f64>,
    a: &[f64],
    structure: BlockStructure,
) -> GeneratorPair {
    let order = a.len();
    let up = power_columns(u, order, true);
    let vp = power_columns(v, order, false);
    GeneratorPair {
        u_bar: left_generators(&up, psi, a, structure),
        v_bar: right_generators(&vp, psi, a, structure),
    }
}

/// Factorization of `S = ŪV̄ᵀ + σ²I`.
///
/// With the thin QR `Ū = Q_u R_u`, the symmetric `ŪV̄ᵀ` equals `Q_u M Q_uᵀ` where
/// `M = R_u V̄ᵀ Q_u`, so `S⁻¹ = (I - Q_uQ_uᵀ)/σ² + Q_u (M + σ²I)⁻¹ Q_uᵀ` and only the small
/// SPD matrix `M + σ²I` is factored. Householder QR keeps `Q_u` orthonormal even when the
/// generator columns are nearly collinear.
#[derive(Debug, Clone)]
pub struct WoodburyFactor {
    pub gen: GeneratorPair,
    pub sigma2: f64,
    basis: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    log_det: f64,
}

impl WoodburyFactor {
    pub fn new(gen: GeneratorPair, sigma2: f64) -> Result<Self> {
        let n = gen.u_bar.nrows();
        if gen.v_bar.shape() != gen.u_bar.shape() {
            return Err(VolterraError::DimensionMismatch(
                "generators must have equal shapes".into(),
            ));
        }
        if !(sigma2 > 0.0) {
            return Err(VolterraError::InvalidArgument(
                "sigma2 must be positive".into(),
            ));
        }
        if gen
            .u_bar
            .iter()
            .chain(gen.v_bar.iter())
            .any(|v| !v.is_finite())
        {
            return Err(VolterraError::NonFinite("generators"));
        }
        let qr = gen.u_bar.clone().qr();
        let basis = qr.q();
        let k = basis.ncols();
        let m = qr.r() * (gen.v_bar.transpose() * &basis);
        let mut core = (&m + m.transpose()) * 0.5;
        for i in 0..k {
            core[(i, i)] += sigma2;
        }
        let chol = Cholesky::new(core).ok_or(VolterraError::NotPositiveDefinite)?;
        let log_det = (n - k) as f64 * sigma2.ln()
            + 2.0
                * chol
                    .l_dirty()
                    .diagonal()
                    .iter()
                    .map(|d| d.ln())
                    .sum::<f64>();
        Ok(Self {
            gen,
            sigma2,
            basis,
            chol,
            log_det,
        })
    }

    pub fn len(&self) -> usize {
        self.gen.u_bar.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// `V̄ᵀ S⁻¹ v`, which equals `(σ²I + V̄ᵀŪ)⁻¹ V̄ᵀ v`.
    pub fn core_weights(&self, v: &DVector<f64>) -> DVector<f64> {
        self.gen.v_bar.transpose() * self.solve(v)
    }

    /// `S⁻¹ v`.
    pub fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        let (w, r) = self.split(v);
        r / self.sigma2 + &self.basis * self.chol.solve(&w)
    }

    /// `vᵀ S⁻¹ v`.
    pub fn quad_form(&self, v: &DVector<f64>) -> f64 {
        let (w, r) = self.split(v);
        r.norm_squared() / self.sigma2 + w.dot(&self.chol.solve(&w))
    }

    /// Coordinates in the generator basis and the orthogonal residual.
    fn split(&self, v: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let w = self.basis.transpose() * v;
        let r = v - &self.basis * &w;
        (w, r)
    }
}

/// `Yᵀ S⁻¹ Y + log det S` with `S = ŪV̄ᵀ + σ²I`.
pub fn eb_cost_fast(gen: &GeneratorPair, y: &DVector<f64>, sigma2: f64) -> Result<f64> {
    let f = WoodburyFactor::new(gen.clone(), sigma2)?;
    let cost = f.quad_form(y) + f.log_det();
    if cost.is_finite() {
        Ok(cost)
    } else {
        Err(VolterraError::NonFinite("EB cost"))
    }
}

/// `h0 + Ū_test C⁻¹ V̄ᵀ Y` for test-side generator rows `u_cross`.
pub fn predict_fast(
    u_cross: &DMatrix<f64>,
    gen: &GeneratorPair,
    y: &DVector<f64>,
    sigma2: f64,
    h0: f64,
) -> Result<DVector<f64>> {
    let f = WoodburyFactor::new(gen.clone(), sigma2)?;
    Ok(predict_with(&f, u_cross, y, h0))
}

pub fn predict_with(
    f: &WoodburyFactor,
    u_cross: &DMatrix<f64>,
    y: &DVector<f64>,
    h0: f64,
) -> DVector<f64> {
    let z = f.core_weights(y);
    (u_cross * z).add_scalar(h0)
}
