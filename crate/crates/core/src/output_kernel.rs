//! Output kernel matrices `Q = conv2(K2, Q^w)` built without forming the prior covariance.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::error::{Result, VolterraError};
use crate::kernels::{
    dc_gram, zeta_vector, BlockStructure, DcParams, Kappa2, KernelHyper, DENSE_LIMIT,
};
use crate::multi_index::block_len;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitPolicy {
    PreWindowZero,
    #[default]
    TrimToKnown,
}

/// Lagged-input matrix with `psi[(i, j)] = u(t_i - j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressorMatrix {
    pub psi: DMatrix<f64>,
    pub init_policy: InitPolicy,
    /// One-based index of the first output row (`first_time + 1`).
    pub t_offset: usize,
}

impl RegressorMatrix {
    /// Zero-based time index of row 0.
    pub fn first_time(&self) -> usize {
        self.t_offset - 1
    }

    pub fn rows(&self) -> usize {
        self.psi.nrows()
    }

    pub fn memory(&self) -> usize {
        self.psi.ncols()
    }
}

/// Rows `first..first + count` of the lagged-input matrix; samples before index 0 are zero.
pub fn regressor_rows(u: &[f64], n: usize, first: usize, count: usize) -> DMatrix<f64> {
    DMatrix::from_fn(count, n, |i, j| {
        let t = first + i;
        if t >= j && t - j < u.len() {
            u[t - j]
        } else {
            0.0
        }
    })
}

/// First output time usable under `policy`.
pub fn first_usable_time(n: usize, policy: InitPolicy) -> usize {
    match policy {
        InitPolicy::PreWindowZero => 0,
        InitPolicy::TrimToKnown => n.saturating_sub(1),
    }
}

pub fn build_regressor(u: &[f64], n: usize, policy: InitPolicy) -> Result<RegressorMatrix> {
    if n == 0 {
        return Err(VolterraError::InvalidArgument(
            "memory n must be >= 1".into(),
        ));
    }
    if u.len() < n && policy == InitPolicy::TrimToKnown || u.is_empty() {
        return Err(VolterraError::InsufficientData {
            len: u.len(),
            memory: n,
        });
    }
    let first = first_usable_time(n, policy);
    Ok(RegressorMatrix {
        psi: regressor_rows(u, n, first, u.len() - first),
        init_policy: policy,
        t_offset: first + 1,
    })
}

/// `Q^w` between two row sets given `X = Ψ_l K1 Ψ_rᵀ` and the per-side `ψ = Ψζ`.
///
/// `Q^w(t,s) = Σ_m a_m X(t,s)^m (a_m + A_m(t) + A_m(s))` with
/// `A_m = Σ_{p>m} a_p ψ^{p-m}`; the diagonal structure keeps only `a_m² X^m`.
pub fn accumulate_qw(
    mut x: DMatrix<f64>,
    psi_l: &DVector<f64>,
    psi_r: &DVector<f64>,
    a: &[f64],
    structure: BlockStructure,
) -> DMatrix<f64> {
    let order = a.len();
    let tails_l = tail_sums(psi_l, a);
    let tails_r = tail_sums(psi_r, a);
    let (rows, cols) = x.shape();
    let sq: Vec<f64> = a.iter().map(|v| v * v).collect();
    for s in 0..cols {
        let col = x.column_mut(s);
        for (t, entry) in col.into_iter().enumerate() {
            let base = *entry;
            let mut pw = base;
            let mut acc = 0.0;
            for m in 0..order {
                acc += match structure {
                    BlockStructure::Full => {
                        pw * a[m] * (a[m] + tails_l[m * rows + t] + tails_r[m * cols + s])
                    }
                    BlockStructure::Diagonal => pw * sq[m],
                };
                pw *= base;
            }
            *entry = acc;
        }
    }
    x
}

/// `A_m(t)` for `m = 1..M`, stored degree-major.
fn tail_sums(psi: &DVector<f64>, a: &[f64]) -> Vec<f64> {
    let order = a.len();
    let len = psi.len();
    let mut out = vec![0.0; order * len];
    // Horner: η_M = a_M, η_m = a_m + ψ η_{m+1}, A_m = ψ η_{m+1}.
    for t in 0..len {
        let p = psi[t];
        let mut eta = a[order - 1];
        for m in (0..order - 1).rev() {
            out[m * len + t] = p * eta;
            eta = a[m] + p * eta;
        }
    }
    out
}

/// `Q^w` for one regressor matrix: `X = ΨK1Ψᵀ`, `ψ = Ψζ`.
pub fn build_qw(
    psi: &DMatrix<f64>,
    k1: &DMatrix<f64>,
    zeta: &DVector<f64>,
    a: &[f64],
    structure: BlockStructure,
) -> DMatrix<f64> {
    build_qw_cross(psi, psi, k1, zeta, a, structure)
}

pub fn build_qw_cross(
    psi_l: &DMatrix<f64>,
    psi_r: &DMatrix<f64>,
    k1: &DMatrix<f64>,
    zeta: &DVector<f64>,
    a: &[f64],
    structure: BlockStructure,
) -> DMatrix<f64> {
    let b = psi_l * k1;
    let x = b * psi_r.transpose();
    let zl = psi_l * zeta;
    let zr = psi_r * zeta;
    accumulate_qw(x, &zl, &zr, a, structure)
}

/// Direct convolution is used while `rows · cols · n²` stays below this many multiply-adds
/// or below the estimated FFT cost.
pub const CONV_DIRECT_LIMIT: usize = 1 << 14;

fn prefer_direct(rows: usize, cols: usize, n: usize) -> bool {
    let direct = (rows * cols) as f64 * (n * n) as f64;
    if direct < CONV_DIRECT_LIMIT as f64 {
        return true;
    }
    let (sr, sc) = (fft_size(rows + n - 1), fft_size(cols + n - 1));
    let area = (sr * sc) as f64;
    direct < 30.0 * area * area.log2()
}

/// `Q(t,s) = Σ_{ξ1,ξ2<n} K2(ξ1,ξ2) Q^w(t-ξ1, s-ξ2)` with zeros outside `Q^w`.
pub fn conv2_q(k2: &DMatrix<f64>, qw: &DMatrix<f64>) -> DMatrix<f64> {
    let n = k2.nrows();
    if is_unit_delta(k2) {
        return qw.clone();
    }
    if prefer_direct(qw.nrows(), qw.ncols(), n) {
        conv2_direct(k2, qw)
    } else {
        conv2_fft(k2, qw)
    }
}

/// `conv2_q` for a DC κ2, using `κ2(k + d, k) = c²·e^{-(α+β)d}·e^{-2αk}`: the windowed
/// diagonal sums for lag gap `d` are built up by adding one shifted copy of `Q^w` per gap.
pub fn conv2_dc(p: &DcParams, n: usize, qw: &DMatrix<f64>) -> DMatrix<f64> {
    let (rows, cols) = qw.shape();
    let mut q = DMatrix::zeros(rows, cols);
    if n == 0 || rows == 0 || cols == 0 {
        return q;
    }
    let a = (-(p.alpha + p.beta)).exp();
    let b = (-2.0 * p.alpha).exp();
    let mut e = qw.clone();
    for d in (0..n).rev() {
        let j = n - 1 - d;
        if j > 0 && j < rows.min(cols) {
            let coef = b.powi(j as i32);
            for s in j..cols {
                let src = qw.column(s - j);
                let mut dst = e.column_mut(s);
                for t in j..rows {
                    dst[t] += coef * src[t - j];
                }
            }
        }
        let w = p.c * p.c * a.powi(d as i32);
        if d < rows {
            for s in 0..cols {
                let src = e.column(s);
                let mut dst = q.column_mut(s);
                for t in d..rows {
                    dst[t] += w * src[t - d];
                }
            }
        }
        if d > 0 && d < cols {
            for s in d..cols {
                let src = e.column(s - d);
                let mut dst = q.column_mut(s);
                for t in 0..rows {
                    dst[t] += w * src[t];
                }
            }
        }
    }
    q
}

/// `conv2_q` for any κ2, picking the DC shortcut when it applies.
pub fn conv2_kappa(k2: &Kappa2, n: usize, qw: &DMatrix<f64>) -> DMatrix<f64> {
    match k2 {
        Kappa2::Delta => qw.clone(),
        Kappa2::Dc(p) => conv2_dc(p, n, qw),
    }
}

fn is_unit_delta(k2: &DMatrix<f64>) -> bool {
    k2.iter()
        .enumerate()
        .all(|(k, &v)| if k == 0 { v == 1.0 } else { v == 0.0 })
}

pub fn conv2_direct(k2: &DMatrix<f64>, qw: &DMatrix<f64>) -> DMatrix<f64> {
    let (rows, cols) = qw.shape();
    let (kr, kc) = k2.shape();
    let mut out = DMatrix::zeros(rows, cols);
    for x2 in 0..kc {
        for x1 in 0..kr {
            let w = k2[(x1, x2)];
            if w == 0.0 {
                continue;
            }
            for s in x2..cols {
                let src = qw.column(s - x2);
                let mut dst = out.column_mut(s);
                for t in x1..rows {
                    dst[t] += w * src[t - x1];
                }
            }
        }
    }
    out
}

pub fn conv2_fft(k2: &DMatrix<f64>, qw: &DMatrix<f64>) -> DMatrix<f64> {
    let (rows, cols) = qw.shape();
    let (kr, kc) = k2.shape();
    if rows == 0 || cols == 0 {
        return qw.clone();
    }
    let pr = fft_size(rows + kr.saturating_sub(1));
    let pc = fft_size(cols + kc.saturating_sub(1));
    let mut planner = FftPlanner::<f64>::new();
    let plans = Plans {
        row_fwd: planner.plan_fft_forward(pc),
        col_fwd: planner.plan_fft_forward(pr),
        row_inv: planner.plan_fft_inverse(pc),
        col_inv: planner.plan_fft_inverse(pr),
    };

    let mut a = padded(qw, pr, pc);
    let mut b = padded(k2, pr, pc);
    let fa = forward2(&mut a, rows, pr, pc, &plans);
    let fb = forward2(&mut b, kr, pr, pc, &plans);
    let mut prod: Vec<Complex64> = fa.iter().zip(&fb).map(|(x, y)| x * y).collect();
    // `prod` is laid out column-major (pc rows of length pr).
    plans.col_inv.process(&mut prod);
    let mut back = transpose(&prod, pc, pr, rows);
    plans.row_inv.process(&mut back);
    let scale = 1.0 / (pr * pc) as f64;
    DMatrix::from_fn(rows, cols, |t, s| back[t * pc + s].re * scale)
}

struct Plans {
    row_fwd: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

/// Row-major zero-padded copy.
fn padded(m: &DMatrix<f64>, pr: usize, pc: usize) -> Vec<Complex64> {
    let mut buf = vec![Complex64::new(0.0, 0.0); pr * pc];
    for (s, col) in m.column_iter().enumerate() {
        for (t, v) in col.iter().enumerate() {
            buf[t * pc + s] = Complex64::new(*v, 0.0);
        }
    }
    buf
}

/// 2-D forward transform of a buffer whose rows past `nz_rows` are zero; returns the
/// spectrum transposed (pc rows of length pr).
fn forward2(
    buf: &mut [Complex64],
    nz_rows: usize,
    pr: usize,
    pc: usize,
    plans: &Plans,
) -> Vec<Complex64> {
    plans.row_fwd.process(&mut buf[..nz_rows * pc]);
    let mut t = transpose(buf, pr, pc, pc);
    plans.col_fwd.process(&mut t);
    t
}

/// Transposes a `rows×cols` row-major buffer, keeping only the first `keep` output rows.
fn transpose(buf: &[Complex64], rows: usize, cols: usize, keep: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); keep * rows];
    const BLOCK: usize = 32;
    for r0 in (0..rows).step_by(BLOCK) {
        for c0 in (0..keep).step_by(BLOCK) {
            for r in r0..(r0 + BLOCK).min(rows) {
                for c in c0..(c0 + BLOCK).min(keep) {
                    out[c * rows + r] = buf[r * cols + c];
                }
            }
        }
    }
    out
}

/// Smallest 5-smooth integer not below `min`.
pub fn fft_size(min: usize) -> usize {
    let mut n = min.max(1);
    loop {
        let mut k = n;
        for p in [2, 3, 5] {
            while k.is_multiple_of(p) {
                k /= p;
            }
        }
        if k == 1 {
            return n;
        }
        n += 1;
    }
}

/// Effective lag count of the Wiener–Hammerstein kernel.
pub fn effective_lags(h: &KernelHyper) -> usize {
    if h.k2.is_delta() {
        h.memory
    } else {
        2 * h.memory - 1
    }
}

/// Extra leading rows needed so the κ2 convolution sees every contributing regressor row.
pub fn burn_in(h: &KernelHyper) -> usize {
    effective_lags(h) - h.memory
}

/// A contiguous set of output times `first..first + count` of the series `u`.
#[derive(Debug, Clone, Copy)]
pub struct RowSpan<'a> {
    pub u: &'a [f64],
    pub first: usize,
    pub count: usize,
}

impl<'a> RowSpan<'a> {
    pub fn new(u: &'a [f64], first: usize, count: usize) -> Self {
        Self { u, first, count }
    }

    fn extended(&self, burn: usize) -> (usize, usize) {
        let start = self.first.saturating_sub(burn);
        (start, self.first - start)
    }
}

/// Output kernel between two row spans, `Q(t,s) = φ(t) P φ(s)ᵀ`.
pub fn output_kernel_between(h: &KernelHyper, left: RowSpan, right: RowSpan) -> DMatrix<f64> {
    let n = h.memory;
    let burn = burn_in(h);
    let (ls, lo) = left.extended(burn);
    let (rs, ro) = right.extended(burn);
    let psi_l = regressor_rows(left.u, n, ls, left.count + lo);
    let psi_r = regressor_rows(right.u, n, rs, right.count + ro);
    let k1 = dc_gram(n, &h.k1);
    let zeta = zeta_vector(n, &h.zeta, &h.k1);
    let qw = build_qw_cross(&psi_l, &psi_r, &k1, &zeta, &h.a, h.structure);
    match h.k2 {
        Kappa2::Delta => qw,
        Kappa2::Dc(_) => {
            let q = conv2_kappa(&h.k2, n, &qw);
            q.view((lo, ro), (left.count, right.count)).into_owned()
        }
    }
}

#[derive(Debug, Clone)]
pub struct OutputKernelMatrix {
    pub q: DMatrix<f64>,
    /// Zero-based time of row 0.
    pub first_time: usize,
    pub hyper: KernelHyper,
}

/// `Q` for the outputs of `u` usable under `policy`.
///
/// With a DC κ2 and `TrimToKnown`, the first `n - 1` usable times are dropped as well,
/// since their outputs depend on inputs before the record.
pub fn output_kernel(h: &KernelHyper, u: &[f64], policy: InitPolicy) -> Result<OutputKernelMatrix> {
    h.validate()?;
    let first = output_start(h, policy);
    if u.len() <= first {
        return Err(VolterraError::InsufficientData {
            len: u.len(),
            memory: effective_lags(h),
        });
    }
    let span = RowSpan::new(u, first, u.len() - first);
    Ok(OutputKernelMatrix {
        q: output_kernel_between(h, span, span),
        first_time: first,
        hyper: h.clone(),
    })
}

/// First output time used for training under `policy`.
pub fn output_start(h: &KernelHyper, policy: InitPolicy) -> usize {
    match policy {
        InitPolicy::PreWindowZero => 0,
        InitPolicy::TrimToKnown => effective_lags(h) - 1,
    }
}

/// Cross block between test and training regressors, each given as raw lag matrices.
pub fn build_cross_q(
    psi_test: &DMatrix<f64>,
    psi_train: &DMatrix<f64>,
    k1: &DMatrix<f64>,
    k2: &DMatrix<f64>,
    zeta: &DVector<f64>,
    a: &[f64],
    structure: BlockStructure,
) -> DMatrix<f64> {
    let qw = build_qw_cross(psi_test, psi_train, k1, zeta, a, structure);
    conv2_q(k2, &qw)
}

/// Monomial regressor `Φ` with degree blocks `1..=order` in row-major multi-index order.
pub fn dense_phi(psi: &DMatrix<f64>, order: usize) -> Result<DMatrix<f64>> {
    let lags = psi.ncols();
    let top = block_len(lags, order).unwrap_or(usize::MAX);
    if top > DENSE_LIMIT {
        return Err(VolterraError::SizeExceeded {
            required: top,
            limit: DENSE_LIMIT,
        });
    }
    let width: usize = (1..=order).map(|m| block_len(lags, m).unwrap()).sum();
    let mut out = DMatrix::zeros(psi.nrows(), width);
    let mut prev: Vec<f64> = Vec::new();
    let mut cur: Vec<f64> = Vec::new();
    for r in 0..psi.nrows() {
        let row: Vec<f64> = psi.row(r).iter().copied().collect();
        prev.clear();
        prev.extend_from_slice(&row);
        let mut col = 0;
        for m in 1..=order {
            if m > 1 {
                cur.clear();
                for &p in &prev {
                    for &x in &row {
                        cur.push(p * x);
                    }
                }
                std::mem::swap(&mut prev, &mut cur);
            }
            for &v in &prev {
                out[(r, col)] = v;
                col += 1;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{dense_kernel_matrix, DcParams, ZetaSpec};
    use approx::assert_relative_eq;

    fn hyper(a: Vec<f64>, n: usize, k2: Kappa2) -> KernelHyper {
        KernelHyper {
            a,
            h0: 0.0,
            k1: DcParams::unit(0.35, 0.2),
            k2,
            zeta: ZetaSpec::exp_decay(),
            structure: BlockStructure::Full,
            sigma2: 0.1,
            memory: n,
        }
    }

    #[test]
    fn regressor_examples() {
        let u = [1.0, 2.0, 3.0];
        let pw = build_regressor(&u, 2, InitPolicy::PreWindowZero).unwrap();
        assert_eq!(
            pw.psi,
            DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 2.0, 1.0, 3.0, 2.0])
        );
        let tr = build_regressor(&u, 2, InitPolicy::TrimToKnown).unwrap();
        assert_eq!(tr.psi, DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 3.0, 2.0]));
        assert_eq!(tr.t_offset, 2);
        assert!(matches!(
            build_regressor(&u, 4, InitPolicy::TrimToKnown),
            Err(VolterraError::InsufficientData { .. })
        ));
    }

    #[test]
    fn impulse_regressor_is_banded() {
        let mut u = vec![0.0; 6];
        u[0] = 1.0;
        let r = build_regressor(&u, 3, InitPolicy::PreWindowZero).unwrap();
        for t in 0..6 {
            for j in 0..3 {
                assert_eq!(r.psi[(t, j)], if t == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn qw_order_one_and_zero() {
        let u: Vec<f64> = (0..7).map(|k| (k as f64 * 0.7).sin()).collect();
        let r = build_regressor(&u, 3, InitPolicy::TrimToKnown).unwrap();
        let h = hyper(vec![1.3], 3, Kappa2::Delta);
        let k1 = dc_gram(3, &h.k1);
        let z = zeta_vector(3, &h.zeta, &h.k1);
        let q = build_qw(&r.psi, &k1, &z, &h.a, h.structure);
        let expect = &r.psi * &k1 * r.psi.transpose() * 1.69;
        assert_relative_eq!(q, expect, epsilon = 1e-13);
        let q0 = build_qw(&r.psi, &k1, &z, &[0.0, 0.0], h.structure);
        assert_eq!(q0.amax(), 0.0);
    }

    #[test]
    fn qw_matches_phi_p_phi() {
        let u = [0.3, -1.2, 0.8, 0.5, -0.4, 1.1];
        let h = hyper(vec![0.9, -0.6], 2, Kappa2::Delta);
        let r = build_regressor(&u[..5], 2, InitPolicy::TrimToKnown).unwrap();
        let k1 = dc_gram(2, &h.k1);
        let z = zeta_vector(2, &h.zeta, &h.k1);
        let q = build_qw(&r.psi, &k1, &z, &h.a, h.structure);
        let phi = dense_phi(&r.psi, 2).unwrap();
        let oracle = &phi * dense_kernel_matrix(&h).unwrap() * phi.transpose();
        assert_relative_eq!(q, oracle, max_relative = 1e-12, epsilon = 1e-14);
    }

    #[test]
    fn conv2_cases() {
        let qw = DMatrix::from_fn(5, 5, |i, j| ((i * 5 + j) as f64 * 0.37).cos());
        let mut delta = DMatrix::zeros(2, 2);
        delta[(0, 0)] = 1.0;
        assert_eq!(conv2_q(&delta, &qw), qw);
        assert_eq!(conv2_direct(&delta, &qw), qw);
        let zero = DMatrix::zeros(2, 2);
        assert_eq!(conv2_q(&zero, &qw).amax(), 0.0);

        let k2 = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.25, 2.0]);
        let mut oracle = DMatrix::zeros(5, 5);
        for t in 0..5 {
            for s in 0..5 {
                for x1 in 0..2 {
                    for x2 in 0..2 {
                        if t >= x1 && s >= x2 {
                            oracle[(t, s)] += k2[(x1, x2)] * qw[(t - x1, s - x2)];
                        }
                    }
                }
            }
        }
        assert_relative_eq!(conv2_direct(&k2, &qw), oracle, epsilon = 1e-14);
        assert_relative_eq!(conv2_fft(&k2, &qw), oracle, epsilon = 1e-13);

        let p = DcParams::new(1.7, 0.3, 0.45).unwrap();
        for (r, c, n) in [(5, 5, 2), (9, 6, 4), (4, 7, 6), (12, 12, 12)] {
            let w = DMatrix::from_fn(r, c, |i, j| ((i * 3 + j * 7) as f64 * 0.21).sin());
            let g = dc_gram(n, &p);
            assert_relative_eq!(
                conv2_dc(&p, n, &w),
                conv2_direct(&g, &w),
                max_relative = 1e-12,
                epsilon = 1e-13
            );
        }
    }

    #[test]
    fn fft_sizes_are_smooth() {
        assert_eq!(fft_size(7), 8);
        assert_eq!(fft_size(378), 384);
        assert_eq!(fft_size(1), 1);
    }

    #[test]
    fn dense_phi_examples() {
        let psi = DMatrix::from_row_slice(1, 2, &[2.0, 3.0]);
        let phi = dense_phi(&psi, 2).unwrap();
        assert_eq!(
            phi.row(0).iter().copied().collect::<Vec<_>>(),
            vec![2.0, 3.0, 4.0, 6.0, 6.0, 9.0]
        );
        let ones = DMatrix::from_element(4, 3, 1.0);
        assert!(dense_phi(&ones, 3).unwrap().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn cross_kernel_is_consistent() {
        let u: Vec<f64> = (0..12).map(|k| (k as f64 * 1.3).cos()).collect();
        let h = hyper(vec![0.8, 0.4], 3, Kappa2::Dc(DcParams::unit(0.5, 0.1)));
        let full = output_kernel(&h, &u, InitPolicy::TrimToKnown).unwrap();
        assert_eq!(full.first_time, 4);
        let span = RowSpan::new(&u, 4, 8);
        let cross = output_kernel_between(&h, RowSpan::new(&u, 6, 3), span);
        assert_relative_eq!(cross, full.q.rows(2, 3).into_owned(), epsilon = 1e-13);
    }

    #[test]
    fn zero_test_input_gives_zero_row() {
        let u: Vec<f64> = (0..10).map(|k| (k as f64).sin()).collect();
        let zeros = vec![0.0; 10];
        let h = hyper(vec![0.8, 0.4], 3, Kappa2::Dc(DcParams::unit(0.5, 0.1)));
        let c = output_kernel_between(&h, RowSpan::new(&zeros, 0, 10), RowSpan::new(&u, 0, 10));
        assert_eq!(c.amax(), 0.0);
    }
}
