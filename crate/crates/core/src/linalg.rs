//! Factorizations of the output covariance `S = Q + σ²I`.

use faer::dyn_stack::{GlobalPodBuffer, PodStack};
use faer::linalg::cholesky::llt::compute::{cholesky_in_place, cholesky_in_place_req};
use faer::linalg::triangular_solve::{
    solve_lower_triangular_in_place, solve_upper_triangular_in_place,
};
use faer::{Mat, Parallelism};
use nalgebra::{DMatrix, DVector};

use crate::error::{Result, VolterraError};
use crate::separable::WoodburyFactor;

/// Solves and log-determinants of a symmetric positive definite covariance.
pub trait CovarianceFactor {
    fn len(&self) -> usize;
    fn solve(&self, v: &DVector<f64>) -> DVector<f64>;
    fn log_det(&self) -> f64;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn quad_form(&self, v: &DVector<f64>) -> f64 {
        v.dot(&self.solve(v))
    }
}

/// Dense Cholesky factor `S = LLᵀ`, computed serially.
#[derive(Debug, Clone)]
pub struct DenseCholesky {
    l: Mat<f64>,
    log_det: f64,
}

impl DenseCholesky {
    /// Factors `s`; only its lower triangle is read.
    pub fn new(s: DMatrix<f64>) -> Result<Self> {
        let n = s.nrows();
        if s.ncols() != n {
            return Err(VolterraError::DimensionMismatch(
                "covariance must be square".into(),
            ));
        }
        let mut l = Mat::<f64>::zeros(n, n);
        for j in 0..n {
            let src = s.column(j);
            for i in j..n {
                let v = src[i];
                if !v.is_finite() {
                    return Err(VolterraError::NonFinite("covariance"));
                }
                l.write(i, j, v);
            }
        }
        drop(s);
        let par = Parallelism::None;
        let req = cholesky_in_place_req::<f64>(n, par, Default::default()).map_err(|_| {
            VolterraError::SizeExceeded {
                required: n,
                limit: n,
            }
        })?;
        let mut buf = GlobalPodBuffer::new(req);
        cholesky_in_place(
            l.as_mut(),
            Default::default(),
            par,
            PodStack::new(&mut buf),
            Default::default(),
        )
        .map_err(|_| VolterraError::NotPositiveDefinite)?;
        let log_det = 2.0 * (0..n).map(|i| l.read(i, i).ln()).sum::<f64>();
        if !log_det.is_finite() {
            return Err(VolterraError::NonFinite("log determinant"));
        }
        Ok(Self { l, log_det })
    }
}

impl CovarianceFactor for DenseCholesky {
    fn len(&self) -> usize {
        self.l.nrows()
    }

    fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        let n = self.len();
        let mut rhs = Mat::<f64>::from_fn(n, 1, |i, _| v[i]);
        solve_lower_triangular_in_place(self.l.as_ref(), rhs.as_mut(), Parallelism::None);
        solve_upper_triangular_in_place(
            self.l.as_ref().transpose(),
            rhs.as_mut(),
            Parallelism::None,
        );
        DVector::from_fn(n, |i, _| rhs.read(i, 0))
    }

    fn log_det(&self) -> f64 {
        self.log_det
    }
}

impl CovarianceFactor for WoodburyFactor {
    fn len(&self) -> usize {
        WoodburyFactor::len(self)
    }

    fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        WoodburyFactor::solve(self, v)
    }

    fn log_det(&self) -> f64 {
        WoodburyFactor::log_det(self)
    }

    fn quad_form(&self, v: &DVector<f64>) -> f64 {
        WoodburyFactor::quad_form(self, v)
    }
}

/// Least-squares solution of `A x ≈ b` through a thin SVD.
pub fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let svd = a.clone().svd(true, true);
    let tol = f64::EPSILON * a.nrows().max(a.ncols()) as f64 * svd.singular_values.max();
    svd.solve(b, tol)
        .map_err(|e| VolterraError::InvalidArgument(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cholesky_matches_nalgebra() {
        let n = 30;
        let a = DMatrix::from_fn(n, n, |i, j| (-(0.2 * (i as f64 - j as f64).abs())).exp())
            + DMatrix::identity(n, n) * 0.5;
        let v = DVector::from_fn(n, |i, _| (i as f64 * 0.3).sin());
        let ours = DenseCholesky::new(a.clone()).unwrap();
        let theirs = a.clone().cholesky().unwrap();
        assert_relative_eq!(ours.solve(&v), theirs.solve(&v), max_relative = 1e-12);
        assert_relative_eq!(
            ours.log_det(),
            theirs.determinant().ln(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn indefinite_is_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            DenseCholesky::new(a),
            Err(VolterraError::NotPositiveDefinite)
        ));
    }

    #[test]
    fn least_squares_recovers_line() {
        let a = DMatrix::from_fn(5, 2, |i, j| if j == 0 { 1.0 } else { i as f64 });
        let b = DVector::from_fn(5, |i, _| 2.0 + 3.0 * i as f64);
        let x = least_squares(&a, &b).unwrap();
        assert_relative_eq!(x, DVector::from_vec(vec![2.0, 3.0]), epsilon = 1e-12);
    }
}
