//! Least squares, ridge and lasso on (optionally polynomial) designs.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::FitDiagnostics;

const FALLBACK_RIDGE: f64 = 1e-6;
const LASSO_TOL: f64 = 1e-6;
const LASSO_MAX_SWEEPS: usize = 10_000;

/// Bias column followed by every monomial of total degree `1..=degree`,
/// graded then lexicographic in the feature indices.
pub fn polynomial_features(x: ArrayView2<'_, f64>, degree: usize) -> Array2<f64> {
    let terms = monomials(x.ncols(), degree);
    let mut out = Array2::ones((x.nrows(), terms.len() + 1));
    for (t, idx) in terms.iter().enumerate() {
        for (r, row) in x.axis_iter(Axis(0)).enumerate() {
            out[[r, t + 1]] = idx.iter().map(|&j| row[j]).product();
        }
    }
    out
}

fn monomials(d: usize, degree: usize) -> Vec<Vec<usize>> {
    let mut all = Vec::new();
    let mut level: Vec<Vec<usize>> = vec![Vec::new()];
    for _ in 0..degree {
        let mut next = Vec::new();
        for m in &level {
            let start = m.last().copied().unwrap_or(0);
            for j in start..d {
                let mut e = m.clone();
                e.push(j);
                next.push(e);
            }
        }
        all.extend(next.iter().cloned());
        level = next;
    }
    all
}

#[derive(Debug, Clone)]
pub(crate) struct LinearFit {
    pub intercept: f64,
    pub coef: Vec<f64>,
    degree: usize,
}

impl LinearFit {
    pub(crate) fn predict(&self, x: ArrayView2<'_, f64>) -> Array1<f64> {
        let design = self.expand(x);
        let w = ArrayView1::from(&self.coef);
        design.dot(&w) + self.intercept
    }

    fn expand(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        if self.degree == 1 {
            x.to_owned()
        } else {
            strip_bias(polynomial_features(x, self.degree))
        }
    }
}

fn strip_bias(design: Array2<f64>) -> Array2<f64> {
    design.slice(ndarray::s![.., 1..]).to_owned()
}

fn to_dmatrix(a: ArrayView2<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

/// Ordinary least squares through an SVD; a rank-deficient design falls
/// back to a tiny ridge penalty.
pub(crate) fn fit_least_squares(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    degree: usize,
) -> (LinearFit, FitDiagnostics) {
    let design = polynomial_features(x, degree);
    let a = to_dmatrix(design.view());
    let b = DVector::from_iterator(y.len(), y.iter().copied());
    let svd = a.clone().svd(true, true);
    let s_max = svd.singular_values.max();
    let tol = s_max * (a.nrows().max(a.ncols()) as f64) * f64::EPSILON;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    if rank < a.ncols() {
        let (mut fit, mut diag) = ridge_on(strip_bias(design).view(), y, FALLBACK_RIDGE);
        fit.degree = degree;
        diag.notes.push(format!(
            "design rank {rank} < {} columns; ridge fallback lambda={FALLBACK_RIDGE}",
            a.ncols()
        ));
        return (fit, diag);
    }
    let w = svd
        .solve(&b, tol)
        .expect("both singular vector sets were computed");
    (
        LinearFit {
            intercept: w[0],
            coef: w.iter().skip(1).copied().collect(),
            degree,
        },
        FitDiagnostics::closed_form(),
    )
}

pub(crate) fn fit_ridge(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    lambda: f64,
) -> (LinearFit, FitDiagnostics) {
    ridge_on(x, y, lambda)
}

/// Ridge with an unpenalised intercept, solved on centred data.
fn ridge_on(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, lambda: f64) -> (LinearFit, FitDiagnostics) {
    let (xc, x_mean, yc, y_mean) = centre(x, y);
    let p = xc.ncols();
    let a = to_dmatrix(xc.view());
    let mut gram = a.transpose() * &a;
    for i in 0..p {
        gram[(i, i)] += lambda;
    }
    let rhs = a.transpose() * DVector::from_iterator(yc.len(), yc.iter().copied());
    let w = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => gram
            .pseudo_inverse(1e-12)
            .expect("pseudo-inverse of a symmetric matrix")
            * rhs,
    };
    let coef: Vec<f64> = w.iter().copied().collect();
    let intercept = y_mean - coef.iter().zip(&x_mean).map(|(w, m)| w * m).sum::<f64>();
    (
        LinearFit {
            intercept,
            coef,
            degree: 1,
        },
        FitDiagnostics::closed_form(),
    )
}

fn centre(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>) -> (Array2<f64>, Vec<f64>, Array1<f64>, f64) {
    let x_mean = x.mean_axis(Axis(0)).expect("at least one row");
    let xc = &x - &x_mean;
    let y_mean = y.mean().expect("at least one row");
    (xc, x_mean.to_vec(), &y - y_mean, y_mean)
}

/// Coordinate descent on `(1/2n)·||y − Xw||² + λ·||w||₁`.
pub(crate) fn fit_lasso(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    lambda: f64,
) -> (LinearFit, FitDiagnostics) {
    let (xc, x_mean, yc, y_mean) = centre(x, y);
    let n = xc.nrows() as f64;
    let p = xc.ncols();
    let norms: Vec<f64> = xc.columns().into_iter().map(|c| c.dot(&c) / n).collect();
    let mut w = vec![0.0; p];
    let mut resid = yc.clone();
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < LASSO_MAX_SWEEPS {
        sweeps += 1;
        let mut max_delta = 0.0f64;
        for j in 0..p {
            if norms[j] <= 0.0 {
                continue;
            }
            let col = xc.column(j);
            let rho = col.dot(&resid) / n + norms[j] * w[j];
            let new = soft_threshold(rho, lambda) / norms[j];
            let delta = new - w[j];
            if delta != 0.0 {
                resid.scaled_add(-delta, &col);
                w[j] = new;
            }
            max_delta = max_delta.max(delta.abs());
        }
        if max_delta < LASSO_TOL {
            converged = true;
            break;
        }
    }
    let intercept = y_mean - w.iter().zip(&x_mean).map(|(w, m)| w * m).sum::<f64>();
    (
        LinearFit {
            intercept,
            coef: w,
            degree: 1,
        },
        FitDiagnostics {
            converged,
            iterations: sweeps,
            notes: Vec::new(),
        },
    )
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}
