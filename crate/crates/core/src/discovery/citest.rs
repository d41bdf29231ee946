//! Conditional-independence tests.

use nalgebra::DMatrix;
use ndarray::ArrayView2;
use statrs::function::erf::erfc;

use super::DiscoveryError;
use crate::graph::Dag;

/// A test of `X_i ⊥ X_j | X_cond` reporting a p-value.
pub trait CiTest: Sync {
    fn n_vars(&self) -> usize;
    fn p_value(&self, i: usize, j: usize, cond: &[usize]) -> Result<f64, DiscoveryError>;
}

/// Gaussian partial-correlation test on Fisher's z transform.
#[derive(Debug, Clone)]
pub struct FisherZ {
    corr: DMatrix<f64>,
    n: usize,
}

const R_CLAMP: f64 = 1.0 - 1e-12;

impl FisherZ {
    /// Precompute the correlation matrix of the columns of `data`.
    /// Zero-variance columns are uncorrelated with everything.
    pub fn new(data: ArrayView2<'_, f64>) -> Self {
        let n = data.nrows();
        let d = data.ncols();
        let means: Vec<f64> = data.columns().into_iter().map(|c| c.sum() / n.max(1) as f64).collect();
        let mut cov = DMatrix::<f64>::zeros(d, d);
        for row in data.rows() {
            for a in 0..d {
                let da = row[a] - means[a];
                for b in a..d {
                    cov[(a, b)] += da * (row[b] - means[b]);
                }
            }
        }
        let mut corr = DMatrix::<f64>::identity(d, d);
        for a in 0..d {
            for b in a + 1..d {
                let den = (cov[(a, a)] * cov[(b, b)]).sqrt();
                let r = if den > 0.0 { (cov[(a, b)] / den).clamp(-1.0, 1.0) } else { 0.0 };
                corr[(a, b)] = r;
                corr[(b, a)] = r;
            }
        }
        Self { corr, n }
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    /// Partial correlation of `i` and `j` given `cond`, read off the inverse
    /// of the correlation submatrix.
    pub fn partial_correlation(&self, i: usize, j: usize, cond: &[usize]) -> f64 {
        if cond.is_empty() {
            return self.corr[(i, j)];
        }
        let mut idx = vec![i, j];
        idx.extend_from_slice(cond);
        let m = idx.len();
        let sub = DMatrix::from_fn(m, m, |a, b| self.corr[(idx[a], idx[b])]);
        let prec = match sub.clone().try_inverse() {
            Some(p) => p,
            None => sub.pseudo_inverse(1e-12).expect("pseudo-inverse of a symmetric matrix"),
        };
        let den = (prec[(0, 0)] * prec[(1, 1)]).sqrt();
        if den > 0.0 && den.is_finite() {
            (-prec[(0, 1)] / den).clamp(-1.0, 1.0)
        } else {
            0.0
        }
    }
}

impl CiTest for FisherZ {
    fn n_vars(&self) -> usize {
        self.corr.nrows()
    }

    fn p_value(&self, i: usize, j: usize, cond: &[usize]) -> Result<f64, DiscoveryError> {
        if self.n <= cond.len() + 3 {
            return Err(DiscoveryError::InsufficientRows {
                rows: self.n,
                cond: cond.len(),
            });
        }
        let r = self.partial_correlation(i, j, cond).clamp(-R_CLAMP, R_CLAMP);
        let z = 0.5 * ((1.0 + r) / (1.0 - r)).ln() * ((self.n - cond.len() - 3) as f64).sqrt();
        Ok(erfc(z.abs() / std::f64::consts::SQRT_2))
    }
}

/// Fisher-z test on raw columns: `(p_value, independent)` with
/// independence declared when `p > alpha`.
pub fn fisher_z(
    data: ArrayView2<'_, f64>,
    i: usize,
    j: usize,
    cond: &[usize],
    alpha: f64,
) -> Result<(f64, bool), DiscoveryError> {
    super::check_alpha(alpha)?;
    let p = FisherZ::new(data).p_value(i, j, cond)?;
    Ok((p, p > alpha))
}

/// Exact test answering from d-separation in a known DAG: p is 1 when
/// separated and 0 otherwise.
#[derive(Debug, Clone)]
pub struct DSeparationOracle {
    dag: Dag,
    /// Local variable index to DAG node.
    vars: Vec<usize>,
}

impl DSeparationOracle {
    pub fn new(dag: Dag) -> Self {
        let vars = (0..dag.n_nodes()).collect();
        Self { dag, vars }
    }

    /// Restrict queries to `vars` (other nodes stay latent).
    pub fn restricted(dag: Dag, vars: Vec<usize>) -> Self {
        Self { dag, vars }
    }
}

impl CiTest for DSeparationOracle {
    fn n_vars(&self) -> usize {
        self.vars.len()
    }

    fn p_value(&self, i: usize, j: usize, cond: &[usize]) -> Result<f64, DiscoveryError> {
        let given: Vec<usize> = cond.iter().map(|&c| self.vars[c]).collect();
        Ok(if self.dag.d_separated(self.vars[i], self.vars[j], &given) {
            1.0
        } else {
            0.0
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use ndarray::Array2;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn zero_correlation_gives_unit_p() {
        let data = ndarray::array![[1.0, 1.0], [-1.0, 1.0], [1.0, -1.0], [-1.0, -1.0], [0.0, 0.0]];
        let (p, indep) = fisher_z(data.view(), 0, 1, &[], 0.05).unwrap();
        assert_eq!(p, 1.0);
        assert!(indep);
    }

    #[test]
    fn perfect_correlation_is_dependent() {
        let data = Array2::from_shape_fn((100, 2), |(i, j)| i as f64 * (j + 1) as f64);
        let (p, indep) = fisher_z(data.view(), 0, 1, &[], 0.05).unwrap();
        assert!(p < 1e-12);
        assert!(!indep);
    }

    #[test]
    fn too_few_rows_is_an_error() {
        let data = Array2::from_shape_fn((4, 3), |(i, j)| (i * j) as f64);
        assert!(fisher_z(data.view(), 0, 1, &[2], 0.05).is_err());
    }

    #[test]
    fn partial_correlation_matches_residual_regression() {
        let mut rng = seeded(8);
        let n = 200;
        let mut data = Array2::<f64>::zeros((n, 3));
        for r in 0..n {
            let z: f64 = rng.sample(StandardNormal);
            data[[r, 2]] = z;
            data[[r, 0]] = z + rng.sample::<f64, _>(StandardNormal);
            data[[r, 1]] = 0.5 * z + 0.3 * data[[r, 0]] + rng.sample::<f64, _>(StandardNormal);
        }
        // Residualise 0 and 1 on 2 by least squares and correlate.
        let resid = |col: usize| -> Vec<f64> {
            let x = data.column(2);
            let y = data.column(col);
            let (mx, my) = (x.mean().unwrap(), y.mean().unwrap());
            let beta = x.iter().zip(y.iter()).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>()
                / x.iter().map(|a| (a - mx).powi(2)).sum::<f64>();
            x.iter().zip(y.iter()).map(|(a, b)| (b - my) - beta * (a - mx)).collect()
        };
        let (r0, r1) = (resid(0), resid(1));
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let expected = dot(&r0, &r1) / (dot(&r0, &r0) * dot(&r1, &r1)).sqrt();
        let got = FisherZ::new(data.view()).partial_correlation(0, 1, &[2]);
        assert!((got - expected).abs() < 1e-10);
    }
}
