//! Regressors, classifiers and density estimators.
//!
//! Every learner is a deterministic function of its data, spec and rng
//! stream. Fitted models are immutable.

mod density;
mod ensemble;
mod knn;
mod linear;
mod logistic;
pub mod mlp;
mod spec;
mod tree;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use thiserror::Error;

use crate::rng::SeededRng;
use crate::table::ColumnKind;

pub use density::DensityDiagnostics;
pub use linear::polynomial_features;
pub use logistic::{logistic_loss_and_grad, LogisticModel};
pub use spec::*;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("training data has no rows")]
    Empty,
    #[error("training data contains non-finite values")]
    NonFinite,
    #[error("expected {expected} features or labels, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("classifier needs at least two classes")]
    SingleClass,
    #[error("need at least {needed} rows, found {found}")]
    TooFewRows { needed: usize, found: usize },
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("sample count must be at least 1")]
    InvalidSampleCount,
    #[error("unsupported model family {0}")]
    Unsupported(String),
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FitDiagnostics {
    pub converged: bool,
    pub iterations: usize,
    pub notes: Vec<String>,
}

impl FitDiagnostics {
    fn closed_form() -> Self {
        Self {
            converged: true,
            iterations: 1,
            notes: Vec::new(),
        }
    }
}

fn check_finite(x: ArrayView2<'_, f64>) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(ModelError::NonFinite)
    }
}

fn check_width(expected: usize, x: ArrayView2<'_, f64>) -> Result<()> {
    if x.ncols() != expected {
        return Err(ModelError::ShapeMismatch {
            expected,
            found: x.ncols(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone)]
enum RegressorImpl {
    Linear(linear::LinearFit),
    Knn(knn::Knn<f64>),
    Forest(ensemble::Forest),
    Boost(ensemble::BoostRegressor),
}

#[derive(Debug, Clone)]
pub struct FittedRegressor {
    spec: RegressorSpec,
    n_features: usize,
    inner: RegressorImpl,
    diagnostics: FitDiagnostics,
}

impl FittedRegressor {
    pub fn spec(&self) -> &RegressorSpec {
        &self.spec
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn diagnostics(&self) -> &FitDiagnostics {
        &self.diagnostics
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        check_width(self.n_features, x)?;
        Ok(match &self.inner {
            RegressorImpl::Linear(m) => m.predict(x),
            RegressorImpl::Knn(m) => m.predict_values(x),
            RegressorImpl::Forest(f) => f.predict(x).column(0).to_owned(),
            RegressorImpl::Boost(b) => b.predict(x),
        })
    }

    /// `(intercept, coefficients)` for the linear families, in the order of
    /// the (possibly polynomial) design columns.
    pub fn linear_coefficients(&self) -> Option<(f64, &[f64])> {
        match &self.inner {
            RegressorImpl::Linear(m) => Some((m.intercept, m.coef.as_slice())),
            _ => None,
        }
    }
}

pub fn fit_regressor(
    spec: &RegressorSpec,
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    rng: &mut SeededRng,
) -> Result<FittedRegressor> {
    spec.validate()?;
    if x.nrows() == 0 {
        return Err(ModelError::Empty);
    }
    if x.nrows() != y.len() {
        return Err(ModelError::ShapeMismatch {
            expected: x.nrows(),
            found: y.len(),
        });
    }
    if x.nrows() < 2 {
        return Err(ModelError::TooFewRows {
            needed: 2,
            found: x.nrows(),
        });
    }
    check_finite(x)?;
    if !y.iter().all(|v| v.is_finite()) {
        return Err(ModelError::NonFinite);
    }
    let lin = |(m, d): (linear::LinearFit, FitDiagnostics)| (RegressorImpl::Linear(m), d);
    let (inner, diagnostics) = match *spec {
        RegressorSpec::Linear => lin(linear::fit_least_squares(x, y, 1)),
        RegressorSpec::Polynomial { degree } => lin(linear::fit_least_squares(x, y, degree)),
        RegressorSpec::Ridge { lambda } => lin(linear::fit_ridge(x, y, lambda)),
        RegressorSpec::Lasso { lambda } => lin(linear::fit_lasso(x, y, lambda)),
        RegressorSpec::Knn { k } => (
            RegressorImpl::Knn(knn::Knn::new(x, y.to_vec(), k)),
            FitDiagnostics::closed_form(),
        ),
        RegressorSpec::DecisionTree(t) => (
            RegressorImpl::Forest(ensemble::Forest::fit_regression(
                x,
                y,
                &ForestParams {
                    n_trees: 1,
                    bootstrap: false,
                    tree: t,
                },
                rng,
            )),
            FitDiagnostics::closed_form(),
        ),
        RegressorSpec::RandomForest(f) => (
            RegressorImpl::Forest(ensemble::Forest::fit_regression(x, y, &f, rng)),
            FitDiagnostics::closed_form(),
        ),
        RegressorSpec::GradBoost(b) => {
            let (m, d) = ensemble::BoostRegressor::fit(x, y, &b, rng);
            (RegressorImpl::Boost(m), d)
        }
    };
    Ok(FittedRegressor {
        spec: *spec,
        n_features: x.ncols(),
        inner,
        diagnostics,
    })
}

#[derive(Debug, Clone)]
enum ClassifierImpl {
    Logistic(LogisticModel),
    Knn(knn::Knn<usize>),
    Forest(ensemble::Forest),
    Boost(ensemble::BoostClassifier),
    Mlp(mlp::Network),
}

#[derive(Debug, Clone)]
pub struct FittedClassifier {
    spec: ClassifierSpec,
    n_features: usize,
    /// Sorted class codes; column `j` of `predict_proba` is `classes[j]`.
    classes: Vec<usize>,
    inner: ClassifierImpl,
    diagnostics: FitDiagnostics,
}

impl FittedClassifier {
    pub fn spec(&self) -> &ClassifierSpec {
        &self.spec
    }

    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn diagnostics(&self) -> &FitDiagnostics {
        &self.diagnostics
    }

    pub fn predict_proba(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        check_width(self.n_features, x)?;
        let k = self.classes.len();
        let mut p = match &self.inner {
            ClassifierImpl::Logistic(m) => m.predict_proba(x),
            ClassifierImpl::Knn(m) => m.predict_proba(x, k),
            ClassifierImpl::Forest(f) => f.predict(x),
            ClassifierImpl::Boost(b) => b.predict_proba(x),
            ClassifierImpl::Mlp(n) => n.predict_proba(x),
        };
        // Renormalise away accumulated rounding.
        for mut row in p.axis_iter_mut(Axis(0)) {
            row.mapv_inplace(|v| v.max(0.0));
            let s = row.sum();
            row /= s;
        }
        Ok(p)
    }

    /// Most probable class code per row; the first maximum wins ties.
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
        let p = self.predict_proba(x)?;
        Ok(p.axis_iter(Axis(0))
            .map(|row| self.classes[argmax(row)])
            .collect())
    }
}

pub(crate) fn argmax(row: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    best
}

pub fn fit_classifier(
    spec: &ClassifierSpec,
    x: ArrayView2<'_, f64>,
    y: &[usize],
    rng: &mut SeededRng,
) -> Result<FittedClassifier> {
    spec.validate()?;
    if x.nrows() == 0 {
        return Err(ModelError::Empty);
    }
    if x.nrows() != y.len() {
        return Err(ModelError::ShapeMismatch {
            expected: x.nrows(),
            found: y.len(),
        });
    }
    check_finite(x)?;
    let mut classes = y.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(ModelError::SingleClass);
    }
    let k = classes.len();
    let yi: Vec<usize> = y
        .iter()
        .map(|c| classes.binary_search(c).expect("class list built from y"))
        .collect();
    let (inner, diagnostics) = match *spec {
        ClassifierSpec::Logistic(p) => {
            let (m, d) = LogisticModel::fit(x, &yi, k, 1, &p);
            (ClassifierImpl::Logistic(m), d)
        }
        ClassifierSpec::PolynomialLogistic { degree, params } => {
            let (m, d) = LogisticModel::fit(x, &yi, k, degree, &params);
            (ClassifierImpl::Logistic(m), d)
        }
        ClassifierSpec::DecisionTree(t) => (
            ClassifierImpl::Forest(ensemble::Forest::fit_classification(
                x,
                &yi,
                k,
                &ForestParams {
                    n_trees: 1,
                    bootstrap: false,
                    tree: t,
                },
                rng,
            )),
            FitDiagnostics::closed_form(),
        ),
        ClassifierSpec::RandomForest(f) => (
            ClassifierImpl::Forest(ensemble::Forest::fit_classification(
                x, &yi, k, &f, rng,
            )),
            FitDiagnostics::closed_form(),
        ),
        ClassifierSpec::Knn { k: neighbours } => (
            ClassifierImpl::Knn(knn::Knn::new(x, yi, neighbours)),
            FitDiagnostics::closed_form(),
        ),
        ClassifierSpec::GradBoost(b) => {
            let (m, d) = ensemble::BoostClassifier::fit(x, &yi, k, &b, rng);
            (ClassifierImpl::Boost(m), d)
        }
        ClassifierSpec::Mlp(p) => {
            let (n, d) = mlp::train_classifier(x, &yi, k, &p, rng);
            (ClassifierImpl::Mlp(n), d)
        }
    };
    Ok(FittedClassifier {
        spec: *spec,
        n_features: x.ncols(),
        classes,
        inner,
        diagnostics,
    })
}

/// A fitted density estimator over a feature matrix.
#[derive(Debug, Clone)]
pub struct FittedDensity {
    /// The spec that was finally fitted, after any fallback.
    spec: DensitySpec,
    requested: DensitySpec,
    inner: density::Density,
    diagnostics: DensityDiagnostics,
}

impl FittedDensity {
    pub fn spec(&self) -> &DensitySpec {
        &self.spec
    }

    pub fn requested(&self) -> &DensitySpec {
        &self.requested
    }

    pub fn n_features(&self) -> usize {
        self.inner.n_features()
    }

    pub fn diagnostics(&self) -> &DensityDiagnostics {
        &self.diagnostics
    }

    /// GMM component means, if this is a mixture.
    pub fn gmm_means(&self) -> Option<&Array2<f64>> {
        self.inner.gmm_means()
    }

    pub fn sample(&self, n: usize, rng: &mut SeededRng) -> Result<Array2<f64>> {
        if n == 0 {
            return Err(ModelError::InvalidSampleCount);
        }
        Ok(self.inner.sample(n, rng))
    }
}

/// Fit a density over `x`; `kinds` marks categorical features, whose
/// samples are snapped to observed codes.
pub fn fit_density(
    spec: &DensitySpec,
    x: ArrayView2<'_, f64>,
    kinds: &[ColumnKind],
    rng: &mut SeededRng,
) -> Result<FittedDensity> {
    spec.validate()?;
    if x.nrows() == 0 {
        return Err(ModelError::Empty);
    }
    check_width(kinds.len(), x)?;
    check_finite(x)?;
    let (inner, fitted, diagnostics) = density::fit(spec, x, kinds, rng);
    Ok(FittedDensity {
        spec: fitted,
        requested: *spec,
        inner,
        diagnostics,
    })
}

pub fn sample_density(
    model: &FittedDensity,
    n: usize,
    rng: &mut SeededRng,
) -> Result<Array2<f64>> {
    model.sample(n, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use ndarray::{array, Array};
    use rand::Rng;

    #[test]
    fn linear_recovers_exact_line() {
        let x = Array::linspace(0.0, 9.0, 10).insert_axis(Axis(1));
        let y = x.column(0).mapv(|v| 2.0 * v + 1.0);
        let m = fit_regressor(&RegressorSpec::Linear, x.view(), y.view(), &mut seeded(0)).unwrap();
        let (b, w) = m.linear_coefficients().unwrap();
        assert!((b - 1.0).abs() < 1e-9);
        assert!((w[0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn rank_deficient_design_falls_back() {
        let x = array![[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]];
        let y = array![1.0, 2.0, 3.0];
        let m = fit_regressor(&RegressorSpec::Linear, x.view(), y.view(), &mut seeded(0)).unwrap();
        assert!(m.diagnostics().notes.iter().any(|n| n.contains("rank")));
        let p = m.predict(x.view()).unwrap();
        for (a, b) in p.iter().zip(y.iter()) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn huge_ridge_flattens_slope() {
        let x = Array::linspace(-1.0, 1.0, 21).insert_axis(Axis(1));
        let y = x.column(0).mapv(|v| 5.0 * v);
        let m = fit_regressor(&RegressorSpec::Ridge { lambda: 1e9 }, x.view(), y.view(), &mut seeded(0))
            .unwrap();
        assert!(m.linear_coefficients().unwrap().1[0].abs() < 1e-6);
    }

    #[test]
    fn lasso_zeroes_irrelevant_feature() {
        let mut rng = seeded(3);
        let x = Array2::from_shape_fn((200, 2), |_| rng.random::<f64>() - 0.5);
        let y = x.column(0).mapv(|v| 3.0 * v);
        let m = fit_regressor(&RegressorSpec::Lasso { lambda: 0.01 }, x.view(), y.view(), &mut seeded(0))
            .unwrap();
        let w = m.linear_coefficients().unwrap().1;
        assert!(w[1].abs() < 1e-9);
        assert!((w[0] - 3.0).abs() < 0.2);
        assert!(m.diagnostics().converged);
    }

    #[test]
    fn boosted_stumps_fit_sine() {
        let n = 500;
        let x = Array::linspace(0.0, 2.0 * std::f64::consts::PI, n).insert_axis(Axis(1));
        let y = x.column(0).mapv(f64::sin);
        let spec = RegressorSpec::GradBoost(BoostParams {
            n_estimators: 200,
            learning_rate: 0.1,
            max_depth: Some(1),
            max_leaf_nodes: None,
            ..BoostParams::default()
        });
        let m = fit_regressor(&spec, x.view(), y.view(), &mut seeded(0)).unwrap();
        let p = m.predict(x.view()).unwrap();
        let rmse = ((&p - &y).mapv(|v| v * v).sum() / n as f64).sqrt();
        assert!(rmse < 0.15, "rmse {rmse}");
    }

    fn blobs(n: usize, seed: u64) -> (Array2<f64>, Vec<usize>) {
        let mut rng = seeded(seed);
        let normal = rand_distr::StandardNormal;
        let y: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let x = Array2::from_shape_fn((n, 2), |(i, _)| {
            let z: f64 = rng.sample(normal);
            let centre = if y[i] == 1 { 1.0 } else { -1.0 };
            // Truncated noise keeps a gap of two sigma between the classes.
            centre + 0.5 * z.clamp(-1.0, 1.0)
        });
        (x, y)
    }

    #[test]
    fn logistic_separates_blobs() {
        let (x, y) = blobs(100, 1);
        let m = fit_classifier(
            &ClassifierSpec::Logistic(LogisticParams::default()),
            x.view(),
            &y,
            &mut seeded(0),
        )
        .unwrap();
        let pred = m.predict(x.view()).unwrap();
        assert_eq!(pred, y);
    }

    #[test]
    fn stump_cannot_solve_xor() {
        let x = array![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]];
        let y = vec![0, 1, 1, 0];
        let stump = ClassifierSpec::DecisionTree(TreeParams {
            max_depth: Some(1),
            ..TreeParams::default()
        });
        let m = fit_classifier(&stump, x.view(), &y, &mut seeded(0)).unwrap();
        let acc = m
            .predict(x.view())
            .unwrap()
            .iter()
            .zip(&y)
            .filter(|(a, b)| a == b)
            .count();
        assert!(acc <= 3);
        let deep = ClassifierSpec::DecisionTree(TreeParams::default());
        let m = fit_classifier(&deep, x.view(), &y, &mut seeded(0)).unwrap();
        assert_eq!(m.predict(x.view()).unwrap(), y);
    }

    #[test]
    fn single_forest_tree_matches_decision_tree() {
        let mut rng = seeded(9);
        let x = Array2::from_shape_fn((80, 3), |_| rng.random::<f64>());
        let y: Vec<usize> = (0..80).map(|i| usize::from(x[[i, 0]] + x[[i, 2]] > 1.0)).collect();
        let tree = TreeParams::default();
        let dt = fit_classifier(&ClassifierSpec::DecisionTree(tree), x.view(), &y, &mut seeded(1)).unwrap();
        let rf = fit_classifier(
            &ClassifierSpec::RandomForest(ForestParams {
                n_trees: 1,
                bootstrap: false,
                tree,
            }),
            x.view(),
            &y,
            &mut seeded(2),
        )
        .unwrap();
        assert_eq!(
            dt.predict_proba(x.view()).unwrap(),
            rf.predict_proba(x.view()).unwrap()
        );
    }

    #[test]
    fn every_classifier_emits_distributions() {
        let mut rng = seeded(4);
        let x = Array2::from_shape_fn((60, 3), |_| rng.random::<f64>());
        let y: Vec<usize> = (0..60).map(|i| [0, 2, 5][i % 3]).collect();
        let probe = Array2::from_shape_fn((10, 3), |_| rng.random::<f64>() * 3.0 - 1.0);
        let specs = [
            ClassifierSpec::default_for(ClassifierFamily::Logistic),
            ClassifierSpec::default_for(ClassifierFamily::PolynomialLogistic),
            ClassifierSpec::default_for(ClassifierFamily::DecisionTree),
            ClassifierSpec::RandomForest(ForestParams {
                n_trees: 10,
                ..ForestParams::default()
            }),
            ClassifierSpec::default_for(ClassifierFamily::Knn),
            ClassifierSpec::GradBoost(BoostParams {
                n_estimators: 10,
                min_samples_leaf: 5,
                ..BoostParams::default()
            }),
            ClassifierSpec::Mlp(MlpParams {
                hidden: 8,
                max_iter: 20,
                ..MlpParams::default()
            }),
        ];
        for spec in specs {
            let m = fit_classifier(&spec, x.view(), &y, &mut seeded(0)).unwrap();
            assert_eq!(m.classes(), &[0, 2, 5]);
            let p = m.predict_proba(probe.view()).unwrap();
            for row in p.rows() {
                assert!(row.iter().all(|&v| v >= 0.0));
                assert!((row.sum() - 1.0).abs() < 1e-9, "{:?}", spec.family());
            }
            assert!(m.predict_proba(x.slice(ndarray::s![.., ..2])).is_err());
        }
    }

    #[test]
    fn classifier_guards() {
        let x = array![[0.0], [1.0]];
        assert_eq!(
            fit_classifier(&ClassifierSpec::default_for(ClassifierFamily::Knn), x.view(), &[1, 1], &mut seeded(0))
                .unwrap_err(),
            ModelError::SingleClass
        );
        let bad = array![[f64::NAN], [1.0]];
        assert_eq!(
            fit_regressor(&RegressorSpec::Linear, bad.view(), array![0.0, 1.0].view(), &mut seeded(0))
                .unwrap_err(),
            ModelError::NonFinite
        );
        let empty = Array2::<f64>::zeros((0, 1));
        assert_eq!(
            fit_regressor(&RegressorSpec::Linear, empty.view(), Array1::zeros(0).view(), &mut seeded(0))
                .unwrap_err(),
            ModelError::Empty
        );
    }

    #[test]
    fn fits_are_deterministic() {
        let mut rng = seeded(5);
        let x = Array2::from_shape_fn((50, 4), |_| rng.random::<f64>());
        let y: Vec<usize> = (0..50).map(|i| i % 2).collect();
        let spec = ClassifierSpec::RandomForest(ForestParams {
            n_trees: 5,
            ..ForestParams::default()
        });
        let a = fit_classifier(&spec, x.view(), &y, &mut seeded(7)).unwrap();
        let b = fit_classifier(&spec, x.view(), &y, &mut seeded(7)).unwrap();
        assert_eq!(a.predict_proba(x.view()).unwrap(), b.predict_proba(x.view()).unwrap());
    }
}
