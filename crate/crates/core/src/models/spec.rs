//! Model specifications and their hyperparameters.

use serde::{Deserialize, Serialize};

use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Gini,
    Entropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Splitter {
    Best,
    Random,
}

/// Number of features examined per split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    All,
    Sqrt,
    Log2,
    Fraction(f64),
}

impl MaxFeatures {
    pub fn resolve(self, n_features: usize) -> usize {
        let n = n_features as f64;
        let m = match self {
            MaxFeatures::All => n_features,
            MaxFeatures::Sqrt => n.sqrt().floor() as usize,
            MaxFeatures::Log2 => n.log2().floor() as usize,
            MaxFeatures::Fraction(f) => (f * n).floor() as usize,
        };
        m.clamp(1, n_features.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub criterion: Criterion,
    pub splitter: Splitter,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub max_features: MaxFeatures,
    pub max_leaf_nodes: Option<usize>,
    /// `None` evaluates every distinct value as a threshold.
    pub max_bins: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            criterion: Criterion::Gini,
            splitter: Splitter::Best,
            max_depth: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: MaxFeatures::All,
            max_leaf_nodes: None,
            max_bins: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub bootstrap: bool,
    pub tree: TreeParams,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            bootstrap: true,
            tree: TreeParams {
                max_features: MaxFeatures::Sqrt,
                ..TreeParams::default()
            },
        }
    }
}

/// Histogram gradient boosting on depth/leaf-limited regression trees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostParams {
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub max_depth: Option<usize>,
    pub max_leaf_nodes: Option<usize>,
    pub min_samples_leaf: usize,
    pub l2_regularization: f64,
    pub max_bins: usize,
}

impl Default for BoostParams {
    fn default() -> Self {
        Self {
            n_estimators: 100,
            learning_rate: 0.1,
            max_depth: None,
            max_leaf_nodes: Some(31),
            min_samples_leaf: 20,
            l2_regularization: 0.0,
            max_bins: 255,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    pub l2: f64,
    pub max_iter: usize,
    /// Gradient-norm tolerance for early termination.
    pub tol: f64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        Self {
            l2: 1e-4,
            max_iter: 1000,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Logistic,
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearningRateSchedule {
    Constant,
    InvScaling,
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub hidden: usize,
    pub activation: Activation,
    pub solver: Solver,
    /// L2 penalty on weights.
    pub alpha: f64,
    /// `None` means `min(200, n)`.
    pub batch_size: Option<usize>,
    pub learning_rate: LearningRateSchedule,
    pub learning_rate_init: f64,
    pub max_iter: usize,
    pub momentum: f64,
    pub nesterov: bool,
}

impl Default for MlpParams {
    fn default() -> Self {
        Self {
            hidden: 100,
            activation: Activation::Relu,
            solver: Solver::Adam,
            alpha: 1e-4,
            batch_size: None,
            learning_rate: LearningRateSchedule::Constant,
            learning_rate_init: 1e-3,
            max_iter: 200,
            momentum: 0.9,
            nesterov: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressorFamily {
    Linear,
    Polynomial,
    Ridge,
    Lasso,
    Knn,
    DecisionTree,
    RandomForest,
    GradBoost,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierFamily {
    Logistic,
    PolynomialLogistic,
    DecisionTree,
    RandomForest,
    Knn,
    GradBoost,
    Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum RegressorSpec {
    Linear,
    Polynomial { degree: usize },
    Ridge { lambda: f64 },
    Lasso { lambda: f64 },
    Knn { k: usize },
    DecisionTree(TreeParams),
    RandomForest(ForestParams),
    GradBoost(BoostParams),
}

impl RegressorSpec {
    pub fn family(&self) -> RegressorFamily {
        match self {
            RegressorSpec::Linear => RegressorFamily::Linear,
            RegressorSpec::Polynomial { .. } => RegressorFamily::Polynomial,
            RegressorSpec::Ridge { .. } => RegressorFamily::Ridge,
            RegressorSpec::Lasso { .. } => RegressorFamily::Lasso,
            RegressorSpec::Knn { .. } => RegressorFamily::Knn,
            RegressorSpec::DecisionTree(_) => RegressorFamily::DecisionTree,
            RegressorSpec::RandomForest(_) => RegressorFamily::RandomForest,
            RegressorSpec::GradBoost(_) => RegressorFamily::GradBoost,
        }
    }

    /// Default hyperparameters used when a family is drawn from a pool.
    pub fn default_for(family: RegressorFamily) -> Self {
        match family {
            RegressorFamily::Linear => RegressorSpec::Linear,
            RegressorFamily::Polynomial => RegressorSpec::Polynomial { degree: 2 },
            RegressorFamily::Ridge => RegressorSpec::Ridge { lambda: 1.0 },
            RegressorFamily::Lasso => RegressorSpec::Lasso { lambda: 0.01 },
            RegressorFamily::Knn => RegressorSpec::Knn { k: 5 },
            RegressorFamily::DecisionTree => RegressorSpec::DecisionTree(TreeParams::default()),
            RegressorFamily::RandomForest => RegressorSpec::RandomForest(ForestParams {
                tree: TreeParams {
                    max_features: MaxFeatures::All,
                    ..TreeParams::default()
                },
                ..ForestParams::default()
            }),
            RegressorFamily::GradBoost => RegressorSpec::GradBoost(BoostParams::default()),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidSpec(m.to_string()));
        match *self {
            RegressorSpec::Polynomial { degree } if degree < 1 => bad("polynomial degree must be >= 1"),
            RegressorSpec::Ridge { lambda } | RegressorSpec::Lasso { lambda }
                if !(lambda >= 0.0) =>
            {
                bad("lambda must be >= 0")
            }
            RegressorSpec::Knn { k } if k < 1 => bad("k must be >= 1"),
            RegressorSpec::DecisionTree(t) => validate_tree(&t),
            RegressorSpec::RandomForest(f) => validate_forest(&f),
            RegressorSpec::GradBoost(b) => validate_boost(&b),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ClassifierSpec {
    Logistic(LogisticParams),
    PolynomialLogistic {
        degree: usize,
        #[serde(flatten)]
        params: LogisticParams,
    },
    DecisionTree(TreeParams),
    RandomForest(ForestParams),
    Knn { k: usize },
    GradBoost(BoostParams),
    Mlp(MlpParams),
}

impl ClassifierSpec {
    pub fn family(&self) -> ClassifierFamily {
        match self {
            ClassifierSpec::Logistic(_) => ClassifierFamily::Logistic,
            ClassifierSpec::PolynomialLogistic { .. } => ClassifierFamily::PolynomialLogistic,
            ClassifierSpec::DecisionTree(_) => ClassifierFamily::DecisionTree,
            ClassifierSpec::RandomForest(_) => ClassifierFamily::RandomForest,
            ClassifierSpec::Knn { .. } => ClassifierFamily::Knn,
            ClassifierSpec::GradBoost(_) => ClassifierFamily::GradBoost,
            ClassifierSpec::Mlp(_) => ClassifierFamily::Mlp,
        }
    }

    pub fn default_for(family: ClassifierFamily) -> Self {
        match family {
            ClassifierFamily::Logistic => ClassifierSpec::Logistic(LogisticParams::default()),
            ClassifierFamily::PolynomialLogistic => ClassifierSpec::PolynomialLogistic {
                degree: 2,
                params: LogisticParams::default(),
            },
            ClassifierFamily::DecisionTree => ClassifierSpec::DecisionTree(TreeParams::default()),
            ClassifierFamily::RandomForest => ClassifierSpec::RandomForest(ForestParams::default()),
            ClassifierFamily::Knn => ClassifierSpec::Knn { k: 5 },
            ClassifierFamily::GradBoost => ClassifierSpec::GradBoost(BoostParams::default()),
            ClassifierFamily::Mlp => ClassifierSpec::Mlp(MlpParams::default()),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidSpec(m.to_string()));
        match *self {
            ClassifierSpec::Logistic(p) | ClassifierSpec::PolynomialLogistic { params: p, .. }
                if !(p.l2 >= 0.0) || p.max_iter == 0 =>
            {
                bad("logistic needs l2 >= 0 and max_iter >= 1")
            }
            ClassifierSpec::PolynomialLogistic { degree, .. } if degree < 1 => {
                bad("polynomial degree must be >= 1")
            }
            ClassifierSpec::Knn { k } if k < 1 => bad("k must be >= 1"),
            ClassifierSpec::DecisionTree(t) => validate_tree(&t),
            ClassifierSpec::RandomForest(f) => validate_forest(&f),
            ClassifierSpec::GradBoost(b) => validate_boost(&b),
            ClassifierSpec::Mlp(m)
                if m.hidden < 1 || m.max_iter < 1 || !(m.learning_rate_init > 0.0) =>
            {
                bad("mlp needs hidden >= 1, max_iter >= 1 and a positive learning rate")
            }
            _ => Ok(()),
        }
    }
}

fn validate_tree(t: &TreeParams) -> Result<(), ModelError> {
    if t.max_depth == Some(0) {
        return Err(ModelError::InvalidSpec("tree depth must be >= 1".into()));
    }
    if t.min_samples_split < 2 || t.min_samples_leaf < 1 {
        return Err(ModelError::InvalidSpec(
            "min_samples_split >= 2 and min_samples_leaf >= 1 required".into(),
        ));
    }
    if matches!(t.max_leaf_nodes, Some(n) if n < 2) {
        return Err(ModelError::InvalidSpec("max_leaf_nodes must be >= 2".into()));
    }
    if let MaxFeatures::Fraction(f) = t.max_features {
        if !(f > 0.0 && f <= 1.0) {
            return Err(ModelError::InvalidSpec("max_features fraction must be in (0, 1]".into()));
        }
    }
    Ok(())
}

fn validate_forest(f: &ForestParams) -> Result<(), ModelError> {
    if f.n_trees < 1 {
        return Err(ModelError::InvalidSpec("forest needs at least one tree".into()));
    }
    validate_tree(&f.tree)
}

fn validate_boost(b: &BoostParams) -> Result<(), ModelError> {
    if b.n_estimators < 1 || !(b.learning_rate > 0.0) || b.min_samples_leaf < 1 {
        return Err(ModelError::InvalidSpec(
            "boosting needs n_estimators >= 1, learning_rate > 0, min_samples_leaf >= 1".into(),
        ));
    }
    if b.max_depth == Some(0) || b.max_bins < 2 || !(b.l2_regularization >= 0.0) {
        return Err(ModelError::InvalidSpec("invalid boosting tree limits".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityFamily {
    Gmm,
    Kde,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum DensitySpec {
    /// Full-covariance Gaussian mixture; `cov_reg` is added to every
    /// covariance diagonal.
    Gmm { components: usize, cov_reg: f64 },
    /// Gaussian kernels; `None` selects Scott's rule per feature.
    Kde { bandwidth: Option<f64> },
    Uniform,
}

impl DensitySpec {
    pub fn family(&self) -> DensityFamily {
        match self {
            DensitySpec::Gmm { .. } => DensityFamily::Gmm,
            DensitySpec::Kde { .. } => DensityFamily::Kde,
            DensitySpec::Uniform => DensityFamily::Uniform,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        match *self {
            DensitySpec::Gmm { components, cov_reg } if components < 1 || !(cov_reg >= 0.0) => Err(
                ModelError::InvalidSpec("gmm needs components >= 1 and cov_reg >= 0".into()),
            ),
            DensitySpec::Kde {
                bandwidth: Some(h),
            } if !(h > 0.0) => Err(ModelError::InvalidSpec("bandwidth must be > 0".into())),
            _ => Ok(()),
        }
    }
}

/// Result of resolving an externally named model family.
#[derive(Debug, Clone, PartialEq)]
pub enum FamilyName<F> {
    Exact(F),
    /// Unsupported family replaced by the nearest supported one.
    Mapped { requested: String, family: F },
}

impl<F: Copy> FamilyName<F> {
    pub fn family(&self) -> F {
        match self {
            FamilyName::Exact(f) | FamilyName::Mapped { family: f, .. } => *f,
        }
    }
}

fn normalise(name: &str) -> String {
    name.chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .collect::<String>()
        .to_ascii_lowercase()
}

/// Resolve a regressor family name, mapping unsupported families onto the
/// nearest supported one.
pub fn regressor_family_by_name(name: &str) -> Result<FamilyName<RegressorFamily>, ModelError> {
    use RegressorFamily::*;
    let exact = match normalise(name).as_str() {
        "linear" | "linearregressor" | "linearregression" => Some(Linear),
        "polynomial" | "polynomialregressor" => Some(Polynomial),
        "ridge" => Some(Ridge),
        "lasso" => Some(Lasso),
        "knn" | "kneighborsregressor" => Some(Knn),
        "decisiontree" | "decisiontreeregressor" => Some(DecisionTree),
        "randomforest" | "randomforestregressor" => Some(RandomForest),
        "gradboost" | "gradboosttrees" | "histgradientboostingregressor"
        | "histogramgradientboostregressor" => Some(GradBoost),
        _ => None,
    };
    if let Some(f) = exact {
        return Ok(FamilyName::Exact(f));
    }
    let mapped = match normalise(name).as_str() {
        "svr" => Ridge,
        "extratrees" | "extratreesregressor" => RandomForest,
        "adaboost" | "adaboostregressor" | "gradientboostingregressor" => GradBoost,
        _ => return Err(ModelError::Unsupported(name.to_string())),
    };
    Ok(FamilyName::Mapped {
        requested: name.to_string(),
        family: mapped,
    })
}

/// Resolve a classifier family name; `TabPFNClassifier` is rejected.
pub fn classifier_family_by_name(name: &str) -> Result<FamilyName<ClassifierFamily>, ModelError> {
    use ClassifierFamily::*;
    let exact = match normalise(name).as_str() {
        "logistic" | "logisticregression" | "logisticregressor" => Some(Logistic),
        "polynomiallogistic" | "polynomiallogisticregressor" => Some(PolynomialLogistic),
        "decisiontree" | "decisiontreeclassifier" | "dt" => Some(DecisionTree),
        "randomforest" | "randomforestclassifier" | "rf" => Some(RandomForest),
        "knn" | "kneighborsclassifier" => Some(Knn),
        "gradboost" | "gradboosttrees" | "histgradientboostingclassifier"
        | "histogramgradientboostclassifier" => Some(GradBoost),
        "mlp" | "mlpclassifier" => Some(Mlp),
        _ => None,
    };
    if let Some(f) = exact {
        return Ok(FamilyName::Exact(f));
    }
    let mapped = match normalise(name).as_str() {
        "svc" => Logistic,
        "gaussiannb" => Logistic,
        "extratrees" | "extratreesclassifier" => RandomForest,
        "adaboost" | "adaboostclassifier" | "gradientboostingclassifier" => GradBoost,
        _ => return Err(ModelError::Unsupported(name.to_string())),
    };
    Ok(FamilyName::Mapped {
        requested: name.to_string(),
        family: mapped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invalid_specs_rejected() {
        assert!(RegressorSpec::Polynomial { degree: 0 }.validate().is_err());
        assert!(RegressorSpec::Ridge { lambda: -1.0 }.validate().is_err());
        assert!(RegressorSpec::Knn { k: 0 }.validate().is_err());
        assert!(DensitySpec::Kde {
            bandwidth: Some(0.0)
        }
        .validate()
        .is_err());
        assert!(DensitySpec::Gmm {
            components: 0,
            cov_reg: 1e-6
        }
        .validate()
        .is_err());
        let t = TreeParams {
            max_depth: Some(0),
            ..TreeParams::default()
        };
        assert!(ClassifierSpec::DecisionTree(t).validate().is_err());
    }

    #[test]
    fn name_mapping() {
        assert_eq!(
            regressor_family_by_name("Ridge").unwrap(),
            FamilyName::Exact(RegressorFamily::Ridge)
        );
        assert_eq!(
            regressor_family_by_name("SVR").unwrap().family(),
            RegressorFamily::Ridge
        );
        assert_eq!(
            classifier_family_by_name("ExtraTrees").unwrap().family(),
            ClassifierFamily::RandomForest
        );
        assert!(matches!(
            classifier_family_by_name("TabPFNClassifier"),
            Err(ModelError::Unsupported(_))
        ));
    }

    #[test]
    fn max_features_resolution() {
        assert_eq!(MaxFeatures::Sqrt.resolve(10), 3);
        assert_eq!(MaxFeatures::Log2.resolve(10), 3);
        assert_eq!(MaxFeatures::Fraction(0.1).resolve(5), 1);
        assert_eq!(MaxFeatures::All.resolve(7), 7);
    }
}
