//! Density estimator for features plus a classifier for labels.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{GeneratorError, Result};
use crate::models::{
    fit_classifier, fit_density, Activation, BoostParams, ClassifierSpec, Criterion, DensitySpec, FittedClassifier,
    FittedDensity, ForestParams, LearningRateSchedule, LogisticParams, MaxFeatures, MlpParams, Solver, Splitter,
    TreeParams,
};
use crate::rng::SeededRng;
use crate::table::Table;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixedModelConfig {
    /// Fixed density; drawn from the search space when absent.
    pub density: Option<DensitySpec>,
    /// Fixed classifier; drawn from the search space when absent.
    pub classifier: Option<ClassifierSpec>,
    pub max_attempts: usize,
}

impl Default for MixedModelConfig {
    fn default() -> Self {
        Self {
            density: None,
            classifier: None,
            max_attempts: 10,
        }
    }
}

fn log_uniform_int(rng: &mut SeededRng, lo: usize, hi: usize) -> usize {
    let v = rng.random_range((lo as f64).ln()..((hi + 1) as f64).ln()).exp();
    (v.floor() as usize).clamp(lo, hi)
}

fn log_uniform(rng: &mut SeededRng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo.ln()..=hi.ln()).exp()
}

fn pick<T: Copy>(rng: &mut SeededRng, options: &[T]) -> T {
    options[rng.random_range(0..options.len())]
}

pub fn sample_density_spec(rng: &mut SeededRng) -> DensitySpec {
    match rng.random_range(0..3) {
        0 => DensitySpec::Gmm {
            components: rng.random_range(1..=10),
            cov_reg: 1e-6,
        },
        1 => DensitySpec::Kde { bandwidth: None },
        _ => DensitySpec::Uniform,
    }
}

fn criterion(rng: &mut SeededRng) -> Criterion {
    // log_loss and entropy split identically.
    pick(rng, &[Criterion::Gini, Criterion::Entropy, Criterion::Entropy])
}

/// Draw a classifier from the decision tree, random forest, histogram
/// boosting, MLP and SVC search spaces. SVC is approximated by (polynomial)
/// logistic regression with `l2 = 1/C`.
pub fn sample_classifier_spec(rng: &mut SeededRng) -> ClassifierSpec {
    match rng.random_range(0..5) {
        0 => ClassifierSpec::DecisionTree(TreeParams {
            criterion: criterion(rng),
            splitter: pick(rng, &[Splitter::Best, Splitter::Random]),
            max_depth: Some(log_uniform_int(rng, 5, 100)),
            min_samples_split: rng.random_range(2..=20),
            min_samples_leaf: rng.random_range(1..=10),
            max_features: pick(
                rng,
                &[
                    MaxFeatures::Fraction(0.1),
                    MaxFeatures::Fraction(0.25),
                    MaxFeatures::Fraction(0.5),
                    MaxFeatures::Fraction(0.75),
                    MaxFeatures::Fraction(1.0),
                    MaxFeatures::Sqrt,
                    MaxFeatures::Log2,
                    MaxFeatures::All,
                ],
            ),
            max_leaf_nodes: None,
            max_bins: None,
        }),
        1 => ClassifierSpec::RandomForest(ForestParams {
            n_trees: log_uniform_int(rng, 10, 500),
            bootstrap: rng.random_bool(0.5),
            tree: TreeParams {
                criterion: criterion(rng),
                max_depth: Some(log_uniform_int(rng, 10, 100)),
                min_samples_split: rng.random_range(2..=20),
                min_samples_leaf: rng.random_range(1..=10),
                max_leaf_nodes: Some(rng.random_range(10..=100)),
                max_features: MaxFeatures::Sqrt,
                ..TreeParams::default()
            },
        }),
        2 => ClassifierSpec::GradBoost(BoostParams {
            learning_rate: rng.random_range(0.01..=1.0),
            n_estimators: rng.random_range(50..=1000),
            max_leaf_nodes: Some(rng.random_range(5..=100)),
            max_depth: Some(rng.random_range(3..=15)),
            min_samples_leaf: rng.random_range(5..=100),
            l2_regularization: rng.random_range(0.0..=1.0),
            max_bins: rng.random_range(10..=255),
        }),
        3 => ClassifierSpec::Mlp(MlpParams {
            hidden: rng.random_range(1..=100),
            activation: pick(rng, &[Activation::Relu, Activation::Logistic, Activation::Tanh]),
            // lbfgs has no counterpart here and runs as adam.
            solver: pick(rng, &[Solver::Adam, Solver::Sgd, Solver::Adam]),
            alpha: rng.random_range(1e-4..=0.1),
            batch_size: pick(rng, &[None, Some(32), Some(64), Some(128)]),
            learning_rate: pick(
                rng,
                &[
                    LearningRateSchedule::Constant,
                    LearningRateSchedule::InvScaling,
                    LearningRateSchedule::Adaptive,
                ],
            ),
            learning_rate_init: rng.random_range(1e-4..=1e-2),
            max_iter: rng.random_range(100..=1000),
            momentum: rng.random_range(0.5..=0.95),
            nesterov: rng.random_bool(0.5),
        }),
        _ => {
            let kernel = rng.random_range(0..4);
            let c = log_uniform(rng, 1e-6, 1e6);
            let degree: usize = rng.random_range(1..=5);
            let params = LogisticParams {
                l2: 1.0 / c,
                max_iter: rng.random_range(100..=1000),
                tol: log_uniform(rng, 1e-5, 1e-2),
            };
            match kernel {
                0 => ClassifierSpec::Logistic(params),
                1 if degree == 1 => ClassifierSpec::Logistic(params),
                1 => ClassifierSpec::PolynomialLogistic {
                    degree: degree.min(3),
                    params,
                },
                _ => ClassifierSpec::PolynomialLogistic { degree: 2, params },
            }
        }
    }
}

/// A fitted feature density and labelling classifier.
#[derive(Debug, Clone)]
pub struct MixedModel {
    density: FittedDensity,
    classifier: FittedClassifier,
    reference: Table,
}

impl MixedModel {
    pub fn fit(table: &Table, cfg: &MixedModelConfig, rng: &mut SeededRng) -> Result<Self> {
        let labels = table.target_codes()?;
        if table.observed_codes(table.schema().target_index()).len() < 2 {
            return Err(GeneratorError::SingleClass);
        }
        let x = table.features();
        let kinds = table.schema().feature_kinds();
        let attempts = cfg.max_attempts.max(1);
        let mut last = String::new();
        for attempt in 0..attempts {
            let dspec = cfg.density.unwrap_or_else(|| sample_density_spec(rng));
            let cspec = cfg.classifier.unwrap_or_else(|| sample_classifier_spec(rng));
            let density = match fit_density(&dspec, x.view(), &kinds, rng) {
                Ok(d) => d,
                Err(e) => {
                    last = e.to_string();
                    log::debug!("mixed model attempt {attempt}: density failed: {e}");
                    continue;
                }
            };
            match fit_classifier(&cspec, x.view(), &labels, rng) {
                Ok(classifier) => {
                    return Ok(Self {
                        density,
                        classifier,
                        reference: table.clone(),
                    })
                }
                Err(e) => {
                    last = e.to_string();
                    log::debug!("mixed model attempt {attempt}: classifier failed: {e}");
                }
            }
        }
        Err(GeneratorError::Exhausted { attempts, last })
    }

    pub fn density(&self) -> &FittedDensity {
        &self.density
    }

    pub fn classifier(&self) -> &FittedClassifier {
        &self.classifier
    }

    /// Sample features and label them with the classifier's argmax.
    pub fn generate(&self, n: usize, rng: &mut SeededRng) -> Result<Table> {
        let x = self.density.sample(n, rng)?;
        let y = self.classifier.predict(x.view())?;
        let schema = self.reference.schema();
        let mut out = Array2::<f64>::zeros((n, schema.width()));
        for (src, &dst) in schema.feature_indices().iter().enumerate() {
            out.column_mut(dst).assign(&x.column(src));
        }
        for (cell, label) in out.column_mut(schema.target_index()).iter_mut().zip(y) {
            *cell = label as f64;
        }
        Ok(self.reference.with_data(out)?)
    }
}

pub fn generate_mixed_model(
    table: &Table,
    cfg: &MixedModelConfig,
    n: usize,
    rng: &mut SeededRng,
) -> Result<Table> {
    MixedModel::fit(table, cfg, rng)?.generate(n, rng)
}
