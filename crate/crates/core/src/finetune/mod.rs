//! Fine-tuning a reference classifier on mixed real and synthetic batches.
//!
//! The objective weighs the mean cross-entropy over real rows by `alpha`
//! and over synthetic rows by `1 − alpha`. Early stopping watches the
//! log-loss on real validation rows only and the best checkpoint is
//! returned.

mod checkpoint;
mod distance;
mod metrics;

use std::time::Instant;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use checkpoint::{from_bytes, read_checkpoint, to_bytes, write_checkpoint, MAGIC, VERSION};
pub use distance::{network_distance, weight_distance, Component, ComponentDistance, LayerDistance, WeightDistanceReport};
pub use metrics::{binary_auc, log_loss, pearson, roc_auc, MetricError, PROB_CLIP};

use crate::generators::{build_mix_batches, GeneratorError, MixBatch, MixPlan, RowSource};
use crate::models::mlp::{Dense, Network};
use crate::models::Activation;
use crate::rng::SeededRng;
use crate::table::{Table, TableError};

#[derive(Debug, Error)]
pub enum FineTuneError {
    #[error("invalid fine-tune config: {0}")]
    InvalidConfig(String),
    #[error("model expects {expected} features, data has {found}")]
    WidthMismatch { expected: usize, found: usize },
    #[error("label {label} outside the model's {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("validation table is empty")]
    EmptyValidation,
    #[error("non-finite loss at step {step} (batch: {n_real} real, {n_synthetic} synthetic rows)")]
    NonFiniteLoss {
        step: usize,
        n_real: usize,
        n_synthetic: usize,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

pub type Result<T, E = FineTuneError> = std::result::Result<T, E>;

pub const HIDDEN_WIDTHS: [usize; 2] = [64, 32];

/// A softmax network together with a frozen copy of its initial weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceModel {
    network: Network,
    init: Network,
}

impl ReferenceModel {
    /// `n_features → 64 → 32 → n_classes` with ReLU hidden layers.
    pub fn new(n_features: usize, n_classes: usize, rng: &mut SeededRng) -> Self {
        let sizes = [n_features, HIDDEN_WIDTHS[0], HIDDEN_WIDTHS[1], n_classes];
        Self::with_sizes(&sizes, Activation::Relu, rng)
    }

    pub fn with_sizes(sizes: &[usize], activation: Activation, rng: &mut SeededRng) -> Self {
        let network = Network::new(sizes, activation, rng);
        Self {
            init: network.clone(),
            network,
        }
    }

    pub fn from_parts(network: Network, init: Network) -> Result<Self> {
        if network.sizes() != init.sizes() || network.activation != init.activation {
            return Err(FineTuneError::Checkpoint("current and initial networks differ in shape".into()));
        }
        Ok(Self { network, init })
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn network_mut(&mut self) -> &mut Network {
        &mut self.network
    }

    pub fn init(&self) -> &Network {
        &self.init
    }

    pub fn n_features(&self) -> usize {
        self.network.n_inputs()
    }

    pub fn n_classes(&self) -> usize {
        self.network.n_outputs()
    }

    pub fn predict_proba(&self, x: ArrayView2<'_, f64>) -> Result<ndarray::Array2<f64>> {
        if x.ncols() != self.n_features() {
            return Err(FineTuneError::WidthMismatch {
                expected: self.n_features(),
                found: x.ncols(),
            });
        }
        Ok(self.network.predict_proba(x))
    }

    /// Validation log-loss and ROC-AUC (`None` when undefined) on `table`.
    pub fn evaluate(&self, table: &Table) -> Result<(f64, Option<f64>)> {
        let x = table.features();
        let y = table.target_codes()?;
        self.check_labels(&y)?;
        let p = self.predict_proba(x.view())?;
        let ll = log_loss(p.view(), &y)?;
        let auc = match roc_auc(p.view(), &y) {
            Ok(a) => Some(a),
            Err(MetricError::Undefined(_)) => None,
            Err(e) => return Err(e.into()),
        };
        Ok((ll, auc))
    }

    fn check_labels(&self, y: &[usize]) -> Result<()> {
        match y.iter().find(|&&l| l >= self.n_classes()) {
            Some(&label) => Err(FineTuneError::LabelOutOfRange {
                label,
                classes: self.n_classes(),
            }),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FineTuneConfig {
    pub initial_learning_rate: f64,
    pub finetune_steps: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub eval_every: usize,
}

impl Default for FineTuneConfig {
    fn default() -> Self {
        Self {
            initial_learning_rate: 1e-4,
            finetune_steps: 50,
            patience: 40,
            batch_size: 64,
            eval_every: 1,
        }
    }
}

impl FineTuneConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(FineTuneError::InvalidConfig(m.into()));
        if !(self.initial_learning_rate > 0.0) || !self.initial_learning_rate.is_finite() {
            return bad("initial_learning_rate must be positive");
        }
        if self.finetune_steps == 0 {
            return bad("finetune_steps must be at least 1");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2");
        }
        if self.eval_every == 0 {
            return bad("eval_every must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Patience,
    StepsExhausted,
    /// The wall-clock budget ran out.
    Deadline,
}

/// One training step. Step 0 is the evaluation of the initial model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub train_loss_real: Option<f64>,
    pub train_loss_synthetic: Option<f64>,
    pub val_log_loss: Option<f64>,
    pub val_roc_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub steps: Vec<StepRecord>,
    pub best_step: usize,
    pub best_val_log_loss: f64,
    pub stopped_reason: StopReason,
}

/// Weighted objective on one batch.
#[derive(Debug, Clone)]
pub struct MixedLoss {
    pub total: f64,
    /// Mean cross-entropy over the real rows.
    pub real: Option<f64>,
    pub synthetic: Option<f64>,
    pub grads: Vec<Dense>,
}

/// `alpha · mean CE(real rows) + (1 − alpha) · mean CE(synthetic rows)` and
/// its gradient. A source with no rows in the batch contributes nothing.
pub fn mixed_objective(net: &Network, batch: &MixBatch, alpha: f64) -> MixedLoss {
    let weights: Vec<f64> = batch
        .source
        .iter()
        .map(|s| match s {
            RowSource::Real => alpha / batch.n_real as f64,
            RowSource::Synthetic => (1.0 - alpha) / batch.n_synthetic as f64,
        })
        .collect();
    let (total, grads) = net.weighted_loss_and_grad(batch.x.view(), &batch.y, &weights);
    let part = |src: RowSource, n: usize| {
        (n > 0).then(|| {
            let w: Vec<f64> = batch
                .source
                .iter()
                .map(|&s| if s == src { 1.0 / n as f64 } else { 0.0 })
                .collect();
            net.weighted_loss_and_grad(batch.x.view(), &batch.y, &w).0
        })
    };
    MixedLoss {
        total,
        real: part(RowSource::Real, batch.n_real),
        synthetic: part(RowSource::Synthetic, batch.n_synthetic),
        grads,
    }
}

fn descend(net: &mut Network, grads: &[Dense], lr: f64) {
    for (layer, g) in net.layers.iter_mut().zip(grads) {
        layer.weights.scaled_add(-lr, &g.weights);
        layer.bias.scaled_add(-lr, &g.bias);
    }
}

pub fn finetune(
    model: &ReferenceModel,
    plan: MixPlan,
    val_real: &Table,
    cfg: &FineTuneConfig,
    rng: &mut SeededRng,
) -> Result<(ReferenceModel, TrainHistory)> {
    finetune_until(model, plan, val_real, cfg, rng, None)
}

/// [`finetune`] that stops with [`StopReason::Deadline`] once `deadline`
/// passes, still returning the best checkpoint so far.
pub fn finetune_until(
    model: &ReferenceModel,
    plan: MixPlan,
    val_real: &Table,
    cfg: &FineTuneConfig,
    rng: &mut SeededRng,
    deadline: Option<Instant>,
) -> Result<(ReferenceModel, TrainHistory)> {
    cfg.validate()?;
    if val_real.n_rows() == 0 {
        return Err(FineTuneError::EmptyValidation);
    }
    let width = plan.real.n_cols() - 1;
    if width != model.n_features() {
        return Err(FineTuneError::WidthMismatch {
            expected: model.n_features(),
            found: width,
        });
    }
    model.check_labels(&plan.real.target_codes()?)?;
    let alpha = plan.alpha;
    let mut batches = build_mix_batches(plan, cfg.batch_size, rng)?;

    let mut current = model.clone();
    let (loss0, auc0) = current.evaluate(val_real)?;
    let mut steps = vec![StepRecord {
        step: 0,
        train_loss_real: None,
        train_loss_synthetic: None,
        val_log_loss: Some(loss0),
        val_roc_auc: auc0,
    }];
    let mut best = (0, loss0, current.clone());
    let mut stale = 0;
    let mut reason = StopReason::StepsExhausted;
    for step in 1..=cfg.finetune_steps {
        if deadline.is_some_and(|d| Instant::now() >= d) {
            reason = StopReason::Deadline;
            break;
        }
        let batch = batches.next_batch()?;
        let obj = mixed_objective(current.network(), &batch, alpha);
        if !obj.total.is_finite() {
            return Err(FineTuneError::NonFiniteLoss {
                step,
                n_real: batch.n_real,
                n_synthetic: batch.n_synthetic,
            });
        }
        descend(current.network_mut(), &obj.grads, cfg.initial_learning_rate);
        let mut record = StepRecord {
            step,
            train_loss_real: obj.real,
            train_loss_synthetic: obj.synthetic,
            val_log_loss: None,
            val_roc_auc: None,
        };
        if step % cfg.eval_every == 0 {
            let (loss, auc) = current.evaluate(val_real)?;
            record.val_log_loss = Some(loss);
            record.val_roc_auc = auc;
            steps.push(record);
            if loss < best.1 {
                best = (step, loss, current.clone());
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.patience {
                    reason = StopReason::Patience;
                    break;
                }
            }
        } else {
            steps.push(record);
        }
    }
    let (best_step, best_val_log_loss, best_model) = best;
    Ok((
        best_model,
        TrainHistory {
            steps,
            best_step,
            best_val_log_loss,
            stopped_reason: reason,
        },
    ))
}
