//! Synthetic data generators and the real/synthetic mixing recipe.
//!
//! A [`GeneratorArm`] is the configuration; [`build_source`] fits it on the
//! generator table and returns a [`SyntheticSource`] that can be sampled
//! repeatedly. Every source emits tables in the generator table's schema.

mod augment;
mod mix;
mod mixed;

use std::sync::Arc;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use augment::{
    align_to_schema, discretize, generate_table_augment, IncludeTarget, RandomSampleTarget, SubSampleFeatures,
    TableAugmentConfig,
};
pub use mix::{build_mix_batches, MixBatch, MixBatches, MixPlan, RowSource};
pub use mixed::{generate_mixed_model, sample_classifier_spec, sample_density_spec, MixedModel, MixedModelConfig};

use crate::discovery::{run_discovery_ensemble, DiscoveryError, EnsembleConfig, ProbAdjacency};
use crate::models::ModelError;
use crate::rng::SeededRng;
use crate::scm::{fit_scm, make_target_sink, sample_dag, sample_scm, QualityTier, ScmError, ScmModel};
use crate::table::{Table, TableError};

pub const DEFAULT_N_SYNTHETIC: usize = 20_000;

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Scm(#[from] ScmError),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Discovery(#[from] DiscoveryError),
    #[error("unimplemented arm `{0}`")]
    UnimplementedArm(String),
    #[error("no eligible target column under the configured policy")]
    NoTargetCandidate,
    #[error("generator table target has a single class")]
    SingleClass,
    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: usize, last: String },
    #[error("synthetic pool is empty but the mix needs synthetic rows")]
    EmptySyntheticPool,
    #[error("mix weight {0} outside [0, 1]")]
    InvalidAlpha(f64),
    #[error("adjacency matrix covers {matrix} columns, table has {table}")]
    AdjacencyMismatch { matrix: usize, table: usize },
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
}

pub type Result<T, E = GeneratorError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScmArmConfig {
    pub quality: QualityTier,
    /// Fit the target last, as a child of its neighbours.
    pub target_as_sink: bool,
    pub discovery: EnsembleConfig,
}

impl Default for ScmArmConfig {
    fn default() -> Self {
        Self {
            quality: QualityTier::Good,
            target_as_sink: false,
            discovery: EnsembleConfig::default(),
        }
    }
}

fn default_mix_alpha() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ArmKind {
    #[serde(alias = "Default")]
    Default,
    #[serde(alias = "TableAugment")]
    TableAugment(TableAugmentConfig),
    #[serde(alias = "MixedModel")]
    MixedModel(MixedModelConfig),
    #[serde(alias = "SCM")]
    Scm(ScmArmConfig),
    /// Real rows mixed with the union of `sources` at real share `alpha`.
    #[serde(alias = "CausalMix")]
    CausalMix {
        #[serde(default = "default_mix_alpha")]
        alpha: f64,
        sources: Vec<GeneratorArm>,
    },
    #[serde(alias = "TabEBM")]
    TabEbm,
    #[serde(alias = "CTGAN")]
    Ctgan,
}

fn default_n_synthetic() -> usize {
    DEFAULT_N_SYNTHETIC
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorArm {
    /// Display name; defaults to the kind.
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default = "default_n_synthetic")]
    pub n_synthetic: usize,
    #[serde(flatten)]
    pub kind: ArmKind,
}

impl GeneratorArm {
    pub fn new(kind: ArmKind) -> Self {
        Self {
            name: None,
            n_synthetic: DEFAULT_N_SYNTHETIC,
            kind,
        }
    }

    pub fn label(&self) -> String {
        if let Some(n) = &self.name {
            return n.clone();
        }
        match &self.kind {
            ArmKind::Default => "Default",
            ArmKind::TableAugment(_) => "TableAugment",
            ArmKind::MixedModel(_) => "MixedModel",
            ArmKind::Scm(_) => "SCM",
            ArmKind::CausalMix { .. } => "CausalMix",
            ArmKind::TabEbm => "TabEBM",
            ArmKind::Ctgan => "CTGAN",
        }
        .to_string()
    }

    /// Real share of each training batch: the identity arm trains on real
    /// rows only, pure generators on synthetic rows only.
    pub fn alpha(&self) -> f64 {
        match &self.kind {
            ArmKind::Default => 1.0,
            ArmKind::CausalMix { alpha, .. } => *alpha,
            _ => 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            ArmKind::TabEbm | ArmKind::Ctgan => Err(GeneratorError::UnimplementedArm(self.label())),
            ArmKind::TableAugment(c) => c.validate(),
            ArmKind::MixedModel(c) => {
                if let Some(d) = &c.density {
                    d.validate()?;
                }
                if let Some(s) = &c.classifier {
                    s.validate()?;
                }
                Ok(())
            }
            ArmKind::Scm(c) => Ok(c.discovery.validate()?),
            ArmKind::CausalMix { alpha, sources } => {
                if !(0.0..=1.0).contains(alpha) {
                    return Err(GeneratorError::InvalidAlpha(*alpha));
                }
                if sources.is_empty() {
                    return Err(GeneratorError::InvalidConfig("causal_mix needs at least one source".into()));
                }
                for s in sources {
                    if matches!(s.kind, ArmKind::CausalMix { .. }) {
                        return Err(GeneratorError::InvalidConfig("causal_mix sources cannot nest".into()));
                    }
                    s.validate()?;
                }
                Ok(())
            }
            ArmKind::Default => Ok(()),
        }
        .and_then(|_| {
            if self.n_synthetic == 0 {
                Err(GeneratorError::InvalidConfig("n_synthetic must be at least 1".into()))
            } else {
                Ok(())
            }
        })
    }

    /// Whether building this arm runs structure discovery.
    pub fn needs_adjacency(&self) -> bool {
        match &self.kind {
            ArmKind::Scm(_) => true,
            ArmKind::CausalMix { sources, .. } => sources.iter().any(GeneratorArm::needs_adjacency),
            _ => false,
        }
    }
}

/// A fitted generator. Generation is read-only and may run concurrently.
pub trait SyntheticSource: Send + Sync {
    fn name(&self) -> String;
    fn generate(&self, rng: &mut SeededRng) -> Result<Table>;
}

pub fn generate_default(train: &Table) -> Table {
    train.clone()
}

pub struct DefaultSource {
    table: Table,
}

impl SyntheticSource for DefaultSource {
    fn name(&self) -> String {
        "Default".into()
    }

    fn generate(&self, _rng: &mut SeededRng) -> Result<Table> {
        Ok(generate_default(&self.table))
    }
}

pub struct TableAugmentSource {
    table: Table,
    cfg: TableAugmentConfig,
}

impl SyntheticSource for TableAugmentSource {
    fn name(&self) -> String {
        "TableAugment".into()
    }

    fn generate(&self, rng: &mut SeededRng) -> Result<Table> {
        let view = generate_table_augment(&self.table, &self.cfg, rng)?;
        align_to_schema(&view, &self.table)
    }
}

pub struct MixedModelSource {
    model: MixedModel,
    n: usize,
}

impl SyntheticSource for MixedModelSource {
    fn name(&self) -> String {
        "MixedModel".into()
    }

    fn generate(&self, rng: &mut SeededRng) -> Result<Table> {
        self.model.generate(self.n, rng)
    }
}

/// Draw a DAG from `c`, fit mechanisms on `table` and sample `n` rows.
pub fn generate_scm(
    table: &Table,
    c: &ProbAdjacency,
    tier: QualityTier,
    n: usize,
    rng: &mut SeededRng,
) -> Result<Table> {
    ScmSource::new(table.clone(), c.clone(), tier, false, n)?.generate(rng)
}

pub struct ScmSource {
    table: Table,
    adjacency: ProbAdjacency,
    tier: QualityTier,
    target_as_sink: bool,
    n: usize,
}

impl ScmSource {
    pub fn new(
        table: Table,
        adjacency: ProbAdjacency,
        tier: QualityTier,
        target_as_sink: bool,
        n: usize,
    ) -> Result<Self> {
        if adjacency.n_nodes() != table.n_cols() {
            return Err(GeneratorError::AdjacencyMismatch {
                matrix: adjacency.n_nodes(),
                table: table.n_cols(),
            });
        }
        Ok(Self {
            table,
            adjacency,
            tier,
            target_as_sink,
            n,
        })
    }

    pub fn adjacency(&self) -> &ProbAdjacency {
        &self.adjacency
    }

    /// One draw of the DAG and its fitted mechanisms.
    pub fn fit(&self, rng: &mut SeededRng) -> Result<ScmModel> {
        let mut dag = sample_dag(&self.adjacency, rng);
        if self.target_as_sink {
            dag = make_target_sink(&dag, self.table.schema().target_index());
        }
        Ok(fit_scm(&dag, &self.table, self.tier, rng)?)
    }
}

impl SyntheticSource for ScmSource {
    fn name(&self) -> String {
        "SCM".into()
    }

    fn generate(&self, rng: &mut SeededRng) -> Result<Table> {
        let scm = self.fit(rng)?;
        Ok(sample_scm(&scm, self.n, rng)?)
    }
}

/// Union of several sources.
pub struct UnionSource {
    sources: Vec<Arc<dyn SyntheticSource>>,
}

impl SyntheticSource for UnionSource {
    fn name(&self) -> String {
        let names: Vec<String> = self.sources.iter().map(|s| s.name()).collect();
        names.join("+")
    }

    fn generate(&self, rng: &mut SeededRng) -> Result<Table> {
        let tables = self
            .sources
            .iter()
            .map(|s| s.generate(rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Table::concat(&tables)?)
    }
}

/// Fit `arm` on the generator table. SCM arms reuse `adjacency` when given
/// and otherwise run discovery once here.
pub fn build_source(
    arm: &GeneratorArm,
    table: &Table,
    adjacency: Option<&ProbAdjacency>,
    rng: &mut SeededRng,
) -> Result<Arc<dyn SyntheticSource>> {
    arm.validate()?;
    Ok(match &arm.kind {
        ArmKind::Default => Arc::new(DefaultSource { table: table.clone() }),
        ArmKind::TableAugment(cfg) => Arc::new(TableAugmentSource {
            table: table.clone(),
            cfg: cfg.clone(),
        }),
        ArmKind::MixedModel(cfg) => Arc::new(MixedModelSource {
            model: MixedModel::fit(table, cfg, rng)?,
            n: arm.n_synthetic,
        }),
        ArmKind::Scm(cfg) => {
            let c = match adjacency {
                Some(c) => c.clone(),
                None => run_discovery_ensemble(table, &cfg.discovery, rng.next_u64())?.0,
            };
            Arc::new(ScmSource::new(
                table.clone(),
                c,
                cfg.quality,
                cfg.target_as_sink,
                arm.n_synthetic,
            )?)
        }
        ArmKind::CausalMix { sources, .. } => {
            let built = sources
                .iter()
                .map(|s| build_source(s, table, adjacency, rng))
                .collect::<Result<Vec<_>>>()?;
            Arc::new(UnionSource { sources: built })
        }
        ArmKind::TabEbm | ArmKind::Ctgan => unreachable!("rejected by validate"),
    })
}

/// Mix plan for an arm: the real table weighted by the arm's `alpha` and
/// the arm's fitted source, if it contributes synthetic rows.
pub fn plan_for_arm(
    arm: &GeneratorArm,
    real: &Table,
    generator_table: &Table,
    adjacency: Option<&ProbAdjacency>,
    rng: &mut SeededRng,
) -> Result<MixPlan> {
    let alpha = arm.alpha();
    let sources = if alpha < 1.0 {
        vec![build_source(arm, generator_table, adjacency, rng)?]
    } else {
        Vec::new()
    };
    Ok(MixPlan {
        alpha,
        real: real.clone(),
        sources,
        refresh_interval: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::table::{CodeBook, Column, ColumnKind, Schema};
    use ndarray::Array2;
    use rand::Rng;

    fn small(n: usize, rng: &mut SeededRng) -> Table {
        let cols = vec![
            Column::new("a", ColumnKind::Numeric),
            Column::new("b", ColumnKind::Numeric),
            Column::new("y", ColumnKind::Categorical),
        ];
        let mut data = Array2::zeros((n, 3));
        for r in 0..n {
            let a: f64 = rng.random_range(-1.0..1.0);
            data[[r, 0]] = a;
            data[[r, 1]] = 2.0 * a + rng.random_range(-0.1..0.1);
            data[[r, 2]] = (a > 0.0) as u8 as f64;
        }
        Table::new(Schema::new(cols, 2).unwrap(), data, CodeBook::default()).unwrap()
    }

    #[test]
    fn default_is_identity() {
        let t = small(20, &mut seeded(0));
        let src = build_source(&GeneratorArm::new(ArmKind::Default), &t, None, &mut seeded(1)).unwrap();
        assert_eq!(src.generate(&mut seeded(2)).unwrap().data(), t.data());
        assert_eq!(src.generate(&mut seeded(3)).unwrap().data(), t.data());
    }

    #[test]
    fn unimplemented_arms_are_rejected() {
        for kind in [ArmKind::TabEbm, ArmKind::Ctgan] {
            let err = GeneratorArm::new(kind).validate().unwrap_err();
            assert!(err.to_string().contains("unimplemented arm"));
        }
        let parsed: GeneratorArm = toml::from_str("kind = \"TabEBM\"").unwrap();
        assert!(parsed.validate().is_err());
    }

    #[test]
    fn arm_config_round_trips() {
        let arm = GeneratorArm::new(ArmKind::CausalMix {
            alpha: 0.5,
            sources: vec![GeneratorArm::new(ArmKind::Scm(ScmArmConfig::default()))],
        });
        let text = serde_json::to_string(&arm).unwrap();
        let back: GeneratorArm = serde_json::from_str(&text).unwrap();
        assert_eq!(back, arm);
        assert_eq!(back.alpha(), 0.5);
        assert!(back.needs_adjacency());
    }

    #[test]
    fn deterministic_adjacency_gives_same_dag() {
        let t = small(60, &mut seeded(4));
        let mut m = Array2::zeros((3, 3));
        m[[0, 1]] = 1.0;
        m[[0, 2]] = 1.0;
        let c = ProbAdjacency::from_matrix(m).unwrap();
        let src = ScmSource::new(t.clone(), c, QualityTier::Good, false, 100).unwrap();
        for s in 0..5 {
            let scm = src.fit(&mut seeded(s)).unwrap();
            assert_eq!(scm.dag().edges(), vec![(0, 1), (0, 2)]);
        }
        let out = src.generate(&mut seeded(9)).unwrap();
        assert_eq!(out.schema(), t.schema());
        assert!(!out.has_missing());
    }

    #[test]
    fn mix_batches_follow_rounding_rule() {
        let t = small(50, &mut seeded(5));
        let src = build_source(&GeneratorArm::new(ArmKind::Default), &t, None, &mut seeded(6)).unwrap();
        for (alpha, b, real) in [(0.5, 32, 16), (1.0, 10, 10), (0.25, 8, 2), (0.0, 8, 0)] {
            let plan = MixPlan {
                alpha,
                real: t.clone(),
                sources: vec![src.clone()],
                refresh_interval: Some(3),
            };
            let mut batches = build_mix_batches(plan, b, &mut seeded(7)).unwrap();
            for _ in 0..5 {
                let batch = batches.next_batch().unwrap();
                assert_eq!(batch.n_real, real);
                assert_eq!(batch.y.len(), b);
                assert_eq!(batch.source.iter().filter(|s| **s == RowSource::Real).count(), real);
            }
        }
    }

    #[test]
    fn partial_mix_without_sources_is_an_error() {
        let t = small(10, &mut seeded(8));
        let plan = MixPlan {
            alpha: 0.5,
            real: t.clone(),
            sources: vec![],
            refresh_interval: None,
        };
        assert!(matches!(
            build_mix_batches(plan, 8, &mut seeded(0)),
            Err(GeneratorError::EmptySyntheticPool)
        ));
        assert!(build_mix_batches(MixPlan::real_only(t), 8, &mut seeded(0)).is_ok());
    }

    #[test]
    fn epoch_covers_every_real_row() {
        let t = small(40, &mut seeded(9));
        let mut batches = build_mix_batches(MixPlan::real_only(t), 8, &mut seeded(1)).unwrap();
        let mut seen = [false; 40];
        for _ in 0..5 {
            for r in batches.next_batch().unwrap().real_rows {
                seen[r] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }
}
