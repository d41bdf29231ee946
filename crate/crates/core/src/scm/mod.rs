//! Additive-noise structural causal models fitted on real data.
//!
//! A DAG is drawn from edge frequencies ([`sample_dag`]), every node gets a
//! mechanism fitted on its parents ([`fit_scm`]), and synthetic rows are
//! produced by propagating resampled noise in topological order
//! ([`sample_scm`]).

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::discovery::ProbAdjacency;
use crate::graph::Dag;
use crate::models::{
    fit_classifier, fit_regressor, ClassifierFamily, ClassifierSpec, FittedClassifier, FittedRegressor,
    ModelError, RegressorFamily, RegressorSpec,
};
use crate::rng::SeededRng;
use crate::table::{CodeBook, ColumnKind, Schema, Table, TableError};

#[derive(Debug, Error)]
pub enum ScmError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error("DAG has {dag} nodes but the table has {table} columns")]
    WidthMismatch { dag: usize, table: usize },
    #[error("adjacency matrix has {matrix} nodes but the table has {table} columns")]
    MatrixMismatch { matrix: usize, table: usize },
    #[error("table has missing cells; impute before fitting")]
    MissingValues,
    #[error("sample count must be at least 1")]
    InvalidSampleCount,
    #[error("model family pool is empty")]
    EmptyPool,
}

pub type Result<T, E = ScmError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum QualityTier {
    Good,
    Better,
}

/// Families a node mechanism is drawn from, uniformly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilyPool {
    pub regressors: Vec<RegressorFamily>,
    pub classifiers: Vec<ClassifierFamily>,
}

impl QualityTier {
    pub fn pool(self) -> FamilyPool {
        use ClassifierFamily as C;
        use RegressorFamily as R;
        let mut pool = FamilyPool {
            regressors: vec![R::Linear, R::Polynomial, R::GradBoost],
            classifiers: vec![C::Logistic, C::PolynomialLogistic, C::GradBoost],
        };
        if self == QualityTier::Better {
            pool.regressors.extend([R::Ridge, R::Lasso, R::RandomForest, R::Knn]);
            pool.classifiers.extend([C::RandomForest, C::Knn]);
        }
        pool
    }
}

/// Draw a DAG: each `i → j` independently with probability `c_ij`, then one
/// direction of every two-way pair is dropped at random, then cycles are
/// broken by deleting a random edge of the first cycle a depth-first search
/// from the lowest index finds.
pub fn sample_dag(c: &ProbAdjacency, rng: &mut SeededRng) -> Dag {
    let d = c.n_nodes();
    let mut adj = vec![vec![false; d]; d];
    for (i, row) in adj.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            let u: f64 = rng.random();
            *cell = i != j && u < c.get(i, j);
        }
    }
    for i in 0..d {
        for j in i + 1..d {
            if adj[i][j] && adj[j][i] {
                if rng.random_bool(0.5) {
                    adj[i][j] = false;
                } else {
                    adj[j][i] = false;
                }
            }
        }
    }
    while let Some(cycle) = find_cycle(&adj) {
        let (a, b) = cycle[rng.random_range(0..cycle.len())];
        adj[a][b] = false;
    }
    let edges: Vec<(usize, usize)> = (0..d)
        .flat_map(|i| (0..d).map(move |j| (i, j)))
        .filter(|&(i, j)| adj[i][j])
        .collect();
    Dag::from_edges(d, &edges).expect("cycles were removed")
}

/// Edges of the first directed cycle met by DFS from node 0 upward, visiting
/// children in index order.
fn find_cycle(adj: &[Vec<bool>]) -> Option<Vec<(usize, usize)>> {
    let d = adj.len();
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut state = vec![0u8; d];
    for root in 0..d {
        if state[root] != 0 {
            continue;
        }
        let mut stack: Vec<(usize, usize)> = vec![(root, 0)];
        state[root] = 1;
        while let Some(&mut (v, ref mut next)) = stack.last_mut() {
            if let Some(w) = (*next..d).find(|&w| adj[v][w]) {
                *next = w + 1;
                match state[w] {
                    0 => {
                        state[w] = 1;
                        stack.push((w, 0));
                    }
                    1 => {
                        let start = stack.iter().position(|&(u, _)| u == w).expect("on stack");
                        let path: Vec<usize> = stack[start..].iter().map(|&(u, _)| u).collect();
                        let mut cycle: Vec<(usize, usize)> = path.windows(2).map(|p| (p[0], p[1])).collect();
                        cycle.push((v, w));
                        return Some(cycle);
                    }
                    _ => {}
                }
            } else {
                state[v] = 2;
                stack.pop();
            }
        }
    }
    None
}

/// Structural equation of one node.
#[derive(Debug, Clone)]
pub enum Mechanism {
    /// Resample observed values and add Gaussian jitter of width `bandwidth`.
    RootNumeric { values: Vec<f64>, bandwidth: f64 },
    /// Resample observed codes.
    RootCategorical { codes: Vec<f64> },
    /// Regressor prediction plus a residual drawn from the training residuals.
    NumericChild {
        parents: Vec<usize>,
        model: FittedRegressor,
        residuals: Vec<f64>,
    },
    /// Label drawn from the classifier's predicted distribution.
    CategoricalChild {
        parents: Vec<usize>,
        model: FittedClassifier,
    },
    /// A categorical child with a single observed class.
    Constant { parents: Vec<usize>, value: f64 },
}

impl Mechanism {
    pub fn parents(&self) -> &[usize] {
        match self {
            Mechanism::RootNumeric { .. } | Mechanism::RootCategorical { .. } => &[],
            Mechanism::NumericChild { parents, .. }
            | Mechanism::CategoricalChild { parents, .. }
            | Mechanism::Constant { parents, .. } => parents,
        }
    }

    /// Human-readable family name for manifests.
    pub fn family(&self) -> String {
        match self {
            Mechanism::RootNumeric { .. } => "root_numeric".into(),
            Mechanism::RootCategorical { .. } => "root_categorical".into(),
            Mechanism::NumericChild { model, .. } => family_name(&model.spec().family()),
            Mechanism::CategoricalChild { model, .. } => family_name(&model.spec().family()),
            Mechanism::Constant { .. } => "constant".into(),
        }
    }
}

fn family_name<T: Serialize>(f: &T) -> String {
    serde_json::to_value(f)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

#[derive(Debug, Clone)]
pub struct ScmModel {
    dag: Dag,
    mechanisms: Vec<Mechanism>,
    schema: Schema,
    codebook: CodeBook,
    order: Vec<usize>,
}

/// Manifest entry describing one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSummary {
    pub name: String,
    pub family: String,
    pub parents: Vec<String>,
}

impl ScmModel {
    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    pub fn mechanisms(&self) -> &[Mechanism] {
        &self.mechanisms
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn fitted_model_count(&self) -> usize {
        self.mechanisms
            .iter()
            .filter(|m| matches!(m, Mechanism::NumericChild { .. } | Mechanism::CategoricalChild { .. }))
            .count()
    }

    pub fn describe(&self) -> Vec<NodeSummary> {
        let names = self.schema.names();
        self.mechanisms
            .iter()
            .enumerate()
            .map(|(i, m)| NodeSummary {
                name: names[i].clone(),
                family: m.family(),
                parents: m.parents().iter().map(|&p| names[p].clone()).collect(),
            })
            .collect()
    }
}

/// Reverse every edge leaving `target`, making it a sink. No cycle can pass
/// through a node without out-edges, so the result stays acyclic.
pub fn make_target_sink(dag: &Dag, target: usize) -> Dag {
    let mut edges: Vec<(usize, usize)> = dag
        .edges()
        .into_iter()
        .map(|(a, b)| if a == target { (b, a) } else { (a, b) })
        .collect();
    edges.sort_unstable();
    edges.dedup();
    Dag::from_edges(dag.n_nodes(), &edges).expect("target has no out-edges")
}

pub fn fit_scm(dag: &Dag, table: &Table, tier: QualityTier, rng: &mut SeededRng) -> Result<ScmModel> {
    fit_scm_with_pool(dag, table, &tier.pool(), rng)
}

/// Silverman's rule: `0.9 · min(σ, IQR/1.34) · n^(−1/5)`.
fn silverman(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let h = p * (sorted.len() - 1) as f64;
        let lo = h.floor() as usize;
        let hi = h.ceil() as usize;
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    };
    let iqr = q(0.75) - q(0.25);
    let spread = match (sd > 0.0, iqr > 0.0) {
        (true, true) => sd.min(iqr / 1.34),
        (true, false) => sd,
        (false, true) => iqr / 1.34,
        (false, false) => 0.0,
    };
    0.9 * spread * n.powf(-0.2)
}

pub fn fit_scm_with_pool(dag: &Dag, table: &Table, pool: &FamilyPool, rng: &mut SeededRng) -> Result<ScmModel> {
    if dag.n_nodes() != table.n_cols() {
        return Err(ScmError::WidthMismatch {
            dag: dag.n_nodes(),
            table: table.n_cols(),
        });
    }
    if table.has_missing() {
        return Err(ScmError::MissingValues);
    }
    if pool.regressors.is_empty() || pool.classifiers.is_empty() {
        return Err(ScmError::EmptyPool);
    }
    let order = dag.topological_order().expect("Dag is acyclic");
    let data = table.data();
    let mut mechanisms: Vec<Option<Mechanism>> = vec![None; table.n_cols()];
    for &node in &order {
        let parents = dag.parents(node).to_vec();
        let y = data.column(node);
        let kind = table.schema().column(node).kind;
        let mech = if parents.is_empty() {
            match kind {
                ColumnKind::Numeric => Mechanism::RootNumeric {
                    values: y.to_vec(),
                    bandwidth: silverman(y.as_slice_memory_order().map_or(&y.to_vec(), |s| s)),
                },
                ColumnKind::Categorical => Mechanism::RootCategorical { codes: y.to_vec() },
            }
        } else {
            let x = data.select(Axis(1), &parents);
            match kind {
                ColumnKind::Numeric => {
                    let family = *pool.regressors.choose(rng).expect("pool checked");
                    let model = fit_with_fallback(family, x.view(), y, rng)?;
                    let pred = model.predict(x.view())?;
                    let residuals = (&y - &pred).to_vec();
                    Mechanism::NumericChild {
                        parents,
                        model,
                        residuals,
                    }
                }
                ColumnKind::Categorical => {
                    let codes: Vec<usize> = y.iter().map(|&v| v as usize).collect();
                    let mut distinct = codes.clone();
                    distinct.sort_unstable();
                    distinct.dedup();
                    if distinct.len() == 1 {
                        Mechanism::Constant {
                            parents,
                            value: distinct[0] as f64,
                        }
                    } else {
                        let family = *pool.classifiers.choose(rng).expect("pool checked");
                        let spec = ClassifierSpec::default_for(family);
                        let model = match fit_classifier(&spec, x.view(), &codes, rng) {
                            Ok(m) => m,
                            Err(e) => {
                                log::warn!("{family:?} failed on node {node} ({e}); using logistic");
                                fit_classifier(
                                    &ClassifierSpec::default_for(ClassifierFamily::Logistic),
                                    x.view(),
                                    &codes,
                                    rng,
                                )?
                            }
                        };
                        Mechanism::CategoricalChild { parents, model }
                    }
                }
            }
        };
        mechanisms[node] = Some(mech);
    }
    Ok(ScmModel {
        dag: dag.clone(),
        mechanisms: mechanisms.into_iter().map(|m| m.expect("every node visited")).collect(),
        schema: table.schema().clone(),
        codebook: table.codebook().clone(),
        order,
    })
}

fn fit_with_fallback(
    family: RegressorFamily,
    x: ArrayView2<'_, f64>,
    y: ndarray::ArrayView1<'_, f64>,
    rng: &mut SeededRng,
) -> Result<FittedRegressor> {
    match fit_regressor(&RegressorSpec::default_for(family), x, y, rng) {
        Ok(m) => Ok(m),
        Err(e) => {
            log::warn!("{family:?} regressor failed ({e}); using linear");
            Ok(fit_regressor(&RegressorSpec::Linear, x, y, rng)?)
        }
    }
}

/// Draw `n` rows by evaluating nodes in topological order.
pub fn sample_scm(scm: &ScmModel, n: usize, rng: &mut SeededRng) -> Result<Table> {
    if n == 0 {
        return Err(ScmError::InvalidSampleCount);
    }
    let d = scm.mechanisms.len();
    let mut data = Array2::<f64>::zeros((n, d));
    for &node in &scm.order {
        let values: Vec<f64> = match &scm.mechanisms[node] {
            Mechanism::RootNumeric { values, bandwidth } => (0..n)
                .map(|_| {
                    let v = values[rng.random_range(0..values.len())];
                    if *bandwidth > 0.0 {
                        v + bandwidth * rng.sample::<f64, _>(StandardNormal)
                    } else {
                        v
                    }
                })
                .collect(),
            Mechanism::RootCategorical { codes } => {
                (0..n).map(|_| codes[rng.random_range(0..codes.len())]).collect()
            }
            Mechanism::NumericChild {
                parents,
                model,
                residuals,
            } => {
                let x = data.select(Axis(1), parents);
                let pred = model.predict(x.view())?;
                pred.iter()
                    .map(|p| p + residuals[rng.random_range(0..residuals.len())])
                    .collect()
            }
            Mechanism::CategoricalChild { parents, model } => {
                let x = data.select(Axis(1), parents);
                let probs = model.predict_proba(x.view())?;
                let classes = model.classes();
                probs
                    .rows()
                    .into_iter()
                    .map(|row| {
                        let u: f64 = rng.random();
                        let mut acc = 0.0;
                        let mut pick = classes[classes.len() - 1];
                        for (c, p) in classes.iter().zip(row.iter()) {
                            acc += p;
                            if u < acc {
                                pick = *c;
                                break;
                            }
                        }
                        pick as f64
                    })
                    .collect()
            }
            Mechanism::Constant { value, .. } => vec![*value; n],
        };
        data.column_mut(node).assign(&ndarray::Array1::from(values));
    }
    Ok(Table::new(scm.schema.clone(), data, scm.codebook.clone())?)
}
