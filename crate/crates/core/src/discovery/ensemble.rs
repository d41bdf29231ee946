//! Repeated PC runs on subsampled data, aggregated into edge frequencies.

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use ndarray::{Array2, Axis};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pc::{pc_orient, pc_skeleton, PcVariant, DIRECTED, UNDIRECTED};
use super::{CiTest, DiscoveryError, FisherZ};
use crate::rng::{child, SeededRng};
use crate::table::Table;

/// How the count of runs finding an edge is normalised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Denominator {
    /// Every run, including incomplete ones and ones that dropped a column.
    TotalRuns,
    /// Runs in which both endpoints survived column subsampling.
    BothPresent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub n_runs: usize,
    pub alpha_min: f64,
    pub alpha_max: f64,
    /// Cycled by run index.
    pub variants: Vec<PcVariant>,
    pub max_rows: usize,
    pub max_cols: usize,
    pub max_cond: usize,
    pub time_cap_seconds: f64,
    pub denominator: Denominator,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            n_runs: 100,
            alpha_min: 0.005,
            alpha_max: 0.1,
            variants: vec![PcVariant::Pc, PcVariant::PcStable],
            max_rows: 1000,
            max_cols: 50,
            max_cond: 3,
            time_cap_seconds: 1200.0,
            denominator: Denominator::TotalRuns,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<(), DiscoveryError> {
        let bad = |m: &str| Err(DiscoveryError::InvalidConfig(m.to_string()));
        if self.n_runs == 0 {
            return bad("n_runs must be at least 1");
        }
        if !(self.alpha_min > 0.0 && self.alpha_min <= self.alpha_max && self.alpha_max < 1.0) {
            return bad("alpha range must satisfy 0 < alpha_min <= alpha_max < 1");
        }
        if self.variants.is_empty() {
            return bad("at least one PC variant is required");
        }
        if self.max_rows == 0 || self.max_cols < 2 {
            return bad("max_rows >= 1 and max_cols >= 2 required");
        }
        if !(self.time_cap_seconds > 0.0) {
            return bad("time cap must be positive");
        }
        Ok(())
    }
}

/// What one discovery run did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub index: usize,
    pub alpha: f64,
    pub variant: PcVariant,
    pub completed: bool,
    pub duration_seconds: f64,
    pub rows_used: usize,
    /// Original column indices examined by this run.
    pub columns: Vec<usize>,
}

/// One run's 0/1 adjacency over the full column set.
#[derive(Debug, Clone, PartialEq)]
pub struct RunAdjacency {
    pub edges: Array2<u8>,
    pub present: Vec<bool>,
    pub completed: bool,
}

/// Directed-edge frequencies `c_ij`, with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbAdjacency {
    matrix: Array2<f64>,
    total_runs: usize,
    names: Vec<String>,
}

impl ProbAdjacency {
    pub fn new(matrix: Array2<f64>, total_runs: usize, names: Vec<String>) -> Result<Self, DiscoveryError> {
        let d = matrix.nrows();
        if matrix.ncols() != d || names.len() != d {
            return Err(DiscoveryError::InvalidMatrix(format!(
                "expected a square matrix with {} names, got {}x{}",
                names.len(),
                d,
                matrix.ncols()
            )));
        }
        for ((i, j), &v) in matrix.indexed_iter() {
            if !(0.0..=1.0).contains(&v) {
                return Err(DiscoveryError::InvalidMatrix(format!("entry ({i}, {j}) = {v} outside [0, 1]")));
            }
            if i == j && v != 0.0 {
                return Err(DiscoveryError::InvalidMatrix(format!("non-zero diagonal at {i}")));
            }
        }
        Ok(Self {
            matrix,
            total_runs,
            names,
        })
    }

    /// Frequencies over unnamed columns `x0, x1, …`.
    pub fn from_matrix(matrix: Array2<f64>) -> Result<Self, DiscoveryError> {
        let names = (0..matrix.nrows()).map(|i| format!("x{i}")).collect();
        Self::new(matrix, 0, names)
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[[i, j]]
    }

    pub fn n_nodes(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn total_runs(&self) -> usize {
        self.total_runs
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Mean of the off-diagonal entries.
    pub fn density(&self) -> f64 {
        let d = self.n_nodes();
        if d < 2 {
            return 0.0;
        }
        self.matrix.sum() / (d * (d - 1)) as f64
    }

    /// CSV with the column names as header and one matrix row per line.
    pub fn write_csv(&self, path: &Path) -> Result<(), DiscoveryError> {
        let io = |e: csv::Error| DiscoveryError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        };
        let mut w = csv::Writer::from_path(path).map_err(io)?;
        w.write_record(&self.names).map_err(io)?;
        for row in self.matrix.rows() {
            w.write_record(row.iter().map(|v| format!("{v}"))).map_err(io)?;
        }
        w.flush().map_err(|e| io(e.into()))?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self, DiscoveryError> {
        let io = |e: csv::Error| DiscoveryError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        };
        let mut r = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(io)?;
        let names: Vec<String> = r.headers().map_err(io)?.iter().map(str::to_string).collect();
        let d = names.len();
        let mut values = Vec::with_capacity(d * d);
        for rec in r.records() {
            let rec = rec.map_err(io)?;
            for cell in rec.iter() {
                values.push(cell.parse::<f64>().map_err(|_| {
                    DiscoveryError::InvalidMatrix(format!("non-numeric entry {cell:?}"))
                })?);
            }
        }
        if values.len() != d * d {
            return Err(DiscoveryError::InvalidMatrix(format!(
                "expected {d}x{d} entries, found {}",
                values.len()
            )));
        }
        let matrix = Array2::from_shape_vec((d, d), values).expect("length checked");
        Self::new(matrix, 0, names)
    }

    /// Reorder/select columns to match `names`.
    pub fn aligned_to(&self, names: &[String]) -> Result<Self, DiscoveryError> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| {
                self.names
                    .iter()
                    .position(|m| m == n)
                    .ok_or_else(|| DiscoveryError::InvalidMatrix(format!("matrix lacks column {n}")))
            })
            .collect::<Result<_, _>>()?;
        let matrix = Array2::from_shape_fn((idx.len(), idx.len()), |(a, b)| self.matrix[[idx[a], idx[b]]]);
        Self::new(matrix, self.total_runs, names.to_vec())
    }
}

/// Sample a sorted subset of `k` indices out of `n` (all when `k >= n`).
fn subsample(n: usize, k: usize, rng: &mut SeededRng) -> Vec<usize> {
    if k >= n {
        return (0..n).collect();
    }
    let mut v = rand::seq::index::sample(rng, n, k).into_vec();
    v.sort_unstable();
    v
}

/// Run the ensemble on a preprocessed table using Fisher-z tests on all
/// columns, the target included.
pub fn run_discovery_ensemble(
    table: &Table,
    cfg: &EnsembleConfig,
    base_seed: u64,
) -> Result<(ProbAdjacency, Vec<RunReport>), DiscoveryError> {
    if table.has_missing() {
        return Err(DiscoveryError::MissingValues);
    }
    let data = table.data();
    let (counts, reports) = run_ensemble_with(table.n_cols(), data.nrows(), cfg, base_seed, |rows, cols| {
        let sub = data.select(Axis(0), rows).select(Axis(1), cols);
        Box::new(FisherZ::new(sub.view()))
    })?;
    let adj = ProbAdjacency::new(counts, cfg.n_runs, table.schema().names())?;
    Ok((adj, reports))
}

/// Core ensemble loop. `make_test(rows, cols)` builds the CI test for one
/// run on the selected row and column indices.
pub fn run_ensemble_with<F>(
    d: usize,
    n_rows: usize,
    cfg: &EnsembleConfig,
    base_seed: u64,
    make_test: F,
) -> Result<(Array2<f64>, Vec<RunReport>), DiscoveryError>
where
    F: Fn(&[usize], &[usize]) -> Box<dyn CiTest> + Sync,
{
    cfg.validate()?;
    if d < 2 {
        return Err(DiscoveryError::TooFewColumns(d));
    }
    let runs: Vec<(RunAdjacency, RunReport)> = (0..cfg.n_runs)
        .into_par_iter()
        .map(|index| single_run(index, d, n_rows, cfg, base_seed, &make_test))
        .collect();
    let completed = runs.iter().filter(|(r, _)| r.completed).count();
    if completed == 0 {
        return Err(DiscoveryError::NoCompletedRuns(cfg.n_runs));
    }
    let mut hits = Array2::<f64>::zeros((d, d));
    let mut present = Array2::<f64>::zeros((d, d));
    for (adj, _) in &runs {
        for i in 0..d {
            for j in 0..d {
                if adj.present[i] && adj.present[j] {
                    present[[i, j]] += 1.0;
                }
                if adj.completed && adj.edges[[i, j]] == 1 {
                    hits[[i, j]] += 1.0;
                }
            }
        }
    }
    let freq = Array2::from_shape_fn((d, d), |(i, j)| {
        let den = match cfg.denominator {
            Denominator::TotalRuns => cfg.n_runs as f64,
            Denominator::BothPresent => present[[i, j]],
        };
        if i == j || den == 0.0 {
            0.0
        } else {
            hits[[i, j]] / den
        }
    });
    Ok((freq, runs.into_iter().map(|(_, r)| r).collect()))
}

fn single_run<F>(
    index: usize,
    d: usize,
    n_rows: usize,
    cfg: &EnsembleConfig,
    base_seed: u64,
    make_test: &F,
) -> (RunAdjacency, RunReport)
where
    F: Fn(&[usize], &[usize]) -> Box<dyn CiTest> + Sync,
{
    let start = Instant::now();
    let mut rng = child(base_seed, index as u64);
    let alpha = rng.random_range(cfg.alpha_min.ln()..=cfg.alpha_max.ln()).exp();
    let variant = cfg.variants[index % cfg.variants.len()];
    let rows = subsample(n_rows, cfg.max_rows, &mut rng);
    let cols = subsample(d, cfg.max_cols, &mut rng);
    let test = make_test(&rows, &cols);
    let deadline = start + Duration::from_secs_f64(cfg.time_cap_seconds);
    let mut edges = Array2::<u8>::zeros((d, d));
    let outcome = pc_skeleton(test.as_ref(), alpha, variant, cfg.max_cond, &mut rng, Some(deadline));
    let completed = match outcome {
        Ok(skel) => {
            let cpdag = pc_orient(&skel);
            for ((a, b), &mark) in cpdag.indexed_iter() {
                if mark == DIRECTED || mark == UNDIRECTED {
                    edges[[cols[a], cols[b]]] = 1;
                }
            }
            true
        }
        Err(e) => {
            log::warn!("discovery run {index} discarded: {e}");
            false
        }
    };
    let mut present = vec![false; d];
    for &c in &cols {
        present[c] = true;
    }
    (
        RunAdjacency {
            edges,
            present,
            completed,
        },
        RunReport {
            index,
            alpha,
            variant,
            completed,
            duration_seconds: start.elapsed().as_secs_f64(),
            rows_used: rows.len(),
            columns: cols,
        },
    )
}

/// JSON sidecar with one entry per run.
pub fn write_run_reports(path: &Path, reports: &[RunReport]) -> Result<(), DiscoveryError> {
    let body = serde_json::to_string_pretty(reports).expect("reports serialise");
    fs::write(path, body).map_err(|e| DiscoveryError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}
