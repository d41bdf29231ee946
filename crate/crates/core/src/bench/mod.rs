//! Benchmark sweeps over datasets × folds × generator arms.
//!
//! Each fold is split, preprocessed on the generator copy of the training
//! rows, scored by a shared baseline, and then fine-tuned once per arm from
//! a shared initial checkpoint. Records are appended as they finish and the
//! sweep can be resumed from its output directory.

mod aggregate;
mod report;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use aggregate::{
    aggregate, average_ranks, fold_ranks, median, normalize_score, quantile, std_dev, val_test_gap, ArmSummary,
    BoxStats, CorrMatrix, HeatmapCell, MetricSign, RankRow, Summary, SUMMARY_SCHEMA_VERSION,
};
pub use report::{
    emit_reports, fmt_float, quantize, read_records, read_summary, records_to_csv, write_records, RECORD_COLUMNS,
};

use crate::discovery::{run_discovery_ensemble, EnsembleConfig, ProbAdjacency};
use crate::finetune::{write_checkpoint, finetune_until, log_loss, roc_auc, weight_distance, FineTuneConfig, ReferenceModel, StopReason};
use crate::generators::{plan_for_arm, ArmKind, GeneratorArm, GeneratorError};
use crate::models::{fit_classifier, ClassifierSpec, ClassifierFamily};
use crate::rng::{child, mix_seed, mix_str, seeded};
use crate::table::{impute, load_csv, stratified_split, zscore, ColumnKind, SchemaHint, Table};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

pub type Result<T, E = BenchError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub id: String,
    pub path: PathBuf,
    #[serde(default)]
    pub target: Option<String>,
    /// Column kinds to force; others are inferred.
    #[serde(default)]
    pub columns: BTreeMap<String, ColumnKind>,
}

impl DatasetSpec {
    pub fn hint(&self) -> SchemaHint {
        SchemaHint {
            target: self.target.clone(),
            columns: self.columns.clone(),
        }
    }
}

/// Reference scores every arm is normalized against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    #[default]
    Logistic,
    Knn,
    /// The shared initial checkpoint before any training.
    UntrainedReference,
}

fn default_folds() -> usize {
    10
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_budget() -> f64 {
    3600.0
}

fn default_workers() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub datasets: Vec<DatasetSpec>,
    #[serde(default = "default_folds")]
    pub folds: usize,
    pub arms: Vec<GeneratorArm>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Wall-clock budget of one (dataset, fold, arm) run.
    #[serde(default = "default_budget")]
    pub time_budget_seconds: f64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub baseline: BaselineKind,
    #[serde(default)]
    pub finetune: FineTuneConfig,
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(BenchError::Config(m));
        if self.datasets.is_empty() {
            return bad("at least one dataset is required".into());
        }
        if self.folds == 0 {
            return bad("folds must be at least 1".into());
        }
        if self.arms.is_empty() {
            return bad("at least one arm is required".into());
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if !(self.time_budget_seconds > 0.0) {
            return bad("time_budget_seconds must be positive".into());
        }
        let mut ids = HashSet::new();
        for d in &self.datasets {
            if !ids.insert(&d.id) {
                return bad(format!("duplicate dataset id `{}`", d.id));
            }
        }
        let mut labels = HashSet::new();
        for a in &self.arms {
            a.validate().map_err(|e| BenchError::Config(e.to_string()))?;
            if !labels.insert(a.label()) {
                return bad(format!("duplicate arm name `{}`; set `name` to disambiguate", a.label()));
            }
        }
        self.finetune.validate().map_err(|e| BenchError::Config(e.to_string()))
    }

    /// Parse a TOML config; relative dataset paths are resolved against the
    /// config file's directory.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: BenchConfig = toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
        for d in &mut cfg.datasets {
            if d.path.is_relative() {
                d.path = base_dir.join(&d.path);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| BenchError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }
}

/// One (dataset, fold, arm, seed) outcome. Floats are stored rounded to nine
/// significant digits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub dataset: String,
    pub fold: usize,
    pub arm: String,
    pub seed: u64,
    pub completed: bool,
    pub val_log_loss: Option<f64>,
    pub test_log_loss: Option<f64>,
    pub val_roc_auc: Option<f64>,
    pub test_roc_auc: Option<f64>,
    pub baseline_val_roc_auc: Option<f64>,
    pub baseline_test_roc_auc: Option<f64>,
    pub norm_val_roc_auc: Option<f64>,
    pub norm_test_roc_auc: Option<f64>,
    pub norm_val_log_loss: Option<f64>,
    pub norm_test_log_loss: Option<f64>,
    pub weight_distance_total: Option<f64>,
    pub weight_distance_hidden: Option<f64>,
    pub weight_distance_head: Option<f64>,
    pub best_step: Option<usize>,
    pub steps_run: usize,
    pub wall_seconds: f64,
    pub error: Option<String>,
}

pub type RecordKey = (String, usize, String, u64);

impl RunRecord {
    fn failed(dataset: &str, fold: usize, arm: &str, seed: u64, error: String, wall: f64) -> Self {
        Self {
            dataset: dataset.into(),
            fold,
            arm: arm.into(),
            seed,
            completed: false,
            val_log_loss: None,
            test_log_loss: None,
            val_roc_auc: None,
            test_roc_auc: None,
            baseline_val_roc_auc: None,
            baseline_test_roc_auc: None,
            norm_val_roc_auc: None,
            norm_test_roc_auc: None,
            norm_val_log_loss: None,
            norm_test_log_loss: None,
            weight_distance_total: None,
            weight_distance_hidden: None,
            weight_distance_head: None,
            best_step: None,
            steps_run: 0,
            wall_seconds: quantize(wall),
            error: Some(error.replace(['\n', '\r'], " ")),
        }
    }

    pub fn key(&self) -> RecordKey {
        (self.dataset.clone(), self.fold, self.arm.clone(), self.seed)
    }
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub out_dir: PathBuf,
    pub workers: usize,
    pub resume: bool,
    /// Also write each fine-tuned model to `checkpoints/` under `out_dir`.
    pub save_checkpoints: bool,
}

/// File name of the checkpoint for one run; non-alphanumeric label
/// characters become `_`.
pub fn checkpoint_name(dataset: &str, fold: usize, arm: &str, seed: u64) -> String {
    let clean = |s: &str| -> String { s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect() };
    format!("{}__f{fold}__s{seed}__{}.ckpt", clean(dataset), clean(arm))
}

#[derive(Debug, Clone)]
pub struct BenchOutcome {
    pub records: Vec<RunRecord>,
    pub computed: usize,
    pub skipped: usize,
    pub summary: Summary,
}

impl BenchOutcome {
    pub fn n_failed(&self) -> usize {
        self.records.iter().filter(|r| !r.completed).count()
    }
}

/// Scores of a classifier on one split: log-loss and ROC-AUC.
#[derive(Debug, Clone, Copy)]
struct Scores {
    log_loss: f64,
    roc_auc: Option<f64>,
}

fn score(probs: &Array2<f64>, labels: &[usize]) -> Result<Scores, String> {
    Ok(Scores {
        log_loss: log_loss(probs.view(), labels).map_err(|e| e.to_string())?,
        roc_auc: roc_auc(probs.view(), labels).ok(),
    })
}

/// Widen class-indexed probabilities to all `k` classes.
fn expand(classes: &[usize], probs: Array2<f64>, k: usize) -> Array2<f64> {
    let mut out = Array2::zeros((probs.nrows(), k));
    for (j, &c) in classes.iter().enumerate() {
        out.column_mut(c).assign(&probs.column(j));
    }
    out
}

struct Prepared {
    train: Table,
    val: Table,
    test: Table,
    k: usize,
}

fn prepare(table: &Table, fold_seed: u64) -> Result<Prepared, String> {
    let split = stratified_split(table, fold_seed).map_err(|e| e.to_string())?;
    let (imputed, impute_stats) = impute(&split.train, None).map_err(|e| e.to_string())?;
    let (train, z_stats) = zscore(&imputed, None).map_err(|e| e.to_string())?;
    let apply = |t: &Table| -> Result<Table, String> {
        let (t, _) = impute(t, Some(&impute_stats)).map_err(|e| e.to_string())?;
        let (t, _) = zscore(&t, Some(&z_stats)).map_err(|e| e.to_string())?;
        Ok(t)
    };
    Ok(Prepared {
        val: apply(&split.val)?,
        test: apply(&split.test)?,
        train,
        k: table.n_classes(),
    })
}

fn baseline_scores(
    kind: BaselineKind,
    p: &Prepared,
    init: &ReferenceModel,
    rng: &mut crate::rng::SeededRng,
) -> Result<(Scores, Scores), String> {
    let fitted = match kind {
        BaselineKind::UntrainedReference => None,
        BaselineKind::Logistic | BaselineKind::Knn => {
            let spec = match kind {
                BaselineKind::Knn => ClassifierSpec::Knn { k: 5 },
                _ => ClassifierSpec::default_for(ClassifierFamily::Logistic),
            };
            let x = p.train.features();
            let y = p.train.target_codes().map_err(|e| e.to_string())?;
            Some(fit_classifier(&spec, x.view(), &y, rng).map_err(|e| e.to_string())?)
        }
    };
    let on = |t: &Table| -> Result<Scores, String> {
        let x = t.features();
        let probs = match &fitted {
            Some(m) => expand(m.classes(), m.predict_proba(x.view()).map_err(|e| e.to_string())?, p.k),
            None => init.predict_proba(x.view()).map_err(|e| e.to_string())?,
        };
        score(&probs, &t.target_codes().map_err(|e| e.to_string())?)
    };
    Ok((on(&p.val)?, on(&p.test)?))
}

fn discovery_config(arm: &GeneratorArm) -> Option<&EnsembleConfig> {
    match &arm.kind {
        ArmKind::Scm(c) => Some(&c.discovery),
        ArmKind::CausalMix { sources, .. } => sources.iter().find_map(discovery_config),
        _ => None,
    }
}

struct FoldTask<'a> {
    dataset: &'a DatasetSpec,
    table: std::result::Result<&'a Table, String>,
    fold: usize,
    seed: u64,
    arms: Vec<&'a GeneratorArm>,
}

fn run_fold(task: &FoldTask<'_>, cfg: &BenchConfig, ckpt_dir: Option<&Path>, sink: &dyn Fn(RunRecord)) {
    let started = Instant::now();
    let id = &task.dataset.id;
    let fail_all = |msg: String| {
        for arm in &task.arms {
            sink(RunRecord::failed(
                id,
                task.fold,
                &arm.label(),
                task.seed,
                msg.clone(),
                started.elapsed().as_secs_f64(),
            ));
        }
    };
    let table = match &task.table {
        Ok(t) => *t,
        Err(e) => return fail_all(e.clone()),
    };
    let fold_seed = task.seed.wrapping_add(task.fold as u64);
    let base = mix_str(fold_seed, id);
    let prepared = match prepare(table, fold_seed) {
        Ok(p) => p,
        Err(e) => return fail_all(e),
    };
    let d = prepared.train.n_cols() - 1;
    let init = ReferenceModel::new(d, prepared.k, &mut child(base, 0));
    let (base_val, base_test) = match baseline_scores(cfg.baseline, &prepared, &init, &mut child(base, 1)) {
        Ok(s) => s,
        Err(e) => return fail_all(format!("baseline: {e}")),
    };
    let mut adjacency: HashMap<String, std::result::Result<ProbAdjacency, String>> = HashMap::new();
    let budget = Duration::from_secs_f64(cfg.time_budget_seconds);

    for arm in &task.arms {
        let label = arm.label();
        let start = Instant::now();
        let deadline = start + budget;
        let c = discovery_config(arm).map(|dc| {
            let key = serde_json::to_string(dc).expect("config serializes");
            adjacency
                .entry(key)
                .or_insert_with(|| {
                    run_discovery_ensemble(&prepared.train, dc, mix_seed(base, 2))
                        .map(|(c, _)| c)
                        .map_err(|e| e.to_string())
                })
                .clone()
        });
        let c = match c.transpose() {
            Ok(c) => c,
            Err(e) => {
                sink(RunRecord::failed(id, task.fold, &label, task.seed, format!("discovery: {e}"), 0.0));
                continue;
            }
        };
        let mut rng = seeded(mix_str(base, &label));
        let outcome = plan_for_arm(arm, &prepared.train, &prepared.train, c.as_ref(), &mut rng)
            .map_err(|e: GeneratorError| e.to_string())
            .and_then(|plan| {
                finetune_until(&init, plan, &prepared.val, &cfg.finetune, &mut rng, Some(deadline))
                    .map_err(|e| e.to_string())
            });
        let wall = start.elapsed().as_secs_f64();
        let (model, hist) = match outcome {
            Ok(v) => v,
            Err(e) => {
                sink(RunRecord::failed(id, task.fold, &label, task.seed, e, wall));
                continue;
            }
        };
        let evaluated = (|| -> Result<(Scores, Scores), String> {
            let on = |t: &Table| -> Result<Scores, String> {
                let (ll, auc) = model.evaluate(t).map_err(|e| e.to_string())?;
                Ok(Scores {
                    log_loss: ll,
                    roc_auc: auc,
                })
            };
            Ok((on(&prepared.val)?, on(&prepared.test)?))
        })();
        let (val, test) = match evaluated {
            Ok(v) => v,
            Err(e) => {
                sink(RunRecord::failed(id, task.fold, &label, task.seed, e, wall));
                continue;
            }
        };
        if let Some(dir) = ckpt_dir {
            let path = dir.join(checkpoint_name(id, task.fold, &label, task.seed));
            if let Err(e) = write_checkpoint(&model, &path) {
                log::warn!("{}: {e}", path.display());
            }
        }
        let wd = weight_distance(&model);
        let norm_auc = |m: Option<f64>, b: Option<f64>| normalize_score(m?, b?, MetricSign::HigherBetter);
        let q = |x: Option<f64>| x.map(quantize);
        let timed_out = hist.stopped_reason == StopReason::Deadline;
        let finite = [val.log_loss, test.log_loss, wd.total].iter().all(|v| v.is_finite())
            && val.roc_auc.is_some()
            && test.roc_auc.is_some();
        sink(RunRecord {
            dataset: id.clone(),
            fold: task.fold,
            arm: label,
            seed: task.seed,
            completed: !timed_out && finite,
            val_log_loss: q(Some(val.log_loss)),
            test_log_loss: q(Some(test.log_loss)),
            val_roc_auc: q(val.roc_auc),
            test_roc_auc: q(test.roc_auc),
            baseline_val_roc_auc: q(base_val.roc_auc),
            baseline_test_roc_auc: q(base_test.roc_auc),
            norm_val_roc_auc: q(norm_auc(val.roc_auc, base_val.roc_auc)),
            norm_test_roc_auc: q(norm_auc(test.roc_auc, base_test.roc_auc)),
            norm_val_log_loss: q(normalize_score(val.log_loss, base_val.log_loss, MetricSign::LowerBetter)),
            norm_test_log_loss: q(normalize_score(test.log_loss, base_test.log_loss, MetricSign::LowerBetter)),
            weight_distance_total: q(Some(wd.total)),
            weight_distance_hidden: q(Some(wd.per_component.hidden)),
            weight_distance_head: q(Some(wd.per_component.head)),
            best_step: Some(hist.best_step),
            steps_run: hist.steps.last().map_or(0, |s| s.step),
            wall_seconds: quantize(wall),
            error: timed_out.then(|| "time budget exhausted".to_string()),
        });
    }
}

/// Stable record order: config seed, dataset, fold, arm; records outside
/// the config come last.
fn sort_records(records: &mut [RunRecord], cfg: &BenchConfig) {
    let labels: Vec<String> = cfg.arms.iter().map(GeneratorArm::label).collect();
    let pos = |v: Option<usize>| v.unwrap_or(usize::MAX);
    records.sort_by(|a, b| {
        let ka = (
            pos(cfg.seeds.iter().position(|&s| s == a.seed)),
            pos(cfg.datasets.iter().position(|d| d.id == a.dataset)),
            a.fold,
            pos(labels.iter().position(|l| *l == a.arm)),
        );
        let kb = (
            pos(cfg.seeds.iter().position(|&s| s == b.seed)),
            pos(cfg.datasets.iter().position(|d| d.id == b.dataset)),
            b.fold,
            pos(labels.iter().position(|l| *l == b.arm)),
        );
        ka.cmp(&kb).then_with(|| a.key().cmp(&b.key()))
    });
}

pub fn run_benchmark(cfg: &BenchConfig, opts: &BenchOptions) -> Result<BenchOutcome> {
    cfg.validate()?;
    let out = &opts.out_dir;
    fs::create_dir_all(out).map_err(|e| BenchError::Io {
        path: out.display().to_string(),
        message: e.to_string(),
    })?;
    let records_path = out.join("records.csv");
    let mut existing = if opts.resume && records_path.exists() {
        read_records(&records_path)?
    } else {
        write_records(&records_path, &[])?;
        Vec::new()
    };
    let done: HashSet<RecordKey> = existing.iter().map(RunRecord::key).collect();

    let tables: Vec<std::result::Result<Table, String>> = cfg
        .datasets
        .iter()
        .map(|d| load_csv(&d.path, Some(&d.hint())).map_err(|e| e.to_string()))
        .collect();

    let mut tasks = Vec::new();
    let mut skipped = 0;
    for &seed in &cfg.seeds {
        for (d, table) in cfg.datasets.iter().zip(&tables) {
            for fold in 0..cfg.folds {
                let arms: Vec<&GeneratorArm> = cfg
                    .arms
                    .iter()
                    .filter(|a| {
                        let fresh = !done.contains(&(d.id.clone(), fold, a.label(), seed));
                        skipped += usize::from(!fresh);
                        fresh
                    })
                    .collect();
                if !arms.is_empty() {
                    tasks.push(FoldTask {
                        dataset: d,
                        table: table.as_ref().map_err(Clone::clone),
                        fold,
                        seed,
                        arms,
                    });
                }
            }
        }
    }

    let fresh: Mutex<Vec<RunRecord>> = Mutex::new(Vec::new());
    let writer = Mutex::new(
        OpenOptions::new()
            .append(true)
            .open(&records_path)
            .map_err(|e| BenchError::Io {
                path: records_path.display().to_string(),
                message: e.to_string(),
            })?,
    );
    let sink = |r: RunRecord| {
        let line = records_to_csv(std::slice::from_ref(&r));
        let body = line.split_once('\n').map_or("", |(_, rest)| rest);
        if let Ok(mut f) = writer.lock() {
            if let Err(e) = f.write_all(body.as_bytes()) {
                log::warn!("could not append record: {e}");
            }
        }
        log::info!(
            "{} fold {} {}: {}",
            r.dataset,
            r.fold,
            r.arm,
            if r.completed { "done" } else { "incomplete" }
        );
        fresh.lock().expect("record lock").push(r);
    };
    let workers = opts.workers.max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| BenchError::Config(e.to_string()))?;
    let ckpt_dir = opts.save_checkpoints.then(|| out.join("checkpoints"));
    if let Some(d) = &ckpt_dir {
        fs::create_dir_all(d).map_err(|e| BenchError::Io {
            path: d.display().to_string(),
            message: e.to_string(),
        })?;
    }
    pool.install(|| tasks.par_iter().for_each(|t| run_fold(t, cfg, ckpt_dir.as_deref(), &sink)));

    let fresh = fresh.into_inner().expect("record lock");
    let computed = fresh.len();
    existing.extend(fresh);
    sort_records(&mut existing, cfg);
    let summary = emit_reports(&existing, out)?;
    Ok(BenchOutcome {
        records: existing,
        computed,
        skipped,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tabebm_arm_fails_config_load() {
        let text = r#"
            folds = 2
            [[datasets]]
            id = "x"
            path = "x.csv"
            [[arms]]
            kind = "TabEBM"
        "#;
        let err = BenchConfig::from_toml(text, Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("unimplemented arm"));
    }

    #[test]
    fn defaults_fill_in() {
        let text = r#"
            [[datasets]]
            id = "x"
            path = "data/x.csv"
            [[arms]]
            kind = "default"
        "#;
        let cfg = BenchConfig::from_toml(text, Path::new("/cfg")).unwrap();
        assert_eq!(cfg.folds, 10);
        assert_eq!(cfg.time_budget_seconds, 3600.0);
        assert_eq!(cfg.datasets[0].path, PathBuf::from("/cfg/data/x.csv"));
        assert_eq!(cfg.finetune, FineTuneConfig::default());
    }

    #[test]
    fn duplicate_arm_labels_are_rejected() {
        let text = r#"
            [[datasets]]
            id = "x"
            path = "x.csv"
            [[arms]]
            kind = "default"
            [[arms]]
            kind = "default"
        "#;
        assert!(BenchConfig::from_toml(text, Path::new(".")).is_err());
    }
}
