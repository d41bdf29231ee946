//! Command-line entry points.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use causalmix::bench::{emit_reports, read_records, run_benchmark, BenchConfig, BenchOptions};
use causalmix::discovery::{run_discovery_ensemble, write_run_reports, EnsembleConfig, ProbAdjacency};
use causalmix::finetune::{finetune, weight_distance, write_checkpoint, FineTuneConfig, ReferenceModel};
use causalmix::generators::{build_source, plan_for_arm, ArmKind, GeneratorArm, ScmSource};
use causalmix::rng::{child, seeded};
use causalmix::scm::{sample_scm, NodeSummary};
use causalmix::table::{impute, inverse_zscore, load_csv, load_csv_with, zscore, PreprocessStats, SchemaHint};
use causalmix::{ColumnKind, Table};

#[derive(Debug, Parser)]
#[command(name = "causalmix", version, about = "Causal discovery, SCM synthesis and mixed fine-tuning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Skip runs already present in the output directory.
    #[arg(long)]
    pub resume: bool,
    /// Keep every fine-tuned bench model under `checkpoints/`.
    #[arg(long)]
    pub checkpoints: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate edge frequencies with repeated PC runs.
    Discover(Common),
    /// Write a synthetic table and a manifest.
    Generate(Common),
    /// Fine-tune the reference model on one train/validation pair.
    Finetune(Common),
    /// Run a datasets × folds × arms sweep.
    Bench(Common),
    /// Rebuild summary files from an existing records.csv.
    Report(Common),
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Run(String),
    /// The sweep finished but some runs are incomplete.
    Failures(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Run(_) => 1,
            CliError::Failures(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Run(m) => write!(f, "{m}"),
            CliError::Failures(n) => write!(f, "{n} runs did not complete"),
        }
    }
}

fn run_err(e: impl std::fmt::Display) -> CliError {
    CliError::Run(e.to_string())
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub path: PathBuf,
    #[serde(default)]
    pub target: Option<String>,
    #[serde(default)]
    pub columns: BTreeMap<String, ColumnKind>,
    /// Validation CSV for `finetune`.
    #[serde(default)]
    pub val: Option<PathBuf>,
    /// Edge-frequency CSV reused by SCM generators.
    #[serde(default)]
    pub adjacency: Option<PathBuf>,
}

/// One file with a section per module.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub data: Option<DataSection>,
    pub discovery: EnsembleConfig,
    pub generator: Option<GeneratorArm>,
    pub finetune: FineTuneConfig,
    pub bench: Option<BenchConfig>,
}

fn load_config(common: &Common) -> Result<(PipelineConfig, PathBuf), CliError> {
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut cfg: PipelineConfig = toml::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?;
    let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let resolve = |p: &mut PathBuf| {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    };
    if let Some(d) = &mut cfg.data {
        resolve(&mut d.path);
        if let Some(v) = &mut d.val {
            resolve(v);
        }
        if let Some(a) = &mut d.adjacency {
            resolve(a);
        }
    }
    if let Some(b) = &mut cfg.bench {
        for d in &mut b.datasets {
            resolve(&mut d.path);
        }
        b.validate().map_err(|e| CliError::Config(e.to_string()))?;
    }
    cfg.discovery.validate().map_err(|e| CliError::Config(e.to_string()))?;
    cfg.finetune.validate().map_err(|e| CliError::Config(e.to_string()))?;
    if let Some(g) = &cfg.generator {
        g.validate().map_err(|e| CliError::Config(e.to_string()))?;
    }
    Ok((cfg, base))
}

fn out_dir(common: &Common, fallback: &str) -> Result<PathBuf, CliError> {
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from(fallback));
    fs::create_dir_all(&dir).map_err(|e| run_err(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn data_section(cfg: &PipelineConfig) -> Result<&DataSection, CliError> {
    cfg.data
        .as_ref()
        .ok_or_else(|| CliError::Config("a [data] section is required".into()))
}

fn hint(d: &DataSection) -> SchemaHint {
    SchemaHint {
        target: d.target.clone(),
        columns: d.columns.clone(),
    }
}

/// Impute and z-score a table, returning the statistics to undo it.
fn preprocess(t: &Table) -> Result<(Table, PreprocessStats, PreprocessStats), CliError> {
    let (imputed, istats) = impute(t, None).map_err(run_err)?;
    let (z, zstats) = zscore(&imputed, None).map_err(run_err)?;
    Ok((z, istats, zstats))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(run_err)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| run_err(format!("{}: {e}", path.display())))
}

fn discover(common: &Common) -> Result<(), CliError> {
    let (cfg, _) = load_config(common)?;
    let data = data_section(&cfg)?;
    let table = load_csv(&data.path, Some(&hint(data))).map_err(run_err)?;
    let (prepared, _, _) = preprocess(&table)?;
    let seed = common.seed.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.workers.unwrap_or(0))
        .build()
        .map_err(run_err)?;
    let (c, reports) = pool
        .install(|| run_discovery_ensemble(&prepared, &cfg.discovery, seed))
        .map_err(run_err)?;
    let out = out_dir(common, "discover_out")?;
    c.write_csv(&out.join("adjacency.csv")).map_err(run_err)?;
    write_run_reports(&out.join("runs.csv"), &reports).map_err(run_err)?;
    write_json(&out.join("runs.json"), &reports)?;
    log::info!(
        "{} of {} runs completed; mean edge frequency {:.4}",
        reports.iter().filter(|r| r.completed).count(),
        reports.len(),
        c.density()
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct GenerateManifest {
    arm: String,
    seed: u64,
    rows: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    quality: Option<causalmix::scm::QualityTier>,
    #[serde(skip_serializing_if = "Option::is_none")]
    edges: Option<Vec<(String, String)>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    nodes: Option<Vec<NodeSummary>>,
}

fn read_adjacency(data: &DataSection, table: &Table) -> Result<Option<ProbAdjacency>, CliError> {
    match &data.adjacency {
        Some(p) => {
            let c = ProbAdjacency::read_csv(p).map_err(run_err)?;
            Ok(Some(c.aligned_to(&table.schema().names()).map_err(run_err)?))
        }
        None => Ok(None),
    }
}

fn generate(common: &Common) -> Result<(), CliError> {
    let (cfg, _) = load_config(common)?;
    let data = data_section(&cfg)?;
    let arm = cfg
        .generator
        .clone()
        .ok_or_else(|| CliError::Config("a [generator] section is required".into()))?;
    let table = load_csv(&data.path, Some(&hint(data))).map_err(run_err)?;
    let (prepared, _, zstats) = preprocess(&table)?;
    let seed = common.seed.unwrap_or(0);
    let mut rng = seeded(seed);
    let adjacency = read_adjacency(data, &prepared)?;
    let mut manifest = GenerateManifest {
        arm: arm.label(),
        seed,
        rows: 0,
        quality: None,
        edges: None,
        nodes: None,
    };
    let synthetic = match &arm.kind {
        ArmKind::Scm(sc) => {
            let c = match adjacency {
                Some(c) => c,
                None => run_discovery_ensemble(&prepared, &sc.discovery, seed).map_err(run_err)?.0,
            };
            let source = ScmSource::new(prepared.clone(), c, sc.quality, sc.target_as_sink, arm.n_synthetic)
                .map_err(run_err)?;
            let scm = source.fit(&mut rng).map_err(run_err)?;
            let names = prepared.schema().names();
            manifest.quality = Some(sc.quality);
            manifest.edges = Some(
                scm.dag()
                    .edges()
                    .into_iter()
                    .map(|(a, b)| (names[a].clone(), names[b].clone()))
                    .collect(),
            );
            manifest.nodes = Some(scm.describe());
            sample_scm(&scm, arm.n_synthetic, &mut rng).map_err(run_err)?
        }
        _ => build_source(&arm, &prepared, adjacency.as_ref(), &mut rng)
            .and_then(|s| s.generate(&mut rng))
            .map_err(run_err)?,
    };
    let original = inverse_zscore(&synthetic, &zstats).map_err(run_err)?;
    manifest.rows = original.n_rows();
    let out = out_dir(common, "generate_out")?;
    original.write_csv(out.join("synthetic.csv")).map_err(run_err)?;
    write_json(&out.join("manifest.json"), &manifest)
}

fn finetune_cmd(common: &Common) -> Result<(), CliError> {
    let (cfg, _) = load_config(common)?;
    let data = data_section(&cfg)?;
    let val_path = data
        .val
        .as_ref()
        .ok_or_else(|| CliError::Config("[data] needs `val` for finetune".into()))?;
    let arm = cfg.generator.clone().unwrap_or_else(|| GeneratorArm::new(ArmKind::Default));
    let train_raw = load_csv(&data.path, Some(&hint(data))).map_err(run_err)?;
    let val_raw = load_csv_with(val_path, &train_raw).map_err(run_err)?;
    let (train, istats, zstats) = preprocess(&train_raw)?;
    let (val, _) = impute(&val_raw, Some(&istats)).map_err(run_err)?;
    let (val, _) = zscore(&val, Some(&zstats)).map_err(run_err)?;
    let seed = common.seed.unwrap_or(0);
    let k = train.n_classes().max(val.n_classes());
    let init = ReferenceModel::new(train.n_cols() - 1, k, &mut child(seed, 0));
    let mut rng = child(seed, 1);
    let adjacency = read_adjacency(data, &train)?;
    let plan = plan_for_arm(&arm, &train, &train, adjacency.as_ref(), &mut rng).map_err(run_err)?;
    let (model, history) = finetune(&init, plan, &val, &cfg.finetune, &mut rng).map_err(run_err)?;
    let out = out_dir(common, "finetune_out")?;
    write_json(&out.join("history.json"), &history)?;
    write_json(&out.join("weight_distance.json"), &weight_distance(&model))?;
    write_checkpoint(&model, out.join("model.ckpt")).map_err(run_err)?;
    log::info!(
        "best step {} with validation log-loss {:.6}",
        history.best_step,
        history.best_val_log_loss
    );
    Ok(())
}

fn bench(common: &Common) -> Result<(), CliError> {
    let (cfg, _) = load_config(common)?;
    let mut bc = cfg
        .bench
        .ok_or_else(|| CliError::Config("a [bench] section is required".into()))?;
    if let Some(s) = common.seed {
        bc.seeds = vec![s];
    }
    let out = common
        .out
        .clone()
        .or_else(|| bc.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("bench_out"));
    let opts = BenchOptions {
        out_dir: out,
        workers: common.workers.unwrap_or(bc.workers),
        resume: common.resume,
        save_checkpoints: common.checkpoints,
    };
    let outcome = run_benchmark(&bc, &opts).map_err(|e| match e {
        causalmix::bench::BenchError::Config(m) => CliError::Config(m),
        other => run_err(other),
    })?;
    log::info!(
        "{} runs computed, {} skipped, {} records total",
        outcome.computed,
        outcome.skipped,
        outcome.records.len()
    );
    match outcome.n_failed() {
        0 => Ok(()),
        n => Err(CliError::Failures(n)),
    }
}

fn report(common: &Common) -> Result<(), CliError> {
    let dir = common
        .out
        .clone()
        .ok_or_else(|| CliError::Config("--out must point at a bench output directory".into()))?;
    let records = read_records(&dir.join("records.csv")).map_err(run_err)?;
    let summary = emit_reports(&records, &dir).map_err(run_err)?;
    for a in &summary.arms {
        let med = a.test_score.as_ref().map(|b| b.median);
        log::info!("{}: median normalized test ROC-AUC {:?}, mean rank {:?}", a.arm, med, a.mean_rank);
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Discover(c) => discover(c),
        Command::Generate(c) => generate(c),
        Command::Finetune(c) => finetune_cmd(c),
        Command::Bench(c) => bench(c),
        Command::Report(c) => report(c),
    }
}
