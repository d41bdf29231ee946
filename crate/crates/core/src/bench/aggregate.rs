//! Score normalization and per-arm summaries of run records.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::report::quantize;
use super::RunRecord;
use crate::finetune::pearson;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricSign {
    HigherBetter,
    LowerBetter,
}

impl MetricSign {
    pub fn value(self) -> f64 {
        match self {
            MetricSign::HigherBetter => 1.0,
            MetricSign::LowerBetter => -1.0,
        }
    }
}

/// Percent change of `method` over `baseline`, signed so that positive means
/// better. `None` when the baseline is zero or either input is not finite.
pub fn normalize_score(method: f64, baseline: f64, sign: MetricSign) -> Option<f64> {
    if baseline == 0.0 || !baseline.is_finite() || !method.is_finite() {
        return None;
    }
    Some(sign.value() * (method / baseline - 1.0) * 100.0)
}

/// Linear-interpolated quantile of ascending `sorted`.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(values: &[f64]) -> f64 {
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    quantile(&s, 0.5)
}

/// Sample standard deviation; zero for a single value.
pub fn std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub n: usize,
    pub median: f64,
    pub mean: f64,
    pub std: f64,
    pub q1: f64,
    pub q3: f64,
    /// `q1 − 1.5·IQR` and `q3 + 1.5·IQR`, clipped to the observed range.
    pub whisker_low: f64,
    pub whisker_high: f64,
}

impl BoxStats {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut s = values.to_vec();
        s.sort_by(f64::total_cmp);
        let q1 = quantile(&s, 0.25);
        let q3 = quantile(&s, 0.75);
        let iqr = q3 - q1;
        Some(Self {
            n: s.len(),
            median: quantile(&s, 0.5),
            mean: s.iter().sum::<f64>() / s.len() as f64,
            std: std_dev(&s),
            q1,
            q3,
            whisker_low: (q1 - 1.5 * iqr).max(s[0]),
            whisker_high: (q3 + 1.5 * iqr).min(s[s.len() - 1]),
        })
    }

    fn quantized(self) -> Self {
        Self {
            median: quantize(self.median),
            mean: quantize(self.mean),
            std: quantize(self.std),
            q1: quantize(self.q1),
            q3: quantize(self.q3),
            whisker_low: quantize(self.whisker_low),
            whisker_high: quantize(self.whisker_high),
            ..self
        }
    }
}

/// Average ranks (1 = largest) with ties sharing the mean of their ranks.
pub fn average_ranks(scores: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j + 2) as f64 / 2.0;
        for &o in &order[i..=j] {
            ranks[o] = avg;
        }
        i = j + 1;
    }
    ranks
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRow {
    pub dataset: String,
    pub fold: usize,
    pub seed: u64,
    pub arm: String,
    pub rank: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapCell {
    pub dataset: String,
    pub arm: String,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub arm: String,
    pub n_records: usize,
    pub n_completed: usize,
    /// Normalized test ROC-AUC.
    pub test_score: Option<BoxStats>,
    pub val_score: Option<BoxStats>,
    pub mean_rank: Option<f64>,
    /// One minus the median over datasets of the validation–test log-loss
    /// correlation across folds.
    pub corr_gap: Option<f64>,
    /// Median over datasets of the fold-mean normalized validation score
    /// minus normalized test score.
    pub score_gap: Option<f64>,
}

/// Per-dataset, per-arm Pearson correlation of validation and test
/// log-loss across folds. Rows and columns are sorted by their average
/// defined correlation, descending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrMatrix {
    pub datasets: Vec<String>,
    pub arms: Vec<String>,
    /// `cells[dataset][arm]`; `None` where undefined.
    pub cells: Vec<Vec<Option<f64>>>,
}

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub n_records: usize,
    pub n_completed: usize,
    pub n_rank_groups: usize,
    pub arms: Vec<ArmSummary>,
    pub heatmap: Vec<HeatmapCell>,
    pub corr_matrix: CorrMatrix,
    pub ranks: Vec<RankRow>,
}

fn first_seen<'a>(it: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for s in it {
        if !out.iter().any(|o| o == s) {
            out.push(s.to_string());
        }
    }
    out
}

fn mean_defined(row: &[Option<f64>]) -> Option<f64> {
    let vals: Vec<f64> = row.iter().flatten().copied().collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

fn sort_by_average(labels: &mut Vec<String>, averages: &[Option<f64>]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..labels.len()).collect();
    idx.sort_by(|&a, &b| {
        let key = |i: usize| averages[i].unwrap_or(f64::NEG_INFINITY);
        key(b).total_cmp(&key(a)).then(a.cmp(&b))
    });
    *labels = idx.iter().map(|&i| labels[i].clone()).collect();
    idx
}

/// Validation–test log-loss correlations per dataset and arm.
pub fn val_test_gap(records: &[RunRecord]) -> CorrMatrix {
    let mut datasets = first_seen(records.iter().map(|r| r.dataset.as_str()));
    let mut arms = first_seen(records.iter().map(|r| r.arm.as_str()));
    let mut cells: Vec<Vec<Option<f64>>> = datasets
        .iter()
        .map(|d| {
            arms.iter()
                .map(|a| {
                    let (v, t): (Vec<f64>, Vec<f64>) = records
                        .iter()
                        .filter(|r| r.completed && &r.dataset == d && &r.arm == a)
                        .filter_map(|r| Some((r.val_log_loss?, r.test_log_loss?)))
                        .unzip();
                    pearson(&v, &t).ok().map(quantize)
                })
                .collect()
        })
        .collect();
    let row_avg: Vec<Option<f64>> = cells.iter().map(|r| mean_defined(r)).collect();
    let row_order = sort_by_average(&mut datasets, &row_avg);
    cells = row_order.iter().map(|&i| cells[i].clone()).collect();
    let col_avg: Vec<Option<f64>> = (0..arms.len())
        .map(|j| mean_defined(&cells.iter().map(|r| r[j]).collect::<Vec<_>>()))
        .collect();
    let col_order = sort_by_average(&mut arms, &col_avg);
    cells = cells
        .into_iter()
        .map(|r| col_order.iter().map(|&j| r[j]).collect())
        .collect();
    CorrMatrix { datasets, arms, cells }
}

/// Ranks of arms within every (dataset, fold, seed) group where each arm
/// has a completed record with a test ROC-AUC.
pub fn fold_ranks(records: &[RunRecord]) -> (Vec<RankRow>, usize) {
    let arms = first_seen(records.iter().map(|r| r.arm.as_str()));
    let mut groups: BTreeMap<(String, usize, u64), Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.dataset.clone(), r.fold, r.seed)).or_default().push(r);
    }
    let dataset_order = first_seen(records.iter().map(|r| r.dataset.as_str()));
    let mut keys: Vec<_> = groups.keys().cloned().collect();
    keys.sort_by_key(|(d, f, s)| (dataset_order.iter().position(|x| x == d), *f, *s));
    let mut rows = Vec::new();
    let mut n_groups = 0;
    for key in keys {
        let members = &groups[&key];
        let scores: Option<Vec<f64>> = arms
            .iter()
            .map(|a| {
                members
                    .iter()
                    .find(|r| &r.arm == a && r.completed)
                    .and_then(|r| r.test_roc_auc)
            })
            .collect();
        let Some(scores) = scores else { continue };
        n_groups += 1;
        for (arm, rank) in arms.iter().zip(average_ranks(&scores)) {
            rows.push(RankRow {
                dataset: key.0.clone(),
                fold: key.1,
                seed: key.2,
                arm: arm.clone(),
                rank,
            });
        }
    }
    (rows, n_groups)
}

pub fn aggregate(records: &[RunRecord]) -> Summary {
    let arms = first_seen(records.iter().map(|r| r.arm.as_str()));
    let datasets = first_seen(records.iter().map(|r| r.dataset.as_str()));
    let corr_matrix = val_test_gap(records);
    let (ranks, n_rank_groups) = fold_ranks(records);

    let mut heatmap = Vec::new();
    for d in &datasets {
        for a in &arms {
            let vals: Vec<f64> = records
                .iter()
                .filter(|r| r.completed && &r.dataset == d && &r.arm == a)
                .filter_map(|r| r.norm_test_roc_auc)
                .collect();
            if vals.is_empty() {
                continue;
            }
            heatmap.push(HeatmapCell {
                dataset: d.clone(),
                arm: a.clone(),
                n: vals.len(),
                mean: quantize(vals.iter().sum::<f64>() / vals.len() as f64),
                std: quantize(std_dev(&vals)),
            });
        }
    }

    let arm_summaries = arms
        .iter()
        .map(|a| {
            let mine: Vec<&RunRecord> = records.iter().filter(|r| &r.arm == a).collect();
            let done: Vec<&RunRecord> = mine.iter().copied().filter(|r| r.completed).collect();
            let test: Vec<f64> = done.iter().filter_map(|r| r.norm_test_roc_auc).collect();
            let val: Vec<f64> = done.iter().filter_map(|r| r.norm_val_roc_auc).collect();
            let my_ranks: Vec<f64> = ranks.iter().filter(|r| &r.arm == a).map(|r| r.rank).collect();
            let j = corr_matrix.arms.iter().position(|x| x == a).expect("arm in matrix");
            let corrs: Vec<f64> = corr_matrix.cells.iter().filter_map(|row| row[j]).collect();
            let gaps: Vec<f64> = datasets
                .iter()
                .filter_map(|d| {
                    let diffs: Vec<f64> = done
                        .iter()
                        .filter(|r| &r.dataset == d)
                        .filter_map(|r| Some(r.norm_val_roc_auc? - r.norm_test_roc_auc?))
                        .collect();
                    (!diffs.is_empty()).then(|| diffs.iter().sum::<f64>() / diffs.len() as f64)
                })
                .collect();
            ArmSummary {
                arm: a.clone(),
                n_records: mine.len(),
                n_completed: done.len(),
                test_score: BoxStats::from_values(&test).map(BoxStats::quantized),
                val_score: BoxStats::from_values(&val).map(BoxStats::quantized),
                mean_rank: (!my_ranks.is_empty())
                    .then(|| quantize(my_ranks.iter().sum::<f64>() / my_ranks.len() as f64)),
                corr_gap: (!corrs.is_empty()).then(|| quantize(1.0 - median(&corrs))),
                score_gap: (!gaps.is_empty()).then(|| quantize(median(&gaps))),
            }
        })
        .collect();

    Summary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        n_records: records.len(),
        n_completed: records.iter().filter(|r| r.completed).count(),
        n_rank_groups,
        arms: arm_summaries,
        heatmap,
        corr_matrix,
        ranks,
    }
}
