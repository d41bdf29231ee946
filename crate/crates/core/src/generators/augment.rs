//! Feature-subsampled, target-resampled views of a real table.

use std::collections::HashMap;

use ndarray::{Array2, Axis};
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{GeneratorError, Result};
use crate::rng::SeededRng;
use crate::table::{CodeBook, Column, ColumnKind, PreprocessStats, ColumnStats, Schema, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IncludeTarget {
    Always,
    Never,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubSampleFeatures {
    pub active: bool,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub include_target: IncludeTarget,
}

impl Default for SubSampleFeatures {
    fn default() -> Self {
        Self {
            active: true,
            min_ratio: 0.5,
            max_ratio: 1.0,
            include_target: IncludeTarget::Random,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomSampleTarget {
    pub active: bool,
    pub include_target: IncludeTarget,
    pub allow_target_as_target: bool,
    pub use_dataset_num_classes: bool,
    pub min_discrete_values: usize,
    pub max_discrete_values: usize,
}

impl Default for RandomSampleTarget {
    fn default() -> Self {
        Self {
            active: true,
            include_target: IncludeTarget::Random,
            allow_target_as_target: true,
            use_dataset_num_classes: true,
            min_discrete_values: 2,
            max_discrete_values: 10,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TableAugmentConfig {
    pub sub_sample_features: SubSampleFeatures,
    pub random_sample_target: RandomSampleTarget,
}

impl TableAugmentConfig {
    pub fn validate(&self) -> Result<()> {
        let s = &self.sub_sample_features;
        let in_range = |r: f64| (0.5..=1.0).contains(&r);
        if !in_range(s.min_ratio) || !in_range(s.max_ratio) || s.min_ratio > s.max_ratio {
            return Err(GeneratorError::InvalidConfig(format!(
                "sub_sample_features ratios must satisfy 0.5 <= min_ratio <= max_ratio <= 1.0, got {} and {}",
                s.min_ratio, s.max_ratio
            )));
        }
        let t = &self.random_sample_target;
        if t.min_discrete_values < 2 || t.min_discrete_values > t.max_discrete_values {
            return Err(GeneratorError::InvalidConfig(format!(
                "discrete value range [{}, {}] is invalid",
                t.min_discrete_values, t.max_discrete_values
            )));
        }
        Ok(())
    }
}

fn include(policy: IncludeTarget, p_random: f64, rng: &mut SeededRng) -> bool {
    match policy {
        IncludeTarget::Always => true,
        IncludeTarget::Never => false,
        IncludeTarget::Random => rng.random_bool(p_random.clamp(0.0, 1.0)),
    }
}

/// Map values to at most `c_hat` classes: the `c_hat − 1` most frequent
/// values get classes `0..c_hat−1` in frequency order (ties to the smaller
/// value) and every other value shares class `c_hat − 1`.
pub fn discretize(values: &[f64], c_hat: usize) -> Vec<usize> {
    let mut counts: HashMap<u64, (f64, usize)> = HashMap::new();
    for &v in values {
        counts.entry(v.to_bits()).or_insert((v, 0)).1 += 1;
    }
    let mut ranked: Vec<(f64, usize)> = counts.into_values().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.total_cmp(&b.0)));
    let top: HashMap<u64, usize> = ranked
        .iter()
        .take(c_hat.saturating_sub(1))
        .enumerate()
        .map(|(class, &(v, _))| (v.to_bits(), class))
        .collect();
    let rest = c_hat.saturating_sub(1);
    values
        .iter()
        .map(|v| top.get(&v.to_bits()).copied().unwrap_or(rest))
        .collect()
}

/// One augmented view. The result has its own schema: a subset of the
/// columns, possibly with a different target.
pub fn generate_table_augment(table: &Table, cfg: &TableAugmentConfig, rng: &mut SeededRng) -> Result<Table> {
    cfg.validate()?;
    if table.n_cols() < 2 {
        return Err(GeneratorError::InvalidConfig("table augment needs at least two columns".into()));
    }
    let schema = table.schema();
    let old_target = schema.target_index();
    let features = schema.feature_indices();
    let d = features.len();

    // Feature subsampling. The old target, when kept, is additional to the
    // ceil(ratio·d) features.
    let sub = &cfg.sub_sample_features;
    let (mut kept, keep_old_target) = if sub.active {
        let ratio = if sub.max_ratio > sub.min_ratio {
            rng.random_range(sub.min_ratio..=sub.max_ratio)
        } else {
            sub.min_ratio
        };
        let k = ((ratio * d as f64).ceil() as usize).clamp(1, d);
        let mut picked: Vec<usize> = index::sample(rng, d, k).into_iter().map(|i| features[i]).collect();
        picked.sort_unstable();
        let keep = include(sub.include_target, k as f64 / d as f64, rng);
        (picked, keep)
    } else {
        (features.clone(), true)
    };

    let rs = &cfg.random_sample_target;
    let new_target = if rs.active {
        let mut candidates = kept.clone();
        if rs.allow_target_as_target && include(rs.include_target, 0.5, rng) {
            candidates.push(old_target);
        }
        if candidates.is_empty() {
            return Err(GeneratorError::NoTargetCandidate);
        }
        candidates[rng.random_range(0..candidates.len())]
    } else {
        old_target
    };
    if keep_old_target || new_target == old_target {
        kept.push(old_target);
    }
    if !kept.contains(&new_target) {
        kept.push(new_target);
    }
    kept.sort_unstable();
    kept.dedup();

    let c_hat = if rs.use_dataset_num_classes {
        table.observed_codes(old_target).len().max(2)
    } else {
        rng.random_range(rs.min_discrete_values..=rs.max_discrete_values)
    };

    let mut data = table.data().select(Axis(1), &kept);
    let target_pos = kept.iter().position(|&c| c == new_target).expect("target kept");
    let target_kind = schema.column(new_target).kind;
    let cardinality = if target_kind == ColumnKind::Categorical {
        table.observed_codes(new_target).len()
    } else {
        usize::MAX
    };
    let discretized = rs.active && cardinality > c_hat;
    if discretized {
        let values: Vec<f64> = data.column(target_pos).to_vec();
        let classes = discretize(&values, c_hat);
        for (cell, class) in data.column_mut(target_pos).iter_mut().zip(classes) {
            *cell = class as f64;
        }
    }

    let columns: Vec<Column> = kept
        .iter()
        .map(|&c| {
            let col = schema.column(c);
            if c == new_target {
                Column::new(col.name.clone(), ColumnKind::Categorical)
            } else {
                col.clone()
            }
        })
        .collect();
    let mut codebook = CodeBook::default();
    for (pos, &c) in kept.iter().enumerate() {
        if discretized && c == new_target {
            continue;
        }
        if let Some(labels) = table.codebook().labels(c) {
            codebook.set_labels(pos, labels.to_vec());
        }
    }
    Ok(Table::new(Schema::new(columns, target_pos)?, data, codebook)?)
}

/// Project a view back onto `reference`'s schema so it can feed a model
/// trained on the real columns. Shared feature columns are copied, absent
/// ones take the reference mean (mode for categoricals), and the view's
/// target codes become labels clamped to the reference class range.
pub fn align_to_schema(view: &Table, reference: &Table) -> Result<Table> {
    let stats = PreprocessStats::fit(reference)?;
    let ref_schema = reference.schema();
    let ref_target = ref_schema.target_index();
    let view_target = view.schema().target_index();
    let k = reference.n_classes().max(1);
    let n = view.n_rows();
    let mut out = Array2::<f64>::zeros((n, ref_schema.width()));
    for (j, col) in ref_schema.columns().iter().enumerate() {
        let mut dst = out.column_mut(j);
        if j == ref_target {
            for (cell, &v) in dst.iter_mut().zip(view.column(view_target)) {
                *cell = v.min((k - 1) as f64);
            }
            continue;
        }
        match view.schema().index_of(&col.name).filter(|&i| i != view_target) {
            Some(i) => dst.assign(&view.column(i)),
            None => {
                let fill = match stats.columns[j] {
                    ColumnStats::Numeric { mean, .. } => mean,
                    ColumnStats::Categorical { mode } => mode,
                };
                dst.fill(fill);
            }
        }
    }
    Ok(reference.with_data(out)?)
}
