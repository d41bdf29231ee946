//! Batches mixing real and synthetic rows in a fixed proportion.

use std::sync::Arc;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::RngCore;

use super::{GeneratorError, Result, SyntheticSource};
use crate::rng::{child, SeededRng};
use crate::table::Table;

/// Real data plus synthetic sources, weighted by `alpha` (the real share).
#[derive(Clone)]
pub struct MixPlan {
    pub alpha: f64,
    pub real: Table,
    pub sources: Vec<Arc<dyn SyntheticSource>>,
    /// Regenerate the synthetic pool every this many batches; `None`
    /// generates it once.
    pub refresh_interval: Option<usize>,
}

impl MixPlan {
    pub fn real_only(real: Table) -> Self {
        Self {
            alpha: 1.0,
            real,
            sources: Vec::new(),
            refresh_interval: None,
        }
    }

    /// `(real, synthetic)` row counts of a batch.
    pub fn composition(&self, batch_size: usize) -> (usize, usize) {
        let real = (self.alpha * batch_size as f64).round() as usize;
        (real, batch_size - real)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowSource {
    Real,
    Synthetic,
}

/// Rows of one batch: real rows first, then synthetic rows.
#[derive(Debug, Clone)]
pub struct MixBatch {
    pub x: Array2<f64>,
    pub y: Vec<usize>,
    pub source: Vec<RowSource>,
    pub n_real: usize,
    pub n_synthetic: usize,
    /// Row indices into the real table, for the real part.
    pub real_rows: Vec<usize>,
}

/// Cycles through a pool in shuffled epochs.
#[derive(Debug, Clone)]
struct EpochSampler {
    order: Vec<usize>,
    pos: usize,
    rng: SeededRng,
}

impl EpochSampler {
    fn new(n: usize, rng: SeededRng) -> Self {
        Self {
            order: (0..n).collect(),
            pos: n,
            rng,
        }
    }

    fn next(&mut self) -> usize {
        if self.pos == self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
        self.pos += 1;
        self.order[self.pos - 1]
    }
}

struct Pool {
    x: Array2<f64>,
    y: Vec<usize>,
}

impl Pool {
    fn from_table(t: &Table) -> Result<Self> {
        Ok(Self {
            x: t.features(),
            y: t.target_codes()?,
        })
    }
}

/// Deterministic stream of mixed batches.
pub struct MixBatches {
    plan: MixPlan,
    n_real: usize,
    n_syn: usize,
    real: Pool,
    real_sampler: EpochSampler,
    synthetic: Option<Pool>,
    syn_sampler: Option<EpochSampler>,
    syn_seed: u64,
    gen_rng: SeededRng,
    produced: usize,
}

pub fn build_mix_batches(plan: MixPlan, batch_size: usize, rng: &mut SeededRng) -> Result<MixBatches> {
    if !(0.0..=1.0).contains(&plan.alpha) {
        return Err(GeneratorError::InvalidAlpha(plan.alpha));
    }
    if batch_size < 2 {
        return Err(GeneratorError::InvalidConfig("batch size must be at least 2".into()));
    }
    if plan.real.n_rows() == 0 {
        return Err(GeneratorError::InvalidConfig("real table is empty".into()));
    }
    if plan.refresh_interval == Some(0) {
        return Err(GeneratorError::InvalidConfig("refresh interval must be at least 1".into()));
    }
    let (n_real, n_syn) = plan.composition(batch_size);
    if n_syn > 0 && plan.sources.is_empty() {
        return Err(GeneratorError::EmptySyntheticPool);
    }
    let base = rng.next_u64();
    let real = Pool::from_table(&plan.real)?;
    let real_sampler = EpochSampler::new(real.y.len(), child(base, 1));
    let mut batches = MixBatches {
        n_real,
        n_syn,
        real,
        real_sampler,
        synthetic: None,
        syn_sampler: None,
        syn_seed: base,
        gen_rng: child(base, 3),
        produced: 0,
        plan,
    };
    if n_syn > 0 {
        batches.refresh()?;
    }
    Ok(batches)
}

impl MixBatches {
    pub fn plan(&self) -> &MixPlan {
        &self.plan
    }

    /// The current synthetic pool as `(features, labels)`.
    pub fn synthetic_pool(&self) -> Option<(&Array2<f64>, &[usize])> {
        self.synthetic.as_ref().map(|p| (&p.x, p.y.as_slice()))
    }

    fn refresh(&mut self) -> Result<()> {
        let mut tables = Vec::with_capacity(self.plan.sources.len());
        for s in &self.plan.sources {
            tables.push(s.generate(&mut self.gen_rng)?);
        }
        let pool = Pool::from_table(&Table::concat(&tables)?)?;
        if pool.y.is_empty() {
            return Err(GeneratorError::EmptySyntheticPool);
        }
        let stream = 2 + 2 * self.produced as u64;
        self.syn_sampler = Some(EpochSampler::new(pool.y.len(), child(self.syn_seed, stream)));
        self.synthetic = Some(pool);
        Ok(())
    }

    pub fn next_batch(&mut self) -> Result<MixBatch> {
        if self.n_syn > 0 {
            if let Some(k) = self.plan.refresh_interval {
                if self.produced > 0 && self.produced % k == 0 {
                    self.refresh()?;
                }
            }
        }
        self.produced += 1;
        let real_rows: Vec<usize> = (0..self.n_real).map(|_| self.real_sampler.next()).collect();
        let mut x = self.real.x.select(Axis(0), &real_rows);
        let mut y: Vec<usize> = real_rows.iter().map(|&r| self.real.y[r]).collect();
        if self.n_syn > 0 {
            let pool = self.synthetic.as_ref().expect("pool built");
            let sampler = self.syn_sampler.as_mut().expect("pool built");
            let rows: Vec<usize> = (0..self.n_syn).map(|_| sampler.next()).collect();
            let sx = pool.x.select(Axis(0), &rows);
            x = ndarray::concatenate(Axis(0), &[x.view(), sx.view()]).expect("same width");
            y.extend(rows.iter().map(|&r| pool.y[r]));
        }
        let mut source = vec![RowSource::Real; self.n_real];
        source.resize(self.n_real + self.n_syn, RowSource::Synthetic);
        Ok(MixBatch {
            x,
            y,
            source,
            n_real: self.n_real,
            n_synthetic: self.n_syn,
            real_rows,
        })
    }
}
