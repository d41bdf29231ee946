//! Gaussian mixtures, kernel density estimates and bounded uniforms.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use super::spec::DensitySpec;
use crate::rng::SeededRng;
use crate::table::ColumnKind;

const EM_MAX_ITER: usize = 100;
const EM_TOL: f64 = 1e-6;
const MAX_ESCALATIONS: usize = 10;
/// A covariance counts as singular when its smallest squared Cholesky pivot
/// falls below this fraction of the largest feature variance (floored at 1).
const SINGULAR_PIVOT: f64 = 5e-6;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DensityDiagnostics {
    /// Mean per-row log-likelihood after each EM iteration of the accepted fit.
    pub log_likelihood: Vec<f64>,
    /// Times `cov_reg` was multiplied by ten.
    pub escalations: usize,
    pub final_cov_reg: Option<f64>,
    /// The mixture could not be regularised and a uniform was fitted instead.
    pub fell_back: bool,
    pub components: usize,
}

/// Sorted observed codes for each categorical feature.
#[derive(Debug, Clone)]
pub(crate) struct Codes(Vec<Option<Vec<f64>>>);

impl Codes {
    fn new(x: ArrayView2<'_, f64>, kinds: &[ColumnKind]) -> Self {
        Self(
            kinds
                .iter()
                .enumerate()
                .map(|(j, k)| {
                    (*k == ColumnKind::Categorical).then(|| {
                        let mut c = x.column(j).to_vec();
                        c.sort_by(f64::total_cmp);
                        c.dedup();
                        c
                    })
                })
                .collect(),
        )
    }

    /// Replace categorical values with the nearest observed code; equal
    /// distances go to the smaller code.
    fn snap(&self, out: &mut Array2<f64>) {
        for (j, codes) in self.0.iter().enumerate() {
            if let Some(codes) = codes {
                out.column_mut(j).mapv_inplace(|v| {
                    let mut best = codes[0];
                    for &c in &codes[1..] {
                        if (c - v).abs() < (best - v).abs() {
                            best = c;
                        }
                    }
                    best
                });
            }
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) enum Density {
    Gmm {
        weights: Vec<f64>,
        means: Array2<f64>,
        /// Lower Cholesky factors of the component covariances.
        chol: Vec<DMatrix<f64>>,
        codes: Codes,
    },
    Kde {
        data: Array2<f64>,
        bandwidth: Vec<f64>,
    },
    Uniform {
        lo: Vec<f64>,
        hi: Vec<f64>,
        codes: Codes,
    },
}

impl Density {
    pub(crate) fn n_features(&self) -> usize {
        match self {
            Density::Gmm { means, .. } => means.ncols(),
            Density::Kde { data, .. } => data.ncols(),
            Density::Uniform { lo, .. } => lo.len(),
        }
    }

    pub(crate) fn gmm_means(&self) -> Option<&Array2<f64>> {
        match self {
            Density::Gmm { means, .. } => Some(means),
            _ => None,
        }
    }

    pub(crate) fn sample(&self, n: usize, rng: &mut SeededRng) -> Array2<f64> {
        let d = self.n_features();
        let mut out = Array2::zeros((n, d));
        match self {
            Density::Gmm {
                weights,
                means,
                chol,
                codes,
            } => {
                for mut row in out.axis_iter_mut(Axis(0)) {
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    let mut comp = weights.len() - 1;
                    for (c, w) in weights.iter().enumerate() {
                        acc += w;
                        if u < acc {
                            comp = c;
                            break;
                        }
                    }
                    let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
                    let x = &chol[comp] * z;
                    for j in 0..d {
                        row[j] = means[[comp, j]] + x[j];
                    }
                }
                codes.snap(&mut out);
            }
            Density::Kde { data, bandwidth } => {
                for mut row in out.axis_iter_mut(Axis(0)) {
                    let src = data.row(rng.random_range(0..data.nrows()));
                    for j in 0..d {
                        let noise = if bandwidth[j] > 0.0 {
                            bandwidth[j] * rng.sample::<f64, _>(StandardNormal)
                        } else {
                            0.0
                        };
                        row[j] = src[j] + noise;
                    }
                }
            }
            Density::Uniform { lo, hi, codes } => {
                for mut row in out.axis_iter_mut(Axis(0)) {
                    for j in 0..d {
                        row[j] = match &codes.0[j] {
                            Some(c) => c[rng.random_range(0..c.len())],
                            None if hi[j] > lo[j] => rng.random_range(lo[j]..=hi[j]),
                            None => lo[j],
                        };
                    }
                }
            }
        }
        out
    }
}

pub(crate) fn fit(
    spec: &DensitySpec,
    x: ArrayView2<'_, f64>,
    kinds: &[ColumnKind],
    rng: &mut SeededRng,
) -> (Density, DensitySpec, DensityDiagnostics) {
    match *spec {
        DensitySpec::Uniform => (uniform(x, kinds), *spec, DensityDiagnostics::default()),
        DensitySpec::Kde { bandwidth } => (kde(x, kinds, bandwidth), *spec, DensityDiagnostics::default()),
        DensitySpec::Gmm { components, cov_reg } => {
            let k = components.min(x.nrows());
            let mut reg = cov_reg;
            let mut escalations = 0;
            loop {
                if let Some((density, trace)) = em(x, kinds, k, reg, rng) {
                    return (
                        density,
                        DensitySpec::Gmm {
                            components: k,
                            cov_reg: reg,
                        },
                        DensityDiagnostics {
                            log_likelihood: trace,
                            escalations,
                            final_cov_reg: Some(reg),
                            fell_back: false,
                            components: k,
                        },
                    );
                }
                if escalations == MAX_ESCALATIONS {
                    log::warn!("gmm still singular at cov_reg={reg}; falling back to uniform");
                    return (
                        uniform(x, kinds),
                        DensitySpec::Uniform,
                        DensityDiagnostics {
                            escalations,
                            final_cov_reg: Some(reg),
                            fell_back: true,
                            ..DensityDiagnostics::default()
                        },
                    );
                }
                escalations += 1;
                reg = if reg > 0.0 { reg * 10.0 } else { 1e-6 };
            }
        }
    }
}

fn uniform(x: ArrayView2<'_, f64>, kinds: &[ColumnKind]) -> Density {
    let lo = x.columns().into_iter().map(|c| c.fold(f64::INFINITY, |a, &b| a.min(b))).collect();
    let hi = x
        .columns()
        .into_iter()
        .map(|c| c.fold(f64::NEG_INFINITY, |a, &b| a.max(b)))
        .collect();
    Density::Uniform {
        lo,
        hi,
        codes: Codes::new(x, kinds),
    }
}

/// Scott's rule per feature unless a fixed bandwidth is given; categorical
/// features are resampled without noise.
fn kde(x: ArrayView2<'_, f64>, kinds: &[ColumnKind], fixed: Option<f64>) -> Density {
    let n = x.nrows() as f64;
    let d = x.ncols() as f64;
    let factor = n.powf(-1.0 / (d + 4.0));
    let bandwidth = kinds
        .iter()
        .enumerate()
        .map(|(j, k)| match (k, fixed) {
            (ColumnKind::Categorical, _) => 0.0,
            (_, Some(h)) => h,
            (_, None) => x.column(j).std(0.0) * factor,
        })
        .collect();
    Density::Kde {
        data: x.to_owned(),
        bandwidth,
    }
}

struct Component {
    mean: DVector<f64>,
    chol: DMatrix<f64>,
    log_norm: f64,
}

/// EM from k-means++ seeds. `None` signals a singular covariance.
fn em(
    x: ArrayView2<'_, f64>,
    kinds: &[ColumnKind],
    k: usize,
    reg: f64,
    rng: &mut SeededRng,
) -> Option<(Density, Vec<f64>)> {
    let n = x.nrows();
    let d = x.ncols();
    let rows: Vec<DVector<f64>> = x
        .axis_iter(Axis(0))
        .map(|r| DVector::from_iterator(d, r.iter().copied()))
        .collect();
    let max_var = x
        .columns()
        .into_iter()
        .map(|c| c.var(0.0))
        .fold(0.0f64, f64::max);
    let floor = SINGULAR_PIVOT * max_var.max(1.0);

    let seeds = kmeans_pp(&rows, k, rng);
    let mut resp = Array2::<f64>::zeros((n, k));
    for (i, r) in rows.iter().enumerate() {
        let best = (0..k)
            .min_by(|&a, &b| {
                (r - &rows[seeds[a]])
                    .norm_squared()
                    .total_cmp(&(r - &rows[seeds[b]]).norm_squared())
            })
            .expect("k >= 1");
        resp[[i, best]] = 1.0;
    }

    let mut trace = Vec::new();
    let mut prev = f64::NEG_INFINITY;
    let mut state;
    let mut iter = 0;
    loop {
        let (weights, comps) = m_step(&rows, &resp, reg, floor)?;
        let ll = e_step(&rows, &weights, &comps, &mut resp);
        trace.push(ll);
        iter += 1;
        state = (weights, comps);
        if (ll - prev).abs() < EM_TOL || iter >= EM_MAX_ITER {
            break;
        }
        prev = ll;
    }
    let (weights, comps) = state;
    let means = Array2::from_shape_fn((k, d), |(c, j)| comps[c].mean[j]);
    let density = Density::Gmm {
        weights,
        means,
        chol: comps.into_iter().map(|c| c.chol).collect(),
        codes: Codes::new(x, kinds),
    };
    Some((density, trace))
}

fn kmeans_pp(rows: &[DVector<f64>], k: usize, rng: &mut SeededRng) -> Vec<usize> {
    let n = rows.len();
    let mut seeds = vec![rng.random_range(0..n)];
    let mut dist: Vec<f64> = rows.iter().map(|r| (r - &rows[seeds[0]]).norm_squared()).collect();
    while seeds.len() < k {
        let total: f64 = dist.iter().sum();
        let next = if total > 0.0 {
            let u = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, d) in dist.iter().enumerate() {
                acc += d;
                if u < acc {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        seeds.push(next);
        for (i, r) in rows.iter().enumerate() {
            dist[i] = dist[i].min((r - &rows[next]).norm_squared());
        }
    }
    seeds
}

fn m_step(
    rows: &[DVector<f64>],
    resp: &Array2<f64>,
    reg: f64,
    floor: f64,
) -> Option<(Vec<f64>, Vec<Component>)> {
    let n = rows.len() as f64;
    let d = rows[0].len();
    let mut weights = Vec::new();
    let mut comps = Vec::new();
    for c in 0..resp.ncols() {
        let r = resp.column(c);
        let nk: f64 = r.sum();
        if nk < 1e-10 * n {
            return None;
        }
        let mut mean = DVector::zeros(d);
        for (x, &w) in rows.iter().zip(r.iter()) {
            mean.axpy(w, x, 1.0);
        }
        mean /= nk;
        let mut cov = DMatrix::zeros(d, d);
        for (x, &w) in rows.iter().zip(r.iter()) {
            let diff = x - &mean;
            cov.ger(w / nk, &diff, &diff, 1.0);
        }
        for j in 0..d {
            cov[(j, j)] += reg;
        }
        let chol = cov.cholesky()?.l();
        let min_pivot = (0..d).map(|j| chol[(j, j)] * chol[(j, j)]).fold(f64::INFINITY, f64::min);
        if !(min_pivot >= floor) {
            return None;
        }
        let log_det: f64 = (0..d).map(|j| chol[(j, j)].ln()).sum::<f64>() * 2.0;
        weights.push(nk / n);
        comps.push(Component {
            mean,
            chol,
            log_norm: -0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln() + log_det),
        });
    }
    Some((weights, comps))
}

/// Fill responsibilities and return the mean log-likelihood.
fn e_step(rows: &[DVector<f64>], weights: &[f64], comps: &[Component], resp: &mut Array2<f64>) -> f64 {
    let mut total = 0.0;
    let mut logp = vec![0.0; comps.len()];
    for (i, x) in rows.iter().enumerate() {
        for (c, comp) in comps.iter().enumerate() {
            let z = comp
                .chol
                .solve_lower_triangular(&(x - &comp.mean))
                .expect("factor has a positive diagonal");
            logp[c] = weights[c].ln() + comp.log_norm - 0.5 * z.norm_squared();
        }
        let m = logp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = logp.iter().map(|v| (v - m).exp()).sum::<f64>().ln() + m;
        total += lse;
        for c in 0..comps.len() {
            resp[[i, c]] = (logp[c] - lse).exp();
        }
    }
    total / rows.len() as f64
}
