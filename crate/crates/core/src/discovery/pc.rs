//! PC skeleton search and CPDAG orientation.

use std::collections::BTreeMap;
use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{CiTest, DiscoveryError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PcVariant {
    /// Adjacencies update as edges are removed; pair order is shuffled.
    Pc,
    /// Adjacencies are frozen per level and the separating set with the
    /// largest p-value is kept, so the output ignores processing order.
    PcStable,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Skeleton {
    adj: Vec<Vec<bool>>,
    /// Keyed by `(min, max)` node pair.
    sepsets: BTreeMap<(usize, usize), Vec<usize>>,
}

fn key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

impl Skeleton {
    pub fn complete(n: usize) -> Self {
        let adj = (0..n).map(|i| (0..n).map(|j| i != j).collect()).collect();
        Self {
            adj,
            sepsets: BTreeMap::new(),
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.adj.len()
    }

    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        self.adj[a][b]
    }

    pub fn neighbours(&self, a: usize) -> Vec<usize> {
        (0..self.n_nodes()).filter(|&b| self.adj[a][b]).collect()
    }

    /// Sorted undirected edges `(a, b)` with `a < b`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.n_nodes();
        (0..n)
            .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
            .filter(|&(a, b)| self.adj[a][b])
            .collect()
    }

    pub fn sepset(&self, a: usize, b: usize) -> Option<&[usize]> {
        self.sepsets.get(&key(a, b)).map(Vec::as_slice)
    }

    fn remove(&mut self, a: usize, b: usize, sep: Vec<usize>) {
        self.adj[a][b] = false;
        self.adj[b][a] = false;
        self.sepsets.insert(key(a, b), sep);
    }
}

/// Visit every `size`-subset of `pool` in lexicographic order until `f`
/// returns `false`.
fn for_each_subset(pool: &[usize], size: usize, mut f: impl FnMut(&[usize]) -> bool) {
    if size > pool.len() {
        return;
    }
    let mut idx: Vec<usize> = (0..size).collect();
    let mut buf = vec![0; size];
    'outer: loop {
        for (b, &i) in buf.iter_mut().zip(&idx) {
            *b = pool[i];
        }
        if !f(&buf) {
            return;
        }
        // Rightmost index that can still move right.
        for k in (0..size).rev() {
            if idx[k] < pool.len() - size + k {
                idx[k] += 1;
                for m in k + 1..size {
                    idx[m] = idx[m - 1] + 1;
                }
                continue 'outer;
            }
        }
        return;
    }
}

fn check_deadline(deadline: Option<Instant>) -> Result<(), DiscoveryError> {
    match deadline {
        Some(d) if Instant::now() > d => Err(DiscoveryError::Timeout),
        _ => Ok(()),
    }
}

/// Skeleton phase. Failed tests (e.g. too few rows) count as dependence.
pub fn pc_skeleton<R: Rng + ?Sized>(
    test: &dyn CiTest,
    alpha: f64,
    variant: PcVariant,
    max_cond: usize,
    rng: &mut R,
    deadline: Option<Instant>,
) -> Result<Skeleton, DiscoveryError> {
    super::check_alpha(alpha)?;
    let n = test.n_vars();
    if n < 2 {
        return Err(DiscoveryError::TooFewColumns(n));
    }
    let mut g = Skeleton::complete(n);
    let p_of = |i: usize, j: usize, s: &[usize]| test.p_value(i, j, s).unwrap_or(0.0);
    for level in 0..=max_cond {
        if (0..n).all(|v| g.neighbours(v).len() <= level) {
            break;
        }
        match variant {
            PcVariant::Pc => {
                let mut pairs = g.edges();
                pairs.shuffle(rng);
                for (i, j) in pairs {
                    check_deadline(deadline)?;
                    let mut found = None;
                    for (x, y) in [(i, j), (j, i)] {
                        let pool: Vec<usize> = g.neighbours(x).into_iter().filter(|&v| v != y).collect();
                        for_each_subset(&pool, level, |s| {
                            if p_of(i, j, s) > alpha {
                                found = Some(s.to_vec());
                                false
                            } else {
                                true
                            }
                        });
                        if found.is_some() {
                            break;
                        }
                    }
                    if let Some(sep) = found {
                        g.remove(i, j, sep);
                    }
                }
            }
            PcVariant::PcStable => {
                let frozen: Vec<Vec<usize>> = (0..n).map(|v| g.neighbours(v)).collect();
                for (i, j) in g.edges() {
                    check_deadline(deadline)?;
                    let mut best: Option<(f64, Vec<usize>)> = None;
                    for (x, y) in [(i, j), (j, i)] {
                        let pool: Vec<usize> = frozen[x].iter().copied().filter(|&v| v != y).collect();
                        for_each_subset(&pool, level, |s| {
                            let p = p_of(i, j, s);
                            if p > alpha && best.as_ref().is_none_or(|(bp, _)| p > *bp) {
                                best = Some((p, s.to_vec()));
                            }
                            true
                        });
                    }
                    if let Some((_, sep)) = best {
                        g.remove(i, j, sep);
                    }
                }
            }
        }
    }
    Ok(g)
}

/// Edge marks of a partially directed graph: `m[i][j] = 1, m[j][i] = 0` is
/// `i → j`; `m[i][j] = m[j][i] = 2` is undirected.
pub type Cpdag = Array2<u8>;

pub const DIRECTED: u8 = 1;
pub const UNDIRECTED: u8 = 2;

fn is_undirected(m: &Cpdag, a: usize, b: usize) -> bool {
    m[[a, b]] == UNDIRECTED && m[[b, a]] == UNDIRECTED
}

fn is_directed(m: &Cpdag, a: usize, b: usize) -> bool {
    m[[a, b]] == DIRECTED && m[[b, a]] == 0
}

fn adjacent(m: &Cpdag, a: usize, b: usize) -> bool {
    m[[a, b]] != 0 || m[[b, a]] != 0
}

fn orient(m: &mut Cpdag, a: usize, b: usize) {
    m[[a, b]] = DIRECTED;
    m[[b, a]] = 0;
}

/// Orient v-structures, then close under Meek's rules 1–4. Edges that
/// receive arrowheads from both ends during v-structure detection stay
/// undirected.
pub fn pc_orient(skeleton: &Skeleton) -> Cpdag {
    let n = skeleton.n_nodes();
    let mut m = Cpdag::zeros((n, n));
    for (a, b) in skeleton.edges() {
        m[[a, b]] = UNDIRECTED;
        m[[b, a]] = UNDIRECTED;
    }
    let mut arrow = vec![vec![false; n]; n];
    for k in 0..n {
        let nb = skeleton.neighbours(k);
        for (x, &i) in nb.iter().enumerate() {
            for &j in &nb[x + 1..] {
                if skeleton.adjacent(i, j) {
                    continue;
                }
                let sep = skeleton.sepset(i, j).unwrap_or(&[]);
                if !sep.contains(&k) {
                    arrow[i][k] = true;
                    arrow[j][k] = true;
                }
            }
        }
    }
    for (a, b) in skeleton.edges() {
        match (arrow[a][b], arrow[b][a]) {
            (true, false) => orient(&mut m, a, b),
            (false, true) => orient(&mut m, b, a),
            _ => {}
        }
    }
    while meek_pass(&mut m) {}
    m
}

/// One round of Meek rules, evaluated on the graph as it stood at the start
/// of the round and applied together, so the result does not depend on node
/// order. Edges proposed in both directions stay undirected. True when
/// anything was oriented.
fn meek_pass(m: &mut Cpdag) -> bool {
    let n = m.nrows();
    let mut proposals = Vec::new();
    for a in 0..n {
        for b in 0..n {
            if is_undirected(m, a, b) && meek_applies(m, a, b) && !(is_undirected(m, b, a) && meek_applies(m, b, a)) {
                proposals.push((a, b));
            }
        }
    }
    for &(a, b) in &proposals {
        orient(m, a, b);
    }
    !proposals.is_empty()
}

/// Whether the undirected edge `a − b` must be oriented `a → b`.
fn meek_applies(m: &Cpdag, a: usize, b: usize) -> bool {
    let n = m.nrows();
    // R1: c → a − b with c, b non-adjacent.
    if (0..n).any(|c| c != b && is_directed(m, c, a) && !adjacent(m, c, b)) {
        return true;
    }
    // R2: a → c → b.
    if (0..n).any(|c| is_directed(m, a, c) && is_directed(m, c, b)) {
        return true;
    }
    // R3: a − c → b and a − d → b with c, d non-adjacent.
    let mids: Vec<usize> = (0..n)
        .filter(|&c| is_undirected(m, a, c) && is_directed(m, c, b))
        .collect();
    for (x, &c) in mids.iter().enumerate() {
        if mids[x + 1..].iter().any(|&d| !adjacent(m, c, d)) {
            return true;
        }
    }
    // R4: a − d → c → b, a adjacent to c, b and d non-adjacent.
    for c in (0..n).filter(|&c| is_directed(m, c, b) && adjacent(m, a, c)) {
        if (0..n).any(|d| d != b && is_undirected(m, a, d) && is_directed(m, d, c) && !adjacent(m, d, b)) {
            return true;
        }
    }
    false
}
