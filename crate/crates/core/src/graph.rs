//! Directed acyclic graphs and d-separation.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("node {node} out of range for {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },
    #[error("self loop on node {0}")]
    SelfLoop(usize),
    #[error("duplicate edge {0} -> {1}")]
    DuplicateEdge(usize, usize),
    #[error("edge set contains a directed cycle")]
    Cyclic,
}

/// Directed acyclic graph over nodes `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "DagRepr", into = "DagRepr")]
pub struct Dag {
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct DagRepr {
    nodes: usize,
    edges: Vec<(usize, usize)>,
}

impl TryFrom<DagRepr> for Dag {
    type Error = GraphError;
    fn try_from(r: DagRepr) -> Result<Self, GraphError> {
        Dag::from_edges(r.nodes, &r.edges)
    }
}

impl From<Dag> for DagRepr {
    fn from(d: Dag) -> Self {
        DagRepr {
            nodes: d.n_nodes(),
            edges: d.edges(),
        }
    }
}

impl Dag {
    pub fn empty(n: usize) -> Self {
        Self {
            parents: vec![Vec::new(); n],
            children: vec![Vec::new(); n],
        }
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        let mut dag = Self::empty(n);
        for &(a, b) in edges {
            for node in [a, b] {
                if node >= n {
                    return Err(GraphError::NodeOutOfRange { node, n });
                }
            }
            if a == b {
                return Err(GraphError::SelfLoop(a));
            }
            if dag.children[a].contains(&b) {
                return Err(GraphError::DuplicateEdge(a, b));
            }
            dag.children[a].push(b);
            dag.parents[b].push(a);
        }
        for list in dag.parents.iter_mut().chain(dag.children.iter_mut()) {
            list.sort_unstable();
        }
        if dag.topological_order().is_none() {
            return Err(GraphError::Cyclic);
        }
        Ok(dag)
    }

    /// Random DAG: a uniformly shuffled node order with each forward edge
    /// present independently with probability `edge_prob`.
    pub fn random<R: Rng + ?Sized>(n: usize, edge_prob: f64, rng: &mut R) -> Self {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.random::<f64>() < edge_prob {
                    edges.push((order[i], order[j]));
                }
            }
        }
        Self::from_edges(n, &edges).expect("forward edges are acyclic")
    }

    pub fn n_nodes(&self) -> usize {
        self.parents.len()
    }

    pub fn n_edges(&self) -> usize {
        self.children.iter().map(Vec::len).sum()
    }

    /// Sorted `(parent, child)` pairs.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.children
            .iter()
            .enumerate()
            .flat_map(|(a, cs)| cs.iter().map(move |&b| (a, b)))
            .collect()
    }

    pub fn parents(&self, node: usize) -> &[usize] {
        &self.parents[node]
    }

    pub fn children(&self, node: usize) -> &[usize] {
        &self.children[node]
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.children[from].binary_search(&to).is_ok()
    }

    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        self.has_edge(a, b) || self.has_edge(b, a)
    }

    /// Kahn's algorithm, always releasing the smallest ready index first.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let n = self.n_nodes();
        let mut indegree: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut ready: std::collections::BinaryHeap<std::cmp::Reverse<usize>> = (0..n)
            .filter(|&v| indegree[v] == 0)
            .map(std::cmp::Reverse)
            .collect();
        let mut order = Vec::with_capacity(n);
        while let Some(std::cmp::Reverse(v)) = ready.pop() {
            order.push(v);
            for &c in &self.children[v] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    ready.push(std::cmp::Reverse(c));
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    fn ancestors_of(&self, seeds: &[usize]) -> Vec<bool> {
        let mut mark = vec![false; self.n_nodes()];
        let mut stack: Vec<usize> = seeds.to_vec();
        while let Some(v) = stack.pop() {
            if mark[v] {
                continue;
            }
            mark[v] = true;
            stack.extend(self.parents[v].iter().copied().filter(|&p| !mark[p]));
        }
        mark
    }

    /// Whether `x` and `y` are d-separated by `given`, via the moralized
    /// ancestral graph of `{x, y} ∪ given`.
    pub fn d_separated(&self, x: usize, y: usize, given: &[usize]) -> bool {
        if x == y {
            return false;
        }
        let mut seeds = vec![x, y];
        seeds.extend_from_slice(given);
        let keep = self.ancestors_of(&seeds);
        let n = self.n_nodes();
        let mut blocked = vec![false; n];
        for &z in given {
            blocked[z] = true;
        }
        if blocked[x] || blocked[y] {
            return true;
        }
        let mut neighbours = vec![Vec::new(); n];
        for v in (0..n).filter(|&v| keep[v]) {
            let ps = &self.parents[v];
            for &p in ps {
                neighbours[v].push(p);
                neighbours[p].push(v);
            }
            // Marry co-parents.
            for (i, &a) in ps.iter().enumerate() {
                for &b in &ps[i + 1..] {
                    neighbours[a].push(b);
                    neighbours[b].push(a);
                }
            }
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([x]);
        seen[x] = true;
        while let Some(v) = queue.pop_front() {
            for &w in &neighbours[v] {
                if w == y {
                    return false;
                }
                if !seen[w] && !blocked[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        true
    }
}
