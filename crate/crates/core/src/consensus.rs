//! Network topologies and synchronous additive consensus.
//!
//! Each agent holds a local tensor (flattened to a vector). One round
//! replaces every agent's value with a weighted average over itself and its
//! neighbours, `v_k <- sum_j W[k][j] v_j`, using a symmetric doubly
//! stochastic `W`. Repeated rounds drive all agents to the network average;
//! multiplying by `K` at the end turns that into the network-wide sum.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    Ring,
    Complete,
    /// Near-square 2-D lattice, 4-neighbour connectivity.
    Grid,
    Custom(Vec<(usize, usize)>),
}

/// Undirected communication graph between `K` agents.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    adjacency: Vec<Vec<bool>>,
}

impl Topology {
    pub fn from_edges(num_agents: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if num_agents == 0 {
            return Err(Error::invalid("a topology needs at least one agent"));
        }
        let mut adjacency = vec![vec![false; num_agents]; num_agents];
        for &(a, b) in edges {
            if a >= num_agents || b >= num_agents {
                return Err(Error::invalid(format!(
                    "edge ({a}, {b}) references an agent outside 0..{num_agents}"
                )));
            }
            if a != b {
                adjacency[a][b] = true;
                adjacency[b][a] = true;
            }
        }
        let topo = Topology { adjacency };
        topo.check_connected()?;
        Ok(topo)
    }

    fn check_connected(&self) -> Result<()> {
        let k = self.num_agents();
        let mut seen = vec![false; k];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut reachable = 1;
        while let Some(i) = queue.pop_front() {
            for j in self.neighbors(i) {
                if !seen[j] {
                    seen[j] = true;
                    reachable += 1;
                    queue.push_back(j);
                }
            }
        }
        if reachable == k {
            Ok(())
        } else {
            Err(Error::Disconnected {
                reachable,
                agents: k,
            })
        }
    }

    pub fn num_agents(&self) -> usize {
        self.adjacency.len()
    }

    pub fn adjacency(&self) -> &[Vec<bool>] {
        &self.adjacency
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency[i]
            .iter()
            .enumerate()
            .filter_map(|(j, &e)| e.then_some(j))
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors(i).count()
    }
}

/// Rows and columns of the most square `rows x cols = k` factorization.
pub fn block_shape(k: usize) -> (usize, usize) {
    let mut rows = (k as f64).sqrt().floor() as usize;
    while rows > 1 && !k.is_multiple_of(rows) {
        rows -= 1;
    }
    let rows = rows.max(1);
    (rows, k / rows)
}

pub fn build_topology(kind: &TopologyKind, num_agents: usize) -> Result<Topology> {
    let k = num_agents;
    if k == 0 {
        return Err(Error::invalid("a topology needs at least one agent"));
    }
    let edges: Vec<(usize, usize)> = match kind {
        TopologyKind::Ring => (0..k).map(|i| (i, (i + 1) % k)).collect(),
        TopologyKind::Complete => (0..k)
            .flat_map(|i| ((i + 1)..k).map(move |j| (i, j)))
            .collect(),
        TopologyKind::Grid => {
            let (rows, cols) = block_shape(k);
            let mut e = Vec::new();
            for r in 0..rows {
                for c in 0..cols {
                    let i = r * cols + c;
                    if c + 1 < cols {
                        e.push((i, i + 1));
                    }
                    if r + 1 < rows {
                        e.push((i, i + cols));
                    }
                }
            }
            e
        }
        TopologyKind::Custom(edges) => edges.clone(),
    };
    Topology::from_edges(k, &edges)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WeightRule {
    /// `W[i][j] = 1 / (1 + max(deg_i, deg_j))` on edges.
    #[default]
    Metropolis,
    /// `(I + W_metropolis) / 2`: same fixed point, never exact in one round.
    LazyMetropolis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsensusConfig {
    /// Number of communication rounds `L`.
    pub rounds: usize,
    #[serde(default)]
    pub weight_rule: WeightRule,
}

impl ConsensusConfig {
    pub fn new(rounds: usize) -> Self {
        ConsensusConfig {
            rounds,
            weight_rule: WeightRule::Metropolis,
        }
    }
}

pub fn metropolis_weights(topo: &Topology) -> DMatrix<f64> {
    let k = topo.num_agents();
    let deg: Vec<usize> = (0..k).map(|i| topo.degree(i)).collect();
    let mut w = DMatrix::zeros(k, k);
    for i in 0..k {
        let mut off = 0.0;
        for j in topo.neighbors(i) {
            let wij = 1.0 / (1.0 + deg[i].max(deg[j]) as f64);
            w[(i, j)] = wij;
            off += wij;
        }
        w[(i, i)] = 1.0 - off;
    }
    w
}

pub fn mixing_matrix(topo: &Topology, rule: WeightRule) -> DMatrix<f64> {
    let w = metropolis_weights(topo);
    match rule {
        WeightRule::Metropolis => w,
        WeightRule::LazyMetropolis => {
            let k = topo.num_agents();
            (w + DMatrix::identity(k, k)) * 0.5
        }
    }
}

/// Precomputed mixing weights for repeated consensus calls.
#[derive(Debug, Clone)]
pub struct Consensus {
    cfg: ConsensusConfig,
    // (neighbour-or-self index, weight) per agent
    mixing: Vec<Vec<(usize, f64)>>,
}

impl Consensus {
    pub fn new(topo: &Topology, cfg: ConsensusConfig) -> Self {
        let w = mixing_matrix(topo, cfg.weight_rule);
        let k = topo.num_agents();
        let mixing = (0..k)
            .map(|i| {
                (0..k)
                    .filter(|&j| i == j || topo.adjacency[i][j])
                    .map(|j| (j, w[(i, j)]))
                    .collect()
            })
            .collect();
        Consensus { cfg, mixing }
    }

    pub fn num_agents(&self) -> usize {
        self.mixing.len()
    }

    pub fn rounds(&self) -> usize {
        self.cfg.rounds
    }

    /// Each agent's estimate of the network-wide sum of `values`.
    pub fn sum(&self, values: Vec<DVector<f64>>) -> Result<Vec<DVector<f64>>> {
        Ok(self.run(values, false)?.0)
    }

    /// Like [`Consensus::sum`], also returning the max disagreement
    /// `max_k |v_k - mean|` before the first round and after every round.
    pub fn sum_traced(&self, values: Vec<DVector<f64>>) -> Result<(Vec<DVector<f64>>, Vec<f64>)> {
        self.run(values, true)
    }

    fn run(
        &self,
        values: Vec<DVector<f64>>,
        traced: bool,
    ) -> Result<(Vec<DVector<f64>>, Vec<f64>)> {
        let k = self.num_agents();
        if values.len() != k {
            return Err(Error::DimensionMismatch {
                context: "consensus agents",
                expected: k,
                got: values.len(),
            });
        }
        let len = values[0].len();
        if let Some(bad) = values.iter().find(|v| v.len() != len) {
            return Err(Error::DimensionMismatch {
                context: "consensus tensor length",
                expected: len,
                got: bad.len(),
            });
        }
        let mut cur = values;
        let mut next: Vec<DVector<f64>> = vec![DVector::zeros(len); k];
        let mut trace = Vec::new();
        if traced {
            trace.push(disagreement(&cur));
        }
        for _ in 0..self.cfg.rounds {
            for (i, out) in next.iter_mut().enumerate() {
                out.fill(0.0);
                for &(j, wij) in &self.mixing[i] {
                    out.axpy(wij, &cur[j], 1.0);
                }
            }
            std::mem::swap(&mut cur, &mut next);
            if traced {
                trace.push(disagreement(&cur));
            }
        }
        let scale = k as f64;
        for v in cur.iter_mut() {
            *v *= scale;
        }
        Ok((cur, trace))
    }
}

fn disagreement(values: &[DVector<f64>]) -> f64 {
    let k = values.len() as f64;
    let mut mean = values[0].clone();
    for v in &values[1..] {
        mean += v;
    }
    mean /= k;
    values
        .iter()
        .map(|v| (v - &mean).norm())
        .fold(0.0, f64::max)
}

/// One-shot convenience wrapper around [`Consensus`].
pub fn consensus_sum(
    values: Vec<DVector<f64>>,
    topo: &Topology,
    cfg: ConsensusConfig,
) -> Result<Vec<DVector<f64>>> {
    Consensus::new(topo, cfg).sum(values)
}
