//! Residual-graph connectivity for the vignette problem.
//!
//! Every residual couples one plane cell with one vignette pixel. The
//! alternating solution is unique up to a single global scale if and only if
//! the bipartite graph of these couplings is connected.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Disjoint sets with path compression and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
    sets: usize,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: alloc::vec![1; n],
            sets: n,
        }
    }

    pub fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = x;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    /// Returns `true` when `a` and `b` were in different sets.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            core::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        self.sets -= 1;
        true
    }

    pub fn set_size(&mut self, x: usize) -> usize {
        let r = self.find(x);
        self.size[r]
    }

    pub fn sets(&self) -> usize {
        self.sets
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }
}

/// Bipartite graph between `A` nodes (plane cells) and `B` nodes (vignette
/// pixels), one edge per residual. Duplicate edges are allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteResidualGraph {
    n_a: usize,
    n_b: usize,
    edges: Vec<(u32, u32)>,
}

/// Summary of a connected-component analysis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Connectivity {
    pub components: usize,
    pub largest: usize,
    /// Fraction of the considered nodes that lie in the largest component.
    pub largest_fraction: f64,
}

impl Connectivity {
    pub fn is_connected(&self) -> bool {
        self.components == 1
    }
}

impl BipartiteResidualGraph {
    pub fn new(n_a: usize, n_b: usize) -> Self {
        Self {
            n_a,
            n_b,
            edges: Vec::new(),
        }
    }

    pub fn with_edges(n_a: usize, n_b: usize, edges: Vec<(u32, u32)>) -> Result<Self> {
        if let Some(&(a, b)) = edges.iter().find(|(a, b)| *a as usize >= n_a || *b as usize >= n_b) {
            return Err(Error::InvalidArgument(alloc::format!(
                "edge ({a}, {b}) references a node outside {n_a} x {n_b}"
            )));
        }
        Ok(Self { n_a, n_b, edges })
    }

    pub fn add_edge(&mut self, a: usize, b: usize) -> Result<()> {
        if a >= self.n_a || b >= self.n_b {
            return Err(Error::InvalidArgument(alloc::format!(
                "edge ({a}, {b}) references a node outside {} x {}",
                self.n_a,
                self.n_b
            )));
        }
        self.edges.push((a as u32, b as u32));
        Ok(())
    }

    pub fn n_a(&self) -> usize {
        self.n_a
    }

    pub fn n_b(&self) -> usize {
        self.n_b
    }

    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.n_a + self.n_b
    }

    fn union_find(&self) -> UnionFind {
        let mut uf = UnionFind::new(self.node_count());
        for &(a, b) in &self.edges {
            uf.union(a as usize, self.n_a + b as usize);
        }
        uf
    }

    /// Component analysis over all nodes, isolated ones included.
    pub fn connectivity(&self) -> Connectivity {
        let mut uf = self.union_find();
        let n = self.node_count();
        let largest = (0..n).map(|i| uf.set_size(i)).max().unwrap_or(0);
        Connectivity {
            components: uf.sets(),
            largest,
            largest_fraction: if n == 0 { 0.0 } else { largest as f64 / n as f64 },
        }
    }

    /// Component analysis restricted to nodes that carry at least one edge.
    pub fn active_connectivity(&self) -> Connectivity {
        let n = self.node_count();
        let mut active = alloc::vec![false; n];
        for &(a, b) in &self.edges {
            active[a as usize] = true;
            active[self.n_a + b as usize] = true;
        }
        let mut uf = self.union_find();
        let active_count = active.iter().filter(|a| **a).count();
        let isolated = n - active_count;
        let largest = (0..n).filter(|&i| active[i]).map(|i| uf.set_size(i)).max().unwrap_or(0);
        Connectivity {
            components: uf.sets() - isolated,
            largest,
            largest_fraction: if active_count == 0 {
                0.0
            } else {
                largest as f64 / active_count as f64
            },
        }
    }

    /// Component label of every node: the smallest node id in its component.
    /// `A` nodes come first (`0..n_a`), then `B` nodes.
    pub fn component_labels(&self) -> Vec<usize> {
        let mut uf = self.union_find();
        let n = self.node_count();
        let mut smallest = alloc::vec![usize::MAX; n];
        for i in 0..n {
            let r = uf.find(i);
            smallest[r] = smallest[r].min(i);
        }
        (0..n).map(|i| smallest[uf.find(i)]).collect()
    }
}

/// Asymptotic probability `exp(-2 exp(-c))` that a random bipartite graph with
/// `n` nodes per side and `n (ln n + c)` edges is connected.
pub fn connectivity_probability(c: f64) -> f64 {
    libm::exp(-2.0 * libm::exp(-c))
}

/// Edge count `floor(n (ln n + c))`, clamped at zero.
pub fn random_graph_edges(n: usize, c: f64) -> usize {
    let m = libm::floor(n as f64 * (libm::log(n as f64) + c));
    if m > 0.0 {
        m as usize
    } else {
        0
    }
}

/// Samples one random bipartite multigraph (edges drawn uniformly with
/// replacement) and reports whether it is connected. Trial `trial` of seed
/// `seed` always yields the same graph.
pub fn random_graph_connected(n: usize, edges: usize, seed: u64, trial: u64) -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    let mut uf = UnionFind::new(2 * n);
    for _ in 0..edges {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        uf.union(a, n + b);
        if uf.sets() == 1 {
            return true;
        }
    }
    uf.sets() == 1
}

/// Empirical fraction of connected random bipartite graphs with `n` nodes per
/// side and `floor(n (ln n + c))` edges.
pub fn monte_carlo_connectivity(n: usize, c: f64, trials: usize, seed: u64) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidArgument("n must be at least 2".into()));
    }
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    let m = random_graph_edges(n, c);
    let connected = (0..trials as u64)
        .filter(|&t| random_graph_connected(n, m, seed, t))
        .count();
    Ok(connected as f64 / trials as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn empty_graph_has_one_component_per_node() {
        let g = BipartiteResidualGraph::new(5, 5);
        let c = g.connectivity();
        assert_eq!(c.components, 10);
        assert_eq!(c.largest, 1);
        assert_eq!(g.active_connectivity().components, 0);
    }

    #[test]
    fn complete_k33_is_connected() {
        let mut g = BipartiteResidualGraph::new(3, 3);
        for a in 0..3 {
            for b in 0..3 {
                g.add_edge(a, b).unwrap();
            }
        }
        let c = g.connectivity();
        assert_eq!(c.components, 1);
        assert_eq!(c.largest, 6);
        assert_eq!(c.largest_fraction, 1.0);
    }

    #[test]
    fn perfect_matching_is_fully_disconnected() {
        let edges = (0..4).map(|i| (i, i)).collect();
        let g = BipartiteResidualGraph::with_edges(4, 4, edges).unwrap();
        assert_eq!(g.connectivity().components, 4);
        assert_eq!(g.component_labels(), alloc::vec![0, 1, 2, 3, 0, 1, 2, 3]);
    }

    #[test]
    fn out_of_range_edges_are_rejected() {
        assert!(BipartiteResidualGraph::with_edges(2, 2, alloc::vec![(2, 0)]).is_err());
        assert!(BipartiteResidualGraph::new(2, 2).add_edge(0, 5).is_err());
    }

    #[test]
    fn probability_formula() {
        assert_relative_eq!(connectivity_probability(0.0), libm::exp(-2.0), epsilon = 1e-15);
        assert_relative_eq!(connectivity_probability(0.0), 0.1353352832366127, epsilon = 1e-15);
        assert_eq!(connectivity_probability(f64::INFINITY), 1.0);
        // 30 residuals per node with n = 10^6 gives c = 30 - ln(10^6)
        let c = 30.0 - libm::log(1e6);
        assert!((c - 16.18).abs() < 0.01);
        assert!(connectivity_probability(c) > 0.999999);
    }

    #[test]
    fn monte_carlo_is_deterministic() {
        let a = monte_carlo_connectivity(50, 1.0, 40, 7).unwrap();
        let b = monte_carlo_connectivity(50, 1.0, 40, 7).unwrap();
        assert_eq!(a, b);
        assert!(monte_carlo_connectivity(1, 1.0, 10, 0).is_err());
        assert!(monte_carlo_connectivity(10, 1.0, 0, 0).is_err());
    }

    #[test]
    fn large_offset_is_almost_surely_connected() {
        for n in [100, 300] {
            assert!(monte_carlo_connectivity(n, 10.0, 200, 3).unwrap() >= 0.99);
        }
    }
}
