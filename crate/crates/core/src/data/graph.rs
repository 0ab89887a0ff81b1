use std::collections::BTreeSet;

use crate::error::{Error, Result};

/// Causal summary graph: an edge `(i, j)` means series `i` causes series `j`.
///
/// Self-loops are never stored; a series' dependence on its own past is
/// implicit.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct SummaryGraph {
    node_count: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl SummaryGraph {
    pub fn new(node_count: usize) -> Self {
        Self { node_count, edges: BTreeSet::new() }
    }

    pub fn with_edges(node_count: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut g = Self::new(node_count);
        for (from, to) in edges {
            g.add_edge(from, to)?;
        }
        Ok(g)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Adds `from -> to`. Returns whether the edge was new.
    pub fn add_edge(&mut self, from: usize, to: usize) -> Result<bool> {
        if from == to || from >= self.node_count || to >= self.node_count {
            return Err(Error::InvalidEdge(from, to));
        }
        Ok(self.edges.insert((from, to)))
    }

    pub fn remove_edge(&mut self, from: usize, to: usize) -> bool {
        self.edges.remove(&(from, to))
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.edges.contains(&(from, to))
    }

    pub fn parents(&self, node: usize) -> Vec<usize> {
        self.edges.iter().filter(|e| e.1 == node).map(|e| e.0).collect()
    }

    pub fn children(&self, node: usize) -> Vec<usize> {
        self.edges.iter().filter(|e| e.0 == node).map(|e| e.1).collect()
    }

    /// Whether any edge touches `node`.
    pub fn touches(&self, node: usize) -> bool {
        self.edges.iter().any(|&(a, b)| a == node || b == node)
    }

    /// Kahn's algorithm; `None` when the graph has a directed cycle.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let n = self.node_count;
        let mut indegree = vec![0usize; n];
        for &(_, to) in &self.edges {
            indegree[to] += 1;
        }
        let mut ready: BTreeSet<usize> = (0..n).filter(|&v| indegree[v] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = ready.pop_first() {
            order.push(v);
            for &(from, to) in self.edges.range((v, 0)..(v + 1, 0)) {
                debug_assert_eq!(from, v);
                indegree[to] -= 1;
                if indegree[to] == 0 {
                    ready.insert(to);
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    pub fn is_acyclic(&self) -> bool {
        self.topological_order().is_some()
    }

    /// Exact edge-set comparison; graphs over different node counts are an error.
    pub fn graph_equals(&self, other: &SummaryGraph) -> Result<bool> {
        if self.node_count != other.node_count {
            return Err(Error::NodeCountMismatch { left: self.node_count, right: other.node_count });
        }
        Ok(self.edges == other.edges)
    }
}

pub fn is_acyclic(graph: &SummaryGraph) -> bool {
    graph.is_acyclic()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(n: usize, e: &[(usize, usize)]) -> SummaryGraph {
        SummaryGraph::with_edges(n, e.iter().copied()).unwrap()
    }

    #[test]
    fn acyclicity_examples() {
        assert!(g(3, &[]).is_acyclic());
        assert!(!g(2, &[(0, 1), (1, 0)]).is_acyclic());
        assert!(g(3, &[(0, 1), (1, 2), (0, 2)]).is_acyclic());
        assert!(!g(3, &[(0, 1), (1, 2), (2, 0)]).is_acyclic());
    }

    #[test]
    fn equality_examples() {
        assert!(g(3, &[(0, 1)]).graph_equals(&g(3, &[(0, 1)])).unwrap());
        assert!(!g(3, &[(0, 1)]).graph_equals(&g(3, &[(1, 0)])).unwrap());
        assert!(!g(3, &[(0, 1)]).graph_equals(&g(3, &[(0, 1), (1, 2)])).unwrap());
        assert!(g(2, &[]).graph_equals(&g(3, &[])).is_err());
    }

    #[test]
    fn self_loops_and_out_of_range_rejected() {
        let mut s = SummaryGraph::new(2);
        assert!(s.add_edge(1, 1).is_err());
        assert!(s.add_edge(0, 2).is_err());
        assert!(s.add_edge(0, 1).unwrap());
        assert!(!s.add_edge(0, 1).unwrap());
    }

    #[test]
    fn topological_order_respects_edges() {
        let s = g(4, &[(3, 1), (1, 0), (3, 2)]);
        let order = s.topological_order().unwrap();
        let pos = |v| order.iter().position(|&x| x == v).unwrap();
        for &(a, b) in s.edges() {
            assert!(pos(a) < pos(b));
        }
    }
}
