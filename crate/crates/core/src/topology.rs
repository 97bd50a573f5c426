//! Undirected network graphs.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::crypto::NodeId;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    adj: BTreeMap<NodeId, BTreeSet<NodeId>>,
}

impl Topology {
    pub fn empty(n: u64) -> Self {
        Self {
            adj: (0..n).map(|i| (NodeId(i), BTreeSet::new())).collect(),
        }
    }

    pub fn complete(n: u64) -> Self {
        let mut t = Self::empty(n);
        for a in 0..n {
            for b in a + 1..n {
                t.add_edge(NodeId(a), NodeId(b));
            }
        }
        t
    }

    pub fn path(n: u64) -> Self {
        let mut t = Self::empty(n);
        for a in 1..n {
            t.add_edge(NodeId(a - 1), NodeId(a));
        }
        t
    }

    pub fn ring(n: u64) -> Self {
        let mut t = Self::path(n);
        if n > 2 {
            t.add_edge(NodeId(n - 1), NodeId(0));
        }
        t
    }

    /// A random spanning tree plus `extra` random chords. Always connected.
    pub fn random_connected<R: Rng>(n: u64, extra: usize, rng: &mut R) -> Self {
        let mut t = Self::empty(n);
        for a in 1..n {
            let b = rng.gen_range(0..a);
            t.add_edge(NodeId(a), NodeId(b));
        }
        if n > 1 {
            for _ in 0..extra {
                let a = rng.gen_range(0..n);
                let b = rng.gen_range(0..n);
                if a != b {
                    t.add_edge(NodeId(a), NodeId(b));
                }
            }
        }
        t
    }

    pub fn add_node(&mut self, v: NodeId) {
        self.adj.entry(v).or_default();
    }

    pub fn add_edge(&mut self, a: NodeId, b: NodeId) {
        if a == b {
            return;
        }
        self.adj.entry(a).or_default().insert(b);
        self.adj.entry(b).or_default().insert(a);
    }

    pub fn remove_edge(&mut self, a: NodeId, b: NodeId) {
        if let Some(s) = self.adj.get_mut(&a) {
            s.remove(&b);
        }
        if let Some(s) = self.adj.get_mut(&b) {
            s.remove(&a);
        }
    }

    pub fn has_edge(&self, a: NodeId, b: NodeId) -> bool {
        self.adj.get(&a).is_some_and(|s| s.contains(&b))
    }

    pub fn neighbours(&self, v: NodeId) -> &BTreeSet<NodeId> {
        static EMPTY: BTreeSet<NodeId> = BTreeSet::new();
        self.adj.get(&v).unwrap_or(&EMPTY)
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.adj.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.values().map(BTreeSet::len).sum::<usize>() / 2
    }

    /// Hop distances from `src` to every reachable node.
    pub fn bfs(&self, src: NodeId) -> BTreeMap<NodeId, u64> {
        let mut dist = BTreeMap::from([(src, 0)]);
        let mut queue = VecDeque::from([src]);
        while let Some(v) = queue.pop_front() {
            let d = dist[&v];
            for &w in self.neighbours(v) {
                if let std::collections::btree_map::Entry::Vacant(e) = dist.entry(w) {
                    e.insert(d + 1);
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    pub fn components(&self) -> Vec<BTreeSet<NodeId>> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for v in self.nodes() {
            if seen.contains(&v) {
                continue;
            }
            let comp: BTreeSet<NodeId> = self.bfs(v).into_keys().collect();
            seen.extend(comp.iter().copied());
            out.push(comp);
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        self.components().len() <= 1
    }

    /// Largest eccentricity over all nodes; for a disconnected graph, the
    /// largest diameter of any component.
    pub fn diameter(&self) -> u64 {
        self.nodes()
            .map(|v| self.bfs(v).values().copied().max().unwrap_or(0))
            .max()
            .unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn shapes() {
        assert_eq!(Topology::complete(5).edge_count(), 10);
        assert_eq!(Topology::ring(10).edge_count(), 10);
        assert_eq!(Topology::path(10).diameter(), 9);
        assert_eq!(Topology::ring(10).diameter(), 5);
        assert_eq!(Topology::complete(5).diameter(), 1);
        assert_eq!(Topology::empty(1).diameter(), 0);
    }

    #[test]
    fn random_graphs_are_connected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in 1..60 {
            assert!(Topology::random_connected(n, n as usize, &mut rng).is_connected());
        }
    }

    #[test]
    fn disconnected_diameter_is_per_component() {
        let mut t = Topology::path(4);
        t.remove_edge(NodeId(1), NodeId(2));
        assert!(!t.is_connected());
        assert_eq!(t.components().len(), 2);
        assert_eq!(t.diameter(), 1);
    }
}
