//! Executable structural predicates over a network snapshot.
//!
//! All functions are read-only and total unless stated otherwise.

mod work;

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::sim::NetworkState;
use crate::types::NodeId;
use crate::unionfind::UnionFind;

pub use work::{work_report, NodeWork, WorkCounters, WorkReport, MAINTENANCE_GRACE};

/// `p > x` and `s < x` wherever defined, and every successor claim is
/// matched by the successor's predecessor.
pub fn is_valid(net: &NetworkState) -> bool {
    net.nodes.values().all(|x| {
        let pred_ok = x.pred.is_none_or(|p| p > x.id);
        let succ_ok = x
            .succ
            .is_none_or(|s| s < x.id && net.nodes.get(&s).is_some_and(|y| y.pred == Some(x.id)));
        pred_ok && succ_ok
    })
}

/// Every node knows every other node, and the p/s links form the list
/// sorted by descending id.
pub fn is_legal(net: &NetworkState) -> bool {
    let n = net.nodes.len();
    let Some(&max) = net.nodes.keys().next_back() else {
        return false;
    };
    net.nodes.values().all(|v| {
        // N is duplicate-free and never holds the own id.
        let clique = v.neighbors.len() == n - 1 && v.neighbors.items().iter().all(|u| net.nodes.contains_key(u));
        let chain = v.id == max
            || v.pred
                .is_some_and(|p| p > v.id && net.nodes.get(&p).is_some_and(|pv| pv.succ == Some(v.id)));
        clique && chain
    })
}

/// Whether `x` roots its own p-tree: no predecessor, or one that is not a
/// live larger id.
fn is_head(net: &NetworkState, x: NodeId) -> bool {
    let node = &net.nodes[&x];
    match node.pred {
        None => true,
        Some(p) => p < x || !net.nodes.contains_key(&p),
    }
}

/// Number of p-trees, counting every node without a usable predecessor as a
/// head.
pub fn num_heaps(net: &NetworkState) -> usize {
    net.nodes.keys().filter(|x| is_head(net, **x)).count()
}

/// Partition of the nodes into p-trees.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HeapDecomposition {
    /// Heap index of every node.
    pub assignment: BTreeMap<NodeId, usize>,
    /// Head of each heap; heap indices follow ascending head id.
    pub heads: Vec<NodeId>,
    pub sizes: Vec<usize>,
}

impl HeapDecomposition {
    pub fn len(&self) -> usize {
        self.heads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heads.is_empty()
    }

    pub fn heap_of(&self, x: NodeId) -> Option<usize> {
        self.assignment.get(&x).copied()
    }

    pub fn members(&self, heap: usize) -> impl Iterator<Item = NodeId> + '_ {
        self.assignment
            .iter()
            .filter(move |(_, h)| **h == heap)
            .map(|(x, _)| *x)
    }

    /// Heaps as sets of members, ordered by head.
    pub fn partition(&self) -> Vec<BTreeSet<NodeId>> {
        let mut parts = vec![BTreeSet::new(); self.heads.len()];
        for (x, h) in &self.assignment {
            parts[*h].insert(*x);
        }
        parts
    }
}

/// Follows p-links from every node to its head.
///
/// Links to smaller ids are treated as absent (they are repaired in the
/// next round), so the link structure is strictly increasing and acyclic.
/// A predecessor that is not a live node is an error.
pub fn heap_decomposition(net: &NetworkState) -> Result<HeapDecomposition> {
    for x in net.nodes.values() {
        if let Some(p) = x.pred {
            if !net.nodes.contains_key(&p) {
                return Err(Error::InvalidForest(format!(
                    "node {} points to missing predecessor {p}",
                    x.id
                )));
            }
        }
    }
    let heads: Vec<NodeId> = net.nodes.keys().copied().filter(|x| is_head(net, *x)).collect();
    let index: BTreeMap<NodeId, usize> = heads.iter().enumerate().map(|(i, h)| (*h, i)).collect();
    let mut assignment = BTreeMap::new();
    // Descending order visits every predecessor before its children.
    for &x in net.nodes.keys().rev() {
        let heap = match index.get(&x) {
            Some(i) => *i,
            None => assignment[&net.nodes[&x].pred.expect("non-head has a predecessor")],
        };
        assignment.insert(x, heap);
    }
    let mut sizes = vec![0; heads.len()];
    for h in assignment.values() {
        sizes[*h] += 1;
    }
    Ok(HeapDecomposition {
        assignment,
        heads,
        sizes,
    })
}

/// Whether `heap(u)` is linearized with respect to `u`: every member `v`
/// other than the head with `v >= u` is its predecessor's successor.
pub fn is_linearized_wrt(net: &NetworkState, u: NodeId) -> bool {
    let Ok(heaps) = heap_decomposition(net) else {
        return false;
    };
    let Some(heap) = heaps.heap_of(u) else {
        return false;
    };
    let head = heaps.heads[heap];
    let ok = heaps.members(heap).filter(|v| *v != head && *v >= u).all(|v| {
        let p = net.nodes[&v].pred.expect("non-head has a predecessor");
        net.nodes[&p].succ == Some(v)
    });
    ok
}

/// Whether a heap forms a sorted list.
pub fn is_sorted_list(net: &NetworkState, heaps: &HeapDecomposition, heap: usize) -> bool {
    heaps
        .members(heap)
        .min()
        .is_some_and(|lowest| is_linearized_wrt(net, lowest))
}

/// The s-edges `(x, y)` with `y ∈ S(x)`.
pub fn s_edges(net: &NetworkState) -> BTreeSet<(NodeId, NodeId)> {
    net.nodes
        .values()
        .flat_map(|x| x.scanned.iter().map(move |y| (x.id, *y)))
        .collect()
}

/// Rank of `x` when ids are sorted descending (the maximum has rank 0).
pub fn ord(net: &NetworkState, x: NodeId) -> Option<u64> {
    net.nodes
        .contains_key(&x)
        .then(|| net.nodes.range(x..).count() as u64 - 1)
}

/// Pair potential `2·ord(x) + 2·ord(y) + [x > y]`.
pub fn omega(net: &NetworkState, x: NodeId, y: NodeId) -> Option<u64> {
    Some(2 * ord(net, x)? + 2 * ord(net, y)? + u64::from(x > y))
}

/// Maximum potential over an edge set, 0 when empty.
pub fn lambda<'a>(net: &NetworkState, edges: impl IntoIterator<Item = &'a (NodeId, NodeId)>) -> u64 {
    edges
        .into_iter()
        .filter_map(|(x, y)| omega(net, *x, *y))
        .max()
        .unwrap_or(0)
}

/// Whether every pair of heaps is joined by a path of s-edges and
/// intra-heap hops. Each heap is contracted to one vertex.
pub fn heaps_s_connected(net: &NetworkState) -> Result<bool> {
    let heaps = heap_decomposition(net)?;
    let mut uf = UnionFind::new(heaps.len());
    for (x, y) in s_edges(net) {
        if let (Some(a), Some(b)) = (heaps.heap_of(x), heaps.heap_of(y)) {
            uf.union(a, b);
        }
    }
    Ok(uf.components() <= 1)
}

/// Directed knowledge edges: every id a node stores, in any variable.
pub fn knowledge_edges(net: &NetworkState) -> BTreeSet<(NodeId, NodeId)> {
    net.nodes
        .values()
        .flat_map(|x| x.known_ids().map(move |y| (x.id, y)))
        .collect()
}

/// Whether the knowledge graph is connected when directions are ignored.
/// Edges to unknown ids are ignored.
pub fn is_weakly_connected(net: &NetworkState) -> bool {
    let index: BTreeMap<NodeId, usize> = net.nodes.keys().enumerate().map(|(i, x)| (*x, i)).collect();
    let mut uf = UnionFind::new(index.len());
    for (x, y) in knowledge_edges(net) {
        if let (Some(a), Some(b)) = (index.get(&x), index.get(&y)) {
            uf.union(*a, *b);
        }
    }
    uf.components() <= 1
}

/// First stored or buffered id that does not belong to a live node.
pub fn find_false_identifier(net: &NetworkState) -> Option<(NodeId, String)> {
    for x in net.nodes.values() {
        if let Some(y) = x.known_ids().find(|y| !net.nodes.contains_key(y)) {
            return Some((y, format!("node {}", x.id)));
        }
    }
    for (to, inbox) in &net.buffers {
        for m in inbox {
            let ids = [Some(m.sender), m.extra, Some(m.recipient), Some(*to)];
            if let Some(y) = ids.into_iter().flatten().find(|y| !net.nodes.contains_key(y)) {
                return Some((y, format!("message {} buffered for {to}", m.mtype)));
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::NodeState;
    use crate::topology::{self, legal_clique};
    use crate::types::Status;

    fn ids(v: &[u64]) -> Vec<NodeId> {
        v.iter().copied().map(NodeId).collect()
    }

    fn clique(v: &[u64]) -> NetworkState {
        legal_clique(&ids(v)).unwrap()
    }

    #[test]
    fn legal_clique_is_legal_and_valid() {
        let net = clique(&[1, 2, 3]);
        assert!(is_legal(&net));
        assert!(is_valid(&net));
        assert_eq!(num_heaps(&net), 1);
    }

    #[test]
    fn legal_requires_full_knowledge_and_chain() {
        let mut net = clique(&[1, 2, 3]);
        net.nodes.get_mut(&NodeId(1)).unwrap().neighbors.remove(NodeId(3));
        assert!(!is_legal(&net));

        let mut net = clique(&[1, 2, 3]);
        net.nodes.get_mut(&NodeId(3)).unwrap().succ = None;
        assert!(!is_legal(&net));
        assert!(is_valid(&net));
    }

    #[test]
    fn invalid_predecessor_and_mismatched_claims() {
        let mut net = clique(&[1, 2, 3]);
        net.nodes.get_mut(&NodeId(2)).unwrap().pred = Some(NodeId(1));
        assert!(!is_valid(&net));

        let mut net = clique(&[5, 8, 9]);
        net.nodes.get_mut(&NodeId(9)).unwrap().succ = Some(NodeId(5));
        assert_eq!(net.nodes[&NodeId(5)].pred, Some(NodeId(8)));
        assert!(!is_valid(&net));
    }

    #[test]
    fn singleton_is_legal() {
        let net = clique(&[7]);
        assert!(is_legal(&net));
        assert!(is_linearized_wrt(&net, NodeId(7)));
    }

    #[test]
    fn decomposition_of_clique_and_line() {
        let net = clique(&[1, 2, 3, 4]);
        let heaps = heap_decomposition(&net).unwrap();
        assert_eq!(heaps.heads, ids(&[4]));
        assert_eq!(heaps.sizes, vec![4]);
        assert!(is_sorted_list(&net, &heaps, 0));

        let spec = topology::InitialStateSpec::dense(topology::TopologyKind::Line, 5, 0);
        let line = topology::generate(&spec).unwrap();
        let heaps = heap_decomposition(&line).unwrap();
        assert_eq!(heaps.len(), 5);
        assert!(heaps.sizes.iter().all(|s| *s == 1));
    }

    #[test]
    fn dangling_predecessor_is_reported() {
        let mut net = clique(&[1, 2]);
        net.nodes.get_mut(&NodeId(1)).unwrap().pred = Some(NodeId(40));
        assert!(matches!(heap_decomposition(&net), Err(Error::InvalidForest(_))));
    }

    /// Heap 1..=6 with head 6 where only the top of the chain is linked.
    fn partially_linearized() -> NetworkState {
        let mut net = clique(&[1, 2, 3, 4, 5, 6]);
        for v in 1..=4 {
            net.nodes.get_mut(&NodeId(v)).unwrap().pred = Some(NodeId(6));
        }
        for v in 1..=6 {
            net.nodes.get_mut(&NodeId(v)).unwrap().succ = None;
        }
        net.nodes.get_mut(&NodeId(6)).unwrap().succ = Some(NodeId(5));
        net
    }

    #[test]
    fn linearization_holds_down_to_the_fixed_prefix() {
        let net = partially_linearized();
        assert_eq!(heap_decomposition(&net).unwrap().len(), 1);
        assert!(is_linearized_wrt(&net, NodeId(6)));
        assert!(is_linearized_wrt(&net, NodeId(5)));
        for u in 1..=4 {
            assert!(!is_linearized_wrt(&net, NodeId(u)), "u = {u}");
        }
    }

    #[test]
    fn s_edges_are_literal() {
        let mut net = clique(&[3, 5, 8, 9]);
        assert!(s_edges(&net).is_empty());
        net.nodes.get_mut(&NodeId(5)).unwrap().scanned.insert(NodeId(9));
        assert_eq!(s_edges(&net), [(NodeId(5), NodeId(9))].into());
    }

    #[test]
    fn omega_values() {
        let net = clique(&[3, 5, 8, 9]);
        assert_eq!(omega(&net, NodeId(5), NodeId(8)), Some(6));
        assert_eq!(omega(&net, NodeId(8), NodeId(5)), Some(7));
        assert_eq!(omega(&net, NodeId(9), NodeId(9)), Some(0));
        assert_eq!(omega(&net, NodeId(9), NodeId(4)), None);
        let edges = [(NodeId(5), NodeId(8)), (NodeId(8), NodeId(5))];
        assert_eq!(lambda(&net, &edges), 7);
        assert_eq!(lambda(&net, &[]), 0);
    }

    #[test]
    fn s_connectivity_of_two_heaps() {
        let mut net = NetworkState::from_nodes([
            NodeState::fresh(NodeId(1), [NodeId(2)]),
            NodeState::fresh(NodeId(2), []),
            NodeState::fresh(NodeId(3), []),
        ])
        .unwrap();
        net.nodes.get_mut(&NodeId(1)).unwrap().pred = Some(NodeId(2));
        assert_eq!(num_heaps(&net), 2);
        assert!(!heaps_s_connected(&net).unwrap());
        net.nodes.get_mut(&NodeId(3)).unwrap().scanned.insert(NodeId(1));
        assert!(heaps_s_connected(&net).unwrap());
    }

    #[test]
    fn weak_connectivity_ignores_direction() {
        let net = NetworkState::from_nodes([
            NodeState::fresh(NodeId(1), [NodeId(2)]),
            NodeState::fresh(NodeId(2), []),
            NodeState::fresh(NodeId(3), [NodeId(2)]),
        ])
        .unwrap();
        assert!(is_weakly_connected(&net));
        let mut split = net.clone();
        split.nodes.insert(NodeId(4), NodeState::fresh(NodeId(4), []));
        assert!(!is_weakly_connected(&split));
        let mut lone = split.nodes[&NodeId(4)].clone();
        lone.status = Status::Active;
        assert_eq!(find_false_identifier(&split), None);
        lone.pred = Some(NodeId(99));
        split.nodes.insert(NodeId(4), lone);
        assert_eq!(find_false_identifier(&split).map(|f| f.0), Some(NodeId(99)));
    }
}
