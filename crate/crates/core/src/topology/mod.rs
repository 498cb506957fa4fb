//! Initial network states.
//!
//! Every generator is deterministic in its spec and produces a weakly
//! connected knowledge graph that stores no false identifiers.

mod document;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::circular::CircularList;
use crate::error::{Error, Result};
use crate::protocol::NodeState;
use crate::sim::NetworkState;
use crate::types::{Message, MessageType, NodeId, Status};

pub use document::{load, save};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TopologyKind {
    /// Path in position order.
    Line,
    Ring,
    /// Every leaf knows the center; the center knows nobody.
    StarIn,
    /// The center knows every leaf; leaves know nobody.
    StarOut,
    /// Uniform random recursive tree with random edge directions.
    RandomTree,
    RandomConnected {
        extra_edges: usize,
    },
    /// Valid p-trees joined by single knowledge edges.
    HeapForest {
        num_heaps: usize,
    },
    CliqueLegal,
    /// Every variable filled with arbitrary live ids.
    Adversarial,
}

impl fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TopologyKind::Line => f.write_str("line"),
            TopologyKind::Ring => f.write_str("ring"),
            TopologyKind::StarIn => f.write_str("star-in"),
            TopologyKind::StarOut => f.write_str("star-out"),
            TopologyKind::RandomTree => f.write_str("random-tree"),
            TopologyKind::RandomConnected { extra_edges } => write!(f, "random-connected:{extra_edges}"),
            TopologyKind::HeapForest { num_heaps } => write!(f, "heap-forest:{num_heaps}"),
            TopologyKind::CliqueLegal => f.write_str("clique-legal"),
            TopologyKind::Adversarial => f.write_str("adversarial"),
        }
    }
}

impl FromStr for TopologyKind {
    type Err = Error;

    /// Parses `name` or `name:param`, e.g. `heap-forest:3`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, param) = match s.split_once(':') {
            Some((name, p)) => {
                let p = p
                    .parse::<usize>()
                    .map_err(|_| Error::Config(format!("bad parameter in topology `{s}`")))?;
                (name, Some(p))
            }
            None => (s, None),
        };
        let kind = match (name, param) {
            ("line", None) => TopologyKind::Line,
            ("ring", None) => TopologyKind::Ring,
            ("star-in", None) => TopologyKind::StarIn,
            ("star-out", None) => TopologyKind::StarOut,
            ("random-tree", None) => TopologyKind::RandomTree,
            ("random-connected", p) => TopologyKind::RandomConnected {
                extra_edges: p.unwrap_or(0),
            },
            ("heap-forest", p) => TopologyKind::HeapForest {
                num_heaps: p.unwrap_or(1),
            },
            ("clique-legal", None) => TopologyKind::CliqueLegal,
            ("adversarial", None) => TopologyKind::Adversarial,
            _ => return Err(Error::Config(format!("unknown topology `{s}`"))),
        };
        Ok(kind)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IdScheme {
    /// Ids `1..=n`, positions in id order.
    #[default]
    Dense,
    /// Distinct random ids; positions follow draw order, not id order.
    SparseRandom,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InitialStateSpec {
    #[serde(flatten)]
    pub kind: TopologyKind,
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub id_scheme: IdScheme,
}

impl InitialStateSpec {
    pub fn dense(kind: TopologyKind, n: usize, seed: u64) -> Self {
        InitialStateSpec {
            kind,
            n,
            seed,
            id_scheme: IdScheme::Dense,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        match self.kind {
            TopologyKind::HeapForest { num_heaps } if num_heaps == 0 || num_heaps > self.n => Err(Error::Config(
                format!("heap-forest needs 1 <= num_heaps <= n, got {num_heaps}"),
            )),
            TopologyKind::RandomConnected { extra_edges } => {
                let possible = self.n * (self.n - 1) / 2 - (self.n - 1);
                if extra_edges > possible {
                    Err(Error::Config(format!(
                        "random-connected with n = {} allows at most {possible} extra edges",
                        self.n
                    )))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

/// Ids in position order.
fn positions(spec: &InitialStateSpec, rng: &mut ChaCha8Rng) -> Vec<NodeId> {
    match spec.id_scheme {
        IdScheme::Dense => (1..=spec.n as u64).map(NodeId).collect(),
        IdScheme::SparseRandom => {
            let mut seen = HashSet::with_capacity(spec.n);
            let mut ids = Vec::with_capacity(spec.n);
            while ids.len() < spec.n {
                let v = rng.gen_range(1..=u64::from(u32::MAX));
                if seen.insert(v) {
                    ids.push(NodeId(v));
                }
            }
            ids
        }
    }
}

/// Directed knowledge edges collected per node, in insertion order.
#[derive(Default)]
struct Knowledge {
    out: BTreeMap<NodeId, Vec<NodeId>>,
}

impl Knowledge {
    fn new(ids: &[NodeId]) -> Self {
        Knowledge {
            out: ids.iter().map(|id| (*id, Vec::new())).collect(),
        }
    }

    fn add(&mut self, from: NodeId, to: NodeId) -> bool {
        let list = self.out.get_mut(&from).expect("known node");
        if from == to || list.contains(&to) {
            return false;
        }
        list.push(to);
        true
    }

    fn has(&self, from: NodeId, to: NodeId) -> bool {
        self.out[&from].contains(&to)
    }

    fn into_nodes(self) -> Vec<NodeState> {
        self.out
            .into_iter()
            .map(|(id, known)| NodeState::fresh(id, known))
            .collect()
    }
}

/// Random recursive tree over `ids` with each edge pointing a random way.
fn random_tree(ids: &[NodeId], rng: &mut ChaCha8Rng, know: &mut Knowledge) {
    let mut order = ids.to_vec();
    order.shuffle(rng);
    for i in 1..order.len() {
        let parent = order[rng.gen_range(0..i)];
        if rng.gen_bool(0.5) {
            know.add(order[i], parent);
        } else {
            know.add(parent, order[i]);
        }
    }
}

/// Generates the initial state described by `spec`.
pub fn generate(spec: &InitialStateSpec) -> Result<NetworkState> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let pos = positions(spec, &mut rng);
    build(spec, pos, &mut rng)
}

fn build(spec: &InitialStateSpec, pos: Vec<NodeId>, rng: &mut ChaCha8Rng) -> Result<NetworkState> {
    let n = pos.len();
    let mut know = Knowledge::new(&pos);
    match spec.kind {
        TopologyKind::Line | TopologyKind::Ring => {
            for i in 0..n {
                if i > 0 {
                    know.add(pos[i], pos[i - 1]);
                }
                if i + 1 < n {
                    know.add(pos[i], pos[i + 1]);
                }
            }
            if spec.kind == TopologyKind::Ring && n >= 3 {
                know.add(pos[0], pos[n - 1]);
                know.add(pos[n - 1], pos[0]);
            }
        }
        TopologyKind::StarIn | TopologyKind::StarOut => {
            let center = pos[rng.gen_range(0..n)];
            for &leaf in pos.iter().filter(|v| **v != center) {
                if spec.kind == TopologyKind::StarIn {
                    know.add(leaf, center);
                } else {
                    know.add(center, leaf);
                }
            }
        }
        TopologyKind::RandomTree => random_tree(&pos, rng, &mut know),
        TopologyKind::RandomConnected { extra_edges } => {
            random_tree(&pos, rng, &mut know);
            let mut added = 0;
            while added < extra_edges {
                let (a, b) = (pos[rng.gen_range(0..n)], pos[rng.gen_range(0..n)]);
                if a != b && !know.has(b, a) && know.add(a, b) {
                    added += 1;
                }
            }
        }
        TopologyKind::HeapForest { num_heaps } => {
            return Ok(heap_forest(&pos, num_heaps, rng).0);
        }
        TopologyKind::CliqueLegal => return legal_clique(&pos),
        TopologyKind::Adversarial => return Ok(adversarial(&pos, rng)),
    }
    NetworkState::from_nodes(know.into_nodes())
}

/// The legal state over `ids`: full knowledge and the descending list.
pub fn legal_clique(ids: &[NodeId]) -> Result<NetworkState> {
    let mut sorted = ids.to_vec();
    sorted.sort();
    let nodes = sorted.iter().enumerate().map(|(i, &id)| {
        let others: Vec<NodeId> = sorted.iter().copied().filter(|v| *v != id).collect();
        let mut node = NodeState::fresh(id, others.iter().copied());
        node.relay = others.into_iter().collect();
        node.pred = sorted.get(i + 1).copied();
        node.succ = i.checked_sub(1).map(|j| sorted[j]);
        node.status = Status::Active;
        node
    });
    NetworkState::from_nodes(nodes)
}

/// Links `members` into one valid p-tree: each non-head picks a random
/// larger member as predecessor, and each parent picks one child as its
/// successor. Returns nothing; edits `nodes` in place.
fn random_heap(members: &[NodeId], rng: &mut ChaCha8Rng, nodes: &mut BTreeMap<NodeId, NodeState>) {
    let mut desc = members.to_vec();
    desc.sort_by(|a, b| b.cmp(a));
    let mut children: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
    for j in 1..desc.len() {
        let p = desc[rng.gen_range(0..j)];
        let node = nodes.get_mut(&desc[j]).expect("member");
        node.pred = Some(p);
        node.neighbors.insert_tail(p);
        children.entry(p).or_default().push(desc[j]);
    }
    for (p, kids) in children {
        let s = kids[rng.gen_range(0..kids.len())];
        nodes.get_mut(&p).expect("member").succ = Some(s);
        nodes.get_mut(&s).expect("member").status = Status::Active;
    }
}

/// A heap forest over `ids` and the partition it was built from.
pub fn heap_forest(ids: &[NodeId], num_heaps: usize, rng: &mut ChaCha8Rng) -> (NetworkState, Vec<BTreeSet<NodeId>>) {
    let n = ids.len();
    let mut shuffled = ids.to_vec();
    shuffled.shuffle(rng);
    let mut cuts: Vec<usize> = (1..n).collect();
    cuts.shuffle(rng);
    let mut cuts: Vec<usize> = cuts.into_iter().take(num_heaps - 1).collect();
    cuts.sort();
    let mut groups = Vec::with_capacity(num_heaps);
    let mut start = 0;
    for end in cuts.into_iter().chain([n]) {
        groups.push(shuffled[start..end].to_vec());
        start = end;
    }

    let mut nodes: BTreeMap<NodeId, NodeState> = ids.iter().map(|id| (*id, NodeState::fresh(*id, []))).collect();
    for group in &groups {
        random_heap(group, rng, &mut nodes);
    }
    for i in 1..groups.len() {
        let a = groups[i][rng.gen_range(0..groups[i].len())];
        let other = &groups[rng.gen_range(0..i)];
        let b = other[rng.gen_range(0..other.len())];
        let (from, to) = if rng.gen_bool(0.5) { (a, b) } else { (b, a) };
        nodes.get_mut(&from).expect("member").neighbors.insert_tail(to);
    }
    let net = NetworkState::from_nodes(nodes.into_values()).expect("nonempty");
    let partition = groups.into_iter().map(|g| g.into_iter().collect()).collect();
    (net, partition)
}

/// A single valid heap over `ids` where every node already knows every
/// other node, with each node's standing `pred-request` in flight.
pub fn heap_fixture(ids: &[NodeId], seed: u64) -> NetworkState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes: BTreeMap<NodeId, NodeState> = ids
        .iter()
        .map(|id| {
            let others = ids.iter().copied().filter(|v| v != id);
            (*id, NodeState::fresh(*id, others))
        })
        .collect();
    random_heap(ids, &mut rng, &mut nodes);
    let mut net = NetworkState::from_nodes(nodes.into_values()).expect("nonempty");
    for node in net.nodes.values() {
        if let Some(p) = node.pred {
            net.buffers
                .entry(p)
                .or_default()
                .push(Message::new(MessageType::PredRequest, node.id, p));
        }
    }
    net
}

fn random_subset(others: &[NodeId], max: usize, rng: &mut ChaCha8Rng) -> Vec<NodeId> {
    let k = rng.gen_range(0..=max.min(others.len()));
    others.choose_multiple(rng, k).copied().collect()
}

fn random_cursor(items: Vec<NodeId>, rng: &mut ChaCha8Rng) -> CircularList {
    let head = if items.is_empty() {
        0
    } else {
        rng.gen_range(0..items.len())
    };
    CircularList::from_parts(items, head).expect("distinct ids")
}

/// Arbitrary contents: random knowledge, possibly invalid or conflicting
/// p/s values, random status and cursors. A random tree inside N keeps the
/// knowledge graph weakly connected. L and S hold at most n ids each.
fn adversarial(ids: &[NodeId], rng: &mut ChaCha8Rng) -> NetworkState {
    let n = ids.len();
    let mut know = Knowledge::new(ids);
    random_tree(ids, rng, &mut know);
    let mut nodes = Vec::with_capacity(n);
    for (id, mut known) in know.out {
        let others: Vec<NodeId> = ids.iter().copied().filter(|v| *v != id).collect();
        for v in random_subset(&others, 4, rng) {
            if !known.contains(&v) {
                known.push(v);
            }
        }
        known.shuffle(rng);
        let pick = |rng: &mut ChaCha8Rng| {
            (!others.is_empty() && rng.gen_bool(0.75)).then(|| others[rng.gen_range(0..others.len())])
        };
        let pred = pick(rng);
        let succ = pick(rng);
        nodes.push(NodeState {
            id,
            pred,
            succ,
            neighbors: random_cursor(known, rng),
            relay: {
                let l = random_subset(&others, n, rng);
                random_cursor(l, rng)
            },
            scanned: random_subset(&others, n, rng).into_iter().collect(),
            status: if rng.gen_bool(0.5) {
                Status::Active
            } else {
                Status::Inactive
            },
        });
    }
    NetworkState::from_nodes(nodes).expect("nonempty")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verify;

    fn ids(v: &[u64]) -> Vec<NodeId> {
        v.iter().copied().map(NodeId).collect()
    }

    fn all_kinds() -> Vec<TopologyKind> {
        vec![
            TopologyKind::Line,
            TopologyKind::Ring,
            TopologyKind::StarIn,
            TopologyKind::StarOut,
            TopologyKind::RandomTree,
            TopologyKind::RandomConnected { extra_edges: 3 },
            TopologyKind::HeapForest { num_heaps: 2 },
            TopologyKind::CliqueLegal,
            TopologyKind::Adversarial,
        ]
    }

    #[test]
    fn line_of_three() {
        let net = generate(&InitialStateSpec::dense(TopologyKind::Line, 3, 0)).unwrap();
        let n = |v| net.nodes[&NodeId(v)].neighbors.to_vec();
        assert_eq!(n(1), ids(&[2]));
        assert_eq!(n(2), ids(&[1, 3]));
        assert_eq!(n(3), ids(&[2]));
        assert!(net.nodes.values().all(|x| x.pred.is_none() && x.succ.is_none()));
    }

    #[test]
    fn clique_of_three_is_legal() {
        let net = generate(&InitialStateSpec::dense(TopologyKind::CliqueLegal, 3, 0)).unwrap();
        let node = |v| &net.nodes[&NodeId(v)];
        assert_eq!(node(1).pred, Some(NodeId(2)));
        assert_eq!(node(2).pred, Some(NodeId(3)));
        assert_eq!(node(3).pred, None);
        assert_eq!(node(3).succ, Some(NodeId(2)));
        assert_eq!(node(2).succ, Some(NodeId(1)));
        assert_eq!(node(1).succ, None);
        assert!(verify::is_legal(&net));
    }

    #[test]
    fn stars_have_one_center() {
        let spec = InitialStateSpec::dense(TopologyKind::StarIn, 6, 3);
        let net = generate(&spec).unwrap();
        let centers: Vec<_> = net.nodes.values().filter(|x| x.neighbors.is_empty()).collect();
        assert_eq!(centers.len(), 1);
        let c = centers[0].id;
        assert!(net
            .nodes
            .values()
            .filter(|x| x.id != c)
            .all(|x| x.neighbors.to_vec() == vec![c]));

        let spec = InitialStateSpec::dense(TopologyKind::StarOut, 6, 3);
        let net = generate(&spec).unwrap();
        let full: Vec<_> = net.nodes.values().filter(|x| x.neighbors.len() == 5).collect();
        assert_eq!(full.len(), 1);
    }

    #[test]
    fn random_connected_adds_exact_extra_edges() {
        let spec = InitialStateSpec::dense(TopologyKind::RandomConnected { extra_edges: 7 }, 10, 5);
        let net = generate(&spec).unwrap();
        assert_eq!(verify::knowledge_edges(&net).len(), 9 + 7);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        for spec in [
            InitialStateSpec::dense(TopologyKind::Line, 0, 0),
            InitialStateSpec::dense(TopologyKind::HeapForest { num_heaps: 0 }, 4, 0),
            InitialStateSpec::dense(TopologyKind::HeapForest { num_heaps: 5 }, 4, 0),
            InitialStateSpec::dense(TopologyKind::RandomConnected { extra_edges: 100 }, 4, 0),
        ] {
            assert!(matches!(generate(&spec), Err(Error::Config(_))), "{spec:?}");
        }
    }

    #[test]
    fn heap_forest_matches_its_partition() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (net, partition) = heap_forest(&ids(&[1, 2, 3, 4, 5, 6]), 2, &mut rng);
        let heaps = verify::heap_decomposition(&net).unwrap();
        let mut found = heaps.partition();
        let mut expected = partition.clone();
        found.sort();
        expected.sort();
        assert_eq!(found, expected);
        for (heap, head) in heaps.heads.iter().enumerate() {
            assert_eq!(Some(*head), heaps.members(heap).max());
        }
        assert!(verify::is_valid(&net));
    }

    #[test]
    fn heap_fixture_is_one_valid_heap() {
        let net = heap_fixture(&ids(&[2, 4, 6, 8, 10]), 1);
        assert_eq!(verify::num_heaps(&net), 1);
        assert!(verify::is_valid(&net));
        assert_eq!(net.buffered(), 4);
        net.check().unwrap();
    }

    #[test]
    fn kind_names_round_trip() {
        for kind in all_kinds() {
            assert_eq!(kind.to_string().parse::<TopologyKind>().unwrap(), kind);
        }
        assert!("mesh".parse::<TopologyKind>().is_err());
        assert!("line:3".parse::<TopologyKind>().is_err());
        assert!("heap-forest:x".parse::<TopologyKind>().is_err());
    }

    #[test]
    fn spec_json_shape() {
        let spec = InitialStateSpec::dense(TopologyKind::HeapForest { num_heaps: 3 }, 12, 9);
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(
            json,
            r#"{"kind":"heap-forest","num_heaps":3,"n":12,"seed":9,"id_scheme":"dense"}"#
        );
        assert_eq!(serde_json::from_str::<InitialStateSpec>(&json).unwrap(), spec);
    }

    #[test]
    fn seeds_change_random_kinds() {
        for kind in [TopologyKind::RandomTree, TopologyKind::Adversarial] {
            let a = generate(&InitialStateSpec::dense(kind, 8, 1)).unwrap();
            let b = generate(&InitialStateSpec::dense(kind, 8, 2)).unwrap();
            assert_ne!(a, b, "{kind}");
        }
    }

    #[test]
    fn every_kind_is_connected_and_honest() {
        for kind in all_kinds() {
            for scheme in [IdScheme::Dense, IdScheme::SparseRandom] {
                for n in [1, 2, 3, 7, 16] {
                    let mut kind = kind;
                    if let TopologyKind::HeapForest { num_heaps } = &mut kind {
                        *num_heaps = (*num_heaps).min(n);
                    }
                    if let TopologyKind::RandomConnected { extra_edges } = &mut kind {
                        *extra_edges = (*extra_edges).min(n * (n - 1) / 2 - (n - 1));
                    }
                    let spec = InitialStateSpec {
                        kind,
                        n,
                        seed: 42,
                        id_scheme: scheme,
                    };
                    let net = generate(&spec).unwrap();
                    assert_eq!(net.len(), n);
                    assert!(verify::is_weakly_connected(&net), "{spec:?}");
                    net.check().unwrap();
                    assert_eq!(generate(&spec).unwrap(), net, "determinism {spec:?}");
                }
            }
        }
    }
}
