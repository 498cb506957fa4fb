//! Synchronous round executor.
//!
//! Every message emitted in round `i` is buffered and delivered to its
//! recipient at the start of round `i + 1`. A round evaluates every live
//! node against the state at the round barrier, so the iteration order over
//! nodes does not affect the result.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::{canonical_order, NodeState, ProtocolOptions};
use crate::types::{Message, NodeId};
use crate::verify::{self, NodeWork, WorkCounters};

/// Live nodes plus the inboxes for the next round.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkState {
    pub round: u64,
    pub nodes: BTreeMap<NodeId, NodeState>,
    pub buffers: BTreeMap<NodeId, Vec<Message>>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimOptions {
    pub protocol: ProtocolOptions,
    /// Process each inbox in a seeded random order instead of the canonical
    /// one.
    pub fuzz_msg_order: Option<u64>,
}

/// Per-round observation. Field order is the JSONL key order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub round: u64,
    pub num_heaps: usize,
    pub is_valid: bool,
    pub is_legal: bool,
    pub messages_delivered: u64,
    pub per_node_sent: BTreeMap<NodeId, u64>,
    pub per_node_received: BTreeMap<NodeId, u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ChurnKind {
    Join { new_id: NodeId, contact: NodeId },
    Leave { id: NodeId },
}

/// A join or leave applied to the network whose round counter equals
/// `at_round`, before that network's buffers are delivered.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChurnEvent {
    pub at_round: u64,
    #[serde(flatten)]
    pub kind: ChurnKind,
}

impl ChurnEvent {
    pub fn join(at_round: u64, new_id: NodeId, contact: NodeId) -> Self {
        ChurnEvent {
            at_round,
            kind: ChurnKind::Join { new_id, contact },
        }
    }

    pub fn leave(at_round: u64, id: NodeId) -> Self {
        ChurnEvent {
            at_round,
            kind: ChurnKind::Leave { id },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopWhen {
    Legal,
    Valid,
    OneHeap,
    Never,
}

impl StopWhen {
    pub fn holds(self, net: &NetworkState) -> bool {
        match self {
            StopWhen::Legal => verify::is_legal(net),
            StopWhen::Valid => verify::is_valid(net),
            StopWhen::OneHeap => verify::num_heaps(net) == 1,
            StopWhen::Never => false,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StopWhen::Legal => "legal",
            StopWhen::Valid => "valid",
            StopWhen::OneHeap => "one-heap",
            StopWhen::Never => "never",
        }
    }
}

impl fmt::Display for StopWhen {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StopWhen {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [StopWhen::Legal, StopWhen::Valid, StopWhen::OneHeap, StopWhen::Never]
            .into_iter()
            .find(|w| w.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown stop predicate `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoundOutcome {
    pub record: TraceRecord,
    /// Per-type tallies of this round.
    pub work: WorkCounters,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl NetworkState {
    /// A network at round 0 with empty buffers.
    pub fn from_nodes(nodes: impl IntoIterator<Item = NodeState>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for node in nodes {
            let id = node.id;
            if map.insert(id, node).is_some() {
                return Err(Error::InvalidState(format!("duplicate node {id}")));
            }
        }
        if map.is_empty() {
            return Err(Error::InvalidState("network has no nodes".into()));
        }
        Ok(NetworkState {
            round: 0,
            nodes: map,
            buffers: BTreeMap::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.keys().copied()
    }

    pub fn buffered(&self) -> usize {
        self.buffers.values().map(Vec::len).sum()
    }

    /// Checks well-formedness: node invariants, no false identifiers, well
    /// formed buffered messages.
    pub fn check(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::InvalidState("network has no nodes".into()));
        }
        for (id, node) in &self.nodes {
            if *id != node.id {
                return Err(Error::InvalidState(format!("node {} stored under key {id}", node.id)));
            }
            node.check_invariants().map_err(Error::InvalidState)?;
        }
        if let Some((id, context)) = verify::find_false_identifier(self) {
            return Err(Error::FalseIdentifier { id, context });
        }
        for (to, inbox) in &self.buffers {
            if let Some(m) = inbox.iter().find(|m| m.recipient != *to || !m.is_well_formed()) {
                return Err(Error::InvalidState(format!(
                    "malformed message in buffer of {to}: {m:?}"
                )));
            }
        }
        Ok(())
    }

    /// Executes one synchronous round in place.
    pub fn step(&mut self, opts: &SimOptions) -> RoundOutcome {
        let mut buffers = std::mem::take(&mut self.buffers);
        let mut work = WorkCounters::default();
        let mut outgoing = Vec::new();
        let mut delivered = 0u64;

        for (&id, node) in self.nodes.iter_mut() {
            let mut inbox = buffers.remove(&id).unwrap_or_default();
            order_inbox(self.round, id, &mut inbox, opts);

            let tally = work.per_node.entry(id).or_insert_with(NodeWork::default);
            for m in &inbox {
                tally.recv[m.mtype.index()] += 1;
            }
            delivered += inbox.len() as u64;
            let out = node.round_in_order(&inbox, &opts.protocol);
            for m in &out {
                tally.sent[m.mtype.index()] += 1;
            }
            outgoing.extend(out);
        }
        // Inboxes of nodes that have left.
        work.dropped += buffers.values().map(|b| b.len() as u64).sum::<u64>();

        for m in outgoing {
            if self.nodes.contains_key(&m.recipient) {
                self.buffers.entry(m.recipient).or_default().push(m);
            } else {
                work.dropped += 1;
            }
        }
        self.round += 1;

        let record = TraceRecord {
            round: self.round,
            num_heaps: verify::num_heaps(self),
            is_valid: verify::is_valid(self),
            is_legal: verify::is_legal(self),
            messages_delivered: delivered,
            per_node_sent: work.per_node.iter().map(|(id, w)| (*id, w.sent_msgs())).collect(),
            per_node_received: work.per_node.iter().map(|(id, w)| (*id, w.recv_msgs())).collect(),
        };
        RoundOutcome { record, work }
    }

    /// Adds a node that knows only `contact`.
    pub fn apply_join(&mut self, new_id: NodeId, contact: NodeId) -> Result<()> {
        if self.nodes.contains_key(&new_id) {
            return Err(Error::Event(format!("node {new_id} already present")));
        }
        if !self.nodes.contains_key(&contact) {
            return Err(Error::Event(format!("contact {contact} is not a live node")));
        }
        self.nodes.insert(new_id, NodeState::fresh(new_id, [contact]));
        Ok(())
    }

    /// Removes a node and purges its id everywhere. Buffered messages from,
    /// to, or carrying the id are dropped; their number is returned.
    pub fn apply_leave(&mut self, id: NodeId) -> Result<u64> {
        if self.nodes.remove(&id).is_none() {
            return Err(Error::Event(format!("node {id} is not present")));
        }
        if self.nodes.is_empty() {
            return Err(Error::Event(format!("node {id} is the last node")));
        }
        for node in self.nodes.values_mut() {
            node.neighbors.remove(id);
            node.relay.remove(id);
            node.scanned.remove(&id);
            if node.pred == Some(id) {
                node.pred = None;
            }
            if node.succ == Some(id) {
                node.succ = None;
            }
        }
        let mut dropped = self.buffers.remove(&id).map_or(0, |b| b.len() as u64);
        for inbox in self.buffers.values_mut() {
            let before = inbox.len();
            inbox.retain(|m| m.sender != id && m.extra != Some(id));
            dropped += (before - inbox.len()) as u64;
        }
        self.buffers.retain(|_, b| !b.is_empty());
        Ok(dropped)
    }

    pub fn apply_event(&mut self, event: &ChurnEvent) -> Result<u64> {
        match event.kind {
            ChurnKind::Join { new_id, contact } => self.apply_join(new_id, contact).map(|()| 0),
            ChurnKind::Leave { id } => self.apply_leave(id),
        }
    }
}

/// Canonical order, or a permutation seeded by (seed, round, node).
fn order_inbox(round: u64, id: NodeId, inbox: &mut [Message], opts: &SimOptions) {
    canonical_order(inbox);
    if let Some(seed) = opts.fuzz_msg_order {
        let mixed = splitmix(seed ^ splitmix(round ^ splitmix(id.0)));
        inbox.shuffle(&mut ChaCha8Rng::seed_from_u64(mixed));
    }
}

/// Pure form of [`NetworkState::step`].
pub fn step_round(net: &NetworkState, opts: &SimOptions) -> (NetworkState, RoundOutcome) {
    let mut next = net.clone();
    let outcome = next.step(opts);
    (next, outcome)
}

/// The full record of a run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trace {
    pub start_round: u64,
    /// Whether the starting network was legal.
    pub initial_legal: bool,
    pub initial_valid: bool,
    pub initial_heaps: usize,
    pub records: Vec<TraceRecord>,
    pub work: Vec<WorkCounters>,
    /// Messages dropped by churn purges, not attributed to any round.
    pub purged: u64,
}

impl Trace {
    /// Round in which the network was first legal.
    pub fn first_legal(&self) -> Option<u64> {
        if self.initial_legal {
            return Some(self.start_round);
        }
        self.records.iter().find(|r| r.is_legal).map(|r| r.round)
    }

    /// Writes the records as JSON lines.
    pub fn write_jsonl(&self, mut w: impl std::io::Write) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunResult {
    pub net: NetworkState,
    pub trace: Trace,
    /// First round at which the stop predicate held with no churn pending.
    pub stopped_at: Option<u64>,
}

/// Steps until `stop_when` holds (after every event has been applied) or
/// `max_rounds` rounds have run.
pub fn run(
    mut net: NetworkState,
    max_rounds: u64,
    stop_when: StopWhen,
    events: &[ChurnEvent],
    opts: &SimOptions,
) -> Result<RunResult> {
    let mut pending: Vec<ChurnEvent> = events.to_vec();
    pending.sort_by_key(|e| e.at_round);
    if let Some(late) = pending.iter().find(|e| e.at_round < net.round) {
        return Err(Error::Event(format!(
            "event scheduled for round {} but the network is at round {}",
            late.at_round, net.round
        )));
    }
    let mut pending = pending.into_iter().peekable();
    // Churn due now shapes the initial observation.
    let mut purged = 0;
    while let Some(event) = pending.next_if(|e| e.at_round <= net.round) {
        purged += net.apply_event(&event)?;
    }
    let mut trace = Trace {
        start_round: net.round,
        initial_legal: verify::is_legal(&net),
        initial_valid: verify::is_valid(&net),
        initial_heaps: verify::num_heaps(&net),
        records: Vec::new(),
        work: Vec::new(),
        purged,
    };
    let mut steps = 0;
    let stopped_at = loop {
        while let Some(event) = pending.next_if(|e| e.at_round <= net.round) {
            trace.purged += net.apply_event(&event)?;
        }
        if pending.peek().is_none() && stop_when.holds(&net) {
            break Some(net.round);
        }
        if steps == max_rounds {
            break None;
        }
        let outcome = net.step(opts);
        trace.records.push(outcome.record);
        trace.work.push(outcome.work);
        steps += 1;
    };
    Ok(RunResult { net, trace, stopped_at })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::legal_clique;
    use crate::types::MessageType;

    fn ids(v: &[u64]) -> Vec<NodeId> {
        v.iter().copied().map(NodeId).collect()
    }

    fn two_fresh() -> NetworkState {
        NetworkState::from_nodes([
            NodeState::fresh(NodeId(1), [NodeId(2)]),
            NodeState::fresh(NodeId(2), [NodeId(1)]),
        ])
        .unwrap()
    }

    #[test]
    fn singleton_is_a_quiet_fixed_point() {
        let mut net = NetworkState::from_nodes([NodeState::fresh(NodeId(7), [])]).unwrap();
        let before = net.clone();
        let out = net.step(&SimOptions::default());
        assert_eq!(out.record.messages_delivered, 0);
        assert!(out.record.is_legal);
        assert_eq!(net.nodes, before.nodes);
        assert!(net.buffers.is_empty());
    }

    #[test]
    fn two_node_first_round_buffers() {
        let mut net = two_fresh();
        net.step(&SimOptions::default());
        let b = |v| net.buffers[&NodeId(v)].clone();
        assert_eq!(b(2), vec![Message::new(MessageType::PredRequest, NodeId(1), NodeId(2))]);
        assert_eq!(b(1), vec![Message::new(MessageType::Scan, NodeId(2), NodeId(1))]);
    }

    #[test]
    fn two_node_network_converges_quickly() {
        let res = run(two_fresh(), 50, StopWhen::Legal, &[], &SimOptions::default()).unwrap();
        let at = res.stopped_at.unwrap();
        assert!(at <= 5, "legal at {at}");
        let report = verify::work_report(&res.trace);
        assert!(report.stabilization.max_by(NodeWork::total_msgs) <= 20);
    }

    #[test]
    fn legal_clique_stays_legal_with_bounded_traffic() {
        let mut net = legal_clique(&ids(&[1, 2, 3])).unwrap();
        for _ in 0..10 {
            let out = net.step(&SimOptions::default());
            assert!(out.record.is_legal);
            assert!(out.record.per_node_sent.values().all(|v| *v <= 7));
            assert!(out.record.per_node_received.values().all(|v| *v <= 7));
        }
    }

    #[test]
    fn run_stops_immediately_when_already_legal() {
        let net = legal_clique(&ids(&[1, 2, 3])).unwrap();
        let res = run(net, 10, StopWhen::Legal, &[], &SimOptions::default()).unwrap();
        assert_eq!(res.stopped_at, Some(0));
        assert!(res.trace.records.is_empty());
    }

    #[test]
    fn never_runs_to_the_limit() {
        let net = legal_clique(&ids(&[1, 2, 3])).unwrap();
        let res = run(net, 10, StopWhen::Never, &[], &SimOptions::default()).unwrap();
        assert_eq!(res.stopped_at, None);
        assert_eq!(res.trace.records.len(), 10);
        assert_eq!(res.trace.records.last().unwrap().round, 10);
    }

    #[test]
    fn stop_predicate_names() {
        assert_eq!("one-heap".parse::<StopWhen>().unwrap(), StopWhen::OneHeap);
        assert!(matches!("sorted".parse::<StopWhen>(), Err(Error::Config(_))));
    }

    #[test]
    fn join_adds_a_fresh_node() {
        let mut net = legal_clique(&ids(&[3, 5, 8, 9])).unwrap();
        let before = net.clone();
        net.apply_join(NodeId(6), NodeId(9)).unwrap();
        let six = &net.nodes[&NodeId(6)];
        assert_eq!(six.neighbors.to_vec(), ids(&[9]));
        assert_eq!((six.pred, six.succ), (None, None));
        for (id, node) in &before.nodes {
            assert_eq!(&net.nodes[id], node);
        }
        assert!(net.apply_join(NodeId(6), NodeId(9)).is_err());
        assert!(net.apply_join(NodeId(7), NodeId(1)).is_err());
    }

    #[test]
    fn leave_purges_and_unlinks() {
        let mut net = legal_clique(&ids(&[3, 5, 8, 9])).unwrap();
        net.apply_leave(NodeId(8)).unwrap();
        assert_eq!(net.nodes[&NodeId(9)].succ, None);
        assert_eq!(net.nodes[&NodeId(5)].pred, None);
        for node in net.nodes.values() {
            let mut known: Vec<_> = node.neighbors.to_vec();
            known.sort();
            let expected: Vec<_> = net.ids().filter(|v| *v != node.id).collect();
            assert_eq!(known, expected);
        }
        assert!(net.apply_leave(NodeId(8)).is_err());
    }

    #[test]
    fn leave_of_head_makes_next_node_head() {
        let mut net = legal_clique(&ids(&[3, 5, 8, 9])).unwrap();
        net.apply_leave(NodeId(9)).unwrap();
        assert_eq!(net.nodes[&NodeId(8)].pred, None);
        assert!(verify::is_legal(&net));
        net.step(&SimOptions::default());
        assert_eq!(net.nodes[&NodeId(8)].pred, None);
    }

    #[test]
    fn leave_from_pair_leaves_singleton() {
        let mut net = two_fresh();
        net.step(&SimOptions::default());
        let dropped = net.apply_leave(NodeId(2)).unwrap();
        assert_eq!(dropped, 2);
        assert!(net.buffers.is_empty());
        assert!(verify::is_legal(&net));
        assert!(net.apply_leave(NodeId(1)).is_err());
    }

    #[test]
    fn messages_to_departed_nodes_are_dropped() {
        let mut net = two_fresh();
        // Node 1 will request 2, which is removed without purging 1's view.
        net.nodes.remove(&NodeId(2));
        let out = net.step(&SimOptions::default());
        assert_eq!(out.work.dropped, 1);
        assert!(net.buffers.is_empty());
    }

    #[test]
    fn events_are_applied_before_stopping() {
        let net = legal_clique(&ids(&[1, 2, 3, 4])).unwrap();
        let events = [ChurnEvent::leave(3, NodeId(4))];
        let res = run(net, 50, StopWhen::Legal, &events, &SimOptions::default()).unwrap();
        assert_eq!(res.stopped_at, Some(3));
        assert!(!res.net.nodes.contains_key(&NodeId(4)));
        let late = run(
            res.net,
            5,
            StopWhen::Legal,
            &[ChurnEvent::leave(0, NodeId(1))],
            &SimOptions::default(),
        );
        assert!(matches!(late, Err(Error::Event(_))));
    }

    #[test]
    fn event_json_shape() {
        let e = ChurnEvent::join(4, NodeId(6), NodeId(9));
        let json = serde_json::to_string(&e).unwrap();
        assert_eq!(json, r#"{"at_round":4,"kind":"join","new_id":6,"contact":9}"#);
        assert_eq!(serde_json::from_str::<ChurnEvent>(&json).unwrap(), e);
    }
}
