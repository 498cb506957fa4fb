//! The per-node state machine.
//!
//! Every node runs four periodic actions each round and then handles every
//! message in its inbox. All functions here are pure with respect to the
//! node: they read and write only the node's own variables and return the
//! messages it emits.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::circular::CircularList;
use crate::types::{Message, MessageType, NodeId, Status};

pub type Outbox = Vec<Message>;

/// Which id the `forward-head` and `scanack` handlers record.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PayloadReading {
    /// Record the carried id.
    #[default]
    Extra,
    /// Record the sender id (the literal handler text).
    Sender,
}

/// Order of periodic and receive actions inside one round.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActionOrder {
    #[default]
    PeriodicFirst,
    ReceiveFirst,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct ProtocolOptions {
    pub payload: PayloadReading,
    pub order: ActionOrder,
    /// Record the sender of a `pred-request` in N when it is unknown.
    /// Without this a node that is never a head and that nobody knows stays
    /// unknown forever.
    pub learn_requesters: bool,
    /// Keep the own id when a predecessor forwards it, so it is relayed on
    /// to the successor. Ids only travel down the list through L; dropping
    /// the own id there stops every id `v` at `v` and nodes below `v` never
    /// learn it.
    pub relay_own_id: bool,
    /// Send `activate` only when the status actually flips to active. The
    /// unconditional relay fires on every re-asserted `pred-accept`, so a
    /// node at depth `d` of a stable list gets `d` activations per round.
    pub activate_on_change: bool,
}

impl Default for ProtocolOptions {
    fn default() -> Self {
        ProtocolOptions {
            payload: PayloadReading::Extra,
            order: ActionOrder::PeriodicFirst,
            learn_requesters: true,
            relay_own_id: true,
            activate_on_change: true,
        }
    }
}

/// All local variables of one node.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeState {
    pub id: NodeId,
    /// Predecessor `p`.
    #[serde(rename = "p", with = "crate::absent")]
    pub pred: Option<NodeId>,
    /// Successor `s`.
    #[serde(rename = "s", with = "crate::absent")]
    pub succ: Option<NodeId>,
    /// Neighborhood `N`, forwarded round-robin to the predecessor.
    #[serde(rename = "N")]
    pub neighbors: CircularList,
    /// `L`: ids from the predecessor (or scanned, for a head), forwarded
    /// round-robin to the successor.
    #[serde(rename = "L")]
    pub relay: CircularList,
    /// `S`: ids learned through scan traffic.
    #[serde(rename = "S")]
    pub scanned: BTreeSet<NodeId>,
    pub status: Status,
}

impl NodeState {
    /// A node that knows `neighbors` and nothing else.
    pub fn fresh(id: NodeId, neighbors: impl IntoIterator<Item = NodeId>) -> Self {
        let mut state = NodeState {
            id,
            pred: None,
            succ: None,
            neighbors: CircularList::new(),
            relay: CircularList::new(),
            scanned: BTreeSet::new(),
            status: Status::Inactive,
        };
        for v in neighbors {
            state.learn_tail(v);
        }
        state
    }

    /// Every id this node stores anywhere, with duplicates.
    pub fn known_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.neighbors
            .items()
            .iter()
            .chain(self.relay.items())
            .chain(self.scanned.iter())
            .copied()
            .chain(self.pred)
            .chain(self.succ)
    }

    /// Checks the local invariants: no self ids, and p/s differ from id.
    pub fn check_invariants(&self) -> Result<(), String> {
        let id = self.id;
        if self.pred == Some(id) || self.succ == Some(id) {
            return Err(format!("node {id} is its own predecessor or successor"));
        }
        // L may hold the own id (see `ProtocolOptions::relay_own_id`).
        if self.neighbors.contains(id) || self.scanned.contains(&id) {
            return Err(format!("node {id} stores its own id"));
        }
        Ok(())
    }

    fn send(&self, out: &mut Outbox, mtype: MessageType, to: NodeId) {
        out.push(Message::new(mtype, self.id, to));
    }

    fn send_id(&self, out: &mut Outbox, mtype: MessageType, extra: NodeId, to: NodeId) {
        out.push(Message::with_extra(mtype, self.id, extra, to));
    }

    fn learn_tail(&mut self, v: NodeId) {
        if v != self.id {
            self.neighbors.insert_tail(v);
        }
    }

    fn learn_head(&mut self, v: NodeId) {
        if v != self.id {
            self.neighbors.insert_head(v);
        }
    }

    fn learn_scanned(&mut self, v: NodeId) {
        if v != self.id {
            self.scanned.insert(v);
        }
    }

    /// `forwardtopred`: hand the next neighbor to the predecessor.
    pub fn forward_to_pred(&mut self, out: &mut Outbox) {
        if self.status == Status::Inactive {
            return;
        }
        if let (Some(p), Some(v)) = (self.pred, self.neighbors.head()) {
            self.send_id(out, MessageType::ForwardFromSuccessor, v, p);
            self.neighbors.advance();
        }
    }

    /// `checkifhead`: repair an invalid predecessor, request the current
    /// one, or scan a neighbor when this node is a head.
    pub fn check_if_head(&mut self, out: &mut Outbox) {
        let id = self.id;
        match self.pred {
            Some(p) if p > id => self.send(out, MessageType::PredRequest, p),
            _ => {
                self.pred = self.neighbors.iter().filter(|v| *v > id).min();
                if let Some(p) = self.pred {
                    self.send(out, MessageType::PredRequest, p);
                    self.status = Status::Inactive;
                } else if let Some(v) = self.neighbors.head() {
                    self.send(out, MessageType::Scan, v);
                    self.relay.insert_tail(v);
                    self.neighbors.advance();
                }
            }
        }
    }

    /// `forwardtosuc`: hand the next relay id to the successor, or drop an
    /// invalid successor.
    pub fn forward_to_suc(&mut self, out: &mut Outbox) {
        let Some(s) = self.succ else { return };
        if s < self.id {
            if let Some(v) = self.relay.head() {
                self.send_id(out, MessageType::ForwardFromPredecessor, v, s);
                self.relay.advance();
            }
        } else {
            self.succ = None;
        }
    }

    /// `forwardmax`: merge S into N, push a new maximum up to the
    /// predecessor and answer every other scanner with the largest known id.
    pub fn forward_max(&mut self, out: &mut Outbox) {
        let Some(&max_s) = self.scanned.last() else {
            return;
        };
        let mut max_n = self.neighbors.max();
        for v in self.scanned.clone() {
            self.learn_tail(v);
        }
        if let Some(p) = self.pred {
            if max_n.is_none_or(|m| max_s > m) {
                self.send_id(out, MessageType::ForwardHead, max_s, p);
                self.scanned.remove(&max_s);
                max_n = Some(max_s);
            }
        }
        // With nothing known before this round there is no maximum to report;
        // the scanners are answered next round.
        if let Some(m) = max_n {
            for u in std::mem::take(&mut self.scanned) {
                self.send_id(out, MessageType::Scanack, m, u);
            }
        }
    }

    /// Runs the four periodic actions in listing order.
    pub fn periodic(&mut self, out: &mut Outbox) {
        self.forward_to_pred(out);
        self.check_if_head(out);
        self.forward_to_suc(out);
        self.forward_max(out);
    }

    /// Handles one received message.
    pub fn process_message(&mut self, m: &Message, opts: &ProtocolOptions, out: &mut Outbox) {
        debug_assert_eq!(m.recipient, self.id);
        let id = self.id;
        let payload = |m: &Message| match opts.payload {
            PayloadReading::Extra => m.extra,
            PayloadReading::Sender => Some(m.sender),
        };
        match m.mtype {
            MessageType::ForwardHead => {
                if Some(m.sender) == self.succ {
                    if let Some(v) = payload(m) {
                        if !self.neighbors.contains(v) {
                            self.learn_scanned(v);
                        }
                        self.learn_tail(v);
                    }
                }
            }
            MessageType::Scan => self.learn_scanned(m.sender),
            MessageType::Scanack => {
                if let Some(v) = payload(m) {
                    if !self.neighbors.contains(v) {
                        self.learn_scanned(v);
                    }
                }
            }
            MessageType::DeleteSuccessor => {
                if Some(m.sender) == self.succ {
                    self.succ = None;
                }
            }
            MessageType::PredRequest => {
                if opts.learn_requesters {
                    self.learn_tail(m.sender);
                }
                if m.sender < id {
                    match self.succ {
                        Some(s) => {
                            let grandson = s.min(m.sender);
                            let succ = s.max(m.sender);
                            self.succ = Some(succ);
                            self.send(out, MessageType::PredAccept, succ);
                            self.send_id(out, MessageType::NewPredecessor, succ, grandson);
                        }
                        None => {
                            self.succ = Some(m.sender);
                            self.send(out, MessageType::PredAccept, m.sender);
                        }
                    }
                }
            }
            MessageType::NewPredecessor => {
                let Some(candidate) = m.extra else { return };
                if let Some(p) = self.pred {
                    if m.sender == p && candidate > id && candidate < p {
                        self.pred = Some(candidate);
                        self.send(out, MessageType::PredRequest, candidate);
                        self.status = Status::Inactive;
                        if let Some(s) = self.succ {
                            self.send(out, MessageType::Deactivate, s);
                        }
                    }
                }
            }
            MessageType::PredAccept | MessageType::Activate | MessageType::Deactivate => {
                if Some(m.sender) == self.pred {
                    let (status, relay) = if m.mtype == MessageType::Deactivate {
                        (Status::Inactive, MessageType::Deactivate)
                    } else {
                        (Status::Active, MessageType::Activate)
                    };
                    let changed = self.status != status;
                    self.status = status;
                    let quiet = relay == MessageType::Activate && opts.activate_on_change && !changed;
                    if let (Some(s), false) = (self.succ, quiet) {
                        self.send(out, relay, s);
                    }
                } else {
                    self.send(out, MessageType::DeleteSuccessor, m.sender);
                }
            }
            MessageType::ForwardFromSuccessor => {
                if Some(m.sender) == self.succ {
                    if let Some(v) = m.extra {
                        self.learn_head(v);
                    }
                }
            }
            MessageType::ForwardFromPredecessor => {
                if Some(m.sender) == self.pred {
                    if let Some(v) = m.extra {
                        if v != id {
                            self.neighbors.insert_tail(v);
                        }
                        if v != id || opts.relay_own_id {
                            self.relay.insert_head(v);
                        }
                    }
                } else {
                    self.send(out, MessageType::DeleteSuccessor, m.sender);
                }
            }
        }
    }

    /// One full round with the inbox processed in the given order.
    pub fn round_in_order<'a>(
        &mut self,
        inbox: impl IntoIterator<Item = &'a Message>,
        opts: &ProtocolOptions,
    ) -> Outbox {
        let mut out = Outbox::new();
        if opts.order == ActionOrder::PeriodicFirst {
            self.periodic(&mut out);
        }
        for m in inbox {
            self.process_message(m, opts, &mut out);
        }
        if opts.order == ActionOrder::ReceiveFirst {
            self.periodic(&mut out);
        }
        out
    }
}

/// Sorts an inbox into canonical processing order.
pub fn canonical_order(inbox: &mut [Message]) {
    inbox.sort_by_key(Message::order_key);
}

/// One round of a node with its inbox handled in canonical order.
pub fn node_round(state: &NodeState, inbox: &[Message], opts: &ProtocolOptions) -> (NodeState, Outbox) {
    let mut sorted = inbox.to_vec();
    canonical_order(&mut sorted);
    let mut next = state.clone();
    let out = next.round_in_order(&sorted, opts);
    (next, out)
}

macro_rules! pure_action {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        pub fn $name(state: &NodeState) -> (NodeState, Outbox) {
            let mut next = state.clone();
            let mut out = Outbox::new();
            next.$name(&mut out);
            (next, out)
        }
    };
}

pure_action!(forward_to_pred);
pure_action!(check_if_head);
pure_action!(forward_to_suc);
pure_action!(forward_max);

pub fn process_message(state: &NodeState, m: &Message, opts: &ProtocolOptions) -> (NodeState, Outbox) {
    let mut next = state.clone();
    let mut out = Outbox::new();
    next.process_message(m, opts, &mut out);
    (next, out)
}
