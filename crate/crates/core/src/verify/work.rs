//! Message and address accounting.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::sim::Trace;
use crate::types::{MessageType, NodeId};

/// Per-type message tallies of one node.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct NodeWork {
    pub sent: [u64; MessageType::COUNT],
    pub recv: [u64; MessageType::COUNT],
}

impl NodeWork {
    pub fn sent_msgs(&self) -> u64 {
        self.sent.iter().sum()
    }

    pub fn recv_msgs(&self) -> u64 {
        self.recv.iter().sum()
    }

    pub fn total_msgs(&self) -> u64 {
        self.sent_msgs() + self.recv_msgs()
    }

    /// Addresses carried by sent messages: one per sender id, one per extra.
    pub fn sent_ids(&self) -> u64 {
        MessageType::ALL
            .iter()
            .map(|t| self.sent[t.index()] * t.id_count())
            .sum()
    }

    pub fn recv_ids(&self) -> u64 {
        MessageType::ALL
            .iter()
            .map(|t| self.recv[t.index()] * t.id_count())
            .sum()
    }

    /// Sent plus received messages of the given types.
    pub fn of(&self, types: &[MessageType]) -> u64 {
        types.iter().map(|t| self.sent[t.index()] + self.recv[t.index()]).sum()
    }

    pub fn add(&mut self, other: &NodeWork) {
        for i in 0..MessageType::COUNT {
            self.sent[i] += other.sent[i];
            self.recv[i] += other.recv[i];
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct WorkCounters {
    pub per_node: BTreeMap<NodeId, NodeWork>,
    /// Messages addressed to nodes that had left.
    pub dropped: u64,
}

impl WorkCounters {
    pub fn total_sent(&self) -> u64 {
        self.per_node.values().map(NodeWork::sent_msgs).sum()
    }

    pub fn total_recv(&self) -> u64 {
        self.per_node.values().map(NodeWork::recv_msgs).sum()
    }

    /// Largest per-node value of `f`.
    pub fn max_by(&self, f: impl Fn(&NodeWork) -> u64) -> u64 {
        self.per_node.values().map(f).max().unwrap_or(0)
    }

    pub fn absorb(&mut self, other: &WorkCounters) {
        for (id, w) in &other.per_node {
            self.per_node.entry(*id).or_default().add(w);
        }
        self.dropped += other.dropped;
    }
}

/// Rounds skipped after first legality before maintenance is measured.
pub const MAINTENANCE_GRACE: u64 = 2;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct WorkReport {
    /// Round in which the network was first legal.
    pub first_legal: Option<u64>,
    /// Totals over the rounds up to and including `first_legal` (the whole
    /// trace when it never became legal).
    pub stabilization: WorkCounters,
    /// Totals over the whole trace.
    pub overall: WorkCounters,
    /// Number of rounds in the maintenance window.
    pub maintenance_rounds: usize,
    /// Largest messages sent by one node in one maintenance round.
    pub maintenance_max_sent: u64,
    pub maintenance_max_recv: u64,
}

/// Splits a trace into the stabilization window (until first legality) and
/// the maintenance window (from `MAINTENANCE_GRACE + 1` rounds after it).
pub fn work_report(trace: &Trace) -> WorkReport {
    let first_legal = trace.first_legal();
    let mut report = WorkReport {
        first_legal,
        ..Default::default()
    };
    for (record, work) in trace.records.iter().zip(&trace.work) {
        report.overall.absorb(work);
        if first_legal.is_none_or(|l| record.round <= l) {
            report.stabilization.absorb(work);
        }
        if first_legal.is_some_and(|l| record.round > l + MAINTENANCE_GRACE) {
            report.maintenance_rounds += 1;
            report.maintenance_max_sent = report.maintenance_max_sent.max(work.max_by(NodeWork::sent_msgs));
            report.maintenance_max_recv = report.maintenance_max_recv.max(work.max_by(NodeWork::recv_msgs));
        }
    }
    report
}
