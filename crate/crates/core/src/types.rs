//! Identifiers, node status and the protocol's wire messages.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Unique, immutable, totally ordered node identifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u64);

impl NodeId {
    pub fn get(self) -> u64 {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u64> for NodeId {
    fn from(v: u64) -> Self {
        NodeId(v)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Active,
    #[default]
    Inactive,
}

/// The closed set of message types. Declaration order is the canonical
/// inbox processing order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MessageType {
    PredRequest,
    PredAccept,
    NewPredecessor,
    Deactivate,
    Activate,
    ForwardFromSuccessor,
    ForwardFromPredecessor,
    ForwardHead,
    Scan,
    Scanack,
    DeleteSuccessor,
}

impl MessageType {
    pub const COUNT: usize = 11;

    pub const ALL: [MessageType; MessageType::COUNT] = [
        MessageType::PredRequest,
        MessageType::PredAccept,
        MessageType::NewPredecessor,
        MessageType::Deactivate,
        MessageType::Activate,
        MessageType::ForwardFromSuccessor,
        MessageType::ForwardFromPredecessor,
        MessageType::ForwardHead,
        MessageType::Scan,
        MessageType::Scanack,
        MessageType::DeleteSuccessor,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Whether messages of this type carry a second id besides the sender.
    pub fn carries_extra(self) -> bool {
        matches!(
            self,
            MessageType::NewPredecessor
                | MessageType::ForwardFromSuccessor
                | MessageType::ForwardFromPredecessor
                | MessageType::ForwardHead
                | MessageType::Scanack
        )
    }

    /// Number of addresses a message of this type transmits.
    pub fn id_count(self) -> u64 {
        if self.carries_extra() {
            2
        } else {
            1
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MessageType::PredRequest => "pred-request",
            MessageType::PredAccept => "pred-accept",
            MessageType::NewPredecessor => "new-predecessor",
            MessageType::Deactivate => "deactivate",
            MessageType::Activate => "activate",
            MessageType::ForwardFromSuccessor => "forward-from-successor",
            MessageType::ForwardFromPredecessor => "forward-from-predecessor",
            MessageType::ForwardHead => "forward-head",
            MessageType::Scan => "scan",
            MessageType::Scanack => "scanack",
            MessageType::DeleteSuccessor => "delete-successor",
        }
    }
}

impl fmt::Display for MessageType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MessageType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MessageType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown message type `{s}`"))
    }
}

/// A protocol message. `recipient` is routing information only; handlers
/// never read it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Message {
    pub sender: NodeId,
    #[serde(with = "crate::absent")]
    pub extra: Option<NodeId>,
    #[serde(rename = "type")]
    pub mtype: MessageType,
    pub recipient: NodeId,
}

impl Message {
    pub fn new(mtype: MessageType, sender: NodeId, recipient: NodeId) -> Self {
        debug_assert!(!mtype.carries_extra(), "{mtype} needs an extra id");
        Message {
            sender,
            extra: None,
            mtype,
            recipient,
        }
    }

    pub fn with_extra(mtype: MessageType, sender: NodeId, extra: NodeId, recipient: NodeId) -> Self {
        debug_assert!(mtype.carries_extra(), "{mtype} carries no extra id");
        Message {
            sender,
            extra: Some(extra),
            mtype,
            recipient,
        }
    }

    /// Canonical inbox ordering key: (type index, sender, extra).
    pub fn order_key(&self) -> (usize, NodeId, Option<NodeId>) {
        (self.mtype.index(), self.sender, self.extra)
    }

    pub fn is_well_formed(&self) -> bool {
        self.extra.is_some() == self.mtype.carries_extra()
    }
}
