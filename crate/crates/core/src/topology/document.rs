//! JSON state documents: the fixture format and the CLI dump format.
//!
//! Missing p/s are written as `"absent"`, circular lists as
//! `{"items": [...], "head_index": k}`, S as a sorted array, and buffered
//! messages as one flat list grouped by recipient.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::NodeState;
use crate::sim::NetworkState;
use crate::types::Message;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateDocument {
    round: u64,
    nodes: Vec<NodeState>,
    #[serde(default)]
    buffers: Vec<Message>,
}

pub fn save(net: &NetworkState) -> String {
    let doc = StateDocument {
        round: net.round,
        nodes: net.nodes.values().cloned().collect(),
        buffers: net.buffers.values().flatten().copied().collect(),
    };
    let mut out = serde_json::to_string_pretty(&doc).expect("state documents always serialize");
    out.push('\n');
    out
}

pub fn load(text: &str) -> Result<NetworkState> {
    let doc: StateDocument = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        msg: e.to_string(),
    })?;
    let mut net = NetworkState::from_nodes(doc.nodes)?;
    net.round = doc.round;
    for m in doc.buffers {
        net.buffers.entry(m.recipient).or_default().push(m);
    }
    net.check()?;
    Ok(net)
}
