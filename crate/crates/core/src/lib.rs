//! Self-stabilizing clique formation for resource discovery.
//!
//! Nodes start from any weakly connected knowledge graph and converge to a
//! state where every node knows every other node and the nodes form a list
//! sorted by descending id. The crate contains the node state machine, a
//! deterministic synchronous round simulator with churn events, generators
//! for initial states, and executable checks for the structural predicates
//! and work bounds of the protocol.

mod absent;
pub mod circular;
pub mod error;
pub mod experiment;
pub mod protocol;
pub mod sim;
pub mod topology;
pub mod types;
mod unionfind;
pub mod verify;

pub use circular::CircularList;
pub use error::{Error, Result};
pub use protocol::{node_round, NodeState, ProtocolOptions};
pub use sim::{ChurnEvent, NetworkState, SimOptions, StopWhen, TraceRecord};
pub use topology::{InitialStateSpec, TopologyKind};
pub use types::{Message, MessageType, NodeId, Status};
