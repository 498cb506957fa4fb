use serde::{Deserialize, Serialize};

use crate::types::NodeId;

/// Duplicate-free circular list of ids with a head cursor.
///
/// Traversal starts at the cursor. The "tail" is the slot just before the
/// cursor, so an id inserted there is visited last in the current cycle.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawList", into = "RawList")]
pub struct CircularList {
    items: Vec<NodeId>,
    head: usize,
}

#[derive(Serialize, Deserialize)]
struct RawList {
    items: Vec<NodeId>,
    head_index: usize,
}

impl TryFrom<RawList> for CircularList {
    type Error = String;

    fn try_from(raw: RawList) -> Result<Self, Self::Error> {
        CircularList::from_parts(raw.items, raw.head_index)
    }
}

impl From<CircularList> for RawList {
    fn from(list: CircularList) -> Self {
        RawList {
            items: list.items,
            head_index: list.head,
        }
    }
}

impl CircularList {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a list from raw storage order and cursor position.
    pub fn from_parts(items: Vec<NodeId>, head_index: usize) -> Result<Self, String> {
        let mut seen = std::collections::HashSet::with_capacity(items.len());
        if let Some(dup) = items.iter().find(|id| !seen.insert(**id)) {
            return Err(format!("duplicate id {dup} in circular list"));
        }
        if items.is_empty() && head_index != 0 || !items.is_empty() && head_index >= items.len() {
            return Err(format!(
                "head_index {head_index} out of range for list of length {}",
                items.len()
            ));
        }
        Ok(CircularList {
            items,
            head: head_index,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.items.contains(&id)
    }

    /// The id under the cursor.
    pub fn head(&self) -> Option<NodeId> {
        self.items.get(self.head).copied()
    }

    pub fn head_index(&self) -> usize {
        self.head
    }

    /// Raw storage order (not traversal order).
    pub fn items(&self) -> &[NodeId] {
        &self.items
    }

    pub fn max(&self) -> Option<NodeId> {
        self.items.iter().copied().max()
    }

    /// Moves the cursor to the next element.
    pub fn advance(&mut self) {
        if !self.items.is_empty() {
            self.head = (self.head + 1) % self.items.len();
        }
    }

    /// Inserts `id` under the cursor unless already present.
    pub fn insert_head(&mut self, id: NodeId) -> bool {
        if self.contains(id) {
            return false;
        }
        self.items.insert(self.head, id);
        true
    }

    /// Inserts `id` just before the cursor unless already present.
    pub fn insert_tail(&mut self, id: NodeId) -> bool {
        if self.contains(id) {
            return false;
        }
        if self.head == 0 {
            self.items.push(id);
        } else {
            self.items.insert(self.head, id);
            self.head += 1;
        }
        true
    }

    /// Removes `id`; a cursor on the removed element moves to its successor.
    pub fn remove(&mut self, id: NodeId) -> bool {
        let Some(pos) = self.items.iter().position(|x| *x == id) else {
            return false;
        };
        self.items.remove(pos);
        if pos < self.head {
            self.head -= 1;
        }
        if self.head >= self.items.len() {
            self.head = 0;
        }
        true
    }

    /// Iterates in traversal order, starting at the cursor.
    pub fn iter(&self) -> impl Iterator<Item = NodeId> + '_ {
        let (before, after) = self.items.split_at(self.head);
        after.iter().chain(before.iter()).copied()
    }

    pub fn to_vec(&self) -> Vec<NodeId> {
        self.iter().collect()
    }
}

impl FromIterator<NodeId> for CircularList {
    fn from_iter<I: IntoIterator<Item = NodeId>>(iter: I) -> Self {
        let mut list = CircularList::new();
        for id in iter {
            list.insert_tail(id);
        }
        list
    }
}
