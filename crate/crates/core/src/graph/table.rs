//! The depth-indexed lookup table that recording fills and the scheduler
//! consumes: depth → signature → nodes in recording order.

use std::collections::{BTreeMap, HashMap};

use super::node::{NodeId, SignatureKey};

#[derive(Debug, Clone)]
pub(crate) struct Slot {
    pub key: SignatureKey,
    pub nodes: Vec<NodeId>,
}

#[derive(Debug, Default, Clone)]
pub(crate) struct DepthRow {
    /// Slots in first-recording order.
    pub slots: Vec<Slot>,
    index: HashMap<SignatureKey, usize>,
}

impl DepthRow {
    fn insert(&mut self, key: SignatureKey, id: NodeId) {
        match self.index.get(&key) {
            Some(&slot) => self.slots[slot].nodes.push(id),
            None => {
                self.index.insert(key.clone(), self.slots.len());
                self.slots.push(Slot {
                    key,
                    nodes: vec![id],
                });
            }
        }
    }
}

#[derive(Debug, Default, Clone)]
pub(crate) struct DepthTable {
    rows: BTreeMap<usize, DepthRow>,
}

impl DepthTable {
    pub fn insert(&mut self, depth: usize, key: SignatureKey, id: NodeId) {
        self.rows.entry(depth).or_default().insert(key, id);
    }

    /// Rows in ascending depth order.
    pub fn rows(&self) -> impl Iterator<Item = (usize, &DepthRow)> {
        self.rows.iter().map(|(&d, row)| (d, row))
    }

    /// Non-empty operation slots, i.e. everything at depth ≥ 1. Depth-0 rows
    /// hold constants and parameters, which never launch kernels.
    pub fn op_slot_count(&self) -> usize {
        self.rows()
            .filter(|(d, _)| *d > 0)
            .map(|(_, row)| row.slots.len())
            .sum()
    }
}
