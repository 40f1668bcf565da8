//! Byte accounting for simulated inter-party traffic.
//!
//! Every simulated transfer is recorded as a [`Message`] whose size is
//! derived from its content under a fixed wire model where every scalar
//! on the wire (ID, hash value or real) takes 4 bytes. Totals are then
//! compared against the closed-form costs in [`closed_form`].

use serde::{Deserialize, Serialize};

/// Size of one serialized real number, instance ID or hash value.
pub const WORD_BYTES: u64 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    /// The reduced `(instance ID, hash value)` table delivered to one party.
    HashTables,
    /// Aggregated `(G, H)` pairs sent to the party building the current tree.
    ForeignGradients,
    /// The tree builder's own gradient pairs entering the weighted sum.
    LocalGradients,
    /// A finished tree shipped to another party.
    TreeBroadcast,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    /// Tree round, or `None` for preprocessing traffic.
    pub round: Option<usize>,
    /// Sender party, or `None` for the output of a collective.
    pub from: Option<usize>,
    pub to: usize,
    pub kind: MessageKind,
    pub bytes: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommLedger {
    pub preprocessing_bytes: u64,
    pub gradient_bytes_per_tree: Vec<u64>,
    pub tree_broadcast_bytes_per_tree: Vec<u64>,
    pub messages: Vec<Message>,
}

impl CommLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, message: Message) {
        match (message.kind, message.round) {
            (MessageKind::HashTables, _) | (_, None) => self.preprocessing_bytes += message.bytes,
            (MessageKind::ForeignGradients | MessageKind::LocalGradients, Some(t)) => {
                grow(&mut self.gradient_bytes_per_tree, t);
                grow(&mut self.tree_broadcast_bytes_per_tree, t);
                self.gradient_bytes_per_tree[t] += message.bytes;
            }
            (MessageKind::TreeBroadcast, Some(t)) => {
                grow(&mut self.gradient_bytes_per_tree, t);
                grow(&mut self.tree_broadcast_bytes_per_tree, t);
                self.tree_broadcast_bytes_per_tree[t] += message.bytes;
            }
        }
        self.messages.push(message);
    }

    /// Opens round `t` so that rounds without traffic still show up as zero.
    pub fn open_round(&mut self, t: usize) {
        grow(&mut self.gradient_bytes_per_tree, t);
        grow(&mut self.tree_broadcast_bytes_per_tree, t);
    }

    pub fn per_tree_bytes(&self) -> Vec<u64> {
        self.gradient_bytes_per_tree
            .iter()
            .zip(&self.tree_broadcast_bytes_per_tree)
            .map(|(g, b)| g + b)
            .collect()
    }

    pub fn training_bytes(&self) -> u64 {
        self.per_tree_bytes().iter().sum()
    }

    /// Copies the preprocessing traffic of another ledger into this one.
    pub fn absorb_preprocessing(&mut self, other: &CommLedger) {
        for m in other.messages.iter().filter(|m| m.round.is_none()) {
            self.record(m.clone());
        }
    }
}

fn grow(v: &mut Vec<u64>, t: usize) {
    if v.len() <= t {
        v.resize(t + 1, 0);
    }
}

/// Closed-form traffic of the similarity-based protocol.
pub mod closed_form {
    /// AllReduce of `N * L` (ID, hash) pairs, delivered to every one of `M` parties.
    pub fn preprocessing_bytes(parties: u64, instances: u64, functions: u64) -> u64 {
        8 * parties * instances * functions
    }

    /// One tree: `8N` gradient bytes plus `8(2^D - 1)` bytes to each of `M - 1` parties.
    pub fn per_tree_bytes(instances: u64, depth: u32, parties: u64) -> u64 {
        8 * instances + tree_broadcast_bytes(depth, parties)
    }

    pub fn tree_broadcast_bytes(depth: u32, parties: u64) -> u64 {
        8 * ((1u64 << depth) - 1) * parties.saturating_sub(1)
    }

    pub fn training_bytes(trees: u64, instances: u64, depth: u32, parties: u64) -> u64 {
        trees * per_tree_bytes(instances, depth, parties)
    }
}
