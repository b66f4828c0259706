//! Hash-derived item addresses and heap-style navigation on the implicit
//! complete binary tree.
//!
//! Every item owns an unbounded bit string. Bit `i` picks the child taken at
//! depth `i` (0 = left, 1 = right), so the string fixes one root-to-leaf path
//! per item. Bits are read MSB-first out of a stream of digests, where block
//! `k` is `H(seed_le || item_le || k_le)` and `H` is the configured SHA-2
//! variant (SHA-512 unless told otherwise).

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256, Sha512};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ItemId(pub u64);

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl From<u64> for ItemId {
    fn from(id: u64) -> Self {
        ItemId(id)
    }
}

/// Heap numbering: root is 1, children of `j` are `2j` and `2j + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeIndex(pub u64);

impl NodeIndex {
    pub const ROOT: NodeIndex = NodeIndex(1);

    #[inline]
    pub fn depth(self) -> u32 {
        debug_assert!(self.0 >= 1);
        63 - self.0.leading_zeros()
    }

    #[inline]
    pub fn child(self, bit: u8) -> NodeIndex {
        route_child(self, bit)
    }

    #[inline]
    pub fn parent(self) -> Option<NodeIndex> {
        (self.0 > 1).then_some(NodeIndex(self.0 >> 1))
    }

    /// True when `self` lies on the root path of `other` (a node is its own
    /// ancestor).
    pub fn is_ancestor_of(self, other: NodeIndex) -> bool {
        let (d, e) = (self.depth(), other.depth());
        d <= e && other.0 >> (e - d) == self.0
    }

    /// Fixed-width binary label, e.g. the root at width 3 is `001`.
    pub fn binary_label(self, width: usize) -> String {
        format!("{:0width$b}", self.0, width = width)
    }
}

impl fmt::Display for NodeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[inline]
pub fn route_child(node: NodeIndex, bit: u8) -> NodeIndex {
    debug_assert!(bit <= 1);
    NodeIndex(2 * node.0 + u64::from(bit & 1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum DigestAlgorithm {
    #[default]
    Sha512,
    Sha256,
}

impl DigestAlgorithm {
    pub fn block_bits(self) -> u64 {
        match self {
            DigestAlgorithm::Sha512 => 512,
            DigestAlgorithm::Sha256 => 256,
        }
    }
}

/// Seed plus digest choice; everything needed to derive any item's address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AddressScheme {
    pub seed: u64,
    pub algorithm: DigestAlgorithm,
}

impl AddressScheme {
    pub fn new(seed: u64) -> Self {
        AddressScheme { seed, algorithm: DigestAlgorithm::default() }
    }

    pub fn with_algorithm(seed: u64, algorithm: DigestAlgorithm) -> Self {
        AddressScheme { seed, algorithm }
    }

    /// Digest block `block` of the item's bit stream. Only the first
    /// `algorithm.block_bits() / 8` bytes are meaningful.
    pub fn block(&self, item: ItemId, block: u64) -> [u8; 64] {
        let mut out = [0u8; 64];
        match self.algorithm {
            DigestAlgorithm::Sha512 => {
                let d = Sha512::new()
                    .chain_update(self.seed.to_le_bytes())
                    .chain_update(item.0.to_le_bytes())
                    .chain_update(block.to_le_bytes())
                    .finalize();
                out.copy_from_slice(&d);
            }
            DigestAlgorithm::Sha256 => {
                let d = Sha256::new()
                    .chain_update(self.seed.to_le_bytes())
                    .chain_update(item.0.to_le_bytes())
                    .chain_update(block.to_le_bytes())
                    .finalize();
                out[..32].copy_from_slice(&d);
            }
        }
        out
    }

    pub fn bit(&self, item: ItemId, i: u64) -> u8 {
        let per_block = self.algorithm.block_bits();
        let block = self.block(item, i / per_block);
        extract_bit(&block, i % per_block)
    }

    pub fn address(&self, item: ItemId) -> ItemAddress {
        ItemAddress { item, scheme: *self, head: self.block(item, 0) }
    }

    pub fn path_node(&self, item: ItemId, level: u32) -> NodeIndex {
        self.address(item).path_node(level)
    }
}

#[inline]
fn extract_bit(block: &[u8; 64], offset: u64) -> u8 {
    let byte = block[(offset / 8) as usize];
    (byte >> (7 - (offset % 8))) & 1
}

/// An item's address with its first digest block cached; deeper bits are
/// recomputed on demand.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ItemAddress {
    item: ItemId,
    scheme: AddressScheme,
    head: [u8; 64],
}

impl ItemAddress {
    pub fn item(&self) -> ItemId {
        self.item
    }

    pub fn seed(&self) -> u64 {
        self.scheme.seed
    }

    #[inline]
    pub fn bit(&self, i: u64) -> u8 {
        if i < self.scheme.algorithm.block_bits() {
            extract_bit(&self.head, i)
        } else {
            self.scheme.bit(self.item, i)
        }
    }

    /// Node at depth `level` on this item's path: a leading 1 followed by
    /// bits `0..level`.
    pub fn path_node(&self, level: u32) -> NodeIndex {
        (0..u64::from(level)).fold(NodeIndex::ROOT, |node, i| route_child(node, self.bit(i)))
    }

    pub fn bits(&self) -> impl Iterator<Item = u8> + '_ {
        (0..).map(move |i| self.bit(i))
    }
}

/// Bit `i` of `item`'s address under the default digest.
pub fn hash_bit(item: ItemId, seed: u64, i: u64) -> u8 {
    AddressScheme::new(seed).bit(item, i)
}

pub fn path_node(item: ItemId, seed: u64, level: u32) -> NodeIndex {
    AddressScheme::new(seed).path_node(item, level)
}
