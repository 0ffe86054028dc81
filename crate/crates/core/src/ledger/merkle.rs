//! Binary SHA-256 Merkle tree over asset-holding leaves.
//!
//! Leaves are `SHA-256(address ‖ asset_id ‖ amount)` (big-endian integers),
//! ordered by `(address, asset_id)`. Interior nodes hash `left ‖ right`; a
//! level with an odd node count pairs its last node with itself. The root of
//! an empty tree is 32 zero bytes.

use serde::{Deserialize, Serialize};

use super::types::{hex_array, sha256, Address, AssetId, Digest32};

pub const EMPTY_ROOT: Digest32 = [0u8; 32];

pub fn leaf_hash(address: &Address, asset_id: AssetId, amount: u64) -> Digest32 {
    let mut buf = [0u8; 48];
    buf[..32].copy_from_slice(address.as_bytes());
    buf[32..40].copy_from_slice(&asset_id.0.to_be_bytes());
    buf[40..].copy_from_slice(&amount.to_be_bytes());
    sha256(&buf)
}

fn node_hash(left: &Digest32, right: &Digest32) -> Digest32 {
    let mut buf = [0u8; 64];
    buf[..32].copy_from_slice(left);
    buf[32..].copy_from_slice(right);
    sha256(&buf)
}

/// Which side the sibling sits on relative to the running hash.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathStep {
    #[serde(with = "hex_array")]
    pub sibling: Digest32,
    pub side: Side,
}

/// Full tree kept level by level so audit paths are cheap to extract.
#[derive(Clone, Debug)]
pub struct MerkleTree {
    levels: Vec<Vec<Digest32>>,
}

impl MerkleTree {
    pub fn from_leaves(leaves: Vec<Digest32>) -> Self {
        let mut levels = vec![leaves];
        while levels.last().map_or(false, |l| l.len() > 1) {
            let prev = levels.last().unwrap();
            let next = prev
                .chunks(2)
                .map(|pair| match pair {
                    [l, r] => node_hash(l, r),
                    [only] => node_hash(only, only),
                    _ => unreachable!(),
                })
                .collect();
            levels.push(next);
        }
        MerkleTree { levels }
    }

    pub fn root(&self) -> Digest32 {
        match self.levels.last() {
            Some(top) if !top.is_empty() => top[0],
            _ => EMPTY_ROOT,
        }
    }

    pub fn leaf_count(&self) -> usize {
        self.levels[0].len()
    }

    pub fn audit_path(&self, mut index: usize) -> Option<Vec<PathStep>> {
        if index >= self.leaf_count() {
            return None;
        }
        let mut path = Vec::with_capacity(self.levels.len());
        for level in &self.levels[..self.levels.len() - 1] {
            let step = if index % 2 == 0 {
                // duplicated last node pairs with itself
                let sib = level.get(index + 1).unwrap_or(&level[index]);
                PathStep {
                    sibling: *sib,
                    side: Side::Right,
                }
            } else {
                PathStep {
                    sibling: level[index - 1],
                    side: Side::Left,
                }
            };
            path.push(step);
            index /= 2;
        }
        Some(path)
    }
}

/// Root from a leaf and its audit path, or `None` for a non-canonical path.
///
/// A step whose sibling equals the running hash must be on the right: that is
/// the only position the odd-node duplication rule can produce.
pub fn root_from_path(leaf: Digest32, path: &[PathStep]) -> Option<Digest32> {
    let mut acc = leaf;
    for step in path {
        acc = match step.side {
            Side::Right => node_hash(&acc, &step.sibling),
            Side::Left if step.sibling == acc => return None,
            Side::Left => node_hash(&step.sibling, &acc),
        };
    }
    Some(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaves(n: usize) -> Vec<Digest32> {
        (0..n)
            .map(|i| leaf_hash(&Address([i as u8; 32]), AssetId(1), i as u64))
            .collect()
    }

    #[test]
    fn single_leaf_root_is_leaf() {
        let l = leaves(1);
        let t = MerkleTree::from_leaves(l.clone());
        assert_eq!(t.root(), l[0]);
        assert!(t.audit_path(0).unwrap().is_empty());
    }

    #[test]
    fn empty_tree_has_zero_root() {
        assert_eq!(MerkleTree::from_leaves(vec![]).root(), EMPTY_ROOT);
    }

    #[test]
    fn three_leaves_duplicates_last() {
        let l = leaves(3);
        let t = MerkleTree::from_leaves(l.clone());
        let left = node_hash(&l[0], &l[1]);
        let right = node_hash(&l[2], &l[2]);
        assert_eq!(t.root(), node_hash(&left, &right));
    }

    #[test]
    fn every_path_recomputes_root() {
        for n in 1..=33 {
            let l = leaves(n);
            let t = MerkleTree::from_leaves(l.clone());
            let depth = (n as f64).log2().ceil() as usize;
            for (i, leaf) in l.iter().enumerate() {
                let p = t.audit_path(i).unwrap();
                assert_eq!(p.len(), depth, "n={n}");
                assert_eq!(root_from_path(*leaf, &p), Some(t.root()));
            }
        }
    }

    #[test]
    fn left_duplicate_is_rejected() {
        let l = leaves(3);
        let t = MerkleTree::from_leaves(l.clone());
        let mut p = t.audit_path(2).unwrap();
        assert_eq!(p[0].sibling, l[2]);
        p[0].side = Side::Left;
        assert_eq!(root_from_path(l[2], &p), None);
    }
}
