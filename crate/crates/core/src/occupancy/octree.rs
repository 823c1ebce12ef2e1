//! Sparse octree keyed by integer voxel coordinates. The root grows on
//! demand so the covered extent adapts to the inserted keys.

use super::VoxelKey;

const NONE: u32 = u32::MAX;
const MAX_DEPTH: u32 = 40;

#[derive(Debug, Clone)]
pub struct Octree<T> {
    /// Branch nodes; at the lowest branch level the children index `leaves`.
    branches: Vec<[u32; 8]>,
    leaves: Vec<(VoxelKey, T)>,
    root: u32,
    base: [i64; 3],
    depth: u32,
}

impl<T> Default for Octree<T> {
    fn default() -> Self {
        Octree {
            branches: Vec::new(),
            leaves: Vec::new(),
            root: NONE,
            base: [0; 3],
            depth: 0,
        }
    }
}

impl<T> Octree<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.leaves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }

    /// Number of branch levels above the leaves.
    pub fn depth(&self) -> u32 {
        self.depth
    }

    fn covers(&self, key: &VoxelKey) -> bool {
        if self.root == NONE {
            return false;
        }
        let span = 1i64 << self.depth;
        key.as_array()
            .iter()
            .zip(self.base.iter())
            .all(|(k, b)| *k >= *b && *k - *b < span)
    }

    fn child_slot(&self, key: &VoxelKey, level: u32) -> usize {
        let k = key.as_array();
        let mut slot = 0;
        for axis in 0..3 {
            let bit = ((k[axis] - self.base[axis]) >> level) & 1;
            slot |= (bit as usize) << axis;
        }
        slot
    }

    pub fn get(&self, key: &VoxelKey) -> Option<&T> {
        if !self.covers(key) {
            return None;
        }
        let mut node = self.root;
        for level in (0..self.depth).rev() {
            let child = self.branches[node as usize][self.child_slot(key, level)];
            if child == NONE {
                return None;
            }
            if level == 0 {
                return Some(&self.leaves[child as usize].1);
            }
            node = child;
        }
        None
    }

    fn grow_towards(&mut self, key: &VoxelKey) {
        if self.root == NONE {
            self.branches.push([NONE; 8]);
            self.root = 0;
            self.base = key.as_array();
            self.depth = 1;
            return;
        }
        while !self.covers(key) {
            assert!(self.depth < MAX_DEPTH, "voxel key out of supported range");
            let span = 1i64 << self.depth;
            let k = key.as_array();
            let mut slot = 0;
            for axis in 0..3 {
                if k[axis] < self.base[axis] {
                    self.base[axis] -= span;
                    slot |= 1 << axis;
                }
            }
            let mut children = [NONE; 8];
            children[slot] = self.root;
            self.branches.push(children);
            self.root = (self.branches.len() - 1) as u32;
            self.depth += 1;
        }
    }

    pub fn get_or_insert_with<F: FnOnce() -> T>(&mut self, key: VoxelKey, make: F) -> &mut T {
        self.grow_towards(&key);
        let mut node = self.root as usize;
        for level in (1..self.depth).rev() {
            let slot = self.child_slot(&key, level);
            let child = self.branches[node][slot];
            node = if child == NONE {
                self.branches.push([NONE; 8]);
                let id = self.branches.len() - 1;
                self.branches[node][slot] = id as u32;
                id
            } else {
                child as usize
            };
        }
        let slot = self.child_slot(&key, 0);
        let leaf = self.branches[node][slot];
        let idx = if leaf == NONE {
            self.leaves.push((key, make()));
            let id = self.leaves.len() - 1;
            self.branches[node][slot] = id as u32;
            id
        } else {
            leaf as usize
        };
        &mut self.leaves[idx].1
    }

    /// Leaves in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = (&VoxelKey, &T)> {
        self.leaves.iter().map(|(k, v)| (k, v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashMap;

    #[test]
    fn grows_in_negative_directions() {
        let mut t = Octree::new();
        *t.get_or_insert_with(VoxelKey::new(5, 5, 5), || 0) += 1;
        *t.get_or_insert_with(VoxelKey::new(-70, 3, 1000), || 0) += 2;
        *t.get_or_insert_with(VoxelKey::new(5, 5, 5), || 0) += 1;
        assert_eq!(t.get(&VoxelKey::new(5, 5, 5)), Some(&2));
        assert_eq!(t.get(&VoxelKey::new(-70, 3, 1000)), Some(&2));
        assert_eq!(t.get(&VoxelKey::new(-70, 3, 999)), None);
        assert_eq!(t.len(), 2);
    }

    proptest! {
        #[test]
        fn behaves_like_a_map(keys in proptest::collection::vec((-300i64..300, -300i64..300, -300i64..300), 1..200)) {
            let mut tree = Octree::new();
            let mut map = HashMap::new();
            for (i, &(x, y, z)) in keys.iter().enumerate() {
                let k = VoxelKey::new(x, y, z);
                *tree.get_or_insert_with(k, || 0usize) += i;
                *map.entry(k).or_insert(0usize) += i;
            }
            prop_assert_eq!(tree.len(), map.len());
            for (k, v) in &map {
                prop_assert_eq!(tree.get(k), Some(v));
            }
        }
    }
}
