//! Remapping of merged-away node ids onto their surviving representatives.

/// Disjoint-set forest over dense `u32` ids.
///
/// Unlike a textbook union-find there is no union by rank: a merge always
/// points the absorbed id at the survivor, because the survivor is the node
/// that keeps living in the lattice.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UnionFind {
    parent: Vec<u32>,
}

impl UnionFind {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    /// Registers ids up to and including `id` as singleton sets.
    pub fn grow_to(&mut self, id: u32) {
        while self.parent.len() <= id as usize {
            let next = self.parent.len() as u32;
            self.parent.push(next);
        }
    }

    /// Representative of `id` without modifying the forest.
    pub fn find(&self, id: u32) -> u32 {
        let mut cur = id;
        while let Some(&p) = self.parent.get(cur as usize) {
            if p == cur {
                break;
            }
            cur = p;
        }
        cur
    }

    /// Representative of `id`, compressing the traversed chain.
    pub fn find_mut(&mut self, id: u32) -> u32 {
        let root = self.find(id);
        let mut cur = id;
        while (cur as usize) < self.parent.len() && cur != root {
            let next = self.parent[cur as usize];
            self.parent[cur as usize] = root;
            cur = next;
        }
        root
    }

    /// Routes every future lookup of `absorbed` to the representative of
    /// `survivor`. Returns false if they were already in the same set.
    pub fn union_into(&mut self, absorbed: u32, survivor: u32) -> bool {
        self.grow_to(absorbed.max(survivor));
        let a = self.find_mut(absorbed);
        let s = self.find_mut(survivor);
        if a == s {
            return false;
        }
        self.parent[a as usize] = s;
        true
    }

    /// Length of the chain from `id` to its root; 0 for a root.
    pub fn chain_len(&self, id: u32) -> usize {
        let mut len = 0;
        let mut cur = id;
        while let Some(&p) = self.parent.get(cur as usize) {
            if p == cur {
                break;
            }
            cur = p;
            len += 1;
        }
        len
    }

    /// `(id, representative)` for every id that is not its own root.
    pub fn remapped(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.parent.len() as u32).filter_map(move |id| {
            let root = self.find(id);
            (root != id).then_some((id, root))
        })
    }
}
