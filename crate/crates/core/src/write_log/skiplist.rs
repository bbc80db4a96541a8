//! Arena-backed skip list used for the per-partition page index.
//!
//! Nodes live in a `Vec` and link to each other by index, so the structure
//! can be cloned and serialized without pointer fix-ups. Tower heights come
//! from a seeded xorshift generator, which keeps runs reproducible.

use std::cell::Cell;
use std::cmp::Ordering;

const MAX_LEVEL: usize = 16;
const NIL: u32 = u32::MAX;
const HEAD: u32 = 0;

#[derive(Debug, Clone)]
struct Node<K, V> {
    entry: Option<(K, V)>,
    next: Vec<u32>,
}

#[derive(Debug, Clone)]
pub struct SkipList<K, V> {
    nodes: Vec<Node<K, V>>,
    free: Vec<u32>,
    level: usize,
    len: usize,
    rng: u64,
    comparisons: Cell<u64>,
}

impl<K: Ord, V> Default for SkipList<K, V> {
    fn default() -> Self {
        Self::with_seed(0x9e37_79b9_7f4a_7c15)
    }
}

impl<K: Ord, V> SkipList<K, V> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_seed(seed: u64) -> Self {
        Self {
            nodes: vec![Node {
                entry: None,
                next: vec![NIL; MAX_LEVEL],
            }],
            free: Vec::new(),
            level: 1,
            len: 0,
            rng: seed | 1,
            comparisons: Cell::new(0),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Key comparisons performed by searches since the last reset.
    pub fn comparisons(&self) -> u64 {
        self.comparisons.get()
    }

    pub fn reset_comparisons(&self) {
        self.comparisons.set(0);
    }

    /// Approximate heap footprint of the index structure itself.
    pub fn memory_bytes(&self) -> usize {
        self.nodes
            .iter()
            .map(|n| std::mem::size_of::<Node<K, V>>() + n.next.capacity() * 4)
            .sum()
    }

    fn random_height(&mut self) -> usize {
        let mut h = 1;
        loop {
            self.rng ^= self.rng << 13;
            self.rng ^= self.rng >> 7;
            self.rng ^= self.rng << 17;
            // p = 1/4 per extra level
            if self.rng & 3 != 0 || h == MAX_LEVEL {
                return h;
            }
            h += 1;
        }
    }

    fn key(&self, idx: u32) -> &K {
        &self.nodes[idx as usize]
            .entry
            .as_ref()
            .expect("non-head node")
            .0
    }

    fn cmp_at(&self, idx: u32, key: &K) -> Ordering {
        self.comparisons.set(self.comparisons.get() + 1);
        self.key(idx).cmp(key)
    }

    /// Fills `update` with the rightmost node before `key` on every level and
    /// returns the first node whose key is `>= key` (or NIL).
    fn search(&self, key: &K, update: &mut [u32; MAX_LEVEL]) -> u32 {
        let mut cur = HEAD;
        for lvl in (0..self.level).rev() {
            loop {
                let nxt = self.nodes[cur as usize].next[lvl];
                if nxt != NIL && self.cmp_at(nxt, key) == Ordering::Less {
                    cur = nxt;
                } else {
                    break;
                }
            }
            update[lvl] = cur;
        }
        self.nodes[cur as usize].next[0]
    }

    fn find(&self, key: &K) -> Option<u32> {
        let mut update = [HEAD; MAX_LEVEL];
        let cand = self.search(key, &mut update);
        (cand != NIL && self.cmp_at(cand, key) == Ordering::Equal).then_some(cand)
    }

    pub fn get(&self, key: &K) -> Option<&V> {
        self.find(key)
            .map(|i| &self.nodes[i as usize].entry.as_ref().unwrap().1)
    }

    pub fn get_mut(&mut self, key: &K) -> Option<&mut V> {
        let i = self.find(key)?;
        Some(&mut self.nodes[i as usize].entry.as_mut().unwrap().1)
    }

    pub fn contains_key(&self, key: &K) -> bool {
        self.find(key).is_some()
    }

    /// Inserts or replaces; returns the previous value.
    pub fn insert(&mut self, key: K, value: V) -> Option<V> {
        let mut update = [HEAD; MAX_LEVEL];
        let cand = self.search(&key, &mut update);
        if cand != NIL && self.cmp_at(cand, &key) == Ordering::Equal {
            let slot = &mut self.nodes[cand as usize].entry.as_mut().unwrap().1;
            return Some(std::mem::replace(slot, value));
        }
        let height = self.random_height();
        if height > self.level {
            for u in update.iter_mut().take(height).skip(self.level) {
                *u = HEAD;
            }
            self.level = height;
        }
        let node = Node {
            entry: Some((key, value)),
            next: vec![NIL; height],
        };
        let idx = match self.free.pop() {
            Some(i) => {
                self.nodes[i as usize] = node;
                i
            }
            None => {
                self.nodes.push(node);
                (self.nodes.len() - 1) as u32
            }
        };
        for (lvl, &prev) in update.iter().enumerate().take(height) {
            let after = self.nodes[prev as usize].next[lvl];
            self.nodes[idx as usize].next[lvl] = after;
            self.nodes[prev as usize].next[lvl] = idx;
        }
        self.len += 1;
        None
    }

    pub fn remove(&mut self, key: &K) -> Option<V> {
        let mut update = [HEAD; MAX_LEVEL];
        let cand = self.search(key, &mut update);
        if cand == NIL || self.cmp_at(cand, key) != Ordering::Equal {
            return None;
        }
        let height = self.nodes[cand as usize].next.len();
        for (lvl, &prev) in update.iter().enumerate().take(height) {
            if self.nodes[prev as usize].next[lvl] == cand {
                self.nodes[prev as usize].next[lvl] = self.nodes[cand as usize].next[lvl];
            }
        }
        while self.level > 1 && self.nodes[HEAD as usize].next[self.level - 1] == NIL {
            self.level -= 1;
        }
        let node = std::mem::replace(
            &mut self.nodes[cand as usize],
            Node {
                entry: None,
                next: Vec::new(),
            },
        );
        self.free.push(cand);
        self.len -= 1;
        node.entry.map(|(_, v)| v)
    }

    pub fn clear(&mut self) {
        self.nodes.truncate(1);
        self.nodes[0].next.iter_mut().for_each(|n| *n = NIL);
        self.free.clear();
        self.level = 1;
        self.len = 0;
    }

    pub fn iter(&self) -> Iter<'_, K, V> {
        Iter {
            list: self,
            cur: self.nodes[HEAD as usize].next[0],
        }
    }

    /// Iterates entries with keys `>= from` in order.
    pub fn iter_from(&self, from: &K) -> Iter<'_, K, V> {
        let mut update = [HEAD; MAX_LEVEL];
        let cur = self.search(from, &mut update);
        Iter { list: self, cur }
    }

    pub fn first(&self) -> Option<(&K, &V)> {
        self.iter().next()
    }
}

pub struct Iter<'a, K, V> {
    list: &'a SkipList<K, V>,
    cur: u32,
}

impl<'a, K, V> Iterator for Iter<'a, K, V> {
    type Item = (&'a K, &'a V);

    fn next(&mut self) -> Option<Self::Item> {
        if self.cur == NIL {
            return None;
        }
        let node = &self.list.nodes[self.cur as usize];
        self.cur = node.next[0];
        node.entry.as_ref().map(|(k, v)| (k, v))
    }
}
