//! Host page cache with copy-on-write duplicates and LRU ordering.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::config::CACHELINE;

pub type PageKey = (u32, u64);

/// Cachelines per 4 KiB page; dirty masks use one bit per line.
pub const LINES: usize = 64;

#[derive(Debug, Clone)]
pub struct CachedPage {
    pub data: Vec<u8>,
    /// Content at the last writeback; present exactly while dirty.
    pub dup: Option<Vec<u8>>,
    tick: u64,
}

impl CachedPage {
    pub fn is_dirty(&self) -> bool {
        self.dup.is_some()
    }
}

#[derive(Debug)]
pub struct PageCache {
    cap: usize,
    dup_cap: usize,
    pages: HashMap<PageKey, CachedPage>,
    lru: BTreeMap<u64, PageKey>,
    by_file: HashMap<u32, BTreeSet<u64>>,
    tick: u64,
    dups: usize,
    pub dup_created: u64,
}

impl PageCache {
    /// `cap` pages; duplicates are capped at a quarter of that.
    pub fn new(cap: usize) -> Self {
        let cap = cap.max(4);
        Self {
            cap,
            dup_cap: (cap / 4).max(1),
            pages: HashMap::new(),
            lru: BTreeMap::new(),
            by_file: HashMap::new(),
            tick: 0,
            dups: 0,
            dup_created: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.pages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pages.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.cap
    }

    pub fn dup_count(&self) -> usize {
        self.dups
    }

    pub fn over_capacity(&self) -> bool {
        self.pages.len() > self.cap
    }

    pub fn over_dup_cap(&self) -> bool {
        self.dups > self.dup_cap
    }

    fn touch(&mut self, key: PageKey) {
        self.tick += 1;
        let t = self.tick;
        if let Some(p) = self.pages.get_mut(&key) {
            self.lru.remove(&p.tick);
            p.tick = t;
            self.lru.insert(t, key);
        }
    }

    pub fn contains(&self, key: PageKey) -> bool {
        self.pages.contains_key(&key)
    }

    pub fn peek(&self, key: PageKey) -> Option<&CachedPage> {
        self.pages.get(&key)
    }

    pub fn get(&mut self, key: PageKey) -> Option<&CachedPage> {
        self.touch(key);
        self.pages.get(&key)
    }

    pub fn insert(&mut self, key: PageKey, data: Vec<u8>) {
        self.remove(key);
        self.tick += 1;
        self.pages.insert(
            key,
            CachedPage {
                data,
                dup: None,
                tick: self.tick,
            },
        );
        self.lru.insert(self.tick, key);
        self.by_file.entry(key.0).or_default().insert(key.1);
    }

    /// Applies `bytes` at `off`, making a duplicate first if the page was
    /// clean. Returns true when a duplicate was created.
    pub fn modify(&mut self, key: PageKey, off: usize, bytes: &[u8]) -> bool {
        self.touch(key);
        let p = self
            .pages
            .get_mut(&key)
            .expect("page must be cached before modification");
        let created = p.dup.is_none();
        if created {
            p.dup = Some(p.data.clone());
            self.dups += 1;
            self.dup_created += 1;
        }
        p.data[off..off + bytes.len()].copy_from_slice(bytes);
        created
    }

    /// Drops the duplicate after writeback.
    pub fn mark_clean(&mut self, key: PageKey) {
        if let Some(p) = self.pages.get_mut(&key) {
            if p.dup.take().is_some() {
                self.dups -= 1;
            }
        }
    }

    pub fn file_pages(&self, ino: u32) -> Vec<u64> {
        self.by_file
            .get(&ino)
            .map(|s| s.iter().copied().collect())
            .unwrap_or_default()
    }

    pub fn dirty_pages(&self, ino: u32) -> Vec<u64> {
        self.file_pages(ino)
            .into_iter()
            .filter(|&i| self.pages[&(ino, i)].is_dirty())
            .collect()
    }

    pub fn has_dirty(&self, ino: u32) -> bool {
        self.by_file
            .get(&ino)
            .is_some_and(|s| s.iter().any(|&i| self.pages[&(ino, i)].is_dirty()))
    }

    pub fn remove(&mut self, key: PageKey) -> Option<CachedPage> {
        let p = self.pages.remove(&key)?;
        self.lru.remove(&p.tick);
        if p.dup.is_some() {
            self.dups -= 1;
        }
        if let Some(s) = self.by_file.get_mut(&key.0) {
            s.remove(&key.1);
            if s.is_empty() {
                self.by_file.remove(&key.0);
            }
        }
        Some(p)
    }

    pub fn remove_file(&mut self, ino: u32) {
        for i in self.file_pages(ino) {
            self.remove((ino, i));
        }
    }

    pub fn lru_victim(&self) -> Option<PageKey> {
        self.lru.values().next().copied()
    }

    pub fn oldest_dirty(&self) -> Option<PageKey> {
        self.lru
            .values()
            .find(|k| self.pages[k].is_dirty())
            .copied()
    }

    /// Files with at least one dirty page.
    pub fn dirty_files(&self) -> Vec<u32> {
        let mut v: Vec<u32> = self
            .by_file
            .keys()
            .copied()
            .filter(|&ino| self.has_dirty(ino))
            .collect();
        v.sort_unstable();
        v
    }
}

/// Cachelines that differ between `cur` and `dup`, one bit per line.
pub fn xor_dirty_lines(cur: &[u8], dup: &[u8]) -> u64 {
    let line = CACHELINE as usize;
    let mut mask = 0u64;
    for (i, (a, b)) in cur.chunks(line).zip(dup.chunks(line)).enumerate() {
        let diff = a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y));
        if diff != 0 {
            mask |= 1 << i;
        }
    }
    mask
}

/// Cachelines of page `idx` overlapping the byte range `[lo, hi)` of the file.
pub fn lines_in_range(idx: u64, page_size: u64, lo: u64, hi: u64) -> u64 {
    let start = idx * page_size;
    let end = start + page_size;
    let (lo, hi) = (lo.max(start), hi.min(end));
    if lo >= hi {
        return 0;
    }
    let first = (lo - start) / CACHELINE;
    let last = (hi - start - 1) / CACHELINE;
    let mut mask = 0u64;
    for l in first..=last {
        mask |= 1 << l;
    }
    mask
}

/// Interface used to persist one page or request.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interface {
    Byte,
    Block,
}

/// Byte path when fewer than one eighth of the page's lines are dirty.
pub fn select_interface(mask: u64) -> Interface {
    if (mask.count_ones() as usize) * 8 < LINES {
        Interface::Byte
    } else {
        Interface::Block
    }
}

/// Direct requests of at most 512 bytes use the byte path.
pub fn select_direct(len: usize) -> Interface {
    if len <= 512 {
        Interface::Byte
    } else {
        Interface::Block
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cow_duplicate_once() {
        let mut c = PageCache::new(8);
        c.insert((1, 0), vec![0; 4096]);
        assert!(c.modify((1, 0), 0, b"hello"));
        assert!(!c.modify((1, 0), 100, b"x"));
        assert_eq!(c.dup_count(), 1);
        let p = c.peek((1, 0)).unwrap();
        assert_eq!(xor_dirty_lines(&p.data, p.dup.as_ref().unwrap()), 0b11);
        c.mark_clean((1, 0));
        assert_eq!(c.dup_count(), 0);
        assert!(c.dirty_pages(1).is_empty());
    }

    #[test]
    fn lru_order() {
        let mut c = PageCache::new(4);
        for i in 0..3 {
            c.insert((1, i), vec![0; 4096]);
        }
        c.get((1, 0));
        assert_eq!(c.lru_victim(), Some((1, 1)));
        c.modify((1, 2), 0, b"a");
        assert_eq!(c.oldest_dirty(), Some((1, 2)));
    }

    #[test]
    fn threshold_boundaries() {
        assert_eq!(select_interface(0x7f), Interface::Byte);
        assert_eq!(select_interface(0xff), Interface::Block);
        assert_eq!(select_direct(512), Interface::Byte);
        assert_eq!(select_direct(513), Interface::Block);
        assert_eq!(lines_in_range(1, 4096, 4096 + 100, 4096 + 200), 0b1110);
        assert_eq!(lines_in_range(0, 4096, 5000, 6000), 0);
    }
}
