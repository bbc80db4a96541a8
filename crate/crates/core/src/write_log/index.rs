//! Three-layer log index: a partition table of 16 MiB slices, one skip list
//! per partition keyed by logical page, and an ordered chunk list per page.

use super::skiplist::SkipList;

/// Logical address span covered by one partition.
pub const PARTITION_BYTES: u64 = 16 * 1024 * 1024;

/// Locates one buffered write inside a page.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChunkEntry {
    /// Cacheline index of the first slot within the page.
    pub block_offset: u8,
    /// Byte offset of the first slot in the log region.
    pub log_offset: u32,
    /// Data length in bytes.
    pub length: u32,
}

/// Chunk entries of one page, sorted by block offset and, within one
/// offset, oldest first. Several versions of a range may coexist.
pub type ChunkList = Vec<ChunkEntry>;

#[derive(Debug, Clone)]
pub struct LogIndex {
    pages_per_partition: u64,
    partitions: Vec<Option<SkipList<u64, ChunkList>>>,
    entries: usize,
}

impl LogIndex {
    pub fn new(capacity_bytes: u64, page_size: u64) -> Self {
        let n = capacity_bytes.div_ceil(PARTITION_BYTES) as usize;
        Self {
            pages_per_partition: PARTITION_BYTES / page_size,
            partitions: (0..n).map(|_| None).collect(),
            entries: 0,
        }
    }

    pub fn partition_of(&self, lpa: u64) -> usize {
        (lpa / self.pages_per_partition) as usize
    }

    pub fn partition_count(&self) -> usize {
        self.partitions.len()
    }

    /// Live chunk entries across all pages.
    pub fn entry_count(&self) -> usize {
        self.entries
    }

    pub fn page_count(&self) -> usize {
        self.partitions.iter().flatten().map(|s| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries == 0
    }

    /// Appends `entry` as the newest version at its block offset.
    pub fn insert(&mut self, lpa: u64, entry: ChunkEntry) {
        let p = self.partition_of(lpa);
        let list = self.partitions[p].get_or_insert_with(|| SkipList::with_seed(p as u64 + 1));
        if let Some(chunks) = list.get_mut(&lpa) {
            let pos = chunks.partition_point(|c| c.block_offset <= entry.block_offset);
            chunks.insert(pos, entry);
        } else {
            list.insert(lpa, vec![entry]);
        }
        self.entries += 1;
    }

    pub fn chunks(&self, lpa: u64) -> Option<&ChunkList> {
        self.partitions
            .get(self.partition_of(lpa))?
            .as_ref()?
            .get(&lpa)
    }

    /// Entries of one page, optionally restricted to block offsets in
    /// `cachelines` (inclusive bounds).
    pub fn lookup(&self, lpa: u64, cachelines: Option<(u8, u8)>) -> Vec<ChunkEntry> {
        let Some(chunks) = self.chunks(lpa) else {
            return Vec::new();
        };
        match cachelines {
            None => chunks.clone(),
            Some((lo, hi)) => chunks
                .iter()
                .filter(|c| c.block_offset >= lo && c.block_offset <= hi)
                .copied()
                .collect(),
        }
    }

    /// Pages in `[first, last]` with their entries; a range crossing
    /// partitions becomes one lookup per partition.
    pub fn lookup_range(&self, first: u64, last: u64) -> Vec<(u64, ChunkList)> {
        let mut out = Vec::new();
        if first > last {
            return out;
        }
        for p in self.partition_of(first)..=self.partition_of(last).min(self.partitions.len() - 1) {
            let Some(list) = &self.partitions[p] else {
                continue;
            };
            for (lpa, chunks) in list.iter_from(&first) {
                if *lpa > last {
                    break;
                }
                out.push((*lpa, chunks.clone()));
            }
        }
        out
    }

    pub fn remove_page(&mut self, lpa: u64) -> Option<ChunkList> {
        let p = self.partition_of(lpa);
        let removed = self.partitions.get_mut(p)?.as_mut()?.remove(&lpa)?;
        self.entries -= removed.len();
        Some(removed)
    }

    /// Drops entries for which `keep` returns false.
    pub fn retain_page(
        &mut self,
        lpa: u64,
        mut keep: impl FnMut(&ChunkEntry) -> bool,
    ) -> Vec<ChunkEntry> {
        let p = self.partition_of(lpa);
        let Some(Some(list)) = self.partitions.get_mut(p) else {
            return Vec::new();
        };
        let Some(chunks) = list.get_mut(&lpa) else {
            return Vec::new();
        };
        let mut dropped = Vec::new();
        chunks.retain(|c| {
            if keep(c) {
                true
            } else {
                dropped.push(*c);
                false
            }
        });
        let empty = chunks.is_empty();
        if empty {
            list.remove(&lpa);
        }
        self.entries -= dropped.len();
        dropped
    }

    /// Indexed pages in logical order.
    pub fn pages(&self) -> impl Iterator<Item = (u64, &ChunkList)> {
        self.partitions
            .iter()
            .flatten()
            .flat_map(|s| s.iter().map(|(k, v)| (*k, v)))
    }

    pub fn clear(&mut self) {
        for p in &mut self.partitions {
            *p = None;
        }
        self.entries = 0;
    }

    /// Index footprint: skip-list towers plus 9 bytes per chunk entry.
    pub fn memory_bytes(&self) -> usize {
        self.partitions
            .iter()
            .flatten()
            .map(|s| s.memory_bytes())
            .sum::<usize>()
            + self.entries * 9
    }

    pub fn comparisons(&self) -> u64 {
        self.partitions
            .iter()
            .flatten()
            .map(|s| s.comparisons())
            .sum()
    }
}
