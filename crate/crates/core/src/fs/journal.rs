//! On-device journal area: records of whole blocks closed by a commit block
//! carrying the owning transaction id.

use crate::error::Result;

pub const JOURNAL_MAGIC: u64 = 0x4c4e_524a_5346_5942;
pub const FLAG_CHECKPOINTED: u32 = 1;
/// Target list starts after the first cacheline of the commit block, so the
/// checkpoint flag can be flipped with a single 64-byte write.
pub const TARGETS_OFFSET: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitBlock {
    pub seq: u64,
    pub txid: u32,
    pub flags: u32,
    pub crc: u32,
    pub targets: Vec<u64>,
}

pub fn max_targets(block_size: usize) -> usize {
    (block_size - TARGETS_OFFSET) / 8
}

fn record_crc(seq: u64, txid: u32, targets: &[u64], blocks: &[&[u8]]) -> u32 {
    let mut h = crc32fast::Hasher::new();
    h.update(&seq.to_le_bytes());
    h.update(&txid.to_le_bytes());
    for t in targets {
        h.update(&t.to_le_bytes());
    }
    for b in blocks {
        h.update(b);
    }
    h.finalize()
}

impl CommitBlock {
    pub fn new(seq: u64, txid: u32, targets: Vec<u64>, blocks: &[&[u8]]) -> Self {
        let crc = record_crc(seq, txid, &targets, blocks);
        Self {
            seq,
            txid,
            flags: 0,
            crc,
            targets,
        }
    }

    /// First cacheline: magic, seq, txid, target count, flags, crc.
    pub fn header(&self) -> [u8; TARGETS_OFFSET] {
        let mut b = [0u8; TARGETS_OFFSET];
        b[0..8].copy_from_slice(&JOURNAL_MAGIC.to_le_bytes());
        b[8..16].copy_from_slice(&self.seq.to_le_bytes());
        b[16..20].copy_from_slice(&self.txid.to_le_bytes());
        b[20..24].copy_from_slice(&(self.targets.len() as u32).to_le_bytes());
        b[24..28].copy_from_slice(&self.flags.to_le_bytes());
        b[28..32].copy_from_slice(&self.crc.to_le_bytes());
        b
    }

    pub fn encode(&self, block_size: usize) -> Vec<u8> {
        let mut b = vec![0u8; block_size];
        b[..TARGETS_OFFSET].copy_from_slice(&self.header());
        for (i, t) in self.targets.iter().enumerate() {
            let o = TARGETS_OFFSET + i * 8;
            b[o..o + 8].copy_from_slice(&t.to_le_bytes());
        }
        b
    }

    pub fn decode(b: &[u8]) -> Option<Self> {
        if u64::from_le_bytes(b[0..8].try_into().unwrap()) != JOURNAL_MAGIC {
            return None;
        }
        let count = u32::from_le_bytes(b[20..24].try_into().unwrap()) as usize;
        if count > max_targets(b.len()) {
            return None;
        }
        let targets = (0..count)
            .map(|i| {
                let o = TARGETS_OFFSET + i * 8;
                u64::from_le_bytes(b[o..o + 8].try_into().unwrap())
            })
            .collect();
        Some(Self {
            seq: u64::from_le_bytes(b[8..16].try_into().unwrap()),
            txid: u32::from_le_bytes(b[16..20].try_into().unwrap()),
            flags: u32::from_le_bytes(b[24..28].try_into().unwrap()),
            crc: u32::from_le_bytes(b[28..32].try_into().unwrap()),
            targets,
        })
    }

    pub fn verify(&self, blocks: &[&[u8]]) -> bool {
        blocks.len() == self.targets.len()
            && record_crc(self.seq, self.txid, &self.targets, blocks) == self.crc
    }
}

/// A complete record found in the journal area.
#[derive(Debug, Clone)]
pub struct JournalRecord {
    /// Index of the commit block within the journal area.
    pub commit_index: u64,
    pub commit: CommitBlock,
    pub blocks: Vec<Vec<u8>>,
}

/// Write cursor of the journal area.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct JournalCursor {
    pub head: u64,
    pub seq: u64,
}

impl JournalCursor {
    /// Picks the start index for a record of `n` blocks, wrapping to the
    /// start of the area when the tail is too short.
    pub fn reserve(&mut self, n: u64, area: u64) -> u64 {
        if self.head + n > area {
            self.head = 0;
        }
        let at = self.head;
        self.head += n;
        at
    }
}

/// Finds valid records in a journal area given as whole blocks, sorted by
/// sequence number, and the cursor that follows the newest one.
pub fn scan(area: &[Vec<u8>]) -> Result<(Vec<JournalRecord>, JournalCursor)> {
    let mut out = Vec::new();
    for (i, b) in area.iter().enumerate() {
        let Some(commit) = CommitBlock::decode(b) else {
            continue;
        };
        let n = commit.targets.len();
        if n > i {
            continue;
        }
        let blocks: Vec<&[u8]> = area[i - n..i].iter().map(|v| v.as_slice()).collect();
        if !commit.verify(&blocks) {
            tracing::warn!(
                index = i,
                seq = commit.seq,
                "journal record fails its checksum; discarded"
            );
            continue;
        }
        out.push(JournalRecord {
            commit_index: i as u64,
            blocks: blocks.iter().map(|b| b.to_vec()).collect(),
            commit,
        });
    }
    out.sort_by_key(|r| r.commit.seq);
    let cursor = out
        .last()
        .map(|r| JournalCursor {
            head: r.commit_index + 1,
            seq: r.commit.seq + 1,
        })
        .unwrap_or(JournalCursor { head: 0, seq: 1 });
    Ok((out, cursor))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn commit_block_roundtrip_and_scan() {
        let data = [vec![1u8; 4096], vec![2u8; 4096]];
        let refs: Vec<&[u8]> = data.iter().map(|d| d.as_slice()).collect();
        let c = CommitBlock::new(5, 77, vec![100, 200], &refs);
        let enc = c.encode(4096);
        assert_eq!(CommitBlock::decode(&enc).unwrap(), c);
        let mut area = vec![vec![0u8; 4096]; 8];
        area[3] = data[0].clone();
        area[4] = data[1].clone();
        area[5] = enc;
        let (recs, cur) = scan(&area).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].commit.txid, 77);
        assert_eq!(cur, JournalCursor { head: 6, seq: 6 });
        area[4][0] = 9;
        assert!(scan(&area).unwrap().0.is_empty());
    }

    #[test]
    fn cursor_wraps() {
        let mut c = JournalCursor { head: 6, seq: 1 };
        assert_eq!(c.reserve(3, 8), 0);
        assert_eq!(c.reserve(2, 8), 3);
    }
}
