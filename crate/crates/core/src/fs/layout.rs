//! On-device formats: superblock, 128-byte inodes, extent leaves and
//! variable-length directory entries.

use crate::config::CACHELINE;
use crate::error::{Error, Result};

pub const FS_MAGIC: u32 = 0x5346_5942;
pub const FS_VERSION: u32 = 1;
pub const ROOT_INO: u32 = 2;
pub const FIRST_FREE_INO: u32 = 3;
pub const INODE_SIZE: usize = 128;
pub const INODE_HALF: usize = 64;
pub const EXTENT_SIZE: usize = 16;
pub const INLINE_EXTENTS: usize = 3;
/// Extent block: count at offset 0, leaves from offset 64.
pub const EXTENT_BLOCK_HEADER: usize = 64;
pub const MAX_NAME: usize = 255;
pub const DENTRY_HEADER: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u16)]
pub enum FileKind {
    File = 1,
    Dir = 2,
}

impl FileKind {
    pub fn from_u16(v: u16) -> Option<Self> {
        match v {
            1 => Some(FileKind::File),
            2 => Some(FileKind::Dir),
            _ => None,
        }
    }
}

/// File-system geometry written to block 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Superblock {
    pub block_size: u32,
    pub total_blocks: u64,
    pub inode_count: u32,
    pub inode_bitmap_start: u64,
    pub inode_bitmap_blocks: u32,
    pub block_bitmap_start: u64,
    pub block_bitmap_blocks: u32,
    pub inode_table_start: u64,
    pub inode_table_blocks: u32,
    pub journal_start: u64,
    pub journal_blocks: u32,
    pub data_start: u64,
    pub data_blocks: u64,
    pub mode: u8,
    pub journal_mode: u8,
    pub last_txid: u32,
    pub clean: u8,
}

/// Sizing knobs for mkfs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MkfsParams {
    /// Inode count; defaults to one inode per four blocks.
    pub inode_count: Option<u32>,
    /// Journal area size in blocks; defaults to 1/64 of the device, clamped
    /// to [16, 4096].
    pub journal_blocks: Option<u32>,
}

impl Superblock {
    pub fn plan(
        total_blocks: u64,
        block_size: u64,
        params: MkfsParams,
        mode: u8,
        journal_mode: u8,
    ) -> Result<Self> {
        if block_size != 4096 {
            return Err(Error::InvalidArgument(format!(
                "block size {block_size} unsupported; need 4096"
            )));
        }
        let inodes_per_block = block_size / INODE_SIZE as u64;
        let bits = block_size * 8;
        let want = params
            .inode_count
            .map(u64::from)
            .unwrap_or((total_blocks / 4).clamp(64, 1 << 22));
        let inode_count = want.div_ceil(inodes_per_block) * inodes_per_block;
        let inode_bitmap_blocks = inode_count.div_ceil(bits);
        let block_bitmap_blocks = total_blocks.div_ceil(bits);
        let inode_table_blocks = inode_count / inodes_per_block;
        let journal_blocks = params
            .journal_blocks
            .map(u64::from)
            .unwrap_or((total_blocks / 64).clamp(16, 4096));
        let inode_bitmap_start = 1;
        let block_bitmap_start = inode_bitmap_start + inode_bitmap_blocks;
        let inode_table_start = block_bitmap_start + block_bitmap_blocks;
        let journal_start = inode_table_start + inode_table_blocks;
        let data_start = journal_start + journal_blocks;
        if journal_blocks < 4 || data_start + 16 > total_blocks || inode_count > u32::MAX as u64 {
            return Err(Error::InvalidArgument(format!(
                "device of {total_blocks} blocks is too small for the requested layout"
            )));
        }
        Ok(Self {
            block_size: block_size as u32,
            total_blocks,
            inode_count: inode_count as u32,
            inode_bitmap_start,
            inode_bitmap_blocks: inode_bitmap_blocks as u32,
            block_bitmap_start,
            block_bitmap_blocks: block_bitmap_blocks as u32,
            inode_table_start,
            inode_table_blocks: inode_table_blocks as u32,
            journal_start,
            journal_blocks: journal_blocks as u32,
            data_start,
            data_blocks: total_blocks - data_start,
            mode,
            journal_mode,
            last_txid: 0,
            clean: 1,
        })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut b = vec![0u8; self.block_size as usize];
        let mut w = 0usize;
        let mut put = |bytes: &[u8]| {
            b[w..w + bytes.len()].copy_from_slice(bytes);
            w += bytes.len();
        };
        put(&FS_MAGIC.to_le_bytes());
        put(&FS_VERSION.to_le_bytes());
        put(&self.block_size.to_le_bytes());
        put(&self.inode_count.to_le_bytes());
        put(&self.total_blocks.to_le_bytes());
        put(&self.inode_bitmap_start.to_le_bytes());
        put(&self.inode_bitmap_blocks.to_le_bytes());
        put(&self.block_bitmap_blocks.to_le_bytes());
        put(&self.block_bitmap_start.to_le_bytes());
        put(&self.inode_table_start.to_le_bytes());
        put(&self.inode_table_blocks.to_le_bytes());
        put(&self.journal_blocks.to_le_bytes());
        put(&self.journal_start.to_le_bytes());
        put(&self.data_start.to_le_bytes());
        put(&self.data_blocks.to_le_bytes());
        put(&self.last_txid.to_le_bytes());
        put(&[self.mode, self.journal_mode, self.clean, 0]);
        b
    }

    pub fn decode(b: &[u8]) -> Result<Self> {
        let u32_at = |o: usize| u32::from_le_bytes(b[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(b[o..o + 8].try_into().unwrap());
        if b.len() < 128 || u32_at(0) != FS_MAGIC {
            return Err(Error::CorruptImage("no file system superblock".into()));
        }
        if u32_at(4) != FS_VERSION {
            return Err(Error::CorruptImage(format!(
                "file system version {}",
                u32_at(4)
            )));
        }
        Ok(Self {
            block_size: u32_at(8),
            inode_count: u32_at(12),
            total_blocks: u64_at(16),
            inode_bitmap_start: u64_at(24),
            inode_bitmap_blocks: u32_at(32),
            block_bitmap_blocks: u32_at(36),
            block_bitmap_start: u64_at(40),
            inode_table_start: u64_at(48),
            inode_table_blocks: u32_at(56),
            journal_blocks: u32_at(60),
            journal_start: u64_at(64),
            data_start: u64_at(72),
            data_blocks: u64_at(80),
            last_txid: u32_at(88),
            mode: b[92],
            journal_mode: b[93],
            clean: b[94],
        })
    }

    pub fn inodes_per_block(&self) -> u32 {
        self.block_size / INODE_SIZE as u32
    }

    /// Block and byte offset of inode `ino` in the inode table.
    pub fn inode_location(&self, ino: u32) -> (u64, usize) {
        let per = self.inodes_per_block();
        (
            self.inode_table_start + (ino / per) as u64,
            (ino % per) as usize * INODE_SIZE,
        )
    }
}

/// One contiguous run of file blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ExtentLeaf {
    /// First file block covered.
    pub file_block: u64,
    pub lba: u32,
    pub len: u32,
}

impl ExtentLeaf {
    pub fn encode(&self) -> [u8; EXTENT_SIZE] {
        let mut b = [0u8; EXTENT_SIZE];
        b[0..8].copy_from_slice(&self.file_block.to_le_bytes());
        b[8..12].copy_from_slice(&self.lba.to_le_bytes());
        b[12..16].copy_from_slice(&self.len.to_le_bytes());
        b
    }

    pub fn decode(b: &[u8]) -> Self {
        Self {
            file_block: u64::from_le_bytes(b[0..8].try_into().unwrap()),
            lba: u32::from_le_bytes(b[8..12].try_into().unwrap()),
            len: u32::from_le_bytes(b[12..16].try_into().unwrap()),
        }
    }

    pub fn contains(&self, file_block: u64) -> bool {
        file_block >= self.file_block && file_block < self.file_block + self.len as u64
    }
}

/// Decoded inode. Lower half: size, times, mode, links, flags, dtime.
/// Upper half: number, kind, extent root, parent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Inode {
    pub ino: u32,
    pub kind: FileKind,
    pub size: u64,
    pub mtime: u64,
    pub atime: u64,
    pub ctime: u64,
    pub mode: u32,
    pub links: u32,
    pub flags: u32,
    pub dtime: u64,
    pub parent: u32,
    /// Extent count recorded in the upper half.
    pub extent_count: u16,
    /// Non-zero when leaves live in a separate extent block.
    pub extent_block: u32,
    /// Inline leaves (meaningful when `extent_block == 0`).
    pub inline: [ExtentLeaf; INLINE_EXTENTS],
}

impl Inode {
    pub fn new(ino: u32, kind: FileKind, parent: u32, now: u64) -> Self {
        Self {
            ino,
            kind,
            size: 0,
            mtime: now,
            atime: now,
            ctime: now,
            mode: if kind == FileKind::Dir { 0o755 } else { 0o644 },
            links: if kind == FileKind::Dir { 2 } else { 1 },
            flags: 0,
            dtime: 0,
            parent,
            extent_count: 0,
            extent_block: 0,
            inline: [ExtentLeaf::default(); INLINE_EXTENTS],
        }
    }

    pub fn encode_lower(&self) -> [u8; INODE_HALF] {
        let mut b = [0u8; INODE_HALF];
        b[0..8].copy_from_slice(&self.size.to_le_bytes());
        b[8..16].copy_from_slice(&self.mtime.to_le_bytes());
        b[16..24].copy_from_slice(&self.atime.to_le_bytes());
        b[24..32].copy_from_slice(&self.ctime.to_le_bytes());
        b[32..36].copy_from_slice(&self.mode.to_le_bytes());
        b[36..40].copy_from_slice(&self.links.to_le_bytes());
        b[40..44].copy_from_slice(&self.flags.to_le_bytes());
        b[44..52].copy_from_slice(&self.dtime.to_le_bytes());
        b
    }

    pub fn encode_upper(&self) -> [u8; INODE_HALF] {
        let mut b = [0u8; INODE_HALF];
        b[0..4].copy_from_slice(&self.ino.to_le_bytes());
        b[4..6].copy_from_slice(&(self.kind as u16).to_le_bytes());
        b[6..8].copy_from_slice(&self.extent_count.to_le_bytes());
        b[8..12].copy_from_slice(&self.extent_block.to_le_bytes());
        b[12..16].copy_from_slice(&self.parent.to_le_bytes());
        for (i, leaf) in self.inline.iter().enumerate() {
            b[16 + i * EXTENT_SIZE..16 + (i + 1) * EXTENT_SIZE].copy_from_slice(&leaf.encode());
        }
        b
    }

    /// Decodes a 128-byte slot; `None` for an all-zero (unused) slot or an
    /// unknown kind.
    pub fn decode(b: &[u8]) -> Option<Self> {
        let u = &b[INODE_HALF..INODE_SIZE];
        let kind = FileKind::from_u16(u16::from_le_bytes(u[4..6].try_into().unwrap()))?;
        let u64_at = |o: usize| u64::from_le_bytes(b[o..o + 8].try_into().unwrap());
        let u32_at = |o: usize| u32::from_le_bytes(b[o..o + 4].try_into().unwrap());
        let mut inline = [ExtentLeaf::default(); INLINE_EXTENTS];
        for (i, leaf) in inline.iter_mut().enumerate() {
            *leaf = ExtentLeaf::decode(&u[16 + i * EXTENT_SIZE..16 + (i + 1) * EXTENT_SIZE]);
        }
        Some(Self {
            size: u64_at(0),
            mtime: u64_at(8),
            atime: u64_at(16),
            ctime: u64_at(24),
            mode: u32_at(32),
            links: u32_at(36),
            flags: u32_at(40),
            dtime: u64_at(44),
            ino: u32_at(64),
            kind,
            extent_count: u16::from_le_bytes(u[6..8].try_into().unwrap()),
            extent_block: u32_at(72),
            parent: u32_at(76),
            inline,
        })
    }
}

/// Directory entry; occupies a 64-byte multiple on disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dentry {
    pub ino: u32,
    pub kind: FileKind,
    pub name: String,
}

impl Dentry {
    pub fn span_for(name_len: usize) -> usize {
        (DENTRY_HEADER + name_len).div_ceil(CACHELINE as usize) * CACHELINE as usize
    }

    pub fn span(&self) -> usize {
        Self::span_for(self.name.len())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut b = vec![0u8; self.span()];
        b[0..4].copy_from_slice(&self.ino.to_le_bytes());
        b[4..6].copy_from_slice(&(self.kind as u16).to_le_bytes());
        b[6..8].copy_from_slice(&(self.name.len() as u16).to_le_bytes());
        b[8..8 + self.name.len()].copy_from_slice(self.name.as_bytes());
        b
    }
}

/// One parsed slot of a directory block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirSlot {
    pub offset: usize,
    pub span: usize,
    /// `None` when the entry was deleted (inode number zero).
    pub entry: Option<Dentry>,
}

/// Parses a directory block. Parsing stops at the first never-used unit
/// (zero name length); the returned offset is where free space begins.
pub fn parse_dir_block(b: &[u8]) -> Result<(Vec<DirSlot>, usize)> {
    let mut out = Vec::new();
    let mut off = 0;
    while off + DENTRY_HEADER <= b.len() {
        let ino = u32::from_le_bytes(b[off..off + 4].try_into().unwrap());
        let kind = u16::from_le_bytes(b[off + 4..off + 6].try_into().unwrap());
        let name_len = u16::from_le_bytes(b[off + 6..off + 8].try_into().unwrap()) as usize;
        if name_len == 0 {
            break;
        }
        let span = Dentry::span_for(name_len);
        if name_len > MAX_NAME || off + span > b.len() {
            return Err(Error::CorruptImage(format!(
                "dentry at {off} has length {name_len}"
            )));
        }
        let entry = if ino == 0 {
            None
        } else {
            let kind = FileKind::from_u16(kind)
                .ok_or_else(|| Error::CorruptImage(format!("dentry at {off} has kind {kind}")))?;
            let name = std::str::from_utf8(&b[off + 8..off + 8 + name_len])
                .map_err(|_| Error::CorruptImage(format!("dentry at {off} has a non-utf8 name")))?;
            Some(Dentry {
                ino,
                kind,
                name: name.to_string(),
            })
        };
        out.push(DirSlot {
            offset: off,
            span,
            entry,
        });
        off += span;
    }
    Ok((out, off))
}
