//! Mounted state: metadata block cache, allocators, inode and directory
//! state, transaction assembly and writeback.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

use super::cache::{lines_in_range, select_interface, xor_dirty_lines, Interface, PageCache};
use super::journal::{self, CommitBlock, JournalCursor, JournalRecord, FLAG_CHECKPOINTED};
use super::layout::{
    parse_dir_block, Dentry, ExtentLeaf, FileKind, Inode, MkfsParams, Superblock,
    EXTENT_BLOCK_HEADER, EXTENT_SIZE, FIRST_FREE_INO, INLINE_EXTENTS, INODE_HALF, INODE_SIZE,
    ROOT_INO,
};
use super::{CommitEvent, FsRecovery, FsStats, JournalMode, Mode, MountOptions};
use crate::config::CACHELINE;
use crate::device::{Category, Lpa, Mssd};
use crate::error::{Error, Result};
use crate::txn::{TxId, TxManager};

const LINE: usize = CACHELINE as usize;

#[derive(Debug, Clone)]
pub(super) struct InodeState {
    /// On-disk image; `inode.size` is the size last made durable.
    pub inode: Inode,
    /// Size including buffered writes.
    pub size: u64,
    pub extents: Vec<ExtentLeaf>,
    pub mtime_dirty: bool,
    pub extents_changed: bool,
}

impl InodeState {
    fn new(inode: Inode, extents: Vec<ExtentLeaf>) -> Self {
        Self {
            size: inode.size,
            inode,
            extents,
            mtime_dirty: false,
            extents_changed: false,
        }
    }

    pub fn lookup(&self, file_block: u64) -> Option<u64> {
        self.extents
            .iter()
            .find(|e| e.contains(file_block))
            .map(|e| e.lba as u64 + (file_block - e.file_block))
    }

    pub fn block_count(&self) -> u64 {
        self.extents.iter().map(|e| e.len as u64).sum()
    }
}

#[derive(Debug, Clone, Copy)]
pub(super) struct DirEnt {
    pub ino: u32,
    pub kind: FileKind,
    pub blk: usize,
    pub off: usize,
    pub span: usize,
}

#[derive(Debug, Clone, Default)]
pub(super) struct DirState {
    pub blocks: Vec<u64>,
    /// First never-used offset in each block.
    pub ends: Vec<usize>,
    pub entries: HashMap<String, DirEnt>,
    /// Deleted slots available for reuse: (block index, offset, span).
    pub holes: Vec<(usize, usize, usize)>,
}

/// Changes gathered by one file-system operation, applied atomically by
/// `commit`.
#[derive(Debug, Default)]
pub(super) struct FsTx {
    /// Metadata byte ranges: (block, offset, len, category).
    pub updates: Vec<(u64, usize, usize, Category)>,
    /// Newly allocated metadata blocks, written whole.
    pub fresh: BTreeMap<u64, Category>,
    /// Whole data pages for the block path.
    pub data_blocks: Vec<(u64, Vec<u8>)>,
    /// Data bytes for the byte path: (device address, bytes).
    pub byte_data: Vec<(u64, Vec<u8>)>,
    pub namespace: bool,
    pub files: Vec<u32>,
}

impl FsTx {
    pub fn namespace() -> Self {
        Self {
            namespace: true,
            ..Self::default()
        }
    }

    pub fn file(ino: u32) -> Self {
        Self {
            files: vec![ino],
            ..Self::default()
        }
    }

    pub fn update(&mut self, blk: u64, off: usize, len: usize, cat: Category) {
        self.updates.push((blk, off, len, cat));
    }

    fn is_empty(&self) -> bool {
        self.updates.is_empty()
            && self.fresh.is_empty()
            && self.data_blocks.is_empty()
            && self.byte_data.is_empty()
    }
}

#[derive(Debug)]
pub(super) struct Inner {
    pub dev: Arc<Mssd>,
    pub txm: TxManager,
    pub sb: Superblock,
    pub opts: MountOptions,
    pub ps: usize,
    pub meta: HashMap<u64, Vec<u8>>,
    pub inodes: HashMap<u32, InodeState>,
    pub dirs: HashMap<u32, DirState>,
    pub cache: PageCache,
    pub ihint: u64,
    pub bhint: u64,
    pub journal: JournalCursor,
    pub events: Vec<CommitEvent>,
    pub stats: FsStats,
    pub last_writeback: Vec<(u64, Interface)>,
}

fn set_bit(page: &mut [u8], bit: usize, v: bool) {
    if v {
        page[bit / 8] |= 1 << (bit % 8);
    } else {
        page[bit / 8] &= !(1 << (bit % 8));
    }
}

pub(super) fn mkfs(
    dev: &Arc<Mssd>,
    mode: Mode,
    journal: JournalMode,
    params: MkfsParams,
) -> Result<Superblock> {
    let cfg = dev.config();
    let sb = Superblock::plan(
        cfg.page_count(),
        cfg.page_size,
        params,
        mode as u8,
        journal as u8,
    )?;
    dev.set_log_enabled(mode.log_enabled())?;
    let ps = cfg.page_size as usize;
    dev.block_write(Lpa(0), &sb.encode(), Category::Superblock)?;
    for i in 0..sb.inode_bitmap_blocks as u64 {
        let mut b = vec![0u8; ps];
        if i == 0 {
            for bit in 0..FIRST_FREE_INO as usize {
                set_bit(&mut b, bit, true);
            }
        }
        dev.block_write(Lpa(sb.inode_bitmap_start + i), &b, Category::Bitmap)?;
    }
    for i in 0..sb.block_bitmap_blocks as u64 {
        let mut b = vec![0u8; ps];
        if i == 0 {
            set_bit(&mut b, 0, true);
        }
        dev.block_write(Lpa(sb.block_bitmap_start + i), &b, Category::Bitmap)?;
    }
    let now = dev.now_ns();
    let mut root = Inode::new(ROOT_INO, FileKind::Dir, ROOT_INO, now);
    root.size = ps as u64;
    root.extent_count = 1;
    root.inline[0] = ExtentLeaf {
        file_block: 0,
        lba: sb.data_start as u32,
        len: 1,
    };
    let (blk, off) = sb.inode_location(ROOT_INO);
    let mut page = vec![0u8; ps];
    page[off..off + INODE_HALF].copy_from_slice(&root.encode_lower());
    page[off + INODE_HALF..off + INODE_SIZE].copy_from_slice(&root.encode_upper());
    dev.block_write(Lpa(blk), &page, Category::Inode)?;
    dev.block_write(Lpa(sb.data_start), &vec![0u8; ps], Category::Dentry)?;
    Ok(sb)
}

fn read_superblock(dev: &Mssd) -> Result<Superblock> {
    let sb = Superblock::decode(&dev.block_read(Lpa(0), Category::Superblock)?)?;
    if sb.block_size as u64 != dev.config().page_size {
        return Err(Error::CorruptImage(format!(
            "block size {} does not match the device page size",
            sb.block_size
        )));
    }
    Ok(sb)
}

fn read_journal(dev: &Mssd, sb: &Superblock) -> Result<(Vec<JournalRecord>, JournalCursor)> {
    let area: Vec<Vec<u8>> = (0..sb.journal_blocks as u64)
        .map(|i| dev.block_read(Lpa(sb.journal_start + i), Category::Journal))
        .collect::<Result<_>>()?;
    journal::scan(&area)
}

fn replay(dev: &Mssd, rec: &JournalRecord) -> Result<()> {
    for (t, b) in rec.commit.targets.iter().zip(&rec.blocks) {
        dev.block_write(Lpa(*t), b, Category::Journal)?;
    }
    Ok(())
}

fn mark_checkpointed(dev: &Mssd, sb: &Superblock, commit: &CommitBlock, index: u64) -> Result<()> {
    let mut c = commit.clone();
    c.flags |= FLAG_CHECKPOINTED;
    let addr = (sb.journal_start + index) * sb.block_size as u64;
    dev.byte_write(addr, &c.header(), 0, Category::Journal)
}

pub(super) fn recover(dev: &Arc<Mssd>) -> Result<FsRecovery> {
    let device = dev.recover()?;
    let sb = read_superblock(dev)?;
    let mode = Mode::from_u8(sb.mode)
        .ok_or_else(|| Error::CorruptImage(format!("unknown mode {}", sb.mode)))?;
    dev.set_log_enabled(mode.log_enabled())?;
    let (records, _) = read_journal(dev, &sb)?;
    let mut replayed = 0;
    if mode == Mode::BlockOnly {
        if let Some(last) = records.last() {
            replay(dev, last)?;
            replayed = 1;
        }
    } else {
        let committed: HashSet<TxId> = device.committed.iter().copied().collect();
        for rec in &records {
            if rec.commit.flags & FLAG_CHECKPOINTED == 0 && committed.contains(&rec.commit.txid) {
                replay(dev, rec)?;
                mark_checkpointed(dev, &sb, &rec.commit, rec.commit_index)?;
                replayed += 1;
            }
        }
    }
    Ok(FsRecovery {
        device,
        journal_records: records.len() as u64,
        journal_replayed: replayed,
    })
}

impl Inner {
    pub fn mount(dev: Arc<Mssd>, opts: MountOptions) -> Result<Inner> {
        let sb = read_superblock(&dev)?;
        if sb.mode != opts.mode as u8 {
            return Err(Error::State(format!(
                "file system was formatted for mode {}, mount requested {}",
                Mode::from_u8(sb.mode).map_or("unknown", Mode::name),
                opts.mode
            )));
        }
        dev.set_log_enabled(opts.mode.log_enabled())?;
        let (records, cursor) = read_journal(&dev, &sb)?;
        let journal_max = records.iter().map(|r| r.commit.txid).max().unwrap_or(0);
        let first = sb.last_txid.max(dev.max_txid()).max(journal_max) + 1;
        let ps = sb.block_size as usize;
        let txm = TxManager::new(dev.clone(), opts.tx, first);
        let cache = PageCache::new((opts.cache_bytes / ps as u64).min(usize::MAX as u64) as usize);
        let mut fs = Inner {
            dev,
            txm,
            opts,
            ps,
            meta: HashMap::new(),
            inodes: HashMap::new(),
            dirs: HashMap::new(),
            cache,
            ihint: FIRST_FREE_INO as u64,
            bhint: 0,
            journal: cursor,
            events: Vec::new(),
            stats: FsStats::default(),
            last_writeback: Vec::new(),
            sb,
        };
        for i in 0..fs.sb.inode_bitmap_blocks as u64 {
            fs.meta_load(fs.sb.inode_bitmap_start + i, Category::Bitmap)?;
        }
        for i in 0..fs.sb.block_bitmap_blocks as u64 {
            fs.meta_load(fs.sb.block_bitmap_start + i, Category::Bitmap)?;
        }
        fs.load_inode(ROOT_INO)?;
        Ok(fs)
    }

    pub fn op<R>(&mut self, f: impl FnOnce(&mut Self) -> Result<R>) -> Result<R> {
        let r = f(self)?;
        self.balance()?;
        Ok(r)
    }

    pub fn now(&self) -> u64 {
        self.dev.now_ns()
    }

    // ---- metadata blocks ----

    pub fn meta_load(&mut self, blk: u64, cat: Category) -> Result<()> {
        if !self.meta.contains_key(&blk) {
            let b = self.dev.block_read(Lpa(blk), cat)?;
            self.meta.insert(blk, b);
        }
        Ok(())
    }

    fn meta_write(&mut self, tx: &mut FsTx, blk: u64, off: usize, bytes: &[u8], cat: Category) {
        let page = self.meta.get_mut(&blk).expect("metadata block loaded");
        page[off..off + bytes.len()].copy_from_slice(bytes);
        tx.update(blk, off, bytes.len(), cat);
    }

    fn meta_fresh(&mut self, tx: &mut FsTx, blk: u64, cat: Category) {
        self.meta.insert(blk, vec![0u8; self.ps]);
        tx.fresh.insert(blk, cat);
    }

    // ---- bitmaps ----

    fn bit(&self, start: u64, idx: u64) -> bool {
        let bits = self.ps as u64 * 8;
        let page = &self.meta[&(start + idx / bits)];
        let b = (idx % bits) as usize;
        page[b / 8] & (1 << (b % 8)) != 0
    }

    fn put_bit(&mut self, tx: &mut FsTx, start: u64, idx: u64, v: bool) {
        let bits = self.ps as u64 * 8;
        let blk = start + idx / bits;
        let b = (idx % bits) as usize;
        let page = self.meta.get_mut(&blk).expect("bitmap loaded");
        set_bit(page, b, v);
        let group = b / 8 / LINE * LINE;
        tx.update(blk, group, LINE, Category::Bitmap);
    }

    fn find_free(&self, start: u64, nbits: u64, lo: u64, from: u64) -> Option<u64> {
        let scan = |a: u64, b: u64| -> Option<u64> {
            let mut i = a;
            while i < b {
                let bits = self.ps as u64 * 8;
                let page = &self.meta[&(start + i / bits)];
                let bi = (i % bits) as usize;
                if bi.is_multiple_of(8) && i + 8 <= b && page[bi / 8] == 0xff {
                    i += 8;
                    continue;
                }
                if page[bi / 8] & (1 << (bi % 8)) == 0 {
                    return Some(i);
                }
                i += 1;
            }
            None
        };
        let from = from.clamp(lo, nbits);
        scan(from, nbits).or_else(|| scan(lo, from))
    }

    pub fn alloc_inode(&mut self, tx: &mut FsTx) -> Result<u32> {
        let n = self.sb.inode_count as u64;
        let idx = self
            .find_free(
                self.sb.inode_bitmap_start,
                n,
                FIRST_FREE_INO as u64,
                self.ihint,
            )
            .ok_or_else(|| Error::SpaceExhausted("no free inodes".into()))?;
        self.put_bit(tx, self.sb.inode_bitmap_start, idx, true);
        self.ihint = idx + 1;
        Ok(idx as u32)
    }

    fn free_inode_bit(&mut self, tx: &mut FsTx, ino: u32) {
        self.put_bit(tx, self.sb.inode_bitmap_start, ino as u64, false);
        self.ihint = self.ihint.min(ino as u64);
    }

    /// Allocates one data-region block, preferring `near` when free.
    fn alloc_block(&mut self, tx: &mut FsTx, near: Option<u64>) -> Result<u64> {
        let start = self.sb.block_bitmap_start;
        let n = self.sb.data_blocks;
        let ds = self.sb.data_start;
        let idx = match near {
            Some(l) if l >= ds && l - ds < n && !self.bit(start, l - ds) => l - ds,
            _ => self
                .find_free(start, n, 0, self.bhint)
                .ok_or_else(|| Error::SpaceExhausted("no free data blocks".into()))?,
        };
        self.put_bit(tx, start, idx, true);
        self.bhint = idx + 1;
        Ok(ds + idx)
    }

    fn free_block(&mut self, tx: &mut FsTx, lba: u64) {
        let idx = lba - self.sb.data_start;
        self.put_bit(tx, self.sb.block_bitmap_start, idx, false);
        self.bhint = self.bhint.min(idx);
    }

    // ---- inodes ----

    pub fn load_inode(&mut self, ino: u32) -> Result<()> {
        if self.inodes.contains_key(&ino) {
            return Ok(());
        }
        if ino == 0 || ino >= self.sb.inode_count {
            return Err(Error::NotFound(format!("inode {ino}")));
        }
        let (blk, off) = self.sb.inode_location(ino);
        self.meta_load(blk, Category::Inode)?;
        let inode = Inode::decode(&self.meta[&blk][off..off + INODE_SIZE])
            .filter(|i| i.ino == ino && i.links > 0)
            .ok_or_else(|| Error::NotFound(format!("inode {ino}")))?;
        let extents = if inode.extent_block != 0 {
            let eb = inode.extent_block as u64;
            self.meta_load(eb, Category::DataPointer)?;
            let page = &self.meta[&eb];
            let count = u32::from_le_bytes(page[0..4].try_into().unwrap()) as usize;
            (0..count)
                .map(|i| {
                    let o = EXTENT_BLOCK_HEADER + i * EXTENT_SIZE;
                    ExtentLeaf::decode(&page[o..o + EXTENT_SIZE])
                })
                .collect()
        } else {
            inode.inline[..(inode.extent_count as usize).min(INLINE_EXTENTS)].to_vec()
        };
        self.inodes.insert(ino, InodeState::new(inode, extents));
        Ok(())
    }

    pub fn ist(&self, ino: u32) -> &InodeState {
        &self.inodes[&ino]
    }

    pub fn ist_mut(&mut self, ino: u32) -> &mut InodeState {
        self.inodes.get_mut(&ino).expect("inode loaded")
    }

    pub fn insert_inode(&mut self, inode: Inode) {
        self.inodes
            .insert(inode.ino, InodeState::new(inode, Vec::new()));
    }

    /// Persists the lower (attributes) and/or upper (identity and extent
    /// root) half of an inode.
    pub fn put_inode(
        &mut self,
        tx: &mut FsTx,
        ino: u32,
        lower: bool,
        upper: Option<Category>,
    ) -> Result<()> {
        let (blk, off) = self.sb.inode_location(ino);
        self.meta_load(blk, Category::Inode)?;
        let inode = self.inodes[&ino].inode.clone();
        if lower {
            self.meta_write(tx, blk, off, &inode.encode_lower(), Category::Inode);
        }
        if let Some(cat) = upper {
            self.meta_write(tx, blk, off + INODE_HALF, &inode.encode_upper(), cat);
        }
        Ok(())
    }

    /// Writes a freed inode's tombstone and returns its blocks to the pool.
    pub fn release_inode(&mut self, tx: &mut FsTx, ino: u32) -> Result<()> {
        self.load_inode(ino)?;
        let st = self.inodes[&ino].clone();
        for e in &st.extents {
            for i in 0..e.len as u64 {
                self.free_block(tx, e.lba as u64 + i);
            }
        }
        if st.inode.extent_block != 0 {
            self.free_block(tx, st.inode.extent_block as u64);
        }
        self.free_inode_bit(tx, ino);
        let now = self.now();
        {
            let s = self.ist_mut(ino);
            s.inode.links = 0;
            s.inode.dtime = now;
        }
        self.put_inode(tx, ino, true, None)?;
        self.inodes.remove(&ino);
        self.dirs.remove(&ino);
        self.cache.remove_file(ino);
        Ok(())
    }

    /// Maps file block `fb` of `ino` to a newly allocated block.
    pub fn map_block(&mut self, tx: &mut FsTx, ino: u32, fb: u64) -> Result<u64> {
        let near = {
            let st = self.ist(ino);
            fb.checked_sub(1).and_then(|p| st.lookup(p)).map(|l| l + 1)
        };
        let lba = self.alloc_block(tx, near)?;
        let st = self.ist_mut(ino);
        st.extents_changed = true;
        if let Some(e) = st
            .extents
            .iter_mut()
            .find(|e| e.file_block + e.len as u64 == fb && e.lba as u64 + e.len as u64 == lba)
        {
            e.len += 1;
        } else {
            let pos = st.extents.partition_point(|e| e.file_block < fb);
            st.extents.insert(
                pos,
                ExtentLeaf {
                    file_block: fb,
                    lba: lba as u32,
                    len: 1,
                },
            );
        }
        Ok(lba)
    }

    /// Persists the extent list after `map_block` calls.
    pub fn put_extents(&mut self, tx: &mut FsTx, ino: u32) -> Result<()> {
        if !self.ist(ino).extents_changed {
            return Ok(());
        }
        let cap = (self.ps - EXTENT_BLOCK_HEADER) / EXTENT_SIZE;
        let (extents, mut eb) = {
            let st = self.ist(ino);
            (st.extents.clone(), st.inode.extent_block as u64)
        };
        if extents.len() > cap {
            return Err(Error::SpaceExhausted(format!(
                "inode {ino} needs more than {cap} extents"
            )));
        }
        if extents.len() > INLINE_EXTENTS || eb != 0 {
            let fresh = eb == 0;
            if fresh {
                eb = self.alloc_block(tx, None)?;
                self.meta_fresh(tx, eb, Category::DataPointer);
            } else {
                self.meta_load(eb, Category::DataPointer)?;
            }
            let mut page = vec![0u8; self.ps];
            page[0..4].copy_from_slice(&(extents.len() as u32).to_le_bytes());
            for (i, e) in extents.iter().enumerate() {
                let o = EXTENT_BLOCK_HEADER + i * EXTENT_SIZE;
                page[o..o + EXTENT_SIZE].copy_from_slice(&e.encode());
            }
            let old = self.meta[&eb].clone();
            for l in 0..self.ps / LINE {
                let r = l * LINE..(l + 1) * LINE;
                if old[r.clone()] != page[r.clone()] {
                    self.meta_write(tx, eb, l * LINE, &page[r], Category::DataPointer);
                }
            }
        }
        let st = self.ist_mut(ino);
        st.extents_changed = false;
        st.inode.extent_count = extents.len() as u16;
        st.inode.extent_block = eb as u32;
        if eb == 0 {
            st.inode.inline = Default::default();
            st.inode.inline[..extents.len()].copy_from_slice(&extents);
        }
        self.put_inode(tx, ino, false, Some(Category::DataPointer))
    }

    // ---- directories ----

    pub fn load_dir(&mut self, ino: u32) -> Result<()> {
        if self.dirs.contains_key(&ino) {
            return Ok(());
        }
        self.load_inode(ino)?;
        let st = self.ist(ino).clone();
        if st.inode.kind != FileKind::Dir {
            return Err(Error::NotADirectory(format!("inode {ino}")));
        }
        let mut d = DirState::default();
        for fb in 0..st.size.div_ceil(self.ps as u64) {
            let lba = st.lookup(fb).ok_or_else(|| {
                Error::CorruptImage(format!("directory {ino} has a hole at block {fb}"))
            })?;
            self.meta_load(lba, Category::Dentry)?;
            let (slots, end) = parse_dir_block(&self.meta[&lba])?;
            let bi = d.blocks.len();
            for s in slots {
                match s.entry {
                    Some(e) => {
                        d.entries.insert(
                            e.name,
                            DirEnt {
                                ino: e.ino,
                                kind: e.kind,
                                blk: bi,
                                off: s.offset,
                                span: s.span,
                            },
                        );
                    }
                    None => d.holes.push((bi, s.offset, s.span)),
                }
            }
            d.blocks.push(lba);
            d.ends.push(end);
        }
        self.dirs.insert(ino, d);
        Ok(())
    }

    pub fn dir(&self, ino: u32) -> &DirState {
        &self.dirs[&ino]
    }

    /// Adds an entry to a loaded directory, growing it by a block if no
    /// slot fits.
    pub fn dir_insert(&mut self, tx: &mut FsTx, dir: u32, e: Dentry) -> Result<()> {
        let span = e.span();
        let ps = self.ps;
        let d = self.dirs.get_mut(&dir).expect("directory loaded");
        let slot = if let Some(i) = d.holes.iter().position(|h| h.2 == span) {
            let h = d.holes.swap_remove(i);
            Some((h.0, h.1))
        } else {
            d.ends.iter().position(|&end| ps - end >= span).map(|bi| {
                let off = d.ends[bi];
                d.ends[bi] += span;
                (bi, off)
            })
        };
        let (bi, off) = match slot {
            Some(s) => s,
            None => {
                let fb = self.dirs[&dir].blocks.len() as u64;
                let lba = self.map_block(tx, dir, fb)?;
                self.meta_fresh(tx, lba, Category::Dentry);
                self.put_extents(tx, dir)?;
                let st = self.ist_mut(dir);
                st.size += ps as u64;
                st.inode.size = st.size;
                let d = self.dirs.get_mut(&dir).expect("directory loaded");
                d.blocks.push(lba);
                d.ends.push(span);
                (d.blocks.len() - 1, 0)
            }
        };
        let lba = self.dirs[&dir].blocks[bi];
        self.meta_write(tx, lba, off, &e.encode(), Category::Dentry);
        self.dirs
            .get_mut(&dir)
            .expect("directory loaded")
            .entries
            .insert(
                e.name,
                DirEnt {
                    ino: e.ino,
                    kind: e.kind,
                    blk: bi,
                    off,
                    span,
                },
            );
        Ok(())
    }

    pub fn dir_remove(&mut self, tx: &mut FsTx, dir: u32, name: &str) -> Result<DirEnt> {
        let d = self.dirs.get_mut(&dir).expect("directory loaded");
        let ent = d
            .entries
            .remove(name)
            .ok_or_else(|| Error::NotFound(name.to_string()))?;
        d.holes.push((ent.blk, ent.off, ent.span));
        let lba = d.blocks[ent.blk];
        let mut unit = self.meta[&lba][ent.off..ent.off + LINE].to_vec();
        unit[0..4].copy_from_slice(&0u32.to_le_bytes());
        self.meta_write(tx, lba, ent.off, &unit, Category::Dentry);
        Ok(ent)
    }

    // ---- commit ----

    /// Makes `tx` durable as one unit.
    pub fn commit(&mut self, mut tx: FsTx) -> Result<()> {
        if tx.is_empty() {
            return Ok(());
        }
        tx.files.sort_unstable();
        tx.files.dedup();
        if self.opts.mode == Mode::BlockOnly {
            self.commit_journaled(tx)
        } else {
            self.commit_bytes(tx)
        }
    }

    fn meta_runs(&self, tx: &FsTx) -> Vec<(u64, usize, usize, Category)> {
        let lines = self.ps / LINE;
        let mut per: BTreeMap<u64, Vec<Option<Category>>> = BTreeMap::new();
        for &(blk, off, len, cat) in &tx.updates {
            if tx.fresh.contains_key(&blk) {
                continue;
            }
            let v = per.entry(blk).or_insert_with(|| vec![None; lines]);
            for slot in &mut v[off / LINE..(off + len).div_ceil(LINE)] {
                *slot = Some(cat);
            }
        }
        let mut runs = Vec::new();
        for (blk, v) in per {
            let mut l = 0;
            while l < lines {
                let Some(cat) = v[l] else {
                    l += 1;
                    continue;
                };
                let s = l;
                while l < lines && v[l] == Some(cat) {
                    l += 1;
                }
                runs.push((blk, s * LINE, (l - s) * LINE, cat));
            }
        }
        runs
    }

    fn push_event(&mut self, txid: TxId, tx: &FsTx) {
        self.stats.commits += 1;
        self.events.push(CommitEvent {
            cmd: self.dev.command_count(),
            txid,
            namespace: tx.namespace,
            files: tx.files.clone(),
        });
    }

    /// Writes one journal record of whole blocks; returns the commit block
    /// and its index in the area.
    fn write_record(&mut self, txid: TxId, blocks: &[(u64, &[u8])]) -> Result<(CommitBlock, u64)> {
        let n = blocks.len() as u64;
        let at = self.journal.reserve(n + 1, self.sb.journal_blocks as u64);
        let seq = self.journal.seq;
        self.journal.seq += 1;
        for (i, (_, b)) in blocks.iter().enumerate() {
            self.dev.block_write(
                Lpa(self.sb.journal_start + at + i as u64),
                b,
                Category::Journal,
            )?;
        }
        let datas: Vec<&[u8]> = blocks.iter().map(|(_, b)| *b).collect();
        let commit = CommitBlock::new(seq, txid, blocks.iter().map(|(t, _)| *t).collect(), &datas);
        self.dev.block_write(
            Lpa(self.sb.journal_start + at + n),
            &commit.encode(self.ps),
            Category::Journal,
        )?;
        self.stats.journal_records += 1;
        Ok((commit, at + n))
    }

    fn record_capacity(&self) -> usize {
        journal::max_targets(self.ps).min(self.sb.journal_blocks as usize - 1)
    }

    fn commit_bytes(&mut self, tx: FsTx) -> Result<()> {
        let txid = self.txm.begin();
        let res = self.commit_bytes_inner(txid, &tx);
        if res.is_err() {
            let _ = self.txm.abort(txid);
        }
        self.txm.prune();
        res
    }

    fn commit_bytes_inner(&mut self, txid: TxId, tx: &FsTx) -> Result<()> {
        let mut records = Vec::new();
        if self.opts.journal == JournalMode::Data && !tx.data_blocks.is_empty() {
            for chunk in tx.data_blocks.chunks(self.record_capacity()) {
                let refs: Vec<(u64, &[u8])> =
                    chunk.iter().map(|(l, b)| (*l, b.as_slice())).collect();
                records.push((self.write_record(txid, &refs)?, chunk));
            }
        } else {
            for (lba, b) in &tx.data_blocks {
                self.dev.block_write(Lpa(*lba), b, Category::Data)?;
            }
        }
        for (&blk, &cat) in &tx.fresh {
            self.dev.block_write(Lpa(blk), &self.meta[&blk], cat)?;
        }
        for (addr, b) in &tx.byte_data {
            self.txm.write(txid, *addr, b, Category::Data)?;
        }
        let ps = self.ps as u64;
        for (blk, off, len, cat) in self.meta_runs(tx) {
            let bytes = &self.meta[&blk][off..off + len];
            self.txm.write(txid, blk * ps + off as u64, bytes, cat)?;
        }
        self.txm.commit(txid)?;
        self.push_event(txid, tx);
        for ((commit, index), chunk) in records {
            for (lba, b) in chunk {
                self.dev.block_write(Lpa(*lba), b, Category::Data)?;
            }
            mark_checkpointed(&self.dev, &self.sb, &commit, index)?;
        }
        Ok(())
    }

    fn commit_journaled(&mut self, tx: FsTx) -> Result<()> {
        let txid = self.txm.allocate();
        let data_journal = self.opts.journal == JournalMode::Data;
        if !data_journal {
            for (lba, b) in &tx.data_blocks {
                self.dev.block_write(Lpa(*lba), b, Category::Data)?;
            }
        }
        let mut touched: BTreeMap<u64, Category> = tx.fresh.clone();
        for &(blk, _, _, cat) in &tx.updates {
            touched.entry(blk).or_insert(cat);
        }
        let mut items: Vec<(u64, Vec<u8>, Category)> = Vec::new();
        if data_journal {
            items.extend(
                tx.data_blocks
                    .iter()
                    .map(|(l, b)| (*l, b.clone(), Category::Data)),
            );
        }
        items.extend(
            touched
                .into_iter()
                .map(|(blk, cat)| (blk, self.meta[&blk].clone(), cat)),
        );
        let cap = self.record_capacity();
        let chunks = items.len().div_ceil(cap);
        for (i, chunk) in items.chunks(cap).enumerate() {
            let refs: Vec<(u64, &[u8])> =
                chunk.iter().map(|(l, b, _)| (*l, b.as_slice())).collect();
            self.write_record(txid, &refs)?;
            if i + 1 == chunks {
                self.push_event(txid, &tx);
            }
            for (blk, b, cat) in chunk {
                self.dev.block_write(Lpa(*blk), b, *cat)?;
            }
        }
        Ok(())
    }

    // ---- page cache ----

    /// Brings page `idx` of `ino` into the cache.
    pub fn ensure_page(&mut self, ino: u32, idx: u64) -> Result<()> {
        if self.cache.contains((ino, idx)) {
            return Ok(());
        }
        let ps = self.ps as u64;
        let (lba, disk) = {
            let st = self.ist(ino);
            (st.lookup(idx), st.inode.size)
        };
        let mut data = vec![0u8; self.ps];
        if let Some(lba) = lba {
            if idx * ps < disk {
                data = self.dev.block_read(Lpa(lba), Category::Data)?;
                let valid = (disk - idx * ps).min(ps) as usize;
                data[valid..].fill(0);
            }
        }
        self.cache.insert((ino, idx), data);
        Ok(())
    }

    /// Queues every dirty page of `ino` and its inode changes into `tx`.
    pub fn writeback_into(&mut self, tx: &mut FsTx, ino: u32, datasync: bool) -> Result<()> {
        self.load_inode(ino)?;
        let ps = self.ps as u64;
        let (size, disk) = {
            let st = self.ist(ino);
            (st.size, st.inode.size)
        };
        let mut wb = Vec::new();
        for idx in self.cache.dirty_pages(ino) {
            let key = (ino, idx);
            if idx * ps >= size {
                self.cache.mark_clean(key);
                continue;
            }
            let existing = self.ist(ino).lookup(idx);
            let (data, mask) = {
                let p = self.cache.peek(key).expect("dirty page cached");
                let grow = lines_in_range(idx, ps, disk, size);
                let mask = match existing {
                    None => lines_in_range(idx, ps, idx * ps, size),
                    Some(_) => xor_dirty_lines(&p.data, p.dup.as_ref().expect("dirty")) | grow,
                };
                (p.data.clone(), mask)
            };
            let iface = if self.opts.mode.byte_data() {
                select_interface(mask)
            } else {
                Interface::Block
            };
            let lba = match existing {
                Some(l) => l,
                None => self.map_block(tx, ino, idx)?,
            };
            match iface {
                Interface::Byte => {
                    let mut l = 0;
                    while l < 64 {
                        if mask & (1 << l) == 0 {
                            l += 1;
                            continue;
                        }
                        let s = l;
                        while l < 64 && mask & (1 << l) != 0 {
                            l += 1;
                        }
                        tx.byte_data.push((
                            lba * ps + (s * LINE) as u64,
                            data[s * LINE..l * LINE].to_vec(),
                        ));
                    }
                    self.stats.writeback_byte_pages += 1;
                }
                Interface::Block => {
                    tx.data_blocks.push((lba, data));
                    self.stats.writeback_block_pages += 1;
                }
            }
            wb.push((idx, iface));
            self.cache.mark_clean(key);
        }
        self.put_extents(tx, ino)?;
        let lower = {
            let st = self.ist_mut(ino);
            let lower = st.size != st.inode.size || (!datasync && st.mtime_dirty);
            st.inode.size = st.size;
            if lower {
                st.mtime_dirty = false;
            }
            lower
        };
        if lower {
            self.put_inode(tx, ino, true, None)?;
        }
        tx.files.push(ino);
        self.last_writeback = wb;
        Ok(())
    }

    pub fn needs_sync(&self, ino: u32, datasync: bool) -> bool {
        let st = self.ist(ino);
        self.cache.has_dirty(ino) || st.size != st.inode.size || (!datasync && st.mtime_dirty)
    }

    pub fn writeback_file(&mut self, ino: u32, datasync: bool) -> Result<()> {
        let mut tx = FsTx::file(ino);
        self.writeback_into(&mut tx, ino, datasync)?;
        self.commit(tx)
    }

    /// Enforces the duplicate cap and the cache capacity.
    pub fn balance(&mut self) -> Result<()> {
        while self.cache.over_dup_cap() {
            let Some((ino, _)) = self.cache.oldest_dirty() else {
                break;
            };
            self.writeback_file(ino, true)?;
        }
        while self.cache.over_capacity() {
            let Some(key) = self.cache.lru_victim() else {
                break;
            };
            if self.cache.peek(key).is_some_and(|p| p.is_dirty()) {
                self.writeback_file(key.0, true)?;
            }
            self.cache.remove(key);
            self.stats.evictions += 1;
        }
        Ok(())
    }
}
