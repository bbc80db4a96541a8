//! Offline consistency check read straight from the device.

use std::collections::{HashMap, HashSet};

use super::layout::{
    parse_dir_block, ExtentLeaf, FileKind, Inode, Superblock, EXTENT_BLOCK_HEADER, EXTENT_SIZE,
    FIRST_FREE_INO, INLINE_EXTENTS, INODE_SIZE, ROOT_INO,
};
use crate::device::{Category, Lpa, Mssd};
use crate::error::Result;

struct Reader<'a> {
    dev: &'a Mssd,
    sb: Superblock,
    blocks: HashMap<u64, Vec<u8>>,
}

impl Reader<'_> {
    fn block(&mut self, lba: u64) -> Result<&[u8]> {
        if !self.blocks.contains_key(&lba) {
            let b = self.dev.block_read(Lpa(lba), Category::Untagged)?;
            self.blocks.insert(lba, b);
        }
        Ok(&self.blocks[&lba])
    }

    fn bit(&mut self, start: u64, idx: u64) -> Result<bool> {
        let bits = self.sb.block_size as u64 * 8;
        let b = (idx % bits) as usize;
        let page = self.block(start + idx / bits)?;
        Ok(page[b / 8] & (1 << (b % 8)) != 0)
    }

    fn inode(&mut self, ino: u32) -> Result<Option<Inode>> {
        if ino >= self.sb.inode_count {
            return Ok(None);
        }
        let (blk, off) = self.sb.inode_location(ino);
        let page = self.block(blk)?;
        Ok(Inode::decode(&page[off..off + INODE_SIZE]))
    }
}

/// Returns a list of inconsistencies; empty when the image is clean.
///
/// Checked: every reachable inode is allocated and well formed, dentry
/// kinds and parent links agree, directory link counts match, extents lie
/// in the data region and inside the file size, no block has two owners,
/// and the bitmaps hold no leaked inodes or blocks.
pub fn fsck(dev: &Mssd) -> Result<Vec<String>> {
    let sb = Superblock::decode(&dev.block_read(Lpa(0), Category::Untagged)?)?;
    let ps = sb.block_size as u64;
    let mut r = Reader {
        dev,
        sb: sb.clone(),
        blocks: HashMap::new(),
    };
    let mut errs = Vec::new();
    let mut seen: HashSet<u32> = HashSet::new();
    let mut owner: HashMap<u64, u32> = HashMap::new();
    // (ino, expected kind, expected parent, path)
    let mut stack = vec![(ROOT_INO, FileKind::Dir, ROOT_INO, "/".to_string())];
    while let Some((ino, kind, parent, path)) = stack.pop() {
        if !seen.insert(ino) {
            errs.push(format!("{path}: inode {ino} reached twice"));
            continue;
        }
        if !r.bit(sb.inode_bitmap_start, ino as u64)? {
            errs.push(format!("{path}: inode {ino} is not marked allocated"));
        }
        let Some(inode) = r.inode(ino)? else {
            errs.push(format!("{path}: inode {ino} is unreadable"));
            continue;
        };
        if inode.ino != ino || inode.links == 0 {
            errs.push(format!(
                "{path}: inode {ino} slot holds ino {} links {}",
                inode.ino, inode.links
            ));
            continue;
        }
        if inode.kind != kind {
            errs.push(format!(
                "{path}: dentry kind {kind:?} but inode kind {:?}",
                inode.kind
            ));
            continue;
        }
        let extents: Vec<ExtentLeaf> = if inode.extent_block != 0 {
            let eb = inode.extent_block as u64;
            claim(&mut owner, &mut errs, &sb, eb, ino, &path);
            let page = r.block(eb)?;
            let count = u32::from_le_bytes(page[0..4].try_into().unwrap()) as usize;
            if count > (ps as usize - EXTENT_BLOCK_HEADER) / EXTENT_SIZE {
                errs.push(format!("{path}: extent block claims {count} leaves"));
                continue;
            }
            (0..count)
                .map(|i| {
                    let o = EXTENT_BLOCK_HEADER + i * EXTENT_SIZE;
                    ExtentLeaf::decode(&page[o..o + EXTENT_SIZE])
                })
                .collect()
        } else {
            if inode.extent_count as usize > INLINE_EXTENTS {
                errs.push(format!("{path}: {} inline extents", inode.extent_count));
                continue;
            }
            inode.inline[..inode.extent_count as usize].to_vec()
        };
        let limit = inode.size.div_ceil(ps);
        for e in &extents {
            if e.len == 0 || e.file_block + e.len as u64 > limit {
                errs.push(format!(
                    "{path}: extent {}+{} exceeds size {}",
                    e.file_block, e.len, inode.size
                ));
            }
            for i in 0..e.len as u64 {
                claim(&mut owner, &mut errs, &sb, e.lba as u64 + i, ino, &path);
            }
        }
        if kind == FileKind::File {
            continue;
        }
        if inode.parent != parent {
            errs.push(format!(
                "{path}: parent field {} but reached from {parent}",
                inode.parent
            ));
        }
        let mut subdirs = 0;
        for fb in 0..limit {
            let Some(lba) = extents
                .iter()
                .find(|e| e.contains(fb))
                .map(|e| e.lba as u64 + fb - e.file_block)
            else {
                errs.push(format!("{path}: directory block {fb} unmapped"));
                continue;
            };
            if lba >= sb.total_blocks {
                continue;
            }
            let slots = match parse_dir_block(r.block(lba)?) {
                Ok((s, _)) => s,
                Err(e) => {
                    errs.push(format!("{path}: {e}"));
                    continue;
                }
            };
            for s in slots {
                let Some(d) = s.entry else { continue };
                if d.kind == FileKind::Dir {
                    subdirs += 1;
                }
                let child = if path == "/" {
                    format!("/{}", d.name)
                } else {
                    format!("{path}/{}", d.name)
                };
                stack.push((d.ino, d.kind, ino, child));
            }
        }
        if inode.links != 2 + subdirs {
            errs.push(format!(
                "{path}: links {} but {subdirs} subdirectories",
                inode.links
            ));
        }
    }
    for ino in FIRST_FREE_INO..sb.inode_count {
        if r.bit(sb.inode_bitmap_start, ino as u64)? && !seen.contains(&ino) {
            errs.push(format!("inode {ino} allocated but unreachable"));
        }
    }
    for idx in 0..sb.data_blocks {
        let lba = sb.data_start + idx;
        let used = r.bit(sb.block_bitmap_start, idx)?;
        match (used, owner.contains_key(&lba)) {
            (true, false) => errs.push(format!("block {lba} allocated but unowned")),
            (false, true) => errs.push(format!(
                "block {lba} owned by inode {} but free",
                owner[&lba]
            )),
            _ => {}
        }
    }
    Ok(errs)
}

fn claim(
    owner: &mut HashMap<u64, u32>,
    errs: &mut Vec<String>,
    sb: &Superblock,
    lba: u64,
    ino: u32,
    path: &str,
) {
    if lba < sb.data_start || lba >= sb.total_blocks {
        errs.push(format!("{path}: block {lba} outside the data region"));
        return;
    }
    if let Some(prev) = owner.insert(lba, ino) {
        errs.push(format!("{path}: block {lba} also owned by inode {prev}"));
    }
}
