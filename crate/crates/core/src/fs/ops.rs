//! Namespace and file operations on the mounted state.

use super::cache::{select_direct, Interface};
use super::inner::{FsTx, Inner};
use super::layout::{Dentry, FileKind, Inode, MAX_NAME, ROOT_INO};
use super::Stat;
use crate::device::{Category, Lpa};
use crate::error::{Error, Result};

/// Splits an absolute path into its components.
pub(super) fn components(path: &str) -> Result<Vec<&str>> {
    let rest = path
        .strip_prefix('/')
        .ok_or_else(|| Error::InvalidArgument(format!("path {path:?} is not absolute")))?;
    let mut out = Vec::new();
    for c in rest.split('/').filter(|c| !c.is_empty()) {
        if c == "." || c == ".." || c.contains('\0') {
            return Err(Error::InvalidArgument(format!(
                "path component {c:?} not supported"
            )));
        }
        if c.len() > MAX_NAME {
            return Err(Error::InvalidArgument(format!(
                "name longer than {MAX_NAME} bytes"
            )));
        }
        out.push(c);
    }
    Ok(out)
}

/// Parent components and final name; `None` for the root.
pub(super) fn split_parent(path: &str) -> Result<Option<(Vec<&str>, &str)>> {
    let mut c = components(path)?;
    Ok(c.pop().map(|name| (c, name)))
}

impl Inner {
    fn walk(&mut self, comps: &[&str]) -> Result<u32> {
        let mut cur = ROOT_INO;
        for (i, c) in comps.iter().enumerate() {
            self.load_inode(cur)?;
            if self.ist(cur).inode.kind != FileKind::Dir {
                return Err(Error::NotADirectory(comps[..i].join("/")));
            }
            self.load_dir(cur)?;
            cur = self
                .dir(cur)
                .entries
                .get(*c)
                .map(|e| e.ino)
                .ok_or_else(|| Error::NotFound(format!("/{}", comps[..=i].join("/"))))?;
        }
        self.load_inode(cur)?;
        Ok(cur)
    }

    pub fn lookup(&mut self, path: &str) -> Result<u32> {
        let c = components(path)?;
        self.walk(&c)
    }

    fn parent_dir(&mut self, comps: &[&str]) -> Result<u32> {
        let p = self.walk(comps)?;
        if self.ist(p).inode.kind != FileKind::Dir {
            return Err(Error::NotADirectory(format!("/{}", comps.join("/"))));
        }
        self.load_dir(p)?;
        Ok(p)
    }

    pub fn stat(&mut self, ino: u32) -> Result<Stat> {
        self.load_inode(ino)?;
        let st = self.ist(ino);
        Ok(Stat {
            ino,
            kind: st.inode.kind,
            size: st.size,
            links: st.inode.links,
            mtime: st.inode.mtime,
            blocks: st.block_count(),
        })
    }

    pub fn readdir(&mut self, ino: u32) -> Result<Vec<(String, u32, FileKind)>> {
        self.load_dir(ino)?;
        let mut v: Vec<_> = self
            .dir(ino)
            .entries
            .iter()
            .map(|(n, e)| (n.clone(), e.ino, e.kind))
            .collect();
        v.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(v)
    }

    fn touch_dir(&mut self, dir: u32, now: u64, links: i32) {
        let st = self.ist_mut(dir);
        st.inode.mtime = now;
        st.inode.ctime = now;
        st.inode.links = (st.inode.links as i64 + links as i64) as u32;
    }

    pub fn create_node(&mut self, path: &str, kind: FileKind) -> Result<u32> {
        let (pc, name) = split_parent(path)?.ok_or_else(|| Error::AlreadyExists("/".into()))?;
        let parent = self.parent_dir(&pc)?;
        if self.dir(parent).entries.contains_key(name) {
            return Err(Error::AlreadyExists(path.to_string()));
        }
        let mut tx = FsTx::namespace();
        let ino = self.alloc_inode(&mut tx)?;
        let now = self.now();
        self.insert_inode(Inode::new(ino, kind, parent, now));
        self.put_inode(&mut tx, ino, true, Some(Category::Inode))?;
        self.dir_insert(
            &mut tx,
            parent,
            Dentry {
                ino,
                kind,
                name: name.to_string(),
            },
        )?;
        self.touch_dir(parent, now, if kind == FileKind::Dir { 1 } else { 0 });
        self.put_inode(&mut tx, parent, true, None)?;
        if kind == FileKind::Dir {
            self.dirs.insert(ino, Default::default());
        }
        self.commit(tx)?;
        Ok(ino)
    }

    pub fn remove_node(&mut self, path: &str, kind: FileKind) -> Result<()> {
        let (pc, name) =
            split_parent(path)?.ok_or_else(|| Error::InvalidArgument("cannot remove /".into()))?;
        let parent = self.parent_dir(&pc)?;
        let ent = *self
            .dir(parent)
            .entries
            .get(name)
            .ok_or_else(|| Error::NotFound(path.to_string()))?;
        match (kind, ent.kind) {
            (FileKind::File, FileKind::Dir) => return Err(Error::IsADirectory(path.to_string())),
            (FileKind::Dir, FileKind::File) => return Err(Error::NotADirectory(path.to_string())),
            _ => {}
        }
        if ent.kind == FileKind::Dir {
            self.load_dir(ent.ino)?;
            if !self.dir(ent.ino).entries.is_empty() {
                return Err(Error::NotEmpty(path.to_string()));
            }
        }
        let mut tx = FsTx::namespace();
        self.dir_remove(&mut tx, parent, name)?;
        self.release_inode(&mut tx, ent.ino)?;
        let now = self.now();
        self.touch_dir(parent, now, if kind == FileKind::Dir { -1 } else { 0 });
        self.put_inode(&mut tx, parent, true, None)?;
        self.commit(tx)
    }

    pub fn rename(&mut self, from: &str, to: &str) -> Result<()> {
        let (fc, fname) =
            split_parent(from)?.ok_or_else(|| Error::InvalidArgument("cannot rename /".into()))?;
        let (tc, tname) = split_parent(to)?
            .ok_or_else(|| Error::InvalidArgument("cannot rename onto /".into()))?;
        let src_parent = self.parent_dir(&fc)?;
        let src = *self
            .dir(src_parent)
            .entries
            .get(fname)
            .ok_or_else(|| Error::NotFound(from.to_string()))?;
        let dst_parent = self.parent_dir(&tc)?;
        let fcomps = components(from)?;
        let tcomps = components(to)?;
        if fcomps == tcomps {
            return Ok(());
        }
        if src.kind == FileKind::Dir
            && tcomps.len() > fcomps.len()
            && tcomps[..fcomps.len()] == fcomps[..]
        {
            return Err(Error::InvalidArgument(format!(
                "cannot move {from} into itself"
            )));
        }
        let dst = self.dir(dst_parent).entries.get(tname).copied();
        if let Some(d) = dst {
            match (src.kind, d.kind) {
                (FileKind::File, FileKind::Dir) => return Err(Error::IsADirectory(to.to_string())),
                (FileKind::Dir, FileKind::File) => {
                    return Err(Error::NotADirectory(to.to_string()))
                }
                _ => {}
            }
            if d.kind == FileKind::Dir {
                self.load_dir(d.ino)?;
                if !self.dir(d.ino).entries.is_empty() {
                    return Err(Error::NotEmpty(to.to_string()));
                }
            }
        }
        let mut tx = FsTx::namespace();
        let now = self.now();
        let is_dir = src.kind == FileKind::Dir;
        if let Some(d) = dst {
            self.dir_remove(&mut tx, dst_parent, tname)?;
            self.release_inode(&mut tx, d.ino)?;
            if is_dir {
                self.touch_dir(dst_parent, now, -1);
            }
        }
        self.dir_remove(&mut tx, src_parent, fname)?;
        self.dir_insert(
            &mut tx,
            dst_parent,
            Dentry {
                ino: src.ino,
                kind: src.kind,
                name: tname.to_string(),
            },
        )?;
        if is_dir && src_parent != dst_parent {
            self.ist_mut(src.ino).inode.parent = dst_parent;
            self.put_inode(&mut tx, src.ino, false, Some(Category::Inode))?;
            self.touch_dir(src_parent, now, -1);
            self.touch_dir(dst_parent, now, 1);
        } else {
            self.touch_dir(src_parent, now, 0);
            self.touch_dir(dst_parent, now, 0);
        }
        self.put_inode(&mut tx, src_parent, true, None)?;
        if dst_parent != src_parent {
            self.put_inode(&mut tx, dst_parent, true, None)?;
        }
        self.commit(tx)
    }

    fn file_inode(&mut self, ino: u32) -> Result<()> {
        self.load_inode(ino)?;
        if self.ist(ino).inode.kind == FileKind::Dir {
            return Err(Error::IsADirectory(format!("inode {ino}")));
        }
        Ok(())
    }

    pub fn write(&mut self, ino: u32, off: u64, data: &[u8]) -> Result<()> {
        self.file_inode(ino)?;
        if data.is_empty() {
            return Ok(());
        }
        let ps = self.ps as u64;
        let end = off + data.len() as u64;
        let mut pos = off;
        while pos < end {
            let idx = pos / ps;
            let po = (pos % ps) as usize;
            let n = ((ps - pos % ps).min(end - pos)) as usize;
            self.ensure_page(ino, idx)?;
            let s = (pos - off) as usize;
            self.cache.modify((ino, idx), po, &data[s..s + n]);
            pos += n as u64;
        }
        let now = self.now();
        let st = self.ist_mut(ino);
        st.size = st.size.max(end);
        st.inode.mtime = now;
        st.inode.ctime = now;
        st.mtime_dirty = true;
        Ok(())
    }

    pub fn read(&mut self, ino: u32, off: u64, len: usize) -> Result<Vec<u8>> {
        self.file_inode(ino)?;
        let size = self.ist(ino).size;
        let end = (off + len as u64).min(size);
        let mut out = Vec::with_capacity(end.saturating_sub(off) as usize);
        let ps = self.ps as u64;
        let mut pos = off;
        while pos < end {
            let idx = pos / ps;
            let po = (pos % ps) as usize;
            let n = ((ps - pos % ps).min(end - pos)) as usize;
            self.ensure_page(ino, idx)?;
            let p = self.cache.get((ino, idx)).expect("page cached");
            out.extend_from_slice(&p.data[po..po + n]);
            pos += n as u64;
        }
        Ok(out)
    }

    pub fn sync_file(&mut self, ino: u32, datasync: bool) -> Result<()> {
        self.load_inode(ino)?;
        if self.ist(ino).inode.kind == FileKind::Dir || !self.needs_sync(ino, datasync) {
            return Ok(());
        }
        self.writeback_file(ino, datasync)
    }

    fn flush_for_direct(&mut self, ino: u32) -> Result<()> {
        if self.needs_sync(ino, true) {
            self.writeback_file(ino, true)?;
        }
        Ok(())
    }

    pub fn direct_write(&mut self, ino: u32, off: u64, data: &[u8]) -> Result<Interface> {
        self.file_inode(ino)?;
        let choice = if self.opts.mode.byte_data() {
            select_direct(data.len())
        } else {
            Interface::Block
        };
        if data.is_empty() {
            return Ok(choice);
        }
        self.flush_for_direct(ino)?;
        let ps = self.ps as u64;
        let end = off + data.len() as u64;
        for idx in off / ps..=(end - 1) / ps {
            self.cache.remove((ino, idx));
        }
        let old = self.ist(ino).size;
        // (page, offset in page, bytes)
        let mut patches: Vec<(u64, usize, Vec<u8>)> = Vec::new();
        if off > old && !old.is_multiple_of(ps) {
            let idx = old / ps;
            let stop = off.min((idx + 1) * ps);
            patches.push((idx, (old % ps) as usize, vec![0u8; (stop - old) as usize]));
            self.cache.remove((ino, idx));
        }
        let mut pos = off;
        while pos < end {
            let n = (ps - pos % ps).min(end - pos);
            let s = (pos - off) as usize;
            patches.push((
                pos / ps,
                (pos % ps) as usize,
                data[s..s + n as usize].to_vec(),
            ));
            pos += n;
        }
        let mut tx = FsTx::file(ino);
        let mut i = 0;
        while i < patches.len() {
            let idx = patches[i].0;
            let mut j = i;
            while j < patches.len() && patches[j].0 == idx {
                j += 1;
            }
            let group = &patches[i..j];
            match (self.ist(ino).lookup(idx), choice) {
                (Some(lba), Interface::Byte) => {
                    for (_, po, b) in group {
                        tx.byte_data.push((lba * ps + *po as u64, b.clone()));
                    }
                }
                (existing, _) => {
                    let covered: usize = group.iter().map(|p| p.2.len()).sum();
                    let mut page = vec![0u8; self.ps];
                    if let Some(lba) = existing {
                        if covered < self.ps && idx * ps < old {
                            page = self.dev.block_read(Lpa(lba), Category::Data)?;
                            let valid = (old - idx * ps).min(ps) as usize;
                            page[valid..].fill(0);
                        }
                    }
                    for (_, po, b) in group {
                        page[*po..*po + b.len()].copy_from_slice(b);
                    }
                    let lba = match existing {
                        Some(l) => l,
                        None => self.map_block(&mut tx, ino, idx)?,
                    };
                    tx.data_blocks.push((lba, page));
                }
            }
            i = j;
        }
        self.put_extents(&mut tx, ino)?;
        let now = self.now();
        {
            let st = self.ist_mut(ino);
            st.size = st.size.max(end);
            st.inode.size = st.size;
            st.inode.mtime = now;
            st.inode.ctime = now;
            st.mtime_dirty = false;
        }
        self.put_inode(&mut tx, ino, true, None)?;
        let used_byte = !tx.byte_data.is_empty() && tx.data_blocks.is_empty();
        self.commit(tx)?;
        if used_byte {
            self.stats.direct_byte_ops += 1;
            Ok(Interface::Byte)
        } else {
            self.stats.direct_block_ops += 1;
            Ok(Interface::Block)
        }
    }

    pub fn direct_read(&mut self, ino: u32, off: u64, len: usize) -> Result<(Vec<u8>, Interface)> {
        self.file_inode(ino)?;
        self.flush_for_direct(ino)?;
        let size = self.ist(ino).size;
        let end = (off + len as u64).min(size);
        let n = end.saturating_sub(off) as usize;
        let choice = if self.opts.mode.byte_data() {
            select_direct(n)
        } else {
            Interface::Block
        };
        let ps = self.ps as u64;
        let mut out = Vec::with_capacity(n);
        let mut pos = off;
        while pos < end {
            let idx = pos / ps;
            let po = (pos % ps) as usize;
            let k = ((ps - pos % ps).min(end - pos)) as usize;
            match self.ist(ino).lookup(idx) {
                None => out.resize(out.len() + k, 0),
                Some(lba) => match choice {
                    Interface::Byte => out.extend(self.dev.byte_read(
                        lba * ps + po as u64,
                        k,
                        Category::Data,
                    )?),
                    Interface::Block => {
                        let p = self.dev.block_read(Lpa(lba), Category::Data)?;
                        out.extend_from_slice(&p[po..po + k]);
                    }
                },
            }
            pos += k as u64;
        }
        match choice {
            Interface::Byte => self.stats.direct_byte_ops += 1,
            Interface::Block => self.stats.direct_block_ops += 1,
        }
        Ok((out, choice))
    }

    pub fn sync_all(&mut self) -> Result<()> {
        let mut inos: Vec<u32> = self
            .inodes
            .iter()
            .filter(|(_, s)| s.size != s.inode.size || s.mtime_dirty)
            .map(|(i, _)| *i)
            .collect();
        inos.extend(self.cache.dirty_files());
        inos.sort_unstable();
        inos.dedup();
        for ino in inos {
            self.sync_file(ino, false)?;
        }
        Ok(())
    }

    pub fn unmount(&mut self) -> Result<()> {
        self.sync_all()?;
        self.sb.last_txid = self.txm.next_id().saturating_sub(1);
        self.sb.clean = 1;
        self.dev
            .block_write(Lpa(0), &self.sb.encode(), Category::Superblock)
    }
}
