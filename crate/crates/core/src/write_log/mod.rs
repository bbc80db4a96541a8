//! Firmware write log: a circular region of 64-byte slots in device DRAM,
//! indexed per page, serving both the byte and the block interface.

mod clean;
mod index;
mod region;
pub mod skiplist;

pub use clean::CleanReport;
pub use index::{ChunkEntry, ChunkList, LogIndex, PARTITION_BYTES};
pub use region::{LogRegion, Sidecar, FLAG_DEAD, FLAG_FIRST, FLAG_VALID, SIDECAR_BYTES};

use crate::config::{DeviceConfig, CACHELINE};
use crate::device::{Category, DeviceImage, Lpa};
use crate::error::{Error, Result};
use crate::txn::TxId;

const SLOT: usize = CACHELINE as usize;

/// Log region plus its index.
#[derive(Debug, Clone)]
pub struct WriteLog {
    pub(crate) region: LogRegion,
    pub(crate) index: LogIndex,
    /// Slots still occupied right after the last cleaning pass.
    pub(crate) residual: u64,
    pub(crate) max_txid: u32,
}

/// One slot of a buffered write, resolved for merging.
#[derive(Debug, Clone, Copy)]
pub(crate) struct SlotView {
    pub age: u64,
    pub slot: u64,
    pub side: Sidecar,
}

impl WriteLog {
    pub fn new(cfg: &DeviceConfig) -> Self {
        Self {
            region: LogRegion::new(cfg.log_region_bytes),
            index: LogIndex::new(cfg.capacity_bytes, cfg.page_size),
            residual: 0,
            max_txid: 0,
        }
    }

    pub fn region(&self) -> &LogRegion {
        &self.region
    }

    pub fn index(&self) -> &LogIndex {
        &self.index
    }

    pub fn utilization(&self) -> f64 {
        self.region.utilization()
    }

    /// Slots needed to hold `len` bytes starting at page offset `off`.
    pub fn slots_for(off: u64, len: u64) -> u64 {
        (off % CACHELINE + len).div_ceil(CACHELINE)
    }

    /// Appends a write that lies within one page. The caller guarantees
    /// enough free slots.
    pub(crate) fn append(
        &mut self,
        lpa: u64,
        page_off: u64,
        data: &[u8],
        txid: TxId,
        cat: Category,
    ) {
        let mut pos = page_off as usize;
        let mut rest = data;
        let mut first_slot = None;
        while !rest.is_empty() {
            let line = pos / SLOT;
            let start = pos % SLOT;
            let n = rest.len().min(SLOT - start);
            let mut payload = [0u8; SLOT];
            payload[start..start + n].copy_from_slice(&rest[..n]);
            let flags = FLAG_VALID | if first_slot.is_none() { FLAG_FIRST } else { 0 };
            let side = Sidecar {
                lpa: lpa as u32,
                block_offset: line as u8,
                length: n as u8,
                flags,
                start: start as u8,
                txid,
                generation: 0,
            }
            .with_category(cat);
            let slot = self.region.append(&payload, side);
            first_slot.get_or_insert(slot);
            pos += n;
            rest = &rest[n..];
        }
        self.index.insert(
            lpa,
            ChunkEntry {
                block_offset: (page_off / CACHELINE) as u8,
                log_offset: (first_slot.expect("non-empty write") * CACHELINE) as u32,
                length: data.len() as u32,
            },
        );
        self.max_txid = self.max_txid.max(txid);
    }

    /// Slots belonging to one chunk entry.
    pub(crate) fn entry_slots(&self, e: &ChunkEntry) -> Vec<u64> {
        let first = e.log_offset as u64 / CACHELINE;
        let start = self.region.sidecar(first).start as u64;
        let n = (start + e.length as u64).div_ceil(CACHELINE);
        let mut out = Vec::with_capacity(n as usize);
        let mut s = first;
        for _ in 0..n {
            out.push(s);
            s = self.region.next_slot(s);
        }
        out
    }

    /// Every slot buffered for `lpa`, oldest first.
    pub(crate) fn page_slots(&self, lpa: u64) -> Vec<SlotView> {
        let Some(chunks) = self.index.chunks(lpa) else {
            return Vec::new();
        };
        let mut out: Vec<SlotView> = chunks
            .iter()
            .flat_map(|c| self.entry_slots(c))
            .map(|slot| SlotView {
                age: self.region.age(slot),
                slot,
                side: self.region.sidecar(slot),
            })
            .collect();
        out.sort_by_key(|v| v.age);
        out
    }

    /// Applies buffered slots onto `page` in age order.
    pub(crate) fn overlay(&self, views: &[SlotView], page: &mut [u8]) {
        for v in views {
            let r = v.side.page_range();
            let s = v.side.start as usize;
            page[r.clone()].copy_from_slice(&self.region.payload(v.slot)[s..s + r.len()]);
        }
    }

    /// True when every byte of `range` is covered by some slot in `views`.
    pub(crate) fn covers(
        views: &[SlotView],
        range: std::ops::Range<usize>,
        page_size: usize,
    ) -> bool {
        let mut mask = vec![false; page_size];
        for v in views {
            mask[v.side.page_range()].fill(true);
        }
        mask[range].iter().all(|&b| b)
    }

    /// Removes every buffered entry of a page and marks its slots dead.
    pub(crate) fn invalidate_page(&mut self, lpa: u64) -> usize {
        let Some(chunks) = self.index.remove_page(lpa) else {
            return 0;
        };
        for c in &chunks {
            for s in self.entry_slots(c) {
                self.region.mark_dead(s);
            }
        }
        chunks.len()
    }

    /// Drops all entries written by `txid`.
    pub(crate) fn discard_tx(&mut self, txid: TxId) -> usize {
        let mut pages: Vec<u64> = self
            .region
            .occupied()
            .map(|s| self.region.sidecar(s))
            .filter(|sc| sc.is_live() && sc.txid == txid && sc.flags & FLAG_FIRST != 0)
            .map(|sc| sc.lpa as u64)
            .collect();
        pages.sort_unstable();
        pages.dedup();
        let mut dropped = 0;
        for lpa in pages {
            let region = &self.region;
            let gone = self.index.retain_page(lpa, |c| {
                region.sidecar(c.log_offset as u64 / CACHELINE).txid != txid
            });
            for c in &gone {
                for s in self.entry_slots(c) {
                    self.region.mark_dead(s);
                }
            }
            dropped += gone.len();
        }
        dropped
    }

    /// Rebuilds the index from live sidecars, oldest first.
    #[cfg(test)]
    pub(crate) fn rebuild_index(&mut self) {
        self.index.clear();
        self.max_txid = 0;
        let slots: Vec<u64> = self.region.occupied().collect();
        let mut i = 0;
        while i < slots.len() {
            let side = self.region.sidecar(slots[i]);
            if !side.is_live() || side.flags & FLAG_FIRST == 0 {
                i += 1;
                continue;
            }
            let mut len = side.length as u64;
            let mut j = i + 1;
            while j < slots.len() {
                let next = self.region.sidecar(slots[j]);
                if !next.is_live() || next.flags & FLAG_FIRST != 0 || next.lpa != side.lpa {
                    break;
                }
                len += next.length as u64;
                j += 1;
            }
            self.index.insert(
                side.lpa as u64,
                ChunkEntry {
                    block_offset: side.block_offset,
                    log_offset: (slots[i] * CACHELINE) as u32,
                    length: len as u32,
                },
            );
            self.max_txid = self.max_txid.max(side.txid);
            i = j;
        }
    }
}

impl DeviceImage {
    fn check_byte_range(&self, addr: u64, len: u64) -> Result<(u64, u64)> {
        if len == 0 {
            return Err(Error::InvalidArgument("empty byte access".into()));
        }
        let end = addr
            .checked_add(len)
            .ok_or_else(|| Error::AddressFault(format!("{addr:#x}")))?;
        if end > self.cfg.capacity_bytes {
            return Err(Error::AddressFault(format!(
                "byte range {addr:#x}+{len} beyond capacity"
            )));
        }
        let ps = self.cfg.page_size;
        if addr / ps != (end - 1) / ps {
            return Err(Error::InvalidArgument(format!(
                "byte access {addr:#x}+{len} crosses a page"
            )));
        }
        Ok((addr / ps, addr % ps))
    }

    pub fn utilization(&self) -> f64 {
        self.log.utilization()
    }

    pub fn max_txid(&self) -> u32 {
        self.log.max_txid.max(self.txlog.high_water())
    }

    pub fn log_headroom(&self) -> u64 {
        (self.log.region.slot_count() - self.log.residual) * CACHELINE
    }

    /// Turns the firmware log on or off. Buffered entries are cleaned out
    /// before the log is disabled.
    pub fn set_log_enabled(&mut self, on: bool) -> Result<()> {
        if !on && self.log.region.used_slots() > 0 {
            self.clean_now()?;
        }
        self.log_enabled = on;
        Ok(())
    }

    /// Byte-interface write of `data` at device address `addr`.
    pub fn byte_write(&mut self, addr: u64, data: &[u8], txid: TxId, cat: Category) -> Result<()> {
        let (lpa, off) = self.check_byte_range(addr, data.len() as u64)?;
        let slots = WriteLog::slots_for(off, data.len() as u64);
        if !self.log_enabled {
            let ppa = self.ftl.translate(Lpa(lpa))?;
            let mut page = self.flash.read(ppa)?;
            page[off as usize..off as usize + data.len()].copy_from_slice(data);
            self.flash.write(ppa, &page)?;
            self.clock
                .advance(self.cfg.flash_read_latency_ns + self.cfg.flash_write_latency_ns);
            self.traffic.flash_read.add(cat, self.cfg.page_size);
            self.traffic.flash_write.add(cat, self.cfg.page_size);
        } else {
            if self.log.region.free_slots() < slots {
                self.clean_blocking()?;
                let free = self.log.region.free_slots();
                if free < slots {
                    return Err(Error::LogFull {
                        needed: slots * CACHELINE,
                        free: free * CACHELINE,
                    });
                }
            }
            self.ftl.translate(Lpa(lpa))?;
            self.log.append(lpa, off, data, txid, cat);
            self.clock
                .advance(slots * self.cfg.cacheline_write_latency_ns);
            self.maybe_trigger_clean()?;
        }
        self.traffic.host_to_ssd.add(cat, slots * CACHELINE);
        self.traffic.byte_write_ops += 1;
        Ok(())
    }

    /// Byte-interface read of `len` bytes within one page.
    pub fn byte_read(&mut self, addr: u64, len: usize, cat: Category) -> Result<Vec<u8>> {
        let (lpa, off) = self.check_byte_range(addr, len as u64)?;
        let slots = WriteLog::slots_for(off, len as u64);
        let range = off as usize..off as usize + len;
        let views = self.log.page_slots(lpa);
        let ps = self.cfg.page_size as usize;
        let mut page;
        if !views.is_empty() && WriteLog::covers(&views, range.clone(), ps) {
            page = vec![0u8; ps];
            self.clock
                .advance(slots * self.cfg.cacheline_read_latency_ns);
        } else {
            let ppa = self.ftl.translate(Lpa(lpa))?;
            page = self.flash.read(ppa)?;
            self.clock.advance(self.cfg.flash_read_latency_ns);
            self.traffic.flash_read.add(cat, self.cfg.page_size);
        }
        self.log.overlay(&views, &mut page);
        self.traffic.ssd_to_host.add(cat, slots * CACHELINE);
        self.traffic.byte_read_ops += 1;
        Ok(page[range].to_vec())
    }

    /// Block-interface read: flash page merged with newer buffered bytes.
    pub fn block_read(&mut self, lpa: Lpa, cat: Category) -> Result<Vec<u8>> {
        let ppa = self.ftl.translate(lpa)?;
        let mut page = self.flash.read(ppa)?;
        self.clock.advance(self.cfg.flash_read_latency_ns);
        self.traffic.flash_read.add(cat, self.cfg.page_size);
        let views = self.log.page_slots(lpa.0);
        self.log.overlay(&views, &mut page);
        self.traffic.ssd_to_host.add(cat, self.cfg.page_size);
        self.traffic.block_read_ops += 1;
        Ok(page)
    }

    /// Block-interface write. Buffered entries of the page are invalidated.
    pub fn block_write(&mut self, lpa: Lpa, data: &[u8], cat: Category) -> Result<()> {
        if data.len() as u64 != self.cfg.page_size {
            return Err(Error::InvalidArgument(format!(
                "block write of {} bytes, page is {}",
                data.len(),
                self.cfg.page_size
            )));
        }
        let ppa = self.ftl.translate(lpa)?;
        self.flash.write(ppa, data)?;
        self.clock.advance(self.cfg.flash_write_latency_ns);
        self.traffic.flash_write.add(cat, self.cfg.page_size);
        self.traffic.host_to_ssd.add(cat, self.cfg.page_size);
        self.traffic.block_write_ops += 1;
        self.log.invalidate_page(lpa.0);
        Ok(())
    }

    /// Index entries of a page, optionally restricted to a cacheline range.
    pub fn index_lookup(&self, lpa: Lpa, cachelines: Option<(u8, u8)>) -> Vec<ChunkEntry> {
        self.log.index.lookup(lpa.0, cachelines)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{DeviceConfig, KIB, MIB};

    fn small() -> DeviceImage {
        let cfg = DeviceConfig {
            capacity_bytes: 64 * MIB,
            log_region_bytes: 64 * KIB,
            txlog_bytes: 4 * KIB,
            write_buffer_bytes: 64 * KIB,
            ..DeviceConfig::default()
        };
        DeviceImage::new(cfg).unwrap()
    }

    #[test]
    fn one_slot_write_costs_one_cacheline() {
        let mut d = small();
        d.byte_write(4096, &[7u8; 64], 0, Category::Data).unwrap();
        assert_eq!(d.log.region.used_slots(), 1);
        assert_eq!(d.now_ns(), 600);
        assert_eq!(d.traffic.host_to_ssd.total(), 64);
    }

    #[test]
    fn tiny_write_takes_full_slot() {
        let mut d = small();
        d.byte_write(10, &[1], 0, Category::Data).unwrap();
        let side = d.log.region.sidecar(0);
        assert_eq!((side.length, side.start), (1, 10));
        assert_eq!(d.log.region.tail(), 1);
    }

    #[test]
    fn read_back_from_log_skips_flash() {
        let mut d = small();
        d.byte_write(128, &[9u8; 64], 0, Category::Data).unwrap();
        let t = d.now_ns();
        assert_eq!(d.byte_read(128, 64, Category::Data).unwrap(), vec![9u8; 64]);
        assert_eq!(d.now_ns() - t, 4800);
        assert_eq!(d.traffic.flash_read.total(), 0);
        let t = d.now_ns();
        assert_eq!(
            d.byte_read(4096 * 3, 64, Category::Data).unwrap(),
            vec![0u8; 64]
        );
        assert_eq!(d.now_ns() - t, 40_000);
    }

    #[test]
    fn newest_version_wins_and_block_write_invalidates() {
        let mut d = small();
        d.byte_write(0, &[1u8; 64], 0, Category::Data).unwrap();
        d.byte_write(64, &[2u8; 64], 0, Category::Data).unwrap();
        d.byte_write(30, &[3u8; 10], 0, Category::Data).unwrap();
        let page = d.block_read(Lpa(0), Category::Data).unwrap();
        assert_eq!(&page[..30], &[1u8; 30]);
        assert_eq!(&page[30..40], &[3u8; 10]);
        assert_eq!(&page[64..128], &[2u8; 64]);
        d.block_write(Lpa(0), &vec![5u8; 4096], Category::Data)
            .unwrap();
        assert!(d.index_lookup(Lpa(0), None).is_empty());
        assert_eq!(
            d.block_read(Lpa(0), Category::Data).unwrap(),
            vec![5u8; 4096]
        );
    }

    #[test]
    fn page_crossing_is_rejected() {
        let mut d = small();
        assert!(matches!(
            d.byte_write(4090, &[0u8; 10], 0, Category::Data),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            d.byte_write(64 * MIB, &[0u8; 1], 0, Category::Data),
            Err(Error::AddressFault(_))
        ));
    }

    #[test]
    fn multi_slot_entry_splits_by_cacheline() {
        let mut d = small();
        d.byte_write(30, &[4u8; 100], 0, Category::Data).unwrap();
        assert_eq!(d.log.region.used_slots(), 3);
        assert_eq!(d.traffic.host_to_ssd.total(), 192);
        let e = d.index_lookup(Lpa(0), None);
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].length, 100);
        d.log.rebuild_index();
        assert_eq!(d.index_lookup(Lpa(0), None), e);
    }
}
