//! Log cleaning: committed entries are merged into their flash pages through
//! the write buffer, uncommitted ones move to the next log generation.

use crate::config::CACHELINE;
use crate::device::{Category, DeviceImage, FlashRequest, Lpa};
use crate::error::Result;

use super::SlotView;

/// Outcome of one cleaning pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CleanReport {
    pub pages_flushed: u64,
    pub entries_migrated: u64,
    pub flash_reads: u64,
    pub flash_writes: u64,
    pub slots_reclaimed: u64,
    /// Simulated duration of the pass on the cleaner timeline.
    pub elapsed_ns: u64,
}

struct Piece {
    age: u64,
    lpa: u64,
    off: u64,
    data: Vec<u8>,
    txid: u32,
    cat: Category,
}

struct Flush {
    lpa: u64,
    partial: bool,
    views: Vec<SlotView>,
    cat: Category,
}

impl DeviceImage {
    fn is_committed(&self, txid: u32) -> bool {
        txid == 0 || self.txlog.contains(txid)
    }

    /// Runs one pass without touching the foreground clock.
    pub(crate) fn clean_pass(&mut self) -> Result<CleanReport> {
        let ps = self.cfg.page_size as usize;
        let lpas: Vec<u64> = self.log.index.pages().map(|(l, _)| l).collect();
        let mut pieces = Vec::new();
        let mut flushes = Vec::new();
        for lpa in lpas {
            let views = self.log.page_slots(lpa);
            let mut claimed = vec![false; ps];
            let mut covered = vec![false; ps];
            let mut committed = Vec::new();
            for v in views.iter().rev() {
                let r = v.side.page_range();
                if self.is_committed(v.side.txid) {
                    covered[r.clone()].fill(true);
                    committed.push(*v);
                } else {
                    // Keep only the bytes no newer entry has overwritten.
                    let payload = self.log.region.payload(v.slot);
                    let mut i = r.start;
                    while i < r.end {
                        if claimed[i] {
                            i += 1;
                            continue;
                        }
                        let j = (i..r.end).find(|&j| claimed[j]).unwrap_or(r.end);
                        let line = (i / CACHELINE as usize) * CACHELINE as usize;
                        pieces.push(Piece {
                            age: v.age,
                            lpa,
                            off: i as u64,
                            data: payload[i - line..j - line].to_vec(),
                            txid: v.side.txid,
                            cat: v.side.category(),
                        });
                        i = j;
                    }
                }
                claimed[r].fill(true);
            }
            if committed.is_empty() {
                continue;
            }
            committed.reverse();
            flushes.push(Flush {
                lpa,
                partial: !covered.iter().all(|&b| b),
                cat: committed
                    .last()
                    .map(|v| v.side.category())
                    .unwrap_or(Category::Untagged),
                views: committed,
            });
        }

        let mut report = CleanReport {
            slots_reclaimed: self.log.region.used_slots(),
            ..CleanReport::default()
        };
        let batch = self.cfg.write_buffer_pages().max(1) as usize;
        for chunk in flushes.chunks(batch) {
            let mut ppas = Vec::with_capacity(chunk.len());
            for f in chunk {
                ppas.push(self.ftl.translate(Lpa(f.lpa))?);
            }
            let reads: Vec<_> = chunk
                .iter()
                .zip(&ppas)
                .filter(|(f, _)| f.partial)
                .map(|(f, p)| (FlashRequest::Read(*p), f.cat))
                .collect();
            report.flash_reads += reads.len() as u64;
            let (mut old, read_ns) = self.run_batch(reads)?;
            old.reverse();
            let mut writes = Vec::with_capacity(chunk.len());
            for (f, p) in chunk.iter().zip(&ppas) {
                let mut page = if f.partial {
                    old.pop().flatten().expect("partial page was read")
                } else {
                    vec![0u8; ps]
                };
                self.log.overlay(&f.views, &mut page);
                writes.push((FlashRequest::Write(*p, page), f.cat));
            }
            report.flash_writes += writes.len() as u64;
            let (_, write_ns) = self.run_batch(writes)?;
            report.elapsed_ns += read_ns + write_ns;
        }
        report.pages_flushed = flushes.len() as u64;

        self.log.region.release_all();
        self.log.index.clear();
        self.txlog.clear();
        pieces.sort_by_key(|p| p.age);
        for p in &pieces {
            self.log.append(p.lpa, p.off, &p.data, p.txid, p.cat);
        }
        report.entries_migrated = pieces.len() as u64;
        self.log.residual = self.log.region.used_slots();
        report.slots_reclaimed -= report.slots_reclaimed.min(self.log.residual);

        let c = &mut self.cleaner;
        c.cleans += 1;
        c.pages_flushed += report.pages_flushed;
        c.entries_migrated += report.entries_migrated;
        c.flash_reads += report.flash_reads;
        c.flash_writes += report.flash_writes;
        c.elapsed_ns += report.elapsed_ns;
        Ok(report)
    }

    /// Waits for a cleaning pass still running in the background.
    fn wait_for_cleaner(&mut self) {
        let busy = self.cleaner.busy_until_ns;
        let now = self.clock.now_ns();
        if busy > now {
            self.cleaner.stall_ns += busy - now;
            self.clock.advance_to(busy);
        }
    }

    /// Background trigger: fires strictly above the threshold and only when
    /// enough new slots arrived since the last pass to make it worthwhile.
    pub(crate) fn maybe_trigger_clean(&mut self) -> Result<()> {
        let region = &self.log.region;
        let used = region.used_slots();
        let slots = region.slot_count();
        let over = used as f64 > self.cfg.clean_threshold * slots as f64;
        let fresh = used - self.log.residual.min(used) >= (slots / 16).max(1);
        if over && fresh {
            self.wait_for_cleaner();
            let r = self.clean_pass()?;
            self.cleaner.busy_until_ns = self.clock.now_ns() + r.elapsed_ns;
        }
        Ok(())
    }

    /// Foreground clean: the caller waits for the pass to finish.
    pub(crate) fn clean_blocking(&mut self) -> Result<CleanReport> {
        self.wait_for_cleaner();
        let r = self.clean_pass()?;
        self.cleaner.busy_until_ns = self.clock.now_ns() + r.elapsed_ns;
        self.wait_for_cleaner();
        Ok(r)
    }

    /// Synchronous cleaning pass.
    pub fn clean_now(&mut self) -> Result<CleanReport> {
        self.clean_blocking()
    }
}
