use std::collections::BTreeMap;

use crate::config::CACHELINE;
use crate::device::{Category, DeviceImage, FlashRequest, Lpa};
use crate::error::Result;
use crate::write_log::{SlotView, FLAG_FIRST};

use super::TxId;

/// Summary of one recovery scan.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RecoveryReport {
    pub entries_scanned: u64,
    pub entries_discarded: u64,
    pub entries_flushed: u64,
    pub pages_written: u64,
    pub elapsed_sim_ns: u64,
    /// TxLog contents at the time of the crash, in commit order.
    pub committed: Vec<TxId>,
    /// Largest transaction id seen anywhere on the device.
    pub max_txid: TxId,
}

impl DeviceImage {
    /// Replays committed log entries to flash and empties the log and the
    /// TxLog. Entries whose id is missing from the TxLog are dropped.
    pub fn recover(&mut self) -> Result<RecoveryReport> {
        let mut report = RecoveryReport {
            committed: self.txlog.entries().to_vec(),
            max_txid: self.max_txid(),
            ..RecoveryReport::default()
        };
        if self.log.region.used_slots() == 0 && self.txlog.is_empty() {
            return Ok(report);
        }
        let mut pages: BTreeMap<u64, Vec<SlotView>> = BTreeMap::new();
        for slot in self.log.region.occupied() {
            let side = self.log.region.sidecar(slot);
            if !side.is_live() {
                continue;
            }
            report.max_txid = report.max_txid.max(side.txid);
            let first = side.flags & FLAG_FIRST != 0;
            if first {
                report.entries_scanned += 1;
            }
            if side.txid != 0 && !self.txlog.contains(side.txid) {
                if first {
                    report.entries_discarded += 1;
                }
                continue;
            }
            if first {
                report.entries_flushed += 1;
            }
            pages.entry(side.lpa as u64).or_default().push(SlotView {
                age: self.log.region.age(slot),
                slot,
                side,
            });
        }

        let ps = self.cfg.page_size as usize;
        let batch = self.cfg.write_buffer_pages().max(1) as usize;
        let work: Vec<(u64, Vec<SlotView>)> = pages.into_iter().collect();
        let start = self.clock.now_ns();
        for chunk in work.chunks(batch) {
            let mut targets = Vec::with_capacity(chunk.len());
            let mut reads = Vec::new();
            for (lpa, views) in chunk {
                let ppa = self.ftl.translate(Lpa(*lpa))?;
                let mut mask = vec![false; ps];
                for v in views {
                    mask[v.side.page_range()].fill(true);
                }
                let partial = !mask.iter().all(|&b| b);
                let cat = views
                    .last()
                    .map(|v| v.side.category())
                    .unwrap_or(Category::Untagged);
                if partial {
                    reads.push((FlashRequest::Read(ppa), cat));
                }
                targets.push((ppa, partial, cat));
            }
            let (mut old, read_ns) = self.run_batch(reads)?;
            old.reverse();
            let mut writes = Vec::with_capacity(chunk.len());
            for ((_, views), (ppa, partial, cat)) in chunk.iter().zip(targets) {
                let mut page = if partial {
                    old.pop().flatten().expect("partial page was read")
                } else {
                    vec![0u8; ps]
                };
                self.log.overlay(views, &mut page);
                writes.push((FlashRequest::Write(ppa, page), cat));
            }
            report.pages_written += writes.len() as u64;
            let (_, write_ns) = self.run_batch(writes)?;
            self.clock.advance(read_ns + write_ns);
        }
        // Scanning the sidecars costs one cacheline read per occupied slot.
        let scanned_slots = self.log.region.used_slots();
        self.clock
            .advance(scanned_slots * self.cfg.cacheline_read_latency_ns * 16 / CACHELINE);
        report.elapsed_sim_ns = self.clock.now_ns() - start;

        self.log.region.release_all();
        self.log.index.clear();
        self.log.residual = 0;
        self.log.max_txid = self.log.max_txid.max(report.max_txid);
        self.txlog.clear();
        self.cleaner.busy_until_ns = 0;
        Ok(report)
    }
}
