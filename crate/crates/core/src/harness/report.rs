//! Run reports: a human table plus `section.key value` lines.

use std::fmt::Write as _;

use crate::device::{Category, CategoryBytes, CleanerStats, TrafficCounters};
use crate::fs::{FsRecovery, FsStats, Mode};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunReport {
    pub label: String,
    pub mode: Option<Mode>,
    pub ops: u64,
    /// Bytes the workload asked to write and read.
    pub app_write_bytes: u64,
    pub app_read_bytes: u64,
    /// Simulated time of the measured phase.
    pub elapsed_ns: u64,
    pub traffic: TrafficCounters,
    pub cleaner: CleanerStats,
    pub fs: FsStats,
    pub recovery: Option<FsRecovery>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// `a - b` field by field.
pub fn cleaner_delta(a: &CleanerStats, b: &CleanerStats) -> CleanerStats {
    CleanerStats {
        busy_until_ns: a.busy_until_ns,
        cleans: a.cleans - b.cleans,
        stall_ns: a.stall_ns - b.stall_ns,
        pages_flushed: a.pages_flushed - b.pages_flushed,
        entries_migrated: a.entries_migrated - b.entries_migrated,
        flash_reads: a.flash_reads - b.flash_reads,
        flash_writes: a.flash_writes - b.flash_writes,
        elapsed_ns: a.elapsed_ns - b.elapsed_ns,
    }
}

pub fn fs_delta(a: &FsStats, b: &FsStats) -> FsStats {
    FsStats {
        commits: a.commits - b.commits,
        writeback_byte_pages: a.writeback_byte_pages - b.writeback_byte_pages,
        writeback_block_pages: a.writeback_block_pages - b.writeback_block_pages,
        direct_byte_ops: a.direct_byte_ops - b.direct_byte_ops,
        direct_block_ops: a.direct_block_ops - b.direct_block_ops,
        journal_records: a.journal_records - b.journal_records,
        journal_replayed: a.journal_replayed - b.journal_replayed,
        dup_pages_created: a.dup_pages_created - b.dup_pages_created,
        evictions: a.evictions - b.evictions,
    }
}

impl RunReport {
    /// Operations per simulated second.
    pub fn ops_per_sec(&self) -> f64 {
        if self.elapsed_ns == 0 {
            0.0
        } else {
            self.ops as f64 * 1e9 / self.elapsed_ns as f64
        }
    }

    pub fn host_write_amplification(&self) -> f64 {
        ratio(self.traffic.host_to_ssd.total(), self.app_write_bytes)
    }

    pub fn host_read_amplification(&self) -> f64 {
        ratio(self.traffic.ssd_to_host.total(), self.app_read_bytes)
    }

    pub fn flash_write_amplification(&self) -> f64 {
        ratio(self.traffic.flash_write.total(), self.app_write_bytes)
    }

    /// One `section.key value` line per datum.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} {v}");
        };
        put("run.label", self.label.clone());
        put(
            "run.mode",
            self.mode.map_or("-".into(), |m| m.name().into()),
        );
        put("run.ops", self.ops.to_string());
        put("run.app_write_bytes", self.app_write_bytes.to_string());
        put("run.app_read_bytes", self.app_read_bytes.to_string());
        put("time.elapsed_ns", self.elapsed_ns.to_string());
        put("time.ops_per_sec", format!("{:.3}", self.ops_per_sec()));
        let mut cats = |section: &str, c: &CategoryBytes| {
            for cat in Category::ALL {
                put(&format!("{section}.{}", cat.name()), c.get(cat).to_string());
            }
            put(&format!("{section}.metadata"), c.metadata().to_string());
            put(&format!("{section}.total"), c.total().to_string());
        };
        cats("host_write", &self.traffic.host_to_ssd);
        cats("host_read", &self.traffic.ssd_to_host);
        cats("flash_write", &self.traffic.flash_write);
        cats("flash_read", &self.traffic.flash_read);
        let t = &self.traffic;
        put("requests.byte_write", t.byte_write_ops.to_string());
        put("requests.byte_read", t.byte_read_ops.to_string());
        put("requests.block_write", t.block_write_ops.to_string());
        put("requests.block_read", t.block_read_ops.to_string());
        put("requests.commit", t.commits.to_string());
        put(
            "amp.host_write",
            format!("{:.4}", self.host_write_amplification()),
        );
        put(
            "amp.host_read",
            format!("{:.4}", self.host_read_amplification()),
        );
        put(
            "amp.flash_write",
            format!("{:.4}", self.flash_write_amplification()),
        );
        let c = &self.cleaner;
        put("clean.passes", c.cleans.to_string());
        put("clean.stall_ns", c.stall_ns.to_string());
        put("clean.pages_flushed", c.pages_flushed.to_string());
        put("clean.entries_migrated", c.entries_migrated.to_string());
        put("clean.flash_reads", c.flash_reads.to_string());
        put("clean.flash_writes", c.flash_writes.to_string());
        put("clean.elapsed_ns", c.elapsed_ns.to_string());
        let f = &self.fs;
        put("fs.commits", f.commits.to_string());
        put(
            "fs.writeback_byte_pages",
            f.writeback_byte_pages.to_string(),
        );
        put(
            "fs.writeback_block_pages",
            f.writeback_block_pages.to_string(),
        );
        put("fs.direct_byte_ops", f.direct_byte_ops.to_string());
        put("fs.direct_block_ops", f.direct_block_ops.to_string());
        put("fs.journal_records", f.journal_records.to_string());
        put("fs.dup_pages_created", f.dup_pages_created.to_string());
        put("fs.evictions", f.evictions.to_string());
        if let Some(r) = &self.recovery {
            put(
                "recovery.entries_scanned",
                r.device.entries_scanned.to_string(),
            );
            put(
                "recovery.entries_discarded",
                r.device.entries_discarded.to_string(),
            );
            put(
                "recovery.entries_flushed",
                r.device.entries_flushed.to_string(),
            );
            put("recovery.pages_written", r.device.pages_written.to_string());
            put(
                "recovery.elapsed_sim_ns",
                r.device.elapsed_sim_ns.to_string(),
            );
            put("recovery.journal_records", r.journal_records.to_string());
            put("recovery.journal_replayed", r.journal_replayed.to_string());
        }
        s
    }

    /// Human-readable breakdown.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let mode = self.mode.map_or("-", |m| m.name());
        let _ = writeln!(s, "{} [{}]: {} ops", self.label, mode, self.ops);
        let _ = writeln!(
            s,
            "  simulated {:.3} ms, {:.1} ops/s",
            self.elapsed_ns as f64 / 1e6,
            self.ops_per_sec()
        );
        let _ = writeln!(
            s,
            "  application: {} B written, {} B read",
            self.app_write_bytes, self.app_read_bytes
        );
        let _ = writeln!(
            s,
            "  {:<12} {:>14} {:>14} {:>14} {:>14}",
            "category", "host write", "host read", "flash write", "flash read"
        );
        let t = &self.traffic;
        for cat in Category::ALL {
            let row = [
                t.host_to_ssd.get(cat),
                t.ssd_to_host.get(cat),
                t.flash_write.get(cat),
                t.flash_read.get(cat),
            ];
            if row.iter().all(|&v| v == 0) {
                continue;
            }
            let _ = writeln!(
                s,
                "  {:<12} {:>14} {:>14} {:>14} {:>14}",
                cat.name(),
                row[0],
                row[1],
                row[2],
                row[3]
            );
        }
        let _ = writeln!(
            s,
            "  {:<12} {:>14} {:>14} {:>14} {:>14}",
            "total",
            t.host_to_ssd.total(),
            t.ssd_to_host.total(),
            t.flash_write.total(),
            t.flash_read.total()
        );
        let _ = writeln!(
            s,
            "  amplification: host write {:.2}x, host read {:.2}x, flash write {:.2}x",
            self.host_write_amplification(),
            self.host_read_amplification(),
            self.flash_write_amplification()
        );
        let _ = writeln!(
            s,
            "  cleaning: {} passes, {} pages flushed, {} entries migrated, {} ns stalled",
            self.cleaner.cleans,
            self.cleaner.pages_flushed,
            self.cleaner.entries_migrated,
            self.cleaner.stall_ns
        );
        let _ = writeln!(
            s,
            "  fs: {} commits, writeback {} byte / {} block pages, {} journal records",
            self.fs.commits,
            self.fs.writeback_byte_pages,
            self.fs.writeback_block_pages,
            self.fs.journal_records
        );
        if let Some(r) = &self.recovery {
            let _ = writeln!(
                s,
                "  recovery: {} entries scanned, {} discarded, {} pages written, {} journal records replayed",
                r.device.entries_scanned, r.device.entries_discarded, r.device.pages_written, r.journal_replayed
            );
        }
        s
    }
}

/// Parses `section.key value` lines back into pairs.
pub fn parse_kv(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter_map(|l| l.split_once(' '))
        .map(|(k, v)| (k.to_string(), v.trim().to_string()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn categories_sum_to_totals() {
        let mut r = RunReport::default();
        r.traffic.host_to_ssd.add(Category::Inode, 128);
        r.traffic.host_to_ssd.add(Category::Data, 4096);
        r.app_write_bytes = 4096;
        let kv = parse_kv(&r.to_kv());
        let get = |k: &str| {
            kv.iter()
                .find(|(a, _)| a == k)
                .unwrap()
                .1
                .parse::<u64>()
                .unwrap()
        };
        let sum: u64 = Category::ALL
            .iter()
            .map(|c| get(&format!("host_write.{}", c.name())))
            .sum();
        assert_eq!(sum, get("host_write.total"));
        assert_eq!(get("host_write.metadata"), 128);
    }
}
