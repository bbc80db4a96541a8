//! Flat byte-array oracle for the raw device interfaces.
//!
//! Open transactions own disjoint pages, as the transaction manager's locks
//! would enforce, so an abort restores the page as it was when the
//! transaction first touched it.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bytefs_core::config::{KIB, MIB};
use bytefs_core::write_log::FLAG_FIRST;
use bytefs_core::{Category, DeviceConfig, Lpa, Mssd, TrafficCounters};

pub fn small_config() -> DeviceConfig {
    DeviceConfig {
        capacity_bytes: 16 * MIB,
        log_region_bytes: 256 * KIB,
        txlog_bytes: 4 * KIB,
        write_buffer_bytes: 256 * KIB,
        ..DeviceConfig::desk()
    }
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct ShadowStats {
    pub ops: u64,
    pub reads_checked: u64,
    pub cleans: u64,
    pub commits: u64,
    pub aborts: u64,
    pub crash_checks: u64,
    pub final_clock: u64,
    pub traffic: TrafficCounters,
}

struct Oracle {
    ps: usize,
    /// Visible bytes, including writes of still-open transactions.
    view: Vec<u8>,
    /// Open transaction -> pages it owns with their pre-images.
    open: BTreeMap<u32, HashMap<u64, Vec<u8>>>,
    owner: HashMap<u64, u32>,
}

impl Oracle {
    fn page(&self, lpa: u64) -> &[u8] {
        &self.view[lpa as usize * self.ps..(lpa as usize + 1) * self.ps]
    }

    /// What a crash followed by recovery must leave behind.
    fn durable(&self) -> Vec<u8> {
        let mut d = self.view.clone();
        for pages in self.open.values() {
            for (lpa, pre) in pages {
                d[*lpa as usize * self.ps..(*lpa as usize + 1) * self.ps].copy_from_slice(pre);
            }
        }
        d
    }
}

fn category(rng: &mut ChaCha8Rng) -> Category {
    Category::ALL[rng.gen_range(0..Category::ALL.len())]
}

/// Runs `ops` random byte/block reads and writes, transaction commits and
/// aborts and explicit cleans, checking every read against the oracle.
/// With `crash_every`, the image is periodically saved, recovered and
/// compared with the durable view.
pub fn shadow_session(
    cfg: DeviceConfig,
    ops: u64,
    seed: u64,
    crash_every: Option<u64>,
) -> Result<ShadowStats, String> {
    let dev = Mssd::new(cfg.clone()).map_err(|e| e.to_string())?;
    let ps = cfg.page_size as usize;
    let pages = cfg.page_count();
    let mut o = Oracle {
        ps,
        view: vec![0u8; cfg.capacity_bytes as usize],
        open: BTreeMap::new(),
        owner: HashMap::new(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut next_tx = 1u32;
    let mut touched = BTreeSet::new();
    let mut stats = ShadowStats::default();
    let mut last_clock = 0;
    // A hot set keeps several writes per page in the log between cleans.
    let hot = (pages / 8).max(1);
    let mut i = 0u64;
    while stats.ops < ops {
        i += 1;
        let lpa = if rng.gen_bool(0.8) {
            rng.gen_range(0..hot)
        } else {
            rng.gen_range(0..pages)
        };
        let cat = category(&mut rng);
        let ctx = |what: &str| format!("op {i}: {what} on page {lpa}");
        match rng.gen_range(0..100) {
            0..=37 => {
                let off = rng.gen_range(0..ps);
                let cap = if rng.gen_bool(0.8) { 64 } else { 512 };
                let len = rng.gen_range(1..=(ps - off).min(cap));
                let mut data = vec![0u8; len];
                rng.fill_bytes(&mut data);
                let txid = match o.owner.get(&lpa) {
                    Some(&t) => t,
                    None if !o.open.is_empty() && rng.gen_bool(0.5) => {
                        let k = rng.gen_range(0..o.open.len());
                        let t = *o.open.keys().nth(k).unwrap();
                        let pre = o.page(lpa).to_vec();
                        o.open.get_mut(&t).unwrap().insert(lpa, pre);
                        o.owner.insert(lpa, t);
                        t
                    }
                    None => 0,
                };
                let addr = lpa * ps as u64 + off as u64;
                dev.byte_write(addr, &data, txid, cat)
                    .map_err(|e| format!("{}: {e}", ctx("byte_write")))?;
                o.view[addr as usize..addr as usize + len].copy_from_slice(&data);
                touched.insert(lpa);
            }
            38..=47 => {
                if o.owner.contains_key(&lpa) {
                    continue;
                }
                let mut data = vec![0u8; ps];
                rng.fill_bytes(&mut data);
                dev.block_write(Lpa(lpa), &data, cat)
                    .map_err(|e| format!("{}: {e}", ctx("block_write")))?;
                o.view[lpa as usize * ps..(lpa as usize + 1) * ps].copy_from_slice(&data);
                touched.insert(lpa);
            }
            48..=72 => {
                let off = rng.gen_range(0..ps);
                let len = rng.gen_range(1..=ps - off);
                let addr = lpa * ps as u64 + off as u64;
                let got = dev
                    .byte_read(addr, len, cat)
                    .map_err(|e| format!("{}: {e}", ctx("byte_read")))?;
                if got != o.view[addr as usize..addr as usize + len] {
                    return Err(ctx(&format!(
                        "byte_read {len} at {off} differs from the oracle"
                    )));
                }
                stats.reads_checked += 1;
            }
            73..=84 => {
                let got = dev
                    .block_read(Lpa(lpa), cat)
                    .map_err(|e| format!("{}: {e}", ctx("block_read")))?;
                if got != o.page(lpa) {
                    return Err(ctx("block_read differs from the oracle"));
                }
                stats.reads_checked += 1;
            }
            85..=91 => {
                if o.open.len() < 4 {
                    o.open.insert(next_tx, HashMap::new());
                    next_tx += 1;
                }
            }
            92..=98 => {
                let Some(&t) = o.open.keys().next() else {
                    continue;
                };
                let owned = o.open.remove(&t).unwrap();
                if rng.gen_bool(0.75) {
                    dev.commit(t)
                        .map_err(|e| format!("op {i}: commit {t}: {e}"))?;
                    stats.commits += 1;
                } else {
                    dev.abort(t)
                        .map_err(|e| format!("op {i}: abort {t}: {e}"))?;
                    for (p, pre) in &owned {
                        o.view[*p as usize * ps..(*p as usize + 1) * ps].copy_from_slice(pre);
                    }
                    stats.aborts += 1;
                }
                for p in owned.keys() {
                    o.owner.remove(p);
                }
            }
            _ => {
                dev.clean().map_err(|e| format!("op {i}: clean: {e}"))?;
            }
        }
        let now = dev.now_ns();
        if now < last_clock {
            return Err(format!(
                "op {i}: clock went back from {last_clock} to {now}"
            ));
        }
        last_clock = now;
        stats.ops += 1;
        if i.is_multiple_of(64) {
            check_log(&dev).map_err(|e| format!("op {i}: {e}"))?;
        }
        if crash_every.is_some_and(|n| i % n == n - 1) {
            check_crash(&dev, &o, &touched, ps)
                .map_err(|e| format!("crash check after op {i}: {e}"))?;
            stats.crash_checks += 1;
        }
    }
    for &lpa in &touched {
        if dev
            .block_read(Lpa(lpa), Category::Untagged)
            .map_err(|e| e.to_string())?
            != o.page(lpa)
        {
            return Err(format!("final sweep: page {lpa} differs from the oracle"));
        }
    }
    stats.cleans = dev.with_image(|d| d.cleaner_stats().cleans);
    stats.final_clock = dev.now_ns();
    stats.traffic = dev.traffic_snapshot();
    Ok(stats)
}

/// Occupancy bound and index soundness: every chunk entry points at the
/// first slot of a live entry recorded for the same page and cacheline.
pub fn check_log(dev: &Mssd) -> Result<(), String> {
    dev.with_image(|d| {
        let log = d.write_log();
        let region = log.region();
        if region.used_slots() > region.slot_count() {
            return Err(format!(
                "{} slots used of {}",
                region.used_slots(),
                region.slot_count()
            ));
        }
        for (lpa, chunks) in log.index().pages() {
            for c in chunks {
                let side = region.sidecar(c.log_offset as u64 / 64);
                if !side.is_live()
                    || side.flags & FLAG_FIRST == 0
                    || side.lpa as u64 != lpa
                    || side.block_offset != c.block_offset
                {
                    return Err(format!("chunk {c:?} of page {lpa} points at {side:?}"));
                }
            }
        }
        Ok(())
    })
}

fn check_crash(dev: &Mssd, o: &Oracle, touched: &BTreeSet<u64>, ps: usize) -> Result<(), String> {
    let copy = Mssd::load(&dev.save()).map_err(|e| e.to_string())?;
    copy.recover().map_err(|e| e.to_string())?;
    let durable = o.durable();
    for &lpa in touched {
        let got = copy
            .block_read(Lpa(lpa), Category::Untagged)
            .map_err(|e| e.to_string())?;
        if got != durable[lpa as usize * ps..(lpa as usize + 1) * ps] {
            return Err(format!("page {lpa} differs from the durable oracle"));
        }
    }
    if copy.with_image(|d| d.write_log().region().used_slots()) != 0 {
        return Err("log not empty after recovery".into());
    }
    Ok(())
}
