//! `BFSM` device image: magic, format version, configuration block, then
//! checksummed sections. Little endian throughout.

use crate::config::{DeviceConfig, CACHELINE};
use crate::error::{Error, Result};
use crate::txn::TxLog;
use crate::write_log::{ChunkEntry, WriteLog, SIDECAR_BYTES};

use super::flash::Ppa;
use super::{CleanerStats, DeviceImage, Ftl, SimClock, TrafficCounters};

pub const MAGIC: &[u8; 4] = b"BFSM";
pub const VERSION: u32 = 1;

pub const SECTION_FLASH: u32 = 1;
pub const SECTION_FTL: u32 = 2;
pub const SECTION_LOG_REGION: u32 = 3;
pub const SECTION_LOG_INDEX: u32 = 4;
pub const SECTION_TXLOG: u32 = 5;
pub const SECTION_CLOCK: u32 = 6;

#[derive(Default)]
struct W(Vec<u8>);

impl W {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn bytes(&mut self, b: &[u8]) {
        self.0.extend_from_slice(b);
    }
}

struct R<'a> {
    buf: &'a [u8],
    pos: usize,
    section: u32,
}

impl<'a> R<'a> {
    fn new(buf: &'a [u8], section: u32) -> Self {
        Self {
            buf,
            pos: 0,
            section,
        }
    }
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::RecoveryFailed {
                section: self.section,
                reason: "truncated".into(),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn bad(&self, reason: &str) -> Error {
        Error::RecoveryFailed {
            section: self.section,
            reason: reason.into(),
        }
    }
}

fn counters(w: &mut W, c: &TrafficCounters) {
    for cb in [
        &c.host_to_ssd,
        &c.ssd_to_host,
        &c.flash_read,
        &c.flash_write,
    ] {
        for cat in super::Category::ALL {
            w.u64(cb.get(cat));
        }
    }
    for v in [
        c.byte_write_ops,
        c.byte_read_ops,
        c.block_write_ops,
        c.block_read_ops,
        c.commits,
    ] {
        w.u64(v);
    }
}

fn read_counters(r: &mut R) -> Result<TrafficCounters> {
    let mut c = TrafficCounters::default();
    for cb in [
        &mut c.host_to_ssd,
        &mut c.ssd_to_host,
        &mut c.flash_read,
        &mut c.flash_write,
    ] {
        for cat in super::Category::ALL {
            cb.add(cat, r.u64()?);
        }
    }
    c.byte_write_ops = r.u64()?;
    c.byte_read_ops = r.u64()?;
    c.block_write_ops = r.u64()?;
    c.block_read_ops = r.u64()?;
    c.commits = r.u64()?;
    Ok(c)
}

pub fn encode(d: &DeviceImage) -> Vec<u8> {
    let mut out = W::default();
    out.bytes(MAGIC);
    out.u32(VERSION);
    let c = &d.cfg;
    for v in [
        c.capacity_bytes,
        c.page_size,
        c.channel_count,
        c.flash_read_latency_ns,
        c.flash_write_latency_ns,
        c.cacheline_read_latency_ns,
        c.cacheline_write_latency_ns,
        c.log_region_bytes,
        c.txlog_bytes,
        c.write_buffer_bytes,
        c.clean_threshold.to_bits(),
    ] {
        out.u64(v);
    }

    let mut s = W::default();
    let mut pages: Vec<(u64, &[u8])> = d.flash.stored_pages().collect();
    pages.sort_unstable_by_key(|p| p.0);
    s.u64(pages.len() as u64);
    for (ppa, data) in pages {
        s.u64(ppa);
        s.bytes(data);
    }
    section(&mut out, SECTION_FLASH, s.0);

    let mut s = W::default();
    let (next_fresh, free) = d.ftl.raw_parts();
    s.u64(next_fresh);
    s.u64(free.len() as u64);
    free.iter().for_each(|&f| s.u32(f));
    let entries: Vec<(u64, u64)> = d.ftl.entries().collect();
    s.u64(entries.len() as u64);
    for (l, p) in entries {
        s.u64(l);
        s.u64(p);
    }
    section(&mut out, SECTION_FTL, s.0);

    let mut s = W::default();
    let region = &d.log.region;
    s.u64(region.head());
    s.u64(region.used_slots());
    s.u32(region.generation());
    for slot in region.occupied() {
        s.bytes(region.payload(slot));
        s.bytes(region.raw_sidecar(slot));
    }
    section(&mut out, SECTION_LOG_REGION, s.0);

    let mut s = W::default();
    s.u64(d.log.residual);
    s.u32(d.log.max_txid);
    s.u64(d.log.index.entry_count() as u64);
    for (lpa, chunks) in d.log.index.pages() {
        for c in chunks {
            s.u64(lpa);
            s.u8(c.block_offset);
            s.u32(c.log_offset);
            s.u32(c.length);
        }
    }
    section(&mut out, SECTION_LOG_INDEX, s.0);

    let mut s = W::default();
    s.u32(d.txlog.high_water());
    s.u64(d.txlog.len() as u64);
    d.txlog.entries().iter().for_each(|&t| s.u32(t));
    section(&mut out, SECTION_TXLOG, s.0);

    let mut s = W::default();
    s.u64(d.clock.now_ns());
    s.u8(d.log_enabled as u8);
    let k = &d.cleaner;
    for v in [
        k.busy_until_ns,
        k.cleans,
        k.stall_ns,
        k.pages_flushed,
        k.entries_migrated,
        k.flash_reads,
        k.flash_writes,
        k.elapsed_ns,
    ] {
        s.u64(v);
    }
    counters(&mut s, &d.traffic);
    section(&mut out, SECTION_CLOCK, s.0);
    out.0
}

fn section(out: &mut W, id: u32, body: Vec<u8>) {
    out.u32(id);
    out.u64(body.len() as u64);
    out.u32(crc32fast::hash(&body));
    out.bytes(&body);
}

pub fn decode(bytes: &[u8]) -> Result<DeviceImage> {
    let corrupt = |m: &str| Error::CorruptImage(m.into());
    if bytes.len() < 8 + 11 * 8 || &bytes[..4] != MAGIC {
        return Err(corrupt("missing BFSM magic"));
    }
    let mut r = R::new(bytes, 0);
    r.take(4)?;
    let version = r.u32()?;
    if version != VERSION {
        return Err(corrupt(&format!("unsupported version {version}")));
    }
    let mut v = [0u64; 11];
    for x in &mut v {
        *x = r.u64()?;
    }
    let cfg = DeviceConfig {
        capacity_bytes: v[0],
        page_size: v[1],
        channel_count: v[2],
        flash_read_latency_ns: v[3],
        flash_write_latency_ns: v[4],
        cacheline_read_latency_ns: v[5],
        cacheline_write_latency_ns: v[6],
        log_region_bytes: v[7],
        txlog_bytes: v[8],
        write_buffer_bytes: v[9],
        clean_threshold: f64::from_bits(v[10]),
    };
    cfg.validate()
        .map_err(|e| corrupt(&format!("config block: {e}")))?;
    let mut d = DeviceImage::new(cfg.clone())?;

    let mut sections: Vec<(u32, &[u8])> = Vec::new();
    while r.pos < bytes.len() {
        let id = r.u32()?;
        let len = r.u64()? as usize;
        let crc = r.u32()?;
        let body = r.take(len).map_err(|_| Error::RecoveryFailed {
            section: id,
            reason: "truncated".into(),
        })?;
        if crc32fast::hash(body) != crc {
            return Err(Error::RecoveryFailed {
                section: id,
                reason: "checksum mismatch".into(),
            });
        }
        sections.push((id, body));
    }
    let get = |id: u32| -> Result<R> {
        sections
            .iter()
            .find(|(i, _)| *i == id)
            .map(|(_, b)| R::new(b, id))
            .ok_or(Error::RecoveryFailed {
                section: id,
                reason: "section missing".into(),
            })
    };
    let ps = cfg.page_size as usize;

    let mut s = get(SECTION_FLASH)?;
    for _ in 0..s.u64()? {
        let ppa = s.u64()?;
        let data = s.take(ps)?;
        d.flash
            .write(Ppa(ppa), data)
            .map_err(|_| s.bad("page out of range"))?;
    }

    let mut s = get(SECTION_FTL)?;
    let next_fresh = s.u64()?;
    let nfree = s.u64()? as usize;
    let mut free = Vec::with_capacity(nfree);
    for _ in 0..nfree {
        free.push(s.u32()?);
    }
    let n = s.u64()? as usize;
    let mut entries = Vec::with_capacity(n);
    for _ in 0..n {
        entries.push((s.u64()?, s.u64()?));
    }
    d.ftl = Ftl::restore(
        cfg.page_count(),
        cfg.physical_page_count(),
        next_fresh,
        free,
        &entries,
    )
    .map_err(|e| s.bad(&e.to_string()))?;

    let mut s = get(SECTION_LOG_REGION)?;
    let head = s.u64()?;
    let used = s.u64()?;
    let generation = s.u32()?;
    let slots = cfg.log_slots();
    if head >= slots.max(1) || used > slots {
        return Err(s.bad("cursor out of range"));
    }
    let mut log = WriteLog::new(&cfg);
    for i in 0..used {
        let payload = s.take(CACHELINE as usize)?;
        let side = s.take(SIDECAR_BYTES)?;
        log.region.write_raw((head + i) % slots, payload, side);
    }
    log.region.restore_cursor(head, used, generation);

    let mut s = get(SECTION_LOG_INDEX)?;
    log.residual = s.u64()?;
    log.max_txid = s.u32()?;
    for _ in 0..s.u64()? {
        let lpa = s.u64()?;
        let entry = ChunkEntry {
            block_offset: s.u8()?,
            log_offset: s.u32()?,
            length: s.u32()?,
        };
        if lpa >= cfg.page_count() || entry.log_offset as u64 >= cfg.log_region_bytes {
            return Err(s.bad("chunk entry out of range"));
        }
        log.index.insert(lpa, entry);
    }
    d.log = log;

    let mut s = get(SECTION_TXLOG)?;
    let high = s.u32()?;
    let n = s.u64()? as usize;
    let mut ids = Vec::with_capacity(n);
    for _ in 0..n {
        ids.push(s.u32()?);
    }
    d.txlog = TxLog::restore(cfg.txlog_capacity(), ids, high);

    let mut s = get(SECTION_CLOCK)?;
    d.clock = SimClock::restore(s.u64()?);
    d.log_enabled = s.u8()? != 0;
    d.cleaner = CleanerStats {
        busy_until_ns: s.u64()?,
        cleans: s.u64()?,
        stall_ns: s.u64()?,
        pages_flushed: s.u64()?,
        entries_migrated: s.u64()?,
        flash_reads: s.u64()?,
        flash_writes: s.u64()?,
        elapsed_ns: s.u64()?,
    };
    d.traffic = read_counters(&mut s)?;
    Ok(d)
}
