//! Emulated memory-semantic SSD: flash array, page-level FTL, simulated
//! timing and traffic accounting. The firmware write log and transaction log
//! live in the same image so that one lock serializes every command.

mod clock;
mod flash;
mod ftl;
pub mod image;
mod traffic;

use std::sync::{Mutex, MutexGuard};

pub use clock::SimClock;
pub use flash::{batch_elapsed_ns, FlashArray, FlashOpKind, Lpa, Ppa};
pub use ftl::Ftl;
pub use traffic::{Category, CategoryBytes, TrafficCounters};

use crate::config::DeviceConfig;
use crate::error::Result;
use crate::txn::{RecoveryReport, TxId, TxLog};
use crate::write_log::{CleanReport, WriteLog};

/// One request of a flash batch.
#[derive(Debug, Clone)]
pub enum FlashRequest {
    Read(Ppa),
    Write(Ppa, Vec<u8>),
}

/// Background cleaner timeline and totals.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CleanerStats {
    /// Simulated time at which the last cleaning pass finishes.
    pub busy_until_ns: u64,
    pub cleans: u64,
    /// Foreground time spent waiting for a previous pass to finish.
    pub stall_ns: u64,
    pub pages_flushed: u64,
    pub entries_migrated: u64,
    pub flash_reads: u64,
    pub flash_writes: u64,
    pub elapsed_ns: u64,
}

/// Complete device state: everything a crash snapshot preserves.
#[derive(Debug, Clone)]
pub struct DeviceImage {
    pub(crate) cfg: DeviceConfig,
    pub(crate) flash: FlashArray,
    pub(crate) ftl: Ftl,
    pub(crate) clock: SimClock,
    pub(crate) traffic: TrafficCounters,
    pub(crate) log: WriteLog,
    pub(crate) txlog: TxLog,
    pub(crate) cleaner: CleanerStats,
    pub(crate) log_enabled: bool,
}

impl DeviceImage {
    pub fn new(cfg: DeviceConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            flash: FlashArray::new(cfg.page_size, cfg.channel_count, cfg.physical_page_count()),
            ftl: Ftl::new(cfg.page_count(), cfg.physical_page_count()),
            clock: SimClock::default(),
            traffic: TrafficCounters::default(),
            log: WriteLog::new(&cfg),
            txlog: TxLog::new(cfg.txlog_capacity()),
            cleaner: CleanerStats::default(),
            log_enabled: true,
            cfg,
        })
    }

    pub fn config(&self) -> &DeviceConfig {
        &self.cfg
    }

    pub fn now_ns(&self) -> u64 {
        self.clock.now_ns()
    }

    pub fn traffic(&self) -> TrafficCounters {
        self.traffic
    }

    pub fn ftl(&self) -> &Ftl {
        &self.ftl
    }

    pub fn ftl_translate(&mut self, lpa: Lpa) -> Result<Ppa> {
        self.ftl.translate(lpa)
    }

    pub fn flash_read_page(&mut self, ppa: Ppa, cat: Category) -> Result<Vec<u8>> {
        let data = self.flash.read(ppa)?;
        self.clock.advance(self.cfg.flash_read_latency_ns);
        self.traffic.flash_read.add(cat, self.cfg.page_size);
        Ok(data)
    }

    pub fn flash_write_page(&mut self, ppa: Ppa, data: &[u8], cat: Category) -> Result<()> {
        self.flash.write(ppa, data)?;
        self.clock.advance(self.cfg.flash_write_latency_ns);
        self.traffic.flash_write.add(cat, self.cfg.page_size);
        Ok(())
    }

    /// Executes a batch without touching the clock and returns read results
    /// (in request order) with the batch's elapsed time.
    pub(crate) fn run_batch(
        &mut self,
        reqs: Vec<(FlashRequest, Category)>,
    ) -> Result<(Vec<Option<Vec<u8>>>, u64)> {
        let elapsed = batch_elapsed_ns(
            reqs.iter().map(|(r, _)| match r {
                FlashRequest::Read(p) => (p.0, FlashOpKind::Read),
                FlashRequest::Write(p, _) => (p.0, FlashOpKind::Write),
            }),
            self.cfg.channel_count,
            self.cfg.flash_read_latency_ns,
            self.cfg.flash_write_latency_ns,
        );
        let mut out = Vec::with_capacity(reqs.len());
        for (req, cat) in reqs {
            match req {
                FlashRequest::Read(p) => {
                    out.push(Some(self.flash.read(p)?));
                    self.traffic.flash_read.add(cat, self.cfg.page_size);
                }
                FlashRequest::Write(p, data) => {
                    self.flash.write(p, &data)?;
                    self.traffic.flash_write.add(cat, self.cfg.page_size);
                    out.push(None);
                }
            }
        }
        Ok((out, elapsed))
    }

    /// Submits a batch on the foreground timeline.
    pub fn submit_batch(
        &mut self,
        reqs: Vec<(FlashRequest, Category)>,
    ) -> Result<Vec<Option<Vec<u8>>>> {
        let (out, elapsed) = self.run_batch(reqs)?;
        self.clock.advance(elapsed);
        Ok(out)
    }

    pub fn txlog(&self) -> &TxLog {
        &self.txlog
    }

    pub fn write_log(&self) -> &WriteLog {
        &self.log
    }

    pub fn cleaner_stats(&self) -> CleanerStats {
        self.cleaner
    }

    pub fn log_enabled(&self) -> bool {
        self.log_enabled
    }
}

#[derive(Debug)]
struct CrashPoint {
    after_commands: u64,
    image: Option<Vec<u8>>,
}

#[derive(Debug)]
struct Shared {
    image: DeviceImage,
    commands: u64,
    crash: Option<CrashPoint>,
}

/// Thread-safe device handle. Commands are serialized through one queue.
///
/// Mutating commands (byte writes, block writes, commits, aborts, explicit
/// cleaning) are counted; a crash point snapshots the persistent image right
/// after the configured command.
#[derive(Debug)]
pub struct Mssd {
    inner: Mutex<Shared>,
}

impl Mssd {
    pub fn new(cfg: DeviceConfig) -> Result<Self> {
        Ok(Self::from_image(DeviceImage::new(cfg)?))
    }

    pub fn from_image(image: DeviceImage) -> Self {
        Self {
            inner: Mutex::new(Shared {
                image,
                commands: 0,
                crash: None,
            }),
        }
    }

    pub fn load(bytes: &[u8]) -> Result<Self> {
        Ok(Self::from_image(image::decode(bytes)?))
    }

    fn lock(&self) -> MutexGuard<'_, Shared> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn mutate<R>(&self, f: impl FnOnce(&mut DeviceImage) -> Result<R>) -> Result<R> {
        let mut g = self.lock();
        let r = f(&mut g.image);
        g.commands += 1;
        let n = g.commands;
        let snap = matches!(&g.crash, Some(c) if c.image.is_none() && c.after_commands == n);
        if snap {
            let bytes = image::encode(&g.image);
            g.crash.as_mut().unwrap().image = Some(bytes);
        }
        r
    }

    fn read<R>(&self, f: impl FnOnce(&mut DeviceImage) -> Result<R>) -> Result<R> {
        f(&mut self.lock().image)
    }

    pub fn byte_write(&self, addr: u64, data: &[u8], txid: TxId, cat: Category) -> Result<()> {
        self.mutate(|d| d.byte_write(addr, data, txid, cat))
    }

    pub fn byte_read(&self, addr: u64, len: usize, cat: Category) -> Result<Vec<u8>> {
        self.read(|d| d.byte_read(addr, len, cat))
    }

    pub fn block_read(&self, lpa: Lpa, cat: Category) -> Result<Vec<u8>> {
        self.read(|d| d.block_read(lpa, cat))
    }

    pub fn block_write(&self, lpa: Lpa, data: &[u8], cat: Category) -> Result<()> {
        self.mutate(|d| d.block_write(lpa, data, cat))
    }

    pub fn commit(&self, txid: TxId) -> Result<()> {
        self.mutate(|d| d.commit(txid))
    }

    pub fn abort(&self, txid: TxId) -> Result<()> {
        self.mutate(|d| {
            d.abort(txid);
            Ok(())
        })
    }

    pub fn clean(&self) -> Result<CleanReport> {
        self.mutate(|d| d.clean_now())
    }

    pub fn recover(&self) -> Result<RecoveryReport> {
        self.read(|d| d.recover())
    }

    pub fn traffic_snapshot(&self) -> TrafficCounters {
        self.lock().image.traffic
    }

    pub fn now_ns(&self) -> u64 {
        self.lock().image.now_ns()
    }

    pub fn config(&self) -> DeviceConfig {
        self.lock().image.cfg.clone()
    }

    pub fn utilization(&self) -> f64 {
        self.lock().image.utilization()
    }

    pub fn set_log_enabled(&self, on: bool) -> Result<()> {
        self.read(|d| d.set_log_enabled(on))
    }

    /// Highest transaction id present in the TxLog or the write log.
    pub fn max_txid(&self) -> u32 {
        self.lock().image.max_txid()
    }

    /// Bytes the log could still accept if every committed entry were
    /// cleaned out.
    pub fn log_headroom(&self) -> u64 {
        self.lock().image.log_headroom()
    }

    pub fn command_count(&self) -> u64 {
        self.lock().commands
    }

    /// Snapshot the persistent image right after mutating command `n`
    /// (counted from now). `n == 0` snapshots immediately.
    pub fn arm_crash(&self, n: u64) {
        let mut g = self.lock();
        let at = g.commands + n;
        let image = (n == 0).then(|| image::encode(&g.image));
        g.crash = Some(CrashPoint {
            after_commands: at,
            image,
        });
    }

    pub fn crashed(&self) -> bool {
        matches!(&self.lock().crash, Some(c) if c.image.is_some())
    }

    pub fn take_crash_image(&self) -> Option<Vec<u8>> {
        self.lock().crash.take().and_then(|c| c.image)
    }

    pub fn save(&self) -> Vec<u8> {
        image::encode(&self.lock().image)
    }

    pub fn with_image<R>(&self, f: impl FnOnce(&mut DeviceImage) -> R) -> R {
        f(&mut self.lock().image)
    }

    pub fn into_image(self) -> DeviceImage {
        self.inner
            .into_inner()
            .unwrap_or_else(|e| e.into_inner())
            .image
    }
}
