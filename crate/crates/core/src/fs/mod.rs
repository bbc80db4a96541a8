//! ByteFS: metadata on the byte interface, data through a host page cache
//! with per-page interface selection, transactions for atomicity.

pub mod cache;
mod fsck;
mod inner;
pub mod journal;
pub mod layout;
pub mod model;
mod ops;

use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex, MutexGuard};

pub use cache::{select_direct, select_interface, xor_dirty_lines, Interface};
pub use fsck::fsck;
pub use layout::{FileKind, MkfsParams, Superblock, ROOT_INO};
pub use model::ModelFs;

use crate::config::GIB;
use crate::device::Mssd;
use crate::error::{Error, Result};
use crate::txn::{ConflictGranularity, RecoveryReport, TxManagerConfig};
use inner::Inner;

/// Ablation variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Mode {
    /// Block interface only, metadata journaled in whole blocks, no log.
    BlockOnly = 0,
    /// Metadata on the byte path, data on the block path, no device log.
    Dual = 1,
    /// `Dual` with the firmware write log enabled.
    DualLog = 2,
    /// Byte/block selection for data as well, with the log.
    Full = 3,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::BlockOnly, Mode::Dual, Mode::DualLog, Mode::Full];

    pub fn name(self) -> &'static str {
        match self {
            Mode::BlockOnly => "block_only",
            Mode::Dual => "dual",
            Mode::DualLog => "dual_log",
            Mode::Full => "full",
        }
    }

    pub fn from_u8(v: u8) -> Option<Mode> {
        Mode::ALL.into_iter().find(|m| *m as u8 == v)
    }

    pub fn log_enabled(self) -> bool {
        matches!(self, Mode::DualLog | Mode::Full)
    }

    pub fn byte_metadata(self) -> bool {
        self != Mode::BlockOnly
    }

    pub fn byte_data(self) -> bool {
        self == Mode::Full
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Mode> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown mode {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[repr(u8)]
pub enum JournalMode {
    /// Metadata consistency only; data reaches its home location before
    /// the metadata commit.
    #[default]
    Ordered = 0,
    /// Block-path data goes through the journal as well.
    Data = 1,
}

impl FromStr for JournalMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<JournalMode> {
        match s {
            "ordered" => Ok(JournalMode::Ordered),
            "data" => Ok(JournalMode::Data),
            _ => Err(Error::InvalidArgument(format!(
                "unknown journal mode {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MountOptions {
    pub mode: Mode,
    pub journal: JournalMode,
    /// Modeled host page cache size.
    pub cache_bytes: u64,
    pub tx: TxManagerConfig,
}

impl Default for MountOptions {
    fn default() -> Self {
        Self {
            mode: Mode::Full,
            journal: JournalMode::Ordered,
            cache_bytes: 8 * GIB,
            tx: TxManagerConfig::default(),
        }
    }
}

impl MountOptions {
    pub fn with_mode(mode: Mode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }

    pub fn conflict_granularity(mut self, g: ConflictGranularity) -> Self {
        self.tx.granularity = g;
        self
    }
}

/// Attribute snapshot of one inode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stat {
    pub ino: u32,
    pub kind: FileKind,
    pub size: u64,
    pub links: u32,
    pub mtime: u64,
    pub blocks: u64,
}

/// A commit that became durable, with the device command count at which
/// it did. Crash oracles replay these.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitEvent {
    pub cmd: u64,
    pub txid: u32,
    pub namespace: bool,
    pub files: Vec<u32>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FsStats {
    pub commits: u64,
    pub writeback_byte_pages: u64,
    pub writeback_block_pages: u64,
    pub direct_byte_ops: u64,
    pub direct_block_ops: u64,
    pub journal_records: u64,
    pub journal_replayed: u64,
    pub dup_pages_created: u64,
    pub evictions: u64,
}

/// Outcome of device plus journal recovery.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FsRecovery {
    pub device: RecoveryReport,
    pub journal_records: u64,
    pub journal_replayed: u64,
}

/// A mounted file system. All operations serialize on one lock, which
/// trivially gives per-inode mutual exclusion.
#[derive(Debug)]
pub struct FileSystem {
    inner: Mutex<Inner>,
}

impl FileSystem {
    /// Formats `dev` for `mode`.
    pub fn mkfs(
        dev: &Arc<Mssd>,
        mode: Mode,
        journal: JournalMode,
        params: MkfsParams,
    ) -> Result<Superblock> {
        inner::mkfs(dev, mode, journal, params)
    }

    pub fn mount(dev: Arc<Mssd>, opts: MountOptions) -> Result<FileSystem> {
        Ok(FileSystem {
            inner: Mutex::new(Inner::mount(dev, opts)?),
        })
    }

    /// Device recovery followed by journal replay. Run before `mount`
    /// after a crash.
    pub fn recover(dev: &Arc<Mssd>) -> Result<FsRecovery> {
        inner::recover(dev)
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn device(&self) -> Arc<Mssd> {
        self.lock().dev.clone()
    }

    pub fn options(&self) -> MountOptions {
        self.lock().opts
    }

    /// Modes are fixed at mount; asking for a different one is a state error.
    pub fn set_mode(&self, mode: Mode) -> Result<()> {
        let cur = self.lock().opts.mode;
        if cur != mode {
            return Err(Error::State(format!(
                "mounted as {cur}; remount to change to {mode}"
            )));
        }
        Ok(())
    }

    pub fn superblock(&self) -> Superblock {
        self.lock().sb.clone()
    }

    pub fn stats(&self) -> FsStats {
        let g = self.lock();
        FsStats {
            dup_pages_created: g.cache.dup_created,
            ..g.stats
        }
    }

    pub fn take_events(&self) -> Vec<CommitEvent> {
        std::mem::take(&mut self.lock().events)
    }

    pub fn lookup(&self, path: &str) -> Result<u32> {
        let mut g = self.lock();
        g.lookup(path)
    }

    pub fn stat(&self, path: &str) -> Result<Stat> {
        let mut g = self.lock();
        let ino = g.lookup(path)?;
        g.stat(ino)
    }

    pub fn readdir(&self, path: &str) -> Result<Vec<(String, u32, FileKind)>> {
        let mut g = self.lock();
        let ino = g.lookup(path)?;
        g.readdir(ino)
    }

    pub fn create(&self, path: &str) -> Result<u32> {
        self.lock().op(|g| g.create_node(path, FileKind::File))
    }

    pub fn mkdir(&self, path: &str) -> Result<u32> {
        self.lock().op(|g| g.create_node(path, FileKind::Dir))
    }

    pub fn unlink(&self, path: &str) -> Result<()> {
        self.lock().op(|g| g.remove_node(path, FileKind::File))
    }

    pub fn rmdir(&self, path: &str) -> Result<()> {
        self.lock().op(|g| g.remove_node(path, FileKind::Dir))
    }

    pub fn rename(&self, from: &str, to: &str) -> Result<()> {
        self.lock().op(|g| g.rename(from, to))
    }

    /// Buffered write; absorbed by the page cache.
    pub fn write(&self, ino: u32, offset: u64, data: &[u8]) -> Result<()> {
        self.lock().op(|g| g.write(ino, offset, data))
    }

    /// Buffered read; short at end of file.
    pub fn read(&self, ino: u32, offset: u64, len: usize) -> Result<Vec<u8>> {
        self.lock().op(|g| g.read(ino, offset, len))
    }

    pub fn fsync(&self, ino: u32) -> Result<()> {
        self.lock().op(|g| g.sync_file(ino, false))
    }

    pub fn fdatasync(&self, ino: u32) -> Result<()> {
        self.lock().op(|g| g.sync_file(ino, true))
    }

    /// Direct write, durable on return. Returns the interface used.
    pub fn direct_write(&self, ino: u32, offset: u64, data: &[u8]) -> Result<Interface> {
        self.lock().op(|g| g.direct_write(ino, offset, data))
    }

    pub fn direct_read(&self, ino: u32, offset: u64, len: usize) -> Result<(Vec<u8>, Interface)> {
        self.lock().op(|g| g.direct_read(ino, offset, len))
    }

    /// Writes back every dirty file.
    pub fn sync(&self) -> Result<()> {
        self.lock().sync_all()
    }

    /// Syncs and records the last transaction id in the superblock.
    pub fn unmount(self) -> Result<()> {
        self.lock().unmount()
    }

    /// Interface chosen for each page of the most recent writeback.
    pub fn last_writeback(&self) -> Vec<(u64, Interface)> {
        self.lock().last_writeback.clone()
    }

    pub fn cached_pages(&self) -> (usize, usize) {
        let g = self.lock();
        (g.cache.len(), g.cache.dup_count())
    }
}
