//! ByteFS on an emulated memory-semantic SSD.
//!
//! The crate is layered bottom-up: [`device`] emulates flash, the FTL and
//! device timing; [`write_log`] is the firmware log serving byte writes;
//! [`txn`] adds transactions and crash recovery; [`fs`] is the file system;
//! [`harness`] drives workloads, crash injection and reports.

pub mod config;
pub mod device;
pub mod error;
pub mod fs;
pub mod harness;
pub mod txn;
pub mod write_log;

pub use config::DeviceConfig;
pub use device::{Category, DeviceImage, Lpa, Mssd, Ppa, TrafficCounters};
pub use error::{Error, Result};
pub use fs::{FileSystem, FsStats, JournalMode, Mode, MountOptions, Stat};
pub use txn::{RecoveryReport, TxId, TxLog, TxManager};
pub use write_log::CleanReport;
