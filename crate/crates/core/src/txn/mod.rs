//! Transaction identity, the firmware commit log, crash recovery and the
//! host-side transaction table with conflict locks.

mod recover;
mod table;
mod txlog;

pub use recover::RecoveryReport;
pub use table::{ConflictGranularity, ConflictPolicy, TxManager, TxManagerConfig, TxState};
pub use txlog::TxLog;

/// Transaction identifier. Zero marks non-transactional writes.
pub type TxId = u32;
