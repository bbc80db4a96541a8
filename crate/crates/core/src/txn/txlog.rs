use std::collections::HashSet;

use crate::device::DeviceImage;
use crate::error::{Error, Result};

use super::TxId;

/// Append-only list of committed transaction ids in durable order.
#[derive(Debug, Clone, Default)]
pub struct TxLog {
    entries: Vec<TxId>,
    set: HashSet<TxId>,
    capacity: usize,
    high_water: TxId,
}

impl TxLog {
    pub fn new(capacity: u64) -> Self {
        Self {
            capacity: capacity as usize,
            ..Self::default()
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() >= self.capacity
    }

    pub fn bytes(&self) -> u64 {
        self.entries.len() as u64 * 4
    }

    pub fn contains(&self, txid: TxId) -> bool {
        self.set.contains(&txid)
    }

    pub fn entries(&self) -> &[TxId] {
        &self.entries
    }

    /// Largest id ever committed; survives clearing.
    pub fn high_water(&self) -> TxId {
        self.high_water
    }

    pub(crate) fn push(&mut self, txid: TxId) {
        self.entries.push(txid);
        self.set.insert(txid);
        self.high_water = self.high_water.max(txid);
    }

    pub(crate) fn clear(&mut self) {
        self.entries.clear();
        self.set.clear();
    }

    pub(crate) fn restore(capacity: u64, entries: Vec<TxId>, high_water: TxId) -> Self {
        let set = entries.iter().copied().collect();
        Self {
            entries,
            set,
            capacity: capacity as usize,
            high_water,
        }
    }
}

impl DeviceImage {
    /// Appends a commit record for `txid`. A full TxLog forces a cleaning
    /// pass first, which empties it.
    pub fn commit(&mut self, txid: TxId) -> Result<()> {
        if txid == 0 {
            return Err(Error::InvalidArgument(
                "transaction id 0 is reserved".into(),
            ));
        }
        if self.txlog.contains(txid) {
            return Err(Error::TxState(txid));
        }
        if self.txlog.is_full() {
            self.clean_blocking()?;
        }
        self.txlog.push(txid);
        self.clock.advance(self.cfg.cacheline_write_latency_ns);
        self.traffic.commits += 1;
        Ok(())
    }

    /// Drops the buffered writes of an uncommitted transaction.
    pub fn abort(&mut self, txid: TxId) -> usize {
        if txid == 0 || self.txlog.contains(txid) {
            return 0;
        }
        self.log.discard_tx(txid)
    }
}
