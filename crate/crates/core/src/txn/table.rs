//! Host transaction table: id allocation, per-range conflict locks and
//! commit/abort bookkeeping on top of the device commands.

use std::collections::{HashMap, HashSet};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use crate::config::CACHELINE;
use crate::device::{Category, Mssd};
use crate::error::{Error, Result};

use super::TxId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxState {
    Active,
    Committed,
    Aborted,
}

/// Unit at which two transactions are considered to touch the same data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConflictGranularity {
    #[default]
    Cacheline,
    Page,
}

/// What a conflicting writer does.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConflictPolicy {
    #[default]
    Block,
    Fail,
}

#[derive(Debug, Clone, Copy)]
pub struct TxManagerConfig {
    pub granularity: ConflictGranularity,
    pub policy: ConflictPolicy,
    /// Upper bound on a blocked wait before the waiter is aborted.
    pub lock_timeout: Duration,
}

impl Default for TxManagerConfig {
    fn default() -> Self {
        Self {
            granularity: ConflictGranularity::Cacheline,
            policy: ConflictPolicy::Block,
            lock_timeout: Duration::from_secs(5),
        }
    }
}

#[derive(Debug)]
struct TxEntry {
    state: TxState,
    locks: HashSet<u64>,
    /// Device id of the segment currently receiving writes.
    segment: TxId,
    segment_bytes: u64,
    segments: u32,
}

#[derive(Debug, Default)]
struct Table {
    next: TxId,
    txs: HashMap<TxId, TxEntry>,
    owners: HashMap<u64, TxId>,
    waits: HashMap<TxId, TxId>,
}

impl Table {
    fn alloc(&mut self) -> TxId {
        let id = self.next;
        self.next = self
            .next
            .checked_add(1)
            .expect("transaction id space exhausted");
        id
    }

    fn release(&mut self, txid: TxId) {
        if let Some(e) = self.txs.get_mut(&txid) {
            for k in e.locks.drain() {
                self.owners.remove(&k);
            }
        }
        self.waits.remove(&txid);
    }

    /// Transactions on the wait-for cycle through `start`, if any.
    fn cycle_from(&self, start: TxId, holder: TxId) -> Option<Vec<TxId>> {
        let mut path = vec![start, holder];
        let mut cur = holder;
        while let Some(&next) = self.waits.get(&cur) {
            if next == start {
                return Some(path);
            }
            if path.contains(&next) {
                return None;
            }
            path.push(next);
            cur = next;
        }
        None
    }
}

/// Thread-safe transaction table bound to one device.
#[derive(Debug)]
pub struct TxManager {
    dev: Arc<Mssd>,
    cfg: TxManagerConfig,
    table: Mutex<Table>,
    cond: Condvar,
}

impl TxManager {
    /// `first_id` is the id handed out by the first `begin`.
    pub fn new(dev: Arc<Mssd>, cfg: TxManagerConfig, first_id: TxId) -> Self {
        Self {
            dev,
            cfg,
            table: Mutex::new(Table {
                next: first_id.max(1),
                ..Table::default()
            }),
            cond: Condvar::new(),
        }
    }

    pub fn device(&self) -> &Arc<Mssd> {
        &self.dev
    }

    fn lock(&self) -> MutexGuard<'_, Table> {
        self.table.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Id the next `begin` will return.
    pub fn next_id(&self) -> TxId {
        self.lock().next
    }

    /// Reserves an id without tracking a transaction (block-only mounts
    /// number their journal records from the same counter).
    pub fn allocate(&self) -> TxId {
        self.lock().alloc()
    }

    pub fn begin(&self) -> TxId {
        let mut t = self.lock();
        let id = t.alloc();
        t.txs.insert(
            id,
            TxEntry {
                state: TxState::Active,
                locks: HashSet::new(),
                segment: id,
                segment_bytes: 0,
                segments: 1,
            },
        );
        id
    }

    pub fn state(&self, txid: TxId) -> Option<TxState> {
        self.lock().txs.get(&txid).map(|e| e.state)
    }

    /// Device ids used so far by `txid`; more than one means it was split.
    pub fn segments(&self, txid: TxId) -> u32 {
        self.lock().txs.get(&txid).map_or(0, |e| e.segments)
    }

    fn keys(&self, addr: u64, len: u64, page_size: u64) -> Vec<u64> {
        let unit = match self.cfg.granularity {
            ConflictGranularity::Cacheline => CACHELINE,
            ConflictGranularity::Page => page_size,
        };
        (addr / unit..=(addr + len - 1) / unit).collect()
    }

    fn acquire(&self, txid: TxId, keys: &[u64]) -> Result<MutexGuard<'_, Table>> {
        let deadline = Instant::now() + self.cfg.lock_timeout;
        let mut t = self.lock();
        loop {
            match t.txs.get(&txid).map(|e| e.state) {
                Some(TxState::Active) => {}
                Some(TxState::Aborted) => return Err(Error::TxAborted(txid)),
                _ => return Err(Error::TxState(txid)),
            }
            let holder = keys
                .iter()
                .filter_map(|k| t.owners.get(k))
                .copied()
                .find(|&h| h != txid);
            let Some(holder) = holder else {
                t.waits.remove(&txid);
                let e = t.txs.get_mut(&txid).expect("checked above");
                e.locks.extend(keys.iter().copied());
                for k in keys {
                    t.owners.insert(*k, txid);
                }
                return Ok(t);
            };
            if self.cfg.policy == ConflictPolicy::Fail {
                return Err(Error::TxConflict {
                    requester: txid,
                    holder,
                });
            }
            if let Some(cycle) = t.cycle_from(txid, holder) {
                let victim = *cycle.iter().max().expect("non-empty cycle");
                self.abort_locked(&mut t, victim);
                self.cond.notify_all();
                if victim == txid {
                    return Err(Error::TxAborted(txid));
                }
                continue;
            }
            t.waits.insert(txid, holder);
            let now = Instant::now();
            if now >= deadline {
                self.abort_locked(&mut t, txid);
                self.cond.notify_all();
                return Err(Error::TxAborted(txid));
            }
            t = self
                .cond
                .wait_timeout(t, deadline - now)
                .unwrap_or_else(|e| e.into_inner())
                .0;
        }
    }

    /// Buffers `data` at `addr` under `txid`. The range must stay within one
    /// page. A transaction whose buffered bytes would outgrow the log is
    /// split: the current segment commits and a fresh device id continues.
    pub fn write(&self, txid: TxId, addr: u64, data: &[u8], cat: Category) -> Result<()> {
        if data.is_empty() {
            return Ok(());
        }
        let page_size = self.dev.config().page_size;
        let keys = self.keys(addr, data.len() as u64, page_size);
        let mut t = self.acquire(txid, &keys)?;
        let limit = self.dev.log_headroom() / 2;
        let slots_bytes =
            crate::write_log::WriteLog::slots_for(addr % page_size, data.len() as u64) * CACHELINE;
        let split = {
            let e = t.txs.get(&txid).expect("active");
            e.segment_bytes > 0 && e.segment_bytes + slots_bytes > limit
        };
        if split {
            let old = t.txs[&txid].segment;
            self.dev.commit(old)?;
            let fresh = t.alloc();
            let e = t.txs.get_mut(&txid).expect("active");
            e.segment = fresh;
            e.segment_bytes = 0;
            e.segments += 1;
        }
        let seg = t.txs[&txid].segment;
        drop(t);
        self.dev.byte_write(addr, data, seg, cat)?;
        let mut t = self.lock();
        if let Some(e) = t.txs.get_mut(&txid) {
            e.segment_bytes += slots_bytes;
        }
        Ok(())
    }

    /// Commits `txid` on the device and releases its locks.
    pub fn commit(&self, txid: TxId) -> Result<()> {
        let mut t = self.lock();
        match t.txs.get(&txid).map(|e| e.state) {
            Some(TxState::Active) => {}
            Some(TxState::Aborted) => return Err(Error::TxAborted(txid)),
            _ => return Err(Error::TxState(txid)),
        }
        let seg = t.txs[&txid].segment;
        self.dev.commit(seg)?;
        t.release(txid);
        t.txs.get_mut(&txid).expect("present").state = TxState::Committed;
        self.cond.notify_all();
        Ok(())
    }

    pub fn abort(&self, txid: TxId) -> Result<()> {
        let mut t = self.lock();
        match t.txs.get(&txid).map(|e| e.state) {
            Some(TxState::Active) => {}
            Some(TxState::Aborted) => return Ok(()),
            _ => return Err(Error::TxState(txid)),
        }
        self.abort_locked(&mut t, txid);
        self.cond.notify_all();
        Ok(())
    }

    fn abort_locked(&self, t: &mut Table, txid: TxId) {
        let seg = t.txs[&txid].segment;
        let _ = self.dev.abort(seg);
        t.release(txid);
        if let Some(e) = t.txs.get_mut(&txid) {
            e.state = TxState::Aborted;
        }
    }

    /// Forgets finished transactions.
    pub fn prune(&self) {
        self.lock().txs.retain(|_, e| e.state == TxState::Active);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{DeviceConfig, KIB, MIB};
    use std::thread;

    fn mgr(policy: ConflictPolicy) -> Arc<TxManager> {
        let dev = Arc::new(
            Mssd::new(DeviceConfig {
                capacity_bytes: 64 * MIB,
                log_region_bytes: 64 * KIB,
                txlog_bytes: 4 * KIB,
                write_buffer_bytes: 64 * KIB,
                ..DeviceConfig::default()
            })
            .unwrap(),
        );
        let cfg = TxManagerConfig {
            policy,
            lock_timeout: Duration::from_secs(2),
            ..TxManagerConfig::default()
        };
        Arc::new(TxManager::new(dev, cfg, 1))
    }

    #[test]
    fn ids_start_at_one_and_increase() {
        let m = mgr(ConflictPolicy::Block);
        assert_eq!(m.begin(), 1);
        assert_eq!(m.begin(), 2);
    }

    #[test]
    fn concurrent_begins_are_unique() {
        let m = mgr(ConflictPolicy::Block);
        let handles: Vec<_> = (0..8)
            .map(|_| {
                let m = m.clone();
                thread::spawn(move || (0..125).map(|_| m.begin()).collect::<Vec<_>>())
            })
            .collect();
        let all: HashSet<TxId> = handles
            .into_iter()
            .flat_map(|h| h.join().unwrap())
            .collect();
        assert_eq!(all.len(), 1000);
    }

    #[test]
    fn disjoint_cachelines_do_not_conflict() {
        let m = mgr(ConflictPolicy::Fail);
        let a = m.begin();
        let b = m.begin();
        m.write(a, 0, &[1; 64], Category::Data).unwrap();
        m.write(b, 64, &[2; 64], Category::Data).unwrap();
        assert!(matches!(
            m.write(b, 10, &[3; 4], Category::Data),
            Err(Error::TxConflict { requester, holder }) if requester == b && holder == a
        ));
        m.commit(a).unwrap();
        m.write(b, 10, &[3; 4], Category::Data).unwrap();
        m.commit(b).unwrap();
        assert!(m.commit(b).is_err());
    }

    #[test]
    fn same_cacheline_blocks_until_commit() {
        let m = mgr(ConflictPolicy::Block);
        let a = m.begin();
        let b = m.begin();
        m.write(a, 0, &[1; 8], Category::Data).unwrap();
        let m2 = m.clone();
        let h = thread::spawn(move || {
            m2.write(b, 8, &[2; 8], Category::Data).unwrap();
            m2.commit(b).unwrap();
        });
        thread::sleep(Duration::from_millis(50));
        assert_eq!(m.state(b), Some(TxState::Active));
        m.commit(a).unwrap();
        h.join().unwrap();
        assert_eq!(m.state(b), Some(TxState::Committed));
    }

    #[test]
    fn deadlock_aborts_youngest() {
        let m = mgr(ConflictPolicy::Block);
        let a = m.begin();
        let b = m.begin();
        m.write(a, 0, &[1; 8], Category::Data).unwrap();
        m.write(b, 4096, &[2; 8], Category::Data).unwrap();
        let m2 = m.clone();
        let h = thread::spawn(move || m2.write(a, 4096, &[3; 8], Category::Data));
        thread::sleep(Duration::from_millis(50));
        assert!(
            matches!(m.write(b, 0, &[4; 8], Category::Data), Err(Error::TxAborted(id)) if id == b)
        );
        h.join().unwrap().unwrap();
        m.commit(a).unwrap();
        assert_eq!(m.state(b), Some(TxState::Aborted));
    }

    #[test]
    fn oversized_transaction_is_split() {
        let m = mgr(ConflictPolicy::Block);
        let a = m.begin();
        for i in 0..600u64 {
            m.write(a, i * 64, &[1; 64], Category::Data).unwrap();
        }
        assert!(m.segments(a) > 1);
        m.commit(a).unwrap();
    }
}
