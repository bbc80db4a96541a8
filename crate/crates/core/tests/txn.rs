use std::collections::{BTreeMap, HashSet};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use proptest::prelude::*;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bytefs_core::config::{KIB, MIB};
use bytefs_core::txn::{ConflictPolicy, TxManagerConfig, TxState};
use bytefs_core::{Category, DeviceConfig, Error, Lpa, Mssd, TxManager};

fn device(log: u64, txlog: u64) -> Arc<Mssd> {
    Arc::new(
        Mssd::new(DeviceConfig {
            capacity_bytes: 16 * MIB,
            log_region_bytes: log,
            txlog_bytes: txlog,
            write_buffer_bytes: 64 * KIB,
            ..DeviceConfig::desk()
        })
        .unwrap(),
    )
}

fn failing(dev: &Arc<Mssd>) -> TxManager {
    let cfg = TxManagerConfig {
        policy: ConflictPolicy::Fail,
        ..TxManagerConfig::default()
    };
    TxManager::new(dev.clone(), cfg, 1)
}

fn page(dev: &Mssd, lpa: u64) -> Vec<u8> {
    dev.block_read(Lpa(lpa), Category::Untagged).unwrap()
}

fn recovered(dev: &Mssd) -> Mssd {
    let copy = Mssd::load(&dev.save()).unwrap();
    copy.recover().unwrap();
    copy
}

#[test]
fn ids_are_unique_and_start_at_one() {
    let dev = device(256 * KIB, 4 * KIB);
    let txm = Arc::new(TxManager::new(dev, TxManagerConfig::default(), 1));
    let (a, b) = (txm.begin(), txm.begin());
    assert_eq!((a, b), (1, 2));
    let ids: Vec<u32> = (0..8)
        .map(|_| {
            let t = txm.clone();
            thread::spawn(move || (0..125).map(|_| t.begin()).collect::<Vec<_>>())
        })
        .flat_map(|h| h.join().unwrap())
        .collect();
    assert_eq!(ids.len(), 1000);
    assert_eq!(ids.iter().collect::<HashSet<_>>().len(), 1000);
    assert!(ids.iter().all(|&i| i > 2));
}

#[test]
fn commit_appends_four_bytes_even_when_empty() {
    let dev = device(256 * KIB, 4 * KIB);
    let txm = failing(&dev);
    let t = txm.begin();
    txm.commit(t).unwrap();
    assert_eq!(dev.with_image(|d| d.txlog().bytes()), 4);
    assert_eq!(txm.state(t), Some(TxState::Committed));
    assert!(txm.commit(t).is_err());
    assert!(matches!(
        txm.write(t, 0, &[1], Category::Data),
        Err(Error::TxState(_))
    ));
    assert!(matches!(txm.commit(999), Err(Error::TxState(_))));
}

#[test]
fn conflicting_writers_fail_or_block_until_commit() {
    let dev = device(256 * KIB, 4 * KIB);
    let txm = failing(&dev);
    let (a, b) = (txm.begin(), txm.begin());
    txm.write(a, 0, &[1; 64], Category::Data).unwrap();
    txm.write(b, 64, &[2; 64], Category::Data).unwrap();
    assert!(matches!(
        txm.write(b, 10, &[3; 4], Category::Data),
        Err(Error::TxConflict { .. })
    ));
    txm.commit(a).unwrap();
    txm.write(b, 10, &[3; 4], Category::Data).unwrap();
    txm.commit(b).unwrap();

    let txm = Arc::new(TxManager::new(dev.clone(), TxManagerConfig::default(), 100));
    let (a, b) = (txm.begin(), txm.begin());
    txm.write(a, 8192, &[4; 64], Category::Data).unwrap();
    let committed = Arc::new(AtomicBool::new(false));
    let waiter = {
        let (txm, committed) = (txm.clone(), committed.clone());
        thread::spawn(move || {
            txm.write(b, 8192, &[5; 64], Category::Data).unwrap();
            assert!(
                committed.load(Ordering::SeqCst),
                "second writer ran before the first committed"
            );
            txm.commit(b).unwrap();
        })
    };
    thread::sleep(Duration::from_millis(50));
    committed.store(true, Ordering::SeqCst);
    txm.commit(a).unwrap();
    waiter.join().unwrap();
    assert_eq!(&page(&dev, 2)[..64], &[5; 64]);
}

#[test]
fn uncommitted_writes_vanish_after_a_crash() {
    let dev = device(256 * KIB, 4 * KIB);
    let txm = failing(&dev);
    let a = txm.begin();
    txm.write(a, 4096, &[1; 128], Category::Data).unwrap();
    txm.commit(a).unwrap();
    let b = txm.begin();
    txm.write(b, 4096 + 64, &[2; 64], Category::Data).unwrap();
    txm.write(b, 3 * 4096, &[2; 64], Category::Data).unwrap();
    let r = recovered(&dev);
    let p = page(&r, 1);
    assert_eq!(&p[..128], &[1; 128]);
    assert!(page(&r, 3).iter().all(|&x| x == 0));
    let report = dev.recover().unwrap();
    assert_eq!(report.committed, vec![a]);
    assert_eq!((report.entries_scanned, report.entries_discarded), (3, 2));
}

#[test]
fn commit_order_decides_overlapping_bytes() {
    let dev = device(256 * KIB, 4 * KIB);
    let txm = failing(&dev);
    let (older, younger) = (txm.begin(), txm.begin());
    txm.write(younger, 0, &[2; 64], Category::Data).unwrap();
    txm.commit(younger).unwrap();
    txm.write(older, 0, &[1; 64], Category::Data).unwrap();
    txm.commit(older).unwrap();
    assert_eq!(
        dev.with_image(|d| d.txlog().entries().to_vec()),
        vec![younger, older]
    );
    let r = recovered(&dev);
    assert_eq!(&page(&r, 0)[..64], &[1; 64]);
    dev.clean().unwrap();
    assert_eq!(&page(&dev, 0)[..64], &[1; 64]);
}

#[test]
fn recovery_is_idempotent() {
    let dev = device(256 * KIB, 4 * KIB);
    let txm = failing(&dev);
    for i in 0..20u64 {
        let t = txm.begin();
        txm.write(t, i * 4096 + i, &[i as u8 + 1; 50], Category::Data)
            .unwrap();
        if i % 3 != 0 {
            txm.commit(t).unwrap();
        }
    }
    let once = recovered(&dev);
    let snapshot: Vec<_> = (0..20).map(|l| page(&once, l)).collect();
    let report = once.recover().unwrap();
    assert_eq!((report.entries_scanned, report.pages_written), (0, 0));
    assert_eq!(
        (0..20).map(|l| page(&once, l)).collect::<Vec<_>>(),
        snapshot
    );
    let empty = device(256 * KIB, 4 * KIB);
    let before = empty.save();
    let r = empty.recover().unwrap();
    assert_eq!(
        (r.entries_scanned, r.entries_flushed, r.pages_written),
        (0, 0, 0)
    );
    assert_eq!(empty.save(), before);
}

#[test]
fn oversized_transactions_split_into_atomic_segments() {
    let dev = device(8 * KIB, 4 * KIB);
    let txm = failing(&dev);
    let t = txm.begin();
    for i in 0..200u64 {
        txm.write(t, i * 64, &[7; 64], Category::Data).unwrap();
    }
    txm.commit(t).unwrap();
    assert!(txm.segments(t) > 1);
    for l in 0..4 {
        assert!(page(&dev, l)[..]
            .iter()
            .take(if l < 3 { 4096 } else { 8 * 64 })
            .all(|&b| b == 7));
    }
}

/// Interleaved transactions under cacheline locks with a crash after a
/// random device command: the recovered image must equal the oracle built
/// from the transactions (or split segments) committed by then, applied in
/// commit order.
/// Address and bytes of each write, in issue order.
type Writes = Vec<(u64, Vec<u8>)>;

fn atomicity_case(seed: u64, txs: usize, log: u64) -> Result<(), String> {
    let dev = device(log, 512);
    let txm = failing(&dev);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = dev.command_count();
    let mut open: BTreeMap<u32, Writes> = BTreeMap::new();
    let mut committed: Vec<(u64, Writes)> = Vec::new();
    let mut started = 0;
    while started < txs || !open.is_empty() {
        let r = rng.gen_range(0..10);
        if r < 2 && started < txs && open.len() < 4 {
            open.insert(txm.begin(), Vec::new());
            started += 1;
        } else if r < 8 && !open.is_empty() {
            let t = *open.keys().nth(rng.gen_range(0..open.len())).unwrap();
            let lpa = rng.gen_range(0..16u64);
            let off = rng.gen_range(0..4096u64);
            let len = rng.gen_range(1..=(4096 - off).min(200)) as usize;
            let mut data = vec![0u8; len];
            rng.fill_bytes(&mut data);
            let segs = txm.segments(t);
            match txm.write(t, lpa * 4096 + off, &data, Category::Data) {
                Ok(()) => {
                    let w = open.get_mut(&t).unwrap();
                    // A split commits the writes so far just before this one.
                    if txm.segments(t) > segs {
                        committed.push((dev.command_count() - base - 1, std::mem::take(w)));
                    }
                    w.push((lpa * 4096 + off, data));
                }
                Err(Error::TxConflict { .. }) => {}
                Err(e) => return Err(format!("write: {e}")),
            }
        } else if !open.is_empty() {
            let t = *open.keys().nth(rng.gen_range(0..open.len())).unwrap();
            let writes = open.remove(&t).unwrap();
            if rng.gen_bool(0.8) {
                txm.commit(t).map_err(|e| e.to_string())?;
                committed.push((dev.command_count() - base, writes));
            } else {
                txm.abort(t).map_err(|e| e.to_string())?;
            }
        }
    }
    let total = dev.command_count() - base;
    for _ in 0..8 {
        let k = rng.gen_range(0..=total);
        // Replay the same script to the crash point on a fresh device.
        let crashed = replay_until(seed, txs, log, k)?;
        let r = Mssd::load(&crashed).map_err(|e| e.to_string())?;
        r.recover().map_err(|e| e.to_string())?;
        let mut want = vec![0u8; 16 * 4096];
        for (at, writes) in &committed {
            if *at <= k {
                for (addr, d) in writes {
                    want[*addr as usize..*addr as usize + d.len()].copy_from_slice(d);
                }
            }
        }
        for l in 0..16u64 {
            if page(&r, l) != want[l as usize * 4096..(l as usize + 1) * 4096] {
                return Err(format!("crash after command {k}/{total}: page {l} differs"));
            }
        }
    }
    Ok(())
}

/// Reruns the scripted workload of [`atomicity_case`] with a crash armed
/// after `k` commands and returns the crash image.
fn replay_until(seed: u64, txs: usize, log: u64, k: u64) -> Result<Vec<u8>, String> {
    let dev = device(log, 512);
    let txm = failing(&dev);
    dev.arm_crash(k);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut open: BTreeMap<u32, ()> = BTreeMap::new();
    let mut started = 0;
    while started < txs || !open.is_empty() {
        let r = rng.gen_range(0..10);
        if r < 2 && started < txs && open.len() < 4 {
            open.insert(txm.begin(), ());
            started += 1;
        } else if r < 8 && !open.is_empty() {
            let t = *open.keys().nth(rng.gen_range(0..open.len())).unwrap();
            let lpa = rng.gen_range(0..16u64);
            let off = rng.gen_range(0..4096u64);
            let len = rng.gen_range(1..=(4096 - off).min(200)) as usize;
            let mut data = vec![0u8; len];
            rng.fill_bytes(&mut data);
            match txm.write(t, lpa * 4096 + off, &data, Category::Data) {
                Ok(()) | Err(Error::TxConflict { .. }) => {}
                Err(e) => return Err(format!("write: {e}")),
            }
        } else if !open.is_empty() {
            let t = *open.keys().nth(rng.gen_range(0..open.len())).unwrap();
            open.remove(&t);
            if rng.gen_bool(0.8) {
                txm.commit(t).map_err(|e| e.to_string())?;
            } else {
                txm.abort(t).map_err(|e| e.to_string())?;
            }
        }
    }
    if !dev.crashed() {
        dev.arm_crash(0);
    }
    dev.take_crash_image()
        .ok_or_else(|| "no crash image".into())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn transactions_are_all_or_nothing_across_crashes(seed in any::<u64>(), txs in 1usize..40) {
        let r = atomicity_case(seed, txs, 256 * KIB);
        prop_assert!(r.is_ok(), "{}", r.unwrap_err());
    }

    #[test]
    fn atomicity_holds_with_frequent_cleaning(seed in any::<u64>()) {
        let r = atomicity_case(seed, 60, 8 * KIB);
        prop_assert!(r.is_ok(), "{}", r.unwrap_err());
    }
}
