use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bytefs_core::config::MIB;
use bytefs_core::write_log::skiplist::SkipList;
use bytefs_core::write_log::{ChunkEntry, LogIndex, PARTITION_BYTES};

#[derive(Debug, Clone)]
enum IndexOp {
    Insert(u64, u8),
    RemovePage(u64),
    DropOffset(u64, u8),
    Lookup(u64, Option<(u8, u8)>),
    Range(u64, u64),
}

fn index_op() -> impl Strategy<Value = IndexOp> {
    // 64 MiB of address space: four partitions, pages clustered at the edges.
    let lpa = prop_oneof![0u64..64, 4000u64..4200, 16_000u64..16_384];
    prop_oneof![
        4 => (lpa.clone(), 0u8..64).prop_map(|(l, o)| IndexOp::Insert(l, o)),
        1 => lpa.clone().prop_map(IndexOp::RemovePage),
        1 => (lpa.clone(), 0u8..64).prop_map(|(l, o)| IndexOp::DropOffset(l, o)),
        2 => (lpa.clone(), proptest::option::of((0u8..64, 0u8..64))).prop_map(|(l, r)| IndexOp::Lookup(l, r)),
        1 => (lpa.clone(), 0u64..9000).prop_map(|(l, n)| IndexOp::Range(l, l + n)),
    ]
}

/// Sorted-map oracle: chunk lists kept sorted by offset, oldest first.
fn oracle_insert(m: &mut BTreeMap<u64, Vec<ChunkEntry>>, lpa: u64, e: ChunkEntry) {
    let v = m.entry(lpa).or_default();
    v.push(e);
    v.sort_by_key(|c| c.block_offset);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn index_matches_a_sorted_map(ops in prop::collection::vec(index_op(), 1..400)) {
        let mut idx = LogIndex::new(64 * MIB, 4096);
        let mut oracle: BTreeMap<u64, Vec<ChunkEntry>> = BTreeMap::new();
        for (n, op) in ops.into_iter().enumerate() {
            match op {
                IndexOp::Insert(lpa, off) => {
                    let e = ChunkEntry { block_offset: off, log_offset: n as u32 * 64, length: 64 };
                    idx.insert(lpa, e);
                    oracle_insert(&mut oracle, lpa, e);
                }
                IndexOp::RemovePage(lpa) => {
                    prop_assert_eq!(idx.remove_page(lpa), oracle.remove(&lpa));
                }
                IndexOp::DropOffset(lpa, off) => {
                    let got = idx.retain_page(lpa, |c| c.block_offset != off);
                    let mut want = Vec::new();
                    if let Some(v) = oracle.get_mut(&lpa) {
                        want = v.iter().filter(|c| c.block_offset == off).copied().collect();
                        v.retain(|c| c.block_offset != off);
                        if v.is_empty() {
                            oracle.remove(&lpa);
                        }
                    }
                    prop_assert_eq!(got, want);
                }
                IndexOp::Lookup(lpa, range) => {
                    let want: Vec<ChunkEntry> = oracle
                        .get(&lpa)
                        .map(|v| {
                            v.iter()
                                .filter(|c| range.is_none_or(|(lo, hi)| c.block_offset >= lo && c.block_offset <= hi))
                                .copied()
                                .collect()
                        })
                        .unwrap_or_default();
                    prop_assert_eq!(idx.lookup(lpa, range), want);
                }
                IndexOp::Range(first, last) => {
                    let want: Vec<(u64, Vec<ChunkEntry>)> =
                        oracle.range(first..=last).map(|(k, v)| (*k, v.clone())).collect();
                    prop_assert_eq!(idx.lookup_range(first, last), want);
                }
            }
            prop_assert_eq!(idx.entry_count(), oracle.values().map(|v| v.len()).sum::<usize>());
            prop_assert_eq!(idx.page_count(), oracle.len());
        }
        let all: Vec<(u64, Vec<ChunkEntry>)> = idx.pages().map(|(l, v)| (l, v.clone())).collect();
        let want: Vec<(u64, Vec<ChunkEntry>)> = oracle.into_iter().collect();
        prop_assert_eq!(all, want);
    }
}

#[test]
fn partitions_cover_sixteen_mebibytes() {
    let idx = LogIndex::new(256 * MIB, 4096);
    assert_eq!(idx.partition_count(), 16);
    let per = PARTITION_BYTES / 4096;
    assert_eq!(idx.partition_of(per - 1), 0);
    assert_eq!(idx.partition_of(per), 1);
}

#[test]
fn sorted_offsets_come_back_in_order() {
    let mut idx = LogIndex::new(64 * MIB, 4096);
    assert!(idx.lookup(3, None).is_empty());
    for (i, off) in [5u8, 1, 3].into_iter().enumerate() {
        idx.insert(
            3,
            ChunkEntry {
                block_offset: off,
                log_offset: i as u32 * 64,
                length: 64,
            },
        );
    }
    let offs: Vec<u8> = idx.lookup(3, None).iter().map(|c| c.block_offset).collect();
    assert_eq!(offs, vec![1, 3, 5]);
}

#[test]
fn ten_thousand_skiplist_ops_match_a_sorted_map() {
    let mut sl = SkipList::with_seed(7);
    let mut m = BTreeMap::new();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10_000 {
        let k: u32 = rng.gen_range(0..2000);
        match rng.gen_range(0..3) {
            0 => {
                let v: u64 = rng.gen();
                assert_eq!(sl.insert(k, v), m.insert(k, v));
            }
            1 => assert_eq!(sl.remove(&k), m.remove(&k)),
            _ => assert_eq!(sl.get(&k), m.get(&k)),
        }
        assert_eq!(sl.len(), m.len());
    }
}

#[test]
fn index_memory_grows_linearly_with_entries() {
    let mut sizes = Vec::new();
    for n in [1_000u64, 2_000, 4_000] {
        let mut idx = LogIndex::new(64 * MIB, 4096);
        for i in 0..n {
            idx.insert(
                i,
                ChunkEntry {
                    block_offset: 0,
                    log_offset: 0,
                    length: 64,
                },
            );
        }
        sizes.push(idx.memory_bytes() as f64 / n as f64);
    }
    let (lo, hi) = sizes
        .iter()
        .fold((f64::MAX, 0f64), |(a, b), &s| (a.min(s), b.max(s)));
    assert!(hi / lo < 1.25, "bytes per entry {sizes:?}");
}
