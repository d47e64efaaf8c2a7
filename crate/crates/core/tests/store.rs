use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use proptest::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use relaxpir::he::{HeContext, HeParams};
use relaxpir::store::{
    generate_dataset, generate_keys, load_sosd, read_sosd_keys, synth_value, write_sosd_keys, DatasetSpec,
    KeyDistribution, KvStore, StoreConfig, StoreError, VersionedStore, NORMAL_MEAN, NORMAL_STDDEV, SENTINEL_KEY,
};

fn ctx() -> Arc<HeContext> {
    HeContext::new(HeParams::with_ring_degree(256).unwrap()).unwrap()
}

/// Largest gap between the empirical CDF of sorted `xs` and `cdf`.
fn ks_statistic(xs: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn normal_keys_pass_a_ks_test() {
    let n = 100_000;
    let keys = generate_keys(&DatasetSpec::new(n, KeyDistribution::Normal, 8, 3)).unwrap();
    assert_eq!(keys.len(), n);
    let xs: Vec<f64> = keys.iter().map(|&k| k as f64).collect();
    let law = Normal::new(NORMAL_MEAN, NORMAL_STDDEV).unwrap();
    let d = ks_statistic(&xs, |x| law.cdf(x));
    // critical value at the 1% level
    assert!(d < 1.63 / (n as f64).sqrt(), "D = {d}");
}

#[test]
fn uniform_keys_pass_a_ks_test() {
    let n = 100_000;
    let keys = generate_keys(&DatasetSpec::new(n, KeyDistribution::Uniform, 8, 8)).unwrap();
    let xs: Vec<f64> = keys.iter().map(|&k| k as f64).collect();
    let top = SENTINEL_KEY as f64;
    let d = ks_statistic(&xs, |x| x / top);
    assert!(d < 1.63 / (n as f64).sqrt(), "D = {d}");
}

#[test]
fn clustered_keys_are_sorted_and_unique() {
    let keys = generate_keys(&DatasetSpec::new(50_000, KeyDistribution::Clustered, 8, 2)).unwrap();
    assert_eq!(keys.len(), 50_000);
    assert!(keys.windows(2).all(|w| w[0] < w[1]));
    assert!(!keys.contains(&SENTINEL_KEY));
}

#[test]
fn sosd_files_load_deduplicated() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("keys.bin");
    write_sosd_keys(&path, &[5, 5, 9]).unwrap();
    assert_eq!(read_sosd_keys(&path).unwrap(), vec![5, 5, 9]);
    let store = load_sosd(&path, 8).unwrap();
    assert_eq!(store.keys(), &[5, 9]);
    assert_eq!(store.get(9).unwrap(), &synth_value(9, 8)[..]);

    write_sosd_keys(&path, &[1, SENTINEL_KEY]).unwrap();
    assert_eq!(load_sosd(&path, 16).unwrap().keys(), &[1]);

    write_sosd_keys(&path, &[]).unwrap();
    assert!(matches!(read_sosd_keys(&path), Err(StoreError::Malformed(_))));

    let mut short = 4u64.to_le_bytes().to_vec();
    short.extend_from_slice(&7u64.to_le_bytes());
    std::fs::write(&path, short).unwrap();
    assert!(matches!(read_sosd_keys(&path), Err(StoreError::Malformed(_))));

    std::fs::write(&path, [1u8, 2]).unwrap();
    assert!(matches!(read_sosd_keys(&path), Err(StoreError::Malformed(_))));
    assert!(matches!(load_sosd(&dir.path().join("missing"), 8), Err(StoreError::Io(_))));
}

#[test]
fn store_construction_checks() {
    assert!(matches!(KvStore::from_keys(vec![], 8), Err(StoreError::Empty)));
    assert!(matches!(KvStore::from_keys(vec![3, 2], 8), Err(StoreError::Unsorted(1))));
    assert!(matches!(KvStore::from_keys(vec![1, SENTINEL_KEY], 8), Err(StoreError::ReservedKey)));
    assert!(matches!(KvStore::new(vec![1], vec![0; 7], 8, 0), Err(StoreError::ValueLength { .. })));
    let s = KvStore::from_keys(vec![4, 8, 15], 16).unwrap();
    assert_eq!(s.pair_bytes(), 24);
    assert_eq!(s.kv_bits(), 192);
    assert_eq!(s.position(8), Ok(1));
    assert_eq!(s.position(9), Err(2));
    let mut out = Vec::new();
    s.write_pair(2, &mut out);
    assert_eq!(&out[..8], &15u64.to_le_bytes());
    assert_eq!(&out[8..], s.value(2));
}

fn ten_keys() -> KvStore {
    KvStore::from_keys((1..=10).map(|i| i * 10).collect(), 8).unwrap()
}

fn layout_cfg() -> StoreConfig {
    StoreConfig { eps_data: 1, eps_model: 1, layout: Some((4, 2)), ..StoreConfig::default() }
}

fn blocks(store: &VersionedStore) -> Vec<Vec<u64>> {
    let v = store.active();
    (0..v.params().pt_count).map(|j| v.encoded().block_copy(j).coeffs().to_vec()).collect()
}

#[test]
fn batch_update_keeps_the_untouched_prefix() {
    let store = VersionedStore::new(ten_keys(), ctx(), layout_cfg()).unwrap();
    let before = blocks(&store);
    assert_eq!(before.len(), 5);
    // 75 lands at position 7; blocks 0 and 1 cover positions 0..6
    let u = store.batch_update_keys(&[(75, synth_value(75, 8))], &[]).unwrap();
    assert_eq!(u.first_changed, 7);
    assert_eq!(u.reused_blocks, 2);
    assert_eq!(u.version, 1);
    let after = blocks(&store);
    assert_eq!(after[..2], before[..2]);
    assert_ne!(after[3], before[3]);

    // the reused blocks match a from-scratch encoding of the merged store
    let fresh_data = ten_keys().merged(&[(75, synth_value(75, 8))], &[]).unwrap();
    let fresh = VersionedStore::new(fresh_data, ctx(), layout_cfg()).unwrap();
    assert_eq!(after, blocks(&fresh));
}

#[test]
fn empty_batch_changes_nothing_but_the_version() {
    let store = VersionedStore::new(ten_keys(), ctx(), layout_cfg()).unwrap();
    let before = blocks(&store);
    let pgm = store.active().pgm_blob().to_vec();
    let u = store.batch_update_keys(&[], &[]).unwrap();
    assert_eq!(u.reused_blocks, 5);
    assert_eq!(blocks(&store), before);
    assert_eq!(store.active().pgm_blob(), &pgm[..]);
    assert_eq!(store.active().id(), 1);
}

#[test]
fn value_update_rewrites_exactly_the_covering_blocks() {
    let data = generate_dataset(&DatasetSpec::new(500, KeyDistribution::Uniform, 8, 4)).unwrap();
    let store = VersionedStore::new(data.clone(), ctx(), StoreConfig { eps_data: 4, ..StoreConfig::default() }).unwrap();
    let p = *store.active().params();
    for pos in [0, 1, p.step, p.step + 1, 250, 499] {
        let before = blocks(&store);
        let value = vec![pos as u8 ^ 0xa5; 8];
        let u = store.update_value(data.key(pos), &value).unwrap();
        assert_eq!(u.position, pos);
        assert_eq!(u.version, 0);
        let want: Vec<usize> = (0..p.pt_count).filter(|&j| p.coverage(j).contains(&pos)).collect();
        assert_eq!(u.blocks, want);
        let after = blocks(&store);
        for j in 0..p.pt_count {
            assert_eq!(after[j] != before[j], want.contains(&j), "pos {pos}, block {j}");
        }
        assert_eq!(store.active().get(data.key(pos)), Some(value));
    }
    assert!(matches!(store.update_value(1, &[0; 8]), Err(StoreError::KeyNotFound(1))));
    assert!(matches!(store.update_value(data.key(3), &[0; 16]), Err(StoreError::ValueLength { .. })));
}

#[test]
fn versions_increase_and_retire() {
    let store = VersionedStore::new(ten_keys(), ctx(), layout_cfg()).unwrap();
    let reader = store.open_session();
    let mut last = store.active().id();
    for k in [11u64, 12, 13] {
        let u = store.batch_update_keys(&[(k, synth_value(k, 8))], &[]).unwrap();
        assert_eq!(u.version, last + 1);
        last = u.version;
    }
    // the idle session still pins every replaced version
    assert_eq!(store.retired_versions(), vec![0, 1, 2]);
    assert_eq!(store.version(0).unwrap().len(), 10);
    store.acknowledge(reader, 2);
    assert_eq!(store.retired_versions(), vec![2]);
    store.close_session(reader);
    assert!(store.retired_versions().is_empty());
    assert!(store.version(1).is_none());
    assert_eq!(store.version(3).unwrap().len(), 13);
}

#[test]
fn retired_versions_time_out() {
    let cfg = StoreConfig { retire_after: Duration::from_millis(20), ..layout_cfg() };
    let store = VersionedStore::new(ten_keys(), ctx(), cfg).unwrap();
    let _reader = store.open_session();
    store.batch_update_keys(&[], &[20]).unwrap();
    assert!(store.version(0).is_some());
    std::thread::sleep(Duration::from_millis(40));
    assert!(store.version(0).is_none());
}

#[test]
fn rejected_batches_leave_the_store_alone() {
    let store = VersionedStore::new(ten_keys(), ctx(), layout_cfg()).unwrap();
    assert!(store.batch_update_keys(&[(20, synth_value(20, 8))], &[]).is_err());
    assert!(store.batch_update_keys(&[], &[21]).is_err());
    assert!(store.batch_update_keys(&[(SENTINEL_KEY, synth_value(1, 8))], &[]).is_err());
    assert_eq!(store.active().id(), 0);
    assert_eq!(store.active().len(), 10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn merge_matches_a_map(
        base in prop::collection::btree_set(0u64..1000, 1..60),
        extra in prop::collection::btree_set(0u64..1000, 0..30),
        drop_mask in any::<u64>(),
    ) {
        let base: Vec<u64> = base.into_iter().collect();
        let store = KvStore::from_keys(base.clone(), 8).unwrap();
        let inserts: Vec<(u64, Vec<u8>)> =
            extra.iter().filter(|k| !base.contains(k)).map(|&k| (k, vec![k as u8; 8])).collect();
        let deletes: Vec<u64> =
            base.iter().enumerate().filter(|(i, _)| drop_mask >> (i % 64) & 1 == 1).map(|(_, &k)| k).collect();
        let mut oracle: BTreeMap<u64, Vec<u8>> = base.iter().map(|&k| (k, synth_value(k, 8))).collect();
        for (k, v) in &inserts {
            oracle.insert(*k, v.clone());
        }
        for k in &deletes {
            oracle.remove(k);
        }
        let merged = store.merged(&inserts, &deletes);
        if oracle.is_empty() {
            prop_assert!(merged.is_err());
        } else {
            let merged = merged.unwrap();
            prop_assert_eq!(merged.keys(), &oracle.keys().copied().collect::<Vec<_>>()[..]);
            for (k, v) in &oracle {
                prop_assert_eq!(merged.get(*k), Some(&v[..]));
            }
        }
    }
}

#[test]
fn appending_past_the_end_refreshes_the_padded_tail() {
    let store = VersionedStore::new(ten_keys(), ctx(), layout_cfg()).unwrap();
    let u = store.batch_update_keys(&[(500, synth_value(500, 8))], &[]).unwrap();
    assert_eq!(u.first_changed, 10);
    let fresh_data = ten_keys().merged(&[(500, synth_value(500, 8))], &[]).unwrap();
    let fresh = VersionedStore::new(fresh_data, ctx(), layout_cfg()).unwrap();
    assert_eq!(blocks(&store), blocks(&fresh));
}
