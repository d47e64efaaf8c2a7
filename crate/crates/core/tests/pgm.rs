use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use relaxpir::pgm::{btree_index_bytes, LinearSegment, PgmError, PgmIndex, PredictedRange};
use relaxpir::store::{generate_keys, DatasetSpec, KeyDistribution};

fn seg(min_key: u64, slope: f64, intercept: f64) -> LinearSegment {
    LinearSegment { min_key, slope, intercept }
}

/// Three levels over keys 0, 10, ..., 1990, with the middle predecessor
/// search landing on the second segment and then the fourth leaf.
fn three_level_example() -> PgmIndex {
    let top = vec![seg(0, 0.0, 2.0)];
    let mid = vec![seg(0, 0.0, 0.0), seg(350, 0.0, 2.0), seg(1650, 0.0, 5.0), seg(1990, 0.0, 7.0)];
    let leaf = vec![
        seg(0, 0.1, 0.0),
        seg(200, 0.1, 20.0),
        seg(350, 0.1, 35.0),
        seg(600, 0.1, 61.0),
        seg(1200, 0.1, 120.0),
        seg(1650, 0.1, 165.0),
        seg(1800, 0.1, 180.0),
        seg(1990, 0.1, 199.0),
    ];
    PgmIndex::from_levels(2, 1, 200, vec![top, mid, leaf]).unwrap()
}

#[test]
fn hand_built_traversal() {
    let idx = three_level_example();
    let (r, misses) = idx.predict_traced(630);
    assert_eq!(misses, 0);
    assert_eq!(r, PredictedRange { y_hat: 64, lo: 62, hi: 66 });
    assert_eq!(r.len(), 5);
    // the stored key at rank 63 lies inside the window
    assert!(r.contains(63));
}

fn check_bound(keys: &[u64], idx: &PgmIndex) {
    let eps = idx.eps_data() as usize;
    for (rank, &k) in keys.iter().enumerate() {
        let (r, misses) = idx.predict_traced(k);
        assert_eq!(misses, 0, "internal window missed for key {k}");
        assert!(r.y_hat.abs_diff(rank) <= eps, "key {k}: rank {rank}, predicted {}", r.y_hat);
        assert!(r.contains(rank));
        assert!(r.hi < keys.len());
    }
}

#[test]
fn every_key_is_within_the_bound() {
    for dist in [KeyDistribution::Uniform, KeyDistribution::Normal, KeyDistribution::Clustered] {
        let keys = generate_keys(&DatasetSpec::new(100_000, dist, 8, 11)).unwrap();
        let idx = PgmIndex::build(&keys, 64, 4).unwrap();
        check_bound(&keys, &idx);
    }
}

#[test]
fn absent_keys_land_near_their_insertion_point() {
    let keys = generate_keys(&DatasetSpec::new(50_000, KeyDistribution::Uniform, 8, 4)).unwrap();
    let idx = PgmIndex::build(&keys, 32, 4).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    for _ in 0..20_000 {
        let k: u64 = rng.gen_range(keys[0]..*keys.last().unwrap());
        let ins = keys.partition_point(|&x| x < k);
        if keys.get(ins) == Some(&k) {
            continue;
        }
        let r = idx.predict(k);
        // the predecessor and successor bracket the key, so one of their
        // ranks sits inside the window's one-step neighbourhood
        assert!(r.lo <= ins && ins <= r.hi + 1, "k {k}, ins {ins}, {r:?}");
    }
    assert_eq!(idx.predict(0).lo, 0);
    assert_eq!(idx.predict(u64::MAX - 1).hi, keys.len() - 1);
}

#[test]
fn million_uniform_keys_fit_in_a_tenth_of_a_mebibyte() {
    let keys = generate_keys(&DatasetSpec::new(1 << 20, KeyDistribution::Uniform, 8, 1)).unwrap();
    let idx = PgmIndex::build(&keys, 64, 4).unwrap();
    let mib = idx.size_bytes() as f64 / (1u64 << 20) as f64;
    assert!(mib <= 0.10, "{mib} MiB");
    assert_eq!(idx.to_bytes().len(), idx.size_bytes());
    assert!(btree_index_bytes(1 << 20, 256) > idx.size_bytes());
}

#[test]
fn serialization_round_trips_and_rejects_damage() {
    let keys = generate_keys(&DatasetSpec::new(20_000, KeyDistribution::Clustered, 8, 2)).unwrap();
    let idx = PgmIndex::build(&keys, 16, 2).unwrap();
    let bytes = idx.to_bytes();
    assert_eq!(PgmIndex::from_bytes(&bytes).unwrap(), idx);

    let mut bad = bytes.clone();
    bad[0] ^= 1;
    assert_eq!(PgmIndex::from_bytes(&bad), Err(PgmError::BadMagic));
    let mut bad = bytes.clone();
    bad[4] = 9;
    assert_eq!(PgmIndex::from_bytes(&bad), Err(PgmError::Version(9)));
    assert_eq!(PgmIndex::from_bytes(&bytes[..bytes.len() - 1]), Err(PgmError::Truncated));
    let mut long = bytes.clone();
    long.push(0);
    assert!(matches!(PgmIndex::from_bytes(&long), Err(PgmError::Corrupt(_))));
}

#[test]
fn construction_is_deterministic() {
    let keys = generate_keys(&DatasetSpec::new(30_000, KeyDistribution::Normal, 8, 6)).unwrap();
    let a = PgmIndex::build(&keys, 64, 4).unwrap();
    let b = PgmIndex::build(&keys, 64, 4).unwrap();
    assert_eq!(a.to_bytes(), b.to_bytes());
}

#[test]
fn bad_inputs_are_rejected() {
    assert_eq!(PgmIndex::build(&[], 4, 4), Err(PgmError::Empty));
    assert_eq!(PgmIndex::build(&[1, 2], 0, 4), Err(PgmError::BadEpsilon));
    assert_eq!(PgmIndex::build(&[1, 3, 3], 4, 4), Err(PgmError::Unsorted(2)));
    let two_tops = vec![vec![seg(0, 0.0, 0.0), seg(5, 0.0, 1.0)]];
    assert!(matches!(PgmIndex::from_levels(4, 4, 10, two_tops), Err(PgmError::Corrupt(_))));
    let nan = vec![vec![seg(0, f64::NAN, 0.0)]];
    assert!(matches!(PgmIndex::from_levels(4, 4, 10, nan), Err(PgmError::Corrupt(_))));
}

#[test]
fn single_key_and_tiny_sets() {
    let idx = PgmIndex::build(&[42], 64, 4).unwrap();
    assert_eq!(idx.predict(42), PredictedRange { y_hat: 0, lo: 0, hi: 0 });
    assert_eq!(idx.levels().len(), 1);
    let keys = [3, 5, 9];
    let idx = PgmIndex::build(&keys, 1, 1).unwrap();
    check_bound(&keys, &idx);
}

#[test]
fn btree_size_counts_internal_entries() {
    // 2^20 keys, fan-out 256: 4096 leaves, then 16 nodes, then the root
    assert_eq!(btree_index_bytes(1 << 20, 256), (4096 + 16) * 16);
    assert_eq!(btree_index_bytes(100, 256), 0);
}

fn sorted_keys() -> impl Strategy<Value = Vec<u64>> {
    prop::collection::btree_set(0u64..u64::MAX - 1, 1..2000).prop_map(|s| s.into_iter().collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn bound_holds_for_random_sets(keys in sorted_keys(), eps_data in 1u32..80, eps_model in 1u32..8) {
        let idx = PgmIndex::build(&keys, eps_data, eps_model).unwrap();
        for (rank, &k) in keys.iter().enumerate() {
            let (r, misses) = idx.predict_traced(k);
            prop_assert_eq!(misses, 0);
            prop_assert!(r.y_hat.abs_diff(rank) <= eps_data as usize);
        }
    }

    #[test]
    fn leaf_segments_are_nondecreasing(keys in sorted_keys(), eps_data in 1u32..80) {
        let idx = PgmIndex::build(&keys, eps_data, 4).unwrap();
        for level in idx.levels() {
            prop_assert!(level.iter().all(|s| s.slope >= 0.0));
            prop_assert!(level.windows(2).all(|w| w[0].intercept < w[1].intercept));
        }
        let ys: Vec<usize> = keys.iter().map(|&k| idx.predict(k).y_hat).collect();
        prop_assert!(ys.windows(2).all(|w| w[0] <= w[1]), "{:?}", ys);
    }

    #[test]
    fn bytes_round_trip(keys in sorted_keys(), eps_data in 1u32..80, eps_model in 1u32..8) {
        let idx = PgmIndex::build(&keys, eps_data, eps_model).unwrap();
        prop_assert_eq!(PgmIndex::from_bytes(&idx.to_bytes()).unwrap(), idx);
    }
}
