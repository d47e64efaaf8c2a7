use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use relaxpir::dldp::{ObfuscatedRange, RangeKind};
use relaxpir::he::{decrypt, gen_galois_keys, keygen, GaloisKeySet, HeContext, HeParams, SecretKey};
use relaxpir::pgm::PredictedRange;
use relaxpir::protocol::{select_scheme, CostInputs, Scheme};
use relaxpir::store::{generate_dataset, DatasetSpec, KeyDistribution, KvStore};
use relaxpir::varpir::{
    build_query, decode_answer, decode_block, decode_pair, encode_block, encode_pair, EncodedStore, EncodingParams,
    PtRange, VarPirError,
};

struct Bed {
    ctx: Arc<HeContext>,
    sk: SecretKey,
    keys: GaloisKeySet,
    rng: ChaCha20Rng,
}

fn bed(degree: usize, seed: u64) -> Bed {
    let ctx = HeContext::new(HeParams::with_ring_degree(degree).unwrap()).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let sk = keygen(&ctx, &mut rng);
    let keys = gen_galois_keys(&sk, &ctx, &mut rng);
    Bed { ctx, sk, keys, rng }
}

#[test]
fn default_layout_at_full_scale() {
    let p = EncodingParams::new(1 << 20, 128, 4096, 20, 64).unwrap();
    assert_eq!(p.slots_per_pair, 7);
    assert_eq!(p.pairs_per_pt, 585);
    assert_eq!(p.step, 293);
    assert_eq!(p.pt_count, 3579);
    assert_eq!(p.query_cts(p.pt_count), 1);
    assert_eq!(p.query_cts(4097), 2);
}

#[test]
fn every_window_fits_its_target_block() {
    // brute force over every window start at the loosest error bound that fits
    let eps = 146;
    let p = EncodingParams::new(100_000, 128, 4096, 20, eps).unwrap();
    for lo in 0..p.n {
        let hi = (lo + 2 * eps as usize).min(p.n - 1);
        let cov = p.coverage(p.pos_to_pt_id(lo));
        assert!(cov.start <= lo && hi < cov.end, "window [{lo}, {hi}] outside {cov:?}");
    }
    assert!(matches!(EncodingParams::new(100_000, 128, 4096, 20, eps + 1), Err(VarPirError::Fit { .. })));
}

#[test]
fn pair_codec_round_trips() {
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    for _ in 0..10_000 {
        let vb: usize = 8 * rng.gen_range(1..=4);
        let limb_bits = rng.gen_range(8..=32);
        let key: u64 = rng.gen();
        let value: Vec<u8> = (0..vb).map(|_| rng.gen()).collect();
        let mut limbs = vec![0u64; (8 * (8 + vb)).div_ceil(limb_bits as usize)];
        encode_pair(key, &value, limb_bits, &mut limbs);
        assert!(limbs.iter().all(|&l| l < 1u64 << limb_bits));
        assert_eq!(decode_pair(&limbs, limb_bits, vb), (key, value));
    }
}

fn twelve() -> (KvStore, EncodingParams) {
    let store = KvStore::from_keys((0..12).map(|i| 100 + i * 7).collect(), 8).unwrap();
    let params = EncodingParams::with_layout(12, 128, 256, 20, 4, 2).unwrap();
    (store, params)
}

#[test]
fn overlapping_layout_selects_the_target_block() {
    let (store, params) = twelve();
    let mut b = bed(256, 2);
    let enc = EncodedStore::encode_with(&store, params, b.ctx.clone());
    assert_eq!(params.pt_count, 6);
    let obf = ObfuscatedRange::contiguous(5, 11, 12);
    let pred = PredictedRange { y_hat: 9, lo: 8, hi: 10 };
    let q = build_query(&pred, &obf, &params, usize::MAX, &b.sk, &b.ctx, &mut b.rng).unwrap();
    assert_eq!((q.range.l_pt, q.range.r_pt, q.range.width), (2, 5, 4));
    assert_eq!(q.range.offset_of(4), Some(2));
    let (ct, touches) = enc.answer_traced(&q, &b.keys).unwrap();
    assert_eq!(touches, vec![1; 4]);
    let pt = decrypt(&ct, &b.sk, &b.ctx);
    let pairs = decode_block(&pt, 4, &params);
    let want: Vec<_> = (8..12).map(|p| (p, store.key(p), store.value(p).to_vec())).collect();
    assert_eq!(pairs, want);
    assert_eq!(decode_answer(&pt, &pred, store.key(9), &params).as_deref(), Some(store.value(9)));
    assert_eq!(decode_answer(&pt, &pred, store.key(11), &params), None);
}

#[test]
fn decode_answer_finds_every_position() {
    let store = generate_dataset(&DatasetSpec::new(3000, KeyDistribution::Normal, 16, 3)).unwrap();
    let eps = 5;
    let p = EncodingParams::new(store.len(), store.kv_bits(), 256, 20, eps).unwrap();
    let blocks: Vec<_> =
        (0..p.pt_count).map(|j| encode_block(&p, j, |pos, emit| emit(store.key(pos), store.value(pos)))).collect();
    for pos in 0..store.len() {
        for shift in [0, eps as usize, 2 * eps as usize] {
            let lo = pos.saturating_sub(shift);
            let pred = PredictedRange::around(lo + eps as usize, eps as usize, store.len());
            if !pred.contains(pos) {
                continue;
            }
            let block = &blocks[p.pos_to_pt_id(pred.lo)];
            assert_eq!(decode_answer(block, &pred, store.key(pos), &p).as_deref(), Some(store.value(pos)), "pos {pos}");
            assert_eq!(decode_answer(block, &pred, store.key(pos) + 1, &p), None);
        }
    }
}

#[test]
fn answers_decode_for_runs_of_every_shape() {
    let store = generate_dataset(&DatasetSpec::new(5000, KeyDistribution::Uniform, 8, 4)).unwrap();
    let mut b = bed(256, 5);
    let enc = EncodedStore::encode(&store, b.ctx.clone(), 8).unwrap();
    let p = *enc.params();
    assert!(p.pt_count > 256, "want a run needing two selectors");
    let answer_len = |ct: &relaxpir::he::Ciphertext, ctx: &HeContext| ct.to_bytes(ctx).len();
    let mut sizes = Vec::new();
    let n = store.len();
    let cases = [
        (ObfuscatedRange::contiguous(100, 140, n), 120),
        (ObfuscatedRange::contiguous(0, n - 1, n), 2000),
        (ObfuscatedRange::wrapped(4900, 30, n), 10),
        (ObfuscatedRange::wrapped(4900, 30, n), 4950),
        (ObfuscatedRange::wrapped(50, 10, n), 4990),
        (ObfuscatedRange::full(n), 700),
    ];
    for (obf, pos) in cases {
        let pred = PredictedRange::around(pos, 8, n);
        for promote_at in [usize::MAX, 1] {
            let q = build_query(&pred, &obf, &p, promote_at, &b.sk, &b.ctx, &mut b.rng).unwrap();
            if promote_at == 1 {
                assert!(q.range.is_canonical_full());
            }
            let (ct, touches) = enc.answer_traced(&q, &b.keys).unwrap();
            assert!(touches.iter().all(|&t| t == 1), "{obf:?}");
            assert_eq!(touches.len(), q.range.width);
            sizes.push(answer_len(&ct, &b.ctx));
            let pt = decrypt(&ct, &b.sk, &b.ctx);
            assert_eq!(decode_answer(&pt, &pred, store.key(pos), &p).as_deref(), Some(store.value(pos)), "{obf:?}");
        }
    }
    assert!(sizes.windows(2).all(|w| w[0] == w[1]));
    assert_eq!(sizes[0], b.ctx.ciphertext_bytes());
}

#[test]
fn queries_are_checked() {
    let (store, params) = twelve();
    let mut b = bed(256, 6);
    let enc = EncodedStore::encode_with(&store, params, b.ctx.clone());
    let pred = PredictedRange { y_hat: 1, lo: 0, hi: 2 };
    let far = ObfuscatedRange::contiguous(6, 11, 12);
    assert!(matches!(
        build_query(&pred, &far, &params, usize::MAX, &b.sk, &b.ctx, &mut b.rng),
        Err(VarPirError::NotCovered)
    ));
    let obf = ObfuscatedRange::contiguous(0, 5, 12);
    let mut q = build_query(&pred, &obf, &params, usize::MAX, &b.sk, &b.ctx, &mut b.rng).unwrap();
    q.cts.push(q.cts[0].clone());
    assert!(matches!(enc.answer(&q, &b.keys), Err(VarPirError::CiphertextCount { expected: 1, found: 2 })));
    assert!(PtRange::from_wire(RangeKind::Contiguous, 4, 2, 6).is_err());
    assert!(PtRange::from_wire(RangeKind::Full, 1, 5, 6).is_err());
    assert!(PtRange::from_wire(RangeKind::Wrapped, 6, 0, 6).is_err());
}

#[test]
fn value_rewrites_reach_cached_full_answers() {
    let store = generate_dataset(&DatasetSpec::new(1500, KeyDistribution::Uniform, 8, 7)).unwrap();
    let mut b = bed(256, 8);
    let enc = EncodedStore::encode(&store, b.ctx.clone(), 8).unwrap();
    enc.warm();
    let p = *enc.params();
    let pos = 777;
    let fresh = vec![0x5a; 8];
    let rewritten = enc.reencode(p.covering_blocks(pos), |q, emit| {
        if q == pos {
            emit(store.key(q), &fresh)
        } else {
            emit(store.key(q), store.value(q))
        }
    });
    assert!(!rewritten.is_empty());
    let pred = PredictedRange::around(pos, 8, store.len());
    let q = build_query(&pred, &ObfuscatedRange::full(store.len()), &p, 1, &b.sk, &b.ctx, &mut b.rng).unwrap();
    let pt = decrypt(&enc.answer(&q, &b.keys).unwrap(), &b.sk, &b.ctx);
    assert_eq!(decode_answer(&pt, &pred, store.key(pos), &p), Some(fresh));
}

#[test]
fn promotion_follows_the_threshold() {
    let p = EncodingParams::with_layout(1000, 128, 256, 20, 10, 5).unwrap();
    assert_eq!(p.pt_count, 200);
    let obf = ObfuscatedRange::contiguous(100, 199, 1000);
    let literal = PtRange::from_obfuscated(&obf, &p, 21);
    assert_eq!((literal.l_pt, literal.r_pt, literal.width), (20, 39, 20));
    assert!(PtRange::from_obfuscated(&obf, &p, 20).is_canonical_full());
    let wrapped = PtRange::from_obfuscated(&ObfuscatedRange::wrapped(990, 4, 1000), &p, 1000);
    assert_eq!(wrapped.ids().collect::<Vec<_>>(), vec![198, 199, 0]);
}

fn inputs() -> CostInputs {
    CostInputs {
        bandwidth: 50e6,
        rtt: 0.0,
        c_fhe: 1e-3,
        c_full: 1.0,
        pt_count: 10_000,
        pair_bytes: 16,
        query_ct_bytes: 65_600,
        answer_ct_bytes: 65_600,
        ring_degree: 4096,
    }
}

#[test]
fn scheme_selection_by_hand() {
    let c = inputs();
    // 25729 pairs of 16 bytes over 50 Mb/s against 89 folds and two ciphertexts
    let plain = c.plain_cost(25_729);
    let varpir = c.varpir_cost(89);
    assert!((plain - 25_729.0 * 128.0 / 50e6).abs() < 1e-12);
    assert!((plain - 0.0659).abs() < 1e-4);
    assert!((varpir - (2.0 * 65_600.0 * 8.0 / 50e6 + 0.089)).abs() < 1e-12);
    assert_eq!(select_scheme(25_729, 89, &c), Scheme::PlainDownload);
    // free computation always favours the constant-size answer
    let free = CostInputs { c_fhe: 0.0, c_full: 0.0, ..c };
    assert_eq!(select_scheme(25_729, 89, &free), Scheme::VarPir);
    assert_eq!(free.promote_at(), free.pt_count);
    // equal estimates go to plaintext download
    let tie_w = 1000;
    let tied = CostInputs { c_fhe: 0.0, c_full: 0.0, answer_ct_bytes: tie_w * 16, query_ct_bytes: 0, ..c };
    assert_eq!(tied.plain_cost(tie_w), tied.varpir_cost(5));
    assert_eq!(select_scheme(tie_w, 5, &tied), Scheme::PlainDownload);
    // the full run is priced at its own cost
    assert_eq!(c.varpir_cost(c.pt_count) - c.varpir_cost(c.pt_count - 1), 1.0 - 9.999);
    assert_eq!(c.promote_at(), 1000);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn wire_runs_enumerate_cyclically(pc in 1usize..500, l in 0usize..500, r in 0usize..500) {
        let (l, r) = (l % pc, r % pc);
        let kind = if l <= r { RangeKind::Contiguous } else { RangeKind::Wrapped };
        let run = PtRange::from_wire(kind, l, r, pc).unwrap();
        let ids: Vec<usize> = run.ids().collect();
        let mut brute = vec![l];
        while *brute.last().unwrap() != r {
            brute.push((brute.last().unwrap() + 1) % pc);
        }
        prop_assert_eq!(&ids, &brute);
        for (k, id) in ids.iter().enumerate() {
            prop_assert_eq!(run.offset_of(*id), Some(k));
        }
    }

    #[test]
    fn covering_blocks_match_coverage(n in 1usize..3000, m in 2usize..40, ov in 0usize..39, pos in 0usize..3000) {
        prop_assume!(ov < m);
        let p = EncodingParams::with_layout(n, 64, 4096, 16, m, ov).unwrap();
        let pos = pos % n;
        let brute: Vec<usize> = (0..p.pt_count).filter(|&j| p.coverage(j).contains(&pos)).collect();
        prop_assert_eq!(p.covering_blocks(pos).collect::<Vec<_>>(), brute);
        prop_assert!(p.coverage(p.pos_to_pt_id(pos)).contains(&pos));
    }
}
