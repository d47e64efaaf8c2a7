use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use relaxpir::bench::{bench_range_lengths, RangeLengthConfig};
use relaxpir::dldp::ObfuscatedRange;
use relaxpir::he::{gen_galois_keys, keygen, HeContext, HeParams};
use relaxpir::par;
use relaxpir::pgm::PredictedRange;
use relaxpir::store::{generate_dataset, DatasetSpec, KeyDistribution};
use relaxpir::varpir::{build_query, EncodedStore};

#[test]
fn helpers_agree_with_plain_iteration() {
    let f = |i: usize| i.wrapping_mul(2_654_435_761) % 1009;
    let want: Vec<usize> = (0..10_000).map(f).collect();
    assert_eq!(par::map_range(10_000, f), want);
    assert_eq!(par::sequential(|| par::map_range(10_000, f)), want);
    assert_eq!(par::map_slice(&want, |x| x + 1), want.iter().map(|x| x + 1).collect::<Vec<_>>());
    let sum = |seq: bool| {
        let run = || par::fold_range(10_000, || 0u64, |a, i| a + f(i) as u64, |a, b| a + b);
        if seq {
            par::sequential(run)
        } else {
            run()
        }
    };
    assert_eq!(sum(false), sum(true));
    let mut xs = vec![0usize; 100];
    par::for_each_mut(&mut xs, |i, x| *x = i * i);
    assert!(xs.iter().enumerate().all(|(i, &x)| x == i * i));
    assert_eq!(par::join(|| 1, || 2), (1, 2));
}

#[test]
fn sequential_flag_is_scoped() {
    par::sequential(|| {
        assert_eq!(par::map_range(3, |i| i), vec![0, 1, 2]);
    });
    let r = std::panic::catch_unwind(|| par::sequential(|| panic!("inner")));
    assert!(r.is_err());
    assert_eq!(par::map_range(4, |i| i * 2), vec![0, 2, 4, 6]);
}

#[test]
fn encoding_and_answers_do_not_depend_on_the_path() {
    let store = generate_dataset(&DatasetSpec::new(4000, KeyDistribution::Clustered, 8, 2)).unwrap();
    let ctx = HeContext::new(HeParams::with_ring_degree(256).unwrap()).unwrap();
    let a = EncodedStore::encode(&store, ctx.clone(), 8).unwrap();
    let b = par::sequential(|| EncodedStore::encode(&store, ctx.clone(), 8).unwrap());
    let p = *a.params();
    for j in 0..p.pt_count {
        assert_eq!(*a.block(j), *b.block(j));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let sk = keygen(&ctx, &mut rng);
    let keys = gen_galois_keys(&sk, &ctx, &mut rng);
    let pred = PredictedRange::around(2000, 8, store.len());
    let obf = ObfuscatedRange::contiguous(1000, 3500, store.len());
    let q = build_query(&pred, &obf, &p, usize::MAX, &sk, &ctx, &mut rng).unwrap();
    let x = a.answer(&q, &keys).unwrap().to_bytes(&ctx);
    let y = par::sequential(|| b.answer(&q, &keys).unwrap().to_bytes(&ctx));
    assert_eq!(x, y);
}

#[test]
fn monte_carlo_is_path_independent() {
    let cfg = RangeLengthConfig { ts: vec![20], n: 1 << 16, trials: 50_000, seed: 4, ..Default::default() };
    let a = bench_range_lengths(&cfg).unwrap();
    let b = par::sequential(|| bench_range_lengths(&cfg).unwrap());
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.mean_len, y.mean_len);
        assert_eq!(x.stddev_len, y.stddev_len);
    }
}
