use std::time::Duration;

use relaxpir::bench::{
    bench_crossover, bench_index_size, bench_range_lengths, bench_updates, write_csv, CrossoverConfig, RangeLengthConfig,
    Testbed, UpdateConfig,
};
use relaxpir::he::HeParams;
use relaxpir::pgm::PgmIndex;
use relaxpir::protocol::ServerConfig;
use relaxpir::store::{generate_keys, DatasetSpec, KeyDistribution, StoreConfig};

fn small_bed(n: usize) -> Testbed {
    let spec = DatasetSpec::new(n, KeyDistribution::Uniform, 8, 5);
    let store = StoreConfig { eps_data: 8, eps_model: 4, ..StoreConfig::default() };
    let server = ServerConfig { c_fhe: Some(1e-4), ..ServerConfig::default() };
    Testbed::new(&spec, HeParams::with_ring_degree(256).unwrap(), store, server).unwrap()
}

#[test]
fn range_length_means_match_the_mechanism() {
    let cfg = RangeLengthConfig { ts: vec![10, 300], n: 1 << 20, trials: 200_000, seed: 9, ..Default::default() };
    let rows = bench_range_lengths(&cfg).unwrap();
    assert_eq!(rows.len(), 4);
    for r in &rows {
        let z = (r.mean_len - r.mechanism_mean).abs() / r.std_error();
        assert!(z < 3.0, "{r:?}: z = {z}");
        // The closed form ignores the mean offset's half-step and the
        // non-zero conditioning, both below half a percent here.
        assert!((r.mechanism_mean / r.expected_len - 1.0).abs() < 0.005, "{r:?}");
    }
    assert_eq!(rows[0].mechanism, "pgm");
    assert!(rows[1].vs_pgm > 20.0);
}

#[test]
fn range_lengths_are_reproducible() {
    let cfg = RangeLengthConfig { ts: vec![50], n: 1 << 16, trials: 40_000, seed: 3, ..Default::default() };
    let a = bench_range_lengths(&cfg).unwrap();
    let b = bench_range_lengths(&cfg).unwrap();
    let mut x = Vec::new();
    let mut y = Vec::new();
    write_csv(&a, &mut x).unwrap();
    write_csv(&b, &mut y).unwrap();
    assert_eq!(x, y);
    let text = String::from_utf8(x).unwrap();
    assert!(text.starts_with("mechanism,t,trials,mean_len,stddev_len,expected_len,mechanism_mean,vs_pgm\n"));
}

#[test]
fn index_size_shrinks_with_looser_error() {
    let spec = DatasetSpec::new(1 << 16, KeyDistribution::Normal, 8, 2);
    let rows = bench_index_size(&[spec.clone()], &[32, 512], 4, 256).unwrap();
    assert!(rows[1].pgm_bytes <= rows[0].pgm_bytes);
    let pgm = PgmIndex::build(&generate_keys(&spec).unwrap(), 32, 4).unwrap();
    assert_eq!(rows[0].pgm_bytes, pgm.size_bytes());
    assert_eq!(rows[0].distribution, "normal");
}

#[test]
fn crossover_rows_are_correct_and_consistent() {
    let bed = small_bed(4000);
    let cfg = CrossoverConfig { bandwidths_mbps: vec![1.0, 1000.0], ts: vec![4, 200], queries: 4, ..Default::default() };
    let rows = bench_crossover(&bed, &cfg).unwrap();
    assert_eq!(rows.len(), 4);
    for r in &rows {
        assert_eq!(r.errors, 0);
        assert!(r.measured_best_s <= r.measured_plain_s.min(r.measured_varpir_s) + 1e-12);
        assert!(r.measured_chosen_s >= r.measured_best_s - 1e-12);
        assert!((0.0..=1.0).contains(&r.plain_share));
    }
}

#[test]
fn updates_keep_results_exact() {
    let bed = small_bed(3000);
    let cfg = UpdateConfig {
        queries: 30,
        update_interval: Some(Duration::from_millis(5)),
        batch_at: Some(10),
        batch_size: 16,
        t: 20,
        ..Default::default()
    };
    let rows = bench_updates(&bed, &cfg).unwrap();
    let runs: Vec<_> = rows.iter().map(|r| r.run).collect();
    assert_eq!(runs, ["baseline", "value-updates", "batch-update"]);
    assert!((rows[0].ratio - 1.0).abs() < 1e-12);
    for r in &rows {
        assert_eq!(r.errors, 0, "{r:?}");
        assert!(r.max_retries <= 1, "{r:?}");
    }
    assert_eq!(rows[2].updates, 1);
}

#[test]
fn no_updates_means_baseline_only() {
    let bed = small_bed(1500);
    let cfg = UpdateConfig { queries: 5, update_interval: None, batch_at: None, t: 20, ..Default::default() };
    let rows = bench_updates(&bed, &cfg).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].updates, 0);
    assert_eq!(rows[0].ratio, 1.0);
}

#[test]
fn varpir_response_size_is_constant() {
    let bed = small_bed(2000);
    let rows = relaxpir::bench::bench_communication(&bed, &[4, 400], 3, relaxpir::dldp::DistanceMode::Raw, 1).unwrap();
    let varpir: Vec<_> = rows.iter().filter(|r| r.scheme == "varpir").collect();
    assert_eq!(varpir.len(), 2);
    for r in &varpir {
        assert_eq!(r.min_response_bytes, r.max_response_bytes);
        assert_eq!(r.min_response_bytes, varpir[0].min_response_bytes);
    }
}
