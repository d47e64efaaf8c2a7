//! Benchmark drivers behind `relaxpir-bench`. Each driver returns typed rows;
//! [`write_csv`] serialises them. Everything except the wall-clock columns
//! is a deterministic function of the configured seed.

use std::io::Write;
use std::sync::mpsc;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use thiserror::Error;

use crate::dldp::{
    btree_expected_range_length, btree_obfuscate_range, expected_boundary_noise, expected_range_length,
    obfuscate_range, BoundaryReduction, DistanceMode, LaplaceSampler, PrivacyParams, DEFAULT_EPS_DP,
};
use crate::he::{HeContext, HeError, HeParams};
use crate::par;
use crate::pgm::{btree_index_bytes, PgmError, PgmIndex, PredictedRange, DEFAULT_EPS_DATA};
use crate::protocol::wire::Message;
use crate::protocol::{
    select_scheme, ClientConfig, ClientSession, InProcess, Lookup, ProtocolError, Scheme, SchemeChoice, Server,
    ServerConfig, Simulated, Transport,
};
use crate::store::{generate_dataset, generate_keys, DatasetSpec, KvStore, StoreConfig, StoreError, VersionError, VersionedStore};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Version(#[from] VersionError),
    #[error(transparent)]
    Index(#[from] PgmError),
    #[error(transparent)]
    He(#[from] HeError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("admin request rejected: {0}")]
    Admin(String),
}

pub fn write_csv<T: Serialize, W: Write>(rows: &[T], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Independent stream `stream` of the generator seeded by `seed`.
fn stream(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const MIB: f64 = 1024.0 * 1024.0;

#[derive(Clone, Debug)]
pub struct RangeLengthConfig {
    pub ts: Vec<u64>,
    pub eps_dp: f64,
    pub eps_data: u32,
    pub page_m: usize,
    /// Domain size in pairs.
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
}

impl Default for RangeLengthConfig {
    fn default() -> Self {
        RangeLengthConfig {
            ts: vec![10, 100, 1000],
            eps_dp: DEFAULT_EPS_DP,
            eps_data: DEFAULT_EPS_DATA,
            page_m: 256,
            n: 1 << 24,
            trials: 1_000_000,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RangeLengthRow {
    /// `pgm` or `page`.
    pub mechanism: &'static str,
    pub t: u64,
    pub trials: usize,
    pub mean_len: f64,
    pub stddev_len: f64,
    /// Closed-form expectation reported alongside the mechanism.
    pub expected_len: f64,
    /// Exact mean of the sampled mechanism, away from the domain ends.
    pub mechanism_mean: f64,
    /// `mean_len` over the PGM mean at the same `t`.
    pub vs_pgm: f64,
}

impl RangeLengthRow {
    /// Standard error of `mean_len`.
    pub fn std_error(&self) -> f64 {
        self.stddev_len / (self.trials as f64).sqrt()
    }
}

const TRIAL_CHUNK: usize = 1 << 14;

/// Mean and standard deviation of `trial` over `trials` draws, split into
/// chunks with their own streams so the result does not depend on threading.
fn monte_carlo<F>(trials: usize, seed: u64, tag: u64, trial: F) -> (f64, f64)
where
    F: Fn(&mut LaplaceSampler<ChaCha20Rng>) -> f64 + Sync + Send,
{
    let chunks = trials.div_ceil(TRIAL_CHUNK);
    let sums = par::map_range(chunks, |c| {
        let mut noise = LaplaceSampler::new(stream(seed, (tag << 32) | c as u64));
        let count = TRIAL_CHUNK.min(trials - c * TRIAL_CHUNK);
        let mut s = 0.0;
        let mut s2 = 0.0;
        for _ in 0..count {
            let x = trial(&mut noise);
            s += x;
            s2 += x * x;
        }
        (s, s2)
    });
    let (s, s2) = sums.into_iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let n = trials as f64;
    let mean = s / n;
    let var = (s2 / n - mean * mean).max(0.0) * n / (n - 1.0).max(1.0);
    (mean, var.sqrt())
}

/// Obfuscated range lengths at key granularity (learned index) and at page
/// granularity (B+tree comparator).
pub fn bench_range_lengths(cfg: &RangeLengthConfig) -> Result<Vec<RangeLengthRow>, BenchError> {
    let n = cfg.n;
    let m = cfg.page_m;
    let eps = cfg.eps_data as usize;
    let pages = n.div_ceil(m);
    let mut rows = Vec::new();
    for (ti, &t) in cfg.ts.iter().enumerate() {
        let params = PrivacyParams::new(cfg.eps_dp, t).map_err(ProtocolError::from)?;
        let (pgm_mean, pgm_sd) = monte_carlo(cfg.trials, cfg.seed, 2 * ti as u64, |noise| {
            let y = noise.rng_mut().gen_range(0..n);
            let pred = PredictedRange::around(y, eps, n);
            obfuscate_range(&pred, n, &params, BoundaryReduction::Folded, noise).len() as f64
        });
        let (page_mean, page_sd) = monte_carlo(cfg.trials, cfg.seed, 2 * ti as u64 + 1, |noise| {
            let p = noise.rng_mut().gen_range(0..pages);
            let r = btree_obfuscate_range(p, p, pages, m, &params, BoundaryReduction::Folded, noise);
            (r.len() * m).min(n) as f64
        });
        let window = (2 * eps + 1).min(n) as f64;
        let page_lambda = 2.0 * t.div_ceil(m as u64) as f64 / cfg.eps_dp;
        rows.push(RangeLengthRow {
            mechanism: "pgm",
            t,
            trials: cfg.trials,
            mean_len: pgm_mean,
            stddev_len: pgm_sd,
            expected_len: expected_range_length(t, cfg.eps_dp, cfg.eps_data, n),
            mechanism_mean: (window + 2.0 * expected_boundary_noise(params.lambda())).min(n as f64),
            vs_pgm: 1.0,
        });
        rows.push(RangeLengthRow {
            mechanism: "page",
            t,
            trials: cfg.trials,
            mean_len: page_mean,
            stddev_len: page_sd,
            expected_len: btree_expected_range_length(t, cfg.eps_dp, m).min(n as f64),
            mechanism_mean: (m as f64 * (1.0 + 2.0 * expected_boundary_noise(page_lambda))).min(n as f64),
            vs_pgm: page_mean / pgm_mean,
        });
    }
    Ok(rows)
}

#[derive(Clone, Debug, Serialize)]
pub struct IndexSizeRow {
    pub distribution: String,
    pub n: usize,
    pub seed: u64,
    pub eps_data: u32,
    pub eps_model: u32,
    pub levels: usize,
    pub leaf_segments: usize,
    pub pgm_bytes: usize,
    pub pgm_mib: f64,
    pub page_m: usize,
    pub btree_bytes: usize,
    pub btree_mib: f64,
    pub build_s: f64,
}

/// Serialized learned-index size against a B+tree's inner nodes.
pub fn bench_index_size(
    datasets: &[DatasetSpec],
    eps_data: &[u32],
    eps_model: u32,
    page_m: usize,
) -> Result<Vec<IndexSizeRow>, BenchError> {
    let mut rows = Vec::new();
    for spec in datasets {
        let keys = generate_keys(spec)?;
        let btree = btree_index_bytes(keys.len(), page_m);
        for &e in eps_data {
            let start = Instant::now();
            let pgm = PgmIndex::build(&keys, e, eps_model)?;
            let build_s = start.elapsed().as_secs_f64();
            let bytes = pgm.size_bytes();
            rows.push(IndexSizeRow {
                distribution: spec.distribution.to_string(),
                n: keys.len(),
                seed: spec.seed,
                eps_data: e,
                eps_model,
                levels: pgm.levels().len(),
                leaf_segments: pgm.leaf_segments(),
                pgm_bytes: bytes,
                pgm_mib: bytes as f64 / MIB,
                page_m,
                btree_bytes: btree,
                btree_mib: btree as f64 / MIB,
                build_s,
            });
        }
    }
    Ok(rows)
}

/// A server over a generated dataset with in-process clients behind a
/// simulated link.
pub struct Testbed {
    pub server: Arc<Server>,
    pub data: KvStore,
}

pub type BenchClient = ClientSession<Simulated<InProcess>>;

impl Testbed {
    pub fn new(spec: &DatasetSpec, he: HeParams, store: StoreConfig, server: ServerConfig) -> Result<Self, BenchError> {
        let data = generate_dataset(spec)?;
        let ctx = HeContext::new(he)?;
        let versioned = Arc::new(VersionedStore::new(data.clone(), ctx, store)?);
        Ok(Testbed { server: Server::new(versioned, server), data })
    }

    /// Client whose cost model and simulated link share `bandwidth` (bits/s)
    /// and `rtt` (s).
    pub fn client(&self, bandwidth: f64, rtt: f64, cfg: ClientConfig) -> Result<BenchClient, ProtocolError> {
        let cfg = ClientConfig { bandwidth: Some(bandwidth), rtt: Some(rtt), ..cfg };
        ClientSession::connect(Simulated::new(InProcess::new(&self.server), bandwidth, rtt), cfg)
    }
}

/// Retargets both the simulated link and the cost model.
pub fn set_link(client: &mut BenchClient, bandwidth: f64, rtt: f64) {
    client.transport_mut().set_link(bandwidth, rtt);
    client.set_link(bandwidth, rtt);
}

/// One lookup with its end-to-end latency: wall time plus modelled network
/// time.
pub fn timed_lookup(
    client: &mut BenchClient,
    key: u64,
    privacy: &PrivacyParams,
    choice: SchemeChoice,
    noise_seed: u64,
) -> Result<(Lookup, f64), ProtocolError> {
    let before = client.transport().network_delay();
    let mut noise = LaplaceSampler::new(ChaCha20Rng::seed_from_u64(noise_seed));
    let start = Instant::now();
    let r = client.lookup_with(key, privacy, choice, &mut noise)?;
    let wall = start.elapsed();
    Ok((r, (wall + client.transport().network_delay() - before).as_secs_f64()))
}

#[derive(Clone, Debug)]
pub struct CrossoverConfig {
    pub bandwidths_mbps: Vec<f64>,
    pub ts: Vec<u64>,
    pub queries: usize,
    pub rtt: f64,
    pub eps_dp: f64,
    pub mode: DistanceMode,
    /// Allowed excess of the chosen scheme's latency over the per-query best.
    pub slack: f64,
    pub seed: u64,
}

impl Default for CrossoverConfig {
    fn default() -> Self {
        CrossoverConfig {
            bandwidths_mbps: vec![10.0, 50.0, 100.0, 1000.0],
            ts: vec![100, 10_000],
            queries: 10,
            rtt: 0.03,
            eps_dp: DEFAULT_EPS_DP,
            mode: DistanceMode::Raw,
            slack: 0.2,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CrossoverRow {
    pub bandwidth_mbps: f64,
    pub t: u64,
    pub queries: usize,
    /// Scheme the cost model picked for most queries.
    pub chosen: String,
    pub plain_share: f64,
    pub predicted_plain_s: f64,
    pub predicted_varpir_s: f64,
    pub measured_plain_s: f64,
    pub measured_varpir_s: f64,
    /// Mean measured latency of the scheme picked per query.
    pub measured_chosen_s: f64,
    /// Mean of the per-query measured minimum.
    pub measured_best_s: f64,
    /// Scheme with the lower mean measured latency.
    pub argmin: String,
    pub within_slack: bool,
    pub errors: usize,
}

/// Runs every query under both schemes with identical noise and compares
/// the cost model's pick with the measured latencies.
pub fn bench_crossover(bed: &Testbed, cfg: &CrossoverConfig) -> Result<Vec<CrossoverRow>, BenchError> {
    let mut client = bed.client(cfg.bandwidths_mbps[0] * 1e6, cfg.rtt, ClientConfig { mode: cfg.mode, seed: Some(cfg.seed), ..ClientConfig::default() })?;
    let mut rows = Vec::new();
    for (ti, &t) in cfg.ts.iter().enumerate() {
        let privacy = client.privacy(t)?;
        let mut pick = stream(cfg.seed, 1000 + ti as u64);
        let queries: Vec<(usize, u64)> = (0..cfg.queries).map(|_| (pick.gen_range(0..bed.data.len()), pick.gen())).collect();
        for &mbps in &cfg.bandwidths_mbps {
            set_link(&mut client, mbps * 1e6, cfg.rtt);
            let mut acc = CellAcc::default();
            for &(pos, noise_seed) in &queries {
                let key = bed.data.key(pos);
                let (p, plain_s) = timed_lookup(&mut client, key, &privacy, SchemeChoice::Force(Scheme::PlainDownload), noise_seed)?;
                let (v, varpir_s) = timed_lookup(&mut client, key, &privacy, SchemeChoice::Force(Scheme::VarPir), noise_seed)?;
                let expected = Some(bed.data.value(pos));
                acc.errors += usize::from(p.value.as_deref() != expected) + usize::from(v.value.as_deref() != expected);
                let cost = client.cost_inputs();
                let chosen = select_scheme(p.range.len(), p.w_pt, cost);
                acc.plain_picks += usize::from(chosen == Scheme::PlainDownload);
                acc.predicted_plain += cost.plain_cost(p.range.len());
                acc.predicted_varpir += cost.varpir_cost(p.w_pt);
                acc.plain += plain_s;
                acc.varpir += varpir_s;
                acc.chosen += if chosen == Scheme::PlainDownload { plain_s } else { varpir_s };
                acc.best += plain_s.min(varpir_s);
            }
            let q = cfg.queries as f64;
            let plain_share = acc.plain_picks as f64 / q;
            rows.push(CrossoverRow {
                bandwidth_mbps: mbps,
                t,
                queries: cfg.queries,
                chosen: if plain_share >= 0.5 { Scheme::PlainDownload } else { Scheme::VarPir }.to_string(),
                plain_share,
                predicted_plain_s: acc.predicted_plain / q,
                predicted_varpir_s: acc.predicted_varpir / q,
                measured_plain_s: acc.plain / q,
                measured_varpir_s: acc.varpir / q,
                measured_chosen_s: acc.chosen / q,
                measured_best_s: acc.best / q,
                argmin: if acc.plain <= acc.varpir { Scheme::PlainDownload } else { Scheme::VarPir }.to_string(),
                within_slack: acc.chosen <= (1.0 + cfg.slack) * acc.best,
                errors: acc.errors,
            });
        }
    }
    Ok(rows)
}

#[derive(Default)]
struct CellAcc {
    plain_picks: usize,
    predicted_plain: f64,
    predicted_varpir: f64,
    plain: f64,
    varpir: f64,
    chosen: f64,
    best: f64,
    errors: usize,
}

#[derive(Clone, Debug)]
pub struct UpdateConfig {
    pub queries: usize,
    /// Baseline and value-update runs alternate this many times; each row
    /// reports the median run, which keeps machine drift out of the ratio.
    pub rounds: usize,
    /// Period of background value updates; no value-update run when unset.
    pub update_interval: Option<Duration>,
    /// Query index at which a batch key update starts; no batch run when
    /// unset.
    pub batch_at: Option<usize>,
    /// Keys inserted and keys deleted by the batch update.
    pub batch_size: usize,
    pub t: u64,
    pub eps_dp: f64,
    pub mode: DistanceMode,
    pub scheme: SchemeChoice,
    pub bandwidth: f64,
    pub rtt: f64,
    pub seed: u64,
}

impl Default for UpdateConfig {
    fn default() -> Self {
        UpdateConfig {
            queries: 100,
            rounds: 3,
            update_interval: Some(Duration::from_secs(1)),
            batch_at: Some(50),
            batch_size: 64,
            t: 100,
            eps_dp: DEFAULT_EPS_DP,
            mode: DistanceMode::Raw,
            scheme: SchemeChoice::Force(Scheme::VarPir),
            bandwidth: 50e6,
            rtt: 0.03,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct UpdateRow {
    /// `baseline`, `value-updates` or `batch-update`.
    pub run: &'static str,
    pub queries: usize,
    pub updates: usize,
    pub wall_s: f64,
    pub network_s: f64,
    pub total_s: f64,
    /// `total_s` over the baseline's.
    pub ratio: f64,
    pub stale_retries: u32,
    pub max_retries: u32,
    pub versions_seen: usize,
    pub errors: usize,
}

struct RunStats {
    wall: f64,
    network: f64,
    retries: u32,
    max_retries: u32,
    versions: Vec<u64>,
    errors: usize,
}

/// Times `keys` in order; `check` validates each result.
fn run_queries(
    client: &mut BenchClient,
    keys: &[u64],
    cfg: &UpdateConfig,
    mut before: impl FnMut(usize),
    check: impl Fn(u64, &Lookup) -> bool,
) -> Result<RunStats, BenchError> {
    let privacy = client.privacy(cfg.t)?;
    let mut seeds = stream(cfg.seed, 2000);
    let mut st = RunStats { wall: 0.0, network: 0.0, retries: 0, max_retries: 0, versions: Vec::new(), errors: 0 };
    let net0 = client.transport().network_delay();
    let start = Instant::now();
    for (i, &key) in keys.iter().enumerate() {
        before(i);
        let mut noise = LaplaceSampler::new(ChaCha20Rng::seed_from_u64(seeds.gen()));
        let r = client.lookup_with(key, &privacy, cfg.scheme, &mut noise)?;
        st.retries += r.retries;
        st.max_retries = st.max_retries.max(r.retries);
        if !st.versions.contains(&r.version) {
            st.versions.push(r.version);
        }
        st.errors += usize::from(!check(key, &r));
    }
    st.wall = start.elapsed().as_secs_f64();
    st.network = (client.transport().network_delay() - net0).as_secs_f64();
    Ok(st)
}

fn median_run(mut runs: Vec<(RunStats, usize)>) -> (RunStats, usize) {
    runs.sort_by(|a, b| (a.0.wall + a.0.network).total_cmp(&(b.0.wall + b.0.network)));
    runs.swap_remove(runs.len() / 2)
}

fn row(run: &'static str, queries: usize, updates: usize, st: &RunStats, baseline: f64) -> UpdateRow {
    let total = st.wall + st.network;
    UpdateRow {
        run,
        queries,
        updates,
        wall_s: st.wall,
        network_s: st.network,
        total_s: total,
        ratio: if baseline > 0.0 { total / baseline } else { 1.0 },
        stale_retries: st.retries,
        max_retries: st.max_retries,
        versions_seen: st.versions.len(),
        errors: st.errors,
    }
}

fn admin(server: &Server, m: Message) -> Result<u64, BenchError> {
    match server.handle_admin(m) {
        Message::AdminAck { version } => Ok(version),
        Message::Error { message, .. } => Err(BenchError::Admin(message)),
        other => Err(BenchError::Admin(format!("unexpected reply type {:#04x}", other.type_code()))),
    }
}

/// Query time without updates, with periodic value updates, and across a
/// batch key update. The testbed's store is modified.
pub fn bench_updates(bed: &Testbed, cfg: &UpdateConfig) -> Result<Vec<UpdateRow>, BenchError> {
    let n = bed.data.len();
    let vb = bed.data.value_bytes();
    let mut rng = stream(cfg.seed, 3000);
    // Queries read even positions, value updates write odd ones.
    let query_pos: Vec<usize> = (0..cfg.queries).map(|_| 2 * rng.gen_range(0..n / 2)).collect();
    let keys: Vec<u64> = query_pos.iter().map(|&p| bed.data.key(p)).collect();
    let exact = |key: u64, r: &Lookup| r.value == bed.data.get(key).map(<[u8]>::to_vec);
    let client_cfg = ClientConfig { mode: cfg.mode, seed: Some(cfg.seed), ..ClientConfig::default() };
    let mut rows = Vec::new();

    let targets: Vec<u64> = (0..64).map(|_| bed.data.key(2 * rng.gen_range(0..n / 2) + 1)).collect();
    let mut base_runs = Vec::new();
    let mut update_runs = Vec::new();
    for _ in 0..cfg.rounds.max(1) {
        let mut client = bed.client(cfg.bandwidth, cfg.rtt, client_cfg.clone())?;
        base_runs.push((run_queries(&mut client, &keys, cfg, |_| {}, exact)?, 0));
        if let Some(interval) = cfg.update_interval {
            let mut client = bed.client(cfg.bandwidth, cfg.rtt, client_cfg.clone())?;
            let server = bed.server.clone();
            let targets = targets.clone();
            let (stop, stopped) = mpsc::channel::<()>();
            let updater = thread::spawn(move || -> Result<usize, BenchError> {
                let mut count = 0;
                let mut rng = stream(0, 3001);
                while let Err(mpsc::RecvTimeoutError::Timeout) = stopped.recv_timeout(interval) {
                    let key = targets[count % targets.len()];
                    let mut value = vec![0u8; vb];
                    rng.fill(&mut value[..]);
                    admin(&server, Message::AdminUpdateValue { key, value })?;
                    count += 1;
                }
                Ok(count)
            });
            let st = run_queries(&mut client, &keys, cfg, |_| {}, exact);
            drop(stop);
            let updates = updater.join().expect("updater thread")?;
            update_runs.push((st?, updates));
        }
    }
    let (base, _) = median_run(base_runs);
    let baseline = base.wall + base.network;
    rows.push(row("baseline", cfg.queries, 0, &base, baseline));
    if !update_runs.is_empty() {
        let (st, updates) = median_run(update_runs);
        rows.push(row("value-updates", cfg.queries, updates, &st, baseline));
    }

    if let Some(at) = cfg.batch_at {
        let mut client = bed.client(cfg.bandwidth, cfg.rtt, client_cfg)?;
        let old_version = bed.server.store().active();
        let old = old_version.snapshot();
        let mut inserts = Vec::new();
        while inserts.len() < cfg.batch_size {
            let key = rng.gen_range(0..u64::MAX);
            if old.get(key).is_none() && !inserts.iter().any(|(k, _)| *k == key) {
                let mut value = vec![0u8; vb];
                rng.fill(&mut value[..]);
                inserts.push((key, value));
            }
        }
        inserts.sort();
        let mut deletes: Vec<u64> = Vec::new();
        while deletes.len() < cfg.batch_size.min(n / 2) {
            let key = old.key(rng.gen_range(0..n));
            if !deletes.contains(&key) {
                deletes.push(key);
            }
        }
        let new = old.merged(&inserts, &deletes)?;
        let mixed: Vec<u64> = keys
            .iter()
            .enumerate()
            .map(|(i, &k)| match i % 3 {
                0 => inserts[i % inserts.len()].0,
                1 => deletes[i % deletes.len()],
                _ => k,
            })
            .collect();
        let old_id = old_version.id();
        drop(old_version);
        let check = |key: u64, r: &Lookup| {
            let oracle = if r.version == old_id { &old } else { &new };
            r.value == oracle.get(key).map(<[u8]>::to_vec)
        };
        let mut updater = None;
        let server = bed.server.clone();
        let mut payload = Some(Message::AdminBatchUpdate { inserts, deletes });
        let st = run_queries(
            &mut client,
            &mixed,
            cfg,
            |i| {
                if i == at {
                    let (server, m) = (server.clone(), payload.take().expect("single batch"));
                    updater = Some(thread::spawn(move || admin(&server, m)));
                }
            },
            check,
        );
        let updates = match updater {
            Some(h) => {
                h.join().expect("batch thread")?;
                1
            }
            None => 0,
        };
        rows.push(row("batch-update", cfg.queries, updates, &st?, baseline));
    }
    Ok(rows)
}

#[derive(Clone, Debug, Serialize)]
pub struct CommunicationRow {
    pub n: usize,
    pub t: u64,
    pub scheme: String,
    pub queries: usize,
    pub mean_range_len: f64,
    pub mean_w_pt: f64,
    pub mean_request_bytes: f64,
    pub min_response_bytes: usize,
    pub max_response_bytes: usize,
    pub mean_response_bytes: f64,
}

/// Request and response sizes per scheme on one testbed.
pub fn bench_communication(
    bed: &Testbed,
    ts: &[u64],
    queries: usize,
    mode: DistanceMode,
    seed: u64,
) -> Result<Vec<CommunicationRow>, BenchError> {
    let mut client = bed.client(50e6, 0.03, ClientConfig { mode, seed: Some(seed), ..ClientConfig::default() })?;
    let mut rows = Vec::new();
    for (ti, &t) in ts.iter().enumerate() {
        let privacy = client.privacy(t)?;
        for scheme in [Scheme::PlainDownload, Scheme::VarPir] {
            let mut pick = stream(seed, 4000 + ti as u64);
            let (mut len, mut w_pt, mut req, mut resp) = (0usize, 0usize, 0usize, 0usize);
            let (mut lo, mut hi) = (usize::MAX, 0);
            for _ in 0..queries {
                let pos = pick.gen_range(0..bed.data.len());
                let (r, _) = timed_lookup(&mut client, bed.data.key(pos), &privacy, SchemeChoice::Force(scheme), pick.gen())?;
                len += r.range.len();
                w_pt += r.w_pt;
                req += r.request_bytes;
                resp += r.response_bytes;
                lo = lo.min(r.response_bytes);
                hi = hi.max(r.response_bytes);
            }
            let q = queries as f64;
            rows.push(CommunicationRow {
                n: bed.data.len(),
                t,
                scheme: scheme.to_string(),
                queries,
                mean_range_len: len as f64 / q,
                mean_w_pt: w_pt as f64 / q,
                mean_request_bytes: req as f64 / q,
                min_response_bytes: lo,
                max_response_bytes: hi,
                mean_response_bytes: resp as f64 / q,
            });
        }
    }
    Ok(rows)
}
