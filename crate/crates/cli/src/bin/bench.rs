use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::time::Duration;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use relaxpir::bench::{
    bench_communication, bench_crossover, bench_index_size, bench_range_lengths, bench_updates, write_csv,
    CrossoverConfig, RangeLengthConfig, Testbed, UpdateConfig,
};
use relaxpir::dldp::{DistanceMode, DEFAULT_EPS_DP};
use relaxpir::he::HeParams;
use relaxpir::protocol::{Scheme, SchemeChoice, ServerConfig};
use relaxpir::store::{DatasetSpec, KeyDistribution, StoreConfig};
use relaxpir_cli::{parse_count, GenSpec};

/// Benchmarks, one CSV table per command.
#[derive(Parser, Debug)]
#[command(name = "relaxpir-bench", version)]
struct Cli {
    /// Write CSV here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Mean obfuscated range length at key and at page granularity.
    #[command(after_help = "CSV columns: mechanism (pgm|page), t, trials, mean_len, stddev_len, \
expected_len (closed form), mechanism_mean (exact mean of the sampler), vs_pgm (mean_len / pgm mean_len)")]
    RangeLengths {
        #[arg(long, value_delimiter = ',', default_value = "10,100,1000")]
        t: Vec<u64>,
        #[arg(long, default_value_t = DEFAULT_EPS_DP)]
        eps_dp: f64,
        #[arg(long, default_value_t = 64)]
        eps_data: u32,
        #[arg(long, default_value_t = 256)]
        page_m: usize,
        #[arg(long, default_value = "2^24", value_parser = parse_count)]
        n: usize,
        #[arg(long, default_value = "1000000", value_parser = parse_count)]
        trials: usize,
    },
    /// Serialized learned-index size against B+tree inner nodes.
    #[command(after_help = "CSV columns: distribution, n, seed, eps_data, eps_model, levels, leaf_segments, \
pgm_bytes, pgm_mib, page_m, btree_bytes, btree_mib, build_s")]
    IndexSize {
        /// Datasets as N,DIST,SEED; repeatable.
        #[arg(long = "gen", default_values = ["2^20,uniform,1", "2^20,normal,1", "2^20,clustered,1"])]
        datasets: Vec<GenSpec>,
        #[arg(long, value_delimiter = ',', default_value = "16,32,64,128,256,512")]
        eps_data: Vec<u32>,
        #[arg(long, default_value_t = 4)]
        eps_model: u32,
        #[arg(long, default_value_t = 256)]
        page_m: usize,
    },
    /// Scheme chosen by the cost model against measured latency of both.
    #[command(after_help = "CSV columns: bandwidth_mbps, t, queries, chosen (majority pick), plain_share, \
predicted_plain_s, predicted_varpir_s, measured_plain_s, measured_varpir_s, measured_chosen_s, measured_best_s, \
argmin, within_slack, errors. Latencies are wall time plus modelled link time.")]
    Crossover {
        #[command(flatten)]
        bed: BedArgs,
        #[arg(long, value_delimiter = ',', default_value = "10,50,100,1000")]
        bandwidth_mbps: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "100,10000")]
        t: Vec<u64>,
        #[arg(long, default_value_t = 10)]
        queries: usize,
        #[arg(long, default_value_t = 0.03)]
        rtt: f64,
        #[arg(long, default_value_t = 0.2)]
        slack: f64,
    },
    /// Request and response sizes per scheme across dataset sizes.
    #[command(after_help = "CSV columns: n, t, scheme, queries, mean_range_len, mean_w_pt, mean_request_bytes, \
min_response_bytes, max_response_bytes, mean_response_bytes")]
    Communication {
        #[command(flatten)]
        bed: BedArgs,
        /// Dataset sizes; overrides --n.
        #[arg(long, value_delimiter = ',', default_value = "2^16,2^20", value_parser = parse_count)]
        sizes: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "100,10000")]
        t: Vec<u64>,
        #[arg(long, default_value_t = 5)]
        queries: usize,
    },
    /// Query time with and without concurrent updates.
    #[command(after_help = "CSV columns: run (baseline|value-updates|batch-update), queries, updates, wall_s, \
network_s, total_s, ratio (total_s / baseline total_s), stale_retries, max_retries, versions_seen, errors")]
    Updates {
        #[command(flatten)]
        bed: BedArgs,
        #[arg(long, default_value_t = 100)]
        queries: usize,
        /// Alternating baseline and value-update runs; rows report the median.
        #[arg(long, default_value_t = 3)]
        rounds: usize,
        /// Milliseconds between value updates; 0 skips the run.
        #[arg(long, default_value_t = 1000)]
        interval_ms: u64,
        /// Query index at which a batch key update starts.
        #[arg(long)]
        batch_at: Option<usize>,
        #[arg(long, default_value_t = 64)]
        batch_size: usize,
        #[arg(long, default_value_t = 100)]
        t: u64,
        #[arg(long, value_enum, default_value_t = SchemeArg::Varpir)]
        scheme: SchemeArg,
        #[arg(long, default_value_t = 50.0)]
        bandwidth_mbps: f64,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SchemeArg {
    Auto,
    Plain,
    Varpir,
}

#[derive(Args, Debug)]
struct BedArgs {
    #[arg(long, default_value = "2^20", value_parser = parse_count)]
    n: usize,
    #[arg(long, default_value = "uniform")]
    dist: KeyDistribution,
    #[arg(long, default_value_t = 8)]
    value_bytes: usize,
    #[arg(long, default_value_t = 64)]
    eps_data: u32,
    #[arg(long, default_value_t = 4096)]
    he_n: usize,
    /// Apply the t - 2*eps_data adjustment instead of using t as the noise distance.
    #[arg(long)]
    adjusted: bool,
}

impl BedArgs {
    fn build(&self, n: usize, seed: u64) -> Result<Testbed> {
        let spec = DatasetSpec::new(n, self.dist, self.value_bytes, seed);
        let store = StoreConfig { eps_data: self.eps_data, ..StoreConfig::default() };
        Ok(Testbed::new(&spec, HeParams::with_ring_degree(self.he_n)?, store, ServerConfig::default())?)
    }

    fn mode(&self) -> DistanceMode {
        if self.adjusted {
            DistanceMode::Adjusted
        } else {
            DistanceMode::Raw
        }
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let out: Box<dyn Write> = match &cli.out {
        Some(p) => Box::new(File::create(p)?),
        None => Box::new(io::stdout().lock()),
    };
    let seed = cli.seed;
    match cli.cmd {
        Cmd::RangeLengths { t, eps_dp, eps_data, page_m, n, trials } => {
            let cfg = RangeLengthConfig { ts: t, eps_dp, eps_data, page_m, n, trials, seed };
            write_csv(&bench_range_lengths(&cfg)?, out)?;
        }
        Cmd::IndexSize { datasets, eps_data, eps_model, page_m } => {
            let specs: Vec<DatasetSpec> = datasets.iter().map(|g| g.dataset(8)).collect();
            write_csv(&bench_index_size(&specs, &eps_data, eps_model, page_m)?, out)?;
        }
        Cmd::Crossover { bed, bandwidth_mbps, t, queries, rtt, slack } => {
            let tb = bed.build(bed.n, seed)?;
            let cfg = CrossoverConfig { bandwidths_mbps: bandwidth_mbps, ts: t, queries, rtt, eps_dp: DEFAULT_EPS_DP, mode: bed.mode(), slack, seed };
            write_csv(&bench_crossover(&tb, &cfg)?, out)?;
        }
        Cmd::Communication { bed, sizes, t, queries } => {
            let mut rows = Vec::new();
            for n in sizes {
                rows.extend(bench_communication(&bed.build(n, seed)?, &t, queries, bed.mode(), seed)?);
            }
            write_csv(&rows, out)?;
        }
        Cmd::Updates { bed, queries, rounds, interval_ms, batch_at, batch_size, t, scheme, bandwidth_mbps } => {
            let tb = bed.build(bed.n, seed)?;
            let cfg = UpdateConfig {
                queries,
                rounds,
                update_interval: (interval_ms > 0).then(|| Duration::from_millis(interval_ms)),
                batch_at,
                batch_size,
                t,
                eps_dp: DEFAULT_EPS_DP,
                mode: bed.mode(),
                scheme: match scheme {
                    SchemeArg::Auto => SchemeChoice::Auto,
                    SchemeArg::Plain => SchemeChoice::Force(Scheme::PlainDownload),
                    SchemeArg::Varpir => SchemeChoice::Force(Scheme::VarPir),
                },
                bandwidth: bandwidth_mbps * 1e6,
                rtt: 0.03,
                seed,
            };
            write_csv(&bench_updates(&tb, &cfg)?, out)?;
        }
    }
    Ok(())
}
