use std::net::TcpListener;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::Parser;
use log::info;
use relaxpir::he::{HeContext, HeParams};
use relaxpir::protocol::{Server, ServerConfig};
use relaxpir::store::{generate_dataset, load_sosd, StoreConfig, VersionedStore};
use relaxpir_cli::GenSpec;

/// Serves private lookups over TCP.
#[derive(Parser, Debug)]
#[command(name = "relaxpir-server", version)]
struct Args {
    /// SOSD key file (u64 count then sorted u64 keys, little-endian).
    #[arg(long, conflicts_with = "gen", required_unless_present = "gen")]
    data: Option<PathBuf>,
    /// Synthetic dataset as N,DIST,SEED with DIST uniform|normal|clustered.
    #[arg(long)]
    gen: Option<GenSpec>,
    #[arg(long, default_value_t = 8)]
    value_bytes: usize,
    #[arg(long, default_value = "127.0.0.1")]
    bind: String,
    #[arg(long, default_value_t = 7700)]
    port: u16,
    /// Loopback port for value and batch key updates.
    #[arg(long, default_value_t = 7701)]
    admin_port: u16,
    #[arg(long, default_value_t = 64)]
    eps_data: u32,
    #[arg(long, default_value_t = 4)]
    eps_model: u32,
    /// Ring degree of the homomorphic scheme.
    #[arg(long, default_value_t = 4096)]
    he_n: usize,
    /// Link bandwidth advertised to clients, bits per second.
    #[arg(long, default_value_t = 50e6)]
    bandwidth_hint: f64,
    /// Round-trip time advertised to clients, seconds.
    #[arg(long, default_value_t = 0.03)]
    rtt_hint: f64,
    /// Fixed seconds per plaintext instead of measuring at startup.
    #[arg(long)]
    c_fhe: Option<f64>,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let data = match (&args.data, &args.gen) {
        (Some(path), _) => load_sosd(path, args.value_bytes).with_context(|| format!("loading {}", path.display()))?,
        (None, Some(g)) => generate_dataset(&g.dataset(args.value_bytes))?,
        (None, None) => unreachable!("clap requires one source"),
    };
    info!("{} pairs of {} bytes", data.len(), data.pair_bytes());
    let ctx = HeContext::new(HeParams::with_ring_degree(args.he_n)?)?;
    let cfg = StoreConfig { eps_data: args.eps_data, eps_model: args.eps_model, ..StoreConfig::default() };
    let store = Arc::new(VersionedStore::new(data, ctx, cfg)?);
    let server = Server::new(
        store,
        ServerConfig {
            bandwidth_hint: args.bandwidth_hint,
            rtt_hint: args.rtt_hint,
            c_fhe: args.c_fhe,
            ..ServerConfig::default()
        },
    );
    let clients = TcpListener::bind((args.bind.as_str(), args.port))?;
    let admin = TcpListener::bind(("127.0.0.1", args.admin_port))?;
    info!("serving on {} (admin {})", clients.local_addr()?, admin.local_addr()?);
    let admin_thread = server.serve_admin(admin);
    server.serve(clients).join().ok();
    admin_thread.join().ok();
    Ok(())
}
