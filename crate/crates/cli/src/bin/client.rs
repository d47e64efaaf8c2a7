use anyhow::Result;
use clap::{Parser, ValueEnum};
use relaxpir::dldp::{DistanceMode, DEFAULT_EPS_DP};
use relaxpir::protocol::{ClientConfig, ClientSession, Scheme, SchemeChoice, TcpTransport};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SchemeArg {
    Auto,
    Plain,
    Varpir,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    /// Noise distance is t - 2*eps_data.
    Adjusted,
    /// Noise distance is t.
    Raw,
}

/// Looks up one key privately.
#[derive(Parser, Debug)]
#[command(name = "relaxpir-client", version)]
struct Args {
    #[arg(long, default_value = "127.0.0.1:7700")]
    endpoint: String,
    #[arg(long)]
    key: u64,
    /// Positions within this distance are indistinguishable.
    #[arg(long, default_value_t = 1000)]
    t: u64,
    #[arg(long, default_value_t = DEFAULT_EPS_DP)]
    eps_dp: f64,
    #[arg(long, value_enum, default_value_t = SchemeArg::Auto)]
    scheme: SchemeArg,
    #[arg(long, value_enum, default_value_t = ModeArg::Adjusted)]
    mode: ModeArg,
    /// Bits per second for scheme selection; the server's hint when unset.
    #[arg(long)]
    bandwidth: Option<f64>,
    /// Seconds for scheme selection; the server's hint when unset.
    #[arg(long)]
    rtt: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let cfg = ClientConfig {
        eps_dp: args.eps_dp,
        mode: match args.mode {
            ModeArg::Adjusted => DistanceMode::Adjusted,
            ModeArg::Raw => DistanceMode::Raw,
        },
        bandwidth: args.bandwidth,
        rtt: args.rtt,
        seed: args.seed,
        ..ClientConfig::default()
    };
    let mut client = ClientSession::connect(TcpTransport::connect(&args.endpoint)?, cfg)?;
    let choice = match args.scheme {
        SchemeArg::Auto => SchemeChoice::Auto,
        SchemeArg::Plain => SchemeChoice::Force(Scheme::PlainDownload),
        SchemeArg::Varpir => SchemeChoice::Force(Scheme::VarPir),
    };
    let r = client.lookup(args.key, args.t, choice)?;
    match &r.value {
        Some(v) => println!("{}", v.iter().map(|b| format!("{b:02x}")).collect::<String>()),
        None => println!("absent"),
    }
    eprintln!(
        "scheme={} range={:?}[{}, {}] pairs={} blocks={} version={} sent={}B received={}B",
        r.scheme,
        r.range.kind,
        r.range.l,
        r.range.r,
        r.range.len(),
        r.w_pt,
        r.version,
        r.request_bytes,
        r.response_bytes
    );
    Ok(())
}
