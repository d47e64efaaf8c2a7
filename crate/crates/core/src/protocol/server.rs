//! Server half: session handling, admin updates and TCP listeners.

use std::io::{BufReader, BufWriter};
use std::net::{TcpListener, TcpStream};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Instant;

use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::dldp::{ObfuscatedRange, RangeKind};
use crate::he::{encrypt, gen_galois_keys, keygen, GaloisKeySet, PlainPoly};
use crate::store::{Version, VersionedStore};
use crate::varpir::{PtRange, VarPirQuery};

use super::cost::Scheme;
use super::wire::{code, read_frame, write_frame, InitBundle, Message};
use super::ProtocolError;

#[derive(Clone, Debug)]
pub struct ServerConfig {
    /// Bits per second advertised to clients.
    pub bandwidth_hint: f64,
    /// Seconds advertised to clients.
    pub rtt_hint: f64,
    /// Fixed per-plaintext cost instead of measuring one at startup.
    pub c_fhe: Option<f64>,
    /// Fixed full-run cost. Defaults to `c_fhe` times the block count when
    /// `c_fhe` is fixed, and is measured otherwise.
    pub c_full: Option<f64>,
    /// Precompute the full-range fold before serving.
    pub warm: bool,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig { bandwidth_hint: 50e6, rtt_hint: 0.03, c_fhe: None, c_full: None, warm: true }
    }
}

fn time_answer(store: &VersionedStore, range: PtRange) -> f64 {
    let v = store.active();
    let ctx = store.context();
    let mut rng = ChaCha20Rng::from_entropy();
    let sk = keygen(ctx, &mut rng);
    let keys = gen_galois_keys(&sk, ctx, &mut rng);
    let cts = (0..v.params().query_cts(range.width))
        .map(|_| encrypt(&PlainPoly::zero(ctx.degree()), &sk, ctx, &mut rng))
        .collect();
    let query = VarPirQuery { range, cts };
    let start = Instant::now();
    v.encoded().answer(&query, &keys).expect("calibration query");
    start.elapsed().as_secs_f64()
}

/// Measures server seconds per plaintext by answering a throwaway query over
/// the first (up to) 64 blocks.
pub fn calibrate_c_fhe(store: &VersionedStore) -> f64 {
    let pc = store.active().params().pt_count;
    let width = pc.min(64);
    let range = PtRange::from_wire(RangeKind::Contiguous, 0, width - 1, pc).expect("valid run");
    let per = time_answer(store, range) / width as f64;
    info!("calibrated {:.3} ms per plaintext over {width} blocks", per * 1e3);
    per
}

/// Measures server seconds for a query over every block.
pub fn calibrate_c_full(store: &VersionedStore) -> f64 {
    let secs = time_answer(store, PtRange::full(store.active().params().pt_count));
    info!("calibrated {:.1} ms for the full run", secs * 1e3);
    secs
}

pub struct Server {
    store: Arc<VersionedStore>,
    cfg: ServerConfig,
    c_fhe: f64,
    c_full: f64,
}

impl Server {
    pub fn new(store: Arc<VersionedStore>, cfg: ServerConfig) -> Arc<Self> {
        if cfg.warm {
            let start = Instant::now();
            store.active().encoded().warm();
            info!("full-range fold ready in {:.2?}", start.elapsed());
        }
        let c_fhe = cfg.c_fhe.unwrap_or_else(|| calibrate_c_fhe(&store));
        let c_full = match (cfg.c_full, cfg.c_fhe) {
            (Some(c), _) => c,
            (None, Some(c)) => c * store.active().params().pt_count as f64,
            (None, None) => calibrate_c_full(&store),
        };
        Arc::new(Server { store, cfg, c_fhe, c_full })
    }

    pub fn store(&self) -> &Arc<VersionedStore> {
        &self.store
    }

    pub fn c_fhe(&self) -> f64 {
        self.c_fhe
    }

    pub fn c_full(&self) -> f64 {
        self.c_full
    }

    pub fn bundle(&self) -> InitBundle {
        let v = self.store.active();
        InitBundle {
            n: v.len() as u64,
            kv_bits: v.kv_bits() as u32,
            version: v.id(),
            schemes: vec![Scheme::PlainDownload, Scheme::VarPir],
            he_params: self.store.context().params().clone(),
            encoding: *v.params(),
            pgm_blob: v.pgm_blob().to_vec(),
            c_fhe_per_plaintext: self.c_fhe,
            c_full_run: self.c_full,
            bandwidth_hint: self.cfg.bandwidth_hint,
            rtt_hint: self.cfg.rtt_hint,
        }
    }

    pub fn session(self: &Arc<Self>) -> ServerSession {
        ServerSession { id: self.store.open_session(), server: self.clone(), keys: None }
    }

    pub fn handle_admin(&self, m: Message) -> Message {
        match m {
            Message::AdminUpdateValue { key, value } => match self.store.update_value(key, &value) {
                Ok(u) => Message::AdminAck { version: u.version },
                Err(e) => Message::error(code::UPDATE_REJECTED, e.to_string()),
            },
            Message::AdminBatchUpdate { inserts, deletes } => match self.store.batch_update_keys(&inserts, &deletes) {
                Ok(u) => Message::AdminAck { version: u.version },
                Err(e) => Message::error(code::UPDATE_REJECTED, e.to_string()),
            },
            other => Message::error(code::UNKNOWN_TYPE, format!("type {:#04x} on admin endpoint", other.type_code())),
        }
    }

    /// Accepts client connections on `listener`, one thread per connection.
    pub fn serve(self: &Arc<Self>, listener: TcpListener) -> JoinHandle<()> {
        let server = self.clone();
        std::thread::spawn(move || accept_loop(listener, move |stream| {
            let mut session = server.session();
            connection(stream, |m| session.handle(m))
        }))
    }

    /// Accepts admin connections; bind `listener` to a loopback address.
    pub fn serve_admin(self: &Arc<Self>, listener: TcpListener) -> JoinHandle<()> {
        let server = self.clone();
        std::thread::spawn(move || accept_loop(listener, move |stream| {
            let local = stream.peer_addr().map(|a| a.ip().is_loopback()).unwrap_or(false);
            connection(stream, |m| {
                if local {
                    server.handle_admin(m)
                } else {
                    Message::error(code::NOT_ADMIN, "admin endpoint accepts loopback peers only")
                }
            })
        }))
    }
}

fn accept_loop<F>(listener: TcpListener, handler: F)
where
    F: Fn(TcpStream) -> Result<(), ProtocolError> + Send + Sync + Clone + 'static,
{
    for stream in listener.incoming() {
        match stream {
            Ok(s) => {
                let h = handler.clone();
                std::thread::spawn(move || {
                    if let Err(e) = h(s) {
                        warn!("connection ended: {e}");
                    }
                });
            }
            Err(e) => warn!("accept failed: {e}"),
        }
    }
}

fn connection(stream: TcpStream, mut handle: impl FnMut(Message) -> Message) -> Result<(), ProtocolError> {
    stream.set_nodelay(true)?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream);
    while let Some(frame) = read_frame(&mut reader)? {
        let reply = match Message::from_frame(&frame) {
            Ok(m) => handle(m),
            Err(e) => Message::error(code::MALFORMED, e.to_string()),
        };
        write_frame(&mut writer, &reply.to_frame())?;
    }
    Ok(())
}

/// Per-client state: the uploaded key material and the session id used for
/// version acknowledgement.
pub struct ServerSession {
    server: Arc<Server>,
    id: u64,
    keys: Option<GaloisKeySet>,
}

impl Drop for ServerSession {
    fn drop(&mut self) {
        self.server.store.close_session(self.id);
    }
}

impl ServerSession {
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn handle(&mut self, m: Message) -> Message {
        match m {
            Message::InitReq => Message::InitResp(self.server.bundle()),
            Message::GaloisKeys(blob) => match GaloisKeySet::from_bytes(&blob, self.server.store.context()) {
                Ok(k) => {
                    self.keys = Some(k);
                    Message::KeysAck
                }
                Err(e) => Message::error(code::MALFORMED, e.to_string()),
            },
            Message::QueryPlain { version, kind, l, r } => self.at_version(version, |v| {
                match ObfuscatedRange::from_wire(kind, l, r, v.len()) {
                    Some(range) => Message::RespPlain(v.plain_range(&range)),
                    None => Message::error(code::BAD_RANGE, format!("range {kind:?} [{l}, {r}] outside {}", v.len())),
                }
            }),
            Message::QueryVarPir { version, kind, l_pt, r_pt, cts } => {
                let Some(keys) = self.keys.as_ref() else {
                    return Message::error(code::NO_KEYS, "galois keys not uploaded");
                };
                let ctx = self.server.store.context().clone();
                let store = self.server.store.clone();
                let id = self.id;
                at_version(&store, id, version, |v| {
                    let pc = v.params().pt_count;
                    let range = match PtRange::from_wire(kind, l_pt as usize, r_pt as usize, pc) {
                        Ok(r) => r,
                        Err(e) => return Message::error(code::BAD_RANGE, e.to_string()),
                    };
                    let cts = match cts.iter().map(|b| crate::he::Ciphertext::from_bytes(b, &ctx)).collect() {
                        Ok(c) => c,
                        Err(e) => return Message::error(code::MALFORMED, e.to_string()),
                    };
                    match v.encoded().answer(&VarPirQuery { range, cts }, keys) {
                        Ok(ct) => Message::RespVarPir(ct.to_bytes(&ctx)),
                        Err(e) => Message::error(code::COMPUTE, e.to_string()),
                    }
                })
            }
            other => Message::error(code::UNKNOWN_TYPE, format!("unexpected type {:#04x}", other.type_code())),
        }
    }

    fn at_version(&self, version: u64, f: impl FnOnce(&Version) -> Message) -> Message {
        at_version(&self.server.store, self.id, version, f)
    }
}

/// Runs `f` against the requested version. Requests for a replaced version
/// are answered from it when still kept, wrapped in a notice carrying the
/// current version and index.
fn at_version(store: &VersionedStore, session: u64, version: u64, f: impl FnOnce(&Version) -> Message) -> Message {
    let active = store.active();
    if version == active.id() {
        store.acknowledge(session, version);
        return f(&active);
    }
    if version > active.id() {
        return Message::error(code::FUTURE_VERSION, format!("version {version} is newer than {}", active.id()));
    }
    let inner = match store.version(version) {
        Some(old) => f(&old),
        None => Message::error(code::VERSION_GONE, format!("version {version} no longer kept")),
    };
    Message::Stale { version: active.id(), pgm_blob: active.pgm_blob().to_vec(), inner: Box::new(inner) }
}
