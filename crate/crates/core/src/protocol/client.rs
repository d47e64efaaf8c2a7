//! Client half: offline initialisation and the private lookup pipeline.

use std::sync::Arc;

use log::debug;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::dldp::{
    obfuscate_range, BoundaryReduction, DistanceMode, LaplaceSampler, NoiseSource, ObfuscatedRange, PrivacyParams,
    DEFAULT_EPS_DP,
};
use crate::he::{decrypt, gen_galois_keys, keygen, Ciphertext, HeContext, SecretKey};
use crate::pgm::{PgmIndex, PredictedRange};
use crate::varpir::{build_query, decode_answer, EncodingParams, PtRange};

use super::cost::{select_scheme, CostInputs, Scheme};
use super::transport::Transport;
use super::wire::{InitBundle, Message};
use super::ProtocolError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SchemeChoice {
    #[default]
    Auto,
    Force(Scheme),
}

#[derive(Clone, Debug)]
pub struct ClientConfig {
    pub eps_dp: f64,
    pub mode: DistanceMode,
    pub reduction: BoundaryReduction,
    /// Link figures for the cost model; the server's hints when unset.
    pub bandwidth: Option<f64>,
    pub rtt: Option<f64>,
    pub max_retries: u32,
    /// Seed for keys and noise; drawn from the OS when unset.
    pub seed: Option<u64>,
}

impl Default for ClientConfig {
    fn default() -> Self {
        ClientConfig {
            eps_dp: DEFAULT_EPS_DP,
            mode: DistanceMode::Adjusted,
            reduction: BoundaryReduction::Folded,
            bandwidth: None,
            rtt: None,
            max_retries: 3,
            seed: None,
        }
    }
}

/// Result of one lookup with what was disclosed and transferred.
#[derive(Clone, Debug)]
pub struct Lookup {
    pub value: Option<Vec<u8>>,
    pub scheme: Scheme,
    pub predicted: PredictedRange,
    pub range: ObfuscatedRange,
    pub w_pt: usize,
    pub version: u64,
    pub retries: u32,
    pub request_bytes: usize,
    pub response_bytes: usize,
}

pub struct ClientSession<T> {
    transport: T,
    cfg: ClientConfig,
    bundle: InitBundle,
    ctx: Arc<HeContext>,
    sk: SecretKey,
    pgm: PgmIndex,
    params: EncodingParams,
    version: u64,
    cost: CostInputs,
    rng: ChaCha20Rng,
}

fn expect_reply(reply: Message, what: &str) -> ProtocolError {
    match reply {
        Message::Error { code, message } => ProtocolError::Server { code, message },
        other => ProtocolError::Unexpected { expected: what.to_string(), found: other.type_code() },
    }
}

impl<T: Transport> ClientSession<T> {
    /// Fetches the init bundle and uploads fresh key material.
    pub fn connect(mut transport: T, cfg: ClientConfig) -> Result<Self, ProtocolError> {
        let mut rng = match cfg.seed {
            Some(s) => ChaCha20Rng::seed_from_u64(s),
            None => ChaCha20Rng::from_entropy(),
        };
        let bundle = match call(&mut transport, &Message::InitReq)? {
            Message::InitResp(b) => b,
            other => return Err(expect_reply(other, "init response")),
        };
        let pgm = PgmIndex::from_bytes(&bundle.pgm_blob)?;
        if pgm.n() as u64 != bundle.n {
            return Err(ProtocolError::Malformed(format!("index covers {} pairs, bundle says {}", pgm.n(), bundle.n)));
        }
        let ctx = HeContext::new(bundle.he_params.clone())?;
        if bundle.encoding.n as u64 != bundle.n || bundle.encoding.ring_degree != ctx.degree() {
            return Err(ProtocolError::Malformed("encoding parameters disagree with the bundle".into()));
        }
        let sk = keygen(&ctx, &mut rng);
        let keys = gen_galois_keys(&sk, &ctx, &mut rng);
        match call(&mut transport, &Message::GaloisKeys(keys.to_bytes(&ctx)))? {
            Message::KeysAck => {}
            other => return Err(expect_reply(other, "key acknowledgement")),
        }
        let cost = CostInputs {
            bandwidth: cfg.bandwidth.unwrap_or(bundle.bandwidth_hint),
            rtt: cfg.rtt.unwrap_or(bundle.rtt_hint),
            c_fhe: bundle.c_fhe_per_plaintext,
            c_full: bundle.c_full_run,
            pt_count: bundle.encoding.pt_count,
            pair_bytes: bundle.kv_bits as usize / 8,
            query_ct_bytes: ctx.ciphertext_bytes(),
            answer_ct_bytes: ctx.ciphertext_bytes(),
            ring_degree: ctx.degree(),
        };
        Ok(ClientSession {
            transport,
            params: bundle.encoding,
            version: bundle.version,
            cfg,
            bundle,
            ctx,
            sk,
            pgm,
            cost,
            rng,
        })
    }

    pub fn bundle(&self) -> &InitBundle {
        &self.bundle
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn pgm(&self) -> &PgmIndex {
        &self.pgm
    }

    pub fn params(&self) -> &EncodingParams {
        &self.params
    }

    pub fn context(&self) -> &Arc<HeContext> {
        &self.ctx
    }

    pub fn secret_key(&self) -> &SecretKey {
        &self.sk
    }

    pub fn cost_inputs(&self) -> &CostInputs {
        &self.cost
    }

    pub fn set_link(&mut self, bandwidth: f64, rtt: f64) {
        self.cost.bandwidth = bandwidth;
        self.cost.rtt = rtt;
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    pub fn transport_mut(&mut self) -> &mut T {
        &mut self.transport
    }

    pub fn privacy(&self, t: u64) -> Result<PrivacyParams, ProtocolError> {
        Ok(PrivacyParams::with_mode(self.cfg.eps_dp, t, self.cfg.mode, self.pgm.eps_data())?)
    }

    /// Private lookup of `key` at distance `t`.
    pub fn lookup(&mut self, key: u64, t: u64, choice: SchemeChoice) -> Result<Lookup, ProtocolError> {
        let privacy = self.privacy(t)?;
        let mut noise = LaplaceSampler::new(ChaCha20Rng::from_rng(&mut self.rng).expect("seeding from a stream cipher"));
        self.lookup_with(key, &privacy, choice, &mut noise)
    }

    /// Lookup with explicit privacy parameters and noise.
    pub fn lookup_with(
        &mut self,
        key: u64,
        privacy: &PrivacyParams,
        choice: SchemeChoice,
        noise: &mut dyn NoiseSource,
    ) -> Result<Lookup, ProtocolError> {
        let mut retries = 0;
        loop {
            let pred = self.pgm.predict(key);
            let range = obfuscate_range(&pred, self.pgm.n(), privacy, self.cfg.reduction, noise);
            let w_pt = PtRange::from_obfuscated(&range, &self.params, self.cost.promote_at()).width;
            let scheme = match choice {
                SchemeChoice::Auto => select_scheme(range.len(), w_pt, &self.cost),
                SchemeChoice::Force(s) => s,
            };
            let request = self.request(&pred, &range, scheme)?.to_frame();
            let reply_frame = self.transport.exchange(&request)?;
            let value = match Message::from_frame(&reply_frame)? {
                Message::Stale { version, pgm_blob, .. } => {
                    if retries == self.cfg.max_retries {
                        return Err(ProtocolError::TooStale(retries));
                    }
                    retries += 1;
                    debug!("version {} replaced by {version}, retrying", self.version);
                    self.install(version, &pgm_blob)?;
                    continue;
                }
                Message::RespPlain(bytes) => self.decode_plain(&bytes, &pred, &range, key)?,
                Message::RespVarPir(blob) => {
                    let ct = Ciphertext::from_bytes(&blob, &self.ctx)?;
                    decode_answer(&decrypt(&ct, &self.sk, &self.ctx), &pred, key, &self.params)
                }
                other => return Err(expect_reply(other, "query response")),
            };
            return Ok(Lookup {
                value,
                scheme,
                predicted: pred,
                range,
                w_pt,
                version: self.version,
                retries,
                request_bytes: request.len(),
                response_bytes: reply_frame.len(),
            });
        }
    }

    /// The query message for a given window and disclosed range. Every field
    /// outside the ciphertext bodies depends on `range` alone.
    pub fn request(&mut self, pred: &PredictedRange, range: &ObfuscatedRange, scheme: Scheme) -> Result<Message, ProtocolError> {
        Ok(match scheme {
            Scheme::PlainDownload => Message::QueryPlain {
                version: self.version,
                kind: range.kind,
                l: range.l as u64,
                r: range.r as u64,
            },
            Scheme::VarPir => {
                let q = build_query(pred, range, &self.params, self.cost.promote_at(), &self.sk, &self.ctx, &mut self.rng)?;
                Message::QueryVarPir {
                    version: self.version,
                    kind: q.range.kind,
                    l_pt: q.range.l_pt as u64,
                    r_pt: q.range.r_pt as u64,
                    cts: q.cts.iter().map(|c| c.to_bytes(&self.ctx)).collect(),
                }
            }
        })
    }

    fn install(&mut self, version: u64, pgm_blob: &[u8]) -> Result<(), ProtocolError> {
        if version <= self.version {
            return Err(ProtocolError::Malformed(format!("version went from {} to {version}", self.version)));
        }
        let pgm = PgmIndex::from_bytes(pgm_blob)?;
        let p = self.params;
        self.params = EncodingParams::with_layout(pgm.n(), p.kv_bits, p.ring_degree, p.limb_bits, p.pairs_per_pt, p.overlap)?;
        self.pgm = pgm;
        self.version = version;
        self.cost.pt_count = self.params.pt_count;
        Ok(())
    }

    fn decode_plain(
        &self,
        bytes: &[u8],
        pred: &PredictedRange,
        range: &ObfuscatedRange,
        key: u64,
    ) -> Result<Option<Vec<u8>>, ProtocolError> {
        let pb = self.cost.pair_bytes;
        if bytes.len() != range.len() * pb {
            return Err(ProtocolError::Malformed(format!("{} bytes for {} pairs", bytes.len(), range.len())));
        }
        let window: Vec<&[u8]> = (pred.lo..=pred.hi)
            .map(|pos| {
                let i = range.index_of(pos).expect("range covers the window");
                &bytes[i * pb..(i + 1) * pb]
            })
            .collect();
        let key_of = |pair: &[u8]| u64::from_le_bytes(pair[..8].try_into().unwrap());
        Ok(window.binary_search_by_key(&key, |p| key_of(p)).ok().map(|i| window[i][8..].to_vec()))
    }
}

fn call<T: Transport>(transport: &mut T, m: &Message) -> Result<Message, ProtocolError> {
    Message::from_frame(&transport.exchange(&m.to_frame())?)
}
