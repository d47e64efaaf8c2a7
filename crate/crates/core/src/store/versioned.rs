//! Servable versions and their update lifecycle.
//!
//! Values of the active version can be rewritten in place under per-chunk
//! locks. Key changes build a complete replacement version off to the side
//! and swap it in atomically; the replaced version stays readable until every
//! session has moved past it or it times out.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use log::{debug, info};
use thiserror::Error;

use super::{KvStore, StoreError};
use crate::dldp::{ObfuscatedRange, RangeKind};
use crate::he::{HeContext, PlainPoly};
use crate::pgm::{PgmError, PgmIndex, DEFAULT_EPS_DATA, DEFAULT_EPS_MODEL};
use crate::varpir::{EncodedStore, EncodingParams, VarPirError};

#[derive(Debug, Error)]
pub enum VersionError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Index(#[from] PgmError),
    #[error(transparent)]
    Encoding(#[from] VarPirError),
}

#[derive(Clone, Debug)]
pub struct StoreConfig {
    pub eps_data: u32,
    pub eps_model: u32,
    /// Explicit `(M, overlap)` block layout instead of the default.
    pub layout: Option<(usize, usize)>,
    /// How long a replaced version outlives sessions that never move on.
    pub retire_after: Duration,
}

impl Default for StoreConfig {
    fn default() -> Self {
        StoreConfig {
            eps_data: DEFAULT_EPS_DATA,
            eps_model: DEFAULT_EPS_MODEL,
            layout: None,
            retire_after: Duration::from_secs(60),
        }
    }
}

fn read<T>(lock: &RwLock<T>) -> std::sync::RwLockReadGuard<'_, T> {
    lock.read().unwrap_or_else(|e| e.into_inner())
}

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

/// One immutable key set with its index and encoding.
pub struct Version {
    id: u64,
    keys: Vec<u64>,
    value_bytes: usize,
    chunk: usize,
    values: Vec<RwLock<Vec<u8>>>,
    pgm: PgmIndex,
    pgm_blob: Vec<u8>,
    encoded: EncodedStore,
}

impl Version {
    fn build(store: &KvStore, ctx: Arc<HeContext>, cfg: &StoreConfig, prefix: Vec<PlainPoly>) -> Result<Self, VersionError> {
        let params = match cfg.layout {
            Some((m, overlap)) => EncodingParams::with_layout(
                store.len(),
                store.kv_bits(),
                ctx.degree(),
                ctx.params().limb_bits(),
                m,
                overlap,
            )?,
            None => EncodingParams::for_store(store, &ctx, cfg.eps_data)?,
        };
        let pgm = PgmIndex::build(store.keys(), cfg.eps_data, cfg.eps_model)?;
        let encoded = EncodedStore::encode_reusing(store, params, ctx, prefix);
        let chunk = params.step;
        let vb = store.value_bytes();
        let values = store.values().chunks(chunk * vb).map(|c| RwLock::new(c.to_vec())).collect();
        Ok(Version {
            id: store.version_id(),
            keys: store.keys().to_vec(),
            value_bytes: vb,
            chunk,
            values,
            pgm_blob: pgm.to_bytes(),
            pgm,
            encoded,
        })
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keys(&self) -> &[u64] {
        &self.keys
    }

    pub fn value_bytes(&self) -> usize {
        self.value_bytes
    }

    pub fn pair_bytes(&self) -> usize {
        8 + self.value_bytes
    }

    pub fn kv_bits(&self) -> usize {
        8 * self.pair_bytes()
    }

    pub fn pgm(&self) -> &PgmIndex {
        &self.pgm
    }

    pub fn pgm_blob(&self) -> &[u8] {
        &self.pgm_blob
    }

    pub fn encoded(&self) -> &EncodedStore {
        &self.encoded
    }

    pub fn params(&self) -> &EncodingParams {
        self.encoded.params()
    }

    pub fn value(&self, pos: usize) -> Vec<u8> {
        let c = read(&self.values[pos / self.chunk]);
        let off = (pos % self.chunk) * self.value_bytes;
        c[off..off + self.value_bytes].to_vec()
    }

    pub fn get(&self, key: u64) -> Option<Vec<u8>> {
        self.keys.binary_search(&key).ok().map(|p| self.value(p))
    }

    /// Appends pairs `[start, end)` in wire layout, locking each chunk once.
    pub fn write_pairs(&self, start: usize, end: usize, out: &mut Vec<u8>) {
        let mut pos = start;
        while pos < end {
            let c = pos / self.chunk;
            let stop = end.min((c + 1) * self.chunk);
            let guard = read(&self.values[c]);
            for p in pos..stop {
                let off = (p % self.chunk) * self.value_bytes;
                out.extend_from_slice(&self.keys[p].to_le_bytes());
                out.extend_from_slice(&guard[off..off + self.value_bytes]);
            }
            pos = stop;
        }
    }

    /// Raw pairs of an obfuscated range, wrapped ranges in cyclic order.
    pub fn plain_range(&self, range: &ObfuscatedRange) -> Vec<u8> {
        let mut out = Vec::with_capacity(range.len() * self.pair_bytes());
        match range.kind {
            RangeKind::Contiguous => self.write_pairs(range.l, range.r + 1, &mut out),
            RangeKind::Wrapped => {
                self.write_pairs(range.l, self.len(), &mut out);
                self.write_pairs(0, range.r + 1, &mut out);
            }
            RangeKind::Full => self.write_pairs(0, self.len(), &mut out),
        }
        out
    }

    pub fn snapshot(&self) -> KvStore {
        let mut values = Vec::with_capacity(self.len() * self.value_bytes);
        for c in &self.values {
            values.extend_from_slice(&read(c));
        }
        KvStore::new(self.keys.clone(), values, self.value_bytes, self.id).expect("version holds a valid store")
    }

    fn set_value(&self, pos: usize, value: &[u8]) {
        let mut c = self.values[pos / self.chunk].write().unwrap_or_else(|e| e.into_inner());
        let off = (pos % self.chunk) * self.value_bytes;
        c[off..off + self.value_bytes].copy_from_slice(value);
    }
}

/// Outcome of an in-place value update.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValueUpdate {
    pub version: u64,
    pub position: usize,
    pub blocks: Vec<usize>,
}

/// Outcome of a key-set update.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BatchUpdate {
    pub version: u64,
    pub first_changed: usize,
    pub reused_blocks: usize,
}

struct Retired {
    version: Arc<Version>,
    since: Instant,
}

/// The served version, any retired ones still readable, and the sessions
/// reading them.
pub struct VersionedStore {
    ctx: Arc<HeContext>,
    cfg: StoreConfig,
    active: RwLock<Arc<Version>>,
    retired: Mutex<Vec<Retired>>,
    admin: Mutex<()>,
    sessions: Mutex<HashMap<u64, u64>>,
    next_session: AtomicU64,
}

impl VersionedStore {
    pub fn new(store: KvStore, ctx: Arc<HeContext>, cfg: StoreConfig) -> Result<Self, VersionError> {
        let v = Version::build(&store, ctx.clone(), &cfg, Vec::new())?;
        info!("serving version {} with {} pairs in {} blocks", v.id, v.len(), v.params().pt_count);
        Ok(VersionedStore {
            ctx,
            cfg,
            active: RwLock::new(Arc::new(v)),
            retired: Mutex::new(Vec::new()),
            admin: Mutex::new(()),
            sessions: Mutex::new(HashMap::new()),
            next_session: AtomicU64::new(1),
        })
    }

    pub fn context(&self) -> &Arc<HeContext> {
        &self.ctx
    }

    pub fn config(&self) -> &StoreConfig {
        &self.cfg
    }

    pub fn active(&self) -> Arc<Version> {
        read(&self.active).clone()
    }

    /// The active version or a retired one that is still kept.
    pub fn version(&self, id: u64) -> Option<Arc<Version>> {
        let active = self.active();
        if active.id == id {
            return Some(active);
        }
        self.collect_retired();
        lock(&self.retired).iter().find(|r| r.version.id == id).map(|r| r.version.clone())
    }

    pub fn retired_versions(&self) -> Vec<u64> {
        lock(&self.retired).iter().map(|r| r.version.id).collect()
    }

    pub fn open_session(&self) -> u64 {
        let id = self.next_session.fetch_add(1, Ordering::Relaxed);
        lock(&self.sessions).insert(id, self.active().id);
        id
    }

    pub fn close_session(&self, session: u64) {
        lock(&self.sessions).remove(&session);
        self.collect_retired();
    }

    /// Records that `session` now works against `version`.
    pub fn acknowledge(&self, session: u64, version: u64) {
        if let Some(v) = lock(&self.sessions).get_mut(&session) {
            *v = (*v).max(version);
        }
        self.collect_retired();
    }

    /// Drops retired versions no session still uses, and expired ones.
    pub fn collect_retired(&self) {
        let oldest_in_use = lock(&self.sessions).values().copied().min();
        let timeout = self.cfg.retire_after;
        lock(&self.retired).retain(|r| {
            let in_use = oldest_in_use.is_some_and(|v| v <= r.version.id);
            let keep = in_use && r.since.elapsed() < timeout;
            if !keep {
                debug!("dropping retired version {}", r.version.id);
            }
            keep
        });
    }

    pub fn update_value(&self, key: u64, value: &[u8]) -> Result<ValueUpdate, StoreError> {
        let _admin = lock(&self.admin);
        let v = self.active();
        if value.len() != v.value_bytes {
            return Err(StoreError::ValueLength { index: 0, found: value.len(), expected: v.value_bytes });
        }
        let pos = v.keys.binary_search(&key).map_err(|_| StoreError::KeyNotFound(key))?;
        v.set_value(pos, value);
        let blocks = v.encoded.reencode(v.params().covering_blocks(pos), |p, emit| emit(v.keys[p], &v.value(p)));
        Ok(ValueUpdate { version: v.id, position: pos, blocks })
    }

    /// Builds the next version from `(active ∪ inserts) \ deletes` and swaps
    /// it in. Blocks lying wholly before the first changed position are
    /// carried over unchanged.
    pub fn batch_update_keys(&self, inserts: &[(u64, Vec<u8>)], deletes: &[u64]) -> Result<BatchUpdate, VersionError> {
        let _admin = lock(&self.admin);
        let old = self.active();
        let mut merged = old.snapshot().merged(inserts, deletes)?;
        merged.set_version_id(old.id + 1);
        let first_changed = inserts
            .iter()
            .map(|(k, _)| old.keys.partition_point(|x| x < k))
            .chain(deletes.iter().filter_map(|k| old.keys.binary_search(k).ok()))
            .min()
            .unwrap_or(old.len());
        let p = old.params();
        let reusable = if inserts.is_empty() && deletes.is_empty() {
            // nothing changed, padding included
            p.pt_count
        } else if first_changed >= p.pairs_per_pt {
            (first_changed - p.pairs_per_pt) / p.step + 1
        } else {
            0
        };
        let new_pt_count = merged.len().div_ceil(p.step);
        let reused = reusable.min(new_pt_count).min(p.pt_count);
        let prefix = (0..reused).map(|j| old.encoded.block_copy(j)).collect();
        let next = Version::build(&merged, self.ctx.clone(), &self.cfg, prefix)?;
        if old.encoded.is_warm() {
            next.encoded.warm();
        }
        let id = next.id;
        info!("version {id}: {} pairs, {reused} blocks reused", next.len());
        let replaced = std::mem::replace(&mut *self.active.write().unwrap_or_else(|e| e.into_inner()), Arc::new(next));
        lock(&self.retired).push(Retired { version: replaced, since: Instant::now() });
        self.collect_retired();
        Ok(BatchUpdate { version: id, first_changed, reused_blocks: reused })
    }
}
