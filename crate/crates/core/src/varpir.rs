//! Variable-range PIR over misaligned plaintext blocks.
//!
//! Plaintext `j` packs the pairs at positions `[j*step, j*step + M)`, so
//! consecutive blocks overlap by `M - step` pairs and any predicted window of
//! at most `overlap + 1` positions sits inside the block of its left edge.
//! A query names a cyclic run of block ids and carries an encrypted one-hot
//! selector over that run; the server folds only those blocks.

use std::ops::Range;
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::{Mutex, OnceLock, RwLock, RwLockReadGuard};

use rand::{CryptoRng, RngCore};
use thiserror::Error;

use crate::dldp::{ObfuscatedRange, RangeKind};
use crate::he::{
    add_ct, encrypt, expansion_scale, giant_plaintexts, split_fold, Ciphertext, FoldPlan,
    GaloisKeySet, HeContext, HeError, PlainNtt, PlainPoly, SecretKey,
};
use crate::pgm::PredictedRange;
use crate::store::{KvStore, SENTINEL_KEY};

#[derive(Debug, Error)]
pub enum VarPirError {
    #[error("window of {window} positions does not fit an overlap of {overlap} pairs")]
    Fit { window: usize, overlap: usize },
    #[error("a {kv_bits}-bit pair leaves room for fewer than two pairs per plaintext")]
    PairTooWide { kv_bits: usize },
    #[error("bad layout: {0}")]
    Layout(String),
    #[error("obfuscated range does not cover the predicted window")]
    NotCovered,
    #[error("expected {expected} query ciphertexts, got {found}")]
    CiphertextCount { expected: usize, found: usize },
    #[error(transparent)]
    He(#[from] HeError),
}

/// Block layout for a store of `n` pairs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EncodingParams {
    pub n: usize,
    pub kv_bits: usize,
    pub ring_degree: usize,
    pub limb_bits: u32,
    pub slots_per_pair: usize,
    pub pairs_per_pt: usize,
    pub overlap: usize,
    pub step: usize,
    pub pt_count: usize,
}

impl EncodingParams {
    /// Default layout: as many pairs as fit, half of them overlapping. Fails
    /// unless a `2*eps_data + 1` window fits one block.
    pub fn new(n: usize, kv_bits: usize, ring_degree: usize, limb_bits: u32, eps_data: u32) -> Result<Self, VarPirError> {
        let slots = kv_bits.div_ceil(limb_bits as usize);
        let m = ring_degree / slots.max(1);
        if m < 2 {
            return Err(VarPirError::PairTooWide { kv_bits });
        }
        let p = Self::with_layout(n, kv_bits, ring_degree, limb_bits, m, m / 2)?;
        let window = 2 * eps_data as usize + 1;
        if window >= p.overlap + 2 {
            return Err(VarPirError::Fit { window, overlap: p.overlap });
        }
        Ok(p)
    }

    pub fn for_store(store: &KvStore, ctx: &HeContext, eps_data: u32) -> Result<Self, VarPirError> {
        Self::new(store.len(), store.kv_bits(), ctx.degree(), ctx.params().limb_bits(), eps_data)
    }

    /// Explicit `M` and overlap, without the window check.
    pub fn with_layout(
        n: usize,
        kv_bits: usize,
        ring_degree: usize,
        limb_bits: u32,
        pairs_per_pt: usize,
        overlap: usize,
    ) -> Result<Self, VarPirError> {
        if n == 0 || kv_bits == 0 || kv_bits % 8 != 0 || limb_bits == 0 || limb_bits > 32 {
            return Err(VarPirError::Layout(format!("n={n} kv_bits={kv_bits} limb_bits={limb_bits}")));
        }
        let slots = kv_bits.div_ceil(limb_bits as usize);
        if pairs_per_pt < 2 || overlap >= pairs_per_pt || pairs_per_pt * slots > ring_degree {
            return Err(VarPirError::Layout(format!("M={pairs_per_pt} overlap={overlap} slots={slots}")));
        }
        let step = pairs_per_pt - overlap;
        Ok(EncodingParams {
            n,
            kv_bits,
            ring_degree,
            limb_bits,
            slots_per_pair: slots,
            pairs_per_pt,
            overlap,
            step,
            pt_count: n.div_ceil(step),
        })
    }

    pub fn value_bytes(&self) -> usize {
        self.kv_bits / 8 - 8
    }

    pub fn pos_to_pt_id(&self, pos: usize) -> usize {
        (pos / self.step).min(self.pt_count - 1)
    }

    /// Positions packed into block `j`, including padded ones past `n`.
    pub fn coverage(&self, j: usize) -> Range<usize> {
        j * self.step..j * self.step + self.pairs_per_pt
    }

    /// Blocks whose coverage contains `pos`.
    pub fn covering_blocks(&self, pos: usize) -> Range<usize> {
        let first = (pos + 1).saturating_sub(self.pairs_per_pt).div_ceil(self.step);
        let last = (pos / self.step).min(self.pt_count - 1);
        first..last + 1
    }

    /// Number of query ciphertexts for a run of `w_pt` blocks.
    pub fn query_cts(&self, w_pt: usize) -> usize {
        w_pt.div_ceil(self.ring_degree)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(28);
        out.extend_from_slice(&(self.n as u64).to_le_bytes());
        for v in [self.kv_bits, self.ring_degree, self.pairs_per_pt, self.overlap] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.extend_from_slice(&self.limb_bits.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, VarPirError> {
        if bytes.len() != 28 {
            return Err(VarPirError::Layout(format!("{} bytes of encoding parameters", bytes.len())));
        }
        let n = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
        let word = |i: usize| u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().unwrap());
        Self::with_layout(n, word(0) as usize, word(1) as usize, word(4), word(2) as usize, word(3) as usize)
    }
}

/// Splits `key ‖ value` (key big-endian) into `limb_bits`-bit limbs,
/// most significant first. The last limb holds the leftover low bits.
pub fn encode_pair(key: u64, value: &[u8], limb_bits: u32, out: &mut [u64]) {
    let mut acc: u128 = 0;
    let mut have = 0u32;
    let mut limb = 0;
    for &byte in key.to_be_bytes().iter().chain(value) {
        acc = (acc << 8) | byte as u128;
        have += 8;
        while have >= limb_bits {
            have -= limb_bits;
            out[limb] = ((acc >> have) & ((1u128 << limb_bits) - 1)) as u64;
            limb += 1;
        }
    }
    if have > 0 {
        out[limb] = (acc & ((1u128 << have) - 1)) as u64;
        limb += 1;
    }
    debug_assert_eq!(limb, out.len());
}

/// Inverse of [`encode_pair`] for a pair with `value_bytes` of value.
pub fn decode_pair(limbs: &[u64], limb_bits: u32, value_bytes: usize) -> (u64, Vec<u8>) {
    let total_bits = 8 * (8 + value_bytes) as u32;
    let mut bytes = Vec::with_capacity(8 + value_bytes);
    let mut acc: u128 = 0;
    let mut have = 0u32;
    let mut consumed = 0u32;
    for &l in limbs {
        let width = limb_bits.min(total_bits - consumed);
        consumed += width;
        acc = (acc << width) | (l as u128 & ((1u128 << width) - 1));
        have += width;
        while have >= 8 {
            have -= 8;
            bytes.push((acc >> have) as u8);
        }
    }
    let key = u64::from_be_bytes(bytes[..8].try_into().unwrap());
    bytes.drain(..8);
    (key, bytes)
}

/// Packs block `j`; `pair(pos)` is consulted for every position below `n`.
pub fn encode_block<F>(params: &EncodingParams, j: usize, mut pair: F) -> PlainPoly
where
    F: FnMut(usize, &mut dyn FnMut(u64, &[u8])),
{
    let slots = params.slots_per_pair;
    let mut coeffs = vec![0u64; params.ring_degree];
    let zero = vec![0u8; params.value_bytes()];
    for (m, pos) in params.coverage(j).enumerate() {
        let out = &mut coeffs[m * slots..(m + 1) * slots];
        if pos < params.n {
            pair(pos, &mut |k, v| encode_pair(k, v, params.limb_bits, out));
        } else {
            encode_pair(SENTINEL_KEY, &zero, params.limb_bits, out);
        }
    }
    PlainPoly::from_raw(coeffs)
}

/// All real pairs packed in block `j`, with their positions.
pub fn decode_block(pt: &PlainPoly, j: usize, params: &EncodingParams) -> Vec<(usize, u64, Vec<u8>)> {
    let slots = params.slots_per_pair;
    params
        .coverage(j)
        .enumerate()
        .filter(|&(_, pos)| pos < params.n)
        .map(|(m, pos)| {
            let (k, v) = decode_pair(&pt.coeffs()[m * slots..(m + 1) * slots], params.limb_bits, params.value_bytes());
            (pos, k, v)
        })
        .filter(|(_, k, _)| *k != SENTINEL_KEY)
        .collect()
}

/// Cyclic run of block ids named by a query.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PtRange {
    pub kind: RangeKind,
    pub l_pt: usize,
    pub r_pt: usize,
    pub width: usize,
    pub pt_count: usize,
}

impl PtRange {
    pub fn full(pt_count: usize) -> Self {
        PtRange { kind: RangeKind::Full, l_pt: 0, r_pt: pt_count - 1, width: pt_count, pt_count }
    }

    /// Blocks touched by the positions of `obf`. Runs of at least
    /// `promote_at` blocks are widened to the full run, which the server
    /// answers from a precomputed fold.
    pub fn from_obfuscated(obf: &ObfuscatedRange, params: &EncodingParams, promote_at: usize) -> Self {
        let pc = params.pt_count;
        let l_pt = params.pos_to_pt_id(obf.l);
        let r_pt = params.pos_to_pt_id(obf.r);
        let range = match obf.kind {
            RangeKind::Full => return Self::full(pc),
            kind => PtRange::from_wire(kind, l_pt, r_pt, pc).expect("ids derived from a valid range"),
        };
        if range.width >= promote_at {
            Self::full(pc)
        } else {
            range
        }
    }

    /// Interprets wire fields. A wrapped run whose ends meet covers every
    /// block, starting at `l_pt`.
    pub fn from_wire(kind: RangeKind, l_pt: usize, r_pt: usize, pt_count: usize) -> Result<Self, VarPirError> {
        if l_pt >= pt_count || r_pt >= pt_count {
            return Err(VarPirError::Layout(format!("block ids {l_pt}..{r_pt} beyond {pt_count}")));
        }
        let width = match kind {
            RangeKind::Full => {
                if l_pt != 0 || r_pt != pt_count - 1 {
                    return Err(VarPirError::Layout("full run must span every block".into()));
                }
                pt_count
            }
            RangeKind::Contiguous => {
                if r_pt < l_pt {
                    return Err(VarPirError::Layout("contiguous run ends before it starts".into()));
                }
                r_pt - l_pt + 1
            }
            RangeKind::Wrapped => (pt_count - l_pt + r_pt + 1).min(pt_count),
        };
        Ok(PtRange { kind, l_pt, r_pt, width, pt_count })
    }

    pub fn id(&self, offset: usize) -> usize {
        (self.l_pt + offset) % self.pt_count
    }

    pub fn ids(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.width).map(|k| self.id(k))
    }

    pub fn offset_of(&self, id: usize) -> Option<usize> {
        let k = (id + self.pt_count - self.l_pt) % self.pt_count;
        (k < self.width).then_some(k)
    }

    pub fn is_canonical_full(&self) -> bool {
        self.l_pt == 0 && self.width == self.pt_count
    }
}

/// Client request: the run of blocks and one selector ciphertext per
/// `ring_degree` blocks of it.
#[derive(Clone, Debug)]
pub struct VarPirQuery {
    pub range: PtRange,
    pub cts: Vec<Ciphertext>,
}

pub fn build_query<R: RngCore + CryptoRng>(
    pred: &PredictedRange,
    obf: &ObfuscatedRange,
    params: &EncodingParams,
    promote_at: usize,
    sk: &SecretKey,
    ctx: &HeContext,
    rng: &mut R,
) -> Result<VarPirQuery, VarPirError> {
    if !obf.covers(pred) {
        return Err(VarPirError::NotCovered);
    }
    let range = PtRange::from_obfuscated(obf, params, promote_at);
    let target = params.pos_to_pt_id(pred.lo);
    let offset = range.offset_of(target).ok_or(VarPirError::NotCovered)?;
    let n = ctx.degree();
    let cts = (0..params.query_cts(range.width))
        .map(|b| {
            let width = (range.width - b * n).min(n);
            let mut coeffs = vec![0u64; n];
            if offset / n == b {
                coeffs[offset % n] = expansion_scale(width, ctx);
            }
            encrypt(&PlainPoly::from_raw(coeffs), sk, ctx, rng)
        })
        .collect();
    Ok(VarPirQuery { range, cts })
}

/// Giant-step plaintexts for one selector block of the canonical full run.
struct FullChunk {
    plan: FoldPlan,
    first: usize,
    rows: Vec<RwLock<Vec<PlainNtt>>>,
}

/// Encoded blocks of one store version.
pub struct EncodedStore {
    params: EncodingParams,
    version_id: u64,
    ctx: std::sync::Arc<HeContext>,
    blocks: Vec<RwLock<PlainPoly>>,
    full: OnceLock<Vec<FullChunk>>,
    /// Serialises block rewrites against cache construction.
    gate: Mutex<()>,
}

fn read<T>(lock: &RwLock<T>) -> RwLockReadGuard<'_, T> {
    lock.read().unwrap_or_else(|e| e.into_inner())
}

fn write<T>(lock: &RwLock<T>) -> std::sync::RwLockWriteGuard<'_, T> {
    lock.write().unwrap_or_else(|e| e.into_inner())
}

impl EncodedStore {
    pub fn encode(store: &KvStore, ctx: std::sync::Arc<HeContext>, eps_data: u32) -> Result<Self, VarPirError> {
        let params = EncodingParams::for_store(store, &ctx, eps_data)?;
        Ok(Self::encode_with(store, params, ctx))
    }

    pub fn encode_with(store: &KvStore, params: EncodingParams, ctx: std::sync::Arc<HeContext>) -> Self {
        let blocks = crate::par::map_range(params.pt_count, |j| {
            RwLock::new(encode_block(&params, j, |pos, emit| emit(store.key(pos), store.value(pos))))
        });
        Self::from_blocks(params, store.version_id(), ctx, blocks)
    }

    /// Reuses `prefix` as the first blocks and encodes the rest from `store`.
    pub fn encode_reusing(
        store: &KvStore,
        params: EncodingParams,
        ctx: std::sync::Arc<HeContext>,
        prefix: Vec<PlainPoly>,
    ) -> Self {
        let reused = prefix.len();
        let mut blocks: Vec<RwLock<PlainPoly>> = prefix.into_iter().map(RwLock::new).collect();
        blocks.extend(crate::par::map_range(params.pt_count - reused, |i| {
            RwLock::new(encode_block(&params, reused + i, |pos, emit| emit(store.key(pos), store.value(pos))))
        }));
        Self::from_blocks(params, store.version_id(), ctx, blocks)
    }

    fn from_blocks(
        params: EncodingParams,
        version_id: u64,
        ctx: std::sync::Arc<HeContext>,
        blocks: Vec<RwLock<PlainPoly>>,
    ) -> Self {
        assert_eq!(blocks.len(), params.pt_count);
        EncodedStore { params, version_id, ctx, blocks, full: OnceLock::new(), gate: Mutex::new(()) }
    }

    pub fn params(&self) -> &EncodingParams {
        &self.params
    }

    pub fn version_id(&self) -> u64 {
        self.version_id
    }

    pub fn context(&self) -> &HeContext {
        &self.ctx
    }

    pub fn block(&self, j: usize) -> RwLockReadGuard<'_, PlainPoly> {
        read(&self.blocks[j])
    }

    pub fn block_copy(&self, j: usize) -> PlainPoly {
        self.block(j).clone()
    }

    /// Rewrites the given blocks from `pair` and refreshes any cached rows
    /// they feed. Returns the rewritten ids.
    pub fn reencode<F>(&self, ids: Range<usize>, mut pair: F) -> Vec<usize>
    where
        F: FnMut(usize, &mut dyn FnMut(u64, &[u8])),
    {
        let _gate = self.gate.lock().unwrap_or_else(|e| e.into_inner());
        let ids: Vec<usize> = ids.collect();
        for &j in &ids {
            let fresh = encode_block(&self.params, j, &mut pair);
            *write(&self.blocks[j]) = fresh;
        }
        if let Some(chunks) = self.full.get() {
            let mut stale: Vec<(usize, usize)> = ids
                .iter()
                .map(|&j| {
                    let c = j / self.ctx.degree();
                    (c, (j - chunks[c].first) % chunks[c].plan.rows())
                })
                .collect();
            stale.sort_unstable();
            stale.dedup();
            for (c, u) in stale {
                let rows = self.giant_row(&chunks[c].plan, u, |k| chunks[c].first + k);
                *write(&chunks[c].rows[u]) = rows;
            }
        }
        ids
    }

    fn giant_row(&self, plan: &FoldPlan, u: usize, id: impl Fn(usize) -> usize) -> Vec<PlainNtt> {
        let members: Vec<usize> = plan.row_members(u).collect();
        let guards: Vec<_> = members.iter().map(|&k| self.block(id(k))).collect();
        giant_plaintexts(
            plan,
            u,
            |k| members.iter().position(|&m| m == k).map(|i| &*guards[i]),
            &self.ctx,
        )
    }

    /// Builds the precomputed fold of the canonical full run.
    pub fn warm(&self) {
        if self.full.get().is_some() {
            return;
        }
        let _gate = self.gate.lock().unwrap_or_else(|e| e.into_inner());
        self.full.get_or_init(|| {
            let n = self.ctx.degree();
            (0..self.params.query_cts(self.params.pt_count))
                .map(|c| {
                    let first = c * n;
                    let plan = FoldPlan::new((self.params.pt_count - first).min(n));
                    let rows = crate::par::map_range(plan.rows(), |u| {
                        RwLock::new(self.giant_row(&plan, u, |k| first + k))
                    });
                    FullChunk { plan, first, rows }
                })
                .collect()
        });
    }

    pub fn is_warm(&self) -> bool {
        self.full.get().is_some()
    }

    pub fn answer(&self, query: &VarPirQuery, keys: &GaloisKeySet) -> Result<Ciphertext, VarPirError> {
        self.answer_inner(query, keys, None)
    }

    /// Like [`answer`](Self::answer), also reporting how many times each
    /// block of the run was loaded.
    pub fn answer_traced(&self, query: &VarPirQuery, keys: &GaloisKeySet) -> Result<(Ciphertext, Vec<u32>), VarPirError> {
        let touches: Vec<AtomicU32> = (0..query.range.width).map(|_| AtomicU32::new(0)).collect();
        let ct = self.answer_inner(query, keys, Some(&touches))?;
        Ok((ct, touches.into_iter().map(AtomicU32::into_inner).collect()))
    }

    fn answer_inner(
        &self,
        query: &VarPirQuery,
        keys: &GaloisKeySet,
        touches: Option<&[AtomicU32]>,
    ) -> Result<Ciphertext, VarPirError> {
        let range = PtRange::from_wire(query.range.kind, query.range.l_pt, query.range.r_pt, self.params.pt_count)?;
        let expected = self.params.query_cts(range.width);
        if query.cts.len() != expected {
            return Err(VarPirError::CiphertextCount { expected, found: query.cts.len() });
        }
        let n = self.ctx.degree();
        if range.is_canonical_full() {
            self.warm();
        }
        let mut total: Option<Ciphertext> = None;
        for (c, ct) in query.cts.iter().enumerate() {
            let first = c * n;
            let plan = FoldPlan::new((range.width - first).min(n));
            let part = if range.is_canonical_full() {
                let chunk = &self.full.get().expect("warmed")[c];
                let rows: Vec<_> = chunk.rows.iter().map(read).collect();
                if let Some(t) = touches {
                    for k in 0..plan.width {
                        t[first + k].fetch_add(1, Ordering::Relaxed);
                    }
                }
                split_fold(ct, &plan, keys, &self.ctx, |u, s| &rows[u][s])?
            } else {
                let guards: Vec<_> = (0..plan.width).map(|k| self.block(range.id(first + k))).collect();
                let rows = crate::par::map_range(plan.rows(), |u| {
                    giant_plaintexts(
                        &plan,
                        u,
                        |k| {
                            if let Some(t) = touches {
                                t[first + k].fetch_add(1, Ordering::Relaxed);
                            }
                            Some(&*guards[k])
                        },
                        &self.ctx,
                    )
                });
                drop(guards);
                split_fold(ct, &plan, keys, &self.ctx, |u, s| &rows[u][s])?
            };
            total = Some(match total {
                None => part,
                Some(acc) => add_ct(&acc, &part, &self.ctx),
            });
        }
        Ok(total.expect("at least one selector"))
    }
}

/// Looks `key` up among the pairs of the target block that fall inside the
/// predicted window.
pub fn decode_answer(pt: &PlainPoly, pred: &PredictedRange, key: u64, params: &EncodingParams) -> Option<Vec<u8>> {
    let j = params.pos_to_pt_id(pred.lo);
    let window: Vec<(usize, u64, Vec<u8>)> =
        decode_block(pt, j, params).into_iter().filter(|(pos, _, _)| pred.contains(*pos)).collect();
    window
        .binary_search_by_key(&key, |(_, k, _)| *k)
        .ok()
        .map(|i| window[i].2.clone())
}
