//! Multi-level piecewise-linear learned index.
//!
//! Every level is fitted with a streaming shrinking-cone pass: each segment is
//! anchored at its first point and keeps the interval of slopes that hold all
//! covered points inside a corridor of half-height `eps`. When a point falls
//! outside, the midpoint of the last feasible interval is emitted. Levels are
//! built bottom-up over the first keys of the level below until one segment
//! remains.

use thiserror::Error;

pub const DEFAULT_EPS_DATA: u32 = 64;
pub const DEFAULT_EPS_MODEL: u32 = 4;

const MAGIC: &[u8; 4] = b"FPGM";
const FORMAT_VERSION: u16 = 1;
const HEADER_BYTES: usize = 4 + 2 + 4 + 4 + 8 + 4;
const SEGMENT_BYTES: usize = 24;

/// Slack kept inside the corridor so that rounding and floating-point
/// evaluation never push a prediction past the integer bound.
const FIT_MARGIN: f64 = 1e-3;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PgmError {
    #[error("keys must be strictly increasing (violated at index {0})")]
    Unsorted(usize),
    #[error("cannot index an empty key set")]
    Empty,
    #[error("error bounds must be at least 1")]
    BadEpsilon,
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported format version {0}")]
    Version(u16),
    #[error("truncated index payload")]
    Truncated,
    #[error("corrupt index: {0}")]
    Corrupt(&'static str),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearSegment {
    pub min_key: u64,
    pub slope: f64,
    pub intercept: f64,
}

impl LinearSegment {
    #[inline]
    pub fn evaluate(&self, key: u64) -> f64 {
        self.intercept + self.slope * key.saturating_sub(self.min_key) as f64
    }
}

/// Predicted position and the `±eps_data` window around it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PredictedRange {
    pub y_hat: usize,
    pub lo: usize,
    pub hi: usize,
}

impl PredictedRange {
    pub fn around(y_hat: usize, eps_data: usize, n: usize) -> Self {
        PredictedRange {
            y_hat,
            lo: y_hat.saturating_sub(eps_data),
            hi: (y_hat + eps_data).min(n - 1),
        }
    }

    pub fn len(&self) -> usize {
        self.hi - self.lo + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, pos: usize) -> bool {
        (self.lo..=self.hi).contains(&pos)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PgmIndex {
    eps_data: u32,
    eps_model: u32,
    n: u64,
    /// Top (single segment) first.
    levels: Vec<Vec<LinearSegment>>,
}

/// Fits one level over `(x_i, i)` for strictly increasing `xs`.
fn fit_level(xs: &[u64], eps: u32) -> Vec<LinearSegment> {
    let eps = eps as f64 - FIT_MARGIN;
    let mut segments = Vec::new();
    let mut start = 0usize;
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    let emit = |start: usize, lo: f64, hi: f64, out: &mut Vec<LinearSegment>| {
        let slope = if hi.is_infinite() { 0.0 } else { (0.5 * (lo + hi)).max(0.0) };
        out.push(LinearSegment { min_key: xs[start], slope, intercept: start as f64 });
    };
    for i in 1..xs.len() {
        let dx = (xs[i] - xs[start]) as f64;
        let dy = (i - start) as f64;
        let new_lo = lo.max((dy - eps) / dx);
        let new_hi = hi.min((dy + eps) / dx);
        if new_lo > new_hi {
            emit(start, lo, hi, &mut segments);
            start = i;
            lo = f64::NEG_INFINITY;
            hi = f64::INFINITY;
        } else {
            lo = new_lo;
            hi = new_hi;
        }
    }
    emit(start, lo, hi, &mut segments);
    segments
}

impl PgmIndex {
    pub fn build(keys: &[u64], eps_data: u32, eps_model: u32) -> Result<Self, PgmError> {
        if keys.is_empty() {
            return Err(PgmError::Empty);
        }
        if eps_data == 0 || eps_model == 0 {
            return Err(PgmError::BadEpsilon);
        }
        if let Some(i) = keys.windows(2).position(|w| w[0] >= w[1]) {
            return Err(PgmError::Unsorted(i + 1));
        }
        let mut levels = vec![fit_level(keys, eps_data)];
        while levels.last().unwrap().len() > 1 {
            let firsts: Vec<u64> = levels.last().unwrap().iter().map(|s| s.min_key).collect();
            levels.push(fit_level(&firsts, eps_model));
        }
        levels.reverse();
        Ok(PgmIndex { eps_data, eps_model, n: keys.len() as u64, levels })
    }

    /// Builds from explicit levels (top first), validating their shape.
    pub fn from_levels(
        eps_data: u32,
        eps_model: u32,
        n: u64,
        levels: Vec<Vec<LinearSegment>>,
    ) -> Result<Self, PgmError> {
        if n == 0 {
            return Err(PgmError::Empty);
        }
        if eps_data == 0 || eps_model == 0 {
            return Err(PgmError::BadEpsilon);
        }
        if levels.first().map(Vec::len) != Some(1) {
            return Err(PgmError::Corrupt("top level must hold exactly one segment"));
        }
        for level in &levels {
            if level.is_empty() {
                return Err(PgmError::Corrupt("empty level"));
            }
            if level.windows(2).any(|w| w[0].min_key >= w[1].min_key) {
                return Err(PgmError::Corrupt("segments out of order"));
            }
            if level.iter().any(|s| !s.slope.is_finite() || !s.intercept.is_finite()) {
                return Err(PgmError::Corrupt("non-finite segment parameter"));
            }
        }
        Ok(PgmIndex { eps_data, eps_model, n, levels })
    }

    pub fn eps_data(&self) -> u32 {
        self.eps_data
    }

    pub fn eps_model(&self) -> u32 {
        self.eps_model
    }

    pub fn n(&self) -> usize {
        self.n as usize
    }

    pub fn levels(&self) -> &[Vec<LinearSegment>] {
        &self.levels
    }

    pub fn leaf_segments(&self) -> usize {
        self.levels.last().map_or(0, Vec::len)
    }

    /// Rounded, clamped position predicted by segment `idx` of `level`.
    fn position(&self, level: usize, idx: usize, key: u64, len: usize) -> usize {
        let segs = &self.levels[level];
        let raw = segs[idx].evaluate(key).round().max(0.0);
        let mut pos = if raw >= len as f64 { len - 1 } else { raw as usize };
        if let Some(next) = segs.get(idx + 1) {
            pos = pos.min(next.intercept as usize);
        }
        pos
    }

    /// Last segment in `segs` with `min_key <= key`, or 0.
    fn predecessor_in(segs: &[LinearSegment], key: u64, lo: usize, hi: usize) -> Option<usize> {
        // within [lo, hi] the answer is found only if the boundary is visible
        let left_ok = lo == 0 || segs[lo].min_key <= key;
        let right_ok = hi + 1 == segs.len() || segs[hi + 1].min_key > key;
        if !(left_ok && right_ok) {
            return None;
        }
        let mut best = lo;
        for (i, s) in segs.iter().enumerate().take(hi + 1).skip(lo) {
            if s.min_key <= key {
                best = i;
            } else {
                break;
            }
        }
        Some(best)
    }

    /// Top-down traversal. Returns the prediction and the number of internal
    /// levels where the predecessor fell outside the search window (always 0
    /// for a correctly built index; the traversal falls back to binary search
    /// if it ever happens).
    pub fn predict_traced(&self, key: u64) -> (PredictedRange, usize) {
        let mut idx = 0usize;
        let mut misses = 0;
        let window = self.eps_model as usize + 1;
        for level in 0..self.levels.len() - 1 {
            let below = &self.levels[level + 1];
            let pos = self.position(level, idx, key, below.len());
            let lo = pos.saturating_sub(window);
            let hi = (pos + window).min(below.len() - 1);
            idx = match Self::predecessor_in(below, key, lo, hi) {
                Some(i) => i,
                None => {
                    misses += 1;
                    below.partition_point(|s| s.min_key <= key).saturating_sub(1)
                }
            };
        }
        let n = self.n as usize;
        let leaf = self.levels.len() - 1;
        let y_hat = self.position(leaf, idx, key, n);
        (PredictedRange::around(y_hat, self.eps_data as usize, n), misses)
    }

    pub fn predict(&self, key: u64) -> PredictedRange {
        self.predict_traced(key).0
    }

    pub fn size_bytes(&self) -> usize {
        HEADER_BYTES + self.levels.iter().map(|l| 8 + SEGMENT_BYTES * l.len()).sum::<usize>()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.size_bytes());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.eps_data.to_le_bytes());
        out.extend_from_slice(&self.eps_model.to_le_bytes());
        out.extend_from_slice(&self.n.to_le_bytes());
        out.extend_from_slice(&(self.levels.len() as u32).to_le_bytes());
        for level in &self.levels {
            out.extend_from_slice(&(level.len() as u64).to_le_bytes());
            for s in level {
                out.extend_from_slice(&s.min_key.to_le_bytes());
                out.extend_from_slice(&s.slope.to_le_bytes());
                out.extend_from_slice(&s.intercept.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PgmError> {
        let mut cur = bytes;
        let mut take = |len: usize| -> Result<&[u8], PgmError> {
            if cur.len() < len {
                return Err(PgmError::Truncated);
            }
            let (head, tail) = cur.split_at(len);
            cur = tail;
            Ok(head)
        };
        if take(4)? != MAGIC {
            return Err(PgmError::BadMagic);
        }
        let version = u16::from_le_bytes(take(2)?.try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(PgmError::Version(version));
        }
        let eps_data = u32::from_le_bytes(take(4)?.try_into().unwrap());
        let eps_model = u32::from_le_bytes(take(4)?.try_into().unwrap());
        let n = u64::from_le_bytes(take(8)?.try_into().unwrap());
        let level_count = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        if level_count == 0 || level_count > 64 {
            return Err(PgmError::Corrupt("implausible level count"));
        }
        let mut levels = Vec::with_capacity(level_count);
        for _ in 0..level_count {
            let count = u64::from_le_bytes(take(8)?.try_into().unwrap());
            let body = take((count as usize).checked_mul(SEGMENT_BYTES).ok_or(PgmError::Truncated)?)?;
            let level = body
                .chunks_exact(SEGMENT_BYTES)
                .map(|c| LinearSegment {
                    min_key: u64::from_le_bytes(c[0..8].try_into().unwrap()),
                    slope: f64::from_le_bytes(c[8..16].try_into().unwrap()),
                    intercept: f64::from_le_bytes(c[16..24].try_into().unwrap()),
                })
                .collect();
            levels.push(level);
        }
        if !cur.is_empty() {
            return Err(PgmError::Corrupt("trailing bytes"));
        }
        let index = PgmIndex::from_levels(eps_data, eps_model, n, levels)?;
        if index.levels.last().unwrap().iter().any(|s| s.intercept >= n as f64) {
            return Err(PgmError::Corrupt("leaf intercept beyond key count"));
        }
        Ok(index)
    }
}

/// Size of a B+tree over `n` keys with `page_m` entries per node, counting
/// one 8-byte key and one 8-byte child pointer per internal entry. Leaves hold
/// the data itself and are not counted.
pub fn btree_index_bytes(n: usize, page_m: usize) -> usize {
    let mut nodes = n.div_ceil(page_m);
    let mut bytes = 0;
    while nodes > 1 {
        bytes += nodes * 16;
        nodes = nodes.div_ceil(page_m);
    }
    bytes
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_keys_need_one_leaf_segment() {
        let keys: Vec<u64> = (0..1000).collect();
        let idx = PgmIndex::build(&keys, 64, 4).unwrap();
        assert_eq!(idx.leaf_segments(), 1);
        assert_eq!(idx.levels().len(), 1);
        for (i, &k) in keys.iter().enumerate() {
            assert_eq!(idx.predict(k).y_hat, i);
        }
    }

    #[test]
    fn clamps_below_and_above() {
        let keys: Vec<u64> = (1..=500).map(|i| i * 1000).collect();
        let idx = PgmIndex::build(&keys, 8, 2).unwrap();
        assert_eq!(idx.predict(0).lo, 0);
        assert_eq!(idx.predict(u64::MAX - 1).hi, keys.len() - 1);
    }

    #[test]
    fn single_segment_size() {
        let idx = PgmIndex::build(&[5], 64, 4).unwrap();
        assert_eq!(idx.size_bytes(), HEADER_BYTES + 8 + SEGMENT_BYTES);
        assert_eq!(idx.to_bytes().len(), idx.size_bytes());
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(PgmIndex::build(&[], 64, 4), Err(PgmError::Empty));
        assert_eq!(PgmIndex::build(&[1, 1], 64, 4), Err(PgmError::Unsorted(1)));
        assert_eq!(PgmIndex::build(&[1, 2], 0, 4), Err(PgmError::BadEpsilon));
    }

    #[test]
    fn corrupt_blobs_are_rejected() {
        let keys: Vec<u64> = (0..5000u64).map(|i| i * i).collect();
        let bytes = PgmIndex::build(&keys, 16, 2).unwrap().to_bytes();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert_eq!(PgmIndex::from_bytes(&bad), Err(PgmError::BadMagic));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert_eq!(PgmIndex::from_bytes(&bad), Err(PgmError::Version(9)));
        assert_eq!(PgmIndex::from_bytes(&bytes[..bytes.len() - 3]), Err(PgmError::Truncated));
    }

    #[test]
    fn btree_size_counts_internal_levels() {
        assert_eq!(btree_index_bytes(256, 256), 0);
        assert_eq!(btree_index_bytes(512, 256), 32);
        assert_eq!(btree_index_bytes(256 * 256 * 2, 256), 512 * 16 + 2 * 16);
    }
}
