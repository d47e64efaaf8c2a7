//! Sorted fixed-width key-value data, synthetic datasets and SOSD ingestion.

use std::collections::BTreeSet;
use std::io::{self, Read};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};
use thiserror::Error;

mod versioned;

pub use versioned::{BatchUpdate, StoreConfig, ValueUpdate, Version, VersionError, VersionedStore};

/// Key reserved for padding.
pub const SENTINEL_KEY: u64 = u64::MAX;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("value width must be a positive multiple of 8, got {0}")]
    BadValueWidth(usize),
    #[error("store must hold at least one pair")]
    Empty,
    #[error("keys must be strictly increasing (index {0})")]
    Unsorted(usize),
    #[error("the all-ones key is reserved")]
    ReservedKey,
    #[error("value for pair {index} has {found} bytes, expected {expected}")]
    ValueLength { index: usize, found: usize, expected: usize },
    #[error("could only draw {got} unique keys out of {want}")]
    DuplicateExhaustion { got: usize, want: usize },
    #[error("key {0} not found")]
    KeyNotFound(u64),
    #[error("key {0} already present")]
    KeyExists(u64),
    #[error("malformed SOSD file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Sorted array of `(key, value)` pairs with uniform value width.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KvStore {
    keys: Vec<u64>,
    values: Vec<u8>,
    value_bytes: usize,
    version_id: u64,
}

fn check_value_width(value_bytes: usize) -> Result<(), StoreError> {
    if value_bytes < 8 || value_bytes % 8 != 0 {
        return Err(StoreError::BadValueWidth(value_bytes));
    }
    Ok(())
}

impl KvStore {
    /// Builds from sorted keys and their concatenated values.
    pub fn new(keys: Vec<u64>, values: Vec<u8>, value_bytes: usize, version_id: u64) -> Result<Self, StoreError> {
        check_value_width(value_bytes)?;
        if keys.is_empty() {
            return Err(StoreError::Empty);
        }
        if let Some(i) = keys.windows(2).position(|w| w[0] >= w[1]) {
            return Err(StoreError::Unsorted(i + 1));
        }
        if keys.last() == Some(&SENTINEL_KEY) {
            return Err(StoreError::ReservedKey);
        }
        if values.len() != keys.len() * value_bytes {
            return Err(StoreError::ValueLength {
                index: values.len() / value_bytes,
                found: values.len(),
                expected: keys.len() * value_bytes,
            });
        }
        Ok(KvStore { keys, values, value_bytes, version_id })
    }

    /// Sorted keys with values synthesised by [`synth_value`].
    pub fn from_keys(keys: Vec<u64>, value_bytes: usize) -> Result<Self, StoreError> {
        check_value_width(value_bytes)?;
        let mut values = Vec::with_capacity(keys.len() * value_bytes);
        for &k in &keys {
            values.extend_from_slice(&synth_value(k, value_bytes));
        }
        Self::new(keys, values, value_bytes, 0)
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

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn value_bytes(&self) -> usize {
        self.value_bytes
    }

    /// Bytes per serialised pair: the key followed by its value.
    pub fn pair_bytes(&self) -> usize {
        8 + self.value_bytes
    }

    pub fn kv_bits(&self) -> usize {
        8 * self.pair_bytes()
    }

    pub fn version_id(&self) -> u64 {
        self.version_id
    }

    pub fn set_version_id(&mut self, id: u64) {
        self.version_id = id;
    }

    pub fn key(&self, pos: usize) -> u64 {
        self.keys[pos]
    }

    pub fn value(&self, pos: usize) -> &[u8] {
        &self.values[pos * self.value_bytes..(pos + 1) * self.value_bytes]
    }

    pub fn position(&self, key: u64) -> Result<usize, usize> {
        self.keys.binary_search(&key)
    }

    pub fn get(&self, key: u64) -> Option<&[u8]> {
        self.position(key).ok().map(|p| self.value(p))
    }

    /// Appends pair `pos` in wire layout (little-endian key, value).
    pub fn write_pair(&self, pos: usize, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.keys[pos].to_le_bytes());
        out.extend_from_slice(self.value(pos));
    }

    pub fn into_parts(self) -> (Vec<u64>, Vec<u8>, usize, u64) {
        (self.keys, self.values, self.value_bytes, self.version_id)
    }

    /// `(self ∪ inserts) \ deletes` as a fresh store.
    pub fn merged(&self, inserts: &[(u64, Vec<u8>)], deletes: &[u64]) -> Result<KvStore, StoreError> {
        let mut ins: Vec<&(u64, Vec<u8>)> = inserts.iter().collect();
        ins.sort_by_key(|(k, _)| *k);
        for w in ins.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(StoreError::KeyExists(w[0].0));
            }
        }
        for (k, v) in &ins {
            if *k == SENTINEL_KEY {
                return Err(StoreError::ReservedKey);
            }
            if v.len() != self.value_bytes {
                return Err(StoreError::ValueLength { index: 0, found: v.len(), expected: self.value_bytes });
            }
            if self.position(*k).is_ok() {
                return Err(StoreError::KeyExists(*k));
            }
        }
        let mut del: Vec<u64> = deletes.to_vec();
        del.sort_unstable();
        del.dedup();
        for &k in &del {
            if self.position(k).is_err() {
                return Err(StoreError::KeyNotFound(k));
            }
        }
        let n = self.len() + ins.len() - del.len();
        let mut keys = Vec::with_capacity(n);
        let mut values = Vec::with_capacity(n * self.value_bytes);
        let (mut i, mut j, mut d) = (0, 0, 0);
        while i < self.len() || j < ins.len() {
            let take_old = j == ins.len() || (i < self.len() && self.keys[i] < ins[j].0);
            if take_old {
                let k = self.keys[i];
                while d < del.len() && del[d] < k {
                    d += 1;
                }
                if d < del.len() && del[d] == k {
                    d += 1;
                } else {
                    keys.push(k);
                    values.extend_from_slice(self.value(i));
                }
                i += 1;
            } else {
                keys.push(ins[j].0);
                values.extend_from_slice(&ins[j].1);
                j += 1;
            }
        }
        KvStore::new(keys, values, self.value_bytes, self.version_id)
    }
}

/// Value derived from the key: its little-endian bytes, then a keyed hash
/// stream.
pub fn synth_value(key: u64, value_bytes: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(value_bytes);
    out.extend_from_slice(&key.to_le_bytes());
    let mut counter = 0u32;
    while out.len() < value_bytes {
        let digest = Sha256::new()
            .chain_update(b"relaxpir-value")
            .chain_update(key.to_le_bytes())
            .chain_update(counter.to_le_bytes())
            .finalize();
        let take = (value_bytes - out.len()).min(digest.len());
        out.extend_from_slice(&digest[..take]);
        counter += 1;
    }
    out.truncate(value_bytes);
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KeyDistribution {
    Uniform,
    Normal,
    Clustered,
}

impl KeyDistribution {
    pub fn name(self) -> &'static str {
        match self {
            KeyDistribution::Uniform => "uniform",
            KeyDistribution::Normal => "normal",
            KeyDistribution::Clustered => "clustered",
        }
    }
}

impl std::fmt::Display for KeyDistribution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for KeyDistribution {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "uniform" => Ok(KeyDistribution::Uniform),
            "normal" => Ok(KeyDistribution::Normal),
            "clustered" => Ok(KeyDistribution::Clustered),
            other => Err(format!("unknown distribution {other:?}")),
        }
    }
}

/// Centre and spread of the normal key distribution.
pub const NORMAL_MEAN: f64 = 9.223_372_036_854_775_808e18;
pub const NORMAL_STDDEV: f64 = 5.764_607_523_034_235e17;

const CLUSTERS: usize = 64;
const CLUSTER_STDDEV: f64 = 1.0e12;

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSpec {
    pub n: usize,
    pub distribution: KeyDistribution,
    pub value_bytes: usize,
    pub seed: u64,
    /// Keys are drawn from `[0, key_bound)`.
    pub key_bound: u64,
}

impl DatasetSpec {
    pub fn new(n: usize, distribution: KeyDistribution, value_bytes: usize, seed: u64) -> Self {
        DatasetSpec { n, distribution, value_bytes, seed, key_bound: SENTINEL_KEY }
    }
}

struct KeySampler {
    dist: KeyDistribution,
    bound: u64,
    centres: Vec<f64>,
}

impl KeySampler {
    fn draw(&self, rng: &mut ChaCha20Rng) -> u64 {
        let bound = self.bound as f64;
        let clamp = |x: f64| {
            if x < 0.0 {
                0
            } else if x >= bound {
                self.bound - 1
            } else {
                x as u64
            }
        };
        match self.dist {
            KeyDistribution::Uniform => rng.gen_range(0..self.bound),
            KeyDistribution::Normal => {
                let mean = NORMAL_MEAN.min(bound / 2.0);
                let sd = NORMAL_STDDEV * (mean / NORMAL_MEAN);
                clamp(Normal::new(mean, sd).unwrap().sample(rng))
            }
            KeyDistribution::Clustered => {
                let c = self.centres[rng.gen_range(0..self.centres.len())];
                let sd = CLUSTER_STDDEV.min(bound / 1e4);
                clamp(Normal::new(c, sd).unwrap().sample(rng))
            }
        }
    }
}

pub fn generate_keys(spec: &DatasetSpec) -> Result<Vec<u64>, StoreError> {
    if spec.n == 0 {
        return Err(StoreError::Empty);
    }
    let bound = spec.key_bound.min(SENTINEL_KEY).max(1);
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let centres = (0..CLUSTERS).map(|_| rng.gen_range(0..bound) as f64).collect();
    let sampler = KeySampler { dist: spec.distribution, bound, centres };
    let mut keys: Vec<u64> = Vec::with_capacity(spec.n);
    // draw in rounds, topping up whatever deduplication removed
    let mut stalled = 0;
    while keys.len() < spec.n {
        let before = keys.len();
        let want = spec.n - keys.len();
        keys.extend((0..want).map(|_| sampler.draw(&mut rng)));
        keys.sort_unstable();
        keys.dedup();
        if keys.len() == before {
            stalled += 1;
            if stalled >= 8 {
                return Err(StoreError::DuplicateExhaustion { got: keys.len(), want: spec.n });
            }
        } else {
            stalled = 0;
        }
    }
    Ok(keys)
}

pub fn generate_dataset(spec: &DatasetSpec) -> Result<KvStore, StoreError> {
    check_value_width(spec.value_bytes)?;
    KvStore::from_keys(generate_keys(spec)?, spec.value_bytes)
}

/// Reads a SOSD key file: little-endian u64 count, then that many u64 keys.
pub fn read_sosd_keys(path: &Path) -> Result<Vec<u64>, StoreError> {
    let mut file = io::BufReader::new(std::fs::File::open(path)?);
    let mut word = [0u8; 8];
    file.read_exact(&mut word).map_err(|_| StoreError::Malformed("missing count".into()))?;
    let count = u64::from_le_bytes(word);
    if count == 0 {
        return Err(StoreError::Malformed("zero count".into()));
    }
    let len = std::fs::metadata(path)?.len();
    if len < 8 + count.saturating_mul(8) {
        return Err(StoreError::Malformed(format!("header says {count} keys, file holds {}", (len - 8) / 8)));
    }
    let mut keys = Vec::with_capacity(count as usize);
    for _ in 0..count {
        file.read_exact(&mut word).map_err(|_| StoreError::Malformed("short read".into()))?;
        keys.push(u64::from_le_bytes(word));
    }
    Ok(keys)
}

pub fn write_sosd_keys(path: &Path, keys: &[u64]) -> io::Result<()> {
    let mut buf = Vec::with_capacity(8 * (keys.len() + 1));
    buf.extend_from_slice(&(keys.len() as u64).to_le_bytes());
    for k in keys {
        buf.extend_from_slice(&k.to_le_bytes());
    }
    std::fs::write(path, buf)
}

/// Loads a SOSD file, dropping duplicates and the reserved key.
pub fn load_sosd(path: &Path, value_bytes: usize) -> Result<KvStore, StoreError> {
    check_value_width(value_bytes)?;
    let keys: BTreeSet<u64> = read_sosd_keys(path)?.into_iter().filter(|&k| k != SENTINEL_KEY).collect();
    KvStore::from_keys(keys.into_iter().collect(), value_bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_uniform_is_sorted_unique() {
        let s = generate_dataset(&DatasetSpec::new(4, KeyDistribution::Uniform, 8, 1)).unwrap();
        assert_eq!(s.len(), 4);
        assert!(s.keys().windows(2).all(|w| w[0] < w[1]));
        assert_eq!(&s.value(2)[..8], &s.key(2).to_le_bytes());
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_keys(&DatasetSpec::new(1000, KeyDistribution::Clustered, 8, 9)).unwrap();
        let b = generate_keys(&DatasetSpec::new(1000, KeyDistribution::Clustered, 8, 9)).unwrap();
        let c = generate_keys(&DatasetSpec::new(1000, KeyDistribution::Clustered, 8, 10)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn exhaustion_is_reported() {
        let mut spec = DatasetSpec::new(100, KeyDistribution::Uniform, 8, 1);
        spec.key_bound = 50;
        assert!(matches!(generate_keys(&spec), Err(StoreError::DuplicateExhaustion { got: 50, want: 100 })));
    }

    #[test]
    fn bad_value_width() {
        assert!(generate_dataset(&DatasetSpec::new(4, KeyDistribution::Uniform, 12, 1)).is_err());
        assert!(generate_dataset(&DatasetSpec::new(4, KeyDistribution::Uniform, 0, 1)).is_err());
    }

    #[test]
    fn synth_value_widths() {
        for w in [8, 16, 40, 64] {
            let v = synth_value(77, w);
            assert_eq!(v.len(), w);
            assert_eq!(&v[..8], &77u64.to_le_bytes());
        }
        assert_ne!(synth_value(1, 16)[8..], synth_value(2, 16)[8..]);
    }

    #[test]
    fn merge_inserts_and_deletes() {
        let s = KvStore::from_keys(vec![10, 20, 30, 40], 8).unwrap();
        let m = s.merged(&[(25, synth_value(25, 8)), (5, synth_value(5, 8))], &[30]).unwrap();
        assert_eq!(m.keys(), &[5, 10, 20, 25, 40]);
        assert_eq!(m.get(25).unwrap(), &synth_value(25, 8)[..]);
        assert!(matches!(s.merged(&[(20, synth_value(20, 8))], &[]), Err(StoreError::KeyExists(20))));
        assert!(matches!(s.merged(&[], &[11]), Err(StoreError::KeyNotFound(11))));
    }
}
