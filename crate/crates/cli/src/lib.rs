//! Argument parsing shared by the binaries.

use std::str::FromStr;

use relaxpir::store::{DatasetSpec, KeyDistribution};

/// `N,DIST,SEED`, for example `1048576,uniform,7`.
#[derive(Clone, Debug)]
pub struct GenSpec {
    pub n: usize,
    pub distribution: KeyDistribution,
    pub seed: u64,
}

impl GenSpec {
    pub fn dataset(&self, value_bytes: usize) -> DatasetSpec {
        DatasetSpec::new(self.n, self.distribution, value_bytes, self.seed)
    }
}

impl FromStr for GenSpec {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(',').collect();
        let [n, dist, seed] = parts[..] else {
            return Err(format!("expected N,DIST,SEED, got {s:?}"));
        };
        Ok(GenSpec {
            n: parse_count(n)?,
            distribution: dist.parse()?,
            seed: seed.parse().map_err(|e| format!("seed {seed:?}: {e}"))?,
        })
    }
}

/// Plain integer or a power of two written `2^K`.
pub fn parse_count(s: &str) -> Result<usize, String> {
    match s.strip_prefix("2^") {
        Some(k) => {
            let k: u32 = k.parse().map_err(|e| format!("{s:?}: {e}"))?;
            1usize.checked_shl(k).ok_or_else(|| format!("{s:?} overflows"))
        }
        None => s.parse().map_err(|e| format!("{s:?}: {e}")),
    }
}
