//! Distance-based range obfuscation.
//!
//! A predicted window `[lo, hi]` is widened independently on each side by a
//! discrete Laplace draw with scale `λ = 2t/ε`, walking outward over cyclic
//! orderings of the position domain. The result is classified as contiguous,
//! wrapped around the end of the domain, or full.

use rand::{CryptoRng, Rng, RngCore};
use rand_distr::{Distribution, Geometric, WeightedIndex};
use thiserror::Error;

use crate::pgm::PredictedRange;

pub const DEFAULT_EPS_DP: f64 = 1.0 / 64.0;

#[derive(Debug, Error, PartialEq)]
pub enum DldpError {
    #[error("privacy parameter eps must be positive, got {0}")]
    BadEpsilon(f64),
    #[error("distance t must be positive")]
    ZeroDistance,
    #[error("adjusted mode needs t > 2*eps_data = {min}, got {t}")]
    DistanceTooSmall { t: u64, min: u64 },
    #[error("empty domain")]
    EmptyDomain,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrivacyParams {
    pub eps_dp: f64,
    pub t: u64,
}

/// How a user-facing `t` becomes the noise distance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DistanceMode {
    /// Noise distance is `t` itself.
    Raw,
    /// Noise distance is `t - 2*eps_data`, so that the guarantee covers keys
    /// `t` apart even though predicted windows are `2*eps_data` wide.
    #[default]
    Adjusted,
}

impl PrivacyParams {
    pub fn new(eps_dp: f64, t: u64) -> Result<Self, DldpError> {
        if !(eps_dp > 0.0 && eps_dp.is_finite()) {
            return Err(DldpError::BadEpsilon(eps_dp));
        }
        if t == 0 {
            return Err(DldpError::ZeroDistance);
        }
        Ok(PrivacyParams { eps_dp, t })
    }

    pub fn with_mode(eps_dp: f64, t: u64, mode: DistanceMode, eps_data: u32) -> Result<Self, DldpError> {
        match mode {
            DistanceMode::Raw => Self::new(eps_dp, t),
            DistanceMode::Adjusted => {
                let min = 2 * eps_data as u64;
                if t <= min {
                    return Err(DldpError::DistanceTooSmall { t, min });
                }
                Self::new(eps_dp, t - min)
            }
        }
    }

    pub fn lambda(&self) -> f64 {
        2.0 * self.t as f64 / self.eps_dp
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RangeKind {
    Contiguous,
    Wrapped,
    Full,
}

impl RangeKind {
    pub fn code(self) -> u8 {
        match self {
            RangeKind::Contiguous => 0,
            RangeKind::Wrapped => 1,
            RangeKind::Full => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(RangeKind::Contiguous),
            1 => Some(RangeKind::Wrapped),
            2 => Some(RangeKind::Full),
            _ => None,
        }
    }
}

/// Position range disclosed to the server. Wrapped ranges cover
/// `[l, n-1] ∪ [0, r]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ObfuscatedRange {
    pub kind: RangeKind,
    pub l: usize,
    pub r: usize,
    pub n: usize,
}

impl ObfuscatedRange {
    pub fn contiguous(l: usize, r: usize, n: usize) -> Self {
        debug_assert!(l <= r && r < n);
        ObfuscatedRange { kind: RangeKind::Contiguous, l, r, n }
    }

    pub fn wrapped(l: usize, r: usize, n: usize) -> Self {
        debug_assert!(r < l && l < n);
        ObfuscatedRange { kind: RangeKind::Wrapped, l, r, n }
    }

    pub fn full(n: usize) -> Self {
        ObfuscatedRange { kind: RangeKind::Full, l: 0, r: n - 1, n }
    }

    /// Validates fields received from the wire.
    pub fn from_wire(kind: RangeKind, l: u64, r: u64, n: usize) -> Option<Self> {
        let (l, r) = (usize::try_from(l).ok()?, usize::try_from(r).ok()?);
        if n == 0 || l >= n || r >= n {
            return None;
        }
        match kind {
            RangeKind::Contiguous if l <= r => Some(Self::contiguous(l, r, n)),
            RangeKind::Wrapped if r < l => Some(Self::wrapped(l, r, n)),
            RangeKind::Full if l == 0 && r == n - 1 => Some(Self::full(n)),
            _ => None,
        }
    }

    /// Number of covered positions.
    pub fn len(&self) -> usize {
        match self.kind {
            RangeKind::Contiguous => self.r - self.l + 1,
            RangeKind::Wrapped => self.n - self.l + self.r + 1,
            RangeKind::Full => self.n,
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, pos: usize) -> bool {
        match self.kind {
            RangeKind::Contiguous => self.l <= pos && pos <= self.r,
            RangeKind::Wrapped => pos >= self.l || pos <= self.r,
            RangeKind::Full => pos < self.n,
        }
    }

    pub fn covers(&self, pred: &PredictedRange) -> bool {
        match self.kind {
            RangeKind::Contiguous => self.l <= pred.lo && pred.hi <= self.r,
            RangeKind::Wrapped => pred.lo >= self.l || pred.hi <= self.r,
            RangeKind::Full => true,
        }
    }

    /// Index of `pos` in disclosure order.
    pub fn index_of(&self, pos: usize) -> Option<usize> {
        if !self.contains(pos) {
            return None;
        }
        Some(match self.kind {
            RangeKind::Contiguous => pos - self.l,
            RangeKind::Wrapped if pos >= self.l => pos - self.l,
            RangeKind::Wrapped => self.n - self.l + pos,
            RangeKind::Full => pos,
        })
    }

    /// Covered positions in disclosure order.
    pub fn positions(&self) -> impl Iterator<Item = usize> + '_ {
        let (first, second) = match self.kind {
            RangeKind::Contiguous => (self.l..self.r + 1, 0..0),
            RangeKind::Wrapped => (self.l..self.n, 0..self.r + 1),
            RangeKind::Full => (0..self.n, 0..0),
        };
        first.chain(second)
    }
}

/// Reduction of a boundary draw to an index of the cyclic ordering.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum BoundaryReduction {
    /// Index is a strictly positive draw: `|X|` conditioned on `X != 0`,
    /// taken modulo the ordering length. Expected offset `1/(1 - e^{-1/λ})`.
    #[default]
    Folded,
    /// Index is `X mod |D|` in `[0, |D|)`, so negative draws land near the
    /// far end of the ordering.
    Modular,
}

/// Source of boundary noise.
pub trait NoiseSource {
    /// One discrete Laplace draw with scale `lambda`.
    fn laplace(&mut self, lambda: f64) -> i64;

    /// A draw conditioned on being non-zero, folded to its magnitude.
    fn positive_offset(&mut self, lambda: f64) -> u64 {
        loop {
            let x = self.laplace(lambda);
            if x != 0 {
                return x.unsigned_abs();
            }
        }
    }
}

/// Exact discrete Laplace sampler: difference of two geometric variables
/// with success probability `1 - e^{-1/λ}`.
pub struct LaplaceSampler<R> {
    rng: R,
}

impl<R: RngCore + CryptoRng> LaplaceSampler<R> {
    pub fn new(rng: R) -> Self {
        LaplaceSampler { rng }
    }

    pub fn rng_mut(&mut self) -> &mut R {
        &mut self.rng
    }
}

impl<R: RngCore + CryptoRng> NoiseSource for LaplaceSampler<R> {
    fn laplace(&mut self, lambda: f64) -> i64 {
        sample_discrete_laplace(lambda, &mut self.rng)
    }
}

/// Replays fixed draws, for tests. `positive_offset` returns the magnitude
/// of the next value verbatim, zero included.
#[derive(Clone, Debug)]
pub struct FixedNoise {
    values: Vec<i64>,
    next: usize,
}

impl FixedNoise {
    pub fn new(values: Vec<i64>) -> Self {
        assert!(!values.is_empty());
        FixedNoise { values, next: 0 }
    }

    fn take(&mut self) -> i64 {
        let v = self.values[self.next % self.values.len()];
        self.next += 1;
        v
    }
}

impl NoiseSource for FixedNoise {
    fn laplace(&mut self, _lambda: f64) -> i64 {
        self.take()
    }

    fn positive_offset(&mut self, _lambda: f64) -> u64 {
        self.take().unsigned_abs()
    }
}

pub fn sample_discrete_laplace<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> i64 {
    assert!(lambda > 0.0, "scale must be positive");
    // p = 1 - e^{-1/λ}
    let p = -(-1.0 / lambda).exp_m1();
    let g = Geometric::new(p).expect("success probability in (0, 1]");
    g.sample(rng) as i64 - g.sample(rng) as i64
}

/// `Pr[X = x]` for `X ~ Lap_Z(λ)`.
pub fn discrete_laplace_pmf(x: i64, lambda: f64) -> f64 {
    let r = (-1.0 / lambda).exp();
    let c = -(-1.0 / lambda).exp_m1() / (1.0 + r);
    c * (-(x.unsigned_abs() as f64) / lambda).exp()
}

/// Index into a cyclic ordering of length `len`.
fn reduce<N: NoiseSource + ?Sized>(noise: &mut N, lambda: f64, len: usize, mode: BoundaryReduction) -> usize {
    match mode {
        BoundaryReduction::Folded => (noise.positive_offset(lambda) % len as u64) as usize,
        BoundaryReduction::Modular => noise.laplace(lambda).rem_euclid(len as i64) as usize,
    }
}

/// Classifies noisy boundaries `l`, `r` around `[lo, hi]`.
pub fn classify(l: usize, r: usize, lo: usize, hi: usize, n: usize) -> ObfuscatedRange {
    if l <= lo && hi <= r {
        ObfuscatedRange::contiguous(l, r, n)
    } else if (r < l && l <= lo) || (hi <= r && r < l) {
        ObfuscatedRange::wrapped(l, r, n)
    } else {
        ObfuscatedRange::full(n)
    }
}

/// Widens `[lo, hi]` over a domain of `n` positions. The left ordering runs
/// `lo, lo-1, …` and the right ordering `hi, hi+1, …`, both cyclic and of
/// length `n - (hi - lo) + 1`.
pub fn obfuscate_positions<N: NoiseSource + ?Sized>(
    lo: usize,
    hi: usize,
    n: usize,
    lambda: f64,
    mode: BoundaryReduction,
    noise: &mut N,
) -> ObfuscatedRange {
    assert!(lo <= hi && hi < n, "window [{lo}, {hi}] outside domain of {n}");
    let len = n - (hi - lo) + 1;
    let il = reduce(noise, lambda, len, mode);
    let ir = reduce(noise, lambda, len, mode);
    let l = (lo + n - il % n) % n;
    let r = (hi + ir) % n;
    classify(l, r, lo, hi, n)
}

pub fn obfuscate_range<N: NoiseSource + ?Sized>(
    pred: &PredictedRange,
    n: usize,
    params: &PrivacyParams,
    mode: BoundaryReduction,
    noise: &mut N,
) -> ObfuscatedRange {
    obfuscate_positions(pred.lo, pred.hi, n, params.lambda(), mode, noise)
}

/// Page-granularity variant used by the B+tree comparator: noise is added
/// over page ids with distance `ceil(t / page_m)`.
pub fn btree_obfuscate_range<N: NoiseSource + ?Sized>(
    page_lo: usize,
    page_hi: usize,
    page_count: usize,
    page_m: usize,
    params: &PrivacyParams,
    mode: BoundaryReduction,
    noise: &mut N,
) -> ObfuscatedRange {
    let pages = PrivacyParams { eps_dp: params.eps_dp, t: params.t.div_ceil(page_m as u64) };
    obfuscate_positions(page_lo, page_hi, page_count, pages.lambda(), mode, noise)
}

/// Exact distribution of one boundary over positions: the left ordering
/// from `boundary` with a cyclic reduction modulo `n`. Entry `pos` holds
/// `sum_k Pr[Lap = i + k n]` where `pos = boundary - i mod n`.
pub fn boundary_pmf(boundary: usize, n: usize, lambda: f64) -> Vec<f64> {
    assert!(n >= 1 && boundary < n);
    let inv = 1.0 / lambda;
    // c = (1 - r) / (1 + r), tail = 1 / (1 - r^n)
    let r = (-inv).exp();
    let c = -(-inv).exp_m1() / (1.0 + r);
    let tail = -1.0 / (-(n as f64) * inv).exp_m1();
    let mut out = vec![0.0; n];
    for i in 0..n {
        let near = (-(i as f64) * inv).exp();
        let far = (-((n - i) as f64) * inv).exp();
        out[(boundary + n - i) % n] = c * (near + far) * tail;
    }
    out
}

/// Exponential mechanism over an explicit domain: position `i` is drawn with
/// probability proportional to `e^{-|x-i| ε / 4t}`.
pub fn exponential_mechanism_boundary<R: Rng + ?Sized>(
    x: usize,
    domain: &[usize],
    params: &PrivacyParams,
    rng: &mut R,
) -> Result<usize, DldpError> {
    let weights = exponential_weights(x, domain, params);
    let dist = WeightedIndex::new(&weights).map_err(|_| DldpError::EmptyDomain)?;
    Ok(domain[dist.sample(rng)])
}

/// Normalised probabilities `e^{-|x-i| ε / 4t}` over `domain`.
pub fn exponential_weights(x: usize, domain: &[usize], params: &PrivacyParams) -> Vec<f64> {
    let scale = params.eps_dp / (4.0 * params.t as f64);
    let nearest = domain.iter().map(|&i| i.abs_diff(x)).min().unwrap_or(0);
    let raw: Vec<f64> =
        domain.iter().map(|&i| (-((i.abs_diff(x) - nearest) as f64) * scale).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// `min(n, 4t/ε + 2 eps_data + 1)`.
pub fn expected_range_length(t: u64, eps_dp: f64, eps_data: u32, n: usize) -> f64 {
    (4.0 * t as f64 / eps_dp + 2.0 * eps_data as f64 + 1.0).min(n as f64)
}

/// `(4m/ε) ceil(t/m) + m`.
pub fn btree_expected_range_length(t: u64, eps_dp: f64, page_m: usize) -> f64 {
    4.0 * page_m as f64 / eps_dp * t.div_ceil(page_m as u64) as f64 + page_m as f64
}

/// Mean per-boundary offset under [`BoundaryReduction::Folded`] on an
/// unbounded domain, `1 / (1 - e^{-1/λ})`.
pub fn expected_boundary_noise(lambda: f64) -> f64 {
    -1.0 / (-1.0 / lambda).exp_m1()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pmf_at_zero() {
        let e = std::f64::consts::E;
        assert!((discrete_laplace_pmf(0, 1.0) - (e - 1.0) / (e + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn lambda_from_t() {
        assert_eq!(PrivacyParams::new(DEFAULT_EPS_DP, 100).unwrap().lambda(), 12800.0);
        let adj = PrivacyParams::with_mode(DEFAULT_EPS_DP, 200, DistanceMode::Adjusted, 64).unwrap();
        assert_eq!(adj.t, 72);
        assert!(PrivacyParams::with_mode(DEFAULT_EPS_DP, 128, DistanceMode::Adjusted, 64).is_err());
        assert!(PrivacyParams::new(0.0, 3).is_err());
    }

    #[test]
    fn zero_noise_returns_prediction() {
        let pred = PredictedRange { y_hat: 40, lo: 30, hi: 50 };
        let params = PrivacyParams::new(1.0, 10).unwrap();
        for mode in [BoundaryReduction::Folded, BoundaryReduction::Modular] {
            let out = obfuscate_range(&pred, 100, &params, mode, &mut FixedNoise::new(vec![0]));
            assert_eq!(out, ObfuscatedRange::contiguous(30, 50, 100));
        }
    }

    #[test]
    fn expected_lengths() {
        assert_eq!(expected_range_length(100, DEFAULT_EPS_DP, 64, usize::MAX), 25_729.0);
        assert_eq!(expected_range_length(10_000, DEFAULT_EPS_DP, 64, usize::MAX), 2_560_129.0);
        assert_eq!(expected_range_length(100, DEFAULT_EPS_DP, 64, 1000), 1000.0);
        assert_eq!(btree_expected_range_length(100, DEFAULT_EPS_DP, 256), 65_792.0);
        assert_eq!(btree_expected_range_length(10_000, DEFAULT_EPS_DP, 256), 2_621_696.0);
        assert_eq!(btree_expected_range_length(256, 0.5, 256), 4.0 * 256.0 / 0.5 + 256.0);
    }

    #[test]
    fn wrapped_positions_are_cyclic() {
        let w = ObfuscatedRange::wrapped(8, 1, 10);
        assert_eq!(w.positions().collect::<Vec<_>>(), vec![8, 9, 0, 1]);
        assert_eq!(w.len(), 4);
    }

    #[test]
    fn exponential_single_element() {
        let mut rng = rand::thread_rng();
        let p = PrivacyParams::new(1.0, 4).unwrap();
        assert_eq!(exponential_mechanism_boundary(3, &[9], &p, &mut rng), Ok(9));
        let w = exponential_weights(5, &[5, 6, 8, 12], &p);
        assert!(w.windows(2).all(|x| x[0] > x[1]));
    }
}
