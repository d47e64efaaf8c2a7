use std::sync::Arc;

use sha2::{Digest, Sha256};

use super::arith::{next_prime_congruent_one, prev_prime_congruent_one, Modulus};
use super::ntt::NttTable;
use super::HeError;

/// Number of primes in the ciphertext modulus `Q = q_0 * q_1`.
pub const RNS_PRIMES: usize = 2;

/// Default ring degree.
pub const DEFAULT_RING_DEGREE: usize = 4096;

/// Smallest prime `>= 2^20` with `p ≡ 1 (mod 8192)`, the plaintext modulus
/// for `N = 4096`.
pub const DEFAULT_PLAIN_MODULUS: u64 = 1_073_153;

/// The two largest primes below `2^62` with `q ≡ 1 (mod 2^17)`. The
/// congruence supports every ring degree up to `2^16`.
pub const CIPHER_PRIMES: [u64; RNS_PRIMES] = [4_611_686_018_425_815_041, 4_611_686_018_423_062_529];

/// Congruence class shared by [`CIPHER_PRIMES`].
pub const CIPHER_PRIME_STEP: u64 = 1 << 17;

pub const DEFAULT_NOISE_STDDEV: f64 = 3.2;

/// Key-switching digit width in bits.
pub const DEFAULT_DECOMP_LOG: u32 = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct HeParams {
    pub ring_degree: usize,
    pub plain_modulus: u64,
    pub cipher_moduli: [u64; RNS_PRIMES],
    pub noise_stddev: f64,
    pub decomp_log: u32,
}

impl Default for HeParams {
    fn default() -> Self {
        HeParams {
            ring_degree: DEFAULT_RING_DEGREE,
            plain_modulus: DEFAULT_PLAIN_MODULUS,
            cipher_moduli: CIPHER_PRIMES,
            noise_stddev: DEFAULT_NOISE_STDDEV,
            decomp_log: DEFAULT_DECOMP_LOG,
        }
    }
}

impl HeParams {
    /// Parameters for ring degree `n`: the plaintext prime is the smallest
    /// prime `>= 2^20` congruent to one modulo `2n`.
    pub fn with_ring_degree(n: usize) -> Result<Self, HeError> {
        if !n.is_power_of_two() || n < 4 || n as u64 > CIPHER_PRIME_STEP / 2 {
            return Err(HeError::InvalidParams(format!("unsupported ring degree {n}")));
        }
        let plain_modulus = if n == DEFAULT_RING_DEGREE {
            DEFAULT_PLAIN_MODULUS
        } else {
            next_prime_congruent_one(1 << 20, 2 * n as u64)
        };
        Ok(HeParams { ring_degree: n, plain_modulus, ..HeParams::default() })
    }

    pub fn validate(&self) -> Result<(), HeError> {
        let n = self.ring_degree;
        let bad = |msg: String| Err(HeError::InvalidParams(msg));
        if !n.is_power_of_two() || n < 4 {
            return bad(format!("ring degree {n} is not a power of two >= 4"));
        }
        if self.plain_modulus < 3 || !super::arith::is_prime(self.plain_modulus) {
            return bad(format!("plain modulus {} is not an odd prime", self.plain_modulus));
        }
        for &q in &self.cipher_moduli {
            if !super::arith::is_prime(q) || q >= 1 << 62 || (q - 1) % (2 * n as u64) != 0 {
                return bad(format!("cipher prime {q} is not an NTT prime below 2^62 for N = {n}"));
            }
            if self.plain_modulus >= q {
                return bad("plain modulus must be smaller than every cipher prime".into());
            }
        }
        if self.cipher_moduli[0] == self.cipher_moduli[1] {
            return bad("cipher primes must be distinct".into());
        }
        if !(1..=62).contains(&self.decomp_log) {
            return bad(format!("decomposition width {} out of range", self.decomp_log));
        }
        if !(self.noise_stddev > 0.0) {
            return bad("noise standard deviation must be positive".into());
        }
        Ok(())
    }

    /// Payload bits per plaintext coefficient, `floor(log2 p)`.
    pub fn limb_bits(&self) -> u32 {
        63 - self.plain_modulus.leading_zeros()
    }

    pub fn log_ring_degree(&self) -> u32 {
        self.ring_degree.trailing_zeros()
    }

    /// Stable 64-bit fingerprint of the parameter set, carried in every
    /// serialized ciphertext and key set.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Sha256::new();
        h.update(b"relaxpir-he-params-v1");
        h.update((self.ring_degree as u64).to_le_bytes());
        h.update(self.plain_modulus.to_le_bytes());
        for q in self.cipher_moduli {
            h.update(q.to_le_bytes());
        }
        h.update(self.noise_stddev.to_bits().to_le_bytes());
        h.update(self.decomp_log.to_le_bytes());
        let digest = h.finalize();
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }
}

/// Re-derives the pinned cipher primes by search.
pub fn search_cipher_primes() -> [u64; RNS_PRIMES] {
    let first = prev_prime_congruent_one(1 << 62, CIPHER_PRIME_STEP);
    let second = prev_prime_congruent_one(first, CIPHER_PRIME_STEP);
    [first, second]
}

/// Precomputed tables for one parameter set. Cheap to share behind an `Arc`.
#[derive(Debug)]
pub struct HeContext {
    params: HeParams,
    plain: Modulus,
    moduli: [Modulus; RNS_PRIMES],
    ntt: [NttTable; RNS_PRIMES],
    /// `Q = q_0 q_1`
    big_modulus: u128,
    /// `q_0^{-1} mod q_1`
    crt_q0_inv: u64,
    /// `floor(Q / p)` reduced modulo each prime
    delta_rns: [u64; RNS_PRIMES],
    digit_count: usize,
    /// `2^(decomp_log * d) mod q_i` for each digit `d`
    digit_weights: Vec<[u64; RNS_PRIMES]>,
    /// NTT of `x^{-2^j}` in Montgomery form, indexed by `j`
    inv_monomials: Vec<[Vec<u64>; RNS_PRIMES]>,
    /// Slot permutations for the expansion automorphisms, indexed by `j`
    expansion_perms: Vec<Vec<u32>>,
}

impl HeContext {
    pub fn new(params: HeParams) -> Result<Arc<Self>, HeError> {
        params.validate()?;
        let n = params.ring_degree;
        let moduli = params.cipher_moduli.map(Modulus::new);
        let ntt = moduli.map(|m| NttTable::new(m, n));
        let big_modulus = params.cipher_moduli[0] as u128 * params.cipher_moduli[1] as u128;
        let crt_q0_inv = moduli[1].inv(params.cipher_moduli[0] % params.cipher_moduli[1]);
        let delta = big_modulus / params.plain_modulus as u128;
        let delta_rns = moduli.map(|m| m.reduce_u128(delta));
        let q_bits = 128 - big_modulus.leading_zeros();
        let digit_count = q_bits.div_ceil(params.decomp_log) as usize;
        let digit_weights = (0..digit_count)
            .map(|d| {
                let shift = params.decomp_log as usize * d;
                moduli.map(|m| {
                    let mut w = 1u64;
                    for _ in 0..shift {
                        w = m.add(w, w);
                    }
                    w
                })
            })
            .collect();
        let log_n = params.log_ring_degree();
        let mut inv_monomials = Vec::with_capacity(log_n as usize);
        let mut expansion_perms = Vec::with_capacity(log_n as usize);
        for j in 0..log_n {
            let h = 1usize << j;
            inv_monomials.push(std::array::from_fn(|i| {
                // x^{-h} = -x^{N-h}
                let mut mono = vec![0u64; n];
                mono[n - h] = moduli[i].value() - 1;
                ntt[i].forward(&mut mono);
                mono.iter().map(|&v| moduli[i].to_mont(v)).collect()
            }));
            expansion_perms.push(ntt[0].automorphism_permutation(expansion_element(n, j)));
        }
        Ok(Arc::new(HeContext {
            plain: Modulus::new(params.plain_modulus),
            params,
            moduli,
            ntt,
            big_modulus,
            crt_q0_inv,
            delta_rns,
            digit_count,
            digit_weights,
            inv_monomials,
            expansion_perms,
        }))
    }

    pub fn params(&self) -> &HeParams {
        &self.params
    }

    pub fn degree(&self) -> usize {
        self.params.ring_degree
    }

    pub fn plain(&self) -> &Modulus {
        &self.plain
    }

    pub fn moduli(&self) -> &[Modulus; RNS_PRIMES] {
        &self.moduli
    }

    pub fn ntt(&self, i: usize) -> &NttTable {
        &self.ntt[i]
    }

    pub fn big_modulus(&self) -> u128 {
        self.big_modulus
    }

    pub fn delta_rns(&self) -> &[u64; RNS_PRIMES] {
        &self.delta_rns
    }

    pub fn digit_count(&self) -> usize {
        self.digit_count
    }

    pub fn digit_weight(&self, d: usize) -> &[u64; RNS_PRIMES] {
        &self.digit_weights[d]
    }

    pub fn inv_monomial(&self, j: usize) -> &[Vec<u64>; RNS_PRIMES] {
        &self.inv_monomials[j]
    }

    /// Slot permutation for galois element `g`; the expansion elements are
    /// cached.
    pub fn permutation(&self, galois_element: usize) -> std::borrow::Cow<'_, [u32]> {
        let n = self.degree();
        for (j, perm) in self.expansion_perms.iter().enumerate() {
            if expansion_element(n, j as u32) == galois_element {
                return std::borrow::Cow::Borrowed(perm);
            }
        }
        std::borrow::Cow::Owned(self.ntt[0].automorphism_permutation(galois_element))
    }

    /// Reconstructs the integer in `[0, Q)` from its residues.
    #[inline]
    pub fn crt(&self, r0: u64, r1: u64) -> u128 {
        let m1 = &self.moduli[1];
        let diff = m1.sub(r1 % m1.value(), r0 % m1.value());
        let k = m1.mul(diff, self.crt_q0_inv);
        r0 as u128 + self.params.cipher_moduli[0] as u128 * k as u128
    }

    /// Serialized length in bytes of one ciphertext.
    pub fn ciphertext_bytes(&self) -> usize {
        8 + 2 * RNS_PRIMES * self.degree() * 8
    }
}

/// Galois element `N / 2^j + 1` used in round `j` of oblivious expansion.
pub fn expansion_element(n: usize, j: u32) -> usize {
    n / (1 << j) + 1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinned_primes_match_search() {
        assert_eq!(search_cipher_primes(), CIPHER_PRIMES);
        assert_eq!(next_prime_congruent_one(1 << 20, 8192), DEFAULT_PLAIN_MODULUS);
        HeParams::default().validate().unwrap();
        assert_eq!(HeParams::default().limb_bits(), 20);
    }

    #[test]
    fn crt_inverts_residues() {
        let ctx = HeContext::new(HeParams::with_ring_degree(16).unwrap()).unwrap();
        let q = ctx.big_modulus();
        for x in [0u128, 1, q - 1, q / 2, 0x1234_5678_9abc_def0_1234_5678u128 % q] {
            let r = ctx.moduli().map(|m| (x % m.value() as u128) as u64);
            assert_eq!(ctx.crt(r[0], r[1]), x);
        }
    }

    #[test]
    fn rejects_bad_params() {
        let mut p = HeParams::default();
        p.plain_modulus = 1048577;
        assert!(p.validate().is_err());
        let mut p = HeParams::default();
        p.ring_degree = 3000;
        assert!(p.validate().is_err());
        assert!(HeParams::with_ring_degree(1 << 17).is_err());
    }
}
