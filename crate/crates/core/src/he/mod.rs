//! Minimal ring-LWE homomorphic layer for variable-range PIR.
//!
//! Ciphertexts live in `R_Q = Z_Q[x]/(x^N + 1)` with `Q` the product of two
//! 62-bit NTT primes, kept in RNS/NTT form. Plaintexts are coefficient-packed
//! polynomials modulo a ~20-bit prime `p`. Supported operations are exactly
//! what the retrieval protocol needs: symmetric encryption, addition,
//! plaintext multiplication, automorphisms with key switching, and oblivious
//! one-hot expansion.

pub mod arith;
mod cipher;
mod expand;
mod keys;
pub mod ntt;
mod params;
mod poly;
mod split_fold;

pub use cipher::{
    add_ct, apply_automorphism, decrypt, encrypt, mul_monomial_inv, mul_plain, noise_budget,
    residual_noise_bits, sub_ct, Ciphertext, NoiseTag,
};
pub use expand::{expand_and_fold, expansion_depth, expansion_scale, oblivious_expand};
pub use keys::{gen_galois_keys, gen_galois_keys_for, keygen, GaloisKey, GaloisKeySet, SecretKey};
pub use params::{
    expansion_element, search_cipher_primes, HeContext, HeParams, CIPHER_PRIMES, CIPHER_PRIME_STEP,
    DEFAULT_DECOMP_LOG, DEFAULT_NOISE_STDDEV, DEFAULT_PLAIN_MODULUS, DEFAULT_RING_DEGREE,
    RNS_PRIMES,
};
pub use poly::{PlainNtt, PlainPoly, RnsPoly};
pub use split_fold::{giant_plaintexts, split_fold, FoldPlan};

#[derive(Debug, thiserror::Error)]
pub enum HeError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("parameter fingerprint mismatch: expected {expected:#018x}, found {found:#018x}")]
    ParamsMismatch { expected: u64, found: u64 },
    #[error("missing galois key for element {0}")]
    MissingGaloisKey(usize),
    #[error("expansion width {width} exceeds ring degree {degree}")]
    ExpansionTooWide { width: usize, degree: usize },
    #[error("malformed encoding: {0}")]
    Malformed(String),
    #[error("plaintext has {found} coefficients, expected {expected}")]
    WrongLength { expected: usize, found: usize },
}
