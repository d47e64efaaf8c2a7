use rand::{CryptoRng, RngCore};

use super::keys::{read_poly, sample_error, sample_uniform, ByteReader, GaloisKeySet, SecretKey};
use super::params::{HeContext, RNS_PRIMES};
use super::poly::{PlainNtt, PlainPoly, RnsPoly};
use super::HeError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseTag {
    Fresh,
    Derived,
}

/// `(c0, c1)` with `c0 + c1 * s = Δ m + e`, both components in NTT form.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ciphertext {
    pub(crate) c0: RnsPoly,
    pub(crate) c1: RnsPoly,
    pub(crate) tag: NoiseTag,
}

impl Ciphertext {
    pub fn tag(&self) -> NoiseTag {
        self.tag
    }

    /// Params fingerprint, then `c0` and `c1`, each as `N` little-endian u64
    /// coefficients per prime (transformed representation).
    pub fn to_bytes(&self, ctx: &HeContext) -> Vec<u8> {
        let mut out = Vec::with_capacity(ctx.ciphertext_bytes());
        self.write_to(ctx, &mut out);
        out
    }

    pub fn write_to(&self, ctx: &HeContext, out: &mut Vec<u8>) {
        out.extend_from_slice(&ctx.params().fingerprint().to_le_bytes());
        for poly in [&self.c0, &self.c1] {
            for v in &poly.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }

    pub fn from_bytes(bytes: &[u8], ctx: &HeContext) -> Result<Self, HeError> {
        if bytes.len() != ctx.ciphertext_bytes() {
            return Err(HeError::Malformed(format!(
                "ciphertext is {} bytes, expected {}",
                bytes.len(),
                ctx.ciphertext_bytes()
            )));
        }
        let mut r = ByteReader(bytes);
        let found = r.u64()?;
        let expected = ctx.params().fingerprint();
        if found != expected {
            return Err(HeError::ParamsMismatch { expected, found });
        }
        let c0 = read_poly(&mut r, ctx)?;
        let c1 = read_poly(&mut r, ctx)?;
        Ok(Ciphertext { c0, c1, tag: NoiseTag::Derived })
    }
}

pub fn encrypt<R: RngCore + CryptoRng>(
    pt: &PlainPoly,
    sk: &SecretKey,
    ctx: &HeContext,
    rng: &mut R,
) -> Ciphertext {
    let n = ctx.degree();
    let a = sample_uniform(ctx, rng);
    let e = sample_error(ctx, rng);
    let mut c0 = RnsPoly::from_signed(&e, ctx);
    for (i, m) in ctx.moduli().iter().enumerate() {
        let delta = ctx.delta_rns()[i];
        let limb = c0.limb_mut(i);
        for k in 0..n {
            limb[k] = m.add(limb[k], m.mul(pt.coeffs()[k], delta));
        }
    }
    c0.forward_ntt(ctx);
    for (i, m) in ctx.moduli().iter().enumerate() {
        let s = sk.ntt_mont.limb(i);
        let av = a.limb(i);
        let limb = c0.limb_mut(i);
        for k in 0..n {
            limb[k] = m.sub(limb[k], m.mont_mul(av[k], s[k]));
        }
    }
    Ciphertext { c0, c1: a, tag: NoiseTag::Fresh }
}

/// `c0 + c1 * s` in coefficient form.
fn phase(ct: &Ciphertext, sk: &SecretKey, ctx: &HeContext) -> RnsPoly {
    let mut v = ct.c0.clone();
    v.fma_mont(&ct.c1, &sk.ntt_mont, ctx);
    v.inverse_ntt(ctx);
    v
}

/// For `x` in `[0, Q)` returns `(round(p x / Q) mod p, [p x]_Q)`.
#[inline]
fn scale_down(x: u128, ctx: &HeContext) -> (u64, u128) {
    let q0 = ctx.moduli()[0].value() as u128;
    let q1 = ctx.moduli()[1].value() as u128;
    let p = ctx.plain().value() as u128;
    let big = ctx.big_modulus();
    // x = hi q1 + lo, p hi = u q0 + rem
    let hi = x / q1;
    let lo = x % q1;
    let u = p * hi / q0;
    let rem = p * hi % q0;
    // p x / Q = u + (rem q1 + p lo) / Q
    let tail = rem * q1 + p * lo;
    let m = (u + (tail + big / 2) / big) % p;
    (m as u64, tail % big)
}

pub fn decrypt(ct: &Ciphertext, sk: &SecretKey, ctx: &HeContext) -> PlainPoly {
    let v = phase(ct, sk, ctx);
    let coeffs = (0..ctx.degree())
        .map(|k| scale_down(ctx.crt(v.limb(0)[k], v.limb(1)[k]), ctx).0)
        .collect();
    PlainPoly::from_raw(coeffs)
}

/// `log2 ||[p (c0 + c1 s)]_Q||_inf`, the scaled residual noise.
pub fn residual_noise_bits(ct: &Ciphertext, sk: &SecretKey, ctx: &HeContext) -> f64 {
    let v = phase(ct, sk, ctx);
    let big = ctx.big_modulus();
    let mut worst = 0u128;
    for k in 0..ctx.degree() {
        let (_, r) = scale_down(ctx.crt(v.limb(0)[k], v.limb(1)[k]), ctx);
        let centered = if r > big / 2 { big - r } else { r };
        worst = worst.max(centered);
    }
    if worst == 0 {
        0.0
    } else {
        (worst as f64).log2()
    }
}

/// Remaining noise headroom in bits; decryption is correct while this is
/// positive. Saturates at zero.
pub fn noise_budget(ct: &Ciphertext, sk: &SecretKey, ctx: &HeContext) -> u32 {
    let q_bits = (ctx.big_modulus() as f64).log2();
    let headroom = q_bits - 1.0 - residual_noise_bits(ct, sk, ctx);
    headroom.floor().max(0.0) as u32
}

pub fn add_ct(a: &Ciphertext, b: &Ciphertext, ctx: &HeContext) -> Ciphertext {
    let mut out = a.clone();
    out.c0.add_assign(&b.c0, ctx);
    out.c1.add_assign(&b.c1, ctx);
    out.tag = NoiseTag::Derived;
    out
}

pub fn sub_ct(a: &Ciphertext, b: &Ciphertext, ctx: &HeContext) -> Ciphertext {
    let mut out = a.clone();
    out.c0.sub_assign(&b.c0, ctx);
    out.c1.sub_assign(&b.c1, ctx);
    out.tag = NoiseTag::Derived;
    out
}

pub fn mul_plain(ct: &Ciphertext, pt: &PlainNtt, ctx: &HeContext) -> Ciphertext {
    let mut out = ct.clone();
    out.c0.mul_mont_assign(&pt.poly, ctx);
    out.c1.mul_mont_assign(&pt.poly, ctx);
    out.tag = NoiseTag::Derived;
    out
}

/// Multiplies by `x^{-2^j}`.
pub fn mul_monomial_inv(ct: &Ciphertext, j: usize, ctx: &HeContext) -> Ciphertext {
    let mut out = ct.clone();
    mul_monomial_inv_assign(&mut out, j, ctx);
    out
}

pub(crate) fn mul_monomial_inv_assign(ct: &mut Ciphertext, j: usize, ctx: &HeContext) {
    let mono = ctx.inv_monomial(j);
    for (i, m) in ctx.moduli().iter().enumerate() {
        for poly in [&mut ct.c0, &mut ct.c1] {
            for (x, &y) in poly.limb_mut(i).iter_mut().zip(&mono[i]) {
                *x = m.mont_mul(*x, y);
            }
        }
    }
    ct.tag = NoiseTag::Derived;
}

/// Substitutes `x -> x^g` and switches back to the original key.
pub fn apply_automorphism(
    ct: &Ciphertext,
    galois_element: usize,
    keys: &GaloisKeySet,
    ctx: &HeContext,
) -> Result<Ciphertext, HeError> {
    if galois_element == 1 {
        return Ok(ct.clone());
    }
    let key = keys.get(galois_element)?;
    let perm = ctx.permutation(galois_element);
    let mut c0 = ct.c0.permuted(&perm);
    let mut c1 = ct.c1.permuted(&perm);
    c1.inverse_ntt(ctx);

    let n = ctx.degree();
    let bits = ctx.params().decomp_log;
    let mask = (1u128 << bits) - 1;
    let values: Vec<u128> = (0..n).map(|k| ctx.crt(c1.limb(0)[k], c1.limb(1)[k])).collect();
    let mut acc1 = RnsPoly::zero(n);
    let mut digit = RnsPoly::zero(n);
    for d in 0..key.a.len() {
        let shift = bits as usize * d;
        for k in 0..n {
            let v = ((values[k] >> shift) & mask) as u64;
            for i in 0..RNS_PRIMES {
                digit.data[i * n + k] = v;
            }
        }
        digit.forward_ntt(ctx);
        c0.fma_mont(&digit, &key.b[d], ctx);
        acc1.fma_mont(&digit, &key.a[d], ctx);
    }
    Ok(Ciphertext { c0, c1: acc1, tag: NoiseTag::Derived })
}

#[cfg(test)]
mod tests {
    use super::super::keys::{gen_galois_keys_for, keygen};
    use super::super::params::HeParams;
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;
    use std::sync::Arc;

    fn setup(n: usize) -> (Arc<HeContext>, SecretKey, ChaCha20Rng) {
        let ctx = HeContext::new(HeParams::with_ring_degree(n).unwrap()).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let sk = keygen(&ctx, &mut rng);
        (ctx, sk, rng)
    }

    fn random_pt(ctx: &HeContext, rng: &mut impl Rng) -> PlainPoly {
        let p = ctx.plain().value();
        PlainPoly::from_coeffs(ctx, (0..ctx.degree()).map(|_| rng.gen_range(0..p)).collect())
            .unwrap()
    }

    #[test]
    fn round_trip_and_fresh_budget() {
        let (ctx, sk, mut rng) = setup(64);
        let pt = random_pt(&ctx, &mut rng);
        let ct = encrypt(&pt, &sk, &ctx, &mut rng);
        assert_eq!(decrypt(&ct, &sk, &ctx), pt);
        assert!(noise_budget(&ct, &sk, &ctx) >= 80);
    }

    #[test]
    fn scale_down_matches_wide_arithmetic() {
        let (ctx, _, mut rng) = setup(16);
        let big = ctx.big_modulus();
        let p = ctx.plain().value() as u128;
        for _ in 0..1000 {
            let x = rng.gen_range(0..big);
            // p x / Q computed with 256-bit style splitting by long division
            let (m, r) = scale_down(x, &ctx);
            let prod_hi = (x >> 64) * p;
            let prod_lo = (x & u64::MAX as u128) * p;
            // recombine p x = prod_hi 2^64 + prod_lo and reduce by Q
            let mut rem = 0u128;
            let mut quo_bits = Vec::new();
            for bit in (0..192).rev() {
                let b = if bit >= 64 {
                    (prod_hi + (prod_lo >> 64)) >> (bit - 64) & 1
                } else {
                    (prod_lo & u64::MAX as u128) >> bit & 1
                };
                rem = (rem << 1) | b;
                let q = rem >= big;
                if q {
                    rem -= big;
                }
                quo_bits.push(q);
            }
            let quo = quo_bits.iter().fold(0u128, |acc, &b| (acc << 1) | b as u128);
            let rounded = if rem >= big - big / 2 { quo + 1 } else { quo };
            assert_eq!(r, rem);
            assert_eq!(m as u128, rounded % p);
        }
    }

    #[test]
    fn automorphism_matches_substitution() {
        let (ctx, sk, mut rng) = setup(64);
        let elements = [3usize, 5, 33, 127];
        let keys = gen_galois_keys_for(&sk, &ctx, &elements, &mut rng);
        for &g in &elements {
            let pt = random_pt(&ctx, &mut rng);
            let ct = encrypt(&pt, &sk, &ctx, &mut rng);
            let out = apply_automorphism(&ct, g, &keys, &ctx).unwrap();
            assert_eq!(decrypt(&out, &sk, &ctx), pt.substitute(g, &ctx));
        }
        assert!(matches!(
            apply_automorphism(&encrypt(&PlainPoly::zero(64), &sk, &ctx, &mut rng), 7, &keys, &ctx),
            Err(HeError::MissingGaloisKey(7))
        ));
    }

    #[test]
    fn serialization_round_trip() {
        let (ctx, sk, mut rng) = setup(32);
        let ct = encrypt(&random_pt(&ctx, &mut rng), &sk, &ctx, &mut rng);
        let bytes = ct.to_bytes(&ctx);
        assert_eq!(bytes.len(), ctx.ciphertext_bytes());
        let back = Ciphertext::from_bytes(&bytes, &ctx).unwrap();
        assert_eq!(back.c0, ct.c0);
        assert_eq!(back.c1, ct.c1);
        let mut bad = bytes.clone();
        bad[0] ^= 1;
        assert!(matches!(Ciphertext::from_bytes(&bad, &ctx), Err(HeError::ParamsMismatch { .. })));
        assert!(Ciphertext::from_bytes(&bytes[..bytes.len() - 1], &ctx).is_err());
    }
}
