use rand::{CryptoRng, Rng, RngCore};
use rand_distr::{Distribution, Normal};

use super::params::{expansion_element, HeContext, RNS_PRIMES};
use super::poly::RnsPoly;
use super::HeError;

/// Ternary secret key.
#[derive(Clone)]
pub struct SecretKey {
    pub(crate) coeffs: Vec<i64>,
    /// NTT form, Montgomery representation.
    pub(crate) ntt_mont: RnsPoly,
    /// NTT form, normal representation.
    pub(crate) ntt: RnsPoly,
}

impl std::fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SecretKey").field("degree", &self.coeffs.len()).finish_non_exhaustive()
    }
}

impl SecretKey {
    pub fn coeffs(&self) -> &[i64] {
        &self.coeffs
    }
}

pub fn keygen<R: RngCore + CryptoRng>(ctx: &HeContext, rng: &mut R) -> SecretKey {
    let coeffs: Vec<i64> = (0..ctx.degree()).map(|_| rng.gen_range(-1i64..=1)).collect();
    let mut ntt = RnsPoly::from_signed(&coeffs, ctx);
    ntt.forward_ntt(ctx);
    SecretKey { ntt_mont: ntt.to_mont(ctx), ntt, coeffs }
}

pub(crate) fn sample_error<R: RngCore>(ctx: &HeContext, rng: &mut R) -> Vec<i64> {
    let sigma = ctx.params().noise_stddev;
    let normal = Normal::new(0.0, sigma).expect("positive stddev");
    let bound = (6.0 * sigma).ceil();
    (0..ctx.degree())
        .map(|_| normal.sample(rng).round().clamp(-bound, bound) as i64)
        .collect()
}

pub(crate) fn sample_uniform<R: RngCore>(ctx: &HeContext, rng: &mut R) -> RnsPoly {
    let n = ctx.degree();
    let mut out = RnsPoly::zero(n);
    for (i, m) in ctx.moduli().iter().enumerate() {
        let q = m.value();
        for x in out.limb_mut(i) {
            *x = rng.gen_range(0..q);
        }
    }
    out
}

/// Key-switching key from `x -> x^g` applied to the secret back to the
/// secret, one row per decomposition digit. Rows are kept transformed and in
/// Montgomery form.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GaloisKey {
    pub(crate) element: usize,
    pub(crate) b: Vec<RnsPoly>,
    pub(crate) a: Vec<RnsPoly>,
}

impl GaloisKey {
    pub fn element(&self) -> usize {
        self.element
    }

    pub fn digit_count(&self) -> usize {
        self.a.len()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GaloisKeySet {
    fingerprint: u64,
    keys: Vec<GaloisKey>,
}

fn gen_key<R: RngCore + CryptoRng>(
    ctx: &HeContext,
    sk: &SecretKey,
    element: usize,
    rng: &mut R,
) -> GaloisKey {
    let perm = ctx.permutation(element);
    let rotated_s = sk.ntt.permuted(&perm);
    let mut b_rows = Vec::with_capacity(ctx.digit_count());
    let mut a_rows = Vec::with_capacity(ctx.digit_count());
    for d in 0..ctx.digit_count() {
        let a = sample_uniform(ctx, rng);
        let mut b = RnsPoly::from_signed(&sample_error(ctx, rng), ctx);
        b.forward_ntt(ctx);
        let weights = ctx.digit_weight(d);
        for (i, m) in ctx.moduli().iter().enumerate() {
            let n = ctx.degree();
            let w = weights[i];
            for k in 0..n {
                let a_s = m.mont_mul(a.limb(i)[k], sk.ntt_mont.limb(i)[k]);
                let shifted = m.mul(rotated_s.limb(i)[k], w);
                let v = m.add(m.sub(b.limb(i)[k], a_s), shifted);
                b.limb_mut(i)[k] = v;
            }
        }
        b_rows.push(b.to_mont(ctx));
        a_rows.push(a.to_mont(ctx));
    }
    GaloisKey { element, b: b_rows, a: a_rows }
}

/// Keys for the expansion automorphisms `x -> x^(N/2^j + 1)`, `j = 0..log2 N`.
pub fn gen_galois_keys<R: RngCore + CryptoRng>(
    sk: &SecretKey,
    ctx: &HeContext,
    rng: &mut R,
) -> GaloisKeySet {
    let n = ctx.degree();
    let elements: Vec<usize> =
        (0..ctx.params().log_ring_degree()).map(|j| expansion_element(n, j)).collect();
    gen_galois_keys_for(sk, ctx, &elements, rng)
}

pub fn gen_galois_keys_for<R: RngCore + CryptoRng>(
    sk: &SecretKey,
    ctx: &HeContext,
    elements: &[usize],
    rng: &mut R,
) -> GaloisKeySet {
    let keys = elements.iter().map(|&g| gen_key(ctx, sk, g, rng)).collect();
    GaloisKeySet { fingerprint: ctx.params().fingerprint(), keys }
}

impl GaloisKeySet {
    pub fn get(&self, element: usize) -> Result<&GaloisKey, HeError> {
        self.keys
            .iter()
            .find(|k| k.element == element)
            .ok_or(HeError::MissingGaloisKey(element))
    }

    pub fn elements(&self) -> impl Iterator<Item = usize> + '_ {
        self.keys.iter().map(|k| k.element)
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    /// Layout: params fingerprint (u64), key count (u32), then per key the
    /// galois element (u32), digit count (u32) and for each digit the `b`
    /// and `a` rows as `N` little-endian u64 coefficients per prime.
    pub fn to_bytes(&self, ctx: &HeContext) -> Vec<u8> {
        let n = ctx.degree();
        let digits = self.keys.first().map_or(0, |k| k.a.len());
        let mut out =
            Vec::with_capacity(12 + self.keys.len() * (8 + digits * 2 * RNS_PRIMES * n * 8));
        out.extend_from_slice(&self.fingerprint.to_le_bytes());
        out.extend_from_slice(&(self.keys.len() as u32).to_le_bytes());
        for key in &self.keys {
            out.extend_from_slice(&(key.element as u32).to_le_bytes());
            out.extend_from_slice(&(key.a.len() as u32).to_le_bytes());
            for (b, a) in key.b.iter().zip(&key.a) {
                for row in [b, a] {
                    for v in row.from_mont(ctx).data {
                        out.extend_from_slice(&v.to_le_bytes());
                    }
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], ctx: &HeContext) -> Result<Self, HeError> {
        let mut r = ByteReader(bytes);
        let fingerprint = r.u64()?;
        let expected = ctx.params().fingerprint();
        if fingerprint != expected {
            return Err(HeError::ParamsMismatch { expected, found: fingerprint });
        }
        let count = r.u32()? as usize;
        if count > 64 {
            return Err(HeError::Malformed(format!("implausible key count {count}")));
        }
        let n = ctx.degree();
        let mut keys = Vec::with_capacity(count);
        for _ in 0..count {
            let element = r.u32()? as usize;
            if element % 2 == 0 || element >= 2 * n {
                return Err(HeError::Malformed(format!("bad galois element {element}")));
            }
            let digits = r.u32()? as usize;
            if digits != ctx.digit_count() {
                return Err(HeError::Malformed(format!(
                    "key has {digits} digits, parameters need {}",
                    ctx.digit_count()
                )));
            }
            let mut b = Vec::with_capacity(digits);
            let mut a = Vec::with_capacity(digits);
            for _ in 0..digits {
                b.push(read_poly(&mut r, ctx)?.to_mont(ctx));
                a.push(read_poly(&mut r, ctx)?.to_mont(ctx));
            }
            keys.push(GaloisKey { element, b, a });
        }
        if !r.0.is_empty() {
            return Err(HeError::Malformed("trailing bytes after key set".into()));
        }
        Ok(GaloisKeySet { fingerprint, keys })
    }
}

pub(crate) struct ByteReader<'a>(pub(crate) &'a [u8]);

impl ByteReader<'_> {
    pub(crate) fn take(&mut self, len: usize) -> Result<&[u8], HeError> {
        if self.0.len() < len {
            return Err(HeError::Malformed("truncated input".into()));
        }
        let (head, tail) = self.0.split_at(len);
        self.0 = tail;
        Ok(head)
    }

    pub(crate) fn u32(&mut self) -> Result<u32, HeError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64, HeError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub(crate) fn read_poly(r: &mut ByteReader<'_>, ctx: &HeContext) -> Result<RnsPoly, HeError> {
    let n = ctx.degree();
    let mut poly = RnsPoly::zero(n);
    for (i, m) in ctx.moduli().iter().enumerate() {
        let raw = r.take(n * 8)?;
        for (d, chunk) in poly.limb_mut(i).iter_mut().zip(raw.chunks_exact(8)) {
            let v = u64::from_le_bytes(chunk.try_into().unwrap());
            if v >= m.value() {
                return Err(HeError::Malformed("coefficient out of range".into()));
            }
            *d = v;
        }
    }
    Ok(poly)
}
