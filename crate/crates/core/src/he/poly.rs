use super::params::{HeContext, RNS_PRIMES};
use super::HeError;

/// Polynomial of degree `< N` with coefficients in `[0, p)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlainPoly {
    coeffs: Vec<u64>,
}

impl PlainPoly {
    pub fn zero(n: usize) -> Self {
        PlainPoly { coeffs: vec![0; n] }
    }

    /// Builds a plaintext, reducing every coefficient modulo `p`.
    pub fn from_coeffs(ctx: &HeContext, mut coeffs: Vec<u64>) -> Result<Self, HeError> {
        if coeffs.len() != ctx.degree() {
            return Err(HeError::WrongLength { expected: ctx.degree(), found: coeffs.len() });
        }
        let p = ctx.plain().value();
        for c in coeffs.iter_mut() {
            *c %= p;
        }
        Ok(PlainPoly { coeffs })
    }

    /// Constant polynomial `c`.
    pub fn constant(ctx: &HeContext, c: u64) -> Self {
        let mut coeffs = vec![0; ctx.degree()];
        coeffs[0] = c % ctx.plain().value();
        PlainPoly { coeffs }
    }

    pub(crate) fn from_raw(coeffs: Vec<u64>) -> Self {
        PlainPoly { coeffs }
    }

    pub fn coeffs(&self) -> &[u64] {
        &self.coeffs
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Ring product in `Z_p[x]/(x^N + 1)` by schoolbook multiplication.
    pub fn mul_schoolbook(&self, other: &PlainPoly, ctx: &HeContext) -> PlainPoly {
        PlainPoly { coeffs: super::ntt::negacyclic_schoolbook(&self.coeffs, &other.coeffs, ctx.plain()) }
    }

    /// `x -> x^g` applied directly to coefficients.
    pub fn substitute(&self, galois_element: usize, ctx: &HeContext) -> PlainPoly {
        let n = self.coeffs.len();
        let p = ctx.plain();
        let mut out = vec![0u64; n];
        for (i, &c) in self.coeffs.iter().enumerate() {
            let e = (i * galois_element) % (2 * n);
            if e < n {
                out[e] = p.add(out[e], c);
            } else {
                out[e - n] = p.sub(out[e - n], c);
            }
        }
        PlainPoly { coeffs: out }
    }
}

/// Polynomial in `R_Q` stored as one residue vector per prime.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RnsPoly {
    pub(crate) data: Vec<u64>,
    pub(crate) degree: usize,
}

impl RnsPoly {
    pub fn zero(n: usize) -> Self {
        RnsPoly { data: vec![0; RNS_PRIMES * n], degree: n }
    }

    #[inline]
    pub fn limb(&self, i: usize) -> &[u64] {
        &self.data[i * self.degree..(i + 1) * self.degree]
    }

    #[inline]
    pub fn limb_mut(&mut self, i: usize) -> &mut [u64] {
        &mut self.data[i * self.degree..(i + 1) * self.degree]
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub(crate) fn add_assign(&mut self, other: &RnsPoly, ctx: &HeContext) {
        for (i, m) in ctx.moduli().iter().enumerate() {
            let n = self.degree;
            let dst = &mut self.data[i * n..(i + 1) * n];
            for (a, &b) in dst.iter_mut().zip(other.limb(i)) {
                *a = m.add(*a, b);
            }
        }
    }

    pub(crate) fn sub_assign(&mut self, other: &RnsPoly, ctx: &HeContext) {
        for (i, m) in ctx.moduli().iter().enumerate() {
            let n = self.degree;
            let dst = &mut self.data[i * n..(i + 1) * n];
            for (a, &b) in dst.iter_mut().zip(other.limb(i)) {
                *a = m.sub(*a, b);
            }
        }
    }

    /// Pointwise product with a Montgomery-form multiplicand.
    pub(crate) fn mul_mont_assign(&mut self, other_mont: &RnsPoly, ctx: &HeContext) {
        for (i, m) in ctx.moduli().iter().enumerate() {
            let n = self.degree;
            let dst = &mut self.data[i * n..(i + 1) * n];
            for (a, &b) in dst.iter_mut().zip(other_mont.limb(i)) {
                *a = m.mont_mul(*a, b);
            }
        }
    }

    /// `self += a ⊙ b_mont`
    pub(crate) fn fma_mont(&mut self, a: &RnsPoly, b_mont: &RnsPoly, ctx: &HeContext) {
        for (i, m) in ctx.moduli().iter().enumerate() {
            let n = self.degree;
            let dst = &mut self.data[i * n..(i + 1) * n];
            for ((d, &x), &y) in dst.iter_mut().zip(a.limb(i)).zip(b_mont.limb(i)) {
                *d = m.add(*d, m.mont_mul(x, y));
            }
        }
    }

    /// Slot permutation `out[i] = self[perm[i]]` in every limb.
    pub(crate) fn permuted(&self, perm: &[u32]) -> RnsPoly {
        let n = self.degree;
        let mut data = vec![0u64; self.data.len()];
        for i in 0..RNS_PRIMES {
            let src = &self.data[i * n..(i + 1) * n];
            for (d, &p) in data[i * n..(i + 1) * n].iter_mut().zip(perm) {
                *d = src[p as usize];
            }
        }
        RnsPoly { data, degree: n }
    }

    pub(crate) fn to_mont(&self, ctx: &HeContext) -> RnsPoly {
        let mut out = self.clone();
        for (i, m) in ctx.moduli().iter().enumerate() {
            for x in out.limb_mut(i) {
                *x = m.to_mont(*x);
            }
        }
        out
    }

    pub(crate) fn from_mont(&self, ctx: &HeContext) -> RnsPoly {
        let mut out = self.clone();
        for (i, m) in ctx.moduli().iter().enumerate() {
            for x in out.limb_mut(i) {
                *x = m.mont_mul(*x, 1);
            }
        }
        out
    }

    pub(crate) fn forward_ntt(&mut self, ctx: &HeContext) {
        for i in 0..RNS_PRIMES {
            let n = self.degree;
            ctx.ntt(i).forward(&mut self.data[i * n..(i + 1) * n]);
        }
    }

    pub(crate) fn inverse_ntt(&mut self, ctx: &HeContext) {
        for i in 0..RNS_PRIMES {
            let n = self.degree;
            ctx.ntt(i).inverse(&mut self.data[i * n..(i + 1) * n]);
        }
    }

    /// Lifts small signed coefficients into every limb (coefficient form).
    pub(crate) fn from_signed(coeffs: &[i64], ctx: &HeContext) -> RnsPoly {
        let n = coeffs.len();
        let mut out = RnsPoly::zero(n);
        for (i, m) in ctx.moduli().iter().enumerate() {
            let q = m.value() as i128;
            for (d, &c) in out.limb_mut(i).iter_mut().zip(coeffs) {
                *d = (c as i128).rem_euclid(q) as u64;
            }
        }
        out
    }
}

/// A plaintext prepared for multiplication: centered lift into `R_Q`,
/// transformed, in Montgomery form.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlainNtt {
    pub(crate) poly: RnsPoly,
}

impl PlainNtt {
    pub fn new(pt: &PlainPoly, ctx: &HeContext) -> Self {
        let p = ctx.plain().value();
        let half = p / 2;
        let n = ctx.degree();
        let mut poly = RnsPoly::zero(n);
        for (i, m) in ctx.moduli().iter().enumerate() {
            let q = m.value();
            for (d, &c) in poly.limb_mut(i).iter_mut().zip(pt.coeffs()) {
                *d = if c > half { q - (p - c) } else { c };
            }
            ctx.ntt(i).forward(poly.limb_mut(i));
            for x in poly.limb_mut(i) {
                *x = m.to_mont(*x);
            }
        }
        PlainNtt { poly }
    }
}
