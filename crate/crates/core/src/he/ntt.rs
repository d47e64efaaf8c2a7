//! Negacyclic number-theoretic transform over `Z_q[x]/(x^N + 1)`.
//!
//! Forward transform is Cooley-Tukey with twiddles in bit-reversed order and
//! lazy (Harvey) butterflies; the inverse is Gentleman-Sande. Output slot `i`
//! of the forward transform holds the evaluation at `psi^(2*brv(i)+1)`.

use super::arith::{primitive_root_of_unity, Modulus};

#[derive(Clone, Debug)]
pub struct NttTable {
    modulus: Modulus,
    degree: usize,
    log_degree: u32,
    roots: Vec<u64>,
    roots_shoup: Vec<u64>,
    inv_roots: Vec<u64>,
    inv_roots_shoup: Vec<u64>,
    inv_degree: u64,
    inv_degree_shoup: u64,
    psi: u64,
}

pub fn bit_reverse(x: usize, bits: u32) -> usize {
    if bits == 0 {
        0
    } else {
        x.reverse_bits() >> (usize::BITS - bits)
    }
}

impl NttTable {
    pub fn new(modulus: Modulus, degree: usize) -> Self {
        assert!(degree.is_power_of_two() && degree >= 2);
        let log_degree = degree.trailing_zeros();
        let psi = primitive_root_of_unity(&modulus, 2 * degree as u64);
        let psi_inv = modulus.inv(psi);
        let mut roots = vec![0u64; degree];
        let mut inv_roots = vec![0u64; degree];
        let mut pow = 1u64;
        let mut pow_inv = 1u64;
        for i in 0..degree {
            let r = bit_reverse(i, log_degree);
            roots[r] = pow;
            inv_roots[r] = pow_inv;
            pow = modulus.mul(pow, psi);
            pow_inv = modulus.mul(pow_inv, psi_inv);
        }
        let roots_shoup = roots.iter().map(|&w| modulus.shoup(w)).collect();
        let inv_roots_shoup = inv_roots.iter().map(|&w| modulus.shoup(w)).collect();
        let inv_degree = modulus.inv(degree as u64);
        NttTable {
            modulus,
            degree,
            log_degree,
            roots,
            roots_shoup,
            inv_roots,
            inv_roots_shoup,
            inv_degree,
            inv_degree_shoup: modulus.shoup(inv_degree),
            psi,
        }
    }

    pub fn modulus(&self) -> &Modulus {
        &self.modulus
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn log_degree(&self) -> u32 {
        self.log_degree
    }

    /// Primitive `2N`-th root of unity the table was built from.
    pub fn psi(&self) -> u64 {
        self.psi
    }

    /// In-place forward transform; input and output coefficients in `[0, q)`.
    pub fn forward(&self, a: &mut [u64]) {
        debug_assert_eq!(a.len(), self.degree);
        let q = self.modulus.value();
        let two_q = 2 * q;
        let mut t = self.degree;
        let mut m = 1;
        while m < self.degree {
            t >>= 1;
            for i in 0..m {
                let w = self.roots[m + i];
                let ws = self.roots_shoup[m + i];
                let (lo, hi) = a[2 * i * t..2 * i * t + 2 * t].split_at_mut(t);
                for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                    let mut u = *x;
                    if u >= two_q {
                        u -= two_q;
                    }
                    let v = self.modulus.mul_shoup_lazy(*y, w, ws);
                    *x = u + v;
                    *y = u + two_q - v;
                }
            }
            m <<= 1;
        }
        for x in a.iter_mut() {
            let mut v = *x;
            if v >= two_q {
                v -= two_q;
            }
            if v >= q {
                v -= q;
            }
            *x = v;
        }
    }

    /// In-place inverse transform; input and output coefficients in `[0, q)`.
    pub fn inverse(&self, a: &mut [u64]) {
        debug_assert_eq!(a.len(), self.degree);
        let q = self.modulus.value();
        let two_q = 2 * q;
        let mut t = 1;
        let mut m = self.degree;
        while m > 1 {
            m >>= 1;
            for i in 0..m {
                let w = self.inv_roots[m + i];
                let ws = self.inv_roots_shoup[m + i];
                let (lo, hi) = a[2 * i * t..2 * i * t + 2 * t].split_at_mut(t);
                for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                    let u = *x;
                    let v = *y;
                    let mut s = u + v;
                    if s >= two_q {
                        s -= two_q;
                    }
                    *x = s;
                    *y = self.modulus.mul_shoup_lazy(u + two_q - v, w, ws);
                }
            }
            t <<= 1;
        }
        for x in a.iter_mut() {
            let mut v = self.modulus.mul_shoup_lazy(*x, self.inv_degree, self.inv_degree_shoup);
            if v >= q {
                v -= q;
            }
            *x = v;
        }
    }

    /// Slot permutation realising `x -> x^g` on transformed vectors:
    /// `out[i] = in[perm[i]]`.
    pub fn automorphism_permutation(&self, galois_element: usize) -> Vec<u32> {
        let n = self.degree;
        let two_n = 2 * n;
        assert!(galois_element % 2 == 1, "galois element must be odd");
        let mut slot_of_exponent = vec![0u32; two_n];
        for j in 0..n {
            slot_of_exponent[2 * bit_reverse(j, self.log_degree) + 1] = j as u32;
        }
        (0..n)
            .map(|i| {
                let e = ((2 * bit_reverse(i, self.log_degree) + 1) * galois_element) % two_n;
                slot_of_exponent[e]
            })
            .collect()
    }
}

/// Schoolbook negacyclic product, used as an oracle.
pub fn negacyclic_schoolbook(a: &[u64], b: &[u64], q: &Modulus) -> Vec<u64> {
    let n = a.len();
    let mut out = vec![0u64; n];
    for i in 0..n {
        if a[i] == 0 {
            continue;
        }
        for j in 0..n {
            let prod = q.mul(a[i], b[j]);
            let k = i + j;
            if k < n {
                out[k] = q.add(out[k], prod);
            } else {
                out[k - n] = q.sub(out[k - n], prod);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::super::arith::next_prime_congruent_one;
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn table(n: usize) -> NttTable {
        let q = next_prime_congruent_one((1 << 61) + 12345, 2 * n as u64);
        NttTable::new(Modulus::new(q), n)
    }

    #[test]
    fn round_trip_is_identity() {
        let t = table(64);
        let q = t.modulus().value();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let orig: Vec<u64> = (0..64).map(|_| rng.gen_range(0..q)).collect();
        let mut a = orig.clone();
        t.forward(&mut a);
        t.inverse(&mut a);
        assert_eq!(a, orig);
    }

    #[test]
    fn pointwise_product_is_negacyclic_convolution() {
        let t = table(32);
        let q = *t.modulus();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a: Vec<u64> = (0..32).map(|_| rng.gen_range(0..q.value())).collect();
        let b: Vec<u64> = (0..32).map(|_| rng.gen_range(0..q.value())).collect();
        let expected = negacyclic_schoolbook(&a, &b, &q);
        let (mut fa, mut fb) = (a.clone(), b.clone());
        t.forward(&mut fa);
        t.forward(&mut fb);
        let mut prod: Vec<u64> = fa.iter().zip(&fb).map(|(&x, &y)| q.mul(x, y)).collect();
        t.inverse(&mut prod);
        assert_eq!(prod, expected);
    }

    #[test]
    fn slot_i_evaluates_at_odd_power_of_psi() {
        let t = table(16);
        let q = *t.modulus();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a: Vec<u64> = (0..16).map(|_| rng.gen_range(0..q.value())).collect();
        let mut fa = a.clone();
        t.forward(&mut fa);
        for (i, &slot) in fa.iter().enumerate() {
            let point = q.pow(t.psi(), (2 * bit_reverse(i, 4) + 1) as u64);
            let mut acc = 0;
            for &c in a.iter().rev() {
                acc = q.add(q.mul(acc, point), c);
            }
            assert_eq!(slot, acc);
        }
    }
}
