//! Word-size modular arithmetic for NTT-friendly primes below 2^62.

/// An odd modulus below 2^62 with precomputed Montgomery constants.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Modulus {
    value: u64,
    /// -q^{-1} mod 2^64
    neg_inv: u64,
    /// 2^128 mod q
    r2: u64,
}

impl Modulus {
    pub fn new(value: u64) -> Self {
        assert!(value % 2 == 1 && value > 2 && value < (1 << 62), "unsupported modulus {value}");
        // Newton iteration for q^{-1} mod 2^64.
        let mut inv: u64 = 1;
        for _ in 0..6 {
            inv = inv.wrapping_mul(2u64.wrapping_sub(value.wrapping_mul(inv)));
        }
        let r = ((1u128 << 64) % value as u128) as u64;
        let r2 = ((r as u128 * r as u128) % value as u128) as u64;
        Modulus { value, neg_inv: inv.wrapping_neg(), r2 }
    }

    #[inline(always)]
    pub fn value(&self) -> u64 {
        self.value
    }

    #[inline(always)]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        let s = a + b;
        if s >= self.value {
            s - self.value
        } else {
            s
        }
    }

    #[inline(always)]
    pub fn sub(&self, a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a + self.value - b
        }
    }

    #[inline(always)]
    pub fn neg(&self, a: u64) -> u64 {
        if a == 0 {
            0
        } else {
            self.value - a
        }
    }

    /// Plain `a * b mod q` through a 128-bit remainder. Not for hot loops.
    #[inline]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        ((a as u128 * b as u128) % self.value as u128) as u64
    }

    #[inline]
    pub fn reduce_u128(&self, x: u128) -> u64 {
        (x % self.value as u128) as u64
    }

    /// Montgomery product: returns `a * b * 2^-64 mod q`. With `b` in
    /// Montgomery form (`b * 2^64 mod q`) this is the ordinary product.
    #[inline(always)]
    pub fn mont_mul(&self, a: u64, b: u64) -> u64 {
        let t = a as u128 * b as u128;
        let m = (t as u64).wrapping_mul(self.neg_inv);
        let u = ((t + m as u128 * self.value as u128) >> 64) as u64;
        if u >= self.value {
            u - self.value
        } else {
            u
        }
    }

    #[inline]
    pub fn to_mont(&self, a: u64) -> u64 {
        self.mont_mul(a, self.r2)
    }

    /// Shoup companion `floor(w * 2^64 / q)` for a fixed multiplicand `w < q`.
    #[inline]
    pub fn shoup(&self, w: u64) -> u64 {
        (((w as u128) << 64) / self.value as u128) as u64
    }

    /// `x * w mod q` in `[0, 2q)` for any `x < 2^64`, given `w' = shoup(w)`.
    #[inline(always)]
    pub fn mul_shoup_lazy(&self, x: u64, w: u64, w_shoup: u64) -> u64 {
        let qhat = ((x as u128 * w_shoup as u128) >> 64) as u64;
        x.wrapping_mul(w).wrapping_sub(qhat.wrapping_mul(self.value))
    }

    pub fn pow(&self, mut base: u64, mut exp: u64) -> u64 {
        let mut acc = 1u64;
        base %= self.value;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            exp >>= 1;
        }
        acc
    }

    /// Inverse modulo a prime modulus.
    pub fn inv(&self, a: u64) -> u64 {
        assert!(a % self.value != 0, "zero has no inverse");
        self.pow(a, self.value - 2)
    }
}

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1u64 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin for 64-bit integers.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const SMALL: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for &p in &SMALL {
        if n % p == 0 {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    'witness: for &a in &SMALL {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Smallest prime `p >= lower` with `p ≡ 1 (mod step)`.
pub fn next_prime_congruent_one(lower: u64, step: u64) -> u64 {
    let mut candidate = if lower <= 1 { 1 } else { (lower - 1).div_ceil(step) * step + 1 };
    loop {
        if is_prime(candidate) {
            return candidate;
        }
        candidate += step;
    }
}

/// Largest prime `p < upper` with `p ≡ 1 (mod step)`.
pub fn prev_prime_congruent_one(upper: u64, step: u64) -> u64 {
    let mut candidate = ((upper - 2) / step) * step + 1;
    loop {
        if is_prime(candidate) {
            return candidate;
        }
        candidate -= step;
    }
}

/// A primitive `order`-th root of unity modulo the prime `q`, chosen
/// deterministically (the smallest generator candidate that works).
pub fn primitive_root_of_unity(q: &Modulus, order: u64) -> u64 {
    let qv = q.value();
    assert_eq!((qv - 1) % order, 0, "order does not divide q-1");
    for g in 2..qv {
        let root = q.pow(g, (qv - 1) / order);
        if q.pow(root, order / 2) == qv - 1 {
            return root;
        }
    }
    unreachable!("prime field always has primitive roots")
}
