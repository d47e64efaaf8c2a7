//! Expansion-and-fold with most automorphisms moved past the plaintext sums.
//!
//! The literal fold evaluates `sum_k P_k * E_k(c)` where `E_k` is the path of
//! doubling steps to leaf `k`, costing one key switch per tree node. Here the
//! first `baby` rounds are run literally, producing `c_u` for every low-bit
//! residue `u`. The remaining `giant` rounds are linear in `c_u` with
//! signed-monomial coefficients, so their contribution collapses to
//! `sum_S tau_S( sum_u G_{u,S} * c_u )` over subsets `S` of the giant rounds,
//! where `G_{u,S}` is built from the plaintexts alone. The outer sum is
//! evaluated Horner-style with `2^giant - 1` key switches.

use super::cipher::{add_ct, apply_automorphism, Ciphertext, NoiseTag};
use super::expand::{expansion_depth, oblivious_expand};
use super::keys::GaloisKeySet;
use super::params::{expansion_element, HeContext};
use super::poly::{PlainNtt, PlainPoly, RnsPoly};
use super::HeError;

/// Round split for a fold of width `w`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FoldPlan {
    pub width: usize,
    pub depth: u32,
    pub baby: u32,
}

impl FoldPlan {
    pub fn new(width: usize) -> Self {
        let depth = expansion_depth(width);
        FoldPlan { width, depth, baby: depth.div_ceil(2) }
    }

    pub fn giant(&self) -> u32 {
        self.depth - self.baby
    }

    /// Number of low-bit residues (rows of giant-step plaintexts).
    pub fn rows(&self) -> usize {
        1 << self.baby
    }

    /// Giant-step plaintexts per row.
    pub fn row_len(&self) -> usize {
        1 << self.giant()
    }

    /// Leaf indices sharing residue `u`, in giant-step order.
    pub fn row_members(&self, u: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.row_len()).map(move |v| u + (v << self.baby)).filter(|&k| k < self.width)
    }
}

fn mul_signed_monomial(poly: &[u64], exponent: usize, p: u64, out: &mut [u64]) {
    let n = poly.len();
    let e = exponent % (2 * n);
    let (shift, negate) = if e < n { (e, false) } else { (e - n, true) };
    for (i, &c) in poly.iter().enumerate() {
        let mut k = i + shift;
        let mut neg = negate;
        if k >= n {
            k -= n;
            neg = !neg;
        }
        out[k] = if neg && c != 0 { p - c } else { c };
    }
}

fn galois_product(elements: impl Iterator<Item = usize>, n: usize) -> usize {
    elements.fold(1, |acc, g| acc * g % (2 * n))
}

/// Builds the giant-step plaintexts `G_{u,S}` for row `u`, indexed by the
/// bitmask `S` over giant rounds (bit `i` is round `baby + i`). `leaf(k)`
/// returns the plaintext folded against expansion output `k`.
pub fn giant_plaintexts<'a, F>(plan: &FoldPlan, u: usize, leaf: F, ctx: &HeContext) -> Vec<PlainNtt>
where
    F: Fn(usize) -> Option<&'a PlainPoly>,
{
    let n = ctx.degree();
    let p = ctx.plain().value();
    let rows = combine(plan, plan.baby, u, &leaf, ctx);
    let giant = plan.giant();
    rows.into_iter()
        .enumerate()
        .map(|(mask, coeffs)| {
            let pt = match coeffs {
                None => PlainPoly::zero(n),
                Some(c) => {
                    let g = galois_product(
                        (0..giant).filter(|i| mask >> i & 1 == 1).map(|i| expansion_element(n, plan.baby + i)),
                        n,
                    );
                    // (Z/2N)^* has order N
                    let g_inv = pow_mod(g, n - 1, 2 * n);
                    PlainPoly::from_raw(c).substitute(g_inv, ctx)
                }
            };
            debug_assert!(pt.coeffs().iter().all(|&c| c < p));
            PlainNtt::new(&pt, ctx)
        })
        .collect()
}

fn pow_mod(g: usize, mut e: usize, modulus: usize) -> usize {
    let mut result = 1usize;
    let mut base = g % modulus;
    while e > 0 {
        if e & 1 == 1 {
            result = result * base % modulus;
        }
        base = base * base % modulus;
        e >>= 1;
    }
    result
}

/// Coefficient-domain transform for the subtree at round `j` with the given
/// residue. Returns one polynomial per subset of rounds `j..depth`, `None`
/// standing for zero.
fn combine<'a, F>(
    plan: &FoldPlan,
    j: u32,
    residue: usize,
    leaf: &F,
    ctx: &HeContext,
) -> Vec<Option<Vec<u64>>>
where
    F: Fn(usize) -> Option<&'a PlainPoly>,
{
    let size = 1usize << (plan.depth - j);
    if residue >= plan.width {
        return vec![None; size];
    }
    if j == plan.depth {
        return vec![leaf(residue).map(|pt| pt.coeffs().to_vec())];
    }
    let n = ctx.degree();
    let p = ctx.plain().value();
    let h = 1usize << j;
    let left = combine(plan, j + 1, residue, leaf, ctx);
    let right = combine(plan, j + 1, residue + h, leaf, ctx);
    let mut out = vec![None; size];
    let mut rotated = vec![0u64; n];
    for (mask, (l, r)) in left.into_iter().zip(right).enumerate() {
        let Some(r) = r else {
            out[mask << 1] = l.clone();
            out[(mask << 1) | 1] = l;
            continue;
        };
        // omega = tau_S(x^{-h}) where S is `mask` over rounds j+1..depth
        let g = galois_product(
            (0..plan.depth - j - 1).filter(|i| mask >> i & 1 == 1).map(|i| expansion_element(n, j + 1 + i)),
            n,
        );
        let exponent = (2 * n - h) * g % (2 * n);
        mul_signed_monomial(&r, exponent, p, &mut rotated);
        let l = l.unwrap_or_else(|| vec![0u64; n]);
        let plus: Vec<u64> = l.iter().zip(&rotated).map(|(&a, &b)| (a + b) % p).collect();
        let minus: Vec<u64> = l.iter().zip(&rotated).map(|(&a, &b)| (a + p - b) % p).collect();
        out[mask << 1] = Some(plus);
        out[(mask << 1) | 1] = Some(minus);
    }
    out
}

/// Folds `query` against giant-step plaintexts. `giant(u, S)` must return
/// `G_{u,S}` as produced by [`giant_plaintexts`] for the same plan.
pub fn split_fold<'a, F>(
    query: &Ciphertext,
    plan: &FoldPlan,
    keys: &GaloisKeySet,
    ctx: &HeContext,
    giant: F,
) -> Result<Ciphertext, HeError>
where
    F: Fn(usize, usize) -> &'a PlainNtt + Sync,
{
    let n = ctx.degree();
    let baby_width = plan.width.min(plan.rows());
    // the first `baby` rounds of the width-`w` tree keep every residue
    // below `min(w, 2^baby)`
    let babies = oblivious_expand(query, baby_width, keys, ctx)?;
    let terms = crate::par::map_range(plan.row_len(), |mask| {
        let mut c0 = RnsPoly::zero(n);
        let mut c1 = RnsPoly::zero(n);
        for (u, cu) in babies.iter().enumerate() {
            let g = giant(u, mask);
            c0.fma_mont(&cu.c0, &g.poly, ctx);
            c1.fma_mont(&cu.c1, &g.poly, ctx);
        }
        Ciphertext { c0, c1, tag: NoiseTag::Derived }
    });
    // Horner over giant rounds, lowest round first
    let mut level = terms;
    for i in 0..plan.giant() {
        let g = expansion_element(n, plan.baby + i);
        let half = level.len() / 2;
        let mut it = level.into_iter();
        let pairs: Vec<(Ciphertext, Ciphertext)> =
            (0..half).map(|_| (it.next().unwrap(), it.next().unwrap())).collect();
        level = crate::par::map_slice(&pairs, |(without, with)| {
            apply_automorphism(with, g, keys, ctx).map(|rot| add_ct(without, &rot, ctx))
        })
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    }
    Ok(level.pop().expect("one term remains"))
}
