use super::cipher::{
    add_ct, apply_automorphism, mul_monomial_inv_assign, mul_plain, sub_ct, Ciphertext,
};
use super::keys::GaloisKeySet;
use super::params::{expansion_element, HeContext};
use super::poly::PlainNtt;
use super::HeError;

/// Number of doubling rounds needed for `w` outputs, `ceil(log2 w)`.
pub fn expansion_depth(w: usize) -> u32 {
    w.next_power_of_two().trailing_zeros()
}

/// The coefficient a query must carry at the selected offset so that the
/// expanded output is exactly one: `2^{-depth} mod p`.
pub fn expansion_scale(w: usize, ctx: &HeContext) -> u64 {
    let p = ctx.plain();
    p.inv(p.pow(2, expansion_depth(w) as u64))
}

fn check_width(w: usize, ctx: &HeContext) -> Result<(), HeError> {
    if w == 0 || w > ctx.degree() {
        return Err(HeError::ExpansionTooWide { width: w, degree: ctx.degree() });
    }
    Ok(())
}

/// One doubling step: the two children of `c` at round `j`.
fn split(
    c: &Ciphertext,
    j: u32,
    want_right: bool,
    keys: &GaloisKeySet,
    ctx: &HeContext,
) -> Result<(Ciphertext, Option<Ciphertext>), HeError> {
    let sub = apply_automorphism(c, expansion_element(ctx.degree(), j), keys, ctx)?;
    let left = add_ct(c, &sub, ctx);
    let right = if want_right {
        let mut r = sub_ct(c, &sub, ctx);
        mul_monomial_inv_assign(&mut r, j as usize, ctx);
        Some(r)
    } else {
        None
    };
    Ok((left, right))
}

/// Expands a query ciphertext into `w` ciphertexts, output `k` encrypting the
/// `k`-th coefficient of the query times `2^depth`.
pub fn oblivious_expand(
    query: &Ciphertext,
    w: usize,
    keys: &GaloisKeySet,
    ctx: &HeContext,
) -> Result<Vec<Ciphertext>, HeError> {
    check_width(w, ctx)?;
    let depth = expansion_depth(w);
    let mut level = vec![query.clone()];
    for j in 0..depth {
        let h = 1usize << j;
        let mut next: Vec<Option<Ciphertext>> = vec![None; 2 * h];
        for (b, c) in level.iter().enumerate() {
            let (left, right) = split(c, j, b + h < w, keys, ctx)?;
            next[b] = Some(left);
            next[b + h] = right;
        }
        level = next.into_iter().take_while(Option::is_some).flatten().collect();
    }
    level.truncate(w);
    Ok(level)
}

/// Computes `sum_k expand(query)[k] * plaintext(k)` for `k < w` without
/// materialising the expanded vector. Subtrees near the root run in
/// parallel.
pub fn expand_and_fold<'a, F>(
    query: &Ciphertext,
    w: usize,
    keys: &GaloisKeySet,
    ctx: &HeContext,
    plaintext: F,
) -> Result<Ciphertext, HeError>
where
    F: Fn(usize) -> &'a PlainNtt + Sync,
{
    check_width(w, ctx)?;
    let depth = expansion_depth(w);
    fold_node(query.clone(), 0, 0, depth, w, keys, ctx, &plaintext)
}

#[allow(clippy::too_many_arguments)]
fn fold_node<'a, F>(
    c: Ciphertext,
    j: u32,
    residue: usize,
    depth: u32,
    w: usize,
    keys: &GaloisKeySet,
    ctx: &HeContext,
    plaintext: &F,
) -> Result<Ciphertext, HeError>
where
    F: Fn(usize) -> &'a PlainNtt + Sync,
{
    if j == depth {
        return Ok(mul_plain(&c, plaintext(residue), ctx));
    }
    let h = 1usize << j;
    let right_residue = residue + h;
    let (left, right) = split(&c, j, right_residue < w, keys, ctx)?;
    drop(c);
    let Some(right) = right else {
        return fold_node(left, j + 1, residue, depth, w, keys, ctx, plaintext);
    };
    let go_left = || fold_node(left, j + 1, residue, depth, w, keys, ctx, plaintext);
    let go_right = || fold_node(right, j + 1, right_residue, depth, w, keys, ctx, plaintext);
    let (a, b) = if j < 3 {
        crate::par::join(go_left, go_right)
    } else {
        (go_left(), go_right())
    };
    Ok(add_ct(&a?, &b?, ctx))
}
