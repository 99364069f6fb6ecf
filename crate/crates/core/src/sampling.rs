//! Random feasible competitors: whole paths and single-period pairs.

use rand::Rng;

use crate::market::{feasible_completion, MarketConstants, MarketData, MarketError, MEMBER_TOL};
use crate::objective::sample_cone_point;
use crate::tree::{AdaptedVector, ScenarioTree};
use crate::vecops::norm1;

/// A random `b` with `(a, b) ∈ Z_t(node)`: a random target (a fraction of
/// the grown portfolio plus a random cone point) pulled toward the feasible
/// completion of `a` until it is admissible.
pub fn random_successor(
    rng: &mut impl Rng,
    market: &MarketData,
    constants: &MarketConstants,
    node: usize,
    a: &[f64],
) -> Result<Vec<f64>, MarketError> {
    let base = feasible_completion(market, constants, node, a)?;
    let r = market.returns(node);
    let scale = norm1(a);
    let gens = market.generators(node);
    let keep = rng.gen_range(0.0..1.0);
    let spread = rng.gen_range(0.0..1.0) * scale;
    let noise = sample_cone_point(rng, &gens);
    let target: Vec<f64> = (0..a.len())
        .map(|i| keep * r[i] * a[i] + spread * noise[i])
        .collect();
    let mut w = 1.0;
    for _ in 0..40 {
        let b: Vec<f64> = base.iter().zip(&target).map(|(h, c)| h + w * (c - h)).collect();
        let z = market.in_z(node, a, &b, 0.0)?;
        if z.member && z.child_margin > 0.0 {
            return Ok(b);
        }
        w *= 0.5;
    }
    Ok(base)
}

/// A random feasible path from `x0`. With a `reference` path, the result is
/// the convex mixture `θ·reference + (1−θ)·random`, `θ` uniform in `[0, 1)`.
pub fn random_path(
    rng: &mut impl Rng,
    tree: &ScenarioTree,
    market: &MarketData,
    constants: &MarketConstants,
    x0: &[f64],
    reference: Option<&[AdaptedVector]>,
) -> Result<Vec<AdaptedVector>, MarketError> {
    let m = market.assets();
    let mut out = vec![AdaptedVector::from_rows(tree, 0, vec![x0.to_vec()])?];
    for t in 1..=tree.horizon() {
        let mut rows = Vec::with_capacity(tree.count_at(t));
        for node in tree.nodes_at(t) {
            let parent = tree.parent(node).unwrap();
            let a = out[t - 1].at(tree, parent).to_vec();
            rows.push(random_successor(rng, market, constants, node, &a)?);
        }
        out.push(AdaptedVector::from_rows(tree, t, rows)?);
    }
    if let Some(reference) = reference {
        let theta: f64 = rng.gen_range(0.0..1.0);
        for (y, x) in out.iter_mut().zip(reference).skip(1) {
            for (v, r) in y.as_mut_slice().iter_mut().zip(x.as_slice()) {
                *v = theta * r + (1.0 - theta) * *v;
            }
        }
    }
    debug_assert!(out.iter().all(|v| v.dim() == m));
    Ok(out)
}

/// Random pair `(x, y)` of depth-`t` vectors with `(x(c), y(c)) ∈ Z_t(c)` at
/// every depth-`t` node `c`.
pub fn random_pair(
    rng: &mut impl Rng,
    tree: &ScenarioTree,
    market: &MarketData,
    constants: &MarketConstants,
    t: usize,
) -> Result<(AdaptedVector, AdaptedVector), MarketError> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for node in tree.nodes_at(t) {
        let parent = tree.parent(node).unwrap();
        let gens = market.generators(parent);
        let mut a = sample_cone_point(rng, &gens);
        // Nudge off the boundary so `p·a > 0` for interior prices.
        let ones = vec![1.0 / gens.len() as f64; a.len()];
        if market.margin_residual(parent, &ones)? > MEMBER_TOL {
            a.iter_mut().zip(&ones).for_each(|(v, o)| *v += 0.05 * o);
        }
        let b = random_successor(rng, market, constants, node, &a)?;
        xs.push(a);
        ys.push(b);
    }
    Ok((AdaptedVector::from_rows(tree, t, xs)?, AdaptedVector::from_rows(tree, t, ys)?))
}

/// Buy-and-hold from `x0`: `y_t = R_t ∘ y_{t−1}`, no trading at all.
/// Feasible whenever every grown portfolio stays in the margin cone (always
/// for long-only `x0`).
pub fn buy_and_hold(tree: &ScenarioTree, market: &MarketData, x0: &[f64]) -> Result<Vec<AdaptedVector>, MarketError> {
    let mut out = vec![AdaptedVector::from_rows(tree, 0, vec![x0.to_vec()])?];
    for t in 1..=tree.horizon() {
        let prev = &out[t - 1];
        let next = AdaptedVector::from_fn(tree, t, x0.len(), |node| {
            let a = prev.at(tree, tree.parent(node).unwrap());
            a.iter().zip(market.returns(node)).map(|(v, r)| v * r).collect()
        });
        out.push(next);
    }
    Ok(out)
}
