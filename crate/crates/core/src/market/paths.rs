//! Feasible completions, the strictly interior start path, and the
//! dominating-path construction.

use super::{MarketConstants, MarketData, MarketError, MEMBER_TOL};
use crate::tree::{AdaptedVector, ScenarioTree};
use crate::vecops::{norm1, sub};

/// A child portfolio `b` with `(a, b) ∈ Z_t(node)` for `a ∈ X_{t−1}(parent)`:
/// a multiple of `(1,…,1)` with `|b| = (C²_t/2)|a|`, falling back to `b = 0`.
pub fn feasible_completion(
    market: &MarketData,
    constants: &MarketConstants,
    node: usize,
    a: &[f64],
) -> Result<Vec<f64>, MarketError> {
    let parent = market.parent(node).ok_or(MarketError::RootNode(node))?;
    let residual = market.margin_residual(parent, a)?;
    if residual < -MEMBER_TOL {
        return Err(MarketError::NotInCone {
            node: market.node_id(parent).to_owned(),
            residual,
        });
    }
    let m = market.assets();
    let t = market.depth(node);
    let level = constants.c2(t) / 2.0 * norm1(a) / m as f64;
    let b = vec![level; m];
    if market.in_z(node, a, &b, MEMBER_TOL)?.member {
        Ok(b)
    } else {
        Ok(vec![0.0; m])
    }
}

/// Relaxed sequence `(v_0, u_1, v_1, …, u_N, v_N)`: `v_t` and `u_t` are stored
/// at depth `t` (`u_t` takes values in `X_{t−1}`).
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxedSequence {
    pub v: Vec<AdaptedVector>,
    pub u: Vec<AdaptedVector>,
}

impl RelaxedSequence {
    /// `u[t−1]` is `u_t`.
    pub fn u_at(&self, t: usize) -> &AdaptedVector {
        &self.u[t - 1]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlaterPath {
    /// `x̊_t` at depth `t` for `t = 0..=N`.
    pub path: Vec<AdaptedVector>,
    /// `ε_t`: the smallest interiority radius over the depth-`t` nodes.
    pub radii: Vec<f64>,
    /// The interior relaxed sequence the path dominates.
    pub relaxed: RelaxedSequence,
}

/// Builds a path `(y_0, …, y_N)` with `y_0 = v_0`, `(y_{t−1}, y_t) ∈ Z_t` and
/// `y_t − v_t ∈ X_t`, by the induction `g = y_{t−1} − u_t`,
/// `h = completion(g)`, `y_t = v_t + h`.
pub fn dominating_path(
    tree: &ScenarioTree,
    market: &MarketData,
    constants: &MarketConstants,
    seq: &RelaxedSequence,
) -> Result<Vec<AdaptedVector>, MarketError> {
    let n = tree.horizon();
    if seq.v.len() != n + 1 || seq.u.len() < n {
        return Err(MarketError::PreconditionViolated(format!(
            "relaxed sequence needs {} v-terms and {n} u-terms",
            n + 1
        )));
    }
    for t in 1..=n {
        let u = seq.u_at(t);
        for node in tree.nodes_at(t) {
            let parent = tree.parent(node).unwrap();
            let (ut, vt) = (u.at(tree, node), seq.v[t].at(tree, node));
            if !market.in_z(node, ut, vt, MEMBER_TOL)?.member {
                return Err(MarketError::PreconditionViolated(format!(
                    "(u_{t}, v_{t}) is not in Z at node {:?}",
                    tree.node(node).id
                )));
            }
            let slack = sub(seq.v[t - 1].at(tree, parent), ut);
            if market.margin_residual(parent, &slack)? < -MEMBER_TOL {
                return Err(MarketError::PreconditionViolated(format!(
                    "v_{} - u_{t} leaves the margin cone at node {:?}",
                    t - 1,
                    tree.node(node).id
                )));
            }
        }
    }
    let mut path = vec![seq.v[0].clone()];
    for t in 1..=n {
        let u = seq.u_at(t);
        let prev = &path[t - 1];
        let next = AdaptedVector::from_fn(tree, t, market.assets(), |node| {
            let parent = tree.parent(node).unwrap();
            let g = sub(prev.at(tree, parent), u.at(tree, node));
            let h = feasible_completion(market, constants, node, &g)
                .unwrap_or_else(|_| vec![0.0; market.assets()]);
            seq.v[t].at(tree, node).iter().zip(&h).map(|(v, h)| v + h).collect()
        });
        path.push(next);
    }
    Ok(path)
}

/// Strictly interior path started at `(1,…,1)`.
pub fn slater_path(
    tree: &ScenarioTree,
    market: &MarketData,
    constants: &MarketConstants,
) -> Result<SlaterPath, MarketError> {
    slater_path_from(tree, market, constants, &vec![1.0; market.assets()])
}

/// Strictly interior path started at `x0`, which must be interior to `X_0`.
///
/// With `δ` the interiority radius of `v̊_{t−1}`, take `λ = δ/(2H)` where
/// `H = |(1,…,1)| = m`, `ů_t = λ(1,…,1)` and `v̊_t = λ(C²_t/2)(1,…,1)`; the
/// path then comes from [`dominating_path`]. All states after the root are
/// deterministic multiples of `(1,…,1)`.
pub fn slater_path_from(
    tree: &ScenarioTree,
    market: &MarketData,
    constants: &MarketConstants,
    x0: &[f64],
) -> Result<SlaterPath, MarketError> {
    let m = market.assets();
    let n = tree.horizon();
    let root = tree.root();
    let mut delta = market.interior_radius(root, x0)?;
    if !(delta > 0.0) {
        return Err(MarketError::NotInCone {
            node: market.node_id(root).to_owned(),
            residual: market.margin_residual(root, x0)?,
        });
    }
    let h = m as f64;
    let mut v = vec![AdaptedVector::from_rows(tree, 0, vec![x0.to_vec()])?];
    let mut u = Vec::with_capacity(n);
    for t in 1..=n {
        let lambda = delta / (2.0 * h);
        let level = lambda * constants.c2(t) / 2.0;
        u.push(AdaptedVector::from_fn(tree, t, m, |_| vec![lambda; m]));
        v.push(AdaptedVector::from_fn(tree, t, m, |_| vec![level; m]));
        delta = tree
            .nodes_at(t)
            .map(|node| market.interior_radius(node, &vec![level; m]).unwrap())
            .fold(f64::INFINITY, f64::min);
    }
    let relaxed = RelaxedSequence { v, u };
    let path = dominating_path(tree, market, constants, &relaxed)?;
    let radii = path
        .iter()
        .enumerate()
        .map(|(t, x)| {
            tree.nodes_at(t)
                .map(|node| market.interior_radius(node, x.at(tree, node)).unwrap())
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    Ok(SlaterPath {
        path,
        radii,
        relaxed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::market_constants;
    use crate::tree::RawNode;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn binary(depth: usize, m: usize, lam: f64, mu: f64) -> (ScenarioTree, MarketData) {
        let mut raw = vec![RawNode::new("r", None, 1.0)];
        let mut frontier = vec!["r".to_string()];
        for _ in 0..depth {
            let mut next = Vec::new();
            for p in &frontier {
                for (tag, q) in [("u", 0.5), ("d", 0.5)] {
                    let id = format!("{p}{tag}");
                    raw.push(RawNode::new(id.clone(), Some(p), q));
                    next.push(id);
                }
            }
            frontier = next;
        }
        let tree = ScenarioTree::build_uniform(&raw, m).unwrap();
        let returns = (0..tree.len())
            .map(|i| {
                let up = tree.node(i).id.ends_with('u');
                (0..m)
                    .map(|k| if up { 1.05 + 0.02 * k as f64 } else { 0.97 - 0.01 * k as f64 })
                    .collect()
            })
            .collect();
        let md = MarketData::with_uniform_costs(&tree, returns, lam, lam, vec![mu; depth + 1]).unwrap();
        (tree, md)
    }

    fn check_path(tree: &ScenarioTree, md: &MarketData, path: &[AdaptedVector], strict: bool) {
        for t in 1..=tree.horizon() {
            for node in tree.nodes_at(t) {
                let p = tree.parent(node).unwrap();
                let z = md
                    .in_z(node, path[t - 1].at(tree, p), path[t].at(tree, node), MEMBER_TOL)
                    .unwrap();
                assert!(z.member);
                if strict {
                    assert!(z.psi > 0.0 && z.child_margin > 0.0 && z.parent_margin > 0.0);
                }
            }
        }
    }

    #[test]
    fn completion_examples() {
        let (tree, md) = binary(1, 3, 0.01, 1.5);
        let c = market_constants(&md).unwrap();
        assert_eq!(feasible_completion(&md, &c, 1, &[0.0; 3]).unwrap(), vec![0.0; 3]);
        let b = feasible_completion(&md, &c, 1, &[1.0; 3]).unwrap();
        assert!((norm1(&b) - c.c2(1) / 2.0 * 3.0).abs() < 1e-14);
        assert!(md.in_z(1, &[1.0; 3], &b, 0.0).unwrap().member);
        assert!(matches!(
            feasible_completion(&md, &c, 2, &[1.0, -1.0, 0.0]),
            Err(MarketError::NotInCone { .. })
        ));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut done = 0;
        while done < 500 {
            let a: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            if md.margin_residual(0, &a).unwrap() < 0.0 {
                continue;
            }
            let node = tree.nodes_at(1).start + done % 2;
            let b = feasible_completion(&md, &c, node, &a).unwrap();
            assert!(md.in_z(node, &a, &b, MEMBER_TOL).unwrap().member);
            done += 1;
        }
    }

    #[test]
    fn slater_single_asset_frictionless() {
        let (tree, md) = binary(2, 1, 0.0, 1.5);
        let c = market_constants(&md).unwrap();
        let s = slater_path(&tree, &md, &c).unwrap();
        for t in 0..=2 {
            assert!(s.radii[t] > 0.0);
            assert!(s.path[t].rows().all(|r| r[0] > 0.0));
        }
        check_path(&tree, &md, &s.path, true);
    }

    #[test]
    fn slater_two_assets_with_costs() {
        let (tree, md) = binary(3, 2, 0.01, 1.5);
        let c = market_constants(&md).unwrap();
        let s = slater_path(&tree, &md, &c).unwrap();
        check_path(&tree, &md, &s.path, true);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for t in 0..=3 {
            let x = s.path[t].get(0).to_vec();
            // Deterministic multiples of ones after the root.
            if t > 0 {
                assert!(s.path[t].rows().all(|r| r == x.as_slice()));
                assert!((x[0] - x[1]).abs() < 1e-15);
            }
            for _ in 0..200 {
                let mut e: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let scale = rng.gen_range(0.0..0.999) * s.radii[t] / norm1(&e);
                e.iter_mut().for_each(|v| *v *= scale);
                for node in tree.nodes_at(t) {
                    let y: Vec<f64> = s.path[t].at(&tree, node).iter().zip(&e).map(|(a, b)| a + b).collect();
                    assert!(md.margin_residual(node, &y).unwrap() > 0.0);
                }
            }
        }
    }

    #[test]
    fn dominating_path_examples() {
        let (tree, md) = binary(2, 2, 0.01, 1.5);
        let c = market_constants(&md).unwrap();
        let s = slater_path(&tree, &md, &c).unwrap();
        // v_t = x̊_t / 2^t, u_t = v_{t−1}/2.
        let v: Vec<_> = s
            .path
            .iter()
            .enumerate()
            .map(|(t, x)| x.scaled(0.5f64.powi(t as i32)))
            .collect();
        let u: Vec<_> = (1..=2)
            .map(|t| {
                AdaptedVector::from_fn(&tree, t, 2, |node| {
                    let p = tree.parent(node).unwrap();
                    v[t - 1].at(&tree, p).iter().map(|x| x / 2.0).collect()
                })
            })
            .collect();
        let seq = RelaxedSequence { v, u };
        let y = dominating_path(&tree, &md, &c, &seq).unwrap();
        check_path(&tree, &md, &y, false);
        for t in 0..=2 {
            for node in tree.nodes_at(t) {
                let d = sub(y[t].at(&tree, node), seq.v[t].at(&tree, node));
                assert!(md.margin_residual(node, &d).unwrap() >= -MEMBER_TOL);
            }
        }

        // A sequence that is already a path.
        let u: Vec<_> = (1..=2)
            .map(|t| {
                AdaptedVector::from_fn(&tree, t, 2, |node| {
                    s.path[t - 1].at(&tree, tree.parent(node).unwrap()).to_vec()
                })
            })
            .collect();
        let seq = RelaxedSequence { v: s.path.clone(), u };
        let y = dominating_path(&tree, &md, &c, &seq).unwrap();
        check_path(&tree, &md, &y, false);

        let u: Vec<_> = (1..=2)
            .map(|t| {
                AdaptedVector::from_fn(&tree, t, 2, |node| {
                    let p = tree.parent(node).unwrap();
                    s.path[t - 1].at(&tree, p).iter().map(|x| 1000.0 * x).collect()
                })
            })
            .collect();
        let bad = RelaxedSequence { v: s.path.clone(), u };
        assert!(matches!(
            dominating_path(&tree, &md, &c, &bad),
            Err(MarketError::PreconditionViolated(_))
        ));
    }

    #[test]
    fn boundary_start_rejected() {
        let (tree, md) = binary(1, 2, 0.0, 1.5);
        let c = market_constants(&md).unwrap();
        assert!(matches!(
            slater_path_from(&tree, &md, &c, &[1.5, -1.0]),
            Err(MarketError::NotInCone { .. })
        ));
    }
}
