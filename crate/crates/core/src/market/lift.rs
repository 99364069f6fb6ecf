//! Polyhedral lifts of `X_t` and `Z_t`.
//!
//! Writing `a = u − v` with `u, v ≥ 0` turns the margin condition into the
//! linear row `Σ Λ⁺u − μ Σ Λ⁻v ≥ 0`; writing `Ra − b = d⁺ − d⁻` does the same
//! for `ψ_t`. Inflating both halves of a split only lowers these rows, so the
//! componentwise-minimal split is the best one and the projection of the
//! lifted cone is exactly the original cone.

use super::{MarketData, MarketError};
use crate::lp::{Cmp, Lp};

/// Homogeneous row `Σ coef·var (= | ≥) 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftRow {
    pub coeffs: Vec<(usize, f64)>,
    pub equality: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConeLift {
    pub n_vars: usize,
    /// Variable index of each original coordinate, in order.
    pub projection: Vec<usize>,
    pub rows: Vec<LiftRow>,
    kind: LiftKind,
    node: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LiftKind {
    X,
    Z,
}

impl ConeLift {
    /// Minimal-split lift of an original point.
    pub fn canonical_lift(&self, market: &MarketData, point: &[f64]) -> Vec<f64> {
        match self.kind {
            LiftKind::X => canonical_x(market, self.node, point),
            LiftKind::Z => canonical_z(market, self.node, point),
        }
    }

    /// Smallest row value at a lifted point (equality rows contribute
    /// `−|value|`).
    pub fn row_slack(&self, lifted: &[f64]) -> f64 {
        self.rows
            .iter()
            .map(|r| {
                let v: f64 = r.coeffs.iter().map(|&(i, c)| c * lifted[i]).sum();
                if r.equality {
                    -v.abs()
                } else {
                    v
                }
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// `max s` such that the original point admits a lift with every
    /// inequality row at least `s` (capped at 1). Nonnegative iff the point is
    /// in the cone.
    pub fn max_slack(&self, point: &[f64]) -> Result<f64, MarketError> {
        if point.len() != self.projection.len() {
            return Err(MarketError::DimensionMismatch {
                expected: self.projection.len(),
                got: point.len(),
            });
        }
        let mut lp = Lp::default();
        let mut fixed = vec![None; self.n_vars];
        for (&var, &x) in self.projection.iter().zip(point) {
            fixed[var] = Some(x);
        }
        for f in &fixed {
            match f {
                Some(x) => lp.add_var(0.0, *x, *x),
                None => lp.add_var(0.0, f64::NEG_INFINITY, f64::INFINITY),
            };
        }
        let s = lp.add_var(1.0, f64::NEG_INFINITY, 1.0);
        for row in &self.rows {
            let mut coeffs = row.coeffs.clone();
            if row.equality {
                lp.add_row(coeffs, Cmp::Eq, 0.0);
            } else {
                coeffs.push((s, -1.0));
                lp.add_row(coeffs, Cmp::Ge, 0.0);
            }
        }
        Ok(lp.maximize()?.0)
    }

    pub fn contains(&self, point: &[f64], tol: f64) -> Result<bool, MarketError> {
        Ok(self.max_slack(point)? >= -tol)
    }
}

fn nonneg(i: usize) -> LiftRow {
    LiftRow {
        coeffs: vec![(i, 1.0)],
        equality: false,
    }
}

fn margin_row(market: &MarketData, node: usize, u: usize, v: usize) -> LiftRow {
    let m = market.assets();
    let mu = market.mu(market.depth(node));
    let mut coeffs = Vec::with_capacity(2 * m);
    for i in 0..m {
        coeffs.push((u + i, market.cap_plus(node)[i]));
        coeffs.push((v + i, -mu * market.cap_minus(node)[i]));
    }
    LiftRow {
        coeffs,
        equality: false,
    }
}

fn split_rows(rows: &mut Vec<LiftRow>, x: usize, u: usize, v: usize, m: usize) {
    for i in 0..m {
        rows.push(LiftRow {
            coeffs: vec![(x + i, 1.0), (u + i, -1.0), (v + i, 1.0)],
            equality: true,
        });
        rows.push(nonneg(u + i));
        rows.push(nonneg(v + i));
    }
}

/// Layout `[a | u | v]`.
pub fn lift_x(market: &MarketData, node: usize) -> ConeLift {
    let m = market.assets();
    let mut rows = Vec::new();
    split_rows(&mut rows, 0, m, 2 * m, m);
    rows.push(margin_row(market, node, m, 2 * m));
    ConeLift {
        n_vars: 3 * m,
        projection: (0..m).collect(),
        rows,
        kind: LiftKind::X,
        node,
    }
}

fn canonical_x(_: &MarketData, _: usize, a: &[f64]) -> Vec<f64> {
    let mut out = a.to_vec();
    out.extend(a.iter().map(|x| x.max(0.0)));
    out.extend(a.iter().map(|x| (-x).max(0.0)));
    out
}

/// Layout `[a | ua | va | b | ub | vb | d⁺ | d⁻]` at a non-root node.
pub fn lift_z(market: &MarketData, node: usize) -> Result<ConeLift, MarketError> {
    let parent = market.parent(node).ok_or(MarketError::RootNode(node))?;
    let m = market.assets();
    let (a, ua, va, b, ub, vb, dp, dm) = (0, m, 2 * m, 3 * m, 4 * m, 5 * m, 6 * m, 7 * m);
    let mut rows = Vec::new();
    split_rows(&mut rows, a, ua, va, m);
    split_rows(&mut rows, b, ub, vb, m);
    let r = market.returns(node);
    for i in 0..m {
        rows.push(LiftRow {
            coeffs: vec![(a + i, r[i]), (b + i, -1.0), (dp + i, -1.0), (dm + i, 1.0)],
            equality: true,
        });
        rows.push(nonneg(dp + i));
        rows.push(nonneg(dm + i));
    }
    rows.push(margin_row(market, parent, ua, va));
    rows.push(margin_row(market, node, ub, vb));
    let mut psi = Vec::with_capacity(2 * m);
    for i in 0..m {
        psi.push((dp + i, market.cap_plus(node)[i]));
        psi.push((dm + i, -market.cap_minus(node)[i]));
    }
    rows.push(LiftRow {
        coeffs: psi,
        equality: false,
    });
    Ok(ConeLift {
        n_vars: 8 * m,
        projection: (0..m).chain(b..b + m).collect(),
        rows,
        kind: LiftKind::Z,
        node,
    })
}

fn canonical_z(market: &MarketData, node: usize, ab: &[f64]) -> Vec<f64> {
    let m = market.assets();
    let (a, b) = ab.split_at(m);
    let r = market.returns(node);
    let d: Vec<f64> = (0..m).map(|i| r[i] * a[i] - b[i]).collect();
    let mut out = canonical_x(market, node, a);
    out.extend(canonical_x(market, node, b));
    out.extend(d.iter().map(|x| x.max(0.0)));
    out.extend(d.iter().map(|x| (-x).max(0.0)));
    out
}

/// Worst-case value of `p̄·b − p·a` over `(a, b) ∈ Z_t(node)` with
/// `|a| + |b| ≤ 1`, and the pair attaining it.
#[derive(Debug, Clone, PartialEq)]
pub struct DualViolation {
    pub value: f64,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

/// Solves the transition-inequality LP at one non-root node. `p_parent` is
/// the date-`t` price at the node, `p_bar_child` the conditional expectation
/// of the date-`t+1` prices given the node.
pub fn dual_cone_violation(
    market: &MarketData,
    node: usize,
    p_parent: &[f64],
    p_bar_child: &[f64],
) -> Result<DualViolation, MarketError> {
    let m = market.assets();
    for v in [p_parent, p_bar_child] {
        if v.len() != m {
            return Err(MarketError::DimensionMismatch {
                expected: m,
                got: v.len(),
            });
        }
    }
    let parent = market.parent(node).ok_or(MarketError::RootNode(node))?;
    let mut lp = Lp::default();
    let pos = (0.0, f64::INFINITY);
    let ua: Vec<_> = (0..m).map(|i| lp.add_var(-p_parent[i], pos.0, pos.1)).collect();
    let va: Vec<_> = (0..m).map(|i| lp.add_var(p_parent[i], pos.0, pos.1)).collect();
    let ub: Vec<_> = (0..m).map(|i| lp.add_var(p_bar_child[i], pos.0, pos.1)).collect();
    let vb: Vec<_> = (0..m).map(|i| lp.add_var(-p_bar_child[i], pos.0, pos.1)).collect();
    let dp: Vec<_> = (0..m).map(|_| lp.add_var(0.0, pos.0, pos.1)).collect();
    let dm: Vec<_> = (0..m).map(|_| lp.add_var(0.0, pos.0, pos.1)).collect();
    let r = market.returns(node);
    for i in 0..m {
        lp.add_row(
            vec![
                (ua[i], r[i]),
                (va[i], -r[i]),
                (ub[i], -1.0),
                (vb[i], 1.0),
                (dp[i], -1.0),
                (dm[i], 1.0),
            ],
            Cmp::Eq,
            0.0,
        );
    }
    let margin = |at: usize, u: &[usize], v: &[usize]| {
        let mu = market.mu(market.depth(at));
        (0..m)
            .flat_map(|i| {
                [
                    (u[i], market.cap_plus(at)[i]),
                    (v[i], -mu * market.cap_minus(at)[i]),
                ]
            })
            .collect::<Vec<_>>()
    };
    lp.add_row(margin(parent, &ua, &va), Cmp::Ge, 0.0);
    lp.add_row(margin(node, &ub, &vb), Cmp::Ge, 0.0);
    let psi: Vec<_> = (0..m)
        .flat_map(|i| {
            [
                (dp[i], market.cap_plus(node)[i]),
                (dm[i], -market.cap_minus(node)[i]),
            ]
        })
        .collect();
    lp.add_row(psi, Cmp::Ge, 0.0);
    let norm: Vec<_> = ua.iter().chain(&va).chain(&ub).chain(&vb).map(|&v| (v, 1.0)).collect();
    lp.add_row(norm, Cmp::Le, 1.0);
    let (value, x) = lp.maximize()?;
    Ok(DualViolation {
        value,
        a: (0..m).map(|i| x[ua[i]] - x[va[i]]).collect(),
        b: (0..m).map(|i| x[ub[i]] - x[vb[i]]).collect(),
    })
}
