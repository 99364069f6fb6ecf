//! The margin-trading market with proportional transaction costs.
//!
//! `X_t(ω)` is the set of portfolios whose long side, valued at bid
//! (`Λ⁺ = 1 − λ⁺`), covers `μ_t` times the short side valued at ask
//! (`Λ⁻ = 1 + λ⁻`). `Z_t(ω)` holds the pairs `(a, b)` of a date-`t−1`
//! portfolio and a date-`t` portfolio reachable from it without outside cash.

mod constants;
mod lift;
mod paths;

pub use constants::{
    c1_closed_form, h_closed_form, market_constants, nu_values, section_minimum, time_bounds, MarketConstants,
    SectionMethod, SectionTarget, TimeBounds, TimeConstants,
};
pub use lift::{dual_cone_violation, lift_x, lift_z, ConeLift, DualViolation, LiftRow};
pub use paths::{
    dominating_path, feasible_completion, slater_path, slater_path_from, RelaxedSequence,
    SlaterPath,
};

use thiserror::Error;

use crate::lp::LpError;
use crate::tree::{ScenarioTree, TreeError};
use crate::vecops::dot;

/// Residual at or above `-MEMBER_TOL` counts as cone membership.
pub const MEMBER_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MarketError {
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("expected a vector of dimension {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("the market needs the same number of assets at every date")]
    NonuniformDimension,
    #[error("expected {expected} per-node entries, got {got}")]
    NodeCount { expected: usize, got: usize },
    #[error("expected {expected} margins (one per date), got {got}")]
    MarginCount { expected: usize, got: usize },
    #[error("nonpositive price {value} for asset {asset} at node {node:?}")]
    NonpositivePrice {
        node: String,
        asset: usize,
        value: f64,
    },
    #[error("nonpositive gross return {value} for asset {asset} at node {node:?}")]
    NonpositiveReturn {
        node: String,
        asset: usize,
        value: f64,
    },
    #[error("bad cost rate at node {node:?}, asset {asset}: {reason}")]
    BadCostRate {
        node: String,
        asset: usize,
        reason: String,
    },
    #[error("margin at date {t} must exceed 1, got {mu}")]
    BadMargin { t: usize, mu: f64 },
    #[error("margin too tight at date {t}: mu = {mu} does not exceed nu = {nu}")]
    MarginTooTight { t: usize, mu: f64, nu: f64 },
    #[error("portfolio is outside the margin cone at node {node:?} (residual {residual:e})")]
    NotInCone { node: String, residual: f64 },
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("node {0} has no parent")]
    RootNode(usize),
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// Per-node market coefficients. Node indices are those of the
/// [`ScenarioTree`] the data was built against; returns at the root are unused.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketData {
    m: usize,
    horizon: usize,
    ids: Vec<String>,
    parent: Vec<Option<usize>>,
    depth: Vec<usize>,
    returns: Vec<Vec<f64>>,
    cap_plus: Vec<Vec<f64>>,
    cap_minus: Vec<Vec<f64>>,
    lambda_plus: Vec<Vec<f64>>,
    lambda_minus: Vec<Vec<f64>>,
    mu: Vec<f64>,
}

/// Membership verdict for `Z_t` together with the three residuals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZMembership {
    pub member: bool,
    pub parent_margin: f64,
    pub child_margin: f64,
    pub psi: f64,
}

/// Gross returns `S_t / S_{t−1}` node by node. The root row is all ones.
pub fn returns_from_prices(
    tree: &ScenarioTree,
    prices: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>, MarketError> {
    if prices.len() != tree.len() {
        return Err(MarketError::NodeCount {
            expected: tree.len(),
            got: prices.len(),
        });
    }
    for (i, row) in prices.iter().enumerate() {
        let m = tree.dim(tree.depth(i));
        if row.len() != m {
            return Err(MarketError::DimensionMismatch {
                expected: m,
                got: row.len(),
            });
        }
        if let Some((asset, &value)) = row.iter().enumerate().find(|(_, &s)| !(s > 0.0)) {
            return Err(MarketError::NonpositivePrice {
                node: tree.node(i).id.clone(),
                asset,
                value,
            });
        }
    }
    Ok((0..tree.len())
        .map(|i| match tree.parent(i) {
            None => vec![1.0; prices[i].len()],
            Some(p) => prices[i].iter().zip(&prices[p]).map(|(s, s0)| s / s0).collect(),
        })
        .collect())
}

impl MarketData {
    /// `returns`, `lambda_plus`, `lambda_minus` hold one row per tree node
    /// (BFS order); `mu` one margin per date `0..=N`.
    pub fn new(
        tree: &ScenarioTree,
        returns: Vec<Vec<f64>>,
        lambda_plus: Vec<Vec<f64>>,
        lambda_minus: Vec<Vec<f64>>,
        mu: Vec<f64>,
    ) -> Result<Self, MarketError> {
        let m = tree.dim(0);
        if tree.dims().iter().any(|&d| d != m) {
            return Err(MarketError::NonuniformDimension);
        }
        for rows in [&returns, &lambda_plus, &lambda_minus] {
            if rows.len() != tree.len() {
                return Err(MarketError::NodeCount {
                    expected: tree.len(),
                    got: rows.len(),
                });
            }
            if let Some(r) = rows.iter().find(|r| r.len() != m) {
                return Err(MarketError::DimensionMismatch {
                    expected: m,
                    got: r.len(),
                });
            }
        }
        if mu.len() != tree.horizon() + 1 {
            return Err(MarketError::MarginCount {
                expected: tree.horizon() + 1,
                got: mu.len(),
            });
        }
        if let Some((t, &v)) = mu.iter().enumerate().find(|(_, &v)| !(v > 1.0 && v.is_finite())) {
            return Err(MarketError::BadMargin { t, mu: v });
        }
        for i in 0..tree.len() {
            let id = || tree.node(i).id.clone();
            if tree.parent(i).is_some() {
                if let Some((asset, &value)) = returns[i]
                    .iter()
                    .enumerate()
                    .find(|(_, &r)| !(r > 0.0 && r.is_finite()))
                {
                    return Err(MarketError::NonpositiveReturn {
                        node: id(),
                        asset,
                        value,
                    });
                }
            }
            for asset in 0..m {
                let lp = lambda_plus[i][asset];
                let lm = lambda_minus[i][asset];
                if !(0.0..1.0).contains(&lp) {
                    return Err(MarketError::BadCostRate {
                        node: id(),
                        asset,
                        reason: format!("selling cost {lp} outside [0, 1)"),
                    });
                }
                if !(lm >= 0.0 && lm.is_finite()) {
                    return Err(MarketError::BadCostRate {
                        node: id(),
                        asset,
                        reason: format!("buying cost {lm} is negative"),
                    });
                }
            }
        }
        let cap_plus = lambda_plus
            .iter()
            .map(|r| r.iter().map(|l| 1.0 - l).collect())
            .collect();
        let cap_minus = lambda_minus
            .iter()
            .map(|r| r.iter().map(|l| 1.0 + l).collect())
            .collect();
        let returns = returns
            .into_iter()
            .enumerate()
            .map(|(i, r)| if tree.parent(i).is_some() { r } else { vec![1.0; m] })
            .collect();
        Ok(Self {
            m,
            horizon: tree.horizon(),
            ids: tree.nodes().iter().map(|n| n.id.clone()).collect(),
            parent: tree.nodes().iter().map(|n| n.parent).collect(),
            depth: tree.nodes().iter().map(|n| n.depth).collect(),
            returns,
            cap_plus,
            cap_minus,
            lambda_plus,
            lambda_minus,
            mu,
        })
    }

    /// Uniform cost rates at every node.
    pub fn with_uniform_costs(
        tree: &ScenarioTree,
        returns: Vec<Vec<f64>>,
        lambda_plus: f64,
        lambda_minus: f64,
        mu: Vec<f64>,
    ) -> Result<Self, MarketError> {
        let m = tree.dim(0);
        Self::new(
            tree,
            returns,
            vec![vec![lambda_plus; m]; tree.len()],
            vec![vec![lambda_minus; m]; tree.len()],
            mu,
        )
    }

    pub fn assets(&self) -> usize {
        self.m
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn node_count(&self) -> usize {
        self.ids.len()
    }

    pub fn node_id(&self, node: usize) -> &str {
        &self.ids[node]
    }

    pub fn parent(&self, node: usize) -> Option<usize> {
        self.parent[node]
    }

    pub fn depth(&self, node: usize) -> usize {
        self.depth[node]
    }

    pub fn mu(&self, t: usize) -> f64 {
        self.mu[t]
    }

    pub fn margins(&self) -> &[f64] {
        &self.mu
    }

    pub fn returns(&self, node: usize) -> &[f64] {
        &self.returns[node]
    }

    pub fn lambda_plus(&self, node: usize) -> &[f64] {
        &self.lambda_plus[node]
    }

    pub fn lambda_minus(&self, node: usize) -> &[f64] {
        &self.lambda_minus[node]
    }

    /// `Λ⁺ = 1 − λ⁺` at the node.
    pub fn cap_plus(&self, node: usize) -> &[f64] {
        &self.cap_plus[node]
    }

    /// `Λ⁻ = 1 + λ⁻` at the node.
    pub fn cap_minus(&self, node: usize) -> &[f64] {
        &self.cap_minus[node]
    }

    pub fn is_frictionless(&self) -> bool {
        self.lambda_plus
            .iter()
            .chain(&self.lambda_minus)
            .all(|r| r.iter().all(|&l| l == 0.0))
    }

    fn check_dim(&self, a: &[f64]) -> Result<(), MarketError> {
        if a.len() != self.m {
            return Err(MarketError::DimensionMismatch {
                expected: self.m,
                got: a.len(),
            });
        }
        Ok(())
    }

    fn parent_of(&self, node: usize) -> Result<usize, MarketError> {
        self.parent[node].ok_or(MarketError::RootNode(node))
    }

    /// `Σ Λ⁺ a⁺ − μ_t Σ Λ⁻ a⁻` at the node; nonnegative iff `a ∈ X_t(node)`.
    pub fn margin_residual(&self, node: usize, a: &[f64]) -> Result<f64, MarketError> {
        self.check_dim(a)?;
        Ok(self.margin_residual_unchecked(node, a))
    }

    pub(crate) fn margin_residual_unchecked(&self, node: usize, a: &[f64]) -> f64 {
        let mu = self.mu[self.depth[node]];
        let (lp, lm) = (&self.cap_plus[node], &self.cap_minus[node]);
        a.iter()
            .enumerate()
            .map(|(i, &x)| if x >= 0.0 { lp[i] * x } else { mu * lm[i] * x })
            .sum()
    }

    pub fn in_x(&self, node: usize, a: &[f64]) -> Result<bool, MarketError> {
        Ok(self.margin_residual(node, a)? >= -MEMBER_TOL)
    }

    /// Cash released when the parent portfolio `a` (grown by this node's
    /// returns) is rebalanced into `b`, net of costs.
    pub fn self_financing_value(&self, node: usize, a: &[f64], b: &[f64]) -> Result<f64, MarketError> {
        self.check_dim(a)?;
        self.check_dim(b)?;
        self.parent_of(node)?;
        Ok(self.psi_unchecked(node, a, b))
    }

    pub(crate) fn psi_unchecked(&self, node: usize, a: &[f64], b: &[f64]) -> f64 {
        let (r, lp, lm) = (&self.returns[node], &self.cap_plus[node], &self.cap_minus[node]);
        (0..self.m)
            .map(|i| {
                let d = r[i] * a[i] - b[i];
                if d >= 0.0 {
                    lp[i] * d
                } else {
                    lm[i] * d
                }
            })
            .sum()
    }

    /// Membership of `(a, b)` in `Z_t` at a non-root node.
    pub fn in_z(&self, node: usize, a: &[f64], b: &[f64], tol: f64) -> Result<ZMembership, MarketError> {
        self.check_dim(a)?;
        self.check_dim(b)?;
        let p = self.parent_of(node)?;
        let parent_margin = self.margin_residual_unchecked(p, a);
        let child_margin = self.margin_residual_unchecked(node, b);
        let psi = self.psi_unchecked(node, a, b);
        Ok(ZMembership {
            member: parent_margin >= -tol && child_margin >= -tol && psi >= -tol,
            parent_margin,
            child_margin,
            psi,
        })
    }

    /// Largest `ε` with the 1-norm ball `B(x, ε) ⊆ X_t(node)`; negative when
    /// `x` lies outside. The ball is the convex hull of `x ± ε e_i`, and moving
    /// along `+e_i` never lowers the margin, so only the `−e_i` moves matter.
    pub fn interior_radius(&self, node: usize, x: &[f64]) -> Result<f64, MarketError> {
        self.check_dim(x)?;
        let f = self.margin_residual_unchecked(node, x);
        let mu = self.mu[self.depth[node]];
        let (lp, lm) = (&self.cap_plus[node], &self.cap_minus[node]);
        Ok((0..self.m)
            .map(|i| {
                let short = mu * lm[i];
                if x[i] > 0.0 {
                    if f <= lp[i] * x[i] {
                        f / lp[i]
                    } else {
                        x[i] + (f - lp[i] * x[i]) / short
                    }
                } else {
                    f / short
                }
            })
            .fold(f64::INFINITY, f64::min))
    }

    /// Extreme rays of `X_t(node)`, scaled to unit 1-norm: `e_i` and
    /// `e_i/Λ⁺_i − e_j/(μΛ⁻_j)` for `i ≠ j`.
    pub fn generators(&self, node: usize) -> Vec<Vec<f64>> {
        let m = self.m;
        let mu = self.mu[self.depth[node]];
        let (lp, lm) = (&self.cap_plus[node], &self.cap_minus[node]);
        let mut out = Vec::with_capacity(m * m);
        for i in 0..m {
            let mut e = vec![0.0; m];
            e[i] = 1.0;
            out.push(e);
        }
        for i in 0..m {
            for j in (0..m).filter(|&j| j != i) {
                let (gi, gj) = (1.0 / lp[i], 1.0 / (mu * lm[j]));
                let n = gi + gj;
                let mut g = vec![0.0; m];
                g[i] = gi / n;
                g[j] = -gj / n;
                out.push(g);
            }
        }
        out
    }

    /// `(min, max)` of `q·a` over `X_t(node) ∩ {|a| = 1}`. The section is a
    /// union of polytopes whose vertices are the normalized generators.
    pub fn linear_range(&self, node: usize, q: &[f64]) -> Result<(f64, f64), MarketError> {
        self.check_dim(q)?;
        Ok(self
            .generators(node)
            .iter()
            .map(|g| dot(q, g))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            }))
    }

    /// `min_g p·g` over normalized generators: nonnegative iff `p ∈ X_t(node)*`.
    pub fn dual_cone_margin(&self, node: usize, p: &[f64]) -> Result<f64, MarketError> {
        Ok(self.linear_range(node, p)?.0)
    }
}
