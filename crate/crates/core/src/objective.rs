//! Terminal valuations `ψ_N`: concave, positively homogeneous, and bounded
//! above and below by multiples of the 1-norm on the terminal cone.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market::{MarketConstants, MarketData, MarketError, MEMBER_TOL};
use crate::tree::{AdaptedVector, ScenarioTree};
use crate::vecops::{dot, norm1, norm2};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ObjectiveError {
    #[error("portfolio is outside the terminal cone at leaf {leaf:?} (residual {residual:e})")]
    NotInCone { leaf: String, residual: f64 },
    #[error("objective is negative ({value:e}) at leaf {leaf:?}")]
    NegativeValue { leaf: String, value: f64 },
    #[error("objective vanishes at leaf {0:?}")]
    ZeroValue(String),
    #[error("expected {expected} per-leaf entries, got {got}")]
    LeafCount { expected: usize, got: usize },
    #[error("expected a vector of dimension {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("price vector at leaf {leaf:?} is not strictly inside the dual cone (margin {margin:e})")]
    PriceNotInDualCone { leaf: String, margin: f64 },
    #[error("penalty {theta} at leaf {leaf:?} exceeds the admissible bound {bound}")]
    PenaltyTooLarge { leaf: String, theta: f64, bound: f64 },
    #[error("bad parameter: {0}")]
    BadParameter(String),
    #[error(transparent)]
    Market(#[from] MarketError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyNorm {
    L1,
    L2,
}

impl PenaltyNorm {
    fn eval(self, a: &[f64]) -> f64 {
        match self {
            PenaltyNorm::L1 => norm1(a),
            PenaltyNorm::L2 => norm2(a),
        }
    }

    /// `Ĥ ≥ 1` with `Ĥ⁻¹|a| ≤ ν(a) ≤ Ĥ|a|` against the 1-norm.
    pub fn equivalence(self, m: usize) -> f64 {
        match self {
            PenaltyNorm::L1 => 1.0,
            PenaltyNorm::L2 => (m as f64).sqrt(),
        }
    }
}

/// Per-leaf parameters are indexed by leaf slot (position among the depth-`N`
/// nodes).
#[derive(Debug, Clone, PartialEq)]
pub enum TerminalObjective {
    Linear {
        q: Vec<Vec<f64>>,
        h_psi: Vec<f64>,
    },
    Liquidation {
        h_psi: f64,
    },
    NormPenalized {
        q: Vec<Vec<f64>>,
        theta: Vec<f64>,
        norm: PenaltyNorm,
        h_psi: Vec<f64>,
    },
}

/// `(min, max)` of `q·a` over the unit section of `X_N(leaf)`, as `H_q`.
fn price_bound(market: &MarketData, leaf: usize, q: &[f64]) -> Result<(f64, f64), ObjectiveError> {
    let (lo, hi) = market.linear_range(leaf, q)?;
    if !(lo > 0.0) {
        return Err(ObjectiveError::PriceNotInDualCone {
            leaf: market.node_id(leaf).to_owned(),
            margin: lo,
        });
    }
    Ok((lo, hi))
}

fn h_of(lo: f64, hi: f64) -> f64 {
    hi.max(1.0 / lo).max(1.0)
}

impl TerminalObjective {
    /// `ψ(a) = q·a` with each `q` strictly inside `X_N(leaf)*`.
    pub fn linear(tree: &ScenarioTree, market: &MarketData, q: Vec<Vec<f64>>) -> Result<Self, ObjectiveError> {
        check_leaf_rows(tree, market, &q)?;
        let h_psi = tree
            .leaves()
            .zip(&q)
            .map(|(leaf, q)| price_bound(market, leaf, q).map(|(lo, hi)| h_of(lo, hi)))
            .collect::<Result<_, _>>()?;
        Ok(Self::Linear { q, h_psi })
    }

    /// Same price vector at every leaf.
    pub fn linear_uniform(tree: &ScenarioTree, market: &MarketData, q: Vec<f64>) -> Result<Self, ObjectiveError> {
        Self::linear(tree, market, vec![q; tree.count_at(tree.horizon())])
    }

    /// Net liquidation value at the leaf's bid/ask. The bound is
    /// `H_ψ = max(Λ̄_N, 1/(C¹_N Λ̲_N))`.
    pub fn liquidation(market: &MarketData, constants: &MarketConstants) -> Self {
        let n = market.horizon();
        let b = constants.bounds[n];
        Self::Liquidation {
            h_psi: b.cap_hi.max(1.0 / (constants.c1(n) * b.cap_lo)),
        }
    }

    /// `ψ(a) = q·a − θ ν(a)` with `0 ≤ θ ≤ (1−δ)/(H_q Ĥ)`; then
    /// `H_ψ = H_q/δ`.
    pub fn norm_penalized(
        tree: &ScenarioTree,
        market: &MarketData,
        q: Vec<Vec<f64>>,
        theta: Vec<f64>,
        norm: PenaltyNorm,
        delta: f64,
    ) -> Result<Self, ObjectiveError> {
        Self::build_penalized(tree, market, q, theta, norm, delta, true)
    }

    /// As [`Self::norm_penalized`] but without the penalty bound; the
    /// reported `H_ψ` still assumes it. Used to exercise the axiom checks.
    pub fn norm_penalized_unchecked(
        tree: &ScenarioTree,
        market: &MarketData,
        q: Vec<Vec<f64>>,
        theta: Vec<f64>,
        norm: PenaltyNorm,
        delta: f64,
    ) -> Result<Self, ObjectiveError> {
        Self::build_penalized(tree, market, q, theta, norm, delta, false)
    }

    /// Largest admissible penalty `(1−δ)/(H_q Ĥ)` at each leaf.
    pub fn max_penalty(
        tree: &ScenarioTree,
        market: &MarketData,
        q: &[Vec<f64>],
        norm: PenaltyNorm,
        delta: f64,
    ) -> Result<Vec<f64>, ObjectiveError> {
        check_leaf_rows(tree, market, q)?;
        let hat = norm.equivalence(market.assets());
        tree.leaves()
            .zip(q)
            .map(|(leaf, qv)| price_bound(market, leaf, qv).map(|(lo, hi)| (1.0 - delta) / (h_of(lo, hi) * hat)))
            .collect()
    }

    fn build_penalized(
        tree: &ScenarioTree,
        market: &MarketData,
        q: Vec<Vec<f64>>,
        theta: Vec<f64>,
        norm: PenaltyNorm,
        delta: f64,
        enforce: bool,
    ) -> Result<Self, ObjectiveError> {
        check_leaf_rows(tree, market, &q)?;
        if theta.len() != q.len() {
            return Err(ObjectiveError::LeafCount {
                expected: q.len(),
                got: theta.len(),
            });
        }
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(ObjectiveError::BadParameter(format!("delta {delta} outside (0, 1]")));
        }
        let hat = norm.equivalence(market.assets());
        let mut h_psi = Vec::with_capacity(q.len());
        for ((leaf, qv), &th) in tree.leaves().zip(&q).zip(&theta) {
            if !(th >= 0.0 && th.is_finite()) {
                return Err(ObjectiveError::BadParameter(format!("penalty {th} is negative")));
            }
            let (lo, hi) = price_bound(market, leaf, qv)?;
            let hq = h_of(lo, hi);
            let bound = (1.0 - delta) / (hq * hat);
            if enforce && th > bound {
                return Err(ObjectiveError::PenaltyTooLarge {
                    leaf: market.node_id(leaf).to_owned(),
                    theta: th,
                    bound,
                });
            }
            h_psi.push(hq / delta);
        }
        Ok(Self::NormPenalized {
            q,
            theta,
            norm,
            h_psi,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Linear { .. } => "linear",
            Self::Liquidation { .. } => "liquidation",
            Self::NormPenalized { .. } => "norm_penalized",
        }
    }

    /// Reported `H_ψ` at a leaf slot.
    pub fn h_psi(&self, slot: usize) -> f64 {
        match self {
            Self::Linear { h_psi, .. } | Self::NormPenalized { h_psi, .. } => h_psi[slot],
            Self::Liquidation { h_psi } => *h_psi,
        }
    }

    /// `ψ_N(leaf, a)` with no membership checks.
    pub fn value(&self, market: &MarketData, leaf: usize, slot: usize, a: &[f64]) -> f64 {
        match self {
            Self::Linear { q, .. } => dot(&q[slot], a),
            Self::Liquidation { .. } => {
                let (lp, lm) = (market.cap_plus(leaf), market.cap_minus(leaf));
                a.iter()
                    .enumerate()
                    .map(|(i, &x)| if x >= 0.0 { lp[i] * x } else { lm[i] * x })
                    .sum()
            }
            Self::NormPenalized { q, theta, norm, .. } => dot(&q[slot], a) - theta[slot] * norm.eval(a),
        }
    }

    /// Supergradient with `sign(0) = +` at kinks.
    pub fn supergradient(&self, market: &MarketData, leaf: usize, slot: usize, a: &[f64]) -> Vec<f64> {
        match self {
            Self::Linear { q, .. } => q[slot].clone(),
            Self::Liquidation { .. } => {
                let (lp, lm) = (market.cap_plus(leaf), market.cap_minus(leaf));
                a.iter()
                    .enumerate()
                    .map(|(i, &x)| if x >= 0.0 { lp[i] } else { lm[i] })
                    .collect()
            }
            Self::NormPenalized { q, theta, norm, .. } => {
                let th = theta[slot];
                match norm {
                    PenaltyNorm::L1 => q[slot]
                        .iter()
                        .zip(a)
                        .map(|(&qi, &x)| if x >= 0.0 { qi - th } else { qi + th })
                        .collect(),
                    PenaltyNorm::L2 => {
                        let n = norm2(a);
                        q[slot]
                            .iter()
                            .zip(a)
                            .map(|(&qi, &x)| if n > 0.0 { qi - th * x / n } else { qi })
                            .collect()
                    }
                }
            }
        }
    }

    /// Checked evaluation at a leaf (global node index).
    pub fn evaluate(
        &self,
        tree: &ScenarioTree,
        market: &MarketData,
        leaf: usize,
        a: &[f64],
    ) -> Result<f64, ObjectiveError> {
        self.check_point(tree, market, leaf, a)?;
        let v = self.value(market, leaf, tree.slot(leaf), a);
        if v < -MEMBER_TOL * norm1(a).max(1.0) {
            return Err(ObjectiveError::NegativeValue {
                leaf: tree.node(leaf).id.clone(),
                value: v,
            });
        }
        Ok(v)
    }

    /// Checked supergradient; `g·a = ψ(a)` by homogeneity.
    pub fn gradient(
        &self,
        tree: &ScenarioTree,
        market: &MarketData,
        leaf: usize,
        a: &[f64],
    ) -> Result<Vec<f64>, ObjectiveError> {
        if self.evaluate(tree, market, leaf, a)? <= 0.0 {
            return Err(ObjectiveError::ZeroValue(tree.node(leaf).id.clone()));
        }
        Ok(self.supergradient(market, leaf, tree.slot(leaf), a))
    }

    fn check_point(
        &self,
        tree: &ScenarioTree,
        market: &MarketData,
        leaf: usize,
        a: &[f64],
    ) -> Result<(), ObjectiveError> {
        if a.len() != market.assets() {
            return Err(ObjectiveError::DimensionMismatch {
                expected: market.assets(),
                got: a.len(),
            });
        }
        let residual = market.margin_residual(leaf, a)?;
        if residual < -MEMBER_TOL {
            return Err(ObjectiveError::NotInCone {
                leaf: tree.node(leaf).id.clone(),
                residual,
            });
        }
        Ok(())
    }

    /// `E ln ψ_N(x_N)`, or `−∞` if some leaf value is not positive.
    pub fn log_objective(&self, tree: &ScenarioTree, market: &MarketData, x_n: &AdaptedVector) -> f64 {
        let mut total = 0.0;
        for leaf in tree.leaves() {
            let v = self.value(market, leaf, tree.slot(leaf), x_n.at(tree, leaf));
            if !(v > 0.0) {
                return f64::NEG_INFINITY;
            }
            total += tree.probability(leaf) * v.ln();
        }
        total
    }
}

fn check_leaf_rows(tree: &ScenarioTree, market: &MarketData, q: &[Vec<f64>]) -> Result<(), ObjectiveError> {
    let leaves = tree.count_at(tree.horizon());
    if q.len() != leaves {
        return Err(ObjectiveError::LeafCount {
            expected: leaves,
            got: q.len(),
        });
    }
    if let Some(r) = q.iter().find(|r| r.len() != market.assets()) {
        return Err(ObjectiveError::DimensionMismatch {
            expected: market.assets(),
            got: r.len(),
        });
    }
    Ok(())
}

/// Outcome of the sampled axiom checks. Counts are violations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxiomReport {
    pub samples: usize,
    pub superadditivity: usize,
    pub homogeneity: usize,
    pub lower_bound: usize,
    pub upper_bound: usize,
    pub monotonicity: usize,
    pub concavity: usize,
    /// Continuity and measurability hold automatically on a finite tree.
    pub continuity_note: String,
}

impl AxiomReport {
    pub fn passed(&self) -> bool {
        self.superadditivity == 0
            && self.homogeneity == 0
            && self.lower_bound == 0
            && self.upper_bound == 0
            && self.monotonicity == 0
            && self.concavity == 0
    }
}

/// Random member of `X_N(leaf)`: a nonnegative combination of one to three
/// extreme rays, so boundary points are hit often.
pub fn sample_cone_point(rng: &mut impl Rng, gens: &[Vec<f64>]) -> Vec<f64> {
    let m = gens[0].len();
    let mut a = vec![0.0; m];
    let k = rng.gen_range(1..=3);
    for _ in 0..k {
        let g = &gens[rng.gen_range(0..gens.len())];
        let w: f64 = -rng.gen::<f64>().max(1e-12).ln();
        for (x, gi) in a.iter_mut().zip(g) {
            *x += w * gi;
        }
    }
    a
}

/// Sampled verification of superadditivity, homogeneity, the two-sided
/// bound with the reported `H_ψ`, monotonicity and concavity, spread over the
/// leaves.
pub fn check_psi_class(
    objective: &TerminalObjective,
    tree: &ScenarioTree,
    market: &MarketData,
    samples: usize,
    seed: u64,
) -> AxiomReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let leaves: Vec<usize> = tree.leaves().collect();
    let gens: Vec<Vec<Vec<f64>>> = leaves.iter().map(|&l| market.generators(l)).collect();
    let mut rep = AxiomReport {
        samples,
        superadditivity: 0,
        homogeneity: 0,
        lower_bound: 0,
        upper_bound: 0,
        monotonicity: 0,
        concavity: 0,
        continuity_note: "automatic: the probability space is finite".into(),
    };
    const TOL: f64 = 1e-10;
    for s in 0..samples {
        let k = s % leaves.len();
        let (leaf, slot, g) = (leaves[k], tree.slot(leaves[k]), &gens[k]);
        let psi = |a: &[f64]| objective.value(market, leaf, slot, a);
        let a = sample_cone_point(&mut rng, g);
        let b = sample_cone_point(&mut rng, g);
        let (pa, pb) = (psi(&a), psi(&b));
        let scale = norm1(&a) + norm1(&b);
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        if psi(&sum) < pa + pb - TOL * scale {
            rep.superadditivity += 1;
        }
        let lam = rng.gen_range(0.0..10.0);
        let la: Vec<f64> = a.iter().map(|x| lam * x).collect();
        if (psi(&la) - lam * pa).abs() > TOL * (1.0 + lam) * scale {
            rep.homogeneity += 1;
        }
        let h = objective.h_psi(slot);
        let na = norm1(&a);
        if pa < na / h - TOL * scale {
            rep.lower_bound += 1;
        }
        if pa > h * na + TOL * scale {
            rep.upper_bound += 1;
        }
        // b is a cone element, so a + b dominates a.
        if psi(&sum) < pa - TOL * scale {
            rep.monotonicity += 1;
        }
        let th = rng.gen::<f64>();
        let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| th * x + (1.0 - th) * y).collect();
        if psi(&mix) < th * pa + (1.0 - th) * pb - TOL * scale {
            rep.concavity += 1;
        }
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::market_constants;
    use crate::tree::RawNode;

    fn setup(m: usize, lam: f64) -> (ScenarioTree, MarketData) {
        let raw = vec![
            RawNode::new("r", None, 1.0),
            RawNode::new("u", Some("r"), 0.5),
            RawNode::new("d", Some("r"), 0.5),
        ];
        let tree = ScenarioTree::build_uniform(&raw, m).unwrap();
        let r = vec![vec![1.0; m], vec![1.1; m], vec![0.9; m]];
        let md = MarketData::with_uniform_costs(&tree, r, lam, lam, vec![1.5, 1.5]).unwrap();
        (tree, md)
    }

    #[test]
    fn evaluate_examples() {
        let (tree, md) = setup(2, 0.0);
        let lin = TerminalObjective::linear_uniform(&tree, &md, vec![1.0, 1.0]).unwrap();
        assert_eq!(lin.evaluate(&tree, &md, 1, &[2.0, 3.0]).unwrap(), 5.0);
        let c = market_constants(&md).unwrap();
        let liq = TerminalObjective::liquidation(&md, &c);
        assert_eq!(liq.evaluate(&tree, &md, 1, &[2.0, -1.0]).unwrap(), 1.0);
        let pen = TerminalObjective::norm_penalized(
            &tree,
            &md,
            vec![vec![1.0, 1.0]; 2],
            vec![0.0; 2],
            PenaltyNorm::L2,
            0.5,
        )
        .unwrap();
        assert_eq!(pen.evaluate(&tree, &md, 2, &[2.0, 3.0]).unwrap(), 5.0);
        assert!(matches!(
            lin.evaluate(&tree, &md, 1, &[1.0, -1.0]),
            Err(ObjectiveError::NotInCone { .. })
        ));
    }

    #[test]
    fn gradient_examples() {
        let (tree, md) = setup(2, 0.02);
        let c = market_constants(&md).unwrap();
        let lin = TerminalObjective::linear_uniform(&tree, &md, vec![1.0, 1.2]).unwrap();
        assert_eq!(lin.gradient(&tree, &md, 1, &[1.0, 1.0]).unwrap(), vec![1.0, 1.2]);
        let liq = TerminalObjective::liquidation(&md, &c);
        let a = [2.0, -0.5];
        let g = liq.gradient(&tree, &md, 1, &a).unwrap();
        assert_eq!(g, vec![0.98, 1.02]);
        assert!((dot(&g, &a) - liq.evaluate(&tree, &md, 1, &a).unwrap()).abs() < 1e-15);
        for i in 0..2 {
            let h = 1e-6;
            let mut ap = a;
            let mut am = a;
            ap[i] += h;
            am[i] -= h;
            let fd = (liq.value(&md, 1, 0, &ap) - liq.value(&md, 1, 0, &am)) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-8);
        }
        assert!(matches!(
            liq.gradient(&tree, &md, 1, &[0.0, 0.0]),
            Err(ObjectiveError::ZeroValue(_))
        ));
    }

    #[test]
    fn log_objective_examples() {
        let (tree, md) = setup(1, 0.0);
        let lin = TerminalObjective::linear_uniform(&tree, &md, vec![1.0]).unwrap();
        let ones = AdaptedVector::from_rows(&tree, 1, vec![vec![1.0], vec![1.0]]).unwrap();
        assert_eq!(lin.log_objective(&tree, &md, &ones), 0.0);
        let x = AdaptedVector::from_rows(&tree, 1, vec![vec![1.3], vec![0.7]]).unwrap();
        let f = lin.log_objective(&tree, &md, &x);
        assert!((lin.log_objective(&tree, &md, &x.scaled(2.0)) - f - 2f64.ln()).abs() < 1e-12);
        let z = AdaptedVector::from_rows(&tree, 1, vec![vec![1.0], vec![0.0]]).unwrap();
        assert_eq!(lin.log_objective(&tree, &md, &z), f64::NEG_INFINITY);
    }

    #[test]
    fn axioms_hold_for_shipped_objectives() {
        let (tree, md) = setup(3, 0.02);
        let c = market_constants(&md).unwrap();
        let objs = [
            TerminalObjective::linear_uniform(&tree, &md, vec![1.0; 3]).unwrap(),
            TerminalObjective::liquidation(&md, &c),
            TerminalObjective::norm_penalized(&tree, &md, vec![vec![1.0; 3]; 2], vec![0.05; 2], PenaltyNorm::L1, 0.5)
                .unwrap(),
            TerminalObjective::norm_penalized(&tree, &md, vec![vec![1.0; 3]; 2], vec![0.05; 2], PenaltyNorm::L2, 0.5)
                .unwrap(),
        ];
        for o in &objs {
            let rep = check_psi_class(o, &tree, &md, 2000, 5);
            assert!(rep.passed(), "{} {:?}", o.name(), rep);
        }
    }

    #[test]
    fn oversized_penalty_is_caught() {
        let (tree, md) = setup(2, 0.02);
        let q = vec![vec![1.0, 1.0]; 2];
        assert!(matches!(
            TerminalObjective::norm_penalized(&tree, &md, q.clone(), vec![0.5; 2], PenaltyNorm::L1, 0.5),
            Err(ObjectiveError::PenaltyTooLarge { .. })
        ));
        let bad =
            TerminalObjective::norm_penalized_unchecked(&tree, &md, q, vec![0.5; 2], PenaltyNorm::L1, 0.5).unwrap();
        let rep = check_psi_class(&bad, &tree, &md, 2000, 9);
        assert!(rep.lower_bound > 0);
    }

    #[test]
    fn prices_outside_dual_cone_rejected() {
        let (tree, md) = setup(2, 0.0);
        assert!(matches!(
            TerminalObjective::linear_uniform(&tree, &md, vec![1.0, 0.0]),
            Err(ObjectiveError::PriceNotInDualCone { .. })
        ));
    }
}
