//! Seeded instance generators and small named fixtures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::market::{nu_values, time_bounds, MarketData};
use crate::objective::{PenaltyNorm, TerminalObjective};
use crate::solver::{PathProblem, SolverError};
use crate::tree::{RawNode, ScenarioTree};

/// Limits for [`random_problem`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorLimits {
    pub max_horizon: usize,
    pub max_branching: usize,
    pub max_assets: usize,
    pub max_cost: f64,
    /// `μ_t − ν_t` is drawn from `[margin_gap, margin_gap + 0.5]`.
    pub margin_gap: f64,
}

impl Default for GeneratorLimits {
    fn default() -> Self {
        Self {
            max_horizon: 4,
            max_branching: 3,
            max_assets: 4,
            max_cost: 0.05,
            margin_gap: 0.1,
        }
    }
}

/// Which terminal valuation a generated instance carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    Liquidation,
    Linear,
    NormL1,
    NormL2,
}

/// Random tree, returns in `[0.8, 1.25]`, costs in `[0, max_cost]` and margins
/// just above `ν_t`. The objective kind cycles with the seed.
pub fn random_problem(seed: u64, limits: &GeneratorLimits) -> Result<PathProblem, SolverError> {
    let kind = match seed % 4 {
        0 => ObjectiveKind::Liquidation,
        1 => ObjectiveKind::Linear,
        2 => ObjectiveKind::NormL1,
        _ => ObjectiveKind::NormL2,
    };
    random_problem_with(seed, limits, kind)
}

pub fn random_problem_with(
    seed: u64,
    limits: &GeneratorLimits,
    kind: ObjectiveKind,
) -> Result<PathProblem, SolverError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let horizon = rng.gen_range(1..=limits.max_horizon);
    let m = rng.gen_range(1..=limits.max_assets);

    let mut raw = vec![RawNode::new("r", None, 1.0)];
    let mut frontier = vec!["r".to_string()];
    for _ in 0..horizon {
        let mut next = Vec::new();
        for p in &frontier {
            let k = rng.gen_range(1..=limits.max_branching);
            let w: Vec<f64> = (0..k).map(|_| rng.gen_range(0.2..1.0)).collect();
            let total: f64 = w.iter().sum();
            for (j, wj) in w.iter().enumerate() {
                let id = format!("{p}.{j}");
                raw.push(RawNode::new(id.clone(), Some(p), wj / total));
                next.push(id);
            }
        }
        frontier = next;
    }
    let tree = ScenarioTree::build_uniform(&raw, m).expect("generated tree is valid");
    let returns: Vec<Vec<f64>> = (0..tree.len())
        .map(|n| {
            if n == 0 {
                vec![1.0; m]
            } else {
                (0..m).map(|_| rng.gen_range(0.8..1.25)).collect()
            }
        })
        .collect();
    let cost = |rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
        (0..tree.len())
            .map(|_| (0..m).map(|_| rng.gen_range(0.0..=limits.max_cost)).collect())
            .collect()
    };
    let lp = cost(&mut rng);
    let lm = cost(&mut rng);
    let probe = MarketData::new(&tree, returns.clone(), lp.clone(), lm.clone(), vec![1e6; horizon + 1])?;
    let mu: Vec<f64> = nu_values(&time_bounds(&probe))
        .into_iter()
        .map(|nu| nu + limits.margin_gap + rng.gen_range(0.0..0.5))
        .collect();
    let market = MarketData::new(&tree, returns, lp, lm, mu)?;
    let x0: Vec<f64> = (0..m).map(|_| rng.gen_range(0.5..1.5)).collect();
    let objective = random_objective(&mut rng, &tree, &market, kind)?;
    PathProblem::new(tree, market, objective, x0)
}

fn random_objective(
    rng: &mut ChaCha8Rng,
    tree: &ScenarioTree,
    market: &MarketData,
    kind: ObjectiveKind,
) -> Result<TerminalObjective, SolverError> {
    let m = market.assets();
    let bad = |e: crate::objective::ObjectiveError| SolverError::InfeasibleStart(e.to_string());
    // Prices near the bid: strictly inside the dual cone since μ > 1.
    let prices = |rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
        tree.leaves()
            .map(|leaf| {
                let cap = market.cap_plus(leaf);
                (0..m).map(|i| cap[i] * rng.gen_range(1.0..1.05)).collect()
            })
            .collect()
    };
    Ok(match kind {
        ObjectiveKind::Liquidation => {
            let constants = crate::market::market_constants(market)?;
            TerminalObjective::liquidation(market, &constants)
        }
        ObjectiveKind::Linear => TerminalObjective::linear(tree, market, prices(rng)).map_err(bad)?,
        ObjectiveKind::NormL1 | ObjectiveKind::NormL2 => {
            let norm = if kind == ObjectiveKind::NormL1 {
                PenaltyNorm::L1
            } else {
                PenaltyNorm::L2
            };
            let q = prices(rng);
            let delta = 0.5;
            let probe = TerminalObjective::linear(tree, market, q.clone()).map_err(bad)?;
            let TerminalObjective::Linear { h_psi, .. } = &probe else {
                unreachable!()
            };
            let theta = h_psi
                .iter()
                .map(|h| rng.gen_range(0.1..0.9) * (1.0 - delta) / (h * norm.equivalence(m)))
                .collect();
            TerminalObjective::norm_penalized(tree, market, q, theta, norm, delta).map_err(bad)?
        }
    })
}

fn build(raw: &[RawNode], m: usize, returns_by_id: impl Fn(&str) -> Vec<f64>) -> (ScenarioTree, Vec<Vec<f64>>) {
    let tree = ScenarioTree::build_uniform(raw, m).expect("fixture tree is valid");
    let returns = (0..tree.len()).map(|n| returns_by_id(&tree.node(n).id)).collect();
    (tree, returns)
}

/// One frictionless asset, `R = 1.2` or `0.9` with equal odds, `x_0 = 1`,
/// liquidation value.
pub fn single_asset() -> PathProblem {
    let raw = [
        RawNode::new("r", None, 1.0),
        RawNode::new("u", Some("r"), 0.5),
        RawNode::new("d", Some("r"), 0.5),
    ];
    let (tree, returns) = build(&raw, 1, |id| match id {
        "u" => vec![1.2],
        "d" => vec![0.9],
        _ => vec![1.0],
    });
    let market = MarketData::with_uniform_costs(&tree, returns, 0.0, 0.0, vec![2.0, 2.0]).unwrap();
    liquidation_problem(tree, market, vec![1.0])
}

/// Riskless asset and a binomial risky asset (`u = 1.4`, `d = 0.7`, even
/// odds), frictionless. The first period is deterministic so the portfolio
/// chosen at `t = 1` is the one exposed to the binomial move.
pub fn kelly() -> PathProblem {
    let raw = [
        RawNode::new("r", None, 1.0),
        RawNode::new("s", Some("r"), 1.0),
        RawNode::new("su", Some("s"), 0.5),
        RawNode::new("sd", Some("s"), 0.5),
    ];
    let (tree, returns) = build(&raw, 2, |id| match id {
        "su" => vec![1.0, 1.4],
        "sd" => vec![1.0, 0.7],
        _ => vec![1.0, 1.0],
    });
    let market = MarketData::with_uniform_costs(&tree, returns, 0.0, 0.0, vec![3.0; 3]).unwrap();
    liquidation_problem(tree, market, vec![1.0, 0.0])
}

/// Deterministic chain of length `horizon` with `m` assets and small costs.
pub fn chain(horizon: usize, m: usize) -> PathProblem {
    let mut raw = vec![RawNode::new("n0", None, 1.0)];
    for t in 1..=horizon {
        raw.push(RawNode::new(format!("n{t}"), Some(&format!("n{}", t - 1)), 1.0));
    }
    let (tree, returns) = build(&raw, m, |id| {
        let t: usize = id[1..].parse().unwrap();
        (0..m).map(|i| if t == 0 { 1.0 } else { 1.0 + 0.01 * (i + t) as f64 }).collect()
    });
    let market = MarketData::with_uniform_costs(&tree, returns, 0.01, 0.01, vec![2.0; horizon + 1]).unwrap();
    liquidation_problem(tree, market, vec![1.0; m])
}

/// Full binary tree; asset `k` returns `1.05 + 0.02k` up and `0.97 − 0.01k` down.
pub fn binary(horizon: usize, m: usize, cost: f64, mu: f64) -> PathProblem {
    let mut raw = vec![RawNode::new("r", None, 1.0)];
    let mut frontier = vec!["r".to_string()];
    for _ in 0..horizon {
        let mut next = Vec::new();
        for p in &frontier {
            for tag in ["u", "d"] {
                let id = format!("{p}{tag}");
                raw.push(RawNode::new(id.clone(), Some(p), 0.5));
                next.push(id);
            }
        }
        frontier = next;
    }
    let (tree, returns) = build(&raw, m, |id| {
        (0..m)
            .map(|k| match id.chars().last() {
                Some('u') => 1.05 + 0.02 * k as f64,
                Some('d') => 0.97 - 0.01 * k as f64,
                _ => 1.0,
            })
            .collect()
    });
    let market = MarketData::with_uniform_costs(&tree, returns, cost, cost, vec![mu; horizon + 1]).unwrap();
    liquidation_problem(tree, market, vec![1.0; m])
}

fn liquidation_problem(tree: ScenarioTree, market: MarketData, x0: Vec<f64>) -> PathProblem {
    let constants = crate::market::market_constants(&market).expect("fixture margins are loose enough");
    let objective = TerminalObjective::liquidation(&market, &constants);
    PathProblem::new(tree, market, objective, x0).expect("fixture start is interior")
}
