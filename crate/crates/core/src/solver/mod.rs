//! Interior-point solver for the log-optimal path.
//!
//! The problem `max E ln ψ_N(x_N)` over paths started at a fixed `x_0` is
//! lifted to a polyhedral program (see [`program`]) and solved with a
//! primal log barrier, `τ ← τ/5` between centerings. Multipliers are
//! `λ_i = τ w_i / g_i`.

pub mod program;
mod newton;

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market::{market_constants, slater_path_from, MarketConstants, MarketData, MarketError};
use crate::objective::TerminalObjective;
use crate::tree::{AdaptedVector, ScenarioTree};
use program::{Program, RowGroup};

pub use program::ProgramSummary;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("margin too tight at date {t}: mu = {mu} does not exceed nu = {nu}")]
    MarginTooTight { t: usize, mu: f64, nu: f64 },
    #[error("x_0 is not interior to the margin cone: {0}")]
    InfeasibleStart(String),
    #[error("no convergence after {} Newton steps (stationarity {:e})", .0.iterations, .0.residuals.stationarity)]
    NonConvergence(Box<Solution>),
    #[error("solution does not match the problem: {0}")]
    Shape(String),
    #[error(transparent)]
    Market(MarketError),
}

impl From<MarketError> for SolverError {
    fn from(e: MarketError) -> Self {
        match e {
            MarketError::MarginTooTight { t, mu, nu } => SolverError::MarginTooTight { t, mu, nu },
            e => SolverError::Market(e),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Kept for reproducible tooling around the solver; the solve itself is
    /// deterministic and ignores it.
    pub seed: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 500,
            seed: 0,
        }
    }
}

/// A validated problem instance with its market constants.
#[derive(Debug, Clone)]
pub struct PathProblem {
    pub tree: ScenarioTree,
    pub market: MarketData,
    pub objective: TerminalObjective,
    pub x0: Vec<f64>,
    pub constants: MarketConstants,
    /// Interiority radius of `x_0`.
    pub start_radius: f64,
}

impl PathProblem {
    pub fn new(
        tree: ScenarioTree,
        market: MarketData,
        objective: TerminalObjective,
        x0: Vec<f64>,
    ) -> Result<Self, SolverError> {
        let constants = market_constants(&market)?;
        let start_radius = market.interior_radius(tree.root(), &x0)?;
        if !(start_radius > 0.0) {
            return Err(SolverError::InfeasibleStart(format!(
                "margin residual {:e}",
                market.margin_residual(tree.root(), &x0)?
            )));
        }
        Ok(Self {
            tree,
            market,
            objective,
            x0,
            constants,
            start_radius,
        })
    }

    pub fn assemble(&self) -> ProgramSummary {
        self.program().summary()
    }

    pub(crate) fn program(&self) -> Program {
        Program::build(&self.tree, &self.market, &self.objective, &self.x0)
    }
}

/// KKT residuals in max-norm. Stationarity is divided by node probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    /// Largest violation of a margin, self-financing or lifted row.
    pub primal: f64,
    pub stationarity: f64,
    /// Largest `λ_i g_i / P(node)`.
    pub complementarity: f64,
    /// Most negative multiplier, as a positive number (0 if none).
    pub dual_sign: f64,
    /// `Σ λ_i g_i`.
    pub gap: f64,
    pub worst_primal_node: Option<String>,
    pub worst_stationarity_node: Option<String>,
}

impl KktResiduals {
    pub fn within(&self, tol: f64) -> bool {
        self.primal <= tol && self.stationarity <= tol && self.complementarity <= tol && self.dual_sign <= tol
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub tau: f64,
    pub merit: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    /// `x̄_t` at depth `t`.
    pub path: Vec<AdaptedVector>,
    /// Split variables per node (empty at the root).
    pub splits: Vec<Vec<f64>>,
    /// One multiplier per lifted row, in assembly order.
    pub multipliers: Vec<f64>,
    /// `E ln ψ_N(x̄_N)`.
    pub objective: f64,
    pub residuals: KktResiduals,
    pub iterations: usize,
    pub tau: f64,
    pub wall_time: f64,
    pub converged: bool,
    /// Some leaf value fell below `1e-300`.
    pub floor_active: bool,
    pub history: Vec<IterRecord>,
}

fn unpack(p: &Program, tree: &ScenarioTree, z: &[Vec<f64>]) -> (Vec<AdaptedVector>, Vec<Vec<f64>>) {
    let m = p.m;
    let path = (0..=tree.horizon())
        .map(|t| AdaptedVector::from_fn(tree, t, m, |n| z[n][..m].to_vec()))
        .collect();
    let splits = (0..z.len())
        .map(|n| if n == 0 { vec![] } else { z[n][m..].to_vec() })
        .collect();
    (path, splits)
}

fn pack(p: &Program, tree: &ScenarioTree, path: &[AdaptedVector], splits: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, SolverError> {
    if path.len() != tree.horizon() + 1 || splits.len() != tree.len() {
        return Err(SolverError::Shape("path or split count".into()));
    }
    let mut z = Vec::with_capacity(tree.len());
    for n in 0..tree.len() {
        let t = tree.depth(n);
        if path[t].len() != tree.count_at(t) || path[t].dim() != p.m {
            return Err(SolverError::Shape(format!("path at depth {t}")));
        }
        let mut b = path[t].at(tree, n).to_vec();
        if n > 0 {
            if splits[n].len() + p.m != p.layout[n].len {
                return Err(SolverError::Shape(format!("splits at node {:?}", tree.node(n).id)));
            }
            b.extend_from_slice(&splits[n]);
        }
        z.push(b);
    }
    Ok(z)
}

fn residuals(
    problem: &PathProblem,
    p: &Program,
    z: &[Vec<f64>],
    lambda: &[f64],
) -> KktResiduals {
    let tree = &problem.tree;
    let market = &problem.market;
    let m = p.m;
    let g = p.row_values(z);

    let mut primal = (0.0, None);
    let bump = |v: f64, n: usize, acc: &mut (f64, Option<usize>)| {
        if v > acc.0 {
            *acc = (v, Some(n));
        }
    };
    for (i, row) in p.rows.iter().enumerate() {
        bump(-g[i], row.node, &mut primal);
    }
    // Direct checks on the path itself, independent of the lift.
    for n in 0..tree.len() {
        let x = &z[n][..m];
        bump(-market.margin_residual(n, x).unwrap_or(f64::NEG_INFINITY), n, &mut primal);
        if n > 0 {
            let xp = p.parent_x(z, n);
            let psi = market.self_financing_value(n, xp, x).unwrap_or(f64::NEG_INFINITY);
            bump(-psi, n, &mut primal);
        }
    }
    for n in p.leaves() {
        let phi = problem.objective.value(market, n, tree.slot(n), &z[n][..m]);
        bump(-phi, n, &mut primal);
    }

    let grad = newton::lagrangian_gradient(p, z, lambda);
    let mut stat = (0.0, None);
    for n in 1..tree.len() {
        let v = grad[n].iter().fold(0.0f64, |a, x| a.max(x.abs())) / p.prob[n];
        bump(v, n, &mut stat);
    }
    let complementarity = (0..g.len())
        .map(|i| (lambda[i] * g[i]).abs() / p.weight(i))
        .fold(0.0, f64::max);
    let dual_sign = lambda.iter().fold(0.0f64, |a, l| a.max(-l));
    let gap = (0..g.len()).map(|i| lambda[i] * g[i]).sum();
    let id = |n: Option<usize>| n.map(|n| tree.node(n).id.clone());
    KktResiduals {
        primal: primal.0,
        stationarity: stat.0,
        complementarity,
        dual_sign,
        gap,
        worst_primal_node: id(primal.1),
        worst_stationarity_node: id(stat.1),
    }
}

/// Recomputes every KKT residual of `solution` from scratch.
pub fn kkt_report(problem: &PathProblem, solution: &Solution) -> Result<KktResiduals, SolverError> {
    let p = problem.program();
    let z = pack(&p, &problem.tree, &solution.path, &solution.splits)?;
    if solution.multipliers.len() != p.rows.len() {
        return Err(SolverError::Shape(format!(
            "{} multipliers for {} rows",
            solution.multipliers.len(),
            p.rows.len()
        )));
    }
    Ok(residuals(problem, &p, &z, &solution.multipliers))
}

/// Raw dual ingredients of a solution.
///
/// `edge[n] = Σ λ_i ∂g_i/∂x_parent` over the self-financing rows of node
/// `n`; `terminal[n]` (leaves only) is `(φ/P)·∇_x[P ln φ + Σ λ g]` over the
/// leaf's valuation rows, the supergradient of `ψ_N` the multipliers select.
pub(crate) struct DualIngredients {
    pub edge: Vec<Vec<f64>>,
    pub terminal: Vec<Vec<f64>>,
}

pub(crate) fn dual_ingredients(problem: &PathProblem, solution: &Solution) -> Result<DualIngredients, SolverError> {
    let p = problem.program();
    let z = pack(&p, &problem.tree, &solution.path, &solution.splits)?;
    if solution.multipliers.len() != p.rows.len() {
        return Err(SolverError::Shape("multiplier count".into()));
    }
    let m = p.m;
    let lambda = &solution.multipliers;
    let mut edge = vec![vec![0.0; m]; p.node_count()];
    let mut terminal = vec![vec![]; p.node_count()];
    for (i, row) in p.rows.iter().enumerate() {
        if row.group == RowGroup::Edge {
            for &(j, c) in &row.parent {
                edge[row.node][j] += lambda[i] * c;
            }
        }
    }
    for leaf in p.leaves() {
        let phi = p.leaf_value(&z, leaf);
        let prob = p.prob[leaf];
        let (d, _) = p.leaf_derivatives(&z, leaf);
        let mut g = d[..m].to_vec();
        for i in p.node_rows[leaf].clone() {
            let row = &p.rows[i];
            if row.group == RowGroup::Objective {
                for &(j, c) in row.local.iter().filter(|&&(j, _)| j < m) {
                    g[j] += phi / prob * lambda[i] * c;
                }
            }
        }
        terminal[leaf] = g;
    }
    Ok(DualIngredients { edge, terminal })
}

/// Maximizes `E ln ψ_N(x_N)` over paths started at `problem.x0`.
pub fn solve_log_optimal(problem: &PathProblem, opts: &SolveOptions) -> Result<Solution, SolverError> {
    let clock = Instant::now();
    let tree = &problem.tree;
    let p = problem.program();
    let slater = slater_path_from(tree, &problem.market, &problem.constants, &problem.x0)?;
    let start: Vec<Vec<f64>> = (0..tree.len())
        .map(|n| slater.path[tree.depth(n)].at(tree, n).to_vec())
        .collect();
    let mut z = p.lift_path(&start);
    let total_weight = p.total_weight();

    let mut tau = 1.0;
    let mut lambda: Vec<f64> = {
        let g = p.row_values(&z);
        (0..g.len()).map(|i| tau * p.weight(i) / g[i]).collect()
    };
    let mut iterations = 0;
    let mut history = Vec::new();
    let mut exhausted = false;
    let stationarity = |z: &[Vec<f64>], lambda: &[f64]| {
        let grad = newton::lagrangian_gradient(&p, z, lambda);
        (1..p.node_count())
            .map(|n| grad[n].iter().fold(0.0f64, |a, x| a.max(x.abs())) / p.prob[n])
            .fold(0.0, f64::max)
    };
    'outer: loop {
        let last = tau * total_weight <= opts.tol;
        let mut best = f64::INFINITY;
        let mut idle = 0;
        loop {
            if iterations >= opts.max_iter {
                exhausted = true;
                break 'outer;
            }
            let g = p.row_values(&z);
            let d = newton::derivatives(&p, &z, &g, tau, &lambda);
            let grad = d.grad.clone();
            let Some(dz) = newton::newton_direction(&p, d) else {
                log::warn!("Newton system lost definiteness at tau = {tau:e}");
                break 'outer;
            };
            let decrement: f64 = (1..p.node_count())
                .map(|n| grad[n].iter().zip(&dz[n]).map(|(a, b)| a * b).sum::<f64>())
                .sum();
            // Proximity to the central point, invariant under τ and scale.
            let centered = decrement / tau <= 1e-3;
            if !last && centered {
                break;
            }
            if last && centered {
                let stat = stationarity(&z, &lambda);
                if stat <= 0.1 * opts.tol {
                    break 'outer;
                }
                if stat < 0.5 * best {
                    best = stat;
                    idle = 0;
                } else {
                    idle += 1;
                    if idle > 20 {
                        log::debug!("stationarity stalled at {stat:e}");
                        break 'outer;
                    }
                }
            }
            let dl = newton::dual_direction(&p, &g, tau, &lambda, &dz);
            let f0 = newton::merit(&p, &z, tau).expect("iterate stays interior");
            let mut s = newton::max_step(&p, &z, &dz);
            let accepted = loop {
                if s < 1e-14 {
                    break None;
                }
                let trial = newton::step(&z, &dz, s);
                match newton::merit(&p, &trial, tau) {
                    Some(f) if f >= f0 + 1e-4 * s * decrement - 1e-13 * (1.0 + f0.abs()) => break Some((trial, f, s)),
                    _ => s *= 0.5,
                }
            };
            let Some((next, f, s)) = accepted else {
                log::debug!("line search stalled at tau = {tau:e}");
                if last {
                    break 'outer;
                }
                break;
            };
            // Dual step: fraction to the boundary, then keep λg within a
            // factor 100 of its central value τw.
            let sd = (0..dl.len())
                .filter(|&i| dl[i] < 0.0)
                .map(|i| 0.99 * lambda[i] / -dl[i])
                .fold(1.0f64, f64::min)
                .min(s.max(if last { 1.0 } else { s }));
            z = next;
            let g = p.row_values(&z);
            for i in 0..lambda.len() {
                let central = tau * p.weight(i) / g[i];
                lambda[i] = (lambda[i] + sd * dl[i]).clamp(0.01 * central, 100.0 * central);
            }
            iterations += 1;
            log::trace!("tau {tau:.3e} decrement {decrement:.3e} steps {s:.3e}/{sd:.3e}");
            history.push(IterRecord {
                tau,
                merit: f,
                objective: newton::lifted_objective(&p, &z),
            });
        }
        if last {
            break;
        }
        tau *= 0.2;
    }

    let multipliers = lambda;
    let residuals = residuals(problem, &p, &z, &multipliers);
    let (path, splits) = unpack(&p, tree, &z);
    let x_n = &path[tree.horizon()];
    let objective = problem.objective.log_objective(tree, &problem.market, x_n);
    let floor_active = tree
        .leaves()
        .any(|n| problem.objective.value(&problem.market, n, tree.slot(n), x_n.at(tree, n)) < 1e-300);
    let converged = !exhausted && tau * total_weight <= opts.tol && residuals.within(opts.tol);
    let solution = Solution {
        path,
        splits,
        multipliers,
        objective,
        residuals,
        iterations,
        tau,
        wall_time: clock.elapsed().as_secs_f64(),
        converged,
        floor_active,
        history,
    };
    log::info!(
        "solved: F = {:.10}, {} steps, stationarity {:e}, converged = {}",
        solution.objective,
        solution.iterations,
        solution.residuals.stationarity,
        solution.converged
    );
    if converged {
        Ok(solution)
    } else {
        Err(SolverError::NonConvergence(Box::new(solution)))
    }
}
