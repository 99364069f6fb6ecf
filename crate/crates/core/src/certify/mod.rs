//! Dual price paths and rapidity certificates.
//!
//! A dual path is `p_1, …, p_{N+1}` with `p_t` stored at depth `t` and
//! `p_{N+1}` stored at depth `N`. It supports a path `x` when every `p_t` is
//! in the dual margin cone, `E_t[p_{t+1}]·b ≤ p_t·a` for all `(a, b) ∈ Z_t`,
//! and `p_{t+1}·x_t = 1` everywhere.

mod checks;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market::{dual_cone_violation, MarketData, MarketError};
use crate::solver::{dual_ingredients, kkt_report, PathProblem, Solution, SolverError};
use crate::tree::{AdaptedVector, ScenarioTree, TreeError};
use crate::vecops::dot;

pub use checks::{
    check_equivalences, corrupt, growth_dominance, reconstruct_dual, supermartingale_check, CheckResult,
    Corruption, EquivalenceReport, GrowthRow, GrowthTable, SupermartingaleReport,
};

/// Default tolerance for certificates.
pub const CERT_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum CertifyError {
    #[error("solution is not certified: {0}")]
    NotCertified(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("l·x vanishes at node {node:?} (date {t})")]
    ZeroDenominator { node: String, t: usize },
    #[error("p_t·y_(t-1) = {value:e} is not positive at node {node:?} (date {t})")]
    NonpositiveDenominator { node: String, t: usize, value: f64 },
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualPath {
    /// `prices[t − 1]` is `p_t`.
    pub prices: Vec<AdaptedVector>,
}

impl DualPath {
    /// `N`, one less than the number of price layers.
    pub fn horizon(&self) -> usize {
        self.prices.len() - 1
    }

    pub fn p(&self, t: usize) -> &AdaptedVector {
        &self.prices[t - 1]
    }

    pub fn p_mut(&mut self, t: usize) -> &mut AdaptedVector {
        &mut self.prices[t - 1]
    }

    /// `p̄_{t+1} = E_t[p_{t+1}]` at depth `t` (`p_{N+1}` itself at `t = N`).
    pub fn p_bar(&self, tree: &ScenarioTree, t: usize) -> Result<AdaptedVector, TreeError> {
        tree.conditional_expectation_at(self.p(t + 1), t + 1)
    }

    pub fn check_shape(&self, tree: &ScenarioTree, m: usize) -> Result<(), CertifyError> {
        let n = tree.horizon();
        if self.prices.len() != n + 1 {
            return Err(CertifyError::ShapeMismatch(format!(
                "{} price layers for horizon {n}",
                self.prices.len()
            )));
        }
        for t in 1..=n + 1 {
            let p = self.p(t);
            let depth = t.min(n);
            if p.depth() != depth || p.dim() != m || p.len() != tree.count_at(depth) {
                return Err(CertifyError::ShapeMismatch(format!("p_{t}")));
            }
        }
        Ok(())
    }
}

pub(crate) fn check_path_shape(tree: &ScenarioTree, m: usize, path: &[AdaptedVector]) -> Result<(), CertifyError> {
    if path.len() != tree.horizon() + 1 {
        return Err(CertifyError::ShapeMismatch(format!(
            "path has {} dates, horizon is {}",
            path.len(),
            tree.horizon()
        )));
    }
    for (t, x) in path.iter().enumerate() {
        if x.depth() != t || x.dim() != m || x.len() != tree.count_at(t) {
            return Err(CertifyError::ShapeMismatch(format!("path at date {t}")));
        }
    }
    Ok(())
}

/// Dual path from a converged solve; refuses solutions whose recomputed KKT
/// residuals exceed [`CERT_TOL`].
pub fn extract_dual(problem: &PathProblem, solution: &Solution) -> Result<DualPath, CertifyError> {
    if !solution.converged {
        return Err(CertifyError::NotCertified("the solve did not converge".into()));
    }
    let r = kkt_report(problem, solution)?;
    if !r.within(CERT_TOL) {
        return Err(CertifyError::NotCertified(format!(
            "KKT residuals primal {:e}, stationarity {:e}, complementarity {:e}",
            r.primal, r.stationarity, r.complementarity
        )));
    }
    extract_dual_unchecked(problem, solution)
}

/// As [`extract_dual`] without the convergence gate.
///
/// `p_t(n) = Σ λ_i ∂g_i/∂x_{t−1} / P(n)` over the self-financing rows at
/// `n`; `p_{N+1} = ĝ/(ĝ·x̄_N)` with `ĝ` the supergradient of `ψ_N` selected
/// by the valuation multipliers.
pub fn extract_dual_unchecked(problem: &PathProblem, solution: &Solution) -> Result<DualPath, CertifyError> {
    let tree = &problem.tree;
    let m = problem.market.assets();
    let n = tree.horizon();
    let parts = dual_ingredients(problem, solution)?;
    let mut prices = Vec::with_capacity(n + 1);
    for t in 1..=n {
        prices.push(AdaptedVector::from_fn(tree, t, m, |node| {
            let w = tree.probability(node);
            parts.edge[node].iter().map(|v| v / w).collect()
        }));
    }
    let x_n = &solution.path[n];
    let mut last = Vec::with_capacity(tree.count_at(n));
    for leaf in tree.leaves() {
        let g = &parts.terminal[leaf];
        let pairing = dot(g, x_n.at(tree, leaf));
        if !(pairing > 0.0) {
            return Err(CertifyError::NotCertified(format!(
                "terminal price pairs to {pairing:e} at leaf {:?}",
                tree.node(leaf).id
            )));
        }
        last.push(g.iter().map(|v| v / pairing).collect());
    }
    prices.push(AdaptedVector::from_rows(tree, n, last)?);
    Ok(DualPath { prices })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Check {
    /// The path itself leaves the cones: `x_0 ∉ X_0` or `(x_{t−1}, x_t) ∉ Z_t`.
    Feasibility,
    Normalization,
    DualCone,
    Transition,
    Supermartingale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub check: Check,
    pub t: usize,
    pub node: String,
    pub value: f64,
    /// The offending `(a, b) ∈ Z_t` for transition failures.
    pub pair: Option<(Vec<f64>, Vec<f64>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Verdict {
    Certified,
    Refuted(Witness),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeResidual {
    pub t: usize,
    pub node: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RapidityCertificate {
    pub tol: f64,
    /// Largest cone violation of the path at date `t = 0..=N`.
    pub feasibility: Vec<f64>,
    /// `max |p_{t+1}·x_t − 1|` over the nodes feeding date `t + 1`, for
    /// `t = 0..=N`.
    pub normalization: Vec<f64>,
    /// `max (−min_{g} p_t·g)⁺` over unit generators of the margin cone, for
    /// `t = 1..=N+1` (index `t − 1`).
    pub dual_cone: Vec<f64>,
    /// Transition LP value at every non-root node.
    pub transition: Vec<NodeResidual>,
    /// Largest sampled supermartingale violation, when competitors were run.
    pub supermartingale: Option<f64>,
    pub notes: Vec<String>,
    pub verdict: Verdict,
}

impl RapidityCertificate {
    pub fn certified(&self) -> bool {
        self.verdict == Verdict::Certified
    }

    pub fn max_transition(&self) -> f64 {
        self.transition.iter().map(|r| r.value).fold(0.0, f64::max)
    }

    pub fn max_feasibility(&self) -> f64 {
        self.feasibility.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_normalization(&self) -> f64 {
        self.normalization.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_dual_cone(&self) -> f64 {
        self.dual_cone.iter().copied().fold(0.0, f64::max)
    }

    /// Folds a sampled supermartingale residual into the verdict.
    pub fn attach_supermartingale(&mut self, report: &SupermartingaleReport, tol: f64) {
        let worst = report.conditional.max(report.tower);
        self.supermartingale = Some(self.supermartingale.map_or(worst, |v| v.max(worst)));
        if self.verdict == Verdict::Certified && worst > tol {
            let (t, node) = report.worst.clone().unwrap_or((0, String::new()));
            self.verdict = Verdict::Refuted(Witness {
                check: Check::Supermartingale,
                t,
                node,
                value: worst,
                pair: None,
            });
        }
    }
}

/// Checks every defining property of a supporting dual path.
pub fn verify_rapid(
    path: &[AdaptedVector],
    dual: &DualPath,
    tree: &ScenarioTree,
    market: &MarketData,
    tol: f64,
) -> Result<RapidityCertificate, CertifyError> {
    let m = market.assets();
    let n = tree.horizon();
    check_path_shape(tree, m, path)?;
    dual.check_shape(tree, m)?;
    let id = |node: usize| tree.node(node).id.clone();
    // Worst offender per check; the verdict reports the first failing check
    // in the order feasibility, normalization, dual cone, transition.
    let mut worst: [Option<Witness>; 4] = [None, None, None, None];
    let flag = |w: Witness, slot: &mut Option<Witness>| {
        if w.value > tol && slot.as_ref().map_or(true, |f| w.value > f.value) {
            *slot = Some(w);
        }
    };

    let mut feasibility = vec![0.0; n + 1];
    for t in 0..=n {
        for c in tree.nodes_at(t) {
            let v = match tree.parent(c) {
                None => -market.margin_residual(c, path[0].at(tree, c))?,
                Some(par) => {
                    let z = market.in_z(c, path[t - 1].at(tree, par), path[t].at(tree, c), 0.0)?;
                    (-z.parent_margin).max(-z.child_margin).max(-z.psi)
                }
            }
            .max(0.0);
            feasibility[t] = f64::max(feasibility[t], v);
            flag(
                Witness {
                    check: Check::Feasibility,
                    t,
                    node: id(c),
                    value: v,
                    pair: None,
                },
                &mut worst[0],
            );
        }
    }

    let mut normalization = vec![0.0; n + 1];
    for t in 0..=n {
        let pairs: Vec<(usize, usize)> = if t < n {
            tree.nodes_at(t + 1).map(|c| (c, tree.parent(c).unwrap())).collect()
        } else {
            tree.nodes_at(n).map(|c| (c, c)).collect()
        };
        for (c, src) in pairs {
            let v = (dot(dual.p(t + 1).at(tree, c), path[t].at(tree, src)) - 1.0).abs();
            if v > normalization[t] {
                normalization[t] = v;
            }
            flag(
                Witness {
                    check: Check::Normalization,
                    t,
                    node: id(c),
                    value: v,
                    pair: None,
                },
                &mut worst[1],
            );
        }
    }

    let mut dual_cone = vec![0.0; n + 1];
    for t in 1..=n + 1 {
        let depth = t.min(n);
        for c in tree.nodes_at(depth) {
            let cone = if t <= n { tree.parent(c).unwrap() } else { c };
            let v = (-market.dual_cone_margin(cone, dual.p(t).at(tree, c))?).max(0.0);
            if v > dual_cone[t - 1] {
                dual_cone[t - 1] = v;
            }
            flag(
                Witness {
                    check: Check::DualCone,
                    t,
                    node: id(c),
                    value: v,
                    pair: None,
                },
                &mut worst[2],
            );
        }
    }

    let mut transition = Vec::new();
    for t in 1..=n {
        let p_bar = dual.p_bar(tree, t)?;
        for c in tree.nodes_at(t) {
            let v = dual_cone_violation(market, c, dual.p(t).at(tree, c), p_bar.at(tree, c))?;
            let value = v.value.max(0.0);
            transition.push(NodeResidual { t, node: id(c), value });
            flag(
                Witness {
                    check: Check::Transition,
                    t,
                    node: id(c),
                    value,
                    pair: Some((v.a, v.b)),
                },
                &mut worst[3],
            );
        }
    }

    Ok(RapidityCertificate {
        tol,
        feasibility,
        normalization,
        dual_cone,
        transition,
        supermartingale: None,
        notes: vec!["singular parts of the price functionals vanish on a finite tree".into()],
        verdict: worst.into_iter().flatten().next().map_or(Verdict::Certified, Verdict::Refuted),
    })
}

/// Options for [`certify`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertifyOptions {
    pub tol: f64,
    /// Tolerance for the sampled supermartingale inequalities.
    pub sample_tol: f64,
    pub competitors: usize,
    pub seed: u64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            tol: CERT_TOL,
            sample_tol: 1e-8,
            competitors: 200,
            seed: 0,
        }
    }
}

/// Extract, verify, and stress the dual against sampled competitor paths.
pub fn certify(
    problem: &PathProblem,
    solution: &Solution,
    opts: &CertifyOptions,
) -> Result<(DualPath, RapidityCertificate), CertifyError> {
    let dual = extract_dual(problem, solution)?;
    let cert = certify_dual(problem, &solution.path, &dual, opts)?;
    Ok((dual, cert))
}

/// [`verify_rapid`] plus the supermartingale check on `path` itself and on
/// `opts.competitors` sampled paths. Deterministic given `opts.seed`.
pub fn certify_dual(
    problem: &PathProblem,
    path: &[AdaptedVector],
    dual: &DualPath,
    opts: &CertifyOptions,
) -> Result<RapidityCertificate, CertifyError> {
    use rand::SeedableRng;
    let mut cert = verify_rapid(path, dual, &problem.tree, &problem.market, opts.tol)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(opts.seed);
    let own = supermartingale_check(dual, path, &problem.tree)?;
    cert.attach_supermartingale(&own, opts.sample_tol);
    for _ in 0..opts.competitors {
        let y = crate::sampling::random_path(
            &mut rng,
            &problem.tree,
            &problem.market,
            &problem.constants,
            &problem.x0,
            Some(path),
        )?;
        let r = supermartingale_check(dual, &y, &problem.tree)?;
        cert.attach_supermartingale(&r, opts.sample_tol);
    }
    Ok(cert)
}
