//! Sampled consequences of a supporting dual: the four equivalent one-period
//! forms, the supermartingale property, conditional growth tables, and the
//! reconstruction of a dual from arbitrary positive functionals.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_path_shape, verify_rapid, CertifyError, DualPath, RapidityCertificate};
use crate::market::{dual_cone_violation, MarketConstants, MarketData};
use crate::sampling::random_pair;
use crate::tree::{AdaptedVector, ScenarioTree};
use crate::vecops::{dot, norm1};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupermartingaleReport {
    /// `max (p̄_{t+1}·y_t − p_t·y_{t−1})` over non-root nodes.
    pub conditional: f64,
    /// `max (E_{t−1}[p̄_{t+1}·y_t] − p̄_t·y_{t−1})` over non-leaf nodes.
    pub tower: f64,
    /// Largest absolute deviation in either family (zero for a martingale).
    pub max_abs: f64,
    /// `E p_{t+1}y_t − E p_t y_{t−1}` for `t = 1..=N`.
    pub unconditional: Vec<f64>,
    pub worst: Option<(usize, String)>,
}

/// Both one-step inequalities behind the supermartingale property of
/// `p_{t+1}·y_t`, nodewise.
pub fn supermartingale_check(
    dual: &DualPath,
    y: &[AdaptedVector],
    tree: &ScenarioTree,
) -> Result<SupermartingaleReport, CertifyError> {
    let n = tree.horizon();
    let m = y.first().map_or(0, |v| v.dim());
    check_path_shape(tree, m, y)?;
    dual.check_shape(tree, m)?;
    let mut rep = SupermartingaleReport {
        conditional: f64::NEG_INFINITY,
        tower: f64::NEG_INFINITY,
        max_abs: 0.0,
        unconditional: vec![0.0; n],
        worst: None,
    };
    let mut worst_val = f64::NEG_INFINITY;
    // value(t, c) = p̄_{t+1}(c)·y_t(c) at depth t.
    let mut value = Vec::with_capacity(n + 1);
    for t in 0..=n {
        let pb = if t == 0 { None } else { Some(dual.p_bar(tree, t)?) };
        value.push(AdaptedVector::from_fn(tree, t, 1, |c| {
            vec![pb.as_ref().map_or(0.0, |pb| dot(pb.at(tree, c), y[t].at(tree, c)))]
        }));
    }
    for t in 1..=n {
        for c in tree.nodes_at(t) {
            let parent = tree.parent(c).unwrap();
            let d = value[t].at(tree, c)[0] - dot(dual.p(t).at(tree, c), y[t - 1].at(tree, parent));
            rep.conditional = rep.conditional.max(d);
            rep.max_abs = rep.max_abs.max(d.abs());
            rep.unconditional[t - 1] += tree.probability(c) * d;
            if d > worst_val {
                worst_val = d;
                rep.worst = Some((t, tree.node(c).id.clone()));
            }
        }
        // E_{t−1}[p̄_{t+1}·y_t] against p̄_t·y_{t−1} at depth t − 1.
        let lhs = tree.conditional_expectation(&value[t])?;
        let p_bar_t = dual.p_bar(tree, t - 1)?;
        for node in tree.nodes_at(t - 1) {
            let d = lhs.at(tree, node)[0] - dot(p_bar_t.at(tree, node), y[t - 1].at(tree, node));
            rep.tower = rep.tower.max(d);
            rep.max_abs = rep.max_abs.max(d.abs());
            if d > worst_val {
                worst_val = d;
                rep.worst = Some((t - 1, tree.node(node).id.clone()));
            }
        }
    }
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthRow {
    pub t: usize,
    pub node_count: usize,
    pub max: f64,
    /// Probability-weighted mean over the date-`t` nodes.
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthTable {
    pub rows: Vec<GrowthRow>,
    /// `E_t(p_{t+1}y_t / p_t y_{t−1})` per date-`t` node, `t = 1..=N`.
    pub entries: Vec<Vec<f64>>,
    /// Largest `|ratio − 1|` of the rapid path itself.
    pub reference_deviation: f64,
}

fn growth_ratios(dual: &DualPath, y: &[AdaptedVector], tree: &ScenarioTree) -> Result<Vec<Vec<f64>>, CertifyError> {
    let mut out = Vec::new();
    for t in 1..=tree.horizon() {
        let pb = dual.p_bar(tree, t)?;
        let mut row = Vec::with_capacity(tree.count_at(t));
        for c in tree.nodes_at(t) {
            let parent = tree.parent(c).unwrap();
            let den = dot(dual.p(t).at(tree, c), y[t - 1].at(tree, parent));
            if !(den > 0.0) {
                return Err(CertifyError::NonpositiveDenominator {
                    node: tree.node(c).id.clone(),
                    t,
                    value: den,
                });
            }
            row.push(dot(pb.at(tree, c), y[t].at(tree, c)) / den);
        }
        out.push(row);
    }
    Ok(out)
}

/// Conditional growth of `y` measured in the dual prices, per date.
pub fn growth_dominance(
    dual: &DualPath,
    x: &[AdaptedVector],
    y: &[AdaptedVector],
    tree: &ScenarioTree,
) -> Result<GrowthTable, CertifyError> {
    let m = x.first().map_or(0, |v| v.dim());
    check_path_shape(tree, m, x)?;
    check_path_shape(tree, m, y)?;
    dual.check_shape(tree, m)?;
    let reference = growth_ratios(dual, x, tree)?;
    let reference_deviation = reference
        .iter()
        .flatten()
        .map(|r| (r - 1.0).abs())
        .fold(0.0, f64::max);
    let entries = growth_ratios(dual, y, tree)?;
    let rows = entries
        .iter()
        .enumerate()
        .map(|(k, row)| {
            let t = k + 1;
            GrowthRow {
                t,
                node_count: row.len(),
                max: row.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                mean: tree.nodes_at(t).zip(row).map(|(c, r)| tree.probability(c) * r).sum(),
            }
        })
        .collect();
    Ok(GrowthTable {
        rows,
        entries,
        reference_deviation,
    })
}

/// Normalizes positive functionals `l_1, …, l_{N+1}` against `x` into a dual
/// path (`p_{t+1} = l_{t+1}/(l_{t+1}·x_t)`) and verifies it.
pub fn reconstruct_dual(
    l: &DualPath,
    x: &[AdaptedVector],
    tree: &ScenarioTree,
    market: &MarketData,
    tol: f64,
) -> Result<(DualPath, RapidityCertificate), CertifyError> {
    let m = market.assets();
    let n = tree.horizon();
    check_path_shape(tree, m, x)?;
    l.check_shape(tree, m)?;
    let mut prices = Vec::with_capacity(n + 1);
    for t in 1..=n + 1 {
        let depth = t.min(n);
        let mut rows = Vec::with_capacity(tree.count_at(depth));
        for c in tree.nodes_at(depth) {
            let src = if t <= n { tree.parent(c).unwrap() } else { c };
            let lc = l.p(t).at(tree, c);
            let den = dot(lc, x[t - 1].at(tree, src));
            if !(den > 0.0) {
                return Err(CertifyError::ZeroDenominator {
                    node: tree.node(c).id.clone(),
                    t,
                });
            }
            rows.push(lc.iter().map(|v| v / den).collect());
        }
        prices.push(AdaptedVector::from_rows(tree, depth, rows)?);
    }
    let dual = DualPath { prices };
    let cert = verify_rapid(x, &dual, tree, market, tol)?;
    Ok((dual, cert))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub pass: bool,
    /// Largest excess over the bound (≤ 0 when passing with room).
    pub worst: f64,
    /// Sample index or node id of the worst case.
    pub at: Option<String>,
}

impl CheckResult {
    fn new() -> Self {
        Self {
            pass: true,
            worst: f64::NEG_INFINITY,
            at: None,
        }
    }

    fn record(&mut self, excess: f64, tol: f64, at: impl FnOnce() -> String) {
        if excess > self.worst {
            self.worst = excess;
            self.at = Some(at());
        }
        if excess > tol {
            self.pass = false;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub t: usize,
    pub samples: usize,
    /// Samples with `p_t·x > 0` everywhere, used by (I) and (II).
    pub positive_samples: usize,
    /// `E(p_{t+1}y / p_t x) ≤ 1`.
    pub ratio: CheckResult,
    /// `E ln(p_{t+1}y / p_t x) ≤ 0`.
    pub log_ratio: CheckResult,
    /// `E p_{t+1}y ≤ E p_t x`.
    pub expectation: CheckResult,
    /// Nodewise transition LP.
    pub nodewise: CheckResult,
    /// Largest deviation from equality at `(x, y) = (x_{t−1}, x_t)`.
    pub rapid_equality: f64,
    pub agree: bool,
}

fn pair_terms(
    tree: &ScenarioTree,
    t: usize,
    p: &AdaptedVector,
    p_bar: &AdaptedVector,
    x: &[Vec<f64>],
    y: &[Vec<f64>],
) -> (Vec<f64>, Vec<f64>) {
    tree.nodes_at(t)
        .enumerate()
        .map(|(k, c)| (dot(p.at(tree, c), &x[k]), dot(p_bar.at(tree, c), &y[k])))
        .unzip()
}

/// Evaluates the four equivalent one-period forms at date `t` on `samples`
/// random pairs, the rapid pair itself, and the LP witnesses spliced into
/// the rapid pair one node at a time.
#[allow(clippy::too_many_arguments)]
pub fn check_equivalences(
    tree: &ScenarioTree,
    market: &MarketData,
    constants: &MarketConstants,
    path: &[AdaptedVector],
    dual: &DualPath,
    t: usize,
    samples: usize,
    seed: u64,
    tol: f64,
) -> Result<EquivalenceReport, CertifyError> {
    let m = market.assets();
    check_path_shape(tree, m, path)?;
    dual.check_shape(tree, m)?;
    if t == 0 || t > tree.horizon() {
        return Err(CertifyError::ShapeMismatch(format!("date {t} has no transition")));
    }
    let p = dual.p(t);
    let p_bar = dual.p_bar(tree, t)?;
    let nodes: Vec<usize> = tree.nodes_at(t).collect();
    let probs: Vec<f64> = nodes.iter().map(|&c| tree.probability(c)).collect();
    let rapid_x: Vec<Vec<f64>> = nodes
        .iter()
        .map(|&c| path[t - 1].at(tree, tree.parent(c).unwrap()).to_vec())
        .collect();
    let rapid_y: Vec<Vec<f64>> = nodes.iter().map(|&c| path[t].at(tree, c).to_vec()).collect();

    let mut nodewise = CheckResult::new();
    let mut pairs: Vec<(Vec<Vec<f64>>, Vec<Vec<f64>>)> = vec![(rapid_x.clone(), rapid_y.clone())];
    for (k, &c) in nodes.iter().enumerate() {
        let v = dual_cone_violation(market, c, p.at(tree, c), p_bar.at(tree, c))?;
        nodewise.record(v.value, tol, || tree.node(c).id.clone());
        // Witness spliced into the rapid pair, scaled to its size.
        let size = norm1(&v.a) + norm1(&v.b);
        if v.value > 0.0 && size > 0.0 {
            let s = (norm1(&rapid_x[k]) + norm1(&rapid_y[k])) / size;
            let (mut x, mut y) = (rapid_x.clone(), rapid_y.clone());
            x[k] = v.a.iter().map(|a| s * a).collect();
            y[k] = v.b.iter().map(|b| s * b).collect();
            pairs.push((x, y));
            // Localized: zero elsewhere.
            let mut x0 = vec![vec![0.0; m]; nodes.len()];
            let mut y0 = x0.clone();
            x0[k] = v.a.clone();
            y0[k] = v.b.clone();
            pairs.push((x0, y0));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..samples {
        let (x, y) = random_pair(&mut rng, tree, market, constants, t)?;
        let (mut xs, mut ys): (Vec<Vec<f64>>, Vec<Vec<f64>>) =
            (x.rows().map(<[f64]>::to_vec).collect(), y.rows().map(<[f64]>::to_vec).collect());
        if i % 2 == 1 {
            // Mix with the rapid pair; Z_t is a convex cone.
            for k in 0..nodes.len() {
                for j in 0..m {
                    xs[k][j] += rapid_x[k][j];
                    ys[k][j] += rapid_y[k][j];
                }
            }
        }
        pairs.push((xs, ys));
    }

    let mut ratio = CheckResult::new();
    let mut log_ratio = CheckResult::new();
    let mut expectation = CheckResult::new();
    let mut positive = 0;
    let mut rapid_equality: f64 = 0.0;
    for (i, (x, y)) in pairs.iter().enumerate() {
        let (px, py) = pair_terms(tree, t, p, &p_bar, x, y);
        let ex: f64 = probs.iter().zip(&px).map(|(w, v)| w * v).sum();
        let ey: f64 = probs.iter().zip(&py).map(|(w, v)| w * v).sum();
        let scale = 1.0 + probs.iter().zip(&px).map(|(w, v)| w * v.abs()).sum::<f64>();
        expectation.record((ey - ex) / scale, tol, || format!("sample {i}"));
        let pos = x.iter().zip(&px).all(|(xk, v)| *v > 1e-9 * norm1(xk).max(1e-300));
        let mut r_mean = None;
        if pos {
            positive += 1;
            let r: Vec<f64> = px.iter().zip(&py).map(|(a, b)| b / a).collect();
            let mean: f64 = probs.iter().zip(&r).map(|(w, v)| w * v).sum();
            let logm: f64 = probs
                .iter()
                .zip(&r)
                .map(|(w, v)| if *v > 0.0 { w * v.ln() } else { f64::NEG_INFINITY })
                .sum();
            ratio.record(mean - 1.0, tol, || format!("sample {i}"));
            log_ratio.record(logm, tol, || format!("sample {i}"));
            r_mean = Some((mean, logm));
        }
        if i == 0 {
            rapid_equality = ((ey - ex) / scale).abs();
            if let Some((mean, logm)) = r_mean {
                rapid_equality = rapid_equality.max((mean - 1.0).abs()).max(logm.abs());
            }
        }
    }
    let verdicts = [ratio.pass, log_ratio.pass, expectation.pass, nodewise.pass];
    let agree = verdicts.iter().all(|&v| v == verdicts[0]);
    Ok(EquivalenceReport {
        t,
        samples: pairs.len(),
        positive_samples: positive,
        ratio,
        log_ratio,
        expectation,
        nodewise,
        rapid_equality,
        agree,
    })
}

/// Deliberate damage to a dual at date `t`, each breaking the nodewise
/// transition inequality at the first date-`t` node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Corruption {
    /// `p_{t+1} × 1.5` at the first child (the first leaf when `t = N`).
    InflateNext,
    /// `p_t × 0.5`.
    DeflateCurrent,
    /// Lower the coordinate of `p_t` carrying the most of `p_t·x_{t−1}` so
    /// that the pairing drops by a quarter.
    ShaveCurrent,
}

impl Corruption {
    pub const ALL: [Corruption; 3] = [Corruption::InflateNext, Corruption::DeflateCurrent, Corruption::ShaveCurrent];
}

pub fn corrupt(
    dual: &DualPath,
    tree: &ScenarioTree,
    path: &[AdaptedVector],
    t: usize,
    mode: Corruption,
) -> DualPath {
    let mut out = dual.clone();
    let n = tree.horizon();
    let node = tree.nodes_at(t).start;
    match mode {
        Corruption::InflateNext => {
            let target = if t < n { tree.children(node)[0] } else { node };
            out.p_mut(t + 1).at_mut(tree, target).iter_mut().for_each(|v| *v *= 1.5);
        }
        Corruption::DeflateCurrent => {
            out.p_mut(t).at_mut(tree, node).iter_mut().for_each(|v| *v *= 0.5);
        }
        Corruption::ShaveCurrent => {
            let x = path[t - 1].at(tree, tree.parent(node).unwrap()).to_vec();
            let p = out.p_mut(t).at_mut(tree, node);
            let total = dot(p, &x);
            let j = (0..x.len())
                .max_by(|&a, &b| (p[a] * x[a]).total_cmp(&(p[b] * x[b])))
                .unwrap();
            p[j] -= 0.25 * total / x[j];
        }
    }
    out
}
