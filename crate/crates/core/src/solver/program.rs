//! The lifted polyhedral program on the tree.
//!
//! Every concave piecewise-linear constraint of the form
//! `Σ min(α_i y_i, β_i y_i) ≥ 0` (with `α ≤ β`) becomes linear after adding
//! one split variable `w_i ≥ max(y_i, 0)` per coordinate with `α_i < β_i`:
//! the value is then `Σ (α−β)w + β y`. Coordinates with `α_i = β_i` stay
//! linear. Margins (`y = x`, `α = Λ⁺`, `β = μΛ⁻`), self-financing
//! (`y = R∘x_parent − x`, `α = Λ⁺`, `β = Λ⁻`) and piecewise-linear terminal
//! valuations all fit this shape.
//!
//! Each non-root node owns a variable block `[x | margin split | edge split |
//! objective split]`; rows couple the block only with the parent's `x`.

use serde::{Deserialize, Serialize};

use crate::market::MarketData;
use crate::objective::{PenaltyNorm, TerminalObjective};
use crate::tree::ScenarioTree;
use crate::vecops::{dot, norm1, norm2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowGroup {
    Margin,
    Edge,
    Objective,
}

#[derive(Debug, Clone)]
pub struct Row {
    pub node: usize,
    pub group: RowGroup,
    /// Coefficients on the node's own block.
    pub local: Vec<(usize, f64)>,
    /// Coefficients on the parent's `x` (the pinned `x_0` at depth 1).
    pub parent: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, Default)]
pub struct Layout {
    pub len: usize,
    pub margin_off: usize,
    pub margin_split: Vec<usize>,
    pub edge_off: usize,
    pub edge_split: Vec<usize>,
    pub obj_off: usize,
    pub obj_split: Vec<usize>,
}

#[derive(Debug, Clone)]
pub enum LeafTerm {
    /// `φ = Σ coeff·z` over the block.
    Affine(Vec<(usize, f64)>),
    /// `φ = q·x − θ‖x‖₂`.
    Euclid { q: Vec<f64>, theta: f64 },
}

#[derive(Debug, Clone)]
pub struct Program {
    pub m: usize,
    pub x0: Vec<f64>,
    pub parent: Vec<Option<usize>>,
    pub prob: Vec<f64>,
    pub layout: Vec<Layout>,
    pub rows: Vec<Row>,
    /// Rows owned by each node, as a range into `rows`.
    pub node_rows: Vec<std::ops::Range<usize>>,
    pub leaf_term: Vec<Option<LeafTerm>>,
    pub returns: Vec<Vec<f64>>,
}

/// Structural counts reported by `assemble`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgramSummary {
    /// One portfolio vector per node, the pinned root included.
    pub node_vectors: usize,
    /// Free variables, split variables included.
    pub variables: usize,
    pub split_variables: usize,
    pub rows: usize,
    /// One self-financing block per tree edge.
    pub edge_blocks: usize,
}

fn split_coords(alpha: &[f64], beta: &[f64]) -> Vec<usize> {
    (0..alpha.len()).filter(|&i| beta[i] - alpha[i] > 0.0).collect()
}

/// Rows of one piecewise-linear group. `y_i = Σ local_i + Σ parent_i`.
#[allow(clippy::too_many_arguments)]
fn pwl_group(
    rows: &mut Vec<Row>,
    node: usize,
    group: RowGroup,
    alpha: &[f64],
    beta: &[f64],
    y_local: &[Vec<(usize, f64)>],
    y_parent: &[Vec<(usize, f64)>],
    split_off: usize,
    split: &[usize],
) {
    let mut main_local = Vec::new();
    let mut main_parent = Vec::new();
    for (k, &i) in split.iter().enumerate() {
        let s = split_off + k;
        rows.push(Row {
            node,
            group,
            local: vec![(s, 1.0)],
            parent: vec![],
        });
        let mut local = vec![(s, 1.0)];
        local.extend(y_local[i].iter().map(|&(j, c)| (j, -c)));
        rows.push(Row {
            node,
            group,
            local,
            parent: y_parent[i].iter().map(|&(j, c)| (j, -c)).collect(),
        });
        main_local.push((s, alpha[i] - beta[i]));
    }
    for i in 0..alpha.len() {
        main_local.extend(y_local[i].iter().map(|&(j, c)| (j, beta[i] * c)));
        main_parent.extend(y_parent[i].iter().map(|&(j, c)| (j, beta[i] * c)));
    }
    rows.push(Row {
        node,
        group,
        local: main_local,
        parent: main_parent,
    });
}

fn leaf_pwl(objective: &TerminalObjective, market: &MarketData, leaf: usize, slot: usize) -> Option<(Vec<f64>, Vec<f64>)> {
    match objective {
        TerminalObjective::Linear { q, .. } => Some((q[slot].clone(), q[slot].clone())),
        TerminalObjective::Liquidation { .. } => Some((market.cap_plus(leaf).to_vec(), market.cap_minus(leaf).to_vec())),
        TerminalObjective::NormPenalized {
            q,
            theta,
            norm: PenaltyNorm::L1,
            ..
        } => Some((
            q[slot].iter().map(|v| v - theta[slot]).collect(),
            q[slot].iter().map(|v| v + theta[slot]).collect(),
        )),
        TerminalObjective::NormPenalized {
            norm: PenaltyNorm::L2, ..
        } => None,
    }
}

impl Program {
    pub fn build(tree: &ScenarioTree, market: &MarketData, objective: &TerminalObjective, x0: &[f64]) -> Self {
        let m = market.assets();
        let n_nodes = tree.len();
        let mut layout = vec![Layout::default(); n_nodes];
        let mut rows = Vec::new();
        let mut node_rows = vec![0..0; n_nodes];
        let mut leaf_term = vec![None; n_nodes];
        let x_local: Vec<Vec<(usize, f64)>> = (0..m).map(|i| vec![(i, 1.0)]).collect();
        let none: Vec<Vec<(usize, f64)>> = vec![vec![]; m];

        for n in 1..n_nodes {
            let start = rows.len();
            let lay = &mut layout[n];
            lay.margin_off = m;

            let mu = market.mu(tree.depth(n));
            let alpha = market.cap_plus(n).to_vec();
            let beta: Vec<f64> = market.cap_minus(n).iter().map(|c| mu * c).collect();
            let msplit = split_coords(&alpha, &beta);
            pwl_group(&mut rows, n, RowGroup::Margin, &alpha, &beta, &x_local, &none, m, &msplit);
            lay.edge_off = m + msplit.len();
            lay.margin_split = msplit;

            let r = market.returns(n);
            let alpha = market.cap_plus(n).to_vec();
            let beta = market.cap_minus(n).to_vec();
            let esplit = split_coords(&alpha, &beta);
            let y_local: Vec<Vec<(usize, f64)>> = (0..m).map(|i| vec![(i, -1.0)]).collect();
            let y_parent: Vec<Vec<(usize, f64)>> = (0..m).map(|i| vec![(i, r[i])]).collect();
            pwl_group(&mut rows, n, RowGroup::Edge, &alpha, &beta, &y_local, &y_parent, lay.edge_off, &esplit);
            lay.obj_off = lay.edge_off + esplit.len();
            lay.edge_split = esplit;
            lay.len = lay.obj_off;

            if tree.is_leaf(n) {
                let slot = tree.slot(n);
                match leaf_pwl(objective, market, n, slot) {
                    Some((alpha, beta)) => {
                        let osplit = split_coords(&alpha, &beta);
                        let mut coeffs: Vec<(usize, f64)> = (0..m).map(|i| (i, beta[i])).collect();
                        for (k, &i) in osplit.iter().enumerate() {
                            let s = lay.obj_off + k;
                            coeffs.push((s, alpha[i] - beta[i]));
                            rows.push(Row {
                                node: n,
                                group: RowGroup::Objective,
                                local: vec![(s, 1.0)],
                                parent: vec![],
                            });
                            rows.push(Row {
                                node: n,
                                group: RowGroup::Objective,
                                local: vec![(s, 1.0), (i, -1.0)],
                                parent: vec![],
                            });
                        }
                        lay.len = lay.obj_off + osplit.len();
                        lay.obj_split = osplit;
                        leaf_term[n] = Some(LeafTerm::Affine(coeffs));
                    }
                    None => {
                        if let TerminalObjective::NormPenalized { q, theta, .. } = objective {
                            leaf_term[n] = Some(LeafTerm::Euclid {
                                q: q[slot].clone(),
                                theta: theta[slot],
                            });
                        }
                    }
                }
            }
            node_rows[n] = start..rows.len();
        }

        Self {
            m,
            x0: x0.to_vec(),
            parent: tree.nodes().iter().map(|n| n.parent).collect(),
            prob: tree.nodes().iter().map(|n| n.prob).collect(),
            layout,
            rows,
            node_rows,
            leaf_term,
            returns: (0..n_nodes).map(|n| market.returns(n).to_vec()).collect(),
        }
    }

    pub fn summary(&self) -> ProgramSummary {
        let variables: usize = self.layout.iter().map(|l| l.len).sum();
        let free_x = (self.layout.len() - 1) * self.m;
        ProgramSummary {
            node_vectors: self.layout.len(),
            variables,
            split_variables: variables - free_x,
            rows: self.rows.len(),
            edge_blocks: self.layout.len() - 1,
        }
    }

    pub fn node_count(&self) -> usize {
        self.layout.len()
    }

    /// Barrier weight of a row: the probability of its node.
    pub fn weight(&self, row: usize) -> f64 {
        self.prob[self.rows[row].node]
    }

    pub fn total_weight(&self) -> f64 {
        (0..self.rows.len()).map(|i| self.weight(i)).sum()
    }

    /// Parent `x` for node `n`.
    pub fn parent_x<'a>(&'a self, z: &'a [Vec<f64>], n: usize) -> &'a [f64] {
        match self.parent[n] {
            Some(0) | None => &self.x0,
            Some(p) => &z[p][..self.m],
        }
    }

    pub fn row_value(&self, z: &[Vec<f64>], i: usize) -> f64 {
        let r = &self.rows[i];
        let zl = &z[r.node];
        let xp = self.parent_x(z, r.node);
        r.local.iter().map(|&(j, c)| c * zl[j]).sum::<f64>() + r.parent.iter().map(|&(j, c)| c * xp[j]).sum::<f64>()
    }

    pub fn row_values(&self, z: &[Vec<f64>]) -> Vec<f64> {
        (0..self.rows.len()).map(|i| self.row_value(z, i)).collect()
    }

    /// Change of a row along direction `dz` (the root never moves).
    pub fn row_delta(&self, dz: &[Vec<f64>], i: usize) -> f64 {
        let r = &self.rows[i];
        let local: f64 = r.local.iter().map(|&(j, c)| c * dz[r.node][j]).sum();
        let parent = match self.parent[r.node] {
            Some(p) if p != 0 => r.parent.iter().map(|&(j, c)| c * dz[p][j]).sum(),
            _ => 0.0,
        };
        local + parent
    }

    /// Lifted terminal value `φ` at a leaf.
    pub fn leaf_value(&self, z: &[Vec<f64>], n: usize) -> f64 {
        match &self.leaf_term[n] {
            Some(LeafTerm::Affine(c)) => c.iter().map(|&(j, v)| v * z[n][j]).sum(),
            Some(LeafTerm::Euclid { q, theta }) => {
                let x = &z[n][..self.m];
                dot(q, x) - theta * norm2(x)
            }
            None => f64::NAN,
        }
    }

    /// `(∇φ, −∇²φ)` on the block; the Hessian part is `None` when `φ` is affine.
    pub fn leaf_derivatives(&self, z: &[Vec<f64>], n: usize) -> (Vec<f64>, Option<Vec<Vec<f64>>>) {
        let len = self.layout[n].len;
        let mut g = vec![0.0; len];
        match &self.leaf_term[n] {
            Some(LeafTerm::Affine(c)) => {
                for &(j, v) in c {
                    g[j] += v;
                }
                (g, None)
            }
            Some(LeafTerm::Euclid { q, theta }) => {
                let x = &z[n][..self.m];
                let nx = norm2(x);
                let mut h = vec![vec![0.0; len]; len];
                for i in 0..self.m {
                    g[i] = q[i] - theta * x[i] / nx;
                    for j in 0..self.m {
                        let id = if i == j { 1.0 } else { 0.0 };
                        h[i][j] = theta * (id - x[i] * x[j] / (nx * nx)) / nx;
                    }
                }
                (g, Some(h))
            }
            None => (g, None),
        }
    }

    pub fn leaves(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.node_count()).filter(|&n| self.leaf_term[n].is_some())
    }

    /// Strictly feasible lifted start from a path: splits sit just above the
    /// positive parts, by a margin proportional to each group's slack.
    pub fn lift_path(&self, path: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let m = self.m;
        let mut z: Vec<Vec<f64>> = path
            .iter()
            .enumerate()
            .map(|(n, x)| {
                let mut b = vec![0.0; self.layout[n].len.max(if n == 0 { m } else { 0 })];
                b[..m].copy_from_slice(x);
                b
            })
            .collect();
        for n in 1..self.node_count() {
            // Minimal splits first.
            let xp = self.parent_x(&z, n).to_vec();
            let lay = self.layout[n].clone();
            let msplit = lay.margin_split.clone();
            for (k, &i) in msplit.iter().enumerate() {
                z[n][lay.margin_off + k] = z[n][i].max(0.0);
            }
            for (k, &i) in lay.edge_split.iter().enumerate() {
                let r = self.returns[n][i];
                z[n][lay.edge_off + k] = (r * xp[i] - z[n][i]).max(0.0);
            }
            for (k, &i) in lay.obj_split.iter().enumerate() {
                z[n][lay.obj_off + k] = z[n][i].max(0.0);
            }
            // Then inflate by δ = min(f / (2 Σ(β−α)), |y| + f) per group.
            let rows = self.node_rows[n].clone();
            let main_of = |group: RowGroup| {
                rows.clone().filter(|&i| self.rows[i].group == group).last()
            };
            for (group, off, count) in [
                (RowGroup::Margin, lay.margin_off, msplit.len()),
                (RowGroup::Edge, lay.edge_off, lay.edge_split.len()),
            ] {
                if count == 0 {
                    continue;
                }
                let main = main_of(group).unwrap();
                let f = self.row_value(&z, main);
                let spread: f64 = self.rows[main]
                    .local
                    .iter()
                    .filter(|&&(j, _)| j >= off && j < off + count)
                    .map(|&(_, c)| -c)
                    .sum();
                let ymag = match group {
                    RowGroup::Margin => norm1(&z[n][..m]),
                    _ => (0..m).map(|i| (self.returns[n][i] * xp[i] - z[n][i]).abs()).sum(),
                };
                let delta = (f / (2.0 * spread)).min(ymag + f);
                for k in 0..count {
                    z[n][off + k] += delta;
                }
            }
            if !lay.obj_split.is_empty() {
                let f = self.leaf_value(&z, n);
                let spread: f64 = match &self.leaf_term[n] {
                    Some(LeafTerm::Affine(c)) => c.iter().filter(|&&(j, _)| j >= lay.obj_off).map(|&(_, v)| -v).sum(),
                    _ => 0.0,
                };
                let delta = (f / (2.0 * spread)).min(norm1(&z[n][..m]) + f);
                for k in 0..lay.obj_split.len() {
                    z[n][lay.obj_off + k] += delta;
                }
            }
        }
        z
    }
}
