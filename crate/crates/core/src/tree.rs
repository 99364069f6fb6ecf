//! Finite filtered probability spaces encoded as scenario trees.
//!
//! Nodes at depth `t` are the atoms of the σ-algebra `F_t`. A quantity that is
//! `F_t`-measurable is therefore just one value per depth-`t` node, which is
//! what [`AdaptedVector`] stores. Nodes are kept in breadth-first order, so the
//! nodes of a given depth occupy a contiguous index range and an adapted vector
//! can address them by their *slot* (position within that range).

use std::collections::HashMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on the sum of child probabilities.
pub const PROB_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TreeError {
    #[error("node list is empty")]
    Empty,
    #[error("duplicate node id {0:?}")]
    DuplicateId(String),
    #[error("parent structure is not a single rooted tree: {0}")]
    CycleOrForest(String),
    #[error("bad probability at node {node:?}: {reason}")]
    BadProbability { node: String, reason: String },
    #[error("leaf {node:?} sits at depth {depth} but the horizon is {horizon}")]
    RaggedDepth {
        node: String,
        depth: usize,
        horizon: usize,
    },
    #[error("the tree has no edges; a horizon N >= 1 is required")]
    EmptyHorizon,
    #[error("expected {expected} state dimensions (one per date 0..=N), got {got}")]
    DimensionCount { expected: usize, got: usize },
    #[error("state dimension at date {0} must be positive")]
    ZeroDimension(usize),
    #[error("unknown node {0:?}")]
    UnknownNode(String),
    #[error("adapted vector lives at depth {got}, expected depth {expected}")]
    DepthMismatch { expected: usize, got: usize },
    #[error("adapted vector has dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("adapted vector at depth {depth} needs {expected} node values, got {got}")]
    NodeCount {
        depth: usize,
        expected: usize,
        got: usize,
    },
}

/// Node record as it appears in input files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawNode {
    pub id: String,
    #[serde(default)]
    pub parent: Option<String>,
    /// Conditional probability given the parent; 1 for the root.
    pub prob: f64,
}

impl RawNode {
    pub fn new(id: impl Into<String>, parent: Option<&str>, prob: f64) -> Self {
        Self {
            id: id.into(),
            parent: parent.map(str::to_owned),
            prob,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: String,
    pub parent: Option<usize>,
    pub depth: usize,
    pub cond_prob: f64,
    /// Unconditional probability of the atom.
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTree {
    nodes: Vec<Node>,
    children: Vec<Vec<usize>>,
    depth_start: Vec<usize>,
    dims: Vec<usize>,
    index: HashMap<String, usize>,
}

impl ScenarioTree {
    /// Validates a raw node list and builds the tree. `dims[t]` is the state
    /// dimension `m_t` for `t = 0..=N`.
    pub fn build(raw: &[RawNode], dims: &[usize]) -> Result<Self, TreeError> {
        if raw.is_empty() {
            return Err(TreeError::Empty);
        }
        let mut by_id: HashMap<&str, usize> = HashMap::with_capacity(raw.len());
        for (i, node) in raw.iter().enumerate() {
            if by_id.insert(node.id.as_str(), i).is_some() {
                return Err(TreeError::DuplicateId(node.id.clone()));
            }
        }

        let mut root: Option<usize> = None;
        let mut kids: Vec<Vec<usize>> = vec![Vec::new(); raw.len()];
        for (i, node) in raw.iter().enumerate() {
            match &node.parent {
                None => {
                    if let Some(r) = root {
                        return Err(TreeError::CycleOrForest(format!(
                            "two roots: {:?} and {:?}",
                            raw[r].id, node.id
                        )));
                    }
                    root = Some(i);
                }
                Some(p) => {
                    let &pi = by_id.get(p.as_str()).ok_or_else(|| {
                        TreeError::CycleOrForest(format!(
                            "node {:?} names unknown parent {p:?}",
                            node.id
                        ))
                    })?;
                    if pi == i {
                        return Err(TreeError::CycleOrForest(format!(
                            "node {:?} is its own parent",
                            node.id
                        )));
                    }
                    kids[pi].push(i);
                }
            }
        }
        let root = root.ok_or_else(|| TreeError::CycleOrForest("no root node".into()))?;

        // Breadth-first relabelling; anything unreachable from the root sits
        // on a cycle.
        let mut order = Vec::with_capacity(raw.len());
        let mut depth_of = vec![usize::MAX; raw.len()];
        depth_of[root] = 0;
        order.push(root);
        let mut head = 0;
        while head < order.len() {
            let cur = order[head];
            head += 1;
            for &c in &kids[cur] {
                depth_of[c] = depth_of[cur] + 1;
                order.push(c);
            }
        }
        if order.len() != raw.len() {
            let stray = (0..raw.len()).find(|&i| depth_of[i] == usize::MAX).unwrap();
            return Err(TreeError::CycleOrForest(format!(
                "node {:?} is not reachable from the root",
                raw[stray].id
            )));
        }

        let root_prob = raw[root].prob;
        if !root_prob.is_finite() || (root_prob - 1.0).abs() > PROB_SUM_TOL {
            return Err(TreeError::BadProbability {
                node: raw[root].id.clone(),
                reason: format!("root probability must be 1, got {root_prob}"),
            });
        }
        for node in raw.iter().filter(|n| n.parent.is_some()) {
            if !(node.prob.is_finite() && node.prob > 0.0 && node.prob <= 1.0) {
                return Err(TreeError::BadProbability {
                    node: node.id.clone(),
                    reason: format!("conditional probability {} outside (0, 1]", node.prob),
                });
            }
        }
        for (i, ch) in kids.iter().enumerate() {
            if ch.is_empty() {
                continue;
            }
            let sum: f64 = ch.iter().map(|&c| raw[c].prob).sum();
            if (sum - 1.0).abs() > PROB_SUM_TOL {
                return Err(TreeError::BadProbability {
                    node: raw[i].id.clone(),
                    reason: format!("children probabilities sum to {sum}"),
                });
            }
        }

        let horizon = order.iter().map(|&i| depth_of[i]).max().unwrap_or(0);
        if horizon == 0 {
            return Err(TreeError::EmptyHorizon);
        }
        for &i in &order {
            if kids[i].is_empty() && depth_of[i] != horizon {
                return Err(TreeError::RaggedDepth {
                    node: raw[i].id.clone(),
                    depth: depth_of[i],
                    horizon,
                });
            }
        }
        if dims.len() != horizon + 1 {
            return Err(TreeError::DimensionCount {
                expected: horizon + 1,
                got: dims.len(),
            });
        }
        if let Some(t) = dims.iter().position(|&d| d == 0) {
            return Err(TreeError::ZeroDimension(t));
        }

        let mut new_index = vec![0usize; raw.len()];
        for (new, &old) in order.iter().enumerate() {
            new_index[old] = new;
        }
        let mut nodes: Vec<Node> = Vec::with_capacity(raw.len());
        for &old in &order {
            let parent = raw[old].parent.as_ref().map(|p| new_index[by_id[p.as_str()]]);
            let cond_prob = if parent.is_some() { raw[old].prob } else { 1.0 };
            let prob = parent.map_or(1.0, |p| nodes[p].prob * cond_prob);
            nodes.push(Node {
                id: raw[old].id.clone(),
                parent,
                depth: depth_of[old],
                cond_prob,
                prob,
            });
        }
        let children = order
            .iter()
            .map(|&old| kids[old].iter().map(|&c| new_index[c]).collect())
            .collect();
        let mut depth_start = vec![0usize; horizon + 2];
        for t in 0..=horizon {
            depth_start[t + 1] = depth_start[t] + nodes.iter().filter(|n| n.depth == t).count();
        }
        let index = nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.id.clone(), i))
            .collect();

        Ok(Self {
            nodes,
            children,
            depth_start,
            dims: dims.to_vec(),
            index,
        })
    }

    /// Same state dimension at every date.
    pub fn build_uniform(raw: &[RawNode], dim: usize) -> Result<Self, TreeError> {
        // Horizon is unknown until the structure is validated, so build once
        // with a placeholder and patch the dimension vector.
        let probe = Self::build_structure_only(raw)?;
        Self::build(raw, &vec![dim; probe + 1])
    }

    fn build_structure_only(raw: &[RawNode]) -> Result<usize, TreeError> {
        // Depth of the deepest node; errors surface again in `build`.
        let by_id: HashMap<&str, &RawNode> = raw.iter().map(|n| (n.id.as_str(), n)).collect();
        let mut horizon = 0;
        for node in raw {
            let mut d = 0;
            let mut cur = node;
            while let Some(p) = &cur.parent {
                match by_id.get(p.as_str()) {
                    Some(next) if d <= raw.len() => {
                        cur = next;
                        d += 1;
                    }
                    _ => break,
                }
            }
            horizon = horizon.max(d);
        }
        Ok(horizon)
    }

    pub fn horizon(&self) -> usize {
        self.depth_start.len() - 2
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn dim(&self, t: usize) -> usize {
        self.dims[t]
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn node(&self, i: usize) -> &Node {
        &self.nodes[i]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn parent(&self, i: usize) -> Option<usize> {
        self.nodes[i].parent
    }

    pub fn children(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    pub fn depth(&self, i: usize) -> usize {
        self.nodes[i].depth
    }

    pub fn is_leaf(&self, i: usize) -> bool {
        self.children[i].is_empty()
    }

    /// Global indices of the nodes at depth `t`.
    pub fn nodes_at(&self, t: usize) -> Range<usize> {
        self.depth_start[t]..self.depth_start[t + 1]
    }

    pub fn count_at(&self, t: usize) -> usize {
        self.depth_start[t + 1] - self.depth_start[t]
    }

    pub fn leaves(&self) -> Range<usize> {
        self.nodes_at(self.horizon())
    }

    /// Position of node `i` among the nodes of its depth.
    pub fn slot(&self, i: usize) -> usize {
        i - self.depth_start[self.nodes[i].depth]
    }

    pub fn lookup(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Unconditional probability of the atom `i`.
    pub fn probability(&self, i: usize) -> f64 {
        self.nodes[i].prob
    }

    pub fn node_probability(&self, id: &str) -> Result<f64, TreeError> {
        self.lookup(id)
            .map(|i| self.nodes[i].prob)
            .ok_or_else(|| TreeError::UnknownNode(id.to_owned()))
    }

    /// `E[X]` for a scalar field at any depth.
    pub fn expectation(&self, x: &AdaptedVector) -> Result<f64, TreeError> {
        if x.dim != 1 {
            return Err(TreeError::DimensionMismatch {
                expected: 1,
                got: x.dim,
            });
        }
        self.check_shape(x)?;
        Ok(self
            .nodes_at(x.depth)
            .map(|i| self.nodes[i].prob * x.data[self.slot(i)])
            .sum())
    }

    /// Componentwise `E[X]` for a vector field.
    pub fn expectation_vec(&self, x: &AdaptedVector) -> Result<Vec<f64>, TreeError> {
        self.check_shape(x)?;
        let mut out = vec![0.0; x.dim];
        for i in self.nodes_at(x.depth) {
            let p = self.nodes[i].prob;
            for (o, v) in out.iter_mut().zip(x.at(self, i)) {
                *o += p * v;
            }
        }
        Ok(out)
    }

    /// `E_t[X]` for `X` stored at depth `t + 1 >= 1`: the child-probability
    /// weighted average at each depth-`t` node.
    pub fn conditional_expectation(&self, x: &AdaptedVector) -> Result<AdaptedVector, TreeError> {
        self.check_shape(x)?;
        if x.depth == 0 {
            return Err(TreeError::DepthMismatch {
                expected: 1,
                got: 0,
            });
        }
        let t = x.depth - 1;
        let mut out = AdaptedVector::zeros(self, t, x.dim);
        for i in self.nodes_at(t) {
            let slot = self.slot(i);
            for &c in &self.children[i] {
                let w = self.nodes[c].cond_prob;
                let src = x.at(self, c);
                for (o, v) in out.get_mut(slot).iter_mut().zip(src) {
                    *o += w * v;
                }
            }
        }
        Ok(out)
    }

    /// `E_{time-1}[X]` for a vector indexed by *time* rather than depth. A
    /// time-`N+1` vector is stored at depth `N` (`F_{N+1} := F_N`) and is
    /// returned unchanged.
    pub fn conditional_expectation_at(
        &self,
        x: &AdaptedVector,
        time: usize,
    ) -> Result<AdaptedVector, TreeError> {
        if time == self.horizon() + 1 {
            if x.depth != self.horizon() {
                return Err(TreeError::DepthMismatch {
                    expected: self.horizon(),
                    got: x.depth,
                });
            }
            self.check_shape(x)?;
            return Ok(x.clone());
        }
        if x.depth != time {
            return Err(TreeError::DepthMismatch {
                expected: time,
                got: x.depth,
            });
        }
        self.conditional_expectation(x)
    }

    pub(crate) fn check_shape(&self, x: &AdaptedVector) -> Result<(), TreeError> {
        if x.depth > self.horizon() {
            return Err(TreeError::DepthMismatch {
                expected: self.horizon(),
                got: x.depth,
            });
        }
        let expected = self.count_at(x.depth) * x.dim;
        if x.data.len() != expected {
            return Err(TreeError::NodeCount {
                depth: x.depth,
                expected: self.count_at(x.depth),
                got: x.data.len() / x.dim.max(1),
            });
        }
        Ok(())
    }
}

/// One `dim`-vector per depth-`depth` node, stored row-major by slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptedVector {
    depth: usize,
    dim: usize,
    data: Vec<f64>,
}

impl AdaptedVector {
    pub fn zeros(tree: &ScenarioTree, depth: usize, dim: usize) -> Self {
        Self {
            depth,
            dim,
            data: vec![0.0; tree.count_at(depth) * dim],
        }
    }

    /// Builds from per-node vectors given in slot order.
    pub fn from_rows(
        tree: &ScenarioTree,
        depth: usize,
        rows: Vec<Vec<f64>>,
    ) -> Result<Self, TreeError> {
        if depth > tree.horizon() {
            return Err(TreeError::DepthMismatch {
                expected: tree.horizon(),
                got: depth,
            });
        }
        if rows.len() != tree.count_at(depth) {
            return Err(TreeError::NodeCount {
                depth,
                expected: tree.count_at(depth),
                got: rows.len(),
            });
        }
        let dim = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(TreeError::DimensionMismatch {
                    expected: dim,
                    got: r.len(),
                });
            }
            data.extend(r);
        }
        Ok(Self { depth, dim, data })
    }

    /// Builds by evaluating `f` at every depth-`depth` node (global index).
    pub fn from_fn(
        tree: &ScenarioTree,
        depth: usize,
        dim: usize,
        mut f: impl FnMut(usize) -> Vec<f64>,
    ) -> Self {
        let mut data = Vec::with_capacity(tree.count_at(depth) * dim);
        for i in tree.nodes_at(depth) {
            let v = f(i);
            assert_eq!(v.len(), dim, "from_fn: wrong row length at node {i}");
            data.extend(v);
        }
        Self { depth, dim, data }
    }

    pub fn scalar(tree: &ScenarioTree, depth: usize, values: Vec<f64>) -> Result<Self, TreeError> {
        Self::from_rows(tree, depth, values.into_iter().map(|v| vec![v]).collect())
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, slot: usize) -> &[f64] {
        &self.data[slot * self.dim..(slot + 1) * self.dim]
    }

    pub fn get_mut(&mut self, slot: usize) -> &mut [f64] {
        &mut self.data[slot * self.dim..(slot + 1) * self.dim]
    }

    /// Value at global node index `node` (which must sit at this depth).
    pub fn at(&self, tree: &ScenarioTree, node: usize) -> &[f64] {
        debug_assert_eq!(tree.depth(node), self.depth);
        self.get(tree.slot(node))
    }

    pub fn at_mut(&mut self, tree: &ScenarioTree, node: usize) -> &mut [f64] {
        debug_assert_eq!(tree.depth(node), self.depth);
        self.get_mut(tree.slot(node))
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.dim.max(1))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            depth: self.depth,
            dim: self.dim,
            data: self.data.iter().map(|v| c * v).collect(),
        }
    }

    pub fn map_rows(&self, mut f: impl FnMut(usize, &[f64]) -> Vec<f64>) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        let mut dim = self.dim;
        for (slot, row) in self.rows().enumerate() {
            let v = f(slot, row);
            dim = v.len();
            data.extend(v);
        }
        Self {
            depth: self.depth,
            dim,
            data,
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary(depth: usize, p: f64) -> Vec<RawNode> {
        let mut raw = vec![RawNode::new("r", None, 1.0)];
        let mut frontier = vec!["r".to_string()];
        for _ in 0..depth {
            let mut next = Vec::new();
            for parent in &frontier {
                for (tag, q) in [("u", p), ("d", 1.0 - p)] {
                    let id = format!("{parent}{tag}");
                    raw.push(RawNode::new(id.clone(), Some(parent), q));
                    next.push(id);
                }
            }
            frontier = next;
        }
        raw
    }

    #[test]
    fn minimal_binary_tree() {
        let t = ScenarioTree::build_uniform(&binary(1, 0.5), 1).unwrap();
        assert_eq!(t.horizon(), 1);
        assert_eq!(t.len(), 3);
        assert_eq!(t.children(0).len(), 2);
    }

    #[test]
    fn probabilities_must_sum_to_one() {
        let raw = vec![
            RawNode::new("r", None, 1.0),
            RawNode::new("a", Some("r"), 0.6),
            RawNode::new("b", Some("r"), 0.6),
        ];
        assert!(matches!(
            ScenarioTree::build(&raw, &[1, 1]),
            Err(TreeError::BadProbability { .. })
        ));
    }

    #[test]
    fn zero_probability_rejected() {
        let raw = vec![
            RawNode::new("r", None, 1.0),
            RawNode::new("a", Some("r"), 1.0),
            RawNode::new("b", Some("r"), 0.0),
        ];
        assert!(matches!(
            ScenarioTree::build(&raw, &[1, 1]),
            Err(TreeError::BadProbability { .. })
        ));
    }

    #[test]
    fn three_period_tree_has_fifteen_nodes() {
        let t = ScenarioTree::build_uniform(&binary(3, 0.5), 2).unwrap();
        assert_eq!(t.horizon(), 3);
        assert_eq!(t.len(), 15);
        assert_eq!(t.count_at(3), 8);
    }

    #[test]
    fn forests_and_cycles_rejected() {
        let two_roots = vec![RawNode::new("a", None, 1.0), RawNode::new("b", None, 1.0)];
        assert!(matches!(
            ScenarioTree::build(&two_roots, &[1]),
            Err(TreeError::CycleOrForest(_))
        ));
        let cycle = vec![
            RawNode::new("r", None, 1.0),
            RawNode::new("c", Some("r"), 1.0),
            RawNode::new("x", Some("y"), 1.0),
            RawNode::new("y", Some("x"), 1.0),
        ];
        assert!(matches!(
            ScenarioTree::build(&cycle, &[1, 1]),
            Err(TreeError::CycleOrForest(_))
        ));
        let orphan = vec![
            RawNode::new("r", None, 1.0),
            RawNode::new("c", Some("nope"), 1.0),
        ];
        assert!(matches!(
            ScenarioTree::build(&orphan, &[1, 1]),
            Err(TreeError::CycleOrForest(_))
        ));
    }

    #[test]
    fn ragged_leaves_rejected() {
        let raw = vec![
            RawNode::new("r", None, 1.0),
            RawNode::new("a", Some("r"), 0.5),
            RawNode::new("b", Some("r"), 0.5),
            RawNode::new("aa", Some("a"), 1.0),
        ];
        assert!(matches!(
            ScenarioTree::build(&raw, &[1, 1, 1]),
            Err(TreeError::RaggedDepth { .. })
        ));
    }

    #[test]
    fn root_only_is_rejected() {
        let raw = vec![RawNode::new("r", None, 1.0)];
        assert_eq!(ScenarioTree::build(&raw, &[1]), Err(TreeError::EmptyHorizon));
    }

    #[test]
    fn node_probabilities() {
        let raw = vec![
            RawNode::new("r", None, 1.0),
            RawNode::new("a", Some("r"), 0.5),
            RawNode::new("b", Some("r"), 0.5),
            RawNode::new("a1", Some("a"), 0.2),
            RawNode::new("a2", Some("a"), 0.8),
            RawNode::new("b1", Some("b"), 0.3),
            RawNode::new("b2", Some("b"), 0.7),
        ];
        let t = ScenarioTree::build(&raw, &[1, 1, 1]).unwrap();
        assert_eq!(t.node_probability("r").unwrap(), 1.0);
        assert!((t.node_probability("b1").unwrap() - 0.15).abs() < 1e-15);
        assert!((t.node_probability("a1").unwrap() - 0.1).abs() < 1e-15);
        assert!(matches!(
            t.node_probability("zz"),
            Err(TreeError::UnknownNode(_))
        ));
        for d in 0..=2 {
            let s: f64 = t.nodes_at(d).map(|i| t.probability(i)).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn expectations() {
        let t = ScenarioTree::build_uniform(&binary(1, 0.5), 1).unwrap();
        let x = AdaptedVector::scalar(&t, 1, vec![2.0, 4.0]).unwrap();
        assert_eq!(t.expectation(&x).unwrap(), 3.0);
        let parent = t.conditional_expectation(&x).unwrap();
        assert_eq!(parent.get(0), &[3.0]);

        let raw = vec![
            RawNode::new("r", None, 1.0),
            RawNode::new("a", Some("r"), 0.2),
            RawNode::new("b", Some("r"), 0.3),
            RawNode::new("c", Some("r"), 0.5),
        ];
        let t = ScenarioTree::build(&raw, &[1, 1]).unwrap();
        let x = AdaptedVector::scalar(&t, 1, vec![1.0, 2.0, 3.0]).unwrap();
        assert!((t.expectation(&x).unwrap() - 2.3).abs() < 1e-15);
        let c = AdaptedVector::scalar(&t, 1, vec![7.5; 3]).unwrap();
        assert!((t.expectation(&c).unwrap() - 7.5).abs() < 1e-15);
    }

    #[test]
    fn deterministic_chain_is_identity() {
        let raw = vec![
            RawNode::new("r", None, 1.0),
            RawNode::new("a", Some("r"), 1.0),
            RawNode::new("b", Some("a"), 1.0),
        ];
        let t = ScenarioTree::build(&raw, &[2, 2, 2]).unwrap();
        let x = AdaptedVector::from_rows(&t, 2, vec![vec![1.5, -2.0]]).unwrap();
        let y = t.conditional_expectation(&x).unwrap();
        assert_eq!(y.depth(), 1);
        assert_eq!(y.get(0), &[1.5, -2.0]);
    }

    #[test]
    fn time_n_plus_one_convention() {
        let t = ScenarioTree::build_uniform(&binary(2, 0.4), 1).unwrap();
        let x = AdaptedVector::scalar(&t, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(t.conditional_expectation_at(&x, 3).unwrap(), x);
        let y = t.conditional_expectation_at(&x, 2).unwrap();
        assert_eq!(y.depth(), 1);
        assert!(matches!(
            t.conditional_expectation_at(&x, 1),
            Err(TreeError::DepthMismatch { .. })
        ));
    }

    #[test]
    fn depth_and_shape_errors() {
        let t = ScenarioTree::build_uniform(&binary(1, 0.5), 1).unwrap();
        let root = AdaptedVector::scalar(&t, 0, vec![1.0]).unwrap();
        assert!(matches!(
            t.conditional_expectation(&root),
            Err(TreeError::DepthMismatch { .. })
        ));
        assert!(AdaptedVector::scalar(&t, 1, vec![1.0]).is_err());
        let v = AdaptedVector::from_rows(&t, 1, vec![vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert!(matches!(
            t.expectation(&v),
            Err(TreeError::DimensionMismatch { .. })
        ));
        assert_eq!(t.expectation_vec(&v).unwrap(), vec![2.0, 3.0]);
    }

    #[test]
    fn dimension_count_checked() {
        assert!(matches!(
            ScenarioTree::build(&binary(2, 0.5), &[1, 1]),
            Err(TreeError::DimensionCount { .. })
        ));
        assert!(matches!(
            ScenarioTree::build(&binary(1, 0.5), &[1, 0]),
            Err(TreeError::ZeroDimension(1))
        ));
    }
}
