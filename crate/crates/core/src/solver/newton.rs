//! Damped Newton on the probability-weighted log barrier
//!
//! `Σ_leaf P ln φ + τ Σ_rows P(node) ln g`,
//!
//! with the Newton system solved by eliminating subtrees bottom-up: each
//! node's block couples only to its parent's `x`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::program::Program;

pub(crate) struct Derivatives {
    pub grad: Vec<Vec<f64>>,
    /// Negated Hessian of each block.
    pub own: Vec<DMatrix<f64>>,
    /// Negated cross Hessian between a block and its parent's `x`.
    pub cross: Vec<DMatrix<f64>>,
}

pub(crate) fn merit(p: &Program, z: &[Vec<f64>], tau: f64) -> Option<f64> {
    let mut f = 0.0;
    for n in p.leaves() {
        let phi = p.leaf_value(z, n);
        if !(phi > 0.0) {
            return None;
        }
        f += p.prob[n] * phi.ln();
    }
    for i in 0..p.rows.len() {
        let g = p.row_value(z, i);
        if !(g > 0.0) {
            return None;
        }
        f += tau * p.weight(i) * g.ln();
    }
    Some(f)
}

/// Objective part of the merit, `Σ P ln φ` on the lifted leaf values.
pub(crate) fn lifted_objective(p: &Program, z: &[Vec<f64>]) -> f64 {
    p.leaves().map(|n| p.prob[n] * p.leaf_value(z, n).ln()).sum()
}

/// Gradient of the Lagrangian `Σ P ln φ + Σ λ_i g_i`; with `λ = τw/g` this is
/// the barrier gradient.
pub(crate) fn lagrangian_gradient(p: &Program, z: &[Vec<f64>], lambda: &[f64]) -> Vec<Vec<f64>> {
    let mut grad: Vec<Vec<f64>> = (0..p.node_count()).map(|n| vec![0.0; p.layout[n].len]).collect();
    for n in p.leaves() {
        let phi = p.leaf_value(z, n);
        let (d, _) = p.leaf_derivatives(z, n);
        for (g, v) in grad[n].iter_mut().zip(&d) {
            *g += p.prob[n] * v / phi;
        }
    }
    for (i, row) in p.rows.iter().enumerate() {
        let l = lambda[i];
        for &(j, c) in &row.local {
            grad[row.node][j] += l * c;
        }
        if let Some(par) = p.parent[row.node].filter(|&q| q != 0) {
            for &(j, c) in &row.parent {
                grad[par][j] += l * c;
            }
        }
    }
    grad
}

/// Condensed primal-dual system: the right-hand side is the barrier
/// gradient, the row curvature is `λ_i/g_i` (equal to `τw_i/g_i²` on the
/// central path).
pub(crate) fn derivatives(p: &Program, z: &[Vec<f64>], g: &[f64], tau: f64, lambda: &[f64]) -> Derivatives {
    let m = p.m;
    let nn = p.node_count();
    let barrier: Vec<f64> = (0..g.len()).map(|i| tau * p.weight(i) / g[i]).collect();
    let grad = lagrangian_gradient(p, z, &barrier);
    let mut own: Vec<DMatrix<f64>> = (0..nn).map(|n| DMatrix::zeros(p.layout[n].len, p.layout[n].len)).collect();
    let mut cross: Vec<DMatrix<f64>> = (0..nn).map(|n| DMatrix::zeros(p.layout[n].len, m)).collect();

    for n in p.leaves() {
        let phi = p.leaf_value(z, n);
        let (d, h) = p.leaf_derivatives(z, n);
        let w = p.prob[n];
        let a = &mut own[n];
        for i in 0..d.len() {
            for j in 0..d.len() {
                a[(i, j)] += w * d[i] * d[j] / (phi * phi);
            }
        }
        if let Some(h) = h {
            for i in 0..d.len() {
                for j in 0..d.len() {
                    a[(i, j)] += w * h[i][j] / phi;
                }
            }
        }
    }
    for (i, row) in p.rows.iter().enumerate() {
        let s = lambda[i] / g[i];
        let n = row.node;
        for &(a, ca) in &row.local {
            for &(b, cb) in &row.local {
                own[n][(a, b)] += s * ca * cb;
            }
        }
        if let Some(par) = p.parent[n].filter(|&q| q != 0) {
            for &(a, ca) in &row.local {
                for &(b, cb) in &row.parent {
                    cross[n][(a, b)] += s * ca * cb;
                }
            }
            for &(a, ca) in &row.parent {
                for &(b, cb) in &row.parent {
                    own[par][(a, b)] += s * ca * cb;
                }
            }
        }
    }
    Derivatives { grad, own, cross }
}

fn factor(mut a: DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    let scale = (0..a.nrows()).map(|i| a[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let mut shift = 0.0;
    for _ in 0..8 {
        if let Some(c) = Cholesky::new(a.clone()) {
            return Some(c);
        }
        let next = if shift == 0.0 { 1e-14 * scale } else { shift * 100.0 };
        for i in 0..a.nrows() {
            a[(i, i)] += next - shift;
        }
        shift = next;
    }
    None
}

/// Solves `A Δ = grad` by block elimination (children before parents).
pub(crate) fn newton_direction(p: &Program, d: Derivatives) -> Option<Vec<Vec<f64>>> {
    let m = p.m;
    let nn = p.node_count();
    let Derivatives { grad, mut own, cross } = d;
    let mut rhs: Vec<DVector<f64>> = grad.into_iter().map(DVector::from_vec).collect();
    let mut chol: Vec<Option<Cholesky<f64, Dyn>>> = (0..nn).map(|_| None).collect();
    for n in (1..nn).rev() {
        let c = factor(own[n].clone())?;
        if let Some(par) = p.parent[n].filter(|&q| q != 0) {
            let b = &cross[n];
            let x = c.solve(b);
            let y = c.solve(&rhs[n]);
            let schur = b.transpose() * x;
            let shift = b.transpose() * y;
            let mut top = own[par].view_mut((0, 0), (m, m));
            top -= schur;
            let mut r = rhs[par].rows_mut(0, m);
            r -= shift;
        }
        chol[n] = Some(c);
    }
    let mut delta: Vec<Vec<f64>> = vec![vec![0.0; m]; nn];
    for n in 1..nn {
        let mut r = rhs[n].clone();
        if let Some(par) = p.parent[n].filter(|&q| q != 0) {
            let dp = DVector::from_column_slice(&delta[par][..m]);
            r -= &cross[n] * dp;
        }
        let sol = chol[n].as_ref().unwrap().solve(&r);
        delta[n] = sol.iter().copied().collect();
    }
    Some(delta)
}

/// Multiplier direction `Δλ = τw/g − λ − (λ/g)·(c·Δz)`.
pub(crate) fn dual_direction(p: &Program, g: &[f64], tau: f64, lambda: &[f64], dz: &[Vec<f64>]) -> Vec<f64> {
    (0..g.len())
        .map(|i| (tau * p.weight(i) / g[i] - lambda[i]) - lambda[i] / g[i] * p.row_delta(dz, i))
        .collect()
}

/// Largest step keeping all rows positive, times 0.99 (capped at 1).
pub(crate) fn max_step(p: &Program, z: &[Vec<f64>], dz: &[Vec<f64>]) -> f64 {
    let mut s: f64 = 1.0;
    for i in 0..p.rows.len() {
        let dg = p.row_delta(dz, i);
        if dg < 0.0 {
            let g = p.row_value(z, i);
            s = s.min(0.99 * g / -dg);
        }
    }
    s
}

pub(crate) fn step(z: &[Vec<f64>], dz: &[Vec<f64>], s: f64) -> Vec<Vec<f64>> {
    z.iter()
        .enumerate()
        .map(|(n, b)| {
            if n == 0 {
                b.clone()
            } else {
                b.iter().zip(&dz[n]).map(|(x, d)| x + s * d).collect()
            }
        })
        .collect()
}
