//! Thin wrapper over the simplex backend. Every call builds its own problem,
//! so concurrent use from several threads is safe.

use microlp::{ComparisonOp, OptimizationDirection, Problem, SolveOutcome};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LpError {
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("linear program failed: {0}")]
    Numerical(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmp {
    Eq,
    Ge,
    Le,
}

#[derive(Debug, Clone)]
pub struct Row {
    pub coeffs: Vec<(usize, f64)>,
    pub cmp: Cmp,
    pub rhs: f64,
}

impl Row {
    pub fn new(coeffs: Vec<(usize, f64)>, cmp: Cmp, rhs: f64) -> Self {
        Self { coeffs, cmp, rhs }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Lp {
    pub objective: Vec<f64>,
    pub bounds: Vec<(f64, f64)>,
    pub rows: Vec<Row>,
}

impl Lp {
    pub fn add_var(&mut self, obj: f64, lo: f64, hi: f64) -> usize {
        self.objective.push(obj);
        self.bounds.push((lo, hi));
        self.objective.len() - 1
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, cmp: Cmp, rhs: f64) {
        self.rows.push(Row::new(coeffs, cmp, rhs));
    }

    /// Maximizes the objective; returns the optimal value and point.
    pub fn maximize(&self) -> Result<(f64, Vec<f64>), LpError> {
        let mut p = Problem::new(OptimizationDirection::Maximize);
        let vars: Vec<_> = self
            .objective
            .iter()
            .zip(&self.bounds)
            .map(|(&c, &b)| p.add_var(c, b))
            .collect();
        for row in &self.rows {
            let expr: Vec<_> = row.coeffs.iter().map(|&(i, c)| (vars[i], c)).collect();
            let op = match row.cmp {
                Cmp::Eq => ComparisonOp::Eq,
                Cmp::Ge => ComparisonOp::Ge,
                Cmp::Le => ComparisonOp::Le,
            };
            p.add_constraint(expr, op, row.rhs);
        }
        match p.solve() {
            Ok(SolveOutcome::Solution(sol)) => {
                let x = vars.iter().map(|&v| sol.var_value(v)).collect();
                Ok((sol.objective(), x))
            }
            Ok(SolveOutcome::Interrupted(_)) => Err(LpError::Numerical("interrupted".into())),
            Err(microlp::Error::Infeasible) => Err(LpError::Infeasible),
            Err(microlp::Error::Unbounded) => Err(LpError::Unbounded),
            Err(e) => Err(LpError::Numerical(e.to_string())),
        }
    }
}
