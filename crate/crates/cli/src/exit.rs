//! Exit codes: 0 success, 1 refuted (or no certifiable dual), 2 unreadable
//! or invalid input, 3 margin requirement violated, 4 solver did not
//! converge, 5 solution does not belong to the problem, 6 LP failure.

use thiserror::Error;
use vng_core::certify::CertifyError;
use vng_core::io::FileError;
use vng_core::solver::SolverError;
use vng_core::MarketError;

pub const REFUTED: u8 = 1;
const INPUT: u8 = 2;
const MARGIN: u8 = 3;
const NONCONVERGENCE: u8 = 4;
const DIGEST: u8 = 5;
const LP: u8 = 6;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("solution digest {found} does not match the problem and options (expected {expected})")]
    DigestMismatch { expected: String, found: String },
    #[error("no convergence after {iterations} iterations; best iterate written to {path}")]
    NonConvergence { iterations: usize, path: String },
    #[error("unknown strategy {0:?} (expected rapid, hold or random:K)")]
    Strategy(String),
}

fn market(e: &MarketError) -> u8 {
    match e {
        MarketError::BadMargin { .. } | MarketError::MarginTooTight { .. } => MARGIN,
        MarketError::Lp(_) => LP,
        _ => INPUT,
    }
}

fn solver(e: &SolverError) -> u8 {
    match e {
        SolverError::MarginTooTight { .. } => MARGIN,
        SolverError::NonConvergence(_) => NONCONVERGENCE,
        SolverError::Market(m) => market(m),
        _ => INPUT,
    }
}

fn certify(e: &CertifyError) -> u8 {
    match e {
        CertifyError::NotCertified(_) => REFUTED,
        CertifyError::Market(m) => market(m),
        CertifyError::Solver(s) => solver(s),
        _ => INPUT,
    }
}

pub fn code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<CliError>() {
            return match e {
                CliError::DigestMismatch { .. } => DIGEST,
                CliError::NonConvergence { .. } => NONCONVERGENCE,
                CliError::Strategy(_) => INPUT,
            };
        }
        if let Some(e) = cause.downcast_ref::<FileError>() {
            return match e {
                FileError::Market(m) => market(m),
                FileError::Solver(s) => solver(s),
                _ if e.margin_date().is_some() => MARGIN,
                _ => INPUT,
            };
        }
        if let Some(e) = cause.downcast_ref::<SolverError>() {
            return solver(e);
        }
        if let Some(e) = cause.downcast_ref::<CertifyError>() {
            return certify(e);
        }
        if let Some(e) = cause.downcast_ref::<MarketError>() {
            return market(e);
        }
    }
    INPUT
}
